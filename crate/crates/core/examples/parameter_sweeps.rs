// Optimized energy efficiency along the main parameter axes:
// D2D density, circuit power, beamwidth and the band-1 power.
//
// Run with `cargo run --release --example parameter_sweeps`.

use mmwave_ee::config::{AntennaPattern, ScenarioConfig};
use mmwave_ee::sweep::{linear_grid, log_grid, strictly_decreasing, sweep_ee, unimodal, SweepAxis, SweepOptions};

fn show(title: &str, cfg: &ScenarioConfig, axis: SweepAxis, grid: &[f64]) -> Result<Vec<f64>, Box<dyn std::error::Error>> {
    let rows = sweep_ee(cfg, axis, grid, &SweepOptions::default())?;
    println!("\n{title}");
    for r in &rows {
        println!("  {:>12.4e}  EE {:.5e}  feasible {}", r.axis_value, r.ee, r.feasible);
    }
    Ok(rows.iter().map(|r| r.ee).collect())
}

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = ScenarioConfig::baseline();

    let ee = show("EE vs D2D density", &cfg, SweepAxis::LambdaDRef, &log_grid(1e-5, 1e-4, 6))?;
    println!("  strictly decreasing: {}", strictly_decreasing(&ee));

    let ee = show("EE vs circuit power [W]", &cfg, SweepAxis::PCir, &linear_grid(0.0, 1e-3, 5))?;
    println!("  strictly decreasing: {}", strictly_decreasing(&ee));

    let ee = show("EE vs beamwidth [rad]", &cfg, SweepAxis::ThetaBw, &linear_grid(0.1, 0.6, 6))?;
    println!("  strictly decreasing: {}", strictly_decreasing(&ee));

    let mut flat = cfg.clone();
    flat.antenna = AntennaPattern::from_db(1.0, 1.0, cfg.antenna.theta_bw)?;
    let ee = show("EE vs band-1 power [W], 1 dB antennas", &flat, SweepAxis::PDBand1, &log_grid(1e-6, 2e-2, 12))?;
    println!("  unimodal: {}", unimodal(&ee));
    Ok(())
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
