// Per-band rates, area power consumption and energy efficiency at a fixed
// power allocation, with and without circuit power.
//
// Run with `cargo run --example energy_efficiency`.

use mmwave_ee::config::{PowerVector, ScenarioConfig};
use mmwave_ee::metrics::{evaluate_energy_efficiency, AnalyticOptions, RateMode};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let mut cfg = ScenarioConfig::baseline();
    let p = PowerVector::even_split(&cfg);
    for (label, rate_mode) in [("fixed threshold", RateMode::Fixed), ("best threshold", RateMode::Sup)] {
        let options = AnalyticOptions {
            rate_mode,
            ..AnalyticOptions::default()
        };
        let ee = evaluate_energy_efficiency(&cfg, &p, &options)?;
        println!("{label}: EE = {:.4e} bit/J", ee.ee);
        println!("  area sum rate {:.4e} bit/s/m², area power {:.4e} W/m²", ee.total_asr, ee.area_power);
        for b in &ee.bands {
            println!(
                "  band {}: stp_d {:.4} stp_c {:.4} rate {:.3e} bit/s",
                b.band + 1,
                b.stp_d.value,
                b.stp_c.value,
                b.rate_d
            );
        }
    }

    println!("\ncircuit power sensitivity (fixed threshold):");
    for p_cir_mw in [0.0, 0.1, 1.0, 10.0] {
        cfg.p_cir = p_cir_mw * 1e-3;
        let ee = evaluate_energy_efficiency(&cfg, &p, &AnalyticOptions::default())?;
        println!("  P_cir {p_cir_mw:>5} mW -> EE {:.4e} bit/J", ee.ee);
    }
    Ok(())
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
