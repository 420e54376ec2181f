// Cross-check of the analytic STP against a Poisson point process
// simulation of the typical receivers.
//
// Run with `cargo run --release --example monte_carlo_validation`.

use mmwave_ee::analytic::{evaluate_stp, Receiver, StpMethod};
use mmwave_ee::config::{PowerVector, ScenarioConfig};
use mmwave_ee::montecarlo::{estimate_stp, SimulationPlan};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let realizations = 2000;
    let plan = SimulationPlan::with_realizations(realizations, 42);
    println!(
        "window area {:.1e} m², {} realizations, seed {}",
        plan.area, plan.realizations, plan.seed
    );
    for m in [1, 2] {
        let mut cfg = ScenarioConfig::baseline();
        cfg.nakagami_m = m;
        let p = PowerVector::even_split(&cfg);
        for who in [Receiver::D2d, Receiver::Bs] {
            let analytic = evaluate_stp(&cfg, p.as_slice()[0], 0, who, StpMethod::Auto)?;
            let mc = estimate_stp(&cfg, &p, 0, who, &plan)?;
            let gap = analytic.value - mc.mean;
            println!(
                "m={m} {who:>3}: analytic {:.4}  simulated {:.4} ± {:.4}  gap {:+.4}",
                analytic.value, mc.mean, mc.half_width_95, gap
            );
            assert!(mc.contains(analytic.value, 0.03));
        }
    }
    Ok(())
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
