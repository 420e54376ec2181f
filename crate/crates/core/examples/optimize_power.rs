// Energy-efficient D2D power allocation under budget, box and QoS
// constraints.
//
// Run with `cargo run --release --example optimize_power`.

use mmwave_ee::config::ScenarioConfig;
use mmwave_ee::optimizer::{optimize_ee, OptimizerOptions};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = ScenarioConfig::baseline();
    let out = optimize_ee(&cfg, &OptimizerOptions::default())?;
    println!("feasible: {}", out.feasible);
    println!("EE = {:.6e} bit/J", out.ee_opt);
    for (i, p) in out.p_opt.as_slice().iter().enumerate() {
        let b = &out.solver_trace.brackets[i];
        println!(
            "band {}: p = {:.6} mW  (QoS bracket [{:.6}, {:.6}] mW)  stp_d {:.4}  stp_c {:.4}",
            i + 1,
            p * 1e3,
            b.lo * 1e3,
            b.hi * 1e3,
            out.constraint_slacks.stp_d[i],
            out.constraint_slacks.stp_c[i]
        );
    }
    println!("budget slack {:.3} mW", out.constraint_slacks.budget * 1e3);
    println!(
        "{} starts, {} simplex iterations, {} evaluations",
        out.solver_trace.restarts, out.solver_trace.iterations, out.solver_trace.evaluations
    );
    assert!(out.feasible);

    // A dense network pushes the QoS floor above the power box: infeasible.
    let mut dense = cfg.clone();
    dense.lambda_d = vec![1e-3; cfg.num_bands];
    let out = optimize_ee(&dense, &OptimizerOptions::default())?;
    println!(
        "\ndense network: feasible {} (least violation {:.3e})",
        out.feasible,
        out.constraint_slacks.violation()
    );
    Ok(())
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
