// Analytic successful transmission probability: quadrature, the Rayleigh
// closed form, and the Nakagami m = 2 closed form.
//
// Run with `cargo run --example stp_analytic`.

use mmwave_ee::analytic::{evaluate_stp, gamma_tail_constant, Receiver, StpMethod};
use mmwave_ee::config::{PowerVector, ScenarioConfig};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let mut cfg = ScenarioConfig::baseline();
    let p = PowerVector::even_split(&cfg);
    let p_d = p.as_slice()[0];
    println!("per-band D2D power {:.1} mW", p_d * 1e3);

    for m in [1, 2] {
        cfg.nakagami_m = m;
        println!("\nnakagami m = {m}, gamma tail constant a = {:.6}", gamma_tail_constant(m)?);
        for who in [Receiver::D2d, Receiver::Bs] {
            let quad = evaluate_stp(&cfg, p_d, 0, who, StpMethod::Quadrature)?;
            let closed = evaluate_stp(&cfg, p_d, 0, who, StpMethod::ClosedForm)?;
            let auto = evaluate_stp(&cfg, p_d, 0, who, StpMethod::Auto)?;
            println!(
                "{who:>3}: quadrature {:.6} (±{:.1e})  closed {:.6} [{}]  auto -> {}",
                quad.value,
                quad.abs_err_est,
                closed.value,
                closed.method.as_str(),
                auto.method.as_str()
            );
            if m == 1 {
                assert!((quad.value - closed.value).abs() <= 1e-6 * closed.value);
            }
        }
    }

    // STP as a function of the D2D transmit power.
    cfg.nakagami_m = 1;
    println!("\np_d [mW]  stp_d2d   stp_bs");
    for p_mw in [0.01, 0.1, 1.0, 5.0, 20.0] {
        let d = evaluate_stp(&cfg, p_mw * 1e-3, 0, Receiver::D2d, StpMethod::Auto)?;
        let c = evaluate_stp(&cfg, p_mw * 1e-3, 0, Receiver::Bs, StpMethod::Auto)?;
        println!("{p_mw:>8}  {:.6}  {:.6}", d.value, c.value);
    }
    Ok(())
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
