// Interferer antenna-gain distribution of the sectored beam model.
//
// Run with `cargo run --example antenna_pmf`.

use mmwave_ee::config::{effective_gain_pmf, AntennaPattern, ScenarioConfig};
use mmwave_ee::propagation::GainSampler;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let antenna = ScenarioConfig::baseline().antenna;
    let atoms = effective_gain_pmf(&antenna)?;
    println!("main-lobe fraction q = {:.4}", antenna.main_lobe_fraction());
    println!("aligned gain G0 = {:.4}", antenna.aligned_gain());
    for atom in &atoms {
        println!("gain {:>10.4}  probability {:.6}", atom.gain, atom.prob);
    }
    let total: f64 = atoms.iter().map(|a| a.prob).sum();
    assert!((total - 1.0).abs() < 1e-12);

    // Empirical frequencies from the sampler used by the simulator.
    let sampler = GainSampler::new(&antenna)?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let n = 200_000;
    let mut counts = [0usize; 3];
    for _ in 0..n {
        let g = sampler.sample(&mut rng);
        let k = atoms.iter().position(|a| a.gain == g).expect("sampled gain is an atom");
        counts[k] += 1;
    }
    for (atom, c) in atoms.iter().zip(counts) {
        let freq = c as f64 / n as f64;
        println!("atom {:>10.4}: empirical {:.4} vs {:.4}", atom.gain, freq, atom.prob);
        assert!((freq - atom.prob).abs() < 0.01);
    }

    // An omnidirectional antenna collapses to a single atom.
    let omni = AntennaPattern::from_db(0.0, 0.0, std::f64::consts::PI)?;
    println!("omni pmf: {:?}", effective_gain_pmf(&omni)?);
    Ok(())
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
