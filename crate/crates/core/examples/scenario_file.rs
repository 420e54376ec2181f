// Scenario files: writing the built-in preset in file units (mW, MHz, dB),
// reading it back, and validation errors.
//
// Run with `cargo run --example scenario_file`.

use mmwave_ee::cli::config_hash;
use mmwave_ee::config::ScenarioConfig;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = ScenarioConfig::baseline();
    let text = serde_json::to_string_pretty(&cfg.to_file())?;
    println!("{text}");

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("scenario.json");
    std::fs::write(&path, &text)?;
    let loaded = ScenarioConfig::load(&path)?;
    println!("resolved p_d_total = {} W, bandwidth = {} Hz", loaded.p_d_total, loaded.bandwidth_per_band[0]);
    println!("hash of preset   {}", config_hash(&cfg)?);
    println!("hash of reloaded {}", config_hash(&loaded)?);

    // Per-band values may be given as vectors; lengths are checked.
    let broken = text.replace("\"r_d\": 10.0", "\"r_d\": [10.0, 12.0]");
    match ScenarioConfig::from_json(&broken) {
        Ok(_) => println!("unexpectedly accepted"),
        Err(e) => println!("rejected as expected: {e} (exit code {})", e.exit_code()),
    }
    Ok(())
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
