//! Drives the experiment runner from code: parse a JSON config, run it, and
//! read the manifest.

use temper_lab::experiments::{parse_config, run_experiment};

fn main() -> temper_lab::Result<()> {
    let cfg = parse_config(
        r#"{ "schema_version": 1, "kind": "schedule-compare",
             "params": { "alpha_nu": 2.0, "alpha_pi": 0.05, "n_points": 9 } }"#,
        None,
    )?;
    let out = std::env::temp_dir().join("temper-lab-example");
    let manifest = run_experiment(&cfg, &out, true)?;
    println!("wrote {} files to {}", manifest.files.len(), out.display());
    for f in &manifest.files {
        println!("  {:<24} {} bytes  {}", f.path, f.bytes, &f.sha256[..16]);
    }
    println!("{}", std::fs::read_to_string(out.join("g_compare.csv"))?);
    Ok(())
}
