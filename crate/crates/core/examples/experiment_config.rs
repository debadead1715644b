//! Running pipelines from JSON configs: a renormalization scan and a small
//! Feigenbaum check, each with its manifest.

use unimodal_ldp::runner::{run, ExperimentConfig};

fn main() -> unimodal_ldp::Result<()> {
    let dir = std::env::temp_dir().join("ldp-example");
    for text in [
        r#"{"map": {"family": "quadratic", "param": 3.55}, "pipeline": {"kind": "renorm-scan", "out": "cascade.json"}}"#,
        r#"{"pipeline": {"kind": "feigenbaum-check", "n": [16, 23, 32, 45],
            "grid": {"auto": {"base": 1000000, "cap": 8000000}}, "out": "report.json"}, "seed": 7}"#,
    ] {
        let mut config = ExperimentConfig::from_json(text)?;
        config.out_dir = dir.clone();
        let manifest = run(&config)?;
        println!("{}", serde_json::to_string_pretty(&manifest)?);
    }
    println!("{}", std::fs::read_to_string(dir.join("report.json"))?);
    Ok(())
}
