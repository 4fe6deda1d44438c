//! The full file-based pipeline behind the `tvhr` binary: simulated IPD is
//! written to CSV, then `diagnose`, `nma` and `report` run in turn.
//!
//! cargo run --release --example end_to_end [OUT_DIR]

use std::path::PathBuf;

use tvhr_synthesis::mcmc::{chain_rng, SamplerProtocol};
use tvhr_synthesis::report::{cmd_diagnose, cmd_nma, cmd_report, RunConfig, RunManifest};
use tvhr_synthesis::simulate::{simulate_network, spherical_sigma, NetworkTruth, TrialDesign};

fn main() -> tvhr_synthesis::Result<()> {
    let root = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("tvhr-end-to-end"));
    std::fs::create_dir_all(&root).map_err(|e| tvhr_synthesis::Error::io(&root, e))?;

    let truth = NetworkTruth {
        treatments: vec!["DTIC".into(), "IPI".into(), "NIV".into(), "NIV+IPI".into()],
        d: vec![[0.0, 0.0], [-0.3, 0.05], [-0.6, -0.1], [-0.9, -0.15]],
        sigma: spherical_sigma([0.05, 0.02], 0.0),
    };
    let designs: Vec<(String, Vec<usize>)> = [vec![0, 1], vec![0, 2], vec![1, 2, 3], vec![1, 3], vec![0, 2]]
        .into_iter()
        .enumerate()
        .map(|(i, a)| ((i + 1).to_string(), a))
        .collect();
    let net = simulate_network(&truth, &designs, &TrialDesign::default(), &mut chain_rng(2015, 0))?;
    let ipd = root.join("ipd.csv");
    net.write_csv(&ipd)?;
    println!("wrote {} records to {}", net.n_records(), ipd.display());

    let config = RunConfig {
        protocol: SamplerProtocol::desk(42),
        data: tvhr_synthesis::data::DataConfig {
            reference: Some("DTIC".into()),
            ..Default::default()
        },
        ..Default::default()
    };

    let diag = cmd_diagnose(&ipd, &config, &root.join("diagnose"))?;
    println!("diagnose -> {}", diag.manifest.display());

    let nma = cmd_nma(&ipd, &config, &root.join("nma"))?;
    let report = nma.report.as_ref().expect("nma writes a report");
    println!("nma -> {} (status {:?})", nma.manifest.display(), report.status);
    for row in report.landmark_table.iter().filter(|r| r.analysis == "tvhr" && r.landmark == "5") {
        println!(
            "  {:<8} HR at 5y {:.2} ({:.2} to {:.2}), mean rank {:.2}",
            row.treatment,
            row.hr_mean,
            row.hr_lower,
            row.hr_upper,
            row.mean_rank.unwrap_or(f64::NAN)
        );
    }
    for w in &nma.warnings {
        println!("  warning: {w}");
    }

    let rep = cmd_report(&nma.manifest)?;
    let manifest = RunManifest::read(&rep.manifest)?;
    println!("report -> {}", rep.manifest.display());
    for (stage, files) in &manifest.outputs {
        println!("  {stage}: {}", files.join(", "));
    }
    std::process::exit(rep.exit_code());
}
