//! End-to-end runs of the four commands on small synthetic inputs.

mod common;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command as Process;

use tvhr_synthesis::data::{EvidenceNetwork, SurvivalRecord};
use tvhr_synthesis::mcmc::SamplerProtocol;
use tvhr_synthesis::report::{cmd_diagnose, cmd_ma, cmd_nma, cmd_report, ReportStatus, RunConfig, RunManifest};
use tvhr_synthesis::simulate::{simulate_network, spherical_sigma, NetworkTruth, TrialDesign};
use tvhr_synthesis::Error;

fn quick_config(seed: u64) -> RunConfig {
    RunConfig {
        protocol: SamplerProtocol {
            chains: 3,
            burn_in: 500,
            samples: 1500,
            thin: 1,
            seed,
            adapt: 250,
        },
        ..Default::default()
    }
}

fn write_network(dir: &Path, treatments: &[&str], designs: &[Vec<usize>], seed: u64) -> PathBuf {
    let truth = NetworkTruth {
        treatments: treatments.iter().map(|s| s.to_string()).collect(),
        d: (0..treatments.len()).map(|i| [-0.2 * i as f64, 0.05 * i as f64]).collect(),
        sigma: spherical_sigma([0.05, 0.02], 0.0),
    };
    let designs: Vec<(String, Vec<usize>)> =
        designs.iter().enumerate().map(|(i, a)| (format!("{}", i + 1), a.clone())).collect();
    let design = TrialDesign {
        per_arm: 100,
        ..Default::default()
    };
    let net = simulate_network(&truth, &designs, &design, &mut common::rng(seed)).unwrap();
    let path = dir.join("ipd.csv");
    net.write_csv(&path).unwrap();
    path
}

/// Two trials of A vs B and two of C vs D, written by hand because the
/// loader refuses to build such a network.
fn disconnected_csv(dir: &Path) -> PathBuf {
    let mut text = String::from("study,treatment,time,event\n");
    for (study, arms) in [("1", ["A", "B"]), ("2", ["A", "B"]), ("3", ["C", "D"]), ("4", ["C", "D"])] {
        for arm in arms {
            for k in 1..=10 {
                text.push_str(&format!("{study},{arm},{},{}\n", k as f64 * 0.3, u8::from(k % 3 != 0)));
            }
        }
    }
    let path = dir.join("disconnected.csv");
    fs::write(&path, text).unwrap();
    path
}

fn header(path: &Path) -> String {
    fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

#[test]
fn pairwise_run_writes_documented_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let input = write_network(tmp.path(), &["control", "active"], &[vec![0, 1], vec![0, 1], vec![0, 1]], 1);
    let out = tmp.path().join("ma");
    let outcome = cmd_ma(&input, &quick_config(2), &out).unwrap();
    let manifest = RunManifest::read(&outcome.manifest).unwrap();
    manifest.check_complete(&out).unwrap();
    assert_eq!(manifest.analyses.len(), 2);
    assert_eq!(
        header(&out.join("landmark_hr.csv")),
        "analysis,treatment,comparator,landmark,hr_mean,hr_median,hr_lower,hr_upper,\
         mean_rank,rank_lower,rank_upper,prob_best,max_follow_up,studies_beyond_follow_up"
    );
    let rows = fs::read_to_string(out.join("landmark_hr.csv")).unwrap();
    // one constant row and seven landmarks
    assert_eq!(rows.lines().count(), 1 + 1 + 7);
    let report = outcome.report.unwrap();
    let p = report.interaction_positive.unwrap();
    assert!((0.0..=1.0).contains(&p));
}

#[test]
fn ma_refuses_a_network() {
    let tmp = tempfile::tempdir().unwrap();
    let input = write_network(tmp.path(), &["A", "B", "C"], &[vec![0, 1], vec![0, 2]], 3);
    let err = cmd_ma(&input, &quick_config(4), &tmp.path().join("out")).unwrap_err();
    assert_eq!(err.exit_code(), 1);
    assert!(err.to_string().contains("nma"), "{err}");
}

#[test]
fn star_network_report_and_gating() {
    let tmp = tempfile::tempdir().unwrap();
    let input = write_network(
        tmp.path(),
        &["A", "B", "C", "D"],
        &[vec![0, 1], vec![0, 2], vec![0, 3], vec![0, 1], vec![0, 2, 3]],
        5,
    );
    let out = tmp.path().join("nma");
    let outcome = cmd_nma(&input, &quick_config(6), &out).unwrap();
    let report = outcome.report.as_ref().unwrap();
    assert_eq!(report.treatments, ["A", "B", "C", "D"]);
    let grid = fs::read_to_string(out.join("pbest_grid.csv")).unwrap();
    assert_eq!(grid.lines().count(), 1 + 60 * 4);

    let rep = cmd_report(&outcome.manifest).unwrap();
    assert_eq!(rep.status, outcome.status);
    for f in ["hr_curves.csv", "pbest_vs_time.csv", "pbest_heatmap.csv", "trace.csv", "autocorrelation.csv"] {
        assert!(out.join("report").join(f).exists(), "{f}");
    }

    // shift one chain far away: the recomputed R-hat must fail the gate
    let chain = out.join("draws/tvhr_chain2.csv");
    let text = fs::read_to_string(&chain).unwrap();
    let mut lines = text.lines();
    let mut shifted = vec![lines.next().unwrap().to_string()];
    for l in lines {
        let v: Vec<String> = l.split(',').map(|x| (x.parse::<f64>().unwrap() + 5.0).to_string()).collect();
        shifted.push(v.join(","));
    }
    fs::write(&chain, shifted.join("\n") + "\n").unwrap();
    let rep = cmd_report(&outcome.manifest).unwrap();
    assert_eq!(rep.status, Some(ReportStatus::Provisional));
    assert_eq!(rep.exit_code(), 3);
}

#[test]
fn report_rejects_incomplete_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let input = write_network(tmp.path(), &["A", "B", "C"], &[vec![0, 1], vec![1, 2], vec![0, 2]], 7);
    let out = tmp.path().join("nma");
    let outcome = cmd_nma(&input, &quick_config(8), &out).unwrap();
    fs::remove_file(out.join("ranks.csv")).unwrap();
    let err = cmd_report(&outcome.manifest).unwrap_err();
    assert!(matches!(err, Error::Manifest(_)), "{err}");
    assert_eq!(err.exit_code(), 1);
}

#[test]
fn disconnected_network_is_a_validation_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let input = disconnected_csv(tmp.path());
    let err = cmd_nma(&input, &quick_config(10), &tmp.path().join("out")).unwrap_err();
    assert!(matches!(err, Error::Disconnected(_)), "{err}");
    assert_eq!(err.exit_code(), 1);
}

#[test]
fn failed_study_is_named_and_can_be_skipped() {
    let tmp = tempfile::tempdir().unwrap();
    let input = write_network(tmp.path(), &["A", "B", "C"], &[vec![0, 1], vec![0, 2], vec![1, 2]], 11);
    // study 4 has no events in its second arm
    let mut records = EvidenceNetwork::from_records(
        &tvhr_synthesis::data::load_ipd(&input, &Default::default()).unwrap().to_records(),
        None,
    )
    .unwrap()
    .to_records();
    for (i, t) in ["A", "B"].iter().enumerate() {
        for k in 0..20 {
            records.push(SurvivalRecord {
                study: "4".into(),
                treatment: t.to_string(),
                time: 0.1 + k as f64 * 0.1,
                event: i == 0,
            });
        }
    }
    let input = tmp.path().join("with_bad.csv");
    EvidenceNetwork::from_records(&records, None).unwrap().write_csv(&input).unwrap();

    let err = cmd_nma(&input, &quick_config(12), &tmp.path().join("a")).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("study 4"), "{err}");

    let config = RunConfig {
        skip_failed: true,
        ..quick_config(12)
    };
    let outcome = cmd_nma(&input, &config, &tmp.path().join("b")).unwrap();
    assert!(outcome.warnings.iter().any(|w| w.contains("4")), "{:?}", outcome.warnings);
}

#[test]
fn diagnose_writes_ph_tests_and_km() {
    let tmp = tempfile::tempdir().unwrap();
    let input = write_network(tmp.path(), &["A", "B"], &[vec![0, 1], vec![0, 1]], 13);
    let out = tmp.path().join("diag");
    cmd_diagnose(&input, &quick_config(14), &out).unwrap();
    assert_eq!(header(&out.join("ph_tests.csv")), "study,covariate,chisq,df,p_value,flagged");
    assert_eq!(header(&out.join("km.csv")), "study,arm,time,at_risk,events,censored,survival");
    let ph = fs::read_to_string(out.join("ph_tests.csv")).unwrap();
    assert_eq!(ph.lines().filter(|l| l.contains("GLOBAL")).count(), 2);
}

#[test]
fn aggregate_input_runs_pairwise() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("agg.csv");
    fs::write(
        &input,
        "study,reference,treatment,log_hr,var_log_hr,interaction,var_interaction,cov\n\
         1,placebo,drug,-0.3,0.04,0.10,0.02,-0.005\n\
         2,placebo,drug,-0.2,0.03,0.05,0.015,-0.004\n\
         3,drug,placebo,0.4,0.05,-0.12,0.03,-0.006\n",
    )
    .unwrap();
    let outcome = cmd_ma(&input, &quick_config(15), &tmp.path().join("out")).unwrap();
    let report = outcome.report.unwrap();
    assert_eq!(report.treatments, ["drug", "placebo"]);
    // aggregate rows carry no follow-up, so only the time-varying analysis runs
    assert!(report.landmark_table.iter().all(|r| r.analysis == "tvhr"));
}

#[test]
fn cli_exit_codes() {
    let exe = env!("CARGO_BIN_EXE_tvhr");
    let tmp = tempfile::tempdir().unwrap();
    let help = Process::new(exe).arg("--help").output().unwrap();
    assert_eq!(help.status.code(), Some(0));
    let bad = Process::new(exe).args(["nma", "--protocol", "fast", "x.csv"]).output().unwrap();
    assert_eq!(bad.status.code(), Some(1));

    let input = disconnected_csv(tmp.path());
    let run = Process::new(exe)
        .arg("nma")
        .arg(&input)
        .arg("--out-dir")
        .arg(tmp.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(run.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&run.stderr).contains("disconnected"));

    let input = write_network(tmp.path(), &["A", "B"], &[vec![0, 1], vec![0, 1]], 17);
    let run = Process::new(exe)
        .args(["ma", "--protocol", "desk", "--burnin", "300", "--samples", "600", "--model", "ph", "--seed", "3"])
        .arg(&input)
        .arg("--out-dir")
        .arg(tmp.path().join("ma"))
        .output()
        .unwrap();
    let stdout = String::from_utf8_lossy(&run.stdout);
    assert!(matches!(run.status.code(), Some(0) | Some(3)), "{}", String::from_utf8_lossy(&run.stderr));
    assert!(stdout.trim().ends_with("manifest.json"), "{stdout}");
}
