//! Two-stage pairwise meta-analysis of simulated trials: per-study Cox fits,
//! then univariate (constant HR) and bivariate (time-varying HR) pooling with
//! a prior sensitivity check on the interaction heterogeneity.
//!
//! cargo run --release --example pairwise_ma

use tvhr_synthesis::estimates::fit_network;
use tvhr_synthesis::mcmc::{chain_rng, diagnose, SamplerProtocol};
use tvhr_synthesis::pairwise::{fit_bivariate_ma, fit_univariate_ma, prior_sensitivity, PairwiseEstimate, PairwiseModelSpec};
use tvhr_synthesis::simulate::{simulate_network, spherical_sigma, NetworkTruth, TrialDesign};
use tvhr_synthesis::survival::{CoxModel, CoxOptions};
use tvhr_synthesis::synthesis::TauPrior;

fn main() -> tvhr_synthesis::Result<()> {
    let truth = NetworkTruth {
        treatments: vec!["control".into(), "active".into()],
        d: vec![[0.0, 0.0], [-0.3, 0.1]],
        sigma: spherical_sigma([0.1, 0.05], 0.3),
    };
    let designs: Vec<(String, Vec<usize>)> = (1..=12).map(|i| (i.to_string(), vec![0, 1])).collect();
    let net = simulate_network(&truth, &designs, &TrialDesign::default(), &mut chain_rng(7, 0))?;

    let opts = CoxOptions::default();
    let (ph, _) = fit_network(&net, CoxModel::Ph, &opts, false)?;
    let (tv, _) = fit_network(&net, CoxModel::Tvhr, &opts, false)?;

    let protocol = SamplerProtocol::desk(1);
    let spec = PairwiseModelSpec::default();

    let uni = fit_univariate_ma(&PairwiseEstimate::from_set(&ph)?, &spec, &protocol)?;
    let c = uni.constant_hr();
    println!("constant HR {:.2} ({:.2} to {:.2})", c.mean, c.lower, c.upper);

    let est = PairwiseEstimate::from_set(&tv)?;
    let bi = fit_bivariate_ma(&est, &spec, &protocol)?;
    let d2 = bi.d_summary(1);
    println!(
        "interaction d2 {:.3} ({:.3}, {:.3}), P(d2 > 0) = {:.3}",
        d2.mean,
        d2.lower,
        d2.upper,
        bi.prob_interaction_positive()?
    );

    let times = [0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5];
    let sens = prior_sensitivity(&est, &spec, TauPrior::half_normal(), &protocol, &times)?;
    println!("\n{:>5} {:>22} {:>22}", "years", "Unif(0,1)", "Half-Normal(0.5)");
    for r in &sens.table {
        println!(
            "{:>5} {:>6.2} ({:.2} to {:.2}) {:>6.2} ({:.2} to {:.2})",
            r.landmark.label(),
            r.base.mean,
            r.base.lower,
            r.base.upper,
            r.alternative.mean,
            r.alternative.lower,
            r.alternative.upper
        );
    }
    for w in &sens.warnings {
        println!("warning: {w}");
    }

    let report = diagnose(&bi.draws, &bi.monitored(), 10)?;
    println!("\nconvergence gates passed: {}", report.all_pass());
    for p in report.failures() {
        println!("  {} R-hat {:.4} ESS {:.0}", p.name, p.rhat, p.ess);
    }
    Ok(())
}
