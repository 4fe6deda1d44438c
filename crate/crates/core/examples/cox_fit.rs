//! Proportional hazards and time-varying Cox fits of one simulated trial,
//! with the fitted hazard ratio at a few landmark times.
//!
//! cargo run --example cox_fit

use tvhr_synthesis::mcmc::chain_rng;
use tvhr_synthesis::simulate::{simulate_trial, TrialDesign};
use tvhr_synthesis::survival::{fit_cox, hr_at_time, CoxModel, CoxOptions, Ties};

fn main() -> tvhr_synthesis::Result<()> {
    let design = TrialDesign {
        per_arm: 400,
        ..Default::default()
    };
    let arms = vec!["control".to_string(), "active".to_string()];
    let truth = [-0.5, 0.25];
    let study = simulate_trial("demo", &arms, &[truth], &design, &mut chain_rng(3, 0))?;

    let ph = fit_cox(&study, CoxModel::Ph, &CoxOptions::default())?;
    println!(
        "PH:   log HR {:.4} (se {:.4}), {} iterations",
        ph.coefficients[0],
        ph.standard_errors()[0],
        ph.iterations
    );

    for ties in [Ties::Efron, Ties::Breslow] {
        let opts = CoxOptions {
            ties,
            ..Default::default()
        };
        let tv = fit_cox(&study, CoxModel::Tvhr, &opts)?;
        let se = tv.standard_errors();
        println!(
            "TVHR ({ties:?}): b1 {:.4} (se {:.4}), b2 {:.4} (se {:.4}), truth ({}, {})",
            tv.coefficients[0], se[0], tv.coefficients[1], se[1], truth[0], truth[1]
        );
    }

    let tv = fit_cox(&study, CoxModel::Tvhr, &CoxOptions::default())?;
    println!("\n{:>6} {:>8} {:>18} {:>8}", "years", "HR", "95% CI", "true");
    for t in [0.25, 0.5, 1.0, 2.0, 4.0] {
        let hr = hr_at_time(&tv, t)?;
        let exact = (truth[0] + truth[1] * t.ln()).exp();
        println!("{t:>6.2} {:>8.3} {:>8.3} to {:<7.3} {exact:>8.3}", hr.hr, hr.lower, hr.upper);
    }
    Ok(())
}
