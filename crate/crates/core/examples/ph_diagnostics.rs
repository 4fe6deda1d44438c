//! Schoenfeld-residual tests of proportional hazards on a trial that satisfies
//! the assumption and on one that does not.
//!
//! cargo run --example ph_diagnostics

use tvhr_synthesis::mcmc::chain_rng;
use tvhr_synthesis::simulate::{simulate_trial, TrialDesign};
use tvhr_synthesis::survival::{fit_cox, schoenfeld_test, CoxModel, CoxOptions};

fn main() -> tvhr_synthesis::Result<()> {
    let design = TrialDesign {
        per_arm: 300,
        ..Default::default()
    };
    let arms = vec!["control".to_string(), "active".to_string()];
    let mut rng = chain_rng(21, 0);

    for (label, effect) in [("proportional", [-0.4, 0.0]), ("waning", [-0.6, 0.5])] {
        let study = simulate_trial(label, &arms, &[effect], &design, &mut rng)?;
        let fit = fit_cox(&study, CoxModel::Ph, &CoxOptions::default())?;
        let test = schoenfeld_test(&study, &fit)?;
        println!("{label}:");
        for c in &test.covariates {
            println!("  {:<10} chisq {:>7.3}  p {:.4}", c.name, c.chisq, c.p_value);
        }
        println!(
            "  global     chisq {:>7.3}  p {:.4}  {}",
            test.global.chisq,
            test.global.p_value,
            if test.rejects(0.05) { "flagged" } else { "" }
        );
        let early: Vec<f64> = test.residuals.iter().take(5).map(|r| r.scaled[0]).collect();
        println!("  first scaled residuals: {early:.3?}");
    }
    Ok(())
}
