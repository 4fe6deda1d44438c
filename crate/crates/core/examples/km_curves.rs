//! Kaplan-Meier curves for a simulated two-arm trial whose hazard ratio
//! drifts towards one over time.
//!
//! cargo run --example km_curves

use tvhr_synthesis::mcmc::chain_rng;
use tvhr_synthesis::simulate::{simulate_trial, TrialDesign};
use tvhr_synthesis::survival::km_estimate;

fn main() -> tvhr_synthesis::Result<()> {
    let design = TrialDesign {
        per_arm: 250,
        ..Default::default()
    };
    let arms = vec!["control".to_string(), "active".to_string()];
    // log HR(t) = -0.6 + 0.3 log t
    let study = simulate_trial("demo", &arms, &[[-0.6, 0.3]], &design, &mut chain_rng(11, 0))?;

    let curves = km_estimate(&study)?;
    println!("{:>6} {:>10} {:>10}", "years", arms[0], arms[1]);
    for t in [0.25, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0] {
        println!(
            "{t:>6.2} {:>10.3} {:>10.3}",
            curves[0].survival_at(t),
            curves[1].survival_at(t)
        );
    }
    for c in &curves {
        let events: usize = c.events.iter().sum();
        let censored: usize = c.censored.iter().sum();
        println!("{}: {events} events, {censored} censored", c.arm);
    }
    Ok(())
}
