//! Network meta-analysis of a simulated four-treatment network with one
//! three-arm trial: relative effects at landmarks, ranks and the probability
//! each treatment is best over time.
//!
//! cargo run --release --example network_ma

use tvhr_synthesis::estimates::fit_network;
use tvhr_synthesis::mcmc::{chain_rng, SamplerProtocol};
use tvhr_synthesis::network::{fit_nma, probability_best_grid, rank_treatments, NmaModelSpec, RankDirection};
use tvhr_synthesis::pairwise::Landmark;
use tvhr_synthesis::simulate::{simulate_network, spherical_sigma, NetworkTruth, TrialDesign};
use tvhr_synthesis::survival::{CoxModel, CoxOptions};

fn main() -> tvhr_synthesis::Result<()> {
    let truth = NetworkTruth {
        treatments: vec!["A".into(), "B".into(), "C".into(), "D".into()],
        d: vec![[0.0, 0.0], [-0.2, 0.0], [-0.5, 0.25], [-0.1, -0.15]],
        sigma: spherical_sigma([0.0, 0.0], 0.0),
    };
    let designs: Vec<(String, Vec<usize>)> = [vec![0, 1], vec![0, 1], vec![0, 2], vec![1, 2], vec![0, 1, 3], vec![2, 3]]
        .into_iter()
        .enumerate()
        .map(|(i, arms)| ((i + 1).to_string(), arms))
        .collect();
    let design = TrialDesign {
        per_arm: 250,
        ..Default::default()
    };
    let net = simulate_network(&truth, &designs, &design, &mut chain_rng(17, 0))?;
    println!("multi-arm studies: {:?}", net.multi_arm_studies());

    let (set, _) = fit_network(&net, CoxModel::Tvhr, &CoxOptions::default(), false)?;
    let post = fit_nma(&set, &NmaModelSpec::default(), &SamplerProtocol::desk(5))?;

    println!("\n{:<3} {:>6} {:>20} {:>9} {:>8}", "", "years", "HR vs A", "mean rank", "true HR");
    for t in [0.5, 1.0, 2.0, 5.0] {
        let at = Landmark::Years(t);
        let ranks = rank_treatments(&post, at, RankDirection::LowerIsBetter)?;
        for (k, label) in post.treatments.iter().enumerate().skip(1) {
            let hr = post.relative_effect(label, "A", at)?;
            println!(
                "{label:<3} {t:>6} {:>6.2} ({:.2} to {:.2}) {:>9.2} {:>8.2}",
                hr.mean,
                hr.lower,
                hr.upper,
                ranks[k].mean_rank,
                truth.log_hr(k, 0, t).exp()
            );
        }
    }

    let months: Vec<f64> = (1..=60).map(|m| m as f64 / 12.0).collect();
    let grid = probability_best_grid(&post, &months, RankDirection::LowerIsBetter)?;
    println!("\nP(best) by month");
    for j in [0, 5, 11, 23, 59] {
        let row: Vec<String> = grid
            .treatments
            .iter()
            .enumerate()
            .map(|(t, l)| format!("{l} {:.2}", grid.values[t][j]))
            .collect();
        println!("  month {:>2}: {}", j + 1, row.join("  "));
    }
    Ok(())
}
