//! Synthetic individual participant data with a known time-varying hazard ratio.
//!
//! The control arm has a Weibull hazard `h0(t) = lambda k t^(k-1)`; an arm
//! with coefficients `(b1, b2)` multiplies it by `exp(b1) t^b2`, so its log
//! hazard ratio against control is `b1 + b2 log t`. Event times are drawn by
//! inverting the cumulative hazard at a unit exponential.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Exp1, Uniform};

use crate::data::{ArmRecord, EvidenceNetwork, StudyDataset, SurvivalRecord};
use crate::error::{Error, Result};
use crate::linalg::mvn_draw;
use crate::network::sample_multi_arm_effects;
use crate::pairwise::PairwiseEstimate;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialDesign {
    pub per_arm: usize,
    /// Control-arm Weibull scale, per year.
    pub baseline_rate: f64,
    pub weibull_shape: f64,
    /// Administrative censoring time is uniform on this range (years).
    pub follow_up: (f64, f64),
    /// Exponential loss-to-follow-up rate, per year; 0 disables it.
    pub dropout_rate: f64,
}

impl Default for TrialDesign {
    fn default() -> Self {
        TrialDesign {
            per_arm: 150,
            baseline_rate: 0.5,
            weibull_shape: 1.0,
            follow_up: (2.0, 5.0),
            dropout_rate: 0.05,
        }
    }
}

impl TrialDesign {
    /// Latent event time for an arm with log-HR coefficients `b`.
    pub fn event_time<R: Rng + ?Sized>(&self, b: [f64; 2], rng: &mut R) -> f64 {
        let e: f64 = Exp1.sample(rng);
        let power = self.weibull_shape + b[1];
        (power * e / (self.baseline_rate * self.weibull_shape * b[0].exp())).powf(1.0 / power)
    }

    fn censor_time<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let (lo, hi) = self.follow_up;
        let admin = if hi > lo { Uniform::new(lo, hi).unwrap().sample(rng) } else { lo };
        if self.dropout_rate > 0.0 {
            let e: f64 = Exp1.sample(rng);
            admin.min(e / self.dropout_rate)
        } else {
            admin
        }
    }

    fn check(&self, effects: &[[f64; 2]]) -> Result<()> {
        if self.per_arm == 0 || !(self.baseline_rate > 0.0) || !(self.weibull_shape > 0.0) {
            return Err(Error::Config("trial design needs positive size, rate and shape".into()));
        }
        if !(self.follow_up.0 > 0.0 && self.follow_up.1 >= self.follow_up.0) {
            return Err(Error::Config("follow-up range must be positive and ordered".into()));
        }
        if let Some(b) = effects.iter().find(|b| self.weibull_shape + b[1] <= 0.0) {
            return Err(Error::Config(format!(
                "interaction {} makes the cumulative hazard non-increasing",
                b[1]
            )));
        }
        Ok(())
    }
}

/// One trial. `effects[k - 1]` holds the coefficients of arm `k` against arm 0.
pub fn simulate_trial<R: Rng + ?Sized>(
    id: &str,
    arms: &[String],
    effects: &[[f64; 2]],
    design: &TrialDesign,
    rng: &mut R,
) -> Result<StudyDataset> {
    if effects.len() + 1 != arms.len() {
        return Err(Error::Config(format!(
            "{} arms need {} effect pairs, got {}",
            arms.len(),
            arms.len() - 1,
            effects.len()
        )));
    }
    design.check(effects)?;
    let mut records = Vec::with_capacity(arms.len() * design.per_arm);
    for arm in 0..arms.len() {
        let b = if arm == 0 { [0.0, 0.0] } else { effects[arm - 1] };
        for _ in 0..design.per_arm {
            let t = design.event_time(b, rng);
            let c = design.censor_time(rng);
            records.push(ArmRecord {
                arm,
                time: t.min(c),
                event: t <= c,
            });
        }
    }
    StudyDataset::new(id, arms.to_vec(), records)
}

/// Between-study covariance from standard deviations and a correlation.
pub fn spherical_sigma(tau: [f64; 2], rho: f64) -> DMatrix<f64> {
    let c = rho * tau[0] * tau[1];
    DMatrix::from_row_slice(2, 2, &[tau[0] * tau[0], c, c, tau[1] * tau[1]])
}

/// Population truth for a synthetic network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkTruth {
    pub treatments: Vec<String>,
    /// `(log HR at t = 1, log-time interaction)` of each treatment against
    /// the first; the first entry is ignored and taken as zero.
    pub d: Vec<[f64; 2]>,
    pub sigma: DMatrix<f64>,
}

impl NetworkTruth {
    /// Log hazard ratio of `a` against `b` at time `t`.
    pub fn log_hr(&self, a: usize, b: usize, t: f64) -> f64 {
        let basic = |i: usize| if i == 0 { 0.0 } else { self.d[i][0] + self.d[i][1] * t.ln() };
        basic(a) - basic(b)
    }
}

/// Simulates every trial of `designs`, each a study id with treatment indices
/// (first is the study reference). Study effects follow the arm-by-arm
/// multi-arm construction around the basic parameters.
pub fn simulate_network<R: Rng + ?Sized>(
    truth: &NetworkTruth,
    designs: &[(String, Vec<usize>)],
    design: &TrialDesign,
    rng: &mut R,
) -> Result<EvidenceNetwork> {
    if truth.d.len() != truth.treatments.len() || truth.sigma.shape() != (2, 2) {
        return Err(Error::Config("truth needs one effect pair per treatment and a 2x2 sigma".into()));
    }
    let basic = |i: usize| if i == 0 { [0.0, 0.0] } else { truth.d[i] };
    let mut records: Vec<SurvivalRecord> = Vec::new();
    for (id, arms) in designs {
        if let Some(&bad) = arms.iter().find(|&&t| t >= truth.treatments.len()) {
            return Err(Error::UnknownTreatment(format!("index {bad}")));
        }
        let w = sample_multi_arm_effects(arms.len(), &truth.sigma, rng);
        let r = basic(arms[0]);
        let effects: Vec<[f64; 2]> = arms[1..]
            .iter()
            .zip(&w)
            .map(|(&t, w)| {
                let b = basic(t);
                [b[0] - r[0] + w[0], b[1] - r[1] + w[1]]
            })
            .collect();
        let labels: Vec<String> = arms.iter().map(|&t| truth.treatments[t].clone()).collect();
        let study = simulate_trial(id, &labels, &effects, design, rng)?;
        records.extend(study.records.iter().map(|a| SurvivalRecord {
            study: id.clone(),
            treatment: labels[a.arm].clone(),
            time: a.time,
            event: a.event,
        }));
    }
    EvidenceNetwork::from_records(&records, Some(&truth.treatments[0]))
}

/// Aggregate-level simulation: `delta_i ~ MVN(d, Sigma)` and
/// `y_i ~ MVN(delta_i, S_i)` for each supplied within-study covariance.
pub fn simulate_contrast_estimates<R: Rng + ?Sized>(
    d: &[f64],
    sigma: &DMatrix<f64>,
    within: &[DMatrix<f64>],
    rng: &mut R,
) -> Vec<PairwiseEstimate> {
    let mean = DVector::from_column_slice(d);
    within
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let delta = mvn_draw(&mean, sigma, rng);
            let y = mvn_draw(&delta, s, rng);
            PairwiseEstimate {
                study: format!("{}", i + 1),
                y: y.iter().copied().collect(),
                s: (0..s.nrows()).map(|r| s.row(r).iter().copied().collect()).collect(),
                max_time: None,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mcmc::chain_rng;

    #[test]
    fn exponential_control_arm_has_mean_one_over_rate() {
        let design = TrialDesign {
            baseline_rate: 2.0,
            ..Default::default()
        };
        let mut rng = chain_rng(1, 0);
        let n = 200_000;
        let mean = (0..n).map(|_| design.event_time([0.0, 0.0], &mut rng)).sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 0.005, "{mean}");
    }

    #[test]
    fn tvhr_survival_matches_closed_form() {
        // S(t) = exp(-lambda e^b1 t^(1+b2) / (1+b2)) for an exponential baseline.
        let design = TrialDesign::default();
        let b = [-0.4, 0.3];
        let mut rng = chain_rng(2, 0);
        let n = 100_000;
        let draws: Vec<f64> = (0..n).map(|_| design.event_time(b, &mut rng)).collect();
        for t in [0.5, 1.0, 3.0] {
            let emp = draws.iter().filter(|&&x| x > t).count() as f64 / n as f64;
            let exact = (-design.baseline_rate * b[0].exp() * t.powf(1.0 + b[1]) / (1.0 + b[1])).exp();
            assert!((emp - exact).abs() < 0.006, "t={t}: {emp} vs {exact}");
        }
    }

    #[test]
    fn trial_respects_censoring_window() {
        let design = TrialDesign {
            per_arm: 300,
            dropout_rate: 0.0,
            ..Default::default()
        };
        let arms = vec!["A".to_string(), "B".to_string()];
        let s = simulate_trial("1", &arms, &[[-0.5, 0.0]], &design, &mut chain_rng(3, 0)).unwrap();
        assert_eq!(s.arm_sizes(), vec![300, 300]);
        assert!(s.records.iter().all(|r| r.time <= 5.0));
        assert!(s.records.iter().any(|r| !r.event));
    }

    #[test]
    fn rejects_decreasing_cumulative_hazard() {
        let arms = vec!["A".to_string(), "B".to_string()];
        let err = simulate_trial("1", &arms, &[[0.0, -1.5]], &TrialDesign::default(), &mut chain_rng(0, 0));
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn network_contains_every_design() {
        let truth = NetworkTruth {
            treatments: vec!["A".into(), "B".into(), "C".into()],
            d: vec![[0.0, 0.0], [-0.3, 0.0], [-0.1, 0.1]],
            sigma: spherical_sigma([0.1, 0.05], 0.3),
        };
        let designs = vec![("1".to_string(), vec![0, 1]), ("2".to_string(), vec![0, 1, 2])];
        let net = simulate_network(&truth, &designs, &TrialDesign::default(), &mut chain_rng(5, 0)).unwrap();
        assert_eq!(net.n_studies(), 2);
        assert_eq!(net.multi_arm_studies(), vec!["2"]);
        assert!((truth.log_hr(2, 1, 1.0) - 0.2).abs() < 1e-12);
    }
}
