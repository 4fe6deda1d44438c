//! Network meta-analysis over basic parameters `d_t` (treatment `t` against
//! the network reference), with relative effects, ranks and probability-best
//! summaries derived draw by draw.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimates::EstimateSet;
use crate::linalg::mvn_draw;
use crate::mcmc::{run_chains, Model, PosteriorDraws, SamplerProtocol, ScalarKernel};
use crate::pairwise::{HrSummary, Landmark};
use crate::summary::Summary;
use crate::synthesis::{ContrastModel, Effects, HeterogeneityPrior, Layout, Naming};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NmaModelSpec {
    pub effects: Effects,
    pub heterogeneity: HeterogeneityPrior,
    pub kernel: ScalarKernel,
}

impl Default for NmaModelSpec {
    fn default() -> Self {
        NmaModelSpec {
            effects: Effects::Fixed,
            heterogeneity: HeterogeneityPrior::default(),
            kernel: ScalarKernel::Slice,
        }
    }
}

impl NmaModelSpec {
    pub fn random() -> Self {
        NmaModelSpec {
            effects: Effects::Random,
            ..Default::default()
        }
    }
}

/// Whether a lower or a higher hazard ratio ranks first.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RankDirection {
    #[default]
    LowerIsBetter,
    HigherIsBetter,
}

#[derive(Debug, Clone)]
pub struct NmaPosterior {
    pub treatments: Vec<String>,
    /// Coefficients per contrast: 1 (constant HR) or 2 (time-varying).
    pub dim: usize,
    pub spec: NmaModelSpec,
    pub studies: Vec<String>,
    /// Longest follow-up of each study, when known.
    pub max_times: Vec<Option<f64>>,
    pub draws: PosteriorDraws,
    layout: Layout,
}

/// Fits the network model to stage-1 estimates.
pub fn fit_nma(set: &EstimateSet, spec: &NmaModelSpec, protocol: &SamplerProtocol) -> Result<NmaPosterior> {
    let model = ContrastModel::new(set, spec.effects, spec.heterogeneity, spec.kernel, Naming::Network)?;
    let draws = run_chains(&model, protocol)?;
    Ok(NmaPosterior {
        treatments: set.treatments.clone(),
        dim: set.dim(),
        spec: *spec,
        studies: set.studies.iter().map(|s| s.study.clone()).collect(),
        max_times: set.studies.iter().map(|s| s.max_time).collect(),
        draws,
        layout: model.layout.clone(),
    })
}

impl NmaPosterior {
    /// Rebuilds a posterior around stored draws, e.g. chains read back from disk.
    pub fn from_draws(set: &EstimateSet, spec: &NmaModelSpec, draws: PosteriorDraws) -> Result<Self> {
        let model = ContrastModel::new(set, spec.effects, spec.heterogeneity, spec.kernel, Naming::Network)?;
        if model.parameter_names() != draws.names {
            return Err(Error::Manifest("stored draws do not match the model's parameters".into()));
        }
        Ok(NmaPosterior {
            treatments: set.treatments.clone(),
            dim: set.dim(),
            spec: *spec,
            studies: set.studies.iter().map(|s| s.study.clone()).collect(),
            max_times: set.studies.iter().map(|s| s.max_time).collect(),
            draws,
            layout: model.layout.clone(),
        })
    }
}

/// Closed-form fixed-effect posterior `(mean, covariance)` of the basic
/// parameters, for checking the sampler.
pub fn fixed_effect_closed_form(set: &EstimateSet) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let model = ContrastModel::new(set, Effects::Fixed, HeterogeneityPrior::default(), ScalarKernel::Slice, Naming::Network)?;
    model
        .fixed_effect_posterior()
        .ok_or_else(|| Error::Sampler("posterior precision not positive definite".into()))
}

impl NmaPosterior {
    pub fn n_treatments(&self) -> usize {
        self.treatments.len()
    }

    pub fn treatment_index(&self, label: &str) -> Result<usize> {
        self.treatments
            .iter()
            .position(|t| t == label)
            .ok_or_else(|| Error::UnknownTreatment(label.to_owned()))
    }

    /// Names monitored for convergence gating: basic and heterogeneity parameters.
    pub fn monitored(&self) -> Vec<String> {
        let end = self.layout.delta.unwrap_or(self.draws.n_params());
        self.draws.names[..end].to_vec()
    }

    pub fn max_follow_up(&self) -> Option<f64> {
        self.max_times.iter().flatten().copied().reduce(f64::max)
    }

    fn check_time(&self, at: Landmark) -> Result<f64> {
        match at {
            Landmark::Constant if self.dim == 1 => Ok(1.0),
            Landmark::Constant => Err(Error::Spec(
                "a time-varying posterior needs a landmark time".into(),
            )),
            Landmark::Years(t) if t > 0.0 => Ok(t),
            Landmark::Years(t) => Err(Error::NonPositiveTime(t)),
        }
    }

    /// Log hazard ratio of every treatment against the reference for one draw.
    fn log_hr_row(&self, row: &[f64], log_t: f64, out: &mut [f64]) {
        out[0] = 0.0;
        for t in 1..self.n_treatments() {
            let base = self.layout.d + (t - 1) * self.dim;
            out[t] = row[base] + if self.dim == 2 { row[base + 1] * log_t } else { 0.0 };
        }
    }

    /// Per-draw log hazard ratios of `a` against `b`.
    pub fn log_hr_draws(&self, a: usize, b: usize, at: Landmark) -> Result<Vec<f64>> {
        let n = self.n_treatments();
        if a >= n || b >= n {
            return Err(Error::UnknownTreatment(format!("index {}", a.max(b))));
        }
        let log_t = self.check_time(at)?.ln();
        let mut buf = vec![0.0; n];
        Ok(self
            .draws
            .rows()
            .map(|row| {
                self.log_hr_row(row, log_t, &mut buf);
                buf[a] - buf[b]
            })
            .collect())
    }

    /// Hazard ratio of `a` against `b` at a landmark.
    pub fn relative_effect(&self, a: &str, b: &str, at: Landmark) -> Result<HrSummary> {
        let (ia, ib) = (self.treatment_index(a)?, self.treatment_index(b)?);
        Ok(HrSummary::from_log_draws(at, self.log_hr_draws(ia, ib, at)?.into_iter()))
    }

    /// Rank of every treatment in every draw (rank 1 is best). Ties are
    /// broken by treatment index.
    pub fn rank_draws(&self, at: Landmark, direction: RankDirection) -> Result<Vec<Vec<usize>>> {
        let n = self.n_treatments();
        let log_t = self.check_time(at)?.ln();
        let mut buf = vec![0.0; n];
        let mut order: Vec<usize> = (0..n).collect();
        Ok(self
            .draws
            .rows()
            .map(|row| {
                self.log_hr_row(row, log_t, &mut buf);
                order.sort_by(|&x, &y| {
                    let c = buf[x].total_cmp(&buf[y]);
                    let c = match direction {
                        RankDirection::LowerIsBetter => c,
                        RankDirection::HigherIsBetter => c.reverse(),
                    };
                    c.then(x.cmp(&y))
                });
                let mut ranks = vec![0; n];
                for (r, &t) in order.iter().enumerate() {
                    ranks[t] = r + 1;
                }
                ranks
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TreatmentRank {
    pub treatment: String,
    pub mean_rank: f64,
    pub lower: usize,
    pub upper: usize,
    pub prob_best: f64,
    /// `distribution[r]` is the probability of rank `r + 1`.
    pub distribution: Vec<f64>,
}

/// Mean rank, 95% rank interval and probability best at a landmark.
pub fn rank_treatments(post: &NmaPosterior, at: Landmark, direction: RankDirection) -> Result<Vec<TreatmentRank>> {
    let ranks = post.rank_draws(at, direction)?;
    let n = post.n_treatments();
    let total = ranks.len() as f64;
    Ok((0..n)
        .map(|t| {
            let mut counts = vec![0usize; n];
            let mut sum = 0usize;
            for r in &ranks {
                counts[r[t] - 1] += 1;
                sum += r[t];
            }
            let distribution: Vec<f64> = counts.iter().map(|&c| c as f64 / total).collect();
            TreatmentRank {
                treatment: post.treatments[t].clone(),
                mean_rank: sum as f64 / total,
                lower: rank_quantile(&counts, 0.025),
                upper: rank_quantile(&counts, 0.975),
                prob_best: distribution[0],
                distribution,
            }
        })
        .collect())
}

/// Smallest rank whose cumulative share reaches `q`.
fn rank_quantile(counts: &[usize], q: f64) -> usize {
    let total: usize = counts.iter().sum();
    let mut acc = 0;
    for (r, &c) in counts.iter().enumerate() {
        acc += c;
        if acc as f64 >= q * total as f64 {
            return r + 1;
        }
    }
    counts.len()
}

/// Probability each treatment is best at each time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbabilityBestGrid {
    pub treatments: Vec<String>,
    pub times: Vec<f64>,
    /// `values[t][j]`: treatment `t` at `times[j]`.
    pub values: Vec<Vec<f64>>,
}

pub fn probability_best_grid(post: &NmaPosterior, times: &[f64], direction: RankDirection) -> Result<ProbabilityBestGrid> {
    if times.is_empty() {
        return Err(Error::Spec("empty time grid".into()));
    }
    let n = post.n_treatments();
    let mut values = vec![vec![0.0; times.len()]; n];
    for (j, &t) in times.iter().enumerate() {
        let ranks = post.rank_draws(Landmark::Years(t), direction)?;
        let mut counts = vec![0usize; n];
        for r in &ranks {
            let best = r.iter().position(|&x| x == 1).expect("rank 1 present");
            counts[best] += 1;
        }
        for t in 0..n {
            values[t][j] = counts[t] as f64 / ranks.len() as f64;
        }
    }
    Ok(ProbabilityBestGrid {
        treatments: post.treatments.clone(),
        times: times.to_vec(),
        values,
    })
}

/// Draws the study-specific random effects `w_2..w_K` of a `K`-arm study by
/// the arm-by-arm conditional construction: `w_1 = 0` and, for `k >= 2`,
/// `w_k ~ MVN(mean(w_1..w_{k-1}), k / (2 (k - 1)) Sigma)`.
///
/// The joint law has `Sigma` on each diagonal block and `Sigma / 2` between
/// contrasts.
pub fn sample_multi_arm_effects<R: Rng + ?Sized>(n_arms: usize, sigma: &DMatrix<f64>, rng: &mut R) -> Vec<DVector<f64>> {
    let m = sigma.nrows();
    let mut w: Vec<DVector<f64>> = vec![DVector::zeros(m)];
    for k in 2..=n_arms {
        let mean = w.iter().fold(DVector::zeros(m), |acc, x| acc + x) / (k - 1) as f64;
        let cov = sigma * (k as f64 / (2.0 * (k - 1) as f64));
        w.push(mvn_draw(&mean, &cov, rng));
    }
    w.remove(0);
    w
}

/// Summaries of the heterogeneity parameters, if any.
pub fn heterogeneity_summaries(post: &NmaPosterior) -> Vec<(String, Summary)> {
    let mut out = Vec::new();
    if let Some(t) = post.layout.tau {
        let end = post.layout.delta.unwrap_or(post.draws.n_params());
        for i in t..end {
            out.push((post.draws.names[i].clone(), Summary::of(&post.draws.pooled(i))));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mcmc::chain_rng;

    #[test]
    fn rank_quantiles() {
        assert_eq!(rank_quantile(&[50, 50, 0], 0.025), 1);
        assert_eq!(rank_quantile(&[50, 50, 0], 0.975), 2);
        assert_eq!(rank_quantile(&[0, 0, 10], 0.5), 3);
    }

    #[test]
    fn two_arm_construction_is_sigma() {
        let sigma = DMatrix::from_row_slice(2, 2, &[0.04, 0.01, 0.01, 0.09]);
        let mut rng = chain_rng(4, 0);
        let n = 50_000;
        let mut acc = DMatrix::zeros(2, 2);
        for _ in 0..n {
            let w = sample_multi_arm_effects(2, &sigma, &mut rng);
            assert_eq!(w.len(), 1);
            acc += &w[0] * w[0].transpose();
        }
        let cov = acc / n as f64;
        assert!((cov - &sigma).amax() < 0.003);
    }
}
