//! Two-treatment random- and fixed-effects meta-analysis of Cox estimates.
//!
//! Univariate mode pools log hazard ratios. Bivariate mode pools
//! `(log HR at t = 1, log-time interaction)` pairs with a between-study
//! covariance built from two standard deviations and `rho = cos(theta)`, so
//! the pooled hazard ratio at time `t` is `exp(d1 + d2 log t)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimates::{EstimateSet, StudyEstimate};
use crate::mcmc::{run_chains, Model, PosteriorDraws, SamplerProtocol, ScalarKernel};
use crate::summary::Summary;
use crate::survival::CoxModel;
use crate::synthesis::{ContrastModel, Effects, HeterogeneityPrior, Layout, Naming, TauPrior};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Univariate,
    Bivariate,
}

impl Mode {
    fn dim(self) -> usize {
        match self {
            Mode::Univariate => 1,
            Mode::Bivariate => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairwiseModelSpec {
    pub effects: Effects,
    pub heterogeneity: HeterogeneityPrior,
    pub kernel: ScalarKernel,
}

impl Default for PairwiseModelSpec {
    fn default() -> Self {
        PairwiseModelSpec {
            effects: Effects::Random,
            heterogeneity: HeterogeneityPrior::default(),
            kernel: ScalarKernel::Slice,
        }
    }
}

impl PairwiseModelSpec {
    pub fn fixed() -> Self {
        PairwiseModelSpec {
            effects: Effects::Fixed,
            ..Default::default()
        }
    }

    pub fn with_tau2_prior(mut self, prior: TauPrior) -> Self {
        self.heterogeneity.tau[1] = prior;
        self
    }
}

/// One study's treatment-vs-control estimate and its known covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseEstimate {
    pub study: String,
    pub y: Vec<f64>,
    pub s: Vec<Vec<f64>>,
    #[serde(default)]
    pub max_time: Option<f64>,
}

impl PairwiseEstimate {
    pub fn univariate(study: impl Into<String>, log_hr: f64, variance: f64) -> Self {
        PairwiseEstimate {
            study: study.into(),
            y: vec![log_hr],
            s: vec![vec![variance]],
            max_time: None,
        }
    }

    pub fn bivariate(study: impl Into<String>, y: [f64; 2], s: [[f64; 2]; 2]) -> Self {
        PairwiseEstimate {
            study: study.into(),
            y: y.to_vec(),
            s: s.iter().map(|r| r.to_vec()).collect(),
            max_time: None,
        }
    }

    /// Two-arm studies of an estimate set, treatment vs reference.
    pub fn from_set(set: &EstimateSet) -> Result<Vec<PairwiseEstimate>> {
        if set.treatments.len() != 2 {
            return Err(Error::Spec(format!(
                "pairwise meta-analysis needs exactly 2 treatments, found {}",
                set.treatments.len()
            )));
        }
        Ok(set
            .studies
            .iter()
            .map(|s| PairwiseEstimate {
                study: s.study.clone(),
                y: s.coefficients.clone(),
                s: s.covariance.clone(),
                max_time: s.max_time,
            })
            .collect())
    }
}

fn to_set(estimates: &[PairwiseEstimate], mode: Mode) -> Result<EstimateSet> {
    let m = mode.dim();
    let studies = estimates
        .iter()
        .map(|e| {
            if e.y.len() != m {
                return Err(Error::Spec(format!(
                    "study `{}` has {} coefficients, {mode:?} mode needs {m}",
                    e.study,
                    e.y.len()
                )));
            }
            Ok(StudyEstimate {
                study: e.study.clone(),
                treatments: vec!["control".into(), "treatment".into()],
                coefficients: e.y.clone(),
                covariance: e.s.clone(),
                max_time: e.max_time,
                fit: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let model = if m == 1 { CoxModel::Ph } else { CoxModel::Tvhr };
    EstimateSet::new(model, vec!["control".into(), "treatment".into()], studies)
}

/// Time at which a hazard ratio is reported.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Landmark {
    Constant,
    Years(f64),
}

impl Landmark {
    pub fn label(&self) -> String {
        match self {
            Landmark::Constant => "Constant".into(),
            Landmark::Years(t) => format!("{t}"),
        }
    }
}

/// Hazard-ratio summary computed draw by draw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HrSummary {
    pub landmark: Landmark,
    pub mean: f64,
    pub median: f64,
    pub lower: f64,
    pub upper: f64,
}

impl HrSummary {
    pub fn from_log_draws(landmark: Landmark, log_hr: impl Iterator<Item = f64>) -> Self {
        let hr: Vec<f64> = log_hr.map(f64::exp).collect();
        let s = Summary::of(&hr);
        HrSummary {
            landmark,
            mean: s.mean,
            median: s.median,
            lower: s.lower,
            upper: s.upper,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PairwisePosterior {
    pub mode: Mode,
    pub spec: PairwiseModelSpec,
    pub studies: Vec<String>,
    pub max_time: Option<f64>,
    pub draws: PosteriorDraws,
    layout: Layout,
}

impl PairwisePosterior {
    fn column(&self, idx: usize) -> Vec<f64> {
        self.draws.pooled(idx)
    }

    /// Draws of pooled component `j` (0 = log HR, 1 = interaction).
    pub fn d_draws(&self, j: usize) -> Vec<f64> {
        self.column(self.layout.d + j)
    }

    pub fn d_summary(&self, j: usize) -> Summary {
        Summary::of(&self.d_draws(j))
    }

    pub fn tau_draws(&self, j: usize) -> Option<Vec<f64>> {
        self.layout.tau.map(|t| self.column(t + j))
    }

    pub fn rho_draws(&self) -> Option<Vec<f64>> {
        self.layout.rho.map(|r| self.column(r))
    }

    /// Study effects `delta_i`, component `j`; empty under fixed effects.
    pub fn study_effect_draws(&self, study: usize, j: usize) -> Option<Vec<f64>> {
        let m = self.mode.dim();
        self.layout.delta.map(|d| self.column(d + study * m + j))
    }

    /// Monitored names used for convergence gating.
    pub fn monitored(&self) -> Vec<String> {
        let end = self.layout.delta.unwrap_or(self.draws.n_params());
        self.draws.names[..end].to_vec()
    }

    /// Fraction of retained interaction draws strictly above zero.
    pub fn prob_interaction_positive(&self) -> Result<f64> {
        if self.mode != Mode::Bivariate {
            return Err(Error::Spec("interaction needs a bivariate posterior".into()));
        }
        let d2 = self.d_draws(1);
        Ok(d2.iter().filter(|&&v| v > 0.0).count() as f64 / d2.len() as f64)
    }

    /// Constant hazard ratio `exp(d)` of a univariate fit.
    pub fn constant_hr(&self) -> HrSummary {
        HrSummary::from_log_draws(Landmark::Constant, self.d_draws(0).into_iter())
    }

    /// Pooled `exp(d1 + d2 log t)` summaries on a time grid.
    pub fn pooled_hr_curve(&self, times: &[f64]) -> Result<Vec<HrSummary>> {
        pooled_hr_curve(self, times)
    }
}

pub fn pooled_hr_curve(post: &PairwisePosterior, times: &[f64]) -> Result<Vec<HrSummary>> {
    if post.mode != Mode::Bivariate {
        return Err(Error::Spec("HR curves need a bivariate posterior".into()));
    }
    let d1 = post.d_draws(0);
    let d2 = post.d_draws(1);
    times
        .iter()
        .map(|&t| {
            if !(t > 0.0) {
                return Err(Error::NonPositiveTime(t));
            }
            let lt = t.ln();
            Ok(HrSummary::from_log_draws(
                Landmark::Years(t),
                d1.iter().zip(&d2).map(|(a, b)| a + b * lt),
            ))
        })
        .collect()
}

fn fit(estimates: &[PairwiseEstimate], mode: Mode, spec: &PairwiseModelSpec, protocol: &SamplerProtocol) -> Result<PairwisePosterior> {
    if estimates.is_empty() {
        return Err(Error::InsufficientData("no studies".into()));
    }
    if spec.effects == Effects::Random && estimates.len() < 2 {
        return Err(Error::Spec(
            "a random-effects model needs at least 2 studies; use a fixed-effect model for a single study".into(),
        ));
    }
    let set = to_set(estimates, mode)?;
    let model = ContrastModel::new(&set, spec.effects, spec.heterogeneity, spec.kernel, Naming::Pairwise)?;
    let draws = run_chains(&model, protocol)?;
    Ok(PairwisePosterior {
        mode,
        spec: *spec,
        studies: estimates.iter().map(|e| e.study.clone()).collect(),
        max_time: estimates.iter().filter_map(|e| e.max_time).reduce(f64::max),
        draws,
        layout: model.layout.clone(),
    })
}

impl PairwisePosterior {
    /// Rebuilds a posterior around stored draws, e.g. chains read back from disk.
    pub fn from_draws(
        estimates: &[PairwiseEstimate],
        mode: Mode,
        spec: &PairwiseModelSpec,
        draws: PosteriorDraws,
    ) -> Result<Self> {
        let set = to_set(estimates, mode)?;
        let model = ContrastModel::new(&set, spec.effects, spec.heterogeneity, spec.kernel, Naming::Pairwise)?;
        if model.parameter_names() != draws.names {
            return Err(Error::Manifest("stored draws do not match the model's parameters".into()));
        }
        Ok(PairwisePosterior {
            mode,
            spec: *spec,
            studies: estimates.iter().map(|e| e.study.clone()).collect(),
            max_time: estimates.iter().filter_map(|e| e.max_time).reduce(f64::max),
            draws,
            layout: model.layout.clone(),
        })
    }
}

/// `y_i ~ N(delta_i, S_i)`, `delta_i ~ N(d, tau^2)`.
pub fn fit_univariate_ma(
    estimates: &[PairwiseEstimate],
    spec: &PairwiseModelSpec,
    protocol: &SamplerProtocol,
) -> Result<PairwisePosterior> {
    fit(estimates, Mode::Univariate, spec, protocol)
}

/// `y_i ~ MVN(delta_i, S_i)`, `delta_i ~ MVN(d, Sigma)`.
pub fn fit_bivariate_ma(
    estimates: &[PairwiseEstimate],
    spec: &PairwiseModelSpec,
    protocol: &SamplerProtocol,
) -> Result<PairwisePosterior> {
    fit(estimates, Mode::Bivariate, spec, protocol)
}

#[derive(Debug, Clone, Serialize)]
pub struct SensitivityRow {
    pub landmark: Landmark,
    pub base: HrSummary,
    pub alternative: HrSummary,
}

#[derive(Debug, Clone)]
pub struct SensitivityResult {
    pub base: PairwisePosterior,
    pub alternative: PairwisePosterior,
    pub table: Vec<SensitivityRow>,
    /// Heterogeneity posteriors whose 95% interval spans more than half of
    /// the prior's central 95% range.
    pub warnings: Vec<String>,
}

/// Refits the bivariate model with a different prior on `tau[2]` under the
/// same seed and tabulates both at the landmark times.
pub fn prior_sensitivity(
    estimates: &[PairwiseEstimate],
    base: &PairwiseModelSpec,
    alternative_tau2: TauPrior,
    protocol: &SamplerProtocol,
    times: &[f64],
) -> Result<SensitivityResult> {
    let alt_spec = base.with_tau2_prior(alternative_tau2);
    let (b, a) = std::thread::scope(|s| {
        let hb = s.spawn(|| fit_bivariate_ma(estimates, base, protocol));
        let ha = s.spawn(|| fit_bivariate_ma(estimates, &alt_spec, protocol));
        (hb.join().expect("fit panicked"), ha.join().expect("fit panicked"))
    });
    let (b, a) = (b?, a?);
    let rb = b.pooled_hr_curve(times)?;
    let ra = a.pooled_hr_curve(times)?;
    let table = rb
        .into_iter()
        .zip(ra)
        .map(|(x, y)| SensitivityRow {
            landmark: x.landmark,
            base: x,
            alternative: y,
        })
        .collect();
    let mut warnings = wide_heterogeneity(&b, "base");
    warnings.extend(wide_heterogeneity(&a, "alternative"));
    Ok(SensitivityResult {
        base: b,
        alternative: a,
        table,
        warnings,
    })
}

/// Flags heterogeneity parameters whose posterior is barely narrower than the prior.
pub fn wide_heterogeneity(post: &PairwisePosterior, label: &str) -> Vec<String> {
    let mut out = Vec::new();
    for j in 0..post.mode.dim() {
        let Some(draws) = post.tau_draws(j) else { continue };
        let prior_range = match post.spec.heterogeneity.tau[j] {
            TauPrior::Uniform { upper } => 0.95 * upper,
            // central 95% of a half-normal: scale * (z_0.9875 - z_0.5125)
            TauPrior::HalfNormal { scale } => scale * (2.241_402_727_604_947 - 0.031_337_982_021_426_48),
            TauPrior::Fixed { .. } => continue,
        };
        let s = Summary::of(&draws);
        if s.width() > 0.5 * prior_range {
            out.push(format!(
                "{label}: tau[{}] posterior 95% interval ({:.3}, {:.3}) is wide relative to its prior",
                j + 1,
                s.lower,
                s.upper
            ));
        }
    }
    out
}
