//! Cox partial likelihood fitting for treatment contrasts.
//!
//! Covariates depend only on the arm and on the event time being evaluated,
//! so every risk-set sum is accumulated per arm. In time-varying mode the
//! second covariate of each contrast is `x * log(t)` with `t` the event time
//! of the risk set, which is what a counting-process expansion at every
//! event time would give.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::StudyDataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ties {
    #[default]
    Efron,
    Breslow,
}

/// Per-contrast covariate coding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoxModel {
    /// One coefficient per contrast: the log hazard ratio.
    Ph,
    /// Two coefficients per contrast: log hazard ratio at t = 1 and the
    /// treatment by log-time interaction.
    Tvhr,
}

impl CoxModel {
    /// Coefficients per contrast.
    pub fn dim(self) -> usize {
        match self {
            CoxModel::Ph => 1,
            CoxModel::Tvhr => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CoxModel::Ph => "ph",
            CoxModel::Tvhr => "tvhr",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoxOptions {
    pub ties: Ties,
    pub max_iter: usize,
    pub grad_tol: f64,
    pub rel_loglik_tol: f64,
    /// Coefficients beyond this magnitude with a still increasing likelihood
    /// are reported as a monotone likelihood.
    pub divergence_bound: f64,
}

impl Default for CoxOptions {
    fn default() -> Self {
        CoxOptions {
            ties: Ties::Efron,
            max_iter: 50,
            grad_tol: 1e-9,
            rel_loglik_tol: 1e-9,
            divergence_bound: 15.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoxFit {
    pub study: String,
    pub model: CoxModel,
    pub ties: Ties,
    /// Arm labels; arm 0 is the comparator for every contrast.
    pub arms: Vec<String>,
    /// Contrast-major layout: `coefficients[(k - 1) * m + j]` for arm `k`.
    pub coefficients: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub information: DMatrix<f64>,
    pub gradient: DVector<f64>,
    pub log_partial_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
    pub n_events: usize,
    pub max_time: f64,
}

impl CoxFit {
    pub fn n_contrasts(&self) -> usize {
        self.arms.len() - 1
    }

    /// Coefficients of contrast `k` (arm `k` vs arm 0), `1 <= k < n_arms`.
    pub fn contrast(&self, k: usize) -> DVector<f64> {
        let m = self.model.dim();
        self.coefficients.rows((k - 1) * m, m).into_owned()
    }

    pub fn contrast_covariance(&self, k: usize) -> DMatrix<f64> {
        let m = self.model.dim();
        let s = (k - 1) * m;
        self.covariance.view((s, s), (m, m)).into_owned()
    }

    pub fn standard_errors(&self) -> DVector<f64> {
        self.covariance.diagonal().map(f64::sqrt)
    }
}

/// Risk-set counts at each distinct event time, aggregated by arm.
#[derive(Debug, Clone)]
pub(crate) struct RiskTable {
    pub times: Vec<f64>,
    pub at_risk: Vec<Vec<f64>>,
    pub deaths: Vec<Vec<f64>>,
}

impl RiskTable {
    pub fn new(study: &StudyDataset) -> Self {
        let n_arms = study.n_arms();
        let mut by_arm: Vec<Vec<f64>> = vec![Vec::new(); n_arms];
        for r in &study.records {
            by_arm[r.arm].push(r.time);
        }
        for v in &mut by_arm {
            v.sort_by(f64::total_cmp);
        }
        let mut times: Vec<f64> = study.records.iter().filter(|r| r.event).map(|r| r.time).collect();
        times.sort_by(f64::total_cmp);
        times.dedup();

        let mut deaths = vec![vec![0.0; n_arms]; times.len()];
        for r in study.records.iter().filter(|r| r.event) {
            let j = times.binary_search_by(|t| t.total_cmp(&r.time)).unwrap();
            deaths[j][r.arm] += 1.0;
        }
        let at_risk = times
            .iter()
            .map(|&t| {
                by_arm
                    .iter()
                    .map(|v| (v.len() - v.partition_point(|&x| x < t)) as f64)
                    .collect()
            })
            .collect();
        RiskTable {
            times,
            at_risk,
            deaths,
        }
    }
}

/// Partial likelihood of one study under a contrast coding.
#[derive(Debug, Clone)]
pub struct CoxProblem {
    table: RiskTable,
    n_arms: usize,
    model: CoxModel,
}

/// Log partial likelihood with its gradient and observed information.
#[derive(Debug, Clone)]
pub struct CoxEvaluation {
    pub log_likelihood: f64,
    pub gradient: DVector<f64>,
    pub information: DMatrix<f64>,
}

impl CoxProblem {
    pub fn new(study: &StudyDataset, model: CoxModel) -> Self {
        CoxProblem {
            table: RiskTable::new(study),
            n_arms: study.n_arms(),
            model,
        }
    }

    pub fn dim(&self) -> usize {
        (self.n_arms - 1) * self.model.dim()
    }

    pub fn event_times(&self) -> &[f64] {
        &self.table.times
    }

    /// Covariate vector of an arm at event time `t`.
    pub fn covariates(&self, arm: usize, t: f64) -> DVector<f64> {
        let m = self.model.dim();
        let mut z = DVector::zeros(self.dim());
        if arm > 0 {
            z[(arm - 1) * m] = 1.0;
            if m == 2 {
                z[(arm - 1) * m + 1] = t.ln();
            }
        }
        z
    }

    pub fn evaluate(&self, beta: &DVector<f64>, ties: Ties) -> CoxEvaluation {
        let p = self.dim();
        let mut ll = 0.0;
        let mut grad = DVector::zeros(p);
        let mut info = DMatrix::zeros(p, p);

        for (j, &t) in self.table.times.iter().enumerate() {
            let z: Vec<DVector<f64>> = (0..self.n_arms).map(|a| self.covariates(a, t)).collect();
            let eta: Vec<f64> = z.iter().map(|z| z.dot(beta)).collect();
            let shift = eta.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let w: Vec<f64> = eta.iter().map(|e| (e - shift).exp()).collect();

            let mut s0 = 0.0;
            let mut s1 = DVector::zeros(p);
            let mut s2 = DMatrix::zeros(p, p);
            let mut d0 = 0.0;
            let mut d1 = DVector::zeros(p);
            let mut d2 = DMatrix::zeros(p, p);
            let mut n_deaths = 0.0;
            for a in 0..self.n_arms {
                let r = self.table.at_risk[j][a];
                let d = self.table.deaths[j][a];
                let zz = &z[a] * z[a].transpose();
                if r > 0.0 {
                    s0 += r * w[a];
                    s1.axpy(r * w[a], &z[a], 1.0);
                    s2 += &zz * (r * w[a]);
                }
                if d > 0.0 {
                    ll += d * eta[a];
                    grad.axpy(d, &z[a], 1.0);
                    d0 += d * w[a];
                    d1.axpy(d * w[a], &z[a], 1.0);
                    d2 += &zz * (d * w[a]);
                    n_deaths += d;
                }
            }

            let n = n_deaths as usize;
            for l in 0..n {
                let f = match ties {
                    Ties::Efron => l as f64 / n_deaths,
                    Ties::Breslow => 0.0,
                };
                let a0 = s0 - f * d0;
                let a1 = &s1 - &d1 * f;
                let a2 = &s2 - &d2 * f;
                let mean = &a1 / a0;
                ll -= a0.ln() + shift;
                grad -= &mean;
                info += a2 / a0 - &mean * mean.transpose();
            }
        }
        CoxEvaluation {
            log_likelihood: ll,
            gradient: grad,
            information: info,
        }
    }
}

/// Joint fit of every non-reference arm against arm 0 of the study.
pub fn fit_cox(study: &StudyDataset, model: CoxModel, options: &CoxOptions) -> Result<CoxFit> {
    let fail = |message: String| Error::Fit {
        study: study.id.clone(),
        message,
    };
    let events = study.arm_events();
    if let Some(k) = events.iter().position(|&e| e == 0) {
        return Err(fail(format!("no events in arm `{}`", study.arms[k])));
    }
    let sizes = study.arm_sizes();
    if let Some(k) = sizes.iter().position(|&n| n == 0) {
        return Err(Error::ConstantCovariate(format!(
            "arm `{}` of study `{}` is empty",
            study.arms[k], study.id
        )));
    }
    let problem = CoxProblem::new(study, model);
    if model == CoxModel::Tvhr && problem.event_times().len() < 2 {
        return Err(fail("time-varying model needs at least two distinct event times".into()));
    }
    newton_raphson(study, &problem, options).map_err(|e| match e {
        Error::Fit { .. } => e,
        other => fail(other.to_string()),
    })
}

/// Proportional hazards fit of arm `contrast.1` against arm `contrast.0`.
pub fn fit_cox_ph(study: &StudyDataset, contrast: (usize, usize), options: &CoxOptions) -> Result<CoxFit> {
    fit_pair(study, contrast, CoxModel::Ph, options)
}

/// Time-varying hazard ratio fit of arm `contrast.1` against arm `contrast.0`.
pub fn fit_cox_tvhr(study: &StudyDataset, contrast: (usize, usize), options: &CoxOptions) -> Result<CoxFit> {
    fit_pair(study, contrast, CoxModel::Tvhr, options)
}

fn fit_pair(
    study: &StudyDataset,
    (reference, arm): (usize, usize),
    model: CoxModel,
    options: &CoxOptions,
) -> Result<CoxFit> {
    if reference == arm || reference >= study.n_arms() || arm >= study.n_arms() {
        return Err(Error::Spec(format!(
            "invalid contrast ({reference}, {arm}) for study `{}`",
            study.id
        )));
    }
    if study.n_arms() == 2 && reference == 0 {
        return fit_cox(study, model, options);
    }
    fit_cox(&study.subset(&[reference, arm])?, model, options)
}

fn newton_raphson(study: &StudyDataset, problem: &CoxProblem, options: &CoxOptions) -> Result<CoxFit> {
    let p = problem.dim();
    let mut beta = DVector::zeros(p);
    let mut current = problem.evaluate(&beta, options.ties);
    let mut converged = false;
    let mut iterations = 0;

    while iterations < options.max_iter {
        iterations += 1;
        let step = solve_spd(&current.information, &current.gradient).ok_or(Error::SingularInformation)?;
        let mut scale = 1.0;
        let (candidate, next) = loop {
            let candidate = &beta + &step * scale;
            let next = problem.evaluate(&candidate, options.ties);
            if next.log_likelihood.is_finite() && next.log_likelihood >= current.log_likelihood - 1e-12 * current.log_likelihood.abs() {
                break (candidate, next);
            }
            scale *= 0.5;
            if scale < 1e-10 {
                return Err(Error::NonConvergence(format!(
                    "step halving failed at iteration {iterations}"
                )));
            }
        };

        let change = (next.log_likelihood - current.log_likelihood).abs();
        let rel = change / next.log_likelihood.abs().max(1.0);
        let grad_norm = next.gradient.amax();
        let diverged = candidate.iter().position(|b| b.abs() > options.divergence_bound);
        beta = candidate;
        let increased = next.log_likelihood >= current.log_likelihood;
        current = next;

        if rel < options.rel_loglik_tol && grad_norm < options.grad_tol {
            converged = true;
            break;
        }
        if let Some(index) = diverged {
            if increased {
                return Err(Error::MonotoneLikelihood { index });
            }
        }
    }

    if !converged {
        if let Some(index) = beta.iter().position(|b| b.abs() > options.divergence_bound / 2.0) {
            return Err(Error::MonotoneLikelihood { index });
        }
        return Err(Error::NonConvergence(format!(
            "no convergence after {} iterations (gradient {:.3e})",
            options.max_iter,
            current.gradient.amax()
        )));
    }

    let covariance = current
        .information
        .clone()
        .cholesky()
        .ok_or(Error::SingularInformation)?
        .inverse();
    let covariance = (&covariance + covariance.transpose()) * 0.5;

    Ok(CoxFit {
        study: study.id.clone(),
        model: problem.model,
        ties: options.ties,
        arms: study.arms.clone(),
        coefficients: beta,
        covariance,
        information: current.information,
        gradient: current.gradient,
        log_partial_likelihood: current.log_likelihood,
        iterations,
        converged,
        n_events: study.n_events(),
        max_time: study.max_time(),
    })
}

fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    if let Some(ch) = a.clone().cholesky() {
        return Some(ch.solve(b));
    }
    a.clone().lu().solve(b)
}

/// Hazard ratio at a time point with a delta-method confidence interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HazardRatio {
    pub time: f64,
    pub log_hr: f64,
    pub se: f64,
    pub hr: f64,
    pub lower: f64,
    pub upper: f64,
}

pub const Z_975: f64 = 1.959_963_984_540_054;

/// `exp(b1 + b2 log t)` for contrast 1 of a time-varying fit, 95% interval.
pub fn hr_at_time(fit: &CoxFit, t: f64) -> Result<HazardRatio> {
    hr_at_time_for(fit, 1, t)
}

pub fn hr_at_time_for(fit: &CoxFit, contrast: usize, t: f64) -> Result<HazardRatio> {
    if !(t > 0.0) {
        return Err(Error::NonPositiveTime(t));
    }
    if fit.model != CoxModel::Tvhr {
        return Err(Error::Spec("hr_at_time needs a time-varying fit".into()));
    }
    if contrast == 0 || contrast > fit.n_contrasts() {
        return Err(Error::Spec(format!("contrast {contrast} out of range")));
    }
    let b = fit.contrast(contrast);
    let v = fit.contrast_covariance(contrast);
    let lt = t.ln();
    let log_hr = b[0] + b[1] * lt;
    let var = v[(0, 0)] + lt * lt * v[(1, 1)] + 2.0 * lt * v[(0, 1)];
    let se = var.max(0.0).sqrt();
    Ok(HazardRatio {
        time: t,
        log_hr,
        se,
        hr: log_hr.exp(),
        lower: (log_hr - Z_975 * se).exp(),
        upper: (log_hr + Z_975 * se).exp(),
    })
}
