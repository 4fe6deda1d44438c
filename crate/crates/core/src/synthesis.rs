//! Normal-normal contrast synthesis shared by the pairwise and network models.
//!
//! Each study contributes `y_i ~ MVN(delta_i, S_i)` with `S_i` known. The study
//! effects are `delta_i ~ MVN(X_i d, C_i (x) Sigma)` where `X_i` maps basic
//! parameters to the study's contrasts and `C_i` has ones on the diagonal and
//! one half elsewhere: the joint law of the arm-by-arm conditional multi-arm
//! construction (see [`crate::network::sample_multi_arm_effects`]).
//!
//! One sweep draws, in order, each free heterogeneity parameter by slice
//! sampling from its conditional with `delta` integrated out, then `d` from
//! its Gaussian conditional with `delta` integrated out, then every `delta_i`
//! from its Gaussian full conditional.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimates::EstimateSet;
use crate::linalg::{mvn_draw, mvn_draw_canonical, mvn_log_pdf};
use crate::mcmc::{AcceptanceLog, ChainRng, Model, ScalarKernel, ScalarUpdater};

pub const PRIOR_D_VARIANCE: f64 = 1000.0;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Effects {
    Fixed,
    #[default]
    Random,
}

/// Prior on a between-study standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TauPrior {
    Uniform { upper: f64 },
    HalfNormal { scale: f64 },
    /// Point mass; the parameter is not sampled.
    Fixed { value: f64 },
}

impl TauPrior {
    pub fn uniform() -> Self {
        TauPrior::Uniform { upper: 1.0 }
    }

    pub fn half_normal() -> Self {
        TauPrior::HalfNormal { scale: 0.5 }
    }

    fn upper(&self) -> f64 {
        match *self {
            TauPrior::Uniform { upper } => upper,
            TauPrior::HalfNormal { .. } => f64::INFINITY,
            TauPrior::Fixed { value } => value,
        }
    }

    pub fn log_pdf(&self, tau: f64) -> f64 {
        match *self {
            TauPrior::Uniform { upper } if tau > 0.0 && tau < upper => -upper.ln(),
            TauPrior::HalfNormal { scale } if tau > 0.0 => {
                (2.0 / PI).sqrt().ln() - scale.ln() - 0.5 * (tau / scale).powi(2)
            }
            TauPrior::Fixed { value } if tau == value => 0.0,
            _ => f64::NEG_INFINITY,
        }
    }
}

/// Prior on the between-study correlation `rho = cos(theta)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum CorrelationPrior {
    /// `theta ~ Unif(0, pi)`.
    UniformAngle,
    Fixed { rho: f64 },
}

/// Priors on `Sigma`; `tau[1]` is ignored for univariate models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeterogeneityPrior {
    pub tau: [TauPrior; 2],
    pub correlation: CorrelationPrior,
}

impl Default for HeterogeneityPrior {
    fn default() -> Self {
        HeterogeneityPrior {
            tau: [TauPrior::uniform(), TauPrior::uniform()],
            correlation: CorrelationPrior::UniformAngle,
        }
    }
}

impl HeterogeneityPrior {
    /// Every heterogeneity parameter pinned to zero.
    pub fn pinned_zero() -> Self {
        HeterogeneityPrior {
            tau: [TauPrior::Fixed { value: 0.0 }; 2],
            correlation: CorrelationPrior::Fixed { rho: 0.0 },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Naming {
    Pairwise,
    Network,
}

#[derive(Debug, Clone)]
pub(crate) struct StudyBlock {
    pub y: DVector<f64>,
    pub s: DMatrix<f64>,
    pub x: DMatrix<f64>,
    pub arm_corr: DMatrix<f64>,
}

/// Where each monitored quantity sits in a draw row.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Layout {
    /// Basic parameters: `(n_t - 1) * m` entries, treatment-major.
    pub d: usize,
    pub n_d: usize,
    pub tau: Option<usize>,
    pub rho: Option<usize>,
    pub delta: Option<usize>,
    pub n_delta: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Free {
    Tau(usize),
    Theta,
}

#[derive(Debug, Clone)]
pub struct ContrastModel {
    pub(crate) m: usize,
    pub(crate) studies: Vec<StudyBlock>,
    effects: Effects,
    prior: HeterogeneityPrior,
    kernel: ScalarKernel,
    free: Vec<Free>,
    names: Vec<String>,
    pub(crate) layout: Layout,
    fixed_posterior: Option<(DMatrix<f64>, DVector<f64>)>,
}

#[derive(Debug, Clone)]
pub struct ContrastState {
    d: DVector<f64>,
    tau: [f64; 2],
    theta: f64,
    delta: Vec<DVector<f64>>,
    updaters: Vec<ScalarUpdater>,
}

impl ContrastModel {
    pub(crate) fn new(
        set: &EstimateSet,
        effects: Effects,
        prior: HeterogeneityPrior,
        kernel: ScalarKernel,
        naming: Naming,
    ) -> Result<Self> {
        let m = set.dim();
        let n_t = set.treatments.len();
        let p = (n_t - 1) * m;
        let arm_map = set.arm_map()?;
        let mut studies = Vec::with_capacity(set.studies.len());
        for (est, arms) in set.studies.iter().zip(&arm_map) {
            let n_c = arms.len() - 1;
            let mut x = DMatrix::zeros(n_c * m, p);
            for k in 1..arms.len() {
                for j in 0..m {
                    let row = (k - 1) * m + j;
                    x[(row, (arms[k] - 1) * m + j)] += 1.0;
                    if arms[0] > 0 {
                        x[(row, (arms[0] - 1) * m + j)] -= 1.0;
                    }
                }
            }
            let arm_corr = DMatrix::from_fn(n_c, n_c, |a, b| if a == b { 1.0 } else { 0.5 });
            studies.push(StudyBlock {
                y: est.y(),
                s: est.s(),
                x,
                arm_corr,
            });
        }

        for (k, tp) in prior.tau.iter().take(m).enumerate() {
            let ok = match *tp {
                TauPrior::Uniform { upper } => upper > 0.0,
                TauPrior::HalfNormal { scale } => scale > 0.0,
                TauPrior::Fixed { value } => value >= 0.0,
            };
            if !ok {
                return Err(Error::Spec(format!("invalid prior for tau[{}]", k + 1)));
            }
        }
        if let CorrelationPrior::Fixed { rho } = prior.correlation {
            if !(-1.0..=1.0).contains(&rho) {
                return Err(Error::Spec("fixed correlation must lie in [-1, 1]".into()));
            }
        }

        let mut free = Vec::new();
        if effects == Effects::Random {
            for k in 0..m {
                if !matches!(prior.tau[k], TauPrior::Fixed { .. }) {
                    free.push(Free::Tau(k));
                }
            }
            if m == 2 && prior.correlation == CorrelationPrior::UniformAngle {
                free.push(Free::Theta);
            }
        }

        let mut names = Vec::new();
        let mut layout = Layout {
            d: 0,
            n_d: p,
            ..Default::default()
        };
        let pair = naming == Naming::Pairwise && n_t == 2;
        for t in 1..n_t {
            for j in 0..m {
                names.push(match (pair, m) {
                    (true, 1) => "d".to_string(),
                    (true, _) => format!("d[{}]", j + 1),
                    (false, 1) => format!("d[{}]", t + 1),
                    (false, _) => format!("d[{},{}]", t + 1, j + 1),
                });
            }
        }
        if effects == Effects::Random {
            layout.tau = Some(names.len());
            if m == 1 {
                names.push("tau".into());
            } else {
                names.push("tau[1]".into());
                names.push("tau[2]".into());
                layout.rho = Some(names.len());
                names.push("rho".into());
            }
            layout.delta = Some(names.len());
            for (i, (st, arms)) in studies.iter().zip(&arm_map).enumerate() {
                let n_c = st.y.len() / m;
                for k in 0..n_c {
                    for j in 0..m {
                        names.push(match (pair, m) {
                            (true, 1) => format!("delta[{}]", i + 1),
                            (true, _) => format!("delta[{},{}]", i + 1, j + 1),
                            (false, 1) => format!("delta[{},{}]", i + 1, arms[k + 1] + 1),
                            (false, _) => format!("delta[{},{},{}]", i + 1, arms[k + 1] + 1, j + 1),
                        });
                    }
                }
                layout.n_delta += n_c * m;
            }
        }

        let mut model = ContrastModel {
            m,
            studies,
            effects,
            prior,
            kernel,
            free,
            names,
            layout,
            fixed_posterior: None,
        };
        if effects == Effects::Fixed {
            let (prec, b) = model.d_conditional(&DMatrix::zeros(m, m))?;
            model.fixed_posterior = Some((prec, b));
        }
        Ok(model)
    }

    pub fn sigma(&self, tau: [f64; 2], theta: f64) -> DMatrix<f64> {
        if self.effects == Effects::Fixed {
            return DMatrix::zeros(self.m, self.m);
        }
        if self.m == 1 {
            return DMatrix::from_element(1, 1, tau[0] * tau[0]);
        }
        let rho = self.rho(theta);
        let c = rho * tau[0] * tau[1];
        DMatrix::from_row_slice(2, 2, &[tau[0] * tau[0], c, c, tau[1] * tau[1]])
    }

    fn rho(&self, theta: f64) -> f64 {
        match self.prior.correlation {
            CorrelationPrior::UniformAngle => theta.cos(),
            CorrelationPrior::Fixed { rho } => rho,
        }
    }

    fn between(&self, st: &StudyBlock, sigma: &DMatrix<f64>) -> DMatrix<f64> {
        st.arm_corr.kronecker(sigma)
    }

    /// `log p(y | d, Sigma)` with the study effects integrated out.
    fn collapsed_log_lik(&self, d: &DVector<f64>, sigma: &DMatrix<f64>) -> f64 {
        self.studies
            .iter()
            .map(|st| {
                let v = &st.s + self.between(st, sigma);
                mvn_log_pdf(&st.y, &(&st.x * d), &v)
            })
            .sum()
    }

    /// Precision and canonical mean of `d | Sigma, y`.
    fn d_conditional(&self, sigma: &DMatrix<f64>) -> Result<(DMatrix<f64>, DVector<f64>)> {
        let p = self.layout.n_d;
        let mut prec = DMatrix::identity(p, p) / PRIOR_D_VARIANCE;
        let mut b = DVector::zeros(p);
        for st in &self.studies {
            let v = &st.s + self.between(st, sigma);
            let v_inv = v
                .cholesky()
                .ok_or_else(|| Error::Sampler("marginal covariance not positive definite".into()))?
                .inverse();
            let xt_vinv = st.x.transpose() * v_inv;
            prec += &xt_vinv * &st.x;
            b += xt_vinv * &st.y;
        }
        Ok(((&prec + prec.transpose()) * 0.5, b))
    }

    fn het_log_prior(&self, tau: [f64; 2], theta: f64) -> f64 {
        let mut lp = 0.0;
        for f in &self.free {
            lp += match *f {
                Free::Tau(k) => self.prior.tau[k].log_pdf(tau[k]),
                Free::Theta if theta > 0.0 && theta < PI => -PI.ln(),
                Free::Theta => f64::NEG_INFINITY,
            };
        }
        lp
    }

    fn d_log_prior(d: &DVector<f64>) -> f64 {
        -0.5 * d.norm_squared() / PRIOR_D_VARIANCE
    }

    /// Implied closed-form posterior of `d` under fixed effects.
    pub fn fixed_effect_posterior(&self) -> Option<(DVector<f64>, DMatrix<f64>)> {
        let (prec, b) = self.fixed_posterior.as_ref()?;
        let cov = prec.clone().cholesky()?.inverse();
        Some((&cov * b, cov))
    }
}

impl Model for ContrastModel {
    type State = ContrastState;

    fn parameter_names(&self) -> Vec<String> {
        self.names.clone()
    }

    fn initial_state(&self, chain: usize, rng: &mut ChainRng) -> Result<ContrastState> {
        let starts = [0.1, 0.5, 0.9];
        let angles = [PI / 4.0, PI / 2.0, 3.0 * PI / 4.0];
        let d = DVector::from_fn(self.layout.n_d, |_, _| rng.random_range(-2.0..2.0));
        let mut tau = [0.0; 2];
        for (k, t) in tau.iter_mut().enumerate() {
            *t = match self.prior.tau[k] {
                TauPrior::Fixed { value } => value,
                TauPrior::Uniform { upper } => starts[chain % 3] * upper,
                TauPrior::HalfNormal { .. } => starts[chain % 3],
            };
        }
        let theta = angles[chain % 3];
        let delta = self.studies.iter().map(|st| &st.x * &d).collect();
        let updaters = self
            .free
            .iter()
            .map(|f| match *f {
                Free::Tau(k) => {
                    let upper = self.prior.tau[k].upper();
                    let width = if upper.is_finite() { upper / 4.0 } else { 0.25 };
                    ScalarUpdater::new(self.kernel, width, 0.0, upper)
                }
                Free::Theta => ScalarUpdater::new(self.kernel, PI / 4.0, 0.0, PI),
            })
            .collect();
        Ok(ContrastState {
            d,
            tau,
            theta,
            delta,
            updaters,
        })
    }

    fn log_density(&self, s: &ContrastState) -> f64 {
        let sigma = self.sigma(s.tau, s.theta);
        Self::d_log_prior(&s.d) + self.het_log_prior(s.tau, s.theta) + self.collapsed_log_lik(&s.d, &sigma)
    }

    fn sweep(&self, s: &mut ContrastState, rng: &mut ChainRng, adapt: bool, log: &mut AcceptanceLog) -> Result<()> {
        if let Some((prec, b)) = &self.fixed_posterior {
            s.d = mvn_draw_canonical(prec, b, rng)
                .ok_or_else(|| Error::Sampler("posterior precision not positive definite".into()))?;
            for (st, delta) in self.studies.iter().zip(&mut s.delta) {
                *delta = &st.x * &s.d;
            }
            return Ok(());
        }

        for (u, f) in self.free.clone().into_iter().enumerate() {
            let (block, x0) = match f {
                Free::Tau(0) => ("tau1", s.tau[0]),
                Free::Tau(_) => ("tau2", s.tau[1]),
                Free::Theta => ("theta", s.theta),
            };
            let mut tau = s.tau;
            let mut theta = s.theta;
            let d = s.d.clone();
            let target = |x: f64| {
                match f {
                    Free::Tau(k) => tau[k] = x,
                    Free::Theta => theta = x,
                }
                let lp = self.het_log_prior(tau, theta);
                if lp == f64::NEG_INFINITY {
                    return lp;
                }
                lp + self.collapsed_log_lik(&d, &self.sigma(tau, theta))
            };
            let x = s.updaters[u].update(block, x0, target, rng, adapt, log);
            match f {
                Free::Tau(k) => s.tau[k] = x,
                Free::Theta => s.theta = x,
            }
        }

        let sigma = self.sigma(s.tau, s.theta);
        let (prec, b) = self.d_conditional(&sigma)?;
        s.d = mvn_draw_canonical(&prec, &b, rng)
            .ok_or_else(|| Error::Sampler("posterior precision not positive definite".into()))?;

        for (st, delta) in self.studies.iter().zip(&mut s.delta) {
            let g = self.between(st, &sigma);
            let v = &st.s + &g;
            let v_inv = v
                .cholesky()
                .ok_or_else(|| Error::Sampler("marginal covariance not positive definite".into()))?
                .inverse();
            let mu = &st.x * &s.d;
            let gain = &g * v_inv;
            let mean = &mu + &gain * (&st.y - &mu);
            let cov = &g - &gain * &g;
            let cov = (&cov + cov.transpose()) * 0.5;
            *delta = mvn_draw(&mean, &cov, rng);
        }
        if s.d.iter().any(|v| !v.is_finite()) {
            return Err(Error::Sampler("NaN in basic parameters".into()));
        }
        Ok(())
    }

    fn monitor(&self, s: &ContrastState, out: &mut Vec<f64>) {
        out.extend(s.d.iter());
        if self.effects == Effects::Random {
            out.extend_from_slice(&s.tau[..self.m]);
            if self.m == 2 {
                out.push(self.rho(s.theta));
            }
            for delta in &s.delta {
                out.extend(delta.iter());
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tau_prior_densities() {
        assert_eq!(TauPrior::uniform().log_pdf(0.5), 0.0);
        assert_eq!(TauPrior::uniform().log_pdf(1.5), f64::NEG_INFINITY);
        let hn = TauPrior::half_normal();
        let expect = (2.0 / PI).sqrt().ln() - 0.5f64.ln() - 0.5;
        assert!((hn.log_pdf(0.5) - expect).abs() < 1e-14);
        assert_eq!(hn.log_pdf(-0.1), f64::NEG_INFINITY);
    }
}
