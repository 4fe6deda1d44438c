//! Proportional hazards diagnostics from Schoenfeld residuals.
//!
//! The test is the score test for adding `x * g(t)` with `g = log` to the
//! fitted PH model, evaluated at the PH estimate with the new coefficients at
//! zero. This is the Grambsch-Therneau statistic; centring `g` does not change
//! it because the time-fixed part is already in the model.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::cox::{CoxFit, CoxModel, CoxProblem};
use crate::data::StudyDataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChiSquareTest {
    pub name: String,
    pub chisq: f64,
    pub df: usize,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualPoint {
    pub time: f64,
    /// One scaled residual per covariate.
    pub scaled: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhTestResult {
    pub study: String,
    pub covariates: Vec<ChiSquareTest>,
    pub global: ChiSquareTest,
    pub residuals: Vec<ResidualPoint>,
}

impl PhTestResult {
    pub fn rejects(&self, alpha: f64) -> bool {
        self.global.p_value < alpha
    }
}

fn chisq_test(name: String, chisq: f64, df: usize) -> ChiSquareTest {
    let chisq = chisq.max(0.0);
    let p_value = ChiSquared::new(df as f64)
        .map(|d| d.sf(chisq))
        .unwrap_or(f64::NAN)
        .clamp(0.0, 1.0);
    ChiSquareTest {
        name,
        chisq,
        df,
        p_value,
    }
}

/// Score test of proportional hazards for a converged PH fit of `study`.
pub fn schoenfeld_test(study: &StudyDataset, fit: &CoxFit) -> Result<PhTestResult> {
    if fit.model != CoxModel::Ph {
        return Err(Error::Spec("the PH test needs a proportional hazards fit".into()));
    }
    if !fit.converged {
        return Err(Error::NonConvergence(format!("fit for study `{}`", fit.study)));
    }
    if fit.arms != study.arms {
        return Err(Error::Spec(format!(
            "fit arms {:?} do not match study arms {:?}",
            fit.arms, study.arms
        )));
    }
    if study.n_events() < 3 {
        return Err(Error::InsufficientData(format!(
            "study `{}` has fewer than 3 events",
            study.id
        )));
    }

    let p = fit.coefficients.len();
    let augmented = CoxProblem::new(study, CoxModel::Tvhr);
    let mut theta = DVector::zeros(2 * p);
    for c in 0..p {
        theta[2 * c] = fit.coefficients[c];
    }
    let eval = augmented.evaluate(&theta, fit.ties);

    let beta_idx: Vec<usize> = (0..p).map(|c| 2 * c).collect();
    let gamma_idx: Vec<usize> = (0..p).map(|c| 2 * c + 1).collect();
    let pick = |rows: &[usize], cols: &[usize]| {
        DMatrix::from_fn(rows.len(), cols.len(), |i, j| eval.information[(rows[i], cols[j])])
    };
    let i_bb = pick(&beta_idx, &beta_idx);
    let i_bg = pick(&beta_idx, &gamma_idx);
    let i_gg = pick(&gamma_idx, &gamma_idx);
    let u = DVector::from_iterator(p, gamma_idx.iter().map(|&i| eval.gradient[i]));
    // The PH score at the estimate is ~0, so the efficient information for
    // the interaction block is the Schur complement.
    let i_bb_inv = i_bb
        .clone()
        .cholesky()
        .ok_or(Error::SingularInformation)?
        .inverse();
    let schur = &i_gg - i_bg.transpose() * &i_bb_inv * &i_bg;
    let schur_inv = schur
        .clone()
        .cholesky()
        .ok_or(Error::SingularInformation)?
        .inverse();

    let global = chisq_test("GLOBAL".into(), (u.transpose() * &schur_inv * &u)[0], p);
    let covariates = (0..p)
        .map(|c| chisq_test(study.arms[c + 1].clone(), u[c] * u[c] / schur[(c, c)], 1))
        .collect();

    Ok(PhTestResult {
        study: study.id.clone(),
        covariates,
        global,
        residuals: scaled_residuals(study, fit),
    })
}

/// Scaled Schoenfeld residuals `beta + D * V * r` at each event.
pub fn scaled_residuals(study: &StudyDataset, fit: &CoxFit) -> Vec<ResidualPoint> {
    let problem = CoxProblem::new(study, CoxModel::Ph);
    let p = fit.coefficients.len();
    let n_arms = study.n_arms();
    let total_events = study.n_events() as f64;
    let mut events: Vec<(f64, usize)> = study
        .records
        .iter()
        .filter(|r| r.event)
        .map(|r| (r.time, r.arm))
        .collect();
    events.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut out = Vec::with_capacity(events.len());
    for (t, arm) in events {
        let mut s0 = 0.0;
        let mut s1 = DVector::zeros(p);
        for a in 0..n_arms {
            let n = study.records.iter().filter(|r| r.arm == a && r.time >= t).count() as f64;
            let z = problem.covariates(a, t);
            let w = n * z.dot(&fit.coefficients).exp();
            s0 += w;
            s1.axpy(w, &z, 1.0);
        }
        let r = problem.covariates(arm, t) - s1 / s0;
        let scaled = &fit.coefficients + &fit.covariance * r * total_events;
        out.push(ResidualPoint {
            time: t,
            scaled: scaled.iter().copied().collect(),
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::survival::cox::{fit_cox, CoxOptions};

    #[test]
    fn fewer_than_three_events() {
        let s = StudyDataset::two_arm("a", &[(1.0, true), (2.0, false)], &[(1.5, true), (3.0, false)])
            .unwrap();
        let fit = fit_cox(&s, CoxModel::Ph, &CoxOptions::default()).unwrap();
        assert!(matches!(schoenfeld_test(&s, &fit), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn rejects_tvhr_fit() {
        let s = StudyDataset::two_arm(
            "a",
            &[(1.0, true), (2.0, true), (2.5, false)],
            &[(1.5, true), (3.0, true), (0.5, true)],
        )
        .unwrap();
        let fit = fit_cox(&s, CoxModel::Tvhr, &CoxOptions::default()).unwrap();
        assert!(schoenfeld_test(&s, &fit).is_err());
    }

    #[test]
    fn single_covariate_global_equals_marginal() {
        let s = StudyDataset::two_arm(
            "a",
            &[(0.2, true), (0.9, true), (1.7, true), (2.2, false), (3.1, true)],
            &[(0.4, true), (1.2, false), (1.9, true), (2.8, true), (4.0, true)],
        )
        .unwrap();
        let fit = fit_cox(&s, CoxModel::Ph, &CoxOptions::default()).unwrap();
        let test = schoenfeld_test(&s, &fit).unwrap();
        assert_eq!(test.global.df, 1);
        assert!((test.global.chisq - test.covariates[0].chisq).abs() < 1e-10);
        assert!((0.0..=1.0).contains(&test.global.p_value));
        assert_eq!(test.residuals.len(), 8);
    }
}
