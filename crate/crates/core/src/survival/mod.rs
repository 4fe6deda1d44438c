//! Per-study survival machinery: Kaplan-Meier curves, Cox fits and
//! proportional hazards diagnostics.

pub mod cox;
pub mod km;
pub mod schoenfeld;

pub use cox::{
    fit_cox, fit_cox_ph, fit_cox_tvhr, hr_at_time, hr_at_time_for, CoxEvaluation, CoxFit, CoxModel,
    CoxOptions, CoxProblem, HazardRatio, Ties, Z_975,
};
pub use km::{km_estimate, KmCurve};
pub use schoenfeld::{scaled_residuals, schoenfeld_test, ChiSquareTest, PhTestResult, ResidualPoint};
