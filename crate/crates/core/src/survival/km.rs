use serde::Serialize;

use crate::data::StudyDataset;
use crate::error::{Error, Result};

/// Product-limit estimate for one arm with one row per distinct observed
/// time, censoring-only times included. `survival[j]` holds from `times[j]`
/// until the next row; before `times[0]` survival is 1.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KmCurve {
    pub arm: String,
    pub times: Vec<f64>,
    pub at_risk: Vec<usize>,
    pub events: Vec<usize>,
    pub censored: Vec<usize>,
    pub survival: Vec<f64>,
}

impl KmCurve {
    pub fn survival_at(&self, t: f64) -> f64 {
        match self.times.partition_point(|&x| x <= t) {
            0 => 1.0,
            j => self.survival[j - 1],
        }
    }
}

/// Kaplan-Meier curve per arm of the study.
pub fn km_estimate(study: &StudyDataset) -> Result<Vec<KmCurve>> {
    (0..study.n_arms())
        .map(|arm| {
            let mut obs: Vec<(f64, bool)> = study
                .records
                .iter()
                .filter(|r| r.arm == arm)
                .map(|r| (r.time, r.event))
                .collect();
            if obs.is_empty() {
                return Err(Error::InsufficientData(format!(
                    "study `{}`: empty arm `{}`",
                    study.id, study.arms[arm]
                )));
            }
            obs.sort_by(|a, b| a.0.total_cmp(&b.0));
            Ok(product_limit(&study.arms[arm], &obs))
        })
        .collect()
}

fn product_limit(arm: &str, obs: &[(f64, bool)]) -> KmCurve {
    let mut curve = KmCurve {
        arm: arm.to_owned(),
        times: Vec::new(),
        at_risk: Vec::new(),
        events: Vec::new(),
        censored: Vec::new(),
        survival: Vec::new(),
    };
    let mut s = 1.0;
    let mut remaining = obs.len();
    let mut i = 0;
    while i < obs.len() {
        let t = obs[i].0;
        let mut d = 0;
        let mut c = 0;
        while i < obs.len() && obs[i].0 == t {
            if obs[i].1 {
                d += 1;
            } else {
                c += 1;
            }
            i += 1;
        }
        s *= 1.0 - d as f64 / remaining as f64;
        curve.times.push(t);
        curve.at_risk.push(remaining);
        curve.events.push(d);
        curve.censored.push(c);
        curve.survival.push(s);
        remaining -= d + c;
    }
    curve
}
