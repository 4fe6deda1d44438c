//! Per-study contrast estimates: the hand-off between Cox fitting and
//! evidence synthesis.
//!
//! Coefficients are stored contrast-major: for a study with arms
//! `(t1, t2, ..., tK)` and `m` coefficients per contrast, entry
//! `(k - 2) * m + j` is component `j` of arm `k` against arm 1.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::thread;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::EvidenceNetwork;
use crate::error::{Error, Result};
use crate::linalg::is_positive_definite;
use crate::survival::{fit_cox, CoxFit, CoxModel, CoxOptions, Ties};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub log_partial_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
    pub n_events: usize,
    pub ties: Ties,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyEstimate {
    pub study: String,
    /// Treatment labels in arm order; the first is the study reference.
    pub treatments: Vec<String>,
    pub coefficients: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    /// Longest follow-up in the study, years.
    #[serde(default)]
    pub max_time: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitSummary>,
}

impl StudyEstimate {
    pub fn from_fit(fit: &CoxFit) -> Self {
        StudyEstimate {
            study: fit.study.clone(),
            treatments: fit.arms.clone(),
            coefficients: fit.coefficients.iter().copied().collect(),
            covariance: fit
                .covariance
                .row_iter()
                .map(|r| r.iter().copied().collect())
                .collect(),
            max_time: Some(fit.max_time),
            fit: Some(FitSummary {
                log_partial_likelihood: fit.log_partial_likelihood,
                iterations: fit.iterations,
                converged: fit.converged,
                n_events: fit.n_events,
                ties: fit.ties,
            }),
        }
    }

    pub fn y(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.coefficients)
    }

    pub fn s(&self) -> DMatrix<f64> {
        let n = self.covariance.len();
        DMatrix::from_fn(n, n, |i, j| self.covariance[i].get(j).copied().unwrap_or(f64::NAN))
    }

    pub fn n_contrasts(&self) -> usize {
        self.treatments.len().saturating_sub(1)
    }

    /// Reorders the arms; `order[k]` is the old position placed at position `k`.
    fn rereference(&mut self, order: &[usize], m: usize) {
        let n_c = self.n_contrasts();
        let dim = n_c * m;
        let mut a: DMatrix<f64> = DMatrix::zeros(dim, dim);
        let old = |arm: usize, j: usize| if arm == 0 { None } else { Some((arm - 1) * m + j) };
        for k in 1..order.len() {
            for j in 0..m {
                let row = (k - 1) * m + j;
                if let Some(c) = old(order[k], j) {
                    a[(row, c)] += 1.0;
                }
                if let Some(c) = old(order[0], j) {
                    a[(row, c)] -= 1.0;
                }
            }
        }
        let y = &a * self.y();
        let s = &a * self.s() * a.transpose();
        let s = (&s + s.transpose()) * 0.5;
        self.coefficients = y.iter().copied().collect();
        self.covariance = s.row_iter().map(|r| r.iter().copied().collect()).collect();
        self.treatments = order.iter().map(|&k| self.treatments[k].clone()).collect();
    }
}

/// Stage-1 output for a whole network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateSet {
    pub model: CoxModel,
    /// Always "years".
    pub time_unit: String,
    /// Global treatment order; the first is the network reference.
    pub treatments: Vec<String>,
    pub studies: Vec<StudyEstimate>,
}

impl EstimateSet {
    pub fn new(model: CoxModel, treatments: Vec<String>, studies: Vec<StudyEstimate>) -> Result<Self> {
        let mut set = EstimateSet {
            model,
            time_unit: "years".into(),
            treatments,
            studies,
        };
        set.normalise()?;
        Ok(set)
    }

    /// Coefficients per contrast.
    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    pub fn treatment_index(&self, label: &str) -> Result<usize> {
        self.treatments
            .iter()
            .position(|t| t == label)
            .ok_or_else(|| Error::UnknownTreatment(label.to_owned()))
    }

    /// Global treatment indices of each study's arms.
    pub fn arm_map(&self) -> Result<Vec<Vec<usize>>> {
        self.studies
            .iter()
            .map(|s| s.treatments.iter().map(|t| self.treatment_index(t)).collect())
            .collect()
    }

    /// Checks shapes and positive definiteness, reorders every study so its
    /// reference is the lowest-indexed treatment, and checks connectivity.
    fn normalise(&mut self) -> Result<()> {
        let m = self.dim();
        let labels: BTreeSet<&String> = self.treatments.iter().collect();
        if labels.len() != self.treatments.len() || self.treatments.len() < 2 {
            return Err(Error::InvalidNetwork("treatment list must have >= 2 distinct labels".into()));
        }
        if self.studies.is_empty() {
            return Err(Error::InvalidNetwork("no studies".into()));
        }
        let global: Vec<String> = self.treatments.clone();
        for s in &mut self.studies {
            let dim = s.n_contrasts() * m;
            if s.treatments.len() < 2 {
                return Err(Error::InvalidNetwork(format!("study `{}` has fewer than two arms", s.study)));
            }
            if s.coefficients.len() != dim
                || s.covariance.len() != dim
                || s.covariance.iter().any(|r| r.len() != dim)
            {
                return Err(Error::InvalidNetwork(format!(
                    "study `{}`: expected {dim} coefficients and a {dim}x{dim} covariance",
                    s.study
                )));
            }
            if s.coefficients.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidNetwork(format!("study `{}`: non-finite coefficient", s.study)));
            }
            if !is_positive_definite(&s.s()) {
                return Err(Error::NotPositiveDefinite { study: s.study.clone() });
            }
            let idx: Vec<usize> = s
                .treatments
                .iter()
                .map(|t| {
                    global
                        .iter()
                        .position(|g| g == t)
                        .ok_or_else(|| Error::UnknownTreatment(t.clone()))
                })
                .collect::<Result<_>>()?;
            let mut order: Vec<usize> = (0..idx.len()).collect();
            order.sort_by_key(|&k| idx[k]);
            if order.windows(2).any(|w| idx[w[0]] == idx[w[1]]) {
                return Err(Error::InvalidNetwork(format!("study `{}` repeats a treatment", s.study)));
            }
            if order.iter().enumerate().any(|(k, &o)| k != o) {
                s.rereference(&order, m);
            }
        }
        let net = EvidenceNetwork {
            treatments: self.treatments.clone(),
            studies: Vec::new(),
            arm_map: self.arm_map()?,
        };
        if let Some(f) = crate::data::validate_network(&net)
            .into_iter()
            .find(|f| f.kind == crate::data::FindingKind::Disconnected)
        {
            return Err(Error::Disconnected(f.message));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let raw: EstimateSet = serde_json::from_str(&text)?;
        EstimateSet::new(raw.model, raw.treatments, raw.studies)
    }

    /// Reads one row per two-arm study:
    /// `study,reference,treatment,log_hr,var_log_hr[,interaction,var_interaction,cov]`.
    /// The interaction columns, when present on every row, make a
    /// time-varying set.
    pub fn read_aggregate_csv(path: &Path, reference: Option<&str>) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
        let header: Vec<String> = r.headers()?.iter().map(|h| h.to_ascii_lowercase()).collect();
        let col = |name: &str| header.iter().position(|h| h == name);
        let need = |name: &str| col(name).ok_or_else(|| Error::MissingColumn(name.to_owned()));
        let (c_study, c_ref, c_trt, c_y1, c_v11) = (
            need("study")?,
            need("reference")?,
            need("treatment")?,
            need("log_hr")?,
            need("var_log_hr")?,
        );
        let tv = match (col("interaction"), col("var_interaction"), col("cov")) {
            (Some(a), Some(b), Some(c)) => Some((a, b, c)),
            _ => None,
        };
        let mut rows = Vec::new();
        let mut all_tv = tv.is_some();
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let line = i + 2;
            let num = |c: usize| -> Result<Option<f64>> {
                let f = rec.get(c).unwrap_or("");
                if f.is_empty() {
                    return Ok(None);
                }
                f.parse().map(Some).map_err(|_| Error::InvalidRecord {
                    row: line,
                    message: format!("non-numeric value `{f}`"),
                })
            };
            let req = |c: usize| {
                num(c)?.ok_or_else(|| Error::InvalidRecord {
                    row: line,
                    message: format!("missing `{}`", header[c]),
                })
            };
            let y1 = req(c_y1)?;
            let v11 = req(c_v11)?;
            let extra = match tv {
                Some((a, b, c)) => match (num(a)?, num(b)?, num(c)?) {
                    (Some(y2), Some(v22), Some(v12)) => Some((y2, v22, v12)),
                    _ => {
                        all_tv = false;
                        None
                    }
                },
                None => None,
            };
            rows.push((
                rec.get(c_study).unwrap_or("").to_owned(),
                rec.get(c_ref).unwrap_or("").to_owned(),
                rec.get(c_trt).unwrap_or("").to_owned(),
                y1,
                v11,
                extra,
            ));
        }
        let model = if all_tv && !rows.is_empty() { CoxModel::Tvhr } else { CoxModel::Ph };
        let mut seen = BTreeSet::new();
        let mut labels = BTreeSet::new();
        let mut studies = Vec::new();
        for (study, rf, trt, y1, v11, extra) in rows {
            if !seen.insert(study.clone()) {
                return Err(Error::InvalidNetwork(format!(
                    "study `{study}` appears twice; multi-arm studies need the JSON estimate format"
                )));
            }
            labels.insert(rf.clone());
            labels.insert(trt.clone());
            let (coefficients, covariance) = match (model, extra) {
                (CoxModel::Tvhr, Some((y2, v22, v12))) => (vec![y1, y2], vec![vec![v11, v12], vec![v12, v22]]),
                _ => (vec![y1], vec![vec![v11]]),
            };
            studies.push(StudyEstimate {
                study,
                treatments: vec![rf, trt],
                coefficients,
                covariance,
                max_time: None,
                fit: None,
            });
        }
        let treatments = order_treatments(labels.into_iter().collect(), reference)?;
        EstimateSet::new(model, treatments, studies)
    }
}

/// Lexicographic order with the reference moved to the front.
pub fn order_treatments(mut labels: Vec<String>, reference: Option<&str>) -> Result<Vec<String>> {
    labels.sort();
    labels.dedup();
    if let Some(r) = reference {
        let pos = labels
            .iter()
            .position(|t| t == r)
            .ok_or_else(|| Error::UnknownTreatment(r.to_owned()))?;
        let t = labels.remove(pos);
        labels.insert(0, t);
    }
    Ok(labels)
}

/// A failed per-study fit.
#[derive(Debug)]
pub struct FitFailure {
    pub study: String,
    pub error: Error,
}

/// Fits every study of the network jointly over its arms.
///
/// With `skip_failed` unset the first failure (in study order) aborts.
/// Studies are fitted on parallel threads; results do not depend on it.
pub fn fit_network(
    net: &EvidenceNetwork,
    model: CoxModel,
    options: &CoxOptions,
    skip_failed: bool,
) -> Result<(EstimateSet, Vec<FitFailure>)> {
    let workers = thread::available_parallelism().map(|n| n.get()).unwrap_or(1).max(1);
    let chunk = net.studies.len().div_ceil(workers).max(1);
    let fits: Vec<Result<CoxFit>> = thread::scope(|scope| {
        let handles: Vec<_> = net
            .studies
            .chunks(chunk)
            .map(|studies| {
                scope.spawn(move || {
                    studies
                        .iter()
                        .map(|s| fit_cox(s, model, options))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("fit thread panicked")).collect()
    });

    let mut estimates = Vec::new();
    let mut failures = Vec::new();
    for (study, fit) in net.studies.iter().zip(fits) {
        match fit {
            Ok(f) => estimates.push(StudyEstimate::from_fit(&f)),
            Err(e) if skip_failed => failures.push(FitFailure {
                study: study.id.clone(),
                error: e,
            }),
            Err(e) => return Err(e),
        }
    }
    if estimates.is_empty() {
        return Err(Error::InvalidNetwork("every study fit failed".into()));
    }
    let set = EstimateSet::new(model, net.treatments.clone(), estimates)?;
    Ok((set, failures))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn est(study: &str, treatments: &[&str], y: Vec<f64>, s: Vec<Vec<f64>>) -> StudyEstimate {
        StudyEstimate {
            study: study.into(),
            treatments: treatments.iter().map(|t| t.to_string()).collect(),
            coefficients: y,
            covariance: s,
            max_time: None,
            fit: None,
        }
    }

    #[test]
    fn reversed_two_arm_study_is_negated() {
        let s = est("1", &["B", "A"], vec![0.3, -0.1], vec![vec![0.04, 0.01], vec![0.01, 0.02]]);
        let set = EstimateSet::new(CoxModel::Tvhr, vec!["A".into(), "B".into()], vec![s]).unwrap();
        let s = &set.studies[0];
        assert_eq!(s.treatments, ["A", "B"]);
        assert_eq!(s.coefficients, [-0.3, 0.1]);
        assert_eq!(s.covariance, vec![vec![0.04, 0.01], vec![0.01, 0.02]]);
    }

    #[test]
    fn three_arm_rereference() {
        // arms (B, A, C): y = (A-B, C-B) = (1, 3); want (B-A, C-A) = (-1, 2)
        let s = est("1", &["B", "A", "C"], vec![1.0, 3.0], vec![vec![2.0, 1.0], vec![1.0, 2.0]]);
        let set = EstimateSet::new(
            CoxModel::Ph,
            vec!["A".into(), "B".into(), "C".into()],
            vec![s],
        )
        .unwrap();
        let s = &set.studies[0];
        assert_eq!(s.treatments, ["A", "B", "C"]);
        assert_eq!(s.coefficients, [-1.0, 2.0]);
        // var(-y1) = 2, var(y2 - y1) = 2 + 2 - 2 = 2, cov(-y1, y2 - y1) = -1 + 2 = 1
        assert_eq!(s.covariance, vec![vec![2.0, 1.0], vec![1.0, 2.0]]);
    }

    #[test]
    fn non_pd_covariance_names_study() {
        let s = est("bad", &["A", "B"], vec![0.0], vec![vec![-1.0]]);
        let err = EstimateSet::new(CoxModel::Ph, vec!["A".into(), "B".into()], vec![s]).unwrap_err();
        assert!(matches!(err, Error::NotPositiveDefinite { study } if study == "bad"));
    }

    #[test]
    fn disconnected_estimates_rejected() {
        let a = est("1", &["A", "B"], vec![0.0], vec![vec![1.0]]);
        let b = est("2", &["C", "D"], vec![0.0], vec![vec![1.0]]);
        let t = ["A", "B", "C", "D"].map(String::from).to_vec();
        assert!(matches!(
            EstimateSet::new(CoxModel::Ph, t, vec![a, b]),
            Err(Error::Disconnected(_))
        ));
    }

    #[test]
    fn aggregate_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("agg.csv");
        fs::write(
            &path,
            "study,reference,treatment,log_hr,var_log_hr,interaction,var_interaction,cov\n\
             1,ctl,trt,-0.2,0.01,0.1,0.02,0.001\n2,trt,ctl,0.3,0.02,-0.05,0.03,0.002\n",
        )
        .unwrap();
        let set = EstimateSet::read_aggregate_csv(&path, None).unwrap();
        assert_eq!(set.model, CoxModel::Tvhr);
        assert_eq!(set.treatments, ["ctl", "trt"]);
        assert_eq!(set.studies[1].coefficients, [-0.3, 0.05]);

        fs::write(&path, "study,reference,treatment,log_hr,var_log_hr\n1,a,b,0.1,0.04\n").unwrap();
        let set = EstimateSet::read_aggregate_csv(&path, Some("b")).unwrap();
        assert_eq!(set.model, CoxModel::Ph);
        assert_eq!(set.treatments, ["b", "a"]);
        assert_eq!(set.studies[0].coefficients, [-0.1]);
    }

    #[test]
    fn json_round_trip() {
        let s = est("1", &["A", "B"], vec![0.25], vec![vec![0.5]]);
        let set = EstimateSet::new(CoxModel::Ph, vec!["A".into(), "B".into()], vec![s]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.json");
        set.write_json(&path).unwrap();
        assert_eq!(EstimateSet::read_json(&path).unwrap(), set);
    }
}
