//! Individual participant data: loading, validation and the evidence network.
//!
//! Treatments are indexed densely in lexicographic order with the nominated
//! reference moved to index 0 (displayed as treatment 1). Within each study the
//! arms are ordered by global treatment index, so arm 0 is the study-specific
//! reference.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One participant's raw follow-up as read from file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalRecord {
    pub study: String,
    pub treatment: String,
    /// Follow-up time in years.
    pub time: f64,
    pub event: bool,
}

/// A participant inside a [`StudyDataset`], tagged with the position of its arm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmRecord {
    pub arm: usize,
    pub time: f64,
    pub event: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyDataset {
    pub id: String,
    /// Treatment labels in arm order; arm 0 is the study reference.
    pub arms: Vec<String>,
    pub records: Vec<ArmRecord>,
}

impl StudyDataset {
    /// Builds a study, checking the basic record invariants.
    pub fn new(id: impl Into<String>, arms: Vec<String>, records: Vec<ArmRecord>) -> Result<Self> {
        let id = id.into();
        let study = StudyDataset { id, arms, records };
        if study.arms.len() < 2 {
            return Err(Error::InvalidNetwork(format!(
                "study `{}` has fewer than two arms",
                study.id
            )));
        }
        for (i, r) in study.records.iter().enumerate() {
            if r.arm >= study.arms.len() {
                return Err(Error::InvalidNetwork(format!(
                    "study `{}` record {i} refers to arm {} of {}",
                    study.id,
                    r.arm,
                    study.arms.len()
                )));
            }
            if !(r.time.is_finite() && r.time > 0.0) {
                return Err(Error::NonPositiveTime(r.time));
            }
        }
        let counts = study.arm_sizes();
        if let Some(k) = counts.iter().position(|&c| c == 0) {
            return Err(Error::InvalidNetwork(format!(
                "study `{}` arm `{}` has no records",
                study.id, study.arms[k]
            )));
        }
        Ok(study)
    }

    /// Convenience constructor for a two-arm study from `(time, event)` pairs.
    pub fn two_arm(
        id: impl Into<String>,
        control: &[(f64, bool)],
        treated: &[(f64, bool)],
    ) -> Result<Self> {
        let records = control
            .iter()
            .map(|&(time, event)| ArmRecord { arm: 0, time, event })
            .chain(
                treated
                    .iter()
                    .map(|&(time, event)| ArmRecord { arm: 1, time, event }),
            )
            .collect();
        Self::new(id, vec!["control".into(), "treatment".into()], records)
    }

    pub fn n_arms(&self) -> usize {
        self.arms.len()
    }

    pub fn arm_sizes(&self) -> Vec<usize> {
        let mut counts = vec![0; self.arms.len()];
        for r in &self.records {
            counts[r.arm] += 1;
        }
        counts
    }

    pub fn arm_events(&self) -> Vec<usize> {
        let mut counts = vec![0; self.arms.len()];
        for r in self.records.iter().filter(|r| r.event) {
            counts[r.arm] += 1;
        }
        counts
    }

    pub fn n_events(&self) -> usize {
        self.records.iter().filter(|r| r.event).count()
    }

    pub fn max_time(&self) -> f64 {
        self.records.iter().map(|r| r.time).fold(0.0, f64::max)
    }

    /// Records of the given arms only, relabelled `0..arms.len()` in the given order.
    pub fn subset(&self, arms: &[usize]) -> Result<StudyDataset> {
        let labels = arms.iter().map(|&a| self.arms[a].clone()).collect();
        let records = self
            .records
            .iter()
            .filter_map(|r| {
                arms.iter().position(|&a| a == r.arm).map(|k| ArmRecord {
                    arm: k,
                    time: r.time,
                    event: r.event,
                })
            })
            .collect();
        StudyDataset::new(self.id.clone(), labels, records)
    }

    /// Swaps the roles of two arms (the relabelling used by symmetry checks).
    pub fn with_arms_swapped(&self, a: usize, b: usize) -> StudyDataset {
        let mut out = self.clone();
        out.arms.swap(a, b);
        for r in &mut out.records {
            if r.arm == a {
                r.arm = b;
            } else if r.arm == b {
                r.arm = a;
            }
        }
        out
    }

    /// Multiplies every follow-up time by `factor`.
    pub fn with_time_scaled(&self, factor: f64) -> StudyDataset {
        let mut out = self.clone();
        for r in &mut out.records {
            r.time *= factor;
        }
        out
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeUnit {
    Days,
    Weeks,
    Months,
    #[default]
    Years,
}

impl TimeUnit {
    /// Divisor converting a time in this unit into years.
    pub fn per_year(self) -> f64 {
        match self {
            TimeUnit::Days => 365.25,
            TimeUnit::Weeks => 365.25 / 7.0,
            TimeUnit::Months => 12.0,
            TimeUnit::Years => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnNames {
    pub study: String,
    pub treatment: String,
    pub time: String,
    pub event: String,
}

impl Default for ColumnNames {
    fn default() -> Self {
        ColumnNames {
            study: "study".into(),
            treatment: "treatment".into(),
            time: "time".into(),
            event: "event".into(),
        }
    }
}

/// Data loading options, usually read from the JSON config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    pub time_unit: TimeUnit,
    /// Global reference treatment; defaults to the lexicographically first label.
    pub reference: Option<String>,
    pub columns: ColumnNames,
    pub delimiter: char,
    /// `None` detects a header by looking for the time column name in the first row.
    pub has_header: Option<bool>,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            time_unit: TimeUnit::Years,
            reference: None,
            columns: ColumnNames::default(),
            delimiter: ',',
            has_header: None,
        }
    }
}

impl DataConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

/// Studies, treatments and the arm-to-treatment map.
#[derive(Debug, Clone, PartialEq)]
pub struct EvidenceNetwork {
    /// Treatment labels; index 0 is the global reference.
    pub treatments: Vec<String>,
    pub studies: Vec<StudyDataset>,
    /// `arm_map[i][k]` is the treatment index of arm `k` of study `i`.
    pub arm_map: Vec<Vec<usize>>,
}

impl EvidenceNetwork {
    /// Assembles a network from raw records.
    ///
    /// Studies are sorted by id (numerically when every id is an integer) and
    /// records within a study by arm then time, so the input row order never
    /// influences any estimate.
    pub fn from_records(records: &[SurvivalRecord], reference: Option<&str>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::InvalidNetwork("no records".into()));
        }
        for (row, r) in records.iter().enumerate() {
            if !(r.time.is_finite() && r.time > 0.0) {
                return Err(Error::InvalidRecord {
                    row: row + 1,
                    message: format!("time must be positive, got {}", r.time),
                });
            }
        }
        let labels: BTreeSet<&str> = records.iter().map(|r| r.treatment.as_str()).collect();
        let mut treatments: Vec<String> = labels.into_iter().map(str::to_owned).collect();
        if let Some(reference) = reference {
            let pos = treatments
                .iter()
                .position(|t| t == reference)
                .ok_or_else(|| Error::UnknownTreatment(reference.to_owned()))?;
            let r = treatments.remove(pos);
            treatments.insert(0, r);
        }
        let index: BTreeMap<&str, usize> = treatments
            .iter()
            .enumerate()
            .map(|(i, t)| (t.as_str(), i))
            .collect();

        let mut by_study: BTreeMap<&str, Vec<&SurvivalRecord>> = BTreeMap::new();
        for r in records {
            by_study.entry(r.study.as_str()).or_default().push(r);
        }
        let mut ids: Vec<&str> = by_study.keys().copied().collect();
        sort_study_ids(&mut ids);

        let mut studies = Vec::with_capacity(ids.len());
        let mut arm_map = Vec::with_capacity(ids.len());
        for id in ids {
            let rows = &by_study[id];
            let present: BTreeSet<usize> = rows.iter().map(|r| index[r.treatment.as_str()]).collect();
            let arms: Vec<usize> = present.into_iter().collect();
            let mut recs: Vec<ArmRecord> = rows
                .iter()
                .map(|r| ArmRecord {
                    arm: arms.binary_search(&index[r.treatment.as_str()]).unwrap(),
                    time: r.time,
                    event: r.event,
                })
                .collect();
            recs.sort_by(|a, b| {
                (a.arm, a.time, a.event)
                    .partial_cmp(&(b.arm, b.time, b.event))
                    .unwrap()
            });
            let labels = arms.iter().map(|&t| treatments[t].clone()).collect();
            studies.push(StudyDataset::new(id, labels, recs)?);
            arm_map.push(arms);
        }

        let net = EvidenceNetwork {
            treatments,
            studies,
            arm_map,
        };
        if let Some(f) = validate_network(&net)
            .into_iter()
            .find(|f| f.severity == Severity::Fatal)
        {
            return Err(match f.kind {
                FindingKind::Disconnected => Error::Disconnected(f.message),
                _ => Error::InvalidNetwork(f.message),
            });
        }
        Ok(net)
    }

    pub fn n_treatments(&self) -> usize {
        self.treatments.len()
    }

    pub fn n_studies(&self) -> usize {
        self.studies.len()
    }

    pub fn n_records(&self) -> usize {
        self.studies.iter().map(|s| s.records.len()).sum()
    }

    pub fn study_index(&self, id: &str) -> Result<usize> {
        self.studies
            .iter()
            .position(|s| s.id == id)
            .ok_or_else(|| Error::UnknownStudy(id.to_owned()))
    }

    pub fn treatment_index(&self, label: &str) -> Result<usize> {
        self.treatments
            .iter()
            .position(|t| t == label)
            .ok_or_else(|| Error::UnknownTreatment(label.to_owned()))
    }

    pub fn multi_arm_studies(&self) -> Vec<&str> {
        self.studies
            .iter()
            .filter(|s| s.n_arms() > 2)
            .map(|s| s.id.as_str())
            .collect()
    }

    /// Flattens the network back to raw records, times in years.
    pub fn to_records(&self) -> Vec<SurvivalRecord> {
        self.studies
            .iter()
            .flat_map(|s| {
                s.records.iter().map(move |r| SurvivalRecord {
                    study: s.id.clone(),
                    treatment: s.arms[r.arm].clone(),
                    time: r.time,
                    event: r.event,
                })
            })
            .collect()
    }

    /// Writes the network as `study,treatment,time,event` CSV in years.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["study", "treatment", "time", "event"])?;
        for r in self.to_records() {
            w.write_record([
                r.study,
                r.treatment,
                format!("{:?}", r.time),
                (r.event as u8).to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

fn sort_study_ids(ids: &mut [&str]) {
    if ids.iter().all(|id| id.parse::<i64>().is_ok()) {
        ids.sort_by_key(|id| id.parse::<i64>().unwrap());
    } else {
        ids.sort();
    }
}

/// Reads IPD from a delimited file.
pub fn load_ipd(path: &Path, config: &DataConfig) -> Result<EvidenceNetwork> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let records = parse_ipd(&text, config)?;
    EvidenceNetwork::from_records(&records, config.reference.as_deref())
}

/// Parses delimited IPD text into records, converting times to years.
pub fn parse_ipd(text: &str, config: &DataConfig) -> Result<Vec<SurvivalRecord>> {
    if !config.delimiter.is_ascii() {
        return Err(Error::Config("delimiter must be a single ASCII character".into()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(config.delimiter as u8)
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut rows = reader.records().peekable();

    let cols = &config.columns;
    let first = match rows.peek() {
        Some(Ok(r)) => r.clone(),
        Some(Err(_)) => return Err(rows.next().unwrap().unwrap_err().into()),
        None => return Ok(Vec::new()),
    };
    let header = config
        .has_header
        .unwrap_or_else(|| first.iter().any(|f| f.eq_ignore_ascii_case(&cols.time)));
    let positions = if header {
        let find = |name: &str| {
            first
                .iter()
                .position(|f| f.eq_ignore_ascii_case(name))
                .ok_or_else(|| Error::MissingColumn(name.to_owned()))
        };
        let p = [
            find(&cols.study)?,
            find(&cols.treatment)?,
            find(&cols.time)?,
            find(&cols.event)?,
        ];
        rows.next();
        p
    } else {
        [0, 1, 2, 3]
    };

    let per_year = config.time_unit.per_year();
    let mut out = Vec::new();
    for (i, row) in rows.enumerate() {
        let line = i + 1 + header as usize;
        let row = row?;
        if row.iter().all(str::is_empty) {
            continue;
        }
        let field = |k: usize, name: &str| {
            row.get(positions[k]).ok_or_else(|| Error::InvalidRecord {
                row: line,
                message: format!("missing field `{name}`"),
            })
        };
        let study = field(0, &cols.study)?.to_owned();
        let treatment = field(1, &cols.treatment)?.to_owned();
        let raw_time = field(2, &cols.time)?;
        let time: f64 = raw_time.parse().map_err(|_| Error::InvalidRecord {
            row: line,
            message: format!("non-numeric time `{raw_time}`"),
        })?;
        if !(time.is_finite() && time > 0.0) {
            return Err(Error::InvalidRecord {
                row: line,
                message: format!("time must be positive, got {raw_time}"),
            });
        }
        let raw_event = field(3, &cols.event)?;
        let event = match raw_event {
            "1" => true,
            "0" => false,
            other => {
                return Err(Error::InvalidRecord {
                    row: line,
                    message: format!("event must be 0 or 1, got `{other}`"),
                })
            }
        };
        if study.is_empty() || treatment.is_empty() {
            return Err(Error::InvalidRecord {
                row: line,
                message: "empty study or treatment label".into(),
            });
        }
        out.push(SurvivalRecord {
            study,
            treatment,
            time: time / per_year,
            event,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Warning,
    Fatal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FindingKind {
    Disconnected,
    TooFewArms,
    EmptyArm,
    NoEventsInArm,
    BadTime,
    ArmOrder,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Finding {
    pub severity: Severity,
    pub kind: FindingKind,
    pub study: Option<String>,
    pub message: String,
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Warning => "warning",
            Severity::Fatal => "fatal",
        };
        write!(f, "{sev}: {}", self.message)
    }
}

/// Checks every network invariant. An empty result means the network is valid
/// and every arm has at least one event.
pub fn validate_network(net: &EvidenceNetwork) -> Vec<Finding> {
    let mut out = Vec::new();
    let mut push = |severity, kind, study: Option<&str>, message: String| {
        out.push(Finding {
            severity,
            kind,
            study: study.map(str::to_owned),
            message,
        })
    };

    for (i, study) in net.studies.iter().enumerate() {
        let id = Some(study.id.as_str());
        if study.n_arms() < 2 {
            push(
                Severity::Fatal,
                FindingKind::TooFewArms,
                id,
                format!("study `{}` has fewer than two arms", study.id),
            );
        }
        let map = net.arm_map.get(i).map(Vec::as_slice).unwrap_or(&[]);
        if map.len() != study.n_arms() || map.windows(2).any(|w| w[0] >= w[1]) {
            push(
                Severity::Fatal,
                FindingKind::ArmOrder,
                id,
                format!("study `{}` arms are not ordered by treatment index", study.id),
            );
        }
        let sizes = study.arm_sizes();
        let events = study.arm_events();
        for (k, label) in study.arms.iter().enumerate() {
            if sizes[k] == 0 {
                push(
                    Severity::Fatal,
                    FindingKind::EmptyArm,
                    id,
                    format!("study `{}` arm `{label}` has no records", study.id),
                );
            } else if events[k] == 0 {
                push(
                    Severity::Warning,
                    FindingKind::NoEventsInArm,
                    id,
                    format!("study `{}`: no events in arm `{label}`", study.id),
                );
            }
        }
        if study.records.iter().any(|r| !(r.time.is_finite() && r.time > 0.0)) {
            push(
                Severity::Fatal,
                FindingKind::BadTime,
                id,
                format!("study `{}` has non-positive follow-up times", study.id),
            );
        }
    }

    let unreachable = unreachable_treatments(net);
    if !unreachable.is_empty() {
        let names: Vec<&str> = unreachable.iter().map(|&t| net.treatments[t].as_str()).collect();
        push(
            Severity::Fatal,
            FindingKind::Disconnected,
            None,
            format!(
                "treatments not reachable from `{}`: {}",
                net.treatments.first().map(String::as_str).unwrap_or(""),
                names.join(", ")
            ),
        );
    }
    out
}

fn unreachable_treatments(net: &EvidenceNetwork) -> Vec<usize> {
    let n = net.n_treatments();
    if n == 0 {
        return Vec::new();
    }
    let mut adjacency = vec![BTreeSet::new(); n];
    for arms in &net.arm_map {
        for &a in arms {
            for &b in arms {
                if a != b && a < n && b < n {
                    adjacency[a].insert(b);
                }
            }
        }
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(t) = stack.pop() {
        for &u in &adjacency[t] {
            if !seen[u] {
                seen[u] = true;
                stack.push(u);
            }
        }
    }
    (0..n).filter(|&t| !seen[t]).collect()
}

/// Arm of a study together with its global treatment index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrderedArm {
    pub position: usize,
    pub treatment: usize,
    pub label: String,
}

/// Arms of `study_id` sorted by global treatment index; the first entry is the
/// study-specific reference.
pub fn arm_ordering(net: &EvidenceNetwork, study_id: &str) -> Result<Vec<OrderedArm>> {
    let i = net.study_index(study_id)?;
    let mut arms: Vec<OrderedArm> = net.arm_map[i]
        .iter()
        .enumerate()
        .map(|(k, &t)| OrderedArm {
            position: k,
            treatment: t,
            label: net.treatments[t].clone(),
        })
        .collect();
    arms.sort_by_key(|a| a.treatment);
    Ok(arms)
}
