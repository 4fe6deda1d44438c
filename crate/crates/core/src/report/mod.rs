//! Run configuration, manifests and the report tables written by the
//! `diagnose`, `ma`, `nma` and `report` pipelines.
//!
//! Every table is a UTF-8 CSV with a fixed column order (see the README);
//! manifests and reports are JSON. Paths stored in a manifest are relative to
//! the directory holding it.

mod commands;
mod tables;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::DataConfig;
use crate::error::{Error, Result};
use crate::mcmc::{DiagnosticsReport, SamplerProtocol, ScalarKernel};
use crate::network::{NmaModelSpec, ProbabilityBestGrid, RankDirection};
use crate::pairwise::{Mode, PairwiseModelSpec};
use crate::survival::{CoxModel, Ties};
use crate::synthesis::{Effects, HeterogeneityPrior, TauPrior};

pub use commands::{cmd_diagnose, cmd_ma, cmd_nma, cmd_report, RunOutcome};
pub use tables::{EffectRow, PhTestRow, RankRow};

/// Prior family for the interaction heterogeneity `tau[2]`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TauPriorChoice {
    #[default]
    Uniform,
    Halfnormal,
}

impl TauPriorChoice {
    pub fn prior(self) -> TauPrior {
        match self {
            TauPriorChoice::Uniform => TauPrior::uniform(),
            TauPriorChoice::Halfnormal => TauPrior::half_normal(),
        }
    }

    pub fn other(self) -> Self {
        match self {
            TauPriorChoice::Uniform => TauPriorChoice::Halfnormal,
            TauPriorChoice::Halfnormal => TauPriorChoice::Uniform,
        }
    }
}

/// Everything that determines a run's outputs besides the input file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    pub protocol: SamplerProtocol,
    /// `tvhr` runs the constant-HR analysis and the time-varying one.
    pub model: CoxModel,
    pub ties: Ties,
    /// Defaults to random effects for `ma` and fixed effects for `nma`.
    pub effects: Option<Effects>,
    pub tau2_prior: TauPriorChoice,
    /// Pairwise only: refit the time-varying model under the other `tau[2]` prior.
    pub sensitivity: bool,
    /// Landmark times in years; defaults depend on the command.
    pub landmarks: Option<Vec<f64>>,
    /// Last month of the probability-best and HR-curve grids.
    pub horizon_months: usize,
    pub direction: RankDirection,
    pub skip_failed: bool,
    /// Significance level for flagging non-proportional hazards.
    pub alpha: f64,
    pub kernel: ScalarKernel,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: DataConfig::default(),
            protocol: SamplerProtocol::paper(20_240_101),
            model: CoxModel::Tvhr,
            ties: Ties::Efron,
            effects: None,
            tau2_prior: TauPriorChoice::Uniform,
            sensitivity: false,
            landmarks: None,
            horizon_months: 60,
            direction: RankDirection::LowerIsBetter,
            skip_failed: false,
            alpha: 0.05,
            kernel: ScalarKernel::Slice,
        }
    }
}

pub const PAIRWISE_LANDMARKS: [f64; 7] = [0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5];
pub const NETWORK_LANDMARKS: [f64; 4] = [0.5, 1.0, 2.0, 5.0];

impl RunConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serialises");
        hex(&Sha256::digest(json.as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        self.protocol.validate().map_err(|e| Error::Config(e.to_string()))?;
        if let Some(l) = &self.landmarks {
            if let Some(t) = l.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
                return Err(Error::Config(format!("landmark {t} is not a positive time")));
            }
        }
        if self.horizon_months == 0 {
            return Err(Error::Config("horizon must be at least one month".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config("alpha must lie in (0, 1)".into()));
        }
        Ok(())
    }

    fn heterogeneity(&self) -> HeterogeneityPrior {
        HeterogeneityPrior {
            tau: [TauPrior::uniform(), self.tau2_prior.prior()],
            ..Default::default()
        }
    }

    pub fn pairwise_spec(&self) -> PairwiseModelSpec {
        PairwiseModelSpec {
            effects: self.effects.unwrap_or(Effects::Random),
            heterogeneity: self.heterogeneity(),
            kernel: self.kernel,
        }
    }

    pub fn network_spec(&self) -> NmaModelSpec {
        NmaModelSpec {
            effects: self.effects.unwrap_or(Effects::Fixed),
            heterogeneity: self.heterogeneity(),
            kernel: self.kernel,
        }
    }

    /// Monthly grid `1/12, 2/12, ...` up to the horizon, in years.
    pub fn monthly_grid(&self) -> Vec<f64> {
        (1..=self.horizon_months).map(|m| m as f64 / 12.0).collect()
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub(crate) fn file_sha256(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex(&Sha256::digest(&bytes)))
}

/// Seconds since the epoch, or `SOURCE_DATE_EPOCH` when set.
pub(crate) fn timestamp() -> u64 {
    std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or_else(|| SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Diagnose,
    Ma,
    Nma,
    Report,
}

/// `final` only when every monitored parameter passes the R-hat and ESS gates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportStatus {
    Final,
    Provisional,
}

impl ReportStatus {
    pub fn gate(reports: &[DiagnosticsReport]) -> Self {
        if reports.iter().all(DiagnosticsReport::all_pass) {
            ReportStatus::Final
        } else {
            ReportStatus::Provisional
        }
    }

    pub fn exit_code(self) -> i32 {
        match self {
            ReportStatus::Final => 0,
            ReportStatus::Provisional => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputFile {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum AnalysisSpec {
    Pairwise { mode: Mode, spec: PairwiseModelSpec },
    Network { spec: NmaModelSpec },
}

/// One stage-2 fit and the files needed to rebuild it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisRecord {
    pub name: String,
    pub spec: AnalysisSpec,
    pub estimates: String,
    pub draws: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: Command,
    pub version: String,
    pub inputs: Vec<InputFile>,
    pub config_hash: String,
    pub config: RunConfig,
    pub seed: u64,
    pub protocol: SamplerProtocol,
    pub module_versions: BTreeMap<String, String>,
    pub started: u64,
    pub finished: u64,
    pub status: Option<ReportStatus>,
    pub analyses: Vec<AnalysisRecord>,
    /// Output files by stage.
    pub outputs: BTreeMap<String, Vec<String>>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

impl RunManifest {
    pub(crate) fn new(command: Command, config: &RunConfig, inputs: Vec<InputFile>) -> Self {
        let version = env!("CARGO_PKG_VERSION").to_string();
        let module_versions = [
            "data",
            "survival",
            "mcmc",
            "pairwise",
            "network",
            "report",
        ]
        .into_iter()
        .map(|m| (m.to_string(), version.clone()))
        .collect();
        RunManifest {
            command,
            version,
            inputs,
            config_hash: config.hash(),
            config: config.clone(),
            seed: config.protocol.seed,
            protocol: config.protocol,
            module_versions,
            started: timestamp(),
            finished: 0,
            status: None,
            analyses: Vec::new(),
            outputs: BTreeMap::new(),
        }
    }

    pub(crate) fn add_output(&mut self, stage: &str, dir: &Path, path: &Path) {
        let rel = path.strip_prefix(dir).unwrap_or(path);
        self.outputs
            .entry(stage.to_string())
            .or_default()
            .push(rel.to_string_lossy().replace('\\', "/"));
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))
    }

    pub(crate) fn write(&mut self, dir: &Path) -> Result<PathBuf> {
        self.finished = timestamp();
        let path = dir.join(MANIFEST_FILE);
        let json = serde_json::to_string_pretty(self)?;
        fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    /// Every listed output, with paths resolved against `dir`.
    pub fn output_paths(&self, dir: &Path) -> Vec<PathBuf> {
        self.outputs.values().flatten().map(|p| dir.join(p)).collect()
    }

    /// Fails on the first listed file that is missing.
    pub fn check_complete(&self, dir: &Path) -> Result<()> {
        let listed = self
            .output_paths(dir)
            .into_iter()
            .chain(self.analyses.iter().flat_map(|a| {
                std::iter::once(dir.join(&a.estimates)).chain(a.draws.iter().map(|d| dir.join(d)))
            }));
        for p in listed {
            if !p.is_file() {
                return Err(Error::Manifest(format!("incomplete manifest: `{}` is missing", p.display())));
            }
        }
        if self.finished == 0 {
            return Err(Error::Manifest("incomplete manifest: run did not finish".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticsRow {
    pub analysis: String,
    pub parameter: String,
    pub rhat: f64,
    pub rhat_classic: f64,
    pub ess: f64,
    pub pass: bool,
}

impl DiagnosticsRow {
    pub fn rows(analysis: &str, report: &DiagnosticsReport) -> Vec<DiagnosticsRow> {
        report
            .parameters
            .iter()
            .map(|p| DiagnosticsRow {
                analysis: analysis.to_string(),
                parameter: p.name.clone(),
                rhat: p.rhat,
                rhat_classic: p.rhat_classic,
                ess: p.ess,
                pass: p.rhat_pass && p.ess_pass,
            })
            .collect()
    }
}

/// Summary written as `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthesisReport {
    pub command: Command,
    pub status: ReportStatus,
    pub treatments: Vec<String>,
    pub landmark_table: Vec<EffectRow>,
    pub rank_table: Vec<RankRow>,
    pub pbest: Option<ProbabilityBestGrid>,
    pub diagnostics: Vec<DiagnosticsRow>,
    pub ph_tests: Vec<PhTestRow>,
    /// Posterior probability that the pooled log-time interaction is positive.
    pub interaction_positive: Option<f64>,
    pub warnings: Vec<String>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trips_and_hash_is_stable() {
        let c = RunConfig {
            landmarks: Some(vec![0.5, 5.0]),
            ..Default::default()
        };
        let json = serde_json::to_string(&c).unwrap();
        let back: RunConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
        assert_eq!(c.hash().len(), 64);
        let other = RunConfig {
            horizon_months: 61,
            ..c.clone()
        };
        assert_ne!(other.hash(), c.hash());
    }

    #[test]
    fn partial_config_uses_defaults() {
        let c: RunConfig = serde_json::from_str(r#"{"model": "ph", "data": {"time_unit": "months"}}"#).unwrap();
        assert_eq!(c.model, CoxModel::Ph);
        assert_eq!(c.horizon_months, 60);
        assert!(serde_json::from_str::<RunConfig>(r#"{"modle": "ph"}"#).is_err());
    }

    #[test]
    fn monthly_grid_ends_at_horizon() {
        let c = RunConfig {
            horizon_months: 24,
            ..Default::default()
        };
        let g = c.monthly_grid();
        assert_eq!(g.len(), 24);
        assert!((g[23] - 2.0).abs() < 1e-15);
    }
}
