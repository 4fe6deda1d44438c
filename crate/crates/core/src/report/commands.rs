use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::tables::*;
use super::{
    file_sha256, AnalysisRecord, AnalysisSpec, Command, DiagnosticsRow, InputFile, ReportStatus, RunConfig,
    RunManifest, SynthesisReport, NETWORK_LANDMARKS, PAIRWISE_LANDMARKS,
};
use crate::data::{parse_ipd, validate_network, EvidenceNetwork, Severity};
use crate::error::{Error, Result};
use crate::estimates::{fit_network, EstimateSet};
use crate::mcmc::export::{read_chain_csvs, write_chain_csvs};
use crate::mcmc::{autocorrelation, diagnose, DiagnosticsReport, PosteriorDraws};
use crate::network::{fit_nma, probability_best_grid, rank_treatments, NmaPosterior, ProbabilityBestGrid};
use crate::pairwise::{
    fit_bivariate_ma, fit_univariate_ma, prior_sensitivity, wide_heterogeneity, HrSummary, Landmark, Mode,
    PairwiseEstimate, PairwisePosterior,
};
use crate::summary::Summary;
use crate::survival::{fit_cox, km_estimate, schoenfeld_test, CoxModel, CoxOptions};
use crate::synthesis::Effects;

const DIAGNOSTIC_LAGS: usize = 20;
const REPORT_LAGS: usize = 50;

/// What a command produced.
#[derive(Debug)]
pub struct RunOutcome {
    pub manifest: PathBuf,
    /// `None` for commands without a sampling stage.
    pub status: Option<ReportStatus>,
    pub report: Option<SynthesisReport>,
    pub warnings: Vec<String>,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        self.status.map_or(0, ReportStatus::exit_code)
    }
}

enum Input {
    Ipd(EvidenceNetwork),
    Estimates(EstimateSet),
}

/// JSON is a stage-1 estimate set; a CSV whose header has `log_hr` is the
/// aggregate format; anything else is IPD.
fn load_input(path: &Path, config: &RunConfig) -> Result<Input> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
        return Ok(Input::Estimates(EstimateSet::read_json(path)?));
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let first = text.lines().next().unwrap_or("").to_ascii_lowercase();
    if first.split(config.data.delimiter).any(|h| h.trim() == "log_hr") {
        return Ok(Input::Estimates(EstimateSet::read_aggregate_csv(
            path,
            config.data.reference.as_deref(),
        )?));
    }
    let records = parse_ipd(&text, &config.data)?;
    Ok(Input::Ipd(EvidenceNetwork::from_records(
        &records,
        config.data.reference.as_deref(),
    )?))
}

fn studies_beyond(max_times: &[Option<f64>], t: f64) -> usize {
    max_times.iter().flatten().filter(|&&m| m < t).count()
}

fn longest(max_times: &[Option<f64>]) -> Option<f64> {
    max_times.iter().flatten().copied().reduce(f64::max)
}

fn extrapolation_warnings(analysis: &str, landmarks: &[f64], max_times: &[Option<f64>]) -> Vec<String> {
    let known = max_times.iter().flatten().count();
    let mut out = Vec::new();
    for &t in landmarks {
        let n = studies_beyond(max_times, t);
        if n == 0 {
            continue;
        }
        let mut msg = format!("{analysis}: landmark {t} years lies beyond the follow-up of {n} of {known} studies");
        if let Some(m) = longest(max_times).filter(|&m| m < t) {
            msg.push_str(&format!(" and beyond the longest follow-up ({m:.2} years)"));
        }
        out.push(msg);
    }
    out
}

/// Comparisons informed by a single study leave heterogeneity to the prior.
fn sparsity_warnings(set: &EstimateSet) -> Vec<String> {
    let mut counts: BTreeMap<(String, String), usize> = BTreeMap::new();
    for s in &set.studies {
        for a in 0..s.treatments.len() {
            for b in a + 1..s.treatments.len() {
                *counts
                    .entry((s.treatments[a].clone(), s.treatments[b].clone()))
                    .or_default() += 1;
            }
        }
    }
    let single = counts.values().filter(|&&c| c < 2).count();
    if single == 0 {
        return Vec::new();
    }
    vec![format!(
        "sparse network: {single} of {} direct comparisons rest on a single study, so the \
         between-study heterogeneity is informed mainly by its prior and random-effects intervals are wide",
        counts.len()
    )]
}

/// Accumulates outputs for one command.
struct Run<'a> {
    dir: &'a Path,
    config: &'a RunConfig,
    manifest: RunManifest,
    warnings: Vec<String>,
    treatments: Vec<String>,
    effects: Vec<EffectRow>,
    ranks: Vec<RankRow>,
    rank_probabilities: Vec<RankProbabilityRow>,
    pbest_rows: Vec<ProbabilityBestRow>,
    pbest: Option<ProbabilityBestGrid>,
    diagnostics: Vec<DiagnosticsRow>,
    diagnostic_reports: Vec<DiagnosticsReport>,
    parameters: Vec<ParameterRow>,
    ph_tests: Vec<PhTestRow>,
    sensitivity: Vec<SensitivityRow>,
    interaction_positive: Option<f64>,
}

impl<'a> Run<'a> {
    fn start(command: Command, input: &Path, config: &'a RunConfig, dir: &'a Path) -> Result<Self> {
        config.validate()?;
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let inputs = vec![InputFile {
            path: input.display().to_string(),
            sha256: file_sha256(input)?,
        }];
        Ok(Run {
            dir,
            config,
            manifest: RunManifest::new(command, config, inputs),
            warnings: Vec::new(),
            treatments: Vec::new(),
            effects: Vec::new(),
            ranks: Vec::new(),
            rank_probabilities: Vec::new(),
            pbest_rows: Vec::new(),
            pbest: None,
            diagnostics: Vec::new(),
            diagnostic_reports: Vec::new(),
            parameters: Vec::new(),
            ph_tests: Vec::new(),
            sensitivity: Vec::new(),
            interaction_positive: None,
        })
    }

    fn options(&self) -> CoxOptions {
        CoxOptions {
            ties: self.config.ties,
            ..Default::default()
        }
    }

    fn table<T: Serialize>(&mut self, stage: &str, name: &str, rows: &[T]) -> Result<()> {
        if rows.is_empty() {
            return Ok(());
        }
        let path = self.dir.join(name);
        write_rows(&path, rows)?;
        self.manifest.add_output(stage, self.dir, &path);
        Ok(())
    }

    fn json<T: Serialize>(&mut self, stage: &str, name: &str, value: &T) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, serde_json::to_string_pretty(value)? + "\n").map_err(|e| Error::io(&path, e))?;
        self.manifest.add_output(stage, self.dir, &path);
        Ok(())
    }

    fn data_warnings(&mut self, net: &EvidenceNetwork) {
        self.warnings.extend(
            validate_network(net)
                .into_iter()
                .filter(|f| f.severity == Severity::Warning)
                .map(|f| f.to_string()),
        );
    }

    /// PH score tests per study; returns the scaled residual series too.
    fn ph_tests(&mut self, net: &EvidenceNetwork) -> Result<Vec<ResidualRow>> {
        let opts = self.options();
        let mut residuals = Vec::new();
        let mut flagged = 0;
        for study in &net.studies {
            let fit = match fit_cox(study, CoxModel::Ph, &opts) {
                Ok(f) => f,
                Err(e) if self.config.skip_failed => {
                    self.warnings.push(format!("PH test skipped for study `{}`: {e}", study.id));
                    continue;
                }
                Err(e) => return Err(e),
            };
            let test = match schoenfeld_test(study, &fit) {
                Ok(t) => t,
                Err(e) => {
                    self.warnings.push(format!("PH test skipped for study `{}`: {e}", study.id));
                    continue;
                }
            };
            if test.rejects(self.config.alpha) {
                flagged += 1;
            }
            for c in test.covariates.iter().chain(std::iter::once(&test.global)) {
                self.ph_tests.push(PhTestRow {
                    study: study.id.clone(),
                    covariate: c.name.clone(),
                    chisq: c.chisq,
                    df: c.df,
                    p_value: c.p_value,
                    flagged: c.p_value < self.config.alpha,
                });
            }
            for p in &test.residuals {
                for (c, v) in test.covariates.iter().zip(&p.scaled) {
                    residuals.push(ResidualRow {
                        study: study.id.clone(),
                        covariate: c.name.clone(),
                        time: p.time,
                        scaled_residual: *v,
                    });
                }
            }
        }
        if flagged > 0 {
            self.warnings.push(format!(
                "non-proportional hazards flagged in {flagged} of {} studies (global test, p < {})",
                net.n_studies(),
                self.config.alpha
            ));
        }
        Ok(residuals)
    }

    fn stage1(&mut self, net: &EvidenceNetwork, model: CoxModel) -> Result<(EstimateSet, String)> {
        let (set, failures) = fit_network(net, model, &self.options(), self.config.skip_failed)?;
        for f in failures {
            self.warnings.push(format!(
                "study `{}` left out of the {} analysis: {}",
                f.study,
                model.name(),
                f.error
            ));
        }
        let name = self.persist(&set)?;
        Ok((set, name))
    }

    fn persist(&mut self, set: &EstimateSet) -> Result<String> {
        let name = format!("stage1_{}.json", set.model.name());
        self.json("stage1", &name, set)?;
        Ok(name)
    }

    /// Stage-1 estimate sets to synthesise, one per analysis.
    fn estimate_sets(&mut self, input: Input) -> Result<Vec<(EstimateSet, String)>> {
        match input {
            Input::Ipd(net) => {
                self.data_warnings(&net);
                self.ph_tests(&net)?;
                let mut sets = vec![self.stage1(&net, CoxModel::Ph)?];
                if self.config.model == CoxModel::Tvhr {
                    sets.push(self.stage1(&net, CoxModel::Tvhr)?);
                }
                Ok(sets)
            }
            Input::Estimates(set) => {
                if set.model == CoxModel::Ph && self.config.model == CoxModel::Tvhr {
                    self.warnings
                        .push("input holds constant-HR estimates only; the time-varying analysis is skipped".into());
                }
                let name = self.persist(&set)?;
                Ok(vec![(set, name)])
            }
        }
    }

    fn record(&mut self, name: &str, spec: AnalysisSpec, estimates: String, draws: &PosteriorDraws, monitored: &[String]) -> Result<()> {
        let draw_dir = self.dir.join("draws");
        fs::create_dir_all(&draw_dir).map_err(|e| Error::io(&draw_dir, e))?;
        let paths = write_chain_csvs(draws, &draw_dir, name)?;
        for p in &paths {
            self.manifest.add_output("draws", self.dir, p);
        }
        let rel = paths
            .iter()
            .map(|p| format!("draws/{}", p.file_name().unwrap().to_string_lossy()))
            .collect();
        self.manifest.analyses.push(AnalysisRecord {
            name: name.to_string(),
            spec,
            estimates,
            draws: rel,
        });

        let report = diagnose(draws, monitored, DIAGNOSTIC_LAGS)?;
        self.diagnostics.extend(DiagnosticsRow::rows(name, &report));
        self.diagnostic_reports.push(report);
        for p in monitored {
            let s = Summary::of(&draws.pooled_by_name(p).expect("monitored parameter present"));
            self.parameters.push(ParameterRow {
                analysis: name.to_string(),
                parameter: p.clone(),
                mean: s.mean,
                sd: s.sd,
                median: s.median,
                lower: s.lower,
                upper: s.upper,
            });
        }
        Ok(())
    }

    fn effect_row(&self, analysis: &str, treatment: usize, comparator: usize, hr: &HrSummary, max_times: &[Option<f64>]) -> EffectRow {
        EffectRow {
            analysis: analysis.to_string(),
            treatment: self.treatments[treatment].clone(),
            comparator: self.treatments[comparator].clone(),
            landmark: hr.landmark.label(),
            hr_mean: hr.mean,
            hr_median: hr.median,
            hr_lower: hr.lower,
            hr_upper: hr.upper,
            mean_rank: None,
            rank_lower: None,
            rank_upper: None,
            prob_best: None,
            max_follow_up: longest(max_times),
            studies_beyond_follow_up: match hr.landmark {
                Landmark::Constant => 0,
                Landmark::Years(t) => studies_beyond(max_times, t),
            },
        }
    }

    fn finish(mut self) -> Result<RunOutcome> {
        let status = ReportStatus::gate(&self.diagnostic_reports);
        for row in self.diagnostics.iter().filter(|r| !r.pass) {
            self.warnings.push(format!(
                "{}: `{}` fails convergence gates (R-hat {:.4}, ESS {:.0})",
                row.analysis, row.parameter, row.rhat, row.ess
            ));
        }
        let effects = std::mem::take(&mut self.effects);
        let ranks = std::mem::take(&mut self.ranks);
        let rank_probabilities = std::mem::take(&mut self.rank_probabilities);
        let pbest_rows = std::mem::take(&mut self.pbest_rows);
        let diagnostics = std::mem::take(&mut self.diagnostics);
        let parameters = std::mem::take(&mut self.parameters);
        let ph_tests = std::mem::take(&mut self.ph_tests);
        let sensitivity = std::mem::take(&mut self.sensitivity);

        self.table("stage2", "landmark_hr.csv", &effects)?;
        self.table("stage2", "ranks.csv", &ranks)?;
        self.table("stage2", "rank_probabilities.csv", &rank_probabilities)?;
        self.table("stage2", "pbest_grid.csv", &pbest_rows)?;
        self.table("stage2", "pooled_parameters.csv", &parameters)?;
        self.table("stage2", "sensitivity.csv", &sensitivity)?;
        self.table("diagnostics", "diagnostics.csv", &diagnostics)?;
        self.table("diagnostics", "ph_tests.csv", &ph_tests)?;

        let report = SynthesisReport {
            command: self.manifest.command,
            status,
            treatments: self.treatments.clone(),
            landmark_table: effects,
            rank_table: ranks,
            pbest: self.pbest.take(),
            diagnostics,
            ph_tests,
            interaction_positive: self.interaction_positive,
            warnings: self.warnings.clone(),
        };
        self.json("stage2", "report.json", &report)?;
        self.manifest.status = Some(status);
        let manifest = self.manifest.write(self.dir)?;
        Ok(RunOutcome {
            manifest,
            status: Some(status),
            report: Some(report),
            warnings: self.warnings,
        })
    }
}

/// Proportional hazards tests, Kaplan-Meier step data and scaled Schoenfeld
/// residuals for every study.
pub fn cmd_diagnose(input: &Path, config: &RunConfig, out_dir: &Path) -> Result<RunOutcome> {
    let mut run = Run::start(Command::Diagnose, input, config, out_dir)?;
    let net = match load_input(input, config)? {
        Input::Ipd(net) => net,
        Input::Estimates(_) => {
            return Err(Error::Config("`diagnose` needs individual participant data".into()))
        }
    };
    run.data_warnings(&net);
    let residuals = run.ph_tests(&net)?;
    let mut km = Vec::new();
    for study in &net.studies {
        for curve in km_estimate(study)? {
            for i in 0..curve.times.len() {
                km.push(KmRow {
                    study: study.id.clone(),
                    arm: curve.arm.clone(),
                    time: curve.times[i],
                    at_risk: curve.at_risk[i],
                    events: curve.events[i],
                    censored: curve.censored[i],
                    survival: curve.survival[i],
                });
            }
        }
    }
    let ph = std::mem::take(&mut run.ph_tests);
    run.table("diagnostics", "ph_tests.csv", &ph)?;
    run.table("diagnostics", "km.csv", &km)?;
    run.table("diagnostics", "schoenfeld_residuals.csv", &residuals)?;
    let manifest = run.manifest.write(out_dir)?;
    Ok(RunOutcome {
        manifest,
        status: None,
        report: None,
        warnings: run.warnings,
    })
}

fn analysis_name(model: CoxModel) -> &'static str {
    match model {
        CoxModel::Ph => "constant",
        CoxModel::Tvhr => "tvhr",
    }
}

/// Two-treatment synthesis: constant HR from PH estimates and, for the
/// time-varying model, pooled HR at each landmark.
pub fn cmd_ma(input: &Path, config: &RunConfig, out_dir: &Path) -> Result<RunOutcome> {
    let mut run = Run::start(Command::Ma, input, config, out_dir)?;
    let data = load_input(input, config)?;
    let n_t = match &data {
        Input::Ipd(net) => net.n_treatments(),
        Input::Estimates(set) => set.treatments.len(),
    };
    if n_t != 2 {
        return Err(Error::Spec(format!(
            "`ma` needs exactly 2 treatments, found {n_t}; use `nma` for a network"
        )));
    }
    let landmarks = config.landmarks.clone().unwrap_or_else(|| PAIRWISE_LANDMARKS.to_vec());
    let spec = config.pairwise_spec();
    let sets = run.estimate_sets(data)?;
    run.treatments = sets[0].0.treatments.clone();

    for (set, file) in sets {
        let name = analysis_name(set.model);
        let mode = if set.dim() == 1 { Mode::Univariate } else { Mode::Bivariate };
        let est = PairwiseEstimate::from_set(&set)?;
        let max_times: Vec<Option<f64>> = est.iter().map(|e| e.max_time).collect();
        let post = match mode {
            Mode::Univariate => fit_univariate_ma(&est, &spec, &config.protocol)?,
            Mode::Bivariate => fit_bivariate_ma(&est, &spec, &config.protocol)?,
        };
        run.record(name, AnalysisSpec::Pairwise { mode, spec }, file, &post.draws, &post.monitored())?;
        run.warnings.extend(wide_heterogeneity(&post, name));

        let rows = match mode {
            Mode::Univariate => vec![post.constant_hr()],
            Mode::Bivariate => {
                run.interaction_positive = Some(post.prob_interaction_positive()?);
                run.warnings.extend(extrapolation_warnings(name, &landmarks, &max_times));
                post.pooled_hr_curve(&landmarks)?
            }
        };
        for hr in &rows {
            let row = run.effect_row(name, 1, 0, hr, &max_times);
            run.effects.push(row);
        }

        if mode == Mode::Bivariate && config.sensitivity && spec.effects == Effects::Random {
            let alt = config.tau2_prior.other();
            let res = prior_sensitivity(&est, &spec, alt.prior(), &config.protocol, &landmarks)?;
            let label = |c: super::TauPriorChoice| serde_json::to_value(c).unwrap().as_str().unwrap().to_string();
            for r in &res.table {
                run.sensitivity.push(SensitivityRow {
                    landmark: r.landmark.label(),
                    base_prior: label(config.tau2_prior),
                    base_mean: r.base.mean,
                    base_lower: r.base.lower,
                    base_upper: r.base.upper,
                    alternative_prior: label(alt),
                    alternative_mean: r.alternative.mean,
                    alternative_lower: r.alternative.lower,
                    alternative_upper: r.alternative.upper,
                });
            }
            run.warnings
                .extend(res.warnings.into_iter().filter(|w| w.starts_with("alternative")));
        }
    }
    run.finish()
}

/// Network synthesis: relative effects against the reference, ranks and the
/// monthly probability-best grid.
pub fn cmd_nma(input: &Path, config: &RunConfig, out_dir: &Path) -> Result<RunOutcome> {
    let mut run = Run::start(Command::Nma, input, config, out_dir)?;
    let data = load_input(input, config)?;
    let landmarks = config.landmarks.clone().unwrap_or_else(|| NETWORK_LANDMARKS.to_vec());
    let spec = config.network_spec();
    let sets = run.estimate_sets(data)?;
    run.treatments = sets[0].0.treatments.clone();
    if spec.effects == Effects::Random {
        let w = sparsity_warnings(&sets[0].0);
        run.warnings.extend(w);
    }

    for (set, file) in sets {
        let name = analysis_name(set.model);
        let post = fit_nma(&set, &spec, &config.protocol)?;
        run.record(name, AnalysisSpec::Network { spec }, file, &post.draws, &post.monitored())?;
        let times: Vec<Landmark> = if post.dim == 1 {
            vec![Landmark::Constant]
        } else {
            run.warnings.extend(extrapolation_warnings(name, &landmarks, &post.max_times));
            landmarks.iter().map(|&t| Landmark::Years(t)).collect()
        };
        for lm in times {
            let ranks = rank_treatments(&post, lm, config.direction)?;
            for (t, r) in ranks.iter().enumerate() {
                let hr = HrSummary::from_log_draws(lm, post.log_hr_draws(t, 0, lm)?.into_iter());
                let mut row = run.effect_row(name, t, 0, &hr, &post.max_times);
                row.mean_rank = Some(r.mean_rank);
                row.rank_lower = Some(r.lower);
                row.rank_upper = Some(r.upper);
                row.prob_best = Some(r.prob_best);
                run.effects.push(row);
                run.ranks.push(RankRow {
                    analysis: name.to_string(),
                    landmark: lm.label(),
                    treatment: r.treatment.clone(),
                    mean_rank: r.mean_rank,
                    rank_lower: r.lower,
                    rank_upper: r.upper,
                    prob_best: r.prob_best,
                });
                for (k, p) in r.distribution.iter().enumerate() {
                    run.rank_probabilities.push(RankProbabilityRow {
                        analysis: name.to_string(),
                        landmark: lm.label(),
                        treatment: r.treatment.clone(),
                        rank: k + 1,
                        probability: *p,
                    });
                }
            }
        }
        if post.dim == 2 {
            let grid = probability_best_grid(&post, &config.monthly_grid(), config.direction)?;
            for (j, &time) in grid.times.iter().enumerate() {
                for (t, label) in grid.treatments.iter().enumerate() {
                    run.pbest_rows.push(ProbabilityBestRow {
                        analysis: name.to_string(),
                        month: j + 1,
                        time,
                        treatment: label.clone(),
                        prob_best: grid.values[t][j],
                    });
                }
            }
            run.pbest = Some(grid);
        }
    }
    run.finish()
}

/// Plot-ready data from a finished `ma` or `nma` run: HR curves, probability
/// best over time and as a landmark heatmap, traces and autocorrelations.
/// Convergence diagnostics are recomputed from the stored draws.
pub fn cmd_report(manifest_path: &Path) -> Result<RunOutcome> {
    let source = RunManifest::read(manifest_path)?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    if !matches!(source.command, Command::Ma | Command::Nma) {
        return Err(Error::Manifest("`report` needs a manifest written by `ma` or `nma`".into()));
    }
    source.check_complete(dir)?;
    let config = &source.config;
    let out = dir.join("report");
    let mut run = Run::start(Command::Report, manifest_path, config, &out)?;
    let grid = config.monthly_grid();
    let landmarks = config.landmarks.clone().unwrap_or_else(|| match source.command {
        Command::Ma => PAIRWISE_LANDMARKS.to_vec(),
        _ => NETWORK_LANDMARKS.to_vec(),
    });

    let mut curves = Vec::new();
    let mut pbest_rows = Vec::new();
    let mut heat_cols: Vec<String> = Vec::new();
    let mut heat: Vec<Vec<f64>> = Vec::new();
    let mut traces = Vec::new();
    let mut acfs = Vec::new();

    for a in &source.analyses {
        let set = EstimateSet::read_json(&dir.join(&a.estimates))?;
        let paths: Vec<PathBuf> = a.draws.iter().map(|d| dir.join(d)).collect();
        let draws = read_chain_csvs(&paths, source.protocol)?;
        run.treatments = set.treatments.clone();
        let curve = |treatment: usize, log_hr: &dyn Fn(f64) -> Result<Vec<f64>>| -> Result<Vec<CurveRow>> {
            grid.iter()
                .map(|&t| {
                    let s = HrSummary::from_log_draws(Landmark::Years(t), log_hr(t)?.into_iter());
                    Ok(CurveRow {
                        analysis: a.name.clone(),
                        treatment: set.treatments[treatment].clone(),
                        comparator: set.treatments[0].clone(),
                        time: t,
                        mean: s.mean,
                        median: s.median,
                        lower: s.lower,
                        upper: s.upper,
                    })
                })
                .collect()
        };

        let (draws, monitored) = match a.spec {
            AnalysisSpec::Pairwise { mode, spec } => {
                let est = PairwiseEstimate::from_set(&set)?;
                let post = PairwisePosterior::from_draws(&est, mode, &spec, draws)?;
                let d1 = post.d_draws(0);
                let d2 = if mode == Mode::Bivariate { Some(post.d_draws(1)) } else { None };
                curves.extend(curve(1, &|t| {
                    Ok(match &d2 {
                        Some(d2) => d1.iter().zip(d2).map(|(a, b)| a + b * t.ln()).collect(),
                        None => d1.clone(),
                    })
                })?);
                let monitored = post.monitored();
                (post.draws, monitored)
            }
            AnalysisSpec::Network { spec } => {
                let post = NmaPosterior::from_draws(&set, &spec, draws)?;
                let at = |t: f64| if post.dim == 1 { Landmark::Constant } else { Landmark::Years(t) };
                for k in 1..post.n_treatments() {
                    curves.extend(curve(k, &|t| post.log_hr_draws(k, 0, at(t)))?);
                }
                let columns: Vec<Landmark> = if post.dim == 1 {
                    vec![Landmark::Constant]
                } else {
                    landmarks.iter().map(|&t| Landmark::Years(t)).collect()
                };
                for lm in columns {
                    let ranks = rank_treatments(&post, lm, config.direction)?;
                    heat_cols.push(format!("{}:{}", a.name, lm.label()));
                    heat.push(ranks.iter().map(|r| r.prob_best).collect());
                }
                if post.dim == 2 {
                    let g = probability_best_grid(&post, &grid, config.direction)?;
                    for (j, &time) in g.times.iter().enumerate() {
                        for (t, label) in g.treatments.iter().enumerate() {
                            pbest_rows.push(ProbabilityBestRow {
                                analysis: a.name.clone(),
                                month: j + 1,
                                time,
                                treatment: label.clone(),
                                prob_best: g.values[t][j],
                            });
                        }
                    }
                }
                let monitored = post.monitored();
                (post.draws, monitored)
            }
        };

        let report = diagnose(&draws, &monitored, REPORT_LAGS)?;
        run.diagnostics.extend(DiagnosticsRow::rows(&a.name, &report));
        run.diagnostic_reports.push(report);
        for name in &monitored {
            let p = draws.index(name).expect("monitored parameter present");
            for c in 0..draws.n_chains() {
                let series = draws.chain_series(c, p);
                for (lag, v) in autocorrelation(&series, REPORT_LAGS).into_iter().enumerate() {
                    acfs.push(AutocorrelationRow {
                        analysis: a.name.clone(),
                        parameter: name.clone(),
                        chain: c + 1,
                        lag,
                        value: v,
                    });
                }
                traces.extend(series.into_iter().enumerate().map(|(i, value)| TraceRow {
                    analysis: a.name.clone(),
                    parameter: name.clone(),
                    chain: c + 1,
                    iteration: i + 1,
                    value,
                }));
            }
        }
    }

    run.table("report", "hr_curves.csv", &curves)?;
    run.table("report", "pbest_vs_time.csv", &pbest_rows)?;
    if !heat.is_empty() {
        let rows: Vec<(String, Vec<f64>)> = run
            .treatments
            .iter()
            .enumerate()
            .map(|(t, label)| (label.clone(), heat.iter().map(|col| col[t]).collect()))
            .collect();
        let path = out.join("pbest_heatmap.csv");
        write_matrix(&path, "treatment", &heat_cols, &rows)?;
        run.manifest.add_output("report", &out, &path);
    }
    run.table("report", "trace.csv", &traces)?;
    run.table("report", "autocorrelation.csv", &acfs)?;
    let diagnostics = std::mem::take(&mut run.diagnostics);
    run.table("report", "diagnostics.csv", &diagnostics)?;

    let status = ReportStatus::gate(&run.diagnostic_reports);
    for row in diagnostics.iter().filter(|r| !r.pass) {
        run.warnings.push(format!(
            "{}: `{}` fails convergence gates (R-hat {:.4}, ESS {:.0})",
            row.analysis, row.parameter, row.rhat, row.ess
        ));
    }
    run.manifest.status = Some(status);
    let manifest = run.manifest.write(&out)?;
    Ok(RunOutcome {
        manifest,
        status: Some(status),
        report: None,
        warnings: run.warnings,
    })
}
