use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use tvhr_synthesis::data::TimeUnit;
use tvhr_synthesis::mcmc::{ProtocolPreset, SamplerProtocol};
use tvhr_synthesis::report::{cmd_diagnose, cmd_ma, cmd_nma, cmd_report, RunConfig, RunOutcome, TauPriorChoice};
use tvhr_synthesis::survival::CoxModel;
use tvhr_synthesis::synthesis::Effects;
use tvhr_synthesis::Result;

#[derive(Parser)]
#[command(name = "tvhr", version, about = "Two-stage Bayesian meta-analysis with time-varying hazard ratios")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,

    /// JSON run configuration; flags below override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; chain c draws from stream c of a ChaCha8 generator.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = "tvhr-out")]
    out_dir: PathBuf,
    /// Sampling preset: 3 x (50k burn-in + 50k thinned by 5), or a quick 3 x (2k + 5k).
    #[arg(long, global = true, value_enum)]
    protocol: Option<Preset>,
    #[arg(long, global = true)]
    chains: Option<usize>,
    #[arg(long, global = true)]
    burnin: Option<usize>,
    #[arg(long, global = true)]
    samples: Option<usize>,
    #[arg(long, global = true)]
    thin: Option<usize>,
    /// Comma-separated landmark times in years.
    #[arg(long, global = true, value_delimiter = ',')]
    landmarks: Option<Vec<f64>>,
    /// Prior on the interaction heterogeneity SD.
    #[arg(long = "prior-tau2", global = true, value_enum)]
    prior_tau2: Option<Prior>,
    #[arg(long, global = true, value_enum)]
    effects: Option<EffectsArg>,
    #[arg(long, global = true, value_enum)]
    model: Option<ModelArg>,
    /// Drop studies whose Cox fit fails instead of aborting.
    #[arg(long, global = true)]
    skip_failed: bool,
    /// Pairwise only: refit under the other prior for tau[2].
    #[arg(long, global = true)]
    sensitivity: bool,
    /// Last month of the probability-best and HR-curve grids.
    #[arg(long, global = true)]
    horizon_months: Option<usize>,
    /// Network reference treatment (default: first label alphabetically).
    #[arg(long, global = true)]
    reference: Option<String>,
    /// Unit of the time column in IPD input; analyses run in years.
    #[arg(long, global = true, value_enum)]
    time_unit: Option<Unit>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Proportional hazards tests, KM curves and Schoenfeld residuals.
    Diagnose { input: PathBuf },
    /// Pairwise meta-analysis of a two-treatment dataset.
    Ma { input: PathBuf },
    /// Network meta-analysis.
    Nma { input: PathBuf },
    /// Plot data from a finished run's manifest.
    Report { manifest: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Paper,
    Desk,
}

#[derive(Clone, Copy, ValueEnum)]
enum Prior {
    Uniform,
    Halfnormal,
}

#[derive(Clone, Copy, ValueEnum)]
enum EffectsArg {
    Fixed,
    Random,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Ph,
    Tvhr,
}

#[derive(Clone, Copy, ValueEnum)]
enum Unit {
    Days,
    Weeks,
    Months,
    Years,
}

impl Cli {
    fn run_config(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::from_json_file(p)?,
            None => RunConfig::default(),
        };
        let seed = self.seed.unwrap_or(c.protocol.seed);
        let mut p: SamplerProtocol = match self.protocol {
            Some(Preset::Paper) => SamplerProtocol::preset(ProtocolPreset::Paper, seed),
            Some(Preset::Desk) => SamplerProtocol::preset(ProtocolPreset::Desk, seed),
            None => SamplerProtocol { seed, ..c.protocol },
        };
        p.chains = self.chains.unwrap_or(p.chains);
        p.burn_in = self.burnin.unwrap_or(p.burn_in);
        p.samples = self.samples.unwrap_or(p.samples);
        p.thin = self.thin.unwrap_or(p.thin);
        p.adapt = p.adapt.min(p.burn_in);
        c.protocol = p;

        if let Some(l) = &self.landmarks {
            c.landmarks = Some(l.clone());
        }
        if let Some(prior) = self.prior_tau2 {
            c.tau2_prior = match prior {
                Prior::Uniform => TauPriorChoice::Uniform,
                Prior::Halfnormal => TauPriorChoice::Halfnormal,
            };
        }
        if let Some(e) = self.effects {
            c.effects = Some(match e {
                EffectsArg::Fixed => Effects::Fixed,
                EffectsArg::Random => Effects::Random,
            });
        }
        if let Some(m) = self.model {
            c.model = match m {
                ModelArg::Ph => CoxModel::Ph,
                ModelArg::Tvhr => CoxModel::Tvhr,
            };
        }
        c.skip_failed |= self.skip_failed;
        c.sensitivity |= self.sensitivity;
        if let Some(h) = self.horizon_months {
            c.horizon_months = h;
        }
        if let Some(r) = &self.reference {
            c.data.reference = Some(r.clone());
        }
        if let Some(u) = self.time_unit {
            c.data.time_unit = match u {
                Unit::Days => TimeUnit::Days,
                Unit::Weeks => TimeUnit::Weeks,
                Unit::Months => TimeUnit::Months,
                Unit::Years => TimeUnit::Years,
            };
        }
        c.validate()?;
        Ok(c)
    }
}

fn run(cli: &Cli) -> Result<RunOutcome> {
    let out: &Path = &cli.out_dir;
    match &cli.command {
        Cmd::Diagnose { input } => cmd_diagnose(input, &cli.run_config()?, out),
        Cmd::Ma { input } => cmd_ma(input, &cli.run_config()?, out),
        Cmd::Nma { input } => cmd_nma(input, &cli.run_config()?, out),
        Cmd::Report { manifest } => cmd_report(manifest),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(outcome) => {
            for w in &outcome.warnings {
                eprintln!("warning: {w}");
            }
            if let Some(s) = outcome.status {
                eprintln!("status: {}", serde_json::to_value(s).unwrap().as_str().unwrap_or(""));
            }
            println!("{}", outcome.manifest.display());
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
