//! Multi-chain MCMC engine, update kernels and convergence diagnostics.

pub mod diagnostics;
pub mod engine;
pub mod export;
pub mod kernels;
pub mod protocol;

pub use diagnostics::{
    autocorrelation, diagnose, effective_sample_size, ess, gelman_rubin, psrf, rank_rhat,
    split_rhat, DiagnosticsReport, ParameterDiagnostics, ESS_THRESHOLD, RHAT_THRESHOLD,
};
pub use engine::{chain_rng, run_chains, AcceptanceLog, ChainRng, Model, PosteriorDraws};
pub use kernels::{RandomWalk, ScalarKernel, ScalarUpdater, SliceSampler};
pub use protocol::{ProtocolPreset, SamplerProtocol};
