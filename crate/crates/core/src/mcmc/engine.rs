use std::collections::BTreeMap;
use std::thread;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::protocol::SamplerProtocol;
use crate::error::{Error, Result};

/// Per-chain random stream: a ChaCha keystream seeded by the run seed and
/// selected by the chain index.
pub type ChainRng = ChaCha8Rng;

pub fn chain_rng(seed: u64, chain: usize) -> ChainRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain as u64);
    rng
}

/// Accepted/proposed counts per update block.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct AcceptanceLog {
    pub blocks: BTreeMap<String, (u64, u64)>,
}

impl AcceptanceLog {
    pub fn record(&mut self, block: &str, accepted: bool) {
        let e = self.blocks.entry(block.to_owned()).or_default();
        e.0 += accepted as u64;
        e.1 += 1;
    }

    pub fn rate(&self, block: &str) -> Option<f64> {
        self.blocks
            .get(block)
            .filter(|(_, n)| *n > 0)
            .map(|&(a, n)| a as f64 / n as f64)
    }
}

/// A posterior the engine can sample: initial states plus one sweep of
/// block updates.
pub trait Model: Sync {
    type State: Clone + Send;

    fn parameter_names(&self) -> Vec<String>;

    fn initial_state(&self, chain: usize, rng: &mut ChainRng) -> Result<Self::State>;

    /// Unnormalised log posterior, used to reject bad starting points.
    fn log_density(&self, state: &Self::State) -> f64;

    /// One full sweep. `adapt` is true only during the adaptation window.
    fn sweep(
        &self,
        state: &mut Self::State,
        rng: &mut ChainRng,
        adapt: bool,
        log: &mut AcceptanceLog,
    ) -> Result<()>;

    /// Monitored values in `parameter_names` order.
    fn monitor(&self, state: &Self::State, out: &mut Vec<f64>);
}

/// Retained draws of one run, chain by chain.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws {
    pub names: Vec<String>,
    /// `chains[c][i * names.len() + p]` is draw `i` of parameter `p`.
    pub chains: Vec<Vec<f64>>,
    pub protocol: SamplerProtocol,
    pub acceptance: Vec<AcceptanceLog>,
}

impl PosteriorDraws {
    pub fn from_chains(names: Vec<String>, chains: Vec<Vec<f64>>, protocol: SamplerProtocol) -> Result<Self> {
        let p = names.len();
        let n = chains.first().map(|c| c.len()).unwrap_or(0);
        if p == 0 || chains.iter().any(|c| c.len() != n || c.len() % p != 0) {
            return Err(Error::Sampler("chains must have equal length".into()));
        }
        let acceptance = vec![AcceptanceLog::default(); chains.len()];
        Ok(PosteriorDraws {
            names,
            chains,
            protocol,
            acceptance,
        })
    }

    pub fn n_chains(&self) -> usize {
        self.chains.len()
    }

    pub fn n_params(&self) -> usize {
        self.names.len()
    }

    pub fn draws_per_chain(&self) -> usize {
        self.chains.first().map(|c| c.len() / self.n_params()).unwrap_or(0)
    }

    pub fn total_draws(&self) -> usize {
        self.draws_per_chain() * self.n_chains()
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn chain_series(&self, chain: usize, param: usize) -> Vec<f64> {
        let p = self.n_params();
        self.chains[chain].iter().skip(param).step_by(p).copied().collect()
    }

    pub fn series(&self, param: usize) -> Vec<Vec<f64>> {
        (0..self.n_chains()).map(|c| self.chain_series(c, param)).collect()
    }

    /// All chains concatenated for one parameter.
    pub fn pooled(&self, param: usize) -> Vec<f64> {
        self.series(param).concat()
    }

    pub fn pooled_by_name(&self, name: &str) -> Option<Vec<f64>> {
        self.index(name).map(|i| self.pooled(i))
    }

    /// Iterates over every retained draw as a parameter slice.
    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.chains.iter().flat_map(move |c| c.chunks_exact(self.n_params()))
    }
}

/// Runs every chain of the protocol concurrently. Results depend only on the
/// model, the protocol and the seed.
pub fn run_chains<M: Model>(model: &M, protocol: &SamplerProtocol) -> Result<PosteriorDraws> {
    protocol.validate()?;
    let names = model.parameter_names();
    let results: Vec<Result<(Vec<f64>, AcceptanceLog)>> = thread::scope(|scope| {
        let handles: Vec<_> = (0..protocol.chains)
            .map(|chain| scope.spawn(move || run_chain(model, protocol, chain)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Error::Sampler("chain panicked".into()))))
            .collect()
    });
    let mut chains = Vec::with_capacity(protocol.chains);
    let mut acceptance = Vec::with_capacity(protocol.chains);
    for r in results {
        let (c, a) = r?;
        chains.push(c);
        acceptance.push(a);
    }
    Ok(PosteriorDraws {
        names,
        chains,
        protocol: *protocol,
        acceptance,
    })
}

fn run_chain<M: Model>(model: &M, protocol: &SamplerProtocol, chain: usize) -> Result<(Vec<f64>, AcceptanceLog)> {
    let mut rng = chain_rng(protocol.seed, chain);
    let mut state = model.initial_state(chain, &mut rng)?;
    if !model.log_density(&state).is_finite() {
        return Err(Error::Sampler(format!(
            "chain {chain}: non-finite log density at initialisation"
        )));
    }
    let mut log = AcceptanceLog::default();
    for it in 0..protocol.burn_in {
        model.sweep(&mut state, &mut rng, it < protocol.adapt, &mut log)?;
    }
    let p = model.parameter_names().len();
    let mut out = Vec::with_capacity(protocol.retained_per_chain() * p);
    let mut row = Vec::with_capacity(p);
    for it in 0..protocol.samples {
        model.sweep(&mut state, &mut rng, false, &mut log)?;
        if (it + 1) % protocol.thin == 0 {
            row.clear();
            model.monitor(&state, &mut row);
            if let Some(k) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::Sampler(format!(
                    "chain {chain}: non-finite value for `{}` at iteration {}",
                    model.parameter_names()[k],
                    protocol.burn_in + it + 1
                )));
            }
            out.extend_from_slice(&row);
        }
    }
    Ok((out, log))
}
