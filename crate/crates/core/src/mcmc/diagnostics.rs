//! Convergence diagnostics: split and rank-normalised R-hat, effective sample
//! size with Geyer's initial monotone sequence, and autocorrelations.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use super::engine::PosteriorDraws;
use crate::error::{Error, Result};

pub const RHAT_THRESHOLD: f64 = 1.01;
pub const ESS_THRESHOLD: f64 = 1000.0;

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_var(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

fn check_chains(chains: &[Vec<f64>]) -> Result<usize> {
    if chains.len() < 2 {
        return Err(Error::Diagnostics("at least two chains are required".into()));
    }
    let n = chains.iter().map(Vec::len).min().unwrap_or(0);
    if n < 10 || chains.iter().any(|c| c.len() != n) {
        return Err(Error::Diagnostics(
            "chains need equal length of at least 10 draws".into(),
        ));
    }
    if chains.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::Diagnostics("non-finite draws".into()));
    }
    Ok(n)
}

/// Gelman-Rubin potential scale reduction on the chains as given.
pub fn gelman_rubin(chains: &[Vec<f64>]) -> f64 {
    let n = chains[0].len() as f64;
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let w = mean(&chains.iter().map(|c| sample_var(c)).collect::<Vec<_>>());
    let b_over_n = sample_var(&means);
    let var_plus = (n - 1.0) / n * w + b_over_n;
    (var_plus / w).sqrt()
}

/// Splits each chain into halves, dropping the middle draw of odd lengths.
pub fn split_chains(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    chains
        .iter()
        .flat_map(|c| {
            let half = c.len() / 2;
            [c[..half].to_vec(), c[c.len() - half..].to_vec()]
        })
        .collect()
}

pub fn split_rhat(chains: &[Vec<f64>]) -> f64 {
    gelman_rubin(&split_chains(chains))
}

/// Normal scores of pooled average ranks, `(r - 3/8) / (S + 1/4)`.
fn rank_normalize(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let pooled: Vec<f64> = chains.concat();
    let s = pooled.len();
    let mut order: Vec<usize> = (0..s).collect();
    order.sort_by(|&a, &b| pooled[a].total_cmp(&pooled[b]));
    let mut ranks = vec![0.0; s];
    let mut i = 0;
    while i < s {
        let mut j = i;
        while j + 1 < s && pooled[order[j + 1]] == pooled[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    let normal = Normal::standard();
    let z: Vec<f64> = ranks
        .iter()
        .map(|r| normal.inverse_cdf((r - 0.375) / (s as f64 + 0.25)))
        .collect();
    let mut out = Vec::with_capacity(chains.len());
    let mut start = 0;
    for c in chains {
        out.push(z[start..start + c.len()].to_vec());
        start += c.len();
    }
    out
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Rank-normalised split R-hat: the larger of the bulk and folded-tail values.
/// Chains are split before ranking, so a dropped middle draw is never ranked.
pub fn rank_rhat(chains: &[Vec<f64>]) -> f64 {
    let bulk = gelman_rubin(&rank_normalize(&split_chains(chains)));
    let med = median(&chains.concat());
    let folded: Vec<Vec<f64>> = chains
        .iter()
        .map(|c| c.iter().map(|x| (x - med).abs()).collect())
        .collect();
    let tail = gelman_rubin(&rank_normalize(&split_chains(&folded)));
    bulk.max(tail)
}

/// Biased autocovariance at `lag` of a centred series.
fn autocov(centred: &[f64], lag: usize) -> f64 {
    let n = centred.len();
    centred[..n - lag]
        .iter()
        .zip(&centred[lag..])
        .map(|(a, b)| a * b)
        .sum::<f64>()
        / n as f64
}

/// Multi-chain effective sample size with Geyer's initial positive and
/// initial monotone sequence truncation, capped at `S log10 S`.
pub fn effective_sample_size(chains: &[Vec<f64>]) -> Result<f64> {
    let m = chains.len();
    let n = chains.iter().map(Vec::len).min().unwrap_or(0);
    if m == 0 || n < 4 || chains.iter().any(|c| c.len() != n) {
        return Err(Error::Diagnostics("ESS needs equal chains of at least 4 draws".into()));
    }
    let first = chains[0][0];
    if chains.iter().flatten().all(|&x| x == first) {
        return Err(Error::Diagnostics(format!(
            "ESS undefined for a constant chain (value {first})"
        )));
    }
    let centred: Vec<Vec<f64>> = chains
        .iter()
        .map(|c| {
            let mu = mean(c);
            c.iter().map(|x| x - mu).collect()
        })
        .collect();
    let nf = n as f64;
    let acov = |lag: usize| centred.iter().map(|c| autocov(c, lag)).sum::<f64>() / m as f64;
    let mean_var = acov(0) * nf / (nf - 1.0);
    let mut var_plus = mean_var * (nf - 1.0) / nf;
    if m > 1 {
        var_plus += sample_var(&chains.iter().map(|c| mean(c)).collect::<Vec<_>>());
    }
    let rho = |lag: usize| 1.0 - (mean_var - acov(lag)) / var_plus;

    let mut rho_s = vec![0.0; n];
    rho_s[0] = 1.0;
    let mut even = 1.0;
    let mut odd = rho(1);
    rho_s[1] = odd;
    let mut t = 0;
    while t + 5 < n && (even + odd) > 0.0 {
        t += 2;
        even = rho(t);
        odd = rho(t + 1);
        if even + odd >= 0.0 {
            rho_s[t] = even;
            rho_s[t + 1] = odd;
        }
    }
    let max_t = t;
    if even > 0.0 {
        rho_s[max_t] = even;
    }
    let mut t = 0;
    while t + 4 <= max_t {
        t += 2;
        let prev = rho_s[t - 2] + rho_s[t - 1];
        if rho_s[t] + rho_s[t + 1] > prev {
            rho_s[t] = prev / 2.0;
            rho_s[t + 1] = prev / 2.0;
        }
    }
    let total = (m * n) as f64;
    let tau = -1.0 + 2.0 * rho_s[..max_t].iter().sum::<f64>() + rho_s[max_t];
    let tau = tau.max(1.0 / total.log10());
    Ok(total / tau)
}

/// Sample autocorrelations of one chain at lags `0..=max_lag`.
pub fn autocorrelation(chain: &[f64], max_lag: usize) -> Vec<f64> {
    let mu = mean(chain);
    let centred: Vec<f64> = chain.iter().map(|x| x - mu).collect();
    let c0 = autocov(&centred, 0);
    (0..=max_lag.min(chain.len().saturating_sub(1)))
        .map(|k| if c0 > 0.0 { autocov(&centred, k) / c0 } else { 0.0 })
        .collect()
}

/// Rank-normalised split R-hat of a named parameter.
pub fn psrf(draws: &PosteriorDraws, parameter: &str) -> Result<f64> {
    let i = draws
        .index(parameter)
        .ok_or_else(|| Error::Diagnostics(format!("unknown parameter `{parameter}`")))?;
    let chains = draws.series(i);
    check_chains(&chains)?;
    Ok(rank_rhat(&chains))
}

pub fn ess(draws: &PosteriorDraws, parameter: &str) -> Result<f64> {
    let i = draws
        .index(parameter)
        .ok_or_else(|| Error::Diagnostics(format!("unknown parameter `{parameter}`")))?;
    let chains = draws.series(i);
    check_chains(&chains)?;
    effective_sample_size(&chains)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParameterDiagnostics {
    pub name: String,
    pub rhat: f64,
    pub rhat_classic: f64,
    pub ess: f64,
    pub autocorrelation: Vec<f64>,
    pub rhat_pass: bool,
    pub ess_pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticsReport {
    pub rhat_threshold: f64,
    pub ess_threshold: f64,
    pub total_draws: usize,
    pub parameters: Vec<ParameterDiagnostics>,
}

impl DiagnosticsReport {
    pub fn all_pass(&self) -> bool {
        self.parameters.iter().all(|p| p.rhat_pass && p.ess_pass)
    }

    pub fn failures(&self) -> Vec<&ParameterDiagnostics> {
        self.parameters
            .iter()
            .filter(|p| !(p.rhat_pass && p.ess_pass))
            .collect()
    }
}

/// Diagnostics for the named parameters (all parameters when `names` is empty).
///
/// Parameters that are constant across every draw, such as pinned
/// heterogeneity, are skipped.
pub fn diagnose(draws: &PosteriorDraws, names: &[String], max_lag: usize) -> Result<DiagnosticsReport> {
    let selected: Vec<usize> = if names.is_empty() {
        (0..draws.n_params()).collect()
    } else {
        names
            .iter()
            .map(|n| {
                draws
                    .index(n)
                    .ok_or_else(|| Error::Diagnostics(format!("unknown parameter `{n}`")))
            })
            .collect::<Result<_>>()?
    };
    let mut parameters = Vec::new();
    for i in selected {
        let chains = draws.series(i);
        check_chains(&chains)?;
        let first = chains[0][0];
        if chains.iter().flatten().all(|&x| x == first) {
            continue;
        }
        let rhat = rank_rhat(&chains);
        let ess = effective_sample_size(&chains)?;
        parameters.push(ParameterDiagnostics {
            name: draws.names[i].clone(),
            rhat,
            rhat_classic: gelman_rubin(&chains),
            ess,
            autocorrelation: autocorrelation(&chains[0], max_lag),
            rhat_pass: rhat < RHAT_THRESHOLD,
            ess_pass: ess >= ESS_THRESHOLD,
        });
    }
    Ok(DiagnosticsReport {
        rhat_threshold: RHAT_THRESHOLD,
        ess_threshold: ESS_THRESHOLD,
        total_draws: draws.total_draws(),
        parameters,
    })
}
