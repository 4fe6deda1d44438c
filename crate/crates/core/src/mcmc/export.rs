//! Draw export: one CSV per chain and a compact little-endian binary dump.
//!
//! Binary layout: magic `TVHRDRW1`, `u32` chain count, `u32` parameter count,
//! `u64` draws per chain, then each name as `u32` byte length plus UTF-8,
//! then every value as `f64` chain by chain in row-major order.

use std::fs;
use std::path::{Path, PathBuf};

use super::engine::PosteriorDraws;
use super::protocol::SamplerProtocol;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"TVHRDRW1";

/// Writes `{prefix}_chain{c}.csv` for every chain and returns the paths.
pub fn write_chain_csvs(draws: &PosteriorDraws, dir: &Path, prefix: &str) -> Result<Vec<PathBuf>> {
    let mut paths = Vec::new();
    for (c, chain) in draws.chains.iter().enumerate() {
        let path = dir.join(format!("{prefix}_chain{}.csv", c + 1));
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(&draws.names)?;
        for row in chain.chunks_exact(draws.n_params()) {
            w.write_record(row.iter().map(|v| format!("{v:?}")))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        paths.push(path);
    }
    Ok(paths)
}

/// Reads chain CSVs written by [`write_chain_csvs`].
pub fn read_chain_csvs(paths: &[PathBuf], protocol: SamplerProtocol) -> Result<PosteriorDraws> {
    let mut names: Option<Vec<String>> = None;
    let mut chains = Vec::new();
    for path in paths {
        let mut r = csv::Reader::from_path(path)?;
        let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
        match &names {
            Some(n) if *n != header => {
                return Err(Error::Manifest(format!(
                    "{}: header differs from the first chain",
                    path.display()
                )))
            }
            None => names = Some(header),
            _ => {}
        }
        let mut values = Vec::new();
        for rec in r.records() {
            for field in rec?.iter() {
                values.push(field.parse::<f64>().map_err(|_| {
                    Error::Manifest(format!("{}: bad value `{field}`", path.display()))
                })?);
            }
        }
        chains.push(values);
    }
    PosteriorDraws::from_chains(names.unwrap_or_default(), chains, protocol)
}

pub fn to_binary(draws: &PosteriorDraws) -> Vec<u8> {
    let mut out = Vec::with_capacity(24 + draws.total_draws() * draws.n_params() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(draws.n_chains() as u32).to_le_bytes());
    out.extend_from_slice(&(draws.n_params() as u32).to_le_bytes());
    out.extend_from_slice(&(draws.draws_per_chain() as u64).to_le_bytes());
    for name in &draws.names {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
    }
    for v in draws.chains.iter().flatten() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn from_binary(bytes: &[u8], protocol: SamplerProtocol) -> Result<PosteriorDraws> {
    let bad = || Error::Manifest("truncated or malformed draw dump".into());
    let mut pos = 0;
    let mut take = |n: usize| -> Result<&[u8]> {
        let s = bytes.get(pos..pos + n).ok_or_else(bad)?;
        pos += n;
        Ok(s)
    };
    if take(8)? != MAGIC {
        return Err(Error::Manifest("not a draw dump".into()));
    }
    let n_chains = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    let n_params = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    let n_draws = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
    let mut names = Vec::with_capacity(n_params);
    for _ in 0..n_params {
        let len = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        names.push(String::from_utf8(take(len)?.to_vec()).map_err(|_| bad())?);
    }
    let mut chains = Vec::with_capacity(n_chains);
    for _ in 0..n_chains {
        let raw = take(n_draws * n_params * 8)?;
        chains.push(
            raw.chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
                .collect(),
        );
    }
    PosteriorDraws::from_chains(names, chains, protocol)
}

pub fn write_binary(draws: &PosteriorDraws, path: &Path) -> Result<()> {
    fs::write(path, to_binary(draws)).map_err(|e| Error::io(path, e))
}
