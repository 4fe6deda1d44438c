use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Multi-chain sampling schedule. Thinning applies after burn-in only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplerProtocol {
    pub chains: usize,
    pub burn_in: usize,
    pub samples: usize,
    pub thin: usize,
    pub seed: u64,
    /// Leading burn-in iterations during which kernels may tune themselves.
    pub adapt: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProtocolPreset {
    Paper,
    Desk,
}

impl SamplerProtocol {
    /// 3 chains, 50,000 burn-in, 50,000 samples thinned by 5.
    pub fn paper(seed: u64) -> Self {
        SamplerProtocol {
            chains: 3,
            burn_in: 50_000,
            samples: 50_000,
            thin: 5,
            seed,
            adapt: 10_000,
        }
    }

    /// 3 chains, 2,000 burn-in, 5,000 samples, no thinning.
    pub fn desk(seed: u64) -> Self {
        SamplerProtocol {
            chains: 3,
            burn_in: 2_000,
            samples: 5_000,
            thin: 1,
            seed,
            adapt: 1_000,
        }
    }

    pub fn preset(preset: ProtocolPreset, seed: u64) -> Self {
        match preset {
            ProtocolPreset::Paper => Self::paper(seed),
            ProtocolPreset::Desk => Self::desk(seed),
        }
    }

    pub fn retained_per_chain(&self) -> usize {
        self.samples / self.thin
    }

    pub fn retained_total(&self) -> usize {
        self.chains * self.retained_per_chain()
    }

    pub fn validate(&self) -> Result<()> {
        if self.chains == 0 {
            return Err(Error::Sampler("at least one chain is required".into()));
        }
        if self.thin == 0 || self.samples == 0 {
            return Err(Error::Sampler("samples and thin must be positive".into()));
        }
        if !self.samples.is_multiple_of(self.thin) {
            return Err(Error::Sampler(format!(
                "samples ({}) must be a multiple of thin ({})",
                self.samples, self.thin
            )));
        }
        if self.adapt > self.burn_in {
            return Err(Error::Sampler("adaptation must end within burn-in".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_accounting() {
        let p = SamplerProtocol::paper(1);
        assert_eq!(p.retained_per_chain(), 10_000);
        assert_eq!(p.retained_total(), 30_000);
        p.validate().unwrap();
        SamplerProtocol::desk(1).validate().unwrap();
        let bad = SamplerProtocol { thin: 3, ..p };
        assert!(bad.validate().is_err());
    }
}
