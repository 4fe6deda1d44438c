//! Univariate update kernels for bounded scalar parameters.

use rand::Rng;
use rand_distr::StandardNormal;

use super::engine::{AcceptanceLog, ChainRng};

/// Stepping-out and shrinkage slice sampler on `(lower, upper)`.
///
/// The initial bracket is clipped to the support, so draws never leave it.
/// The width tunes itself while `adapt` is set.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceSampler {
    pub width: f64,
    pub lower: f64,
    pub upper: f64,
    pub max_steps: usize,
    moved: f64,
    n: u64,
}

impl SliceSampler {
    pub fn new(width: f64, lower: f64, upper: f64) -> Self {
        SliceSampler {
            width,
            lower,
            upper,
            max_steps: 50,
            moved: 0.0,
            n: 0,
        }
    }

    pub fn sample(
        &mut self,
        x0: f64,
        mut log_f: impl FnMut(f64) -> f64,
        rng: &mut ChainRng,
        adapt: bool,
    ) -> f64 {
        let inside = |x: f64| x > self.lower && x < self.upper;
        debug_assert!(inside(x0));
        let f0 = log_f(x0);
        let level = f0 - rng.random::<f64>().max(f64::MIN_POSITIVE).ln().abs();

        let u: f64 = rng.random();
        let mut left = x0 - u * self.width;
        let mut right = left + self.width;
        let mut j = (rng.random::<f64>() * self.max_steps as f64) as usize;
        let mut k = self.max_steps - 1 - j;
        while j > 0 && left > self.lower && log_f(left) > level {
            left -= self.width;
            j -= 1;
        }
        while k > 0 && right < self.upper && log_f(right) > level {
            right += self.width;
            k -= 1;
        }
        left = left.max(self.lower);
        right = right.min(self.upper);

        let x1 = loop {
            let x = left + rng.random::<f64>() * (right - left);
            if inside(x) && log_f(x) > level {
                break x;
            }
            if x < x0 {
                left = x;
            } else {
                right = x;
            }
            if right - left < 1e-14 * (1.0 + x0.abs()) {
                break x0;
            }
        };

        if adapt {
            self.n += 1;
            self.moved += ((x1 - x0).abs() - self.moved) / self.n as f64;
            if self.n >= 20 {
                let span = self.upper - self.lower;
                let target = 2.0 * self.moved;
                self.width = if span.is_finite() {
                    target.clamp(1e-4 * span, span)
                } else {
                    target.max(1e-6)
                };
            }
        }
        x1
    }

    pub fn update(
        &mut self,
        block: &str,
        x0: f64,
        log_f: impl FnMut(f64) -> f64,
        rng: &mut ChainRng,
        adapt: bool,
        log: &mut AcceptanceLog,
    ) -> f64 {
        let x = self.sample(x0, log_f, rng, adapt);
        log.record(block, true);
        x
    }
}

/// Gaussian random-walk Metropolis with reflection at the support bounds.
/// During adaptation the proposal scale is steered into the 0.30-0.45
/// acceptance band.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomWalk {
    pub scale: f64,
    pub lower: f64,
    pub upper: f64,
    window_accepted: u32,
    window_total: u32,
}

impl RandomWalk {
    pub fn new(scale: f64, lower: f64, upper: f64) -> Self {
        RandomWalk {
            scale,
            lower,
            upper,
            window_accepted: 0,
            window_total: 0,
        }
    }

    fn reflect(&self, mut x: f64) -> f64 {
        let span = self.upper - self.lower;
        if span.is_finite() {
            let period = 2.0 * span;
            let mut y = (x - self.lower).rem_euclid(period);
            if y > span {
                y = period - y;
            }
            x = self.lower + y;
        } else if x < self.lower {
            x = 2.0 * self.lower - x;
        } else if x > self.upper {
            x = 2.0 * self.upper - x;
        }
        x
    }

    pub fn update(
        &mut self,
        block: &str,
        x0: f64,
        mut log_f: impl FnMut(f64) -> f64,
        rng: &mut ChainRng,
        adapt: bool,
        log: &mut AcceptanceLog,
    ) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        let x = self.reflect(x0 + self.scale * z);
        let ok = x > self.lower && x < self.upper && {
            let ratio = log_f(x) - log_f(x0);
            rng.random::<f64>().ln() < ratio
        };
        log.record(block, ok);
        if adapt {
            self.window_total += 1;
            self.window_accepted += ok as u32;
            if self.window_total == 50 {
                let rate = self.window_accepted as f64 / 50.0;
                if rate < 0.30 {
                    self.scale *= 0.8;
                } else if rate > 0.45 {
                    self.scale *= 1.25;
                }
                self.window_total = 0;
                self.window_accepted = 0;
            }
        }
        if ok {
            x
        } else {
            x0
        }
    }
}

/// Kernel used for variance and correlation parameters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalarKernel {
    #[default]
    Slice,
    RandomWalk,
}

/// A scalar updater of either kind.
#[derive(Debug, Clone, PartialEq)]
pub enum ScalarUpdater {
    Slice(SliceSampler),
    RandomWalk(RandomWalk),
}

impl ScalarUpdater {
    pub fn new(kind: ScalarKernel, width: f64, lower: f64, upper: f64) -> Self {
        match kind {
            ScalarKernel::Slice => ScalarUpdater::Slice(SliceSampler::new(width, lower, upper)),
            ScalarKernel::RandomWalk => ScalarUpdater::RandomWalk(RandomWalk::new(width / 2.0, lower, upper)),
        }
    }

    pub fn update(
        &mut self,
        block: &str,
        x0: f64,
        log_f: impl FnMut(f64) -> f64,
        rng: &mut ChainRng,
        adapt: bool,
        log: &mut AcceptanceLog,
    ) -> f64 {
        match self {
            ScalarUpdater::Slice(s) => s.update(block, x0, log_f, rng, adapt, log),
            ScalarUpdater::RandomWalk(r) => r.update(block, x0, log_f, rng, adapt, log),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::engine::chain_rng;
    use super::*;

    fn moments(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, v)
    }

    #[test]
    fn slice_recovers_uniform() {
        let mut rng = chain_rng(11, 0);
        let mut s = SliceSampler::new(0.5, 0.0, 1.0);
        let mut x = 0.5;
        let draws: Vec<f64> = (0..40_000)
            .map(|i| {
                x = s.sample(x, |_| 0.0, &mut rng, i < 1000);
                x
            })
            .collect();
        assert!(draws.iter().all(|&x| x > 0.0 && x < 1.0));
        let (m, v) = moments(&draws[1000..]);
        assert!((m - 0.5).abs() < 0.01, "{m}");
        assert!((v - 1.0 / 12.0).abs() < 0.003, "{v}");
    }

    #[test]
    fn random_walk_recovers_uniform_on_angle() {
        let mut rng = chain_rng(5, 1);
        let pi = std::f64::consts::PI;
        let mut rw = RandomWalk::new(1.0, 0.0, pi);
        let mut log = AcceptanceLog::default();
        let mut x = 1.0;
        let draws: Vec<f64> = (0..60_000)
            .map(|i| {
                x = rw.update("theta", x, |_| 0.0, &mut rng, i < 2000, &mut log);
                x
            })
            .collect();
        let (m, v) = moments(&draws[2000..]);
        assert!((m - pi / 2.0).abs() < 0.05, "{m}");
        assert!((v - pi * pi / 12.0).abs() < 0.05, "{v}");
    }

    #[test]
    fn random_walk_adapts_into_band() {
        let mut rng = chain_rng(3, 0);
        let mut rw = RandomWalk::new(20.0, f64::NEG_INFINITY, f64::INFINITY);
        let mut log = AcceptanceLog::default();
        let mut x = 0.0;
        for _ in 0..5000 {
            x = rw.update("x", x, |y| -0.5 * y * y, &mut rng, true, &mut log);
        }
        let mut post = AcceptanceLog::default();
        for _ in 0..20_000 {
            x = rw.update("x", x, |y| -0.5 * y * y, &mut rng, false, &mut post);
        }
        let rate = post.rate("x").unwrap();
        assert!((0.25..0.5).contains(&rate), "{rate}");
    }
}
