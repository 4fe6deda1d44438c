//! Reference implementations written from the textbook definitions, sharing
//! no code with the library. Each one trades speed for being obviously right.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tvhr_synthesis::data::{ArmRecord, StudyDataset};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Small two-arm dataset on a coarse time grid, so tied event times are common.
/// Both arms get at least one event.
pub fn random_study<R: Rng>(id: &str, n: usize, rng: &mut R) -> StudyDataset {
    loop {
        let records: Vec<ArmRecord> = (0..n)
            .map(|i| ArmRecord {
                arm: if i < n / 2 { 0 } else { rng.random_range(0..2) },
                time: rng.random_range(1..=8) as f64 * 0.25,
                event: rng.random_bool(0.7),
            })
            .collect();
        let mut events = [0, 0];
        let mut sizes = [0, 0];
        for r in &records {
            sizes[r.arm] += 1;
            events[r.arm] += r.event as usize;
        }
        if events[0] > 0 && events[1] > 0 && sizes[1] > 1 {
            return StudyDataset::new(id, vec!["A".into(), "B".into()], records).unwrap();
        }
    }
}

/// Exact Efron log partial likelihood of a single 0/1 arm indicator, summed
/// subject by subject.
pub fn efron_loglik(study: &StudyDataset, beta: f64) -> f64 {
    let x = |r: &ArmRecord| r.arm as f64;
    let mut times: Vec<f64> = study.records.iter().filter(|r| r.event).map(|r| r.time).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let mut ll = 0.0;
    for t in times {
        let deaths: Vec<&ArmRecord> = study.records.iter().filter(|r| r.event && r.time == t).collect();
        let risk: f64 = study.records.iter().filter(|r| r.time >= t).map(|r| (beta * x(r)).exp()).sum();
        let tied: f64 = deaths.iter().map(|r| (beta * x(r)).exp()).sum();
        let d = deaths.len() as f64;
        for r in &deaths {
            ll += beta * x(r);
        }
        for l in 0..deaths.len() {
            ll -= (risk - l as f64 / d * tied).ln();
        }
    }
    ll
}

/// Golden-section search for the maximum of a unimodal function on `[lo, hi]`.
pub fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - g * (hi - lo);
    let mut b = lo + g * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    while hi - lo > tol {
        if fa < fb {
            lo = a;
            a = b;
            fa = fb;
            b = lo + g * (hi - lo);
            fb = f(b);
        } else {
            hi = b;
            b = a;
            fb = fa;
            a = hi - g * (hi - lo);
            fa = f(a);
        }
    }
    (lo + hi) / 2.0
}

/// One row of a counting-process dataset: at risk on `(start, stop]`.
#[derive(Debug, Clone)]
pub struct Interval {
    pub start: f64,
    pub stop: f64,
    pub event: bool,
    pub z: Vec<f64>,
}

/// Splits every subject at each event time up to its own follow-up and
/// evaluates the covariates `(x, x log stop)` on each piece.
pub fn expand_tvhr(study: &StudyDataset) -> Vec<Interval> {
    let mut cuts: Vec<f64> = study.records.iter().filter(|r| r.event).map(|r| r.time).collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut rows = Vec::new();
    for r in &study.records {
        let x = r.arm as f64;
        let mut start = 0.0;
        for &c in cuts.iter().filter(|&&c| c <= r.time) {
            rows.push(Interval {
                start,
                stop: c,
                event: r.event && c == r.time,
                z: vec![x, x * c.ln()],
            });
            start = c;
        }
        if start < r.time {
            rows.push(Interval {
                start,
                stop: r.time,
                event: false,
                z: vec![x, x * r.time.ln()],
            });
        }
    }
    rows
}

/// Efron log likelihood, gradient and negative Hessian for time-fixed rows.
pub fn efron_rows(rows: &[Interval], beta: &DVector<f64>) -> (f64, DVector<f64>, DMatrix<f64>) {
    let p = beta.len();
    let zv = |r: &Interval| DVector::from_column_slice(&r.z);
    let mut times: Vec<f64> = rows.iter().filter(|r| r.event).map(|r| r.stop).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let mut ll = 0.0;
    let mut grad = DVector::zeros(p);
    let mut info = DMatrix::zeros(p, p);
    for t in times {
        let mut s0 = 0.0;
        let mut s1 = DVector::zeros(p);
        let mut s2 = DMatrix::zeros(p, p);
        let mut e0 = 0.0;
        let mut e1 = DVector::zeros(p);
        let mut e2 = DMatrix::zeros(p, p);
        let mut d = 0usize;
        for r in rows {
            let z = zv(r);
            let w = z.dot(beta).exp();
            if r.start < t && t <= r.stop {
                s0 += w;
                s1 += &z * w;
                s2 += &z * z.transpose() * w;
            }
            if r.event && r.stop == t {
                d += 1;
                ll += z.dot(beta);
                grad += &z;
                e0 += w;
                e1 += &z * w;
                e2 += &z * z.transpose() * w;
            }
        }
        for l in 0..d {
            let f = l as f64 / d as f64;
            let a0 = s0 - f * e0;
            let a1 = &s1 - &e1 * f;
            let a2 = &s2 - &e2 * f;
            ll -= a0.ln();
            grad -= &a1 / a0;
            info += &a2 / a0 - &a1 * a1.transpose() / (a0 * a0);
        }
    }
    (ll, grad, info)
}

/// Plain Newton iterations on [`efron_rows`]; returns the estimate and the
/// inverse information.
pub fn fit_rows(rows: &[Interval], p: usize) -> Option<(DVector<f64>, DMatrix<f64>)> {
    let mut beta = DVector::zeros(p);
    for _ in 0..200 {
        let (_, g, info) = efron_rows(rows, &beta);
        let step = info.clone().lu().solve(&g)?;
        beta += &step;
        if step.amax() < 1e-12 {
            let (_, _, info) = efron_rows(rows, &beta);
            return Some((beta, info.try_inverse()?));
        }
        if beta.amax() > 20.0 {
            return None;
        }
    }
    None
}
