//! Small dense Gaussian helpers.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

pub fn standard_normal_vec<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// Lower factor `L` with `L L^T = a`; tolerates positive semi-definite input
/// by falling back to an eigen decomposition with negative eigenvalues clipped.
pub fn psd_factor(a: &DMatrix<f64>) -> DMatrix<f64> {
    if let Some(ch) = a.clone().cholesky() {
        return ch.l();
    }
    let sym = (a + a.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let sqrt = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&sqrt)
}

/// Draw from `N(mean, cov)` with a possibly singular covariance.
pub fn mvn_draw<R: Rng + ?Sized>(mean: &DVector<f64>, cov: &DMatrix<f64>, rng: &mut R) -> DVector<f64> {
    mean + psd_factor(cov) * standard_normal_vec(mean.len(), rng)
}

/// Draw from the Gaussian with precision `p` and canonical mean `b`, i.e.
/// `N(p^{-1} b, p^{-1})`. Returns `None` if `p` is not positive definite.
pub fn mvn_draw_canonical<R: Rng + ?Sized>(p: &DMatrix<f64>, b: &DVector<f64>, rng: &mut R) -> Option<DVector<f64>> {
    let ch = p.clone().cholesky()?;
    let mean = ch.solve(b);
    let z = standard_normal_vec(b.len(), rng);
    let l_t = ch.l().transpose();
    let noise = l_t.solve_upper_triangular(&z)?;
    Some(mean + noise)
}

/// Log density of `N(mean, cov)` at `x`; `-inf` when `cov` is not positive definite.
pub fn mvn_log_pdf(x: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    let Some(ch) = cov.clone().cholesky() else {
        return f64::NEG_INFINITY;
    };
    let r = x - mean;
    let Some(z) = ch.l().solve_lower_triangular(&r) else {
        return f64::NEG_INFINITY;
    };
    let log_det: f64 = ch.l().diagonal().iter().map(|v| v.ln()).sum::<f64>() * 2.0;
    -0.5 * (x.len() as f64 * LN_2PI + log_det + z.norm_squared())
}

pub fn is_positive_definite(a: &DMatrix<f64>) -> bool {
    a.is_square() && (a - a.transpose()).amax() <= 1e-10 * a.amax().max(1.0) && a.clone().cholesky().is_some()
}
