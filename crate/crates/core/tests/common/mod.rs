#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use spanlab::ReturnPanel;

pub fn gaussian(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

pub fn random_panel(t: usize, k: usize, n: usize, seed: u64) -> ReturnPanel {
    ReturnPanel::new(gaussian(t, k + n, seed), k, None).unwrap()
}

/// OLS through the normal equations and an LU solve: deliberately a
/// different route from the QR kernel under test.
pub fn normal_equations(x: &DMatrix<f64>, y: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
    let xtx = x.tr_mul(x);
    let xty = x.tr_mul(y);
    let beta = xtx.lu().solve(&xty).expect("full-rank design");
    let resid = y - x * &beta;
    (beta, resid)
}

pub fn ones(t: usize) -> DMatrix<f64> {
    DMatrix::from_element(t, 1, 1.0)
}

pub fn hcat(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let rows = blocks[0].nrows();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut c = 0;
    for b in blocks {
        out.columns_mut(c, b.ncols()).copy_from(b);
        c += b.ncols();
    }
    out
}

pub fn ssr(x: &DMatrix<f64>, y: &DVector<f64>) -> f64 {
    normal_equations(x, y).1.norm_squared()
}

/// Kolmogorov-Smirnov distance between a sample and a continuous CDF.
pub fn ks_distance(sample: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    sample.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sample.len() as f64;
    sample
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}
