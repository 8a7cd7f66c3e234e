#![allow(dead_code)]

use phaseloc_core::C64;
use proptest::prelude::*;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn complex_vec(len: usize) -> impl Strategy<Value = Vec<C64>> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), len)
        .prop_map(|v| v.into_iter().map(|(re, im)| c(re, im)).collect())
}

/// Nonzero complex vector of length `dim`.
pub fn nonzero_vec(dim: usize) -> impl Strategy<Value = Vec<C64>> {
    complex_vec(dim).prop_filter("nonzero", |v| v.iter().map(|z| z.norm_sqr()).sum::<f64>() > 1e-3)
}

/// Dense matrices as plain row-major rows, independent of nalgebra.
pub type Dense = Vec<Vec<C64>>;

pub fn zeros(d: usize) -> Dense {
    vec![vec![c(0.0, 0.0); d]; d]
}

pub fn matmul(a: &Dense, b: &Dense) -> Dense {
    let d = a.len();
    let mut out = zeros(d);
    for i in 0..d {
        for k in 0..d {
            let aik = a[i][k];
            for j in 0..d {
                out[i][j] += aik * b[k][j];
            }
        }
    }
    out
}

pub fn matvec(a: &Dense, v: &[C64]) -> Vec<C64> {
    a.iter().map(|row| row.iter().zip(v).map(|(x, y)| x * y).sum()).collect()
}

pub fn rayleigh(a: &Dense, v: &[C64]) -> f64 {
    let av = matvec(a, v);
    let num: C64 = v.iter().zip(&av).map(|(x, y)| x.conj() * y).sum();
    num.re / v.iter().map(|z| z.norm_sqr()).sum::<f64>()
}

/// Largest eigenvalue of a positive semidefinite matrix: repeated squaring
/// (normalized by the largest entry) projects onto the top eigenspace, then
/// the Rayleigh quotient is taken from each start vector.
pub fn power_iteration_norm(a: &Dense, starts: &[Vec<C64>]) -> f64 {
    let mut m = a.clone();
    for _ in 0..60 {
        m = matmul(&m, &m);
        let scale = m.iter().flatten().map(|z| z.norm()).fold(0.0, f64::max);
        if scale == 0.0 {
            return 0.0;
        }
        for z in m.iter_mut().flatten() {
            *z /= scale;
        }
    }
    starts
        .iter()
        .map(|s| {
            let mut v = matvec(&m, s);
            for _ in 0..3 {
                let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                if n == 0.0 {
                    return 0.0;
                }
                v = matvec(a, &v.iter().map(|z| z / n).collect::<Vec<_>>());
            }
            if v.iter().all(|z| z.norm() == 0.0) {
                0.0
            } else {
                rayleigh(a, &v)
            }
        })
        .fold(0.0, f64::max)
}
