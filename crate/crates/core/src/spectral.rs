//! Spectral operations on periodic samples.
//!
//! Samples `f_j` live on the uniform grid `t_j = 2 pi j / N` of one period.
//! Their trigonometric interpolant uses wavenumbers `|k| < N/2`; for even `N`
//! the Nyquist mode is read as a pure cosine, so it vanishes from every odd
//! derivative and from the antiderivative.

use std::f64::consts::TAU;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::Vec3;

struct Plans {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

fn plans(n: usize) -> Plans {
    let mut planner = FftPlanner::new();
    Plans {
        forward: planner.plan_fft_forward(n),
        inverse: planner.plan_fft_inverse(n),
    }
}

/// Signed wavenumber of FFT bin `k`; `None` for the Nyquist bin.
fn wavenumber(k: usize, n: usize) -> Option<f64> {
    if 2 * k == n {
        None
    } else if 2 * k < n {
        Some(k as f64)
    } else {
        Some(k as f64 - n as f64)
    }
}

/// Applies a Fourier multiplier to real samples. `nyquist` is the factor
/// used on the Nyquist bin (even `N` only).
fn apply_multiplier(values: &[f64], multiplier: impl Fn(f64) -> Complex64, nyquist: f64) -> Vec<f64> {
    let n = values.len();
    let p = plans(n);
    let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    p.forward.process(&mut buf);
    for (k, c) in buf.iter_mut().enumerate() {
        *c *= match wavenumber(k, n) {
            Some(w) => multiplier(w),
            None => Complex64::new(nyquist, 0.0),
        };
    }
    p.inverse.process(&mut buf);
    let scale = 1.0 / n as f64;
    buf.iter().map(|c| c.re * scale).collect()
}

/// `order`-th derivative with respect to `t` of the interpolant, at the nodes.
pub fn derivative(values: &[f64], order: u32) -> Vec<f64> {
    let n = values.len() as f64;
    let nyquist = if order % 2 == 1 {
        0.0
    } else {
        let half = n / 2.0;
        if (order / 2) % 2 == 1 {
            -half.powi(order as i32)
        } else {
            half.powi(order as i32)
        }
    };
    apply_multiplier(values, |k| Complex64::new(0.0, k).powu(order), nyquist)
}

/// Componentwise [`derivative`] of a closed polyline of points.
pub fn derivative3(points: &[Vec3], order: u32) -> Vec<Vec3> {
    let comps: Vec<Vec<f64>> = (0..3)
        .map(|c| derivative(&points.iter().map(|p| p[c]).collect::<Vec<_>>(), order))
        .collect();
    (0..points.len())
        .map(|i| Vec3::new(comps[0][i], comps[1][i], comps[2][i]))
        .collect()
}

/// Zero-mean periodic antiderivative (multiplier `1/(ik)`).
fn periodic_antiderivative(values: &[f64]) -> Vec<f64> {
    apply_multiplier(
        values,
        |k| {
            if k == 0.0 {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(0.0, -1.0 / k)
            }
        },
        0.0,
    )
}

/// `s_j = integral_0^{t_j} f(t) dt` of the interpolant of `values`.
pub fn cumulative_integral(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let p = periodic_antiderivative(values);
    let p0 = p[0];
    p.iter()
        .enumerate()
        .map(|(j, pj)| mean * TAU * j as f64 / n as f64 + pj - p0)
        .collect()
}

/// Adjoint of [`cumulative_integral`]: returns `C^T g` where `s = C f`.
pub fn cumulative_integral_adjoint(g: &[f64]) -> Vec<f64> {
    let n = g.len();
    let moment: f64 = g
        .iter()
        .enumerate()
        .map(|(j, gj)| gj * TAU * j as f64 / n as f64)
        .sum::<f64>()
        / n as f64;
    let total: f64 = g.iter().sum();
    // P is a real antisymmetric circulant, so P^T = -P.
    let pg = periodic_antiderivative(g);
    let mut e0 = vec![0.0; n];
    e0[0] = 1.0;
    let pe0 = periodic_antiderivative(&e0);
    (0..n).map(|j| moment - pg[j] + total * pe0[j]).collect()
}

/// Real Fourier coefficients `(a_k, b_k)`, `k = 0..=N/2`, of the interpolant
/// `f(t) = sum_k a_k cos(k t) + b_k sin(k t)`.
pub fn real_coefficients(values: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = values.len();
    let p = plans(n);
    let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    p.forward.process(&mut buf);
    let kmax = n / 2;
    let mut a = vec![0.0; kmax + 1];
    let mut b = vec![0.0; kmax + 1];
    let nf = n as f64;
    a[0] = buf[0].re / nf;
    for k in 1..=kmax {
        if 2 * k == n {
            a[k] = buf[k].re / nf;
        } else {
            a[k] = 2.0 * buf[k].re / nf;
            b[k] = -2.0 * buf[k].im / nf;
        }
    }
    (a, b)
}

/// Multiplies the Fourier mode `k` of each coordinate by `weight(|k|)`.
pub fn filter3(vectors: &[Vec3], weight: impl Fn(f64) -> f64) -> Vec<Vec3> {
    let n = vectors.len();
    let nyquist = weight(n as f64 / 2.0);
    let comps: Vec<Vec<f64>> = (0..3)
        .map(|c| {
            let v: Vec<f64> = vectors.iter().map(|p| p[c]).collect();
            apply_multiplier(&v, |k| Complex64::new(weight(k.abs()), 0.0), nyquist)
        })
        .collect();
    (0..n)
        .map(|i| Vec3::new(comps[0][i], comps[1][i], comps[2][i]))
        .collect()
}
