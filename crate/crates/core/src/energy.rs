//! Quadrature of the knot energy
//!
//! `E = iint (1/|g(u)-g(v)|^2 - 1/D(u,v)^2) |g'(u)| |g'(v)| du dv`
//!
//! on the sample grid of a [`SampledCurve`]. The kernel has a removable
//! singularity on the diagonal with limit `kappa^2 |g'|^2 / 12`, so the
//! product trapezoid rule applies directly to smooth closed curves.

use serde::{Deserialize, Serialize};

use crate::curve::{arc_distance, CurvatureSample, SampledCurve};
use crate::error::{invalid, Error, Result};
use crate::par::{ordered_sum, Backend};

/// Evaluation is refused when a non-adjacent pair has chord/arc below this.
pub const SELF_INTERSECTION_RATIO: f64 = 1e-4;

/// How the `i == j` terms of the double sum are treated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagonalMode {
    /// Use the diagonal limit `kappa^2 |g'|^2 / 12`.
    #[default]
    Limit,
    /// Drop every pair with `|i - j| <= 1` (cyclically for closed curves).
    ExcludeAdjacent,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureConfig {
    pub n: usize,
    /// Truncation radius in arc length; `0` evaluates the full energy.
    pub epsilon: f64,
    pub diagonal_mode: DiagonalMode,
}

impl QuadratureConfig {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            epsilon: 0.0,
            diagonal_mode: DiagonalMode::Limit,
        }
    }

    pub fn for_curve(curve: &SampledCurve) -> Self {
        Self::new(curve.len())
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn with_diagonal_mode(mut self, mode: DiagonalMode) -> Self {
        self.diagonal_mode = mode;
        self
    }
}

/// Energy value with its two constituent integrals.
///
/// `regularization_term` is the signed contribution of `-1/D^2`, so
/// `energy = chord_term + regularization_term`. For the truncated energy of a
/// closed curve it approximates `4 - 2 l / epsilon`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub energy: f64,
    pub chord_term: f64,
    pub regularization_term: f64,
    #[serde(flatten)]
    pub config: QuadratureConfig,
    /// `|E_N - E_{N/2}|` for closed curves; the truncation-tail estimate for open curves.
    pub error_estimate: Option<f64>,
}

/// Kernel value at samples `i`, `j` (parameter measure, without quadrature weights).
pub fn integrand(curve: &SampledCurve, curvatures: &CurvatureSample, i: usize, j: usize) -> Result<f64> {
    let n = curve.len();
    if i >= n || j >= n {
        return Err(invalid(format!("sample index out of range ({i}, {j}) for {n} samples")));
    }
    let s = curve.speeds();
    if i == j {
        let k = curvatures.values()[i];
        return Ok(k * k * s[i] * s[i] / 12.0);
    }
    let r2 = (curve.points()[i] - curve.points()[j]).norm_squared();
    if r2 == 0.0 {
        return Err(Error::SelfIntersection { i, j, ratio: 0.0 });
    }
    let cum = curve.cum_arclength();
    let d = arc_distance(cum[i], cum[j], curve.total_length(), curve.is_closed());
    Ok((1.0 / r2 - 1.0 / (d * d)) * s[i] * s[j])
}

#[derive(Clone, Copy, Default)]
struct Row {
    chord: f64,
    reg: f64,
    diff: f64,
    min_ratio: f64,
    argmin: usize,
}

fn adjacent(i: usize, j: usize, n: usize, closed: bool) -> bool {
    let d = i.abs_diff(j);
    d <= 1 || (closed && d == n - 1)
}

fn row_sum(curve: &SampledCurve, mode: DiagonalMode, i: usize) -> Result<Row> {
    let n = curve.len();
    let x = curve.points();
    let s = curve.speeds();
    let w = curve.weights();
    let cum = curve.cum_arclength();
    let l = curve.total_length();
    let closed = curve.is_closed();
    let mut row = Row {
        min_ratio: f64::INFINITY,
        argmin: i,
        ..Row::default()
    };
    let (mut chord, mut reg, mut diff) = (0.0, 0.0, 0.0);
    let mi = w[i] * s[i];
    for j in 0..n {
        if j == i {
            continue;
        }
        let adj = adjacent(i, j, n, closed);
        if adj && mode == DiagonalMode::ExcludeAdjacent {
            continue;
        }
        let r2 = (x[i] - x[j]).norm_squared();
        let d = arc_distance(cum[i], cum[j], l, closed);
        if r2 == 0.0 {
            return Err(Error::SelfIntersection { i, j, ratio: 0.0 });
        }
        if !adj {
            let ratio = r2.sqrt() / d;
            if ratio < row.min_ratio {
                row.min_ratio = ratio;
                row.argmin = j;
            }
        }
        let m = mi * w[j] * s[j];
        let inv_r2 = 1.0 / r2;
        let inv_d2 = 1.0 / (d * d);
        chord += m * inv_r2;
        reg -= m * inv_d2;
        diff += m * (inv_r2 - inv_d2);
    }
    if mode == DiagonalMode::Limit {
        let k = curve.curvatures().values()[i];
        let dg = k * k * mi * mi / 12.0;
        chord += dg;
        diff += dg;
    }
    row.chord = chord;
    row.reg = reg;
    row.diff = diff;
    Ok(row)
}

struct Totals {
    chord: f64,
    reg: f64,
    energy: f64,
    min_ratio: f64,
}

fn reduce(rows: Vec<Result<Row>>, i_of: impl Fn(usize) -> usize) -> Result<Totals> {
    let mut out = Totals {
        chord: 0.0,
        reg: 0.0,
        energy: 0.0,
        min_ratio: f64::INFINITY,
    };
    let mut worst = None;
    for (idx, row) in rows.into_iter().enumerate() {
        let row = row?;
        out.chord += row.chord;
        out.reg += row.reg;
        out.energy += row.diff;
        if row.min_ratio < out.min_ratio {
            out.min_ratio = row.min_ratio;
            worst = Some((i_of(idx), row.argmin));
        }
    }
    if out.min_ratio < SELF_INTERSECTION_RATIO {
        let (i, j) = worst.unwrap();
        return Err(Error::SelfIntersection {
            i,
            j,
            ratio: out.min_ratio,
        });
    }
    Ok(out)
}

fn double_sum(curve: &SampledCurve, mode: DiagonalMode, backend: Backend) -> Result<Totals> {
    let rows = backend.map(curve.len(), |i| row_sum(curve, mode, i));
    reduce(rows, |i| i)
}

/// Smallest chord/arc ratio over non-adjacent sample pairs.
pub fn min_chord_arc_ratio(curve: &SampledCurve) -> f64 {
    let rows = Backend::default().map(curve.len(), |i| row_sum(curve, DiagonalMode::ExcludeAdjacent, i));
    rows.into_iter()
        .map(|r| r.map(|r| r.min_ratio).unwrap_or(0.0))
        .fold(f64::INFINITY, f64::min)
}

/// Energy of a closed curve. A positive `config.epsilon` evaluates the
/// truncated energy instead (see [`truncated_energy`]).
pub fn energy(curve: &SampledCurve, config: &QuadratureConfig) -> Result<EnergyReport> {
    energy_with(curve, config, Backend::default())
}

pub fn energy_with(curve: &SampledCurve, config: &QuadratureConfig, backend: Backend) -> Result<EnergyReport> {
    if !curve.is_closed() {
        return Err(invalid("energy() needs a closed curve; use open_energy() for open curves"));
    }
    if config.n != curve.len() {
        return Err(invalid(format!(
            "quadrature configured for {} samples but the curve has {}",
            config.n,
            curve.len()
        )));
    }
    if config.epsilon < 0.0 {
        return Err(invalid("epsilon must be nonnegative"));
    }
    if config.epsilon > 0.0 {
        let mut report = truncated_energy_with(curve, config.epsilon, backend)?;
        report.config.diagonal_mode = config.diagonal_mode;
        return Ok(report);
    }
    let t = double_sum(curve, config.diagonal_mode, backend)?;
    let error_estimate = match curve.every_other() {
        Some(half) => Some((double_sum(&half, config.diagonal_mode, backend)?.energy - t.energy).abs()),
        None => None,
    };
    Ok(EnergyReport {
        energy: t.energy,
        chord_term: t.chord,
        regularization_term: t.reg,
        config: *config,
        error_estimate,
    })
}

/// `4 - 2 l / epsilon`: the integral of `-1/D^2` over `D >= epsilon` for a
/// closed curve of length `l`.
pub fn regularization_closed_form(total_length: f64, epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon < total_length / 2.0) {
        return Err(invalid(format!(
            "epsilon must lie in (0, l/2) = (0, {}), got {epsilon}",
            total_length / 2.0
        )));
    }
    Ok(4.0 - 2.0 * total_length / epsilon)
}

/// Interior nodes required on each row of the truncated quadrature.
const MIN_TRUNCATED_NODES: usize = 12;

// Gregory end-correction coefficients for differences of order 1..=5.
const GREGORY: [f64; 5] = [1.0 / 12.0, 1.0 / 24.0, 19.0 / 720.0, 3.0 / 160.0, 863.0 / 60480.0];

/// Forward differences `Delta^k f_0`, `k = 0..=5`.
fn forward_differences(f: &[f64]) -> [f64; 6] {
    let mut work = [f[0], f[1], f[2], f[3], f[4], f[5]];
    let mut out = [0.0; 6];
    out[0] = work[0];
    for k in 1..6 {
        for m in 0..6 - k {
            work[m] = work[m + 1] - work[m];
        }
        out[k] = work[0];
    }
    out
}

/// `int_{-theta}^{0} p(tau) dtau` for the degree-5 Newton interpolant `p`
/// through `f_0..f_5` at `tau = 0..5`.
fn extrapolated_cell(diffs: &[f64; 6], theta: f64) -> f64 {
    if theta <= 0.0 {
        return 0.0;
    }
    // 3-point Gauss-Legendre is exact for degree 5.
    let nodes = [-(0.6_f64).sqrt(), 0.0, (0.6_f64).sqrt()];
    let weights = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];
    let mut acc = 0.0;
    for (x, wt) in nodes.iter().zip(weights) {
        let tau = -0.5 * theta * (1.0 - x);
        let mut binom = 1.0;
        let mut p = diffs[0];
        for (k, dk) in diffs.iter().enumerate().skip(1) {
            binom *= (tau - (k - 1) as f64) / k as f64;
            p += binom * dk;
        }
        acc += wt * p;
    }
    0.5 * theta * acc
}

/// `int_{x_0 - theta_a h}^{x_n + theta_b h} f` from values on the uniform
/// nodes `x_0..x_n`: Gregory-corrected trapezoid plus extrapolated end cells.
pub(crate) fn corrected_integral(f: &[f64], theta_a: f64, theta_b: f64, h: f64) -> f64 {
    let n = f.len();
    debug_assert!(n >= MIN_TRUNCATED_NODES);
    let reversed: Vec<f64> = f[n - 6..].iter().rev().copied().collect();
    let head = forward_differences(&f[..6]);
    let tail = forward_differences(&reversed);
    let mut trap = 0.5 * (f[0] + f[n - 1]);
    trap += ordered_sum(f[1..n - 1].iter().copied());
    // Backward differences at x_n equal (-1)^k times forward differences of the reversed run.
    let mut correction = 0.0;
    for k in 1..=5 {
        let backward = if k % 2 == 0 { tail[k] } else { -tail[k] };
        let sign_head = if k % 2 == 0 { 1.0 } else { -1.0 };
        correction -= GREGORY[k - 1] * (backward + sign_head * head[k]);
    }
    h * (trap + correction + extrapolated_cell(&head, theta_a) + extrapolated_cell(&tail, theta_b))
}

/// Energy restricted to pairs at arc distance at least `epsilon`.
///
/// Each row integral runs over the parameter interval where `D >= epsilon`;
/// its endpoints fall between grid nodes and are handled by the end
/// corrections of [`corrected_integral`], so the sharp cutoff costs no
/// accuracy.
pub fn truncated_energy(curve: &SampledCurve, epsilon: f64) -> Result<EnergyReport> {
    truncated_energy_with(curve, epsilon, Backend::default())
}

pub fn truncated_energy_with(curve: &SampledCurve, epsilon: f64, backend: Backend) -> Result<EnergyReport> {
    if !curve.is_closed() {
        return Err(invalid("the truncated energy is defined for closed curves"));
    }
    let l = curve.total_length();
    regularization_closed_form(l, epsilon)?;
    let t = truncated_sum(curve, epsilon, backend)?;
    let error_estimate = match curve.every_other() {
        Some(half) => truncated_sum(&half, epsilon, backend)
            .ok()
            .map(|h| (h.energy - t.energy).abs()),
        None => None,
    };
    Ok(EnergyReport {
        energy: t.energy,
        chord_term: t.chord,
        regularization_term: t.reg,
        config: QuadratureConfig::new(curve.len()).with_epsilon(epsilon),
        error_estimate,
    })
}

fn truncated_sum(curve: &SampledCurve, epsilon: f64, backend: Backend) -> Result<Totals> {
    let n = curve.len();
    let h = curve.weights()[0];
    let l = curve.total_length();
    let x = curve.points();
    let s = curve.speeds();
    let cum = curve.cum_arclength();
    let rows = backend.map(n, |i| -> Result<Row> {
        let a = curve.param_at_arclength(cum[i] + epsilon);
        let b = curve.param_at_arclength(cum[i] + l - epsilon);
        let m0 = (a / h - 1e-12).ceil() as i64;
        let m1 = (b / h + 1e-12).floor() as i64;
        let count = (m1 - m0 + 1).max(0) as usize;
        if count < MIN_TRUNCATED_NODES {
            return Err(invalid(format!(
                "epsilon {epsilon} leaves only {count} nodes per row at N = {n}; \
                 use a smaller epsilon or more samples"
            )));
        }
        let mut chord = Vec::with_capacity(count);
        let mut reg = Vec::with_capacity(count);
        let mut min_ratio = f64::INFINITY;
        let mut argmin = i;
        for m in m0..=m1 {
            let j = m.rem_euclid(n as i64) as usize;
            let r2 = (x[i] - x[j]).norm_squared();
            if r2 == 0.0 {
                return Err(Error::SelfIntersection { i, j, ratio: 0.0 });
            }
            let d = arc_distance(cum[i], cum[j], l, true);
            if !adjacent(i, j, n, true) {
                let ratio = r2.sqrt() / d;
                if ratio < min_ratio {
                    min_ratio = ratio;
                    argmin = j;
                }
            }
            let m = s[i] * s[j];
            chord.push(m / r2);
            reg.push(-m / (d * d));
        }
        let theta_a = (m0 as f64 * h - a) / h;
        let theta_b = (b - m1 as f64 * h) / h;
        let wi = curve.weights()[i];
        let c = wi * corrected_integral(&chord, theta_a, theta_b, h);
        let r = wi * corrected_integral(&reg, theta_a, theta_b, h);
        Ok(Row {
            chord: c,
            reg: r,
            diff: c + r,
            min_ratio,
            argmin,
        })
    });
    reduce(rows, |i| i)
}

/// Energy of an open curve through infinity.
///
/// The curve is cut to the arc-length windows `W/2`, `W` and `2W` around its
/// compact part (the image of the point opposite the puncture when the curve
/// came from [`crate::moebius::puncture_at`], otherwise the middle of the
/// curve). The reported energy is the Richardson extrapolation of the `W`
/// and `2W` values under a `1/W^2` tail, and `error_estimate` is the tail
/// estimate `|E(2W) - E(W)|`.
pub fn open_energy(curve: &SampledCurve, window: f64) -> Result<EnergyReport> {
    open_energy_with(curve, window, Backend::default())
}

/// Assumed decay order of the truncation tail of [`open_energy`].
pub const OPEN_TAIL_ORDER: i32 = 2;

pub fn open_energy_with(curve: &SampledCurve, window: f64, backend: Backend) -> Result<EnergyReport> {
    if curve.is_closed() {
        return Err(invalid("open_energy() needs an open curve"));
    }
    if !(window > 0.0) {
        return Err(invalid("window must be positive"));
    }
    let cum = curve.cum_arclength();
    let center = curve
        .puncture()
        .map(|p| p.center_arclength)
        .unwrap_or(0.5 * curve.total_length());
    let reach = center.min(curve.total_length() - center);
    if 2.0 * window > reach {
        return Err(invalid(format!(
            "window {window} too large: the curve extends only {reach} on its shorter side, \
             and the tail estimate needs twice the window"
        )));
    }
    let windowed = |w: f64| -> Result<Totals> {
        let lo = cum.partition_point(|&s| s < center - w);
        let hi = cum.partition_point(|&s| s <= center + w) - 1;
        if hi < lo + 8 {
            return Err(invalid(format!("window {w} keeps fewer than 8 samples")));
        }
        double_sum(&curve.open_window(lo..=hi), DiagonalMode::Limit, backend)
    };
    let half = windowed(0.5 * window)?;
    let base = windowed(window)?;
    let wide = windowed(2.0 * window)?;
    let tail = (wide.energy - base.energy).abs();
    let previous = (base.energy - half.energy).abs();
    let noise = 1e-9 * (1.0 + wide.energy.abs());
    if tail > previous && tail > noise {
        return Err(Error::NotAsymptoticallyStraight {
            previous,
            current: tail,
        });
    }
    let factor = 1.0 / (2f64.powi(OPEN_TAIL_ORDER) - 1.0);
    let extrapolate = |a: f64, b: f64| b + (b - a) * factor;
    let n = curve.open_window({
        let lo = cum.partition_point(|&s| s < center - 2.0 * window);
        let hi = cum.partition_point(|&s| s <= center + 2.0 * window) - 1;
        lo..=hi
    })
    .len();
    Ok(EnergyReport {
        energy: extrapolate(base.energy, wide.energy),
        chord_term: extrapolate(base.chord, wide.chord),
        regularization_term: extrapolate(base.reg, wide.reg),
        config: QuadratureConfig::new(n),
        error_estimate: Some(tail),
    })
}
