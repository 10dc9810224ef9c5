//! Gradient descent on the discrete energy of closed curves.
//!
//! The objective is the product-trapezoid energy of the closed sample
//! polygon read spectrally: positions `X` determine speeds `|D1 X|`, the
//! arc-length table `C |D1 X|`, the length `h sum |D1 X|` and the diagonal
//! curvature term, and [`energy_gradient`] differentiates all of them.
//! Steps are taken along a Sobolev-smoothed gradient with backtracking, and
//! the curve is periodically resampled in arc length and normalized.

use std::f64::consts::{PI, TAU};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::curve::{resample_arclength, CurveDocument, ParamCurve, SampledCurve};
use crate::energy::{energy, QuadratureConfig, SELF_INTERSECTION_RATIO};
use crate::error::{invalid, Error, Result};
use crate::par::Backend;
use crate::spectral;
use crate::Vec3;

/// Relative width of the band around `D = l/2` treated as a tie.
const ANTIPODAL_TIE: f64 = 1e-10;

/// `6 pi + 4`: closed curves with energy below this are unknotted.
pub const UNKNOT_THRESHOLD: f64 = 6.0 * PI + 4.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DescentConfig {
    pub n: usize,
    pub max_iters: usize,
    /// Initial step; `None` uses `1e-3 l^2 / E`.
    pub step_init: Option<f64>,
    pub step_shrink: f64,
    pub step_grow: f64,
    /// Stop when `max_i |dE/dx_i| < grad_tol * E / l`.
    pub grad_tol: f64,
    /// Accepted steps between arc-length resamplings.
    pub resample_every: usize,
    /// Smallest chord/arc ratio between non-adjacent samples an iterate may have.
    pub min_separation: f64,
    /// Exponent `s` of the preconditioner `(1 + k^2)^(-s)`; `0` is plain gradient descent.
    pub sobolev_order: f64,
}

impl Default for DescentConfig {
    fn default() -> Self {
        Self {
            n: 200,
            max_iters: 2000,
            step_init: None,
            step_shrink: 0.5,
            step_grow: 1.1,
            grad_tol: 1e-4,
            resample_every: 10,
            min_separation: 1e-2,
            sobolev_order: 1.5,
        }
    }
}

impl DescentConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |x: f64| x > 0.0 && x.is_finite();
        if self.n < 16 {
            return Err(invalid("descent needs at least 16 samples"));
        }
        if self.max_iters == 0 || self.resample_every == 0 {
            return Err(invalid("max_iters and resample_every must be positive"));
        }
        if let Some(s) = self.step_init {
            if !positive(s) {
                return Err(invalid("step_init must be positive"));
            }
        }
        if !(positive(self.step_shrink) && self.step_shrink < 1.0 && self.step_grow > 1.0 && self.step_grow.is_finite()) {
            return Err(invalid("need 0 < step_shrink < 1 < step_grow"));
        }
        if !positive(self.grad_tol) || !positive(self.min_separation) || self.min_separation >= 1.0 {
            return Err(invalid("grad_tol must be positive and min_separation in (0, 1)"));
        }
        if !(self.sobolev_order >= 0.0 && self.sobolev_order.is_finite()) {
            return Err(invalid("sobolev_order must be nonnegative"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub iter: usize,
    pub energy: f64,
    pub step: f64,
    pub grad_norm: f64,
    pub min_ratio: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIters,
    /// Every trial step crossed the embeddedness guard until the step underflowed.
    Barrier,
    /// The line search underflowed without the guard being involved.
    StepUnderflow,
}

#[derive(Clone, Debug)]
pub struct MinimizeTrace {
    /// Record 0 is the starting curve; each later record is an accepted step.
    pub records: Vec<IterRecord>,
    pub final_curve: SampledCurve,
    pub termination: Termination,
    pub config: DescentConfig,
}

impl MinimizeTrace {
    pub fn final_energy(&self) -> f64 {
        self.records.last().map(|r| r.energy).unwrap_or(f64::NAN)
    }

    /// Writes `iter,energy,step,grad_norm,min_ratio` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut out = out;
        writeln!(out, "iter,energy,step,grad_norm,min_ratio")?;
        for r in &self.records {
            writeln!(out, "{},{:.17e},{:.17e},{:.17e},{:.17e}", r.iter, r.energy, r.step, r.grad_norm, r.min_ratio)?;
        }
        Ok(())
    }

    pub fn final_curve_document(&self) -> CurveDocument {
        self.final_curve.to_document()
    }
}

/// Unknottedness certificate read off a descent trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnknotReport {
    pub threshold: f64,
    /// First record whose energy is below the threshold.
    pub first_certified_iter: Option<usize>,
    pub final_energy: f64,
    pub min_energy: f64,
}

pub fn unknot_check_on_trace(trace: &MinimizeTrace) -> UnknotReport {
    UnknotReport {
        threshold: UNKNOT_THRESHOLD,
        first_certified_iter: trace.records.iter().find(|r| r.energy < UNKNOT_THRESHOLD).map(|r| r.iter),
        final_energy: trace.final_energy(),
        min_energy: trace.records.iter().map(|r| r.energy).fold(f64::INFINITY, f64::min),
    }
}

/// Energy of the closed polygon `points` and its smallest non-adjacent chord/arc ratio.
pub fn discrete_energy(points: &[Vec3]) -> Result<(f64, f64)> {
    let curve = SampledCurve::from_closed_points(points.to_vec())?;
    let report = energy(&curve, &QuadratureConfig::for_curve(&curve))?;
    Ok((report.energy, crate::energy::min_chord_arc_ratio(&curve)))
}

/// Discrete energy, its gradient with respect to the sample positions, and
/// the smallest non-adjacent chord/arc ratio.
pub struct Gradient {
    pub energy: f64,
    pub gradient: Vec<Vec3>,
    pub min_ratio: f64,
}

struct GradRow {
    energy: f64,
    gx: Vec3,
    gsigma: f64,
    gs: f64,
    gl: f64,
    min_ratio: f64,
    argmin: usize,
}

/// Exact gradient of the discrete energy of `curve.points()` (read as a
/// closed curve, as in [`SampledCurve::from_closed_points`]).
pub fn energy_gradient(curve: &SampledCurve) -> Result<Vec<Vec3>> {
    Ok(energy_and_gradient(curve.points(), Backend::default())?.gradient)
}

pub fn energy_and_gradient(points: &[Vec3], backend: Backend) -> Result<Gradient> {
    let n = points.len();
    // Validates immersion and sample count.
    SampledCurve::from_closed_points(points.to_vec())?;
    let h = TAU / n as f64;
    let a = spectral::derivative3(points, 1);
    let b = spectral::derivative3(points, 2);
    let sigma: Vec<f64> = a.iter().map(|v| v.norm()).collect();
    let s = spectral::cumulative_integral(&sigma);
    let l = h * sigma.iter().sum::<f64>();

    let rows = backend.map(n, |i| {
        let mut row = GradRow {
            energy: 0.0,
            gx: Vec3::zeros(),
            gsigma: 0.0,
            gs: 0.0,
            gl: 0.0,
            min_ratio: f64::INFINITY,
            argmin: i,
        };
        let h2 = h * h;
        for j in 0..n {
            if j == i {
                continue;
            }
            let dx = points[i] - points[j];
            let r2 = dx.norm_squared();
            let ds = s[i] - s[j];
            let direct = ds.abs();
            // At an exact tie between the two arcs D has a kink; take the
            // midpoint of the one-sided derivatives.
            let (d, dd_ds, dd_dl) = if (2.0 * direct - l).abs() <= ANTIPODAL_TIE * l {
                (direct.min(l - direct), 0.0, 0.5)
            } else if direct < l - direct {
                (direct, ds.signum(), 0.0)
            } else {
                (l - direct, -ds.signum(), 1.0)
            };
            if r2 == 0.0 {
                row.min_ratio = 0.0;
                row.argmin = j;
                return row;
            }
            let gap = i.abs_diff(j);
            if gap != 1 && gap != n - 1 {
                let ratio = r2.sqrt() / d;
                if ratio < row.min_ratio {
                    row.min_ratio = ratio;
                    row.argmin = j;
                }
            }
            let inv_r2 = 1.0 / r2;
            let inv_d2 = 1.0 / (d * d);
            let m = h2 * sigma[i] * sigma[j];
            row.energy += m * (inv_r2 - inv_d2);
            // Each unordered pair appears twice in the double sum.
            row.gx -= dx * (4.0 * m * inv_r2 * inv_r2);
            row.gsigma += 2.0 * h2 * sigma[j] * (inv_r2 - inv_d2);
            let dterm = 2.0 * m * inv_d2 / d;
            row.gs += 2.0 * dterm * dd_ds;
            row.gl += dterm * dd_dl;
        }
        row
    });

    let mut total = 0.0;
    let mut min_ratio = f64::INFINITY;
    let mut worst = (0, 0);
    let mut gx = vec![Vec3::zeros(); n];
    let mut gsigma = vec![0.0; n];
    let mut gs = vec![0.0; n];
    let mut gl = 0.0;
    for (i, row) in rows.into_iter().enumerate() {
        total += row.energy;
        gx[i] = row.gx;
        gsigma[i] = row.gsigma;
        gs[i] = row.gs;
        gl += row.gl;
        if row.min_ratio < min_ratio {
            min_ratio = row.min_ratio;
            worst = (i, row.argmin);
        }
    }
    if min_ratio < SELF_INTERSECTION_RATIO {
        return Err(Error::SelfIntersection {
            i: worst.0,
            j: worst.1,
            ratio: min_ratio,
        });
    }

    // Diagonal term h^2 |a x b|^2 / (12 |a|^4) per sample.
    let mut ga = vec![Vec3::zeros(); n];
    let mut gb = vec![Vec3::zeros(); n];
    let c = h * h / 12.0;
    for i in 0..n {
        let (ai, bi) = (a[i], b[i]);
        let aa = ai.norm_squared();
        let bb = bi.norm_squared();
        let ab = ai.dot(&bi);
        let q = ai.cross(&bi).norm_squared();
        total += c * q / (aa * aa);
        let dq_da = 2.0 * bb * ai - 2.0 * ab * bi;
        let dq_db = 2.0 * aa * bi - 2.0 * ab * ai;
        ga[i] = c * (dq_da / (aa * aa) - 4.0 * q * ai / (aa * aa * aa));
        gb[i] = c * dq_db / (aa * aa);
    }

    let ct = spectral::cumulative_integral_adjoint(&gs);
    for i in 0..n {
        let g_sigma = gsigma[i] + ct[i] + h * gl;
        ga[i] += a[i] * (g_sigma / sigma[i]);
    }
    let d1 = spectral::derivative3(&ga, 1);
    let d2 = spectral::derivative3(&gb, 2);
    for i in 0..n {
        gx[i] += d2[i] - d1[i];
    }
    Ok(Gradient {
        energy: total,
        gradient: gx,
        min_ratio,
    })
}

/// Centroid to the origin, length to `2 pi`, samples uniform in arc length.
pub fn gauge_fix(curve: &SampledCurve) -> Result<SampledCurve> {
    if !curve.is_closed() {
        return Err(invalid("gauge_fix needs a closed curve"));
    }
    let scale = TAU / curve.total_length();
    let shifted = curve.similarity(&nalgebra::Matrix3::identity(), scale, -curve.centroid() * scale)?;
    let uniform = resample_arclength(&shifted, curve.len())?;
    // Resampling moves the arc-length-weighted centroid by quadrature error only.
    let c = uniform.centroid();
    uniform.similarity(&nalgebra::Matrix3::identity(), 1.0, -c)
}

fn max_norm(g: &[Vec3]) -> f64 {
    g.iter().map(|v| v.amax()).fold(0.0, f64::max)
}

/// Descends from `start` sampled at `config.n` points.
pub fn minimize(start: &ParamCurve, config: &DescentConfig) -> Result<MinimizeTrace> {
    config.validate()?;
    minimize_sampled(&start.sample(config.n)?, config)
}

/// Descends from a closed sampled curve, resampled to `config.n` points.
pub fn minimize_sampled(start: &SampledCurve, config: &DescentConfig) -> Result<MinimizeTrace> {
    config.validate()?;
    if !start.is_closed() {
        return Err(invalid("descent needs a closed curve"));
    }
    let backend = Backend::default();
    let first = gauge_fix(&resample_arclength(start, config.n)?)?;
    let mut x: Vec<Vec3> = first.points().to_vec();
    let mut cur = energy_and_gradient(&x, backend)?;
    if cur.min_ratio < config.min_separation {
        return Err(invalid(format!(
            "start curve is too close to self-intersecting (chord/arc {:.3e} < {:.3e})",
            cur.min_ratio, config.min_separation
        )));
    }
    let mut length = SampledCurve::from_closed_points(x.clone())?.total_length();
    let mut step = config.step_init.unwrap_or(1e-3 * length * length / cur.energy);
    let floor = step * 1e-12;
    let mut records = vec![IterRecord {
        iter: 0,
        energy: cur.energy,
        step: 0.0,
        grad_norm: max_norm(&cur.gradient),
        min_ratio: cur.min_ratio,
    }];
    // Tangential motion only reparametrizes the curve, and the quadrature
    // can be lowered that way without changing the shape; steps are
    // restricted to normal motion, `d = -N S N g` with N the normal projector.
    let precondition = |g: &[Vec3], x: &[Vec3]| -> Vec<Vec3> {
        let t: Vec<Vec3> = spectral::derivative3(x, 1).iter().map(|v| v.normalize()).collect();
        let normal = |v: &[Vec3]| -> Vec<Vec3> { v.iter().zip(&t).map(|(v, t)| v - t * v.dot(t)).collect() };
        let ng = normal(g);
        if config.sobolev_order == 0.0 {
            ng
        } else {
            let s = config.sobolev_order;
            normal(&spectral::filter3(&ng, |k| (1.0 + k * k).powf(-s)))
        }
    };
    let mut accepted = 0usize;
    let termination = loop {
        let gnorm = max_norm(&cur.gradient);
        if gnorm < config.grad_tol * cur.energy / length {
            break Termination::Converged;
        }
        if accepted >= config.max_iters {
            break Termination::MaxIters;
        }
        let dir = precondition(&cur.gradient, &x);
        let mut guard_hit = false;
        let trial = loop {
            if step < floor {
                break None;
            }
            let candidate: Vec<Vec3> = x.iter().zip(&dir).map(|(p, d)| p - d * step).collect();
            match discrete_energy(&candidate) {
                Ok((e, ratio)) if ratio >= config.min_separation => {
                    if e < cur.energy {
                        break Some(candidate);
                    }
                    guard_hit = false;
                }
                Ok(_) | Err(Error::SelfIntersection { .. }) | Err(Error::NotImmersed { .. }) => guard_hit = true,
                // A step so long that the polygon no longer reads as a curve.
                Err(_) => guard_hit = false,
            }
            step *= config.step_shrink;
        };
        let Some(candidate) = trial else {
            break if guard_hit {
                Termination::Barrier
            } else {
                Termination::StepUnderflow
            };
        };
        x = candidate;
        accepted += 1;
        let taken = step;
        step *= config.step_grow;
        cur = energy_and_gradient(&x, backend)?;
        if accepted.is_multiple_of(config.resample_every) {
            let fixed = gauge_fix(&SampledCurve::from_closed_points(x.clone())?)?;
            if let Ok(g) = energy_and_gradient(fixed.points(), backend) {
                if g.energy <= cur.energy && g.min_ratio >= config.min_separation {
                    x = fixed.points().to_vec();
                    cur = g;
                }
            }
        }
        length = SampledCurve::from_closed_points(x.clone())?.total_length();
        records.push(IterRecord {
            iter: accepted,
            energy: cur.energy,
            step: taken,
            grad_norm: max_norm(&cur.gradient),
            min_ratio: cur.min_ratio,
        });
    };
    Ok(MinimizeTrace {
        records,
        final_curve: SampledCurve::from_closed_points(x)?,
        termination,
        config: config.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_value() {
        assert_eq!(format!("{UNKNOT_THRESHOLD:.5}"), "22.84956");
    }

    #[test]
    fn config_validation() {
        assert!(DescentConfig::default().validate().is_ok());
        let bad = DescentConfig {
            step_grow: 0.9,
            ..DescentConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn gradient_energy_matches_quadrature() {
        let c = ParamCurve::torus_knot(2, 3, 2.0, 1.0).unwrap().sample(48).unwrap();
        let g = energy_and_gradient(c.points(), Backend::Sequential).unwrap();
        let (e, _) = discrete_energy(c.points()).unwrap();
        assert!((g.energy - e).abs() < 1e-10 * e);
    }
}
