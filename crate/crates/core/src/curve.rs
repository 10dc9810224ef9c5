//! Smooth closed curves as trigonometric polynomials, and their samples.

use std::f64::consts::TAU;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::par::Backend;
use crate::spectral;
use crate::Vec3;

/// Arc-length tables are integrated on a grid this many times finer than the samples.
pub const ARCLENGTH_REFINEMENT: usize = 8;

/// Relative speed below which a curve is rejected as not immersed.
pub const IMMERSION_THRESHOLD: f64 = 1e-9;

/// Smallest sample count accepted anywhere in the crate.
pub const MIN_SAMPLES: usize = 8;

/// Position and first two derivatives at one parameter value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet {
    pub position: Vec3,
    pub velocity: Vec3,
    pub acceleration: Vec3,
}

impl Jet {
    pub fn speed(&self) -> f64 {
        self.velocity.norm()
    }

    /// `|v x a| / |v|^3`.
    pub fn curvature(&self) -> f64 {
        let s = self.speed();
        self.velocity.cross(&self.acceleration).norm() / (s * s * s)
    }
}

/// A closed curve `u -> sum_k cos_k cos(k u) + sin_k sin(k u)`, `u` in `[0, 2 pi)`.
///
/// `cos[c][k]` and `sin[c][k]` are the amplitudes of harmonic `k` in
/// coordinate `c`; `sin[c][0]` is always zero.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamCurve {
    cos: [Vec<f64>; 3],
    sin: [Vec<f64>; 3],
}

impl ParamCurve {
    pub fn new(cos: [Vec<f64>; 3], sin: [Vec<f64>; 3]) -> Result<Self> {
        let len = cos
            .iter()
            .chain(sin.iter())
            .map(Vec::len)
            .max()
            .unwrap_or(0);
        if len < 2 {
            return Err(invalid("a closed curve needs at least one nonconstant harmonic"));
        }
        let pad = |v: &[f64]| {
            let mut out = v.to_vec();
            out.resize(len, 0.0);
            out
        };
        let mut cos = [pad(&cos[0]), pad(&cos[1]), pad(&cos[2])];
        let mut sin = [pad(&sin[0]), pad(&sin[1]), pad(&sin[2])];
        for c in 0..3 {
            sin[c][0] = 0.0;
            if cos[c].iter().chain(sin[c].iter()).any(|x| !x.is_finite()) {
                return Err(invalid("non-finite Fourier coefficient"));
            }
        }
        let nonconstant = (0..3).any(|c| cos[c][1..].iter().chain(&sin[c][1..]).any(|&x| x != 0.0));
        if !nonconstant {
            return Err(invalid("degenerate curve: all nonconstant coefficients vanish"));
        }
        // Trailing all-zero harmonics only cost evaluation time.
        let mut last = len - 1;
        while last > 1 && (0..3).all(|c| cos[c][last] == 0.0 && sin[c][last] == 0.0) {
            last -= 1;
        }
        for c in 0..3 {
            cos[c].truncate(last + 1);
            sin[c].truncate(last + 1);
        }
        Ok(Self { cos, sin })
    }

    /// Round circle of the given radius in the xy-plane, centred at the origin.
    pub fn circle(radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(invalid(format!("circle radius must be positive, got {radius}")));
        }
        Self::ellipse(radius, radius)
    }

    /// Ellipse with semi-axes `a` (along x) and `b` (along y).
    pub fn ellipse(a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0 && b > 0.0) {
            return Err(invalid("ellipse semi-axes must be positive"));
        }
        Self::new(
            [vec![0.0, a], vec![0.0, 0.0], vec![0.0, 0.0]],
            [vec![0.0, 0.0], vec![0.0, b], vec![0.0, 0.0]],
        )
    }

    /// The `(p, q)` torus knot
    /// `((R + r cos qu) cos pu, (R + r cos qu) sin pu, r sin qu)`.
    pub fn torus_knot(p: u32, q: u32, major: f64, minor: f64) -> Result<Self> {
        if p == 0 || q == 0 {
            return Err(invalid("torus knot winding numbers must be positive"));
        }
        if gcd(p, q) != 1 {
            return Err(invalid(format!("torus knot ({p}, {q}) needs coprime windings")));
        }
        if !(major > minor && minor > 0.0) {
            return Err(invalid("torus knot radii must satisfy R > r > 0"));
        }
        let (p, q) = (p as usize, q as usize);
        let kmax = p + q;
        let mut cos = [vec![0.0; kmax + 1], vec![0.0; kmax + 1], vec![0.0; kmax + 1]];
        let mut sin = cos.clone();
        // (R + r cos qu) cos pu = R cos pu + r/2 [cos (p+q)u + cos (p-q)u]
        cos[0][p] += major;
        cos[0][p + q] += 0.5 * minor;
        cos[0][p.abs_diff(q)] += 0.5 * minor;
        // (R + r cos qu) sin pu = R sin pu + r/2 [sin (p+q)u + sin (p-q)u]
        sin[1][p] += major;
        sin[1][p + q] += 0.5 * minor;
        let sign = if p >= q { 1.0 } else { -1.0 };
        if p != q {
            sin[1][p.abs_diff(q)] += sign * 0.5 * minor;
        }
        sin[2][q] += minor;
        Self::new(cos, sin)
    }

    /// A figure-eight knot: `((2 + cos 2u) cos 3u, (2 + cos 2u) sin 3u, sin 4u)`.
    pub fn figure_eight() -> Result<Self> {
        let mut cos = [vec![0.0; 6], vec![0.0; 6], vec![0.0; 6]];
        let mut sin = cos.clone();
        cos[0][3] = 2.0;
        cos[0][5] = 0.5;
        cos[0][1] = 0.5;
        sin[1][3] = 2.0;
        sin[1][5] = 0.5;
        sin[1][1] = 0.5;
        sin[2][4] = 1.0;
        Self::new(cos, sin)
    }

    /// Named test curves: `circle`, `ellipse` (2:1), `trefoil` (torus (2,3), R=2, r=1),
    /// `figure-eight`.
    pub fn builtin(name: &str) -> Result<Self> {
        match name {
            "circle" => Self::circle(1.0),
            "ellipse" => Self::ellipse(2.0, 1.0),
            "trefoil" => Self::torus_knot(2, 3, 2.0, 1.0),
            "figure-eight" | "figure8" => Self::figure_eight(),
            other => Err(invalid(format!("unknown builtin curve `{other}`"))),
        }
    }

    /// Trigonometric interpolant through closed samples taken at `u_j = 2 pi j / N`.
    pub fn interpolate(points: &[Vec3]) -> Result<Self> {
        if points.len() < 3 {
            return Err(invalid("interpolation needs at least three points"));
        }
        let mut cos: [Vec<f64>; 3] = Default::default();
        let mut sin: [Vec<f64>; 3] = Default::default();
        for c in 0..3 {
            let v: Vec<f64> = points.iter().map(|p| p[c]).collect();
            let (a, b) = spectral::real_coefficients(&v);
            cos[c] = a;
            sin[c] = b;
        }
        Self::new(cos, sin)
    }

    pub fn cos_coefficients(&self) -> &[Vec<f64>; 3] {
        &self.cos
    }

    pub fn sin_coefficients(&self) -> &[Vec<f64>; 3] {
        &self.sin
    }

    /// Highest harmonic present.
    pub fn degree(&self) -> usize {
        self.cos[0].len() - 1
    }

    pub fn max_coefficient(&self) -> f64 {
        self.cos
            .iter()
            .chain(self.sin.iter())
            .flat_map(|v| v.iter())
            .fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    /// `x -> scale * rotation * x + translation` applied to the curve.
    pub fn similarity(&self, rotation: &Matrix3<f64>, scale: f64, translation: Vec3) -> Self {
        let mut cos = self.cos.clone();
        let mut sin = self.sin.clone();
        for k in 0..=self.degree() {
            let a = scale * rotation * Vec3::new(self.cos[0][k], self.cos[1][k], self.cos[2][k]);
            let b = scale * rotation * Vec3::new(self.sin[0][k], self.sin[1][k], self.sin[2][k]);
            for c in 0..3 {
                cos[c][k] = a[c];
                sin[c][k] = b[c];
            }
        }
        for c in 0..3 {
            cos[c][0] += translation[c];
        }
        Self { cos, sin }
    }

    pub fn jet(&self, u: f64) -> Jet {
        let mut pos = Vec3::zeros();
        let mut vel = Vec3::zeros();
        let mut acc = Vec3::zeros();
        let (s1, c1) = u.sin_cos();
        let (mut s, mut c) = (0.0_f64, 1.0_f64);
        for k in 0..=self.degree() {
            if k > 0 {
                if k % 64 == 0 {
                    (s, c) = (k as f64 * u).sin_cos();
                } else {
                    (s, c) = (s * c1 + c * s1, c * c1 - s * s1);
                }
            }
            let kf = k as f64;
            for d in 0..3 {
                let (a, b) = (self.cos[d][k], self.sin[d][k]);
                if a == 0.0 && b == 0.0 {
                    continue;
                }
                let value = a * c + b * s;
                pos[d] += value;
                vel[d] += kf * (b * c - a * s);
                acc[d] -= kf * kf * value;
            }
        }
        Jet {
            position: pos,
            velocity: vel,
            acceleration: acc,
        }
    }

    pub fn position(&self, u: f64) -> Vec3 {
        self.jet(u).position
    }

    fn immersion_floor(&self) -> f64 {
        IMMERSION_THRESHOLD * self.max_coefficient()
    }

    /// Curvature `|g' x g''| / |g'|^3` at parameter `u`.
    pub fn curvature_at(&self, u: f64) -> Result<f64> {
        let jet = self.jet(u);
        let speed = jet.speed();
        if speed < self.immersion_floor() {
            return Err(Error::NotImmersed { param: u, speed });
        }
        Ok(jet.curvature())
    }

    /// Samples at `u_i = 2 pi i / n` with a Simpson arc-length table.
    pub fn sample(&self, n: usize) -> Result<SampledCurve> {
        self.sample_with(n, Backend::default())
    }

    pub fn sample_with(&self, n: usize, backend: Backend) -> Result<SampledCurve> {
        if n < MIN_SAMPLES {
            return Err(invalid(format!("need at least {MIN_SAMPLES} samples, got {n}")));
        }
        let h = TAU / n as f64;
        let floor = self.immersion_floor();
        let jets = backend.map(n, |i| self.jet(i as f64 * h));
        for (i, jet) in jets.iter().enumerate() {
            let speed = jet.speed();
            if !(speed >= floor) {
                return Err(Error::NotImmersed {
                    param: i as f64 * h,
                    speed,
                });
            }
        }
        let refine = ARCLENGTH_REFINEMENT;
        let fine = backend.map(n * refine, |m| {
            self.jet(m as f64 * h / refine as f64).speed()
        });
        let at = |m: usize| fine[m % (n * refine)];
        // Per-interval Simpson on the fine grid, and on every other fine point.
        let intervals: Vec<(f64, f64)> = (0..n)
            .map(|i| {
                let base = i * refine;
                let hf = h / refine as f64;
                let mut fine_sum = at(base) + at(base + refine);
                for m in 1..refine {
                    fine_sum += if m % 2 == 1 { 4.0 } else { 2.0 } * at(base + m);
                }
                let mut coarse_sum = at(base) + at(base + refine);
                for m in 1..refine / 2 {
                    coarse_sum += if m % 2 == 1 { 4.0 } else { 2.0 } * at(base + 2 * m);
                }
                (fine_sum * hf / 3.0, coarse_sum * 2.0 * hf / 3.0)
            })
            .collect();
        let mut cum = Vec::with_capacity(n);
        let mut acc = 0.0;
        for (fine_len, _) in &intervals {
            cum.push(acc);
            acc += fine_len;
        }
        let total = acc;
        let coarse_total: f64 = intervals.iter().map(|(_, c)| c).sum();
        let length_error = ((total - coarse_total) / 15.0).abs() / total;

        let points = jets.iter().map(|j| j.position).collect();
        let speeds: Vec<f64> = jets.iter().map(Jet::speed).collect();
        let tangents = jets.iter().map(|j| j.velocity / j.speed()).collect();
        let curvatures = CurvatureSample::new(jets.iter().map(Jet::curvature).collect())?;
        SampledCurve::assemble(Parts {
            points,
            tangents,
            speeds,
            curvatures,
            params: (0..n).map(|i| i as f64 * h).collect(),
            weights: vec![h; n],
            cum_arclength: cum,
            total_length: total,
            closed: true,
            length_error,
            puncture: None,
        })
    }

    pub fn to_document(&self) -> CurveDocument {
        CurveDocument::Fourier {
            cos: self.cos.to_vec(),
            sin: self.sin.to_vec(),
        }
    }
}

fn gcd(a: u32, b: u32) -> u32 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Curvature values `kappa(u_i) >= 0` at the samples of a curve.
#[derive(Clone, Debug, PartialEq)]
pub struct CurvatureSample(Vec<f64>);

impl CurvatureSample {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|k| !(k.is_finite() && *k >= 0.0)) {
            return Err(invalid("curvature samples must be finite and nonnegative"));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

/// Bookkeeping for an open curve produced by inverting a closed curve about
/// one of its own points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PunctureInfo {
    /// Arc-length position of the puncture on the original curve.
    pub s0: f64,
    /// Inversion centre (the original curve point at `s0`).
    pub center: [f64; 3],
    pub radius: f64,
    /// Original arc length removed on each side of the puncture.
    pub removed_halfwidth: f64,
    /// Image arc-length coordinate of the point opposite the puncture.
    pub center_arclength: f64,
}

pub(crate) struct Parts {
    pub points: Vec<Vec3>,
    pub tangents: Vec<Vec3>,
    pub speeds: Vec<f64>,
    pub curvatures: CurvatureSample,
    pub params: Vec<f64>,
    pub weights: Vec<f64>,
    pub cum_arclength: Vec<f64>,
    pub total_length: f64,
    pub closed: bool,
    pub length_error: f64,
    pub puncture: Option<PunctureInfo>,
}

/// Ordered samples of a closed or open curve.
///
/// Closed curves are sampled at `t_i = 2 pi i / N` of some smooth periodic
/// parameter and carry the uniform quadrature weight `2 pi / N`; open curves
/// carry arbitrary increasing parameters with trapezoid weights. `speeds` are
/// `|d gamma / dt|` in that parameter.
#[derive(Clone, Debug)]
pub struct SampledCurve {
    points: Vec<Vec3>,
    tangents: Vec<Vec3>,
    speeds: Vec<f64>,
    curvatures: CurvatureSample,
    params: Vec<f64>,
    weights: Vec<f64>,
    cum_arclength: Vec<f64>,
    total_length: f64,
    closed: bool,
    length_error: f64,
    puncture: Option<PunctureInfo>,
}

impl SampledCurve {
    pub(crate) fn assemble(p: Parts) -> Result<Self> {
        let n = p.points.len();
        if n < MIN_SAMPLES {
            return Err(invalid(format!("need at least {MIN_SAMPLES} samples, got {n}")));
        }
        let lens = [
            p.tangents.len(),
            p.speeds.len(),
            p.curvatures.values().len(),
            p.params.len(),
            p.weights.len(),
            p.cum_arclength.len(),
        ];
        if lens.iter().any(|&l| l != n) {
            return Err(invalid("sample arrays have inconsistent lengths"));
        }
        if p.points.iter().any(|x| !x.iter().all(|c| c.is_finite())) {
            return Err(invalid("non-finite sample point"));
        }
        let last = p.cum_arclength[n - 1];
        let increasing = p.cum_arclength.windows(2).all(|w| w[1] > w[0])
            && (!p.closed || p.total_length > last);
        if !increasing {
            return Err(invalid("arc-length table is not strictly increasing"));
        }
        Ok(Self {
            points: p.points,
            tangents: p.tangents,
            speeds: p.speeds,
            curvatures: p.curvatures,
            params: p.params,
            weights: p.weights,
            cum_arclength: p.cum_arclength,
            total_length: p.total_length,
            closed: p.closed,
            length_error: p.length_error,
            puncture: p.puncture,
        })
    }

    /// Closed curve through `points`, read as samples at `t_j = 2 pi j / N`
    /// of its trigonometric interpolant. Derivatives and arc length are
    /// computed spectrally.
    pub fn from_closed_points(points: Vec<Vec3>) -> Result<Self> {
        let n = points.len();
        if n < MIN_SAMPLES {
            return Err(invalid(format!("need at least {MIN_SAMPLES} samples, got {n}")));
        }
        let d1 = spectral::derivative3(&points, 1);
        let d2 = spectral::derivative3(&points, 2);
        let scale = points.iter().fold(0.0_f64, |m, p| m.max(p.amax()));
        let floor = IMMERSION_THRESHOLD * scale.max(f64::MIN_POSITIVE);
        let h = TAU / n as f64;
        let mut speeds = Vec::with_capacity(n);
        for (i, v) in d1.iter().enumerate() {
            let s = v.norm();
            if !(s >= floor) {
                return Err(Error::NotImmersed {
                    param: i as f64 * h,
                    speed: s,
                });
            }
            speeds.push(s);
        }
        let tangents = d1.iter().zip(&speeds).map(|(v, s)| v / *s).collect();
        let curvatures = CurvatureSample::new(
            d1.iter()
                .zip(&d2)
                .zip(&speeds)
                .map(|((v, a), s)| v.cross(a).norm() / (s * s * s))
                .collect(),
        )?;
        let cum = spectral::cumulative_integral(&speeds);
        let total = speeds.iter().sum::<f64>() * h;
        SampledCurve::assemble(Parts {
            points,
            tangents,
            speeds,
            curvatures,
            params: (0..n).map(|i| i as f64 * h).collect(),
            weights: vec![h; n],
            cum_arclength: cum,
            total_length: total,
            closed: true,
            length_error: 0.0,
            puncture: None,
        })
    }

    /// Open curve through `points`, parametrised by sample index. Derivatives
    /// use second-order finite differences; each segment's arc length is its
    /// chord corrected by the local curvature.
    pub fn from_open_points(points: Vec<Vec3>) -> Result<Self> {
        let n = points.len();
        if n < MIN_SAMPLES {
            return Err(invalid(format!("need at least {MIN_SAMPLES} samples, got {n}")));
        }
        let p = &points;
        let d1: Vec<Vec3> = (0..n)
            .map(|i| match i {
                0 => (-3.0 * p[0] + 4.0 * p[1] - p[2]) / 2.0,
                i if i == n - 1 => (3.0 * p[n - 1] - 4.0 * p[n - 2] + p[n - 3]) / 2.0,
                i => (p[i + 1] - p[i - 1]) / 2.0,
            })
            .collect();
        let d2: Vec<Vec3> = (0..n)
            .map(|i| match i {
                0 => 2.0 * p[0] - 5.0 * p[1] + 4.0 * p[2] - p[3],
                i if i == n - 1 => 2.0 * p[n - 1] - 5.0 * p[n - 2] + 4.0 * p[n - 3] - p[n - 4],
                i => p[i + 1] - 2.0 * p[i] + p[i - 1],
            })
            .collect();
        let mut speeds = Vec::with_capacity(n);
        for (i, v) in d1.iter().enumerate() {
            let s = v.norm();
            if !(s > 0.0) {
                return Err(Error::NotImmersed {
                    param: i as f64,
                    speed: s,
                });
            }
            speeds.push(s);
        }
        let kappa: Vec<f64> = d1
            .iter()
            .zip(&d2)
            .zip(&speeds)
            .map(|((v, a), s)| v.cross(a).norm() / (s * s * s))
            .collect();
        let mut cum = vec![0.0; n];
        for i in 1..n {
            let chord = (p[i] - p[i - 1]).norm();
            let k = 0.5 * (kappa[i] + kappa[i - 1]);
            cum[i] = cum[i - 1] + chord * (1.0 + k * k * chord * chord / 24.0);
        }
        let total = cum[n - 1];
        let params: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let weights = trapezoid_weights(&params);
        SampledCurve::assemble(Parts {
            tangents: d1.iter().zip(&speeds).map(|(v, s)| v / *s).collect(),
            points,
            speeds,
            curvatures: CurvatureSample::new(kappa)?,
            params,
            weights,
            cum_arclength: cum,
            total_length: total,
            closed: false,
            length_error: 0.0,
            puncture: None,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn tangents(&self) -> &[Vec3] {
        &self.tangents
    }

    pub fn speeds(&self) -> &[f64] {
        &self.speeds
    }

    pub fn curvatures(&self) -> &CurvatureSample {
        &self.curvatures
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Quadrature weights in the sample parameter.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn cum_arclength(&self) -> &[f64] {
        &self.cum_arclength
    }

    pub fn total_length(&self) -> f64 {
        self.total_length
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    /// Relative error estimate of `total_length` (0 where the table is spectral).
    pub fn length_error_estimate(&self) -> f64 {
        self.length_error
    }

    pub fn puncture(&self) -> Option<&PunctureInfo> {
        self.puncture.as_ref()
    }

    /// Arc-length weighted centroid.
    pub fn centroid(&self) -> Vec3 {
        let mut acc = Vec3::zeros();
        let mut mass = 0.0;
        for i in 0..self.len() {
            let m = self.weights[i] * self.speeds[i];
            acc += m * self.points[i];
            mass += m;
        }
        acc / mass
    }

    /// Applies `x -> scale * rotation * x + translation`; `rotation` must be orthogonal.
    pub fn similarity(&self, rotation: &Matrix3<f64>, scale: f64, translation: Vec3) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(invalid("similarity scale must be positive"));
        }
        let mut out = self.clone();
        for p in &mut out.points {
            *p = scale * (rotation * *p) + translation;
        }
        for t in &mut out.tangents {
            *t = rotation * *t;
        }
        for s in &mut out.speeds {
            *s *= scale;
        }
        for c in &mut out.cum_arclength {
            *c *= scale;
        }
        out.total_length *= scale;
        out.curvatures = CurvatureSample(self.curvatures.0.iter().map(|k| k / scale).collect());
        if let Some(p) = &mut out.puncture {
            p.center_arclength *= scale;
        }
        Ok(out)
    }

    /// Every second sample, for N versus N/2 error estimates.
    pub(crate) fn every_other(&self) -> Option<Self> {
        let n = self.len();
        if self.closed && n % 2 == 1 {
            return None;
        }
        let keep: Vec<usize> = if self.closed {
            (0..n).step_by(2).collect()
        } else {
            let mut k: Vec<usize> = (0..n).step_by(2).collect();
            if *k.last().unwrap() != n - 1 {
                k.push(n - 1);
            }
            k
        };
        if keep.len() < MIN_SAMPLES {
            return None;
        }
        let mut out = self.select(&keep);
        if self.closed {
            out.weights = vec![2.0 * self.weights[0]; keep.len()];
        }
        Some(out)
    }

    /// Open sub-curve made of the samples with indices in `range`.
    pub(crate) fn open_window(&self, range: std::ops::RangeInclusive<usize>) -> Self {
        let keep: Vec<usize> = range.collect();
        self.select(&keep)
    }

    fn select(&self, keep: &[usize]) -> Self {
        let pick = |v: &[f64]| keep.iter().map(|&i| v[i]).collect::<Vec<_>>();
        let params = pick(&self.params);
        let weights = if self.closed {
            pick(&self.weights)
        } else {
            trapezoid_weights(&params)
        };
        let base = self.cum_arclength[keep[0]];
        let cum: Vec<f64> = keep.iter().map(|&i| self.cum_arclength[i] - base).collect();
        let total = if self.closed {
            self.total_length
        } else {
            *cum.last().unwrap()
        };
        let mut puncture = self.puncture.clone();
        if let Some(p) = &mut puncture {
            p.center_arclength -= base;
        }
        Self {
            points: keep.iter().map(|&i| self.points[i]).collect(),
            tangents: keep.iter().map(|&i| self.tangents[i]).collect(),
            speeds: pick(&self.speeds),
            curvatures: CurvatureSample(pick(&self.curvatures.0)),
            params,
            weights,
            cum_arclength: cum,
            total_length: total,
            closed: self.closed,
            length_error: self.length_error,
            puncture,
        }
    }

    /// Parameter at which the arc-length coordinate equals `s`.
    ///
    /// Closed curves accept any real `s` (periodic extension, `s + l` maps to
    /// `t + 2 pi`). Interpolation is cubic Hermite in `(t, s)` using the
    /// speeds as slopes, inverted by safeguarded Newton iteration.
    pub fn param_at_arclength(&self, s: f64) -> f64 {
        let n = self.len();
        let (wraps, s_red) = if self.closed {
            let k = (s / self.total_length).floor();
            (k, s - k * self.total_length)
        } else {
            (0.0, s.clamp(0.0, self.total_length))
        };
        let cum = &self.cum_arclength;
        let i = match cum.binary_search_by(|c| c.partial_cmp(&s_red).unwrap()) {
            Ok(i) => return self.params[i] + wraps * TAU,
            Err(0) => 0,
            Err(i) => i - 1,
        };
        let (t0, s0, v0) = (self.params[i], cum[i], self.speeds[i]);
        let (t1, s1, v1) = if i + 1 < n {
            (self.params[i + 1], cum[i + 1], self.speeds[i + 1])
        } else if self.closed {
            (TAU, self.total_length, self.speeds[0])
        } else {
            return self.params[n - 1];
        };
        let dt = t1 - t0;
        let eval = |x: f64| -> (f64, f64) {
            // Hermite basis on x in [0, 1].
            let x2 = x * x;
            let x3 = x2 * x;
            let h00 = 2.0 * x3 - 3.0 * x2 + 1.0;
            let h10 = x3 - 2.0 * x2 + x;
            let h01 = -2.0 * x3 + 3.0 * x2;
            let h11 = x3 - x2;
            let val = h00 * s0 + h10 * dt * v0 + h01 * s1 + h11 * dt * v1;
            let d = (6.0 * x2 - 6.0 * x) * s0
                + (3.0 * x2 - 4.0 * x + 1.0) * dt * v0
                + (-6.0 * x2 + 6.0 * x) * s1
                + (3.0 * x2 - 2.0 * x) * dt * v1;
            (val, d)
        };
        let (mut lo, mut hi) = (0.0, 1.0);
        let mut x = (s_red - s0) / (s1 - s0);
        for _ in 0..60 {
            let (val, d) = eval(x);
            let f = val - s_red;
            if f > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            let mut next = x - f / d;
            if !(next > lo && next < hi) || !next.is_finite() {
                next = 0.5 * (lo + hi);
            }
            if (next - x).abs() < 1e-16 {
                x = next;
                break;
            }
            x = next;
        }
        t0 + x * dt + wraps * TAU
    }

    pub fn to_document(&self) -> CurveDocument {
        CurveDocument::Samples {
            points: self.points.iter().map(|p| [p.x, p.y, p.z]).collect(),
            closed: self.closed,
        }
    }
}

pub(crate) fn trapezoid_weights(params: &[f64]) -> Vec<f64> {
    let n = params.len();
    (0..n)
        .map(|i| {
            let left = if i > 0 { params[i] - params[i - 1] } else { 0.0 };
            let right = if i + 1 < n { params[i + 1] - params[i] } else { 0.0 };
            0.5 * (left + right)
        })
        .collect()
}

/// Resamples a closed curve at `n` points equally spaced in arc length.
///
/// Positions come from the trigonometric interpolant of the samples; the
/// arc-length function is its spectral integral, inverted by Newton's method.
pub fn resample_arclength(curve: &SampledCurve, n: usize) -> Result<SampledCurve> {
    if !curve.is_closed() {
        return Err(invalid("arc-length resampling needs a closed curve"));
    }
    if n < MIN_SAMPLES {
        return Err(invalid(format!("need at least {MIN_SAMPLES} samples, got {n}")));
    }
    let m = curve.len();
    let h = TAU / m as f64;
    let l = curve.total_length();
    let interp = ParamCurve::interpolate(curve.points())?;
    // s(t) = l t / 2pi + periodic part; speeds give s'(t).
    let periodic: Vec<f64> = curve
        .cum_arclength()
        .iter()
        .enumerate()
        .map(|(j, s)| s - l * j as f64 * h / TAU)
        .collect();
    let periodic = TrigSeries::interpolate(&periodic);
    let speed = TrigSeries::interpolate(curve.speeds());
    let arclength = |t: f64| l * t / TAU + periodic.eval(t);
    let points = Backend::default().map(n, |k| {
        let target = l * k as f64 / n as f64;
        let mut t = curve.param_at_arclength(target);
        for _ in 0..8 {
            let f = arclength(t) - target;
            let step = f / speed.eval(t);
            t -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        interp.position(t)
    });
    SampledCurve::from_closed_points(points)
}

/// Scalar trigonometric interpolant.
struct TrigSeries {
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl TrigSeries {
    fn interpolate(values: &[f64]) -> Self {
        let (cos, sin) = spectral::real_coefficients(values);
        Self { cos, sin }
    }

    fn eval(&self, t: f64) -> f64 {
        let (s1, c1) = t.sin_cos();
        let (mut s, mut c) = (0.0_f64, 1.0_f64);
        let mut acc = self.cos[0];
        for k in 1..self.cos.len() {
            if k % 64 == 0 {
                (s, c) = (k as f64 * t).sin_cos();
            } else {
                (s, c) = (s * c1 + c * s1, c * c1 - s * s1);
            }
            acc += self.cos[k] * c + self.sin[k] * s;
        }
        acc
    }
}

/// On-disk curve formats.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CurveDocument {
    Fourier {
        cos: Vec<Vec<f64>>,
        sin: Vec<Vec<f64>>,
    },
    Samples {
        points: Vec<[f64; 3]>,
        closed: bool,
    },
}

/// A curve read from disk, before sampling.
#[derive(Clone, Debug)]
pub enum LoadedCurve {
    Fourier(ParamCurve),
    Samples(SampledCurve),
}

impl CurveDocument {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(self) -> Result<LoadedCurve> {
        match self {
            CurveDocument::Fourier { cos, sin } => {
                let three = |v: Vec<Vec<f64>>, name: &str| -> Result<[Vec<f64>; 3]> {
                    <[Vec<f64>; 3]>::try_from(v)
                        .map_err(|_| invalid(format!("`{name}` must hold exactly three coordinate lists")))
                };
                Ok(LoadedCurve::Fourier(ParamCurve::new(
                    three(cos, "cos")?,
                    three(sin, "sin")?,
                )?))
            }
            CurveDocument::Samples { points, closed } => {
                let pts: Vec<Vec3> = points.iter().map(|p| Vec3::new(p[0], p[1], p[2])).collect();
                let curve = if closed {
                    SampledCurve::from_closed_points(pts)?
                } else {
                    SampledCurve::from_open_points(pts)?
                };
                Ok(LoadedCurve::Samples(curve))
            }
        }
    }
}

/// Arc distance between arc-length coordinates: the shorter way round for
/// closed curves, the plain difference for open ones.
pub fn arc_distance(s_u: f64, s_v: f64, total_length: f64, closed: bool) -> f64 {
    let d = (s_u - s_v).abs();
    if closed {
        d.min(total_length - d)
    } else {
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn circle_samples() {
        let c = ParamCurve::circle(1.0).unwrap().sample(256).unwrap();
        assert!((c.total_length() - TAU).abs() < 1e-10);
        assert!(c.speeds().iter().all(|s| (s - 1.0).abs() < 1e-12));
        assert!(c.tangents().iter().all(|t| (t.norm() - 1.0).abs() < 1e-12));
        assert!(c.curvatures().values().iter().all(|k| (k - 1.0).abs() < 1e-12));
        let c = ParamCurve::circle(3.0).unwrap();
        assert!((c.curvature_at(0.7).unwrap() - 1.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(ParamCurve::circle(0.0).is_err());
        assert!(ParamCurve::circle(-1.0).is_err());
        assert!(ParamCurve::torus_knot(2, 4, 2.0, 1.0).is_err());
        assert!(ParamCurve::torus_knot(2, 3, 1.0, 1.0).is_err());
        assert!(ParamCurve::circle(1.0).unwrap().sample(4).is_err());
        assert!(ParamCurve::new([vec![1.0], vec![], vec![]], [vec![], vec![], vec![]]).is_err());
        // A curve that stops: x = cos u + cos(2u)/4 ... has cusps when the derivative vanishes.
        let cusp = ParamCurve::new(
            [vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 0.0], vec![0.0; 3]],
            [vec![0.0; 3], vec![0.0; 3], vec![0.0; 3]],
        )
        .unwrap();
        assert!(matches!(cusp.sample(16), Err(Error::NotImmersed { .. })));
    }

    #[test]
    fn torus_knot_coefficients_match_formula() {
        let k = ParamCurve::torus_knot(2, 3, 2.0, 1.0).unwrap();
        for &u in &[0.0, 0.3, 1.7, 4.0] {
            let (p, q) = (2.0_f64, 3.0_f64);
            let rr = 2.0 + (q * u).cos();
            let exact = Vec3::new(rr * (p * u).cos(), rr * (p * u).sin(), (q * u).sin());
            assert!((k.position(u) - exact).norm() < 1e-14);
        }
        let k = ParamCurve::torus_knot(3, 2, 2.0, 1.0).unwrap();
        let u = 0.9_f64;
        let rr = 2.0 + (2.0 * u).cos();
        let exact = Vec3::new(rr * (3.0 * u).cos(), rr * (3.0 * u).sin(), (2.0 * u).sin());
        assert!((k.position(u) - exact).norm() < 1e-14);
    }

    #[test]
    fn arc_distance_cases() {
        let l = 10.0;
        assert_eq!(arc_distance(0.0, l / 2.0, l, true), l / 2.0);
        assert!((arc_distance(0.1, l - 0.1, l, true) - 0.2).abs() < 1e-12);
        assert_eq!(arc_distance(1.0, 4.0, 123.0, false), 3.0);
    }

    #[test]
    fn param_at_arclength_inverts_table() {
        let c = ParamCurve::ellipse(2.0, 1.0).unwrap().sample(64).unwrap();
        for i in [0usize, 5, 31, 63] {
            let t = c.param_at_arclength(c.cum_arclength()[i]);
            assert!((t - c.params()[i]).abs() < 1e-14);
        }
        let t = c.param_at_arclength(c.cum_arclength()[3] + c.total_length());
        assert!((t - c.params()[3] - TAU).abs() < 1e-12);
    }

    #[test]
    fn document_round_trip() {
        let k = ParamCurve::torus_knot(2, 3, 2.0, 1.0).unwrap();
        let json = k.to_document().to_json().unwrap();
        match CurveDocument::from_json(&json).unwrap().load().unwrap() {
            LoadedCurve::Fourier(back) => assert_eq!(back, k),
            _ => panic!("expected fourier"),
        }
        assert!(CurveDocument::from_json("{\"kind\":\"fourier\"}").is_err());
    }
}
