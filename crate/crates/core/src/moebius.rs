//! Moebius transformations of R^3 plus the point at infinity.
//!
//! A [`MoebiusMap`] is an explicit list of primitives applied left to right:
//! sphere inversions and the similarities (translation, rotation, uniform
//! scaling). Conformal factors and jets are pushed through the list by the
//! chain rule, so no matrix normalisation is ever needed.

use std::f64::consts::{PI, TAU};

use nalgebra::{Matrix3, Rotation3, Unit};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::curve::{trapezoid_weights, CurvatureSample, Jet, ParamCurve, Parts, PunctureInfo, SampledCurve};
use crate::error::{invalid, Error, Result};
use crate::par::Backend;
use crate::spectral;
use crate::Vec3;

/// Samples closer than this multiple of the radius to an inversion centre are refused.
pub const POLE_GUARD: f64 = 1e-8;

/// Geometric growth of sample spacing away from a puncture.
pub const PUNCTURE_GRADING: f64 = 1.1;

/// Smallest sample spacing near a puncture, as a fraction of the curve length.
pub const PUNCTURE_MIN_SPACING: f64 = 1e-6;

/// A point of R^3 or the point at infinity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ExtPoint {
    Finite(Vec3),
    Infinity,
}

impl ExtPoint {
    pub fn finite(self) -> Option<Vec3> {
        match self {
            ExtPoint::Finite(x) => Some(x),
            ExtPoint::Infinity => None,
        }
    }
}

impl From<Vec3> for ExtPoint {
    fn from(x: Vec3) -> Self {
        ExtPoint::Finite(x)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Primitive {
    /// `x -> c + r^2 (x - c) / |x - c|^2`.
    Inversion { center: [f64; 3], radius: f64 },
    Translation { offset: [f64; 3] },
    /// Right-handed rotation by `angle` radians about `axis`.
    Rotation { axis: [f64; 3], angle: f64 },
    Scale { factor: f64 },
}

fn v(a: &[f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

impl Primitive {
    pub fn inversion(center: Vec3, radius: f64) -> Self {
        Primitive::Inversion {
            center: [center.x, center.y, center.z],
            radius,
        }
    }

    pub fn translation(offset: Vec3) -> Self {
        Primitive::Translation {
            offset: [offset.x, offset.y, offset.z],
        }
    }

    pub fn rotation(axis: Vec3, angle: f64) -> Self {
        Primitive::Rotation {
            axis: [axis.x, axis.y, axis.z],
            angle,
        }
    }

    fn validate(&self) -> Result<()> {
        let finite = |a: &[f64; 3]| a.iter().all(|x| x.is_finite());
        match self {
            Primitive::Inversion { center, radius } => {
                if !finite(center) || !(*radius > 0.0 && radius.is_finite()) {
                    return Err(invalid("inversion needs a finite centre and a positive radius"));
                }
            }
            Primitive::Translation { offset } => {
                if !finite(offset) {
                    return Err(invalid("translation offset must be finite"));
                }
            }
            Primitive::Rotation { axis, angle } => {
                if !finite(axis) || v(axis).norm() == 0.0 || !angle.is_finite() {
                    return Err(invalid("rotation needs a nonzero finite axis and a finite angle"));
                }
            }
            Primitive::Scale { factor } => {
                if !(*factor > 0.0 && factor.is_finite()) {
                    return Err(invalid("scale factor must be positive"));
                }
            }
        }
        Ok(())
    }

    fn rotation_matrix(axis: &[f64; 3], angle: f64) -> Matrix3<f64> {
        *Rotation3::from_axis_angle(&Unit::new_normalize(v(axis)), angle).matrix()
    }

    pub fn apply(&self, x: ExtPoint) -> ExtPoint {
        match (self, x) {
            (Primitive::Inversion { center, .. }, ExtPoint::Infinity) => ExtPoint::Finite(v(center)),
            (_, ExtPoint::Infinity) => ExtPoint::Infinity,
            (Primitive::Inversion { center, radius }, ExtPoint::Finite(x)) => {
                let y = x - v(center);
                let rho = y.norm_squared();
                if rho == 0.0 {
                    ExtPoint::Infinity
                } else {
                    ExtPoint::Finite(v(center) + y * (radius * radius / rho))
                }
            }
            (Primitive::Translation { offset }, ExtPoint::Finite(x)) => ExtPoint::Finite(x + v(offset)),
            (Primitive::Rotation { axis, angle }, ExtPoint::Finite(x)) => {
                ExtPoint::Finite(Self::rotation_matrix(axis, *angle) * x)
            }
            (Primitive::Scale { factor }, ExtPoint::Finite(x)) => ExtPoint::Finite(x * *factor),
        }
    }

    pub fn inverse(&self) -> Self {
        match self {
            Primitive::Inversion { .. } => self.clone(),
            Primitive::Translation { offset } => Primitive::Translation {
                offset: [-offset[0], -offset[1], -offset[2]],
            },
            Primitive::Rotation { axis, angle } => Primitive::Rotation {
                axis: *axis,
                angle: -angle,
            },
            Primitive::Scale { factor } => Primitive::Scale { factor: 1.0 / factor },
        }
    }

    /// Distance from `x` to the pole, relative to the inversion radius.
    fn pole_distance(&self, x: &Vec3) -> Option<f64> {
        match self {
            Primitive::Inversion { center, radius } => Some((x - v(center)).norm() / radius),
            _ => None,
        }
    }

    fn pole_error(&self) -> Error {
        match self {
            Primitive::Inversion { center, .. } => Error::Pole { center: *center },
            _ => unreachable!("only inversions have poles"),
        }
    }

    /// Linear expansion factor at a finite, non-polar point.
    fn factor(&self, x: &Vec3) -> Option<f64> {
        match self {
            Primitive::Inversion { center, radius } => {
                let rho = (x - v(center)).norm_squared();
                (rho > 0.0).then(|| radius * radius / rho)
            }
            Primitive::Scale { factor } => Some(*factor),
            _ => Some(1.0),
        }
    }

    fn jacobian(&self, x: &Vec3) -> Option<Matrix3<f64>> {
        match self {
            Primitive::Inversion { center, radius } => {
                let y = x - v(center);
                let rho = y.norm_squared();
                (rho > 0.0).then(|| {
                    (radius * radius / rho) * (Matrix3::identity() - 2.0 * y * y.transpose() / rho)
                })
            }
            Primitive::Translation { .. } => Some(Matrix3::identity()),
            Primitive::Rotation { axis, angle } => Some(Self::rotation_matrix(axis, *angle)),
            Primitive::Scale { factor } => Some(Matrix3::identity() * *factor),
        }
    }

    /// Image of a curve jet `(g, g', g'')`.
    fn push_jet(&self, jet: &Jet) -> Option<Jet> {
        match self {
            Primitive::Inversion { center, radius } => {
                let c = v(center);
                let y = jet.position - c;
                let (dy, ddy) = (jet.velocity, jet.acceleration);
                let rho = y.norm_squared();
                if rho == 0.0 {
                    return None;
                }
                let r2 = radius * radius;
                let ydy = y.dot(&dy);
                let position = c + y * (r2 / rho);
                let velocity = r2 * (dy / rho - 2.0 * ydy * y / (rho * rho));
                let acceleration = r2
                    * (ddy / rho - 2.0 * ydy * dy / (rho * rho)
                        - 2.0 * ((dy.dot(&dy) + y.dot(&ddy)) * y + ydy * dy) / (rho * rho)
                        + 8.0 * ydy * ydy * y / (rho * rho * rho));
                Some(Jet {
                    position,
                    velocity,
                    acceleration,
                })
            }
            _ => {
                let a = self.jacobian(&jet.position)?;
                Some(Jet {
                    position: self.apply(ExtPoint::Finite(jet.position)).finite()?,
                    velocity: a * jet.velocity,
                    acceleration: a * jet.acceleration,
                })
            }
        }
    }
}

/// Composition of primitives, applied left to right.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MoebiusMap {
    primitives: Vec<Primitive>,
}

impl MoebiusMap {
    pub fn identity() -> Self {
        Self::default()
    }

    pub fn new(primitives: Vec<Primitive>) -> Result<Self> {
        for p in &primitives {
            p.validate()?;
        }
        Ok(Self { primitives })
    }

    pub fn inversion(center: Vec3, radius: f64) -> Result<Self> {
        Self::new(vec![Primitive::inversion(center, radius)])
    }

    pub fn primitives(&self) -> &[Primitive] {
        &self.primitives
    }

    /// `self` followed by `other`.
    pub fn then(mut self, other: &MoebiusMap) -> Self {
        self.primitives.extend(other.primitives.iter().cloned());
        self
    }

    pub fn inverse(&self) -> Self {
        Self {
            primitives: self.primitives.iter().rev().map(Primitive::inverse).collect(),
        }
    }

    pub fn apply(&self, x: ExtPoint) -> ExtPoint {
        self.primitives.iter().fold(x, |p, prim| prim.apply(p))
    }

    pub fn apply_point(&self, x: Vec3) -> ExtPoint {
        self.apply(ExtPoint::Finite(x))
    }

    /// Walks `x` through the primitives, failing if it meets a pole.
    fn trace<T>(&self, x: Vec3, mut step: impl FnMut(&Primitive, &Vec3) -> Option<T>) -> Result<(Vec3, Vec<T>)> {
        let mut cur = x;
        let mut out = Vec::with_capacity(self.primitives.len());
        for p in &self.primitives {
            let value = step(p, &cur).ok_or_else(|| p.pole_error())?;
            out.push(value);
            cur = p.apply(ExtPoint::Finite(cur)).finite().ok_or_else(|| p.pole_error())?;
        }
        Ok((cur, out))
    }

    /// Linear expansion factor `||T'(x)||`: the product of the primitive
    /// factors at the successive intermediate images of `x`.
    pub fn conformal_factor(&self, x: Vec3) -> Result<f64> {
        let (_, factors) = self.trace(x, |p, y| p.factor(y))?;
        Ok(factors.iter().product())
    }

    pub fn jacobian(&self, x: Vec3) -> Result<Matrix3<f64>> {
        let (_, jacs) = self.trace(x, |p, y| p.jacobian(y))?;
        Ok(jacs.iter().fold(Matrix3::identity(), |acc, j| j * acc))
    }

    fn push_jet(&self, jet: Jet) -> Result<Jet> {
        self.primitives.iter().try_fold(jet, |j, p| p.push_jet(&j).ok_or_else(|| p.pole_error()))
    }

    fn check_pole_distance(&self, x: Vec3) -> Result<()> {
        let mut cur = x;
        for p in &self.primitives {
            if let Some(d) = p.pole_distance(&cur) {
                if d < POLE_GUARD {
                    return Err(p.pole_error());
                }
            }
            cur = p.apply(ExtPoint::Finite(cur)).finite().ok_or_else(|| p.pole_error())?;
        }
        Ok(())
    }

    /// One-line human-readable description.
    pub fn describe(&self) -> String {
        if self.primitives.is_empty() {
            return "identity".to_string();
        }
        self.primitives
            .iter()
            .map(|p| match p {
                Primitive::Inversion { center, radius } => format!(
                    "inv(c=[{:.4},{:.4},{:.4}],r={:.4})",
                    center[0], center[1], center[2], radius
                ),
                Primitive::Translation { offset } => {
                    format!("trans([{:.4},{:.4},{:.4}])", offset[0], offset[1], offset[2])
                }
                Primitive::Rotation { axis, angle } => {
                    format!("rot([{:.4},{:.4},{:.4}],{:.4})", axis[0], axis[1], axis[2], angle)
                }
                Primitive::Scale { factor } => format!("scale({factor:.4})"),
            })
            .collect::<Vec<_>>()
            .join(" ; ")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let map: MoebiusMap = serde_json::from_str(text)?;
        Self::new(map.primitives)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

/// `| ||T'(x)|| ||T'(y)|| / |Tx - Ty|^2 - 1 / |x - y|^2 |`, which vanishes
/// for every Moebius map.
pub fn chord_identity_residual(map: &MoebiusMap, x: Vec3, y: Vec3) -> Result<f64> {
    if x == y {
        return Err(invalid("chord identity needs distinct points"));
    }
    let fx = map.conformal_factor(x)?;
    let fy = map.conformal_factor(y)?;
    let (tx, ty) = match (map.apply_point(x), map.apply_point(y)) {
        (ExtPoint::Finite(a), ExtPoint::Finite(b)) => (a, b),
        _ => return Err(invalid("an image point is at infinity")),
    };
    Ok((fx * fy / (tx - ty).norm_squared() - 1.0 / (x - y).norm_squared()).abs())
}

/// Image of a sampled curve that stays in R^3.
///
/// Points are mapped, tangents pushed forward by the Jacobian and speeds
/// multiplied by the conformal factor. For closed curves the arc-length table
/// and the curvature are rebuilt spectrally in the original sample parameter;
/// open curves are rebuilt from their image points.
pub fn apply_to_curve(map: &MoebiusMap, curve: &SampledCurve) -> Result<SampledCurve> {
    for &x in curve.points() {
        map.check_pole_distance(x)?;
    }
    let images: Vec<(Vec3, Vec3, f64)> = curve
        .points()
        .iter()
        .zip(curve.tangents())
        .map(|(&x, t)| -> Result<(Vec3, Vec3, f64)> {
            let jac = map.jacobian(x)?;
            let factor = map.conformal_factor(x)?;
            let image = map.apply_point(x).finite().ok_or_else(|| invalid("image at infinity"))?;
            Ok((image, (jac * t).normalize(), factor))
        })
        .collect::<Result<_>>()?;
    let points: Vec<Vec3> = images.iter().map(|i| i.0).collect();
    if !curve.is_closed() {
        return SampledCurve::from_open_points(points);
    }
    let n = curve.len();
    let speeds: Vec<f64> = images.iter().zip(curve.speeds()).map(|(i, s)| i.2 * s).collect();
    let d1 = spectral::derivative3(&points, 1);
    let d2 = spectral::derivative3(&points, 2);
    let curvatures = CurvatureSample::new(
        d1.iter()
            .zip(&d2)
            .map(|(a, b)| {
                let s = a.norm();
                a.cross(b).norm() / (s * s * s)
            })
            .collect(),
    )?;
    let h = curve.weights()[0];
    let cum = spectral::cumulative_integral(&speeds);
    let total = speeds.iter().sum::<f64>() * h;
    SampledCurve::assemble(Parts {
        tangents: images.iter().map(|i| i.1).collect(),
        points,
        speeds,
        curvatures,
        params: curve.params().to_vec(),
        weights: vec![h; n],
        cum_arclength: cum,
        total_length: total,
        closed: true,
        length_error: 0.0,
        puncture: None,
    })
}

// 8-point Gauss-Legendre rule on [-1, 1].
const GL8_NODES: [f64; 8] = [
    -0.960_289_856_497_536_2,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329_0,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329_0,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_2,
];
const GL8_WEIGHTS: [f64; 8] = [
    0.101_228_536_290_376_3,
    0.222_381_034_453_374_5,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362_0,
    0.362_683_783_378_362_0,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

/// Parameter offsets in `(0, pi]` from a puncture: geometric grading from
/// `min_step` by `PUNCTURE_GRADING` up to `max_step`, then uniform.
fn graded_offsets(min_step: f64, max_step: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut d = min_step;
    let mut step = min_step;
    while d < PI && step < max_step {
        out.push(d);
        step *= PUNCTURE_GRADING;
        d += step;
    }
    let last = out.last().copied().unwrap_or(0.0);
    let m = ((PI - last) / max_step).ceil().max(1.0) as usize;
    let uniform = (PI - last) / m as f64;
    out.extend((1..=m).map(|k| last + k as f64 * uniform));
    out
}

/// Inverts a closed curve about its own point at arc length `s0`.
///
/// The image passes through infinity and is returned as an open curve
/// sampled in the original parameter offset from the puncture, on a grid
/// refined geometrically towards the puncture. The neighbourhood of the
/// puncture closer than [`PUNCTURE_MIN_SPACING`]` * l` is removed; it maps to
/// the two far ends of the image. Image derivatives are exact (the curve's
/// trigonometric interpolant pushed through the inversion) and the image
/// arc length is integrated interval by interval with Gauss-Legendre.
pub fn puncture_at(curve: &SampledCurve, s0: f64, inversion_radius: f64) -> Result<SampledCurve> {
    if !curve.is_closed() {
        return Err(invalid("puncture_at needs a closed curve"));
    }
    if !(inversion_radius > 0.0 && inversion_radius.is_finite()) {
        return Err(invalid("inversion radius must be positive"));
    }
    let l = curve.total_length();
    let s0 = s0.rem_euclid(l);
    let interp = ParamCurve::interpolate(curve.points())?;
    let t0 = curve.param_at_arclength(s0);
    let base = interp.jet(t0);
    let center = base.position;
    let map = MoebiusMap::inversion(center, inversion_radius)?;
    let min_step = PUNCTURE_MIN_SPACING * l / base.speed();
    let h = TAU / curve.len() as f64;
    let half = graded_offsets(min_step, h);
    let mut offsets: Vec<f64> = half.clone();
    offsets.extend(half.iter().rev().skip(1).map(|d| TAU - d));
    let mid = half.len() - 1;

    let backend = Backend::default();
    let jets = backend.map(offsets.len(), |k| map.push_jet(interp.jet(t0 + offsets[k])));
    let jets: Vec<Jet> = jets.into_iter().collect::<Result<_>>()?;
    let r2 = inversion_radius * inversion_radius;
    let image_speed = |t: f64| {
        let j = interp.jet(t);
        r2 * j.speed() / (j.position - center).norm_squared()
    };
    let segments = backend.map(offsets.len() - 1, |k| {
        let (a, b) = (t0 + offsets[k], t0 + offsets[k + 1]);
        let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
        half * GL8_NODES
            .iter()
            .zip(GL8_WEIGHTS)
            .map(|(x, w)| w * image_speed(mid + half * x))
            .sum::<f64>()
    });
    let mut cum = Vec::with_capacity(offsets.len());
    let mut acc = 0.0;
    cum.push(0.0);
    for seg in &segments {
        acc += seg;
        cum.push(acc);
    }
    let speeds: Vec<f64> = jets.iter().map(Jet::speed).collect();
    let curvatures = CurvatureSample::new(jets.iter().map(Jet::curvature).collect())?;
    let info = PunctureInfo {
        s0,
        center: [center.x, center.y, center.z],
        radius: inversion_radius,
        removed_halfwidth: min_step * base.speed(),
        center_arclength: cum[mid],
    };
    SampledCurve::assemble(Parts {
        points: jets.iter().map(|j| j.position).collect(),
        tangents: jets.iter().map(|j| j.velocity / j.speed()).collect(),
        speeds,
        curvatures,
        weights: trapezoid_weights(&offsets),
        params: offsets,
        total_length: acc,
        cum_arclength: cum,
        closed: false,
        length_error: 0.0,
        puncture: Some(info),
    })
}

/// Largest window [`crate::energy::open_energy`] accepts for a punctured curve.
pub fn max_open_window(curve: &SampledCurve) -> f64 {
    let center = curve
        .puncture()
        .map(|p| p.center_arclength)
        .unwrap_or(0.5 * curve.total_length());
    0.5 * center.min(curve.total_length() - center)
}

/// Random inversion whose image of `curve` stays bounded, followed by a
/// random rotation.
///
/// The inversion centre is drawn at distance `[1.5, 3] R` from the centroid,
/// where `R` is the curve's bounding radius about its centroid, and the
/// radius uniformly in `[0.5, 2] R`.
pub fn random_bounded_inversion<R: Rng + ?Sized>(curve: &SampledCurve, rng: &mut R) -> MoebiusMap {
    let centroid = curve.centroid();
    let bound = curve
        .points()
        .iter()
        .map(|p| (p - centroid).norm())
        .fold(0.0_f64, f64::max);
    let dir = random_unit_vector(rng);
    let dist = rng.gen_range(1.5..3.0) * bound;
    let radius = rng.gen_range(0.5..2.0) * bound;
    let axis = random_unit_vector(rng);
    let angle = rng.gen_range(0.0..TAU);
    MoebiusMap {
        primitives: vec![
            Primitive::inversion(centroid + dir * dist, radius),
            Primitive::rotation(axis, angle),
        ],
    }
}

/// Uniform direction on the unit sphere.
pub fn random_unit_vector<R: Rng + ?Sized>(rng: &mut R) -> Vec3 {
    let z: f64 = rng.gen_range(-1.0..1.0);
    let phi: f64 = rng.gen_range(0.0..TAU);
    let r = (1.0 - z * z).sqrt();
    Vec3::new(r * phi.cos(), r * phi.sin(), z)
}
