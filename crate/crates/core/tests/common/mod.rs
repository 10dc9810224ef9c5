//! Oracles and generators shared by the integration tests.
//!
//! Nothing here calls into the quadrature code of the crate: the reference
//! values are computed from the closed-form parametrizations with adaptive
//! Gauss-Kronrod integration.

#![allow(dead_code)]

use std::f64::consts::{PI, TAU};

use knot_energy::energy::min_chord_arc_ratio;
use knot_energy::{MoebiusMap, ParamCurve, Primitive, SampledCurve, Vec3};
use rand::Rng;

// Gauss-Kronrod 7-15 nodes on [0, 1] (positive half) and weights.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_0,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for k in 0..7 {
        let x = h * XGK[k];
        let s = f(c - x) + f(c + x);
        kron += WGK[k] * s;
        if k % 2 == 1 {
            gauss += WG[k / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

/// Adaptive Gauss-Kronrod integral of `f` over `[a, b]` to absolute tolerance `tol`.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, whole: (f64, f64), depth: u32) -> f64 {
        // Past this depth the estimate is dominated by rounding noise.
        if whole.1 <= tol || depth > 24 {
            return whole.0;
        }
        let m = 0.5 * (a + b);
        let left = gk15(f, a, m);
        let right = gk15(f, m, b);
        rec(f, a, m, 0.5 * tol, left, depth + 1) + rec(f, m, b, 0.5 * tol, right, depth + 1)
    }
    // A single 15-point panel can report a spuriously small error on a long
    // interval, so start from a uniform split.
    let pieces = 16;
    let w = (b - a) / pieces as f64;
    (0..pieces)
        .map(|k| {
            let (x, y) = (a + k as f64 * w, a + (k + 1) as f64 * w);
            rec(f, x, y, tol / pieces as f64, gk15(f, x, y), 0)
        })
        .sum()
}

/// Closed analytic curve given by its position and first two derivatives.
pub struct Analytic {
    pub pos: Box<dyn Fn(f64) -> Vec3 + Sync>,
    pub vel: Box<dyn Fn(f64) -> Vec3 + Sync>,
    pub acc: Box<dyn Fn(f64) -> Vec3 + Sync>,
    /// `pos(v) - pos(u)` without cancellation for nearby parameters.
    pub chord: Box<dyn Fn(f64, f64) -> Vec3 + Sync>,
}

impl Analytic {
    pub fn ellipse(a: f64, b: f64) -> Self {
        Self {
            pos: Box::new(move |u| Vec3::new(a * u.cos(), b * u.sin(), 0.0)),
            vel: Box::new(move |u| Vec3::new(-a * u.sin(), b * u.cos(), 0.0)),
            acc: Box::new(move |u| Vec3::new(-a * u.cos(), -b * u.sin(), 0.0)),
            chord: Box::new(move |u, v| {
                let (m, h) = (0.5 * (u + v), 0.5 * (v - u));
                Vec3::new(-2.0 * a * m.sin() * h.sin(), 2.0 * b * m.cos() * h.sin(), 0.0)
            }),
        }
    }

    pub fn speed(&self, u: f64) -> f64 {
        (self.vel)(u).norm()
    }

    pub fn curvature(&self, u: f64) -> f64 {
        let v = (self.vel)(u);
        let s = v.norm();
        v.cross(&(self.acc)(u)).norm() / (s * s * s)
    }

    /// Arc length from parameter 0 to `u`, `0 <= u <= 2 pi`.
    pub fn arclength(&self, u: f64) -> f64 {
        integrate(&|t| self.speed(t), 0.0, u, 1e-13)
    }

    pub fn length(&self) -> f64 {
        self.arclength(TAU)
    }

    /// Parameter at arc length `s` by bisection on the monotone arc-length function.
    pub fn param_at(&self, s: f64) -> f64 {
        let (mut lo, mut hi) = (0.0, TAU);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if self.arclength(mid) < s {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// The energy as an iterated integral: spectrally accurate trapezoid in
    /// `u` over `m` nodes, adaptive Gauss-Kronrod in `v` split at the point
    /// antipodal in arc length.
    pub fn energy(&self, m: usize) -> f64 {
        // Arc length on a fine panel table; inside a panel one fixed 15-point
        // Kronrod rule is exact to rounding for these smooth speeds.
        let panels = 2048;
        let width = TAU / panels as f64;
        let mut table = Vec::with_capacity(panels + 1);
        let mut acc = 0.0;
        table.push(0.0);
        for k in 0..panels {
            let a = k as f64 * width;
            acc += gk15(&|x| self.speed(x), a, a + width).0;
            table.push(acc);
        }
        let l = acc;
        let arc = |u: f64| -> f64 {
            let turns = (u / TAU).floor();
            let w = u - turns * TAU;
            let k = ((w / width) as usize).min(panels - 1);
            let a = k as f64 * width;
            turns * l + table[k] + gk15(&|x| self.speed(x), a, w).0
        };
        let param_at = |s: f64| -> f64 {
            let (mut lo, mut hi) = (0.0, 2.0 * TAU);
            for _ in 0..64 {
                let mid = 0.5 * (lo + hi);
                if arc(mid) < s {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        };
        let mut total = 0.0;
        for i in 0..m {
            let u = TAU * i as f64 / m as f64;
            let su = arc(u);
            let sp_u = self.speed(u);
            let k = self.curvature(u);
            // Integrate in the signed offset t = v - u so that short chords
            // and short arcs near the diagonal are formed from t directly.
            let kernel = |t: f64| -> f64 {
                if t.abs() < 1e-6 {
                    return k * k * sp_u * sp_u / 12.0;
                }
                let v = u + t;
                let r2 = (self.chord)(u, v).norm_squared();
                let d = if t.abs() < 0.05 {
                    gk15(&|x| self.speed(x), u.min(v), u.max(v)).0
                } else {
                    let ds = (arc(v) - su).rem_euclid(l);
                    ds.min(l - ds)
                };
                (1.0 / r2 - 1.0 / (d * d)) * sp_u * self.speed(v)
            };
            let tstar = param_at(su + 0.5 * l) - u;
            let (r1, r2) = (integrate(&kernel, tstar - TAU, 0.0, 1e-10), integrate(&kernel, 0.0, tstar, 1e-10));
            total += r1 + r2;
        }
        total * TAU / m as f64
    }
}

/// Random smooth closed curve: a unit circle plus decaying harmonics up to
/// `degree`. Rejected and redrawn until it is clearly embedded at 256 samples.
pub fn random_embedded_curve<R: Rng>(rng: &mut R, degree: usize, amplitude: f64) -> ParamCurve {
    loop {
        let mut cos = [vec![0.0; degree + 1], vec![0.0; degree + 1], vec![0.0; degree + 1]];
        let mut sin = cos.clone();
        cos[0][1] = 1.0;
        sin[1][1] = 1.0;
        for c in 0..3 {
            cos[c][0] = rng.gen_range(-1.0..1.0);
            for k in 1..=degree {
                let scale = amplitude / (k * k) as f64;
                cos[c][k] += rng.gen_range(-scale..scale);
                sin[c][k] += rng.gen_range(-scale..scale);
            }
        }
        let Ok(curve) = ParamCurve::new(cos, sin) else { continue };
        let Ok(sampled) = curve.sample(256) else { continue };
        if min_chord_arc_ratio(&sampled) > 0.05 {
            return curve;
        }
    }
}

/// Random rotation matrix from a random axis and angle.
pub fn random_rotation<R: Rng>(rng: &mut R) -> nalgebra::Matrix3<f64> {
    let z: f64 = rng.gen_range(-1.0..1.0);
    let phi: f64 = rng.gen_range(0.0..TAU);
    let r = (1.0 - z * z).sqrt();
    let axis = nalgebra::Unit::new_normalize(Vec3::new(r * phi.cos(), r * phi.sin(), z));
    *nalgebra::Rotation3::from_axis_angle(&axis, rng.gen_range(0.0..PI)).matrix()
}

/// Smallest and largest distance of the samples from their centroid.
pub fn radius_spread(curve: &SampledCurve) -> (f64, f64) {
    let n = curve.len() as f64;
    let c = curve.points().iter().fold(Vec3::zeros(), |a, p| a + p) / n;
    curve
        .points()
        .iter()
        .map(|p| (p - c).norm())
        .fold((f64::INFINITY, 0.0), |(lo, hi), r| (lo.min(r), hi.max(r)))
}

pub fn random_point<R: Rng>(rng: &mut R, half: f64) -> Vec3 {
    Vec3::new(rng.gen_range(-half..half), rng.gen_range(-half..half), rng.gen_range(-half..half))
}

/// One to three primitives, at least one of them an inversion.
pub fn random_map<R: Rng>(rng: &mut R) -> MoebiusMap {
    let count = rng.gen_range(1..=3);
    let mut prims = vec![Primitive::inversion(random_point(rng, 2.0), rng.gen_range(0.5..2.0))];
    for _ in 1..count {
        prims.push(match rng.gen_range(0..4) {
            0 => Primitive::inversion(random_point(rng, 2.0), rng.gen_range(0.5..2.0)),
            1 => Primitive::translation(random_point(rng, 1.0)),
            2 => Primitive::rotation(random_point(rng, 1.0) + Vec3::new(0.0, 0.0, 1.5), rng.gen_range(-3.0..3.0)),
            _ => Primitive::Scale {
                factor: rng.gen_range(0.5..2.0),
            },
        });
    }
    MoebiusMap::new(prims).unwrap()
}

/// Points whose conformal factor stays moderate are far from every pole.
pub fn tame<R: Rng>(rng: &mut R, map: &MoebiusMap) -> Vec3 {
    loop {
        let x = random_point(rng, 2.0);
        if let Ok(f) = map.conformal_factor(x) {
            if (0.05..20.0).contains(&f) {
                return x;
            }
        }
    }
}
