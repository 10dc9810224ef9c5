//! Projection crossing counts and the energy bounds built on them.
//!
//! Crossings are counted on the sample polygon projected along a direction,
//! by brute force over pairs of non-adjacent segments. A direction whose
//! projection is not generic at the working tolerance is reported as
//! degenerate and callers draw another.

use std::f64::consts::TAU;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::curve::SampledCurve;
use crate::descent::UNKNOT_THRESHOLD;
use crate::error::{invalid, Error, Result};
use crate::moebius::random_unit_vector;
use crate::par::Backend;
use crate::Vec3;

/// Orientation predicates closer to zero than this (on coordinates scaled
/// to the unit box) count as degenerate.
pub const ORIENTATION_TOLERANCE: f64 = 1e-12;

/// Intersections this close to a segment end, or to each other, are degenerate.
pub const DEGENERACY_TOLERANCE: f64 = 1e-9;

/// Slack allowed in `2 pi c + 4 <= E`.
pub const BOUND_TOLERANCE: f64 = 0.1;

pub const MIN_DIRECTIONS: usize = 50;

fn orthonormal_basis(d: Vec3) -> (Vec3, Vec3) {
    let helper = if d.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let e1 = d.cross(&helper).normalize();
    let e2 = d.cross(&e1);
    (e1, e2)
}

fn orient(p: [f64; 2], q: [f64; 2], r: [f64; 2]) -> f64 {
    (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])
}

/// Number of transverse double points of the curve's sample polygon
/// projected along `direction`.
pub fn projection_crossings(curve: &SampledCurve, direction: Vec3) -> Result<usize> {
    let norm = direction.norm();
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(invalid("projection direction must be nonzero"));
    }
    let (e1, e2) = orthonormal_basis(direction / norm);
    let raw: Vec<[f64; 2]> = curve.points().iter().map(|p| [p.dot(&e1), p.dot(&e2)]).collect();
    let n = raw.len();
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in &raw {
        for c in 0..2 {
            lo[c] = lo[c].min(p[c]);
            hi[c] = hi[c].max(p[c]);
        }
    }
    let center = [0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1])];
    let extent = 0.5 * (hi[0] - lo[0]).max(hi[1] - lo[1]);
    if extent == 0.0 {
        return Err(Error::DegenerateDirection);
    }
    let pts: Vec<[f64; 2]> = raw
        .iter()
        .map(|p| [(p[0] - center[0]) / extent, (p[1] - center[1]) / extent])
        .collect();
    let closed = curve.is_closed();
    let segs = if closed { n } else { n - 1 };
    let seg = |k: usize| (pts[k], pts[(k + 1) % n]);
    let bbox: Vec<[f64; 4]> = (0..segs)
        .map(|k| {
            let (a, b) = seg(k);
            [a[0].min(b[0]), a[0].max(b[0]), a[1].min(b[1]), a[1].max(b[1])]
        })
        .collect();

    let mut hits: Vec<[f64; 2]> = Vec::new();
    for i in 0..segs {
        for j in i + 2..segs {
            if closed && i == 0 && j == segs - 1 {
                continue;
            }
            let (bi, bj) = (&bbox[i], &bbox[j]);
            if bi[1] < bj[0] || bj[1] < bi[0] || bi[3] < bj[2] || bj[3] < bi[2] {
                continue;
            }
            let (a, b) = seg(i);
            let (c, d) = seg(j);
            let o1 = orient(a, b, c);
            let o2 = orient(a, b, d);
            let o3 = orient(c, d, a);
            let o4 = orient(c, d, b);
            let tol = ORIENTATION_TOLERANCE;
            if (o1 > tol && o2 > tol) || (o1 < -tol && o2 < -tol) || (o3 > tol && o4 > tol) || (o3 < -tol && o4 < -tol) {
                continue;
            }
            if [o1, o2, o3, o4].iter().any(|o| o.abs() <= tol) {
                return Err(Error::DegenerateDirection);
            }
            let t = o3 / (o3 - o4);
            let u = o1 / (o1 - o2);
            let ends = |x: f64| x < DEGENERACY_TOLERANCE || x > 1.0 - DEGENERACY_TOLERANCE;
            if ends(t) || ends(u) {
                return Err(Error::DegenerateDirection);
            }
            hits.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
        }
    }
    hits.sort_by(|p, q| p[0].total_cmp(&q[0]));
    for (k, p) in hits.iter().enumerate() {
        for q in &hits[k + 1..] {
            if q[0] - p[0] > DEGENERACY_TOLERANCE {
                break;
            }
            if (q[1] - p[1]).abs() <= DEGENERACY_TOLERANCE {
                return Err(Error::DegenerateDirection);
            }
        }
    }
    Ok(hits.len())
}

/// Source of projection directions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DirectionSampler {
    /// Halton points in bases 2 and 3 mapped area-preservingly to the sphere.
    Halton,
    /// Uniform random directions from a seeded ChaCha8 stream.
    Random { seed: u64 },
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut out = 0.0;
    let mut f = inv;
    while i > 0 {
        out += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    out
}

enum DirectionStream {
    Halton(u64),
    Random(ChaCha8Rng),
}

impl DirectionStream {
    fn new(sampler: DirectionSampler) -> Self {
        match sampler {
            DirectionSampler::Halton => DirectionStream::Halton(1),
            DirectionSampler::Random { seed } => DirectionStream::Random(ChaCha8Rng::seed_from_u64(seed)),
        }
    }

    fn next(&mut self) -> Vec3 {
        match self {
            DirectionStream::Halton(i) => {
                let z = 1.0 - 2.0 * radical_inverse(*i, 2);
                let phi = TAU * radical_inverse(*i, 3);
                *i += 1;
                let r = (1.0 - z * z).max(0.0).sqrt();
                Vec3::new(r * phi.cos(), r * phi.sin(), z)
            }
            DirectionStream::Random(rng) => random_unit_vector(rng),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossingReport {
    pub counts: Vec<usize>,
    pub directions: Vec<[f64; 3]>,
    /// Upper bound on the crossing number of the knot type.
    pub min_count: usize,
    /// Estimate of the average crossing number of this curve.
    pub mean_count: f64,
    pub directions_used: usize,
    pub degenerate_rejections: usize,
    pub sampler: DirectionSampler,
}

/// Crossing counts over `num_directions` generic directions.
///
/// Directions are taken from the sampler's stream in order, skipping
/// degenerate ones, so for a fixed sampler a longer run extends a shorter one.
pub fn crossing_stats(curve: &SampledCurve, num_directions: usize, sampler: DirectionSampler) -> Result<CrossingReport> {
    crossing_stats_with(curve, num_directions, sampler, Backend::default())
}

pub fn crossing_stats_with(
    curve: &SampledCurve,
    num_directions: usize,
    sampler: DirectionSampler,
    backend: Backend,
) -> Result<CrossingReport> {
    if num_directions < MIN_DIRECTIONS {
        return Err(invalid(format!("need at least {MIN_DIRECTIONS} directions, got {num_directions}")));
    }
    let mut stream = DirectionStream::new(sampler);
    let mut counts = Vec::with_capacity(num_directions);
    let mut directions = Vec::with_capacity(num_directions);
    let mut rejected = 0usize;
    while counts.len() < num_directions {
        let batch: Vec<Vec3> = (0..num_directions - counts.len()).map(|_| stream.next()).collect();
        let results = backend.map(batch.len(), |k| projection_crossings(curve, batch[k]));
        for (dir, res) in batch.iter().zip(results) {
            match res {
                Ok(c) => {
                    counts.push(c);
                    directions.push([dir.x, dir.y, dir.z]);
                }
                Err(Error::DegenerateDirection) => rejected += 1,
                Err(e) => return Err(e),
            }
        }
        if rejected > num_directions {
            return Err(Error::ExcessiveDegeneracy {
                rejected,
                accepted: counts.len(),
            });
        }
    }
    let min_count = counts.iter().copied().min().unwrap_or(0);
    let mean_count = counts.iter().sum::<usize>() as f64 / counts.len() as f64;
    Ok(CrossingReport {
        counts,
        directions,
        min_count,
        mean_count,
        directions_used: num_directions,
        degenerate_rejections: rejected,
        sampler,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub energy: f64,
    pub min_count: usize,
    /// `(E - 4) / 2 pi`.
    pub crossing_upper_from_energy: f64,
    /// `2 pi min_count + 4`.
    pub bound_lhs: f64,
    pub bound_holds: bool,
    pub unknot_certified: bool,
    pub threshold: f64,
    pub diagnostic: Option<String>,
}

/// Checks `2 pi min_count + 4 <= E` (up to [`BOUND_TOLERANCE`]) and the
/// unknot certificate `E < 6 pi + 4`.
pub fn check_energy_crossing_bound(energy: f64, report: &CrossingReport) -> BoundReport {
    let lhs = TAU * report.min_count as f64 + 4.0;
    let holds = lhs <= energy + BOUND_TOLERANCE;
    BoundReport {
        energy,
        min_count: report.min_count,
        crossing_upper_from_energy: (energy - 4.0) / TAU,
        bound_lhs: lhs,
        bound_holds: holds,
        unknot_certified: energy < UNKNOT_THRESHOLD,
        threshold: UNKNOT_THRESHOLD,
        diagnostic: (!holds).then(|| {
            format!(
                "2 pi * {} + 4 = {lhs:.6} exceeds energy {energy:.6}: the energy is underestimated or \
                 the projection crossings are overcounted",
                report.min_count
            )
        }),
    }
}

/// `(2^n, 2 * 24^n)`: bounds on the number of prime knot types with crossing number `n`.
pub fn knot_count_bounds(n: u32) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(invalid("crossing number must be at least 1"));
    }
    let n = n as f64;
    Ok((2f64.powf(n), 2.0 * 24f64.powf(n)))
}

/// `2 * 24^(-4 / 2 pi)`.
pub fn count_prefactor() -> f64 {
    2.0 * 24f64.powf(-4.0 / TAU)
}

/// `24^(1 / 2 pi)`.
pub fn count_base() -> f64 {
    24f64.powf(1.0 / TAU)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnotCountBound {
    pub energy: f64,
    pub bound: f64,
    /// Set when the energy is below that of the round circle, where the bound says nothing.
    pub below_minimum: bool,
}

/// Upper bound `2 * 24^((M - 4) / 2 pi)` on the number of knot types with
/// energy at most `M`.
pub fn energy_knot_count_bound(m: f64) -> KnotCountBound {
    if m < 4.0 || m.is_nan() {
        return KnotCountBound {
            energy: m,
            bound: 1.0,
            below_minimum: true,
        };
    }
    KnotCountBound {
        energy: m,
        bound: count_prefactor() * count_base().powf(m),
        below_minimum: false,
    }
}
