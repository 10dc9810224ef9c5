mod common;

use common::{random_embedded_curve, random_map, random_point, random_rotation, tame};
use knot_energy::energy::{energy, open_energy};
use knot_energy::moebius::{
    apply_to_curve, chord_identity_residual, max_open_window, puncture_at, random_bounded_inversion,
};
use knot_energy::{Error, ExtPoint, MoebiusMap, ParamCurve, Primitive, QuadratureConfig, SampledCurve, Vec3};
use nalgebra::Matrix3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn e(curve: &SampledCurve) -> f64 {
    energy(curve, &QuadratureConfig::for_curve(curve)).unwrap().energy
}

fn fd_jacobian(map: &MoebiusMap, x: Vec3, h: f64) -> Matrix3<f64> {
    let mut j = Matrix3::zeros();
    for c in 0..3 {
        let mut dx = Vec3::zeros();
        dx[c] = h;
        let p = map.apply_point(x + dx).finite().unwrap();
        let m = map.apply_point(x - dx).finite().unwrap();
        j.set_column(c, &((p - m) / (2.0 * h)));
    }
    j
}

#[test]
fn chord_identity_holds_on_random_triples() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    let mut done = 0;
    while done < 10_000 {
        let map = random_map(&mut rng);
        let x = tame(&mut rng, &map);
        let y = tame(&mut rng, &map);
        if (x - y).norm() < 0.1 {
            continue;
        }
        worst = worst.max(chord_identity_residual(&map, x, y).unwrap());
        done += 1;
    }
    assert!(worst < 1e-11, "worst residual {worst:e}");
}

#[test]
fn composition_of_two_inversions() {
    let map = MoebiusMap::new(vec![
        Primitive::inversion(Vec3::new(0.3, 0.0, -1.0), 1.3),
        Primitive::inversion(Vec3::new(-2.0, 1.0, 0.5), 0.7),
    ])
    .unwrap();
    let r = chord_identity_residual(&map, Vec3::new(1.0, 1.0, 1.0), Vec3::new(-1.0, 0.2, 0.4)).unwrap();
    assert!(r < 1e-11);
    assert!(chord_identity_residual(&map, Vec3::zeros(), Vec3::zeros()).is_err());
}

#[test]
fn conformal_factor_is_operator_norm_of_jacobian() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..500 {
        let map = random_map(&mut rng);
        let x = tame(&mut rng, &map);
        let f = map.conformal_factor(x).unwrap();
        let j = fd_jacobian(&map, x, 1e-5);
        let norm = j.singular_values().max();
        assert!((norm - f).abs() <= 1e-6 * f, "factor {f} fd norm {norm}");
        // The analytic Jacobian is a scaled orthogonal matrix.
        let ja = map.jacobian(x).unwrap();
        assert!((ja.transpose() * ja - Matrix3::identity() * (f * f)).amax() < 1e-12 * f * f);
    }
}

#[test]
fn conformal_factor_chain_rule() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..200 {
        let a = random_map(&mut rng);
        let b = random_map(&mut rng);
        let ab = a.clone().then(&b);
        let x = tame(&mut rng, &ab);
        let Some(ax) = a.apply_point(x).finite() else { continue };
        let Ok(fb) = b.conformal_factor(ax) else { continue };
        let product = a.conformal_factor(x).unwrap() * fb;
        let direct = ab.conformal_factor(x).unwrap();
        assert!((product - direct).abs() <= 1e-12 * direct);
    }
}

#[test]
fn inversion_is_an_involution_and_inverse_undoes_map() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..1000 {
        let c = random_point(&mut rng, 2.0);
        let inv = MoebiusMap::inversion(c, rng.gen_range(0.5..2.0)).unwrap();
        let twice = inv.clone().then(&inv);
        let x = tame(&mut rng, &inv);
        assert!((twice.apply_point(x).finite().unwrap() - x).norm() < 1e-10);

        let map = random_map(&mut rng);
        let x = tame(&mut rng, &map.inverse());
        let back = map.apply(map.inverse().apply_point(x)).finite().unwrap();
        assert!((back - x).norm() < 1e-10 * x.norm().max(1.0));
    }
    let inv = MoebiusMap::inversion(Vec3::new(1.0, 2.0, 3.0), 2.0).unwrap();
    assert_eq!(inv.apply(inv.apply(ExtPoint::Infinity)), ExtPoint::Infinity);
    let sim = MoebiusMap::new(vec![Primitive::translation(Vec3::x()), Primitive::Scale { factor: 2.0 }]).unwrap();
    assert_eq!(sim.apply(ExtPoint::Infinity), ExtPoint::Infinity);
}

#[test]
fn angles_are_preserved() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let h = 1e-5;
    for _ in 0..500 {
        let map = random_map(&mut rng);
        let x = tame(&mut rng, &map);
        let a = random_point(&mut rng, 1.0).normalize();
        let b = random_point(&mut rng, 1.0).normalize();
        let push = |d: Vec3| {
            (map.apply_point(x + d * h).finite().unwrap() - map.apply_point(x - d * h).finite().unwrap()) / (2.0 * h)
        };
        let before = a.angle(&b);
        let after = push(a).angle(&push(b));
        assert!((before - after).abs() < 1e-8, "{before} {after}");
    }
}

#[test]
fn similarity_leaves_energy_unchanged() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let c = ParamCurve::torus_knot(2, 3, 2.0, 1.0).unwrap().sample(512).unwrap();
    let rot = random_rotation(&mut rng);
    let axis = nalgebra::Rotation3::from_matrix(&rot).axis_angle().unwrap();
    let map = MoebiusMap::new(vec![
        Primitive::rotation(axis.0.into_inner(), axis.1),
        Primitive::Scale { factor: 0.37 },
        Primitive::translation(Vec3::new(1.0, -2.0, 0.5)),
    ])
    .unwrap();
    let img = apply_to_curve(&map, &c).unwrap();
    let (e0, e1) = (e(&c), e(&img));
    // Speeds and curvature are recomputed spectrally on the image, so allow rounding drift.
    assert!((e0 - e1).abs() <= 1e-10 * e0, "{e0} {e1}");
}

#[test]
fn bounded_inversions_preserve_energy() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let mut curves = vec![
        ParamCurve::circle(1.0).unwrap(),
        ParamCurve::torus_knot(2, 3, 2.0, 1.0).unwrap(),
    ];
    for _ in 0..3 {
        curves.push(random_embedded_curve(&mut rng, 4, 0.5));
    }
    for curve in &curves {
        let c = curve.sample(1024).unwrap();
        let base = e(&c);
        for _ in 0..5 {
            let map = random_bounded_inversion(&c, &mut rng);
            let img = apply_to_curve(&map, &c).unwrap();
            assert!(img.is_closed());
            assert!((e(&img) - base).abs() <= 5e-3 * base);
        }
    }
}

#[test]
fn image_of_a_circle_is_a_circle() {
    let c = ParamCurve::circle(1.0).unwrap().sample(256).unwrap();
    let map = MoebiusMap::inversion(Vec3::new(3.0, 0.5, 0.2), 1.5).unwrap();
    let img = apply_to_curve(&map, &c).unwrap();
    assert!((e(&img) - 4.0).abs() < 1e-3);
    // Exact speeds: factor times original speed.
    for (i, x) in c.points().iter().enumerate() {
        let f = map.conformal_factor(*x).unwrap();
        assert!((img.speeds()[i] - f * c.speeds()[i]).abs() < 1e-14 * img.speeds()[i]);
    }
}

#[test]
fn inversion_centred_on_the_curve_is_refused() {
    let c = ParamCurve::circle(1.0).unwrap().sample(64).unwrap();
    let map = MoebiusMap::inversion(c.points()[5], 1.0).unwrap();
    assert!(matches!(apply_to_curve(&map, &c), Err(Error::Pole { .. })));
}

#[test]
fn punctured_trefoil_loses_four() {
    let c = ParamCurve::torus_knot(2, 3, 2.0, 1.0).unwrap().sample(512).unwrap();
    let closed = e(&c);
    let mut opens = Vec::new();
    for s0 in [0.0, 1.3] {
        let p = puncture_at(&c, s0, 1.0).unwrap();
        assert!(!p.is_closed());
        let info = p.puncture().unwrap();
        assert!(info.removed_halfwidth > 0.0 && info.removed_halfwidth < 1e-5 * c.total_length());
        let r = open_energy(&p, max_open_window(&p)).unwrap();
        assert!(r.error_estimate.unwrap() < 1e-3);
        assert!((r.energy - (closed - 4.0)).abs() < 0.01 * (closed - 4.0), "{} vs {}", r.energy, closed - 4.0);
        opens.push(r.energy);
    }
    assert!((opens[0] - opens[1]).abs() < 0.01 * opens[0]);
}

#[test]
fn puncture_needs_closed_curve_and_positive_radius() {
    let c = ParamCurve::circle(1.0).unwrap().sample(64).unwrap();
    assert!(puncture_at(&c, 0.0, 0.0).is_err());
    let p = puncture_at(&c, 0.0, 1.0).unwrap();
    assert!(puncture_at(&p, 0.0, 1.0).is_err());
}
