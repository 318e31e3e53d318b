use enclosure::freefield::{mean_value_kernel, ProbeField};
use enclosure::geometry::{curvature_invariants, Obstacle};
use enclosure::indicator::{self, log_spaced, IndicatorSeries, Normalization, RateModel};
use enclosure::source::{Pulse, SourceSpec};
use enclosure::{Mat3, SignedLog, Vec3};
use proptest::prelude::*;

fn unit(v: (f64, f64, f64)) -> Vec3 {
    let v = Vec3::new(v.0, v.1, v.2);
    if v.norm() < 1e-3 {
        Vec3::z()
    } else {
        v.normalize()
    }
}

fn dir() -> impl Strategy<Value = Vec3> {
    (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64).prop_map(unit)
}

fn rotation(axis: Vec3, angle: f64) -> Mat3 {
    nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle).into_inner()
}

fn spec(p: Vec3, eta: f64, a: Vec3) -> SourceSpec {
    let pulse = Pulse::ramped_sine(1.0, 1.75, 3.5, true, 4.0).unwrap();
    SourceSpec::new(p, eta, a, pulse, 3.0, 1.0, 1.0).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sphere_distance_is_radial(u in dir(), r in 0.2..5.0f64, radius in 0.3..2.0f64) {
        let s = Obstacle::sphere(Vec3::new(0.5, -0.2, 0.1), radius).unwrap();
        let x = Vec3::new(0.5, -0.2, 0.1) + u * r;
        prop_assert!((s.signed_distance(&x) - (r - radius)).abs() < 1e-12);
    }

    #[test]
    fn nearest_point_is_a_normal_foot(u in dir(), off in 0.05..2.0f64, angle in 0.0..6.0f64, axis in dir()) {
        let ell = Obstacle::ellipsoid(Vec3::new(0.2, 0.0, -0.3), Vec3::new(1.5, 1.0, 0.6), rotation(axis, angle)).unwrap();
        let e = &ell.components()[0];
        let sp0 = e.surface_point(&e.point_from_direction(&u));
        let x = sp0.q + sp0.nu * off;
        let sp = ell.nearest_point(&x, 1e-12).unwrap();
        prop_assert!(e.implicit(&sp.q).abs() < 1e-9);
        let r = x - sp.q;
        prop_assert!(r.cross(&sp.nu).norm() <= 1e-7 * (1.0 + r.norm()));
        prop_assert!((ell.signed_distance(&x) - r.norm()).abs() < 1e-9);
        prop_assert!((sp.shape - sp.shape.transpose()).norm() < 1e-12);
        prop_assert!(sp.nu.dot(&sp.tangent_frame[0]).abs() < 1e-12 && sp.nu.dot(&sp.tangent_frame[1]).abs() < 1e-12);
    }

    #[test]
    fn curvature_is_rigid_motion_invariant(u in dir(), angle in 0.0..6.0f64, axis in dir(), shift in dir()) {
        let ell = Obstacle::ellipsoid_aligned(Vec3::zeros(), Vec3::new(2.0, 1.0, 0.7)).unwrap();
        let rot = rotation(axis, angle);
        let moved = ell.transformed(&rot, &(shift * 3.0));
        let e = &ell.components()[0];
        let q = e.surface_point(&e.point_from_direction(&u));
        let m = &moved.components()[0];
        let qm = m.surface_point(&(rot * q.q + shift * 3.0));
        let (k0, h0) = curvature_invariants(&q.shape);
        let (k1, h1) = curvature_invariants(&qm.shape);
        prop_assert!((k0 - k1).abs() < 1e-9 * k0.abs().max(1.0));
        prop_assert!((h0 - h1).abs() < 1e-9 * h0.abs().max(1.0));
    }

    #[test]
    fn reflection_is_an_involution_on_the_sphere(u in dir(), s in -0.4..0.4f64) {
        let sphere = Obstacle::sphere(Vec3::zeros(), 1.0).unwrap();
        let x = u * (1.0 + s);
        let m = sphere.reflection_map(&x).unwrap();
        prop_assert!((sphere.signed_distance(&m.x_r) + m.signed).abs() < 1e-12);
        let back = sphere.reflection_map(&m.x_r).unwrap();
        prop_assert!((back.x_r - x).norm() < 1e-12);
    }

    #[test]
    fn signed_log_arithmetic(a in -1e3..1e3f64, b in -1e3..1e3f64) {
        let (la, lb) = (SignedLog::from_f64(a), SignedLog::from_f64(b));
        prop_assert!(((la * lb).to_f64() - a * b).abs() <= 1e-12 * (a * b).abs().max(1e-300));
        let sum = la.add(lb).to_f64();
        prop_assert!((sum - (a + b)).abs() <= 1e-12 * (a.abs() + b.abs()).max(1e-300));
    }

    #[test]
    fn mean_value_kernel_decreases_with_distance(u in dir(), r in 0.6..3.0f64, tau in 0.5..50.0f64) {
        let s = spec(Vec3::zeros(), 0.25, Vec3::z());
        let near = mean_value_kernel(&(u * r), &s, tau).unwrap();
        let far = mean_value_kernel(&(u * (r + 0.1)), &s, tau).unwrap();
        prop_assert!(near > far && far > 0.0);
    }

    #[test]
    fn probe_field_is_linear_in_the_pulse(u in dir(), a in dir(), tau in 1.0..30.0f64, scale in 0.1..10.0f64) {
        let s = spec(Vec3::zeros(), 0.25, a);
        let x = u * 1.3;
        let v = ProbeField::new(&s, tau).unwrap().value(&x).unwrap();
        let scaled = s.with_pulse(s.pulse.clone().with_amplitude(scale)).unwrap();
        let w = ProbeField::new(&scaled, tau).unwrap().value(&x).unwrap();
        prop_assert!((w - v * scale).norm() <= 1e-12 * w.norm().max(1e-300));
    }

    #[test]
    fn exponential_series_gives_its_rate(dist in 0.5..3.0f64, c in -20.0..5.0f64) {
        let s = spec(Vec3::zeros(), 0.25, Vec3::z());
        let taus = log_spaced(2.0, 40.0, 24);
        let ln: Vec<f64> = taus.iter().map(|t| c - 2.0 * t * dist).collect();
        let series = IndicatorSeries::from_log_values(&taus, &ln).unwrap();
        let est = indicator::extract_distance(&series, &s, Normalization::Raw, RateModel::Exponential).unwrap();
        prop_assert!((est.dist - dist).abs() < 1e-9, "{}", est.dist);
    }

    #[test]
    fn indicator_csv_round_trips(seed in proptest::collection::vec(-50.0..0.0f64, 6..20)) {
        let s = spec(Vec3::zeros(), 0.25, Vec3::z());
        let taus = log_spaced(1.0, 20.0, seed.len());
        let mut series = IndicatorSeries::from_log_values(&taus, &seed).unwrap();
        for p in &mut series.points {
            p.ftilde = s.pulse.laplace(p.tau);
        }
        let csv = series.to_csv();
        let back = IndicatorSeries::from_csv(&csv, &s).unwrap();
        prop_assert_eq!(back.to_csv(), csv);
    }
}
