use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use enclosure::analysis::{j_energy, probe_sweep, surface_laplace_integral, SurfaceWeight};
use enclosure::fdtd::{self, GridSpec};
use enclosure::freefield::ProbeField;
use enclosure::geometry::Obstacle;
use enclosure::indicator::{self, log_spaced, Reference};
use enclosure::reflection::{self, ReflectedField};
use enclosure::Vec3;
use enclosure_bench::{testbed_spec, unit_sphere};

fn geometry(c: &mut Criterion) {
    let ell = Obstacle::ellipsoid_aligned(Vec3::zeros(), Vec3::new(2.0, 1.0, 0.5)).unwrap();
    let x = Vec3::new(2.3, 0.7, -0.4);
    c.bench_function("ellipsoid_signed_distance", |b| b.iter(|| ell.signed_distance(black_box(&x))));
    c.bench_function("ellipsoid_nearest_point", |b| b.iter(|| ell.nearest_point(black_box(&x), 1e-12).unwrap()));
}

fn probe_field(c: &mut Criterion) {
    let spec = testbed_spec();
    let field = ProbeField::new(&spec, 10.0).unwrap();
    let x = Vec3::new(1.0, 0.3, 0.2);
    c.bench_function("probe_field_value", |b| b.iter(|| field.value(black_box(&x)).unwrap()));
    c.bench_function("probe_field_jacobian", |b| b.iter(|| field.jacobian(black_box(&x)).unwrap()));
}

fn quadrature(c: &mut Criterion) {
    let sphere = unit_sphere();
    let spec = testbed_spec();
    let p = spec.p;
    c.bench_function("surface_laplace_integral_tau40", |b| {
        b.iter(|| surface_laplace_integral(&sphere, &p, black_box(40.0), SurfaceWeight::Constant, 1e-10).unwrap())
    });
    c.bench_function("j_energy_tau20", |b| b.iter(|| j_energy(&sphere, &spec, black_box(20.0)).unwrap()));
}

fn reflection_checks(c: &mut Criterion) {
    let spec = testbed_spec();
    let rf = ReflectedField::new(ProbeField::new(&spec, 5.0).unwrap().with_ftilde(1.0), unit_sphere());
    let samples = reflection::surface_samples(&rf.obstacle, 100);
    c.bench_function("curl_trace_100_samples", |b| b.iter(|| reflection::check_curl_trace(&rf, &samples, 1e-3).unwrap()));
}

fn probing(c: &mut Criterion) {
    let sphere = unit_sphere();
    let p = Vec3::new(3.0, 0.0, 0.0);
    c.bench_function("probe_sweep_level2", |b| {
        b.iter(|| probe_sweep(|x: &Vec3| sphere.signed_distance(x), &p, 2, 0.5, 1e-10).unwrap())
    });
}

fn solver(c: &mut Criterion) {
    let spec = testbed_spec();
    let mut grid = GridSpec::new(0.1);
    grid.allow_coarse = true;
    let mut group = c.benchmark_group("fdtd");
    group.sample_size(10);
    group.bench_function("sphere_h0.1", |b| b.iter(|| fdtd::run(&unit_sphere(), &spec, &grid).unwrap()));
    let rec = fdtd::run(&unit_sphere(), &spec, &grid).unwrap();
    let free = fdtd::run(&Obstacle::empty(), &spec, &grid).unwrap();
    let reference = Reference::FreeSpaceRun(Box::new(free));
    let taus = log_spaced(1.0, 30.0, 48);
    group.bench_function("indicator_series_48", |b| {
        b.iter(|| indicator::indicator_series(&rec, &reference, &spec, &taus).unwrap())
    });
    group.finish();
}

criterion_group!(benches, geometry, probe_field, quadrature, reflection_checks, probing, solver);
criterion_main!(benches);
