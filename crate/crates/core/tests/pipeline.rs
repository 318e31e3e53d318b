use enclosure::analysis::{laplace_oracle, prediction_series};
use enclosure::fdtd::{self, FieldRecord, GridSpec};
use enclosure::geometry::Obstacle;
use enclosure::indicator::{self, log_spaced, Normalization, RateModel, Reference};
use enclosure::source::{Pulse, SourceSpec};
use enclosure::{Error, Vec3};

fn spec() -> SourceSpec {
    let pulse = Pulse::ramped_sine(1.0, 1.75, 3.5, true, 4.0).unwrap();
    SourceSpec::new(Vec3::new(3.0, 0.0, 0.0), 0.25, Vec3::z(), pulse, 3.0, 1.0, 1.0).unwrap()
}

fn coarse() -> GridSpec {
    let mut g = GridSpec::new(0.1);
    g.allow_coarse = true;
    g
}

#[test]
fn saved_records_reproduce_the_indicator() {
    let sphere = Obstacle::sphere(Vec3::zeros(), 1.0).unwrap();
    let s = spec();
    let rec = fdtd::run(&sphere, &s, &coarse()).unwrap();
    let free = fdtd::run(&Obstacle::empty(), &s, &coarse()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("r.bin"), dir.path().join("f.bin"));
    rec.write_binary(&a).unwrap();
    free.write_binary(&b).unwrap();
    let taus = log_spaced(1.0, 30.0, 48);
    let direct = indicator::indicator_series(&rec, &Reference::FreeSpaceRun(Box::new(free)), &s, &taus).unwrap();
    let loaded = indicator::indicator_series(
        &FieldRecord::read_binary(&a).unwrap(),
        &Reference::FreeSpaceRun(Box::new(FieldRecord::read_binary(&b).unwrap())),
        &s,
        &taus,
    )
    .unwrap();
    assert_eq!(direct.to_csv(), loaded.to_csv());

    let est = indicator::extract_distance(&direct, &s, Normalization::Kernel, RateModel::Prefactor).unwrap();
    assert!((est.dist - 1.75).abs() <= 0.1 * 1.75, "{est:?}");
    assert!(est.tau_window.0 < est.tau_window.1);

    // The semi-analytic model is the same quantity in the continuum.
    let model = prediction_series(&sphere, &s, &taus).unwrap();
    let m = indicator::extract_distance(&model, &s, Normalization::Kernel, RateModel::Prefactor).unwrap();
    assert!((m.dist - 1.75).abs() <= 0.01 * 1.75, "{m:?}");
}

#[test]
fn fdtd_records_are_deterministic() {
    let sphere = Obstacle::sphere(Vec3::zeros(), 1.0).unwrap();
    let a = fdtd::run(&sphere, &spec(), &coarse()).unwrap();
    let b = fdtd::run(&sphere, &spec(), &coarse()).unwrap();
    assert_eq!(a.samples, b.samples);
}

#[test]
fn corrupt_and_missing_records_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.bin");
    assert!(matches!(FieldRecord::read_binary(&path), Err(Error::MissingArtifact(_))));
    std::fs::write(&path, b"not a record").unwrap();
    assert!(matches!(FieldRecord::read_binary(&path), Err(Error::MalformedRecord(_))));
}

#[test]
fn oracle_matches_the_sphere_closed_form() {
    let sphere = Obstacle::sphere(Vec3::zeros(), 1.0).unwrap();
    let o = laplace_oracle(&sphere, &spec()).unwrap();
    assert!((o.value / (std::f64::consts::PI / 192.0) - 1.0).abs() < 1e-12);
    assert_eq!(o.reflectors.len(), 1);
    assert!((o.dist - 1.75).abs() < 1e-12);
}
