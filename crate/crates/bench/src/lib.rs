//! Shared fixtures for the benchmarks.

use enclosure::geometry::Obstacle;
use enclosure::source::{Pulse, SourceSpec};
use enclosure::Vec3;

/// Unit sphere at the origin.
pub fn unit_sphere() -> Obstacle {
    Obstacle::sphere(Vec3::zeros(), 1.0).expect("valid sphere")
}

/// Ball of radius 0.25 at `(3, 0, 0)` polarised along `z`, `T = 4`.
pub fn testbed_spec() -> SourceSpec {
    let pulse = Pulse::ramped_sine(1.0, 1.75, 3.5, true, 4.0).expect("valid pulse");
    SourceSpec::new(Vec3::new(3.0, 0.0, 0.0), 0.25, Vec3::z(), pulse, 3.0, 1.0, 1.0).expect("valid source")
}
