//! Config-driven batch pipeline: simulate, indicator, extract, oracle,
//! curvature recovery, reflection check and direction probe.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::{self, OracleValue, RecoveryResult};
use crate::error::{invalid, Error, Result};
use crate::fdtd::{self, FieldRecord, GridSpec};
use crate::freefield::ProbeField;
use crate::geometry::Obstacle;
use crate::indicator::{
    self, DistanceEstimate, IndicatorSeries, Normalization, RateModel, Reference, SecondOrderLimit,
    SequenceForm,
};
use crate::reflection::{self, ReflectedField};
use crate::source::{validate_source, Pulse, PulseShape, SourceSpec};
use crate::{Mat3, Vec3};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub obstacle: ObstacleConfig,
    pub source: SourceConfig,
    pub pulse: PulseShape,
    #[serde(default)]
    pub grid: Option<GridSpec>,
    #[serde(default)]
    pub tau: Option<TauConfig>,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub two_source: Option<TwoSourceConfig>,
    #[serde(default)]
    pub reflection: Option<ReflectionConfig>,
    #[serde(default)]
    pub probe: Option<ProbeConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ObstacleConfig {
    Sphere {
        center: [f64; 3],
        radius: f64,
    },
    Ellipsoid {
        center: [f64; 3],
        semiaxes: [f64; 3],
        /// Rows are the principal axes; identity when absent.
        #[serde(default)]
        axes: Option<[[f64; 3]; 3]>,
    },
    SphereUnion {
        centers: Vec<[f64; 3]>,
        radii: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    pub p: [f64; 3],
    pub eta: f64,
    /// Normalized on load.
    pub a: [f64; 3],
    /// Observation horizon `T`.
    pub horizon: f64,
    #[serde(default = "one")]
    pub eps: f64,
    #[serde(default = "one")]
    pub mu: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Spacing {
    Log,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TauConfig {
    pub min: f64,
    pub max: f64,
    pub count: usize,
    #[serde(default = "default_spacing")]
    pub spacing: Spacing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pipeline {
    Fdtd,
    Semianalytic,
    Both,
}

impl Pipeline {
    pub fn fdtd(self) -> bool {
        matches!(self, Pipeline::Fdtd | Pipeline::Both)
    }

    pub fn semianalytic(self) -> bool {
        matches!(self, Pipeline::Semianalytic | Pipeline::Both)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_pipeline")]
    pub pipeline: Pipeline,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default = "default_normalization")]
    pub normalization: Normalization,
    #[serde(default = "default_model")]
    pub model: RateModel,
    #[serde(default = "default_form")]
    pub limit_form: SequenceForm,
    #[serde(default = "default_limit_tolerance")]
    pub limit_tolerance: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            pipeline: default_pipeline(),
            out: None,
            normalization: default_normalization(),
            model: default_model(),
            limit_form: default_form(),
            limit_tolerance: default_limit_tolerance(),
        }
    }
}

/// Two balls moved from `p` toward the first reflector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoSourceConfig {
    pub offsets: [f64; 2],
    pub radii: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReflectionConfig {
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_reflection_tau")]
    pub tau: f64,
    #[serde(default)]
    pub h_fd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    #[serde(default = "default_level")]
    pub level: usize,
    #[serde(default = "default_probe_s")]
    pub s: f64,
    #[serde(default = "default_probe_tol")]
    pub tol: f64,
}

fn one() -> f64 {
    1.0
}
fn default_gamma() -> f64 {
    3.0
}
fn default_spacing() -> Spacing {
    Spacing::Log
}
fn default_pipeline() -> Pipeline {
    Pipeline::Both
}
fn default_normalization() -> Normalization {
    Normalization::Kernel
}
fn default_model() -> RateModel {
    RateModel::Prefactor
}
fn default_form() -> SequenceForm {
    SequenceForm::KernelCorrected
}
fn default_limit_tolerance() -> f64 {
    0.5
}
fn default_samples() -> usize {
    500
}
fn default_reflection_tau() -> f64 {
    5.0
}
fn default_level() -> usize {
    2
}
fn default_probe_s() -> f64 {
    0.5
}
fn default_probe_tol() -> f64 {
    1e-8
}

fn vec3(v: [f64; 3]) -> Vec3 {
    Vec3::new(v[0], v[1], v[2])
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.obstacle()?;
        self.source_spec()?;
        if let Some(g) = &self.grid {
            g.validate()?;
        }
        if let Some(t) = &self.tau {
            if !(t.min > 0.0 && t.max > t.min && t.count >= 2) {
                return Err(invalid("tau block needs 0 < min < max and count >= 2"));
            }
        }
        if !(self.run.limit_tolerance > 0.0) {
            return Err(invalid("limit_tolerance must be positive"));
        }
        if let Some(ts) = &self.two_source {
            if ts.radii.iter().any(|r| !(*r > 0.0)) || ts.offsets.iter().any(|s| !(*s > 0.0)) {
                return Err(invalid("two_source offsets and radii must be positive"));
            }
        }
        Ok(())
    }

    pub fn obstacle(&self) -> Result<Obstacle> {
        match &self.obstacle {
            ObstacleConfig::Sphere { center, radius } => Obstacle::sphere(vec3(*center), *radius),
            ObstacleConfig::Ellipsoid {
                center,
                semiaxes,
                axes,
            } => {
                let frame = axes.map_or(Mat3::identity(), |r| {
                    Mat3::from_columns(&[vec3(r[0]), vec3(r[1]), vec3(r[2])])
                });
                Obstacle::ellipsoid(vec3(*center), vec3(*semiaxes), frame)
            }
            ObstacleConfig::SphereUnion { centers, radii } => {
                if centers.len() != radii.len() {
                    return Err(invalid("sphere-union needs as many radii as centers"));
                }
                let spheres: Vec<(Vec3, f64)> = centers.iter().zip(radii).map(|(c, r)| (vec3(*c), *r)).collect();
                Obstacle::sphere_union(&spheres)
            }
        }
    }

    pub fn pulse(&self) -> Result<Pulse> {
        let t = self.source.horizon;
        match &self.pulse {
            PulseShape::RampedSine {
                omega,
                eps_cut,
                t_off,
                neutral,
            } => Pulse::ramped_sine(*omega, *eps_cut, *t_off, *neutral, t),
            PulseShape::PolynomialRamp { power } => Pulse::polynomial_ramp(*power, t),
            PulseShape::Tabulated { times, values } => Pulse::tabulated(times.clone(), values.clone(), t),
        }
    }

    pub fn source_spec(&self) -> Result<SourceSpec> {
        let s = &self.source;
        let a = vec3(s.a);
        if !(a.norm() > 0.0) {
            return Err(invalid("direction a must be non-zero"));
        }
        SourceSpec::new(vec3(s.p), s.eta, a.normalize(), self.pulse()?, s.gamma, s.eps, s.mu)
    }

    pub fn grid(&self) -> Result<GridSpec> {
        self.grid
            .clone()
            .ok_or_else(|| invalid("the fdtd pipeline needs a [grid] block"))
    }

    /// The configured grid, or 24 log-spaced points with `τ̃ dist ∈ [4, 40]`.
    pub fn taus(&self) -> Result<Vec<f64>> {
        match &self.tau {
            Some(t) => Ok(match t.spacing {
                Spacing::Log => indicator::log_spaced(t.min, t.max, t.count),
                Spacing::Linear => (0..t.count)
                    .map(|i| t.min + (t.max - t.min) * i as f64 / (t.count - 1) as f64)
                    .collect(),
            }),
            None => {
                let spec = self.source_spec()?;
                let dist = self.obstacle()?.signed_distance(&spec.p) - spec.eta;
                let k = spec.slowness() * dist;
                Ok(indicator::log_spaced(4.0 / k, 40.0 / k, 24))
            }
        }
    }

    /// Applies command-line overrides of the `τ` grid and pipeline.
    pub fn with_overrides(
        mut self,
        tau_min: Option<f64>,
        tau_max: Option<f64>,
        tau_count: Option<usize>,
        pipeline: Option<Pipeline>,
    ) -> Result<Self> {
        if tau_min.is_some() || tau_max.is_some() || tau_count.is_some() {
            let base = self.taus()?;
            let spacing = self.tau.as_ref().map_or(Spacing::Log, |t| t.spacing);
            self.tau = Some(TauConfig {
                min: tau_min.unwrap_or(base[0]),
                max: tau_max.unwrap_or(base[base.len() - 1]),
                count: tau_count.unwrap_or(base.len()),
                spacing,
            });
        }
        if let Some(p) = pipeline {
            self.run.pipeline = p;
        }
        self.validate()?;
        Ok(self)
    }
}

/// Pipeline stages; [`Stage::All`] runs them in order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    All,
    Simulate,
    Indicator,
    Extract,
    Oracle,
    Recover,
    Reflectcheck,
    Probe,
}

pub const RECORD_FILE: &str = "record.bin";
pub const REFERENCE_FILE: &str = "reference.bin";
pub const ORACLE_FILE: &str = "oracle.json";
pub const DISTANCE_FILE: &str = "distance.json";
pub const LIMIT_FILE: &str = "limit.json";
pub const COMPARISON_FILE: &str = "comparison.csv";
pub const RECOVERY_FILE: &str = "recovery.csv";
pub const REFLECTION_FILE: &str = "reflection.csv";
pub const PROBE_FILE: &str = "probe.csv";
pub const ERROR_FILE: &str = "error.json";

pub fn indicator_file(pipeline: &str) -> String {
    format!("indicator_{pipeline}.csv")
}

/// Runs one stage (or all) and returns the paths written.
pub struct Runner {
    pub config: ExperimentConfig,
    pub out: PathBuf,
}

/// Distance or limit outcome with the grid it came from.
#[derive(Debug, Clone, Serialize)]
pub struct Outcome<T> {
    pub pipeline: String,
    pub taus: Vec<f64>,
    pub truth: f64,
    pub result: std::result::Result<T, ErrorBlock>,
}

/// Machine-readable error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBlock {
    pub kind: String,
    pub message: String,
}

impl From<&Error> for ErrorBlock {
    fn from(e: &Error) -> Self {
        Self {
            kind: e.kind().to_string(),
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleReport {
    pub dist: f64,
    pub d_boundary: f64,
    pub window_ok: bool,
    pub directivity_ok: bool,
    pub warnings: Vec<String>,
    /// Right-hand side of the second-order limit.
    pub laplace: OracleValue,
    pub energy: f64,
    pub kernel_energy: f64,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| invalid(e.to_string()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

impl Runner {
    pub fn new(config: ExperimentConfig, out: Option<PathBuf>) -> Self {
        let out = out
            .or_else(|| config.run.out.clone())
            .unwrap_or_else(|| PathBuf::from("out"));
        Self { config, out }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    pub fn run(&self, stage: Stage) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(&self.out)?;
        let spec = self.config.source_spec()?;
        let obstacle = self.config.obstacle()?;
        validate_source(&spec, &obstacle)?;
        let pipeline = self.config.run.pipeline;
        let mut written = Vec::new();
        let mut go = |s: Stage, f: &dyn Fn() -> Result<Vec<PathBuf>>| -> Result<()> {
            if stage == s || stage == Stage::All {
                written.extend(f()?);
            }
            Ok(())
        };
        go(Stage::Oracle, &|| self.oracle(&obstacle, &spec))?;
        if pipeline.fdtd() {
            go(Stage::Simulate, &|| self.simulate(&obstacle, &spec))?;
        }
        go(Stage::Indicator, &|| self.indicator(&obstacle, &spec))?;
        go(Stage::Extract, &|| self.extract(&obstacle, &spec))?;
        if self.config.two_source.is_some() {
            go(Stage::Recover, &|| self.recover(&obstacle, &spec))?;
        }
        if self.config.reflection.is_some() || stage == Stage::Reflectcheck {
            go(Stage::Reflectcheck, &|| self.reflectcheck(&obstacle, &spec))?;
        }
        if self.config.probe.is_some() || stage == Stage::Probe {
            go(Stage::Probe, &|| self.probe(&obstacle, &spec))?;
        }
        Ok(written)
    }

    fn oracle(&self, obstacle: &Obstacle, spec: &SourceSpec) -> Result<Vec<PathBuf>> {
        let diag = validate_source(spec, obstacle)?;
        let report = OracleReport {
            dist: diag.dist,
            d_boundary: diag.d_boundary,
            window_ok: diag.window_ok,
            directivity_ok: diag.directivity_ok,
            warnings: diag.warnings,
            laplace: analysis::laplace_oracle(obstacle, spec)?,
            energy: analysis::energy_oracle(obstacle, spec)?,
            kernel_energy: analysis::kernel_energy_oracle(obstacle, spec)?,
        };
        let path = self.path(ORACLE_FILE);
        write_json(&path, &report)?;
        Ok(vec![path])
    }

    fn simulate(&self, obstacle: &Obstacle, spec: &SourceSpec) -> Result<Vec<PathBuf>> {
        let grid = self.config.grid()?;
        let record = fdtd::run(obstacle, spec, &grid)?;
        let free = fdtd::run(&Obstacle::empty(), spec, &grid)?;
        let (a, b) = (self.path(RECORD_FILE), self.path(REFERENCE_FILE));
        record.write_binary(&a)?;
        free.write_binary(&b)?;
        Ok(vec![a, b])
    }

    fn load_record(&self, name: &str, spec: &SourceSpec) -> Result<FieldRecord> {
        let rec = FieldRecord::read_binary(&self.path(name))?;
        if &rec.spec != spec {
            return Err(Error::MalformedRecord(format!("{name} was produced with a different source")));
        }
        Ok(rec)
    }

    fn indicator(&self, obstacle: &Obstacle, spec: &SourceSpec) -> Result<Vec<PathBuf>> {
        let taus = self.config.taus()?;
        let pipeline = self.config.run.pipeline;
        let mut out = Vec::new();
        let mut series = Vec::new();
        if pipeline.fdtd() {
            let rec = self.load_record(RECORD_FILE, spec)?;
            let free = self.load_record(REFERENCE_FILE, spec)?;
            let s = indicator::indicator_series(&rec, &Reference::FreeSpaceRun(Box::new(free)), spec, &taus)?;
            let path = self.path(&indicator_file("fdtd"));
            s.write_csv(&path)?;
            out.push(path);
            series.push(s);
        }
        if pipeline.semianalytic() {
            let s = analysis::prediction_series(obstacle, spec, &taus)?;
            let path = self.path(&indicator_file("semianalytic"));
            s.write_csv(&path)?;
            out.push(path);
            series.push(s);
        }
        if let [f, s] = series.as_slice() {
            let mut text = String::from("tau,log_abs_I_fdtd,log_abs_I_semianalytic,ratio\n");
            for (a, b) in f.points.iter().zip(&s.points) {
                let ratio = a.value.sign * b.value.sign * (a.value.ln_abs - b.value.ln_abs).exp();
                let _ = writeln!(text, "{:.16e},{:.16e},{:.16e},{:.16e}", a.tau, a.value.ln_abs, b.value.ln_abs, ratio);
            }
            let path = self.path(COMPARISON_FILE);
            fs::write(&path, text)?;
            out.push(path);
        }
        Ok(out)
    }

    fn series(&self, spec: &SourceSpec) -> Result<Vec<(String, IndicatorSeries)>> {
        let pipeline = self.config.run.pipeline;
        let mut names = Vec::new();
        if pipeline.fdtd() {
            names.push("fdtd");
        }
        if pipeline.semianalytic() {
            names.push("semianalytic");
        }
        names
            .into_iter()
            .map(|n| Ok((n.to_string(), IndicatorSeries::read_csv(&self.path(&indicator_file(n)), spec)?)))
            .collect()
    }

    fn extract(&self, obstacle: &Obstacle, spec: &SourceSpec) -> Result<Vec<PathBuf>> {
        let truth = obstacle.signed_distance(&spec.p) - spec.eta;
        let run = &self.config.run;
        let mut distances: Vec<Outcome<DistanceEstimate>> = Vec::new();
        let mut limits: Vec<Outcome<SecondOrderLimit>> = Vec::new();
        for (name, s) in self.series(spec)? {
            let est = indicator::extract_distance(&s, spec, run.normalization, run.model);
            let lim = indicator::second_order_limit_on(&s.points, spec, truth, run.limit_tolerance, run.limit_form);
            distances.push(Outcome {
                pipeline: name.clone(),
                taus: s.taus(),
                truth,
                result: est.map_err(|e| ErrorBlock::from(&e)),
            });
            limits.push(Outcome {
                pipeline: name,
                taus: s.taus(),
                truth: analysis::laplace_oracle(obstacle, spec)?.value,
                result: lim.map_err(|e| ErrorBlock::from(&e)),
            });
        }
        let (a, b) = (self.path(DISTANCE_FILE), self.path(LIMIT_FILE));
        write_json(&a, &distances)?;
        write_json(&b, &limits)?;
        Ok(vec![a, b])
    }

    /// Curvature table from oracle limits and from each pipeline's limits.
    fn recover(&self, obstacle: &Obstacle, spec: &SourceSpec) -> Result<Vec<PathBuf>> {
        let ts = self.config.two_source.as_ref().expect("checked by caller");
        let q = obstacle
            .first_reflector(&spec.p, 1e-9)?
            .first()
            .copied()
            .ok_or_else(|| invalid("no first reflector"))?;
        let d_p = obstacle.signed_distance(&spec.p);
        let a_dot_nu = spec.a.dot(&q.nu);
        let (k_true, h_true) = crate::geometry::curvature_invariants(&obstacle.shape_operator(&q));
        let toward = (q.q - spec.p).normalize();
        let moved: Vec<SourceSpec> = (0..2)
            .map(|j| spec.with_ball(spec.p + toward * ts.offsets[j], ts.radii[j]))
            .collect::<Result<_>>()?;
        let mut rows: Vec<(String, Result<RecoveryResult>)> = Vec::new();
        let recover = |r: [f64; 2]| analysis::recover_curvatures(r, ts.offsets, d_p, ts.radii, a_dot_nu, spec.eps);
        let exact = analysis::two_source_limits(obstacle, spec, &q, ts.offsets, ts.radii);
        rows.push(("oracle".into(), exact.and_then(recover)));
        let taus = self.config.taus()?;
        let limit = |s: &IndicatorSeries, sj: &SourceSpec| -> Result<f64> {
            let dist = obstacle.signed_distance(&sj.p) - sj.eta;
            Ok(indicator::second_order_limit_on(&s.points, sj, dist, self.config.run.limit_tolerance, self.config.run.limit_form)?.limit)
        };
        let pipeline = self.config.run.pipeline;
        if pipeline.semianalytic() {
            let r = (|| {
                let mut r = [0.0; 2];
                for j in 0..2 {
                    let s = analysis::prediction_series(obstacle, &moved[j], &taus)?;
                    r[j] = limit(&s, &moved[j])?;
                }
                recover(r)
            })();
            rows.push(("semianalytic".into(), r));
        }
        if pipeline.fdtd() {
            let r = (|| {
                let grid = self.config.grid()?;
                let mut r = [0.0; 2];
                for j in 0..2 {
                    let rec = fdtd::run(obstacle, &moved[j], &grid)?;
                    let free = fdtd::run(&Obstacle::empty(), &moved[j], &grid)?;
                    let s = indicator::indicator_series(&rec, &Reference::FreeSpaceRun(Box::new(free)), &moved[j], &taus)?;
                    r[j] = limit(&s, &moved[j])?;
                }
                recover(r)
            })();
            rows.push(("fdtd".into(), r));
        }
        let mut text = String::from("source,R1,R2,X1,X2,H,K,H_true,K_true,error\n");
        for (name, r) in rows {
            match r {
                Ok(v) => {
                    let _ = writeln!(
                        text,
                        "{name},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},",
                        v.r[0], v.r[1], v.x[0], v.x[1], v.h, v.k, h_true, k_true
                    );
                }
                Err(e) => {
                    let _ = writeln!(text, "{name},,,,,,,{h_true:.16e},{k_true:.16e},{}", e.kind());
                }
            }
        }
        let path = self.path(RECOVERY_FILE);
        fs::write(&path, text)?;
        Ok(vec![path])
    }

    fn reflectcheck(&self, obstacle: &Obstacle, spec: &SourceSpec) -> Result<Vec<PathBuf>> {
        let cfg = self.config.reflection.clone().unwrap_or(ReflectionConfig {
            samples: default_samples(),
            tau: default_reflection_tau(),
            h_fd: None,
        });
        let field = ProbeField::new(spec, cfg.tau)?;
        let rf = ReflectedField::new(field, obstacle.clone());
        let samples = reflection::surface_samples(obstacle, cfg.samples);
        let h = cfg.h_fd.unwrap_or_else(|| rf.default_step());
        let tangential = reflection::check_tangential_trace(&rf, &samples)?;
        let curl = reflection::check_curl_trace(&rf, &samples, h)?;
        let path = self.path(REFLECTION_FILE);
        reflection::write_report_csv(&path, &tangential, &curl)?;
        Ok(vec![path])
    }

    /// Direction sweep with distances taken from the geometry.
    fn probe(&self, obstacle: &Obstacle, spec: &SourceSpec) -> Result<Vec<PathBuf>> {
        let cfg = self.config.probe.clone().unwrap_or(ProbeConfig {
            level: default_level(),
            s: default_probe_s(),
            tol: default_probe_tol(),
        });
        let sweep = analysis::probe_sweep(|x| obstacle.signed_distance(x), &spec.p, cfg.level, cfg.s, cfg.tol)?;
        let truth = analysis::true_reflector_directions(obstacle, &spec.p)?;
        let nearest = |w: &Vec3| {
            (0..sweep.directions.len())
                .min_by(|&i, &j| (sweep.directions[i] - w).norm().total_cmp(&(sweep.directions[j] - w).norm()))
                .unwrap_or(0)
        };
        let mut detected = vec![false; sweep.directions.len()];
        let mut expected = vec![false; sweep.directions.len()];
        for w in &sweep.reflectors {
            detected[nearest(w)] = true;
        }
        for w in &truth {
            expected[nearest(w)] = true;
        }
        let mut text = String::from("omega_x,omega_y,omega_z,residual,hit,detected,truth\n");
        for (i, w) in sweep.directions.iter().enumerate() {
            let _ = writeln!(
                text,
                "{:.16e},{:.16e},{:.16e},{:.16e},{},{},{}",
                w.x, w.y, w.z, sweep.residuals[i], sweep.hits[i], detected[i], expected[i]
            );
        }
        for w in &sweep.reflectors {
            let _ = writeln!(text, "{:.16e},{:.16e},{:.16e},0,refined,true,true", w.x, w.y, w.z);
        }
        let path = self.path(PROBE_FILE);
        fs::write(&path, text)?;
        Ok(vec![path])
    }

    /// Writes `error.json` next to the artifacts (best effort).
    pub fn write_error(&self, e: &Error) -> String {
        Self::error_block(e, Some(&self.out))
    }

    /// Machine-readable error text, also written to `dir/error.json` when
    /// a directory is given.
    pub fn error_block(e: &Error, dir: Option<&Path>) -> String {
        let block = serde_json::json!({ "error": ErrorBlock::from(e) });
        let text = serde_json::to_string_pretty(&block).unwrap_or_default();
        if let Some(dir) = dir {
            if fs::create_dir_all(dir).is_ok() {
                let _ = fs::write(dir.join(ERROR_FILE), format!("{text}\n"));
            }
        }
        text
    }
}

/// Demo configuration: the unit-sphere testbed.
pub const DEMO_CONFIG: &str = r#"[obstacle]
kind = "sphere"
center = [0.0, 0.0, 0.0]
radius = 1.0

[source]
p = [3.0, 0.0, 0.0]
eta = 0.25
a = [0.0, 0.0, 1.0]
horizon = 4.0

[pulse]
kind = "ramped-sine"
omega = 1.0
eps_cut = 1.75
t_off = 3.5
neutral = true

[grid]
h = 0.1
allow_coarse = true

[tau]
min = 1.0
max = 30.0
count = 48

[run]
pipeline = "both"

[two_source]
offsets = [0.5, 1.0]
radii = [0.25, 0.25]

[reflection]
samples = 500
tau = 5.0

[probe]
level = 2
"#;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn demo_config_parses() {
        let cfg = ExperimentConfig::from_toml(DEMO_CONFIG).unwrap();
        assert_eq!(cfg.run.pipeline, Pipeline::Both);
        assert_eq!(cfg.taus().unwrap().len(), 48);
        assert_eq!(cfg.obstacle().unwrap(), Obstacle::sphere(Vec3::zeros(), 1.0).unwrap());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = DEMO_CONFIG.replace("radius = 1.0", "radius = 1.0\ncolour = 3");
        assert!(matches!(ExperimentConfig::from_toml(&text), Err(Error::Config(_))));
        let text = DEMO_CONFIG.replace("[probe]", "[probes]");
        assert!(ExperimentConfig::from_toml(&text).is_err());
    }

    #[test]
    fn default_tau_grid_spans_the_rate_range() {
        let text = DEMO_CONFIG.replace("[tau]\nmin = 1.0\nmax = 30.0\ncount = 48\n", "");
        let cfg = ExperimentConfig::from_toml(&text).unwrap();
        let taus = cfg.taus().unwrap();
        assert_eq!(taus.len(), 24);
        assert!((taus[0] * 1.75 - 4.0).abs() < 1e-12);
        assert!((taus[23] * 1.75 - 40.0).abs() < 1e-9);
        let over = cfg.with_overrides(Some(2.0), None, Some(10), Some(Pipeline::Fdtd)).unwrap();
        assert_eq!(over.taus().unwrap().len(), 10);
        assert_eq!(over.run.pipeline, Pipeline::Fdtd);
    }

    #[test]
    fn overlap_is_reported() {
        let text = DEMO_CONFIG.replace("p = [3.0, 0.0, 0.0]", "p = [1.1, 0.0, 0.0]");
        let cfg = ExperimentConfig::from_toml(&text).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let runner = Runner::new(cfg, Some(dir.path().to_path_buf()));
        let err = runner.run(Stage::Oracle).unwrap_err();
        assert!(matches!(err, Error::Overlap { .. }));
        let text = runner.write_error(&err);
        assert!(text.contains("\"kind\": \"Overlap\""));
        assert!(dir.path().join(ERROR_FILE).exists());
    }

    #[test]
    fn indicator_stage_needs_a_record() {
        let text = DEMO_CONFIG.replace("pipeline = \"both\"", "pipeline = \"fdtd\"");
        let cfg = ExperimentConfig::from_toml(&text).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let runner = Runner::new(cfg, Some(dir.path().to_path_buf()));
        assert!(matches!(runner.run(Stage::Indicator), Err(Error::MissingArtifact(_))));
    }

    #[test]
    fn semianalytic_pipeline_recovers_distance_and_curvature() {
        let text = DEMO_CONFIG
            .replace("pipeline = \"both\"", "pipeline = \"semianalytic\"")
            .replace("min = 1.0\nmax = 30.0\ncount = 48", "min = 4.0\nmax = 40.0\ncount = 16");
        let cfg = ExperimentConfig::from_toml(&text).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let runner = Runner::new(cfg, Some(dir.path().to_path_buf()));
        for stage in [Stage::Oracle, Stage::Indicator, Stage::Extract, Stage::Recover, Stage::Probe] {
            runner.run(stage).unwrap();
        }
        let dist: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join(DISTANCE_FILE)).unwrap()).unwrap();
        let d = dist[0]["result"]["Ok"]["dist"].as_f64().unwrap();
        assert!((d - 1.75).abs() < 0.01 * 1.75, "{d}");
        let table = fs::read_to_string(dir.path().join(RECOVERY_FILE)).unwrap();
        let oracle_row: Vec<&str> = table.lines().nth(1).unwrap().split(',').collect();
        let k: f64 = oracle_row[6].parse().unwrap();
        assert!((k - 1.0).abs() < 1e-6, "{table}");
        let probe = fs::read_to_string(dir.path().join(PROBE_FILE)).unwrap();
        assert!(probe.lines().any(|l| l.contains("refined")));
        // Re-running the indicator stage reproduces the CSV byte for byte.
        let first = fs::read(dir.path().join(indicator_file("semianalytic"))).unwrap();
        runner.run(Stage::Indicator).unwrap();
        assert_eq!(first, fs::read(dir.path().join(indicator_file("semianalytic"))).unwrap());
    }
}
