//! Indicator function `I(τ) = ∫_B f·(W_e - V) dx` and the asymptotic
//! read-outs: the exponential rate (distance) and the normalized limit.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fdtd::FieldRecord;
use crate::freefield::ProbeField;
use crate::logscale::SignedLog;
use crate::source::SourceSpec;
use nalgebra::{DMatrix, DVector};

/// `a·W_e(x_i, τ) = ∫_0^T e^{-τt} a·E(x_i, t) dt` by the trapezoid rule over
/// every recorded step.
pub fn laplace_field(record: &FieldRecord, tau: f64) -> Vec<f64> {
    let m = record.node_count();
    let mut out = vec![0.0; m];
    let last = record.steps;
    for n in 0..=last {
        let w = if n == 0 || n == last { 0.5 } else { 1.0 };
        let kernel = w * record.dt * (-tau * record.time(n)).exp();
        if kernel == 0.0 {
            break;
        }
        for (o, v) in out.iter_mut().zip(record.row(n)) {
            *o += kernel * v;
        }
    }
    out
}

/// What `W_e` is compared against at the ball nodes.
#[derive(Debug, Clone)]
pub enum Reference {
    /// The closed-form `V` of the continuum problem.
    ClosedForm,
    /// A free-space run on the identical grid; grid error of the direct
    /// field cancels in `W_e - W_free`.
    FreeSpaceRun(Box<FieldRecord>),
}

/// One evaluated point of the indicator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndicatorPoint {
    pub tau: f64,
    pub value: SignedLog,
    pub ftilde: f64,
    /// `(Σ w_i (a·W_e)²)^{1/2}`.
    pub we_norm: f64,
    /// Same norm of the reference.
    pub v_norm: f64,
}

fn check_weights(record: &FieldRecord, spec: &SourceSpec) -> Result<()> {
    let vol = 4.0 / 3.0 * std::f64::consts::PI * spec.eta.powi(3);
    let sum: f64 = record.weights.iter().sum();
    if !((sum - vol).abs() <= 1e-6 * vol) {
        return Err(Error::DegenerateQuadrature { sum, expected: vol });
    }
    Ok(())
}

/// `-(τ/ε) f̃(τ) Σ w_i (a·W_e(x_i) - a·V(x_i))` against the closed form.
pub fn indicator_value(record: &FieldRecord, spec: &SourceSpec, tau: f64) -> Result<SignedLog> {
    indicator_point(record, &Reference::ClosedForm, spec, tau).map(|p| p.value)
}

pub fn indicator_point(
    record: &FieldRecord,
    reference: &Reference,
    spec: &SourceSpec,
    tau: f64,
) -> Result<IndicatorPoint> {
    if !(tau > 0.0) {
        return Err(invalid("tau must be positive"));
    }
    check_weights(record, spec)?;
    let we = laplace_field(record, tau);
    let ftilde = spec.pulse.laplace(tau);
    // The difference is transformed sample by sample: the scattered part is
    // far below the rounding level of either transform on its own.
    let (v, diff_field) = match reference {
        Reference::ClosedForm => {
            let field = ProbeField::new(spec, tau)?.with_ftilde(ftilde);
            let v: Vec<f64> = record
                .nodes
                .iter()
                .map(|x| field.value_any(x).dot(&spec.a))
                .collect();
            let d = we.iter().zip(&v).map(|(a, b)| a - b).collect();
            (v, d)
        }
        Reference::FreeSpaceRun(free) => {
            let scattered = record.difference(free)?;
            (laplace_field(free, tau), laplace_field(&scattered, tau))
        }
    };
    let weighted = |xs: &[f64]| -> f64 {
        record
            .weights
            .iter()
            .zip(xs)
            .map(|(w, x)| w * x * x)
            .sum::<f64>()
            .sqrt()
    };
    let diff: f64 = record.weights.iter().zip(&diff_field).map(|(w, d)| w * d).sum();
    let value = SignedLog::from_f64(diff) * (-(tau / spec.eps) * ftilde);
    Ok(IndicatorPoint {
        tau,
        value,
        ftilde,
        we_norm: weighted(&we),
        v_norm: weighted(&v),
    })
}

/// Indicator values on an ascending `τ` grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorSeries {
    pub points: Vec<IndicatorPoint>,
}

impl IndicatorSeries {
    pub fn new(points: Vec<IndicatorPoint>) -> Result<Self> {
        if points.windows(2).any(|w| !(w[1].tau > w[0].tau)) {
            return Err(invalid("tau grid must be strictly increasing"));
        }
        if points.iter().any(|p| p.value.ln_abs.is_nan() || p.value.ln_abs == f64::INFINITY) {
            return Err(invalid("indicator values must be finite"));
        }
        Ok(Self { points })
    }

    /// Synthetic series from `ln |I|` values, `I > 0`, with `f̃ = 1`.
    pub fn from_log_values(taus: &[f64], ln_values: &[f64]) -> Result<Self> {
        Self::new(
            taus.iter()
                .zip(ln_values)
                .map(|(&tau, &l)| IndicatorPoint {
                    tau,
                    value: SignedLog::from_ln(l),
                    ftilde: 1.0,
                    we_norm: 0.0,
                    v_norm: 0.0,
                })
                .collect(),
        )
    }

    pub fn taus(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.tau).collect()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Index range of the longest run of positive values (later run on ties).
    pub fn positive_run(&self) -> Option<(usize, usize)> {
        let mut best: Option<(usize, usize)> = None;
        let mut start = None;
        for (i, p) in self.points.iter().enumerate() {
            match (p.value.is_positive(), start) {
                (true, None) => start = Some(i),
                (false, Some(s0)) => {
                    if best.is_none_or(|(a, b)| i - s0 >= b - a) {
                        best = Some((s0, i));
                    }
                    start = None;
                }
                _ => {}
            }
        }
        if let Some(s0) = start {
            let n = self.points.len();
            if best.is_none_or(|(a, b)| n - s0 >= b - a) {
                best = Some((s0, n));
            }
        }
        best
    }

    /// First `τ` of the longest positive run.
    pub fn positivity_onset(&self) -> Option<f64> {
        self.positive_run().map(|(lo, _)| self.points[lo].tau)
    }

    /// Columns `tau,sign,log_abs_I,aWe_norm,aV_norm`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("tau,sign,log_abs_I,aWe_norm,aV_norm\n");
        for p in &self.points {
            let _ = writeln!(
                s,
                "{:.16e},{},{:.16e},{:.16e},{:.16e}",
                p.tau, p.value.sign, p.value.ln_abs, p.we_norm, p.v_norm
            );
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_csv().as_bytes())?;
        Ok(())
    }

    /// Inverse of [`Self::to_csv`]; `f̃` is recomputed from the pulse.
    pub fn from_csv(text: &str, spec: &SourceSpec) -> Result<Self> {
        let bad = |m: String| Error::MalformedRecord(m);
        let mut lines = text.lines();
        if lines.next() != Some("tau,sign,log_abs_I,aWe_norm,aV_norm") {
            return Err(bad("indicator CSV header mismatch".into()));
        }
        let mut points = Vec::new();
        for (n, line) in lines.enumerate() {
            let f: Vec<f64> = line
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| bad(format!("line {}: {e}", n + 2)))?;
            if f.len() != 5 {
                return Err(bad(format!("line {}: expected 5 columns", n + 2)));
            }
            points.push(IndicatorPoint {
                tau: f[0],
                value: SignedLog::new(f[1], f[2]),
                ftilde: spec.pulse.laplace(f[0]),
                we_norm: f[3],
                v_norm: f[4],
            });
        }
        Self::new(points)
    }

    pub fn read_csv(path: &Path, spec: &SourceSpec) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        Self::from_csv(&std::fs::read_to_string(path)?, spec)
    }
}

/// Indicator on a `τ` grid; points are independent and evaluated in parallel.
pub fn indicator_series(
    record: &FieldRecord,
    reference: &Reference,
    spec: &SourceSpec,
    taus: &[f64],
) -> Result<IndicatorSeries> {
    let points = taus
        .par_iter()
        .map(|&tau| indicator_point(record, reference, spec, tau))
        .collect::<Result<Vec<_>>>()?;
    IndicatorSeries::new(points)
}

/// `count` log-spaced values on `[lo, hi]`.
pub fn log_spaced(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

/// How `ln |I|` is prepared before the slope fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    /// `ln |I|` as is.
    Raw,
    /// `ln |I| + 2 ln τ - 2 ln |f̃|`, which removes the algebraic prefactor
    /// of the generic asymptotics.
    Pulse,
    /// `ln |I| - 2 ln |K f̃|` with the exact free-field scale; the slope then
    /// measures `dist(p, D)` and `η` is subtracted afterwards.
    Kernel,
}

/// Ordinary least squares `y = α + β x` with the standard error of `β`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub intercept: f64,
    pub slope: f64,
    pub slope_se: f64,
}

pub fn fit_line(x: &[f64], y: &[f64]) -> LineFit {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    let slope_se = if x.len() > 2 {
        (rss / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    LineFit {
        intercept,
        slope,
        slope_se,
    }
}

/// Model fitted to the prepared `ln |I|`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RateModel {
    /// `c + β τ` over the largest stable window.
    Exponential,
    /// `c + β τ + α ln τ` over the rising branch of the local rate, from its
    /// first minimum to the following maximum. Falls back to
    /// [`RateModel::Exponential`] when that branch is shorter than
    /// [`MIN_WINDOW`].
    Prefactor,
}

/// Result of the rate fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceEstimate {
    pub dist: f64,
    /// 95% band on `dist` from the slope standard error.
    pub dist_ci: (f64, f64),
    pub slope: f64,
    pub slope_ci: (f64, f64),
    pub tau_window: (f64, f64),
    pub window_points: usize,
    pub positivity_onset: f64,
    pub normalization: Normalization,
    /// Model actually used after any fallback.
    pub model: RateModel,
    /// Fitted `α` of the `τ^α` prefactor.
    pub prefactor_exponent: Option<f64>,
    /// Two-parameter fit of the prepared values on the same window.
    pub linear_dist: f64,
    /// Same window, un-normalized `ln |I|`.
    pub raw_slope_dist: f64,
    /// `(1/τ_max) ln |I(τ_max)| / (-2√(με))`.
    pub naive_dist: f64,
}

fn prepared(p: &IndicatorPoint, spec: &SourceSpec, norm: Normalization) -> f64 {
    match norm {
        Normalization::Kernel => {
            let k = spec.tau_tilde(p.tau);
            let ln_k = spec.mu.ln() + p.tau.ln() + crate::freefield::ln_phi(k * spec.eta) - 3.0 * k.ln();
            p.value.ln_abs - 2.0 * (ln_k + p.ftilde.abs().ln())
        }
        Normalization::Raw => p.value.ln_abs,
        Normalization::Pulse => p.value.ln_abs + 2.0 * p.tau.ln() - 2.0 * p.ftilde.abs().ln(),
    }
}

pub const MIN_WINDOW: usize = 8;

/// Least squares `y = c + β x + α ln x`; returns `(β, se(β), α)`.
fn fit_with_prefactor(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len();
    let a = DMatrix::from_fn(n, 3, |i, j| match j {
        0 => 1.0,
        1 => x[i],
        _ => x[i].ln(),
    });
    let b = DVector::from_column_slice(y);
    let svd = a.clone().svd(true, true);
    let c = svd.solve(&b, 1e-14).expect("svd with both factors");
    let rss = (a.clone() * &c - b).norm_squared();
    let cov = (a.transpose() * a).try_inverse().unwrap_or_else(|| DMatrix::zeros(3, 3));
    let se = if n > 3 {
        (rss / (n - 3) as f64 * cov[(1, 1)]).max(0.0).sqrt()
    } else {
        0.0
    };
    (c[1], se, c[2])
}

/// Rising branch `[first minimum, next maximum]` of the local rate
/// `-dy/dx`, as a half-open index range. Changes below a relative dead band
/// do not count as turns.
fn rising_branch(x: &[f64], y: &[f64]) -> (usize, usize) {
    let n = x.len();
    if n < 3 {
        return (0, n);
    }
    let rate: Vec<f64> = (1..n - 1)
        .map(|i| -(y[i + 1] - y[i - 1]) / (x[i + 1] - x[i - 1]))
        .collect();
    let trend: Vec<i8> = rate
        .windows(2)
        .map(|w| {
            let band = 1e-4 * w[0].abs().max(w[1].abs());
            if w[1] > w[0] + band {
                1
            } else if w[1] < w[0] - band {
                -1
            } else {
                0
            }
        })
        .collect();
    // rate[k] sits at point k + 1; trend[k] compares rate[k] and rate[k + 1].
    let mut lo = 0;
    let mut last = 0i8;
    let mut k = 0;
    while k < trend.len() {
        if trend[k] == 1 {
            if last == -1 {
                lo = k + 1;
            }
            break;
        }
        if trend[k] != 0 {
            last = trend[k];
        }
        k += 1;
    }
    let mut hi = n;
    let mut rising = false;
    for (j, &t) in trend.iter().enumerate().skip(k) {
        if t == 1 {
            rising = true;
        } else if t == -1 && rising {
            hi = j + 2;
            break;
        }
    }
    (lo, hi)
}

/// Rate of the prepared `ln |I|` against `τ` on the longest positive run,
/// divided by `-2√(με)` (minus `η` with the kernel normalization).
pub fn extract_distance(
    series: &IndicatorSeries,
    spec: &SourceSpec,
    norm: Normalization,
    model: RateModel,
) -> Result<DistanceEstimate> {
    let (start, end) = series
        .positive_run()
        .ok_or_else(|| Error::NoPositiveWindow("no positive values".into()))?;
    let tail = &series.points[start..end];
    let onset = tail[0].tau;
    if tail.len() < MIN_WINDOW {
        return Err(Error::NoPositiveWindow(format!(
            "only {} consecutive positive points from tau = {onset}, need {MIN_WINDOW}",
            tail.len()
        )));
    }
    let xs: Vec<f64> = tail.iter().map(|p| p.tau).collect();
    let ys: Vec<f64> = tail.iter().map(|p| prepared(p, spec, norm)).collect();
    let branch = match model {
        RateModel::Prefactor => Some(rising_branch(&xs, &ys)).filter(|(lo, hi)| hi - lo >= MIN_WINDOW),
        RateModel::Exponential => None,
    };
    let (lo, hi) = branch.unwrap_or_else(|| stable_window(&xs, &ys));
    let (wx, wy) = (&xs[lo..hi], &ys[lo..hi]);
    let line = fit_line(wx, wy);
    let (slope, se, alpha) = match branch {
        Some(_) => {
            let (b, se, a) = fit_with_prefactor(wx, wy);
            (b, se, Some(a))
        }
        None => (line.slope, line.slope_se, None),
    };
    let s = -2.0 * spec.slowness();
    let band = 1.96 * se;
    let raw: Vec<f64> = tail[lo..hi].iter().map(|p| p.value.ln_abs).collect();
    let raw_fit = fit_line(wx, &raw);
    let last = &tail[hi - 1];
    let shift = if norm == Normalization::Kernel { spec.eta } else { 0.0 };
    let dist = slope / s - shift;
    Ok(DistanceEstimate {
        dist: dist.max(0.0),
        dist_ci: ((slope + band) / s - shift, (slope - band) / s - shift),
        slope,
        slope_ci: (slope - band, slope + band),
        tau_window: (wx[0], wx[wx.len() - 1]),
        window_points: hi - lo,
        positivity_onset: onset,
        normalization: norm,
        model: if branch.is_some() { RateModel::Prefactor } else { RateModel::Exponential },
        prefactor_exponent: alpha,
        linear_dist: line.slope / s - shift,
        raw_slope_dist: raw_fit.slope / s,
        naive_dist: last.value.ln_abs / last.tau / s,
    })
}

/// Longest contiguous window (at least [`MIN_WINDOW`] points) on which every
/// fit residual is within three times the noise level, taken as the median
/// RMS residual over all minimal windows. Ties go to the smaller RMS residual.
fn stable_window(x: &[f64], y: &[f64]) -> (usize, usize) {
    let n = x.len();
    let stats = |lo: usize, hi: usize| {
        let fit = fit_line(&x[lo..hi], &y[lo..hi]);
        let res: Vec<f64> = (lo..hi)
            .map(|i| (y[i] - fit.intercept - fit.slope * x[i]).abs())
            .collect();
        let rms = (res.iter().map(|r| r * r).sum::<f64>() / res.len() as f64).sqrt();
        (rms, res.iter().fold(0.0f64, |m, r| m.max(*r)))
    };
    let mut local: Vec<f64> = (0..=n - MIN_WINDOW).map(|lo| stats(lo, lo + MIN_WINDOW).0).collect();
    local.sort_by(f64::total_cmp);
    let sigma = local[local.len() / 2];
    let floor = 1e-12 * (1.0 + y.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    let mut best: Option<(usize, f64, usize, usize)> = None;
    let mut fallback = (f64::INFINITY, 0, n);
    for lo in 0..n {
        for hi in lo + MIN_WINDOW..=n {
            let (rms, max) = stats(lo, hi);
            let len = hi - lo;
            if len == MIN_WINDOW && rms < fallback.0 {
                fallback = (rms, lo, hi);
            }
            if max <= 3.0 * sigma + floor {
                let better = match best {
                    None => true,
                    Some((l, r, _, _)) => len > l || (len == l && rms < r),
                };
                if better {
                    best = Some((len, rms, lo, hi));
                }
            }
        }
    }
    best.map_or((fallback.1, fallback.2), |(_, _, lo, hi)| (lo, hi))
}

/// Normalized sequence `τ² e^{2τ√(με) dist} I(τ) / f̃(τ)²` and its limit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecondOrderLimit {
    pub limit: f64,
    pub form: SequenceForm,
    pub taus: Vec<f64>,
    pub normalized: Vec<f64>,
    /// Relative spread of the sequence over the fitted (top-half) window.
    pub spread: f64,
    pub fit_window: (f64, f64),
}

/// Which normalized sequence is extrapolated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SequenceForm {
    /// `τ² e^{2τ̃ dist} I / f̃²`.
    Pulse,
    /// The same times `(η/2ε)² / (τ K e^{-τ̃η})²`, a factor tending to 1
    /// that removes the slow `(1 - 1/(τ̃η))²` approach of the probe scale.
    KernelCorrected,
}

/// `τ² e^{2τ̃ dist} I / f̃²` at one point.
pub fn normalized_value(p: &IndicatorPoint, spec: &SourceSpec, dist: f64) -> f64 {
    normalized_value_as(p, spec, dist, SequenceForm::Pulse)
}

pub fn normalized_value_as(p: &IndicatorPoint, spec: &SourceSpec, dist: f64, form: SequenceForm) -> f64 {
    let k = spec.tau_tilde(p.tau);
    let mut ln = p.value.ln_abs + 2.0 * p.tau.ln() + 2.0 * k * dist - 2.0 * p.ftilde.abs().ln();
    if form == SequenceForm::KernelCorrected {
        let ln_k = spec.mu.ln() + p.tau.ln() + crate::freefield::ln_phi(k * spec.eta) - 3.0 * k.ln();
        ln += 2.0 * (spec.eta / (2.0 * spec.eps)).ln() - 2.0 * (p.tau.ln() + ln_k - k * spec.eta);
    }
    p.value.sign * ln.exp()
}

/// Richardson extrapolation in `1/τ` of the normalized sequence over the
/// top half of the series: a least-squares fit `L + c/τ`.
pub fn second_order_limit(
    series: &IndicatorSeries,
    spec: &SourceSpec,
    dist: f64,
    tolerance: f64,
) -> Result<SecondOrderLimit> {
    second_order_limit_on(&series.points, spec, dist, tolerance, SequenceForm::Pulse)
}

pub fn second_order_limit_on(
    points: &[IndicatorPoint],
    spec: &SourceSpec,
    dist: f64,
    tolerance: f64,
    form: SequenceForm,
) -> Result<SecondOrderLimit> {
    if points.len() < 2 {
        return Err(invalid("need at least two points for the limit"));
    }
    let taus: Vec<f64> = points.iter().map(|p| p.tau).collect();
    let normalized: Vec<f64> = points.iter().map(|p| normalized_value_as(p, spec, dist, form)).collect();
    let start = points.len() / 2;
    let top = &normalized[start..];
    let u: Vec<f64> = taus[start..].iter().map(|t| 1.0 / t).collect();
    let limit = if top.len() >= 2 {
        fit_line(&u, top).intercept
    } else {
        top[0]
    };
    let (mn, mx) = top
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let scale = limit.abs().max(top.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    let spread = if scale > 0.0 { (mx - mn) / scale } else { 0.0 };
    if !limit.is_finite() || spread > tolerance {
        return Err(Error::Divergent { spread, tolerance });
    }
    Ok(SecondOrderLimit {
        limit,
        form,
        taus: taus.clone(),
        normalized,
        spread,
        fit_window: (taus[start], *taus.last().unwrap()),
    })
}
