//! Yee-grid solver for
//!
//! ```text
//! ε ∂E/∂t - ∇×H = J,   μ ∂H/∂t + ∇×E = 0,   ν×E = 0 on ∂D,
//! ```
//!
//! with `J = f(t) χ_B(x) a`, a staircase perfect conductor and hard
//! (perfectly conducting) outer walls placed beyond the causal horizon.
//!
//! Layout on a cubic box of `n` cells per axis with spacing `h`:
//! `E_x` at `(i+½, j, k)`, `E_y` at `(i, j+½, k)`, `E_z` at `(i, j, k+½)`,
//! `H_x` at `(i, j+½, k+½)`, `H_y` at `(i+½, j, k+½)`, `H_z` at `(i+½, j+½, k)`.
//! Every component is stored in an `(n+1)³` array indexed `[(i·s + j)·s + k]`.

mod record;

pub use record::FieldRecord;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::Obstacle;
use crate::quadrature::BallRule;
use crate::source::SourceSpec;
use crate::Vec3;

/// Discretisation parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub h: f64,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    /// Box half-width around `p`; the causal extent when absent.
    #[serde(default)]
    pub half_width: Option<f64>,
    /// Extra distance added to the causal extent.
    #[serde(default)]
    pub margin: Option<f64>,
    /// First-order Mur absorbing walls instead of conducting ones.
    #[serde(default)]
    pub mur: bool,
    /// Skip the resolution rules (smoke runs).
    #[serde(default)]
    pub allow_coarse: bool,
}

fn default_cfl() -> f64 {
    0.5
}

impl GridSpec {
    pub fn new(h: f64) -> Self {
        Self {
            h,
            cfl: default_cfl(),
            half_width: None,
            margin: None,
            mur: false,
            allow_coarse: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0) {
            return Err(invalid("grid spacing h must be positive"));
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(invalid("cfl must lie in (0, 1]"));
        }
        if let Some(w) = self.half_width {
            if !(w > 0.0) {
                return Err(invalid("half_width must be positive"));
            }
        }
        Ok(())
    }

    fn margin_or_default(&self) -> f64 {
        self.margin.unwrap_or(2.0 * self.h)
    }
}

/// Axis-aligned box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn half_width(&self) -> f64 {
        0.5 * (self.max - self.min).max()
    }

    pub fn contains_ball(&self, c: &Vec3, r: f64) -> bool {
        (0..3).all(|i| c[i] - r >= self.min[i] && c[i] + r <= self.max[i])
    }
}

/// Smallest cube about `p` from which nothing reflected at the walls can
/// return to `B` before `T`: half-width `c T / 2 + η`.
///
/// The obstacle only matters through the part of it inside this cube, so it
/// does not enter the size; it is accepted for interface symmetry.
pub fn causal_extent(spec: &SourceSpec, _obstacle: &Obstacle) -> Aabb {
    let w = spec.speed() * spec.horizon / 2.0 + spec.eta;
    Aabb {
        min: spec.p - Vec3::repeat(w),
        max: spec.p + Vec3::repeat(w),
    }
}

/// Resolved grid geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub origin: Vec3,
    pub h: f64,
    /// Cells per axis.
    pub n: usize,
    pub dt: f64,
    pub steps: usize,
    pub mur: bool,
}

impl Grid {
    /// Cube of `2m` cells centred on `p`, so that `p` and every plane
    /// `p_i ± k h` are node planes.
    pub fn resolve(spec: &SourceSpec, grid: &GridSpec) -> Result<Self> {
        grid.validate()?;
        let causal = spec.speed() * spec.horizon / 2.0 + spec.eta;
        let want = match grid.half_width {
            Some(w) => {
                if w < causal && !grid.mur {
                    return Err(Error::DomainTooSmall(format!(
                        "half-width {w} below the causal extent {causal} with conducting walls"
                    )));
                }
                w
            }
            None => causal + grid.margin_or_default(),
        };
        if want <= spec.eta + grid.h {
            return Err(Error::DomainTooSmall(format!(
                "half-width {want} does not contain the source ball"
            )));
        }
        let m = (want / grid.h).ceil() as usize;
        let n = 2 * m;
        let c = 1.0 / (spec.mu * spec.eps).sqrt();
        let dt_max = grid.cfl * grid.h / (c * 3f64.sqrt());
        let steps = (spec.horizon / dt_max).ceil().max(1.0) as usize;
        Ok(Self {
            origin: spec.p - Vec3::repeat(m as f64 * grid.h),
            h: grid.h,
            n,
            dt: spec.horizon / steps as f64,
            steps,
            mur: grid.mur,
        })
    }

    pub fn stride(&self) -> usize {
        self.n + 1
    }

    pub fn len(&self) -> usize {
        self.stride().pow(3)
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.stride() + j) * self.stride() + k
    }

    pub fn node(&self, i: usize, j: usize, k: usize) -> Vec3 {
        self.origin + Vec3::new(i as f64, j as f64, k as f64) * self.h
    }

    /// Position of the `c`-component of `E` with indices `(i, j, k)`.
    pub fn e_position(&self, c: usize, i: usize, j: usize, k: usize) -> Vec3 {
        let mut x = self.node(i, j, k);
        x[c] += 0.5 * self.h;
        x
    }

    pub fn extent(&self) -> Aabb {
        Aabb {
            min: self.origin,
            max: self.origin + Vec3::repeat(self.n as f64 * self.h),
        }
    }
}

/// Volume fraction of the cube `[c - h/2, c + h/2]³` inside the ball
/// `|x - p| < η`, by recursive bisection of cut cubes.
fn ball_fraction(c: &Vec3, h: f64, p: &Vec3, eta: f64, depth: u32) -> f64 {
    let r = (c - p).norm();
    let half_diag = 0.5 * 3f64.sqrt() * h;
    if r + half_diag <= eta {
        return 1.0;
    }
    if r - half_diag >= eta {
        return 0.0;
    }
    if depth == 0 {
        // Linearised signed distance across the cell.
        return (0.5 + (eta - r) / h).clamp(0.0, 1.0);
    }
    let q = 0.25 * h;
    let mut s = 0.0;
    for dx in [-q, q] {
        for dy in [-q, q] {
            for dz in [-q, q] {
                s += ball_fraction(&(c + Vec3::new(dx, dy, dz)), 0.5 * h, p, eta, depth - 1);
            }
        }
    }
    s / 8.0
}

/// One term of the source: `E_c[idx] += coef · dt/ε · f(t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct SourceEdge {
    comp: u8,
    idx: usize,
    coef: f64,
}

/// Interpolation stencil for `a·E` at one node.
#[derive(Debug, Clone, PartialEq)]
struct Probe {
    taps: Vec<(u8, usize, f64)>,
}

/// Mur boundary pair: `(boundary index, inner neighbour index)`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct MurPair {
    comp: u8,
    b: usize,
    inner: usize,
}

/// Fields and static data of a running simulation.
#[derive(Debug, Clone)]
pub struct SimState {
    pub grid: Grid,
    pub e: [Vec<f64>; 3],
    pub h: [Vec<f64>; 3],
    /// Indices of PEC edges per `E` component.
    pub pec: [Vec<usize>; 3],
    pub step_index: usize,
    spec: SourceSpec,
    source: Vec<SourceEdge>,
    probes: Vec<Probe>,
    mur: Vec<MurPair>,
    mur_prev: Vec<(f64, f64)>,
    source_scale: f64,
}

/// Resolution and placement checks, then grid construction.
pub fn build_sim(obstacle: &Obstacle, spec: &SourceSpec, grid: &GridSpec) -> Result<SimState> {
    build_sim_with_rule(obstacle, spec, grid, &BallRule::with_default_shape(spec.p, spec.eta))
}

pub fn build_sim_with_rule(
    obstacle: &Obstacle,
    spec: &SourceSpec,
    grid_spec: &GridSpec,
    rule: &BallRule,
) -> Result<SimState> {
    let grid = Grid::resolve(spec, grid_spec)?;
    if !grid_spec.allow_coarse {
        if spec.eta / grid.h < 4.0 {
            return Err(Error::ResolutionTooCoarse(format!(
                "eta/h = {:.3} < 4",
                spec.eta / grid.h
            )));
        }
        let kmax = obstacle
            .components()
            .iter()
            .map(|c| c.max_curvature())
            .fold(0.0, f64::max);
        if kmax > 0.0 && 1.0 / (kmax * grid.h) < 8.0 {
            return Err(Error::ResolutionTooCoarse(format!(
                "minimum curvature radius / h = {:.3} < 8",
                1.0 / (kmax * grid.h)
            )));
        }
    }
    let extent = grid.extent();
    if !extent.contains_ball(&spec.p, spec.eta + grid.h) {
        return Err(Error::DomainTooSmall("source ball touches the outer wall".into()));
    }
    if obstacle.signed_distance(&spec.p) - spec.eta <= 0.0 {
        return Err(Error::Overlap {
            clearance: obstacle.signed_distance(&spec.p) - spec.eta,
        });
    }

    let n = grid.n;
    let mut pec: [Vec<usize>; 3] = Default::default();
    if !obstacle.is_empty() {
        if let Some((lo, hi)) = obstacle.bounding_box() {
            let to_idx = |x: f64, o: f64| ((x - o) / grid.h).floor().max(0.0) as usize;
            let lo_i: [usize; 3] = std::array::from_fn(|c| to_idx(lo[c], grid.origin[c]).min(n));
            let hi_i: [usize; 3] = std::array::from_fn(|c| (to_idx(hi[c], grid.origin[c]) + 1).min(n));
            if lo_i.iter().zip(&hi_i).all(|(a, b)| a <= b) {
                let mut inside = vec![false; grid.len()];
                for i in lo_i[0]..=hi_i[0] {
                    for j in lo_i[1]..=hi_i[1] {
                        for k in lo_i[2]..=hi_i[2] {
                            inside[grid.idx(i, j, k)] = obstacle.contains(&grid.node(i, j, k));
                        }
                    }
                }
                for c in 0..3 {
                    let mut off = [0usize; 3];
                    off[c] = 1;
                    for i in lo_i[0]..=hi_i[0] {
                        for j in lo_i[1]..=hi_i[1] {
                            for k in lo_i[2]..=hi_i[2] {
                                let (i2, j2, k2) = (i + off[0], j + off[1], k + off[2]);
                                if i2 > n || j2 > n || k2 > n {
                                    continue;
                                }
                                let a = grid.idx(i, j, k);
                                if inside[a] && inside[grid.idx(i2, j2, k2)] {
                                    pec[c].push(a);
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    // Source edges near B.
    let mut source = Vec::new();
    let reach = spec.eta + grid.h;
    let lo: [usize; 3] = std::array::from_fn(|c| (((spec.p[c] - reach - grid.origin[c]) / grid.h).floor().max(0.0)) as usize);
    let hi: [usize; 3] = std::array::from_fn(|c| ((((spec.p[c] + reach - grid.origin[c]) / grid.h).ceil()) as usize).min(n));
    for c in 0..3 {
        if spec.a[c] == 0.0 {
            continue;
        }
        for i in lo[0]..=hi[0] {
            for j in lo[1]..=hi[1] {
                for k in lo[2]..=hi[2] {
                    let ijk = [i, j, k];
                    if ijk[c] >= n {
                        continue;
                    }
                    let x = grid.e_position(c, i, j, k);
                    let frac = ball_fraction(&x, grid.h, &spec.p, spec.eta, 5);
                    if frac > 0.0 {
                        source.push(SourceEdge {
                            comp: c as u8,
                            idx: grid.idx(i, j, k),
                            coef: frac * spec.a[c],
                        });
                    }
                }
            }
        }
    }

    let probes = rule
        .nodes
        .iter()
        .map(|x| probe_stencil(&grid, x, &spec.a))
        .collect::<Result<Vec<_>>>()?;

    let mur = if grid.mur { mur_pairs(&grid) } else { Vec::new() };
    let mur_prev = vec![(0.0, 0.0); mur.len()];
    let fmax = (0..=256)
        .map(|k| spec.pulse.eval(spec.horizon * k as f64 / 256.0).abs())
        .fold(0.0, f64::max);
    Ok(SimState {
        e: [vec![0.0; grid.len()], vec![0.0; grid.len()], vec![0.0; grid.len()]],
        h: [vec![0.0; grid.len()], vec![0.0; grid.len()], vec![0.0; grid.len()]],
        pec,
        step_index: 0,
        spec: spec.clone(),
        source,
        probes,
        mur,
        mur_prev,
        source_scale: (fmax * spec.horizon / spec.eps).max(f64::MIN_POSITIVE),
        grid,
    })
}

fn probe_stencil(grid: &Grid, x: &Vec3, a: &Vec3) -> Result<Probe> {
    let mut taps = Vec::with_capacity(24);
    for c in 0..3 {
        if a[c] == 0.0 {
            continue;
        }
        let mut u = (x - grid.origin) / grid.h;
        u[c] -= 0.5;
        let base: [usize; 3] = std::array::from_fn(|d| u[d].floor() as usize);
        let w: [f64; 3] = std::array::from_fn(|d| u[d] - u[d].floor());
        if (0..3).any(|d| u[d] < 0.0 || base[d] + 1 > grid.n) {
            return Err(Error::DomainTooSmall("record node outside the grid".into()));
        }
        for corner in 0..8 {
            let bits = [corner & 1, (corner >> 1) & 1, (corner >> 2) & 1];
            let weight: f64 = (0..3)
                .map(|d| if bits[d] == 1 { w[d] } else { 1.0 - w[d] })
                .product();
            if weight == 0.0 {
                continue;
            }
            let idx = grid.idx(base[0] + bits[0], base[1] + bits[1], base[2] + bits[2]);
            taps.push((c as u8, idx, weight * a[c]));
        }
    }
    Ok(Probe { taps })
}

/// Tangential `E` entries on the six walls paired with their inward
/// neighbours.
fn mur_pairs(grid: &Grid) -> Vec<MurPair> {
    let n = grid.n;
    let mut out = Vec::new();
    for axis in 0..3 {
        for (wall, inner) in [(0usize, 1usize), (n, n - 1)] {
            for c in (0..3).filter(|&c| c != axis) {
                let t = 3 - axis - c;
                let c_len = n; // component c lives on n edges along its own axis
                for u in 0..c_len {
                    for v in 1..n {
                        let mut ijk = [0usize; 3];
                        ijk[axis] = wall;
                        ijk[c] = u;
                        ijk[t] = v;
                        let b = grid.idx(ijk[0], ijk[1], ijk[2]);
                        ijk[axis] = inner;
                        let inn = grid.idx(ijk[0], ijk[1], ijk[2]);
                        out.push(MurPair {
                            comp: c as u8,
                            b,
                            inner: inn,
                        });
                    }
                }
            }
        }
    }
    out
}

impl SimState {
    pub fn time(&self) -> f64 {
        self.step_index as f64 * self.grid.dt
    }

    /// `a·E` at the record nodes.
    pub fn sample(&self) -> Vec<f64> {
        self.probes
            .iter()
            .map(|p| p.taps.iter().map(|&(c, i, w)| w * self.e[c as usize][i]).sum())
            .collect()
    }

    pub fn max_e(&self) -> f64 {
        self.e
            .iter()
            .flat_map(|v| v.iter())
            .fold(0.0f64, |m, x| m.max(x.abs()))
    }

    /// Discrete energy `(ε|E|² + μ|H|²) h³ / 2` with `H` at the half step.
    pub fn energy(&self) -> f64 {
        let e2: f64 = self.e.iter().flat_map(|v| v.iter()).map(|x| x * x).sum();
        let h2: f64 = self.h.iter().flat_map(|v| v.iter()).map(|x| x * x).sum();
        0.5 * (self.spec.eps * e2 + self.spec.mu * h2) * self.grid.h.powi(3)
    }

    /// Discrete `∇·E` at node `(i, j, k)`.
    pub fn divergence(&self, i: usize, j: usize, k: usize) -> f64 {
        let g = &self.grid;
        let (ex, ey, ez) = (&self.e[0], &self.e[1], &self.e[2]);
        (ex[g.idx(i, j, k)] - ex[g.idx(i - 1, j, k)] + ey[g.idx(i, j, k)] - ey[g.idx(i, j - 1, k)]
            + ez[g.idx(i, j, k)]
            - ez[g.idx(i, j, k - 1)])
            / g.h
    }

    /// Source time function at the `E` half step of the next update.
    fn current(&self) -> f64 {
        self.spec
            .pulse
            .eval((self.step_index as f64 + 0.5) * self.grid.dt)
    }

    /// One leapfrog step: `H` to `n+½`, then `E` to `n+1`.
    pub fn step(&mut self) -> Result<()> {
        let g = self.grid.clone();
        let s = g.stride();
        let n = g.n;
        let ch = g.dt / (self.spec.mu * g.h);
        let ce = g.dt / (self.spec.eps * g.h);
        let s2 = s * s;

        {
            let [ex, ey, ez] = &self.e;
            let [hx, hy, hz] = &mut self.h;
            hx.par_chunks_mut(s2).enumerate().for_each(|(i, slab)| {
                let o = i * s2;
                for j in 0..n {
                    for k in 0..n {
                        let a = j * s + k;
                        let q = o + a;
                        slab[a] -= ch * ((ez[q + s] - ez[q]) - (ey[q + 1] - ey[q]));
                    }
                }
            });
            hy.par_chunks_mut(s2).enumerate().for_each(|(i, slab)| {
                if i >= n {
                    return;
                }
                let o = i * s2;
                for j in 0..=n {
                    for k in 0..n {
                        let a = j * s + k;
                        let q = o + a;
                        slab[a] -= ch * ((ex[q + 1] - ex[q]) - (ez[q + s2] - ez[q]));
                    }
                }
            });
            hz.par_chunks_mut(s2).enumerate().for_each(|(i, slab)| {
                if i >= n {
                    return;
                }
                let o = i * s2;
                for j in 0..n {
                    for k in 0..=n {
                        let a = j * s + k;
                        let q = o + a;
                        slab[a] -= ch * ((ey[q + s2] - ey[q]) - (ex[q + s] - ex[q]));
                    }
                }
            });
        }

        if !self.mur.is_empty() {
            for (m, prev) in self.mur.iter().zip(self.mur_prev.iter_mut()) {
                let e = &self.e[m.comp as usize];
                *prev = (e[m.b], e[m.inner]);
            }
        }

        {
            let [hx, hy, hz] = &self.h;
            let [ex, ey, ez] = &mut self.e;
            ex.par_chunks_mut(s2).enumerate().for_each(|(i, slab)| {
                if i >= n {
                    return;
                }
                let o = i * s2;
                for j in 1..n {
                    for k in 1..n {
                        let a = j * s + k;
                        let q = o + a;
                        slab[a] += ce * ((hz[q] - hz[q - s]) - (hy[q] - hy[q - 1]));
                    }
                }
            });
            ey.par_chunks_mut(s2).enumerate().for_each(|(i, slab)| {
                if i == 0 || i >= n {
                    return;
                }
                let o = i * s2;
                for j in 0..n {
                    for k in 1..n {
                        let a = j * s + k;
                        let q = o + a;
                        slab[a] += ce * ((hx[q] - hx[q - 1]) - (hz[q] - hz[q - s2]));
                    }
                }
            });
            ez.par_chunks_mut(s2).enumerate().for_each(|(i, slab)| {
                if i == 0 || i >= n {
                    return;
                }
                let o = i * s2;
                for j in 1..n {
                    for k in 0..n {
                        let a = j * s + k;
                        let q = o + a;
                        slab[a] += ce * ((hy[q] - hy[q - s2]) - (hx[q] - hx[q - s]));
                    }
                }
            });
        }

        let f = self.current();
        if f != 0.0 {
            let cj = g.dt / self.spec.eps * f;
            for src in &self.source {
                self.e[src.comp as usize][src.idx] += cj * src.coef;
            }
        }

        if !self.mur.is_empty() {
            let c = 1.0 / (self.spec.mu * self.spec.eps).sqrt();
            let r = (c * g.dt - g.h) / (c * g.dt + g.h);
            for (m, &(b_old, in_old)) in self.mur.iter().zip(&self.mur_prev) {
                let e = &mut self.e[m.comp as usize];
                e[m.b] = in_old + r * (e[m.inner] - b_old);
            }
        }

        for (c, list) in self.pec.iter().enumerate() {
            let e = &mut self.e[c];
            for &i in list {
                e[i] = 0.0;
            }
        }

        self.step_index += 1;
        if self.step_index % 32 == 0 || self.step_index == g.steps {
            let m = self.max_e();
            if !m.is_finite() || m > 1e12 * self.source_scale {
                return Err(Error::NumericBlowup {
                    step: self.step_index,
                    max_field: m,
                });
            }
        }
        Ok(())
    }
}

/// Runs through `t = T`, recording `a·E` at the default ball nodes.
pub fn run(obstacle: &Obstacle, spec: &SourceSpec, grid: &GridSpec) -> Result<FieldRecord> {
    run_with_rule(obstacle, spec, grid, &BallRule::with_default_shape(spec.p, spec.eta))
}

pub fn run_with_rule(
    obstacle: &Obstacle,
    spec: &SourceSpec,
    grid_spec: &GridSpec,
    rule: &BallRule,
) -> Result<FieldRecord> {
    let mut sim = build_sim_with_rule(obstacle, spec, grid_spec, rule)?;
    let steps = sim.grid.steps;
    let mut samples = Vec::with_capacity((steps + 1) * rule.len());
    samples.extend(sim.sample());
    for _ in 0..steps {
        sim.step()?;
        samples.extend(sim.sample());
    }
    Ok(FieldRecord {
        nodes: rule.nodes.clone(),
        weights: rule.weights.clone(),
        dt: sim.grid.dt,
        steps,
        samples,
        spec: spec.clone(),
        grid: grid_spec.clone(),
        resolved: Some(sim.grid.clone()),
        obstacle: obstacle.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::source::Pulse;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn spec(t: f64) -> SourceSpec {
        let pulse = Pulse::ramped_sine(1.0, 0.5 * (t - 0.5), t - 0.5, true, t).unwrap();
        SourceSpec::new(Vec3::new(3.0, 0.0, 0.0), 0.25, Vec3::z(), pulse, 3.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn causal_extent_examples() {
        let mut s = spec(4.0);
        s.p = Vec3::zeros();
        let obs = Obstacle::empty();
        let b = causal_extent(&s, &obs);
        assert!(b.half_width() >= 2.125);
        assert_relative_eq!(b.half_width(), 2.25, epsilon = 1e-15);
        let mut s2 = s.clone();
        s2.horizon = 8.0;
        assert_relative_eq!(causal_extent(&s2, &obs).half_width() - b.half_width(), 2.0, epsilon = 1e-14);
        s2.horizon = 1e-9;
        assert!(causal_extent(&s2, &obs).half_width() < 0.25 + 1e-6);
    }

    #[test]
    fn grid_is_node_aligned_and_stable() {
        let s = spec(4.0);
        let g = Grid::resolve(&s, &GridSpec::new(0.05)).unwrap();
        let c = 1.0;
        assert!(g.dt <= 0.5 * 0.05 / (c * 3f64.sqrt()) + 1e-15);
        assert_relative_eq!(g.dt * g.steps as f64, 4.0, epsilon = 1e-12);
        // x = 1 (the reflector) is a node plane.
        let u = (1.0 - g.origin.x) / g.h;
        assert!((u - u.round()).abs() < 1e-9);
        assert!(g.extent().half_width() >= 2.25);
    }

    #[test]
    fn resolution_rules() {
        let s = spec(4.0);
        let obs = Obstacle::sphere(Vec3::zeros(), 1.0).unwrap();
        assert!(matches!(build_sim(&obs, &s, &GridSpec::new(0.1)), Err(Error::ResolutionTooCoarse(_))));
        let mut g = GridSpec::new(0.1);
        g.allow_coarse = true;
        assert!(build_sim(&obs, &s, &g).is_ok());
        let small = Obstacle::sphere(Vec3::zeros(), 0.3).unwrap();
        assert!(matches!(build_sim(&small, &s, &GridSpec::new(0.05)), Err(Error::ResolutionTooCoarse(_))));
        let mut g = GridSpec::new(0.05);
        g.half_width = Some(1.0);
        assert!(matches!(build_sim(&obs, &s, &g), Err(Error::DomainTooSmall(_))));
    }

    #[test]
    fn pec_mask_volume() {
        let mut s = spec(2.0);
        s.p = Vec3::new(1.6, 0.0, 0.0);
        let obs = Obstacle::sphere(Vec3::zeros(), 1.0).unwrap();
        let mut g = GridSpec::new(0.05);
        g.half_width = Some(2.7);
        let sim = build_sim(&obs, &s, &g).unwrap();
        // x-edges with both ends inside ≈ interior nodes; compare with |D|/h³.
        let expected = 4.0 / 3.0 * PI / 0.05f64.powi(3);
        let count = sim.pec[0].len() as f64;
        assert!((count / expected - 1.0).abs() < 0.05, "{count} vs {expected}");
        let empty = build_sim(&Obstacle::empty(), &s, &g).unwrap();
        assert!(empty.pec.iter().all(|v| v.is_empty()));
    }

    #[test]
    fn source_footprint_matches_ball_volume() {
        let s = spec(4.0);
        let sim = build_sim(&Obstacle::empty(), &s, &GridSpec::new(0.05)).unwrap();
        let vol: f64 = sim.source.iter().map(|e| e.coef).sum::<f64>() * 0.05f64.powi(3);
        assert_relative_eq!(vol, 4.0 / 3.0 * PI * 0.25f64.powi(3), max_relative = 5e-3);
    }

    #[test]
    fn first_step_is_pure_source() {
        let s = spec(4.0);
        let mut sim = build_sim(&Obstacle::empty(), &s, &GridSpec::new(0.05)).unwrap();
        sim.step().unwrap();
        assert!(sim.h.iter().all(|v| v.iter().all(|&x| x == 0.0)));
        let f = s.pulse.eval(0.5 * sim.grid.dt);
        for src in &sim.source {
            assert_relative_eq!(sim.e[2][src.idx], sim.grid.dt * f * src.coef, max_relative = 1e-14);
        }
        let zero = s.with_pulse(Pulse::zero(4.0)).unwrap();
        let mut sim = build_sim(&Obstacle::empty(), &zero, &GridSpec::new(0.05)).unwrap();
        for _ in 0..10 {
            sim.step().unwrap();
        }
        assert_eq!(sim.max_e(), 0.0);
    }

    fn short_pulse_spec() -> SourceSpec {
        let mut s = spec(3.0);
        s.pulse = Pulse::ramped_sine(4.0, 0.3, 0.6, true, 3.0).unwrap();
        s
    }

    fn coarse() -> GridSpec {
        let mut g = GridSpec::new(0.1);
        g.allow_coarse = true;
        g
    }

    fn dot(a: &[Vec<f64>; 3], b: &[Vec<f64>; 3]) -> f64 {
        (0..3)
            .map(|c| a[c].iter().zip(&b[c]).map(|(x, y)| x * y).sum::<f64>())
            .sum()
    }

    #[test]
    fn yee_energy_invariant_is_conserved() {
        let s = short_pulse_spec();
        let obs = Obstacle::sphere(Vec3::new(1.5, 0.0, 0.0), 0.8).unwrap();
        let mut sim = build_sim(&obs, &s, &coarse()).unwrap();
        while sim.time() < 0.7 {
            sim.step().unwrap();
        }
        // ε E^n·E^n + μ H^{n-½}·H^{n+½} is exact for the lossless scheme.
        let mut values = Vec::new();
        for _ in 0..40 {
            let (e, h) = (sim.e.clone(), sim.h.clone());
            sim.step().unwrap();
            values.push(dot(&e, &e) + dot(&h, &sim.h));
        }
        let first = values[0];
        assert!(first > 0.0);
        for v in &values {
            assert!(((v - first) / first).abs() < 1e-10, "{first} -> {v}");
        }
    }

    #[test]
    fn divergence_stays_zero_away_from_sources() {
        let s = short_pulse_spec();
        let obs = Obstacle::sphere(Vec3::new(1.5, 0.0, 0.0), 0.8).unwrap();
        let mut sim = build_sim(&obs, &s, &coarse()).unwrap();
        for _ in 0..60 {
            sim.step().unwrap();
        }
        let g = sim.grid.clone();
        let scale = sim.max_e() / g.h;
        let mut worst = 0.0f64;
        for i in 1..g.n {
            for j in 1..g.n {
                for k in 1..g.n {
                    let x = g.node(i, j, k);
                    if (x - s.p).norm() > s.eta + 2.0 * g.h && obs.signed_distance(&x) > 2.0 * g.h {
                        worst = worst.max(sim.divergence(i, j, k).abs());
                    }
                }
            }
        }
        assert!(worst <= 1e-12 * scale, "div {worst} vs scale {scale}");
    }

    #[test]
    fn mur_walls_absorb_outgoing_waves() {
        let s = short_pulse_spec();
        let mut g = coarse();
        g.mur = true;
        g.half_width = Some(1.0);
        let mut closed_spec = coarse();
        closed_spec.half_width = Some(1.0);
        assert!(matches!(
            build_sim(&Obstacle::empty(), &s, &closed_spec),
            Err(Error::DomainTooSmall(_))
        ));
        let mut sim = build_sim(&Obstacle::empty(), &s, &g).unwrap();
        let mut peak = 0.0f64;
        while sim.time() < 0.6 {
            sim.step().unwrap();
            peak = peak.max(sim.energy());
        }
        while sim.step_index < sim.grid.steps {
            sim.step().unwrap();
        }
        assert!(sim.energy() < 0.05 * peak, "left {} of peak {peak}", sim.energy());
    }

    #[test]
    fn reversing_direction_negates_the_field() {
        let s = spec(1.0);
        let obs = Obstacle::sphere(Vec3::zeros(), 1.0).unwrap();
        let flipped = s.with_direction(-s.a).unwrap();
        let mut s1 = build_sim(&obs, &s, &coarse()).unwrap();
        let mut s2 = build_sim(&obs, &flipped, &coarse()).unwrap();
        for _ in 0..20 {
            s1.step().unwrap();
            s2.step().unwrap();
        }
        for c in 0..3 {
            assert!(s1.e[c].iter().zip(&s2.e[c]).all(|(a, b)| *a == -*b));
        }
        // a·E is even under a -> -a.
        let r1 = run(&obs, &s, &coarse()).unwrap();
        let r2 = run(&obs, &flipped, &coarse()).unwrap();
        assert_eq!(r1.samples, r2.samples);
        assert!(r1.samples[..r1.nodes.len()].iter().all(|&x| x == 0.0));
        assert_eq!(r1.samples.len(), (r1.steps + 1) * r1.nodes.len());
    }
}
