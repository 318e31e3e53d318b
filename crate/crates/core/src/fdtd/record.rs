use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Grid, GridSpec};
use crate::error::{Error, Result};
use crate::geometry::Obstacle;
use crate::source::SourceSpec;
use crate::Vec3;

const MAGIC: &[u8; 8] = b"ENCREC01";

/// `a·E` sampled at fixed nodes in `B` at `t_n = n dt`, `n = 0..=steps`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldRecord {
    pub nodes: Vec<Vec3>,
    pub weights: Vec<f64>,
    pub dt: f64,
    pub steps: usize,
    /// Row-major `[step][node]`.
    pub samples: Vec<f64>,
    pub spec: SourceSpec,
    pub grid: GridSpec,
    pub resolved: Option<Grid>,
    pub obstacle: Obstacle,
}

#[derive(Serialize, Deserialize)]
struct Header {
    spec: SourceSpec,
    grid: GridSpec,
    resolved: Option<Grid>,
    obstacle: Obstacle,
    dt: f64,
    steps: usize,
    nodes: usize,
}

impl FieldRecord {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn row(&self, step: usize) -> &[f64] {
        let m = self.nodes.len();
        &self.samples[step * m..(step + 1) * m]
    }

    pub fn time(&self, step: usize) -> f64 {
        step as f64 * self.dt
    }

    /// Pointwise difference `self - other` on identical node sets and clocks.
    pub fn difference(&self, other: &FieldRecord) -> Result<FieldRecord> {
        if self.nodes != other.nodes || self.steps != other.steps || self.dt != other.dt {
            return Err(Error::MalformedRecord(
                "records differ in nodes or time grid".into(),
            ));
        }
        let mut out = self.clone();
        for (a, b) in out.samples.iter_mut().zip(&other.samples) {
            *a -= b;
        }
        Ok(out)
    }

    /// Binary layout: magic, `u64` header length, JSON header, then node
    /// coordinates, weights and samples as little-endian `f64`.
    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let header = Header {
            spec: self.spec.clone(),
            grid: self.grid.clone(),
            resolved: self.resolved.clone(),
            obstacle: self.obstacle.clone(),
            dt: self.dt,
            steps: self.steps,
            nodes: self.nodes.len(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| Error::MalformedRecord(e.to_string()))?;
        let mut w = BufWriter::new(fs::File::create(path)?);
        w.write_all(MAGIC)?;
        w.write_all(&(json.len() as u64).to_le_bytes())?;
        w.write_all(&json)?;
        for x in &self.nodes {
            for c in x.iter() {
                w.write_all(&c.to_le_bytes())?;
            }
        }
        for v in self.weights.iter().chain(&self.samples) {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_binary(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        let mut bytes = Vec::new();
        fs::File::open(path)?.read_to_end(&mut bytes)?;
        let bad = |m: &str| Error::MalformedRecord(m.to_string());
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(bad("missing magic"));
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let body = bytes.get(16..16 + hlen).ok_or_else(|| bad("truncated header"))?;
        let header: Header = serde_json::from_slice(body).map_err(|e| Error::MalformedRecord(e.to_string()))?;
        let floats: Vec<f64> = bytes[16 + hlen..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let m = header.nodes;
        let expected = 3 * m + m + (header.steps + 1) * m;
        if floats.len() != expected || (bytes.len() - 16 - hlen) % 8 != 0 {
            return Err(bad("payload length does not match header"));
        }
        let nodes = floats[..3 * m]
            .chunks_exact(3)
            .map(|c| Vec3::new(c[0], c[1], c[2]))
            .collect();
        Ok(Self {
            nodes,
            weights: floats[3 * m..4 * m].to_vec(),
            dt: header.dt,
            steps: header.steps,
            samples: floats[4 * m..].to_vec(),
            spec: header.spec,
            grid: header.grid,
            resolved: header.resolved,
            obstacle: header.obstacle,
        })
    }

    /// CSV with columns `t,node_id,aE`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(fs::File::create(path)?);
        writeln!(w, "t,node_id,aE")?;
        for n in 0..=self.steps {
            let t = self.time(n);
            for (id, v) in self.row(n).iter().enumerate() {
                writeln!(w, "{t:.16e},{id},{v:.16e}")?;
            }
        }
        w.flush()?;
        Ok(())
    }
}
