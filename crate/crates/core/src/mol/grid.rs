use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::BoundaryKind;
use crate::error::{Error, Result};

/// Equispaced 1D mesh with `n_x` intervals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mesh1D {
    pub x_lo: f64,
    pub x_hi: f64,
    pub n_x: usize,
    pub bc: BoundaryKind,
}

impl Mesh1D {
    pub fn new(x_lo: f64, x_hi: f64, n_x: usize, bc: BoundaryKind) -> Result<Self> {
        if !(x_hi > x_lo) || !x_lo.is_finite() || !x_hi.is_finite() {
            return Err(Error::Config(format!("mesh needs finite x_hi > x_lo, got [{x_lo}, {x_hi}]")));
        }
        if n_x < 8 {
            return Err(Error::Config(format!("mesh needs at least 8 intervals, got {n_x}")));
        }
        Ok(Self { x_lo, x_hi, n_x, bc })
    }

    pub fn dx(&self) -> f64 {
        (self.x_hi - self.x_lo) / self.n_x as f64
    }

    pub fn nodes(&self) -> usize {
        match self.bc {
            BoundaryKind::DirichletZero => self.n_x + 1,
            BoundaryKind::Periodic => self.n_x,
        }
    }

    pub fn coordinates(&self) -> Vec<f64> {
        let dx = self.dx();
        (0..self.nodes()).map(|k| self.x_lo + k as f64 * dx).collect()
    }
}

/// Snapshots `values[l]` at times `l · dt` on a mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSolution {
    pub mesh: Mesh1D,
    /// Spacing of the stored snapshots.
    pub dt: f64,
    pub values: Vec<Vec<f64>>,
    /// Start time of the step where the solve produced a non-finite value.
    pub diverged_at: Option<f64>,
}

const MAGIC: &[u8; 4] = b"PDEG";
const VERSION: u16 = 1;

impl GridSolution {
    /// Number of stored time intervals.
    pub fn n_t(&self) -> usize {
        self.values.len().saturating_sub(1)
    }

    pub fn t_end(&self) -> f64 {
        self.n_t() as f64 * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.values.len()).map(|l| l as f64 * self.dt).collect()
    }

    /// Population standard deviation over every stored value.
    pub fn std(&self) -> f64 {
        let n = self.values.iter().map(Vec::len).sum::<usize>() as f64;
        let mean = self.values.iter().flatten().sum::<f64>() / n;
        (self.values.iter().flatten().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
    }

    /// Bilinear interpolation at `(x, t)` points. Periodic meshes wrap `x`.
    pub fn interpolate(&self, points: &[(f64, f64)]) -> Result<Vec<f64>> {
        points.iter().map(|&(x, t)| self.interpolate_one(x, t)).collect()
    }

    fn interpolate_one(&self, x: f64, t: f64) -> Result<f64> {
        let t_end = self.t_end();
        let eps = 1e-12 * t_end.max(1.0);
        if !(t >= -eps && t <= t_end + eps) {
            return Err(Error::Input(format!("time {t} outside the solution window [0, {t_end}]")));
        }
        let (k0, k1, wx) = self.x_cell(x)?;
        let (l0, l1, wt) = if self.n_t() == 0 {
            (0, 0, 0.0)
        } else {
            let s = snap((t / self.dt).clamp(0.0, self.n_t() as f64));
            let l0 = (s.floor() as usize).min(self.n_t() - 1);
            (l0, l0 + 1, s - l0 as f64)
        };
        let v = |l: usize, k: usize| self.values[l][k];
        let lo = v(l0, k0) * (1.0 - wx) + v(l0, k1) * wx;
        let hi = v(l1, k0) * (1.0 - wx) + v(l1, k1) * wx;
        Ok(lo * (1.0 - wt) + hi * wt)
    }

    fn x_cell(&self, x: f64) -> Result<(usize, usize, f64)> {
        let m = &self.mesh;
        let dx = m.dx();
        match m.bc {
            BoundaryKind::Periodic => {
                let len = m.x_hi - m.x_lo;
                let s = snap((x - m.x_lo).rem_euclid(len) / dx);
                let k0 = (s.floor() as usize).min(m.n_x - 1);
                Ok((k0, (k0 + 1) % m.n_x, s - k0 as f64))
            }
            BoundaryKind::DirichletZero => {
                let eps = 1e-12 * (m.x_hi - m.x_lo);
                if !(x >= m.x_lo - eps && x <= m.x_hi + eps) {
                    return Err(Error::Input(format!("x = {x} outside [{}, {}]", m.x_lo, m.x_hi)));
                }
                let s = snap(((x - m.x_lo) / dx).clamp(0.0, m.n_x as f64));
                let k0 = (s.floor() as usize).min(m.n_x - 1);
                Ok((k0, k0 + 1, s - k0 as f64))
            }
        }
    }

    /// Same field restricted to a coarser output mesh sharing the nodes
    /// (`n_x` must divide this mesh's `n_x`).
    pub fn subsample_x(&self, n_x: usize) -> Result<Self> {
        if n_x == 0 || self.mesh.n_x % n_x != 0 {
            return Err(Error::Config(format!("{n_x} does not divide {}", self.mesh.n_x)));
        }
        let stride = self.mesh.n_x / n_x;
        let mesh = Mesh1D { n_x, ..self.mesh };
        let values = self.values.iter().map(|row| (0..mesh.nodes()).map(|k| row[k * stride]).collect()).collect();
        Ok(Self { mesh, dt: self.dt, values, diverged_at: self.diverged_at })
    }

    /// Binary form: `PDEG`, version u16, bc tag u8, x_lo, x_hi (f64), n_x, n_t
    /// (u32), T (f64), divergence time (f64, NaN when none), then the
    /// snapshots row by row as little-endian f64.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(self.mesh.bc.tag());
        out.extend_from_slice(&self.mesh.x_lo.to_le_bytes());
        out.extend_from_slice(&self.mesh.x_hi.to_le_bytes());
        out.extend_from_slice(&(self.mesh.n_x as u32).to_le_bytes());
        out.extend_from_slice(&(self.n_t() as u32).to_le_bytes());
        out.extend_from_slice(&self.t_end().to_le_bytes());
        out.extend_from_slice(&self.diverged_at.unwrap_or(f64::NAN).to_le_bytes());
        for v in self.values.iter().flatten() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(b: &[u8], path: &Path) -> Result<Self> {
        let bad = |m: &str| Error::format(path, m);
        const HEAD: usize = 4 + 2 + 1 + 8 + 8 + 4 + 4 + 8 + 8;
        if b.len() < HEAD || &b[..4] != MAGIC {
            return Err(bad("missing PDEG header"));
        }
        if u16::from_le_bytes([b[4], b[5]]) != VERSION {
            return Err(bad("unsupported grid format version"));
        }
        let bc = BoundaryKind::from_tag(b[6]).ok_or_else(|| bad("unknown boundary tag"))?;
        let f = |o: usize| f64::from_le_bytes(b[o..o + 8].try_into().unwrap());
        let u = |o: usize| u32::from_le_bytes(b[o..o + 4].try_into().unwrap()) as usize;
        let (x_lo, x_hi, n_x, n_t, t_end, div) = (f(7), f(15), u(23), u(27), f(31), f(39));
        let mesh = Mesh1D::new(x_lo, x_hi, n_x, bc).map_err(|e| bad(&e.to_string()))?;
        let nodes = mesh.nodes();
        if b.len() != HEAD + 8 * nodes * (n_t + 1) {
            return Err(bad("value block length does not match header"));
        }
        let vals: Vec<f64> = b[HEAD..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        let values = vals.chunks(nodes).map(<[f64]>::to_vec).collect();
        let dt = if n_t == 0 { 0.0 } else { t_end / n_t as f64 };
        Ok(Self { mesh, dt, values, diverged_at: (!div.is_nan()).then_some(div) })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let b = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&b, path)
    }

    /// CSV with header `x,t,u`, one row per node and snapshot.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let io = |e: std::io::Error| Error::io(path, e);
        let mut w = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
        writeln!(w, "x,t,u").map_err(io)?;
        let x = self.mesh.coordinates();
        for (l, row) in self.values.iter().enumerate() {
            let t = l as f64 * self.dt;
            for (xk, v) in x.iter().zip(row) {
                writeln!(w, "{xk},{t},{v}").map_err(io)?;
            }
        }
        w.flush().map_err(io)
    }
}

/// Rounds fractional cell positions that sit on a node to the node, so
/// sampling at grid points returns stored values exactly.
fn snap(s: f64) -> f64 {
    let r = s.round();
    if (s - r).abs() < 1e-9 {
        r
    } else {
        s
    }
}
