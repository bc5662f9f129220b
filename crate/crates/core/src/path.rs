//! Vector-valued functions of time on a uniform grid over `[0, T0]`.
//!
//! Paths are stored as node values and interpolated piecewise linearly.
//! All modules share this representation for fluid limits, tilts `g`,
//! controls and discrepancy paths, so grids line up across the pipeline.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};

/// A uniform time grid `0 = t_0 < ... < t_K = t_end`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    t_end: f64,
    steps: usize,
}

impl Grid {
    pub fn new(t_end: f64, steps: usize) -> Result<Self> {
        if !(t_end > 0.0) || !t_end.is_finite() {
            return Err(Error::invalid(format!("grid horizon must be positive, got {t_end}")));
        }
        if steps == 0 {
            return Err(Error::invalid("grid needs at least one step"));
        }
        Ok(Grid { t_end, steps })
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    /// Number of steps (`K`); there are `K + 1` nodes.
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.t_end / self.steps as f64
    }

    pub fn node(&self, k: usize) -> f64 {
        debug_assert!(k <= self.steps);
        self.t_end * k as f64 / self.steps as f64
    }
}

/// A `D`-dimensional path on a [`Grid`], piecewise linear between nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct Path<const D: usize> {
    grid: Grid,
    values: Vec<[f64; D]>,
}

/// Scalar path (controls, rate densities, discrepancies).
pub type Path1 = Path<1>;
/// Planar path `(s_t, i_t)`.
pub type Path2 = Path<2>;

impl<const D: usize> Path<D> {
    pub fn new(grid: Grid, values: Vec<[f64; D]>) -> Result<Self> {
        if values.len() != grid.steps() + 1 {
            return Err(Error::invalid(format!(
                "path needs {} node values, got {}",
                grid.steps() + 1,
                values.len()
            )));
        }
        Ok(Path { grid, values })
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> [f64; D]) -> Self {
        let values = (0..=grid.steps()).map(|k| f(grid.node(k))).collect();
        Path { grid, values }
    }

    pub fn constant(grid: Grid, value: [f64; D]) -> Self {
        Path {
            grid,
            values: vec![value; grid.steps() + 1],
        }
    }

    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, [0.0; D])
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn values(&self) -> &[[f64; D]] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [[f64; D]] {
        &mut self.values
    }

    pub fn first(&self) -> [f64; D] {
        self.values[0]
    }

    pub fn last(&self) -> [f64; D] {
        *self.values.last().expect("non-empty by construction")
    }

    /// Evaluate at `t` (clamped to the grid span); exact at grid nodes.
    pub fn eval(&self, t: f64) -> [f64; D] {
        let steps = self.grid.steps();
        let pos = (t / self.grid.t_end()).clamp(0.0, 1.0) * steps as f64;
        let k = (pos.floor() as usize).min(steps - 1);
        let frac = pos - k as f64;
        if frac <= 1e-12 {
            return self.values[k];
        }
        if frac >= 1.0 - 1e-12 {
            return self.values[k + 1];
        }
        let a = self.values[k];
        let b = self.values[k + 1];
        std::array::from_fn(|d| a[d] + frac * (b[d] - a[d]))
    }

    /// Finite-difference derivative: central in the interior, one-sided
    /// second order at the endpoints.
    pub fn derivative(&self) -> Path<D> {
        let k_max = self.grid.steps();
        let dt = self.grid.dt();
        let v = &self.values;
        let mut out = Vec::with_capacity(k_max + 1);
        for k in 0..=k_max {
            let d: [f64; D] = std::array::from_fn(|d| {
                if k == 0 {
                    (-3.0 * v[0][d] + 4.0 * v[1][d] - v[2][d]) / (2.0 * dt)
                } else if k == k_max {
                    (3.0 * v[k][d] - 4.0 * v[k - 1][d] + v[k - 2][d]) / (2.0 * dt)
                } else {
                    (v[k + 1][d] - v[k - 1][d]) / (2.0 * dt)
                }
            });
            out.push(d);
        }
        Path {
            grid: self.grid,
            values: out,
        }
    }

    /// The metric of the path space: `sup_t sum_d |a_d(t) - b_d(t)|`
    /// evaluated over the grid nodes.
    pub fn sup_sum_dist(&self, other: &Path<D>) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::invalid("paths live on different grids"));
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (0..D).map(|d| (a[d] - b[d]).abs()).sum::<f64>())
            .fold(0.0, f64::max))
    }

    pub fn sup_sum_norm(&self) -> f64 {
        self.values
            .iter()
            .map(|a| a.iter().map(|x| x.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn map(&self, f: impl Fn(f64, [f64; D]) -> [f64; D]) -> Path<D> {
        let values = (0..=self.grid.steps())
            .map(|k| f(self.grid.node(k), self.values[k]))
            .collect();
        Path {
            grid: self.grid,
            values,
        }
    }

    /// Restrict to a coarser grid whose nodes are a subset of this one's
    /// (`steps` must divide the current step count).
    pub fn downsample(&self, steps: usize) -> Result<Path<D>> {
        if steps == 0 || self.grid.steps() % steps != 0 {
            return Err(Error::invalid(format!(
                "cannot downsample {} steps to {steps}",
                self.grid.steps()
            )));
        }
        let stride = self.grid.steps() / steps;
        let grid = Grid::new(self.grid.t_end(), steps)?;
        let values = (0..=steps).map(|k| self.values[k * stride]).collect();
        Ok(Path { grid, values })
    }

    fn csv_header(&self) -> &'static str {
        match D {
            1 => "t,v",
            2 => "t,s,i",
            _ => unreachable!("only scalar and planar paths are serialized"),
        }
    }

    /// Write as CSV with 17 significant digits.
    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "{}", self.csv_header())?;
        for k in 0..=self.grid.steps() {
            write!(w, "{:.16e}", self.grid.node(k))?;
            for d in 0..D {
                write!(w, ",{:.16e}", self.values[k][d])?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// Read a path written by [`Path::write_csv`]. The grid is recovered from
    /// the time column, which must be uniform from 0.
    pub fn read_csv(r: &mut impl BufRead) -> Result<Path<D>> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Format("empty path CSV".into()))??;
        let mut times = Vec::new();
        let mut values: Vec<[f64; D]> = Vec::new();
        let expect_cols = D + 1;
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != expect_cols {
                return Err(Error::Format(format!(
                    "path CSV row has {} fields, expected {expect_cols} (header {header:?})",
                    fields.len()
                )));
            }
            let parse = |s: &str| -> Result<f64> {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Format(format!("bad number {s:?}: {e}")))
            };
            times.push(parse(fields[0])?);
            let mut row = [0.0; D];
            for d in 0..D {
                row[d] = parse(fields[d + 1])?;
            }
            values.push(row);
        }
        if values.len() < 2 {
            return Err(Error::Format("path CSV needs at least two rows".into()));
        }
        let steps = values.len() - 1;
        let t_end = *times.last().expect("non-empty");
        let grid = Grid::new(t_end, steps)?;
        if times[0].abs() > 1e-12 * t_end.abs() {
            return Err(Error::Format("path CSV must start at t = 0".into()));
        }
        for (k, t) in times.iter().enumerate() {
            if (t - grid.node(k)).abs() > 1e-9 * t_end.max(1.0) {
                return Err(Error::Format(format!(
                    "non-uniform time column at row {k}: {t} vs {}",
                    grid.node(k)
                )));
            }
        }
        Path::new(grid, values)
    }
}
