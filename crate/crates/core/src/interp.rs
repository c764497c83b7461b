//! Piecewise-linear tables and rectangular bilinear grids.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Piecewise-linear function given by strictly increasing breakpoints.
/// Queries outside the breakpoint range are clamped to the end values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1d {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl Table1d {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.is_empty() || xs.len() != ys.len() {
            return Err(Error::InvalidParam {
                name: "table",
                reason: format!("{} breakpoints vs {} values", xs.len(), ys.len()),
            });
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParam {
                name: "table",
                reason: "breakpoints must be strictly increasing".into(),
            });
        }
        if xs.iter().chain(ys.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParam {
                name: "table",
                reason: "non-finite entry".into(),
            });
        }
        Ok(Self { xs, ys })
    }

    pub fn constant(value: f64) -> Self {
        Self {
            xs: vec![0.0],
            ys: vec![value],
        }
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if n == 1 || x <= self.xs[0] {
            return self.ys[0];
        }
        if x >= self.xs[n - 1] {
            return self.ys[n - 1];
        }
        let i = self.xs.partition_point(|&b| b <= x) - 1;
        let t = (x - self.xs[i]) / (self.xs[i + 1] - self.xs[i]);
        self.ys[i] + t * (self.ys[i + 1] - self.ys[i])
    }

    pub fn max_value(&self) -> f64 {
        self.ys.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_value(&self) -> f64 {
        self.ys.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Values on a rectangular grid, `values[i][j]` at `(rows[i], cols[j])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid2d {
    rows: Vec<f64>,
    cols: Vec<f64>,
    values: Vec<Vec<f64>>,
}

impl Grid2d {
    pub fn new(rows: Vec<f64>, cols: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        let bad = |reason: String| Error::InvalidParam {
            name: "grid",
            reason,
        };
        if rows.len() < 2 || cols.len() < 2 {
            return Err(bad("grid needs at least 2x2 nodes".into()));
        }
        if rows.windows(2).any(|w| w[1] <= w[0]) || cols.windows(2).any(|w| w[1] <= w[0]) {
            return Err(bad("breakpoints must be strictly increasing".into()));
        }
        if values.len() != rows.len() || values.iter().any(|r| r.len() != cols.len()) {
            return Err(bad(format!(
                "expected {}x{} values",
                rows.len(),
                cols.len()
            )));
        }
        if values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(bad("non-finite entry".into()));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn rows(&self) -> &[f64] {
        &self.rows
    }

    pub fn cols(&self) -> &[f64] {
        &self.cols
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn row_range(&self) -> (f64, f64) {
        (self.rows[0], self.rows[self.rows.len() - 1])
    }

    pub fn max_value(&self) -> f64 {
        self.values
            .iter()
            .flatten()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    fn locate(bps: &[f64], x: f64) -> (usize, f64) {
        let n = bps.len();
        if x <= bps[0] {
            return (0, 0.0);
        }
        if x >= bps[n - 1] {
            return (n - 2, 1.0);
        }
        let i = bps.partition_point(|&b| b <= x) - 1;
        (i, (x - bps[i]) / (bps[i + 1] - bps[i]))
    }

    /// Bilinear interpolation; the column coordinate is clamped to the grid,
    /// the row coordinate must lie inside it.
    pub fn eval(&self, row: f64, col: f64) -> Result<f64> {
        let (lo, hi) = self.row_range();
        if !(lo..=hi).contains(&row) {
            return Err(Error::OutOfGrid {
                speed: row,
                min: lo,
                max: hi,
            });
        }
        let (i, u) = Self::locate(&self.rows, row);
        let (j, v) = Self::locate(&self.cols, col);
        let z = &self.values;
        Ok((1.0 - u) * (1.0 - v) * z[i][j]
            + (1.0 - u) * v * z[i][j + 1]
            + u * (1.0 - v) * z[i + 1][j]
            + u * v * z[i + 1][j + 1])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_clamps_and_interpolates() {
        let t = Table1d::new(vec![0.0, 1.0, 3.0], vec![0.0, 10.0, 30.0]).unwrap();
        assert_eq!(t.eval(-1.0), 0.0);
        assert_eq!(t.eval(0.5), 5.0);
        assert_eq!(t.eval(2.0), 20.0);
        assert_eq!(t.eval(5.0), 30.0);
        assert!(Table1d::new(vec![0.0, 0.0], vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn grid_identity_at_nodes_and_midpoint_mean() {
        let g = Grid2d::new(
            vec![0.0, 1.0],
            vec![0.0, 2.0],
            vec![vec![1.0, 2.0], vec![4.0, 9.0]],
        )
        .unwrap();
        assert_eq!(g.eval(1.0, 2.0).unwrap(), 9.0);
        assert_eq!(g.eval(0.0, 2.0).unwrap(), 2.0);
        assert_eq!(g.eval(0.5, 1.0).unwrap(), 4.0);
        assert!(g.eval(1.5, 1.0).is_err());
    }
}
