use serde::{Deserialize, Serialize};

use super::QoeError;

/// A nonnegative penalty sampled on a rectangular grid, read back with
/// bilinear interpolation. Queries outside the grid clamp to its edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSurface")]
pub struct PenaltySurface {
    x: Vec<f64>,
    y: Vec<f64>,
    /// `values[i][j]` is the penalty at `(x[i], y[j])`.
    values: Vec<Vec<f64>>,
}

#[derive(Deserialize)]
struct RawSurface {
    x: Vec<f64>,
    y: Vec<f64>,
    values: Vec<Vec<f64>>,
}

impl TryFrom<RawSurface> for PenaltySurface {
    type Error = QoeError;

    fn try_from(raw: RawSurface) -> Result<Self, QoeError> {
        PenaltySurface::new(raw.x, raw.y, raw.values)
    }
}

fn check_axis(axis: &[f64], name: &str) -> Result<(), QoeError> {
    if axis.is_empty() {
        return Err(QoeError::Params(format!("surface axis {name} is empty")));
    }
    if axis.iter().any(|v| !v.is_finite()) || axis.windows(2).any(|w| w[1] <= w[0]) {
        return Err(QoeError::Params(format!(
            "surface axis {name} must be finite and strictly increasing"
        )));
    }
    Ok(())
}

/// Fractional position of `v` on `axis`: (left index, weight of right).
fn locate(axis: &[f64], v: f64) -> (usize, f64) {
    if axis.len() == 1 || v <= axis[0] {
        return (0, 0.0);
    }
    let last = axis.len() - 1;
    if v >= axis[last] {
        return (last - 1, 1.0);
    }
    let i = axis.partition_point(|&a| a <= v) - 1;
    (i, (v - axis[i]) / (axis[i + 1] - axis[i]))
}

impl PenaltySurface {
    pub fn new(x: Vec<f64>, y: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self, QoeError> {
        check_axis(&x, "x")?;
        check_axis(&y, "y")?;
        if values.len() != x.len() || values.iter().any(|row| row.len() != y.len()) {
            return Err(QoeError::Params("surface values do not match its axes".into()));
        }
        if values.iter().flatten().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(QoeError::Params("surface values must be finite and nonnegative".into()));
        }
        Ok(Self { x, y, values })
    }

    pub fn from_json(text: &str) -> Result<Self, QoeError> {
        serde_json::from_str(text).map_err(|e| QoeError::Params(e.to_string()))
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let (i, tx) = locate(&self.x, x);
        let (j, ty) = locate(&self.y, y);
        let at = |a: usize, b: usize| {
            let a = a.min(self.x.len() - 1);
            let b = b.min(self.y.len() - 1);
            self.values[a][b]
        };
        let low = at(i, j) * (1.0 - ty) + at(i, j + 1) * ty;
        let high = at(i + 1, j) * (1.0 - ty) + at(i + 1, j + 1) * ty;
        low * (1.0 - tx) + high * tx
    }
}
