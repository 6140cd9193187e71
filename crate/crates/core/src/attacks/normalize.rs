use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-column affine map onto `[0, 1]` fitted on one set of rows.
///
/// A column whose fitted max equals its min maps every value to 0. Values
/// outside the fitted range land outside `[0, 1]`; nothing is clipped.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinMax {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl MinMax {
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.len() < 2 {
            return Err(Error::Input(format!("min-max fit needs at least 2 rows, got {}", rows.len())));
        }
        let width = rows[0].len();
        let mut min = vec![f64::INFINITY; width];
        let mut max = vec![f64::NEG_INFINITY; width];
        for r in rows {
            if r.len() != width {
                return Err(Error::Input(format!("ragged rows: {} vs {width} columns", r.len())));
            }
            for (j, &x) in r.iter().enumerate() {
                if !x.is_finite() {
                    return Err(Error::Input(format!("non-finite value in column {j}")));
                }
                min[j] = min[j].min(x);
                max[j] = max[j].max(x);
            }
        }
        Ok(Self { min, max })
    }

    pub fn width(&self) -> usize {
        self.min.len()
    }

    pub fn apply_row(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.width() {
            return Err(Error::Contract(format!(
                "row has {} columns, transform has {}",
                row.len(),
                self.width()
            )));
        }
        Ok(row
            .iter()
            .zip(self.min.iter().zip(&self.max))
            .map(|(&x, (&lo, &hi))| if hi > lo { (x - lo) / (hi - lo) } else { 0.0 })
            .collect())
    }

    pub fn apply(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        rows.iter().map(|r| self.apply_row(r)).collect()
    }
}

/// Fits on `train` and maps each of `sets` with that transform.
pub fn normalize_minmax(train: &[Vec<f64>], sets: &[&[Vec<f64>]]) -> Result<(MinMax, Vec<Vec<Vec<f64>>>)> {
    let t = MinMax::fit(train)?;
    let out = sets.iter().map(|s| t.apply(s)).collect::<Result<_>>()?;
    Ok((t, out))
}
