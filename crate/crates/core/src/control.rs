//! Control schedules: an `N × T` matrix of values in `[0, 1]`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Relaxed or binary control values, one row per controller and one column per
/// time step.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlField {
    values: DMatrix<f64>,
    binary: bool,
}

impl ControlField {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if let Some(bad) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(invalid(format!("control value {bad} outside [0, 1]")));
        }
        let binary = values.iter().all(|v| *v == 0.0 || *v == 1.0);
        Ok(Self { values, binary })
    }

    /// A relaxed control; `binary` is reported false even if values happen to be 0/1.
    pub fn relaxed(values: DMatrix<f64>) -> Result<Self> {
        let mut f = Self::new(values)?;
        f.binary = false;
        Ok(f)
    }

    pub fn binary(values: DMatrix<f64>) -> Result<Self> {
        let f = Self::new(values)?;
        if !f.binary {
            return Err(invalid("binary control contains fractional values"));
        }
        Ok(f)
    }

    /// Every entry `1 / N`.
    pub fn uniform(controllers: usize, steps: usize) -> Self {
        let v = 1.0 / controllers as f64;
        Self { values: DMatrix::from_element(controllers, steps, v), binary: false }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let t = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != t) {
            return Err(Error::Dimension("ragged control rows".into()));
        }
        Self::new(DMatrix::from_fn(n, t, |j, k| rows[j][k]))
    }

    pub fn controllers(&self) -> usize {
        self.values.nrows()
    }

    pub fn steps(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn is_binary(&self) -> bool {
        self.binary
    }

    pub fn get(&self, controller: usize, step: usize) -> f64 {
        self.values[(controller, step)]
    }

    pub fn column(&self, step: usize) -> Vec<f64> {
        self.values.column(step).iter().copied().collect()
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.values.row_iter().map(|r| r.iter().copied().collect()).collect()
    }
}

#[derive(Serialize, Deserialize)]
struct ControlFieldJson {
    controllers: usize,
    steps: usize,
    /// Absent means detect from the values.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    binary: Option<bool>,
    values: Vec<Vec<f64>>,
}

impl Serialize for ControlField {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ControlFieldJson {
            controllers: self.controllers(),
            steps: self.steps(),
            binary: Some(self.binary),
            values: self.rows(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ControlField {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = ControlFieldJson::deserialize(d)?;
        let mut f = ControlField::from_rows(&raw.values).map_err(serde::de::Error::custom)?;
        if f.controllers() != raw.controllers || f.steps() != raw.steps {
            return Err(serde::de::Error::custom("control shape does not match header"));
        }
        match raw.binary {
            Some(true) if !f.binary => {
                return Err(serde::de::Error::custom("binary control contains fractional values"));
            }
            Some(b) => f.binary = b,
            None => {}
        }
        Ok(f)
    }
}
