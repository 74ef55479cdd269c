//! Two-dimensional result maps and their CSV/JSON forms.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisDef {
    pub name: String,
    pub unit: String,
    pub grid: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapKind {
    Reflectance,
    Transmittance,
    QualityFactor,
}

/// Values on the grid `axis1 × axis2`, stored row-major: `values[i][j]`
/// belongs to `axis1.grid[i]`, `axis2.grid[j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapResult {
    pub kind: MapKind,
    pub axis1: AxisDef,
    pub axis2: AxisDef,
    /// Failed grid points hold NaN (`null` in JSON).
    #[serde(with = "nan_as_null")]
    pub values: Vec<Vec<f64>>,
    pub config_hash: String,
    pub started: String,
    pub finished: String,
}

impl MapResult {
    pub fn validate(&self) -> Result<()> {
        if self.values.len() != self.axis1.grid.len()
            || self
                .values
                .iter()
                .any(|row| row.len() != self.axis2.grid.len())
        {
            return Err(Error::invalid("map dimensions do not match axis grids"));
        }
        if matches!(self.kind, MapKind::Reflectance | MapKind::Transmittance) {
            let tol = 1e-6;
            if self
                .values
                .iter()
                .flatten()
                .any(|v| v.is_finite() && (*v < -tol || *v > 1.0 + tol))
            {
                return Err(Error::invalid("reflectance/transmittance outside [0, 1]"));
            }
        }
        Ok(())
    }

    /// CSV with a header naming both axes and their units; one row per grid
    /// point in row-major order, 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = format!(
            "{}[{}],{}[{}],{:?}\n",
            self.axis1.name, self.axis1.unit, self.axis2.name, self.axis2.unit, self.kind
        )
        .to_lowercase();
        for (i, a) in self.axis1.grid.iter().enumerate() {
            for (j, b) in self.axis2.grid.iter().enumerate() {
                out.push_str(&format!("{a:.16e},{b:.16e},{:.16e}\n", self.values[i][j]));
            }
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: MapResult = serde_json::from_str(s)?;
        m.validate()?;
        Ok(m)
    }

    pub fn max(&self) -> Option<(usize, usize, f64)> {
        let mut best: Option<(usize, usize, f64)> = None;
        for (i, row) in self.values.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                if v.is_finite() && best.map_or(true, |b| *v > b.2) {
                    best = Some((i, j, *v));
                }
            }
        }
        best
    }
}

mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[Vec<f64>], s: S) -> Result<S::Ok, S::Error> {
        let opt: Vec<Vec<Option<f64>>> = v
            .iter()
            .map(|r| r.iter().map(|x| x.is_finite().then_some(*x)).collect())
            .collect();
        opt.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec<f64>>, D::Error> {
        let opt = Vec::<Vec<Option<f64>>>::deserialize(d)?;
        Ok(opt
            .into_iter()
            .map(|r| r.into_iter().map(|x| x.unwrap_or(f64::NAN)).collect())
            .collect())
    }
}
