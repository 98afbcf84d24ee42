//! Problem specification for ᶜD^α y = -A f(y) y + B u on [0, T].

use crate::error::{Error, Result};
use crate::frac_ode::FieldDescriptor;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Numerics {
    pub n_steps: usize,
    /// Truncation tolerance of the kernel series.
    pub pb_tol: f64,
    pub fp_tol: f64,
    pub max_iter: usize,
    /// Relative terminal tolerance: |y(T) - y_T| ≤ terminal_tol (1 + |y_T|).
    pub terminal_tol: f64,
    /// Initial relaxation ω of the fixed-point update.
    pub damping: f64,
}

impl Default for Numerics {
    fn default() -> Self {
        Self { n_steps: 2000, pb_tol: 1e-12, fp_tol: 1e-6, max_iter: 50, terminal_tol: 1e-3, damping: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub alpha: f64,
    #[serde(rename = "T")]
    pub t_final: f64,
    pub d: usize,
    #[serde(rename = "N")]
    pub n_inputs: usize,
    /// Rows of A.
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    /// Rows of B.
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    pub y0: Vec<f64>,
    #[serde(rename = "yT")]
    pub y_t: Vec<f64>,
    pub f: FieldDescriptor,
    #[serde(default)]
    pub numerics: Numerics,
    /// Recorded in reports; the pipelines themselves are deterministic.
    #[serde(default)]
    pub seed: u64,
}

fn field(name: &str, msg: impl std::fmt::Display) -> Error {
    Error::input(format!("{name}: {msg}"))
}

fn finite_all(name: &str, v: &[f64]) -> Result<()> {
    match v.iter().position(|x| !x.is_finite()) {
        Some(i) => Err(field(name, format!("entry {i} is not finite"))),
        None => Ok(()),
    }
}

fn rows_to_matrix(name: &str, rows: &[Vec<f64>], nrows: usize, ncols: usize) -> Result<DMatrix<f64>> {
    if rows.len() != nrows {
        return Err(field(name, format!("expected {nrows} rows, found {}", rows.len())));
    }
    for (i, r) in rows.iter().enumerate() {
        if r.len() != ncols {
            return Err(field(name, format!("row {i} has {} entries, expected {ncols}", r.len())));
        }
        finite_all(name, r)?;
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

impl ProblemSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(field("alpha", format!("must lie in (0, 1), got {}", self.alpha)));
        }
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return Err(field("T", format!("must be positive and finite, got {}", self.t_final)));
        }
        if self.d == 0 {
            return Err(field("d", "must be at least 1"));
        }
        if self.n_inputs == 0 || self.n_inputs > self.d {
            return Err(field("N", format!("must satisfy 1 <= N <= d = {}, got {}", self.d, self.n_inputs)));
        }
        let a = rows_to_matrix("A", &self.a, self.d, self.d)?;
        rows_to_matrix("B", &self.b, self.d, self.n_inputs)?;
        let asym = (&a - a.transpose()).norm();
        if asym > 1e-10 * (1.0 + a.norm()) {
            return Err(field("A symmetric", format!("asymmetry norm {asym:e} exceeds 1e-10")));
        }
        for (name, v) in [("y0", &self.y0), ("yT", &self.y_t)] {
            if v.len() != self.d {
                return Err(field(name, format!("expected {} entries, found {}", self.d, v.len())));
            }
            finite_all(name, v)?;
        }
        self.f.validate().map_err(|e| match e {
            Error::NonPositiveField(m) => field("f", m),
            other => other,
        })?;
        let nm = &self.numerics;
        if nm.n_steps < 16 {
            return Err(field("numerics.n_steps", format!("must be at least 16, got {}", nm.n_steps)));
        }
        for (name, v) in [("numerics.pb_tol", nm.pb_tol), ("numerics.fp_tol", nm.fp_tol), ("numerics.terminal_tol", nm.terminal_tol)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(field(name, format!("must be positive, got {v}")));
            }
        }
        if nm.max_iter == 0 {
            return Err(field("numerics.max_iter", "must be at least 1"));
        }
        if !(nm.damping > 0.0 && nm.damping <= 1.0) {
            return Err(field("numerics.damping", format!("must lie in (0, 1], got {}", nm.damping)));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text).map_err(|e| Error::input(format!("spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn a_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.d, self.d, |i, j| self.a[i][j])
    }

    pub fn b_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.d, self.n_inputs, |i, j| self.b[i][j])
    }

    pub fn y0_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.y0)
    }

    pub fn y_t_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.y_t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SCALAR: &str = r#"{
        "alpha": 0.5, "T": 1.0, "d": 1, "N": 1,
        "A": [[0.0]], "B": [[1.0]], "y0": [0.0], "yT": [1.0],
        "f": {"kind": "constant", "c1": 1.0}
    }"#;

    #[test]
    fn parses_with_default_numerics() {
        let s = ProblemSpec::from_json(SCALAR).unwrap();
        assert_eq!(s.d, 1);
        assert_eq!(s.numerics, Numerics::default());
        let back = ProblemSpec::from_json(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn diagnostics_name_the_field() {
        let bad_alpha = SCALAR.replace("\"alpha\": 0.5", "\"alpha\": 1.5");
        assert!(ProblemSpec::from_json(&bad_alpha).unwrap_err().to_string().contains("alpha"));
        let asym = SCALAR
            .replace("\"d\": 1, \"N\": 1", "\"d\": 2, \"N\": 1")
            .replace("[[0.0]]", "[[0.0, 1.0], [0.0, 0.0]]")
            .replace("[[1.0]]", "[[1.0], [0.0]]")
            .replace("\"y0\": [0.0]", "\"y0\": [0.0, 0.0]")
            .replace("\"yT\": [1.0]", "\"yT\": [1.0, 0.0]");
        assert!(ProblemSpec::from_json(&asym).unwrap_err().to_string().contains("A symmetric"));
        let zero_f = SCALAR.replace("\"c1\": 1.0", "\"c1\": 0.0");
        assert!(ProblemSpec::from_json(&zero_f).unwrap_err().to_string().contains("f:"));
        assert!(ProblemSpec::from_json("{").is_err());
    }
}
