//! Core value types. Every matrix stores one spectrum (pixel or endmember)
//! per column, so `Y = E A` reads the same in code as in the math.

use nalgebra::DMatrix;

use crate::error::{Result, UnmixError};

/// Tolerance used by the reflectance-domain check on endmembers.
pub const REFLECTANCE_TOL: f64 = 1e-9;

fn check_finite(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if let Some(pos) = m.iter().position(|v| !v.is_finite()) {
        let (r, c) = (pos % m.nrows(), pos / m.nrows());
        return Err(UnmixError::InvalidInput(format!(
            "{what} has a non-finite entry at ({r}, {c})"
        )));
    }
    Ok(())
}

/// A `bands x (height*width)` reflectance image. Pixels are ordered row-major
/// over `(row, col)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HsiCube {
    height: usize,
    width: usize,
    values: DMatrix<f64>,
}

impl HsiCube {
    pub fn new(height: usize, width: usize, values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() < 2 {
            return Err(UnmixError::InvalidInput(format!(
                "cube needs at least 2 bands, got {}",
                values.nrows()
            )));
        }
        if height == 0 || width == 0 {
            return Err(UnmixError::InvalidInput("cube has no pixels".into()));
        }
        if values.ncols() != height * width {
            return Err(UnmixError::ShapeMismatch(format!(
                "{} pixel columns for a {height}x{width} image",
                values.ncols()
            )));
        }
        check_finite(&values, "cube")?;
        Ok(Self {
            height,
            width,
            values,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bands(&self) -> usize {
        self.values.nrows()
    }

    pub fn pixels(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_values(self) -> DMatrix<f64> {
        self.values
    }

    /// Same spatial shape, new spectra (e.g. a projected or rescaled copy).
    pub fn with_values(&self, values: DMatrix<f64>) -> Result<Self> {
        Self::new(self.height, self.width, values)
    }
}

/// `bands x r` endmember spectra with optional labels.
#[derive(Debug, Clone, PartialEq)]
pub struct EndmemberMatrix {
    spectra: DMatrix<f64>,
    names: Option<Vec<String>>,
}

impl EndmemberMatrix {
    pub fn new(spectra: DMatrix<f64>) -> Result<Self> {
        if spectra.ncols() == 0 || spectra.nrows() == 0 {
            return Err(UnmixError::InvalidInput(
                "endmember matrix needs at least one column".into(),
            ));
        }
        check_finite(&spectra, "endmember matrix")?;
        Ok(Self {
            spectra,
            names: None,
        })
    }

    pub fn with_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.spectra.ncols() {
            return Err(UnmixError::ShapeMismatch(format!(
                "{} names for {} endmembers",
                names.len(),
                self.spectra.ncols()
            )));
        }
        self.names = Some(names);
        Ok(self)
    }

    pub fn spectra(&self) -> &DMatrix<f64> {
        &self.spectra
    }

    pub fn into_spectra(self) -> DMatrix<f64> {
        self.spectra
    }

    pub fn names(&self) -> Option<&[String]> {
        self.names.as_deref()
    }

    pub fn bands(&self) -> usize {
        self.spectra.nrows()
    }

    pub fn count(&self) -> usize {
        self.spectra.ncols()
    }

    /// True when every entry lies in `[0, 1]` up to [`REFLECTANCE_TOL`].
    pub fn is_reflectance_domain(&self) -> bool {
        self.spectra
            .iter()
            .all(|&v| (-REFLECTANCE_TOL..=1.0 + REFLECTANCE_TOL).contains(&v))
    }

    /// Clamp into `[0, 1]`; used when a caller asks for reflectance-domain output.
    pub fn clamped_to_reflectance(&self) -> Self {
        Self {
            spectra: self.spectra.map(|v| v.clamp(0.0, 1.0)),
            names: self.names.clone(),
        }
    }

    /// Reorder columns: output column `i` is input column `order[i]`.
    pub fn select_columns(&self, order: &[usize]) -> Self {
        let spectra = self.spectra.select_columns(order.iter());
        let names = self
            .names
            .as_ref()
            .map(|n| order.iter().map(|&i| n[i].clone()).collect());
        Self { spectra, names }
    }
}

/// `r x n` fractional abundances with the image shape they belong to.
#[derive(Debug, Clone, PartialEq)]
pub struct AbundanceMap {
    coeffs: DMatrix<f64>,
    height: usize,
    width: usize,
    asc_enforced: bool,
    anc_enforced: bool,
}

pub const ANC_TOL: f64 = 1e-9;
pub const ASC_TOL: f64 = 1e-6;

impl AbundanceMap {
    /// Validates the constraint flags against the coefficients.
    pub fn new(
        coeffs: DMatrix<f64>,
        height: usize,
        width: usize,
        asc_enforced: bool,
        anc_enforced: bool,
    ) -> Result<Self> {
        if coeffs.ncols() != height * width {
            return Err(UnmixError::ShapeMismatch(format!(
                "{} abundance columns for a {height}x{width} image",
                coeffs.ncols()
            )));
        }
        check_finite(&coeffs, "abundance map")?;
        if anc_enforced {
            if let Some(v) = coeffs.iter().find(|&&v| v < -ANC_TOL) {
                return Err(UnmixError::InvalidInput(format!(
                    "ANC flagged but entry {v:e} is negative"
                )));
            }
        }
        if asc_enforced {
            for (j, col) in coeffs.column_iter().enumerate() {
                let s = col.sum();
                if (s - 1.0).abs() > ASC_TOL {
                    return Err(UnmixError::InvalidInput(format!(
                        "ASC flagged but pixel {j} sums to {s}"
                    )));
                }
            }
        }
        Ok(Self {
            coeffs,
            height,
            width,
            asc_enforced,
            anc_enforced,
        })
    }

    pub fn unconstrained(coeffs: DMatrix<f64>, height: usize, width: usize) -> Result<Self> {
        Self::new(coeffs, height, width, false, false)
    }

    pub fn coeffs(&self) -> &DMatrix<f64> {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> DMatrix<f64> {
        self.coeffs
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn count(&self) -> usize {
        self.coeffs.nrows()
    }

    pub fn asc_enforced(&self) -> bool {
        self.asc_enforced
    }

    pub fn anc_enforced(&self) -> bool {
        self.anc_enforced
    }

    /// Row `i` of the output is row `order[i]` of `self`. Flags are preserved.
    pub fn select_rows(&self, order: &[usize]) -> Self {
        Self {
            coeffs: self.coeffs.select_rows(order.iter()),
            ..self.clone()
        }
    }

    pub fn matches(&self, cube: &HsiCube) -> bool {
        self.height == cube.height() && self.width == cube.width()
    }
}

/// Shared knobs for the iterative solvers. The meaning of `lambda1`,
/// `lambda2` and `beta` is solver specific and documented on each solver.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    pub max_iter: usize,
    pub tol: f64,
    pub rho: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub beta: f64,
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iter: 1000,
            tol: 1e-6,
            rho: 1.0,
            lambda1: 1e-3,
            lambda2: 1e-3,
            beta: 1.0,
            seed: 0,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(UnmixError::InvalidInput("max_iter must be >= 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(UnmixError::InvalidInput("tol must be > 0".into()));
        }
        if !(self.rho > 0.0) {
            return Err(UnmixError::InvalidInput("rho must be > 0".into()));
        }
        for (name, w) in [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("beta", self.beta),
        ] {
            if !(w >= 0.0) || !w.is_finite() {
                return Err(UnmixError::InvalidInput(format!("{name} must be >= 0")));
            }
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Convergence record attached to iterative solver output.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    pub converged: bool,
    pub iterations: usize,
    /// Objective value after each outer iteration (solver specific).
    pub objective: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cube_rejects_bad_shapes() {
        let m = DMatrix::zeros(3, 6);
        assert!(HsiCube::new(2, 3, m.clone()).is_ok());
        assert!(HsiCube::new(2, 2, m.clone()).is_err());
        assert!(HsiCube::new(2, 3, DMatrix::zeros(1, 6)).is_err());
        let mut bad = m;
        bad[(0, 0)] = f64::NAN;
        assert!(HsiCube::new(2, 3, bad).is_err());
    }

    #[test]
    fn abundance_flags_are_checked() {
        let ok = DMatrix::from_row_slice(2, 2, &[0.3, 1.0, 0.7, 0.0]);
        assert!(AbundanceMap::new(ok, 1, 2, true, true).is_ok());
        let neg = DMatrix::from_row_slice(2, 2, &[-0.1, 1.0, 1.1, 0.0]);
        assert!(AbundanceMap::new(neg.clone(), 1, 2, true, true).is_err());
        assert!(AbundanceMap::new(neg, 1, 2, true, false).is_ok());
        let off = DMatrix::from_row_slice(2, 1, &[0.3, 0.3]);
        assert!(AbundanceMap::new(off, 1, 1, true, false).is_err());
    }

    #[test]
    fn reflectance_domain() {
        let e = EndmemberMatrix::new(DMatrix::from_row_slice(2, 1, &[0.0, 1.0])).unwrap();
        assert!(e.is_reflectance_domain());
        let e = EndmemberMatrix::new(DMatrix::from_row_slice(2, 1, &[-0.1, 1.0])).unwrap();
        assert!(!e.is_reflectance_domain());
        assert!(e.clamped_to_reflectance().is_reflectance_domain());
    }

    #[test]
    fn options_validate() {
        assert!(SolverOptions::default().validate().is_ok());
        let o = SolverOptions {
            rho: 0.0,
            ..Default::default()
        };
        assert!(o.validate().is_err());
        let o = SolverOptions {
            lambda2: -1.0,
            ..Default::default()
        };
        assert!(o.validate().is_err());
    }
}
