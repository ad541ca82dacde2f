use std::collections::HashSet;

use nalgebra::DMatrix;

use crate::error::{Result, UnmixError};
use crate::types::{EndmemberMatrix, HsiCube};

/// Overcomplete dictionary `D` (p x m) of named atoms, optionally
/// partitioned into bundles (one bundle per material).
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralLibrary {
    atoms: DMatrix<f64>,
    names: Vec<String>,
    groups: Option<Vec<Vec<usize>>>,
}

impl SpectralLibrary {
    pub fn new(
        atoms: DMatrix<f64>,
        names: Vec<String>,
        groups: Option<Vec<Vec<usize>>>,
    ) -> Result<Self> {
        let m = atoms.ncols();
        if m == 0 {
            return Err(UnmixError::InvalidInput("library has no atoms".into()));
        }
        if names.len() != m {
            return Err(UnmixError::ShapeMismatch(format!(
                "{} names for {m} atoms",
                names.len()
            )));
        }
        let mut seen = HashSet::new();
        for n in &names {
            if !seen.insert(n.as_str()) {
                return Err(UnmixError::InvalidInput(format!("duplicate atom name {n:?}")));
            }
        }
        if atoms.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(UnmixError::InvalidInput(
                "library atoms must be finite and nonnegative".into(),
            ));
        }
        if let Some(groups) = &groups {
            let mut hit = vec![false; m];
            for g in groups {
                if g.is_empty() {
                    return Err(UnmixError::InvalidInput("empty bundle".into()));
                }
                for &i in g {
                    if i >= m || hit[i] {
                        return Err(UnmixError::InvalidInput(format!(
                            "bundle index {i} out of range or repeated"
                        )));
                    }
                    hit[i] = true;
                }
            }
        }
        Ok(Self {
            atoms,
            names,
            groups,
        })
    }

    pub fn atoms(&self) -> &DMatrix<f64> {
        &self.atoms
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn groups(&self) -> Option<&[Vec<usize>]> {
        self.groups.as_deref()
    }

    pub fn bands(&self) -> usize {
        self.atoms.nrows()
    }

    pub fn len(&self) -> usize {
        self.atoms.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.ncols() == 0
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Sub-library of the given atoms, in the given order. Bundles are dropped.
    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            atoms: self.atoms.select_columns(idx.iter()),
            names: idx.iter().map(|&i| self.names[i].clone()).collect(),
            groups: None,
        }
    }

    pub fn with_groups(self, groups: Vec<Vec<usize>>) -> Result<Self> {
        Self::new(self.atoms, self.names, Some(groups))
    }

    pub fn as_endmembers(&self, idx: &[usize]) -> EndmemberMatrix {
        let sub = self.subset(idx);
        EndmemberMatrix::new(sub.atoms)
            .and_then(|e| e.with_names(sub.names))
            .expect("library atoms are finite")
    }

    pub(crate) fn check_bands(&self, y: &HsiCube) -> Result<()> {
        if y.bands() != self.bands() {
            return Err(UnmixError::ShapeMismatch(format!(
                "cube has {} bands, library has {}",
                y.bands(),
                self.bands()
            )));
        }
        Ok(())
    }
}
