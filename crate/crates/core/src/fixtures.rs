//! Built-in spectra: ten smooth reflectance curves used as benchmark
//! endmembers (188 bands) and a 60-atom library that contains them.

use crate::error::Result;
use crate::io::parse_spectra_csv;
use crate::sparse::SpectralLibrary;
use crate::types::EndmemberMatrix;

const ENDMEMBERS_CSV: &str = include_str!("../data/endmembers.csv");
const LIBRARY_CSV: &str = include_str!("../data/library.csv");

/// The fixed endmember pool; scenes use its first `r` columns.
pub fn builtin_endmembers() -> EndmemberMatrix {
    let (names, spectra) =
        parse_spectra_csv(ENDMEMBERS_CSV.as_bytes()).expect("bundled endmember CSV is valid");
    EndmemberMatrix::new(spectra)
        .and_then(|e| e.with_names(names))
        .expect("bundled endmember CSV is valid")
}

/// First `r` built-in endmembers.
pub fn endmembers(r: usize) -> Result<EndmemberMatrix> {
    let all = builtin_endmembers();
    if r == 0 || r > all.count() {
        return Err(crate::error::UnmixError::InvalidInput(format!(
            "built-in pool has {} endmembers, asked for {r}",
            all.count()
        )));
    }
    Ok(all.select_columns(&(0..r).collect::<Vec<_>>()))
}

/// Library of 60 atoms whose pairwise angles are all at least 4.44 degrees;
/// the first ten atoms are the built-in endmembers.
pub fn builtin_library() -> SpectralLibrary {
    let (names, atoms) =
        parse_spectra_csv(LIBRARY_CSV.as_bytes()).expect("bundled library CSV is valid");
    SpectralLibrary::new(atoms, names, None).expect("bundled library CSV is valid")
}
