//! On-disk formats.
//!
//! A dataset directory holds `header.txt` (`key=value` lines: `width`,
//! `height`, `bands`, `dtype=f32le`, `layout=bsq|bip`) and `data.bin`
//! (little-endian f32). Ground truth, when present, is `E_true.csv` (spectra
//! CSV, one column per endmember) and `A_true.bin` (`r x n` f32le,
//! row-major). Spectra CSVs have a header row of names followed by one row
//! per band.

use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use crate::error::{Result, UnmixError};
use crate::sparse::SpectralLibrary;
use crate::types::{AbundanceMap, EndmemberMatrix, HsiCube};

pub const HEADER_FILE: &str = "header.txt";
pub const DATA_FILE: &str = "data.bin";
pub const E_TRUE_FILE: &str = "E_true.csv";
pub const A_TRUE_FILE: &str = "A_true.bin";

/// Band-sequential (all pixels of band 0, then band 1, ...) or
/// band-interleaved-by-pixel (all bands of pixel 0, then pixel 1, ...).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    Bsq,
    Bip,
}

impl Layout {
    pub fn as_str(self) -> &'static str {
        match self {
            Layout::Bsq => "bsq",
            Layout::Bip => "bip",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CubeHeader {
    pub width: usize,
    pub height: usize,
    pub bands: usize,
    pub layout: Layout,
}

impl CubeHeader {
    pub fn payload_bytes(&self) -> Option<u64> {
        (self.width as u64)
            .checked_mul(self.height as u64)?
            .checked_mul(self.bands as u64)?
            .checked_mul(4)
    }

    fn render(&self) -> String {
        format!(
            "width={}\nheight={}\nbands={}\ndtype=f32le\nlayout={}\n",
            self.width,
            self.height,
            self.bands,
            self.layout.as_str()
        )
    }

    pub fn parse(text: &str) -> Result<Self> {
        let (mut width, mut height, mut bands, mut dtype, mut layout) = (None, None, None, None, None);
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| UnmixError::HeaderMismatch(format!("malformed line {line:?}")))?;
            let (k, v) = (k.trim(), v.trim());
            let count = |v: &str| {
                v.parse::<usize>()
                    .map_err(|_| UnmixError::HeaderMismatch(format!("{k}={v} is not a count")))
            };
            match k {
                "width" => width = Some(count(v)?),
                "height" => height = Some(count(v)?),
                "bands" => bands = Some(count(v)?),
                "dtype" => dtype = Some(v.to_string()),
                "layout" => {
                    layout = Some(match v {
                        "bsq" => Layout::Bsq,
                        "bip" => Layout::Bip,
                        _ => return Err(UnmixError::HeaderMismatch(format!("unknown layout {v:?}"))),
                    })
                }
                _ => return Err(UnmixError::HeaderMismatch(format!("unknown key {k:?}"))),
            }
        }
        let missing = |k: &str| UnmixError::HeaderMismatch(format!("missing key {k}"));
        let dtype = dtype.ok_or_else(|| missing("dtype"))?;
        if dtype != "f32le" {
            return Err(UnmixError::HeaderMismatch(format!("unsupported dtype {dtype:?}")));
        }
        let header = Self {
            width: width.ok_or_else(|| missing("width"))?,
            height: height.ok_or_else(|| missing("height"))?,
            bands: bands.ok_or_else(|| missing("bands"))?,
            layout: layout.ok_or_else(|| missing("layout"))?,
        };
        if header.width == 0 || header.height == 0 || header.bands < 2 {
            return Err(UnmixError::HeaderMismatch(format!(
                "degenerate shape {}x{}x{}",
                header.height, header.width, header.bands
            )));
        }
        if header.payload_bytes().is_none() {
            return Err(UnmixError::HeaderMismatch("shape overflows".into()));
        }
        Ok(header)
    }
}

fn f32_bytes(values: impl Iterator<Item = f64>) -> Vec<u8> {
    let mut out = Vec::new();
    for v in values {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

fn read_f32_payload(path: &Path, expected: u64) -> Result<Vec<f32>> {
    let actual = fs::metadata(path)?.len();
    if actual < expected {
        return Err(UnmixError::TruncatedPayload { expected, actual });
    }
    if actual > expected {
        return Err(UnmixError::HeaderMismatch(format!(
            "{} holds {actual} bytes, header implies {expected}",
            path.display()
        )));
    }
    let mut bytes = Vec::with_capacity(expected as usize);
    File::open(path)?.read_to_end(&mut bytes)?;
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

/// Writes `header.txt` and `data.bin` into `dir` (created if needed).
/// Values are stored as f32.
pub fn write_cube(dir: &Path, cube: &HsiCube, layout: Layout) -> Result<()> {
    fs::create_dir_all(dir)?;
    let header = CubeHeader {
        width: cube.width(),
        height: cube.height(),
        bands: cube.bands(),
        layout,
    };
    fs::write(dir.join(HEADER_FILE), header.render())?;
    let y = cube.values();
    let bytes = match layout {
        // column-major storage is already pixel-interleaved
        Layout::Bip => f32_bytes(y.iter().copied()),
        Layout::Bsq => f32_bytes((0..y.nrows()).flat_map(|b| y.row(b).iter().copied().collect::<Vec<_>>())),
    };
    fs::write(dir.join(DATA_FILE), bytes)?;
    Ok(())
}

pub fn read_cube_header(dir: &Path) -> Result<CubeHeader> {
    CubeHeader::parse(&fs::read_to_string(dir.join(HEADER_FILE))?)
}

/// Reads a cube written by [`write_cube`]. The header is validated against
/// the payload length before the payload is read.
pub fn read_cube(dir: &Path) -> Result<HsiCube> {
    let header = read_cube_header(dir)?;
    let expected = header.payload_bytes().expect("checked by parse");
    let raw = read_f32_payload(&dir.join(DATA_FILE), expected)?;
    let (p, n) = (header.bands, header.width * header.height);
    let values = match header.layout {
        Layout::Bip => DMatrix::from_iterator(p, n, raw.iter().map(|&v| v as f64)),
        Layout::Bsq => DMatrix::from_fn(p, n, |b, j| raw[b * n + j] as f64),
    };
    HsiCube::new(header.height, header.width, values)
}

/// Parses a spectra CSV: a header row of names, then one row per band.
pub fn parse_spectra_csv<R: Read>(reader: R) -> Result<(Vec<String>, DMatrix<f64>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut records = rdr.records();
    let names: Vec<String> = match records.next() {
        Some(rec) => rec?.iter().map(str::to_string).collect(),
        None => return Err(UnmixError::InvalidInput("empty CSV".into())),
    };
    let m = names.len();
    let mut values = Vec::new();
    let mut rows = 0;
    for (i, rec) in records.enumerate() {
        let rec = rec?;
        let line = i + 2;
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        if rec.len() != m {
            return Err(UnmixError::RaggedCsv {
                line,
                found: rec.len(),
                expected: m,
            });
        }
        for (column, cell) in rec.iter().enumerate() {
            let v: f64 = cell.parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| {
                UnmixError::NonNumericCell {
                    line,
                    column: column + 1,
                    cell: cell.to_string(),
                }
            })?;
            values.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(UnmixError::InvalidInput("CSV has no value rows".into()));
    }
    Ok((names, DMatrix::from_row_slice(rows, m, &values)))
}

/// Writes spectra (one column per name) with round-trip float formatting.
pub fn write_spectra_csv(path: &Path, names: &[String], spectra: &DMatrix<f64>) -> Result<()> {
    if names.len() != spectra.ncols() {
        return Err(UnmixError::ShapeMismatch(format!(
            "{} names for {} spectra",
            names.len(),
            spectra.ncols()
        )));
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(names)?;
    for row in spectra.row_iter() {
        w.write_record(row.iter().map(|v| format!("{v:?}")))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_library(path: &Path) -> Result<SpectralLibrary> {
    let (names, atoms) = parse_spectra_csv(File::open(path)?)?;
    SpectralLibrary::new(atoms, names, None)
}

pub fn write_library(path: &Path, lib: &SpectralLibrary) -> Result<()> {
    write_spectra_csv(path, lib.names(), lib.atoms())
}

fn default_names(count: usize) -> Vec<String> {
    (1..=count).map(|i| format!("e{i}")).collect()
}

pub fn write_endmembers(path: &Path, e: &EndmemberMatrix) -> Result<()> {
    let names = e
        .names()
        .map(<[String]>::to_vec)
        .unwrap_or_else(|| default_names(e.count()));
    write_spectra_csv(path, &names, e.spectra())
}

pub fn read_endmembers(path: &Path) -> Result<EndmemberMatrix> {
    let (names, spectra) = parse_spectra_csv(File::open(path)?)?;
    EndmemberMatrix::new(spectra)?.with_names(names)
}

/// `r x n` abundances as row-major f32le.
pub fn write_abundance_bin(path: &Path, a: &DMatrix<f64>) -> Result<()> {
    let bytes = f32_bytes((0..a.nrows()).flat_map(|i| a.row(i).iter().copied().collect::<Vec<_>>()));
    fs::write(path, bytes)?;
    Ok(())
}

pub fn read_abundance_bin(path: &Path, r: usize, n: usize) -> Result<DMatrix<f64>> {
    let expected = (r as u64) * (n as u64) * 4;
    let raw = read_f32_payload(path, expected)?;
    Ok(DMatrix::from_fn(r, n, |i, j| raw[i * n + j] as f64))
}

/// 16-bit quantization used by the PGM export: clamp to `[0, 1]`, then
/// `floor(a * 65535 + 0.5)` (round half up).
pub fn quantize_u16(a: f64) -> u16 {
    let a = if a.is_nan() { 0.0 } else { a.clamp(0.0, 1.0) };
    (a * 65535.0 + 0.5).floor() as u16
}

/// One binary P5 PGM (maxval 65535, big-endian samples) per abundance row,
/// named `abundance_XX.pgm`. Returns the written paths.
pub fn write_abundance_pgm(a: &AbundanceMap, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let (h, w) = (a.height(), a.width());
    let mut paths = Vec::with_capacity(a.count());
    for (i, row) in a.coeffs().row_iter().enumerate() {
        let path = dir.join(format!("abundance_{i:02}.pgm"));
        let mut out = BufWriter::new(File::create(&path)?);
        write!(out, "P5\n{w} {h}\n65535\n")?;
        for v in row.iter() {
            out.write_all(&quantize_u16(*v).to_be_bytes())?;
        }
        out.flush()?;
        paths.push(path);
    }
    Ok(paths)
}

/// Parses a P5 PGM with maxval 65535. Returns `(width, height, samples)`.
pub fn read_pgm16(path: &Path) -> Result<(usize, usize, Vec<u16>)> {
    let bytes = fs::read(path)?;
    let bad = || UnmixError::HeaderMismatch(format!("{} is not a 16-bit P5 PGM", path.display()));
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad());
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad())?.to_string());
    }
    pos += 1;
    if fields[0] != "P5" || fields[3] != "65535" {
        return Err(bad());
    }
    let w: usize = fields[1].parse().map_err(|_| bad())?;
    let h: usize = fields[2].parse().map_err(|_| bad())?;
    let expected = (w * h * 2) as u64;
    let actual = bytes.len().saturating_sub(pos) as u64;
    if actual < expected {
        return Err(UnmixError::TruncatedPayload { expected, actual });
    }
    let data = bytes[pos..pos + w * h * 2]
        .chunks_exact(2)
        .map(|c| u16::from_be_bytes([c[0], c[1]]))
        .collect();
    Ok((w, h, data))
}

/// Cube plus optional ground truth, as stored in a dataset directory.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub cube: HsiCube,
    pub e_true: Option<EndmemberMatrix>,
    pub a_true: Option<AbundanceMap>,
}

pub fn write_dataset(
    dir: &Path,
    cube: &HsiCube,
    layout: Layout,
    truth: Option<(&EndmemberMatrix, &AbundanceMap)>,
) -> Result<()> {
    write_cube(dir, cube, layout)?;
    if let Some((e, a)) = truth {
        write_endmembers(&dir.join(E_TRUE_FILE), e)?;
        write_abundance_bin(&dir.join(A_TRUE_FILE), a.coeffs())?;
    }
    Ok(())
}

/// Reads a dataset directory. Ground-truth abundances are checked for
/// ASC/ANC at f32 precision and stored without constraint flags.
pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let cube = read_cube(dir)?;
    let e_path = dir.join(E_TRUE_FILE);
    let a_path = dir.join(A_TRUE_FILE);
    let (e_true, a_true) = if e_path.exists() && a_path.exists() {
        let e = read_endmembers(&e_path)?;
        if e.bands() != cube.bands() {
            return Err(UnmixError::HeaderMismatch(format!(
                "E_true has {} bands, cube has {}",
                e.bands(),
                cube.bands()
            )));
        }
        let a = read_abundance_bin(&a_path, e.count(), cube.pixels())?;
        let a = AbundanceMap::unconstrained(a, cube.height(), cube.width())?;
        (Some(e), Some(a))
    } else {
        (None, None)
    };
    Ok(Dataset { cube, e_true, a_true })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn f32_cube(seed: u64, h: usize, w: usize, p: usize) -> HsiCube {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = DMatrix::from_fn(p, h * w, |_, _| rng.random::<f32>() as f64);
        HsiCube::new(h, w, v).unwrap()
    }

    #[test]
    fn cube_round_trip_both_layouts() {
        let cube = f32_cube(1, 3, 4, 5);
        for layout in [Layout::Bsq, Layout::Bip] {
            let dir = tempfile::tempdir().unwrap();
            write_cube(dir.path(), &cube, layout).unwrap();
            let back = read_cube(dir.path()).unwrap();
            assert_eq!(back, cube);
            // write again: bytes identical
            let dir2 = tempfile::tempdir().unwrap();
            write_cube(dir2.path(), &back, layout).unwrap();
            assert_eq!(
                fs::read(dir.path().join(DATA_FILE)).unwrap(),
                fs::read(dir2.path().join(DATA_FILE)).unwrap()
            );
        }
    }

    #[test]
    fn bsq_payload_order() {
        let v = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let cube = HsiCube::new(1, 2, v).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_cube(dir.path(), &cube, Layout::Bsq).unwrap();
        let raw = fs::read(dir.path().join(DATA_FILE)).unwrap();
        let vals: Vec<f32> = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        assert_eq!(vals, vec![1.0, 2.0, 3.0, 4.0]);
        write_cube(dir.path(), &cube, Layout::Bip).unwrap();
        let raw = fs::read(dir.path().join(DATA_FILE)).unwrap();
        let vals: Vec<f32> = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        assert_eq!(vals, vec![1.0, 3.0, 2.0, 4.0]);
    }

    #[test]
    fn truncated_and_mismatched_payloads() {
        let cube = f32_cube(2, 2, 2, 3);
        let dir = tempfile::tempdir().unwrap();
        write_cube(dir.path(), &cube, Layout::Bsq).unwrap();
        let path = dir.path().join(DATA_FILE);
        let mut raw = fs::read(&path).unwrap();
        raw.pop();
        fs::write(&path, &raw).unwrap();
        assert!(matches!(
            read_cube(dir.path()),
            Err(UnmixError::TruncatedPayload { expected: 48, actual: 47 })
        ));
        raw.extend_from_slice(&[0, 0]);
        fs::write(&path, &raw).unwrap();
        assert!(matches!(read_cube(dir.path()), Err(UnmixError::HeaderMismatch(_))));
    }

    #[test]
    fn header_validation() {
        assert!(CubeHeader::parse("width=2\nheight=2\nbands=3\ndtype=f64\nlayout=bsq").is_err());
        assert!(CubeHeader::parse("width=2\nheight=2\nbands=3\ndtype=f32le\nlayout=bil").is_err());
        assert!(CubeHeader::parse("width=2\nheight=2\ndtype=f32le\nlayout=bsq").is_err());
        // absurd sizes are rejected before any payload read
        let h = CubeHeader::parse("width=100000\nheight=100000\nbands=100000\ndtype=f32le\nlayout=bip").unwrap();
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(HEADER_FILE), h.render()).unwrap();
        fs::write(dir.path().join(DATA_FILE), [0u8; 8]).unwrap();
        assert!(matches!(read_cube(dir.path()), Err(UnmixError::TruncatedPayload { .. })));
    }

    #[test]
    fn csv_errors_and_round_trip() {
        let ragged = "a,b\n1,2\n3\n";
        assert!(matches!(
            parse_spectra_csv(ragged.as_bytes()),
            Err(UnmixError::RaggedCsv { line: 3, found: 1, expected: 2 })
        ));
        let bad = "a,b\n1,x\n";
        assert!(matches!(
            parse_spectra_csv(bad.as_bytes()),
            Err(UnmixError::NonNumericCell { line: 2, column: 2, .. })
        ));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let atoms = DMatrix::from_fn(7, 3, |_, _| rng.random::<f64>());
        let lib = SpectralLibrary::new(atoms, vec!["x".into(), "y".into(), "z".into()], None).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lib.csv");
        write_library(&path, &lib).unwrap();
        assert_eq!(read_library(&path).unwrap(), lib);
    }

    #[test]
    fn pgm_quantization() {
        assert_eq!(quantize_u16(1.0), 65535);
        assert_eq!(quantize_u16(1.7), 65535);
        assert_eq!(quantize_u16(-0.2), 0);
        assert_eq!(quantize_u16(0.5), 32768);
        let a = DMatrix::from_row_slice(2, 6, &[1.0; 12]);
        let mut a2 = a.clone();
        a2.row_mut(1).fill(0.5);
        let map = AbundanceMap::unconstrained(a2, 2, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let files = write_abundance_pgm(&map, dir.path()).unwrap();
        assert_eq!(files.len(), 2);
        let (w, h, px) = read_pgm16(&files[0]).unwrap();
        assert_eq!((w, h), (3, 2));
        assert!(px.iter().all(|&v| v == 65535));
        let (_, _, px) = read_pgm16(&files[1]).unwrap();
        assert!(px.iter().all(|&v| v == 32768));
        let raw = fs::read(&files[0]).unwrap();
        assert!(raw.starts_with(b"P5\n3 2\n65535\n"));
    }

    #[test]
    fn abundance_bin_round_trip() {
        let a = DMatrix::from_row_slice(2, 3, &[0.25, 0.5, 1.0, 0.75, 0.5, 0.0]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("A.bin");
        write_abundance_bin(&path, &a).unwrap();
        let raw = fs::read(&path).unwrap();
        assert_eq!(f32::from_le_bytes(raw[4..8].try_into().unwrap()), 0.5);
        assert_eq!(f32::from_le_bytes(raw[12..16].try_into().unwrap()), 0.75);
        assert_eq!(read_abundance_bin(&path, 2, 3).unwrap(), a);
        assert!(matches!(
            read_abundance_bin(&path, 2, 4),
            Err(UnmixError::TruncatedPayload { .. })
        ));
    }
}
