//! Unit-vector CSV files.
//!
//! A data row holds `d` direction components, optionally preceded by three
//! integer lattice indices (detected when a row has `d + 3` fields). A first
//! row that does not parse as numbers is treated as a header.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use gvmf_core::{DirectionSample, Provenance};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Rows whose norm is further than this from 1 are rejected in strict mode.
pub const UNIT_NORM_TOL: f64 = 1e-6;
/// Rows closer than this to unit norm are stored exactly as read.
const EXACT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NormPolicy {
    /// Reject rows off the unit sphere by more than [`UNIT_NORM_TOL`].
    #[default]
    Strict,
    /// Rescale every nonzero row to unit length.
    Renormalize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DatasetManifest {
    pub path: PathBuf,
    pub d: usize,
    pub n_rows: usize,
    /// Whether any row was rescaled while loading.
    pub normalized: bool,
    /// First eight bytes of the SHA-256 digest of the file, big-endian.
    pub checksum: u64,
}

/// Integer position of every row on a 3-D index lattice.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Lattice {
    pub indices: Vec<[i64; 3]>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub sample: DirectionSample,
    pub manifest: DatasetManifest,
    pub lattice: Option<Lattice>,
}

pub fn checksum(bytes: &[u8]) -> u64 {
    let digest = Sha256::digest(bytes);
    u64::from_be_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

pub fn load_sample(path: impl AsRef<Path>, d: usize, policy: NormPolicy) -> Result<Dataset> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_sample(&bytes, path, d, policy)
}

pub fn read_sample(mut reader: impl Read, label: impl AsRef<Path>, d: usize, policy: NormPolicy) -> Result<Dataset> {
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    parse_sample(&bytes, label.as_ref(), d, policy)
}

fn parse_sample(bytes: &[u8], path: &Path, d: usize, policy: NormPolicy) -> Result<Dataset> {
    if d < 2 {
        return Err(Error::Usage("dimension d must be at least 2".into()));
    }
    let parse_err = |line: usize, column: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        column,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(bytes);
    let mut data = Vec::new();
    let mut indices = Vec::new();
    let mut with_lattice = None;
    let mut normalized = false;
    let mut first = true;
    let mut row = vec![0.0; d];
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let is_first = std::mem::take(&mut first);
        if is_first && record.iter().any(|f| f.parse::<f64>().is_err()) {
            continue;
        }
        let lattice = match record.len() {
            n if n == d => false,
            n if n == d + 3 => true,
            n => {
                return Err(parse_err(line, n, format!("expected {d} or {} fields, found {n}", d + 3)));
            }
        };
        if *with_lattice.get_or_insert(lattice) != lattice {
            return Err(parse_err(line, record.len(), "lattice columns present on some rows only".into()));
        }
        let offset = if lattice { 3 } else { 0 };
        if lattice {
            let mut idx = [0i64; 3];
            for (c, slot) in idx.iter_mut().enumerate() {
                *slot = record[c]
                    .parse()
                    .map_err(|_| parse_err(line, c + 1, format!("invalid lattice index {:?}", &record[c])))?;
            }
            indices.push(idx);
        }
        for (c, v) in row.iter_mut().enumerate() {
            let field = &record[offset + c];
            *v = field
                .parse()
                .ok()
                .filter(|x: &f64| x.is_finite())
                .ok_or_else(|| parse_err(line, offset + c + 1, format!("invalid number {field:?}")))?;
        }
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(parse_err(line, offset + 1, "zero vector".into()));
        }
        let off_sphere = (norm - 1.0).abs();
        if policy == NormPolicy::Strict && off_sphere > UNIT_NORM_TOL {
            return Err(parse_err(line, offset + 1, format!("row has norm {norm}, not within {UNIT_NORM_TOL} of 1")));
        }
        if off_sphere > EXACT_TOL {
            row.iter_mut().for_each(|v| *v /= norm);
            normalized = true;
        }
        data.extend_from_slice(&row);
    }
    if data.is_empty() {
        return Err(Error::EmptyDataset(path.to_path_buf()));
    }
    let checksum = checksum(bytes);
    let provenance = Provenance::File {
        path: path.display().to_string(),
        checksum,
    };
    let sample = DirectionSample::new(d, data, provenance)?;
    let manifest = DatasetManifest {
        path: path.to_path_buf(),
        d,
        n_rows: sample.len(),
        normalized,
        checksum,
    };
    Ok(Dataset {
        sample,
        manifest,
        lattice: with_lattice.filter(|l| *l).map(|_| Lattice { indices }),
    })
}

/// Writes a header and one row per direction with 17 significant digits, so
/// reading the file back reproduces every coordinate exactly.
pub fn write_sample(mut w: impl Write, sample: &DirectionSample, lattice: Option<&Lattice>) -> Result<()> {
    let d = sample.dim();
    let mut header: Vec<String> = Vec::new();
    if lattice.is_some() {
        header.extend(["i", "j", "k"].map(String::from));
    }
    header.extend((1..=d).map(|c| format!("x{c}")));
    writeln!(w, "{}", header.join(","))?;
    if let Some(l) = lattice {
        if l.indices.len() != sample.len() {
            return Err(Error::Usage("lattice and sample lengths differ".into()));
        }
    }
    let mut line = String::new();
    for (i, x) in sample.rows().enumerate() {
        line.clear();
        if let Some(l) = lattice {
            let [a, b, c] = l.indices[i];
            line.push_str(&format!("{a},{b},{c},"));
        }
        for (c, v) in x.iter().enumerate() {
            if c > 0 {
                line.push(',');
            }
            line.push_str(&format!("{v:.16e}"));
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub fn save_sample(path: impl AsRef<Path>, sample: &DirectionSample, lattice: Option<&Lattice>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    write_sample(&mut w, sample, lattice)?;
    w.flush().map_err(|e| Error::io(path, e))
}
