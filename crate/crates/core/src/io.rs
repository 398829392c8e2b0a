//! File formats for fields and spectra.
//!
//! Binary fields: the 8-byte magic `GRFFLD01`, then little-endian `u32 d`,
//! `u32 m0`, `u64 n`, then `n·(m0+1)^d` `f64` values, each sample in
//! lexicographic grid order.
//!
//! CSV fields hold one sample with columns `k1..kd,value`. Spectrum CSVs have
//! columns `index_lex,k1..kd,lambda_ext` and a JSON sidecar.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::covariance::KernelInfo;
use crate::embedding::{multi_index, GridSpec, Spectrum};
use crate::error::{Error, Result};

pub const FIELD_MAGIC: &[u8; 8] = b"GRFFLD01";

/// Samples stored back to back.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSet {
    pub grid: GridSpec,
    pub values: Vec<f64>,
}

impl FieldSet {
    pub fn len(&self) -> usize {
        self.values.len() / self.grid.points()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn samples(&self) -> std::slice::ChunksExact<'_, f64> {
        self.values.chunks_exact(self.grid.points())
    }
}

/// Streams samples into the binary format. The sample count is fixed up
/// front and checked by [`FieldBinWriter::finish`].
pub struct FieldBinWriter<W: Write> {
    inner: W,
    points: usize,
    expected: u64,
    written: u64,
}

impl FieldBinWriter<BufWriter<File>> {
    pub fn create(path: &Path, grid: GridSpec, n: u64) -> Result<Self> {
        Self::new(BufWriter::new(File::create(path)?), grid, n)
    }
}

impl<W: Write> FieldBinWriter<W> {
    pub fn new(mut inner: W, grid: GridSpec, n: u64) -> Result<Self> {
        inner.write_all(FIELD_MAGIC)?;
        inner.write_all(&(grid.d() as u32).to_le_bytes())?;
        inner.write_all(&(grid.m0() as u32).to_le_bytes())?;
        inner.write_all(&n.to_le_bytes())?;
        Ok(FieldBinWriter {
            inner,
            points: grid.points(),
            expected: n,
            written: 0,
        })
    }

    pub fn write_sample(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.points {
            return Err(Error::Format(format!(
                "sample has {} values, grid has {}",
                values.len(),
                self.points
            )));
        }
        if self.written == self.expected {
            return Err(Error::Format(format!(
                "more than the declared {} samples",
                self.expected
            )));
        }
        for v in values {
            self.inner.write_all(&v.to_le_bytes())?;
        }
        self.written += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        if self.written != self.expected {
            return Err(Error::Format(format!(
                "declared {} samples but wrote {}",
                self.expected, self.written
            )));
        }
        self.inner.flush()?;
        Ok(self.inner)
    }
}

pub fn read_field_bin(path: &Path) -> Result<FieldSet> {
    read_field_bin_from(BufReader::new(File::open(path)?))
}

pub fn read_field_bin_from<R: Read>(mut r: R) -> Result<FieldSet> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Format("file too short for a field header".into()))?;
    if &magic != FIELD_MAGIC {
        return Err(Error::Format("bad magic, not a GRFFLD01 field file".into()));
    }
    let mut b4 = [0u8; 4];
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b4)?;
    let d = u32::from_le_bytes(b4) as usize;
    r.read_exact(&mut b4)?;
    let m0 = u32::from_le_bytes(b4) as usize;
    r.read_exact(&mut b8)?;
    let n = u64::from_le_bytes(b8) as usize;
    let grid = GridSpec::new(d, m0).map_err(|e| Error::Format(format!("bad header: {e}")))?;
    let count = n
        .checked_mul(grid.points())
        .ok_or_else(|| Error::Format("header sample count overflows".into()))?;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != count * 8 {
        return Err(Error::Format(format!(
            "expected {} bytes of values, found {}",
            count * 8,
            bytes.len()
        )));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Ok(FieldSet { grid, values })
}

/// One sample as CSV with columns `k1..kd,value`.
pub fn write_field_csv<W: Write>(w: W, grid: GridSpec, values: &[f64]) -> Result<()> {
    if values.len() != grid.points() {
        return Err(Error::Format(format!(
            "sample has {} values, grid has {}",
            values.len(),
            grid.points()
        )));
    }
    let mut out = csv::Writer::from_writer(w);
    let mut header: Vec<String> = (1..=grid.d()).map(|i| format!("k{i}")).collect();
    header.push("value".into());
    out.write_record(&header).map_err(csv_error)?;
    for (p, v) in values.iter().enumerate() {
        let mut row: Vec<String> = multi_index(p, grid.m0() + 1, grid.d())
            .into_iter()
            .map(|k| k.to_string())
            .collect();
        row.push(v.to_string());
        out.write_record(&row).map_err(csv_error)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_field_csv_file(path: &Path, grid: GridSpec, values: &[f64]) -> Result<()> {
    write_field_csv(BufWriter::new(File::create(path)?), grid, values)
}

/// Reads a `k1..kd,value` CSV; rows must be in lexicographic grid order.
pub fn read_field_csv(path: &Path) -> Result<(GridSpec, Vec<f64>)> {
    read_field_csv_from(File::open(path)?)
}

pub fn read_field_csv_from<R: Read>(r: R) -> Result<(GridSpec, Vec<f64>)> {
    let mut reader = csv::Reader::from_reader(r);
    let header = reader.headers().map_err(csv_error)?.clone();
    let d = header.len().saturating_sub(1);
    let expected: Vec<String> = (1..=d)
        .map(|i| format!("k{i}"))
        .chain(std::iter::once("value".into()))
        .collect();
    if d == 0 || header.iter().ne(expected.iter().map(String::as_str)) {
        return Err(Error::Format(format!(
            "expected header {}",
            expected.join(",")
        )));
    }
    let mut indices = Vec::new();
    let mut values = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(csv_error)?;
        let mut k = Vec::with_capacity(d);
        for field in rec.iter().take(d) {
            k.push(
                field
                    .trim()
                    .parse::<usize>()
                    .map_err(|e| Error::Format(format!("bad index {field:?}: {e}")))?,
            );
        }
        let v = rec[d]
            .trim()
            .parse::<f64>()
            .map_err(|e| Error::Format(format!("bad value {:?}: {e}", &rec[d])))?;
        indices.push(k);
        values.push(v);
    }
    let m0 = indices.iter().flatten().copied().max().unwrap_or(0);
    let grid = GridSpec::new(d, m0).map_err(|e| Error::Format(format!("bad grid: {e}")))?;
    if values.len() != grid.points() {
        return Err(Error::Format(format!(
            "{} rows do not fill a grid with m0 = {m0}",
            values.len()
        )));
    }
    for (p, k) in indices.iter().enumerate() {
        if *k != multi_index(p, m0 + 1, d) {
            return Err(Error::Format(format!(
                "row {} is out of lexicographic order",
                p + 1
            )));
        }
    }
    Ok((grid, values))
}

/// Reads samples from a binary field file, a single CSV file, or a
/// directory of CSV files taken in file-name order.
pub fn read_samples(path: &Path) -> Result<FieldSet> {
    if path.is_dir() {
        let mut files: Vec<PathBuf> = std::fs::read_dir(path)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "csv"))
            .collect();
        files.sort();
        if files.is_empty() {
            return Err(Error::Format(format!("no CSV files in {}", path.display())));
        }
        let mut grid = None;
        let mut values = Vec::new();
        for f in &files {
            let (g, v) = read_field_csv(f)?;
            if grid.is_some_and(|gr| gr != g) {
                return Err(Error::Format(format!(
                    "{} has a different grid",
                    f.display()
                )));
            }
            grid = Some(g);
            values.extend(v);
        }
        return Ok(FieldSet {
            grid: grid.expect("at least one file"),
            values,
        });
    }
    let mut magic = [0u8; 8];
    let is_bin = File::open(path)?.read_exact(&mut magic).is_ok() && &magic == FIELD_MAGIC;
    if is_bin {
        read_field_bin(path)
    } else {
        let (grid, values) = read_field_csv(path)?;
        Ok(FieldSet { grid, values })
    }
}

/// Metadata written next to an exported spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSidecar {
    pub d: usize,
    pub m0: usize,
    pub m: usize,
    pub ell: f64,
    pub s: usize,
    pub tol: f64,
    pub min_eig: f64,
    pub kernel: Option<KernelInfo>,
}

impl SpectrumSidecar {
    pub fn of(spectrum: &Spectrum) -> Self {
        let e = spectrum.embedding();
        SpectrumSidecar {
            d: e.grid().d(),
            m0: e.grid().m0(),
            m: e.m(),
            ell: e.ell(),
            s: e.s(),
            tol: spectrum.tolerance(),
            min_eig: spectrum.min_value(),
            kernel: spectrum.kernel().cloned(),
        }
    }
}

/// Eigenvalues as CSV with columns `index_lex,k1..kd,lambda_ext`.
pub fn write_spectrum_csv<W: Write>(w: W, spectrum: &Spectrum) -> Result<()> {
    let e = spectrum.embedding();
    let d = e.grid().d();
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["index_lex".to_string()];
    header.extend((1..=d).map(|i| format!("k{i}")));
    header.push("lambda_ext".into());
    out.write_record(&header).map_err(csv_error)?;
    for (lin, v) in spectrum.values().iter().enumerate() {
        let mut row = vec![lin.to_string()];
        row.extend(
            multi_index(lin, e.n(), d)
                .into_iter()
                .map(|k| k.to_string()),
        );
        row.push(v.to_string());
        out.write_record(&row).map_err(csv_error)?;
    }
    out.flush()?;
    Ok(())
}

/// Writes `<stem>.csv` and `<stem>.json` into `dir`.
pub fn export_spectrum(dir: &Path, stem: &str, spectrum: &Spectrum) -> Result<(PathBuf, PathBuf)> {
    let csv_path = dir.join(format!("{stem}.csv"));
    let json_path = dir.join(format!("{stem}.json"));
    write_spectrum_csv(BufWriter::new(File::create(&csv_path)?), spectrum)?;
    write_json(&json_path, &SpectrumSidecar::of(spectrum))?;
    Ok((csv_path, json_path))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            other => Error::Format(format!("{other:?}")),
        }
    } else {
        Error::Format(e.to_string())
    }
}
