use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use mig::{HalfSpace, MigParams, SampleBatch};

/// How a failure maps onto the process exit code.
#[derive(Debug)]
pub enum Failure {
    /// Bad flags or bad input values (exit 2).
    Usage(String),
    /// The computation itself failed (exit 1).
    Compute(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Compute(_) => 1,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Compute(m) => m,
        }
    }
}

impl From<mig::Error> for Failure {
    fn from(e: mig::Error) -> Self {
        match e {
            mig::Error::InvalidParameter(_)
            | mig::Error::DimensionMismatch { .. }
            | mig::Error::NotPositiveDefinite(_)
            | mig::Error::Domain(_) => Failure::Usage(e.to_string()),
            _ => Failure::Compute(e.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Usage(format!("CSV: {e}"))
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Usage(format!("JSON: {e}"))
    }
}

pub type CliResult<T> = Result<T, Failure>;

/// `{"beta": [..], "xi": [..], "omega": [row-major], "d": int}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamsFile {
    pub beta: Vec<f64>,
    pub xi: Vec<f64>,
    pub omega: Vec<f64>,
    #[serde(default)]
    pub d: Option<usize>,
}

impl ParamsFile {
    pub fn from_params(p: &MigParams) -> Self {
        Self {
            beta: p.beta().to_vec(),
            xi: p.xi().iter().copied().collect(),
            omega: p.omega_row_major(),
            d: Some(p.dim()),
        }
    }

    pub fn build(&self) -> CliResult<MigParams> {
        if let Some(d) = self.d {
            if d != self.beta.len() {
                return Err(Failure::Usage(format!(
                    "\"d\" is {d} but beta has {} entries",
                    self.beta.len()
                )));
            }
        }
        Ok(MigParams::from_slices(&self.beta, &self.xi, &self.omega)?)
    }
}

pub fn read_params(path: &Path) -> CliResult<MigParams> {
    let mut s = String::new();
    File::open(path)
        .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?
        .read_to_string(&mut s)?;
    let p: ParamsFile = serde_json::from_str(&s)?;
    p.build()
}

/// Reads numeric rows; a first line that does not parse is taken as a header.
pub fn read_rows(path: &Path) -> CliResult<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let parsed: Result<Vec<f64>, _> = rec.iter().map(|f| f.parse::<f64>()).collect();
        match parsed {
            Ok(v) => rows.push(v),
            Err(_) if i == 0 => continue,
            Err(e) => {
                return Err(Failure::Usage(format!("{}: line {}: {e}", path.display(), i + 1)));
            }
        }
    }
    if let Some(first) = rows.first() {
        let d = first.len();
        if let Some(bad) = rows.iter().position(|r| r.len() != d) {
            return Err(Failure::Usage(format!("{}: row {} has a different width", path.display(), bad + 1)));
        }
    }
    Ok(rows)
}

pub fn read_samples(path: &Path, beta: &[f64]) -> CliResult<SampleBatch> {
    let rows = read_rows(path)?;
    if rows.is_empty() {
        return Err(Failure::Usage(format!("{}: no data rows", path.display())));
    }
    Ok(SampleBatch::from_rows(&rows, HalfSpace::new(beta.to_vec())?)?)
}

pub fn output(path: Option<&PathBuf>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

pub fn write_json<T: Serialize>(out: &mut dyn Write, value: &T) -> CliResult<()> {
    serde_json::to_writer_pretty(&mut *out, value)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

pub fn csv_writer(out: Box<dyn Write>) -> csv::Writer<Box<dyn Write>> {
    csv::WriterBuilder::new()
        .has_headers(false)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out)
}
