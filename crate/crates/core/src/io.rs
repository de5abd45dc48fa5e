//! Reading and writing contour stacks and result files.
//!
//! Contour files are JSON:
//!
//! ```text
//! {"version": "curvespec/1", "n": 73, "grid": "standard-odd",
//!  "contours": [[[x, y], ...], ...], "labels": ["a", ...]}
//! ```
//!
//! `grid` may instead be an explicit list of `n` angles. A plain CSV form is
//! also accepted: one `x,y` pair per line, contours separated by blank lines,
//! `#` starting a comment. CSV contours are placed on the standard grid.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::align::AlignmentParams;
use crate::noise::NoiseSpectrum;
use crate::{ContourStack, Error, FourierCoeffs, Grid, Result, Vec2, SCHEMA_VERSION};

const STANDARD_GRID: &str = "standard-odd";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridSpec {
    Named(String),
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContourFile {
    pub version: String,
    pub n: usize,
    pub grid: GridSpec,
    pub contours: Vec<Vec<Vec2>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
}

impl ContourFile {
    pub fn from_stack(stack: &ContourStack) -> Self {
        let grid = if stack.grid().is_standard() {
            GridSpec::Named(STANDARD_GRID.into())
        } else {
            GridSpec::Explicit(stack.grid().theta().to_vec())
        };
        ContourFile {
            version: SCHEMA_VERSION.into(),
            n: stack.grid().n(),
            grid,
            contours: stack.contours().to_vec(),
            labels: stack.labels().map(|l| l.to_vec()),
        }
    }

    pub fn into_stack(self) -> Result<ContourStack> {
        if self.version != SCHEMA_VERSION {
            return Err(Error::Schema(format!(
                "unsupported version {:?}, expected {SCHEMA_VERSION:?}",
                self.version
            )));
        }
        let grid = match self.grid {
            GridSpec::Named(name) if name == STANDARD_GRID => Grid::standard(self.n)?,
            GridSpec::Named(name) => {
                return Err(Error::Schema(format!("unknown grid {name:?}")));
            }
            GridSpec::Explicit(theta) => {
                if theta.len() != self.n {
                    return Err(Error::Schema(format!(
                        "grid has {} angles but n = {}",
                        theta.len(),
                        self.n
                    )));
                }
                Grid::explicit(theta)?
            }
        };
        let stack = ContourStack::new(grid, self.contours)?;
        match self.labels {
            Some(labels) => stack.with_labels(labels),
            None => Ok(stack),
        }
    }
}

/// Parses the CSV contour form.
pub fn parse_csv(text: &str) -> Result<ContourStack> {
    let mut contours: Vec<Vec<Vec2>> = Vec::new();
    let mut current = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            // Comment-only lines do not end a contour.
            if raw.trim().is_empty() && !current.is_empty() {
                contours.push(std::mem::take(&mut current));
            }
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed = match fields.as_slice() {
            [x, y] => x.parse::<f64>().ok().zip(y.parse::<f64>().ok()),
            _ => None,
        };
        let Some((x, y)) = parsed else {
            return Err(Error::Schema(format!("line {}: expected `x,y`, got {raw:?}", lineno + 1)));
        };
        current.push(Vec2::new(x, y));
    }
    if !current.is_empty() {
        contours.push(current);
    }
    let n = contours.first().map(Vec::len).ok_or(Error::EmptyStack)?;
    ContourStack::new(Grid::standard(n)?, contours)
}

pub fn to_csv(stack: &ContourStack) -> String {
    let mut out = String::new();
    for (t, contour) in stack.contours().iter().enumerate() {
        if t > 0 {
            out.push('\n');
        }
        for p in contour {
            out.push_str(&format!("{},{}\n", p.x, p.y));
        }
    }
    out
}

/// Reads a file, naming it in the error.
pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

/// Reads a stack from JSON, or CSV when the extension is `.csv`.
pub fn read_stack(path: &Path) -> Result<ContourStack> {
    let text = read_text(path)?;
    if is_csv(path) {
        parse_csv(&text)
    } else {
        let file: ContourFile = serde_json::from_str(&text).map_err(|e| Error::Schema(e.to_string()))?;
        file.into_stack()
    }
}

pub fn write_stack(path: &Path, stack: &ContourStack) -> Result<()> {
    if is_csv(path) {
        fs::write(path, to_csv(stack))?;
        Ok(())
    } else {
        write_json(path, &ContourFile::from_stack(stack))
    }
}

/// Pretty JSON with a trailing newline.
pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, to_json_string(value)?)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))
}

/// Ground truth written next to simulated contours.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthFile {
    pub version: String,
    pub truth: FourierCoeffs,
    pub spectrum: NoiseSpectrum,
    pub seed: u64,
    pub n: usize,
    pub contours: usize,
    pub rng: String,
    /// Shifts and weights used to misregister the contours, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alignment: Option<AlignmentParams>,
}

/// `out.json` → `out.truth.json`.
pub fn truth_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.truth.json"))
}
