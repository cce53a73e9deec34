//! Observation windows, parameter boxes and the window CSV format.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One observation: an `L × m` block of simulator (or target system) output,
/// stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeriesWindow {
    pub t_index: usize,
    pub len: usize,
    pub vars: usize,
    pub values: Vec<f64>,
}

impl TimeSeriesWindow {
    pub fn new(t_index: usize, len: usize, vars: usize, values: Vec<f64>) -> Result<Self> {
        if len == 0 || vars == 0 || values.is_empty() {
            return Err(Error::EmptySeries);
        }
        if values.len() != len * vars {
            return Err(Error::DimensionMismatch {
                expected: len * vars,
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        Ok(Self {
            t_index,
            len,
            vars,
            values,
        })
    }

    /// Univariate window.
    pub fn univariate(t_index: usize, values: Vec<f64>) -> Result<Self> {
        let len = values.len();
        Self::new(t_index, len, 1, values)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.vars..(i + 1) * self.vars]
    }

    /// Values of variable `j` in time order.
    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.len).map(move |i| self.values[i * self.vars + j])
    }
}

/// The observed stream `ŝ_1 .. ŝ_T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationStream {
    windows: Vec<TimeSeriesWindow>,
}

impl ObservationStream {
    /// Windows must carry contiguous `t_index` values starting at 1.
    pub fn new(windows: Vec<TimeSeriesWindow>) -> Result<Self> {
        if windows.is_empty() {
            return Err(Error::EmptySeries);
        }
        for (i, w) in windows.iter().enumerate() {
            if w.t_index != i + 1 {
                return Err(Error::ConfigInvalid(format!(
                    "stream windows must be indexed 1..T contiguously; position {} has t_index {}",
                    i + 1,
                    w.t_index
                )));
            }
        }
        Ok(Self { windows })
    }

    pub fn horizon(&self) -> usize {
        self.windows.len()
    }

    pub fn windows(&self) -> &[TimeSeriesWindow] {
        &self.windows
    }

    /// Window observed at step `t` (1-based).
    pub fn at(&self, t: usize) -> &TimeSeriesWindow {
        &self.windows[t - 1]
    }

    /// Windows `start..=end` (1-based, inclusive).
    pub fn span(&self, start: usize, end: usize) -> &[TimeSeriesWindow] {
        &self.windows[start - 1..end]
    }
}

/// Axis-aligned box of admissible simulator parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamSpace {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl ParamSpace {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(Error::ConfigInvalid(
                "parameter bounds must be nonempty and of equal length".into(),
            ));
        }
        for (i, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::ConfigInvalid(format!(
                    "bound {i}: lower {lo} must be < upper {hi}"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn dims(&self) -> usize {
        self.lower.len()
    }

    pub fn range(&self, i: usize) -> f64 {
        self.upper[i] - self.lower[i]
    }

    pub fn diagonal(&self) -> f64 {
        (0..self.dims()).map(|i| self.range(i).powi(2)).sum::<f64>().sqrt()
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.len() == self.dims()
            && theta
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (lo, hi))| *lo <= *v && *v <= *hi)
    }

    pub fn check(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                got: theta.len(),
            });
        }
        for (dim, &value) in theta.iter().enumerate() {
            let (lower, upper) = (self.lower[dim], self.upper[dim]);
            if !(lower <= value && value <= upper) {
                return Err(Error::ParamOutOfBounds {
                    dim,
                    value,
                    lower,
                    upper,
                });
            }
        }
        Ok(())
    }

    /// Componentwise clamp; returns whether any component moved.
    pub fn clamp(&self, theta: &mut [f64]) -> bool {
        let mut moved = false;
        for (i, v) in theta.iter_mut().enumerate() {
            let c = v.clamp(self.lower[i], self.upper[i]);
            if c != *v {
                moved = true;
                *v = c;
            }
        }
        moved
    }

    pub fn sample_uniform<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> ParamVector {
        ParamVector(
            (0..self.dims())
                .map(|i| self.lower[i] + rng.random::<f64>() * self.range(i))
                .collect(),
        )
    }

    pub fn midpoint(&self) -> ParamVector {
        ParamVector(self.lower.iter().zip(&self.upper).map(|(l, u)| 0.5 * (l + u)).collect())
    }
}

/// A candidate parameter `θ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamVector(pub Vec<f64>);

impl ParamVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dims(&self) -> usize {
        self.0.len()
    }

    pub fn distance(&self, other: &ParamVector) -> f64 {
        euclidean(&self.0, &other.0)
    }
}

impl From<Vec<f64>> for ParamVector {
    fn from(v: Vec<f64>) -> Self {
        ParamVector(v)
    }
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

// ---------------------------------------------------------------------------
// CSV: t_index,row_index,v0..v{m-1}
// ---------------------------------------------------------------------------

pub fn write_windows_csv<W: Write>(out: W, windows: &[TimeSeriesWindow]) -> Result<()> {
    let vars = windows.first().map_or(1, |w| w.vars);
    let mut wtr = csv::Writer::from_writer(out);
    let mut header = vec!["t_index".to_string(), "row_index".to_string()];
    header.extend((0..vars).map(|j| format!("v{j}")));
    wtr.write_record(&header)?;
    for w in windows {
        for i in 0..w.len {
            let mut rec = vec![w.t_index.to_string(), i.to_string()];
            rec.extend(w.row(i).iter().map(|v| format!("{v:?}")));
            wtr.write_record(&rec)?;
        }
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_windows_csv<R: Read>(input: R) -> Result<Vec<TimeSeriesWindow>> {
    let mut rdr = csv::Reader::from_reader(input);
    let headers = rdr.headers()?.clone();
    if headers.len() < 3 || &headers[0] != "t_index" || &headers[1] != "row_index" {
        return Err(Error::ConfigInvalid(
            "window CSV must start with columns t_index,row_index,v0..".into(),
        ));
    }
    let vars = headers.len() - 2;
    let mut windows: Vec<TimeSeriesWindow> = Vec::new();
    let mut current: Option<(usize, Vec<f64>)> = None;
    let parse_err = |what: &str| Error::ConfigInvalid(format!("window CSV: bad {what}"));
    for rec in rdr.records() {
        let rec = rec?;
        let t: usize = rec[0].parse().map_err(|_| parse_err("t_index"))?;
        let row: usize = rec[1].parse().map_err(|_| parse_err("row_index"))?;
        let vals = (0..vars)
            .map(|j| rec[j + 2].parse::<f64>().map_err(|_| parse_err("value")))
            .collect::<Result<Vec<_>>>()?;
        match current.as_mut() {
            Some((ct, buf)) if *ct == t => {
                if row != buf.len() / vars {
                    return Err(parse_err("row_index order"));
                }
                buf.extend(vals);
            }
            _ => {
                if let Some((ct, buf)) = current.take() {
                    windows.push(TimeSeriesWindow::new(ct, buf.len() / vars, vars, buf)?);
                }
                if row != 0 {
                    return Err(parse_err("row_index order"));
                }
                current = Some((t, vals));
            }
        }
    }
    if let Some((ct, buf)) = current.take() {
        windows.push(TimeSeriesWindow::new(ct, buf.len() / vars, vars, buf)?);
    }
    Ok(windows)
}

pub fn save_windows(path: &Path, windows: &[TimeSeriesWindow]) -> Result<()> {
    let f = std::fs::File::create(path)?;
    write_windows_csv(std::io::BufWriter::new(f), windows)
}

pub fn load_windows(path: &Path) -> Result<Vec<TimeSeriesWindow>> {
    let f = std::fs::File::open(path)?;
    read_windows_csv(std::io::BufReader::new(f))
}
