//! Before/after splitting of a single observed dataset around an event.
//!
//! Rows are time-ordered. `event_index` is the first row of the after
//! period, and an exclusion window of `g` rows on each side of it is dropped:
//! before is `[0, event_index − g)`, after is `[event_index + g, T)`.

use std::io::Read;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::estimate::{diff_estimator, ols_fit, DiffResult, FitResult, QrDesign};

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesDataset {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub labels: Option<Vec<String>>,
}

impl TimeSeriesDataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>, labels: Option<Vec<String>>) -> Result<Self> {
        let (t, p) = x.shape();
        if y.len() != t {
            return Err(Error::ShapeMismatch(format!(
                "design has {t} rows but response has {}",
                y.len()
            )));
        }
        if p == 0 {
            return Err(Error::ShapeMismatch("dataset has no regressors".into()));
        }
        if let Some(l) = &labels {
            if l.len() != p {
                return Err(Error::ShapeMismatch(format!("{} labels for {p} regressors", l.len())));
            }
        }
        if t < 2 * (p + 1) {
            return Err(Error::SampleTooSmall {
                n: t,
                required: 2 * (p + 1),
            });
        }
        Ok(Self { x, y, labels })
    }

    pub fn rows(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Reads a headed CSV. The column named `response` becomes `y`; every
    /// other column is a regressor, in file order. No intercept is added.
    pub fn from_csv_reader<R: Read>(reader: R, response: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| Error::Data(format!("reading header: {e}")))?
            .clone();
        let names: Vec<String> = headers.iter().map(|h| h.trim().to_string()).collect();
        let y_col = names
            .iter()
            .position(|h| h == response)
            .ok_or_else(|| Error::Data(format!("response column `{response}` not found in header")))?;
        let labels: Vec<String> = names
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != y_col)
            .map(|(_, h)| h.clone())
            .collect();

        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for record in rdr.records() {
            let record = record.map_err(|e| Error::Data(e.to_string()))?;
            let line = record.position().map_or(0, |p| p.line());
            for (j, cell) in record.iter().enumerate() {
                let v: f64 = cell.trim().parse().map_err(|_| {
                    Error::Data(format!("line {line}, column `{}`: `{cell}` is not a number", names[j]))
                })?;
                if j == y_col {
                    ys.push(v);
                } else {
                    xs.push(v);
                }
            }
        }
        let t = ys.len();
        let x = DMatrix::from_row_slice(t, labels.len(), &xs);
        Self::new(x, DVector::from_vec(ys), Some(labels))
    }

    pub fn from_csv_path(path: impl AsRef<Path>, response: &str) -> Result<Self> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| Error::Data(format!("opening {}: {e}", path.display())))?;
        Self::from_csv_reader(std::io::BufReader::new(f), response)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SplitSpec {
    /// First row of the after period.
    pub event_index: usize,
    /// Rows dropped on each side of the event.
    pub exclusion_window: usize,
}

/// A contiguous block of rows `[start, end)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub start: usize,
    pub end: usize,
}

impl Segment {
    pub fn rows(&self) -> usize {
        self.end - self.start
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub before: Segment,
    pub after: Segment,
    pub dropped: usize,
}

fn segment(data: &TimeSeriesDataset, start: usize, end: usize) -> Segment {
    Segment {
        x: data.x.rows(start, end - start).into_owned(),
        y: data.y.rows(start, end - start).into_owned(),
        start,
        end,
    }
}

pub fn split_at_event(data: &TimeSeriesDataset, spec: SplitSpec) -> Result<Split> {
    let t = data.rows();
    let required = data.p() + 1;
    let SplitSpec {
        event_index,
        exclusion_window: g,
    } = spec;
    if event_index == 0 || event_index >= t {
        return Err(Error::IndexOutOfRange { event_index, rows: t });
    }
    let before_end = event_index.saturating_sub(g);
    let after_start = event_index.saturating_add(g).min(t);
    if before_end < required {
        return Err(Error::WindowTooLarge {
            segment: "before",
            rows: before_end,
            required,
        });
    }
    if t - after_start < required {
        return Err(Error::WindowTooLarge {
            segment: "after",
            rows: t - after_start,
            required,
        });
    }
    Ok(Split {
        before: segment(data, 0, before_end),
        after: segment(data, after_start, t),
        dropped: after_start - before_end,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparativeStudy {
    pub split: Split,
    pub fit_before: FitResult,
    pub fit_after: FitResult,
    pub diff: DiffResult,
    /// `‖Ĝ_B⁻¹ − Ĝ_A⁻¹‖_max` with `Ĝ = XᵀX / rows`: the estimable design
    /// factor of the cancellation condition.
    pub gram_discrepancy: f64,
}

fn scaled_gram_inverse(seg: &Segment) -> Result<DMatrix<f64>> {
    Ok(QrDesign::new(&seg.x)?.gram_inverse() * seg.rows() as f64)
}

/// Fits each segment by OLS and differences the coefficients.
pub fn comparative_study(data: &TimeSeriesDataset, spec: SplitSpec) -> Result<ComparativeStudy> {
    let split = split_at_event(data, spec)?;
    let fit_before = ols_fit(&split.before.x, &split.before.y)?;
    let fit_after = ols_fit(&split.after.x, &split.after.y)?;
    let diff = diff_estimator(&fit_before, &fit_after)?;
    let gram_discrepancy = (scaled_gram_inverse(&split.before)? - scaled_gram_inverse(&split.after)?).amax();
    Ok(ComparativeStudy {
        split,
        fit_before,
        fit_after,
        diff,
        gram_discrepancy,
    })
}
