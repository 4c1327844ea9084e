//! Synthetic datasets and CSV ingestion.
//!
//! CSV files carry a header `x0,...,x{d-1}` optionally followed by a `label`
//! column. Labels are kept for evaluation and are never read by the clustering
//! engine.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::rng::rng_from_seed;
use crate::{Error, Result};

/// Closed per-dimension range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub low: f64,
    pub high: f64,
}

impl Bounds {
    pub fn new(low: f64, high: f64) -> Result<Self> {
        if !(low.is_finite() && high.is_finite()) {
            return Err(Error::param("bounds", "bounds must be finite"));
        }
        if low >= high {
            return Err(Error::param(
                "bounds",
                format!("low ({low}) must be strictly below high ({high})"),
            ));
        }
        Ok(Self { low, high })
    }

    pub fn range(&self) -> f64 {
        self.high - self.low
    }

    pub fn contains(&self, x: f64) -> bool {
        self.low <= x && x <= self.high
    }
}

/// `n` points in `d` dimensions together with their per-dimension bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    points: Vec<Vec<f64>>,
    bounds: Vec<Bounds>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<usize>>,
}

impl Dataset {
    pub fn new(points: Vec<Vec<f64>>, bounds: Vec<Bounds>) -> Result<Self> {
        let dim = bounds.len();
        if dim == 0 {
            return Err(Error::param("dim", "dimension must be at least 1"));
        }
        if points.is_empty() {
            return Err(Error::Empty("dataset"));
        }
        for (i, p) in points.iter().enumerate() {
            if p.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: p.len(),
                });
            }
            for (j, (&x, b)) in p.iter().zip(&bounds).enumerate() {
                if !b.contains(x) {
                    return Err(Error::param(
                        "points",
                        format!("point {i} coordinate {j} = {x} lies outside [{}, {}]", b.low, b.high),
                    ));
                }
            }
        }
        Ok(Self {
            points,
            bounds,
            labels: None,
        })
    }

    /// Builds a dataset whose bounds are the sample min/max padded by 1% of
    /// the range on each side.
    pub fn with_padded_bounds(points: Vec<Vec<f64>>) -> Result<Self> {
        let first = points.first().ok_or(Error::Empty("dataset"))?;
        let dim = first.len();
        if dim == 0 {
            return Err(Error::param("dim", "dimension must be at least 1"));
        }
        let mut bounds = Vec::with_capacity(dim);
        for j in 0..dim {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for p in &points {
                if p.len() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        found: p.len(),
                    });
                }
                lo = lo.min(p[j]);
                hi = hi.max(p[j]);
            }
            let range = hi - lo;
            let pad = if range > 0.0 {
                0.01 * range
            } else {
                0.01 * lo.abs().max(1.0)
            };
            bounds.push(Bounds::new(lo - pad, hi + pad)?);
        }
        Self::new(points, bounds)
    }

    pub fn with_labels(mut self, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != self.points.len() {
            return Err(Error::DimensionMismatch {
                expected: self.points.len(),
                found: labels.len(),
            });
        }
        self.labels = Some(labels);
        Ok(self)
    }

    /// Replaces the bounds, checking every point still lies inside them.
    pub fn with_bounds(self, bounds: Vec<Bounds>) -> Result<Self> {
        let labels = self.labels;
        let mut ds = Self::new(self.points, bounds)?;
        ds.labels = labels;
        Ok(ds)
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i]
    }

    pub fn bounds(&self) -> &[Bounds] {
        &self.bounds
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Returns a copy with rows reordered by `order` (a permutation of `0..n`).
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        if order.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                found: order.len(),
            });
        }
        let points = order.iter().map(|&i| self.points[i].clone()).collect();
        let mut ds = Self::new(points, self.bounds.clone())?;
        if let Some(labels) = &self.labels {
            ds.labels = Some(order.iter().map(|&i| labels[i]).collect());
        }
        Ok(ds)
    }
}

/// `n` points drawn i.i.d. uniformly from the box `bounds`.
pub fn generate_uniform(dim: usize, n: usize, bounds: &[Bounds], seed: u64) -> Result<Dataset> {
    if dim == 0 {
        return Err(Error::param("dim", "dimension must be at least 1"));
    }
    if n == 0 {
        return Err(Error::Empty("dataset"));
    }
    if bounds.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: bounds.len(),
        });
    }
    for b in bounds {
        Bounds::new(b.low, b.high)?;
    }
    let mut rng = rng_from_seed(seed);
    let points = (0..n)
        .map(|_| {
            bounds
                .iter()
                .map(|b| b.low + rng.random::<f64>() * b.range())
                .collect()
        })
        .collect();
    Dataset::new(points, bounds.to_vec())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianComponent {
    pub center: Vec<f64>,
    pub sigma: f64,
    pub count: usize,
}

/// An isotropic Gaussian mixture, read from JSON by the command-line tool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixtureSpec {
    pub components: Vec<GaussianComponent>,
    pub seed: u64,
}

impl GaussianMixtureSpec {
    pub fn validate(&self) -> Result<usize> {
        let first = self.components.first().ok_or(Error::Empty("mixture components"))?;
        let dim = first.center.len();
        if dim == 0 {
            return Err(Error::param("center", "dimension must be at least 1"));
        }
        for c in &self.components {
            if c.center.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: c.center.len(),
                });
            }
            if !(c.sigma > 0.0 && c.sigma.is_finite()) {
                return Err(Error::param("sigma", format!("must be positive, got {}", c.sigma)));
            }
            if c.count == 0 {
                return Err(Error::param("count", "every component needs at least one point"));
            }
            if c.center.iter().any(|x| !x.is_finite()) {
                return Err(Error::param("center", "coordinates must be finite"));
            }
        }
        Ok(dim)
    }
}

/// Samples every component in order; labels record the component index.
/// Bounds are the sample min/max padded by 1% of the range.
pub fn generate_gaussian_mixture(spec: &GaussianMixtureSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = rng_from_seed(spec.seed);
    let total: usize = spec.components.iter().map(|c| c.count).sum();
    let mut points = Vec::with_capacity(total);
    let mut labels = Vec::with_capacity(total);
    for (label, comp) in spec.components.iter().enumerate() {
        let normal = Normal::new(0.0, comp.sigma)
            .map_err(|e| Error::param("sigma", e.to_string()))?;
        for _ in 0..comp.count {
            points.push(
                comp.center
                    .iter()
                    .map(|&c| c + normal.sample(&mut rng))
                    .collect(),
            );
            labels.push(label);
        }
    }
    Dataset::with_padded_bounds(points)?.with_labels(labels)
}

/// Writes `x0,...,x{d-1}[,label]` with shortest round-trip float formatting.
pub fn save_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_csv(dataset, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn write_csv(dataset: &Dataset, w: &mut impl Write) -> Result<()> {
    let mut header: Vec<String> = (0..dataset.dim()).map(|j| format!("x{j}")).collect();
    if dataset.labels.is_some() {
        header.push("label".into());
    }
    writeln!(w, "{}", header.join(","))?;
    for (i, p) in dataset.points.iter().enumerate() {
        let mut row: Vec<String> = p.iter().map(|x| format!("{x:?}")).collect();
        if let Some(labels) = &dataset.labels {
            row.push(labels[i].to_string());
        }
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    read_csv(BufReader::new(File::open(path)?))
}

/// Parses a dataset; bounds are the data min/max padded by 1%.
///
/// Row numbers in errors are 1-based and count the header as row 1.
pub fn read_csv(reader: impl std::io::Read) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    let has_label = header.iter().next_back() == Some("label");
    let dim = header.len() - usize::from(has_label);
    if dim == 0 {
        return Err(Error::Parse {
            row: 1,
            column: 1,
            message: "header declares no coordinate columns".into(),
        });
    }
    for (j, name) in header.iter().take(dim).enumerate() {
        if name != format!("x{j}") {
            return Err(Error::Parse {
                row: 1,
                column: j + 1,
                message: format!("expected header `x{j}`, found `{name}`"),
            });
        }
    }
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 2;
        let record = record?;
        if record.len() != header.len() {
            return Err(Error::Parse {
                row,
                column: record.len() + 1,
                message: format!("expected {} cells, found {}", header.len(), record.len()),
            });
        }
        let mut p = Vec::with_capacity(dim);
        for (j, cell) in record.iter().take(dim).enumerate() {
            let x: f64 = cell.parse().map_err(|_| Error::Parse {
                row,
                column: j + 1,
                message: format!("`{cell}` is not a number"),
            })?;
            if !x.is_finite() {
                return Err(Error::Parse {
                    row,
                    column: j + 1,
                    message: format!("`{cell}` is not finite"),
                });
            }
            p.push(x);
        }
        if has_label {
            let cell = &record[dim];
            labels.push(cell.parse().map_err(|_| Error::Parse {
                row,
                column: dim + 1,
                message: format!("label `{cell}` is not a nonnegative integer"),
            })?);
        }
        points.push(p);
    }
    let ds = Dataset::with_padded_bounds(points)?;
    if has_label {
        ds.with_labels(labels)
    } else {
        Ok(ds)
    }
}
