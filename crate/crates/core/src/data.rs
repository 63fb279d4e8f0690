//! Synthetic generators, orthogonal feature maps and CSV feature files.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learner::Example;
use crate::losses::LossKind;
use crate::numkit::{check_dims, inner, norm2, random_orthogonal, Mat, Rng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub source: String,
    pub dimension: usize,
    pub n: usize,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub examples: Vec<Example>,
    pub meta: DatasetMeta,
}

impl Dataset {
    pub fn new(examples: Vec<Example>, source: impl Into<String>, seed: Option<u64>) -> Result<Self> {
        let first = examples.first().ok_or(Error::EmptyDataset)?;
        let dimension = first.dim();
        for e in &examples {
            check_dims(dimension, e.dim())?;
            if !e.y.is_finite() || !e.x.iter().all(|v| v.is_finite()) {
                return Err(Error::InvalidArgument("dataset values must be finite".into()));
            }
        }
        Ok(Self {
            meta: DatasetMeta {
                source: source.into(),
                dimension,
                n: examples.len(),
                seed,
            },
            examples,
        })
    }

    pub fn dim(&self) -> usize {
        self.meta.dimension
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn check_labels(&self, kind: LossKind) -> Result<()> {
        self.examples.iter().try_for_each(|e| kind.check_label(e.y))
    }
}

fn require(cond: bool, what: &str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidArgument(what.into()))
    }
}

/// Two unit-covariance Gaussian classes centred at `±mean·1`; the `+1` class
/// comes first.
pub fn gen_gaussian(dim: usize, n_per_class: usize, mean: f64, rng: &mut Rng) -> Result<Dataset> {
    require(dim >= 1 && n_per_class >= 1, "gaussian data needs dim ≥ 1 and n_per_class ≥ 1")?;
    let mut examples = Vec::with_capacity(2 * n_per_class);
    for label in [1.0, -1.0] {
        for _ in 0..n_per_class {
            let x = (0..dim).map(|_| label * mean + rng.normal()).collect();
            examples.push(Example::new(x, label));
        }
    }
    Dataset::new(examples, "gaussian", Some(rng.seed()))
}

/// Unit circle points; angle `θ ∈ (0, π]` is labelled `+1`, `(π, 2π]` is `−1`.
pub fn gen_spherical(n: usize, rng: &mut Rng) -> Result<Dataset> {
    require(n >= 2, "spherical data needs at least two points")?;
    let examples = (0..n)
        .map(|_| {
            // uniform on (0, 2π]
            let theta = 2.0 * std::f64::consts::PI * (1.0 - rng.uniform());
            Example::new(vec![theta.cos(), theta.sin()], half_circle_label(theta))
        })
        .collect();
    Dataset::new(examples, "spherical", Some(rng.seed()))
}

pub fn half_circle_label(theta: f64) -> f64 {
    if theta <= std::f64::consts::PI {
        1.0
    } else {
        -1.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BallTask {
    Regression,
    Classification,
}

/// Uniform point in the `dim`-ball of the given radius.
pub fn sample_ball(dim: usize, radius: f64, rng: &mut Rng) -> Vec<f64> {
    loop {
        let g = rng.normal_vec(dim);
        let n = norm2(&g);
        if n > 0.0 {
            let r = radius * rng.uniform().powf(1.0 / dim as f64);
            return g.iter().map(|v| v * r / n).collect();
        }
    }
}

/// Uniform points in a ball labelled by a random unit-norm linear rule:
/// `⟨w, x⟩ + noise·ε` for regression, its sign for classification.
pub fn gen_ball(dim: usize, n: usize, radius: f64, task: BallTask, noise: f64, rng: &mut Rng) -> Result<Dataset> {
    require(dim >= 1 && n >= 1, "ball data needs dim ≥ 1 and n ≥ 1")?;
    require(radius > 0.0 && noise >= 0.0, "ball data needs radius > 0 and noise ≥ 0")?;
    let mut w = rng.normal_vec(dim);
    let wn = norm2(&w);
    w.iter_mut().for_each(|v| *v /= wn);
    let examples = (0..n)
        .map(|_| {
            let x = sample_ball(dim, radius, rng);
            let z = inner(&w, &x) + noise * rng.normal();
            let y = match task {
                BallTask::Regression => z,
                BallTask::Classification => {
                    if z >= 0.0 {
                        1.0
                    } else {
                        -1.0
                    }
                }
            };
            Example::new(x, y)
        })
        .collect();
    Dataset::new(examples, "ball", Some(rng.seed()))
}

/// Orthogonal map from the student's raw features to the teacher's.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureMap {
    pub matrix: Mat,
}

impl FeatureMap {
    pub fn identity(dim: usize) -> Self {
        Self { matrix: Mat::identity(dim) }
    }

    pub fn random(dim: usize, rng: &mut Rng) -> Self {
        Self {
            matrix: random_orthogonal(dim, rng),
        }
    }

    pub fn new(matrix: Mat) -> Result<Self> {
        if matrix.rows() != matrix.cols() || matrix.orthogonality_error() > 1e-10 {
            return Err(Error::InvalidArgument("feature map must be square and orthogonal".into()));
        }
        Ok(Self { matrix })
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    /// The teacher-to-student map.
    pub fn inverse(&self) -> Self {
        Self {
            matrix: self.matrix.transpose(),
        }
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.matrix.mul_vec(x)
    }
}

/// `x ↦ Mx` with labels unchanged.
pub fn apply_map(map: &FeatureMap, dataset: &Dataset) -> Result<Dataset> {
    check_dims(map.dim(), dataset.dim())?;
    let examples = dataset
        .examples
        .iter()
        .map(|e| Ok(Example::new(map.apply(&e.x)?, e.y)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        examples,
        meta: dataset.meta.clone(),
    })
}

/// Appends the constant-1 bias coordinate.
pub fn augment_bias(dataset: &Dataset) -> Dataset {
    let examples = dataset
        .examples
        .iter()
        .map(|e| {
            let mut x = e.x.clone();
            x.push(1.0);
            Example::new(x, e.y)
        })
        .collect();
    Dataset {
        examples,
        meta: DatasetMeta {
            dimension: dataset.meta.dimension + 1,
            ..dataset.meta.clone()
        },
    }
}

const LABEL_COLUMN: &str = "label";

/// Reads `f1,…,fd,label` rows after a mandatory header whose last column is
/// `label`. Numbers use `.` as the decimal separator; a field such as `1,5`
/// (quoted) is rejected.
pub fn read_features<R: Read>(reader: R, source: &str, kind: Option<LossKind>) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| csv_error(e, 1))?.clone();
    if headers.len() < 2 || headers.get(headers.len() - 1) != Some(LABEL_COLUMN) {
        return Err(Error::Parse {
            line: 1,
            message: format!("header must list the features followed by `{LABEL_COLUMN}`"),
        });
    }
    let d = headers.len() - 1;
    let mut examples = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(e, 0))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != d + 1 {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, found {}", d + 1, record.len()),
            });
        }
        let mut values = Vec::with_capacity(d + 1);
        for field in record.iter() {
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                line,
                message: format!("`{field}` is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line,
                    message: format!("`{field}` is not finite"),
                });
            }
            values.push(v);
        }
        let y = values.pop().expect("d + 1 fields");
        if let Some(kind) = kind {
            kind.check_label(y).map_err(|e| Error::Parse {
                line,
                message: e.to_string(),
            })?;
        }
        examples.push(Example::new(values, y));
    }
    Dataset::new(examples, source, None)
}

fn csv_error(e: csv::Error, fallback_line: u64) -> Error {
    let line = e.position().map_or(fallback_line, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse {
            line,
            message: format!("{other:?}"),
        },
    }
}

pub fn load_features(path: &Path, kind: Option<LossKind>) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    read_features(file, &path.display().to_string(), kind)
}

pub fn write_features<W: Write>(dataset: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = (1..=dataset.dim()).map(|i| format!("f{i}")).collect();
    header.push(LABEL_COLUMN.into());
    w.write_record(&header).map_err(|e| csv_error(e, 0))?;
    for e in &dataset.examples {
        let row: Vec<String> = e.x.iter().chain(std::iter::once(&e.y)).map(|v| v.to_string()).collect();
        w.write_record(&row).map_err(|e| csv_error(e, 0))?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_features(dataset: &Dataset, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_features(dataset, std::io::BufWriter::new(file))
}
