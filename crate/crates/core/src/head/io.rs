//! Synthetic training data and portable parameter files.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::lora::{AdaptedProjection, LoraAdapter, DEFAULT_ALPHA, DEFAULT_RANK};
use super::train::{RegressionModel, StepRecord, TrainConfig};
use super::{pool_first, HeadError, HeadParams};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetMode {
    /// Targets come from a fixed random head of the same architecture.
    Teacher,
    /// Targets are a random affine function of the pooled state.
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdapterSpec {
    pub input_dim: usize,
    #[serde(default = "default_rank")]
    pub rank: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

fn default_rank() -> usize {
    DEFAULT_RANK
}

fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}

fn default_tokens() -> usize {
    4
}

/// Description of a synthetic regression problem and how to train on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    #[serde(default)]
    pub seed: u64,
    pub hidden_dim: usize,
    pub samples: usize,
    /// Sequence length of each generated hidden-state block; only the first
    /// position is pooled.
    #[serde(default = "default_tokens")]
    pub tokens: usize,
    pub mode: TargetMode,
    /// Standard deviation of Gaussian noise added to every target.
    #[serde(default)]
    pub noise: f64,
    #[serde(default)]
    pub adapter: Option<AdapterSpec>,
    #[serde(default)]
    pub train: TrainConfig,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), HeadError> {
        let bad = |m: &str| Err(HeadError::InvalidConfig(m.to_string()));
        if self.hidden_dim == 0 || self.samples == 0 || self.tokens == 0 {
            return bad("hidden_dim, samples and tokens must be positive");
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return bad("noise must be finite and non-negative");
        }
        if let Some(a) = &self.adapter {
            if a.input_dim == 0 || a.rank == 0 {
                return bad("adapter input_dim and rank must be positive");
            }
        }
        self.train.validate()
    }

    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }
}

/// Generated samples, the untrained student and the model that produced the
/// targets (absent for linear targets).
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub samples: Vec<(DVector<f64>, f64)>,
    pub student: RegressionModel,
    pub teacher: Option<RegressionModel>,
}

fn normal_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData, HeadError> {
    spec.validate()?;
    let stream = |key: &str| seed::rng(seed::derive_keyed(spec.seed, key, 0));
    let d = spec.hidden_dim;
    let input_dim = spec.adapter.as_ref().map_or(d, |a| a.input_dim);

    let frozen = spec.adapter.as_ref().map(|a| {
        let mut rng = stream("frozen");
        normal_matrix(d, a.input_dim, &mut rng) / (a.input_dim as f64).sqrt()
    });
    let student_projection = match (&spec.adapter, &frozen) {
        (Some(a), Some(w)) => Some(AdaptedProjection {
            frozen: w.clone(),
            adapter: LoraAdapter::init(a.input_dim, d, a.rank, a.alpha, &mut stream("adapter"))?,
        }),
        _ => None,
    };
    let student = RegressionModel {
        head: HeadParams::random(d, &mut stream("student")),
        projection: student_projection,
    };

    let mut teacher_rng = stream("teacher");
    let teacher = match spec.mode {
        TargetMode::Teacher => {
            let mut head = HeadParams::random(d, &mut teacher_rng);
            head.b1 = DVector::from_fn(2 * d, |_, _| teacher_rng.random_range(-0.5..0.5));
            let projection = match (&spec.adapter, &frozen) {
                (Some(a), Some(w)) => {
                    let mut adapter = LoraAdapter::zeros(a.input_dim, d, a.rank, a.alpha)?;
                    let s = 0.1 / adapter.scale();
                    adapter.a = normal_matrix(a.rank, a.input_dim, &mut teacher_rng) * s.sqrt();
                    adapter.b = normal_matrix(d, a.rank, &mut teacher_rng) * s.sqrt();
                    Some(AdaptedProjection {
                        frozen: w.clone(),
                        adapter,
                    })
                }
                _ => None,
            };
            Some(RegressionModel { head, projection })
        }
        TargetMode::Linear => None,
    };
    let linear = (
        DVector::from_fn(input_dim, |_, _| {
            teacher_rng.sample::<f64, _>(StandardNormal) / (input_dim as f64).sqrt()
        }),
        teacher_rng.random_range(-1.0..1.0),
    );

    let mut data_rng = stream("data");
    let mut noise_rng = stream("noise");
    let mut samples = Vec::with_capacity(spec.samples);
    for _ in 0..spec.samples {
        let block = normal_matrix(spec.tokens, input_dim, &mut data_rng);
        let x = pool_first(&block).expect("tokens > 0");
        let clean = match &teacher {
            Some(t) => t.predict(&x)?,
            None => linear.0.dot(&x) + linear.1,
        };
        let eps: f64 = noise_rng.sample(StandardNormal);
        samples.push((x, clean + spec.noise * eps));
    }
    Ok(SyntheticData {
        samples,
        student,
        teacher,
    })
}

const MAGIC: &[u8; 8] = b"EQHEAD01";

fn put_u64(w: &mut impl Write, v: u64) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn put_f64(w: &mut impl Write, v: f64) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

/// Row-major.
fn put_matrix(w: &mut impl Write, m: &DMatrix<f64>) -> io::Result<()> {
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            put_f64(w, m[(r, c)])?;
        }
    }
    Ok(())
}

fn get_u64(r: &mut impl Read) -> io::Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn get_f64(r: &mut impl Read) -> io::Result<f64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

fn get_dim(r: &mut impl Read) -> io::Result<usize> {
    let v = get_u64(r)?;
    if v == 0 || v > 1 << 20 {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("implausible dimension {v}"),
        ));
    }
    Ok(v as usize)
}

fn get_matrix(r: &mut impl Read, rows: usize, cols: usize) -> io::Result<DMatrix<f64>> {
    let mut values = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        values.push(get_f64(r)?);
    }
    Ok(DMatrix::from_row_slice(rows, cols, &values))
}

/// Layout, all little-endian: magic `EQHEAD01`; `u64 D`; `w1` (2D×D), `b1`
/// (2D), `w2` (2D), `b2` as f64 in row-major order; `u64` adapter flag; when
/// set, `u64 rank, u64 d_in, f64 alpha`, then frozen (D×d_in), `a`
/// (rank×d_in) and `b` (D×rank).
pub fn write_params(path: &Path, model: &RegressionModel) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    let head = &model.head;
    put_u64(&mut w, head.hidden_dim() as u64)?;
    put_matrix(&mut w, &head.w1)?;
    for v in head.b1.iter().chain(head.w2.iter()) {
        put_f64(&mut w, *v)?;
    }
    put_f64(&mut w, head.b2)?;
    match &model.projection {
        None => put_u64(&mut w, 0)?,
        Some(p) => {
            put_u64(&mut w, 1)?;
            put_u64(&mut w, p.adapter.rank() as u64)?;
            put_u64(&mut w, p.frozen.ncols() as u64)?;
            put_f64(&mut w, p.adapter.alpha)?;
            put_matrix(&mut w, &p.frozen)?;
            put_matrix(&mut w, &p.adapter.a)?;
            put_matrix(&mut w, &p.adapter.b)?;
        }
    }
    w.flush()
}

pub fn read_params(path: &Path) -> io::Result<RegressionModel> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "not a head parameter file"));
    }
    let d = get_dim(&mut r)?;
    let w1 = get_matrix(&mut r, 2 * d, d)?;
    let b1 = DVector::from_iterator(
        2 * d,
        (0..2 * d).map(|_| get_f64(&mut r)).collect::<io::Result<Vec<_>>>()?,
    );
    let w2 = get_matrix(&mut r, 1, 2 * d)?;
    let b2 = get_f64(&mut r)?;
    let head = HeadParams { w1, b1, w2, b2 };
    let projection = match get_u64(&mut r)? {
        0 => None,
        1 => {
            let rank = get_dim(&mut r)?;
            let d_in = get_dim(&mut r)?;
            let alpha = get_f64(&mut r)?;
            let frozen = get_matrix(&mut r, d, d_in)?;
            let a = get_matrix(&mut r, rank, d_in)?;
            let b = get_matrix(&mut r, d, rank)?;
            Some(AdaptedProjection {
                frozen,
                adapter: LoraAdapter { a, b, alpha },
            })
        }
        f => {
            return Err(io::Error::new(
                io::ErrorKind::InvalidData,
                format!("bad adapter flag {f}"),
            ))
        }
    };
    Ok(RegressionModel { head, projection })
}

/// Delimited `step,learning_rate,batch_loss` trace.
pub fn write_loss_trace(path: &Path, trace: &[StepRecord]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_path(path)?;
    for rec in trace {
        w.serialize(rec)?;
    }
    w.flush()?;
    Ok(())
}
