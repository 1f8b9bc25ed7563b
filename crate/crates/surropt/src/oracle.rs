//! Response oracles: sources of (U, F, theta) observations at design points.
//!
//! Three oracle kinds share one interface: a built-in smooth synthetic
//! benchmark, an arbitrary closure-backed model, and an exact lookup table
//! loaded from a CSV dataset exported by external simulation software.
//! `evaluate_with_retry` implements the resample-on-nonconvergence policy:
//! a failed evaluation is replaced by a Gaussian perturbation of the point,
//! and the returned record carries the point that was actually evaluated.
//!
//! # Dataset CSV schema
//!
//! Header: the space's parameter names in order, then `U,F,theta`
//! (units mm / N / rad). Plain decimal numbers, `#` starts a comment line.

use std::fmt::Write as _;
use std::io::Read;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::design_space::{DesignPoint, DesignSpace, DesignSpaceError};

/// Relative tolerance for matching dataset rows to query points.
pub const LOOKUP_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error(transparent)]
    Space(#[from] DesignSpaceError),
    #[error("no dataset record within tolerance of the query point {0:?}")]
    LookupMiss(Vec<f64>),
    #[error("oracle exhausted after {attempts} attempts at points {points:?}: {last_reason}")]
    Exhausted {
        attempts: usize,
        points: Vec<Vec<f64>>,
        last_reason: String,
    },
    #[error("synthetic oracle requires parameters {0:?} in the design space")]
    MissingParameters(Vec<String>),
    #[error("dataset error: {0}")]
    Dataset(#[from] DatasetError),
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("missing column {0} in dataset header")]
    MissingColumn(String),
    #[error("unexpected column {0} in dataset header")]
    UnexpectedColumn(String),
    #[error("line {line}: non-numeric value {value:?} in column {column}")]
    BadNumber {
        line: usize,
        column: String,
        value: String,
    },
    #[error("line {line}: expected {expected} fields, got {got}")]
    BadFieldCount {
        line: usize,
        expected: usize,
        got: usize,
    },
    #[error("line {line}: negative magnitude {value} in column {column}")]
    NegativeMagnitude {
        line: usize,
        column: String,
        value: f64,
    },
    #[error("lines {first} and {second} hold duplicate points within tolerance")]
    DuplicatePoint { first: usize, second: usize },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// Where a record came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Synthetic,
    Dataset,
    External,
}

/// One (x, U, F, theta) observation, the unit of training data.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub point: DesignPoint,
    /// Out-of-plane displacement U (mm), >= 0.
    pub displacement: f64,
    /// Out-of-plane deformation force F (N), >= 0.
    pub force: f64,
    /// Unobstructed bending angle theta (rad), >= 0.
    pub theta: f64,
    pub provenance: Provenance,
}

/// Result of one oracle call: either a record or a non-convergence marker.
#[derive(Debug, Clone)]
pub enum OracleOutcome {
    Converged(SampleRecord),
    NonConvergence { reason: String },
}

/// Resample-on-nonconvergence policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_retries: usize,
    pub perturb_scale: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 5,
            perturb_scale: 0.02,
        }
    }
}

/// Uniform interface for obtaining (U, F, theta) at a feasible point.
/// Implementations are immutable; `evaluate` must be pure per instance.
pub trait Oracle: Sync {
    fn space(&self) -> &DesignSpace;

    fn evaluate(&self, point: &DesignPoint) -> Result<OracleOutcome, OracleError>;
}

/// Smooth synthetic stand-in for the external simulation. Defined over the
/// normalized coordinates of the named parameters H_C, L_A, T_A, W_B:
///
/// ```text
/// theta = 0.7 + 0.4 h + 0.7 l - 0.5 t + 0.1 h l          (rad)
/// F     = 1.2 - 0.5 h + 0.2 l + 1.2 w + 0.4 l w          (N)
/// U     = max(0.05, 1.2 + 1.6 h + 0.5 t - 0.9 w + 0.3 h (1 - w))   (mm)
/// ```
///
/// with h, l, t, w the unit-cube values of H_C, L_A, T_A, W_B. These numbers
/// are benchmark definitions chosen so that bending responds to L_A (up) and
/// T_A (down) while stiffness responds to W_B (up) and H_C (down), and the
/// constrained stiffness optimum seeks the box boundary. The floor on U is a
/// guard; on the built-in spaces the raw expression stays above it.
/// Parameters outside the core four contribute nothing unless a seeded
/// low-amplitude wiggle is configured.
pub struct SyntheticOracle {
    space: DesignSpace,
    core: [usize; 4],
    failure_ball: Option<(Vec<f64>, f64)>,
    /// Per-extra-parameter (linear, quadratic) coefficients per target.
    wiggle: Vec<(usize, [[f64; 2]; 3])>,
}

const CORE_PARAMETERS: [&str; 4] = ["H_C", "L_A", "T_A", "W_B"];

impl SyntheticOracle {
    pub fn new(space: DesignSpace) -> Result<Self, OracleError> {
        let mut core = [0usize; 4];
        let mut missing = Vec::new();
        for (slot, name) in core.iter_mut().zip(CORE_PARAMETERS) {
            match space.parameter_index(name) {
                Ok(i) => *slot = i,
                Err(_) => missing.push(name.to_string()),
            }
        }
        if !missing.is_empty() {
            return Err(OracleError::MissingParameters(missing));
        }
        Ok(Self {
            space,
            core,
            failure_ball: None,
            wiggle: Vec::new(),
        })
    }

    /// Declares a non-convergence region: any query within `radius` of
    /// `centre` in normalized max-norm reports NonConvergence.
    pub fn with_failure_ball(mut self, centre: &DesignPoint, radius: f64) -> Self {
        let c = self.space.normalize_unchecked(centre);
        self.failure_ball = Some((c, radius));
        self
    }

    /// Adds seeded smooth contributions from the parameters outside the core
    /// four, with amplitude as a fraction of each target's scale. Used to
    /// give nominally inert parameters a small but nonzero response.
    pub fn with_inert_wiggle(mut self, seed: u64, amplitude: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scales = [1.0, 1.2, 0.8]; // U, F, theta response scales
        self.wiggle = (0..self.space.dimension())
            .filter(|i| !self.core.contains(i))
            .map(|i| {
                let mut coeffs = [[0.0; 2]; 3];
                for (t, c) in coeffs.iter_mut().enumerate() {
                    c[0] = amplitude * scales[t] * rng.random_range(-1.0..1.0);
                    c[1] = amplitude * scales[t] * rng.random_range(-1.0..1.0);
                }
                (i, coeffs)
            })
            .collect();
        self
    }

    fn responses(&self, unit: &[f64]) -> (f64, f64, f64) {
        let [h, l, t, w] = self.core.map(|i| unit[i]);
        let mut theta = 0.7 + 0.4 * h + 0.7 * l - 0.5 * t + 0.1 * h * l;
        let mut force = 1.2 - 0.5 * h + 0.2 * l + 1.2 * w + 0.4 * l * w;
        let mut disp = 1.2 + 1.6 * h + 0.5 * t - 0.9 * w + 0.3 * h * (1.0 - w);
        for (i, coeffs) in &self.wiggle {
            let u = unit[*i];
            disp += coeffs[0][0] * u + coeffs[0][1] * u * u;
            force += coeffs[1][0] * u + coeffs[1][1] * u * u;
            theta += coeffs[2][0] * u + coeffs[2][1] * u * u;
        }
        (disp.max(0.05), force, theta)
    }
}

impl Oracle for SyntheticOracle {
    fn space(&self) -> &DesignSpace {
        &self.space
    }

    fn evaluate(&self, point: &DesignPoint) -> Result<OracleOutcome, OracleError> {
        let unit = self.space.normalize(point)?;
        if let Some((centre, radius)) = &self.failure_ball {
            let dist = unit
                .iter()
                .zip(centre)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            if dist <= *radius {
                return Ok(OracleOutcome::NonConvergence {
                    reason: format!("inside configured failure ball (distance {dist:.4})"),
                });
            }
        }
        let (displacement, force, theta) = self.responses(&unit);
        Ok(OracleOutcome::Converged(SampleRecord {
            point: point.clone(),
            displacement,
            force,
            theta,
            provenance: Provenance::Synthetic,
        }))
    }
}

/// Oracle backed by an arbitrary closure over normalized coordinates,
/// returning (U, F, theta). Handy for plugging analytic test models.
pub struct ClosureOracle<F>
where
    F: Fn(&[f64]) -> (f64, f64, f64) + Sync,
{
    space: DesignSpace,
    f: F,
}

impl<F> ClosureOracle<F>
where
    F: Fn(&[f64]) -> (f64, f64, f64) + Sync,
{
    pub fn new(space: DesignSpace, f: F) -> Self {
        Self { space, f }
    }
}

impl<F> Oracle for ClosureOracle<F>
where
    F: Fn(&[f64]) -> (f64, f64, f64) + Sync,
{
    fn space(&self) -> &DesignSpace {
        &self.space
    }

    fn evaluate(&self, point: &DesignPoint) -> Result<OracleOutcome, OracleError> {
        let unit = self.space.normalize(point)?;
        let (displacement, force, theta) = (self.f)(&unit);
        Ok(OracleOutcome::Converged(SampleRecord {
            point: point.clone(),
            displacement,
            force,
            theta,
            provenance: Provenance::External,
        }))
    }
}

/// Exact lookup table over previously computed records. Matching uses a
/// per-component relative tolerance; this is not an interpolator.
pub struct DatasetOracle {
    space: DesignSpace,
    records: Vec<SampleRecord>,
}

impl DatasetOracle {
    pub fn new(space: DesignSpace, records: Vec<SampleRecord>) -> Self {
        Self { space, records }
    }

    pub fn from_csv(space: DesignSpace, path: &Path) -> Result<(Self, Vec<String>), OracleError> {
        let load = load_dataset(path, &space)?;
        Ok((Self::new(space, load.records), load.warnings))
    }

    pub fn records(&self) -> &[SampleRecord] {
        &self.records
    }
}

fn points_match(a: &[f64], b: &[f64], tolerance: f64) -> bool {
    a.len() == b.len()
        && a.iter()
            .zip(b)
            .all(|(x, y)| (x - y).abs() <= tolerance * x.abs().max(y.abs()).max(1.0))
}

impl Oracle for DatasetOracle {
    fn space(&self) -> &DesignSpace {
        &self.space
    }

    fn evaluate(&self, point: &DesignPoint) -> Result<OracleOutcome, OracleError> {
        self.records
            .iter()
            .find(|r| points_match(r.point.values(), point.values(), LOOKUP_TOLERANCE))
            .map(|r| OracleOutcome::Converged(r.clone()))
            .ok_or_else(|| OracleError::LookupMiss(point.values().to_vec()))
    }
}

/// Evaluates with the resample-on-nonconvergence policy: on failure the point
/// is perturbed around the original query and re-evaluated, up to
/// `policy.max_retries` extra attempts. The returned record carries the point
/// that actually converged, which replaces the query as the training sample.
pub fn evaluate_with_retry(
    oracle: &dyn Oracle,
    point: &DesignPoint,
    space: &DesignSpace,
    policy: &RetryPolicy,
    rng: &mut impl Rng,
) -> Result<SampleRecord, OracleError> {
    let mut attempted = Vec::new();
    let mut last_reason = String::new();
    let mut candidate = point.clone();
    for attempt in 0..=policy.max_retries {
        match oracle.evaluate(&candidate)? {
            OracleOutcome::Converged(record) => return Ok(record),
            OracleOutcome::NonConvergence { reason } => {
                attempted.push(candidate.values().to_vec());
                last_reason = reason;
            }
        }
        if attempt < policy.max_retries {
            candidate = space.perturb_around(point, policy.perturb_scale, rng)?;
        }
    }
    Err(OracleError::Exhausted {
        attempts: attempted.len(),
        points: attempted,
        last_reason,
    })
}

/// Counters from one dataset generation run.
#[derive(Debug, Clone, Copy, Default)]
pub struct GenerationStats {
    /// Raw Sobol points discarded by the feasibility constraints.
    pub sobol_rejected: u64,
    /// Samples whose returned point differs from the Sobol point because of
    /// non-convergence retries.
    pub retried: usize,
}

/// Sobol-samples the space and evaluates every point with the retry policy.
/// Deterministic: each sample index gets its own ChaCha stream derived from
/// `seed`, so records come out identical regardless of evaluation order.
pub fn generate_dataset(
    space: &DesignSpace,
    oracle: &dyn Oracle,
    n: usize,
    policy: &RetryPolicy,
    skip: u64,
    seed: u64,
) -> Result<Vec<SampleRecord>, OracleError> {
    Ok(generate_dataset_with_stats(space, oracle, n, policy, skip, seed)?.0)
}

pub fn generate_dataset_with_stats(
    space: &DesignSpace,
    oracle: &dyn Oracle,
    n: usize,
    policy: &RetryPolicy,
    skip: u64,
    seed: u64,
) -> Result<(Vec<SampleRecord>, GenerationStats), OracleError> {
    let budget = 1000 * n as u64 + 100_000;
    let (points, consumed) = space.sobol_sample_counted(n, skip, budget)?;
    let mut stats = GenerationStats {
        sobol_rejected: consumed - n as u64,
        retried: 0,
    };
    let records = points
        .iter()
        .enumerate()
        .map(|(i, point)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let record = evaluate_with_retry(oracle, point, space, policy, &mut rng)?;
            if record.point != *point {
                stats.retried += 1;
            }
            Ok(record)
        })
        .collect::<Result<Vec<_>, OracleError>>()?;
    Ok((records, stats))
}

/// A parsed dataset plus non-fatal findings (e.g. infeasible rows).
#[derive(Debug)]
pub struct DatasetLoad {
    pub records: Vec<SampleRecord>,
    pub warnings: Vec<String>,
}

/// Reads a dataset CSV against the given space. The header must list the
/// space's parameters in order followed by U, F, theta. Malformed rows are
/// hard errors with line numbers; rows that violate feasibility load with a
/// warning so externally produced data with boundary rounding survives.
pub fn load_dataset(path: &Path, space: &DesignSpace) -> Result<DatasetLoad, OracleError> {
    let mut text = String::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|source| DatasetError::Io {
            path: path.display().to_string(),
            source,
        })?;
    load_dataset_str(&text, space)
}

pub fn load_dataset_str(text: &str, space: &DesignSpace) -> Result<DatasetLoad, OracleError> {
    let d = space.dimension();
    let mut expected: Vec<String> = space
        .parameter_names()
        .iter()
        .map(|s| s.to_string())
        .collect();
    expected.extend(["U".into(), "F".into(), "theta".into()]);

    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .has_headers(true)
        .from_reader(text.as_bytes());

    let header = reader.headers().map_err(DatasetError::from)?.clone();
    let got: Vec<&str> = header.iter().collect();
    for name in &expected {
        if !got.contains(&name.as_str()) {
            return Err(DatasetError::MissingColumn(name.clone()).into());
        }
    }
    for name in &got {
        if !expected.iter().any(|e| e == name) {
            return Err(DatasetError::UnexpectedColumn(name.to_string()).into());
        }
    }
    // Column position per expected name (the header may permute them).
    let position: Vec<usize> = expected
        .iter()
        .map(|name| got.iter().position(|g| g == name).unwrap())
        .collect();

    let mut records = Vec::new();
    let mut warnings = Vec::new();
    let mut lines = Vec::new();
    for row in reader.records() {
        let row = row.map_err(DatasetError::from)?;
        let line = row.position().map(|p| p.line() as usize).unwrap_or(0);
        if row.len() != expected.len() {
            return Err(DatasetError::BadFieldCount {
                line,
                expected: expected.len(),
                got: row.len(),
            }
            .into());
        }
        let mut values = Vec::with_capacity(expected.len());
        for (name, &pos) in expected.iter().zip(&position) {
            let cell = &row[pos];
            let value: f64 = cell.parse().map_err(|_| DatasetError::BadNumber {
                line,
                column: name.clone(),
                value: cell.to_string(),
            })?;
            values.push(value);
        }
        for (offset, name) in ["U", "F", "theta"].iter().enumerate() {
            let v = values[d + offset];
            if v < 0.0 {
                return Err(DatasetError::NegativeMagnitude {
                    line,
                    column: name.to_string(),
                    value: v,
                }
                .into());
            }
        }
        let point = DesignPoint::new(values[..d].to_vec());
        if !space.is_feasible(&point) {
            warnings.push(format!(
                "line {line}: point {:?} violates the design-space constraints; loaded anyway",
                point.values()
            ));
        }
        records.push(SampleRecord {
            point,
            displacement: values[d],
            force: values[d + 1],
            theta: values[d + 2],
            provenance: Provenance::Dataset,
        });
        lines.push(line);
    }
    for i in 0..records.len() {
        for j in (i + 1)..records.len() {
            if points_match(
                records[i].point.values(),
                records[j].point.values(),
                LOOKUP_TOLERANCE,
            ) {
                return Err(DatasetError::DuplicatePoint {
                    first: lines[i],
                    second: lines[j],
                }
                .into());
            }
        }
    }
    Ok(DatasetLoad { records, warnings })
}

/// Serializes records to the dataset CSV schema. Values print as the
/// shortest decimal that parses back to the identical f64.
pub fn dataset_to_csv(space: &DesignSpace, records: &[SampleRecord]) -> String {
    let mut out = String::new();
    for p in space.parameters() {
        let _ = write!(out, "{},", p.name);
    }
    out.push_str("U,F,theta\n");
    for r in records {
        for v in r.point.values() {
            let _ = write!(out, "{v},");
        }
        let _ = writeln!(out, "{},{},{}", r.displacement, r.force, r.theta);
    }
    out
}
