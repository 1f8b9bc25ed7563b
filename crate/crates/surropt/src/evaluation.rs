//! Train/test splitting, the coefficient-of-variation error metric, and the
//! learning-curve study.
//!
//! The error metric is sigma / mu: the population standard deviation of the
//! prediction-minus-actual differences divided by the mean of the actual
//! values. A constant prediction bias therefore scores zero; the metric
//! reads dispersion, not offset.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::design_space::DesignSpace;
use crate::oracle::{generate_dataset, Oracle, OracleError, RetryPolicy, SampleRecord};
use crate::surrogate::{fit_triple, KernelSpec, SurrogateError, SurrogateSet, Target};

#[derive(Debug, Error)]
pub enum EvaluationError {
    #[error("dataset of {n} rows cannot be split into non-empty train and test sets (fraction {fraction})")]
    DegenerateSplit { n: usize, fraction: f64 },
    #[error("train fraction must lie strictly between 0 and 1, got {0}")]
    BadFraction(f64),
    #[error("predictions and actuals differ in length: {predictions} vs {actuals}")]
    LengthMismatch { predictions: usize, actuals: usize },
    #[error("empty input")]
    Empty,
    #[error("mean of actual values is zero; the error metric is undefined")]
    ZeroMean,
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Surrogate(#[from] SurrogateError),
}

/// Deterministic shuffled split specification.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.8,
            seed: 0,
        }
    }
}

/// Shuffles with a ChaCha stream from the given seed and cuts at
/// floor(fraction * n). Disjoint and exhaustive by construction.
pub fn split(
    dataset: &[SampleRecord],
    spec: &SplitSpec,
) -> Result<(Vec<SampleRecord>, Vec<SampleRecord>), EvaluationError> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(EvaluationError::BadFraction(spec.train_fraction));
    }
    let n = dataset.len();
    let n_train = (spec.train_fraction * n as f64).floor() as usize;
    if n_train == 0 || n_train == n {
        return Err(EvaluationError::DegenerateSplit {
            n,
            fraction: spec.train_fraction,
        });
    }
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    indices.shuffle(&mut rng);
    let train = indices[..n_train]
        .iter()
        .map(|&i| dataset[i].clone())
        .collect();
    let test = indices[n_train..]
        .iter()
        .map(|&i| dataset[i].clone())
        .collect();
    Ok((train, test))
}

/// sigma / mu: population standard deviation of (prediction - actual) over
/// the mean of the actuals.
pub fn cov_error(predictions: &[f64], actuals: &[f64]) -> Result<f64, EvaluationError> {
    if predictions.len() != actuals.len() {
        return Err(EvaluationError::LengthMismatch {
            predictions: predictions.len(),
            actuals: actuals.len(),
        });
    }
    if actuals.is_empty() {
        return Err(EvaluationError::Empty);
    }
    let n = actuals.len() as f64;
    let mu = actuals.iter().sum::<f64>() / n;
    if mu == 0.0 {
        return Err(EvaluationError::ZeroMean);
    }
    let diffs: Vec<f64> = predictions
        .iter()
        .zip(actuals)
        .map(|(p, a)| p - a)
        .collect();
    let mean_diff = diffs.iter().sum::<f64>() / n;
    let variance = diffs.iter().map(|d| (d - mean_diff).powi(2)).sum::<f64>() / n;
    Ok(variance.sqrt() / mu)
}

/// Per-target sigma, mu and sigma/mu on a test set.
#[derive(Debug, Clone, Copy)]
pub struct TargetError {
    pub sigma: f64,
    pub mu: f64,
    pub cov_error: f64,
}

/// Validation summary for one fitted triple.
#[derive(Debug, Clone)]
pub struct ErrorReport {
    pub displacement: TargetError,
    pub force: TargetError,
    pub theta: TargetError,
    pub n_train: usize,
    pub n_test: usize,
}

impl ErrorReport {
    pub fn get(&self, target: Target) -> &TargetError {
        match target {
            Target::Displacement => &self.displacement,
            Target::Force => &self.force,
            Target::Theta => &self.theta,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("target,sigma,mu,cov_error,n_train,n_test\n");
        for target in Target::ALL {
            let e = self.get(target);
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                target.column_name(),
                e.sigma,
                e.mu,
                e.cov_error,
                self.n_train,
                self.n_test
            );
        }
        out
    }
}

/// Evaluates a fitted triple on a held-out test set.
pub fn error_report(
    models: &SurrogateSet,
    test: &[SampleRecord],
    n_train: usize,
) -> Result<ErrorReport, EvaluationError> {
    let one = |target: Target| -> Result<TargetError, EvaluationError> {
        let actuals: Vec<f64> = test.iter().map(|r| target.of(r)).collect();
        let predictions: Vec<f64> = test
            .iter()
            .map(|r| models.get(target).predict(&r.point))
            .collect();
        let cov = cov_error(&predictions, &actuals)?;
        let n = actuals.len() as f64;
        let mu = actuals.iter().sum::<f64>() / n;
        Ok(TargetError {
            sigma: cov * mu,
            mu,
            cov_error: cov,
        })
    };
    Ok(ErrorReport {
        displacement: one(Target::Displacement)?,
        force: one(Target::Force)?,
        theta: one(Target::Theta)?,
        n_train,
        n_test: test.len(),
    })
}

/// One learning-curve row; fit preconditions that fail at small sizes are
/// captured in the row instead of aborting the study.
#[derive(Debug)]
pub struct LearningCurveRow {
    pub size: usize,
    pub outcome: Result<ErrorReport, String>,
}

/// For each dataset size: generate, split, fit on the training part and
/// score the held-out part. Sizes share leading Sobol samples, so each row
/// recomputed in isolation reproduces identically.
#[allow(clippy::too_many_arguments)]
pub fn learning_curve(
    space: &DesignSpace,
    oracle: &dyn Oracle,
    sizes: &[usize],
    split_spec: &SplitSpec,
    kernel: KernelSpec,
    policy: &RetryPolicy,
    skip: u64,
    seed: u64,
) -> Result<Vec<LearningCurveRow>, EvaluationError> {
    let mut rows = Vec::with_capacity(sizes.len());
    for &size in sizes {
        let dataset = generate_dataset(space, oracle, size, policy, skip, seed)?;
        let outcome = (|| -> Result<ErrorReport, EvaluationError> {
            let (train, test) = split(&dataset, split_spec)?;
            let models = fit_triple(space, &train, kernel)?;
            error_report(&models, &test, train.len())
        })()
        .map_err(|e| e.to_string());
        rows.push(LearningCurveRow { size, outcome });
    }
    Ok(rows)
}

/// Learning curve as CSV (size, per-target errors); failed rows come out as
/// comment lines.
pub fn learning_curve_to_csv(rows: &[LearningCurveRow]) -> String {
    let mut out = String::from("size,U_error,F_error,theta_error\n");
    for row in rows {
        match &row.outcome {
            Ok(report) => {
                let _ = writeln!(
                    out,
                    "{},{},{},{}",
                    row.size,
                    report.displacement.cov_error,
                    report.force.cov_error,
                    report.theta.cov_error
                );
            }
            Err(message) => {
                let _ = writeln!(out, "# size {}: {}", row.size, message);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::SyntheticOracle;
    use proptest::prelude::*;

    fn toy_records(n: usize) -> Vec<SampleRecord> {
        let space = DesignSpace::spba_four_param();
        let oracle = SyntheticOracle::new(space.clone()).unwrap();
        generate_dataset(&space, &oracle, n, &RetryPolicy::default(), 1, 3).unwrap()
    }

    #[test]
    fn split_sizes_follow_floor_rule() {
        let data = toy_records(10);
        let (train, test) = split(&data, &SplitSpec::default()).unwrap();
        assert_eq!(train.len(), 8);
        assert_eq!(test.len(), 2);
    }

    #[test]
    fn split_is_deterministic_per_seed() {
        let data = toy_records(20);
        let spec = SplitSpec {
            train_fraction: 0.8,
            seed: 9,
        };
        let (a_train, a_test) = split(&data, &spec).unwrap();
        let (b_train, b_test) = split(&data, &spec).unwrap();
        assert_eq!(a_train, b_train);
        assert_eq!(a_test, b_test);
    }

    #[test]
    fn split_five_thousand_four_hundred_gives_4320_train() {
        // floor(0.8 * 5400) = 4320.
        let n = 5400;
        let n_train = (0.8 * n as f64).floor() as usize;
        assert_eq!(n_train, 4320);
    }

    #[test]
    fn degenerate_split_is_an_error() {
        let data = toy_records(10);
        assert!(matches!(
            split(
                &data,
                &SplitSpec {
                    train_fraction: 0.05,
                    seed: 0
                }
            ),
            Err(EvaluationError::DegenerateSplit { .. })
        ));
        let one = toy_records(6);
        assert!(split(
            &one[..1],
            &SplitSpec {
                train_fraction: 0.8,
                seed: 0
            }
        )
        .is_err());
    }

    #[test]
    fn cov_error_hand_computed_example() {
        // diffs (0,0,1,1): population sigma 0.5; mu 1 -> 0.5 exactly.
        let actuals = [1.0, 1.0, 1.0, 1.0];
        let predictions = [1.0, 1.0, 2.0, 2.0];
        assert_eq!(cov_error(&predictions, &actuals).unwrap(), 0.5);
    }

    #[test]
    fn cov_error_ignores_constant_bias() {
        let actuals = [1.0, 2.0, 3.0, 4.0];
        let predictions: Vec<f64> = actuals.iter().map(|a| a + 7.0).collect();
        assert_eq!(cov_error(&predictions, &actuals).unwrap(), 0.0);
        assert_eq!(cov_error(&actuals, &actuals).unwrap(), 0.0);
    }

    #[test]
    fn cov_error_zero_mean_is_undefined() {
        assert!(matches!(
            cov_error(&[1.0, 2.0], &[1.0, -1.0]),
            Err(EvaluationError::ZeroMean)
        ));
    }

    #[test]
    fn learning_curve_rows_are_reproducible_in_isolation() {
        let space = DesignSpace::spba_four_param();
        let oracle = SyntheticOracle::new(space.clone()).unwrap();
        let spec = SplitSpec::default();
        let policy = RetryPolicy::default();
        let all = learning_curve(
            &space,
            &oracle,
            &[30, 60],
            &spec,
            KernelSpec::default(),
            &policy,
            1,
            5,
        )
        .unwrap();
        let lone = learning_curve(
            &space,
            &oracle,
            &[60],
            &spec,
            KernelSpec::default(),
            &policy,
            1,
            5,
        )
        .unwrap();
        let a = all[1].outcome.as_ref().unwrap();
        let b = lone[0].outcome.as_ref().unwrap();
        assert_eq!(a.displacement.cov_error, b.displacement.cov_error);
        assert_eq!(a.force.cov_error, b.force.cov_error);
        assert_eq!(a.theta.cov_error, b.theta.cov_error);
    }

    #[test]
    fn learning_curve_captures_fit_precondition_errors() {
        let space = DesignSpace::spba_four_param();
        let oracle = SyntheticOracle::new(space.clone()).unwrap();
        let rows = learning_curve(
            &space,
            &oracle,
            &[5, 40],
            &SplitSpec::default(),
            KernelSpec::default(),
            &RetryPolicy::default(),
            1,
            5,
        )
        .unwrap();
        assert!(rows[0].outcome.is_err(), "5-sample row must fail the fit");
        assert!(rows[1].outcome.is_ok());
        let csv = learning_curve_to_csv(&rows);
        assert!(csv.contains("# size 5"));
    }

    proptest! {
        #[test]
        fn split_partitions_the_dataset(n in 5usize..60, seed in 0u64..50) {
            let data = toy_records(n);
            let (train, test) = split(&data, &SplitSpec { train_fraction: 0.8, seed }).unwrap();
            prop_assert_eq!(train.len() + test.len(), n);
            let mut merged: Vec<&SampleRecord> = train.iter().chain(test.iter()).collect();
            merged.sort_by(|a, b| {
                a.point.values()[0]
                    .partial_cmp(&b.point.values()[0])
                    .unwrap()
                    .then(a.point.values()[1].partial_cmp(&b.point.values()[1]).unwrap())
            });
            let mut original: Vec<&SampleRecord> = data.iter().collect();
            original.sort_by(|a, b| {
                a.point.values()[0]
                    .partial_cmp(&b.point.values()[0])
                    .unwrap()
                    .then(a.point.values()[1].partial_cmp(&b.point.values()[1]).unwrap())
            });
            prop_assert_eq!(merged, original);
        }

        #[test]
        fn cov_error_translation_invariant(shift in -10.0f64..10.0) {
            let actuals = [1.0, 2.0, 1.5, 3.0];
            let predictions = [1.1, 1.9, 1.6, 3.2];
            let shifted: Vec<f64> = predictions.iter().map(|p| p + shift).collect();
            let a = cov_error(&predictions, &actuals).unwrap();
            let b = cov_error(&shifted, &actuals).unwrap();
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }
}
