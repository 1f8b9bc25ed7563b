//! One-at-a-time sensitivity analysis and model reduction.
//!
//! Each parameter is swept across its range at uniformly spaced fractions
//! while the others sit at their medians; theta and the stiffness
//! k_o = F / (U + eps) are recorded per point, a polynomial is fitted to each
//! curve in the fraction variable, and the maximal gradient magnitude of the
//! fit over [0, 1] is the parameter's sensitivity. Gradients are taken with
//! respect to the fraction of range, so scores are unit-free and comparable
//! across parameters. The top `keep` parameters by score are retained; the
//! rest are frozen at their medians.

use std::fmt::Write as _;

use ndarray::{Array1, Array2};
use ndarray_linalg::{EigVals, LeastSquaresSvd};
use thiserror::Error;

use crate::design_space::{DesignPoint, DesignSpace, DesignSpaceError, ParameterDef, StrictLinearConstraint};
use crate::oracle::{Oracle, OracleError, OracleOutcome};

#[derive(Debug, Error)]
pub enum SensitivityError {
    #[error(transparent)]
    Space(#[from] DesignSpaceError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("sweep needs at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("the all-median baseline is infeasible in this space")]
    InfeasibleBaseline,
    #[error("polynomial degree {degree} needs at least {needed} valid points, got {got}")]
    InsufficientData {
        degree: usize,
        needed: usize,
        got: usize,
    },
    #[error("least-squares fit failed: {0}")]
    FitFailure(String),
    #[error(
        "tie at the cut boundary: rank {keep} and {next} both score {score}; choose keep explicitly"
    )]
    TieAtCut { keep: usize, next: usize, score: f64 },
    #[error("keep = {keep} exceeds dimension {dimension}")]
    KeepTooLarge { keep: usize, dimension: usize },
    #[error("reduction leaves constraint {index} unsatisfiable ({lhs} < {bound} is false)")]
    ReductionInfeasible { index: usize, lhs: f64, bound: f64 },
}

/// Raw curve data for one parameter's sweep. Infeasible or non-converged
/// sweep points are recorded as gaps.
#[derive(Debug, Clone)]
pub struct SweepResult {
    pub parameter: String,
    /// Uniformly spaced fractions of the parameter's range, ascending.
    pub fractions: Vec<f64>,
    pub theta_values: Vec<Option<f64>>,
    pub stiffness_values: Vec<Option<f64>>,
    pub warnings: Vec<String>,
}

/// Which sweep curve to fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepResponse {
    Theta,
    Stiffness,
}

/// Per-parameter maximal gradient magnitudes of the fitted curves.
#[derive(Debug, Clone)]
pub struct ParameterSensitivity {
    pub parameter: String,
    pub theta_gradient: f64,
    pub stiffness_gradient: f64,
}

/// One row of the final report, in descending score order.
#[derive(Debug, Clone)]
pub struct SensitivityEntry {
    pub parameter: String,
    /// theta gradient divided by the largest theta gradient.
    pub theta_sensitivity: f64,
    /// k_o gradient divided by the largest k_o gradient.
    pub stiffness_sensitivity: f64,
    /// max of the two normalized sensitivities.
    pub score: f64,
    pub retained: bool,
}

/// Ranking outcome: retained subset plus the freeze values for the rest.
#[derive(Debug, Clone)]
pub struct SensitivityReport {
    /// Entries ordered by score descending.
    pub entries: Vec<SensitivityEntry>,
    /// Retained parameter names, score order.
    pub retained: Vec<String>,
    /// Dropped parameters with their frozen median values.
    pub frozen: Vec<(String, f64)>,
}

impl SensitivityReport {
    /// Lifts a point of the reduced space back into the original space,
    /// restoring frozen parameters at their medians.
    pub fn embed(
        &self,
        original: &DesignSpace,
        reduced: &DesignSpace,
        point: &DesignPoint,
    ) -> Result<DesignPoint, SensitivityError> {
        let mut values = Vec::with_capacity(original.dimension());
        for p in original.parameters() {
            if let Ok(i) = reduced.parameter_index(&p.name) {
                values.push(point.values()[i]);
            } else if let Some((_, v)) = self.frozen.iter().find(|(n, _)| *n == p.name) {
                values.push(*v);
            } else {
                return Err(SensitivityError::Space(DesignSpaceError::UnknownParameter(
                    p.name.clone(),
                )));
            }
        }
        Ok(DesignPoint::new(values))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("parameter,theta_sensitivity,ko_sensitivity,score,retained\n");
        for e in &self.entries {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                e.parameter, e.theta_sensitivity, e.stiffness_sensitivity, e.score, e.retained
            );
        }
        out
    }
}

/// Sweep configuration; nine points and a quartic fit unless overridden.
#[derive(Debug, Clone, Copy)]
pub struct SweepSettings {
    pub points: usize,
    pub degree: usize,
    /// Stiffness regularizer in k_o = F / (U + epsilon), millimetres.
    pub epsilon: f64,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self {
            points: 9,
            degree: 4,
            epsilon: 1.0,
        }
    }
}

/// Varies one parameter across `points` uniform fractions of its range with
/// all others at their medians, recording theta and k_o per point.
pub fn one_at_a_time_sweep(
    space: &DesignSpace,
    oracle: &dyn Oracle,
    parameter: &str,
    settings: &SweepSettings,
) -> Result<SweepResult, SensitivityError> {
    if settings.points < 2 {
        return Err(SensitivityError::TooFewPoints(settings.points));
    }
    let index = space.parameter_index(parameter)?;
    let baseline = space.median_point();
    if !space.is_feasible(&baseline) {
        return Err(SensitivityError::InfeasibleBaseline);
    }
    let def = &space.parameters()[index];
    let mut fractions = Vec::with_capacity(settings.points);
    let mut theta_values = Vec::with_capacity(settings.points);
    let mut stiffness_values = Vec::with_capacity(settings.points);
    let mut warnings = Vec::new();
    for k in 0..settings.points {
        let fraction = k as f64 / (settings.points - 1) as f64;
        fractions.push(fraction);
        let mut values = baseline.values().to_vec();
        values[index] = def.lower + fraction * def.range();
        let point = DesignPoint::new(values);
        if !space.is_feasible(&point) {
            warnings.push(format!(
                "{parameter}: sweep point at fraction {fraction} is infeasible; recorded as gap"
            ));
            theta_values.push(None);
            stiffness_values.push(None);
            continue;
        }
        match oracle.evaluate(&point)? {
            OracleOutcome::Converged(r) => {
                theta_values.push(Some(r.theta));
                stiffness_values.push(Some(r.force / (r.displacement + settings.epsilon)));
            }
            OracleOutcome::NonConvergence { reason } => {
                warnings.push(format!(
                    "{parameter}: sweep point at fraction {fraction} did not converge ({reason}); recorded as gap"
                ));
                theta_values.push(None);
                stiffness_values.push(None);
            }
        }
    }
    Ok(SweepResult {
        parameter: parameter.to_string(),
        fractions,
        theta_values,
        stiffness_values,
        warnings,
    })
}

/// Least-squares polynomial (ascending coefficients) in the fraction
/// variable, over the sweep's valid points.
pub fn fit_sweep_polynomial(
    sweep: &SweepResult,
    response: SweepResponse,
    degree: usize,
) -> Result<Vec<f64>, SensitivityError> {
    let values = match response {
        SweepResponse::Theta => &sweep.theta_values,
        SweepResponse::Stiffness => &sweep.stiffness_values,
    };
    let valid: Vec<(f64, f64)> = sweep
        .fractions
        .iter()
        .zip(values)
        .filter_map(|(&f, v)| v.map(|y| (f, y)))
        .collect();
    if valid.len() < degree + 1 {
        return Err(SensitivityError::InsufficientData {
            degree,
            needed: degree + 1,
            got: valid.len(),
        });
    }
    let mut vandermonde = Array2::<f64>::zeros((valid.len(), degree + 1));
    let mut rhs = Array1::<f64>::zeros(valid.len());
    for (row, &(u, y)) in valid.iter().enumerate() {
        let mut power = 1.0;
        for col in 0..=degree {
            vandermonde[(row, col)] = power;
            power *= u;
        }
        rhs[row] = y;
    }
    let solution = vandermonde
        .least_squares(&rhs)
        .map_err(|e| SensitivityError::FitFailure(e.to_string()))?;
    Ok(solution.solution.to_vec())
}

fn derivative(coefficients: &[f64]) -> Vec<f64> {
    coefficients
        .iter()
        .enumerate()
        .skip(1)
        .map(|(k, &c)| k as f64 * c)
        .collect()
}

fn evaluate_polynomial(coefficients: &[f64], u: f64) -> f64 {
    coefficients.iter().rev().fold(0.0, |acc, &c| acc * u + c)
}

/// Real roots of a polynomial inside [0, 1], via the companion matrix.
fn real_roots_in_unit_interval(coefficients: &[f64]) -> Vec<f64> {
    let mut coeffs = coefficients.to_vec();
    while coeffs.last().is_some_and(|c| *c == 0.0) {
        coeffs.pop();
    }
    let degree = coeffs.len().saturating_sub(1);
    if degree == 0 {
        return Vec::new();
    }
    if degree == 1 {
        let root = -coeffs[0] / coeffs[1];
        return if (0.0..=1.0).contains(&root) {
            vec![root]
        } else {
            Vec::new()
        };
    }
    let lead = coeffs[degree];
    let mut companion = Array2::<f64>::zeros((degree, degree));
    for i in 1..degree {
        companion[(i, i - 1)] = 1.0;
    }
    for i in 0..degree {
        companion[(i, degree - 1)] = -coeffs[i] / lead;
    }
    match companion.eigvals() {
        Ok(eigs) => eigs
            .iter()
            .filter(|z| z.im.abs() <= 1e-9)
            .map(|z| z.re)
            .filter(|r| (0.0..=1.0).contains(r))
            .collect(),
        Err(_) => Vec::new(),
    }
}

/// Max over u in [0, 1] of |p'(u)|, evaluated on a 1001-point uniform grid
/// plus the real roots of p'' (the interior extrema of p').
pub fn max_gradient_magnitude(coefficients: &[f64]) -> f64 {
    let dp = derivative(coefficients);
    if dp.is_empty() {
        return 0.0;
    }
    let ddp = derivative(&dp);
    let mut best = 0.0f64;
    for k in 0..=1000 {
        let u = k as f64 / 1000.0;
        best = best.max(evaluate_polynomial(&dp, u).abs());
    }
    for u in real_roots_in_unit_interval(&ddp) {
        best = best.max(evaluate_polynomial(&dp, u).abs());
    }
    best
}

/// Runs every parameter's sweep and extracts the two gradient magnitudes.
/// A parameter whose sweep values are constant scores exactly zero.
pub fn sensitivity_analysis(
    space: &DesignSpace,
    oracle: &dyn Oracle,
    settings: &SweepSettings,
) -> Result<(Vec<SweepResult>, Vec<ParameterSensitivity>), SensitivityError> {
    let mut sweeps = Vec::with_capacity(space.dimension());
    let mut sensitivities = Vec::with_capacity(space.dimension());
    for def in space.parameters() {
        let sweep = one_at_a_time_sweep(space, oracle, &def.name, settings)?;
        let gradient_of = |response: SweepResponse| -> Result<f64, SensitivityError> {
            let values = match response {
                SweepResponse::Theta => &sweep.theta_values,
                SweepResponse::Stiffness => &sweep.stiffness_values,
            };
            let valid: Vec<f64> = values.iter().filter_map(|v| *v).collect();
            if valid.windows(2).all(|w| w[0] == w[1]) {
                return Ok(0.0);
            }
            let poly = fit_sweep_polynomial(&sweep, response, settings.degree)?;
            Ok(max_gradient_magnitude(&poly))
        };
        sensitivities.push(ParameterSensitivity {
            parameter: def.name.clone(),
            theta_gradient: gradient_of(SweepResponse::Theta)?,
            stiffness_gradient: gradient_of(SweepResponse::Stiffness)?,
        });
        sweeps.push(sweep);
    }
    Ok((sweeps, sensitivities))
}

/// Normalizes the gradients, scores each parameter by the larger of its two
/// normalized sensitivities, retains the top `keep` and freezes the rest at
/// their medians. An exact score tie across the cut is an error: the choice
/// must be made explicitly.
pub fn rank_and_reduce(
    space: &DesignSpace,
    sensitivities: &[ParameterSensitivity],
    keep: usize,
) -> Result<(DesignSpace, SensitivityReport), SensitivityError> {
    let d = space.dimension();
    if keep > d || keep == 0 {
        return Err(SensitivityError::KeepTooLarge { keep, dimension: d });
    }
    let theta_max = sensitivities
        .iter()
        .map(|s| s.theta_gradient)
        .fold(0.0f64, f64::max);
    let stiffness_max = sensitivities
        .iter()
        .map(|s| s.stiffness_gradient)
        .fold(0.0f64, f64::max);
    let normalize = |v: f64, max: f64| if max > 0.0 { v / max } else { 0.0 };

    let mut entries: Vec<SensitivityEntry> = sensitivities
        .iter()
        .map(|s| {
            let theta = normalize(s.theta_gradient, theta_max);
            let stiffness = normalize(s.stiffness_gradient, stiffness_max);
            SensitivityEntry {
                parameter: s.parameter.clone(),
                theta_sensitivity: theta,
                stiffness_sensitivity: stiffness,
                score: theta.max(stiffness),
                retained: false,
            }
        })
        .collect();
    entries.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap());
    if keep < d && entries[keep - 1].score == entries[keep].score {
        return Err(SensitivityError::TieAtCut {
            keep,
            next: keep + 1,
            score: entries[keep].score,
        });
    }
    for e in entries.iter_mut().take(keep) {
        e.retained = true;
    }
    let retained: Vec<String> = entries
        .iter()
        .filter(|e| e.retained)
        .map(|e| e.parameter.clone())
        .collect();

    // Reduced space keeps the original declaration order; constraints get
    // frozen parameters substituted into their bound.
    let mut kept_defs: Vec<ParameterDef> = Vec::with_capacity(keep);
    let mut frozen: Vec<(String, f64)> = Vec::new();
    for def in space.parameters() {
        if retained.iter().any(|r| r == &def.name) {
            kept_defs.push(def.clone());
        } else {
            frozen.push((def.name.clone(), def.median()));
        }
    }
    let mut constraints = Vec::new();
    for (index, c) in space.constraints().iter().enumerate() {
        let mut coefficients = Vec::with_capacity(keep);
        let mut bound = c.bound;
        for (coeff, def) in c.coefficients.iter().zip(space.parameters()) {
            if retained.iter().any(|r| r == &def.name) {
                coefficients.push(*coeff);
            } else {
                bound -= coeff * def.median();
            }
        }
        if coefficients.iter().all(|&a| a == 0.0) {
            // Fully frozen: the constraint is either vacuous or violated.
            if 0.0 < bound {
                continue;
            }
            return Err(SensitivityError::ReductionInfeasible {
                index,
                lhs: 0.0,
                bound,
            });
        }
        constraints.push(StrictLinearConstraint::new(coefficients, bound));
    }
    let reduced = DesignSpace::new(kept_defs, constraints)?;
    let report = SensitivityReport {
        entries,
        retained,
        frozen,
    };
    Ok((reduced, report))
}

/// Sweep curve as CSV (fraction, physical value, theta, k_o); gaps print as
/// empty cells.
pub fn sweep_to_csv(space: &DesignSpace, sweep: &SweepResult) -> String {
    let def = space
        .parameters()
        .iter()
        .find(|p| p.name == sweep.parameter)
        .expect("sweep parameter belongs to the space");
    let mut out = format!("fraction,{},theta,k_o\n", sweep.parameter);
    for (k, &fraction) in sweep.fractions.iter().enumerate() {
        let value = def.lower + fraction * def.range();
        let theta = sweep.theta_values[k].map(|v| v.to_string()).unwrap_or_default();
        let ko = sweep.stiffness_values[k]
            .map(|v| v.to_string())
            .unwrap_or_default();
        let _ = writeln!(out, "{fraction},{value},{theta},{ko}");
    }
    out
}
