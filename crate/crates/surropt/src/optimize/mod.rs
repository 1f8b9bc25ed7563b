//! Constrained maximization of the out-of-plane stiffness.
//!
//! The objective k_o(x) = F(x) / (U(x) + eps) is assembled from the fitted
//! metamodel triple and maximized subject to an equality constraint on the
//! unobstructed bending angle, the design box, and the space's strict linear
//! constraints. Strict inequalities are relaxed to non-strict with a fixed
//! interior margin of 1e-6 of each constraint expression's span over the
//! box, since a smooth solver cannot honour open sets; the documented bias
//! is toward the interior. Maximization runs as minimization of -k_o in
//! normalized coordinates, where the box is the unit cube and tolerances
//! are stated.

pub mod nlp;
pub mod qp;
pub mod sqp;

use std::fmt::Write as _;

use thiserror::Error;

use crate::design_space::{DesignPoint, DesignSpace, DesignSpaceError};
use crate::surrogate::{RbfSurrogate, SurrogateSet};
use nlp::{EqualityConstraint, LinearInequality, NonlinearProgram, ScalarFunction};
use sqp::{IterationRecord, SqpError, SqpSettings};

/// Default auxiliary denominator term, millimetres.
pub const DEFAULT_EPSILON: f64 = 1.0;

/// Interior-margin fraction applied when relaxing strict inequalities.
pub const STRICT_MARGIN_FRACTION: f64 = 1e-6;

/// Relative tolerance on the bending-angle equality at convergence.
pub const ANGLE_TOLERANCE_FRACTION: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum OptimizeError {
    #[error(transparent)]
    Space(#[from] DesignSpaceError),
    #[error(transparent)]
    Solver(#[from] SqpError),
    #[error("epsilon must be positive, got {0}")]
    BadEpsilon(f64),
    #[error("target angle inputs must be positive (angle {angle}, gripper units {gripper_units}, model units {model_units})")]
    BadTargetAngle {
        angle: f64,
        gripper_units: u32,
        model_units: u32,
    },
    #[error("design space does not match the space the models were fitted on")]
    SpaceMismatch,
    #[error("starting point is infeasible")]
    InfeasibleStart,
    #[error("denominator U + eps = {0} is not positive at this point (surrogate pole)")]
    Pole(f64),
    #[error("no start converged; per-start diagnostics:\n{}", format_diagnostics(.0))]
    NoStartConverged(Vec<(usize, String)>),
}

fn format_diagnostics(diags: &[(usize, String)]) -> String {
    diags
        .iter()
        .map(|(i, m)| format!("  start {i}: {m}"))
        .collect::<Vec<_>>()
        .join("\n")
}

/// The stiffness objective bundle: the three fitted models, the denominator
/// regularizer, and the required bending angle.
#[derive(Debug, Clone)]
pub struct StiffnessObjective {
    pub models: SurrogateSet,
    pub epsilon: f64,
    pub target_angle: f64,
}

impl StiffnessObjective {
    pub fn new(
        models: SurrogateSet,
        epsilon: f64,
        target_angle: f64,
    ) -> Result<Self, OptimizeError> {
        if epsilon.is_nan() || epsilon <= 0.0 {
            return Err(OptimizeError::BadEpsilon(epsilon));
        }
        Ok(Self {
            models,
            epsilon,
            target_angle,
        })
    }

    pub fn space(&self) -> &DesignSpace {
        self.models.space()
    }

    /// k_o = F(x) / (U(x) + eps), in N/mm.
    pub fn stiffness(&self, x: &DesignPoint) -> Result<f64, OptimizeError> {
        let force = self.models.force.predict(x);
        let denominator = self.models.displacement.predict(x) + self.epsilon;
        if denominator <= 0.0 {
            return Err(OptimizeError::Pole(denominator));
        }
        Ok(force / denominator)
    }

    /// Quotient-rule gradient of the stiffness, physical units.
    pub fn stiffness_gradient(&self, x: &DesignPoint) -> Result<Vec<f64>, OptimizeError> {
        let force = self.models.force.predict(x);
        let denominator = self.models.displacement.predict(x) + self.epsilon;
        if denominator <= 0.0 {
            return Err(OptimizeError::Pole(denominator));
        }
        let grad_force = self.models.force.gradient(x);
        let grad_disp = self.models.displacement.gradient(x);
        Ok(grad_force
            .iter()
            .zip(&grad_disp)
            .map(|(df, du)| (df * denominator - force * du) / (denominator * denominator))
            .collect())
    }
}

/// Required model bending angle: `total_angle` degrees on the full gripper,
/// scaled by the unit-count ratio to the simulated model, in radians.
pub fn target_angle(
    total_angle_deg: f64,
    gripper_units: u32,
    model_units: u32,
) -> Result<f64, OptimizeError> {
    if total_angle_deg.is_nan() || total_angle_deg <= 0.0 || gripper_units == 0 || model_units == 0 {
        return Err(OptimizeError::BadTargetAngle {
            angle: total_angle_deg,
            gripper_units,
            model_units,
        });
    }
    Ok(total_angle_deg.to_radians() * model_units as f64 / gripper_units as f64)
}

/// Solver configuration; tolerances are stated on the minimization of -k_o
/// in normalized coordinates.
#[derive(Debug, Clone, Copy)]
pub struct OptimizerSettings {
    pub max_iterations: usize,
    pub max_line_search: usize,
    pub stationarity_tol: f64,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            max_line_search: 40,
            stationarity_tol: 1e-6,
        }
    }
}

/// Outcome of one constrained maximization.
#[derive(Debug, Clone)]
pub struct OptimizationResult {
    pub x_star: DesignPoint,
    /// k_o at the optimum, N/mm.
    pub objective_value: f64,
    /// |theta(x*) - target|, radians.
    pub constraint_residual: f64,
    pub kkt_stationarity: f64,
    /// Parameters resting on a box bound, e.g. "T_A at lower".
    pub active_bounds: Vec<String>,
    pub iterations: usize,
    pub starts_tried: usize,
    pub converged: bool,
    pub message: String,
    pub trace: Vec<IterationRecord>,
}

impl OptimizationResult {
    pub fn to_csv(&self, space: &DesignSpace) -> String {
        let mut header = String::new();
        for p in space.parameters() {
            let _ = write!(header, "{},", p.name);
        }
        header.push_str("k_o,theta_residual,stationarity,iterations,starts,converged\n");
        let mut row = String::new();
        for v in self.x_star.values() {
            let _ = write!(row, "{v},");
        }
        let _ = writeln!(
            row,
            "{},{},{},{},{},{}",
            self.objective_value,
            self.constraint_residual,
            self.kkt_stationarity,
            self.iterations,
            self.starts_tried,
            self.converged
        );
        header + &row
    }

    pub fn to_report(&self, space: &DesignSpace, target: f64) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{}",
            if self.converged {
                "converged"
            } else {
                "did not converge"
            }
        );
        if !self.converged {
            let _ = writeln!(out, "  {}", self.message);
        }
        for (p, v) in space.parameters().iter().zip(self.x_star.values()) {
            let _ = writeln!(out, "  {} = {:.4} {}", p.name, v, p.unit);
        }
        let _ = writeln!(out, "  k_o = {:.6} N/mm", self.objective_value);
        let _ = writeln!(
            out,
            "  |theta - {:.4}| = {:.3e} rad",
            target, self.constraint_residual
        );
        let _ = writeln!(out, "  stationarity = {:.3e}", self.kkt_stationarity);
        if self.active_bounds.is_empty() {
            let _ = writeln!(out, "  active bounds: none");
        } else {
            let _ = writeln!(out, "  active bounds: {}", self.active_bounds.join(", "));
        }
        let _ = writeln!(
            out,
            "  iterations = {}, starts tried = {}",
            self.iterations, self.starts_tried
        );
        out
    }

    pub fn trace_to_csv(&self) -> String {
        let mut out = String::from(
            "iteration,objective,constraint_violation,penalty,merit_before,merit_after,step_length,stationarity\n",
        );
        for r in &self.trace {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.iteration,
                r.objective,
                r.constraint_violation,
                r.penalty,
                r.merit_before,
                r.merit_after,
                r.step_length,
                r.stationarity
            );
        }
        out
    }
}

struct NegatedStiffness<'a> {
    force: &'a RbfSurrogate,
    displacement: &'a RbfSurrogate,
    epsilon: f64,
}

impl ScalarFunction for NegatedStiffness<'_> {
    fn value(&self, u: &[f64]) -> f64 {
        let force = self.force.predict_normalized(u);
        let denominator = self.displacement.predict_normalized(u) + self.epsilon;
        if denominator <= 0.0 {
            // Pole under extrapolation: reject via the line search.
            return f64::INFINITY;
        }
        -(force / denominator)
    }

    fn gradient(&self, u: &[f64]) -> Vec<f64> {
        let force = self.force.predict_normalized(u);
        let denominator = self.displacement.predict_normalized(u) + self.epsilon;
        if denominator <= 0.0 {
            return vec![0.0; u.len()];
        }
        let grad_force = self.force.gradient_normalized(u);
        let grad_disp = self.displacement.gradient_normalized(u);
        grad_force
            .iter()
            .zip(&grad_disp)
            .map(|(df, du)| -(df * denominator - force * du) / (denominator * denominator))
            .collect()
    }
}

struct NormalizedModel<'a> {
    model: &'a RbfSurrogate,
}

impl ScalarFunction for NormalizedModel<'_> {
    fn value(&self, u: &[f64]) -> f64 {
        self.model.predict_normalized(u)
    }

    fn gradient(&self, u: &[f64]) -> Vec<f64> {
        self.model.gradient_normalized(u)
    }
}

/// The space's strict constraints mapped to normalized coordinates and
/// relaxed by the interior margin.
fn margined_inequalities(space: &DesignSpace) -> Vec<LinearInequality> {
    space
        .constraints()
        .iter()
        .map(|c| {
            let mut coefficients = Vec::with_capacity(space.dimension());
            let mut offset = 0.0;
            for (a, p) in c.coefficients.iter().zip(space.parameters()) {
                coefficients.push(a * p.range());
                offset += a * p.lower;
            }
            let margin = STRICT_MARGIN_FRACTION * c.span(space);
            LinearInequality {
                coefficients,
                bound: c.bound - offset - margin,
            }
        })
        .collect()
}

/// Pulls a point just off the margined feasible set back inside; Sobol
/// samples are feasible for the strict constraints but can sit within the
/// relaxation margin of a boundary.
fn nudge_inside(u: &mut [f64], inequalities: &[LinearInequality]) {
    for _ in 0..3 {
        let mut moved = false;
        for ineq in inequalities {
            let v = ineq.violation(u);
            if v > 0.0 {
                let norm2: f64 = ineq.coefficients.iter().map(|a| a * a).sum();
                if norm2 > 0.0 {
                    for (ui, a) in u.iter_mut().zip(&ineq.coefficients) {
                        *ui -= a * (v + 1e-12) / norm2;
                        *ui = ui.clamp(0.0, 1.0);
                    }
                    moved = true;
                }
            }
        }
        if !moved {
            return;
        }
    }
}

/// Maximizes k_o subject to theta = target from one starting point.
pub fn solve(
    objective: &StiffnessObjective,
    space: &DesignSpace,
    x0: &DesignPoint,
    settings: &OptimizerSettings,
) -> Result<OptimizationResult, OptimizeError> {
    if space.parameters() != objective.space().parameters() {
        return Err(OptimizeError::SpaceMismatch);
    }
    if !space.is_feasible(x0) {
        return Err(OptimizeError::InfeasibleStart);
    }
    objective.stiffness(x0)?;

    let negated = NegatedStiffness {
        force: &objective.models.force,
        displacement: &objective.models.displacement,
        epsilon: objective.epsilon,
    };
    let theta = NormalizedModel {
        model: &objective.models.theta,
    };
    let inequalities = margined_inequalities(space);
    let d = space.dimension();
    let problem = NonlinearProgram {
        objective: &negated,
        equality: Some(EqualityConstraint {
            function: &theta,
            target: objective.target_angle,
            tolerance: ANGLE_TOLERANCE_FRACTION * objective.target_angle.abs().max(1e-12),
        }),
        lower: vec![0.0; d],
        upper: vec![1.0; d],
        linear_inequalities: inequalities,
    };
    let mut u0 = space.normalize(x0)?;
    nudge_inside(&mut u0, &problem.linear_inequalities);

    let sqp_settings = SqpSettings {
        max_iterations: settings.max_iterations,
        max_line_search: settings.max_line_search,
        stationarity_tol: settings.stationarity_tol,
        initial_penalty: 1.0,
    };
    let outcome = sqp::minimize(&problem, &u0, &sqp_settings)?;

    let x_star = space.denormalize_unchecked(&outcome.x);
    let mut active_bounds = Vec::new();
    for &i in &outcome.active_lower {
        active_bounds.push(format!("{} at lower", space.parameters()[i].name));
    }
    for &i in &outcome.active_upper {
        active_bounds.push(format!("{} at upper", space.parameters()[i].name));
    }
    let message = if outcome.converged {
        outcome.message.clone()
    } else {
        format!(
            "bending-angle equality theta = {:.4} rad: {}",
            objective.target_angle, outcome.message
        )
    };
    Ok(OptimizationResult {
        x_star,
        objective_value: -outcome.objective,
        constraint_residual: outcome.constraint_residual,
        kkt_stationarity: outcome.stationarity,
        active_bounds,
        iterations: outcome.iterations,
        starts_tried: 1,
        converged: outcome.converged,
        message,
        trace: outcome.trace,
    })
}

/// Runs `solve` from the median point plus `starts` feasible Sobol starts
/// (stream offset by `seed`), returning the best converged result; ties go
/// to the earliest start. Fails aggregately when nothing converges.
pub fn multistart(
    objective: &StiffnessObjective,
    space: &DesignSpace,
    starts: usize,
    seed: u64,
    settings: &OptimizerSettings,
) -> Result<OptimizationResult, OptimizeError> {
    let mut points = vec![space.median_point()];
    if starts > 0 {
        points.extend(space.sobol_sample(starts, 1 + seed)?);
    }
    let mut best: Option<OptimizationResult> = None;
    let mut diagnostics = Vec::new();
    for (index, x0) in points.iter().enumerate() {
        match solve(objective, space, x0, settings) {
            Ok(result) if result.converged => {
                let better = best
                    .as_ref()
                    .map(|b| result.objective_value > b.objective_value)
                    .unwrap_or(true);
                if better {
                    best = Some(result);
                }
            }
            Ok(result) => diagnostics.push((index, result.message)),
            Err(e) => diagnostics.push((index, e.to_string())),
        }
    }
    match best {
        Some(mut result) => {
            result.starts_tried = points.len();
            Ok(result)
        }
        None => Err(OptimizeError::NoStartConverged(diagnostics)),
    }
}
