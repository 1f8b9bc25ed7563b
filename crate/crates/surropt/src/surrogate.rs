//! Thin-plate-spline RBF metamodels with a linear polynomial tail.
//!
//! A fitted model interpolates (or, with smoothing, approximates) one scalar
//! response over the design space:
//!
//! ```text
//! f(u) = p_0 + p · u + sum_j w_j * phi(|u - c_j|),   phi(r) = r^2 ln r
//! ```
//!
//! Distances are taken in normalized unit-cube coordinates, not physical
//! units: the parameter ranges differ by more than an order of magnitude and
//! an isotropic kernel in millimetres would drown out the narrow axes. The
//! kernel is conditionally positive definite of order 2, so the linear tail
//! and the compatibility conditions `sum w_j = 0`, `sum w_j c_j = 0` close
//! the square saddle system
//!
//! ```text
//! [ Phi + lambda I   K ] [w]   [y]
//! [ K^T              0 ] [p] = [0]
//! ```
//!
//! solved by a dense symmetric-indefinite factorization with pivoting.
//! Every training sample is a kernel centre (collocation), so with
//! lambda = 0 the model reproduces its training targets.
//!
//! # Model files
//!
//! `save`/`load` use a flat text format: a header (kernel kind, smoothing,
//! dimension, centre count, parameter ranges, constraints, target), then one
//! `center` line per centre, one `weight` line per centre, and a final `poly`
//! line. All floats carry 17 significant digits so a reloaded model predicts
//! bitwise identically.

use std::fmt::Write as _;
use std::io::Read;
use std::path::Path;

use ndarray::{Array1, Array2};
use thiserror::Error;

use crate::design_space::{DesignPoint, DesignSpace, DesignSpaceError, ParameterDef, StrictLinearConstraint};
use crate::linalg::{svd_rank, SaddleFactorization};
use crate::oracle::SampleRecord;

/// Condition estimate above which `fit` recommends smoothing.
pub const CONDITION_WARNING: f64 = 1e12;

/// Normalized distance below which two centres count as duplicates.
pub const DUPLICATE_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum SurrogateError {
    #[error(transparent)]
    Space(#[from] DesignSpaceError),
    #[error("kernel radius must be nonnegative, got {0}")]
    NegativeRadius(f64),
    #[error("smoothing must be nonnegative, got {0}")]
    NegativeSmoothing(f64),
    #[error("need at least {needed} samples for dimension {dimension}, got {got}")]
    TooFewSamples {
        needed: usize,
        dimension: usize,
        got: usize,
    },
    #[error("centres {first} and {second} coincide within {tolerance:e} (normalized)")]
    NearDuplicateCenters {
        first: usize,
        second: usize,
        tolerance: f64,
    },
    #[error("degenerate geometry: centres span a hyperplane (polynomial tail rank {rank} < {needed})")]
    DegenerateGeometry { rank: usize, needed: usize },
    #[error("linear solver failed ({message}); condition estimate {condition:e}")]
    SolverFailure { message: String, condition: f64 },
    #[error("compatibility residual {residual:e} exceeds {limit:e}; system too ill-conditioned")]
    CompatibilityViolation { residual: f64, limit: f64 },
    #[error("model file parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// Kernel families. Only the thin-plate spline is implemented; the
/// enumeration is the extension point for others.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    ThinPlateSpline,
}

impl KernelKind {
    pub fn name(&self) -> &'static str {
        match self {
            KernelKind::ThinPlateSpline => "thin_plate_spline",
        }
    }

    /// phi(r) = r^2 ln r, continuously extended by phi(0) = 0.
    pub fn value(&self, r: f64) -> Result<f64, SurrogateError> {
        if r < 0.0 {
            return Err(SurrogateError::NegativeRadius(r));
        }
        Ok(tps(r))
    }

    /// g(r) with grad phi(|x - c|) = g(r) (x - c); g(r) = 2 ln r + 1 for
    /// r > 0 and 0 at r = 0, where the full contribution r g(r) vanishes.
    pub fn gradient_factor(&self, r: f64) -> Result<f64, SurrogateError> {
        if r < 0.0 {
            return Err(SurrogateError::NegativeRadius(r));
        }
        Ok(tps_gradient_factor(r))
    }
}

#[inline]
fn tps(r: f64) -> f64 {
    if r == 0.0 {
        0.0
    } else {
        r * r * r.ln()
    }
}

#[inline]
fn tps_gradient_factor(r: f64) -> f64 {
    if r == 0.0 {
        0.0
    } else {
        2.0 * r.ln() + 1.0
    }
}

/// Kernel selection plus ridge smoothing on the kernel block. Zero smoothing
/// means exact interpolation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub smoothing: f64,
}

impl KernelSpec {
    pub fn thin_plate_spline() -> Self {
        Self {
            kind: KernelKind::ThinPlateSpline,
            smoothing: 0.0,
        }
    }

    pub fn with_smoothing(mut self, smoothing: f64) -> Self {
        self.smoothing = smoothing;
        self
    }
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self::thin_plate_spline()
    }
}

/// Which response column a model predicts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Displacement,
    Force,
    Theta,
}

impl Target {
    pub const ALL: [Target; 3] = [Target::Displacement, Target::Force, Target::Theta];

    pub fn column_name(&self) -> &'static str {
        match self {
            Target::Displacement => "U",
            Target::Force => "F",
            Target::Theta => "theta",
        }
    }

    pub fn of(&self, record: &SampleRecord) -> f64 {
        match self {
            Target::Displacement => record.displacement,
            Target::Force => record.force,
            Target::Theta => record.theta,
        }
    }

    fn from_name(name: &str) -> Option<Self> {
        match name {
            "U" => Some(Target::Displacement),
            "F" => Some(Target::Force),
            "theta" => Some(Target::Theta),
            _ => None,
        }
    }
}

/// A fitted RBF metamodel. Immutable; predict and gradient may be called
/// concurrently.
#[derive(Debug, Clone)]
pub struct RbfSurrogate {
    space: DesignSpace,
    target: Target,
    kernel: KernelSpec,
    /// Normalized centres, n x d.
    centers: Array2<f64>,
    weights: Vec<f64>,
    /// p_0 followed by the d linear coefficients, in normalized coordinates.
    poly: Vec<f64>,
}

impl RbfSurrogate {
    pub fn space(&self) -> &DesignSpace {
        &self.space
    }

    pub fn target(&self) -> Target {
        self.target
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn centers(&self) -> &Array2<f64> {
        &self.centers
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn poly(&self) -> &[f64] {
        &self.poly
    }

    /// Prediction at a physical point. Points outside the box extrapolate;
    /// that is permitted but traced.
    pub fn predict(&self, point: &DesignPoint) -> f64 {
        let u = self.space.normalize_unchecked(point);
        if u.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            log::trace!("extrapolating outside the design box at {:?}", point.values());
        }
        self.predict_normalized(&u)
    }

    pub fn predict_normalized(&self, u: &[f64]) -> f64 {
        let d = self.space.dimension();
        let mut acc = self.poly[0];
        for (i, &ui) in u.iter().enumerate() {
            acc += self.poly[1 + i] * ui;
        }
        for (j, &w) in self.weights.iter().enumerate() {
            let row = self.centers.row(j);
            let mut r2 = 0.0;
            for i in 0..d {
                let t = u[i] - row[i];
                r2 += t * t;
            }
            acc += w * tps(r2.sqrt());
        }
        acc
    }

    /// Analytic gradient in physical units (per mm), including the
    /// 1/(upper - lower) normalization Jacobian.
    pub fn gradient(&self, point: &DesignPoint) -> Vec<f64> {
        let u = self.space.normalize_unchecked(point);
        let mut g = self.gradient_normalized(&u);
        for (gi, p) in g.iter_mut().zip(self.space.parameters()) {
            *gi /= p.range();
        }
        g
    }

    /// Gradient with respect to the normalized coordinates.
    pub fn gradient_normalized(&self, u: &[f64]) -> Vec<f64> {
        let d = self.space.dimension();
        let mut g: Vec<f64> = self.poly[1..].to_vec();
        for (j, &w) in self.weights.iter().enumerate() {
            let row = self.centers.row(j);
            let mut r2 = 0.0;
            for i in 0..d {
                let t = u[i] - row[i];
                r2 += t * t;
            }
            let r = r2.sqrt();
            if r == 0.0 {
                continue; // r * g(r) -> 0 at the centre
            }
            let factor = w * tps_gradient_factor(r);
            for i in 0..d {
                g[i] += factor * (u[i] - row[i]);
            }
        }
        g
    }

    /// Serializes to the flat text model format.
    pub fn to_model_string(&self) -> String {
        let mut out = String::new();
        out.push_str("surropt-rbf v1\n");
        let _ = writeln!(out, "kernel {}", self.kernel.kind.name());
        let _ = writeln!(out, "smoothing {}", fmt17(self.kernel.smoothing));
        let _ = writeln!(out, "dimension {}", self.space.dimension());
        let _ = writeln!(out, "count {}", self.weights.len());
        for p in self.space.parameters() {
            let _ = writeln!(
                out,
                "parameter {} {} {} {}",
                p.name,
                fmt17(p.lower),
                fmt17(p.upper),
                p.unit
            );
        }
        for c in self.space.constraints() {
            let coeffs: Vec<String> = c.coefficients.iter().map(|&v| fmt17(v)).collect();
            let _ = writeln!(out, "constraint {} {}", coeffs.join(" "), fmt17(c.bound));
        }
        let _ = writeln!(out, "target {}", self.target.column_name());
        for j in 0..self.weights.len() {
            let row: Vec<String> = self.centers.row(j).iter().map(|&v| fmt17(v)).collect();
            let _ = writeln!(out, "center {}", row.join(" "));
        }
        for w in &self.weights {
            let _ = writeln!(out, "weight {}", fmt17(*w));
        }
        let poly: Vec<String> = self.poly.iter().map(|&v| fmt17(v)).collect();
        let _ = writeln!(out, "poly {}", poly.join(" "));
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), SurrogateError> {
        crate::write_atomic(path, self.to_model_string().as_bytes()).map_err(|source| {
            SurrogateError::Io {
                path: path.display().to_string(),
                source,
            }
        })
    }

    pub fn from_model_string(text: &str) -> Result<Self, SurrogateError> {
        Parser::new(text).parse()
    }

    pub fn load(path: &Path) -> Result<Self, SurrogateError> {
        let mut text = String::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_string(&mut text))
            .map_err(|source| SurrogateError::Io {
                path: path.display().to_string(),
                source,
            })?;
        Self::from_model_string(&text)
    }
}

fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// The three metamodels fitted over shared centres.
#[derive(Debug, Clone)]
pub struct SurrogateSet {
    pub displacement: RbfSurrogate,
    pub force: RbfSurrogate,
    pub theta: RbfSurrogate,
}

impl SurrogateSet {
    pub fn get(&self, target: Target) -> &RbfSurrogate {
        match target {
            Target::Displacement => &self.displacement,
            Target::Force => &self.force,
            Target::Theta => &self.theta,
        }
    }

    pub fn space(&self) -> &DesignSpace {
        self.displacement.space()
    }
}

/// Fits one model. See [`fit_triple`] for fitting all three responses off a
/// single factorization.
pub fn fit(
    space: &DesignSpace,
    samples: &[SampleRecord],
    target: Target,
    kernel: KernelSpec,
) -> Result<RbfSurrogate, SurrogateError> {
    let mut models = fit_targets(space, samples, &[target], kernel)?;
    Ok(models.pop().expect("one target requested"))
}

/// Fits the displacement, force and bending-angle models. All three share
/// the same centres and the same factorized saddle matrix.
pub fn fit_triple(
    space: &DesignSpace,
    samples: &[SampleRecord],
    kernel: KernelSpec,
) -> Result<SurrogateSet, SurrogateError> {
    let mut models = fit_targets(space, samples, &Target::ALL, kernel)?;
    let theta = models.pop().unwrap();
    let force = models.pop().unwrap();
    let displacement = models.pop().unwrap();
    Ok(SurrogateSet {
        displacement,
        force,
        theta,
    })
}

fn fit_targets(
    space: &DesignSpace,
    samples: &[SampleRecord],
    targets: &[Target],
    kernel: KernelSpec,
) -> Result<Vec<RbfSurrogate>, SurrogateError> {
    if kernel.smoothing < 0.0 {
        return Err(SurrogateError::NegativeSmoothing(kernel.smoothing));
    }
    let d = space.dimension();
    let n = samples.len();
    if n < d + 2 {
        return Err(SurrogateError::TooFewSamples {
            needed: d + 2,
            dimension: d,
            got: n,
        });
    }

    let mut centers = Array2::<f64>::zeros((n, d));
    for (j, s) in samples.iter().enumerate() {
        let u = space.normalize(&s.point)?;
        for (i, v) in u.into_iter().enumerate() {
            centers[(j, i)] = v;
        }
    }

    check_duplicates(&centers)?;

    // Polynomial unisolvency: the tail matrix [1 | centres] must have full
    // column rank or the saddle system is singular.
    let mut tail = Array2::<f64>::zeros((n, d + 1));
    for j in 0..n {
        tail[(j, 0)] = 1.0;
        for i in 0..d {
            tail[(j, 1 + i)] = centers[(j, i)];
        }
    }
    let rank = svd_rank(&tail);
    if rank < d + 1 {
        return Err(SurrogateError::DegenerateGeometry {
            rank,
            needed: d + 1,
        });
    }

    let m = n + d + 1;
    let mut a = Array2::<f64>::zeros((m, m));
    for j in 0..n {
        for k in j..n {
            let mut r2 = 0.0;
            for i in 0..d {
                let t = centers[(j, i)] - centers[(k, i)];
                r2 += t * t;
            }
            let v = tps(r2.sqrt());
            a[(j, k)] = v;
            a[(k, j)] = v;
        }
        a[(j, j)] += kernel.smoothing;
        a[(j, n)] = 1.0;
        a[(n, j)] = 1.0;
        for i in 0..d {
            a[(j, n + 1 + i)] = centers[(j, i)];
            a[(n + 1 + i, j)] = centers[(j, i)];
        }
    }

    let factorization = SaddleFactorization::new(a).map_err(|e| SurrogateError::SolverFailure {
        message: e.to_string(),
        condition: f64::INFINITY,
    })?;
    let condition = factorization.condition_estimate();
    if condition > CONDITION_WARNING {
        log::warn!(
            "saddle system condition estimate {condition:.2e} exceeds {CONDITION_WARNING:.0e}; \
             consider smoothing > 0"
        );
    }

    let mut models = Vec::with_capacity(targets.len());
    for &target in targets {
        let mut rhs = Array1::<f64>::zeros(m);
        for (j, s) in samples.iter().enumerate() {
            rhs[j] = target.of(s);
        }
        let solution = factorization
            .solve(&rhs)
            .map_err(|e| SurrogateError::SolverFailure {
                message: e.to_string(),
                condition,
            })?;
        let weights: Vec<f64> = solution.iter().take(n).cloned().collect();
        let poly: Vec<f64> = solution.iter().skip(n).cloned().collect();
        let target_scale = rhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        verify_compatibility(&centers, &weights, target_scale)?;
        models.push(RbfSurrogate {
            space: space.clone(),
            target,
            kernel,
            centers: centers.clone(),
            weights,
            poly,
        });
    }
    Ok(models)
}

fn check_duplicates(centers: &Array2<f64>) -> Result<(), SurrogateError> {
    let n = centers.nrows();
    let d = centers.ncols();
    let tol2 = DUPLICATE_TOLERANCE * DUPLICATE_TOLERANCE;
    for j in 0..n {
        for k in (j + 1)..n {
            let mut r2 = 0.0;
            for i in 0..d {
                let t = centers[(j, i)] - centers[(k, i)];
                r2 += t * t;
            }
            if r2 < tol2 {
                return Err(SurrogateError::NearDuplicateCenters {
                    first: j,
                    second: k,
                    tolerance: DUPLICATE_TOLERANCE,
                });
            }
        }
    }
    Ok(())
}

/// Post-fit check of K^T w = 0 (zeroth and first moments of the weights).
/// The bound is 1e-8 * |w| plus a roundoff floor scaled to the targets, so
/// affine targets (where w itself is pure roundoff) pass.
fn verify_compatibility(
    centers: &Array2<f64>,
    weights: &[f64],
    target_scale: f64,
) -> Result<(), SurrogateError> {
    let d = centers.ncols();
    let wnorm = weights.iter().map(|w| w * w).sum::<f64>().sqrt();
    let limit = 1e-8 * wnorm + 1e-10 * (1.0 + target_scale);
    let sum: f64 = weights.iter().sum();
    let mut residual = sum.abs();
    for i in 0..d {
        let moment: f64 = weights
            .iter()
            .enumerate()
            .map(|(j, w)| w * centers[(j, i)])
            .sum();
        residual = residual.max(moment.abs());
    }
    if residual > limit {
        return Err(SurrogateError::CompatibilityViolation { residual, limit });
    }
    Ok(())
}

struct Parser<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str) -> Self {
        Self {
            lines: text.lines().enumerate(),
        }
    }

    fn next_line(&mut self) -> Result<(usize, &'a str), SurrogateError> {
        self.lines
            .next()
            .map(|(i, l)| (i + 1, l))
            .ok_or(SurrogateError::Parse {
                line: 0,
                message: "unexpected end of file".into(),
            })
    }

    fn expect_keyword(&mut self, keyword: &str) -> Result<(usize, Vec<&'a str>), SurrogateError> {
        let (line, text) = self.next_line()?;
        let mut fields = text.split_whitespace();
        match fields.next() {
            Some(k) if k == keyword => Ok((line, fields.collect())),
            other => Err(SurrogateError::Parse {
                line,
                message: format!("expected {keyword}, found {other:?}"),
            }),
        }
    }

    fn parse(mut self) -> Result<RbfSurrogate, SurrogateError> {
        let (line, header) = self.next_line()?;
        if header.trim() != "surropt-rbf v1" {
            return Err(SurrogateError::Parse {
                line,
                message: format!("unknown model header {header:?}"),
            });
        }
        let (line, kernel_fields) = self.expect_keyword("kernel")?;
        let kind = match kernel_fields.as_slice() {
            ["thin_plate_spline"] => KernelKind::ThinPlateSpline,
            other => {
                return Err(SurrogateError::Parse {
                    line,
                    message: format!("unknown kernel {other:?}"),
                })
            }
        };
        let smoothing = self.parse_scalar("smoothing")?;
        let dimension = self.parse_scalar("dimension")? as usize;
        let count = self.parse_scalar("count")? as usize;

        let mut parameters = Vec::with_capacity(dimension);
        for _ in 0..dimension {
            let (line, fields) = self.expect_keyword("parameter")?;
            if fields.len() < 3 {
                return Err(SurrogateError::Parse {
                    line,
                    message: "parameter needs name, lower, upper[, unit]".into(),
                });
            }
            let lower = parse_f64(fields[1], line)?;
            let upper = parse_f64(fields[2], line)?;
            let unit = fields.get(3..).map(|f| f.join(" ")).unwrap_or_default();
            parameters.push(ParameterDef::new(fields[0], lower, upper, &unit));
        }

        // Constraint lines are optional and precede the target line.
        let mut constraints = Vec::new();
        let target;
        loop {
            let (line, text) = self.next_line()?;
            let fields: Vec<&str> = text.split_whitespace().collect();
            match fields.first() {
                Some(&"constraint") => {
                    if fields.len() != dimension + 2 {
                        return Err(SurrogateError::Parse {
                            line,
                            message: format!(
                                "constraint needs {} coefficients plus bound",
                                dimension
                            ),
                        });
                    }
                    let mut values = Vec::with_capacity(dimension + 1);
                    for f in &fields[1..] {
                        values.push(parse_f64(f, line)?);
                    }
                    let bound = values.pop().unwrap();
                    constraints.push(StrictLinearConstraint::new(values, bound));
                }
                Some(&"target") => {
                    target = fields
                        .get(1)
                        .and_then(|n| Target::from_name(n))
                        .ok_or_else(|| SurrogateError::Parse {
                            line,
                            message: format!("unknown target in {fields:?}"),
                        })?;
                    break;
                }
                other => {
                    return Err(SurrogateError::Parse {
                        line,
                        message: format!("expected constraint or target, found {other:?}"),
                    })
                }
            }
        }

        let space = DesignSpace::new(parameters, constraints)?;

        let mut centers = Array2::<f64>::zeros((count, dimension));
        for j in 0..count {
            let (line, fields) = self.expect_keyword("center")?;
            if fields.len() != dimension {
                return Err(SurrogateError::Parse {
                    line,
                    message: format!("centre needs {dimension} coordinates"),
                });
            }
            for (i, f) in fields.iter().enumerate() {
                centers[(j, i)] = parse_f64(f, line)?;
            }
        }
        let mut weights = Vec::with_capacity(count);
        for _ in 0..count {
            weights.push(self.parse_scalar("weight")?);
        }
        let (line, fields) = self.expect_keyword("poly")?;
        if fields.len() != dimension + 1 {
            return Err(SurrogateError::Parse {
                line,
                message: format!("poly needs {} coefficients", dimension + 1),
            });
        }
        let poly = fields
            .iter()
            .map(|f| parse_f64(f, line))
            .collect::<Result<Vec<_>, _>>()?;

        Ok(RbfSurrogate {
            space,
            target,
            kernel: KernelSpec {
                kind,
                smoothing,
            },
            centers,
            weights,
            poly,
        })
    }

    fn parse_scalar(&mut self, keyword: &str) -> Result<f64, SurrogateError> {
        let (line, fields) = self.expect_keyword(keyword)?;
        match fields.as_slice() {
            [v] => parse_f64(v, line),
            _ => Err(SurrogateError::Parse {
                line,
                message: format!("{keyword} needs exactly one value"),
            }),
        }
    }
}

fn parse_f64(text: &str, line: usize) -> Result<f64, SurrogateError> {
    text.parse().map_err(|_| SurrogateError::Parse {
        line,
        message: format!("bad number {text:?}"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::Provenance;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unit_space(d: usize) -> DesignSpace {
        DesignSpace::new(
            (0..d)
                .map(|i| ParameterDef::new(&format!("u{i}"), 0.0, 1.0, ""))
                .collect(),
            vec![],
        )
        .unwrap()
    }

    fn samples_from<F: Fn(&[f64]) -> f64>(
        space: &DesignSpace,
        points: &[Vec<f64>],
        f: F,
    ) -> Vec<SampleRecord> {
        points
            .iter()
            .map(|u| {
                let y = f(u);
                SampleRecord {
                    point: space.denormalize(u).unwrap(),
                    displacement: y,
                    force: y,
                    theta: y,
                    provenance: Provenance::External,
                }
            })
            .collect()
    }

    fn random_points(d: usize, n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| (0..d).map(|_| rng.random_range(0.0..1.0)).collect())
            .collect()
    }

    #[test]
    fn kernel_reference_values() {
        let k = KernelKind::ThinPlateSpline;
        assert_eq!(k.value(0.0).unwrap(), 0.0);
        assert_eq!(k.value(1.0).unwrap(), 0.0);
        let e = std::f64::consts::E;
        assert!((k.value(e).unwrap() - e * e).abs() < 1e-12);
        assert!(k.value(-0.1).is_err());
    }

    #[test]
    fn kernel_gradient_factor_reference_values() {
        let k = KernelKind::ThinPlateSpline;
        assert_eq!(k.gradient_factor(0.0).unwrap(), 0.0);
        assert!((k.gradient_factor(1.0).unwrap() - 1.0).abs() < 1e-15);
        let r = (-0.5f64).exp();
        assert!(k.gradient_factor(r).unwrap().abs() < 1e-15);
        assert!(k.gradient_factor(-1.0).is_err());
    }

    #[test]
    fn kernel_gradient_matches_finite_differences() {
        // Full gradient of phi(|x - c|) against central differences.
        let c = [0.3, 0.7, 0.2, 0.55];
        let x = [0.9, 0.15, 0.6, 0.4];
        let phi = |x: &[f64]| {
            let r2: f64 = x.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum();
            tps(r2.sqrt())
        };
        let r: f64 = x
            .iter()
            .zip(&c)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let g = tps_gradient_factor(r);
        let h = 1e-5;
        for i in 0..4 {
            let mut xp = x;
            let mut xm = x;
            xp[i] += h;
            xm[i] -= h;
            let fd = (phi(&xp) - phi(&xm)) / (2.0 * h);
            let analytic = g * (x[i] - c[i]);
            assert!(
                (analytic - fd).abs() <= 1e-6 * fd.abs().max(1.0),
                "component {i}: analytic {analytic}, fd {fd}"
            );
        }
    }

    #[test]
    fn linear_targets_are_reproduced_by_the_tail() {
        let space = unit_space(4);
        let f = |u: &[f64]| 3.0 + 2.0 * u[0];
        let pts = random_points(4, 6, 9);
        let samples = samples_from(&space, &pts, f);
        let model = fit(&space, &samples, Target::Theta, KernelSpec::default()).unwrap();
        // Weights collapse onto the polynomial tail.
        let wnorm: f64 = model.weights().iter().map(|w| w * w).sum::<f64>().sqrt();
        let pnorm: f64 = model.poly().iter().map(|p| p * p).sum::<f64>().sqrt();
        assert!(wnorm <= 1e-8 * pnorm, "wnorm {wnorm}, pnorm {pnorm}");
        for u in random_points(4, 100, 10) {
            let x = space.denormalize(&u).unwrap();
            assert!(
                (model.predict(&x) - f(&u)).abs() <= 1e-8,
                "prediction off at {u:?}"
            );
        }
    }

    #[test]
    fn constant_targets_predict_constant() {
        let space = unit_space(3);
        let pts = random_points(3, 8, 2);
        let samples = samples_from(&space, &pts, |_| 5.0);
        let model = fit(&space, &samples, Target::Force, KernelSpec::default()).unwrap();
        for u in random_points(3, 50, 3) {
            let x = space.denormalize(&u).unwrap();
            assert!((model.predict(&x) - 5.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn interpolation_is_exact_at_centres() {
        let space = unit_space(4);
        let f = |u: &[f64]| 1.0 + (3.0 * u[0]).sin() + u[1] * u[2] - 0.5 * u[3] * u[3];
        let pts = random_points(4, 60, 4);
        let samples = samples_from(&space, &pts, f);
        let model = fit(&space, &samples, Target::Displacement, KernelSpec::default()).unwrap();
        let ymax = samples
            .iter()
            .map(|s| s.displacement.abs())
            .fold(0.0f64, f64::max);
        for s in &samples {
            let err = (model.predict(&s.point) - s.displacement).abs();
            assert!(err <= 1e-8 * (1.0 + ymax), "centre residual {err}");
        }
    }

    #[test]
    fn too_few_samples_is_an_error() {
        let space = unit_space(4);
        let pts = random_points(4, 5, 5);
        let samples = samples_from(&space, &pts, |u| u[0]);
        assert!(matches!(
            fit(&space, &samples, Target::Theta, KernelSpec::default()),
            Err(SurrogateError::TooFewSamples { needed: 6, .. })
        ));
    }

    #[test]
    fn coplanar_centres_are_degenerate() {
        let space = unit_space(4);
        let mut pts = random_points(4, 12, 6);
        for p in &mut pts {
            p[2] = 0.5;
        }
        let samples = samples_from(&space, &pts, |u| u[0] + u[1]);
        assert!(matches!(
            fit(&space, &samples, Target::Theta, KernelSpec::default()),
            Err(SurrogateError::DegenerateGeometry { .. })
        ));
    }

    #[test]
    fn duplicate_centres_are_rejected() {
        let space = unit_space(4);
        let mut pts = random_points(4, 10, 7);
        pts[4] = pts[1].clone();
        let samples = samples_from(&space, &pts, |u| u[0]);
        assert!(matches!(
            fit(&space, &samples, Target::Theta, KernelSpec::default()),
            Err(SurrogateError::NearDuplicateCenters { first: 1, second: 4, .. })
        ));
    }

    #[test]
    fn smoothing_shrinks_kernel_weights() {
        let space = unit_space(4);
        let f = |u: &[f64]| (6.0 * u[0]).sin() + u[1] * u[3];
        let pts = random_points(4, 40, 8);
        let samples = samples_from(&space, &pts, f);
        let mut previous = f64::INFINITY;
        for lambda in [0.0, 1e-6, 1e-3, 1e-1, 1.0] {
            let kernel = KernelSpec::default().with_smoothing(lambda);
            let model = fit(&space, &samples, Target::Theta, kernel).unwrap();
            let wnorm: f64 = model.weights().iter().map(|w| w * w).sum::<f64>().sqrt();
            assert!(
                wnorm <= previous * (1.0 + 1e-12),
                "weight norm grew from {previous} to {wnorm} at lambda {lambda}"
            );
            previous = wnorm;
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let space = DesignSpace::spba_four_param();
        let f = |u: &[f64]| 0.5 + u[0] * u[1] - (2.0 * u[2]).cos() + 0.3 * u[3];
        let pts = random_points(4, 80, 11);
        let samples: Vec<SampleRecord> = pts
            .iter()
            .map(|u| SampleRecord {
                point: space.denormalize(u).unwrap(),
                displacement: f(u),
                force: f(u),
                theta: f(u),
                provenance: Provenance::External,
            })
            .collect();
        let model = fit(&space, &samples, Target::Theta, KernelSpec::default()).unwrap();
        let h = 1e-5;
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..100 {
            let u: Vec<f64> = (0..4).map(|_| rng.random_range(0.05..0.95)).collect();
            let x = space.denormalize(&u).unwrap();
            let analytic = model.gradient(&x);
            for i in 0..4 {
                let mut up = u.clone();
                let mut um = u.clone();
                up[i] += h;
                um[i] -= h;
                let fd_u = (model.predict_normalized(&up) - model.predict_normalized(&um))
                    / (2.0 * h);
                let analytic_u = analytic[i] * space.parameters()[i].range();
                assert!(
                    (analytic_u - fd_u).abs() <= 1e-5 * fd_u.abs().max(1.0),
                    "component {i}: analytic {analytic_u}, fd {fd_u}"
                );
            }
        }
    }

    #[test]
    fn gradient_is_finite_at_centres() {
        let space = unit_space(4);
        let pts = random_points(4, 20, 13);
        let samples = samples_from(&space, &pts, |u| u[0] * u[1] + u[2]);
        let model = fit(&space, &samples, Target::Theta, KernelSpec::default()).unwrap();
        for s in &samples {
            let g = model.gradient(&s.point);
            assert!(g.iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn linear_target_gradient_is_the_scaled_tail() {
        let space = DesignSpace::spba_four_param();
        let pts = random_points(4, 12, 14);
        let samples: Vec<SampleRecord> = pts
            .iter()
            .map(|u| {
                let y = 3.0 + 2.0 * u[0];
                SampleRecord {
                    point: space.denormalize(u).unwrap(),
                    displacement: y,
                    force: y,
                    theta: y,
                    provenance: Provenance::External,
                }
            })
            .collect();
        let model = fit(&space, &samples, Target::Theta, KernelSpec::default()).unwrap();
        let g = model.gradient(&space.median_point());
        let range0 = space.parameters()[0].range();
        assert!((g[0] - 2.0 / range0).abs() <= 1e-8);
        for v in &g[1..] {
            assert!(v.abs() <= 1e-8);
        }
    }

    #[test]
    fn triple_shares_centres() {
        let space = unit_space(4);
        let pts = random_points(4, 30, 15);
        let samples: Vec<SampleRecord> = pts
            .iter()
            .map(|u| SampleRecord {
                point: space.denormalize(u).unwrap(),
                displacement: u[0] + 0.1,
                force: u[1] * u[1] + 0.2,
                theta: u[2] + u[3],
                provenance: Provenance::External,
            })
            .collect();
        let set = fit_triple(&space, &samples, KernelSpec::default()).unwrap();
        assert_eq!(set.displacement.centers(), set.force.centers());
        assert_eq!(set.force.centers(), set.theta.centers());
        let ymax = |t: Target| samples.iter().map(|s| t.of(s).abs()).fold(0.0f64, f64::max);
        for s in &samples {
            for t in Target::ALL {
                let err = (set.get(t).predict(&s.point) - t.of(s)).abs();
                assert!(err <= 1e-8 * (1.0 + ymax(t)));
            }
        }
    }

    #[test]
    fn model_file_round_trips_bitwise() {
        let space = DesignSpace::spba_four_param();
        let pts = random_points(4, 25, 16);
        let samples: Vec<SampleRecord> = pts
            .iter()
            .map(|u| SampleRecord {
                point: space.denormalize(u).unwrap(),
                displacement: 1.0 + u[0] * u[1],
                force: 2.0 - u[2],
                theta: 0.5 + u[3] * u[0],
                provenance: Provenance::External,
            })
            .collect();
        let model = fit(&space, &samples, Target::Force, KernelSpec::default()).unwrap();
        let text = model.to_model_string();
        let reloaded = RbfSurrogate::from_model_string(&text).unwrap();
        assert_eq!(reloaded.target(), Target::Force);
        assert_eq!(reloaded.space().constraints().len(), 2);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..1000 {
            let u: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..1.0)).collect();
            let x = space.denormalize(&u).unwrap();
            let a = model.predict(&x);
            let b = reloaded.predict(&x);
            assert_eq!(a.to_bits(), b.to_bits(), "prediction drifted after reload");
        }
    }
}
