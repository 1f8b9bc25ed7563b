//! Problem description for the SQP solver: a smooth objective to minimize
//! over a box, with an optional scalar equality constraint and linear
//! inequality constraints.

/// A differentiable scalar function. A value of `+inf` marks a point the
/// line search must reject (e.g. a denominator pole under extrapolation).
pub trait ScalarFunction: Sync {
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> Vec<f64>;
}

/// Closure-backed [`ScalarFunction`].
pub struct FnScalar<V, G>
where
    V: Fn(&[f64]) -> f64 + Sync,
    G: Fn(&[f64]) -> Vec<f64> + Sync,
{
    pub value: V,
    pub gradient: G,
}

impl<V, G> ScalarFunction for FnScalar<V, G>
where
    V: Fn(&[f64]) -> f64 + Sync,
    G: Fn(&[f64]) -> Vec<f64> + Sync,
{
    fn value(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        (self.gradient)(x)
    }
}

/// Scalar equality `function(x) = target`, with its own residual tolerance.
pub struct EqualityConstraint<'a> {
    pub function: &'a dyn ScalarFunction,
    pub target: f64,
    pub tolerance: f64,
}

impl EqualityConstraint<'_> {
    pub fn residual(&self, x: &[f64]) -> f64 {
        self.function.value(x) - self.target
    }
}

/// Linear inequality `coefficients . x <= bound`.
#[derive(Debug, Clone)]
pub struct LinearInequality {
    pub coefficients: Vec<f64>,
    pub bound: f64,
}

impl LinearInequality {
    pub fn violation(&self, x: &[f64]) -> f64 {
        let lhs: f64 = self.coefficients.iter().zip(x).map(|(a, v)| a * v).sum();
        lhs - self.bound
    }
}

/// The full problem. Bounds are hard: every iterate satisfies them.
pub struct NonlinearProgram<'a> {
    pub objective: &'a dyn ScalarFunction,
    pub equality: Option<EqualityConstraint<'a>>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub linear_inequalities: Vec<LinearInequality>,
}
