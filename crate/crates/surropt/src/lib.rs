//! Surrogate-based design optimization of out-of-plane stiffness for soft
//! pneumatic bending actuators.
//!
//! The toolkit samples a constrained parametric design space with a Sobol
//! sequence, obtains (U, F, theta) responses from a synthetic benchmark or an
//! externally computed CSV dataset, fits differentiable thin-plate-spline RBF
//! metamodels to each response, ranks parameter sensitivity to reduce the
//! model, and maximizes the out-of-plane stiffness k_o = F / (U + eps)
//! subject to an equality constraint on the unobstructed bending angle using
//! an SQP-style solver.

pub mod design_space;
pub mod evaluation;
pub mod oracle;
pub mod optimize;
pub mod sensitivity;
pub mod sobol;
pub mod surrogate;

pub mod cli;
pub mod config;

mod linalg;

pub use design_space::{DesignPoint, DesignSpace, ParameterDef, StrictLinearConstraint};
pub use oracle::{Oracle, OracleOutcome, RetryPolicy, SampleRecord};
pub use surrogate::{KernelSpec, RbfSurrogate, SurrogateSet, Target};

use std::io::Write as _;
use std::path::Path;

/// Writes a file atomically: the content lands under a temporary name in the
/// same directory and is renamed into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let directory = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(directory)?;
    let file_name = path
        .file_name()
        .map(|n| n.to_string_lossy().to_string())
        .unwrap_or_else(|| "out".to_string());
    let tmp = directory.join(format!(".{file_name}.tmp"));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)
}
