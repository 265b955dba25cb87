//! Numerical laboratory for a one-dimensional SIS epidemic model with
//! diffusion, downstream advection, saturated incidence and a linear source.
//!
//! The crate is organized around the pipeline
//!
//! ```text
//! expressions -> coefficient set -> mesh + operators -> { DFE, spectra,
//!                                                         dynamics, equilibria }
//! ```
//!
//! All spatial discretization is cell-centered finite volume with
//! Scharfetter-Gummel (exponentially fitted) face fluxes, so the discrete
//! kernel of every advection-diffusion operator is exactly `exp(q x / d)`
//! and the integral identities used by the threshold theory hold to
//! machine precision.

pub mod coeffs;
pub mod dfe;
pub mod dynamics;
pub mod equilibria;
pub mod error;
pub mod expr;
pub mod linalg;
pub mod mesh;
pub mod operator;
pub mod spectral;

pub use coeffs::{CoeffFields, CoefficientSet};
pub use dfe::{solve_dfe, solve_dfe_singular, DfeResult, SingularDfeResult};
pub use dynamics::{
    evaluate_monitors, lyapunov_f, simulate, MonitorReport, SimOptions, SimulationTrace,
    StateField,
};
pub use equilibria::{
    analytic_ee_under_assumption, solve_ee, solve_limit_system, solve_theta_star, AnalyticEe,
    EquilibriumResult, LimitKind,
};
pub use error::CoreError;
pub use expr::{parse_expr, Expr};
pub use linalg::{
    principal_generalized_eig, solve_banded, BandedMatrix, EigMode, EigenResult, SymTridiagonal,
};
pub use mesh::{Grading, Mesh};
pub use operator::{assemble_operator, TridiagonalOperator};
pub use spectral::{
    compute_r0, compute_r0_star, find_n0, lambda1, lambda_bar, tau1, BcVariant, RobinBc,
    RobinSide, ThresholdReport,
};
