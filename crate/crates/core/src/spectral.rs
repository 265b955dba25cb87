//! Threshold quantities: the principal eigenvalue `lambda_1(d, q, c)`, the
//! basic reproduction number `R_0` and its large-`dS` limit `R_0*`, the
//! Robin-perturbed eigenvalue family `tau_1(n)`, its root `N_0`, and the
//! small-`dS` limit eigenvalue `lambda_bar = tau_1(N_S)`.
//!
//! All eigenproblems are posed in the `e^{qx/d}`-weighted symmetric form.
//! With `eta = e^{-qx/d} psi` the operator `-d psi_xx + q psi_x + c psi`
//! under zero-flux conditions becomes the pencil
//!
//! ```text
//! K[eta]  = d int e^{qx/d} eta_x^2 + int c e^{qx/d} eta^2
//! M[eta]  = int e^{qx/d} eta^2
//! ```
//!
//! discretized with exactly the Scharfetter-Gummel face coefficients, so a
//! constant potential shifts the spectrum exactly. Internally the pencil is
//! congruence-scaled by `M^{-1/2}`, which leaves every Rayleigh quotient
//! value unchanged but removes the factors `e^{qx/d}` from all matrix
//! entries; this keeps the arithmetic finite for arbitrarily large `q/d`.

use crate::coeffs::CoefficientSet;
use crate::dfe::{solve_dfe, solve_dfe_singular};
use crate::error::{CoreError, Result};
use crate::linalg::{principal_generalized_eig, EigMode, EigenResult, SymTridiagonal};
use crate::mesh::Mesh;
use crate::operator::{bernoulli, sg_symmetric};

pub const DEFAULT_EIG_TOL: f64 = 1e-12;

/// Which Robin coefficient the downstream datum of the auxiliary
/// eigenproblem carries. `Paper` keeps an extra `mu(L)` factor,
/// `n beta(L) mu(L)`; `Derived` uses `n beta(L)`, the coefficient produced
/// by integrating the equation across the boundary layer (the `mu(L)`
/// cancels against the mass relation) and the one the small-`dS` limit of
/// the principal eigenvalue actually attains.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BcVariant {
    Paper,
    Derived,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RobinSide {
    Upstream,
    Downstream,
}

/// Boundary datum `d psi_x - q psi = coefficient * psi` on one side; it
/// enters the weighted quadratic form as `- coefficient * w * psi^2` at
/// that boundary.
#[derive(Debug, Clone, Copy)]
pub struct RobinBc {
    pub side: RobinSide,
    pub coefficient: f64,
}

/// Assemble the weighted pencil in `M^{-1/2}`-scaled coordinates: returns a
/// symmetric tridiagonal matrix whose smallest eigenvalue is the minimum of
/// `K[eta] / M_rho[eta]`, where `M_rho` carries the density `rho` (ones for
/// plain eigenvalues, `S beta` for the reproduction-number quotient).
fn scaled_form(
    mesh: &Mesh,
    d: f64,
    q: f64,
    potential: &[f64],
    rho: &[f64],
    robin: Option<RobinBc>,
) -> Result<SymTridiagonal> {
    if !(d > 0.0) || !d.is_finite() {
        return Err(CoreError::InvalidParameter(format!("diffusion d = {d} must be positive")));
    }
    if !(q >= 0.0) || !q.is_finite() {
        return Err(CoreError::InvalidParameter(format!("advection q = {q} must be >= 0")));
    }
    let n = mesh.len();
    if potential.len() != n || rho.len() != n {
        return Err(CoreError::InvalidParameter(
            "potential/density length does not match mesh".into(),
        ));
    }
    let mut diag = vec![0.0; n];
    let mut off = vec![0.0; n - 1];
    for i in 0..n {
        let h = mesh.widths[i];
        let mut k_diag = potential[i] * h;
        if i + 1 < n {
            let delta = mesh.centers[i + 1] - mesh.centers[i];
            let p = q * delta / d;
            k_diag += d / delta * bernoulli(-p);
            off[i] = -(d / delta) * sg_symmetric(p)
                / (h * mesh.widths[i + 1] * rho[i] * rho[i + 1]).sqrt();
        }
        if i > 0 {
            let delta = mesh.centers[i] - mesh.centers[i - 1];
            let p = q * delta / d;
            k_diag += d / delta * bernoulli(p);
        }
        diag[i] = k_diag / (h * rho[i]);
    }
    if let Some(rb) = robin {
        match rb.side {
            RobinSide::Downstream => {
                let h = mesh.widths[n - 1];
                // weight ratio w(L)/w(center) on the last half cell
                let factor = (q * h / (2.0 * d)).min(700.0).exp();
                diag[n - 1] -= rb.coefficient * factor / (h * rho[n - 1]);
            }
            RobinSide::Upstream => {
                let h = mesh.widths[0];
                let factor = (-q * h / (2.0 * d)).exp();
                diag[0] -= rb.coefficient * factor / (h * rho[0]);
            }
        }
    }
    Ok(SymTridiagonal { diag, off })
}

/// Map the eigenvector of the scaled pencil back to the weighted
/// eigenfunction `eta = e^{-qx/d} psi`, sup-normalized. Components whose
/// scaled coordinate underflowed to zero stay zero.
fn eta_from_scaled(mesh: &Mesh, d: f64, q: f64, x: &[f64]) -> Vec<f64> {
    let n = mesh.len();
    let l = mesh.length;
    let mut eta = vec![0.0; n];
    for i in 0..n {
        if x[i] != 0.0 {
            // x_i = sqrt(h_i w_i) eta_i with w_i = e^{q (c_i - L)/d}
            let log_scale = 0.5 * (mesh.widths[i].ln() + q * (mesh.centers[i] - l) / d);
            eta[i] = x[i].signum() * (x[i].abs().ln() - log_scale).exp();
        }
    }
    let sup = eta.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if sup > 0.0 {
        for v in eta.iter_mut() {
            *v /= sup;
        }
    }
    eta
}

/// Principal eigenvalue of `-d psi_xx + q psi_x + c(x) psi` with zero-flux
/// boundaries (optionally a Robin datum on one side). The returned vector
/// is the weighted eigenfunction, sup-normalized positive.
pub fn lambda1(
    mesh: &Mesh,
    d: f64,
    q: f64,
    potential: &[f64],
    robin: Option<RobinBc>,
    tol: f64,
) -> Result<EigenResult> {
    let ones = vec![1.0; mesh.len()];
    let t = scaled_form(mesh, d, q, potential, &ones, robin)?;
    let mut r = principal_generalized_eig(&t, &ones, EigMode::Smallest, tol)?;
    r.vector = eta_from_scaled(mesh, d, q, &r.vector);
    Ok(r)
}

#[derive(Debug, Clone)]
pub struct ThresholdReport {
    pub r0: EigenResult,
    pub lambda1: EigenResult,
    /// Sign agreement of `1 - R_0` and `lambda_1`, only asserted outside the
    /// ill-conditioned band `|R_0 - 1| <= 1e-3`.
    pub consistent: bool,
}

/// Indeterminate band around the threshold within which sign comparison is
/// not meaningful at finite precision.
pub const THRESHOLD_BAND: f64 = 1e-3;

/// Basic reproduction number: the largest value of
/// `int S beta w phi^2 / (d int w phi_x^2 + int gamma w phi^2)` with
/// `w = e^{qx/dI}`, together with the principal eigenvalue of the linearized
/// infection operator and the threshold-consistency flag.
pub fn compute_r0(coeffs: &CoefficientSet, mesh: &Mesh, tol: f64) -> Result<ThresholdReport> {
    let dfe = solve_dfe(coeffs, mesh)?;
    compute_r0_with_susceptible(coeffs, mesh, &dfe.s_hat, tol)
}

/// Same quotient with an explicit susceptible profile (used for the
/// homogenized variant and by tests).
pub fn compute_r0_with_susceptible(
    coeffs: &CoefficientSet,
    mesh: &Mesh,
    susceptible: &[f64],
    tol: f64,
) -> Result<ThresholdReport> {
    let fields = coeffs.sample(mesh)?;
    let n = mesh.len();
    let rho: Vec<f64> = (0..n).map(|i| susceptible[i] * fields.beta[i]).collect();
    if rho.iter().any(|v| !(*v > 0.0)) {
        return Err(CoreError::InvalidParameter(
            "S beta must be strictly positive for the R0 quotient".into(),
        ));
    }
    let t = scaled_form(mesh, coeffs.d_i, coeffs.q, &fields.gamma, &rho, None)?;
    let ones = vec![1.0; n];
    let mut r0 = principal_generalized_eig(&t, &ones, EigMode::Largest, tol)?;
    r0.vector = eta_from_scaled(mesh, coeffs.d_i, coeffs.q, &r0.vector);

    let potential: Vec<f64> =
        (0..n).map(|i| fields.gamma[i] - susceptible[i] * fields.beta[i]).collect();
    let lam1 = lambda1(mesh, coeffs.d_i, coeffs.q, &potential, None, tol)?;

    let consistent = if (r0.value - 1.0).abs() <= THRESHOLD_BAND {
        true
    } else {
        (1.0 - r0.value) * lam1.value > 0.0
    };
    Ok(ThresholdReport { r0, lambda1: lam1, consistent })
}

/// Large-`dS` limit of the reproduction number: the same quotient with the
/// susceptible profile replaced by the constant `||Lambda||_1 / ||mu||_1`.
pub fn compute_r0_star(coeffs: &CoefficientSet, mesh: &Mesh, tol: f64) -> Result<f64> {
    let fields = coeffs.sample(mesh)?;
    let s_bar = mesh.integrate(&fields.lambda, None)? / mesh.integrate(&fields.mu, None)?;
    let constant = vec![s_bar; mesh.len()];
    Ok(compute_r0_with_susceptible(coeffs, mesh, &constant, tol)?.r0.value)
}

/// Robin coefficient at the downstream end for the auxiliary eigenproblem.
pub fn robin_coefficient(coeffs: &CoefficientSet, n: f64, variant: BcVariant) -> Result<f64> {
    let beta_l = coeffs.beta.eval_checked(coeffs.length)?;
    Ok(match variant {
        BcVariant::Paper => n * beta_l * coeffs.mu.eval_checked(coeffs.length)?,
        BcVariant::Derived => n * beta_l,
    })
}

/// Principal eigenvalue `tau_1(n)` of the operator with potential
/// `gamma - S_inf beta` and downstream Robin datum proportional to `n`.
/// Smooth and strictly decreasing in `n`.
pub fn tau1(
    n: f64,
    coeffs: &CoefficientSet,
    mesh: &Mesh,
    variant: BcVariant,
    tol: f64,
) -> Result<EigenResult> {
    if !(n >= 0.0) {
        return Err(CoreError::InvalidParameter(format!("n = {n} must be >= 0")));
    }
    let sing = solve_dfe_singular(coeffs, mesh)?;
    tau1_with_profile(n, coeffs, mesh, &sing.s_inf, variant, tol)
}

fn tau1_with_profile(
    n: f64,
    coeffs: &CoefficientSet,
    mesh: &Mesh,
    s_inf: &[f64],
    variant: BcVariant,
    tol: f64,
) -> Result<EigenResult> {
    let fields = coeffs.sample(mesh)?;
    let potential: Vec<f64> = (0..mesh.len())
        .map(|i| fields.gamma[i] - s_inf[i] * fields.beta[i])
        .collect();
    let coefficient = robin_coefficient(coeffs, n, variant)?;
    lambda1(
        mesh,
        coeffs.d_i,
        coeffs.q,
        &potential,
        Some(RobinBc { side: RobinSide::Downstream, coefficient }),
        tol,
    )
}

/// Root `N_0` of `tau_1`: positive where `tau_1` crosses zero. Returns
/// `None` when `gamma / beta > S_inf` fails somewhere on the grid, in which
/// case `tau_1(n) < 0` for every positive `n` and no root exists.
pub fn find_n0(
    coeffs: &CoefficientSet,
    mesh: &Mesh,
    variant: BcVariant,
    tol: f64,
) -> Result<Option<f64>> {
    let sing = solve_dfe_singular(coeffs, mesh)?;
    let fields = coeffs.sample(mesh)?;
    let dominated = (0..mesh.len())
        .all(|i| fields.gamma[i] / fields.beta[i] > sing.s_inf[i]);
    let gamma_l = coeffs.gamma.eval_checked(coeffs.length)?;
    let beta_l = coeffs.beta.eval_checked(coeffs.length)?;
    if !dominated || gamma_l / beta_l <= sing.s_at_right {
        return Ok(None);
    }

    let tau_at = |n: f64| -> Result<f64> {
        Ok(tau1_with_profile(n, coeffs, mesh, &sing.s_inf, variant, tol)?.value)
    };
    let tau0 = tau_at(0.0)?;
    if tau0 <= 0.0 {
        // contradicts the sign analysis for the dominated case; report it
        return Err(CoreError::InvariantViolation(format!(
            "tau_1(0) = {tau0} <= 0 although gamma/beta > S_inf everywhere"
        )));
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut hi_val = tau_at(hi)?;
    let mut doublings = 0;
    while hi_val >= 0.0 {
        lo = hi;
        let lo_val = hi_val;
        hi *= 2.0;
        hi_val = tau_at(hi)?;
        doublings += 1;
        if doublings > 60 {
            return Err(CoreError::NonConvergence {
                what: format!(
                    "bisection bracket for N_0 (tau({lo}) = {lo_val}, tau({hi}) = {hi_val})"
                ),
                history: vec![lo_val, hi_val],
            });
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let v = tau_at(mid)?;
        if v.abs() <= 1e-9 {
            return Ok(Some(mid));
        }
        // bracket exhausted to rounding: the root is located as precisely as
        // the eigenvalue evaluation allows on this mesh
        if hi - lo <= 8.0 * f64::EPSILON * mid.abs() {
            return Ok(Some(mid));
        }
        if v > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(CoreError::NonConvergence {
        what: format!("N_0 bisection stalled (bracket [{lo}, {hi}])"),
        history: vec![tau_at(lo)?, tau_at(hi)?],
    })
}

/// The small-`dS` limit eigenvalue: by the mass relation it equals
/// `tau_1(N_S)`.
pub fn lambda_bar(
    coeffs: &CoefficientSet,
    mesh: &Mesh,
    variant: BcVariant,
    tol: f64,
) -> Result<EigenResult> {
    let sing = solve_dfe_singular(coeffs, mesh)?;
    tau1_with_profile(sing.n_s, coeffs, mesh, &sing.s_inf, variant, tol)
}
