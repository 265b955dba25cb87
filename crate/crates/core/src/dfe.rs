//! Disease-free equilibrium: the susceptible profile solving
//! `-dS S_xx + q S_x + mu S = Lambda` with zero-flux boundaries, its
//! singular `dS -> 0` limit, and the downstream concentration mass.

use crate::coeffs::CoefficientSet;
use crate::error::{CoreError, Result};
use crate::linalg::solve_banded;
use crate::mesh::Mesh;
use crate::operator::assemble_operator;

#[derive(Debug, Clone)]
pub struct DfeResult {
    /// Cell-center values of the DFE profile.
    pub s_hat: Vec<f64>,
    /// `| int mu S - int Lambda |`; the discrete scheme makes this rounding-level.
    pub mass_residual: f64,
    /// Boundary value at `x = 0` reconstructed from the zero-flux face profile.
    pub s_at_left: f64,
    /// Boundary value at `x = L`, same reconstruction.
    pub s_at_right: f64,
}

/// Solve the disease-free equilibrium. Positivity and the mass identity
/// `int mu S = int Lambda` are asserted; a failure of either is fatal
/// because it signals a broken discretization, not bad data.
pub fn solve_dfe(coeffs: &CoefficientSet, mesh: &Mesh) -> Result<DfeResult> {
    let fields = coeffs.sample(mesh)?;
    let op = assemble_operator(mesh, coeffs.d_s, coeffs.q, Some(&fields.mu))?;
    let s_hat = solve_banded(&op.to_banded(), &fields.lambda)?;

    if let Some(bad) = s_hat.iter().find(|v| !(**v > 0.0)) {
        return Err(CoreError::InvariantViolation(format!(
            "DFE profile has non-positive entry {bad}"
        )));
    }
    let int_lambda = mesh.integrate(&fields.lambda, None)?;
    let int_mu_s = mesh.integrate(&s_hat, Some(&fields.mu))?;
    let mass_residual = (int_mu_s - int_lambda).abs();
    // tolerance: the identity itself plus the rounding floor of the direct
    // solve, which scales with the operator norm (matters only for extreme
    // diffusion/mesh ratios)
    let s_sup = s_hat.iter().cloned().fold(0.0f64, f64::max);
    let op_scale = (0..mesh.len()).fold(0.0f64, |a, i| a.max(op.row_scale(i) * mesh.widths[i]));
    let floor = 512.0 * f64::EPSILON * op_scale * s_sup * (1.0 + mesh.length);
    if mass_residual > 1e-10 * int_lambda + floor {
        return Err(CoreError::InvariantViolation(format!(
            "DFE mass identity violated: |{int_mu_s} - {int_lambda}| > 1e-10 * int Lambda"
        )));
    }

    // on the zero-flux boundary half-cell the profile is the local kernel
    // S(x) = S_c e^{q (x - c)/dS}
    let n = mesh.len();
    let s_at_left = s_hat[0] * (-coeffs.q * mesh.widths[0] / (2.0 * coeffs.d_s)).exp();
    let s_at_right = s_hat[n - 1] * (coeffs.q * mesh.widths[n - 1] / (2.0 * coeffs.d_s)).exp();
    Ok(DfeResult { s_hat, mass_residual, s_at_left, s_at_right })
}

#[derive(Debug, Clone)]
pub struct SingularDfeResult {
    /// Cell-center values of the limit profile (its boundary value at 0 is 0).
    pub s_inf: Vec<f64>,
    /// Value at the downstream face `x = L`.
    pub s_at_right: f64,
    /// Concentration mass `(||Lambda||_1 - int mu S_inf) / mu(L)`.
    pub n_s: f64,
}

/// Solve the `dS -> 0` limit profile: `-q S' + Lambda - mu S = 0`, `S(0) = 0`,
/// by exact integrating-factor updates on each cell with coefficients frozen
/// at the cell center, then compute the concentration mass `N_S`.
pub fn solve_dfe_singular(coeffs: &CoefficientSet, mesh: &Mesh) -> Result<SingularDfeResult> {
    if !(coeffs.q > 0.0) {
        return Err(CoreError::InvalidParameter(
            "singular DFE limit requires q > 0".into(),
        ));
    }
    let fields = coeffs.sample(mesh)?;
    let n = mesh.len();
    let mut s_inf = vec![0.0; n];
    let mut s_face = 0.0; // S(0) = 0
    for i in 0..n {
        let lam = fields.lambda[i];
        let mu = fields.mu[i];
        let target = lam / mu;
        let h = mesh.widths[i];
        // S' = (lam - mu S)/q with frozen coefficients:
        // S(x0 + t) = target + (S(x0) - target) e^{-mu t / q}
        s_inf[i] = target + (s_face - target) * (-mu * 0.5 * h / coeffs.q).exp();
        s_face = target + (s_face - target) * (-mu * h / coeffs.q).exp();
    }
    let s_at_right = s_face;

    let int_lambda = mesh.integrate(&fields.lambda, None)?;
    let int_mu_s = mesh.integrate(&s_inf, Some(&fields.mu))?;
    let mu_at_l = coeffs.mu.eval_checked(mesh.length)?;
    let n_s = (int_lambda - int_mu_s) / mu_at_l;
    if !(n_s > 0.0) {
        return Err(CoreError::InvariantViolation(format!(
            "concentration mass N_S = {n_s} must be positive"
        )));
    }
    Ok(SingularDfeResult { s_inf, s_at_right, n_s })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expr;
    use crate::mesh::Grading;

    fn set(lambda: &str, mu: &str, d_s: f64, q: f64) -> CoefficientSet {
        CoefficientSet {
            lambda: parse_expr(lambda).unwrap(),
            mu: parse_expr(mu).unwrap(),
            beta: parse_expr("1").unwrap(),
            gamma: parse_expr("1").unwrap(),
            d_s,
            d_i: 1.0,
            q,
            m: 1.0,
            length: 1.0,
        }
    }

    #[test]
    fn constant_balance() {
        let mesh = Mesh::new(1.0, 64, Grading::Uniform).unwrap();
        let r = solve_dfe(&set("1", "1", 1.0, 0.0), &mesh).unwrap();
        for v in &r.s_hat {
            assert!((v - 1.0).abs() < 1e-12);
        }
        let r = solve_dfe(&set("2", "1", 0.3, 0.0), &mesh).unwrap();
        for v in &r.s_hat {
            assert!((v - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn advective_profile_mass_and_monotonicity() {
        let mesh = Mesh::new(1.0, 2000, Grading::Uniform).unwrap();
        let r = solve_dfe(&set("1", "1", 1.0, 1.0), &mesh).unwrap();
        // mu = 1: the mass identity forces int S = int Lambda = 1
        let total = mesh.integrate(&r.s_hat, None).unwrap();
        assert!((total - 1.0).abs() < 1e-8);
        for i in 1..mesh.len() {
            assert!(r.s_hat[i] > r.s_hat[i - 1], "profile must increase downstream");
        }
        assert!(r.mass_residual <= 1e-10);
    }

    #[test]
    fn monotone_when_sources_align() {
        // mu' <= 0 and Lambda' >= 0 force a strictly increasing profile
        let mesh = Mesh::new(1.0, 400, Grading::Uniform).unwrap();
        let r = solve_dfe(&set("0.8 + 0.6*x", "1.4 - 0.8*x", 0.5, 1.0), &mesh).unwrap();
        for i in 1..mesh.len() {
            assert!(r.s_hat[i] > r.s_hat[i - 1]);
        }
    }

    #[test]
    fn large_ds_homogenizes() {
        let mesh = Mesh::new(1.0, 800, Grading::Uniform).unwrap();
        let coeffs = set("1 + 0.5*sin(3*x)", "1 + 0.3*cos(2*x)", 1e3, 1.0);
        let r = solve_dfe(&coeffs, &mesh).unwrap();
        let fields = coeffs.sample(&mesh).unwrap();
        let target = mesh.integrate(&fields.lambda, None).unwrap()
            / mesh.integrate(&fields.mu, None).unwrap();
        for v in &r.s_hat {
            assert!((v - target).abs() <= 0.01 * target, "got {v}, want {target}");
        }
    }

    #[test]
    fn uniqueness_under_reversed_ordering() {
        // solve the same linear system with the unknowns reversed
        let mesh = Mesh::new(1.0, 128, Grading::Uniform).unwrap();
        let coeffs = set("1 + 0.5*x", "1 + 0.25*cos(4*x)", 1.0, 2.0);
        let r = solve_dfe(&coeffs, &mesh).unwrap();

        let fields = coeffs.sample(&mesh).unwrap();
        let op = assemble_operator(&mesh, coeffs.d_s, coeffs.q, Some(&fields.mu)).unwrap();
        let n = mesh.len();
        let mut rev = crate::linalg::BandedMatrix::zeros(n, 1);
        for i in 0..n {
            let ri = n - 1 - i;
            rev.set(ri, ri, op.diag[i]);
            if i > 0 {
                rev.set(ri, n - i, op.lower[i]);
            }
            if i + 1 < n {
                rev.set(ri, n - 2 - i, op.upper[i]);
            }
        }
        let rhs_rev: Vec<f64> = (0..n).map(|i| fields.lambda[n - 1 - i]).collect();
        let x_rev = solve_banded(&rev, &rhs_rev).unwrap();
        let scale = r.s_hat.iter().cloned().fold(0.0f64, f64::max);
        for i in 0..n {
            assert!((x_rev[n - 1 - i] - r.s_hat[i]).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn singular_profile_closed_form() {
        // Lambda = mu = q = 1: S_inf(x) = 1 - e^{-x}, N_S = 1 - e^{-1}
        let mesh = Mesh::new(1.0, 2000, Grading::Uniform).unwrap();
        let r = solve_dfe_singular(&set("1", "1", 1.0, 1.0), &mesh).unwrap();
        for (x, v) in mesh.centers.iter().zip(&r.s_inf) {
            assert!((v - (1.0 - (-x).exp())).abs() < 1e-13);
        }
        let expect = 1.0 - (-1.0f64).exp();
        assert!((r.s_at_right - expect).abs() < 1e-13);
        assert!((r.n_s - expect).abs() < 1e-8, "N_S = {}, want {expect}", r.n_s);
        // integrated form of the limit ODE: q S_inf(L) = mu(L) N_S
        assert!((1.0 * r.s_at_right - 1.0 * r.n_s).abs() < 1e-8);
    }

    #[test]
    fn singular_requires_advection() {
        let mesh = Mesh::new(1.0, 64, Grading::Uniform).unwrap();
        assert!(solve_dfe_singular(&set("1", "1", 1.0, 0.0), &mesh).is_err());
    }

    #[test]
    fn singular_mass_identity_general() {
        let mesh = Mesh::new(1.0, 4000, Grading::Uniform).unwrap();
        let coeffs = set("0.8 + 0.6*x", "1.4 - 0.8*x", 1.0, 1.3);
        let r = solve_dfe_singular(&coeffs, &mesh).unwrap();
        let fields = coeffs.sample(&mesh).unwrap();
        let int_lambda = mesh.integrate(&fields.lambda, None).unwrap();
        let int_mu_s = mesh.integrate(&r.s_inf, Some(&fields.mu)).unwrap();
        let mu_l = coeffs.mu.eval(1.0);
        // rearranged mass relation: N_S mu(L) + int mu S_inf = ||Lambda||_1
        let lhs = r.n_s * mu_l + int_mu_s;
        assert!((lhs - int_lambda).abs() <= 1e-10 * int_lambda);
        // independent route: integrating the ODE gives q S_inf(L) = mu(L) N_S;
        // the left side comes from marching, the right from quadrature
        assert!((coeffs.q * r.s_at_right - mu_l * r.n_s).abs() < 1e-7);
        // monotone increasing since mu' <= 0, Lambda' >= 0
        for i in 1..mesh.len() {
            assert!(r.s_inf[i] > r.s_inf[i - 1]);
        }
    }
}
