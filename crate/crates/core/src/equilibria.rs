//! Steady states: the coupled endemic equilibrium by damped Newton on the
//! interleaved unknown vector, the closed-form equilibrium available under
//! the separable-coefficient assumption, the saturation profile `theta*`,
//! and the three diffusion-limit systems.
//!
//! Residuals and Jacobians are kept in integrated (cell-balance) form, i.e.
//! the point equations multiplied by the cell width; with the
//! Scharfetter-Gummel fluxes this is the form whose rows telescope.

use crate::coeffs::CoefficientSet;
use crate::dfe::{solve_dfe, solve_dfe_singular};
use crate::dynamics::{simulate, SimOptions, StateField};
use crate::error::{CoreError, Result};
use crate::linalg::{solve_banded, BandedMatrix};
use crate::mesh::Mesh;
use crate::operator::{assemble_operator, TridiagonalOperator};
use crate::spectral::{compute_r0, compute_r0_star, BcVariant, DEFAULT_EIG_TOL};

#[derive(Debug, Clone)]
pub struct EquilibriumResult {
    pub s: Vec<f64>,
    pub i: Vec<f64>,
    /// Sup norm of the integrated equilibrium equations at the returned pair.
    pub residual: f64,
    pub newton_iterations: usize,
    pub converged: bool,
    /// `false` when the iteration collapsed onto the disease-free branch.
    pub positive_branch: bool,
    /// Concentrated susceptible mass at `x = L` for the small-`dS` limit
    /// object; `None` for regular equilibria.
    pub boundary_mass: Option<f64>,
    pub residual_history: Vec<f64>,
}

fn interleave(s: &[f64], i: &[f64]) -> Vec<f64> {
    let mut z = Vec::with_capacity(2 * s.len());
    for k in 0..s.len() {
        z.push(s[k]);
        z.push(i[k]);
    }
    z
}

fn deinterleave(z: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = z.len() / 2;
    let mut s = Vec::with_capacity(n);
    let mut i = Vec::with_capacity(n);
    for k in 0..n {
        s.push(z[2 * k]);
        i.push(z[2 * k + 1]);
    }
    (s, i)
}

struct EeSystem<'a> {
    mesh: &'a Mesh,
    coeffs: &'a CoefficientSet,
    fields: crate::coeffs::CoeffFields,
    op_s: TridiagonalOperator,
    op_i: TridiagonalOperator,
}

impl<'a> EeSystem<'a> {
    fn new(coeffs: &'a CoefficientSet, mesh: &'a Mesh) -> Result<Self> {
        let fields = coeffs.sample(mesh)?;
        let op_s = assemble_operator(mesh, coeffs.d_s, coeffs.q, None)?;
        let op_i = assemble_operator(mesh, coeffs.d_i, coeffs.q, None)?;
        Ok(EeSystem { mesh, coeffs, fields, op_s, op_i })
    }

    fn residual(&self, z: &[f64]) -> Vec<f64> {
        let (s, i) = deinterleave(z);
        let n = self.mesh.len();
        let as_ = self.op_s.apply(&s);
        let ai = self.op_i.apply(&i);
        let m = self.coeffs.m;
        let mut r = vec![0.0; 2 * n];
        for k in 0..n {
            let h = self.mesh.widths[k];
            let f = self.fields.beta[k] * s[k] * i[k] / (1.0 + m * i[k]);
            r[2 * k] = h
                * (as_[k] + self.fields.mu[k] * s[k] - self.fields.lambda[k] + f
                    - self.fields.gamma[k] * i[k]);
            r[2 * k + 1] = h * (ai[k] + self.fields.gamma[k] * i[k] - f);
        }
        r
    }

    fn jacobian(&self, z: &[f64]) -> BandedMatrix {
        let (s, i) = deinterleave(z);
        let n = self.mesh.len();
        let m = self.coeffs.m;
        let mut jac = BandedMatrix::zeros(2 * n, 2);
        for k in 0..n {
            let h = self.mesh.widths[k];
            let sat = 1.0 + m * i[k];
            let df_ds = self.fields.beta[k] * i[k] / sat;
            let df_di = self.fields.beta[k] * s[k] / (sat * sat);
            let rs = 2 * k;
            let ri = 2 * k + 1;
            jac.set(rs, rs, h * (self.op_s.diag[k] + self.fields.mu[k] + df_ds));
            jac.set(rs, ri, h * (df_di - self.fields.gamma[k]));
            jac.set(ri, ri, h * (self.op_i.diag[k] + self.fields.gamma[k] - df_di));
            jac.set(ri, rs, h * (-df_ds));
            if k > 0 {
                jac.set(rs, rs - 2, h * self.op_s.lower[k]);
                jac.set(ri, ri - 2, h * self.op_i.lower[k]);
            }
            if k + 1 < n {
                jac.set(rs, rs + 2, h * self.op_s.upper[k]);
                jac.set(ri, ri + 2, h * self.op_i.upper[k]);
            }
        }
        jac
    }
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |a, x| a.max(x.abs()))
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Damped Newton with a positivity line search on a generic residual /
/// Jacobian pair over a positive unknown vector.
fn damped_newton<R, J>(
    z0: Vec<f64>,
    residual: R,
    jacobian: J,
    tol: f64,
    max_iter: usize,
    what: &str,
) -> Result<(Vec<f64>, f64, usize, Vec<f64>)>
where
    R: Fn(&[f64]) -> Vec<f64>,
    J: Fn(&[f64]) -> BandedMatrix,
{
    let mut z = z0;
    let mut r = residual(&z);
    let mut history = vec![sup(&r)];
    // rounding floor of the cell balances: eps times the Jacobian row scale
    let rounding_floor = |jac: &BandedMatrix, z: &[f64]| -> f64 {
        let zmax = sup(z);
        let mut row_scale: f64 = 0.0;
        for i in 0..jac.n {
            let lo = i.saturating_sub(jac.bandwidth);
            let hi = (i + jac.bandwidth).min(jac.n - 1);
            let s: f64 = (lo..=hi).map(|j| jac.get(i, j).abs()).sum();
            row_scale = row_scale.max(s);
        }
        16.0 * f64::EPSILON * row_scale * zmax
    };
    for iter in 0..max_iter {
        if sup(&r) <= tol {
            return Ok((z, sup(&r), iter, history));
        }
        let jac = jacobian(&z);
        let neg_r: Vec<f64> = r.iter().map(|v| -v).collect();
        let dz = solve_banded(&jac, &neg_r)?;
        // keep the iterate strictly positive
        let mut alpha: f64 = 1.0;
        for (zk, dk) in z.iter().zip(&dz) {
            if zk + dk <= 0.0 {
                alpha = alpha.min(0.99 * zk / -dk);
            }
        }
        // Armijo backtracking on the 2-norm
        let base = norm2(&r);
        let mut accepted = false;
        for _ in 0..30 {
            let trial: Vec<f64> = z.iter().zip(&dz).map(|(zk, dk)| zk + alpha * dk).collect();
            let rt = residual(&trial);
            if norm2(&rt) <= (1.0 - 1e-4 * alpha) * base || sup(&rt) <= tol {
                z = trial;
                r = rt;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            // no descent possible; accept iff the residual sits at the
            // rounding floor of these balances
            let res = sup(&r);
            if res <= rounding_floor(&jac, &z) {
                return Ok((z, res, iter + 1, history));
            }
            history.push(res);
            return Err(CoreError::NonConvergence {
                what: format!("{what} (line search stalled)"),
                history,
            });
        }
        history.push(sup(&r));
    }
    let res = sup(&r);
    if res <= tol || res <= rounding_floor(&jacobian(&z), &z) {
        Ok((z, res, max_iter, history))
    } else {
        Err(CoreError::NonConvergence { what: what.into(), history })
    }
}

/// Deterministic default initializer: a short time march (to `t = 50`)
/// started from the disease-free profile with a small uniform infection.
fn march_init(coeffs: &CoefficientSet, mesh: &Mesh) -> Result<StateField> {
    let dfe = solve_dfe(coeffs, mesh)?;
    let s_scale = dfe.s_hat.iter().cloned().fold(0.0f64, f64::max);
    let i0 = 0.1 * mesh.integrate(&dfe.s_hat, None)? / mesh.length;
    let init = StateField::new(dfe.s_hat.clone(), vec![i0.max(1e-3); mesh.len()], 0.0)?;
    let (beta_star, _) = crate::coeffs::extrema(&coeffs.beta, mesh)?;
    let dt = 0.2 / (1.0 + beta_star * s_scale);
    let opts = SimOptions::new(dt, 50.0, 50.0);
    Ok(simulate(&init, coeffs, mesh, &opts)?.final_state)
}

/// Solve the endemic equilibrium system by damped Newton on the interleaved
/// pair. Without an explicit `init` the iteration starts from a short time
/// march, which lands in the attractor's basin whenever the disease persists.
pub fn solve_ee(
    coeffs: &CoefficientSet,
    mesh: &Mesh,
    init: Option<&StateField>,
    newton_tol: f64,
) -> Result<EquilibriumResult> {
    let sys = EeSystem::new(coeffs, mesh)?;
    let z0 = match init {
        Some(state) => interleave(&state.s, &state.i),
        None => {
            let state = march_init(coeffs, mesh)?;
            interleave(&state.s, &state.i)
        }
    };
    let (z, residual, newton_iterations, residual_history) = damped_newton(
        z0,
        |z| sys.residual(z),
        |z| sys.jacobian(z),
        newton_tol,
        50,
        "endemic equilibrium Newton",
    )?;
    let (s, i) = deinterleave(&z);
    let i_sup = sup(&i);
    let s_sup = sup(&s);
    let positive_branch = i_sup > 1e-10 * s_sup.max(1.0);
    Ok(EquilibriumResult {
        s,
        i,
        residual,
        newton_iterations,
        converged: true,
        positive_branch,
        boundary_mass: None,
        residual_history,
    })
}

#[derive(Debug, Clone)]
pub struct AnalyticEe {
    pub s: Vec<f64>,
    pub i: Vec<f64>,
    /// Constant `Lambda / (mu e^{qx/dS})`.
    pub kappa: f64,
    /// Constant `(Lambda beta - gamma mu) / (gamma mu e^{qx/dI})`.
    pub r: f64,
}

/// Closed-form equilibrium available when the coefficient combinations
/// `Lambda/(mu e^{qx/dS})` and `(Lambda beta - gamma mu)/(gamma mu e^{qx/dI})`
/// are constant and the infection pressure exceeds recovery. Returns
/// `S = Lambda/mu` and `I = (Lambda beta - gamma mu)/(m gamma mu)`; the
/// saturation constant divides the infected profile (substituting the pair
/// back into the steady equations forces the `1/m`).
pub fn analytic_ee_under_assumption(
    coeffs: &CoefficientSet,
    mesh: &Mesh,
) -> Result<AnalyticEe> {
    let fields = coeffs.sample(mesh)?;
    let n = mesh.len();
    let mut log_r1 = Vec::with_capacity(n);
    let mut log_r2 = Vec::with_capacity(n);
    for k in 0..n {
        let excess = fields.lambda[k] * fields.beta[k] - fields.gamma[k] * fields.mu[k];
        if excess <= 0.0 {
            return Err(CoreError::HypothesisViolated(format!(
                "Lambda beta - gamma mu = {excess} <= 0 at x = {}",
                mesh.centers[k]
            )));
        }
        let x = mesh.centers[k];
        log_r1.push(fields.lambda[k].ln() - fields.mu[k].ln() - coeffs.q * x / coeffs.d_s);
        log_r2.push(
            excess.ln() - (fields.gamma[k] * fields.mu[k]).ln() - coeffs.q * x / coeffs.d_i,
        );
    }
    let variation = |v: &[f64]| {
        let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
        hi - lo
    };
    let var1 = variation(&log_r1);
    if var1 > 1e-10 {
        return Err(CoreError::HypothesisViolated(format!(
            "Lambda/(mu e^(qx/dS)) varies by a relative {var1:.3e} (limit 1e-10)"
        )));
    }
    let var2 = variation(&log_r2);
    if var2 > 1e-10 {
        return Err(CoreError::HypothesisViolated(format!(
            "(Lambda beta - gamma mu)/(gamma mu e^(qx/dI)) varies by a relative {var2:.3e} \
             (limit 1e-10)"
        )));
    }
    let kappa = (log_r1.iter().sum::<f64>() / n as f64).exp();
    let r = (log_r2.iter().sum::<f64>() / n as f64).exp();
    let s: Vec<f64> = (0..n).map(|k| fields.lambda[k] / fields.mu[k]).collect();
    let i: Vec<f64> = (0..n)
        .map(|k| {
            (fields.lambda[k] * fields.beta[k] - fields.gamma[k] * fields.mu[k])
                / (coeffs.m * fields.gamma[k] * fields.mu[k])
        })
        .collect();
    Ok(AnalyticEe { s, i, kappa, r })
}

/// Scalar-field Newton for a semilinear equation
/// `A u + c(x, u) u = 0` in integrated form, with positivity line search.
fn scalar_newton<FR, FJ>(
    mesh: &Mesh,
    u0: Vec<f64>,
    residual: FR,
    jac_diag: FJ,
    op: &TridiagonalOperator,
    tol: f64,
    what: &str,
) -> Result<(Vec<f64>, f64, usize, Vec<f64>)>
where
    FR: Fn(&[f64]) -> Vec<f64>,
    FJ: Fn(&[f64], usize) -> f64,
{
    let n = mesh.len();
    damped_newton(
        u0,
        residual,
        |u| {
            let mut jac = BandedMatrix::zeros(n, 1);
            for k in 0..n {
                let h = mesh.widths[k];
                jac.set(k, k, h * (op.diag[k] + jac_diag(u, k)));
                if k > 0 {
                    jac.set(k, k - 1, h * op.lower[k]);
                }
                if k + 1 < n {
                    jac.set(k, k + 1, h * op.upper[k]);
                }
            }
            jac
        },
        tol,
        60,
        what,
    )
}

/// Saturation profile: the positive solution of
/// `-dI theta_xx + q theta_x + (gamma - beta S_hat / (1 + theta)) theta = 0`
/// with zero-flux boundaries; it is the limit of `m I` as `m` grows.
pub fn solve_theta_star(coeffs: &CoefficientSet, mesh: &Mesh, tol: f64) -> Result<Vec<f64>> {
    let report = compute_r0(coeffs, mesh, DEFAULT_EIG_TOL)?;
    if report.r0.value <= 1.0 {
        return Err(CoreError::HypothesisViolated(format!(
            "theta* requires R0 > 1, got {}",
            report.r0.value
        )));
    }
    let dfe = solve_dfe(coeffs, mesh)?;
    let fields = coeffs.sample(mesh)?;
    let op = assemble_operator(mesh, coeffs.d_i, coeffs.q, None)?;
    let n = mesh.len();
    let theta0 = vec![(report.r0.value - 1.0).max(0.1); n];
    let residual = |u: &[f64]| -> Vec<f64> {
        let au = op.apply(u);
        (0..n)
            .map(|k| {
                mesh.widths[k]
                    * (au[k]
                        + (fields.gamma[k]
                            - fields.beta[k] * dfe.s_hat[k] / (1.0 + u[k]))
                            * u[k])
            })
            .collect()
    };
    let jac_diag = |u: &[f64], k: usize| -> f64 {
        fields.gamma[k] - fields.beta[k] * dfe.s_hat[k] / ((1.0 + u[k]) * (1.0 + u[k]))
    };
    let (theta, _, _, _) =
        scalar_newton(mesh, theta0, residual, jac_diag, &op, tol, "theta* Newton")?;
    Ok(theta)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LimitKind {
    /// `dS -> infinity`: constant susceptible profile, nontrivial infected.
    DsInfty,
    /// `dI -> infinity`: constant infected level, nontrivial susceptible.
    DiInfty,
    /// `dS -> 0`: first-order susceptible profile vanishing upstream plus a
    /// boundary mass, infected equation with a nonlinear downstream datum.
    DsZero,
}

/// Implicit march for a single-species equation `u_t = -(A u + g(u))`,
/// used to reach the basin of the positive branch before Newton.
fn relax_scalar<G>(
    mesh: &Mesh,
    op: &TridiagonalOperator,
    linear_sink: &[f64],
    explicit_gain: G,
    u0: Vec<f64>,
    steps: usize,
    dt: f64,
) -> Result<Vec<f64>>
where
    G: Fn(&[f64], usize) -> f64,
{
    let n = mesh.len();
    let mut b = op.to_banded();
    for k in 0..n {
        let v = b.get(k, k);
        b.set(k, k, 1.0 + dt * (v + linear_sink[k]));
        if k > 0 {
            let l = b.get(k, k - 1);
            b.set(k, k - 1, dt * l);
        }
        if k + 1 < n {
            let u = b.get(k, k + 1);
            b.set(k, k + 1, dt * u);
        }
    }
    let lu = crate::linalg::BandedLu::factor(&b)?;
    let mut u = u0;
    for _ in 0..steps {
        let rhs: Vec<f64> = (0..n).map(|k| u[k] + dt * explicit_gain(&u, k)).collect();
        u = lu.solve(&rhs);
    }
    Ok(u)
}

/// Solve one of the three diffusion-limit systems. Hypotheses are verified
/// numerically before solving; the small-`dS` system reports the boundary
/// mass `N_S` as an explicit scalar rather than a grid spike.
pub fn solve_limit_system(
    kind: LimitKind,
    coeffs: &CoefficientSet,
    mesh: &Mesh,
    variant: BcVariant,
    tol: f64,
) -> Result<EquilibriumResult> {
    match kind {
        LimitKind::DsInfty => limit_ds_infty(coeffs, mesh, tol),
        LimitKind::DiInfty => limit_di_infty(coeffs, mesh, tol),
        LimitKind::DsZero => limit_ds_zero(coeffs, mesh, variant, tol),
    }
}

fn limit_ds_infty(coeffs: &CoefficientSet, mesh: &Mesh, tol: f64) -> Result<EquilibriumResult> {
    let r0_star = compute_r0_star(coeffs, mesh, DEFAULT_EIG_TOL)?;
    if r0_star <= 1.0 {
        return Err(CoreError::HypothesisViolated(format!(
            "dS->infinity limit requires R0* > 1, got {r0_star}"
        )));
    }
    let fields = coeffs.sample(mesh)?;
    let s_bar = mesh.integrate(&fields.lambda, None)? / mesh.integrate(&fields.mu, None)?;
    let n = mesh.len();
    let op = assemble_operator(mesh, coeffs.d_i, coeffs.q, None)?;
    let m = coeffs.m;

    let relaxed = relax_scalar(
        mesh,
        &op,
        &fields.gamma,
        |u, k| fields.beta[k] * s_bar * u[k] / (1.0 + m * u[k]),
        vec![0.1; n],
        200,
        0.25,
    )?;
    let residual = |u: &[f64]| -> Vec<f64> {
        let au = op.apply(u);
        (0..n)
            .map(|k| {
                mesh.widths[k]
                    * (au[k] + fields.gamma[k] * u[k]
                        - fields.beta[k] * s_bar * u[k] / (1.0 + m * u[k]))
            })
            .collect()
    };
    let jac_diag = |u: &[f64], k: usize| -> f64 {
        let sat = 1.0 + m * u[k];
        fields.gamma[k] - fields.beta[k] * s_bar / (sat * sat)
    };
    let (i, residual_val, iters, history) =
        scalar_newton(mesh, relaxed, residual, jac_diag, &op, tol, "dS->infinity limit Newton")?;
    Ok(EquilibriumResult {
        s: vec![s_bar; n],
        i,
        residual: residual_val,
        newton_iterations: iters,
        converged: true,
        positive_branch: true,
        boundary_mass: None,
        residual_history: history,
    })
}

fn limit_di_infty(coeffs: &CoefficientSet, mesh: &Mesh, tol: f64) -> Result<EquilibriumResult> {
    let fields = coeffs.sample(mesh)?;
    let dfe = solve_dfe(coeffs, mesh)?;
    let int_beta_s = mesh.integrate(&dfe.s_hat, Some(&fields.beta))?;
    let int_gamma = mesh.integrate(&fields.gamma, None)?;
    if int_beta_s <= int_gamma {
        return Err(CoreError::HypothesisViolated(format!(
            "dI->infinity limit requires int beta S_hat > int gamma \
             ({int_beta_s} <= {int_gamma})"
        )));
    }
    let n = mesh.len();
    let m = coeffs.m;
    let op = assemble_operator(mesh, coeffs.d_s, coeffs.q, None)?;
    // inner solve: S(c) from the linear susceptible balance at constant I = c
    let solve_s = |c: f64| -> Result<Vec<f64>> {
        let mut b = op.to_banded();
        let mut rhs = vec![0.0; n];
        for k in 0..n {
            let v = b.get(k, k);
            b.set(k, k, v + fields.mu[k] + fields.beta[k] * c / (1.0 + m * c));
            rhs[k] = fields.lambda[k] + fields.gamma[k] * c;
        }
        solve_banded(&b, &rhs)
    };
    let g = |c: f64| -> Result<f64> {
        let s = solve_s(c)?;
        Ok(mesh.integrate(&s, Some(&fields.beta))? / (1.0 + m * c) - int_gamma)
    };
    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut doublings = 0;
    while g(hi)? > 0.0 {
        lo = hi;
        hi *= 2.0;
        doublings += 1;
        if doublings > 60 {
            return Err(CoreError::NonConvergence {
                what: "bracketing the constant infected level".into(),
                history: vec![g(lo)?, g(hi)?],
            });
        }
    }
    for _ in 0..90 {
        let mid = 0.5 * (lo + hi);
        if g(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // secant polish on the bisection bracket
    let mut c0 = lo;
    let mut c1 = hi;
    let mut g0 = g(c0)?;
    let mut iters = 90;
    for _ in 0..20 {
        let g1 = g(c1)?;
        iters += 1;
        if (g1 - g0).abs() < 1e-300 {
            break;
        }
        let c2 = c1 - g1 * (c1 - c0) / (g1 - g0);
        c0 = c1;
        g0 = g1;
        c1 = c2;
        if (c1 - c0).abs() <= 1e-15 * c1.abs().max(1.0) {
            break;
        }
    }
    let c = c1;
    let s = solve_s(c)?;
    let residual = g(c)?.abs();
    if residual > tol.max(1e-10) * int_gamma {
        return Err(CoreError::NonConvergence {
            what: "dI->infinity constraint residual".into(),
            history: vec![residual],
        });
    }
    Ok(EquilibriumResult {
        s,
        i: vec![c; n],
        residual,
        newton_iterations: iters,
        converged: true,
        positive_branch: c > 0.0,
        boundary_mass: None,
        residual_history: vec![residual],
    })
}

fn limit_ds_zero(
    coeffs: &CoefficientSet,
    mesh: &Mesh,
    variant: BcVariant,
    tol: f64,
) -> Result<EquilibriumResult> {
    if !(coeffs.q > 0.0) {
        return Err(CoreError::InvalidParameter("dS->0 limit requires q > 0".into()));
    }
    let sing = solve_dfe_singular(coeffs, mesh)?;
    let fields = coeffs.sample(mesh)?;
    let n = mesh.len();
    let n_s = sing.n_s;

    // hypothesis: either recovery dominates everywhere and N_S exceeds the
    // Robin root N_0, or it is dominated everywhere
    let dominated =
        (0..n).all(|k| fields.gamma[k] / fields.beta[k] > sing.s_inf[k]);
    let bar = crate::spectral::lambda_bar(coeffs, mesh, variant, DEFAULT_EIG_TOL)?;
    if dominated {
        // with tau_1 strictly decreasing, N_S > N_0 is exactly the sign
        // condition tau_1(N_S) < 0; checking the sign avoids root-finding
        // at eigenvalue precision
        if bar.value >= 0.0 {
            return Err(CoreError::HypothesisViolated(format!(
                "dS->0 limit requires N_S > N_0, but tau_1(N_S) = {} >= 0",
                bar.value
            )));
        }
    } else {
        let fully_dominated_by_profile =
            (0..n).all(|k| fields.gamma[k] / fields.beta[k] <= sing.s_inf[k]);
        if !fully_dominated_by_profile {
            return Err(CoreError::HypothesisViolated(
                "gamma/beta crosses S_inf; the limit problem's sign condition fails".into(),
            ));
        }
    }

    let beta_l = coeffs.beta.eval_checked(coeffs.length)?;
    let m = coeffs.m;
    let q = coeffs.q;
    let op = assemble_operator(mesh, coeffs.d_i, coeffs.q, None)?;

    // S given I: exact integrating-factor march of
    // q S' = Lambda + gamma I - (mu + beta I/(1+mI)) S, S(0) = 0
    let solve_s = |i_field: &[f64]| -> Vec<f64> {
        let mut s = vec![0.0; n];
        let mut s_face = 0.0;
        for k in 0..n {
            let gain = fields.lambda[k] + fields.gamma[k] * i_field[k];
            let loss =
                fields.mu[k] + fields.beta[k] * i_field[k] / (1.0 + m * i_field[k]);
            let target = gain / loss;
            let h = mesh.widths[k];
            s[k] = target + (s_face - target) * (-loss * 0.5 * h / q).exp();
            s_face = target + (s_face - target) * (-loss * h / q).exp();
        }
        s
    };

    // I given S: Newton with the nonlinear downstream datum
    // dI I_x(L) - q I(L) = N_S beta(L) I(L)/(1 + m I(L))
    let newton_i = |s_field: &[f64], i0: Vec<f64>| -> Result<(Vec<f64>, f64)> {
        let residual = |u: &[f64]| -> Vec<f64> {
            let au = op.apply(u);
            let mut r: Vec<f64> = (0..n)
                .map(|k| {
                    mesh.widths[k]
                        * (au[k] + fields.gamma[k] * u[k]
                            - fields.beta[k] * s_field[k] * u[k] / (1.0 + m * u[k]))
                })
                .collect();
            // downstream boundary flux enters the last cell balance directly
            let ul = u[n - 1];
            r[n - 1] -= n_s * beta_l * ul / (1.0 + m * ul);
            r
        };
        let jacobian = |u: &[f64]| -> BandedMatrix {
            let mut jac = BandedMatrix::zeros(n, 1);
            for k in 0..n {
                let h = mesh.widths[k];
                let sat = 1.0 + m * u[k];
                let mut dk = h
                    * (op.diag[k] + fields.gamma[k]
                        - fields.beta[k] * s_field[k] / (sat * sat));
                if k == n - 1 {
                    dk -= n_s * beta_l / (sat * sat);
                }
                jac.set(k, k, dk);
                if k > 0 {
                    jac.set(k, k - 1, h * op.lower[k]);
                }
                if k + 1 < n {
                    jac.set(k, k + 1, h * op.upper[k]);
                }
            }
            jac
        };
        let (u, res, _, _) = damped_newton(
            i0,
            residual,
            jacobian,
            tol,
            60,
            "dS->0 infected Newton",
        )?;
        Ok((u, res))
    };

    // relax toward the basin first: a semi-implicit march with the frozen
    // susceptible profile. The downstream boundary gain goes into the matrix
    // (saturation frozen per step) because on a layer-resolving mesh it is
    // far too stiff for explicit treatment; a growth guard halves the step
    // while the unstable mode still dominates.
    let mut i_field = vec![0.1; n];
    {
        // implicit Euler damps the unstable mode once dt |lambda_bar| > 2,
        // so the step must stay well under 1/|lambda_bar| to climb the branch
        let dt_cap = (0.5 / bar.value.abs().max(1.0)).min(0.5);
        let mut dt = dt_cap.min(0.1);
        let h_last = mesh.widths[n - 1];
        let mut calm = 0usize;
        let mut step = 0usize;
        while step < 3000 {
            let mut b = op.to_banded();
            for k in 0..n {
                let v = b.get(k, k);
                let mut diag = 1.0 + dt * (v + fields.gamma[k]);
                if k == n - 1 {
                    diag -= dt * n_s * beta_l / ((1.0 + m * i_field[k]) * h_last);
                }
                b.set(k, k, diag);
                if k > 0 {
                    let l = b.get(k, k - 1);
                    b.set(k, k - 1, dt * l);
                }
                if k + 1 < n {
                    let u = b.get(k, k + 1);
                    b.set(k, k + 1, dt * u);
                }
            }
            let lu = crate::linalg::BandedLu::factor(&b)?;
            let rhs: Vec<f64> = (0..n)
                .map(|k| {
                    i_field[k]
                        + dt * fields.beta[k] * sing.s_inf[k] * i_field[k]
                            / (1.0 + m * i_field[k])
                })
                .collect();
            let next = lu.solve(&rhs);
            step += 1;
            let sup_old = i_field.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let sup_new = next.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if !sup_new.is_finite() || sup_new > 4.0 * sup_old + 1.0 {
                dt *= 0.5;
                calm = 0;
                if dt < 1e-8 {
                    return Err(CoreError::NonConvergence {
                        what: "dS->0 basin relaxation step collapsed".into(),
                        history: vec![sup_old, sup_new],
                    });
                }
                continue;
            }
            let delta = next
                .iter()
                .zip(&i_field)
                .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
            i_field = next;
            if delta <= 1e-4 * sup_new.max(1e-6) && step > 20 {
                break;
            }
            calm += 1;
            if calm >= 20 && dt < dt_cap {
                dt = (1.2 * dt).min(dt_cap);
                calm = 0;
            }
        }
    }
    let op_scale = (0..n).fold(0.0f64, |a, k| {
        a.max(mesh.widths[k] * (op.diag[k].abs() + op.lower[k].abs() + op.upper[k].abs()))
    });
    let mut history = Vec::new();
    let mut converged = false;
    let mut iters = 0usize;
    for sweep in 0..80 {
        let s_field = solve_s(&i_field);
        let (i_new, newton_res) = newton_i(&s_field, i_field.clone())?;
        let delta = i_new
            .iter()
            .zip(&i_field)
            .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
        let floor =
            16.0 * f64::EPSILON * op_scale * i_new.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        i_field = i_new;
        history.push(delta.max(newton_res));
        iters = sweep + 1;
        if delta <= tol.max(floor) && newton_res <= tol.max(floor) {
            converged = true;
            break;
        }
        if sweep >= 10 {
            let recent = &history[history.len() - 5..];
            if recent.windows(2).all(|w| w[1] >= 0.999 * w[0]) {
                // flat at the rounding floor of these cell balances is
                // convergence; flat above it is genuine stagnation
                if *recent.last().unwrap() <= floor {
                    converged = true;
                    break;
                }
                return Err(CoreError::NonConvergence {
                    what: "dS->0 alternating fixed point stagnated".into(),
                    history,
                });
            }
        }
    }
    if !converged {
        return Err(CoreError::NonConvergence {
            what: "dS->0 alternating fixed point".into(),
            history,
        });
    }
    let s_field = solve_s(&i_field);
    let residual = *history.last().unwrap();
    Ok(EquilibriumResult {
        s: s_field,
        i: i_field,
        residual,
        newton_iterations: iters,
        converged: true,
        positive_branch: true,
        boundary_mass: Some(n_s),
        residual_history: history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expr;
    use crate::mesh::Grading;

    fn cs_a(beta: f64, m: f64) -> CoefficientSet {
        CoefficientSet {
            lambda: parse_expr("1").unwrap(),
            mu: parse_expr("1").unwrap(),
            beta: parse_expr(&format!("{beta}")).unwrap(),
            gamma: parse_expr("1").unwrap(),
            d_s: 1.0,
            d_i: 1.0,
            q: 0.0,
            m,
            length: 1.0,
        }
    }

    fn cs_b(m: f64) -> CoefficientSet {
        CoefficientSet {
            lambda: parse_expr("exp(x)").unwrap(),
            mu: parse_expr("1").unwrap(),
            beta: parse_expr("1 + exp(-x)").unwrap(),
            gamma: parse_expr("1").unwrap(),
            d_s: 1.0,
            d_i: 1.0,
            q: 1.0,
            m,
            length: 1.0,
        }
    }

    #[test]
    fn constant_ee() {
        let mesh = Mesh::new(1.0, 200, Grading::Uniform).unwrap();
        let r = solve_ee(&cs_a(3.0, 1.0), &mesh, None, 1e-12).unwrap();
        assert!(r.residual <= 1e-11);
        assert!(r.positive_branch);
        for (s, i) in r.s.iter().zip(&r.i) {
            assert!((s - 1.0).abs() < 1e-9, "S = {s}");
            assert!((i - 2.0).abs() < 1e-9, "I = {i}");
        }
    }

    #[test]
    fn below_threshold_lands_on_dfe_branch() {
        let mesh = Mesh::new(1.0, 100, Grading::Uniform).unwrap();
        let near_dfe = StateField::new(vec![1.0; 100], vec![1e-4; 100], 0.0).unwrap();
        match solve_ee(&cs_a(0.5, 1.0), &mesh, Some(&near_dfe), 1e-11) {
            Ok(r) => {
                assert!(!r.positive_branch, "no positive branch exists below threshold");
                for s in &r.s {
                    assert!((s - 1.0).abs() < 1e-8);
                }
            }
            Err(CoreError::NonConvergence { .. }) => {}
            Err(e) => panic!("unexpected error {e}"),
        }
    }

    #[test]
    fn analytic_ee_separable() {
        let mesh = Mesh::new(1.0, 4000, Grading::Uniform).unwrap();
        let coeffs = cs_b(10.0);
        let ee = analytic_ee_under_assumption(&coeffs, &mesh).unwrap();
        assert!((ee.kappa - 1.0).abs() < 1e-10);
        assert!((ee.r - 1.0).abs() < 1e-10);
        for (k, x) in mesh.centers.iter().enumerate() {
            assert!((ee.s[k] - x.exp()).abs() < 1e-12);
            assert!((ee.i[k] - x.exp() / 10.0).abs() < 1e-12);
        }
        // substitution oracle: the sampled pair satisfies the discrete
        // equilibrium equations to rounding because both profiles lie in the
        // discrete advection kernels and the reactions cancel pointwise
        let sys = EeSystem::new(&coeffs, &mesh).unwrap();
        let z = interleave(&ee.s, &ee.i);
        let res = sup(&sys.residual(&z));
        assert!(res <= 1e-9, "substitution residual {res}");
    }

    #[test]
    fn analytic_ee_matches_newton() {
        let mesh = Mesh::new(1.0, 2000, Grading::Uniform).unwrap();
        let coeffs = cs_b(10.0);
        let analytic = analytic_ee_under_assumption(&coeffs, &mesh).unwrap();
        let newton = solve_ee(&coeffs, &mesh, None, 1e-12).unwrap();
        let mut worst: f64 = 0.0;
        for k in 0..mesh.len() {
            worst = worst.max((analytic.s[k] - newton.s[k]).abs());
            worst = worst.max((analytic.i[k] - newton.i[k]).abs());
        }
        assert!(worst <= 1e-8, "analytic vs Newton sup distance {worst}");
    }

    #[test]
    fn analytic_ee_constant_case() {
        let mesh = Mesh::new(1.0, 100, Grading::Uniform).unwrap();
        let ee = analytic_ee_under_assumption(&cs_a(3.0, 1.0), &mesh).unwrap();
        assert!((ee.kappa - 1.0).abs() < 1e-12);
        assert!((ee.r - 2.0).abs() < 1e-12);
        for (s, i) in ee.s.iter().zip(&ee.i) {
            assert!((s - 1.0).abs() < 1e-12 && (i - 2.0).abs() < 1e-12);
        }
        // m = 4: the infected level carries the 1/m factor
        let ee = analytic_ee_under_assumption(&cs_a(3.0, 4.0), &mesh).unwrap();
        for i in &ee.i {
            assert!((i - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn analytic_ee_rejects_broken_separability() {
        let mesh = Mesh::new(1.0, 200, Grading::Uniform).unwrap();
        let mut coeffs = cs_b(1.0);
        coeffs.lambda = parse_expr("2*exp(x)").unwrap();
        match analytic_ee_under_assumption(&coeffs, &mesh) {
            Err(CoreError::HypothesisViolated(msg)) => {
                assert!(msg.contains("varies"), "got: {msg}");
            }
            other => panic!("expected rejection, got {other:?}"),
        }
    }

    #[test]
    fn theta_star_constant_cases() {
        let mesh = Mesh::new(1.0, 200, Grading::Uniform).unwrap();
        let theta = solve_theta_star(&cs_a(3.0, 1.0), &mesh, 1e-12).unwrap();
        for v in &theta {
            assert!((v - 2.0).abs() < 1e-9);
        }
        let theta = solve_theta_star(&cs_a(1.2, 1.0), &mesh, 1e-12).unwrap();
        for v in &theta {
            assert!((v - 0.2).abs() < 1e-9);
        }
        assert!(solve_theta_star(&cs_a(0.5, 1.0), &mesh, 1e-12).is_err());
    }

    #[test]
    fn limit_ds_infty_constant_config() {
        let mesh = Mesh::new(1.0, 200, Grading::Uniform).unwrap();
        let r =
            solve_limit_system(LimitKind::DsInfty, &cs_a(3.0, 1.0), &mesh, BcVariant::Derived, 1e-10)
                .unwrap();
        for (s, i) in r.s.iter().zip(&r.i) {
            assert!((s - 1.0).abs() < 1e-12);
            assert!((i - 2.0).abs() < 1e-8);
        }
    }

    #[test]
    fn limit_ds_infty_uniqueness_probe() {
        let mesh = Mesh::new(1.0, 150, Grading::Uniform).unwrap();
        let coeffs = CoefficientSet {
            lambda: parse_expr("1 + 0.3*x").unwrap(),
            mu: parse_expr("1").unwrap(),
            beta: parse_expr("2.5 + 0.5*sin(3*x)").unwrap(),
            gamma: parse_expr("1").unwrap(),
            d_s: 1.0,
            d_i: 0.7,
            q: 0.5,
            m: 1.0,
            length: 1.0,
        };
        let first =
            solve_limit_system(LimitKind::DsInfty, &coeffs, &mesh, BcVariant::Derived, 1e-10)
                .unwrap();
        // redo the Newton from two very different starts
        let fields = coeffs.sample(&mesh).unwrap();
        let s_bar = mesh.integrate(&fields.lambda, None).unwrap()
            / mesh.integrate(&fields.mu, None).unwrap();
        let op = assemble_operator(&mesh, coeffs.d_i, coeffs.q, None).unwrap();
        let n = mesh.len();
        let residual = |u: &[f64]| -> Vec<f64> {
            let au = op.apply(u);
            (0..n)
                .map(|k| {
                    mesh.widths[k]
                        * (au[k] + fields.gamma[k] * u[k]
                            - fields.beta[k] * s_bar * u[k] / (1.0 + u[k]))
                })
                .collect()
        };
        let jd = |u: &[f64], k: usize| {
            let sat = 1.0 + u[k];
            fields.gamma[k] - fields.beta[k] * s_bar / (sat * sat)
        };
        for start in [vec![0.1; n], first.i.iter().map(|v| 10.0 * v).collect::<Vec<_>>()] {
            // same path as the solver: relax into the basin, then Newton
            let relaxed = relax_scalar(
                &mesh,
                &op,
                &fields.gamma,
                |u, k| fields.beta[k] * s_bar * u[k] / (1.0 + u[k]),
                start,
                200,
                0.25,
            )
            .unwrap();
            let (i2, _, _, _) =
                scalar_newton(&mesh, relaxed, residual, jd, &op, 1e-10, "probe").unwrap();
            let worst = i2
                .iter()
                .zip(&first.i)
                .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
            assert!(worst <= 1e-9, "distinct starts disagree by {worst}");
        }
    }

    #[test]
    fn limit_di_infty_constant_config() {
        let mesh = Mesh::new(1.0, 200, Grading::Uniform).unwrap();
        let r =
            solve_limit_system(LimitKind::DiInfty, &cs_a(3.0, 1.0), &mesh, BcVariant::Derived, 1e-10)
                .unwrap();
        for (s, i) in r.s.iter().zip(&r.i) {
            assert!((s - 1.0).abs() < 1e-9);
            assert!((i - 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn limit_di_infty_needs_hypothesis() {
        let mesh = Mesh::new(1.0, 100, Grading::Uniform).unwrap();
        assert!(matches!(
            solve_limit_system(LimitKind::DiInfty, &cs_a(0.5, 1.0), &mesh, BcVariant::Derived, 1e-10),
            Err(CoreError::HypothesisViolated(_))
        ));
    }

    #[test]
    fn newton_terminal_decrease() {
        let mesh = Mesh::new(1.0, 300, Grading::Uniform).unwrap();
        let coeffs = cs_b(3.0);
        // rough start so the iteration has a visible quadratic tail
        let init = StateField::new(vec![1.5; 300], vec![0.2; 300], 0.0).unwrap();
        let r = solve_ee(&coeffs, &mesh, Some(&init), 1e-12).unwrap();
        // quadratic tail: some terminal step above the rounding floor
        // contracts by at least a factor 10
        let h = &r.residual_history;
        assert!(h.len() >= 2);
        let ok = h
            .windows(2)
            .any(|w| w[0] > 1e-13 && w[1] <= w[0] / 10.0);
        assert!(ok, "no strongly contracting Newton step in {h:?}");
    }
}
