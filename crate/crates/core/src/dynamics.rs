//! Time integration of the parabolic system and the runtime diagnostics
//! (Lyapunov functional, boundedness ceilings, persistence floor).
//!
//! One step of the first-order IMEX splitting, from `(S, I)` at time `t`:
//!
//! 1. infection transfer `f = beta S I / (1 + m I)` evaluated at `t`;
//! 2. implicit solve `(Id + dt (A_I + gamma)) I' = I + dt f`;
//! 3. implicit solve `(Id + dt (A_S + mu)) S' = S + dt (Lambda - f + gamma I')`,
//!
//! where `A` is the zero-flux advection-diffusion operator. Both matrices are
//! M-matrices, so positive right-hand sides give positive states; a step that
//! still produces a non-positive node (possible through `-dt f`) is rejected
//! and retried with half the step. Summing the two cell balances telescopes
//! the fluxes and cancels `f` and the `gamma I'` exchange exactly, leaving
//! the discrete mass law
//!
//! ```text
//! int(S' + I') - int(S + I) = dt (int Lambda - int mu S').
//! ```

use crate::coeffs::{CoeffFields, CoefficientSet};
use crate::error::{CoreError, Result};
use crate::linalg::BandedLu;
use crate::mesh::Mesh;
use crate::operator::assemble_operator;

#[derive(Debug, Clone)]
pub struct StateField {
    pub s: Vec<f64>,
    pub i: Vec<f64>,
    pub t: f64,
}

impl StateField {
    pub fn new(s: Vec<f64>, i: Vec<f64>, t: f64) -> Result<Self> {
        if s.len() != i.len() {
            return Err(CoreError::InvalidParameter(
                "S and I must have the same length".into(),
            ));
        }
        let ok = |v: &[f64]| v.iter().all(|x| *x >= 0.0 && x.is_finite()) && v.iter().any(|x| *x > 0.0);
        if !ok(&s) || !ok(&i) {
            return Err(CoreError::InvalidParameter(
                "initial fields must be nonnegative, finite and not identically zero".into(),
            ));
        }
        Ok(StateField { s, i, t })
    }

    pub fn sup_distance(&self, other_s: &[f64], other_i: &[f64]) -> f64 {
        let ds = self
            .s
            .iter()
            .zip(other_s)
            .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
        let di = self
            .i
            .iter()
            .zip(other_i)
            .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
        ds.max(di)
    }
}

#[derive(Debug, Clone)]
pub struct SimOptions {
    pub dt: f64,
    pub t_end: f64,
    pub output_every: f64,
    pub positivity_retry_limit: usize,
    /// Reference equilibrium for the Lyapunov functional and sup-distance
    /// diagnostics.
    pub reference_ee: Option<(Vec<f64>, Vec<f64>)>,
}

impl SimOptions {
    pub fn new(dt: f64, t_end: f64, output_every: f64) -> Self {
        SimOptions { dt, t_end, output_every, positivity_retry_limit: 40, reference_ee: None }
    }
}

#[derive(Debug, Clone)]
pub struct SimulationTrace {
    pub times: Vec<f64>,
    pub mass_s: Vec<f64>,
    pub mass_i: Vec<f64>,
    pub min_s: Vec<f64>,
    pub min_i: Vec<f64>,
    pub max_total: Vec<f64>,
    /// Per-sample `max_x (S + I) e^{-qx/dS}`, the input of the pointwise
    /// ceiling monitor (meaningful when `dS = dI`).
    pub sup_weighted_total: Vec<f64>,
    pub lyapunov: Vec<f64>,
    pub sup_dist_to_ref: Vec<f64>,
    pub initial: StateField,
    pub final_state: StateField,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    /// Largest relative violation of the per-step discrete mass law.
    pub mass_law_max_violation: f64,
}

struct Stepper<'a> {
    mesh: &'a Mesh,
    coeffs: &'a CoefficientSet,
    fields: &'a CoeffFields,
    dt: f64,
    lu_s: BandedLu,
    lu_i: BandedLu,
}

impl<'a> Stepper<'a> {
    fn build(
        mesh: &'a Mesh,
        coeffs: &'a CoefficientSet,
        fields: &'a CoeffFields,
        dt: f64,
    ) -> Result<Self> {
        let op_s = assemble_operator(mesh, coeffs.d_s, coeffs.q, Some(&fields.mu))?;
        let op_i = assemble_operator(mesh, coeffs.d_i, coeffs.q, Some(&fields.gamma))?;
        let implicit = |op: &crate::operator::TridiagonalOperator| {
            let mut b = op.to_banded();
            for i in 0..mesh.len() {
                let v = b.get(i, i);
                b.set(i, i, 1.0 + dt * v);
                if i > 0 {
                    let l = b.get(i, i - 1);
                    b.set(i, i - 1, dt * l);
                }
                if i + 1 < mesh.len() {
                    let u = b.get(i, i + 1);
                    b.set(i, i + 1, dt * u);
                }
            }
            BandedLu::factor(&b)
        };
        Ok(Stepper { mesh, coeffs, fields, dt, lu_s: implicit(&op_s)?, lu_i: implicit(&op_i)? })
    }

    /// One IMEX step; returns the updated pair or `None` on a positivity
    /// rejection.
    fn step(&self, s: &[f64], i: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
        let n = self.mesh.len();
        let m = self.coeffs.m;
        let mut rhs_i = vec![0.0; n];
        let mut transfer = vec![0.0; n];
        for k in 0..n {
            let f = self.fields.beta[k] * s[k] * i[k] / (1.0 + m * i[k]);
            transfer[k] = f;
            rhs_i[k] = i[k] + self.dt * f;
        }
        let i_new = self.lu_i.solve(&rhs_i);
        let mut rhs_s = vec![0.0; n];
        for k in 0..n {
            rhs_s[k] = s[k]
                + self.dt
                    * (self.fields.lambda[k] - transfer[k] + self.fields.gamma[k] * i_new[k]);
        }
        let s_new = self.lu_s.solve(&rhs_s);
        let positive = s_new.iter().all(|v| *v > 0.0 && v.is_finite())
            && i_new.iter().all(|v| *v > 0.0 && v.is_finite());
        if positive {
            Some((s_new, i_new))
        } else {
            None
        }
    }
}

/// March the system to `opts.t_end`, sampling the trace every
/// `opts.output_every` time units (plus the initial and final states).
pub fn simulate(
    init: &StateField,
    coeffs: &CoefficientSet,
    mesh: &Mesh,
    opts: &SimOptions,
) -> Result<SimulationTrace> {
    if !(opts.dt > 0.0) || !(opts.t_end > opts.dt) {
        return Err(CoreError::InvalidParameter(format!(
            "need 0 < dt < t_end (dt = {}, t_end = {})",
            opts.dt, opts.t_end
        )));
    }
    if init.s.len() != mesh.len() {
        return Err(CoreError::InvalidParameter(
            "initial state does not match mesh".into(),
        ));
    }
    let fields = coeffs.sample(mesh)?;
    let weight_s: Vec<f64> = mesh
        .centers
        .iter()
        .map(|x| (-coeffs.q * x / coeffs.d_s).exp())
        .collect();

    let mut trace = SimulationTrace {
        times: Vec::new(),
        mass_s: Vec::new(),
        mass_i: Vec::new(),
        min_s: Vec::new(),
        min_i: Vec::new(),
        max_total: Vec::new(),
        sup_weighted_total: Vec::new(),
        lyapunov: Vec::new(),
        sup_dist_to_ref: Vec::new(),
        initial: init.clone(),
        final_state: init.clone(),
        accepted_steps: 0,
        rejected_steps: 0,
        mass_law_max_violation: 0.0,
    };

    let mut s = init.s.clone();
    let mut i = init.i.clone();
    let mut t = init.t;
    let t_end = init.t + opts.t_end;

    let sample = |trace: &mut SimulationTrace, s: &[f64], i: &[f64], t: f64| -> Result<()> {
        trace.times.push(t);
        trace.mass_s.push(mesh.integrate(s, None)?);
        trace.mass_i.push(mesh.integrate(i, None)?);
        trace.min_s.push(s.iter().cloned().fold(f64::INFINITY, f64::min));
        trace.min_i.push(i.iter().cloned().fold(f64::INFINITY, f64::min));
        trace
            .max_total
            .push(s.iter().zip(i).fold(f64::NEG_INFINITY, |a, (x, y)| a.max(x + y)));
        trace.sup_weighted_total.push(
            s.iter()
                .zip(i)
                .zip(&weight_s)
                .fold(f64::NEG_INFINITY, |a, ((x, y), w)| a.max((x + y) * w)),
        );
        if let Some((rs, ri)) = &opts.reference_ee {
            let state = StateField { s: s.to_vec(), i: i.to_vec(), t };
            trace.lyapunov.push(lyapunov_f(&state, coeffs, mesh, rs, ri)?);
            trace.sup_dist_to_ref.push(state.sup_distance(rs, ri));
        }
        Ok(())
    };
    sample(&mut trace, &s, &i, t)?;

    let mut dt = opts.dt;
    let mut stepper = Stepper::build(mesh, coeffs, &fields, dt)?;
    let mut accepted_since_reject = 0usize;
    let mut next_output = init.t + opts.output_every;
    let int_lambda = mesh.integrate(&fields.lambda, None)?;

    while t < t_end - 1e-12 * opts.t_end.max(1.0) {
        // land exactly on t_end with the final step
        let step_dt = dt.min(t_end - t);
        if stepper.dt != step_dt {
            stepper = Stepper::build(mesh, coeffs, &fields, step_dt)?;
        }
        match stepper.step(&s, &i) {
            Some((s_new, i_new)) => {
                // discrete mass law audit
                let total_old = mesh.integrate(&s, None)? + mesh.integrate(&i, None)?;
                let total_new = mesh.integrate(&s_new, None)? + mesh.integrate(&i_new, None)?;
                let source = step_dt
                    * (int_lambda - mesh.integrate(&s_new, Some(&fields.mu))?);
                let scale = total_old.abs().max(total_new.abs()).max(1e-300);
                let violation = ((total_new - total_old) - source).abs() / scale;
                trace.mass_law_max_violation = trace.mass_law_max_violation.max(violation);

                s = s_new;
                i = i_new;
                t += step_dt;
                trace.accepted_steps += 1;
                accepted_since_reject += 1;
                if dt < opts.dt && accepted_since_reject >= 10 {
                    dt = (2.0 * dt).min(opts.dt);
                    stepper = Stepper::build(mesh, coeffs, &fields, dt)?;
                    accepted_since_reject = 0;
                }
                if t >= next_output - 1e-12 {
                    sample(&mut trace, &s, &i, t)?;
                    while next_output <= t + 1e-12 {
                        next_output += opts.output_every;
                    }
                }
            }
            None => {
                trace.rejected_steps += 1;
                if trace.rejected_steps > opts.positivity_retry_limit {
                    return Err(CoreError::StepFailure(format!(
                        "positivity retry limit {} exhausted at t = {t}",
                        opts.positivity_retry_limit
                    )));
                }
                dt *= 0.5;
                accepted_since_reject = 0;
                stepper = Stepper::build(mesh, coeffs, &fields, dt)?;
            }
        }
    }
    if *trace.times.last().unwrap() < t - 1e-12 {
        sample(&mut trace, &s, &i, t)?;
    }
    trace.final_state = StateField { s, i, t };
    Ok(trace)
}

/// Lyapunov functional of the attractivity argument:
/// `F = 1/2 int e^{qx/dS} (u - u_ref)^2 + 1/2 int e^{qx/dI} (v - v_ref)^2`
/// with `u = S e^{-qx/dS}`, `v = I e^{-qx/dI}`.
pub fn lyapunov_f(
    state: &StateField,
    coeffs: &CoefficientSet,
    mesh: &Mesh,
    ref_s: &[f64],
    ref_i: &[f64],
) -> Result<f64> {
    let n = mesh.len();
    if ref_s.len() != n || ref_i.len() != n {
        return Err(CoreError::InvalidParameter("reference does not match mesh".into()));
    }
    let mut total = 0.0;
    for k in 0..n {
        let x = mesh.centers[k];
        let ws = (coeffs.q * x / coeffs.d_s).exp();
        let wi = (coeffs.q * x / coeffs.d_i).exp();
        let du = state.s[k] / ws - ref_s[k] / ws;
        let dv = state.i[k] / wi - ref_i[k] / wi;
        total += 0.5 * (ws * du * du + wi * dv * dv) * mesh.widths[k];
    }
    Ok(total)
}

#[derive(Debug, Clone)]
pub struct MonitorReport {
    /// Whether the pointwise ceiling applies (`dS = dI`).
    pub pointwise_applicable: bool,
    /// Per-sample `max_x (S+I) e^{-qx/d} - C`; nonpositive means satisfied.
    pub pointwise_margins: Vec<f64>,
    pub max_pointwise_margin: f64,
    /// Per-sample `H(t) - Gronwall bound`; nonpositive means satisfied.
    pub gronwall_margins: Vec<f64>,
    pub max_gronwall_margin: f64,
    /// Persistence floor: min over the second half of the run of `min_x I`.
    pub eta_hat: f64,
    pub epsilon0: f64,
    pub sigma: f64,
}

/// Evaluate the explicit boundedness ceilings and the persistence floor on
/// a finished trace. `epsilon0` is fixed at half its admissible ceiling
/// `m mu_* / beta^*` and `sigma = min(eps0 gamma_* / (1 + eps0),
/// mu_* - eps0 beta^* / m)`.
pub fn evaluate_monitors(
    trace: &SimulationTrace,
    coeffs: &CoefficientSet,
    mesh: &Mesh,
) -> Result<MonitorReport> {
    let (_, mu_sub) = crate::coeffs::extrema(&coeffs.mu, mesh)?;
    let (beta_star, _) = crate::coeffs::extrema(&coeffs.beta, mesh)?;
    let (_, gamma_sub) = crate::coeffs::extrema(&coeffs.gamma, mesh)?;
    let eps0 = 0.5 * coeffs.m * mu_sub / beta_star;
    let sigma = (eps0 * gamma_sub / (1.0 + eps0)).min(mu_sub - eps0 * beta_star / coeffs.m);

    let fields = coeffs.sample(mesh)?;
    let pointwise_applicable = (coeffs.d_s - coeffs.d_i).abs() <= 1e-14 * coeffs.d_s.abs();
    let mut pointwise_margins = Vec::new();
    let mut max_pointwise_margin = f64::NEG_INFINITY;
    if pointwise_applicable {
        let d = coeffs.d_s;
        // ceiling constant: max of the source term and the initial-data term
        let mut c_lambda = f64::NEG_INFINITY;
        let mut c_init = f64::NEG_INFINITY;
        for k in 0..mesh.len() {
            let w = (-coeffs.q * mesh.centers[k] / d).exp();
            c_lambda = c_lambda.max(fields.lambda[k] / sigma * w);
            c_init = c_init
                .max((trace.initial.s[k] + (1.0 + eps0) * trace.initial.i[k]) * w);
        }
        let ceiling = c_lambda.max(c_init);
        for v in &trace.sup_weighted_total {
            let margin = v - ceiling;
            pointwise_margins.push(margin);
            max_pointwise_margin = max_pointwise_margin.max(margin);
        }
    }

    let int_lambda = mesh.integrate(&fields.lambda, None)?;
    let h0 = trace.mass_s[0] + (1.0 + eps0) * trace.mass_i[0];
    let t0 = trace.times[0];
    let mut gronwall_margins = Vec::with_capacity(trace.times.len());
    let mut max_gronwall_margin = f64::NEG_INFINITY;
    for (k, t) in trace.times.iter().enumerate() {
        let h = trace.mass_s[k] + (1.0 + eps0) * trace.mass_i[k];
        let decay = (-sigma * (t - t0)).exp();
        let bound = h0 * decay + int_lambda / sigma * (1.0 - decay);
        let margin = h - bound;
        gronwall_margins.push(margin);
        max_gronwall_margin = max_gronwall_margin.max(margin);
    }

    let t_end = *trace.times.last().unwrap();
    let t_half = t0 + 0.5 * (t_end - t0);
    let eta_hat = trace
        .times
        .iter()
        .zip(&trace.min_i)
        .filter(|(t, _)| **t >= t_half)
        .map(|(_, v)| *v)
        .fold(f64::INFINITY, f64::min);

    Ok(MonitorReport {
        pointwise_applicable,
        pointwise_margins,
        max_pointwise_margin,
        gronwall_margins,
        max_gronwall_margin,
        eta_hat,
        epsilon0: eps0,
        sigma,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibria::solve_ee;
    use crate::expr::parse_expr;
    use crate::mesh::Grading;

    fn cs_a(beta: f64) -> CoefficientSet {
        CoefficientSet {
            lambda: parse_expr("1").unwrap(),
            mu: parse_expr("1").unwrap(),
            beta: parse_expr(&format!("{beta}")).unwrap(),
            gamma: parse_expr("1").unwrap(),
            d_s: 1.0,
            d_i: 1.0,
            q: 0.0,
            m: 1.0,
            length: 1.0,
        }
    }

    #[test]
    fn converges_to_constant_ee() {
        let mesh = Mesh::new(1.0, 100, Grading::Uniform).unwrap();
        let coeffs = cs_a(3.0);
        let init =
            StateField::new(vec![1.0; 100], vec![0.1; 100], 0.0).unwrap();
        let opts = SimOptions::new(0.05, 200.0, 10.0);
        let trace = simulate(&init, &coeffs, &mesh, &opts).unwrap();
        // cross-solver oracle: Newton on the same mesh
        let ee = solve_ee(&coeffs, &mesh, None, 1e-12).unwrap();
        let dist = trace.final_state.sup_distance(&ee.s, &ee.i);
        assert!(dist < 1e-6, "sup distance to Newton EE = {dist}");
        for (s, i) in ee.s.iter().zip(&ee.i) {
            assert!((s - 1.0).abs() < 1e-9 && (i - 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn extinction_below_threshold() {
        let mesh = Mesh::new(1.0, 100, Grading::Uniform).unwrap();
        let coeffs = cs_a(0.5);
        let init = StateField::new(vec![1.0; 100], vec![0.1; 100], 0.0).unwrap();
        let opts = SimOptions::new(0.05, 200.0, 10.0);
        let trace = simulate(&init, &coeffs, &mesh, &opts).unwrap();
        assert!(*trace.mass_i.last().unwrap() < 1e-8);
        for (ms, mi) in trace.min_s.iter().zip(&trace.min_i) {
            assert!(*ms > 0.0 && *mi > 0.0);
        }
    }

    #[test]
    fn mass_law_holds() {
        let mesh = Mesh::new(1.0, 80, Grading::Geometric { ratio: 0.98 }).unwrap();
        let coeffs = CoefficientSet {
            lambda: parse_expr("1 + 0.4*x").unwrap(),
            mu: parse_expr("1.1 - 0.3*x").unwrap(),
            beta: parse_expr("2 + sin(3*x)").unwrap(),
            gamma: parse_expr("1").unwrap(),
            d_s: 0.6,
            d_i: 0.4,
            q: 1.5,
            m: 2.0,
            length: 1.0,
        };
        let init = StateField::new(
            mesh.centers.iter().map(|x| 1.0 + x).collect(),
            vec![0.3; 80],
            0.0,
        )
        .unwrap();
        let opts = SimOptions::new(0.02, 5.0, 1.0);
        let trace = simulate(&init, &coeffs, &mesh, &opts).unwrap();
        assert!(
            trace.mass_law_max_violation <= 1e-10,
            "mass law violation {}",
            trace.mass_law_max_violation
        );
    }

    #[test]
    fn lyapunov_values() {
        let mesh = Mesh::new(1.0, 50, Grading::Uniform).unwrap();
        let coeffs = cs_a(3.0);
        let ref_s = vec![1.0; 50];
        let ref_i = vec![2.0; 50];
        let state = StateField::new(ref_s.clone(), ref_i.clone(), 0.0).unwrap();
        assert_eq!(lyapunov_f(&state, &coeffs, &mesh, &ref_s, &ref_i).unwrap(), 0.0);
        // q = 0, S - ref = 1, I = ref: F = 1/2 int 1 = 0.5
        let shifted = StateField::new(vec![2.0; 50], ref_i.clone(), 0.0).unwrap();
        let f = lyapunov_f(&shifted, &coeffs, &mesh, &ref_s, &ref_i).unwrap();
        assert!((f - 0.5).abs() < 1e-12);
    }

    #[test]
    fn monitors_on_constant_config() {
        let mesh = Mesh::new(1.0, 100, Grading::Uniform).unwrap();
        let coeffs = cs_a(3.0);
        let init = StateField::new(vec![1.0; 100], vec![0.1; 100], 0.0).unwrap();
        let opts = SimOptions::new(0.05, 120.0, 2.0);
        let trace = simulate(&init, &coeffs, &mesh, &opts).unwrap();
        let rep = evaluate_monitors(&trace, &coeffs, &mesh).unwrap();
        assert!(rep.pointwise_applicable);
        assert!((rep.epsilon0 - 1.0 / 6.0).abs() < 1e-12);
        assert!((rep.sigma - 1.0 / 7.0).abs() < 1e-12);
        assert!(rep.max_pointwise_margin <= 0.0, "margin {}", rep.max_pointwise_margin);
        assert!(rep.max_gronwall_margin <= 0.0, "margin {}", rep.max_gronwall_margin);
        // persistent above threshold
        assert!(rep.eta_hat > 1e-6);
        // stability of the floor under doubling the horizon
        let opts2 = SimOptions::new(0.05, 240.0, 2.0);
        let trace2 = simulate(&init, &coeffs, &mesh, &opts2).unwrap();
        let rep2 = evaluate_monitors(&trace2, &coeffs, &mesh).unwrap();
        assert!((rep2.eta_hat - rep.eta_hat).abs() <= 0.2 * rep.eta_hat);
    }

    #[test]
    fn rejects_bad_initial_data() {
        assert!(StateField::new(vec![0.0; 4], vec![1.0; 4], 0.0).is_err());
        assert!(StateField::new(vec![1.0, -0.1, 1.0], vec![1.0; 3], 0.0).is_err());
        let ok = StateField::new(vec![0.0, 1.0, 0.0], vec![0.1; 3], 0.0);
        assert!(ok.is_ok(), "nonnegative, not identically zero is allowed");
    }
}
