//! Model coefficients: the four spatial rates and the scalar parameters.

use crate::error::{CoreError, Result};
use crate::expr::Expr;
use crate::mesh::{Grading, Mesh};

/// The data of the model: birth rate `Lambda`, death rate `mu`, transmission
/// rate `beta`, recovery rate `gamma` (all positive functions of `x`), the
/// two diffusion rates, the advection speed, the incidence saturation
/// constant and the habitat length.
#[derive(Debug, Clone)]
pub struct CoefficientSet {
    pub lambda: Expr,
    pub mu: Expr,
    pub beta: Expr,
    pub gamma: Expr,
    pub d_s: f64,
    pub d_i: f64,
    pub q: f64,
    pub m: f64,
    pub length: f64,
}

/// Coefficient samples at the cell centers of one mesh.
#[derive(Debug, Clone)]
pub struct CoeffFields {
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl CoefficientSet {
    /// Check the scalar constraints and positivity of the four rates on the
    /// given mesh and on a 4x uniform refinement of it (plus both endpoints).
    pub fn validate(&self, mesh: &Mesh) -> Result<()> {
        if !(self.d_s > 0.0) {
            return Err(CoreError::InvalidParameter(format!("dS = {} must be > 0", self.d_s)));
        }
        if !(self.d_i > 0.0) {
            return Err(CoreError::InvalidParameter(format!("dI = {} must be > 0", self.d_i)));
        }
        if !(self.q >= 0.0) {
            return Err(CoreError::InvalidParameter(format!("q = {} must be >= 0", self.q)));
        }
        if !(self.m > 0.0) {
            return Err(CoreError::InvalidParameter(format!("m = {} must be > 0", self.m)));
        }
        if !(self.length > 0.0) {
            return Err(CoreError::InvalidParameter(format!("L = {} must be > 0", self.length)));
        }
        if (mesh.length - self.length).abs() > 1e-12 * self.length {
            return Err(CoreError::InvalidParameter(format!(
                "mesh covers [0, {}] but L = {}",
                mesh.length, self.length
            )));
        }
        let fine = Mesh::new(self.length, mesh.len() * 4, Grading::Uniform)?;
        for m in [mesh, &fine] {
            self.sample(m)?;
        }
        for (name, e) in self.named_rates() {
            for x in [0.0, self.length] {
                let v = e.eval_checked(x)?;
                if v <= 0.0 {
                    return Err(CoreError::NonPositiveCoefficient { name, x, value: v });
                }
            }
        }
        Ok(())
    }

    fn named_rates(&self) -> [(&'static str, &Expr); 4] {
        [
            ("Lambda", &self.lambda),
            ("mu", &self.mu),
            ("beta", &self.beta),
            ("gamma", &self.gamma),
        ]
    }

    /// Sample the four rates at cell centers, enforcing finiteness and
    /// strict positivity.
    pub fn sample(&self, mesh: &Mesh) -> Result<CoeffFields> {
        let mut fields = CoeffFields {
            lambda: Vec::with_capacity(mesh.len()),
            mu: Vec::with_capacity(mesh.len()),
            beta: Vec::with_capacity(mesh.len()),
            gamma: Vec::with_capacity(mesh.len()),
        };
        for (name, e) in self.named_rates() {
            let out = match name {
                "Lambda" => &mut fields.lambda,
                "mu" => &mut fields.mu,
                "beta" => &mut fields.beta,
                _ => &mut fields.gamma,
            };
            for &x in &mesh.centers {
                let v = e.eval_checked(x)?;
                if v <= 0.0 {
                    return Err(CoreError::NonPositiveCoefficient { name, x, value: v });
                }
                out.push(v);
            }
        }
        Ok(fields)
    }
}

/// Evaluate an expression at each cell center, failing on non-finite values.
pub fn sample_on_mesh(expr: &Expr, mesh: &Mesh) -> Result<Vec<f64>> {
    mesh.centers.iter().map(|&x| expr.eval_checked(x)).collect()
}

/// `(max, min)` of the expression over the cell centers plus both endpoints.
pub fn extrema(expr: &Expr, mesh: &Mesh) -> Result<(f64, f64)> {
    let mut hi = f64::NEG_INFINITY;
    let mut lo = f64::INFINITY;
    for &x in mesh.centers.iter().chain([0.0, mesh.length].iter()) {
        let v = expr.eval_checked(x)?;
        hi = hi.max(v);
        lo = lo.min(v);
    }
    Ok((hi, lo))
}
