//! Cell-centered finite-volume meshes on `[0, L]` and midpoint quadrature.

use crate::error::{CoreError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Grading {
    Uniform,
    /// Cell widths form a geometric sequence `h_{i+1} = ratio * h_i`;
    /// a ratio below one refines toward the downstream end `x = L`.
    Geometric { ratio: f64 },
}

#[derive(Debug, Clone)]
pub struct Mesh {
    pub length: f64,
    pub centers: Vec<f64>,
    pub faces: Vec<f64>,
    pub widths: Vec<f64>,
    pub grading: Grading,
}

impl Mesh {
    pub fn new(length: f64, n: usize, grading: Grading) -> Result<Self> {
        if !(length > 0.0) || !length.is_finite() {
            return Err(CoreError::InvalidParameter(format!("L = {length} must be positive")));
        }
        if n < 8 {
            return Err(CoreError::InvalidParameter(format!("cell count {n} < 8")));
        }
        let widths: Vec<f64> = match grading {
            Grading::Uniform => vec![length / n as f64; n],
            Grading::Geometric { ratio } => {
                if !(0.8..1.25).contains(&ratio) {
                    return Err(CoreError::InvalidParameter(format!(
                        "geometric ratio {ratio} outside (0.8, 1.25)"
                    )));
                }
                if (ratio - 1.0).abs() < 1e-12 {
                    vec![length / n as f64; n]
                } else {
                    // h_0 (1 - r^n) / (1 - r) = L
                    let h0 = length * (1.0 - ratio) / (1.0 - ratio.powi(n as i32));
                    (0..n).map(|i| h0 * ratio.powi(i as i32)).collect()
                }
            }
        };
        let mut faces = Vec::with_capacity(n + 1);
        faces.push(0.0);
        let mut acc = 0.0;
        for w in &widths {
            acc += w;
            faces.push(acc);
        }
        // pin the last face to L exactly; the drift is pure rounding
        faces[n] = length;
        let mut widths = widths;
        widths[n - 1] = faces[n] - faces[n - 1];
        let centers = (0..n).map(|i| 0.5 * (faces[i] + faces[i + 1])).collect();
        let mesh = Mesh { length, centers, faces, widths, grading };
        debug_assert!(
            (mesh.widths.iter().sum::<f64>() - length).abs() <= 1e-12 * length,
            "cell widths must sum to L"
        );
        Ok(mesh)
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// Midpoint quadrature `sum u_i (w_i) h_i`.
    pub fn integrate(&self, u: &[f64], weight: Option<&[f64]>) -> Result<f64> {
        if u.len() != self.len() {
            return Err(CoreError::InvalidParameter(format!(
                "field length {} does not match mesh size {}",
                u.len(),
                self.len()
            )));
        }
        if let Some(w) = weight {
            if w.len() != self.len() {
                return Err(CoreError::InvalidParameter(format!(
                    "weight length {} does not match mesh size {}",
                    w.len(),
                    self.len()
                )));
            }
        }
        let mut total = 0.0;
        match weight {
            Some(w) => {
                for i in 0..self.len() {
                    total += u[i] * w[i] * self.widths[i];
                }
            }
            None => {
                for i in 0..self.len() {
                    total += u[i] * self.widths[i];
                }
            }
        }
        Ok(total)
    }

    /// Integral over the trailing window `[x_from, L]`, counting cells by center.
    pub fn integrate_tail(&self, u: &[f64], x_from: f64) -> f64 {
        let mut total = 0.0;
        for i in 0..self.len() {
            if self.centers[i] >= x_from {
                total += u[i] * self.widths[i];
            }
        }
        total
    }
}
