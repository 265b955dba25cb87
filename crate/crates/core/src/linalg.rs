//! Direct banded solvers and the principal generalized symmetric eigensolver.

use crate::error::{CoreError, Result};

/// General banded matrix with `bandwidth` sub- and super-diagonals, stored
/// by diagonal: `bands[k][i]` is entry `(i, i + k - bandwidth)` when that
/// column index is in range. `bands` has `2 * bandwidth + 1` rows.
#[derive(Debug, Clone)]
pub struct BandedMatrix {
    pub n: usize,
    pub bandwidth: usize,
    pub bands: Vec<Vec<f64>>,
}

impl BandedMatrix {
    pub fn zeros(n: usize, bandwidth: usize) -> Self {
        BandedMatrix { n, bandwidth, bands: vec![vec![0.0; n]; 2 * bandwidth + 1] }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let b = self.bandwidth as isize;
        let k = j as isize - i as isize + b;
        if (0..=2 * b).contains(&k) {
            self.bands[k as usize][i]
        } else {
            0.0
        }
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let b = self.bandwidth as isize;
        let k = j as isize - i as isize + b;
        assert!(
            (0..=2 * b).contains(&k),
            "entry ({i},{j}) outside bandwidth {b}"
        );
        self.bands[k as usize][i] = v;
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let old = self.get(i, j);
        self.set(i, j, old + v);
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let b = self.bandwidth as isize;
        let mut out = vec![0.0; self.n];
        for i in 0..self.n {
            let lo = (i as isize - b).max(0) as usize;
            let hi = ((i as isize + b) as usize).min(self.n - 1);
            let mut acc = 0.0;
            for j in lo..=hi {
                acc += self.get(i, j) * x[j];
            }
            out[i] = acc;
        }
        out
    }
}

/// LU factorization of a banded matrix with partial pivoting. Row swaps
/// widen the upper band to `2 * bandwidth`, as in the classic band solver.
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    /// working array: rows are diagonals from `ku` superdiagonals (after
    /// widening) down to `kl` subdiagonals of the factored matrix
    ab: Vec<Vec<f64>>,
    pivots: Vec<usize>,
}

impl BandedLu {
    /// Factor `m`. Fails only on an exactly unusable pivot (below 1e-300).
    pub fn factor(m: &BandedMatrix) -> Result<Self> {
        let n = m.n;
        let kl = m.bandwidth;
        let ku = 2 * m.bandwidth;
        // ab[r][j] holds entry (j + r - ku, j): diagonal offset r - ku
        let mut ab = vec![vec![0.0; n]; kl + ku + 1];
        for i in 0..n {
            let lo = i.saturating_sub(kl);
            let hi = (i + kl).min(n - 1);
            for j in lo..=hi {
                let r = (i as isize - j as isize + ku as isize) as usize;
                ab[r][j] = m.get(i, j);
            }
        }
        let mut pivots = vec![0usize; n];
        for k in 0..n {
            // pivot search within the band below the diagonal
            let reach = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = ab[ku][k].abs();
            for i in (k + 1)..=reach {
                let v = ab[i - k + ku][k].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best < 1e-300 {
                return Err(CoreError::SingularMatrix { pivot_index: k });
            }
            pivots[k] = p;
            let cols_hi = (k + ku).min(n - 1);
            if p != k {
                for j in k..=cols_hi {
                    let rk = (k as isize - j as isize + ku as isize) as usize;
                    let rp = (p as isize - j as isize + ku as isize) as usize;
                    let tmp = ab[rk][j];
                    ab[rk][j] = ab[rp][j];
                    ab[rp][j] = tmp;
                }
            }
            let piv = ab[ku][k];
            for i in (k + 1)..=reach {
                let r = i - k + ku;
                let factor = ab[r][k] / piv;
                ab[r][k] = factor;
                for j in (k + 1)..=cols_hi {
                    let ri = (i as isize - j as isize + ku as isize) as usize;
                    let rk = (k as isize - j as isize + ku as isize) as usize;
                    ab[ri][j] -= factor * ab[rk][j];
                }
            }
        }
        Ok(BandedLu { n, kl, ku, ab, pivots })
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        assert_eq!(rhs.len(), self.n);
        let mut x = rhs.to_vec();
        for k in 0..self.n {
            let p = self.pivots[k];
            if p != k {
                x.swap(k, p);
            }
            let reach = (k + self.kl).min(self.n - 1);
            for i in (k + 1)..=reach {
                x[i] -= self.ab[i - k + self.ku][k] * x[k];
            }
        }
        for k in (0..self.n).rev() {
            let hi = (k + self.ku).min(self.n - 1);
            for j in (k + 1)..=hi {
                let r = (k as isize - j as isize + self.ku as isize) as usize;
                x[k] -= self.ab[r][j] * x[j];
            }
            x[k] /= self.ab[self.ku][k];
        }
        x
    }
}

/// Solve `M x = rhs` by banded LU with partial pivoting.
pub fn solve_banded(m: &BandedMatrix, rhs: &[f64]) -> Result<Vec<f64>> {
    if rhs.len() != m.n {
        return Err(CoreError::InvalidParameter(format!(
            "rhs length {} does not match matrix size {}",
            rhs.len(),
            m.n
        )));
    }
    Ok(BandedLu::factor(m)?.solve(rhs))
}

/// Symmetric tridiagonal matrix: `diag` of length `n`, `off[i]` couples
/// `i` and `i+1`.
#[derive(Debug, Clone)]
pub struct SymTridiagonal {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl SymTridiagonal {
    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        let mut out = vec![0.0; n];
        for i in 0..n {
            let mut v = self.diag[i] * x[i];
            if i > 0 {
                v += self.off[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                v += self.off[i] * x[i + 1];
            }
            out[i] = v;
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.diag
            .iter()
            .chain(self.off.iter())
            .fold(0.0f64, |acc, v| acc.max(v.abs()))
    }

    /// Number of eigenvalues strictly below `sigma` (Sturm count via the
    /// LDL^T recurrence, with the usual tiny-pivot guard).
    pub fn count_below(&self, sigma: f64) -> usize {
        let n = self.len();
        let tiny = f64::MIN_POSITIVE / f64::EPSILON;
        let mut count = 0usize;
        let mut d = self.diag[0] - sigma;
        if d == 0.0 {
            d = -tiny;
        }
        if d < 0.0 {
            count += 1;
        }
        for i in 1..n {
            d = (self.diag[i] - sigma) - self.off[i - 1] * self.off[i - 1] / d;
            if d == 0.0 {
                d = -tiny;
            }
            if d < 0.0 {
                count += 1;
            }
        }
        count
    }

    fn to_banded(&self, shift: f64) -> BandedMatrix {
        let n = self.len();
        let mut m = BandedMatrix::zeros(n, 1);
        for i in 0..n {
            m.set(i, i, self.diag[i] - shift);
            if i + 1 < n {
                m.set(i, i + 1, self.off[i]);
                m.set(i + 1, i, self.off[i]);
            }
        }
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EigMode {
    /// Minimize the Rayleigh quotient `v^T K v / v^T M v`.
    Smallest,
    /// Maximize `v^T M v / v^T K v` (requires `K` positive definite);
    /// equals the reciprocal of the smallest eigenvalue of `(K, M)`.
    Largest,
}

#[derive(Debug, Clone)]
pub struct EigenResult {
    pub value: f64,
    pub vector: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

fn normalize(x: &mut [f64]) {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        for v in x.iter_mut() {
            *v /= norm;
        }
    }
}

/// Smallest eigenvalue of a symmetric tridiagonal matrix with its
/// eigenvector: two bootstrap inverse-iteration steps from a Gershgorin
/// shift, then Rayleigh-quotient shifted inverse iteration. Convergence is
/// judged on the residual relative to `|T v|`, so strongly graded meshes
/// (matrix entries spanning many orders) do not inflate the target. A Sturm
/// count verifies principality; if the iteration landed on a higher
/// eigenvalue, bisection isolates the smallest one and a fixed-shift
/// inverse iteration recovers its vector.
fn smallest_standard(t: &SymTridiagonal, tol: f64) -> Result<EigenResult> {
    let n = t.len();

    // Gershgorin interval
    let mut glo = f64::INFINITY;
    let mut ghi = f64::NEG_INFINITY;
    for i in 0..n {
        let mut r = 0.0;
        if i > 0 {
            r += t.off[i - 1].abs();
        }
        if i + 1 < n {
            r += t.off[i].abs();
        }
        glo = glo.min(t.diag[i] - r);
        ghi = ghi.max(t.diag[i] + r);
    }
    let eig_scale = |lam: f64| 1.0 + lam.abs();

    // a shift can land on an eigenvalue to all bits; escalate the nudge until
    // the factorization goes through (harmless for inverse iteration)
    let solve_shifted = |sigma: f64, rhs: &[f64]| -> Result<Vec<f64>> {
        let mut last = CoreError::SingularMatrix { pivot_index: 0 };
        for nudge in [0.0, 1e-12, 1e-9, 1e-6, 1e-4] {
            let s = sigma - nudge * eig_scale(sigma);
            match BandedLu::factor(&t.to_banded(s)) {
                Ok(lu) => return Ok(lu.solve(rhs)),
                Err(e) => last = e,
            }
        }
        Err(last)
    };

    let rq = |v: &[f64]| -> f64 {
        let tv = t.apply(v);
        v.iter().zip(&tv).map(|(a, b)| a * b).sum::<f64>()
            / v.iter().map(|a| a * a).sum::<f64>()
    };
    // residual, its convergence target for a unit vector, and the rounding
    // floor `eps * || |T| |v| ||` achievable by an exact eigenpair
    let measure = |v: &[f64], lambda: f64| -> (f64, f64) {
        let tv = t.apply(v);
        let residual = tv
            .iter()
            .zip(v)
            .map(|(a, b)| (a - lambda * b) * (a - lambda * b))
            .sum::<f64>()
            .sqrt();
        let mut floor_sq = 0.0;
        for i in 0..n {
            let mut row = t.diag[i].abs() * v[i].abs();
            if i > 0 {
                row += t.off[i - 1].abs() * v[i - 1].abs();
            }
            if i + 1 < n {
                row += t.off[i].abs() * v[i + 1].abs();
            }
            floor_sq += row * row;
        }
        let tnorm: f64 = tv.iter().map(|a| a * a).sum::<f64>().sqrt();
        let target = tol.max(0.0) * (tnorm + lambda.abs())
            + 32.0 * f64::EPSILON * floor_sq.sqrt();
        (residual, target)
    };

    let mut v = vec![1.0 / (n as f64).sqrt(); n];
    let mut sigma = glo - 0.01 * eig_scale(glo);
    let mut lambda = 0.0;
    let mut residual = f64::INFINITY;
    let mut target = 0.0;
    let mut iterations = 0usize;

    for k in 0..200 {
        iterations = k + 1;
        let mut w = solve_shifted(sigma, &v)?;
        normalize(&mut w);
        v = w;
        lambda = rq(&v);
        let (r, tg) = measure(&v, lambda);
        residual = r;
        target = tg;
        if k >= 2 {
            // Rayleigh shift after the two bootstrap steps
            sigma = lambda;
        }
        if residual <= target && k >= 2 {
            break;
        }
    }

    // principality check with an eigenvalue-scaled margin
    let margin = (10.0 * residual).max(1e-9 * eig_scale(lambda));
    if residual > target || t.count_below(lambda - margin) > 0 {
        // bisection rescue on [glo, current estimate]
        let mut lo = glo - 1e-3 * eig_scale(glo);
        let mut hi = if lambda.is_finite() { lambda.min(ghi) + margin } else { ghi };
        for _ in 0..300 {
            let mid = 0.5 * (lo + hi);
            if t.count_below(mid) > 0 {
                hi = mid;
            } else {
                lo = mid;
            }
            iterations += 1;
            if hi - lo <= 1e-14 * eig_scale(mid) {
                break;
            }
        }
        let sigma = lo - (hi - lo) - 1e-12 * eig_scale(lo);
        let mut w = vec![1.0 / (n as f64).sqrt(); n];
        for _ in 0..8 {
            let mut ww = solve_shifted(sigma, &w)?;
            normalize(&mut ww);
            w = ww;
            iterations += 1;
        }
        v = w;
        lambda = rq(&v);
        let (r, tg) = measure(&v, lambda);
        residual = r;
        target = tg;
        if residual > target || t.count_below(lambda - margin) > 0 {
            return Err(CoreError::EigenNonConvergence { iterations, residual });
        }
    }

    // orient positively
    let sum: f64 = v.iter().sum();
    if sum < 0.0 {
        for x in v.iter_mut() {
            *x = -*x;
        }
    }
    Ok(EigenResult { value: lambda, vector: v, iterations, residual })
}

/// Principal eigenpair of the generalized symmetric problem `K v = lambda M v`
/// with `M` a strictly positive diagonal.
///
/// `Smallest` returns the minimum of `v^T K v / v^T M v`; `Largest` returns
/// the maximum of `v^T M v / v^T K v`, driven by inverse iteration on the
/// diagonally scaled pencil (equivalent to power iteration on `K^{-1} M`).
/// The eigenvector is sign-normalized positive and scaled to `v^T M v = 1`.
/// Deterministic: iteration starts from the all-ones vector.
pub fn principal_generalized_eig(
    k: &SymTridiagonal,
    m_diag: &[f64],
    mode: EigMode,
    tol: f64,
) -> Result<EigenResult> {
    let n = k.len();
    if m_diag.len() != n {
        return Err(CoreError::InvalidParameter(format!(
            "mass length {} does not match matrix size {n}",
            m_diag.len()
        )));
    }
    if m_diag.iter().any(|&m| !(m > 0.0) || !m.is_finite()) {
        return Err(CoreError::InvalidParameter("mass must be strictly positive".into()));
    }
    // congruence-scale to a standard symmetric tridiagonal problem
    let d: Vec<f64> = m_diag.iter().map(|m| 1.0 / m.sqrt()).collect();
    let mut diag = vec![0.0; n];
    let mut off = vec![0.0; n.saturating_sub(1)];
    for i in 0..n {
        diag[i] = k.diag[i] * d[i] * d[i];
        if i + 1 < n {
            off[i] = k.off[i] * d[i] * d[i + 1];
        }
    }
    let t = SymTridiagonal { diag, off };
    let base = smallest_standard(&t, tol)?;

    let value = match mode {
        EigMode::Smallest => base.value,
        EigMode::Largest => {
            if base.value <= 0.0 {
                return Err(CoreError::InvalidParameter(format!(
                    "largest-mode quotient needs K positive definite \
                     (smallest pencil eigenvalue {} <= 0)",
                    base.value
                )));
            }
            1.0 / base.value
        }
    };

    // map back and M-normalize
    let mut v: Vec<f64> = base.vector.iter().zip(&d).map(|(x, di)| x * di).collect();
    let mnorm = v
        .iter()
        .zip(m_diag)
        .map(|(x, m)| x * x * m)
        .sum::<f64>()
        .sqrt();
    for x in v.iter_mut() {
        *x /= mnorm;
    }

    let min_comp = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let max_comp = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if min_comp < -1e-10 * max_comp.abs().max(1e-300) {
        return Err(CoreError::NonPositiveEigenvector { min_component: min_comp });
    }

    // residual in the caller's (K, M) convention
    let kv = k.apply(&v);
    let residual = match mode {
        EigMode::Smallest => kv
            .iter()
            .zip(&v)
            .zip(m_diag)
            .map(|((a, x), m)| {
                let r = a - value * m * x;
                r * r
            })
            .sum::<f64>()
            .sqrt(),
        EigMode::Largest => kv
            .iter()
            .zip(&v)
            .zip(m_diag)
            .map(|((a, x), m)| {
                let r = m * x - value * a;
                r * r
            })
            .sum::<f64>()
            .sqrt(),
    };
    Ok(EigenResult { value, vector: v, iterations: base.iterations, residual })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tridiag(n: usize, lo: f64, di: f64, up: f64) -> BandedMatrix {
        let mut m = BandedMatrix::zeros(n, 1);
        for i in 0..n {
            m.set(i, i, di);
            if i > 0 {
                m.set(i, i - 1, lo);
            }
            if i + 1 < n {
                m.set(i, i + 1, up);
            }
        }
        m
    }

    #[test]
    fn solve_identity() {
        let m = tridiag(3, 0.0, 1.0, 0.0);
        let x = solve_banded(&m, &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(x, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn solve_poisson_3x3() {
        // hand elimination: (-1, 2, -1) x = e_0 gives (0.75, 0.5, 0.25)
        let m = tridiag(3, -1.0, 2.0, -1.0);
        let x = solve_banded(&m, &[1.0, 0.0, 0.0]).unwrap();
        for (got, want) in x.iter().zip([0.75, 0.5, 0.25]) {
            assert!((got - want).abs() < 1e-14);
        }
    }

    #[test]
    fn solve_singular_reports() {
        let mut m = tridiag(4, -1.0, 2.0, -1.0);
        m.set(2, 1, 0.0);
        m.set(2, 2, 0.0);
        m.set(2, 3, 0.0);
        match solve_banded(&m, &[1.0; 4]) {
            Err(CoreError::SingularMatrix { .. }) => {}
            other => panic!("expected singular-matrix error, got {other:?}"),
        }
    }

    /// Dense LU with partial pivoting; independent oracle for the band solver.
    fn dense_solve(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
        let n = b.len();
        let mut m: Vec<Vec<f64>> = a.to_vec();
        let mut x = b.to_vec();
        for k in 0..n {
            let p = (k..n).max_by(|&i, &j| m[i][k].abs().total_cmp(&m[j][k].abs())).unwrap();
            m.swap(k, p);
            x.swap(k, p);
            for i in k + 1..n {
                let f = m[i][k] / m[k][k];
                for j in k..n {
                    m[i][j] -= f * m[k][j];
                }
                x[i] -= f * x[k];
            }
        }
        for k in (0..n).rev() {
            for j in k + 1..n {
                x[k] -= m[k][j] * x[j];
            }
            x[k] /= m[k][k];
        }
        x
    }

    #[test]
    fn banded_matches_dense_on_pentadiagonal() {
        // fixed pseudo-random pattern, bandwidth 2
        let n = 17;
        let mut band = BandedMatrix::zeros(n, 2);
        let mut dense = vec![vec![0.0; n]; n];
        let mut state = 1234567u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 33) as f64) / (u32::MAX as f64) - 0.5
        };
        for i in 0..n {
            for j in i.saturating_sub(2)..=(i + 2).min(n - 1) {
                let v = if i == j { 4.0 + next() } else { next() };
                band.set(i, j, v);
                dense[i][j] = v;
            }
        }
        let rhs: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let got = solve_banded(&band, &rhs).unwrap();
        let want = dense_solve(&dense, &rhs);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-11, "band {g} vs dense {w}");
        }
        // residual stays within the contracted backward-stability bound
        let back = band.apply(&got);
        let mut r: f64 = 0.0;
        let mut bn: f64 = 0.0;
        for i in 0..n {
            r = r.max((back[i] - rhs[i]).abs());
            bn = bn.max(rhs[i].abs());
        }
        assert!(r <= 1e-10 * bn);
    }

    #[test]
    fn banded_needs_pivoting() {
        // zero on the (0,0) entry forces an immediate row swap
        let mut m = BandedMatrix::zeros(5, 1);
        for i in 0..5 {
            m.set(i, i, if i == 0 { 0.0 } else { 2.0 });
            if i > 0 {
                m.set(i, i - 1, 1.0);
            }
            if i + 1 < 5 {
                m.set(i, i + 1, 1.0);
            }
        }
        let rhs = [1.0, 2.0, 3.0, 4.0, 5.0];
        let x = solve_banded(&m, &rhs).unwrap();
        let back = m.apply(&x);
        for (b, r) in back.iter().zip(rhs) {
            assert!((b - r).abs() < 1e-12);
        }
    }

    #[test]
    fn eig_constant_diagonal() {
        let t = SymTridiagonal { diag: vec![-2.0; 3], off: vec![0.0; 2] };
        let r = principal_generalized_eig(&t, &[1.0; 3], EigMode::Smallest, 1e-12).unwrap();
        assert!((r.value + 2.0).abs() < 1e-12);
        for v in &r.vector {
            assert!((v - r.vector[0]).abs() < 1e-12);
        }
    }

    fn neumann_laplacian(n: usize) -> (SymTridiagonal, Vec<f64>) {
        // finite-volume Neumann Laplacian on [0,1], mass = cell widths
        let h = 1.0 / n as f64;
        let mut diag = vec![2.0 / (h * h); n];
        diag[0] = 1.0 / (h * h);
        diag[n - 1] = 1.0 / (h * h);
        let off = vec![-1.0 / (h * h); n - 1];
        // forms scaled by h: K = h * A, M = h * I
        let k = SymTridiagonal {
            diag: diag.iter().map(|v| v * h).collect(),
            off: off.iter().map(|v| v * h).collect(),
        };
        (k, vec![h; n])
    }

    #[test]
    fn eig_neumann_kernel() {
        let (k, m) = neumann_laplacian(100);
        let r = principal_generalized_eig(&k, &m, EigMode::Smallest, 1e-12).unwrap();
        assert!(r.value.abs() < 1e-10, "smallest Neumann eigenvalue should be 0, got {}", r.value);
        let c = r.vector[0];
        for v in &r.vector {
            assert!((v - c).abs() < 1e-8);
        }
    }

    #[test]
    fn eig_neumann_second_by_deflation() {
        // sanity probe: deflate the constant mode and recover pi^2
        let n = 1000;
        let (k, m) = neumann_laplacian(n);
        let first = principal_generalized_eig(&k, &m, EigMode::Smallest, 1e-12).unwrap();
        // inverse iteration with projection against the first eigenvector
        let mut shifted = k.clone();
        let sigma = -1.0;
        for i in 0..n {
            shifted.diag[i] -= sigma * m[i];
        }
        let banded = {
            let mut b = BandedMatrix::zeros(n, 1);
            for i in 0..n {
                b.set(i, i, shifted.diag[i]);
                if i + 1 < n {
                    b.set(i, i + 1, shifted.off[i]);
                    b.set(i + 1, i, shifted.off[i]);
                }
            }
            b
        };
        let lu = BandedLu::factor(&banded).unwrap();
        let project = |x: &mut Vec<f64>| {
            let num: f64 = x.iter().zip(&first.vector).zip(&m).map(|((a, b), mm)| a * b * mm).sum();
            for (xi, fi) in x.iter_mut().zip(&first.vector) {
                *xi -= num * fi;
            }
        };
        let mut v: Vec<f64> = (0..n).map(|i| (i as f64 / n as f64 * 3.14159).cos()).collect();
        project(&mut v);
        for _ in 0..400 {
            let mv: Vec<f64> = v.iter().zip(&m).map(|(a, b)| a * b).collect();
            v = lu.solve(&mv);
            project(&mut v);
            normalize(&mut v);
        }
        let kv = k.apply(&v);
        let num: f64 = v.iter().zip(&kv).map(|(a, b)| a * b).sum();
        let den: f64 = v.iter().zip(&m).map(|(a, b)| a * a * b).sum();
        let lam2 = num / den;
        let pi2 = std::f64::consts::PI * std::f64::consts::PI;
        assert!(
            (lam2 - pi2).abs() < 1e-3 * pi2,
            "second Neumann eigenvalue {lam2} should be near {pi2}"
        );
    }

    #[test]
    fn eig_rayleigh_optimality() {
        let n = 60;
        let (k, m) = neumann_laplacian(n);
        let mut k2 = k.clone();
        for i in 0..n {
            k2.diag[i] += m[i] * (1.0 + (i as f64 * 0.1).sin());
        }
        let small = principal_generalized_eig(&k2, &m, EigMode::Smallest, 1e-12).unwrap();
        let large = principal_generalized_eig(&k2, &m, EigMode::Largest, 1e-12).unwrap();
        let mut state = 42u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 33) as f64) / (u32::MAX as f64) + 0.01
        };
        for _ in 0..100 {
            let v: Vec<f64> = (0..n).map(|_| next()).collect();
            let kv = k2.apply(&v);
            let kq: f64 = v.iter().zip(&kv).map(|(a, b)| a * b).sum();
            let mq: f64 = v.iter().zip(&m).map(|(a, b)| a * a * b).sum();
            assert!(small.value <= kq / mq + 1e-10);
            assert!(large.value >= mq / kq - 1e-10);
        }
    }

    #[test]
    fn eig_deterministic_bitwise() {
        let (k, m) = neumann_laplacian(100);
        let mut k2 = k.clone();
        for i in 0..100 {
            k2.diag[i] += m[i] * ((i as f64 * 0.05).cos() + 1.5);
        }
        let a = principal_generalized_eig(&k2, &m, EigMode::Smallest, 1e-12).unwrap();
        let b = principal_generalized_eig(&k2, &m, EigMode::Smallest, 1e-12).unwrap();
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        assert_eq!(a.iterations, b.iterations);
        for (x, y) in a.vector.iter().zip(&b.vector) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn eig_rejects_bad_mass() {
        let t = SymTridiagonal { diag: vec![1.0; 4], off: vec![0.0; 3] };
        assert!(principal_generalized_eig(&t, &[1.0, 0.0, 1.0, 1.0], EigMode::Smallest, 1e-12)
            .is_err());
    }
}
