//! The time-varying lower-triangular transformation `T_n(μ(t))`.
//!
//! Entry `(j, i)` (1-based, `i ≤ j`) of `T_n` is `α_{j,j-i} μ^{(j-i)}(t)`, where
//! the integer table `α` is generated by
//!
//! ```text
//! α_{j,0} = 1,         α_{n,i} = (-1)^i,
//! α_{j,i} = α_{j+1,i} - α_{j,i-1}   (j < n, 1 ≤ i ≤ j-1)
//! ```
//!
//! `ξ = T_n(μ) z` maps the canonical-form state to coordinates that start at
//! zero regardless of `z(t0)`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::modfun::{binomial, ModulatingFunction};

/// Default floor on `|μ(t)|` below which [`TransformT::solve`] refuses to divide.
pub const DEFAULT_MU_FLOOR: f64 = 1e-12;

/// Coefficient table `α_{j,i}`, `j = 1..=n`, `i = 0..j-1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlphaTable {
    // rows[j-1][i] = α_{j,i}
    rows: Vec<Vec<i64>>,
}

impl AlphaTable {
    pub fn build(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::arg("system order must be at least 1"));
        }
        let mut rows: Vec<Vec<i64>> = (1..=n).map(|j| vec![0; j]).collect();
        for (i, a) in rows[n - 1].iter_mut().enumerate() {
            *a = if i.is_multiple_of(2) { 1 } else { -1 };
        }
        // rows are filled bottom-up, left to right, so both operands are ready
        for j in (1..n).rev() {
            rows[j - 1][0] = 1;
            for i in 1..j {
                rows[j - 1][i] = rows[j][i] - rows[j - 1][i - 1];
            }
        }
        Ok(Self { rows })
    }

    /// Table for order `n + 1` from this one. Rows shift down by one, so
    /// only the new first-column entries `α_{j,j-1}` are computed.
    pub fn extend(&self) -> Self {
        let n = self.order();
        let mut rows = Vec::with_capacity(n + 1);
        rows.push(vec![1]);
        for j in 2..=n + 1 {
            let mut row = self.rows[j - 2].clone();
            let next = if j == n + 1 {
                if n.is_multiple_of(2) {
                    1
                } else {
                    -1
                }
            } else {
                // α'_{j+1,j-1} = α_{j,j-1} and α'_{j,j-2} = α_{j-1,j-2}
                self.rows[j - 1][j - 1] - self.rows[j - 2][j - 2]
            };
            row.push(next);
            rows.push(row);
        }
        Self { rows }
    }

    pub fn order(&self) -> usize {
        self.rows.len()
    }

    /// `α_{j,i}` with 1-based `j`.
    pub fn get(&self, j: usize, i: usize) -> Option<i64> {
        self.rows.get(j.checked_sub(1)?)?.get(i).copied()
    }

    pub fn row(&self, j: usize) -> &[i64] {
        &self.rows[j - 1]
    }
}

/// `T_n(μ(t))` for a fixed order and modulating function.
#[derive(Debug, Clone)]
pub struct TransformT {
    alpha: AlphaTable,
    mf: ModulatingFunction,
    mu_floor: f64,
}

impl TransformT {
    /// Requires `m ≥ n`, so every derivative used by `T_n` and its time
    /// derivative is available and `T_n(t0) = 0`.
    pub fn new(n: usize, mf: ModulatingFunction) -> Result<Self> {
        if mf.order() < n {
            return Err(Error::arg(format!(
                "modulating function order {} is below the system order {n}",
                mf.order()
            )));
        }
        Ok(Self {
            alpha: AlphaTable::build(n)?,
            mf,
            mu_floor: DEFAULT_MU_FLOOR,
        })
    }

    pub fn with_mu_floor(mut self, floor: f64) -> Self {
        self.mu_floor = floor;
        self
    }

    pub fn order(&self) -> usize {
        self.alpha.order()
    }

    pub fn alpha(&self) -> &AlphaTable {
        &self.alpha
    }

    pub fn modulating_function(&self) -> &ModulatingFunction {
        &self.mf
    }

    pub fn mu_floor(&self) -> f64 {
        self.mu_floor
    }

    fn assemble(&self, derivs: &[f64]) -> DMatrix<f64> {
        let n = self.order();
        DMatrix::from_fn(n, n, |r, c| {
            if c > r {
                0.0
            } else {
                let d = r - c;
                self.alpha.rows[r][d] as f64 * derivs[d]
            }
        })
    }

    /// `T_n(μ(t))`.
    pub fn eval(&self, t: f64) -> Result<DMatrix<f64>> {
        let d = self.mf.derivatives(self.order() - 1, t)?;
        Ok(self.assemble(&d))
    }

    /// `T_n(μ^{(1)}(t))`, i.e. the time derivative of `T_n(μ(t))`.
    pub fn eval_rate(&self, t: f64) -> Result<DMatrix<f64>> {
        let d = self.mf.derivatives(self.order(), t)?;
        Ok(self.assemble(&d[1..]))
    }

    /// `det T_n(μ(t)) = μ(t)^n`.
    pub fn det(&self, t: f64) -> Result<f64> {
        Ok(self.mf.eval(t)?.powi(self.order() as i32))
    }

    /// Solve `T_n(μ(t)) x = rhs` by forward substitution.
    pub fn solve(&self, t: f64, rhs: &DVector<f64>) -> Result<DVector<f64>> {
        let tm = self.eval(t)?;
        self.solve_with(t, &tm, rhs)
    }

    fn solve_with(&self, t: f64, tm: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
        let n = self.order();
        if rhs.len() != n {
            return Err(Error::arg(format!(
                "right-hand side has length {}, expected {n}",
                rhs.len()
            )));
        }
        let mu = tm[(0, 0)];
        if !(mu.abs() >= self.mu_floor) {
            return Err(Error::Singular {
                t,
                mu,
                floor: self.mu_floor,
            });
        }
        let mut x = DVector::zeros(n);
        for r in 0..n {
            let mut acc = rhs[r];
            for c in 0..r {
                acc -= tm[(r, c)] * x[c];
            }
            x[r] = acc / mu;
        }
        Ok(x)
    }

    /// `T_n^{-1}(μ(t))`, built column by column with forward substitution.
    pub fn inverse(&self, t: f64) -> Result<DMatrix<f64>> {
        let n = self.order();
        let tm = self.eval(t)?;
        let mut inv = DMatrix::zeros(n, n);
        for c in 0..n {
            let e = DVector::from_fn(n, |r, _| if r == c { 1.0 } else { 0.0 });
            inv.set_column(c, &self.solve_with(t, &tm, &e)?);
        }
        Ok(inv)
    }

    /// `B_α(μ(t))` with entries `(-1)^{j+1} C(n,j) μ^{(j)}(t)`, `j = 1..=n`.
    ///
    /// The drift of `ξ` is `A ξ + B_α(μ) y`. This closed form agrees with
    /// [`TransformT::b_alpha_direct`] wherever the latter is defined and
    /// extends it continuously to `t0`.
    pub fn b_alpha(&self, t: f64) -> Result<DVector<f64>> {
        let n = self.order();
        let d = self.mf.derivatives(n, t)?;
        Ok(DVector::from_fn(n, |r, _| {
            let j = r + 1;
            let sign = if j % 2 == 1 { 1.0 } else { -1.0 };
            sign * binomial(n, j) * d[j]
        }))
    }

    /// `(T_n(μ^{(1)}) + T_n(μ) A) T_n^{-1}(μ)`.
    pub fn drift_matrix(&self, t: f64) -> Result<DMatrix<f64>> {
        let n = self.order();
        let tm = self.eval(t)?;
        let s = self.eval_rate(t)? + &tm * shift_matrix(n);
        let inv = self.inverse(t)?;
        Ok(s * inv)
    }

    /// `B_α(μ(t))` from the matrix identity: first column of
    /// `drift_matrix - A`, scaled by `μ(t)`. Requires `μ(t)` above the floor.
    pub fn b_alpha_direct(&self, t: f64) -> Result<DVector<f64>> {
        let n = self.order();
        let g = self.drift_matrix(t)? - shift_matrix(n);
        let mu = self.mf.eval(t)?;
        Ok(g.column(0) * mu)
    }

    /// Largest `‖T_n^{-1}(μ(t))‖₂²` over a grid on `[t_a, t_a + span]` that
    /// is geometrically refined towards `t_a`.
    pub fn sup_inverse_norm_sq(&self, t_a: f64, span: f64, points: usize) -> Result<f64> {
        if points < 2 || !(span > 0.0) {
            return Err(Error::arg(
                "need at least two sample points and a positive span",
            ));
        }
        let first = 1e-6f64.min(span);
        let ratio = span / first;
        let mut sup = 0.0f64;
        for k in 0..points {
            let off = if k == 0 {
                0.0
            } else {
                first * ratio.powf((k - 1) as f64 / (points - 2).max(1) as f64)
            };
            let inv = self.inverse(t_a + off)?;
            let norm = inv.singular_values().max();
            sup = sup.max(norm * norm);
        }
        Ok(sup)
    }
}

/// Brunovsky shift matrix `A` (ones on the superdiagonal).
pub fn shift_matrix(n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |r, c| if c == r + 1 { 1.0 } else { 0.0 })
}

/// Smallest `t_a` such that `det T_n(μ(t)) > eps` for all `t ≥ t_a`.
///
/// Closed form for the exponential family:
/// `t_a = t0 - ln(1 - eps^{1/(m n)})`, which reduces to `eps^{1/n²}` when `m = n`.
pub fn activation_time(n: usize, mf: &ModulatingFunction, eps: f64) -> Result<f64> {
    check_eps(n, eps)?;
    match mf.family() {
        crate::modfun::Family::Exponential => {
            let root = eps.powf(1.0 / (mf.order() * n) as f64);
            Ok(mf.t0() - (-root).ln_1p())
        }
    }
}

/// Bisection on the monotone map `t ↦ μ(t)^n - eps`.
pub fn activation_time_bisection(n: usize, mf: &ModulatingFunction, eps: f64) -> Result<f64> {
    check_eps(n, eps)?;
    let det = |t: f64| -> Result<f64> { Ok(mf.eval(t)?.powi(n as i32)) };
    let t0 = mf.t0();
    let mut lo = t0;
    let mut width = 1.0;
    let mut hi = t0 + width;
    while det(hi)? <= eps {
        lo = hi;
        width *= 2.0;
        hi = t0 + width;
        if width > 1e6 {
            return Err(Error::Numerical(
                "determinant never exceeds the floor within 1e6 time units".into(),
            ));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if det(mid)? > eps {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

fn check_eps(n: usize, eps: f64) -> Result<()> {
    if n == 0 {
        return Err(Error::arg("system order must be at least 1"));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::arg(format!(
            "determinant floor eps = {eps} must lie in (0, 1)"
        )));
    }
    Ok(())
}
