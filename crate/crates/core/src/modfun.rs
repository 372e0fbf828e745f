//! Modulating functions.
//!
//! A modulating function of order `m` on `[t0, ∞)` vanishes together with its
//! first `m - 1` derivatives at `t0` and has bounded derivatives afterwards.
//! The only built-in family is `μ(t) = (1 - e^{-(t - t0)})^m`, whose
//! derivatives follow exactly from the binomial expansion
//!
//! ```text
//! μ^{(j)}(t) = Σ_{k=0}^{m} C(m,k) (-1)^k (-k)^j e^{-k (t - t0)}
//! ```

use crate::error::{Error, Result};

/// Absolute tolerance used to decide that a derivative value is zero.
pub const ZERO_TOL: f64 = 1e-12;

/// Shape of a modulating function. New families plug in here behind the same
/// derivative contract.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    /// `(1 - e^{-(t - t0)})^m`
    Exponential,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModulatingFunction {
    order: usize,
    t0: f64,
    family: Family,
    // expansion coefficients C(m,k)(-1)^k, k = 0..=m
    coeffs: Vec<f64>,
    bounds: Vec<f64>,
}

pub(crate) fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut c = 1.0f64;
    for i in 0..k {
        c = c * (n - i) as f64 / (i + 1) as f64;
    }
    c.round()
}

impl ModulatingFunction {
    /// Exponential modulating function `(1 - e^{-(t - t0)})^order`.
    pub fn exponential(order: usize, t0: f64) -> Result<Self> {
        if order == 0 {
            return Err(Error::arg("modulating function order must be positive"));
        }
        if !t0.is_finite() {
            return Err(Error::arg("start time t0 must be finite"));
        }
        let coeffs = (0..=order)
            .map(|k| {
                let c = binomial(order, k);
                if k % 2 == 0 {
                    c
                } else {
                    -c
                }
            })
            .collect();
        let bounds = (0..=order)
            .map(|j| {
                (0..=order)
                    .map(|k| binomial(order, k) * (k as f64).powi(j as i32))
                    .sum()
            })
            .collect();
        Ok(Self {
            order,
            t0,
            family: Family::Exponential,
            coeffs,
            bounds,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn family(&self) -> Family {
        self.family
    }

    /// Derivative bound `M_j` with `|μ^{(j)}(t)| ≤ M_j` for all `t ≥ t0`.
    pub fn derivative_bound(&self, j: usize) -> Option<f64> {
        self.bounds.get(j).copied()
    }

    /// `sup_{t ≥ t0} |μ(t)|`; this is the `M_0` that enters the convergence margin.
    pub fn sup_abs(&self) -> f64 {
        match self.family {
            Family::Exponential => 1.0,
        }
    }

    /// `j`-th derivative of μ at `t`.
    pub fn eval_derivative(&self, j: usize, t: f64) -> Result<f64> {
        if j > self.order {
            return Err(Error::domain(format!(
                "derivative order {j} exceeds modulating function order {}",
                self.order
            )));
        }
        if !(t >= self.t0) {
            return Err(Error::domain(format!(
                "time {t} precedes the start time t0 = {}",
                self.t0
            )));
        }
        Ok(self.raw_derivative(j, t))
    }

    /// `μ(t)`.
    pub fn eval(&self, t: f64) -> Result<f64> {
        self.eval_derivative(0, t)
    }

    /// All derivatives `μ^{(0)}..=μ^{(upto)}` at `t`.
    pub fn derivatives(&self, upto: usize, t: f64) -> Result<Vec<f64>> {
        (0..=upto).map(|j| self.eval_derivative(j, t)).collect()
    }

    // Unchecked closed form. Callers guarantee j <= order and t >= t0.
    fn raw_derivative(&self, j: usize, t: f64) -> f64 {
        match self.family {
            Family::Exponential => {
                let s = t - self.t0;
                if j == 0 {
                    // The product form is exact near t0, where the sum cancels.
                    return (-(-s).exp_m1()).powi(self.order as i32);
                }
                self.coeffs
                    .iter()
                    .enumerate()
                    .skip(1)
                    .map(|(k, c)| {
                        let kf = k as f64;
                        c * (-kf).powi(j as i32) * (-kf * s).exp()
                    })
                    .sum()
            }
        }
    }

    /// Check the defining properties on a time grid.
    pub fn validate(&self, grid: &[f64]) -> Result<ValidationReport> {
        if grid.is_empty() {
            return Err(Error::arg("validation grid is empty"));
        }
        if let Some(bad) = grid.iter().find(|&&t| !(t >= self.t0) || !t.is_finite()) {
            return Err(Error::arg(format!(
                "grid time {bad} lies outside [t0, inf) with t0 = {}",
                self.t0
            )));
        }

        let vanishing: Vec<(usize, f64)> = (0..self.order)
            .map(|j| (j, self.raw_derivative(j, self.t0)))
            .collect();
        let vanishes_at_t0 = vanishing.iter().all(|(_, v)| v.abs() <= ZERO_TOL);

        let mut zeros = Vec::new();
        let mut bound_violations = Vec::new();
        for &t in grid {
            for j in 0..=self.order {
                let v = self.raw_derivative(j, t);
                if t > self.t0 && v.abs() <= ZERO_TOL {
                    zeros.push(DerivativeAt {
                        order: j,
                        t,
                        value: v,
                    });
                }
                if v.abs() > self.bounds[j] * (1.0 + 1e-12) {
                    bound_violations.push(DerivativeAt {
                        order: j,
                        t,
                        value: v,
                    });
                }
            }
        }

        Ok(ValidationReport {
            smooth: true,
            vanishes_at_t0,
            values_at_t0: vanishing,
            zero_derivatives: zeros,
            bound_violations,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivativeAt {
    pub order: usize,
    pub t: f64,
    pub value: f64,
}

/// Outcome of [`ModulatingFunction::validate`], one entry per defining property.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    /// (i) smoothness; holds by construction for closed-form families.
    pub smooth: bool,
    /// (ii) all derivatives of order < m vanish at t0.
    pub vanishes_at_t0: bool,
    pub values_at_t0: Vec<(usize, f64)>,
    /// (iii) grid points t > t0 where some derivative is zero. Reported, not fatal.
    pub zero_derivatives: Vec<DerivativeAt>,
    /// (iv) grid points where `|μ^{(j)}| > M_j`.
    pub bound_violations: Vec<DerivativeAt>,
}

impl ValidationReport {
    pub fn nonvanishing(&self) -> bool {
        self.zero_derivatives.is_empty()
    }

    pub fn bounded(&self) -> bool {
        self.bound_violations.is_empty()
    }

    /// True when every property holds, including (iii).
    pub fn all_pass(&self) -> bool {
        self.smooth && self.vanishes_at_t0 && self.nonvanishing() && self.bounded()
    }

    /// Properties needed by the transformation: (i), (ii) and (iv).
    pub fn is_usable(&self) -> bool {
        self.smooth && self.vanishes_at_t0 && self.bounded()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn mu2() -> ModulatingFunction {
        ModulatingFunction::exponential(2, 0.0).unwrap()
    }

    #[test]
    fn vanishes_at_start() {
        let mf = mu2();
        assert_eq!(mf.eval_derivative(0, 0.0).unwrap(), 0.0);
        assert!(mf.eval_derivative(1, 0.0).unwrap().abs() <= 1e-12);
    }

    #[test]
    fn first_derivative_at_ln2_matches_finite_difference() {
        let mu = |t: f64| (1.0 - (-t).exp()).powi(2);
        let t = 2f64.ln();
        let h = 1e-6;
        let fd = (mu(t + h) - mu(t - h)) / (2.0 * h);
        assert_relative_eq!(fd, 0.5, epsilon = 1e-8);
        assert_relative_eq!(mu2().eval_derivative(1, t).unwrap(), fd, epsilon = 1e-8);
    }

    #[test]
    fn second_derivative_closed_form() {
        let mf = mu2();
        for &t in &[0.0f64, 0.3, 1.0, 4.0] {
            let e = (-t).exp();
            assert_relative_eq!(
                mf.eval_derivative(2, t).unwrap(),
                2.0 * e * (2.0 * e - 1.0),
                epsilon = 1e-14
            );
        }
    }

    #[test]
    fn shifted_start_time() {
        let mf = ModulatingFunction::exponential(3, 1.5).unwrap();
        assert_eq!(mf.eval(1.5).unwrap(), 0.0);
        assert_relative_eq!(
            mf.eval(2.5).unwrap(),
            (1.0 - (-1.0f64).exp()).powi(3),
            epsilon = 1e-15
        );
    }

    #[test]
    fn domain_errors() {
        let mf = mu2();
        assert!(matches!(mf.eval_derivative(3, 1.0), Err(Error::Domain(_))));
        assert!(matches!(mf.eval_derivative(0, -0.1), Err(Error::Domain(_))));
        assert!(ModulatingFunction::exponential(0, 0.0).is_err());
    }

    #[test]
    fn bounds_follow_binomial_sums() {
        let mf = mu2();
        assert_eq!(mf.derivative_bound(0), Some(4.0));
        assert_eq!(mf.derivative_bound(1), Some(0.0 + 2.0 + 2.0));
        assert_eq!(mf.derivative_bound(2), Some(2.0 + 4.0));
        assert_eq!(mf.derivative_bound(3), None);
        assert_eq!(mf.sup_abs(), 1.0);
    }

    #[test]
    fn validate_grid_without_ln2_passes() {
        let grid: Vec<f64> = (0..50).map(|i| 0.05 + 0.1 * i as f64).collect();
        assert!(grid.iter().all(|t| (t - 2f64.ln()).abs() > 1e-3));
        let report = mu2().validate(&grid).unwrap();
        assert!(report.all_pass(), "{report:?}");
    }

    #[test]
    fn validate_flags_second_derivative_zero_at_ln2() {
        let report = mu2().validate(&[0.5, 2f64.ln(), 1.0]).unwrap();
        assert!(report.is_usable());
        assert!(!report.nonvanishing());
        assert_eq!(report.zero_derivatives.len(), 1);
        assert_eq!(report.zero_derivatives[0].order, 2);
    }

    #[test]
    fn validate_order_one_single_point() {
        let mf = ModulatingFunction::exponential(1, 0.0).unwrap();
        let report = mf.validate(&[1.0]).unwrap();
        assert!(report.all_pass());
        assert_relative_eq!(
            mf.eval(1.0).unwrap(),
            1.0 - (-1.0f64).exp(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn validate_rejects_bad_grids() {
        assert!(matches!(mu2().validate(&[]), Err(Error::Argument(_))));
        assert!(matches!(mu2().validate(&[-1.0]), Err(Error::Argument(_))));
    }

    #[test]
    fn tends_to_one() {
        let mf = ModulatingFunction::exponential(4, 0.0).unwrap();
        assert!((mf.eval(40.0).unwrap() - 1.0).abs() <= 1e-15);
        for j in 1..=4 {
            assert!(mf.eval_derivative(j, 40.0).unwrap().abs() <= 1e-15);
        }
    }
}
