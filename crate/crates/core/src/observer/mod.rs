//! Transformed dynamics, the modulating-function observer and its
//! convergence certificate.
//!
//! Along true trajectories `ξ = T_n(μ) z` obeys
//!
//! ```text
//! ξ̇ = A ξ + B_α(μ) y + B_0 μ (f(z) + g(z) u),      ξ(t0) = 0,  ξ_1 = μ y
//! ```
//!
//! and the observer copies it with output injection `K (μ y - ξ̂_1)`. The
//! estimate `ẑ = T_n^{-1}(μ) ξ̂` is only formed from the activation time on.

mod lyapunov;

pub use lyapunov::{
    error_eigenvalues, error_matrix, lyapunov_solve, sym_eigenvalues, LyapunovSolution,
};

use nalgebra::{Complex, DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::plant::{LipschitzConstants, PlantModel};
use crate::transform::TransformT;

fn shift_apply(v: &DVector<f64>) -> DVector<f64> {
    let n = v.len();
    DVector::from_fn(n, |i, _| if i + 1 < n { v[i + 1] } else { 0.0 })
}

/// Right-hand side of the transformed state `ξ`.
///
/// The nonlinear term needs `z = T_n^{-1} ξ`. Up to `t_a` the optional
/// `reference` state is used instead, since `T_n` is ill-conditioned there.
#[allow(clippy::too_many_arguments)]
pub fn xi_rhs(
    xi: &DVector<f64>,
    t: f64,
    y: f64,
    u: f64,
    plant: &PlantModel,
    tr: &TransformT,
    t_a: f64,
    reference: Option<&DVector<f64>>,
) -> Result<DVector<f64>> {
    let n = tr.order();
    let mu = tr.modulating_function().eval(t)?;
    let mut d = shift_apply(xi) + tr.b_alpha(t)? * y;
    let z = match reference {
        Some(z) if t <= t_a => z.clone(),
        _ => tr.solve(t, xi)?,
    };
    d[n - 1] += mu * plant.last_row(z.as_slice(), u)?;
    Ok(d)
}

/// Gain, Lyapunov pair and activation time of a modulating-function observer.
#[derive(Debug, Clone, PartialEq)]
pub struct ObserverDesign {
    gain: DVector<f64>,
    q: DMatrix<f64>,
    lyapunov: LyapunovSolution,
    activation_time: f64,
    nonlinearity_aware: bool,
}

impl ObserverDesign {
    /// Solves the Lyapunov equation for `gain` and `q`; fails when `A - KC`
    /// is not Hurwitz.
    pub fn new(gain: DVector<f64>, q: DMatrix<f64>, activation_time: f64) -> Result<Self> {
        let lyapunov = lyapunov_solve(&gain, &q)?;
        Ok(Self {
            gain,
            q,
            lyapunov,
            activation_time,
            nonlinearity_aware: false,
        })
    }

    /// Include `μ (ã(ξ̂) + b̃(ξ̂) u)` in the observer from `t_a` on.
    pub fn nonlinearity_aware(mut self, aware: bool) -> Self {
        self.nonlinearity_aware = aware;
        self
    }

    pub fn is_nonlinearity_aware(&self) -> bool {
        self.nonlinearity_aware
    }

    pub fn order(&self) -> usize {
        self.gain.len()
    }

    pub fn gain(&self) -> &DVector<f64> {
        &self.gain
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn p(&self) -> &DMatrix<f64> {
        &self.lyapunov.p
    }

    pub fn lyapunov_residual(&self) -> f64 {
        self.lyapunov.residual
    }

    pub fn error_eigenvalues(&self) -> &[Complex<f64>] {
        &self.lyapunov.eigenvalues
    }

    pub fn activation_time(&self) -> f64 {
        self.activation_time
    }

    /// `(λ_min(P), λ_max(P))`.
    pub fn p_spectrum(&self) -> (f64, f64) {
        let e = sym_eigenvalues(&self.lyapunov.p);
        (e[0], e[e.len() - 1])
    }

    /// `(λ_min(Q), λ_max(Q))`.
    pub fn q_spectrum(&self) -> (f64, f64) {
        let e = sym_eigenvalues(&self.q);
        (e[0], e[e.len() - 1])
    }

    /// Convergence margin for the given plant constants.
    pub fn varpi(&self, m0: f64, input_bound: f64, constants: &LipschitzConstants) -> f64 {
        varpi(
            self.p(),
            &self.q,
            m0,
            input_bound,
            constants.gamma_f,
            constants.gamma_g,
        )
    }
}

/// Right-hand side of the observer state `ξ̂`.
///
/// The injection `μ K (y - ŷ)` is written as `K (μ y - ξ̂_1)` with `ξ̂_1 = μ ŷ`,
/// so nothing is divided by `μ`.
pub fn observer_rhs(
    xi_hat: &DVector<f64>,
    t: f64,
    y: f64,
    u: f64,
    design: &ObserverDesign,
    plant: &PlantModel,
    tr: &TransformT,
) -> Result<DVector<f64>> {
    let n = tr.order();
    let mu = tr.modulating_function().eval(t)?;
    let innovation = mu * y - xi_hat[0];
    let mut d = shift_apply(xi_hat) + tr.b_alpha(t)? * y + design.gain() * innovation;
    if design.nonlinearity_aware && t >= design.activation_time {
        let z_hat = tr.solve(t, xi_hat)?;
        d[n - 1] += mu * plant.last_row(z_hat.as_slice(), u)?;
    }
    Ok(d)
}

/// `ẑ = T_n^{-1}(μ(t)) ξ̂` for `t ≥ t_a`, zero before.
pub fn recover_state(
    xi_hat: &DVector<f64>,
    t: f64,
    t_a: f64,
    tr: &TransformT,
) -> Result<DVector<f64>> {
    if t < t_a {
        return Ok(DVector::zeros(xi_hat.len()));
    }
    tr.solve(t, xi_hat)
}

/// `λ_min(Q)/λ_max(P) - M0 λ_max(P) (1 + M_u² + (γ_f² + γ_g²)/λ_max(P))`.
pub fn varpi(
    p: &DMatrix<f64>,
    q: &DMatrix<f64>,
    m0: f64,
    input_bound: f64,
    gamma_f: f64,
    gamma_g: f64,
) -> f64 {
    let lp = sym_eigenvalues(p);
    let lq = sym_eigenvalues(q);
    let p_max = lp[lp.len() - 1];
    lq[0] / p_max
        - m0 * p_max
            * (1.0 + input_bound * input_bound + (gamma_f * gamma_f + gamma_g * gamma_g) / p_max)
}

/// Inputs of the error bound besides the Lyapunov matrix and margin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KappaInputs {
    /// `τ = sup_{t ≥ t_a} ‖T_n^{-1}(μ(t))‖²`.
    pub tau: f64,
    /// `‖ξ̂(t0)‖`.
    pub xi_hat0_norm: f64,
    pub delta_f: f64,
    pub delta_g: f64,
    pub m0: f64,
    pub t_a: f64,
    pub t0: f64,
}

/// Error bound `κ` valid for all `t ≥ t_a`:
///
/// ```text
/// κ = τ (λ_max/λ_min) ‖ξ̂(t0)‖² e^{-ϖ (t_a - t0)}
///   + τ M0 (δ_f² + δ_g²) / (ϖ λ_min) (1 - e^{-ϖ (t_a - t0)})
/// ```
pub fn kappa_bound(p: &DMatrix<f64>, varpi: f64, inputs: &KappaInputs) -> Result<f64> {
    if !(varpi > 0.0) {
        return Err(Error::CertificateUnavailable { varpi });
    }
    let lp = sym_eigenvalues(p);
    let (p_min, p_max) = (lp[0], lp[lp.len() - 1]);
    let KappaInputs {
        tau,
        xi_hat0_norm,
        delta_f,
        delta_g,
        m0,
        t_a,
        t0,
    } = *inputs;
    let decay = (-varpi * (t_a - t0)).exp();
    let transient = tau * (p_max / p_min) * xi_hat0_norm * xi_hat0_norm * decay;
    let persistent =
        tau * m0 * (delta_f * delta_f + delta_g * delta_g) / (varpi * p_min) * (1.0 - decay);
    Ok(transient + persistent)
}

/// Box `[lo_i, hi_i]` in state space.
pub type Region = [(f64, f64)];

/// Sampling estimate of the Assumption-1 constants over `region`.
///
/// `γ` is the largest difference quotient over pairs at least a tenth of the
/// region diameter apart; `δ` then absorbs whatever the remaining pairs need.
/// These are estimates, not certified bounds.
pub fn estimate_lipschitz<R: Rng + ?Sized>(
    plant: &PlantModel,
    region: &Region,
    samples: usize,
    input: f64,
    rng: &mut R,
) -> Result<LipschitzConstants> {
    let n = plant.order();
    if region.len() != n {
        return Err(Error::arg(format!(
            "region has dimension {}, plant order is {n}",
            region.len()
        )));
    }
    if region.iter().any(|&(lo, hi)| !(hi > lo)) {
        return Err(Error::arg("region must have positive volume"));
    }
    if samples < 2 {
        return Err(Error::arg("need at least two samples"));
    }
    let diameter = region
        .iter()
        .map(|(lo, hi)| (hi - lo) * (hi - lo))
        .sum::<f64>()
        .sqrt();
    let far = 0.1 * diameter;

    let mut points = Vec::with_capacity(samples);
    for _ in 0..samples {
        let z: Vec<f64> = region
            .iter()
            .map(|&(lo, hi)| rng.random_range(lo..hi))
            .collect();
        let f = plant.f(&z, input)?;
        let g = plant.g(&z)?;
        points.push((z, f, g));
    }

    let pair_iter = || {
        points.iter().enumerate().flat_map(|(i, a)| {
            points[i + 1..].iter().map(move |b| {
                let dz2: f64 = a.0.iter().zip(&b.0).map(|(x, y)| (x - y) * (x - y)).sum();
                (dz2, (a.1 - b.1).powi(2), (a.2 - b.2).powi(2))
            })
        })
    };

    let (mut gf2, mut gg2) = (0.0f64, 0.0f64);
    for (dz2, df2, dg2) in pair_iter() {
        if dz2.sqrt() >= far {
            gf2 = gf2.max(df2 / dz2);
            gg2 = gg2.max(dg2 / dz2);
        }
    }
    let (mut df, mut dg) = (0.0f64, 0.0f64);
    for (dz2, df2, dg2) in pair_iter() {
        df = df.max(df2 - gf2 * dz2);
        dg = dg.max(dg2 - gg2 * dz2);
    }
    Ok(LipschitzConstants {
        gamma_f: gf2.sqrt(),
        delta_f: df.max(0.0).sqrt(),
        gamma_g: gg2.sqrt(),
        delta_g: dg.max(0.0).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modfun::ModulatingFunction;
    use crate::plant::{make_affine_plant, make_chain_plant, make_tanks_plant, TankParams};
    use crate::transform::activation_time;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup() -> (TransformT, f64) {
        let mf = ModulatingFunction::exponential(2, 0.0).unwrap();
        let ta = activation_time(2, &mf, 0.01).unwrap();
        (TransformT::new(2, mf).unwrap(), ta)
    }

    fn reference_design(q: f64, ta: f64) -> ObserverDesign {
        ObserverDesign::new(
            DVector::from_vec(vec![30.0, 200.0]),
            DMatrix::identity(2, 2) * q,
            ta,
        )
        .unwrap()
    }

    #[test]
    fn xi_rhs_at_start() {
        let (tr, ta) = setup();
        let chain = make_chain_plant(2).unwrap();
        let y0 = 3.0;
        let z = DVector::from_vec(vec![y0, 1.0]);
        let d = xi_rhs(&DVector::zeros(2), 0.0, y0, 0.0, &chain, &tr, ta, Some(&z)).unwrap();
        // B_α(t0) = [0, -μ''(t0)] = [0, -2]
        assert_eq!(d[0], 0.0);
        assert_relative_eq!(d[1], -2.0 * y0, epsilon = 1e-14);
        // without a reference the solve is singular at t0
        assert!(matches!(
            xi_rhs(&DVector::zeros(2), 0.0, y0, 0.0, &chain, &tr, ta, None),
            Err(Error::Singular { .. })
        ));
    }

    #[test]
    fn xi_rhs_linear_part_only() {
        let (tr, ta) = setup();
        let chain = make_chain_plant(2).unwrap();
        let xi = DVector::from_vec(vec![0.3, -1.2]);
        let d = xi_rhs(&xi, 1.0, 2.0, 0.0, &chain, &tr, ta, None).unwrap();
        let want = DVector::from_vec(vec![xi[1], 0.0]) + tr.b_alpha(1.0).unwrap() * 2.0;
        assert_relative_eq!(d, want, epsilon = 1e-14);
    }

    #[test]
    fn xi_rhs_tanks_structure() {
        let (tr, ta) = setup();
        let params = TankParams::default();
        let tanks = make_tanks_plant(params, 10.0).unwrap();
        let t = 1.0;
        let z = DVector::from_vec(vec![4.0, 4.0]);
        let xi = tr.eval(t).unwrap() * &z;
        let y = z[0];
        let d = xi_rhs(&xi, t, y, 2.0, &tanks, &tr, ta, None).unwrap();
        let m = tr.modulating_function().derivatives(2, t).unwrap();
        let phi = crate::plant::tanks_phi(z.as_slice(), &params, 2.0).unwrap();
        assert_relative_eq!(d[0], xi[1] + 2.0 * m[1] * y, epsilon = 1e-12);
        assert_relative_eq!(d[1], m[0] * phi - m[2] * y, epsilon = 1e-12);
    }

    #[test]
    fn observer_matches_transformed_dynamics_without_innovation() {
        let (tr, ta) = setup();
        let plant = make_affine_plant(vec![-1.0, -0.5], 0.2, 1.0, 1.0).unwrap();
        let design = reference_design(1.0, ta).nonlinearity_aware(true);
        let t = 1.5;
        let z = DVector::from_vec(vec![0.7, -0.4]);
        let xi = tr.eval(t).unwrap() * &z;
        let a = observer_rhs(&xi, t, z[0], 0.3, &design, &plant, &tr).unwrap();
        let b = xi_rhs(&xi, t, z[0], 0.3, &plant, &tr, ta, None).unwrap();
        assert_relative_eq!(a, b, epsilon = 1e-12);
    }

    #[test]
    fn observer_linear_form() {
        let (tr, ta) = setup();
        let tanks = make_tanks_plant(TankParams::default(), 10.0).unwrap();
        let design = reference_design(1.0, ta);
        let t = 0.9;
        let y = 4.2;
        let xh = DVector::from_vec(vec![0.5, 3.0]);
        let m = tr.modulating_function().derivatives(2, t).unwrap();
        let inj = m[0] * y - xh[0];
        let d = observer_rhs(&xh, t, y, 1.0, &design, &tanks, &tr).unwrap();
        assert_relative_eq!(d[0], xh[1] + 2.0 * m[1] * y + 30.0 * inj, epsilon = 1e-12);
        assert_relative_eq!(d[1], -m[2] * y + 200.0 * inj, epsilon = 1e-12);
    }

    #[test]
    fn observer_finite_at_start() {
        let (tr, ta) = setup();
        let chain = make_chain_plant(2).unwrap();
        let design = reference_design(1.0, ta);
        let d = observer_rhs(
            &DVector::from_vec(vec![0.0, 4.0]),
            0.0,
            4.0,
            0.0,
            &design,
            &chain,
            &tr,
        )
        .unwrap();
        assert!(d.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn recovery_gating_and_round_trip() {
        let (tr, ta) = setup();
        let xh = DVector::from_vec(vec![1.0, 2.0]);
        assert_eq!(recover_state(&xh, 0.2, ta, &tr).unwrap(), DVector::zeros(2));
        let z = DVector::from_vec(vec![-3.0, 0.25]);
        let t = 2.0;
        let back = recover_state(&(tr.eval(t).unwrap() * &z), t, ta, &tr).unwrap();
        assert_relative_eq!(back, z, epsilon = 1e-10);

        let mf = tr.modulating_function();
        let (m, m1) = (mf.eval(1.0).unwrap(), mf.eval_derivative(1, 1.0).unwrap());
        let r = recover_state(&DVector::from_vec(vec![m, 0.0]), 1.0, ta, &tr).unwrap();
        assert_relative_eq!(r[0], 1.0, epsilon = 1e-14);
        assert_relative_eq!(r[1], m1 / m, epsilon = 1e-13);
    }

    #[test]
    fn varpi_reduces_without_plant_constants() {
        let (_, ta) = setup();
        let d = reference_design(1.0, ta);
        let (_, pmax) = d.p_spectrum();
        let (qmin, _) = d.q_spectrum();
        let w = d.varpi(1.0, 0.0, &LipschitzConstants::default());
        assert_relative_eq!(w, qmin / pmax - pmax, epsilon = 1e-12);
        // ≈ 1/3.425 - 3.425 with the hand-solved P
        assert!(w < 0.0);
        let small = reference_design(0.01, ta).varpi(1.0, 0.0, &LipschitzConstants::default());
        assert!(small > 0.25 && small < 0.3, "{small}");
        let big_gamma = LipschitzConstants {
            gamma_f: 10.0,
            ..Default::default()
        };
        assert!(reference_design(0.01, ta).varpi(1.0, 0.0, &big_gamma) < 0.0);
    }

    #[test]
    fn kappa_cases() {
        let (tr, ta) = setup();
        let d = reference_design(0.01, ta);
        let w = d.varpi(1.0, 0.0, &LipschitzConstants::default());
        let tau = tr.sup_inverse_norm_sq(ta, 50.0, 2000).unwrap();
        let base = KappaInputs {
            tau,
            xi_hat0_norm: 0.0,
            delta_f: 0.0,
            delta_g: 0.0,
            m0: 1.0,
            t_a: ta,
            t0: 0.0,
        };
        assert_eq!(kappa_bound(d.p(), w, &base).unwrap(), 0.0);

        let k1 = kappa_bound(
            d.p(),
            w,
            &KappaInputs {
                xi_hat0_norm: 4.0,
                ..base
            },
        )
        .unwrap();
        let k2 = kappa_bound(
            d.p(),
            w,
            &KappaInputs {
                xi_hat0_norm: 4.0,
                t_a: ta + 1.0,
                ..base
            },
        )
        .unwrap();
        assert!(k1 > 0.0 && k2 < k1);

        let with_delta = kappa_bound(
            d.p(),
            w,
            &KappaInputs {
                delta_f: 0.5,
                ..base
            },
        )
        .unwrap();
        assert!(with_delta > 0.0);

        assert!(matches!(
            kappa_bound(d.p(), -0.1, &base),
            Err(Error::CertificateUnavailable { .. })
        ));
    }

    #[test]
    fn lipschitz_constant_function() {
        let plant = make_affine_plant(vec![0.0, 0.0], 3.0, 1.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = estimate_lipschitz(&plant, &[(0.0, 1.0), (0.0, 1.0)], 50, 0.0, &mut rng).unwrap();
        assert_eq!(c, LipschitzConstants::default());
    }

    #[test]
    fn lipschitz_linear_map() {
        let plant = make_affine_plant(vec![2.0], 0.0, 0.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let c = estimate_lipschitz(&plant, &[(-1.0, 1.0)], 100, 0.0, &mut rng).unwrap();
        assert_relative_eq!(c.gamma_f, 2.0, epsilon = 1e-6);
        assert!(c.delta_f < 1e-6);
    }

    #[test]
    fn lipschitz_tanks_region() {
        let tanks = make_tanks_plant(TankParams::default(), 10.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let region = [(0.5, 4.0), (0.5, 4.0)];
        let c = estimate_lipschitz(&tanks, &region, 200, 5.0, &mut rng).unwrap();
        assert!(c.gamma_f > 0.0 && c.gamma_f.is_finite());
        assert!(c.delta_f.is_finite());
        assert_eq!(c.gamma_g, 0.0);

        // every sampled pair satisfies the inequality, checked by brute force
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<[f64; 2]> = (0..200)
            .map(|_| [rng.random_range(0.5..4.0), rng.random_range(0.5..4.0)])
            .collect();
        for a in &pts {
            for b in &pts {
                let fa = tanks.f(a, 5.0).unwrap();
                let fb = tanks.f(b, 5.0).unwrap();
                let dz2 = (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2);
                assert!((fa - fb).powi(2) <= c.gamma_f.powi(2) * dz2 + c.delta_f.powi(2) + 1e-12);
            }
        }
    }

    #[test]
    fn lipschitz_domain_and_argument_errors() {
        let tanks = make_tanks_plant(TankParams::default(), 10.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            estimate_lipschitz(&tanks, &[(-2.0, -1.0), (0.0, 1.0)], 10, 0.0, &mut rng),
            Err(Error::Domain(_))
        ));
        assert!(estimate_lipschitz(&tanks, &[(1.0, 1.0), (0.0, 1.0)], 10, 0.0, &mut rng).is_err());
        assert!(estimate_lipschitz(&tanks, &[(1.0, 2.0), (0.0, 1.0)], 1, 0.0, &mut rng).is_err());
    }
}
