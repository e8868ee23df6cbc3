//! Backward value-function ODEs and policy extraction.
//!
//! For the local model with dynamics (A, B, C) and cost coefficients
//! (q0, qx, ru, Q, P, R) the value function of the exponential-cost problem
//! is quadratic in the state deviation,
//! `Ψ(t, δx) = s0(t) + s(t)ᵀ δx + ½ δxᵀ S(t) δx`, where the coefficients
//! solve three coupled final-value ODEs:
//!
//! ```text
//! -Ṡ  = Q + AᵀS + SA − (Pᵀ + BᵀS)ᵀ R⁻¹ (Pᵀ + BᵀS) + σ S (CΣCᵀ) S
//! -ṡ  = qx + Aᵀs − (Pᵀ + BᵀS)ᵀ R⁻¹ (ru + Bᵀs) + σ S (CΣCᵀ) s
//! -ṡ0 = q0 − ½ (ru + Bᵀs)ᵀ R⁻¹ (ru + Bᵀs) + ½ Tr[S CΣCᵀ] + (σ/2) sᵀ (CΣCᵀ) s
//! ```
//!
//! with S(t_f), s(t_f), s0(t_f) given by the terminal cost expansion. The
//! optimal control update is affine: `δu*(t) = l(t) + L(t) δx` with
//! `l = −R⁻¹(ru + Bᵀs)` and `L = −R⁻¹(Pᵀ + BᵀS)`.
//!
//! A solution exists only while `B R⁻¹ Bᵀ − σ C Σ Cᵀ` stays positive
//! semidefinite; this bounds the risk parameter from above and is checked
//! before integration. Violations are hard errors; σ is never shrunk
//! behind the caller's back.
//!
//! Integration is classical RK4 with the model coefficients held constant
//! over each grid interval; S is re-symmetrized after every step. Near a
//! steep terminal cost the S-equation is stiff (its decay rate scales with
//! ‖R⁻¹‖·‖S‖, far above the grid's Nyquist rate), so each interval is
//! subdivided adaptively until the sub-step size sits inside the RK4
//! stability region; on smooth problems the subdivision stays at 1 and the
//! scheme is plain RK4 with step dt.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::approx::{TimeVaryingLQ, Trajectory};
use crate::error::{Error, Result};

/// Quadratic value-function coefficients on the grid (N+1 knots each).
#[derive(Clone, Debug)]
pub struct ValueQuadratic {
    pub times: Vec<f64>,
    /// S(t_k), symmetric.
    pub quad: Vec<DMatrix<f64>>,
    /// s(t_k).
    pub lin: Vec<DVector<f64>>,
    /// s0(t_k).
    pub constant: Vec<f64>,
}

impl ValueQuadratic {
    /// Ψ(t_k, δx).
    pub fn eval(&self, k: usize, dx: &DVector<f64>) -> f64 {
        self.constant[k] + self.lin[k].dot(dx) + 0.5 * dx.dot(&(&self.quad[k] * dx))
    }
}

/// Time-varying affine control law
/// `u(t_k, x) = u_nom(t_k) + alpha·ff(t_k) + fb(t_k)·(x − x_nom(t_k))`.
///
/// `alpha` in (0, 1] scales only the feedforward correction; the feedback
/// term is always applied in full.
#[derive(Clone, Debug)]
pub struct AffinePolicy {
    pub nominal: Trajectory,
    pub feedforward: Vec<DVector<f64>>,
    pub feedback: Vec<DMatrix<f64>>,
    pub alpha: f64,
}

impl AffinePolicy {
    /// The all-zero policy (no feedforward, no feedback) used to
    /// bootstrap the solver.
    pub fn zeros(state_dim: usize, control_dim: usize, horizon: f64, steps: usize) -> Self {
        AffinePolicy {
            nominal: Trajectory {
                times: Trajectory::uniform_grid(horizon, steps),
                states: vec![DVector::zeros(state_dim); steps + 1],
                controls: vec![DVector::zeros(control_dim); steps],
            },
            feedforward: vec![DVector::zeros(control_dim); steps],
            feedback: vec![DMatrix::zeros(control_dim, state_dim); steps],
            alpha: 1.0,
        }
    }

    pub fn intervals(&self) -> usize {
        self.feedforward.len()
    }

    /// Control applied on interval `k` when the state is `x`.
    pub fn control(&self, k: usize, x: &DVector<f64>) -> DVector<f64> {
        &self.nominal.controls[k]
            + &self.feedforward[k] * self.alpha
            + &self.feedback[k] * (x - &self.nominal.states[k])
    }

    /// Same gains with a different feedforward scale.
    pub fn with_alpha(&self, alpha: f64) -> Self {
        let mut p = self.clone();
        p.alpha = alpha;
        p
    }
}

/// Outcome of the solvability check at one knot.
#[derive(Clone, Copy, Debug)]
pub struct ExistenceReport {
    pub knot: usize,
    /// Minimum eigenvalue of B R⁻¹ Bᵀ − σ C Σ Cᵀ; −∞ if R itself was not
    /// positive definite.
    pub min_eigenvalue: f64,
    /// Round-off floor the eigenvalue was compared against.
    pub tolerance: f64,
    pub pass: bool,
}

/// Evaluates the solvability condition at knot `k`: passes iff the
/// minimum eigenvalue of `B R⁻¹ Bᵀ − σ C Σ Cᵀ` is ≥ −tol, with
/// tol = 1e-9·(1 + ‖M‖) so the σ-boundary case is not rejected by
/// round-off. Report-only; callers decide what a failure means.
pub fn check_existence(lq: &TimeVaryingLQ, k: usize) -> ExistenceReport {
    let r_inv = match Cholesky::new(lq.cost_hess_uu[k].clone()) {
        Some(chol) => chol.inverse(),
        None => {
            return ExistenceReport {
                knot: k,
                min_eigenvalue: f64::NEG_INFINITY,
                tolerance: 0.0,
                pass: false,
            }
        }
    };
    let b = &lq.input_mat[k];
    let m = b * r_inv * b.transpose() - lq.noise_effect(k) * lq.sigma;
    let m = (&m + m.transpose()) * 0.5;
    let tolerance = 1e-9 * (1.0 + m.norm());
    let min_eigenvalue = m
        .symmetric_eigenvalues()
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    ExistenceReport {
        knot: k,
        min_eigenvalue,
        tolerance,
        pass: min_eigenvalue >= -tolerance,
    }
}

/// Runs [`check_existence`] at every knot; returns the first failure as an
/// error, otherwise the minimum eigenvalue seen across the horizon.
pub fn check_existence_all(lq: &TimeVaryingLQ) -> Result<f64> {
    let mut min_seen = f64::INFINITY;
    for k in 0..lq.intervals() {
        let report = check_existence(lq, k);
        if !report.pass {
            return Err(Error::ExistenceViolation {
                knot: k,
                min_eigenvalue: report.min_eigenvalue,
            });
        }
        min_seen = min_seen.min(report.min_eigenvalue);
    }
    Ok(min_seen)
}

struct IntervalCoeffs {
    state_jac_t: DMatrix<f64>,
    input_t: DMatrix<f64>,
    cross_t: DMatrix<f64>,
    weight_inv: DMatrix<f64>,
    noise: DMatrix<f64>,
    hess_xx: DMatrix<f64>,
    grad_x: DVector<f64>,
    grad_u: DVector<f64>,
    val: f64,
    /// ‖A‖_F, for the stiffness estimate.
    jac_norm: f64,
    /// ‖B R⁻¹ Bᵀ − σ C Σ Cᵀ‖_F: the kernel of the quadratic decay term.
    decay_norm: f64,
}

struct ValueDeriv {
    quad: DMatrix<f64>,
    lin: DVector<f64>,
    constant: f64,
}

/// Right-hand sides of −Ṡ, −ṡ, −ṡ0 (the derivatives in reversed time).
fn reversed_derivative(
    c: &IntervalCoeffs,
    sigma: f64,
    quad: &DMatrix<f64>,
    lin: &DVector<f64>,
) -> ValueDeriv {
    let gain = &c.cross_t + &c.input_t * quad; // Pᵀ + BᵀS, control × state
    let resid = &c.grad_u + &c.input_t * lin; // ru + Bᵀs
    let winv_gain = &c.weight_inv * &gain;
    let winv_resid = &c.weight_inv * &resid;
    let noise_quad = &c.noise * quad; // (CΣCᵀ)S
    let noise_lin = &c.noise * lin; // (CΣCᵀ)s

    let d_quad = &c.hess_xx
        + &c.state_jac_t * quad
        + quad * c.state_jac_t.transpose()
        - gain.transpose() * &winv_gain
        + quad * &noise_quad * sigma;
    let d_lin = &c.grad_x + &c.state_jac_t * lin - gain.transpose() * &winv_resid
        + quad * &noise_lin * sigma;
    let d_constant = c.val - 0.5 * resid.dot(&winv_resid)
        + 0.5 * (quad * &c.noise).trace()
        + 0.5 * sigma * lin.dot(&noise_lin);
    ValueDeriv {
        quad: d_quad,
        lin: d_lin,
        constant: d_constant,
    }
}

/// Integrates the three value ODEs backward from the terminal expansion.
///
/// Checks the existence condition at every knot first and refuses to run
/// if it fails anywhere. Returns the value coefficients at all N+1 knots.
pub fn backward_pass(lq: &TimeVaryingLQ) -> Result<ValueQuadratic> {
    let n = lq.intervals();
    let sigma = lq.sigma;
    check_existence_all(lq)?;

    let mut coeffs = Vec::with_capacity(n);
    for k in 0..n {
        let weight_inv = Cholesky::new(lq.cost_hess_uu[k].clone())
            .ok_or(Error::NotPositiveDefinite {
                what: "control weight",
                knot: k,
            })?
            .inverse();
        let noise = lq.noise_effect(k);
        let b = &lq.input_mat[k];
        let decay_kernel = b * &weight_inv * b.transpose() - &noise * sigma;
        coeffs.push(IntervalCoeffs {
            state_jac_t: lq.state_jac[k].transpose(),
            input_t: b.transpose(),
            cross_t: lq.cost_hess_xu[k].transpose(),
            weight_inv,
            noise,
            hess_xx: lq.cost_hess_xx[k].clone(),
            grad_x: lq.cost_grad_x[k].clone(),
            grad_u: lq.cost_grad_u[k].clone(),
            val: lq.cost_val[k],
            jac_norm: lq.state_jac[k].norm(),
            decay_norm: decay_kernel.norm(),
        });
    }

    let dim = lq.state_dim();
    let mut quad = vec![DMatrix::zeros(dim, dim); n + 1];
    let mut lin = vec![DVector::zeros(dim); n + 1];
    let mut constant = vec![0.0; n + 1];
    quad[n] = (&lq.terminal_hess + lq.terminal_hess.transpose()) * 0.5;
    lin[n] = lq.terminal_grad.clone();
    constant[n] = lq.terminal_val;

    let dt = lq.dt;
    for k in (0..n).rev() {
        let c = &coeffs[k];
        // Fastest decay rate of the linearized S-equation, estimated at the
        // interval's right end where S is largest during a backward sweep;
        // sub-step so that rate·h stays well inside RK4's stability interval.
        let rate = 2.0 * (c.jac_norm + c.decay_norm * quad[k + 1].norm());
        let substeps = ((dt * rate / 0.8).ceil() as usize).clamp(1, 20_000);
        let h = dt / substeps as f64;

        let mut s = quad[k + 1].clone();
        let mut v = lin[k + 1].clone();
        let mut f0 = constant[k + 1];
        for _ in 0..substeps {
            let k1 = reversed_derivative(c, sigma, &s, &v);
            let k2 = reversed_derivative(
                c,
                sigma,
                &(&s + &k1.quad * (h / 2.0)),
                &(&v + &k1.lin * (h / 2.0)),
            );
            let k3 = reversed_derivative(
                c,
                sigma,
                &(&s + &k2.quad * (h / 2.0)),
                &(&v + &k2.lin * (h / 2.0)),
            );
            let k4 = reversed_derivative(c, sigma, &(&s + &k3.quad * h), &(&v + &k3.lin * h));
            s += (&k1.quad + &k2.quad * 2.0 + &k3.quad * 2.0 + &k4.quad) * (h / 6.0);
            s = (&s + s.transpose()) * 0.5;
            v += (&k1.lin + &k2.lin * 2.0 + &k3.lin * 2.0 + &k4.lin) * (h / 6.0);
            f0 += (k1.constant + 2.0 * k2.constant + 2.0 * k3.constant + k4.constant) * (h / 6.0);
        }

        if s.iter().any(|v| !v.is_finite()) || v.iter().any(|v| !v.is_finite()) || !f0.is_finite()
        {
            return Err(Error::NonFinite {
                what: "value function (backward integration diverged)".into(),
                knot: k,
            });
        }
        quad[k] = s;
        lin[k] = v;
        constant[k] = f0;
    }

    Ok(ValueQuadratic {
        times: lq.times.clone(),
        quad,
        lin,
        constant,
    })
}

/// Extracts the affine policy from a value function: per interval,
/// `ff = −R⁻¹(ru + Bᵀs)` and `fb = −R⁻¹(Pᵀ + BᵀS)` evaluated at the
/// interval's left knot. The feedforward scale starts at 1.
pub fn extract_policy(
    lq: &TimeVaryingLQ,
    value: &ValueQuadratic,
    nominal: &Trajectory,
) -> Result<AffinePolicy> {
    let n = lq.intervals();
    let mut feedforward = Vec::with_capacity(n);
    let mut feedback = Vec::with_capacity(n);
    for k in 0..n {
        let weight_inv = Cholesky::new(lq.cost_hess_uu[k].clone())
            .ok_or(Error::NotPositiveDefinite {
                what: "control weight",
                knot: k,
            })?
            .inverse();
        let bt = lq.input_mat[k].transpose();
        let ff = -(&weight_inv * (&lq.cost_grad_u[k] + &bt * &value.lin[k]));
        let fb = -(&weight_inv * (lq.cost_hess_xu[k].transpose() + &bt * &value.quad[k]));
        feedforward.push(ff);
        feedback.push(fb);
    }
    Ok(AffinePolicy {
        nominal: nominal.clone(),
        feedforward,
        feedback,
        alpha: 1.0,
    })
}
