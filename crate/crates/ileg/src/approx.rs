//! Local linear-quadratic model along a nominal trajectory.
//!
//! Each solver iteration linearizes the dynamics and expands the cost to
//! second order about the current nominal `(x^n(t), u^n(t))` on the uniform
//! time grid. Derivatives come from central finite differences with step
//! [`SolverConfig::fd_step`]; an analytic Jacobian hook is deliberately not
//! required since problem definitions are black-box closures.
//!
//! Coefficients are stored per unit time; the backward pass integrates the
//! value ODEs against them, so no discrete-time conversion happens here.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::exec;
use crate::problem::{ControlProblem, SolverConfig};

/// State/control trajectory on the uniform grid: `times` has N+1 knots,
/// `states` one vector per knot, `controls` one vector per interval
/// (piecewise constant, indexed by the interval's left knot).
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    pub controls: Vec<DVector<f64>>,
}

impl Trajectory {
    /// Uniform knot times 0, dt, …, horizon for `steps` intervals.
    pub fn uniform_grid(horizon: f64, steps: usize) -> Vec<f64> {
        let dt = horizon / steps as f64;
        (0..=steps).map(|k| k as f64 * dt).collect()
    }

    /// Number of intervals N.
    pub fn intervals(&self) -> usize {
        self.controls.len()
    }

    /// Grid spacing.
    pub fn dt(&self) -> f64 {
        self.times[1] - self.times[0]
    }

    pub fn validate(&self, problem: &ControlProblem) -> Result<()> {
        let n = self.intervals();
        if self.times.len() != n + 1 || self.states.len() != n + 1 {
            return Err(Error::Dimension {
                what: "trajectory knots".into(),
                expected: n + 1,
                got: self.times.len().min(self.states.len()),
            });
        }
        if self.states.iter().any(|x| x.len() != problem.state_dim) {
            return Err(Error::Dimension {
                what: "trajectory state".into(),
                expected: problem.state_dim,
                got: self.states[0].len(),
            });
        }
        if self.controls.iter().any(|u| u.len() != problem.control_dim) {
            return Err(Error::Dimension {
                what: "trajectory control".into(),
                expected: problem.control_dim,
                got: self.controls[0].len(),
            });
        }
        Ok(())
    }
}

/// Linearized dynamics along the nominal, one entry per interval.
#[derive(Clone, Debug)]
pub struct DynamicsLin {
    /// ∂/∂x of the full drift f + G·u at the nominal (state × state).
    pub state_jac: Vec<DMatrix<f64>>,
    /// G at the nominal (state × control).
    pub input_mat: Vec<DMatrix<f64>>,
    /// C at the nominal (state × noise).
    pub noise_mat: Vec<DMatrix<f64>>,
}

/// Second-order cost expansion along the nominal, one entry per interval,
/// plus the terminal triple. All per unit time except the terminal cost.
#[derive(Clone, Debug)]
pub struct CostQuad {
    /// L at the nominal.
    pub val: Vec<f64>,
    /// ∇ₓL (includes any state dependence of the control-cost terms).
    pub grad_x: Vec<DVector<f64>>,
    /// ∇ᵤL = R·u + r.
    pub grad_u: Vec<DVector<f64>>,
    /// ∇ₓₓ of the state cost, symmetrized.
    pub hess_xx: Vec<DMatrix<f64>>,
    /// Mixed term ∂²L/∂x∂u (state × control); zero when R and r do not
    /// depend on the state.
    pub hess_xu: Vec<DMatrix<f64>>,
    /// R at the nominal, symmetrized and checked positive definite.
    pub hess_uu: Vec<DMatrix<f64>>,
    pub terminal_val: f64,
    pub terminal_grad: DVector<f64>,
    pub terminal_hess: DMatrix<f64>,
}

/// The assembled time-varying LQ model consumed by the backward pass.
#[derive(Clone, Debug)]
pub struct TimeVaryingLQ {
    /// Knot times shared with the nominal trajectory (N+1 entries).
    pub times: Vec<f64>,
    pub state_jac: Vec<DMatrix<f64>>,
    pub input_mat: Vec<DMatrix<f64>>,
    pub noise_mat: Vec<DMatrix<f64>>,
    pub cost_val: Vec<f64>,
    pub cost_grad_x: Vec<DVector<f64>>,
    pub cost_grad_u: Vec<DVector<f64>>,
    pub cost_hess_xx: Vec<DMatrix<f64>>,
    pub cost_hess_xu: Vec<DMatrix<f64>>,
    pub cost_hess_uu: Vec<DMatrix<f64>>,
    pub terminal_val: f64,
    pub terminal_grad: DVector<f64>,
    pub terminal_hess: DMatrix<f64>,
    pub dt: f64,
    pub sigma: f64,
    pub noise_cov: DMatrix<f64>,
}

impl TimeVaryingLQ {
    pub fn intervals(&self) -> usize {
        self.state_jac.len()
    }

    pub fn state_dim(&self) -> usize {
        self.terminal_grad.len()
    }

    /// C Σ Cᵀ at interval `k`: the state-space noise covariance rate.
    pub fn noise_effect(&self, k: usize) -> DMatrix<f64> {
        &self.noise_mat[k] * &self.noise_cov * self.noise_mat[k].transpose()
    }
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn ensure_finite_mat(m: &DMatrix<f64>, what: &str, knot: usize) -> Result<()> {
    if let Some((i, j)) = (0..m.nrows())
        .flat_map(|i| (0..m.ncols()).map(move |j| (i, j)))
        .find(|&(i, j)| !m[(i, j)].is_finite())
    {
        return Err(Error::NonFinite {
            what: format!("{what} entry ({i},{j})"),
            knot,
        });
    }
    Ok(())
}

fn ensure_finite_vec(v: &DVector<f64>, what: &str, knot: usize) -> Result<()> {
    if let Some(i) = (0..v.len()).find(|&i| !v[i].is_finite()) {
        return Err(Error::NonFinite {
            what: format!("{what} entry {i}"),
            knot,
        });
    }
    Ok(())
}

/// Central-difference Jacobian of a vector map, one column per coordinate.
fn central_jacobian<F>(f: F, x: &DVector<f64>, h: f64, out_dim: usize) -> DMatrix<f64>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let n = x.len();
    let mut jac = DMatrix::zeros(out_dim, n);
    let mut xp = x.clone();
    let mut xm = x.clone();
    for j in 0..n {
        xp[j] = x[j] + h;
        xm[j] = x[j] - h;
        let col = (f(&xp) - f(&xm)) / (2.0 * h);
        jac.set_column(j, &col);
        xp[j] = x[j];
        xm[j] = x[j];
    }
    jac
}

fn central_gradient<F>(f: F, x: &DVector<f64>, h: f64) -> DVector<f64>
where
    F: Fn(&DVector<f64>) -> f64,
{
    let n = x.len();
    let mut g = DVector::zeros(n);
    let mut xp = x.clone();
    let mut xm = x.clone();
    for j in 0..n {
        xp[j] = x[j] + h;
        xm[j] = x[j] - h;
        g[j] = (f(&xp) - f(&xm)) / (2.0 * h);
        xp[j] = x[j];
        xm[j] = x[j];
    }
    g
}

/// Central-difference Hessian: 3-point stencil on the diagonal, 4-point
/// cross stencil off it.
fn central_hessian<F>(f: F, x: &DVector<f64>, h: f64) -> DMatrix<f64>
where
    F: Fn(&DVector<f64>) -> f64,
{
    let n = x.len();
    let f0 = f(x);
    let mut hess = DMatrix::zeros(n, n);
    let mut xi = x.clone();
    for i in 0..n {
        xi[i] = x[i] + h;
        let fp = f(&xi);
        xi[i] = x[i] - h;
        let fm = f(&xi);
        xi[i] = x[i];
        hess[(i, i)] = (fp - 2.0 * f0 + fm) / (h * h);
    }
    let mut xij = x.clone();
    for i in 0..n {
        for j in (i + 1)..n {
            let mut probe = |si: f64, sj: f64| {
                xij[i] = x[i] + si * h;
                xij[j] = x[j] + sj * h;
                let v = f(&xij);
                xij[i] = x[i];
                xij[j] = x[j];
                v
            };
            let v = (probe(1.0, 1.0) - probe(1.0, -1.0) - probe(-1.0, 1.0) + probe(-1.0, -1.0))
                / (4.0 * h * h);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    hess
}

/// Linearizes the dynamics along `nominal`: per interval, the state
/// Jacobian of f + G·u (central differences, so state dependence of G is
/// contracted against the nominal control automatically), plus G and C
/// evaluated at the nominal.
pub fn linearize_dynamics(
    problem: &ControlProblem,
    nominal: &Trajectory,
    cfg: &SolverConfig,
) -> Result<DynamicsLin> {
    nominal.validate(problem)?;
    let h = cfg.fd_step;
    let n = nominal.intervals();
    let per_knot = |k: usize| -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
        let t = nominal.times[k];
        let x = &nominal.states[k];
        let u = &nominal.controls[k];
        let input = (problem.control_matrix)(t, x);
        let noise = (problem.noise_matrix)(t, x);
        let full_drift = |xx: &DVector<f64>| (problem.drift)(t, xx) + (problem.control_matrix)(t, xx) * u;
        let jac = central_jacobian(full_drift, x, h, problem.state_dim);
        ensure_finite_mat(&jac, "dynamics Jacobian", k)?;
        ensure_finite_mat(&input, "control matrix", k)?;
        ensure_finite_mat(&noise, "noise matrix", k)?;
        Ok((jac, input, noise))
    };
    let rows = exec::try_map(n, per_knot)?;
    let mut lin = DynamicsLin {
        state_jac: Vec::with_capacity(n),
        input_mat: Vec::with_capacity(n),
        noise_mat: Vec::with_capacity(n),
    };
    for (a, b, c) in rows {
        lin.state_jac.push(a);
        lin.input_mat.push(b);
        lin.noise_mat.push(c);
    }
    Ok(lin)
}

struct KnotQuad {
    val: f64,
    grad_x: DVector<f64>,
    grad_u: DVector<f64>,
    hess_xx: DMatrix<f64>,
    hess_xu: DMatrix<f64>,
    hess_uu: DMatrix<f64>,
}

/// Expands the running cost to second order about each nominal knot and the
/// terminal cost about the final state.
pub fn quadratize_cost(
    problem: &ControlProblem,
    nominal: &Trajectory,
    cfg: &SolverConfig,
) -> Result<CostQuad> {
    nominal.validate(problem)?;
    let h = cfg.fd_step;
    let n = nominal.intervals();
    let per_knot = |k: usize| -> Result<KnotQuad> {
        let t = nominal.times[k];
        let x = &nominal.states[k];
        let u = &nominal.controls[k];
        let weight = symmetrize(&(problem.control_weight)(t, x));
        if Cholesky::new(weight.clone()).is_none() {
            return Err(Error::NotPositiveDefinite {
                what: "control weight",
                knot: k,
            });
        }
        let lin_u = (problem.control_linear)(t, x);
        let val = problem.running_cost(t, x, u);
        let grad_x = central_gradient(|xx| problem.running_cost(t, xx, u), x, h);
        let grad_u = &weight * u + &lin_u;
        let hess_xx = symmetrize(&central_hessian(
            |xx| (problem.running_state_cost)(t, xx),
            x,
            h,
        ));
        // ∂/∂x of ∇ᵤL; the Jacobian comes out control × state, the model
        // stores the state × control convention.
        let hess_xu = central_jacobian(
            |xx| (problem.control_weight)(t, xx) * u + (problem.control_linear)(t, xx),
            x,
            h,
            problem.control_dim,
        )
        .transpose();
        if !val.is_finite() {
            return Err(Error::NonFinite {
                what: "running cost".into(),
                knot: k,
            });
        }
        ensure_finite_vec(&grad_x, "cost gradient", k)?;
        ensure_finite_vec(&grad_u, "control cost gradient", k)?;
        ensure_finite_mat(&hess_xx, "cost Hessian", k)?;
        ensure_finite_mat(&hess_xu, "cost cross term", k)?;
        Ok(KnotQuad {
            val,
            grad_x,
            grad_u,
            hess_xx,
            hess_xu,
            hess_uu: weight,
        })
    };
    let rows = exec::try_map(n, per_knot)?;

    let xf = &nominal.states[n];
    let terminal_val = (problem.terminal_cost)(xf);
    let terminal_grad = central_gradient(|xx| (problem.terminal_cost)(xx), xf, h);
    let terminal_hess = symmetrize(&central_hessian(|xx| (problem.terminal_cost)(xx), xf, h));
    if !terminal_val.is_finite() {
        return Err(Error::NonFinite {
            what: "terminal cost".into(),
            knot: n,
        });
    }
    ensure_finite_vec(&terminal_grad, "terminal gradient", n)?;
    ensure_finite_mat(&terminal_hess, "terminal Hessian", n)?;

    let mut quad = CostQuad {
        val: Vec::with_capacity(n),
        grad_x: Vec::with_capacity(n),
        grad_u: Vec::with_capacity(n),
        hess_xx: Vec::with_capacity(n),
        hess_xu: Vec::with_capacity(n),
        hess_uu: Vec::with_capacity(n),
        terminal_val,
        terminal_grad,
        terminal_hess,
    };
    for k in rows {
        quad.val.push(k.val);
        quad.grad_x.push(k.grad_x);
        quad.grad_u.push(k.grad_u);
        quad.hess_xx.push(k.hess_xx);
        quad.hess_xu.push(k.hess_xu);
        quad.hess_uu.push(k.hess_uu);
    }
    Ok(quad)
}

/// Linearizes and quadratizes in one call and bundles the result with the
/// grid spacing, risk parameter and noise covariance.
pub fn build_lq_model(
    problem: &ControlProblem,
    nominal: &Trajectory,
    cfg: &SolverConfig,
) -> Result<TimeVaryingLQ> {
    let lin = linearize_dynamics(problem, nominal, cfg)?;
    let quad = quadratize_cost(problem, nominal, cfg)?;
    Ok(TimeVaryingLQ {
        times: nominal.times.clone(),
        state_jac: lin.state_jac,
        input_mat: lin.input_mat,
        noise_mat: lin.noise_mat,
        cost_val: quad.val,
        cost_grad_x: quad.grad_x,
        cost_grad_u: quad.grad_u,
        cost_hess_xx: quad.hess_xx,
        cost_hess_xu: quad.hess_xu,
        cost_hess_uu: quad.hess_uu,
        terminal_val: quad.terminal_val,
        terminal_grad: quad.terminal_grad,
        terminal_hess: quad.terminal_hess,
        dt: nominal.dt(),
        sigma: problem.risk_param,
        noise_cov: problem.noise_covariance.clone(),
    })
}
