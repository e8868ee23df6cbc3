//! Problem data model, built-in benchmark problems and config loading.

use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Drift or other vector-valued function of time and state.
pub type VectorFn = Arc<dyn Fn(f64, &DVector<f64>) -> DVector<f64> + Send + Sync>;
/// Matrix-valued function of time and state.
pub type MatrixFn = Arc<dyn Fn(f64, &DVector<f64>) -> DMatrix<f64> + Send + Sync>;
/// Scalar-valued function of time and state.
pub type ScalarFn = Arc<dyn Fn(f64, &DVector<f64>) -> f64 + Send + Sync>;
/// Scalar-valued function of the terminal state.
pub type TerminalFn = Arc<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>;

/// A continuous-time stochastic optimal control problem.
///
/// Dynamics: `dx = (drift + control_matrix · u) dt + noise_matrix · dw`
/// with Brownian increments of covariance `noise_covariance · dt`.
///
/// Running cost: `running_state_cost(t,x) + ½ uᵀ control_weight(t,x) u
/// + uᵀ control_linear(t,x)`, plus `terminal_cost(x(horizon))`.
///
/// The objective is the expectation of `exp(risk_param · total cost)`;
/// `risk_param = 0` recovers the plain expected-cost problem.
///
/// Values are immutable after construction; all member functions are pure,
/// so a problem can be shared freely across threads.
#[derive(Clone)]
pub struct ControlProblem {
    pub state_dim: usize,
    pub control_dim: usize,
    pub noise_dim: usize,
    /// f(t, x), the control-free part of the drift.
    pub drift: VectorFn,
    /// G(t, x), state_dim × control_dim.
    pub control_matrix: MatrixFn,
    /// C(t, x), state_dim × noise_dim.
    pub noise_matrix: MatrixFn,
    /// Σ, noise_dim × noise_dim symmetric positive semidefinite, per unit time.
    pub noise_covariance: DMatrix<f64>,
    /// Φ(t, x), the control-free running cost.
    pub running_state_cost: ScalarFn,
    /// R(t, x), control_dim × control_dim symmetric positive definite.
    pub control_weight: MatrixFn,
    /// r(t, x), the running cost term linear in u.
    pub control_linear: VectorFn,
    /// Φ_f(x).
    pub terminal_cost: TerminalFn,
    /// t_f in seconds, > 0.
    pub horizon: f64,
    pub initial_state: DVector<f64>,
    /// σ. Positive values are risk-averse, zero is risk-neutral.
    pub risk_param: f64,
}

impl ControlProblem {
    /// Same problem with a different risk parameter.
    pub fn with_risk_param(&self, sigma: f64) -> Self {
        let mut p = self.clone();
        p.risk_param = sigma;
        p
    }

    /// Full running cost L(t, x, u) = Φ + ½ uᵀRu + uᵀr.
    pub fn running_cost(&self, t: f64, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        let r = (self.control_weight)(t, x);
        let lin = (self.control_linear)(t, x);
        (self.running_state_cost)(t, x) + 0.5 * u.dot(&(&r * u)) + u.dot(&lin)
    }

    /// Checks dimension consistency by evaluating every member function at
    /// (t = 0, x = initial_state). Also checks `horizon > 0` and that the
    /// noise covariance is square and symmetric.
    pub fn validate(&self) -> Result<()> {
        if !self.horizon.is_finite() || self.horizon <= 0.0 {
            return Err(Error::InvalidProblem(format!(
                "horizon must be > 0, got {}",
                self.horizon
            )));
        }
        let dim = |what: &str, expected: usize, got: usize| -> Result<()> {
            if expected != got {
                return Err(Error::Dimension {
                    what: what.to_string(),
                    expected,
                    got,
                });
            }
            Ok(())
        };
        let x0 = &self.initial_state;
        dim("initial_state", self.state_dim, x0.len())?;
        dim("drift output", self.state_dim, (self.drift)(0.0, x0).len())?;
        let g = (self.control_matrix)(0.0, x0);
        dim("control_matrix rows", self.state_dim, g.nrows())?;
        dim("control_matrix cols", self.control_dim, g.ncols())?;
        let c = (self.noise_matrix)(0.0, x0);
        dim("noise_matrix rows", self.state_dim, c.nrows())?;
        dim("noise_matrix cols", self.noise_dim, c.ncols())?;
        dim(
            "noise_covariance rows",
            self.noise_dim,
            self.noise_covariance.nrows(),
        )?;
        dim(
            "noise_covariance cols",
            self.noise_dim,
            self.noise_covariance.ncols(),
        )?;
        if (&self.noise_covariance - self.noise_covariance.transpose()).norm() > 1e-12 {
            return Err(Error::InvalidProblem(
                "noise_covariance must be symmetric".into(),
            ));
        }
        let w = (self.control_weight)(0.0, x0);
        dim("control_weight rows", self.control_dim, w.nrows())?;
        dim("control_weight cols", self.control_dim, w.ncols())?;
        dim(
            "control_linear",
            self.control_dim,
            (self.control_linear)(0.0, x0).len(),
        )?;
        Ok(())
    }
}

impl std::fmt::Debug for ControlProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ControlProblem")
            .field("state_dim", &self.state_dim)
            .field("control_dim", &self.control_dim)
            .field("noise_dim", &self.noise_dim)
            .field("horizon", &self.horizon)
            .field("initial_state", &self.initial_state)
            .field("risk_param", &self.risk_param)
            .finish_non_exhaustive()
    }
}

/// Discretization, termination and sampling settings.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SolverConfig {
    /// Number N of uniform time steps; dt = horizon / N. Must be ≥ 2.
    pub grid_steps: usize,
    pub max_iterations: usize,
    /// Relative cost-decrease threshold for convergence.
    pub cost_tolerance: f64,
    /// Central finite-difference step for Jacobians and Hessians.
    pub fd_step: f64,
    /// Multiplicative backtracking factor for the feedforward scale, in (0,1).
    pub line_search_shrink: f64,
    /// Smallest feedforward scale tried before the line search gives up.
    pub line_search_min_alpha: f64,
    pub rng_seed: u64,
    /// Number of Monte-Carlo rollouts per evaluation.
    pub mc_samples: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            grid_steps: 300,
            max_iterations: 100,
            cost_tolerance: 1e-6,
            fd_step: 1e-4,
            line_search_shrink: 0.5,
            line_search_min_alpha: 1.0 / 64.0,
            rng_seed: 0,
            mc_samples: 2000,
        }
    }
}

impl SolverConfig {
    /// Uniform step length for the given problem.
    pub fn dt(&self, problem: &ControlProblem) -> f64 {
        problem.horizon / self.grid_steps as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid_steps < 2 {
            return Err(Error::InvalidProblem(format!(
                "grid_steps must be >= 2, got {}",
                self.grid_steps
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidProblem("max_iterations must be >= 1".into()));
        }
        if !self.cost_tolerance.is_finite() || self.cost_tolerance <= 0.0 {
            return Err(Error::InvalidProblem("cost_tolerance must be > 0".into()));
        }
        if !self.fd_step.is_finite() || self.fd_step <= 0.0 {
            return Err(Error::InvalidProblem("fd_step must be > 0".into()));
        }
        if !(self.line_search_shrink > 0.0 && self.line_search_shrink < 1.0) {
            return Err(Error::InvalidProblem(
                "line_search_shrink must be in (0,1)".into(),
            ));
        }
        if !(self.line_search_min_alpha > 0.0 && self.line_search_min_alpha < 1.0) {
            return Err(Error::InvalidProblem(
                "line_search_min_alpha must be in (0,1)".into(),
            ));
        }
        if self.mc_samples == 0 {
            return Err(Error::InvalidProblem("mc_samples must be >= 1".into()));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Cliff world benchmark
// ---------------------------------------------------------------------------

/// Defaults for [`make_cliff_world`]; every value can be overridden through
/// the config file.
pub mod cliff {
    /// Force-noise standard deviations [X, Y], N·s^(-1/2). The Y channel is
    /// 10× noisier, which is what makes the cliff side dangerous. With the
    /// control weights diag(2, 0.02) both channels then bound the risk
    /// parameter at σ ≤ (1/R_ii)/Σ_ii = 50.
    pub const NOISE_SD: [f64; 2] = [0.1, 1.0];
    /// Start corner: at rest at the origin.
    pub const INITIAL_STATE: [f64; 4] = [0.0, 0.0, 0.0, 0.0];
    /// Goal position [x, y]; the terminal cost also demands zero velocity.
    pub const GOAL: [f64; 2] = [10.0, 0.0];
    /// Horizon in seconds.
    pub const HORIZON: f64 = 3.0;
    /// The soft cliff penalty 0.1/(0.1·y+1)^10 has a pole at y = -10; at and
    /// below y = -10 + POLE_MARGIN the running cost returns [`COST_CAP`]
    /// so that rollouts stay finite.
    pub const POLE_MARGIN: f64 = 1e-6;
    pub const COST_CAP: f64 = 1e9;
}

/// Soft penalty for approaching the cliff edge at y = -10; strictly
/// decreasing in y above the pole, capped at [`cliff::COST_CAP`] below it.
fn cliff_penalty(y: f64) -> f64 {
    if y <= -10.0 + cliff::POLE_MARGIN {
        cliff::COST_CAP
    } else {
        0.1 / (0.1 * y + 1.0).powi(10)
    }
}

fn cliff_world_custom(
    noise_sd: [f64; 2],
    initial_state: DVector<f64>,
    goal: [f64; 2],
    horizon: f64,
    sigma: f64,
) -> ControlProblem {
    // Point mass (1 kg) in the plane: state (x, y, vx, vy), controls are
    // forces, noise is additive force noise on both channels.
    let force_map = DMatrix::from_row_slice(4, 2, &[0., 0., 0., 0., 1., 0., 0., 1.]);
    let noise_map = force_map.clone();
    let (gx, gy) = (goal[0], goal[1]);
    ControlProblem {
        state_dim: 4,
        control_dim: 2,
        noise_dim: 2,
        drift: Arc::new(|_t, x: &DVector<f64>| DVector::from_vec(vec![x[2], x[3], 0.0, 0.0])),
        control_matrix: Arc::new(move |_t, _x| force_map.clone()),
        noise_matrix: Arc::new(move |_t, _x| noise_map.clone()),
        noise_covariance: DMatrix::from_diagonal(&DVector::from_vec(vec![
            noise_sd[0] * noise_sd[0],
            noise_sd[1] * noise_sd[1],
        ])),
        running_state_cost: Arc::new(|_t, x: &DVector<f64>| cliff_penalty(x[1])),
        // u_x² + 0.01 u_y² = ½ uᵀ diag(2, 0.02) u
        control_weight: Arc::new(|_t, _x| {
            DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 0.02]))
        }),
        control_linear: Arc::new(|_t, _x| DVector::zeros(2)),
        terminal_cost: Arc::new(move |x: &DVector<f64>| {
            100.0 * (x[0] - gx).powi(2)
                + 100.0 * (x[1] - gy).powi(2)
                + 10.0 * (x[2] * x[2] + x[3] * x[3])
        }),
        horizon,
        initial_state,
        risk_param: sigma,
    }
}

/// Point-mass navigation along a cliff: reach and stop at [10, 0] within
/// 3 s while a soft penalty grows toward the cliff edge at y = -10 and the
/// Y force noise is 10× the X noise. Risk-neutral by default.
pub fn make_cliff_world() -> ControlProblem {
    cliff_world_custom(
        cliff::NOISE_SD,
        DVector::from_column_slice(&cliff::INITIAL_STATE),
        cliff::GOAL,
        cliff::HORIZON,
        0.0,
    )
}

// ---------------------------------------------------------------------------
// Scalar linear-quadratic validation problem
// ---------------------------------------------------------------------------

/// Scalar problem dx = (a·x + b·u) dt + c·dw with unit noise covariance,
/// running cost ½·q·x² + ½·r_w·u² and zero terminal cost. Its quadratic
/// approximation is exact, so the solver must converge on it in one step;
/// the backward pass on it has known analytic limits.
///
/// The initial state defaults to 1 (configurable via the config file).
pub fn make_scalar_lq(
    a: f64,
    b: f64,
    c: f64,
    q: f64,
    r_w: f64,
    sigma: f64,
    tf: f64,
) -> Result<ControlProblem> {
    scalar_lq_custom(a, b, c, q, r_w, sigma, tf, 1.0, DVector::from_element(1, 1.0))
}

#[allow(clippy::too_many_arguments)]
fn scalar_lq_custom(
    a: f64,
    b: f64,
    c: f64,
    q: f64,
    r_w: f64,
    sigma: f64,
    tf: f64,
    noise_var: f64,
    initial_state: DVector<f64>,
) -> Result<ControlProblem> {
    if !r_w.is_finite() || r_w <= 0.0 {
        return Err(Error::InvalidProblem(format!(
            "control weight must be > 0, got {r_w}"
        )));
    }
    if q < 0.0 {
        return Err(Error::InvalidProblem(format!(
            "state cost weight must be >= 0, got {q}"
        )));
    }
    if !tf.is_finite() || tf <= 0.0 {
        return Err(Error::InvalidProblem(format!(
            "horizon must be > 0, got {tf}"
        )));
    }
    Ok(ControlProblem {
        state_dim: 1,
        control_dim: 1,
        noise_dim: 1,
        drift: Arc::new(move |_t, x: &DVector<f64>| DVector::from_element(1, a * x[0])),
        control_matrix: Arc::new(move |_t, _x| DMatrix::from_element(1, 1, b)),
        noise_matrix: Arc::new(move |_t, _x| DMatrix::from_element(1, 1, c)),
        noise_covariance: DMatrix::from_element(1, 1, noise_var),
        running_state_cost: Arc::new(move |_t, x: &DVector<f64>| 0.5 * q * x[0] * x[0]),
        control_weight: Arc::new(move |_t, _x| DMatrix::from_element(1, 1, r_w)),
        control_linear: Arc::new(|_t, _x| DVector::zeros(1)),
        terminal_cost: Arc::new(|_x| 0.0),
        horizon: tf,
        initial_state,
        risk_param: sigma,
    })
}

// ---------------------------------------------------------------------------
// Config files
// ---------------------------------------------------------------------------

/// Problem configuration as stored on disk: a preset name plus optional
/// overrides. Unknown keys are rejected. All keys except `preset` are
/// optional; a missing `sigma` means risk-neutral (σ = 0).
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    /// `"cliff_world"` or `"scalar_lq"`.
    pub preset: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    /// Per-channel noise standard deviations (length = noise dimension).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_sd: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_state: Option<Vec<f64>>,
    /// Goal position; only meaningful for `cliff_world`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goal_state: Option<Vec<f64>>,
}

impl ProblemConfig {
    /// Bare config for a preset, no overrides.
    pub fn preset(name: &str) -> Self {
        ProblemConfig {
            preset: name.to_string(),
            sigma: None,
            horizon: None,
            noise_sd: None,
            initial_state: None,
            goal_state: None,
        }
    }

    /// Builds the configured problem, applying overrides on top of the
    /// preset defaults.
    pub fn build(&self) -> Result<ControlProblem> {
        let expect_len = |what: &str, v: &[f64], expected: usize| -> Result<()> {
            if v.len() != expected {
                return Err(Error::Dimension {
                    what: what.to_string(),
                    expected,
                    got: v.len(),
                });
            }
            Ok(())
        };
        let sigma = self.sigma.unwrap_or(0.0);
        let problem = match self.preset.as_str() {
            "cliff_world" => {
                let mut noise_sd = cliff::NOISE_SD;
                if let Some(sd) = &self.noise_sd {
                    expect_len("noise_sd", sd, 2)?;
                    noise_sd = [sd[0], sd[1]];
                }
                let initial = match &self.initial_state {
                    Some(x0) => {
                        expect_len("initial_state", x0, 4)?;
                        DVector::from_column_slice(x0)
                    }
                    None => DVector::from_column_slice(&cliff::INITIAL_STATE),
                };
                let goal = match &self.goal_state {
                    Some(g) => {
                        expect_len("goal_state", g, 2)?;
                        [g[0], g[1]]
                    }
                    None => cliff::GOAL,
                };
                let horizon = self.horizon.unwrap_or(cliff::HORIZON);
                cliff_world_custom(noise_sd, initial, goal, horizon, sigma)
            }
            "scalar_lq" => {
                if self.goal_state.is_some() {
                    return Err(Error::InvalidProblem(
                        "goal_state is not supported by the scalar_lq preset".into(),
                    ));
                }
                let noise_var = match &self.noise_sd {
                    Some(sd) => {
                        expect_len("noise_sd", sd, 1)?;
                        sd[0] * sd[0]
                    }
                    None => 1.0,
                };
                let initial = match &self.initial_state {
                    Some(x0) => {
                        expect_len("initial_state", x0, 1)?;
                        DVector::from_column_slice(x0)
                    }
                    None => DVector::from_element(1, 1.0),
                };
                let horizon = self.horizon.unwrap_or(10.0);
                scalar_lq_custom(0.0, 1.0, 1.0, 1.0, 1.0, sigma, horizon, noise_var, initial)?
            }
            other => return Err(Error::UnknownPreset(other.to_string())),
        };
        problem.validate()?;
        Ok(problem)
    }

    /// Parses a config from a JSON string. Parse errors carry the
    /// line/column reported by the JSON parser.
    pub fn from_json(json: &str, origin: &str) -> Result<Self> {
        serde_json::from_str(json).map_err(|e| Error::Config {
            path: origin.to_string(),
            message: e.to_string(),
        })
    }
}

/// Reads a problem config file and builds the problem it describes.
pub fn load_problem(path: impl AsRef<Path>) -> Result<ControlProblem> {
    load_config(&path).and_then(|cfg| cfg.build())
}

/// Reads and parses a problem config file without building the problem.
pub fn load_config(path: impl AsRef<Path>) -> Result<ProblemConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    ProblemConfig::from_json(&text, &path.display().to_string())
}
