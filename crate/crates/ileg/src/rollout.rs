//! Forward simulation and cost/risk evaluation.
//!
//! The solver loop uses deterministic (noise-free) RK4 rollouts; Monte-Carlo
//! policy evaluation uses Euler–Maruyama, since the Brownian forcing caps
//! the achievable strong order at 0.5 anyway. Both hold the control constant
//! over each grid interval, evaluated from the policy at the interval's left
//! knot with the currently integrated state, and both accumulate the plain
//! (non-exponentiated) performance index by the rectangle rule.
//!
//! Every stochastic quantity is a pure function of
//! `(problem, policy, rng_seed, sample_index)`: sample `i` draws from its own
//! counter-mode RNG stream, so samples can run in any order, or in
//! parallel, without changing results.

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::approx::Trajectory;
use crate::error::{Error, Result};
use crate::exec;
use crate::problem::{ControlProblem, SolverConfig};
use crate::riccati::AffinePolicy;

/// Monte-Carlo cost statistics under a fixed policy.
///
/// `variance` and `skewness` are the second and third central sample
/// moments (1/n normalization); `risk_objective` estimates
/// `(1/σ) log E[exp(σ𝒥)]`, which degenerates to the mean at σ = 0.
#[derive(Clone, Debug)]
pub struct RolloutStats {
    pub samples: Vec<f64>,
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
    pub risk_objective: f64,
    pub sigma: f64,
    pub seed: u64,
    pub n_samples: usize,
}

impl RolloutStats {
    pub fn from_samples(samples: Vec<f64>, sigma: f64, seed: u64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptySamples);
        }
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let variance = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        let skewness = samples.iter().map(|x| (x - mean).powi(3)).sum::<f64>() / n;
        let risk_objective = estimate_risk_objective(&samples, sigma)?;
        Ok(RolloutStats {
            n_samples: samples.len(),
            samples,
            mean,
            variance,
            skewness,
            risk_objective,
            sigma,
            seed,
        })
    }
}

/// Truncations of the cumulant expansion
/// `(1/σ) log E[exp(σ𝒥)] = mean + (σ/2)·μ₂ + (σ²/6)·μ₃ + …`
/// next to the directly estimated risk objective, so the expansion's
/// convergence can be checked sample set by sample set.
#[derive(Clone, Copy, Debug, serde::Serialize)]
pub struct CumulantReport {
    /// One-term truncation: the mean.
    pub mean: f64,
    /// Two terms: mean + (σ/2)·variance.
    pub with_variance: f64,
    /// Three terms: mean + (σ/2)·variance + (σ²/6)·skewness.
    pub with_skewness: f64,
    /// The log-sum-exp estimate the truncations approximate.
    pub risk_objective: f64,
}

/// Builds the cumulant-expansion comparison record for a sample set.
pub fn cumulant_report(stats: &RolloutStats) -> CumulantReport {
    let s = stats.sigma;
    let two = stats.mean + 0.5 * s * stats.variance;
    CumulantReport {
        mean: stats.mean,
        with_variance: two,
        with_skewness: two + s * s / 6.0 * stats.skewness,
        risk_objective: stats.risk_objective,
    }
}

/// Estimates `(1/σ) log( (1/n) Σ exp(σ·𝒥ᵢ) )` with a max-shift so that the
/// exponentials cannot overflow (cliff-fall samples at σ = 45 would
/// overflow a naive sum); at σ = 0 the defined limit is the sample mean.
pub fn estimate_risk_objective(samples: &[f64], sigma: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    let n = samples.len() as f64;
    if sigma == 0.0 {
        return Ok(samples.iter().sum::<f64>() / n);
    }
    // m maximizes σ·𝒥 over the samples, so every shifted exponent is ≤ 0.
    let m = samples
        .iter()
        .cloned()
        .fold(f64::NAN, |acc, x| {
            if acc.is_nan() || sigma * x > sigma * acc {
                x
            } else {
                acc
            }
        });
    let sum: f64 = samples.iter().map(|&x| (sigma * (x - m)).exp()).sum();
    let out = m + (sum / n).ln() / sigma;
    if !out.is_finite() {
        let lo = samples.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        return Err(Error::RiskObjectiveOverflow {
            sigma_range: sigma * (hi - lo),
        });
    }
    Ok(out)
}

/// Rectangle-rule quadrature of the running cost plus the terminal cost:
/// the plain performance index used for line-search acceptance and
/// reporting.
pub fn evaluate_cost(problem: &ControlProblem, traj: &Trajectory) -> Result<f64> {
    traj.validate(problem)?;
    let dt = traj.dt();
    let mut total = 0.0;
    for k in 0..traj.intervals() {
        total += problem.running_cost(traj.times[k], &traj.states[k], &traj.controls[k]) * dt;
    }
    total += (problem.terminal_cost)(&traj.states[traj.intervals()]);
    if !total.is_finite() {
        return Err(Error::NonFinite {
            what: "trajectory cost".into(),
            knot: traj.intervals(),
        });
    }
    Ok(total)
}

fn ensure_state_finite(x: &DVector<f64>, knot: usize) -> Result<()> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "state".into(),
            knot,
        });
    }
    Ok(())
}

/// Noise-free forward integration of `ẋ = f + G·u` under the policy,
/// classical RK4 per interval. Returns the trajectory that becomes the next
/// nominal.
pub fn rollout_deterministic(
    problem: &ControlProblem,
    policy: &AffinePolicy,
    cfg: &SolverConfig,
) -> Result<Trajectory> {
    if policy.intervals() != cfg.grid_steps {
        return Err(Error::Dimension {
            what: "policy grid".into(),
            expected: cfg.grid_steps,
            got: policy.intervals(),
        });
    }
    let times = policy.nominal.times.clone();
    let dt = times[1] - times[0];
    let n = policy.intervals();
    let mut states = Vec::with_capacity(n + 1);
    let mut controls = Vec::with_capacity(n);
    let mut x = problem.initial_state.clone();
    states.push(x.clone());
    for (k, &t) in times.iter().take(n).enumerate() {
        let u = policy.control(k, &x);
        let deriv = |tt: f64, xx: &DVector<f64>| {
            (problem.drift)(tt, xx) + (problem.control_matrix)(tt, xx) * &u
        };
        let k1 = deriv(t, &x);
        let k2 = deriv(t + dt / 2.0, &(&x + &k1 * (dt / 2.0)));
        let k3 = deriv(t + dt / 2.0, &(&x + &k2 * (dt / 2.0)));
        let k4 = deriv(t + dt, &(&x + &k3 * dt));
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        ensure_state_finite(&x, k + 1)?;
        states.push(x.clone());
        controls.push(u);
    }
    Ok(Trajectory {
        times,
        states,
        controls,
    })
}

/// Symmetric positive-semidefinite square root, tolerant of zero
/// eigenvalues (a plain Cholesky would reject a singular Σ).
fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = m.clone().symmetric_eigen();
    let sqrt_vals = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals) * eig.eigenvectors.transpose()
}

/// One Euler–Maruyama rollout with the policy closing the loop:
/// `x_{k+1} = x_k + (f + G·u) dt + C·Δw`, `Δw ~ N(0, Σ·dt)`.
///
/// Returns the trajectory and its realized performance index 𝒥 (the plain
/// cost, not its exponential). The RNG stream is derived from
/// `(cfg.rng_seed, sample_index)`, so a given sample is bit-reproducible
/// regardless of how many others run or in what order.
pub fn rollout_stochastic(
    problem: &ControlProblem,
    policy: &AffinePolicy,
    cfg: &SolverConfig,
    sample_index: usize,
) -> Result<(Trajectory, f64)> {
    if policy.intervals() != cfg.grid_steps {
        return Err(Error::Dimension {
            what: "policy grid".into(),
            expected: cfg.grid_steps,
            got: policy.intervals(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    rng.set_stream(sample_index as u64);

    let noise_factor = psd_sqrt(&problem.noise_covariance);
    let times = policy.nominal.times.clone();
    let dt = times[1] - times[0];
    let sqrt_dt = dt.sqrt();
    let n = policy.intervals();
    let mut states = Vec::with_capacity(n + 1);
    let mut controls = Vec::with_capacity(n);
    let mut x = problem.initial_state.clone();
    let mut cost = 0.0;
    states.push(x.clone());
    for (k, &t) in times.iter().take(n).enumerate() {
        let u = policy.control(k, &x);
        cost += problem.running_cost(t, &x, &u) * dt;
        let z: DVector<f64> =
            DVector::from_fn(problem.noise_dim, |_, _| rng.sample(StandardNormal));
        let dw = &noise_factor * z * sqrt_dt;
        let drift = (problem.drift)(t, &x) + (problem.control_matrix)(t, &x) * &u;
        x += drift * dt + (problem.noise_matrix)(t, &x) * dw;
        ensure_state_finite(&x, k + 1)?;
        states.push(x.clone());
        controls.push(u);
    }
    cost += (problem.terminal_cost)(&x);
    Ok((
        Trajectory {
            times,
            states,
            controls,
        },
        cost,
    ))
}

/// Per-knot mean and standard deviation of the sampled state trajectories,
/// for error-band plots. `sd` is the full 1-SD band; fifteen-percent bands
/// (0.15·SD) are derived by scaling at the output layer rather than here.
#[derive(Clone, Debug)]
pub struct StateBands {
    pub times: Vec<f64>,
    pub mean: Vec<DVector<f64>>,
    pub sd: Vec<DVector<f64>>,
}

fn collect_samples(
    problem: &ControlProblem,
    policy: &AffinePolicy,
    cfg: &SolverConfig,
    parallel: bool,
) -> Result<Vec<(f64, Vec<DVector<f64>>)>> {
    let run = |i: usize| {
        rollout_stochastic(problem, policy, cfg, i).map(|(traj, cost)| (cost, traj.states))
    };
    if parallel {
        exec::try_map(cfg.mc_samples, run)
    } else {
        exec::try_map_seq(cfg.mc_samples, run)
    }
}

fn reduce_samples(
    rollouts: Vec<(f64, Vec<DVector<f64>>)>,
    times: Vec<f64>,
    sigma: f64,
    seed: u64,
) -> Result<(RolloutStats, StateBands)> {
    let n = rollouts.len();
    let knots = times.len();
    let dim = rollouts[0].1[0].len();
    let costs: Vec<f64> = rollouts.iter().map(|(c, _)| *c).collect();

    // two-pass moments in sample order: scheduling-independent by construction
    let mut mean = vec![DVector::zeros(dim); knots];
    for (_, states) in &rollouts {
        for (k, x) in states.iter().enumerate() {
            mean[k] += x;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut sd = vec![DVector::zeros(dim); knots];
    for (_, states) in &rollouts {
        for (k, x) in states.iter().enumerate() {
            let d = x - &mean[k];
            sd[k] += d.component_mul(&d);
        }
    }
    for s in &mut sd {
        *s /= n as f64;
        *s = s.map(f64::sqrt);
    }

    let stats = RolloutStats::from_samples(costs, sigma, seed)?;
    Ok((stats, StateBands { times, mean, sd }))
}

/// Runs `cfg.mc_samples` stochastic rollouts and reduces them to cost
/// statistics plus per-knot state bands. Sequential reference path.
pub fn monte_carlo_evaluate_seq(
    problem: &ControlProblem,
    policy: &AffinePolicy,
    cfg: &SolverConfig,
) -> Result<(RolloutStats, StateBands)> {
    let rollouts = collect_samples(problem, policy, cfg, false)?;
    reduce_samples(
        rollouts,
        policy.nominal.times.clone(),
        problem.risk_param,
        cfg.rng_seed,
    )
}

/// Parallel Monte-Carlo evaluation. Bit-identical to the sequential path:
/// samples are independent streams and the reduction runs in sample order.
#[cfg(feature = "parallel")]
pub fn monte_carlo_evaluate_par(
    problem: &ControlProblem,
    policy: &AffinePolicy,
    cfg: &SolverConfig,
) -> Result<(RolloutStats, StateBands)> {
    let rollouts = collect_samples(problem, policy, cfg, true)?;
    reduce_samples(
        rollouts,
        policy.nominal.times.clone(),
        problem.risk_param,
        cfg.rng_seed,
    )
}

/// Monte-Carlo evaluation; parallel when the `parallel` feature is enabled.
pub fn monte_carlo_evaluate(
    problem: &ControlProblem,
    policy: &AffinePolicy,
    cfg: &SolverConfig,
) -> Result<(RolloutStats, StateBands)> {
    #[cfg(feature = "parallel")]
    {
        monte_carlo_evaluate_par(problem, policy, cfg)
    }
    #[cfg(not(feature = "parallel"))]
    {
        monte_carlo_evaluate_seq(problem, policy, cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{make_cliff_world, make_scalar_lq};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::sync::Arc;

    fn zero_policy(problem: &ControlProblem, steps: usize) -> AffinePolicy {
        AffinePolicy::zeros(
            problem.state_dim,
            problem.control_dim,
            problem.horizon,
            steps,
        )
    }

    fn cfg(steps: usize) -> SolverConfig {
        SolverConfig {
            grid_steps: steps,
            ..SolverConfig::default()
        }
    }

    #[test]
    fn zero_drift_zero_policy_stays_put() {
        let mut p = make_scalar_lq(0.0, 1.0, 1.0, 1.0, 1.0, 0.0, 3.0).unwrap();
        p.state_dim = 2;
        p.initial_state = DVector::from_vec(vec![1.0, 2.0]);
        p.drift = Arc::new(|_t, _x: &DVector<f64>| DVector::zeros(2));
        p.control_matrix = Arc::new(|_t, _x| DMatrix::zeros(2, 1));
        p.noise_matrix = Arc::new(|_t, _x| DMatrix::zeros(2, 1));
        let traj = rollout_deterministic(&p, &zero_policy(&p, 10), &cfg(10)).unwrap();
        for x in &traj.states {
            assert_eq!(x, &DVector::from_vec(vec![1.0, 2.0]));
        }
    }

    #[test]
    fn constant_control_integrates_exactly() {
        // ẋ = u with u ≡ 1 over t_f = 3 ⇒ x(t_f) = x_0 + 3, exact under RK4
        let mut p = make_scalar_lq(0.0, 1.0, 1.0, 1.0, 1.0, 0.0, 3.0).unwrap();
        p.initial_state = DVector::from_element(1, 0.5);
        let mut policy = zero_policy(&p, 30);
        for u in &mut policy.nominal.controls {
            u[0] = 1.0;
        }
        let traj = rollout_deterministic(&p, &policy, &cfg(30)).unwrap();
        assert_relative_eq!(traj.states[30][0], 3.5, epsilon = 1e-10);
        assert_eq!(traj.controls[7][0], 1.0);
    }

    #[test]
    fn zero_noise_matches_deterministic_for_trivial_drift() {
        let mut p = make_scalar_lq(0.0, 1.0, 1.0, 1.0, 1.0, 0.0, 2.0).unwrap();
        p.noise_covariance = DMatrix::zeros(1, 1);
        let policy = zero_policy(&p, 20);
        let det = rollout_deterministic(&p, &policy, &cfg(20)).unwrap();
        let (sto, _) = rollout_stochastic(&p, &policy, &cfg(20), 0).unwrap();
        assert_eq!(det.states, sto.states);
    }

    #[test]
    fn same_seed_and_index_reproduce_bitwise() {
        let p = make_cliff_world();
        let policy = zero_policy(&p, 50);
        let (a, ca) = rollout_stochastic(&p, &policy, &cfg(50), 17).unwrap();
        let (b, cb) = rollout_stochastic(&p, &policy, &cfg(50), 17).unwrap();
        assert_eq!(ca.to_bits(), cb.to_bits());
        assert_eq!(a.states, b.states);
        // ... and a different index gives a different path
        let (c, _) = rollout_stochastic(&p, &policy, &cfg(50), 18).unwrap();
        assert_ne!(a.states, c.states);
    }

    #[test]
    fn brownian_variance_grows_linearly() {
        // zero dynamics, C = I, Σ = s²: var x(t) = s²·t
        let s2 = 0.25;
        let mut p = make_scalar_lq(0.0, 1.0, 1.0, 0.0, 1.0, 0.0, 2.0).unwrap();
        p.initial_state = DVector::zeros(1);
        p.noise_covariance = DMatrix::from_element(1, 1, s2);
        let policy = zero_policy(&p, 40);
        let c = cfg(40);
        let n = 3000;
        let finals: Vec<f64> = (0..n)
            .map(|i| rollout_stochastic(&p, &policy, &c, i).unwrap().0.states[40][0])
            .collect();
        let mean = finals.iter().sum::<f64>() / n as f64;
        let var = finals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        let expected = s2 * 2.0;
        let stderr = expected * (2.0 / (n as f64 - 1.0)).sqrt();
        assert!(
            (var - expected).abs() <= 3.0 * stderr,
            "sample variance {var} vs expected {expected} ± {stderr}"
        );
    }

    #[test]
    fn cost_of_terminal_only_problem() {
        let mut p = make_scalar_lq(0.0, 1.0, 1.0, 0.0, 1.0, 0.0, 1.0).unwrap();
        p.terminal_cost = Arc::new(|x: &DVector<f64>| x[0] * x[0]);
        let traj = Trajectory {
            times: Trajectory::uniform_grid(1.0, 4),
            states: vec![DVector::from_element(1, 3.0); 5],
            controls: vec![DVector::zeros(1); 4],
        };
        assert_eq!(evaluate_cost(&p, &traj).unwrap(), 9.0);
    }

    #[test]
    fn constant_running_cost_is_exact_under_rectangle_rule() {
        let mut p = make_scalar_lq(0.0, 1.0, 1.0, 0.0, 1.0, 0.0, 3.0).unwrap();
        p.running_state_cost = Arc::new(|_t, _x| 2.5);
        let traj = Trajectory {
            times: Trajectory::uniform_grid(3.0, 60),
            states: vec![DVector::zeros(1); 61],
            controls: vec![DVector::zeros(1); 60],
        };
        assert_relative_eq!(evaluate_cost(&p, &traj).unwrap(), 7.5, max_relative = 1e-12);
    }

    #[test]
    fn cliff_resting_cost_matches_closed_form() {
        // resting at the start with zero control: 3 s × 0.1 running + 10000 terminal
        let p = make_cliff_world();
        let steps = 300;
        let traj = Trajectory {
            times: Trajectory::uniform_grid(3.0, steps),
            states: vec![DVector::zeros(4); steps + 1],
            controls: vec![DVector::zeros(2); steps],
        };
        assert_relative_eq!(
            evaluate_cost(&p, &traj).unwrap(),
            10000.3,
            max_relative = 1e-12
        );
    }

    #[test]
    fn risk_objective_degenerate_and_zero_sigma() {
        let samples = vec![4.2; 100];
        for sigma in [-3.0, 0.0, 0.7, 45.0] {
            assert_relative_eq!(
                estimate_risk_objective(&samples, sigma).unwrap(),
                4.2,
                max_relative = 1e-12
            );
        }
        let samples = vec![1.0, 2.0, 6.0];
        assert_eq!(estimate_risk_objective(&samples, 0.0).unwrap(), 3.0);
        assert!(matches!(
            estimate_risk_objective(&[], 1.0),
            Err(Error::EmptySamples)
        ));
    }

    #[test]
    fn risk_objective_survives_huge_exponents() {
        // σ·𝒥 up to 4.5e10 would overflow without the shift
        let samples = vec![1e6, 1e9, 2.0];
        let v = estimate_risk_objective(&samples, 45.0).unwrap();
        assert!(v.is_finite());
        assert!(v <= 1e9 && v > 9.9e8, "dominated by the worst sample, got {v}");
    }

    #[test]
    fn risk_objective_matches_gaussian_closed_form() {
        // E exp(σJ) = exp(σμ + σ²v/2) ⇒ estimate → μ + σv/2
        let (mu, v): (f64, f64) = (5.0, 4.0);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 100_000;
        let samples: Vec<f64> = (0..n)
            .map(|_| mu + v.sqrt() * rng.sample::<f64, _>(StandardNormal))
            .collect();
        for sigma in [0.01, 0.05, 0.1] {
            let est = estimate_risk_objective(&samples, sigma).unwrap();
            let expected = mu + sigma * v / 2.0;
            let stderr = ((sigma * sigma * v).exp_m1()).sqrt() / (sigma * (n as f64).sqrt());
            assert!(
                (est - expected).abs() <= 3.0 * stderr,
                "σ={sigma}: {est} vs {expected} ± {stderr}"
            );
        }
    }

    proptest! {
        // log-sum-exp monotonicity: strictly increasing in σ when the
        // samples actually spread.
        #[test]
        fn risk_objective_increasing_in_sigma(
            base in proptest::collection::vec(-5.0f64..5.0, 3..40),
            s1 in -2.0f64..2.0,
            ds in 0.05f64..1.0,
        ) {
            let spread = base.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                - base.iter().cloned().fold(f64::INFINITY, f64::min);
            prop_assume!(spread > 0.1);
            let lo = estimate_risk_objective(&base, s1).unwrap();
            let hi = estimate_risk_objective(&base, s1 + ds).unwrap();
            prop_assert!(hi > lo, "{hi} !> {lo}");
        }
    }

    #[test]
    fn cumulant_report_symmetric_samples() {
        let stats = RolloutStats::from_samples(vec![-1.0, 1.0], 0.8, 0).unwrap();
        let rep = cumulant_report(&stats);
        assert_eq!(stats.skewness, 0.0);
        assert_eq!(rep.mean, 0.0);
        assert_relative_eq!(rep.with_variance, 0.4, max_relative = 1e-12); // (σ/2)·1
        assert_eq!(rep.with_variance, rep.with_skewness);
    }

    #[test]
    fn cumulant_report_zero_sigma_collapses_to_mean() {
        let stats = RolloutStats::from_samples(vec![1.0, 2.0, 3.0], 0.0, 0).unwrap();
        let rep = cumulant_report(&stats);
        assert_eq!(rep.mean, 2.0);
        assert_eq!(rep.with_variance, 2.0);
        assert_eq!(rep.with_skewness, 2.0);
        assert_eq!(rep.risk_objective, 2.0);
    }

    #[test]
    fn rectangle_rule_error_is_first_order() {
        // evaluate_cost on a smooth trajectory converges to the integral at
        // O(dt): halving dt halves the quadrature error.
        let mut p = make_scalar_lq(0.0, 1.0, 1.0, 0.0, 1.0, 0.0, 2.0).unwrap();
        p.running_state_cost = Arc::new(|_t, x: &DVector<f64>| x[0] * x[0]);
        p.terminal_cost = Arc::new(|_x| 0.0);
        let exact = 1.0 - (4.0f64).sin() / 4.0; // ∫₀² sin²(t) dt
        let err_at = |steps: usize| {
            let times = Trajectory::uniform_grid(2.0, steps);
            let traj = Trajectory {
                states: times.iter().map(|&t| DVector::from_element(1, t.sin())).collect(),
                controls: vec![DVector::zeros(1); steps],
                times,
            };
            (evaluate_cost(&p, &traj).unwrap() - exact).abs()
        };
        let ratio = err_at(100) / err_at(200);
        assert!(
            (1.8..2.2).contains(&ratio),
            "expected first-order error halving, got ratio {ratio}"
        );
    }

    #[test]
    fn cumulant_truncation_gap_shrinks_quadratically() {
        // For a fixed sample set the gap between the log-sum-exp estimate
        // and the two-term truncation is (σ²/6)·μ̂₃ + O(σ³), so each
        // σ-halving shrinks it ≈4×.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let samples: Vec<f64> = (0..20_000)
            .map(|_| {
                let z: f64 = rng.sample(StandardNormal);
                2.0 + z + 0.3 * z * z // skewed so μ̂₃ is solidly nonzero
            })
            .collect();
        let gap_at = |sigma: f64| {
            let stats = RolloutStats::from_samples(samples.clone(), sigma, 0).unwrap();
            let rep = cumulant_report(&stats);
            (rep.risk_objective - rep.with_variance).abs()
        };
        let r1 = gap_at(0.2) / gap_at(0.1);
        let r2 = gap_at(0.1) / gap_at(0.05);
        assert!(
            (3.0..5.5).contains(&r1) && (3.0..5.5).contains(&r2),
            "expected ≈4× shrink per σ-halving, got {r1} and {r2}"
        );
    }

    #[test]
    fn cumulant_expansion_converges_for_gaussian_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let samples: Vec<f64> = (0..50_000)
            .map(|_| 1.0 + 2.0 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let mut last_gap = f64::INFINITY;
        for sigma in [0.2, 0.1, 0.05] {
            let stats = RolloutStats::from_samples(samples.clone(), sigma, 3).unwrap();
            let rep = cumulant_report(&stats);
            let gap = (rep.risk_objective - rep.with_variance).abs();
            assert!(gap < last_gap.max(1e-4), "gap should shrink with σ");
            last_gap = gap;
        }
    }

    #[test]
    fn monte_carlo_seq_matches_default_path_bitwise() {
        let p = make_cliff_world();
        let policy = zero_policy(&p, 30);
        let mut c = cfg(30);
        c.mc_samples = 64;
        let (stats_a, bands_a) = monte_carlo_evaluate(&p, &policy, &c).unwrap();
        let (stats_b, bands_b) = monte_carlo_evaluate_seq(&p, &policy, &c).unwrap();
        assert_eq!(stats_a.samples, stats_b.samples);
        assert_eq!(stats_a.mean.to_bits(), stats_b.mean.to_bits());
        assert_eq!(stats_a.risk_objective.to_bits(), stats_b.risk_objective.to_bits());
        assert_eq!(bands_a.mean, bands_b.mean);
        assert_eq!(bands_a.sd, bands_b.sd);
    }
}
