//! On-disk formats: the run manifest, trajectory/gain/cost CSVs and the
//! Monte-Carlo statistics outputs.
//!
//! Floats are written with Rust's shortest round-trip formatting and parsed
//! back with `str::parse`, so a policy rebuilt from the CSVs is bit-equal
//! to the one that was written, and identical runs produce byte-identical
//! files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use ileg::approx::Trajectory;
use ileg::riccati::AffinePolicy;
use ileg::rollout::{CumulantReport, RolloutStats, StateBands};
use ileg::solver::Termination;
use ileg::{ProblemConfig, SolverConfig};

/// Everything a `solve` run leaves behind, echoed so that `evaluate` can
/// rebuild the exact problem and grid later.
#[derive(Serialize, Deserialize, Debug, Clone)]
pub struct Manifest {
    pub version: String,
    pub problem: ProblemConfig,
    pub solver: SolverConfig,
    pub results: Vec<ManifestEntry>,
}

#[derive(Serialize, Deserialize, Debug, Clone)]
pub struct ManifestEntry {
    pub sigma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub termination: Option<Termination>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_cost: Option<f64>,
    /// Accepted feedforward scale of the final policy; the gains CSV stores
    /// the already-scaled feedforward, so readers reconstruct with scale 1.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gains: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub costs: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Statistics JSON written by `evaluate`.
#[derive(Serialize, Debug)]
pub struct StatsRecord {
    pub sigma: f64,
    pub seed: u64,
    pub n_samples: usize,
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
    pub risk_objective: f64,
    pub cumulants: CumulantReport,
}

pub fn sigma_tag(sigma: f64) -> String {
    format!("{sigma}")
}

pub fn trajectory_name(sigma: f64) -> String {
    format!("trajectory_sigma{}.csv", sigma_tag(sigma))
}

pub fn gains_name(sigma: f64) -> String {
    format!("gains_sigma{}.csv", sigma_tag(sigma))
}

pub fn costs_name(sigma: f64) -> String {
    format!("costs_sigma{}.csv", sigma_tag(sigma))
}

pub fn stats_name(sigma: f64) -> String {
    format!("stats_sigma{}.json", sigma_tag(sigma))
}

pub fn bands_name(sigma: f64) -> String {
    format!("bands_sigma{}.csv", sigma_tag(sigma))
}

pub fn samples_name(sigma: f64) -> String {
    format!("samples_sigma{}.csv", sigma_tag(sigma))
}

pub fn write_text(path: &Path, text: &str) -> std::io::Result<()> {
    std::fs::write(path, text)
}

pub fn read_manifest(run_dir: &Path) -> Result<Manifest, String> {
    let path = run_dir.join("manifest.json");
    let text = std::fs::read_to_string(&path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("cannot parse {}: {e}", path.display()))
}

pub fn manifest_json(manifest: &Manifest) -> String {
    let mut s = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    s.push('\n');
    s
}

/// Columns: t, one per state coordinate, one per control coordinate. The
/// control column holds the piecewise-constant control active on the
/// interval starting at t; the final row repeats the last control so the
/// file plots cleanly as a step function.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let n = traj.intervals();
    let state_dim = traj.states[0].len();
    let control_dim = traj.controls[0].len();
    let mut out = String::from("t");
    for i in 0..state_dim {
        let _ = write!(out, ",state_{i}");
    }
    for i in 0..control_dim {
        let _ = write!(out, ",control_{i}");
    }
    out.push('\n');
    for k in 0..=n {
        let _ = write!(out, "{}", traj.times[k]);
        for i in 0..state_dim {
            let _ = write!(out, ",{}", traj.states[k][i]);
        }
        let u = &traj.controls[k.min(n - 1)];
        for i in 0..control_dim {
            let _ = write!(out, ",{}", u[i]);
        }
        out.push('\n');
    }
    out
}

/// Columns: t, feedforward entries, then the feedback matrix row-major.
/// The feedforward column is pre-scaled by the accepted line-search alpha.
pub fn gains_csv(policy: &AffinePolicy) -> String {
    let n = policy.intervals();
    let control_dim = policy.feedforward[0].len();
    let state_dim = policy.feedback[0].ncols();
    let mut out = String::from("t");
    for i in 0..control_dim {
        let _ = write!(out, ",ff_{i}");
    }
    for r in 0..control_dim {
        for c in 0..state_dim {
            let _ = write!(out, ",fb_{r}_{c}");
        }
    }
    out.push('\n');
    for k in 0..n {
        let _ = write!(out, "{}", policy.nominal.times[k]);
        for i in 0..control_dim {
            let _ = write!(out, ",{}", policy.alpha * policy.feedforward[k][i]);
        }
        for r in 0..control_dim {
            for c in 0..state_dim {
                let _ = write!(out, ",{}", policy.feedback[k][(r, c)]);
            }
        }
        out.push('\n');
    }
    out
}

pub fn costs_csv(history: &[f64]) -> String {
    let mut out = String::from("iteration,cost\n");
    for (i, c) in history.iter().enumerate() {
        let _ = writeln!(out, "{i},{c}");
    }
    out
}

pub fn samples_csv(stats: &RolloutStats) -> String {
    let mut out = String::from("sample,cost\n");
    for (i, c) in stats.samples.iter().enumerate() {
        let _ = writeln!(out, "{i},{c}");
    }
    out
}

/// Columns: t, per-state mean, per-state full 1-SD band, per-state 0.15·SD
/// band (both band conventions are emitted side by side).
pub fn bands_csv(bands: &StateBands) -> String {
    let dim = bands.mean[0].len();
    let mut out = String::from("t");
    for i in 0..dim {
        let _ = write!(out, ",mean_{i}");
    }
    for i in 0..dim {
        let _ = write!(out, ",sd_{i}");
    }
    for i in 0..dim {
        let _ = write!(out, ",sd15_{i}");
    }
    out.push('\n');
    for k in 0..bands.times.len() {
        let _ = write!(out, "{}", bands.times[k]);
        for i in 0..dim {
            let _ = write!(out, ",{}", bands.mean[k][i]);
        }
        for i in 0..dim {
            let _ = write!(out, ",{}", bands.sd[k][i]);
        }
        for i in 0..dim {
            let _ = write!(out, ",{}", 0.15 * bands.sd[k][i]);
        }
        out.push('\n');
    }
    out
}

fn parse_csv_rows(text: &str, path: &Path) -> Result<Vec<Vec<f64>>, String> {
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let row: Result<Vec<f64>, _> = line.split(',').map(str::parse::<f64>).collect();
        rows.push(row.map_err(|e| {
            format!("{} line {}: {e}", path.display(), lineno + 1)
        })?);
    }
    Ok(rows)
}

/// Rebuilds the affine policy a solve run stored. The trajectory CSV is the
/// policy's own rollout, so its control column already contains the
/// accepted feedforward; the closed-loop law about the stored nominal is
/// `u = u_nom + fb·(x − x_nom)` and the reconstructed feedforward is zero.
/// (The ff columns in the gains file record the update that produced the
/// nominal; plot data, not something to re-apply.)
pub fn read_policy(
    run_dir: &Path,
    entry: &ManifestEntry,
    state_dim: usize,
    control_dim: usize,
) -> Result<AffinePolicy, String> {
    let need = |field: &Option<String>, what: &str| -> Result<PathBuf, String> {
        field
            .as_ref()
            .map(|f| run_dir.join(f))
            .ok_or_else(|| format!("manifest entry for sigma {} has no {what}", entry.sigma))
    };
    let traj_path = need(&entry.trajectory, "trajectory file")?;
    let gains_path = need(&entry.gains, "gains file")?;
    let traj_text = std::fs::read_to_string(&traj_path)
        .map_err(|e| format!("cannot read {}: {e}", traj_path.display()))?;
    let gains_text = std::fs::read_to_string(&gains_path)
        .map_err(|e| format!("cannot read {}: {e}", gains_path.display()))?;

    let traj_rows = parse_csv_rows(&traj_text, &traj_path)?;
    let gain_rows = parse_csv_rows(&gains_text, &gains_path)?;
    if traj_rows.len() != gain_rows.len() + 1 {
        return Err(format!(
            "{}: expected {} knots for {} gain rows",
            traj_path.display(),
            gain_rows.len() + 1,
            gain_rows.len()
        ));
    }
    let expect_width = 1 + state_dim + control_dim;
    let mut times = Vec::new();
    let mut states = Vec::new();
    let mut controls = Vec::new();
    let n = gain_rows.len();
    for (k, row) in traj_rows.iter().enumerate() {
        if row.len() != expect_width {
            return Err(format!(
                "{}: row has {} columns, expected {expect_width}",
                traj_path.display(),
                row.len()
            ));
        }
        times.push(row[0]);
        states.push(DVector::from_column_slice(&row[1..1 + state_dim]));
        if k < n {
            controls.push(DVector::from_column_slice(&row[1 + state_dim..]));
        }
    }

    let gain_width = 1 + control_dim + control_dim * state_dim;
    let mut feedback = Vec::with_capacity(n);
    for row in &gain_rows {
        if row.len() != gain_width {
            return Err(format!(
                "{}: row has {} columns, expected {gain_width}",
                gains_path.display(),
                row.len()
            ));
        }
        feedback.push(DMatrix::from_row_slice(
            control_dim,
            state_dim,
            &row[1 + control_dim..],
        ));
    }

    Ok(AffinePolicy {
        nominal: Trajectory {
            times,
            states,
            controls,
        },
        feedforward: vec![DVector::zeros(control_dim); n],
        feedback,
        alpha: 1.0,
    })
}

pub fn stats_json(record: &StatsRecord) -> String {
    let mut s = serde_json::to_string_pretty(record).expect("stats serialize");
    s.push('\n');
    s
}
