//! Experiment orchestration: ensemble Monte Carlo, Figure-1 style bound
//! tables and the verification suite.

pub mod output;
pub mod verify;

use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytics;
use crate::error::{Error, Result};
use crate::feedback::{simulate_feedback_with, PermutationMode, EXHAUSTIVE_MAX_N};
use crate::quantum::{build_observable, DensityMatrix};
use crate::sme::{simulate_unassisted, Scheme, SmeConfig, TrajectoryRecord, MAX_GAMMA_DT};

pub use verify::{verify_suite, Check, VerifyOptions, VerifyReport};

pub const VERSION: &str = concat!("qpurify v", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    Unassisted,
    Feedback,
}

impl FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unassisted" => Ok(Self::Unassisted),
            "feedback" => Ok(Self::Feedback),
            other => Err(Error::InvalidArgument(format!(
                "unknown mode '{other}' (expected unassisted|feedback)"
            ))),
        }
    }
}

/// Everything needed to reproduce one ensemble run. Field names double as
/// the keys of the flat config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n: usize,
    pub gamma: f64,
    /// Defaults to 1e-4/γ.
    pub dt: Option<f64>,
    pub t_final: f64,
    pub n_trajectories: usize,
    pub master_seed: u64,
    pub mode: Mode,
    pub permutation_mode: PermutationMode,
    pub scheme: Scheme,
    pub output_path: String,
    /// Keep every `thinning`-th step in the ensemble curves.
    pub thinning: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n: 2,
            gamma: 1.0,
            dt: None,
            t_final: 5.0,
            n_trajectories: 100,
            master_seed: 1,
            mode: Mode::Unassisted,
            permutation_mode: PermutationMode::Exhaustive,
            scheme: Scheme::Milstein,
            output_path: "qpurify_run".into(),
            thinning: 100,
        }
    }
}

impl ExperimentConfig {
    pub fn dt(&self) -> f64 {
        self.dt.unwrap_or(1e-4 / self.gamma)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.n < 2 {
            return Err(Error::InvalidDimension(self.n));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return bad(format!("gamma must be positive, got {}", self.gamma));
        }
        let dt = self.dt();
        if !(dt > 0.0 && dt.is_finite()) {
            return bad(format!("dt must be positive, got {dt}"));
        }
        if !(self.t_final.is_finite() && self.t_final >= dt) {
            return bad(format!("t_final {} must be at least dt {dt}", self.t_final));
        }
        if self.gamma * dt > MAX_GAMMA_DT * (1.0 + 1e-12) {
            return bad(format!(
                "gamma*dt = {:.3e} exceeds stability limit {MAX_GAMMA_DT}",
                self.gamma * dt
            ));
        }
        if self.n_trajectories == 0 {
            return bad("n_trajectories must be at least 1".into());
        }
        if self.thinning == 0 {
            return bad("thinning must be at least 1".into());
        }
        if self.output_path.is_empty() {
            return bad("output_path is empty".into());
        }
        if self.mode == Mode::Feedback
            && self.permutation_mode == PermutationMode::Exhaustive
            && self.n > EXHAUSTIVE_MAX_N
        {
            return Err(Error::Capability {
                n: self.n,
                max: EXHAUSTIVE_MAX_N,
            });
        }
        Ok(())
    }

    /// Per-trajectory integrator settings. Only the initial and final states
    /// are stored; ensembles work from the per-step impurities.
    pub fn sme_config(&self, trajectory_index: u64) -> SmeConfig {
        let mut cfg = SmeConfig::new(self.gamma, self.t_final, self.master_seed)
            .with_dt(self.dt())
            .with_trajectory(trajectory_index)
            .with_scheme(self.scheme);
        let steps = cfg.n_steps();
        cfg = cfg.with_store_every(steps);
        cfg
    }

    pub fn n_steps(&self) -> usize {
        self.sme_config(0).n_steps()
    }

    /// Steps at which curves are reported: 0, thinning, 2·thinning, ... and
    /// always the last step.
    pub fn sample_steps(&self) -> Vec<usize> {
        let n = self.n_steps();
        let mut s: Vec<usize> = (0..=n).step_by(self.thinning).collect();
        if *s.last().expect("non-empty") != n {
            s.push(n);
        }
        s
    }
}

/// Run `f` for every index in `0..count` on the current rayon pool. Results
/// come back in index order whatever the schedule.
pub fn map_trajectories<T, F>(count: usize, f: F) -> Vec<Result<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    (0..count as u64).into_par_iter().map(f).collect()
}

/// Run `f` inside a dedicated pool of `threads` workers.
pub fn with_workers<R, F>(threads: usize, f: F) -> Result<R>
where
    R: Send,
    F: FnOnce() -> R + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Split successes from failures, enforcing the 1% failure budget.
pub fn collect_tolerant<T>(results: Vec<Result<T>>) -> Result<(Vec<(u64, T)>, Vec<TrajectoryFailure>)> {
    let total = results.len();
    let mut ok = Vec::with_capacity(total);
    let mut failures = Vec::new();
    let mut first = None;
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(v) => ok.push((i as u64, v)),
            Err(e) => {
                failures.push(TrajectoryFailure {
                    index: i as u64,
                    message: e.to_string(),
                });
                first.get_or_insert(e);
            }
        }
    }
    // More than 1% failed, or nothing to average.
    if failures.len() * 100 > total || ok.is_empty() {
        return Err(Error::TooManyFailures {
            failed: failures.len(),
            total,
            first: Box::new(first.expect("at least one failure")),
        });
    }
    Ok((ok, failures))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryFailure {
    pub index: u64,
    pub message: String,
}

/// Per-step feedback checks accumulated over an ensemble.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FeedbackStats {
    pub steps_checked: u64,
    /// Steps whose chosen rate exceeded -8γkL + 1e-9γ.
    pub rate_violations: u64,
    /// max over steps of (achieved - guaranteed)/γ; negative means margin.
    pub max_rate_excess: f64,
    /// max over trajectories and steps of L(t) / (e^{-8γkt}·L(0)).
    pub max_bound_ratio: f64,
    /// Trajectories with some L(t) > e^{-8γkt}L(0)·(1 + 20γdt).
    pub trajectories_over_bound: u64,
}

impl FeedbackStats {
    fn merge(&mut self, other: &FeedbackStats) {
        self.steps_checked += other.steps_checked;
        self.rate_violations += other.rate_violations;
        self.max_rate_excess = self.max_rate_excess.max(other.max_rate_excess);
        self.max_bound_ratio = self.max_bound_ratio.max(other.max_bound_ratio);
        self.trajectories_over_bound += other.trajectories_over_bound;
    }
}

struct TrajectoryOutcome {
    sampled: Vec<f64>,
    final_v: f64,
    repaired_steps: usize,
    feedback: Option<FeedbackStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub version: String,
    pub config: ExperimentConfig,
    pub times: Vec<f64>,
    pub mean_impurity: Vec<f64>,
    pub stderr_impurity: Vec<f64>,
    /// e^{-8γkt}(1 - 1/N).
    pub feedback_bound: Vec<f64>,
    /// Two-level lower bound on the unassisted mean.
    pub l2_bound: Vec<f64>,
    /// Exact unassisted mean impurity (unassisted mode only).
    pub analytic_mean: Option<Vec<f64>>,
    /// v(t_final) per trajectory index; `None` where the trajectory failed.
    pub final_v: Vec<Option<f64>>,
    pub completed: usize,
    pub failures: Vec<TrajectoryFailure>,
    pub repaired_steps: usize,
    pub feedback: Option<FeedbackStats>,
}

impl EnsembleSummary {
    /// The curve written to the bound_L column: the feedback guarantee in
    /// feedback mode, the two-level lower bound otherwise.
    pub fn bound_curve(&self) -> &[f64] {
        match self.config.mode {
            Mode::Feedback => &self.feedback_bound,
            Mode::Unassisted => &self.l2_bound,
        }
    }
}

fn run_one(cfg: &ExperimentConfig, index: u64, steps: &[usize]) -> Result<TrajectoryOutcome> {
    let x = build_observable(cfg.n)?;
    let rho0 = DensityMatrix::maximally_mixed(cfg.n)?;
    let sme = cfg.sme_config(index);
    let sample = |rec: &TrajectoryRecord| steps.iter().map(|&s| rec.impurities[s]).collect::<Vec<_>>();
    match cfg.mode {
        Mode::Unassisted => {
            let rec = simulate_unassisted(&rho0, &x, &sme)?;
            Ok(TrajectoryOutcome {
                sampled: sample(&rec),
                final_v: rec.final_v(),
                repaired_steps: rec.repaired_steps,
                feedback: None,
            })
        }
        Mode::Feedback => {
            let gamma = cfg.gamma;
            let mut stats = FeedbackStats {
                max_rate_excess: f64::NEG_INFINITY,
                ..Default::default()
            };
            let rec = simulate_feedback_with(&rho0, &x, &sme, cfg.permutation_mode, |_, r| {
                stats.steps_checked += 1;
                stats.rate_violations += (!r.meets_guarantee(gamma)) as u64;
                stats.max_rate_excess = stats
                    .max_rate_excess
                    .max((r.achieved_rate - r.guaranteed_rate) / gamma);
            })?;
            let l0 = rec.impurities[0];
            let rate = 8.0 * gamma * analytics::k_constant(cfg.n);
            let slack = 1.0 + 20.0 * gamma * sme.dt;
            let mut over = false;
            let mut worst: f64 = 0.0;
            for (l, t) in rec.impurities.iter().zip(&rec.times) {
                let bound = (-rate * t).exp() * l0;
                worst = worst.max(l / bound);
                over |= *l > bound * slack;
            }
            stats.max_bound_ratio = worst;
            stats.trajectories_over_bound = over as u64;
            Ok(TrajectoryOutcome {
                sampled: sample(&rec),
                final_v: rec.final_v(),
                repaired_steps: rec.repaired_steps,
                feedback: Some(stats),
            })
        }
    }
}

/// Simulate `cfg.n_trajectories` trajectories from I/N on the current rayon
/// pool and merge them in index order.
pub fn run_ensemble(cfg: &ExperimentConfig) -> Result<EnsembleSummary> {
    cfg.validate()?;
    let steps = cfg.sample_steps();
    let dt = cfg.dt();
    let results = map_trajectories(cfg.n_trajectories, |i| run_one(cfg, i, &steps));
    let (ok, failures) = collect_tolerant(results)?;

    let m = ok.len() as f64;
    let mut mean = vec![0.0; steps.len()];
    for (_, o) in &ok {
        for (acc, l) in mean.iter_mut().zip(&o.sampled) {
            *acc += l;
        }
    }
    mean.iter_mut().for_each(|v| *v /= m);
    let mut var = vec![0.0; steps.len()];
    for (_, o) in &ok {
        for ((acc, l), mu) in var.iter_mut().zip(&o.sampled).zip(&mean) {
            *acc += (l - mu).powi(2);
        }
    }
    let stderr: Vec<f64> = var
        .iter()
        .map(|v| if ok.len() > 1 { (v / (m - 1.0)).sqrt() / m.sqrt() } else { 0.0 })
        .collect();

    let times: Vec<f64> = steps.iter().map(|&s| s as f64 * dt).collect();
    let l_max = 1.0 - 1.0 / cfg.n as f64;
    let feedback_bound = times
        .iter()
        .map(|&t| analytics::feedback_impurity_bound(t, cfg.n, cfg.gamma, l_max))
        .collect::<Result<Vec<_>>>()?;
    let l2_bound = times
        .iter()
        .map(|&t| if t > 0.0 { analytics::two_level_bound_l2(t, cfg.n, cfg.gamma) } else { Ok(0.5) })
        .collect::<Result<Vec<_>>>()?;
    let analytic_mean = match cfg.mode {
        Mode::Unassisted => Some(
            times
                .iter()
                .map(|&t| {
                    if t > 0.0 {
                        analytics::mean_impurity_unassisted(t, cfg.n, cfg.gamma)
                    } else {
                        Ok(l_max)
                    }
                })
                .collect::<Result<Vec<_>>>()?,
        ),
        Mode::Feedback => None,
    };

    let mut final_v = vec![None; cfg.n_trajectories];
    let mut repaired = 0;
    let mut feedback: Option<FeedbackStats> = None;
    for (i, o) in &ok {
        final_v[*i as usize] = Some(o.final_v);
        repaired += o.repaired_steps;
        if let Some(s) = &o.feedback {
            match feedback.as_mut() {
                Some(acc) => acc.merge(s),
                None => feedback = Some(s.clone()),
            }
        }
    }

    let mut config = cfg.clone();
    config.dt = Some(dt);
    Ok(EnsembleSummary {
        version: VERSION.to_string(),
        config,
        times,
        mean_impurity: mean,
        stderr_impurity: stderr,
        feedback_bound,
        l2_bound,
        analytic_mean,
        final_v,
        completed: ok.len(),
        failures,
        repaired_steps: repaired,
        feedback,
    })
}

/// One Figure-1 row per (N, target): the certified speed-up lower bound.
pub fn figure1_data(n_list: &[usize], targets: &[f64], gamma: f64) -> Result<Vec<analytics::BoundsReport>> {
    if n_list.is_empty() || targets.is_empty() {
        return Err(Error::InvalidArgument("need at least one N and one target".into()));
    }
    let mut rows = Vec::with_capacity(n_list.len() * targets.len());
    for &n in n_list {
        for &l in targets {
            rows.push(analytics::speedup_lower_bound(l, n, gamma)?);
        }
    }
    Ok(rows)
}

/// Log-spaced targets from `hi` down to `lo`.
pub fn log_targets(hi: f64, lo: f64, count: usize) -> Vec<f64> {
    if count < 2 {
        return vec![hi];
    }
    let (a, b) = (hi.log10(), lo.log10());
    (0..count)
        .map(|i| 10f64.powf(a + (b - a) * i as f64 / (count - 1) as f64))
        .collect()
}
