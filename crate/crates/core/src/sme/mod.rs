//! Discrete-time integration of the continuous-measurement master equation
//!
//! ```text
//! dρ = -γ[X,[X,ρ]] dt + √(2γ)(Xρ + ρX - 2⟨X⟩ρ) dW
//! dy = ⟨X⟩ dt + dW/√(8γ)
//! ```
//!
//! X is diagonal in the computational basis, so every operator product in
//! the update reduces to an element-wise scaling of ρ.

pub mod noise;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantum::linalg::{self, CMatrix};
use crate::quantum::{eig_hermitian, impurity, DensityMatrix, Observable};
pub use noise::NoiseStream;

/// Largest γ·dt accepted by [`SmeConfig::validate`].
pub const MAX_GAMMA_DT: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Euler-Maruyama plus the scalar-noise Milstein correction
    /// ½ b'(ρ)[b(ρ)] (dW² - dt). Strong order 1.
    #[default]
    Milstein,
    /// Plain Euler-Maruyama. Strong order 1/2 for this equation.
    EulerMaruyama,
}

impl std::str::FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "milstein" => Ok(Self::Milstein),
            "euler-maruyama" => Ok(Self::EulerMaruyama),
            other => Err(Error::InvalidArgument(format!(
                "unknown scheme '{other}' (expected milstein|euler-maruyama)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmeConfig {
    pub gamma: f64,
    pub dt: f64,
    pub t_final: f64,
    pub master_seed: u64,
    pub trajectory_index: u64,
    pub positivity_tol: f64,
    pub scheme: Scheme,
    /// Store ρ every this many steps; `None` picks ceil(steps / 1000).
    pub store_every: Option<usize>,
}

impl SmeConfig {
    /// γ = 1 defaults with dt = 1e-4/γ.
    pub fn new(gamma: f64, t_final: f64, master_seed: u64) -> Self {
        Self {
            gamma,
            dt: 1e-4 / gamma,
            t_final,
            master_seed,
            trajectory_index: 0,
            positivity_tol: 1e-8,
            scheme: Scheme::default(),
            store_every: None,
        }
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    pub fn with_trajectory(mut self, index: u64) -> Self {
        self.trajectory_index = index;
        self
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_store_every(mut self, every: usize) -> Self {
        self.store_every = Some(every);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.gamma, self.dt, self.t_final, self.positivity_tol]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidArgument("non-finite SME parameter".into()));
        }
        if self.gamma <= 0.0 {
            return Err(Error::InvalidArgument(format!("gamma must be positive, got {}", self.gamma)));
        }
        if self.dt <= 0.0 {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {}", self.dt)));
        }
        if self.t_final < self.dt * (1.0 - 1e-12) {
            return Err(Error::InvalidArgument(format!(
                "t_final {} shorter than one step {}",
                self.t_final, self.dt
            )));
        }
        if self.gamma * self.dt > MAX_GAMMA_DT * (1.0 + 1e-12) {
            return Err(Error::InvalidArgument(format!(
                "gamma*dt = {:.3e} exceeds stability limit {MAX_GAMMA_DT}",
                self.gamma * self.dt
            )));
        }
        if self.positivity_tol <= 0.0 {
            return Err(Error::InvalidArgument("positivity_tol must be positive".into()));
        }
        if self.store_every == Some(0) {
            return Err(Error::InvalidArgument("store_every must be at least 1".into()));
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        ((self.t_final / self.dt) - 1e-9).ceil().max(1.0) as usize
    }

    pub fn storage_stride(&self) -> usize {
        self.store_every
            .unwrap_or_else(|| self.n_steps().div_ceil(1000))
            .max(1)
    }

    pub fn integrator(&self) -> Integrator {
        Integrator {
            gamma: self.gamma,
            dt: self.dt,
            scheme: self.scheme,
            positivity_tol: self.positivity_tol,
        }
    }

    pub fn noise(&self) -> NoiseStream {
        NoiseStream::new(self.master_seed, self.trajectory_index, self.dt)
    }
}

/// Wiener increment for `step`, Normal(0, dt), keyed by
/// `(master_seed, trajectory_index, step)`.
pub fn draw_noise(cfg: &SmeConfig, step: u64) -> f64 {
    noise::standard_normal_at(cfg.master_seed, cfg.trajectory_index, step) * cfg.dt.sqrt()
}

/// Single-step integrator for the measurement master equation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integrator {
    pub gamma: f64,
    pub dt: f64,
    pub scheme: Scheme,
    pub positivity_tol: f64,
}

/// Result of one integration step.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub rho: DensityMatrix,
    /// Measurement record increment dy.
    pub dy: f64,
    /// ⟨X⟩ before the step.
    pub mean: f64,
    /// Whether negative eigenvalues had to be clamped.
    pub repaired: bool,
}

impl Integrator {
    pub fn new(gamma: f64, dt: f64) -> Self {
        Self {
            gamma,
            dt,
            scheme: Scheme::default(),
            positivity_tol: 1e-8,
        }
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    /// Advance ρ by one step with Wiener increment `dw`.
    pub fn step(&self, rho: &DensityMatrix, x: &Observable, dw: f64) -> Result<StepOutcome> {
        let n = rho.dim();
        if x.dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: x.dim(),
            });
        }
        let spec = x.spectrum();
        let r = rho.matrix();
        let gamma = self.gamma;
        let dt = self.dt;
        let c = (2.0 * gamma).sqrt();

        let mean: f64 = (0..n).map(|i| spec[i] * r[(i, i)].re).sum();

        // b(ρ)_ij = c (x_i + x_j - 2⟨X⟩) ρ_ij
        let mut b = CMatrix::zeros(n, n);
        for j in 0..n {
            for i in 0..n {
                b[(i, j)] = r[(i, j)] * (c * (spec[i] + spec[j] - 2.0 * mean));
            }
        }

        let mut next = r.clone();
        let milstein_weight = match self.scheme {
            Scheme::Milstein => 0.5 * (dw * dw - dt),
            Scheme::EulerMaruyama => 0.0,
        };
        // Tr[X b], needed by the derivative of ⟨X⟩ in the Milstein term.
        let tr_xb: f64 = (0..n).map(|i| spec[i] * b[(i, i)].re).sum();
        for j in 0..n {
            for i in 0..n {
                let gap = spec[i] - spec[j];
                let mut d = r[(i, j)] * (-gamma * gap * gap * dt) + b[(i, j)] * dw;
                if milstein_weight != 0.0 {
                    let db = b[(i, j)] * (c * (spec[i] + spec[j] - 2.0 * mean))
                        - r[(i, j)] * (2.0 * c * tr_xb);
                    d += db * milstein_weight;
                }
                next[(i, j)] += d;
            }
        }

        let dy = mean * dt + dw / (8.0 * gamma).sqrt();
        let (rho_next, repaired) = finalize_state(next, self.positivity_tol)?;
        Ok(StepOutcome {
            rho: rho_next,
            dy,
            mean,
            repaired,
        })
    }
}

/// Hermitize, renormalize and repair small negative eigenvalues.
pub(crate) fn finalize_state(mut m: CMatrix, positivity_tol: f64) -> Result<(DensityMatrix, bool)> {
    linalg::hermitize(&mut m);
    normalize_trace(&mut m)?;
    if linalg::is_positive_definite(&m) {
        return Ok((DensityMatrix::from_matrix_unchecked(m), false));
    }
    let spec = eig_hermitian(&m)?;
    let min = spec.min_eigenvalue();
    if min >= 0.0 {
        return Ok((DensityMatrix::from_matrix_unchecked(m), false));
    }
    if min < -positivity_tol {
        return Err(Error::StepSize {
            step: 0,
            min_eigenvalue: min,
            tolerance: positivity_tol,
        });
    }
    let mut clamped = spec;
    for v in clamped.eigenvalues.iter_mut() {
        *v = v.max(0.0);
    }
    let mut rebuilt = clamped.reconstruct();
    linalg::hermitize(&mut rebuilt);
    normalize_trace(&mut rebuilt)?;
    Ok((DensityMatrix::from_matrix_unchecked(rebuilt), true))
}

fn normalize_trace(m: &mut CMatrix) -> Result<()> {
    let tr = m.trace().re;
    if !(tr.is_finite() && tr > 0.0) {
        return Err(Error::Consistency(format!("state trace collapsed to {tr}")));
    }
    *m /= num_complex::Complex64::new(tr, 0.0);
    Ok(())
}

/// One step of the measurement master equation with the default scheme.
/// Returns the updated state and the record increment dy.
pub fn sme_step(
    rho: &DensityMatrix,
    x: &Observable,
    gamma: f64,
    dt: f64,
    dw: f64,
) -> Result<(DensityMatrix, f64)> {
    let out = Integrator::new(gamma, dt).step(rho, x, dw)?;
    Ok((out.rho, out.dy))
}

/// Integrate along a prescribed sequence of Wiener increments, returning the
/// state after every step.
pub fn integrate_path(
    rho0: &DensityMatrix,
    x: &Observable,
    integrator: &Integrator,
    increments: &[f64],
) -> Result<Vec<DensityMatrix>> {
    let mut out = Vec::with_capacity(increments.len());
    let mut rho = rho0.clone();
    for (step, &dw) in increments.iter().enumerate() {
        rho = integrator.step(&rho, x, dw).map_err(|e| with_step(e, step))?.rho;
        out.push(rho.clone());
    }
    Ok(out)
}

pub(crate) fn with_step(e: Error, step: usize) -> Error {
    match e {
        Error::StepSize {
            min_eigenvalue,
            tolerance,
            ..
        } => Error::StepSize {
            step,
            min_eigenvalue,
            tolerance,
        },
        other => other,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredState {
    pub step: usize,
    pub time: f64,
    pub rho: DensityMatrix,
}

/// One stochastic realization.
///
/// `times` and `impurities` have one entry per step including t = 0.
/// `record_increments[k]` and `integrated_v[k]` belong to the step ending at
/// `times[k + 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    pub impurities: Vec<f64>,
    pub states: Vec<StoredState>,
    pub record_increments: Vec<f64>,
    pub integrated_v: Vec<f64>,
    pub noise_seed: u64,
    pub trajectory_index: u64,
    /// Steps whose state needed positivity repair.
    pub repaired_steps: usize,
}

impl TrajectoryRecord {
    pub(crate) fn start(rho0: &DensityMatrix, cfg: &SmeConfig) -> Self {
        let n = cfg.n_steps();
        let mut rec = Self {
            times: Vec::with_capacity(n + 1),
            impurities: Vec::with_capacity(n + 1),
            states: Vec::new(),
            record_increments: Vec::with_capacity(n),
            integrated_v: Vec::with_capacity(n),
            noise_seed: cfg.master_seed,
            trajectory_index: cfg.trajectory_index,
            repaired_steps: 0,
        };
        rec.times.push(0.0);
        rec.impurities.push(impurity(rho0));
        rec.states.push(StoredState {
            step: 0,
            time: 0.0,
            rho: rho0.clone(),
        });
        rec
    }

    /// Append step `step` (1-based) ending in `rho`.
    pub(crate) fn push(
        &mut self,
        step: usize,
        dt: f64,
        rho: &DensityMatrix,
        dy: f64,
        running_y: f64,
        store: bool,
    ) {
        let t = step as f64 * dt;
        self.times.push(t);
        self.impurities.push(impurity(rho));
        self.record_increments.push(dy);
        self.integrated_v.push(running_y / t);
        if store {
            self.states.push(StoredState {
                step,
                time: t,
                rho: rho.clone(),
            });
        }
    }

    pub fn final_state(&self) -> &DensityMatrix {
        &self.states.last().expect("record always holds the initial state").rho
    }

    /// v at the final time.
    pub fn final_v(&self) -> f64 {
        self.integrated_v.last().copied().unwrap_or(0.0)
    }

    /// v at step `step` (1-based).
    pub fn v_at_step(&self, step: usize) -> f64 {
        self.integrated_v[step - 1]
    }
}

/// Measurement without feedback.
pub fn simulate_unassisted(
    rho0: &DensityMatrix,
    x: &Observable,
    cfg: &SmeConfig,
) -> Result<TrajectoryRecord> {
    cfg.validate()?;
    if x.dim() != rho0.dim() {
        return Err(Error::DimensionMismatch {
            expected: x.dim(),
            found: rho0.dim(),
        });
    }
    let integrator = cfg.integrator();
    let mut noise = cfg.noise();
    let n_steps = cfg.n_steps();
    let stride = cfg.storage_stride();
    let mut record = TrajectoryRecord::start(rho0, cfg);
    let mut rho = rho0.clone();
    let mut y = 0.0;
    for step in 1..=n_steps {
        let dw = noise.next_increment();
        let out = integrator
            .step(&rho, x, dw)
            .map_err(|e| with_step(e, step))?;
        rho = out.rho;
        y += out.dy;
        record.repaired_steps += out.repaired as usize;
        let store = step % stride == 0 || step == n_steps;
        record.push(step, cfg.dt, &rho, out.dy, y, store);
    }
    Ok(record)
}
