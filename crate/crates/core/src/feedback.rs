//! Permutation feedback.
//!
//! After every measurement step the state is diagonalized and rotated back so
//! that its eigenvectors are the columns of a fixed basis unbiased with
//! respect to the measured observable (the Fourier basis). While doing so the
//! eigenvalues are assigned to frame positions by the permutation that makes
//! the impurity fall fastest. In that frame
//!
//! ```text
//! dL/dt = -8γ Σ_ij |X_ij|² λ_i λ_j
//! ```
//!
//! and averaging over all N! assignments gives exactly -8γkL with
//! k = Tr[X²]/(N(N-1)), so the best assignment decays at least that fast.

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantum::linalg::{self, CMatrix};
use crate::quantum::{
    impurity, unbiased_basis, BasisTransform, DensityMatrix, Observable, Spectrum,
};
use crate::sme::{with_step, SmeConfig, TrajectoryRecord};

/// Largest N for which all N! permutations are searched.
pub const EXHAUSTIVE_MAX_N: usize = 8;

/// Relative margin below which two candidate rates count as tied.
const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PermutationMode {
    #[default]
    Exhaustive,
    Greedy,
}

impl std::str::FromStr for PermutationMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exhaustive" => Ok(Self::Exhaustive),
            "greedy" => Ok(Self::Greedy),
            other => Err(Error::InvalidArgument(format!(
                "unknown permutation mode '{other}' (expected exhaustive|greedy)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackStepReport {
    /// Frame position i holds eigenvalue `chosen_permutation[i]` (descending order index).
    pub chosen_permutation: Vec<usize>,
    /// dL/dt after the correction.
    pub achieved_rate: f64,
    /// -8γkL for the same state.
    pub guaranteed_rate: f64,
    pub impurity: f64,
    pub applied_unitary: BasisTransform,
}

impl FeedbackStepReport {
    /// achieved ≤ guaranteed + 1e-9·γ.
    pub fn meets_guarantee(&self, gamma: f64) -> bool {
        self.achieved_rate <= self.guaranteed_rate + 1e-9 * gamma
    }
}

/// |X_ij|² for X expressed in the feedback frame.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingWeights {
    n: usize,
    w: Vec<f64>,
}

impl CouplingWeights {
    pub fn new(x_in_frame: &CMatrix) -> Self {
        let n = x_in_frame.nrows();
        let mut w = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                w[i * n + j] = x_in_frame[(i, j)].norm_sqr();
            }
        }
        Self { n, w }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.w[i * self.n + j]
    }

    /// Σ_ij w_ij μ_i μ_j with μ_i = λ_{σ(i)}.
    #[inline]
    pub fn score(&self, eigenvalues: &[f64], perm: &[usize]) -> f64 {
        let n = self.n;
        let mut total = 0.0;
        for i in 0..n {
            let li = eigenvalues[perm[i]];
            let row = &self.w[i * n..(i + 1) * n];
            let mut acc = 0.0;
            for j in 0..n {
                acc += row[j] * eigenvalues[perm[j]];
            }
            total += li * acc;
        }
        total
    }
}

/// -8γ Σ_ij |X_ij|² λ_i λ_j, with X given in the eigenbasis of ρ and λ its
/// eigenvalues in the same order.
pub fn decay_rate(x_in_frame: &CMatrix, eigenvalues: &[f64], gamma: f64) -> f64 {
    let w = CouplingWeights::new(x_in_frame);
    let identity: Vec<usize> = (0..eigenvalues.len()).collect();
    -8.0 * gamma * w.score(eigenvalues, &identity)
}

/// Precomputed permutation search over a fixed frame.
#[derive(Debug, Clone)]
pub struct PermutationSearch {
    weights: CouplingWeights,
    mode: PermutationMode,
    candidates: Vec<Vec<usize>>,
}

impl PermutationSearch {
    pub fn new(x_in_frame: &CMatrix, mode: PermutationMode) -> Result<Self> {
        let weights = CouplingWeights::new(x_in_frame);
        let n = weights.dim();
        let candidates = match mode {
            PermutationMode::Exhaustive => {
                if n > EXHAUSTIVE_MAX_N {
                    return Err(Error::Capability {
                        n,
                        max: EXHAUSTIVE_MAX_N,
                    });
                }
                // Lexicographic order, so the first maximum is the smallest σ.
                (0..n).permutations(n).collect()
            }
            PermutationMode::Greedy => Vec::new(),
        };
        Ok(Self {
            weights,
            mode,
            candidates,
        })
    }

    pub fn weights(&self) -> &CouplingWeights {
        &self.weights
    }

    /// Best permutation and its score Σ w_ij λ_σ(i) λ_σ(j).
    pub fn best(&self, eigenvalues: &[f64]) -> (Vec<usize>, f64) {
        match self.mode {
            PermutationMode::Exhaustive => self.exhaustive(eigenvalues),
            PermutationMode::Greedy => {
                let perm = greedy_assignment(&self.weights, eigenvalues);
                let s = self.weights.score(eigenvalues, &perm);
                (perm, s)
            }
        }
    }

    fn exhaustive(&self, eigenvalues: &[f64]) -> (Vec<usize>, f64) {
        let mut best_idx = 0;
        let mut best = self.weights.score(eigenvalues, &self.candidates[0]);
        for (idx, perm) in self.candidates.iter().enumerate().skip(1) {
            let s = self.weights.score(eigenvalues, perm);
            if s > best + TIE_TOL * best.abs() {
                best = s;
                best_idx = idx;
            }
        }
        (self.candidates[best_idx].clone(), best)
    }
}

/// Places the two largest eigenvalues on the most strongly coupled pair of
/// frame positions, then fills the remaining positions in order of their
/// coupling to what is already placed. No optimality guarantee.
fn greedy_assignment(w: &CouplingWeights, eigenvalues: &[f64]) -> Vec<usize> {
    let n = w.dim();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eigenvalues[b].total_cmp(&eigenvalues[a]));

    let mut perm = vec![usize::MAX; n];
    let (mut pi, mut pj, mut top) = (0, 1, f64::NEG_INFINITY);
    for i in 0..n {
        for j in (i + 1)..n {
            if w.get(i, j) > top {
                top = w.get(i, j);
                pi = i;
                pj = j;
            }
        }
    }
    perm[pi] = order[0];
    perm[pj] = order[1];
    for &next in &order[2..] {
        let mut pick = usize::MAX;
        let mut pull = f64::NEG_INFINITY;
        for p in 0..n {
            if perm[p] != usize::MAX {
                continue;
            }
            let s: f64 = (0..n)
                .filter(|&q| perm[q] != usize::MAX)
                .map(|q| w.get(p, q) * eigenvalues[perm[q]])
                .sum();
            if s > pull {
                pull = s;
                pick = p;
            }
        }
        perm[pick] = next;
    }
    perm
}

/// Permutation maximizing the impurity decay, and the resulting dL/dt.
///
/// Exhaustive mode is limited to N ≤ 8 and breaks ties by the
/// lexicographically smallest permutation.
pub fn select_permutation(
    x_in_frame: &CMatrix,
    eigenvalues: &[f64],
    gamma: f64,
    mode: PermutationMode,
) -> Result<(Vec<usize>, f64)> {
    if x_in_frame.nrows() != eigenvalues.len() {
        return Err(Error::DimensionMismatch {
            expected: x_in_frame.nrows(),
            found: eigenvalues.len(),
        });
    }
    let search = PermutationSearch::new(x_in_frame, mode)?;
    let (perm, score) = search.best(eigenvalues);
    Ok((perm, -8.0 * gamma * score))
}

fn check_permutation(perm: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    if perm.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: perm.len(),
        });
    }
    for &p in perm {
        if p >= n || seen[p] {
            return Err(Error::InvalidArgument(format!("{perm:?} is not a permutation")));
        }
        seen[p] = true;
    }
    Ok(())
}

/// Rotate a state with known spectrum into `target`, with eigenvalue
/// `spectrum.eigenvalues[perm[i]]` on frame column i.
fn restore_from_spectrum(
    spectrum: &Spectrum,
    target: &BasisTransform,
    perm: &[usize],
) -> (DensityMatrix, BasisTransform) {
    let n = target.dim();
    let f = target.matrix();
    // F diag(μ) F†
    let mut scaled = f.clone();
    for i in 0..n {
        let mu = spectrum.eigenvalues[perm[i]];
        for r in 0..n {
            scaled[(r, i)] *= mu;
        }
    }
    let mut rho = scaled * f.adjoint();
    linalg::hermitize(&mut rho);

    // U = F P V† where P_ik = [σ(i) = k]: row i of P V† is row σ(i) of V†.
    let v_adj = spectrum.eigenvectors.matrix().adjoint();
    let pv = CMatrix::from_fn(n, n, |i, c| v_adj[(perm[i], c)]);
    let u = f * pv;
    (
        DensityMatrix::from_matrix_unchecked(rho),
        BasisTransform::from_matrix_unchecked(u),
    )
}

/// Diagonalize `rho_next` and return F P_σ Λ P_σ† F† together with the unitary
/// U = F P_σ V† that maps `rho_next` onto it.
pub fn restore_basis(
    rho_next: &DensityMatrix,
    target: &BasisTransform,
    permutation: &[usize],
) -> Result<(DensityMatrix, BasisTransform)> {
    let n = rho_next.dim();
    if target.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: target.dim(),
        });
    }
    check_permutation(permutation, n)?;
    let spectrum = rho_next.spectrum()?;
    Ok(restore_from_spectrum(&spectrum, target, permutation))
}

/// Feedback loop state for one observable: the frame, X in that frame and
/// the permutation search.
#[derive(Debug, Clone)]
pub struct FeedbackController {
    frame: BasisTransform,
    x_in_frame: CMatrix,
    search: PermutationSearch,
    gamma: f64,
    k: f64,
}

impl FeedbackController {
    pub fn new(x: &Observable, gamma: f64, mode: PermutationMode) -> Result<Self> {
        let n = x.dim();
        let frame = unbiased_basis(n)?;
        let x_in_frame = x.in_basis(&frame)?;
        let search = PermutationSearch::new(&x_in_frame, mode)?;
        let k = x.trace_sq() / (n as f64 * (n as f64 - 1.0));
        Ok(Self {
            frame,
            x_in_frame,
            search,
            gamma,
            k,
        })
    }

    pub fn frame(&self) -> &BasisTransform {
        &self.frame
    }

    pub fn x_in_frame(&self) -> &CMatrix {
        &self.x_in_frame
    }

    /// Tr[X²]/(N(N-1)).
    pub fn k(&self) -> f64 {
        self.k
    }

    /// Apply the correction to a post-measurement state.
    pub fn correct(&self, rho_next: &DensityMatrix) -> Result<(DensityMatrix, FeedbackStepReport)> {
        let spectrum = rho_next.spectrum()?;
        let (perm, score) = self.search.best(&spectrum.eigenvalues);
        let (rho, u) = restore_from_spectrum(&spectrum, &self.frame, &perm);
        let l = impurity(&rho);
        let report = FeedbackStepReport {
            chosen_permutation: perm,
            achieved_rate: -8.0 * self.gamma * score,
            guaranteed_rate: -8.0 * self.gamma * self.k * l,
            impurity: l,
            applied_unitary: u,
        };
        Ok((rho, report))
    }
}

#[derive(Debug, Clone)]
pub struct FeedbackTrajectory {
    pub record: TrajectoryRecord,
    pub reports: Vec<FeedbackStepReport>,
}

/// Measurement with permutation feedback after every step. The initial state
/// is rotated into the feedback frame before the first step; `record.states[0]`
/// is that rotated state.
pub fn simulate_feedback(
    rho0: &DensityMatrix,
    x: &Observable,
    cfg: &SmeConfig,
    mode: PermutationMode,
) -> Result<FeedbackTrajectory> {
    let mut reports = Vec::with_capacity(cfg.n_steps());
    let record = simulate_feedback_with(rho0, x, cfg, mode, |_, r| reports.push(r))?;
    Ok(FeedbackTrajectory { record, reports })
}

/// Like [`simulate_feedback`] but hands each step's report (1-based step
/// index) to `observer` instead of keeping it.
pub fn simulate_feedback_with<F: FnMut(usize, FeedbackStepReport)>(
    rho0: &DensityMatrix,
    x: &Observable,
    cfg: &SmeConfig,
    mode: PermutationMode,
    mut observer: F,
) -> Result<TrajectoryRecord> {
    cfg.validate()?;
    if x.dim() != rho0.dim() {
        return Err(Error::DimensionMismatch {
            expected: x.dim(),
            found: rho0.dim(),
        });
    }
    let controller = FeedbackController::new(x, cfg.gamma, mode)?;
    let integrator = cfg.integrator();
    let mut noise = cfg.noise();
    let n_steps = cfg.n_steps();
    let stride = cfg.storage_stride();

    let (mut rho, _) = controller.correct(rho0)?;
    let mut record = TrajectoryRecord::start(&rho, cfg);
    let mut y = 0.0;
    for step in 1..=n_steps {
        let dw = noise.next_increment();
        let out = integrator
            .step(&rho, x, dw)
            .map_err(|e| with_step(e, step))?;
        record.repaired_steps += out.repaired as usize;
        let (corrected, report) = controller.correct(&out.rho)?;
        rho = corrected;
        y += out.dy;
        let store = step % stride == 0 || step == n_steps;
        record.push(step, cfg.dt, &rho, out.dy, y, store);
        observer(step, report);
    }
    Ok(record)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::{build_observable, is_unbiased};
    use num_complex::Complex64;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fourier_frame_x(n: usize) -> CMatrix {
        build_observable(n)
            .unwrap()
            .in_basis(&unbiased_basis(n).unwrap())
            .unwrap()
    }

    fn random_spectrum(n: usize, rng: &mut impl Rng) -> Vec<f64> {
        let mut v: Vec<f64> = (0..n).map(|_| -rng.gen_range(1e-12f64..1.0).ln()).collect();
        let s: f64 = v.iter().sum();
        v.iter_mut().for_each(|x| *x /= s);
        v.sort_by(|a, b| b.total_cmp(a));
        v
    }

    fn brute_rate(x_in_frame: &CMatrix, lambda: &[f64], gamma: f64) -> f64 {
        let n = lambda.len();
        let rho = CMatrix::from_fn(n, n, |i, j| {
            if i == j {
                Complex64::new(lambda[i], 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        let p = x_in_frame * &rho * x_in_frame * &rho;
        -8.0 * gamma * p.trace().re
    }

    fn k_of(n: usize) -> f64 {
        build_observable(n).unwrap().trace_sq() / (n * (n - 1)) as f64
    }

    #[test]
    fn rate_at_maximally_mixed() {
        let gamma = 1.0;
        for n in 2..=6 {
            let xf = fourier_frame_x(n);
            let lam = vec![1.0 / n as f64; n];
            let trx2 = build_observable(n).unwrap().trace_sq();
            let r = decay_rate(&xf, &lam, gamma);
            assert!((r + 8.0 * gamma * trx2 / (n * n) as f64).abs() < 1e-15);
            // also equals -8γkL at L = 1 - 1/N
            let l = 1.0 - 1.0 / n as f64;
            assert!((r + 8.0 * gamma * k_of(n) * l).abs() < 1e-15);
        }
        assert!((decay_rate(&fourier_frame_x(2), &[0.5, 0.5], 1.0) + 0.25).abs() < 1e-15);
    }

    #[test]
    fn pure_state_has_zero_rate() {
        for n in 2..=5 {
            let mut lam = vec![0.0; n];
            lam[0] = 1.0;
            assert!(decay_rate(&fourier_frame_x(n), &lam, 2.0).abs() < 1e-15);
        }
    }

    #[test]
    fn rate_matches_matrix_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for n in [2, 3, 4] {
            let xf = fourier_frame_x(n);
            for _ in 0..20 {
                let lam = random_spectrum(n, &mut rng);
                let a = decay_rate(&xf, &lam, 1.7);
                let b = brute_rate(&xf, &lam, 1.7);
                assert!((a - b).abs() <= 1e-14 * b.abs().max(1e-3), "{a} {b}");
            }
        }
    }

    #[test]
    fn two_level_tie_picks_identity() {
        let (perm, _) =
            select_permutation(&fourier_frame_x(2), &[0.8, 0.2], 1.0, PermutationMode::Exhaustive)
                .unwrap();
        assert_eq!(perm, vec![0, 1]);
    }

    #[test]
    fn uniform_spectrum_picks_identity() {
        for n in 2..=6 {
            let lam = vec![1.0 / n as f64; n];
            let (perm, _) =
                select_permutation(&fourier_frame_x(n), &lam, 1.0, PermutationMode::Exhaustive)
                    .unwrap();
            assert_eq!(perm, (0..n).collect::<Vec<_>>());
        }
    }

    #[test]
    fn three_level_exhaustive_matches_enumeration() {
        let xf = fourier_frame_x(3);
        let lam = [0.6, 0.3, 0.1];
        let gamma = 1.0;
        let (perm, rate) = select_permutation(&xf, &lam, gamma, PermutationMode::Exhaustive).unwrap();
        let explicit = [
            [0, 1, 2],
            [0, 2, 1],
            [1, 0, 2],
            [1, 2, 0],
            [2, 0, 1],
            [2, 1, 0],
        ];
        let best = explicit
            .iter()
            .map(|p| {
                let mu: Vec<f64> = p.iter().map(|&i| lam[i]).collect();
                brute_rate(&xf, &mu, gamma)
            })
            .fold(f64::INFINITY, f64::min);
        assert!((rate - best).abs() < 1e-15);
        let l = 1.0 - lam.iter().map(|v| v * v).sum::<f64>();
        assert!(rate <= -8.0 * gamma * k_of(3) * l);
        assert_eq!(perm.len(), 3);
    }

    #[test]
    fn exhaustive_limit_enforced() {
        let x9 = fourier_frame_x(9);
        let lam = vec![1.0 / 9.0; 9];
        assert!(matches!(
            select_permutation(&x9, &lam, 1.0, PermutationMode::Exhaustive),
            Err(Error::Capability { n: 9, max: 8 })
        ));
        let (perm, rate) = select_permutation(&x9, &lam, 1.0, PermutationMode::Greedy).unwrap();
        check_permutation(&perm, 9).unwrap();
        assert!(rate < 0.0);
    }

    #[test]
    fn restore_keeps_state_already_in_frame() {
        let n = 3;
        let f = unbiased_basis(n).unwrap();
        let lam = [0.5, 0.3, 0.2];
        let diag = CMatrix::from_fn(n, n, |i, j| {
            if i == j { Complex64::new(lam[i], 0.0) } else { Complex64::new(0.0, 0.0) }
        });
        let rho = DensityMatrix::new(f.conjugate(&diag)).unwrap();
        let (out, u) = restore_basis(&rho, &f, &[0, 1, 2]).unwrap();
        assert!(linalg::frobenius_norm(&(out.matrix() - rho.matrix())) < 1e-14);
        let via_u = u.conjugate(rho.matrix());
        assert!(linalg::frobenius_norm(&(via_u - rho.matrix())) < 1e-14);
    }

    #[test]
    fn restore_two_level_example() {
        let rho = DensityMatrix::from_diagonal(&[0.8, 0.2]).unwrap();
        let (out, u) = restore_basis(&rho, &unbiased_basis(2).unwrap(), &[0, 1]).unwrap();
        let m = out.matrix();
        assert!((m[(0, 0)].re - 0.5).abs() < 1e-15 && (m[(1, 1)].re - 0.5).abs() < 1e-15);
        assert!((m[(0, 1)].norm() - 0.3).abs() < 1e-15);
        assert!(u.unitarity_defect() < 1e-14);
    }

    #[test]
    fn restore_rejects_bad_permutation() {
        let rho = DensityMatrix::maximally_mixed(3).unwrap();
        let f = unbiased_basis(3).unwrap();
        assert!(restore_basis(&rho, &f, &[0, 0, 1]).is_err());
        assert!(restore_basis(&rho, &f, &[0, 1]).is_err());
    }

    #[test]
    fn first_feedback_step_from_mixed_state() {
        let n = 3;
        let x = build_observable(n).unwrap();
        let cfg = SmeConfig::new(1.0, 1e-3, 3).with_dt(1e-3);
        let out = simulate_feedback(
            &DensityMatrix::maximally_mixed(n).unwrap(),
            &x,
            &cfg,
            PermutationMode::Exhaustive,
        )
        .unwrap();
        assert_eq!(out.reports.len(), 1);
        let r = &out.reports[0];
        let expect = -8.0 * x.trace_sq() / (n * n) as f64;
        // one step of evolution away from I/N moves the rate by O(√dt)
        assert!((r.achieved_rate - expect).abs() < 0.05 * expect.abs());
    }

    #[test]
    fn feedback_trajectory_invariants() {
        let gamma = 1.0;
        for n in [2, 3, 4] {
            let x = build_observable(n).unwrap();
            let cfg = SmeConfig::new(gamma, 0.5, 11).with_dt(1e-3);
            let out = simulate_feedback(
                &DensityMatrix::maximally_mixed(n).unwrap(),
                &x,
                &cfg,
                PermutationMode::Exhaustive,
            )
            .unwrap();
            for (step, r) in out.reports.iter().enumerate() {
                assert!(r.meets_guarantee(gamma), "n={n} step={step} {r:?}");
                assert!(r.applied_unitary.unitarity_defect() < 1e-12);
            }
            let f = unbiased_basis(n).unwrap();
            for s in out.record.states.iter().skip(1) {
                let spec = s.rho.spectrum().unwrap();
                let gaps_ok = spec.eigenvalues.windows(2).all(|w| w[0] - w[1] > 1e-6);
                if gaps_ok {
                    assert!(is_unbiased(&x, &spec.eigenvectors, 1e-9).unwrap());
                }
                // X in the frame the state is diagonal in has constant diagonal
                let in_frame = f.express(s.rho.matrix());
                for i in 0..n {
                    for j in 0..n {
                        if i != j {
                            assert!(in_frame[(i, j)].norm() < 1e-12);
                        }
                    }
                }
            }
        }
    }

    /// dL over one step equals rate·dt up to the O(dt·dW) and O(dt²) terms.
    #[test]
    fn one_step_impurity_change_tracks_rate() {
        let x = build_observable(3).unwrap();
        let controller = FeedbackController::new(&x, 1.0, PermutationMode::Exhaustive).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let lam = random_spectrum(3, &mut rng);
        let diag = DensityMatrix::from_diagonal(&lam).unwrap();
        let (rho, report) = controller.correct(&diag).unwrap();
        let l0 = impurity(&rho);
        let mut devs = Vec::new();
        for dt in [1e-3, 5e-4, 2.5e-4] {
            let integ = crate::sme::Integrator::new(1.0, dt);
            // Average over ±dW and the two-point |dW| = √dt to cancel odd terms.
            let mut dl = 0.0;
            for dw in [dt.sqrt(), -dt.sqrt()] {
                let next = integ.step(&rho, &x, dw).unwrap().rho;
                dl += 0.5 * (impurity(&next) - l0);
            }
            devs.push((dl - report.achieved_rate * dt).abs());
        }
        // second-order residual: quartering dt shrinks it ~16x
        assert!(devs[2] < devs[0] / 8.0, "{devs:?}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn greedy_never_beats_exhaustive(seed in any::<u64>(), n in 2usize..7) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let xf = fourier_frame_x(n);
            let lam = random_spectrum(n, &mut rng);
            let (_, ex) = select_permutation(&xf, &lam, 1.0, PermutationMode::Exhaustive).unwrap();
            let (_, gr) = select_permutation(&xf, &lam, 1.0, PermutationMode::Greedy).unwrap();
            prop_assert!(gr >= ex - 1e-15);
            let l = 1.0 - lam.iter().map(|v| v * v).sum::<f64>();
            prop_assert!(ex <= -8.0 * k_of(n) * l + 1e-12);
        }

        #[test]
        fn restore_preserves_spectrum(seed in any::<u64>(), n in 2usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = CMatrix::from_fn(n, n, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
            let mut m = &g * g.adjoint();
            let tr = m.trace();
            m /= tr;
            linalg::hermitize(&mut m);
            let rho = DensityMatrix::new(m).unwrap();
            let mut perm: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() { perm.swap(i, rng.gen_range(0..=i)); }
            let (out, u) = restore_basis(&rho, &unbiased_basis(n).unwrap(), &perm).unwrap();
            prop_assert!((impurity(&out) - impurity(&rho)).abs() <= 1e-12);
            let a = rho.spectrum().unwrap().eigenvalues;
            let b = out.spectrum().unwrap().eigenvalues;
            for (p, q) in a.iter().zip(&b) { prop_assert!((p - q).abs() <= 1e-12); }
            let via_u = u.conjugate(rho.matrix());
            prop_assert!(linalg::frobenius_norm(&(via_u - out.matrix())) <= 1e-12);
        }
    }
}
