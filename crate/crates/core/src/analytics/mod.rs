//! Closed-form results for the equispaced observable: the unassisted
//! measurement solution, record statistics, the two-level impurity bound and
//! the feedback speed-up it implies.

pub mod quadrature;

use std::f64::consts::PI;

use itertools::Itertools;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantum::linalg::{self, CMatrix};
use crate::quantum::{build_observable, unbiased_basis, BasisTransform, DensityMatrix, Observable};

/// Absolute tolerance of the impurity quadratures.
pub const MEAN_IMPURITY_TOL: f64 = 1e-10;
pub const L2_TOL: f64 = 1e-12;

/// ln(1e16): integrands are cut where they drop below 1e-16 of the peak.
const TAIL_LOG: f64 = 36.841_361_487_904_734;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    pub tr_x2: f64,
    pub k: f64,
    /// ∫ dx / cosh(√(2γ) x / N)
    pub c: f64,
    pub c_tilde: f64,
}

fn check_n(n: usize) -> Result<()> {
    if n < 2 {
        Err(Error::InvalidDimension(n))
    } else {
        Ok(())
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("gamma must be positive, got {gamma}")))
    }
}

fn check_t_positive(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("t must be positive, got {t}")))
    }
}

/// Tr[X²] = (N+1)(N-1)/(12N) for X = J_z/N.
pub fn trace_x2(n: usize) -> f64 {
    let nf = n as f64;
    (nf + 1.0) * (nf - 1.0) / (12.0 * nf)
}

pub fn k_constant(n: usize) -> f64 {
    let nf = n as f64;
    trace_x2(n) / (nf * (nf - 1.0))
}

pub fn constants(n: usize, gamma: f64) -> Result<Constants> {
    check_n(n)?;
    check_gamma(gamma)?;
    let tr_x2 = trace_x2(n);
    let from_spectrum = build_observable(n)?.trace_sq();
    if (tr_x2 - from_spectrum).abs() > 1e-14 * tr_x2.max(1.0) {
        return Err(Error::Consistency(format!(
            "Tr[X^2] closed form {tr_x2} disagrees with spectrum sum {from_spectrum}"
        )));
    }
    let nf = n as f64;
    let c = PI * nf / (2.0 * gamma).sqrt();
    Ok(Constants {
        tr_x2,
        k: k_constant(n),
        c,
        c_tilde: (8.0 * PI).sqrt() * (nf - 1.0) / (c * nf),
    })
}

/// 2(N+1)/3.
pub fn asymptotic_speedup(n: usize) -> f64 {
    2.0 * (n as f64 + 1.0) / 3.0
}

/// Unassisted state from I/N after time t with record average v:
/// ρ_n ∝ exp(-4γt(v - x_n)²), diagonal in the measurement basis.
pub fn closed_form_state(t: f64, v: f64, x: &Observable, gamma: f64) -> Result<DensityMatrix> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::InvalidArgument(format!("t must be non-negative, got {t}")));
    }
    if !v.is_finite() {
        return Err(Error::InvalidArgument(format!("record average v = {v}")));
    }
    DensityMatrix::from_diagonal(&gaussian_weights(4.0 * gamma * t, v, x.spectrum()))
}

/// Normalized exp(-a(v - x_n)²).
fn gaussian_weights(a: f64, v: f64, levels: &[f64]) -> Vec<f64> {
    let expo: Vec<f64> = levels.iter().map(|&x| -a * (v - x).powi(2)).collect();
    let m = expo.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = expo.iter().map(|e| (e - m).exp()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

fn levels(n: usize) -> Vec<f64> {
    let nf = n as f64;
    (0..n).map(|i| (2.0 * i as f64 - (nf - 1.0)) / (2.0 * nf)).collect()
}

/// P(v, t): equal mixture of N Gaussians at the eigenvalues of X with
/// variance 1/(8γt).
pub fn record_density(v: f64, t: f64, n: usize, gamma: f64) -> Result<f64> {
    check_n(n)?;
    check_gamma(gamma)?;
    check_t_positive(t)?;
    let a = 4.0 * gamma * t;
    let norm = (a / PI).sqrt() / n as f64;
    Ok(norm * levels(n).iter().map(|x| (-a * (v - x).powi(2)).exp()).sum::<f64>())
}

/// Breakpoints spanning all peaks ±9σ, σ = 1/√(8γt).
fn record_domain(n: usize, gamma: f64, t: f64) -> Vec<f64> {
    let sigma = 1.0 / (8.0 * gamma * t).sqrt();
    let reach = (2.0 * TAIL_LOG).sqrt() * sigma * 1.05;
    let lv = levels(n);
    let mut pts = vec![lv[0] - reach];
    pts.extend(lv.iter().copied());
    pts.push(lv[n - 1] + reach);
    pts
}

/// ∫ P(v,t) dv over the truncated domain; 1 up to quadrature error.
pub fn record_density_mass(t: f64, n: usize, gamma: f64) -> Result<f64> {
    check_n(n)?;
    check_gamma(gamma)?;
    check_t_positive(t)?;
    let pts = record_domain(n, gamma, t);
    let est = quadrature::integrate_with_breaks(
        |v| record_density(v, t, n, gamma).unwrap_or(f64::NAN),
        &pts,
        1e-12,
        0.0,
    )?;
    Ok(est.value)
}

/// ⟨L(t)⟩ = 1 - ∫ Tr[ρ(t,v)²] P(v,t) dv for measurement starting from I/N.
pub fn mean_impurity_unassisted(t: f64, n: usize, gamma: f64) -> Result<f64> {
    check_n(n)?;
    check_gamma(gamma)?;
    check_t_positive(t)?;
    let a = 4.0 * gamma * t;
    let lv = levels(n);
    let norm = (a / PI).sqrt() / n as f64;
    // Tr[ρ²]·P = norm·Σw²/Σw with w_n = exp(-a(v-x_n)²); factor out the
    // largest exponent for stability.
    let integrand = |v: f64| {
        let m = lv
            .iter()
            .map(|x| -a * (v - x).powi(2))
            .fold(f64::NEG_INFINITY, f64::max);
        let (mut s1, mut s2) = (0.0, 0.0);
        for x in &lv {
            let w = (-a * (v - x).powi(2) - m).exp();
            s1 += w;
            s2 += w * w;
        }
        norm * m.exp() * s2 / s1
    };
    let est = quadrature::integrate_with_breaks(integrand, &record_domain(n, gamma, t), MEAN_IMPURITY_TOL, 0.0)?;
    Ok(1.0 - est.value)
}

/// 1/cosh(y) without overflow.
fn sech(y: f64) -> f64 {
    let e = (-y.abs()).exp();
    2.0 * e / (1.0 + e * e)
}

/// ln of ∫ exp(-x²/2t)/cosh(√(2γ)x/N) dx, by symmetry twice the half-line.
fn ln_l2_integral(t: f64, n: usize, gamma: f64) -> Result<f64> {
    let b = (2.0 * gamma).sqrt() / n as f64;
    // Integrand ≤ 2exp(-x²/2t - bx); cut once that is below 1e-16.
    let c = TAIL_LOG + 2f64.ln();
    let x_max = t * (-b + (b * b + 2.0 * c / t).sqrt()) * 1.05;
    let mut pts = vec![0.0];
    for p in [t.sqrt(), 1.0 / b] {
        if p < x_max {
            pts.push(p);
        }
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts.push(x_max);
    let est = quadrature::integrate_with_breaks(
        |x| (-x * x / (2.0 * t)).exp() * sech(b * x),
        &pts,
        L2_TOL / 2.0,
        1e-14,
    )?;
    Ok((2.0 * est.value).ln())
}

/// ln L₂(t), finite even where L₂ underflows.
pub fn ln_two_level_bound_l2(t: f64, n: usize, gamma: f64) -> Result<f64> {
    check_n(n)?;
    check_gamma(gamma)?;
    check_t_positive(t)?;
    let nf = n as f64;
    Ok(-gamma * t / (nf * nf) - 0.5 * (8.0 * PI * t).ln() + ln_l2_integral(t, n, gamma)?)
}

/// Mean impurity of a two-level measurement of σ_z/2N started fully mixed:
/// L₂(t) = e^{-γt/N²}/√(8πt) ∫ e^{-x²/2t}/cosh(√(2γ)x/N) dx.
pub fn two_level_bound_l2(t: f64, n: usize, gamma: f64) -> Result<f64> {
    Ok(ln_two_level_bound_l2(t, n, gamma)?.exp())
}

/// Large-t form e^{-γt/N²} C/√(8πt).
pub fn two_level_asymptote(t: f64, n: usize, gamma: f64) -> Result<f64> {
    check_t_positive(t)?;
    let c = constants(n, gamma)?.c;
    let nf = n as f64;
    Ok((-gamma * t / (nf * nf)).exp() * c / (8.0 * PI * t).sqrt())
}

/// C = ∫ dx/cosh(√(2γ)x/N) by quadrature (closed form πN/√(2γ)).
pub fn sech_integral(n: usize, gamma: f64) -> Result<f64> {
    check_n(n)?;
    check_gamma(gamma)?;
    let b = (2.0 * gamma).sqrt() / n as f64;
    let x_max = (TAIL_LOG + 2f64.ln()) / b;
    let est = quadrature::integrate_with_breaks(|x| sech(b * x), &[0.0, 1.0 / b, x_max], 1e-14, 1e-15)?;
    Ok(2.0 * est.value)
}

/// e^{-8γkt}·L0, the impurity guaranteed by permutation feedback.
pub fn feedback_impurity_bound(t: f64, n: usize, gamma: f64, l0: f64) -> Result<f64> {
    check_n(n)?;
    check_gamma(gamma)?;
    if !(t >= 0.0) {
        return Err(Error::InvalidArgument(format!("t must be non-negative, got {t}")));
    }
    let l_max = 1.0 - 1.0 / n as f64;
    if !(l0 > 0.0 && l0 <= l_max * (1.0 + 1e-12)) {
        return Err(Error::InvalidArgument(format!("L0 = {l0} outside (0, {l_max}]")));
    }
    Ok((-8.0 * gamma * k_constant(n) * t).exp() * l0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub n: usize,
    pub gamma: f64,
    pub tr_x2: f64,
    pub k: f64,
    pub l_target: f64,
    /// Unassisted time to reach `l_target` (two-level bound).
    pub t_m: f64,
    /// Time for the feedback bound to reach `l_target` from 1 - 1/N.
    pub t_fb: f64,
    pub speedup_lower: f64,
    pub asymptotic_speedup: f64,
}

/// Root of L₂(t) = target by doubling then bisection (L₂ decreases
/// strictly from 1/2 at t = 0⁺).
pub fn solve_t_m(l_target: f64, n: usize, gamma: f64) -> Result<f64> {
    check_n(n)?;
    check_gamma(gamma)?;
    if !(l_target > 0.0 && l_target < 0.5) {
        return Err(Error::RootBracket(format!(
            "two-level impurity never equals {l_target}; it falls from 1/2 towards 0"
        )));
    }
    let goal = l_target.ln();
    let f = |t: f64| ln_two_level_bound_l2(t, n, gamma).map(|l| l - goal);
    let mut lo = 0.0;
    let mut hi = 1.0 / gamma;
    let mut doublings = 0;
    while f(hi)? > 0.0 {
        lo = hi;
        hi *= 2.0;
        doublings += 1;
        if doublings > 200 {
            return Err(Error::RootBracket(format!("no bracket found for L = {l_target}")));
        }
    }
    while hi - lo > 1e-10 * hi {
        let mid = 0.5 * (lo + hi);
        if f(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

pub fn speedup_lower_bound(l_target: f64, n: usize, gamma: f64) -> Result<BoundsReport> {
    check_n(n)?;
    check_gamma(gamma)?;
    let l_max = 1.0 - 1.0 / n as f64;
    if !(l_target > 0.0 && l_target < l_max) {
        return Err(Error::InvalidArgument(format!(
            "target impurity {l_target} outside (0, {l_max})"
        )));
    }
    let consts = constants(n, gamma)?;
    let t_m = solve_t_m(l_target, n, gamma)?;
    let t_fb = (l_max / l_target).ln() / (8.0 * gamma * consts.k);
    Ok(BoundsReport {
        n,
        gamma,
        tr_x2: consts.tr_x2,
        k: consts.k,
        l_target,
        t_m,
        t_fb,
        speedup_lower: t_m / t_fb,
        asymptotic_speedup: asymptotic_speedup(n),
    })
}

pub const LEMMA1_MAX_N: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lemma1Check {
    /// Maximum of |ΣTr[X⁽ᵐ⁾ρX⁽ᵐ⁾ρ] - N!kL| / (N!kL) (absolute when L = 0).
    pub sum_violation: f64,
    /// Maximum relative deviation of Σ_σ |X_σ(i)σ(j)|² from (N-2)!Tr[X²], i ≠ j.
    pub pair_violation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lemma1Report {
    pub n: usize,
    pub eigenvalues: Vec<f64>,
    pub permutations: usize,
    pub impurity: f64,
    /// Σ over all permuted measurements, Fourier frame.
    pub permuted_sum: f64,
    /// N!·k·L.
    pub expected_sum: f64,
    /// Fourier frame followed by the extra unbiased frames.
    pub frames: Vec<Lemma1Check>,
}

impl Lemma1Report {
    pub fn max_sum_violation(&self) -> f64 {
        self.frames.iter().map(|f| f.sum_violation).fold(0.0, f64::max)
    }

    pub fn max_pair_violation(&self) -> f64 {
        self.frames.iter().map(|f| f.pair_violation).fold(0.0, f64::max)
    }

    pub fn passed(&self, tol: f64) -> bool {
        self.max_sum_violation() <= tol && self.max_pair_violation() <= tol
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

/// Deterministic family of further frames unbiased to the measurement basis:
/// row phases, row permutations, column phases and, for N = 4, the affine
/// complex Hadamard family.
fn extra_frame(n: usize, index: usize) -> BasisTransform {
    let f = unbiased_basis(n).expect("n checked by caller");
    // Weyl sequence: reproducible, well spread phases.
    let phase = |j: usize| {
        let u = ((index * 7919 + j * 104_729 + 1) as f64 * 0.618_033_988_749_894_9).fract();
        Complex64::from_polar(1.0, 2.0 * PI * u)
    };
    let base = if n == 4 {
        let a = 2.0 * PI * ((index + 1) as f64 * 0.414_213_562_373_095).fract();
        let e = Complex64::from_polar(1.0, a) * Complex64::i();
        let one = Complex64::new(1.0, 0.0);
        let rows = [
            [one, one, one, one],
            [one, e, -one, -e],
            [one, -one, one, -one],
            [one, -e, -one, e],
        ];
        CMatrix::from_fn(4, 4, |r, c| rows[r][c] * 0.5)
    } else {
        f.matrix().clone()
    };
    let perm: Vec<usize> = (0..n)
        .permutations(n)
        .nth(index % (1..=n).product::<usize>())
        .expect("index reduced modulo N!");
    let m = CMatrix::from_fn(n, n, |r, c| phase(r) * base[(perm[r], c)] * phase(n + c));
    BasisTransform::from_matrix_unchecked(m)
}

fn check_frame(x: &CMatrix, frame: &BasisTransform, lambda: &[f64], l: f64) -> (f64, Lemma1Check) {
    let n = lambda.len();
    let b = frame.matrix();
    let x_frame = b.adjoint() * x * b;
    let rho_frame = CMatrix::from_fn(n, n, |i, j| {
        if i == j {
            Complex64::new(lambda[i], 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    // Everything below is done back in the measurement basis with dense
    // products so that no step relies on the identity being checked.
    let rho = b * &rho_frame * b.adjoint();
    let tr_x2: f64 = (x * x).trace().re;
    let c = factorial(n - 2) * tr_x2;

    let mut sum = 0.0;
    let mut pair = vec![0.0; n * n];
    for perm in (0..n).permutations(n) {
        let xm_frame = CMatrix::from_fn(n, n, |i, j| x_frame[(perm[i], perm[j])]);
        let xm = b * &xm_frame * b.adjoint();
        sum += (&xm * &rho * &xm * &rho).trace().re;
        for i in 0..n {
            for j in 0..n {
                pair[i * n + j] += xm_frame[(i, j)].norm_sqr();
            }
        }
    }
    let expected = factorial(n) * tr_x2 / (n as f64 * (n as f64 - 1.0)) * l;
    let sum_violation = if expected > 0.0 {
        (sum - expected).abs() / expected
    } else {
        sum.abs() / c
    };
    let pair_violation = (0..n)
        .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
        .map(|(i, j)| (pair[i * n + j] - c).abs() / c)
        .fold(0.0, f64::max);
    (
        sum,
        Lemma1Check {
            sum_violation,
            pair_violation,
        },
    )
}

/// Brute-force check that summing Tr[X⁽ᵐ⁾ρX⁽ᵐ⁾ρ] over all N! permuted
/// measurements gives N!kL, in the Fourier frame and in `extra_frames`
/// further unbiased frames.
pub fn verify_lemma1(n: usize, eigenvalues: &[f64], extra_frames: usize) -> Result<Lemma1Report> {
    if !(2..=LEMMA1_MAX_N).contains(&n) {
        return Err(Error::Capability { n, max: LEMMA1_MAX_N });
    }
    if eigenvalues.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: eigenvalues.len(),
        });
    }
    let total: f64 = eigenvalues.iter().sum();
    if eigenvalues.iter().any(|&l| !(l >= 0.0)) || (total - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidArgument(format!(
            "{eigenvalues:?} is not a probability spectrum"
        )));
    }
    let x = build_observable(n)?.matrix();
    let l = 1.0 - eigenvalues.iter().map(|v| v * v).sum::<f64>();
    let fourier = unbiased_basis(n)?;
    let (permuted_sum, first) = check_frame(&x, &fourier, eigenvalues, l);
    let mut frames = vec![first];
    for idx in 0..extra_frames {
        let frame = extra_frame(n, idx);
        debug_assert!(frame.unitarity_defect() < 1e-12);
        frames.push(check_frame(&x, &frame, eigenvalues, l).1);
    }
    Ok(Lemma1Report {
        n,
        eigenvalues: eigenvalues.to_vec(),
        permutations: factorial(n) as usize,
        impurity: l,
        permuted_sum,
        expected_sum: factorial(n) * k_constant(n) * l,
        frames,
    })
}

/// Maximum trace distance between a stored trajectory and the closed form
/// evaluated at the trajectory's own record average.
pub fn closed_form_deviation(
    record: &crate::sme::TrajectoryRecord,
    x: &Observable,
    gamma: f64,
) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for s in record.states.iter().filter(|s| s.step > 0) {
        let v = record.v_at_step(s.step);
        let cf = closed_form_state(s.time, v, x, gamma)?;
        worst = worst.max(linalg::trace_distance(s.rho.matrix(), cf.matrix())?);
    }
    Ok(worst)
}
