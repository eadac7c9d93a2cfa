//! Bundled self-checks of the analytic layer, with a fault-injection hook on
//! the rate constant k.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::VERSION;
use crate::analytics::{self, LEMMA1_MAX_N};
use crate::error::{Error, Result};
use crate::feedback::{select_permutation, PermutationMode};
use crate::quantum::linalg::{self, CMatrix};
use crate::quantum::{build_observable, unbiased_basis};

pub const LEMMA1_TOL: f64 = 1e-11;
const SPECTRA_PER_N: usize = 50;
const EXTRA_FRAMES: usize = 10;
const SUITE_SEED: u64 = 0x5eed_1e44a;
/// Largest N the suite accepts; Lemma-1 enumeration stops at 5.
pub const VERIFY_MAX_N: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifyOptions {
    pub n_max: usize,
    pub gamma: f64,
    /// Multiplies k wherever the suite uses it. Anything but 1 must make
    /// the suite fail.
    pub k_scale: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            n_max: 4,
            gamma: 1.0,
            k_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub n: Option<usize>,
    pub passed: bool,
    /// Worst observed deviation (meaning depends on the check).
    pub value: f64,
    pub tolerance: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub version: String,
    pub options: VerifyOptions,
    pub passed: bool,
    pub checks: Vec<Check>,
}

fn check(name: &str, n: Option<usize>, value: f64, tolerance: f64, detail: String) -> Check {
    Check {
        name: name.into(),
        n,
        passed: value <= tolerance,
        value,
        tolerance,
        detail,
    }
}

fn random_spectrum(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|_| -rng.gen_range(1e-12f64..1.0).ln()).collect();
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
    v
}

fn expm_hermitian(m: &CMatrix) -> Result<CMatrix> {
    let s = linalg::eig_hermitian(m)?;
    let v = s.eigenvectors.matrix();
    let d = CMatrix::from_fn(m.nrows(), m.nrows(), |i, j| {
        if i == j {
            num_complex::Complex64::new(s.eigenvalues[i].exp(), 0.0)
        } else {
            num_complex::Complex64::new(0.0, 0.0)
        }
    });
    Ok(v * d * v.adjoint())
}

/// Run all analytic self-checks for N = 2..=n_max.
pub fn verify_suite(opts: &VerifyOptions) -> Result<VerifyReport> {
    if !(2..=VERIFY_MAX_N).contains(&opts.n_max) {
        return Err(Error::InvalidArgument(format!(
            "n_max must be in 2..={VERIFY_MAX_N}, got {}",
            opts.n_max
        )));
    }
    if !(opts.gamma > 0.0 && opts.gamma.is_finite()) {
        return Err(Error::InvalidArgument(format!("gamma must be positive, got {}", opts.gamma)));
    }
    if !(opts.k_scale > 0.0 && opts.k_scale.is_finite()) {
        return Err(Error::InvalidArgument("k_scale must be positive".into()));
    }
    let gamma = opts.gamma;
    let mut rng = ChaCha8Rng::seed_from_u64(SUITE_SEED);
    let mut checks = Vec::new();

    for n in 2..=opts.n_max {
        let nf = n as f64;
        let consts = analytics::constants(n, gamma)?;
        let k = consts.k * opts.k_scale;

        let spectral = build_observable(n)?.trace_sq();
        checks.push(check(
            "trace_x2_closed_form",
            Some(n),
            (consts.tr_x2 - spectral).abs(),
            1e-14,
            format!("(N+1)(N-1)/(12N) = {} vs eigenvalue sum {spectral}", consts.tr_x2),
        ));
        checks.push(check(
            "k_asymptote_identity",
            Some(n),
            (8.0 * nf * nf * k - analytics::asymptotic_speedup(n)).abs(),
            1e-14,
            format!("8N^2 k = {} vs 2(N+1)/3", 8.0 * nf * nf * k),
        ));

        let c_quad = analytics::sech_integral(n, gamma)?;
        checks.push(check(
            "sech_integral",
            Some(n),
            (c_quad - consts.c).abs(),
            1e-10,
            format!("quadrature {c_quad} vs pi N / sqrt(2 gamma) = {}", consts.c),
        ));

        if n <= LEMMA1_MAX_N {
            let mut worst: f64 = 0.0;
            let mut pair: f64 = 0.0;
            let mut perms = 0;
            for _ in 0..SPECTRA_PER_N {
                let lambda = random_spectrum(n, &mut rng);
                let r = analytics::verify_lemma1(n, &lambda, EXTRA_FRAMES)?;
                perms = r.permutations;
                let expected = (1..=n).map(|i| i as f64).product::<f64>() * k * r.impurity;
                worst = worst.max((r.permuted_sum - expected).abs() / expected);
                worst = worst.max(r.max_sum_violation());
                pair = pair.max(r.max_pair_violation());
            }
            checks.push(check(
                "lemma1_permutation_sum",
                Some(n),
                worst,
                LEMMA1_TOL,
                format!("{SPECTRA_PER_N} spectra x {perms} permutations, {} frames each", EXTRA_FRAMES + 1),
            ));
            checks.push(check(
                "lemma1_pair_constant",
                Some(n),
                pair,
                LEMMA1_TOL,
                "sum over permutations of |X_s(i)s(j)|^2 = (N-2)! Tr[X^2]".into(),
            ));
        }

        if n <= crate::feedback::EXHAUSTIVE_MAX_N {
            let x_frame = build_observable(n)?.in_basis(&unbiased_basis(n)?)?;
            let mut excess = f64::NEG_INFINITY;
            for _ in 0..SPECTRA_PER_N {
                let mut lambda = random_spectrum(n, &mut rng);
                lambda.sort_by(|a, b| b.total_cmp(a));
                let l = 1.0 - lambda.iter().map(|v| v * v).sum::<f64>();
                let (_, rate) = select_permutation(&x_frame, &lambda, gamma, PermutationMode::Exhaustive)?;
                excess = excess.max((rate + 8.0 * gamma * k * l) / gamma);
            }
            checks.push(check(
                "best_permutation_rate",
                Some(n),
                excess,
                1e-9,
                "max (chosen rate + 8 gamma k L)/gamma over random spectra".into(),
            ));
        }

        // Diagonal Gaussian closed form against the normalized matrix
        // exponential of -4γt(X² - 2vX).
        let x = build_observable(n)?;
        let xm = x.matrix();
        let mut dev: f64 = 0.0;
        for _ in 0..20 {
            let t = rng.gen_range(0.0..5.0) / gamma;
            let v = rng.gen_range(-0.6..0.6);
            let gen = (&xm * &xm - &xm * num_complex::Complex64::new(2.0 * v, 0.0))
                * num_complex::Complex64::new(-4.0 * gamma * t, 0.0);
            let mut e = expm_hermitian(&gen)?;
            let tr = e.trace();
            e /= tr;
            let cf = analytics::closed_form_state(t, v, &x, gamma)?;
            dev = dev.max(linalg::frobenius_norm(&(e - cf.matrix())));
        }
        checks.push(check(
            "closed_form_consistency",
            Some(n),
            dev,
            1e-12,
            "diagonal Gaussian form vs matrix exponential, 20 random (t, v)".into(),
        ));

        let mut mass_dev: f64 = 0.0;
        for t in [0.05, 1.0, 20.0] {
            mass_dev = mass_dev.max((analytics::record_density_mass(t / gamma, n, gamma)? - 1.0).abs());
        }
        checks.push(check(
            "record_density_normalized",
            Some(n),
            mass_dev,
            1e-10,
            "integral of P(v,t) at gamma t = 0.05, 1, 20".into(),
        ));

        let grid = [0.01, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0];
        if n == 2 {
            let mut d: f64 = 0.0;
            for t in grid {
                let a = analytics::mean_impurity_unassisted(t / gamma, 2, gamma)?;
                let b = analytics::two_level_bound_l2(t / gamma, 2, gamma)?;
                d = d.max((a - b).abs());
            }
            checks.push(check(
                "two_level_reduction",
                Some(2),
                d,
                1e-9,
                "mean unassisted impurity equals L2 for N = 2".into(),
            ));
        } else {
            let mut worst = f64::NEG_INFINITY;
            for t in grid {
                let a = analytics::mean_impurity_unassisted(t / gamma, n, gamma)?;
                let b = analytics::two_level_bound_l2(t / gamma, n, gamma)?;
                worst = worst.max(b - a);
            }
            checks.push(check(
                "l2_lower_bound",
                Some(n),
                worst.max(0.0),
                0.0,
                format!("max L2 - <L> over gamma t in {grid:?}"),
            ));
        }

        // Speed-up scan: non-decreasing as the target falls, below the limit.
        let targets = super::log_targets(0.3, 1e-6, 15);
        let mut prev = 0.0;
        let mut drop: f64 = 0.0;
        let mut above: f64 = f64::NEG_INFINITY;
        let limit = 8.0 * nf * nf * k;
        for l in targets {
            let r = analytics::speedup_lower_bound(l, n, gamma)?;
            // Re-derive with the (possibly mutated) k.
            let t_fb = ((1.0 - 1.0 / nf) / l).ln() / (8.0 * gamma * k);
            let s = r.t_m / t_fb;
            drop = drop.max(prev - s);
            above = above.max(s - limit);
            prev = s;
        }
        checks.push(check(
            "speedup_monotone",
            Some(n),
            drop.max(0.0),
            0.0,
            "speed-up bound never decreases as the target falls".into(),
        ));
        checks.push(check(
            "speedup_below_limit",
            Some(n),
            above.max(0.0),
            0.0,
            format!("max S - 2(N+1)/3, limit {limit}"),
        ));
    }

    let passed = checks.iter().all(|c| c.passed);
    Ok(VerifyReport {
        version: VERSION.to_string(),
        options: *opts,
        passed,
        checks,
    })
}
