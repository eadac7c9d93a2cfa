//! End-to-end acceptance run: one PASS/FAIL line per criterion, with the
//! measured numbers underneath. Exits non-zero if any criterion fails.
//!
//! `ACCEPTANCE_ONLY=1,4` restricts the run to the listed criteria.

use std::io::Write;
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qpurify::analytics::{self, closed_form_deviation, verify_lemma1};
use qpurify::harness::output::{curve_csv, figure1_csv, to_json};
use qpurify::harness::{self, map_trajectories, run_ensemble, with_workers, ExperimentConfig, Mode};
use qpurify::quantum::{build_observable, unbiased_basis, CMatrix, DensityMatrix};
use qpurify::sme::{simulate_unassisted, SmeConfig};
use qpurify_validation::{ks_critical_99, ks_statistic, mean_stderr, record_cdf, std_dev, Verdict};

const GAMMA: f64 = 1.0;

fn limit(n: usize) -> f64 {
    2.0 * (n as f64 + 1.0) / 3.0
}

fn criterion1() -> Verdict {
    let mut v = Verdict::new(1, "asymptotic speed-up at L_target = 1e-8 within 0.1% of 2(N+1)/3");
    for n in [2, 3, 4] {
        let r = analytics::speedup_lower_bound(1e-8, n, GAMMA).expect("root exists");
        let rel = (r.speedup_lower - limit(n)).abs() / limit(n);
        v.check(
            rel <= 1e-3,
            format!(
                "N={n}: S = {:.6} vs {:.6} (rel. dev {:.3e}, t_m = {:.4}, t_fb = {:.4})",
                r.speedup_lower,
                limit(n),
                rel,
                r.t_m,
                r.t_fb
            ),
        );
    }
    v
}

fn criterion2() -> Verdict {
    let mut v = Verdict::new(2, "Figure-1 curves monotone, approach limit from below, ordered by N");
    let targets = harness::log_targets(0.3, 1e-8, 41);
    let rows = harness::figure1_data(&[2, 3, 4], &targets, GAMMA).expect("figure-1 rows");
    let curve = |n: usize| -> Vec<f64> { rows.iter().filter(|r| r.n == n).map(|r| r.speedup_lower).collect() };
    for n in [2, 3, 4] {
        let s = curve(n);
        let worst_drop = s.windows(2).map(|w| w[0] - w[1]).fold(f64::NEG_INFINITY, f64::max);
        v.check(
            worst_drop <= 0.0,
            format!("N={n}: non-decreasing as target falls (largest step-to-step drop {worst_drop:.3e})"),
        );
        let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        v.check(
            max < limit(n),
            format!(
                "N={n}: below limit {:.4} everywhere; S(0.3) = {:.4}, S(1e-8) = {:.4}",
                limit(n),
                s[0],
                s[s.len() - 1]
            ),
        );
    }
    // Ordering is about the limiting speed-up: the curves cross at large
    // targets, where t_m for small N is dominated by the initial decay.
    let lim: Vec<f64> = [2, 3, 4].iter().map(|&n| rows.iter().find(|r| r.n == n).unwrap().asymptotic_speedup).collect();
    let (s2, s3, s4) = (curve(2), curve(3), curve(4));
    let last = targets.len() - 1;
    v.check(
        lim[0] < lim[1] && lim[1] < lim[2] && s2[last] < s3[last] && s3[last] < s4[last],
        format!(
            "limits {:.4} < {:.4} < {:.4}; at 1e-8: {:.4} < {:.4} < {:.4}",
            lim[0], lim[1], lim[2], s2[last], s3[last], s4[last]
        ),
    );
    let from = (0..targets.len())
        .rev()
        .take_while(|&i| s2[i] < s3[i] && s3[i] < s4[i])
        .last()
        .map_or(f64::NAN, |i| targets[i]);
    v.note(format!("pointwise S_2 < S_3 < S_4 for every target <= {from:.3e}"));
    v
}

fn criterion3() -> Verdict {
    let mut v = Verdict::new(3, "Lemma-1 brute force, N = 2..5, 50 spectra, relative error <= 1e-11");
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for n in 2..=5 {
        let mut worst: f64 = 0.0;
        let mut perms = 0;
        for _ in 0..50 {
            let mut l: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
            let s: f64 = l.iter().sum();
            l.iter_mut().for_each(|x| *x /= s);
            let r = verify_lemma1(n, &l, 10).expect("valid spectrum");
            perms = r.permutations;
            // Rates: -8γ·Σ vs -8kγN!L, same relative error as the sums.
            let rate_sum = -8.0 * GAMMA * r.permuted_sum;
            let rate_expected = -8.0 * GAMMA * r.expected_sum;
            worst = worst
                .max(((rate_sum - rate_expected) / rate_expected).abs())
                .max(r.max_sum_violation())
                .max(r.max_pair_violation());
        }
        v.check(
            worst <= 1e-11,
            format!("N={n}: {perms} permutations x 11 frames, max relative error {worst:.2e}"),
        );
    }
    v
}

fn criterion4() -> Verdict {
    let mut v = Verdict::new(4, "closed-form trajectory oracle: max distance <= 5e-3, error ratio 0.5 +- 30% on dt halving");
    for n in [2, 3] {
        let x = build_observable(n).unwrap();
        let rho0 = DensityMatrix::maximally_mixed(n).unwrap();
        let run = |dt: f64, store: usize| -> Vec<f64> {
            let results = map_trajectories(100, |seed| {
                let cfg = SmeConfig::new(GAMMA, 5.0, 4)
                    .with_dt(dt)
                    .with_trajectory(seed)
                    .with_store_every(store);
                let rec = simulate_unassisted(&rho0, &x, &cfg)?;
                closed_form_deviation(&rec, &x, GAMMA)
            });
            results.into_iter().map(|r| r.expect("trajectory")).collect()
        };
        let coarse = run(1e-4, 100);
        let fine = run(5e-5, 200);
        let max_coarse = coarse.iter().copied().fold(0.0, f64::max);
        let (mc, _) = mean_stderr(&coarse);
        let (mf, _) = mean_stderr(&fine);
        let ratio = mf / mc;
        v.check(
            max_coarse <= 5e-3,
            format!("N={n}: max over 100 seeds of max_t trace distance at dt=1e-4: {max_coarse:.3e} (mean {mc:.3e})"),
        );
        v.check(
            (0.35..=0.65).contains(&ratio),
            format!("N={n}: mean error ratio dt/2 : dt = {ratio:.3} (mean at dt/2 {mf:.3e})"),
        );
    }
    v
}

fn unassisted_ensemble(n: usize) -> harness::EnsembleSummary {
    let cfg = ExperimentConfig {
        n,
        gamma: GAMMA,
        dt: Some(1e-4),
        t_final: 5.0,
        n_trajectories: 5000,
        master_seed: 2025,
        mode: Mode::Unassisted,
        thinning: 100,
        ..Default::default()
    };
    run_ensemble(&cfg).expect("ensemble")
}

fn index_of(times: &[f64], t: f64) -> usize {
    times.iter().position(|&s| (s - t).abs() < 1e-9).expect("sampled time")
}

fn criteria5_and_7() -> (Verdict, Verdict) {
    let mut v5 = Verdict::new(5, "unassisted Monte-Carlo <L(t)> within 3 stderr of quadrature, N = 2, 3");
    let mut v7 = Verdict::new(7, "two-level bound L2(t) <= Monte-Carlo <L(t)> (3 stderr), N = 3, 4, all sampled t");
    for n in [2, 3, 4] {
        let s = unassisted_ensemble(n);
        if s.completed != 5000 {
            v5.note(format!("N={n}: {} failed trajectories", s.failures.len()));
        }
        let exact = s.analytic_mean.as_ref().expect("unassisted mode");
        if n <= 3 {
            for t in [0.5, 1.0, 2.0, 5.0] {
                let i = index_of(&s.times, t);
                let z = (s.mean_impurity[i] - exact[i]) / s.stderr_impurity[i];
                v5.check(
                    z.abs() <= 3.0,
                    format!(
                        "N={n} t={t}: MC {:.5} +- {:.5}, quadrature {:.5} (z = {z:+.2})",
                        s.mean_impurity[i], s.stderr_impurity[i], exact[i]
                    ),
                );
            }
        }
        if n >= 3 {
            let mut worst_z = f64::NEG_INFINITY;
            let mut at = 0.0;
            for i in 1..s.times.len() {
                let z = (s.l2_bound[i] - s.mean_impurity[i]) / s.stderr_impurity[i];
                if z > worst_z {
                    worst_z = z;
                    at = s.times[i];
                }
            }
            v7.check(
                worst_z <= 3.0,
                format!(
                    "N={n}: {} sampled times, closest approach (L2 - <L>)/stderr = {worst_z:+.2} at t = {at}",
                    s.times.len() - 1
                ),
            );
        }
    }
    (v5, v7)
}

fn criterion6() -> Verdict {
    let mut v = Verdict::new(6, "feedback: L(t) <= e^{-8gkt} L(0)(1 + 20 g dt) per trajectory, every step rate <= -8gkL + 1e-9g");
    let dt = 1e-4;
    for n in [2, 3, 4] {
        let cfg = ExperimentConfig {
            n,
            gamma: GAMMA,
            dt: Some(dt),
            t_final: 5.0,
            n_trajectories: 500,
            master_seed: 6,
            mode: Mode::Feedback,
            thinning: 1000,
            ..Default::default()
        };
        let s = run_ensemble(&cfg).expect("feedback ensemble");
        let fb = s.feedback.expect("feedback stats");
        v.check(
            fb.rate_violations == 0,
            format!(
                "N={n}: {} steps, {} rate violations, max (rate - guarantee)/g = {:.3e}",
                fb.steps_checked, fb.rate_violations, fb.max_rate_excess
            ),
        );
        v.check(
            fb.trajectories_over_bound == 0,
            format!(
                "N={n}: {} of {} trajectories exceed the bound; max L/bound = {:.5} vs allowance {:.5}",
                fb.trajectories_over_bound,
                s.completed,
                fb.max_bound_ratio,
                1.0 + 20.0 * GAMMA * dt
            ),
        );
    }
    v
}

struct MartingaleSample {
    states: Vec<CMatrix>,
    purities: Vec<f64>,
}

fn criterion8() -> Verdict {
    let mut v = Verdict::new(8, "ensemble mean rho follows the dephasing equation, purity non-decreasing, v peaks");
    // (a) + (b): coherent start so that the dephasing of off-diagonals is visible.
    let n = 3;
    let m = 2000;
    let dt = 1e-3;
    let x = build_observable(n).unwrap();
    let f = unbiased_basis(n).unwrap();
    let f0: Vec<Complex64> = (0..n).map(|r| f.matrix()[(r, 0)]).collect();
    let pure = DensityMatrix::pure(&f0).unwrap();
    let mixed = DensityMatrix::maximally_mixed(n).unwrap();
    let rho0 = DensityMatrix::new((pure.matrix() + mixed.matrix()) * Complex64::new(0.5, 0.0)).unwrap();
    let store = 500;
    let results = map_trajectories(m, |i| {
        let cfg = SmeConfig::new(GAMMA, 2.0, 8).with_dt(dt).with_trajectory(i).with_store_every(store);
        let rec = simulate_unassisted(&rho0, &x, &cfg)?;
        Ok(MartingaleSample {
            states: rec.states.iter().map(|s| s.rho.matrix().clone()).collect(),
            purities: rec.impurities.iter().step_by(100).map(|l| 1.0 - l).collect(),
        })
    });
    let samples: Vec<MartingaleSample> = results.into_iter().map(|r| r.expect("trajectory")).collect();
    let tol = 4.0 / (m as f64).sqrt();
    let spec = x.spectrum();
    let mut worst: f64 = 0.0;
    let n_stored = samples[0].states.len();
    for k in 0..n_stored {
        let t = (k * store) as f64 * dt;
        let mut mean = CMatrix::zeros(n, n);
        for s in &samples {
            mean += &s.states[k];
        }
        mean /= Complex64::new(m as f64, 0.0);
        for i in 0..n {
            for j in 0..n {
                let exact = rho0.matrix()[(i, j)] * (-GAMMA * (spec[i] - spec[j]).powi(2) * t).exp();
                let d = mean[(i, j)] - exact;
                worst = worst.max(d.re.abs()).max(d.im.abs());
            }
        }
    }
    v.check(
        worst <= tol,
        format!("N=3, M={m}, t in 0..2 ({n_stored} times): max entry deviation {worst:.3e} vs 4/sqrt(M) = {tol:.3e}"),
    );

    let n_p = samples[0].purities.len();
    let mut worst_z = f64::INFINITY;
    for k in 1..n_p {
        let diffs: Vec<f64> = samples.iter().map(|s| s.purities[k] - s.purities[k - 1]).collect();
        let (d, se) = mean_stderr(&diffs);
        worst_z = worst_z.min(d / se);
    }
    let first = mean_stderr(&samples.iter().map(|s| s.purities[0]).collect::<Vec<_>>()).0;
    let last = mean_stderr(&samples.iter().map(|s| s.purities[n_p - 1]).collect::<Vec<_>>()).0;
    v.check(
        worst_z >= -3.0,
        format!(
            "mean Tr[rho^2] non-decreasing over {} intervals (min paired z = {worst_z:+.2}); {first:.4} -> {last:.4}",
            n_p - 1
        ),
    );

    // (c) record average at long times.
    let t_v = 20.0;
    let cfg = ExperimentConfig {
        n,
        gamma: GAMMA,
        dt: Some(2e-3),
        t_final: t_v,
        n_trajectories: m,
        master_seed: 88,
        thinning: 100_000,
        ..Default::default()
    };
    let s = run_ensemble(&cfg).expect("record ensemble");
    let vs: Vec<f64> = s.final_v.iter().map(|v| v.expect("completed")).collect();
    let sigma = 1.0 / (8.0 * GAMMA * t_v).sqrt();
    for (idx, &level) in spec.iter().enumerate() {
        let cluster: Vec<f64> = vs
            .iter()
            .copied()
            .filter(|v| {
                spec.iter()
                    .enumerate()
                    .min_by(|a, b| (v - a.1).abs().total_cmp(&(v - b.1).abs()))
                    .map(|(i, _)| i)
                    == Some(idx)
            })
            .collect();
        let (mu, se) = mean_stderr(&cluster);
        let sd = std_dev(&cluster);
        v.check(
            (sd / sigma - 1.0).abs() <= 0.1 && (mu - level).abs() <= 4.0 * se,
            format!(
                "peak {level:+.4}: {} samples, centre {mu:+.4} (+- {se:.4}), width {sd:.4} vs 1/sqrt(8gt) = {sigma:.4} ({:+.1}%)",
                cluster.len(),
                100.0 * (sd / sigma - 1.0)
            ),
        );
    }
    let d = ks_statistic(&vs, |v| record_cdf(v, t_v, spec, GAMMA));
    v.check(
        d <= ks_critical_99(vs.len()),
        format!("KS distance to P(v, t={t_v}) = {d:.4} (99% critical {:.4})", ks_critical_99(vs.len())),
    );
    v
}

fn criterion9() -> Verdict {
    let mut v = Verdict::new(9, "byte-identical outputs for fixed seeds under 1 and 8 workers");
    for mode in [Mode::Unassisted, Mode::Feedback] {
        let cfg = ExperimentConfig {
            n: 3,
            dt: Some(1e-3),
            t_final: 0.5,
            n_trajectories: 40,
            master_seed: 99,
            mode,
            thinning: 10,
            ..Default::default()
        };
        let bytes = |threads: usize| -> Vec<u8> {
            let s = with_workers(threads, || run_ensemble(&cfg)).unwrap().unwrap();
            let mut out = curve_csv(&s).unwrap().into_bytes();
            out.extend(to_json(&s).unwrap().into_bytes());
            out
        };
        let runs = [bytes(1), bytes(1), bytes(8), bytes(8)];
        let same = runs.iter().all(|r| r == &runs[0]);
        v.check(same, format!("{mode:?}: 2 runs x {{1, 8}} workers, {} bytes each", runs[0].len()));
    }
    let rows = || figure1_csv(&harness::figure1_data(&[2, 3], &[1e-2, 1e-5], GAMMA).unwrap()).unwrap();
    v.check(rows() == rows(), "figure-1 table reproducible".into());
    v
}

fn main() {
    let only: Option<Vec<u32>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let wanted = |id: u32| only.as_ref().map_or(true, |o| o.contains(&id));
    let mut verdicts = Vec::new();
    let emit = |v: &Verdict, secs: f64| {
        println!("{} [{secs:.1} s]", v.headline());
        for l in &v.lines {
            println!("{l}");
        }
        let _ = std::io::stdout().flush();
    };
    let simple: [(u32, fn() -> Verdict); 7] = [
        (1, criterion1),
        (2, criterion2),
        (3, criterion3),
        (4, criterion4),
        (6, criterion6),
        (8, criterion8),
        (9, criterion9),
    ];
    for (id, f) in simple {
        if id == 6 && (wanted(5) || wanted(7)) {
            let start = Instant::now();
            let (v5, v7) = criteria5_and_7();
            let secs = start.elapsed().as_secs_f64();
            if wanted(5) {
                emit(&v5, secs);
                verdicts.push(v5);
            }
            if wanted(7) {
                emit(&v7, secs);
                verdicts.push(v7);
            }
        }
        if wanted(id) {
            let start = Instant::now();
            let v = f();
            emit(&v, start.elapsed().as_secs_f64());
            verdicts.push(v);
        }
    }
    verdicts.sort_by_key(|v| v.id);
    println!("\nacceptance summary:");
    for v in &verdicts {
        println!("  {}", v.headline());
    }
    let failed: Vec<u32> = verdicts.iter().filter(|v| !v.passed).map(|v| v.id).collect();
    if failed.is_empty() {
        println!("all {} criteria passed", verdicts.len());
    } else {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
