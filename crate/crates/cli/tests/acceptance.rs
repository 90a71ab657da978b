//! Acceptance suite. Prints one PASS/FAIL line per criterion. Failing
//! criteria make the process exit non-zero only when `ACCEPTANCE_STRICT` is
//! set, so the report does not block the rest of `cargo test`.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Parser;
use drghmc::diagnostics::{
    budget_grid, chi_square_gof, error_curve, integrated_autocorr_time, mean_of_errors,
    probe_accepted_step_size, quantile, spearman, thinning_interval, ErrorReport, ProbeOptions,
};
use drghmc::integrator::{hamiltonian, leapfrog, proposal_map, StageSchedule, StepCount};
use drghmc::model::{
    build_model, CorrelatedGaussian, Funnel, LogDensity, ModelOptions, MODEL_NAMES,
};
use drghmc::reference::{Moment, ReferenceSet};
use drghmc::sampler::{
    chain_rng, drghmc_step, hmc_step, sample_momentum, ChainRng, DrGhmcConfig, HmcConfig,
    ProposalStack, SamplerKind,
};
use drghmc::{MassMatrix, PhasePoint};
use drghmc_bench::pipeline::{compute_metrics, make_reference, sample};
use drghmc_bench::{Cli, ExperimentConfig};
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::distribution::{ContinuousCDF, Normal};

fn normal(rng: &mut ChainRng) -> f64 {
    StandardNormal.sample(rng)
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    a == b || (a - b).abs() <= tol * a.abs().max(b.abs())
}

fn cache_root() -> PathBuf {
    PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance-cache")
}

// ---------------------------------------------------------------- 1

/// Checks that the sample mean of each statistic lies within 4 standard
/// errors of its target mean, given the target standard deviation.
struct MomentCheck {
    worst_z: f64,
    failures: Vec<String>,
}

impl MomentCheck {
    fn new() -> Self {
        Self { worst_z: 0.0, failures: Vec::new() }
    }

    fn check(&mut self, label: &str, values: &[f64], mean: f64, sd: f64) {
        let n = values.len() as f64;
        let m = values.iter().sum::<f64>() / n;
        let z = (m - mean).abs() / (sd / n.sqrt());
        self.worst_z = self.worst_z.max(z);
        if z > 4.0 {
            self.failures.push(format!("{label}: mean {m:.4} vs {mean}, z = {z:.2}"));
        }
    }
}

fn one_step_ensemble(
    model: &dyn LogDensity,
    draw: impl Fn(&mut ChainRng) -> Vec<f64>,
    seed: u64,
) -> Vec<PhasePoint> {
    let dim = model.dim();
    let mut cfg = DrGhmcConfig::new(dim, 1.0);
    cfg.max_proposals = 3;
    cfg.damping = 0.08;
    cfg.reduction = 4.0;
    let mut rng = chain_rng(seed, 0);
    (0..10_000)
        .map(|_| {
            let theta = draw(&mut rng);
            let rho = (0..dim).map(|_| normal(&mut rng)).collect();
            drghmc_step(model, &PhasePoint::new(theta, rho), &cfg, &mut rng).next
        })
        .collect()
}

fn check_momenta(check: &mut MomentCheck, out: &[PhasePoint], tag: &str) {
    for d in 0..out[0].dim() {
        let p: Vec<f64> = out.iter().map(|z| z.momentum[d]).collect();
        let p2: Vec<f64> = p.iter().map(|v| v * v).collect();
        check.check(&format!("{tag} rho_{d}"), &p, 0.0, 1.0);
        check.check(&format!("{tag} rho_{d}^2"), &p2, 1.0, 2f64.sqrt());
    }
}

fn criterion_1() -> (bool, String) {
    let mut check = MomentCheck::new();

    let g1 = CorrelatedGaussian::new(1, 0.0).unwrap();
    let out = one_step_ensemble(&g1, |r| vec![normal(r)], 11);
    let t: Vec<f64> = out.iter().map(|z| z.position[0]).collect();
    check.check("N1 theta", &t, 0.0, 1.0);
    check.check("N1 theta^2", &t.iter().map(|v| v * v).collect::<Vec<_>>(), 1.0, 2f64.sqrt());
    check_momenta(&mut check, &out, "N1");

    let rho = 0.5f64;
    let g2 = CorrelatedGaussian::new(2, rho).unwrap();
    let out = one_step_ensemble(
        &g2,
        |r| {
            let a = normal(r);
            vec![a, rho * a + (1.0 - rho * rho).sqrt() * normal(r)]
        },
        12,
    );
    for d in 0..2 {
        let t: Vec<f64> = out.iter().map(|z| z.position[d]).collect();
        check.check(&format!("N2 theta_{d}"), &t, 0.0, 1.0);
        check.check(&format!("N2 theta_{d}^2"), &t.iter().map(|v| v * v).collect::<Vec<_>>(), 1.0, 2f64.sqrt());
    }
    let cross: Vec<f64> = out.iter().map(|z| z.position[0] * z.position[1]).collect();
    check.check("N2 theta_0 theta_1", &cross, rho, (1.0 + rho * rho).sqrt());
    check_momenta(&mut check, &out, "N2");

    let f2 = Funnel::new(2).unwrap();
    let out = one_step_ensemble(
        &f2,
        |r| {
            let x = 3.0 * normal(r);
            vec![x, (0.5 * x).exp() * normal(r)]
        },
        13,
    );
    let x: Vec<f64> = out.iter().map(|z| z.position[0]).collect();
    let std_latent: Vec<f64> = out.iter().map(|z| z.position[1] * (-0.5 * z.position[0]).exp()).collect();
    check.check("funnel x", &x, 0.0, 3.0);
    check.check("funnel x^2", &x.iter().map(|v| v * v).collect::<Vec<_>>(), 9.0, 162f64.sqrt());
    check.check("funnel y e^(-x/2)", &std_latent, 0.0, 1.0);
    check.check(
        "funnel (y e^(-x/2))^2",
        &std_latent.iter().map(|v| v * v).collect::<Vec<_>>(),
        1.0,
        2f64.sqrt(),
    );
    check_momenta(&mut check, &out, "funnel");

    let pass = check.failures.is_empty();
    let mut detail = format!("worst |z| = {:.2} over 10^4 members (limit 4)", check.worst_z);
    if !pass {
        detail.push_str(&format!("; {}", check.failures.join("; ")));
    }
    (pass, detail)
}

// ---------------------------------------------------------------- 2

/// `ln[pi(z) prod_{i<k}(1 - alpha_i(z)) alpha_k(z)]` from a fresh stack at `z`,
/// plus the stage-`k` proposal (None if divergent).
fn balance_side(
    model: &Funnel,
    sched: &StageSchedule,
    mass: &MassMatrix,
    z: &PhasePoint,
    k: usize,
) -> (f64, Option<PhasePoint>) {
    let mut stack = ProposalStack::new(model, sched, mass, z.clone());
    for _ in 0..k {
        stack.push_stage();
    }
    let rec = stack.stage(k);
    let proposal = (!rec.divergent).then(|| rec.proposal.clone());
    let mut log = -stack.origin_energy().unwrap() + rec.log_accept;
    for i in 1..k {
        log += stack.stage(i).log_reject();
    }
    (log, proposal)
}

fn criterion_2() -> (bool, String) {
    let model = Funnel::new(2).unwrap();
    let mass = MassMatrix::identity(2);
    let sched = StageSchedule::new(2.0, 4.0, StepCount::Fixed(1)).unwrap();
    let mut rng = chain_rng(21, 0);
    let (mut worst, mut nontrivial, mut skipped) = (0.0f64, 0, 0);
    let mut failures = Vec::new();
    for point in 0..100 {
        let x = 2.0 * normal(&mut rng);
        let z = PhasePoint::new(
            vec![x, (0.5 * x).exp() * normal(&mut rng)],
            vec![normal(&mut rng), normal(&mut rng)],
        );
        for k in 1..=3 {
            let (lhs, y) = balance_side(&model, &sched, &mass, &z, k);
            let Some(y) = y else {
                skipped += 1;
                continue;
            };
            let (rhs, _) = balance_side(&model, &sched, &mass, &y, k);
            if lhs == f64::NEG_INFINITY && rhs == f64::NEG_INFINITY {
                continue;
            }
            nontrivial += 1;
            let rel = (lhs - rhs).exp_m1().abs();
            worst = worst.max(rel);
            if rel.is_nan() || rel > 1e-10 {
                failures.push(format!("point {point} k={k}: rel {rel:e}"));
            }
        }
    }
    let pass = failures.is_empty() && nontrivial > 0;
    (
        pass,
        format!(
            "max rel diff {worst:.2e} over {nontrivial} non-zero (point, k) pairs, {skipped} divergent skipped{}",
            if failures.is_empty() { String::new() } else { format!("; {}", failures.join("; ")) }
        ),
    )
}

// ---------------------------------------------------------------- 3

fn flat(z: &PhasePoint) -> Vec<f64> {
    z.position.iter().chain(&z.momentum).copied().collect()
}

fn unflat(v: &[f64]) -> PhasePoint {
    let d = v.len() / 2;
    PhasePoint::new(v[..d].to_vec(), v[d..].to_vec())
}

/// Log-log slope of the mean one-step energy error over `points` against
/// the step size.
fn energy_slope(model: &dyn LogDensity, points: &[PhasePoint]) -> f64 {
    let mass = MassMatrix::identity(model.dim());
    let pts: Vec<(f64, f64)> = (0..8)
        .map(|i| {
            let e = 1e-3 * 10f64.powf(i as f64 * 1.5 / 7.0);
            let mean_dh = points
                .iter()
                .map(|z| {
                    let after = leapfrog(model, z, e, &mass).point;
                    (hamiltonian(model, &after, &mass) - hamiltonian(model, z, &mass)).abs()
                })
                .sum::<f64>()
                / points.len() as f64;
            (e.ln(), mean_dh.ln())
        })
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

fn criterion_3() -> (bool, String) {
    let mut rng = chain_rng(31, 0);
    let models: Vec<(&str, Box<dyn LogDensity>)> = vec![
        ("funnel2", Box::new(Funnel::new(2).unwrap())),
        ("funnel5", Box::new(Funnel::new(5).unwrap())),
        ("gauss3", Box::new(CorrelatedGaussian::new(3, 0.6).unwrap())),
    ];
    let (mut inv_err, mut det_err) = (0.0f64, 0.0f64);
    let mut slopes = Vec::new();
    for (name, model) in &models {
        let dim = model.dim();
        let mut points = Vec::new();
        let mass = MassMatrix::identity(dim);
        let sched = StageSchedule::new(0.9, 4.0, StepCount::Fixed(1)).unwrap();
        for _ in 0..20 {
            let x = normal(&mut rng);
            let mut pos: Vec<f64> = (0..dim).map(|_| normal(&mut rng)).collect();
            pos[0] = x;
            let z = PhasePoint::new(pos, (0..dim).map(|_| normal(&mut rng)).collect());
            for k in 1..=3 {
                let map = |v: &[f64]| flat(&proposal_map(model.as_ref(), &unflat(v), k, &sched, &mass).point);
                let y = proposal_map(model.as_ref(), &z, k, &sched, &mass).point;
                let back = proposal_map(model.as_ref(), &y, k, &sched, &mass).point;
                inv_err = inv_err.max(back.max_abs_diff(&z));
                let base = flat(&z);
                let n = base.len();
                let h = 1e-5;
                let mut jac = DMatrix::zeros(n, n);
                for j in 0..n {
                    let mut a = base.clone();
                    let mut b = base.clone();
                    a[j] += h;
                    b[j] -= h;
                    let (fa, fb) = (map(&a), map(&b));
                    for i in 0..n {
                        jac[(i, j)] = (fa[i] - fb[i]) / (2.0 * h);
                    }
                }
                det_err = det_err.max((jac.determinant().abs() - 1.0).abs());
            }
            points.push(z);
        }
        slopes.push((*name, energy_slope(model.as_ref(), &points)));
    }
    let slope_ok = slopes.iter().all(|(_, s)| (s - 3.0).abs() <= 0.2);
    let shown: Vec<String> = slopes.iter().map(|(n, s)| format!("{n} {s:.3}")).collect();
    let pass = inv_err < 1e-10 && det_err < 1e-4 && slope_ok;
    (
        pass,
        format!(
            "involution max err {inv_err:.2e} (<1e-10), ||det J| - 1| max {det_err:.2e} (<1e-4), energy slopes {} (3 +/- 0.2)",
            shown.join(", ")
        ),
    )
}

// ---------------------------------------------------------------- 4

fn criterion_4() -> (bool, String) {
    let model = Funnel::new(5).unwrap();
    let mass = MassMatrix::identity(5);
    let dr = DrGhmcConfig {
        max_proposals: 1,
        damping: 1.0,
        step_size: 0.6,
        reduction: 4.0,
        steps: 1,
        mass: mass.clone(),
        seed: 4,
    };
    let hmc = HmcConfig { step_size: 0.6, steps: 1, mass: mass.clone(), seed: 4 };
    let mut r1 = chain_rng(4, 0);
    let mut r2 = chain_rng(4, 0);
    let start = PhasePoint::new(vec![0.3, -0.2, 0.1, 0.5, -0.4], sample_momentum(&mass, &mut chain_rng(4, 9)));
    let (mut a, mut b) = (start.clone(), start);
    let (mut mismatches, mut accepts) = (0, 0);
    for _ in 0..10_000 {
        let oa = drghmc_step(&model, &a, &dr, &mut r1);
        let ob = hmc_step(&model, &b, &hmc, &mut r2);
        if oa.accepted_stage.is_some() != ob.accepted_stage.is_some() || oa.next.position != ob.next.position {
            mismatches += 1;
        }
        accepts += usize::from(oa.accepted_stage.is_some());
        a = oa.next;
        b = ob.next;
    }
    (
        mismatches == 0 && accepts > 0 && accepts < 10_000,
        format!("{mismatches} mismatched decisions in 10^4 iterations ({accepts} accepts)"),
    )
}

// ---------------------------------------------------------------- 5

/// Direct transcription of the acceptance recursion with no caching: every
/// ghost and denominator probability is recomputed from scratch.
fn naive_log_alpha(
    model: &Funnel,
    sched: &StageSchedule,
    mass: &MassMatrix,
    z: &PhasePoint,
    k: usize,
) -> f64 {
    let flow = proposal_map(model, z, k, sched, mass);
    if flow.divergent {
        return f64::NEG_INFINITY;
    }
    let y = flow.point;
    let (hz, hy) = (hamiltonian(model, z, mass), hamiltonian(model, &y, mass));
    if !hy.is_finite() {
        return f64::NEG_INFINITY;
    }
    let log1m = |la: f64| if la == f64::NEG_INFINITY { 0.0 } else { (-la.exp_m1()).ln() };
    let mut log_ratio = hz - hy;
    for i in 1..k {
        let num = naive_log_alpha(model, sched, mass, &y, i);
        let den = naive_log_alpha(model, sched, mass, z, i);
        if -den.exp_m1() < 1e-15 {
            return f64::NEG_INFINITY;
        }
        log_ratio += log1m(num) - log1m(den);
    }
    if log_ratio.is_nan() {
        f64::NEG_INFINITY
    } else {
        log_ratio.min(0.0)
    }
}

fn criterion_5() -> (bool, String) {
    let model = Funnel::new(10).unwrap();
    let mass = MassMatrix::identity(10);
    let mut rng = chain_rng(51, 0);
    let mut worst = 0.0f64;
    let mut positive = 0;
    let mut failures = Vec::new();
    for s in 0..1000 {
        let eps = (rng.random_range((0.1f64).ln()..(3.0f64).ln())).exp();
        let sched = StageSchedule::new(eps, 4.0, StepCount::Fixed(1)).unwrap();
        let x = 2.0 * normal(&mut rng);
        let pos: Vec<f64> = (0..10)
            .map(|d| if d == 0 { x } else { (0.5 * x).exp() * normal(&mut rng) })
            .collect();
        let z = PhasePoint::new(pos, (0..10).map(|_| normal(&mut rng)).collect());
        let mut stack = ProposalStack::new(&model, &sched, &mass, z.clone());
        for k in 1..=4 {
            let cached = stack.accept_prob(k);
            let naive = naive_log_alpha(&model, &sched, &mass, &z, k).exp();
            if cached > 0.0 {
                positive += 1;
            }
            if !rel_close(cached, naive, 1e-12) {
                failures.push(format!("state {s} k={k}: {cached:e} vs {naive:e}"));
            }
            if cached != naive {
                worst = worst.max((cached - naive).abs() / cached.abs().max(naive.abs()));
            }
        }
    }
    failures.truncate(5);
    (
        failures.is_empty(),
        format!(
            "max rel diff {worst:.2e} (<1e-12) over 4000 (state, k) pairs, {positive} with alpha > 0{}",
            if failures.is_empty() { String::new() } else { format!("; {}", failures.join("; ")) }
        ),
    )
}

// ---------------------------------------------------------------- 6, 7

fn funnel_config(sampler: SamplerKind) -> ExperimentConfig {
    ExperimentConfig {
        model: "funnel".into(),
        dimension: Some(10),
        sampler,
        chains: 20,
        budget: 100_000,
        seed: 2024,
        ..Default::default()
    }
}

fn funnel_reference_set() -> ReferenceSet {
    make_reference(&funnel_config(SamplerKind::DrGhmc), 100_000, None).unwrap().set
}

fn criterion_6(reference: &ReferenceSet) -> (bool, String) {
    let run = sample(&funnel_config(SamplerKind::DrGhmc), Some(reference), false).unwrap();
    let columns: Vec<Vec<f64>> = run.chains.iter().map(|c| c.column(0)).collect();
    let pooled: Vec<f64> = columns.iter().flatten().copied().collect();
    let below = pooled.iter().filter(|&&x| x < -5.0).count() as f64 / pooled.len() as f64;

    let n = columns.iter().map(Vec::len).min().unwrap();
    let refs: Vec<&[f64]> = columns.iter().map(|c| &c[..n]).collect();
    let tau = integrated_autocorr_time(&refs).unwrap();
    let thin = thinning_interval(tau);
    let thinned: Vec<f64> = columns.iter().flat_map(|c| c.iter().step_by(thin).copied()).collect();
    let target = Normal::new(0.0, 3.0).unwrap();
    let chi = chi_square_gof(&thinned, |p| target.inverse_cdf(p), 40).unwrap();
    (
        below >= 0.01 && chi.p_value > 0.001,
        format!(
            "{:.2}% of {} pooled draws below x=-5 (>=1%); chi-square on {} draws thinned by {thin} (tau {tau:.1}): stat {:.1}, p = {:.4} (>0.001)",
            100.0 * below,
            pooled.len(),
            thinned.len(),
            chi.statistic,
            chi.p_value
        ),
    )
}

fn last_decade_slope(curve: &[f64], grid: &[u64]) -> f64 {
    let t = *grid.last().unwrap() as f64;
    let pts: Vec<(f64, f64)> = grid
        .iter()
        .zip(curve)
        .filter(|(g, _)| **g as f64 >= t / 10.0 - 0.5)
        .map(|(g, v)| ((*g as f64).ln(), v.ln()))
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

fn criterion_7(reference: &ReferenceSet) -> (bool, String) {
    let mut grid = budget_grid(100_000, 50);
    grid.push(10_000);
    grid.sort_unstable();
    let mut medians = Vec::new();
    let mut details = Vec::new();
    let mut trend_ok = true;
    for kind in [SamplerKind::DrGhmc, SamplerKind::DrHmc] {
        let run = sample(&funnel_config(kind), Some(reference), false).unwrap();
        let reports: Vec<ErrorReport> = run
            .chains
            .iter()
            .enumerate()
            .map(|(i, c)| error_curve(c, i, reference, &grid).unwrap())
            .collect();
        let finals: Vec<f64> = reports.iter().map(|r| r.last(Moment::Square)).collect();
        let median = quantile(&finals, 0.5).unwrap();
        let mean = mean_of_errors(&reports).unwrap();
        let curve = mean.values(Moment::Square);
        let at = |b: u64| curve[grid.iter().position(|&g| g == b).unwrap()];
        let (start, end) = (at(10_000), at(100_000));
        let slope = last_decade_slope(curve, &grid);
        trend_ok &= end < start && slope < 0.0;
        details.push(format!(
            "{kind}: median {median:.4}, mean curve {start:.4} at 1e4 -> {end:.4} at 1e5 (log-log slope {slope:.3})"
        ));
        medians.push(median);
    }
    (medians[0] < medians[1] && trend_ok, details.join("; "))
}

// ---------------------------------------------------------------- 8

fn criterion_8() -> (bool, String) {
    let funnel = Funnel::new(10).unwrap();
    let xs: Vec<f64> = (0..13).map(|i| -6.0 + i as f64).collect();
    let points: Vec<(f64, f64)> = xs.iter().map(|&x| (x, 0.0)).collect();
    let opts = ProbeOptions { seed: 8, ..ProbeOptions::default() };
    assert_eq!((opts.step_size, opts.reduction, opts.max_proposals, opts.trials), (2.0, 4.0, 10, 100));
    let rows = probe_accepted_step_size(&funnel, &points, &opts).unwrap();
    let kept: Vec<(f64, f64)> =
        rows.iter().filter(|r| r.accepted > 0).map(|r| (r.x, r.mean_accepted_step)).collect();
    let (x, eps): (Vec<f64>, Vec<f64>) = kept.iter().copied().unzip();
    let rho = spearman(&x, &eps).unwrap();
    let fmt: Vec<String> = kept.iter().map(|(x, e)| format!("{x}:{e:.3}")).collect();
    (
        rho > 0.8 && kept.len() == rows.len(),
        format!("Spearman {rho:.3} (>0.8) over {} points [{}]", kept.len(), fmt.join(" ")),
    )
}

// ---------------------------------------------------------------- 9

fn criterion_9() -> (bool, String) {
    let base = ExperimentConfig {
        model: "eight_schools".into(),
        chains: 10,
        budget: 10_000,
        seed: 9,
        ..Default::default()
    };
    let reference = make_reference(&base, 10_000, Some(&cache_root())).unwrap().set;
    let mut medians = Vec::new();
    let mut iqr_mid = f64::NAN;
    let mut parts = Vec::new();
    for gamma in [0.01, 0.08, 0.2] {
        let mut cfg = base.clone();
        cfg.damping = gamma;
        let run = sample(&cfg, Some(&reference), false).unwrap();
        let m = compute_metrics(&run.chains, &reference, cfg.budget, 50, Default::default()).unwrap();
        medians.push(m.summary_theta.median);
        if gamma == 0.08 {
            iqr_mid = m.summary_theta.iqr();
        }
        parts.push(format!("gamma {gamma}: median {:.4} IQR {:.4}", m.summary_theta.median, m.summary_theta.iqr()));
    }
    let range = medians.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        - medians.iter().copied().fold(f64::INFINITY, f64::min);
    (
        range < iqr_mid,
        format!("range of medians {range:.4} vs IQR at 0.08 {iqr_mid:.4} (range must be smaller); {}", parts.join("; ")),
    )
}

// ---------------------------------------------------------------- 10

fn criterion_10() -> (bool, String) {
    let mut worst = (0.0f64, "");
    for &name in MODEL_NAMES.iter() {
        let opts = if name == "gaussian" {
            ModelOptions { dimension: Some(4), data: Some(drghmc::model::DatasetBundle::Normal { rho: 0.7 }) }
        } else {
            ModelOptions::default()
        };
        let model = build_model(name, opts).unwrap();
        let dim = model.dim();
        let mut rng = chain_rng(10, 0);
        for _ in 0..20 {
            let theta: Vec<f64> = (0..dim).map(|_| 0.5 * normal(&mut rng)).collect();
            let mut grad = vec![0.0; dim];
            model.log_density_grad(&theta, &mut grad);
            let mut fd = vec![0.0; dim];
            let mut t = theta.clone();
            for d in 0..dim {
                let h = 1e-4 * theta[d].abs().max(1.0);
                let mut f = |delta: f64| {
                    t[d] = theta[d] + delta;
                    model.log_density(&t)
                };
                fd[d] = (-f(2.0 * h) + 8.0 * f(h) - 8.0 * f(-h) + f(-2.0 * h)) / (12.0 * h);
                t[d] = theta[d];
            }
            let num: f64 = fd.iter().zip(&grad).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let den: f64 = grad.iter().map(|g| g * g).sum::<f64>().sqrt().max(1e-12);
            if num / den > worst.0 {
                worst = (num / den, name);
            }
        }
    }
    (
        worst.0 < 1e-5,
        format!("max relative gradient error {:.2e} ({}) over {} models x 20 points (<1e-5)", worst.0, worst.1, MODEL_NAMES.len()),
    )
}

// ---------------------------------------------------------------- 11

fn run_cli(args: &[&str]) {
    let mut full = vec!["drghmc-bench"];
    full.extend_from_slice(args);
    drghmc_bench::run(Cli::parse_from(full)).unwrap();
}

fn files_under(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(dir).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn criterion_11() -> (bool, String) {
    let roots = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for root in &roots {
        let r = root.path();
        let p = |s: &str| r.join(s).display().to_string();
        run_cli(&["sample", "--chains", "2", "--budget", "10000", "--set", "dimension=10", "--out", &p("sample")]);
        run_cli(&["reference", "--model", "funnel", "--draws", "5000", "--out", &p("ref")]);
        run_cli(&[
            "reference", "--model", "eight_schools", "--draws", "400", "--seed", "3",
            "--cache", &p("cache"), "--out", &p("ref8"),
        ]);
        run_cli(&["metrics", "--run", &p("sample"), "--reference", &p("ref"), "--out", &p("metrics")]);
        run_cli(&[
            "sweep", "--model", "funnel", "--chains", "2", "--budget", "5000", "--param", "gamma",
            "--values", "0.04,0.08", "--set", &format!("reference={}", p("ref")), "--out", &p("sweep"),
        ]);
        run_cli(&["figure", "stepsize_map", "--grid", "3", "--trials", "10", "--out", &p("fig")]);
        run_cli(&["figure", "condition_field", "--grid", "3", "--out", &p("fig")]);
        run_cli(&["figure", "funnel_hist", "--chains", "2", "--budget", "5000", "--out", &p("fig")]);
        run_cli(&[
            "figure", "error_curves", "--chains", "2", "--budget", "5000", "--samplers", "drghmc,hmc",
            "--set", &format!("reference={}", p("ref")), "--out", &p("fig"),
        ]);
    }
    let (a, b) = (roots[0].path(), roots[1].path());
    let files_a: Vec<PathBuf> = files_under(a).into_iter().filter(|f| !f.starts_with("cache")).collect();
    let files_b: Vec<PathBuf> = files_under(b).into_iter().filter(|f| !f.starts_with("cache")).collect();
    let mut diffs = Vec::new();
    if files_a != files_b {
        diffs.push("file lists differ".to_string());
    }
    for f in &files_a {
        let (x, y) = (fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap_or_default());
        // manifests echo paths that differ between the two roots
        let normalize = |bytes: Vec<u8>, root: &Path| {
            String::from_utf8(bytes).unwrap().replace(&root.display().to_string(), "<root>")
        };
        if normalize(x, a) != normalize(y, b) {
            diffs.push(f.display().to_string());
        }
    }
    (
        diffs.is_empty() && files_a.len() > 20,
        format!("{} files compared across two reruns, {} differ {:?}", files_a.len(), diffs.len(), diffs),
    )
}

// ----------------------------------------------------------------

fn main() {
    let started = Instant::now();
    let mut failed = 0;
    let mut report = |id: u32, title: &str, f: &mut dyn FnMut() -> (bool, String)| {
        let t = Instant::now();
        let (pass, detail) = match catch_unwind(AssertUnwindSafe(&mut *f)) {
            Ok(r) => r,
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_else(|| "panic".into());
                (false, format!("panicked: {msg}"))
            }
        };
        if !pass {
            failed += 1;
        }
        println!(
            "{} criterion {id:>2} {title}: {detail} [{:.1}s]",
            if pass { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64()
        );
    };
    report(1, "one-step stationarity", &mut criterion_1);
    report(2, "detailed balance identity", &mut criterion_2);
    report(3, "involution, volume, energy order", &mut criterion_3);
    report(4, "degenerate HMC equivalence", &mut criterion_4);
    report(5, "cached vs uncached acceptance", &mut criterion_5);
    let reference = funnel_reference_set();
    report(6, "funnel tail coverage", &mut || criterion_6(&reference));
    report(7, "error-curve ordering", &mut || criterion_7(&reference));
    report(8, "step-size map trend", &mut criterion_8);
    report(9, "damping robustness", &mut criterion_9);
    report(10, "finite-difference gradients", &mut criterion_10);
    report(11, "byte-identical reruns", &mut criterion_11);
    println!(
        "acceptance: {} passed, {failed} failed in {:.1}s",
        11 - failed,
        started.elapsed().as_secs_f64()
    );
    if failed > 0 && std::env::var_os("ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}
