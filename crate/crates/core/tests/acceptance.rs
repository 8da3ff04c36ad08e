//! Acceptance suite: one PASS/FAIL line per criterion. Exits nonzero if any
//! criterion fails.

use std::sync::Arc;
use std::time::Instant;

use nse3d::diagnostics::{
    determining_oracle, determining_wavenumber, grashof, intermittency_dimension,
    pointwise_estimate_check, single_block_dimension, split_windows, window_stats,
    DeterminingParams, Diagnostics, DiagnosticsRecord, GrashofMode, ShellAverages, WindowContext,
    WindowStats,
};
use nse3d::lp::{covering_shell, partition_residual, Lattice, LittlewoodPaley};
use nse3d::solver::{
    energy_budget, random_field, regrid, run, shear_mode, taylor_green, viscous_decay,
    BudgetReport, ForcingSpec, RunEvent, SolverConfig, Stepper, BUDGET_RTOL,
};
use nse3d::sync::{
    decay_fit, perturb, pointwise_decay_check, DecayOutcome, Enforcement, Perturbation, SyncConfig,
    SyncHarness,
};
use nse3d::{Spectral, SpectralVelocity, TorusGrid};
use rustfft::num_complex::Complex64;

const DELTA: f64 = 0.5;
const C0: f64 = 100.0;

fn spectral(n: usize) -> Arc<Spectral> {
    Arc::new(Spectral::new(TorusGrid::new(n, 1.0).unwrap()))
}

fn lp(n: usize) -> Arc<LittlewoodPaley> {
    Arc::new(LittlewoodPaley::new(spectral(n)))
}

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

/// Random fields with a spread of peaks and amplitudes; every other one is a
/// sum of a low- and a high-peaked field so several shells are populated.
fn sample_fields(sp: &Spectral, count: usize, seed: u64) -> Vec<SpectralVelocity> {
    let cutoff = sp.grid().dealias_cutoff() as f64;
    (0..count)
        .map(|i| {
            let s = seed + 7 * i as u64;
            let frac = i as f64 / count as f64;
            let energy = 10f64.powf(-3.0 + 6.0 * ((i * 37) % count) as f64 / count as f64);
            let a = random_field(sp, s, 1.0 + (cutoff - 1.0) * frac, energy);
            if i % 2 == 0 {
                a
            } else {
                let b = random_field(sp, s + 1, cutoff, 0.1 * energy);
                a.sum(&b).unwrap()
            }
        })
        .collect()
}

fn criterion_1() -> Verdict {
    let mut worst_pu = 0.0_f64;
    for n in [16, 32, 64] {
        let g = TorusGrid::new(n, 1.0).unwrap();
        worst_pu = worst_pu.max(partition_residual(
            g,
            covering_shell(g.max_resolved_modulus()),
            Lattice::Resolved,
        ));
    }
    let lp = lp(32);
    let mut worst_rec = 0.0_f64;
    for u in sample_fields(lp.spectral(), 100, 1) {
        let dec = lp.decompose(&u);
        let mut sum = SpectralVelocity::zeros(lp.grid());
        for b in &dec.blocks {
            sum = sum.sum(b).unwrap();
        }
        worst_rec = worst_rec.max(sum.difference(&u).unwrap().l2_norm() / u.l2_norm());
    }
    verdict(
        worst_pu <= 1e-12 && worst_rec <= 1e-12,
        format!("partition residual {worst_pu:.2e}, reconstruction residual {worst_rec:.2e}"),
    )
}

fn criterion_2() -> Verdict {
    let lp = lp(32);
    let cal = lp.calibrate_bernstein(&lp.extremal_samples()).unwrap();
    let mut blocks = 0;
    let mut violations = 0;
    for u in sample_fields(lp.spectral(), 100, 1000) {
        for n in lp.shell_norms(&u) {
            if n.l2 == 0.0 {
                continue;
            }
            blocks += 1;
            let s = lp.sandwich(&n, cal.c_b);
            if !(s.lower_ok && s.upper_ok) {
                violations += 1;
            }
        }
    }
    verdict(
        violations == 0 && blocks > 0,
        format!(
            "C_B = {:.4}, {blocks} blocks, {violations} violations",
            cal.c_b
        ),
    )
}

fn forced_linear_error(dt: f64) -> f64 {
    let sp = spectral(16);
    let nu = 0.1;
    let mut cfg = SolverConfig::new(sp.grid(), nu, dt);
    cfg.forcing = ForcingSpec::Kolmogorov {
        amplitude: 0.02,
        wavenumber: 1,
    };
    let st = Stepper::new(sp.clone(), &cfg).unwrap();
    let mut s = st.start(shear_mode(&sp, 0.01, 1)).unwrap();
    for _ in 0..(1.0 / dt).round() as usize {
        st.step(&mut s).unwrap();
    }
    let rate = nu * sp.grid().kappa0().powi(2);
    let e = (-rate * s.time()).exp();
    let exact = e * -0.005 + (1.0 - e) * -0.01 / rate;
    (s.u.at([0, 1, 0])[0] - Complex64::new(0.0, exact)).norm() / exact.abs()
}

fn criterion_3() -> Verdict {
    let sp = spectral(32);
    let st = Stepper::new(sp.clone(), &SolverConfig::new(sp.grid(), 0.1, 1e-3)).unwrap();
    let mut s = st.start(shear_mode(&sp, 1.0, 1)).unwrap();
    let mut worst = 0.0_f64;
    for _ in 0..1000 {
        st.step(&mut s).unwrap();
        let want = -0.5 * viscous_decay(sp.grid(), 0.1, 1.0, s.time());
        worst = worst.max((s.u.at([0, 1, 0])[0] - Complex64::new(0.0, want)).norm() / want.abs());
    }
    let errs: Vec<f64> = [0.1, 0.05, 0.025]
        .iter()
        .map(|&dt| forced_linear_error(dt))
        .collect();
    let order = errs
        .windows(2)
        .map(|w| (w[0] / w[1]).log2())
        .fold(f64::INFINITY, f64::min);
    verdict(
        worst <= 1e-10 && order >= 2.7,
        format!("shear decay error {worst:.2e}, temporal order {order:.3}"),
    )
}

fn unforced_budget() -> (f64, usize) {
    let sp = spectral(32);
    let nu = 0.05;
    let cfg = SolverConfig::new(sp.grid(), nu, 2e-3);
    let st = Stepper::new(sp.clone(), &cfg)
        .unwrap()
        .with_history_capacity(1000);
    let mut s = st.start(taylor_green(&sp, 1.0)).unwrap();
    let mut worst = 0.0_f64;
    let mut windows = 0;
    for i in 1..=500 {
        st.step(&mut s).unwrap();
        if i % 125 == 0 {
            let t1 = s.time();
            let r = energy_budget(&s.history, nu, t1 - 0.25, t1).unwrap();
            worst = worst.max(r.relative_residual());
            windows += 1;
        }
    }
    (worst, windows)
}

/// One forced N = 32 run with its post-transient windows.
struct ForcedRun {
    nu: f64,
    window: f64,
    transient: f64,
    windows: Vec<WindowStats>,
    window_errors: Vec<String>,
    budgets: Vec<BudgetReport>,
    first_window: Vec<SpectralVelocity>,
    final_state: Option<SpectralVelocity>,
    error: Option<String>,
    secs: f64,
}

fn forced_run(nu: f64, amplitude: f64, dt: f64, stride: u64, window: f64, c_b: f64) -> ForcedRun {
    let start = Instant::now();
    let sp = spectral(32);
    let g = sp.grid();
    let lp = Arc::new(LittlewoodPaley::new(sp.clone()));
    let diag = Diagnostics::new(lp.clone(), DeterminingParams::new(nu, DELTA, C0).unwrap());
    let mut cfg = SolverConfig::new(g, nu, dt);
    cfg.forcing = ForcingSpec::Abc { amplitude };
    cfg.delta = DELTA;
    cfg.c0 = C0;
    cfg.window_t = window;
    cfg.diag_stride = stride;
    let rec_dt = dt * stride as f64;
    let transient = (cfg.transient_time() / rec_dt - 1e-9).ceil() * rec_dt;
    cfg.transient = Some(transient);
    cfg.t_end = transient + 2.0 * window;
    let stepper = Stepper::new(sp.clone(), &cfg).unwrap();
    let eps = 1e-9 * window;
    let mut records: Vec<DiagnosticsRecord> = Vec::new();
    let mut budgets = Vec::new();
    let mut first_window = Vec::new();
    let mut next_budget = transient + window;
    let result = run(
        &cfg,
        &stepper,
        &diag,
        random_field(&sp, 1, 3.0, 1.0),
        &mut |ev| {
            if let RunEvent::Record { state, record } = ev {
                let t = record.t;
                if t >= transient - eps && t <= transient + window + eps {
                    first_window.push(state.u.clone());
                }
                if t >= next_budget - eps {
                    budgets.push(energy_budget(&state.history, nu, t - window, t)?);
                    next_budget += window;
                }
                records.push(record.clone());
            }
            Ok(())
        },
    );
    let g_num = grashof(&lp, stepper.forcing(), nu, GrashofMode::Autonomous).unwrap();
    let ctx = WindowContext {
        grid: g,
        nu,
        c_b,
        g: g_num,
    };
    let mut windows = Vec::new();
    let mut window_errors = Vec::new();
    for w in split_windows(&records, transient, window) {
        match window_stats(&ctx, w) {
            Ok(s) => windows.push(s),
            Err(e) => window_errors.push(e.to_string()),
        }
    }
    let (final_state, error) = match result {
        Ok(s) => (Some(s.u), None),
        Err(e) => (None, Some(e.to_string())),
    };
    ForcedRun {
        nu,
        window,
        transient,
        windows,
        window_errors,
        budgets,
        first_window,
        final_state,
        error,
        secs: start.elapsed().as_secs_f64(),
    }
}

fn run_ok(r: &ForcedRun) -> bool {
    r.error.is_none() && r.window_errors.is_empty() && r.windows.len() == 2
}

fn run_status(r: &ForcedRun) -> String {
    let mut s = format!(
        "nu = {}: {} windows of T = {} after t = {:.3} ({:.0} s)",
        r.nu,
        r.windows.len(),
        r.window,
        r.transient,
        r.secs
    );
    if let Some(e) = &r.error {
        s += &format!(", run failed: {e}");
    }
    for e in &r.window_errors {
        s += &format!(", window failed: {e}");
    }
    s
}

fn criterion_4(runs: &[ForcedRun]) -> Verdict {
    let (worst, n) = unforced_budget();
    let mut ok = worst <= BUDGET_RTOL && n == 4;
    let mut detail = format!("unforced worst relative residual {worst:.2e} over {n} windows");
    for r in runs {
        let forced_ok = r.error.is_none()
            && r.budgets.len() == 2
            && r.budgets.iter().all(|b| b.within_tolerance());
        ok &= forced_ok;
        let worst = r
            .budgets
            .iter()
            .map(|b| b.relative_residual())
            .fold(0.0, f64::max);
        detail += &format!(
            "; forced nu = {}: {} windows, worst {worst:.2e}",
            r.nu,
            r.budgets.len()
        );
    }
    verdict(ok, detail)
}

fn criterion_5(runs: &[ForcedRun]) -> Verdict {
    let lp = lp(32);
    let grid = lp.grid();
    let mut fields: Vec<(SpectralVelocity, DeterminingParams)> = Vec::new();
    let p_random = DeterminingParams::new(0.1, DELTA, 1.0).unwrap();
    for u in sample_fields(lp.spectral(), 50, 5000) {
        fields.push((u, p_random));
    }
    for r in runs {
        let p = DeterminingParams::new(r.nu, DELTA, C0).unwrap();
        for u in r.first_window.iter().step_by(10).take(5) {
            fields.push((u.clone(), p));
        }
    }
    let mut mismatches = 0;
    let mut witness_failures = 0;
    let mut q_seen = std::collections::BTreeSet::new();
    let mut unresolved = 0;
    for (u, p) in &fields {
        let fast = determining_wavenumber(&lp, u, p);
        let slow = determining_oracle(grid, u.field(), p);
        match (&fast, &slow) {
            (Ok(a), Ok(b)) if a == b => {
                q_seen.insert(a.q);
                if !pointwise_estimate_check(&lp, u, p, *a).witness_holds() {
                    witness_failures += 1;
                }
            }
            (Err(_), Err(_)) => unresolved += 1,
            _ => mismatches += 1,
        }
    }
    let snapshots = fields.len() - 50;
    verdict(
        mismatches == 0 && witness_failures == 0 && snapshots == 10,
        format!(
            "{} fields ({snapshots} snapshots), {mismatches} mismatches, {witness_failures} witness failures, Q values {:?}, {unresolved} unresolved in both",
            fields.len(),
            q_seen
        ),
    )
}

fn criterion_6(runs: &[ForcedRun], c_b: f64) -> Verdict {
    let lp = lp(32);
    let grid = lp.grid();
    let diag = Diagnostics::new(lp.clone(), DeterminingParams::new(0.1, DELTA, C0).unwrap());
    let l0 = grid.lambda0();

    // zero trajectory
    let zero = SpectralVelocity::zeros(grid);
    let recs: Vec<DiagnosticsRecord> = (0..3)
        .map(|i| diag.record(&zero.clone().with_time(i as f64)))
        .collect();
    let d_zero = intermittency_dimension(&ShellAverages::from_records(&recs).unwrap(), c_b, l0);

    // range on every window
    let all: Vec<f64> = runs
        .iter()
        .flat_map(|r| r.windows.iter().map(|w| w.d))
        .collect();
    let in_range = !all.is_empty() && all.iter().all(|d| (0.0..=3.0).contains(d));

    // amplitude invariance on the first window of each run
    let mut worst_amp = 0.0_f64;
    for r in runs {
        let d_at = |a: f64| {
            let recs: Vec<DiagnosticsRecord> = r
                .first_window
                .iter()
                .map(|u| diag.record(&u.scaled(a)))
                .collect();
            intermittency_dimension(&ShellAverages::from_records(&recs).unwrap(), c_b, l0)
        };
        if r.first_window.len() < 2 {
            worst_amp = f64::INFINITY;
            continue;
        }
        let d1 = d_at(1.0);
        for a in [1e-3, 0.5, 7.0] {
            worst_amp = worst_amp.max((d_at(a) - d1).abs());
        }
    }

    // single populated block: a shear mode at |k| = 2^q sits where phi_q = 1
    let mut worst_single = 0.0_f64;
    for q in 0..=3 {
        let u = shear_mode(lp.spectral(), 0.3, 1 << q);
        let recs: Vec<DiagnosticsRecord> = (0..2)
            .map(|i| diag.record(&u.clone().with_time(i as f64)))
            .collect();
        let avg = ShellAverages::from_records(&recs).unwrap();
        let i = (q + 1) as usize;
        let others = avg
            .l2_sq
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, v)| *v)
            .fold(0.0, f64::max);
        let want = single_block_dimension(avg.lambda[i], avg.linf_sq[i], avg.l2_sq[i], c_b, l0);
        let got = intermittency_dimension(&avg, c_b, l0);
        let err = if others == 0.0 && want > 0.0 && want < 3.0 {
            (got - want).abs()
        } else {
            f64::INFINITY
        };
        worst_single = worst_single.max(err);
    }

    verdict(
        d_zero == 3.0 && in_range && worst_amp <= 1e-6 && worst_single <= 1e-6,
        format!(
            "zero trajectory d = {d_zero}, {} window d values in [{:.4}, {:.4}], amplitude drift {worst_amp:.1e}, single-block error {worst_single:.1e}",
            all.len(),
            all.iter().copied().fold(f64::INFINITY, f64::min),
            all.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        ),
    )
}

fn criterion_7(runs: &[ForcedRun]) -> Verdict {
    let mut ok = runs.iter().all(run_ok);
    let mut detail = String::new();
    for r in runs {
        let e = r
            .windows
            .iter()
            .map(|w| w.enstrophy_bound.consistent.margin)
            .fold(f64::INFINITY, f64::min);
        let ev = r
            .windows
            .iter()
            .map(|w| w.enstrophy_bound.verbatim.margin)
            .fold(f64::INFINITY, f64::min);
        let k = r
            .windows
            .iter()
            .map(|w| w.kappa_bound.consistent.margin)
            .fold(f64::INFINITY, f64::min);
        let kv = r
            .windows
            .iter()
            .map(|w| w.kappa_bound.verbatim.margin)
            .fold(f64::INFINITY, f64::min);
        ok &= r.windows.iter().all(|w| {
            w.enstrophy_bound.consistent.holds
                && w.enstrophy_bound.verbatim.holds
                && w.kappa_bound.consistent.holds
                && w.kappa_bound.verbatim.holds
        });
        detail += &format!(
            "[{}; min margins enstrophy {e:.3} (as printed {ev:.3}), kappa_d {k:.3} (as printed {kv:.3})] ",
            run_status(r)
        );
    }
    verdict(ok, detail.trim_end())
}

fn criterion_8(run05: &ForcedRun) -> Verdict {
    let Some(u32_final) = &run05.final_state else {
        return verdict(false, "no spun-up state from the nu = 0.05 run");
    };
    let nu = 0.05;
    let sp = spectral(64);
    let lp = Arc::new(LittlewoodPaley::new(sp.clone()));
    let diag = Diagnostics::new(lp.clone(), DeterminingParams::new(nu, DELTA, C0).unwrap());
    let mut cfg = SolverConfig::new(sp.grid(), nu, 2e-4);
    cfg.forcing = ForcingSpec::Abc { amplitude: 20.0 };
    let stepper = Stepper::new(sp.clone(), &cfg)
        .unwrap()
        .with_history_capacity(4);
    let mut st = stepper.start(regrid(u32_final, &sp).unwrap()).unwrap();
    // let the refined grid fill its new shells
    for _ in 0..250 {
        if let Err(e) = stepper.step(&mut st) {
            return verdict(false, format!("N = 64 spin-up failed: {e}"));
        }
    }
    let u0 = st.u.with_time(0.0);
    let sync_cfg =
        SyncConfig::new(nu, DELTA, Perturbation::default(), Enforcement::Adaptive).unwrap();
    let harness = SyncHarness::new(&stepper, &diag, &sync_cfg);
    let v0 = perturb(&diag, &u0, &sync_cfg.perturbation);
    let result = harness.run(
        stepper.start(u0.clone()).unwrap(),
        stepper.start(v0).unwrap(),
        500,
        &mut |_| Ok(()),
    );
    let (_, records) = match result {
        Ok(r) => r,
        Err(e) => return verdict(false, format!("sync run failed: {e}")),
    };
    let rate = sync_cfg.bound_rate(sp.grid().kappa0());
    let t0 = records[0].t;
    let point = pointwise_decay_check(&records, t0, rate, sync_cfg.noise_floor).unwrap();
    let fit = decay_fit(&records, t0, rate, sync_cfg.noise_floor);
    let injection = records
        .iter()
        .map(|r| r.injection.abs())
        .fold(0.0, f64::max);
    let qs: std::collections::BTreeSet<i32> = records.iter().map(|r| r.q).collect();

    // identical trajectories
    let control = harness.run(
        stepper.start(u0.clone()).unwrap(),
        stepper.start(u0).unwrap(),
        25,
        &mut |_| Ok(()),
    );
    let control_max = match &control {
        Ok((_, recs)) => recs.iter().map(|r| r.w_hs / r.u_hs).fold(0.0, f64::max),
        Err(_) => f64::INFINITY,
    };
    let fit_ok = fit.as_ref().is_ok_and(|f| f.passes());
    let fit_text = match &fit {
        Ok(DecayOutcome::Fitted {
            fitted_rate,
            margin,
            ..
        }) => {
            format!("fitted rate {fitted_rate:.4} (margin {margin:.3})")
        }
        Ok(DecayOutcome::NoiseFloor) => "at noise floor".to_string(),
        Err(e) => format!("fit failed: {e}"),
    };
    verdict(
        point.passes && fit_ok && control_max <= sync_cfg.noise_floor,
        format!(
            "{} records, Q in {qs:?}, bound rate {rate:.4}, worst pointwise margin {:.4} over {} records, {fit_text}, \
             control max |w|/|u| {control_max:.1e}, max relative injection {injection:.2e}",
            records.len(),
            point.worst_margin,
            point.checked,
        ),
    )
}

fn criterion_9(runs: &[ForcedRun]) -> Verdict {
    let c: Vec<f64> = runs
        .iter()
        .flat_map(|r| r.windows.iter().map(|w| w.c_emp))
        .collect();
    let finite = !c.is_empty() && c.iter().all(|x| x.is_finite() && *x > 0.0);
    let lo = c.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = c.iter().copied().fold(0.0, f64::max);
    let per_run: Vec<String> = runs
        .iter()
        .map(|r| {
            let v: Vec<String> = r
                .windows
                .iter()
                .map(|w| format!("{:.4}", w.c_emp))
                .collect();
            format!("nu = {}: [{}]", r.nu, v.join(", "))
        })
        .collect();
    verdict(
        finite && runs.iter().all(run_ok) && hi / lo <= 10.0,
        format!("C_emp {}; spread {:.3}", per_run.join("; "), hi / lo),
    )
}

fn main() {
    let names = [
        "LP correctness",
        "Bernstein sandwich",
        "solver exactness",
        "energy inequality",
        "determining-wavenumber oracle",
        "intermittency",
        "enstrophy/Grashof bounds",
        "synchronization decay",
        "<Lambda> vs kappa_d",
    ];
    let mut failed = 0;
    let mut report = |i: usize, v: Verdict, secs: f64| {
        let tag = if v.pass { "PASS" } else { "FAIL" };
        if !v.pass {
            failed += 1;
        }
        println!("{tag} {} {}: {} ({secs:.1} s)", i, names[i - 1], v.detail);
    };
    let timed = |f: &mut dyn FnMut() -> Verdict| {
        let t = Instant::now();
        let v = f();
        (v, t.elapsed().as_secs_f64())
    };

    let (v, s) = timed(&mut criterion_1);
    report(1, v, s);
    let (v, s) = timed(&mut criterion_2);
    report(2, v, s);
    let (v, s) = timed(&mut criterion_3);
    report(3, v, s);

    let c_b = {
        let lp = lp(32);
        lp.calibrate_bernstein(&lp.extremal_samples()).unwrap().c_b
    };
    let runs = [
        forced_run(0.05, 20.0, 4e-4, 25, 0.5, c_b),
        forced_run(0.1, 80.0, 2e-4, 25, 0.25, c_b),
    ];
    let (v, s) = timed(&mut || criterion_4(&runs));
    report(4, v, s + runs.iter().map(|r| r.secs).sum::<f64>());
    let (v, s) = timed(&mut || criterion_5(&runs));
    report(5, v, s);
    let (v, s) = timed(&mut || criterion_6(&runs, c_b));
    report(6, v, s);
    let (v, s) = timed(&mut || criterion_7(&runs));
    report(7, v, s);
    let (v, s) = timed(&mut || criterion_8(&runs[0]));
    report(8, v, s);
    let (v, s) = timed(&mut || criterion_9(&runs));
    report(9, v, s);

    println!("{} of 9 criteria passed", 9 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
