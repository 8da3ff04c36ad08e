//! Run orchestration behind the command-line subcommands. Everything here is
//! single-threaded glue; the parallel work happens inside the modules it
//! calls.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;

use crate::config::{Config, InitialCondition};
use crate::diagnostics::{
    determining_oracle, grashof, split_windows, window_stats, DeterminingParams, Diagnostics,
    DiagnosticsRecord, GrashofMode, WindowContext, WindowStats,
};
use crate::error::{Error, Result};
use crate::io::{self, CsvTable, OutputDir, RunManifest, Snapshot};
use crate::lp::LittlewoodPaley;
use crate::par;
use crate::solver::{self, RunEvent, SolverConfig, Stepper};
use crate::spectral::{Spectral, SpectralVelocity};
use crate::sync::{self, DecayOutcome, PointwiseDecay, SyncHarness, SyncRecord};

/// Everything built from one configuration.
pub struct Setup {
    pub config: Config,
    pub hash: String,
    pub solver: SolverConfig,
    pub spectral: Arc<Spectral>,
    pub diagnostics: Diagnostics,
    pub stepper: Stepper,
}

impl Setup {
    pub fn new(config: Config) -> Result<Self> {
        config.validate()?;
        let solver = config.solver_config()?;
        let spectral = Arc::new(Spectral::new(solver.grid));
        let lp = if config.diagnostics.oversample {
            LittlewoodPaley::with_oversampling(spectral.clone())
        } else {
            LittlewoodPaley::new(spectral.clone())
        };
        let params = DeterminingParams::new(solver.nu, solver.delta, solver.c0)?;
        let diagnostics = Diagnostics::new(Arc::new(lp), params);
        let stepper = Stepper::new(spectral.clone(), &solver)?;
        Ok(Self {
            hash: config.hash_hex(),
            config,
            solver,
            spectral,
            diagnostics,
            stepper,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::new(Config::load(path)?)
    }

    pub fn lp(&self) -> &LittlewoodPaley {
        self.diagnostics.lp()
    }

    pub fn initial(&self) -> Result<SpectralVelocity> {
        let sp = &self.spectral;
        Ok(match self.config.initial_condition()? {
            InitialCondition::Random {
                seed,
                k_peak,
                energy,
            } => solver::random_field(sp, seed, k_peak, energy),
            InitialCondition::TaylorGreen { amplitude } => solver::taylor_green(sp, amplitude),
            InitialCondition::Shear {
                amplitude,
                wavenumber,
            } => solver::shear_mode(sp, amplitude, wavenumber),
            InitialCondition::Zero => SpectralVelocity::zeros(sp.grid()),
            InitialCondition::Snapshot(path) => {
                let snap = Snapshot::read(&path)?;
                match snap.velocity(sp) {
                    Ok(u) => u,
                    Err(Error::GridMismatch(_)) => {
                        solver::regrid(&snap.velocity(&Spectral::new(snap.grid))?, sp)?
                    }
                    Err(e) => return Err(e),
                }
            }
        })
    }

    /// The configured Bernstein constant, or one calibrated on the
    /// extremal single-shell fields.
    pub fn bernstein_constant(&self) -> Result<f64> {
        match self.config.diagnostics.c_b {
            Some(c) => Ok(c),
            None => Ok(self
                .lp()
                .calibrate_bernstein(&self.lp().extremal_samples())?
                .c_b),
        }
    }

    /// Autonomous Grashof number of the configured force.
    pub fn grashof(&self) -> Result<f64> {
        grashof(
            self.lp(),
            self.stepper.forcing(),
            self.solver.nu,
            GrashofMode::Autonomous,
        )
    }

    /// Statistics of every complete post-transient window. Windows that
    /// contain an unresolved record are skipped and counted.
    pub fn windows(&self, records: &[DiagnosticsRecord]) -> Result<(Vec<WindowStats>, usize)> {
        let ctx = WindowContext {
            grid: self.solver.grid,
            nu: self.solver.nu,
            c_b: self.bernstein_constant()?,
            g: self.grashof()?,
        };
        let mut out = Vec::new();
        let mut skipped = 0;
        for w in split_windows(records, self.solver.transient_time(), self.solver.window_t) {
            match window_stats(&ctx, w) {
                Ok(s) => out.push(s),
                Err(Error::Unresolved { .. }) => skipped += 1,
                Err(e) => return Err(e),
            }
        }
        Ok((out, skipped))
    }

    fn write_tables(
        &self,
        out: &mut OutputDir,
        records: &[DiagnosticsRecord],
    ) -> Result<(usize, usize)> {
        let (windows, skipped) = self.windows(records)?;
        let g = self.grashof()?;
        out.write(
            "diagnostics.csv",
            &io::diagnostics_csv(&self.hash, self.solver.grid, records, &windows, g),
        )?;
        out.write("windows.csv", &io::windows_csv(&self.hash, &windows))?;
        Ok((windows.len(), skipped))
    }
}

fn shells_name(stem: &str) -> String {
    format!("shells/{stem}.csv")
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimulateSummary {
    pub steps: u64,
    pub t_end: f64,
    pub records: usize,
    pub snapshots: usize,
    pub windows: usize,
    pub skipped_windows: usize,
    pub config_hash: String,
}

/// `simulate`: runs the solver, writing snapshots, per-snapshot shell
/// spectra, the diagnostics and window tables and a manifest into `out`.
pub fn simulate(setup: &Setup, out_dir: &Path) -> Result<SimulateSummary> {
    let mut out = OutputDir::create(out_dir)?;
    out.write("config.toml", setup.config.emit().as_bytes())?;
    let mut records = Vec::new();
    let mut snapshots = 0;
    let result = solver::run(
        &setup.solver,
        &setup.stepper,
        &setup.diagnostics,
        setup.initial()?,
        &mut |ev| match ev {
            RunEvent::Record { record, .. } => {
                records.push(record.clone());
                Ok(())
            }
            RunEvent::Snapshot { state } => {
                let name = io::snapshot_name(state.step);
                let snap = Snapshot::from_velocity(&setup.spectral, &state.u, setup.solver.nu);
                out.write(&format!("snapshots/{name}"), &snap.encode())?;
                let shells = setup.lp().shell_norms(&state.u);
                out.write(
                    &shells_name(name.trim_end_matches(".bin")),
                    &io::shells_csv(&setup.hash, &shells),
                )?;
                snapshots += 1;
                Ok(())
            }
        },
    );
    // partial output is still worth keeping
    let tables = setup.write_tables(&mut out, &records);
    out.finish(&setup.hash)?;
    let state = result?;
    let (windows, skipped_windows) = tables?;
    Ok(SimulateSummary {
        steps: state.step,
        t_end: state.time(),
        records: records.len(),
        snapshots,
        windows,
        skipped_windows,
        config_hash: setup.hash.clone(),
    })
}

fn load_snapshots(setup: &Setup, dir: &Path) -> Result<Vec<(PathBuf, SpectralVelocity)>> {
    let paths = io::list_snapshots(dir)?;
    if paths.is_empty() {
        return Err(Error::InsufficientData(format!("no snapshots in {dir:?}")));
    }
    let fields = par::map_range(paths.len(), |i| {
        let snap = Snapshot::read(&paths[i])?;
        if snap.nu != setup.solver.nu {
            return Err(Error::Validation(format!(
                "snapshot {:?} has nu = {}, configuration has {}",
                paths[i], snap.nu, setup.solver.nu
            )));
        }
        snap.velocity(&setup.spectral)
    });
    paths
        .into_iter()
        .zip(fields)
        .map(|(p, f)| f.map(|f| (p, f)))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiagnoseSummary {
    pub snapshots: usize,
    pub windows: usize,
    pub skipped_windows: usize,
}

/// `diagnose`: recomputes diagnostics from a directory of snapshots.
pub fn diagnose(setup: &Setup, snapshot_dir: &Path, out_dir: &Path) -> Result<DiagnoseSummary> {
    let snaps = load_snapshots(setup, snapshot_dir)?;
    let records: Vec<DiagnosticsRecord> =
        par::map_range(snaps.len(), |i| setup.diagnostics.record(&snaps[i].1));
    let mut out = OutputDir::create(out_dir)?;
    for ((path, _), rec) in snaps.iter().zip(&records) {
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("snap");
        out.write(
            &shells_name(stem),
            &io::shells_csv(&setup.hash, &rec.shells),
        )?;
    }
    let (windows, skipped_windows) = setup.write_tables(&mut out, &records)?;
    out.finish(&setup.hash)?;
    Ok(DiagnoseSummary {
        snapshots: snaps.len(),
        windows,
        skipped_windows,
    })
}

/// Overrides of the `[sync]` section from the command line.
#[derive(Clone, Debug, Default)]
pub struct SyncOverrides {
    pub perturb_shell: Option<i32>,
    pub perturb_amp: Option<f64>,
    pub enforce: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SyncSummary {
    pub records: usize,
    pub bound_rate: f64,
    pub fit: Option<DecayOutcome>,
    pub pointwise: Option<PointwiseDecay>,
    pub final_w_hs: f64,
    pub max_injection: f64,
}

impl SyncSummary {
    pub fn passes(&self) -> bool {
        self.fit.is_some_and(|f| f.passes()) && self.pointwise.is_some_and(|p| p.passes)
    }
}

/// `sync`: runs the two-trajectory harness from the configured initial
/// condition for `t_end`, writing `sync.csv`.
pub fn run_sync(setup: &Setup, overrides: &SyncOverrides, out_dir: &Path) -> Result<SyncSummary> {
    let mut config = setup.config.clone();
    let section = config.sync.get_or_insert_with(Default::default);
    if let Some(s) = overrides.perturb_shell {
        section.perturb_shell = s;
    }
    if let Some(a) = overrides.perturb_amp {
        section.perturb_amp = a;
    }
    if let Some(e) = &overrides.enforce {
        section.enforce = e.clone();
    }
    config.validate()?;
    let cfg = config.sync_config()?;
    let hash = config.hash_hex();
    let u = setup.initial()?;
    let v = sync::perturb(&setup.diagnostics, &u, &cfg.perturbation);
    let harness = SyncHarness::new(&setup.stepper, &setup.diagnostics, &cfg);
    let mut out = OutputDir::create(out_dir)?;
    out.write("config.toml", config.emit().as_bytes())?;
    let mut records: Vec<SyncRecord> = Vec::new();
    let result = harness.run(
        setup.stepper.start(u)?,
        setup.stepper.start(v)?,
        setup.solver.steps(),
        &mut |r| {
            records.push(*r);
            Ok(())
        },
    );
    out.write("sync.csv", &io::sync_csv(&hash, &records))?;
    out.finish(&hash)?;
    result?;
    let bound_rate = cfg.bound_rate(setup.solver.grid.kappa0());
    let t0 = records.first().map_or(0.0, |r| r.t);
    Ok(SyncSummary {
        records: records.len(),
        bound_rate,
        fit: sync::decay_fit(&records, t0, bound_rate, cfg.noise_floor).ok(),
        pointwise: sync::pointwise_decay_check(&records, t0, bound_rate, cfg.noise_floor).ok(),
        final_w_hs: records.last().map_or(0.0, |r| r.w_hs),
        max_injection: records
            .iter()
            .map(|r| r.injection.abs())
            .fold(0.0, f64::max),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CalibrationSummary {
    pub c_b: f64,
    pub samples: usize,
    pub blocks: usize,
    pub lower_violations: usize,
}

/// `calibrate`: Bernstein constant over the extremal fields plus `random`
/// seeded fields of varying spectral peak; writes `calibration.json`.
pub fn calibrate(
    setup: &Setup,
    random: usize,
    seed: u64,
    out_dir: &Path,
) -> Result<CalibrationSummary> {
    let lp = setup.lp();
    let sp = &setup.spectral;
    let cutoff = sp.grid().dealias_cutoff() as f64;
    let mut samples = lp.extremal_samples();
    samples.extend((0..random).map(|i| {
        let k_peak = 1.0 + (cutoff - 1.0) * i as f64 / random.max(1) as f64;
        solver::random_field(sp, seed.wrapping_add(i as u64), k_peak, 1.0)
    }));
    let cal = lp.calibrate_bernstein(&samples)?;
    let summary = CalibrationSummary {
        c_b: cal.c_b,
        samples: samples.len(),
        blocks: cal.blocks,
        lower_violations: cal.lower_violations,
    };
    let mut out = OutputDir::create(out_dir)?;
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    out.write("calibration.json", text.as_bytes())?;
    out.finish(&setup.hash)?;
    Ok(summary)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleMismatch {
    pub t: f64,
    pub stored: Option<i32>,
    pub oracle: Option<i32>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleReport {
    pub checked: usize,
    /// Snapshots without a diagnostics row at the same time.
    pub unmatched: usize,
    pub mismatches: Vec<OracleMismatch>,
}

/// `oracle`: brute-force determining wavenumber of every snapshot in
/// `run_dir/snapshots`, compared with `run_dir/diagnostics.csv`.
pub fn oracle(setup: &Setup, run_dir: &Path) -> Result<OracleReport> {
    let table = CsvTable::read(&run_dir.join("diagnostics.csv"))?;
    let times = table.floats("t")?;
    let qs = table.floats("Q")?;
    let snaps = load_snapshots(setup, &run_dir.join("snapshots"))?;
    let params = *setup.diagnostics.params();
    let grid = setup.solver.grid;
    let found = par::map_range(snaps.len(), |i| {
        determining_oracle(grid, snaps[i].1.field(), &params)
    });
    let tol = 1e-9 * setup.solver.dt;
    let mut report = OracleReport {
        checked: 0,
        unmatched: 0,
        mismatches: Vec::new(),
    };
    for ((_, u), q) in snaps.iter().zip(found) {
        let oracle = match q {
            Ok(q) => Some(q.q),
            Err(Error::Unresolved { .. }) => None,
            Err(e) => return Err(e),
        };
        let row = times
            .iter()
            .position(|t| t.is_some_and(|t| (t - u.time()).abs() <= tol));
        let Some(row) = row else {
            report.unmatched += 1;
            continue;
        };
        report.checked += 1;
        let stored = qs[row].map(|q| q as i32);
        if stored != oracle {
            report.mismatches.push(OracleMismatch {
                t: u.time(),
                stored,
                oracle,
            });
        }
    }
    Ok(report)
}

/// Re-reads every file listed in a run's manifest.
pub fn verify_manifest(run_dir: &Path) -> Result<Vec<String>> {
    RunManifest::load(run_dir)?.verify(run_dir)
}
