//! Time integration of the forced incompressible Navier-Stokes equations on
//! the torus: integrating-factor low-storage RK3, energy-budget quadrature,
//! initial-condition generators and the run loop.

use std::collections::VecDeque;
use std::f64::consts::PI;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{Diagnostics, DiagnosticsRecord};
use crate::error::{Error, Result};
use crate::grid::TorusGrid;
use crate::spectral::{PhysicalField, Spectral, SpectralField, SpectralVelocity};

/// Largest `|k|` a force may touch: everything with `|k| <= 6` sits in
/// shells `q <= 2`.
pub const FORCE_MAX_MODULUS: f64 = 6.0;

/// Advective CFL constant.
pub const CFL: f64 = 0.5;

/// One explicitly given force coefficient; the partner at `-k` is implied.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForceMode {
    pub k: [i64; 3],
    pub re: [f64; 3],
    #[serde(default)]
    pub im: [f64; 3],
}

/// Time-independent body force.
#[derive(Clone, Debug, PartialEq, Default)]
pub enum ForcingSpec {
    #[default]
    None,
    /// `A sin(2 pi k_f x_2 / L) e_1`.
    Kolmogorov {
        amplitude: f64,
        wavenumber: i64,
    },
    /// `A (sin z + cos y, sin x + cos z, sin y + cos x)` at wavenumber one.
    Abc {
        amplitude: f64,
    },
    Table(Vec<ForceMode>),
}

impl ForcingSpec {
    /// Builds the projected force coefficients, rejecting forces that reach
    /// beyond shell 2, touch the mean, or fall outside the dealiased set.
    pub fn build(&self, spectral: &Spectral) -> Result<SpectralVelocity> {
        let g = spectral.grid();
        let mut raw = SpectralField::zeros(g);
        let mut place = |k: [i64; 3], v: [Complex64; 3]| -> Result<()> {
            let k2 = (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]) as f64;
            if k2 == 0.0 {
                return Err(Error::Validation(
                    "force must have zero mean (k = 0 given)".into(),
                ));
            }
            if k2.sqrt() > FORCE_MAX_MODULUS {
                return Err(Error::Validation(format!(
                    "force mode {k:?} lies outside shells q <= 2 (|k| <= {FORCE_MAX_MODULUS})"
                )));
            }
            if !g.is_dealiased(k) {
                return Err(Error::Validation(format!(
                    "force mode {k:?} is not resolved"
                )));
            }
            raw.set_pair(k, v);
            Ok(())
        };
        match self {
            ForcingSpec::None => {}
            ForcingSpec::Kolmogorov {
                amplitude,
                wavenumber,
            } => {
                let z = Complex64::default();
                place(
                    [0, *wavenumber, 0],
                    [Complex64::new(0.0, -0.5 * amplitude), z, z],
                )?;
            }
            ForcingSpec::Abc { amplitude } => {
                let z = Complex64::default();
                let s = Complex64::new(0.0, -0.5 * amplitude);
                let c = Complex64::new(0.5 * amplitude, 0.0);
                place([1, 0, 0], [z, s, c])?;
                place([0, 1, 0], [c, z, s])?;
                place([0, 0, 1], [s, c, z])?;
            }
            ForcingSpec::Table(modes) => {
                for m in modes {
                    let v = [0, 1, 2].map(|c| Complex64::new(m.re[c], m.im[c]));
                    place(m.k, v)?;
                }
            }
        }
        Ok(spectral.leray_project(raw))
    }
}

/// Everything the integrator and the windowed diagnostics need.
#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    pub grid: TorusGrid,
    pub nu: f64,
    pub dt: f64,
    pub t_end: f64,
    pub forcing: ForcingSpec,
    pub delta: f64,
    pub c0: f64,
    pub window_t: f64,
    pub snapshot_stride: u64,
    pub diag_stride: u64,
    /// Discarded spin-up before windowed statistics; `None` means
    /// `5 / (nu kappa_0^2)`.
    pub transient: Option<f64>,
}

impl SolverConfig {
    pub fn new(grid: TorusGrid, nu: f64, dt: f64) -> Self {
        Self {
            grid,
            nu,
            dt,
            t_end: 0.0,
            forcing: ForcingSpec::None,
            delta: 0.5,
            c0: 0.1,
            window_t: 1.0,
            snapshot_stride: 0,
            diag_stride: 1,
            transient: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("nu", self.nu),
            ("dt", self.dt),
            ("delta", self.delta),
            ("c0", self.c0),
            ("window_T", self.window_t),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Validation(format!("{name} > 0 required, got {v}")));
            }
        }
        if self.delta > 1.0 {
            return Err(Error::Validation(format!(
                "delta must lie in (0, 1], got {}",
                self.delta
            )));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::Validation(format!(
                "t_end >= 0 required, got {}",
                self.t_end
            )));
        }
        if self.diag_stride == 0 {
            return Err(Error::Validation("diag_stride >= 1 required".into()));
        }
        if let Some(t) = self.transient {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(Error::Validation(format!(
                    "transient >= 0 required, got {t}"
                )));
            }
        }
        Ok(())
    }

    pub fn transient_time(&self) -> f64 {
        self.transient
            .unwrap_or_else(|| 5.0 / (self.nu * self.grid.kappa0().powi(2)))
    }

    /// Number of whole steps needed to reach `t_end`.
    pub fn steps(&self) -> u64 {
        (self.t_end / self.dt - 1e-9).ceil().max(0.0) as u64
    }
}

/// One sample of the global budget terms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HistoryEntry {
    pub t: f64,
    /// `1/2 ||u||_2^2`
    pub energy: f64,
    /// `||grad u||_2^2`
    pub enstrophy: f64,
    /// `(f, u)`
    pub force_work: f64,
}

/// Bounded per-step history, oldest entries dropped first.
#[derive(Clone, Debug)]
pub struct History {
    entries: VecDeque<HistoryEntry>,
    capacity: usize,
}

impl History {
    pub fn with_capacity(capacity: usize) -> Self {
        let capacity = capacity.max(2);
        Self {
            entries: VecDeque::with_capacity(capacity),
            capacity,
        }
    }

    pub fn push(&mut self, e: HistoryEntry) {
        if let Some(last) = self.entries.back() {
            assert!(e.t > last.t, "history timestamps must increase");
        }
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(e);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn iter(&self) -> impl Iterator<Item = &HistoryEntry> {
        self.entries.iter()
    }

    pub fn last(&self) -> Option<&HistoryEntry> {
        self.entries.back()
    }

    /// Entries with `t0 <= t <= t1`, provided both ends are sampled.
    pub fn window(&self, t0: f64, t1: f64) -> Result<Vec<HistoryEntry>> {
        let unavailable = || Error::WindowUnavailable { t0, t1 };
        if !(t0 < t1) || self.entries.len() < 2 {
            return Err(unavailable());
        }
        let h = self.entries[1].t - self.entries[0].t;
        let eps = 1e-6 * h;
        let out: Vec<HistoryEntry> = self
            .entries
            .iter()
            .filter(|e| e.t >= t0 - eps && e.t <= t1 + eps)
            .copied()
            .collect();
        match (out.first(), out.last()) {
            (Some(a), Some(b))
                if (a.t - t0).abs() <= eps && (b.t - t1).abs() <= eps && out.len() >= 2 =>
            {
                Ok(out)
            }
            _ => Err(unavailable()),
        }
    }
}

/// Composite Simpson rule on uniform samples, with a 3/8 panel at the end
/// for odd interval counts and the trapezoid for a single interval.
pub fn simpson(values: &[f64], h: f64) -> f64 {
    let n = values.len().saturating_sub(1);
    match n {
        0 => 0.0,
        1 => 0.5 * h * (values[0] + values[1]),
        _ => {
            let (even_end, tail) = if n % 2 == 0 {
                (n, false)
            } else {
                (n - 3, true)
            };
            let mut s = 0.0;
            for i in (0..even_end).step_by(2) {
                s += h / 3.0 * (values[i] + 4.0 * values[i + 1] + values[i + 2]);
            }
            if tail {
                let v = &values[n - 3..=n];
                s += 3.0 * h / 8.0 * (v[0] + 3.0 * v[1] + 3.0 * v[2] + v[3]);
            }
            s
        }
    }
}

/// Trapezoid rule on possibly nonuniform samples.
pub fn trapezoid(t: &[f64], values: &[f64]) -> f64 {
    t.windows(2)
        .zip(values.windows(2))
        .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
        .sum()
}

/// Energy-budget residual over `[t0, t1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BudgetReport {
    pub t0: f64,
    pub t1: f64,
    pub energy_t0: f64,
    pub energy_t1: f64,
    /// `nu * int ||grad u||^2`
    pub dissipation: f64,
    /// `int (f, u)`
    pub work: f64,
    /// `E(t1) - [E(t0) - dissipation + work]`
    pub residual: f64,
    pub tolerance: f64,
}

impl BudgetReport {
    pub fn within_tolerance(&self) -> bool {
        self.residual.abs() <= self.tolerance
    }

    pub fn relative_residual(&self) -> f64 {
        let scale = self.energy_t0.max(self.dissipation);
        if scale == 0.0 {
            self.residual.abs()
        } else {
            self.residual.abs() / scale
        }
    }
}

/// Relative tolerance for [`energy_budget`].
pub const BUDGET_RTOL: f64 = 1e-6;

pub fn energy_budget(history: &History, nu: f64, t0: f64, t1: f64) -> Result<BudgetReport> {
    let w = history.window(t0, t1)?;
    let h = (w[w.len() - 1].t - w[0].t) / (w.len() - 1) as f64;
    let ens: Vec<f64> = w.iter().map(|e| e.enstrophy).collect();
    let work: Vec<f64> = w.iter().map(|e| e.force_work).collect();
    let dissipation = nu * simpson(&ens, h);
    let work = simpson(&work, h);
    let e0 = w[0].energy;
    let e1 = w[w.len() - 1].energy;
    let floor = f64::MIN_POSITIVE;
    Ok(BudgetReport {
        t0,
        t1,
        energy_t0: e0,
        energy_t1: e1,
        dissipation,
        work,
        residual: e1 - (e0 - dissipation + work),
        tolerance: (BUDGET_RTOL * e0.max(dissipation)).max(floor),
    })
}

/// Solution plus its step counter and recent budget history.
#[derive(Clone, Debug)]
pub struct TrajectoryState {
    pub u: SpectralVelocity,
    pub step: u64,
    t_start: f64,
    pub history: History,
}

impl TrajectoryState {
    pub fn time(&self) -> f64 {
        self.u.time()
    }

    pub fn start_time(&self) -> f64 {
        self.t_start
    }
}

/// What one step observed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepInfo {
    /// `max_x |u(x)|` at the start of the step.
    pub umax: f64,
    pub cfl_limit: f64,
}

// Williamson 2N-storage RK3
const RK_A: [f64; 3] = [0.0, -5.0 / 9.0, -153.0 / 128.0];
const RK_B: [f64; 3] = [1.0 / 3.0, 15.0 / 16.0, 8.0 / 15.0];
const RK_C: [f64; 4] = [0.0, 1.0 / 3.0, 3.0 / 4.0, 1.0];

/// Integrating-factor RK3 stepper for one configuration. Shared freely
/// between trajectories on the same grid.
#[derive(Debug)]
pub struct Stepper {
    spectral: Arc<Spectral>,
    forcing: SpectralVelocity,
    nu: f64,
    dt: f64,
    /// `exp(-nu kappa_0^2 |k|^2 (c_{i+1} - c_i) dt)` per retained mode
    factors: [Vec<f64>; 3],
    history_capacity: usize,
}

impl Stepper {
    pub fn new(spectral: Arc<Spectral>, config: &SolverConfig) -> Result<Self> {
        config.validate()?;
        spectral.grid().same_as(&config.grid)?;
        let forcing = config.forcing.build(&spectral)?;
        let k0 = config.grid.kappa0();
        let factors = [0, 1, 2].map(|i| {
            let frac = RK_C[i + 1] - RK_C[i];
            spectral
                .modes()
                .iter()
                .map(|m| (-config.nu * k0 * k0 * m.k2 * frac * config.dt).exp())
                .collect()
        });
        let history_capacity = (config.window_t / config.dt).ceil() as usize + 2;
        Ok(Self {
            spectral,
            forcing,
            nu: config.nu,
            dt: config.dt,
            factors,
            history_capacity,
        })
    }

    pub fn spectral(&self) -> &Arc<Spectral> {
        &self.spectral
    }

    pub fn forcing(&self) -> &SpectralVelocity {
        &self.forcing
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Sets the history ring length (entries, not time).
    pub fn with_history_capacity(mut self, capacity: usize) -> Self {
        self.history_capacity = capacity;
        self
    }

    pub fn history_entry(&self, u: &SpectralVelocity) -> HistoryEntry {
        HistoryEntry {
            t: u.time(),
            energy: self.spectral.energy(u),
            enstrophy: self.spectral.enstrophy(u),
            force_work: self.forcing.inner(u),
        }
    }

    /// Wraps an initial velocity into a trajectory.
    pub fn start(&self, u: SpectralVelocity) -> Result<TrajectoryState> {
        u.grid().same_as(&self.spectral.grid())?;
        let mut history = History::with_capacity(self.history_capacity);
        history.push(self.history_entry(&u));
        Ok(TrajectoryState {
            t_start: u.time(),
            u,
            step: 0,
            history,
        })
    }

    fn apply_factor(&self, f: &mut SpectralField, stage: usize) {
        let fac = &self.factors[stage];
        for c in 0..3 {
            let comp = f.component_mut(c);
            for (m, &e) in self.spectral.modes().iter().zip(fac) {
                comp[m.index] *= e;
            }
        }
    }

    /// Advances the raw velocity by one step without touching any state.
    pub fn advance(&self, u: &SpectralVelocity) -> Result<(SpectralVelocity, StepInfo)> {
        let dt = self.dt;
        let mut w = u.field().clone();
        let mut q = SpectralField::zeros(u.grid());
        let mut info = StepInfo {
            umax: 0.0,
            cfl_limit: f64::INFINITY,
        };
        for stage in 0..3 {
            let wv = SpectralVelocity::from_field_unchecked(w, u.time());
            let (n, umax) = self.spectral.nonlinear_with_max(&wv);
            w = wv.into_field();
            if stage == 0 {
                let limit = if umax > 0.0 {
                    CFL * self.spectral.grid().spacing() / umax
                } else {
                    f64::INFINITY
                };
                info = StepInfo {
                    umax,
                    cfl_limit: limit,
                };
                if dt > limit {
                    return Err(Error::CflViolation { dt, limit, umax });
                }
            }
            q.scale(RK_A[stage]);
            q.axpy(dt, n.field());
            q.axpy(dt, self.forcing.field());
            w.axpy(RK_B[stage], &q);
            self.apply_factor(&mut w, stage);
            if stage < 2 {
                self.apply_factor(&mut q, stage);
            }
        }
        Ok((
            SpectralVelocity::from_field_unchecked(w, u.time() + dt),
            info,
        ))
    }

    /// One step of `state`, updating its time, counter and history.
    pub fn step(&self, state: &mut TrajectoryState) -> Result<StepInfo> {
        let (mut next, info) = self.advance(&state.u)?;
        let step = state.step + 1;
        if !next.is_finite() {
            return Err(Error::NonFinite { step });
        }
        next.set_time(state.t_start + step as f64 * self.dt);
        state.history.push(self.history_entry(&next));
        state.u = next;
        state.step = step;
        Ok(info)
    }
}

/// Seeded random divergence-free field with shell spectrum
/// `E(k) ~ k^4 exp(-2 k^2 / k_p^2)`, scaled to the requested energy.
pub fn random_field(spectral: &Spectral, seed: u64, k_peak: f64, energy: f64) -> SpectralVelocity {
    let g = spectral.grid();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut raw = SpectralField::zeros(g);
    for m in spectral.modes() {
        if m.neg < m.index {
            continue;
        }
        let k = m.k2.sqrt();
        // per-mode amplitude: E(k) / (4 pi k^2)
        let amp = (k * k * (-2.0 * k * k / (k_peak * k_peak)).exp()).sqrt();
        let mut draw = || {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            Complex64::new(re, im) * amp
        };
        let v = [draw(), draw(), draw()];
        raw.set_pair(m.k, v);
    }
    let u = spectral.leray_project(raw);
    let e = spectral.energy(&u);
    if e > 0.0 {
        u.scaled((energy / e).sqrt())
    } else {
        u
    }
}

/// `A (sin x cos y cos z, -cos x sin y cos z, 0)` with `x` scaled by
/// `kappa_0`.
pub fn taylor_green(spectral: &Spectral, amplitude: f64) -> SpectralVelocity {
    let k0 = spectral.grid().kappa0();
    let f = PhysicalField::from_fn(spectral.grid(), |x| {
        let (a, b, c) = (k0 * x[0], k0 * x[1], k0 * x[2]);
        [
            amplitude * a.sin() * b.cos() * c.cos(),
            -amplitude * a.cos() * b.sin() * c.cos(),
            0.0,
        ]
    });
    spectral.leray_project(spectral.to_spectral(&f))
}

/// `(A sin(2 pi k x_2 / L), 0, 0)`.
pub fn shear_mode(spectral: &Spectral, amplitude: f64, k: i64) -> SpectralVelocity {
    let mut raw = SpectralField::zeros(spectral.grid());
    let z = Complex64::default();
    raw.set_pair([0, k, 0], [Complex64::new(0.0, -0.5 * amplitude), z, z]);
    spectral.leray_project(raw)
}

/// Closed-form decay factor `exp(-nu kappa_0^2 |k|^2 t)`.
pub fn viscous_decay(grid: TorusGrid, nu: f64, k2: f64, t: f64) -> f64 {
    (-nu * (2.0 * PI / grid.length()).powi(2) * k2 * t).exp()
}

/// Copies every mode retained on both grids from `u` onto `target`'s grid
/// (spectral interpolation when refining, truncation when coarsening).
pub fn regrid(u: &SpectralVelocity, target: &Spectral) -> Result<SpectralVelocity> {
    let (src, dst) = (u.grid(), target.grid());
    if src.length() != dst.length() {
        return Err(Error::GridMismatch(format!(
            "box lengths differ: {} vs {}",
            src.length(),
            dst.length()
        )));
    }
    let mut out = SpectralField::zeros(dst);
    for m in target.modes() {
        if src.is_dealiased(m.k) {
            let v = u.at(m.k);
            for c in 0..3 {
                out.component_mut(c)[m.index] = v[c];
            }
        }
    }
    Ok(SpectralVelocity::from_field_unchecked(out, u.time()))
}

/// Something the run loop hands to its observer.
#[derive(Debug)]
pub enum RunEvent<'a> {
    /// Emitted every `diag_stride` steps, including step 0.
    Record {
        state: &'a TrajectoryState,
        record: &'a DiagnosticsRecord,
    },
    /// Emitted every `snapshot_stride` steps (if nonzero), including step 0.
    Snapshot { state: &'a TrajectoryState },
}

/// Advances `initial` to `config.t_end`, reporting records and snapshots as
/// they are produced so that observers persist partial output on failure.
pub fn run(
    config: &SolverConfig,
    stepper: &Stepper,
    diagnostics: &Diagnostics,
    initial: SpectralVelocity,
    observer: &mut dyn FnMut(RunEvent<'_>) -> Result<()>,
) -> Result<TrajectoryState> {
    let mut state = stepper.start(initial)?;
    let steps = config.steps();
    loop {
        if state.step % config.diag_stride == 0 {
            let record = diagnostics.record(&state.u);
            observer(RunEvent::Record {
                state: &state,
                record: &record,
            })?;
        }
        if config.snapshot_stride > 0 && state.step % config.snapshot_stride == 0 {
            observer(RunEvent::Snapshot { state: &state })?;
        }
        if state.step >= steps {
            break;
        }
        stepper.step(&mut state)?;
    }
    Ok(state)
}
