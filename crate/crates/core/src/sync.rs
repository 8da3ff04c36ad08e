//! Two-trajectory synchronization: a reference `u` and a perturbed `v`
//! whose low modes are overwritten by those of `u` below the determining
//! shell, with the decay of `w = u - v` measured in `H^s`.

use serde::Serialize;

use crate::diagnostics::{Determining, Diagnostics};
use crate::error::{Error, Result};
use crate::lp::CutoffProfile;
use crate::par;
use crate::solver::{random_field, Stepper, TrajectoryState};
use crate::spectral::{SpectralField, SpectralVelocity};

/// Which shell the low modes are slaved below.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Enforcement {
    /// `Q(t)` from `max(Lambda_u, Lambda_v)`.
    Adaptive,
    Fixed(i32),
    Off,
}

impl std::str::FromStr for Enforcement {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adaptive" => Ok(Self::Adaptive),
            "off" => Ok(Self::Off),
            _ => s
                .strip_prefix("fixed:")
                .and_then(|q| q.parse::<i32>().ok())
                .filter(|q| *q >= 0)
                .map(Self::Fixed)
                .ok_or_else(|| {
                    Error::Validation(format!(
                        "enforcement must be adaptive, off or fixed:<Q>, got {s:?}"
                    ))
                }),
        }
    }
}

/// How `v_{<=Q} = u_{<=Q}` is imposed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize)]
pub enum EnforcementRule {
    /// Copy `u` onto `v` wherever `chi(2^{-Q-1} k) > 0`; the low-pass parts
    /// then agree exactly.
    #[default]
    Support,
    /// `v += chi(2^{-Q-1} k) (u - v)`; leaves a residual in the transition
    /// band.
    Blend,
}

/// Perturbation added to `u` to form the initial `v`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Perturbation {
    /// Lowest populated shell.
    pub shell: i32,
    /// `||v - u||_2 / ||u||_2`.
    pub amplitude: f64,
    pub seed: u64,
}

impl Default for Perturbation {
    fn default() -> Self {
        Self {
            shell: 3,
            amplitude: 1e-2,
            seed: 12345,
        }
    }
}

/// Relative noise floor on `||w||_{H^s} / ||u||_{H^s}`.
pub const NOISE_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SyncConfig {
    pub perturbation: Perturbation,
    pub enforcement: Enforcement,
    pub rule: EnforcementRule,
    /// Sobolev exponent `s = min(-1/2 + delta/4, 0)`.
    pub s: f64,
    pub sigma: f64,
    pub nu: f64,
    /// Records every `stride` steps.
    pub stride: u64,
    pub noise_floor: f64,
}

impl SyncConfig {
    pub fn new(
        nu: f64,
        delta: f64,
        perturbation: Perturbation,
        enforcement: Enforcement,
    ) -> Result<Self> {
        let sigma = 0.5 * (delta - 1.0);
        let s = (-0.5 + 0.25 * delta).min(0.0);
        if !(-1.0 - sigma < s && s < sigma) {
            return Err(Error::Validation(format!(
                "need -1 - sigma < s < sigma; got s = {s}, sigma = {sigma} (delta = {delta})"
            )));
        }
        if !(perturbation.amplitude >= 0.0) || perturbation.shell < -1 {
            return Err(Error::Validation(
                "perturbation needs amplitude >= 0 and shell >= -1".into(),
            ));
        }
        Ok(Self {
            perturbation,
            enforcement,
            rule: EnforcementRule::Support,
            s,
            sigma,
            nu,
            stride: 1,
            noise_floor: NOISE_FLOOR,
        })
    }

    /// `nu kappa_0^{2 + 2s}`.
    pub fn bound_rate(&self, kappa0: f64) -> f64 {
        self.nu * kappa0.powf(2.0 + 2.0 * self.s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SyncRecord {
    pub t: f64,
    pub q: i32,
    pub lambda: f64,
    pub w_hs: f64,
    pub w_l2: f64,
    pub u_hs: f64,
    pub enforced: bool,
    /// `||(u - v)_{<=Q}||_2 / ||u||_2` after enforcement.
    pub low_residual: f64,
    /// Relative energy change of `v` caused by enforcement.
    pub injection: f64,
}

/// Reference and perturbed trajectories at a common time.
#[derive(Clone, Debug)]
pub struct SyncState {
    pub u: TrajectoryState,
    pub v: TrajectoryState,
}

/// High-shell perturbation of `u` with the configured relative size.
pub fn perturb(diag: &Diagnostics, u: &SpectralVelocity, p: &Perturbation) -> SpectralVelocity {
    let lp = diag.lp();
    let sp = lp.spectral();
    let noise = random_field(sp, p.seed, sp.grid().dealias_cutoff() as f64, 1.0);
    let high = noise
        .difference(&lp.low(&noise, p.shell - 1))
        .expect("same grid");
    let norm = high.l2_norm();
    let scale = if norm > 0.0 {
        p.amplitude * u.l2_norm() / norm
    } else {
        0.0
    };
    u.sum(&high.scaled(scale))
        .expect("same grid")
        .with_time(u.time())
}

pub struct SyncHarness<'a> {
    stepper: &'a Stepper,
    diag: &'a Diagnostics,
    config: &'a SyncConfig,
}

impl<'a> SyncHarness<'a> {
    pub fn new(stepper: &'a Stepper, diag: &'a Diagnostics, config: &'a SyncConfig) -> Self {
        Self {
            stepper,
            diag,
            config,
        }
    }

    fn shell(&self, u: &SpectralVelocity, v: &SpectralVelocity) -> Result<Determining> {
        match self.config.enforcement {
            Enforcement::Fixed(q) => Ok(Determining { q }),
            Enforcement::Adaptive | Enforcement::Off => {
                let (a, b) = par::join(|| self.diag.determining(u), || self.diag.determining(v));
                let (a, b) = (a?, b?);
                Ok(if a.q >= b.q { a } else { b })
            }
        }
    }

    fn enforce(&self, u: &SpectralVelocity, v: &mut TrajectoryState, q: i32) -> f64 {
        let sp = self.diag.lp().spectral();
        let before = sp.energy(&v.u);
        let mut f: SpectralField = v.u.field().clone();
        for m in sp.modes() {
            let w = CutoffProfile::low_pass(q, m.k2.sqrt());
            if w == 0.0 {
                continue;
            }
            for c in 0..3 {
                let target = u.component(c)[m.index];
                let cur = &mut f.component_mut(c)[m.index];
                *cur = match self.config.rule {
                    EnforcementRule::Support => target,
                    EnforcementRule::Blend => *cur + (target - *cur) * w,
                };
            }
        }
        // radial multipliers keep v divergence-free, dealiased and zero-mean
        v.u = SpectralVelocity::from_field_unchecked(f, v.u.time());
        let after = sp.energy(&v.u);
        if before > 0.0 {
            (after - before) / before
        } else {
            after
        }
    }

    fn record(
        &self,
        st: &SyncState,
        det: Determining,
        enforced: bool,
        injection: f64,
    ) -> SyncRecord {
        let lp = self.diag.lp();
        let w = st.u.u.difference(&st.v.u).expect("same grid");
        let u_l2 = st.u.u.l2_norm();
        let low_residual = if enforced {
            let r = lp.low(&w, det.q).l2_norm();
            if u_l2 > 0.0 {
                r / u_l2
            } else {
                r
            }
        } else {
            f64::NAN
        };
        SyncRecord {
            t: st.u.time(),
            q: det.q,
            lambda: det.lambda(lp.grid()),
            w_hs: lp.sobolev_norm(&w, self.config.s),
            w_l2: w.l2_norm(),
            u_hs: lp.sobolev_norm(&st.u.u, self.config.s),
            enforced,
            low_residual,
            injection,
        }
    }

    fn enforce_and_record(&self, st: &mut SyncState) -> Result<SyncRecord> {
        let det = self.shell(&st.u.u, &st.v.u)?;
        let enforced = self.config.enforcement != Enforcement::Off;
        let injection = if enforced {
            self.enforce(&st.u.u, &mut st.v, det.q)
        } else {
            0.0
        };
        Ok(self.record(st, det, enforced, injection))
    }

    /// Pairs the two trajectories, enforcing once at the start.
    pub fn start(&self, u: TrajectoryState, v: TrajectoryState) -> Result<(SyncState, SyncRecord)> {
        u.u.grid().same_as(&v.u.grid())?;
        if u.time() != v.time() {
            return Err(Error::Validation(format!(
                "trajectories at different times: {} vs {}",
                u.time(),
                v.time()
            )));
        }
        let mut st = SyncState { u, v };
        let rec = self.enforce_and_record(&mut st)?;
        Ok((st, rec))
    }

    /// Advances both trajectories by one step (in parallel), then enforces.
    pub fn sync_step(&self, st: &mut SyncState) -> Result<SyncRecord> {
        let SyncState { u, v } = st;
        let (a, b) = par::join(|| self.stepper.step(u), || self.stepper.step(v));
        a?;
        b?;
        self.enforce_and_record(st)
    }

    /// `steps` synchronized steps; records every `stride` steps plus the start.
    pub fn run(
        &self,
        u: TrajectoryState,
        v: TrajectoryState,
        steps: u64,
        observer: &mut dyn FnMut(&SyncRecord) -> Result<()>,
    ) -> Result<(SyncState, Vec<SyncRecord>)> {
        let (mut st, first) = self.start(u, v)?;
        observer(&first)?;
        let mut out = vec![first];
        for i in 1..=steps {
            let rec = self.sync_step(&mut st)?;
            if i % self.config.stride.max(1) == 0 || i == steps {
                observer(&rec)?;
                out.push(rec);
            }
        }
        Ok((st, out))
    }
}

/// Outcome of the exponential fit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum DecayOutcome {
    Fitted {
        fitted_rate: f64,
        bound_rate: f64,
        /// `fitted / bound - 1`
        margin: f64,
        passes: bool,
    },
    /// `w` sits at rounding level; counts as a pass.
    NoiseFloor,
}

impl DecayOutcome {
    pub fn passes(&self) -> bool {
        match self {
            DecayOutcome::Fitted { passes, .. } => *passes,
            DecayOutcome::NoiseFloor => true,
        }
    }
}

/// Allowed relative shortfall of the decay rate.
pub const DECAY_SLACK: f64 = 0.05;

/// Minimum number of above-floor records for a fit.
pub const MIN_FIT_RECORDS: usize = 10;

fn above_floor(r: &SyncRecord, floor: f64) -> bool {
    r.w_hs > floor * r.u_hs.max(f64::MIN_POSITIVE)
}

/// Least-squares slope of `ln ||w||_{H^s}^2` over records with `t >= t0`.
///
/// Records at the noise floor are dropped. If fewer than ten remain but the
/// trajectory reached the floor, `w` vanished faster than it can be sampled
/// and the outcome is [`DecayOutcome::NoiseFloor`].
pub fn decay_fit(
    records: &[SyncRecord],
    t0: f64,
    bound_rate: f64,
    floor: f64,
) -> Result<DecayOutcome> {
    let window: Vec<&SyncRecord> = records.iter().filter(|r| r.t >= t0).collect();
    if window.is_empty() {
        return Err(Error::InsufficientData(format!(
            "no records after t0 = {t0}"
        )));
    }
    let live: Vec<&SyncRecord> = window
        .iter()
        .copied()
        .filter(|r| above_floor(r, floor))
        .collect();
    if live.len() < MIN_FIT_RECORDS {
        if live.len() < window.len() {
            return Ok(DecayOutcome::NoiseFloor);
        }
        return Err(Error::InsufficientData(format!(
            "{} records above the noise floor after t0, need {MIN_FIT_RECORDS}",
            live.len()
        )));
    }
    let n = live.len() as f64;
    let xs: Vec<f64> = live.iter().map(|r| r.t).collect();
    let ys: Vec<f64> = live.iter().map(|r| (r.w_hs * r.w_hs).ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let fitted_rate = -sxy / sxx;
    let margin = fitted_rate / bound_rate - 1.0;
    Ok(DecayOutcome::Fitted {
        fitted_rate,
        bound_rate,
        margin,
        passes: margin >= -DECAY_SLACK,
    })
}

/// Pointwise form of the decay bound against the first record at or after
/// `t0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PointwiseDecay {
    pub t0: f64,
    pub checked: usize,
    /// Smallest `1 - w^2(t) / (w^2(t0) exp(-r (t - t0)))` over records
    /// above the noise floor.
    pub worst_margin: f64,
    pub passes: bool,
}

pub fn pointwise_decay_check(
    records: &[SyncRecord],
    t0: f64,
    bound_rate: f64,
    floor: f64,
) -> Result<PointwiseDecay> {
    let start = records
        .iter()
        .find(|r| r.t >= t0)
        .ok_or_else(|| Error::InsufficientData(format!("no records after t0 = {t0}")))?;
    let w0 = start.w_hs * start.w_hs;
    let mut worst = f64::INFINITY;
    let mut checked = 0;
    for r in records.iter().filter(|r| r.t > start.t) {
        if !above_floor(r, floor) {
            continue;
        }
        checked += 1;
        let bound = w0 * (-bound_rate * (r.t - start.t)).exp();
        let m = if bound > 0.0 {
            1.0 - r.w_hs * r.w_hs / bound
        } else {
            f64::NEG_INFINITY
        };
        worst = worst.min(m);
    }
    Ok(PointwiseDecay {
        t0: start.t,
        checked,
        worst_margin: worst,
        passes: worst >= -DECAY_SLACK,
    })
}

/// Contrast run with a fixed slaving shell.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ControlReport {
    pub q_fixed: i32,
    pub initial_w: f64,
    pub final_w: f64,
    pub decayed: bool,
    pub records: Vec<SyncRecord>,
}

pub fn control_experiment(
    stepper: &Stepper,
    diag: &Diagnostics,
    config: &SyncConfig,
    q_fixed: i32,
    u: TrajectoryState,
    v: TrajectoryState,
    steps: u64,
) -> Result<ControlReport> {
    if q_fixed < 0 {
        return Err(Error::Validation(format!(
            "Q_fixed >= 0 required, got {q_fixed}"
        )));
    }
    let mut cfg = config.clone();
    cfg.enforcement = Enforcement::Fixed(q_fixed);
    let harness = SyncHarness::new(stepper, diag, &cfg);
    let (_, records) = harness.run(u, v, steps, &mut |_| Ok(()))?;
    let initial_w = records.first().map_or(0.0, |r| r.w_hs);
    let final_w = records.last().map_or(0.0, |r| r.w_hs);
    Ok(ControlReport {
        q_fixed,
        initial_w,
        final_w,
        decayed: final_w < initial_w || final_w == 0.0,
        records,
    })
}
