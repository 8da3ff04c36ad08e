//! TOML run configuration: parsing with documented defaults, validation,
//! canonical emission and the configuration hash.
//!
//! ```toml
//! [grid]
//! N = 32            # points per dimension, power of two >= 16
//! L = 1.0           # box length
//!
//! [solver]
//! nu = 0.1          # viscosity (required)
//! dt = 0.001
//! t_end = 0.0
//! snapshot_stride = 100   # 0 disables snapshots
//! diag_stride = 10
//! dealias = "2/3"
//! # transient = 2.5       # default 5 / (nu kappa_0^2)
//!
//! [forcing]
//! kind = "none"     # none | kolmogorov | abc | table
//! amplitude = 0.0   # kolmogorov: A sin(2 pi k_f y / L) e_x; abc: A (sin z + cos y, ...)
//! wavenumber = 1
//! # modes = [{ k = [0, 1, 0], re = [0.0, 0.0, 0.0], im = [-0.5, 0.0, 0.0] }]
//!
//! [diagnostics]
//! delta = 0.5
//! c0 = 0.1
//! window_T = 1.0
//! oversample = false
//! # c_b = 0.3       # Bernstein constant; calibrated when absent
//!
//! [initial]
//! kind = "random"   # random | taylor_green | shear | zero | snapshot
//! seed = 1
//! k_peak = 3.0
//! energy = 0.5
//! amplitude = 1.0   # taylor_green, shear
//! wavenumber = 1    # shear
//! # path = "run/snap_000000.bin"
//!
//! [sync]            # optional
//! perturb_shell = 3
//! perturb_amp = 0.01
//! seed = 12345
//! enforce = "adaptive"    # adaptive | off | fixed:<Q>
//! rule = "support"        # support | blend
//! stride = 1
//! noise_floor = 1e-12
//! ```

use std::hash::Hasher;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::TorusGrid;
use crate::solver::{ForceMode, ForcingSpec, SolverConfig};
use crate::sync::{Enforcement, EnforcementRule, Perturbation, SyncConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "L", default = "one")]
    pub length: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub nu: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub t_end: f64,
    #[serde(default = "default_snapshot_stride")]
    pub snapshot_stride: u64,
    #[serde(default = "default_diag_stride")]
    pub diag_stride: u64,
    #[serde(default = "default_dealias")]
    pub dealias: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transient: Option<f64>,
}

fn default_dt() -> f64 {
    1e-3
}
fn default_snapshot_stride() -> u64 {
    100
}
fn default_diag_stride() -> u64 {
    10
}
fn default_dealias() -> String {
    "2/3".into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForcingSection {
    #[serde(default = "default_forcing_kind")]
    pub kind: String,
    #[serde(default)]
    pub amplitude: f64,
    #[serde(default = "default_wavenumber")]
    pub wavenumber: i64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub modes: Vec<ForceMode>,
}

fn default_forcing_kind() -> String {
    "none".into()
}
fn default_wavenumber() -> i64 {
    1
}

impl Default for ForcingSection {
    fn default() -> Self {
        Self {
            kind: default_forcing_kind(),
            amplitude: 0.0,
            wavenumber: default_wavenumber(),
            modes: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsSection {
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_c0")]
    pub c0: f64,
    #[serde(rename = "window_T", default = "one")]
    pub window_t: f64,
    #[serde(default)]
    pub oversample: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_b: Option<f64>,
}

fn default_delta() -> f64 {
    0.5
}
fn default_c0() -> f64 {
    0.1
}

impl Default for DiagnosticsSection {
    fn default() -> Self {
        Self {
            delta: default_delta(),
            c0: default_c0(),
            window_t: 1.0,
            oversample: false,
            c_b: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    #[serde(default = "default_initial_kind")]
    pub kind: String,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_k_peak")]
    pub k_peak: f64,
    #[serde(default = "default_energy")]
    pub energy: f64,
    #[serde(default = "one")]
    pub amplitude: f64,
    #[serde(default = "default_wavenumber")]
    pub wavenumber: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

fn default_initial_kind() -> String {
    "random".into()
}
fn default_seed() -> u64 {
    1
}
fn default_k_peak() -> f64 {
    3.0
}
fn default_energy() -> f64 {
    0.5
}

impl Default for InitialSection {
    fn default() -> Self {
        Self {
            kind: default_initial_kind(),
            seed: default_seed(),
            k_peak: default_k_peak(),
            energy: default_energy(),
            amplitude: 1.0,
            wavenumber: default_wavenumber(),
            path: None,
        }
    }
}

/// Initial condition selected by `[initial]`.
#[derive(Clone, Debug, PartialEq)]
pub enum InitialCondition {
    Random { seed: u64, k_peak: f64, energy: f64 },
    TaylorGreen { amplitude: f64 },
    Shear { amplitude: f64, wavenumber: i64 },
    Zero,
    Snapshot(PathBuf),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyncSection {
    #[serde(default = "default_perturb_shell")]
    pub perturb_shell: i32,
    #[serde(default = "default_perturb_amp")]
    pub perturb_amp: f64,
    #[serde(default = "default_sync_seed")]
    pub seed: u64,
    #[serde(default = "default_enforce")]
    pub enforce: String,
    #[serde(default = "default_rule")]
    pub rule: String,
    #[serde(default = "default_stride")]
    pub stride: u64,
    #[serde(default = "default_noise_floor")]
    pub noise_floor: f64,
}

fn default_perturb_shell() -> i32 {
    3
}
fn default_perturb_amp() -> f64 {
    1e-2
}
fn default_sync_seed() -> u64 {
    12345
}
fn default_enforce() -> String {
    "adaptive".into()
}
fn default_rule() -> String {
    "support".into()
}
fn default_stride() -> u64 {
    1
}
fn default_noise_floor() -> f64 {
    crate::sync::NOISE_FLOOR
}

impl Default for SyncSection {
    fn default() -> Self {
        Self {
            perturb_shell: default_perturb_shell(),
            perturb_amp: default_perturb_amp(),
            seed: default_sync_seed(),
            enforce: default_enforce(),
            rule: default_rule(),
            stride: default_stride(),
            noise_floor: default_noise_floor(),
        }
    }
}

/// A full run configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub grid: GridSection,
    pub solver: SolverSection,
    #[serde(default)]
    pub forcing: ForcingSection,
    #[serde(default)]
    pub diagnostics: DiagnosticsSection,
    #[serde(default)]
    pub initial: InitialSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sync: Option<SyncSection>,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

impl Config {
    /// Parses and validates configuration text.
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Parse {
            line: e.span().map_or(1, |s| line_of(text, s.start)),
            message: e.message().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn grid(&self) -> Result<TorusGrid> {
        TorusGrid::new(self.grid.n, self.grid.length)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid()?;
        if self.solver.dealias != "2/3" {
            return Err(Error::Validation(format!(
                "dealias must be \"2/3\", got {:?}",
                self.solver.dealias
            )));
        }
        self.solver_config()?.validate()?;
        self.initial_condition()?;
        if let Some(c_b) = self.diagnostics.c_b {
            if !(c_b > 0.0 && c_b.is_finite()) {
                return Err(Error::Validation(format!("c_b > 0 required, got {c_b}")));
            }
        }
        if self.sync.is_some() {
            self.sync_config()?;
        }
        Ok(())
    }

    pub fn forcing(&self) -> Result<ForcingSpec> {
        let f = &self.forcing;
        match f.kind.as_str() {
            "none" => Ok(ForcingSpec::None),
            "kolmogorov" => Ok(ForcingSpec::Kolmogorov {
                amplitude: f.amplitude,
                wavenumber: f.wavenumber,
            }),
            "abc" => Ok(ForcingSpec::Abc {
                amplitude: f.amplitude,
            }),
            "table" => Ok(ForcingSpec::Table(f.modes.clone())),
            other => Err(Error::Validation(format!(
                "forcing kind must be none, kolmogorov, abc or table, got {other:?}"
            ))),
        }
    }

    pub fn solver_config(&self) -> Result<SolverConfig> {
        let s = &self.solver;
        let d = &self.diagnostics;
        Ok(SolverConfig {
            grid: self.grid()?,
            nu: s.nu,
            dt: s.dt,
            t_end: s.t_end,
            forcing: self.forcing()?,
            delta: d.delta,
            c0: d.c0,
            window_t: d.window_t,
            snapshot_stride: s.snapshot_stride,
            diag_stride: s.diag_stride,
            transient: s.transient,
        })
    }

    pub fn initial_condition(&self) -> Result<InitialCondition> {
        let i = &self.initial;
        match i.kind.as_str() {
            "random" => Ok(InitialCondition::Random {
                seed: i.seed,
                k_peak: i.k_peak,
                energy: i.energy,
            }),
            "taylor_green" => Ok(InitialCondition::TaylorGreen {
                amplitude: i.amplitude,
            }),
            "shear" => Ok(InitialCondition::Shear {
                amplitude: i.amplitude,
                wavenumber: i.wavenumber,
            }),
            "zero" => Ok(InitialCondition::Zero),
            "snapshot" => i
                .path
                .clone()
                .map(InitialCondition::Snapshot)
                .ok_or_else(|| Error::Validation("initial kind snapshot needs a path".into())),
            other => Err(Error::Validation(format!(
                "initial kind must be random, taylor_green, shear, zero or snapshot, got {other:?}"
            ))),
        }
    }

    /// Sync configuration from `[sync]` (defaults when the section is absent).
    pub fn sync_config(&self) -> Result<SyncConfig> {
        let s = self.sync.clone().unwrap_or_default();
        let enforcement: Enforcement = s.enforce.parse()?;
        let mut cfg = SyncConfig::new(
            self.solver.nu,
            self.diagnostics.delta,
            Perturbation {
                shell: s.perturb_shell,
                amplitude: s.perturb_amp,
                seed: s.seed,
            },
            enforcement,
        )?;
        cfg.rule = match s.rule.as_str() {
            "support" => EnforcementRule::Support,
            "blend" => EnforcementRule::Blend,
            other => {
                return Err(Error::Validation(format!(
                    "rule must be support or blend, got {other:?}"
                )))
            }
        };
        if s.stride == 0 {
            return Err(Error::Validation("sync stride >= 1 required".into()));
        }
        if !(s.noise_floor >= 0.0) {
            return Err(Error::Validation("noise_floor >= 0 required".into()));
        }
        cfg.stride = s.stride;
        cfg.noise_floor = s.noise_floor;
        Ok(cfg)
    }

    /// Canonical text with every default written out.
    pub fn emit(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// FNV-1a 64 of the canonical text.
    pub fn hash(&self) -> u64 {
        fnv1a(self.emit().as_bytes())
    }

    pub fn hash_hex(&self) -> String {
        format!("{:016x}", self.hash())
    }
}

/// 64-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = fnv::FnvHasher::default();
    h.write(bytes);
    h.finish()
}
