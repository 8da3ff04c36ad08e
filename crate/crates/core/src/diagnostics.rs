//! Scalar diagnostics of a trajectory: determining wavenumber, intermittency
//! dimension, dissipation wavenumber, Grashof numbers and the bound checks
//! built on them.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fft::Fft3;
use crate::grid::TorusGrid;
use crate::lp::{BlockNorms, CutoffProfile, LittlewoodPaley};
use crate::solver::trapezoid;
use crate::spectral::{pointwise_max_norm, SpectralField, SpectralVelocity};
use rustfft::num_complex::Complex64;

/// Parameters of the determining-wavenumber definition.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DeterminingParams {
    pub nu: f64,
    pub delta: f64,
    pub c0: f64,
}

impl DeterminingParams {
    pub fn new(nu: f64, delta: f64, c0: f64) -> Result<Self> {
        if !(nu > 0.0) || !(c0 > 0.0) || !(delta > 0.0 && delta <= 1.0) {
            return Err(Error::Validation(format!(
                "need nu > 0, c0 > 0, delta in (0, 1]; got nu = {nu}, c0 = {c0}, delta = {delta}"
            )));
        }
        Ok(Self { nu, delta, c0 })
    }

    /// `sigma = (delta - 1) / 2`.
    pub fn sigma(&self) -> f64 {
        0.5 * (self.delta - 1.0)
    }

    fn threshold(&self) -> f64 {
        self.c0 * self.nu
    }

    /// `(L lambda_{p-q})^sigma = 2^{(p-q) sigma}`.
    fn weight(&self, gap: i32) -> f64 {
        2f64.powf(gap as f64 * self.sigma())
    }
}

/// `Lambda = lambda_Q = 2^Q / L`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Determining {
    pub q: i32,
}

impl Determining {
    pub fn lambda(&self, grid: TorusGrid) -> f64 {
        grid.lambda(self.q)
    }
}

/// First condition at `q`: every higher block is small.
fn high_blocks_small(
    p: &DeterminingParams,
    linf: &[f64],
    lambda_q: f64,
    q: i32,
    q_max: i32,
) -> bool {
    ((q + 1)..=q_max)
        .all(|pp| p.weight(pp - q) * linf[(pp + 1) as usize] / lambda_q < p.threshold())
}

/// Fast path: block sup-norms once, low-pass gradients only where needed.
pub fn determining_from_norms(
    lp: &LittlewoodPaley,
    norms: &[BlockNorms],
    params: &DeterminingParams,
    mut grad_low: impl FnMut(i32) -> f64,
) -> Result<Determining> {
    let q_max = lp.q_max();
    let linf: Vec<f64> = norms.iter().map(|n| n.linf).collect();
    for q in 0..=q_max {
        let lq = lp.lambda(q);
        if !high_blocks_small(params, &linf, lq, q, q_max) {
            continue;
        }
        if grad_low(q) / (lq * lq) < params.threshold() {
            return Ok(Determining { q });
        }
    }
    Err(Error::Unresolved { q_max })
}

pub fn determining_wavenumber(
    lp: &LittlewoodPaley,
    u: &SpectralVelocity,
    params: &DeterminingParams,
) -> Result<Determining> {
    let norms = lp.shell_norms(u);
    determining_from_norms(lp, &norms, params, |q| lp.grad_low_linf(u, q))
}

/// Exhaustive evaluation of the definition with independently built block
/// norms: multipliers evaluated directly from the cutoff profile over the
/// full lattice, low-pass fields as explicit block sums, and every `(q, p)`
/// pair tested without short-circuiting.
pub fn determining_oracle(
    grid: TorusGrid,
    u: &SpectralField,
    params: &DeterminingParams,
) -> Result<Determining> {
    let fft = Fft3::new(grid);
    let q_max = (grid.dealias_cutoff() as f64).log2().ceil() as i32;
    let k0 = grid.kappa0();
    let multiplier = |q: i32| -> Vec<f64> {
        (0..grid.len())
            .map(|idx| {
                let k = grid.wave_vector(idx);
                let r = ((k[0] * k[0] + k[1] * k[1] + k[2] * k[2]) as f64).sqrt();
                CutoffProfile::phi_q(q, r)
            })
            .collect()
    };
    let mults: Vec<Vec<f64>> = (-1..=q_max).map(multiplier).collect();
    let filtered = |w: &dyn Fn(usize) -> f64| -> [Vec<Complex64>; 3] {
        [0, 1, 2].map(|c| (0..grid.len()).map(|i| u.component(c)[i] * w(i)).collect())
    };
    let mut linf = Vec::new();
    for p in -1..=q_max {
        let m = &mults[(p + 1) as usize];
        let b = filtered(&|i| m[i]);
        let phys = fft.synthesize(&[&b[0], &b[1], &b[2]]);
        linf.push(pointwise_max_norm(&[&phys[0], &phys[1], &phys[2]]));
    }
    let mut grad = Vec::new();
    for q in 0..=q_max {
        let low = filtered(&|i| (-1..=q).map(|p| mults[(p + 1) as usize][i]).sum::<f64>());
        let mut d = Vec::new();
        for comp in &low {
            for axis in 0..3 {
                d.push(
                    (0..grid.len())
                        .map(|i| {
                            let k = grid.wave_vector(i)[axis] as f64 * k0;
                            comp[i] * Complex64::new(0.0, k)
                        })
                        .collect::<Vec<_>>(),
                );
            }
        }
        let refs: Vec<&[Complex64]> = d.iter().map(|v| v.as_slice()).collect();
        let phys = fft.synthesize(&refs);
        let prefs: Vec<&[f64]> = phys.iter().map(|v| v.as_slice()).collect();
        grad.push(pointwise_max_norm(&prefs));
    }
    let thr = params.c0 * params.nu;
    let mut qualifying = Vec::new();
    for q in 0..=q_max {
        let lq = grid.lambda(q);
        let mut first = true;
        for p in (q + 1)..=q_max {
            let w = 2f64.powf((p - q) as f64 * params.sigma());
            if !(w * linf[(p + 1) as usize] / lq < thr) {
                first = false;
            }
        }
        let second = grad[q as usize] / (lq * lq) < thr;
        if first && second {
            qualifying.push(q);
        }
    }
    qualifying
        .into_iter()
        .min()
        .map(|q| Determining { q })
        .ok_or(Error::Unresolved { q_max })
}

/// Minimality witness and the pointwise estimate at `Q`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PointwiseReport {
    pub q: i32,
    pub lambda: f64,
    /// `Lambda = lambda_0`; nothing to check.
    pub at_floor: bool,
    /// Some `p >= Q` violates the high-block condition at `Q - 1`.
    pub alt1: bool,
    /// The low-pass gradient condition fails at `Q - 1`.
    pub alt2: bool,
    /// `(c0 nu)^2 (Lambda - lambda_0)^4`
    pub lhs: f64,
    /// `||grad u_{<=Q-1}||_inf^2 + sup_{p>=Q} 2^{2(p-Q) sigma} Lambda^2 ||u_p||_inf^2`
    pub rhs: f64,
    pub ratio: Option<f64>,
}

impl PointwiseReport {
    pub fn witness_holds(&self) -> bool {
        self.at_floor || self.alt1 || self.alt2
    }
}

pub fn pointwise_estimate_check(
    lp: &LittlewoodPaley,
    u: &SpectralVelocity,
    params: &DeterminingParams,
    det: Determining,
) -> PointwiseReport {
    let grid = lp.grid();
    let lambda = det.lambda(grid);
    let q = det.q;
    if q == 0 {
        return PointwiseReport {
            q,
            lambda,
            at_floor: true,
            alt1: false,
            alt2: false,
            lhs: 0.0,
            rhs: 0.0,
            ratio: None,
        };
    }
    let norms = lp.shell_norms(u);
    let linf = |p: i32| norms[(p + 1) as usize].linf;
    let prev = q - 1;
    let lprev = lp.lambda(prev);
    let thr = params.threshold();
    let alt1 = (q..=lp.q_max()).any(|p| params.weight(p - prev) * linf(p) / lprev >= thr);
    let grad = lp.grad_low_linf(u, prev);
    let alt2 = grad >= thr * lprev * lprev;
    let lhs = (thr * (lambda - grid.lambda0())).powi(2) * (lambda - grid.lambda0()).powi(2);
    let sup = (q..=lp.q_max())
        .map(|p| (params.weight(p - q) * lambda * linf(p)).powi(2))
        .fold(0.0, f64::max);
    let rhs = grad * grad + sup;
    PointwiseReport {
        q,
        lambda,
        at_floor: false,
        alt1,
        alt2,
        lhs,
        rhs,
        ratio: Some(rhs / lhs),
    }
}

/// Per-time diagnostics of one velocity field.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub energy: f64,
    pub enstrophy: f64,
    /// `None` when no shell qualifies on this grid.
    pub determining: Option<Determining>,
    /// Shells `-1..=q_max`.
    pub shells: Vec<BlockNorms>,
    /// `||grad u_{<=q}||_inf` for `q = -1..=q_max`.
    pub grad_low_linf: Vec<f64>,
}

impl DiagnosticsRecord {
    pub fn lambda(&self, grid: TorusGrid) -> Option<f64> {
        self.determining.map(|d| d.lambda(grid))
    }
}

/// Diagnostics context for one grid and parameter set.
#[derive(Debug, Clone)]
pub struct Diagnostics {
    lp: Arc<LittlewoodPaley>,
    params: DeterminingParams,
}

impl Diagnostics {
    pub fn new(lp: Arc<LittlewoodPaley>, params: DeterminingParams) -> Self {
        Self { lp, params }
    }

    pub fn lp(&self) -> &Arc<LittlewoodPaley> {
        &self.lp
    }

    pub fn params(&self) -> &DeterminingParams {
        &self.params
    }

    pub fn determining(&self, u: &SpectralVelocity) -> Result<Determining> {
        determining_wavenumber(&self.lp, u, &self.params)
    }

    pub fn record(&self, u: &SpectralVelocity) -> DiagnosticsRecord {
        let sp = self.lp.spectral();
        let shells = self.lp.shell_norms(u);
        let grad_low_linf: Vec<f64> = (-1..=self.lp.q_max())
            .map(|q| self.lp.grad_low_linf(u, q))
            .collect();
        let determining = determining_from_norms(&self.lp, &shells, &self.params, |q| {
            grad_low_linf[(q + 1) as usize]
        })
        .ok();
        DiagnosticsRecord {
            t: u.time(),
            energy: sp.energy(u),
            enstrophy: sp.enstrophy(u),
            determining,
            shells,
            grad_low_linf,
        }
    }
}

/// Time average by the trapezoid rule; a single sample is its own average.
fn time_average(t: &[f64], v: &[f64]) -> f64 {
    match t.len() {
        0 => 0.0,
        1 => v[0],
        _ => trapezoid(t, v) / (t[t.len() - 1] - t[0]),
    }
}

/// Window-averaged shell data entering the intermittency constraint.
#[derive(Clone, Debug, PartialEq)]
pub struct ShellAverages {
    pub lambda: Vec<f64>,
    /// `<||u_q||_inf^2>`
    pub linf_sq: Vec<f64>,
    /// `<||u_q||_2^2>`
    pub l2_sq: Vec<f64>,
}

impl ShellAverages {
    pub fn from_records(records: &[DiagnosticsRecord]) -> Result<Self> {
        let first = records
            .first()
            .ok_or_else(|| Error::InsufficientData("no records in window".into()))?;
        let t: Vec<f64> = records.iter().map(|r| r.t).collect();
        let count = first.shells.len();
        let avg = |f: &dyn Fn(&BlockNorms) -> f64| -> Vec<f64> {
            (0..count)
                .map(|i| {
                    let v: Vec<f64> = records.iter().map(|r| f(&r.shells[i])).collect();
                    time_average(&t, &v)
                })
                .collect()
        };
        Ok(Self {
            lambda: first.shells.iter().map(|n| n.lambda).collect(),
            linf_sq: avg(&|n| n.linf * n.linf),
            l2_sq: avg(&|n| n.l2 * n.l2),
        })
    }

    /// `ln lhs(s) - ln rhs(s)`; the constraint holds where this is `<= 0`.
    fn log_gap(&self, s: f64, c_b: f64, lambda0: f64) -> f64 {
        let lhs = log_sum_exp(
            self.lambda
                .iter()
                .zip(&self.linf_sq)
                .filter(|(_, a)| **a > 0.0)
                .map(|(l, a)| (s - 1.0) * l.ln() + a.ln()),
        );
        let rhs_sum: f64 = self
            .lambda
            .iter()
            .zip(&self.l2_sq)
            .map(|(l, b)| l * l * b)
            .sum();
        lhs - ((3.0 - s) * c_b.ln() + s * lambda0.ln() + rhs_sum.ln())
    }
}

fn log_sum_exp(terms: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = terms.collect();
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Scan step and bisection width for the intermittency supremum.
pub const D_SCAN_STEP: f64 = 1e-3;
pub const D_BISECT_TOL: f64 = 1e-9;

/// Intermittency dimension from window averages: the largest `s` in
/// `[0, 3]` satisfying the averaged Bernstein-saturation constraint.
pub fn intermittency_dimension(avg: &ShellAverages, c_b: f64, lambda0: f64) -> f64 {
    if avg.linf_sq.iter().all(|a| *a == 0.0) {
        return 3.0;
    }
    let feasible = |s: f64| avg.log_gap(s, c_b, lambda0) <= 0.0;
    let steps = (3.0 / D_SCAN_STEP).round() as usize;
    let grid = |i: usize| (i as f64 * D_SCAN_STEP).min(3.0);
    let Some(last) = (0..=steps).rev().find(|&i| feasible(grid(i))) else {
        return 0.0;
    };
    if last == steps {
        return 3.0;
    }
    let (mut lo, mut hi) = (grid(last), grid(last + 1));
    while hi - lo > D_BISECT_TOL {
        let mid = 0.5 * (lo + hi);
        if feasible(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo.clamp(0.0, 3.0)
}

/// Closed-form root of the constraint when one shell carries everything.
pub fn single_block_dimension(
    lambda_q: f64,
    linf_sq: f64,
    l2_sq: f64,
    c_b: f64,
    lambda0: f64,
) -> f64 {
    (c_b.powi(3) * lambda_q.powi(3) * l2_sq / linf_sq).ln() / (c_b * lambda_q / lambda0).ln()
}

/// `eps = nu lambda_0^d <||grad u||^2>` and `kappa_d = (eps / nu^3)^{1/(d+1)}`.
pub fn dissipation_wavenumber(avg_enstrophy: f64, nu: f64, d: f64, lambda0: f64) -> (f64, f64) {
    let eps = nu * lambda0.powf(d) * avg_enstrophy;
    (eps, (eps / nu.powi(3)).powf(1.0 / (d + 1.0)))
}

/// `||f||_{H^-1} = (sum_q lambda_q^{-2} ||f_q||_2^2)^{1/2}`.
pub fn h_minus1_norm(lp: &LittlewoodPaley, f: &SpectralField) -> f64 {
    (-1..=lp.q_max())
        .map(|q| (lp.block_l2(f, q) / lp.lambda(q)).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Force samples `f(t_i)` for the nonautonomous Grashof number.
#[derive(Clone, Debug)]
pub struct ForceTable {
    pub times: Vec<f64>,
    pub forces: Vec<SpectralField>,
}

#[derive(Clone, Copy, Debug)]
pub enum GrashofMode<'a> {
    Autonomous,
    Nonautonomous { window: f64, table: &'a ForceTable },
}

/// `G = ||f||_{H^-1} / (nu^2 kappa_0^{1/2})`, or the translationally bounded
/// variant over windows of length `T`.
pub fn grashof(
    lp: &LittlewoodPaley,
    force: &SpectralField,
    nu: f64,
    mode: GrashofMode<'_>,
) -> Result<f64> {
    let k0 = lp.grid().kappa0();
    match mode {
        GrashofMode::Autonomous => Ok(h_minus1_norm(lp, force) / (nu * nu * k0.sqrt())),
        GrashofMode::Nonautonomous { window, table } => {
            let sq: Vec<f64> = table
                .forces
                .iter()
                .map(|f| h_minus1_norm(lp, f).powi(2))
                .collect();
            let l2b = translational_sup(&table.times, &sq, window)?.sqrt();
            let damp = 1.0 - (-nu * k0 * k0 * window).exp();
            Ok(window.sqrt() * k0.sqrt() * l2b / (nu.powf(1.5) * damp.sqrt()))
        }
    }
}

/// `sup_t (1/T) int_t^{t+T} g`, with `g` piecewise linear between samples
/// and window starts at the sample times.
fn translational_sup(t: &[f64], g: &[f64], window: f64) -> Result<f64> {
    if t.len() < 2 || t.len() != g.len() || t[t.len() - 1] - t[0] < window * (1.0 - 1e-12) {
        return Err(Error::InsufficientData(format!(
            "force table must span at least T = {window}"
        )));
    }
    let interp = |x: f64| -> f64 {
        let i = t.partition_point(|&ti| ti <= x).clamp(1, t.len() - 1);
        let (t0, t1) = (t[i - 1], t[i]);
        g[i - 1] + (g[i] - g[i - 1]) * (x - t0) / (t1 - t0)
    };
    let end = t[t.len() - 1];
    let mut best = f64::NEG_INFINITY;
    for (i, &start) in t.iter().enumerate() {
        let stop = start + window;
        if stop > end * (1.0 + 1e-12) + 1e-12 {
            break;
        }
        let mut ts = vec![start];
        let mut vs = vec![g[i]];
        for j in (i + 1)..t.len() {
            if t[j] >= stop {
                break;
            }
            ts.push(t[j]);
            vs.push(g[j]);
        }
        ts.push(stop);
        vs.push(interp(stop.min(end)));
        best = best.max(trapezoid(&ts, &vs) / window);
    }
    Ok(best)
}

/// `G_na / G` for a constant force: `sqrt(nu kappa_0^2 T / (1 - exp(-nu kappa_0^2 T)))`.
pub fn grashof_constant_ratio(nu: f64, kappa0: f64, window: f64) -> f64 {
    let x = nu * kappa0 * kappa0 * window;
    (x / (1.0 - (-x).exp())).sqrt()
}

/// One side-by-side inequality check with relative slack.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BoundCheck {
    pub lhs: f64,
    pub rhs: f64,
    /// `1 - lhs / rhs`; negative means violated.
    pub margin: f64,
    pub holds: bool,
}

/// Slack allowed on the enstrophy and dissipation-wavenumber bounds.
pub const BOUND_SLACK: f64 = 0.05;

impl BoundCheck {
    pub fn new(lhs: f64, rhs: f64) -> Self {
        let margin = if rhs > 0.0 {
            1.0 - lhs / rhs
        } else if lhs <= 0.0 {
            0.0
        } else {
            f64::NEG_INFINITY
        };
        Self {
            lhs,
            rhs,
            margin,
            holds: lhs <= rhs * (1.0 + BOUND_SLACK),
        }
    }
}

/// The enstrophy bound in the stated form (first term `G^2/(T kappa_0)`)
/// and in the dimensionally consistent form (first term
/// `nu G^2/(T kappa_0)`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EnstrophyBoundReport {
    pub verbatim: BoundCheck,
    pub consistent: BoundCheck,
}

pub fn enstrophy_bound_check(
    avg_enstrophy: f64,
    g: f64,
    nu: f64,
    kappa0: f64,
    window: f64,
) -> EnstrophyBoundReport {
    let tail = kappa0 * nu * nu * g * g;
    EnstrophyBoundReport {
        verbatim: BoundCheck::new(avg_enstrophy, g * g / (window * kappa0) + tail),
        consistent: BoundCheck::new(avg_enstrophy, nu * g * g / (window * kappa0) + tail),
    }
}

/// `kappa_d <= kappa_0 G^{2/(d+1)} (1/(nu^a T kappa_0^2) + 1)^{1/(d+1)}`
/// with `a = 2` (stated) and `a = 1` (dimensionally consistent).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KappaBoundReport {
    pub verbatim: BoundCheck,
    pub consistent: BoundCheck,
}

pub fn kappa_grashof_bound_check(
    kappa_d: f64,
    g: f64,
    nu: f64,
    window: f64,
    kappa0: f64,
    d: f64,
) -> KappaBoundReport {
    let e = 1.0 / (d + 1.0);
    let rhs = |a: i32| {
        kappa0 * g.powf(2.0 * e) * (1.0 / (nu.powi(a) * window * kappa0 * kappa0) + 1.0).powf(e)
    };
    KappaBoundReport {
        verbatim: BoundCheck::new(kappa_d, rhs(2)),
        consistent: BoundCheck::new(kappa_d, rhs(1)),
    }
}

/// Time-averaged quantities over one window.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WindowStats {
    pub t_start: f64,
    pub window: f64,
    pub avg_enstrophy: f64,
    pub d: f64,
    pub eps: f64,
    pub kappa_d: f64,
    pub avg_lambda: f64,
    /// `<(Lambda - lambda_0) / log(2 Lambda / lambda_0)^{1/4}>`
    pub avg_lambda_log: f64,
    /// `<(Lambda - lambda_0) / log(Lambda lambda_0)^{1/4}>`, NaN where the
    /// logarithm is not positive while `Lambda > lambda_0`.
    pub avg_lambda_log_literal: f64,
    pub g: f64,
    pub c_emp: f64,
    pub enstrophy_bound: EnstrophyBoundReport,
    pub kappa_bound: KappaBoundReport,
}

/// Inputs shared by every window of a run.
#[derive(Clone, Copy, Debug)]
pub struct WindowContext {
    pub grid: TorusGrid,
    pub nu: f64,
    pub c_b: f64,
    pub g: f64,
}

/// Builds the statistics of one window from its records. Every record must
/// carry a resolved determining wavenumber.
pub fn window_stats(ctx: &WindowContext, records: &[DiagnosticsRecord]) -> Result<WindowStats> {
    if records.len() < 2 {
        return Err(Error::InsufficientData(
            "a window needs at least two records".into(),
        ));
    }
    let grid = ctx.grid;
    let l0 = grid.lambda0();
    let k0 = grid.kappa0();
    let t: Vec<f64> = records.iter().map(|r| r.t).collect();
    let window = t[t.len() - 1] - t[0];
    let lambdas: Vec<f64> = records
        .iter()
        .map(|r| {
            r.lambda(grid).ok_or(Error::Unresolved {
                q_max: r.shells.len() as i32 - 2,
            })
        })
        .collect::<Result<_>>()?;
    let ens: Vec<f64> = records.iter().map(|r| r.enstrophy).collect();
    let avg_enstrophy = time_average(&t, &ens);
    let d = intermittency_dimension(&ShellAverages::from_records(records)?, ctx.c_b, l0);
    let (eps, kappa_d) = dissipation_wavenumber(avg_enstrophy, ctx.nu, d, l0);
    let avg_lambda = time_average(&t, &lambdas);
    let log_term = |lam: f64, arg: f64| -> f64 {
        if lam <= l0 {
            0.0
        } else if arg.ln() > 0.0 {
            (lam - l0) / arg.ln().powf(0.25)
        } else {
            f64::NAN
        }
    };
    let surrogate: Vec<f64> = lambdas.iter().map(|&l| log_term(l, 2.0 * l / l0)).collect();
    let literal: Vec<f64> = lambdas.iter().map(|&l| log_term(l, l * l0)).collect();
    let stats_c = empirical_constant(avg_lambda, time_average(&t, &surrogate), kappa_d, d, l0)?;
    Ok(WindowStats {
        t_start: t[0],
        window,
        avg_enstrophy,
        d,
        eps,
        kappa_d,
        avg_lambda,
        avg_lambda_log: time_average(&t, &surrogate),
        avg_lambda_log_literal: time_average(&t, &literal),
        g: ctx.g,
        c_emp: stats_c,
        enstrophy_bound: enstrophy_bound_check(avg_enstrophy, ctx.g, ctx.nu, k0, window),
        kappa_bound: kappa_grashof_bound_check(kappa_d, ctx.g, ctx.nu, window, k0, d),
    })
}

/// Intermittency above which the log-corrected average is used.
pub const LOG_CORRECTION_D: f64 = 2.9;

/// `(<Lambda> - lambda_0) / kappa_d`, or the log-corrected numerator when
/// `d >= 2.9`; `0/0` is taken as zero.
pub fn empirical_constant(
    avg_lambda: f64,
    avg_lambda_log: f64,
    kappa_d: f64,
    d: f64,
    lambda0: f64,
) -> Result<f64> {
    let num = if d >= LOG_CORRECTION_D {
        avg_lambda_log
    } else {
        avg_lambda - lambda0
    };
    if kappa_d == 0.0 {
        if avg_lambda > lambda0 {
            return Err(Error::DivisionByZeroKappa { avg_lambda });
        }
        return Ok(0.0);
    }
    Ok(num / kappa_d)
}

/// Report over a sequence of windows.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LambdaKappaReport {
    pub c_emp: Vec<f64>,
    pub all_finite: bool,
}

pub fn average_lambda_vs_kappa(windows: &[WindowStats]) -> LambdaKappaReport {
    let c_emp: Vec<f64> = windows.iter().map(|w| w.c_emp).collect();
    LambdaKappaReport {
        all_finite: c_emp.iter().all(|c| c.is_finite()),
        c_emp,
    }
}

/// `D = min d` and `K_d = max kappa_d` over the sampled windows.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EnsembleStats {
    pub d_min: f64,
    pub kappa_max: f64,
    pub windows: usize,
}

impl EnsembleStats {
    pub fn from_windows<'a>(windows: impl IntoIterator<Item = &'a WindowStats>) -> Option<Self> {
        let mut out: Option<Self> = None;
        for w in windows {
            let e = out.get_or_insert(Self {
                d_min: f64::INFINITY,
                kappa_max: 0.0,
                windows: 0,
            });
            e.d_min = e.d_min.min(w.d);
            e.kappa_max = e.kappa_max.max(w.kappa_d);
            e.windows += 1;
        }
        out
    }
}

/// Splits records into trailing, non-overlapping windows of length `T`
/// starting at the first record at or after `t_from`.
pub fn split_windows(
    records: &[DiagnosticsRecord],
    t_from: f64,
    window: f64,
) -> Vec<&[DiagnosticsRecord]> {
    let eps = 1e-9 * window;
    let mut out = Vec::new();
    let Some(mut start) = records.iter().position(|r| r.t >= t_from - eps) else {
        return out;
    };
    loop {
        let t0 = records[start].t;
        let Some(end) = records[start..]
            .iter()
            .position(|r| r.t >= t0 + window - eps)
        else {
            break;
        };
        let end = start + end;
        out.push(&records[start..=end]);
        start = end;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::Spectral;

    fn lp(n: usize) -> LittlewoodPaley {
        LittlewoodPaley::new(Arc::new(Spectral::new(TorusGrid::new(n, 1.0).unwrap())))
    }

    #[test]
    fn zero_field_sits_at_floor() {
        let lp = lp(16);
        let p = DeterminingParams::new(0.1, 0.5, 0.1).unwrap();
        let u = SpectralVelocity::zeros(lp.grid());
        let d = determining_wavenumber(&lp, &u, &p).unwrap();
        assert_eq!(d.q, 0);
        assert_eq!(d.lambda(lp.grid()), 1.0);
        assert_eq!(determining_oracle(lp.grid(), &u, &p).unwrap(), d);
        assert!(pointwise_estimate_check(&lp, &u, &p, d).at_floor);
    }

    #[test]
    fn dissipation_wavenumber_examples() {
        assert_eq!(dissipation_wavenumber(16.0, 1.0, 3.0, 1.0).1, 2.0);
        assert_eq!(dissipation_wavenumber(16.0, 1.0, 0.0, 1.0).1, 16.0);
        assert_eq!(dissipation_wavenumber(0.0, 0.3, 1.7, 0.5), (0.0, 0.0));
    }

    #[test]
    fn zero_trajectory_has_full_dimension() {
        let avg = ShellAverages {
            lambda: vec![0.5, 1.0, 2.0],
            linf_sq: vec![0.0; 3],
            l2_sq: vec![0.0; 3],
        };
        assert_eq!(intermittency_dimension(&avg, 2.0, 1.0), 3.0);
    }

    #[test]
    fn single_block_matches_closed_form() {
        let (lq, a, b, cb, l0) = (8.0, 0.0512, 0.01, 0.4, 1.0);
        let avg = ShellAverages {
            lambda: vec![0.5, 1.0, 2.0, 4.0, lq],
            linf_sq: vec![0.0, 0.0, 0.0, 0.0, a],
            l2_sq: vec![0.0, 0.0, 0.0, 0.0, b],
        };
        let d = intermittency_dimension(&avg, cb, l0);
        let want = single_block_dimension(lq, a, b, cb, l0);
        assert!(want > 0.0 && want < 3.0, "{want}");
        assert!((d - want).abs() < 1e-6, "{d} vs {want}");
    }

    #[test]
    fn grashof_ratio_in_constant_limit() {
        let lp = lp(16);
        let sp = lp.spectral().clone();
        let f = crate::solver::ForcingSpec::Kolmogorov {
            amplitude: 1.0,
            wavenumber: 2,
        }
        .build(&sp)
        .unwrap();
        let table = ForceTable {
            times: vec![0.0, 0.5, 1.0, 1.5, 2.0],
            forces: vec![f.field().clone(); 5],
        };
        let ga = grashof(&lp, &f, 0.1, GrashofMode::Autonomous).unwrap();
        let gn = grashof(
            &lp,
            &f,
            0.1,
            GrashofMode::Nonautonomous {
                window: 1.0,
                table: &table,
            },
        )
        .unwrap();
        let want = grashof_constant_ratio(0.1, lp.grid().kappa0(), 1.0);
        assert!((gn / ga - want).abs() < 1e-12 * want);
    }

    #[test]
    fn bound_checks_flag_negative_controls() {
        let ok = enstrophy_bound_check(1.0, 10.0, 0.1, 2.0 * std::f64::consts::PI, 1.0);
        assert!(ok.verbatim.holds && ok.consistent.holds);
        let bad = enstrophy_bound_check(1e6, 1.0, 0.1, 2.0 * std::f64::consts::PI, 1.0);
        assert!(!bad.verbatim.holds && !bad.consistent.holds);
        let k = kappa_grashof_bound_check(1e9, 1.0, 0.1, 1.0, 6.28, 2.0);
        assert!(!k.verbatim.holds && !k.consistent.holds);
        assert!(
            kappa_grashof_bound_check(0.0, 0.0, 0.1, 1.0, 6.28, 3.0)
                .consistent
                .holds
        );
    }

    #[test]
    fn empirical_constant_conventions() {
        assert_eq!(empirical_constant(1.0, 0.0, 0.0, 1.0, 1.0).unwrap(), 0.0);
        assert!(matches!(
            empirical_constant(2.0, 0.0, 0.0, 1.0, 1.0),
            Err(Error::DivisionByZeroKappa { .. })
        ));
        assert_eq!(empirical_constant(3.0, 0.5, 2.0, 1.0, 1.0).unwrap(), 1.0);
        assert_eq!(empirical_constant(3.0, 0.5, 2.0, 2.95, 1.0).unwrap(), 0.25);
    }
}
