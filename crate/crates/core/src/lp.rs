//! Littlewood-Paley decomposition on the integer Fourier lattice.
//!
//! Shell `q >= 0` carries the multiplier `phi(2^-q k)` with
//! `phi(xi) = chi(xi/2) - chi(xi)`, shell `-1` carries `chi(k)`. The cutoff
//! `chi` is the radial smooth step `psi(4 (1 - |xi|))`, equal to one on
//! `|xi| <= 3/4` and vanishing on `|xi| >= 1`.

use std::sync::Arc;

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::TorusGrid;
use crate::par;
use crate::spectral::{pointwise_max_norm, Spectral, SpectralField, SpectralVelocity};

/// The radial cutoff `chi` and the dyadic bump `phi` built from it.
#[derive(Clone, Copy, Debug, Default)]
pub struct CutoffProfile;

impl CutoffProfile {
    fn g(x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else {
            (-1.0 / x).exp()
        }
    }

    /// Smooth monotone step: 0 for `x <= 0`, 1 for `x >= 1`.
    pub fn smooth_step(x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else if x >= 1.0 {
            1.0
        } else {
            let a = Self::g(x);
            a / (a + Self::g(1.0 - x))
        }
    }

    /// `chi` at radius `r = |xi|`.
    pub fn chi(r: f64) -> f64 {
        Self::smooth_step(4.0 * (1.0 - r))
    }

    /// `phi` at radius `r`.
    pub fn phi(r: f64) -> f64 {
        Self::chi(0.5 * r) - Self::chi(r)
    }

    /// `phi_q(r)`: `chi(r)` for `q = -1`, `phi(2^-q r)` otherwise.
    pub fn phi_q(q: i32, r: f64) -> f64 {
        if q < 0 {
            Self::chi(r)
        } else {
            Self::phi(r / 2f64.powi(q))
        }
    }

    /// Low-pass multiplier of `u_{<=q}`: `chi(2^{-q-1} r)`.
    pub fn low_pass(q: i32, r: f64) -> f64 {
        Self::chi(r / 2f64.powi(q + 1))
    }
}

/// Smallest shell index whose support covers every `|k| <= radius`.
pub fn covering_shell(radius: f64) -> i32 {
    let mut q = -1;
    while 0.75 * 2f64.powi(q + 1) < radius {
        q += 1;
    }
    q
}

/// Which lattice a partition-of-unity check runs over.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Lattice {
    /// All of `{-N/2+1, ..., N/2}^3`.
    Resolved,
    /// The 2/3-rule set `|k_i| <= N/3`.
    Dealiased,
}

/// `max_k |chi(k) + sum_{q=0}^{q_top} phi_q(k) - 1|` over the chosen lattice.
pub fn partition_residual(grid: TorusGrid, q_top: i32, lattice: Lattice) -> f64 {
    let mut worst = 0.0_f64;
    for idx in 0..grid.len() {
        let k = grid.wave_vector(idx);
        if lattice == Lattice::Dealiased && !grid.is_dealiased(k) {
            continue;
        }
        let r = ((k[0] * k[0] + k[1] * k[1] + k[2] * k[2]) as f64).sqrt();
        let total: f64 = (-1..=q_top).map(|q| CutoffProfile::phi_q(q, r)).sum();
        worst = worst.max((total - 1.0).abs());
    }
    worst
}

/// Norms of one dyadic block.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct BlockNorms {
    pub q: i32,
    pub lambda: f64,
    pub l2: f64,
    pub linf: f64,
}

/// All blocks of one field together with their norms.
#[derive(Clone, Debug)]
pub struct LpDecomposition {
    pub q_max: i32,
    pub blocks: Vec<SpectralVelocity>,
    pub norms: Vec<BlockNorms>,
}

impl LpDecomposition {
    pub fn block(&self, q: i32) -> Option<&SpectralVelocity> {
        self.blocks.get((q + 1) as usize)
    }
}

/// Result of a Bernstein-constant calibration.
#[derive(Clone, Debug, PartialEq)]
pub struct BernsteinCalibration {
    /// `max ||u_q||_inf^2 / (lambda_q^3 ||u_q||_2^2)` over nonempty blocks.
    pub c_b: f64,
    /// Nonempty blocks examined.
    pub blocks: usize,
    /// Blocks violating `lambda_0^3 ||u_q||_2^2 <= ||u_q||_inf^2`.
    pub lower_violations: usize,
}

/// One sampled block against a Bernstein constant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SandwichCheck {
    pub lower_ok: bool,
    pub upper_ok: bool,
}

#[derive(Debug)]
struct ShellMask {
    entries: Vec<(usize, f64)>,
}

/// Littlewood-Paley machinery for one grid.
#[derive(Debug)]
pub struct LittlewoodPaley {
    spectral: Arc<Spectral>,
    q_max: i32,
    shells: Vec<ShellMask>,
    oversampled: Option<(Spectral, Vec<usize>)>,
}

impl LittlewoodPaley {
    pub fn new(spectral: Arc<Spectral>) -> Self {
        Self::build(spectral, false)
    }

    /// Evaluates L-infinity norms on a twice finer grid.
    pub fn with_oversampling(spectral: Arc<Spectral>) -> Self {
        Self::build(spectral, true)
    }

    fn build(spectral: Arc<Spectral>, oversample: bool) -> Self {
        let grid = spectral.grid();
        let cutoff = grid.dealias_cutoff() as f64;
        let q_max = cutoff.log2().ceil() as i32;
        let shells = (-1..=q_max)
            .map(|q| ShellMask {
                entries: spectral
                    .modes()
                    .iter()
                    .filter_map(|m| {
                        let w = CutoffProfile::phi_q(q, m.k2.sqrt());
                        (w > 0.0).then_some((m.index, w))
                    })
                    .collect(),
            })
            .collect();
        let oversampled = oversample.then(|| {
            let fine = TorusGrid::new(2 * grid.n(), grid.length()).expect("2N grid is valid");
            let map = spectral
                .modes()
                .iter()
                .map(|m| fine.index_of(m.k))
                .collect();
            (Spectral::new(fine), map)
        });
        Self {
            spectral,
            q_max,
            shells,
            oversampled,
        }
    }

    pub fn spectral(&self) -> &Arc<Spectral> {
        &self.spectral
    }

    pub fn grid(&self) -> TorusGrid {
        self.spectral.grid()
    }

    /// Highest shell meeting the dealiased set.
    pub fn q_max(&self) -> i32 {
        self.q_max
    }

    pub fn lambda(&self, q: i32) -> f64 {
        self.grid().lambda(q)
    }

    fn mask(&self, q: i32) -> Option<&ShellMask> {
        if q < -1 || q > self.q_max {
            None
        } else {
            Some(&self.shells[(q + 1) as usize])
        }
    }

    /// `u_q = Delta_q u`.
    pub fn block(&self, u: &SpectralVelocity, q: i32) -> SpectralVelocity {
        assert!(q >= -1, "shell index must be >= -1");
        let mut out = SpectralField::zeros(u.grid());
        if let Some(mask) = self.mask(q) {
            for &(idx, w) in &mask.entries {
                for c in 0..3 {
                    out.component_mut(c)[idx] = u.component(c)[idx] * w;
                }
            }
        }
        SpectralVelocity::from_field_unchecked(out, u.time())
    }

    /// `u_{<=q}` through the closed-form multiplier `chi(2^{-q-1} k)`.
    pub fn low(&self, u: &SpectralVelocity, q: i32) -> SpectralVelocity {
        assert!(q >= -1, "shell index must be >= -1");
        let mut out = SpectralField::zeros(u.grid());
        for m in self.spectral.modes() {
            let w = CutoffProfile::low_pass(q, m.k2.sqrt());
            if w > 0.0 {
                for c in 0..3 {
                    out.component_mut(c)[m.index] = u.component(c)[m.index] * w;
                }
            }
        }
        SpectralVelocity::from_field_unchecked(out, u.time())
    }

    /// `||u_q||_2` from the coefficients alone.
    pub fn block_l2(&self, u: &SpectralField, q: i32) -> f64 {
        let Some(mask) = self.mask(q) else {
            return 0.0;
        };
        let s: f64 = mask
            .entries
            .iter()
            .map(|&(idx, w)| w * w * (0..3).map(|c| u.component(c)[idx].norm_sqr()).sum::<f64>())
            .sum();
        (self.grid().length().powi(3) * s).sqrt()
    }

    /// `max_x |f(x)|` (pointwise Euclidean norm), on the collocation grid or
    /// the oversampled one.
    pub fn linf(&self, f: &SpectralField) -> f64 {
        match &self.oversampled {
            None => {
                let phys = self.spectral.fft().synthesize(&[
                    f.component(0),
                    f.component(1),
                    f.component(2),
                ]);
                pointwise_max_norm(&[&phys[0], &phys[1], &phys[2]])
            }
            Some((fine, map)) => {
                let len = fine.grid().len();
                let comps: Vec<Vec<Complex64>> = (0..3)
                    .map(|c| {
                        let mut v = vec![Complex64::default(); len];
                        for (m, &j) in self.spectral.modes().iter().zip(map) {
                            v[j] = f.component(c)[m.index];
                        }
                        v
                    })
                    .collect();
                let phys = fine.fft().synthesize(&[&comps[0], &comps[1], &comps[2]]);
                pointwise_max_norm(&[&phys[0], &phys[1], &phys[2]])
            }
        }
    }

    /// `||u_q||_2` and `||u_q||_inf` for one shell.
    pub fn block_norms(&self, u: &SpectralVelocity, q: i32) -> BlockNorms {
        let l2 = self.block_l2(u, q);
        let linf = if l2 == 0.0 {
            0.0
        } else {
            self.linf(&self.block(u, q))
        };
        BlockNorms {
            q,
            lambda: self.lambda(q),
            l2,
            linf,
        }
    }

    /// Norms of every shell `-1..=q_max`.
    pub fn shell_norms(&self, u: &SpectralVelocity) -> Vec<BlockNorms> {
        let count = (self.q_max + 2) as usize;
        par::map_range(count, |i| self.block_norms(u, i as i32 - 1))
    }

    pub fn decompose(&self, u: &SpectralVelocity) -> LpDecomposition {
        let blocks: Vec<SpectralVelocity> = (-1..=self.q_max).map(|q| self.block(u, q)).collect();
        let norms = self.shell_norms(u);
        LpDecomposition {
            q_max: self.q_max,
            blocks,
            norms,
        }
    }

    /// `||grad u_{<=q}||_inf` with the pointwise Frobenius norm.
    pub fn grad_low_linf(&self, u: &SpectralVelocity, q: i32) -> f64 {
        let low = self.low(u, q);
        match &self.oversampled {
            None => self.spectral.gradient_max_norm(&low),
            Some((fine, map)) => {
                let len = fine.grid().len();
                let mut comps = [
                    vec![Complex64::default(); len],
                    vec![Complex64::default(); len],
                    vec![Complex64::default(); len],
                ];
                for (m, &j) in self.spectral.modes().iter().zip(map) {
                    for c in 0..3 {
                        comps[c][j] = low.component(c)[m.index];
                    }
                }
                fine.gradient_max_norm(&SpectralField::from_components(fine.grid(), comps))
            }
        }
    }

    /// `||u||_{H^s} = (sum_q lambda_q^{2s} ||u_q||_2^2)^{1/2}`.
    pub fn sobolev_norm(&self, u: &SpectralField, s: f64) -> f64 {
        (-1..=self.q_max)
            .map(|q| {
                let b = self.block_l2(u, q);
                if b == 0.0 {
                    0.0
                } else {
                    self.lambda(q).powf(2.0 * s) * b * b
                }
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Bernstein ratio of one nonempty block.
    pub fn bernstein_ratio(&self, n: &BlockNorms) -> f64 {
        n.linf * n.linf / (n.lambda.powi(3) * n.l2 * n.l2)
    }

    /// Checks `lambda_0^3 ||u_q||_2^2 <= ||u_q||_inf^2 <= C_B lambda_q^3 ||u_q||_2^2`
    /// (both sides already divided by `lambda_q`), with a 1e-12 relative
    /// allowance for rounding.
    pub fn sandwich(&self, n: &BlockNorms, c_b: f64) -> SandwichCheck {
        let l0 = self.grid().lambda0();
        let mid = n.linf * n.linf;
        let lower = l0.powi(3) * n.l2 * n.l2;
        let upper = c_b * n.lambda.powi(3) * n.l2 * n.l2;
        SandwichCheck {
            lower_ok: lower <= mid * (1.0 + 1e-12),
            upper_ok: mid <= upper * (1.0 + 1e-12),
        }
    }

    /// Largest Bernstein ratio over all samples and shells.
    pub fn calibrate_bernstein(
        &self,
        samples: &[SpectralVelocity],
    ) -> Result<BernsteinCalibration> {
        let mut c_b = 0.0_f64;
        let mut blocks = 0;
        let mut lower_violations = 0;
        for u in samples {
            for n in self.shell_norms(u) {
                if n.l2 == 0.0 {
                    continue;
                }
                blocks += 1;
                c_b = c_b.max(self.bernstein_ratio(&n));
                if !self.sandwich(&n, f64::INFINITY).lower_ok {
                    lower_violations += 1;
                }
            }
        }
        if blocks == 0 {
            return Err(Error::AllZero);
        }
        Ok(BernsteinCalibration {
            c_b,
            blocks,
            lower_violations,
        })
    }

    /// For each shell, the block that saturates Bernstein's inequality at the
    /// origin: coefficients `P_k e_1` on the shell support, all in phase.
    pub fn extremal_samples(&self) -> Vec<SpectralVelocity> {
        let grid = self.grid();
        (0..=self.q_max)
            .map(|q| {
                let mask = &self.shells[(q + 1) as usize];
                let mut f = SpectralField::zeros(grid);
                for &(idx, w) in &mask.entries {
                    let k = grid.wave_vector(idx);
                    let k2 = (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]) as f64;
                    // P_k e_1 divided by the multiplier so the block itself is P_k e_1
                    let p = [
                        1.0 - (k[0] * k[0]) as f64 / k2,
                        -(k[0] * k[1]) as f64 / k2,
                        -(k[0] * k[2]) as f64 / k2,
                    ];
                    for c in 0..3 {
                        f.component_mut(c)[idx] = Complex64::new(p[c] / w, 0.0);
                    }
                }
                self.spectral.leray_project(f)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lp(n: usize) -> LittlewoodPaley {
        let g = TorusGrid::new(n, 1.0).unwrap();
        LittlewoodPaley::new(Arc::new(Spectral::new(g)))
    }

    #[test]
    fn cutoff_plateau_and_support() {
        assert_eq!(CutoffProfile::chi(0.0), 1.0);
        assert_eq!(CutoffProfile::chi(0.75), 1.0);
        assert_eq!(CutoffProfile::chi(1.0), 0.0);
        assert_eq!(CutoffProfile::chi(1.7), 0.0);
        let mut last = 1.0;
        for i in 0..=1000 {
            let r = 0.75 + 0.25 * i as f64 / 1000.0;
            let c = CutoffProfile::chi(r);
            assert!((0.0..=1.0).contains(&c));
            assert!(c <= last);
            last = c;
        }
        // phi vanishes off 3/4 <= r <= 2 and is nonnegative
        assert_eq!(CutoffProfile::phi(0.74), 0.0);
        assert_eq!(CutoffProfile::phi(2.0), 0.0);
        assert_eq!(CutoffProfile::phi(1.0), 1.0);
        assert_eq!(CutoffProfile::phi(0.5), 0.0);
        for i in 0..=400 {
            assert!(CutoffProfile::phi(i as f64 * 0.01) >= 0.0);
        }
    }

    #[test]
    fn telescoping_is_exact_in_closed_form() {
        for i in 0..500 {
            let r = i as f64 * 0.07;
            for q_top in 0..6 {
                let sum: f64 = (-1..=q_top).map(|q| CutoffProfile::phi_q(q, r)).sum();
                let closed = CutoffProfile::low_pass(q_top, r);
                assert!((sum - closed).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn q_max_values() {
        assert_eq!(lp(16).q_max(), 3);
        assert_eq!(lp(32).q_max(), 4);
    }

    #[test]
    fn covering_shell_covers_full_lattice() {
        let g = TorusGrid::new(32, 1.0).unwrap();
        let q = covering_shell(g.max_resolved_modulus());
        assert!(partition_residual(g, q, Lattice::Resolved) <= 1e-12);
        // dealiased q_max already covers the 2/3 set
        assert!(partition_residual(g, 4, Lattice::Dealiased) <= 1e-12);
    }

    #[test]
    fn single_pair_at_dyadic_radius_is_one_block() {
        let l = lp(32);
        let sp = l.spectral().clone();
        let mut f = SpectralField::zeros(sp.grid());
        f.set_pair(
            [4, 0, 0],
            [
                Complex64::default(),
                Complex64::new(0.3, 0.1),
                Complex64::default(),
            ],
        );
        let u = sp.leray_project(f);
        let b = l.block(&u, 2);
        assert_eq!(&b, &u);
        assert_eq!(l.block(&u, 1).max_abs(), 0.0);
        assert_eq!(l.block(&u, 3).max_abs(), 0.0);
        // single block: H^s norm is lambda_q^s ||u||
        for s in [-0.5, 0.0, 1.0, 2.0] {
            let h = l.sobolev_norm(&u, s);
            let want = l.lambda(2).powf(s) * u.l2_norm();
            assert!((h - want).abs() <= 1e-14 * want);
        }
    }

    #[test]
    fn blocks_beyond_q_max_are_zero() {
        let l = lp(16);
        let sp = l.spectral().clone();
        let u = sp.leray_project(l.extremal_samples()[1].field().clone());
        assert_eq!(l.block(&u, l.q_max() + 1).max_abs(), 0.0);
        assert_eq!(l.block_l2(&u, 9), 0.0);
    }

    #[test]
    fn calibration_rejects_all_zero() {
        let l = lp(16);
        let z = SpectralVelocity::zeros(l.grid());
        assert!(matches!(
            l.calibrate_bernstein(&[z.clone(), z]),
            Err(Error::AllZero)
        ));
    }
}
