//! Fourier-space velocity fields on the torus: transforms, Leray projection
//! and the dealiased advective nonlinearity.
//!
//! Coefficients follow `u(x) = sum_k u_hat(k) exp(i kappa_0 k.x)`, and the
//! L2 norm is the continuum one, `||u||_2^2 = L^3 sum_k |u_hat(k)|^2`.

use rustfft::num_complex::Complex64;

use crate::error::Result;
use crate::fft::Fft3;
use crate::grid::TorusGrid;
use crate::par;

/// Chunk length used for deterministic reductions over grid arrays.
pub(crate) const REDUCE_CHUNK: usize = 4096;

/// Raw three-component coefficient tensor; no invariants beyond Hermitian
/// symmetry of whatever produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralField {
    grid: TorusGrid,
    comps: [Vec<Complex64>; 3],
}

impl SpectralField {
    pub fn zeros(grid: TorusGrid) -> Self {
        let z = vec![Complex64::default(); grid.len()];
        Self {
            grid,
            comps: [z.clone(), z.clone(), z],
        }
    }

    pub fn from_components(grid: TorusGrid, comps: [Vec<Complex64>; 3]) -> Self {
        for c in &comps {
            assert_eq!(c.len(), grid.len(), "component length must be N^3");
        }
        Self { grid, comps }
    }

    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    pub fn component(&self, i: usize) -> &[Complex64] {
        &self.comps[i]
    }

    pub fn component_mut(&mut self, i: usize) -> &mut [Complex64] {
        &mut self.comps[i]
    }

    pub fn components(&self) -> &[Vec<Complex64>; 3] {
        &self.comps
    }

    /// Coefficient vector at wave vector `k`.
    pub fn at(&self, k: [i64; 3]) -> [Complex64; 3] {
        let idx = self.grid.index_of(k);
        [self.comps[0][idx], self.comps[1][idx], self.comps[2][idx]]
    }

    /// Sets `k` and its Hermitian partner `-k`.
    pub fn set_pair(&mut self, k: [i64; 3], value: [Complex64; 3]) {
        let idx = self.grid.index_of(k);
        let neg = self.grid.negated(idx);
        for c in 0..3 {
            self.comps[c][idx] = value[c];
            self.comps[c][neg] = value[c].conj();
        }
    }

    /// `sum_k |c(k)|^2` over all components.
    pub fn coefficient_energy(&self) -> f64 {
        self.comps
            .iter()
            .map(|c| par::chunked_sum(c, REDUCE_CHUNK, |z| z.norm_sqr()))
            .sum()
    }

    /// Continuum `||u||_2`.
    pub fn l2_norm(&self) -> f64 {
        (self.grid.length().powi(3) * self.coefficient_energy()).sqrt()
    }

    /// Real L2 inner product `(a, b) = L^3 Re sum_k a(k) . conj(b(k))`.
    pub fn inner(&self, other: &SpectralField) -> f64 {
        let l3 = self.grid.length().powi(3);
        let s: f64 = (0..3)
            .map(|c| {
                let a = &self.comps[c];
                let b = &other.comps[c];
                par::map_chunks(a, REDUCE_CHUNK, |i, chunk| {
                    let off = i * REDUCE_CHUNK;
                    chunk
                        .iter()
                        .enumerate()
                        .map(|(j, z)| (z * b[off + j].conj()).re)
                        .sum::<f64>()
                })
                .into_iter()
                .sum::<f64>()
            })
            .sum();
        l3 * s
    }

    /// Continuum `||grad u||_2^2 = L^3 sum kappa_0^2 |k|^2 |u(k)|^2`.
    pub fn enstrophy(&self) -> f64 {
        let g = self.grid;
        let k0 = g.kappa0();
        let l3 = g.length().powi(3);
        let s: f64 = (0..3)
            .map(|c| {
                let a = &self.comps[c];
                par::map_chunks(a, REDUCE_CHUNK, |i, chunk| {
                    let off = i * REDUCE_CHUNK;
                    chunk
                        .iter()
                        .enumerate()
                        .map(|(j, z)| {
                            let k = g.wave_vector(off + j);
                            let k2 = (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]) as f64;
                            k2 * z.norm_sqr()
                        })
                        .sum::<f64>()
                })
                .into_iter()
                .sum::<f64>()
            })
            .sum();
        l3 * k0 * k0 * s
    }

    /// Largest `|k . c(k)| / (|k| |c(k)|)` over nonzero modes; divergence
    /// check.
    pub fn divergence_residual(&self) -> f64 {
        let scale = self.max_abs();
        if scale == 0.0 {
            return 0.0;
        }
        let mut worst = 0.0_f64;
        for idx in 0..self.grid.len() {
            let k = self.grid.wave_vector(idx);
            let kn = ((k[0] * k[0] + k[1] * k[1] + k[2] * k[2]) as f64).sqrt();
            if kn == 0.0 {
                continue;
            }
            let div = (0..3)
                .map(|c| self.comps[c][idx] * k[c] as f64)
                .sum::<Complex64>()
                .norm();
            worst = worst.max(div / (kn * scale));
        }
        worst
    }

    /// Largest `|c(-k) - conj c(k)|`, relative to the largest coefficient.
    pub fn hermitian_residual(&self) -> f64 {
        let scale = self.max_abs();
        if scale == 0.0 {
            return 0.0;
        }
        let mut worst = 0.0_f64;
        for c in &self.comps {
            for idx in 0..self.grid.len() {
                let d = (c[self.grid.negated(idx)] - c[idx].conj()).norm();
                worst = worst.max(d);
            }
        }
        worst / scale
    }

    pub fn max_abs(&self) -> f64 {
        self.comps
            .iter()
            .map(|c| par::chunked_max(c, REDUCE_CHUNK, |z| z.norm()))
            .fold(0.0, f64::max)
    }

    /// Whether every coefficient outside the 2/3 set and at `k = 0` is zero.
    pub fn is_dealiased_zero_mean(&self) -> bool {
        (0..self.grid.len()).all(|idx| {
            let k = self.grid.wave_vector(idx);
            let keep = self.grid.is_dealiased(k) && k != [0, 0, 0];
            keep || self.comps.iter().all(|c| c[idx] == Complex64::default())
        })
    }

    pub fn is_finite(&self) -> bool {
        self.comps
            .iter()
            .all(|c| c.iter().all(|z| z.re.is_finite() && z.im.is_finite()))
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &SpectralField) {
        for c in 0..3 {
            for (a, b) in self.comps[c].iter_mut().zip(&other.comps[c]) {
                *a += b * alpha;
            }
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for c in &mut self.comps {
            for z in c.iter_mut() {
                *z *= alpha;
            }
        }
    }
}

/// Divergence-free, zero-mean, dealiased, Hermitian velocity coefficients at
/// a time `t`. Only constructible through [`Spectral::leray_project`] or
/// Fourier multipliers that preserve those properties.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralVelocity {
    field: SpectralField,
    time: f64,
}

impl SpectralVelocity {
    pub fn zeros(grid: TorusGrid) -> Self {
        Self {
            field: SpectralField::zeros(grid),
            time: 0.0,
        }
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn with_time(mut self, t: f64) -> Self {
        self.time = t;
        self
    }

    pub fn set_time(&mut self, t: f64) {
        self.time = t;
    }

    pub fn field(&self) -> &SpectralField {
        &self.field
    }

    pub fn into_field(self) -> SpectralField {
        self.field
    }

    /// Multiplies by a real scalar; all invariants are preserved.
    pub fn scaled(&self, alpha: f64) -> Self {
        let mut out = self.clone();
        out.field.scale(alpha);
        out
    }

    /// `self - other` (same grid); invariants are preserved.
    pub fn difference(&self, other: &SpectralVelocity) -> Result<Self> {
        self.grid().same_as(&other.grid())?;
        let mut out = self.clone();
        out.field.axpy(-1.0, &other.field);
        Ok(out)
    }

    /// `self + other` (same grid); invariants are preserved.
    pub fn sum(&self, other: &SpectralVelocity) -> Result<Self> {
        self.grid().same_as(&other.grid())?;
        let mut out = self.clone();
        out.field.axpy(1.0, &other.field);
        Ok(out)
    }

    /// Applies a real radial multiplier `m(k)` (it must be real and even in
    /// `k`, which keeps every invariant).
    pub fn multiplied<F: Fn([i64; 3]) -> f64>(&self, m: F) -> Self {
        let g = self.grid();
        let mut out = self.clone();
        for idx in 0..g.len() {
            let w = m(g.wave_vector(idx));
            for c in 0..3 {
                out.field.comps[c][idx] *= w;
            }
        }
        out
    }

    pub(crate) fn from_field_unchecked(field: SpectralField, time: f64) -> Self {
        Self { field, time }
    }
}

impl std::ops::Deref for SpectralVelocity {
    type Target = SpectralField;
    fn deref(&self) -> &SpectralField {
        &self.field
    }
}

/// Real samples of a three-component field, x-fastest per component.
#[derive(Clone, Debug, PartialEq)]
pub struct PhysicalField {
    grid: TorusGrid,
    comps: [Vec<f64>; 3],
}

impl PhysicalField {
    pub fn new(grid: TorusGrid, comps: [Vec<f64>; 3]) -> Self {
        for c in &comps {
            assert_eq!(c.len(), grid.len(), "component length must be N^3");
        }
        Self { grid, comps }
    }

    /// Samples a closure `f(x) -> [u1, u2, u3]` at the grid points.
    pub fn from_fn<F: Fn([f64; 3]) -> [f64; 3]>(grid: TorusGrid, f: F) -> Self {
        let n = grid.n();
        let h = grid.spacing();
        let mut comps = [
            vec![0.0; grid.len()],
            vec![0.0; grid.len()],
            vec![0.0; grid.len()],
        ];
        for l in 0..n {
            for j in 0..n {
                for i in 0..n {
                    let v = f([i as f64 * h, j as f64 * h, l as f64 * h]);
                    let idx = grid.flat(i, j, l);
                    for c in 0..3 {
                        comps[c][idx] = v[c];
                    }
                }
            }
        }
        Self { grid, comps }
    }

    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    pub fn component(&self, i: usize) -> &[f64] {
        &self.comps[i]
    }

    pub fn components(&self) -> &[Vec<f64>; 3] {
        &self.comps
    }

    pub fn into_components(self) -> [Vec<f64>; 3] {
        self.comps
    }

    /// `max_x |u(x)|` with the pointwise Euclidean norm.
    pub fn max_norm(&self) -> f64 {
        pointwise_max_norm(&[&self.comps[0], &self.comps[1], &self.comps[2]])
    }

    /// Largest absolute component value.
    pub fn max_component(&self) -> f64 {
        self.comps
            .iter()
            .map(|c| par::chunked_max(c, REDUCE_CHUNK, |x| x.abs()))
            .fold(0.0, f64::max)
    }

    /// `sum_x |u(x)|^2 / N^3`.
    pub fn mean_square(&self) -> f64 {
        let s: f64 = self
            .comps
            .iter()
            .map(|c| par::chunked_sum(c, REDUCE_CHUNK, |x| x * x))
            .sum();
        s / self.grid.len() as f64
    }
}

/// `max_x sqrt(sum_c f_c(x)^2)`.
pub(crate) fn pointwise_max_norm(fields: &[&[f64]]) -> f64 {
    let len = fields[0].len();
    par::map_range(len.div_ceil(REDUCE_CHUNK), |b| {
        let lo = b * REDUCE_CHUNK;
        let hi = (lo + REDUCE_CHUNK).min(len);
        (lo..hi)
            .map(|i| fields.iter().map(|f| f[i] * f[i]).sum::<f64>())
            .fold(0.0_f64, f64::max)
    })
    .into_iter()
    .fold(0.0, f64::max)
    .sqrt()
}

/// One retained Fourier mode: dealiased, `k != 0`.
#[derive(Clone, Copy, Debug)]
pub struct Mode {
    pub index: usize,
    /// Flat index of `-k`.
    pub neg: usize,
    pub k: [i64; 3],
    /// `|k|^2` in integer units.
    pub k2: f64,
}

/// Transform context for one grid: FFT plans and the retained-mode list.
#[derive(Clone, Debug)]
pub struct Spectral {
    grid: TorusGrid,
    fft: Fft3,
    modes: Vec<Mode>,
}

impl Spectral {
    pub fn new(grid: TorusGrid) -> Self {
        let modes = (0..grid.len())
            .filter_map(|index| {
                let k = grid.wave_vector(index);
                (grid.is_dealiased(k) && k != [0, 0, 0]).then(|| Mode {
                    index,
                    neg: grid.negated(index),
                    k,
                    k2: (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]) as f64,
                })
            })
            .collect();
        Self {
            grid,
            fft: Fft3::new(grid),
            modes,
        }
    }

    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    pub fn fft(&self) -> &Fft3 {
        &self.fft
    }

    /// Retained (dealiased, nonzero) modes.
    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn to_physical(&self, u: &SpectralField) -> PhysicalField {
        let mut out = self
            .fft
            .synthesize(&[u.component(0), u.component(1), u.component(2)]);
        let c2 = out.pop().unwrap();
        let c1 = out.pop().unwrap();
        let c0 = out.pop().unwrap();
        PhysicalField::new(self.grid, [c0, c1, c2])
    }

    /// Forward transform of all three components over the full lattice.
    pub fn to_spectral(&self, f: &PhysicalField) -> SpectralField {
        let mut out = self
            .fft
            .analyze(&[f.component(0), f.component(1), f.component(2)]);
        let c2 = out.pop().unwrap();
        let c1 = out.pop().unwrap();
        let c0 = out.pop().unwrap();
        SpectralField::from_components(self.grid, [c0, c1, c2])
    }

    /// Leray projection `c - k (k.c)/|k|^2`, with 2/3 truncation and the mean
    /// removed so the result satisfies every [`SpectralVelocity`] invariant.
    pub fn leray_project(&self, c: SpectralField) -> SpectralVelocity {
        let g = self.grid;
        let mut out = SpectralField::zeros(g);
        for m in &self.modes {
            let v = [
                c.comps[0][m.index],
                c.comps[1][m.index],
                c.comps[2][m.index],
            ];
            let kf = [m.k[0] as f64, m.k[1] as f64, m.k[2] as f64];
            let kdot = (v[0] * kf[0] + v[1] * kf[1] + v[2] * kf[2]) / m.k2;
            for a in 0..3 {
                out.comps[a][m.index] = v[a] - kdot * kf[a];
            }
        }
        SpectralVelocity::from_field_unchecked(out, 0.0)
    }

    /// Zeroes everything outside the retained set (no projection).
    pub fn truncate(&self, c: &SpectralField) -> SpectralField {
        let mut out = SpectralField::zeros(self.grid);
        for m in &self.modes {
            for a in 0..3 {
                out.comps[a][m.index] = c.comps[a][m.index];
            }
        }
        out
    }

    /// Spectral derivative `d/dx_j` of each component: `i kappa_0 k_j c(k)`.
    pub fn derivative(&self, c: &[Complex64], axis: usize) -> Vec<Complex64> {
        let k0 = self.grid.kappa0();
        let mut out = vec![Complex64::default(); c.len()];
        for m in &self.modes {
            let z = c[m.index];
            let f = k0 * m.k[axis] as f64;
            out[m.index] = Complex64::new(-f * z.im, f * z.re);
        }
        out
    }

    /// Physical samples of all nine entries `d_j u_i`, ordered `(i, j)`
    /// row-major.
    pub fn gradient_physical(&self, u: &SpectralField) -> Vec<Vec<f64>> {
        let derivs: Vec<Vec<Complex64>> = (0..3)
            .flat_map(|i| (0..3).map(move |j| (i, j)))
            .map(|(i, j)| self.derivative(u.component(i), j))
            .collect();
        let refs: Vec<&[Complex64]> = derivs.iter().map(|d| d.as_slice()).collect();
        self.fft.synthesize(&refs)
    }

    /// `max_x |grad u(x)|` with the pointwise Frobenius norm.
    pub fn gradient_max_norm(&self, u: &SpectralField) -> f64 {
        let g = self.gradient_physical(u);
        let refs: Vec<&[f64]> = g.iter().map(|v| v.as_slice()).collect();
        pointwise_max_norm(&refs)
    }

    /// `-P[(u.grad) u]`, dealiased before and after the product.
    pub fn nonlinear_term(&self, u: &SpectralVelocity) -> SpectralVelocity {
        self.nonlinear_with_max(u).0.with_time(u.time())
    }

    /// Nonlinear term plus `max_x |u(x)|`, which falls out of the same
    /// transforms and feeds the CFL check.
    pub(crate) fn nonlinear_with_max(&self, u: &SpectralVelocity) -> (SpectralVelocity, f64) {
        let len = self.grid.len();
        let k0 = self.grid.kappa0();
        // fields 0..3 are u_i, 3 + 3i + j is d_j u_i; two per complex buffer
        let coef = |f: usize, m: &Mode| -> Complex64 {
            if f < 3 {
                u.comps[f][m.index]
            } else {
                let (i, j) = ((f - 3) / 3, (f - 3) % 3);
                let z = u.comps[i][m.index];
                let w = k0 * m.k[j] as f64;
                Complex64::new(-w * z.im, w * z.re)
            }
        };
        let bufs: Vec<Vec<Complex64>> = par::map_range(6, |p| {
            let mut buf = vec![Complex64::default(); len];
            for m in &self.modes {
                let a = coef(2 * p, m);
                let b = coef(2 * p + 1, m);
                buf[m.index] = Complex64::new(a.re - b.im, a.im + b.re);
            }
            self.fft.inverse(&mut buf);
            buf
        });
        let get = |f: usize, x: usize| {
            let z = bufs[f / 2][x];
            if f % 2 == 0 {
                z.re
            } else {
                z.im
            }
        };

        let mut umax2 = 0.0_f64;
        let mut pa = vec![Complex64::default(); len];
        let mut pb = vec![Complex64::default(); len];
        let partial = par::map_chunks(&pa, REDUCE_CHUNK, |b, _| {
            let lo = b * REDUCE_CHUNK;
            let mut out = Vec::with_capacity(REDUCE_CHUNK);
            let mut mx = 0.0_f64;
            for x in lo..(lo + REDUCE_CHUNK).min(len) {
                let v = [get(0, x), get(1, x), get(2, x)];
                mx = mx.max(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
                let adv = |i: usize| (0..3).map(|j| v[j] * get(3 + 3 * i + j, x)).sum::<f64>();
                out.push([adv(0), adv(1), adv(2)]);
            }
            (out, mx)
        });
        for (b, (vals, mx)) in partial.into_iter().enumerate() {
            umax2 = umax2.max(mx);
            let lo = b * REDUCE_CHUNK;
            for (o, v) in vals.into_iter().enumerate() {
                pa[lo + o] = Complex64::new(v[0], v[1]);
                pb[lo + o] = Complex64::new(v[2], 0.0);
            }
        }
        drop(bufs);
        par::join(|| self.fft.forward(&mut pa), || self.fft.forward(&mut pb));

        let scale = -1.0 / len as f64;
        let mut out = SpectralField::zeros(self.grid);
        for m in &self.modes {
            let c = pa[m.index] * scale;
            let cm = pa[m.neg].conj() * scale;
            let d = (c - cm) * 0.5;
            let cb = pb[m.index] * scale;
            let cbm = pb[m.neg].conj() * scale;
            let v = [
                (c + cm) * 0.5,
                Complex64::new(d.im, -d.re),
                (cb + cbm) * 0.5,
            ];
            let kf = [m.k[0] as f64, m.k[1] as f64, m.k[2] as f64];
            let kdot = (v[0] * kf[0] + v[1] * kf[1] + v[2] * kf[2]) / m.k2;
            for a in 0..3 {
                out.comps[a][m.index] = v[a] - kdot * kf[a];
            }
        }
        (
            SpectralVelocity::from_field_unchecked(out, 0.0),
            umax2.sqrt(),
        )
    }

    /// Energy `1/2 ||u||_2^2`.
    pub fn energy(&self, u: &SpectralField) -> f64 {
        0.5 * u.l2_norm().powi(2)
    }

    /// Enstrophy over retained modes only (cheaper than the full sum).
    pub fn enstrophy(&self, u: &SpectralField) -> f64 {
        let k0 = self.grid.kappa0();
        let s: f64 = self
            .modes
            .iter()
            .map(|m| m.k2 * (0..3).map(|c| u.comps[c][m.index].norm_sqr()).sum::<f64>())
            .sum();
        self.grid.length().powi(3) * k0 * k0 * s
    }
}
