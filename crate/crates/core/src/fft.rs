//! Three-dimensional complex FFT built from rustfft line transforms, plus the
//! two-real-fields-per-complex-transform packing used everywhere else.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::grid::TorusGrid;
use crate::par;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Direction {
    Forward,
    Inverse,
}

/// Planned 3D transform for one grid size. Cheap to share between threads.
#[derive(Clone)]
pub struct Fft3 {
    grid: TorusGrid,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft3 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft3").field("n", &self.grid.n()).finish()
    }
}

impl Fft3 {
    pub fn new(grid: TorusGrid) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            grid,
            forward: planner.plan_fft_forward(grid.n()),
            inverse: planner.plan_fft_inverse(grid.n()),
        }
    }

    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    /// Unnormalised forward transform, `sum_x a(x) e^{-i k.x}`.
    pub fn forward(&self, data: &mut [Complex64]) {
        self.transform(data, Direction::Forward);
    }

    /// Unnormalised inverse transform, `sum_k a(k) e^{+i k.x}`.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.transform(data, Direction::Inverse);
    }

    fn transform(&self, data: &mut [Complex64], dir: Direction) {
        let n = self.grid.n();
        let plane = n * n;
        assert_eq!(data.len(), plane * n);
        let fft = match dir {
            Direction::Forward => &self.forward,
            Direction::Inverse => &self.inverse,
        };

        // x: lines are contiguous
        par::for_each_chunk_mut(data, plane, |_, p| fft.process(p));

        // y: transpose each z-plane, transform, transpose back
        par::for_each_chunk_mut(data, plane, |_, p| {
            let mut buf = vec![Complex64::default(); plane];
            for y in 0..n {
                for x in 0..n {
                    buf[y + n * x] = p[x + n * y];
                }
            }
            fft.process(&mut buf);
            for x in 0..n {
                for y in 0..n {
                    p[x + n * y] = buf[y + n * x];
                }
            }
        });

        // z: blocked transpose to z-fastest lines and back
        let mut scratch = vec![Complex64::default(); data.len()];
        transpose(data, &mut scratch, n, plane);
        par::for_each_chunk_mut(&mut scratch, plane, |_, block| fft.process(block));
        transpose(&scratch, data, plane, n);
    }

    /// Synthesises real fields from Hermitian spectra, two per complex
    /// transform. Input coefficients follow `u(x) = sum_k c(k) e^{i k.x}`.
    pub fn synthesize(&self, spectra: &[&[Complex64]]) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(spectra.len());
        for pair in spectra.chunks(2) {
            let a = pair[0];
            let b = pair.get(1).copied();
            let mut buf: Vec<Complex64> = match b {
                Some(b) => a
                    .iter()
                    .zip(b)
                    .map(|(x, y)| Complex64::new(x.re - y.im, x.im + y.re))
                    .collect(),
                None => a.to_vec(),
            };
            self.inverse(&mut buf);
            out.push(buf.iter().map(|c| c.re).collect());
            if b.is_some() {
                out.push(buf.iter().map(|c| c.im).collect());
            }
        }
        out
    }

    /// Analyses real fields into normalised Hermitian spectra (exactly
    /// symmetric by construction), two per complex transform.
    pub fn analyze(&self, fields: &[&[f64]]) -> Vec<Vec<Complex64>> {
        let g = self.grid;
        let scale = 1.0 / g.len() as f64;
        let mut out = Vec::with_capacity(fields.len());
        for pair in fields.chunks(2) {
            let a = pair[0];
            let b = pair.get(1).copied();
            let mut buf: Vec<Complex64> = match b {
                Some(b) => a
                    .iter()
                    .zip(b)
                    .map(|(&x, &y)| Complex64::new(x, y))
                    .collect(),
                None => a.iter().map(|&x| Complex64::new(x, 0.0)).collect(),
            };
            self.forward(&mut buf);
            let len = buf.len();
            let mut sa = vec![Complex64::default(); len];
            let mut sb = b.map(|_| vec![Complex64::default(); len]);
            for idx in 0..len {
                let c = buf[idx] * scale;
                let cm = buf[g.negated(idx)].conj() * scale;
                sa[idx] = (c + cm) * 0.5;
                if let Some(sb) = sb.as_mut() {
                    // (c - conj c(-k)) / (2i)
                    let d = (c - cm) * 0.5;
                    sb[idx] = Complex64::new(d.im, -d.re);
                }
            }
            out.push(sa);
            if let Some(sb) = sb {
                out.push(sb);
            }
        }
        out
    }
}

const TILE: usize = 16;

/// Cache-blocked transpose of a `rows x cols` row-major matrix into `dst`
/// (`cols x rows`).
fn transpose(src: &[Complex64], dst: &mut [Complex64], rows: usize, cols: usize) {
    debug_assert_eq!(src.len(), rows * cols);
    debug_assert!(cols % TILE == 0 && rows % TILE == 0);
    par::for_each_chunk_mut(dst, TILE * rows, |band, out| {
        let c0 = band * TILE;
        for r0 in (0..rows).step_by(TILE) {
            for r in r0..r0 + TILE {
                let row = &src[r * cols + c0..r * cols + c0 + TILE];
                for (dc, v) in row.iter().enumerate() {
                    out[dc * rows + r] = *v;
                }
            }
        }
    });
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_dft(grid: TorusGrid, data: &[Complex64], sign: f64) -> Vec<Complex64> {
        let n = grid.n();
        let mut out = vec![Complex64::default(); data.len()];
        for (kidx, o) in out.iter_mut().enumerate() {
            let (k0, k1, k2) = (kidx % n, (kidx / n) % n, kidx / (n * n));
            for (xidx, v) in data.iter().enumerate() {
                let (x0, x1, x2) = (xidx % n, (xidx / n) % n, xidx / (n * n));
                let phase =
                    sign * 2.0 * std::f64::consts::PI * ((k0 * x0 + k1 * x1 + k2 * x2) % n) as f64
                        / n as f64;
                *o += v * Complex64::from_polar(1.0, phase);
            }
        }
        out
    }

    #[test]
    fn matches_naive_dft_on_small_grid() {
        // 16^3 is the smallest legal grid; compare a handful of modes only
        let grid = TorusGrid::new(16, 1.0).unwrap();
        let fft = Fft3::new(grid);
        let data: Vec<Complex64> = (0..grid.len())
            .map(|i| Complex64::new(((i * 37) % 11) as f64 - 5.0, ((i * 13) % 7) as f64))
            .collect();
        let mut fast = data.clone();
        fft.forward(&mut fast);
        let slow = naive_dft(grid, &data, -1.0);
        let err = fast
            .iter()
            .zip(&slow)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        let scale = slow.iter().map(|c| c.norm()).fold(0.0, f64::max);
        assert!(err <= 1e-11 * scale, "err {err}");
    }

    #[test]
    fn packed_pair_round_trip() {
        let grid = TorusGrid::new(16, 1.0).unwrap();
        let fft = Fft3::new(grid);
        let a: Vec<f64> = (0..grid.len()).map(|i| ((i * 7) % 19) as f64).collect();
        let b: Vec<f64> = (0..grid.len())
            .map(|i| ((i * 3) % 5) as f64 - 2.0)
            .collect();
        let c: Vec<f64> = (0..grid.len()).map(|i| (i as f64).sin()).collect();
        let spectra = fft.analyze(&[&a, &b, &c]);
        let refs: Vec<&[Complex64]> = spectra.iter().map(|s| s.as_slice()).collect();
        let back = fft.synthesize(&refs);
        for (orig, rec) in [&a, &b, &c].iter().zip(&back) {
            for (x, y) in orig.iter().zip(rec) {
                assert!((x - y).abs() < 1e-12 * 20.0);
            }
        }
        // Hermitian symmetry holds exactly
        for s in &spectra {
            for idx in 0..grid.len() {
                assert_eq!(s[idx], s[grid.negated(idx)].conj());
            }
        }
    }
}
