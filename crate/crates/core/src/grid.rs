use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform `n^3` grid on the periodic box `[0, L)^3`.
///
/// Integer wave vectors live in `{-n/2+1, ..., n/2}^3`; the physical
/// wavenumber of `k` is `kappa_0 * k` with `kappa_0 = 2 pi / L`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TorusGrid {
    n: usize,
    length: f64,
}

impl TorusGrid {
    pub fn new(n: usize, length: f64) -> Result<Self> {
        if n < 16 || !n.is_power_of_two() {
            return Err(Error::Validation(format!(
                "grid size N = {n} must be a power of two >= 16"
            )));
        }
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::Validation(format!(
                "box length L = {length} must be positive"
            )));
        }
        Ok(Self { n, length })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    /// Number of grid points, `n^3`.
    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        self.length / self.n as f64
    }

    /// `lambda_0 = 1 / L`.
    pub fn lambda0(&self) -> f64 {
        1.0 / self.length
    }

    /// `kappa_0 = 2 pi / L = 2 pi lambda_0`.
    pub fn kappa0(&self) -> f64 {
        2.0 * PI * self.lambda0()
    }

    /// `lambda_q = 2^q / L`.
    pub fn lambda(&self, q: i32) -> f64 {
        2f64.powi(q) / self.length
    }

    /// Largest retained `|k_i|` under the 2/3 rule.
    pub fn dealias_cutoff(&self) -> i64 {
        (self.n / 3) as i64
    }

    /// Signed integer wavenumber stored at FFT index `i` along one axis.
    #[inline]
    pub fn wavenumber(&self, i: usize) -> i64 {
        if i <= self.n / 2 {
            i as i64
        } else {
            i as i64 - self.n as i64
        }
    }

    /// FFT index holding signed wavenumber `k` along one axis.
    #[inline]
    pub fn axis_index(&self, k: i64) -> usize {
        k.rem_euclid(self.n as i64) as usize
    }

    /// Flat index of grid point or mode `(i, j, l)`, x fastest.
    #[inline]
    pub fn flat(&self, i: usize, j: usize, l: usize) -> usize {
        i + self.n * (j + self.n * l)
    }

    /// Integer wave vector at flat index `idx`.
    #[inline]
    pub fn wave_vector(&self, idx: usize) -> [i64; 3] {
        let n = self.n;
        [
            self.wavenumber(idx % n),
            self.wavenumber((idx / n) % n),
            self.wavenumber(idx / (n * n)),
        ]
    }

    /// Flat index of wave vector `k`.
    #[inline]
    pub fn index_of(&self, k: [i64; 3]) -> usize {
        self.flat(
            self.axis_index(k[0]),
            self.axis_index(k[1]),
            self.axis_index(k[2]),
        )
    }

    /// Flat index of `-k` given the flat index of `k`.
    #[inline]
    pub fn negated(&self, idx: usize) -> usize {
        let n = self.n;
        let neg = |i: usize| (n - i) % n;
        self.flat(neg(idx % n), neg((idx / n) % n), neg(idx / (n * n)))
    }

    /// Whether `k` survives 2/3-rule truncation.
    #[inline]
    pub fn is_dealiased(&self, k: [i64; 3]) -> bool {
        let c = self.dealias_cutoff();
        k.iter().all(|ki| ki.abs() <= c)
    }

    /// Largest `|k|` on the full resolved lattice.
    pub fn max_resolved_modulus(&self) -> f64 {
        (3.0f64).sqrt() * (self.n / 2) as f64
    }

    /// Largest `|k|` in the dealiased set.
    pub fn max_dealiased_modulus(&self) -> f64 {
        (3.0f64).sqrt() * self.dealias_cutoff() as f64
    }

    pub fn same_as(&self, other: &TorusGrid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "(N={}, L={}) vs (N={}, L={})",
                self.n, self.length, other.n, other.length
            )))
        }
    }
}
