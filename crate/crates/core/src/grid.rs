//! Periodic grid shared by physical samples and their discrete Fourier
//! coefficients.
//!
//! Physical samples live at `x_n = (L/M) n` for `n` in `{0..M-1}^d`.
//! Spectral coefficients live on the frequency lattice
//! `k = (2*pi/L) m` for `m` in `{-M/2..M/2-1}^d`; storage is row-major
//! (axis 0 slowest) with FFT bin `i` holding integer frequency `i` for
//! `i < M/2` and `i - M` otherwise.

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::Result;

pub const MAX_DIM: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralGrid {
    d: usize,
    l: f64,
    m: usize,
}

impl SpectralGrid {
    /// Validates `d` in {2, 3}, `l > 0` finite, `m` a power of two >= 8.
    pub fn new(d: usize, l: f64, m: usize) -> Result<Self> {
        if d != 2 && d != 3 {
            return Err(Error::Grid(format!("dimension must be 2 or 3, got {d}")));
        }
        if !(l.is_finite() && l > 0.0) {
            return Err(Error::Grid(format!("box size must be positive, got {l}")));
        }
        if m < 8 || !m.is_power_of_two() {
            return Err(Error::Grid(format!(
                "points per axis must be a power of two >= 8, got {m}"
            )));
        }
        Ok(SpectralGrid { d, l, m })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn box_size(&self) -> f64 {
        self.l
    }

    pub fn points_per_axis(&self) -> usize {
        self.m
    }

    pub fn n_points(&self) -> usize {
        self.m.pow(self.d as u32)
    }

    /// Physical mesh width `L / M`.
    pub fn dx(&self) -> f64 {
        self.l / self.m as f64
    }

    /// Frequency lattice spacing `2*pi / L`.
    pub fn dk(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.l
    }

    /// Largest resolved frequency magnitude per axis, `pi * M / L`.
    pub fn cutoff(&self) -> f64 {
        self.dk() * (self.m as f64) / 2.0
    }

    /// Integer frequency stored in FFT bin `i`.
    #[inline]
    pub fn int_freq(&self, i: usize) -> i64 {
        let half = (self.m / 2) as i64;
        let i = i as i64;
        if i < half {
            i
        } else {
            i - self.m as i64
        }
    }

    /// FFT bin holding integer frequency `f`; `None` when out of range.
    #[inline]
    pub fn bin_of(&self, f: i64) -> Option<usize> {
        let half = (self.m / 2) as i64;
        if f >= half || f < -half {
            return None;
        }
        Some(if f >= 0 { f as usize } else { (f + self.m as i64) as usize })
    }

    /// Decodes a flat row-major index into per-axis FFT bins.
    #[inline]
    pub fn decode(&self, mut flat: usize) -> [usize; MAX_DIM] {
        let mut out = [0usize; MAX_DIM];
        for ax in (0..self.d).rev() {
            out[ax] = flat % self.m;
            flat /= self.m;
        }
        out
    }

    /// Encodes per-axis bins into a flat row-major index.
    #[inline]
    pub fn encode(&self, bins: [usize; MAX_DIM]) -> usize {
        let mut flat = 0usize;
        for ax in 0..self.d {
            flat = flat * self.m + bins[ax];
        }
        flat
    }

    /// Frequency vector at a flat spectral index (unused axes are zero).
    #[inline]
    pub fn freq_at(&self, flat: usize) -> [f64; MAX_DIM] {
        let bins = self.decode(flat);
        let dk = self.dk();
        let mut out = [0.0; MAX_DIM];
        for ax in 0..self.d {
            out[ax] = dk * self.int_freq(bins[ax]) as f64;
        }
        out
    }

    /// Integer frequency vector at a flat spectral index.
    #[inline]
    pub fn int_freq_at(&self, flat: usize) -> [i64; MAX_DIM] {
        let bins = self.decode(flat);
        let mut out = [0i64; MAX_DIM];
        for ax in 0..self.d {
            out[ax] = self.int_freq(bins[ax]);
        }
        out
    }

    /// `|k|^2` at a flat spectral index.
    #[inline]
    pub fn k_sq_at(&self, flat: usize) -> f64 {
        let k = self.freq_at(flat);
        let mut s = 0.0;
        for ax in 0..self.d {
            s += k[ax] * k[ax];
        }
        s
    }

    /// Physical coordinates of a flat sample index.
    #[inline]
    pub fn point_at(&self, flat: usize) -> [f64; MAX_DIM] {
        let bins = self.decode(flat);
        let dx = self.dx();
        let mut out = [0.0; MAX_DIM];
        for ax in 0..self.d {
            out[ax] = dx * bins[ax] as f64;
        }
        out
    }

    /// Grid with the same resolution on the box `L / lambda`.
    pub fn rescaled(&self, lambda: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::Domain(format!("scale factor must be positive, got {lambda}")));
        }
        SpectralGrid::new(self.d, self.l / lambda, self.m)
    }
}
