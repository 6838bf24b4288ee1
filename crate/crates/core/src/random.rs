//! Counter-keyed Gaussian randomization of frequency-cube decompositions.
//!
//! Every cube draws a unit-variance Gaussian coefficient from a ChaCha12
//! block keyed by `(seed, sample_index)` and addressed by cube index, so
//! coefficients are reproducible regardless of evaluation order, worker
//! count or which subset of cubes a computation touches. The randomized
//! field is `m(k) f_hat(k)` with `m(k) = sum_j g_j psi_j(k)`; in hermitian
//! mode coefficients of mirror cubes are conjugate pairs so real fields
//! stay real.

use std::collections::HashMap;

use num_complex::Complex64;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::decomp::{BumpHit, CubeFamily, TRUNCATION_TOL};
pub use crate::decomp::min_admissible_a;
use crate::error::Error;
use crate::field::VectorField;
use crate::grid::SpectralGrid;
use crate::Result;

fn chacha_key(tag: &[u8; 8], seed: u64, stream: u64) -> [u8; 32] {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(tag);
    key[8..16].copy_from_slice(&seed.to_le_bytes());
    key[16..24].copy_from_slice(&stream.to_le_bytes());
    key
}

/// Convert 64 random bits to a uniform double in (0, 1].
fn unit_open_closed(x: u64) -> f64 {
    ((x >> 11) + 1) as f64 * (1.0 / 9007199254740992.0)
}

/// General-purpose deterministic stream for probe sampling and jitter.
pub struct CounterRng {
    inner: ChaCha12Rng,
}

impl CounterRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        CounterRng { inner: ChaCha12Rng::from_seed(chacha_key(b"NSLBPROB", seed, stream)) }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in (0, 1].
    pub fn next_f64(&mut self) -> f64 {
        unit_open_closed(self.inner.next_u64())
    }
}

/// Random-access Gaussian coefficients for one `(seed, sample)` draw.
///
/// Cube `j` owns the four 32-bit words at position `4j` of the keyed
/// ChaCha12 stream; seeking there makes `coefficient(j)` independent of
/// every other cube.
pub struct GaussianStream {
    inner: ChaCha12Rng,
}

impl GaussianStream {
    pub fn new(seed: u64, sample: u64) -> Self {
        GaussianStream { inner: ChaCha12Rng::from_seed(chacha_key(b"NSLBGAUS", seed, sample)) }
    }

    fn raw_pair(&mut self, j: u64) -> (u64, u64) {
        self.inner.set_word_pos((j as u128) * 4);
        (self.inner.next_u64(), self.inner.next_u64())
    }

    /// Complex Gaussian with `E|g|^2 = 1` (real and imaginary parts are
    /// independent N(0, 1/2)), via the polar Box-Muller map.
    pub fn complex_at(&mut self, j: u64) -> Complex64 {
        let (x, y) = self.raw_pair(j);
        let u = unit_open_closed(x);
        let theta = 2.0 * std::f64::consts::PI * unit_open_closed(y);
        Complex64::from_polar((-u.ln()).sqrt(), theta)
    }

    /// Real N(0, 1) Gaussian from the same counter position.
    pub fn real_at(&mut self, j: u64) -> f64 {
        let (x, y) = self.raw_pair(j);
        let u = unit_open_closed(x);
        let theta = 2.0 * std::f64::consts::PI * unit_open_closed(y);
        (-2.0 * u.ln()).sqrt() * theta.cos()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RandomizeMode {
    /// Mirror cubes share conjugate coefficients; the self-mirrored core
    /// cube draws a real Gaussian. Real input fields stay real.
    Hermitian,
    /// Every cube draws an independent complex Gaussian. Output of a real
    /// input is generally complex; used for per-cube norm statistics.
    Complex,
}

/// Summary of one randomization draw.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RandomDraw {
    pub seed: u64,
    pub sample: u64,
    pub mode: RandomizeMode,
    /// Distinct Gaussian coefficients consumed.
    pub coefficients_used: usize,
}

/// Reusable randomizer: caches the partition evaluation on the grid's
/// frequency lattice so repeated draws only do the multiply.
pub struct Randomizer {
    grid: SpectralGrid,
    /// Per lattice point: bump hits with normalized weights.
    table: Vec<Vec<BumpHit>>,
    /// Lattice points carrying no bump at all (multiplier zero there).
    uncovered: Vec<usize>,
}

impl Randomizer {
    pub fn new(family: &CubeFamily, grid: SpectralGrid) -> Result<Self> {
        family.validate_grid(&grid)?;
        let d = grid.dim();
        let mut table = Vec::with_capacity(grid.n_points());
        let mut uncovered = Vec::new();
        for flat in 0..grid.n_points() {
            let k = grid.freq_at(flat);
            let mut hits = family.bumps_at(&k[..d]);
            let sum: f64 = hits.iter().map(|h| h.weight).sum();
            if sum == 0.0 {
                uncovered.push(flat);
                hits.clear();
            } else {
                for h in &mut hits {
                    h.weight /= sum;
                }
            }
            table.push(hits);
        }
        Ok(Randomizer { grid, table, uncovered })
    }

    pub fn grid(&self) -> &SpectralGrid {
        &self.grid
    }

    /// Relative spectral mass of `f` at lattice points no bump reaches.
    pub fn uncovered_residual(&self, f: &VectorField) -> Result<f64> {
        let src = f.to_spectral();
        let spec = src.spectral()?;
        let total: f64 = spec.iter().flat_map(|c| c.iter()).map(|z| z.norm_sqr()).sum();
        if total == 0.0 {
            return Ok(0.0);
        }
        let mut outside = 0.0;
        for &flat in &self.uncovered {
            outside += spec.iter().map(|c| c[flat].norm_sqr()).sum::<f64>();
        }
        Ok((outside / total).sqrt())
    }

    /// Gaussian coefficient assigned to cube `j` under the given draw key,
    /// matching what `draw` consumes.
    pub fn coefficient(
        family: &CubeFamily,
        seed: u64,
        sample: u64,
        mode: RandomizeMode,
        j: u64,
    ) -> Result<Complex64> {
        let mut gs = GaussianStream::new(seed, sample);
        match mode {
            RandomizeMode::Complex => Ok(gs.complex_at(j)),
            RandomizeMode::Hermitian => {
                let r = family.reflected_index(j)?;
                if j == r {
                    Ok(Complex64::new(gs.real_at(j), 0.0))
                } else {
                    let canon = j.min(r);
                    let g = gs.complex_at(canon);
                    Ok(if j == canon { g } else { g.conj() })
                }
            }
        }
    }

    /// Applies the random multiplier of draw `(seed, sample)` to `f`.
    ///
    /// Refuses fields with more than `TRUNCATION_TOL` relative mass beyond
    /// the covered band; the multiplier vanishes there, so such mass would
    /// be silently destroyed.
    pub fn draw(
        &self,
        f: &VectorField,
        seed: u64,
        sample: u64,
        mode: RandomizeMode,
    ) -> Result<(VectorField, RandomDraw)> {
        if *f.grid() != self.grid {
            return Err(Error::Grid("field grid differs from randomizer grid".into()));
        }
        let residual = self.uncovered_residual(f)?;
        if residual > TRUNCATION_TOL {
            return Err(Error::Truncation { residual, tolerance: TRUNCATION_TOL });
        }
        let src = f.to_spectral();
        let spec = src.spectral()?;
        let mut out = vec![vec![Complex64::default(); self.grid.n_points()]; spec.len()];
        let mut gs = GaussianStream::new(seed, sample);
        let mut cache: HashMap<u64, Complex64> = HashMap::new();
        for (flat, hits) in self.table.iter().enumerate() {
            if hits.is_empty() {
                continue;
            }
            let mut m = Complex64::default();
            for h in hits {
                let g = match mode {
                    RandomizeMode::Complex => {
                        *cache.entry(h.index).or_insert_with(|| gs.complex_at(h.index))
                    }
                    RandomizeMode::Hermitian => {
                        if h.index == h.reflected {
                            *cache
                                .entry(h.index)
                                .or_insert_with(|| Complex64::new(gs.real_at(h.index), 0.0))
                        } else {
                            let canon = h.index.min(h.reflected);
                            let g = *cache.entry(canon).or_insert_with(|| gs.complex_at(canon));
                            if h.index == canon {
                                g
                            } else {
                                g.conj()
                            }
                        }
                    }
                };
                m += g * h.weight;
            }
            for (c_out, c_in) in out.iter_mut().zip(spec) {
                c_out[flat] = c_in[flat] * m;
            }
        }
        let field = VectorField::from_spectral(self.grid, out)?;
        let draw = RandomDraw { seed, sample, mode, coefficients_used: cache.len() };
        Ok((field, draw))
    }
}

/// One-shot convenience wrapper around [`Randomizer`].
pub fn randomize(
    f: &VectorField,
    family: &CubeFamily,
    seed: u64,
    sample: u64,
    mode: RandomizeMode,
) -> Result<(VectorField, RandomDraw)> {
    Randomizer::new(family, *f.grid())?.draw(f, seed, sample, mode)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomp::DecompParams;

    fn small_family(n_max: u32) -> CubeFamily {
        CubeFamily::new(DecompParams::new(2, -0.8, 0.05, 0, n_max).unwrap()).unwrap()
    }

    fn band_limited_field(grid: SpectralGrid) -> VectorField {
        // Real two-component field with modes at integer frequencies 1 and 2.
        let samples: Vec<Vec<f64>> = (0..2)
            .map(|comp| {
                (0..grid.n_points())
                    .map(|flat| {
                        let x = grid.point_at(flat);
                        if comp == 0 {
                            (x[0] * 1.0).cos() + 0.5 * (x[1] * 2.0).sin()
                        } else {
                            (x[0] + x[1]).sin()
                        }
                    })
                    .collect()
            })
            .collect();
        VectorField::from_physical_real(grid, samples).unwrap()
    }

    #[test]
    fn identical_keys_reproduce_identical_bits() {
        let mut a = GaussianStream::new(42, 7);
        let mut b = GaussianStream::new(42, 7);
        for j in [0u64, 1, 17, 1 << 40] {
            assert_eq!(a.complex_at(j), b.complex_at(j));
        }
    }

    #[test]
    fn coefficients_do_not_depend_on_access_order() {
        let mut a = GaussianStream::new(3, 0);
        let first = a.complex_at(5);
        let mut b = GaussianStream::new(3, 0);
        let _ = b.complex_at(99);
        let _ = b.complex_at(0);
        assert_eq!(b.complex_at(5), first);
    }

    #[test]
    fn distinct_keys_decorrelate() {
        let mut a = GaussianStream::new(1, 0);
        let mut b = GaussianStream::new(2, 0);
        let mut c = GaussianStream::new(1, 1);
        let g = a.complex_at(0);
        assert_ne!(g, b.complex_at(0), "seed must matter");
        assert_ne!(g, c.complex_at(0), "sample index must matter");
    }

    #[test]
    fn unit_interval_conversion_is_open_closed() {
        assert_eq!(unit_open_closed(u64::MAX), 1.0);
        assert!(unit_open_closed(0) > 0.0);
        assert!(unit_open_closed(0) < 1e-15);
    }

    #[test]
    fn complex_gaussian_moments_match_unit_variance() {
        let mut gs = GaussianStream::new(11, 0);
        let n = 50_000u64;
        let mut mean = Complex64::default();
        let mut m2 = 0.0;
        let mut m4 = 0.0;
        for j in 0..n {
            let g = gs.complex_at(j);
            mean += g;
            m2 += g.norm_sqr();
            m4 += g.norm_sqr() * g.norm_sqr();
        }
        mean /= n as f64;
        m2 /= n as f64;
        m4 /= n as f64;
        assert!(mean.norm() < 0.02, "mean {mean} should vanish");
        assert!((m2 - 1.0).abs() < 0.02, "E|g|^2 = {m2} should be 1");
        assert!((m4 - 2.0).abs() < 0.1, "E|g|^4 = {m4} should be 2");
    }

    #[test]
    fn real_gaussian_is_standard_normal() {
        let mut gs = GaussianStream::new(12, 0);
        let n = 50_000u64;
        let (mut mean, mut var) = (0.0, 0.0);
        for j in 0..n {
            let g = gs.real_at(j);
            mean += g;
            var += g * g;
        }
        mean /= n as f64;
        var /= n as f64;
        assert!(mean.abs() < 0.02);
        assert!((var - 1.0).abs() < 0.03);
    }

    #[test]
    fn hermitian_draw_keeps_real_fields_real() {
        let grid = SpectralGrid::new(2, 8.0 * std::f64::consts::PI, 64).unwrap();
        let fam = small_family(2);
        let f = band_limited_field(grid);
        let rz = Randomizer::new(&fam, grid).unwrap();
        let (out, draw) = rz.draw(&f, 5, 0, RandomizeMode::Hermitian).unwrap();
        assert!(draw.coefficients_used > 10);
        let imag = out.max_physical_imag();
        let scale = out.spectral_l2();
        assert!(imag <= 1e-9 * scale.max(1.0), "imaginary residue {imag}");
    }

    #[test]
    fn complex_draw_is_generally_not_real() {
        let grid = SpectralGrid::new(2, 8.0 * std::f64::consts::PI, 64).unwrap();
        let fam = small_family(2);
        let f = band_limited_field(grid);
        let (out, _) = randomize(&f, &fam, 5, 0, RandomizeMode::Complex).unwrap();
        assert!(out.max_physical_imag() > 1e-6);
    }

    #[test]
    fn mirror_cubes_carry_conjugate_coefficients() {
        let fam = small_family(2);
        for j in [1u64, 5, 20, 40] {
            let r = fam.reflected_index(j).unwrap();
            let g = Randomizer::coefficient(&fam, 9, 3, RandomizeMode::Hermitian, j).unwrap();
            let gr = Randomizer::coefficient(&fam, 9, 3, RandomizeMode::Hermitian, r).unwrap();
            assert_eq!(g, gr.conj());
        }
        let core = Randomizer::coefficient(&fam, 9, 3, RandomizeMode::Hermitian, 0).unwrap();
        assert_eq!(core.im, 0.0, "self-mirrored core draws a real Gaussian");
    }

    #[test]
    fn randomization_preserves_divergence_freedom() {
        let grid = SpectralGrid::new(2, 8.0 * std::f64::consts::PI, 64).unwrap();
        let fam = small_family(2);
        let f = crate::ops::leray_project(&band_limited_field(grid)).unwrap();
        assert!(f.is_divergence_free(1e-10).unwrap());
        let (out, _) = randomize(&f, &fam, 1, 0, RandomizeMode::Hermitian).unwrap();
        assert!(out.is_divergence_free(1e-10).unwrap(), "scalar multiplier keeps k . u_hat = 0");
    }

    #[test]
    fn draw_refuses_mass_beyond_coverage() {
        let grid = SpectralGrid::new(2, 8.0 * std::f64::consts::PI, 64).unwrap();
        let fam = small_family(1); // coverage |xi| <= 2
        let mut spec = vec![vec![Complex64::default(); grid.n_points()]];
        // Mode at integer bin (12, 0): frequency 3 > 2.
        let bin = grid.encode([grid.bin_of(12).unwrap(), 0, 0]);
        spec[0][bin] = Complex64::new(1.0, 0.0);
        let f = VectorField::from_spectral(grid, spec).unwrap();
        match randomize(&f, &fam, 0, 0, RandomizeMode::Hermitian) {
            Err(Error::Truncation { residual, .. }) => assert!(residual > 0.9),
            other => panic!("expected truncation refusal, got {other:?}"),
        }
    }
}
