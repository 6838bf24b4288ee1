//! Vector fields on the periodic grid with physical and/or spectral
//! representations.
//!
//! Both representations are stored as complex values; real-valued fields
//! simply carry a negligible imaginary part. A field always has at least
//! one representation, and mutation drops the other one so the two can
//! never disagree.

use num_complex::Complex64;

use crate::error::Error;
use crate::fft;
use crate::grid::SpectralGrid;
use crate::Result;

#[derive(Debug, Clone)]
pub struct VectorField {
    grid: SpectralGrid,
    physical: Option<Vec<Vec<Complex64>>>,
    spectral: Option<Vec<Vec<Complex64>>>,
}

fn check_comps_len(grid: &SpectralGrid, comps: &[Vec<Complex64>]) -> Result<()> {
    if comps.is_empty() {
        return Err(Error::Shape("field needs at least one component".into()));
    }
    for (i, c) in comps.iter().enumerate() {
        if c.len() != grid.n_points() {
            return Err(Error::Shape(format!(
                "component {i} has {} values, grid has {}",
                c.len(),
                grid.n_points()
            )));
        }
    }
    Ok(())
}

impl VectorField {
    pub fn from_physical(grid: SpectralGrid, comps: Vec<Vec<Complex64>>) -> Result<Self> {
        check_comps_len(&grid, &comps)?;
        Ok(VectorField { grid, physical: Some(comps), spectral: None })
    }

    pub fn from_physical_real(grid: SpectralGrid, comps: Vec<Vec<f64>>) -> Result<Self> {
        let comps = comps
            .into_iter()
            .map(|c| c.into_iter().map(|v| Complex64::new(v, 0.0)).collect())
            .collect();
        Self::from_physical(grid, comps)
    }

    pub fn from_spectral(grid: SpectralGrid, comps: Vec<Vec<Complex64>>) -> Result<Self> {
        check_comps_len(&grid, &comps)?;
        Ok(VectorField { grid, physical: None, spectral: Some(comps) })
    }

    /// Zero field with `n_comp` components in spectral representation.
    pub fn zeros(grid: SpectralGrid, n_comp: usize) -> Self {
        let comps = vec![vec![Complex64::default(); grid.n_points()]; n_comp];
        VectorField { grid, physical: None, spectral: Some(comps) }
    }

    pub fn grid(&self) -> &SpectralGrid {
        &self.grid
    }

    pub fn n_comp(&self) -> usize {
        self.physical
            .as_ref()
            .or(self.spectral.as_ref())
            .map(|c| c.len())
            .expect("field always has one representation")
    }

    pub fn has_physical(&self) -> bool {
        self.physical.is_some()
    }

    pub fn has_spectral(&self) -> bool {
        self.spectral.is_some()
    }

    /// Computes the spectral representation if absent.
    pub fn ensure_spectral(&mut self) {
        if self.spectral.is_none() {
            let phys = self.physical.as_ref().expect("field always has one representation");
            let spec = phys
                .iter()
                .map(|c| {
                    let mut buf = c.clone();
                    fft::forward(&self.grid, &mut buf);
                    buf
                })
                .collect();
            self.spectral = Some(spec);
        }
    }

    /// Computes the physical representation if absent.
    pub fn ensure_physical(&mut self) {
        if self.physical.is_none() {
            let spec = self.spectral.as_ref().expect("field always has one representation");
            let phys = spec
                .iter()
                .map(|c| {
                    let mut buf = c.clone();
                    fft::inverse(&self.grid, &mut buf);
                    buf
                })
                .collect();
            self.physical = Some(phys);
        }
    }

    pub fn spectral(&self) -> Result<&[Vec<Complex64>]> {
        self.spectral
            .as_deref()
            .ok_or_else(|| Error::Representation("spectral representation not populated".into()))
    }

    pub fn physical(&self) -> Result<&[Vec<Complex64>]> {
        self.physical
            .as_deref()
            .ok_or_else(|| Error::Representation("physical representation not populated".into()))
    }

    /// Mutable spectral access; drops the physical copy to keep the two
    /// representations consistent.
    pub fn spectral_mut(&mut self) -> &mut [Vec<Complex64>] {
        self.ensure_spectral();
        self.physical = None;
        self.spectral.as_deref_mut().unwrap()
    }

    /// Mutable physical access; drops the spectral copy.
    pub fn physical_mut(&mut self) -> &mut [Vec<Complex64>] {
        self.ensure_physical();
        self.spectral = None;
        self.physical.as_deref_mut().unwrap()
    }

    /// Clone with the spectral representation populated.
    pub fn to_spectral(&self) -> Self {
        let mut f = self.clone();
        f.ensure_spectral();
        f
    }

    /// Clone with the physical representation populated.
    pub fn to_physical(&self) -> Self {
        let mut f = self.clone();
        f.ensure_physical();
        f
    }

    /// `L^2(T^d)` norm squared, `L^d sum_k |u_hat(k)|^2` over all components.
    pub fn energy(&self) -> f64 {
        let mut f = self.clone();
        f.ensure_spectral();
        let vol = self.grid.box_size().powi(self.grid.dim() as i32);
        f.spectral().unwrap().iter().flatten().map(|v| v.norm_sqr()).sum::<f64>() * vol
    }

    /// `sum_k |k|^2 |u_hat(k)|^2 * L^d` over all components.
    pub fn enstrophy(&self) -> f64 {
        let mut f = self.clone();
        f.ensure_spectral();
        let vol = self.grid.box_size().powi(self.grid.dim() as i32);
        let spec = f.spectral().unwrap();
        let mut s = 0.0;
        for c in spec {
            for (flat, v) in c.iter().enumerate() {
                s += self.grid.k_sq_at(flat) * v.norm_sqr();
            }
        }
        s * vol
    }

    /// Largest spectral divergence `max_k |k . u_hat(k)|`.
    pub fn max_spectral_divergence(&self) -> Result<f64> {
        let mut f = self.clone();
        f.ensure_spectral();
        let spec = f.spectral()?;
        if spec.len() != self.grid.dim() {
            return Err(Error::Shape(format!(
                "divergence needs {} components, field has {}",
                self.grid.dim(),
                spec.len()
            )));
        }
        let mut worst = 0.0f64;
        for flat in 0..self.grid.n_points() {
            let k = self.grid.freq_at(flat);
            let mut dot = Complex64::default();
            for (ax, c) in spec.iter().enumerate() {
                dot += Complex64::new(k[ax], 0.0) * c[flat];
            }
            worst = worst.max(dot.norm());
        }
        Ok(worst)
    }

    /// ell^2 magnitude of the spectral coefficients (no volume factor).
    pub fn spectral_l2(&self) -> f64 {
        let mut f = self.clone();
        f.ensure_spectral();
        f.spectral().unwrap().iter().flatten().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Checks `max_k |k . u_hat(k)| <= tol_rel * ||u_hat||_{ell^2}`.
    pub fn is_divergence_free(&self, tol_rel: f64) -> Result<bool> {
        let div = self.max_spectral_divergence()?;
        Ok(div <= tol_rel * self.spectral_l2())
    }

    /// Largest imaginary magnitude among physical samples.
    pub fn max_physical_imag(&self) -> f64 {
        let mut f = self.clone();
        f.ensure_physical();
        f.physical()
            .unwrap()
            .iter()
            .flatten()
            .map(|v| v.im.abs())
            .fold(0.0, f64::max)
    }

    /// Relative round-trip defect between the two representations, for
    /// consistency audits; zero when only one representation is populated.
    pub fn representation_defect(&self) -> f64 {
        let (Some(phys), Some(spec)) = (&self.physical, &self.spectral) else {
            return 0.0;
        };
        let mut num = 0.0;
        let mut den = 0.0;
        for (p, s) in phys.iter().zip(spec) {
            let mut back = s.clone();
            fft::inverse(&self.grid, &mut back);
            for (a, b) in p.iter().zip(&back) {
                num += (a - b).norm_sqr();
                den += a.norm_sqr();
            }
        }
        if den == 0.0 {
            num.sqrt()
        } else {
            (num / den).sqrt()
        }
    }

    /// Multiplies every value by a complex scalar.
    pub fn scaled(&self, alpha: Complex64) -> Self {
        let mut f = self.clone();
        if let Some(p) = f.physical.as_mut() {
            for c in p.iter_mut() {
                for v in c.iter_mut() {
                    *v *= alpha;
                }
            }
        }
        if let Some(s) = f.spectral.as_mut() {
            for c in s.iter_mut() {
                for v in c.iter_mut() {
                    *v *= alpha;
                }
            }
        }
        f
    }

    /// Relative `L^2` distance to another field on the same grid.
    pub fn rel_l2_distance(&self, other: &VectorField) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::Shape("fields live on different grids".into()));
        }
        if self.n_comp() != other.n_comp() {
            return Err(Error::Shape("fields have different component counts".into()));
        }
        let a = self.to_spectral();
        let b = other.to_spectral();
        let mut num = 0.0;
        let mut den = 0.0;
        for (ca, cb) in a.spectral()?.iter().zip(b.spectral()?) {
            for (va, vb) in ca.iter().zip(cb) {
                num += (va - vb).norm_sqr();
                den += vb.norm_sqr();
            }
        }
        if den == 0.0 {
            Ok(num.sqrt())
        } else {
            Ok((num / den).sqrt())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> SpectralGrid {
        SpectralGrid::new(2, 2.0 * std::f64::consts::PI, 16).unwrap()
    }

    /// 2D field built from a stream function, divergence-free by construction.
    fn solenoidal(g: &SpectralGrid) -> VectorField {
        // psi = sin x sin y => u = (d_y psi, -d_x psi) = (sin x cos y, -cos x sin y).
        let mut u = vec![vec![Complex64::default(); g.n_points()]; 2];
        for flat in 0..g.n_points() {
            let x = g.point_at(flat);
            u[0][flat] = Complex64::new(x[0].sin() * x[1].cos(), 0.0);
            u[1][flat] = Complex64::new(-x[0].cos() * x[1].sin(), 0.0);
        }
        VectorField::from_physical(*g, u).unwrap()
    }

    #[test]
    fn shape_validation() {
        let g = grid();
        assert!(VectorField::from_physical(g, vec![]).is_err());
        assert!(VectorField::from_physical(g, vec![vec![Complex64::default(); 7]]).is_err());
    }

    #[test]
    fn stream_function_field_is_divergence_free() {
        let g = grid();
        let u = solenoidal(&g);
        assert!(u.is_divergence_free(1e-10).unwrap());
    }

    #[test]
    fn gradient_like_field_fails_divergence_check() {
        let g = grid();
        // u = grad(cos x + cos y) = (-sin x, -sin y) has divergence -cos x - cos y.
        let mut comps = vec![vec![Complex64::default(); g.n_points()]; 2];
        for flat in 0..g.n_points() {
            let x = g.point_at(flat);
            comps[0][flat] = Complex64::new(-x[0].sin(), 0.0);
            comps[1][flat] = Complex64::new(-x[1].sin(), 0.0);
        }
        let u = VectorField::from_physical(g, comps).unwrap();
        assert!(!u.is_divergence_free(1e-10).unwrap());
    }

    #[test]
    fn representations_agree_after_roundtrip() {
        let g = grid();
        let mut u = solenoidal(&g);
        u.ensure_spectral();
        assert!(u.representation_defect() <= 1e-12);
    }

    #[test]
    fn energy_matches_quadrature() {
        let g = grid();
        let u = solenoidal(&g);
        // integral of sin^2 x cos^2 y + cos^2 x sin^2 y over [0, 2pi)^2 = 2 pi^2.
        let exact = 2.0 * std::f64::consts::PI.powi(2);
        assert!((u.energy() - exact).abs() / exact < 1e-12);
    }

    #[test]
    fn mutable_access_invalidates_other_representation() {
        let g = grid();
        let mut u = solenoidal(&g);
        u.ensure_spectral();
        u.spectral_mut()[0][3] = Complex64::new(1.0, 0.0);
        assert!(!u.has_physical());
        assert!(u.has_spectral());
    }
}
