//! Lebesgue, Sobolev and Besov norms on periodic vector fields, plus the
//! Bernstein-quotient diagnostic for frequency-cube projections.
//!
//! Conventions: `||u||_{L^p}^p = (L/M)^d sum_x |u(x)|^p` over grid samples
//! (exact for band-limited integrands that the grid resolves, quadrature
//! otherwise); `|u(x)|` is the Euclidean norm over components. Spectral
//! norms use `||u||_{L^2}^2 = L^d sum_k |u_hat(k)|^2`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::decomp::{lowpass_profile, CubeFamily};
use crate::error::Error;
use crate::field::VectorField;
use crate::Result;

/// Exponent for Lebesgue and Besov integrability indices: a finite value
/// `>= 1` or infinity (grid maximum).
fn check_exponent(p: f64) -> Result<()> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::Domain(format!("integrability exponent must be >= 1, got {p}")));
    }
    Ok(())
}

/// `L^p` norm of the pointwise Euclidean magnitude; `p = inf` gives the
/// grid maximum.
pub fn lp_norm(f: &VectorField, p: f64) -> Result<f64> {
    check_exponent(p)?;
    let grid = *f.grid();
    let phys = f.to_physical();
    let comps = phys.physical()?;
    let n = grid.n_points();
    let int_p = if p.fract() == 0.0 && p <= 64.0 { Some(p as i32) } else { None };
    let mut acc = 0.0f64;
    let mut comp = 0.0f64; // Neumaier compensation
    let mut maxval = 0.0f64;
    for flat in 0..n {
        let mag_sq: f64 = comps.iter().map(|c| c[flat].norm_sqr()).sum();
        let mag = mag_sq.sqrt();
        maxval = maxval.max(mag);
        if p.is_finite() {
            let term = match int_p {
                Some(ip) => mag.powi(ip),
                None => mag.powf(p),
            };
            let t = acc + term;
            comp += if acc.abs() >= term.abs() { (acc - t) + term } else { (term - t) + acc };
            acc = t;
        }
    }
    if !p.is_finite() {
        return Ok(maxval);
    }
    let cell = (grid.box_size() / grid.points_per_axis() as f64).powi(grid.dim() as i32);
    Ok((cell * (acc + comp)).powf(1.0 / p))
}

/// Sobolev norm `H^s` (inhomogeneous: weight `(1 + |k|^2)^s`) or `H^s`
/// homogeneous (weight `|k|^{2s}`, zero mode excluded).
///
/// For homogeneous norms with `s < 0` a nonzero mean is a precondition
/// violation: the `k = 0` weight would be infinite.
pub fn sobolev_norm(f: &VectorField, s: f64, homogeneous: bool) -> Result<f64> {
    if !s.is_finite() {
        return Err(Error::Domain(format!("Sobolev index must be finite, got {s}")));
    }
    let grid = *f.grid();
    let src = f.to_spectral();
    let spec = src.spectral()?;
    let scale = grid.box_size().powi(grid.dim() as i32);
    let mut total = 0.0f64;
    let mut mean_sq = 0.0f64;
    for flat in 0..grid.n_points() {
        let ksq = grid.k_sq_at(flat);
        let mass: f64 = spec.iter().map(|c| c[flat].norm_sqr()).sum();
        if ksq == 0.0 {
            mean_sq = mass;
            if homogeneous {
                continue;
            }
        }
        let w = if homogeneous { ksq.powf(s) } else { (1.0 + ksq).powf(s) };
        total += w * mass;
    }
    if homogeneous && s < 0.0 && mean_sq > 1e-28 * total.max(1e-300) {
        return Err(Error::Precondition(format!(
            "homogeneous norm with negative index {s} needs zero-mean data (mean mass {mean_sq:e})"
        )));
    }
    Ok((scale * total).sqrt())
}

/// One dyadic block of the Besov analysis.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BesovBlock {
    /// Block scale; the lowest block is a low-pass at this scale.
    pub n: f64,
    /// `L^p` norm of the block projection.
    pub lp: f64,
    /// Contribution `n^s * lp` entering the outer sum.
    pub weighted: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BesovNorm {
    pub s: f64,
    pub p: f64,
    pub q: f64,
    pub value: f64,
    pub blocks: Vec<BesovBlock>,
    /// The lowest block is a low-pass that absorbs the mean and every
    /// frequency below it; with `s != 0` its weight is a convention, so it
    /// is reported rather than hidden.
    pub lowpass_scale: f64,
}

/// Besov norm `B^s_{p,q}`: `l^q` over dyadic scales of `N^s ||P_N u||_{L^p}`.
///
/// Scales run over `N = N_lo, 2 N_lo, ...` up to the grid cutoff, where
/// `N_lo = 2 pi / L` is the lowest nonzero frequency; the `N_lo` block is a
/// low-pass (collapsing the infrared tail including the mean), the others
/// smooth annuli from the same transition profile as the cube bumps.
pub fn besov_norm(f: &VectorField, s: f64, p: f64, q: f64) -> Result<BesovNorm> {
    check_exponent(p)?;
    check_exponent(q)?;
    if !s.is_finite() {
        return Err(Error::Domain(format!("Besov regularity must be finite, got {s}")));
    }
    let grid = *f.grid();
    let src = f.to_spectral();
    let spec = src.spectral()?;
    let n_lo = grid.dk();
    let cutoff = grid.cutoff();

    let mut blocks = Vec::new();
    let mut n = n_lo;
    while n <= cutoff * (1.0 + 1e-12) {
        let mut block = vec![vec![Complex64::default(); grid.n_points()]; spec.len()];
        let mut any = false;
        for flat in 0..grid.n_points() {
            let kn = grid.k_sq_at(flat).sqrt();
            let w = if n == n_lo {
                lowpass_profile(kn / n)
            } else {
                lowpass_profile(kn / n) - lowpass_profile(2.0 * kn / n)
            };
            if w != 0.0 {
                for (b, c) in block.iter_mut().zip(spec) {
                    b[flat] = c[flat] * w;
                }
                any = true;
            }
        }
        let lp = if any {
            lp_norm(&VectorField::from_spectral(grid, block)?, p)?
        } else {
            0.0
        };
        let weighted = n.powf(s) * lp;
        blocks.push(BesovBlock { n, lp, weighted });
        n *= 2.0;
    }

    let value = if q.is_finite() {
        blocks.iter().map(|b| b.weighted.powf(q)).sum::<f64>().powf(1.0 / q)
    } else {
        blocks.iter().map(|b| b.weighted).fold(0.0, f64::max)
    };
    Ok(BesovNorm { s, p, q, value, blocks, lowpass_scale: n_lo })
}

/// Bernstein quotient for a frequency-cube projection:
/// `||<D>^kappa box_j f||_{L^q} / ||<D>^{kappa - a (d/p - d/q)} box_j f||_{L^p}`
/// with `<D>` the inhomogeneous derivative weight `(1+|k|^2)^{1/2}`.
///
/// For cubes of side `N^{-a}` the two sides are comparable uniformly in
/// the shell, which is the claim the diagnostic lets an experiment check.
pub fn bernstein_ratio(
    family: &CubeFamily,
    f: &VectorField,
    j: u64,
    kappa: f64,
    p: f64,
    q: f64,
) -> Result<f64> {
    check_exponent(p)?;
    check_exponent(q)?;
    if !p.is_finite() || !q.is_finite() {
        return Err(Error::Domain("Bernstein quotient needs finite exponents".into()));
    }
    if q < p {
        return Err(Error::Domain(format!(
            "Bernstein quotient needs q >= p, got p = {p}, q = {q}"
        )));
    }
    let d = f.grid().dim() as f64;
    let a = family.params().a as f64;
    let proj = family.box_project(f, j)?;
    let scale = proj.spectral_l2();
    if scale <= 1e-14 {
        return Err(Error::Degenerate(format!(
            "projection onto cube {j} carries no usable mass ({scale:e})"
        )));
    }
    let upper = lp_norm(&apply_inhomogeneous_weight(&proj, kappa)?, q)?;
    let drop = a * (d / p - d / q);
    let lower = lp_norm(&apply_inhomogeneous_weight(&proj, kappa - drop)?, p)?;
    if lower <= 1e-300 {
        return Err(Error::Degenerate("Bernstein denominator vanished".into()));
    }
    Ok(upper / lower)
}

pub(crate) fn apply_inhomogeneous_weight(f: &VectorField, s: f64) -> Result<VectorField> {
    let grid = *f.grid();
    let mut out = f.to_spectral();
    let spec = out.spectral_mut();
    for flat in 0..grid.n_points() {
        let w = (1.0 + grid.k_sq_at(flat)).powf(s / 2.0);
        for c in spec.iter_mut() {
            c[flat] *= w;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomp::DecompParams;
    use crate::grid::SpectralGrid;

    fn grid(m: usize) -> SpectralGrid {
        SpectralGrid::new(2, 2.0 * std::f64::consts::PI, m).unwrap()
    }

    fn scalar_field(g: &SpectralGrid, f: impl Fn(&[f64]) -> f64) -> VectorField {
        let vals = (0..g.n_points()).map(|flat| f(&g.point_at(flat)[..g.dim()])).collect();
        VectorField::from_physical_real(*g, vec![vals]).unwrap()
    }

    #[test]
    fn lp_norms_of_sine_match_closed_forms() {
        let g = grid(64);
        let u = scalar_field(&g, |x| x[0].sin());
        // ||sin||_{L^2}^2 over [0, 2pi]^2 = 2 pi^2.
        let l2 = lp_norm(&u, 2.0).unwrap();
        assert!((l2 - (2.0 * std::f64::consts::PI.powi(2)).sqrt()).abs() < 1e-12);
        // ||sin||_{L^4}^4 = (3/8) * 2pi * 2pi = 3 pi^2 / 2... computed:
        // int sin^4 = (3/8) 2pi per axis factor, times 2pi for y.
        let l4 = lp_norm(&u, 4.0).unwrap();
        let exact = (0.375 * 2.0 * std::f64::consts::PI * 2.0 * std::f64::consts::PI).powf(0.25);
        assert!((l4 - exact).abs() < 1e-12, "L4 {l4} vs {exact}");
        // L^inf of sin is 1 but the grid may miss the crest peak slightly;
        // M = 64 on 2 pi hits pi/2 exactly.
        let linf = lp_norm(&u, f64::INFINITY).unwrap();
        assert!((linf - 1.0).abs() < 1e-13);
        assert!(lp_norm(&u, 0.5).is_err());
    }

    #[test]
    fn l2_norm_agrees_with_parseval() {
        let g = grid(32);
        let u = scalar_field(&g, |x| (3.0 * x[0]).sin() + 0.5 * (x[0] + 2.0 * x[1]).cos());
        let quad = lp_norm(&u, 2.0).unwrap();
        let spectral = u.energy().sqrt();
        assert!((quad - spectral).abs() <= 1e-12 * quad);
    }

    #[test]
    fn sobolev_single_mode_weights() {
        let g = grid(32);
        // sin(2 x_1): |k| = 2, L^2 norm sqrt(2 pi^2).
        let u = scalar_field(&g, |x| (2.0 * x[0]).sin());
        let l2 = lp_norm(&u, 2.0).unwrap();
        let hs = sobolev_norm(&u, -1.0, false).unwrap();
        assert!((hs - l2 / (1.0f64 + 4.0).sqrt()).abs() < 1e-12);
        let hom = sobolev_norm(&u, -1.0, true).unwrap();
        assert!((hom - l2 / 2.0).abs() < 1e-12);
        // Weight (1+|k|^2)^s sits inside the squared sum: s = 2 at |k| = 2
        // scales the norm by (1+4)^{2/2} = 5.
        let h2 = sobolev_norm(&u, 2.0, false).unwrap();
        assert!((h2 - l2 * 5.0).abs() < 1e-10);
    }

    #[test]
    fn homogeneous_negative_index_rejects_nonzero_mean() {
        let g = grid(16);
        let u = scalar_field(&g, |x| 1.0 + x[0].sin());
        assert!(matches!(sobolev_norm(&u, -0.5, true), Err(Error::Precondition(_))));
        // Zero-mean variant is fine.
        let v = scalar_field(&g, |x| x[0].sin());
        assert!(sobolev_norm(&v, -0.5, true).is_ok());
        // Inhomogeneous norm never cares about the mean.
        assert!(sobolev_norm(&u, -0.5, false).is_ok());
    }

    #[test]
    fn besov_second_index_two_two_matches_sobolev_on_single_scale() {
        let g = grid(64);
        // One annulus-resolved mode: |k| = 4 lands in the N = 4 block only.
        let u = scalar_field(&g, |x| (4.0 * x[0]).sin());
        let b = besov_norm(&u, -0.7, 2.0, 2.0).unwrap();
        let active: Vec<_> = b.blocks.iter().filter(|bl| bl.lp > 1e-12).collect();
        assert_eq!(active.len(), 1, "single mode must occupy one block");
        assert!((active[0].n - 4.0).abs() < 1e-14);
        let expected = 4.0f64.powf(-0.7) * lp_norm(&u, 2.0).unwrap();
        assert!((b.value - expected).abs() < 1e-12);
    }

    #[test]
    fn besov_l2_ratio_is_order_one_for_generic_data() {
        let g = grid(64);
        let u = scalar_field(&g, |x| {
            (1.0 * x[0]).sin() + 0.7 * (3.0 * x[1]).cos() + 0.4 * (5.0 * (x[0] + x[1])).sin()
        });
        let b = besov_norm(&u, 0.0, 2.0, 2.0).unwrap();
        let l2 = lp_norm(&u, 2.0).unwrap();
        let ratio = b.value / l2;
        assert!(
            (0.8..=1.2).contains(&ratio),
            "B^0_22 / L^2 = {ratio} should be near 1 for spread-out data"
        );
    }

    #[test]
    fn besov_infinity_q_takes_the_max_block() {
        let g = grid(64);
        let u = scalar_field(&g, |x| (4.0 * x[0]).sin() + 0.3 * (8.0 * x[1]).sin());
        let b = besov_norm(&u, 0.0, 2.0, f64::INFINITY).unwrap();
        let max_block = b.blocks.iter().map(|bl| bl.weighted).fold(0.0, f64::max);
        assert_eq!(b.value, max_block);
    }

    #[test]
    fn besov_blocks_telescope_back_to_the_field() {
        // Sum of all block multipliers is 1 below the top low-pass scale, so
        // mass on resolved annuli is preserved: check via the l2 identity
        // sum of block L2 masses ~ L2 mass when blocks barely overlap...
        // Overlapping annuli prevent exact Pythagoras; instead verify the
        // multiplier telescoping directly on radii.
        for r in [0.3, 0.9, 1.7, 2.0, 3.1, 6.4, 12.9] {
            let mut sum = lowpass_profile(r / 1.0);
            let mut n = 2.0;
            while n <= 16.0 {
                sum += lowpass_profile(r / n) - lowpass_profile(2.0 * r / n);
                n *= 2.0;
            }
            // Telescopes to lowpass(r / 16): equals 1 for r <= 16.
            assert!((sum - lowpass_profile(r / 16.0)).abs() < 1e-14, "telescoping at r = {r}");
        }
    }

    #[test]
    fn bernstein_ratio_scales_with_exponent_gap() {
        let g = SpectralGrid::new(2, 8.0 * std::f64::consts::PI, 128).unwrap();
        let fam =
            CubeFamily::new(DecompParams::new(2, -0.8, 0.05, 0, 4).unwrap()).unwrap();
        // Broadband field covering several cubes.
        let u = scalar_field(&g, |x| {
            (1.5 * x[0]).sin() * (2.5 * x[1]).cos() + 0.6 * (3.25 * x[0] + 1.75 * x[1]).sin()
        });
        // Find a cube carrying mass and evaluate the quotient.
        let probe = [1.5, 2.5];
        let (j, _) = fam.partition_weights(&probe)[0];
        let r = bernstein_ratio(&fam, &u, j, 0.0, 2.0, 4.0).unwrap();
        assert!(r.is_finite() && r > 0.0);
        // a = 0: the weight drop vanishes, so p = q = 2 gives exactly 1.
        let unit = bernstein_ratio(&fam, &u, j, 0.3, 2.0, 2.0).unwrap();
        assert!((unit - 1.0).abs() < 1e-12);
        assert!(bernstein_ratio(&fam, &u, j, 0.0, 4.0, 2.0).is_err(), "q < p refused");
    }

    #[test]
    fn bernstein_ratio_rejects_empty_projection() {
        let g = SpectralGrid::new(2, 8.0 * std::f64::consts::PI, 128).unwrap();
        let fam = CubeFamily::new(DecompParams::new(2, -0.8, 0.05, 0, 4).unwrap()).unwrap();
        let u = scalar_field(&g, |x| (0.25 * x[0]).sin());
        // A far-away cube sees none of this low-frequency field.
        let far = fam.partition_weights(&[7.5, 7.5])[0].0;
        assert!(matches!(
            bernstein_ratio(&fam, &u, far, 0.0, 2.0, 4.0),
            Err(Error::Degenerate(_))
        ));
    }
}
