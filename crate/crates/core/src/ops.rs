//! Spectral operators: Leray projection onto divergence-free fields, the
//! heat semigroup, and the parabolic rescaling of velocity data.

use num_complex::Complex64;

use crate::error::Error;
use crate::field::VectorField;
use crate::Result;

/// In-place Leray kernel on raw spectral components.
pub(crate) fn leray_project_raw(grid: &crate::grid::SpectralGrid, spec: &mut [Vec<Complex64>]) {
    for flat in 0..grid.n_points() {
        let k = grid.freq_at(flat);
        let ksq = grid.k_sq_at(flat);
        if ksq == 0.0 {
            continue;
        }
        let mut dot = Complex64::default();
        for (ax, c) in spec.iter().enumerate() {
            dot += Complex64::new(k[ax], 0.0) * c[flat];
        }
        let factor = dot / ksq;
        for (ax, c) in spec.iter_mut().enumerate() {
            c[flat] -= Complex64::new(k[ax], 0.0) * factor;
        }
    }
}

/// Projects onto divergence-free fields: `u_hat(k) -= k (k . u_hat) / |k|^2`
/// for `k != 0`; the zero mode is untouched.
pub fn leray_project(f: &VectorField) -> Result<VectorField> {
    let grid = *f.grid();
    let mut out = f.to_spectral();
    if out.n_comp() != grid.dim() {
        return Err(Error::Shape(format!(
            "Leray projection needs {} components, field has {}",
            grid.dim(),
            out.n_comp()
        )));
    }
    leray_project_raw(&grid, out.spectral_mut());
    Ok(out)
}

/// Applies `exp(t Laplacian)`: multiplies `u_hat(k)` by `exp(-|k|^2 t)`.
pub fn heat_propagate(f: &VectorField, t: f64) -> Result<VectorField> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::Domain(format!("heat propagation needs t >= 0, got {t}")));
    }
    let grid = *f.grid();
    let mut out = f.to_spectral();
    let spec = out.spectral_mut();
    for flat in 0..grid.n_points() {
        let damp = (-grid.k_sq_at(flat) * t).exp();
        for c in spec.iter_mut() {
            c[flat] *= damp;
        }
    }
    Ok(out)
}

/// Parabolic rescaling of velocity data: returns `lambda u(lambda x)` on the
/// grid with box `L / lambda` and unchanged resolution.
///
/// Physical sample points of the two grids coincide under the scaling map,
/// so the result is exact for every `lambda > 0`: samples and coefficients
/// are simply multiplied by `lambda` while integer frequencies keep their
/// bins (bin `m` now encodes frequency `lambda * (2 pi / L) m`).
pub fn scale_field(f: &VectorField, lambda: f64) -> Result<VectorField> {
    let scaled_grid = f.grid().rescaled(lambda)?;
    let alpha = Complex64::new(lambda, 0.0);
    let src = f.scaled(alpha);
    if src.has_spectral() {
        VectorField::from_spectral(scaled_grid, src.to_spectral().spectral()?.to_vec())
    } else {
        VectorField::from_physical(scaled_grid, src.physical()?.to_vec())
    }
}

/// Rescaling that keeps the original box: frequencies are remapped
/// `k -> lambda k` on the same lattice, so `lambda` must be an integer power
/// of two and the remapped support must stay inside the lattice.
pub fn scale_field_same_box(f: &VectorField, lambda: f64) -> Result<VectorField> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::Domain(format!("scale factor must be positive, got {lambda}")));
    }
    let log2 = lambda.log2();
    if log2.fract() != 0.0 {
        return Err(Error::Lattice(format!(
            "scale factor {lambda} is not a power of two; rescale onto the corresponding box instead"
        )));
    }
    let p = log2 as i32;
    let grid = *f.grid();
    let src = f.to_spectral();
    let spec = src.spectral()?;
    let n_comp = spec.len();
    let mut out = vec![vec![Complex64::default(); grid.n_points()]; n_comp];
    // Transform round-off leaves ~1e-16 dust on empty bins; only bins with
    // a meaningful share of the peak amplitude must map onto the lattice.
    let peak = spec
        .iter()
        .flat_map(|c| c.iter())
        .map(|z| z.norm_sqr())
        .fold(0.0f64, f64::max);
    let tol = peak * 1e-26;
    for flat in 0..grid.n_points() {
        let m = grid.int_freq_at(flat);
        let mut nonzero = false;
        for c in spec {
            if c[flat].norm_sqr() > tol {
                nonzero = true;
                break;
            }
        }
        if !nonzero {
            continue;
        }
        let mut target = [0usize; crate::grid::MAX_DIM];
        let mut ok = true;
        for ax in 0..grid.dim() {
            let scaled = if p >= 0 {
                m[ax].checked_shl(p as u32)
            } else {
                let div = 1i64 << (-p) as u32;
                if m[ax] % div != 0 {
                    None
                } else {
                    Some(m[ax] / div)
                }
            };
            match scaled.and_then(|s| grid.bin_of(s)) {
                Some(bin) => target[ax] = bin,
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            return Err(Error::Lattice(format!(
                "mode {:?} does not map onto the lattice under scale factor {lambda}",
                &m[..grid.dim()]
            )));
        }
        let tflat = grid.encode(target);
        for (ci, c) in spec.iter().enumerate() {
            out[ci][tflat] = c[flat] * lambda;
        }
    }
    VectorField::from_spectral(grid, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::SpectralGrid;

    fn grid() -> SpectralGrid {
        SpectralGrid::new(2, 2.0 * std::f64::consts::PI, 32).unwrap()
    }

    fn field_from_fn(g: &SpectralGrid, f: impl Fn(&[f64]) -> Vec<f64>) -> VectorField {
        let n = f(&g.point_at(0)[..g.dim()]).len();
        let mut comps = vec![vec![Complex64::default(); g.n_points()]; n];
        for flat in 0..g.n_points() {
            let vals = f(&g.point_at(flat)[..g.dim()]);
            for (c, v) in comps.iter_mut().zip(vals) {
                c[flat] = Complex64::new(v, 0.0);
            }
        }
        VectorField::from_physical(*g, comps).unwrap()
    }

    #[test]
    fn leray_annihilates_gradients() {
        let g = grid();
        let u = field_from_fn(&g, |x| vec![-x[0].sin(), -x[1].sin()]);
        let p = leray_project(&u).unwrap();
        let norm = p.spectral_l2();
        assert!(norm < 1e-13, "projected gradient should vanish, got {norm}");
    }

    #[test]
    fn leray_fixes_divergence_free_fields_and_is_idempotent() {
        let g = grid();
        let u = field_from_fn(&g, |x| vec![x[0].sin() * x[1].cos(), -x[0].cos() * x[1].sin()]);
        let p1 = leray_project(&u).unwrap();
        assert!(p1.rel_l2_distance(&u).unwrap() <= 1e-12);
        let p2 = leray_project(&p1).unwrap();
        assert!(p2.rel_l2_distance(&p1).unwrap() <= 1e-12);
        assert!(p1.is_divergence_free(1e-10).unwrap());
    }

    #[test]
    fn leray_is_self_adjoint() {
        let g = grid();
        let u = field_from_fn(&g, |x| vec![(2.0 * x[0]).sin(), (x[0] + x[1]).cos()]);
        let v = field_from_fn(&g, |x| vec![x[1].sin(), (3.0 * x[0]).cos()]);
        let pu = leray_project(&u).unwrap().to_spectral();
        let pv = leray_project(&v).unwrap().to_spectral();
        let us = u.to_spectral();
        let vs = v.to_spectral();
        let dot = |a: &VectorField, b: &VectorField| -> Complex64 {
            let mut s = Complex64::default();
            for (ca, cb) in a.spectral().unwrap().iter().zip(b.spectral().unwrap()) {
                for (va, vb) in ca.iter().zip(cb) {
                    s += va * vb.conj();
                }
            }
            s
        };
        let lhs = dot(&pu, &vs);
        let rhs = dot(&us, &pv);
        assert!((lhs - rhs).norm() <= 1e-12 * (lhs.norm() + 1.0));
    }

    #[test]
    fn heat_is_identity_at_zero_and_damps_single_mode() {
        let g = grid();
        let u = field_from_fn(&g, |x| vec![x[0].sin()]);
        let same = heat_propagate(&u, 0.0).unwrap();
        assert!(same.rel_l2_distance(&u).unwrap() <= 1e-13);
        // |k|^2 = 1 for the sin(x_1) pair, so t = 1 scales by e^{-1}.
        let damped = heat_propagate(&u, 1.0).unwrap();
        let expected = u.scaled(Complex64::new((-1.0f64).exp(), 0.0));
        assert!(damped.rel_l2_distance(&expected).unwrap() <= 1e-12);
        assert!(heat_propagate(&u, -0.5).is_err());
    }

    #[test]
    fn heat_semigroup_composes() {
        let g = grid();
        let u = field_from_fn(&g, |x| vec![(3.0 * x[0]).sin() + (x[0] - 2.0 * x[1]).cos()]);
        let two_steps = heat_propagate(&heat_propagate(&u, 0.3).unwrap(), 0.45).unwrap();
        let one_step = heat_propagate(&u, 0.75).unwrap();
        assert!(two_steps.rel_l2_distance(&one_step).unwrap() <= 1e-12);
    }

    #[test]
    fn heat_never_increases_energy() {
        let g = grid();
        let u = field_from_fn(&g, |x| vec![x[0].sin() + 0.3 * (5.0 * x[1]).cos()]);
        let mut prev = u.energy();
        for i in 1..5 {
            let e = heat_propagate(&u, 0.1 * i as f64).unwrap().energy();
            assert!(e <= prev * (1.0 + 1e-14));
            prev = e;
        }
    }

    #[test]
    fn scaling_doubles_frequency_and_amplitude() {
        let g = grid();
        let u = field_from_fn(&g, |x| vec![x[0].sin()]);
        let s = scale_field(&u, 2.0).unwrap();
        // On the half-size box the samples are 2 sin((4 pi / L) x'), which
        // coincides with 2x the original samples point-for-point.
        let expected = u.scaled(Complex64::new(2.0, 0.0));
        let sp = s.to_physical();
        let ep = expected.to_physical();
        for (a, b) in sp.physical().unwrap()[0].iter().zip(&ep.physical().unwrap()[0]) {
            assert!((a - b).norm() < 1e-13);
        }
        assert!((s.grid().box_size() - std::f64::consts::PI).abs() < 1e-14);

        let same_box = scale_field_same_box(&u, 2.0).unwrap();
        let spec = same_box.to_spectral();
        let bin = g.encode([g.bin_of(2).unwrap(), 0, 0]);
        assert!((spec.spectral().unwrap()[0][bin] - Complex64::new(0.0, -1.0)).norm() < 1e-13);
    }

    #[test]
    fn critical_norm_is_scale_invariant_in_2d() {
        // ||lambda u(lambda .)||_{L^2} on the box L/lambda equals ||u||_{L^2}
        // on the box L when d = 2.
        let g = grid();
        let u = field_from_fn(&g, |x| {
            vec![x[0].sin() * x[1].cos() + 0.2 * (3.0 * x[1]).sin(), -x[0].cos() * x[1].sin()]
        });
        let e0 = u.energy().sqrt();
        for lambda in [2.0, 4.0, 0.5, 3.0] {
            let e1 = scale_field(&u, lambda).unwrap().energy().sqrt();
            assert!(
                (e0 - e1).abs() / e0 <= 1e-10,
                "critical norm drifted: {e0} vs {e1} at lambda {lambda}"
            );
        }
    }

    #[test]
    fn scaling_composes() {
        let g = grid();
        let u = field_from_fn(&g, |x| vec![x[0].sin() + x[1].cos(), x[1].sin()]);
        let a = scale_field(&scale_field(&u, 2.0).unwrap(), 2.0).unwrap();
        let b = scale_field(&u, 4.0).unwrap();
        assert!(a.rel_l2_distance(&b).unwrap() <= 1e-13);
        assert!((a.grid().box_size() - b.grid().box_size()).abs() < 1e-14);
    }

    #[test]
    fn same_box_scaling_rejects_incompatible_factors() {
        let g = grid();
        let u = field_from_fn(&g, |x| vec![x[0].sin()]);
        assert!(matches!(scale_field_same_box(&u, 3.0), Err(Error::Lattice(_))));
        // sin has odd frequency content, so lambda = 1/2 cannot stay on lattice.
        assert!(matches!(scale_field_same_box(&u, 0.5), Err(Error::Lattice(_))));
        // High frequency pushed past the cutoff is also a lattice error.
        let hi = field_from_fn(&g, |x| vec![(12.0 * x[0]).sin()]);
        assert!(matches!(scale_field_same_box(&hi, 2.0), Err(Error::Lattice(_))));
    }
}
