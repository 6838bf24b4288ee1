//! d-dimensional FFT with the normalization used throughout the crate:
//! forward transforms divide by `M^d`, so a coefficient is
//! `u_hat(k) = M^{-d} sum_n u(x_n) exp(-i k . x_n)` and the inverse is the
//! plain unnormalized synthesis sum.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use num_complex::Complex64;
use once_cell::sync::Lazy;
use rustfft::{Fft, FftPlanner};

use crate::grid::SpectralGrid;

struct AxisPlan {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

static PLANS: Lazy<Mutex<HashMap<usize, Arc<AxisPlan>>>> = Lazy::new(|| Mutex::new(HashMap::new()));

fn plan_for(m: usize) -> Arc<AxisPlan> {
    let mut plans = PLANS.lock().unwrap();
    plans
        .entry(m)
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            Arc::new(AxisPlan {
                forward: planner.plan_fft_forward(m),
                inverse: planner.plan_fft_inverse(m),
            })
        })
        .clone()
}

/// Applies the planned 1D transform along every axis of the row-major cube.
///
/// Large fields fan lanes out across the rayon pool; every lane is an
/// independent 1D transform written back to fixed positions, so results are
/// bitwise identical for any worker count.
fn transform_axes(grid: &SpectralGrid, data: &mut [Complex64], forward: bool) {
    use rayon::prelude::*;

    let m = grid.points_per_axis();
    let d = grid.dim();
    assert_eq!(data.len(), grid.n_points(), "field length must match grid");
    let plan = plan_for(m);
    let fft = if forward { &plan.forward } else { &plan.inverse };
    let parallel = data.len() >= 1 << 14;

    // Axis ax has stride m^(d-1-ax); lanes are enumerated by the remaining axes.
    for ax in 0..d {
        let stride = m.pow((d - 1 - ax) as u32);
        let block = stride * m;
        let lane_base = |lane: usize| (lane / stride) * block + lane % stride;
        let n_lanes = data.len() / m;
        if parallel {
            let shared: &[Complex64] = data;
            let lanes: Vec<Vec<Complex64>> = (0..n_lanes)
                .into_par_iter()
                .map_init(
                    || vec![Complex64::default(); fft.get_inplace_scratch_len()],
                    |scratch, lane| {
                        let base = lane_base(lane);
                        let mut buf: Vec<Complex64> =
                            (0..m).map(|i| shared[base + i * stride]).collect();
                        fft.process_with_scratch(&mut buf, scratch);
                        buf
                    },
                )
                .collect();
            for (lane, buf) in lanes.into_iter().enumerate() {
                let base = lane_base(lane);
                for (i, v) in buf.into_iter().enumerate() {
                    data[base + i * stride] = v;
                }
            }
        } else {
            let mut lane_buf = vec![Complex64::default(); m];
            for lane in 0..n_lanes {
                let base = lane_base(lane);
                for i in 0..m {
                    lane_buf[i] = data[base + i * stride];
                }
                fft.process(&mut lane_buf);
                for i in 0..m {
                    data[base + i * stride] = lane_buf[i];
                }
            }
        }
    }
}

/// Physical samples -> spectral coefficients (in place, normalized by M^-d).
pub fn forward(grid: &SpectralGrid, data: &mut [Complex64]) {
    transform_axes(grid, data, true);
    let scale = 1.0 / grid.n_points() as f64;
    for v in data.iter_mut() {
        *v *= scale;
    }
}

/// Spectral coefficients -> physical samples (in place, no scaling).
pub fn inverse(grid: &SpectralGrid, data: &mut [Complex64]) {
    transform_axes(grid, data, false);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid2(m: usize) -> SpectralGrid {
        SpectralGrid::new(2, 2.0 * std::f64::consts::PI, m).unwrap()
    }

    #[test]
    fn constant_field_transforms_to_zero_mode() {
        let g = grid2(16);
        let mut data = vec![Complex64::new(3.5, 0.0); g.n_points()];
        forward(&g, &mut data);
        assert!((data[0] - Complex64::new(3.5, 0.0)).norm() < 1e-13);
        let tail: f64 = data[1..].iter().map(|v| v.norm()).sum();
        assert!(tail < 1e-12, "energy should sit in the zero mode, tail {tail}");
    }

    #[test]
    fn sine_mode_splits_into_conjugate_pair() {
        // u(x) = sin((2 pi / L) x_1) has coefficients -i/2 and +i/2 at
        // integer frequencies +1 and -1 along axis 0.
        let g = grid2(16);
        let mut data: Vec<Complex64> = (0..g.n_points())
            .map(|flat| {
                let x = g.point_at(flat);
                Complex64::new((g.dk() * x[0]).sin(), 0.0)
            })
            .collect();
        forward(&g, &mut data);
        let plus = g.encode([g.bin_of(1).unwrap(), 0, 0]);
        let minus = g.encode([g.bin_of(-1).unwrap(), 0, 0]);
        assert!((data[plus] - Complex64::new(0.0, -0.5)).norm() < 1e-13);
        assert!((data[minus] - Complex64::new(0.0, 0.5)).norm() < 1e-13);
        let rest: f64 = data
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != plus && *i != minus)
            .map(|(_, v)| v.norm())
            .sum();
        assert!(rest < 1e-12);
    }

    #[test]
    fn roundtrip_is_identity() {
        for (d, m) in [(2usize, 32usize), (3, 8)] {
            let g = SpectralGrid::new(d, 5.0, m).unwrap();
            let orig: Vec<Complex64> = (0..g.n_points())
                .map(|i| {
                    // Deterministic filler with both parts nonzero.
                    let a = (i as f64 * 0.7391 + 0.1).sin();
                    let b = (i as f64 * 0.2113 + 0.3).cos();
                    Complex64::new(a, b)
                })
                .collect();
            let mut data = orig.clone();
            forward(&g, &mut data);
            inverse(&g, &mut data);
            let num: f64 = data
                .iter()
                .zip(&orig)
                .map(|(a, b)| (a - b).norm_sqr())
                .sum::<f64>()
                .sqrt();
            let den: f64 = orig.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
            assert!(num / den <= 1e-12, "roundtrip defect {} at d={d}", num / den);
        }
    }

    #[test]
    fn parseval_with_box_volume_factor() {
        // ||u||_{L^2}^2 = (L/M)^d sum |u_n|^2 = L^d sum |u_hat(k)|^2.
        let g = SpectralGrid::new(2, 3.0, 32).unwrap();
        let phys: Vec<Complex64> = (0..g.n_points())
            .map(|i| Complex64::new((i as f64 * 1.618).sin(), 0.0))
            .collect();
        let quad: f64 = phys.iter().map(|v| v.norm_sqr()).sum::<f64>() * g.dx().powi(g.dim() as i32);
        let mut spec = phys;
        forward(&g, &mut spec);
        let spectral: f64 =
            spec.iter().map(|v| v.norm_sqr()).sum::<f64>() * g.box_size().powi(g.dim() as i32);
        assert!(
            (quad - spectral).abs() / quad <= 1e-12,
            "parseval defect {}",
            (quad - spectral).abs() / quad
        );
    }
}
