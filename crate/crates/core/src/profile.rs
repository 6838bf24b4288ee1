//! Deterministic initial-data profiles.
//!
//! The power-law profile places `<k>^{-s - d/2 - delta}` amplitudes on a
//! band-limited lattice with all modes phase-aligned at a seed-jittered
//! physical point, giving a coherent (localized) field that is exactly at
//! regularity `H^s`: per-dyadic-shell Sobolev mass decays like `N^{-2
//! delta}`, so every shell matters and frequency-cube statistics see the
//! worst case rather than a flattened generic field.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::field::VectorField;
use crate::grid::{SpectralGrid, MAX_DIM};
use crate::norms::sobolev_norm;
use crate::random::CounterRng;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProfileKind {
    /// Coherent band-limited field with `<k>^{-s-d/2-delta}` amplitudes.
    PowerLaw,
    /// Constant amplitude on the shell `N < |k|_inf <= 2N`, coherent phases.
    SingleShell,
    /// The classical cellular vortex: exactly divergence-free, one shell.
    TaylorGreen,
    /// Taylor-Green plus a weaker half-scale vortex; activates a genuine
    /// nonlinear cascade for time-stepper convergence studies.
    MixedMode,
}

impl std::str::FromStr for ProfileKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "power-law" => Ok(ProfileKind::PowerLaw),
            "single-shell" => Ok(ProfileKind::SingleShell),
            "taylor-green" => Ok(ProfileKind::TaylorGreen),
            "mixed-mode" => Ok(ProfileKind::MixedMode),
            other => Err(Error::Config {
                line: 0,
                message: format!(
                    "unknown profile kind {other:?} (expected power-law, single-shell, taylor-green or mixed-mode)"
                ),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileParams {
    pub kind: ProfileKind,
    /// Target Sobolev regularity; the profile is normalized so that
    /// `||f||_{H^s} = amplitude`.
    pub s: f64,
    /// Spectral tail margin; per-shell `H^s` mass decays like `N^{-2 delta}`.
    pub delta: f64,
    /// Band limit: modes with `|k|_inf > band` are exactly zero. For
    /// `single-shell` this is the shell value `N` instead.
    pub band: f64,
    pub amplitude: f64,
    /// Seeds the phase-center jitter; same seed, same field, bit for bit.
    pub seed: u64,
}

impl ProfileParams {
    pub fn new(kind: ProfileKind, s: f64, band: f64, amplitude: f64, seed: u64) -> Self {
        ProfileParams { kind, s, delta: 0.1, band, amplitude, seed }
    }
}

/// Builds the requested profile as a real, zero-mean, divergence-free
/// velocity field with `d` components.
pub fn make_profile(grid: &SpectralGrid, params: &ProfileParams) -> Result<VectorField> {
    if !(params.amplitude.is_finite() && params.amplitude > 0.0) {
        return Err(Error::Domain(format!("amplitude must be positive, got {}", params.amplitude)));
    }
    match params.kind {
        ProfileKind::TaylorGreen => taylor_green(grid, params.amplitude),
        ProfileKind::MixedMode => mixed_mode(grid, params.amplitude),
        ProfileKind::PowerLaw | ProfileKind::SingleShell => coherent_spectrum(grid, params),
    }
}

/// Phase-alignment center: box center plus a seed-dependent jitter of up
/// to an eighth of the box per axis.
fn phase_center(grid: &SpectralGrid, seed: u64) -> [f64; MAX_DIM] {
    let mut rng = CounterRng::new(seed, 2);
    let l = grid.box_size();
    let mut x0 = [0.0; MAX_DIM];
    for x in x0.iter_mut().take(grid.dim()) {
        *x = 0.5 * l + 0.25 * l * (rng.next_f64() - 0.5);
    }
    x0
}

fn coherent_spectrum(grid: &SpectralGrid, params: &ProfileParams) -> Result<VectorField> {
    let d = grid.dim();
    if !(params.band > 0.0 && params.band < grid.cutoff()) {
        return Err(Error::Coverage(format!(
            "profile band {} must lie strictly below the grid cutoff {}",
            params.band,
            grid.cutoff()
        )));
    }
    if !(params.delta > 0.0) {
        return Err(Error::Domain(format!("tail margin must be positive, got {}", params.delta)));
    }
    let x0 = phase_center(grid, params.seed);
    // Fixed polarization, Leray-projected per mode. Real and even in k, so
    // together with the conjugate-symmetric phase the field is real.
    let pol = [1.0, 0.55, 0.35];
    let decay = -params.s - d as f64 / 2.0 - params.delta;
    let mut spec = vec![vec![Complex64::default(); grid.n_points()]; d];
    for flat in 0..grid.n_points() {
        let k = grid.freq_at(flat);
        let ksq = grid.k_sq_at(flat);
        if ksq == 0.0 {
            continue;
        }
        let kinf = (0..d).map(|ax| k[ax].abs()).fold(0.0, f64::max);
        let keep = match params.kind {
            ProfileKind::SingleShell => kinf > params.band && kinf <= 2.0 * params.band,
            _ => kinf <= params.band,
        };
        if !keep {
            continue;
        }
        let amp = match params.kind {
            ProfileKind::SingleShell => 1.0,
            _ => (1.0 + ksq).powf(decay / 2.0),
        };
        let phase: f64 = -(0..d).map(|ax| k[ax] * x0[ax]).sum::<f64>();
        let rot = Complex64::from_polar(amp, phase);
        let kdote: f64 = (0..d).map(|ax| k[ax] * pol[ax]).sum();
        for (ax, comp) in spec.iter_mut().enumerate() {
            let e_proj = pol[ax] - k[ax] * kdote / ksq;
            comp[flat] = rot * e_proj;
        }
    }
    let raw = VectorField::from_spectral(*grid, spec)?;
    let norm = sobolev_norm(&raw, params.s, false)?;
    if norm <= 1e-300 {
        return Err(Error::Degenerate("profile carries no modes in the requested band".into()));
    }
    Ok(raw.scaled(Complex64::new(params.amplitude / norm, 0.0)))
}

fn taylor_green(grid: &SpectralGrid, amplitude: f64) -> Result<VectorField> {
    let d = grid.dim();
    let kappa = grid.dk();
    let mut comps = vec![vec![0.0f64; grid.n_points()]; d];
    for flat in 0..grid.n_points() {
        let x = grid.point_at(flat);
        match d {
            2 => {
                comps[0][flat] = amplitude * (kappa * x[0]).sin() * (kappa * x[1]).cos();
                comps[1][flat] = -amplitude * (kappa * x[0]).cos() * (kappa * x[1]).sin();
            }
            _ => {
                let (cx, sx) = ((kappa * x[0]).cos(), (kappa * x[0]).sin());
                let (cy, sy) = ((kappa * x[1]).cos(), (kappa * x[1]).sin());
                let cz = (kappa * x[2]).cos();
                comps[0][flat] = amplitude * sx * cy * cz;
                comps[1][flat] = -amplitude * cx * sy * cz;
                // Third component identically zero.
            }
        }
    }
    VectorField::from_physical_real(*grid, comps)
}

fn mixed_mode(grid: &SpectralGrid, amplitude: f64) -> Result<VectorField> {
    let d = grid.dim();
    let kappa = grid.dk();
    let base = taylor_green(grid, amplitude)?;
    let mut comps: Vec<Vec<f64>> = base
        .to_physical()
        .physical()?
        .iter()
        .map(|c| c.iter().map(|z| z.re).collect())
        .collect();
    // Secondary vortex at twice the frequency, shifted quarter-box, 40%
    // amplitude: breaks the Taylor-Green self-cancellation.
    let k2 = 2.0 * kappa;
    let shift = 0.25 * grid.box_size();
    for flat in 0..grid.n_points() {
        let x = grid.point_at(flat);
        let (x0, x1) = (x[0] - shift, x[1]);
        comps[0][flat] += 0.4 * amplitude * (k2 * x0).sin() * (k2 * x1).cos();
        comps[1][flat] -= 0.4 * amplitude * (k2 * x0).cos() * (k2 * x1).sin();
        if d == 3 {
            comps[2][flat] += 0.3 * amplitude * (k2 * x[2]).sin() * (k2 * x0).cos();
            comps[0][flat] -= 0.3 * amplitude * (k2 * x[2]).cos() * (k2 * x0).sin();
        }
    }
    VectorField::from_physical_real(*grid, comps)
}
