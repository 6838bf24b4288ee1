//! Frequency-cube decomposition with a narrowing parameter.
//!
//! Frequency space is split into the core cube `O_1 = {|xi_i| <= 1}` and
//! dyadic shells `Q_N = O_{2N} \ O_N` for `N = 1, 2, 4, ..., N_max`, where
//! `O_N = {|xi_i| <= N}`. Each shell is tiled by lattice-aligned cubes of
//! side `N^{-a}`; larger `a` narrows the cubes at high frequency. Every
//! cube carries a smooth bump equal to 1 on the cube and supported in the
//! concentric double cube, and the bumps are normalized into a partition
//! of unity on the covered region `{|xi_i| <= 2 N_max}`.
//!
//! Families are never materialized: shells are stored parametrically and
//! cube indices are converted to lattice coordinates with closed-form rank
//! arithmetic, so families with billions of cubes stay O(1) in memory.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::field::VectorField;
use crate::grid::{SpectralGrid, MAX_DIM};
use crate::Result;

/// Relative spectral mass allowed outside the covered region before
/// projection-based operations refuse to run.
pub const TRUNCATION_TOL: f64 = 1e-8;

/// Smallest number of frequency-lattice points a cube must span per axis.
pub const MIN_POINTS_PER_CUBE_AXIS: f64 = 4.0;

/// Smallest admissible narrowing exponent for regularity `s`, band
/// parameter `epsilon` and dimension `d`:
/// `max(0, ceil(2 (d epsilon - 1 - s) / (d (1 - 2 epsilon))))`.
pub fn min_admissible_a(s: f64, epsilon: f64, d: usize) -> Result<u32> {
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(Error::Domain(format!("epsilon must lie in (0, 1/2), got {epsilon}")));
    }
    if d != 2 && d != 3 {
        return Err(Error::Domain(format!("dimension must be 2 or 3, got {d}")));
    }
    if !s.is_finite() {
        return Err(Error::Domain(format!("regularity must be finite, got {s}")));
    }
    let d = d as f64;
    let raw = 2.0 * (d * epsilon - 1.0 - s) / (d * (1.0 - 2.0 * epsilon));
    Ok(raw.ceil().max(0.0) as u32)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecompParams {
    pub d: usize,
    pub s: f64,
    pub epsilon: f64,
    pub a: u32,
    pub n_max: u32,
}

impl DecompParams {
    pub fn new(d: usize, s: f64, epsilon: f64, a: u32, n_max: u32) -> Result<Self> {
        if d != 2 && d != 3 {
            return Err(Error::Domain(format!("dimension must be 2 or 3, got {d}")));
        }
        if !(epsilon > 0.0 && epsilon < 0.5) {
            return Err(Error::Domain(format!("epsilon must lie in (0, 1/2), got {epsilon}")));
        }
        if !s.is_finite() {
            return Err(Error::Domain(format!("regularity must be finite, got {s}")));
        }
        if n_max == 0 || !n_max.is_power_of_two() {
            return Err(Error::Domain(format!(
                "largest shell must be a power of two >= 1, got {n_max}"
            )));
        }
        Ok(DecompParams { d, s, epsilon, a, n_max })
    }

    /// Whether `a` meets the admissibility threshold for `(s, epsilon, d)`.
    pub fn is_admissible(&self) -> bool {
        min_admissible_a(self.s, self.epsilon, self.d).map(|m| self.a >= m).unwrap_or(false)
    }
}

/// One cube of the family. `shell` is 0 for the core cube `O_1`, otherwise
/// the dyadic shell value `N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cube {
    pub index: u64,
    pub shell: u32,
    pub center: Vec<f64>,
    pub side: f64,
}

#[derive(Debug, Clone, Copy)]
struct ShellInfo {
    n: u32,
    /// Cube side `n^{-a}` (exact power of two).
    h: f64,
    /// Cube coordinates run over `[-outer, outer)`, excluding the inner
    /// box `[-inner, inner)^d`; units of `h`.
    outer: i64,
    inner: i64,
    count: u64,
    offset: u64,
}

impl ShellInfo {
    fn axis_span(&self) -> u64 {
        (2 * self.outer) as u64
    }
    fn inner_span(&self) -> u64 {
        (2 * self.inner) as u64
    }
}

/// A bump hit at a frequency point: cube index, the index of the cube
/// reflected through the origin, and the unnormalized bump value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BumpHit {
    pub index: u64,
    pub reflected: u64,
    pub weight: f64,
}

#[derive(Debug, Clone)]
pub struct CubeFamily {
    params: DecompParams,
    shells: Vec<ShellInfo>,
    total: u64,
}

/// Smooth transition profile: 0 at t = 0, 1 at t = 1, flat at both ends.
fn transition(t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    if t >= 1.0 {
        return 1.0;
    }
    let a = (-1.0 / t).exp();
    let b = (-1.0 / (1.0 - t)).exp();
    a / (a + b)
}

/// One-axis bump for a cube of half-side `r`: 1 for `u <= r`, 0 for
/// `u >= 2r`, smooth transition in between (`u` = distance to the center).
fn bump1d(u: f64, r: f64) -> f64 {
    if u <= r {
        1.0
    } else if u >= 2.0 * r {
        0.0
    } else {
        transition((2.0 * r - u) / r)
    }
}

/// Radial low-pass profile: 1 for `t <= 1`, 0 for `t >= 2`.
pub fn lowpass_profile(t: f64) -> f64 {
    bump1d(t, 1.0)
}

impl CubeFamily {
    pub fn new(params: DecompParams) -> Result<Self> {
        DecompParams::new(params.d, params.s, params.epsilon, params.a, params.n_max)?;
        let mut shells = Vec::new();
        let mut offset = 1u64; // index 0 is the core cube
        let mut n = 1u32;
        loop {
            let scale = (n as u64).pow(params.a + 1) as i64; // n * n^a
            let h = (n as f64).powi(-(params.a as i32));
            let outer = 2 * scale;
            let inner = scale;
            let span = (2 * outer) as u64;
            let inner_span = (2 * inner) as u64;
            let count = span.pow(params.d as u32) - inner_span.pow(params.d as u32);
            shells.push(ShellInfo { n, h, outer, inner, count, offset });
            offset += count;
            if n == params.n_max {
                break;
            }
            n *= 2;
        }
        Ok(CubeFamily { params, shells, total: offset })
    }

    pub fn params(&self) -> &DecompParams {
        &self.params
    }

    pub fn total_cubes(&self) -> u64 {
        self.total
    }

    /// Outer edge of the covered region, `2 N_max`.
    pub fn coverage_extent(&self) -> f64 {
        2.0 * self.params.n_max as f64
    }

    pub fn shell_values(&self) -> Vec<u32> {
        self.shells.iter().map(|s| s.n).collect()
    }

    /// Geometric cube count of shell `Q_n`.
    pub fn shell_cube_count(&self, n: u32) -> Result<u64> {
        self.shell_info(n).map(|s| s.count)
    }

    /// Cube count under the convention where `O_N` has side `N` instead of
    /// `2N`: `(2^d - 1) N^{d(a+1)}`; differs from the geometric count by a
    /// constant factor `2^d`.
    pub fn shell_cube_count_half_size_convention(&self, n: u32) -> Result<u64> {
        self.shell_info(n)?;
        let d = self.params.d as u32;
        Ok(((1u64 << d) - 1) * (n as u64).pow(d * (self.params.a + 1)))
    }

    fn shell_info(&self, n: u32) -> Result<&ShellInfo> {
        self.shells
            .iter()
            .find(|s| s.n == n)
            .ok_or_else(|| Error::Domain(format!("no shell {n} in this family")))
    }

    /// Rank of a shell cube's coordinate tuple within its shell
    /// (lexicographic order over the outer box, skipping the inner box).
    fn rank_in_shell(&self, sh: &ShellInfo, m: &[i64]) -> u64 {
        let d = self.params.d;
        let span = sh.axis_span();
        let inner_span = sh.inner_span();
        let mut below_outer = 0u64;
        for ax in 0..d {
            below_outer += ((m[ax] + sh.outer) as u64) * span.pow((d - 1 - ax) as u32);
        }
        let mut below_inner = 0u64;
        let mut prefix_inside = true;
        for ax in 0..d {
            if !prefix_inside {
                break;
            }
            let cnt = (m[ax] + sh.inner).clamp(0, inner_span as i64) as u64;
            below_inner += cnt * inner_span.pow((d - 1 - ax) as u32);
            prefix_inside = m[ax] >= -sh.inner && m[ax] < sh.inner;
        }
        below_outer - below_inner
    }

    /// Inverse of `rank_in_shell`, by per-axis scan.
    fn unrank_in_shell(&self, sh: &ShellInfo, mut r: u64) -> [i64; MAX_DIM] {
        let d = self.params.d;
        let span = sh.axis_span();
        let inner_span = sh.inner_span();
        let mut m = [0i64; MAX_DIM];
        let mut prefix_inside = true;
        for ax in 0..d {
            let tail_outer = span.pow((d - 1 - ax) as u32);
            let tail_inner = inner_span.pow((d - 1 - ax) as u32);
            let mut chosen = None;
            for v in -sh.outer..sh.outer {
                let inside = prefix_inside && v >= -sh.inner && v < sh.inner;
                let here = if inside { tail_outer - tail_inner } else { tail_outer };
                if r < here {
                    chosen = Some((v, inside));
                    break;
                }
                r -= here;
            }
            let (v, inside) = chosen.expect("rank within shell count");
            m[ax] = v;
            prefix_inside = inside;
        }
        m
    }

    /// Materializes cube `j`.
    pub fn cube(&self, j: u64) -> Result<Cube> {
        if j >= self.total {
            return Err(Error::Domain(format!("cube index {j} out of range (total {})", self.total)));
        }
        if j == 0 {
            return Ok(Cube {
                index: 0,
                shell: 0,
                center: vec![0.0; self.params.d],
                side: 2.0,
            });
        }
        let sh = self
            .shells
            .iter()
            .rev()
            .find(|s| s.offset <= j)
            .expect("index below total belongs to a shell");
        let m = self.unrank_in_shell(sh, j - sh.offset);
        let center = (0..self.params.d).map(|ax| sh.h * (m[ax] as f64 + 0.5)).collect();
        Ok(Cube { index: j, shell: sh.n, center, side: sh.h })
    }

    /// Index of the cube reflected through the origin.
    pub fn reflected_index(&self, j: u64) -> Result<u64> {
        if j >= self.total {
            return Err(Error::Domain(format!("cube index {j} out of range")));
        }
        if j == 0 {
            return Ok(0);
        }
        let sh = self
            .shells
            .iter()
            .rev()
            .find(|s| s.offset <= j)
            .expect("index below total belongs to a shell");
        let m = self.unrank_in_shell(sh, j - sh.offset);
        let mut refl = [0i64; MAX_DIM];
        for ax in 0..self.params.d {
            refl[ax] = -m[ax] - 1;
        }
        Ok(sh.offset + self.rank_in_shell(sh, &refl[..self.params.d]))
    }

    /// Iterates all cubes of shell `n` in index order (small shells only).
    pub fn shell_cubes(&self, n: u32) -> Result<Vec<Cube>> {
        let sh = *self.shell_info(n)?;
        let mut out = Vec::with_capacity(sh.count as usize);
        for r in 0..sh.count {
            let m = self.unrank_in_shell(&sh, r);
            let center = (0..self.params.d).map(|ax| sh.h * (m[ax] as f64 + 0.5)).collect();
            out.push(Cube { index: sh.offset + r, shell: sh.n, center, side: sh.h });
        }
        Ok(out)
    }

    /// All bumps with nonzero value at frequency `xi`, with reflected
    /// partner indices. Empty when `xi` lies beyond every support.
    pub fn bumps_at(&self, xi: &[f64]) -> Vec<BumpHit> {
        let d = self.params.d;
        debug_assert_eq!(xi.len(), d);
        let mut hits = Vec::with_capacity(8);

        // Core cube: center 0, half-side 1, support |xi|_inf < 2.
        let mut core = 1.0;
        for &x in xi {
            core *= bump1d(x.abs(), 1.0);
            if core == 0.0 {
                break;
            }
        }
        if core > 0.0 {
            hits.push(BumpHit { index: 0, reflected: 0, weight: core });
        }

        let mut axis_m = [[0i64; 3]; MAX_DIM];
        let mut axis_v = [[0.0f64; 3]; MAX_DIM];
        let mut axis_len = [0usize; MAX_DIM];
        for sh in &self.shells {
            let r = sh.h * 0.5;
            // Per-axis candidates: centers within distance h of xi.
            let mut any_empty = false;
            for ax in 0..d {
                let base = (xi[ax] / sh.h - 0.5).floor() as i64;
                let mut len = 0;
                for cand in base - 1..=base + 1 {
                    if cand < -sh.outer || cand >= sh.outer {
                        continue;
                    }
                    let c = sh.h * (cand as f64 + 0.5);
                    let v = bump1d((xi[ax] - c).abs(), r);
                    if v > 0.0 {
                        axis_m[ax][len] = cand;
                        axis_v[ax][len] = v;
                        len += 1;
                    }
                }
                axis_len[ax] = len;
                if len == 0 {
                    any_empty = true;
                    break;
                }
            }
            if any_empty {
                continue;
            }
            // Cartesian product over per-axis candidates.
            let mut pick = [0usize; MAX_DIM];
            'tuples: loop {
                let mut m = [0i64; MAX_DIM];
                let mut w = 1.0;
                let mut inside_inner = true;
                for ax in 0..d {
                    m[ax] = axis_m[ax][pick[ax]];
                    w *= axis_v[ax][pick[ax]];
                    inside_inner &= m[ax] >= -sh.inner && m[ax] < sh.inner;
                }
                if !inside_inner && w > 0.0 {
                    let index = sh.offset + self.rank_in_shell(sh, &m[..d]);
                    let mut refl = [0i64; MAX_DIM];
                    for ax in 0..d {
                        refl[ax] = -m[ax] - 1;
                    }
                    let reflected = sh.offset + self.rank_in_shell(sh, &refl[..d]);
                    hits.push(BumpHit { index, reflected, weight: w });
                }
                // Advance the mixed-radix counter.
                for ax in 0..d {
                    pick[ax] += 1;
                    if pick[ax] < axis_len[ax] {
                        continue 'tuples;
                    }
                    pick[ax] = 0;
                }
                break;
            }
        }
        hits
    }

    /// Normalized partition weights at `xi`; empty beyond all supports.
    pub fn partition_weights(&self, xi: &[f64]) -> Vec<(u64, f64)> {
        let hits = self.bumps_at(xi);
        let sum: f64 = hits.iter().map(|h| h.weight).sum();
        if sum == 0.0 {
            return Vec::new();
        }
        hits.into_iter().map(|h| (h.index, h.weight / sum)).collect()
    }

    /// Partition weight of cube `j` at frequency `xi`.
    pub fn partition_weight(&self, xi: &[f64], j: u64) -> Result<f64> {
        if j >= self.total {
            return Err(Error::Domain(format!("cube index {j} out of range")));
        }
        Ok(self
            .partition_weights(xi)
            .into_iter()
            .find(|(idx, _)| *idx == j)
            .map(|(_, w)| w)
            .unwrap_or(0.0))
    }

    /// Checks that the grid resolves every cube and the coverage fits the
    /// resolved band.
    pub fn validate_grid(&self, grid: &SpectralGrid) -> Result<()> {
        if grid.dim() != self.params.d {
            return Err(Error::Shape(format!(
                "family dimension {} vs grid dimension {}",
                self.params.d,
                grid.dim()
            )));
        }
        let dk = grid.dk();
        for sh in &self.shells {
            if sh.h < MIN_POINTS_PER_CUBE_AXIS * dk {
                return Err(Error::Resolution(format!(
                    "shell {} cubes of side {} span fewer than {} lattice points (spacing {dk})",
                    sh.n, sh.h, MIN_POINTS_PER_CUBE_AXIS
                )));
            }
        }
        if self.coverage_extent() > grid.cutoff() {
            return Err(Error::Coverage(format!(
                "coverage extent {} exceeds grid cutoff {}",
                self.coverage_extent(),
                grid.cutoff()
            )));
        }
        Ok(())
    }

    /// Relative spectral mass at lattice points where no bump reaches.
    pub fn coverage_residual(&self, f: &VectorField) -> Result<f64> {
        let grid = *f.grid();
        let spec = f.to_spectral();
        let comps = spec.spectral()?.to_vec();
        let mut outside = 0.0;
        let mut total = 0.0;
        for flat in 0..grid.n_points() {
            let k = grid.freq_at(flat);
            let mass: f64 = comps.iter().map(|c| c[flat].norm_sqr()).sum();
            total += mass;
            if mass > 0.0 && self.bumps_at(&k[..grid.dim()]).is_empty() {
                outside += mass;
            }
        }
        if total == 0.0 {
            Ok(0.0)
        } else {
            Ok((outside / total).sqrt())
        }
    }

    /// Spectral projection onto cube `j`: multiplies coefficients by the
    /// partition weight of cube `j`.
    pub fn box_project(&self, f: &VectorField, j: u64) -> Result<VectorField> {
        let grid = *f.grid();
        self.validate_grid(&grid)?;
        let cube = self.cube(j)?;
        let src = f.to_spectral();
        let spec = src.spectral()?;
        let mut out = vec![vec![Complex64::default(); grid.n_points()]; spec.len()];
        // Support is the double cube: |xi - c| < side per axis.
        let dk = grid.dk();
        let half = grid.points_per_axis() as i64 / 2;
        let mut lo = [0i64; MAX_DIM];
        let mut hi = [0i64; MAX_DIM];
        for ax in 0..grid.dim() {
            lo[ax] = (((cube.center[ax] - cube.side) / dk).ceil() as i64).max(-half);
            hi[ax] = (((cube.center[ax] + cube.side) / dk).floor() as i64).min(half - 1);
        }
        let mut idx = lo;
        if (0..grid.dim()).any(|ax| lo[ax] > hi[ax]) {
            return VectorField::from_spectral(grid, out);
        }
        loop {
            let mut bins = [0usize; MAX_DIM];
            let mut xi = [0.0f64; MAX_DIM];
            for ax in 0..grid.dim() {
                bins[ax] = grid.bin_of(idx[ax]).expect("candidate bin in range");
                xi[ax] = dk * idx[ax] as f64;
            }
            let w = self
                .partition_weights(&xi[..grid.dim()])
                .into_iter()
                .find(|(i, _)| *i == j)
                .map(|(_, w)| w)
                .unwrap_or(0.0);
            if w > 0.0 {
                let flat = grid.encode(bins);
                for (c_out, c_in) in out.iter_mut().zip(spec) {
                    c_out[flat] = c_in[flat] * w;
                }
            }
            // Advance over the support box.
            let mut ax = grid.dim();
            loop {
                if ax == 0 {
                    return VectorField::from_spectral(grid, out);
                }
                ax -= 1;
                idx[ax] += 1;
                if idx[ax] <= hi[ax] {
                    break;
                }
                idx[ax] = lo[ax];
            }
        }
    }

    /// Applies the full partition at every lattice point of `f`, returning
    /// per-cube spectral mass `sum_k psi_j(k)^2 |f_hat(k)|^2` accumulated
    /// over all cubes, together with the total mass. This is the
    /// memory-lean path to the orthogonality ratio.
    pub fn projection_masses(&self, f: &VectorField) -> Result<(f64, f64, usize)> {
        let grid = *f.grid();
        self.validate_grid(&grid)?;
        let src = f.to_spectral();
        let spec = src.spectral()?;
        let mut proj_mass = 0.0;
        let mut total = 0.0;
        let mut max_overlap = 0usize;
        for flat in 0..grid.n_points() {
            let mass: f64 = spec.iter().map(|c| c[flat].norm_sqr()).sum();
            let k = grid.freq_at(flat);
            let weights = self.partition_weights(&k[..grid.dim()]);
            max_overlap = max_overlap.max(weights.len());
            if mass == 0.0 {
                continue;
            }
            total += mass;
            let sq: f64 = weights.iter().map(|(_, w)| w * w).sum();
            proj_mass += mass * sq;
        }
        Ok((proj_mass, total, max_overlap))
    }

    /// Largest number of overlapping bump supports over the grid's lattice
    /// points inside the covered region.
    pub fn max_overlap_on_grid(&self, grid: &SpectralGrid) -> Result<usize> {
        self.validate_grid(grid)?;
        let mut worst = 0usize;
        for flat in 0..grid.n_points() {
            let k = grid.freq_at(flat);
            let extent = self.coverage_extent();
            if (0..grid.dim()).any(|ax| k[ax].abs() > extent) {
                continue;
            }
            worst = worst.max(self.bumps_at(&k[..grid.dim()]).len());
        }
        Ok(worst)
    }

    /// Littlewood-Paley block at dyadic scale `n`: smooth annulus
    /// multiplier supported on `|xi| in [n/2, 2n]`.
    pub fn lp_project(f: &VectorField, n: f64) -> Result<VectorField> {
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::Domain(format!("block scale must be positive, got {n}")));
        }
        let grid = *f.grid();
        let src = f.to_spectral();
        let spec = src.spectral()?;
        let mut out = vec![vec![Complex64::default(); grid.n_points()]; spec.len()];
        for flat in 0..grid.n_points() {
            let kn = grid.k_sq_at(flat).sqrt();
            let w = lowpass_profile(kn / n) - lowpass_profile(2.0 * kn / n);
            if w != 0.0 {
                for (c_out, c_in) in out.iter_mut().zip(spec) {
                    c_out[flat] = c_in[flat] * w;
                }
            }
        }
        VectorField::from_spectral(grid, out)
    }

    /// Deterministic probe frequencies exercising cube interiors, faces,
    /// corners and every seam between adjacent shells.
    pub fn partition_probe_points(&self, per_shell: usize, seed: u64) -> Vec<Vec<f64>> {
        use crate::random::CounterRng;
        let d = self.params.d;
        let mut pts: Vec<Vec<f64>> = Vec::new();
        let extent = self.coverage_extent();

        // Structured probes: for each shell, centers / faces / corners of a
        // cube near the inner seam, plus points straddling both seams.
        for sh in &self.shells {
            let h = sh.h;
            let base_center: Vec<f64> = (0..d)
                .map(|ax| if ax == 0 { h * (sh.inner as f64 + 0.5) } else { h * 0.5 })
                .collect();
            pts.push(base_center.clone());
            let mut face = base_center.clone();
            face[0] += 0.5 * h; // shared face with the next cube
            pts.push(face.clone());
            face[0] += 0.25 * h; // inside the transition zone
            pts.push(face);
            let corner: Vec<f64> = base_center.iter().map(|c| c + 0.5 * h).collect();
            pts.push(corner);
            // Inner seam (shell meets finer region) and outer seam.
            let inner_seam = sh.inner as f64 * h;
            let outer_seam = 2.0 * sh.n as f64;
            for seam in [inner_seam, outer_seam] {
                for off in [-0.6 * h, -0.25 * h, 0.0, 0.25 * h, 0.6 * h] {
                    let mut p = vec![0.31 * h; d];
                    p[0] = seam + off;
                    pts.push(p);
                }
            }
        }

        // Stochastic probes: uniform within each shell region, padded by one
        // cube side so cross-seam bleed is exercised.
        let mut rng = CounterRng::new(seed, 0);
        for (si, sh) in self.shells.iter().enumerate() {
            let lo = sh.inner as f64 * sh.h - sh.h;
            let hi = (2.0 * sh.n as f64 + sh.h).min(extent);
            for _ in 0..per_shell {
                let mut p = vec![0.0; d];
                // Pick the axis that pins the point inside the shell range.
                let ax_pick = (rng.next_u64() % d as u64) as usize;
                for (ax, val) in p.iter_mut().enumerate() {
                    if ax == ax_pick {
                        let sign = if rng.next_u64() % 2 == 0 { 1.0 } else { -1.0 };
                        *val = sign * (lo + (hi - lo) * rng.next_f64());
                    } else {
                        *val = -hi + 2.0 * hi * rng.next_f64();
                    }
                }
                pts.push(p);
            }
            let _ = si;
        }
        // Core region probes.
        let mut rng = CounterRng::new(seed, 1);
        for _ in 0..per_shell {
            let p = (0..d).map(|_| -1.5 + 3.0 * rng.next_f64()).collect();
            pts.push(p);
        }
        pts.retain(|p| p.iter().all(|x| x.abs() <= extent));
        pts
    }

    /// Largest deviation of the normalized bump sum from 1 over the probe
    /// set, and the largest overlap count seen.
    pub fn partition_defect(&self, probes: &[Vec<f64>]) -> (f64, usize) {
        let mut worst = 0.0f64;
        let mut overlap = 0usize;
        for p in probes {
            let w = self.partition_weights(p);
            if w.is_empty() {
                continue;
            }
            overlap = overlap.max(w.len());
            let sum: f64 = w.iter().map(|(_, v)| v).sum();
            worst = worst.max((sum - 1.0).abs());
        }
        (worst, overlap)
    }
}

/// Largest dyadic shell the grid can host: cubes must span at least four
/// lattice points per axis and the covered band `2N` times `headroom` must
/// fit under the grid cutoff. `headroom = 2` leaves the upper half of the
/// spectrum free, which keeps high-order quadrature on physical samples
/// accurate.
pub fn max_shell_for_grid(grid: &SpectralGrid, a: u32, headroom: f64) -> Result<u32> {
    let dk = grid.dk();
    let mut best = None;
    let mut n = 1u32;
    loop {
        let h = (n as f64).powi(-(a as i32));
        let resolved = h >= MIN_POINTS_PER_CUBE_AXIS * dk;
        let fits = 2.0 * n as f64 * headroom <= grid.cutoff();
        if resolved && fits {
            best = Some(n);
        }
        if !fits {
            break;
        }
        match n.checked_mul(2) {
            Some(next) => n = next,
            None => break,
        }
    }
    best.ok_or_else(|| {
        Error::Resolution(format!(
            "grid (L = {}, M = {}) cannot host any shell at narrowing {a}",
            grid.box_size(),
            grid.points_per_axis()
        ))
    })
}
