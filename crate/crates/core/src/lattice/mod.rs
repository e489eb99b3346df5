//! Periodic torus grids, discrete Fourier transforms, Fourier multipliers and grid norms.
//!
//! A grid of side `L` with `N` points per axis carries the sites `x_j = (j - N/2)·L/N`
//! and the frequency lattice `ξ_k = k/L`, `k ∈ {-N/2, …, N/2-1}^d`. Plane waves are
//! `e^{2πi x·ξ}`. Vectors on the grid are stored site-major with the spinor index
//! innermost: entry `site·n + a`.

mod potential;

pub use potential::{PotentialField, PotentialFile, PotentialSpec, PotentialValues};

use std::fmt;
use std::sync::Arc;

use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, C64};

/// Default cap on `N^d·n`.
pub const DEFAULT_SITE_CAP: usize = 8192;

/// Per-dimension default caps on `N`.
pub fn default_axis_cap(d: usize) -> usize {
    match d {
        1 => 4096,
        2 => 64,
        _ => 16,
    }
}

#[derive(Clone)]
struct Plans {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

/// Periodic discretization of the box `[-L/2, L/2)^d`.
#[derive(Clone)]
pub struct TorusGrid {
    d: usize,
    n: usize,
    side: f64,
    plans: Plans,
}

/// Plain description of a grid, used in reports and configuration files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub d: usize,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "L")]
    pub side: f64,
}

impl TorusGrid {
    /// Grid with the per-dimension default axis cap.
    pub fn new(d: usize, n: usize, side: f64) -> Result<Self> {
        Self::with_cap(d, n, side, default_axis_cap(d.clamp(1, 3)))
    }

    /// Grid with an explicit cap on `N`.
    pub fn with_cap(d: usize, n: usize, side: f64, axis_cap: usize) -> Result<Self> {
        if !(1..=3).contains(&d) {
            return Err(Error::UnsupportedDimension(d));
        }
        if n < 8 || n % 2 != 0 {
            return Err(Error::InvalidGrid(format!("N = {n} must be even and at least 8")));
        }
        if n > axis_cap {
            return Err(Error::SizeCap { size: n, cap: axis_cap });
        }
        if !(side.is_finite() && side > 0.0) {
            return Err(Error::InvalidGrid(format!("side L = {side} must be positive")));
        }
        let mut planner = FftPlanner::new();
        let plans = Plans {
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        };
        Ok(TorusGrid { d, n, side, plans })
    }

    pub fn from_spec(spec: GridSpec) -> Result<Self> {
        Self::new(spec.d, spec.n, spec.side)
    }

    pub fn spec(&self) -> GridSpec {
        GridSpec {
            d: self.d,
            n: self.n,
            side: self.side,
        }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn points_per_axis(&self) -> usize {
        self.n
    }

    pub fn side(&self) -> f64 {
        self.side
    }

    /// Number of sites `N^d`.
    pub fn sites(&self) -> usize {
        self.n.pow(self.d as u32)
    }

    /// Mesh width `h = L/N`.
    pub fn spacing(&self) -> f64 {
        self.side / self.n as f64
    }

    /// Cell volume `h^d`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.d as i32)
    }

    /// Same `N`, side rescaled by `factor`.
    pub fn rescaled(&self, factor: f64) -> Result<Self> {
        Self::with_cap(self.d, self.n, self.side * factor, self.n.max(default_axis_cap(self.d)))
    }

    /// Same side, `2N` points per axis (the cap is lifted to allow it).
    pub fn refined(&self) -> Result<Self> {
        Self::with_cap(self.d, 2 * self.n, self.side, 2 * self.n.max(default_axis_cap(self.d)))
    }

    /// Fails if `N^d·n` exceeds `cap`.
    pub fn check_size(&self, spinor: usize, cap: usize) -> Result<usize> {
        let size = self.sites() * spinor;
        if size > cap {
            return Err(Error::SizeCap { size, cap });
        }
        Ok(size)
    }

    /// Axis coordinates of a linear site index.
    pub fn site_coords(&self, site: usize) -> Vec<usize> {
        let mut c = vec![0; self.d];
        let mut rem = site;
        for a in (0..self.d).rev() {
            c[a] = rem % self.n;
            rem /= self.n;
        }
        c
    }

    pub fn site_index(&self, coords: &[usize]) -> usize {
        coords.iter().fold(0, |acc, &c| acc * self.n + c)
    }

    /// Physical position of a site.
    pub fn position(&self, site: usize) -> Vec<f64> {
        let h = self.spacing();
        self.site_coords(site)
            .into_iter()
            .map(|j| (j as f64 - (self.n / 2) as f64) * h)
            .collect()
    }

    /// Signed lattice index `k` of a mode in FFT order.
    pub fn mode_index(&self, mode: usize) -> Vec<i64> {
        self.site_coords(mode)
            .into_iter()
            .map(|j| {
                let j = j as i64;
                if j < (self.n / 2) as i64 {
                    j
                } else {
                    j - self.n as i64
                }
            })
            .collect()
    }

    /// Frequency `ξ_k = k/L` of a mode in FFT order.
    pub fn frequency(&self, mode: usize) -> Vec<f64> {
        self.mode_index(mode)
            .into_iter()
            .map(|k| k as f64 / self.side)
            .collect()
    }

    /// Linear index of the periodic difference `coords(i) - coords(j)`.
    pub fn difference_index(&self, i: usize, j: usize) -> usize {
        let (ci, cj) = (self.site_coords(i), self.site_coords(j));
        let diff: Vec<usize> = ci
            .iter()
            .zip(&cj)
            .map(|(&a, &b)| (a + self.n - b) % self.n)
            .collect();
        self.site_index(&diff)
    }

    /// Physical separation vector of a difference index, wrapped to `[-L/2, L/2)`.
    pub fn separation(&self, diff: usize) -> Vec<f64> {
        let h = self.spacing();
        self.mode_index(diff).into_iter().map(|k| k as f64 * h).collect()
    }

    /// Unnormalized in-place d-dimensional DFT of one scalar field.
    pub fn fft_in_place(&self, data: &mut [C64], inverse: bool) {
        assert_eq!(data.len(), self.sites());
        let plan = if inverse { &self.plans.inverse } else { &self.plans.forward };
        let n = self.n;
        let mut line = vec![C64::new(0.0, 0.0); n];
        let mut scratch = vec![C64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
        for axis in 0..self.d {
            let stride = n.pow((self.d - 1 - axis) as u32);
            let outer = self.sites() / (n * stride);
            for o in 0..outer {
                for inner in 0..stride {
                    let base = o * n * stride + inner;
                    for (t, slot) in line.iter_mut().enumerate() {
                        *slot = data[base + t * stride];
                    }
                    plan.process_with_scratch(&mut line, &mut scratch);
                    for (t, v) in line.iter().enumerate() {
                        data[base + t * stride] = *v;
                    }
                }
            }
        }
    }

    /// Forward transform of every spinor component of a site-major vector.
    pub fn forward(&self, values: &[C64], spinor: usize) -> Vec<C64> {
        self.transform(values, spinor, false, 1.0)
    }

    /// Inverse of [`TorusGrid::forward`].
    pub fn inverse(&self, values: &[C64], spinor: usize) -> Vec<C64> {
        self.transform(values, spinor, true, 1.0 / self.sites() as f64)
    }

    fn transform(&self, values: &[C64], spinor: usize, inverse: bool, scale: f64) -> Vec<C64> {
        let sites = self.sites();
        assert_eq!(values.len(), sites * spinor);
        let mut out = vec![C64::new(0.0, 0.0); values.len()];
        let mut buf = vec![C64::new(0.0, 0.0); sites];
        for a in 0..spinor {
            for (i, slot) in buf.iter_mut().enumerate() {
                *slot = values[i * spinor + a];
            }
            self.fft_in_place(&mut buf, inverse);
            for (i, v) in buf.iter().enumerate() {
                out[i * spinor + a] = v * scale;
            }
        }
        out
    }
}

impl fmt::Debug for TorusGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TorusGrid")
            .field("d", &self.d)
            .field("N", &self.n)
            .field("L", &self.side)
            .finish()
    }
}

impl PartialEq for TorusGrid {
    fn eq(&self, other: &Self) -> bool {
        self.d == other.d && self.n == other.n && self.side == other.side
    }
}

/// Complex `n`-vector per site.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    pub grid: TorusGrid,
    pub spinor: usize,
    pub values: Vec<C64>,
}

impl GridFunction {
    pub fn new(grid: &TorusGrid, spinor: usize, values: Vec<C64>) -> Result<Self> {
        if values.len() != grid.sites() * spinor {
            return Err(Error::GridMismatch(format!(
                "{} values for {} sites with spinor size {spinor}",
                values.len(),
                grid.sites()
            )));
        }
        Ok(GridFunction {
            grid: grid.clone(),
            spinor,
            values,
        })
    }

    pub fn zeros(grid: &TorusGrid, spinor: usize) -> Self {
        GridFunction {
            grid: grid.clone(),
            spinor,
            values: vec![C64::new(0.0, 0.0); grid.sites() * spinor],
        }
    }

    /// Samples `f(x)` (one value per spinor component) at every site.
    pub fn from_fn(grid: &TorusGrid, spinor: usize, f: impl Fn(&[f64]) -> Vec<C64>) -> Self {
        let mut values = Vec::with_capacity(grid.sites() * spinor);
        for i in 0..grid.sites() {
            let v = f(&grid.position(i));
            assert_eq!(v.len(), spinor);
            values.extend(v);
        }
        GridFunction {
            grid: grid.clone(),
            spinor,
            values,
        }
    }

    /// `e^{2πi x·ξ_k} u` for the lattice mode with signed index `k`.
    pub fn plane_wave(grid: &TorusGrid, k: &[i64], u: &[C64]) -> Self {
        let xi: Vec<f64> = k.iter().map(|&k| k as f64 / grid.side()).collect();
        Self::from_fn(grid, u.len(), |x| {
            let phase = 2.0 * std::f64::consts::PI * x.iter().zip(&xi).map(|(a, b)| a * b).sum::<f64>();
            let e = C64::from_polar(1.0, phase);
            u.iter().map(|c| c * e).collect()
        })
    }

    /// Pointwise Euclidean norm of the spinor at each site.
    pub fn pointwise_abs(&self) -> Vec<f64> {
        self.values
            .chunks(self.spinor)
            .map(|c| c.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt())
            .collect()
    }

    pub fn lp_norm(&self, p: f64) -> Result<f64> {
        lp_norm_of(&self.pointwise_abs(), self.grid.cell_volume(), p)
    }

    /// `⟨f, g⟩ = h^d Σ conj(f)·g`.
    pub fn inner(&self, other: &GridFunction) -> C64 {
        let s: C64 = self.values.iter().zip(&other.values).map(|(a, b)| a.conj() * b).sum();
        s * self.grid.cell_volume()
    }

    pub fn axpy(&self, alpha: C64, other: &GridFunction) -> GridFunction {
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + alpha * b).collect();
        GridFunction {
            grid: self.grid.clone(),
            spinor: self.spinor,
            values,
        }
    }

    pub fn max_abs_diff(&self, other: &GridFunction) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

/// Riemann-sum `L^p` norm of pointwise magnitudes; `p = ∞` is the maximum.
pub fn lp_norm_of(abs: &[f64], cell: f64, p: f64) -> Result<f64> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::InvalidExponent(format!("p = {p} must satisfy p >= 1")));
    }
    if p.is_infinite() {
        return Ok(abs.iter().copied().fold(0.0, f64::max));
    }
    let m = abs.iter().copied().fold(0.0, f64::max);
    if m == 0.0 {
        return Ok(0.0);
    }
    // scale by the maximum to avoid overflow for large p
    let s: f64 = abs.iter().map(|a| (a / m).powf(p)).sum();
    Ok(m * (cell * s).powf(1.0 / p))
}

/// A Fourier multiplier tabulated on the frequency lattice (FFT order).
#[derive(Debug, Clone)]
pub enum Multiplier {
    Scalar(Vec<C64>),
    Matrix { spinor: usize, blocks: Vec<CMatrix> },
}

impl Multiplier {
    /// Tabulates `m(ξ_k)`; a `1×1` result yields a scalar multiplier.
    pub fn from_fn(grid: &TorusGrid, spinor: usize, m: impl Fn(&[f64]) -> CMatrix) -> Self {
        let modes = grid.sites();
        if spinor == 1 {
            Multiplier::Scalar((0..modes).map(|k| m(&grid.frequency(k))[(0, 0)]).collect())
        } else {
            Multiplier::Matrix {
                spinor,
                blocks: (0..modes).map(|k| m(&grid.frequency(k))).collect(),
            }
        }
    }

    pub fn scalar_fn(grid: &TorusGrid, m: impl Fn(&[f64]) -> C64) -> Self {
        Multiplier::Scalar((0..grid.sites()).map(|k| m(&grid.frequency(k))).collect())
    }

    pub fn spinor(&self) -> usize {
        match self {
            Multiplier::Scalar(_) => 1,
            Multiplier::Matrix { spinor, .. } => *spinor,
        }
    }

    pub fn modes(&self) -> usize {
        match self {
            Multiplier::Scalar(v) => v.len(),
            Multiplier::Matrix { blocks, .. } => blocks.len(),
        }
    }

    /// Entry `(a, b)` of the multiplier at a mode.
    pub fn entry(&self, mode: usize, a: usize, b: usize) -> C64 {
        match self {
            Multiplier::Scalar(v) => {
                if a == b {
                    v[mode]
                } else {
                    C64::new(0.0, 0.0)
                }
            }
            Multiplier::Matrix { blocks, .. } => blocks[mode][(a, b)],
        }
    }

    /// Pointwise product `self·other` (matrix product per mode).
    pub fn compose(&self, other: &Multiplier) -> Multiplier {
        match (self, other) {
            (Multiplier::Scalar(a), Multiplier::Scalar(b)) => {
                Multiplier::Scalar(a.iter().zip(b).map(|(x, y)| x * y).collect())
            }
            _ => {
                let n = self.spinor().max(other.spinor());
                let blocks = (0..self.modes())
                    .map(|k| self.block(k, n) * other.block(k, n))
                    .collect();
                Multiplier::Matrix { spinor: n, blocks }
            }
        }
    }

    /// Entrywise complex conjugate transpose per mode (the adjoint multiplier).
    pub fn adjoint(&self) -> Multiplier {
        match self {
            Multiplier::Scalar(v) => Multiplier::Scalar(v.iter().map(|x| x.conj()).collect()),
            Multiplier::Matrix { spinor, blocks } => Multiplier::Matrix {
                spinor: *spinor,
                blocks: blocks.iter().map(|b| b.adjoint()).collect(),
            },
        }
    }

    fn block(&self, mode: usize, n: usize) -> CMatrix {
        match self {
            Multiplier::Scalar(v) => CMatrix::identity(n, n) * v[mode],
            Multiplier::Matrix { blocks, .. } => blocks[mode].clone(),
        }
    }

    /// Largest operator norm over the lattice.
    pub fn sup_norm(&self) -> f64 {
        match self {
            Multiplier::Scalar(v) => v.iter().map(|x| x.norm()).fold(0.0, f64::max),
            Multiplier::Matrix { blocks, .. } => blocks
                .iter()
                .map(|b| crate::linalg::singular_values(b)[0])
                .fold(0.0, f64::max),
        }
    }

    /// Applies the multiplier to a site-major vector.
    pub fn apply_raw(&self, grid: &TorusGrid, values: &[C64]) -> Vec<C64> {
        let n = self.spinor();
        let fhat = grid.forward(values, n);
        let ghat: Vec<C64> = match self {
            Multiplier::Scalar(m) => fhat.iter().zip(m).map(|(f, m)| f * m).collect(),
            Multiplier::Matrix { blocks, .. } => {
                let mut out = vec![C64::new(0.0, 0.0); fhat.len()];
                for (k, b) in blocks.iter().enumerate() {
                    for a in 0..n {
                        let mut acc = C64::new(0.0, 0.0);
                        for c in 0..n {
                            acc += b[(a, c)] * fhat[k * n + c];
                        }
                        out[k * n + a] = acc;
                    }
                }
                out
            }
        };
        grid.inverse(&ghat, n)
    }

    /// Discrete convolution kernel `K_ab(r) = N^{-d} Σ_k m_ab(ξ_k) e^{2πi k·r/N}`, indexed
    /// by difference index; one vector per `(a, b)` pair in row-major order.
    pub fn discrete_kernel(&self, grid: &TorusGrid) -> Vec<Vec<C64>> {
        let n = self.spinor();
        let scale = 1.0 / grid.sites() as f64;
        let mut out = Vec::with_capacity(n * n);
        for a in 0..n {
            for b in 0..n {
                let mut buf: Vec<C64> = (0..self.modes()).map(|k| self.entry(k, a, b)).collect();
                grid.fft_in_place(&mut buf, true);
                buf.iter_mut().for_each(|v| *v *= scale);
                out.push(buf);
            }
        }
        out
    }

    /// Dense `N^d n × N^d n` matrix of the multiplier acting on grid vectors.
    pub fn dense_matrix(&self, grid: &TorusGrid) -> CMatrix {
        let n = self.spinor();
        let kernel = self.discrete_kernel(grid);
        let sites = grid.sites();
        let diff = difference_table(grid);
        CMatrix::from_fn(sites * n, sites * n, |r, c| {
            let (i, a) = (r / n, r % n);
            let (j, b) = (c / n, c % n);
            kernel[a * n + b][diff[i * sites + j]]
        })
    }
}

/// Table of difference indices `diff[i·sites + j]`.
pub(crate) fn difference_table(grid: &TorusGrid) -> Vec<usize> {
    let sites = grid.sites();
    let coords: Vec<Vec<usize>> = (0..sites).map(|i| grid.site_coords(i)).collect();
    let nn = grid.points_per_axis();
    let mut table = vec![0usize; sites * sites];
    for i in 0..sites {
        for j in 0..sites {
            table[i * sites + j] = coords[i]
                .iter()
                .zip(&coords[j])
                .fold(0, |acc, (&a, &b)| acc * nn + (a + nn - b) % nn);
        }
    }
    table
}

/// `g = m(D) f`, exact on the lattice.
pub fn apply_multiplier(m: &Multiplier, f: &GridFunction) -> Result<GridFunction> {
    if m.modes() != f.grid.sites() || m.spinor() != f.spinor {
        return Err(Error::GridMismatch(format!(
            "multiplier with {} modes and spinor {} applied to a function with {} sites and spinor {}",
            m.modes(),
            m.spinor(),
            f.grid.sites(),
            f.spinor
        )));
    }
    Ok(GridFunction {
        grid: f.grid.clone(),
        spinor: f.spinor,
        values: m.apply_raw(&f.grid, &f.values),
    })
}

/// `L^p` norm of a grid function.
pub fn lp_norm(f: &GridFunction, p: f64) -> Result<f64> {
    f.lp_norm(p)
}

/// Radial bump `χ(|ξ|) = exp(1 - 1/(1-τ²))`, `τ = (|ξ| - center)/half_width`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothCutoff {
    pub center: f64,
    pub half_width: f64,
}

impl SmoothCutoff {
    pub fn eval(&self, r: f64) -> f64 {
        let tau = (r - self.center) / self.half_width;
        if tau.abs() >= 1.0 {
            0.0
        } else {
            (1.0 - 1.0 / (1.0 - tau * tau)).exp()
        }
    }

    pub fn eval_xi(&self, xi: &[f64]) -> f64 {
        self.eval(crate::symbols::norm(xi))
    }
}

pub fn smooth_cutoff(center: f64, half_width: f64) -> Result<SmoothCutoff> {
    if !(half_width.is_finite() && half_width > 0.0) {
        return Err(Error::Domain(format!("half_width = {half_width} must be positive")));
    }
    Ok(SmoothCutoff { center, half_width })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbols::{eval_symbol, SymbolSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_function(grid: &TorusGrid, spinor: usize, seed: u64) -> GridFunction {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..grid.sites() * spinor)
            .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        GridFunction::new(grid, spinor, values).unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(TorusGrid::new(1, 7, 1.0).is_err());
        assert!(TorusGrid::new(1, 6, 1.0).is_err());
        assert!(TorusGrid::new(1, 8, 0.0).is_err());
        assert!(TorusGrid::new(4, 8, 1.0).is_err());
        assert!(matches!(TorusGrid::new(2, 128, 1.0), Err(Error::SizeCap { .. })));
        let g = TorusGrid::new(2, 16, 4.0).unwrap();
        assert!(g.check_size(4, 512).is_err());
        assert_eq!(g.check_size(2, 512).unwrap(), 512);
    }

    #[test]
    fn identity_multiplier() {
        let g = TorusGrid::new(2, 16, 3.0).unwrap();
        let f = random_function(&g, 1, 1);
        let one = Multiplier::scalar_fn(&g, |_| C64::new(1.0, 0.0));
        let out = apply_multiplier(&one, &f).unwrap();
        assert!(out.max_abs_diff(&f) < 1e-14);
    }

    #[test]
    fn plane_wave_is_multiplier_eigenfunction() {
        let g = TorusGrid::new(2, 16, 5.0).unwrap();
        let k = [3, -2];
        let f = GridFunction::plane_wave(&g, &k, &[C64::new(1.0, 0.0)]);
        let lap = Multiplier::scalar_fn(&g, |xi| C64::new(xi.iter().map(|v| v * v).sum(), 0.0));
        let out = apply_multiplier(&lap, &f).unwrap();
        let lambda = (9.0 + 4.0) / 25.0;
        let expect = GridFunction::new(&g, 1, f.values.iter().map(|v| v * lambda).collect()).unwrap();
        assert!(out.max_abs_diff(&expect) < 1e-13);
    }

    #[test]
    fn dirac_multiplier_matches_dense_assembly() {
        let g = TorusGrid::new(2, 8, 2.0).unwrap();
        let spec = SymbolSpec::dirac_massless(2).unwrap();
        let m = Multiplier::from_fn(&g, 2, |xi| eval_symbol(&spec, xi));
        let u = [C64::new(0.3, 0.1), C64::new(-0.7, 0.2)];
        let f = GridFunction::plane_wave(&g, &[1, 2], &u);
        let via_fft = apply_multiplier(&m, &f).unwrap();
        // oracle: explicit matrix built mode by mode from plane waves
        let sites = g.sites();
        let mut dense = CMatrix::zeros(sites * 2, sites * 2);
        for mode in 0..sites {
            let k = g.mode_index(mode);
            let t = eval_symbol(&spec, &g.frequency(mode));
            for a in 0..2 {
                let mut e = [C64::new(0.0, 0.0); 2];
                e[a] = C64::new(1.0, 0.0);
                let w = GridFunction::plane_wave(&g, &k, &e);
                for b in 0..2 {
                    let mut eb = [C64::new(0.0, 0.0); 2];
                    eb[b] = C64::new(1.0, 0.0);
                    let wb = GridFunction::plane_wave(&g, &k, &eb);
                    for r in 0..sites * 2 {
                        for c in 0..sites * 2 {
                            dense[(r, c)] += t[(b, a)] * wb.values[r] * w.values[c].conj() / sites as f64;
                        }
                    }
                }
            }
        }
        let v = nalgebra::DVector::from_vec(f.values.clone());
        let oracle = &dense * v;
        let diff = oracle.iter().zip(&via_fft.values).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(diff < 1e-12, "{diff}");
        let dm = m.dense_matrix(&g);
        assert!((dm - dense).norm() < 1e-11);
    }

    #[test]
    fn norms_of_constants_and_spikes() {
        let g = TorusGrid::new(2, 16, 3.0).unwrap();
        let one = GridFunction::from_fn(&g, 1, |_| vec![C64::new(1.0, 0.0)]);
        for p in [1.0, 2.0, 3.5] {
            assert!((one.lp_norm(p).unwrap() - 3.0f64.powf(2.0 / p)).abs() < 1e-12);
        }
        let mut spike = GridFunction::zeros(&g, 1);
        spike.values[37] = C64::new(0.0, 1.0);
        for p in [1.0, 2.0, 3.5] {
            let h: f64 = 3.0 / 16.0;
            assert!((spike.lp_norm(p).unwrap() - (h * h).powf(1.0 / p)).abs() < 1e-14);
        }
        assert_eq!(spike.lp_norm(f64::INFINITY).unwrap(), 1.0);
        assert!(spike.lp_norm(0.5).is_err());
    }

    #[test]
    fn gaussian_l2_norm_matches_compensated_sum() {
        let g = TorusGrid::new(1, 512, 20.0).unwrap();
        let f = GridFunction::from_fn(&g, 1, |x| vec![C64::new((-x[0] * x[0]).exp(), 0.3 * x[0])]);
        // oracle: Neumaier-compensated summation of |f|² h
        let h = g.spacing();
        let (mut sum, mut comp) = (0.0f64, 0.0f64);
        for i in 0..g.sites() {
            let x = g.position(i)[0];
            let term = ((-x * x).exp().powi(2) + (0.3 * x).powi(2)) * h;
            let t = sum + term;
            if sum.abs() >= term.abs() {
                comp += (sum - t) + term;
            } else {
                comp += (term - t) + sum;
            }
            sum = t;
        }
        let oracle = (sum + comp).sqrt();
        assert!((f.lp_norm(2.0).unwrap() - oracle).abs() < 1e-12 * oracle);
    }

    #[test]
    fn cutoff_values() {
        let chi = smooth_cutoff(1.0, 0.5).unwrap();
        assert_eq!(chi.eval(1.0), 1.0);
        assert_eq!(chi.eval(1.5), 0.0);
        assert_eq!(chi.eval(0.5), 0.0);
        let h = 1e-4;
        let edge = 1.5;
        let deriv = (chi.eval(edge + h) - chi.eval(edge - h)) / (2.0 * h);
        assert!(deriv.abs() < 1e-8);
        assert!(smooth_cutoff(0.0, 0.0).is_err());
        let ball = smooth_cutoff(0.0, 2.0).unwrap();
        assert_eq!(ball.eval_xi(&[0.0, 0.0]), 1.0);
    }

    #[test]
    fn site_and_mode_indexing() {
        let g = TorusGrid::new(3, 8, 4.0).unwrap();
        for i in [0, 5, 77, 511] {
            assert_eq!(g.site_index(&g.site_coords(i)), i);
        }
        assert_eq!(g.mode_index(g.site_index(&[7, 4, 3])), vec![-1, -4, 3]);
        assert_eq!(g.position(0), vec![-2.0, -2.0, -2.0]);
        let d = g.difference_index(g.site_index(&[1, 0, 0]), g.site_index(&[3, 0, 0]));
        assert_eq!(g.separation(d), vec![-1.0, 0.0, 0.0]);
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(24))]

        #[test]
        fn transform_round_trip(seed in 0u64..1000, d in 1usize..=3) {
            let n = [64, 16, 8][d - 1];
            let g = TorusGrid::new(d, n, 2.5).unwrap();
            let f = random_function(&g, 2, seed);
            let back = g.inverse(&g.forward(&f.values, 2), 2);
            let err = back.iter().zip(&f.values).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            proptest::prop_assert!(err < 1e-12 * f.max_abs());
        }

        #[test]
        fn multipliers_compose(seed in 0u64..1000) {
            let g = TorusGrid::new(2, 16, 3.0).unwrap();
            let f = random_function(&g, 1, seed);
            let m1 = Multiplier::scalar_fn(&g, |xi| C64::new(1.0 + xi[0].powi(2), xi[1]));
            let m2 = Multiplier::scalar_fn(&g, |xi| C64::new(xi[0] - xi[1], 0.5).inv());
            let a = apply_multiplier(&m1, &apply_multiplier(&m2, &f).unwrap()).unwrap();
            let b = apply_multiplier(&m2, &apply_multiplier(&m1, &f).unwrap()).unwrap();
            let c = apply_multiplier(&m1.compose(&m2), &f).unwrap();
            let scale = c.max_abs();
            proptest::prop_assert!(a.max_abs_diff(&c) < 1e-12 * scale);
            proptest::prop_assert!(b.max_abs_diff(&c) < 1e-12 * scale);
        }

        #[test]
        fn norm_is_homogeneous_and_subadditive(seed in 0u64..1000, p in 1.0f64..6.0, lam in -3.0f64..3.0) {
            let g = TorusGrid::new(1, 64, 2.0).unwrap();
            let f = random_function(&g, 1, seed);
            let h = random_function(&g, 1, seed + 1);
            let scaled = GridFunction::new(&g, 1, f.values.iter().map(|v| v * lam).collect()).unwrap();
            let nf = f.lp_norm(p).unwrap();
            proptest::prop_assert!((scaled.lp_norm(p).unwrap() - lam.abs() * nf).abs() < 1e-12 * (1.0 + nf));
            let sum = f.axpy(C64::new(1.0, 0.0), &h);
            proptest::prop_assert!(sum.lp_norm(p).unwrap() <= nf + h.lp_norm(p).unwrap() + 1e-12);
        }
    }
}
