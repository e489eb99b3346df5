//! Free resolvents `R₀(z) = (T(D) - z)^{-1}` on the torus, their convolution kernels and
//! kernel envelopes.

mod opnorm;

pub use opnorm::{
    empirical_opnorm, random_split_norms, sum_space_norm, DenseOp, LinearOp, MultiplierOp, OpNormEstimate,
    OpNormRequest, SplitNorm,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{apply_multiplier, GridFunction, Multiplier, TorusGrid};
use crate::linalg::{CMatrix, C64};
use crate::symbols::{Symbol, SymbolKind, SymbolSpec};

/// `R₀(z)` for one symbol, grid and spectral parameter, with both multipliers tabulated.
#[derive(Debug, Clone)]
pub struct ResolventHandle {
    grid: TorusGrid,
    spinor: usize,
    z: C64,
    symbol: Multiplier,
    inverse: Multiplier,
    max_symbol: f64,
}

impl ResolventHandle {
    /// Fails with [`Error::NearLatticeSpectrum`] when `z` lies within
    /// `1e-12·max|T|` of an eigenvalue of some `T(ξ_k)`.
    pub fn new(symbol: &dyn Symbol, grid: &TorusGrid, z: C64) -> Result<Self> {
        if symbol.dim() != grid.dim() {
            return Err(Error::GridMismatch(format!(
                "symbol in d = {} on a grid with d = {}",
                symbol.dim(),
                grid.dim()
            )));
        }
        if !(z.re.is_finite() && z.im.is_finite()) {
            return Err(Error::Domain(format!("z = {z} is not finite")));
        }
        let spinor = symbol.spinor_dim();
        let modes = grid.sites();
        let mut max_symbol: f64 = 0.0;
        let mut nearest = (f64::INFINITY, 0usize, 0.0f64);
        for k in 0..modes {
            for lam in symbol.eigenvalues(&grid.frequency(k)) {
                max_symbol = max_symbol.max(lam.abs());
                let dist = (z - lam).norm();
                if dist < nearest.0 {
                    nearest = (dist, k, lam);
                }
            }
        }
        if nearest.0 <= 1e-12 * max_symbol.max(1.0) {
            return Err(Error::NearLatticeSpectrum {
                z,
                value: nearest.2,
                mode: grid.mode_index(nearest.1),
                distance: nearest.0,
            });
        }
        let symbol_table = Multiplier::from_fn(grid, spinor, |xi| symbol.eval(xi));
        let inverse = match &symbol_table {
            Multiplier::Scalar(t) => Multiplier::Scalar(t.iter().map(|t| (t - z).inv()).collect()),
            Multiplier::Matrix { blocks, .. } => Multiplier::Matrix {
                spinor,
                blocks: blocks
                    .iter()
                    .map(|t| {
                        let shifted = t - CMatrix::identity(spinor, spinor) * z;
                        shifted.try_inverse().expect("z is off the lattice spectrum")
                    })
                    .collect(),
            },
        };
        Ok(ResolventHandle {
            grid: grid.clone(),
            spinor,
            z,
            symbol: symbol_table,
            inverse,
            max_symbol,
        })
    }

    pub fn z(&self) -> C64 {
        self.z
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn spinor(&self) -> usize {
        self.spinor
    }

    /// Tabulated `(T(ξ_k) - z)^{-1}`.
    pub fn multiplier(&self) -> &Multiplier {
        &self.inverse
    }

    /// Tabulated `T(ξ_k)`.
    pub fn symbol_multiplier(&self) -> &Multiplier {
        &self.symbol
    }

    pub fn max_symbol(&self) -> f64 {
        self.max_symbol
    }

    /// `R₀(z) f`.
    pub fn apply(&self, f: &GridFunction) -> Result<GridFunction> {
        apply_multiplier(&self.inverse, f)
    }

    /// `(T(D) - z) f`.
    pub fn apply_shifted_symbol(&self, f: &GridFunction) -> Result<GridFunction> {
        let t = apply_multiplier(&self.symbol, f)?;
        Ok(t.axpy(-self.z, f))
    }

    /// Discrete kernel blocks by difference index (see [`Multiplier::discrete_kernel`]).
    pub fn discrete_kernel(&self) -> Vec<Vec<C64>> {
        self.inverse.discrete_kernel(&self.grid)
    }

    /// Continuum-normalized kernel `R₀(r; z) = h^{-d}·K_disc(r)`.
    pub fn kernel_field(&self) -> Vec<Vec<C64>> {
        let inv_cell = 1.0 / self.grid.cell_volume();
        self.discrete_kernel()
            .into_iter()
            .map(|v| v.into_iter().map(|x| x * inv_cell).collect())
            .collect()
    }

    /// Dense matrix of `R₀(z)` on grid vectors.
    pub fn dense_matrix(&self) -> CMatrix {
        self.inverse.dense_matrix(&self.grid)
    }
}

/// `R₀(z) f` (mode-wise inverse).
pub fn resolvent_apply(h: &ResolventHandle, f: &GridFunction) -> Result<GridFunction> {
    h.apply(f)
}

/// `(T(D)+z)(|D|² + m² - z²)^{-1} f` for the Dirac kinds (`m = 0` massless, `m = 1`
/// massive), where `|D|²` is the square of the lattice Dirac symbol, i.e. `|ξ|²`.
pub fn dirac_factorized_apply(spec: &SymbolSpec, grid: &TorusGrid, z: C64, f: &GridFunction) -> Result<GridFunction> {
    let mass2 = match spec.kind() {
        SymbolKind::DiracMassless => 0.0,
        SymbolKind::DiracMassive => 1.0,
        _ => return Err(Error::InvalidSymbol("factorized resolvent needs a Dirac symbol".into())),
    };
    let n = spec.spinor_dim();
    let helmholtz = Multiplier::Matrix {
        spinor: n,
        blocks: (0..grid.sites())
            .map(|k| {
                let r2: f64 = grid.frequency(k).iter().map(|x| x * x).sum();
                CMatrix::identity(n, n) * (C64::new(r2 + mass2, 0.0) - z * z).inv()
            })
            .collect(),
    };
    let plus = Multiplier::from_fn(grid, n, |xi| spec.eval(xi) + CMatrix::identity(n, n) * z);
    let inner = apply_multiplier(&helmholtz, f)?;
    apply_multiplier(&plus, &inner)
}

/// Kernel values along the grid diagonal `x = (jh, …, jh)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KernelSample {
    pub radii: Vec<f64>,
    pub values: Vec<CMatrix>,
}

pub fn resolvent_kernel(h: &ResolventHandle) -> KernelSample {
    let grid = h.grid();
    let n = h.spinor();
    let field = h.kernel_field();
    let d = grid.dim();
    let step = grid.spacing() * (d as f64).sqrt();
    let jmax = ((grid.side() / 2.0) / step + 1e-9).floor() as usize;
    let mut radii = Vec::new();
    let mut values = Vec::new();
    for j in 1..=jmax.min(grid.points_per_axis() - 1) {
        let idx = grid.site_index(&vec![j; d]);
        radii.push(j as f64 * step);
        values.push(CMatrix::from_fn(n, n, |a, b| field[a * n + b][idx]));
    }
    KernelSample { radii, values }
}

/// Result of a kernel envelope fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnvelopeFit {
    /// `sup |R₀(r; z)|·r^{d-s}` over the sampled `z` and `0 < r ≤ R`.
    pub constant: f64,
    pub z_at: C64,
    pub r_at: f64,
    /// Per-`z` supremum, in input order.
    pub per_z: Vec<f64>,
}

/// `sup_{z, 0<r≤R} |R₀(r; z)|·r^{d-s}` for a fractional Laplacian with `d/2 < s < d`.
pub fn kernel_envelope_fit(spec: &SymbolSpec, grid: &TorusGrid, z_set: &[C64], radius: f64) -> Result<EnvelopeFit> {
    if z_set.is_empty() {
        return Err(Error::Empty("kernel envelope needs at least one z".into()));
    }
    let d = spec.dim() as f64;
    let s = spec.order();
    if spec.kind() != SymbolKind::FractionalLaplacian || !(d / 2.0 < s && s < d) {
        return Err(Error::Regime(format!(
            "kernel envelope fit needs a fractional Laplacian with d/2 < s < d, got {} with s = {s}, d = {d}",
            spec.kind()
        )));
    }
    if let Some(z) = z_set.iter().find(|z| (z.norm() - 1.0).abs() > 1e-12) {
        return Err(Error::Domain(format!("envelope fit samples |z| = 1, got |z| = {}", z.norm())));
    }
    let window: Vec<(usize, f64, f64)> = (1..grid.sites())
        .filter_map(|diff| {
            let r = crate::symbols::norm(&grid.separation(diff));
            (r > 0.0 && r <= radius).then(|| (diff, r, r.powf(d - s)))
        })
        .collect();
    let per: Vec<(f64, f64)> = z_set
        .par_iter()
        .map(|&z| -> Result<(f64, f64)> {
            let h = ResolventHandle::new(spec, grid, z)?;
            let field = h.kernel_field();
            let mut best = (0.0, 0.0);
            for &(diff, r, weight) in &window {
                let v = field[0][diff].norm() * weight;
                if v > best.0 {
                    best = (v, r);
                }
            }
            Ok(best)
        })
        .collect::<Result<_>>()?;
    let (i, &(constant, r_at)) = per
        .iter()
        .enumerate()
        .max_by(|a, b| a.1 .0.total_cmp(&b.1 .0))
        .expect("nonempty");
    Ok(EnvelopeFit {
        constant,
        z_at: z_set[i],
        r_at,
        per_z: per.iter().map(|p| p.0).collect(),
    })
}
