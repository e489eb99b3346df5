//! Dense spectra of `H₀ + V` on the torus, distances to `σ(H₀)`, and separation of
//! discrete eigenvalues from the discretized continuum by grid refinement.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Multiplier, PotentialField, PotentialSpec, TorusGrid, DEFAULT_SITE_CAP};
use crate::linalg::{self, CMatrix, C64};
use crate::symbols::{Symbol, SymbolKind, SymbolSpec};

/// `σ(H₀)` as a union of closed real intervals (endpoints may be infinite).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EssentialSpectrum {
    pub intervals: Vec<[f64; 2]>,
}

impl EssentialSpectrum {
    pub fn of(kind: SymbolKind) -> Self {
        let intervals = match kind {
            SymbolKind::FractionalLaplacian | SymbolKind::Relativistic => vec![[0.0, f64::INFINITY]],
            SymbolKind::DiracMassless => vec![[f64::NEG_INFINITY, f64::INFINITY]],
            SymbolKind::DiracMassive => vec![[f64::NEG_INFINITY, -1.0], [1.0, f64::INFINITY]],
        };
        EssentialSpectrum { intervals }
    }

    pub fn distance(&self, z: C64) -> f64 {
        self.intervals
            .iter()
            .map(|&[a, b]| {
                let x = z.re.clamp(a, b);
                (z - x).norm()
            })
            .fold(f64::INFINITY, f64::min)
    }

    pub fn contains(&self, x: f64) -> bool {
        self.intervals.iter().any(|&[a, b]| a <= x && x <= b)
    }
}

/// `dist(z, σ(H₀))`.
pub fn dist_to_spectrum(spec: &SymbolSpec, z: C64) -> f64 {
    EssentialSpectrum::of(spec.kind()).distance(z)
}

/// Dense `T(D) + V` on grid vectors, with the default size cap.
pub fn assemble_hamiltonian(symbol: &dyn Symbol, grid: &TorusGrid, v: &PotentialField) -> Result<CMatrix> {
    assemble_hamiltonian_capped(symbol, grid, v, DEFAULT_SITE_CAP)
}

pub fn assemble_hamiltonian_capped(symbol: &dyn Symbol, grid: &TorusGrid, v: &PotentialField, cap: usize) -> Result<CMatrix> {
    let n = symbol.spinor_dim();
    if symbol.dim() != grid.dim() || &v.grid != grid {
        return Err(Error::GridMismatch("symbol, grid and potential must agree".into()));
    }
    if v.spinor != n {
        return Err(Error::GridMismatch(format!(
            "potential with spinor dimension {} for a symbol with n = {n}",
            v.spinor
        )));
    }
    grid.check_size(n, cap)?;
    let mut h = Multiplier::from_fn(grid, n, |xi| symbol.eval(xi)).dense_matrix(grid);
    for site in 0..grid.sites() {
        let block = v.block(site);
        for a in 0..n {
            for b in 0..n {
                h[(site * n + a, site * n + b)] += block[(a, b)];
            }
        }
    }
    Ok(h)
}

/// Eigenvalues sorted by real then imaginary part, with optional eigenvectors and
/// eigenvalue condition numbers.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub values: Vec<C64>,
    pub vectors: Option<CMatrix>,
    pub cond: Option<Vec<f64>>,
}

pub fn eigensolve(h: &CMatrix, with_vectors: bool) -> Result<Spectrum> {
    if h.nrows() != h.ncols() {
        return Err(Error::Eigensolver(format!("{}x{} matrix is not square", h.nrows(), h.ncols())));
    }
    let mut eig = linalg::eigen(h, with_vectors, with_vectors).map_err(|e| match e {
        Error::Eigensolver(msg) => Error::Eigensolver(format!("{msg}; {}", condition_report(h))),
        other => other,
    })?;
    eig.sort_by_real_then_imag();
    let cond = eig.condition_numbers();
    Ok(Spectrum {
        values: eig.values,
        vectors: eig.right,
        cond,
    })
}

fn condition_report(h: &CMatrix) -> String {
    let sv = linalg::singular_values(h);
    let (hi, lo) = (sv.first().copied().unwrap_or(0.0), sv.last().copied().unwrap_or(0.0));
    format!("σ_max = {hi:.3e}, σ_min = {lo:.3e}, κ₂ = {:.3e}", hi / lo)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Label {
    Discrete,
    ContinuumArtifact,
    Undecided,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Discrete => "discrete",
            Label::ContinuumArtifact => "continuum-artifact",
            Label::Undecided => "undecided",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralPoint {
    pub z: C64,
    pub dist_sigma: f64,
    /// `|z − z'| / dist(z, σ(H₀))` for the nearest eigenvalue `z'` on the refined grid.
    pub refinement_drift: f64,
    pub label: Label,
    /// Threshold `η` the point was compared against.
    pub eta: f64,
    pub cond: Option<f64>,
}

/// Relative drift below which a refined pair counts as stable.
pub const MAX_DRIFT: f64 = 0.1;

/// Sorted distinct eigenvalues of `T(ξ_k)` over the lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeLevels {
    levels: Vec<f64>,
}

impl LatticeLevels {
    pub fn new(symbol: &dyn Symbol, grid: &TorusGrid) -> Self {
        let mut all: Vec<f64> = (0..grid.sites())
            .flat_map(|k| symbol.eigenvalues(&grid.frequency(k)))
            .collect();
        all.sort_by(f64::total_cmp);
        let scale = all.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let mut levels: Vec<f64> = Vec::with_capacity(all.len());
        for v in all {
            if levels.last().is_none_or(|&last| v - last > 1e-12 * scale) {
                levels.push(v);
            }
        }
        LatticeLevels { levels }
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    /// Distance from `z` to the nearest level.
    pub fn distance(&self, z: C64) -> f64 {
        let i = self.levels.partition_point(|&v| v < z.re);
        [i.checked_sub(1), Some(i)]
            .into_iter()
            .flatten()
            .filter_map(|j| self.levels.get(j))
            .map(|&v| (z - v).norm())
            .fold(f64::INFINITY, f64::min)
    }

    /// Mean gap between levels within five places of the level nearest to `x`.
    pub fn local_spacing(&self, x: f64) -> f64 {
        let n = self.levels.len();
        if n < 2 {
            return 0.0;
        }
        let i = match self.levels.binary_search_by(|v| v.total_cmp(&x)) {
            Ok(i) => i,
            Err(0) => 0,
            Err(i) if i >= n => n - 1,
            Err(i) => {
                if x - self.levels[i - 1] <= self.levels[i] - x {
                    i - 1
                } else {
                    i
                }
            }
        };
        let lo = i.saturating_sub(5);
        let hi = (i + 5).min(n - 1);
        (self.levels[hi] - self.levels[lo]) / (hi - lo) as f64
    }
}

/// Artifact threshold `η`: fixed, or a multiple of the local lattice spacing near `Re z`.
#[derive(Debug, Clone, PartialEq)]
pub enum Threshold {
    Fixed(f64),
    Local { levels: LatticeLevels, factor: f64 },
}

impl Threshold {
    /// `5×` the local spacing of the lattice values of `symbol` on `grid`.
    pub fn local(symbol: &dyn Symbol, grid: &TorusGrid) -> Self {
        Threshold::Local {
            levels: LatticeLevels::new(symbol, grid),
            factor: 5.0,
        }
    }

    pub fn eta(&self, z: C64) -> f64 {
        match self {
            Threshold::Fixed(eta) => *eta,
            Threshold::Local { levels, factor } => factor * levels.local_spacing(z.re),
        }
    }
}

/// Labels every eigenvalue of the coarse spectrum against its refined partner.
pub fn classify(coarse: &[C64], fine: &[C64], spec: &SymbolSpec, threshold: &Threshold) -> Vec<SpectralPoint> {
    let ess = EssentialSpectrum::of(spec.kind());
    coarse
        .iter()
        .map(|&z| {
            let dist = ess.distance(z);
            let partner = fine
                .iter()
                .map(|w| (z - w).norm())
                .fold(f64::INFINITY, f64::min);
            let drift = if dist > 0.0 { partner / dist } else { f64::INFINITY };
            let eta = threshold.eta(z);
            let label = if dist <= eta {
                Label::ContinuumArtifact
            } else if drift < MAX_DRIFT {
                Label::Discrete
            } else {
                Label::Undecided
            };
            SpectralPoint {
                z,
                dist_sigma: dist,
                refinement_drift: drift,
                label,
                eta,
                cond: None,
            }
        })
        .collect()
}

/// [`classify`] after checking that `fine` refines `coarse` on the same box.
pub fn classify_on_grids(
    coarse_grid: &TorusGrid,
    coarse: &[C64],
    fine_grid: &TorusGrid,
    fine: &[C64],
    spec: &SymbolSpec,
    threshold: &Threshold,
) -> Result<Vec<SpectralPoint>> {
    if coarse_grid.dim() != fine_grid.dim()
        || (coarse_grid.side() - fine_grid.side()).abs() > 1e-12 * coarse_grid.side()
        || fine_grid.points_per_axis() != 2 * coarse_grid.points_per_axis()
    {
        return Err(Error::GridMismatch(format!(
            "{coarse_grid:?} and {fine_grid:?} are not a refinement pair"
        )));
    }
    Ok(classify(coarse, fine, spec, threshold))
}

/// Spectra of `H₀ + V` on `grid` and its refinement, classified with the local threshold.
#[derive(Debug, Clone)]
pub struct RefinedSpectrum {
    pub coarse: Spectrum,
    pub fine: Vec<C64>,
    pub points: Vec<SpectralPoint>,
}

impl RefinedSpectrum {
    pub fn discrete(&self) -> impl Iterator<Item = &SpectralPoint> {
        self.points.iter().filter(|p| p.label == Label::Discrete)
    }
}

pub fn refined_spectrum(
    spec: &SymbolSpec,
    grid: &TorusGrid,
    potential: &PotentialSpec,
    with_cond: bool,
) -> Result<RefinedSpectrum> {
    let n = spec.spinor_dim();
    let fine_grid = grid.refined()?;
    let v = potential.sample(grid, n)?;
    let v_fine = potential.sample(&fine_grid, n)?;
    refined_spectrum_of(spec, &v, &v_fine, with_cond)
}

/// [`refined_spectrum`] for potentials already sampled on a grid and on its refinement.
pub fn refined_spectrum_of(
    spec: &SymbolSpec,
    v: &PotentialField,
    v_fine: &PotentialField,
    with_cond: bool,
) -> Result<RefinedSpectrum> {
    let (grid, fine_grid) = (&v.grid, &v_fine.grid);
    if fine_grid.points_per_axis() != 2 * grid.points_per_axis() || fine_grid.side() != grid.side() {
        return Err(Error::GridMismatch("second potential is not on the refined grid".into()));
    }
    let h = assemble_hamiltonian(spec, grid, v)?;
    let h_fine = assemble_hamiltonian(spec, fine_grid, v_fine)?;
    let (coarse, fine) = rayon::join(|| eigensolve(&h, with_cond), || eigensolve(&h_fine, false));
    let (coarse, fine) = (coarse?, fine?);
    let mut points = classify_on_grids(grid, &coarse.values, fine_grid, &fine.values, spec, &Threshold::local(spec, grid))?;
    if let Some(cond) = &coarse.cond {
        for (p, c) in points.iter_mut().zip(cond) {
            p.cond = Some(*c);
        }
    }
    Ok(RefinedSpectrum {
        coarse,
        fine: fine.values,
        points,
    })
}

#[derive(Serialize)]
struct Row<'a> {
    re: f64,
    im: f64,
    dist_sigma: f64,
    drift: f64,
    label: &'a str,
    cond: Option<f64>,
}

/// CSV with columns `re, im, dist_sigma, drift, label, cond`.
pub fn write_spectrum_csv<W: Write>(points: &[SpectralPoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for p in points {
        w.serialize(Row {
            re: p.z.re,
            im: p.z.im,
            dist_sigma: p.dist_sigma,
            drift: p.refinement_drift,
            label: p.label.as_str(),
            cond: p.cond,
        })
        .map_err(|e| Error::Parse(e.to_string()))?;
    }
    if points.is_empty() {
        w.write_record(["re", "im", "dist_sigma", "drift", "label", "cond"])
            .map_err(|e| Error::Parse(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))
}

pub fn save_spectrum_csv(points: &[SpectralPoint], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_spectrum_csv(points, std::io::BufWriter::new(file))
}
