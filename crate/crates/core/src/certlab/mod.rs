//! Theorem-shaped experiments. Each verifier binds the lower modules together and returns
//! a [`BoundCertificate`]; [`run_jobs`] runs a batch of them across worker threads.

pub(crate) mod imaginary;
mod main_sum;
pub(crate) mod resolvent_checks;
pub(crate) mod scaling;
pub(crate) mod weighted;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{GridSpec, PotentialField, PotentialSpec, TorusGrid};
use crate::linalg::C64;
use crate::spectra::{refined_spectrum_of, RefinedSpectrum};
use crate::symbols::{Symbol, SymbolKind, SymbolSpec};

pub use imaginary::{imaginary_part_identity, verify_imaginary, ImaginaryOptions};
pub use main_sum::{verify_main, MainOptions};
pub use resolvent_checks::{verify_uniform_resolvent, UniformOptions};
pub use scaling::{predicted_exponents, verify_individual_bounds, verify_schatten_scaling, IndividualOptions, ScalingOptions};
pub use weighted::{verify_weighted_sums, WeightedOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    #[serde(rename = "PASS")]
    Pass,
    #[serde(rename = "FAIL")]
    Fail,
    #[serde(rename = "REPORT-ONLY")]
    ReportOnly,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::ReportOnly => "REPORT-ONLY",
        }
    }

    fn from_checks(checks: &[Check]) -> Self {
        if checks.iter().all(|c| c.passed) {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Verifier identifiers as used in configuration files and on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TheoremId {
    MainSum,
    UniformResolvent,
    SchattenScaling,
    IndividualBounds,
    ImaginaryPotential,
    WeightedFractional,
    WeightedDiracMassless,
    WeightedRelativistic,
    WeightedDiracMassive,
    WeightedPseudoRelativistic,
}

impl TheoremId {
    pub const ALL: [TheoremId; 10] = [
        TheoremId::MainSum,
        TheoremId::UniformResolvent,
        TheoremId::SchattenScaling,
        TheoremId::IndividualBounds,
        TheoremId::ImaginaryPotential,
        TheoremId::WeightedFractional,
        TheoremId::WeightedDiracMassless,
        TheoremId::WeightedRelativistic,
        TheoremId::WeightedDiracMassive,
        TheoremId::WeightedPseudoRelativistic,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TheoremId::MainSum => "main-sum",
            TheoremId::UniformResolvent => "uniform-resolvent",
            TheoremId::SchattenScaling => "schatten-scaling",
            TheoremId::IndividualBounds => "individual-bounds",
            TheoremId::ImaginaryPotential => "imaginary-potential",
            TheoremId::WeightedFractional => "weighted-fractional",
            TheoremId::WeightedDiracMassless => "weighted-dirac-massless",
            TheoremId::WeightedRelativistic => "weighted-relativistic",
            TheoremId::WeightedDiracMassive => "weighted-dirac-massive",
            TheoremId::WeightedPseudoRelativistic => "weighted-pseudo-relativistic",
        }
    }

    /// Kinetic energy a weighted-sum id applies to.
    pub fn weighted_kind(self) -> Option<SymbolKind> {
        Some(match self {
            TheoremId::WeightedFractional => SymbolKind::FractionalLaplacian,
            TheoremId::WeightedDiracMassless => SymbolKind::DiracMassless,
            TheoremId::WeightedRelativistic | TheoremId::WeightedPseudoRelativistic => SymbolKind::Relativistic,
            TheoremId::WeightedDiracMassive => SymbolKind::DiracMassive,
            _ => return None,
        })
    }
}

impl fmt::Display for TheoremId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TheoremId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TheoremId::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| {
                let known: Vec<_> = TheoremId::ALL.iter().map(|i| i.as_str()).collect();
                Error::Parse(format!("unknown theorem id `{s}` (known: {})", known.join(", ")))
            })
    }
}

/// Compact region `K` of the spectral plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Region {
    Rect { re: [f64; 2], im: [f64; 2] },
    /// `{ r e^{iθ} : r ∈ radius, θ ∈ arg }`, angles in radians.
    Sector { radius: [f64; 2], arg: [f64; 2] },
}

impl Region {
    pub fn rect(re: [f64; 2], im: [f64; 2]) -> Self {
        Region::Rect { re, im }
    }

    fn check_shape(&self) -> Result<()> {
        let ok = |a: [f64; 2]| a[0].is_finite() && a[1].is_finite() && a[0] < a[1];
        match self {
            Region::Rect { re, im } if ok(*re) && ok(*im) => Ok(()),
            Region::Sector { radius, arg } if ok(*radius) && ok(*arg) && radius[0] >= 0.0 && arg[1] - arg[0] <= 2.0 * std::f64::consts::PI => Ok(()),
            _ => Err(Error::Domain(format!("malformed region {self:?}"))),
        }
    }

    pub fn contains(&self, z: C64) -> bool {
        match self {
            Region::Rect { re, im } => re[0] <= z.re && z.re <= re[1] && im[0] <= z.im && z.im <= im[1],
            Region::Sector { radius, arg } => {
                let r = z.norm();
                let tol = 1e-12;
                if r < radius[0] * (1.0 - tol) || r > radius[1] * (1.0 + tol) {
                    return false;
                }
                let two_pi = 2.0 * std::f64::consts::PI;
                let mut offset = (z.im.atan2(z.re) - arg[0]).rem_euclid(two_pi);
                if offset > two_pi - tol {
                    offset = 0.0;
                }
                offset + arg[0] <= arg[1] + tol || r == 0.0
            }
        }
    }

    /// Tensor grid of `n[0] × n[1]` points including the edges.
    pub fn sample(&self, n: [usize; 2]) -> Vec<C64> {
        let lin = |a: [f64; 2], k: usize, m: usize| if m <= 1 { 0.5 * (a[0] + a[1]) } else { a[0] + (a[1] - a[0]) * k as f64 / (m - 1) as f64 };
        let mut out = Vec::with_capacity(n[0] * n[1]);
        for i in 0..n[0] {
            for j in 0..n[1] {
                out.push(match self {
                    Region::Rect { re, im } => C64::new(lin(*re, i, n[0]), lin(*im, j, n[1])),
                    Region::Sector { radius, arg } => C64::from_polar(lin(*radius, i, n[0]), lin(*arg, j, n[1])),
                });
            }
        }
        out
    }

    /// Distance from `K` to the critical values of `spec`, `+∞` when there are none.
    pub fn critical_distance(&self, spec: &SymbolSpec) -> f64 {
        spec.critical_values()
            .values
            .iter()
            .map(|&c| self.distance_to(C64::new(c, 0.0)))
            .fold(f64::INFINITY, f64::min)
    }

    fn distance_to(&self, p: C64) -> f64 {
        if self.contains(p) {
            return 0.0;
        }
        match self {
            Region::Rect { re, im } => {
                let dx = (re[0] - p.re).max(p.re - re[1]).max(0.0);
                let dy = (im[0] - p.im).max(p.im - im[1]).max(0.0);
                dx.hypot(dy)
            }
            Region::Sector { radius, arg } => {
                // boundary: two arcs and two radial segments
                let m = 4096;
                let mut best = f64::INFINITY;
                for k in 0..=m {
                    let u = k as f64 / m as f64;
                    let th = arg[0] + u * (arg[1] - arg[0]);
                    let r = radius[0] + u * (radius[1] - radius[0]);
                    for b in [
                        C64::from_polar(radius[0], th),
                        C64::from_polar(radius[1], th),
                        C64::from_polar(r, arg[0]),
                        C64::from_polar(r, arg[1]),
                    ] {
                        best = best.min((b - p).norm());
                    }
                }
                best
            }
        }
    }

    /// Validates the shape and returns its (positive) distance to the critical values.
    pub fn validate(&self, spec: &SymbolSpec) -> Result<f64> {
        self.check_shape()?;
        let d = self.critical_distance(spec);
        if !(d > 0.0) {
            return Err(Error::Domain(format!("region {self:?} touches a critical value of {}", spec.kind())));
        }
        Ok(d)
    }
}

/// A named pass/fail comparison inside a certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: Option<f64>,
    pub limit: Option<f64>,
    pub passed: bool,
}

impl Check {
    /// `value ≤ limit`.
    pub fn at_most(name: &str, value: f64, limit: f64) -> Self {
        Check {
            name: name.into(),
            value: finite(value),
            limit: finite(limit),
            passed: value <= limit,
        }
    }

    /// `value ≥ limit`.
    pub fn at_least(name: &str, value: f64, limit: f64) -> Self {
        Check {
            name: name.into(),
            value: finite(value),
            limit: finite(limit),
            passed: value >= limit,
        }
    }
}

/// Power law fitted to `log y = slope·log x + intercept`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingLaw {
    pub quantity: String,
    pub predicted: f64,
    pub fitted: f64,
    pub intercept: f64,
    /// Root-mean-square residual in log space.
    pub residual: f64,
    pub range: [f64; 2],
    pub samples: usize,
}

/// Minimum number of samples behind a [`ScalingLaw`].
pub const MIN_FIT_SAMPLES: usize = 8;

impl ScalingLaw {
    pub fn fit(quantity: &str, predicted: f64, xs: &[f64], ys: &[f64]) -> Result<Self> {
        if xs.len() != ys.len() || xs.len() < MIN_FIT_SAMPLES {
            return Err(Error::Domain(format!(
                "fit of {quantity} needs at least {MIN_FIT_SAMPLES} samples, got {}",
                xs.len().min(ys.len())
            )));
        }
        let (slope, intercept, residual) = fit_loglog(xs, ys)?;
        let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = xs.iter().copied().fold(0.0, f64::max);
        Ok(ScalingLaw {
            quantity: quantity.into(),
            predicted,
            fitted: slope,
            intercept,
            residual,
            range: [lo, hi],
            samples: xs.len(),
        })
    }
}

/// Least-squares slope, intercept and RMS residual of `log y` against `log x`.
pub fn fit_loglog(xs: &[f64], ys: &[f64]) -> Result<(f64, f64, f64)> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::Domain("log-log fit needs two or more paired samples".into()));
    }
    if xs.iter().chain(ys).any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::Domain("log-log fit needs positive finite samples".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Domain("log-log fit over a single abscissa".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = lx.iter().zip(&ly).map(|(x, y)| (y - slope * x - intercept).powi(2)).sum();
    Ok((slope, intercept, (rss / n).sqrt()))
}

/// What a certificate was computed from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertInputs {
    pub kind: SymbolKind,
    pub s: f64,
    pub d: usize,
    pub potential: Option<PotentialSpec>,
    pub q: Option<f64>,
    pub alpha: Option<f64>,
    pub eps: Option<f64>,
    pub p: Option<f64>,
    pub z0: Option<[f64; 2]>,
    pub region: Option<Region>,
}

impl CertInputs {
    pub fn new(spec: &SymbolSpec) -> Self {
        CertInputs {
            kind: spec.kind(),
            s: spec.order(),
            d: spec.dim(),
            potential: None,
            q: None,
            alpha: None,
            eps: None,
            p: None,
            z0: None,
            region: None,
        }
    }
}

/// Outcome of one verifier. Field order is the serialization order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCertificate {
    pub theorem: String,
    pub inputs: CertInputs,
    pub lhs: Option<f64>,
    pub rhs: Option<f64>,
    pub constant: Option<f64>,
    pub verdict: Verdict,
    pub seed: u64,
    /// Wall-clock seconds; left empty unless runtimes are recorded, so that reruns
    /// serialize identically.
    pub runtime_s: Option<f64>,
    pub grid: GridSpec,
    pub checks: Vec<Check>,
    pub laws: Vec<ScalingLaw>,
    pub diagnostics: BTreeMap<String, f64>,
    /// Plot data: rows of numbers per named series.
    pub series: BTreeMap<String, Vec<Vec<f64>>>,
    pub notes: Vec<String>,
}

impl BoundCertificate {
    pub fn new(theorem: TheoremId, inputs: CertInputs, grid: &TorusGrid, seed: u64) -> Self {
        BoundCertificate {
            theorem: theorem.as_str().into(),
            inputs,
            lhs: None,
            rhs: None,
            constant: None,
            verdict: Verdict::ReportOnly,
            seed,
            runtime_s: None,
            grid: grid.spec(),
            checks: Vec::new(),
            laws: Vec::new(),
            diagnostics: BTreeMap::new(),
            series: BTreeMap::new(),
            notes: Vec::new(),
        }
    }

    pub fn diag(&mut self, key: &str, value: f64) {
        if value.is_finite() {
            self.diagnostics.insert(key.into(), value);
        }
    }

    pub fn push_series(&mut self, key: &str, rows: Vec<Vec<f64>>) {
        let rows = rows.into_iter().filter(|r| r.iter().all(|v| v.is_finite())).collect();
        self.series.insert(key.into(), rows);
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

pub(crate) fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

/// Geometric potential-strength ladder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ladder {
    pub factor: f64,
    /// Steps below the threshold.
    pub below: usize,
    /// Top of the ladder as a multiple of the threshold.
    pub above: f64,
}

impl Default for Ladder {
    fn default() -> Self {
        Ladder {
            factor: std::f64::consts::SQRT_2,
            below: 1,
            above: 32.0,
        }
    }
}

impl Ladder {
    pub fn rungs(&self, t0: f64) -> Result<Vec<f64>> {
        if !(self.factor > 1.0 && self.above >= 1.0 && t0 > 0.0) {
            return Err(Error::Domain(format!("bad ladder {self:?} at t0 = {t0}")));
        }
        let mut t = t0 * self.factor.powi(-(self.below as i32));
        let mut out = Vec::new();
        while t <= t0 * self.above * (1.0 + 1e-12) {
            out.push(t);
            t *= self.factor;
        }
        Ok(out)
    }
}

/// `s ≥ 2d/(d+1)`.
pub fn is_case_a(spec: &SymbolSpec) -> bool {
    let d = spec.dim() as f64;
    spec.order() >= 2.0 * d / (d + 1.0) - 1e-12
}

/// Potential exponent regime: `d/s ≤ q ≤ (d+1)/2` when `s ≥ 2d/(d+1)`, and
/// `(d+1)/2 ≤ q ≤ d/s` otherwise.
pub fn check_potential_exponent(spec: &SymbolSpec, q: f64) -> Result<()> {
    let d = spec.dim() as f64;
    let s = spec.order();
    let tol = 1e-12;
    let (lo, hi) = if is_case_a(spec) { (d / s, (d + 1.0) / 2.0) } else { ((d + 1.0) / 2.0, d / s) };
    if !(q.is_finite() && q >= 1.0 - tol && q >= lo - tol && q <= hi + tol) {
        return Err(Error::Regime(format!(
            "q = {q} outside the exponent regime [{lo}, {hi}] for s = {s}, d = {d} (need max(1, {lo}) ≤ q ≤ {hi})"
        )));
    }
    Ok(())
}

/// Schatten order paired with `L^q`: `q(d-1)/(d-q)`; in `d = 1`, where that vanishes,
/// the Hilbert–Schmidt order 2.
pub fn schatten_order(d: usize, q: f64) -> Result<f64> {
    if d == 1 {
        return Ok(2.0);
    }
    let d = d as f64;
    if q >= d {
        return Err(Error::InvalidExponent(format!("q = {q} must be below d = {d}")));
    }
    let a = q * (d - 1.0) / (d - q);
    if a < 1.0 {
        return Err(Error::InvalidExponent(format!("Schatten order {a} below 1")));
    }
    Ok(a)
}

/// Samples `potential` on `grid` and on its refinement.
pub(crate) fn sample_pair(spec: &SymbolSpec, grid: &TorusGrid, potential: &PotentialSpec) -> Result<(PotentialField, PotentialField)> {
    let n = spec.spinor_dim();
    let fine = grid.refined()?;
    Ok((potential.sample(grid, n)?, potential.sample(&fine, n)?))
}

pub(crate) fn spectrum_at(spec: &SymbolSpec, pair: &(PotentialField, PotentialField), t: f64) -> Result<RefinedSpectrum> {
    refined_spectrum_of(spec, &pair.0.scaled(t), &pair.1.scaled(t), false)
}

pub(crate) fn eigen_rows(spectrum: &RefinedSpectrum, t: f64) -> Vec<Vec<f64>> {
    spectrum.discrete().map(|p| vec![t, p.z.re, p.z.im, p.dist_sigma]).collect()
}

/// One scheduled verifier run.
pub struct Job {
    pub id: String,
    pub task: Box<dyn Fn() -> Result<BoundCertificate> + Send + Sync>,
}

impl Job {
    pub fn new(id: impl Into<String>, task: impl Fn() -> Result<BoundCertificate> + Send + Sync + 'static) -> Self {
        Job {
            id: id.into(),
            task: Box::new(task),
        }
    }
}

pub struct JobOutcome {
    pub id: String,
    pub result: Result<BoundCertificate>,
    pub seconds: f64,
}

/// Runs `jobs` on `workers` threads. Results come back in job order; `runtime_s` is
/// filled in only when `record_runtime` is set.
pub fn run_jobs(jobs: Vec<Job>, workers: usize, record_runtime: bool) -> Vec<JobOutcome> {
    let run = |job: &Job| {
        let start = Instant::now();
        let mut result = (job.task)();
        let seconds = start.elapsed().as_secs_f64();
        if let (Ok(cert), true) = (&mut result, record_runtime) {
            cert.runtime_s = Some(seconds);
        }
        JobOutcome {
            id: job.id.clone(),
            result,
            seconds,
        }
    };
    match rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build() {
        Ok(pool) => pool.install(|| jobs.par_iter().map(run).collect()),
        Err(_) => jobs.iter().map(run).collect(),
    }
}
