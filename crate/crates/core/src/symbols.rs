//! Kinetic-energy Fourier symbols, their critical values and the Clifford generators
//! used by the Dirac kinds.
//!
//! Frequencies are in unit-frequency convention: a plane wave is `e^{2πi x·ξ}` and the
//! symbols are evaluated directly at `ξ` (so the fractional Laplacian is `|ξ|^s`).

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, C64};

/// The four kinetic energies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SymbolKind {
    /// `|ξ|^s`
    FractionalLaplacian,
    /// `(1+|ξ|²)^{s/2} - 1`
    Relativistic,
    /// `Σ α_j ξ_j`
    DiracMassless,
    /// `Σ α_j ξ_j + β`
    DiracMassive,
}

impl SymbolKind {
    pub fn is_dirac(self) -> bool {
        matches!(self, SymbolKind::DiracMassless | SymbolKind::DiracMassive)
    }

    pub fn label(self) -> &'static str {
        match self {
            SymbolKind::FractionalLaplacian => "fractional-laplacian",
            SymbolKind::Relativistic => "relativistic",
            SymbolKind::DiracMassless => "dirac-massless",
            SymbolKind::DiracMassive => "dirac-massive",
        }
    }
}

impl fmt::Display for SymbolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Anything that can serve as the Fourier symbol of a translation-invariant operator.
pub trait Symbol: Send + Sync {
    fn dim(&self) -> usize;
    fn spinor_dim(&self) -> usize;
    /// Hermitian `n × n` symbol matrix at frequency `xi`.
    fn eval(&self, xi: &[f64]) -> CMatrix;
    /// Real eigenvalues of `eval(xi)`, with multiplicity.
    fn eigenvalues(&self, xi: &[f64]) -> Vec<f64>;
}

/// One of the four kinetic energies with order `s`, dimension `d` and spinor size `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymbolSpec {
    kind: SymbolKind,
    s: f64,
    d: usize,
}

impl SymbolSpec {
    /// Validates and builds a spec. Dirac kinds require `s = 1`; scalar kinds any
    /// finite `s > 0`. Whether `(s, d)` lies in the analytic regime `0 < s < d` is
    /// reported separately by [`SymbolSpec::in_analytic_regime`].
    pub fn new(kind: SymbolKind, s: f64, d: usize) -> Result<Self> {
        if !(1..=3).contains(&d) {
            return Err(Error::UnsupportedDimension(d));
        }
        if !s.is_finite() || s <= 0.0 {
            return Err(Error::InvalidSymbol(format!("order s = {s} must be positive and finite")));
        }
        if kind.is_dirac() && s != 1.0 {
            return Err(Error::InvalidSymbol(format!("{kind} requires s = 1, got s = {s}")));
        }
        Ok(SymbolSpec { kind, s, d })
    }

    pub fn fractional_laplacian(s: f64, d: usize) -> Result<Self> {
        Self::new(SymbolKind::FractionalLaplacian, s, d)
    }

    pub fn relativistic(s: f64, d: usize) -> Result<Self> {
        Self::new(SymbolKind::Relativistic, s, d)
    }

    pub fn dirac_massless(d: usize) -> Result<Self> {
        Self::new(SymbolKind::DiracMassless, 1.0, d)
    }

    pub fn dirac_massive(d: usize) -> Result<Self> {
        Self::new(SymbolKind::DiracMassive, 1.0, d)
    }

    pub fn kind(&self) -> SymbolKind {
        self.kind
    }

    pub fn order(&self) -> f64 {
        self.s
    }

    /// `0 < s < d`, the regime the eigenvalue bounds are stated in.
    pub fn in_analytic_regime(&self) -> bool {
        self.s < self.d as f64
    }

    /// Nonnegative eigenvalue branch `λ₊(|ξ|)` of the symbol.
    pub fn radial_branch(&self, r: f64) -> f64 {
        match self.kind {
            SymbolKind::FractionalLaplacian => r.powf(self.s),
            SymbolKind::Relativistic => (1.0 + r * r).powf(0.5 * self.s) - 1.0,
            SymbolKind::DiracMassless => r,
            SymbolKind::DiracMassive => (1.0 + r * r).sqrt(),
        }
    }

    /// Set of critical values of the scalar eigenvalue symbol.
    pub fn critical_values(&self) -> CriticalSet {
        critical_values(self)
    }
}

impl Symbol for SymbolSpec {
    fn dim(&self) -> usize {
        self.d
    }

    fn spinor_dim(&self) -> usize {
        match (self.kind.is_dirac(), self.d) {
            (false, _) => 1,
            (true, 3) => 4,
            (true, _) => 2,
        }
    }

    fn eval(&self, xi: &[f64]) -> CMatrix {
        eval_symbol(self, xi)
    }

    fn eigenvalues(&self, xi: &[f64]) -> Vec<f64> {
        let r = norm(xi);
        match self.kind {
            SymbolKind::FractionalLaplacian | SymbolKind::Relativistic => vec![self.radial_branch(r)],
            SymbolKind::DiracMassless | SymbolKind::DiracMassive => {
                let half = self.spinor_dim() / 2;
                let l = self.radial_branch(r);
                let mut v = vec![-l; half];
                v.extend(std::iter::repeat_n(l, half));
                v
            }
        }
    }
}

/// User-supplied radial scalar symbol `ξ ↦ profile(|ξ|)`.
#[derive(Clone)]
pub struct RadialSymbol {
    d: usize,
    profile: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl RadialSymbol {
    pub fn new(d: usize, profile: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Result<Self> {
        if !(1..=3).contains(&d) {
            return Err(Error::UnsupportedDimension(d));
        }
        Ok(RadialSymbol {
            d,
            profile: Arc::new(profile),
        })
    }
}

impl fmt::Debug for RadialSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RadialSymbol").field("d", &self.d).finish_non_exhaustive()
    }
}

impl Symbol for RadialSymbol {
    fn dim(&self) -> usize {
        self.d
    }

    fn spinor_dim(&self) -> usize {
        1
    }

    fn eval(&self, xi: &[f64]) -> CMatrix {
        CMatrix::from_element(1, 1, C64::new((self.profile)(norm(xi)), 0.0))
    }

    fn eigenvalues(&self, xi: &[f64]) -> Vec<f64> {
        vec![(self.profile)(norm(xi))]
    }
}

pub(crate) fn norm(xi: &[f64]) -> f64 {
    xi.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Evaluates the symbol matrix `T(ξ)`.
pub fn eval_symbol(spec: &SymbolSpec, xi: &[f64]) -> CMatrix {
    debug_assert_eq!(xi.len(), spec.d);
    match spec.kind {
        SymbolKind::FractionalLaplacian | SymbolKind::Relativistic => {
            CMatrix::from_element(1, 1, C64::new(spec.radial_branch(norm(xi)), 0.0))
        }
        SymbolKind::DiracMassless | SymbolKind::DiracMassive => {
            let gens = clifford_generators(spec.d).expect("dimension validated at construction");
            let n = gens[0].nrows();
            let mut m = CMatrix::zeros(n, n);
            for (alpha, &x) in gens.iter().zip(xi) {
                m += alpha * C64::new(x, 0.0);
            }
            if spec.kind == SymbolKind::DiracMassive {
                m += &gens[spec.d];
            }
            m
        }
    }
}

/// Finite set of critical values `Λ_c`, sorted ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalSet {
    pub values: Vec<f64>,
}

impl CriticalSet {
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn contains(&self, v: f64) -> bool {
        self.values.contains(&v)
    }

    /// Distance from `z` to the nearest critical value (`+∞` when empty).
    pub fn distance(&self, z: C64) -> f64 {
        self.values
            .iter()
            .map(|&c| (z - c).norm())
            .fold(f64::INFINITY, f64::min)
    }
}

pub fn critical_values(spec: &SymbolSpec) -> CriticalSet {
    let values = match spec.kind {
        SymbolKind::FractionalLaplacian if spec.s > 1.0 => vec![0.0],
        SymbolKind::FractionalLaplacian => vec![],
        SymbolKind::Relativistic => vec![0.0],
        SymbolKind::DiracMassless => vec![],
        SymbolKind::DiracMassive => vec![-1.0, 1.0],
    };
    CriticalSet { values }
}

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn pauli() -> [CMatrix; 3] {
    let z = c(0.0, 0.0);
    let one = c(1.0, 0.0);
    let i = c(0.0, 1.0);
    [
        DMatrix::from_row_slice(2, 2, &[z, one, one, z]),
        DMatrix::from_row_slice(2, 2, &[z, -i, i, z]),
        DMatrix::from_row_slice(2, 2, &[one, z, z, -one]),
    ]
}

/// Clifford generators `[α_1, …, α_d, β]`.
///
/// d = 1: `(σ_x, σ_z)`; d = 2: `(σ_x, σ_y, σ_z)`; d = 3: standard Dirac representation
/// `α_j = [[0, σ_j], [σ_j, 0]]`, `β = diag(I, -I)`.
pub fn clifford_generators(d: usize) -> Result<Vec<CMatrix>> {
    let [sx, sy, sz] = pauli();
    match d {
        1 => Ok(vec![sx, sz]),
        2 => Ok(vec![sx, sy, sz]),
        3 => {
            let zero2 = CMatrix::zeros(2, 2);
            let id2 = CMatrix::identity(2, 2);
            let block = |a: &CMatrix, b: &CMatrix, cc: &CMatrix, dd: &CMatrix| {
                let mut m = CMatrix::zeros(4, 4);
                m.view_mut((0, 0), (2, 2)).copy_from(a);
                m.view_mut((0, 2), (2, 2)).copy_from(b);
                m.view_mut((2, 0), (2, 2)).copy_from(cc);
                m.view_mut((2, 2), (2, 2)).copy_from(dd);
                m
            };
            let mut gens: Vec<CMatrix> = [sx, sy, sz]
                .iter()
                .map(|s| block(&zero2, s, s, &zero2))
                .collect();
            gens.push(block(&id2, &zero2, &zero2, &(-id2.clone())));
            Ok(gens)
        }
        _ => Err(Error::UnsupportedDimension(d)),
    }
}

/// Largest entry of `γ_iγ_j + γ_jγ_i − 2δ_{ij} I` over all pairs.
pub fn clifford_defect(gens: &[CMatrix]) -> f64 {
    let n = gens[0].nrows();
    let id = CMatrix::identity(n, n);
    let mut worst: f64 = 0.0;
    for (i, a) in gens.iter().enumerate() {
        for (j, b) in gens.iter().enumerate().skip(i) {
            let target = if i == j { &id * c(2.0, 0.0) } else { CMatrix::zeros(n, n) };
            let anti = a * b + b * a - target;
            worst = worst.max(anti.iter().map(|v| v.norm()).fold(0.0, f64::max));
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::eigenvalues;

    #[test]
    fn fractional_laplacian_vanishes_at_origin() {
        let spec = SymbolSpec::fractional_laplacian(1.5, 2).unwrap();
        assert_eq!(eval_symbol(&spec, &[0.0, 0.0])[(0, 0)], c(0.0, 0.0));
    }

    #[test]
    fn relativistic_vanishes_at_origin() {
        let spec = SymbolSpec::relativistic(1.0, 2).unwrap();
        assert_eq!(eval_symbol(&spec, &[0.0, 0.0])[(0, 0)], c(0.0, 0.0));
    }

    #[test]
    fn massless_dirac_eigenvalues_are_plus_minus_one() {
        let spec = SymbolSpec::dirac_massless(2).unwrap();
        let m = eval_symbol(&spec, &[1.0, 0.0]);
        let mut ev: Vec<f64> = eigenvalues(&m).unwrap().iter().map(|z| z.re).collect();
        ev.sort_by(f64::total_cmp);
        assert!((ev[0] + 1.0).abs() < 1e-14 && (ev[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn critical_value_table() {
        let cv = |k, s, d| critical_values(&SymbolSpec::new(k, s, d).unwrap()).values;
        assert_eq!(cv(SymbolKind::FractionalLaplacian, 1.5, 2), vec![0.0]);
        assert!(cv(SymbolKind::FractionalLaplacian, 0.5, 2).is_empty());
        assert!(cv(SymbolKind::FractionalLaplacian, 1.0, 2).is_empty());
        assert_eq!(cv(SymbolKind::Relativistic, 1.0, 2), vec![0.0]);
        assert!(cv(SymbolKind::DiracMassless, 1.0, 3).is_empty());
        assert_eq!(cv(SymbolKind::DiracMassive, 1.0, 2), vec![-1.0, 1.0]);
    }

    #[test]
    fn clifford_relations_hold_exactly() {
        for d in 1..=3 {
            let gens = clifford_generators(d).unwrap();
            assert_eq!(gens.len(), d + 1);
            assert_eq!(clifford_defect(&gens), 0.0, "d = {d}");
            for g in &gens {
                assert_eq!(g, &g.adjoint());
            }
        }
        // d = 3: 4 generators -> 10 unordered pairs including squares
        assert_eq!(clifford_generators(3).unwrap()[0].nrows(), 4);
        assert!(clifford_generators(4).is_err());
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(SymbolSpec::fractional_laplacian(0.0, 1).is_err());
        assert!(SymbolSpec::fractional_laplacian(-1.0, 1).is_err());
        assert!(SymbolSpec::new(SymbolKind::DiracMassive, 0.5, 2).is_err());
        assert!(SymbolSpec::fractional_laplacian(1.0, 4).is_err());
        assert!(SymbolSpec::fractional_laplacian(1.5, 2).unwrap().in_analytic_regime());
        assert!(!SymbolSpec::fractional_laplacian(1.5, 1).unwrap().in_analytic_regime());
    }

    #[test]
    fn dirac_spectrum_multiplicities() {
        let spec = SymbolSpec::dirac_massive(3).unwrap();
        let xi = [0.3, -0.4, 1.2];
        let m = eval_symbol(&spec, &xi);
        let mut ev: Vec<f64> = eigenvalues(&m).unwrap().iter().map(|z| z.re).collect();
        ev.sort_by(f64::total_cmp);
        let l = (1.0 + norm(&xi).powi(2)).sqrt();
        let expect = [-l, -l, l, l];
        for (a, b) in ev.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(spec.eigenvalues(&xi), expect.to_vec());
    }

    // |∇λ| sampled near ξ = 0 vanishes exactly for kinds with a critical value there.
    #[test]
    fn gradient_vanishes_at_listed_critical_values() {
        let grad = |spec: &SymbolSpec, r: f64| {
            let h = 1e-7 * r.max(1e-3);
            (spec.radial_branch(r + h) - spec.radial_branch(r - h)) / (2.0 * h)
        };
        let cases = [
            (SymbolSpec::fractional_laplacian(1.5, 2).unwrap(), true),
            (SymbolSpec::fractional_laplacian(0.7, 2).unwrap(), false),
            (SymbolSpec::fractional_laplacian(1.0, 2).unwrap(), false),
            (SymbolSpec::relativistic(1.0, 2).unwrap(), true),
            (SymbolSpec::dirac_massless(2).unwrap(), false),
            (SymbolSpec::dirac_massive(2).unwrap(), true),
        ];
        for (spec, critical) in cases {
            let g = grad(&spec, 1e-6);
            if critical {
                assert!(g < 1e-2, "{:?}: |∇λ| = {g}", spec.kind());
                let value = spec.radial_branch(0.0);
                assert!(spec.critical_values().values.iter().any(|&v| (v.abs() - value).abs() < 1e-12));
            } else {
                assert!(g > 0.5, "{:?}: |∇λ| = {g}", spec.kind());
                assert!(spec.critical_values().is_empty());
            }
        }
    }

    proptest::proptest! {
        #[test]
        fn symbol_is_hermitian_with_expected_spectrum(
            x in -5.0f64..5.0, y in -5.0f64..5.0, zc in -5.0f64..5.0, d in 1usize..=3, massive: bool
        ) {
            let xi: Vec<f64> = [x, y, zc][..d].to_vec();
            let spec = if massive { SymbolSpec::dirac_massive(d) } else { SymbolSpec::dirac_massless(d) }.unwrap();
            let m = eval_symbol(&spec, &xi);
            proptest::prop_assert!((&m - m.adjoint()).norm() < 1e-14);
            let mut ev: Vec<f64> = eigenvalues(&m).unwrap().iter().map(|z| z.re).collect();
            ev.sort_by(f64::total_cmp);
            let mut expect = spec.eigenvalues(&xi);
            expect.sort_by(f64::total_cmp);
            for (a, b) in ev.iter().zip(&expect) {
                proptest::prop_assert!((a - b).abs() < 1e-12 * (1.0 + b.abs()));
            }
        }
    }
}
