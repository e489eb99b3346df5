//! Conformal maps `ρ(H₀) → 𝔻`, the disk normalization `ν`, Koebe distortion ratios and
//! weighted Blaschke-type eigenvalue sums.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::C64;
use crate::spectra::{EssentialSpectrum, Label, SpectralPoint};
use crate::symbols::SymbolKind;

const I: C64 = C64::new(0.0, 1.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// `√z` with the cut on `[0, ∞)`: `arg z ∈ [0, 2π)`, so `Im √z ≥ 0`.
pub fn sqrt_cut(z: C64) -> C64 {
    let mut theta = z.im.atan2(z.re);
    if theta < 0.0 {
        theta += 2.0 * std::f64::consts::PI;
    }
    C64::from_polar(z.norm().sqrt(), 0.5 * theta)
}

/// `φ⁺(z) = (z − i)/(z + i)`, `ℂ⁺ → 𝔻`.
pub fn phi_plus(z: C64) -> C64 {
    (z - I) / (z + I)
}

pub fn phi_plus_inverse(v: C64) -> C64 {
    I * (ONE + v) / (ONE - v)
}

/// `φ⁻(z) = (z + i)/(z − i)`, `ℂ⁻ → 𝔻`.
pub fn phi_minus(z: C64) -> C64 {
    (z + I) / (z - I)
}

pub fn phi_minus_inverse(v: C64) -> C64 {
    -I * (ONE + v) / (ONE - v)
}

fn check_disk(w: C64, what: &str) -> Result<()> {
    if !(w.norm() < 1.0) {
        return Err(Error::Domain(format!("{what} = {w} is not in the open unit disk")));
    }
    Ok(())
}

/// `ν(w) = (w + z̃₀)/(1 + conj(z̃₀)·w)`, the disk automorphism with `ν(0) = z̃₀`.
pub fn nu_map(w: C64, z0_tilde: C64) -> Result<C64> {
    check_disk(w, "w")?;
    check_disk(z0_tilde, "z̃₀")?;
    Ok((w + z0_tilde) / (ONE + z0_tilde.conj() * w))
}

/// `ν⁻¹(v) = (v − z̃₀)/(1 − conj(z̃₀)·v)`.
pub fn nu_inverse(v: C64, z0_tilde: C64) -> Result<C64> {
    check_disk(v, "v")?;
    check_disk(z0_tilde, "z̃₀")?;
    Ok(nu_inverse_closed(v, z0_tilde))
}

// Also valid on the unit circle.
fn nu_inverse_closed(v: C64, z0_tilde: C64) -> C64 {
    (v - z0_tilde) / (ONE - z0_tilde.conj() * v)
}

/// Half-plane chart for the massless Dirac operator (`ρ(𝒟₀) = ℂ⁺ ∪ ℂ⁻`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Chart {
    Upper,
    Lower,
}

/// `ψ = ν⁻¹ ∘ ψ₀` for one kinetic energy, normalized so that `ψ(z₀) = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConformalAtlas {
    pub kind: SymbolKind,
    /// Only meaningful for the massless Dirac operator.
    pub chart: Chart,
    pub z0: C64,
    pub z0_tilde: C64,
}

impl ConformalAtlas {
    /// Atlas normalized at `z0`; the massless Dirac chart is the half-plane of `z0`.
    pub fn new(kind: SymbolKind, z0: C64) -> Result<Self> {
        let chart = if z0.im < 0.0 { Chart::Lower } else { Chart::Upper };
        Self::with_chart(kind, chart, z0)
    }

    pub fn with_chart(kind: SymbolKind, chart: Chart, z0: C64) -> Result<Self> {
        let mut atlas = ConformalAtlas {
            kind,
            chart,
            z0,
            z0_tilde: C64::new(0.0, 0.0),
        };
        atlas.z0_tilde = atlas.psi0(z0)?;
        Ok(atlas)
    }

    fn check_domain(&self, z: C64) -> Result<()> {
        if !(z.re.is_finite() && z.im.is_finite()) {
            return Err(Error::Domain(format!("z = {z} is not finite")));
        }
        if z.im == 0.0 && EssentialSpectrum::of(self.kind).contains(z.re) {
            return Err(Error::Domain(format!("z = {z} lies on σ(H₀)")));
        }
        if self.kind == SymbolKind::DiracMassless {
            match self.chart {
                Chart::Upper if z.im <= 0.0 => return Err(Error::Domain(format!("z = {z} is outside the ℂ⁺ chart"))),
                Chart::Lower if z.im >= 0.0 => return Err(Error::Domain(format!("z = {z} is outside the ℂ⁻ chart"))),
                _ => {}
            }
        }
        Ok(())
    }

    /// Unnormalized map `ψ₀`.
    pub fn psi0(&self, z: C64) -> Result<C64> {
        self.check_domain(z)?;
        Ok(match self.kind {
            SymbolKind::FractionalLaplacian | SymbolKind::Relativistic => phi_plus(sqrt_cut(z)),
            SymbolKind::DiracMassless => match self.chart {
                Chart::Upper => phi_plus(z),
                Chart::Lower => phi_minus(z),
            },
            SymbolKind::DiracMassive => phi_plus(sqrt_cut((z - ONE) / (z + ONE))),
        })
    }

    pub fn psi0_inverse(&self, v: C64) -> Result<C64> {
        check_disk(v, "w")?;
        Ok(self.psi0_inverse_unchecked(v))
    }

    fn psi0_inverse_unchecked(&self, v: C64) -> C64 {
        match self.kind {
            SymbolKind::FractionalLaplacian | SymbolKind::Relativistic => {
                let u = phi_plus_inverse(v);
                u * u
            }
            SymbolKind::DiracMassless => match self.chart {
                Chart::Upper => phi_plus_inverse(v),
                Chart::Lower => phi_minus_inverse(v),
            },
            SymbolKind::DiracMassive => {
                let u = phi_plus_inverse(v);
                let zeta = u * u;
                (ONE + zeta) / (ONE - zeta)
            }
        }
    }

    pub fn psi(&self, z: C64) -> Result<C64> {
        Ok(nu_inverse_closed(self.psi0(z)?, self.z0_tilde))
    }

    pub fn psi_inverse(&self, w: C64) -> Result<C64> {
        let v = nu_map(w, self.z0_tilde)?;
        Ok(self.psi0_inverse_unchecked(v))
    }

    /// `dist(z, σ(H₀))`, which is the distance to the boundary of the chart domain.
    pub fn boundary_distance(&self, z: C64) -> f64 {
        EssentialSpectrum::of(self.kind).distance(z)
    }

    /// Boundary images `ψ(Λ_c)` and `ψ(∞)` (two points for the massive Dirac operator,
    /// whose infinity is reached from both half-planes). Scalar kinds always list `ψ(0)`;
    /// when `0 ∉ Λ_c` give it exponent zero.
    pub fn exceptional_points(&self) -> (Vec<C64>, Vec<C64>) {
        let (crit, inf): (Vec<C64>, Vec<C64>) = match self.kind {
            SymbolKind::FractionalLaplacian | SymbolKind::Relativistic => (vec![-ONE], vec![ONE]),
            SymbolKind::DiracMassless => (vec![], vec![ONE]),
            // z = 1 ↦ ζ = 0 ↦ −1; z = −1 ↦ ζ = ∞ ↦ 1; z = ∞ ↦ ζ = 1 ↦ ∓i
            SymbolKind::DiracMassive => (vec![ONE, -ONE], vec![I, -I]),
        };
        let map = |v: C64| nu_inverse_closed(v, self.z0_tilde);
        (crit.into_iter().map(map).collect(), inf.into_iter().map(map).collect())
    }
}

pub fn psi_map(atlas: &ConformalAtlas, z: C64) -> Result<C64> {
    atlas.psi(z)
}

pub fn psi_inverse(atlas: &ConformalAtlas, w: C64) -> Result<C64> {
    atlas.psi_inverse(w)
}

/// `ψ(z) = (√z − √a)/(√z + √a)` for `a < 0`, the closed form of the scalar atlas
/// normalized at `z₀ = a`.
pub fn pseudo_relativistic_map(a: f64, z: C64) -> Result<C64> {
    if !(a < 0.0) {
        return Err(Error::Domain(format!("a = {a} must be negative")));
    }
    if z.im == 0.0 && z.re >= 0.0 {
        return Err(Error::Domain(format!("z = {z} lies on [0, ∞)")));
    }
    let (u, ua) = (sqrt_cut(z), sqrt_cut(C64::new(a, 0.0)));
    Ok((u - ua) / (u + ua))
}

/// `|ψ'(z)|` by finite differences: central along the real axis away from `σ(H₀)`,
/// second-order one-sided in the normal direction near it.
pub fn psi_derivative(atlas: &ConformalAtlas, z: C64) -> Result<f64> {
    let h = 1e-6 * z.norm().max(1e-2);
    let f = |x: C64| atlas.psi(x);
    if atlas.boundary_distance(z) > 4.0 * h {
        Ok(((f(z + h)? - f(z - h)?) / (2.0 * h)).norm())
    } else {
        let step = C64::new(0.0, h * z.im.signum());
        Ok(((-3.0 * f(z)? + 4.0 * f(z + step)? - f(z + 2.0 * step)?) / (2.0 * step)).norm())
    }
}

/// `(1 − |ψ(z)|) / (|ψ'(z)|·dist(z, σ(H₀)))`.
pub fn koebe_ratio(atlas: &ConformalAtlas, z: C64) -> Result<f64> {
    let dist = atlas.boundary_distance(z);
    if dist < 1e-8 {
        return Err(Error::Domain(format!("z = {z} is within 1e-8 of σ(H₀)")));
    }
    let w = atlas.psi(z)?;
    Ok((1.0 - w.norm()) / (psi_derivative(atlas, z)? * dist))
}

/// The three comparisons behind the massive Dirac weighted sum, each of which should be
/// bounded above and below over `ρ(H₀)`:
/// `(1−|w|) / (|1−z²|^{-1/2}(1+|z|)^{-1} dist)`, `|w−w₁||w−w₂| / (|1−z²|^{1/2}(1+|z|)^{-1})`
/// and `|w−w₃||w−w₄|·(1+|z|)`, with `w₁,₂ = ψ(∓1)` and `w₃,₄` the two images of `∞`.
pub fn massive_dirac_distortion(atlas: &ConformalAtlas, z: C64) -> Result<[f64; 3]> {
    if atlas.kind != SymbolKind::DiracMassive {
        return Err(Error::InvalidSymbol("distortion comparison is for the massive Dirac atlas".into()));
    }
    let w = atlas.psi(z)?;
    let (crit, inf) = atlas.exceptional_points();
    let one_minus_z2 = (ONE - z * z).norm();
    let zn = 1.0 + z.norm();
    let dist = atlas.boundary_distance(z);
    Ok([
        (1.0 - w.norm()) / (one_minus_z2.powf(-0.5) / zn * dist),
        (w - crit[0]).norm() * (w - crit[1]).norm() / (one_minus_z2.sqrt() / zn),
        (w - inf[0]).norm() * (w - inf[1]).norm() * zn,
    ])
}

/// Boundary weight `Π|w − w_c^i|^{(μ_c^i − 1 + ε)₊} |w − w_∞|^{(μ_∞ − 1 + ε)₊}` data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSpec {
    pub critical: Vec<C64>,
    pub critical_exponents: Vec<f64>,
    pub infinity: Vec<C64>,
    pub infinity_exponent: f64,
    pub eps: f64,
}

impl WeightSpec {
    pub fn new(critical: Vec<C64>, critical_exponents: Vec<f64>, infinity: Vec<C64>, infinity_exponent: f64, eps: f64) -> Result<Self> {
        if critical.len() != critical_exponents.len() {
            return Err(Error::InvalidExponent("one exponent per critical point".into()));
        }
        if critical_exponents.iter().chain([&infinity_exponent]).any(|&m| !(m >= 0.0)) {
            return Err(Error::InvalidExponent("weight exponents must be nonnegative".into()));
        }
        if !(eps > 0.0) {
            return Err(Error::InvalidExponent(format!("ε = {eps} must be positive")));
        }
        if critical.iter().chain(&infinity).any(|w| (w.norm() - 1.0).abs() > 1e-12) {
            return Err(Error::Domain("exceptional points must lie on the unit circle".into()));
        }
        Ok(WeightSpec {
            critical,
            critical_exponents,
            infinity,
            infinity_exponent,
            eps,
        })
    }

    /// Weight built from an atlas's exceptional points.
    pub fn from_atlas(atlas: &ConformalAtlas, critical_exponent: f64, infinity_exponent: f64, eps: f64) -> Result<Self> {
        let (crit, inf) = atlas.exceptional_points();
        let n = crit.len();
        Self::new(crit, vec![critical_exponent; n], inf, infinity_exponent, eps)
    }

    /// `(1 − |w|)·Π…` at one disk point.
    pub fn term(&self, w: C64) -> f64 {
        let pos = |m: f64| (m - 1.0 + self.eps).max(0.0);
        let mut t = 1.0 - w.norm();
        for (c, &m) in self.critical.iter().zip(&self.critical_exponents) {
            t *= (w - c).norm().powf(pos(m));
        }
        for c in &self.infinity {
            t *= (w - c).norm().powf(pos(self.infinity_exponent));
        }
        t
    }
}

/// Closed-form eigenvalue weights in the spectral variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NamedWeight {
    /// `dist(z, σ(H₀))`.
    MainSum,
    /// `|z|^{-(1-ε)/2} dist`.
    Fractional,
    /// `dist·(1+|z|)^{-α(d-1)/(d+1)-1-ε}`.
    DiracMassless,
    /// `dist·|z²-1|^{α/2-1+ε}(1+|z|)^{-α-α(d-1)/(d+1)+1-ε}`.
    DiracMassive,
    /// `dist·|z|^{α/2-1+ε}(1+|z|)^{-2α(d-1)/(d+1)+1/2-α/2-ε}`.
    PseudoRelativistic,
}

/// A named weight with its parameters bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundWeight {
    pub weight: NamedWeight,
    pub kind: SymbolKind,
    pub d: usize,
    pub alpha: f64,
    pub eps: f64,
}

impl BoundWeight {
    pub fn eval(&self, z: C64) -> Result<f64> {
        let dist = EssentialSpectrum::of(self.kind).distance(z);
        if dist == 0.0 {
            return Err(Error::Domain(format!("weight undefined at z = {z} on σ(H₀)")));
        }
        let (a, e) = (self.alpha, self.eps);
        let g = (self.d as f64 - 1.0) / (self.d as f64 + 1.0);
        let zn = 1.0 + z.norm();
        Ok(match self.weight {
            NamedWeight::MainSum => dist,
            NamedWeight::Fractional => z.norm().powf(-(1.0 - e) / 2.0) * dist,
            NamedWeight::DiracMassless => dist * zn.powf(-a * g - 1.0 - e),
            NamedWeight::DiracMassive => {
                dist * (z * z - ONE).norm().powf(a / 2.0 - 1.0 + e) * zn.powf(-a - a * g + 1.0 - e)
            }
            NamedWeight::PseudoRelativistic => {
                dist * z.norm().powf(a / 2.0 - 1.0 + e) * zn.powf(-2.0 * a * g + 0.5 - a / 2.0 - e)
            }
        })
    }
}

/// What a weighted sum is taken against.
#[derive(Debug, Clone, PartialEq)]
pub enum Weight<'a> {
    /// Disk weight evaluated at `ψ(z)`.
    Disk { atlas: &'a ConformalAtlas, spec: &'a WeightSpec },
    Named(BoundWeight),
}

/// Pairwise summation in index order.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    match v.len() {
        0 => 0.0,
        1 => v[0],
        n if n <= 8 => v.iter().sum(),
        n => pairwise_sum(&v[..n / 2]) + pairwise_sum(&v[n / 2..]),
    }
}

/// Weighted sum over discrete eigenvalues.
pub fn weighted_blaschke_sum(points: &[SpectralPoint], weight: &Weight<'_>) -> Result<f64> {
    let mut terms = Vec::with_capacity(points.len());
    for p in points {
        if p.label != Label::Discrete {
            return Err(Error::Domain(format!("point {} is not labeled discrete", p.z)));
        }
        terms.push(match weight {
            Weight::Disk { atlas, spec } => spec.term(atlas.psi(p.z)?),
            Weight::Named(w) => w.eval(p.z)?,
        });
    }
    Ok(pairwise_sum(&terms))
}
