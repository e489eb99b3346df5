use serde::{Deserialize, Serialize};

use super::{sample_pair, spectrum_at, BoundCertificate, CertInputs, Check, TheoremId, Verdict};
use crate::birman_schwinger::{BsAssembler, OrderVariant};
use crate::error::{Error, Result};
use crate::lattice::{PotentialSpec, TorusGrid};
use crate::linalg::{eigen, CMatrix, C64};
use crate::resolvent::ResolventHandle;
use crate::symbols::{Symbol, SymbolKind, SymbolSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImaginaryOptions {
    /// Spectral parameters for the resolvent identity.
    pub identity_points: Vec<[f64; 2]>,
    pub identity_tol: f64,
    pub normalization_tol: f64,
    /// Couplings `t` of the family `t·iW` for the reported bound quantity.
    pub couplings: Vec<f64>,
    pub seed: u64,
}

impl Default for ImaginaryOptions {
    fn default() -> Self {
        ImaginaryOptions {
            identity_points: vec![[1.0, 0.5], [-1.0, 0.3], [2.0, -0.7], [0.5, 2.0]],
            identity_tol: 1e-10,
            normalization_tol: 1e-6,
            couplings: vec![0.5, 1.0, 2.0, 4.0],
            seed: 0,
        }
    }
}

/// Exponent regime for purely imaginary potentials.
pub(crate) fn check_regime(spec: &SymbolSpec, q: f64) -> Result<()> {
    if !matches!(spec.kind(), SymbolKind::FractionalLaplacian | SymbolKind::DiracMassless) {
        return Err(Error::InvalidSymbol(format!("imaginary-potential bound is for |ξ|^s or the massless Dirac symbol, got {}", spec.kind())));
    }
    let d = spec.dim() as f64;
    let s = spec.order();
    if s < d / (d + 1.0) {
        return Err(Error::Regime(format!("s = {s} below d/(d+1)")));
    }
    let hi = (d + 1.0) / 2.0 + 1e-12;
    let ok = if 2.0 * s < d {
        q >= d / (2.0 * s) - 1e-12 && q <= hi
    } else if 2.0 * s == d {
        q > 1.0 && q <= hi
    } else {
        q >= 1.0 - 1e-12 && q <= hi
    };
    if !ok {
        return Err(Error::Regime(format!("q = {q} outside the imaginary-potential range for s = {s}, d = {d}")));
    }
    Ok(())
}

/// Largest entry of `(m(z) - m(z̄))/(2i) - Im z·m(z)m(z̄)` relative to the first term.
pub fn imaginary_part_identity(spec: &SymbolSpec, grid: &TorusGrid, z: C64) -> Result<f64> {
    let rz = ResolventHandle::new(spec, grid, z)?;
    let rc = ResolventHandle::new(spec, grid, z.conj())?;
    let product = rz.multiplier().compose(rc.multiplier());
    let n = spec.spinor_dim();
    let two_i = C64::new(0.0, 2.0);
    let (mut num, mut den) = (0.0f64, 0.0f64);
    for k in 0..grid.sites() {
        for a in 0..n {
            for b in 0..n {
                let im_r = (rz.multiplier().entry(k, a, b) - rc.multiplier().entry(k, a, b)) / two_i;
                num = num.max((im_r - product.entry(k, a, b) * z.im).norm());
                den = den.max(im_r.norm());
            }
        }
    }
    Ok(if den == 0.0 { num } else { num / den })
}

/// `Q(z) = -i√W R₀(z) √W` on the support of `W`; eigenvalues of `H₀ + iW` are the `z`
/// with `Q(z)g = g`.
fn q_matrix(assembler: &BsAssembler<'_>, z: C64) -> Result<CMatrix> {
    Ok(-assembler.matrix(z)?)
}

/// `Re⟨Q(z)g, g⟩/⟨g, g⟩` for the eigenvector `g` of `Q(z)` whose eigenvalue is closest to 1.
fn normalization(assembler: &BsAssembler<'_>, z: C64) -> Result<f64> {
    let q = q_matrix(assembler, z)?;
    let dec = eigen(&q, true, false)?;
    let right = dec.right.ok_or_else(|| Error::Eigensolver("no eigenvectors returned".into()))?;
    let j = (0..dec.values.len())
        .min_by(|&a, &b| (dec.values[a] - 1.0).norm().total_cmp(&(dec.values[b] - 1.0).norm()))
        .ok_or_else(|| Error::Empty("empty Birman–Schwinger matrix".into()))?;
    let g = right.column(j);
    let qg = &q * g;
    Ok(g.dotc(&qg).re / g.norm_squared())
}

/// Ingredients of the bound for `V = iW`, `W ≥ 0`.
///
/// (i) `Im R₀(z) = (Im z)·R₀(z)R₀(z̄)` mode by mode; (ii) for every discrete eigenvalue
/// of `H₀ + iW` the Birman–Schwinger eigenvector satisfies `Re⟨Qg, g⟩ = ‖g‖²`;
/// (iii) the quantity `|z|^{2q-d/s}|Im z|^{-q}/‖V‖_q^q` over a coupling family is reported.
pub fn verify_imaginary(spec: &SymbolSpec, grid: &TorusGrid, potential: &PotentialSpec, q: f64, opts: &ImaginaryOptions) -> Result<BoundCertificate> {
    check_regime(spec, q)?;
    let pair = sample_pair(spec, grid, potential)?;
    if !pair.0.is_imaginary_nonnegative(pair.0.roundoff_tol()) {
        return Err(Error::InvalidPotential("V must be i·W with W ≥ 0 pointwise".into()));
    }
    let mut inputs = CertInputs::new(spec);
    inputs.potential = Some(potential.clone());
    inputs.q = Some(q);
    let mut cert = BoundCertificate::new(TheoremId::ImaginaryPotential, inputs, grid, opts.seed);

    let mut identity = 0.0f64;
    for &[re, im] in &opts.identity_points {
        identity = identity.max(imaginary_part_identity(spec, grid, C64::new(re, im))?);
    }
    cert.checks.push(Check::at_most("imaginary-part-identity", identity, opts.identity_tol));

    let base = spectrum_at(spec, &pair, 1.0)?;
    let assembler = BsAssembler::new(spec, &pair.0, OrderVariant::AbsFirst)?;
    let mut worst = 0.0f64;
    let mut rows = Vec::new();
    let discrete: Vec<C64> = base.discrete().map(|p| p.z).collect();
    for &z in &discrete {
        let re_q = normalization(&assembler, z)?;
        worst = worst.max((re_q - 1.0).abs());
        rows.push(vec![z.re, z.im, re_q]);
    }
    cert.push_series("normalization", rows);
    cert.diag("discrete_count", discrete.len() as f64);
    if discrete.is_empty() {
        cert.notes.push("no discrete eigenvalues off σ(H₀); normalization check is vacuous".into());
    } else {
        cert.checks.push(Check::at_most("re-q-normalization", worst, opts.normalization_tol));
    }

    let dos = spec.dim() as f64 / spec.order();
    let mut sup = 0.0f64;
    let mut family = Vec::new();
    for &t in &opts.couplings {
        let sp = spectrum_at(spec, &pair, t)?;
        let vqq = pair.0.scaled(t).lp_norm(q)?.powf(q);
        for p in sp.discrete() {
            let val = p.z.norm().powf(2.0 * q - dos) * p.z.im.abs().powf(-q) / vqq;
            sup = sup.max(val);
            family.push(vec![t, p.z.re, p.z.im, val]);
        }
    }
    cert.push_series("bound_quantity", family);
    cert.lhs = Some(sup);
    cert.constant = Some(sup);
    cert.verdict = Verdict::from_checks(&cert.checks);
    Ok(cert)
}
