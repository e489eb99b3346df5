use serde::{Deserialize, Serialize};

use super::{check_potential_exponent, eigen_rows, sample_pair, spectrum_at, BoundCertificate, CertInputs, Check, Region, TheoremId, Verdict};
use crate::birman_schwinger::{bs_residual, BsAssembler, OrderVariant};
use crate::conformal::pairwise_sum;
use crate::error::{Error, Result};
use crate::lattice::{PotentialSpec, TorusGrid};
use crate::spectra::{dist_to_spectrum, RefinedSpectrum, Threshold};
use crate::symbols::SymbolSpec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MainOptions {
    /// Points of the `K`-grid used for the `σ₁` sweep.
    pub samples: [usize; 2],
    /// Largest coupling tried, as a multiple of the sweep threshold `t_σ`.
    pub t_max_factor: f64,
    pub ladder_factor: f64,
    pub bisect_steps: usize,
    pub residual_tol: f64,
    pub seed: u64,
}

impl Default for MainOptions {
    fn default() -> Self {
        MainOptions {
            samples: [16, 16],
            t_max_factor: 1e3,
            ladder_factor: std::f64::consts::SQRT_2,
            bisect_steps: 8,
            residual_tol: 1e-6,
            seed: 0,
        }
    }
}

fn count_in(spectrum: &RefinedSpectrum, region: &Region) -> usize {
    spectrum.discrete().filter(|p| region.contains(p.z)).count()
}

/// Eigenvalue sum over `K` and the coupling threshold for eigenvalues in `K`.
///
/// The sum is `Σ dist(z, σ(H₀))` over discrete eigenvalues of `H₀ + V` in `K`. The
/// coupling sweep uses `σ₁(M_t(z)) = t·σ₁(M_1(z))`: below `t_σ = 1/sup_K σ₁(M_1)` no
/// eigenvalue can sit in `K`, which is checked at `0.95·t_σ`. The smallest `t*` producing
/// a discrete eigenvalue in `K` is then bracketed, and at the upper bracket each new
/// eigenvalue must carry a Birman–Schwinger eigenvalue `-1` (residual below tolerance)
/// and hence `σ₁ ≥ 1`.
pub fn verify_main(
    spec: &SymbolSpec,
    grid: &TorusGrid,
    potential: &PotentialSpec,
    region: &Region,
    q: f64,
    opts: &MainOptions,
) -> Result<BoundCertificate> {
    check_potential_exponent(spec, q)?;
    region.validate(spec)?;
    let pair = sample_pair(spec, grid, potential)?;
    let mut inputs = CertInputs::new(spec);
    inputs.potential = Some(potential.clone());
    inputs.q = Some(q);
    inputs.region = Some(region.clone());
    let mut cert = BoundCertificate::new(TheoremId::MainSum, inputs, grid, opts.seed);

    let base = spectrum_at(spec, &pair, 1.0)?;
    let in_k: Vec<f64> = base.discrete().filter(|p| region.contains(p.z)).map(|p| p.dist_sigma).collect();
    let sum = pairwise_sum(&in_k);
    cert.lhs = Some(sum);
    cert.diag("count_in_k", in_k.len() as f64);
    cert.push_series("eigenvalues", eigen_rows(&base, 1.0));

    let threshold = Threshold::local(spec, grid);
    let assembler = BsAssembler::new(spec, &pair.0, OrderVariant::AbsFirst)?;
    let mut sup = 0.0f64;
    let mut sweep = Vec::new();
    for z in region.sample(opts.samples) {
        if dist_to_spectrum(spec, z) <= threshold.eta(z) {
            continue;
        }
        match assembler.operator(z) {
            Ok(op) => {
                sup = sup.max(op.sigma1());
                sweep.push(vec![z.re, z.im, op.sigma1()]);
            }
            Err(Error::NearLatticeSpectrum { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    cert.push_series("sigma1_sweep", sweep);
    if sup == 0.0 {
        cert.notes.push("no eigenvalue up to t_max: M(z) vanishes on K".into());
        cert.diag("sup_sigma1", 0.0);
        return Ok(cert);
    }
    let t_sigma = 1.0 / sup;
    cert.diag("sup_sigma1", sup);
    cert.diag("t_sigma", t_sigma);

    let below = spectrum_at(spec, &pair, 0.95 * t_sigma)?;
    cert.checks.push(Check::at_most("eigenvalue-free-below-t-sigma", count_in(&below, region) as f64, 0.0));

    let mut lo = 0.95 * t_sigma;
    let mut hi = None;
    let mut t = t_sigma;
    while t <= opts.t_max_factor * t_sigma {
        let sp = spectrum_at(spec, &pair, t)?;
        if count_in(&sp, region) > 0 {
            hi = Some((t, sp));
            break;
        }
        lo = t;
        t *= opts.ladder_factor;
    }
    let Some((mut t_hi, mut sp_hi)) = hi else {
        cert.notes.push(format!("no eigenvalue up to t_max = {:e}", opts.t_max_factor * t_sigma));
        return Ok(cert);
    };
    for _ in 0..opts.bisect_steps {
        let mid = (lo * t_hi).sqrt();
        let sp = spectrum_at(spec, &pair, mid)?;
        if count_in(&sp, region) > 0 {
            t_hi = mid;
            sp_hi = sp;
        } else {
            lo = mid;
        }
    }
    cert.diag("t_star", t_hi);
    cert.diag("t_star_lower", lo);
    let vq = pair.0.lp_norm(q)?;
    cert.constant = Some(t_hi * vq);

    let v_hi = pair.0.scaled(t_hi);
    let hi_assembler = BsAssembler::new(spec, &v_hi, OrderVariant::AbsFirst)?;
    let (mut worst_residual, mut min_sigma) = (0.0f64, f64::INFINITY);
    let mut rows = Vec::new();
    for p in sp_hi.discrete().filter(|p| region.contains(p.z)) {
        let r = bs_residual(&hi_assembler, p.z)?;
        worst_residual = worst_residual.max(r.residual);
        min_sigma = min_sigma.min(r.sigma1);
        rows.push(vec![p.z.re, p.z.im, r.residual, r.sigma1]);
    }
    cert.push_series("threshold_eigenvalues", rows);
    cert.checks.push(Check::at_most("bs-residual-at-t-star", worst_residual, opts.residual_tol));
    cert.checks.push(Check::at_least("sigma1-at-t-star", min_sigma, 1.0 - 1e-9));
    cert.verdict = Verdict::from_checks(&cert.checks);
    Ok(cert)
}
