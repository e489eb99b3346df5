use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{is_case_a, BoundCertificate, CertInputs, Check, Region, TheoremId, Verdict};
use crate::error::{Error, Result};
use crate::lattice::{GridFunction, TorusGrid};
use crate::linalg::{singular_values, CMatrix, C64};
use crate::resolvent::{empirical_opnorm, random_split_norms, sum_space_norm, MultiplierOp, OpNormRequest, ResolventHandle};
use crate::spectra::{dist_to_spectrum, LatticeLevels};
use crate::symbols::{Symbol, SymbolSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UniformOptions {
    pub samples: [usize; 2],
    /// Required `dist(z, σ(H₀))` in units of the local lattice level spacing.
    pub separation_factor: f64,
    /// How far `Im z` shrinks for the `L² → L²` contrast.
    pub contrast_shrink: f64,
    pub max_ratio: f64,
    pub min_growth: f64,
    /// Random splits compared against the optimized sum-space norm.
    pub splits: usize,
    pub split_tol: f64,
    pub test_functions: usize,
    pub iters: usize,
    pub seed: u64,
}

impl Default for UniformOptions {
    fn default() -> Self {
        UniformOptions {
            samples: [7, 7],
            separation_factor: 2.0,
            contrast_shrink: 100.0,
            max_ratio: 4.0,
            min_growth: 10.0,
            splits: 50,
            split_tol: 0.05,
            test_functions: 4,
            iters: 60,
            seed: 0,
        }
    }
}

fn conj(p: f64) -> f64 {
    if p == 1.0 {
        f64::INFINITY
    } else {
        p / (p - 1.0)
    }
}

/// `‖R₀(z)‖_{L¹ → L^∞} = sup_x ‖R₀(x; z)‖` (exact for a convolution kernel).
fn l1_linf_norm(h: &ResolventHandle) -> f64 {
    let field = h.kernel_field();
    let n = h.spinor();
    let sites = field[0].len();
    (0..sites)
        .map(|i| {
            if n == 1 {
                field[0][i].norm()
            } else {
                singular_values(&CMatrix::from_fn(n, n, |a, b| field[a * n + b][i]))[0]
            }
        })
        .fold(0.0, f64::max)
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    if s.len() % 2 == 1 {
        s[m]
    } else {
        0.5 * (s[m - 1] + s[m])
    }
}

fn test_functions(grid: &TorusGrid, spinor: usize, count: usize, seed: u64) -> Vec<GridFunction> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = grid.dim();
    (0..count)
        .map(|_| {
            let width = grid.side() * rng.random_range(0.02..0.15);
            let center: Vec<f64> = (0..d).map(|_| rng.random_range(-0.2..0.2) * grid.side()).collect();
            let amp: Vec<C64> = (0..spinor).map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
            GridFunction::from_fn(grid, spinor, |x| {
                let r2: f64 = x.iter().zip(&center).map(|(a, b)| (a - b).powi(2)).sum();
                let g = (-r2 / (width * width)).exp();
                amp.iter().map(|a| a * g).collect()
            })
        })
        .collect()
}

/// Admissible `p` for the `L^p → L^{p'}` bound; `p` is unused for `s < 2d/(d+1)`.
pub(crate) fn check_p(spec: &SymbolSpec, p: f64) -> Result<()> {
    let d = spec.dim() as f64;
    let s = spec.order();
    if is_case_a(spec) {
        let lo = (2.0 * d / (d + s)).max(1.0);
        let hi = 2.0 * (d + 1.0) / (d + 3.0);
        if !(p >= lo - 1e-12 && p <= hi + 1e-12) {
            return Err(Error::Regime(format!("p = {p} outside [{lo}, {hi}] for s = {s}, d = {d}")));
        }
    } else if spec.dim() == 1 {
        return Err(Error::Regime("the sum-space bound for s < 2d/(d+1) needs d ≥ 2".into()));
    }
    Ok(())
}

/// Uniformity of the resolvent bound over `K` with an `L² → L²` contrast.
///
/// In the regime `s ≥ 2d/(d+1)` the measured quantity is `‖R₀(z)‖_{L^p → L^{p'}}`
/// (exact kernel supremum for `p = 1`, power iteration otherwise) with
/// `2d/(d+s) ≤ p ≤ 2(d+1)/(d+3)`. For `s < 2d/(d+1)` it is the ratio
/// `‖R₀(z)f‖_{L^a + L^b} / ‖f‖_{L^{a'} ∩ L^{b'}}`, `a = 2d/(d-s)`, `b = 2(d+1)/(d-1)`,
/// maximized over seeded test functions, and the optimized sum-space split is
/// compared with random splits.
pub fn verify_uniform_resolvent(spec: &SymbolSpec, grid: &TorusGrid, region: &Region, p: f64, opts: &UniformOptions) -> Result<BoundCertificate> {
    region.validate(spec)?;
    check_p(spec, p)?;
    let d = spec.dim() as f64;
    let s = spec.order();
    let case_a = is_case_a(spec);
    let mut inputs = CertInputs::new(spec);
    inputs.p = case_a.then_some(p);
    inputs.region = Some(region.clone());
    let mut cert = BoundCertificate::new(TheoremId::UniformResolvent, inputs, grid, opts.seed);

    let levels = LatticeLevels::new(spec, grid);
    let zs = region.sample(opts.samples);
    let separated = zs
        .iter()
        .all(|z| dist_to_spectrum(spec, *z) > opts.separation_factor * levels.local_spacing(z.re));
    let n = spec.spinor_dim();
    let cell = grid.cell_volume();
    let funcs = if case_a { Vec::new() } else { test_functions(grid, n, opts.test_functions, opts.seed) };
    let (a, b) = (2.0 * d / (d - s), 2.0 * (d + 1.0) / (d - 1.0));
    let (pa, pb) = (2.0 * d / (d + s), 2.0 * (d + 1.0) / (d + 3.0));

    let mut norms = Vec::with_capacity(zs.len());
    let mut rows = Vec::new();
    for (k, &z) in zs.iter().enumerate() {
        let h = ResolventHandle::new(spec, grid, z)?;
        let value = if case_a {
            if p == 1.0 {
                l1_linf_norm(&h)
            } else {
                let op = MultiplierOp::new(grid, h.multiplier());
                let mut req = OpNormRequest::new(p, conj(p), cell);
                req.spinor = n;
                req.iters = opts.iters;
                req.seed = opts.seed.wrapping_add(k as u64);
                empirical_opnorm(&op, &req)?.estimate
            }
        } else {
            let mut best = 0.0f64;
            for f in &funcs {
                let u = h.apply(f)?;
                let num = sum_space_norm(&u.pointwise_abs(), cell, a, b)?.value;
                let den = f.lp_norm(pa)?.max(f.lp_norm(pb)?);
                best = best.max(num / den);
            }
            best
        };
        rows.push(vec![z.re, z.im, value, dist_to_spectrum(spec, z)]);
        norms.push(value);
    }
    cert.push_series("norm_vs_z", rows);
    let ratio = norms.iter().copied().fold(0.0, f64::max) / median(&norms);
    cert.lhs = Some(ratio);
    cert.rhs = Some(opts.max_ratio);
    cert.constant = norms.iter().copied().reduce(f64::max);
    cert.checks.push(Check::at_most("max-over-median", ratio, opts.max_ratio));

    // L² → L² control: the multiplier supremum, i.e. one over the distance to the lattice spectrum
    let im_lo = zs.iter().map(|z| z.im.abs()).fold(f64::INFINITY, f64::min);
    if !(im_lo > 0.0) {
        return Err(Error::Domain("contrast scan needs Im z ≠ 0 on K".into()));
    }
    let mut res: Vec<f64> = zs.iter().map(|z| z.re).collect();
    res.sort_by(f64::total_cmp);
    res.dedup();
    let sign = if zs.iter().any(|z| z.im < 0.0) && zs.iter().all(|z| z.im <= 0.0) { -1.0 } else { 1.0 };
    let mut growth = Vec::new();
    let mut crows = Vec::new();
    for &x in &res {
        let near = ResolventHandle::new(spec, grid, C64::new(x, sign * im_lo))?.multiplier().sup_norm();
        let far = ResolventHandle::new(spec, grid, C64::new(x, sign * im_lo * opts.contrast_shrink))?.multiplier().sup_norm();
        growth.push(near / far);
        crows.push(vec![x, im_lo, near, far]);
    }
    cert.push_series("l2_contrast", crows);
    let g = median(&growth);
    cert.diag("l2_growth", g);
    cert.checks.push(Check::at_least("l2-contrast-growth", g, opts.min_growth));

    if !case_a {
        let z = zs[0];
        let h = ResolventHandle::new(spec, grid, z)?;
        let u = h.apply(&funcs[0])?.pointwise_abs();
        let best = sum_space_norm(&u, cell, a, b)?.value;
        let random = random_split_norms(&u, cell, a, b, opts.splits, opts.seed);
        let min_random = random.iter().copied().fold(f64::INFINITY, f64::min);
        let gap = (min_random - best) / best;
        cert.diag("split_gap", gap);
        cert.diag("split_optimized", best);
        cert.checks.push(Check::at_least("split-not-above-random", gap, -1e-12));
        cert.checks.push(Check::at_most("split-matches-random-min", gap.abs(), opts.split_tol));
    }

    if separated {
        cert.verdict = Verdict::from_checks(&cert.checks);
    } else {
        cert.notes.push("insufficient separation of K from the lattice spectrum on this grid".into());
    }
    Ok(cert)
}
