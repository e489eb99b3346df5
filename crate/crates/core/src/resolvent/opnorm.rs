//! Lower bounds for `L^p → L^{p'}` operator norms by Boyd's nonlinear power iteration,
//! and the sum-space norm `‖g‖_{L^a + L^b}`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Multiplier, TorusGrid};
use crate::linalg::{CMatrix, C64};

/// A linear map on `C^n` together with its adjoint for the standard inner product.
pub trait LinearOp: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[C64]) -> Vec<C64>;
    fn apply_adjoint(&self, x: &[C64]) -> Vec<C64>;
}

/// Matrix-backed operator.
pub struct DenseOp(pub CMatrix);

impl LinearOp for DenseOp {
    fn dim(&self) -> usize {
        self.0.ncols()
    }

    fn apply(&self, x: &[C64]) -> Vec<C64> {
        (&self.0 * nalgebra::DVector::from_column_slice(x)).as_slice().to_vec()
    }

    fn apply_adjoint(&self, x: &[C64]) -> Vec<C64> {
        (self.0.adjoint() * nalgebra::DVector::from_column_slice(x)).as_slice().to_vec()
    }
}

/// Fourier multiplier acting on grid vectors.
pub struct MultiplierOp {
    pub grid: TorusGrid,
    pub forward: Multiplier,
    pub adjoint: Multiplier,
}

impl MultiplierOp {
    pub fn new(grid: &TorusGrid, m: &Multiplier) -> Self {
        MultiplierOp {
            grid: grid.clone(),
            forward: m.clone(),
            adjoint: m.adjoint(),
        }
    }
}

impl LinearOp for MultiplierOp {
    fn dim(&self) -> usize {
        self.grid.sites() * self.forward.spinor()
    }

    fn apply(&self, x: &[C64]) -> Vec<C64> {
        self.forward.apply_raw(&self.grid, x)
    }

    fn apply_adjoint(&self, x: &[C64]) -> Vec<C64> {
        self.adjoint.apply_raw(&self.grid, x)
    }
}

/// Parameters of one norm estimation. `cell` is the measure of one site (`h^d`);
/// `spinor` groups consecutive entries into one pointwise Euclidean magnitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpNormRequest {
    pub p: f64,
    pub p_target: f64,
    pub iters: usize,
    pub seed: u64,
    pub cell: f64,
    pub spinor: usize,
}

impl OpNormRequest {
    pub fn new(p: f64, p_target: f64, cell: f64) -> Self {
        OpNormRequest {
            p,
            p_target,
            iters: 200,
            seed: 0,
            cell,
            spinor: 1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OpNormEstimate {
    /// Best (largest) value of `‖Ax‖_{p'}/‖x‖_p` encountered.
    pub estimate: f64,
    /// Best-so-far estimate after each iteration (nondecreasing).
    pub trace: Vec<f64>,
    pub converged: bool,
}

fn conj_exponent(p: f64) -> f64 {
    if p == 1.0 {
        f64::INFINITY
    } else if p.is_infinite() {
        1.0
    } else {
        p / (p - 1.0)
    }
}

/// Pointwise magnitudes of spinor groups.
fn magnitudes(x: &[C64], spinor: usize) -> Vec<f64> {
    x.chunks(spinor)
        .map(|c| c.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt())
        .collect()
}

fn counting_norm(x: &[C64], spinor: usize, p: f64) -> f64 {
    crate::lattice::lp_norm_of(&magnitudes(x, spinor), 1.0, p).expect("p >= 1")
}

/// Unit vector in `ℓ^{r*}` attaining `⟨s, v⟩ = ‖v‖_r`. For `r = ∞` a spike at the
/// first maximal site; for `r = 1` the phase vector (zero where `v` vanishes).
fn duality_map(v: &[C64], spinor: usize, r: f64) -> Vec<C64> {
    let mags = magnitudes(v, spinor);
    let mut out = vec![C64::new(0.0, 0.0); v.len()];
    if r.is_infinite() {
        let mut best = 0;
        for (i, &m) in mags.iter().enumerate() {
            if m > mags[best] {
                best = i;
            }
        }
        if mags[best] > 0.0 {
            for a in 0..spinor {
                out[best * spinor + a] = v[best * spinor + a] / mags[best];
            }
        }
        return out;
    }
    let norm = crate::lattice::lp_norm_of(&mags, 1.0, r).expect("r >= 1");
    if norm == 0.0 {
        return out;
    }
    for (i, &m) in mags.iter().enumerate() {
        if m == 0.0 {
            continue;
        }
        let w = (m / norm).powf(r - 1.0) / m;
        for a in 0..spinor {
            out[i * spinor + a] = v[i * spinor + a] * w;
        }
    }
    out
}

/// Boyd-style estimate of `‖A‖_{L^p → L^{p'}}`; always a lower bound.
pub fn empirical_opnorm(op: &dyn LinearOp, req: &OpNormRequest) -> Result<OpNormEstimate> {
    let (p, q) = (req.p, req.p_target);
    if !(1.0 <= p && p <= 2.0 && 2.0 <= q) {
        return Err(Error::InvalidExponent(format!(
            "need 1 <= p <= 2 <= p' <= inf, got p = {p}, p' = {q}"
        )));
    }
    if req.spinor == 0 || op.dim() % req.spinor != 0 {
        return Err(Error::Domain("operator dimension is not a multiple of the spinor size".into()));
    }
    let weight = req.cell.powf(1.0 / q - 1.0 / p);
    let pstar = conj_exponent(p);
    let qstar_map = q;
    let n = op.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(req.seed);
    let x0: Vec<C64> = (0..n)
        .map(|_| C64::new(1.0 + 0.5 * rng.random_range(-1.0..1.0), 0.5 * rng.random_range(-1.0..1.0)))
        .collect();
    let x0_norm = counting_norm(&x0, req.spinor, p);
    let mut x: Vec<C64> = x0.iter().map(|v| v / x0_norm).collect();
    let mut best: f64 = 0.0;
    let mut trace = Vec::with_capacity(req.iters);
    let mut converged = false;
    for _ in 0..req.iters.max(1) {
        let y = op.apply(&x);
        let est = counting_norm(&y, req.spinor, q);
        let previous = best;
        best = best.max(est);
        trace.push(best * weight);
        if est == 0.0 {
            converged = true;
            break;
        }
        let s = duality_map(&y, req.spinor, qstar_map);
        let z = op.apply_adjoint(&s);
        let z_norm = counting_norm(&z, req.spinor, pstar);
        let pairing: f64 = z.iter().zip(&x).map(|(a, b)| (a.conj() * b).re).sum();
        if z_norm <= pairing * (1.0 + 1e-13) || (best - previous).abs() <= 1e-15 * best && trace.len() > 2 {
            converged = true;
            break;
        }
        x = duality_map(&z, req.spinor, pstar);
    }
    Ok(OpNormEstimate {
        estimate: best * weight,
        trace,
        converged,
    })
}

/// One split `g = g₁ + g₂` of a sum-space norm evaluation.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SplitNorm {
    /// `‖g₁‖_a + ‖g₂‖_b`.
    pub value: f64,
    pub threshold: f64,
    /// Whether the large part of `g` went into `L^a`.
    pub large_in_a: bool,
    pub soft: bool,
}

fn split_value(abs: &[f64], cell: f64, a: f64, b: f64, tau: f64, large_in_a: bool, soft: bool, mix: f64) -> f64 {
    let mut big = Vec::with_capacity(abs.len());
    let mut small = Vec::with_capacity(abs.len());
    for &m in abs {
        let hard_big = if m > tau { m } else { 0.0 };
        let soft_big = (m - tau).max(0.0);
        let g1 = if soft { soft_big } else { mix * hard_big + (1.0 - mix) * soft_big };
        big.push(g1);
        small.push(m - g1);
    }
    let (pa, pb) = if large_in_a { (a, b) } else { (b, a) };
    let n1 = crate::lattice::lp_norm_of(&big, cell, pa).expect("exponent >= 1");
    let n2 = crate::lattice::lp_norm_of(&small, cell, pb).expect("exponent >= 1");
    n1 + n2
}

/// `‖g‖_{L^a + L^b} = inf_{g = g₁ + g₂} ‖g₁‖_a + ‖g₂‖_b`, searched over hard and soft
/// truncation levels of `|g|` (both assignments of the large part).
pub fn sum_space_norm(abs: &[f64], cell: f64, a: f64, b: f64) -> Result<SplitNorm> {
    if a < 1.0 || b < 1.0 {
        return Err(Error::InvalidExponent(format!("sum-space exponents {a}, {b} must be >= 1")));
    }
    if abs.is_empty() {
        return Err(Error::Empty("sum-space norm of an empty function".into()));
    }
    let mut levels: Vec<f64> = abs.to_vec();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    let stride = (levels.len() / 512).max(1);
    let mut candidates: Vec<f64> = levels.iter().copied().step_by(stride).collect();
    candidates.push(0.0);
    candidates.push(*levels.last().expect("nonempty"));
    let mut best = SplitNorm {
        value: f64::INFINITY,
        threshold: 0.0,
        large_in_a: true,
        soft: false,
    };
    for &tau in &candidates {
        for large_in_a in [true, false] {
            for soft in [false, true] {
                let v = split_value(abs, cell, a, b, tau, large_in_a, soft, 1.0);
                if v < best.value {
                    best = SplitNorm {
                        value: v,
                        threshold: tau,
                        large_in_a,
                        soft,
                    };
                }
            }
        }
    }
    // golden-section refinement of a soft level around the best candidate
    let top = *levels.last().expect("nonempty");
    let span = top / candidates.len() as f64 * 2.0;
    for large_in_a in [true, false] {
        let (mut lo, mut hi) = ((best.threshold - span).max(0.0), (best.threshold + span).min(top));
        let phi = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..60 {
            let m1 = hi - phi * (hi - lo);
            let m2 = lo + phi * (hi - lo);
            if split_value(abs, cell, a, b, m1, large_in_a, true, 1.0) < split_value(abs, cell, a, b, m2, large_in_a, true, 1.0) {
                hi = m2;
            } else {
                lo = m1;
            }
        }
        let tau = 0.5 * (lo + hi);
        let v = split_value(abs, cell, a, b, tau, large_in_a, true, 1.0);
        if v < best.value {
            best = SplitNorm {
                value: v,
                threshold: tau,
                large_in_a,
                soft: true,
            };
        }
    }
    Ok(best)
}

/// Values of `‖g₁‖_a + ‖g₂‖_b` over `count` random truncation splits (random level,
/// random hard/soft mixture, random assignment).
pub fn random_split_norms(abs: &[f64], cell: f64, a: f64, b: f64, count: usize, seed: u64) -> Vec<f64> {
    let top = abs.iter().copied().fold(0.0, f64::max);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let tau = top * rng.random_range(0.0..1.0f64).powi(2);
            let mix = rng.random_range(0.0..1.0);
            let large_in_a = rng.random_bool(0.5);
            split_value(abs, cell, a, b, tau, large_in_a, false, mix)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::resolvent::ResolventHandle;
    use crate::symbols::SymbolSpec;

    #[test]
    fn l2_norm_of_resolvent_is_multiplier_sup() {
        let g = TorusGrid::new(1, 128, 10.0).unwrap();
        let spec = SymbolSpec::fractional_laplacian(1.5, 1).unwrap();
        let z = C64::new(1.03, 0.2);
        let h = ResolventHandle::new(&spec, &g, z).unwrap();
        let op = MultiplierOp::new(&g, h.multiplier());
        let mut req = OpNormRequest::new(2.0, 2.0, g.cell_volume());
        req.iters = 2000;
        let est = empirical_opnorm(&op, &req).unwrap();
        let exact = h.multiplier().sup_norm();
        assert!((est.estimate - exact).abs() < 1e-8 * exact, "{} vs {exact}", est.estimate);
        assert!(est.trace.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn identity_norm_is_attained_by_a_spike() {
        let g = TorusGrid::new(1, 64, 4.0).unwrap();
        let one = Multiplier::scalar_fn(&g, |_| C64::new(1.0, 0.0));
        let op = MultiplierOp::new(&g, &one);
        for (p, q) in [(1.0, 2.0), (1.5, 3.0), (2.0, f64::INFINITY), (1.0, f64::INFINITY)] {
            let est = empirical_opnorm(&op, &OpNormRequest::new(p, q, g.cell_volume())).unwrap();
            // spike of height 1: ‖δ‖_q / ‖δ‖_p = h^{1/q - 1/p}
            let spike = g.cell_volume().powf(1.0 / q - 1.0 / p);
            assert!((est.estimate - spike).abs() < 1e-10 * spike, "p={p} q={q}");
        }
    }

    #[test]
    fn rank_one_norm_factorizes() {
        let n = 40;
        let u: Vec<C64> = (0..n).map(|i| C64::new((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos())).collect();
        let v: Vec<C64> = (0..n).map(|i| C64::new((i as f64 * 0.73).cos() + 0.2, -(i as f64 * 0.29).sin())).collect();
        let m = CMatrix::from_fn(n, n, |i, j| u[i] * v[j].conj());
        for (p, q) in [(1.0, 2.0), (1.25, 4.0), (2.0, 2.0), (1.5, f64::INFINITY)] {
            let est = empirical_opnorm(&DenseOp(m.clone()), &OpNormRequest::new(p, q, 1.0)).unwrap();
            let exact = counting_norm(&u, 1, q) * counting_norm(&v, 1, conj_exponent(p));
            assert!((est.estimate - exact).abs() < 1e-8 * exact, "p={p} q={q}: {} vs {exact}", est.estimate);
        }
    }

    #[test]
    fn exponent_range_is_checked() {
        let op = DenseOp(CMatrix::identity(4, 4));
        assert!(empirical_opnorm(&op, &OpNormRequest::new(3.0, 4.0, 1.0)).is_err());
        assert!(empirical_opnorm(&op, &OpNormRequest::new(1.0, 1.5, 1.0)).is_err());
    }

    #[test]
    fn sum_space_search_matches_random_splits() {
        let g = TorusGrid::new(2, 32, 8.0).unwrap();
        let abs: Vec<f64> = (0..g.sites())
            .map(|i| {
                let x = g.position(i);
                let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
                1.0 / (0.2 + r) + 0.3 * (-r).exp()
            })
            .collect();
        let (a, b) = (4.0, 6.0);
        let best = sum_space_norm(&abs, g.cell_volume(), a, b).unwrap();
        let random = random_split_norms(&abs, g.cell_volume(), a, b, 50, 11);
        let rmin = random.iter().copied().fold(f64::INFINITY, f64::min);
        assert!((best.value - rmin).abs() <= 0.05 * rmin, "{} vs {rmin}", best.value);
        // trivial splits bound the sum-space norm from above
        let na = crate::lattice::lp_norm_of(&abs, g.cell_volume(), a).unwrap();
        let nb = crate::lattice::lp_norm_of(&abs, g.cell_volume(), b).unwrap();
        assert!(best.value <= na.min(nb) + 1e-12);
    }
}
