//! Birman–Schwinger operators `|V|^{1/2}R₀(z)V^{1/2}`, Schatten norms, regularized
//! determinants and the zeros of `z ↦ det_n(I + M(z))`.
//!
//! Matrices act on the support of `V` only (sites with `|V| > 1e-16·max|V|`). Rows and
//! columns outside the support vanish identically, so singular values, nonzero
//! eigenvalues and determinants are unchanged by the compression.

mod contour;

pub use contour::{det_contour_roots, find_roots, find_roots_near_poles, winding_number, ContourOptions, ContourRoot, Rect};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{PotentialField, PotentialValues, TorusGrid};
use crate::linalg::{self, CMatrix, C64};
use crate::resolvent::ResolventHandle;
use crate::symbols::Symbol;

/// Relative threshold below which a site is dropped from the support of `V`.
pub const SUPPORT_THRESHOLD: f64 = 1e-16;

/// Relative threshold below which singular values count as zero in Schatten sums.
pub const SINGULAR_CUTOFF: f64 = 1e-13;

/// Placement of the two square-root factors around `R₀(z)`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OrderVariant {
    /// `|V|^{1/2} R₀(z) V^{1/2}`.
    #[default]
    AbsFirst,
    /// `V^{1/2} R₀(z) |V|^{1/2}`.
    SignedFirst,
}

/// `(|V|^{1/2}, V^{1/2})` with `V^{1/2}·|V|^{1/2} = V` pointwise.
///
/// Scalars: `|V|^{1/2} = √|V|`, `V^{1/2} = V/√|V|`. Matrices: with `V = U|V|`,
/// `|V|^{1/2} = (V^*V)^{1/4}` and `V^{1/2} = U|V|^{1/2}`.
pub fn half_potentials(v: &PotentialField) -> (PotentialField, PotentialField) {
    let with = |values| PotentialField {
        grid: v.grid.clone(),
        spinor: v.spinor,
        values,
    };
    match &v.values {
        PotentialValues::Scalar(vals) => {
            let (abs, signed): (Vec<C64>, Vec<C64>) = vals.iter().map(|&x| scalar_halves(x)).unzip();
            (with(PotentialValues::Scalar(abs)), with(PotentialValues::Scalar(signed)))
        }
        PotentialValues::Matrix(vals) => {
            let (abs, signed): (Vec<CMatrix>, Vec<CMatrix>) = vals.iter().map(right_halves).unzip();
            (with(PotentialValues::Matrix(abs)), with(PotentialValues::Matrix(signed)))
        }
    }
}

fn scalar_halves(x: C64) -> (C64, C64) {
    let r = x.norm();
    if r == 0.0 {
        return (C64::new(0.0, 0.0), C64::new(0.0, 0.0));
    }
    let root = r.sqrt();
    (C64::new(root, 0.0), x / root)
}

// V = U|V|: returns (|V|^{1/2}, U|V|^{1/2}).
fn right_halves(m: &CMatrix) -> (CMatrix, CMatrix) {
    let (u, p) = linalg::polar_right(m);
    let root = linalg::hermitian_function(&p, |x| x.max(0.0).sqrt());
    let signed = u * &root;
    (root, signed)
}

// V = |V^*|U: returns (|V^*|^{1/2}U, |V^*|^{1/2}).
fn left_halves(m: &CMatrix) -> (CMatrix, CMatrix) {
    let (p, u) = linalg::polar_left(m);
    let root = linalg::hermitian_function(&p, |x| x.max(0.0).sqrt());
    (&root * u, root)
}

#[derive(Debug, Clone)]
enum SiteFactors {
    Scalar(Vec<C64>),
    Matrix(Vec<CMatrix>),
}

/// Reusable data for assembling `M(z)` at many spectral parameters: the support of `V`,
/// the factors on it and the difference-index table of support pairs.
#[derive(Clone)]
pub struct BsAssembler<'a> {
    symbol: &'a dyn Symbol,
    grid: TorusGrid,
    spinor: usize,
    variant: OrderVariant,
    support: Vec<usize>,
    // M = left · R₀ · right
    left: SiteFactors,
    right: SiteFactors,
    diff: Vec<usize>,
}

impl std::fmt::Debug for BsAssembler<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BsAssembler")
            .field("grid", &self.grid)
            .field("spinor", &self.spinor)
            .field("variant", &self.variant)
            .field("support", &self.support.len())
            .finish()
    }
}

impl<'a> BsAssembler<'a> {
    pub fn new(symbol: &'a dyn Symbol, v: &PotentialField, variant: OrderVariant) -> Result<Self> {
        let grid = v.grid.clone();
        let spinor = symbol.spinor_dim();
        if symbol.dim() != grid.dim() {
            return Err(Error::GridMismatch(format!(
                "symbol in d = {} with a potential on a d = {} grid",
                symbol.dim(),
                grid.dim()
            )));
        }
        if v.spinor != spinor {
            return Err(Error::GridMismatch(format!(
                "potential with spinor dimension {} for a symbol with n = {spinor}",
                v.spinor
            )));
        }
        let abs = v.pointwise_abs();
        let vmax = abs.iter().copied().fold(0.0, f64::max);
        let support: Vec<usize> = (0..abs.len())
            .filter(|&i| vmax > 0.0 && abs[i] > SUPPORT_THRESHOLD * vmax)
            .collect();
        let (left, right) = match &v.values {
            PotentialValues::Scalar(vals) => {
                let (mut l, mut r) = (Vec::new(), Vec::new());
                for &i in &support {
                    let (a, s) = scalar_halves(vals[i]);
                    match variant {
                        OrderVariant::AbsFirst => {
                            l.push(a);
                            r.push(s);
                        }
                        OrderVariant::SignedFirst => {
                            l.push(s);
                            r.push(a);
                        }
                    }
                }
                (SiteFactors::Scalar(l), SiteFactors::Scalar(r))
            }
            PotentialValues::Matrix(vals) => {
                let (mut l, mut r) = (Vec::new(), Vec::new());
                for &i in &support {
                    let (a, b) = match variant {
                        OrderVariant::AbsFirst => right_halves(&vals[i]),
                        OrderVariant::SignedFirst => left_halves(&vals[i]),
                    };
                    l.push(a);
                    r.push(b);
                }
                (SiteFactors::Matrix(l), SiteFactors::Matrix(r))
            }
        };
        let coords: Vec<Vec<usize>> = support.iter().map(|&i| grid.site_coords(i)).collect();
        let n = grid.points_per_axis();
        let mut diff = Vec::with_capacity(support.len() * support.len());
        for ci in &coords {
            for cj in &coords {
                diff.push(ci.iter().zip(cj).fold(0, |acc, (&a, &b)| acc * n + (a + n - b) % n));
            }
        }
        Ok(BsAssembler {
            symbol,
            grid,
            spinor,
            variant,
            support,
            left,
            right,
            diff,
        })
    }

    pub fn symbol(&self) -> &'a dyn Symbol {
        self.symbol
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn variant(&self) -> OrderVariant {
        self.variant
    }

    /// Site indices retained in the compressed matrix.
    pub fn support(&self) -> &[usize] {
        &self.support
    }

    /// Dimension of the compressed matrix.
    pub fn dim(&self) -> usize {
        self.support.len() * self.spinor
    }

    /// Compressed `M(z)` in counting measure (kernel quadrature weights cancel).
    pub fn matrix(&self, z: C64) -> Result<CMatrix> {
        let handle = ResolventHandle::new(self.symbol, &self.grid, z)?;
        if self.support.is_empty() {
            return Ok(CMatrix::zeros(0, 0));
        }
        let kernel = handle.discrete_kernel();
        let s = self.support.len();
        let n = self.spinor;
        let mut m = CMatrix::zeros(s * n, s * n);
        match (&self.left, &self.right) {
            (SiteFactors::Scalar(l), SiteFactors::Scalar(r)) => {
                for p in 0..s {
                    for q in 0..s {
                        let dq = self.diff[p * s + q];
                        let w = l[p] * r[q];
                        for a in 0..n {
                            for b in 0..n {
                                m[(p * n + a, q * n + b)] = w * kernel[a * n + b][dq];
                            }
                        }
                    }
                }
            }
            (SiteFactors::Matrix(l), SiteFactors::Matrix(r)) => {
                for p in 0..s {
                    for q in 0..s {
                        let dq = self.diff[p * s + q];
                        let k = CMatrix::from_fn(n, n, |a, b| kernel[a * n + b][dq]);
                        let block = &l[p] * k * &r[q];
                        m.view_mut((p * n, q * n), (n, n)).copy_from(&block);
                    }
                }
            }
            _ => unreachable!("factors share a representation"),
        }
        Ok(m)
    }

    /// Assembles `M(z)` and caches its singular values.
    pub fn operator(&self, z: C64) -> Result<BSOperator> {
        let matrix = self.matrix(z)?;
        let singular_values = linalg::singular_values(&matrix);
        Ok(BSOperator {
            matrix,
            z,
            variant: self.variant,
            support: self.support.clone(),
            spinor: self.spinor,
            full_dim: self.grid.sites() * self.spinor,
            singular_values,
        })
    }

    /// `ln det_n(I + M(z))` through an LU factorization and trace powers.
    pub fn log_det(&self, z: C64, order: usize) -> Result<C64> {
        let m = self.matrix(z)?;
        log_det_regularized_lu(&m, order)
    }
}

/// Dense Birman–Schwinger matrix on the support of `V`, with cached singular values.
#[derive(Debug, Clone)]
pub struct BSOperator {
    pub matrix: CMatrix,
    pub z: C64,
    pub variant: OrderVariant,
    /// Grid sites spanned by the rows (each carrying `spinor` components).
    pub support: Vec<usize>,
    pub spinor: usize,
    /// `N^d·n`, the dimension before compression.
    pub full_dim: usize,
    singular_values: Vec<f64>,
}

impl BSOperator {
    /// Nonincreasing singular values.
    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    /// Operator norm `σ₁`.
    pub fn sigma1(&self) -> f64 {
        self.singular_values.first().copied().unwrap_or(0.0)
    }

    pub fn hilbert_schmidt(&self) -> f64 {
        self.matrix.norm()
    }

    pub fn eigenvalues(&self) -> Result<Vec<C64>> {
        linalg::eigenvalues(&self.matrix)
    }

    /// The uncompressed `N^d·n × N^d·n` matrix.
    pub fn expanded(&self) -> CMatrix {
        let n = self.spinor;
        let mut full = CMatrix::zeros(self.full_dim, self.full_dim);
        for (p, &i) in self.support.iter().enumerate() {
            for (q, &j) in self.support.iter().enumerate() {
                for a in 0..n {
                    for b in 0..n {
                        full[(i * n + a, j * n + b)] = self.matrix[(p * n + a, q * n + b)];
                    }
                }
            }
        }
        full
    }
}

/// Assembles `M(z)` for `V` on `grid`.
pub fn assemble_bs(
    symbol: &dyn Symbol,
    grid: &TorusGrid,
    v: &PotentialField,
    z: C64,
    variant: OrderVariant,
) -> Result<BSOperator> {
    if &v.grid != grid {
        return Err(Error::GridMismatch("potential sampled on a different grid".into()));
    }
    BsAssembler::new(symbol, v, variant)?.operator(z)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchattenReport {
    /// Exponent; `f64::INFINITY` for the operator norm.
    pub alpha: f64,
    pub norm: f64,
    /// Singular values above the cutoff.
    pub retained: usize,
}

/// `(Σ σ_j^α)^{1/α}` over singular values above `1e-13·σ₁`.
pub fn schatten_norm_of(sv: &[f64], alpha: f64) -> Result<SchattenReport> {
    if alpha.is_nan() || alpha < 1.0 {
        return Err(Error::InvalidExponent(format!("Schatten exponent {alpha} < 1")));
    }
    let s1 = sv.iter().copied().fold(0.0, f64::max);
    let kept: Vec<f64> = sv.iter().copied().filter(|&s| s > SINGULAR_CUTOFF * s1).collect();
    let norm = if kept.is_empty() {
        0.0
    } else if alpha.is_infinite() {
        s1
    } else {
        // scale by σ₁ against overflow for large α
        s1 * kept.iter().map(|s| (s / s1).powf(alpha)).sum::<f64>().powf(1.0 / alpha)
    };
    Ok(SchattenReport {
        alpha,
        norm,
        retained: kept.len(),
    })
}

pub fn schatten_norm(m: &BSOperator, alpha: f64) -> Result<SchattenReport> {
    schatten_norm_of(m.singular_values(), alpha)
}

/// `det_n(I + M)`, kept as log-magnitude and phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetValue {
    pub order: usize,
    pub value: C64,
    pub log_abs: f64,
    /// Phase in `(-π, π]`.
    pub arg: f64,
}

impl DetValue {
    fn from_log(order: usize, log: C64) -> Self {
        let arg = C64::from_polar(1.0, log.im).arg();
        let value = if log.re == f64::NEG_INFINITY {
            C64::new(0.0, 0.0)
        } else {
            C64::from_polar(log.re.exp(), arg)
        };
        DetValue {
            order,
            value,
            log_abs: log.re,
            arg,
        }
    }
}

fn check_order(order: usize) -> Result<()> {
    if order == 0 {
        return Err(Error::InvalidExponent("determinant order must be at least 1".into()));
    }
    Ok(())
}

/// `ln[(1+μ) exp(Σ_{k<n} (-1)^k μ^k / k)]`.
fn log_factor(mu: C64, order: usize) -> C64 {
    let one_plus = C64::new(1.0, 0.0) + mu;
    let mut acc = if one_plus.norm() == 0.0 {
        C64::new(f64::NEG_INFINITY, 0.0)
    } else {
        one_plus.ln()
    };
    let mut power = C64::new(1.0, 0.0);
    for k in 1..order {
        power *= mu;
        let sign = if k % 2 == 1 { -1.0 } else { 1.0 };
        acc += power * (sign / k as f64);
    }
    acc
}

/// `det_n(I + A)` of an arbitrary square matrix, from its eigenvalues.
pub fn regularized_det_matrix(a: &CMatrix, order: usize) -> Result<DetValue> {
    check_order(order)?;
    let mut log = C64::new(0.0, 0.0);
    for mu in linalg::eigenvalues(a)? {
        log += log_factor(mu, order);
    }
    Ok(DetValue::from_log(order, log))
}

pub fn regularized_det(m: &BSOperator, order: usize) -> Result<DetValue> {
    regularized_det_matrix(&m.matrix, order)
}

/// `ln det_n(I + A) = ln det(I + A) + Σ_{k<n} (-1)^k tr(A^k)/k`, LU based.
pub fn log_det_regularized_lu(a: &CMatrix, order: usize) -> Result<C64> {
    check_order(order)?;
    let n = a.nrows();
    let shifted = a + CMatrix::identity(n, n);
    let mut log = linalg::log_det(&shifted);
    for (k, tr) in linalg::trace_powers(a, order - 1).into_iter().enumerate() {
        let k = k + 1;
        let sign = if k % 2 == 1 { -1.0 } else { 1.0 };
        log += tr * (sign / k as f64);
    }
    Ok(log)
}

/// Constant `Γ_n` with `ln|det_n(I+A)| ≤ Γ_n ‖A‖_{𝔖^n}^n`: `1`, `1/2`, then `e(2 + ln n)`.
pub fn det_bound_constant(order: usize) -> f64 {
    match order {
        0 | 1 => 1.0,
        2 => 0.5,
        n => std::f64::consts::E * (2.0 + (n as f64).ln()),
    }
}

/// One point of a Schatten/determinant scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub re: f64,
    pub im: f64,
    pub sigma1: f64,
    pub schatten: f64,
    pub order: usize,
    pub log_abs_det: f64,
    /// `Γ_n ‖M(z)‖_{𝔖^n}^n`, the bound on `ln|det_n(I + M(z))|`.
    pub det_bound: f64,
}

/// `σ₁`, `‖M(z)‖_{𝔖^α}` and `ln|det_n(I + M(z))|` with `n = ⌈α⌉` at each point.
pub fn scan_points(assembler: &BsAssembler<'_>, points: &[C64], alpha: f64) -> Result<Vec<ScanRow>> {
    let order = alpha.ceil().max(1.0) as usize;
    points
        .iter()
        .map(|&z| {
            let m = assembler.operator(z)?;
            let sn = schatten_norm(&m, order as f64)?.norm;
            Ok(ScanRow {
                re: z.re,
                im: z.im,
                sigma1: m.sigma1(),
                schatten: schatten_norm(&m, alpha)?.norm,
                order,
                log_abs_det: regularized_det(&m, order)?.log_abs,
                det_bound: det_bound_constant(order) * sn.powi(order as i32),
            })
        })
        .collect()
}

/// Distance of `-1` from the spectrum of `M(z)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BsResidual {
    pub z: C64,
    /// `min_j |μ_j + 1|`, or `1` when `M(z) = 0`.
    pub residual: f64,
    /// Eigenvalue of `M(z)` closest to `-1` (zero for an empty support).
    pub nearest: C64,
    pub sigma1: f64,
}

pub fn bs_principle_check(symbol: &dyn Symbol, grid: &TorusGrid, v: &PotentialField, z: C64) -> Result<BsResidual> {
    if &v.grid != grid {
        return Err(Error::GridMismatch("potential sampled on a different grid".into()));
    }
    let assembler = BsAssembler::new(symbol, v, OrderVariant::AbsFirst)?;
    bs_residual(&assembler, z)
}

/// Same as [`bs_principle_check`] with a prepared assembler.
pub fn bs_residual(assembler: &BsAssembler<'_>, z: C64) -> Result<BsResidual> {
    let op = assembler.operator(z)?;
    let mut out = BsResidual {
        z,
        residual: 1.0,
        nearest: C64::new(0.0, 0.0),
        sigma1: op.sigma1(),
    };
    for mu in op.eigenvalues()? {
        let r = (mu + 1.0).norm();
        if r < out.residual {
            out.residual = r;
            out.nearest = mu;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::PotentialSpec;
    use crate::symbols::SymbolSpec;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn contour_scan_respects_the_determinant_bound() {
        let spec = SymbolSpec::fractional_laplacian(1.5, 1).unwrap();
        let grid = TorusGrid::new(1, 32, 10.0).unwrap();
        let v = PotentialSpec::gaussian(c(-0.8, 0.4), 1.0).sample(&grid, 1).unwrap();
        let asm = BsAssembler::new(&spec, &v, OrderVariant::AbsFirst).unwrap();
        let pts: Vec<C64> = (0..12).map(|k| C64::from_polar(0.5, 0.2 + 0.5 * k as f64)).collect();
        let rows = scan_points(&asm, &pts, 2.0).unwrap();
        assert_eq!(rows.len(), pts.len());
        for r in &rows {
            assert_eq!(r.order, 2);
            assert!(r.schatten >= r.sigma1 * (1.0 - 1e-12));
            assert!(r.log_abs_det <= r.det_bound + 1e-12, "{r:?}");
        }
    }

    fn random_matrix(n: usize, seed: u64, scale: f64) -> CMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        CMatrix::from_fn(n, n, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * scale)
    }

    fn well(grid: &TorusGrid, spinor: usize, amp: C64) -> PotentialField {
        PotentialField::from_fn(grid, spinor, |x| {
            let r2: f64 = x.iter().map(|v| v * v).sum();
            amp * (-r2).exp()
        })
        .unwrap()
    }

    #[test]
    fn negative_scalar_splits_into_real_factors() {
        let grid = TorusGrid::new(1, 8, 4.0).unwrap();
        let mut vals = vec![c(0.0, 0.0); 8];
        vals[3] = c(-4.0, 0.0);
        let v = PotentialField::scalar(&grid, 1, vals).unwrap();
        let (a, s) = half_potentials(&v);
        let (PotentialValues::Scalar(a), PotentialValues::Scalar(s)) = (a.values, s.values) else {
            panic!("scalar in, scalar out");
        };
        assert_eq!(a[3], c(2.0, 0.0));
        assert_eq!(s[3], c(-2.0, 0.0));
        assert_eq!(s[3] * a[3], c(-4.0, 0.0));
        assert_eq!(a[0], c(0.0, 0.0));
        assert_eq!(s[0], c(0.0, 0.0));
    }

    #[test]
    fn random_halves_multiply_back() {
        let grid = TorusGrid::new(1, 64, 8.0).unwrap();
        let v = PotentialSpec::RandomSeeded {
            seed: 3,
            count: 4,
            amplitude: 2.0,
            width: 0.7,
            spread: 2.0,
            phase: 0.0,
            max_phase: std::f64::consts::PI,
        }
        .sample(&grid, 1)
        .unwrap();
        let (a, s) = half_potentials(&v);
        let PotentialValues::Scalar(orig) = &v.values else { unreachable!() };
        let (PotentialValues::Scalar(a), PotentialValues::Scalar(s)) = (&a.values, &s.values) else {
            unreachable!()
        };
        for i in 0..64 {
            assert!((s[i] * a[i] - orig[i]).norm() < 1e-14);
        }

        let mats: Vec<CMatrix> = (0..64).map(|i| random_matrix(2, i as u64, 1.0)).collect();
        let v = PotentialField::matrix(&grid, mats.clone()).unwrap();
        let (a, s) = half_potentials(&v);
        for i in 0..64 {
            assert!((s.block(i) * a.block(i) - &mats[i]).norm() < 1e-12);
            let (y, x) = left_halves(&mats[i]);
            assert!((x * y - &mats[i]).norm() < 1e-12);
        }
    }

    #[test]
    fn zero_potential_gives_zero_operator() {
        let spec = SymbolSpec::fractional_laplacian(1.5, 1).unwrap();
        let grid = TorusGrid::new(1, 32, 8.0).unwrap();
        let v = PotentialField::zero(&grid, 1);
        let m = assemble_bs(&spec, &grid, &v, c(-1.0, 0.5), OrderVariant::AbsFirst).unwrap();
        assert!(m.singular_values().iter().all(|&s| s == 0.0));
        assert!(m.expanded().iter().all(|x| x.norm() == 0.0));
        let check = bs_principle_check(&spec, &grid, &v, c(-1.0, 0.5)).unwrap();
        assert_eq!(check.residual, 1.0);
    }

    #[test]
    fn single_site_potential_has_rank_at_most_n() {
        let spec = SymbolSpec::dirac_massive(2).unwrap();
        let grid = TorusGrid::new(2, 8, 4.0).unwrap();
        let mut vals = vec![c(0.0, 0.0); 64];
        vals[27] = c(1.5, -0.5);
        let v = PotentialField::scalar(&grid, 2, vals).unwrap();
        let m = assemble_bs(&spec, &grid, &v, c(0.2, 0.3), OrderVariant::AbsFirst).unwrap();
        let full = m.expanded();
        let sv = linalg::singular_values(&full);
        let rank = sv.iter().filter(|&&s| s > 1e-12 * sv[0]).count();
        assert!(rank <= 2);
        assert_eq!(m.matrix.nrows(), 2);
    }

    // Independent oracle: kernel by direct summation over modes, then the double sum
    // Σ h^{2d}|V(x)||V(y)||R₀(x−y)|².
    #[test]
    fn hilbert_schmidt_matches_kernel_double_sum() {
        let spec = SymbolSpec::fractional_laplacian(1.5, 1).unwrap();
        let (n, l) = (64usize, 10.0);
        let grid = TorusGrid::new(1, n, l).unwrap();
        let v = well(&grid, 1, c(-2.0, 1.0));
        let z = c(-0.7, 0.4);
        let m = assemble_bs(&spec, &grid, &v, z, OrderVariant::AbsFirst).unwrap();
        let h = l / n as f64;
        let kernel = |r: f64| -> C64 {
            let mut acc = c(0.0, 0.0);
            for k in -(n as i64 / 2)..(n as i64 / 2) {
                let xi = k as f64 / l;
                acc += C64::from_polar(1.0, 2.0 * std::f64::consts::PI * xi * r) / (xi.abs().powf(1.5) - z);
            }
            acc / l
        };
        let abs = v.pointwise_abs();
        let mut sum = 0.0;
        for i in 0..n {
            for j in 0..n {
                let r = grid.position(i)[0] - grid.position(j)[0];
                sum += h * h * abs[i] * abs[j] * kernel(r).norm_sqr();
            }
        }
        let hs2 = m.hilbert_schmidt().powi(2);
        assert!((hs2 - sum).abs() < 1e-8 * sum.max(1.0), "{hs2} vs {sum}");
        let sv_sum: f64 = m.singular_values().iter().map(|s| s * s).sum();
        assert!((sv_sum - sum).abs() < 1e-8 * sum.max(1.0));
        assert!(m.sigma1() <= m.hilbert_schmidt() * (1.0 + 1e-12));
    }

    #[test]
    fn order_variants_share_nonzero_spectrum() {
        for (spec, grid, spinor) in [
            (SymbolSpec::fractional_laplacian(1.5, 1).unwrap(), TorusGrid::new(1, 32, 8.0).unwrap(), 1),
            (SymbolSpec::dirac_massless(2).unwrap(), TorusGrid::new(2, 8, 4.0).unwrap(), 2),
        ] {
            let v = well(&grid, spinor, c(-1.0, 0.8));
            let z = c(0.3, 0.6);
            let mut spectra = Vec::new();
            for variant in [OrderVariant::AbsFirst, OrderVariant::SignedFirst] {
                let mut e = assemble_bs(&spec, &grid, &v, z, variant).unwrap().eigenvalues().unwrap();
                e.retain(|x| x.norm() > 1e-10);
                e.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
                spectra.push(e);
            }
            assert_eq!(spectra[0].len(), spectra[1].len());
            for (a, b) in spectra[0].iter().zip(&spectra[1]) {
                assert!((a - b).norm() < 1e-8);
            }
        }
    }

    #[test]
    fn matrix_potential_variants_share_spectrum() {
        let spec = SymbolSpec::dirac_massive(1).unwrap();
        let grid = TorusGrid::new(1, 16, 6.0).unwrap();
        let mats: Vec<CMatrix> = (0..16)
            .map(|i| {
                let x = grid.position(i)[0];
                random_matrix(2, 40 + i as u64, (-x * x).exp())
            })
            .collect();
        let v = PotentialField::matrix(&grid, mats).unwrap();
        let z = c(0.1, 0.4);
        let trace = |variant| {
            let m = assemble_bs(&spec, &grid, &v, z, variant).unwrap();
            linalg::trace_powers(&m.matrix, 3)
        };
        let (a, b) = (trace(OrderVariant::AbsFirst), trace(OrderVariant::SignedFirst));
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).norm() < 1e-10);
        }
    }

    #[test]
    fn schatten_norms_of_diagonal() {
        let sv = [4.0, 3.0];
        assert!((schatten_norm_of(&sv, 1.0).unwrap().norm - 7.0).abs() < 1e-14);
        assert!((schatten_norm_of(&sv, 2.0).unwrap().norm - 5.0).abs() < 1e-14);
        assert_eq!(schatten_norm_of(&sv, f64::INFINITY).unwrap().norm, 4.0);
        assert!(schatten_norm_of(&sv, 0.5).is_err());
        let tiny = schatten_norm_of(&[1.0, 1e-15], 1.0).unwrap();
        assert_eq!(tiny.retained, 1);
        assert_eq!(schatten_norm_of(&[], 2.0).unwrap().norm, 0.0);
    }

    #[test]
    fn determinant_orders() {
        let a = random_matrix(6, 9, 0.4);
        let plain = (&a + CMatrix::identity(6, 6)).determinant();
        let d1 = regularized_det_matrix(&a, 1).unwrap();
        assert!((d1.value - plain).norm() < 1e-12 * plain.norm());
        let diag = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![c(1.0, 0.0), c(-0.5, 0.0)]));
        let d2 = regularized_det_matrix(&diag, 2).unwrap();
        let closed = 2.0 * (-1.0f64).exp() * 0.5 * 0.5f64.exp();
        assert!((d2.value - c(closed, 0.0)).norm() < 1e-12);
        for order in 1..5 {
            let via_eig = regularized_det_matrix(&a, order).unwrap();
            let via_lu = log_det_regularized_lu(&a, order).unwrap();
            assert!((via_eig.log_abs - via_lu.re).abs() < 1e-10);
            assert!((C64::from_polar(1.0, via_eig.arg) - C64::from_polar(1.0, via_lu.im)).norm() < 1e-10);
        }
        assert!(regularized_det_matrix(&a, 0).is_err());
        let singular = CMatrix::identity(3, 3) * c(-1.0, 0.0);
        let d = regularized_det_matrix(&singular, 2).unwrap();
        assert_eq!(d.value, c(0.0, 0.0));
        assert_eq!(d.log_abs, f64::NEG_INFINITY);
    }

    #[test]
    fn residual_vanishes_at_hamiltonian_eigenvalue() {
        let spec = SymbolSpec::fractional_laplacian(1.5, 1).unwrap();
        let grid = TorusGrid::new(1, 32, 8.0).unwrap();
        let v = well(&grid, 1, c(-3.0, 0.5));
        let mut h = crate::lattice::Multiplier::from_fn(&grid, 1, |xi| spec.eval(xi)).dense_matrix(&grid);
        let PotentialValues::Scalar(vals) = &v.values else { unreachable!() };
        for (i, x) in vals.iter().enumerate() {
            h[(i, i)] += x;
        }
        let eig = linalg::eigenvalues(&h).unwrap();
        let z = eig.iter().copied().min_by(|a, b| a.re.total_cmp(&b.re)).unwrap();
        assert!(z.re < -0.1);
        let check = bs_principle_check(&spec, &grid, &v, z).unwrap();
        assert!(check.residual < 1e-6, "{check:?}");
        let off = bs_principle_check(&spec, &grid, &v, z + 0.3).unwrap();
        assert!(off.residual > 1e-3);
    }

    #[test]
    fn weak_coupling_stays_away_from_minus_one() {
        let spec = SymbolSpec::fractional_laplacian(1.5, 1).unwrap();
        let grid = TorusGrid::new(1, 32, 8.0).unwrap();
        let v = well(&grid, 1, c(-1.0, 0.5));
        let z = c(-0.5, 0.2);
        let s1 = assemble_bs(&spec, &grid, &v, z, OrderVariant::AbsFirst).unwrap().sigma1();
        let t = 0.5 / s1;
        let check = bs_principle_check(&spec, &grid, &v.scaled(t), z).unwrap();
        assert!(check.sigma1 < 1.0);
        assert!(check.residual >= 1.0 - check.sigma1 - 1e-12);
    }

    #[test]
    fn lattice_value_is_rejected() {
        let spec = SymbolSpec::fractional_laplacian(1.5, 1).unwrap();
        let grid = TorusGrid::new(1, 16, 4.0).unwrap();
        let v = well(&grid, 1, c(-1.0, 0.0));
        assert!(matches!(
            assemble_bs(&spec, &grid, &v, c(0.0, 0.0), OrderVariant::AbsFirst),
            Err(Error::NearLatticeSpectrum { .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn schatten_norms_are_monotone(seed in 0u64..1000, a1 in 1.0f64..4.0, gap in 0.1f64..4.0) {
            let sv = linalg::singular_values(&random_matrix(5, seed, 1.0));
            let lo = schatten_norm_of(&sv, a1).unwrap().norm;
            let hi = schatten_norm_of(&sv, a1 + gap).unwrap().norm;
            let op = schatten_norm_of(&sv, f64::INFINITY).unwrap().norm;
            prop_assert!(lo >= hi * (1.0 - 1e-12));
            prop_assert!(hi >= op * (1.0 - 1e-12));
        }

        #[test]
        fn determinant_obeys_schatten_bound(seed in 0u64..1000, order in 1usize..5, scale in 0.05f64..2.0) {
            let a = random_matrix(6, seed, scale);
            let d = regularized_det_matrix(&a, order).unwrap();
            let sv = linalg::singular_values(&a);
            let norm = schatten_norm_of(&sv, order as f64).unwrap().norm;
            prop_assert!(d.log_abs <= det_bound_constant(order) * norm.powi(order as i32) + 1e-10);
        }
    }
}
