//! Zeros of `h(z) = det_n(I + M(z))` inside rectangles: winding numbers by phase
//! tracking, adaptive bisection, secant polishing.

use std::cell::RefCell;
use std::collections::HashMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::BsAssembler;
use crate::error::{Error, Result};
use crate::linalg::C64;
use crate::spectra::LatticeLevels;

/// Closed axis-parallel rectangle `[re₀, re₁] × [im₀, im₁]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub re: [f64; 2],
    pub im: [f64; 2],
}

impl Rect {
    pub fn new(re0: f64, re1: f64, im0: f64, im1: f64) -> Result<Self> {
        if !(re0 < re1 && im0 < im1) || ![re0, re1, im0, im1].iter().all(|v| v.is_finite()) {
            return Err(Error::Domain(format!("degenerate rectangle [{re0}, {re1}] x [{im0}, {im1}]")));
        }
        Ok(Rect {
            re: [re0, re1],
            im: [im0, im1],
        })
    }

    pub fn contains(&self, z: C64) -> bool {
        self.re[0] <= z.re && z.re <= self.re[1] && self.im[0] <= z.im && z.im <= self.im[1]
    }

    pub fn center(&self) -> C64 {
        C64::new(0.5 * (self.re[0] + self.re[1]), 0.5 * (self.im[0] + self.im[1]))
    }

    pub fn width(&self) -> f64 {
        self.re[1] - self.re[0]
    }

    pub fn height(&self) -> f64 {
        self.im[1] - self.im[0]
    }

    fn grown(&self, frac: f64) -> Rect {
        let (dw, dh) = (frac * self.width(), frac * self.height());
        Rect {
            re: [self.re[0] - dw, self.re[1] + dw],
            im: [self.im[0] - dh, self.im[1] + dh],
        }
    }

    // Counter-clockwise corners.
    fn corners(&self) -> [C64; 4] {
        [
            C64::new(self.re[0], self.im[0]),
            C64::new(self.re[1], self.im[0]),
            C64::new(self.re[1], self.im[1]),
            C64::new(self.re[0], self.im[1]),
        ]
    }

    // Splits the longer side at `frac`.
    fn split(&self, frac: f64) -> [Rect; 2] {
        if self.width() >= self.height() {
            let cut = self.re[0] + frac * self.width();
            [
                Rect { re: [self.re[0], cut], im: self.im },
                Rect { re: [cut, self.re[1]], im: self.im },
            ]
        } else {
            let cut = self.im[0] + frac * self.height();
            [
                Rect { re: self.re, im: [self.im[0], cut] },
                Rect { re: self.re, im: [cut, self.im[1]] },
            ]
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContourOptions {
    /// Initial samples per edge.
    pub edge_points: usize,
    /// Largest accepted phase increment between neighbouring samples (radians).
    pub max_phase_step: f64,
    /// Limit on edge refinement levels.
    pub max_edge_depth: usize,
    /// Rectangles smaller than this (relative to the starting rectangle) stop bisecting.
    pub min_relative_size: f64,
    pub max_bisections: usize,
    pub polish_tol: f64,
    pub polish_iters: usize,
    /// Edge steps are kept below this fraction of the local length scale, when one is known.
    pub scale_fraction: f64,
}

impl Default for ContourOptions {
    fn default() -> Self {
        ContourOptions {
            edge_points: 24,
            max_phase_step: 0.5,
            max_edge_depth: 14,
            min_relative_size: 1e-9,
            max_bisections: 60,
            polish_tol: 1e-13,
            polish_iters: 80,
            scale_fraction: 0.25,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContourRoot {
    pub z: C64,
    /// Winding number of the enclosing rectangle.
    pub multiplicity: i64,
    /// Smallest rectangle known to contain the root.
    pub rect: Rect,
    /// False when bisection stopped at the size limit without a secant fix.
    pub polished: bool,
}

// log h with memoization: contour edges are shared between sibling rectangles.
// `scale(z)` bounds the distance from z to the nearest pole; a phase step that is small
// at the endpoints can still hide a full turn when the segment is longer than that.
struct LogH<'f> {
    f: &'f dyn Fn(C64) -> Result<C64>,
    scale: Option<&'f dyn Fn(C64) -> f64>,
    cache: RefCell<HashMap<(u64, u64), C64>>,
}

impl<'f> LogH<'f> {
    fn new(f: &'f dyn Fn(C64) -> Result<C64>, scale: Option<&'f dyn Fn(C64) -> f64>) -> Self {
        LogH {
            f,
            scale,
            cache: RefCell::new(HashMap::new()),
        }
    }

    fn resolved(&self, a: C64, b: C64, frac: f64) -> bool {
        self.scale.is_none_or(|s| (b - a).norm() <= frac * s(a).min(s(b)))
    }

    fn eval(&self, z: C64) -> Result<C64> {
        let key = (z.re.to_bits(), z.im.to_bits());
        if let Some(v) = self.cache.borrow().get(&key) {
            return Ok(*v);
        }
        let v = (self.f)(z)?;
        if v.re.is_nan() || v.im.is_nan() {
            return Err(Error::Domain(format!("log h({z}) is not a number")));
        }
        self.cache.borrow_mut().insert(key, v);
        Ok(v)
    }
}

fn wrap(delta: f64) -> f64 {
    let mut d = delta % (2.0 * PI);
    if d > PI {
        d -= 2.0 * PI;
    } else if d <= -PI {
        d += 2.0 * PI;
    }
    d
}

fn edge_phase(h: &LogH<'_>, a: C64, b: C64, opts: &ContourOptions) -> Result<f64> {
    let mut total = 0.0;
    let n = opts.edge_points.max(2);
    let mut prev_z = a;
    let mut prev = h.eval(a)?;
    for k in 1..=n {
        let z = a + (b - a) * (k as f64 / n as f64);
        let v = h.eval(z)?;
        total += segment_phase(h, prev_z, prev, z, v, opts, 0)?;
        prev_z = z;
        prev = v;
    }
    Ok(total)
}

fn segment_phase(h: &LogH<'_>, a: C64, fa: C64, b: C64, fb: C64, opts: &ContourOptions, depth: usize) -> Result<f64> {
    if fa.re == f64::NEG_INFINITY || fb.re == f64::NEG_INFINITY {
        return Err(Error::Domain(format!("contour passes through a zero near {a}")));
    }
    let d = wrap(fb.im - fa.im);
    if d.abs() <= opts.max_phase_step && h.resolved(a, b, opts.scale_fraction) {
        return Ok(d);
    }
    if depth >= opts.max_edge_depth {
        return Err(Error::Domain(format!(
            "phase of h unresolved between {a} and {b}; a zero lies on or next to the contour"
        )));
    }
    let m = 0.5 * (a + b);
    let fm = h.eval(m)?;
    Ok(segment_phase(h, a, fa, m, fm, opts, depth + 1)? + segment_phase(h, m, fm, b, fb, opts, depth + 1)?)
}

fn winding_of(h: &LogH<'_>, rect: &Rect, opts: &ContourOptions) -> Result<i64> {
    let c = rect.corners();
    let mut total = 0.0;
    for k in 0..4 {
        total += edge_phase(h, c[k], c[(k + 1) % 4], opts)?;
    }
    let w = total / (2.0 * PI);
    if (w - w.round()).abs() > 0.2 {
        return Err(Error::Domain(format!("non-integer winding {w:.3} on {rect:?}")));
    }
    Ok(w.round() as i64)
}

/// Winding number of `h` around the boundary of `rect`, given `z ↦ ln h(z)`.
pub fn winding_number(log_h: &dyn Fn(C64) -> Result<C64>, rect: &Rect, opts: &ContourOptions) -> Result<i64> {
    winding_of(&LogH::new(log_h, None), rect, opts)
}

// Secant iteration on h scaled by its size at the starting point.
fn polish(h: &LogH<'_>, rect: &Rect, opts: &ContourOptions) -> Result<Option<C64>> {
    let mut z0 = rect.center();
    let scale = h.eval(z0)?.re;
    let value = |z: C64| -> Result<C64> {
        let l = (h.f)(z)?;
        Ok(if l.re == f64::NEG_INFINITY {
            C64::new(0.0, 0.0)
        } else {
            (l - scale).exp()
        })
    };
    let size = rect.width().max(rect.height());
    let mut z1 = z0 + C64::new(1e-3 * size, 0.7e-3 * size);
    let (mut f0, mut f1) = (value(z0)?, value(z1)?);
    let inside = rect.grown(0.05);
    for _ in 0..opts.polish_iters {
        if f1.norm() == 0.0 {
            return Ok(inside.contains(z1).then_some(z1));
        }
        let denom = f1 - f0;
        if denom.norm() == 0.0 {
            return Ok(None);
        }
        let z2 = z1 - f1 * (z1 - z0) / denom;
        if !(z2.re.is_finite() && z2.im.is_finite()) || !inside.contains(z2) {
            return Ok(None);
        }
        let step = (z2 - z1).norm();
        z0 = z1;
        f0 = f1;
        z1 = z2;
        f1 = value(z1)?;
        if step <= opts.polish_tol * z1.norm().max(1.0) {
            return Ok(Some(z1));
        }
    }
    Ok(None)
}

/// Zeros of `h` inside the given rectangles, from `z ↦ ln h(z)`.
pub fn find_roots(log_h: &dyn Fn(C64) -> Result<C64>, rects: &[Rect], opts: &ContourOptions) -> Result<Vec<ContourRoot>> {
    roots_in(&LogH::new(log_h, None), rects, opts)
}

/// As [`find_roots`], with `pole_distance(z)` a lower bound for the distance from `z`
/// to the poles of `h`; edges are sampled finely enough near them.
pub fn find_roots_near_poles(
    log_h: &dyn Fn(C64) -> Result<C64>,
    pole_distance: &dyn Fn(C64) -> f64,
    rects: &[Rect],
    opts: &ContourOptions,
) -> Result<Vec<ContourRoot>> {
    roots_in(&LogH::new(log_h, Some(pole_distance)), rects, opts)
}

fn roots_in(h: &LogH<'_>, rects: &[Rect], opts: &ContourOptions) -> Result<Vec<ContourRoot>> {
    let mut roots = Vec::new();
    for rect in rects {
        let count = winding_of(h, rect, opts)?;
        if count < 0 {
            return Err(Error::Domain(format!("negative winding {count}: h has poles inside {rect:?}")));
        }
        let min_size = opts.min_relative_size * rect.width().max(rect.height());
        let mut stack = vec![(*rect, count, 0usize)];
        while let Some((r, k, depth)) = stack.pop() {
            if k == 0 {
                continue;
            }
            if k == 1 {
                if let Some(z) = polish(h, &r, opts)? {
                    roots.push(ContourRoot {
                        z,
                        multiplicity: 1,
                        rect: r,
                        polished: true,
                    });
                    continue;
                }
            }
            if r.width().max(r.height()) < min_size || depth >= opts.max_bisections {
                roots.push(ContourRoot {
                    z: r.center(),
                    multiplicity: k,
                    rect: r,
                    polished: false,
                });
                continue;
            }
            // off-centre cuts, retried if the children disagree with the parent
            let mut split = None;
            for frac in [0.5137, 0.4621, 0.5733] {
                let [a, b] = r.split(frac);
                if let (Ok(ka), Ok(kb)) = (winding_of(h, &a, opts), winding_of(h, &b, opts)) {
                    if ka + kb == k && ka >= 0 && kb >= 0 {
                        split = Some([(a, ka), (b, kb)]);
                        break;
                    }
                }
            }
            let Some(children) = split else {
                return Err(Error::Domain(format!("inconsistent winding numbers while bisecting {r:?}")));
            };
            for (c, kc) in children {
                stack.push((c, kc, depth + 1));
            }
        }
    }
    roots.sort_by(|a, b| a.z.re.total_cmp(&b.z.re).then(a.z.im.total_cmp(&b.z.im)));
    Ok(roots)
}

/// Zeros of `z ↦ det_n(I + M(z))` inside the rectangles, which must not contain lattice
/// values of the symbol.
///
/// `det_n(I+M) = det(I+M)·exp(Σ_{k<n} (-1)^k tr(M^k)/k)` and the exponent is single valued
/// away from the lattice values, so both factors of `h` have the same zeros and the same
/// winding on every admissible contour. Phases are tracked on `ln det(I+M)`, whose only
/// singularities are simple poles; the exponential factor has essential singularities
/// at the poles and its phase turns too fast to sample near the real axis.
pub fn det_contour_roots(
    assembler: &BsAssembler<'_>,
    order: usize,
    rects: &[Rect],
    opts: &ContourOptions,
) -> Result<Vec<ContourRoot>> {
    if order == 0 {
        return Err(Error::Domain("determinant order must be at least 1".into()));
    }
    let levels = LatticeLevels::new(assembler.symbol(), assembler.grid());
    for r in rects {
        if let Some(v) = levels.levels().iter().find(|&&v| r.contains(C64::new(v, 0.0))) {
            return Err(Error::Domain(format!("{r:?} contains the lattice value {v}")));
        }
    }
    let f = |z: C64| assembler.log_det(z, 1);
    let dist = |z: C64| levels.distance(z);
    find_roots_near_poles(&f, &dist, rects, opts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn polynomial_roots_are_found() {
        let zeros = [c(0.3, 0.2), c(-0.5, 0.7), c(0.31, 0.25), c(2.0, 2.0)];
        let f = |z: C64| -> Result<C64> { Ok(zeros.iter().map(|w| (z - w).ln()).sum()) };
        let rect = Rect::new(-1.0, 1.0, -1.0, 1.0).unwrap();
        let opts = ContourOptions::default();
        assert_eq!(winding_number(&f, &rect, &opts).unwrap(), 3);
        let roots = find_roots(&f, &[rect], &opts).unwrap();
        assert_eq!(roots.len(), 3);
        for r in &roots {
            assert!(r.polished);
            assert!(zeros.iter().any(|w| (w - r.z).norm() < 1e-12), "{r:?}");
        }
    }

    #[test]
    fn double_root_reports_multiplicity() {
        let f = |z: C64| -> Result<C64> { Ok((z - c(0.1, 0.1)).ln() * 2.0) };
        let roots = find_roots(&f, &[Rect::new(-1.0, 1.0, -1.0, 1.0).unwrap()], &ContourOptions::default()).unwrap();
        let total: i64 = roots.iter().map(|r| r.multiplicity).sum();
        assert_eq!(total, 2);
        assert!(roots.iter().all(|r| (r.z - c(0.1, 0.1)).norm() < 1e-6));
    }

    #[test]
    fn root_free_rectangle_is_empty() {
        let f = |z: C64| -> Result<C64> { Ok((z - c(5.0, 0.0)).ln()) };
        assert!(find_roots(&f, &[Rect::new(-1.0, 1.0, -1.0, 1.0).unwrap()], &ContourOptions::default())
            .unwrap()
            .is_empty());
        assert!(Rect::new(1.0, 0.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn essential_singularity_next_to_the_contour() {
        // exp(c/(z - p)) contributes no zeros but turns the phase quickly near p
        let p = c(1.02, 0.0);
        let f = |z: C64| -> Result<C64> { Ok((z - c(0.3, 0.2)).ln() + c(0.02, 0.0) / (z - p)) };
        let dist = |z: C64| (z - p).norm();
        let rect = Rect::new(-1.0, 1.0, -1.0, 1.0).unwrap();
        let roots = find_roots_near_poles(&f, &dist, &[rect], &ContourOptions::default()).unwrap();
        assert_eq!(roots.len(), 1);
        assert!((roots[0].z - c(0.3, 0.2)).norm() < 1e-10);
    }

    #[test]
    fn det_roots_are_the_eigenvalues_off_the_axis() {
        use crate::lattice::{PotentialSpec, TorusGrid};
        use crate::spectra::{refined_spectrum, Threshold};
        use crate::symbols::SymbolSpec;
        use crate::birman_schwinger::OrderVariant;
        let spec = SymbolSpec::fractional_laplacian(1.5, 1).unwrap();
        let grid = TorusGrid::new(1, 64, 16.0).unwrap();
        let pot = PotentialSpec::gaussian(c(-0.8, 0.3), 1.0);
        let discrete: Vec<C64> = refined_spectrum(&spec, &grid, &pot, false).unwrap().discrete().map(|p| p.z).collect();
        assert!(!discrete.is_empty());
        let v = pot.sample(&grid, 1).unwrap();
        let asm = BsAssembler::new(&spec, &v, OrderVariant::AbsFirst).unwrap();
        let eta = Threshold::local(&spec, &grid).eta(c(0.0, 0.0));
        let rects = [Rect::new(-3.0, -eta, -2.0, 2.0).unwrap()];
        let roots = det_contour_roots(&asm, 2, &rects, &ContourOptions::default()).unwrap();
        let inside: Vec<&C64> = discrete.iter().filter(|z| rects[0].contains(**z)).collect();
        assert_eq!(roots.len(), inside.len());
        for r in &roots {
            assert!(inside.iter().any(|z| (**z - r.z).norm() < 1e-8), "{r:?}");
        }
        // a rectangle over the lattice values is refused
        assert!(det_contour_roots(&asm, 2, &[Rect::new(-1.0, 1.0, -1.0, 1.0).unwrap()], &ContourOptions::default()).is_err());
    }

    #[test]
    fn poles_are_detected() {
        let f = |z: C64| -> Result<C64> { Ok(-(z - c(0.2, 0.0)).ln()) };
        assert!(find_roots(&f, &[Rect::new(-1.0, 1.0, -1.0, 1.0).unwrap()], &ContourOptions::default()).is_err());
    }
}
