//! Potentials sampled on a torus grid and the potential file format.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{lp_norm_of, GridSpec, TorusGrid};
use crate::error::{Error, Result};
use crate::linalg::{CMatrix, C64};

/// Samples of `V`: a complex scalar per site (acting as `V·I_n`), or an `n×n` matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum PotentialValues {
    Scalar(Vec<C64>),
    Matrix(Vec<CMatrix>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PotentialField {
    pub grid: TorusGrid,
    pub spinor: usize,
    pub values: PotentialValues,
}

impl PotentialField {
    pub fn scalar(grid: &TorusGrid, spinor: usize, values: Vec<C64>) -> Result<Self> {
        if values.len() != grid.sites() {
            return Err(Error::GridMismatch(format!(
                "{} potential values for {} sites",
                values.len(),
                grid.sites()
            )));
        }
        if values.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::InvalidPotential("non-finite potential value".into()));
        }
        Ok(PotentialField {
            grid: grid.clone(),
            spinor,
            values: PotentialValues::Scalar(values),
        })
    }

    pub fn matrix(grid: &TorusGrid, values: Vec<CMatrix>) -> Result<Self> {
        if values.len() != grid.sites() {
            return Err(Error::GridMismatch(format!(
                "{} potential values for {} sites",
                values.len(),
                grid.sites()
            )));
        }
        let n = values.first().map(|m| m.nrows()).unwrap_or(1);
        for m in &values {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::InvalidPotential("inconsistent matrix sizes".into()));
            }
            if m.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
                return Err(Error::InvalidPotential("non-finite potential value".into()));
            }
        }
        Ok(PotentialField {
            grid: grid.clone(),
            spinor: n,
            values: PotentialValues::Matrix(values),
        })
    }

    pub fn zero(grid: &TorusGrid, spinor: usize) -> Self {
        PotentialField {
            grid: grid.clone(),
            spinor,
            values: PotentialValues::Scalar(vec![C64::new(0.0, 0.0); grid.sites()]),
        }
    }

    pub fn from_fn(grid: &TorusGrid, spinor: usize, f: impl Fn(&[f64]) -> C64) -> Result<Self> {
        let v = (0..grid.sites()).map(|i| f(&grid.position(i))).collect();
        Self::scalar(grid, spinor, v)
    }

    /// Pointwise magnitude: `|V(x)|`, or the operator norm for matrix values.
    pub fn pointwise_abs(&self) -> Vec<f64> {
        match &self.values {
            PotentialValues::Scalar(v) => v.iter().map(|z| z.norm()).collect(),
            PotentialValues::Matrix(v) => v
                .iter()
                .map(|m| crate::linalg::singular_values(m).first().copied().unwrap_or(0.0))
                .collect(),
        }
    }

    pub fn lp_norm(&self, p: f64) -> Result<f64> {
        lp_norm_of(&self.pointwise_abs(), self.grid.cell_volume(), p)
    }

    pub fn sup_norm(&self) -> f64 {
        self.pointwise_abs().into_iter().fold(0.0, f64::max)
    }

    /// `t·V`.
    pub fn scaled(&self, t: f64) -> Self {
        let values = match &self.values {
            PotentialValues::Scalar(v) => PotentialValues::Scalar(v.iter().map(|z| z * t).collect()),
            PotentialValues::Matrix(v) => PotentialValues::Matrix(v.iter().map(|m| m * C64::new(t, 0.0)).collect()),
        };
        PotentialField {
            grid: self.grid.clone(),
            spinor: self.spinor,
            values,
        }
    }

    /// Same samples placed on another grid with the same number of sites.
    pub fn on_grid(&self, grid: &TorusGrid) -> Result<Self> {
        if grid.sites() != self.grid.sites() {
            return Err(Error::GridMismatch("site counts differ".into()));
        }
        let mut out = self.clone();
        out.grid = grid.clone();
        Ok(out)
    }

    /// `V(x)` as an `n×n` matrix at one site.
    pub fn block(&self, site: usize) -> CMatrix {
        match &self.values {
            PotentialValues::Scalar(v) => CMatrix::identity(self.spinor, self.spinor) * v[site],
            PotentialValues::Matrix(v) => v[site].clone(),
        }
    }

    /// Absolute slack for sign tests on sampled values: a few ulps of `sup |V|`.
    pub fn roundoff_tol(&self) -> f64 {
        64.0 * f64::EPSILON * self.sup_norm()
    }

    /// True when `V = iW` with `W` (Hermitian) positive semidefinite at every site.
    pub fn is_imaginary_nonnegative(&self, tol: f64) -> bool {
        match &self.values {
            PotentialValues::Scalar(v) => v.iter().all(|z| z.re.abs() <= tol && z.im >= -tol),
            PotentialValues::Matrix(v) => v.iter().all(|m| {
                let w = m * C64::new(0.0, -1.0);
                if (&w - w.adjoint()).norm() > tol {
                    return false;
                }
                let h = (&w + w.adjoint()) * C64::new(0.5, 0.0);
                let herm = nalgebra::DMatrix::from_fn(h.nrows(), h.ncols(), |i, j| h[(i, j)]);
                herm.symmetric_eigenvalues().iter().all(|&l| l >= -tol)
            }),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.sup_norm() == 0.0
    }
}

/// Closed-form potential families and raw tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PotentialSpec {
    Zero,
    /// `A·exp(-|x-c|²/w²)`; `amplitude = [re, im]`.
    Gaussian {
        amplitude: [f64; 2],
        width: f64,
        #[serde(default)]
        center: Vec<f64>,
    },
    /// `A` inside the ball `|x-c| < radius`.
    Step {
        amplitude: [f64; 2],
        radius: f64,
        #[serde(default)]
        center: Vec<f64>,
    },
    /// `A/sqrt(|x-c|² + a²)`.
    CoulombRegularized {
        amplitude: [f64; 2],
        softening: f64,
        #[serde(default)]
        center: Vec<f64>,
    },
    /// Sum of `count` Gaussians with seeded random centers (within `spread` of the
    /// origin), moduli in `[0, amplitude]` and phases within `max_phase` of `phase`.
    RandomSeeded {
        seed: u64,
        count: usize,
        amplitude: f64,
        width: f64,
        spread: f64,
        #[serde(default)]
        phase: f64,
        #[serde(default)]
        max_phase: f64,
    },
    /// Row-major complex table `[[re, im], …]`, one entry per site.
    Values { values: Vec<[f64; 2]> },
}

impl PotentialSpec {
    pub fn gaussian(amplitude: C64, width: f64) -> Self {
        PotentialSpec::Gaussian {
            amplitude: [amplitude.re, amplitude.im],
            width,
            center: vec![],
        }
    }

    /// Samples the family on `grid` as a scalar potential acting on `spinor` components.
    pub fn sample(&self, grid: &TorusGrid, spinor: usize) -> Result<PotentialField> {
        let d = grid.dim();
        let center = |c: &Vec<f64>| -> Result<Vec<f64>> {
            match c.len() {
                0 => Ok(vec![0.0; d]),
                k if k == d => Ok(c.clone()),
                k => Err(Error::InvalidPotential(format!("center has {k} coordinates, grid has d = {d}"))),
            }
        };
        let dist2 = |x: &[f64], c: &[f64]| x.iter().zip(c).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        let amp = |a: &[f64; 2]| C64::new(a[0], a[1]);
        match self {
            PotentialSpec::Zero => Ok(PotentialField::zero(grid, spinor)),
            PotentialSpec::Gaussian { amplitude, width, center: c } => {
                positive("width", *width)?;
                let c = center(c)?;
                let a = amp(amplitude);
                PotentialField::from_fn(grid, spinor, |x| a * (-dist2(x, &c) / (width * width)).exp())
            }
            PotentialSpec::Step { amplitude, radius, center: c } => {
                positive("radius", *radius)?;
                let c = center(c)?;
                let a = amp(amplitude);
                PotentialField::from_fn(grid, spinor, |x| {
                    if dist2(x, &c) < radius * radius {
                        a
                    } else {
                        C64::new(0.0, 0.0)
                    }
                })
            }
            PotentialSpec::CoulombRegularized { amplitude, softening, center: c } => {
                positive("softening", *softening)?;
                let c = center(c)?;
                let a = amp(amplitude);
                PotentialField::from_fn(grid, spinor, |x| a / (dist2(x, &c) + softening * softening).sqrt())
            }
            PotentialSpec::RandomSeeded {
                seed,
                count,
                amplitude,
                width,
                spread,
                phase,
                max_phase,
            } => {
                positive("width", *width)?;
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let wells: Vec<(C64, Vec<f64>)> = (0..*count)
                    .map(|_| {
                        let modulus = amplitude * rng.random_range(0.0..=1.0);
                        let arg = phase + max_phase * rng.random_range(-1.0..=1.0);
                        let c: Vec<f64> = (0..d).map(|_| spread * rng.random_range(-1.0..=1.0)).collect();
                        (C64::from_polar(modulus, arg), c)
                    })
                    .collect();
                PotentialField::from_fn(grid, spinor, |x| {
                    wells
                        .iter()
                        .map(|(a, c)| a * (-dist2(x, c) / (width * width)).exp())
                        .sum()
                })
            }
            PotentialSpec::Values { values } => {
                let table: Vec<C64> = values.iter().map(|v| C64::new(v[0], v[1])).collect();
                if table.len() == grid.sites() {
                    return PotentialField::scalar(grid, spinor, table);
                }
                // a table for a coarser grid with the same side: piecewise constant per cell
                let n = grid.points_per_axis();
                let n0 = (table.len() as f64).powf(1.0 / d as f64).round() as usize;
                if n0 == 0 || n0.pow(d as u32) != table.len() || n % n0 != 0 {
                    return Err(Error::GridMismatch(format!("{} potential values do not fit {} sites", table.len(), grid.sites())));
                }
                let r = n / n0;
                let up = (0..grid.sites())
                    .map(|site| {
                        let idx = grid.site_coords(site).iter().fold(0, |acc, &j| acc * n0 + j / r);
                        table[idx]
                    })
                    .collect();
                PotentialField::scalar(grid, spinor, up)
            }
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidPotential(format!("{name} = {v} must be positive")))
    }
}

/// Potential file: a `[grid]` header (`d`, `N`, `L`) and a `[potential]` block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialFile {
    pub grid: GridSpec,
    pub potential: PotentialSpec,
}

impl PotentialFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("potential files always serialize")
    }

    /// Builds the grid and samples the potential.
    pub fn realize(&self, spinor: usize) -> Result<(TorusGrid, PotentialField)> {
        let grid = TorusGrid::from_spec(self.grid)?;
        let field = self.potential.sample(&grid, spinor)?;
        Ok((grid, field))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn value_tables_upsample_to_refined_grids() {
        let g = TorusGrid::new(2, 8, 4.0).unwrap();
        let values: Vec<[f64; 2]> = (0..64).map(|k| [k as f64, 0.0]).collect();
        let spec = PotentialSpec::Values { values };
        let fine = spec.sample(&g.refined().unwrap(), 1).unwrap();
        let PotentialValues::Scalar(v) = &fine.values else { panic!() };
        // fine site (2i+a, 2j+b) carries coarse value 8i + j
        assert_eq!(v[fine.grid.site_index(&[5, 9])].re, (2 * 8 + 4) as f64);
        assert_eq!(v[fine.grid.site_index(&[4, 8])].re, (2 * 8 + 4) as f64);
        assert!(spec.sample(&TorusGrid::new(2, 12, 4.0).unwrap(), 1).is_err());
    }

    #[test]
    fn families_sample_expected_values() {
        let g = TorusGrid::new(1, 16, 8.0).unwrap();
        let v = PotentialSpec::gaussian(C64::new(-2.0, 0.5), 1.0).sample(&g, 1).unwrap();
        let PotentialValues::Scalar(vals) = &v.values else { panic!() };
        assert_eq!(vals[8], C64::new(-2.0, 0.5));
        let step = PotentialSpec::Step {
            amplitude: [1.0, 0.0],
            radius: 1.2,
            center: vec![],
        };
        let s = step.sample(&g, 1).unwrap();
        assert!((s.lp_norm(1.0).unwrap() - 5.0 * 0.5).abs() < 1e-14);
        let bad = PotentialSpec::Gaussian {
            amplitude: [1.0, 0.0],
            width: 1.0,
            center: vec![0.0, 0.0],
        };
        assert!(bad.sample(&g, 1).is_err());
    }

    #[test]
    fn random_family_is_seeded() {
        let g = TorusGrid::new(2, 16, 8.0).unwrap();
        let spec = PotentialSpec::RandomSeeded {
            seed: 5,
            count: 3,
            amplitude: 2.0,
            width: 0.8,
            spread: 2.0,
            phase: std::f64::consts::PI,
            max_phase: 0.3,
        };
        assert_eq!(spec.sample(&g, 1).unwrap(), spec.sample(&g, 1).unwrap());
    }

    #[test]
    fn file_round_trip() {
        let text = r#"
[grid]
d = 1
N = 8
L = 4.0

[potential]
family = "values"
values = [[1.0, 0.0], [0.0, 1.0], [0.0, 0.0], [0.0, 0.0], [0.0, 0.0], [0.0, 0.0], [0.0, 0.0], [-1.0, 0.0]]
"#;
        let file = PotentialFile::parse(text).unwrap();
        let (grid, field) = file.realize(1).unwrap();
        assert_eq!(grid.sites(), 8);
        assert_eq!(field.sup_norm(), 1.0);
        assert_eq!(PotentialFile::parse(&file.to_toml()).unwrap(), file);
        let short = text.replace(", [-1.0, 0.0]]", "]");
        assert!(PotentialFile::parse(&short).unwrap().realize(1).is_err());
    }

    #[test]
    fn imaginary_flag() {
        let g = TorusGrid::new(1, 8, 4.0).unwrap();
        let w = PotentialSpec::gaussian(C64::new(0.0, 1.0), 1.0).sample(&g, 1).unwrap();
        assert!(w.is_imaginary_nonnegative(0.0));
        assert!(!w.scaled(-1.0).is_imaginary_nonnegative(0.0));
        let m = PotentialField::matrix(&g, vec![CMatrix::identity(2, 2) * C64::new(0.0, 2.0); 8]).unwrap();
        assert!(m.is_imaginary_nonnegative(1e-14));
    }
}
