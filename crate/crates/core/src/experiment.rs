//! Declarative experiment files, batch runs and report emission.
//!
//! An experiment is one TOML file with `[operator]`, `[grid]`, `[potential]` and `[run]`
//! blocks. Everything that influences a certificate lives in the file; the only outside
//! inputs are the output directory and the worker count.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::certlab::{
    check_potential_exponent, imaginary, is_case_a, schatten_order, resolvent_checks, run_jobs, scaling, weighted, BoundCertificate, ImaginaryOptions, IndividualOptions, Job, Ladder, MainOptions, Region,
    ScalingOptions, TheoremId, UniformOptions, Verdict, WeightedOptions,
};
use crate::error::{Error, Result};
use crate::lattice::{PotentialFile, PotentialSpec, TorusGrid};
use crate::linalg::C64;
use crate::birman_schwinger::{scan_points, BsAssembler, OrderVariant, ScanRow};
use crate::spectra::{refined_spectrum, save_spectrum_csv, EssentialSpectrum, RefinedSpectrum};
use crate::symbols::{Symbol, SymbolKind, SymbolSpec};

/// Environment variable naming the root of the output directories.
pub const OUT_ENV: &str = "BSLAB_OUT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorBlock {
    pub kind: SymbolKind,
    /// Order of the symbol; may be omitted for the Dirac kinds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    pub d: usize,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBlock {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "L")]
    pub side: f64,
    /// Classify eigenvalues against the grid with `2N` points per axis.
    #[serde(default = "yes")]
    pub refine: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialPath {
    /// Potential file, relative to the experiment file.
    pub file: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PotentialBlock {
    File(PotentialPath),
    Inline(PotentialSpec),
}

/// Geometric sample of `r·e^{iθ}`, `r` from `radius[0]` to `radius[1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RayBlock {
    pub arg: f64,
    pub radius: [f64; 2],
    pub points: usize,
}

impl RayBlock {
    pub fn points(&self) -> Vec<C64> {
        let [r0, r1] = self.radius;
        let n = self.points;
        (0..n)
            .map(|k| {
                let t = if n == 1 { 0.0 } else { k as f64 / (n - 1) as f64 };
                C64::from_polar(r0 * (r1 / r0).powf(t), self.arg)
            })
            .collect()
    }
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunBlock {
    pub theorems: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<Region>,
    /// Points per axis of the grid over the region.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ray: Option<RayBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ladder: Option<Ladder>,
    /// Boundary exponents `[μ_c, μ_∞]` for the weighted sums.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<[f64; 2]>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub workers: usize,
    #[serde(default)]
    pub record_runtime: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub operator: OperatorBlock,
    pub grid: GridBlock,
    pub potential: PotentialBlock,
    pub run: RunBlock,
    /// Directory that relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn at(path: impl Into<String>) -> impl FnOnce(Error) -> Error {
    let path = path.into();
    move |e| match e {
        Error::Config { .. } => e,
        other => Error::config(path, other.to_string()),
    }
}

fn required<T: Copy>(v: Option<T>, path: &str) -> Result<T> {
    v.ok_or_else(|| Error::config(path, "required by the selected theorems"))
}

/// A validated experiment, ready to run.
#[derive(Debug, Clone)]
pub struct Plan {
    pub spec: SymbolSpec,
    pub grid: TorusGrid,
    pub potential: PotentialSpec,
    pub theorems: Vec<TheoremId>,
    pub run: RunBlock,
    pub refine: bool,
}

impl ExperimentConfig {
    pub fn parse(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::config("<file>", e.message().to_string()))?;
        cfg.base_dir = base_dir.into();
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, base)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("experiment files always serialize")
    }

    /// Checks every block and every exponent regime without running any verifier.
    pub fn validate(&self) -> Result<Plan> {
        let op = &self.operator;
        let s = match (op.s, op.kind.is_dirac()) {
            (Some(s), _) => s,
            (None, true) => 1.0,
            (None, false) => return Err(Error::config("operator.s", "required for scalar symbols")),
        };
        let spec = SymbolSpec::new(op.kind, s, op.d).map_err(at("operator"))?;
        let grid = TorusGrid::new(op.d, self.grid.n, self.grid.side).map_err(at("grid"))?;
        if self.grid.refine {
            grid.refined().map_err(at("grid.N"))?;
        }
        let potential = match &self.potential {
            PotentialBlock::Inline(p) => p.clone(),
            PotentialBlock::File(f) => {
                let path = self.base_dir.join(&f.file);
                let file = PotentialFile::load(&path).map_err(at("potential.file"))?;
                if file.grid != grid.spec() {
                    return Err(Error::config("potential.file", format!("file grid {:?} differs from [grid] {:?}", file.grid, grid.spec())));
                }
                file.potential
            }
        };
        let n = spec.spinor_dim();
        let field = potential.sample(&grid, n).map_err(at("potential"))?;
        if self.grid.refine {
            potential.sample(&grid.refined()?, n).map_err(at("potential"))?;
        }

        let run = &self.run;
        if run.theorems.is_empty() {
            return Err(Error::config("run.theorems", "no theorem selected"));
        }
        if run.workers == 0 {
            return Err(Error::config("run.workers", "need at least one worker"));
        }
        if let Some(l) = &run.ladder {
            l.rungs(1.0).map_err(at("run.ladder"))?;
        }
        if let Some([a, b]) = run.samples {
            if a == 0 || b == 0 {
                return Err(Error::config("run.samples", "need at least one point per axis"));
            }
        }
        let mut theorems = Vec::new();
        for (i, name) in run.theorems.iter().enumerate() {
            let key = format!("run.theorems[{i}]");
            let id = TheoremId::from_str(name).map_err(at(key.clone()))?;
            if theorems.contains(&id) {
                return Err(Error::config(key, format!("{id} listed twice")));
            }
            let classifies = !matches!(id, TheoremId::UniformResolvent | TheoremId::SchattenScaling);
            if classifies && !self.grid.refine {
                return Err(Error::config("grid.refine", format!("{id} classifies eigenvalues and needs the refined grid")));
            }
            match id {
                TheoremId::MainSum => {
                    check_potential_exponent(&spec, required(run.q, "run.q")?).map_err(at("run.q"))?;
                    self.region()?.validate(&spec).map_err(at("run.region"))?;
                }
                TheoremId::UniformResolvent => {
                    self.region()?.validate(&spec).map_err(at("run.region"))?;
                    resolvent_checks::check_p(&spec, run.p.unwrap_or(1.0)).map_err(at("run.p"))?;
                }
                TheoremId::SchattenScaling => {
                    check_potential_exponent(&spec, required(run.q, "run.q")?).map_err(at("run.q"))?;
                    let ray = run.ray.ok_or_else(|| Error::config("run.ray", "required by schatten-scaling"))?;
                    if !(ray.radius[0] > 0.0 && ray.radius[1] > ray.radius[0]) {
                        return Err(Error::config("run.ray.radius", "need 0 < r0 < r1"));
                    }
                    if ray.points < crate::certlab::MIN_FIT_SAMPLES {
                        return Err(Error::config("run.ray.points", format!("need at least {} points", crate::certlab::MIN_FIT_SAMPLES)));
                    }
                }
                TheoremId::IndividualBounds => {
                    scaling::check_individual(&spec, required(run.q, "run.q")?).map_err(|e| match e {
                        Error::Regime(_) => at("run.q")(e),
                        _ => at("operator.kind")(e),
                    })?;
                }
                TheoremId::ImaginaryPotential => {
                    imaginary::check_regime(&spec, required(run.q, "run.q")?).map_err(|e| match e {
                        Error::Regime(_) => at("run.q")(e),
                        _ => at("operator.kind")(e),
                    })?;
                    if !field.is_imaginary_nonnegative(field.roundoff_tol()) {
                        return Err(Error::config("potential", "imaginary-potential needs V = iW with W ≥ 0"));
                    }
                }
                _ => {
                    let opts = self.weighted_options(id);
                    if matches!(id, TheoremId::WeightedFractional | TheoremId::WeightedRelativistic) {
                        required(run.q, "run.q")?;
                    }
                    weighted::validate(&spec, id, &opts).map_err(|e| match &e {
                        Error::Regime(_) => at("run.q")(e),
                        Error::InvalidExponent(m) if m.contains('α') => at("run.alpha")(e),
                        Error::InvalidExponent(m) if m.contains("boundary exponents") => at("run.mu")(e),
                        Error::InvalidExponent(_) => at("run.eps")(e),
                        _ => at(key.clone())(e),
                    })?;
                }
            }
            theorems.push(id);
        }
        Ok(Plan {
            spec,
            grid,
            potential,
            theorems,
            run: run.clone(),
            refine: self.grid.refine,
        })
    }

    fn region(&self) -> Result<&Region> {
        self.run.region.as_ref().ok_or_else(|| Error::config("run.region", "required by the selected theorems"))
    }

    fn weighted_options(&self, _id: TheoremId) -> WeightedOptions {
        let d = WeightedOptions::default();
        let r = &self.run;
        WeightedOptions {
            q: r.q.unwrap_or(d.q),
            alpha: r.alpha.unwrap_or(d.alpha),
            eps: r.eps.unwrap_or(d.eps),
            ladder: r.ladder.unwrap_or(d.ladder),
            region: r.region.clone(),
            seed: r.seed,
            mu: r.mu.unwrap_or(d.mu),
            ..d
        }
    }
}

impl Plan {
    /// One job per theorem, in the order listed.
    pub fn jobs(&self) -> Vec<Job> {
        let shared = Arc::new(self.clone());
        self.theorems
            .iter()
            .map(|&id| {
                let plan = Arc::clone(&shared);
                Job::new(id.as_str(), move || plan.run_one(id))
            })
            .collect()
    }

    /// Runs one verifier with the options the file prescribes.
    pub fn run_one(&self, id: TheoremId) -> Result<BoundCertificate> {
        let (spec, grid, v, r) = (&self.spec, &self.grid, &self.potential, &self.run);
        let q = r.q.unwrap_or(1.0);
        match id {
            TheoremId::MainSum => {
                let mut o = MainOptions { seed: r.seed, ..MainOptions::default() };
                if let Some(n) = r.samples {
                    o.samples = n;
                }
                crate::certlab::verify_main(spec, grid, v, self.region()?, q, &o)
            }
            TheoremId::UniformResolvent => {
                let mut o = UniformOptions { seed: r.seed, ..UniformOptions::default() };
                if let Some(n) = r.samples {
                    o.samples = n;
                }
                crate::certlab::verify_uniform_resolvent(spec, grid, self.region()?, r.p.unwrap_or(1.0), &o)
            }
            TheoremId::SchattenScaling => {
                let ray = r.ray.ok_or_else(|| Error::config("run.ray", "required by schatten-scaling"))?;
                let o = ScalingOptions { seed: r.seed, ..ScalingOptions::default() };
                crate::certlab::verify_schatten_scaling(spec, grid, v, q, &ray.points(), &o)
            }
            TheoremId::IndividualBounds => {
                let o = IndividualOptions { seed: r.seed, ..IndividualOptions::default() };
                crate::certlab::verify_individual_bounds(spec, grid, v, q, &o)
            }
            TheoremId::ImaginaryPotential => {
                let o = ImaginaryOptions { seed: r.seed, ..ImaginaryOptions::default() };
                crate::certlab::verify_imaginary(spec, grid, v, q, &o)
            }
            _ => {
                let d = WeightedOptions::default();
                let o = WeightedOptions {
                    q: r.q.unwrap_or(d.q),
                    alpha: r.alpha.unwrap_or(d.alpha),
                    eps: r.eps.unwrap_or(d.eps),
                    ladder: r.ladder.unwrap_or(d.ladder),
                    region: r.region.clone(),
                    seed: r.seed,
                    ..d
                };
                crate::certlab::verify_weighted_sums(spec, grid, v, id, &o)
            }
        }
    }

    fn region(&self) -> Result<&Region> {
        self.run.region.as_ref().ok_or_else(|| Error::config("run.region", "required by the selected theorems"))
    }

    /// Eigenvalues of `H₀ + V`, classified against the refined grid, with condition numbers.
    pub fn spectrum(&self) -> Result<RefinedSpectrum> {
        refined_spectrum(&self.spec, &self.grid, &self.potential, true)
    }

    /// Scan points: the ray when one is given, otherwise the region sample.
    pub fn scan_contour(&self) -> Result<Vec<C64>> {
        if let Some(ray) = self.run.ray {
            return Ok(ray.points());
        }
        let region = self.run.region.as_ref().ok_or_else(|| Error::config("run.ray", "a ray or a region is needed for a scan"))?;
        Ok(region.sample(self.run.samples.unwrap_or([8, 8])))
    }

    /// Schatten norms and regularized determinants of `M(z)` along [`Plan::scan_contour`],
    /// with the Schatten order paired with `run.q`.
    pub fn bs_scan(&self) -> Result<Vec<ScanRow>> {
        let alpha = schatten_order(self.spec.dim(), self.run.q.unwrap_or(1.0)).map_err(at("run.q"))?;
        let v = self.potential.sample(&self.grid, self.spec.spinor_dim())?;
        let asm = BsAssembler::new(&self.spec, &v, OrderVariant::AbsFirst)?;
        scan_points(&asm, &self.scan_contour()?, alpha)
    }
}

/// CSV with one row per [`ScanRow`].
pub fn write_scan_csv<W: std::io::Write>(rows: &[ScanRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| Error::Parse(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))
}

/// Symbols listed by `bslab symbols` when no experiment file is given.
pub fn reference_specs() -> Vec<SymbolSpec> {
    let mut out = Vec::new();
    for d in 1..=3 {
        for s in [0.5, 1.0, 1.5, 2.0] {
            out.extend(SymbolSpec::fractional_laplacian(s, d));
            out.extend(SymbolSpec::relativistic(s, d));
        }
        out.extend(SymbolSpec::dirac_massless(d));
        out.extend(SymbolSpec::dirac_massive(d));
    }
    out
}

/// Plain-text table: kind, order, dimension, spinor size, `σ(H₀)`, critical values, and
/// which exponent regime for `V` applies.
pub fn symbol_table(specs: &[SymbolSpec]) -> String {
    let fmt_f = |x: f64| {
        if x.is_infinite() {
            (if x > 0.0 { "+inf" } else { "-inf" }).to_string()
        } else {
            format!("{x}")
        }
    };
    let mut s = format!("{:<22}{:>5}{:>3}{:>4}  {:<24}{:<14}{:<10}{}\n", "kind", "s", "d", "n", "essential spectrum", "critical", "analytic", "q range");
    for spec in specs {
        let ess = EssentialSpectrum::of(spec.kind())
            .intervals
            .iter()
            .map(|[a, b]| format!("[{}, {}]", fmt_f(*a), fmt_f(*b)))
            .collect::<Vec<_>>()
            .join(" ∪ ");
        let crit = spec.critical_values().values.iter().map(|c| fmt_f(*c)).collect::<Vec<_>>().join(", ");
        let d = spec.dim() as f64;
        let (lo, hi) = if is_case_a(spec) { (d / spec.order(), (d + 1.0) / 2.0) } else { ((d + 1.0) / 2.0, d / spec.order()) };
        let range = if lo.max(1.0) <= hi + 1e-12 { format!("[{}, {}]", lo.max(1.0), hi) } else { "empty".into() };
        s += &format!(
            "{:<22}{:>5}{:>3}{:>4}  {:<24}{:<14}{:<10}{}\n",
            spec.kind().label(),
            spec.order(),
            spec.dim(),
            spec.spinor_dim(),
            ess,
            if crit.is_empty() { "none".into() } else { crit },
            if spec.in_analytic_regime() { "yes" } else { "no" },
            range
        );
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReportFormat {
    Json,
    Csv,
    Markdown,
}

impl ReportFormat {
    pub fn file_name(self) -> &'static str {
        match self {
            ReportFormat::Json => "certificates.json",
            ReportFormat::Csv => "certificates.csv",
            ReportFormat::Markdown => "summary.md",
        }
    }
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            "markdown" | "markdown-summary" | "md" => Ok(ReportFormat::Markdown),
            other => Err(Error::Parse(format!("unknown report format `{other}`"))),
        }
    }
}

impl fmt::Display for ReportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReportFormat::Json => "json",
            ReportFormat::Csv => "csv",
            ReportFormat::Markdown => "markdown",
        })
    }
}

#[derive(Serialize)]
struct CsvRow<'a> {
    theorem: &'a str,
    verdict: &'a str,
    lhs: Option<f64>,
    rhs: Option<f64>,
    constant: Option<f64>,
    seed: u64,
    runtime_s: Option<f64>,
    d: usize,
    #[serde(rename = "N")]
    n: usize,
    #[serde(rename = "L")]
    side: f64,
    kind: &'a str,
    s: f64,
    q: Option<f64>,
    alpha: Option<f64>,
    eps: Option<f64>,
    p: Option<f64>,
    checks_passed: usize,
    checks_total: usize,
}

fn num(v: Option<f64>) -> String {
    v.map_or_else(|| "–".into(), |x| format!("{x:.6e}"))
}

/// Counts of PASS, FAIL and REPORT-ONLY.
pub fn verdict_counts(certs: &[BoundCertificate]) -> [usize; 3] {
    let mut c = [0; 3];
    for cert in certs {
        c[match cert.verdict {
            Verdict::Pass => 0,
            Verdict::Fail => 1,
            Verdict::ReportOnly => 2,
        }] += 1;
    }
    c
}

/// Renders certificates in `format`. Field order follows the certificate type.
pub fn render_report(certs: &[BoundCertificate], format: ReportFormat) -> Result<String> {
    if certs.is_empty() {
        return Err(Error::Empty("no certificates to report".into()));
    }
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(certs).map_err(|e| Error::Parse(e.to_string()))?;
            s.push('\n');
            Ok(s)
        }
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for c in certs {
                w.serialize(CsvRow {
                    theorem: &c.theorem,
                    verdict: c.verdict.as_str(),
                    lhs: c.lhs,
                    rhs: c.rhs,
                    constant: c.constant,
                    seed: c.seed,
                    runtime_s: c.runtime_s,
                    d: c.grid.d,
                    n: c.grid.n,
                    side: c.grid.side,
                    kind: c.inputs.kind.label(),
                    s: c.inputs.s,
                    q: c.inputs.q,
                    alpha: c.inputs.alpha,
                    eps: c.inputs.eps,
                    p: c.inputs.p,
                    checks_passed: c.checks.iter().filter(|k| k.passed).count(),
                    checks_total: c.checks.len(),
                })
                .map_err(|e| Error::Parse(e.to_string()))?;
            }
            let bytes = w.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
            String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
        }
        ReportFormat::Markdown => {
            let mut s = String::from("# Certificate summary\n\n| theorem | verdict | lhs | rhs | constant | checks |\n|---|---|---|---|---|---|\n");
            for c in certs {
                let passed = c.checks.iter().filter(|k| k.passed).count();
                s += &format!("| {} | {} | {} | {} | {} | {}/{} |\n", c.theorem, c.verdict, num(c.lhs), num(c.rhs), num(c.constant), passed, c.checks.len());
            }
            let [p, f, r] = verdict_counts(certs);
            s += &format!("\nTotals: {p} PASS, {f} FAIL, {r} REPORT-ONLY ({} certificates)\n", certs.len());
            let failed: Vec<String> = certs
                .iter()
                .flat_map(|c| c.checks.iter().filter(|k| !k.passed).map(move |k| format!("- {}: `{}` value {} limit {}", c.theorem, k.name, num(k.value), num(k.limit))))
                .collect();
            if !failed.is_empty() {
                s += "\nFailed checks:\n\n";
                s += &failed.join("\n");
                s.push('\n');
            }
            Ok(s)
        }
    }
}

/// Writes [`render_report`] to `path`.
pub fn emit_report(certs: &[BoundCertificate], format: ReportFormat, path: impl AsRef<Path>) -> Result<()> {
    let text = render_report(certs, format)?;
    let path = path.as_ref();
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Column names of the plot series a verifier attaches.
pub fn series_header(theorem: &str, series: &str, width: usize) -> Vec<String> {
    let names: &[&str] = match series {
        "eigenvalues" if theorem.starts_with("weighted") => &["re", "im", "dist", "weight"],
        "eigenvalues" => &["t", "re", "im", "dist"],
        "sigma1_sweep" => &["re", "im", "sigma1"],
        "threshold_eigenvalues" => &["re", "im", "bs_residual", "sigma1"],
        "norm_vs_z" => &["re", "im", "norm", "dist"],
        "l2_contrast" => &["re", "im", "sup_near", "sup_far"],
        "norm_vs_abs_z" => &["abs_z", "schatten_over_vq"],
        "coupling_sweep" | "dilation_family" => &["t", "re", "im", "ratio_a", "ratio_b"],
        "normalization" => &["re", "im", "re_q"],
        "bound_quantity" => &["t", "re", "im", "value"],
        "ladder" => &["t", "norm", "lhs", "count"],
        _ => &[],
    };
    if names.len() == width {
        names.iter().map(|s| s.to_string()).collect()
    } else {
        (0..width).map(|k| format!("c{k}")).collect()
    }
}

fn write_series(dir: &Path, cert: &BoundCertificate) -> Result<()> {
    for (name, rows) in &cert.series {
        let width = rows.first().map_or(0, Vec::len);
        let path = dir.join(format!("{}__{}.csv", cert.theorem, name));
        let mut w = csv::Writer::from_path(&path).map_err(|e| Error::Parse(e.to_string()))?;
        w.write_record(series_header(&cert.theorem, name, width)).map_err(|e| Error::Parse(e.to_string()))?;
        for row in rows {
            w.write_record(row.iter().map(|x| format!("{x:e}"))).map_err(|e| Error::Parse(e.to_string()))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct JobFailure {
    pub id: String,
    pub message: String,
}

/// Result of [`run_experiment`].
#[derive(Debug, Clone)]
pub struct RunReport {
    pub dir: PathBuf,
    pub certificates: Vec<BoundCertificate>,
    pub failure: Option<JobFailure>,
}

impl RunReport {
    /// 0 when no certificate FAILs, 1 otherwise, 3 when a verifier could not compute.
    pub fn exit_code(&self) -> i32 {
        if self.failure.is_some() {
            3
        } else if self.certificates.iter().any(|c| c.verdict == Verdict::Fail) {
            1
        } else {
            0
        }
    }
}

/// Output root: `$BSLAB_OUT`, else `./bslab-out`.
pub fn default_out_root() -> PathBuf {
    std::env::var_os(OUT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("bslab-out"))
}

fn timestamped_dir(root: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let stamp = chrono::Utc::now().format("run-%Y%m%dT%H%M%S%.3fZ").to_string();
    for k in 0.. {
        let dir = if k == 0 { root.join(&stamp) } else { root.join(format!("{stamp}-{k}")) };
        match std::fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(Error::io(&dir, e)),
        }
    }
    unreachable!()
}

/// Validates, runs every requested verifier and writes the artifacts into a fresh
/// timestamped directory below `out_root`:
/// `config.toml`, `certificates.{json,csv}`, `summary.md`, `spectrum.csv`,
/// `timings.csv` and one `plots/<theorem>__<series>.csv` per plot series.
pub fn run_experiment(config: &ExperimentConfig, out_root: impl AsRef<Path>, workers: Option<usize>) -> Result<RunReport> {
    let plan = config.validate()?;
    let dir = timestamped_dir(out_root.as_ref())?;
    let write = |name: &str, text: &str| -> Result<()> {
        let p = dir.join(name);
        std::fs::write(&p, text).map_err(|e| Error::io(&p, e))
    };
    write("config.toml", &config.to_toml())?;

    let outcomes = run_jobs(plan.jobs(), workers.unwrap_or(plan.run.workers).max(1), plan.run.record_runtime);
    let mut timings = String::from("job,seconds,status\n");
    let mut certificates = Vec::new();
    let mut failure = None;
    for o in outcomes {
        match o.result {
            Ok(c) => {
                timings += &format!("{},{:.3},{}\n", o.id, o.seconds, c.verdict);
                certificates.push(c);
            }
            Err(e) => {
                timings += &format!("{},{:.3},ERROR\n", o.id, o.seconds);
                failure.get_or_insert(JobFailure { id: o.id, message: e.to_string() });
            }
        }
    }
    write("timings.csv", &timings)?;

    if plan.refine {
        let sp = refined_spectrum(&plan.spec, &plan.grid, &plan.potential, true)?;
        save_spectrum_csv(&sp.points, dir.join("spectrum.csv"))?;
    }
    if !certificates.is_empty() {
        for f in [ReportFormat::Json, ReportFormat::Csv, ReportFormat::Markdown] {
            emit_report(&certificates, f, dir.join(f.file_name()))?;
        }
        let plots = dir.join("plots");
        std::fs::create_dir_all(&plots).map_err(|e| Error::io(&plots, e))?;
        for c in &certificates {
            write_series(&plots, c)?;
        }
    }
    Ok(RunReport { dir, certificates, failure })
}
