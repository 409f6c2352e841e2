//! Experiment orchestration: validate a configuration, run it, write artifacts.
//!
//! Every run writes `manifest.json` (resolved configuration, versions,
//! timings, status and headline numbers) next to its CSV tables. Tables hold
//! no timestamps, so reruns reproduce them byte for byte.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use symlab_core::cell::{CoefficientField, EllipticSolveOptions, MediumDescriptor};
use symlab_core::correctors::{compute_correctors, order_guard, tuple_of, CorrectorSet};
use symlab_core::fourier::FrequencyLattice;
use symlab_core::homogenized::{
    error_and_rate, hierarchy_from_correctors, oscillatory_error, rational, two_scale_residual, Forcing, FullSpaceGrid,
    SymbolCache, TorusFunction,
};
use symlab_core::lattice::{
    enumerate_exact, mc_bhat, periodization_experiment, second_differences, Distribution, RngSpec, TwoPoint,
    ENUMERATION_LIMIT, MAX_SAMPLES_3D, MAX_SIDE_3D,
};
use symlab_core::linalg::KrylovOptions;
use symlab_core::symbol::{compare_with_correctors, default_rays, ray_samples, taylor_fit};
use symlab_core::symbol::{sample_symbol, voigt_bound, SymbolSample};

use crate::config::{self, Kind, RawConfig, Resolver};
use crate::container;
use crate::exec::Parallel;
use crate::output::{num, Artifacts, Plot, Series, Table};
use crate::{LabError, Result};

pub const MANIFEST: &str = "manifest.json";

/// Command-line overrides.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out: Option<PathBuf>,
    pub force: bool,
    pub threads: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub kind: String,
    pub status: Status,
    pub exit_code: i32,
    pub error: Option<String>,
    pub config_path: String,
    pub config: BTreeMap<String, String>,
    pub versions: BTreeMap<String, String>,
    pub threads: usize,
    pub started_unix: u64,
    /// Wall-clock seconds per phase, plus `total`.
    pub timings: BTreeMap<String, f64>,
    pub headline: BTreeMap<String, Value>,
    pub files: Vec<String>,
    pub plots: Vec<String>,
}

impl RunManifest {
    pub fn read(dir: &Path) -> Result<Self> {
        let p = dir.join(MANIFEST);
        let text = std::fs::read_to_string(&p).map_err(LabError::io(&p))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[derive(Debug)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub manifest: RunManifest,
}

/// A failed run: the error, plus the output directory if one was written.
#[derive(Debug)]
pub struct RunFailure {
    pub error: LabError,
    pub dir: Option<PathBuf>,
}

impl From<LabError> for RunFailure {
    fn from(error: LabError) -> Self {
        RunFailure { error, dir: None }
    }
}

/// Validate, run and record the experiment described by the file at `path`.
///
/// Nothing is written unless the configuration validates and the output
/// directory is free (or `force` is set).
pub fn run_config(path: &Path, opts: &RunOptions) -> std::result::Result<RunOutcome, RunFailure> {
    let mut raw = config::load(path)?;
    if let Some(seed) = opts.seed {
        if raw.kind.keys().contains(&"seed") {
            raw.set("seed", seed.to_string());
        } else {
            log::warn!("--seed ignored: kind `{}` is deterministic", raw.kind);
        }
    }
    let (job, resolved) = plan(&raw)?;
    let dir = match (&opts.out, resolved.get("out")) {
        (Some(o), _) => o.clone(),
        (None, Some(o)) => PathBuf::from(o),
        (None, None) => {
            let stem = path.file_stem().map_or("run".into(), |s| s.to_string_lossy().into_owned());
            PathBuf::from("runs").join(stem)
        }
    };
    prepare_dir(&dir, opts.force)?;
    let exec = Parallel::new(opts.threads).map_err(|error| RunFailure {
        error,
        dir: None,
    })?;
    let started_unix = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let mut art = Artifacts::new(&dir);
    let mut timings = BTreeMap::new();
    let t0 = Instant::now();
    let result = job.execute(&mut art, &exec, &mut timings);
    timings.insert("total".into(), t0.elapsed().as_secs_f64());
    let (status, exit_code, error, headline) = match &result {
        Ok(h) => (Status::Ok, 0, None, h.clone()),
        Err(e) => (Status::Failed, e.exit_code(), Some(e.to_string()), BTreeMap::new()),
    };
    let plots = art.files.iter().filter(|f| f.ends_with(".svg")).cloned().collect();
    let manifest = RunManifest {
        kind: raw.kind.tag().into(),
        status,
        exit_code,
        error,
        config_path: path.display().to_string(),
        config: resolved,
        versions: BTreeMap::from([
            ("symlab".to_string(), env!("CARGO_PKG_VERSION").to_string()),
            ("symlab-core".to_string(), env!("CARGO_PKG_VERSION").to_string()),
        ]),
        threads: exec.threads(),
        started_unix,
        timings,
        headline,
        files: art.files.clone(),
        plots,
    };
    let written = serde_json::to_string_pretty(&manifest)
        .map_err(LabError::from)
        .and_then(|s| std::fs::write(dir.join(MANIFEST), s + "\n").map_err(LabError::io(dir.join(MANIFEST))));
    match (result, written) {
        (Ok(_), Ok(())) => Ok(RunOutcome { dir, manifest }),
        (Err(error), _) | (Ok(_), Err(error)) => Err(RunFailure { error, dir: Some(dir) }),
    }
}

fn prepare_dir(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() {
        let occupied = std::fs::read_dir(dir).map_err(LabError::io(dir))?.next().is_some();
        if occupied && !force {
            return Err(LabError::Collision(dir.to_path_buf()));
        }
    }
    std::fs::create_dir_all(dir).map_err(LabError::io(dir))
}

/// Validation failures from the core become configuration errors.
fn reject(e: symlab_core::Error) -> LabError {
    LabError::config(e.to_string())
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(LabError::config(msg()))
    }
}

/// A validated experiment.
#[derive(Debug)]
pub enum Job {
    Correctors {
        medium: Medium,
        order: usize,
        opts: EllipticSolveOptions,
    },
    Symbol {
        medium: Medium,
        points: Vec<Vec<f64>>,
        opts: EllipticSolveOptions,
    },
    Taylor {
        medium: Medium,
        degree: usize,
        radii: Vec<f64>,
        ell: usize,
        rays: Vec<Vec<f64>>,
        opts: EllipticSolveOptions,
    },
    Rate {
        medium: Medium,
        ell: usize,
        eps: Vec<f64>,
        grid: FullSpaceGrid,
        forcing: Forcing,
        opts: EllipticSolveOptions,
    },
    TwoScale {
        medium: Medium,
        order: usize,
        w: TorusFunction,
        oscillatory: Option<Oscillatory>,
        opts: EllipticSolveOptions,
    },
    Mc {
        dist: Distribution,
        d: usize,
        side: usize,
        delta: f64,
        ks: Vec<Vec<i64>>,
        samples: usize,
        rng: RngSpec,
        exact: bool,
        opts: KrylovOptions,
    },
    Periodize {
        dist: Distribution,
        d: usize,
        sides: Vec<usize>,
        delta: f64,
        order: usize,
        pairs: usize,
        rng: RngSpec,
        opts: KrylovOptions,
    },
}

#[derive(Debug)]
pub struct Medium {
    pub field: CoefficientField,
    pub name: String,
}

#[derive(Debug)]
pub struct Oscillatory {
    pub ell: usize,
    pub eps: Vec<f64>,
    pub translations: usize,
    pub grid: FullSpaceGrid,
    pub forcing: Forcing,
}

fn medium(r: &mut Resolver) -> Result<Medium> {
    let d = r.usize("d", Some(1))?;
    check((1..=3).contains(&d), || format!("d = {d} not in 1..=3"))?;
    let m = r.usize("modes", Some(if d == 3 { 8 } else { 16 }))?;
    check(m >= 1, || "modes must be at least 1".into())?;
    let lattice = if r.has("grid") {
        FrequencyLattice::new(d, m, r.usize("grid", None)?)
    } else {
        FrequencyLattice::with_modes(d, m)
    }
    .map_err(reject)?;
    let tag = r.string("medium", None)?;
    let axis = |r: &mut Resolver| -> Result<usize> {
        let axis = r.usize("axis", Some(0))?;
        check(axis < d, || format!("axis {axis} out of range for d = {d}"))?;
        Ok(axis)
    };
    let desc = match tag.as_str() {
        "identity" => MediumDescriptor::Identity,
        "inverse-cosine" | "cosine" => MediumDescriptor::InverseCosine { axis: axis(r)? },
        "laminate" => {
            let amplitude = r.f64("amplitude", Some(0.5))?;
            MediumDescriptor::Laminate {
                amplitude,
                axis: axis(r)?,
            }
        }
        "piecewise" => {
            let side = r.usize("cells", None)?;
            let scalars = r.f64_list("values", None)?;
            let cells = side.checked_pow(d as u32).unwrap_or(usize::MAX);
            check(side >= 1 && scalars.len() == cells, || {
                format!("piecewise medium with cells = {side} needs {cells} values")
            })?;
            let mut values = vec![0.0; cells * d * d];
            for (c, s) in scalars.iter().enumerate() {
                for i in 0..d {
                    values[c * d * d + i * d + i] = *s;
                }
            }
            MediumDescriptor::PiecewiseConstant { side, values }
        }
        other => {
            return Err(LabError::config(format!(
                "unknown medium `{other}` (identity, inverse-cosine, laminate, piecewise)"
            )))
        }
    };
    let name = desc.name();
    let field = CoefficientField::new(&lattice, desc).map_err(reject)?;
    Ok(Medium { field, name })
}

fn elliptic_opts(r: &mut Resolver) -> Result<EllipticSolveOptions> {
    let d = EllipticSolveOptions::default();
    let opts = EllipticSolveOptions {
        tol: r.f64("tol", Some(d.tol))?,
        max_iter: r.usize("max_iter", Some(d.max_iter))?,
        ..d
    };
    opts.validate().map_err(reject)?;
    Ok(opts)
}

fn krylov_opts(r: &mut Resolver) -> Result<KrylovOptions> {
    let d = KrylovOptions::default();
    let opts = KrylovOptions {
        tol: r.f64("tol", Some(d.tol))?,
        max_iter: r.usize("max_iter", Some(d.max_iter))?,
    };
    check(opts.tol > 0.0 && opts.tol <= 1e-4, || format!("tol {} not in (0, 1e-4]", opts.tol))?;
    check(opts.max_iter > 0, || "max_iter must be positive".into())?;
    Ok(opts)
}

fn corrector_order(d: usize, order: usize) -> Result<()> {
    check((1..=order_guard(d)).contains(&order), || {
        format!("order {order} not in 1..={} for d = {d}", order_guard(d))
    })
}

fn full_space(r: &mut Resolver, d: usize, period: u32, cutoff: f64) -> Result<(FullSpaceGrid, Forcing)> {
    let period = r.usize("period", Some(period as usize))?;
    check(period >= 1 && period <= 4096, || format!("period {period} not in 1..=4096"))?;
    let cutoff = r.f64("cutoff", Some(cutoff))?;
    let grid = FullSpaceGrid::new(d, period as u32, cutoff).map_err(reject)?;
    let direction = r.f64_list("direction", Some(&vec![1.0; d]))?;
    let forcing = Forcing::gaussian(&grid, &direction).map_err(reject)?;
    Ok((grid, forcing))
}

/// Quasi-random frequencies filling `(−ξ_max, ξ_max)^d`.
pub fn kronecker_points(d: usize, count: usize, xi_max: f64) -> Vec<Vec<f64>> {
    let alpha = [2f64.sqrt(), 3f64.sqrt(), 5f64.sqrt()];
    (1..=count)
        .map(|i| {
            (0..d)
                .map(|j| {
                    let t = (i as f64 * alpha[j]).fract();
                    xi_max * (2.0 * t - 1.0)
                })
                .collect()
        })
        .collect()
}

fn distribution(r: &mut Resolver) -> Result<Distribution> {
    let tag = r.string("distribution", Some("rademacher"))?;
    Distribution::from_tag(&tag).map_err(reject)
}

fn guard_lattice(d: usize, side: usize, samples: usize) -> Result<()> {
    check((1..=3).contains(&d), || format!("d = {d} not in 1..=3"))?;
    check(side >= 2, || format!("side {side} must be at least 2"))?;
    if d == 3 {
        check(side <= MAX_SIDE_3D, || format!("side {side} exceeds {MAX_SIDE_3D} in d = 3"))?;
        check(samples <= MAX_SAMPLES_3D, || format!("{samples} samples exceed {MAX_SAMPLES_3D} in d = 3"))?;
    }
    Ok(())
}

/// Resolve and validate a configuration without touching the disk.
pub fn plan(raw: &RawConfig) -> Result<(Job, BTreeMap<String, String>)> {
    let mut r = raw.resolver();
    if raw.get("out").is_some() {
        r.string("out", None)?;
    }
    let job = match raw.kind {
        Kind::Correctors => {
            let medium = medium(&mut r)?;
            let order = r.usize("order", Some(3))?;
            corrector_order(medium.field.dim(), order)?;
            Job::Correctors {
                medium,
                order,
                opts: elliptic_opts(&mut r)?,
            }
        }
        Kind::Symbol => {
            let medium = medium(&mut r)?;
            let count = r.usize("points", Some(50))?;
            check(count >= 1, || "points must be at least 1".into())?;
            let xi_max = r.f64("xi_max", Some(3.0))?;
            check(xi_max > 0.0 && xi_max < 2.0 * PI, || format!("xi_max {xi_max} not in (0, 2π)"))?;
            Job::Symbol {
                points: kronecker_points(medium.field.dim(), count, xi_max),
                medium,
                opts: elliptic_opts(&mut r)?,
            }
        }
        Kind::Taylor => {
            let medium = medium(&mut r)?;
            let d = medium.field.dim();
            let degree = r.usize("degree", Some(6))?;
            check(degree >= 2 && degree <= 8 && degree % 2 == 0, || {
                format!("degree {degree} must be even and in 2..=8")
            })?;
            let radii = r.f64_list("radii", Some(&[0.2, 0.1, 0.05]))?;
            check(radii.len() >= 3 && radii.iter().all(|x| *x > 0.0 && *x < 2.0), || {
                "radii: at least three values in (0, 2)".into()
            })?;
            let ell = r.usize("ell", Some(3.min(degree - 1)))?;
            corrector_order(d, ell)?;
            check(ell < degree, || format!("ell = {ell} needs degree ≥ {}", ell + 1))?;
            let seed = r.u64("seed", Some(0))?;
            Job::Taylor {
                rays: default_rays(d, degree, seed, false),
                medium,
                degree,
                radii,
                ell,
                opts: elliptic_opts(&mut r)?,
            }
        }
        Kind::Rate => {
            let medium = medium(&mut r)?;
            let d = medium.field.dim();
            let ell = r.usize("ell", Some(1))?;
            corrector_order(d, ell)?;
            let eps = r.f64_list("eps", Some(&[0.4, 0.2, 0.1, 0.05]))?;
            check(eps.len() >= 4, || "eps: at least four values".into())?;
            check(eps.iter().all(|e| *e > 0.0), || "eps values must be positive".into())?;
            let q = eps[1] / eps[0];
            check(q < 1.0 && eps.windows(2).all(|w| (w[1] / w[0] - q).abs() <= 1e-9), || {
                "eps must be a decreasing geometric sequence".into()
            })?;
            let (grid, forcing) = full_space(&mut r, d, FullSpaceGrid::DEFAULT_PERIOD, FullSpaceGrid::DEFAULT_CUTOFF)?;
            check(eps[0] * grid.max_component() < 2.0 * PI, || {
                format!("eps·cutoff = {} leaves the admissible cell", eps[0] * grid.max_component())
            })?;
            Job::Rate {
                medium,
                ell,
                eps,
                grid,
                forcing,
                opts: elliptic_opts(&mut r)?,
            }
        }
        Kind::TwoScale => {
            let medium = medium(&mut r)?;
            let d = medium.field.dim();
            let order = r.usize("order", Some(2))?;
            corrector_order(d, order)?;
            let torus = r.usize("torus", Some(8))?;
            let wave = r.usize("wave", Some(1))?;
            check(wave >= 1 && 2 * wave < torus, || format!("wave {wave} needs 2·wave < torus = {torus}"))?;
            let mut w = TorusFunction {
                period: torus as u32,
                modes: Vec::new(),
            };
            for axis in 0..d {
                w.modes.extend(TorusFunction::sine(d, torus as u32, axis, wave as i64).modes);
            }
            let oscillatory = if r.has("eps") {
                check(d <= 2, || "two-scale expansion errors need d ≤ 2".into())?;
                let ell = r.usize("ell", Some(1))?;
                corrector_order(d, ell)?;
                let eps = r.f64_list("eps", None)?;
                for e in &eps {
                    let (p, _) = rational(*e).map_err(reject)?;
                    check(p == 1, || format!("eps = {e} is not of the form 1/m"))?;
                }
                let translations = r.usize("translations", Some(4))?;
                check((1..=16).contains(&translations), || "translations not in 1..=16".into())?;
                let (grid, forcing) = full_space(&mut r, d, 8, 6.0)?;
                let worst = eps.iter().fold(0.0f64, |a, b| a.max(*b)) * grid.max_component();
                check(worst < PI, || format!("eps·cutoff = {worst} must stay below π"))?;
                Some(Oscillatory {
                    ell,
                    eps,
                    translations,
                    grid,
                    forcing,
                })
            } else {
                None
            };
            Job::TwoScale {
                medium,
                order,
                w,
                oscillatory,
                opts: elliptic_opts(&mut r)?,
            }
        }
        Kind::Mc => {
            let dist = distribution(&mut r)?;
            let d = r.usize("d", Some(1))?;
            let side = r.usize("side", Some(2))?;
            let samples = r.usize("samples", Some(1024))?;
            guard_lattice(d, side, samples)?;
            check(samples >= 2, || "samples must be at least 2".into())?;
            let delta = r.f64("delta", Some(0.1))?;
            check(delta.abs() < 1.0, || format!("|delta| = {} must be below 1", delta.abs()))?;
            let ks = r.index_vectors("k", Some(&vec!["1"; d].join(",")))?;
            for k in &ks {
                check(k.len() == d, || format!("k = {k:?} must have {d} components"))?;
                check(k.iter().any(|x| x.rem_euclid(side as i64) != 0), || {
                    format!("k = {k:?} is the zero frequency on side {side}")
                })?;
            }
            let seed = r.u64("seed", Some(2024))?;
            let exact = r.bool("exact", Some(false))?;
            if exact {
                check(dist == Distribution::Rademacher, || "exact enumeration needs the rademacher law".into())?;
                let sites = side.checked_pow(d as u32).unwrap_or(usize::MAX);
                check(sites <= ENUMERATION_LIMIT as usize, || {
                    format!("enumeration over {sites} sites exceeds the limit of {ENUMERATION_LIMIT}")
                })?;
            }
            Job::Mc {
                dist,
                d,
                side,
                delta,
                ks,
                samples,
                rng: RngSpec::new(seed),
                exact,
                opts: krylov_opts(&mut r)?,
            }
        }
        Kind::Periodize => {
            let dist = distribution(&mut r)?;
            let d = r.usize("d", Some(2))?;
            let sides = r.usize_list("sides", Some(&[4, 8, 16]))?;
            let pairs = r.usize("pairs", Some(500))?;
            check(!sides.is_empty() && sides.windows(2).all(|w| w[0] < w[1]), || {
                "sides must be increasing".into()
            })?;
            for s in &sides {
                guard_lattice(d, *s, 2 * pairs)?;
            }
            check(pairs >= 2, || "pairs must be at least 2".into())?;
            let delta = r.f64("delta", Some(0.2))?;
            check(delta.abs() < 1.0, || format!("|delta| = {} must be below 1", delta.abs()))?;
            let order = r.usize("order", Some(1))?;
            check((1..=2).contains(&order), || format!("order {order} not in 1..=2"))?;
            let seed = r.u64("seed", Some(2024))?;
            Job::Periodize {
                dist,
                d,
                sides,
                delta,
                order,
                pairs,
                rng: RngSpec::new(seed),
                opts: krylov_opts(&mut r)?,
            }
        }
    };
    Ok((job, r.finish()))
}

type Headline = BTreeMap<String, Value>;

fn timed<T>(timings: &mut BTreeMap<String, f64>, phase: &str, f: impl FnOnce() -> T) -> T {
    let t = Instant::now();
    let out = f();
    timings.insert(phase.into(), t.elapsed().as_secs_f64());
    out
}

fn xi_header(d: usize) -> Vec<String> {
    (1..=d).map(|j| format!("xi_{j}")).collect()
}

fn tuple_label(flat: usize, n: usize, d: usize) -> String {
    if n == 0 {
        return "-".into();
    }
    tuple_of(flat, n, d).iter().map(ToString::to_string).collect::<Vec<_>>().join(".")
}

/// Rows `ξ…, |ξ|, Re, Im, residual, ratio, in_band`; returns the band violation count.
fn symbol_table(a: &CoefficientField, samples: &[SymbolSample]) -> (Table, usize) {
    let d = a.dim();
    let mut header = xi_header(d);
    header.extend(["norm", "re", "im", "residual", "ratio", "in_band"].map(String::from));
    let mut t = Table::new(header);
    let (lo, hi) = (a.lambda(), voigt_bound(a));
    let mut violations = 0;
    for s in samples {
        let ratio = s.ratio();
        let ok = ratio >= lo * (1.0 - 1e-9) && ratio <= hi * (1.0 + 1e-9);
        violations += usize::from(!ok);
        let mut row: Vec<String> = s.xi.iter().map(|x| num(*x)).collect();
        row.extend([
            num(s.norm_sqr().sqrt()),
            num(s.value.re),
            num(s.value.im),
            num(s.residual),
            num(ratio),
            ok.to_string(),
        ]);
        t.push(row);
    }
    (t, violations)
}

fn symbol_plot(samples: &[SymbolSample]) -> Plot {
    let mut pts: Vec<(f64, f64)> = samples.iter().map(|s| (s.norm_sqr().sqrt(), s.ratio())).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    Plot {
        title: "Re B(xi) / |xi|^2".into(),
        x_label: "|xi|".into(),
        y_label: "ratio".into(),
        log_x: false,
        log_y: false,
        series: vec![Series {
            label: "samples".into(),
            points: pts,
        }],
    }
}

fn max_rel_imag(samples: &[SymbolSample]) -> f64 {
    samples.iter().map(|s| s.value.im.abs() / s.norm_sqr()).fold(0.0, f64::max)
}

fn correctors(a: &CoefficientField, order: usize, opts: &EllipticSolveOptions, exec: &Parallel) -> Result<CorrectorSet> {
    Ok(compute_correctors(a, order, opts, exec)?)
}

impl Job {
    pub fn execute(&self, art: &mut Artifacts, exec: &Parallel, timings: &mut BTreeMap<String, f64>) -> Result<Headline> {
        let mut h = Headline::new();
        match self {
            Job::Correctors { medium, order, opts } => {
                let a = &medium.field;
                let d = a.dim();
                let set = timed(timings, "correctors", || correctors(a, *order, opts, exec))?;
                let mut abar = Table::new(["order", "index", "row", "col", "value"]);
                let mut higher: f64 = 0.0;
                for n in 1..=*order {
                    let t = set.homogenized_tensor(n)?;
                    for (p, m) in t.chunks(d * d).enumerate() {
                        for (c, v) in m.iter().enumerate() {
                            abar.push(vec![
                                n.to_string(),
                                tuple_label(p, n - 1, d),
                                (c / d + 1).to_string(),
                                (c % d + 1).to_string(),
                                num(*v),
                            ]);
                            if n >= 2 {
                                higher = higher.max(v.abs());
                            }
                        }
                    }
                }
                art.table("abar.csv", &abar)?;
                let g = set.growth_report();
                let mut growth = Table::new(["order", "phi", "sigma", "corrector", "abar", "q"]);
                for r in &g.rows {
                    growth.push(vec![
                        r.order.to_string(),
                        num(r.phi),
                        num(r.sigma),
                        num(r.corrector),
                        num(r.abar),
                        num(r.q),
                    ]);
                }
                art.table("growth.csv", &growth)?;
                let mut diag = Table::new([
                    "order",
                    "flux_mean",
                    "flux_identity",
                    "flux_divergence",
                    "curl_identity",
                    "abar_imag",
                    "max_residual",
                    "iterations",
                ]);
                for o in set.diagnostics() {
                    diag.push(vec![
                        o.order.to_string(),
                        num(o.flux_mean),
                        num(o.flux_identity),
                        num(o.flux_divergence),
                        num(o.curl_identity),
                        num(o.abar_imag),
                        num(o.max_residual),
                        o.iterations.to_string(),
                    ]);
                }
                art.table("diagnostics.csv", &diag)?;
                let p = art.path("correctors.bin");
                container::write(&p, &set, &medium.name)?;
                let worst = |f: fn(&symlab_core::correctors::OrderDiagnostics) -> f64| {
                    set.diagnostics().iter().map(f).fold(0.0, f64::max)
                };
                h.insert("lambda".into(), json!(a.lambda()));
                h.insert("abar1".into(), json!(set.homogenized_tensor(1)?));
                h.insert("max_higher_abar".into(), json!(higher));
                h.insert("max_flux_identity".into(), json!(worst(|o| o.flux_identity)));
                h.insert("growth_base".into(), json!(g.base));
            }
            Job::Symbol { medium, points, opts } => {
                let a = &medium.field;
                let samples = timed(timings, "symbol", || sample_symbol(a, points, opts, exec))?;
                let (t, violations) = symbol_table(a, &samples);
                art.table("symbol.csv", &t)?;
                art.text("symbol.svg", &symbol_plot(&samples).svg())?;
                let ratios = samples.iter().map(SymbolSample::ratio);
                h.insert("samples".into(), json!(samples.len()));
                h.insert("band_violations".into(), json!(violations));
                h.insert("min_ratio".into(), json!(ratios.clone().fold(f64::INFINITY, f64::min)));
                h.insert("max_ratio".into(), json!(ratios.fold(0.0, f64::max)));
                h.insert("max_relative_imag".into(), json!(max_rel_imag(&samples)));
            }
            Job::Taylor {
                medium,
                degree,
                radii,
                ell,
                rays,
                opts,
            } => {
                let a = &medium.field;
                let d = a.dim();
                let samples = timed(timings, "symbol", || ray_samples(a, rays, radii, opts, exec))?;
                let (t, violations) = symbol_table(a, &samples);
                art.table("samples.csv", &t)?;
                let model = taylor_fit(&samples, d, *degree)?;
                let mut coeffs = Table::new(["degree", "exponents", "coefficient"]);
                for (i, deg) in model.degrees.iter().enumerate() {
                    for (alpha, c) in model.exponents[i].iter().zip(&model.coefficients[i]) {
                        let e: Vec<String> = alpha.iter().map(ToString::to_string).collect();
                        coeffs.push(vec![deg.to_string(), e.join(" "), num(*c)]);
                    }
                }
                art.table("taylor.csv", &coeffs)?;
                let set = timed(timings, "correctors", || correctors(a, *ell, opts, exec))?;
                let disc = compare_with_correctors(&model, &set, *ell)?;
                let mut dt = Table::new(["order", "discrepancy", "model_form", "corrector_form", "probe"]);
                for o in &disc {
                    let p: Vec<String> = o.worst_probe.iter().map(|x| num(*x)).collect();
                    dt.push(vec![
                        o.order.to_string(),
                        num(o.discrepancy),
                        num(o.model_form),
                        num(o.corrector_form),
                        p.join(" "),
                    ]);
                }
                art.table("discrepancy.csv", &dt)?;
                h.insert("samples".into(), json!(samples.len()));
                h.insert("band_violations".into(), json!(violations));
                h.insert("fit_residual".into(), json!(model.residual));
                h.insert(
                    "max_discrepancy".into(),
                    json!(disc.iter().map(|o| o.discrepancy).fold(0.0, f64::max)),
                );
                h.insert("max_relative_imag".into(), json!(max_rel_imag(&samples)));
            }
            Job::Rate {
                medium,
                ell,
                eps,
                grid,
                forcing,
                opts,
            } => {
                let a = &medium.field;
                let set = timed(timings, "correctors", || correctors(a, *ell, opts, exec))?;
                let hier = hierarchy_from_correctors(&set, *ell, forcing, grid)?;
                let mut cache = SymbolCache::new();
                let rep = timed(timings, "rate", || {
                    error_and_rate(a, &hier, forcing, eps, opts, exec, &mut cache)
                })?;
                let naive = hier.naive_scan(eps[0], a.lambda());
                let mut t = Table::new(["eps", "error", "weighted_norm", "ratio"]);
                for r in &rep.rows {
                    t.push(vec![num(r.eps), num(r.error), num(r.weighted_norm), num(r.ratio)]);
                }
                art.table("rate.csv", &t)?;
                let last = rep.rows.last().expect("at least four rows");
                let mut fit = Table::new([
                    "ell",
                    "slope",
                    "prefactor",
                    "prefactor_spread",
                    "max_error",
                    "naive_min_ratio",
                    "naive_near_vanishing",
                ]);
                fit.push(vec![
                    ell.to_string(),
                    num(rep.slope),
                    num(last.ratio),
                    num(rep.ratio_spread()),
                    num(rep.max_error()),
                    num(naive.min_ratio),
                    naive.near_vanishing.to_string(),
                ]);
                art.table("fit.csv", &fit)?;
                let reference: Vec<(f64, f64)> = rep
                    .rows
                    .iter()
                    .map(|r| (r.eps, last.error * (r.eps / last.eps).powi(*ell as i32)))
                    .collect();
                let plot = Plot {
                    title: format!("error of the order-{ell} homogenized solution"),
                    x_label: "eps".into(),
                    y_label: "error".into(),
                    log_x: true,
                    log_y: true,
                    series: vec![
                        Series {
                            label: "e(eps)".into(),
                            points: rep.rows.iter().map(|r| (r.eps, r.error)).collect(),
                        },
                        Series {
                            label: format!("slope {ell}"),
                            points: reference,
                        },
                    ],
                };
                art.text("rate.svg", &plot.svg())?;
                let (hits, misses) = cache.stats();
                log::info!("symbol cache: {hits} hits, {misses} misses");
                h.insert("slope".into(), json!(rep.slope));
                h.insert("prefactor".into(), json!(last.ratio));
                h.insert("prefactor_spread".into(), json!(rep.ratio_spread()));
                h.insert("max_error".into(), json!(rep.max_error()));
                h.insert("naive_near_vanishing".into(), json!(naive.near_vanishing));
            }
            Job::TwoScale {
                medium,
                order,
                w,
                oscillatory,
                opts,
            } => {
                let a = &medium.field;
                let need = oscillatory.as_ref().map_or(*order, |p| p.ell.max(*order));
                let set = timed(timings, "correctors", || correctors(a, need, opts, exec))?;
                let mut t = Table::new(["order", "residual"]);
                let mut worst: f64 = 0.0;
                for n in 0..=*order {
                    let res = two_scale_residual(&set, n, w)?;
                    worst = worst.max(res);
                    t.push(vec![n.to_string(), num(res)]);
                }
                art.table("identity.csv", &t)?;
                h.insert("max_residual".into(), json!(worst));
                if let Some(p) = oscillatory {
                    let mut t = Table::new(["eps", "error", "ratio", "solves"]);
                    let mut errors = Vec::new();
                    for e in &p.eps {
                        let r = timed(timings, &format!("expansion eps={e}"), || {
                            oscillatory_error(&set, p.ell, &p.forcing, &p.grid, *e, p.translations, opts, exec)
                        })?;
                        t.push(vec![num(r.eps), num(r.error), num(r.ratio), r.solves.to_string()]);
                        errors.push(json!({"eps": r.eps, "error": r.error, "ratio": r.ratio}));
                    }
                    art.table("two_scale.csv", &t)?;
                    h.insert("expansion".into(), Value::Array(errors));
                }
            }
            Job::Mc {
                dist,
                d,
                side,
                delta,
                ks,
                samples,
                rng,
                exact,
                opts,
            } => {
                let mut header: Vec<String> = ["d", "L", "delta"].map(String::from).to_vec();
                header.extend(xi_header(*d));
                let mut mc_header = header.clone();
                mc_header.extend(["re", "im", "stderr", "n", "contamination"].map(String::from));
                let mut mc = Table::new(mc_header);
                let mut ex_header = header;
                ex_header.extend(["re", "im", "configurations", "laplacian", "in_band", "z"].map(String::from));
                let mut ext = Table::new(ex_header);
                let (mut violations, mut max_z, mut re_seq) = (0usize, 0.0f64, Vec::new());
                for k in ks {
                    let est = timed(timings, &format!("mc k={k:?}"), || {
                        mc_bhat(*dist, *d, *side, *delta, k, *samples, rng, opts, exec)
                    })?;
                    let mut prefix = vec![d.to_string(), side.to_string(), num(*delta)];
                    prefix.extend(est.xi.iter().map(|x| num(*x)));
                    let mut row = prefix.clone();
                    row.extend([
                        num(est.value.re),
                        num(est.value.im),
                        num(est.stderr),
                        est.samples.to_string(),
                        num(est.contamination),
                    ]);
                    mc.push(row);
                    re_seq.push(est.value.re);
                    if *exact {
                        let law = TwoPoint::rademacher();
                        let x = timed(timings, &format!("exact k={k:?}"), || {
                            enumerate_exact(*d, *side, &law, *delta, k, opts, exec)
                        })?;
                        let ok = x.within_band(*delta, 1e-9);
                        violations += usize::from(!ok);
                        let z = if est.stderr > 0.0 {
                            (est.value - x.value).norm() / est.stderr
                        } else {
                            0.0
                        };
                        max_z = max_z.max(z);
                        let mut row = prefix;
                        row.extend([
                            num(x.value.re),
                            num(x.value.im),
                            x.configurations.to_string(),
                            num(x.laplacian),
                            ok.to_string(),
                            num(z),
                        ]);
                        ext.push(row);
                    }
                }
                art.table("mc.csv", &mc)?;
                if *exact {
                    art.table("exact.csv", &ext)?;
                    h.insert("band_violations".into(), json!(violations));
                    h.insert("max_z".into(), json!(max_z));
                }
                let mut sd = Table::new(["index", "second_difference"]);
                for (i, v) in second_differences(&re_seq).iter().enumerate() {
                    sd.push(vec![(i + 1).to_string(), num(*v)]);
                }
                art.table("second_differences.csv", &sd)?;
                h.insert("estimates".into(), json!(re_seq));
            }
            Job::Periodize {
                dist,
                d,
                sides,
                delta,
                order,
                pairs,
                rng,
                opts,
            } => {
                let rows = timed(timings, "periodize", || {
                    periodization_experiment(*dist, *d, *delta, sides, *order, *pairs, rng, opts, exec)
                })?;
                let mut t = Table::new(["L", "order", "entry", "mean", "stderr", "pairs"]);
                for r in &rows {
                    for (i, (m, s)) in r.mean.iter().zip(&r.stderr).enumerate() {
                        t.push(vec![
                            r.side.to_string(),
                            r.order.to_string(),
                            i.to_string(),
                            num(*m),
                            num(*s),
                            r.pairs.to_string(),
                        ]);
                    }
                }
                art.table("periodize.csv", &t)?;
                let mut dt = Table::new(["L", "next_L", "distance"]);
                let dist: Vec<f64> = rows.windows(2).map(|w| w[0].distance(&w[1])).collect();
                for (w, x) in rows.windows(2).zip(&dist) {
                    dt.push(vec![w[0].side.to_string(), w[1].side.to_string(), num(*x)]);
                }
                art.table("differences.csv", &dt)?;
                let plot = Plot {
                    title: format!("E[abar_L^{order}] first entry"),
                    x_label: "L".into(),
                    y_label: "mean".into(),
                    log_x: true,
                    log_y: false,
                    series: vec![Series {
                        label: "mean".into(),
                        points: rows.iter().map(|r| (r.side as f64, r.mean[0])).collect(),
                    }],
                };
                art.text("periodize.svg", &plot.svg())?;
                h.insert("distances".into(), json!(dist));
                h.insert("decreasing".into(), json!(dist.windows(2).all(|w| w[1] < w[0])));
            }
        }
        Ok(h)
    }
}
