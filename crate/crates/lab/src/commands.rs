//! Subcommands of the `hyperwalk` binary. Each writes its outputs and a
//! `manifest.json` into the output directory; failures are reported as a
//! JSON error record and a nonzero exit.

use std::fs;
use std::io;
use std::path::PathBuf;
use std::sync::{Mutex, OnceLock};

use clap::{Parser, Subcommand};
use hyperwalk_core::asymptotics::{
    critical_exponent_bracketed, critical_exponent_fit, llt_fit, richardson_proxies, spectrum_check, FitResult,
    FreeGroupOracle,
};
use hyperwalk_core::automaton::bijection_test;
use hyperwalk_core::boundary::{
    build_potential, depth_delta, holder_rate_fit, martin_ratio, pair_summability_check, RaySpec,
};
use hyperwalk_core::green::{
    decay_fit, green_via_brw, max_ancona_ratio, DomainSpec, GreenOptions, GreenSource, RadiusExtrapolated, TableGreen,
};
use hyperwalk_core::thermo::{
    eta, fit_sphere_sums, level_data_table, level_set_counts, level_set_ratio, pressure_of, refine_with_budget,
    table_sphere_sums, theta_root, SphereSums,
};
use hyperwalk_core::walk::{return_probabilities, spectral_radius_from_table, BallMode, BallTable, StepDistribution};
use hyperwalk_core::{Automaton, GroupKind, Presentation};
use serde::Serialize;
use serde_json::json;

use crate::acceptance::{report_csv, run_suite, Status};
use crate::cache::{cache_root, load_or_build_ball, load_or_solve_green, CacheError};
use crate::config::{ConfigError, ExperimentConfig, Profile, RSpec};
use crate::output::{num, Csv, OutputDir};

#[derive(Parser, Debug)]
#[command(name = "hyperwalk", version, about = "Random walks and Green functions on surface and free groups")]
pub struct Cli {
    /// Experiment configuration (INI-style sections).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Cache root; overrides HYPERWALK_CACHE and the configuration.
    #[arg(long, global = true)]
    pub cache: Option<PathBuf>,
    #[arg(long, global = true)]
    pub profile: Option<Profile>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// A number, or crit*FACTOR relative to the estimated critical radius.
    #[arg(long, global = true)]
    pub r: Option<RSpec>,
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Use radius-extrapolated Green values instead of the truncated table.
    #[arg(long, global = true)]
    pub extrapolate: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Clone)]
pub enum Command {
    /// Geodesic acceptor: build summary, edge-list export or self-check.
    Automaton {
        #[command(subcommand)]
        action: AutomatonAction,
    },
    /// Build or load the ball transition table.
    Ball,
    /// Green column G_r(1, ·) with per-sphere statistics.
    Green,
    SpectralRadius,
    /// Maximal Ancona ratio by geodesic length.
    Ancona,
    /// Exponential decay of G_r(1, x) in |x|.
    Decay,
    /// Martin kernel ratios along a ray.
    Martin {
        /// Base point x; defaults to the configured target.
        #[arg(long)]
        x: Option<String>,
    },
    /// Cylinder potential and pressure at θ over the r grid.
    Pressure,
    ThetaRoot,
    SphereSums,
    Eta,
    LevelSets,
    CriticalFit,
    LltFit,
    /// Extreme eigenvalues of the ball-restricted operator.
    Spectrum,
    /// Branching random walk estimate of G_r(1, target).
    Brw,
    PairSum {
        #[arg(long, default_value_t = 40)]
        horizon: usize,
        #[arg(long, default_value_t = 20)]
        pairs: usize,
    },
    /// Acceptance suite; exits nonzero listing the failed criteria.
    Report {
        /// Restrict to these criterion numbers.
        #[arg(long, value_delimiter = ',')]
        only: Vec<u8>,
    },
}

#[derive(Subcommand, Debug, Clone, Copy)]
pub enum AutomatonAction {
    Build,
    Export,
    Check,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Automaton { .. } => "automaton",
            Command::Ball => "ball",
            Command::Green => "green",
            Command::SpectralRadius => "spectral-radius",
            Command::Ancona => "ancona",
            Command::Decay => "decay",
            Command::Martin { .. } => "martin",
            Command::Pressure => "pressure",
            Command::ThetaRoot => "theta-root",
            Command::SphereSums => "sphere-sums",
            Command::Eta => "eta",
            Command::LevelSets => "level-sets",
            Command::CriticalFit => "critical-fit",
            Command::LltFit => "llt-fit",
            Command::Spectrum => "spectrum",
            Command::Brw => "brw",
            Command::PairSum { .. } => "pair-sum",
            Command::Report { .. } => "report",
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CmdError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Cache(#[from] CacheError),
    #[error(transparent)]
    Core(#[from] hyperwalk_core::Error),
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Failed(String),
}

impl CmdError {
    /// Stable machine-readable error class.
    pub fn kind(&self) -> String {
        use hyperwalk_core::Error as E;
        match self {
            CmdError::Config(_) => "config".into(),
            CmdError::Cache(_) => "cache".into(),
            CmdError::Io(_) => "io".into(),
            CmdError::Usage(_) => "usage".into(),
            CmdError::Failed(_) => "check_failed".into(),
            CmdError::Core(e) => format!(
                "core:{}",
                match e {
                    E::PresentationMismatch => "presentation_mismatch",
                    E::InvalidPresentation(_) => "invalid_presentation",
                    E::BadToken(_) => "bad_token",
                    E::Validation { .. } => "validation",
                    E::Budget { .. } => "budget",
                    E::RadiusTooSmall { .. } => "radius_too_small",
                    E::NoConvergence { .. } => "no_convergence",
                    E::Supercritical { .. } => "supercritical",
                    E::Coverage(_) => "coverage",
                    E::Domain(_) => "domain",
                    E::Hypothesis(_) => "hypothesis",
                    E::NoBracket { .. } => "no_bracket",
                    E::InsufficientData(_) => "insufficient_data",
                    E::NotApplicable(_) => "not_applicable",
                }
            ),
        }
    }

    pub fn record(&self, subcommand: &str) -> serde_json::Value {
        json!({ "error": { "subcommand": subcommand, "kind": self.kind(), "message": self.to_string() } })
    }
}

type Res<T> = Result<T, CmdError>;

/// Applies `f` to every item on up to `threads` scoped threads; the output
/// order matches the input order.
pub fn par_map<T: Sync, U: Send>(items: &[T], threads: usize, f: impl Fn(&T) -> U + Sync) -> Vec<U> {
    if threads <= 1 || items.len() <= 1 {
        return items.iter().map(f).collect();
    }
    let slots: Vec<Mutex<Option<U>>> = items.iter().map(|_| Mutex::new(None)).collect();
    let t = threads.min(items.len());
    std::thread::scope(|s| {
        for w in 0..t {
            let (f, slots) = (&f, &slots);
            s.spawn(move || {
                for i in (w..items.len()).step_by(t) {
                    *slots[i].lock().unwrap() = Some(f(&items[i]));
                }
            });
        }
    });
    slots.into_iter().map(|m| m.into_inner().unwrap().unwrap()).collect()
}

/// A Green source backed either by a truncated column or by the
/// radius-extrapolated values.
pub enum Source<'a> {
    Table(TableGreen<'a>),
    Extrapolated(RadiusExtrapolated<'a>),
}

impl<'a> Source<'a> {
    pub fn as_dyn(&self) -> &dyn GreenSource {
        match self {
            Source::Table(t) => t,
            Source::Extrapolated(e) => e,
        }
    }
    pub fn values(&self) -> &[f64] {
        match self {
            Source::Table(t) => &t.values,
            Source::Extrapolated(e) => &e.values,
        }
    }
    pub fn radius(&self) -> usize {
        match self {
            Source::Table(t) => t.radius,
            Source::Extrapolated(e) => e.radius,
        }
    }
}

pub struct Ctx {
    pub cfg: ExperimentConfig,
    pub p: Presentation,
    pub sd: StepDistribution,
    pub aut: Automaton,
    pub cache: PathBuf,
    pub extrapolate: bool,
    pub r_flag: Option<RSpec>,
    hits: Mutex<Vec<String>>,
    ball: OnceLock<BallTable>,
    critical: OnceLock<(f64, (f64, f64))>,
}

fn ball_mode(s: &str) -> Res<BallMode> {
    match s {
        "auto" => Ok(BallMode::Auto),
        "exact" => Ok(BallMode::Exact),
        "radial" => Ok(BallMode::Radial),
        _ => Err(CmdError::Usage(format!("ball mode `{s}`"))),
    }
}

impl Ctx {
    pub fn from_cli(cli: &Cli) -> Res<Self> {
        let mut cfg = match &cli.config {
            Some(path) => ExperimentConfig::parse(&fs::read_to_string(path)?)?,
            None => ExperimentConfig::for_profile(cli.profile.unwrap_or(Profile::Desk)),
        };
        if let Some(p) = cli.profile {
            cfg.profile = p;
        }
        if let Some(s) = cli.seed {
            cfg.seed = s;
        }
        if let Some(t) = cli.threads {
            cfg.threads = t;
        }
        if let Some(o) = &cli.out {
            cfg.out = o.clone();
        }
        cfg.validate()?;
        let p = cfg.presentation()?;
        let sd = StepDistribution::parse(&p, &cfg.step)?;
        let aut = Automaton::build(&p);
        let cache = cache_root(cli.cache.as_deref(), cfg.cache.as_deref());
        Ok(Ctx {
            cfg,
            p,
            sd,
            aut,
            cache,
            extrapolate: cli.extrapolate,
            r_flag: cli.r,
            hits: Mutex::new(Vec::new()),
            ball: OnceLock::new(),
            critical: OnceLock::new(),
        })
    }

    fn hit(&self, what: String) {
        self.hits.lock().unwrap().push(what);
    }

    pub fn ball(&self) -> Res<&BallTable> {
        if self.ball.get().is_none() {
            let (bt, hit) = load_or_build_ball(
                &self.cache,
                &self.p,
                &self.sd,
                self.cfg.radius,
                ball_mode(&self.cfg.ball_mode)?,
                self.cfg.state_budget,
            )?;
            if hit {
                self.hit(format!("ball M={}", self.cfg.radius));
            }
            let _ = self.ball.set(bt);
        }
        Ok(self.ball.get().unwrap())
    }

    /// Closed form for simple random walk on a free group, otherwise the
    /// spectral estimate from the ball of the configured spectral radius.
    fn exact_critical(&self) -> Option<f64> {
        match self.p.kind() {
            GroupKind::Free { rank } if self.sd.is_isotropic_nearest_neighbor(&self.p) => {
                let k = rank as f64;
                let rho = (2.0 * k - 1.0).sqrt() / k;
                Some(1.0 / (self.sd.stay() + (1.0 - self.sd.stay()) * rho))
            }
            _ => None,
        }
    }

    pub fn critical(&self) -> Res<(f64, (f64, f64))> {
        if let Some(c) = self.critical.get() {
            return Ok(*c);
        }
        let c = match self.exact_critical() {
            Some(r) => (r, (r, r)),
            None => {
                let est = if self.cfg.spectral_radius == self.cfg.radius {
                    spectral_radius_from_table(self.ball()?)?
                } else {
                    let (bt, _) = load_or_build_ball(
                        &self.cache,
                        &self.p,
                        &self.sd,
                        self.cfg.spectral_radius,
                        ball_mode(&self.cfg.ball_mode)?,
                        self.cfg.state_budget,
                    )?;
                    spectral_radius_from_table(&bt)?
                };
                (est.r_hat, est.r_bracket())
            }
        };
        let _ = self.critical.set(c);
        Ok(c)
    }

    fn needs_critical(spec: RSpec) -> bool {
        matches!(spec, RSpec::Crit(_))
    }

    pub fn resolve(&self, spec: RSpec) -> Res<f64> {
        Ok(if Self::needs_critical(spec) { spec.resolve(self.critical()?.0) } else { spec.resolve(0.0) })
    }

    /// The single r of a subcommand: the flag, else the configured `green.r`.
    pub fn r(&self) -> Res<f64> {
        self.resolve(self.r_flag.unwrap_or(self.cfg.r))
    }

    /// The flag as a one-point grid, else the configured grid.
    pub fn r_grid(&self) -> Res<Vec<f64>> {
        match self.r_flag {
            Some(s) => Ok(vec![self.resolve(s)?]),
            None => self.cfg.r_grid.iter().map(|&s| self.resolve(s)).collect(),
        }
    }

    pub fn options(&self) -> GreenOptions {
        GreenOptions { solver: self.cfg.solver, tol: self.cfg.tol, ..GreenOptions::default() }
    }

    pub fn source(&self, r: f64) -> Res<Source<'_>> {
        let bt = self.ball()?;
        if self.extrapolate && !bt.is_radial() {
            return Ok(Source::Extrapolated(RadiusExtrapolated::build(bt, r)?));
        }
        let (t, hit) = load_or_solve_green(&self.cache, bt, r, &DomainSpec::FullBall, &self.p.identity(), &self.options())?;
        if hit {
            self.hit(format!("green r={r:?}"));
        }
        Ok(Source::Table(t.as_source(bt)?))
    }

    pub fn output(&self, subcommand: &str) -> Res<OutputDir> {
        Ok(OutputDir::create(&self.cfg.out, subcommand, self.cfg.hash())?)
    }

    pub fn finish(&self, mut out: OutputDir) -> Res<()> {
        out.cache_hits = self.hits.lock().unwrap().clone();
        out.finish()?;
        Ok(())
    }
}

#[derive(Serialize)]
struct FitJson<'a> {
    quantity: &'a str,
    exponent: f64,
    constant: f64,
    range: (f64, f64),
    residual: f64,
    sensitivity: Option<(f64, f64)>,
    spread: (f64, f64),
    points: usize,
    method: &'a str,
    flagged: bool,
    /// Where the fitted values came from.
    values: &'static str,
}

impl<'a> FitJson<'a> {
    fn new(f: &'a FitResult, values: &'static str) -> Self {
        FitJson {
            quantity: &f.quantity,
            exponent: f.exponent,
            constant: f.constant,
            range: f.range,
            residual: f.residual,
            sensitivity: f.sensitivity,
            spread: f.spread,
            points: f.points,
            method: &f.method,
            flagged: f.flagged,
            values,
        }
    }
}

fn sums_of(ctx: &Ctx, src: &Source, theta: f64) -> Res<SphereSums> {
    let bt = ctx.ball()?;
    let m = src.radius();
    let sums = table_sphere_sums(bt, src.values(), theta, m);
    let hi = if m > 3 { m - 2 } else { m };
    Ok(fit_sphere_sums(&sums, theta, (1.min(hi - 1), hi))?)
}

pub fn run(cli: &Cli) -> Res<()> {
    let ctx = Ctx::from_cli(cli)?;
    let name = cli.command.name();
    let mut out = ctx.output(name)?;
    let cfg = &ctx.cfg;
    match &cli.command {
        Command::Automaton { action } => {
            let a = &ctx.aut;
            match action {
                AutomatonAction::Build => {
                    let s = a.check_structure();
                    out.json(
                        "automaton.json",
                        &json!({
                            "group": cfg.group.to_string(),
                            "variant": format!("{:?}", a.variant()),
                            "states": s.states,
                            "edges": s.edges,
                            "recurrent_edges": s.recurrent_edges,
                            "growth_rate": a.growth_rate()?,
                            "sphere_counts": a.sphere_counts(cfg.max_len).iter().map(|c| c.to_string()).collect::<Vec<_>>(),
                        }),
                    )?;
                }
                AutomatonAction::Export => out.write("automaton.tsv", a.export_edge_list().as_bytes())?,
                AutomatonAction::Check => {
                    let s = a.check_structure();
                    let b = bijection_test(a, cfg.max_len);
                    let rows: Vec<_> = b
                        .rows
                        .iter()
                        .map(|r| json!({"m": r.m, "paths": r.paths.to_string(), "bfs_sphere": r.bfs_sphere, "non_geodesic": r.non_geodesic, "duplicates": r.duplicates}))
                        .collect();
                    let ok = b.pass && s.all_reachable && s.no_edge_into_start && s.recurrent_strongly_connected;
                    out.json(
                        "automaton-check.json",
                        &json!({
                            "pass": ok,
                            "bijection": rows,
                            "all_reachable": s.all_reachable,
                            "no_edge_into_start": s.no_edge_into_start,
                            "recurrent_strongly_connected": s.recurrent_strongly_connected,
                            "period": s.period,
                        }),
                    )?;
                    if !ok {
                        ctx.finish(out)?;
                        return Err(CmdError::Failed(format!("acceptor check failed up to length {}", cfg.max_len)));
                    }
                }
            }
        }
        Command::Ball => {
            let bt = ctx.ball()?;
            let spheres: Vec<f64> =
                (0..=bt.radius()).map(|m| bt.sphere_range(m).map(|i| bt.weight(i)).sum()).collect();
            out.json(
                "ball.json",
                &json!({
                    "radius": bt.radius(),
                    "rows": bt.len(),
                    "elements": bt.element_count(),
                    "nnz": bt.nnz(),
                    "radial": bt.is_radial(),
                    "step": bt.step().signature(),
                    "sphere_sizes": spheres,
                }),
            )?;
        }
        Command::Green => {
            let r = ctx.r()?;
            let bt = ctx.ball()?;
            let opts = GreenOptions { gap: true, ..ctx.options() };
            let t = hyperwalk_core::green::green_truncated_with(bt, r, &DomainSpec::FullBall, &ctx.p.identity(), &opts)?;
            let ext = if bt.is_radial() { None } else { RadiusExtrapolated::build(bt, r).ok().map(|e| e.values[0]) };
            let mut csv = Csv::new("spheres", &["m", "count", "min", "max", "sum_sq"]);
            for m in 0..=bt.radius() {
                let rng = bt.sphere_range(m);
                let count: f64 = rng.clone().map(|i| bt.weight(i)).sum();
                let min = rng.clone().map(|i| t.values[i]).fold(f64::INFINITY, f64::min);
                let max = rng.clone().map(|i| t.values[i]).fold(0.0, f64::max);
                let sq: f64 = rng.map(|i| bt.weight(i) * t.values[i] * t.values[i]).sum();
                csv.row(vec![m.to_string(), num(count), num(min), num(max), num(sq)]);
            }
            out.csv("spheres.csv", &csv)?;
            out.json(
                "green.json",
                &json!({
                    "r": r,
                    "g11": t.values[0],
                    "g11_extrapolated": ext,
                    "truncation_gap": t.truncation_gap,
                    "residual": t.residual,
                    "iterations": t.iterations,
                    "radius": t.radius,
                }),
            )?;
        }
        Command::SpectralRadius => {
            let bt = ctx.ball()?;
            let est = spectral_radius_from_table(bt)?;
            let mut csv = Csv::new("spectral", &["M", "lambda"]);
            for (m, l) in &est.lambda {
                csv.row(vec![m.to_string(), num(*l)]);
            }
            out.csv("spectral.csv", &csv)?;
            out.json(
                "spectral.json",
                &json!({
                    "rho_hat": est.rho_hat,
                    "rho_bracket": est.bracket,
                    "r_hat": est.r_hat,
                    "r_bracket": est.r_bracket(),
                    "certified_lower": est.certified_lower,
                    "algebraic": est.algebraic,
                    "cosine": est.cosine,
                    "aitken": est.aitken,
                    "heuristic": est.heuristic,
                    "exact_r": ctx.exact_critical(),
                }),
            )?;
        }
        Command::Ancona => {
            let r = ctx.r()?;
            let src = ctx.source(r)?;
            let len = cfg.max_len.min(src.radius());
            let mut csv = Csv::new("ancona", &["length", "max_ratio"]);
            for l in 2..=len {
                csv.row(vec![l.to_string(), num(max_ancona_ratio(src.as_dyn(), &ctx.aut, l)?)]);
            }
            out.csv("ancona.csv", &csv)?;
        }
        Command::Decay => {
            let r = ctx.r()?;
            let src = ctx.source(r)?;
            let d = decay_fit(src.as_dyn(), &ctx.aut, 1, src.radius())?;
            out.json(
                "decay.json",
                &json!({"r": r, "rate": d.rate, "constant": d.constant, "residual": d.residual, "spheres": d.spheres, "strictly_decreasing": d.strictly_decreasing}),
            )?;
        }
        Command::Martin { x } => {
            let r = ctx.r()?;
            let src = ctx.source(r)?;
            let x = ctx.p.parse_element(x.as_deref().unwrap_or(&cfg.target))?;
            let ray = RaySpec::default_for(&ctx.aut)?;
            let hi = src.radius().saturating_sub(x.len());
            if hi < 3 {
                return Err(CmdError::Usage(format!("ball radius {} too small for x of length {}", src.radius(), x.len())));
            }
            let fit = holder_rate_fit(src.as_dyn(), &x, &ray, (1, hi))?;
            let mut csv = Csv::new("martin", &["n", "ratio", "difference"]);
            for n in 1..=hi {
                let diff = fit.differences.iter().find(|d| d.0 == n).map_or(0.0, |d| d.1);
                csv.row(vec![n.to_string(), num(martin_ratio(src.as_dyn(), &x, &ray, n)?), num(diff)]);
            }
            out.csv("martin.csv", &csv)?;
            out.json(
                "martin.json",
                &json!({"r": r, "rate": fit.rate, "constant": fit.constant, "residual": fit.residual, "decreasing": fit.decreasing, "low_confidence": fit.low_confidence}),
            )?;
        }
        Command::Pressure => {
            let rs = ctx.r_grid()?;
            let k = cfg.depth;
            let chain = refine_with_budget(&ctx.aut, k, cfg.chain_budget)?;
            ctx.ball()?;
            let results = par_map(&rs, cfg.threads, |&r| -> Res<_> {
                let src = ctx.source(r)?;
                let pot = build_potential(src.as_dyn(), &ctx.aut, k)?;
                let pr = pressure_of(&chain, &pot, cfg.theta)?;
                let delta = if k < src.radius() {
                    Some(depth_delta(&build_potential(src.as_dyn(), &ctx.aut, k + 1)?, k))
                } else {
                    None
                };
                Ok((r, pot, pr, delta))
            });
            let mut pcsv = Csv::new("potential", &["prefix", "value", "depth", "r"]);
            let mut csv = Csv::new("pressure", &["r", "theta", "k", "pressure", "gap", "depth_delta"]);
            for res in results {
                let (r, pot, pr, delta) = res?;
                for (w, v) in &pot.values {
                    pcsv.row(vec![ctx.p.format_word(w), num(*v), w.len().to_string(), num(r)]);
                }
                csv.row(vec![
                    num(r),
                    num(cfg.theta),
                    k.to_string(),
                    num(pr.value),
                    num(pr.gap),
                    delta.map_or(String::from("NA"), num),
                ]);
            }
            out.csv("potential.csv", &pcsv)?;
            out.csv("pressure.csv", &csv)?;
        }
        Command::ThetaRoot => {
            let r = ctx.r()?;
            let src = ctx.source(r)?;
            let chain = refine_with_budget(&ctx.aut, cfg.depth, cfg.chain_budget)?;
            let pot = build_potential(src.as_dyn(), &ctx.aut, cfg.depth)?;
            let theta = theta_root(&chain, &pot, 1e-10)?;
            out.json("theta-root.json", &json!({"r": r, "k": cfg.depth, "theta": theta}))?;
        }
        Command::SphereSums => {
            let rs = ctx.r_grid()?;
            let mut csv = Csv::new("sphere-sums", &["r", "m", "sum"]);
            let mut fits = Vec::new();
            for r in rs {
                let src = ctx.source(r)?;
                let s = sums_of(&ctx, &src, cfg.theta)?;
                for (m, v) in &s.sums {
                    csv.row(vec![num(r), m.to_string(), num(*v)]);
                }
                fits.push(json!({"r": r, "theta": s.theta, "rate": s.rate, "constant": s.constant, "residual": s.residual, "fit_range": s.fit_range}));
            }
            out.csv("sphere-sums.csv", &csv)?;
            out.json("sphere-sums.json", &fits)?;
        }
        Command::Eta => {
            let r = ctx.r()?;
            let src = ctx.source(r)?;
            let e = eta(&sums_of(&ctx, &src, 2.0)?);
            out.json(
                "eta.json",
                &json!({"r": r, "eta": e.value, "truncated": e.truncated, "tail": e.tail, "tail_fraction": e.tail_fraction, "unreliable": e.unreliable}),
            )?;
        }
        Command::LevelSets => {
            let r = ctx.r()?;
            let src = ctx.source(r)?;
            let bt = ctx.ball()?;
            let data = level_data_table(bt, src.values());
            let outer = data.iter().filter(|d| d.0 == src.radius()).map(|d| d.1).fold(0.0f64, f64::max);
            // ten points per decade on the 10^(t/10) lattice, two decades above the outer sphere
            let t0 = (10.0 * outer.log10()).floor() as i32 + 1;
            let eps: Vec<f64> = (t0..=t0 + 20).filter(|&t| t < 0).map(|t| 10f64.powf(t as f64 / 10.0)).collect();
            let rows = level_set_counts(&data, &eps)?;
            let mut csv = Csv::new("level-sets", &["eps", "count", "eps2_count"]);
            for (e, c, c2) in &rows {
                csv.row(vec![num(*e), num(*c), num(*c2)]);
            }
            out.csv("level-sets.csv", &csv)?;
            out.json("level-sets.json", &json!({"r": r, "variation": level_set_ratio(&rows), "outer_max": outer}))?;
        }
        Command::CriticalFit => {
            let (r_hat, bracket) = ctx.critical()?;
            let mut deltas = cfg.delta_grid.clone();
            for d in [cfg.delta_work, 2.0 * cfg.delta_work] {
                if !deltas.contains(&d) {
                    deltas.push(d);
                }
            }
            // truncated free-group tables lose too much mass near R; use the closed form there
            let oracle = match ctx.p.kind() {
                GroupKind::Free { rank } if ctx.exact_critical().is_some() && ctx.sd.stay() == 0.0 => {
                    Some(FreeGroupOracle::new(rank as usize)?)
                }
                _ => None,
            };
            if oracle.is_none() {
                ctx.ball()?;
            }
            let vals = par_map(&deltas, cfg.threads, |&d| -> Res<(f64, f64)> {
                let r = r_hat * (1.0 - d);
                match &oracle {
                    Some(o) => Ok((r, o.g(r)?)),
                    None => Ok((r, ctx.source(r)?.values()[0])),
                }
            });
            let vals: Vec<(f64, f64)> = vals.into_iter().collect::<Res<_>>()?;
            let pts: Vec<(f64, f64)> =
                deltas.iter().zip(&vals).filter(|(d, _)| cfg.delta_grid.contains(d)).map(|(_, v)| *v).collect();
            let fit = match &oracle {
                Some(o) => critical_exponent_fit(&pts, r_hat, o.g(r_hat)?)?,
                None => {
                    let at = |d: f64| vals[deltas.iter().position(|&x| x == d).unwrap()].1;
                    let proxies = richardson_proxies(at(cfg.delta_work), at(2.0 * cfg.delta_work));
                    critical_exponent_bracketed(&pts, r_hat, Some(bracket), proxies)?
                }
            };
            let values = match (&oracle, ctx.extrapolate) {
                (Some(_), _) => "closed form",
                (None, true) => "radius-extrapolated",
                (None, false) => "truncated",
            };
            out.json("critical-fit.json", &FitJson::new(&fit, values))?;
        }
        Command::LltFit => {
            let (r_hat, bracket) = ctx.critical()?;
            let (lo, hi) = cfg.n_range;
            let mut values = "distance chain";
            let lp: Vec<(usize, f64)> = match ctx.p.kind() {
                GroupKind::Free { rank } if ctx.exact_critical().is_some() && ctx.sd.stay() == 0.0 => {
                    FreeGroupOracle::new(rank as usize)?.log_return(hi).into_iter().enumerate().collect()
                }
                _ => {
                    values = "ball return probabilities";
                    let bt = ctx.ball()?;
                    let n_max = hi.min(2 * bt.radius() / bt.step().jump_bound().max(1));
                    let (ret, _) = return_probabilities(bt, n_max)?;
                    ret.iter().enumerate().map(|(n, v)| (n, v.ln())).collect()
                }
            };
            let br = (bracket.0 != bracket.1).then_some(bracket);
            let fit = llt_fit(&lp, r_hat, br, (lo, hi), cfg.parity)?;
            out.json("llt-fit.json", &FitJson::new(&fit, values))?;
        }
        Command::Spectrum => {
            let (r_hat, _) = ctx.critical()?;
            let bt = ctx.ball()?;
            let s = spectrum_check(bt, r_hat, 2 * bt.radius())?;
            out.json(
                "spectrum.json",
                &json!({"radius": s.radius, "lambda_min": s.lambda_min, "lambda_max": s.lambda_max, "gap": s.gap, "envelope_excess": s.envelope_excess}),
            )?;
        }
        Command::Brw => {
            let r = ctx.r()?;
            let bt = ctx.ball()?;
            let target = ctx.p.parse_element(&cfg.target)?;
            let est = green_via_brw(bt, r, &target, cfg.trials, cfg.seed, 1_000_000)?;
            let direct = ctx.source(r)?.as_dyn().green(&target);
            out.json(
                "brw.json",
                &json!({
                    "r": r,
                    "target": cfg.target,
                    "mean": est.mean,
                    "standard_error": est.standard_error,
                    "trials": est.trials,
                    "cap_hits": est.cap_hits,
                    "unreliable": est.unreliable,
                    "direct": direct,
                }),
            )?;
        }
        Command::PairSum { horizon, pairs } => {
            let r = ctx.r()?;
            let src = ctx.source(r)?;
            let d = decay_fit(src.as_dyn(), &ctx.aut, 1, src.radius())?;
            let window = (horizon / 2, *horizon);
            let rep =
                pair_summability_check(src.as_dyn(), &ctx.sd, *horizon, *pairs, cfg.seed, (d.constant, d.rate), window)?;
            let mut csv = Csv::new("pair-sum", &["n", "partial_sum"]);
            for n in 0..=*horizon {
                let mean = rep.partial.iter().map(|s| s[n]).sum::<f64>() / rep.partial.len() as f64;
                csv.row(vec![n.to_string(), num(mean)]);
            }
            out.csv("pair-sum.csv", &csv)?;
            out.json(
                "pair-sum.json",
                &json!({"r": r, "decreasing_fraction": rep.decreasing_fraction, "tail_ratio": rep.tail_ratio, "fallback": (d.constant, d.rate)}),
            )?;
        }
        Command::Report { only } => {
            let only = (!only.is_empty()).then_some(only.as_slice());
            let outcomes = run_suite(cfg.profile, cfg.seed, only, |o| {
                eprintln!("{}", o.line());
            });
            out.csv("report.csv", &report_csv(&outcomes))?;
            out.json("report.json", &outcomes)?;
            let failed: Vec<u8> = outcomes.iter().filter(|o| o.status == Status::Fail).map(|o| o.id).collect();
            ctx.finish(out)?;
            if !failed.is_empty() {
                return Err(CmdError::Failed(format!("acceptance criteria failed: {failed:?}")));
            }
            return Ok(());
        }
    }
    ctx.finish(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn par_map_keeps_order() {
        let xs: Vec<u64> = (0..37).collect();
        let seq = par_map(&xs, 1, |x| x * x);
        assert_eq!(par_map(&xs, 4, |x| x * x), seq);
        assert_eq!(seq[36], 1296);
    }

    #[test]
    fn cli_parses_global_flags() {
        let cli = Cli::try_parse_from(["hyperwalk", "pressure", "--r", "crit*0.8", "--profile", "smoke", "--threads", "2"]).unwrap();
        assert_eq!(cli.r, Some(RSpec::Crit(0.8)));
        assert_eq!(cli.profile, Some(Profile::Smoke));
        assert_eq!(cli.command.name(), "pressure");
        assert!(Cli::try_parse_from(["hyperwalk", "green", "--profile", "huge"]).is_err());
    }
}
