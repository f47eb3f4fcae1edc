//! Acceptance suite shared by `hyperwalk report` and the acceptance test
//! target. Free-group checks compare against closed forms; surface-group
//! checks are property checks on genus 2 at the profile's ball radius.

use std::cell::RefCell;
use std::rc::Rc;
use std::time::Instant;

use hyperwalk_core::asymptotics::{
    critical_exponent_bracketed, critical_exponent_fit, llt_fit, rd_bounds_check, richardson_proxies, spectrum_check,
    FreeGroupOracle,
};
use hyperwalk_core::automaton::{bfs_spheres, bijection_test};
use hyperwalk_core::boundary::{build_potential, holder_rate_fit, RaySpec};
use hyperwalk_core::green::{
    check_gprime, green_truncated, green_via_brw, max_ancona_ratio, DomainSpec, GreenSource, RadiusExtrapolated,
    RestrictedPairs, TableGreen,
};
use hyperwalk_core::thermo::{
    fit_sphere_sums, level_data_source, level_data_table, level_set_counts, level_set_ratio, pressure_of, refine,
    table_sphere_sums, CylinderChain,
};
use hyperwalk_core::walk::{return_probabilities, spectral_radius_from_table, spectral_radius_estimate, BallMode, BallTable, StepDistribution};
use hyperwalk_core::{Automaton, GroupElement, Presentation};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::Profile;
use crate::output::{num, Csv};

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize)]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

#[derive(Clone, Debug, Serialize)]
pub struct Outcome {
    pub id: u8,
    pub name: &'static str,
    pub status: Status,
    pub measured: String,
    pub tolerance: String,
    pub seconds: f64,
    pub limit_seconds: Option<f64>,
    pub notes: Vec<String>,
}

impl Outcome {
    pub fn line(&self) -> String {
        let tag = match self.status {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Skipped => "SKIP",
        };
        let limit = self.limit_seconds.map_or(String::new(), |l| format!(" / {l:.0} s"));
        format!(
            "{tag} {:>2} {}: {} [{}] ({:.1} s{limit})",
            self.id, self.name, self.measured, self.tolerance, self.seconds
        )
    }
}

struct Check {
    pass: bool,
    measured: String,
    tolerance: String,
    notes: Vec<String>,
}

type CheckResult = Result<Check, String>;

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

/// Sizes used for the genus-2 parts of the suite.
#[derive(Copy, Clone, Debug)]
pub struct Scale {
    pub radius: usize,
    pub depth: usize,
    pub ancona_len: usize,
    pub holder_n: usize,
    pub spectrum_radius: usize,
    pub pair_radius: usize,
    pub bijection_m: usize,
    /// Run the checks whose thresholds are stated for the desk scale.
    pub full: bool,
}

impl Scale {
    pub fn for_profile(p: Profile) -> Self {
        match p {
            Profile::Smoke => Scale {
                radius: 5,
                depth: 2,
                ancona_len: 5,
                holder_n: 3,
                spectrum_radius: 5,
                pair_radius: 4,
                bijection_m: 5,
                full: false,
            },
            Profile::Desk => Scale {
                radius: 8,
                depth: 3,
                ancona_len: 8,
                holder_n: 6,
                spectrum_radius: 6,
                pair_radius: 6,
                bijection_m: 6,
                full: true,
            },
            Profile::Deep => Scale {
                radius: 9,
                depth: 4,
                ancona_len: 8,
                holder_n: 7,
                spectrum_radius: 7,
                pair_radius: 6,
                bijection_m: 6,
                full: true,
            },
        }
    }
}

pub const DELTA_GRID: [f64; 14] = [1e-3, 2e-3, 4e-3, 7e-3, 0.01, 0.015, 0.02, 0.03, 0.05, 0.07, 0.1, 0.15, 0.2, 0.3];

/// Genus-2 state shared across criteria, with memoised solves.
struct Surface<'a> {
    p: &'a Presentation,
    aut: &'a Automaton,
    bt: &'a BallTable,
    r_hat: f64,
    r_bracket: (f64, f64),
    ext: RefCell<Vec<(f64, Rc<RadiusExtrapolated<'a>>)>>,
    trunc: RefCell<Vec<(f64, Rc<TableGreen<'a>>)>>,
}

impl<'a> Surface<'a> {
    fn at_delta(&self, d: f64) -> f64 {
        self.r_hat * (1.0 - d)
    }

    fn ext(&self, r: f64) -> Result<Rc<RadiusExtrapolated<'a>>, String> {
        if let Some((_, e)) = self.ext.borrow().iter().find(|e| e.0 == r) {
            return Ok(e.clone());
        }
        let e = Rc::new(RadiusExtrapolated::build(self.bt, r).map_err(err)?);
        self.ext.borrow_mut().push((r, e.clone()));
        Ok(e)
    }

    fn trunc(&self, r: f64) -> Result<Rc<TableGreen<'a>>, String> {
        if let Some((_, t)) = self.trunc.borrow().iter().find(|t| t.0 == r) {
            return Ok(t.clone());
        }
        let t = match self.ext.borrow().iter().find(|e| e.0 == r) {
            Some((_, e)) => e.truncated_source(),
            None => green_truncated(self.bt, r, &DomainSpec::FullBall, &self.p.identity())
                .and_then(|g| g.as_source(self.bt))
                .map_err(err)?,
        };
        let t = Rc::new(t);
        self.trunc.borrow_mut().push((r, t.clone()));
        Ok(t)
    }
}

fn free_closed_form(r: f64) -> f64 {
    if r == 0.0 {
        return 1.0;
    }
    let f = (2.0 - (4.0 - 3.0 * r * r).max(0.0).sqrt()) / (3.0 * r);
    1.0 / (1.0 - r * f)
}

fn c1() -> CheckResult {
    let p = Presentation::free(2).map_err(err)?;
    let sd = StepDistribution::srw(&p);
    let bt = BallTable::build(&p, &sd, 30, BallMode::Radial).map_err(err)?;
    let mut worst: f64 = 0.0;
    let mut notes = Vec::new();
    for r in [0.25, 0.5, 0.75, 1.0, 1.1] {
        let g = green_truncated(&bt, r, &DomainSpec::FullBall, &p.identity()).map_err(err)?.values[0];
        let e = (g - free_closed_form(r)).abs();
        notes.push(format!("r={r}: G={g:.12} err={e:.2e}"));
        worst = worst.max(e);
    }
    Ok(Check { pass: worst < 1e-6, measured: format!("max error {worst:.2e}"), tolerance: "< 1e-6".into(), notes })
}

fn c2() -> CheckResult {
    let p = Presentation::free(2).map_err(err)?;
    let sd = StepDistribution::srw(&p);
    let (est, _) = spectral_radius_estimate(&p, &sd, 14, BallMode::Auto).map_err(err)?;
    let target = 3f64.sqrt() / 2.0;
    let (lo, hi) = est.bracket;
    Ok(Check {
        pass: lo <= target && target <= hi && hi - lo < 1e-3,
        measured: format!("bracket [{lo:.7}, {hi:.7}], width {:.2e}", hi - lo),
        tolerance: "contains 0.8660254, width < 1e-3".into(),
        notes: vec![format!("lambda_14 = {:.7}", est.lambda.last().map_or(0.0, |l| l.1))],
    })
}

fn c3() -> CheckResult {
    let mut pass = true;
    let mut parts = Vec::new();
    for k in [2, 3] {
        let o = FreeGroupOracle::new(k).map_err(err)?;
        let lp: Vec<(usize, f64)> = o.log_return(2000).into_iter().enumerate().collect();
        let fit = llt_fit(&lp, o.big_r(), None, (100, 2000), Some(0)).map_err(err)?;
        pass &= (fit.exponent - 1.5).abs() <= 0.02;
        parts.push(format!("k={k}: {:.4}", fit.exponent));
    }
    Ok(Check { pass, measured: parts.join(", "), tolerance: "1.50 +- 0.02".into(), notes: vec![] })
}

fn c4(s: Option<&Surface>) -> CheckResult {
    let o = FreeGroupOracle::new(2).map_err(err)?;
    let big_r = o.big_r();
    let pts: Vec<(f64, f64)> = (0..20)
        .map(|i| big_r * (1.0 - 1e-6 * 1.45f64.powi(i)))
        .map(|r| (r, free_closed_form(r)))
        .collect();
    let fit = critical_exponent_fit(&pts, big_r, free_closed_form(big_r)).map_err(err)?;
    let free_ok = (fit.exponent - 0.5).abs() <= 0.01;
    let mut measured = format!("F2 alpha {:.4}", fit.exponent);
    let mut notes = vec![];
    let mut pass = free_ok;
    if let Some(s) = s {
        let mut g2 = Vec::new();
        for &d in &DELTA_GRID {
            let r = s.at_delta(d);
            g2.push((r, s.ext(r)?.values[0]));
        }
        let g_w = s.ext(s.at_delta(DELTA_GRID[0]))?.values[0];
        let g_2w = s.ext(s.at_delta(2.0 * DELTA_GRID[0]))?.values[0];
        let proxies = richardson_proxies(g_w, g_2w);
        let f = critical_exponent_bracketed(&g2, s.r_hat, Some(s.r_bracket), proxies).map_err(err)?;
        let (lo, hi) = f.sensitivity.unwrap_or((f.exponent, f.exponent));
        pass &= lo <= 0.5 && 0.5 <= hi && hi - lo <= 0.3;
        measured.push_str(&format!("; genus-2 alpha {:.3} in [{lo:.3}, {hi:.3}]", f.exponent));
        notes.push(format!("G_R proxies (linear, sqrt Richardson): {:.5}, {:.5}", proxies.0, proxies.1));
        notes.push(format!(
            "half-range slopes {:.3} (near R) and {:.3} (far): the grid is truncation-limited",
            f.spread.0.min(f.spread.1),
            f.spread.0.max(f.spread.1)
        ));
    } else {
        notes.push("genus-2 part needs the desk scale".into());
    }
    Ok(Check { pass, measured, tolerance: "F2 0.500 +- 0.01; genus-2 interval contains 0.5, width <= 0.3".into(), notes })
}

fn surface_pressure(s: &Surface, src: &dyn GreenSource, chain: &CylinderChain, k: usize) -> Result<f64, String> {
    let pot = build_potential(src, s.aut, k).map_err(err)?;
    Ok(pressure_of(chain, &pot, 2.0).map_err(err)?.value)
}

fn c5(s: &Surface, scale: &Scale) -> CheckResult {
    let o = FreeGroupOracle::new(2).map_err(err)?;
    let pf = o.presentation();
    let af = Automaton::build(&pf);
    let chain_f = refine(&af, 2).map_err(err)?;
    let pot = build_potential(&o.green_source(o.big_r()).map_err(err)?, &af, 2).map_err(err)?;
    let pr_free = pressure_of(&chain_f, &pot, 2.0).map_err(err)?.value;
    let mut pass = pr_free.abs() < 5e-3;
    let chain = refine(s.aut, scale.depth).map_err(err)?;
    let r_work = s.at_delta(DELTA_GRID[0]);
    let work = s.ext(r_work)?;
    let pr_work = surface_pressure(s, work.as_ref(), &chain, scale.depth)?;
    let mut notes = vec![];
    if scale.full {
        pass &= pr_work.abs() < 0.05;
    } else {
        notes.push(format!("|Pr| at R_work reported only at this scale: {pr_work:.4}"));
    }
    // Richardson in δ_work on every value, linear and √δ forms
    let twice = s.ext(s.at_delta(2.0 * DELTA_GRID[0]))?;
    let mut rich = Vec::new();
    for c in [1.0, 1.0 / (std::f64::consts::SQRT_2 - 1.0)] {
        let mut e = (*work).clone();
        for (v, b) in e.values.iter_mut().zip(&twice.values) {
            *v += c * (*v - b);
        }
        rich.push(surface_pressure(s, &e, &chain, scale.depth)?);
    }
    notes.push(format!("Richardson-extrapolated to R: Pr {:.4} (linear), {:.4} (sqrt)", rich[0], rich[1]));
    if scale.depth < work.radius {
        let deeper = refine(s.aut, scale.depth + 1).map_err(err)?;
        let pr_deep = surface_pressure(s, work.as_ref(), &deeper, scale.depth + 1)?;
        notes.push(format!("depth {} spot check: Pr = {pr_deep:.4}", scale.depth + 1));
    }
    let mut neg = Vec::new();
    for f in [0.6, 0.8, 0.9] {
        let e = s.ext(f * s.r_hat)?;
        let v = surface_pressure(s, e.as_ref(), &chain, scale.depth)?;
        pass &= v < 0.0;
        neg.push(format!("{f}: {v:.3}"));
    }
    Ok(Check {
        pass,
        measured: format!("F2 Pr {pr_free:.2e}; genus-2 Pr(R_work) {pr_work:.4}; Pr at {}", neg.join(", ")),
        tolerance: "F2 |Pr| < 5e-3; genus-2 |Pr| < 0.05 and Pr(2phi_r) < 0".into(),
        notes,
    })
}

fn c6(s: &Surface, scale: &Scale) -> CheckResult {
    let chain = refine(s.aut, scale.depth).map_err(err)?;
    let m = s.bt.radius();
    let mut pass = true;
    let mut parts = Vec::new();
    for f in [0.6, 0.8, 0.95] {
        let t = s.trunc(f * s.r_hat)?;
        let sums = table_sphere_sums(s.bt, &t.values, 2.0, m);
        // the two outermost spheres sit in the boundary layer of the truncation
        let fit = fit_sphere_sums(&sums, 2.0, (1, m - 2)).map_err(err)?;
        let pr = surface_pressure(s, t.as_ref(), &chain, scale.depth)?;
        let d = (fit.rate - pr).abs();
        pass &= d <= 0.05;
        parts.push(format!("{f}: rate {:.4} vs Pr {:.4}", fit.rate, pr));
    }
    Ok(Check { pass, measured: parts.join("; "), tolerance: "|rate - Pr| <= 0.05".into(), notes: vec![] })
}

fn c7(s: Option<&Surface>) -> CheckResult {
    let o = FreeGroupOracle::new(2).map_err(err)?;
    let pf = o.presentation();
    let af = Automaton::build(&pf);
    let src = o.green_source(o.big_r()).map_err(err)?;
    let data = level_data_source(&src, &af, 30).map_err(err)?;
    let eps: Vec<f64> = (0..21).map(|i| 0.1 * 10f64.powf(-0.1 * i as f64)).collect();
    let free = level_set_ratio(&level_set_counts(&data, &eps).map_err(err)?);
    let mut pass = free < 3.0;
    let mut measured = format!("F2 variation x{free:.3} over [1e-3, 1e-1]");
    let mut notes = vec![];
    if let Some(s) = s {
        let e = s.ext(s.at_delta(DELTA_GRID[0]))?;
        let data = level_data_table(s.bt, &e.values);
        let outer = data.iter().filter(|d| d.0 == e.radius).map(|d| d.1).fold(0.0f64, f64::max);
        // ten points per decade on the 10^(t/10) lattice, starting above the outer sphere
        let t0 = (10.0 * outer.log10()).floor() as i32 + 1;
        let eps: Vec<f64> = (t0..=t0 + 10).map(|t| 10f64.powf(t as f64 / 10.0)).collect();
        let g2 = level_set_ratio(&level_set_counts(&data, &eps).map_err(err)?);
        pass &= g2 < 5.0;
        measured.push_str(&format!("; genus-2 x{g2:.3} over [{:.3e}, {:.3e}]", eps[0], eps[10]));
        notes.push(format!("genus-2 values: radius-extrapolated G at R_work on B(1,{})", e.radius));
    } else {
        notes.push("genus-2 part needs the desk scale".into());
    }
    Ok(Check { pass, measured, tolerance: "F2 < x3 over two decades; genus-2 < x5 over one".into(), notes })
}

fn sample_indices(rng: &mut ChaCha8Rng, n: usize) -> usize {
    (rng.next_u64() % n as u64) as usize
}

fn c8(s: &Surface, scale: &Scale, seed: u64) -> CheckResult {
    let mut fails = Vec::new();
    let mut notes = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = 0.9 * s.r_hat;

    // killed-walk Green function on a smaller ball, 22 sources
    let sd = s.bt.step().clone();
    let small = BallTable::build(s.p, &sd, scale.pair_radius, BallMode::Exact).map_err(err)?;
    let pool = small.prefix_len(3.min(scale.pair_radius));
    let mut sources: Vec<GroupElement> = vec![s.p.identity()];
    while sources.len() < 22 {
        let x = small.element(sample_indices(&mut rng, pool));
        if !sources.contains(&x) {
            sources.push(x);
        }
    }
    let rp = RestrictedPairs::solve(&small, r, &sources).map_err(err)?;
    let n = sources.len();
    let mut worst_super = f64::INFINITY;
    for _ in 0..10_000 {
        let (a, b, c) = (sample_indices(&mut rng, n), sample_indices(&mut rng, n), sample_indices(&mut rng, n));
        let v = rp.first_passage(a, c) / (rp.first_passage(a, b) * rp.first_passage(b, c));
        worst_super = worst_super.min(v);
    }
    if worst_super < 1.0 - 1e-9 {
        fails.push(format!("supermultiplicativity min ratio {worst_super:.6}"));
    }
    let mut asym: f64 = 0.0;
    let mut tri = f64::INFINITY;
    let mut pos = f64::INFINITY;
    let mut diag: f64 = 0.0;
    for a in 0..n {
        diag = diag.max(rp.metric(a, a).abs());
        for b in 0..n {
            let gab = rp.green(a, &sources[b]).ok_or("coverage")?;
            let gba = rp.green(b, &sources[a]).ok_or("coverage")?;
            asym = asym.max((gab - gba).abs() / gab);
            if a != b {
                pos = pos.min(rp.metric(a, b));
            }
            for c in 0..n {
                tri = tri.min(rp.metric(a, b) + rp.metric(b, c) - rp.metric(a, c));
            }
        }
    }
    if asym > 1e-8 {
        fails.push(format!("Green asymmetry {asym:.2e}"));
    }
    if !(diag < 1e-12 && pos > 0.0 && tri > -1e-9) {
        fails.push(format!("metric axioms: d(a,a) {diag:.1e}, min d(a,b) {pos:.3e}, triangle slack {tri:.1e}"));
    }
    notes.push(format!(
        "killed walk on B(1,{}): F supermultiplicative min ratio {worst_super:.4}, asymmetry {asym:.1e}, triangle slack {tri:.1e}",
        scale.pair_radius
    ));
    // free group: F_R(x, y) = F^{d(x,y)}, so the same checks reduce to the triangle inequality
    let o = FreeGroupOracle::new(2).map_err(err)?;
    let pf = o.presentation();
    let fr = o.f(o.big_r()).map_err(err)?;
    let mut free_bad = 0;
    for _ in 0..10_000 {
        let w: Vec<GroupElement> = (0..3)
            .map(|_| {
                let len = sample_indices(&mut rng, 8);
                let letters: Vec<hyperwalk_core::Generator> =
                    (0..len).map(|_| hyperwalk_core::Generator(sample_indices(&mut rng, 4) as u8)).collect();
                pf.element(&letters)
            })
            .collect();
        let d = |x: &GroupElement, y: &GroupElement| pf.word_distance(x, y).unwrap() as i32;
        if fr.powi(d(&w[0], &w[2])) < fr.powi(d(&w[0], &w[1])) * fr.powi(d(&w[1], &w[2])) * (1.0 - 1e-12) {
            free_bad += 1;
        }
    }
    if free_bad > 0 {
        fails.push(format!("F2 supermultiplicativity violated {free_bad} times"));
    }

    let gp = check_gprime(s.bt, r, 1e-4).map_err(err)?;
    if scale.full && gp.relative_error >= 1e-2 {
        fails.push(format!("genus-2 GPrime {:.2e}", gp.relative_error));
    }
    let bf = BallTable::build(&pf, &StepDistribution::srw(&pf), 30, BallMode::Radial).map_err(err)?;
    let rf = 0.9 * o.big_r();
    let gpf = check_gprime(&bf, rf, 1e-4).map_err(err)?;
    let h = 1e-6;
    let exact = (free_closed_form(rf + h) - free_closed_form(rf - h)) / (2.0 * h);
    let free_rel = (gpf.identity - exact).abs() / exact;
    if free_rel >= 1e-3 {
        fails.push(format!("F2 GPrime {free_rel:.2e}"));
    }
    notes.push(format!("GPrime relative error: genus-2 {:.2e}, F2 {:.2e}", gp.relative_error, free_rel));

    let bij = bijection_test(s.aut, scale.bijection_m);
    if !bij.pass {
        fails.push(format!("bijection fails for some m <= {}", scale.bijection_m));
    }
    let counts = s.aut.sphere_counts(s.bt.radius());
    let total: u128 = counts.iter().sum();
    let bfs: usize = bfs_spheres(s.p, scale.bijection_m).iter().map(Vec::len).sum();
    let partial: u128 = counts[..=scale.bijection_m].iter().sum();
    if total != s.bt.len() as u128 || partial != bfs as u128 {
        fails.push(format!("sphere sums {total} vs ball {}, {partial} vs BFS {bfs}", s.bt.len()));
    }

    let (ret, _) = return_probabilities(s.bt, 2 * s.bt.radius()).map_err(err)?;
    let mut mono = true;
    for rr in [s.r_hat, s.r_bracket.0, s.r_bracket.1] {
        let q: Vec<f64> = (1..=s.bt.radius()).map(|n| ret[2 * n] * rr.powi(2 * n as i32)).collect();
        mono &= q.windows(2).all(|w| w[1] <= w[0]);
    }
    let scaled = o.scaled_return(2000);
    mono &= (1..1000).all(|n| scaled[2 * n + 2] <= scaled[2 * n]);
    if !mono {
        fails.push("R^2n p^2n increases somewhere".into());
    }
    let lp: Vec<(usize, f64)> = ret.iter().enumerate().filter(|(n, _)| n % 2 == 0).map(|(n, v)| (n, v.ln())).collect();
    let rd = rd_bounds_check(&lp, s.r_hat, (2, 2 * s.bt.radius())).map_err(err)?;
    let lpf: Vec<(usize, f64)> = o.log_return(2000).into_iter().enumerate().filter(|(n, _)| n % 2 == 0).collect();
    let rdf = rd_bounds_check(&lpf, o.big_r(), (10, 2000)).map_err(err)?;
    let synth: Vec<(usize, f64)> = (10..=2000).step_by(2).map(|n| (n, -(n as f64) * 1.3f64.ln() - 4.0 * (n as f64).ln())).collect();
    let rds = rd_bounds_check(&synth, 1.3, (10, 2000)).map_err(err)?;
    if !(rd.upper_ok && rd.lower_ok && rdf.upper_ok && rdf.lower_ok && !rds.lower_ok) {
        fails.push(format!("RD shape: genus-2 {rd:?}, F2 {rdf:?}, synthetic lower_ok {}", rds.lower_ok));
    }
    notes.push(format!(
        "RD constants genus-2 ({:.3}, {:.3}), F2 ({:.3}, {:.3})",
        rd.upper_constant, rd.lower_constant, rdf.upper_constant, rdf.lower_constant
    ));
    let measured = if fails.is_empty() { "all invariants hold".to_string() } else { fails.join("; ") };
    Ok(Check { pass: fails.is_empty(), measured, tolerance: "every invariant holds".into(), notes })
}

fn c9(s: &Surface, scale: &Scale) -> CheckResult {
    let lo = max_ancona_ratio(s.trunc(0.5 * s.r_hat)?.as_ref(), s.aut, scale.ancona_len).map_err(err)?;
    let hi = max_ancona_ratio(s.trunc(0.98 * s.r_hat)?.as_ref(), s.aut, scale.ancona_len).map_err(err)?;
    Ok(Check {
        pass: hi / lo < 2.0,
        measured: format!("max ratio {hi:.4} at 0.98R vs {lo:.4} at 0.5R, quotient {:.3}", hi / lo),
        tolerance: "quotient < 2".into(),
        notes: vec![format!("geodesics of length <= {}", scale.ancona_len)],
    })
}

fn c10(s: &Surface, scale: &Scale, seed: u64) -> CheckResult {
    let mut pass = true;
    let mut parts = Vec::new();
    let pf = Presentation::free(2).map_err(err)?;
    let bf = BallTable::build(&pf, &StepDistribution::srw(&pf), 12, BallMode::Radial).map_err(err)?;
    let rf = 0.8 * 2.0 / 3f64.sqrt();
    let sd = s.bt.step().clone();
    let small = BallTable::build(s.p, &sd, scale.pair_radius, BallMode::Exact).map_err(err)?;
    let cases: [(&str, &BallTable, f64); 2] = [("F2", &bf, rf), ("genus-2", &small, 0.8 * s.r_hat)];
    for (name, bt, r) in cases {
        let p = bt.presentation();
        let a = p.parse_element("a1").map_err(err)?;
        let direct = green_truncated(bt, r, &DomainSpec::FullBall, &p.identity()).map_err(err)?;
        let d = direct.value(bt, &a).ok_or("target outside ball")?;
        let est = green_via_brw(bt, r, &a, 10_000, seed, 1_000_000).map_err(err)?;
        let z = (est.mean - d).abs() / est.standard_error;
        pass &= z <= 3.0 && !est.unreliable;
        parts.push(format!("{name}: {:.4} +- {:.4} vs {d:.4} ({z:.2} se)", est.mean, est.standard_error));
    }
    Ok(Check { pass, measured: parts.join("; "), tolerance: "within 3 standard errors".into(), notes: vec![] })
}

fn c11(s: &Surface, scale: &Scale) -> CheckResult {
    let o = FreeGroupOracle::new(2).map_err(err)?;
    let pf = o.presentation();
    let af = Automaton::build(&pf);
    let src = o.green_source(o.big_r()).map_err(err)?;
    let ray = RaySpec::default_for(&af).map_err(err)?;
    let mut pass = true;
    let mut free_max: f64 = 0.0;
    for x in pf.generators() {
        let fit = holder_rate_fit(&src, &pf.element(&[x]), &ray, (1, 12)).map_err(err)?;
        pass &= fit.rate < 1.0 && fit.decreasing;
        free_max = free_max.max(fit.rate);
    }
    let t = s.trunc(s.at_delta(DELTA_GRID[0]))?;
    let ray = RaySpec::default_for(s.aut).map_err(err)?;
    let mut rates = Vec::new();
    for x in s.p.generators() {
        let fit = holder_rate_fit(t.as_ref(), &s.p.element(&[x]), &ray, (1, scale.holder_n)).map_err(err)?;
        pass &= fit.rate < 1.0 && fit.decreasing;
        rates.push(fit.rate);
    }
    let g2_max = rates.iter().copied().fold(0.0f64, f64::max);
    Ok(Check {
        pass,
        measured: format!("max rate F2 {free_max:.3}, genus-2 {g2_max:.3} (n <= {})", scale.holder_n),
        tolerance: "rate < 1, differences decreasing".into(),
        notes: vec![format!("genus-2 rates per generator: {}", rates.iter().map(|r| format!("{r:.3}")).collect::<Vec<_>>().join(" "))],
    })
}

fn c12(s: &Surface, scale: &Scale) -> CheckResult {
    let lazy = StepDistribution::lazy(s.p, 0.1).map_err(err)?;
    let bt = BallTable::build(s.p, &lazy, scale.spectrum_radius, BallMode::Exact).map_err(err)?;
    let r_lazy = 1.0 / (0.1 + 0.9 / s.r_hat);
    let rep = spectrum_check(&bt, r_lazy, 2 * scale.spectrum_radius).map_err(err)?;
    Ok(Check {
        pass: rep.lambda_min > -rep.lambda_max && rep.gap > 0.0,
        measured: format!("lambda_min {:.4}, lambda_max {:.4}, gap {:.4}", rep.lambda_min, rep.lambda_max, rep.gap),
        tolerance: "lambda_min > -lambda_max, gap > 0".into(),
        notes: vec![format!("M = {}", scale.spectrum_radius)],
    })
}

const NAMES: [&str; 12] = [
    "free-group Green oracle",
    "free-group spectral bracket",
    "local limit exponent",
    "critical exponent",
    "pressure zero",
    "sphere sums vs pressure",
    "level sets",
    "invariant suite",
    "Ancona boundedness",
    "branching random walk",
    "Martin ratio convergence",
    "spectrum interval",
];

const LIMITS: [Option<f64>; 12] =
    [Some(10.0), Some(30.0), Some(10.0), Some(600.0), Some(900.0), None, None, Some(1200.0), None, None, None, None];

/// Runs the suite; `only` restricts to the listed criterion numbers and
/// `progress` sees each outcome as it completes.
pub fn run_suite(profile: Profile, seed: u64, only: Option<&[u8]>, mut progress: impl FnMut(&Outcome)) -> Vec<Outcome> {
    let scale = Scale::for_profile(profile);
    let wanted = |id: u8| only.map_or(true, |o| o.contains(&id));
    let mut out = Vec::new();
    let mut record = |id: u8, setup: f64, f: &mut dyn FnMut() -> Option<CheckResult>| {
        if !wanted(id) {
            return;
        }
        let t = Instant::now();
        let res = f();
        let own = t.elapsed().as_secs_f64();
        let limit = LIMITS[id as usize - 1];
        let o = match res {
            None => Outcome {
                id,
                name: NAMES[id as usize - 1],
                status: Status::Skipped,
                measured: "not part of this profile".into(),
                tolerance: String::new(),
                seconds: own,
                limit_seconds: limit,
                notes: vec![],
            },
            Some(Ok(c)) => {
                let total = own + setup;
                let in_time = limit.map_or(true, |l| total < l);
                let mut notes = c.notes;
                if setup > 0.0 {
                    notes.push(format!("includes {setup:.1} s shared genus-2 setup in the time limit"));
                }
                if !in_time {
                    notes.push(format!("runtime {total:.1} s over the limit"));
                }
                Outcome {
                    id,
                    name: NAMES[id as usize - 1],
                    status: if c.pass && in_time { Status::Pass } else { Status::Fail },
                    measured: c.measured,
                    tolerance: c.tolerance,
                    seconds: own,
                    limit_seconds: limit,
                    notes,
                }
            }
            Some(Err(e)) => Outcome {
                id,
                name: NAMES[id as usize - 1],
                status: Status::Fail,
                measured: format!("error: {e}"),
                tolerance: String::new(),
                seconds: own,
                limit_seconds: limit,
                notes: vec![],
            },
        };
        progress(&o);
        out.push(o);
    };

    record(1, 0.0, &mut || Some(c1()));
    record(2, 0.0, &mut || Some(c2()));
    record(3, 0.0, &mut || Some(c3()));

    let needs_surface = (4..=12).any(wanted);
    let setup_t = Instant::now();
    let p = Presentation::surface(2).expect("genus 2");
    let aut = Automaton::build(&p);
    let sd = StepDistribution::srw(&p);
    let surface_parts = if needs_surface {
        BallTable::build(&p, &sd, scale.radius, BallMode::Exact)
            .and_then(|bt| spectral_radius_from_table(&bt).map(|e| (bt, e)))
            .map_err(err)
    } else {
        Err("not requested".to_string())
    };
    let setup = setup_t.elapsed().as_secs_f64();
    match &surface_parts {
        Ok((bt, est)) => {
            let s = Surface {
                p: &p,
                aut: &aut,
                bt,
                r_hat: est.r_hat,
                r_bracket: est.r_bracket(),
                ext: RefCell::new(Vec::new()),
                trunc: RefCell::new(Vec::new()),
            };
            let full = scale.full.then_some(&s);
            record(4, setup, &mut || Some(c4(full)));
            record(5, setup, &mut || Some(c5(&s, &scale)));
            record(6, setup, &mut || scale.full.then(|| c6(&s, &scale)));
            record(7, setup, &mut || Some(c7(full)));
            record(8, setup, &mut || Some(c8(&s, &scale, seed)));
            record(9, setup, &mut || Some(c9(&s, &scale)));
            record(10, setup, &mut || Some(c10(&s, &scale, seed)));
            record(11, setup, &mut || Some(c11(&s, &scale)));
            record(12, setup, &mut || Some(c12(&s, &scale)));
        }
        Err(e) => {
            for id in 4..=12 {
                let e = e.clone();
                record(id, setup, &mut || Some(Err(format!("genus-2 setup: {e}"))));
            }
        }
    }
    out
}

pub fn report_csv(outcomes: &[Outcome]) -> Csv {
    let mut c = Csv::new("report", &["id", "name", "pass", "measured", "tolerance", "seconds"]);
    for o in outcomes {
        c.row(vec![
            o.id.to_string(),
            o.name.to_string(),
            format!("{:?}", o.status).to_lowercase(),
            o.measured.clone(),
            o.tolerance.clone(),
            num((o.seconds * 10.0).round() / 10.0),
        ]);
    }
    c
}
