//! Green functions on truncated balls, restricted domains, first passage,
//! the Green metric, Ancona/Harnack/decay diagnostics and the branching
//! random walk estimator.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::automaton::{Automaton, GeodesicSegment};
use crate::error::{Error, Result};
use crate::group::{GroupElement, Presentation};
use crate::linalg::{self, SymOp};
use crate::walk::BallTable;

/// Region Ω, always intersected with the ambient ball.
#[derive(Clone, Debug, PartialEq)]
pub enum DomainSpec {
    FullBall,
    Ball { center: GroupElement, radius: usize },
    ComplementBall { center: GroupElement, radius: usize },
    ExplicitSet(Vec<GroupElement>),
}

impl DomainSpec {
    pub fn contains(&self, p: &Presentation, x: &GroupElement) -> bool {
        match self {
            DomainSpec::FullBall => true,
            DomainSpec::Ball { center, radius } => p.word_distance(center, x).map_or(false, |d| d <= *radius),
            DomainSpec::ComplementBall { center, radius } => p.word_distance(center, x).map_or(false, |d| d > *radius),
            DomainSpec::ExplicitSet(v) => v.contains(x),
        }
    }

    /// Membership mask over the rows of `bt`; None for the full ball.
    pub fn mask(&self, bt: &BallTable) -> Result<Option<Vec<bool>>> {
        let p = bt.presentation();
        match self {
            DomainSpec::FullBall => Ok(None),
            _ if bt.is_radial() => match self {
                DomainSpec::Ball { center, radius } if center.is_identity() => {
                    Ok(Some((0..bt.len()).map(|i| i <= *radius).collect()))
                }
                DomainSpec::ComplementBall { center, radius } if center.is_identity() => {
                    Ok(Some((0..bt.len()).map(|i| i > *radius).collect()))
                }
                _ => Err(Error::NotApplicable(String::from("radial tables only support domains centred at 1"))),
            },
            DomainSpec::ExplicitSet(v) => {
                let mut m = vec![false; bt.len()];
                for x in v {
                    if let Some(i) = bt.index_of(x) {
                        m[i] = true;
                    }
                }
                Ok(Some(m))
            }
            _ => Ok(Some((0..bt.len()).map(|i| self.contains(p, &bt.element(i))).collect())),
        }
    }
}

/// G_r(x, source; Ω ∩ B(1, M)) for every row x of the ball.
#[derive(Clone, Debug, PartialEq)]
pub struct GreenTable {
    pub r: f64,
    pub radius: usize,
    pub domain: DomainSpec,
    pub source: GroupElement,
    pub source_index: usize,
    pub values: Vec<f64>,
    /// G at the source on B(1, M) minus the same on B(1, M − 2).
    pub truncation_gap: Option<f64>,
    pub residual: f64,
    pub iterations: usize,
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub enum Solver {
    /// Conjugate gradients on the symmetrised system.
    ConjugateGradient,
    /// u ← δ + r P u; monotone lower bounds, slow near criticality.
    FixedPoint,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GreenOptions {
    pub solver: Solver,
    pub tol: f64,
    pub max_iter: usize,
    /// Also solve on B(1, M − 2) to report the truncation gap.
    pub gap: bool,
    /// Rows used: the ball B(1, prefix) inside the table (default: all).
    pub prefix: Option<usize>,
}

impl Default for GreenOptions {
    fn default() -> Self {
        GreenOptions { solver: Solver::ConjugateGradient, tol: 1e-12, max_iter: 20_000, gap: false, prefix: None }
    }
}

fn solve_column(
    bt: &BallTable,
    r: f64,
    n: usize,
    mask: Option<&[bool]>,
    source: usize,
    opts: &GreenOptions,
) -> Result<(Vec<f64>, f64, usize)> {
    let keep = n;
    // masked operators act on every row of the table
    let n = if mask.is_some() { bt.len() } else { n };
    let sqrt_w = bt.sqrt_weights(n);
    let mut b = vec![0.0; n];
    b[source] = sqrt_w.as_ref().map_or(1.0, |w| w[source]);
    let (mut z, residual, iterations) = match opts.solver {
        Solver::ConjugateGradient => {
            let op = match mask {
                Some(m) => bt.sym_op_masked(m, 1.0, -r),
                None => bt.sym_op(n, 1.0, -r),
            };
            let mut z = vec![0.0; n];
            let info = linalg::conjugate_gradient(&op, &b, &mut z, opts.tol, opts.max_iter, r)?;
            (z, info.relative_residual, info.iterations)
        }
        Solver::FixedPoint => {
            let op = match mask {
                Some(m) => bt.sym_op_masked(m, 0.0, r),
                None => bt.sym_op(n, 0.0, r),
            };
            let mut z = b.clone();
            let mut next = vec![0.0; n];
            let mut it = 0;
            let bound = 1e12;
            loop {
                op.apply(&z, &mut next);
                if let Some(m) = mask {
                    // rows outside Ω act as the identity in the masked view
                    for i in 0..n {
                        if !m[i] {
                            next[i] = 0.0;
                        }
                    }
                }
                let mut diff = 0.0f64;
                let mut size = 0.0f64;
                for i in 0..n {
                    let v = b[i] + next[i];
                    diff = diff.max((v - z[i]).abs());
                    size = size.max(v.abs());
                    z[i] = v;
                }
                it += 1;
                if !(size < bound) {
                    return Err(Error::Supercritical { r });
                }
                if diff <= opts.tol * size {
                    break;
                }
                if it >= opts.max_iter {
                    return Err(Error::NoConvergence { what: "fixed-point Green iteration", iterations: it });
                }
            }
            op.apply(&z, &mut next);
            let res = (0..n)
                .filter(|&i| mask.map_or(true, |m| m[i]))
                .map(|i| (z[i] - next[i] - b[i]).abs())
                .fold(0.0, f64::max);
            (z, res / linalg::norm(&b), it)
        }
    };
    if let Some(w) = &sqrt_w {
        for i in 0..n {
            z[i] /= w[i];
        }
    }
    let peak = z.iter().fold(0.0f64, |a, &v| a.max(v));
    if z.iter().any(|&v| v < -1e-9 * peak.max(1.0)) {
        return Err(Error::Supercritical { r });
    }
    for v in z.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    if let Some(m) = mask {
        for i in 0..n {
            if !m[i] {
                z[i] = 0.0;
            }
        }
    }
    z.truncate(keep);
    Ok((z, residual, iterations))
}

/// Solves (I − r P_Ω) u = δ_source on the ball with absorbing boundary.
pub fn green_truncated(bt: &BallTable, r: f64, dom: &DomainSpec, source: &GroupElement) -> Result<GreenTable> {
    green_truncated_with(bt, r, dom, source, &GreenOptions::default())
}

pub fn green_truncated_with(
    bt: &BallTable,
    r: f64,
    dom: &DomainSpec,
    source: &GroupElement,
    opts: &GreenOptions,
) -> Result<GreenTable> {
    if !(r >= 0.0) || !r.is_finite() {
        return Err(Error::Domain(format!("r = {r}")));
    }
    let radius = opts.prefix.unwrap_or(bt.radius()).min(bt.radius());
    let n = bt.prefix_len(radius);
    let s = bt.index_of(source).filter(|&i| i < n).ok_or_else(|| Error::Coverage(String::from("source outside the ball")))?;
    if bt.is_radial() && s != 0 {
        return Err(Error::NotApplicable(String::from("radial tables need the identity as source")));
    }
    let mut mask = dom.mask(bt)?;
    if let Some(m) = mask.as_mut() {
        for v in m[n..].iter_mut() {
            *v = false;
        }
        if !m[s] {
            let values = vec![0.0; n];
            return Ok(GreenTable {
                r,
                radius,
                domain: dom.clone(),
                source: source.clone(),
                source_index: s,
                values,
                truncation_gap: None,
                residual: 0.0,
                iterations: 0,
            });
        }
    }
    let (values, residual, iterations) = if r == 0.0 {
        let mut v = vec![0.0; n];
        v[s] = 1.0;
        (v, 0.0, 0)
    } else {
        solve_column(bt, r, n, mask.as_deref(), s, opts)?
    };
    let truncation_gap = if opts.gap && radius >= 2 && s < bt.prefix_len(radius - 2) && mask.is_none() {
        let inner = bt.prefix_len(radius - 2);
        let (v2, _, _) = solve_column(bt, r, inner, None, s, opts)?;
        Some(values[s] - v2[s])
    } else {
        None
    };
    Ok(GreenTable { r, radius, domain: dom.clone(), source: source.clone(), source_index: s, values, truncation_gap, residual, iterations })
}

/// Access to G_r(1, x) for elements of the group.
pub trait GreenSource {
    fn r(&self) -> f64;
    fn presentation(&self) -> &Presentation;
    /// Largest word length covered.
    fn coverage(&self) -> usize;
    fn green(&self, x: &GroupElement) -> Option<f64>;
    /// G_r(1, x) depends on |x| only.
    fn is_radial(&self) -> bool {
        false
    }

    /// G_r(x, y) = G_r(1, x^{-1} y).
    fn green_pair(&self, x: &GroupElement, y: &GroupElement) -> Option<f64> {
        let p = self.presentation();
        let z = p.multiply(&p.inverse(x).ok()?, y).ok()?;
        self.green(&z)
    }
}

/// Green values indexed by ball rows, source 1, full domain.
#[derive(Clone, Debug)]
pub struct TableGreen<'a> {
    pub table: &'a BallTable,
    pub r: f64,
    pub radius: usize,
    pub values: Vec<f64>,
}

impl GreenSource for TableGreen<'_> {
    fn r(&self) -> f64 {
        self.r
    }
    fn presentation(&self) -> &Presentation {
        self.table.presentation()
    }
    fn coverage(&self) -> usize {
        self.radius
    }
    fn green(&self, x: &GroupElement) -> Option<f64> {
        if x.len() > self.radius {
            return None;
        }
        self.table.index_of(x).map(|i| self.values[i])
    }
}

impl GreenTable {
    /// View as a translation-invariant source (requires source 1, full ball).
    pub fn as_source<'a>(&self, bt: &'a BallTable) -> Result<TableGreen<'a>> {
        if !self.source.is_identity() || self.domain != DomainSpec::FullBall {
            return Err(Error::NotApplicable(String::from("translation needs source 1 and the full ball")));
        }
        Ok(TableGreen { table: bt, r: self.r, radius: self.radius, values: self.values.clone() })
    }

    pub fn value(&self, bt: &BallTable, x: &GroupElement) -> Option<f64> {
        bt.index_of(x).filter(|&i| i < self.values.len()).map(|i| self.values[i])
    }
}

/// Three-point extrapolation in the truncation radius with the model
/// v(M) = A − B/(M + c); falls back to the last value when the increments
/// are not positive and shrinking.
pub fn extrapolate_radius(v1: f64, v2: f64, v3: f64, m: f64) -> f64 {
    let d1 = v2 - v1;
    let d2 = v3 - v2;
    if !(d1 > 0.0 && d2 > 0.0 && d2 < d1) {
        return v3;
    }
    let q = d2 / d1;
    let c = (m - 2.0 - q * m) / (q - 1.0);
    if !(m - 2.0 + c > 0.0) {
        return v3;
    }
    let b = d2 / (1.0 / (m - 1.0 + c) - 1.0 / (m + c));
    v3 + b / (m + c)
}

/// Green function at r extrapolated in the truncation radius from solves on
/// B(1, M−2), B(1, M−1), B(1, M); covers B(1, M−2).
#[derive(Clone, Debug)]
pub struct RadiusExtrapolated<'a> {
    pub table: &'a BallTable,
    pub r: f64,
    pub radius: usize,
    pub values: Vec<f64>,
    /// Truncated values on the full ball B(1, M).
    pub truncated: Vec<f64>,
}

impl<'a> RadiusExtrapolated<'a> {
    pub fn build(bt: &'a BallTable, r: f64) -> Result<Self> {
        let m = bt.radius();
        if m < 3 {
            return Err(Error::RadiusTooSmall { radius: m, needed: 3 });
        }
        let id = bt.presentation().identity();
        let mut cols = Vec::new();
        for k in [m - 2, m - 1, m] {
            let opts = GreenOptions { prefix: Some(k), ..GreenOptions::default() };
            cols.push(green_truncated_with(bt, r, &DomainSpec::FullBall, &id, &opts)?.values);
        }
        let n = bt.prefix_len(m - 2);
        let values = (0..n).map(|i| extrapolate_radius(cols[0][i], cols[1][i], cols[2][i], m as f64)).collect();
        let truncated = cols.pop().unwrap();
        Ok(RadiusExtrapolated { table: bt, r, radius: m - 2, values, truncated })
    }

    /// The plain truncated solve on B(1, M) as a source.
    pub fn truncated_source(&self) -> TableGreen<'a> {
        TableGreen { table: self.table, r: self.r, radius: self.table.radius(), values: self.truncated.clone() }
    }
}

impl GreenSource for RadiusExtrapolated<'_> {
    fn r(&self) -> f64 {
        self.r
    }
    fn presentation(&self) -> &Presentation {
        self.table.presentation()
    }
    fn coverage(&self) -> usize {
        self.radius
    }
    fn green(&self, x: &GroupElement) -> Option<f64> {
        if x.len() > self.radius {
            return None;
        }
        self.table.index_of(x).map(|i| self.values[i])
    }
}

/// F_r(x, y) = G_r(x, y)/G_r(1, 1), with F(x, x) = 1.
pub fn first_passage(src: &dyn GreenSource, x: &GroupElement, y: &GroupElement) -> Option<f64> {
    if x == y {
        return Some(1.0);
    }
    let g11 = src.green(&src.presentation().identity())?;
    Some(src.green_pair(x, y)? / g11)
}

/// d_G(x, y) = −log F(x, y) from a translation-invariant source.
pub fn green_metric(src: &dyn GreenSource, x: &GroupElement, y: &GroupElement) -> Option<f64> {
    first_passage(src, x, y).map(|f| -f.ln())
}

/// Restricted Green function of the walk killed outside the ball, for a
/// set of sources: G_Ω(s, x) for every source s and row x.
#[derive(Clone, Debug)]
pub struct RestrictedPairs<'a> {
    pub table: &'a BallTable,
    pub r: f64,
    pub sources: Vec<GroupElement>,
    pub columns: Vec<Vec<f64>>,
}

impl<'a> RestrictedPairs<'a> {
    pub fn solve(bt: &'a BallTable, r: f64, sources: &[GroupElement]) -> Result<Self> {
        if bt.is_radial() {
            return Err(Error::NotApplicable(String::from("pairwise values need an exact table")));
        }
        let mut columns = Vec::new();
        for s in sources {
            columns.push(green_truncated(bt, r, &DomainSpec::FullBall, s)?.values);
        }
        Ok(RestrictedPairs { table: bt, r, sources: sources.to_vec(), columns })
    }

    /// G_Ω(sources[a], x).
    pub fn green(&self, a: usize, x: &GroupElement) -> Option<f64> {
        self.table.index_of(x).map(|i| self.columns[a][i])
    }

    /// First passage of the killed chain, F_Ω(x, y) = G_Ω(x, y)/G_Ω(y, y),
    /// for source indices a, b.
    pub fn first_passage(&self, a: usize, b: usize) -> f64 {
        if a == b || self.sources[a] == self.sources[b] {
            return 1.0;
        }
        let gab = self.green(b, &self.sources[a]).unwrap_or(0.0);
        let gbb = self.green(b, &self.sources[b]).unwrap_or(0.0);
        gab / gbb
    }

    /// Symmetrised killed-chain metric −log[G(x,y)/√(G(x,x)G(y,y))].
    pub fn metric(&self, a: usize, b: usize) -> f64 {
        if self.sources[a] == self.sources[b] {
            return 0.0;
        }
        let gab = self.green(b, &self.sources[a]).unwrap_or(0.0);
        let gaa = self.green(a, &self.sources[a]).unwrap_or(0.0);
        let gbb = self.green(b, &self.sources[b]).unwrap_or(0.0);
        -(gab / (gaa * gbb).sqrt()).ln()
    }
}

/// Derivative identity check at G(1,1): central difference versus
/// r^{-1}(Σ_z G(1,z)G(z,1) − G(1,1)). Returns the relative discrepancy.
pub fn check_gprime(bt: &BallTable, r: f64, h: f64) -> Result<GPrimeCheck> {
    if r < 0.05 {
        return Err(Error::Domain(format!("r = {r} below the documented start 0.05")));
    }
    let id = bt.presentation().identity();
    let g = green_truncated(bt, r, &DomainSpec::FullBall, &id)?;
    let gp = green_truncated(bt, r + h, &DomainSpec::FullBall, &id)?;
    let gm = green_truncated(bt, r - h, &DomainSpec::FullBall, &id)?;
    let fd = (gp.values[0] - gm.values[0]) / (2.0 * h);
    let sum_sq: f64 = g.values.iter().enumerate().map(|(i, v)| bt.weight(i) * v * v).sum();
    let rhs = (sum_sq - g.values[0]) / r;
    Ok(GPrimeCheck { r, finite_difference: fd, identity: rhs, relative_error: (fd - rhs).abs() / rhs.abs(), sum_sq })
}

#[derive(Clone, Debug, PartialEq)]
pub struct GPrimeCheck {
    pub r: f64,
    pub finite_difference: f64,
    pub identity: f64,
    pub relative_error: f64,
    /// Σ_z G(1,z)^2 on the ball.
    pub sum_sq: f64,
}

/// G(x_0,x_m)/(G(x_0,x_k) G(x_k,x_m)) along a segment.
pub fn ancona_ratio(src: &dyn GreenSource, seg: &GeodesicSegment, k: usize) -> Option<f64> {
    let m = seg.len();
    if k > m {
        return None;
    }
    let x0 = seg.start();
    let xm = seg.end();
    let xk = &seg.vertices[k];
    Some(src.green_pair(x0, xm)? / (src.green_pair(x0, xk)? * src.green_pair(xk, xm)?))
}

/// Maximum Ancona ratio over all segments from 1 of length ≤ `max_len`
/// and all interior split points.
pub fn max_ancona_ratio(src: &dyn GreenSource, aut: &Automaton, max_len: usize) -> Result<f64> {
    let p = src.presentation();
    let mut best = 0.0f64;
    for m in 1..=max_len {
        for x in aut.enumerate_sphere(m) {
            let seg = aut.geodesic(&p.identity(), &x)?;
            for k in 1..m {
                let v = ancona_ratio(src, &seg, k).ok_or_else(|| Error::Coverage(p.format_word(x.word())))?;
                best = best.max(v);
            }
        }
    }
    Ok(best)
}

#[derive(Clone, Debug, PartialEq)]
pub enum RelativeAncona {
    Ratio(f64),
    /// Some Green value vanished: Ω separates the points.
    Disconnected,
}

/// Relative Ancona ratio G(x,y;Ω)/(G(x,z;Ω)G(z,y;Ω)) with z = x_k. The
/// hypothesis requires B(w, c' + d(w,z)/2) ⊂ Ω for each w on the segment.
pub fn relative_ancona_check(
    bt: &BallTable,
    r: f64,
    seg: &GeodesicSegment,
    k: usize,
    dom: &DomainSpec,
    c_prime: usize,
) -> Result<RelativeAncona> {
    let p = bt.presentation();
    let aut = Automaton::build(p);
    let z = &seg.vertices[k];
    for (i, w) in seg.vertices.iter().enumerate() {
        let dwz = if i > k { i - k } else { k - i };
        let rad = c_prime + dwz / 2;
        for m in 0..=rad {
            for u in aut.enumerate_sphere(m) {
                let y = p.multiply(w, &u)?;
                if !dom.contains(p, &y) || bt.index_of(&y).is_none() {
                    return Err(Error::Hypothesis(format!(
                        "ball of radius {rad} around {} leaves the domain",
                        p.format_word(w.word())
                    )));
                }
            }
        }
    }
    relative_ratio(bt, r, seg.start(), z, seg.end(), dom)
}

/// Relative ratio without the hypothesis check.
pub fn relative_ratio(
    bt: &BallTable,
    r: f64,
    x: &GroupElement,
    z: &GroupElement,
    y: &GroupElement,
    dom: &DomainSpec,
) -> Result<RelativeAncona> {
    let gx = green_truncated(bt, r, dom, x)?;
    let gz = green_truncated(bt, r, dom, z)?;
    let v = |t: &GreenTable, e: &GroupElement| t.value(bt, e).unwrap_or(0.0);
    let (gxy, gxz, gzy) = (v(&gx, y), v(&gx, z), v(&gz, y));
    if gxy <= 0.0 || gxz <= 0.0 || gzy <= 0.0 {
        return Ok(RelativeAncona::Disconnected);
    }
    Ok(RelativeAncona::Ratio(gxy / (gxz * gzy)))
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecayFit {
    /// Fitted ϱ = exp(slope).
    pub rate: f64,
    pub constant: f64,
    pub residual: f64,
    /// (m, min over S_m, max over S_m)
    pub spheres: Vec<(usize, f64, f64)>,
    pub strictly_decreasing: bool,
}

/// Least-squares fit of log max_{S_m} G(1, x) against m.
pub fn decay_fit(src: &dyn GreenSource, aut: &Automaton, m_lo: usize, m_hi: usize) -> Result<DecayFit> {
    if m_hi > src.coverage() || m_lo >= m_hi {
        return Err(Error::Coverage(format!("spheres {m_lo}..={m_hi} with coverage {}", src.coverage())));
    }
    let mut spheres = Vec::new();
    for m in m_lo..=m_hi {
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for x in sphere_representatives(src.presentation(), aut, m) {
            let g = src.green(&x).ok_or_else(|| Error::Coverage(String::from("sphere element")))?;
            lo = lo.min(g);
            hi = hi.max(g);
        }
        spheres.push((m, lo, hi));
    }
    let xs: Vec<f64> = spheres.iter().map(|s| s.0 as f64).collect();
    let ys: Vec<f64> = spheres.iter().map(|s| s.2.ln()).collect();
    let (slope, intercept, residual) = linalg::linear_fit(&xs, &ys);
    let strictly_decreasing = spheres.windows(2).all(|w| w[1].2 < w[0].2);
    Ok(DecayFit { rate: slope.exp(), constant: intercept.exp(), residual, spheres, strictly_decreasing })
}

/// Sphere elements; for free groups a single representative suffices when
/// the source is radial, but all elements are returned for uniformity up
/// to a modest size.
fn sphere_representatives(p: &Presentation, aut: &Automaton, m: usize) -> Vec<GroupElement> {
    let _ = p;
    aut.enumerate_sphere(m)
}

#[derive(Clone, Debug, PartialEq)]
pub struct HarnackReport {
    /// Smallest C with G(x,z) ≤ C^{d(y,z)} G(x,y) over the samples.
    pub constant: f64,
    pub samples: usize,
}

pub fn harnack_check(src: &dyn GreenSource, triples: &[(GroupElement, GroupElement, GroupElement)]) -> Result<HarnackReport> {
    let p = src.presentation();
    let mut c = 1.0f64;
    for (x, y, z) in triples {
        let d = p.word_distance(y, z)?;
        if d == 0 {
            continue;
        }
        let gxz = src.green_pair(x, z).ok_or_else(|| Error::Coverage(String::from("harnack triple")))?;
        let gxy = src.green_pair(x, y).ok_or_else(|| Error::Coverage(String::from("harnack triple")))?;
        c = c.max((gxz / gxy).powf(1.0 / d as f64));
    }
    Ok(HarnackReport { constant: c, samples: triples.len() })
}

#[derive(Clone, Debug, PartialEq)]
pub struct BrwEstimate {
    pub mean: f64,
    pub standard_error: f64,
    pub trials: usize,
    pub cap_hits: usize,
    pub unreliable: bool,
}

/// Branching random walk with Poisson(r) offspring; each child takes one
/// step of the walk. Particles stepping outside the ball are removed, so the
/// mean number of visits to `target` is the truncated G_r(1, target).
pub fn green_via_brw(
    bt: &BallTable,
    r: f64,
    target: &GroupElement,
    trials: usize,
    seed: u64,
    cap: usize,
) -> Result<BrwEstimate> {
    let t = bt.index_of(target).ok_or_else(|| Error::Coverage(String::from("target outside the ball")))?;
    let poisson = if r > 0.0 { Some(Poisson::new(r).map_err(|_| Error::Domain(format!("r = {r}")))?) } else { None };
    // cumulative row tables
    let rows: Vec<Vec<(usize, f64)>> = (0..bt.len())
        .map(|i| {
            let mut acc = 0.0;
            bt.row(i)
                .map(|(j, q)| {
                    acc += q;
                    (j, acc)
                })
                .collect()
        })
        .collect();
    let weight = bt.weight(t);
    let mut sum = 0.0f64;
    let mut sum_sq = 0.0f64;
    let mut cap_hits = 0usize;
    let mut stack: Vec<usize> = Vec::new();
    for trial in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(trial as u64);
        stack.clear();
        stack.push(0);
        let mut created = 1usize;
        let mut visits = 0.0f64;
        let mut hit = false;
        while let Some(x) = stack.pop() {
            if x == t {
                visits += 1.0;
            }
            let Some(pois) = &poisson else { continue };
            let kids = pois.sample(&mut rng) as usize;
            for _ in 0..kids {
                let u = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
                let row = &rows[x];
                let idx = row.partition_point(|e| e.1 <= u);
                if idx < row.len() {
                    stack.push(row[idx].0);
                }
            }
            created += kids;
            if created > cap {
                hit = true;
                break;
            }
        }
        if hit {
            cap_hits += 1;
        }
        let v = visits / weight;
        sum += v;
        sum_sq += v * v;
    }
    let n = trials as f64;
    let mean = sum / n;
    let var = if trials > 1 { (sum_sq - n * mean * mean) / (n - 1.0) } else { 0.0 };
    Ok(BrwEstimate {
        mean,
        standard_error: (var.max(0.0) / n).sqrt(),
        trials,
        cap_hits,
        unreliable: cap_hits as f64 > 0.01 * n,
    })
}

/// Pair-summability diagnostic: partial sums Σ_{m,n ≤ N} G(X_m, Y_n) along
/// independent trajectories, using `fallback` = (C, ϱ) for pairs beyond the
/// source's coverage (G ≤ C ϱ^d).
pub fn pair_partial_sums(
    src: &dyn GreenSource,
    xs: &[GroupElement],
    ys: &[GroupElement],
    fallback: (f64, f64),
) -> Result<Vec<f64>> {
    let p = src.presentation();
    let n = xs.len().min(ys.len());
    let mut cache: BTreeMap<GroupElement, f64> = BTreeMap::new();
    let mut g = |a: &GroupElement, b: &GroupElement| -> Result<f64> {
        let z = p.multiply(&p.inverse(a)?, b)?;
        if let Some(v) = cache.get(&z) {
            return Ok(*v);
        }
        let v = match src.green(&z) {
            Some(v) => v,
            None => fallback.0 * fallback.1.powi(z.len() as i32),
        };
        cache.insert(z, v);
        Ok(v)
    };
    let mut partial = Vec::with_capacity(n);
    let mut total = 0.0;
    for k in 0..n {
        // add the new row and column of the square [0, k]^2
        for j in 0..k {
            total += g(&xs[k], &ys[j])?;
            total += g(&xs[j], &ys[k])?;
        }
        total += g(&xs[k], &ys[k])?;
        partial.push(total);
    }
    Ok(partial)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::walk::{BallMode, StepDistribution};

    fn free_g(r: f64) -> (f64, f64) {
        let f = (2.0 - (4.0 - 3.0 * r * r).sqrt()) / (3.0 * r);
        (f, 1.0 / (1.0 - r * f))
    }

    #[test]
    fn radial_free_green_matches_closed_form() {
        let p = Presentation::free(2).unwrap();
        let sd = StepDistribution::srw(&p);
        let bt = BallTable::build(&p, &sd, 30, BallMode::Radial).unwrap();
        for r in [0.25, 0.5, 0.75, 1.0, 1.1] {
            let g = green_truncated(&bt, r, &DomainSpec::FullBall, &p.identity()).unwrap();
            let (_, exact) = free_g(r);
            assert!((g.values[0] - exact).abs() < 1e-8, "r={r}: {} vs {exact}", g.values[0]);
        }
    }

    #[test]
    fn exact_and_radial_tables_agree() {
        let p = Presentation::free(2).unwrap();
        let sd = StepDistribution::srw(&p);
        let ex = BallTable::build(&p, &sd, 6, BallMode::Exact).unwrap();
        let ra = BallTable::build(&p, &sd, 6, BallMode::Radial).unwrap();
        let a = green_truncated(&ex, 1.0, &DomainSpec::FullBall, &p.identity()).unwrap();
        let b = green_truncated(&ra, 1.0, &DomainSpec::FullBall, &p.identity()).unwrap();
        for i in 0..ex.len() {
            let d = ex.sphere_of(i);
            assert!((a.values[i] - b.values[d]).abs() < 1e-11);
        }
    }

    #[test]
    fn fixed_point_is_a_lower_bound_and_agrees() {
        let p = Presentation::surface(2).unwrap();
        let sd = StepDistribution::srw(&p);
        let bt = BallTable::build(&p, &sd, 3, BallMode::Exact).unwrap();
        let cg = green_truncated(&bt, 1.2, &DomainSpec::FullBall, &p.identity()).unwrap();
        let opts = GreenOptions { solver: Solver::FixedPoint, tol: 1e-14, ..GreenOptions::default() };
        let fp = green_truncated_with(&bt, 1.2, &DomainSpec::FullBall, &p.identity(), &opts).unwrap();
        for (a, b) in cg.values.iter().zip(&fp.values) {
            assert!((a - b).abs() < 1e-10);
        }
        let g0 = green_truncated(&bt, 0.0, &DomainSpec::FullBall, &p.identity()).unwrap();
        assert_eq!(g0.values[0], 1.0);
        assert!(g0.values[1..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn supercritical_is_detected() {
        let p = Presentation::free(2).unwrap();
        let sd = StepDistribution::srw(&p);
        let bt = BallTable::build(&p, &sd, 4, BallMode::Radial).unwrap();
        let err = green_truncated(&bt, 3.0, &DomainSpec::FullBall, &p.identity()).unwrap_err();
        assert!(matches!(err, Error::Supercritical { .. }));
    }

    #[test]
    fn radius_extrapolation_is_exact_at_criticality_on_free_group() {
        // at r = R the truncated radial Green function is 3(M+1)/(M+3)
        for m in [6.0, 9.0, 14.0] {
            let v = |k: f64| 3.0 * (k + 1.0) / (k + 3.0);
            let e = extrapolate_radius(v(m - 2.0), v(m - 1.0), v(m), m);
            assert!((e - 3.0).abs() < 1e-12);
        }
        let p = Presentation::free(2).unwrap();
        let sd = StepDistribution::srw(&p);
        let bt = BallTable::build(&p, &sd, 8, BallMode::Radial).unwrap();
        let big_r = 2.0 / 3f64.sqrt();
        let g = green_truncated(&bt, big_r, &DomainSpec::FullBall, &p.identity()).unwrap();
        assert!((g.values[0] - 27.0 / 11.0).abs() < 1e-10);
    }

    #[test]
    fn brw_matches_truncated_solve_on_free_group() {
        let p = Presentation::free(2).unwrap();
        let sd = StepDistribution::srw(&p);
        let bt = BallTable::build(&p, &sd, 12, BallMode::Radial).unwrap();
        let r = 0.8 * 2.0 / 3f64.sqrt();
        let g = green_truncated(&bt, r, &DomainSpec::FullBall, &p.identity()).unwrap();
        let est = green_via_brw(&bt, r, &p.identity(), 4000, 11, 1_000_000).unwrap();
        assert!((est.mean - g.values[0]).abs() < 4.0 * est.standard_error, "{est:?} vs {}", g.values[0]);
        let zero = green_via_brw(&bt, 0.0, &p.identity(), 10, 1, 10).unwrap();
        assert_eq!(zero.mean, 1.0);
    }
}
