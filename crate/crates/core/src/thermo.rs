//! Higher-block chains over the automaton, weighted transfer operators and
//! pressure, sphere sums, η, level sets and ergodic averages.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::automaton::Automaton;
use crate::boundary::CylinderPotential;
use crate::error::{Error, Result};
use crate::green::GreenSource;
use crate::group::{Generator, GroupElement, Word};
use crate::linalg;
use crate::walk::BallTable;

/// Paths of `depth` edges in the automaton (from any state); u → v when v
/// continues u by one edge.
#[derive(Clone, Debug)]
pub struct CylinderChain {
    pub depth: usize,
    /// Edge ids of each block, `depth` per block.
    blocks: Vec<u32>,
    succ_ptr: Vec<usize>,
    succ: Vec<u32>,
    index: BTreeMap<Vec<u32>, u32>,
    edge_of: BTreeMap<(u32, Generator), u32>,
    labels: Vec<Generator>,
    edge_src: Vec<u32>,
    /// Block starts at the automaton's start state.
    pub initial: Vec<bool>,
}

pub const DEFAULT_CHAIN_BUDGET: usize = 2_000_000;

pub fn refine(aut: &Automaton, k: usize) -> Result<CylinderChain> {
    refine_with_budget(aut, k, DEFAULT_CHAIN_BUDGET)
}

pub fn refine_with_budget(aut: &Automaton, k: usize, budget: usize) -> Result<CylinderChain> {
    if k == 0 {
        return Err(Error::Domain(String::from("depth must be at least 1")));
    }
    let edges = aut.edges();
    let mut out_edges: Vec<Vec<u32>> = vec![Vec::new(); aut.state_count()];
    let mut edge_of = BTreeMap::new();
    for (i, e) in edges.iter().enumerate() {
        out_edges[e.src as usize].push(i as u32);
        edge_of.insert((e.src, e.label), i as u32);
    }
    let mut blocks: Vec<u32> = Vec::new();
    let mut stack: Vec<Vec<u32>> = (0..edges.len() as u32).rev().map(|e| vec![e]).collect();
    let mut count = 0usize;
    while let Some(b) = stack.pop() {
        if b.len() == k {
            count += 1;
            if count > budget {
                return Err(Error::Budget { attempted: count as u64, budget: budget as u64 });
            }
            blocks.extend_from_slice(&b);
            continue;
        }
        let last = edges[*b.last().unwrap() as usize].dst as usize;
        for &e in out_edges[last].iter().rev() {
            let mut c = b.clone();
            c.push(e);
            stack.push(c);
        }
    }
    let n = blocks.len() / k;
    let mut index = BTreeMap::new();
    for i in 0..n {
        index.insert(blocks[i * k..(i + 1) * k].to_vec(), i as u32);
    }
    let mut succ_ptr = vec![0usize];
    let mut succ = Vec::new();
    let mut key = vec![0u32; k];
    for i in 0..n {
        let b = &blocks[i * k..(i + 1) * k];
        let last = edges[b[k - 1] as usize].dst as usize;
        key[..k - 1].copy_from_slice(&b[1..]);
        for &e in &out_edges[last] {
            key[k - 1] = e;
            succ.push(index[&key]);
        }
        succ_ptr.push(succ.len());
    }
    let initial = (0..n).map(|i| edges[blocks[i * k] as usize].src == aut.start()).collect();
    Ok(CylinderChain {
        depth: k,
        blocks,
        succ_ptr,
        succ,
        index,
        edge_of,
        labels: edges.iter().map(|e| e.label).collect(),
        edge_src: edges.iter().map(|e| e.src).collect(),
        initial,
    })
}

impl CylinderChain {
    pub fn len(&self) -> usize {
        self.succ_ptr.len() - 1
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
    pub fn successors(&self, u: usize) -> &[u32] {
        &self.succ[self.succ_ptr[u]..self.succ_ptr[u + 1]]
    }
    pub fn edges_of(&self, u: usize) -> &[u32] {
        &self.blocks[u * self.depth..(u + 1) * self.depth]
    }
    /// Label word of block `u`.
    pub fn label(&self, u: usize) -> Word {
        self.edges_of(u).iter().map(|&e| self.labels[e as usize]).collect()
    }
    pub fn source_state(&self, u: usize) -> u32 {
        self.edge_src[self.edges_of(u)[0] as usize]
    }

    /// Chain states visited by the accepted path of `w` from the start.
    pub fn states_along(&self, aut: &Automaton, w: &[Generator]) -> Option<Vec<usize>> {
        let mut s = aut.start();
        let mut path = Vec::with_capacity(w.len());
        for &x in w {
            let e = *self.edge_of.get(&(s, x))?;
            path.push(e);
            s = aut.transition(s, x)?;
        }
        if path.len() < self.depth {
            return Some(Vec::new());
        }
        (0..=path.len() - self.depth).map(|j| self.index.get(&path[j..j + self.depth]).map(|&i| i as usize)).collect()
    }

    /// Number of chain paths with `steps` transitions, from any state.
    pub fn path_count(&self, steps: usize) -> f64 {
        let mut v = vec![1.0f64; self.len()];
        for _ in 0..steps {
            v = (0..self.len()).map(|u| self.successors(u).iter().map(|&t| v[t as usize]).sum()).collect();
        }
        v.iter().sum()
    }

    /// e^{θ φ(label)} per block.
    pub fn weights(&self, pot: &CylinderPotential, theta: f64) -> Result<Vec<f64>> {
        if pot.depth != self.depth {
            return Err(Error::Domain(format!("potential depth {} vs chain depth {}", pot.depth, self.depth)));
        }
        (0..self.len())
            .map(|u| {
                let w = self.label(u);
                pot.phi(&w).map(|v| (theta * v).exp()).ok_or_else(|| Error::Coverage(String::from("block missing from potential")))
            })
            .collect()
    }
}

/// Number of automaton paths with `m` edges from any state.
pub fn automaton_path_count(aut: &Automaton, m: usize) -> f64 {
    let mut v = vec![1.0f64; aut.state_count()];
    for _ in 0..m {
        let mut w = vec![0.0f64; aut.state_count()];
        for e in aut.edges() {
            w[e.src as usize] += v[e.dst as usize];
        }
        v = w;
    }
    v.iter().sum()
}

#[derive(Clone, Debug)]
pub struct TransferOperator<'a> {
    pub chain: &'a CylinderChain,
    pub weights: Vec<f64>,
    pub theta: f64,
    pub r: f64,
}

impl<'a> TransferOperator<'a> {
    pub fn new(chain: &'a CylinderChain, pot: &CylinderPotential, theta: f64) -> Result<Self> {
        Ok(TransferOperator { chain, weights: chain.weights(pot, theta)?, theta, r: pot.r })
    }

    /// Unweighted operator (θ = 0).
    pub fn counting(chain: &'a CylinderChain) -> Self {
        TransferOperator { chain, weights: vec![1.0; chain.len()], theta: 0.0, r: 0.0 }
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for u in 0..self.chain.len() {
            let s: f64 = self.chain.successors(u).iter().map(|&t| x[t as usize]).sum();
            y[u] = self.weights[u] * s;
        }
    }

    fn apply_transpose(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for u in 0..self.chain.len() {
            let a = x[u] * self.weights[u];
            if a != 0.0 {
                for &t in self.chain.successors(u) {
                    y[t as usize] += a;
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PressureResult {
    /// log of the leading eigenvalue.
    pub value: f64,
    pub lambda_right: f64,
    pub lambda_left: f64,
    /// Right eigenvector (h-analog).
    pub h: Vec<f64>,
    /// Left eigenvector (ν-analog), Σν = 1, ⟨ν, h⟩ = 1.
    pub nu: Vec<f64>,
    /// 1 − |λ_2/λ_1| estimated from the convergence rate.
    pub gap: f64,
    pub iterations: usize,
    pub depth: usize,
    pub theta: f64,
    pub r: f64,
}

impl PressureResult {
    /// Stationary law of the h-transformed chain (Gibbs measure on blocks).
    pub fn gibbs(&self) -> Vec<f64> {
        self.nu.iter().zip(&self.h).map(|(a, b)| a * b).collect()
    }
}

fn power(op: &TransferOperator, transpose: bool, tol: f64, max_iter: usize) -> Result<(f64, Vec<f64>, usize, f64)> {
    let n = op.chain.len();
    let mut x = vec![1.0f64; n];
    let mut y = vec![0.0f64; n];
    let mut lambda = 0.0f64;
    let mut prev_delta = f64::NAN;
    let mut rate = 0.0f64;
    for it in 1..=max_iter {
        if transpose {
            op.apply_transpose(&x, &mut y);
        } else {
            op.apply(&x, &mut y);
        }
        let sx: f64 = x.iter().sum();
        let sy: f64 = y.iter().sum();
        if !(sy > 0.0) {
            return Ok((0.0, y, it, 0.0));
        }
        let next = sy / sx;
        let norm = y.iter().fold(0.0f64, |a, &b| a.max(b));
        let mut moved = 0.0f64;
        for (a, b) in x.iter_mut().zip(&y) {
            moved = moved.max((b / norm - *a).abs());
            *a = b / norm;
        }
        let delta = (next - lambda).abs();
        if prev_delta > 0.0 && delta > 0.0 {
            rate = delta / prev_delta;
        }
        prev_delta = delta;
        lambda = next;
        if it > 5 && delta <= tol * lambda && moved <= 1e-9 {
            return Ok((lambda, x, it, rate));
        }
    }
    Err(Error::NoConvergence { what: "transfer-operator power iteration", iterations: max_iter })
}

/// Pressure log λ of the weighted operator, with normalised eigen-data.
pub fn pressure(op: &TransferOperator) -> Result<PressureResult> {
    let (lr, mut h, it1, rate) = power(op, false, 1e-12, 200_000)?;
    let (ll, mut nu, it2, _) = power(op, true, 1e-12, 200_000)?;
    let s: f64 = nu.iter().sum();
    nu.iter_mut().for_each(|v| *v /= s);
    let dot = linalg::dot(&nu, &h);
    if dot > 0.0 {
        h.iter_mut().for_each(|v| *v /= dot);
    }
    Ok(PressureResult {
        value: lr.ln(),
        lambda_right: lr,
        lambda_left: ll,
        h,
        nu,
        gap: 1.0 - rate.min(1.0),
        iterations: it1.max(it2),
        depth: op.chain.depth,
        theta: op.theta,
        r: op.r,
    })
}

/// Pr(θ φ_{r,k}).
pub fn pressure_of(chain: &CylinderChain, pot: &CylinderPotential, theta: f64) -> Result<PressureResult> {
    pressure(&TransferOperator::new(chain, pot, theta)?)
}

/// Pr(2φ_{r,k}); zero at r = R.
pub fn pressure_zero_check(chain: &CylinderChain, pot: &CylinderPotential) -> Result<f64> {
    Ok(pressure_of(chain, pot, 2.0)?.value)
}

/// Root of θ ↦ Pr(θφ_r) on [0.5, 3] by bisection to `tol`.
pub fn theta_root(chain: &CylinderChain, pot: &CylinderPotential, tol: f64) -> Result<f64> {
    let f = |t: f64| pressure_of(chain, pot, t).map(|p| p.value);
    let (mut lo, mut hi) = (0.5, 3.0);
    let (mut flo, fhi) = (f(lo)?, f(hi)?);
    if !(flo > 0.0 && fhi < 0.0) {
        return Err(Error::NoBracket { lo, hi, f_lo: flo, f_hi: fhi });
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid)?;
        if fm > 0.0 {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    let _ = flo;
    Ok(0.5 * (lo + hi))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SphereSums {
    pub theta: f64,
    /// (m, Σ_{x∈S_m} G_r(1,x)^θ)
    pub sums: Vec<(usize, f64)>,
    /// Fitted exponential rate over `fit_range`.
    pub rate: f64,
    pub constant: f64,
    pub residual: f64,
    pub fit_range: (usize, usize),
}

/// Per-sphere sums of value^θ over the rows of a table (values indexed by
/// rows, for spheres 0..=m_max).
pub fn table_sphere_sums(bt: &BallTable, values: &[f64], theta: f64, m_max: usize) -> Vec<(usize, f64)> {
    (0..=m_max.min(bt.radius()))
        .filter(|&m| bt.sphere_range(m).end <= values.len())
        .map(|m| (m, bt.sphere_range(m).map(|i| bt.weight(i) * values[i].powf(theta)).sum()))
        .collect()
}

/// Per-sphere sums from a Green source by enumeration (radial sources use
/// one representative per sphere).
pub fn source_sphere_sums(src: &dyn GreenSource, aut: &Automaton, theta: f64, m_max: usize) -> Result<Vec<(usize, f64)>> {
    if m_max > src.coverage() {
        return Err(Error::Coverage(format!("spheres up to {m_max}, coverage {}", src.coverage())));
    }
    let mut out = Vec::new();
    if src.is_radial() {
        let counts = aut.sphere_counts(m_max);
        let p = src.presentation();
        for m in 0..=m_max {
            let rep = ray_element(aut, m);
            let g = src.green(&rep).ok_or_else(|| Error::Coverage(p.format_word(rep.word())))?;
            out.push((m, counts[m] as f64 * g.powf(theta)));
        }
    } else {
        for m in 0..=m_max {
            let mut s = 0.0;
            for x in aut.enumerate_sphere(m) {
                s += src.green(&x).ok_or_else(|| Error::Coverage(String::from("sphere element")))?.powf(theta);
            }
            out.push((m, s));
        }
    }
    Ok(out)
}

/// Some element of S_m: the greedy first accepted word.
fn ray_element(aut: &Automaton, m: usize) -> GroupElement {
    let p = aut.presentation();
    let mut s = aut.start();
    let mut w = Vec::with_capacity(m);
    for _ in 0..m {
        let x = p.generators().find(|&x| aut.transition(s, x).is_some()).expect("automaton has no dead ends");
        s = aut.transition(s, x).unwrap();
        w.push(x);
    }
    p.element_unchecked(w)
}

/// Fits log Σ_{S_m} against m over `fit_range`.
pub fn fit_sphere_sums(sums: &[(usize, f64)], theta: f64, fit_range: (usize, usize)) -> Result<SphereSums> {
    let sel: Vec<(usize, f64)> = sums.iter().copied().filter(|s| s.0 >= fit_range.0 && s.0 <= fit_range.1 && s.1 > 0.0).collect();
    if sel.len() < 2 {
        return Err(Error::InsufficientData(format!("{} spheres in the fit range", sel.len())));
    }
    let x: Vec<f64> = sel.iter().map(|s| s.0 as f64).collect();
    let y: Vec<f64> = sel.iter().map(|s| s.1.ln()).collect();
    let (rate, c, residual) = linalg::linear_fit(&x, &y);
    Ok(SphereSums { theta, sums: sums.to_vec(), rate, constant: c.exp(), residual, fit_range })
}

#[derive(Clone, Debug, PartialEq)]
pub struct EtaEstimate {
    pub value: f64,
    pub truncated: f64,
    pub tail: f64,
    pub tail_fraction: f64,
    pub unreliable: bool,
}

/// η = Σ_m Σ_{S_m} G² with a geometric tail beyond the last sphere at the
/// fitted rate.
pub fn eta(sums: &SphereSums) -> EtaEstimate {
    let truncated: f64 = sums.sums.iter().map(|s| s.1).sum();
    let last = sums.sums.last().map_or(0.0, |s| s.1);
    let q = sums.rate.exp();
    let tail = if q < 1.0 { last * q / (1.0 - q) } else { f64::INFINITY };
    let value = truncated + tail;
    let tail_fraction = tail / value;
    EtaEstimate { value, truncated, tail, tail_fraction, unreliable: !(tail_fraction <= 0.5) }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SphereMeasure {
    pub r: f64,
    pub m: usize,
    pub elements: Vec<GroupElement>,
    pub weights: Vec<f64>,
}

/// λ_{r,m}: weights on S_m proportional to G_r(1,x)².
pub fn sphere_measure(src: &dyn GreenSource, aut: &Automaton, m: usize) -> Result<SphereMeasure> {
    let elements = aut.enumerate_sphere(m);
    let mut weights: Vec<f64> = elements
        .iter()
        .map(|x| src.green(x).map(|g| g * g).ok_or_else(|| Error::Coverage(String::from("sphere element"))))
        .collect::<Result<_>>()?;
    let s: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= s);
    Ok(SphereMeasure { r: src.r(), m, elements, weights })
}

/// Level-set data: (sphere, G value, multiplicity).
pub fn level_data_table(bt: &BallTable, values: &[f64]) -> Vec<(usize, f64, f64)> {
    (0..values.len()).map(|i| (bt.sphere_of(i), values[i], bt.weight(i))).collect()
}

pub fn level_data_source(src: &dyn GreenSource, aut: &Automaton, m_max: usize) -> Result<Vec<(usize, f64, f64)>> {
    if src.is_radial() {
        let counts = aut.sphere_counts(m_max);
        (0..=m_max)
            .map(|m| {
                let g = src.green(&ray_element(aut, m)).ok_or_else(|| Error::Coverage(String::from("sphere")))?;
                Ok((m, g, counts[m] as f64))
            })
            .collect()
    } else {
        let mut out = Vec::new();
        for m in 0..=m_max {
            for x in aut.enumerate_sphere(m) {
                out.push((m, src.green(&x).ok_or_else(|| Error::Coverage(String::from("sphere")))?, 1.0));
            }
        }
        Ok(out)
    }
}

/// (ε, #{G ≥ ε}, ε²·count) for each ε; ε must exceed every value on the
/// outermost sphere, otherwise the count is truncated by the ball.
pub fn level_set_counts(data: &[(usize, f64, f64)], eps: &[f64]) -> Result<Vec<(f64, f64, f64)>> {
    let outer = data.iter().map(|d| d.0).max().unwrap_or(0);
    let floor = data.iter().filter(|d| d.0 == outer).map(|d| d.1).fold(0.0f64, f64::max);
    let mut sorted: Vec<(f64, f64)> = data.iter().map(|d| (d.1, d.2)).collect();
    sorted.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let mut out = Vec::new();
    for &e in eps {
        if e <= floor {
            return Err(Error::Domain(format!("epsilon {e:.3e} not above the outer-sphere maximum {floor:.3e}")));
        }
        let count: f64 = sorted.iter().take_while(|s| s.0 >= e).map(|s| s.1).sum();
        out.push((e, count, e * e * count));
    }
    Ok(out)
}

/// max/min of ε²·count.
pub fn level_set_ratio(rows: &[(f64, f64, f64)]) -> f64 {
    let hi = rows.iter().map(|r| r.2).fold(0.0f64, f64::max);
    let lo = rows.iter().map(|r| r.2).fold(f64::INFINITY, f64::min);
    hi / lo
}

/// Weights of λ_{r,m} over the sphere, in lexicographic word order.
pub enum SphereWeights<'a> {
    /// Unnormalised weights aligned with lexicographic order of S_m.
    Values(&'a [f64]),
    /// Radial Green function: λ_{r,m} is uniform on S_m.
    Uniform,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ErgodicReport {
    pub m: usize,
    pub delta: f64,
    pub mean: f64,
    pub probability: f64,
    pub method: &'static str,
}

/// λ_{r,m}-probability that the Birkhoff average of `g` (a function on
/// chain states) along the accepted path deviates from ∫g dμ by more
/// than `delta`.
pub fn ergodic_average_check(
    chain: &CylinderChain,
    pr: &PressureResult,
    aut: &Automaton,
    g: &[f64],
    m: usize,
    delta: f64,
    weights: SphereWeights,
) -> Result<ErgodicReport> {
    if m < chain.depth {
        return Err(Error::Domain(format!("m = {m} below the chain depth")));
    }
    let gibbs = pr.gibbs();
    let mean: f64 = gibbs.iter().zip(g).map(|(a, b)| a * b).sum::<f64>() / gibbs.iter().sum::<f64>();
    let blocks = (m - chain.depth + 1) as f64;
    let integer = g.iter().all(|v| v.fract() == 0.0 && *v >= 0.0 && *v < 64.0);
    match weights {
        SphereWeights::Uniform if integer => {
            // DP over (chain state, integer Birkhoff sum)
            let gmax = g.iter().fold(0.0f64, |a, &b| a.max(b)) as usize;
            let width = gmax * (m - chain.depth + 1) + 1;
            let n = chain.len();
            let mut cur = vec![0.0f64; n * width];
            for u in 0..n {
                if chain.initial[u] {
                    cur[u * width + g[u] as usize] += 1.0;
                }
            }
            for _ in chain.depth..m {
                let mut next = vec![0.0f64; n * width];
                for u in 0..n {
                    for s in 0..width {
                        let c = cur[u * width + s];
                        if c == 0.0 {
                            continue;
                        }
                        for &t in chain.successors(u) {
                            let t = t as usize;
                            next[t * width + s + g[t] as usize] += c;
                        }
                    }
                }
                cur = next;
            }
            let mut total = 0.0;
            let mut bad = 0.0;
            for u in 0..n {
                for s in 0..width {
                    let c = cur[u * width + s];
                    total += c;
                    if ((s as f64) / blocks - mean).abs() > delta {
                        bad += c;
                    }
                }
            }
            Ok(ErgodicReport { m, delta, mean, probability: bad / total, method: "dynamic programming" })
        }
        SphereWeights::Uniform => Err(Error::NotApplicable(String::from("uniform weights need an integer-valued g"))),
        SphereWeights::Values(vals) => {
            let mut walker = Walker { chain, aut, g, m, mean, delta, blocks, vals, next: 0, total: 0.0, bad: 0.0 };
            let mut edges = Vec::with_capacity(m);
            walker.dfs(aut.start(), &mut edges, 0.0);
            if walker.next != vals.len() {
                return Err(Error::Coverage(format!("{} weights for a sphere of {}", vals.len(), walker.next)));
            }
            Ok(ErgodicReport { m, delta, mean, probability: walker.bad / walker.total, method: "enumeration" })
        }
    }
}

struct Walker<'a> {
    chain: &'a CylinderChain,
    aut: &'a Automaton,
    g: &'a [f64],
    m: usize,
    mean: f64,
    delta: f64,
    blocks: f64,
    vals: &'a [f64],
    next: usize,
    total: f64,
    bad: f64,
}

impl Walker<'_> {
    fn dfs(&mut self, s: u32, edges: &mut Vec<u32>, acc: f64) {
        let k = self.chain.depth;
        if edges.len() == self.m {
            let w = self.vals.get(self.next).copied().unwrap_or(0.0);
            self.next += 1;
            self.total += w;
            if (acc / self.blocks - self.mean).abs() > self.delta {
                self.bad += w;
            }
            return;
        }
        for x in self.aut.presentation().generators() {
            if let Some(t) = self.aut.transition(s, x) {
                let e = self.chain.edge_of[&(s, x)];
                edges.push(e);
                let add = if edges.len() >= k { self.g[self.chain.index[&edges[edges.len() - k..]] as usize] } else { 0.0 };
                self.dfs(t, edges, acc + add);
                edges.pop();
            }
        }
    }
}

/// Gibbs band: min/max over recurrent blocks of μ[u]/exp(S_kφ(u) − k·Pr).
pub fn gibbs_band(chain: &CylinderChain, pr: &PressureResult, pot: &CylinderPotential, theta: f64) -> (f64, f64) {
    let mu = pr.gibbs();
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for u in 0..chain.len() {
        if mu[u] <= 1e-300 {
            continue;
        }
        let w = chain.label(u);
        let Some(s) = pot.birkhoff(&w) else { continue };
        let v = mu[u] / (theta * s - chain.depth as f64 * pr.value).exp();
        lo = lo.min(v);
        hi = hi.max(v);
    }
    (lo, hi)
}

#[derive(Clone, Debug, PartialEq)]
pub struct XiReport {
    pub m: usize,
    pub values: Vec<f64>,
    pub mean: f64,
    pub spread: f64,
    /// Radius of the y-ball used in the sum.
    pub inner_radius: usize,
}

/// m⁻¹ η⁻¹ Σ_y G(1,y)G(y,x)/G(1,x) for x drawn from λ_{r,m}; y runs over
/// B(1, coverage − m).
pub fn xi_estimator(src: &dyn GreenSource, aut: &Automaton, eta: f64, m: usize, samples: usize, seed: u64) -> Result<XiReport> {
    if m == 0 || m >= src.coverage() {
        return Err(Error::Coverage(format!("m = {m} with coverage {}", src.coverage())));
    }
    let inner_radius = (src.coverage() - m).min(6);
    let meas = sphere_measure(src, aut, m)?;
    let ys: Vec<GroupElement> = (0..=inner_radius).flat_map(|j| aut.enumerate_sphere(j)).collect();
    let gy: Vec<f64> = ys.iter().map(|y| src.green(y).unwrap_or(0.0)).collect();
    let cum: Vec<f64> = meas
        .weights
        .iter()
        .scan(0.0, |a, w| {
            *a += w;
            Some(*a)
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(samples);
    for _ in 0..samples {
        let u = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
        let i = cum.partition_point(|&c| c <= u).min(cum.len() - 1);
        let x = &meas.elements[i];
        let gx = src.green(x).ok_or_else(|| Error::Coverage(String::from("sample")))?;
        let mut s = 0.0;
        for (y, g1y) in ys.iter().zip(&gy) {
            s += g1y * src.green_pair(y, x).ok_or_else(|| Error::Coverage(String::from("y^{-1}x")))?;
        }
        values.push(s / gx / (m as f64 * eta));
    }
    let mean = values.iter().sum::<f64>() / values.len().max(1) as f64;
    let spread = values.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max);
    Ok(XiReport { m, values, mean, spread, inner_radius })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asymptotics::FreeGroupOracle;
    use crate::boundary::build_potential;
    use crate::group::Presentation;

    #[test]
    fn chain_counts() {
        let p = Presentation::free(2).unwrap();
        let aut = Automaton::build(&p);
        let c1 = refine(&aut, 1).unwrap();
        assert_eq!(c1.len(), aut.edges().len());
        let c2 = refine(&aut, 2).unwrap();
        assert_eq!(c2.len() - c2.initial.iter().filter(|&&b| b).count(), 12 * 3);
        let s = Presentation::surface(2).unwrap();
        let a2 = Automaton::build(&s);
        let c3 = refine(&a2, 3).unwrap();
        for m in 3..7 {
            assert_eq!(c3.path_count(m - 3), automaton_path_count(&a2, m));
        }
    }

    #[test]
    fn counting_pressure_is_log_growth() {
        for p in [Presentation::free(2).unwrap(), Presentation::surface(2).unwrap()] {
            let aut = Automaton::build(&p);
            let chain = refine(&aut, 2).unwrap();
            let pr = pressure(&TransferOperator::counting(&chain)).unwrap();
            assert!((pr.value - aut.growth_rate().unwrap().ln()).abs() < 1e-9, "{} {} {}", pr.value, aut.growth_rate().unwrap().ln(), pr.iterations);
            assert!((pr.lambda_left - pr.lambda_right).abs() < 1e-8);
        }
    }

    #[test]
    fn free_group_pressure_and_theta_root() {
        let o = FreeGroupOracle::new(2).unwrap();
        let p = o.presentation();
        let aut = Automaton::build(&p);
        let chain = refine(&aut, 2).unwrap();
        let pot = build_potential(&o.green_source(o.big_r()).unwrap(), &aut, 2).unwrap();
        assert!(pressure_zero_check(&chain, &pot).unwrap().abs() < 1e-9);
        let pot1 = build_potential(&o.green_source(1.0).unwrap(), &aut, 2).unwrap();
        assert!((theta_root(&chain, &pot1, 1e-8).unwrap() - 1.0).abs() < 1e-6);
        // constant potential: log 3 + θ c on the recurrent part
        let pr = pressure_of(&chain, &pot1, 0.7).unwrap();
        assert!((pr.value - (3f64.ln() + 0.7 * (1.0f64 / 3.0).ln())).abs() < 1e-9);
    }

    #[test]
    fn free_group_sums_eta_levels() {
        let o = FreeGroupOracle::new(2).unwrap();
        let p = o.presentation();
        let aut = Automaton::build(&p);
        let src = o.green_source(o.big_r()).unwrap();
        let sums = source_sphere_sums(&src, &aut, 2.0, 20).unwrap();
        for w in sums[1..].windows(2) {
            assert!((w[1].1 / w[0].1 - 1.0).abs() < 1e-9);
        }
        let r = 0.9 * o.big_r();
        let s = source_sphere_sums(&o.green_source(r).unwrap(), &aut, 2.0, 60).unwrap();
        let fit = fit_sphere_sums(&s, 2.0, (10, 60)).unwrap();
        let e = eta(&fit);
        assert!((e.value - o.eta(r).unwrap()).abs() < 1e-4, "{e:?}");
        let data = level_data_source(&src, &aut, 30).unwrap();
        let eps: Vec<f64> = (0..21).map(|i| 0.1 * 10f64.powf(-0.1 * i as f64)).collect();
        let rows = level_set_counts(&data, &eps).unwrap();
        assert!(level_set_ratio(&rows) < 3.0);
        assert!(level_set_counts(&data, &[1e-12]).is_err());
    }

    #[test]
    fn free_group_ergodic_average() {
        let o = FreeGroupOracle::new(2).unwrap();
        let p = o.presentation();
        let aut = Automaton::build(&p);
        let chain = refine(&aut, 2).unwrap();
        let src = o.green_source(1.0).unwrap();
        let pot = build_potential(&src, &aut, 2).unwrap();
        let pr = pressure_of(&chain, &pot, 2.0).unwrap();
        let u = (0..chain.len()).find(|&u| !chain.initial[u]).unwrap();
        let mut g = vec![0.0; chain.len()];
        g[u] = 1.0;
        let rep = ergodic_average_check(&chain, &pr, &aut, &g, 40, 0.05, SphereWeights::Uniform).unwrap();
        assert!(rep.probability < 0.1, "{rep:?}");
        let ones = vec![1.0; chain.len()];
        let rep = ergodic_average_check(&chain, &pr, &aut, &ones, 12, 0.05, SphereWeights::Uniform).unwrap();
        assert_eq!(rep.probability, 0.0);
        // enumeration agrees with the DP on a small sphere
        let vals = vec![1.0; aut.sphere_counts(8)[8] as usize];
        let a = ergodic_average_check(&chain, &pr, &aut, &g, 8, 0.05, SphereWeights::Values(&vals)).unwrap();
        let b = ergodic_average_check(&chain, &pr, &aut, &g, 8, 0.05, SphereWeights::Uniform).unwrap();
        assert!((a.probability - b.probability).abs() < 1e-12);
    }
}
