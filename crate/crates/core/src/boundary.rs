//! Martin-kernel ratios along periodic geodesic rays, the cylinder
//! potential φ_{r,k}, and the pair-summability diagnostic.

use alloc::collections::{BTreeMap, VecDeque};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::automaton::Automaton;
use crate::error::{Error, Result};
use crate::green::{pair_partial_sums, GreenSource};
use crate::group::{GroupElement, Presentation, Word};
use crate::linalg;
use crate::walk::{sample_path, StepDistribution};

/// Accepted ray `head · cycle · cycle · …`.
#[derive(Clone, Debug, PartialEq)]
pub struct RaySpec {
    pub head: Word,
    pub cycle: Word,
}

impl RaySpec {
    /// Checks that the ray is accepted: the cycle must return the automaton
    /// to the state reached after the head.
    pub fn periodic(aut: &Automaton, head: Word, cycle: Word) -> Result<Self> {
        if cycle.is_empty() {
            return Err(Error::Domain(String::from("empty cycle")));
        }
        let s = aut.run(&head).ok_or_else(|| Error::Domain(String::from("head not accepted")))?;
        let mut t = s;
        for &x in &cycle {
            t = aut.transition(t, x).ok_or_else(|| Error::Domain(String::from("cycle not accepted")))?;
        }
        if t != s {
            return Err(Error::Domain(String::from("cycle does not close in the automaton")));
        }
        Ok(RaySpec { head, cycle })
    }

    /// Shortest cycle through the first recurrent edge, reached by the
    /// shortlex-first word.
    pub fn default_for(aut: &Automaton) -> Result<Self> {
        let edges = aut.edges();
        let mask = aut.recurrent_mask();
        let (_, e) = edges
            .iter()
            .enumerate()
            .find(|(i, _)| mask[*i])
            .ok_or_else(|| Error::Domain(String::from("no recurrent edge")))?;
        // BFS from e.dst back to e.src along recurrent edges
        let n = aut.state_count();
        let mut prev: Vec<Option<usize>> = vec![None; n];
        let mut seen = vec![false; n];
        seen[e.dst as usize] = true;
        let mut queue = VecDeque::from([e.dst as usize]);
        while let Some(s) = queue.pop_front() {
            if s == e.src as usize {
                break;
            }
            for (j, f) in edges.iter().enumerate() {
                if mask[j] && f.src as usize == s && !seen[f.dst as usize] {
                    seen[f.dst as usize] = true;
                    prev[f.dst as usize] = Some(j);
                    queue.push_back(f.dst as usize);
                }
            }
        }
        let mut back = Vec::new();
        let mut s = e.src as usize;
        while s != e.dst as usize {
            let j = prev[s].ok_or_else(|| Error::Domain(String::from("recurrent edge not on a cycle")))?;
            back.push(edges[j].label);
            s = edges[j].src as usize;
        }
        back.reverse();
        let mut cycle = vec![e.label];
        cycle.extend(back);
        RaySpec::periodic(aut, aut.state_name(e.src).to_vec(), cycle)
    }

    pub fn word(&self, n: usize) -> Word {
        let mut w: Word = self.head.iter().copied().take(n).collect();
        while w.len() < n {
            let k = w.len() - self.head.len().min(w.len());
            w.push(self.cycle[k % self.cycle.len()]);
        }
        w
    }

    /// y_n, the element at distance n along the ray.
    pub fn prefix(&self, p: &Presentation, n: usize) -> GroupElement {
        p.element(&self.word(n))
    }
}

/// G_r(x, y_n)/G_r(1, y_n).
pub fn martin_ratio(src: &dyn GreenSource, x: &GroupElement, ray: &RaySpec, n: usize) -> Result<f64> {
    let p = src.presentation();
    let y = ray.prefix(p, n);
    let num = src.green_pair(x, &y).ok_or_else(|| Error::Coverage(format!("G(x, y_{n})")))?;
    let den = src.green(&y).ok_or_else(|| Error::Coverage(format!("G(1, y_{n})")))?;
    Ok(num / den)
}

#[derive(Clone, Debug, PartialEq)]
pub struct HolderFit {
    /// ϱ̂; zero when the ratios become exactly constant.
    pub rate: f64,
    pub constant: f64,
    pub residual: f64,
    /// (n, |ratio(n) − ratio(n_max)|)
    pub differences: Vec<(usize, f64)>,
    /// (n, |ratio(n) − ratio(2n)|) where 2n is in range.
    pub cauchy: Vec<(usize, f64)>,
    pub decreasing: bool,
    pub skipped: bool,
    pub low_confidence: bool,
}

/// Fits |ratio(n) − ratio(n_max)| ≈ C ϱ^n over n in `n_range`.
pub fn holder_rate_fit(src: &dyn GreenSource, x: &GroupElement, ray: &RaySpec, n_range: (usize, usize)) -> Result<HolderFit> {
    let (lo, hi) = n_range;
    if hi <= lo {
        return Err(Error::InsufficientData(String::from("empty n range")));
    }
    let ratios: Vec<f64> = (lo..=hi).map(|n| martin_ratio(src, x, ray, n)).collect::<Result<_>>()?;
    let last = *ratios.last().unwrap();
    let scale = last.abs().max(1e-300);
    let differences: Vec<(usize, f64)> = (lo..hi).map(|n| (n, (ratios[n - lo] - last).abs())).collect();
    let cauchy: Vec<(usize, f64)> =
        (lo..=hi).filter(|&n| 2 * n <= hi).map(|n| (n, (ratios[n - lo] - ratios[2 * n - lo]).abs())).collect();
    let decreasing = differences.windows(2).all(|w| w[1].1 <= w[0].1 * (1.0 + 1e-9) + 1e-15 * scale);
    let live: Vec<(usize, f64)> = differences.iter().copied().filter(|d| d.1 > 1e-13 * scale).collect();
    if x.is_identity() || live.is_empty() {
        return Ok(HolderFit {
            rate: 0.0,
            constant: 0.0,
            residual: 0.0,
            differences,
            cauchy,
            decreasing,
            skipped: x.is_identity(),
            low_confidence: false,
        });
    }
    if live.len() < 2 {
        // a single nonzero difference followed by exact agreement
        return Ok(HolderFit { rate: 0.0, constant: live[0].1, residual: 0.0, differences, cauchy, decreasing, skipped: false, low_confidence: false });
    }
    let xs: Vec<f64> = live.iter().map(|d| d.0 as f64).collect();
    let ys: Vec<f64> = live.iter().map(|d| d.1.ln()).collect();
    let (s, c, res) = linalg::linear_fit(&xs, &ys);
    Ok(HolderFit { rate: s.exp(), constant: c.exp(), residual: res, differences, cauchy, decreasing, skipped: false, low_confidence: !decreasing })
}

/// φ_{r,k}(w) = log G_r(1, w) − log G_r(1, w minus its first letter), for
/// every label of an automaton path of length 1..=k.
#[derive(Clone, Debug, PartialEq)]
pub struct CylinderPotential {
    pub r: f64,
    pub depth: usize,
    pub log_g11: f64,
    pub values: BTreeMap<Word, f64>,
}

/// Labels of all automaton paths of length `len`, from any state.
pub fn path_labels(aut: &Automaton, len: usize) -> Vec<Word> {
    let mut set = alloc::collections::BTreeSet::new();
    let mut stack: Vec<(u32, Word)> = (0..aut.state_count() as u32).map(|s| (s, Vec::new())).collect();
    while let Some((s, w)) = stack.pop() {
        if w.len() == len {
            set.insert(w);
            continue;
        }
        for x in aut.presentation().generators() {
            if let Some(t) = aut.transition(s, x) {
                let mut v = w.clone();
                v.push(x);
                stack.push((t, v));
            }
        }
    }
    set.into_iter().collect()
}

pub fn build_potential(src: &dyn GreenSource, aut: &Automaton, k: usize) -> Result<CylinderPotential> {
    if k == 0 {
        return Err(Error::Domain(String::from("depth must be at least 1")));
    }
    if k > src.coverage() {
        return Err(Error::Coverage(format!("depth {k} exceeds Green coverage {}", src.coverage())));
    }
    let p = src.presentation();
    let mut log_g: BTreeMap<Word, f64> = BTreeMap::new();
    let mut lg = |w: &[crate::group::Generator]| -> Result<f64> {
        if let Some(v) = log_g.get(w) {
            return Ok(*v);
        }
        let g = src.green(&p.element(w)).ok_or_else(|| Error::Coverage(format!("missing prefix {}", p.format_word(w))))?;
        if !(g > 0.0) {
            return Err(Error::Coverage(format!("zero Green value at {}", p.format_word(w))));
        }
        let v = g.ln();
        log_g.insert(w.to_vec(), v);
        Ok(v)
    };
    let log_g11 = lg(&[])?;
    let mut values = BTreeMap::new();
    for len in 1..=k {
        for w in path_labels(aut, len) {
            let v = lg(&w)? - lg(&w[1..])?;
            values.insert(w, v);
        }
    }
    Ok(CylinderPotential { r: src.r(), depth: k, log_g11, values })
}

impl CylinderPotential {
    pub fn phi(&self, w: &[crate::group::Generator]) -> Option<f64> {
        self.values.get(w).copied()
    }

    /// S_nφ(ω) = Σ_j φ(σ^j ω) using the first `depth` letters of each shift.
    pub fn birkhoff(&self, w: &[crate::group::Generator]) -> Option<f64> {
        (0..w.len()).map(|j| self.phi(&w[j..(j + self.depth).min(w.len())])).sum()
    }

    /// Largest |log G(1, ω) − log G(1,1) − S_nφ(ω)| over accepted words of
    /// length ≤ depth from the start state.
    pub fn cocycle_defect(&self, src: &dyn GreenSource, aut: &Automaton) -> Result<f64> {
        let p = src.presentation();
        let mut worst = 0.0f64;
        for m in 1..=self.depth {
            for w in aut.sphere_words(m) {
                let g = src.green(&p.element_unchecked(w.clone())).ok_or_else(|| Error::Coverage(p.format_word(&w)))?;
                let s = self.birkhoff(&w).ok_or_else(|| Error::Coverage(p.format_word(&w)))?;
                worst = worst.max((g.ln() - self.log_g11 - s).abs());
            }
        }
        Ok(worst)
    }

    /// CSV rows: prefix, value, depth, r.
    pub fn csv_rows(&self, p: &Presentation) -> Vec<String> {
        self.values.iter().map(|(w, v)| format!("{},{:.17e},{},{:.17e}", p.format_word(w), v, w.len(), self.r)).collect()
    }
}

/// max |φ(w[..k]) − φ(w)| over path labels w of length k + 1.
pub fn depth_delta(deep: &CylinderPotential, k: usize) -> f64 {
    deep.values
        .iter()
        .filter(|(w, _)| w.len() == k + 1)
        .filter_map(|(w, v)| deep.phi(&w[..k]).map(|u| (u - v).abs()))
        .fold(0.0, f64::max)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairSummability {
    /// Partial sums per trajectory pair, index N = 0..=horizon.
    pub partial: Vec<Vec<f64>>,
    /// Fraction of pairs whose tail increments decrease over the window.
    pub decreasing_fraction: f64,
    /// Mean ratio of the last increment to the total.
    pub tail_ratio: f64,
}

/// Partial sums Σ_{m,n ≤ N} G(X_m, Y_n) along independent trajectories;
/// Green values past the source's coverage use G ≤ C ϱ^d.
pub fn pair_summability_check(
    src: &dyn GreenSource,
    sd: &StepDistribution,
    horizon: usize,
    pairs: usize,
    seed: u64,
    fallback: (f64, f64),
    window: (usize, usize),
) -> Result<PairSummability> {
    let p = src.presentation();
    let mut partial = Vec::new();
    let mut ok = 0usize;
    let mut tail = 0.0;
    for t in 0..pairs {
        let xs = sample_path(p, sd, horizon, seed, 2 * t as u64);
        let ys = sample_path(p, sd, horizon, seed, 2 * t as u64 + 1);
        let s = pair_partial_sums(src, &xs, &ys, fallback)?;
        let inc: Vec<f64> = (0..s.len()).map(|n| if n == 0 { s[0] } else { s[n] - s[n - 1] }).collect();
        let (a, b) = (window.0.min(horizon), window.1.min(horizon));
        // increments are noisy per step; compare block averages of 5
        let blocks: Vec<f64> = (a..=b).collect::<Vec<_>>().chunks(5).map(|c| c.iter().map(|&n| inc[n]).sum::<f64>() / c.len() as f64).collect();
        if blocks.windows(2).all(|w| w[1] <= w[0]) {
            ok += 1;
        }
        tail += inc[horizon] / s[horizon];
        partial.push(s);
    }
    Ok(PairSummability { partial, decreasing_fraction: ok as f64 / pairs.max(1) as f64, tail_ratio: tail / pairs.max(1) as f64 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asymptotics::FreeGroupOracle;

    #[test]
    fn rays_are_accepted() {
        for p in [Presentation::free(2).unwrap(), Presentation::surface(2).unwrap()] {
            let aut = Automaton::build(&p);
            let ray = RaySpec::default_for(&aut).unwrap();
            for n in 0..30 {
                let w = ray.word(n);
                assert!(aut.accepts(&w));
                assert_eq!(ray.prefix(&p, n).len(), n);
            }
        }
    }

    #[test]
    fn free_group_martin_ratios_are_exact() {
        let o = FreeGroupOracle::new(2).unwrap();
        let p = o.presentation();
        let aut = Automaton::build(&p);
        let src = o.green_source(1.0).unwrap();
        let ray = RaySpec::default_for(&aut).unwrap();
        let x = ray.prefix(&p, 2);
        for n in 2..10 {
            let v = martin_ratio(&src, &x, &ray, n).unwrap();
            assert!((v - src.f.powi(-2)).abs() < 1e-12);
        }
        assert_eq!(martin_ratio(&src, &p.identity(), &ray, 5).unwrap(), 1.0);
        let fit = holder_rate_fit(&src, &p.parse_element("B1").unwrap(), &ray, (1, 12)).unwrap();
        assert!(fit.rate < 1.0 && fit.residual < 1e-6);
    }

    #[test]
    fn free_group_potential_is_log_f() {
        let o = FreeGroupOracle::new(2).unwrap();
        let p = o.presentation();
        let aut = Automaton::build(&p);
        let src = o.green_source(0.9).unwrap();
        let pot = build_potential(&src, &aut, 3).unwrap();
        for (w, v) in &pot.values {
            assert!((v - src.f.ln()).abs() < 1e-12, "{w:?}");
        }
        assert!(pot.cocycle_defect(&src, &aut).unwrap() < 1e-12);
        assert!(depth_delta(&pot, 2) < 1e-12);
    }

    #[test]
    fn free_group_pair_sums_converge() {
        let o = FreeGroupOracle::new(2).unwrap();
        let p = o.presentation();
        let src = o.green_source(o.big_r()).unwrap();
        let sd = StepDistribution::srw(&p);
        let rep = pair_summability_check(&src, &sd, 30, 5, 3, (3.0, 1.0 / 3f64.sqrt()), (10, 30)).unwrap();
        assert!(rep.tail_ratio < 1e-3, "{rep:?}");
        let zero = pair_summability_check(&src, &sd, 0, 1, 3, (3.0, 0.5), (0, 0)).unwrap();
        assert!((zero.partial[0][0] - 3.0).abs() < 1e-6);
    }
}
