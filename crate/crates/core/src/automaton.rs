//! Geodesic word acceptors for surface and free groups.
//!
//! [`Automaton::build`] returns an acceptor whose paths from the start state
//! biject with group elements. For surface groups a state records the last
//! letter, the current run lengths in both relator orientations, and whether
//! the current run continues a ladder of half-relator runs (see
//! [`Presentation::dehn_reduce`]). [`Automaton::literal`] builds the
//! length-2g window acceptor instead; it is kept for comparison and is not a
//! bijection.

use alloc::collections::{BTreeMap, VecDeque};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::group::{Generator, GroupElement, GroupKind, Orientation, Presentation, Word};

pub const NO_EDGE: u32 = u32::MAX;

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Variant {
    /// Bijective geodesic acceptor (run/ladder states for surface groups).
    Geodesic,
    /// Window acceptor on reduced words of length at most 2g.
    Literal { forbid_inverse_relator: bool },
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct Edge {
    pub src: u32,
    pub dst: u32,
    pub label: Generator,
}

#[derive(Clone, Debug)]
pub struct Automaton {
    presentation: Presentation,
    variant: Variant,
    n_states: usize,
    delta: Vec<u32>,
    edges: Vec<Edge>,
    recurrent: Vec<bool>,
    names: Vec<Word>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
struct RunState {
    last: u8,
    rlen: u8,
    llen: u8,
    armed: bool,
}

/// Graph-theoretic summary of an acceptor.
#[derive(Clone, Debug, PartialEq)]
pub struct StructureReport {
    pub states: usize,
    pub edges: usize,
    pub recurrent_edges: usize,
    pub transient_edges: usize,
    pub no_edge_into_start: bool,
    pub all_reachable: bool,
    pub recurrent_strongly_connected: bool,
    pub period: u64,
    pub aperiodic: bool,
}

/// Strongly connected components (iterative Tarjan). Returns component ids.
pub fn scc(n: usize, adj: &[Vec<u32>]) -> Vec<u32> {
    let mut index = vec![u32::MAX; n];
    let mut low = vec![0u32; n];
    let mut on_stack = vec![false; n];
    let mut comp = vec![u32::MAX; n];
    let mut stack: Vec<u32> = Vec::new();
    let mut counter = 0u32;
    let mut n_comp = 0u32;
    for root in 0..n {
        if index[root] != u32::MAX {
            continue;
        }
        let mut call: Vec<(u32, usize)> = vec![(root as u32, 0)];
        index[root] = counter;
        low[root] = counter;
        counter += 1;
        stack.push(root as u32);
        on_stack[root] = true;
        while let Some(&mut (v, ref mut next)) = call.last_mut() {
            let v = v as usize;
            if *next < adj[v].len() {
                let w = adj[v][*next] as usize;
                *next += 1;
                if index[w] == u32::MAX {
                    index[w] = counter;
                    low[w] = counter;
                    counter += 1;
                    stack.push(w as u32);
                    on_stack[w] = true;
                    call.push((w as u32, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                call.pop();
                if let Some(&(u, _)) = call.last() {
                    let u = u as usize;
                    low[u] = low[u].min(low[v]);
                }
                if low[v] == index[v] {
                    loop {
                        let w = stack.pop().unwrap() as usize;
                        on_stack[w] = false;
                        comp[w] = n_comp;
                        if w == v {
                            break;
                        }
                    }
                    n_comp += 1;
                }
            }
        }
    }
    comp
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Recurrent-edge flags, strong connectivity of the recurrent subgraph and
/// its period, for an arbitrary digraph given as `(src, dst)` pairs.
pub fn analyze_digraph(n: usize, edges: &[(u32, u32)]) -> (Vec<bool>, bool, u64) {
    let mut adj = vec![Vec::new(); n];
    for &(s, d) in edges {
        adj[s as usize].push(d);
    }
    let comp = scc(n, &adj);
    let recurrent: Vec<bool> = edges.iter().map(|&(s, d)| comp[s as usize] == comp[d as usize]).collect();
    let mut comps: Vec<u32> = edges
        .iter()
        .zip(&recurrent)
        .filter(|(_, &r)| r)
        .map(|(&(s, _), _)| comp[s as usize])
        .collect();
    comps.sort_unstable();
    comps.dedup();
    let connected = comps.len() == 1;
    let mut period = 0u64;
    if let Some(&c) = comps.first() {
        // BFS levels inside the component; period = gcd of level defects
        let root = (0..n).find(|&v| comp[v] == c).unwrap();
        let mut level = vec![i64::MIN; n];
        level[root] = 0;
        let mut queue = VecDeque::from([root]);
        while let Some(v) = queue.pop_front() {
            for &w in &adj[v] {
                let w = w as usize;
                if comp[w] == c && level[w] == i64::MIN {
                    level[w] = level[v] + 1;
                    queue.push_back(w);
                }
            }
        }
        for (&(s, d), &r) in edges.iter().zip(&recurrent) {
            if r && comp[s as usize] == c {
                let defect = (level[s as usize] + 1 - level[d as usize]).unsigned_abs();
                period = gcd(period, defect);
            }
        }
    }
    (recurrent, connected, period)
}

impl Automaton {
    /// The bijective geodesic acceptor.
    pub fn build(p: &Presentation) -> Automaton {
        match p.kind() {
            GroupKind::Free { .. } => Self::build_free(p),
            GroupKind::Surface { .. } => Self::build_surface(p),
        }
    }

    fn build_free(p: &Presentation) -> Automaton {
        let k = p.alphabet_size();
        let inv = p.inverse_table();
        let mut delta = vec![NO_EDGE; (k + 1) * k];
        for x in 0..k {
            delta[x] = (x + 1) as u32;
        }
        for s in 1..=k {
            for x in 0..k {
                if inv[s - 1] as usize != x {
                    delta[s * k + x] = (x + 1) as u32;
                }
            }
        }
        Self::finish(p.clone(), Variant::Geodesic, k + 1, delta)
    }

    fn build_surface(p: &Presentation) -> Automaton {
        let h = p.half() as u8;
        let k = p.alphabet_size();
        let inv = p.inverse_table();
        let succ_r = p.successor(Orientation::R);
        let succ_l = p.successor(Orientation::L);
        let step = |s: Option<RunState>, y: u8| -> Option<RunState> {
            let Some(s) = s else {
                return Some(RunState { last: y, rlen: 1, llen: 1, armed: false });
            };
            let x = s.last;
            if inv[x as usize] == y {
                return None;
            }
            let (rlen, armed) = if succ_r[x as usize] == y {
                (s.rlen + 1, s.armed)
            } else if p.turn2(Orientation::R, x) == y {
                (1, s.rlen == h || (s.armed && s.rlen + 1 == h))
            } else {
                (1, false)
            };
            let llen = if succ_l[x as usize] == y { s.llen + 1 } else { 1 };
            if rlen > h || llen >= h || (armed && rlen == h) {
                return None;
            }
            Some(RunState { last: y, rlen, llen, armed })
        };
        let mut ids: BTreeMap<RunState, u32> = BTreeMap::new();
        let mut order: Vec<Option<RunState>> = vec![None];
        let mut trans: Vec<(u32, u8, RunState)> = Vec::new();
        let mut head = 0usize;
        while head < order.len() {
            let s = order[head];
            for y in 0..k as u8 {
                if let Some(t) = step(s, y) {
                    if !ids.contains_key(&t) {
                        ids.insert(t, order.len() as u32);
                        order.push(Some(t));
                    }
                    trans.push((head as u32, y, t));
                }
            }
            head += 1;
        }
        let n = order.len();
        let mut delta = vec![NO_EDGE; n * k];
        for (src, y, t) in trans {
            delta[src as usize * k + y as usize] = ids[&t];
        }
        Self::finish(p.clone(), Variant::Geodesic, n, delta)
    }

    /// Window acceptor: states are reduced words of length at most 2g; a
    /// full-length state shifts its window unless the extended word is the
    /// start of a cyclic permutation of the relator (optionally also of its
    /// inverse). Free groups get the same acceptor as [`Automaton::build`].
    pub fn literal(p: &Presentation, forbid_inverse_relator: bool) -> Automaton {
        if !p.is_surface() {
            let mut a = Self::build_free(p);
            a.variant = Variant::Literal { forbid_inverse_relator };
            return a;
        }
        let h = p.half();
        let n_rel = p.relator().len();
        let k = p.alphabet_size();
        let inv = p.inverse_table();
        let rel: Vec<u8> = p.relator().iter().map(|x| x.0).collect();
        let rel_inv: Vec<u8> = p.invert_word(p.relator()).iter().map(|x| x.0).collect();
        let mut forbidden: Vec<Vec<u8>> = Vec::new();
        for cyc in [Some(&rel), if forbid_inverse_relator { Some(&rel_inv) } else { None }].into_iter().flatten() {
            for s in 0..n_rel {
                forbidden.push((0..=h).map(|i| cyc[(s + i) % n_rel]).collect());
            }
        }
        // enumerate reduced words of length <= h in shortlex order
        let mut words: Vec<Vec<u8>> = vec![Vec::new()];
        let mut layer_start = 0usize;
        for _ in 0..h {
            let layer_end = words.len();
            for i in layer_start..layer_end {
                for y in 0..k as u8 {
                    let w = &words[i];
                    if w.last().map_or(true, |&x| inv[x as usize] != y) {
                        let mut nw = w.clone();
                        nw.push(y);
                        words.push(nw);
                    }
                }
            }
            layer_start = layer_end;
        }
        let index: BTreeMap<Vec<u8>, u32> = words.iter().enumerate().map(|(i, w)| (w.clone(), i as u32)).collect();
        let n = words.len();
        let mut delta = vec![NO_EDGE; n * k];
        for (i, w) in words.iter().enumerate() {
            for y in 0..k as u8 {
                if w.last().map_or(false, |&x| inv[x as usize] == y) {
                    continue;
                }
                let mut wx = w.clone();
                wx.push(y);
                let target = if w.len() < h {
                    wx.clone()
                } else {
                    if forbidden.iter().any(|f| *f == wx) {
                        continue;
                    }
                    wx[1..].to_vec()
                };
                if let Some(&t) = index.get(&target) {
                    delta[i * k + y as usize] = t;
                }
            }
        }
        Self::finish(p.clone(), Variant::Literal { forbid_inverse_relator }, n, delta)
    }

    fn finish(presentation: Presentation, variant: Variant, n_states: usize, delta: Vec<u32>) -> Automaton {
        let k = presentation.alphabet_size();
        let mut edges = Vec::new();
        for s in 0..n_states {
            for x in 0..k {
                let t = delta[s * k + x];
                if t != NO_EDGE {
                    edges.push(Edge { src: s as u32, dst: t, label: Generator(x as u8) });
                }
            }
        }
        let pairs: Vec<(u32, u32)> = edges.iter().map(|e| (e.src, e.dst)).collect();
        let (recurrent, _, _) = analyze_digraph(n_states, &pairs);
        // shortlex-first accepted word reaching each state
        let mut names: Vec<Option<Word>> = vec![None; n_states];
        names[0] = Some(Vec::new());
        let mut queue = VecDeque::from([0usize]);
        while let Some(s) = queue.pop_front() {
            for x in 0..k {
                let t = delta[s * k + x];
                if t != NO_EDGE && names[t as usize].is_none() {
                    let mut w = names[s].clone().unwrap();
                    w.push(Generator(x as u8));
                    names[t as usize] = Some(w);
                    queue.push_back(t as usize);
                }
            }
        }
        let names = names.into_iter().map(|w| w.unwrap_or_default()).collect();
        Automaton { presentation, variant, n_states, delta, edges, recurrent, names }
    }

    pub fn presentation(&self) -> &Presentation {
        &self.presentation
    }
    pub fn variant(&self) -> Variant {
        self.variant
    }
    pub fn state_count(&self) -> usize {
        self.n_states
    }
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }
    pub fn recurrent_mask(&self) -> &[bool] {
        &self.recurrent
    }
    pub fn start(&self) -> u32 {
        0
    }
    /// Shortlex-first accepted word ending at `state`.
    pub fn state_name(&self, state: u32) -> &[Generator] {
        &self.names[state as usize]
    }

    #[inline]
    pub fn transition(&self, state: u32, x: Generator) -> Option<u32> {
        let t = self.delta[state as usize * self.presentation.alphabet_size() + x.index()];
        (t != NO_EDGE).then_some(t)
    }

    /// Final state of the path labelled `w` from the start, if accepted.
    pub fn run(&self, w: &[Generator]) -> Option<u32> {
        let mut s = 0u32;
        for &x in w {
            s = self.transition(s, x)?;
        }
        Some(s)
    }

    pub fn accepts(&self, w: &[Generator]) -> bool {
        self.run(w).is_some()
    }

    /// The accepted representative of `w`.
    pub fn normal_form(&self, w: &[Generator]) -> Word {
        let nf = self.presentation.normal_form(w);
        debug_assert!(self.variant != Variant::Geodesic || self.accepts(&nf));
        nf
    }

    /// Number of accepted paths of each length 0..=m_max.
    pub fn sphere_counts(&self, m_max: usize) -> Vec<u128> {
        let k = self.presentation.alphabet_size();
        let mut cur = vec![0u128; self.n_states];
        cur[0] = 1;
        let mut out = vec![1u128];
        for _ in 0..m_max {
            let mut next = vec![0u128; self.n_states];
            for s in 0..self.n_states {
                if cur[s] == 0 {
                    continue;
                }
                for x in 0..k {
                    let t = self.delta[s * k + x];
                    if t != NO_EDGE {
                        next[t as usize] += cur[s];
                    }
                }
            }
            out.push(next.iter().sum());
            cur = next;
        }
        out
    }

    /// Accepted words of length `m`, in lexicographic order.
    pub fn sphere_words(&self, m: usize) -> Vec<Word> {
        let mut out = Vec::new();
        let mut word: Word = Vec::with_capacity(m);
        self.dfs(0, m, &mut word, &mut out);
        out
    }

    fn dfs(&self, s: u32, m: usize, word: &mut Word, out: &mut Vec<Word>) {
        if word.len() == m {
            out.push(word.clone());
            return;
        }
        for x in self.presentation.generators() {
            if let Some(t) = self.transition(s, x) {
                word.push(x);
                self.dfs(t, m, word, out);
                word.pop();
            }
        }
    }

    /// Elements of the sphere of radius `m`.
    pub fn enumerate_sphere(&self, m: usize) -> Vec<GroupElement> {
        self.sphere_words(m).into_iter().map(|w| self.presentation.element_unchecked(w)).collect()
    }

    /// Leading eigenvalue of the incidence matrix by power iteration from the
    /// all-ones vector, to relative tolerance `tol`.
    pub fn growth_rate(&self) -> crate::Result<f64> {
        self.growth_rate_tol(1e-10, 1_000_000)
    }

    pub fn growth_rate_tol(&self, tol: f64, max_iter: usize) -> crate::Result<f64> {
        let mut v = vec![1.0f64; self.n_states];
        let mut prev = f64::NAN;
        for _ in 0..max_iter {
            let mut w = vec![0.0f64; self.n_states];
            for e in &self.edges {
                w[e.src as usize] += v[e.dst as usize];
            }
            let norm = w.iter().fold(0.0f64, |a, &b| a.max(b));
            if norm == 0.0 {
                return Ok(0.0);
            }
            let lambda = w.iter().sum::<f64>() / v.iter().sum::<f64>();
            let mut moved = 0.0f64;
            for (x, y) in w.iter_mut().zip(&v) {
                *x /= norm;
                moved = moved.max((*x - y).abs());
            }
            v = w;
            if (lambda - prev).abs() <= tol * lambda && moved <= 1e-6 {
                return Ok(lambda);
            }
            prev = lambda;
        }
        Err(crate::Error::NoConvergence { what: "growth-rate power iteration", iterations: max_iter })
    }

    pub fn check_structure(&self) -> StructureReport {
        let pairs: Vec<(u32, u32)> = self.edges.iter().map(|e| (e.src, e.dst)).collect();
        let (recurrent, connected, period) = analyze_digraph(self.n_states, &pairs);
        let n_rec = recurrent.iter().filter(|&&r| r).count();
        let mut seen = vec![false; self.n_states];
        seen[0] = true;
        let mut queue = VecDeque::from([0usize]);
        while let Some(s) = queue.pop_front() {
            for e in self.edges.iter().filter(|e| e.src as usize == s) {
                if !seen[e.dst as usize] {
                    seen[e.dst as usize] = true;
                    queue.push_back(e.dst as usize);
                }
            }
        }
        StructureReport {
            states: self.n_states,
            edges: self.edges.len(),
            recurrent_edges: n_rec,
            transient_edges: self.edges.len() - n_rec,
            no_edge_into_start: self.edges.iter().all(|e| e.dst != 0),
            all_reachable: seen.iter().all(|&b| b),
            recurrent_strongly_connected: connected,
            period,
            aperiodic: period == 1,
        }
    }

    /// Vertices `x, x·z_1, ..., x·z` along the accepted path of `z = x^{-1}y`.
    pub fn geodesic(&self, x: &GroupElement, y: &GroupElement) -> crate::Result<GeodesicSegment> {
        let p = &self.presentation;
        let z = p.multiply(&p.inverse(x)?, y)?;
        let mut vertices = Vec::with_capacity(z.len() + 1);
        for i in 0..=z.len() {
            let mut w = x.word().to_vec();
            w.extend_from_slice(&z.word()[..i]);
            vertices.push(p.element(&w));
        }
        Ok(GeodesicSegment { vertices })
    }

    /// Plain-text edge list; columns are tab separated.
    pub fn export_edge_list(&self) -> String {
        let p = &self.presentation;
        let mut s = format!(
            "# presentation={} variant={:?} states={} edges={}\n# src_word\tdst_word\tlabel\trecurrent_flag\n",
            p.kind(),
            self.variant,
            self.n_states,
            self.edges.len()
        );
        for (e, &r) in self.edges.iter().zip(&self.recurrent) {
            s.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                p.format_word(self.state_name(e.src)),
                p.format_word(self.state_name(e.dst)),
                p.token(e.label),
                r as u8
            ));
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeodesicSegment {
    pub vertices: Vec<GroupElement>,
}

impl GeodesicSegment {
    pub fn len(&self) -> usize {
        self.vertices.len() - 1
    }
    pub fn start(&self) -> &GroupElement {
        &self.vertices[0]
    }
    pub fn end(&self) -> &GroupElement {
        self.vertices.last().unwrap()
    }
}

/// Independent sphere enumeration by breadth-first search in the Cayley
/// graph. Elements are compared with Dehn's word-problem solution inside
/// buckets keyed by two homomorphisms onto free groups.
pub fn bfs_spheres(p: &Presentation, m_max: usize) -> Vec<Vec<Word>> {
    type Key = (Vec<u8>, Vec<u8>);
    let key = |w: &[Generator]| -> Key {
        if !p.is_surface() {
            return (p.free_reduce(w).iter().map(|x| x.0).collect(), Vec::new());
        }
        // a_j -> x_j kills b letters; b_j -> y_j kills a letters
        let proj = |keep: u8| -> Vec<u8> {
            let mut out: Vec<u8> = Vec::new();
            for &x in w {
                if x.0 % 2 != keep {
                    continue;
                }
                if out.last().map_or(false, |&y| y ^ 2 == x.0) {
                    out.pop();
                } else {
                    out.push(x.0);
                }
            }
            out
        };
        (proj(0), proj(1))
    };
    let mut spheres: Vec<Vec<Word>> = vec![vec![Vec::new()]];
    let mut maps: Vec<BTreeMap<Key, Vec<usize>>> = Vec::new();
    let mut m0 = BTreeMap::new();
    m0.insert(key(&[]), vec![0usize]);
    maps.push(m0);
    let find = |spheres: &[Vec<Word>], maps: &[BTreeMap<Key, Vec<usize>>], level: usize, w: &[Generator], kk: &Key| -> bool {
        if let Some(bucket) = maps[level].get(kk) {
            for &i in bucket {
                let mut t = w.to_vec();
                t.extend(p.invert_word(&spheres[level][i]));
                if p.is_trivial(&t) {
                    return true;
                }
            }
        }
        false
    };
    for m in 0..m_max {
        let mut next: Vec<Word> = Vec::new();
        let mut next_map: BTreeMap<Key, Vec<usize>> = BTreeMap::new();
        for u in spheres[m].clone() {
            for x in p.generators() {
                if u.last().map_or(false, |&y| p.inverse_letter(y) == x) {
                    continue;
                }
                let mut w = u.clone();
                w.push(x);
                let kk = key(&w);
                if m > 0 && find(&spheres, &maps, m - 1, &w, &kk) {
                    continue;
                }
                if find(&spheres, &maps, m, &w, &kk) {
                    continue;
                }
                let dup = next_map.get(&kk).map_or(false, |bucket| {
                    bucket.iter().any(|&i| {
                        let mut t = w.clone();
                        t.extend(p.invert_word(&next[i]));
                        p.is_trivial(&t)
                    })
                });
                if dup {
                    continue;
                }
                next_map.entry(kk).or_default().push(next.len());
                next.push(w);
            }
        }
        spheres.push(next);
        maps.push(next_map);
    }
    spheres
}

/// Result of comparing accepted paths with the breadth-first spheres.
#[derive(Clone, Debug, PartialEq)]
pub struct BijectionReport {
    pub rows: Vec<BijectionRow>,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BijectionRow {
    pub m: usize,
    pub paths: u128,
    pub bfs_sphere: usize,
    pub non_geodesic: usize,
    pub duplicates: usize,
}

/// Checks that accepted paths of each length m <= m_max are geodesic,
/// pairwise distinct, and as many as the breadth-first sphere.
pub fn bijection_test(a: &Automaton, m_max: usize) -> BijectionReport {
    let p = a.presentation();
    let spheres = bfs_spheres(p, m_max);
    let counts = a.sphere_counts(m_max);
    let mut rows = Vec::new();
    let mut pass = true;
    for m in 0..=m_max {
        let words = a.sphere_words(m);
        let non_geodesic = words.iter().filter(|w| p.dehn_reduce(w).len() != m).count();
        let mut nfs: Vec<Word> = words.iter().map(|w| p.normal_form(w)).collect();
        nfs.sort();
        let before = nfs.len();
        nfs.dedup();
        let duplicates = before - nfs.len();
        let row = BijectionRow { m, paths: counts[m], bfs_sphere: spheres[m].len(), non_geodesic, duplicates };
        pass &= row.non_geodesic == 0 && row.duplicates == 0 && row.paths == row.bfs_sphere as u128;
        rows.push(row);
    }
    BijectionReport { rows, pass }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn free_acceptor_shape() {
        let p = Presentation::free(2).unwrap();
        let a = Automaton::build(&p);
        assert_eq!(a.state_count(), 5);
        for s in 1..5u32 {
            assert_eq!(a.edges().iter().filter(|e| e.src == s).count(), 3);
        }
        assert!((a.growth_rate().unwrap() - 3.0).abs() < 1e-9);
        let p3 = Presentation::free(3).unwrap();
        assert!((Automaton::build(&p3).growth_rate().unwrap() - 5.0).abs() < 1e-9);
        let rep = a.check_structure();
        assert!(rep.recurrent_strongly_connected && rep.aperiodic);
    }

    #[test]
    fn surface_counts_follow_growth_series() {
        let p = Presentation::surface(2).unwrap();
        let a = Automaton::build(&p);
        assert_eq!(a.state_count(), 73);
        let c = a.sphere_counts(11);
        let expect: [u128; 12] =
            [1, 8, 56, 392, 2736, 19096, 133288, 930328, 6493536, 45323816, 316352792, 2208090536];
        assert_eq!(&c[..], &expect[..]);
    }

    #[test]
    fn literal_window_counts() {
        let p = Presentation::surface(2).unwrap();
        let a = Automaton::literal(&p, false);
        assert_eq!(a.state_count(), 1 + 8 + 56 + 392 + 2744);
        let c = a.sphere_counts(4);
        assert_eq!(c[4], 2744);
    }

    #[test]
    fn periodic_toy_digraph() {
        let (rec, conn, period) = analyze_digraph(2, &[(0, 1), (1, 0)]);
        assert_eq!(rec, vec![true, true]);
        assert!(conn);
        assert_eq!(period, 2);
        let (_, _, period) = analyze_digraph(2, &[(0, 1), (1, 0), (0, 0)]);
        assert_eq!(period, 1);
    }

    #[test]
    fn segment_vertices() {
        let p = Presentation::surface(2).unwrap();
        let a = Automaton::build(&p);
        let x = p.parse_element("a1 b1").unwrap();
        let seg = a.geodesic(&p.identity(), &x).unwrap();
        let shown: Vec<String> = seg.vertices.iter().map(|v| p.format_word(v.word())).collect();
        assert_eq!(shown, ["e", "a1", "a1 b1"]);
        assert_eq!(a.geodesic(&x, &x).unwrap().vertices.len(), 1);
    }
}
