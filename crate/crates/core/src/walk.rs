//! Step distributions, Cayley-ball transition tables, exact n-step
//! probabilities, sampling, and spectral-radius estimation.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

#[allow(unused_imports)]
use num_traits::Float;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::automaton::Automaton;
use crate::error::{Error, Result};
use crate::group::{Generator, GroupElement, Presentation, Word};
use crate::linalg::{self, SymOp};

/// A finitely supported probability on the group.
#[derive(Clone, Debug, PartialEq)]
pub struct StepDistribution {
    support: Vec<(GroupElement, f64)>,
    label: String,
}

impl StepDistribution {
    /// Uniform on the generators and their inverses.
    pub fn srw(p: &Presentation) -> Self {
        let q = 1.0 / p.alphabet_size() as f64;
        let support = p.generators().map(|x| (p.element(&[x]), q)).collect();
        StepDistribution { support, label: String::from("srw") }
    }

    /// Stays put with probability `stay`, otherwise a uniform generator step.
    pub fn lazy(p: &Presentation, stay: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&stay) {
            return Err(Error::Validation { property: "normalization", detail: format!("stay probability {stay}") });
        }
        let q = (1.0 - stay) / p.alphabet_size() as f64;
        let mut support: Vec<(GroupElement, f64)> = Vec::new();
        if stay > 0.0 {
            support.push((p.identity(), stay));
        }
        support.extend(p.generators().map(|x| (p.element(&[x]), q)));
        Ok(StepDistribution { support, label: format!("lazy:{stay}") })
    }

    /// Explicit table; words are canonicalised and repeated entries merged.
    /// Entries are not validated here (see [`StepDistribution::validate`]).
    pub fn from_table(p: &Presentation, entries: &[(Word, f64)]) -> Self {
        let mut merged: BTreeMap<GroupElement, f64> = BTreeMap::new();
        for (w, q) in entries {
            *merged.entry(p.element(w)).or_insert(0.0) += q;
        }
        let support: Vec<(GroupElement, f64)> = merged.into_iter().collect();
        let label = support
            .iter()
            .map(|(x, q)| format!("{}={q}", p.format_word(x.word())))
            .collect::<Vec<_>>()
            .join(",");
        StepDistribution { support, label: format!("table:{label}") }
    }

    /// Parses `srw`, `lazy:P` or `table:WORD=P,WORD=P,...`.
    pub fn parse(p: &Presentation, spec: &str) -> Result<Self> {
        let spec = spec.trim();
        if spec == "srw" {
            return Ok(Self::srw(p));
        }
        if let Some(v) = spec.strip_prefix("lazy:") {
            let stay: f64 = v.trim().parse().map_err(|_| Error::Domain(format!("bad stay probability `{v}`")))?;
            return Self::lazy(p, stay);
        }
        if let Some(t) = spec.strip_prefix("table:") {
            let mut entries = Vec::new();
            for item in t.split(',').filter(|s| !s.trim().is_empty()) {
                let (w, q) = item.split_once('=').ok_or_else(|| Error::Domain(format!("bad table entry `{item}`")))?;
                let q: f64 = q.trim().parse().map_err(|_| Error::Domain(format!("bad probability `{q}`")))?;
                entries.push((p.parse_word(w)?, q));
            }
            return Ok(Self::from_table(p, &entries));
        }
        Err(Error::Domain(format!("unknown step distribution `{spec}`")))
    }

    pub fn support(&self) -> &[(GroupElement, f64)] {
        &self.support
    }

    pub fn signature(&self) -> &str {
        &self.label
    }

    /// Largest word length in the support (C_0).
    pub fn jump_bound(&self) -> usize {
        self.support.iter().map(|(x, _)| x.len()).max().unwrap_or(0)
    }

    pub fn prob(&self, x: &GroupElement) -> f64 {
        self.support.iter().find(|(y, _)| y == x).map_or(0.0, |(_, q)| *q)
    }

    pub fn min_prob(&self) -> f64 {
        self.support.iter().filter(|(x, _)| !x.is_identity()).map(|(_, q)| *q).fold(f64::INFINITY, f64::min)
    }

    /// Probability of staying at the current element.
    pub fn stay(&self) -> f64 {
        self.support.iter().find(|(x, _)| x.is_identity()).map_or(0.0, |(_, q)| *q)
    }

    /// Nearest-neighbour law, uniform over generators, with optional holding.
    pub fn is_isotropic_nearest_neighbor(&self, p: &Presentation) -> bool {
        let k = p.alphabet_size();
        let moves: Vec<f64> = self.support.iter().filter(|(x, _)| !x.is_identity()).map(|(_, q)| *q).collect();
        moves.len() == k
            && self.support.iter().all(|(x, _)| x.len() <= 1)
            && moves.iter().all(|q| (q - moves[0]).abs() <= 1e-15)
    }

    pub fn validate(&self, p: &Presentation) -> Result<ValidationReport> {
        if self.support.iter().any(|(x, _)| x.kind() != p.kind()) {
            return Err(Error::PresentationMismatch);
        }
        if let Some((x, q)) = self.support.iter().find(|(_, q)| !(*q > 0.0)) {
            return Err(Error::Validation {
                property: "positivity",
                detail: format!("p({}) = {q}", p.format_word(x.word())),
            });
        }
        let total: f64 = self.support.iter().map(|(_, q)| q).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Validation { property: "normalization", detail: format!("total mass {total}") });
        }
        for (x, q) in &self.support {
            let xi = p.inverse(x)?;
            let qi = self.prob(&xi);
            if (q - qi).abs() > 1e-12 {
                return Err(Error::Validation {
                    property: "symmetry",
                    detail: format!("p({}) = {q} but p({}) = {qi}", p.format_word(x.word()), p.format_word(xi.word())),
                });
            }
        }
        // irreducibility: the support must reach every generator, searching
        // inside a ball of radius max(3, 1 + 2 C_0)
        let c0 = self.jump_bound();
        let cap = 3usize.max(1 + 2 * c0);
        let mut seen: BTreeSet<GroupElement> = BTreeSet::new();
        let mut frontier = vec![p.identity()];
        seen.insert(p.identity());
        while let Some(x) = frontier.pop() {
            for (s, _) in &self.support {
                let y = p.multiply(&x, s)?;
                if y.len() <= cap && seen.insert(y.clone()) {
                    frontier.push(y);
                }
            }
        }
        for g in p.generators() {
            if !seen.contains(&p.element(&[g])) {
                return Err(Error::Validation {
                    property: "irreducibility",
                    detail: format!("generator {} not reached", p.token(g)),
                });
            }
        }
        let ball3 = seen.iter().filter(|x| x.len() <= 3).count();
        Ok(ValidationReport { symmetric: true, normalized: true, irreducible: true, period: self.period(p), reached_in_ball3: ball3 })
    }

    /// Period of the walk. For a symmetric law it is 1 or 2; it is 2 exactly
    /// when some homomorphism to Z/2 sends every support element to 1.
    pub fn period(&self, p: &Presentation) -> u64 {
        if self.support.iter().any(|(x, _)| x.is_identity()) {
            return 1;
        }
        // generator classes: surfaces and free groups abelianise onto
        // Z^{rank}, each inverse pair giving one coordinate
        let k = p.alphabet_size();
        let mut coord = vec![usize::MAX; k];
        let mut next = 0usize;
        for g in p.generators() {
            let gi = p.inverse_letter(g).index();
            if coord[gi] != usize::MAX {
                coord[g.index()] = coord[gi];
            } else {
                coord[g.index()] = next;
                next += 1;
            }
        }
        // rows over GF(2) with an augmented constant-1 column at bit `next`
        let mut rows: Vec<u64> = self
            .support
            .iter()
            .map(|(x, _)| {
                let mut v = 0u64;
                for g in x.word() {
                    v ^= 1 << coord[g.index()];
                }
                v | (1 << next)
            })
            .collect();
        let mut rank_row = 0usize;
        for c in 0..next {
            if let Some(piv) = (rank_row..rows.len()).find(|&i| rows[i] >> c & 1 == 1) {
                rows.swap(rank_row, piv);
                for i in 0..rows.len() {
                    if i != rank_row && rows[i] >> c & 1 == 1 {
                        rows[i] ^= rows[rank_row];
                    }
                }
                rank_row += 1;
            }
        }
        let inconsistent = rows.iter().any(|&v| v == 1 << next);
        if inconsistent {
            1
        } else {
            2
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValidationReport {
    pub symmetric: bool,
    pub normalized: bool,
    pub irreducible: bool,
    pub period: u64,
    pub reached_in_ball3: usize,
}

#[derive(Clone, Debug, PartialEq)]
enum Layout {
    /// Exact enumeration: canonical words packed most-significant-letter
    /// first, `bits` per letter.
    Exact { words: Vec<u64>, bits: u32 },
    /// Spheres lumped into single states (free groups, isotropic laws).
    Radial { sizes: Vec<f64> },
}

/// How [`BallTable::build`] enumerates the ball.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum BallMode {
    Exact,
    Radial,
    /// Radial when the law allows it, exact otherwise.
    Auto,
}

/// Indexed ball B(1, M) with the restricted transition structure.
#[derive(Clone, Debug)]
pub struct BallTable {
    presentation: Presentation,
    step: StepDistribution,
    radius: usize,
    offsets: Vec<usize>,
    layout: Layout,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<u16>,
    probs: Vec<f64>,
}

/// Default state budget for exact balls.
pub const DEFAULT_STATE_BUDGET: u64 = 20_000_000;

fn bits_per_letter(k: usize) -> u32 {
    let mut b = 1;
    while (1usize << b) < k {
        b += 1;
    }
    b
}

struct ProbTable {
    probs: Vec<f64>,
    ids: BTreeMap<u64, u16>,
}

impl ProbTable {
    fn id(&mut self, q: f64) -> Result<u16> {
        if let Some(&i) = self.ids.get(&q.to_bits()) {
            return Ok(i);
        }
        if self.probs.len() >= u16::MAX as usize {
            return Err(Error::Budget { attempted: self.probs.len() as u64 + 1, budget: u16::MAX as u64 });
        }
        let i = self.probs.len() as u16;
        self.probs.push(q);
        self.ids.insert(q.to_bits(), i);
        Ok(i)
    }
}

impl BallTable {
    pub fn build(p: &Presentation, sd: &StepDistribution, radius: usize, mode: BallMode) -> Result<BallTable> {
        Self::build_with_budget(p, sd, radius, mode, DEFAULT_STATE_BUDGET)
    }

    pub fn build_with_budget(
        p: &Presentation,
        sd: &StepDistribution,
        radius: usize,
        mode: BallMode,
        budget: u64,
    ) -> Result<BallTable> {
        let radial_ok = !p.is_surface() && sd.is_isotropic_nearest_neighbor(p);
        match mode {
            BallMode::Radial if !radial_ok => Err(Error::NotApplicable(String::from(
                "radial lumping needs a free group and a uniform nearest-neighbour law",
            ))),
            BallMode::Radial => Self::build_radial(p, sd, radius),
            BallMode::Auto if radial_ok => Self::build_radial(p, sd, radius),
            _ => Self::build_exact(p, sd, radius, budget),
        }
    }

    fn build_radial(p: &Presentation, sd: &StepDistribution, radius: usize) -> Result<BallTable> {
        let k = p.alphabet_size() as f64;
        let stay = sd.stay();
        let q = 1.0 - stay;
        let mut sizes = Vec::with_capacity(radius + 1);
        let mut table = ProbTable { probs: Vec::new(), ids: BTreeMap::new() };
        let mut row_ptr = vec![0usize];
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        for d in 0..=radius {
            sizes.push(if d == 0 { 1.0 } else { k * (k - 1.0).powi(d as i32 - 1) });
            let mut entries: Vec<(u32, f64)> = Vec::new();
            if d > 0 {
                entries.push(((d - 1) as u32, q / k));
            }
            if stay > 0.0 {
                entries.push((d as u32, stay));
            }
            if d < radius {
                entries.push(((d + 1) as u32, if d == 0 { q } else { q * (k - 1.0) / k }));
            }
            for (c, v) in entries {
                cols.push(c);
                vals.push(table.id(v)?);
            }
            row_ptr.push(cols.len());
        }
        Ok(BallTable {
            presentation: p.clone(),
            step: sd.clone(),
            radius,
            offsets: (0..=radius + 1).collect(),
            layout: Layout::Radial { sizes },
            row_ptr,
            cols,
            vals,
            probs: table.probs,
        })
    }

    fn build_exact(p: &Presentation, sd: &StepDistribution, radius: usize, budget: u64) -> Result<BallTable> {
        let aut = Automaton::build(p);
        let counts = aut.sphere_counts(radius);
        let total: u128 = counts.iter().sum();
        if total > budget as u128 {
            return Err(Error::Budget { attempted: total.min(u64::MAX as u128) as u64, budget });
        }
        let k = p.alphabet_size();
        let bits = bits_per_letter(k);
        if bits as usize * radius > 64 {
            return Err(Error::Budget { attempted: (bits as usize * radius) as u64, budget: 64 });
        }
        let n = total as usize;
        if n >= u32::MAX as usize {
            return Err(Error::Budget { attempted: n as u64, budget: u32::MAX as u64 - 1 });
        }
        // rank of each letter among the letters allowed from a state
        let ns = aut.state_count();
        let mut rank = vec![u8::MAX; ns * k];
        for s in 0..ns {
            let mut r = 0u8;
            for x in 0..k {
                if aut.transition(s as u32, Generator(x as u8)).is_some() {
                    rank[s * k + x] = r;
                    r += 1;
                }
            }
        }
        let mut words: Vec<u64> = Vec::with_capacity(n);
        let mut state: Vec<u16> = Vec::with_capacity(n);
        let mut parent: Vec<u32> = Vec::with_capacity(n);
        let mut first_child: Vec<u32> = vec![u32::MAX; n];
        let mut offsets = vec![0usize, 1];
        words.push(0);
        state.push(0);
        parent.push(u32::MAX);
        for _m in 0..radius {
            let (lo, hi) = (offsets[offsets.len() - 2], offsets[offsets.len() - 1]);
            for i in lo..hi {
                first_child[i] = words.len() as u32;
                let s = state[i] as u32;
                for x in 0..k {
                    if let Some(t) = aut.transition(s, Generator(x as u8)) {
                        words.push(words[i] << bits | x as u64);
                        state.push(t as u16);
                        parent.push(i as u32);
                    }
                }
            }
            offsets.push(words.len());
        }
        debug_assert_eq!(words.len(), n);
        let mut table = ProbTable { probs: Vec::new(), ids: BTreeMap::new() };
        let support: Vec<(Word, f64)> = sd.support().iter().map(|(x, q)| (x.word().to_vec(), *q)).collect();
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0usize);
        let mut cols: Vec<u32> = Vec::with_capacity(n * support.len());
        let mut vals: Vec<u16> = Vec::with_capacity(n * support.len());
        let mut entries: Vec<(u32, f64)> = Vec::with_capacity(support.len());
        let mut buf: Word = Vec::new();
        let inv = p.inverse_table();
        let mask = (1u64 << bits) - 1;
        let mut m = 0usize;
        for i in 0..n {
            while i >= offsets[m + 1] {
                m += 1;
            }
            entries.clear();
            for (s, q) in &support {
                let target: Option<u32> = if s.is_empty() {
                    Some(i as u32)
                } else if s.len() == 1 {
                    let x = s[0].0;
                    if m > 0 && inv[(words[i] & mask) as usize] == x {
                        Some(parent[i])
                    } else if rank[state[i] as usize * k + x as usize] != u8::MAX {
                        if m == radius {
                            None
                        } else {
                            Some(first_child[i] + rank[state[i] as usize * k + x as usize] as u32)
                        }
                    } else {
                        unpack_into(words[i], m, bits, &mut buf);
                        buf.push(s[0]);
                        locate(p, &words, &offsets, bits, radius, &buf)
                    }
                } else {
                    unpack_into(words[i], m, bits, &mut buf);
                    buf.extend_from_slice(s);
                    locate(p, &words, &offsets, bits, radius, &buf)
                };
                if let Some(j) = target {
                    match entries.iter_mut().find(|e| e.0 == j) {
                        Some(e) => e.1 += q,
                        None => entries.push((j, *q)),
                    }
                }
            }
            entries.sort_unstable_by_key(|e| e.0);
            for &(j, q) in entries.iter() {
                cols.push(j);
                vals.push(table.id(q)?);
            }
            row_ptr.push(cols.len());
        }
        Ok(BallTable {
            presentation: p.clone(),
            step: sd.clone(),
            radius,
            offsets,
            layout: Layout::Exact { words, bits },
            row_ptr,
            cols,
            vals,
            probs: table.probs,
        })
    }

    /// Reassembles a table from its serialized parts (see the cache format
    /// in the companion crate). Validates shapes only.
    pub fn from_parts(
        p: &Presentation,
        sd: &StepDistribution,
        radius: usize,
        words: Vec<Word>,
        row_ptr: Vec<usize>,
        entries: Vec<(u32, f64)>,
    ) -> Result<BallTable> {
        let n = words.len();
        if row_ptr.len() != n + 1 || *row_ptr.last().unwrap_or(&0) != entries.len() {
            return Err(Error::Domain(String::from("inconsistent sparse row structure")));
        }
        let bits = bits_per_letter(p.alphabet_size());
        let mut offsets = vec![0usize];
        let mut packed = Vec::with_capacity(n);
        for m in 0..=radius {
            packed.extend(words.iter().skip(*offsets.last().unwrap()).take_while(|w| w.len() == m).map(|w| pack(w, bits)));
            offsets.push(packed.len());
        }
        if packed.len() != n {
            return Err(Error::Domain(String::from("element words not sorted by length")));
        }
        let mut table = ProbTable { probs: Vec::new(), ids: BTreeMap::new() };
        let mut cols = Vec::with_capacity(entries.len());
        let mut vals = Vec::with_capacity(entries.len());
        for (c, q) in entries {
            if c as usize >= n {
                return Err(Error::Domain(format!("column {c} out of range")));
            }
            cols.push(c);
            vals.push(table.id(q)?);
        }
        Ok(BallTable {
            presentation: p.clone(),
            step: sd.clone(),
            radius,
            offsets,
            layout: Layout::Exact { words: packed, bits },
            row_ptr,
            cols,
            vals,
            probs: table.probs,
        })
    }

    pub fn presentation(&self) -> &Presentation {
        &self.presentation
    }
    pub fn step(&self) -> &StepDistribution {
        &self.step
    }
    pub fn radius(&self) -> usize {
        self.radius
    }
    /// Number of rows (elements, or spheres for a radial table).
    pub fn len(&self) -> usize {
        self.row_ptr.len() - 1
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
    pub fn is_radial(&self) -> bool {
        matches!(self.layout, Layout::Radial { .. })
    }
    pub fn nnz(&self) -> usize {
        self.cols.len()
    }
    /// Number of group elements in the ball.
    pub fn element_count(&self) -> f64 {
        match &self.layout {
            Layout::Exact { words, .. } => words.len() as f64,
            Layout::Radial { sizes } => sizes.iter().sum(),
        }
    }
    /// Row index range of the sphere of radius `m`.
    pub fn sphere_range(&self, m: usize) -> Range<usize> {
        self.offsets[m]..self.offsets[m + 1]
    }
    /// Number of rows in B(1, m) (rows are sorted by length).
    pub fn prefix_len(&self, m: usize) -> usize {
        self.offsets[m.min(self.radius) + 1]
    }
    pub fn sphere_of(&self, i: usize) -> usize {
        self.offsets.partition_point(|&o| o <= i) - 1
    }
    /// Number of group elements represented by row `i`.
    pub fn weight(&self, i: usize) -> f64 {
        match &self.layout {
            Layout::Exact { .. } => 1.0,
            Layout::Radial { sizes } => sizes[i],
        }
    }
    /// Representative element of row `i` (`a1^d` for radial tables).
    pub fn element(&self, i: usize) -> GroupElement {
        match &self.layout {
            Layout::Exact { words, bits } => {
                let mut w = Vec::new();
                unpack_into(words[i], self.sphere_of(i), *bits, &mut w);
                self.presentation.element_unchecked(w)
            }
            Layout::Radial { .. } => self.presentation.element_unchecked(vec![Generator(0); i]),
        }
    }
    pub fn index_of(&self, x: &GroupElement) -> Option<usize> {
        if x.kind() != self.presentation.kind() || x.len() > self.radius {
            return None;
        }
        match &self.layout {
            Layout::Radial { .. } => Some(x.len()),
            Layout::Exact { words, bits } => {
                let key = pack(x.word(), *bits);
                let r = self.sphere_range(x.len());
                words[r.clone()].binary_search(&key).ok().map(|j| r.start + j)
            }
        }
    }
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().zip(&self.vals[r]).map(|(&c, &v)| (c as usize, self.probs[v as usize]))
    }
    pub fn row_sum(&self, i: usize) -> f64 {
        self.row(i).map(|(_, q)| q).sum()
    }

    /// y = P x restricted to the first `n` rows/columns.
    pub fn apply_prefix(&self, x: &[f64], y: &mut [f64], n: usize) {
        for i in 0..n {
            let mut acc = 0.0;
            for e in self.row_ptr[i]..self.row_ptr[i + 1] {
                let c = self.cols[e] as usize;
                if c < n {
                    acc += self.probs[self.vals[e] as usize] * x[c];
                }
            }
            y[i] = acc;
        }
    }

    /// y = P x restricted to the rows/columns where `mask` is set.
    pub fn apply_masked(&self, x: &[f64], y: &mut [f64], mask: &[bool]) {
        for i in 0..mask.len() {
            if !mask[i] {
                y[i] = 0.0;
                continue;
            }
            let mut acc = 0.0;
            for e in self.row_ptr[i]..self.row_ptr[i + 1] {
                let c = self.cols[e] as usize;
                if mask[c] {
                    acc += self.probs[self.vals[e] as usize] * x[c];
                }
            }
            y[i] = acc;
        }
    }

    /// Mass push-forward: y_j = sum_i x_i P_ij (the transpose action).
    pub fn push_forward(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..self.len() {
            if x[i] == 0.0 {
                continue;
            }
            for e in self.row_ptr[i]..self.row_ptr[i + 1] {
                y[self.cols[e] as usize] += x[i] * self.probs[self.vals[e] as usize];
            }
        }
    }

    /// Symmetrised restricted operator a·I + b·W^{1/2} P W^{-1/2} on the
    /// first `n` rows.
    pub fn sym_op(&self, n: usize, a: f64, b: f64) -> BallOp<'_> {
        let sqrt_w = match &self.layout {
            Layout::Radial { sizes } => Some(sizes[..n].iter().map(|s| s.sqrt()).collect()),
            Layout::Exact { .. } => None,
        };
        BallOp { table: self, n, mask: None, sqrt_w, a, b, scratch: core::cell::RefCell::new((vec![0.0; n], vec![0.0; n])) }
    }

    /// As [`BallTable::sym_op`] but on the rows selected by `mask`.
    pub fn sym_op_masked<'a>(&'a self, mask: &'a [bool], a: f64, b: f64) -> BallOp<'a> {
        let n = self.len();
        let sqrt_w = match &self.layout {
            Layout::Radial { sizes } => Some(sizes.iter().map(|s| s.sqrt()).collect()),
            Layout::Exact { .. } => None,
        };
        BallOp { table: self, n, mask: Some(mask), sqrt_w, a, b, scratch: core::cell::RefCell::new((vec![0.0; n], vec![0.0; n])) }
    }

    pub(crate) fn sqrt_weights(&self, n: usize) -> Option<Vec<f64>> {
        match &self.layout {
            Layout::Radial { sizes } => Some(sizes[..n].iter().map(|s| s.sqrt()).collect()),
            Layout::Exact { .. } => None,
        }
    }

    /// Canonical words of all rows (exact tables only).
    pub fn words(&self) -> Option<Vec<Word>> {
        match &self.layout {
            Layout::Exact { .. } => Some((0..self.len()).map(|i| self.element(i).into_word()).collect()),
            Layout::Radial { .. } => None,
        }
    }

    /// Row pointer and (column, probability) pairs.
    pub fn csr(&self) -> (&[usize], Vec<(u32, f64)>) {
        (&self.row_ptr, self.cols.iter().zip(&self.vals).map(|(&c, &v)| (c, self.probs[v as usize])).collect())
    }
}

fn pack(w: &[Generator], bits: u32) -> u64 {
    w.iter().fold(0u64, |acc, x| acc << bits | x.0 as u64)
}

fn unpack_into(code: u64, len: usize, bits: u32, out: &mut Word) {
    out.clear();
    let mask = (1u64 << bits) - 1;
    for j in (0..len).rev() {
        out.push(Generator((code >> (bits as usize * j) & mask) as u8));
    }
}

fn locate(p: &Presentation, words: &[u64], offsets: &[usize], bits: u32, radius: usize, w: &[Generator]) -> Option<u32> {
    let nf = p.normal_form(w);
    if nf.len() > radius {
        return None;
    }
    let key = pack(&nf, bits);
    let (lo, hi) = (offsets[nf.len()], offsets[nf.len() + 1]);
    words[lo..hi].binary_search(&key).ok().map(|j| (lo + j) as u32)
}

/// Symmetric view of a ball operator for the Krylov solvers.
pub struct BallOp<'a> {
    table: &'a BallTable,
    n: usize,
    mask: Option<&'a [bool]>,
    sqrt_w: Option<Vec<f64>>,
    a: f64,
    b: f64,
    scratch: core::cell::RefCell<(Vec<f64>, Vec<f64>)>,
}

impl SymOp for BallOp<'_> {
    fn dim(&self) -> usize {
        self.n
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let mut guard = self.scratch.borrow_mut();
        let (xs, ys) = &mut *guard;
        match &self.sqrt_w {
            Some(sw) => {
                for i in 0..self.n {
                    xs[i] = x[i] / sw[i];
                }
            }
            None => xs.copy_from_slice(x),
        }
        match self.mask {
            Some(m) => self.table.apply_masked(xs, ys, m),
            None => self.table.apply_prefix(xs, ys, self.n),
        }
        for i in 0..self.n {
            let px = match &self.sqrt_w {
                Some(sw) => ys[i] * sw[i],
                None => ys[i],
            };
            let inside = self.mask.map_or(true, |m| m[i]);
            y[i] = if inside { self.a * x[i] + self.b * px } else { x[i] };
        }
    }
}

/// Probability vector over the rows of a ball.
#[derive(Clone, Debug, PartialEq)]
pub struct DistributionVector {
    pub values: Vec<f64>,
}

impl DistributionVector {
    pub fn point_mass(bt: &BallTable, i: usize) -> Self {
        let mut values = vec![0.0; bt.len()];
        values[i] = 1.0;
        DistributionVector { values }
    }
    pub fn mass(&self) -> f64 {
        self.values.iter().sum()
    }
    pub fn step(&self, bt: &BallTable) -> Self {
        let mut out = vec![0.0; self.values.len()];
        bt.push_forward(&self.values, &mut out);
        DistributionVector { values: out }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransitionProbability {
    pub value: f64,
    /// Bound on accumulated floating-point error (n · |B| · eps scale).
    pub error_bound: f64,
}

/// Smallest radius for which no n-step path from 1 to `target` leaves the ball.
///
/// A path reaching distance D after t steps needs t·C_0 ≥ D and
/// (n − t)·C_0 ≥ D − |target| to come back, so 2D ≤ n·C_0 + |target|.
pub fn sufficient_radius(n: usize, c0: usize, target_len: usize) -> usize {
    (n * c0 + target_len + 1) / 2
}

pub fn exact_pn(bt: &BallTable, n: usize, target: &GroupElement) -> Result<TransitionProbability> {
    let needed = sufficient_radius(n, bt.step().jump_bound(), target.len());
    if bt.radius() < needed {
        return Err(Error::RadiusTooSmall { radius: bt.radius(), needed });
    }
    let j = bt.index_of(target).ok_or_else(|| Error::Coverage(String::from("target outside the ball")))?;
    let mut v = DistributionVector::point_mass(bt, 0);
    for _ in 0..n {
        v = v.step(bt);
    }
    let value = v.values[j] / bt.weight(j);
    let error_bound = n as f64 * bt.len() as f64 * f64::EPSILON * value.max(f64::MIN_POSITIVE);
    Ok(TransitionProbability { value, error_bound })
}

/// p^k(1,1) for k = 0..=n_max from one propagation; returns the values and
/// the leaked mass at the last step (zero when the radius suffices).
pub fn return_probabilities(bt: &BallTable, n_max: usize) -> Result<(Vec<f64>, f64)> {
    let needed = sufficient_radius(n_max, bt.step().jump_bound(), 0);
    if bt.radius() < needed {
        return Err(Error::RadiusTooSmall { radius: bt.radius(), needed });
    }
    let mut v = DistributionVector::point_mass(bt, 0);
    let mut out = vec![1.0];
    for _ in 0..n_max {
        v = v.step(bt);
        out.push(v.values[0]);
    }
    Ok((out, 1.0 - v.mass()))
}

/// Trajectories X_0 = 1, X_k = X_{k-1}·ξ_k; trajectory t uses its own
/// ChaCha stream, so results do not depend on evaluation order.
pub fn sample_paths(
    p: &Presentation,
    sd: &StepDistribution,
    n: usize,
    count: usize,
    seed: u64,
) -> Vec<Vec<GroupElement>> {
    (0..count).map(|t| sample_path(p, sd, n, seed, t as u64)).collect()
}

pub fn sample_path(p: &Presentation, sd: &StepDistribution, n: usize, seed: u64, stream: u64) -> Vec<GroupElement> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let cum: Vec<f64> = sd
        .support()
        .iter()
        .scan(0.0, |acc, (_, q)| {
            *acc += q;
            Some(*acc)
        })
        .collect();
    let mut path = Vec::with_capacity(n + 1);
    let mut cur: Word = Vec::new();
    path.push(p.identity());
    for _ in 0..n {
        let u = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64 * cum.last().copied().unwrap_or(1.0);
        let idx = cum.partition_point(|&c| c <= u).min(cum.len() - 1);
        cur.extend_from_slice(sd.support()[idx].0.word());
        cur = p.normal_form(&cur);
        path.push(p.element_unchecked(cur.clone()));
    }
    path
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectralEstimate {
    /// (M, λ_M): top eigenvalue of the operator restricted to B(1, M).
    pub lambda: Vec<(usize, f64)>,
    /// (2n, p^{2n}(1,1)^{1/2n}) lower bounds.
    pub return_bounds: Vec<(usize, f64)>,
    pub certified_lower: f64,
    /// Heuristic bracket from the two finite-size models.
    pub bracket: (f64, f64),
    pub rho_hat: f64,
    pub r_hat: f64,
    pub algebraic: Option<f64>,
    pub cosine: Option<f64>,
    pub aitken: Option<f64>,
    pub heuristic: bool,
}

impl SpectralEstimate {
    /// Bracket for R = 1/ρ.
    pub fn r_bracket(&self) -> (f64, f64) {
        (1.0 / self.bracket.1, 1.0 / self.bracket.0)
    }
}

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> Option<f64> {
    let (mut flo, fhi) = (f(lo), f(hi));
    if !(flo * fhi <= 0.0) {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm * flo <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
            flo = fm;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Three-point fit of λ_M = ρ − c/(M + a)^2; returns ρ.
pub fn extrapolate_algebraic(pts: &[(usize, f64)]) -> Option<f64> {
    let [(m1, l1), (m2, l2), (m3, l3)] = pts[pts.len().checked_sub(3)?..] else { return None };
    let (m1, m2, m3) = (m1 as f64, m2 as f64, m3 as f64);
    let q = (l3 - l2) / (l2 - l1);
    if !(q > 0.0 && q < 1.0) {
        return None;
    }
    let h = |a: f64| {
        let u = |m: f64| 1.0 / ((m + a) * (m + a));
        (u(m2) - u(m3)) / (u(m1) - u(m2)) - q
    };
    let a = bisect(h, -m1 + 0.25, 1e4)?;
    let u = |m: f64| 1.0 / ((m + a) * (m + a));
    let c = (l3 - l2) / (u(m2) - u(m3));
    Some(l3 + c * u(m3))
}

/// Two-point fit of λ_M = ρ·cos(π/(M + a)); returns ρ.
pub fn extrapolate_cosine(pts: &[(usize, f64)]) -> Option<f64> {
    let [(m1, l1), (m2, l2)] = pts[pts.len().checked_sub(2)?..] else { return None };
    let (m1, m2) = (m1 as f64, m2 as f64);
    let target = l2 / l1;
    if !(target > 1.0) {
        return None;
    }
    let pi = core::f64::consts::PI;
    let h = |a: f64| (pi / (m2 + a)).cos() / (pi / (m1 + a)).cos() - target;
    let a = bisect(h, -m1 + 2.0 + 1e-9, 1e4)?;
    Some(l2 / (pi / (m2 + a)).cos())
}

/// Aitken Δ² on the last three terms.
pub fn aitken(pts: &[(usize, f64)]) -> Option<f64> {
    let [(_, l1), (_, l2), (_, l3)] = pts[pts.len().checked_sub(3)?..] else { return None };
    let d2 = (l3 - l2) - (l2 - l1);
    if d2.abs() < 1e-300 {
        return None;
    }
    Some(l3 - (l3 - l2) * (l3 - l2) / d2)
}

/// Top eigenvalues λ_M of the operator restricted to B(1, M), M = 2..=radius.
pub fn restricted_top_eigenvalues(bt: &BallTable, m_min: usize) -> Result<Vec<(usize, f64)>> {
    let mut out = Vec::new();
    for m in m_min..=bt.radius() {
        let n = bt.prefix_len(m);
        let op = bt.sym_op(n, 0.0, 1.0);
        let e = linalg::lanczos_extremes(&op, 1e-13, 2000)?;
        out.push((m, e.max));
    }
    Ok(out)
}

/// Estimates ρ from the restricted top eigenvalues on `bt` (M = 2..radius).
pub fn spectral_radius_from_table(bt: &BallTable) -> Result<SpectralEstimate> {
    let lambda = restricted_top_eigenvalues(bt, 2)?;
    let (ret, _) = return_probabilities(bt, 2 * bt.radius() / bt.step().jump_bound().max(1))?;
    let return_bounds: Vec<(usize, f64)> = ret
        .iter()
        .enumerate()
        .skip(2)
        .step_by(2)
        .filter(|(_, &v)| v > 0.0)
        .map(|(n, &v)| (n, v.powf(1.0 / n as f64)))
        .collect();
    let lam_max = lambda.last().map(|x| x.1).unwrap_or(0.0);
    let best_return = return_bounds.iter().map(|x| x.1).fold(0.0, f64::max);
    let certified_lower = lam_max.max(best_return);
    let algebraic = extrapolate_algebraic(&lambda);
    let cosine = extrapolate_cosine(&lambda);
    let aitken = aitken(&lambda);
    let (lo, hi) = match (algebraic, cosine) {
        (Some(a), Some(c)) => (a.min(c).max(certified_lower), a.max(c).max(certified_lower)),
        _ => (certified_lower, aitken.unwrap_or(certified_lower).max(certified_lower)),
    };
    let rho_hat = 0.5 * (lo + hi);
    Ok(SpectralEstimate {
        lambda,
        return_bounds,
        certified_lower,
        bracket: (lo, hi),
        rho_hat,
        r_hat: 1.0 / rho_hat,
        algebraic,
        cosine,
        aitken,
        heuristic: true,
    })
}

pub fn spectral_radius_estimate(
    p: &Presentation,
    sd: &StepDistribution,
    m_max: usize,
    mode: BallMode,
) -> Result<(SpectralEstimate, BallTable)> {
    if p.kind() != sd.support().first().map_or(p.kind(), |x| x.0.kind()) {
        return Err(Error::PresentationMismatch);
    }
    sd.validate(p)?;
    let bt = BallTable::build(p, sd, m_max, mode)?;
    Ok((spectral_radius_from_table(&bt)?, bt))
}

/// Word-length parity class, used for bipartite checks.
pub fn parity(x: &GroupElement) -> usize {
    x.len() % 2
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ball_sizes() {
        let p = Presentation::surface(2).unwrap();
        let sd = StepDistribution::srw(&p);
        let bt = BallTable::build(&p, &sd, 2, BallMode::Exact).unwrap();
        assert_eq!(bt.len(), 65);
        let f = Presentation::free(2).unwrap();
        let sdf = StepDistribution::srw(&f);
        let bt = BallTable::build(&f, &sdf, 3, BallMode::Exact).unwrap();
        assert_eq!(bt.len(), 53);
        let rad = BallTable::build(&f, &sdf, 3, BallMode::Radial).unwrap();
        assert_eq!(rad.element_count(), 53.0);
    }

    #[test]
    fn rows_are_substochastic() {
        let p = Presentation::surface(2).unwrap();
        let sd = StepDistribution::srw(&p);
        let bt = BallTable::build(&p, &sd, 3, BallMode::Exact).unwrap();
        for i in 0..bt.len() {
            let s = bt.row_sum(i);
            if bt.sphere_of(i) < 3 {
                assert!((s - 1.0).abs() < 1e-15);
            } else {
                assert!(s < 1.0);
            }
        }
        // symmetric transition matrix
        for i in 0..bt.len() {
            for (j, q) in bt.row(i) {
                let back: f64 = bt.row(j).filter(|e| e.0 == i).map(|e| e.1).sum();
                assert_eq!(q, back);
            }
        }
    }

    #[test]
    fn validation() {
        let p = Presentation::surface(2).unwrap();
        let rep = StepDistribution::srw(&p).validate(&p).unwrap();
        assert_eq!(rep.period, 2);
        let lazy = StepDistribution::lazy(&p, 0.5).unwrap();
        assert_eq!(lazy.validate(&p).unwrap().period, 1);
        let a = p.parse_word("a1").unwrap();
        let ai = p.parse_word("A1").unwrap();
        let mut entries = vec![(a, 0.3), (ai, 0.1)];
        for t in ["b1", "B1", "a2", "A2", "b2", "B2"] {
            entries.push((p.parse_word(t).unwrap(), 0.1));
        }
        let bad = StepDistribution::from_table(&p, &entries);
        match bad.validate(&p) {
            Err(Error::Validation { property, .. }) => assert_eq!(property, "symmetry"),
            other => panic!("{other:?}"),
        }
        // generators of an index-2 subgroup only
        let ev = StepDistribution::from_table(
            &p,
            &[(p.parse_word("a1 a1").unwrap(), 0.5), (p.parse_word("A1 A1").unwrap(), 0.5)],
        );
        assert!(matches!(ev.validate(&p), Err(Error::Validation { property: "irreducibility", .. })));
    }

    #[test]
    fn small_transition_probabilities() {
        let p = Presentation::surface(2).unwrap();
        let sd = StepDistribution::srw(&p);
        let bt = BallTable::build(&p, &sd, 4, BallMode::Exact).unwrap();
        let a = p.parse_element("a1").unwrap();
        assert!((exact_pn(&bt, 1, &a).unwrap().value - 0.125).abs() < 1e-15);
        let id = p.identity();
        assert!((exact_pn(&bt, 2, &id).unwrap().value - 0.125).abs() < 1e-15);
        assert_eq!(exact_pn(&bt, 3, &id).unwrap().value, 0.0);
        assert!(matches!(exact_pn(&bt, 9, &id), Err(Error::RadiusTooSmall { needed: 5, .. })));
    }

    #[test]
    fn extrapolation_models_on_synthetic_data() {
        let rho = 0.8;
        let pts: Vec<(usize, f64)> = (4..9).map(|m| (m, rho - 0.3 / ((m as f64 + 1.5).powi(2)))).collect();
        assert!((extrapolate_algebraic(&pts).unwrap() - rho).abs() < 1e-10);
        let pi = core::f64::consts::PI;
        let pts: Vec<(usize, f64)> = (4..9).map(|m| (m, rho * (pi / (m as f64 + 2.0)).cos())).collect();
        assert!((extrapolate_cosine(&pts).unwrap() - rho).abs() < 1e-10);
    }

    #[test]
    fn deterministic_sampling() {
        let p = Presentation::surface(2).unwrap();
        let sd = StepDistribution::srw(&p);
        let a = sample_paths(&p, &sd, 10, 5, 7);
        let b = sample_paths(&p, &sd, 10, 5, 7);
        assert_eq!(a, b);
        assert!(sample_paths(&p, &sd, 0, 3, 1).iter().all(|t| t.len() == 1 && t[0].is_identity()));
        for t in &a {
            for w in t.windows(2) {
                assert_eq!(p.word_distance(&w[0], &w[1]).unwrap(), 1);
            }
        }
    }
}
