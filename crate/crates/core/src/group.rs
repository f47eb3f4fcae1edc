//! Surface and free group presentations, words and elements.
//!
//! Letters of a surface group of genus g are indexed in blocks of four,
//! `a_j b_j A_j B_j`, so the relator `a1 b1 A1 B1 a2 b2 A2 B2 ...` is the
//! letter sequence `0, 1, ..., 4g-1`. Capital letters are inverses.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

use crate::error::{Error, Result};

/// A letter of the generating alphabet.
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Generator(pub u8);

impl Generator {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

pub type Word = Vec<Generator>;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GroupKind {
    Surface { genus: u8 },
    Free { rank: u8 },
}

impl fmt::Display for GroupKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupKind::Surface { genus } => write!(f, "surface:{genus}"),
            GroupKind::Free { rank } => write!(f, "free:{rank}"),
        }
    }
}

/// Orientation of a relator run: `R` follows the relator, `L` its inverse.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Orientation {
    R,
    L,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Presentation {
    kind: GroupKind,
    names: Vec<String>,
    inverse: Vec<u8>,
    relator: Word,
    succ_r: Vec<u8>,
    succ_l: Vec<u8>,
}

/// A group element stored by its canonical (automaton-accepted) word.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct GroupElement {
    kind: GroupKind,
    word: Word,
}

impl GroupElement {
    pub fn kind(&self) -> GroupKind {
        self.kind
    }
    pub fn word(&self) -> &[Generator] {
        &self.word
    }
    pub fn len(&self) -> usize {
        self.word.len()
    }
    pub fn is_identity(&self) -> bool {
        self.word.is_empty()
    }
    pub fn into_word(self) -> Word {
        self.word
    }
}

impl PartialOrd for GroupElement {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Shortlex order on canonical words, which is the ball indexing order.
impl Ord for GroupElement {
    fn cmp(&self, other: &Self) -> Ordering {
        self.kind
            .cmp(&other.kind)
            .then(self.word.len().cmp(&other.word.len()))
            .then_with(|| self.word.cmp(&other.word))
    }
}

impl Presentation {
    pub fn surface(genus: u8) -> Result<Self> {
        if genus < 2 || genus > 15 {
            return Err(Error::InvalidPresentation(format!(
                "surface genus must lie in [2, 15], got {genus}"
            )));
        }
        let n = 4 * genus as usize;
        let mut names = Vec::with_capacity(n);
        for j in 1..=genus {
            names.push(format!("a{j}"));
            names.push(format!("b{j}"));
            names.push(format!("A{j}"));
            names.push(format!("B{j}"));
        }
        let inverse: Vec<u8> = (0..n as u8).map(|x| x ^ 2).collect();
        let relator: Word = (0..n as u8).map(Generator).collect();
        let succ_r: Vec<u8> = (0..n).map(|x| ((x + 1) % n) as u8).collect();
        // r^{-1} read as a cyclic word: inv(r_{n-1}), ..., inv(r_0)
        let rinv: Vec<u8> = (0..n).rev().map(|i| inverse[i]).collect();
        let mut succ_l = alloc::vec![0u8; n];
        for i in 0..n {
            succ_l[rinv[i] as usize] = rinv[(i + 1) % n];
        }
        Ok(Presentation { kind: GroupKind::Surface { genus }, names, inverse, relator, succ_r, succ_l })
    }

    pub fn free(rank: u8) -> Result<Self> {
        if rank < 2 || rank > 30 {
            return Err(Error::InvalidPresentation(format!(
                "free rank must lie in [2, 30], got {rank}"
            )));
        }
        let mut names = Vec::new();
        let mut inverse = Vec::new();
        let mut j = 0u8;
        while j < rank {
            let block = j / 2 + 1;
            if j + 1 < rank {
                let base = names.len() as u8;
                names.push(format!("a{block}"));
                names.push(format!("b{block}"));
                names.push(format!("A{block}"));
                names.push(format!("B{block}"));
                inverse.extend_from_slice(&[base + 2, base + 3, base, base + 1]);
                j += 2;
            } else {
                let base = names.len() as u8;
                names.push(format!("a{block}"));
                names.push(format!("A{block}"));
                inverse.extend_from_slice(&[base + 1, base]);
                j += 1;
            }
        }
        Ok(Presentation {
            kind: GroupKind::Free { rank },
            names,
            inverse,
            relator: Vec::new(),
            succ_r: Vec::new(),
            succ_l: Vec::new(),
        })
    }

    pub fn from_kind(kind: GroupKind) -> Result<Self> {
        match kind {
            GroupKind::Surface { genus } => Self::surface(genus),
            GroupKind::Free { rank } => Self::free(rank),
        }
    }

    pub fn kind(&self) -> GroupKind {
        self.kind
    }

    pub fn is_surface(&self) -> bool {
        matches!(self.kind, GroupKind::Surface { .. })
    }

    /// Half the relator length (2g), or 0 for free groups.
    pub fn half(&self) -> usize {
        self.relator.len() / 2
    }

    pub fn alphabet_size(&self) -> usize {
        self.names.len()
    }

    pub fn generators(&self) -> impl Iterator<Item = Generator> + '_ {
        (0..self.names.len() as u8).map(Generator)
    }

    pub fn inverse_letter(&self, x: Generator) -> Generator {
        Generator(self.inverse[x.index()])
    }

    pub fn relator(&self) -> &[Generator] {
        &self.relator
    }

    pub fn token(&self, x: Generator) -> &str {
        &self.names[x.index()]
    }

    pub(crate) fn inverse_table(&self) -> &[u8] {
        &self.inverse
    }

    pub(crate) fn successor(&self, o: Orientation) -> &[u8] {
        match o {
            Orientation::R => &self.succ_r,
            Orientation::L => &self.succ_l,
        }
    }

    /// Letter following `x` after a turn of type 2 in orientation `o`:
    /// the next run starts one step further round the neighbouring relator.
    pub(crate) fn turn2(&self, o: Orientation, x: u8) -> u8 {
        let s = self.successor(o);
        s[self.inverse[s[x as usize] as usize] as usize]
    }

    /// Parses whitespace-separated tokens such as `a1 B2`; `e` is the empty word.
    pub fn parse_word(&self, text: &str) -> Result<Word> {
        let mut out = Vec::new();
        for tok in text.split_whitespace() {
            if tok == "e" {
                continue;
            }
            match self.names.iter().position(|n| n == tok) {
                Some(i) => out.push(Generator(i as u8)),
                None => return Err(Error::BadToken(String::from(tok))),
            }
        }
        Ok(out)
    }

    /// Formats a word as tokens; the empty word is written `e`.
    pub fn format_word(&self, w: &[Generator]) -> String {
        if w.is_empty() {
            return String::from("e");
        }
        let mut s = String::new();
        for (i, x) in w.iter().enumerate() {
            if i > 0 {
                s.push(' ');
            }
            s.push_str(&self.names[x.index()]);
        }
        s
    }

    pub fn invert_word(&self, w: &[Generator]) -> Word {
        w.iter().rev().map(|&x| self.inverse_letter(x)).collect()
    }

    pub fn free_reduce(&self, w: &[Generator]) -> Word {
        let mut out: Word = Vec::with_capacity(w.len());
        for &x in w {
            match out.last() {
                Some(&y) if self.inverse[y.index()] == x.0 => {
                    out.pop();
                }
                _ => out.push(x),
            }
        }
        out
    }

    /// Returns a geodesic word for the element represented by `w`.
    ///
    /// Free reduction and replacement of relator pieces longer than 2g are
    /// interleaved with the shortening of "ladders": chains of relator runs
    /// of length 2g and 2g-1 joined by type-2 turns, whose total length drops
    /// by two after a cascade of half-relator swaps.
    pub fn dehn_reduce(&self, w: &[Generator]) -> Word {
        let mut v: Vec<u8> = self.free_reduce(w).iter().map(|x| x.0).collect();
        if self.is_surface() {
            self.geodesic_in_place(&mut v);
        }
        v.into_iter().map(Generator).collect()
    }

    /// Dehn's algorithm for the word problem: only free reductions and
    /// replacements of more than half a relator. Independent of ladders.
    pub fn is_trivial(&self, w: &[Generator]) -> bool {
        let mut v: Vec<u8> = w.iter().map(|x| x.0).collect();
        if !self.is_surface() {
            return self.free_reduce_raw(&mut v).is_empty();
        }
        loop {
            self.free_reduce_raw(&mut v);
            if !self.replace_long_run(&mut v) {
                break;
            }
        }
        v.is_empty()
    }

    /// Canonical accepted word: a geodesic with no inverse-orientation run of
    /// length 2g (such runs are swapped for their complement).
    pub fn normal_form(&self, w: &[Generator]) -> Word {
        let mut v: Vec<u8> = self.free_reduce(w).iter().map(|x| x.0).collect();
        if self.is_surface() {
            self.geodesic_in_place(&mut v);
            let h = self.half();
            let mut guard = 0usize;
            while let Some((pos, _)) = self.first_run(&v, Orientation::L, |len| len == h) {
                self.swap_run(&mut v, pos, h, Orientation::L);
                guard += 1;
                assert!(guard <= 64 * (v.len() + 1) * (v.len() + 1), "normal form did not stabilise");
            }
        }
        v.into_iter().map(Generator).collect()
    }

    pub fn element(&self, w: &[Generator]) -> GroupElement {
        GroupElement { kind: self.kind, word: self.normal_form(w) }
    }

    pub fn parse_element(&self, text: &str) -> Result<GroupElement> {
        Ok(self.element(&self.parse_word(text)?))
    }

    pub fn identity(&self) -> GroupElement {
        GroupElement { kind: self.kind, word: Vec::new() }
    }

    /// Wraps a word already known to be canonical.
    pub(crate) fn element_unchecked(&self, word: Word) -> GroupElement {
        GroupElement { kind: self.kind, word }
    }

    fn check(&self, x: &GroupElement) -> Result<()> {
        if x.kind != self.kind {
            return Err(Error::PresentationMismatch);
        }
        Ok(())
    }

    pub fn multiply(&self, x: &GroupElement, y: &GroupElement) -> Result<GroupElement> {
        self.check(x)?;
        self.check(y)?;
        let mut w = x.word.clone();
        w.extend_from_slice(&y.word);
        Ok(self.element(&w))
    }

    pub fn inverse(&self, x: &GroupElement) -> Result<GroupElement> {
        self.check(x)?;
        Ok(self.element(&self.invert_word(&x.word)))
    }

    /// Word-metric distance |x^{-1} y|.
    pub fn word_distance(&self, x: &GroupElement, y: &GroupElement) -> Result<usize> {
        self.check(x)?;
        self.check(y)?;
        let mut w = self.invert_word(&x.word);
        w.extend_from_slice(&y.word);
        Ok(self.dehn_reduce(&w).len())
    }

    // ---- raw rewriting on letter indices ----

    fn free_reduce_raw<'a>(&self, v: &'a mut Vec<u8>) -> &'a mut Vec<u8> {
        let mut k = 0usize;
        for i in 0..v.len() {
            let x = v[i];
            if k > 0 && self.inverse[v[k - 1] as usize] == x {
                k -= 1;
            } else {
                v[k] = x;
                k += 1;
            }
        }
        v.truncate(k);
        v
    }

    /// First maximal run in orientation `o` whose length satisfies `pred`,
    /// as (start, length).
    fn first_run(&self, v: &[u8], o: Orientation, pred: impl Fn(usize) -> bool) -> Option<(usize, usize)> {
        let s = self.successor(o);
        let mut i = 0usize;
        while i < v.len() {
            let mut j = i + 1;
            while j < v.len() && v[j] == s[v[j - 1] as usize] {
                j += 1;
            }
            if pred(j - i) {
                return Some((i, j - i));
            }
            i = j;
        }
        None
    }

    /// Replaces `v[pos..pos+len]`, a run in orientation `o`, by the inverse
    /// of its complement in the relator cycle.
    fn swap_run(&self, v: &mut Vec<u8>, pos: usize, len: usize, o: Orientation) {
        let n = self.relator.len();
        let s = self.successor(o);
        let mut cycle = Vec::with_capacity(n);
        let mut x = v[pos];
        for _ in 0..n {
            cycle.push(x);
            x = s[x as usize];
        }
        let repl: Vec<u8> = cycle[len..].iter().rev().map(|&c| self.inverse[c as usize]).collect();
        v.splice(pos..pos + len, repl);
    }

    fn replace_long_run(&self, v: &mut Vec<u8>) -> bool {
        let h = self.half();
        let n = self.relator.len();
        let r = self.first_run(v, Orientation::R, |len| len > h);
        let l = self.first_run(v, Orientation::L, |len| len > h);
        let pick = match (r, l) {
            (Some(a), Some(b)) => {
                if a.0 <= b.0 {
                    Some((a, Orientation::R))
                } else {
                    Some((b, Orientation::L))
                }
            }
            (Some(a), None) => Some((a, Orientation::R)),
            (None, Some(b)) => Some((b, Orientation::L)),
            (None, None) => None,
        };
        match pick {
            Some(((pos, len), o)) => {
                self.swap_run(v, pos, len.min(n), o);
                true
            }
            None => false,
        }
    }

    /// Start of the first shortening ladder in orientation `o`, if any.
    fn find_ladder(&self, v: &[u8], o: Orientation) -> Option<usize> {
        let h = self.half();
        let s = self.successor(o);
        if v.is_empty() {
            return None;
        }
        let mut run_start = 0usize;
        let mut rl = 1usize;
        let mut armed = false;
        let mut ladder_start = 0usize;
        for i in 1..v.len() {
            let x = v[i - 1];
            let y = v[i];
            if y == s[x as usize] {
                rl += 1;
            } else if y == self.turn2(o, x) {
                if rl == h && !armed {
                    ladder_start = run_start;
                }
                armed = rl == h || (armed && rl + 1 == h);
                run_start = i;
                rl = 1;
            } else {
                armed = false;
                run_start = i;
                rl = 1;
            }
            if armed && rl == h {
                return Some(ladder_start);
            }
        }
        None
    }

    fn run_len_from(&self, v: &[u8], pos: usize, o: Orientation) -> usize {
        let s = self.successor(o);
        let mut j = pos + 1;
        while j < v.len() && v[j] == s[v[j - 1] as usize] {
            j += 1;
        }
        j - pos
    }

    fn shorten_ladder(&self, v: &mut Vec<u8>, start: usize, o: Orientation) {
        let h = self.half();
        let n = self.relator.len();
        let mut pos = start;
        loop {
            let len = self.run_len_from(v, pos, o);
            if len > h {
                self.swap_run(v, pos, len.min(n), o);
                return;
            }
            assert_eq!(len, h, "ladder cascade broke at position {pos}");
            self.swap_run(v, pos, h, o);
            pos += h - 1;
        }
    }

    fn geodesic_in_place(&self, v: &mut Vec<u8>) {
        loop {
            self.free_reduce_raw(v);
            if self.replace_long_run(v) {
                continue;
            }
            if let Some(p) = self.find_ladder(v, Orientation::R) {
                self.shorten_ladder(v, p, Orientation::R);
                continue;
            }
            if let Some(p) = self.find_ladder(v, Orientation::L) {
                self.shorten_ladder(v, p, Orientation::L);
                continue;
            }
            break;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g2() -> Presentation {
        Presentation::surface(2).unwrap()
    }

    #[test]
    fn alphabet_and_inverses() {
        let p = g2();
        assert_eq!(p.alphabet_size(), 8);
        for x in p.generators() {
            assert_eq!(p.inverse_letter(p.inverse_letter(x)), x);
            assert_ne!(p.inverse_letter(x), x);
        }
        assert_eq!(p.format_word(p.relator()), "a1 b1 A1 B1 a2 b2 A2 B2");
        let f3 = Presentation::free(3).unwrap();
        assert_eq!(f3.alphabet_size(), 6);
        assert_eq!(f3.format_word(&f3.invert_word(&f3.parse_word("a1 b1 a2").unwrap())), "A2 B1 A1");
        assert!(Presentation::surface(1).is_err());
    }

    #[test]
    fn free_reduction_examples() {
        let p = g2();
        let w = p.parse_word("a1 A1").unwrap();
        assert!(p.free_reduce(&w).is_empty());
        let w = p.parse_word("a1 b1 B1 a1").unwrap();
        assert_eq!(p.format_word(&p.free_reduce(&w)), "a1 a1");
    }

    #[test]
    fn dehn_examples() {
        let p = g2();
        assert!(p.dehn_reduce(p.relator()).is_empty());
        let w = p.parse_word("a1 b1 A1 B1 a2").unwrap();
        assert_eq!(p.format_word(&p.dehn_reduce(&w)), "b2 a2 B2");
        assert!(p.is_trivial(p.relator()));
        assert!(p.is_trivial(&p.invert_word(p.relator())));
    }

    #[test]
    fn element_ops() {
        let p = g2();
        let a = p.parse_element("a1").unwrap();
        let b = p.parse_element("b1").unwrap();
        let ab = p.multiply(&a, &b).unwrap();
        assert_eq!(p.format_word(ab.word()), "a1 b1");
        assert_eq!(p.multiply(&ab, &p.identity()).unwrap(), ab);
        assert!(p.multiply(&ab, &p.inverse(&ab).unwrap()).unwrap().is_identity());
        assert_eq!(p.word_distance(&p.identity(), &ab).unwrap(), 2);
        let f = Presentation::free(2).unwrap();
        assert_eq!(f.multiply(&ab, &f.identity()), Err(Error::PresentationMismatch));
    }

    #[test]
    fn bad_tokens() {
        let p = g2();
        assert_eq!(p.parse_word("a1 c3"), Err(Error::BadToken("c3".into())));
        assert!(p.parse_word("e").unwrap().is_empty());
    }
}
