//! Binary caches for ball tables and Green columns.
//!
//! Ball file (little endian):
//!
//! ```text
//! magic   b"HWBALL\0\0"
//! u32     format version
//! u8,u8   group kind (0 surface, 1 free), genus or rank
//! u32     radius
//! u32+..  step signature (length-prefixed UTF-8)
//! u64,u64 rows n, nonzeros nnz
//! words   per row: u8 length, then one u8 per letter
//! u64     row pointer, n + 1 entries
//! nnz x   u32 column, f64 probability
//! [32]    SHA-256 of everything above
//! ```
//!
//! Green file: magic `b"HWGREEN\0"`, version, then r, residual, truncation
//! gap (NaN when absent) as f64, iterations, radius, the domain and source as
//! length-prefixed strings, n and the values, closed by the same digest.
//! Only exact tables are cached; radial tables are cheap to rebuild.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use hyperwalk_core::green::{DomainSpec, GreenTable};
use hyperwalk_core::walk::{BallTable, StepDistribution};
use hyperwalk_core::{GroupKind, Presentation};
use sha2::{Digest, Sha256};

use crate::config::hex;

pub const BALL_MAGIC: &[u8; 8] = b"HWBALL\0\0";
pub const GREEN_MAGIC: &[u8; 8] = b"HWGREEN\0";
pub const BALL_VERSION: u32 = 1;
pub const GREEN_VERSION: u32 = 1;
/// Overrides the cache root given in the configuration.
pub const CACHE_ENV: &str = "HYPERWALK_CACHE";

#[derive(Debug, thiserror::Error)]
pub enum CacheError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("{path}: {msg}")]
    Format { path: String, msg: String },
    #[error(transparent)]
    Core(#[from] hyperwalk_core::Error),
}

/// Cache root: explicit flag, then the environment, then the configuration,
/// then `.hyperwalk-cache`.
pub fn cache_root(flag: Option<&Path>, config: Option<&Path>) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    if let Some(v) = std::env::var_os(CACHE_ENV).filter(|v| !v.is_empty()) {
        return PathBuf::from(v);
    }
    config.map_or_else(|| PathBuf::from(".hyperwalk-cache"), Path::to_path_buf)
}

fn kind_bytes(k: GroupKind) -> [u8; 2] {
    match k {
        GroupKind::Surface { genus } => [0, genus],
        GroupKind::Free { rank } => [1, rank],
    }
}

/// File-name stem identifying (presentation, step law, radius).
pub fn ball_key(p: &Presentation, sd: &StepDistribution, radius: usize) -> String {
    let k = kind_bytes(p.kind());
    let tag = if k[0] == 0 { "surface" } else { "free" };
    let digest = Sha256::digest(sd.signature().as_bytes());
    format!("ball-{tag}{}-{}-M{radius}", k[1], &hex(&digest)[..12])
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.buf.extend_from_slice(s.as_bytes());
    }
    fn finish(mut self) -> Vec<u8> {
        let d = Sha256::digest(&self.buf);
        self.buf.extend_from_slice(&d);
        self.buf
    }
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
    path: &'a str,
}

impl<'a> Reader<'a> {
    fn open(data: &'a [u8], path: &'a str, magic: &[u8; 8]) -> Result<Self, CacheError> {
        let bad = |msg: &str| CacheError::Format { path: path.into(), msg: msg.into() };
        if data.len() < 40 || &data[..8] != magic {
            return Err(bad("bad magic"));
        }
        let (body, digest) = data.split_at(data.len() - 32);
        if Sha256::digest(body).as_slice() != digest {
            return Err(bad("checksum mismatch"));
        }
        Ok(Reader { data: body, pos: 8, path })
    }
    fn take(&mut self, n: usize) -> Result<&'a [u8], CacheError> {
        if self.pos + n > self.data.len() {
            return Err(CacheError::Format { path: self.path.into(), msg: "truncated".into() });
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, CacheError> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32, CacheError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, CacheError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64, CacheError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn str(&mut self) -> Result<String, CacheError> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| CacheError::Format { path: self.path.into(), msg: "invalid UTF-8".into() })
    }
    fn expect(&mut self, what: &str, ok: bool) -> Result<(), CacheError> {
        if ok {
            Ok(())
        } else {
            Err(CacheError::Format { path: self.path.into(), msg: format!("{what} does not match") })
        }
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp)?;
    f.write_all(bytes)?;
    f.sync_all()?;
    fs::rename(tmp, path)
}

pub fn encode_ball(bt: &BallTable) -> Option<Vec<u8>> {
    let words = bt.words()?;
    let (row_ptr, entries) = bt.csr();
    let mut w = Writer { buf: Vec::with_capacity(16 * entries.len() + 8 * words.len()) };
    w.buf.extend_from_slice(BALL_MAGIC);
    w.u32(BALL_VERSION);
    let k = kind_bytes(bt.presentation().kind());
    w.u8(k[0]);
    w.u8(k[1]);
    w.u32(bt.radius() as u32);
    w.str(bt.step().signature());
    w.u64(words.len() as u64);
    w.u64(entries.len() as u64);
    for word in &words {
        w.u8(word.len() as u8);
        w.buf.extend(word.iter().map(|g| g.0));
    }
    for &p in row_ptr {
        w.u64(p as u64);
    }
    for (c, q) in entries {
        w.u32(c);
        w.f64(q);
    }
    Some(w.finish())
}

pub fn decode_ball(bytes: &[u8], path: &str, p: &Presentation, sd: &StepDistribution) -> Result<BallTable, CacheError> {
    let mut r = Reader::open(bytes, path, BALL_MAGIC)?;
    let version = r.u32()?;
    r.expect("format version", version == BALL_VERSION)?;
    let k = [r.u8()?, r.u8()?];
    r.expect("presentation", k == kind_bytes(p.kind()))?;
    let radius = r.u32()? as usize;
    let sig = r.str()?;
    r.expect("step law", sig == sd.signature())?;
    let n = r.u64()? as usize;
    let nnz = r.u64()? as usize;
    let mut words = Vec::with_capacity(n);
    for _ in 0..n {
        let len = r.u8()? as usize;
        words.push(r.take(len)?.iter().map(|&b| hyperwalk_core::Generator(b)).collect());
    }
    let row_ptr = (0..=n).map(|_| r.u64().map(|v| v as usize)).collect::<Result<Vec<_>, _>>()?;
    let mut entries = Vec::with_capacity(nnz);
    for _ in 0..nnz {
        entries.push((r.u32()?, r.f64()?));
    }
    r.expect("length", r.pos == r.data.len())?;
    Ok(BallTable::from_parts(p, sd, radius, words, row_ptr, entries)?)
}

/// Loads the ball from the cache or builds and stores it. Returns the table
/// and whether it came from the cache.
pub fn load_or_build_ball(
    root: &Path,
    p: &Presentation,
    sd: &StepDistribution,
    radius: usize,
    mode: hyperwalk_core::walk::BallMode,
    budget: u64,
) -> Result<(BallTable, bool), CacheError> {
    let radial = mode != hyperwalk_core::walk::BallMode::Exact && !p.is_surface() && sd.is_isotropic_nearest_neighbor(p);
    if radial {
        return Ok((BallTable::build_with_budget(p, sd, radius, mode, budget)?, false));
    }
    let path = root.join(format!("{}.bin", ball_key(p, sd, radius)));
    if let Ok(bytes) = fs::read(&path) {
        // a corrupt or stale file is rebuilt rather than trusted
        if let Ok(bt) = decode_ball(&bytes, &path.display().to_string(), p, sd) {
            return Ok((bt, true));
        }
    }
    let bt = BallTable::build_with_budget(p, sd, radius, hyperwalk_core::walk::BallMode::Exact, budget)?;
    if let Some(bytes) = encode_ball(&bt) {
        write_atomic(&path, &bytes)?;
    }
    Ok((bt, false))
}

fn domain_string(p: &Presentation, d: &DomainSpec) -> String {
    match d {
        DomainSpec::FullBall => "full".into(),
        DomainSpec::Ball { center, radius } => format!("ball({};{radius})", p.format_word(center.word())),
        DomainSpec::ComplementBall { center, radius } => format!("complement({};{radius})", p.format_word(center.word())),
        DomainSpec::ExplicitSet(xs) => {
            format!("set({})", xs.iter().map(|x| p.format_word(x.word())).collect::<Vec<_>>().join(";"))
        }
    }
}

pub fn green_key(bt: &BallTable, t: &GreenTable) -> String {
    let p = bt.presentation();
    let mut h = Sha256::new();
    h.update(t.r.to_le_bytes());
    h.update(domain_string(p, &t.domain).as_bytes());
    h.update(p.format_word(t.source.word()).as_bytes());
    format!("{}-green-{}", ball_key(p, bt.step(), bt.radius()), &hex(&h.finalize())[..16])
}

pub fn encode_green(bt: &BallTable, t: &GreenTable) -> Vec<u8> {
    let p = bt.presentation();
    let mut w = Writer { buf: Vec::with_capacity(8 * t.values.len() + 128) };
    w.buf.extend_from_slice(GREEN_MAGIC);
    w.u32(GREEN_VERSION);
    w.f64(t.r);
    w.f64(t.residual);
    w.f64(t.truncation_gap.unwrap_or(f64::NAN));
    w.u64(t.iterations as u64);
    w.u32(t.radius as u32);
    w.str(&domain_string(p, &t.domain));
    w.str(&p.format_word(t.source.word()));
    w.u64(t.values.len() as u64);
    for &v in &t.values {
        w.f64(v);
    }
    w.finish()
}

/// Decoded Green cache record.
#[derive(Clone, Debug, PartialEq)]
pub struct GreenRecord {
    pub r: f64,
    pub residual: f64,
    pub truncation_gap: Option<f64>,
    pub iterations: u64,
    pub radius: usize,
    pub domain: String,
    pub source: String,
    pub values: Vec<f64>,
}

pub fn decode_green(bytes: &[u8], path: &str) -> Result<GreenRecord, CacheError> {
    let mut r = Reader::open(bytes, path, GREEN_MAGIC)?;
    let version = r.u32()?;
    r.expect("format version", version == GREEN_VERSION)?;
    let rv = r.f64()?;
    let residual = r.f64()?;
    let gap = r.f64()?;
    let iterations = r.u64()?;
    let radius = r.u32()? as usize;
    let domain = r.str()?;
    let source = r.str()?;
    let n = r.u64()? as usize;
    let values = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
    r.expect("length", r.pos == r.data.len())?;
    Ok(GreenRecord {
        r: rv,
        residual,
        truncation_gap: (!gap.is_nan()).then_some(gap),
        iterations,
        radius,
        domain,
        source,
        values,
    })
}

/// Green column from the cache, or solved and stored.
pub fn load_or_solve_green(
    root: &Path,
    bt: &BallTable,
    r: f64,
    dom: &DomainSpec,
    source: &hyperwalk_core::GroupElement,
    opts: &hyperwalk_core::green::GreenOptions,
) -> Result<(GreenTable, bool), CacheError> {
    let probe = GreenTable {
        r,
        radius: bt.radius(),
        domain: dom.clone(),
        source: source.clone(),
        source_index: 0,
        values: Vec::new(),
        truncation_gap: None,
        residual: 0.0,
        iterations: 0,
    };
    let cacheable = bt.words().is_some();
    let path = root.join(format!("{}.bin", green_key(bt, &probe)));
    if cacheable {
        if let Ok(bytes) = fs::read(&path) {
            if let Ok(rec) = decode_green(&bytes, &path.display().to_string()) {
                let p = bt.presentation();
                if rec.r == r
                    && rec.radius == bt.radius()
                    && rec.domain == domain_string(p, dom)
                    && rec.source == p.format_word(source.word())
                    && (rec.truncation_gap.is_some() || !opts.gap)
                {
                    let t = GreenTable {
                        r,
                        radius: rec.radius,
                        domain: dom.clone(),
                        source: source.clone(),
                        source_index: bt.index_of(source).unwrap_or(0),
                        values: rec.values,
                        truncation_gap: rec.truncation_gap,
                        residual: rec.residual,
                        iterations: rec.iterations as usize,
                    };
                    return Ok((t, true));
                }
            }
        }
    }
    let t = hyperwalk_core::green::green_truncated_with(bt, r, dom, source, opts)?;
    if cacheable {
        write_atomic(&path, &encode_green(bt, &t))?;
    }
    Ok((t, false))
}

#[cfg(test)]
mod tests {
    use super::*;
    use hyperwalk_core::walk::BallMode;

    #[test]
    fn ball_round_trip_and_corruption() {
        let p = Presentation::surface(2).unwrap();
        let sd = StepDistribution::srw(&p);
        let bt = BallTable::build(&p, &sd, 3, BallMode::Exact).unwrap();
        let bytes = encode_ball(&bt).unwrap();
        let back = decode_ball(&bytes, "mem", &p, &sd).unwrap();
        assert_eq!(back.len(), bt.len());
        assert_eq!(back.csr(), bt.csr());
        assert_eq!(back.words(), bt.words());
        let mut bad = bytes.clone();
        bad[100] ^= 1;
        assert!(matches!(decode_ball(&bad, "mem", &p, &sd), Err(CacheError::Format { .. })));
        let lazy = StepDistribution::lazy(&p, 0.5).unwrap();
        assert!(decode_ball(&bytes, "mem", &p, &lazy).is_err());
    }

    #[test]
    fn green_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = Presentation::surface(2).unwrap();
        let sd = StepDistribution::srw(&p);
        let (bt, hit) = load_or_build_ball(dir.path(), &p, &sd, 3, BallMode::Auto, 1 << 20).unwrap();
        assert!(!hit);
        let (bt2, hit) = load_or_build_ball(dir.path(), &p, &sd, 3, BallMode::Auto, 1 << 20).unwrap();
        assert!(hit && bt2.len() == bt.len());
        let opts = hyperwalk_core::green::GreenOptions::default();
        let (a, hit) = load_or_solve_green(dir.path(), &bt, 1.2, &DomainSpec::FullBall, &p.identity(), &opts).unwrap();
        assert!(!hit);
        let (b, hit) = load_or_solve_green(dir.path(), &bt, 1.2, &DomainSpec::FullBall, &p.identity(), &opts).unwrap();
        assert!(hit);
        assert_eq!(a.values, b.values);
    }
}
