//! Power-law fits near criticality and in time, Tauberian and spectral
//! checks, and the closed-form free-group oracle.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::green::GreenSource;
use crate::group::{GroupElement, Presentation};
use crate::linalg;
use crate::walk::{return_probabilities, BallTable};

#[derive(Clone, Debug, PartialEq)]
pub struct FitResult {
    pub quantity: String,
    pub exponent: f64,
    pub constant: f64,
    pub residual: f64,
    pub range: (f64, f64),
    /// Min/max exponent over the two halves of the range.
    pub spread: (f64, f64),
    /// Exponents obtained with the endpoints of the R bracket.
    pub sensitivity: Option<(f64, f64)>,
    pub points: usize,
    pub method: String,
    /// Input was not monotone where monotonicity is expected.
    pub flagged: bool,
}

impl FitResult {
    /// Widest of the spread and sensitivity intervals.
    pub fn interval(&self) -> (f64, f64) {
        let (mut lo, mut hi) = self.spread;
        lo = lo.min(self.exponent);
        hi = hi.max(self.exponent);
        if let Some((a, b)) = self.sensitivity {
            lo = lo.min(a.min(b));
            hi = hi.max(a.max(b));
        }
        (lo, hi)
    }
}

fn slope_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64, (f64, f64)) {
    let (s, c, res) = linalg::linear_fit(x, y);
    let h = x.len() / 2;
    let spread = if h >= 2 && x.len() - h >= 2 {
        let a = linalg::linear_fit(&x[..h], &y[..h]).0;
        let b = linalg::linear_fit(&x[h..], &y[h..]).0;
        (a.min(b), a.max(b))
    } else {
        (s, s)
    };
    (s, c, res, spread)
}

/// Fits y ≈ C·x^a + Σ_j e_j·b_j(x) by golden-section search on a in
/// [lo, hi] with linear least squares for the coefficients, using relative
/// residuals. Returns (a, C, relative residual norm).
pub fn power_with_correction(x: &[f64], y: &[f64], extra: &[fn(f64) -> f64], lo: f64, hi: f64) -> Option<(f64, f64, f64)> {
    let solve = |a: f64| -> Option<(Vec<f64>, f64)> {
        let design: Vec<Vec<f64>> = x
            .iter()
            .zip(y)
            .map(|(&t, &v)| {
                let mut row = vec![t.powf(a) / v];
                row.extend(extra.iter().map(|b| b(t) / v));
                row
            })
            .collect();
        linalg::least_squares(&design, &vec![1.0; x.len()])
    };
    let a = linalg::golden_min(|a| solve(a).map_or(f64::INFINITY, |s| s.1), lo, hi, 1e-10);
    let (coef, res) = solve(a)?;
    Some((a, coef[0], res))
}

/// Closed-form Green functions of the simple random walk on F_k.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct FreeGroupOracle {
    pub rank: usize,
}

impl FreeGroupOracle {
    pub fn new(rank: usize) -> Result<Self> {
        if rank < 2 {
            return Err(Error::Domain(format!("rank {rank}")));
        }
        Ok(FreeGroupOracle { rank })
    }

    /// R = k/√(2k−1).
    pub fn big_r(&self) -> f64 {
        let k = self.rank as f64;
        k / (2.0 * k - 1.0).sqrt()
    }

    /// Smaller root of (2k−1)rF² − 2kF + r = 0.
    pub fn f(&self, r: f64) -> Result<f64> {
        let k = self.rank as f64;
        if r < 0.0 || r > self.big_r() * (1.0 + 1e-12) {
            return Err(Error::Domain(format!("r = {r} outside [0, R]")));
        }
        if r == 0.0 {
            return Ok(0.0);
        }
        let disc = (k * k - (2.0 * k - 1.0) * r * r).max(0.0);
        // rationalised root, stable as r → 0
        Ok(r / (k + disc.sqrt()))
    }

    pub fn g(&self, r: f64) -> Result<f64> {
        Ok(1.0 / (1.0 - r * self.f(r)?))
    }

    /// (F, G, R).
    pub fn values(&self, r: f64) -> Result<(f64, f64, f64)> {
        let f = self.f(r)?;
        Ok((f, 1.0 / (1.0 - r * f), self.big_r()))
    }

    /// η(r) = Σ_x G_r(1,x)^2.
    pub fn eta(&self, r: f64) -> Result<f64> {
        let k = self.rank as f64;
        let (f, g, _) = self.values(r)?;
        let q = (2.0 * k - 1.0) * f * f;
        if q >= 1.0 {
            return Err(Error::Domain(String::from("η diverges at R")));
        }
        Ok(g * g * (1.0 + 2.0 * k * f * f / (1.0 - q)))
    }

    /// R^n p^n(1,1) for n = 0..=n_max from the distance chain, symmetrised
    /// so that no value under- or overflows.
    pub fn scaled_return(&self, n_max: usize) -> Vec<f64> {
        let k = self.rank as f64;
        let p_out = (2.0 * k - 1.0) / (2.0 * k);
        let mut a = vec![0.0f64; n_max + 3];
        a[0] = 1.0;
        let mut out = Vec::with_capacity(n_max + 1);
        out.push(1.0);
        let mut next = vec![0.0f64; n_max + 3];
        for n in 0..n_max {
            let top = (n + 1).min(n_max + 1);
            next[0] = 0.5 * a[1];
            next[1] = a[0] / (2.0 * p_out) + 0.5 * a[2];
            for d in 2..=top {
                next[d] = 0.5 * (a[d - 1] + a[d + 1]);
            }
            core::mem::swap(&mut a, &mut next);
            out.push(a[0]);
        }
        out
    }

    /// log p^n(1,1); −∞ for odd n.
    pub fn log_return(&self, n_max: usize) -> Vec<f64> {
        let lr = self.big_r().ln();
        self.scaled_return(n_max).iter().enumerate().map(|(n, &s)| s.ln() - n as f64 * lr).collect()
    }

    /// p^n(1,1) in plain double precision (underflows beyond n ≈ 4900).
    pub fn pn(&self, n: usize) -> f64 {
        self.log_return(n)[n].exp()
    }

    pub fn presentation(&self) -> Presentation {
        Presentation::free(self.rank as u8).expect("rank checked")
    }

    /// G_r(1, x) = G·F^{|x|} as a Green source.
    pub fn green_source(&self, r: f64) -> Result<OracleGreen> {
        let (f, g, _) = self.values(r)?;
        Ok(OracleGreen { presentation: self.presentation(), r, f, g })
    }
}

#[derive(Clone, Debug)]
pub struct OracleGreen {
    presentation: Presentation,
    pub r: f64,
    pub f: f64,
    pub g: f64,
}

impl GreenSource for OracleGreen {
    fn r(&self) -> f64 {
        self.r
    }
    fn presentation(&self) -> &Presentation {
        &self.presentation
    }
    fn coverage(&self) -> usize {
        usize::MAX
    }
    fn green(&self, x: &GroupElement) -> Option<f64> {
        Some(self.g * self.f.powi(x.len() as i32))
    }
    fn is_radial(&self) -> bool {
        true
    }
}

/// Slope of log(G_R − G_r) against log(R − r).
pub fn critical_exponent_fit(points: &[(f64, f64)], big_r: f64, g_big_r: f64) -> Result<FitResult> {
    let mut pts: Vec<(f64, f64)> = points.to_vec();
    pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let flagged = pts.windows(2).any(|w| w[1].1 < w[0].1);
    let mut x = Vec::new();
    let mut y = Vec::new();
    for &(r, g) in &pts {
        let dg = g_big_r - g;
        let dr = big_r - r;
        if dg > 0.0 && dr > 0.0 {
            x.push(dr.ln());
            y.push(dg.ln());
        }
    }
    if x.len() < 4 {
        return Err(Error::InsufficientData(format!("{} usable points", x.len())));
    }
    // G_R − G_r = C δ^α + E δ: singular part plus the analytic linear term
    let fit = |x: &[f64], y: &[f64]| {
        let d: Vec<f64> = x.iter().map(|v| v.exp()).collect();
        let g: Vec<f64> = y.iter().map(|v| v.exp()).collect();
        power_with_correction(&d, &g, &[|t| t], 0.02, 0.98)
    };
    let (a, c, res) = fit(&x, &y).ok_or_else(|| Error::InsufficientData(String::from("singular fit")))?;
    let h = x.len() / 2;
    let spread = if h >= 3 && x.len() - h >= 3 {
        let a1 = fit(&x[..h], &y[..h]).map_or(a, |f| f.0);
        let a2 = fit(&x[h..], &y[h..]).map_or(a, |f| f.0);
        (a1.min(a2), a1.max(a2))
    } else {
        (a, a)
    };
    let range = (big_r - pts.last().unwrap().0, big_r - pts[0].0);
    Ok(FitResult {
        quantity: String::from("G_R - G_r"),
        exponent: a,
        constant: c,
        residual: res,
        range,
        spread,
        sensitivity: None,
        points: x.len(),
        method: String::from("C d^a + E d least squares"),
        flagged,
    })
}

/// Plain slope of log(G_R − G_r) against log(R − r).
pub fn critical_exponent_slope(points: &[(f64, f64)], big_r: f64, g_big_r: f64) -> Option<f64> {
    let (x, y): (Vec<f64>, Vec<f64>) = points
        .iter()
        .filter(|p| g_big_r > p.1 && big_r > p.0)
        .map(|p| ((big_r - p.0).ln(), (g_big_r - p.1).ln()))
        .unzip();
    (x.len() >= 2).then(|| linalg::linear_fit(&x, &y).0)
}

/// Two-point Richardson proxies for G_R from values at δ and 2δ below R:
/// (linear in δ, linear in √δ).
pub fn richardson_proxies(g_at_delta: f64, g_at_two_delta: f64) -> (f64, f64) {
    let d = g_at_delta - g_at_two_delta;
    (g_at_delta + d, g_at_delta + d / (core::f64::consts::SQRT_2 - 1.0))
}

/// Plain slope of log(G_R − G_r) against log(R − r) for a truncated table,
/// where neither R nor G_R is known. The exponent uses `r_hat` and the first
/// proxy; the sensitivity interval covers every combination of the R bracket
/// endpoints with both proxies; the spread holds the slopes of the two
/// halves of the grid.
pub fn critical_exponent_bracketed(
    points: &[(f64, f64)],
    r_hat: f64,
    r_bracket: Option<(f64, f64)>,
    proxies: (f64, f64),
) -> Result<FitResult> {
    let mut pts: Vec<(f64, f64)> = points.to_vec();
    pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let flagged = pts.windows(2).any(|w| w[1].1 < w[0].1);
    let logs = |big_r: f64, g_r: f64| -> (Vec<f64>, Vec<f64>) {
        pts.iter().filter(|p| g_r > p.1 && big_r > p.0).map(|p| ((big_r - p.0).ln(), (g_r - p.1).ln())).unzip()
    };
    let (x, y) = logs(r_hat, proxies.0);
    if x.len() < 4 {
        return Err(Error::InsufficientData(format!("{} usable points", x.len())));
    }
    let (s, c, res, spread) = slope_fit(&x, &y);
    let mut rs = vec![r_hat];
    if let Some((lo, hi)) = r_bracket {
        rs.push(lo);
        rs.push(hi);
    }
    let mut lo = s;
    let mut hi = s;
    for &big_r in &rs {
        for g in [proxies.0, proxies.1] {
            let (x, y) = logs(big_r, g);
            if x.len() >= 4 {
                let a = linalg::linear_fit(&x, &y).0;
                lo = lo.min(a);
                hi = hi.max(a);
            }
        }
    }
    Ok(FitResult {
        quantity: String::from("G_R - G_r"),
        exponent: s,
        constant: c.exp(),
        residual: res,
        range: (r_hat - pts.last().unwrap().0, r_hat - pts[0].0),
        spread,
        sensitivity: Some((lo, hi)),
        points: x.len(),
        method: String::from("log-log slope, Richardson proxy for G_R"),
        flagged,
    })
}

/// Slope of log η(r) against log(R − r); about −1/2.
pub fn eta_exponent_fit(points: &[(f64, f64)], big_r: f64) -> Result<FitResult> {
    let x: Vec<f64> = points.iter().map(|p| (big_r - p.0).ln()).collect();
    let y: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    if x.len() < 3 || x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InsufficientData(String::from("need three points below R")));
    }
    let (s, c, res, spread) = slope_fit(&x, &y);
    Ok(FitResult {
        quantity: String::from("eta"),
        exponent: s,
        constant: c.exp(),
        residual: res,
        range: (big_r - points.iter().map(|p| p.0).fold(f64::MIN, f64::max), big_r - points.iter().map(|p| p.0).fold(f64::MAX, f64::min)),
        spread,
        sensitivity: None,
        points: x.len(),
        method: String::from("log-log least squares"),
        flagged: false,
    })
}

/// Local limit fit: slope of log(p^n R̂^n) against log n on a parity class;
/// the exponent reported is −slope.
pub fn llt_fit(
    log_pn: &[(usize, f64)],
    r_hat: f64,
    r_bracket: Option<(f64, f64)>,
    n_range: (usize, usize),
    parity: Option<usize>,
) -> Result<FitResult> {
    let sel: Vec<(usize, f64)> = log_pn
        .iter()
        .copied()
        .filter(|&(n, v)| n >= n_range.0 && n <= n_range.1 && n > 0 && parity.map_or(true, |q| n % 2 == q) && v.is_finite())
        .collect();
    if sel.len() < 8 {
        return Err(Error::InsufficientData(format!("{} points in the range, need 8", sel.len())));
    }
    let x: Vec<f64> = sel.iter().map(|p| (p.0 as f64).ln()).collect();
    // log(p^n R^n) = c − β log n + e/n
    let fit_rows = |rows: &[(usize, f64)], r: f64| -> (f64, f64, f64) {
        let design: Vec<Vec<f64>> = rows.iter().map(|&(n, _)| vec![1.0, (n as f64).ln(), 1.0 / n as f64]).collect();
        let y: Vec<f64> = rows.iter().map(|&(n, v)| v + n as f64 * r.ln()).collect();
        match linalg::least_squares(&design, &y) {
            Some((c, res)) => (c[1], c[0], res),
            None => {
                let (s, c, res) = linalg::linear_fit(&x, &y);
                (s, c, res)
            }
        }
    };
    let fit_at = |r: f64| {
        let (s, c, res) = fit_rows(&sel, r);
        let h = sel.len() / 2;
        let spread = if h >= 4 {
            let a = fit_rows(&sel[..h], r).0;
            let b = fit_rows(&sel[h..], r).0;
            (a.min(b), a.max(b))
        } else {
            (s, s)
        };
        (s, c, res, spread)
    };
    let (s, c, res, spread) = fit_at(r_hat);
    let sensitivity = r_bracket.map(|(lo, hi)| {
        let a = -fit_at(lo).0;
        let b = -fit_at(hi).0;
        (a.min(b), a.max(b))
    });
    let scaled: Vec<f64> = sel.iter().map(|&(n, v)| v + n as f64 * r_hat.ln()).collect();
    Ok(FitResult {
        quantity: String::from("p^n R^n"),
        exponent: -s,
        constant: c.exp(),
        residual: res,
        range: (sel[0].0 as f64, sel.last().unwrap().0 as f64),
        spread: (-spread.1, -spread.0),
        sensitivity,
        points: sel.len(),
        method: String::from("log n and 1/n least squares"),
        flagged: scaled.windows(2).any(|w| w[1] > w[0] + 1e-12),
    })
}

/// Exponent of Σ_{k≤n} k·q_k against n (Karamata direction).
pub fn karamata_fit(q: &[(usize, f64)], n_range: (usize, usize)) -> Result<FitResult> {
    let mut acc = 0.0;
    let mut x = Vec::new();
    let mut y = Vec::new();
    for &(n, v) in q {
        acc += n as f64 * v;
        if n >= n_range.0 && n <= n_range.1 {
            x.push(n as f64);
            y.push(acc);
        }
    }
    if x.len() < 8 {
        return Err(Error::InsufficientData(format!("{} points", x.len())));
    }
    // partial sums carry a constant offset from the early terms
    let fit = |x: &[f64], y: &[f64]| power_with_correction(x, y, &[|_| 1.0], 0.01, 3.0);
    let (s, c, res) = fit(&x, &y).ok_or_else(|| Error::InsufficientData(String::from("singular fit")))?;
    let h = x.len() / 2;
    let a = fit(&x[..h], &y[..h]).map_or(s, |f| f.0);
    let b = fit(&x[h..], &y[h..]).map_or(s, |f| f.0);
    let spread = (a.min(b), a.max(b));
    Ok(FitResult {
        quantity: String::from("sum k q_k"),
        exponent: s,
        constant: c,
        residual: res,
        range: (n_range.0 as f64, n_range.1 as f64),
        spread,
        sensitivity: None,
        points: x.len(),
        method: String::from("C n^b + D least squares"),
        flagged: false,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct TauberianReport {
    pub monotone: bool,
    /// First index n with q_n > q_{n−1}.
    pub first_violation: Option<usize>,
    /// C in Σ_{k≤n} k q_k ≈ C n^β + D.
    pub partial_constant: f64,
    /// Constant in q_n ≈ C' n^{β−2}(1 + e/n).
    pub direct_constant: f64,
    pub partial_exponent: f64,
    pub direct_exponent: f64,
    /// |C' − βC| / (βC)
    pub relative_discrepancy: f64,
    pub consistent: bool,
}

/// Checks the Tauberian implication on q_1, q_2, ... (index n = position + 1)
/// over `n_range`, with consistency tolerance `tol`.
pub fn tauberian_check(q: &[f64], beta: f64, n_range: (usize, usize), tol: f64) -> Result<TauberianReport> {
    if q.iter().any(|&v| v < 0.0) {
        return Err(Error::Domain(String::from("q must be nonnegative")));
    }
    let first_violation = q.windows(2).position(|w| w[1] > w[0] * (1.0 + 1e-12)).map(|i| i + 2);
    let (lo, hi) = n_range;
    if lo < 1 || hi > q.len() || hi < lo + 8 {
        return Err(Error::InsufficientData(format!("range {lo}..={hi} with {} terms", q.len())));
    }
    let mut partial = Vec::with_capacity(q.len());
    let mut acc = 0.0;
    for (i, &v) in q.iter().enumerate() {
        acc += (i + 1) as f64 * v;
        partial.push(acc);
    }
    let ns: Vec<usize> = (lo..=hi).collect();
    let design: Vec<Vec<f64>> = ns.iter().map(|&n| vec![(n as f64).powf(beta), 1.0]).collect();
    let ys: Vec<f64> = ns.iter().map(|&n| partial[n - 1]).collect();
    let (c1, _) = linalg::least_squares(&design, &ys).ok_or_else(|| Error::InsufficientData(String::from("singular fit")))?;
    let design2: Vec<Vec<f64>> = ns.iter().map(|&n| vec![1.0, 1.0 / n as f64]).collect();
    let ys2: Vec<f64> = ns.iter().map(|&n| q[n - 1] * (n as f64).powf(2.0 - beta)).collect();
    let (c2, _) = linalg::least_squares(&design2, &ys2).ok_or_else(|| Error::InsufficientData(String::from("singular fit")))?;
    let lx: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
    let partial_exponent = linalg::linear_fit(&lx, &ns.iter().map(|&n| partial[n - 1].ln()).collect::<Vec<_>>()).0;
    let direct_exponent = linalg::linear_fit(&lx, &ns.iter().map(|&n| q[n - 1].ln()).collect::<Vec<_>>()).0;
    let predicted = beta * c1[0];
    let rel = (c2[0] - predicted).abs() / predicted.abs();
    Ok(TauberianReport {
        monotone: first_violation.is_none(),
        first_violation,
        partial_constant: c1[0],
        direct_constant: c2[0],
        partial_exponent,
        direct_exponent,
        relative_discrepancy: rel,
        consistent: rel <= tol && first_violation.is_none(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumReport {
    pub radius: usize,
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// 1 + λ_min/λ_max; positive when the spectrum avoids −λ_max.
    pub gap: f64,
    /// max over the second half of the excess of R̂^n p^n over its running
    /// minimum, relative to the same over the first half.
    pub envelope_excess: (f64, f64),
}

/// Extreme eigenvalues of the ball-restricted operator of an aperiodic
/// walk; declines bipartite walks.
pub fn spectrum_check(bt: &BallTable, r_hat: f64, n_max: usize) -> Result<SpectrumReport> {
    let p = bt.presentation();
    if bt.step().period(p) != 1 {
        return Err(Error::NotApplicable(String::from("walk has period 2; λ_min → −λ_max by bipartite symmetry")));
    }
    let op = bt.sym_op(bt.len(), 0.0, 1.0);
    let e = linalg::lanczos_extremes(&op, 1e-12, 3000)?;
    let (ret, _) = return_probabilities(bt, n_max)?;
    let scaled: Vec<f64> = ret.iter().enumerate().map(|(n, &v)| v * r_hat.powi(n as i32)).collect();
    let mut run_min = f64::INFINITY;
    let excess: Vec<f64> = scaled
        .iter()
        .map(|&v| {
            run_min = run_min.min(v);
            v - run_min
        })
        .collect();
    let h = excess.len() / 2;
    let first = excess[..h].iter().fold(0.0f64, |a, &b| a.max(b));
    let second = excess[h..].iter().fold(0.0f64, |a, &b| a.max(b));
    Ok(SpectrumReport {
        radius: bt.radius(),
        lambda_min: e.min,
        lambda_max: e.max,
        gap: 1.0 + e.min / e.max,
        envelope_excess: (first, second),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct RdReport {
    /// max of p^n R̂^n n
    pub upper_constant: f64,
    /// min of p^n R̂^n n^3
    pub lower_constant: f64,
    pub upper_ok: bool,
    pub lower_ok: bool,
}

/// Two-sided polynomial bound check: p^n R̂^n n stays bounded and
/// p^n R̂^n n^3 stays bounded below over the range (each compared between
/// the two halves of the range with 5% slack).
pub fn rd_bounds_check(log_pn: &[(usize, f64)], r_hat: f64, n_range: (usize, usize)) -> Result<RdReport> {
    let sel: Vec<(usize, f64)> =
        log_pn.iter().copied().filter(|&(n, v)| n >= n_range.0 && n <= n_range.1 && v.is_finite()).collect();
    if sel.len() < 4 {
        return Err(Error::InsufficientData(format!("{} points", sel.len())));
    }
    let u: Vec<f64> = sel.iter().map(|&(n, v)| (v + n as f64 * r_hat.ln()).exp() * n as f64).collect();
    let l: Vec<f64> = sel.iter().map(|&(n, v)| (v + n as f64 * r_hat.ln()).exp() * (n as f64).powi(3)).collect();
    let h = sel.len() / 2;
    let max = |s: &[f64]| s.iter().fold(f64::MIN, |a, &b| a.max(b));
    let min = |s: &[f64]| s.iter().fold(f64::MAX, |a, &b| a.min(b));
    Ok(RdReport {
        upper_constant: max(&u),
        lower_constant: min(&l),
        upper_ok: max(&u[h..]) <= 1.05 * max(&u[..h]),
        lower_ok: min(&l[h..]) >= 0.95 * min(&l[..h]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_closed_forms() {
        let o = FreeGroupOracle::new(2).unwrap();
        let (f, g, r) = o.values(1.0).unwrap();
        assert!((f - 1.0 / 3.0).abs() < 1e-15 && (g - 1.5).abs() < 1e-14);
        assert!((r - 2.0 / 3f64.sqrt()).abs() < 1e-15);
        assert!((o.g(r).unwrap() - 3.0).abs() < 1e-6);
        assert_eq!(o.values(0.0).unwrap().1, 1.0);
        assert!(o.f(1.2).is_err());
        let k = 3.0;
        let r = 0.7;
        let f3 = FreeGroupOracle::new(3).unwrap().f(r).unwrap();
        assert!(((2.0 * k - 1.0) * r * f3 * f3 - 2.0 * k * f3 + r).abs() < 1e-14);
    }

    #[test]
    fn oracle_return_probabilities() {
        let o = FreeGroupOracle::new(2).unwrap();
        assert!((o.pn(0) - 1.0).abs() < 1e-15);
        assert_eq!(o.pn(1), 0.0);
        assert!((o.pn(2) - 0.25).abs() < 1e-15);
        let lp = o.log_return(4000);
        let r = 0.9;
        let series: f64 = lp.iter().enumerate().map(|(n, &l)| (l + n as f64 * r.ln()).exp()).sum();
        assert!((series - o.g(r).unwrap()).abs() < 1e-10);
        let s = o.scaled_return(10_000);
        assert!(s[10_000] > 0.0 && s[10_000].is_finite());
    }

    #[test]
    fn llt_exponent_on_oracle() {
        for k in [2, 3] {
            let o = FreeGroupOracle::new(k).unwrap();
            let lp: Vec<(usize, f64)> = o.log_return(2000).into_iter().enumerate().collect();
            let fit = llt_fit(&lp, o.big_r(), None, (100, 2000), Some(0)).unwrap();
            assert!((fit.exponent - 1.5).abs() < 0.02, "k={k}: {}", fit.exponent);
        }
        let lp = vec![(2, -1.0); 3];
        assert!(llt_fit(&lp, 1.0, None, (0, 10), None).is_err());
    }

    #[test]
    fn critical_exponent_on_oracle() {
        let o = FreeGroupOracle::new(2).unwrap();
        let big_r = o.big_r();
        let pts: Vec<(f64, f64)> = (0..20).map(|i| big_r * (1.0 - 1e-6 * 1.45f64.powi(i))).map(|r| (r, o.g(r).unwrap())).collect();
        let fit = critical_exponent_fit(&pts, big_r, o.g(big_r).unwrap()).unwrap();
        assert!((fit.exponent - 0.5).abs() < 0.01, "{fit:?}");
        let eta: Vec<(f64, f64)> = pts.iter().map(|&(r, _)| (r, o.eta(r).unwrap())).collect();
        let e = eta_exponent_fit(&eta, big_r).unwrap();
        assert!((e.exponent + 0.5).abs() < 0.1, "{e:?}");
    }

    #[test]
    fn bracketed_fit_on_pure_square_root() {
        let big_r = 2.0;
        let g = |d: f64| 3.0 - (big_r * d).sqrt();
        let grid = [1e-3, 2e-3, 4e-3, 1e-2, 2e-2, 5e-2, 0.1, 0.2];
        let pts: Vec<(f64, f64)> = grid.iter().map(|&d| (big_r * (1.0 - d), g(d))).collect();
        let proxies = richardson_proxies(g(1e-3), g(2e-3));
        assert!(proxies.0 < 3.0 && (proxies.1 - 3.0).abs() < 1e-12);
        let fit = critical_exponent_bracketed(&pts, big_r, Some((1.999, 2.001)), proxies).unwrap();
        let (lo, hi) = fit.sensitivity.unwrap();
        assert!(lo <= 0.5 && 0.5 <= hi, "{fit:?}");
        assert!(fit.exponent > 0.5);
    }

    #[test]
    fn tauberian_examples() {
        let q: Vec<f64> = (1..=2000).map(|n| (n as f64).powf(-0.5)).collect();
        let rep = tauberian_check(&q, 1.5, (100, 2000), 0.1).unwrap();
        assert!(rep.consistent, "{rep:?}");
        let o = FreeGroupOracle::new(2).unwrap();
        let s = o.scaled_return(2000);
        let q2: Vec<f64> = (1..=1000).map(|n| s[2 * n]).collect();
        let rep = tauberian_check(&q2, 0.5, (100, 1000), 0.05).unwrap();
        assert!(rep.consistent, "{rep:?}");
        let mut bad = q.clone();
        bad[10] = 5.0;
        let rep = tauberian_check(&bad, 1.5, (100, 2000), 0.1).unwrap();
        assert!(!rep.monotone && rep.first_violation == Some(11));
    }

    #[test]
    fn karamata_direction() {
        let o = FreeGroupOracle::new(2).unwrap();
        let s = o.scaled_return(4000);
        let q: Vec<(usize, f64)> = s.iter().copied().enumerate().skip(1).collect();
        let fit = karamata_fit(&q, (200, 4000)).unwrap();
        assert!((fit.exponent - 0.5).abs() < 0.05, "{fit:?}");
    }

    #[test]
    fn rd_bounds() {
        let o = FreeGroupOracle::new(2).unwrap();
        let lp: Vec<(usize, f64)> = o.log_return(2000).into_iter().enumerate().filter(|x| x.0 % 2 == 0).collect();
        let rep = rd_bounds_check(&lp, o.big_r(), (10, 2000)).unwrap();
        assert!(rep.upper_ok && rep.lower_ok);
        let synth: Vec<(usize, f64)> = (10..200).map(|n| (n, -(n as f64) * 1.1f64.ln() - 4.0 * (n as f64).ln())).collect();
        let rep = rd_bounds_check(&synth, 1.1, (10, 200)).unwrap();
        assert!(!rep.lower_ok && rep.upper_ok);
    }
}
