//! Tokenization, rank-frequency tables and log-log fits of Zipf and
//! Mandelbrot exponents.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};

/// Lowercased runs of alphanumeric code points with at least `min_length`
/// characters.
pub fn tokenize(text: &[u8], min_length: usize) -> Result<Vec<String>> {
    let text = std::str::from_utf8(text).map_err(|e| {
        Error::Input(format!(
            "input is not valid UTF-8 at byte offset {}",
            e.valid_up_to()
        ))
    })?;
    Ok(text
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty() && t.chars().count() >= min_length)
        .map(str::to_lowercase)
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RankEntry {
    pub rank: usize,
    pub token: String,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankFrequencyTable {
    entries: Vec<RankEntry>,
    total: u64,
}

impl RankFrequencyTable {
    /// Table with tokens `r1, r2, …` and the given counts in rank order.
    ///
    /// Counts are taken as given, so synthetic data with noise need not be
    /// monotone; tables from [`rank_frequency`] always are.
    pub fn from_counts(counts: &[u64]) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::Input(
                "rank-frequency table needs at least one entry".into(),
            ));
        }
        if let Some(i) = counts.iter().position(|&c| c == 0) {
            return Err(Error::Input(format!("count at rank {} is zero", i + 1)));
        }
        let entries = counts
            .iter()
            .enumerate()
            .map(|(i, &count)| RankEntry {
                rank: i + 1,
                token: format!("r{}", i + 1),
                count,
            })
            .collect();
        Ok(Self {
            entries,
            total: counts.iter().sum(),
        })
    }

    pub fn entries(&self) -> &[RankEntry] {
        &self.entries
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn counts(&self) -> Vec<u64> {
        self.entries.iter().map(|e| e.count).collect()
    }

    /// `rank,token,count` lines with a header.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["rank", "token", "count"])
            .map_err(|e| Error::Input(e.to_string()))?;
        for e in &self.entries {
            w.serialize((e.rank, &e.token, e.count))
                .map_err(|e| Error::Input(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Input(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }
}

/// Counts tokens and ranks them by descending count, breaking ties by first
/// occurrence.
pub fn rank_frequency<S: AsRef<str>>(tokens: &[S]) -> Result<RankFrequencyTable> {
    if tokens.is_empty() {
        return Err(Error::Input("token sequence is empty".into()));
    }
    let mut counts: HashMap<&str, (u64, usize)> = HashMap::new();
    for (i, t) in tokens.iter().enumerate() {
        counts.entry(t.as_ref()).or_insert((0, i)).0 += 1;
    }
    let mut rows: Vec<(&str, u64, usize)> =
        counts.into_iter().map(|(t, (c, f))| (t, c, f)).collect();
    rows.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)));
    let entries = rows
        .into_iter()
        .enumerate()
        .map(|(i, (token, count, _))| RankEntry {
            rank: i + 1,
            token: token.to_string(),
            count,
        })
        .collect();
    Ok(RankFrequencyTable {
        entries,
        total: tokens.len() as u64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FitResult {
    pub alpha: f64,
    pub gamma: Option<f64>,
    pub log_log_r2: f64,
    pub ks_statistic: f64,
    pub n_ranks_used: usize,
    /// Residual sum of squares of the log-log regression.
    pub rss: f64,
}

struct Ols {
    slope: f64,
    rss: f64,
    r2: f64,
}

fn ols(xs: &[f64], ys: &[f64]) -> Ols {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let rss: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let r = y - my - slope * (x - mx);
            r * r
        })
        .sum();
    // Constant data leaves only rounding noise in syy.
    let scale: f64 = ys.iter().map(|y| y * y).sum();
    let r2 = if syy > 1e-24 * scale {
        (1.0 - rss / syy).clamp(0.0, 1.0)
    } else {
        1.0
    };
    Ols { slope, rss, r2 }
}

/// Largest CDF gap between the observed rank distribution and the
/// maximizer with weights `(i + γ)^α` on the same ranks.
fn ks_statistic(counts: &[u64], alpha: f64, gamma: f64) -> f64 {
    let total: u64 = counts.iter().sum();
    let inv: Vec<f64> = (1..=counts.len())
        .map(|i| (i as f64 + gamma).powf(-alpha))
        .collect();
    let z: f64 = inv.iter().sum();
    let (mut emp, mut fit, mut worst) = (0.0, 0.0, 0.0f64);
    for (c, w) in counts.iter().zip(&inv) {
        emp += *c as f64 / total as f64;
        fit += w / z;
        worst = worst.max((emp - fit).abs());
    }
    worst.min(1.0)
}

fn log_points(counts: &[u64], gamma: f64) -> (Vec<f64>, Vec<f64>) {
    let xs = (1..=counts.len())
        .map(|i| (i as f64 + gamma).ln())
        .collect();
    let ys = counts.iter().map(|&c| (c as f64).ln()).collect();
    (xs, ys)
}

fn fit_at(counts: &[u64], gamma: f64) -> (Ols, f64) {
    let (xs, ys) = log_points(counts, gamma);
    let o = ols(&xs, &ys);
    let alpha = -o.slope;
    (o, alpha)
}

/// Least squares of `ln count` on `ln rank` over the first `max_rank` ranks.
pub fn fit_zipf(table: &RankFrequencyTable, max_rank: Option<usize>) -> Result<FitResult> {
    let n = max_rank.map_or(table.len(), |r| r.min(table.len()));
    if n < 3 {
        return Err(Error::Fit(format!(
            "Zipf fit needs at least 3 ranks, got {n}"
        )));
    }
    let counts = &table.counts()[..n];
    let (o, alpha) = fit_at(counts, 0.0);
    Ok(FitResult {
        alpha,
        gamma: None,
        log_log_r2: o.r2,
        ks_statistic: ks_statistic(counts, alpha, 0.0),
        n_ranks_used: n,
        rss: o.rss,
    })
}

/// Evenly spaced candidate shifts, parsed from `start:stop:step`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaGrid {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl GammaGrid {
    pub const LOWER_LIMIT: f64 = -0.9;
    pub const UPPER_LIMIT: f64 = 100.0;

    pub fn new(start: f64, stop: f64, step: f64) -> Result<Self> {
        if !(start.is_finite() && stop.is_finite() && step.is_finite()) {
            return Err(Error::Input("gamma grid bounds must be finite".into()));
        }
        if !(step > 0.0) || stop < start {
            return Err(Error::Input(format!(
                "gamma grid {start}:{stop}:{step} is degenerate; need step > 0 and stop >= start"
            )));
        }
        if !(start > Self::LOWER_LIMIT) || stop > Self::UPPER_LIMIT {
            return Err(Error::Input(format!(
                "gamma grid must lie in ({}, {}], got {start}:{stop}",
                Self::LOWER_LIMIT,
                Self::UPPER_LIMIT
            )));
        }
        let grid = Self { start, stop, step };
        if grid.points().len() > 1_000_000 {
            return Err(Error::Input("gamma grid has more than 10^6 points".into()));
        }
        Ok(grid)
    }

    pub fn points(&self) -> Vec<f64> {
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize;
        (0..=n).map(|k| self.start + k as f64 * self.step).collect()
    }
}

impl FromStr for GammaGrid {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || {
            Error::Input(format!(
                "gamma grid `{s}` is not of the form start:stop:step"
            ))
        };
        if parts.len() != 3 {
            return Err(bad());
        }
        let v: Vec<f64> = parts
            .iter()
            .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        Self::new(v[0], v[1], v[2])
    }
}

impl fmt::Display for GammaGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.start, self.stop, self.step)
    }
}

/// Least squares of `ln count` on `ln(rank + γ)` for each `γ` in the grid,
/// then one golden-section pass between the best point's grid neighbours.
pub fn fit_mandelbrot(table: &RankFrequencyTable, grid: &GammaGrid) -> Result<FitResult> {
    let n = table.len();
    if n < 4 {
        return Err(Error::Fit(format!(
            "Mandelbrot fit needs at least 4 ranks, got {n}"
        )));
    }
    let counts = table.counts();
    let points = grid.points();
    let rss = |g: f64| fit_at(&counts, g).0.rss;
    let (best_index, mut best_rss) =
        points
            .iter()
            .map(|&g| rss(g))
            .enumerate()
            .fold(
                (0, f64::INFINITY),
                |acc, (i, r)| if r < acc.1 { (i, r) } else { acc },
            );
    let mut gamma = points[best_index];

    if points.len() > 1 {
        let mut lo = points[best_index.saturating_sub(1)];
        let mut hi = points[(best_index + 1).min(points.len() - 1)];
        let phi = 0.5 * (5f64.sqrt() - 1.0);
        let mut c = hi - phi * (hi - lo);
        let mut d = lo + phi * (hi - lo);
        let (mut fc, mut fd) = (rss(c), rss(d));
        for _ in 0..80 {
            if fc < fd {
                hi = d;
                d = c;
                fd = fc;
                c = hi - phi * (hi - lo);
                fc = rss(c);
            } else {
                lo = c;
                c = d;
                fc = fd;
                d = lo + phi * (hi - lo);
                fd = rss(d);
            }
        }
        let candidate = 0.5 * (lo + hi);
        let candidate_rss = rss(candidate);
        if candidate_rss < best_rss {
            gamma = candidate;
            best_rss = candidate_rss;
        }
    }

    let (o, alpha) = fit_at(&counts, gamma);
    Ok(FitResult {
        alpha,
        gamma: Some(gamma),
        log_log_r2: o.r2,
        ks_statistic: ks_statistic(&counts, alpha, gamma),
        n_ranks_used: n,
        rss: best_rss,
    })
}
