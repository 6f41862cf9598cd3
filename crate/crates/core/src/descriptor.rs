//! Histograms, histogram distances and per-image descriptor sets.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default number of bins for transform-coefficient histograms.
pub const DEFAULT_BINS: usize = 32;

/// Smoothing added to every bin before evaluating the KL divergence.
pub const KLD_EPSILON: f64 = 1e-10;

/// A normalized histogram (bins sum to one).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Histogram {
    bins: Vec<f64>,
}

impl Histogram {
    /// Normalizes nonnegative counts. Needs at least two bins and a positive total.
    pub fn from_counts(counts: Vec<f64>) -> Result<Self> {
        if counts.len() < 2 {
            return Err(Error::Config(format!(
                "histogram needs at least 2 bins, got {}",
                counts.len()
            )));
        }
        if counts.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::Config("histogram counts must be finite and >= 0".into()));
        }
        let total: f64 = counts.iter().sum();
        if total <= 0.0 {
            return Err(Error::Empty("histogram has no mass".into()));
        }
        Ok(Self {
            bins: counts.into_iter().map(|c| c / total).collect(),
        })
    }

    pub fn bins(&self) -> &[f64] {
        &self.bins
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }
}

/// Uniform bins over `[lo, hi]` for one subband.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinRange {
    pub lo: f64,
    pub hi: f64,
    pub bins: usize,
}

impl BinRange {
    pub fn symmetric(radius: f64, bins: usize) -> Self {
        Self {
            lo: -radius,
            hi: radius,
            bins,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.bins < 2 {
            return Err(Error::Config(format!("bin count must be >= 2, got {}", self.bins)));
        }
        if !self.lo.is_finite() || !self.hi.is_finite() || self.hi <= self.lo {
            return Err(Error::Config(format!(
                "bin range [{}, {}] must be finite and non-empty",
                self.lo, self.hi
            )));
        }
        Ok(())
    }

    /// Bin of `v` after clipping into the range. Bins are left-inclusive;
    /// the last bin also holds the upper edge.
    #[inline]
    pub fn index(&self, v: f64) -> usize {
        let t = (v - self.lo) / (self.hi - self.lo);
        let i = (t * self.bins as f64).floor();
        if i.is_nan() || i < 0.0 {
            0
        } else {
            (i as usize).min(self.bins - 1)
        }
    }
}

/// Histogram of `values` over `range`, normalized to sum to one.
pub fn coeff_histogram(values: impl IntoIterator<Item = f64>, range: &BinRange) -> Result<Histogram> {
    range.validate()?;
    let mut counts = vec![0.0; range.bins];
    let mut n = 0usize;
    for v in values {
        counts[range.index(v)] += 1.0;
        n += 1;
    }
    if n == 0 {
        return Err(Error::Empty("no values to histogram".into()));
    }
    Histogram::from_counts(counts)
}

/// Per-subband bin ranges shared by every image of a corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinLayout {
    pub method: Method,
    pub version: u32,
    pub ranges: Vec<BinRange>,
}

impl BinLayout {
    pub const VERSION: u32 = 1;

    /// Widens each range to `[lo, hi]` observed over a calibration corpus.
    ///
    /// `extents[i]` is the largest absolute value seen in subband `i`; signed
    /// subbands get `[-max, max]`, magnitude subbands `[0, max]`.
    pub fn from_extents(method: Method, extents: &[f64], bins: usize, signed: bool) -> Result<Self> {
        let ranges = extents
            .iter()
            .map(|&m| {
                // an all-zero subband still needs a valid range
                let m = if m > 0.0 && m.is_finite() { m } else { 1.0 };
                let r = if signed {
                    BinRange::symmetric(m, bins)
                } else {
                    BinRange { lo: 0.0, hi: m, bins }
                };
                r.validate().map(|_| r)
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            method,
            version: Self::VERSION,
            ranges,
        })
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Texture attribute families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Sp,
    Ct,
    Clbp,
    Lri,
    Seisim,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Sp, Method::Ct, Method::Clbp, Method::Lri, Method::Seisim];

    pub fn name(self) -> &'static str {
        match self {
            Method::Sp => "sp",
            Method::Ct => "ct",
            Method::Clbp => "clbp",
            Method::Lri => "lri",
            Method::Seisim => "seisim",
        }
    }

    /// Whether the method compares histograms (everything except SeiSIM).
    pub fn uses_histograms(self) -> bool {
        self != Method::Seisim
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sp" => Ok(Method::Sp),
            "ct" => Ok(Method::Ct),
            "clbp" | "lbp" => Ok(Method::Clbp),
            "lri" => Ok(Method::Lri),
            "seisim" => Ok(Method::Seisim),
            other => Err(Error::Config(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceKind {
    #[default]
    Scd,
    Kld,
}

impl fmt::Display for DistanceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DistanceKind::Scd => "scd",
            DistanceKind::Kld => "kld",
        })
    }
}

impl FromStr for DistanceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "scd" => Ok(DistanceKind::Scd),
            "kld" => Ok(DistanceKind::Kld),
            other => Err(Error::Config(format!("unknown distance {other:?}"))),
        }
    }
}

fn check_same_len(a: &Histogram, b: &Histogram) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::LayoutMismatch(format!(
            "histograms have {} and {} bins",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

/// Squared chord distance: `sum (sqrt(a_i) - sqrt(b_i))^2`.
pub fn squared_chord(a: &Histogram, b: &Histogram) -> Result<f64> {
    check_same_len(a, b)?;
    Ok(a.bins
        .iter()
        .zip(&b.bins)
        .map(|(x, y)| {
            let d = x.sqrt() - y.sqrt();
            d * d
        })
        .sum())
}

/// Symmetrized KL divergence `sum (p - q) ln(p / q)` after adding
/// [`KLD_EPSILON`] to every bin and renormalizing.
pub fn kld(a: &Histogram, b: &Histogram) -> Result<f64> {
    check_same_len(a, b)?;
    let smooth = |h: &Histogram| {
        let total = 1.0 + KLD_EPSILON * h.len() as f64;
        h.bins.iter().map(|v| (v + KLD_EPSILON) / total).collect::<Vec<f64>>()
    };
    let (p, q) = (smooth(a), smooth(b));
    Ok(p.iter()
        .zip(&q)
        .map(|(x, y)| (x - y) * (x / y).ln())
        .sum::<f64>()
        .max(0.0))
}

pub fn histogram_distance(a: &Histogram, b: &Histogram, kind: DistanceKind) -> Result<f64> {
    match kind {
        DistanceKind::Scd => squared_chord(a, b),
        DistanceKind::Kld => kld(a, b),
    }
}

/// Maps a nonnegative distance to a similarity in (0, 1]: `1 / (1 + d)`.
pub fn to_similarity(distance: f64) -> f64 {
    1.0 / (1.0 + distance)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedHistogram {
    pub name: String,
    pub bins: Histogram,
}

/// The histograms describing one image under one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptorSet {
    pub method: Method,
    /// Identifies the bin layout the histograms were built with.
    pub layout_version: u32,
    pub histograms: Vec<NamedHistogram>,
}

impl DescriptorSet {
    pub fn new(method: Method, layout_version: u32, histograms: Vec<NamedHistogram>) -> Self {
        Self {
            method,
            layout_version,
            histograms,
        }
    }

    pub fn check_comparable(&self, other: &DescriptorSet) -> Result<()> {
        if self.method != other.method {
            return Err(Error::LayoutMismatch(format!(
                "cannot compare {} with {} descriptors",
                self.method, other.method
            )));
        }
        if self.layout_version != other.layout_version {
            return Err(Error::LayoutMismatch(format!(
                "layout versions {} and {} differ",
                self.layout_version, other.layout_version
            )));
        }
        if self.histograms.len() != other.histograms.len() {
            return Err(Error::LayoutMismatch(format!(
                "{} vs {} histograms",
                self.histograms.len(),
                other.histograms.len()
            )));
        }
        for (a, b) in self.histograms.iter().zip(&other.histograms) {
            if a.name != b.name || a.bins.len() != b.bins.len() {
                return Err(Error::LayoutMismatch(format!(
                    "histogram {:?} ({} bins) vs {:?} ({} bins)",
                    a.name,
                    a.bins.len(),
                    b.name,
                    b.bins.len()
                )));
            }
        }
        Ok(())
    }
}

/// Which histograms enter the overall distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregateSpan {
    /// Every histogram pair.
    #[default]
    All,
    /// All but the last pair, the literal reading of a `j = 1..J-1` sum.
    DropLast,
}

/// Sum of per-histogram distances between two comparable sets.
pub fn aggregate_distance(
    a: &DescriptorSet,
    b: &DescriptorSet,
    kind: DistanceKind,
    span: AggregateSpan,
) -> Result<f64> {
    a.check_comparable(b)?;
    let take = match span {
        AggregateSpan::All => a.histograms.len(),
        AggregateSpan::DropLast => a.histograms.len().saturating_sub(1),
    };
    a.histograms
        .iter()
        .zip(&b.histograms)
        .take(take)
        .map(|(x, y)| histogram_distance(&x.bins, &y.bins, kind))
        .sum()
}
