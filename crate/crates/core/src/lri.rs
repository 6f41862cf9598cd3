//! Local radius index descriptors (LRI-A and LRI-D).
//!
//! Along each of eight scan directions an edge step separates two
//! consecutive pixels whose intensities differ by more than `T = sigma / 2`.
//! LRI-D records, for every pixel, the signed number of steps to the nearest
//! edge within `K`; LRI-A records, at each edge, the signed width of the
//! smooth run that follows it. Signs follow the intensity change at the edge
//! that ends the walk; walks that find no edge within `K` (or leave the
//! image) give 0.

use crate::descriptor::Histogram;
use crate::error::{Error, Result};
use crate::image::GrayImage;

/// Scan directions as `(name, dy, dx)`; rows grow downwards.
pub const DIRECTIONS: [(&str, isize, isize); 8] = [
    ("E", 0, 1),
    ("NE", -1, 1),
    ("N", -1, 0),
    ("NW", -1, -1),
    ("W", 0, -1),
    ("SW", 1, -1),
    ("S", 1, 0),
    ("SE", 1, 1),
];

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum ThresholdMode {
    /// `T = sigma / 2` with `sigma` the standard deviation of the whole image.
    #[default]
    GlobalHalfSigma,
    /// `T = sigma / 2` with `sigma` from a square window of the given radius
    /// around the pixel where the step starts.
    LocalHalfSigma(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LriConfig {
    pub range: usize,
    pub threshold: ThresholdMode,
}

impl Default for LriConfig {
    fn default() -> Self {
        Self {
            range: 3,
            threshold: ThresholdMode::GlobalHalfSigma,
        }
    }
}

impl LriConfig {
    pub fn validate(&self) -> Result<()> {
        if self.range < 1 {
            return Err(Error::Config("LRI range K must be >= 1".into()));
        }
        if self.threshold == ThresholdMode::LocalHalfSigma(0) {
            return Err(Error::Config("local sigma window radius must be >= 1".into()));
        }
        Ok(())
    }

    /// Bins per direction: `2K + 1`, for indices `-K..=K`.
    pub fn bins(&self) -> usize {
        2 * self.range + 1
    }

    /// Length of the concatenated LRI-A and LRI-D histograms.
    pub fn descriptor_len(&self) -> usize {
        2 * DIRECTIONS.len() * self.bins()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LriDescriptor {
    pub a_hists: Vec<Histogram>,
    pub d_hists: Vec<Histogram>,
}

impl LriDescriptor {
    pub fn concatenated(&self) -> Vec<f64> {
        self.a_hists
            .iter()
            .chain(&self.d_hists)
            .flat_map(|h| h.bins().iter().copied())
            .collect()
    }
}

/// Per-pixel edge thresholds.
fn thresholds(img: &GrayImage, mode: ThresholdMode) -> Vec<f64> {
    match mode {
        ThresholdMode::GlobalHalfSigma => vec![0.5 * img.std_dev(); img.data().len()],
        ThresholdMode::LocalHalfSigma(radius) => local_half_sigma(img, radius),
    }
}

fn local_half_sigma(img: &GrayImage, radius: usize) -> Vec<f64> {
    let (h, w) = (img.height(), img.width());
    let mut out = Vec::with_capacity(h * w);
    for r in 0..h {
        let (r0, r1) = (r.saturating_sub(radius), (r + radius + 1).min(h));
        for c in 0..w {
            let (c0, c1) = (c.saturating_sub(radius), (c + radius + 1).min(w));
            let n = ((r1 - r0) * (c1 - c0)) as f64;
            let mut sum = 0.0;
            let mut sq = 0.0;
            for rr in r0..r1 {
                for cc in c0..c1 {
                    let v = img.get(rr, cc);
                    sum += v;
                    sq += v * v;
                }
            }
            let mean = sum / n;
            out.push(0.5 * (sq / n - mean * mean).max(0.0).sqrt());
        }
    }
    out
}

/// Walks up to `range` steps along a 1-D profile starting at `start` and
/// returns the signed step count to the first edge, or 0 if none is reached.
///
/// `profile[i]` is the intensity after `i` steps and `threshold[i]` the edge
/// threshold for the step leaving position `i`.
pub fn scan_to_edge(profile: &[f64], threshold: &[f64], start: usize, range: usize) -> isize {
    for k in 1..=range {
        let (a, b) = (start + k - 1, start + k);
        if b >= profile.len() {
            return 0;
        }
        let step = profile[b] - profile[a];
        if step.abs() > threshold[a] {
            return if step > 0.0 { k as isize } else { -(k as isize) };
        }
    }
    0
}

pub fn lri_indices(img: &GrayImage, cfg: &LriConfig) -> Result<LriDescriptor> {
    cfg.validate()?;
    let k = cfg.range;
    let need = 2 * k + 1;
    if img.height() < need || img.width() < need {
        return Err(Error::ImageTooSmall(format!(
            "LRI with K={k} needs at least {need}x{need} pixels, got {}x{}",
            img.height(),
            img.width()
        )));
    }
    let (h, w) = (img.height() as isize, img.width() as isize);
    let thr = thresholds(img, cfg.threshold);
    let ki = k as isize;
    let bins = cfg.bins();

    let mut a_hists = Vec::with_capacity(DIRECTIONS.len());
    let mut d_hists = Vec::with_capacity(DIRECTIONS.len());
    let mut profile = Vec::with_capacity(k + 2);
    let mut profile_thr = Vec::with_capacity(k + 2);
    for &(_, dy, dx) in &DIRECTIONS {
        let mut a_counts = vec![0.0; bins];
        let mut d_counts = vec![0.0; bins];
        for r in ki..h - ki {
            for c in ki..w - ki {
                // profile along the direction, up to K + 1 steps or the border
                profile.clear();
                profile_thr.clear();
                for s in 0..=ki + 1 {
                    let (rr, cc) = (r + s * dy, c + s * dx);
                    if rr < 0 || rr >= h || cc < 0 || cc >= w {
                        break;
                    }
                    let i = (rr * w + cc) as usize;
                    profile.push(img.data()[i]);
                    profile_thr.push(thr[i]);
                }
                let d = scan_to_edge(&profile, &profile_thr, 0, k);
                d_counts[(d + ki) as usize] += 1.0;
                if d == 1 || d == -1 {
                    // edge right after this pixel: width of the run beyond it
                    let a = scan_to_edge(&profile, &profile_thr, 1, k);
                    a_counts[(a + ki) as usize] += 1.0;
                }
            }
        }
        if a_counts.iter().all(|&v| v == 0.0) {
            // no edges along this direction
            a_counts[k] = 1.0;
        }
        a_hists.push(Histogram::from_counts(a_counts)?);
        d_hists.push(Histogram::from_counts(d_counts)?);
    }
    Ok(LriDescriptor { a_hists, d_hists })
}
