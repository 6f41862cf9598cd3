//! SeiSIM: structural texture similarity (STSIM-1) over steerable-pyramid
//! subbands combined with a discontinuity-map similarity.
//!
//! Unlike the histogram methods, SeiSIM compares simple statistics
//! directly. Per subband:
//!
//! - `l = (2 mu_x mu_y + C0) / (mu_x^2 + mu_y^2 + C0)`, clamped at 0
//! - `c = (2 s_x s_y + C1) / (s_x^2 + s_y^2 + C1)`
//! - `a_h = 1 - |rho_h(x) - rho_h(y)| / 2`, `a_v` likewise
//!
//! and `Q = (l c a_h a_v)^(1/4)`, averaged over subbands. The discontinuity
//! map is one minus the normalized correlation of neighbouring traces over a
//! 5-sample window; two maps are compared through their first-lag
//! autocorrelations as `sqrt(a_h a_v)`. SeiSIM is the geometric mean of the
//! two scores.

use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::steerable::{build_pyramid, SteerableConfig};

/// Height of the trace windows used by the discontinuity map.
pub const DM_WINDOW: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeisimConfig {
    pub pyramid: SteerableConfig,
    /// Include the highpass and lowpass residuals in the STSIM-1 average.
    pub include_residuals: bool,
    pub c0: f64,
    pub c1: f64,
}

impl Default for SeisimConfig {
    fn default() -> Self {
        Self {
            pyramid: SteerableConfig::default(),
            include_residuals: true,
            c0: 1e-4,
            c1: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubbandStats {
    pub mean: f64,
    pub variance: f64,
    pub rho_h: f64,
    pub rho_v: f64,
}

/// Pearson correlation of paired samples; 0 when either side is constant.
fn pearson(pairs: impl Iterator<Item = (f64, f64)> + Clone) -> f64 {
    let mut n = 0.0;
    let (mut sa, mut sb) = (0.0, 0.0);
    for (a, b) in pairs.clone() {
        n += 1.0;
        sa += a;
        sb += b;
    }
    let (ma, mb) = (sa / n, sb / n);
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (a, b) in pairs {
        let (da, db) = (a - ma, b - mb);
        cov += da * db;
        va += da * da;
        vb += db * db;
    }
    if va == 0.0 || vb == 0.0 {
        return 0.0;
    }
    (cov / (va * vb).sqrt()).clamp(-1.0, 1.0)
}

/// First-lag autocorrelations `(horizontal, vertical)` of a raster.
fn lag_one_correlations(img: &GrayImage) -> (f64, f64) {
    let (h, w) = (img.height(), img.width());
    let horizontal = (0..h).flat_map(|r| (0..w - 1).map(move |c| (r, c)));
    let rho_h = pearson(horizontal.map(|(r, c)| (img.get(r, c), img.get(r, c + 1))));
    let vertical = (0..h - 1).flat_map(|r| (0..w).map(move |c| (r, c)));
    let rho_v = pearson(vertical.map(|(r, c)| (img.get(r, c), img.get(r + 1, c))));
    (rho_h, rho_v)
}

pub fn subband_stats(band: &GrayImage) -> Result<SubbandStats> {
    if band.height() < 2 || band.width() < 2 {
        return Err(Error::ImageTooSmall(format!(
            "subband statistics need at least 2x2 samples, got {}x{}",
            band.height(),
            band.width()
        )));
    }
    let mean = band.mean();
    let variance = band.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / band.data().len() as f64;
    let (rho_h, rho_v) = if variance == 0.0 {
        (0.0, 0.0)
    } else {
        lag_one_correlations(band)
    };
    Ok(SubbandStats {
        mean,
        variance,
        rho_h,
        rho_v,
    })
}

#[inline]
fn autocorrelation_term(a: f64, b: f64) -> f64 {
    (1.0 - (a - b).abs() / 2.0).clamp(0.0, 1.0)
}

pub fn stsim1_pair(x: &SubbandStats, y: &SubbandStats, cfg: &SeisimConfig) -> f64 {
    let l = (2.0 * x.mean * y.mean + cfg.c0) / (x.mean * x.mean + y.mean * y.mean + cfg.c0);
    let (sx, sy) = (x.variance.sqrt(), y.variance.sqrt());
    let c = (2.0 * sx * sy + cfg.c1) / (x.variance + y.variance + cfg.c1);
    let a_h = autocorrelation_term(x.rho_h, y.rho_h);
    let a_v = autocorrelation_term(x.rho_v, y.rho_v);
    let terms = l.clamp(0.0, 1.0) * c.clamp(0.0, 1.0) * a_h * a_v;
    terms.sqrt().sqrt()
}

/// Statistics of every pyramid subband used by STSIM-1.
pub fn pyramid_stats(img: &GrayImage, cfg: &SeisimConfig) -> Result<Vec<SubbandStats>> {
    let pyr = build_pyramid(img, &cfg.pyramid)?;
    let bands: Vec<&GrayImage> = if cfg.include_residuals {
        pyr.subbands()
    } else {
        pyr.bands.iter().flatten().collect()
    };
    bands.into_iter().map(subband_stats).collect()
}

fn stsim1_from_stats(a: &[SubbandStats], b: &[SubbandStats], cfg: &SeisimConfig) -> f64 {
    let total: f64 = a.iter().zip(b).map(|(x, y)| stsim1_pair(x, y, cfg)).sum();
    total / a.len() as f64
}

fn check_dims(a: &GrayImage, b: &GrayImage) -> Result<()> {
    if (a.height(), a.width()) != (b.height(), b.width()) {
        return Err(Error::ShapeMismatch(format!(
            "{}x{} vs {}x{}",
            a.height(),
            a.width(),
            b.height(),
            b.width()
        )));
    }
    Ok(())
}

pub fn stsim1_image(a: &GrayImage, b: &GrayImage, cfg: &SeisimConfig) -> Result<f64> {
    check_dims(a, b)?;
    Ok(stsim1_from_stats(&pyramid_stats(a, cfg)?, &pyramid_stats(b, cfg)?, cfg))
}

/// Lateral discontinuity strength in [0, 1] on the `(H - 4) x (W - 2)` grid
/// of pixels whose two neighbouring trace windows fit in the image.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscontinuityMap {
    pub map: GrayImage,
}

fn window_correlation(img: &GrayImage, top: usize, left: usize, right: usize) -> f64 {
    let pairs = (top..top + DM_WINDOW).map(|r| (img.get(r, left), img.get(r, right)));
    let (mut sa, mut sb) = (0.0, 0.0);
    for (a, b) in pairs.clone() {
        sa += a;
        sb += b;
    }
    let n = DM_WINDOW as f64;
    let (ma, mb) = (sa / n, sb / n);
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (a, b) in pairs {
        cov += (a - ma) * (b - mb);
        va += (a - ma) * (a - ma);
        vb += (b - mb) * (b - mb);
    }
    match (va == 0.0, vb == 0.0) {
        // two flat windows: continuous only if they carry the same value
        (true, true) => {
            if ma == mb {
                1.0
            } else {
                0.0
            }
        }
        (true, false) | (false, true) => 0.0,
        _ => (cov / (va * vb).sqrt()).clamp(-1.0, 1.0),
    }
}

pub fn discontinuity_map(img: &GrayImage) -> Result<DiscontinuityMap> {
    img.require_min_size(DM_WINDOW, "discontinuity map")?;
    let half = DM_WINDOW / 2;
    let (mh, mw) = (img.height() - 2 * half, img.width() - 2);
    let map = GrayImage::from_fn(mh, mw, |r, c| {
        let ncc = window_correlation(img, r, c, c + 2);
        (1.0 - ncc).clamp(0.0, 1.0)
    });
    Ok(DiscontinuityMap { map })
}

/// First-lag autocorrelations of a discontinuity map.
pub fn dm_autocorrelations(dm: &DiscontinuityMap) -> (f64, f64) {
    let var = dm.map.std_dev();
    if var == 0.0 {
        return (0.0, 0.0);
    }
    lag_one_correlations(&dm.map)
}

fn dm_similarity_from(a: (f64, f64), b: (f64, f64)) -> f64 {
    (autocorrelation_term(a.0, b.0) * autocorrelation_term(a.1, b.1)).sqrt()
}

pub fn dm_similarity(d1: &DiscontinuityMap, d2: &DiscontinuityMap) -> Result<f64> {
    check_dims(&d1.map, &d2.map)?;
    Ok(dm_similarity_from(dm_autocorrelations(d1), dm_autocorrelations(d2)))
}

/// Everything SeiSIM needs from one image, computed once.
#[derive(Debug, Clone, PartialEq)]
pub struct SeisimFeatures {
    pub height: usize,
    pub width: usize,
    pub subbands: Vec<SubbandStats>,
    pub dm_rho: (f64, f64),
}

impl SeisimFeatures {
    pub fn extract(img: &GrayImage, cfg: &SeisimConfig) -> Result<Self> {
        Ok(Self {
            height: img.height(),
            width: img.width(),
            subbands: pyramid_stats(img, cfg)?,
            dm_rho: dm_autocorrelations(&discontinuity_map(img)?),
        })
    }

    pub fn similarity(&self, other: &SeisimFeatures, cfg: &SeisimConfig) -> Result<f64> {
        if (self.height, self.width) != (other.height, other.width) {
            return Err(Error::ShapeMismatch(format!(
                "{}x{} vs {}x{}",
                self.height, self.width, other.height, other.width
            )));
        }
        let q_stsim = stsim1_from_stats(&self.subbands, &other.subbands, cfg);
        let q_dm = dm_similarity_from(self.dm_rho, other.dm_rho);
        Ok(combine(q_stsim, q_dm))
    }
}

/// Geometric mean of the texture and discontinuity scores.
pub fn combine(q_stsim: f64, q_dm: f64) -> f64 {
    (q_stsim * q_dm).sqrt()
}

pub fn seisim(a: &GrayImage, b: &GrayImage, cfg: &SeisimConfig) -> Result<f64> {
    check_dims(a, b)?;
    SeisimFeatures::extract(a, cfg)?.similarity(&SeisimFeatures::extract(b, cfg)?, cfg)
}
