//! Completed local binary patterns (sign, magnitude and centre components).

use crate::descriptor::Histogram;
use crate::error::{Error, Result};
use crate::image::GrayImage;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClbpConfig {
    pub neighbors: usize,
    pub radius: f64,
}

impl Default for ClbpConfig {
    fn default() -> Self {
        Self {
            neighbors: 20,
            radius: 3.0,
        }
    }
}

impl ClbpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(4..=63).contains(&self.neighbors) {
            return Err(Error::Config(format!(
                "CLBP needs 4..=63 neighbors, got {}",
                self.neighbors
            )));
        }
        if !self.radius.is_finite() || self.radius < 1.0 {
            return Err(Error::Config(format!("CLBP radius must be >= 1, got {}", self.radius)));
        }
        Ok(())
    }

    /// Border width excluded on every side.
    pub fn margin(&self) -> usize {
        self.radius.ceil() as usize
    }

    /// Number of rotation-invariant uniform classes: `P + 2`.
    pub fn riu2_bins(&self) -> usize {
        self.neighbors + 2
    }

    /// Length of the concatenated S, M and C histograms: `2P + 6`.
    pub fn descriptor_len(&self) -> usize {
        2 * self.riu2_bins() + 2
    }

    /// Neighbor offsets `(dy, dx)`, counter-clockwise from the east.
    ///
    /// Offsets are rounded to 1e-9 so that exact grid positions (such as the
    /// four axis points) are not perturbed by trigonometric round-off.
    pub fn offsets(&self) -> Vec<(f64, f64)> {
        let p = self.neighbors as f64;
        let round = |v: f64| (v * 1e9).round() / 1e9;
        (0..self.neighbors)
            .map(|i| {
                let a = 2.0 * std::f64::consts::PI * i as f64 / p;
                (round(-self.radius * a.sin()), round(self.radius * a.cos()))
            })
            .collect()
    }
}

/// Per-pixel codes over the interior where the full ring fits.
#[derive(Debug, Clone, PartialEq)]
pub struct ClbpMaps {
    pub height: usize,
    pub width: usize,
    pub neighbors: usize,
    pub c_map: Vec<bool>,
    pub s_map: Vec<u64>,
    pub m_map: Vec<u64>,
}

/// Bilinear interpolation at fractional position `(y, x)` inside the image.
pub fn bilinear(img: &GrayImage, y: f64, x: f64) -> f64 {
    let (h, w) = (img.height(), img.width());
    let y0 = (y.floor() as usize).min(h - 1);
    let x0 = (x.floor() as usize).min(w - 1);
    let fy = y - y0 as f64;
    let fx = x - x0 as f64;
    let y1 = (y0 + 1).min(h - 1);
    let x1 = (x0 + 1).min(w - 1);
    let top = img.get(y0, x0) * (1.0 - fx) + img.get(y0, x1) * fx;
    let bottom = img.get(y1, x0) * (1.0 - fx) + img.get(y1, x1) * fx;
    top * (1.0 - fy) + bottom * fy
}

pub fn clbp_codes(img: &GrayImage, cfg: &ClbpConfig) -> Result<ClbpMaps> {
    cfg.validate()?;
    let margin = cfg.margin();
    let need = 2 * margin + 1;
    if img.height() < need || img.width() < need {
        return Err(Error::ImageTooSmall(format!(
            "CLBP with radius {} needs at least {need}x{need} pixels, got {}x{}",
            cfg.radius,
            img.height(),
            img.width()
        )));
    }
    let (vh, vw) = (img.height() - 2 * margin, img.width() - 2 * margin);
    let offsets = cfg.offsets();
    let p = cfg.neighbors;

    // signed differences I_c - I_p for every interior pixel and neighbor
    let mut diffs = Vec::with_capacity(vh * vw * p);
    let mut centers = Vec::with_capacity(vh * vw);
    for r in 0..vh {
        for c in 0..vw {
            let (yc, xc) = (r + margin, c + margin);
            let center = img.get(yc, xc);
            centers.push(center);
            for &(dy, dx) in &offsets {
                let v = bilinear(img, yc as f64 + dy, xc as f64 + dx);
                diffs.push(center - v);
            }
        }
    }
    let m_threshold = diffs.iter().map(|d| d.abs()).sum::<f64>() / diffs.len() as f64;
    let c_threshold = img.mean();

    let mut s_map = Vec::with_capacity(vh * vw);
    let mut m_map = Vec::with_capacity(vh * vw);
    for pixel in diffs.chunks_exact(p) {
        let mut s = 0u64;
        let mut m = 0u64;
        for (bit, &d) in pixel.iter().enumerate() {
            if d >= 0.0 {
                s |= 1 << bit;
            }
            // ties with the threshold count as 1; zero differences never do
            if d != 0.0 && d.abs() >= m_threshold {
                m |= 1 << bit;
            }
        }
        s_map.push(s);
        m_map.push(m);
    }
    let c_map = centers.iter().map(|&v| v >= c_threshold).collect();
    Ok(ClbpMaps {
        height: vh,
        width: vw,
        neighbors: p,
        c_map,
        s_map,
        m_map,
    })
}

/// Circular 0/1 transitions of a `p`-bit code.
pub fn transitions(code: u64, p: usize) -> u32 {
    let mask = if p == 64 { u64::MAX } else { (1u64 << p) - 1 };
    let code = code & mask;
    let rotated = ((code >> 1) | ((code & 1) << (p - 1))) & mask;
    (code ^ rotated).count_ones()
}

/// Rotation-invariant uniform class: the number of ones for codes with at
/// most two transitions, `p + 1` otherwise.
pub fn riu2(code: u64, p: usize) -> usize {
    if transitions(code, p) <= 2 {
        code.count_ones() as usize
    } else {
        p + 1
    }
}

/// Normalized S, M and C histograms of one image.
#[derive(Debug, Clone, PartialEq)]
pub struct ClbpHistogram {
    pub s: Histogram,
    pub m: Histogram,
    pub c: Histogram,
}

impl ClbpHistogram {
    /// S, M and C bins concatenated (`2P + 6` values).
    pub fn concatenated(&self) -> Vec<f64> {
        let mut v = self.s.bins().to_vec();
        v.extend_from_slice(self.m.bins());
        v.extend_from_slice(self.c.bins());
        v
    }
}

pub fn clbp_histogram(maps: &ClbpMaps, cfg: &ClbpConfig) -> Result<ClbpHistogram> {
    let p = cfg.neighbors;
    if maps.neighbors != p {
        return Err(Error::Config(format!(
            "maps were computed with P={}, config has P={p}",
            maps.neighbors
        )));
    }
    let mut s = vec![0.0; p + 2];
    let mut m = vec![0.0; p + 2];
    let mut c = vec![0.0; 2];
    for &code in &maps.s_map {
        s[riu2(code, p)] += 1.0;
    }
    for &code in &maps.m_map {
        m[riu2(code, p)] += 1.0;
    }
    for &bit in &maps.c_map {
        c[usize::from(bit)] += 1.0;
    }
    Ok(ClbpHistogram {
        s: Histogram::from_counts(s)?,
        m: Histogram::from_counts(m)?,
        c: Histogram::from_counts(c)?,
    })
}

pub fn clbp_descriptor(img: &GrayImage, cfg: &ClbpConfig) -> Result<ClbpHistogram> {
    clbp_histogram(&clbp_codes(img, cfg)?, cfg)
}
