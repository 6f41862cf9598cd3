//! Digital curvelet transform by wedge wrapping.
//!
//! The spectrum is tiled into a coarse isotropic disc plus `J` dyadic rings,
//! and ring `j` is cut into `K(j)` angular wedges. Radial and angular windows
//! are raised cosines with a C1 smoothstep argument,
//! `cos(pi/2 * s(t))` with `s(t) = t^2 (3 - 2t)`, and the squared windows sum
//! to one at every frequency sample. Each windowed wedge is wrapped
//! periodically into the smallest rectangle that holds it without aliasing
//! and brought back to space by an inverse FFT of that rectangle.
//!
//! Wedges `l` and `l + K/2` cover opposite directions. Their windows are
//! mirror images sample-for-sample, so for real input the coefficients of the
//! second are the complex conjugates of the first and only half the wedges
//! need an FFT.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fft::{angular_frequency, bin_of, signed_index, Fft2d};
use crate::image::GrayImage;

/// Number of wedge scales for an `h x w` image: `ceil(log2(min(h, w)) - 3)`.
pub fn num_scales(height: usize, width: usize) -> Result<usize> {
    let m = height.min(width);
    if m < 16 {
        return Err(Error::ImageTooSmall(format!(
            "curvelet transform needs min side >= 16, got {height}x{width}"
        )));
    }
    // ceil(log2 m) computed exactly on integers
    let ceil_log2 = (usize::BITS - (m - 1).leading_zeros()) as usize;
    Ok(ceil_log2 - 3)
}

/// Wedges at wedge scale `j >= 1`: `16 * 2^ceil((j - 1) / 2)`.
pub fn num_orientations(j: usize) -> usize {
    assert!(j >= 1, "wedge scales are numbered from 1");
    16 << (j / 2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CurveletConfig {
    /// Replace the wedges of the finest ring by one isotropic band.
    pub finest_as_wavelet: bool,
}

/// Geometry needed to invert a set of coefficients.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CurveletLayout {
    pub height: usize,
    pub width: usize,
    pub scales: usize,
    pub finest_as_wavelet: bool,
    /// `(scale, wedge, rect_height, rect_width)` for every subband, in order.
    pub subbands: Vec<(usize, usize, usize, usize)>,
}

/// One subband. Scale 0 is the coarse isotropic band; scales `1..=J` are rings.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveletSubband {
    pub scale: usize,
    pub wedge: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<Complex64>,
}

impl CurveletSubband {
    pub fn magnitudes(&self) -> impl Iterator<Item = f64> + '_ {
        self.data.iter().map(|c| c.norm())
    }

    pub fn energy(&self) -> f64 {
        self.data.iter().map(|c| c.norm_sqr()).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveletCoeffs {
    pub layout: CurveletLayout,
    pub subbands: Vec<CurveletSubband>,
}

impl CurveletCoeffs {
    pub fn energy(&self) -> f64 {
        self.subbands.iter().map(CurveletSubband::energy).sum()
    }

    /// Number of subbands at each scale, coarse band first.
    pub fn wedges_per_scale(&self) -> Vec<usize> {
        let mut counts = vec![0; self.layout.scales + 1];
        for b in &self.subbands {
            counts[b.scale] += 1;
        }
        counts
    }
}

#[inline]
fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Falls from 1 to 0 as `t` goes from 0 to 1.
#[inline]
fn falling(t: f64) -> f64 {
    (std::f64::consts::FRAC_PI_2 * smoothstep(t)).cos()
}

/// Cumulative lowpass of scale `j` (1-based) at normalized radius `rho`
/// (1 = Nyquist along an axis); transition over `rho` in `[2^(j-J-1), 2^(j-J)]`.
fn cumulative_lowpass(rho: f64, j: usize, scales: usize) -> f64 {
    if j > scales {
        return 1.0;
    }
    if rho == 0.0 {
        return 1.0;
    }
    let t = rho.log2() - (j as f64 - scales as f64 - 1.0);
    falling(t)
}

fn radial_windows(rho: f64, scales: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(scales + 1);
    let mut prev = cumulative_lowpass(rho, 1, scales);
    out.push(prev);
    for j in 1..=scales {
        let next = cumulative_lowpass(rho, j + 1, scales);
        out.push((next * next - prev * prev).max(0.0).sqrt());
        prev = next;
    }
    out
}

/// Squared angular windows at angle `theta`: the (at most two) wedges of a
/// `k`-wedge ring that overlap it.
fn angular_weights(theta: f64, k: usize) -> [(usize, f64); 2] {
    let pos = (theta / (2.0 * std::f64::consts::PI) * k as f64).rem_euclid(k as f64);
    let lo = (pos.floor() as usize).min(k - 1);
    let t = pos - lo as f64;
    let a = falling(t);
    let b = falling(1.0 - t);
    [(lo, a * a), ((lo + 1) % k, b * b)]
}

/// One frequency sample inside a subband's support.
#[derive(Debug, Clone, Copy)]
struct Tap {
    bin: usize,
    rect: usize,
    weight: f64,
}

#[derive(Debug, Clone)]
struct BandPlan {
    scale: usize,
    wedge: usize,
    height: usize,
    width: usize,
    taps: Vec<Tap>,
    /// Index of the subband whose conjugate this one is, when mirrored.
    mirror_of: Option<usize>,
}

/// Precomputed windows and wrapping maps for one image size.
#[derive(Debug, Clone)]
pub struct CurveletPlan {
    height: usize,
    width: usize,
    scales: usize,
    config: CurveletConfig,
    bands: Vec<BandPlan>,
}

struct Sample {
    bin: usize,
    sy: isize,
    sx: isize,
    weight: f64,
}

fn wrap_band(scale: usize, wedge: usize, samples: &[Sample], h: usize, w: usize, along_x: bool) -> BandPlan {
    if samples.is_empty() {
        return BandPlan {
            scale,
            wedge,
            height: 1,
            width: 1,
            taps: Vec::new(),
            mirror_of: None,
        };
    }
    // primary axis: full extent; secondary axis: widest extent over any line
    let key = |s: &Sample| if along_x { (s.sx, s.sy) } else { (s.sy, s.sx) };
    let pmin = samples.iter().map(|s| key(s).0).min().unwrap();
    let pmax = samples.iter().map(|s| key(s).0).max().unwrap();
    let plen = (pmax - pmin + 1) as usize;
    let mut line_min = vec![isize::MAX; plen];
    let mut line_max = vec![isize::MIN; plen];
    for s in samples {
        let (p, q) = key(s);
        let i = (p - pmin) as usize;
        line_min[i] = line_min[i].min(q);
        line_max[i] = line_max[i].max(q);
    }
    let slen = line_min
        .iter()
        .zip(&line_max)
        .filter(|(lo, _)| **lo != isize::MAX)
        .map(|(lo, hi)| (hi - lo + 1) as usize)
        .max()
        .unwrap();
    debug_assert!(if along_x { plen <= w && slen <= h } else { plen <= h && slen <= w });
    let (rh, rw) = if along_x { (slen, plen) } else { (plen, slen) };
    let taps = samples
        .iter()
        .map(|s| Tap {
            bin: s.bin,
            rect: bin_of(s.sy, rh) * rw + bin_of(s.sx, rw),
            weight: s.weight,
        })
        .collect();
    BandPlan {
        scale,
        wedge,
        height: rh,
        width: rw,
        taps,
        mirror_of: None,
    }
}

/// Builds the plan of the wedge mirrored through the origin.
fn mirror_band(src: &BandPlan, src_index: usize, wedge: usize, h: usize, w: usize) -> BandPlan {
    let (rh, rw) = (src.height, src.width);
    let taps = src
        .taps
        .iter()
        .map(|t| {
            let (ky, kx) = (t.bin / w, t.bin % w);
            let (sy, sx) = (signed_index(ky, h), signed_index(kx, w));
            let (ry, rx) = (t.rect / rw, t.rect % rw);
            Tap {
                bin: bin_of(-sy, h) * w + bin_of(-sx, w),
                rect: bin_of(-(ry as isize), rh) * rw + bin_of(-(rx as isize), rw),
                weight: t.weight,
            }
        })
        .collect();
    BandPlan {
        scale: src.scale,
        wedge,
        height: rh,
        width: rw,
        taps,
        mirror_of: Some(src_index),
    }
}

impl CurveletPlan {
    pub fn new(height: usize, width: usize, config: CurveletConfig) -> Result<Self> {
        let scales = num_scales(height, width)?;
        let (h, w) = (height, width);
        let n = h * w;
        let pi = std::f64::consts::PI;

        let mut rho = Vec::with_capacity(n);
        let mut theta = Vec::with_capacity(n);
        let mut coords = Vec::with_capacity(n);
        for ky in 0..h {
            let wy = angular_frequency(ky, h);
            for kx in 0..w {
                let wx = angular_frequency(kx, w);
                rho.push(wx.hypot(wy) / pi);
                theta.push(wy.atan2(wx));
                coords.push((signed_index(ky, h), signed_index(kx, w)));
            }
        }
        let mirror_bin = |i: usize| {
            let (sy, sx) = coords[i];
            bin_of(-sy, h) * w + bin_of(-sx, w)
        };
        let radial: Vec<Vec<f64>> = rho.iter().map(|&r| radial_windows(r, scales)).collect();

        let mut bands = Vec::new();
        let isotropic = |scale: usize| {
            let samples: Vec<Sample> = (0..n)
                .filter(|&i| radial[i][scale] > 0.0)
                .map(|i| Sample {
                    bin: i,
                    sy: coords[i].0,
                    sx: coords[i].1,
                    weight: radial[i][scale],
                })
                .collect();
            wrap_isotropic(scale, &samples, h, w)
        };
        bands.push(isotropic(0));

        for j in 1..=scales {
            if j == scales && config.finest_as_wavelet {
                bands.push(isotropic(j));
                continue;
            }
            let k = num_orientations(j);
            let half = k / 2;
            let mut per_wedge: Vec<Vec<Sample>> = (0..half).map(|_| Vec::new()).collect();
            let mut acc: Vec<(usize, f64)> = Vec::with_capacity(4);
            for i in 0..n {
                let psi = radial[i][j];
                if psi == 0.0 {
                    continue;
                }
                // symmetrized squared window: average of own window and the
                // opposite wedge's window at the mirrored sample
                acc.clear();
                for (l, v) in angular_weights(theta[i], k) {
                    push_weight(&mut acc, l, 0.5 * v);
                }
                for (m, v) in angular_weights(theta[mirror_bin(i)], k) {
                    push_weight(&mut acc, (m + half) % k, 0.5 * v);
                }
                for &(l, v) in &acc {
                    if l < half && v > 0.0 {
                        let (sy, sx) = nyquist_toward(coords[i], 2.0 * pi * l as f64 / k as f64, h, w);
                        per_wedge[l].push(Sample {
                            bin: i,
                            sy,
                            sx,
                            weight: psi * v.sqrt(),
                        });
                    }
                }
            }
            let first = bands.len();
            for (l, samples) in per_wedge.iter().enumerate() {
                let centre = 2.0 * pi * l as f64 / k as f64;
                let along_x = centre.cos().abs() >= centre.sin().abs();
                bands.push(wrap_band(j, l, samples, h, w, along_x));
            }
            for l in 0..half {
                let m = mirror_band(&bands[first + l], first + l, l + half, h, w);
                bands.push(m);
            }
        }

        Ok(Self {
            height,
            width,
            scales,
            config,
            bands,
        })
    }

    pub fn scales(&self) -> usize {
        self.scales
    }

    pub fn layout(&self) -> CurveletLayout {
        CurveletLayout {
            height: self.height,
            width: self.width,
            scales: self.scales,
            finest_as_wavelet: self.config.finest_as_wavelet,
            subbands: self
                .bands
                .iter()
                .map(|b| (b.scale, b.wedge, b.height, b.width))
                .collect(),
        }
    }

    /// Sum of squared windows at every frequency sample (row-major).
    pub fn window_energy(&self) -> Vec<f64> {
        let mut sum = vec![0.0; self.height * self.width];
        for b in &self.bands {
            for t in &b.taps {
                sum[t.bin] += t.weight * t.weight;
            }
        }
        sum
    }

    fn check_image(&self, img: &GrayImage) -> Result<()> {
        if (img.height(), img.width()) != (self.height, self.width) {
            return Err(Error::ShapeMismatch(format!(
                "plan is for {}x{}, image is {}x{}",
                self.height,
                self.width,
                img.height(),
                img.width()
            )));
        }
        Ok(())
    }

    fn band_coefficients(&self, band: &BandPlan, spectrum: &[Complex64]) -> Vec<Complex64> {
        let len = band.height * band.width;
        let mut rect = vec![Complex64::default(); len];
        for t in &band.taps {
            rect[t.rect] = spectrum[t.bin] * t.weight;
        }
        Fft2d::new(band.height, band.width).inverse(&mut rect);
        let gain = (len as f64 / (self.height * self.width) as f64).sqrt();
        rect.iter_mut().for_each(|v| *v *= gain);
        rect
    }

    /// Forward transform computing every wedge by its own inverse FFT.
    pub fn forward_full_plane(&self, img: &GrayImage) -> Result<CurveletCoeffs> {
        self.check_image(img)?;
        let spectrum = crate::fft::forward_real(self.height, self.width, img.data());
        let data: Vec<Vec<Complex64>> = self
            .bands
            .par_iter()
            .map(|b| self.band_coefficients(b, &spectrum))
            .collect();
        Ok(self.assemble(data))
    }

    /// Forward transform for real input: mirrored wedges are conjugated copies.
    pub fn forward(&self, img: &GrayImage) -> Result<CurveletCoeffs> {
        self.check_image(img)?;
        let spectrum = crate::fft::forward_real(self.height, self.width, img.data());
        let mut data: Vec<Vec<Complex64>> = self
            .bands
            .par_iter()
            .map(|b| match b.mirror_of {
                Some(_) => Vec::new(),
                None => self.band_coefficients(b, &spectrum),
            })
            .collect();
        for i in 0..self.bands.len() {
            if let Some(src) = self.bands[i].mirror_of {
                data[i] = data[src].iter().map(|c| c.conj()).collect();
            }
        }
        Ok(self.assemble(data))
    }

    /// Subbands that are not conjugate mirrors of another subband, in order.
    ///
    /// For real input these carry every coefficient magnitude exactly once.
    pub fn forward_distinct(&self, img: &GrayImage) -> Result<Vec<CurveletSubband>> {
        self.check_image(img)?;
        let spectrum = crate::fft::forward_real(self.height, self.width, img.data());
        Ok(self
            .bands
            .par_iter()
            .filter(|b| b.mirror_of.is_none())
            .map(|b| CurveletSubband {
                scale: b.scale,
                wedge: b.wedge,
                height: b.height,
                width: b.width,
                data: self.band_coefficients(b, &spectrum),
            })
            .collect())
    }

    fn assemble(&self, data: Vec<Vec<Complex64>>) -> CurveletCoeffs {
        let subbands = self
            .bands
            .iter()
            .zip(data)
            .map(|(b, d)| CurveletSubband {
                scale: b.scale,
                wedge: b.wedge,
                height: b.height,
                width: b.width,
                data: d,
            })
            .collect();
        CurveletCoeffs {
            layout: self.layout(),
            subbands,
        }
    }

    pub fn inverse(&self, coeffs: &CurveletCoeffs) -> Result<GrayImage> {
        if coeffs.layout != self.layout() || coeffs.subbands.len() != self.bands.len() {
            return Err(Error::ShapeMismatch(
                "curvelet coefficients do not match the transform layout".into(),
            ));
        }
        let n = self.height * self.width;
        let contributions: Vec<Vec<(usize, Complex64)>> = self
            .bands
            .par_iter()
            .zip(&coeffs.subbands)
            .map(|(b, sb)| {
                let len = b.height * b.width;
                if sb.data.len() != len || (sb.height, sb.width) != (b.height, b.width) {
                    return Err(Error::ShapeMismatch(format!(
                        "subband ({}, {}) should hold {}x{} coefficients",
                        b.scale, b.wedge, b.height, b.width
                    )));
                }
                let mut rect = sb.data.clone();
                Fft2d::new(b.height, b.width).forward(&mut rect);
                let gain = ((self.height * self.width) as f64 / len as f64).sqrt();
                Ok(b.taps
                    .iter()
                    .map(|t| (t.bin, rect[t.rect] * (t.weight * gain)))
                    .collect())
            })
            .collect::<Result<_>>()?;
        let mut spectrum = vec![Complex64::default(); n];
        // fixed summation order keeps the result independent of scheduling
        for band in contributions {
            for (bin, v) in band {
                spectrum[bin] += v;
            }
        }
        Fft2d::new(self.height, self.width).inverse(&mut spectrum);
        GrayImage::new(self.height, self.width, spectrum.into_iter().map(|v| v.re).collect())
    }
}

/// Nyquist samples are both `+pi` and `-pi`; pick the sign facing the wedge
/// centre so its support stays compact.
fn nyquist_toward((sy, sx): (isize, isize), centre: f64, h: usize, w: usize) -> (isize, isize) {
    let sy = if h.is_multiple_of(2) && sy == -(h as isize) / 2 && centre.sin() > 0.0 { -sy } else { sy };
    let sx = if w.is_multiple_of(2) && sx == -(w as isize) / 2 && centre.cos() > 0.0 { -sx } else { sx };
    (sy, sx)
}

fn push_weight(acc: &mut Vec<(usize, f64)>, wedge: usize, v: f64) {
    match acc.iter_mut().find(|(l, _)| *l == wedge) {
        Some(e) => e.1 += v,
        None => acc.push((wedge, v)),
    }
}

/// Isotropic bands wrap into their bounding box.
fn wrap_isotropic(scale: usize, samples: &[Sample], h: usize, w: usize) -> BandPlan {
    let ext = |f: &dyn Fn(&Sample) -> isize, cap: usize| {
        let lo = samples.iter().map(f).min().unwrap_or(0);
        let hi = samples.iter().map(f).max().unwrap_or(0);
        ((hi - lo + 1) as usize).min(cap)
    };
    let rh = ext(&|s| s.sy, h);
    let rw = ext(&|s| s.sx, w);
    let taps = samples
        .iter()
        .map(|s| Tap {
            bin: s.bin,
            rect: bin_of(s.sy, rh) * rw + bin_of(s.sx, rw),
            weight: s.weight,
        })
        .collect();
    BandPlan {
        scale,
        wedge: 0,
        height: rh,
        width: rw,
        taps,
        mirror_of: None,
    }
}

pub fn forward(img: &GrayImage, config: CurveletConfig) -> Result<CurveletCoeffs> {
    CurveletPlan::new(img.height(), img.width(), config)?.forward(img)
}

pub fn inverse(coeffs: &CurveletCoeffs) -> Result<GrayImage> {
    let layout = &coeffs.layout;
    let config = CurveletConfig {
        finest_as_wavelet: layout.finest_as_wavelet,
    };
    CurveletPlan::new(layout.height, layout.width, config)?.inverse(coeffs)
}
