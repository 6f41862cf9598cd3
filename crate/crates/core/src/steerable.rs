//! Frequency-domain steerable pyramid.
//!
//! The image spectrum is split into a highpass residual and a lowpass part
//! with raised-cosine radial windows. Each level then separates an octave
//! bandpass ring into `N` oriented subbands using angular windows
//! `c * |cos(theta - pi k / N)|^(N-1)` and passes the remaining lowpass on,
//! subsampled by two, to the next level. All windows are real and even, so
//! every subband is real, and the squared windows sum to one at every
//! frequency: the decomposition is a tight frame and reconstruction uses the
//! same windows. Boundaries are periodic (no padding).

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft::{angular_frequency, bin_of, signed_index, Fft2d};
use crate::image::GrayImage;

/// Scale and orientation counts of the pyramid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SteerableConfig {
    pub scales: usize,
    pub orientations: usize,
}

impl Default for SteerableConfig {
    fn default() -> Self {
        Self {
            scales: 4,
            orientations: 8,
        }
    }
}

impl SteerableConfig {
    pub fn validate(&self) -> Result<()> {
        if self.scales < 1 {
            return Err(Error::Config("steerable pyramid needs at least 1 scale".into()));
        }
        if self.orientations < 2 {
            return Err(Error::Config(
                "steerable pyramid needs at least 2 orientations".into(),
            ));
        }
        Ok(())
    }

    /// Highpass + lowpass residuals plus `K * N` oriented bands.
    pub fn subband_count(&self) -> usize {
        self.scales * self.orientations + 2
    }

    /// Smallest image side that leaves at least 8 pixels at the coarsest scale.
    pub fn min_side(&self) -> usize {
        8 << (self.scales - 1)
    }

    /// Squared gain of an oriented band at its own peak direction.
    ///
    /// Equals `4^(N-1) / (N * C(2N-2, N-1))`, the constant that makes the
    /// squared angular windows sum to one.
    pub fn angular_peak_gain(&self) -> f64 {
        let n = self.orientations;
        let order = n - 1;
        // 4^order / C(2 order, order), accumulated as a product to stay finite
        let mut ratio = 1.0;
        for i in 1..=order {
            ratio *= 4.0 * i as f64 / (order + i) as f64;
        }
        ratio / n as f64
    }
}

/// Subbands of one decomposition.
///
/// `bands[s][k]` is orientation `k` at scale `s` (0 = finest). Scale `s` has
/// dimensions `ceil(H / 2^s) x ceil(W / 2^s)`; the lowpass residual is one
/// further halving below the coarsest scale.
#[derive(Debug, Clone, PartialEq)]
pub struct PyramidDecomposition {
    pub highpass: GrayImage,
    pub bands: Vec<Vec<GrayImage>>,
    pub lowpass: GrayImage,
}

impl PyramidDecomposition {
    /// All subbands in order: highpass, bands scale-major, lowpass.
    pub fn subbands(&self) -> Vec<&GrayImage> {
        let mut out = Vec::with_capacity(self.subband_count());
        out.push(&self.highpass);
        out.extend(self.bands.iter().flatten());
        out.push(&self.lowpass);
        out
    }

    /// Names matching the order of [`subbands`](Self::subbands).
    pub fn subband_names(&self) -> Vec<String> {
        let mut names = vec!["hp".to_string()];
        for (s, scale) in self.bands.iter().enumerate() {
            for k in 0..scale.len() {
                names.push(format!("s{}o{}", s + 1, k));
            }
        }
        names.push("lp".into());
        names
    }

    pub fn subband_count(&self) -> usize {
        2 + self.bands.iter().map(Vec::len).sum::<usize>()
    }
}

/// Raised-cosine step rising from 0 at `log_r <= start` to 1 at `log_r >= start + 1`.
#[inline]
fn radial_high(log_r: f64, start: f64) -> f64 {
    let t = (log_r - start).clamp(0.0, 1.0);
    (std::f64::consts::FRAC_PI_2 * (1.0 - t)).cos()
}

/// Complement of [`radial_high`]: `high^2 + low^2 = 1`.
#[inline]
fn radial_low(log_r: f64, start: f64) -> f64 {
    let t = (log_r - start).clamp(0.0, 1.0);
    (std::f64::consts::FRAC_PI_2 * t).cos()
}

/// Polar coordinates of every DFT bin: (log2 of radius / pi, angle).
fn polar_grid(h: usize, w: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(h * w);
    for ky in 0..h {
        let wy = angular_frequency(ky, h);
        for kx in 0..w {
            let wx = angular_frequency(kx, w);
            let r = wx.hypot(wy) / std::f64::consts::PI;
            out.push((r.log2(), wy.atan2(wx)));
        }
    }
    out
}

struct LevelWindows {
    /// Bandpass radial window times angular window, one per orientation.
    oriented: Vec<Vec<f64>>,
    lowpass: Vec<f64>,
}

fn level_windows(h: usize, w: usize, cfg: &SteerableConfig) -> LevelWindows {
    let n = cfg.orientations;
    let gain = cfg.angular_peak_gain().sqrt();
    let order = (n - 1) as i32;
    let polar = polar_grid(h, w);
    let mut oriented = vec![vec![0.0; h * w]; n];
    let mut lowpass = vec![0.0; h * w];
    for (i, &(lr, theta)) in polar.iter().enumerate() {
        let band = radial_high(lr, -2.0);
        lowpass[i] = radial_low(lr, -2.0);
        if band == 0.0 {
            continue;
        }
        for (k, win) in oriented.iter_mut().enumerate() {
            let offset = theta - std::f64::consts::PI * k as f64 / n as f64;
            win[i] = band * gain * offset.cos().abs().powi(order);
        }
    }
    LevelWindows { oriented, lowpass }
}

fn real_part(h: usize, w: usize, mut spec: Vec<Complex64>, plan: &Fft2d) -> GrayImage {
    plan.inverse(&mut spec);
    GrayImage::new(h, w, spec.into_iter().map(|v| v.re).collect())
        .expect("inverse FFT of a finite spectrum is finite")
}

fn to_spectrum(img: &GrayImage, plan: &Fft2d) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = img.data().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    plan.forward(&mut buf);
    buf
}

/// Crops a spectrum to a smaller grid, keeping signed frequencies and
/// preserving sample amplitudes.
fn crop_spectrum(spec: &[Complex64], h: usize, w: usize, nh: usize, nw: usize) -> Vec<Complex64> {
    let scale = (nh * nw) as f64 / (h * w) as f64;
    let mut out = vec![Complex64::default(); nh * nw];
    for ky in 0..nh {
        let sy = bin_of(signed_index(ky, nh), h);
        for kx in 0..nw {
            let sx = bin_of(signed_index(kx, nw), w);
            out[ky * nw + kx] = spec[sy * w + sx] * scale;
        }
    }
    out
}

/// Inverse of [`crop_spectrum`]: zero-pads a spectrum onto a larger grid.
fn pad_spectrum(spec: &[Complex64], nh: usize, nw: usize, h: usize, w: usize) -> Vec<Complex64> {
    let scale = (h * w) as f64 / (nh * nw) as f64;
    let mut out = vec![Complex64::default(); h * w];
    for ky in 0..nh {
        let sy = bin_of(signed_index(ky, nh), h);
        for kx in 0..nw {
            let sx = bin_of(signed_index(kx, nw), w);
            out[sy * w + sx] = spec[ky * nw + kx] * scale;
        }
    }
    out
}

/// Grid dimensions of scale `s` (0-based), each halving rounded up.
pub fn scale_dims(height: usize, width: usize, s: usize) -> (usize, usize) {
    let mut dims = (height, width);
    for _ in 0..s {
        dims = (dims.0.div_ceil(2), dims.1.div_ceil(2));
    }
    dims
}

pub fn build_pyramid(img: &GrayImage, cfg: &SteerableConfig) -> Result<PyramidDecomposition> {
    cfg.validate()?;
    let (h0, w0) = (img.height(), img.width());
    let room = h0.min(w0) as f64 / (1u64 << (cfg.scales - 1)) as f64;
    if room < 8.0 {
        return Err(Error::ImageTooSmall(format!(
            "{h0}x{w0} image cannot hold {} pyramid scales (needs min side >= {})",
            cfg.scales,
            cfg.min_side()
        )));
    }

    let plan = Fft2d::new(h0, w0);
    let spectrum = to_spectrum(img, &plan);
    let polar = polar_grid(h0, w0);

    let mut hp_spec = spectrum.clone();
    let mut current = spectrum;
    for (i, &(lr, _)) in polar.iter().enumerate() {
        hp_spec[i] *= radial_high(lr, -1.0);
        current[i] *= radial_low(lr, -1.0);
    }
    let highpass = real_part(h0, w0, hp_spec, &plan);

    let mut bands = Vec::with_capacity(cfg.scales);
    let (mut h, mut w) = (h0, w0);
    for _ in 0..cfg.scales {
        let plan = Fft2d::new(h, w);
        let windows = level_windows(h, w, cfg);
        let mut scale_bands = Vec::with_capacity(cfg.orientations);
        for win in &windows.oriented {
            let spec: Vec<Complex64> = current.iter().zip(win).map(|(v, &g)| v * g).collect();
            scale_bands.push(real_part(h, w, spec, &plan));
        }
        bands.push(scale_bands);
        for (v, &g) in current.iter_mut().zip(&windows.lowpass) {
            *v *= g;
        }
        let (nh, nw) = (h.div_ceil(2), w.div_ceil(2));
        current = crop_spectrum(&current, h, w, nh, nw);
        (h, w) = (nh, nw);
    }
    let lowpass = real_part(h, w, current, &Fft2d::new(h, w));

    Ok(PyramidDecomposition {
        highpass,
        bands,
        lowpass,
    })
}

pub fn reconstruct(pyr: &PyramidDecomposition, cfg: &SteerableConfig) -> Result<GrayImage> {
    cfg.validate()?;
    let (h0, w0) = (pyr.highpass.height(), pyr.highpass.width());
    if pyr.bands.len() != cfg.scales {
        return Err(Error::ShapeMismatch(format!(
            "pyramid has {} scales, config expects {}",
            pyr.bands.len(),
            cfg.scales
        )));
    }
    for (s, scale) in pyr.bands.iter().enumerate() {
        let dims = scale_dims(h0, w0, s);
        if scale.len() != cfg.orientations {
            return Err(Error::ShapeMismatch(format!(
                "scale {} has {} orientations, config expects {}",
                s + 1,
                scale.len(),
                cfg.orientations
            )));
        }
        if scale.iter().any(|b| (b.height(), b.width()) != dims) {
            return Err(Error::ShapeMismatch(format!(
                "scale {} bands must be {}x{}",
                s + 1,
                dims.0,
                dims.1
            )));
        }
    }
    let (lh, lw) = scale_dims(h0, w0, cfg.scales);
    if (pyr.lowpass.height(), pyr.lowpass.width()) != (lh, lw) {
        return Err(Error::ShapeMismatch(format!("lowpass must be {lh}x{lw}")));
    }

    let mut current = to_spectrum(&pyr.lowpass, &Fft2d::new(lh, lw));
    let (mut ch, mut cw) = (lh, lw);
    for s in (0..cfg.scales).rev() {
        let (h, w) = scale_dims(h0, w0, s);
        let plan = Fft2d::new(h, w);
        let windows = level_windows(h, w, cfg);
        let mut acc = pad_spectrum(&current, ch, cw, h, w);
        for (v, &g) in acc.iter_mut().zip(&windows.lowpass) {
            *v *= g;
        }
        for (band, win) in pyr.bands[s].iter().zip(&windows.oriented) {
            let spec = to_spectrum(band, &plan);
            for ((a, b), &g) in acc.iter_mut().zip(&spec).zip(win) {
                *a += b * g;
            }
        }
        current = acc;
        (ch, cw) = (h, w);
    }

    let plan = Fft2d::new(h0, w0);
    let hp = to_spectrum(&pyr.highpass, &plan);
    let polar = polar_grid(h0, w0);
    for (i, &(lr, _)) in polar.iter().enumerate() {
        current[i] = current[i] * radial_low(lr, -1.0) + hp[i] * radial_high(lr, -1.0);
    }
    Ok(real_part(h0, w0, current, &plan))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::Rng;

    fn random_image(h: usize, w: usize, seed: u64) -> GrayImage {
        let mut rng = Rng::new(seed);
        GrayImage::from_fn(h, w, |_, _| rng.next_gaussian())
    }

    fn rel_err(a: &GrayImage, b: &GrayImage) -> f64 {
        let num: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).powi(2)).sum();
        (num / b.energy().max(1e-300)).sqrt()
    }

    #[test]
    fn peak_gain_matches_binomial_form() {
        // 4^7 / (8 * C(14, 7)) = 16384 / 27456
        let g = SteerableConfig::default().angular_peak_gain();
        assert!((g - 16384.0 / 27456.0).abs() < 1e-15);
    }

    #[test]
    fn angular_windows_partition_unity() {
        for n in [2, 4, 8] {
            let cfg = SteerableConfig {
                scales: 1,
                orientations: n,
            };
            let gain = cfg.angular_peak_gain();
            for i in 0..360 {
                let theta = i as f64 * std::f64::consts::PI / 180.0;
                let s: f64 = (0..n)
                    .map(|k| {
                        let off = theta - std::f64::consts::PI * k as f64 / n as f64;
                        gain * off.cos().abs().powi(2 * (n as i32 - 1))
                    })
                    .sum();
                assert!((s - 1.0).abs() < 1e-12, "n={n} theta={theta} sum={s}");
            }
        }
    }

    #[test]
    fn zero_image_gives_zero_subbands() {
        let pyr = build_pyramid(&GrayImage::zeros(64, 64), &SteerableConfig::default()).unwrap();
        assert_eq!(pyr.subband_count(), 34);
        assert!(pyr.subbands().iter().all(|b| b.data().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn subband_sizes_for_table_images() {
        let img = random_image(150, 300, 1);
        let pyr = build_pyramid(&img, &SteerableConfig::default()).unwrap();
        assert_eq!(pyr.subband_count(), 34);
        assert_eq!(pyr.subband_names().len(), 34);
        let dims: Vec<(usize, usize)> = pyr.bands.iter().map(|s| (s[0].height(), s[0].width())).collect();
        assert_eq!(dims, vec![(150, 300), (75, 150), (38, 75), (19, 38)]);
        assert_eq!((pyr.lowpass.height(), pyr.lowpass.width()), (10, 19));
    }

    #[test]
    fn too_small_for_scales() {
        let err = build_pyramid(&GrayImage::zeros(63, 200), &SteerableConfig::default());
        assert!(matches!(err, Err(Error::ImageTooSmall(_))));
        assert!(build_pyramid(&GrayImage::zeros(64, 64), &SteerableConfig::default()).is_ok());
    }

    #[test]
    fn round_trip_random_and_impulse() {
        let cfg = SteerableConfig::default();
        for seed in 0..3 {
            let img = random_image(64, 64, seed);
            let back = reconstruct(&build_pyramid(&img, &cfg).unwrap(), &cfg).unwrap();
            assert!(rel_err(&back, &img) <= 1e-4, "seed {seed}: {}", rel_err(&back, &img));
        }
        let impulse = GrayImage::from_fn(64, 64, |r, c| if (r, c) == (32, 32) { 1.0 } else { 0.0 });
        let back = reconstruct(&build_pyramid(&impulse, &cfg).unwrap(), &cfg).unwrap();
        assert!(rel_err(&back, &impulse) <= 1e-4);
        // odd sizes exercise the uneven halving
        let odd = random_image(75, 91, 9);
        let back = reconstruct(&build_pyramid(&odd, &cfg).unwrap(), &cfg).unwrap();
        assert!(rel_err(&back, &odd) <= 1e-4);
    }

    #[test]
    fn zero_pyramid_reconstructs_zero() {
        let cfg = SteerableConfig::default();
        let pyr = build_pyramid(&GrayImage::zeros(64, 80), &cfg).unwrap();
        let back = reconstruct(&pyr, &cfg).unwrap();
        assert!(back.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn reconstruct_rejects_mismatched_config() {
        let cfg = SteerableConfig::default();
        let pyr = build_pyramid(&random_image(64, 64, 3), &cfg).unwrap();
        let other = SteerableConfig {
            scales: 3,
            orientations: 8,
        };
        assert!(matches!(reconstruct(&pyr, &other), Err(Error::ShapeMismatch(_))));
        let other = SteerableConfig {
            scales: 4,
            orientations: 4,
        };
        assert!(matches!(reconstruct(&pyr, &other), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn energy_is_conserved_with_downsampling_compensation() {
        let cfg = SteerableConfig::default();
        for seed in 10..13 {
            let img = random_image(96, 128, seed);
            let pyr = build_pyramid(&img, &cfg).unwrap();
            let full = (img.height() * img.width()) as f64;
            let total: f64 = pyr
                .subbands()
                .iter()
                .map(|b| b.energy() * full / (b.height() * b.width()) as f64)
                .sum();
            let rel = (total - img.energy()).abs() / img.energy();
            assert!(rel < 0.01, "relative energy error {rel}");
        }
    }

    #[test]
    fn orientation_selectivity() {
        // Sinusoids whose frequency vector points along orientation k, at the
        // centre of the finest bandpass ring (radius pi/2).
        let cfg = SteerableConfig::default();
        let peak = cfg.angular_peak_gain();
        let n = 64;
        for (k, fx, fy) in [(0usize, 16isize, 0isize), (4, 0, 16), (2, 11, 11), (6, -11, 11)] {
            let img = GrayImage::from_fn(n, n, |r, c| {
                let phase = 2.0 * std::f64::consts::PI * (fx as f64 * c as f64 + fy as f64 * r as f64) / n as f64;
                phase.cos()
            });
            let pyr = build_pyramid(&img, &cfg).unwrap();
            let energy = |b: &GrayImage| b.energy() * (n * n) as f64 / (b.height() * b.width()) as f64;
            let bandpass: f64 = pyr.bands.iter().flatten().map(energy).sum();
            let best = energy(&pyr.bands[0][k]);
            let share = best / bandpass;
            // the angular window design caps the share at its peak gain
            assert!(share >= 0.95 * peak, "orientation {k}: share {share}");
            for (j, b) in pyr.bands[0].iter().enumerate() {
                assert!(energy(b) <= best + 1e-9, "orientation {j} beats {k}");
            }
        }
    }
}
