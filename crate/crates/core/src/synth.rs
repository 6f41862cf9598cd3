//! Deterministic synthetic seismic-like textures in four structural classes.
//!
//! Randomness comes from [`Rng`], an xorshift64* generator seeded through
//! SplitMix64, so a given seed yields the same image on every platform.
//! Intensities are quantized to integers in [0, 255], which makes a generated
//! image identical to its 8-bit PNG export.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use std::path::Path;

use rayon::prelude::*;

use crate::image::{save_png, DatasetManifest, GrayImage, ManifestEntry};

/// Version of the class recipes below. Bump when any constant changes.
pub const RECIPE_VERSION: u32 = 1;

/// xorshift64* (Vigna 2014) with SplitMix64 seeding.
#[derive(Debug, Clone)]
pub struct Rng {
    state: u64,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        let mut sm = seed;
        let mut state = splitmix64(&mut sm);
        if state == 0 {
            state = 0x9E37_79B9_7F4A_7C15;
        }
        Self { state }
    }

    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.state;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        self.state = x;
        x.wrapping_mul(0x2545_F491_4F6C_DD1D)
    }

    /// Uniform in [0, 1) with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform integer in `lo..=hi`.
    pub fn int_range(&mut self, lo: usize, hi: usize) -> usize {
        lo + (self.next_u64() % (hi - lo + 1) as u64) as usize
    }

    /// Standard normal deviate (Box-Muller, one value per call).
    pub fn next_gaussian(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of image `index` of class `class` in a dataset generated from `base`.
pub fn image_seed(base: u64, class: usize, index: usize) -> u64 {
    let mut s = base ^ ((class as u64) << 48) ^ index as u64;
    splitmix64(&mut s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SynthKind {
    /// Clear horizons: continuous, gently dipping strata.
    Layered,
    /// Chaotic horizons: band-limited, disordered reflectivity.
    Chaotic,
    /// Strata broken by vertical displacement faults.
    Faulted,
    /// Strata draped over an elliptical salt body.
    Dome,
}

impl SynthKind {
    pub const ALL: [SynthKind; 4] = [
        SynthKind::Layered,
        SynthKind::Chaotic,
        SynthKind::Faulted,
        SynthKind::Dome,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SynthKind::Layered => "layered",
            SynthKind::Chaotic => "chaotic",
            SynthKind::Faulted => "faulted",
            SynthKind::Dome => "dome",
        }
    }
}

impl fmt::Display for SynthKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SynthKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SynthKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown synthetic class {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthSpec {
    pub kind: SynthKind,
    pub height: usize,
    pub width: usize,
    pub seed: u64,
}

impl SynthSpec {
    pub fn new(kind: SynthKind, height: usize, width: usize, seed: u64) -> Self {
        Self {
            kind,
            height,
            width,
            seed,
        }
    }
}

// Class recipes. Periods and lengths are in pixels.
const LAYERED_PERIOD: (f64, f64) = (7.0, 10.0);
const LAYERED_DIP: (f64, f64) = (-0.04, 0.04);
const CHAOTIC_PASSES: usize = 2;
const FAULTED_PERIOD: (f64, f64) = (12.0, 16.0);
const FAULTED_DIP: (f64, f64) = (0.08, 0.16);
const FAULT_COUNT: (usize, usize) = (2, 4);
/// Fault throw as a fraction of the layer period.
const FAULT_THROW: (f64, f64) = (0.35, 0.65);
const DOME_PERIOD: (f64, f64) = (9.0, 12.0);
/// Horizontal over vertical semi-axis of the salt body.
const DOME_ECCENTRICITY: f64 = 1.6;
const NOISE_LEVEL: f64 = 0.15;
const OUTPUT_GAIN: f64 = 55.0;

/// Renders one synthetic image with intensities in [0, 255].
pub fn generate(spec: &SynthSpec) -> Result<GrayImage> {
    if spec.height < 32 || spec.width < 32 {
        return Err(Error::Config(format!(
            "synthetic images need at least 32x32 pixels, got {}x{}",
            spec.height, spec.width
        )));
    }
    let mut rng = Rng::new(spec.seed);
    let (h, w) = (spec.height, spec.width);
    let field = match spec.kind {
        SynthKind::Layered => layered(h, w, &mut rng),
        SynthKind::Chaotic => chaotic(h, w, &mut rng),
        SynthKind::Faulted => faulted(h, w, &mut rng),
        SynthKind::Dome => dome(h, w, &mut rng),
    };
    let noisy: Vec<f64> = field
        .into_iter()
        .map(|v| v + NOISE_LEVEL * rng.next_gaussian())
        .collect();
    let data = noisy
        .into_iter()
        .map(|v| (128.0 + OUTPUT_GAIN * v).round().clamp(0.0, 255.0))
        .collect();
    GrayImage::new(h, w, data)
}

/// Reflectivity of a layered medium at depth coordinate `z`.
struct Strata {
    period: f64,
    phase: f64,
    second_phase: f64,
}

impl Strata {
    fn random(rng: &mut Rng, period: (f64, f64)) -> Self {
        Self {
            period: rng.uniform(period.0, period.1),
            phase: rng.uniform(0.0, 2.0 * PI),
            second_phase: rng.uniform(0.0, 2.0 * PI),
        }
    }

    fn at(&self, z: f64) -> f64 {
        let t = 2.0 * PI * z / self.period;
        // a weaker overtone with a slow beat gives uneven reflector strength
        (t + self.phase).sin() * (0.75 + 0.25 * (0.13 * t + self.second_phase).sin())
            + 0.3 * (2.0 * t + self.second_phase).sin()
    }
}

/// Slow lateral undulation of the strata, in pixels of vertical shift.
struct Undulation {
    slope: f64,
    amplitude: f64,
    wavelength: f64,
    phase: f64,
}

impl Undulation {
    fn random(rng: &mut Rng, slope: (f64, f64)) -> Self {
        Self {
            slope: rng.uniform(slope.0, slope.1),
            amplitude: rng.uniform(0.5, 2.0),
            wavelength: rng.uniform(90.0, 220.0),
            phase: rng.uniform(0.0, 2.0 * PI),
        }
    }

    fn shift(&self, x: f64) -> f64 {
        self.slope * x + self.amplitude * (2.0 * PI * x / self.wavelength + self.phase).sin()
    }
}

fn layered(h: usize, w: usize, rng: &mut Rng) -> Vec<f64> {
    let strata = Strata::random(rng, LAYERED_PERIOD);
    let und = Undulation::random(rng, LAYERED_DIP);
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            out.push(strata.at(y as f64 + und.shift(x as f64)));
        }
    }
    out
}

fn chaotic(h: usize, w: usize, rng: &mut Rng) -> Vec<f64> {
    let mut field: Vec<f64> = (0..h * w).map(|_| rng.next_gaussian()).collect();
    for _ in 0..CHAOTIC_PASSES {
        field = box_blur(&field, h, w, 1, 2);
    }
    let n = field.len() as f64;
    let mean = field.iter().sum::<f64>() / n;
    let sd = (field.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    field.iter().map(|v| 0.9 * (v - mean) / sd).collect()
}

/// Separable box filter with periodic boundaries.
fn box_blur(src: &[f64], h: usize, w: usize, ry: usize, rx: usize) -> Vec<f64> {
    let mut tmp = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut s = 0.0;
            for d in 0..=2 * rx {
                let xx = (x + w + d - rx) % w;
                s += src[y * w + xx];
            }
            tmp[y * w + x] = s / (2 * rx + 1) as f64;
        }
    }
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut s = 0.0;
            for d in 0..=2 * ry {
                let yy = (y + h + d - ry) % h;
                s += tmp[yy * w + x];
            }
            out[y * w + x] = s / (2 * ry + 1) as f64;
        }
    }
    out
}

/// Column positions of faults and their cumulative throws.
fn fault_plan(w: usize, period: f64, rng: &mut Rng) -> Vec<(usize, f64)> {
    let count = rng.int_range(FAULT_COUNT.0, FAULT_COUNT.1);
    let margin = (w / 10).max(4);
    let span = w - 2 * margin;
    // evenly spaced slots with jitter keep faults apart
    let slot = span / count;
    let mut faults = Vec::with_capacity(count);
    for i in 0..count {
        let jitter = rng.int_range(slot / 4, slot * 3 / 4);
        let throw_frac = rng.uniform(FAULT_THROW.0, FAULT_THROW.1);
        let sign = if rng.next_f64() < 0.5 { -1.0 } else { 1.0 };
        faults.push((margin + i * slot + jitter, sign * throw_frac * period));
    }
    faults
}

fn faulted(h: usize, w: usize, rng: &mut Rng) -> Vec<f64> {
    let strata = Strata::random(rng, FAULTED_PERIOD);
    let und = Undulation::random(rng, FAULTED_DIP);
    let faults = fault_plan(w, strata.period, rng);
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let throw: f64 = faults.iter().filter(|(fx, _)| x >= *fx).map(|(_, t)| t).sum();
            out.push(strata.at(y as f64 + und.shift(x as f64) + throw));
        }
    }
    out
}

fn dome(h: usize, w: usize, rng: &mut Rng) -> Vec<f64> {
    let strata = Strata::random(rng, DOME_PERIOD);
    let und = Undulation::random(rng, LAYERED_DIP);
    let (hf, wf) = (h as f64, w as f64);
    let cx = rng.uniform(0.35, 0.65) * wf;
    let top = rng.uniform(0.3, 0.5) * hf;
    let semi_y = hf - top;
    let semi_x = (DOME_ECCENTRICITY * semi_y).min(0.45 * wf);
    let cy = hf;
    // drape amplitude: layers near the crest are lifted by this many pixels
    let lift = rng.uniform(0.5, 0.8) * semi_y;
    let salt_gain = rng.uniform(0.15, 0.3);
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let (yf, xf) = (y as f64, x as f64);
            let dx = (xf - cx) / semi_x;
            let dy = (yf - cy) / semi_y;
            let inside = dx * dx + dy * dy < 1.0;
            if inside {
                out.push(salt_gain * rng.next_gaussian());
            } else {
                let drape = lift * (-dx * dx * 1.5).exp() * (yf / hf).min(1.0);
                out.push(strata.at(yf + und.shift(xf) + drape));
            }
        }
    }
    out
}

/// A labelled synthetic corpus: `per_class` images of each of the first
/// `classes` kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DatasetSpec {
    pub classes: usize,
    pub per_class: usize,
    pub height: usize,
    pub width: usize,
    pub seed: u64,
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if !(1..=SynthKind::ALL.len()).contains(&self.classes) {
            return Err(Error::Config(format!(
                "class count must be in 1..={}, got {}",
                SynthKind::ALL.len(),
                self.classes
            )));
        }
        if self.per_class == 0 || self.per_class > 999 {
            return Err(Error::Config(format!(
                "images per class must be in 1..=999, got {}",
                self.per_class
            )));
        }
        Ok(())
    }

    /// `(kind, index, seed)` of every image, class by class.
    pub fn members(&self) -> Vec<(SynthKind, usize, u64)> {
        SynthKind::ALL[..self.classes]
            .iter()
            .enumerate()
            .flat_map(|(c, &kind)| (0..self.per_class).map(move |i| (kind, i, image_seed(self.seed, c, i))))
            .collect()
    }

    /// Manifest path of image `index` of `kind`.
    pub fn file_name(kind: SynthKind, index: usize) -> String {
        format!("{}/{:03}.png", kind.name(), index)
    }
}

/// Renders a whole corpus in memory, returning images with their labels.
pub fn generate_dataset(spec: &DatasetSpec) -> Result<Vec<(String, GrayImage)>> {
    spec.validate()?;
    spec.members()
        .into_par_iter()
        .map(|(kind, _, seed)| {
            let img = generate(&SynthSpec::new(kind, spec.height, spec.width, seed))?;
            Ok((kind.name().to_string(), img))
        })
        .collect()
}

/// Writes `out/<class>/NNN.png` and `out/manifest.csv`.
pub fn write_dataset(spec: &DatasetSpec, out: impl AsRef<Path>) -> Result<DatasetManifest> {
    spec.validate()?;
    let out = out.as_ref();
    for kind in &SynthKind::ALL[..spec.classes] {
        let dir = out.join(kind.name());
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    let members = spec.members();
    members.par_iter().try_for_each(|&(kind, index, seed)| {
        let img = generate(&SynthSpec::new(kind, spec.height, spec.width, seed))?;
        save_png(&img, out.join(DatasetSpec::file_name(kind, index)))
    })?;
    let entries = members
        .iter()
        .map(|&(kind, index, _)| ManifestEntry {
            path: DatasetSpec::file_name(kind, index),
            label: kind.name().to_string(),
        })
        .collect();
    let manifest = DatasetManifest::from_entries(out, entries)?;
    manifest.write_csv(out.join("manifest.csv"))?;
    Ok(manifest)
}
