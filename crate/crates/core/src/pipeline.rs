//! Per-method descriptor extraction over a corpus.
//!
//! Histogram methods go through two passes. Transform-based methods (SP and
//! CT) first calibrate a [`BinLayout`] from the largest coefficient seen in
//! each subband across the corpus, then histogram every subband over those
//! shared edges. CLBP and LRI produce normalized histograms directly. SeiSIM
//! keeps per-image statistics and compares them pairwise.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clbp::{clbp_descriptor, ClbpConfig};
use crate::curvelet::{CurveletConfig, CurveletPlan};
use crate::descriptor::{
    aggregate_distance, coeff_histogram, to_similarity, AggregateSpan, BinLayout, DescriptorSet, DistanceKind,
    Histogram, Method, NamedHistogram, DEFAULT_BINS,
};
use crate::error::{Error, Result};
use crate::image::{normalize, DatasetManifest, GrayImage, MIN_DESCRIPTOR_SIDE};
use crate::lri::{lri_indices, LriConfig, DIRECTIONS};
use crate::retrieval::SimilarityMatrix;
use crate::seisim::{SeisimConfig, SeisimFeatures};
use crate::steerable::{build_pyramid, SteerableConfig};

/// Every tunable of the extraction and comparison stages.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineConfig {
    /// Bins per coefficient histogram (SP and CT).
    pub bins: usize,
    pub span: AggregateSpan,
    /// Zero-mean, unit-variance normalization before extraction.
    pub normalize: bool,
    pub steerable: SteerableConfig,
    pub curvelet: CurveletConfig,
    pub clbp: ClbpConfig,
    pub lri: LriConfig,
    pub seisim: SeisimConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            bins: DEFAULT_BINS,
            span: AggregateSpan::All,
            normalize: true,
            steerable: SteerableConfig::default(),
            curvelet: CurveletConfig::default(),
            clbp: ClbpConfig::default(),
            lri: LriConfig::default(),
            seisim: SeisimConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bins < 2 {
            return Err(Error::Config(format!("need at least 2 bins, got {}", self.bins)));
        }
        self.steerable.validate()?;
        self.clbp.validate()?;
        self.lri.validate()?;
        self.seisim.pyramid.validate()
    }
}

type NamedBands = Vec<(String, Vec<f64>)>;

/// Reusable per-method state; holds the curvelet plan for one image size.
pub struct Extractor {
    method: Method,
    cfg: PipelineConfig,
    plan: Option<CurveletPlan>,
}

impl Extractor {
    pub fn new(method: Method, cfg: PipelineConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            method,
            cfg,
            plan: None,
        })
    }

    /// Prepares size-dependent state for `height x width` images.
    pub fn for_size(method: Method, cfg: PipelineConfig, height: usize, width: usize) -> Result<Self> {
        let mut ex = Self::new(method, cfg)?;
        if method == Method::Ct {
            ex.plan = Some(CurveletPlan::new(height, width, cfg.curvelet)?);
        }
        Ok(ex)
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    fn prepare(&self, img: &GrayImage) -> Result<GrayImage> {
        img.require_min_size(MIN_DESCRIPTOR_SIDE, "descriptor extraction")?;
        Ok(if self.cfg.normalize {
            normalize(img)
        } else {
            img.clone()
        })
    }

    /// Named coefficient sets of the transform methods, and whether they are signed.
    fn subbands(&self, img: &GrayImage) -> Result<(NamedBands, bool)> {
        match self.method {
            Method::Sp => {
                let pyr = build_pyramid(img, &self.cfg.steerable)?;
                let named = pyr
                    .subband_names()
                    .into_iter()
                    .zip(pyr.subbands())
                    .map(|(name, band)| (name, band.data().to_vec()))
                    .collect();
                Ok((named, true))
            }
            Method::Ct => {
                let owned;
                let plan = match &self.plan {
                    Some(p) if (p.layout().height, p.layout().width) == (img.height(), img.width()) => p,
                    _ => {
                        owned = CurveletPlan::new(img.height(), img.width(), self.cfg.curvelet)?;
                        &owned
                    }
                };
                let named = plan
                    .forward_distinct(img)?
                    .into_iter()
                    .map(|b| (format!("c{}w{}", b.scale, b.wedge), b.magnitudes().collect()))
                    .collect();
                Ok((named, false))
            }
            other => Err(Error::Config(format!("{other} has no coefficient subbands"))),
        }
    }

    /// Largest absolute coefficient per subband; empty for methods without layouts.
    pub fn extents(&self, img: &GrayImage) -> Result<Vec<f64>> {
        if !needs_layout(self.method) {
            return Ok(Vec::new());
        }
        let img = self.prepare(img)?;
        let (bands, _) = self.subbands(&img)?;
        Ok(bands
            .iter()
            .map(|(_, v)| v.iter().fold(0.0_f64, |m, x| m.max(x.abs())))
            .collect())
    }

    pub fn descriptor(&self, img: &GrayImage, layout: Option<&BinLayout>) -> Result<DescriptorSet> {
        let img = self.prepare(img)?;
        let histograms = match self.method {
            Method::Sp | Method::Ct => {
                let layout = layout.ok_or_else(|| Error::Config(format!("{} needs a bin layout", self.method)))?;
                if layout.method != self.method {
                    return Err(Error::LayoutMismatch(format!(
                        "layout is for {}, extracting {}",
                        layout.method, self.method
                    )));
                }
                let (bands, _) = self.subbands(&img)?;
                if bands.len() != layout.ranges.len() {
                    return Err(Error::LayoutMismatch(format!(
                        "layout has {} ranges, image has {} subbands",
                        layout.ranges.len(),
                        bands.len()
                    )));
                }
                bands
                    .into_iter()
                    .zip(&layout.ranges)
                    .map(|((name, values), range)| {
                        Ok(NamedHistogram {
                            name,
                            bins: coeff_histogram(values, range)?,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?
            }
            Method::Clbp => {
                let h = clbp_descriptor(&img, &self.cfg.clbp)?;
                [("s", h.s), ("m", h.m), ("c", h.c)]
                    .into_iter()
                    .map(|(name, bins)| NamedHistogram {
                        name: name.to_string(),
                        bins,
                    })
                    .collect()
            }
            Method::Lri => {
                let d = lri_indices(&img, &self.cfg.lri)?;
                let named = |prefix: &str, hists: Vec<Histogram>| -> Vec<NamedHistogram> {
                    DIRECTIONS
                        .iter()
                        .zip(hists)
                        .map(|(dir, bins)| NamedHistogram {
                            name: format!("{prefix}-{}", dir.0),
                            bins,
                        })
                        .collect()
                };
                let mut out = named("a", d.a_hists);
                out.extend(named("d", d.d_hists));
                out
            }
            Method::Seisim => {
                return Err(Error::Config(
                    "seisim compares images directly and has no histogram descriptor".into(),
                ))
            }
        };
        Ok(DescriptorSet::new(self.method, BinLayout::VERSION, histograms))
    }

    pub fn seisim_features(&self, img: &GrayImage) -> Result<SeisimFeatures> {
        let img = self.prepare(img)?;
        SeisimFeatures::extract(&img, &self.cfg.seisim)
    }
}

/// Whether `method` histograms coefficients over a calibrated layout.
pub fn needs_layout(method: Method) -> bool {
    matches!(method, Method::Sp | Method::Ct)
}

/// Features of a whole corpus under one method.
#[derive(Debug, Clone, PartialEq)]
pub enum CorpusFeatures {
    Histograms {
        layout: Option<BinLayout>,
        sets: Vec<DescriptorSet>,
    },
    Seisim(Vec<SeisimFeatures>),
}

impl CorpusFeatures {
    pub fn len(&self) -> usize {
        match self {
            CorpusFeatures::Histograms { sets, .. } => sets.len(),
            CorpusFeatures::Seisim(f) => f.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn extractor_for(method: Method, cfg: PipelineConfig, images: &[GrayImage]) -> Result<Extractor> {
    match images.first() {
        Some(first) => Extractor::for_size(method, cfg, first.height(), first.width()),
        None => Err(Error::Empty("no images to extract".into())),
    }
}

/// Calibrates the shared bin layout of `method` over a corpus.
pub fn calibrate(method: Method, images: &[GrayImage], cfg: &PipelineConfig) -> Result<Option<BinLayout>> {
    if !needs_layout(method) {
        return Ok(None);
    }
    let ex = extractor_for(method, *cfg, images)?;
    calibrate_with(&ex, images).map(Some)
}

fn calibrate_with(ex: &Extractor, images: &[GrayImage]) -> Result<BinLayout> {
    let per_image = images
        .par_iter()
        .map(|img| ex.extents(img))
        .collect::<Result<Vec<_>>>()?;
    let mut extents = per_image[0].clone();
    for (i, e) in per_image.iter().enumerate().skip(1) {
        if e.len() != extents.len() {
            return Err(Error::LayoutMismatch(format!(
                "image {i} has {} subbands, expected {}",
                e.len(),
                extents.len()
            )));
        }
        for (m, v) in extents.iter_mut().zip(e) {
            *m = m.max(*v);
        }
    }
    let signed = ex.method == Method::Sp;
    BinLayout::from_extents(ex.method, &extents, ex.cfg.bins, signed)
}

/// Extracts features for every image, calibrating a layout when needed.
pub fn extract_corpus(method: Method, images: &[GrayImage], cfg: &PipelineConfig) -> Result<CorpusFeatures> {
    let ex = extractor_for(method, *cfg, images)?;
    if method == Method::Seisim {
        let feats = images
            .par_iter()
            .map(|img| ex.seisim_features(img))
            .collect::<Result<Vec<_>>>()?;
        return Ok(CorpusFeatures::Seisim(feats));
    }
    let layout = if needs_layout(method) {
        Some(calibrate_with(&ex, images)?)
    } else {
        None
    };
    let sets = images
        .par_iter()
        .map(|img| ex.descriptor(img, layout.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    Ok(CorpusFeatures::Histograms { layout, sets })
}

/// Loads every image of a manifest, in manifest order.
pub fn load_corpus(manifest: &DatasetManifest) -> Result<Vec<GrayImage>> {
    if manifest.is_empty() {
        return Err(Error::Empty("manifest has no images".into()));
    }
    (0..manifest.len()).into_par_iter().map(|i| manifest.load(i)).collect()
}

/// Pairwise similarities of a corpus: `1 / (1 + D)` for histogram methods,
/// the SeiSIM score otherwise.
pub fn similarity_matrix(
    features: &CorpusFeatures,
    distance: DistanceKind,
    cfg: &PipelineConfig,
) -> Result<SimilarityMatrix> {
    match features {
        CorpusFeatures::Histograms { sets, .. } => SimilarityMatrix::from_symmetric_fn(sets.len(), |i, j| {
            aggregate_distance(&sets[i], &sets[j], distance, cfg.span).map(to_similarity)
        }),
        CorpusFeatures::Seisim(feats) => SimilarityMatrix::from_symmetric_fn(feats.len(), |i, j| {
            feats[i].similarity(&feats[j], &cfg.seisim)
        }),
    }
}

/// Similarity of one pair under `method`, given a prepared extractor and layout.
pub fn pair_similarity(
    ex: &Extractor,
    layout: Option<&BinLayout>,
    a: &GrayImage,
    b: &GrayImage,
    distance: DistanceKind,
) -> Result<f64> {
    if ex.method == Method::Seisim {
        let fa = ex.seisim_features(a)?;
        let fb = ex.seisim_features(b)?;
        return fa.similarity(&fb, &ex.cfg.seisim);
    }
    let da = ex.descriptor(a, layout)?;
    let db = ex.descriptor(b, layout)?;
    aggregate_distance(&da, &db, distance, ex.cfg.span).map(to_similarity)
}

/// Name of the descriptor file format.
pub const DESCRIPTOR_FORMAT: &str = "seistex-descriptors";

/// On-disk descriptors of a corpus.
///
/// JSON object with keys `format` (always `"seistex-descriptors"`),
/// `version`, `method`, `layout` (the calibrated [`BinLayout`] or `null`)
/// and `entries`, one `{path, label, descriptor}` per manifest line in
/// manifest order. A descriptor is `{method, layout_version, histograms}`
/// with each histogram stored as `{name, bins}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptorFile {
    pub format: String,
    pub version: u32,
    pub method: Method,
    pub layout: Option<BinLayout>,
    pub entries: Vec<DescriptorEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptorEntry {
    pub path: String,
    pub label: String,
    pub descriptor: DescriptorSet,
}

impl DescriptorFile {
    pub const VERSION: u32 = 1;

    pub fn new(manifest: &DatasetManifest, method: Method, layout: Option<BinLayout>, sets: Vec<DescriptorSet>) -> Result<Self> {
        if sets.len() != manifest.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} descriptors for {} manifest entries",
                sets.len(),
                manifest.len()
            )));
        }
        let entries = manifest
            .entries()
            .iter()
            .zip(sets)
            .map(|(e, descriptor)| DescriptorEntry {
                path: e.path.clone(),
                label: e.label.clone(),
                descriptor,
            })
            .collect();
        Ok(Self {
            format: DESCRIPTOR_FORMAT.to_string(),
            version: Self::VERSION,
            method,
            layout,
            entries,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.format != DESCRIPTOR_FORMAT || self.version != Self::VERSION {
            return Err(Error::Config(format!(
                "unsupported descriptor file {:?} version {}",
                self.format, self.version
            )));
        }
        if let Some(first) = self.entries.first() {
            for e in &self.entries {
                if e.descriptor.method != self.method {
                    return Err(Error::LayoutMismatch(format!(
                        "{} holds a {} descriptor in a {} file",
                        e.path, e.descriptor.method, self.method
                    )));
                }
                first.descriptor.check_comparable(&e.descriptor)?;
            }
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: Self = serde_json::from_str(&text)?;
        file.validate()?;
        Ok(file)
    }

    pub fn labels(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.label.as_str()).collect()
    }

    pub fn features(&self) -> CorpusFeatures {
        CorpusFeatures::Histograms {
            layout: self.layout.clone(),
            sets: self.entries.iter().map(|e| e.descriptor.clone()).collect(),
        }
    }
}
