//! Grayscale rasters, per-image normalization and dataset manifests.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use image::{ColorType, ImageReader};

use crate::error::{Error, Result};

/// Smallest height and width accepted by the descriptor operations.
pub const MIN_DESCRIPTOR_SIDE: usize = 8;

/// A row-major raster of real intensities.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl GrayImage {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidImage(format!(
                "zero-sized image ({height}x{width})"
            )));
        }
        if data.len() != height * width {
            return Err(Error::InvalidImage(format!(
                "data length {} does not match {height}x{width}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidImage(format!("non-finite value at index {i}")));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        assert!(height > 0 && width > 0, "zero-sized image");
        Self {
            height,
            width,
            data: vec![0.0; height * width],
        }
    }

    /// Builds an image by evaluating `f(row, col)` at every pixel.
    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(height > 0 && width > 0, "zero-sized image");
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self {
            height,
            width,
            data,
        }
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    /// Errors unless both sides are at least `min_side` pixels.
    pub fn require_min_size(&self, min_side: usize, what: &str) -> Result<()> {
        if self.height < min_side || self.width < min_side {
            return Err(Error::ImageTooSmall(format!(
                "{what} needs at least {min_side}x{min_side} pixels, got {}x{}",
                self.height, self.width
            )));
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Population standard deviation (divides by N).
    pub fn std_dev(&self) -> f64 {
        let mean = self.mean();
        let var = self.data.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / self.data.len() as f64;
        var.sqrt()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Mirror about the vertical axis (left-right flip).
    pub fn flip_horizontal(&self) -> Self {
        Self::from_fn(self.height, self.width, |r, c| self.get(r, self.width - 1 - c))
    }

    /// Rotation by 90 degrees counter-clockwise.
    pub fn rotate90(&self) -> Self {
        let (h, w) = (self.height, self.width);
        Self::from_fn(w, h, |r, c| self.get(c, w - 1 - r))
    }

    pub fn energy(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }
}

/// Zero-mean, unit-variance affine normalization. Constant images map to zeros.
pub fn normalize(img: &GrayImage) -> GrayImage {
    let mean = img.mean();
    let sigma = img.std_dev();
    if sigma <= f64::EPSILON * mean.abs().max(1.0) {
        return GrayImage::zeros(img.height, img.width);
    }
    img.map(|v| (v - mean) / sigma)
}

/// Loads an 8-bit grayscale PNG or PGM as intensities in [0, 255].
pub fn load_image(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let reader = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    match reader.format() {
        Some(image::ImageFormat::Png) | Some(image::ImageFormat::Pnm) => {}
        other => {
            return Err(Error::UnsupportedFormat {
                path: path.to_path_buf(),
                reason: format!("expected PNG or PGM, found {other:?}"),
            })
        }
    }
    let decoded = reader.decode().map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    if decoded.color() != ColorType::L8 {
        return Err(Error::UnsupportedFormat {
            path: path.to_path_buf(),
            reason: format!("expected 8-bit grayscale, found {:?}", decoded.color()),
        });
    }
    let luma = decoded.into_luma8();
    let (w, h) = luma.dimensions();
    let data = luma.into_raw().into_iter().map(f64::from).collect();
    GrayImage::new(h as usize, w as usize, data).map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

/// Writes an image as 8-bit grayscale PNG, rounding and clamping to [0, 255].
pub fn save_png(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes: Vec<u8> = img
        .data
        .iter()
        .map(|v| v.round().clamp(0.0, 255.0) as u8)
        .collect();
    image::save_buffer(
        path,
        &bytes,
        img.width as u32,
        img.height as u32,
        image::ExtendedColorType::L8,
    )
    .map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Decode {
            path: path.to_path_buf(),
            reason: other.to_string(),
        },
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    /// Path as written in the manifest.
    pub path: String,
    pub label: String,
}

/// Ordered list of labelled images. Paths are relative to `root`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DatasetManifest {
    root: PathBuf,
    entries: Vec<ManifestEntry>,
    class_sizes: BTreeMap<String, usize>,
}

impl DatasetManifest {
    pub fn from_entries(root: impl Into<PathBuf>, entries: Vec<ManifestEntry>) -> Result<Self> {
        let mut seen = HashSet::new();
        let mut class_sizes = BTreeMap::new();
        for (i, e) in entries.iter().enumerate() {
            if e.label.is_empty() {
                return Err(Error::Manifest {
                    path: PathBuf::new(),
                    line: i + 2,
                    reason: "empty label".into(),
                });
            }
            if !seen.insert(e.path.as_str()) {
                return Err(Error::Manifest {
                    path: PathBuf::new(),
                    line: i + 2,
                    reason: format!("duplicate path {:?}", e.path),
                });
            }
            *class_sizes.entry(e.label.clone()).or_insert(0) += 1;
        }
        Ok(Self {
            root: root.into(),
            entries,
            class_sizes,
        })
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Labels with their class sizes, in label order.
    pub fn classes(&self) -> &BTreeMap<String, usize> {
        &self.class_sizes
    }

    pub fn class_size(&self, label: &str) -> usize {
        self.class_sizes.get(label).copied().unwrap_or(0)
    }

    pub fn labels(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.label.as_str()).collect()
    }

    pub fn resolve(&self, index: usize) -> PathBuf {
        self.root.join(&self.entries[index].path)
    }

    pub fn load(&self, index: usize) -> Result<GrayImage> {
        load_image(self.resolve(index))
    }

    /// Writes the manifest as `path,label` CSV.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
        w.write_record(["path", "label"]).map_err(|e| csv_io(path, e))?;
        for e in &self.entries {
            w.write_record([&e.path, &e.label])
                .map_err(|err| csv_io(path, err))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

fn csv_io(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e.to_string()))
}

/// Parses a `path,label` CSV manifest. Paths resolve against the manifest's directory.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_manifest(&text, root).map_err(|e| match e {
        Error::Manifest { line, reason, .. } => Error::Manifest {
            path: path.to_path_buf(),
            line,
            reason,
        },
        other => other,
    })
}

fn parse_manifest(text: &str, root: PathBuf) -> Result<DatasetManifest> {
    let err = |line: usize, reason: String| Error::Manifest {
        path: PathBuf::new(),
        line,
        reason,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut records = reader.records();
    match records.next() {
        Some(Ok(h)) if h.len() == 2 && &h[0] == "path" && &h[1] == "label" => {}
        Some(Ok(h)) => return Err(err(1, format!("expected header \"path,label\", found {h:?}"))),
        Some(Err(e)) => return Err(err(1, e.to_string())),
        None => return Err(err(1, "missing header \"path,label\"".into())),
    }
    let mut entries = Vec::new();
    for rec in records {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            err(line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if rec.len() != 2 {
            return Err(err(line, format!("expected 2 fields, found {}", rec.len())));
        }
        if rec[0].is_empty() {
            return Err(err(line, "missing path".into()));
        }
        if rec[1].is_empty() {
            return Err(err(line, "missing label".into()));
        }
        entries.push(ManifestEntry {
            path: rec[0].to_string(),
            label: rec[1].to_string(),
        });
    }
    DatasetManifest::from_entries(root, entries).map_err(|e| match e {
        // from_entries counts lines assuming one record per line after the header
        Error::Manifest { line, reason, .. } => err(line, reason),
        other => other,
    })
}
