pub mod clbp;
pub mod descriptor;
pub mod error;
pub mod fft;
pub mod curvelet;
pub mod image;
pub mod lri;
pub mod pipeline;
pub mod retrieval;
pub mod seisim;
pub mod steerable;
pub mod synth;

pub use error::{Error, Result};
pub use image::{load_image, load_manifest, normalize, DatasetManifest, GrayImage};
