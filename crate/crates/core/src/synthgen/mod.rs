//! Seeded synthetic particle scenes and scale-bar images with exact ground
//! truth. Rasterization is integer-only and random draws go through
//! ChaCha8 and libm, so output is byte-identical across platforms.

mod corpus;
pub mod font;
mod micrograph;
mod scalebar;
mod scene;

use rand::Rng;
use thiserror::Error;

pub use corpus::{gen_corpus, scalebar_corpus, scene_corpus, CorpusItem, CorpusKind, CorpusTemplate, ItemTruth, Manifest};
pub use micrograph::{gen_micrograph, Micrograph, MicrographSpec, STRIP_HEIGHT};
pub use scalebar::{gen_scalebar_image, BarColor, BarStyle, Polarity, ScaleBarBackground, ScaleBarSpec, ScaleBarTruth};
pub use scene::{gen_scene, LogNormal, ParticleTruth, SceneSpec, SceneTruth, Shape, Texture};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("canvas too small for the requested content")]
    CanvasTooSmall,
    #[error("scale-bar text and bar do not fit on the canvas")]
    TextOverflow,
    #[error("invalid spec: {0}")]
    InvalidSpec(&'static str),
    #[error("corpus needs at least one item")]
    EmptyCorpus,
    #[error(transparent)]
    Image(#[from] crate::imagecore::IoError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("manifest: {0}")]
    Json(#[from] serde_json::Error),
}

/// Standard normal draw (Box–Muller, cosine branch).
pub(crate) fn normal<R: Rng>(rng: &mut R) -> f64 {
    let u1 = 1.0 - rng.gen::<f64>();
    let u2 = rng.gen::<f64>();
    libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(std::f64::consts::TAU * u2)
}
