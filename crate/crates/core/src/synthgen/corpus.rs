use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::scalebar::{gen_scalebar_image, ScaleBarSpec, ScaleBarTruth};
use super::scene::{gen_scene, SceneSpec, SceneTruth};
use super::SynthError;
use crate::imagecore::{write_labels_png, write_raster, Raster8};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusKind {
    Scene,
    Scalebar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "spec", rename_all = "snake_case")]
pub enum CorpusTemplate {
    Scene(SceneSpec),
    Scalebar(ScaleBarSpec),
}

impl CorpusTemplate {
    pub fn kind(&self) -> CorpusKind {
        match self {
            Self::Scene(_) => CorpusKind::Scene,
            Self::Scalebar(_) => CorpusKind::Scalebar,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ItemTruth {
    Scene(SceneTruth),
    Scalebar(ScaleBarTruth),
}

/// One manifest entry; paths are relative to the manifest directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusItem {
    pub index: usize,
    pub seed: u64,
    pub image: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<String>,
    pub truth: ItemTruth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub kind: CorpusKind,
    pub base_seed: u64,
    pub count: usize,
    pub template: CorpusTemplate,
    pub items: Vec<CorpusItem>,
}

pub fn scene_corpus(template: &SceneSpec, n: usize, base_seed: u64) -> Result<Vec<(Raster8, SceneTruth)>, SynthError> {
    (0..n)
        .into_par_iter()
        .map(|i| gen_scene(&SceneSpec { seed: base_seed.wrapping_add(i as u64), ..template.clone() }))
        .collect()
}

pub fn scalebar_corpus(template: &ScaleBarSpec, n: usize, base_seed: u64) -> Result<Vec<(Raster8, ScaleBarTruth)>, SynthError> {
    (0..n)
        .into_par_iter()
        .map(|i| gen_scalebar_image(&ScaleBarSpec { seed: base_seed.wrapping_add(i as u64), ..template.clone() }))
        .collect()
}

/// Generates `n` items with seeds `base_seed + i`, writes PNGs into `out`
/// and a `manifest.json` listing files and truth.
pub fn gen_corpus(template: &CorpusTemplate, n: usize, base_seed: u64, out: &Path) -> Result<Manifest, SynthError> {
    if n == 0 {
        return Err(SynthError::EmptyCorpus);
    }
    fs::create_dir_all(out)?;
    let items: Vec<CorpusItem> = (0..n)
        .into_par_iter()
        .map(|i| -> Result<CorpusItem, SynthError> {
            let seed = base_seed.wrapping_add(i as u64);
            let image = format!("{i:05}.png");
            match template {
                CorpusTemplate::Scene(t) => {
                    let (img, truth) = gen_scene(&SceneSpec { seed, ..t.clone() })?;
                    let labels = format!("{i:05}.labels.png");
                    write_raster(&img, &out.join(&image))?;
                    write_labels_png(&truth.label_map, &out.join(&labels))?;
                    Ok(CorpusItem { index: i, seed, image, labels: Some(labels), truth: ItemTruth::Scene(truth) })
                }
                CorpusTemplate::Scalebar(t) => {
                    let (img, truth) = gen_scalebar_image(&ScaleBarSpec { seed, ..t.clone() })?;
                    write_raster(&img, &out.join(&image))?;
                    Ok(CorpusItem { index: i, seed, image, labels: None, truth: ItemTruth::Scalebar(truth) })
                }
            }
        })
        .collect::<Result<_, _>>()?;
    let manifest = Manifest { kind: template.kind(), base_seed, count: n, template: template.clone(), items };
    fs::write(out.join("manifest.json"), serde_json::to_vec_pretty(&manifest)?)?;
    Ok(manifest)
}
