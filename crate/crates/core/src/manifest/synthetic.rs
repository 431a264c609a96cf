use super::{Category, DatasetManifest, EditPrompt, EditedItem, EditingModel, Origin, RawScale, SourceVideo};

/// The twelve editing models of the benchmark: name, release (yy.mm),
/// zero-shot flag and base model.
pub const MODELS: [(&str, &str, bool, &str); 12] = [
    ("Tune-A-Video", "22.12", false, "SD 1-4"),
    ("Tokenflow", "23.07", true, "SD 2-1"),
    ("Text2Video-Zero", "23.03", true, "SD 1-5"),
    ("CCEdit", "23.09", true, "SD 1-5"),
    ("ControlVideo", "23.05", true, "SD 1-5"),
    ("FateZero", "23.03", true, "SD 1-4"),
    ("FLATTEN", "23.12", true, "SD 2-1"),
    ("FRESCO", "24.06", true, "SD 1-5"),
    ("Pix2Video", "23.03", true, "SD 2"),
    ("RAVE", "23.12", true, "SD 1-5"),
    ("Slicedit", "24.05", true, "SD 1-5"),
    ("vid2vid-zero", "23.03", true, "SD 2-1"),
];

/// Deterministic placeholder manifest with `n_items` edited videos.
///
/// Every prompt gets its own source clip and is run through all twelve models
/// in table order; categories cycle over the eight edit categories.
pub fn synthetic_manifest(n_items: usize) -> DatasetManifest {
    let n_prompts = n_items.div_ceil(MODELS.len());
    let sources = (0..n_prompts)
        .map(|p| SourceVideo {
            id: format!("src{p:04}"),
            origin: if p % 5 == 4 {
                Origin::AiGenerated
            } else {
                Origin::RealWorld
            },
            duration_s: 4.0,
            fps: 24.0,
            resolution: (854, 480),
            uri: format!("file:///videos/src{p:04}.mp4"),
        })
        .collect();
    let prompts = (0..n_prompts)
        .map(|p| {
            let category = Category::ALL[p % Category::ALL.len()];
            EditPrompt {
                id: format!("p{p:04}"),
                category,
                text: format!("{} edit #{p}", category.as_str().replace('_', " ")),
                source_video_id: format!("src{p:04}"),
            }
        })
        .collect();
    let models = MODELS
        .iter()
        .map(|&(name, year, zero_shot, base)| EditingModel {
            name: name.into(),
            year: year.into(),
            zero_shot,
            base_model: base.into(),
        })
        .collect();
    let items = (0..n_items)
        .map(|i| {
            let (p, m) = (i / MODELS.len(), i % MODELS.len());
            EditedItem {
                id: format!("item{i:05}"),
                model: MODELS[m].0.into(),
                prompt_id: format!("p{p:04}"),
                source_video_id: format!("src{p:04}"),
                uri: format!("file:///edits/item{i:05}.mp4"),
            }
        })
        .collect();
    DatasetManifest {
        sources,
        prompts,
        models,
        items,
        raw_scale: RawScale::default(),
    }
}
