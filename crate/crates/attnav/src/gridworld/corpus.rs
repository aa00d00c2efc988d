//! Scene corpus persistence.
//!
//! One UTF-8 structured-text document per scene: scalar keys, the grid as
//! a list of strings (`.` free, `#` wall), and one record per object. The
//! serialization is deterministic, so a regenerated scene reproduces its
//! file byte for byte. Documents carry a `format_version` field.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    Corpus, EnvError, HeightBand, ObjectClass, ObjectInstance, Result, RoomType, Scene, Split,
    CELL_SIZE_M,
};

pub const SCENE_FORMAT_VERSION: u32 = 1;
const SCENE_FILE_EXT: &str = "scene";

#[derive(Serialize, Deserialize)]
struct SceneDoc {
    format_version: u32,
    id: String,
    room_type: String,
    split: String,
    cell_size_m: f64,
    grid: Vec<String>,
    objects: Vec<ObjectDoc>,
}

#[derive(Serialize, Deserialize)]
struct ObjectDoc {
    class: String,
    x: i32,
    y: i32,
    height_band: String,
}

/// Renders a scene as its structured-text document.
pub fn scene_to_string(scene: &Scene) -> String {
    let grid = (0..scene.height)
        .map(|y| {
            (0..scene.width)
                .map(|x| if scene.is_wall(x, y) { '#' } else { '.' })
                .collect()
        })
        .collect();
    let doc = SceneDoc {
        format_version: SCENE_FORMAT_VERSION,
        id: scene.id.clone(),
        room_type: scene.room_type.name().to_string(),
        split: scene.split.name().to_string(),
        cell_size_m: scene.cell_size_m,
        grid,
        objects: scene
            .objects
            .iter()
            .map(|o| ObjectDoc {
                class: o.class.name().to_string(),
                x: o.x,
                y: o.y,
                height_band: o.height_band.name().to_string(),
            })
            .collect(),
    };
    toml::to_string(&doc).expect("scene serializes")
}

/// Parses and validates a structured-text scene document.
pub fn scene_from_str(text: &str) -> Result<Scene> {
    let doc: SceneDoc = toml::from_str(text).map_err(|e| EnvError::Parse(e.to_string()))?;
    if doc.format_version != SCENE_FORMAT_VERSION {
        return Err(EnvError::Parse(format!(
            "unsupported scene format_version {}, expected {SCENE_FORMAT_VERSION}",
            doc.format_version
        )));
    }
    if doc.cell_size_m != CELL_SIZE_M {
        return Err(EnvError::Parse(format!(
            "unsupported cell_size_m {}, expected {CELL_SIZE_M}",
            doc.cell_size_m
        )));
    }
    let height = doc.grid.len() as i32;
    let width = doc.grid.first().map(|r| r.chars().count()).unwrap_or(0) as i32;
    let mut walls = Vec::with_capacity((width * height).max(0) as usize);
    for row in &doc.grid {
        if row.chars().count() as i32 != width {
            return Err(EnvError::Parse(format!(
                "ragged grid: row {:?} is not {width} cells wide",
                row
            )));
        }
        for ch in row.chars() {
            match ch {
                '.' => walls.push(false),
                '#' => walls.push(true),
                other => {
                    return Err(EnvError::Parse(format!(
                        "grid cell {other:?} is neither '.' nor '#'"
                    )))
                }
            }
        }
    }
    let objects = doc
        .objects
        .iter()
        .map(|o| {
            Ok(ObjectInstance {
                class: ObjectClass::from_name(&o.class)?,
                x: o.x,
                y: o.y,
                height_band: HeightBand::from_name(&o.height_band)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Scene::new(
        doc.id,
        RoomType::from_name(&doc.room_type)?,
        Split::from_name(&doc.split)?,
        width,
        height,
        walls,
        objects,
    )
}

/// Writes `<id>.scene` into `dir` (created if missing); returns the path.
pub fn save_scene(dir: &Path, scene: &Scene) -> Result<std::path::PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(format!("{}.{SCENE_FILE_EXT}", scene.id));
    std::fs::write(&path, scene_to_string(scene))?;
    Ok(path)
}

pub fn load_scene(path: &Path) -> Result<Scene> {
    let text = std::fs::read_to_string(path)?;
    scene_from_str(&text)
}

/// Writes every scene of the corpus into `dir`.
pub fn save_corpus(dir: &Path, corpus: &Corpus) -> Result<()> {
    for scene in &corpus.scenes {
        save_scene(dir, scene)?;
    }
    Ok(())
}

/// Loads every `*.scene` file in `dir`, sorted by file name so corpus
/// order is reproducible.
pub fn load_corpus(dir: &Path) -> Result<Corpus> {
    let mut paths: Vec<std::path::PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().map(|e| e == SCENE_FILE_EXT).unwrap_or(false))
        .collect();
    paths.sort();
    let scenes = paths
        .iter()
        .map(|p| load_scene(p))
        .collect::<Result<Vec<_>>>()?;
    Ok(Corpus::new(scenes))
}
