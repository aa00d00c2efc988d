//! Procedural scene generation and task sampling.
//!
//! Rooms are bordered rectangles with a few straight partition walls, each
//! partition pierced by door gaps. Objects are placed under co-occurrence
//! cues — satellite classes prefer cells near their anchor class (toaster
//! near refrigerator, book near lamp, …) — so nearby context carries
//! information about where a target is likely to be. Generation retries
//! until the free space is connected and placement succeeds; everything is
//! deterministic in (seed, room type, split, index).

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{
    shortest_path_len, AgentPose, Corpus, EnvError, ObjectClass, ObjectInstance, Result, RoomType,
    Scene, Split, Task,
};
use crate::seeding;

/// Knobs for the procedural generator. [`GenParams::default`] matches the
/// full benchmark corpus; the smoke corpus shrinks everything.
#[derive(Debug, Clone)]
pub struct GenParams {
    /// Inclusive range of grid widths (border walls included).
    pub width_range: (i32, i32),
    /// Inclusive range of grid heights.
    pub height_range: (i32, i32),
    /// Inclusive range of straight partition walls.
    pub partition_range: (u32, u32),
    /// Probability a non-anchor class is present at all.
    pub presence_prob: f64,
    /// Probability a satellite instance is placed near its cue anchor.
    pub cue_prob: f64,
    /// Chebyshev radius of "near" for cue placement, in cells.
    pub cue_radius: i32,
    /// Maximum instances per present class (at least 1 is placed).
    pub max_instances: u32,
    /// Restrict placement to these classes (`None` = room-type list).
    pub class_override: Option<Vec<ObjectClass>>,
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams {
            width_range: (12, 20),
            height_range: (12, 20),
            partition_range: (1, 3),
            presence_prob: 0.9,
            cue_prob: 0.8,
            cue_radius: 3,
            max_instances: 2,
            class_override: None,
        }
    }
}

/// The class always present in rooms of a type; co-occurrence cues hang off
/// of it.
fn anchor_class(room: RoomType) -> ObjectClass {
    match room {
        RoomType::Kitchen => ObjectClass::Refrigerator,
        RoomType::LivingRoom => ObjectClass::Television,
        RoomType::Bedroom => ObjectClass::Lamp,
        RoomType::Bathroom => ObjectClass::Sink,
    }
}

/// (satellite, anchor) pairs: satellites tend to sit near their anchor.
fn cue_pairs(room: RoomType) -> &'static [(ObjectClass, ObjectClass)] {
    match room {
        RoomType::Kitchen => &[
            (ObjectClass::Toaster, ObjectClass::Refrigerator),
            (ObjectClass::CoffeeMaker, ObjectClass::Refrigerator),
            (ObjectClass::Bowl, ObjectClass::Microwave),
        ],
        RoomType::LivingRoom => &[
            (ObjectClass::Laptop, ObjectClass::Television),
            (ObjectClass::Pillow, ObjectClass::Television),
        ],
        RoomType::Bedroom => &[
            (ObjectClass::Book, ObjectClass::Lamp),
            (ObjectClass::AlarmClock, ObjectClass::Lamp),
        ],
        RoomType::Bathroom => &[
            (ObjectClass::SoapBottle, ObjectClass::Sink),
            (ObjectClass::ToiletPaper, ObjectClass::Sink),
        ],
    }
}

const GENERATION_ATTEMPT_CAP: u32 = 1000;

/// Generates the scene `(room_type, split, index)` deterministically under
/// `seed`. Retries internally (bounded) until structural constraints hold.
pub fn generate_scene(
    seed: u64,
    room_type: RoomType,
    split: Split,
    index: u32,
    params: &GenParams,
) -> Result<Scene> {
    let scene_seed = seeding::derive_indexed(
        seed,
        &format!("scene/{}/{}", room_type.name(), split.name()),
        index as u64,
    );
    let id = format!("{}_{}_{index:02}", room_type.name(), split.name());
    for attempt in 0..GENERATION_ATTEMPT_CAP {
        let mut rng = ChaCha8Rng::seed_from_u64(seeding::derive_indexed(
            scene_seed,
            "attempt",
            attempt as u64,
        ));
        if let Some(scene) = try_generate(&mut rng, &id, room_type, split, params) {
            return Ok(scene);
        }
    }
    Err(EnvError::GenerationFailed {
        attempts: GENERATION_ATTEMPT_CAP,
        reason: format!("constraints never satisfied for {id}"),
    })
}

fn try_generate(
    rng: &mut ChaCha8Rng,
    id: &str,
    room_type: RoomType,
    split: Split,
    params: &GenParams,
) -> Option<Scene> {
    let width = rng.gen_range(params.width_range.0..=params.width_range.1);
    let height = rng.gen_range(params.height_range.0..=params.height_range.1);

    // Border ring of walls; interior free.
    let mut walls = vec![false; (width * height) as usize];
    for x in 0..width {
        walls[x as usize] = true;
        walls[((height - 1) * width + x) as usize] = true;
    }
    for y in 0..height {
        walls[(y * width) as usize] = true;
        walls[(y * width + width - 1) as usize] = true;
    }

    // Straight partitions with door gaps.
    let n_partitions = rng.gen_range(params.partition_range.0..=params.partition_range.1);
    let mut used_cols: Vec<i32> = Vec::new();
    let mut used_rows: Vec<i32> = Vec::new();
    for _ in 0..n_partitions {
        let vertical = rng.gen_bool(0.5);
        if vertical {
            if width < 7 {
                continue;
            }
            let col = rng.gen_range(3..width - 3);
            if used_cols.iter().any(|&c| (c - col).abs() < 2) {
                continue;
            }
            used_cols.push(col);
            let gaps: Vec<i32> = {
                let n_gaps = rng.gen_range(1..=2);
                let mut ys: Vec<i32> = (1..height - 1).collect();
                ys.shuffle(rng);
                ys.truncate(n_gaps);
                ys
            };
            for y in 1..height - 1 {
                if !gaps.contains(&y) {
                    walls[(y * width + col) as usize] = true;
                }
            }
        } else {
            if height < 7 {
                continue;
            }
            let row = rng.gen_range(3..height - 3);
            if used_rows.iter().any(|&r| (r - row).abs() < 2) {
                continue;
            }
            used_rows.push(row);
            let gaps: Vec<i32> = {
                let n_gaps = rng.gen_range(1..=2);
                let mut xs: Vec<i32> = (1..width - 1).collect();
                xs.shuffle(rng);
                xs.truncate(n_gaps);
                xs
            };
            for x in 1..width - 1 {
                if !gaps.contains(&x) {
                    walls[(row * width + x) as usize] = true;
                }
            }
        }
    }

    let shell = Scene::new(
        id.to_string(),
        room_type,
        split,
        width,
        height,
        walls.clone(),
        Vec::new(),
    )
    .ok()?;
    if !shell.free_space_connected() {
        return None;
    }
    let free = shell.free_cells();

    // Object placement. Anchor first, then the rest of the room's list in
    // vocabulary order; satellites lean toward their anchors.
    let room_classes: Vec<ObjectClass> = match &params.class_override {
        Some(list) => list.clone(),
        None => room_type.classes().to_vec(),
    };
    let anchor = anchor_class(room_type);
    let min_free = room_classes.len() * params.max_instances as usize + 8;
    if free.len() < min_free {
        return None;
    }

    let mut objects: Vec<ObjectInstance> = Vec::new();
    let mut occupied: Vec<(i32, i32)> = Vec::new();
    let mut classes_ordered = room_classes.clone();
    classes_ordered.sort_by_key(|c| (*c != anchor, c.ordinal()));

    for class in classes_ordered {
        let present = class == anchor || rng.gen_bool(params.presence_prob);
        if !present {
            continue;
        }
        let count = rng.gen_range(1..=params.max_instances);
        for _ in 0..count {
            let near_anchor = cue_pairs(room_type)
                .iter()
                .find(|(sat, _)| *sat == class)
                .map(|(_, anc)| *anc)
                .filter(|anc| objects.iter().any(|o| o.class == *anc))
                .filter(|_| rng.gen_bool(params.cue_prob));
            let candidates: Vec<(i32, i32)> = match near_anchor {
                Some(anc) => {
                    let anchors: Vec<(i32, i32)> = objects
                        .iter()
                        .filter(|o| o.class == anc)
                        .map(|o| (o.x, o.y))
                        .collect();
                    let (ax, ay) = *anchors.choose(rng).expect("anchor present");
                    free.iter()
                        .copied()
                        .filter(|&(x, y)| {
                            (x - ax).abs() <= params.cue_radius
                                && (y - ay).abs() <= params.cue_radius
                                && !occupied.contains(&(x, y))
                        })
                        .collect()
                }
                None => Vec::new(),
            };
            let pool: Vec<(i32, i32)> = if candidates.is_empty() {
                free.iter()
                    .copied()
                    .filter(|c| !occupied.contains(c))
                    .collect()
            } else {
                candidates
            };
            let &(x, y) = pool.choose(rng)?;
            occupied.push((x, y));
            objects.push(ObjectInstance {
                class,
                x,
                y,
                height_band: class.height_band(),
            });
        }
    }

    // Keep object records in a stable order independent of placement order.
    objects.sort_by_key(|o| (o.class.ordinal(), o.y, o.x));
    Scene::new(
        id.to_string(),
        room_type,
        split,
        width,
        height,
        walls,
        objects,
    )
    .ok()
}

/// The full benchmark corpus: 30 scenes per room type, split 20/5/5 into
/// train/val/test — 120 scenes total.
pub fn generate_corpus(seed: u64) -> Result<Corpus> {
    let params = GenParams::default();
    let mut scenes = Vec::with_capacity(120);
    for room in RoomType::ALL {
        for index in 0..30u32 {
            let split = match index {
                0..=19 => Split::Train,
                20..=24 => Split::Val,
                _ => Split::Test,
            };
            scenes.push(generate_scene(seed, room, split, index, &params)?);
        }
    }
    Ok(Corpus::new(scenes))
}

/// Twelve tiny open kitchens (8 train + 4 held-out validation layouts),
/// each holding one instance of five object classes, used by training
/// smoke tests. Deterministic.
///
/// The shape is deliberate: every scene contains the same five classes so
/// the policy must localize the *requested* class rather than "any
/// object", and validation scenes are layouts never trained on, so
/// validation success measures target finding rather than memorized
/// per-scene routes. Half the satellite placements ignore their
/// co-occurrence cue, keeping layout variety high.
pub fn smoke_corpus() -> Corpus {
    let params = GenParams {
        width_range: (9, 9),
        height_range: (9, 9),
        partition_range: (0, 0),
        presence_prob: 1.0,
        cue_prob: 0.5,
        cue_radius: 2,
        max_instances: 1,
        class_override: Some(vec![
            ObjectClass::Refrigerator,
            ObjectClass::Toaster,
            ObjectClass::CoffeeMaker,
            ObjectClass::Bowl,
            ObjectClass::Microwave,
        ]),
    };
    let mut scenes = Vec::with_capacity(12);
    for i in 0..8u32 {
        scenes.push(
            generate_scene(0xA77E57, RoomType::Kitchen, Split::Train, i, &params)
                .expect("smoke corpus generates"),
        );
    }
    for i in 0..4u32 {
        scenes.push(
            generate_scene(0xA77E57, RoomType::Kitchen, Split::Val, i, &params)
                .expect("smoke corpus generates"),
        );
    }
    Corpus::new(scenes)
}

const TASK_ATTEMPT_CAP: u32 = 1000;

/// Samples a solvable task: uniform room type (among those present in the
/// split), then uniform scene of that type, then uniform present target
/// class, free start cell, and heading, with level tilt. Resamples until
/// the BFS oracle confirms solvability.
pub fn sample_task(corpus: &Corpus, split: Split, rng: &mut ChaCha8Rng) -> Result<Task> {
    let rooms = corpus.room_types_in_split(split);
    if rooms.is_empty() {
        return Err(EnvError::EmptySplit(split));
    }
    for _ in 0..TASK_ATTEMPT_CAP {
        let room = *rooms.choose(rng).expect("rooms non-empty");
        if let Some(task) = try_sample_in_room(corpus, split, room, rng) {
            return Ok(task);
        }
    }
    Err(EnvError::UnsolvableTask {
        attempts: TASK_ATTEMPT_CAP,
    })
}

/// Samples a solvable task constrained to one room type within `split`.
/// Errors when the split holds no scenes of that room type, or when no
/// solvable task is found within the attempt cap.
pub fn sample_task_in_room(
    corpus: &Corpus,
    split: Split,
    room: RoomType,
    rng: &mut ChaCha8Rng,
) -> Result<Task> {
    if !corpus.room_types_in_split(split).contains(&room) {
        return Err(EnvError::EmptySplit(split));
    }
    for _ in 0..TASK_ATTEMPT_CAP {
        if let Some(task) = try_sample_in_room(corpus, split, room, rng) {
            return Ok(task);
        }
    }
    Err(EnvError::UnsolvableTask {
        attempts: TASK_ATTEMPT_CAP,
    })
}

/// Samples a solvable start pose in one scene for a fixed target class
/// (free cell, random heading, zero tilt). Errors when the class is absent
/// from the scene or no solvable pose turns up within the attempt cap.
pub fn sample_start(scene: &Scene, target: ObjectClass, rng: &mut ChaCha8Rng) -> Result<AgentPose> {
    if !scene.present_classes().contains(&target) {
        return Err(EnvError::UnknownClass(format!(
            "{} (not present in scene {})",
            target.name(),
            scene.id
        )));
    }
    for _ in 0..TASK_ATTEMPT_CAP {
        let free = scene.free_cells();
        let &(x, y) = free.choose(rng).expect("scenes have free cells");
        let heading = 45 * rng.gen_range(0..8u16);
        let start = AgentPose::new(x, y, heading, 0);
        if shortest_path_len(scene, target, &start).is_some() {
            return Ok(start);
        }
    }
    Err(EnvError::UnsolvableTask {
        attempts: TASK_ATTEMPT_CAP,
    })
}

/// One sampling attempt: scene of `room` in `split`, present class, free
/// start cell, random heading, zero tilt. `None` when the draw is
/// unsolvable or the scene holds no objects.
fn try_sample_in_room(
    corpus: &Corpus,
    split: Split,
    room: RoomType,
    rng: &mut ChaCha8Rng,
) -> Option<Task> {
    let scene_indices: Vec<usize> = corpus
        .indices_in_split(split)
        .into_iter()
        .filter(|&i| corpus.scenes[i].room_type == room)
        .collect();
    let scene_index = *scene_indices.choose(rng)?;
    let scene = &corpus.scenes[scene_index];
    let classes = scene.present_classes();
    if classes.is_empty() {
        return None;
    }
    let target = *classes.choose(rng).expect("non-empty");
    let free = scene.free_cells();
    let &(x, y) = free.choose(rng).expect("scenes have free cells");
    let heading = 45 * rng.gen_range(0..8u16);
    let start = AgentPose::new(x, y, heading, 0);
    if shortest_path_len(scene, target, &start).is_some() {
        Some(Task {
            scene_index,
            target,
            start,
        })
    } else {
        None
    }
}
