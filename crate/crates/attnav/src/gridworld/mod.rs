//! Discrete navigation environment.
//!
//! A [`Scene`] is a wall/free occupancy grid (0.25 m cells) populated with
//! typed objects that sit in one of three height bands. The agent's pose is
//! a cell plus a heading (multiples of 45°) and a camera tilt
//! (−30°/0°/+30°). Six actions drive it; every non-terminating action costs
//! −0.01 reward, a successful `Done` pays +5, a failed `Done` ends the
//! episode at 0.
//!
//! Visibility ([`in_view`]) requires four things at once: the object's
//! height band matches the camera tilt, it lies within 5 m, it falls inside
//! the 90° frustum around the heading, and the straight line of sight
//! (Bresenham over cells) is not blocked by a wall. Success
//! ([`is_success`]) is a visible target instance within 1 m.
//!
//! All geometry on the frustum and range boundaries is evaluated in exact
//! integer arithmetic so boundary cells never flip with rounding.

mod corpus;
mod generate;
mod pathing;

pub use corpus::{
    load_corpus, load_scene, save_corpus, save_scene, scene_from_str, scene_to_string,
};
pub use generate::{
    generate_corpus, generate_scene, sample_start, sample_task, sample_task_in_room, smoke_corpus,
    GenParams,
};
pub use pathing::{pose_distance, shortest_path_len};

use thiserror::Error;

/// Side length of one grid cell in meters.
pub const CELL_SIZE_M: f64 = 0.25;
/// Maximum viewing distance in meters.
pub const VIEW_RANGE_M: f64 = 5.0;
/// Success requires a visible target instance within this range (meters).
pub const SUCCESS_RANGE_M: f64 = 1.0;
/// Reward for every action except a successful `Done` ending the episode.
pub const STEP_PENALTY: f64 = -0.01;
/// Reward for a successful `Done`.
pub const SUCCESS_REWARD: f64 = 5.0;
/// A failed `Done` ends the episode with this reward.
pub const FAILED_DONE_REWARD: f64 = 0.0;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("scene generation failed after {attempts} attempts: {reason}")]
    GenerationFailed { attempts: u32, reason: String },
    #[error("no solvable task found after {attempts} attempts")]
    UnsolvableTask { attempts: u32 },
    #[error("split {0:?} has no scenes")]
    EmptySplit(Split),
    #[error("unknown object class {0:?}")]
    UnknownClass(String),
    #[error("unknown room type {0:?}")]
    UnknownRoomType(String),
    #[error("unknown split {0:?}")]
    UnknownSplit(String),
    #[error("unknown height band {0:?}")]
    UnknownHeightBand(String),
    #[error("scene {id}: {reason}")]
    InvalidScene { id: String, reason: String },
    #[error("scene io: {0}")]
    Io(#[from] std::io::Error),
    #[error("scene parse: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, EnvError>;

// ── Object and room vocabulary ───────────────────────────────────────────

/// Every object class that can appear in a scene (union of all room lists).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ObjectClass {
    Toaster,
    Microwave,
    Refrigerator,
    CoffeeMaker,
    GarbageCan,
    Box,
    Bowl,
    Pillow,
    Laptop,
    Television,
    Plant,
    Lamp,
    Book,
    AlarmClock,
    Sink,
    ToiletPaper,
    SoapBottle,
    LightSwitch,
}

impl ObjectClass {
    pub const ALL: [ObjectClass; 18] = [
        ObjectClass::Toaster,
        ObjectClass::Microwave,
        ObjectClass::Refrigerator,
        ObjectClass::CoffeeMaker,
        ObjectClass::GarbageCan,
        ObjectClass::Box,
        ObjectClass::Bowl,
        ObjectClass::Pillow,
        ObjectClass::Laptop,
        ObjectClass::Television,
        ObjectClass::Plant,
        ObjectClass::Lamp,
        ObjectClass::Book,
        ObjectClass::AlarmClock,
        ObjectClass::Sink,
        ObjectClass::ToiletPaper,
        ObjectClass::SoapBottle,
        ObjectClass::LightSwitch,
    ];

    /// Stable index into [`Self::ALL`]; also the embedding stream id.
    pub fn ordinal(self) -> usize {
        Self::ALL
            .iter()
            .position(|&c| c == self)
            .expect("class in ALL")
    }

    pub fn name(self) -> &'static str {
        match self {
            ObjectClass::Toaster => "toaster",
            ObjectClass::Microwave => "microwave",
            ObjectClass::Refrigerator => "refrigerator",
            ObjectClass::CoffeeMaker => "coffee_maker",
            ObjectClass::GarbageCan => "garbage_can",
            ObjectClass::Box => "box",
            ObjectClass::Bowl => "bowl",
            ObjectClass::Pillow => "pillow",
            ObjectClass::Laptop => "laptop",
            ObjectClass::Television => "television",
            ObjectClass::Plant => "plant",
            ObjectClass::Lamp => "lamp",
            ObjectClass::Book => "book",
            ObjectClass::AlarmClock => "alarm_clock",
            ObjectClass::Sink => "sink",
            ObjectClass::ToiletPaper => "toilet_paper",
            ObjectClass::SoapBottle => "soap_bottle",
            ObjectClass::LightSwitch => "light_switch",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|c| c.name() == name)
            .ok_or_else(|| EnvError::UnknownClass(name.to_string()))
    }

    /// The height band instances of this class occupy.
    pub fn height_band(self) -> HeightBand {
        match self {
            ObjectClass::Pillow | ObjectClass::GarbageCan | ObjectClass::Box => HeightBand::Low,
            ObjectClass::Television | ObjectClass::Lamp | ObjectClass::LightSwitch => {
                HeightBand::High
            }
            _ => HeightBand::Mid,
        }
    }
}

impl std::fmt::Display for ObjectClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RoomType {
    Kitchen,
    LivingRoom,
    Bedroom,
    Bathroom,
}

impl RoomType {
    pub const ALL: [RoomType; 4] = [
        RoomType::Kitchen,
        RoomType::LivingRoom,
        RoomType::Bedroom,
        RoomType::Bathroom,
    ];

    pub fn ordinal(self) -> usize {
        Self::ALL
            .iter()
            .position(|&r| r == self)
            .expect("room in ALL")
    }

    pub fn name(self) -> &'static str {
        match self {
            RoomType::Kitchen => "kitchen",
            RoomType::LivingRoom => "living_room",
            RoomType::Bedroom => "bedroom",
            RoomType::Bathroom => "bathroom",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|r| r.name() == name)
            .ok_or_else(|| EnvError::UnknownRoomType(name.to_string()))
    }

    /// Object classes that may appear in rooms of this type.
    pub fn classes(self) -> &'static [ObjectClass] {
        match self {
            RoomType::Kitchen => &[
                ObjectClass::Toaster,
                ObjectClass::Microwave,
                ObjectClass::Refrigerator,
                ObjectClass::CoffeeMaker,
                ObjectClass::GarbageCan,
                ObjectClass::Box,
                ObjectClass::Bowl,
            ],
            RoomType::LivingRoom => &[
                ObjectClass::Pillow,
                ObjectClass::Laptop,
                ObjectClass::Television,
                ObjectClass::GarbageCan,
                ObjectClass::Box,
                ObjectClass::Bowl,
            ],
            RoomType::Bedroom => &[
                ObjectClass::Plant,
                ObjectClass::Lamp,
                ObjectClass::Book,
                ObjectClass::AlarmClock,
            ],
            RoomType::Bathroom => &[
                ObjectClass::Sink,
                ObjectClass::ToiletPaper,
                ObjectClass::SoapBottle,
                ObjectClass::LightSwitch,
            ],
        }
    }

    /// Evaluation episode cap for rooms of this type.
    pub fn eval_step_cap(self) -> usize {
        match self {
            RoomType::LivingRoom => 200,
            _ => 100,
        }
    }
}

impl std::fmt::Display for RoomType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|s| s.name() == name)
            .ok_or_else(|| EnvError::UnknownSplit(name.to_string()))
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Vertical placement of an object; gates visibility against camera tilt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HeightBand {
    Low,
    Mid,
    High,
}

impl HeightBand {
    pub fn name(self) -> &'static str {
        match self {
            HeightBand::Low => "low",
            HeightBand::Mid => "mid",
            HeightBand::High => "high",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "low" => Ok(HeightBand::Low),
            "mid" => Ok(HeightBand::Mid),
            "high" => Ok(HeightBand::High),
            other => Err(EnvError::UnknownHeightBand(other.to_string())),
        }
    }
}

/// Bands visible at a camera tilt: looking down sees low+mid, level sees
/// mid+high, looking up sees high only.
pub fn bands_visible_at_tilt(tilt_deg: i8) -> &'static [HeightBand] {
    match tilt_deg {
        -30 => &[HeightBand::Low, HeightBand::Mid],
        0 => &[HeightBand::Mid, HeightBand::High],
        30 => &[HeightBand::High],
        other => panic!("invalid tilt {other}"),
    }
}

// ── Scene and agent state ────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ObjectInstance {
    pub class: ObjectClass,
    pub x: i32,
    pub y: i32,
    pub height_band: HeightBand,
}

/// One generated room: occupancy grid plus typed objects.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub id: String,
    pub room_type: RoomType,
    pub split: Split,
    pub cell_size_m: f64,
    pub width: i32,
    pub height: i32,
    /// Row-major occupancy; `true` is a wall.
    walls: Vec<bool>,
    pub objects: Vec<ObjectInstance>,
}

impl Scene {
    pub fn new(
        id: String,
        room_type: RoomType,
        split: Split,
        width: i32,
        height: i32,
        walls: Vec<bool>,
        objects: Vec<ObjectInstance>,
    ) -> Result<Self> {
        let scene = Scene {
            id,
            room_type,
            split,
            cell_size_m: CELL_SIZE_M,
            width,
            height,
            walls,
            objects,
        };
        scene.validate()?;
        Ok(scene)
    }

    fn invalid(&self, reason: impl Into<String>) -> EnvError {
        EnvError::InvalidScene {
            id: self.id.clone(),
            reason: reason.into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width <= 0 || self.height <= 0 {
            return Err(self.invalid("non-positive dimensions"));
        }
        if self.walls.len() != (self.width * self.height) as usize {
            return Err(self.invalid(format!(
                "wall buffer has {} cells for a {}×{} grid",
                self.walls.len(),
                self.width,
                self.height
            )));
        }
        for obj in &self.objects {
            if !self.in_bounds(obj.x, obj.y) {
                return Err(self.invalid(format!(
                    "object {} at ({}, {}) out of bounds",
                    obj.class, obj.x, obj.y
                )));
            }
            if self.is_wall(obj.x, obj.y) {
                return Err(self.invalid(format!(
                    "object {} at ({}, {}) sits on a wall",
                    obj.class, obj.x, obj.y
                )));
            }
        }
        Ok(())
    }

    pub fn in_bounds(&self, x: i32, y: i32) -> bool {
        x >= 0 && y >= 0 && x < self.width && y < self.height
    }

    /// Out-of-bounds counts as wall, so movement and sight lines stop at
    /// the grid edge without special cases.
    pub fn is_wall(&self, x: i32, y: i32) -> bool {
        if !self.in_bounds(x, y) {
            return true;
        }
        self.walls[(y * self.width + x) as usize]
    }

    pub fn is_free(&self, x: i32, y: i32) -> bool {
        !self.is_wall(x, y)
    }

    /// Free cells in row-major order.
    pub fn free_cells(&self) -> Vec<(i32, i32)> {
        let mut cells = Vec::new();
        for y in 0..self.height {
            for x in 0..self.width {
                if self.is_free(x, y) {
                    cells.push((x, y));
                }
            }
        }
        cells
    }

    /// Classes with at least one instance, in vocabulary order.
    pub fn present_classes(&self) -> Vec<ObjectClass> {
        ObjectClass::ALL
            .iter()
            .copied()
            .filter(|c| self.objects.iter().any(|o| o.class == *c))
            .collect()
    }

    pub fn instances_of(&self, class: ObjectClass) -> impl Iterator<Item = &ObjectInstance> {
        self.objects.iter().filter(move |o| o.class == class)
    }

    /// Whether every free cell can reach every other (4-connected).
    pub fn free_space_connected(&self) -> bool {
        let free = self.free_cells();
        let Some(&start) = free.first() else {
            return true;
        };
        let mut seen = vec![false; (self.width * self.height) as usize];
        let mut queue = std::collections::VecDeque::new();
        seen[(start.1 * self.width + start.0) as usize] = true;
        queue.push_back(start);
        let mut count = 1;
        while let Some((x, y)) = queue.pop_front() {
            for (dx, dy) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
                let (nx, ny) = (x + dx, y + dy);
                if self.is_free(nx, ny) && !seen[(ny * self.width + nx) as usize] {
                    seen[(ny * self.width + nx) as usize] = true;
                    count += 1;
                    queue.push_back((nx, ny));
                }
            }
        }
        count == free.len()
    }
}

/// Ordered collection of scenes with split/room lookups.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub scenes: Vec<Scene>,
}

impl Corpus {
    pub fn new(scenes: Vec<Scene>) -> Self {
        Corpus { scenes }
    }

    pub fn indices_in_split(&self, split: Split) -> Vec<usize> {
        (0..self.scenes.len())
            .filter(|&i| self.scenes[i].split == split)
            .collect()
    }

    /// Room types with at least one scene in `split`, in vocabulary order.
    pub fn room_types_in_split(&self, split: Split) -> Vec<RoomType> {
        RoomType::ALL
            .iter()
            .copied()
            .filter(|r| {
                self.scenes
                    .iter()
                    .any(|s| s.split == split && s.room_type == *r)
            })
            .collect()
    }

    pub fn find(&self, id: &str) -> Option<&Scene> {
        self.scenes.iter().find(|s| s.id == id)
    }
}

/// Cell position plus heading (multiples of 45°) and camera tilt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct AgentPose {
    pub x: i32,
    pub y: i32,
    /// Degrees in {0, 45, …, 315}; 0° points toward +x, 90° toward +y.
    pub heading_deg: u16,
    /// Degrees in {−30, 0, +30}.
    pub tilt_deg: i8,
}

impl AgentPose {
    pub fn new(x: i32, y: i32, heading_deg: u16, tilt_deg: i8) -> Self {
        debug_assert!(heading_deg < 360 && heading_deg.is_multiple_of(45));
        debug_assert!(matches!(tilt_deg, -30 | 0 | 30));
        AgentPose {
            x,
            y,
            heading_deg,
            tilt_deg,
        }
    }

    pub fn heading_index(&self) -> usize {
        (self.heading_deg / 45) as usize
    }

    pub fn tilt_index(&self) -> usize {
        match self.tilt_deg {
            -30 => 0,
            0 => 1,
            30 => 2,
            other => panic!("invalid tilt {other}"),
        }
    }

    /// Unit step for this heading (diagonals take one diagonal cell step).
    pub fn heading_dir(&self) -> (i32, i32) {
        heading_dir(self.heading_deg)
    }

    pub fn is_valid_in(&self, scene: &Scene) -> bool {
        scene.is_free(self.x, self.y)
            && self.heading_deg < 360
            && self.heading_deg.is_multiple_of(45)
            && matches!(self.tilt_deg, -30 | 0 | 30)
    }
}

pub fn heading_dir(heading_deg: u16) -> (i32, i32) {
    match heading_deg {
        0 => (1, 0),
        45 => (1, 1),
        90 => (0, 1),
        135 => (-1, 1),
        180 => (-1, 0),
        225 => (-1, -1),
        270 => (0, -1),
        315 => (1, -1),
        other => panic!("invalid heading {other}"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    MoveAhead,
    RotateLeft,
    RotateRight,
    LookUp,
    LookDown,
    Done,
}

impl Action {
    pub const ALL: [Action; 6] = [
        Action::MoveAhead,
        Action::RotateLeft,
        Action::RotateRight,
        Action::LookUp,
        Action::LookDown,
        Action::Done,
    ];

    /// Actions that change pose; `Done` is excluded.
    pub const MOVEMENT: [Action; 5] = [
        Action::MoveAhead,
        Action::RotateLeft,
        Action::RotateRight,
        Action::LookUp,
        Action::LookDown,
    ];

    pub fn ordinal(self) -> usize {
        Self::ALL
            .iter()
            .position(|&a| a == self)
            .expect("action in ALL")
    }

    pub fn from_ordinal(i: usize) -> Option<Action> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Action::MoveAhead => "move_ahead",
            Action::RotateLeft => "rotate_left",
            Action::RotateRight => "rotate_right",
            Action::LookUp => "look_up",
            Action::LookDown => "look_down",
            Action::Done => "done",
        }
    }
}

impl std::fmt::Display for Action {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A solvable episode specification: scene (by corpus index), target class,
/// and start pose.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Task {
    pub scene_index: usize,
    pub target: ObjectClass,
    pub start: AgentPose,
}

impl Task {
    pub fn scene<'c>(&self, corpus: &'c Corpus) -> &'c Scene {
        &corpus.scenes[self.scene_index]
    }
}

/// Result of applying one action.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub pose: AgentPose,
    pub reward: f64,
    /// The episode ended (only `Done` ends it here; step caps live in the
    /// rollout loop).
    pub done: bool,
    pub success: bool,
}

// ── Geometry ─────────────────────────────────────────────────────────────

/// Euclidean distance between cell centers, in meters.
pub fn distance_m(scene: &Scene, ax: i32, ay: i32, bx: i32, by: i32) -> f64 {
    let dx = (bx - ax) as f64;
    let dy = (by - ay) as f64;
    scene.cell_size_m * (dx * dx + dy * dy).sqrt()
}

/// Whether the cell offset `(dx, dy)` lies inside the 90° frustum around
/// `heading_deg`, boundary inclusive. Exact integer arithmetic: the angle
/// to the offset is ≤ 45° iff `h·d ≥ 0` and `2 (h·d)² ≥ (h·h)(d·d)`.
/// The zero offset (same cell) counts as in-frustum.
pub fn in_frustum(heading_deg: u16, dx: i32, dy: i32) -> bool {
    let (hx, hy) = heading_dir(heading_deg);
    let (hx, hy, dx, dy) = (hx as i64, hy as i64, dx as i64, dy as i64);
    let hd = hx * dx + hy * dy;
    if hd < 0 {
        return false;
    }
    2 * hd * hd >= (hx * hx + hy * hy) * (dx * dx + dy * dy)
}

/// Cells strictly between `(x0, y0)` and `(x1, y1)` on the Bresenham
/// discretization of the segment, in walk order.
fn line_between(x0: i32, y0: i32, x1: i32, y1: i32) -> Vec<(i32, i32)> {
    let mut cells = Vec::new();
    let (mut x, mut y) = (x0, y0);
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let sx = if x0 < x1 { 1 } else { -1 };
    let sy = if y0 < y1 { 1 } else { -1 };
    let mut err = dx + dy;
    loop {
        if (x, y) != (x0, y0) && (x, y) != (x1, y1) {
            cells.push((x, y));
        }
        if (x, y) == (x1, y1) {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
    cells
}

/// Line of sight between two cells: no wall on the strictly-between cells.
pub fn line_of_sight(scene: &Scene, x0: i32, y0: i32, x1: i32, y1: i32) -> bool {
    line_between(x0, y0, x1, y1)
        .into_iter()
        .all(|(x, y)| !scene.is_wall(x, y))
}

/// Whether `obj` is visible from `pose`: band matches tilt, within 5 m,
/// inside the 90° frustum, and unoccluded.
pub fn in_view(scene: &Scene, pose: &AgentPose, obj: &ObjectInstance) -> bool {
    if !bands_visible_at_tilt(pose.tilt_deg).contains(&obj.height_band) {
        return false;
    }
    if distance_m(scene, pose.x, pose.y, obj.x, obj.y) > VIEW_RANGE_M {
        return false;
    }
    if !in_frustum(pose.heading_deg, obj.x - pose.x, obj.y - pose.y) {
        return false;
    }
    line_of_sight(scene, pose.x, pose.y, obj.x, obj.y)
}

/// Success: some instance of `target` is within 1 m and in view.
pub fn is_success(scene: &Scene, pose: &AgentPose, target: ObjectClass) -> bool {
    scene.instances_of(target).any(|obj| {
        distance_m(scene, pose.x, pose.y, obj.x, obj.y) <= SUCCESS_RANGE_M
            && in_view(scene, pose, obj)
    })
}

// ── Dynamics ─────────────────────────────────────────────────────────────

/// Applies `action` to `pose`. Blocked moves and tilt-limit looks leave the
/// pose unchanged but still cost the step penalty. Only `Done` terminates:
/// +5 when the success condition holds, else reward 0 and an unsuccessful
/// end.
pub fn step(scene: &Scene, target: ObjectClass, pose: &AgentPose, action: Action) -> StepOutcome {
    debug_assert!(
        pose.is_valid_in(scene),
        "stepping from invalid pose {pose:?}"
    );
    match action {
        Action::Done => {
            let success = is_success(scene, pose, target);
            StepOutcome {
                pose: *pose,
                reward: if success {
                    SUCCESS_REWARD
                } else {
                    FAILED_DONE_REWARD
                },
                done: true,
                success,
            }
        }
        Action::MoveAhead => {
            let (dx, dy) = pose.heading_dir();
            let (nx, ny) = (pose.x + dx, pose.y + dy);
            let pose = if scene.is_free(nx, ny) {
                AgentPose {
                    x: nx,
                    y: ny,
                    ..*pose
                }
            } else {
                *pose
            };
            StepOutcome {
                pose,
                reward: STEP_PENALTY,
                done: false,
                success: false,
            }
        }
        Action::RotateLeft | Action::RotateRight => {
            let delta = if action == Action::RotateRight {
                45
            } else {
                315
            };
            StepOutcome {
                pose: AgentPose {
                    heading_deg: (pose.heading_deg + delta) % 360,
                    ..*pose
                },
                reward: STEP_PENALTY,
                done: false,
                success: false,
            }
        }
        Action::LookUp | Action::LookDown => {
            let delta: i8 = if action == Action::LookUp { 30 } else { -30 };
            StepOutcome {
                pose: AgentPose {
                    tilt_deg: (pose.tilt_deg + delta).clamp(-30, 30),
                    ..*pose
                },
                reward: STEP_PENALTY,
                done: false,
                success: false,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Open 5×5 room, no interior walls; bounds act as walls.
    pub(crate) fn open_scene(objects: Vec<ObjectInstance>) -> Scene {
        Scene::new(
            "test_open_5x5".into(),
            RoomType::Kitchen,
            Split::Train,
            5,
            5,
            vec![false; 25],
            objects,
        )
        .unwrap()
    }

    fn obj(class: ObjectClass, x: i32, y: i32, band: HeightBand) -> ObjectInstance {
        ObjectInstance {
            class,
            x,
            y,
            height_band: band,
        }
    }

    #[test]
    fn rotate_right_wraps_315_to_0() {
        let scene = open_scene(vec![]);
        let pose = AgentPose::new(2, 2, 315, 0);
        let out = step(&scene, ObjectClass::Bowl, &pose, Action::RotateRight);
        assert_eq!(out.pose.heading_deg, 0);
        assert_eq!(out.reward, STEP_PENALTY);
        assert!(!out.done);
    }

    #[test]
    fn rotate_left_wraps_0_to_315() {
        let scene = open_scene(vec![]);
        let pose = AgentPose::new(2, 2, 0, 0);
        let out = step(&scene, ObjectClass::Bowl, &pose, Action::RotateLeft);
        assert_eq!(out.pose.heading_deg, 315);
    }

    #[test]
    fn blocked_move_keeps_pose_and_costs_penalty() {
        let scene = open_scene(vec![]);
        // Facing +x from the right edge: the move is blocked by bounds.
        let pose = AgentPose::new(4, 2, 0, 0);
        let out = step(&scene, ObjectClass::Bowl, &pose, Action::MoveAhead);
        assert_eq!(out.pose, pose);
        assert_eq!(out.reward, STEP_PENALTY);
    }

    #[test]
    fn diagonal_heading_moves_diagonally() {
        let scene = open_scene(vec![]);
        let pose = AgentPose::new(1, 1, 45, 0);
        let out = step(&scene, ObjectClass::Bowl, &pose, Action::MoveAhead);
        assert_eq!((out.pose.x, out.pose.y), (2, 2));
    }

    #[test]
    fn tilt_clamps_at_limits() {
        let scene = open_scene(vec![]);
        let up = AgentPose::new(2, 2, 0, 30);
        let out = step(&scene, ObjectClass::Bowl, &up, Action::LookUp);
        assert_eq!(out.pose.tilt_deg, 30, "LookUp at +30 stays clamped");
        assert_eq!(out.reward, STEP_PENALTY);
        let down = AgentPose::new(2, 2, 0, -30);
        let out = step(&scene, ObjectClass::Bowl, &down, Action::LookDown);
        assert_eq!(out.pose.tilt_deg, -30);
    }

    #[test]
    fn tilt_steps_through_all_three_levels() {
        let scene = open_scene(vec![]);
        let mut pose = AgentPose::new(2, 2, 0, -30);
        pose = step(&scene, ObjectClass::Bowl, &pose, Action::LookUp).pose;
        assert_eq!(pose.tilt_deg, 0);
        pose = step(&scene, ObjectClass::Bowl, &pose, Action::LookUp).pose;
        assert_eq!(pose.tilt_deg, 30);
    }

    #[test]
    fn successful_done_pays_five() {
        let target = obj(ObjectClass::Bowl, 3, 2, HeightBand::Mid);
        let scene = open_scene(vec![target]);
        // One cell away, facing it, level tilt sees mid.
        let pose = AgentPose::new(2, 2, 0, 0);
        assert!(is_success(&scene, &pose, ObjectClass::Bowl));
        let out = step(&scene, ObjectClass::Bowl, &pose, Action::Done);
        assert!(out.done && out.success);
        assert_eq!(out.reward, SUCCESS_REWARD);
    }

    #[test]
    fn failed_done_ends_episode_with_zero_reward() {
        let target = obj(ObjectClass::Bowl, 3, 2, HeightBand::Mid);
        let scene = open_scene(vec![target]);
        // Facing away from the target: visible-condition fails.
        let pose = AgentPose::new(2, 2, 180, 0);
        let out = step(&scene, ObjectClass::Bowl, &pose, Action::Done);
        assert!(out.done && !out.success);
        assert_eq!(out.reward, FAILED_DONE_REWARD);
    }

    #[test]
    fn success_needs_range_and_view_together() {
        // Yardstick: 4 cells = 1.0 m is in range, 5 cells is not.
        let target = obj(ObjectClass::Bowl, 4, 2, HeightBand::Mid);
        let scene = open_scene(vec![target]);
        let near = AgentPose::new(0, 2, 0, 0);
        assert!(
            is_success(&scene, &near, ObjectClass::Bowl),
            "4 cells, facing"
        );
        // In range but looking up: mid band invisible at +30 tilt.
        let wrong_tilt = AgentPose::new(0, 2, 0, 30);
        assert!(!is_success(&scene, &wrong_tilt, ObjectClass::Bowl));
        // In range, level tilt, but facing away.
        let away = AgentPose::new(0, 2, 90, 0);
        assert!(!is_success(&scene, &away, ObjectClass::Bowl));
    }

    #[test]
    fn success_range_boundary_is_exact() {
        // (3, 2) offset: √13 ≈ 3.61 cells ≈ 0.90 m → within 1 m.
        let close = obj(ObjectClass::Bowl, 4, 4, HeightBand::Mid);
        let scene = open_scene(vec![close]);
        let pose = AgentPose::new(1, 2, 45, 0);
        assert!((distance_m(&scene, 1, 2, 4, 4) - 0.25 * 13f64.sqrt()).abs() < 1e-12);
        assert!(is_success(&scene, &pose, ObjectClass::Bowl));
    }

    #[test]
    fn walls_block_sight() {
        let mut walls = vec![false; 25];
        walls[2 * 5 + 2] = true; // wall at (2, 2)
        let target = obj(ObjectClass::Bowl, 4, 2, HeightBand::Mid);
        let scene = Scene::new(
            "test_wall".into(),
            RoomType::Kitchen,
            Split::Train,
            5,
            5,
            walls,
            vec![target],
        )
        .unwrap();
        let pose = AgentPose::new(0, 2, 0, 0);
        assert!(!in_view(&scene, &pose, &scene.objects[0]), "wall occludes");
        // Sidestep restores sight along an unblocked diagonal.
        let side = AgentPose::new(0, 1, 0, 0);
        let visible = in_view(&scene, &side, &scene.objects[0]);
        assert_eq!(
            visible,
            line_of_sight(&scene, 0, 1, 4, 2) && in_frustum(0, 4, 1)
        );
    }

    #[test]
    fn frustum_boundary_is_inclusive_and_exact() {
        // Heading +x: the 45° boundary contains exact diagonals.
        assert!(in_frustum(0, 3, 3));
        assert!(in_frustum(0, 3, -3));
        assert!(!in_frustum(0, 2, 3));
        assert!(!in_frustum(0, -1, 0));
        // Diagonal heading: boundary contains both axes.
        assert!(in_frustum(45, 1, 0));
        assert!(in_frustum(45, 0, 1));
        assert!(!in_frustum(45, 1, -1));
        // Same cell counts as in-frustum for every heading.
        for h in (0..360).step_by(45) {
            assert!(in_frustum(h as u16, 0, 0));
        }
    }

    #[test]
    fn view_range_boundary_is_exact() {
        // 20 cells = 5.0 m exactly → visible; 21 cells → not.
        let scene = Scene::new(
            "test_long".into(),
            RoomType::Kitchen,
            Split::Train,
            25,
            3,
            vec![false; 75],
            vec![
                obj(ObjectClass::Bowl, 20, 1, HeightBand::Mid),
                obj(ObjectClass::Toaster, 21, 1, HeightBand::Mid),
            ],
        )
        .unwrap();
        let pose = AgentPose::new(0, 1, 0, 0);
        assert!(in_view(&scene, &pose, &scene.objects[0]));
        assert!(!in_view(&scene, &pose, &scene.objects[1]));
    }

    #[test]
    fn band_visibility_table() {
        let cases = [
            (-30, HeightBand::Low, true),
            (-30, HeightBand::Mid, true),
            (-30, HeightBand::High, false),
            (0, HeightBand::Low, false),
            (0, HeightBand::Mid, true),
            (0, HeightBand::High, true),
            (30, HeightBand::Low, false),
            (30, HeightBand::Mid, false),
            (30, HeightBand::High, true),
        ];
        for (tilt, band, expect) in cases {
            assert_eq!(
                bands_visible_at_tilt(tilt).contains(&band),
                expect,
                "tilt {tilt} band {band:?}"
            );
        }
    }

    #[test]
    fn episode_reward_telescopes() {
        use rand::Rng;
        let target = obj(ObjectClass::Bowl, 3, 2, HeightBand::Mid);
        let scene = open_scene(vec![target]);
        let mut rng = crate::testkit::seeded_rng(77);
        for _ in 0..200 {
            let mut pose = AgentPose::new(0, 0, 0, 0);
            let mut total = 0.0;
            let mut non_done = 0;
            let mut success = false;
            for _ in 0..40 {
                let action = Action::ALL[rng.gen_range(0..6)];
                let out = step(&scene, ObjectClass::Bowl, &pose, action);
                total += out.reward;
                pose = out.pose;
                if out.done {
                    success = out.success;
                    break;
                }
                non_done += 1;
            }
            let expected =
                STEP_PENALTY * non_done as f64 + if success { SUCCESS_REWARD } else { 0.0 };
            assert!(
                (total - expected).abs() < 1e-12,
                "reward {total} != telescoped {expected}"
            );
        }
    }
}
