//! Shortest-path oracle over the full pose space.
//!
//! Breadth-first search on (cell × heading × tilt) states with the five
//! movement actions at unit cost. Goal states are exactly the poses where
//! the success condition holds, so the returned length counts the minimum
//! movement actions before `Done` — `Done` itself is excluded.

use std::collections::VecDeque;

use super::{is_success, step, Action, AgentPose, ObjectClass, Scene};

const HEADINGS: usize = 8;
const TILTS: [i8; 3] = [-30, 0, 30];

fn state_id(scene: &Scene, pose: &AgentPose) -> usize {
    let cell = (pose.y * scene.width + pose.x) as usize;
    (cell * HEADINGS + pose.heading_index()) * TILTS.len() + pose.tilt_index()
}

/// Minimum number of movement actions from `start` to any success pose for
/// `target`, or `None` when no success pose is reachable. A start that
/// already satisfies the success condition yields `Some(0)`.
pub fn shortest_path_len(scene: &Scene, target: ObjectClass, start: &AgentPose) -> Option<usize> {
    if !start.is_valid_in(scene) {
        return None;
    }
    if is_success(scene, start, target) {
        return Some(0);
    }
    let states = (scene.width * scene.height) as usize * HEADINGS * TILTS.len();
    let mut dist: Vec<u32> = vec![u32::MAX; states];
    let mut queue = VecDeque::new();
    dist[state_id(scene, start)] = 0;
    queue.push_back(*start);
    while let Some(pose) = queue.pop_front() {
        let d = dist[state_id(scene, &pose)];
        for action in Action::MOVEMENT {
            let next = step(scene, target, &pose, action).pose;
            let id = state_id(scene, &next);
            if dist[id] != u32::MAX {
                continue;
            }
            if is_success(scene, &next, target) {
                return Some(d as usize + 1);
            }
            dist[id] = d + 1;
            queue.push_back(next);
        }
    }
    None
}

/// Minimum number of movement actions from `start` to the exact pose `goal`,
/// or `None` when `goal` is unreachable. Identical start and goal yield
/// `Some(0)`. Movement outcomes never depend on the navigation target, so
/// this uses a fixed placeholder class when stepping.
pub fn pose_distance(scene: &Scene, start: &AgentPose, goal: &AgentPose) -> Option<usize> {
    if !start.is_valid_in(scene) || !goal.is_valid_in(scene) {
        return None;
    }
    if start == goal {
        return Some(0);
    }
    let placeholder = ObjectClass::Bowl;
    let goal_id = state_id(scene, goal);
    let states = (scene.width * scene.height) as usize * HEADINGS * TILTS.len();
    let mut dist: Vec<u32> = vec![u32::MAX; states];
    let mut queue = VecDeque::new();
    dist[state_id(scene, start)] = 0;
    queue.push_back(*start);
    while let Some(pose) = queue.pop_front() {
        let d = dist[state_id(scene, &pose)];
        for action in Action::MOVEMENT {
            let next = step(scene, placeholder, &pose, action).pose;
            let id = state_id(scene, &next);
            if dist[id] != u32::MAX {
                continue;
            }
            if id == goal_id {
                return Some(d as usize + 1);
            }
            dist[id] = d + 1;
            queue.push_back(next);
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::{HeightBand, ObjectInstance, RoomType, Split};

    fn open_5x5(objects: Vec<ObjectInstance>) -> Scene {
        Scene::new(
            "bfs_open_5x5".into(),
            RoomType::Kitchen,
            Split::Train,
            5,
            5,
            vec![false; 25],
            objects,
        )
        .unwrap()
    }

    fn bowl(x: i32, y: i32) -> ObjectInstance {
        ObjectInstance {
            class: ObjectClass::Bowl,
            x,
            y,
            height_band: HeightBand::Mid,
        }
    }

    #[test]
    fn start_on_goal_is_zero() {
        let scene = open_5x5(vec![bowl(3, 2)]);
        let start = AgentPose::new(2, 2, 0, 0);
        assert_eq!(
            shortest_path_len(&scene, ObjectClass::Bowl, &start),
            Some(0)
        );
    }

    #[test]
    fn facing_away_needs_three_rotations() {
        // Target 4 cells away on the +x axis (exactly 1.0 m, in range),
        // but the agent faces −x. Three 45° rotations reach heading 315°,
        // whose inclusive frustum boundary contains the +x axis; two
        // rotations (heading 270°) do not. Hand-enumerated: L = 3.
        let scene = open_5x5(vec![bowl(4, 2)]);
        let start = AgentPose::new(0, 2, 180, 0);
        assert_eq!(
            shortest_path_len(&scene, ObjectClass::Bowl, &start),
            Some(3)
        );
    }

    #[test]
    fn corner_to_corner_needs_rotation_and_two_moves() {
        // (0,0) → (4,4) is √32 ≈ 5.66 cells, out of the 4-cell success
        // range. Rotate onto the diagonal (1 action) then two diagonal
        // moves to (2,2): √8 ≈ 2.83 cells, facing the target. No 2-action
        // plan reaches any cell within range, so L = 3 by enumeration.
        let scene = open_5x5(vec![bowl(4, 4)]);
        let start = AgentPose::new(0, 0, 0, 0);
        assert_eq!(
            shortest_path_len(&scene, ObjectClass::Bowl, &start),
            Some(3)
        );
    }

    #[test]
    fn tilt_mismatch_costs_one_look() {
        // Low-band target needs a LookDown from level tilt.
        let target = ObjectInstance {
            class: ObjectClass::Box,
            x: 3,
            y: 2,
            height_band: HeightBand::Low,
        };
        let scene = open_5x5(vec![target]);
        let start = AgentPose::new(2, 2, 0, 0);
        assert_eq!(shortest_path_len(&scene, ObjectClass::Box, &start), Some(1));
    }

    #[test]
    fn absent_class_is_unreachable() {
        let scene = open_5x5(vec![bowl(3, 2)]);
        let start = AgentPose::new(2, 2, 0, 0);
        assert_eq!(
            shortest_path_len(&scene, ObjectClass::Toaster, &start),
            None
        );
    }

    #[test]
    fn walled_off_target_is_unreachable() {
        // Vertical wall with no gap separates the agent from the target.
        let mut walls = vec![false; 25];
        for y in 0..5 {
            walls[(y * 5 + 2) as usize] = true;
        }
        let scene = Scene::new(
            "bfs_walled".into(),
            RoomType::Kitchen,
            Split::Train,
            5,
            5,
            walls,
            vec![bowl(4, 2)],
        )
        .unwrap();
        let start = AgentPose::new(0, 2, 0, 0);
        assert_eq!(shortest_path_len(&scene, ObjectClass::Bowl, &start), None);
    }

    #[test]
    fn repeated_runs_agree() {
        let scene = open_5x5(vec![bowl(4, 4)]);
        let start = AgentPose::new(0, 0, 180, -30);
        let a = shortest_path_len(&scene, ObjectClass::Bowl, &start);
        let b = shortest_path_len(&scene, ObjectClass::Bowl, &start);
        assert_eq!(a, b);
        assert!(a.is_some());
    }

    #[test]
    fn pose_distance_counts_exact_moves() {
        let scene = open_5x5(vec![]);
        // Facing +x at (0,2): three forward moves reach (3,2) facing +x.
        let start = AgentPose::new(0, 2, 0, 0);
        let goal = AgentPose::new(3, 2, 0, 0);
        assert_eq!(pose_distance(&scene, &start, &goal), Some(3));
        // Same cell but rotated 90° costs two 45° rotations.
        let rotated = AgentPose::new(0, 2, 90, 0);
        assert_eq!(pose_distance(&scene, &start, &rotated), Some(2));
        // Tilt change costs one look action.
        let tilted = AgentPose::new(0, 2, 0, 30);
        assert_eq!(pose_distance(&scene, &start, &tilted), Some(1));
        // Identical poses are distance zero.
        assert_eq!(pose_distance(&scene, &start, &start), Some(0));
    }

    #[test]
    fn pose_distance_blocked_goal_is_unreachable() {
        let mut walls = vec![false; 25];
        for y in 0..5 {
            walls[(y * 5 + 2) as usize] = true;
        }
        let scene = Scene::new(
            "pose_walled".into(),
            RoomType::Kitchen,
            Split::Train,
            5,
            5,
            walls,
            vec![],
        )
        .unwrap();
        let start = AgentPose::new(0, 2, 0, 0);
        let goal = AgentPose::new(4, 2, 0, 0);
        assert_eq!(pose_distance(&scene, &start, &goal), None);
        // A goal standing on a wall cell is invalid, hence unreachable.
        let on_wall = AgentPose::new(2, 2, 0, 0);
        assert_eq!(pose_distance(&scene, &start, &on_wall), None);
    }

    #[test]
    fn pose_distance_lower_bounds_any_walk() {
        // Random walks from a pose: the BFS distance back to each visited
        // pose never exceeds the number of actions the walk spent.
        use rand::SeedableRng;
        let scene = open_5x5(vec![bowl(4, 4)]);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let start = AgentPose::new(0, 0, 0, 0);
        let mut pose = start;
        for taken in 1..=40usize {
            use rand::Rng;
            let action = Action::MOVEMENT[rng.gen_range(0..Action::MOVEMENT.len())];
            pose = step(&scene, ObjectClass::Bowl, &pose, action).pose;
            let d = pose_distance(&scene, &start, &pose).expect("reachable");
            assert!(d <= taken, "distance {d} exceeds walk length {taken}");
        }
    }
}
