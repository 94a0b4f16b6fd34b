//! Sequence specification sampling and ordering.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::Vec3;
use crate::scene::{Aabb, SceneModel};
use crate::{Error, Result};

/// Rejection-loop cap per accepted sample.
pub const MAX_ATTEMPTS_PER_SAMPLE: usize = 1000;
/// Cost charged for switching scenes between consecutive sequences,
/// expressed in meters of walking.
pub const SCENE_CHANGE_COST: f64 = 100.0;

/// A task: a start region on the floor paired with a goal volume.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionPair {
    pub task_id: u32,
    pub start: Aabb,
    pub goal: Aabb,
}

/// One concrete sequence to record (or synthesize).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceSpec {
    pub scene_id: String,
    pub task_id: u32,
    /// Root position on the floor (z = floor height).
    pub start: Vec3,
    pub goal: Vec3,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskSampling {
    pub specs: Vec<SequenceSpec>,
    pub goal_attempts: usize,
    pub goals_accepted: usize,
}

/// Samples `per_pair` start/goal pairs from every region pair. Starts must
/// be on walkable floor and goals must pass the reachability test.
pub fn sample_tasks(
    regions: &[RegionPair],
    scene: &SceneModel,
    per_pair: usize,
    seed: u64,
    max_surface_dist: f64,
) -> Result<TaskSampling> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let floor = scene.floor_height().unwrap_or(0.0);
    let mut out = TaskSampling { specs: Vec::new(), goal_attempts: 0, goals_accepted: 0 };
    for pair in regions {
        Aabb::new(pair.start.min, pair.start.max)?;
        Aabb::new(pair.goal.min, pair.goal.max)?;
        for _ in 0..per_pair {
            let mut attempts = 0;
            let start = loop {
                attempts += 1;
                if attempts > MAX_ATTEMPTS_PER_SAMPLE {
                    return Err(Error::RegionInfeasible { task_id: pair.task_id, attempts: MAX_ATTEMPTS_PER_SAMPLE });
                }
                let p = pair.start.sample_uniform(&mut rng);
                if scene.is_walkable_point(p.x, p.y) {
                    break Vec3::new(p.x, p.y, floor);
                }
            };
            let goal = loop {
                attempts += 1;
                if attempts > MAX_ATTEMPTS_PER_SAMPLE {
                    return Err(Error::RegionInfeasible { task_id: pair.task_id, attempts: MAX_ATTEMPTS_PER_SAMPLE });
                }
                let g = pair.goal.sample_uniform(&mut rng);
                out.goal_attempts += 1;
                if scene.is_reachable(&g, max_surface_dist) {
                    out.goals_accepted += 1;
                    break g;
                }
            };
            out.specs.push(SequenceSpec { scene_id: scene.id().to_string(), task_id: pair.task_id, start, goal });
        }
    }
    Ok(out)
}

/// Total walking between consecutive starts, plus [`SCENE_CHANGE_COST`] per
/// scene switch.
pub fn transition_cost(specs: &[SequenceSpec]) -> f64 {
    specs
        .windows(2)
        .map(|w| if w[0].scene_id == w[1].scene_id { (w[1].start - w[0].start).norm() } else { SCENE_CHANGE_COST })
        .sum()
}

/// Groups specs by scene (first-appearance order) and orders each group by
/// a greedy nearest-neighbour tour from its first spec. Falls back to the
/// input order if that would be cheaper.
pub fn order_sequences(specs: &[SequenceSpec]) -> Vec<SequenceSpec> {
    let mut scenes: Vec<&str> = Vec::new();
    for s in specs {
        if !scenes.contains(&s.scene_id.as_str()) {
            scenes.push(&s.scene_id);
        }
    }
    let mut out = Vec::with_capacity(specs.len());
    for scene in scenes {
        let group: Vec<&SequenceSpec> = specs.iter().filter(|s| s.scene_id == scene).collect();
        let mut remaining: Vec<usize> = (1..group.len()).collect();
        let mut current = 0;
        out.push(group[0].clone());
        while !remaining.is_empty() {
            let (k, _) = remaining
                .iter()
                .enumerate()
                .map(|(k, &i)| (k, (group[i].start - group[current].start).norm()))
                .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
                .expect("non-empty");
            current = remaining.remove(k);
            out.push(group[current].clone());
        }
    }
    if transition_cost(&out) > transition_cost(specs) {
        return specs.to_vec();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::SceneSpec;
    use proptest::prelude::*;

    fn scene() -> SceneModel {
        SceneModel::new(SceneSpec {
            version: 1,
            id: "room".into(),
            boxes: vec![Aabb::new(Vec3::new(0.0, -2.0, 0.0), Vec3::new(2.0, 2.0, 2.0)).unwrap()],
            floor_height: Some(0.0),
            navigable: vec![[-2.0, -2.0], [2.0, -2.0], [2.0, 2.0], [-2.0, 2.0]],
            point_count: 500,
            seed: 0,
            tasks: vec![],
        })
        .unwrap()
    }

    fn region(min: [f64; 3], max: [f64; 3]) -> Aabb {
        Aabb::new(Vec3::from(min), Vec3::from(max)).unwrap()
    }

    #[test]
    fn goal_region_inside_box_is_infeasible() {
        let pair = RegionPair {
            task_id: 3,
            start: region([-1.5, -1.0, 0.0], [-1.0, 1.0, 0.1]),
            goal: region([0.5, -0.5, 0.5], [1.5, 0.5, 1.5]),
        };
        let err = sample_tasks(&[pair], &scene(), 2, 0, 1.0);
        assert!(matches!(err, Err(Error::RegionInfeasible { task_id: 3, .. })));
    }

    #[test]
    fn accepted_goals_are_reachable() {
        let s = scene();
        let pair = RegionPair {
            task_id: 1,
            start: region([-1.8, -1.8, 0.0], [-1.0, 1.8, 0.1]),
            goal: region([-1.8, -1.8, 0.2], [-0.2, 1.8, 1.8]),
        };
        let out = sample_tasks(&[pair], &s, 50, 9, 1.0).unwrap();
        assert_eq!(out.specs.len(), 50);
        assert!(out.specs.iter().all(|sp| s.is_reachable(&sp.goal, 1.0)));
        assert_eq!(out.goal_attempts, out.goals_accepted);
    }

    #[test]
    fn acceptance_fraction_tracks_free_volume() {
        let s = scene();
        // Half of the goal region lies inside the box.
        let pair = RegionPair {
            task_id: 1,
            start: region([-1.8, -1.8, 0.0], [-1.0, 1.8, 0.1]),
            goal: region([-0.5, -0.5, 0.5], [0.5, 0.5, 1.5]),
        };
        let out = sample_tasks(&[pair], &s, 400, 4, 1.0).unwrap();
        let n = out.goal_attempts as f64;
        let p = 0.5;
        let observed = out.goals_accepted as f64 / n;
        let sigma = (p * (1.0 - p) / n).sqrt();
        assert!((observed - p).abs() < 5.0 * sigma, "{observed} over {n}");
    }

    fn spec(scene: &str, x: f64) -> SequenceSpec {
        SequenceSpec { scene_id: scene.into(), task_id: 0, start: Vec3::new(x, 0.0, 0.0), goal: Vec3::zeros() }
    }

    #[test]
    fn collinear_starts_are_reordered() {
        let out = order_sequences(&[spec("a", 0.0), spec("a", 10.0), spec("a", 1.0)]);
        let xs: Vec<f64> = out.iter().map(|s| s.start.x).collect();
        assert_eq!(xs, vec![0.0, 1.0, 10.0]);
        // Brute force over all 3! orders starting anywhere: 10 is optimal.
        assert_eq!(transition_cost(&out), 10.0);
        assert_eq!(order_sequences(&[spec("a", 4.0)]), vec![spec("a", 4.0)]);
    }

    #[test]
    fn groups_by_scene() {
        let input = [spec("a", 0.0), spec("b", 1.0), spec("a", 2.0), spec("b", 3.0)];
        let out = order_sequences(&input);
        let ids: Vec<&str> = out.iter().map(|s| s.scene_id.as_str()).collect();
        assert_eq!(ids, vec!["a", "a", "b", "b"]);
    }

    proptest! {
        #[test]
        fn ordering_is_a_cheaper_permutation(xs in proptest::collection::vec((0u8..3, -20.0..20.0f64), 1..12)) {
            let input: Vec<SequenceSpec> = xs.iter().map(|&(s, x)| spec(&format!("s{s}"), x)).collect();
            let out = order_sequences(&input);
            prop_assert!(transition_cost(&out) <= transition_cost(&input) + 1e-9);
            let key = |v: &[SequenceSpec]| {
                let mut k: Vec<(String, u64)> = v.iter().map(|s| (s.scene_id.clone(), s.start.x.to_bits())).collect();
                k.sort();
                k
            };
            prop_assert_eq!(key(&out), key(&input));
        }
    }
}
