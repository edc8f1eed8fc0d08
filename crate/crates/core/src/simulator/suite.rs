//! The bundled scenario suite and directory loading.

use std::path::{Path, PathBuf};

use super::scenario::{Scenario, ScenarioError};

/// Bundled scenarios as `(name, TOML text)`.
pub const BUNDLED: &[(&str, &str)] = &[
    ("occluded_pedestrian", include_str!("../../scenarios/occluded_pedestrian.toml")),
    ("occluded_pedestrian_benign", include_str!("../../scenarios/occluded_pedestrian_benign.toml")),
    ("billboard_ghost", include_str!("../../scenarios/billboard_ghost.toml")),
    ("billboard_ghost_benign", include_str!("../../scenarios/billboard_ghost_benign.toml")),
    ("lead_vehicle_hard_brake", include_str!("../../scenarios/lead_vehicle_hard_brake.toml")),
    ("lead_vehicle_gentle_brake", include_str!("../../scenarios/lead_vehicle_gentle_brake.toml")),
    ("crossing_pedestrian", include_str!("../../scenarios/crossing_pedestrian.toml")),
    ("crossing_pedestrian_benign", include_str!("../../scenarios/crossing_pedestrian_benign.toml")),
    ("stationary_obstacle", include_str!("../../scenarios/stationary_obstacle.toml")),
    ("stationary_obstacle_shoulder", include_str!("../../scenarios/stationary_obstacle_shoulder.toml")),
    ("oncoming_vehicle", include_str!("../../scenarios/oncoming_vehicle.toml")),
    ("empty_road", include_str!("../../scenarios/empty_road.toml")),
];

/// Parses every bundled scenario.
pub fn bundled() -> Vec<Scenario> {
    BUNDLED
        .iter()
        .map(|(name, text)| Scenario::from_toml_str(text).unwrap_or_else(|e| panic!("bundled scenario {name}: {e}")))
        .collect()
}

pub fn bundled_named(name: &str) -> Option<Scenario> {
    BUNDLED
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| Scenario::from_toml_str(text).expect("bundled scenarios parse"))
}

/// True for scenarios with a ghost or an occluded agent.
pub fn has_perception_hazard(sc: &Scenario) -> bool {
    sc.agents.iter().any(|a| a.ghost || a.hidden_until.is_some())
}

/// Load failure for one file of a directory.
#[derive(Debug)]
pub struct LoadFailure {
    pub path: PathBuf,
    pub error: ScenarioError,
}

/// Loads every `*.toml` under `dir`, sorted by file name. All failures are
/// reported together.
pub fn load_dir(dir: &Path) -> Result<Vec<(PathBuf, Scenario)>, Vec<LoadFailure>> {
    let entries = std::fs::read_dir(dir).map_err(|source| {
        vec![LoadFailure {
            path: dir.to_path_buf(),
            error: ScenarioError::Io {
                path: dir.to_path_buf(),
                source,
            },
        }]
    })?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    paths.sort();
    load_paths(&paths)
}

pub fn load_paths(paths: &[PathBuf]) -> Result<Vec<(PathBuf, Scenario)>, Vec<LoadFailure>> {
    let mut ok = Vec::new();
    let mut failed = Vec::new();
    for path in paths {
        match Scenario::load(path) {
            Ok(sc) => ok.push((path.clone(), sc)),
            Err(error) => failed.push(LoadFailure {
                path: path.clone(),
                error,
            }),
        }
    }
    if failed.is_empty() {
        Ok(ok)
    } else {
        Err(failed)
    }
}

const ROADS: &[&str] = &["arterial roadway", "two-lane street", "urban boulevard", "suburban road"];
const WEATHER: &[&str] = &["clear, sunny", "overcast", "light rain", "hazy"];
const AREAS: &[&str] = &["urban", "suburban", "commercial", "residential"];
const TIMES: &[&str] = &["daylight", "dusk", "early morning"];

/// Seeded variant of `base`: agents shift along the road by up to
/// `±shift` metres, scripted speeds scale by `[0.85, 1.15]` and the
/// environment strings are redrawn. The result validates.
pub fn jittered(base: &Scenario, seed: u64, shift: f64) -> Scenario {
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};

    use super::scenario::Motion;

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut sc = base.clone();
    sc.name = format!("{}_v{seed}", base.name);
    sc.seed = seed;
    sc.environment.road = ROADS.choose(&mut rng).unwrap().to_string();
    sc.environment.weather = WEATHER.choose(&mut rng).unwrap().to_string();
    sc.environment.area = AREAS.choose(&mut rng).unwrap().to_string();
    sc.environment.time_of_day = TIMES.choose(&mut rng).unwrap().to_string();
    // one offset for the whole cast keeps occluders and the occluded together
    let dx = rng.gen_range(-shift..=shift);
    let scale = rng.gen_range(0.85..=1.15);
    for agent in &mut sc.agents {
        match &mut agent.motion {
            Motion::Static { x, .. } => *x += dx,
            Motion::ConstantTwist { x, speed, .. } => {
                *x += dx;
                *speed *= scale;
            }
            Motion::SpeedProfile { x, profile, .. } => {
                *x += dx;
                for knot in profile.iter_mut() {
                    knot[1] *= scale;
                }
            }
            Motion::Waypoints { schedule, .. } => {
                for knot in schedule.iter_mut() {
                    knot[1] += dx;
                }
            }
        }
    }
    sc
}
