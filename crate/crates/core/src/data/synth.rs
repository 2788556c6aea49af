//! Small synthetic scenes with known ground truth.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{TrackPoint, TrajectoryScene, DEFAULT_DT};
use crate::error::Error;

/// Frames per synthetic scene: one 8 + 12 window.
pub const SYNTH_FRAMES: i64 = 20;

const JITTER_STD: f64 = 0.02;
const SPEED_RANGE: (f64, f64) = (0.8, 1.6);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    /// 1-3 noise-free constant-velocity walkers.
    Straight,
    /// One walker turning 90 degrees at a random frame in the middle of the scene.
    Turn90,
    /// Two walkers on orthogonal paths through a common point.
    Cross2,
    /// Three walkers abreast.
    Group3,
    /// A walker detouring around a stationary pedestrian.
    StillObstacle,
}

impl Scenario {
    pub const ALL: [Scenario; 5] = [
        Scenario::Straight,
        Scenario::Turn90,
        Scenario::Cross2,
        Scenario::Group3,
        Scenario::StillObstacle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Straight => "straight",
            Scenario::Turn90 => "turn90",
            Scenario::Cross2 => "cross2",
            Scenario::Group3 => "group3",
            Scenario::StillObstacle => "still_obstacle",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown scenario '{s}' (valid: {})",
                    Scenario::ALL.map(Scenario::name).join(", ")
                ))
            })
    }
}

struct Gen {
    rng: ChaCha8Rng,
    jitter: Normal<f64>,
}

impl Gen {
    fn speed(&mut self) -> f64 {
        self.rng.random_range(SPEED_RANGE.0..=SPEED_RANGE.1)
    }

    fn heading(&mut self) -> [f64; 2] {
        let a = self.rng.random_range(0.0..TAU);
        [a.cos(), a.sin()]
    }

    fn point(&mut self, half_extent: f64) -> [f64; 2] {
        [
            self.rng.random_range(-half_extent..half_extent),
            self.rng.random_range(-half_extent..half_extent),
        ]
    }

    fn track(&mut self, jitter: bool, f: impl Fn(i64) -> [f64; 2]) -> Vec<TrackPoint> {
        (0..SYNTH_FRAMES)
            .map(|frame| {
                let mut pos = f(frame);
                if jitter {
                    pos[0] += self.jitter.sample(&mut self.rng);
                    pos[1] += self.jitter.sample(&mut self.rng);
                }
                TrackPoint { frame, pos }
            })
            .collect()
    }
}

fn along(origin: [f64; 2], dir: [f64; 2], dist: f64) -> [f64; 2] {
    [origin[0] + dir[0] * dist, origin[1] + dir[1] * dist]
}

/// Generates `n_scenes` scenes of [`SYNTH_FRAMES`] frames at 0.4 s, fully determined by `seed`.
pub fn synth_generate(scenario: Scenario, n_scenes: usize, seed: u64) -> Result<Vec<TrajectoryScene>, Error> {
    if n_scenes == 0 {
        return Err(Error::InvalidArgument("n_scenes must be >= 1".into()));
    }
    let mut g = Gen {
        rng: ChaCha8Rng::seed_from_u64(seed),
        jitter: Normal::new(0.0, JITTER_STD).expect("valid std"),
    };
    let dt = DEFAULT_DT;
    let mut scenes = Vec::with_capacity(n_scenes);
    for idx in 0..n_scenes {
        let mut scene = TrajectoryScene::new(format!("{}_{idx:04}", scenario.name()), dt);
        match scenario {
            Scenario::Straight => {
                let n = g.rng.random_range(1..=3);
                for ped in 1..=n {
                    let (start, dir, v) = (g.point(6.0), g.heading(), g.speed());
                    let t = g.track(false, |f| along(start, dir, v * dt * f as f64));
                    scene.tracks.insert(ped, t);
                }
            }
            Scenario::Turn90 => {
                let (start, dir, v) = (g.point(4.0), g.heading(), g.speed());
                let turn_at = g.rng.random_range(6..=13) as f64;
                let sign = if g.rng.random_bool(0.5) { 1.0 } else { -1.0 };
                let turned = [-sign * dir[1], sign * dir[0]];
                let t = g.track(true, |f| {
                    let f = f as f64;
                    let corner = along(start, dir, v * dt * f.min(turn_at));
                    along(corner, turned, v * dt * (f - turn_at).max(0.0))
                });
                scene.tracks.insert(1, t);
            }
            Scenario::Cross2 => {
                let cross = g.point(3.0);
                let dir_a = g.heading();
                let dir_b = [-dir_a[1], dir_a[0]];
                for (ped, dir) in [(1, dir_a), (2, dir_b)] {
                    let v = g.speed();
                    let at = g.rng.random_range(7..=12) as f64;
                    let t = g.track(true, |f| along(cross, dir, v * dt * (f as f64 - at)));
                    scene.tracks.insert(ped, t);
                }
            }
            Scenario::Group3 => {
                let (start, dir, v) = (g.point(4.0), g.heading(), g.speed());
                let normal = [-dir[1], dir[0]];
                for (ped, offset) in [(1, -0.7), (2, 0.0), (3, 0.7)] {
                    let origin = along(start, normal, offset);
                    let t = g.track(true, |f| along(origin, dir, v * dt * f as f64));
                    scene.tracks.insert(ped, t);
                }
            }
            Scenario::StillObstacle => {
                let (obstacle, dir, v) = (g.point(3.0), g.heading(), g.speed());
                let at = g.rng.random_range(8..=12) as f64;
                let side = if g.rng.random_bool(0.5) { 1.0 } else { -1.0 };
                let normal = [-dir[1] * side, dir[0] * side];
                let (amplitude, width) = (0.8, 1.2);
                scene.tracks.insert(1, g.track(false, |_| obstacle));
                let t = g.track(true, |f| {
                    let s = v * dt * (f as f64 - at);
                    let lateral = amplitude * (-(s * s) / (2.0 * width * width)).exp();
                    along(along(obstacle, dir, s), normal, lateral)
                });
                scene.tracks.insert(2, t);
            }
        }
        scenes.push(scene);
    }
    Ok(scenes)
}
