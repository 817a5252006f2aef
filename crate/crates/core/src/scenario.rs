//! Planning problem instances: seeded random generation and JSON files.
//!
//! # File formats
//!
//! Both formats are UTF-8 JSON objects carrying a `version` field
//! ([`SCHEMA_VERSION`]). Lengths are meters, times seconds, velocities m/s,
//! body rates rad/s, rotor thrusts newtons, quaternions scalar-first.
//!
//! Scenario:
//! ```json
//! { "version": 1, "model": "point-mass-2d", "seed": 7,
//!   "bounds": { "min": [0, 0], "max": [10, 10] }, "epsilon": 0.2,
//!   "obstacles": [ { "center": [4.1, 5.3], "radius": 0.17 } ],
//!   "x_initial": [0, 0, 0, 0], "x_final": [10, 10, 0, 0] }
//! ```
//! Obstacles are circles in 2D and full-height cylinders in 3D; only the
//! x-y footprint matters in both cases.
//!
//! Trajectory:
//! ```json
//! { "version": 1, "model": "quadrotor-3d", "n": 100, "t_f": 1.98,
//!   "states": [[...13 values...], ...], "inputs": [[f1, f2, f3, f4], ...] }
//! ```
//!
//! # Random generation
//!
//! Obstacle centers are uniform over the x-y footprint of the bounds and
//! radii uniform over the radius range. The random stream is ChaCha8 keyed by
//! the 32 bytes of four consecutive SplitMix64 outputs of the seed; a uniform
//! draw in `[0, 1)` is `(next_u64 >> 11) · 2⁻⁵³`. Obstacles whose padded
//! radius reaches the start or goal position are redrawn.

use crate::dynamics::{ModelKind, QuadState};
use crate::transcription::{Obstacle, Trajectory};
use rand_chacha::ChaCha8Rng;
use rand_core::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

pub const SCHEMA_VERSION: u32 = 1;

/// Redraw budget per obstacle before generation gives up.
pub const MAX_REDRAWS: usize = 10_000;

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed file: {0}")]
    Malformed(String),
    #[error("unsupported schema version {found} (expected {expected})")]
    VersionMismatch { found: u64, expected: u32 },
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("could not place obstacle {index} clear of the boundary states after {attempts} draws")]
    Overcrowded { index: usize, attempts: usize },
    #[error("invalid generation request: {0}")]
    InvalidRequest(String),
}

/// Axis-aligned environment box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl Bounds {
    /// The default environment: 10 m per axis starting at the origin.
    pub fn default_for(kind: ModelKind) -> Self {
        let dim = match kind {
            ModelKind::PointMass2d => 2,
            ModelKind::Quadrotor3d => 3,
        };
        Self {
            min: vec![0.0; dim],
            max: vec![10.0; dim],
        }
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        self.min.iter().zip(&self.max).zip(p).all(|((lo, hi), v)| *lo <= *v && *v <= *hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub version: u32,
    pub model: ModelKind,
    pub seed: u64,
    pub bounds: Bounds,
    pub epsilon: f64,
    pub obstacles: Vec<Obstacle>,
    pub x_initial: Vec<f64>,
    pub x_final: Vec<f64>,
}

/// Start and goal states used throughout the experiments.
pub fn default_boundary_states(kind: ModelKind) -> (Vec<f64>, Vec<f64>) {
    match kind {
        ModelKind::PointMass2d => (vec![0.0, 0.0, 0.0, 0.0], vec![10.0, 10.0, 0.0, 0.0]),
        ModelKind::Quadrotor3d => (
            QuadState::hover_at([0.0, 0.0, 5.0]).to_vec(),
            QuadState::hover_at([10.0, 10.0, 5.0]).to_vec(),
        ),
    }
}

impl Scenario {
    /// Obstacle-free scenario with the default bounds and boundary states.
    pub fn empty(kind: ModelKind, epsilon: f64) -> Self {
        let (x_initial, x_final) = default_boundary_states(kind);
        Self {
            version: SCHEMA_VERSION,
            model: kind,
            seed: 0,
            bounds: Bounds::default_for(kind),
            epsilon,
            obstacles: Vec::new(),
            x_initial,
            x_final,
        }
    }

    pub fn position_dim(&self) -> usize {
        match self.model {
            ModelKind::PointMass2d => 2,
            ModelKind::Quadrotor3d => 3,
        }
    }

    /// Checks dimensions, bounds membership and boundary-state clearance.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let inv = |m: String| Err(ScenarioError::Invariant(m));
        let nx = self.model.state_dim();
        let np = self.position_dim();
        if self.x_initial.len() != nx || self.x_final.len() != nx {
            return inv(format!(
                "boundary states must have {nx} components for {}, got {} and {}",
                self.model,
                self.x_initial.len(),
                self.x_final.len()
            ));
        }
        if self.bounds.min.len() != np || self.bounds.max.len() != np {
            return inv(format!("bounds must have {np} components"));
        }
        if self.bounds.min.iter().zip(&self.bounds.max).any(|(lo, hi)| !(lo < hi)) {
            return inv("bounds min must be below max on every axis".into());
        }
        if !(self.epsilon >= 0.0) || !self.epsilon.is_finite() {
            return inv(format!("epsilon must be a nonnegative number, got {}", self.epsilon));
        }
        if self.x_initial.iter().chain(&self.x_final).any(|v| !v.is_finite()) {
            return inv("boundary states must be finite".into());
        }
        for (name, x) in [("x_initial", &self.x_initial), ("x_final", &self.x_final)] {
            if !self.bounds.contains(&x[..np]) {
                return inv(format!("{name} position lies outside the bounds"));
            }
        }
        for (k, o) in self.obstacles.iter().enumerate() {
            if !(o.radius > 0.0) || !o.radius.is_finite() {
                return inv(format!("obstacle {k} has nonpositive radius {}", o.radius));
            }
            if !self.bounds.contains_xy(&o.center) {
                return inv(format!("obstacle {k} center {:?} lies outside the bounds", o.center));
            }
            for (name, x) in [("x_initial", &self.x_initial), ("x_final", &self.x_final)] {
                let d = o.distance_xy(&x[..2]);
                if !(d > o.radius + self.epsilon) {
                    return inv(format!(
                        "obstacle {k} covers {name}: distance {d:.6} ≤ radius + epsilon {:.6}",
                        o.radius + self.epsilon
                    ));
                }
            }
        }
        Ok(())
    }

    /// Short stable fingerprint of the serialized scenario (FNV-1a 64).
    pub fn fingerprint(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("scenario serializes");
        format!("{:016x}", fnv1a64(&bytes))
    }
}

impl Bounds {
    fn contains_xy(&self, c: &[f64; 2]) -> bool {
        (0..2).all(|k| self.min[k] <= c[k] && c[k] <= self.max[k])
    }
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// SplitMix64 finalizer, used to expand seeds.
pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic uniform stream for scenario generation.
pub struct ScenarioRng(ChaCha8Rng);

impl ScenarioRng {
    pub fn new(seed: u64) -> Self {
        let mut state = seed;
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        Self(ChaCha8Rng::from_seed(key))
    }

    /// Uniform in `[0, 1)`.
    pub fn unit(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }
}

/// Inputs to [`generate_scenario`].
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationRequest {
    pub seed: u64,
    pub model: ModelKind,
    pub n_obs: usize,
    pub bounds: Bounds,
    pub radius_range: (f64, f64),
    pub epsilon: f64,
}

impl GenerationRequest {
    pub fn new(seed: u64, model: ModelKind, n_obs: usize) -> Self {
        Self {
            seed,
            model,
            n_obs,
            bounds: Bounds::default_for(model),
            radius_range: (0.1, 0.2),
            epsilon: 0.2,
        }
    }
}

pub fn generate_scenario(req: &GenerationRequest) -> Result<Scenario, ScenarioError> {
    let (r_lo, r_hi) = req.radius_range;
    let np = match req.model {
        ModelKind::PointMass2d => 2,
        ModelKind::Quadrotor3d => 3,
    };
    if req.bounds.min.len() != np || req.bounds.max.len() != np {
        return Err(ScenarioError::InvalidRequest(format!("bounds must have {np} components")));
    }
    let min_extent = (0..2).map(|k| req.bounds.max[k] - req.bounds.min[k]).fold(f64::INFINITY, f64::min);
    if !(r_lo > 0.0 && r_lo <= r_hi && r_hi < min_extent) {
        return Err(ScenarioError::InvalidRequest(format!(
            "radius range ({r_lo}, {r_hi}) must satisfy 0 < lo <= hi < {min_extent}"
        )));
    }
    if !(req.epsilon >= 0.0) {
        return Err(ScenarioError::InvalidRequest("epsilon must be nonnegative".into()));
    }
    let (x_initial, x_final) = default_boundary_states(req.model);
    let mut rng = ScenarioRng::new(req.seed);
    let mut obstacles = Vec::with_capacity(req.n_obs);
    for index in 0..req.n_obs {
        let mut placed = None;
        for _ in 0..MAX_REDRAWS {
            let cx = rng.uniform(req.bounds.min[0], req.bounds.max[0]);
            let cy = rng.uniform(req.bounds.min[1], req.bounds.max[1]);
            let radius = rng.uniform(r_lo, r_hi);
            let o = Obstacle { center: [cx, cy], radius };
            let reach = radius + req.epsilon;
            if o.distance_xy(&x_initial[..2]) > reach && o.distance_xy(&x_final[..2]) > reach {
                placed = Some(o);
                break;
            }
        }
        match placed {
            Some(o) => obstacles.push(o),
            None => return Err(ScenarioError::Overcrowded { index, attempts: MAX_REDRAWS }),
        }
    }
    let s = Scenario {
        version: SCHEMA_VERSION,
        model: req.model,
        seed: req.seed,
        bounds: req.bounds.clone(),
        epsilon: req.epsilon,
        obstacles,
        x_initial,
        x_final,
    };
    s.validate()?;
    Ok(s)
}

fn read_versioned(path: &Path) -> Result<serde_json::Value, ScenarioError> {
    let text = fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| ScenarioError::Malformed(e.to_string()))?;
    let version = value
        .get("version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| ScenarioError::Malformed("missing numeric `version` field".into()))?;
    if version != u64::from(SCHEMA_VERSION) {
        return Err(ScenarioError::VersionMismatch {
            found: version,
            expected: SCHEMA_VERSION,
        });
    }
    Ok(value)
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), ScenarioError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| ScenarioError::Malformed(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn save_scenario(s: &Scenario, path: impl AsRef<Path>) -> Result<(), ScenarioError> {
    write_json(s, path.as_ref())
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
    let value = read_versioned(path.as_ref())?;
    let s: Scenario = serde_json::from_value(value).map_err(|e| ScenarioError::Malformed(e.to_string()))?;
    s.validate()?;
    Ok(s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TrajectoryFile {
    version: u32,
    model: ModelKind,
    n: usize,
    t_f: f64,
    states: Vec<Vec<f64>>,
    inputs: Vec<Vec<f64>>,
}

pub fn save_trajectory(t: &Trajectory, model: ModelKind, path: impl AsRef<Path>) -> Result<(), ScenarioError> {
    let file = TrajectoryFile {
        version: SCHEMA_VERSION,
        model,
        n: t.inputs.len(),
        t_f: t.t_f,
        states: t.states.clone(),
        inputs: t.inputs.clone(),
    };
    write_json(&file, path.as_ref())
}

/// Loads a trajectory and the model kind it was written for.
pub fn load_trajectory(path: impl AsRef<Path>) -> Result<(Trajectory, ModelKind), ScenarioError> {
    let value = read_versioned(path.as_ref())?;
    let f: TrajectoryFile = serde_json::from_value(value).map_err(|e| ScenarioError::Malformed(e.to_string()))?;
    let inv = |m: String| Err(ScenarioError::Invariant(m));
    if f.inputs.len() != f.n || f.states.len() != f.n + 1 {
        return inv(format!(
            "expected {} states and {} inputs for n = {}, got {} and {}",
            f.n + 1,
            f.n,
            f.n,
            f.states.len(),
            f.inputs.len()
        ));
    }
    let (nx, nu) = (f.model.state_dim(), f.model.input_dim());
    if let Some(k) = f.states.iter().position(|x| x.len() != nx) {
        return inv(format!("state {k} has {} components, expected {nx}", f.states[k].len()));
    }
    if let Some(k) = f.inputs.iter().position(|u| u.len() != nu) {
        return inv(format!("input {k} has {} components, expected {nu}", f.inputs[k].len()));
    }
    if !(f.t_f > 0.0) || !f.t_f.is_finite() {
        return inv(format!("t_f must be positive, got {}", f.t_f));
    }
    Ok((
        Trajectory {
            states: f.states,
            inputs: f.inputs,
            t_f: f.t_f,
        },
        f.model,
    ))
}
