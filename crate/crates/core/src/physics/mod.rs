//! Rigid-sphere deposition onto a walled square table.
//!
//! Spheres are dropped from their initial positions and integrated with a
//! fixed timestep until every body has been slower than
//! `sleep_linear_velocity` for `sleep_frames` consecutive steps. The floor is
//! the plane `z = 0`; four frictionless walls stand at `x, y = ±table_size/2`.
//!
//! Units inside the simulator are mm and s. Masses are `4/3·π·r³` (unit
//! density), so only mass ratios matter.
//!
//! Each [`World::step`]:
//! 1. applies gravity to velocities,
//! 2. collects candidate pairs from a uniform grid,
//! 3. solves contacts with warm-started sequential impulses, treating
//!    not-yet-touching pairs as speculative contacts (they may close at most
//!    their gap this step),
//! 4. integrates positions (symplectic Euler),
//! 5. projects remaining penetration out geometrically,
//! 6. updates the per-body sleep counters.
//!
//! Iteration order is fixed by body index, so results are bit-reproducible.

mod vec3;
mod world;

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sampler::SceneSpec;

pub use vec3::Vec3;
pub use world::World;

#[derive(Debug, Error)]
pub enum PhysicsError {
    #[error("invalid scene: {0}")]
    InvalidSpec(String),
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("failed to write simulation trace: {0}")]
    Trace(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Seconds per step.
    pub timestep: f64,
    /// m/s², acting along −z.
    pub gravity: f64,
    pub restitution: f64,
    /// Coulomb coefficient for floor and sphere–sphere contacts.
    pub friction: f64,
    pub solver_iterations: u32,
    /// mm. `None` means 2% of the smallest radius in the scene.
    pub penetration_tolerance: Option<f64>,
    /// mm/s.
    pub sleep_linear_velocity: f64,
    pub sleep_frames: u32,
    pub max_steps: u32,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            timestep: 1.0 / 240.0,
            gravity: 9.81,
            restitution: 0.1,
            friction: 0.5,
            solver_iterations: 16,
            penetration_tolerance: None,
            sleep_linear_velocity: 1.0,
            sleep_frames: 30,
            max_steps: 20_000,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), PhysicsError> {
        let bad = |m: String| Err(PhysicsError::InvalidConfig(m));
        if !(self.timestep > 0.0 && self.timestep.is_finite()) {
            return bad(format!("timestep {} must be positive", self.timestep));
        }
        if !(self.gravity >= 0.0 && self.gravity.is_finite()) {
            return bad(format!("gravity {} must be non-negative", self.gravity));
        }
        if !(0.0..=1.0).contains(&self.restitution) {
            return bad(format!("restitution {} must lie in [0, 1]", self.restitution));
        }
        if !(self.friction >= 0.0 && self.friction.is_finite()) {
            return bad(format!("friction {} must be non-negative", self.friction));
        }
        if self.solver_iterations < 1 || self.sleep_frames < 1 || self.max_steps < 1 {
            return bad("solver_iterations, sleep_frames and max_steps must be at least 1".into());
        }
        if let Some(t) = self.penetration_tolerance {
            if !(t > 0.0) {
                return bad(format!("penetration_tolerance {t} must be positive"));
            }
        }
        if !(self.sleep_linear_velocity > 0.0) {
            return bad(format!("sleep_linear_velocity {} must be positive", self.sleep_linear_velocity));
        }
        Ok(())
    }

    /// Gravity in mm/s².
    pub fn gravity_mm(&self) -> f64 {
        self.gravity * 1000.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BodyState {
    /// mm.
    pub center: Vec3,
    /// mm/s.
    pub velocity: Vec3,
    /// mm.
    pub radius: f64,
    pub asleep: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    /// Same order as the input sizes.
    pub bodies: Vec<BodyState>,
    pub steps_taken: u64,
    /// False when `max_steps` ran out with bodies still moving.
    pub converged: bool,
    /// The penetration tolerance the run was held to, mm.
    pub penetration_tolerance: f64,
}

/// Destination for the optional tuning trace.
///
/// Every `every` steps one tab-separated line is written:
/// `step  max_penetration_mm  kinetic_energy`, preceded by a `#` header line.
/// Kinetic energy is `Σ ½·m·|v|²` in unit-density mass times mm²/s².
pub struct TraceSink<'a> {
    pub writer: &'a mut dyn Write,
    pub every: u32,
}

/// Settle a scene: drop every sphere from its initial position and run until
/// all bodies are asleep or `max_steps` is exhausted.
///
/// Non-convergence is not an error; it comes back as `converged == false`.
pub fn settle(spec: &SceneSpec, table_size: f64, config: &SimConfig) -> Result<SimResult, PhysicsError> {
    settle_traced(spec, table_size, config, None)
}

pub fn settle_traced(
    spec: &SceneSpec,
    table_size: f64,
    config: &SimConfig,
    mut trace: Option<TraceSink<'_>>,
) -> Result<SimResult, PhysicsError> {
    if spec.sizes.len() != spec.drop_positions.len() || spec.sizes.len() != spec.count {
        return Err(PhysicsError::InvalidSpec(format!(
            "count {} with {} sizes and {} drop positions",
            spec.count,
            spec.sizes.len(),
            spec.drop_positions.len()
        )));
    }
    if !(table_size > 0.0 && table_size.is_finite()) {
        return Err(PhysicsError::InvalidSpec(format!("table_size {table_size} must be positive")));
    }
    if let Some((i, &d)) = spec.sizes.iter().enumerate().find(|(_, d)| !(**d > 0.0 && **d <= table_size / 4.0)) {
        return Err(PhysicsError::InvalidSpec(format!(
            "particle {i} has diameter {d}, outside (0, table_size/4]"
        )));
    }
    let bodies = spec
        .sizes
        .iter()
        .zip(&spec.drop_positions)
        .map(|(&d, &p)| BodyState { center: p.into(), velocity: Vec3::ZERO, radius: d / 2.0, asleep: false })
        .collect();
    let mut world = World::new(bodies, table_size, config.clone())?;

    if let Some(t) = trace.as_mut() {
        writeln!(t.writer, "# step\tmax_penetration_mm\tkinetic_energy")?;
    }
    let mut converged = world.all_asleep();
    while !converged && world.steps() < u64::from(config.max_steps) {
        world.step();
        if let Some(t) = trace.as_mut() {
            if t.every > 0 && world.steps() % u64::from(t.every) == 0 {
                writeln!(t.writer, "{}\t{:.6e}\t{:.6e}", world.steps(), world.max_penetration(), world.kinetic_energy())?;
            }
        }
        converged = world.all_asleep();
    }
    world.finish();
    Ok(SimResult {
        steps_taken: world.steps(),
        converged,
        penetration_tolerance: world.tolerance(),
        bodies: world.into_bodies(),
    })
}
