use std::collections::HashMap;
use std::f64::consts::PI;

use super::{BodyState, PhysicsError, SimConfig, Vec3};

/// Contacts farther apart than this (beyond what velocity can close in one
/// step) are not generated, mm.
const SPECULATIVE_SLOP: f64 = 1.0;
/// Position-projection passes per step.
const PROJECTION_PASSES: usize = 32;
/// Passes allowed for the final cleanup after the last step.
const FINAL_PROJECTION_PASSES: usize = 2000;

// Contact kinds in the warm-start key.
const FLOOR: u32 = 0;
const WALL_POS_X: u32 = 1;
const WALL_NEG_X: u32 = 2;
const WALL_POS_Y: u32 = 3;
const WALL_NEG_Y: u32 = 4;
const PAIR_BASE: u32 = 5;

#[derive(Debug, Clone)]
struct Contact {
    a: usize,
    /// `None` for floor and walls.
    b: Option<usize>,
    /// Unit normal pointing from `b` (or the static surface) into `a`.
    normal: Vec3,
    eff_mass: f64,
    /// Lower bound on the post-solve normal relative velocity.
    target: f64,
    friction: f64,
    acc_n: f64,
    acc_t: Vec3,
    key: (u32, u32),
}

#[derive(Debug, Clone, Copy)]
struct Warm {
    normal: f64,
    tangent: Vec3,
}

/// A running simulation. Single-owner; see the module docs for the step
/// structure.
pub struct World {
    bodies: Vec<BodyState>,
    inv_mass: Vec<f64>,
    mass: Vec<f64>,
    half: f64,
    config: SimConfig,
    tolerance: f64,
    still_frames: Vec<u32>,
    warm: HashMap<(u32, u32), Warm>,
    pairs: Vec<(usize, usize)>,
    max_radius: f64,
    steps: u64,
}

impl World {
    pub fn new(bodies: Vec<BodyState>, table_size: f64, config: SimConfig) -> Result<Self, PhysicsError> {
        config.validate()?;
        if bodies.len() > u32::MAX as usize - PAIR_BASE as usize {
            return Err(PhysicsError::InvalidSpec("too many bodies".into()));
        }
        if let Some((i, b)) = bodies.iter().enumerate().find(|(_, b)| !(b.radius > 0.0 && b.radius.is_finite())) {
            return Err(PhysicsError::InvalidSpec(format!("body {i} has radius {}", b.radius)));
        }
        let min_radius = bodies.iter().map(|b| b.radius).fold(f64::INFINITY, f64::min);
        let tolerance = config.penetration_tolerance.unwrap_or(0.02 * min_radius);
        let mass: Vec<f64> = bodies.iter().map(|b| 4.0 / 3.0 * PI * b.radius.powi(3)).collect();
        Ok(Self {
            inv_mass: mass.iter().map(|m| 1.0 / m).collect(),
            mass,
            half: table_size / 2.0,
            tolerance: if tolerance.is_finite() { tolerance } else { 0.0 },
            still_frames: vec![0; bodies.len()],
            warm: HashMap::new(),
            pairs: Vec::new(),
            max_radius: bodies.iter().map(|b| b.radius).fold(0.0, f64::max),
            steps: 0,
            bodies,
            config,
        })
    }

    pub fn bodies(&self) -> &[BodyState] {
        &self.bodies
    }

    pub fn into_bodies(self) -> Vec<BodyState> {
        self.bodies
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn all_asleep(&self) -> bool {
        self.bodies.iter().all(|b| b.asleep)
    }

    pub fn kinetic_energy(&self) -> f64 {
        self.bodies
            .iter()
            .zip(&self.mass)
            .map(|(b, m)| 0.5 * m * b.velocity.length_squared())
            .sum()
    }

    /// Largest overlap among candidate pairs, floor and walls, mm.
    pub fn max_penetration(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for b in &self.bodies {
            worst = worst.max(b.radius - b.center.z);
            worst = worst.max(b.center.x.abs() + b.radius - self.half);
            worst = worst.max(b.center.y.abs() + b.radius - self.half);
        }
        for &(i, j) in &self.pairs {
            let (bi, bj) = (&self.bodies[i], &self.bodies[j]);
            worst = worst.max(bi.radius + bj.radius - (bi.center - bj.center).length());
        }
        worst
    }

    /// Advance one fixed timestep.
    pub fn step(&mut self) {
        let dt = self.config.timestep;
        let g = self.config.gravity_mm();
        for b in &mut self.bodies {
            b.velocity.z -= g * dt;
        }

        self.find_pairs();
        let mut contacts = self.build_contacts();
        self.warm_start(&mut contacts);
        for _ in 0..self.config.solver_iterations {
            for c in &mut contacts {
                solve_contact(c, &mut self.bodies, &self.inv_mass);
            }
        }
        self.warm = contacts
            .iter()
            .filter(|c| c.acc_n > 0.0)
            .map(|c| (c.key, Warm { normal: c.acc_n, tangent: c.acc_t }))
            .collect();

        for b in &mut self.bodies {
            b.center += b.velocity * dt;
        }
        self.project(PROJECTION_PASSES, 0.25 * self.tolerance);

        let sleep_v2 = self.config.sleep_linear_velocity.powi(2);
        for (b, still) in self.bodies.iter_mut().zip(&mut self.still_frames) {
            if b.velocity.length_squared() < sleep_v2 {
                *still = still.saturating_add(1);
            } else {
                *still = 0;
            }
            b.asleep = *still >= self.config.sleep_frames;
        }
        self.steps += 1;
    }

    /// Final cleanup once stepping stops: resolve any residual overlap.
    pub(crate) fn finish(&mut self) {
        self.find_pairs();
        self.project(FINAL_PROJECTION_PASSES, 0.25 * self.tolerance);
    }

    /// Uniform-grid broad phase. Pairs come out sorted, independent of hash
    /// iteration order.
    fn find_pairs(&mut self) {
        let dt = self.config.timestep;
        let vmax = self.bodies.iter().map(|b| b.velocity.length()).fold(0.0, f64::max);
        let margin = 2.0 * vmax * dt + SPECULATIVE_SLOP;
        let cell = 2.0 * self.max_radius + margin;
        let key = |p: Vec3| {
            [(p.x / cell).floor() as i64, (p.y / cell).floor() as i64, (p.z / cell).floor() as i64]
        };
        let mut grid: HashMap<[i64; 3], Vec<usize>> = HashMap::with_capacity(self.bodies.len());
        for (i, b) in self.bodies.iter().enumerate() {
            grid.entry(key(b.center)).or_default().push(i);
        }
        self.pairs.clear();
        for (i, bi) in self.bodies.iter().enumerate() {
            let k = key(bi.center);
            for dx in -1..=1 {
                for dy in -1..=1 {
                    for dz in -1..=1 {
                        let Some(cell) = grid.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) else { continue };
                        for &j in cell.iter().filter(|&&j| j > i) {
                            let bj = &self.bodies[j];
                            let reach = bi.radius + bj.radius + margin;
                            if (bi.center - bj.center).length_squared() < reach * reach {
                                self.pairs.push((i, j));
                            }
                        }
                    }
                }
            }
        }
        self.pairs.sort_unstable();
    }

    fn build_contacts(&self) -> Vec<Contact> {
        let dt = self.config.timestep;
        let e = self.config.restitution;
        let mu = self.config.friction;
        // Approach speeds below this never bounce, so resting contacts stay put.
        let bounce_threshold = 4.0 * self.config.gravity_mm() * dt;
        let make = |a: usize, b: Option<usize>, normal: Vec3, gap: f64, friction: f64, key: (u32, u32)| {
            let inv_b = b.map_or(0.0, |b| self.inv_mass[b]);
            let vb = b.map_or(Vec3::ZERO, |b| self.bodies[b].velocity);
            let vn0 = (self.bodies[a].velocity - vb).dot(normal);
            let mut target = if gap > 0.0 { -gap / dt } else { 0.0 };
            if vn0 < -bounce_threshold && vn0 * dt < -gap.max(0.0) {
                target = target.max(-e * vn0);
            }
            Contact {
                a,
                b,
                normal,
                eff_mass: 1.0 / (self.inv_mass[a] + inv_b),
                target,
                friction,
                acc_n: 0.0,
                acc_t: Vec3::ZERO,
                key,
            }
        };

        let mut contacts = Vec::with_capacity(self.bodies.len() + self.pairs.len());
        for (i, b) in self.bodies.iter().enumerate() {
            let reach = b.velocity.length() * dt + SPECULATIVE_SLOP;
            let id = i as u32;
            let r = b.radius;
            let p = b.center;
            let statics = [
                (p.z - r, Vec3::Z, mu, FLOOR),
                (self.half - r - p.x, Vec3::new(-1.0, 0.0, 0.0), 0.0, WALL_POS_X),
                (p.x + self.half - r, Vec3::new(1.0, 0.0, 0.0), 0.0, WALL_NEG_X),
                (self.half - r - p.y, Vec3::new(0.0, -1.0, 0.0), 0.0, WALL_POS_Y),
                (p.y + self.half - r, Vec3::new(0.0, 1.0, 0.0), 0.0, WALL_NEG_Y),
            ];
            for (gap, normal, friction, kind) in statics {
                if gap < reach {
                    contacts.push(make(i, None, normal, gap, friction, (id, kind)));
                }
            }
        }
        for &(i, j) in &self.pairs {
            let (bi, bj) = (&self.bodies[i], &self.bodies[j]);
            let d = bi.center - bj.center;
            let dist = d.length();
            let gap = dist - bi.radius - bj.radius;
            let reach = (bi.velocity - bj.velocity).length() * dt + SPECULATIVE_SLOP;
            if gap < reach {
                let normal = if dist > 1e-12 { d / dist } else { Vec3::Z };
                contacts.push(make(i, Some(j), normal, gap, mu, (i as u32, PAIR_BASE + j as u32)));
            }
        }
        contacts
    }

    fn warm_start(&mut self, contacts: &mut [Contact]) {
        for c in contacts.iter_mut() {
            let Some(w) = self.warm.get(&c.key) else { continue };
            c.acc_n = w.normal;
            let mut t = w.tangent - c.normal * w.tangent.dot(c.normal);
            let limit = c.friction * c.acc_n;
            let len = t.length();
            if len > limit {
                t = if len > 0.0 { t * (limit / len) } else { Vec3::ZERO };
            }
            c.acc_t = t;
            let impulse = c.normal * c.acc_n + c.acc_t;
            apply(&mut self.bodies, &self.inv_mass, c.a, c.b, impulse);
        }
    }

    /// Gauss–Seidel position projection. Sphere pairs split each correction
    /// evenly (mass-independent, so a heavy body on a light one still
    /// separates quickly); floor and walls are hard clamps.
    fn project(&mut self, passes: usize, target: f64) {
        for _ in 0..passes {
            for &(i, j) in &self.pairs {
                let (ri, rj) = (self.bodies[i].radius, self.bodies[j].radius);
                let d = self.bodies[i].center - self.bodies[j].center;
                let dist = d.length();
                let pen = ri + rj - dist;
                if pen > 0.0 {
                    let n = if dist > 1e-12 { d / dist } else { Vec3::Z };
                    self.bodies[i].center += n * (0.5 * pen);
                    self.bodies[j].center -= n * (0.5 * pen);
                }
            }
            for b in &mut self.bodies {
                let lim = self.half - b.radius;
                b.center.x = b.center.x.clamp(-lim, lim);
                b.center.y = b.center.y.clamp(-lim, lim);
                b.center.z = b.center.z.max(b.radius);
            }
            if self.max_penetration() <= target {
                break;
            }
        }
    }
}

fn apply(bodies: &mut [BodyState], inv_mass: &[f64], a: usize, b: Option<usize>, impulse: Vec3) {
    bodies[a].velocity += impulse * inv_mass[a];
    if let Some(b) = b {
        bodies[b].velocity -= impulse * inv_mass[b];
    }
}

fn solve_contact(c: &mut Contact, bodies: &mut [BodyState], inv_mass: &[f64]) {
    let (a, b) = (c.a, c.b);
    let rel = |bodies: &[BodyState]| bodies[a].velocity - b.map_or(Vec3::ZERO, |b| bodies[b].velocity);

    let vn = rel(bodies).dot(c.normal);
    let new_n = (c.acc_n + c.eff_mass * (c.target - vn)).max(0.0);
    let dn = new_n - c.acc_n;
    c.acc_n = new_n;
    if dn != 0.0 {
        apply(bodies, inv_mass, c.a, c.b, c.normal * dn);
    }

    if c.friction > 0.0 {
        let v = rel(bodies);
        let vt = v - c.normal * v.dot(c.normal);
        let mut new_t = c.acc_t - vt * c.eff_mass;
        let limit = c.friction * c.acc_n;
        let len = new_t.length();
        if len > limit {
            new_t = if len > 0.0 { new_t * (limit / len) } else { Vec3::ZERO };
        }
        let dt = new_t - c.acc_t;
        c.acc_t = new_t;
        apply(bodies, inv_mass, c.a, c.b, dt);
    }
}
