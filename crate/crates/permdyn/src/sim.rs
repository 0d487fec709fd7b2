//! 2D hard-disc simulator: time-stepped integration with impulse-based
//! disc-disc and disc-wall collisions, restitution, and positional overlap
//! projection.
//!
//! Discs live in the square `[-H, H]²`. A step integrates positions, runs a
//! fixed number of sequential impulse sweeps over pairs (ascending `i<j`) and
//! walls, then projects residual penetration out positionally without
//! touching velocities. With restitution ≤ 1 and impulses applied only to
//! approaching contacts, kinetic energy never increases.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeds;

/// Penetration accepted as "resolved".
pub const PENETRATION_TOL: f64 = 1e-6;

const RELAX_ATTEMPTS: usize = 10_000;
const PROJECTION_MAX_PASSES: usize = 50;

const SALT_PLACE: u64 = 0x11;
const SALT_KICK: u64 = 0x22;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_discs: usize,
    pub radii: Vec<f64>,
    pub box_half_width: f64,
    pub restitution: f64,
    pub dt: f64,
    pub relax_steps: usize,
    pub record_steps: usize,
    pub mass: f64,
    pub solver_iterations: usize,
}

impl SimConfig {
    /// Paper protocol defaults: radius 0.2, box `[-1,1]²`, e = 0.9, dt = 0.02,
    /// 200 relaxation steps, 400 recorded steps.
    pub fn new(n_discs: usize) -> Self {
        SimConfig {
            n_discs,
            radii: vec![0.2; n_discs],
            box_half_width: 1.0,
            restitution: 0.9,
            dt: 0.02,
            relax_steps: 200,
            record_steps: 400,
            mass: 1.0,
            solver_iterations: 8,
        }
    }

    pub fn with_radii(radii: Vec<f64>) -> Self {
        let mut c = SimConfig::new(radii.len());
        c.radii = radii;
        c
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_discs == 0 || self.radii.len() != self.n_discs {
            return Err(Error::InvalidConfig(format!(
                "{} radii for {} discs",
                self.radii.len(),
                self.n_discs
            )));
        }
        if !(self.restitution > 0.0 && self.restitution <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "restitution {} outside (0, 1]",
                self.restitution
            )));
        }
        if self.dt <= 0.0 {
            return Err(Error::InvalidConfig(format!("dt {} must be > 0", self.dt)));
        }
        let h = self.box_half_width;
        if self.radii.iter().any(|&r| r <= 0.0 || r >= h) {
            return Err(Error::InvalidConfig(
                "disc radius must lie in (0, box half-width)".into(),
            ));
        }
        let area: f64 = self.radii.iter().map(|r| std::f64::consts::PI * r * r).sum();
        if area >= 4.0 * h * h {
            return Err(Error::InvalidConfig(format!(
                "total disc area {area:.3} exceeds box area {:.3}",
                4.0 * h * h
            )));
        }
        Ok(())
    }
}

/// Positions, velocities, radii, and optional per-disc 2-vector labels.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscState {
    pub positions: Vec<[f64; 2]>,
    pub velocities: Vec<[f64; 2]>,
    pub radii: Vec<f64>,
    pub labels: Option<Vec<[f64; 2]>>,
}

impl DiscState {
    pub fn n_discs(&self) -> usize {
        self.positions.len()
    }

    pub fn is_finite(&self) -> bool {
        self.positions.iter().chain(self.velocities.iter())
            .all(|v| v[0].is_finite() && v[1].is_finite())
    }
}

/// A recorded run: `record_steps + 1` states, consecutive states related by
/// exactly one [`step`].
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub config: SimConfig,
    pub states: Vec<DiscState>,
    pub seed: u64,
}

impl Trajectory {
    /// Binds per-disc labels to every state of the trajectory.
    pub fn attach_labels(&mut self, labels: Vec<[f64; 2]>) {
        for s in &mut self.states {
            s.labels = Some(labels.clone());
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diagnostics {
    pub kinetic_energy: f64,
    pub total_momentum: [f64; 2],
    pub max_penetration: f64,
}

/// One positional projection pass: separate overlapping pairs (split equally)
/// then clamp centers into the box. Velocities untouched.
fn project_pass(positions: &mut [[f64; 2]], radii: &[f64], h: f64) {
    let n = positions.len();
    for i in 0..n {
        for j in (i + 1)..n {
            let dx = positions[j][0] - positions[i][0];
            let dy = positions[j][1] - positions[i][1];
            let dist2 = dx * dx + dy * dy;
            let r_sum = radii[i] + radii[j];
            if dist2 < r_sum * r_sum {
                let dist = dist2.sqrt();
                // Coincident centers: separate along x deterministically.
                let (nx, ny) = if dist > 1e-12 {
                    (dx / dist, dy / dist)
                } else {
                    (1.0, 0.0)
                };
                let push = 0.5 * (r_sum - dist);
                positions[i][0] -= push * nx;
                positions[i][1] -= push * ny;
                positions[j][0] += push * nx;
                positions[j][1] += push * ny;
            }
        }
    }
    for (p, &r) in positions.iter_mut().zip(radii) {
        let lim = h - r;
        for c in p.iter_mut() {
            *c = c.clamp(-lim, lim);
        }
    }
}

fn max_penetration_of(positions: &[[f64; 2]], radii: &[f64], h: f64) -> f64 {
    let n = positions.len();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            let dx = positions[j][0] - positions[i][0];
            let dy = positions[j][1] - positions[i][1];
            let overlap = radii[i] + radii[j] - (dx * dx + dy * dy).sqrt();
            worst = worst.max(overlap);
        }
        let lim = h - radii[i];
        worst = worst.max(positions[i][0].abs() - lim);
        worst = worst.max(positions[i][1].abs() - lim);
    }
    worst
}

/// Draws centers uniformly, then runs `relax_steps` projection passes with
/// velocities zeroed. Redraws until the packing resolves below
/// [`PENETRATION_TOL`], up to a bounded attempt budget.
pub fn init_and_relax(config: &SimConfig, seed: u64) -> Result<DiscState> {
    config.validate()?;
    let mut rng = seeds::rng(seeds::derive(seed, SALT_PLACE));
    let h = config.box_half_width;
    for _ in 0..RELAX_ATTEMPTS {
        let mut positions: Vec<[f64; 2]> = config
            .radii
            .iter()
            .map(|&r| {
                let lim = h - r;
                [
                    rng.random_range(-lim..lim),
                    rng.random_range(-lim..lim),
                ]
            })
            .collect();
        for _ in 0..config.relax_steps {
            project_pass(&mut positions, &config.radii, h);
        }
        if max_penetration_of(&positions, &config.radii, h) <= PENETRATION_TOL {
            return Ok(DiscState {
                velocities: vec![[0.0, 0.0]; config.n_discs],
                positions,
                radii: config.radii.clone(),
                labels: None,
            });
        }
    }
    Err(Error::PackingInfeasible { attempts: RELAX_ATTEMPTS })
}

/// Overwrites every velocity component with an i.i.d. standard normal draw.
pub fn kick_velocities(state: &mut DiscState, seed: u64) {
    let mut rng = seeds::rng(seeds::derive(seed, SALT_KICK));
    for v in &mut state.velocities {
        v[0] = StandardNormal.sample(&mut rng);
        v[1] = StandardNormal.sample(&mut rng);
    }
}

/// Advances the state by one timestep.
pub fn step(state: &DiscState, config: &SimConfig) -> Result<DiscState> {
    if !state.is_finite() {
        return Err(Error::NonFiniteState);
    }
    let mut s = state.clone();
    let n = s.n_discs();
    let h = config.box_half_width;
    let e = config.restitution;
    let inv_m = 1.0 / config.mass;

    for (p, v) in s.positions.iter_mut().zip(&s.velocities) {
        p[0] += config.dt * v[0];
        p[1] += config.dt * v[1];
    }

    for _ in 0..config.solver_iterations {
        for i in 0..n {
            for j in (i + 1)..n {
                let dx = s.positions[j][0] - s.positions[i][0];
                let dy = s.positions[j][1] - s.positions[i][1];
                let dist2 = dx * dx + dy * dy;
                let r_sum = s.radii[i] + s.radii[j];
                if dist2 >= r_sum * r_sum {
                    continue;
                }
                let dist = dist2.sqrt();
                let (nx, ny) = if dist > 1e-12 {
                    (dx / dist, dy / dist)
                } else {
                    (1.0, 0.0)
                };
                // Closing speed along the contact normal (i -> j).
                let closing = (s.velocities[i][0] - s.velocities[j][0]) * nx
                    + (s.velocities[i][1] - s.velocities[j][1]) * ny;
                if closing <= 0.0 {
                    continue;
                }
                let impulse = (1.0 + e) * closing / (inv_m + inv_m);
                s.velocities[i][0] -= impulse * nx * inv_m;
                s.velocities[i][1] -= impulse * ny * inv_m;
                s.velocities[j][0] += impulse * nx * inv_m;
                s.velocities[j][1] += impulse * ny * inv_m;
            }
        }
        for i in 0..n {
            let lim = h - s.radii[i];
            for axis in 0..2 {
                if s.positions[i][axis] <= -lim && s.velocities[i][axis] < 0.0 {
                    s.velocities[i][axis] = -e * s.velocities[i][axis];
                } else if s.positions[i][axis] >= lim && s.velocities[i][axis] > 0.0 {
                    s.velocities[i][axis] = -e * s.velocities[i][axis];
                }
            }
        }
    }

    for _ in 0..PROJECTION_MAX_PASSES {
        if max_penetration_of(&s.positions, &s.radii, h) <= PENETRATION_TOL {
            break;
        }
        project_pass(&mut s.positions, &s.radii, h);
    }
    Ok(s)
}

/// Relax, kick, then record `record_steps` steps. Deterministic in
/// `(config, seed)`.
pub fn generate_trajectory(config: &SimConfig, seed: u64) -> Result<Trajectory> {
    let mut state = init_and_relax(config, seed)?;
    kick_velocities(&mut state, seed);
    let mut states = Vec::with_capacity(config.record_steps + 1);
    states.push(state);
    for _ in 0..config.record_steps {
        let next = step(states.last().unwrap(), config)?;
        states.push(next);
    }
    Ok(Trajectory { config: config.clone(), states, seed })
}

/// Kinetic energy, total momentum, and worst penetration of a state.
pub fn diagnostics(state: &DiscState, config: &SimConfig) -> Diagnostics {
    let m = config.mass;
    let mut ke = 0.0;
    let mut px = 0.0;
    let mut py = 0.0;
    for v in &state.velocities {
        ke += 0.5 * m * (v[0] * v[0] + v[1] * v[1]);
        px += m * v[0];
        py += m * v[1];
    }
    Diagnostics {
        kinetic_energy: ke,
        total_momentum: [px, py],
        max_penetration: max_penetration_of(&state.positions, &state.radii, config.box_half_width)
            .max(0.0),
    }
}
