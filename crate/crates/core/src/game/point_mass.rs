use rand::RngCore;

use super::{check_scales, clamp_action, AdversarialGame, GameError, GameSpec, StepOutcome};

/// Planar double integrator pushed from `(-1, -1)` towards `(1, 1)`.
///
/// `acc = (a_p + f_max * a_a - c * vel) / m`, explicit Euler with `dt = 0.05`,
/// reward `-|pos' - goal|`. Observation is `[x, y, vx, vy]`.
#[derive(Debug, Clone)]
pub struct AdversarialPointMass {
    spec: GameSpec,
    mass: f64,
    friction: f64,
    adversary_enabled: bool,
    pos: [f64; 2],
    vel: [f64; 2],
    t: usize,
    last_force: [f64; 2],
}

impl AdversarialPointMass {
    pub const DT: f64 = 0.05;
    pub const START: [f64; 2] = [-1.0, -1.0];
    pub const GOAL: [f64; 2] = [1.0, 1.0];
    pub const MASS: f64 = 1.0;
    pub const FRICTION: f64 = 0.1;
    pub const F_MAX: f64 = 0.5;

    pub fn spec_mut(&mut self) -> &mut GameSpec {
        &mut self.spec
    }

    pub fn position(&self) -> [f64; 2] {
        self.pos
    }

    pub fn velocity(&self) -> [f64; 2] {
        self.vel
    }

    /// Places the body at an arbitrary state (for tests and diagnostics).
    pub fn set_state(&mut self, pos: [f64; 2], vel: [f64; 2]) {
        self.pos = pos;
        self.vel = vel;
        self.t = 0;
    }

    pub fn kinetic_energy(&self) -> f64 {
        0.5 * self.mass * (self.vel[0].powi(2) + self.vel[1].powi(2))
    }

    fn distance_to_goal(pos: [f64; 2]) -> f64 {
        ((pos[0] - Self::GOAL[0]).powi(2) + (pos[1] - Self::GOAL[1]).powi(2)).sqrt()
    }
}

impl Default for AdversarialPointMass {
    fn default() -> Self {
        let grid = GameSpec::DEFAULT_GRID.to_vec();
        Self {
            spec: GameSpec {
                name: "point_mass".into(),
                obs_dim: 4,
                protagonist_action_dim: 2,
                adversary_action_dim: 2,
                f_max: Self::F_MAX,
                horizon: GameSpec::DEFAULT_HORIZON,
                gamma: GameSpec::DEFAULT_GAMMA,
                nominal_mass: Self::MASS,
                nominal_friction: Self::FRICTION,
                mass_grid: grid.clone(),
                friction_grid: grid,
            },
            mass: Self::MASS,
            friction: Self::FRICTION,
            adversary_enabled: true,
            pos: Self::START,
            vel: [0.0; 2],
            t: 0,
            last_force: [0.0; 2],
        }
    }
}

impl AdversarialGame for AdversarialPointMass {
    fn spec(&self) -> &GameSpec {
        &self.spec
    }

    fn reset(&mut self, _rng: &mut dyn RngCore) -> Vec<f64> {
        self.pos = Self::START;
        self.vel = [0.0; 2];
        self.t = 0;
        self.last_force = [0.0; 2];
        self.observation()
    }

    fn step(&mut self, protagonist: &[f64], adversary: &[f64]) -> Result<StepOutcome, GameError> {
        if self.t >= self.spec.horizon {
            return Err(GameError::EpisodeOver);
        }
        let a_p = clamp_action(protagonist, 2, "protagonist")?;
        let a_a = clamp_action(adversary, 2, "adversary")?;
        let f_max = if self.adversary_enabled { self.spec.f_max } else { 0.0 };
        let dt = Self::DT;
        let mut pos = self.pos;
        let mut vel = self.vel;
        for i in 0..2 {
            let disturbance = f_max * a_a[i];
            self.last_force[i] = disturbance;
            let acc = (a_p[i] + disturbance - self.friction * self.vel[i]) / self.mass;
            pos[i] = self.pos[i] + dt * self.vel[i];
            vel[i] = self.vel[i] + dt * acc;
        }
        self.pos = pos;
        self.vel = vel;
        self.t += 1;
        Ok(StepOutcome {
            observation: self.observation(),
            reward: -Self::distance_to_goal(self.pos),
            done: self.t >= self.spec.horizon,
            terminal: false,
        })
    }

    fn set_params(&mut self, mass_scale: f64, friction_scale: f64) -> Result<(), GameError> {
        check_scales(mass_scale, friction_scale)?;
        self.mass = self.spec.nominal_mass * mass_scale;
        self.friction = self.spec.nominal_friction * friction_scale;
        Ok(())
    }

    fn params(&self) -> (f64, f64) {
        (
            self.mass / self.spec.nominal_mass,
            self.friction / self.spec.nominal_friction,
        )
    }

    fn set_adversary_enabled(&mut self, enabled: bool) {
        self.adversary_enabled = enabled;
    }

    fn observation(&self) -> Vec<f64> {
        vec![self.pos[0], self.pos[1], self.vel[0], self.vel[1]]
    }

    fn last_adversary_force(&self) -> &[f64] {
        &self.last_force
    }
}
