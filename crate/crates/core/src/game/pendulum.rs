use std::f64::consts::PI;

use rand::{Rng, RngCore};

use super::{check_scales, clamp_action, AdversarialGame, GameError, GameSpec, StepOutcome};

/// Torque-limited pendulum swing-up with an adversarial torque.
///
/// `theta = 0` is upright. `theta_dd = 3g/(2l) sin(theta) + 3/(m l^2) (tau_p + f_max a_a - c theta_d)`,
/// `tau_p = 2 a_p`, explicit Euler with `dt = 0.05`, angular speed clipped to
/// `[-8, 8]`. Reward `-(wrap(theta)^2 + 0.1 theta_d^2 + 0.001 tau_p^2)` on the
/// pre-step state. Observation is `[cos, sin, theta_d]`.
#[derive(Debug, Clone)]
pub struct AdversarialPendulum {
    spec: GameSpec,
    mass: f64,
    friction: f64,
    adversary_enabled: bool,
    theta: f64,
    theta_dot: f64,
    t: usize,
    last_force: [f64; 1],
}

impl AdversarialPendulum {
    pub const DT: f64 = 0.05;
    pub const GRAVITY: f64 = 10.0;
    pub const LENGTH: f64 = 1.0;
    pub const MASS: f64 = 1.0;
    pub const FRICTION: f64 = 0.05;
    pub const MAX_TORQUE: f64 = 2.0;
    pub const MAX_SPEED: f64 = 8.0;
    pub const F_MAX: f64 = 0.5;

    pub fn spec_mut(&mut self) -> &mut GameSpec {
        &mut self.spec
    }

    pub fn state(&self) -> (f64, f64) {
        (self.theta, self.theta_dot)
    }

    pub fn set_state(&mut self, theta: f64, theta_dot: f64) {
        self.theta = theta;
        self.theta_dot = theta_dot;
        self.t = 0;
    }

    /// Angular acceleration for the given net torque at the current state.
    fn angular_acceleration(&self, torque: f64) -> f64 {
        let l = Self::LENGTH;
        3.0 * Self::GRAVITY / (2.0 * l) * self.theta.sin()
            + 3.0 / (self.mass * l * l) * (torque - self.friction * self.theta_dot)
    }
}

/// Wraps an angle into `[-pi, pi)`.
pub fn wrap_angle(x: f64) -> f64 {
    (x + PI).rem_euclid(2.0 * PI) - PI
}

impl Default for AdversarialPendulum {
    fn default() -> Self {
        let grid = GameSpec::DEFAULT_GRID.to_vec();
        Self {
            spec: GameSpec {
                name: "pendulum".into(),
                obs_dim: 3,
                protagonist_action_dim: 1,
                adversary_action_dim: 1,
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
            theta: PI,
            theta_dot: 0.0,
            t: 0,
            last_force: [0.0],
        }
    }
}

impl AdversarialGame for AdversarialPendulum {
    fn spec(&self) -> &GameSpec {
        &self.spec
    }

    fn reset(&mut self, rng: &mut dyn RngCore) -> Vec<f64> {
        self.theta = rng.random_range(-PI..PI);
        self.theta_dot = rng.random_range(-1.0..1.0);
        self.t = 0;
        self.last_force = [0.0];
        self.observation()
    }

    fn step(&mut self, protagonist: &[f64], adversary: &[f64]) -> Result<StepOutcome, GameError> {
        if self.t >= self.spec.horizon {
            return Err(GameError::EpisodeOver);
        }
        let a_p = clamp_action(protagonist, 1, "protagonist")?;
        let a_a = clamp_action(adversary, 1, "adversary")?;
        let tau_p = Self::MAX_TORQUE * a_p[0];
        let f_max = if self.adversary_enabled { self.spec.f_max } else { 0.0 };
        let disturbance = f_max * a_a[0];
        self.last_force = [disturbance];

        let reward = -(wrap_angle(self.theta).powi(2) + 0.1 * self.theta_dot.powi(2) + 0.001 * tau_p.powi(2));
        let acc = self.angular_acceleration(tau_p + disturbance);
        let theta = self.theta + Self::DT * self.theta_dot;
        let theta_dot = (self.theta_dot + Self::DT * acc).clamp(-Self::MAX_SPEED, Self::MAX_SPEED);
        self.theta = theta;
        self.theta_dot = theta_dot;
        self.t += 1;
        Ok(StepOutcome {
            observation: self.observation(),
            reward,
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
        vec![self.theta.cos(), self.theta.sin(), self.theta_dot]
    }

    fn last_adversary_force(&self) -> &[f64] {
        &self.last_force
    }
}
