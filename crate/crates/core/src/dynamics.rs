//! Critically damped harmonic oscillators integrated with semi-implicit Euler.
//!
//! Every smoothly fluctuating quantity of the simulation (profile sizes,
//! rotation angles, control-point positions) follows
//!
//! ```text
//! a_n     = f_n - lambda * v_n - k * (x_n - x_eq)
//! v_{n+1} = v_n + dt * a_n
//! x_{n+1} = x_n + dt * v_{n+1}
//! ```
//!
//! with unit mass and `lambda = 2 / tau`, `k = 1 / tau^2` (critical damping).

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Default relaxation time in frames.
pub const DEFAULT_TAU: f64 = 10.0;

/// Damping `lambda` and stiffness `k` of a critically damped oscillator with
/// relaxation time `tau`.
pub fn critical_params(tau: f64) -> Result<(f64, f64)> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::param(format!("tau must be positive, got {tau}")));
    }
    Ok((2.0 / tau, 1.0 / (tau * tau)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct OscillatorState {
    pub value: Vec<f64>,
    pub velocity: Vec<f64>,
    pub equilibrium: Vec<f64>,
    tau: f64,
}

impl OscillatorState {
    /// Oscillator at rest (`velocity = 0`) at `value`.
    pub fn new(value: Vec<f64>, equilibrium: Vec<f64>, tau: f64) -> Result<Self> {
        let velocity = vec![0.0; value.len()];
        Self::with_velocity(value, velocity, equilibrium, tau)
    }

    pub fn with_velocity(
        value: Vec<f64>,
        velocity: Vec<f64>,
        equilibrium: Vec<f64>,
        tau: f64,
    ) -> Result<Self> {
        critical_params(tau)?;
        if value.len() != velocity.len() || value.len() != equilibrium.len() {
            return Err(Error::DimensionMismatch {
                expected: format!("{} components", value.len()),
                got: format!(
                    "velocity {} / equilibrium {}",
                    velocity.len(),
                    equilibrium.len()
                ),
            });
        }
        Ok(Self {
            value,
            velocity,
            equilibrium,
            tau,
        })
    }

    /// Oscillator resting at its equilibrium.
    pub fn at_rest(equilibrium: Vec<f64>, tau: f64) -> Result<Self> {
        Self::new(equilibrium.clone(), equilibrium, tau)
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn dim(&self) -> usize {
        self.value.len()
    }

    /// `(lambda, k)` of this oscillator.
    pub fn params(&self) -> (f64, f64) {
        (2.0 / self.tau, 1.0 / (self.tau * self.tau))
    }

    /// One semi-implicit Euler step, returning the new state.
    pub fn step(&self, force: &[f64], dt: f64) -> Result<Self> {
        let mut next = self.clone();
        next.step_mut(force, dt)?;
        Ok(next)
    }

    /// In-place variant of [`OscillatorState::step`].
    pub fn step_mut(&mut self, force: &[f64], dt: f64) -> Result<()> {
        if !(dt > 0.0) {
            return Err(Error::param(format!("dt must be positive, got {dt}")));
        }
        if force.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: format!("{} force components", self.dim()),
                got: force.len().to_string(),
            });
        }
        let (lambda, k) = self.params();
        for i in 0..self.dim() {
            let accel =
                force[i] - lambda * self.velocity[i] - k * (self.value[i] - self.equilibrium[i]);
            self.velocity[i] += dt * accel;
            self.value[i] += dt * self.velocity[i];
        }
        Ok(())
    }

    /// Step with i.i.d. zero-mean Gaussian forces of standard deviation `force_std`.
    pub fn step_random<R: Rng + ?Sized>(
        &mut self,
        force_std: f64,
        dt: f64,
        rng: &mut R,
    ) -> Result<()> {
        let force: Vec<f64> = if force_std > 0.0 {
            let normal = Normal::new(0.0, force_std)
                .map_err(|e| Error::param(format!("force std: {e}")))?;
            (0..self.dim()).map(|_| normal.sample(rng)).collect()
        } else {
            vec![0.0; self.dim()]
        };
        self.step_mut(&force, dt)
    }

    /// `½ v² + ½ k (x − x_eq)²` summed over components.
    pub fn energy(&self) -> f64 {
        let (_, k) = self.params();
        self.value
            .iter()
            .zip(&self.velocity)
            .zip(&self.equilibrium)
            .map(|((x, v), eq)| 0.5 * v * v + 0.5 * k * (x - eq) * (x - eq))
            .sum()
    }
}

/// Free function form of [`OscillatorState::step`].
pub fn oscillator_step(state: &OscillatorState, force: &[f64], dt: f64) -> Result<OscillatorState> {
    state.step(force, dt)
}

/// Stationary variance of `x − x_eq` for the discrete recurrence driven by
/// i.i.d. forces of unit variance.
///
/// The state `(e, v)` evolves as `z' = A z + b f`; the stationary covariance
/// solves the discrete Lyapunov equation `P = A P Aᵀ + b bᵀ`.
pub fn stationary_variance_per_unit_force(tau: f64, dt: f64) -> Result<f64> {
    let (lambda, k) = critical_params(tau)?;
    if !(dt > 0.0) {
        return Err(Error::param(format!("dt must be positive, got {dt}")));
    }
    let a11 = 1.0 - k * dt * dt;
    let a12 = dt * (1.0 - lambda * dt);
    let a21 = -k * dt;
    let a22 = 1.0 - lambda * dt;
    let (b1, b2) = (dt * dt, dt);

    // Unknowns (p11, p12, p22) of the symmetric covariance.
    #[rustfmt::skip]
    let m = Matrix3::new(
        a11 * a11,       2.0 * a11 * a12,               a12 * a12,
        a11 * a21,       a11 * a22 + a12 * a21,         a12 * a22,
        a21 * a21,       2.0 * a21 * a22,               a22 * a22,
    );
    let q = Vector3::new(b1 * b1, b1 * b2, b2 * b2);
    let p = (Matrix3::identity() - m)
        .lu()
        .solve(&q)
        .ok_or_else(|| Error::param(format!("recurrence is not stable for tau={tau}, dt={dt}")))?;
    let var = p[0];
    if !(var > 0.0) || !var.is_finite() || p[2] <= 0.0 {
        return Err(Error::param(format!(
            "recurrence is not stable for tau={tau}, dt={dt}"
        )));
    }
    Ok(var)
}

/// Force standard deviation that gives `x − x_eq` a stationary standard
/// deviation of `target_std`.
pub fn calibrate_force_std(target_std: f64, tau: f64, dt: f64) -> Result<f64> {
    if !(target_std >= 0.0) {
        return Err(Error::param(format!(
            "target std must be non-negative, got {target_std}"
        )));
    }
    let var = stationary_variance_per_unit_force(tau, dt)?;
    Ok(target_std / var.sqrt())
}
