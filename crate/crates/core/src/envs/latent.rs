use crate::error::ensure;
use crate::Result;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Ornstein-Uhlenbeck latent `dξ = −θ ξ dt + η dW` observed through identity
/// plus Gaussian noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatentParams {
    /// Mean-reversion rate.
    pub theta: f64,
    /// Diffusion coefficient.
    pub eta: f64,
    /// Observation noise standard deviation.
    pub sigma_eps: f64,
    pub dt: f64,
}

impl Default for LatentParams {
    fn default() -> Self {
        Self { theta: 0.05, eta: 0.3, sigma_eps: 0.5, dt: 0.1 }
    }
}

impl LatentParams {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.theta > 0.0 && self.theta.is_finite(), "theta must be positive, got {}", self.theta);
        ensure!(self.eta >= 0.0 && self.eta.is_finite(), "eta must be non-negative, got {}", self.eta);
        ensure!(self.sigma_eps >= 0.0 && self.sigma_eps.is_finite(), "sigma_eps must be non-negative, got {}", self.sigma_eps);
        ensure!(self.dt > 0.0 && self.dt.is_finite(), "dt must be positive, got {}", self.dt);
        Ok(())
    }

    /// Continuous-time stationary variance `η²/(2θ)`.
    pub fn stationary_variance(&self) -> f64 {
        self.eta * self.eta / (2.0 * self.theta)
    }

    /// One-step Euler factor `1 − θ·dt`.
    pub fn decay(&self) -> f64 {
        1.0 - self.theta * self.dt
    }

    /// One-step process noise variance `η²·dt`.
    pub fn step_variance(&self) -> f64 {
        self.eta * self.eta * self.dt
    }

    pub fn obs_variance(&self) -> f64 {
        self.sigma_eps * self.sigma_eps
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentProcess {
    pub params: LatentParams,
    pub xi: f64,
}

/// Draws `ξ₀` from the stationary law `N(0, η²/(2θ))`.
pub fn latent_reset<R: Rng + ?Sized>(params: LatentParams, rng: &mut R) -> Result<LatentProcess> {
    params.validate()?;
    let z: f64 = rng.sample(StandardNormal);
    Ok(LatentProcess { params, xi: params.stationary_variance().sqrt() * z })
}

/// Euler-Maruyama step followed by a noisy observation of the new state.
pub fn latent_step<R: Rng + ?Sized>(state: &mut LatentProcess, rng: &mut R) -> f64 {
    let p = state.params;
    state.step_with(p.theta, p.eta, rng)
}

impl LatentProcess {
    /// Steps with overridden drift and diffusion; used for regime switching.
    pub fn step_with<R: Rng + ?Sized>(&mut self, theta: f64, eta: f64, rng: &mut R) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        let e: f64 = rng.sample(StandardNormal);
        let dt = self.params.dt;
        self.xi = self.xi * (1.0 - theta * dt) + eta * dt.sqrt() * z;
        self.xi + self.params.sigma_eps * e
    }
}
