//! Rate-to-power models and the energy-efficiency scalars derived from them.

use serde::{Deserialize, Serialize};

use crate::error::PowerError;

/// Relative tolerance for deciding that a water level sits exactly at `w_ee`.
pub const TIE_TOL: f64 = 1e-9;

/// Strictly convex, strictly increasing map from rate to transmit power for a
/// given channel power gain, with `P(0) = 0`.
///
/// Solvers only use `power`, `marginal`, `inverse_marginal` and `ee_rate`, so
/// any model satisfying the contract can be dropped in.
pub trait PowerModel: Send + Sync {
    fn power(&self, rate: f64, gain: f64) -> f64;

    fn marginal(&self, rate: f64, gain: f64) -> f64;

    /// Inverse of `marginal` in the rate argument. Not clamped: levels below
    /// `marginal(0, gain)` give negative rates.
    fn inverse_marginal(&self, w: f64, gain: f64) -> f64;

    /// Rate minimising `(P(r) + rho) / r`, by bisection on the strictly
    /// increasing residual `P'(r) r - P(r) - rho`.
    fn ee_rate(&self, gain: f64, rho_eff: f64) -> EeRate {
        if rho_eff <= 0.0 {
            let w = self.marginal(0.0, gain);
            return EeRate {
                rate: 0.0,
                water: w,
                unit_cost: w,
            };
        }
        let residual = |r: f64| self.marginal(r, gain) * r - self.power(r, gain) - rho_eff;
        let mut lo = 0.0;
        let mut hi = 1.0;
        while residual(hi) < 0.0 {
            lo = hi;
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if residual(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let rate = if residual(hi) == 0.0 { hi } else { 0.5 * (lo + hi) };
        EeRate {
            rate,
            water: self.marginal(rate, gain),
            unit_cost: (self.power(rate, gain) + rho_eff) / rate,
        }
    }
}

/// Shannon-capacity model with unit noise: `P(r; g) = (e^r - 1) / g`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Shannon;

impl PowerModel for Shannon {
    fn power(&self, rate: f64, gain: f64) -> f64 {
        rate.exp_m1() / gain
    }

    fn marginal(&self, rate: f64, gain: f64) -> f64 {
        rate.exp() / gain
    }

    fn inverse_marginal(&self, w: f64, gain: f64) -> f64 {
        (gain * w).ln()
    }
}

/// Circuit power: `rho` while transmitting, `beta` while idle, RF efficiency `eta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircuitParams {
    pub rho: f64,
    pub eta: f64,
    pub beta: f64,
}

impl CircuitParams {
    pub fn new(rho: f64, eta: f64, beta: f64) -> Result<Self, PowerError> {
        let params = CircuitParams { rho, eta, beta };
        params.validate()?;
        Ok(params)
    }

    /// Only the on-power `rho`, perfect RF chain, nothing burnt while idle.
    pub fn on_power(rho: f64) -> Self {
        CircuitParams {
            rho,
            eta: 1.0,
            beta: 0.0,
        }
    }

    pub fn ideal() -> Self {
        Self::on_power(0.0)
    }

    pub fn validate(&self) -> Result<(), PowerError> {
        if !(self.rho.is_finite() && self.rho >= 0.0) {
            return Err(PowerError::InvalidCircuit(format!("rho = {}", self.rho)));
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(PowerError::InvalidCircuit(format!("eta = {} not in (0, 1]", self.eta)));
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(PowerError::InvalidCircuit(format!("beta = {}", self.beta)));
        }
        Ok(())
    }

    /// Effective on-power `eta (rho - beta)` that the solvers work with.
    pub fn effective_rho(&self) -> Result<f64, PowerError> {
        normalize_circuit(self)
    }

    /// Converts a solver objective `sum (P + rho_eff) l` back into physical
    /// Joules: divide by `eta` and charge idle power over the whole horizon.
    pub fn reported_energy(&self, objective: f64, horizon: f64) -> f64 {
        objective / self.eta + self.beta * horizon
    }
}

pub fn normalize_circuit(params: &CircuitParams) -> Result<f64, PowerError> {
    params.validate()?;
    if params.beta > params.rho {
        return Err(PowerError::NegativeEffectiveRho {
            rho: params.rho,
            beta: params.beta,
        });
    }
    Ok(params.eta * (params.rho - params.beta))
}

/// Energy-efficiency point of one channel state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EeRate {
    /// Rate maximising data per Joule, `r_ee`.
    pub rate: f64,
    /// Marginal power at that rate, `w_ee = P'(r_ee)`.
    pub water: f64,
    /// Minimum Joules per data unit, `(P(r_ee) + rho) / r_ee`.
    pub unit_cost: f64,
}

pub fn ee_rate<M: PowerModel + ?Sized>(model: &M, gain: f64, rho_eff: f64) -> EeRate {
    model.ee_rate(gain, rho_eff)
}

/// Water-filling rate `max(0, P'^{-1}(w))`.
pub fn rate_from_water<M: PowerModel + ?Sized>(
    model: &M,
    w: f64,
    gain: f64,
) -> Result<f64, PowerError> {
    if !(w > 0.0) {
        return Err(PowerError::NonPositiveWater(w));
    }
    Ok(model.inverse_marginal(w, gain).max(0.0))
}

pub fn is_tie(w: f64, w_ee: f64) -> bool {
    (w - w_ee).abs() <= TIE_TOL * w_ee
}

/// Set of data amounts one epoch can carry at a given water level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepartureInterval {
    pub lo: f64,
    pub hi: f64,
}

/// One epoch together with its precomputed efficiency point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochProfile {
    pub gain: f64,
    pub length: f64,
    pub ee: EeRate,
}

impl EpochProfile {
    pub fn new<M: PowerModel + ?Sized>(model: &M, gain: f64, length: f64, rho_eff: f64) -> Self {
        EpochProfile {
            gain,
            length,
            ee: model.ee_rate(gain, rho_eff),
        }
    }

    pub fn tie_capacity(&self) -> f64 {
        self.ee.rate * self.length
    }

    pub fn departure<M: PowerModel + ?Sized>(&self, model: &M, w: f64) -> DepartureInterval {
        if is_tie(w, self.ee.water) {
            DepartureInterval {
                lo: 0.0,
                hi: self.tie_capacity(),
            }
        } else if w < self.ee.water {
            DepartureInterval { lo: 0.0, hi: 0.0 }
        } else {
            let x = model.inverse_marginal(w, self.gain).max(0.0) * self.length;
            DepartureInterval { lo: x, hi: x }
        }
    }

    /// Least energy that moves `phi` units within this epoch.
    pub fn energy<M: PowerModel + ?Sized>(&self, model: &M, phi: f64, rho_eff: f64) -> f64 {
        if phi <= 0.0 {
            0.0
        } else if phi <= self.tie_capacity() {
            phi * self.ee.unit_cost
        } else {
            (model.power(phi / self.length, self.gain) + rho_eff) * self.length
        }
    }
}

pub fn epoch_departure<M: PowerModel + ?Sized>(
    model: &M,
    w: f64,
    gain: f64,
    length: f64,
    rho_eff: f64,
) -> DepartureInterval {
    EpochProfile::new(model, gain, length, rho_eff).departure(model, w)
}

pub fn epoch_energy<M: PowerModel + ?Sized>(
    model: &M,
    phi: f64,
    gain: f64,
    length: f64,
    rho_eff: f64,
) -> f64 {
    EpochProfile::new(model, gain, length, rho_eff).energy(model, phi, rho_eff)
}
