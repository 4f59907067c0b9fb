use serde::{Deserialize, Serialize};

use crate::error::PowerError;
use crate::model::Instance;
use crate::power::PowerModel;

/// What one epoch does: transmit at `rate` for `on_time` seconds from the
/// epoch head, moving `phi` data units at a cost of `energy`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochAction {
    pub rate: f64,
    pub on_time: f64,
    pub phi: f64,
    pub energy: f64,
}

impl EpochAction {
    pub fn new(rate: f64, on_time: f64) -> Self {
        EpochAction {
            rate,
            on_time,
            phi: rate * on_time,
            energy: 0.0,
        }
    }

    /// Same as `new` but keeps an exactly known departure instead of
    /// recomputing it as `rate * on_time`.
    pub fn with_phi(rate: f64, on_time: f64, phi: f64) -> Self {
        EpochAction {
            rate,
            on_time,
            phi,
            energy: 0.0,
        }
    }

    pub fn off() -> Self {
        Self::new(0.0, 0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    actions: Vec<EpochAction>,
    total_energy: f64,
}

impl Schedule {
    pub fn from_parts(actions: Vec<EpochAction>, total_energy: f64) -> Self {
        Schedule {
            actions,
            total_energy,
        }
    }

    /// Prices every epoch on `instance`'s channel and circuit. Energies are
    /// solver objectives, `(P(r; g_n) + rho_eff) l_n`.
    pub fn assemble<M: PowerModel + ?Sized>(
        instance: &Instance,
        model: &M,
        mut actions: Vec<EpochAction>,
    ) -> Result<Self, PowerError> {
        let rho = instance.circuit().effective_rho()?;
        let mut total = 0.0;
        for (n, a) in actions.iter_mut().enumerate() {
            a.energy = if a.on_time > 0.0 {
                (model.power(a.rate, instance.channel().gain(n)) + rho) * a.on_time
            } else {
                0.0
            };
            total += a.energy;
        }
        Ok(Schedule::from_parts(actions, total))
    }

    pub fn epochs(&self) -> usize {
        self.actions.len()
    }

    pub fn actions(&self) -> &[EpochAction] {
        &self.actions
    }

    pub fn phis(&self) -> Vec<f64> {
        self.actions.iter().map(|a| a.phi).collect()
    }

    /// Solver objective in effective-power units.
    pub fn total_energy(&self) -> f64 {
        self.total_energy
    }

    /// Physical Joules, including `1/eta` scaling and idle power.
    pub fn reported_energy(&self, instance: &Instance) -> f64 {
        instance
            .circuit()
            .reported_energy(self.total_energy, instance.grid().horizon())
    }
}

/// Constraint that ends a segment of constant rate or water level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Binding {
    Causality,
    Deadline,
    Terminal,
}

impl Binding {
    pub fn as_str(self) -> &'static str {
        match self {
            Binding::Causality => "causality",
            Binding::Deadline => "deadline",
            Binding::Terminal => "terminal",
        }
    }
}

impl std::str::FromStr for Binding {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "causality" => Ok(Binding::Causality),
            "deadline" => Ok(Binding::Deadline),
            "terminal" => Ok(Binding::Terminal),
            other => Err(format!("unknown binding '{other}'")),
        }
    }
}
