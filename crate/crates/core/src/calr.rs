//! Complexity-aware polynomial LR decay.
//!
//! Each subnet α gets its own decay exponent `γ(α) = ω·g(𝒞(α)) + τ`, where the affine
//! coefficients map the complexity range of the space onto `[γ_min, γ_max]`. The LR at
//! step `t` is then `η⁰·(1 − t/T)^γ(α)`, so large subnets keep a high LR for longer.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::space::ComplexityScore;

const CLAMP_SLACK: f64 = 1e-9;

/// Shape of `g(x)` in the decay-ratio formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayVariant {
    /// `g(x) = ln x`.
    Log,
    /// `g(x) = x`.
    Linear,
    /// `g(x) = exp(x̂)` on the min-max normalized complexity `x̂ ∈ [0, 1]`; raw
    /// parameter counts would overflow `exp`.
    Exp,
    /// `g(x) = −ln(k − x)` with `k = 𝒞_min + 𝒞_max`, calibrated the other way round:
    /// larger subnets decay faster. Only useful as a negative control.
    InverseLog,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleParams<S> {
    pub eta0: S,
    pub total_steps: usize,
    pub gamma_min: S,
    pub gamma_max: S,
    pub omega: S,
    pub tau: S,
    pub variant: DecayVariant,
    pub c_min: S,
    pub c_max: S,
}

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct DecayRatio<S>(S);

impl<S: Scalar> DecayRatio<S> {
    /// A fixed exponent, e.g. `1` for plain linear decay.
    pub fn fixed(value: S) -> Self {
        Self(value)
    }

    pub fn value(self) -> S {
        self.0
    }
}

/// `ω = −(γ_max − γ_min)/(g_max − g_min)`, `τ = γ_min − ω·g_max`, where `g_min = g(𝒞_min)`
/// and `g_max = g(𝒞_max)`.
pub fn affine_coefficients<S: Scalar>(g_min: S, g_max: S, gamma_min: S, gamma_max: S) -> (S, S) {
    let omega = -(gamma_max - gamma_min) / (g_max - g_min);
    let tau = gamma_min - omega * g_max;
    (omega, tau)
}

fn g<S: Scalar>(variant: DecayVariant, c: S, c_min: S, c_max: S) -> S {
    match variant {
        DecayVariant::Log => c.ln(),
        DecayVariant::Linear => c,
        DecayVariant::Exp => ((c - c_min) / (c_max - c_min)).exp(),
        DecayVariant::InverseLog => -(c_min + c_max - c).ln(),
    }
}

/// Builds the schedule with `γ_min = 1/γ′` and `γ_max = γ′`.
///
/// A space with a single complexity value, or `γ′ = 1`, yields `γ ≡ 1` (linear decay).
pub fn build_schedule<S: Scalar>(
    eta0: S,
    total_steps: usize,
    gamma_prime: S,
    extrema: (ComplexityScore, ComplexityScore),
    variant: DecayVariant,
) -> Result<ScheduleParams<S>> {
    if !(eta0 > S::zero() && eta0.is_finite()) {
        return Err(Error::config(format!(
            "initial LR must be positive, got {eta0}"
        )));
    }
    if total_steps == 0 {
        return Err(Error::config("total steps must be positive"));
    }
    if !(gamma_prime >= S::one() && gamma_prime.is_finite()) {
        return Err(Error::config(format!(
            "gamma' must be >= 1, got {gamma_prime}"
        )));
    }
    let (lo, hi) = extrema;
    if lo > hi {
        return Err(Error::config(format!(
            "complexity extrema ({lo}, {hi}) are inverted"
        )));
    }
    if lo.value() == 0 && matches!(variant, DecayVariant::Log | DecayVariant::InverseLog) {
        return Err(Error::config(
            "log decay needs a strictly positive minimum complexity",
        ));
    }
    let gamma_min = S::one() / gamma_prime;
    let gamma_max = gamma_prime;
    let c_min = S::of(lo.value() as f64);
    let c_max = S::of(hi.value() as f64);

    let (omega, tau) = if lo == hi || gamma_prime == S::one() {
        (S::zero(), S::one())
    } else {
        let g_min = g(variant, c_min, c_min, c_max);
        let g_max = g(variant, c_max, c_min, c_max);
        match variant {
            DecayVariant::InverseLog => affine_coefficients(g_min, g_max, gamma_max, gamma_min),
            _ => affine_coefficients(g_min, g_max, gamma_min, gamma_max),
        }
    };
    Ok(ScheduleParams {
        eta0,
        total_steps,
        gamma_min,
        gamma_max,
        omega,
        tau,
        variant,
        c_min,
        c_max,
    })
}

impl<S: Scalar> ScheduleParams<S> {
    pub fn decay_ratio(&self, c: ComplexityScore) -> Result<DecayRatio<S>> {
        let cv = S::of(c.value() as f64);
        if cv < self.c_min || cv > self.c_max {
            return Err(Error::Range(format!(
                "complexity {c} outside [{}, {}]",
                self.c_min, self.c_max
            )));
        }
        let raw = self.omega * g(self.variant, cv, self.c_min, self.c_max) + self.tau;
        let slack = S::of(CLAMP_SLACK);
        debug_assert!(
            raw >= self.gamma_min - slack && raw <= self.gamma_max + slack,
            "decay ratio {raw} escaped [{}, {}]",
            self.gamma_min,
            self.gamma_max
        );
        Ok(DecayRatio(raw.max(self.gamma_min).min(self.gamma_max)))
    }

    /// `η⁰·(1 − t/T)^γ`.
    pub fn lr_at(&self, decay: DecayRatio<S>, t: usize) -> Result<S> {
        if t > self.total_steps {
            return Err(Error::Range(format!(
                "step {t} beyond total steps {}",
                self.total_steps
            )));
        }
        let remaining = S::of((self.total_steps - t) as f64) / S::of(self.total_steps as f64);
        Ok(self.eta0 * remaining.powf(decay.value()))
    }

    pub fn lr_for(&self, c: ComplexityScore, t: usize) -> Result<S> {
        self.lr_at(self.decay_ratio(c)?, t)
    }
}
