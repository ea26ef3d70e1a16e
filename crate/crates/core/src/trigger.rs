//! Triggering thresholds and the broadcast decision.
//!
//! An agent re-broadcasts its primal iterate at round `k ≥ 1` only when the
//! iterate has drifted from the last broadcast copy by strictly more than
//! `E_{i,k}`. Round 0 is an unconditional broadcast, so thresholds are never
//! queried there.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::linalg::distance;

/// One threshold family.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ThresholdRule {
    /// `E0 / k^p`, `p > 1`.
    Polynomial { e0: f64, p: f64 },
    /// `E0 · ρ^k`, `0 < ρ < 1`.
    Exponential { e0: f64, rho: f64 },
    /// Always broadcast whenever the iterate moved.
    Zero,
    /// Periodic comparison scheme: broadcast when `k mod N == 0`, regardless of drift.
    EveryN(usize),
}

/// What the engine should consult at a given round.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Threshold {
    Bound(f64),
    /// `EveryN` schedules bypass the drift test.
    Periodic { period: usize },
}

impl Threshold {
    pub fn bound(self) -> Option<f64> {
        match self {
            Threshold::Bound(e) => Some(e),
            Threshold::Periodic { .. } => None,
        }
    }
}

impl ThresholdRule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ThresholdRule::Polynomial { e0, p } => {
                if !(e0 >= 0.0) {
                    return Err(Error::Config(format!("polynomial E0={e0} must be >= 0")));
                }
                if !(p > 1.0) || !p.is_finite() {
                    return Err(Error::Config(format!("polynomial exponent p={p} must exceed 1")));
                }
            }
            ThresholdRule::Exponential { e0, rho } => {
                if !(e0 >= 0.0) {
                    return Err(Error::Config(format!("exponential E0={e0} must be >= 0")));
                }
                if !(rho > 0.0 && rho < 1.0) {
                    return Err(Error::Config(format!("exponential rate rho={rho} outside (0, 1)")));
                }
            }
            ThresholdRule::Zero => {}
            ThresholdRule::EveryN(n) => {
                if n == 0 {
                    return Err(Error::Config("everyN period must be positive".into()));
                }
            }
        }
        Ok(())
    }

    /// True for the event rules whose thresholds are non-increasing and summable.
    pub fn is_summable(&self) -> bool {
        !matches!(self, ThresholdRule::EveryN(_))
    }

    pub fn threshold(&self, k: usize) -> Result<Threshold> {
        if k == 0 {
            return Err(Error::Contract(
                "threshold queried at round 0, which always broadcasts".into(),
            ));
        }
        Ok(match *self {
            ThresholdRule::Polynomial { e0, p } => Threshold::Bound(e0 / (k as f64).powf(p)),
            ThresholdRule::Exponential { e0, rho } => Threshold::Bound(e0 * rho.powf(k as f64)),
            ThresholdRule::Zero => Threshold::Bound(0.0),
            ThresholdRule::EveryN(period) => Threshold::Periodic { period },
        })
    }
}

impl fmt::Display for ThresholdRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ThresholdRule::Polynomial { e0, p } => write!(f, "poly:{e0}:{p}"),
            ThresholdRule::Exponential { e0, rho } => write!(f, "exp:{e0}:{rho}"),
            ThresholdRule::Zero => write!(f, "zero"),
            ThresholdRule::EveryN(n) => write!(f, "everyN:{n}"),
        }
    }
}

fn parse_real(tok: &str, field: usize, spec: &str) -> Result<f64> {
    let bad = || {
        Error::parse(
            format!("schedule '{spec}', field {field}"),
            format!("invalid number '{tok}'"),
        )
    };
    // `a^b` lets configs write rates such as 0.9^0.1 directly
    if let Some((base, exp)) = tok.split_once('^') {
        let base: f64 = base.trim().parse().map_err(|_| bad())?;
        let exp: f64 = exp.trim().parse().map_err(|_| bad())?;
        return Ok(base.powf(exp));
    }
    tok.trim().parse().map_err(|_| bad())
}

impl FromStr for ThresholdRule {
    type Err = Error;

    /// `poly:E0:p`, `exp:E0:rho` (rho may be written `a^b`), `zero`, `everyN:N`;
    /// keywords are case-insensitive.
    fn from_str(spec: &str) -> Result<Self> {
        let fields: Vec<&str> = spec.trim().split(':').collect();
        let head = fields[0].trim().to_ascii_lowercase();
        let arity = |want: usize| -> Result<()> {
            if fields.len() != want {
                return Err(Error::parse(
                    format!("schedule '{spec}', field {}", fields.len().min(want) + 1),
                    format!("'{head}' takes {} parameter(s), got {}", want - 1, fields.len() - 1),
                ));
            }
            Ok(())
        };
        let rule = match head.as_str() {
            "poly" | "polynomial" => {
                arity(3)?;
                ThresholdRule::Polynomial {
                    e0: parse_real(fields[1], 2, spec)?,
                    p: parse_real(fields[2], 3, spec)?,
                }
            }
            "exp" | "exponential" => {
                arity(3)?;
                ThresholdRule::Exponential {
                    e0: parse_real(fields[1], 2, spec)?,
                    rho: parse_real(fields[2], 3, spec)?,
                }
            }
            "zero" => {
                arity(1)?;
                ThresholdRule::Zero
            }
            "everyn" => {
                arity(2)?;
                let n = fields[1].trim().parse().map_err(|_| {
                    Error::parse(
                        format!("schedule '{spec}', field 2"),
                        format!("invalid period '{}'", fields[1]),
                    )
                })?;
                ThresholdRule::EveryN(n)
            }
            _ => {
                return Err(Error::parse(
                    format!("schedule '{spec}', field 1"),
                    format!("unknown schedule kind '{}'", fields[0]),
                ))
            }
        };
        rule.validate()
            .map_err(|e| Error::parse(format!("schedule '{spec}'"), e.to_string()))?;
        Ok(rule)
    }
}

/// Threshold rule shared by all agents, with optional per-agent overrides.
#[derive(Clone, Debug, PartialEq)]
pub struct TriggerSchedule {
    pub default: ThresholdRule,
    pub overrides: BTreeMap<usize, ThresholdRule>,
}

impl TriggerSchedule {
    pub fn uniform(rule: ThresholdRule) -> Self {
        TriggerSchedule {
            default: rule,
            overrides: BTreeMap::new(),
        }
    }

    pub fn with_override(mut self, agent: usize, rule: ThresholdRule) -> Self {
        self.overrides.insert(agent, rule);
        self
    }

    /// Thresholds of `+∞` from round 1 on: nothing is broadcast after the initial round.
    pub fn frozen() -> Self {
        Self::uniform(ThresholdRule::Polynomial {
            e0: f64::INFINITY,
            p: 2.0,
        })
    }

    pub fn rule(&self, agent: usize) -> &ThresholdRule {
        self.overrides.get(&agent).unwrap_or(&self.default)
    }

    pub fn validate(&self) -> Result<()> {
        self.default.validate()?;
        self.overrides.values().try_for_each(ThresholdRule::validate)
    }

    /// `E_{i,k}` (or the periodic marker) for agent `i` at round `k ≥ 1`.
    pub fn threshold(&self, agent: usize, k: usize) -> Result<Threshold> {
        self.rule(agent).threshold(k)
    }

    /// `E_k = max_i E_{i,k}` over `n` agents; `None` if any agent is periodic.
    pub fn max_threshold(&self, n: usize, k: usize) -> Result<Option<f64>> {
        let mut best = 0.0f64;
        for i in 0..n {
            match self.threshold(i, k)? {
                Threshold::Bound(e) => best = best.max(e),
                Threshold::Periodic { .. } => return Ok(None),
            }
        }
        Ok(Some(best))
    }

    pub fn is_summable(&self) -> bool {
        self.default.is_summable() && self.overrides.values().all(ThresholdRule::is_summable)
    }
}

impl FromStr for TriggerSchedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(Self::uniform(s.parse()?))
    }
}

impl fmt::Display for TriggerSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.default)?;
        for (agent, rule) in &self.overrides {
            write!(f, " [agent {agent}: {rule}]")?;
        }
        Ok(())
    }
}

/// `‖x_new − x̃_prev‖ > E`, strictly.
pub fn should_broadcast(x_new: &[f64], x_tilde_prev: &[f64], e: f64) -> bool {
    distance(x_new, x_tilde_prev) > e
}
