//! Flat `key = value` experiment configuration.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::engine::{StepsizePolicy, Variant};
use crate::error::{Error, Result};
use crate::trigger::TriggerSchedule;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Problem {
    Lasso,
    Logistic,
    Quadratic,
}

impl FromStr for Problem {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "lasso" => Ok(Problem::Lasso),
            "logistic" => Ok(Problem::Logistic),
            "quadratic" => Ok(Problem::Quadratic),
            other => Err(Error::Config(format!(
                "unknown problem '{other}' (expected lasso, logistic or quadratic)"
            ))),
        }
    }
}

impl fmt::Display for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Problem::Lasso => "lasso",
            Problem::Logistic => "logistic",
            Problem::Quadratic => "quadratic",
        })
    }
}

/// `β` as a number or derived from the graph as `1/(λ̄(L) + 1)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BetaSpec {
    Value(f64),
    Auto,
}

/// Diagonal of `H`: one scalar, one value per agent, or derived per agent as
/// `1 + l_i` (`1 + l_i²/k₁` for strongly convex problems).
#[derive(Clone, Debug, PartialEq)]
pub enum EtaSpec {
    Scalar(f64),
    PerAgent(Vec<f64>),
    Auto,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub problem: Problem,
    pub n: usize,
    pub m: usize,
    /// Rows per agent: `p_i` for lasso, `m_i` for logistic.
    pub samples: usize,
    pub tau: f64,
    pub ridge: f64,
    pub graph_r: f64,
    /// Graph seed; `None` reuses the run seed.
    pub graph_seed: Option<u64>,
    pub beta: BetaSpec,
    pub eta: EtaSpec,
    pub variant: Option<Variant>,
    pub schedules: Vec<TriggerSchedule>,
    pub rounds: usize,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
    pub reference_tol: f64,
    pub stepsize_policy: StepsizePolicy,
    pub certificate: bool,
    pub rho: Option<f64>,
    pub compare: bool,
}

/// Keys accepted in config files. CLI flags map onto a subset of them.
pub const KEYS: &[&str] = &[
    "problem",
    "n",
    "m",
    "samples",
    "tau",
    "ridge",
    "graph_r",
    "graph_seed",
    "beta",
    "eta",
    "variant",
    "schedule",
    "rounds",
    "seeds",
    "out",
    "reference_tol",
    "stepsize_check",
    "certificate",
    "rho",
    "compare",
];

/// One `key = value` assignment and where it came from (`line 3`, `--beta`).
#[derive(Clone, Debug, PartialEq)]
pub struct Assignment {
    pub key: String,
    pub value: String,
    pub location: String,
}

/// Splits config text into assignments. `#` starts a comment; blank lines are skipped.
pub fn parse_assignments(text: &str) -> Result<Vec<Assignment>> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let location = format!("line {}", idx + 1);
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(&location, format!("expected 'key = value', got '{line}'")))?;
        let key = key.trim().to_ascii_lowercase();
        if !KEYS.contains(&key.as_str()) {
            return Err(Error::parse(&location, format!("unknown key '{key}'")));
        }
        out.push(Assignment {
            key,
            value: value.trim().to_string(),
            location,
        });
    }
    Ok(out)
}

impl ExperimentConfig {
    /// Defaults for `problem`; lasso reproduces the composite example setup.
    pub fn defaults(problem: Problem) -> Self {
        let base = ExperimentConfig {
            problem,
            n: 100,
            m: 50,
            samples: 3,
            tau: 0.1,
            ridge: 0.0,
            graph_r: 0.4,
            graph_seed: None,
            beta: BetaSpec::Value(0.0025),
            eta: EtaSpec::Scalar(0.6),
            variant: None,
            schedules: vec!["poly:20:1.2".parse().expect("valid default schedule")],
            rounds: 2000,
            seeds: vec![1],
            out: PathBuf::from("out"),
            reference_tol: 1e-10,
            stepsize_policy: StepsizePolicy::WarnOnly,
            certificate: false,
            rho: None,
            compare: false,
        };
        match problem {
            Problem::Lasso => base,
            Problem::Logistic => ExperimentConfig {
                n: 100,
                m: 10,
                samples: 8,
                graph_r: 0.04,
                beta: BetaSpec::Value(1.0),
                eta: EtaSpec::Scalar(55.0),
                schedules: vec!["exp:1:0.9^0.1".parse().expect("valid default schedule")],
                rounds: 5000,
                ..base
            },
            Problem::Quadratic => ExperimentConfig {
                n: 20,
                m: 5,
                graph_r: 0.4,
                beta: BetaSpec::Auto,
                eta: EtaSpec::Auto,
                schedules: vec!["exp:1:0.9".parse().expect("valid default schedule")],
                rounds: 2000,
                ..base
            },
        }
    }

    /// Applies assignments in order on top of the defaults of the chosen
    /// problem (the last `problem` assignment picks the defaults).
    pub fn from_assignments(assignments: &[Assignment]) -> Result<Self> {
        let mut problem = Problem::Lasso;
        for a in assignments.iter().filter(|a| a.key == "problem") {
            problem = a.value.parse().map_err(|e: Error| relocate(e, &a.location))?;
        }
        let mut cfg = Self::defaults(problem);
        for a in assignments {
            cfg.apply(a).map_err(|e| relocate(e, &a.location))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, a: &Assignment) -> Result<()> {
        let v = a.value.as_str();
        match a.key.as_str() {
            "problem" => {}
            "n" => self.n = positive_count(v, "n")?,
            "m" => self.m = positive_count(v, "m")?,
            "samples" => self.samples = positive_count(v, "samples")?,
            "tau" => self.tau = non_negative(v, "tau")?,
            "ridge" => self.ridge = non_negative(v, "ridge")?,
            "graph_r" => {
                let r = number(v, "graph_r")?;
                if !(r > 0.0 && r <= 1.0) {
                    return Err(Error::Config(format!("graph_r must be in (0, 1], got {r}")));
                }
                self.graph_r = r;
            }
            "graph_seed" => self.graph_seed = Some(integer(v, "graph_seed")?),
            "beta" => {
                self.beta = if v.eq_ignore_ascii_case("auto") {
                    BetaSpec::Auto
                } else {
                    BetaSpec::Value(positive(v, "beta")?)
                }
            }
            "eta" => {
                self.eta = if v.eq_ignore_ascii_case("auto") {
                    EtaSpec::Auto
                } else if v.contains(',') {
                    EtaSpec::PerAgent(
                        v.split(',')
                            .map(|t| positive(t, "eta"))
                            .collect::<Result<_>>()?,
                    )
                } else {
                    EtaSpec::Scalar(positive(v, "eta")?)
                }
            }
            "variant" => {
                self.variant = if v.eq_ignore_ascii_case("auto") {
                    None
                } else {
                    Some(v.parse()?)
                }
            }
            "schedule" => {
                self.schedules = v
                    .split(',')
                    .map(|s| s.trim().parse::<TriggerSchedule>())
                    .collect::<Result<_>>()?
            }
            "rounds" => self.rounds = positive_count(v, "rounds")?,
            "seeds" => {
                self.seeds = v
                    .split(',')
                    .map(|s| integer(s, "seeds"))
                    .collect::<Result<_>>()?
            }
            "out" => self.out = PathBuf::from(v),
            "reference_tol" => self.reference_tol = positive(v, "reference_tol")?,
            "stepsize_check" => {
                self.stepsize_policy = match v.to_ascii_lowercase().as_str() {
                    "enforce" => StepsizePolicy::Enforce,
                    "warn" => StepsizePolicy::WarnOnly,
                    other => {
                        return Err(Error::Config(format!(
                            "stepsize_check must be enforce or warn, got '{other}'"
                        )))
                    }
                }
            }
            "certificate" => self.certificate = boolean(v, "certificate")?,
            "rho" => self.rho = Some(positive(v, "rho")?),
            "compare" => self.compare = boolean(v, "compare")?,
            other => return Err(Error::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        if self.schedules.is_empty() {
            return Err(Error::Config("at least one schedule is required".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if let EtaSpec::PerAgent(v) = &self.eta {
            if v.len() != self.n {
                return Err(Error::Config(format!(
                    "eta lists {} values for {} agents",
                    v.len(),
                    self.n
                )));
            }
        }
        if self.problem == Problem::Lasso && self.tau == 0.0 {
            log::warn!("tau = 0 turns the lasso into plain least squares");
        }
        Ok(())
    }
}

fn relocate(e: Error, location: &str) -> Error {
    match e {
        Error::Config(msg) => Error::parse(location, msg),
        Error::Parse { message, .. } => Error::parse(location, message),
        other => other,
    }
}

fn number(v: &str, key: &str) -> Result<f64> {
    v.trim()
        .parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| Error::Config(format!("{key}: '{v}' is not a finite number")))
}

fn positive(v: &str, key: &str) -> Result<f64> {
    let x = number(v, key)?;
    if x <= 0.0 {
        return Err(Error::Config(format!("{key} must be positive, got {x}")));
    }
    Ok(x)
}

fn non_negative(v: &str, key: &str) -> Result<f64> {
    let x = number(v, key)?;
    if x < 0.0 {
        return Err(Error::Config(format!("{key} must be non-negative, got {x}")));
    }
    Ok(x)
}

fn integer(v: &str, key: &str) -> Result<u64> {
    v.trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: '{v}' is not a non-negative integer")))
}

fn positive_count(v: &str, key: &str) -> Result<usize> {
    let x = integer(v, key)?;
    if x == 0 {
        return Err(Error::Config(format!("{key} must be positive")));
    }
    usize::try_from(x).map_err(|_| Error::Config(format!("{key} is too large")))
}

fn boolean(v: &str, key: &str) -> Result<bool> {
    match v.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::Config(format!("{key}: '{v}' is not a boolean"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trigger::ThresholdRule;

    fn parse(text: &str) -> Result<ExperimentConfig> {
        ExperimentConfig::from_assignments(&parse_assignments(text)?)
    }

    #[test]
    fn empty_file_gives_composite_defaults() {
        let c = parse("").unwrap();
        assert_eq!(c.problem, Problem::Lasso);
        assert_eq!((c.n, c.samples, c.m), (100, 3, 50));
        assert_eq!(c.graph_r, 0.4);
        assert_eq!(c.eta, EtaSpec::Scalar(0.6));
        assert_eq!(c.beta, BetaSpec::Value(0.0025));
        assert_eq!(c.schedules[0].to_string(), "poly:20:1.2");
        assert_eq!(c.rounds, 2000);
    }

    #[test]
    fn logistic_preset() {
        let c = parse("problem = logistic").unwrap();
        assert_eq!((c.n, c.samples, c.m), (100, 8, 10));
        assert_eq!(c.eta, EtaSpec::Scalar(55.0));
        assert_eq!(c.beta, BetaSpec::Value(1.0));
        assert_eq!(c.rounds, 5000);
        // problem may appear after other keys without clobbering them
        let c = parse("rounds = 7\nproblem = logistic").unwrap();
        assert_eq!(c.rounds, 7);
    }

    #[test]
    fn every_n_schedule() {
        let c = parse("schedule = everyN:4").unwrap();
        assert_eq!(*c.schedules[0].rule(0), ThresholdRule::EveryN(4));
    }

    #[test]
    fn lists_and_comments() {
        let c = parse("# sweep\nschedule = zero, exp:1:0.9\nseeds = 1,2,3 # three\neta = 1,2\nn = 2").unwrap();
        assert_eq!(c.schedules.len(), 2);
        assert_eq!(c.seeds, vec![1, 2, 3]);
        assert_eq!(c.eta, EtaSpec::PerAgent(vec![1.0, 2.0]));
    }

    #[test]
    fn rejections_carry_locations() {
        let e = parse("rounds = 5\nbeta = -1").unwrap_err();
        assert!(matches!(&e, Error::Parse { location, .. } if location == "line 2"), "{e}");
        let e = parse("\n\nfoo = 1").unwrap_err();
        assert!(e.to_string().contains("line 3") && e.to_string().contains("foo"), "{e}");
        assert!(parse("beta").is_err());
        assert!(parse("eta = 1,2").is_err());
        assert!(parse("graph_r = 1.5").is_err());
        assert!(parse("schedule = poly:1:0.5").is_err());
    }
}
