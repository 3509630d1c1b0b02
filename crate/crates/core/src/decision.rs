//! Household return decisions: a compensatory binary logit model and four
//! non-compensatory threshold variants.

use std::collections::BTreeMap;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, AgentRng, Purpose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Urban,
    Rural,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Covariate {
    #[serde(rename = "q_house")]
    House,
    #[serde(rename = "q_income")]
    Income,
    #[serde(rename = "q_h")]
    Home,
    #[serde(rename = "q_s")]
    Social,
    #[serde(rename = "q_p")]
    Physical,
}

impl Regime {
    /// The covariates a regime's utility is defined over.
    pub fn covariates(self) -> [Covariate; 4] {
        match self {
            Regime::Urban => [Covariate::House, Covariate::Home, Covariate::Social, Covariate::Physical],
            Regime::Rural => [Covariate::Income, Covariate::Home, Covariate::Social, Covariate::Physical],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogitCoefficients {
    pub regime: Regime,
    pub intercept: f64,
    pub coefficients: BTreeMap<Covariate, f64>,
}

impl LogitCoefficients {
    pub fn new(regime: Regime, intercept: f64, coefficients: BTreeMap<Covariate, f64>) -> Result<Self> {
        let c = LogitCoefficients { regime, intercept, coefficients };
        c.validate("coefficients")?;
        Ok(c)
    }

    pub fn validate(&self, path: &str) -> Result<()> {
        let expected: Vec<Covariate> = self.regime.covariates().to_vec();
        let found: Vec<Covariate> = self.coefficients.keys().copied().collect();
        let mut sorted = expected.clone();
        sorted.sort();
        if found != sorted {
            return Err(Error::config(
                format!("{path}.coefficients"),
                format!("{:?} regime requires exactly {:?}, found {:?}", self.regime, expected, found),
            ));
        }
        if !self.intercept.is_finite() || self.coefficients.values().any(|v| !v.is_finite()) {
            return Err(Error::config(path, "coefficients must be finite"));
        }
        Ok(())
    }

    /// Survey-estimated urban-county model.
    pub fn urban() -> Self {
        LogitCoefficients {
            regime: Regime::Urban,
            intercept: -1.904,
            coefficients: BTreeMap::from([
                (Covariate::House, 1.520),
                (Covariate::Home, 1.638),
                (Covariate::Social, -1.756),
                (Covariate::Physical, 1.171),
            ]),
        }
    }

    /// Survey-estimated rural-county model.
    pub fn rural() -> Self {
        LogitCoefficients {
            regime: Regime::Rural,
            intercept: -2.379,
            coefficients: BTreeMap::from([
                (Covariate::Income, 2.26e-5),
                (Covariate::Home, 3.298),
                (Covariate::Social, -4.845),
                (Covariate::Physical, 1.675),
            ]),
        }
    }

    pub fn for_regime(regime: Regime) -> Self {
        match regime {
            Regime::Urban => Self::urban(),
            Regime::Rural => Self::rural(),
        }
    }
}

/// Inputs seen by one household on one day.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Covariates {
    /// Housing condition in `[0, 1]`.
    pub q_house: Option<f64>,
    /// Household income in dollars.
    pub q_income: Option<f64>,
    /// Returned fraction of neighbouring homes.
    pub q_h: f64,
    /// Recovery of nearby POIs.
    pub q_s: f64,
    /// Recovery of the physical system.
    pub q_p: f64,
}

impl Covariates {
    pub fn get(&self, c: Covariate) -> Option<f64> {
        match c {
            Covariate::House => self.q_house,
            Covariate::Income => self.q_income,
            Covariate::Home => Some(self.q_h),
            Covariate::Social => Some(self.q_s),
            Covariate::Physical => Some(self.q_p),
        }
    }
}

pub fn blm_utility(coeffs: &LogitCoefficients, cov: &Covariates) -> Result<f64> {
    coeffs.coefficients.iter().try_fold(coeffs.intercept, |acc, (&c, &beta)| {
        let value = cov
            .get(c)
            .ok_or_else(|| Error::config(format!("covariates.{}", covariate_name(c)), "missing covariate"))?;
        Ok(acc + beta * value)
    })
}

fn covariate_name(c: Covariate) -> &'static str {
    match c {
        Covariate::House => "q_house",
        Covariate::Income => "q_income",
        Covariate::Home => "q_h",
        Covariate::Social => "q_s",
        Covariate::Physical => "q_p",
    }
}

/// Logistic link.
pub fn blm_probability(utility: f64) -> f64 {
    if utility >= 0.0 {
        1.0 / (1.0 + (-utility).exp())
    } else {
        let e = utility.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Decision {
    Stay = 0,
    Return = 1,
}

impl Decision {
    pub fn from_bool(ret: bool) -> Self {
        if ret {
            Decision::Return
        } else {
            Decision::Stay
        }
    }
}

/// How a logit probability becomes an action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlmRule {
    /// One Bernoulli draw per evaluation.
    #[default]
    Bernoulli,
    /// Return iff the probability is at least one half. Consumes no randomness.
    Cutoff,
}

/// Bernoulli draw. Always consumes exactly one uniform from `rng`.
pub fn blm_decide(p: f64, rng: &mut AgentRng) -> Decision {
    Decision::from_bool(rng.uniform() < p)
}

/// Binary perception of a recovery level: 1 iff strictly above the threshold.
#[inline]
pub fn perceive(q: f64, delta: f64) -> u8 {
    u8::from(q > delta)
}

/// All three perceived layers must be recovered.
#[inline]
pub fn threshold_decide(h: u8, s: u8, p: u8) -> Decision {
    Decision::from_bool(h == 1 && s == 1 && p == 1)
}

/// Per-layer thresholds of one household.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub h: f64,
    pub s: f64,
    pub p: f64,
}

impl Thresholds {
    pub fn uniform(delta: f64) -> Self {
        Thresholds { h: delta, s: delta, p: delta }
    }

    pub fn decide(&self, cov: &Covariates) -> Decision {
        threshold_decide(perceive(cov.q_h, self.h), perceive(cov.q_s, self.s), perceive(cov.q_p, self.p))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleKnot {
    pub t: f64,
    pub delta_h: f64,
    pub delta_s: f64,
    pub delta_p: f64,
}

/// Piecewise-constant, right-continuous thresholds over time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ThresholdSchedule {
    knots: Vec<ScheduleKnot>,
}

impl ThresholdSchedule {
    pub fn new(knots: Vec<ScheduleKnot>) -> Result<Self> {
        let s = ThresholdSchedule { knots };
        s.validate("schedule")?;
        Ok(s)
    }

    pub fn knots(&self) -> &[ScheduleKnot] {
        &self.knots
    }

    pub fn validate(&self, path: &str) -> Result<()> {
        let first = self.knots.first().ok_or_else(|| Error::config(path, "schedule is empty"))?;
        if first.t != 0.0 {
            return Err(Error::config(format!("{path}[0].t"), "first knot must be at t = 0"));
        }
        for (i, w) in self.knots.windows(2).enumerate() {
            if !(w[1].t > w[0].t) {
                return Err(Error::config(format!("{path}[{}].t", i + 1), "knot times must be strictly increasing"));
            }
        }
        for (i, k) in self.knots.iter().enumerate() {
            for (name, v) in [("delta_h", k.delta_h), ("delta_s", k.delta_s), ("delta_p", k.delta_p)] {
                check_unit(&format!("{path}[{i}].{name}"), v)?;
            }
        }
        Ok(())
    }

    /// Thresholds of the latest knot at or before `t`.
    pub fn at(&self, t: f64) -> Result<Thresholds> {
        if self.knots.is_empty() {
            return Err(Error::config("schedule", "schedule is empty"));
        }
        if t < 0.0 {
            return Err(Error::Domain(format!("negative time {t}")));
        }
        let k = self.knots.partition_point(|k| k.t <= t);
        let knot = self.knots[k.max(1) - 1];
        Ok(Thresholds { h: knot.delta_h, s: knot.delta_s, p: knot.delta_p })
    }

    /// Survey thresholds at day 0, 3 days, 1 week and 1 month.
    pub fn survey() -> Self {
        let knot = |t, delta_p, delta_s, delta_h| ScheduleKnot { t, delta_h, delta_s, delta_p };
        ThresholdSchedule {
            knots: vec![
                knot(0.0, 0.57, 0.68, 0.70),
                knot(3.0, 0.78, 0.98, 0.91),
                knot(7.0, 0.97, 0.97, 0.94),
                knot(30.0, 0.89, 0.89, 0.81),
            ],
        }
    }
}

impl Default for ThresholdSchedule {
    fn default() -> Self {
        Self::survey()
    }
}

fn check_unit(path: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::config(path, format!("must lie in [0, 1], got {v}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ThresholdConfig {
    UniformHomogeneous { delta: f64 },
    UniformHeterogeneous { delta_h: f64, delta_s: f64, delta_p: f64 },
    IndividuallyHeterogeneous { mu_h: f64, mu_s: f64, mu_p: f64, sigma: f64 },
    TimeVarying(ThresholdSchedule),
}

/// Draws one household's Gaussian thresholds, clamped to `[0, 1]`.
pub fn draw_individual(mu: Thresholds, sigma: f64, seed: u64, agent: usize) -> Thresholds {
    let mut rng = rng::stream(seed, Purpose::Thresholds, agent as u64);
    let mut draw = |m: f64| {
        let normal = Normal::new(m, sigma).expect("sigma validated positive");
        normal.sample(&mut rng).clamp(0.0, 1.0)
    };
    let h = draw(mu.h);
    let s = draw(mu.s);
    let p = draw(mu.p);
    Thresholds { h, s, p }
}

/// Thresholds used by `agent` at time `t`. Individual draws depend only on
/// `(seed, agent)`, so repeated calls return the same triple.
pub fn resolve_thresholds(config: &ThresholdConfig, agent: usize, t: f64, seed: u64) -> Result<Thresholds> {
    if t < 0.0 {
        return Err(Error::Domain(format!("negative time {t}")));
    }
    Ok(match config {
        ThresholdConfig::UniformHomogeneous { delta } => Thresholds::uniform(*delta),
        ThresholdConfig::UniformHeterogeneous { delta_h, delta_s, delta_p } => {
            Thresholds { h: *delta_h, s: *delta_s, p: *delta_p }
        }
        ThresholdConfig::IndividuallyHeterogeneous { mu_h, mu_s, mu_p, sigma } => {
            draw_individual(Thresholds { h: *mu_h, s: *mu_s, p: *mu_p }, *sigma, seed, agent)
        }
        ThresholdConfig::TimeVarying(schedule) => schedule.at(t)?,
    })
}

fn d_homog() -> f64 {
    0.6
}
fn d_h() -> f64 {
    0.85
}
fn d_sp() -> f64 {
    0.93
}
fn d_sigma() -> f64 {
    0.2
}

/// The decision-model block of a run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum DecisionModel {
    Logit {
        /// Defaults to the scenario's regime.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        regime: Option<Regime>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        coefficients: Option<LogitCoefficients>,
        #[serde(default)]
        rule: BlmRule,
    },
    ThresholdHomog {
        #[serde(default = "d_homog")]
        delta: f64,
    },
    ThresholdHetero {
        #[serde(default = "d_h")]
        delta_h: f64,
        #[serde(default = "d_sp")]
        delta_s: f64,
        #[serde(default = "d_sp")]
        delta_p: f64,
    },
    ThresholdIndividual {
        #[serde(default = "d_h")]
        mu_h: f64,
        #[serde(default = "d_sp")]
        mu_s: f64,
        #[serde(default = "d_sp")]
        mu_p: f64,
        #[serde(default = "d_sigma")]
        sigma: f64,
    },
    ThresholdTimevarying {
        #[serde(default)]
        schedule: ThresholdSchedule,
    },
}

impl DecisionModel {
    pub fn logit() -> Self {
        DecisionModel::Logit { regime: None, coefficients: None, rule: BlmRule::Bernoulli }
    }
    pub fn homogeneous(delta: f64) -> Self {
        DecisionModel::ThresholdHomog { delta }
    }
    pub fn heterogeneous() -> Self {
        DecisionModel::ThresholdHetero { delta_h: d_h(), delta_s: d_sp(), delta_p: d_sp() }
    }
    pub fn individual() -> Self {
        DecisionModel::ThresholdIndividual { mu_h: d_h(), mu_s: d_sp(), mu_p: d_sp(), sigma: d_sigma() }
    }
    pub fn time_varying() -> Self {
        DecisionModel::ThresholdTimevarying { schedule: ThresholdSchedule::survey() }
    }

    /// The eight model settings compared in the toy experiments, with their result keys.
    pub fn standard_set() -> Vec<(String, DecisionModel)> {
        let mut v = vec![("logit".to_string(), Self::logit())];
        for d in [0.6, 0.7, 0.8, 0.9] {
            v.push((format!("threshold_{d:.1}"), Self::homogeneous(d)));
        }
        v.push(("hetero".to_string(), Self::heterogeneous()));
        v.push(("different".to_string(), Self::individual()));
        v.push(("timevarying".to_string(), Self::time_varying()));
        v
    }

    /// Looks a model up by its standard key (`logit`, `threshold_0.7`, `hetero`, ...).
    pub fn preset(name: &str) -> Option<Self> {
        if let Some(d) = name.strip_prefix("threshold_") {
            if let Ok(delta) = d.parse::<f64>() {
                return Some(Self::homogeneous(delta));
            }
        }
        Self::standard_set().into_iter().find(|(k, _)| k == name).map(|(_, m)| m)
    }

    pub fn validate(&self, path: &str) -> Result<()> {
        match self {
            DecisionModel::Logit { regime, coefficients, .. } => {
                if let Some(c) = coefficients {
                    c.validate(&format!("{path}.coefficients"))?;
                    if let Some(r) = regime {
                        if *r != c.regime {
                            return Err(Error::config(format!("{path}.regime"), "does not match coefficients.regime"));
                        }
                    }
                }
            }
            DecisionModel::ThresholdHomog { delta } => check_unit(&format!("{path}.delta"), *delta)?,
            DecisionModel::ThresholdHetero { delta_h, delta_s, delta_p } => {
                check_unit(&format!("{path}.delta_h"), *delta_h)?;
                check_unit(&format!("{path}.delta_s"), *delta_s)?;
                check_unit(&format!("{path}.delta_p"), *delta_p)?;
            }
            DecisionModel::ThresholdIndividual { mu_h, mu_s, mu_p, sigma } => {
                check_unit(&format!("{path}.mu_h"), *mu_h)?;
                check_unit(&format!("{path}.mu_s"), *mu_s)?;
                check_unit(&format!("{path}.mu_p"), *mu_p)?;
                if !(*sigma > 0.0 && sigma.is_finite()) {
                    return Err(Error::config(format!("{path}.sigma"), format!("must be positive, got {sigma}")));
                }
            }
            DecisionModel::ThresholdTimevarying { schedule } => schedule.validate(&format!("{path}.schedule"))?,
        }
        Ok(())
    }

    pub fn threshold_config(&self) -> Option<ThresholdConfig> {
        Some(match self {
            DecisionModel::Logit { .. } => return None,
            DecisionModel::ThresholdHomog { delta } => ThresholdConfig::UniformHomogeneous { delta: *delta },
            DecisionModel::ThresholdHetero { delta_h, delta_s, delta_p } => {
                ThresholdConfig::UniformHeterogeneous { delta_h: *delta_h, delta_s: *delta_s, delta_p: *delta_p }
            }
            DecisionModel::ThresholdIndividual { mu_h, mu_s, mu_p, sigma } => {
                ThresholdConfig::IndividuallyHeterogeneous { mu_h: *mu_h, mu_s: *mu_s, mu_p: *mu_p, sigma: *sigma }
            }
            DecisionModel::ThresholdTimevarying { schedule } => ThresholdConfig::TimeVarying(schedule.clone()),
        })
    }

    /// Parses and validates a JSON model block, reporting the path of the bad key.
    pub fn from_json(value: serde_json::Value, path: &str) -> Result<Self> {
        let model: DecisionModel = match serde_json::from_value(value.clone()) {
            Ok(m) => m,
            Err(e) => {
                let (key, msg) = locate_model_error(&value).unwrap_or_else(|| (String::new(), e.to_string()));
                let full = if key.is_empty() { path.to_string() } else { format!("{path}.{key}") };
                return Err(Error::config(full, msg));
            }
        };
        model.validate(path)?;
        Ok(model)
    }
}

/// The tagged representation buffers its content, which loses field paths, so
/// a failed parse is re-checked one field at a time.
fn locate_model_error(value: &serde_json::Value) -> Option<(String, String)> {
    fn check<T: serde::de::DeserializeOwned>(key: &str, v: &serde_json::Value) -> Option<(String, String)> {
        serde_path_to_error::deserialize::<_, T>(v).err().map(|e| {
            let inner = e.path().to_string();
            let full = if inner == "." { key.to_string() } else { format!("{key}.{inner}") };
            (full, e.into_inner().to_string())
        })
    }
    let obj = match value.as_object() {
        Some(o) => o,
        None => return Some((String::new(), "expected an object with a \"type\" field".into())),
    };
    let tag = match obj.get("type").map(|t| t.as_str()) {
        None => return Some(("type".into(), "missing model type".into())),
        Some(None) => return Some(("type".into(), "must be a string".into())),
        Some(Some(t)) => t,
    };
    let fields: &[&str] = match tag {
        "logit" => &["regime", "coefficients", "rule"],
        "threshold_homog" => &["delta"],
        "threshold_hetero" => &["delta_h", "delta_s", "delta_p"],
        "threshold_individual" => &["mu_h", "mu_s", "mu_p", "sigma"],
        "threshold_timevarying" => &["schedule"],
        other => {
            return Some((
                "type".into(),
                format!(
                    "unknown model type {other:?}; expected logit, threshold_homog, threshold_hetero, \
                     threshold_individual or threshold_timevarying"
                ),
            ))
        }
    };
    for (k, v) in obj {
        if k == "type" {
            continue;
        }
        if !fields.contains(&k.as_str()) {
            return Some((k.clone(), format!("unknown field for {tag}; expected one of {}", fields.join(", "))));
        }
        let err = match k.as_str() {
            "regime" => check::<Regime>(k, v),
            "coefficients" => check::<LogitCoefficients>(k, v),
            "rule" => check::<BlmRule>(k, v),
            "schedule" => check::<ThresholdSchedule>(k, v),
            _ => check::<f64>(k, v),
        };
        if err.is_some() {
            return err;
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all(v: f64) -> Covariates {
        Covariates { q_house: Some(v), q_income: Some(v), q_h: v, q_s: v, q_p: v }
    }

    #[test]
    fn utility_anchors() {
        let urban = LogitCoefficients::urban();
        assert!((blm_utility(&urban, &all(0.0)).unwrap() + 1.904).abs() < 1e-12);
        assert!((blm_utility(&urban, &all(1.0)).unwrap() - 0.669).abs() < 1e-12);
        let rural = LogitCoefficients::rural();
        let cov = Covariates { q_income: Some(50_000.0), ..Default::default() };
        assert!((blm_utility(&rural, &cov).unwrap() + 1.249).abs() < 1e-12);
    }

    #[test]
    fn missing_covariate_is_config_error() {
        let cov = Covariates { q_house: None, ..all(0.5) };
        match blm_utility(&LogitCoefficients::urban(), &cov) {
            Err(Error::Config { path, .. }) => assert_eq!(path, "covariates.q_house"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn coefficient_set_must_match_regime() {
        let mut c = LogitCoefficients::urban().coefficients;
        c.insert(Covariate::Income, 1.0);
        assert!(LogitCoefficients::new(Regime::Urban, 0.0, c).is_err());
        assert!(LogitCoefficients::new(Regime::Rural, 0.0, LogitCoefficients::rural().coefficients).is_ok());
    }

    #[test]
    fn logistic_values() {
        assert_eq!(blm_probability(0.0), 0.5);
        // 1 / (1 + e^1.904) and 1 / (1 + e^-0.669), evaluated independently.
        assert!((blm_probability(-1.904) - 0.129_656_4).abs() < 1e-6);
        assert!((blm_probability(0.669) - 0.661_279_2).abs() < 1e-6);
        assert!(blm_probability(-800.0) >= 0.0 && blm_probability(800.0) <= 1.0);
    }

    #[test]
    fn bernoulli_draws() {
        let mut rng = AgentRng::new(9, 0);
        assert!((0..1000).all(|_| blm_decide(0.0, &mut rng) == Decision::Stay));
        assert!((0..1000).all(|_| blm_decide(1.0, &mut rng) == Decision::Return));
        let n = 100_000;
        let returns = (0..n).filter(|_| blm_decide(0.5, &mut rng) == Decision::Return).count();
        let freq = returns as f64 / n as f64;
        assert!((freq - 0.5).abs() < 0.01, "{freq}");
    }

    #[test]
    fn perception_is_strict() {
        assert_eq!(perceive(0.9, 0.6), 1);
        assert_eq!(perceive(0.85, 0.85), 0);
        assert_eq!(perceive(0.59, 0.6), 0);
        assert_eq!(perceive(1.0, 0.99), 1);
        assert_eq!(perceive(0.0, 0.3), 0);
    }

    #[test]
    fn conjunction() {
        assert_eq!(threshold_decide(1, 1, 1), Decision::Return);
        assert_eq!(threshold_decide(1, 1, 0), Decision::Stay);
        assert_eq!(threshold_decide(0, 0, 0), Decision::Stay);
    }

    #[test]
    fn schedule_lookup() {
        let s = ThresholdSchedule::survey();
        let at3 = s.at(3.0).unwrap();
        assert_eq!((at3.p, at3.s, at3.h), (0.78, 0.98, 0.91));
        assert_eq!(s.at(5.0).unwrap(), at3);
        assert_eq!(s.at(0.0).unwrap().h, 0.70);
        assert_eq!(s.at(2.999).unwrap().h, 0.70);
        assert_eq!(s.at(400.0).unwrap().h, 0.81);
        assert!(ThresholdSchedule::new(vec![]).is_err());
        let k = |t| ScheduleKnot { t, delta_h: 0.5, delta_s: 0.5, delta_p: 0.5 };
        assert!(ThresholdSchedule::new(vec![k(1.0)]).is_err());
        assert!(ThresholdSchedule::new(vec![k(0.0), k(0.0)]).is_err());
    }

    #[test]
    fn resolve_variants() {
        let homog = ThresholdConfig::UniformHomogeneous { delta: 0.7 };
        assert_eq!(resolve_thresholds(&homog, 3, 10.0, 1).unwrap(), Thresholds::uniform(0.7));
        let DecisionModel::ThresholdHetero { delta_h, delta_s, delta_p } = DecisionModel::heterogeneous() else {
            unreachable!()
        };
        assert_eq!((delta_h, delta_s, delta_p), (0.85, 0.93, 0.93));
        let tv = ThresholdConfig::TimeVarying(ThresholdSchedule::survey());
        assert_eq!(resolve_thresholds(&tv, 0, 3.0, 1).unwrap().s, 0.98);
        assert!(resolve_thresholds(&tv, 0, -1.0, 1).is_err());
    }

    #[test]
    fn individual_thresholds_are_reproducible_and_bounded() {
        let cfg = DecisionModel::individual().threshold_config().unwrap();
        let a = resolve_thresholds(&cfg, 17, 0.0, 42).unwrap();
        assert_eq!(a, resolve_thresholds(&cfg, 17, 30.0, 42).unwrap());
        assert_ne!(a, resolve_thresholds(&cfg, 18, 0.0, 42).unwrap());
        let n = 10_000;
        let draws: Vec<Thresholds> = (0..n).map(|i| resolve_thresholds(&cfg, i, 0.0, 5).unwrap()).collect();
        assert!(draws.iter().all(|t| [t.h, t.s, t.p].iter().all(|v| (0.0..=1.0).contains(v))));
        // Mean of N(0.85, 0.2) clamped to [0, 1], by numerical quadrature: 0.823767.
        let mean_h = draws.iter().map(|t| t.h).sum::<f64>() / n as f64;
        assert!((mean_h - 0.823_767).abs() < 0.01, "{mean_h}");
        // Same for N(0.93, 0.2): 0.880374.
        let mean_s = draws.iter().map(|t| t.s).sum::<f64>() / n as f64;
        assert!((mean_s - 0.880_374).abs() < 0.01, "{mean_s}");
    }

    #[test]
    fn model_blocks_parse_with_paths() {
        let m = DecisionModel::from_json(serde_json::json!({"type": "threshold_homog", "delta": 0.6}), "model").unwrap();
        assert_eq!(m, DecisionModel::homogeneous(0.6));
        match DecisionModel::from_json(serde_json::json!({"type": "threshold_homog", "delta": 1.6}), "model") {
            Err(Error::Config { path, .. }) => assert_eq!(path, "model.delta"),
            other => panic!("{other:?}"),
        }
        match DecisionModel::from_json(serde_json::json!({"type": "threshold_individual", "sigma": "x"}), "model") {
            Err(Error::Config { path, .. }) => assert_eq!(path, "model.sigma"),
            other => panic!("{other:?}"),
        }
        match DecisionModel::from_json(serde_json::json!({"type": "probit"}), "model") {
            Err(Error::Config { path, .. }) => assert_eq!(path, "model.type"),
            other => panic!("{other:?}"),
        }
        match DecisionModel::from_json(serde_json::json!({"type": "logit", "rule": "coin"}), "model") {
            Err(Error::Config { path, .. }) => assert_eq!(path, "model.rule"),
            other => panic!("{other:?}"),
        }
        let tv = DecisionModel::from_json(serde_json::json!({"type": "threshold_timevarying"}), "m").unwrap();
        assert_eq!(tv, DecisionModel::time_varying());
        let back: DecisionModel = serde_json::from_value(serde_json::to_value(&tv).unwrap()).unwrap();
        assert_eq!(back, tv);
    }

    #[test]
    fn presets() {
        assert_eq!(DecisionModel::standard_set().len(), 8);
        assert_eq!(DecisionModel::preset("threshold_0.9"), Some(DecisionModel::homogeneous(0.9)));
        assert_eq!(DecisionModel::preset("hetero"), Some(DecisionModel::heterogeneous()));
        assert!(DecisionModel::preset("nonsense").is_none());
    }
}
