//! Social-layer recovery driven by a logistic system-dynamics equation, and the
//! exogenous physical recovery series.
//!
//! The social rate is
//!
//! ```text
//! dq_s/dt = 0.001 * beta_s * N * q_s * (1 - q_s / K_s) + 0.1 * beta_p * q_p * (1 - q_p / K_p)
//! ```
//!
//! where `N` is either the mean social-layer degree of the county or, for the
//! per-node variant, the degree of the POI being updated.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SdParams {
    pub beta_s: f64,
    pub k_s: f64,
    pub beta_p: f64,
    pub k_p: f64,
}

impl SdParams {
    pub const HARRIS: SdParams = SdParams { beta_s: 0.026, k_s: 0.671, beta_p: 1.432, k_p: 0.901 };
    pub const OTHER_COUNTIES: SdParams = SdParams { beta_s: 0.093, k_s: 0.736, beta_p: 1.114, k_p: 0.935 };

    pub fn validate(&self, path: &str) -> Result<()> {
        for (name, v) in [("beta_s", self.beta_s), ("beta_p", self.beta_p)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{path}.{name}"), format!("must be positive, got {v}")));
            }
        }
        for (name, v) in [("k_s", self.k_s), ("k_p", self.k_p)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::config(format!("{path}.{name}"), format!("must lie in (0, 1], got {v}")));
            }
        }
        Ok(())
    }
}

/// Named parameter sets or explicit values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SdParamSet {
    Named(SdPreset),
    Custom(SdParams),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SdPreset {
    Harris,
    OtherCounties,
}

impl SdParamSet {
    pub fn params(&self) -> SdParams {
        match self {
            SdParamSet::Named(SdPreset::Harris) => SdParams::HARRIS,
            SdParamSet::Named(SdPreset::OtherCounties) => SdParams::OTHER_COUNTIES,
            SdParamSet::Custom(p) => *p,
        }
    }
}

/// Which degree enters the social growth term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SocialCoupling {
    /// Each POI uses its own social-layer degree.
    #[default]
    PerNode,
    /// Every POI uses the same mean degree.
    MeanField { n_bar: f64 },
}

/// Rate of change of social recovery; negative above either carrying capacity.
#[inline]
pub fn sd_rhs(q_s: f64, q_p: f64, params: &SdParams, n: f64) -> f64 {
    0.001 * params.beta_s * n * q_s * (1.0 - q_s / params.k_s)
        + 0.1 * params.beta_p * q_p * (1.0 - q_p / params.k_p)
}

/// One forward-Euler step, clamped to `[0, 1]`.
#[inline]
pub fn sd_step(q_s: f64, q_p: f64, params: &SdParams, n: f64, dt: f64) -> f64 {
    (q_s + dt * sd_rhs(q_s, q_p, params, n)).clamp(0.0, 1.0)
}

/// Per-POI step with the POI's own degree `n_j`.
#[inline]
pub fn sd_step_per_node(q_sj: f64, q_p: f64, params: &SdParams, n_j: usize, dt: f64) -> f64 {
    sd_step(q_sj, q_p, params, n_j as f64, dt)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalKnot {
    pub t_days: f64,
    pub q_p: f64,
}

/// Physical recovery over time: linear between knots, held after the last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PhysicalSchedule {
    knots: Vec<PhysicalKnot>,
}

impl PhysicalSchedule {
    pub fn new(knots: Vec<PhysicalKnot>) -> Result<Self> {
        let first = knots.first().ok_or_else(|| Error::config("physical_schedule", "schedule is empty"))?;
        if first.t_days != 0.0 {
            return Err(Error::config("physical_schedule[0].t_days", "first knot must be at t = 0"));
        }
        for (i, w) in knots.windows(2).enumerate() {
            if !(w[1].t_days > w[0].t_days) {
                return Err(Error::config(
                    format!("physical_schedule[{}].t_days", i + 1),
                    "knot times must be strictly increasing",
                ));
            }
        }
        for (i, k) in knots.iter().enumerate() {
            if !(0.0..=1.0).contains(&k.q_p) {
                return Err(Error::config(format!("physical_schedule[{i}].q_p"), "must lie in [0, 1]"));
            }
        }
        Ok(PhysicalSchedule { knots })
    }

    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self> {
        Self::new(pairs.iter().map(|&(t_days, q_p)| PhysicalKnot { t_days, q_p }).collect())
    }

    pub fn knots(&self) -> &[PhysicalKnot] {
        &self.knots
    }

    /// Synthetic water-system recovery that rises quickly and levels off near
    /// the physical carrying capacity. Not measured data.
    pub fn synthetic() -> Self {
        Self::from_pairs(&[(0.0, 0.55), (3.0, 0.70), (7.0, 0.82), (14.0, 0.88), (30.0, 0.92), (61.0, 0.93)])
            .expect("valid bundled schedule")
    }

    pub fn value(&self, t: f64) -> Result<f64> {
        physical_value(self, t)
    }

    pub fn read_csv<R: Read>(reader: R, file: &str) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        if header != ["t_days", "q_p"] {
            return Err(Error::Row { file: file.into(), row: 1, message: "expected header t_days,q_p".into() });
        }
        let mut knots = Vec::new();
        for (k, rec) in r.records().enumerate() {
            let row = k + 2;
            let bad = |m: String| Error::Row { file: file.into(), row, message: m };
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            if rec.len() != 2 {
                return Err(bad(format!("expected 2 fields, found {}", rec.len())));
            }
            let t_days = rec[0].parse::<f64>().map_err(|_| bad(format!("bad t_days {:?}", &rec[0])))?;
            let q_p = rec[1].parse::<f64>().map_err(|_| bad(format!("bad q_p {:?}", &rec[1])))?;
            knots.push(PhysicalKnot { t_days, q_p });
        }
        Self::new(knots)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t_days", "q_p"])?;
        for k in &self.knots {
            w.write_record([k.t_days.to_string(), k.q_p.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("writing schedule", e))?;
        Ok(())
    }
}

pub fn physical_value(schedule: &PhysicalSchedule, t: f64) -> Result<f64> {
    let knots = &schedule.knots;
    let first = knots.first().ok_or_else(|| Error::config("physical_schedule", "schedule is empty"))?;
    if !(t >= first.t_days) {
        return Err(Error::Domain(format!("t = {t} precedes the physical schedule")));
    }
    // First knot strictly after t.
    let k = knots.partition_point(|k| k.t_days <= t);
    if k == knots.len() {
        return Ok(knots[k - 1].q_p);
    }
    let (a, b) = (knots[k - 1], knots[k]);
    let w = (t - a.t_days) / (b.t_days - a.t_days);
    Ok(a.q_p + w * (b.q_p - a.q_p))
}

#[cfg(test)]
mod tests {
    use super::*;

    const GALVESTON_N: f64 = 78.5;

    #[test]
    fn rhs_zeros() {
        let p = SdParams::OTHER_COUNTIES;
        assert_eq!(sd_rhs(0.0, 0.0, &p, GALVESTON_N), 0.0);
        assert!(sd_rhs(p.k_s, p.k_p, &p, GALVESTON_N).abs() < 1e-15);
    }

    #[test]
    fn rhs_hand_value() {
        // 0.001*0.093*78.5*0.5*(1-0.5/0.736) = 0.00117046
        // 0.1*1.114*0.8*(1-0.8/0.935)        = 0.01286759
        let v = sd_rhs(0.5, 0.8, &SdParams::OTHER_COUNTIES, GALVESTON_N);
        assert!((v - 0.014_038_05).abs() < 1e-8, "{v}");
        let next = sd_step(0.5, 0.8, &SdParams::OTHER_COUNTIES, GALVESTON_N, 1.0);
        assert!((next - 0.514_038_05).abs() < 1e-8);
    }

    #[test]
    fn fixed_point_and_clamp() {
        let p = SdParams::HARRIS;
        assert!((sd_step(p.k_s, p.k_p, &p, 139.1, 1.0) - p.k_s).abs() < 1e-15);
        assert_eq!(sd_step(0.999, 0.5, &p, 139.1, 10.0), 1.0);
        assert!(sd_rhs(0.9, 0.5, &p, 139.1) < sd_rhs(0.5, 0.5, &p, 139.1));
    }

    #[test]
    fn isolated_poi_without_physical_recovery_is_frozen() {
        let p = SdParams::OTHER_COUNTIES;
        assert_eq!(sd_step_per_node(0.42, 0.0, &p, 0, 1.0), 0.42);
    }

    #[test]
    fn per_node_reduces_to_mean_field() {
        let p = SdParams::OTHER_COUNTIES;
        let (mut a, mut b) = (0.3, 0.3);
        for t in 0..60 {
            let qp = 0.5 + 0.005 * t as f64;
            a = sd_step_per_node(a, qp, &p, 78, 1.0);
            b = sd_step(b, qp, &p, 78.0, 1.0);
            assert_eq!(a, b);
        }
    }

    #[test]
    fn physical_interpolation() {
        let s = PhysicalSchedule::from_pairs(&[(0.0, 0.5), (10.0, 0.7)]).unwrap();
        assert_eq!(s.value(0.0).unwrap(), 0.5);
        assert_eq!(s.value(10.0).unwrap(), 0.7);
        assert!((s.value(5.0).unwrap() - 0.6).abs() < 1e-15);
        assert_eq!(s.value(99.0).unwrap(), 0.7);
        assert!(matches!(s.value(-1.0), Err(Error::Domain(_))));
        assert!(PhysicalSchedule::from_pairs(&[]).is_err());
        assert!(PhysicalSchedule::from_pairs(&[(1.0, 0.5)]).is_err());
        assert!(PhysicalSchedule::from_pairs(&[(0.0, 0.5), (0.0, 0.6)]).is_err());
        assert!(PhysicalSchedule::from_pairs(&[(0.0, 1.5)]).is_err());
    }

    #[test]
    fn schedule_csv() {
        let s = PhysicalSchedule::synthetic();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        assert!(buf.starts_with(b"t_days,q_p\n"));
        assert_eq!(PhysicalSchedule::read_csv(buf.as_slice(), "mem").unwrap(), s);
        let bad = "t_days,q_p\n0,0.5\nx,0.6\n";
        assert!(matches!(PhysicalSchedule::read_csv(bad.as_bytes(), "b"), Err(Error::Row { row: 3, .. })));
    }

    #[test]
    fn param_validation() {
        assert!(SdParams::HARRIS.validate("sd").is_ok());
        let bad = SdParams { k_s: 1.2, ..SdParams::HARRIS };
        assert!(matches!(bad.validate("sd"), Err(Error::Config { path, .. }) if path == "sd.k_s"));
        let named: SdParamSet = serde_json::from_str("\"harris\"").unwrap();
        assert_eq!(named.params(), SdParams::HARRIS);
    }
}
