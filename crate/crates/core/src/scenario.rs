//! Scenario assembly: the synthetic 1 km disc and the five Harvey counties.

use std::f64::consts::PI;
use std::fs::File;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::decision::Regime;
use crate::dynamics::{PhysicalSchedule, SdParamSet, SdParams, SdPreset, SocialCoupling};
use crate::error::{Error, Result};
use crate::network::{Frame, GeoPoint, Locations, MultilayerNetwork, Radii};
use crate::rng::{self, Purpose};

/// POIs in the synthetic disc, scaled down from Galveston County.
pub const TOY_POIS: usize = 17;
pub const TOY_RADIUS_KM: f64 = 1.0;
/// Mean social-layer degree reported for Galveston County.
pub const GALVESTON_N_BAR: f64 = 78.5;

const KM_PER_DEGREE: f64 = crate::network::EARTH_RADIUS_KM * PI / 180.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Disc {
    /// `[x, y]` in km for the local frame, `[lon, lat]` in degrees for WGS84.
    pub center: [f64; 2],
    pub radius_km: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConditions {
    /// Recovery of every POI at t = 0.
    pub q_s0: f64,
    /// Probability that a household has already returned at t = 0.
    pub returned0: f64,
}

impl Default for InitialConditions {
    fn default() -> Self {
        InitialConditions { q_s0: 0.7, returned0: 0.75 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentOverride {
    pub agent: usize,
    #[serde(default)]
    pub q_house: Option<f64>,
    #[serde(default)]
    pub q_income: Option<f64>,
    /// Forces the initial state instead of drawing it.
    #[serde(default)]
    pub returned: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Attributes {
    pub q_house: f64,
    pub q_income: f64,
    pub overrides: Vec<AgentOverride>,
}

impl Default for Attributes {
    fn default() -> Self {
        Attributes { q_house: 1.0, q_income: 60_000.0, overrides: Vec::new() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentAttributes {
    pub q_house: f64,
    pub q_income: f64,
}

/// Everything needed to build a scenario instance. File paths are resolved
/// relative to the directory of the configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub frame: Frame,
    pub geometry: Disc,
    /// Name of a county descriptor; its counts are checked against `locations`.
    pub county: Option<String>,
    pub population: usize,
    pub n_pois: usize,
    pub sd_params: SdParamSet,
    pub social_coupling: SocialCoupling,
    pub logit_regime: Regime,
    /// `t_days,q_p` CSV; the bundled synthetic series when absent.
    pub physical_schedule: Option<PathBuf>,
    /// Locations CSV; placements are sampled inside `geometry` when absent.
    pub locations: Option<PathBuf>,
    pub radii: Radii,
    pub initial: InitialConditions,
    pub attributes: Attributes,
    /// Euler sub-steps per simulated day.
    pub substeps: u32,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self::toy(1000)
    }
}

impl ScenarioConfig {
    /// The synthetic disc: Galveston parameters, rural logit coefficients.
    pub fn toy(population: usize) -> Self {
        ScenarioConfig {
            name: "toy".into(),
            frame: Frame::LocalPlaneKm,
            geometry: Disc { center: [0.0, 0.0], radius_km: TOY_RADIUS_KM },
            county: None,
            population,
            n_pois: TOY_POIS,
            sd_params: SdParamSet::Named(SdPreset::OtherCounties),
            social_coupling: SocialCoupling::PerNode,
            logit_regime: Regime::Rural,
            physical_schedule: None,
            locations: None,
            radii: Radii::default(),
            initial: InitialConditions::default(),
            attributes: Attributes::default(),
            substeps: 1,
        }
    }

    pub fn county(descriptor: &CountyDescriptor) -> Self {
        let harris = descriptor.name == "harris";
        ScenarioConfig {
            name: descriptor.name.to_string(),
            frame: Frame::Wgs84,
            geometry: Disc { center: descriptor.center, radius_km: descriptor.equivalent_radius_km() },
            county: Some(descriptor.name.to_string()),
            population: descriptor.homes,
            n_pois: descriptor.pois,
            sd_params: SdParamSet::Named(if harris { SdPreset::Harris } else { SdPreset::OtherCounties }),
            social_coupling: SocialCoupling::PerNode,
            logit_regime: if harris { Regime::Urban } else { Regime::Rural },
            ..Self::toy(descriptor.homes)
        }
    }

    pub fn validate(&self, path: &str) -> Result<()> {
        let key = |k: &str| format!("{path}.{k}");
        if self.population < 1 {
            return Err(Error::config(key("population"), "must be at least 1"));
        }
        if self.n_pois < 1 {
            return Err(Error::config(key("n_pois"), "must be at least 1"));
        }
        if !(self.geometry.radius_km > 0.0) {
            return Err(Error::config(key("geometry.radius_km"), "must be positive"));
        }
        self.sd_params.params().validate(&key("sd_params"))?;
        if let SocialCoupling::MeanField { n_bar } = self.social_coupling {
            if !(n_bar >= 0.0 && n_bar.is_finite()) {
                return Err(Error::config(key("social_coupling.mean_field.n_bar"), "must be non-negative"));
            }
        }
        for (name, r) in [
            ("home_home_km", self.radii.home_home_km),
            ("home_poi_km", self.radii.home_poi_km),
            ("poi_poi_km", self.radii.poi_poi_km),
        ] {
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::config(key(&format!("radii.{name}")), "must be positive"));
            }
        }
        for (name, v) in [("q_s0", self.initial.q_s0), ("returned0", self.initial.returned0)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(key(&format!("initial.{name}")), "must lie in [0, 1]"));
            }
        }
        if !(0.0..=1.0).contains(&self.attributes.q_house) {
            return Err(Error::config(key("attributes.q_house"), "must lie in [0, 1]"));
        }
        if !(self.attributes.q_income >= 0.0) {
            return Err(Error::config(key("attributes.q_income"), "must be non-negative"));
        }
        for (i, o) in self.attributes.overrides.iter().enumerate() {
            let k = key(&format!("attributes.overrides[{i}]"));
            if o.agent >= self.population {
                return Err(Error::config(format!("{k}.agent"), format!("no agent {} in a population of {}", o.agent, self.population)));
            }
            if o.q_house.is_some_and(|v| !(0.0..=1.0).contains(&v)) {
                return Err(Error::config(format!("{k}.q_house"), "must lie in [0, 1]"));
            }
            if o.q_income.is_some_and(|v| !(v >= 0.0)) {
                return Err(Error::config(format!("{k}.q_income"), "must be non-negative"));
            }
        }
        if self.substeps < 1 {
            return Err(Error::config(key("substeps"), "must be at least 1"));
        }
        if let Some(c) = &self.county {
            if CountyDescriptor::find(c).is_none() {
                return Err(Error::config(key("county"), format!("unknown county {c:?}")));
            }
        }
        Ok(())
    }
}

/// A county's published counts plus an approximate centre for placing synthetic points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CountyDescriptor {
    pub name: &'static str,
    pub population: u64,
    /// People per 1 km-radius circle.
    pub population_density: f64,
    pub homes: usize,
    pub pois: usize,
    /// Mean social-layer degree.
    pub n_bar: f64,
    /// Approximate `[lon, lat]` centroid.
    pub center: [f64; 2],
}

impl CountyDescriptor {
    pub const ALL: [CountyDescriptor; 5] = [
        CountyDescriptor {
            name: "harris",
            population: 4_731_145,
            population_density: 3_362.00,
            homes: 35_497,
            pois: 66_995,
            n_bar: 139.1,
            center: [-95.39, 29.86],
        },
        CountyDescriptor {
            name: "fort_bend",
            population: 822_779,
            population_density: 1_158.15,
            homes: 8_947,
            pois: 8_947,
            n_bar: 107.7,
            center: [-95.77, 29.53],
        },
        CountyDescriptor {
            name: "brazoria",
            population: 372_031,
            population_density: 331.02,
            homes: 1_616,
            pois: 4_834,
            n_bar: 79.9,
            center: [-95.43, 29.17],
        },
        CountyDescriptor {
            name: "galveston",
            population: 350_682,
            population_density: 1_121.52,
            homes: 1_814,
            pois: 5_330,
            n_bar: GALVESTON_N_BAR,
            center: [-94.98, 29.39],
        },
        CountyDescriptor {
            name: "jefferson",
            population: 256_526,
            population_density: 354.92,
            homes: 1_704,
            pois: 4_407,
            n_bar: 70.2,
            center: [-94.15, 29.85],
        },
    ];

    pub fn find(name: &str) -> Option<&'static CountyDescriptor> {
        let norm = name.to_ascii_lowercase().replace([' ', '-'], "_");
        Self::ALL.iter().find(|c| c.name == norm)
    }

    /// Radius of the disc whose area holds the county population at its
    /// stated density: area = pi * population / density.
    pub fn equivalent_radius_km(&self) -> f64 {
        (self.population as f64 / self.population_density).sqrt()
    }

    pub fn sd_params(&self) -> SdParams {
        if self.name == "harris" {
            SdParams::HARRIS
        } else {
            SdParams::OTHER_COUNTIES
        }
    }
}

/// Where node placements came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Synthetic,
    Measured,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioMetadata {
    pub name: String,
    pub seed: u64,
    pub locations: Provenance,
    pub physical_schedule: Provenance,
    pub homes: usize,
    pub pois: usize,
    pub home_home_edges: usize,
    pub home_poi_edges: usize,
    pub poi_poi_edges: usize,
}

/// An immutable, fully built scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub network: MultilayerNetwork,
    pub sd_params: SdParams,
    pub schedule: PhysicalSchedule,
    pub agents: Vec<AgentAttributes>,
    pub metadata: ScenarioMetadata,
}

fn sample_disc<R: Rng>(rng: &mut R, n: usize, radius: f64) -> Vec<(f64, f64)> {
    (0..n)
        .map(|_| {
            let r = radius * rng.random::<f64>().sqrt();
            let theta = 2.0 * PI * rng.random::<f64>();
            (r * theta.cos(), r * theta.sin())
        })
        .collect()
}

fn place(frame: Frame, disc: &Disc, offsets: Vec<(f64, f64)>) -> Result<Vec<GeoPoint>> {
    let [cx, cy] = disc.center;
    offsets
        .into_iter()
        .map(|(dx, dy)| match frame {
            Frame::LocalPlaneKm => Ok(GeoPoint::local(cx + dx, cy + dy)),
            Frame::Wgs84 => {
                let lat = cy + dy / KM_PER_DEGREE;
                let lon = cx + dx / (KM_PER_DEGREE * cy.to_radians().cos());
                GeoPoint::wgs84(lon, lat)
            }
        })
        .collect()
}

/// Uniform placements in the configured disc. Homes and POIs use separate
/// streams, so POI positions do not depend on the population size.
pub fn synthesize_locations(config: &ScenarioConfig, seed: u64) -> Result<Locations> {
    let disc = &config.geometry;
    let mut home_rng = rng::stream(seed, Purpose::Placement, 0);
    let mut poi_rng = rng::stream(seed, Purpose::Placement, 1);
    let homes = place(config.frame, disc, sample_disc(&mut home_rng, config.population, disc.radius_km))?;
    let pois = place(config.frame, disc, sample_disc(&mut poi_rng, config.n_pois, disc.radius_km))?;
    let physical = GeoPoint::new(config.frame, disc.center[0], disc.center[1])?;
    Ok(Locations { frame: config.frame, homes, pois, physical })
}

fn open(base: &Path, file: &Path) -> Result<(File, String)> {
    let path = if file.is_absolute() { file.to_path_buf() } else { base.join(file) };
    let name = path.display().to_string();
    let f = File::open(&path).map_err(|e| Error::io(format!("opening {name}"), e))?;
    Ok((f, name))
}

impl Scenario {
    /// Builds from a configuration, reading referenced files relative to `base_dir`.
    pub fn build(config: &ScenarioConfig, seed: u64, base_dir: &Path) -> Result<Scenario> {
        let locations = match &config.locations {
            Some(file) => {
                let (f, name) = open(base_dir, file)?;
                Some(Locations::read_csv(f, config.frame, &name)?)
            }
            None => None,
        };
        let schedule = match &config.physical_schedule {
            Some(file) => {
                let (f, name) = open(base_dir, file)?;
                Some(PhysicalSchedule::read_csv(f, &name)?)
            }
            None => None,
        };
        Self::assemble(config, seed, locations, schedule)
    }

    /// Builds from in-memory inputs. Missing locations are sampled, a missing
    /// schedule falls back to the bundled synthetic series.
    pub fn assemble(
        config: &ScenarioConfig,
        seed: u64,
        locations: Option<Locations>,
        schedule: Option<PhysicalSchedule>,
    ) -> Result<Scenario> {
        let mut config = config.clone();
        let measured = locations.is_some();
        if let Some(loc) = &locations {
            if loc.frame != config.frame {
                return Err(Error::config("scenario.frame", "does not match the locations frame"));
            }
            if let Some(d) = config.county.as_deref().and_then(CountyDescriptor::find) {
                if loc.homes.len() != d.homes || loc.pois.len() != d.pois {
                    return Err(Error::config(
                        "scenario.locations",
                        format!(
                            "{} expects {} homes and {} POIs, locations file has {} and {}",
                            d.name,
                            d.homes,
                            d.pois,
                            loc.homes.len(),
                            loc.pois.len()
                        ),
                    ));
                }
            }
            config.population = loc.homes.len();
            config.n_pois = loc.pois.len();
        }
        config.validate("scenario")?;
        let locations = match locations {
            Some(l) => l,
            None => synthesize_locations(&config, seed)?,
        };
        let schedule_provenance = if schedule.is_some() { Provenance::Measured } else { Provenance::Synthetic };
        let schedule = schedule.unwrap_or_else(PhysicalSchedule::synthetic);
        let network = MultilayerNetwork::build(locations.homes, locations.pois, locations.physical, config.radii)?;

        let mut agents = vec![
            AgentAttributes { q_house: config.attributes.q_house, q_income: config.attributes.q_income };
            config.population
        ];
        for o in &config.attributes.overrides {
            let a = &mut agents[o.agent];
            if let Some(v) = o.q_house {
                a.q_house = v;
            }
            if let Some(v) = o.q_income {
                a.q_income = v;
            }
        }
        let metadata = ScenarioMetadata {
            name: config.name.clone(),
            seed,
            locations: if measured { Provenance::Measured } else { Provenance::Synthetic },
            physical_schedule: schedule_provenance,
            homes: network.n_homes(),
            pois: network.n_pois(),
            home_home_edges: network.home_home_edges().len(),
            home_poi_edges: network.home_poi_edges().len(),
            poi_poi_edges: network.poi_poi_edges().len(),
        };
        Ok(Scenario { sd_params: config.sd_params.params(), config, network, schedule, agents, metadata })
    }

    pub fn locations(&self) -> Locations {
        Locations {
            frame: self.network.frame(),
            homes: self.network.homes().to_vec(),
            pois: self.network.pois().to_vec(),
            physical: self.network.physical(),
        }
    }

    pub fn population(&self) -> usize {
        self.network.n_homes()
    }
}

/// The synthetic disc with `population` homes and 17 POIs.
pub fn generate_toy(population: usize, seed: u64) -> Result<Scenario> {
    Scenario::assemble(&ScenarioConfig::toy(population), seed, None, None)
}

/// A county scenario; placements are synthesised when `locations` is `None`.
pub fn load_county(
    descriptor: &CountyDescriptor,
    locations: Option<Locations>,
    schedule: Option<PhysicalSchedule>,
    seed: u64,
) -> Result<Scenario> {
    Scenario::assemble(&ScenarioConfig::county(descriptor), seed, locations, schedule)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::distance;

    #[test]
    fn toy_is_deterministic_and_inside_disc() {
        let a = generate_toy(100, 3).unwrap();
        let b = generate_toy(100, 3).unwrap();
        assert_eq!(a.locations(), b.locations());
        assert_ne!(a.locations(), generate_toy(100, 4).unwrap().locations());
        assert_eq!(a.network.n_pois(), TOY_POIS);
        let o = GeoPoint::local(0.0, 0.0);
        for p in a.network.homes().iter().chain(a.network.pois()) {
            assert!(distance(o, *p).unwrap() <= TOY_RADIUS_KM);
        }
        assert_eq!(a.network.physical(), o);
        assert_eq!(a.sd_params, SdParams::OTHER_COUNTIES);
        assert_eq!(a.config.logit_regime, Regime::Rural);
        assert_eq!(a.metadata.locations, Provenance::Synthetic);
    }

    #[test]
    fn uniform_disc_mean_radius() {
        // E[r] = 2R/3 for a uniform disc.
        let s = generate_toy(10_000, 11).unwrap();
        let o = GeoPoint::local(0.0, 0.0);
        let mean = s.network.homes().iter().map(|p| distance(o, *p).unwrap()).sum::<f64>() / 10_000.0;
        assert!((mean - 2.0 / 3.0).abs() < 0.01, "{mean}");
    }

    #[test]
    fn poi_positions_independent_of_population() {
        assert_eq!(generate_toy(100, 9).unwrap().network.pois(), generate_toy(700, 9).unwrap().network.pois());
    }

    #[test]
    fn county_descriptors() {
        let harris = CountyDescriptor::find("Harris").unwrap();
        assert_eq!((harris.homes, harris.pois), (35_497, 66_995));
        assert_eq!(harris.sd_params().beta_s, 0.026);
        assert_eq!(CountyDescriptor::find("brazoria").unwrap().sd_params().beta_s, 0.093);
        assert_eq!(CountyDescriptor::find("Fort Bend").unwrap().name, "fort_bend");
        // pi * r^2 = pi * population / density ~ 4421 km^2 for Harris.
        let area = PI * harris.equivalent_radius_km().powi(2);
        assert!((area - 4421.0).abs() < 5.0, "{area}");
        let cfg = ScenarioConfig::county(harris);
        assert_eq!(cfg.logit_regime, Regime::Urban);
        assert_eq!(ScenarioConfig::county(CountyDescriptor::find("jefferson").unwrap()).logit_regime, Regime::Rural);
    }

    #[test]
    fn county_location_counts_checked() {
        let brazoria = CountyDescriptor::find("brazoria").unwrap();
        let mut cfg = ScenarioConfig::county(brazoria);
        cfg.population = 3;
        cfg.n_pois = 2;
        let loc = synthesize_locations(&cfg, 1).unwrap();
        match load_county(brazoria, Some(loc), None, 1) {
            Err(Error::Config { path, .. }) => assert_eq!(path, "scenario.locations"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn synthetic_county_builds() {
        let brazoria = CountyDescriptor::find("brazoria").unwrap();
        let s = load_county(brazoria, None, None, 2).unwrap();
        assert_eq!(s.population(), 1_616);
        assert_eq!(s.network.n_pois(), 4_834);
        assert_eq!(s.network.frame(), Frame::Wgs84);
        assert_eq!(s.metadata.locations, Provenance::Synthetic);
        let centre = s.network.physical();
        let r = brazoria.equivalent_radius_km();
        for p in s.network.homes() {
            // Equirectangular placement; allow a small projection error.
            assert!(distance(centre, *p).unwrap() <= r * 1.01);
        }
    }

    #[test]
    fn validation_paths() {
        let mut cfg = ScenarioConfig::toy(10);
        cfg.population = 0;
        assert!(matches!(cfg.validate("scenario"), Err(Error::Config { path, .. }) if path == "scenario.population"));
        let mut cfg = ScenarioConfig::toy(10);
        cfg.attributes.overrides.push(AgentOverride { agent: 10, q_house: None, q_income: Some(1.0), returned: None });
        assert!(matches!(cfg.validate("s"), Err(Error::Config { path, .. }) if path == "s.attributes.overrides[0].agent"));
        let mut cfg = ScenarioConfig::toy(10);
        cfg.initial.returned0 = 1.5;
        assert!(cfg.validate("s").is_err());
    }

    #[test]
    fn overrides_apply() {
        let mut cfg = ScenarioConfig::toy(5);
        cfg.attributes.overrides.push(AgentOverride { agent: 2, q_house: Some(0.3), q_income: None, returned: None });
        let s = Scenario::assemble(&cfg, 1, None, None).unwrap();
        assert_eq!(s.agents[2].q_house, 0.3);
        assert_eq!(s.agents[2].q_income, 60_000.0);
        assert_eq!(s.agents[1].q_house, 1.0);
    }

    #[test]
    fn config_json_roundtrip() {
        let cfg = ScenarioConfig::county(CountyDescriptor::find("galveston").unwrap());
        let v = serde_json::to_value(&cfg).unwrap();
        let back: ScenarioConfig = serde_json::from_value(v).unwrap();
        assert_eq!(back, cfg);
        let partial: ScenarioConfig = serde_json::from_str(r#"{"population": 250}"#).unwrap();
        assert_eq!(partial.population, 250);
        assert_eq!(partial.n_pois, TOY_POIS);
    }
}
