//! Model × population × seed experiment grids, run in parallel and persisted
//! as one trajectory file per cell.
//!
//! The unit of work is a `(population, seed)` group: its scenario is built once
//! and every model runs on it with the same replicate seed.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::decision::DecisionModel;
use crate::engine::{run, RunSpec, Trajectory, DEFAULT_HORIZON};
use crate::error::{Error, Result};
use crate::rng::{mix_words, Purpose};
use crate::scenario::{Scenario, ScenarioConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedModel {
    pub name: String,
    pub model: DecisionModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentGrid {
    pub models: Vec<NamedModel>,
    pub populations: Vec<usize>,
    /// Replicate indices; each is mixed with the base seed and population.
    pub seeds: Vec<u64>,
    pub horizon: u32,
    pub base_seed: u64,
    /// Template scenario; `population` is replaced per cell.
    pub scenario: ScenarioConfig,
}

impl Default for ExperimentGrid {
    fn default() -> Self {
        ExperimentGrid {
            models: DecisionModel::standard_set().into_iter().map(|(name, model)| NamedModel { name, model }).collect(),
            populations: (1..=50).map(|k| k * 100).collect(),
            seeds: (0..5).collect(),
            horizon: DEFAULT_HORIZON,
            base_seed: 0,
            scenario: ScenarioConfig::toy(100),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellKey {
    pub model: String,
    pub population: usize,
    pub seed: u64,
}

impl std::fmt::Display for CellKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}/{}", self.model, self.population, self.seed)
    }
}

impl ExperimentGrid {
    /// Populations 100..=1000 with three replicates.
    pub fn reduced() -> Self {
        ExperimentGrid { populations: (1..=10).map(|k| k * 100).collect(), seeds: (0..3).collect(), ..Self::default() }
    }

    pub fn size(&self) -> usize {
        self.models.len() * self.populations.len() * self.seeds.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.models.is_empty() {
            return Err(Error::config("grid.models", "must not be empty"));
        }
        if self.populations.is_empty() {
            return Err(Error::config("grid.populations", "must not be empty"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("grid.seeds", "must not be empty"));
        }
        let mut names = BTreeSet::new();
        for (i, m) in self.models.iter().enumerate() {
            let path = format!("grid.models[{i}]");
            if m.name.is_empty() || m.name.contains(['/', '\\']) || m.name.starts_with('.') {
                return Err(Error::config(format!("{path}.name"), format!("{:?} is not a usable directory name", m.name)));
            }
            if !names.insert(m.name.as_str()) {
                return Err(Error::config(format!("{path}.name"), format!("duplicate model name {:?}", m.name)));
            }
            m.model.validate(&format!("{path}.model"))?;
        }
        if self.populations.iter().collect::<BTreeSet<_>>().len() != self.populations.len() {
            return Err(Error::config("grid.populations", "contains duplicates"));
        }
        if self.populations.contains(&0) {
            return Err(Error::config("grid.populations", "populations must be at least 1"));
        }
        if self.seeds.iter().collect::<BTreeSet<_>>().len() != self.seeds.len() {
            return Err(Error::config("grid.seeds", "contains duplicates"));
        }
        self.scenario.validate("grid.scenario")
    }

    /// Every cell key in axis order.
    pub fn keys(&self) -> Vec<CellKey> {
        let mut v = Vec::with_capacity(self.size());
        for m in &self.models {
            for &population in &self.populations {
                for &seed in &self.seeds {
                    v.push(CellKey { model: m.name.clone(), population, seed });
                }
            }
        }
        v
    }

    /// Seed shared by all models of a `(population, seed)` group.
    pub fn replicate_seed(&self, population: usize, seed: u64) -> u64 {
        mix_words(&[self.base_seed, Purpose::Replicate as u64, population as u64, seed])
    }

    pub fn model(&self, name: &str) -> Option<&DecisionModel> {
        self.models.iter().find(|m| m.name == name).map(|m| &m.model)
    }

    /// SHA-256 of the canonical JSON form.
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("grid serialises");
        hex::encode(Sha256::digest(&json))
    }

    pub fn scenario_for(&self, population: usize, seed: u64) -> Result<Scenario> {
        let mut cfg = self.scenario.clone();
        cfg.population = population;
        Scenario::assemble(&cfg, self.replicate_seed(population, seed), None, None)
    }
}

pub type ResultTable = BTreeMap<CellKey, Trajectory>;

#[derive(Debug)]
pub struct GridOutcome {
    pub table: ResultTable,
    pub failures: Vec<(CellKey, Error)>,
    /// Cells simulated in this call.
    pub executed: usize,
}

type CellResult = (CellKey, Result<Trajectory>);

fn run_group(grid: &ExperimentGrid, population: usize, seed: u64, models: &[&NamedModel]) -> Vec<CellResult> {
    let key = |m: &NamedModel| CellKey { model: m.name.clone(), population, seed };
    let scenario = match grid.scenario_for(population, seed) {
        Ok(s) => s,
        Err(e) => {
            let msg = e.to_string();
            return models.iter().map(|m| (key(m), Err(Error::Domain(msg.clone())))).collect();
        }
    };
    let replicate = grid.replicate_seed(population, seed);
    models
        .iter()
        .map(|m| {
            let spec = RunSpec { model: m.model.clone(), seed: replicate, horizon: grid.horizon, record_agents: false };
            (key(m), run(&scenario, &spec))
        })
        .collect()
}

fn pool(parallelism: usize) -> Result<rayon::ThreadPool> {
    if parallelism < 1 {
        return Err(Error::config("parallelism", "must be at least 1"));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .map_err(|e| Error::Domain(format!("thread pool: {e}")))
}

/// Runs only the cells in `todo`, calling `sink` on each finished group from
/// the worker that produced it.
fn execute<F>(grid: &ExperimentGrid, todo: &BTreeSet<CellKey>, parallelism: usize, sink: F) -> Result<Vec<CellResult>>
where
    F: Fn(&[CellResult]) -> Result<()> + Sync,
{
    let mut groups = Vec::new();
    for &population in &grid.populations {
        for &seed in &grid.seeds {
            let models: Vec<&NamedModel> = grid
                .models
                .iter()
                .filter(|m| todo.contains(&CellKey { model: m.name.clone(), population, seed }))
                .collect();
            if !models.is_empty() {
                groups.push((population, seed, models));
            }
        }
    }
    let results: Vec<Vec<CellResult>> = pool(parallelism)?.install(|| {
        groups
            .par_iter()
            .map(|(population, seed, models)| {
                let mut out = run_group(grid, *population, *seed, models);
                if let Err(e) = sink(&out) {
                    let msg = e.to_string();
                    for cell in out.iter_mut().filter(|c| c.1.is_ok()) {
                        cell.1 = Err(Error::Domain(msg.clone()));
                    }
                }
                out
            })
            .collect()
    });
    Ok(results.into_iter().flatten().collect())
}

fn collect(results: Vec<CellResult>, table: &mut ResultTable) -> (Vec<(CellKey, Error)>, usize) {
    let executed = results.len();
    let mut failures = Vec::new();
    for (k, r) in results {
        match r {
            Ok(t) => {
                table.insert(k, t);
            }
            Err(e) => failures.push((k, e)),
        }
    }
    (failures, executed)
}

/// Runs every cell in memory.
pub fn run_grid(grid: &ExperimentGrid, parallelism: usize) -> Result<GridOutcome> {
    grid.validate()?;
    let todo: BTreeSet<CellKey> = grid.keys().into_iter().collect();
    let results = execute(grid, &todo, parallelism, |_| Ok(()))?;
    let mut table = ResultTable::new();
    let (failures, executed) = collect(results, &mut table);
    Ok(GridOutcome { table, failures, executed })
}

/// Completes `existing` by running only the cells it lacks.
pub fn resume(grid: &ExperimentGrid, existing: ResultTable, parallelism: usize) -> Result<GridOutcome> {
    grid.validate()?;
    let keys: BTreeSet<CellKey> = grid.keys().into_iter().collect();
    if let Some(k) = existing.keys().find(|k| !keys.contains(k)) {
        return Err(Error::Domain(format!("result {k} is not part of the grid")));
    }
    let todo: BTreeSet<CellKey> = keys.into_iter().filter(|k| !existing.contains_key(k)).collect();
    let results = execute(grid, &todo, parallelism, |_| Ok(()))?;
    let mut table = existing;
    let (failures, executed) = collect(results, &mut table);
    Ok(GridOutcome { table, failures, executed })
}

/// Long-format table of every record of every cell.
pub fn write_table_csv<W: Write>(table: &ResultTable, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["model", "population", "seed", "t", "mean_q_h", "mean_q_s", "q_p", "returned_count"])?;
    for (k, traj) in table {
        for r in &traj.records {
            w.write_record([
                k.model.clone(),
                k.population.to_string(),
                k.seed.to_string(),
                r.t.to_string(),
                r.mean_q_h.to_string(),
                r.mean_q_s.to_string(),
                r.q_p.to_string(),
                r.returned_count.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io("writing result table", e))?;
    Ok(())
}

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub grid: ExperimentGrid,
    /// `model/population/seed` → finished.
    pub completed: BTreeMap<String, bool>,
}

/// Writes `bytes` to `path` through a sibling temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    let mut tmp = tempfile_in(dir, path)?;
    tmp.1.write_all(bytes).map_err(|e| Error::io(format!("writing {}", tmp.0.display()), e))?;
    tmp.1.sync_all().map_err(|e| Error::io(format!("syncing {}", tmp.0.display()), e))?;
    drop(tmp.1);
    fs::rename(&tmp.0, path).map_err(|e| {
        let _ = fs::remove_file(&tmp.0);
        Error::io(format!("renaming into {}", path.display()), e)
    })
}

fn tempfile_in(dir: &Path, target: &Path) -> Result<(PathBuf, fs::File)> {
    let stem = target.file_name().and_then(|s| s.to_str()).unwrap_or("out");
    for attempt in 0u32.. {
        let p = dir.join(format!(".{stem}.{}.{attempt}.tmp", std::process::id()));
        match fs::OpenOptions::new().write(true).create_new(true).open(&p) {
            Ok(f) => return Ok((p, f)),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(Error::io(format!("creating {}", p.display()), e)),
        }
    }
    unreachable!()
}

/// A results directory: `results/<model>/<population>/<seed>.csv` plus a manifest.
#[derive(Debug, Clone)]
pub struct ResultStore {
    root: PathBuf,
}

#[derive(Debug)]
pub struct StoreOutcome {
    pub failures: Vec<(CellKey, Error)>,
    pub executed: usize,
    pub skipped: usize,
}

impl ResultStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        ResultStore { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn cell_path(&self, key: &CellKey) -> PathBuf {
        self.root.join("results").join(&key.model).join(key.population.to_string()).join(format!("{}.csv", key.seed))
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.root.join(MANIFEST)
    }

    pub fn read_manifest(&self) -> Result<Option<Manifest>> {
        let path = self.manifest_path();
        match fs::read(&path) {
            Ok(bytes) => Ok(Some(serde_json::from_slice(&bytes)?)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(Error::io(format!("reading {}", path.display()), e)),
        }
    }

    fn write_manifest(&self, m: &Manifest) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(m)?;
        bytes.push(b'\n');
        write_atomic(&self.manifest_path(), &bytes)
    }

    /// Cells of `grid` whose files are present.
    pub fn present(&self, grid: &ExperimentGrid) -> BTreeSet<CellKey> {
        grid.keys().into_iter().filter(|k| self.cell_path(k).is_file()).collect()
    }

    /// Runs the cells that are not yet stored. A store written under a different
    /// configuration is refused unless `invalidate` is set, which clears it first.
    pub fn run(&self, grid: &ExperimentGrid, parallelism: usize, invalidate: bool) -> Result<StoreOutcome> {
        grid.validate()?;
        let hash = grid.config_hash();
        if let Some(m) = self.read_manifest()? {
            if m.config_hash != hash {
                if !invalidate {
                    return Err(Error::StaleResults {
                        dir: self.root.clone(),
                        stored: m.config_hash,
                        current: hash,
                    });
                }
                self.clear()?;
            }
        }
        let present = self.present(grid);
        let mut manifest = Manifest { config_hash: hash, grid: grid.clone(), completed: BTreeMap::new() };
        self.write_manifest(&manifest)?;

        let todo: BTreeSet<CellKey> = grid.keys().into_iter().filter(|k| !present.contains(k)).collect();
        let results = execute(grid, &todo, parallelism, |cells| {
            for (k, r) in cells {
                if let Ok(t) = r {
                    let mut buf = Vec::new();
                    t.write_csv(&mut buf)?;
                    write_atomic(&self.cell_path(k), &buf)?;
                }
            }
            Ok(())
        })?;
        let executed = results.len();
        let failures: Vec<(CellKey, Error)> =
            results.into_iter().filter_map(|(k, r)| r.err().map(|e| (k, e))).collect();
        for k in grid.keys() {
            manifest.completed.insert(k.to_string(), self.cell_path(&k).is_file());
        }
        self.write_manifest(&manifest)?;
        Ok(StoreOutcome { failures, executed, skipped: present.len() })
    }

    fn clear(&self) -> Result<()> {
        let results = self.root.join("results");
        if results.exists() {
            fs::remove_dir_all(&results).map_err(|e| Error::io(format!("removing {}", results.display()), e))?;
        }
        Ok(())
    }

    /// Reads the grid and every cell; missing cells are an incomplete-grid error.
    pub fn load(&self) -> Result<(ExperimentGrid, ResultTable)> {
        let manifest = self.read_manifest()?.ok_or_else(|| {
            Error::io(
                format!("reading {}", self.manifest_path().display()),
                std::io::Error::new(std::io::ErrorKind::NotFound, "no manifest"),
            )
        })?;
        let grid = manifest.grid;
        if grid.config_hash() != manifest.config_hash {
            return Err(Error::StaleResults {
                dir: self.root.clone(),
                stored: manifest.config_hash,
                current: grid.config_hash(),
            });
        }
        let mut table = ResultTable::new();
        let mut missing = Vec::new();
        for k in grid.keys() {
            let path = self.cell_path(&k);
            match fs::File::open(&path) {
                Ok(f) => {
                    table.insert(k, Trajectory::read_csv(f, &path.display().to_string())?);
                }
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => missing.push(k.to_string()),
                Err(e) => return Err(Error::io(format!("opening {}", path.display()), e)),
            }
        }
        if !missing.is_empty() {
            return Err(Error::IncompleteGrid(missing));
        }
        Ok((grid, table))
    }
}
