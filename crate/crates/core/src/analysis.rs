//! Average-of-residuals surfaces, seed variability and the median split used
//! to flag unstable cells.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::decision::DecisionModel;
use crate::error::{Error, Result};
use crate::sweep::{CellKey, ExperimentGrid, ResultTable};

/// A per-day `mean_q_h` series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Curve(pub Vec<f64>);

impl Curve {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

fn aligned(a: &Curve, b: &Curve) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Alignment { left: a.len(), right: b.len() });
    }
    Ok(())
}

pub fn mean_curve(curves: &[&Curve]) -> Result<Curve> {
    let first = curves.first().ok_or_else(|| Error::InsufficientData("mean of no curves".into()))?;
    let mut sum = vec![0.0; first.len()];
    for c in curves {
        aligned(first, c)?;
        for (s, v) in sum.iter_mut().zip(&c.0) {
            *s += v;
        }
    }
    let n = curves.len() as f64;
    Ok(Curve(sum.into_iter().map(|s| s / n).collect()))
}

/// Time-mean of `selected − reference`.
pub fn average_residual(selected: &Curve, reference: &Curve) -> Result<f64> {
    aligned(selected, reference)?;
    if selected.is_empty() {
        return Err(Error::InsufficientData("empty curves".into()));
    }
    let sum: f64 = selected.0.iter().zip(&reference.0).map(|(a, b)| a - b).sum();
    Ok(sum / selected.len() as f64)
}

/// How the reference curve of each cell is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArPolicy {
    /// Homogeneous-threshold models only; a cell's reference is that threshold's
    /// mean over every population and seed.
    PerThresholdAcrossPopulations,
    /// Every model; a cell's reference is that model's mean over every
    /// population and seed.
    PerModelAcrossSeeds,
}

impl ArPolicy {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "per-threshold-across-populations" => Some(Self::PerThresholdAcrossPopulations),
            "per-model-across-seeds" => Some(Self::PerModelAcrossSeeds),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::PerThresholdAcrossPopulations => "per-threshold-across-populations",
            Self::PerModelAcrossSeeds => "per-model-across-seeds",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Flag {
    Significant,
    Minor,
}

impl Flag {
    pub fn name(self) -> &'static str {
        match self {
            Flag::Significant => "significant",
            Flag::Minor => "minor",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArCell {
    pub model_or_threshold: String,
    pub population: usize,
    pub ar: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArGrid {
    pub policy: ArPolicy,
    pub cells: Vec<ArCell>,
}

fn curve_of(table: &ResultTable, key: &CellKey) -> Option<Curve> {
    table.get(key).map(|t| Curve(t.mean_q_h()))
}

/// Seed-mean curve of every `(model, population)` cell for `models`.
fn cell_curves(
    table: &ResultTable,
    grid: &ExperimentGrid,
    models: &[&str],
) -> Result<BTreeMap<(String, usize), (Curve, Vec<Curve>)>> {
    let mut missing = Vec::new();
    let mut out = BTreeMap::new();
    for &m in models {
        for &population in &grid.populations {
            let mut runs = Vec::new();
            for &seed in &grid.seeds {
                let key = CellKey { model: m.to_string(), population, seed };
                match curve_of(table, &key) {
                    Some(c) => runs.push(c),
                    None => missing.push(key.to_string()),
                }
            }
            if missing.is_empty() {
                let mean = mean_curve(&runs.iter().collect::<Vec<_>>())?;
                out.insert((m.to_string(), population), (mean, runs));
            }
        }
    }
    if !missing.is_empty() {
        return Err(Error::IncompleteGrid(missing));
    }
    Ok(out)
}

/// One AR value per `(model, population)` cell under `policy`. Cells are listed
/// in grid order.
pub fn ar_grid(table: &ResultTable, grid: &ExperimentGrid, policy: ArPolicy) -> Result<ArGrid> {
    let models: Vec<&str> = grid
        .models
        .iter()
        .filter(|m| match policy {
            ArPolicy::PerThresholdAcrossPopulations => matches!(m.model, DecisionModel::ThresholdHomog { .. }),
            ArPolicy::PerModelAcrossSeeds => true,
        })
        .map(|m| m.name.as_str())
        .collect();
    if models.is_empty() {
        return Err(Error::InsufficientData(format!("no models in the grid fit the {} policy", policy.name())));
    }
    let curves = cell_curves(table, grid, &models)?;
    let mut cells = Vec::new();
    for &m in &models {
        let runs: Vec<&Curve> = grid
            .populations
            .iter()
            .flat_map(|&p| curves[&(m.to_string(), p)].1.iter())
            .collect();
        let reference = mean_curve(&runs)?;
        for &population in &grid.populations {
            let selected = &curves[&(m.to_string(), population)].0;
            cells.push(ArCell { model_or_threshold: m.to_string(), population, ar: average_residual(selected, &reference)? });
        }
    }
    Ok(ArGrid { policy, cells })
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// `Significant` where |AR| is strictly above the median |AR| of the grid.
pub fn ct_classify(grid: &ArGrid) -> Vec<Flag> {
    if grid.cells.is_empty() {
        return Vec::new();
    }
    let mut mags: Vec<f64> = grid.cells.iter().map(|c| c.ar.abs()).collect();
    mags.sort_by(f64::total_cmp);
    let m = median(&mags);
    grid.cells.iter().map(|c| if c.ar.abs() > m { Flag::Significant } else { Flag::Minor }).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variability {
    pub model: String,
    pub population: usize,
    pub std: Vec<f64>,
    pub max: f64,
}

/// Pointwise sample standard deviation of `mean_q_h` across seeds.
pub fn seed_variability(table: &ResultTable, grid: &ExperimentGrid, model: &str, population: usize) -> Result<Variability> {
    if grid.seeds.len() < 2 {
        return Err(Error::InsufficientData(format!("seed variability needs at least 2 seeds, grid has {}", grid.seeds.len())));
    }
    let curves = cell_curves(table, grid, &[model])?;
    let (mean, runs) = &curves[&(model.to_string(), population)];
    let n = runs.len() as f64;
    let std: Vec<f64> = (0..mean.len())
        .map(|t| {
            let ss: f64 = runs.iter().map(|c| (c.0[t] - mean.0[t]).powi(2)).sum();
            (ss / (n - 1.0)).sqrt()
        })
        .collect();
    let max = std.iter().copied().fold(0.0, f64::max);
    Ok(Variability { model: model.to_string(), population, std, max })
}

/// Variability of every `(model, population)` cell in grid order.
pub fn all_variability(table: &ResultTable, grid: &ExperimentGrid) -> Result<Vec<Variability>> {
    let mut v = Vec::new();
    for m in &grid.models {
        for &p in &grid.populations {
            v.push(seed_variability(table, grid, &m.name, p)?);
        }
    }
    Ok(v)
}

pub fn write_ar_csv<W: Write>(grid: &ArGrid, flags: &[Flag], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["model_or_threshold", "population", "ar", "flag"])?;
    for (c, f) in grid.cells.iter().zip(flags) {
        w.write_record([c.model_or_threshold.clone(), c.population.to_string(), c.ar.to_string(), f.name().into()])?;
    }
    w.flush().map_err(|e| Error::io("writing AR grid", e))?;
    Ok(())
}

pub fn write_ar_json<W: Write>(grid: &ArGrid, flags: &[Flag], writer: W) -> Result<()> {
    #[derive(Serialize)]
    struct Row<'a> {
        model_or_threshold: &'a str,
        population: usize,
        ar: f64,
        flag: Flag,
    }
    let rows: Vec<Row> = grid
        .cells
        .iter()
        .zip(flags)
        .map(|(c, &flag)| Row { model_or_threshold: &c.model_or_threshold, population: c.population, ar: c.ar, flag })
        .collect();
    serde_json::to_writer_pretty(writer, &rows)?;
    Ok(())
}

pub fn write_variability_csv<W: Write>(rows: &[Variability], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["model", "population", "t", "std"])?;
    for v in rows {
        for (t, s) in v.std.iter().enumerate() {
            w.write_record([v.model.clone(), v.population.to_string(), t.to_string(), s.to_string()])?;
        }
    }
    w.flush().map_err(|e| Error::io("writing variability", e))?;
    Ok(())
}

pub fn write_variability_json<W: Write>(rows: &[Variability], writer: W) -> Result<()> {
    #[derive(Serialize)]
    struct Row<'a> {
        model: &'a str,
        population: usize,
        t: usize,
        std: f64,
    }
    let flat: Vec<Row> = rows
        .iter()
        .flat_map(|v| v.std.iter().enumerate().map(move |(t, &std)| Row { model: &v.model, population: v.population, t, std }))
        .collect();
    serde_json::to_writer_pretty(writer, &flat)?;
    Ok(())
}

/// Markdown worksheet: one section per run of adjacent significant populations
/// within a model, with empty fields for the qualitative transition checks.
pub fn ct_report(grid: &ArGrid, flags: &[Flag]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# Critical transition worksheet\n");
    let _ = writeln!(out, "Reference policy: `{}`.", grid.policy.name());
    let sig = flags.iter().filter(|&&f| f == Flag::Significant).count();
    let _ = writeln!(out, "{sig} of {} cells have |AR| above the median.\n", grid.cells.len());

    let mut regions: Vec<(String, Vec<&ArCell>)> = Vec::new();
    let mut prev: Option<&str> = None;
    for (c, f) in grid.cells.iter().zip(flags) {
        if *f != Flag::Significant {
            prev = None;
            continue;
        }
        match (prev, regions.last_mut()) {
            (Some(m), Some(last)) if m == c.model_or_threshold => last.1.push(c),
            _ => regions.push((c.model_or_threshold.clone(), vec![c])),
        }
        prev = Some(&c.model_or_threshold);
    }
    if regions.is_empty() {
        let _ = writeln!(out, "No flagged regions.");
        return out;
    }
    for (i, (model, cells)) in regions.iter().enumerate() {
        let lo = cells.first().map_or(0, |c| c.population);
        let hi = cells.last().map_or(0, |c| c.population);
        let peak = cells.iter().map(|c| c.ar).fold(0.0_f64, |a, b| if b.abs() > a.abs() { b } else { a });
        let _ = writeln!(out, "## Region {}: `{model}`, populations {lo}-{hi}\n", i + 1);
        let _ = writeln!(out, "Cells: {}. Largest |AR|: {peak:.6}.\n", cells.len());
        for item in [
            "Abrupt shift: does the recovery curve change sharply under a small change in the parameter?",
            "Distinct regimes: are the curves on either side of the region qualitatively different?",
            "Loss of resilience: do perturbed runs take longer to settle?",
            "Sensitivity to noise: does seed-to-seed spread grow inside the region?",
            "Indicator, variance: does seed variability peak near the region?",
            "Indicator, slowing down: does day-to-day change slow before the shift?",
        ] {
            let _ = writeln!(out, "- [ ] {item}\n  Notes:");
        }
        let _ = writeln!(out);
    }
    out
}
