//! Study runner: population, parallel endurance evaluation, ranking and
//! flat-file reports.

mod report;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use report::{report, ReportFiles};

use crate::config::ConfigGraph;
use crate::enumeration::{
    enumerate_junction_placements, enumerate_single_split, enumerate_trees, generate_level_graphs, GraphPopulation,
    Strategy, SubEnumerator,
};
use crate::error::{Error, Result};
use crate::oloc::{evaluate_endurance, OlocOptions, OlocSolution};
use crate::spatial::{build_supernode_tree, ClusterOptions, DeviceLayout};
use crate::thermal::{build_physics_graph, LoadSchedule, PhysicsParams, ThermalModel};

/// Environment variable overriding the worker count of every study.
pub const WORKERS_ENV: &str = "THERMOFORGE_WORKERS";

/// Layout given inline or as a path to a JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LayoutSource {
    Inline(DeviceLayout),
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudySpec {
    pub name: String,
    pub layout: Option<LayoutSource>,
    /// Heat load per device label, kW. Falls back to the layout's loads.
    pub loads_kw: Vec<f64>,
    /// Population generator. Mutually exclusive with `configs`.
    pub strategy: Option<Strategy>,
    /// Explicit population in notation form.
    pub configs: Vec<String>,
    /// Clustering rounds for the spatial strategy.
    pub num_levels: usize,
    /// Junction count for the enumerated-junction strategy.
    pub junctions: usize,
    pub enumerator: SubEnumerator,
    /// Evaluate only this population index.
    pub config_num: Option<usize>,
    pub seed: u64,
    pub physics: PhysicsParams,
    pub oloc: OlocOptions,
    pub workers: Option<usize>,
    pub out_dir: Option<PathBuf>,
}

impl Default for StudySpec {
    fn default() -> Self {
        Self {
            name: "study".into(),
            layout: None,
            loads_kw: Vec::new(),
            strategy: None,
            configs: Vec::new(),
            num_levels: 1,
            junctions: 1,
            enumerator: SubEnumerator::default(),
            config_num: None,
            seed: 0,
            physics: PhysicsParams::default(),
            oloc: OlocOptions::default(),
            workers: None,
            out_dir: None,
        }
    }
}

impl StudySpec {
    /// Reads a spec. Relative layout and output paths are resolved against
    /// the spec's directory, and a layout file is loaded.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut spec: Self = serde_json::from_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(d) = &spec.out_dir {
            spec.out_dir = Some(base.join(d));
        }
        if let Some(LayoutSource::File(f)) = &spec.layout {
            let f = base.join(f);
            let text = std::fs::read_to_string(&f)
                .map_err(|e| Error::Validation(format!("layout file {}: {e}", f.display())))?;
            spec.layout = Some(LayoutSource::Inline(serde_json::from_str(&text)?));
        }
        spec.validate()?;
        Ok(spec)
    }

    fn layout(&self) -> Result<Option<&DeviceLayout>> {
        match &self.layout {
            None => Ok(None),
            Some(LayoutSource::Inline(l)) => Ok(Some(l)),
            Some(LayoutSource::File(f)) => {
                Err(Error::Validation(format!("layout file {} was not loaded", f.display())))
            }
        }
    }

    /// Loads in kW, one per device label `1..=n`.
    pub fn loads(&self) -> Result<Vec<f64>> {
        if !self.loads_kw.is_empty() {
            return Ok(self.loads_kw.clone());
        }
        match self.layout()? {
            Some(l) if !l.heat_loads_kw.is_empty() => Ok(l.heat_loads_kw.clone()),
            _ => Err(Error::Validation("no heat loads given".into())),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.physics.validate()?;
        self.oloc.validate()?;
        let loads = self.loads()?;
        if loads.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::Validation("heat loads must be finite and nonnegative".into()));
        }
        if let Some(l) = self.layout()? {
            l.validate()?;
            if l.positions.len() != loads.len() {
                return Err(Error::Validation(format!(
                    "{} loads for {} devices in the layout",
                    loads.len(),
                    l.positions.len()
                )));
            }
        }
        match (self.strategy, self.configs.is_empty()) {
            (Some(_), false) => Err(Error::Validation("give either a strategy or explicit configs, not both".into())),
            (None, true) => Err(Error::Validation("give a strategy or explicit configs".into())),
            (Some(Strategy::SpatialJunctions), _) if self.layout.is_none() => {
                Err(Error::Validation("the spatial strategy needs a layout".into()))
            }
            _ => Ok(()),
        }
        .and_then(|_| match self.workers {
            Some(0) => Err(Error::Validation("workers must be at least 1".into())),
            _ => Ok(()),
        })
    }

    /// Worker count after the environment override.
    pub fn effective_workers(&self) -> usize {
        std::env::var(WORKERS_ENV)
            .ok()
            .and_then(|v| v.parse().ok())
            .filter(|w: &usize| *w > 0)
            .or(self.workers)
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
    }
}

/// Builds the population a spec describes, before `config_num` selection.
pub fn generate_population(spec: &StudySpec) -> Result<GraphPopulation> {
    let n = spec.loads()?.len();
    let pop = match spec.strategy {
        None => {
            let graphs = spec.configs.iter().map(|s| ConfigGraph::parse(s)).collect::<Result<Vec<_>>>()?;
            GraphPopulation::new(graphs, "explicit")
        }
        Some(Strategy::SingleSplit) => enumerate_single_split(n)?,
        Some(Strategy::Trees) => enumerate_trees(n)?,
        Some(Strategy::EnumeratedJunctions) => enumerate_junction_placements(n, spec.junctions)?,
        Some(Strategy::SpatialJunctions) => {
            let layout = spec.layout()?.ok_or_else(|| Error::Validation("the spatial strategy needs a layout".into()))?;
            let opts = ClusterOptions { seed: spec.seed, ..Default::default() };
            let tree = build_supernode_tree(layout, spec.num_levels, opts)?;
            generate_level_graphs(&tree, tree.depth(), spec.enumerator)?
        }
    };
    for g in &pop.graphs {
        if let Some(l) = g.labels().find(|&l| l == 0 || l as usize > n) {
            return Err(Error::MissingLoad(l));
        }
    }
    Ok(pop)
}

/// Outcome of one configuration.
#[derive(Debug, Clone)]
pub struct Evaluation {
    /// Position in the population.
    pub index: usize,
    pub notation: String,
    pub result: std::result::Result<OlocSolution, String>,
}

impl Evaluation {
    pub fn scored(&self) -> Scored {
        let outcome = match &self.result {
            Ok(s) if s.is_accepted() => Ok(Scores {
                t_end: s.t_end,
                objective: s.objective,
                penalty: s.penalty,
                status: s.status.to_string(),
            }),
            Ok(s) => Err(s.status.to_string()),
            Err(e) => Err(e.clone()),
        };
        Scored { index: self.index, notation: self.notation.clone(), outcome }
    }
}

/// Ranking input: scores, or the reason there are none.
#[derive(Debug, Clone, PartialEq)]
pub struct Scored {
    pub index: usize,
    pub notation: String,
    pub outcome: std::result::Result<Scores, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scores {
    pub t_end: f64,
    pub objective: f64,
    pub penalty: f64,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedEntry {
    pub rank: usize,
    pub index: usize,
    pub notation: String,
    pub t_end: f64,
    pub objective: f64,
    pub penalty: f64,
    pub status: String,
    pub percentile: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    pub index: usize,
    pub notation: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedPopulation {
    pub entries: Vec<RankedEntry>,
    pub failures: Vec<Failure>,
}

impl RankedPopulation {
    pub fn best(&self) -> &RankedEntry {
        &self.entries[0]
    }

    pub fn worst(&self) -> &RankedEntry {
        self.entries.last().expect("ranking is never empty")
    }
}

/// Endurances closer than this, relative, count as equal: solves converge
/// to a tolerance, so mirror-image configurations differ in the last digits.
pub const TIE_RTOL: f64 = 1e-6;

fn tied(a: f64, b: f64) -> bool {
    (a - b).abs() <= TIE_RTOL * a.abs().max(b.abs())
}

/// Groups of tied endurances, as index lists, in descending order. A group
/// collects everything within `TIE_RTOL` of its largest member.
fn tie_groups(t_end: &[f64]) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..t_end.len()).collect();
    order.sort_by(|&a, &b| t_end[b].total_cmp(&t_end[a]));
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for i in order {
        match groups.last_mut() {
            Some(g) if tied(t_end[g[0]], t_end[i]) => g.push(i),
            _ => groups.push(vec![i]),
        }
    }
    groups
}

/// `100 * #{strictly lower} / (n - 1)`, zero for a single entry. Values
/// within `TIE_RTOL` of each other are equal.
pub fn percentiles(t_end: &[f64]) -> Vec<f64> {
    let n = t_end.len();
    let mut out = vec![0.0; n];
    if n < 2 {
        return out;
    }
    let mut below = n;
    for g in tie_groups(t_end) {
        below -= g.len();
        for i in g {
            out[i] = 100.0 * below as f64 / (n - 1) as f64;
        }
    }
    out
}

/// Sorts successes by descending endurance, ties by notation, and lists
/// failures apart.
pub fn rank(scored: &[Scored]) -> Result<RankedPopulation> {
    let mut ok = Vec::new();
    let mut failures = Vec::new();
    for e in scored {
        match &e.outcome {
            Ok(s) => ok.push((e.index, e.notation.clone(), s.clone())),
            Err(reason) => {
                failures.push(Failure { index: e.index, notation: e.notation.clone(), reason: reason.clone() })
            }
        }
    }
    if ok.is_empty() {
        return Err(Error::EmptyRanking);
    }
    let t_end: Vec<f64> = ok.iter().map(|e| e.2.t_end).collect();
    let pct = percentiles(&t_end);
    let mut order = Vec::with_capacity(ok.len());
    for mut g in tie_groups(&t_end) {
        g.sort_by(|&a, &b| ok[a].1.cmp(&ok[b].1));
        order.extend(g);
    }
    let pct: Vec<f64> = order.iter().map(|&i| pct[i]).collect();
    let mut slots: Vec<Option<_>> = ok.into_iter().map(Some).collect();
    let ok: Vec<_> = order.iter().map(|&i| slots[i].take().expect("each index once")).collect();
    let entries = ok
        .into_iter()
        .zip(pct)
        .enumerate()
        .map(|(i, ((index, notation, s), percentile))| RankedEntry {
            rank: i + 1,
            index,
            notation,
            t_end: s.t_end,
            objective: s.objective,
            penalty: s.penalty,
            status: s.status,
            percentile,
        })
        .collect();
    failures.sort_by_key(|f| f.index);
    Ok(RankedPopulation { entries, failures })
}

/// Assembles the thermal model of one configuration, loads in kW by label.
pub fn build_model(graph: &ConfigGraph, loads_kw: &[f64], params: &PhysicsParams) -> Result<ThermalModel> {
    let loads: BTreeMap<u32, f64> = graph
        .labels()
        .map(|l| loads_kw.get(l as usize - 1).map(|p| (l, p * 1000.0)).ok_or(Error::MissingLoad(l)))
        .collect::<Result<_>>()?;
    ThermalModel::assemble(build_physics_graph(graph, &loads, params)?)
}

fn evaluate_one(index: usize, graph: &ConfigGraph, spec: &StudySpec, loads_kw: &[f64]) -> Evaluation {
    let notation = graph.to_notation();
    let result = build_model(graph, loads_kw, &spec.physics)
        .and_then(|m| {
            let loads = LoadSchedule::constant(m.graph.loads.clone());
            evaluate_endurance(&m, &loads, &spec.oloc)
        })
        .map_err(|e| e.to_string());
    Evaluation { index, notation, result }
}

/// Everything a study produced.
#[derive(Debug, Clone)]
pub struct StudyOutcome {
    pub population: GraphPopulation,
    pub evaluations: Vec<Evaluation>,
    pub ranking: RankedPopulation,
    pub workers: usize,
}

/// Evaluates every configuration of the population on a bounded pool.
///
/// Results come back in population order whatever the worker count.
pub fn evaluate_population(
    population: &GraphPopulation,
    spec: &StudySpec,
    indices: &[usize],
    workers: usize,
) -> Result<Vec<Evaluation>> {
    let loads = spec.loads()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Validation(format!("worker pool: {e}")))?;
    Ok(pool.install(|| {
        indices.par_iter().map(|&i| evaluate_one(i, &population.graphs[i], spec, &loads)).collect()
    }))
}

/// Runs the study without writing anything.
pub fn run_study_in_memory(spec: &StudySpec) -> Result<StudyOutcome> {
    spec.validate()?;
    let population = generate_population(spec)?;
    if population.is_empty() {
        return Err(Error::Validation("the strategy produced no configurations".into()));
    }
    let indices: Vec<usize> = match spec.config_num {
        Some(i) if i >= population.len() => {
            return Err(Error::Validation(format!(
                "config_num {i} out of range for a population of {}",
                population.len()
            )))
        }
        Some(i) => vec![i],
        None => (0..population.len()).collect(),
    };
    let workers = spec.effective_workers();
    let evaluations = evaluate_population(&population, spec, &indices, workers)?;
    let ranking = rank(&evaluations.iter().map(Evaluation::scored).collect::<Vec<_>>())?;
    Ok(StudyOutcome { population, evaluations, ranking, workers })
}

/// Runs the study and writes its reports to `out_dir` (default `study_out`).
pub fn run_study(spec: &StudySpec) -> Result<StudyOutcome> {
    let outcome = run_study_in_memory(spec)?;
    let dir = spec.out_dir.clone().unwrap_or_else(|| PathBuf::from("study_out"));
    report(&outcome, &dir)?;
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scored(i: usize, s: &str, t: Option<f64>) -> Scored {
        let outcome = match t {
            Some(t) => Ok(Scores { t_end: t, objective: t, penalty: 0.0, status: "optimal".into() }),
            None => Err("diverged".into()),
        };
        Scored { index: i, notation: s.into(), outcome }
    }

    #[test]
    fn three_point_percentiles() {
        assert_eq!(percentiles(&[10.0, 20.0, 30.0]), vec![0.0, 50.0, 100.0]);
        assert_eq!(percentiles(&[7.0; 4]), vec![0.0; 4]);
        assert_eq!(percentiles(&[3.0]), vec![0.0]);
        assert_eq!(percentiles(&[5.0, 5.0 * (1.0 + 1e-9), 4.0]), vec![50.0, 50.0, 0.0]);
    }

    #[test]
    fn ranking_sorts_and_separates_failures() {
        let evals = vec![
            scored(0, "0 (1)", Some(10.0)),
            scored(1, "0 (2)", None),
            scored(2, "0 (1,2)", Some(30.0)),
            scored(3, "0 (1) (2)", Some(10.0)),
        ];
        let r = rank(&evals).unwrap();
        let order: Vec<&str> = r.entries.iter().map(|e| e.notation.as_str()).collect();
        assert_eq!(order, ["0 (1,2)", "0 (1)", "0 (1) (2)"]);
        assert_eq!(r.entries.iter().map(|e| e.percentile).collect::<Vec<_>>(), [100.0, 0.0, 0.0]);
        assert_eq!(r.entries.iter().map(|e| e.rank).collect::<Vec<_>>(), [1, 2, 3]);
        assert_eq!(r.failures.len(), 1);
        assert_eq!(r.failures[0].reason, "diverged");
        assert!(matches!(rank(&evals[1..2]), Err(Error::EmptyRanking)));
    }

    #[test]
    fn spec_needs_one_population_source() {
        let base = StudySpec { loads_kw: vec![1.0, 2.0], ..Default::default() };
        assert!(base.validate().is_err());
        let both = StudySpec { strategy: Some(Strategy::SingleSplit), configs: vec!["0 (1,2)".into()], ..base.clone() };
        assert!(both.validate().is_err());
        let spatial = StudySpec { strategy: Some(Strategy::SpatialJunctions), ..base.clone() };
        assert!(spatial.validate().unwrap_err().to_string().contains("layout"));
        let ok = StudySpec { strategy: Some(Strategy::SingleSplit), ..base };
        ok.validate().unwrap();
        assert_eq!(generate_population(&ok).unwrap().len(), 3);
    }

    #[test]
    fn spec_parses_with_defaults() {
        let spec: StudySpec = serde_json::from_str(
            r#"{"loads_kw": [5, 5], "configs": ["0 (1) (2)"], "oloc": {"segments": 20}, "physics": {"ha_cphx": 800}}"#,
        )
        .unwrap();
        assert_eq!(spec.oloc.segments, 20);
        assert_eq!(spec.oloc.t_max, 45.0);
        assert_eq!(spec.physics.ha_cphx, 800.0);
        assert_eq!(spec.num_levels, 1);
        assert!(serde_json::from_str::<StudySpec>(r#"{"loadz": []}"#).is_err());
    }

    #[test]
    fn missing_load_is_reported() {
        let spec = StudySpec { loads_kw: vec![1.0], configs: vec!["0 (1,2)".into()], ..Default::default() };
        assert!(matches!(generate_population(&spec), Err(Error::MissingLoad(2))));
    }

    #[test]
    fn single_device_study_ranks_one_entry() {
        let spec = StudySpec { loads_kw: vec![12.0], strategy: Some(Strategy::SingleSplit), workers: Some(1), ..Default::default() };
        let out = run_study_in_memory(&spec).unwrap();
        assert_eq!(out.ranking.entries.len(), 1);
        assert_eq!(out.ranking.best().notation, "0 (1)");
        assert_eq!(out.ranking.best().percentile, 0.0);
    }
}
