use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use thermoforge_core::enumeration::{
    count_multi_split, count_single_split, enumerate_junction_placements_capped, enumerate_single_split_capped,
    enumerate_trees_with, generate_level_graphs, GraphPopulation, Strategy, SubEnumerator, COUNT_CAP, GENERATE_CAP,
};
use thermoforge_core::harness::{build_model, run_study, StudySpec};
use thermoforge_core::oloc::{evaluate_endurance, OlocOptions};
use thermoforge_core::spatial::{build_supernode_tree, ClusterOptions, DeviceLayout};
use thermoforge_core::thermal::{LoadSchedule, PhysicsParams};
use thermoforge_core::ConfigGraph;

#[derive(Parser)]
#[command(name = "thermoforge", version, about = "Enumerate, model and rank multi-split cooling architectures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a study: population, endurance of every configuration, ranking, reports.
    Run {
        #[arg(long)]
        spec: PathBuf,
        /// Output directory, overriding the spec.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker count, overriding the spec (the environment still wins).
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Count configurations without generating them.
    Count {
        #[arg(long)]
        nodes: usize,
        /// Junction count; without it, count single-split configurations.
        #[arg(long)]
        junctions: Option<usize>,
        #[arg(long, default_value_t = COUNT_CAP)]
        cap: usize,
    },
    /// Generate a population and write it as a JSON array of notations.
    Enumerate {
        #[arg(long)]
        nodes: usize,
        /// single_split, enumerated_junctions or trees.
        #[arg(long, default_value = "single_split")]
        strategy: Strategy,
        #[arg(long, default_value_t = 1)]
        junctions: usize,
        #[arg(long, default_value_t = GENERATE_CAP)]
        cap: usize,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cluster a device layout into super-nodes and list the level graphs.
    Cluster {
        #[arg(long)]
        layout: PathBuf,
        #[arg(long, default_value_t = 1)]
        levels: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "single-split")]
        enumerator: EnumeratorArg,
    },
    /// Solve the endurance problem of one configuration.
    Solve {
        /// Configuration in notation form, e.g. "0 (1,2) (3)".
        #[arg(long)]
        config: String,
        /// Heat loads in kW by device label, comma separated.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        loads: Vec<f64>,
        /// Solver options JSON.
        #[arg(long)]
        options: Option<PathBuf>,
        /// Physical parameters JSON.
        #[arg(long)]
        physics: Option<PathBuf>,
        /// Write the trajectories here.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum EnumeratorArg {
    SingleSplit,
    IncreasingTrees,
    Parallel,
}

impl From<EnumeratorArg> for SubEnumerator {
    fn from(e: EnumeratorArg) -> Self {
        match e {
            EnumeratorArg::SingleSplit => SubEnumerator::SingleSplit,
            EnumeratorArg::IncreasingTrees => SubEnumerator::IncreasingTrees,
            EnumeratorArg::Parallel => SubEnumerator::Parallel,
        }
    }
}

fn read_layout(path: &PathBuf) -> Result<DeviceLayout> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run { spec, out, workers } => {
            let mut s = StudySpec::from_file(&spec).with_context(|| format!("loading {}", spec.display()))?;
            if out.is_some() {
                s.out_dir = out;
            }
            if workers.is_some() {
                s.workers = workers;
            }
            let outcome = run_study(&s)?;
            let dir = s.out_dir.unwrap_or_else(|| PathBuf::from("study_out"));
            eprintln!("{} configurations on {} workers, reports in {}", outcome.evaluations.len(), outcome.workers, dir.display());
            print!("{}", fs::read_to_string(dir.join("summary.txt"))?);
        }
        Command::Count { nodes, junctions, cap } => {
            if nodes > cap {
                bail!("n = {nodes} exceeds the count cap of {cap} (raise it with --cap)");
            }
            let c = match junctions {
                None => count_single_split(nodes),
                Some(j) => count_multi_split(nodes, j),
            };
            println!("{c}");
        }
        Command::Enumerate { nodes, strategy, junctions, cap, out } => {
            let pop = match strategy {
                Strategy::SingleSplit => enumerate_single_split_capped(nodes, cap)?,
                Strategy::Trees => enumerate_trees_with(nodes, false, cap)?,
                Strategy::EnumeratedJunctions => enumerate_junction_placements_capped(nodes, junctions, cap)?,
                Strategy::SpatialJunctions => bail!("the spatial strategy needs a layout; use `cluster`"),
            };
            emit(&pop, out)?;
        }
        Command::Cluster { layout, levels, seed, enumerator } => {
            let layout = read_layout(&layout)?;
            let tree = build_supernode_tree(&layout, levels, ClusterOptions { seed, ..Default::default() })?;
            for (depth, level) in tree.levels.iter().enumerate().skip(1) {
                for sn in level {
                    eprintln!(
                        "level {depth}: junction {} members {:?} via {:?}",
                        sn.junction.unwrap_or(0),
                        sn.members,
                        sn.parent_chain
                    );
                }
            }
            let pop = generate_level_graphs(&tree, tree.depth(), enumerator.into())?;
            emit(&pop, None)?;
        }
        Command::Solve { config, loads, options, physics, csv } => {
            let graph = ConfigGraph::parse(&config)?;
            let options: OlocOptions = match options {
                Some(p) => OlocOptions::from_json(&fs::read_to_string(&p)?)?,
                None => OlocOptions::default(),
            };
            let params: PhysicsParams = match physics {
                Some(p) => PhysicsParams::from_json(&fs::read_to_string(&p)?)?,
                None => PhysicsParams::default(),
            };
            let n = graph.labels().max().unwrap_or(0) as usize;
            if loads.len() < n {
                bail!("{} loads given, the configuration needs one per label up to {n}", loads.len());
            }
            let model = build_model(&graph, &loads, &params)?;
            let schedule = LoadSchedule::constant(model.graph.loads.clone());
            let sol = evaluate_endurance(&model, &schedule, &options)?;
            if let Some(path) = csv {
                fs::write(&path, sol.to_csv()).with_context(|| format!("writing {}", path.display()))?;
            }
            println!("{}", serde_json::to_string_pretty(&sol.summary_json())?);
        }
    }
    Ok(())
}

fn emit(pop: &GraphPopulation, out: Option<PathBuf>) -> Result<()> {
    eprintln!("{} configurations ({})", pop.len(), pop.provenance);
    let text = pop.to_json() + "\n";
    match out {
        Some(p) => fs::write(&p, text).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}
