//! End-to-end acceptance checks. Each test prints one PASS/FAIL line to
//! stderr (uncaptured) with the measured numbers, then asserts unless the
//! criterion is soft.

mod common;

use std::collections::BTreeSet;
use std::io::Write as _;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use thermoforge_core::enumeration::{
    count_multi_split, count_single_split, enumerate_junction_placements, enumerate_single_split, enumerate_trees,
    generate_level_graphs, SubEnumerator,
};
use thermoforge_core::harness::{
    evaluate_population, generate_population, rank, run_study, run_study_in_memory, Evaluation, RankedPopulation,
    StudyOutcome, StudySpec,
};
use thermoforge_core::nlp::{derivative_check, hessian_check, Nlp};
use thermoforge_core::oloc::{evaluate_endurance, formulate, OlocOptions, OlocSolution, Scheme, Transcription};
use thermoforge_core::spatial::{build_supernode_tree, select_cluster_count, ClusterOptions, DeviceLayout, DEFAULT_RESTARTS};
use thermoforge_core::thermal::{simulate, FlowSchedule, LoadSchedule, PhysicsParams, SimOptions, ThermalModel};
use thermoforge_core::ConfigGraph;

use common::physics::{energy_audit, internal_advection_power, rhs_vs_node_balance, single_device_vs_expm};

struct Criterion {
    id: u32,
    title: &'static str,
    soft: bool,
    started: Instant,
    checks: Vec<(String, bool)>,
}

impl Criterion {
    fn new(id: u32, title: &'static str) -> Self {
        Self { id, title, soft: false, started: Instant::now(), checks: Vec::new() }
    }

    fn soft(mut self) -> Self {
        self.soft = true;
        self
    }

    fn check(&mut self, what: impl Into<String>, ok: bool) {
        self.checks.push((what.into(), ok));
    }

    fn finish(mut self, budget: Duration) {
        let spent = self.started.elapsed();
        self.check(format!("runtime {:.2} s <= {} s", spent.as_secs_f64(), budget.as_secs()), spent <= budget);
        let ok = self.checks.iter().all(|(_, ok)| *ok);
        let verdict = match (ok, self.soft) {
            (true, _) => "PASS",
            (false, false) => "FAIL",
            (false, true) => "FAIL (soft, not gated)",
        };
        let mut text = format!("criterion {} {}: {verdict}\n", self.id, self.title);
        for (what, ok) in &self.checks {
            text += &format!("    [{}] {what}\n", if *ok { "ok" } else { "x" });
        }
        // Bypasses the test harness capture so the line shows on every run.
        std::io::stderr().write_all(text.as_bytes()).unwrap();
        if !self.soft {
            let failed: Vec<&str> = self.checks.iter().filter(|(_, ok)| !ok).map(|(w, _)| w.as_str()).collect();
            assert!(failed.is_empty(), "criterion {} failed: {failed:?}", self.id);
        }
    }
}

fn scenario(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn load_spec(name: &str) -> StudySpec {
    StudySpec::from_file(&scenario(name)).unwrap()
}

fn model(notation: &str, kw: &[f64]) -> (ThermalModel, LoadSchedule) {
    let g = ConfigGraph::parse(notation).unwrap();
    let m = common::model(&g, &kw.iter().map(|k| k * 1000.0).collect::<Vec<_>>(), &PhysicsParams::default());
    let ls = LoadSchedule::constant(m.graph.loads.clone());
    (m, ls)
}

fn factorial(n: u64) -> u64 {
    (1..=n).product()
}

#[test]
fn criterion_1_counting_identities() {
    let mut c = Criterion::new(1, "counting identities");
    let three = enumerate_single_split(3).unwrap();
    let distinct: BTreeSet<String> = three.notations().into_iter().collect();
    c.check(format!("count_single_split(3) = {}", count_single_split(3)), count_single_split(3) == 13u32.into());
    c.check(format!("enumerate_single_split(3): {} distinct graphs", distinct.len()), three.len() == 13 && distinct.len() == 13);
    for n in 1..=6 {
        let single = enumerate_single_split(n).unwrap().len();
        let placed = enumerate_junction_placements(n, 1).unwrap().len();
        c.check(
            format!("n = {n}: {single} single split, {placed} with one placed junction"),
            count_single_split(n) == single.into() && count_multi_split(n - 1, 1) * n == placed.into(),
        );
    }
    let same = (1..=8).all(|n| count_multi_split(n, 1) == count_single_split(n));
    c.check("count_multi_split(n, 1) = count_single_split(n) for n <= 8", same);
    for n in 1..=7 {
        let got = enumerate_trees(n).unwrap().len() as u64;
        c.check(format!("n = {n}: {got} trees, (n-1)! = {}", factorial(n as u64 - 1)), got == factorial(n as u64 - 1));
    }
    c.finish(Duration::from_secs(5));
}

#[test]
fn criterion_2_spatial_pipeline() {
    let mut c = Criterion::new(2, "spatial pipeline");
    let layout: DeviceLayout = serde_json::from_str(&std::fs::read_to_string(scenario("layout_six.json")).unwrap()).unwrap();
    let k = select_cluster_count(&layout.positions, DEFAULT_RESTARTS);
    c.check(format!("selected K = {k}"), k == 2);
    let tree = build_supernode_tree(&layout, 1, ClusterOptions::default()).unwrap();
    let groups: BTreeSet<Vec<u32>> = tree.levels[1]
        .iter()
        .map(|sn| {
            let mut m = sn.members.clone();
            m.sort_unstable();
            m
        })
        .collect();
    let want: BTreeSet<Vec<u32>> = [vec![1, 2, 3], vec![4, 5, 6]].into_iter().collect();
    c.check(format!("groups {groups:?}"), groups == want);
    let pop = generate_level_graphs(&tree, 1, SubEnumerator::SingleSplit).unwrap();
    let distinct: BTreeSet<String> = pop.notations().into_iter().collect();
    c.check(format!("{} level graphs, {} distinct", pop.len(), distinct.len()), pop.len() == 9 && distinct.len() == 9);
    c.finish(Duration::from_secs(5));
}

#[test]
fn criterion_3_physics() {
    let mut c = Criterion::new(3, "physics correctness");
    let e = rhs_vs_node_balance(2024, 200);
    c.check(format!("matrix rhs vs node balance, 200 instances: {e:.2e} relative <= 1e-12"), e <= 1e-12);
    let e = internal_advection_power(7, 200);
    c.check(format!("internal advection power: {e:.2e} W <= 1e-9"), e <= 1e-9);
    let e = energy_audit(99, 200);
    c.check(format!("energy audit: {e:.2e} W <= 1e-9"), e <= 1e-9);
    let e = single_device_vs_expm();
    c.check(format!("single device vs matrix exponential: {e:.2e} relative <= 1e-8"), e <= 1e-8);
    c.finish(Duration::from_secs(60));
}

fn event_time(m: &ThermalModel, ls: &LoadSchedule) -> f64 {
    let opts = SimOptions { tol: 1e-12, bounds: Some(vec![45.0; m.n_states()]), ..Default::default() };
    let sim = simulate(m, &m.graph.initial_temperatures(), &FlowSchedule::Constant(vec![]), ls, 1e4, &opts).unwrap();
    sim.event.expect("bound reached").0
}

#[test]
fn criterion_4_oloc() {
    let mut c = Criterion::new(4, "optimal control");
    let opts = OlocOptions::default();

    let mut worst_grad = 0.0f64;
    let mut worst_hess = 0.0f64;
    for (s, kw) in [("0 (1)", vec![5.0]), ("0 (1) (2,3)", vec![5.0, 3.0, 4.0]), ("0 (1 (2) (3)) (4)", vec![4.0; 4])] {
        let (m, ls) = model(s, &kw);
        let p = formulate(&m, &ls, &opts).unwrap();
        for scheme in [Scheme::Trapezoidal, Scheme::HermiteSimpson] {
            let mut tr = Transcription::new(&p, 4, scheme, 20.0);
            let mut x: Vec<f64> = (0..tr.n_vars()).map(|i| 0.3 + 0.4 * ((i as f64) * 0.61).sin()).collect();
            x[tr.tf_index()] = 0.8;
            tr.set_initial_guess(x.clone());
            worst_grad = worst_grad.max(derivative_check(&tr, &x, 1e-6));
            let lam: Vec<f64> = (0..tr.n_cons()).map(|i| ((i as f64) * 1.7).cos()).collect();
            worst_hess = worst_hess.max(hessian_check(&tr, &x, &lam, 1e-5));
        }
    }
    c.check(format!("gradient and Jacobian vs central differences: {worst_grad:.2e} <= 1e-5"), worst_grad <= 1e-5);
    c.check(format!("Hessian vs central differences: {worst_hess:.2e} <= 1e-5"), worst_hess <= 1e-5);

    let mut solved: Vec<OlocSolution> = Vec::new();
    for (s, kw) in [("0 (1)", vec![12.0]), ("0 (1,2)", vec![6.0, 4.0]), ("0 (2,3,1)", vec![12.0, 4.0, 1.0])] {
        let (m, ls) = model(s, &kw);
        let te = event_time(&m, &ls);
        let sol = evaluate_endurance(&m, &ls, &opts).unwrap();
        let rel = (sol.t_end - te).abs() / te;
        c.check(format!("{s}: endurance {:.4} s vs event {te:.4} s, {:.3}% <= 0.5%", sol.t_end, 100.0 * rel), rel <= 0.005);
        solved.push(sol);
    }
    for (s, kw) in [("0 (1) (2,3)", vec![12.0, 4.0, 1.0]), ("0 (1 (2) (3))", vec![12.0, 4.0, 1.0]), ("0 (1) (2) (3)", vec![5.0, 7.0, 6.0])] {
        let (m, ls) = model(s, &kw);
        solved.push(evaluate_endurance(&m, &ls, &opts).unwrap());
    }
    for sol in &solved {
        c.check(format!("{}: {}", sol.config, sol.status), sol.is_accepted());
        c.check(
            format!("{}: re-simulated final temperatures within {:.3} K <= 0.5", sol.config, sol.resim_error),
            sol.resim_error <= 0.5,
        );
        c.check(
            format!("{}: penalty {:.2e} s < 1% of {:.3} s", sol.config, sol.penalty, sol.t_end),
            sol.penalty < 0.01 * sol.t_end,
        );
    }
    c.finish(Duration::from_secs(600));
}

fn t_end_of(outcome: &StudyOutcome, notation: &str) -> Option<f64> {
    outcome.ranking.entries.iter().find(|e| e.notation == notation).map(|e| e.t_end)
}

fn top_spread(outcome: &StudyOutcome) -> (String, f64) {
    let best = outcome.ranking.best();
    let ev = &outcome.evaluations.iter().find(|e| e.index == best.index).unwrap();
    (best.notation.clone(), ev.result.as_ref().unwrap().wall_arrival_spread)
}

#[test]
fn criterion_5_qualitative_behavior() {
    let mut c = Criterion::new(5, "qualitative behavior").soft();
    let three = run_study_in_memory(&load_spec("three_devices.json")).unwrap();
    let multi = "0 (1 (2) (3))";
    let m = t_end_of(&three, multi).unwrap_or(f64::NAN);
    let series = three
        .ranking
        .entries
        .iter()
        .filter(|e| ConfigGraph::parse(&e.notation).unwrap().is_single_split())
        .max_by(|a, b| a.t_end.total_cmp(&b.t_end))
        .unwrap();
    c.check(
        format!("{multi} at {m:.3} s outranks every single split (best {} at {:.3} s)", series.notation, series.t_end),
        m > series.t_end,
    );

    let uniform = run_study_in_memory(&load_spec("six_devices_uniform.json")).unwrap();
    let mixed = run_study_in_memory(&load_spec("six_devices_mixed.json")).unwrap();
    let (tu, tm) = (&uniform.ranking.best().notation, &mixed.ranking.best().notation);
    c.check(format!("top configuration changes with the loads: {tu} vs {tm}"), tu != tm);

    for (name, outcome) in [("three devices", &three), ("six uniform", &uniform), ("six mixed", &mixed)] {
        let (top, spread) = top_spread(outcome);
        c.check(format!("{name}: top {top} walls reach 45 C within {spread:.2} K <= 0.5"), spread <= 0.5);
    }
    c.finish(Duration::from_secs(600));
}

#[test]
fn criterion_6_seventeen_devices() {
    let mut c = Criterion::new(6, "seventeen-device study");
    let dir = tempfile::tempdir().unwrap();
    let mut spec = load_spec("seventeen_devices.json");
    spec.out_dir = Some(dir.path().to_path_buf());
    let started = Instant::now();
    let outcome = run_study(&spec).unwrap();
    let per_config = started.elapsed().as_secs_f64() / outcome.evaluations.len() as f64;
    let g = outcome.population.graphs[0].clone();
    c.check(
        format!("{} devices, {} junctions besides the tank", g.device_count(), g.split_nodes().iter().filter(|&&s| s != 0).count()),
        g.device_count() == 17 && g.split_nodes().iter().filter(|&&s| s != 0).count() == 3,
    );
    c.check(format!("{} ranked, {} failed", outcome.ranking.entries.len(), outcome.ranking.failures.len()), outcome.ranking.failures.is_empty());
    let best = outcome.ranking.best();
    c.check(format!("endurance {:.3} s, {}", best.t_end, best.status), best.t_end.is_finite() && best.t_end > 0.0);
    let files = ["population.json", "ranking.csv", "percentile.csv", "summary.txt", "config_000.csv", "config_000.json"];
    let missing: Vec<&str> = files.iter().copied().filter(|f| !dir.path().join(f).is_file()).collect();
    c.check(format!("reports written, missing {missing:?}"), missing.is_empty());
    c.check(format!("{per_config:.1} s per configuration <= 600"), per_config <= 600.0);
    c.finish(Duration::from_secs(900));
}

fn ranking_key(r: &RankedPopulation) -> Vec<(String, u64, String)> {
    r.entries.iter().map(|e| (e.notation.clone(), e.t_end.to_bits(), e.status.clone())).collect()
}

fn ranked_with(spec: &StudySpec, workers: usize) -> RankedPopulation {
    let pop = generate_population(spec).unwrap();
    let indices: Vec<usize> = (0..pop.len()).collect();
    let evals = evaluate_population(&pop, spec, &indices, workers).unwrap();
    rank(&evals.iter().map(Evaluation::scored).collect::<Vec<_>>()).unwrap()
}

#[test]
fn criterion_7_determinism() {
    let mut c = Criterion::new(7, "determinism");
    let spec = load_spec("three_devices.json");
    let serial = ranked_with(&spec, 1);
    let parallel = ranked_with(&spec, 4);
    c.check(
        format!("serial and 4-worker rankings of {} configurations identical", serial.entries.len()),
        ranking_key(&serial) == ranking_key(&parallel),
    );

    let spec = load_spec("six_devices_mixed.json");
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for (dir, workers) in [(&a, 1), (&b, 4)] {
        let mut s = spec.clone();
        s.out_dir = Some(dir.path().to_path_buf());
        s.workers = Some(workers);
        run_study(&s).unwrap();
    }
    let mut names: Vec<String> = std::fs::read_dir(a.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".csv"))
        .collect();
    names.sort();
    let differing: Vec<&String> = names
        .iter()
        .filter(|n| std::fs::read(a.path().join(n)).ok() != std::fs::read(b.path().join(n)).ok())
        .collect();
    c.check(format!("rerun CSV artifacts byte-identical ({} files, differing {differing:?})", names.len()), differing.is_empty() && !names.is_empty());
    c.finish(Duration::from_secs(600));
}
