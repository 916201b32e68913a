use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::StudyOutcome;
use crate::error::Result;

/// Paths written by [`report`].
#[derive(Debug, Clone, Default)]
pub struct ReportFiles {
    pub population: PathBuf,
    pub ranking: PathBuf,
    pub percentile: PathBuf,
    pub failures: PathBuf,
    pub summary: PathBuf,
    pub trajectories: Vec<PathBuf>,
    pub solutions: Vec<PathBuf>,
}

fn csv_table(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(std::io::Error::other)?;
    for r in rows {
        w.write_record(&r).map_err(std::io::Error::other)?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("utf-8 input"))
}

fn write(path: &Path, text: &str) -> Result<PathBuf> {
    fs::write(path, text)?;
    Ok(path.to_path_buf())
}

/// Writes the artifacts of a study into `dir`, creating it if needed.
///
/// Reals are printed with a fixed number of digits so reruns are
/// byte-identical.
pub fn report(outcome: &StudyOutcome, dir: &Path) -> Result<ReportFiles> {
    fs::create_dir_all(dir)?;
    let r = &outcome.ranking;
    let mut files = ReportFiles::default();

    let notations = outcome.population.notations();
    files.population = write(&dir.join("population.json"), &(serde_json::to_string_pretty(&notations)? + "\n"))?;

    let ranking = csv_table(
        &["rank", "notation", "t_end_s", "objective", "penalty", "status"],
        r.entries.iter().map(|e| {
            vec![
                e.rank.to_string(),
                e.notation.clone(),
                format!("{:.6}", e.t_end),
                format!("{:.6}", e.objective),
                format!("{:.6e}", e.penalty),
                e.status.clone(),
            ]
        }),
    )?;
    files.ranking = write(&dir.join("ranking.csv"), &ranking)?;

    let pct = csv_table(
        &["percentile", "t_end_s", "notation"],
        r.entries.iter().rev().map(|e| vec![format!("{:.4}", e.percentile), format!("{:.6}", e.t_end), e.notation.clone()]),
    )?;
    files.percentile = write(&dir.join("percentile.csv"), &pct)?;

    let failures = csv_table(
        &["index", "notation", "reason"],
        r.failures.iter().map(|f| vec![f.index.to_string(), f.notation.clone(), f.reason.clone()]),
    )?;
    files.failures = write(&dir.join("failures.csv"), &failures)?;

    let width = outcome.population.len().saturating_sub(1).to_string().len().max(3);
    for ev in &outcome.evaluations {
        let stem = format!("config_{:0width$}", ev.index);
        let summary = match &ev.result {
            Ok(sol) => {
                files.trajectories.push(write(&dir.join(format!("{stem}.csv")), &sol.to_csv())?);
                sol.summary_json()
            }
            Err(e) => serde_json::json!({ "config": ev.notation, "status": format!("failed: {e}") }),
        };
        files.solutions.push(write(&dir.join(format!("{stem}.json")), &(serde_json::to_string_pretty(&summary)? + "\n"))?);
    }

    let mut s = String::new();
    writeln!(s, "configurations evaluated: {}", outcome.evaluations.len()).expect("string write");
    writeln!(s, "ranked: {}, failed: {}", r.entries.len(), r.failures.len()).expect("string write");
    let best = r.best();
    let worst = r.worst();
    writeln!(s, "best:  {} (t_end {:.3} s, {})", best.notation, best.t_end, best.status).expect("string write");
    writeln!(s, "worst: {} (t_end {:.3} s, {})", worst.notation, worst.t_end, worst.status).expect("string write");
    for f in &r.failures {
        writeln!(s, "failed: {} ({})", f.notation, f.reason).expect("string write");
    }
    files.summary = write(&dir.join("summary.txt"), &s)?;
    Ok(files)
}
