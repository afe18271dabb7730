//! trials.csv reading and writing, curve.csv, the gnuplot script and the summary row.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context};

use crate::{format_float, write_atomic, CliError, CliResult, InputContext, ReportArgs};

pub const TRIALS_HEADER: [&str; 11] = [
    "trial",
    "accuracy",
    "n_min",
    "n_max",
    "weighting",
    "stopwords",
    "regularizer",
    "strength",
    "tolerance",
    "best_so_far",
    "split_y_star",
];

/// Marks a value that does not exist (inactive, not yet defined, prior sample).
pub const ABSENT: &str = "-";
pub const FAILED: &str = "failed";

/// One line of trials.csv.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRow {
    pub trial: usize,
    /// `None` for a failed trial.
    pub accuracy: Option<f64>,
    pub best_so_far: Option<f64>,
    pub split_y_star: Option<f64>,
    /// n_min, n_max, weighting, stopwords, regularizer, strength, tolerance.
    pub config: [String; 7],
}

fn opt(v: Option<f64>, none: &str) -> String {
    v.map(format_float).unwrap_or_else(|| none.to_string())
}

pub fn trials_csv(rows: &[TrialRow]) -> anyhow::Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(TRIALS_HEADER)?;
    for r in rows {
        let mut rec = vec![r.trial.to_string(), opt(r.accuracy, FAILED)];
        rec.extend(r.config.iter().cloned());
        rec.push(opt(r.best_so_far, ABSENT));
        rec.push(opt(r.split_y_star, ABSENT));
        w.write_record(&rec)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

fn parse_opt(field: &str, none: &str, column: &str) -> anyhow::Result<Option<f64>> {
    if field == none {
        return Ok(None);
    }
    let v: f64 = field.parse().map_err(|_| anyhow!("{column}: cannot parse {field:?}"))?;
    if !v.is_finite() {
        bail!("{column}: non-finite value {field:?}");
    }
    Ok(Some(v))
}

/// Parses trials.csv; errors name the 1-based data row.
pub fn read_trials(text: &str) -> anyhow::Result<Vec<TrialRow>> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = r.headers().context("reading header")?.clone();
    if header.iter().ne(TRIALS_HEADER.iter().copied()) {
        bail!("unexpected header; expected {}", TRIALS_HEADER.join(","));
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let row = i + 1;
        let rec = rec.with_context(|| format!("row {row}"))?;
        let parsed = (|| -> anyhow::Result<TrialRow> {
            let trial: usize = rec[0].parse().map_err(|_| anyhow!("trial: cannot parse {:?}", &rec[0]))?;
            if trial != row {
                bail!("trial index {trial} out of order");
            }
            let mut config: [String; 7] = Default::default();
            for (k, c) in config.iter_mut().enumerate() {
                *c = rec[2 + k].to_string();
            }
            Ok(TrialRow {
                trial,
                accuracy: parse_opt(&rec[1], FAILED, "accuracy")?,
                config,
                best_so_far: parse_opt(&rec[9], ABSENT, "best_so_far")?,
                split_y_star: parse_opt(&rec[10], ABSENT, "split_y_star")?,
            })
        })()
        .with_context(|| format!("row {row}"))?;
        rows.push(parsed);
    }
    if rows.is_empty() {
        bail!("no trials");
    }
    Ok(rows)
}

/// Index of the first row attaining the maximum accuracy.
pub fn best_row(rows: &[TrialRow]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, r) in rows.iter().enumerate() {
        if let Some(y) = r.accuracy {
            if best.is_none_or(|(_, b)| y > b) {
                best = Some((i, y));
            }
        }
    }
    best.map(|(i, _)| i)
}

pub fn curve_csv(rows: &[TrialRow]) -> String {
    let best = textsmbo_core::smbo::running_max(rows.iter().map(|r| r.accuracy));
    let mut out = String::from("t,accuracy,best_so_far\n");
    for (r, b) in rows.iter().zip(best) {
        let _ = writeln!(out, "{},{},{}", r.trial, opt(r.accuracy, ABSENT), opt(b, ABSENT));
    }
    out
}

pub fn gnuplot_script(curve_file: &str) -> String {
    format!(
        r#"# Render with: gnuplot curve.gp  (writes curve.png)
set terminal pngcairo size 800,500
set output "curve.png"
set datafile separator ","
set datafile missing "-"
set key bottom right
set xlabel "trial"
set ylabel "dev accuracy"
set grid
plot "{curve_file}" using 1:2 skip 1 with linespoints dashtype 2 pointtype 7 pointsize 0.6 title "trial accuracy", \
     "{curve_file}" using 1:3 skip 1 with lines linewidth 2 title "best so far"
"#
    )
}

/// Summary line with the column layout of a results table.
pub fn summary_row(row: &TrialRow) -> String {
    let c = &row.config;
    let stop = match c[3].as_str() {
        "true" => "T",
        "false" => "F",
        other => other,
    };
    let strength = c[5].parse::<f64>().map(|s| {
        if s >= 1.0 { format!("{}", s.round()) } else { format!("{s:.3e}") }
    });
    let conv = c[6].parse::<f64>().map(|s| format!("{s:.3e}"));
    let acc = row.accuracy.map(|a| format!("{:.2}", 100.0 * a)).unwrap_or_else(|| FAILED.into());
    let header = format!(
        "{:>7}  {:>5}  {:>5}  {:>9}  {:>5}  {:>4}  {:>9}  {:>9}",
        "Acc.", "n_min", "n_max", "Weighting", "Stop.", "Reg.", "Strength", "Conv."
    );
    let line = format!(
        "{:>7}  {:>5}  {:>5}  {:>9}  {:>5}  {:>4}  {:>9}  {:>9}",
        acc,
        c[0],
        c[1],
        c[2],
        stop,
        c[4],
        strength.unwrap_or_else(|_| c[5].clone()),
        conv.unwrap_or_else(|_| c[6].clone())
    );
    format!("{header}\n{line}")
}

pub fn cmd_report(args: &ReportArgs) -> CliResult<String> {
    let text = fs::read_to_string(&args.trials)
        .with_context(|| format!("reading {}", args.trials.display()))
        .input()?;
    let rows = read_trials(&text).with_context(|| format!("in {}", args.trials.display())).input()?;
    let recomputed = textsmbo_core::smbo::running_max(rows.iter().map(|r| r.accuracy));
    for (r, b) in rows.iter().zip(&recomputed) {
        if r.best_so_far != *b {
            log::warn!("row {}: recorded best_so_far differs from the running maximum", r.trial);
        }
    }
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display())).input()?;
    write_atomic(&args.out.join("curve.csv"), curve_csv(&rows).as_bytes())?;
    write_atomic(&args.out.join("curve.gp"), gnuplot_script("curve.csv").as_bytes())?;
    let best = best_row(&rows).ok_or_else(|| CliError::Input(anyhow!("every trial failed")))?;
    Ok(format!(
        "{} trials, best at trial {}\n{}",
        rows.len(),
        rows[best].trial,
        summary_row(&rows[best])
    ))
}

/// Reads trials.csv from disk.
pub fn load_trials(path: &Path) -> CliResult<Vec<TrialRow>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display())).input()?;
    read_trials(&text).input()
}
