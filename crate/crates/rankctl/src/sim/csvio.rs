//! CSV ingestion and reporting.
//!
//! All ids in files are 1-based. Four formats:
//!
//! * contexts — `t,item_id,relevance[,stratum]`, one row per (step, item);
//!   every step must list every item exactly once, and when the stratum
//!   column is present all rows of a step must agree on the label.
//! * groups — `constraint_id,item_id,weight`, sparse rows of the
//!   association matrix; membership may be fractional; omitted pairs are 0.
//! * results — `controller,phi,objective,utility,violation,terminal_1..m`,
//!   one row per sweep cell.
//! * trace — `t,utility,progress_1..m,cumulative_1..m`, one row per episode
//!   step, for plotting exposure over time.
//!
//! Readers reject malformed content (ragged rows, NaN, unknown ids,
//! duplicates, gaps) with the offending line number. Relevance outside
//! [0, 1] is clamped, matching what the scoring layer would do anyway.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::sim::{ContextStream, EpisodeResult, SweepRow};
use crate::types::{Association, Context};

fn csv_err(path: &str, line: usize, msg: impl Into<String>) -> Error {
    Error::Csv {
        path: path.to_string(),
        line,
        msg: msg.into(),
    }
}

fn open_err(path: &Path, err: std::io::Error) -> Error {
    Error::invalid(format!("cannot open {}: {err}", path.display()))
}

/// Parses a contexts file and a groups file into a stream.
pub fn read_stream(
    contexts: impl BufRead,
    contexts_label: &str,
    groups: impl BufRead,
    groups_label: &str,
) -> Result<ContextStream> {
    let raw = parse_contexts(contexts, contexts_label)?;
    let assoc = parse_groups(groups, groups_label, raw.n_items)?;
    let mut out = Vec::with_capacity(raw.horizon);
    for t in 1..=raw.horizon {
        let base = (t - 1) * raw.n_items;
        let relevance = raw.relevance[base..base + raw.n_items].to_vec();
        out.push(Context::new(t, relevance, assoc.clone())?);
    }
    match raw.strata {
        Some(labels) => ContextStream::with_strata(out, labels),
        None => ContextStream::new(out),
    }
}

/// Reads a stream from files on disk.
pub fn load_stream(contexts_path: &Path, groups_path: &Path) -> Result<ContextStream> {
    let contexts = File::open(contexts_path).map_err(|e| open_err(contexts_path, e))?;
    let groups = File::open(groups_path).map_err(|e| open_err(groups_path, e))?;
    read_stream(
        BufReader::new(contexts),
        &contexts_path.display().to_string(),
        BufReader::new(groups),
        &groups_path.display().to_string(),
    )
}

struct RawContexts {
    horizon: usize,
    n_items: usize,
    /// Step-major relevance grid.
    relevance: Vec<f64>,
    strata: Option<Vec<String>>,
}

fn parse_contexts(r: impl BufRead, path: &str) -> Result<RawContexts> {
    let mut lines = r.lines().enumerate();
    let header = match lines.next() {
        Some((_, line)) => line?,
        None => return Err(csv_err(path, 1, "empty file")),
    };
    let with_strata = match header.trim() {
        "t,item_id,relevance" => false,
        "t,item_id,relevance,stratum" => true,
        other => {
            return Err(csv_err(
                path,
                1,
                format!("unexpected header '{other}' (want 't,item_id,relevance[,stratum]')"),
            ))
        }
    };

    struct Row {
        line: usize,
        t: usize,
        item: usize,
        relevance: f64,
        stratum: Option<String>,
    }
    let mut rows: Vec<Row> = Vec::new();
    for (idx, line) in lines {
        let line = line?;
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let want = if with_strata { 4 } else { 3 };
        if fields.len() != want {
            return Err(csv_err(
                path,
                line_no,
                format!("expected {want} fields, got {}", fields.len()),
            ));
        }
        let t: usize = fields[0]
            .trim()
            .parse()
            .map_err(|_| csv_err(path, line_no, format!("bad step '{}'", fields[0])))?;
        let item: usize = fields[1]
            .trim()
            .parse()
            .map_err(|_| csv_err(path, line_no, format!("bad item id '{}'", fields[1])))?;
        if t == 0 || item == 0 {
            return Err(csv_err(path, line_no, "ids are 1-based"));
        }
        let relevance: f64 = fields[2]
            .trim()
            .parse()
            .map_err(|_| csv_err(path, line_no, format!("bad relevance '{}'", fields[2])))?;
        if !relevance.is_finite() {
            return Err(csv_err(
                path,
                line_no,
                format!("relevance must be finite, got '{}'", fields[2].trim()),
            ));
        }
        let stratum = if with_strata {
            let label = fields[3].trim();
            if label.is_empty() {
                return Err(csv_err(path, line_no, "empty stratum label"));
            }
            Some(label.to_string())
        } else {
            None
        };
        rows.push(Row {
            line: line_no,
            t,
            item,
            relevance: relevance.clamp(0.0, 1.0),
            stratum,
        });
    }
    if rows.is_empty() {
        return Err(csv_err(path, 1, "no data rows"));
    }

    let horizon = rows.iter().map(|r| r.t).max().unwrap();
    let n_items = rows.iter().map(|r| r.item).max().unwrap();
    let mut grid: Vec<Option<f64>> = vec![None; horizon * n_items];
    let mut strata: Vec<Option<String>> = vec![None; horizon];
    for row in &rows {
        let cell = &mut grid[(row.t - 1) * n_items + (row.item - 1)];
        if cell.is_some() {
            return Err(csv_err(
                path,
                row.line,
                format!("duplicate entry for step {} item {}", row.t, row.item),
            ));
        }
        *cell = Some(row.relevance);
        if let Some(label) = &row.stratum {
            match &strata[row.t - 1] {
                None => strata[row.t - 1] = Some(label.clone()),
                Some(existing) if existing != label => {
                    return Err(csv_err(
                        path,
                        row.line,
                        format!(
                            "step {} has conflicting strata '{existing}' and '{label}'",
                            row.t
                        ),
                    ));
                }
                _ => {}
            }
        }
    }
    let mut relevance = Vec::with_capacity(horizon * n_items);
    for t in 1..=horizon {
        for item in 1..=n_items {
            match grid[(t - 1) * n_items + (item - 1)] {
                Some(v) => relevance.push(v),
                None => {
                    return Err(csv_err(
                        path,
                        1,
                        format!("step {t} is missing item {item}"),
                    ))
                }
            }
        }
    }
    let strata = if with_strata {
        Some(
            strata
                .into_iter()
                .map(|s| s.expect("every step has at least one labeled row"))
                .collect(),
        )
    } else {
        None
    };
    Ok(RawContexts {
        horizon,
        n_items,
        relevance,
        strata,
    })
}

fn parse_groups(r: impl BufRead, path: &str, n_items: usize) -> Result<Association> {
    let mut lines = r.lines().enumerate();
    let header = match lines.next() {
        Some((_, line)) => line?,
        None => return Err(csv_err(path, 1, "empty file")),
    };
    if header.trim() != "constraint_id,item_id,weight" {
        return Err(csv_err(
            path,
            1,
            format!(
                "unexpected header '{}' (want 'constraint_id,item_id,weight')",
                header.trim()
            ),
        ));
    }
    let mut entries: Vec<(usize, usize, usize, f64)> = Vec::new();
    for (idx, line) in lines {
        let line = line?;
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(csv_err(
                path,
                line_no,
                format!("expected 3 fields, got {}", fields.len()),
            ));
        }
        let cid: usize = fields[0]
            .trim()
            .parse()
            .map_err(|_| csv_err(path, line_no, format!("bad constraint id '{}'", fields[0])))?;
        let item: usize = fields[1]
            .trim()
            .parse()
            .map_err(|_| csv_err(path, line_no, format!("bad item id '{}'", fields[1])))?;
        if cid == 0 || item == 0 {
            return Err(csv_err(path, line_no, "ids are 1-based"));
        }
        if item > n_items {
            return Err(csv_err(
                path,
                line_no,
                format!("item {item} does not exist in the contexts file ({n_items} items)"),
            ));
        }
        let weight: f64 = fields[2]
            .trim()
            .parse()
            .map_err(|_| csv_err(path, line_no, format!("bad weight '{}'", fields[2])))?;
        if !weight.is_finite() || weight < 0.0 {
            return Err(csv_err(
                path,
                line_no,
                format!("weight must be finite and non-negative, got '{}'", fields[2].trim()),
            ));
        }
        entries.push((line_no, cid, item, weight));
    }
    if entries.is_empty() {
        return Err(csv_err(path, 1, "no data rows"));
    }
    let n_budgets = entries.iter().map(|e| e.1).max().unwrap();
    let mut seen: Vec<Option<usize>> = vec![None; n_budgets * n_items];
    let mut weights = vec![0.0; n_budgets * n_items];
    let mut present = vec![false; n_budgets];
    for (line_no, cid, item, weight) in entries {
        let idx = (cid - 1) * n_items + (item - 1);
        if seen[idx].is_some() {
            return Err(csv_err(
                path,
                line_no,
                format!("duplicate entry for constraint {cid} item {item}"),
            ));
        }
        seen[idx] = Some(line_no);
        weights[idx] = weight;
        present[cid - 1] = true;
    }
    if let Some(missing) = present.iter().position(|p| !p) {
        return Err(csv_err(
            path,
            1,
            format!(
                "constraint ids must be contiguous: {} is missing (max id {n_budgets})",
                missing + 1
            ),
        ));
    }
    Association::new(n_budgets, n_items, weights)
}

/// Writes a stream in the canonical format: contexts step-major with items
/// ascending, groups sorted by (constraint, item) with zero weights
/// omitted. Requires every request to share one association matrix.
pub fn write_stream(
    mut contexts_out: impl Write,
    mut groups_out: impl Write,
    stream: &ContextStream,
) -> Result<()> {
    let assoc = stream.get(0).assoc();
    for idx in 1..stream.len() {
        let other = stream.get(idx).assoc();
        let same = (0..assoc.n_budgets()).all(|i| other.row(i) == assoc.row(i));
        if !same {
            return Err(Error::invalid(
                "cannot serialize a stream whose association matrix varies across requests",
            ));
        }
    }

    let with_strata = stream.strata().is_some();
    if with_strata {
        writeln!(contexts_out, "t,item_id,relevance,stratum")?;
    } else {
        writeln!(contexts_out, "t,item_id,relevance")?;
    }
    for idx in 0..stream.len() {
        let ctx = stream.get(idx);
        for (j, &r) in ctx.relevance().iter().enumerate() {
            match stream.strata() {
                Some(labels) => writeln!(
                    contexts_out,
                    "{},{},{},{}",
                    idx + 1,
                    j + 1,
                    r,
                    labels[idx]
                )?,
                None => writeln!(contexts_out, "{},{},{}", idx + 1, j + 1, r)?,
            }
        }
    }

    writeln!(groups_out, "constraint_id,item_id,weight")?;
    for i in 0..assoc.n_budgets() {
        for (j, &w) in assoc.row(i).iter().enumerate() {
            if w != 0.0 {
                writeln!(groups_out, "{},{},{}", i + 1, j + 1, w)?;
            }
        }
    }
    Ok(())
}

/// Writes a stream to files on disk.
pub fn save_stream(
    contexts_path: &Path,
    groups_path: &Path,
    stream: &ContextStream,
) -> Result<()> {
    let contexts = File::create(contexts_path).map_err(|e| open_err(contexts_path, e))?;
    let groups = File::create(groups_path).map_err(|e| open_err(groups_path, e))?;
    write_stream(BufWriter::new(contexts), BufWriter::new(groups), stream)
}

/// Writes sweep rows as the long-format results table.
pub fn write_results(mut w: impl Write, rows: &[SweepRow]) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::invalid("no sweep rows to write"));
    }
    let m = rows[0].terminal.len();
    write!(w, "controller,phi,objective,utility,violation")?;
    for i in 1..=m {
        write!(w, ",terminal_{i}")?;
    }
    writeln!(w)?;
    for row in rows {
        if row.terminal.len() != m {
            return Err(Error::dim(format!(
                "sweep rows disagree on budget count ({m} vs {})",
                row.terminal.len()
            )));
        }
        write!(
            w,
            "{},{},{},{},{}",
            row.controller, row.phi, row.objective, row.utility, row.violation
        )?;
        for v in &row.terminal {
            write!(w, ",{v}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Writes sweep rows to a file on disk.
pub fn save_results(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let f = File::create(path).map_err(|e| open_err(path, e))?;
    write_results(BufWriter::new(f), rows)
}

/// Writes one episode's per-step trace: utility, step progress, and the
/// running cumulative progress per budget.
pub fn write_trace(mut w: impl Write, result: &EpisodeResult) -> Result<()> {
    let m = result.terminal.len();
    write!(w, "t,utility")?;
    for i in 1..=m {
        write!(w, ",progress_{i}")?;
    }
    for i in 1..=m {
        write!(w, ",cumulative_{i}")?;
    }
    writeln!(w)?;
    let mut running = vec![0.0; m];
    for (idx, (u, c)) in result
        .utilities
        .iter()
        .zip(&result.step_progress)
        .enumerate()
    {
        for (acc, v) in running.iter_mut().zip(c) {
            *acc += v;
        }
        write!(w, "{},{}", idx + 1, u)?;
        for v in c {
            write!(w, ",{v}")?;
        }
        for v in &running {
            write!(w, ",{v}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Writes an episode trace to a file on disk.
pub fn save_trace(path: &Path, result: &EpisodeResult) -> Result<()> {
    let f = File::create(path).map_err(|e| open_err(path, e))?;
    write_trace(BufWriter::new(f), result)
}
