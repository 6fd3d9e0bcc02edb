use std::io::IsTerminal;
use std::path::{Path, PathBuf};

use lossmanifold::format::SummaryRow;
use lossmanifold::Report;

use crate::commands::{read_json, write_new, Outcome};
use crate::error::{CliError, CliResult};

const HEADER: [&str; 11] = ["file", "command", "n", "d", "l", "loss", "neg", "zero", "pos", "dim", "status"];

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

fn status(passed: bool) -> &'static str {
    if passed {
        "PASS"
    } else {
        "FAIL"
    }
}

fn cells(file: &str, row: &SummaryRow, loss: impl Fn(f64) -> String) -> Vec<String> {
    vec![
        file.to_string(),
        row.command.clone(),
        opt(row.n),
        opt(row.d),
        opt(row.outputs),
        row.loss.map_or_else(String::new, loss),
        opt(row.counts.map(|c| c.negative)),
        opt(row.counts.map(|c| c.zero)),
        opt(row.counts.map(|c| c.positive)),
        opt(row.dimension),
        status(row.passed).to_string(),
    ]
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn render_csv(rows: &[(String, SummaryRow)]) -> String {
    let mut out = HEADER.join(",");
    out.push('\n');
    for (file, row) in rows {
        let line: Vec<String> = cells(file, row, |v| v.to_string()).iter().map(|c| csv_field(c)).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

/// Column-aligned table; `color` wraps the status cell in ANSI codes.
pub fn render_text(rows: &[(String, SummaryRow)], color: bool) -> String {
    let body: Vec<Vec<String>> = rows.iter().map(|(f, r)| cells(f, r, |v| format!("{v:.3e}"))).collect();
    let mut widths: Vec<usize> = HEADER.iter().map(|h| h.len()).collect();
    for line in &body {
        for (w, c) in widths.iter_mut().zip(line) {
            *w = (*w).max(c.chars().count());
        }
    }
    let fmt_line = |line: &[String], paint: bool| {
        let mut parts = Vec::with_capacity(line.len());
        for (i, (c, w)) in line.iter().zip(&widths).enumerate() {
            let padded = if i < 2 { format!("{c:<w$}") } else { format!("{c:>w$}") };
            let painted = match (paint, c.as_str()) {
                (true, "PASS") => format!("\x1b[32m{padded}\x1b[0m"),
                (true, "FAIL") => format!("\x1b[31m{padded}\x1b[0m"),
                _ => padded,
            };
            parts.push(painted);
        }
        let mut s = parts.join("  ");
        s.truncate(s.trim_end().len());
        s.push('\n');
        s
    };
    let header: Vec<String> = HEADER.iter().map(|h| h.to_string()).collect();
    let mut out = fmt_line(&header, false);
    for line in &body {
        out.push_str(&fmt_line(line, color));
    }
    out
}

pub fn report(paths: &[PathBuf], out: Option<&Path>, plain: bool) -> CliResult<Outcome> {
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for path in paths {
        let parsed = read_json::<Report>(path).and_then(|r| r.check().map(|_| r).map_err(CliError::from));
        match parsed {
            Ok(r) => rows.push((path.display().to_string(), r.summary())),
            Err(e @ CliError::Io { .. }) => return Err(e),
            Err(e) => {
                eprintln!("skipped {}: {}", path.display(), e.to_string().replace('\n', " "));
                skipped.push(path.display().to_string());
            }
        }
    }
    if let Some(dir) = out {
        write_new(dir, "summary.csv", &render_csv(&rows))?;
        write_new(dir, "summary.txt", &render_text(&rows, false))?;
    }
    let color = !plain && std::env::var_os("NO_COLOR").is_none() && std::io::stdout().is_terminal();
    let stdout = render_text(&rows, color);
    let failed = rows.iter().filter(|(_, r)| !r.passed).count();
    let failure = if !skipped.is_empty() {
        Some(CliError::Usage {
            code: "schema",
            message: format!("{} file(s) are not valid reports: {}", skipped.len(), skipped.join(" ")),
        })
    } else if failed > 0 {
        Some(CliError::Numerical {
            code: "failed-reports",
            message: format!("{failed} of {} reports failed", rows.len()),
        })
    } else {
        None
    };
    Ok(Outcome { stdout, failure })
}
