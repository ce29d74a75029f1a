//! Markdown summary over run directories.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde_json::Value;

use crate::ReportArgs;

struct Run {
    dir: PathBuf,
    manifest: Value,
}

impl Run {
    fn name(&self) -> String {
        self.dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default()
    }

    fn phase(&self) -> &str {
        self.manifest["phase"].as_str().unwrap_or("")
    }

    fn config(&self, key: &str) -> String {
        match &self.manifest["config"][key] {
            Value::String(s) => s.clone(),
            Value::Null => "-".into(),
            v => v.to_string(),
        }
    }

    fn json(&self, file: &str) -> Option<Value> {
        serde_json::from_str(&fs::read_to_string(self.dir.join(file)).ok()?).ok()
    }

    /// Data rows of a CSV artifact, header included, manifest comment skipped.
    fn csv(&self, file: &str) -> Option<Vec<Vec<String>>> {
        let text = fs::read_to_string(self.dir.join(file)).ok()?;
        Some(
            text.lines()
                .filter(|l| !l.starts_with('#') && !l.is_empty())
                .map(|l| l.split(',').map(str::to_string).collect())
                .collect(),
        )
    }
}

fn collect(path: &Path, runs: &mut Vec<Run>) -> Result<()> {
    let manifest = path.join("manifest.json");
    if manifest.is_file() {
        let text = fs::read_to_string(&manifest).with_context(|| format!("reading {}", manifest.display()))?;
        let manifest = serde_json::from_str(&text).with_context(|| format!("parsing {}", manifest.display()))?;
        runs.push(Run {
            dir: path.to_path_buf(),
            manifest,
        });
        return Ok(());
    }
    let mut children: Vec<PathBuf> = fs::read_dir(path)
        .with_context(|| format!("{} is not a run directory", path.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("manifest.json").is_file())
        .collect();
    children.sort();
    if children.is_empty() {
        anyhow::bail!("no runs under {}", path.display());
    }
    for c in children {
        collect(&c, runs)?;
    }
    Ok(())
}

fn num(v: &Value) -> String {
    v.as_f64()
        .map(|x| format!("{:.2}", 100.0 * x))
        .unwrap_or_else(|| "-".into())
}

/// `100 * k / count` to two decimals, ties to even, in exact integer arithmetic.
pub fn percent(k: u64, count: u64) -> String {
    let num = 10_000 * k;
    let (mut q, r) = (num / count, num % count);
    if 2 * r > count || (2 * r == count && q % 2 == 1) {
        q += 1;
    }
    format!("{}.{:02}", q / 100, q % 100)
}

/// Hits@k fraction from a metrics object as a percentage.
fn hits(m: &Value, key: &str) -> String {
    match (m[key].as_f64(), m["count"].as_u64()) {
        (Some(h), Some(c)) if c > 0 => percent((h * c as f64).round() as u64, c),
        _ => "-".into(),
    }
}

/// Mean step advantage over the first and last quarter of epochs.
fn delta_quartiles(rows: &[Vec<String>]) -> Option<(f64, f64)> {
    let mut per_epoch: Vec<(usize, f64, usize)> = Vec::new();
    for r in rows.iter().skip(1) {
        let epoch: usize = r.get(1)?.parse().ok()?;
        let d: f64 = r.get(2)?.parse().ok()?;
        match per_epoch.last_mut() {
            Some((e, sum, n)) if *e == epoch => {
                *sum += d;
                *n += 1;
            }
            _ => per_epoch.push((epoch, d, 1)),
        }
    }
    if per_epoch.is_empty() {
        return None;
    }
    let means: Vec<f64> = per_epoch.iter().map(|(_, s, n)| s / *n as f64).collect();
    let q = (means.len() / 4).max(1);
    let avg = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    Some((avg(&means[..q]), avg(&means[means.len() - q..])))
}

fn render(runs: &[Run]) -> String {
    let mut out = String::from("# Run report\n\nMRR and Hits@k in percent (ties rounded to even).\n");
    let teachers: Vec<&Run> = runs.iter().filter(|r| r.phase() == "pretrain").collect();
    if !teachers.is_empty() {
        out.push_str("\n## Teachers (test)\n\n| run | seed | dim | structural | visual | textual | mean | softmax average |\n|---|---|---|---|---|---|---|---|\n");
        for r in teachers {
            let m = r.json("teacher_metrics.json").unwrap_or(Value::Null);
            let t = &m["test"];
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} | {} | {} | {} | {} |",
                r.name(),
                r.config("seed"),
                r.config("dim"),
                num(&t["structural"]["mrr"]),
                num(&t["visual"]["mrr"]),
                num(&t["textual"]["mrr"]),
                num(&t["mean_teacher_mrr"]),
                num(&t["softmax_average"]["mrr"]),
            );
        }
    }
    let students: Vec<&Run> = runs.iter().filter(|r| r.phase() == "student").collect();
    if !students.is_empty() {
        out.push_str("\n## Students (test)\n\n| run | seed | strategy | kd | MRR | Hits@1 | Hits@3 | Hits@10 | delta first quarter | delta last quarter |\n|---|---|---|---|---|---|---|---|---|---|\n");
        for r in &students {
            let m = r.json("metrics.json").unwrap_or(Value::Null);
            let (first, last) = r
                .csv("reward_curve.csv")
                .and_then(|rows| delta_quartiles(&rows))
                .map(|(a, b)| (format!("{a:.3}"), format!("{b:.3}")))
                .unwrap_or(("-".into(), "-".into()));
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} | {} | {} | {} | {} | {first} | {last} |",
                r.name(),
                r.config("seed"),
                r.config("strategy"),
                r.config("kd_variant"),
                num(&m["mrr"]),
                hits(&m, "hits1"),
                hits(&m, "hits3"),
                hits(&m, "hits10"),
            );
        }
        let mut header_done = false;
        for r in &students {
            let Some(rows) = r.csv("strategy_stats.csv") else {
                continue;
            };
            let (Some(header), Some(last)) = (rows.first(), rows.last()) else {
                continue;
            };
            if rows.len() < 2 {
                continue;
            }
            if !header_done {
                let _ = writeln!(
                    out,
                    "\n## Teacher subsets chosen in the final epoch\n\n| run | {} |\n|---|{}",
                    header[1..].join(" | "),
                    "---|".repeat(header.len() - 1)
                );
                header_done = true;
            }
            let cells: Vec<String> = last[1..]
                .iter()
                .map(|c| {
                    c.parse::<f64>()
                        .map(|v| format!("{v:.3}"))
                        .unwrap_or_else(|_| c.clone())
                })
                .collect();
            let _ = writeln!(out, "| {} | {} |", r.name(), cells.join(" | "));
        }
    }
    out
}

pub fn run(a: &ReportArgs) -> Result<()> {
    let mut runs = Vec::new();
    for p in &a.runs {
        collect(p, &mut runs)?;
    }
    let md = render(&runs);
    match &a.out {
        Some(p) => fs::write(p, md).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{md}"),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::percent;

    #[test]
    fn percent_rounds_ties_to_even() {
        assert_eq!(percent(1, 8), "12.50");
        // 0.005% and 0.015% are exact ties
        assert_eq!(percent(1, 20_000), "0.00");
        assert_eq!(percent(3, 20_000), "0.02");
        assert_eq!(percent(3, 40_000), "0.01");
        assert_eq!(percent(400, 400), "100.00");
        assert_eq!(percent(1, 3), "33.33");
        assert_eq!(percent(2, 3), "66.67");
    }
}
