//! Static SVG plot emission from experiment CSVs.
//!
//! Rendering is deterministic: inputs are sorted, series are downsampled
//! with a fixed stride and the SVG backend writes no timestamps, so
//! re-running on identical CSVs reproduces the files byte for byte.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use plotters::prelude::*;

use crate::error::{Result, SimError};
use crate::harness::metrics::RunSummary;

/// Maximum points per rendered line.
const MAX_POINTS: usize = 1000;

/// Renders every plot supported by the CSVs in `csv_dir` into `out_dir`;
/// returns the files written.
///
/// Always draws a delay-versus-iteration chart (one line per sweep value
/// for epsilon/gamma sweeps, per agent otherwise). Scenario sweeps over
/// users/contents/cache additionally get final-delay-versus-axis charts,
/// and content sweeps a hit-ratio chart.
pub fn emit_plots(csv_dir: &Path, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let summaries = read_summaries(csv_dir)?;
    std::fs::create_dir_all(out_dir)?;
    let axis = summaries[0].sweep_axis.clone();
    let mut written = Vec::new();

    // Delay vs iteration.
    let (file, by_value) = match axis.as_str() {
        "epsilon" => ("delay_vs_iteration_epsilon.svg", true),
        "gamma" => ("delay_vs_iteration_gamma.svg", true),
        _ => ("delay_vs_iteration.svg", false),
    };
    let mut lines: BTreeMap<String, Vec<Vec<f64>>> = BTreeMap::new();
    for row in &summaries {
        let label = if by_value {
            format!("{} {}={}", row.agent, axis, row.sweep_value)
        } else {
            row.agent.clone()
        };
        let series = read_ma_series(csv_dir, row)?;
        lines.entry(label).or_default().push(series);
    }
    let averaged: Vec<(String, Vec<(f64, f64)>)> = lines
        .into_iter()
        .map(|(label, seeds)| (label, downsample(&mean_series(&seeds))))
        .collect();
    let path = out_dir.join(file);
    draw_lines(
        &path,
        "content delivery delay vs iteration",
        "slot",
        "moving-average delay (s)",
        &averaged,
    )?;
    written.push(path);

    // Final-window metrics vs the swept scenario dimension.
    if matches!(axis.as_str(), "users" | "contents" | "cache") {
        let path = out_dir.join(format!("final_delay_vs_{axis}.svg"));
        draw_lines(
            &path,
            &format!("final content delivery delay vs {axis}"),
            &axis,
            "final-window mean delay (s)",
            &per_agent_curves(&summaries, |s| s.final_mean_cost_s),
        )?;
        written.push(path);

        if axis == "contents" {
            let path = out_dir.join("hit_ratio_vs_contents.svg");
            draw_lines(
                &path,
                "cache hit ratio vs contents",
                &axis,
                "cache hit ratio",
                &per_agent_curves(&summaries, |s| s.hit_ratio),
            )?;
            written.push(path);
        }
    }
    Ok(written)
}

fn read_summaries(csv_dir: &Path) -> Result<Vec<RunSummary>> {
    let path = csv_dir.join("summary.csv");
    if !path.exists() {
        return Err(SimError::Schema(format!(
            "missing {} (run an experiment first)",
            path.display()
        )));
    }
    let mut reader = csv::Reader::from_path(&path)?;
    let mut rows = Vec::new();
    for record in reader.deserialize::<RunSummary>() {
        rows.push(record.map_err(|e| SimError::Schema(format!("summary.csv: {e}")))?);
    }
    if rows.is_empty() {
        return Err(SimError::Schema("summary.csv contains no runs".into()));
    }
    rows.sort_by(|a, b| {
        (&a.agent, a.sweep_value, a.seed)
            .partial_cmp(&(&b.agent, b.sweep_value, b.seed))
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    Ok(rows)
}

/// Moving-average column of one run CSV.
fn read_ma_series(csv_dir: &Path, row: &RunSummary) -> Result<Vec<f64>> {
    let axis = if row.sweep_axis.is_empty() {
        None
    } else {
        Some((row.sweep_axis.as_str(), row.sweep_value))
    };
    let agent = row
        .agent
        .parse()
        .map_err(|_| SimError::Schema(format!("unknown agent '{}' in summary", row.agent)))?;
    let name = super::runner::run_file_name(&row.scenario_id, axis, agent, row.seed);
    let path = csv_dir.join(&name);
    let mut reader = csv::Reader::from_path(&path)
        .map_err(|e| SimError::Schema(format!("{name}: {e}")))?;
    let headers = reader.headers()?.clone();
    let col = headers
        .iter()
        .position(|h| h == "ma_cost_s")
        .ok_or_else(|| SimError::Schema(format!("{name}: missing column ma_cost_s")))?;
    let mut series = Vec::new();
    for record in reader.records() {
        let record = record?;
        let value: f64 = record[col]
            .parse()
            .map_err(|_| SimError::Schema(format!("{name}: bad ma_cost_s value")))?;
        series.push(value);
    }
    Ok(series)
}

/// Pointwise mean of equally long series (shorter ones end the average).
fn mean_series(seeds: &[Vec<f64>]) -> Vec<f64> {
    let len = seeds.iter().map(|s| s.len()).min().unwrap_or(0);
    (0..len)
        .map(|i| seeds.iter().map(|s| s[i]).sum::<f64>() / seeds.len() as f64)
        .collect()
}

fn downsample(series: &[f64]) -> Vec<(f64, f64)> {
    let stride = series.len().div_ceil(MAX_POINTS).max(1);
    let mut points: Vec<(f64, f64)> = series
        .iter()
        .enumerate()
        .step_by(stride)
        .map(|(i, &v)| ((i + 1) as f64, v))
        .collect();
    if let Some(&last) = series.last() {
        let last_x = series.len() as f64;
        if points.last().map(|p| p.0) != Some(last_x) {
            points.push((last_x, last));
        }
    }
    points
}

/// Mean of `metric` over seeds per (agent, sweep value), as one line per
/// agent.
fn per_agent_curves(
    summaries: &[RunSummary],
    metric: impl Fn(&RunSummary) -> f64,
) -> Vec<(String, Vec<(f64, f64)>)> {
    let mut acc: BTreeMap<(String, String), (f64, usize)> = BTreeMap::new();
    for row in summaries {
        let entry = acc
            .entry((row.agent.clone(), format!("{:.6}", row.sweep_value)))
            .or_insert((0.0, 0));
        entry.0 += metric(row);
        entry.1 += 1;
    }
    let mut curves: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for ((agent, value), (total, count)) in acc {
        curves
            .entry(agent)
            .or_default()
            .push((value.parse().unwrap(), total / count as f64));
    }
    curves
        .into_iter()
        .map(|(agent, mut points)| {
            points.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            (agent, points)
        })
        .collect()
}

fn draw_lines(
    path: &Path,
    title: &str,
    x_desc: &str,
    y_desc: &str,
    lines: &[(String, Vec<(f64, f64)>)],
) -> Result<()> {
    let render = |e: &dyn std::fmt::Display| SimError::Render(format!("{}: {e}", path.display()));
    let points: Vec<(f64, f64)> = lines.iter().flat_map(|(_, p)| p.iter().copied()).collect();
    if points.is_empty() {
        return Err(SimError::Schema(format!(
            "no data points for {}",
            path.display()
        )));
    }
    let (mut x_lo, mut x_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y_lo, mut y_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (x, y) in &points {
        x_lo = x_lo.min(*x);
        x_hi = x_hi.max(*x);
        y_lo = y_lo.min(*y);
        y_hi = y_hi.max(*y);
    }
    if x_lo == x_hi {
        x_hi += 1.0;
    }
    let pad = ((y_hi - y_lo) * 0.05).max(y_hi.abs() * 0.01).max(1e-9);
    let (y_lo, y_hi) = ((y_lo - pad).max(0.0).min(y_lo), y_hi + pad);

    let root = SVGBackend::new(path, (960, 600)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| render(&e))?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 24))
        .margin(16)
        .x_label_area_size(44)
        .y_label_area_size(64)
        .build_cartesian_2d(x_lo..x_hi, y_lo..y_hi)
        .map_err(|e| render(&e))?;
    chart
        .configure_mesh()
        .x_desc(x_desc)
        .y_desc(y_desc)
        .draw()
        .map_err(|e| render(&e))?;
    for (i, (label, series)) in lines.iter().enumerate() {
        let color = Palette99::pick(i).to_rgba();
        chart
            .draw_series(LineSeries::new(series.iter().copied(), &color))
            .map_err(|e| render(&e))?
            .label(label.clone())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], color));
    }
    chart
        .configure_series_labels()
        .border_style(BLACK)
        .background_style(WHITE.mix(0.85))
        .draw()
        .map_err(|e| render(&e))?;
    root.present().map_err(|e| render(&e))?;
    Ok(())
}
