use std::path::Path;

use anyhow::{anyhow, Result};
use crossmodal_core::agents::EpisodeRecord;
use crossmodal_core::generative::LossRow;
use crossmodal_core::pipeline::{Aggregate, TransferReport};
use plotters::prelude::*;

const SIZE: (u32, u32) = (900, 540);
const TERMS: [&str; 5] = ["image reconstruction", "sound reconstruction", "image KL", "sound KL", "symmetric KL"];

fn err<E: std::fmt::Display>(e: E) -> anyhow::Error {
    anyhow!("plotting failed: {e}")
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    if !(lo.is_finite() && hi.is_finite()) {
        return (0.0, 1.0);
    }
    let span = (hi - lo).abs().max(1e-9);
    (lo - 0.05 * span, hi + 0.05 * span)
}

/// The metric a scenario's comparison is reported in.
fn headline(r: &TransferReport) -> (&'static str, Aggregate, Vec<f64>) {
    if r.scenario == "hyperhot" {
        ("average discounted reward", r.over_episodes.discounted, r.per_seed.iter().map(|s| s.discounted).collect())
    } else {
        ("average reward per step", r.over_episodes.per_step, r.per_seed.iter().map(|s| s.per_step).collect())
    }
}

/// Grouped bars: one group per method holding a bar per seed and the pooled
/// bar, each with a ±std error bar over its episodes.
pub fn method_bars(reports: &[&TransferReport], path: &Path) -> Result<()> {
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(err)?;
    let mut bars: Vec<(f64, f64, f64, f64, usize)> = Vec::new();
    let mut labels = Vec::new();
    let mut metric = "average reward";
    for (g, r) in reports.iter().enumerate() {
        let (name, pooled, _) = headline(r);
        metric = name;
        let seeds: Vec<Aggregate> = r
            .seeds
            .iter()
            .map(|&s| {
                let values = r.episodes.iter().filter(|o| o.seed == s).map(|o| {
                    if r.scenario == "hyperhot" {
                        o.discounted
                    } else {
                        o.per_step
                    }
                });
                Aggregate::of(values)
            })
            .collect();
        let n = seeds.len() + 1;
        let width = 0.8 / n as f64;
        for (i, a) in seeds.iter().chain(std::iter::once(&pooled)).enumerate() {
            let x0 = g as f64 + 0.1 + i as f64 * width;
            bars.push((x0, x0 + width * 0.9, a.mean, a.std, if i + 1 == n { 0 } else { i + 1 }));
        }
        labels.push(r.label.clone());
    }
    let lo = bars.iter().map(|b| b.2 - b.3).fold(0.0f64, f64::min);
    let hi = bars.iter().map(|b| b.2 + b.3).fold(0.0f64, f64::max);
    let (lo, hi) = padded(lo, hi);
    let groups = reports.len().max(1) as f64;
    let mut chart = ChartBuilder::on(&root)
        .caption(metric, ("sans-serif", 22))
        .margin(15)
        .x_label_area_size(35)
        .y_label_area_size(60)
        .build_cartesian_2d(0.0..groups, lo..hi)
        .map_err(err)?;
    chart
        .configure_mesh()
        .disable_x_mesh()
        .x_labels(reports.len().max(1) * 2 + 1)
        .x_label_formatter(&|x| {
            let g = (*x - 0.5).round();
            if (x - 0.5 - g).abs() < 1e-6 && g >= 0.0 && (g as usize) < labels.len() {
                labels[g as usize].clone()
            } else {
                String::new()
            }
        })
        .y_desc(metric)
        .draw()
        .map_err(err)?;
    chart
        .draw_series(bars.iter().map(|&(x0, x1, m, _, c)| {
            let color = if c == 0 { BLACK.mix(0.7) } else { Palette99::pick(c).mix(0.6) };
            Rectangle::new([(x0, 0.0), (x1, m)], color.filled())
        }))
        .map_err(err)?;
    chart
        .draw_series(bars.iter().map(|&(x0, x1, m, s, _)| {
            let x = 0.5 * (x0 + x1);
            ErrorBar::new_vertical(x, m - s, m, m + s, BLACK.stroke_width(1), 6)
        }))
        .map_err(err)?;
    root.present().map_err(err)?;
    Ok(())
}

/// Episode return against environment frames, one series per run. An empty
/// input still yields axes.
pub fn learning_curves(runs: &[(String, Vec<EpisodeRecord>)], path: &Path) -> Result<()> {
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(err)?;
    let points = runs.iter().flat_map(|(_, r)| r.iter());
    let (mut x_hi, mut y_lo, mut y_hi) = (1.0f64, f64::INFINITY, f64::NEG_INFINITY);
    for r in points {
        x_hi = x_hi.max(r.frames as f64);
        y_lo = y_lo.min(r.episode_return);
        y_hi = y_hi.max(r.episode_return);
    }
    let (y_lo, y_hi) = padded(y_lo, y_hi);
    let mut chart = ChartBuilder::on(&root)
        .caption("learning curves", ("sans-serif", 22))
        .margin(15)
        .x_label_area_size(35)
        .y_label_area_size(60)
        .build_cartesian_2d(0.0..x_hi, y_lo..y_hi)
        .map_err(err)?;
    chart
        .configure_mesh()
        .x_desc("frames")
        .y_desc("episode return")
        .draw()
        .map_err(err)?;
    for (i, (name, records)) in runs.iter().enumerate() {
        let color = Palette99::pick(i);
        chart
            .draw_series(LineSeries::new(
                records.iter().map(|r| (r.frames as f64, r.episode_return)),
                color.stroke_width(2),
            ))
            .map_err(err)?
            .label(name.clone())
            .legend(move |(x, y)| PathElement::new([(x, y), (x + 18, y)], Palette99::pick(i).stroke_width(2)));
    }
    if !runs.is_empty() {
        chart
            .configure_series_labels()
            .background_style(WHITE.mix(0.8))
            .border_style(BLACK)
            .draw()
            .map_err(err)?;
    }
    root.present().map_err(err)?;
    Ok(())
}

/// Weighted loss contributions per epoch, stacked.
pub fn loss_terms(rows: &[LossRow], path: &Path) -> Result<()> {
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(err)?;
    let stacked: Vec<(f64, [f64; 5])> = rows
        .iter()
        .map(|r| {
            let mut acc = [0.0; 5];
            let mut sum = 0.0;
            for (a, p) in acc.iter_mut().zip(r.parts) {
                sum += p.max(0.0);
                *a = sum;
            }
            (r.epoch as f64, acc)
        })
        .collect();
    let x_hi = stacked.iter().map(|s| s.0).fold(1.0, f64::max);
    let y_hi = stacked.iter().map(|s| s.1[4]).fold(0.0, f64::max);
    let (_, y_hi) = padded(0.0, y_hi.max(1e-9));
    let mut chart = ChartBuilder::on(&root)
        .caption("perception loss", ("sans-serif", 22))
        .margin(15)
        .x_label_area_size(35)
        .y_label_area_size(70)
        .build_cartesian_2d(0.0..x_hi, 0.0..y_hi)
        .map_err(err)?;
    chart
        .configure_mesh()
        .x_desc("epoch")
        .y_desc("weighted loss per sample")
        .draw()
        .map_err(err)?;
    for k in (0..5).rev() {
        let color = Palette99::pick(k);
        chart
            .draw_series(AreaSeries::new(stacked.iter().map(|s| (s.0, s.1[k])), 0.0, color.mix(0.8)).border_style(color))
            .map_err(err)?
            .label(TERMS[k])
            .legend(move |(x, y)| Rectangle::new([(x, y - 5), (x + 14, y + 5)], Palette99::pick(k).filled()));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(err)?;
    root.present().map_err(err)?;
    Ok(())
}
