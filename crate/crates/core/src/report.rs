//! Report files: `report.json`, `batches.csv`, `curves.csv`, and the
//! strategy comparison table.
//!
//! CSV output is RFC 4180 with a header row and a fixed column order.
//! `curves.csv` is the plotting contract: e.g. in gnuplot,
//! `plot 'curves.csv' using 1:2 with lines, '' using 1:3 with lines, '' using 1:4 with lines`
//! (with `set datafile separator ','` and `set key autotitle columnhead`).

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::campaign::{CampaignReport, CampaignRun};

pub const BATCHES_HEADER: [&str; 8] = [
    "index",
    "num_gt",
    "num_detections",
    "precision",
    "recall",
    "additions",
    "removals",
    "corrections",
];

pub const CURVES_HEADER: [&str; 4] = ["image_count", "cum_gt", "cum_pred", "cum_corrections"];

pub fn write_report_json<W: Write>(report: &CampaignReport, mut sink: W) -> std::io::Result<()> {
    serde_json::to_writer_pretty(&mut sink, report)?;
    sink.write_all(b"\n")?;
    sink.flush()
}

pub fn read_report_json<R: BufRead>(source: R) -> serde_json::Result<CampaignReport> {
    serde_json::from_reader(source)
}

pub fn write_batches_csv<W: Write>(report: &CampaignReport, sink: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(BATCHES_HEADER)?;
    for b in &report.batches {
        w.write_record([
            b.batch_index.to_string(),
            b.num_gt.to_string(),
            b.num_detections.to_string(),
            b.precision.to_string(),
            b.recall.to_string(),
            b.additions.to_string(),
            b.removals.to_string(),
            b.corrections.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_curves_csv<W: Write>(report: &CampaignReport, sink: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(CURVES_HEADER)?;
    for p in &report.curves {
        w.write_record([
            p.image_count.to_string(),
            p.cum_gt.to_string(),
            p.cum_pred.to_string(),
            p.cum_corrections.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |x| format!("{x:.2}%"))
}

/// Human-readable summary of one campaign.
pub fn summary(report: &CampaignReport) -> String {
    let mut s = String::new();
    let proposal_gt = report.total_gt - report.manual_b0_boxes;
    let _ = writeln!(
        s,
        "{} images in {} batches, detector {}",
        report.num_images,
        report.batches.len(),
        report.detector
    );
    let _ = writeln!(
        s,
        "manual first batch: {} boxes; proposal batches: {} corrections for {} ground-truth boxes",
        report.manual_b0_boxes, report.total_corrections, proposal_gt
    );
    let _ = writeln!(
        s,
        "workload reduction (excluding first batch): {}",
        pct(report.reduction_excluding_b0)
    );
    let _ = writeln!(
        s,
        "workload reduction (whole campaign, first batch counted as manual): {}",
        pct(report.reduction_whole_campaign)
    );
    if report.is_empty_campaign() {
        let _ = writeln!(s, "note: campaign has no proposal batches; reduction undefined");
    }
    s
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    /// Mean and sample standard deviation (0 for a single value).
    pub fn of(values: &[f64]) -> Stat {
        if values.is_empty() {
            return Stat { mean: f64::NAN, std: f64::NAN };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Stat { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub detector: String,
    pub strategy: String,
    pub regime: String,
    pub repeats: usize,
    pub reduction_excluding_b0: Stat,
    pub reduction_whole_campaign: Stat,
    pub total_corrections: f64,
    pub total_gt: f64,
    pub wall_time_secs: f64,
    pub best: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
}

/// All completed runs of one (strategy, regime) cell.
#[derive(Debug, Clone)]
pub struct ComparisonCell {
    pub strategy: String,
    pub regime: String,
    pub runs: Vec<CampaignRun>,
}

impl ComparisonTable {
    /// Aggregates cells in the given order and flags the row with the
    /// highest mean reduction. Undefined reductions propagate as NaN.
    pub fn build(cells: Vec<ComparisonCell>) -> ComparisonTable {
        let mut rows: Vec<ComparisonRow> = cells
            .into_iter()
            .map(|c| {
                let n = c.runs.len().max(1) as f64;
                let get = |f: &dyn Fn(&CampaignRun) -> f64| c.runs.iter().map(f).collect::<Vec<_>>();
                ComparisonRow {
                    detector: c.runs.first().map(|r| r.report.detector.clone()).unwrap_or_default(),
                    strategy: c.strategy,
                    regime: c.regime,
                    repeats: c.runs.len(),
                    reduction_excluding_b0: Stat::of(&get(&|r| {
                        r.report.reduction_excluding_b0.unwrap_or(f64::NAN)
                    })),
                    reduction_whole_campaign: Stat::of(&get(&|r| {
                        r.report.reduction_whole_campaign.unwrap_or(f64::NAN)
                    })),
                    total_corrections: c.runs.iter().map(|r| r.report.total_corrections as f64).sum::<f64>() / n,
                    total_gt: c.runs.iter().map(|r| r.report.total_gt as f64).sum::<f64>() / n,
                    wall_time_secs: c.runs.iter().map(|r| r.timings.total_secs).sum::<f64>() / n,
                    best: false,
                }
            })
            .collect();
        let best = rows
            .iter()
            .enumerate()
            .filter(|(_, r)| r.reduction_excluding_b0.mean.is_finite())
            .max_by(|a, b| {
                a.1.reduction_excluding_b0
                    .mean
                    .total_cmp(&b.1.reduction_excluding_b0.mean)
                    .then(b.0.cmp(&a.0))
            })
            .map(|(i, _)| i);
        if let Some(i) = best {
            rows[i].best = true;
        }
        ComparisonTable { rows }
    }

    pub fn write_csv<W: Write>(&self, sink: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        w.write_record([
            "detector",
            "strategy",
            "regime",
            "repeats",
            "reduction_excluding_b0_mean",
            "reduction_excluding_b0_std",
            "reduction_whole_campaign_mean",
            "reduction_whole_campaign_std",
            "total_corrections",
            "total_gt",
            "wall_time_secs",
            "best",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.detector.clone(),
                r.strategy.clone(),
                r.regime.clone(),
                r.repeats.to_string(),
                r.reduction_excluding_b0.mean.to_string(),
                r.reduction_excluding_b0.std.to_string(),
                r.reduction_whole_campaign.mean.to_string(),
                r.reduction_whole_campaign.std.to_string(),
                r.total_corrections.to_string(),
                r.total_gt.to_string(),
                format!("{:.3}", r.wall_time_secs),
                r.best.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Aligned plain-text rendering; the best row is marked with `*`.
    pub fn to_text(&self) -> String {
        let header = [
            "", "strategy", "regime", "n", "reduction %", "whole %", "corrections", "gt", "time s",
        ];
        let mut lines: Vec<Vec<String>> = vec![header.iter().map(|s| s.to_string()).collect()];
        for r in &self.rows {
            lines.push(vec![
                if r.best { "*".into() } else { String::new() },
                r.strategy.clone(),
                r.regime.clone(),
                r.repeats.to_string(),
                format!("{:.2} ± {:.2}", r.reduction_excluding_b0.mean, r.reduction_excluding_b0.std),
                format!("{:.2} ± {:.2}", r.reduction_whole_campaign.mean, r.reduction_whole_campaign.std),
                format!("{:.1}", r.total_corrections),
                format!("{:.1}", r.total_gt),
                format!("{:.3}", r.wall_time_secs),
            ]);
        }
        let widths: Vec<usize> = (0..header.len())
            .map(|c| lines.iter().map(|l| l[c].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        if let Some(d) = self.rows.first() {
            let _ = writeln!(out, "detector: {}", d.detector);
        }
        for l in lines {
            let cells: Vec<String> = l
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(i, (cell, w))| {
                    let pad = w - cell.chars().count();
                    if i <= 2 {
                        format!("{cell}{}", " ".repeat(pad))
                    } else {
                        format!("{}{cell}", " ".repeat(pad))
                    }
                })
                .collect();
            let _ = writeln!(out, "{}", cells.join("  ").trim_end());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::campaign::{run_campaign, CampaignConfig};
    use crate::dataset::synthetic::{generate, SyntheticDatasetConfig};
    use crate::detector::{NullDetector, PerfectDetector, SyntheticDetector, SyntheticDetectorConfig};

    fn report() -> CampaignRun {
        let d = generate(&SyntheticDatasetConfig::with_images(230, 5));
        let mut det = SyntheticDetector::new(SyntheticDetectorConfig::with_seed(2), d.classes.clone());
        run_campaign(&d, &CampaignConfig::default(), &mut det).unwrap()
    }

    #[test]
    fn report_json_round_trip() {
        let r = report().report;
        let mut buf = Vec::new();
        write_report_json(&r, &mut buf).unwrap();
        let back = read_report_json(&buf[..]).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn csv_layout() {
        let r = report().report;
        let mut buf = Vec::new();
        write_batches_csv(&r, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "index,num_gt,num_detections,precision,recall,additions,removals,corrections"
        );
        assert_eq!(lines.count(), r.batches.len());

        let mut buf = Vec::new();
        write_curves_csv(&r, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("image_count,cum_gt,cum_pred,cum_corrections\n"));
        let last: Vec<usize> = text
            .lines()
            .last()
            .unwrap()
            .split(',')
            .map(|x| x.parse().unwrap())
            .collect();
        assert_eq!(last[1], r.batches.iter().map(|b| b.num_gt).sum::<usize>());
        let corr: usize = r.batches.iter().filter(|b| b.batch_index >= 1).map(|b| b.corrections).sum();
        assert_eq!(last[3], corr);
    }

    #[test]
    fn stats() {
        let s = Stat::of(&[1.0, 2.0, 3.0]);
        assert_eq!(s.mean, 2.0);
        assert_eq!(s.std, 1.0);
        assert_eq!(Stat::of(&[5.0]).std, 0.0);
    }

    #[test]
    fn comparison_flags_best_row() {
        let d = generate(&SyntheticDatasetConfig::with_images(230, 5));
        let good = run_campaign(&d, &CampaignConfig::default(), &mut PerfectDetector).unwrap();
        let bad = run_campaign(&d, &CampaignConfig::default(), &mut NullDetector).unwrap();
        let t = ComparisonTable::build(vec![
            ComparisonCell { strategy: "a".into(), regime: "iterative".into(), runs: vec![bad] },
            ComparisonCell { strategy: "b".into(), regime: "iterative".into(), runs: vec![good] },
        ]);
        assert!(!t.rows[0].best);
        assert!(t.rows[1].best);
        assert_eq!(t.rows[0].reduction_excluding_b0.std, 0.0);
        let text = t.to_text();
        assert!(text.lines().nth(3).unwrap().starts_with('*'));
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 3);
    }

    #[test]
    fn summary_mentions_both_reductions() {
        let s = summary(&report().report);
        assert!(s.contains("excluding first batch"));
        assert!(s.contains("whole campaign"));
    }
}
