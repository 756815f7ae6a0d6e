//! Per-modality performance rows.

use std::collections::{BTreeMap, VecDeque};

use itsgw_core::model::{MetricsReport, MetricsRow, Modality};
use serde::{Deserialize, Serialize};

/// Builds one row. `latencies_ms` are averaged arithmetically; an empty
/// slice gives 0.
pub fn metrics_row(
    modality: Modality,
    eval_accuracy: Option<f64>,
    mac_count: u64,
    task: &str,
    latencies_ms: &[f64],
) -> MetricsRow {
    let latency_ms = if latencies_ms.is_empty() {
        0.0
    } else {
        latencies_ms.iter().sum::<f64>() / latencies_ms.len() as f64
    };
    MetricsRow {
        modality,
        accuracy_pct: eval_accuracy.map(|a| a * 100.0),
        mac_gop: MetricsRow::mac_count_to_gop(mac_count),
        task: task.to_string(),
        latency_ms,
    }
}

/// Bounded latency history per modality.
#[derive(Debug, Clone)]
pub struct LatencyWindow {
    capacity: usize,
    samples: BTreeMap<Modality, VecDeque<f64>>,
}

impl LatencyWindow {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            samples: BTreeMap::new(),
        }
    }

    pub fn record(&mut self, modality: Modality, latency_ms: f64) {
        let q = self.samples.entry(modality).or_default();
        if q.len() == self.capacity {
            q.pop_front();
        }
        q.push_back(latency_ms);
    }

    /// Modalities with at least one sample.
    pub fn active(&self) -> impl Iterator<Item = Modality> + '_ {
        self.samples.iter().filter(|(_, q)| !q.is_empty()).map(|(m, _)| *m)
    }

    /// The most recent `window` samples, oldest first.
    pub fn recent(&self, modality: Modality, window: usize) -> Vec<f64> {
        self.samples
            .get(&modality)
            .map(|q| q.iter().skip(q.len().saturating_sub(window)).copied().collect())
            .unwrap_or_default()
    }
}

/// One line of a profiling fixture: what a deployment measured for one
/// modality. Give the cost either as `mac_count` or as `mac_gop`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub modality: Modality,
    #[serde(default)]
    pub eval_accuracy: Option<f64>,
    #[serde(default)]
    pub mac_count: Option<u64>,
    #[serde(default)]
    pub mac_gop: Option<f64>,
    pub task: String,
    pub latencies_ms: Vec<f64>,
}

impl Measurement {
    pub fn row(&self) -> MetricsRow {
        let mut row = metrics_row(
            self.modality,
            self.eval_accuracy,
            self.mac_count.unwrap_or(0),
            &self.task,
            &self.latencies_ms,
        );
        if let (None, Some(gop)) = (self.mac_count, self.mac_gop) {
            row.mac_gop = gop;
        }
        row
    }
}

/// Parses an NDJSON measurement fixture into a report, one row per line.
pub fn report_from_measurements(text: &str) -> Result<MetricsReport, serde_json::Error> {
    let rows = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str::<Measurement>(l).map(|m| m.row()))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(MetricsReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_matches_arithmetic_oracle() {
        let samples: Vec<f64> = (0..37).map(|i| 3.0 + (i as f64 * 0.731).sin() * 2.0).collect();
        let mut oracle = 0.0;
        for s in &samples {
            oracle += s;
        }
        oracle /= samples.len() as f64;
        let row = metrics_row(Modality::Audio, None, 0, "Classification", &samples);
        assert!((row.latency_ms - oracle).abs() < 1e-9);
    }

    #[test]
    fn window_keeps_most_recent() {
        let mut w = LatencyWindow::new(3);
        for v in 1..=5 {
            w.record(Modality::TimeSeries, v as f64);
        }
        assert_eq!(w.recent(Modality::TimeSeries, 10), vec![3.0, 4.0, 5.0]);
        assert_eq!(w.recent(Modality::TimeSeries, 2), vec![4.0, 5.0]);
        assert!(w.recent(Modality::Video, 2).is_empty());
        assert_eq!(w.active().collect::<Vec<_>>(), vec![Modality::TimeSeries]);
    }

    #[test]
    fn table_two_fixture_row() {
        let latencies: Vec<f64> = (0..10).map(|i| 11.5 + if i % 2 == 0 { 0.25 } else { -0.25 }).collect();
        let row = metrics_row(
            Modality::TimeSeries,
            Some(0.9448),
            1_800_000_000,
            "Classification",
            &latencies,
        );
        assert_eq!(row.format(), "time_series\t94.48%\t1.8\tClassification\t11.5");
    }

    #[test]
    fn measurement_fixture_lines() {
        let text = r#"{"modality":"audio","eval_accuracy":0.928,"mac_gop":2.7,"task":"Classification","latencies_ms":[13.1]}
{"modality":"video","eval_accuracy":0.8873,"mac_count":4500000000,"task":"Captioning","latencies_ms":[13.0,14.0]}"#;
        let report = report_from_measurements(text).unwrap();
        assert_eq!(report.rows[0].format(), "audio\t92.80%\t2.7\tClassification\t13.1");
        assert_eq!(report.rows[1].format(), "video\t88.73%\t4.5\tCaptioning\t13.5");
    }
}
