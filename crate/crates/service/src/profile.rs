//! Offline profiling behind `itsgw profile`.
//!
//! With `profile_measurements` set the report comes from that fixture.
//! Otherwise every configured model is timed on its `train_data` set (one
//! `classify` call per item, at most `metrics_window` items) and evaluated on
//! the whole set; `train_data.video` names a frame directory that is
//! captioned `metrics_window` times, capped at 10.

use std::time::Instant;

use itsgw_core::api::JobParams;
use itsgw_core::model::{MetricsReport, Modality};
use itsgw_core::visual::load_frame_dir;

use crate::config::GatewayConfig;
use crate::engine::{load_inputs, Engine};
use crate::error::Result;
use crate::metrics::{metrics_row, report_from_measurements};

pub fn profile(config: &GatewayConfig) -> Result<MetricsReport> {
    if let Some(path) = &config.profile_measurements {
        let text = std::fs::read_to_string(path)?;
        return report_from_measurements(&text)
            .map_err(|e| itsgw_core::Error::InvalidInput(format!("{}: {e}", path.display())).into());
    }
    let engine = Engine::from_config(config)?;
    let mut rows = Vec::new();
    for modality in Modality::ALL {
        let Some(data) = config.train_data.get(&modality) else {
            continue;
        };
        if modality == Modality::Video {
            let seq = load_frame_dir(data)?;
            let options = engine.chain_options(&JobParams::default());
            let mut latencies = Vec::new();
            for _ in 0..config.metrics_window.min(10) {
                let t = Instant::now();
                engine.caption(&seq, &options)?;
                latencies.push(t.elapsed().as_secs_f64() * 1000.0);
            }
            rows.push(metrics_row(
                modality,
                None,
                0,
                engine.labels_for(modality).task_kind().label(),
                &latencies,
            ));
            continue;
        }
        let Some(classifier) = engine.classifier(modality) else {
            continue;
        };
        let inputs = load_inputs(modality, data, &classifier.labels)?;
        let mut latencies = Vec::new();
        for input in inputs.iter().take(config.metrics_window) {
            let t = Instant::now();
            classifier.classify(input)?;
            latencies.push(t.elapsed().as_secs_f64() * 1000.0);
        }
        let accuracy = (*classifier).clone().evaluate(&inputs)?;
        let c = classifier.model.config();
        rows.push(metrics_row(
            modality,
            Some(accuracy),
            c.count_macs(c.max_len),
            classifier.labels.task_kind().label(),
            &latencies,
        ));
    }
    Ok(MetricsReport { rows })
}
