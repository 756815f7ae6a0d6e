mod common;

use common::*;
use itsgw_core::dataset::{speed_labels, synthetic_speed_records, write_tabular_csv};
use itsgw_core::model::{JobKind, JobResult, JobStatus, Modality};

/// Records labeled with the opposite of what the model predicts drive the
/// window below threshold and schedule one retrain job.
#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn low_window_accuracy_schedules_a_retrain() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("train.csv");
    let records = synthetic_speed_records(60, 21);
    std::fs::write(&data, write_tabular_csv(&records, &speed_labels()).unwrap()).unwrap();

    let mut cfg = config();
    cfg.worker_count = 1;
    cfg.feedback_window = 4;
    cfg.feedback_threshold = 0.5;
    cfg.train_data.insert(Modality::TimeSeries, data);
    let gw = gateway_with_model(cfg);
    gw.start_workers();
    let classifier = gw.engine().classifier(Modality::TimeSeries).unwrap();

    for r in synthetic_speed_records(4, 2) {
        let predicted = classifier
            .classify(&itsgw_core::model::ModalityInput::TimeSeries(r.clone()))
            .unwrap()
            .class_index;
        let mut req = tabular_request(&r);
        req.params.label = Some(speed_labels().class_names()[1 - predicted].clone());
        let id = gw.submit(req).unwrap();
        wait_terminal(&gw, &id).await;
    }
    let jobs = wait_all_terminal(&gw, 5).await;
    let retrains: Vec<_> = jobs.iter().filter(|j| j.kind == JobKind::Retrain).collect();
    assert_eq!(retrains.len(), 1);
    let retrain = retrains[0];
    assert_eq!(retrain.status, JobStatus::Succeeded, "{:?}", retrain.error);
    let Some(JobResult::Retrain {
        window_accuracy,
        checkpoint,
        deployed,
        ..
    }) = &retrain.result
    else {
        panic!("{retrain:?}")
    };
    assert_eq!(*window_accuracy, 0.0);
    assert!(!deployed, "auto_deploy is off by default");
    assert!(std::path::Path::new(checkpoint.as_ref().unwrap()).exists());
    assert!(std::sync::Arc::ptr_eq(
        &classifier,
        &gw.engine().classifier(Modality::TimeSeries).unwrap()
    ));
    assert_eq!(
        gw.feedback_accuracy(Modality::TimeSeries),
        None,
        "window restarts after an event"
    );
}

#[tokio::test]
async fn retrain_without_data_fails_cleanly() {
    let mut cfg = config();
    cfg.feedback_window = 1;
    cfg.feedback_threshold = 0.5;
    let gw = gateway_with_model(cfg);
    gw.start_workers();
    let r = &synthetic_speed_records(1, 0)[0];
    let classifier = gw.engine().classifier(Modality::TimeSeries).unwrap();
    let predicted = classifier
        .classify(&itsgw_core::model::ModalityInput::TimeSeries(r.clone()))
        .unwrap()
        .class_index;
    let mut req = tabular_request(r);
    req.params.label = Some((1 - predicted).to_string());
    gw.submit(req).unwrap();
    let jobs = wait_all_terminal(&gw, 2).await;
    let retrain = jobs.iter().find(|j| j.kind == JobKind::Retrain).unwrap();
    assert_eq!(retrain.error.as_ref().unwrap().code, "NoTrainingData");
}
