use std::path::Path;
use std::sync::Arc;

use ncx_core::gateway::{GatewayConfig, ModelGateway};
use ncx_core::pipeline::{run, Input, PipelineConfig};

fn replay_gateway() -> Arc<dyn ModelGateway> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let mut cfg =
        GatewayConfig::from_toml(&std::fs::read_to_string(dir.join("replay.toml")).unwrap())
            .unwrap();
    cfg.fixture = Some(dir.join(cfg.fixture.unwrap()));
    Arc::new(cfg.build().unwrap())
}

fn case_study_run() -> ncx_core::pipeline::PipelineResult {
    let desc = include_str!("fixtures/case_study.txt");
    let cfg = PipelineConfig {
        gateway: Some(replay_gateway()),
        ..PipelineConfig::default()
    };
    run(Input::Description(desc.to_string()), &cfg)
}

#[test]
fn description_replays_to_the_case_study() {
    let r = case_study_run();
    assert!(r.success_flag, "{:?}", r.failure);
    assert!((r.objective.unwrap() - 54.8325).abs() < 1e-3);
    assert!(r.consistency.as_ref().unwrap().consistent());
    assert!(!r.consistency.unwrap().alignment.skipped);
}

#[test]
fn replayed_runs_are_identical() {
    assert_eq!(
        case_study_run().to_json_without_timings(),
        case_study_run().to_json_without_timings()
    );
}

#[test]
fn unknown_prompt_is_a_gateway_error() {
    let cfg = PipelineConfig {
        gateway: Some(replay_gateway()),
        ..PipelineConfig::default()
    };
    let r = run(Input::Description("something else entirely".into()), &cfg);
    assert!(!r.execute_flag);
    assert_eq!(
        r.failure.unwrap().class,
        ncx_core::pipeline::ErrorClass::GatewayError
    );
}
