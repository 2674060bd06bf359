mod common;

use std::path::PathBuf;

use eventscope_cli::commands::{cmd_run, RunArgs};
use eventscope_cli::config::Overrides;
use eventscope_cli::output::to_json;

use common::{check_golden, fixture_files, fixtures_dir};

#[test]
fn bundled_fixtures_match_the_synthetic_worlds() {
    let stale: Vec<String> = fixture_files()
        .into_iter()
        .filter_map(|(rel, text)| check_golden(&rel, &text).err())
        .collect();
    assert!(stale.is_empty(), "{stale:#?}");
}

fn run_micro(name: &str, dataset: &str) -> String {
    let dir = fixtures_dir().join(name);
    let out = tempfile::tempdir().unwrap();
    let manifests = [dir.join("manifests")];
    let dataset: PathBuf = dir.join(dataset);
    let config = dir.join("config.toml");
    let responses = cmd_run(&RunArgs {
        manifests: &manifests,
        dataset: Some(&dataset),
        out_dir: out.path(),
        true_proposals: None,
        config: Some(&config),
        overrides: &Overrides::default(),
    })
    .unwrap();
    let written = std::fs::read_to_string(out.path().join("responses.json")).unwrap();
    assert_eq!(written, to_json(&responses));
    written
}

#[test]
fn qa_micro_responses_golden() {
    let text = run_micro("qa_micro", "dataset.jsonl");
    check_golden("qa_micro/expected_responses.json", &text).unwrap();
}

#[test]
fn dvc_micro_responses_golden() {
    let text = run_micro("dvc_micro", "dataset.json");
    check_golden("dvc_micro/expected_responses.json", &text).unwrap();
}
