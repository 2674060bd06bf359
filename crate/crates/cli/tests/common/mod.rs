#![allow(dead_code)]

use std::path::{Path, PathBuf};

use eventscope::domain::EventRegion;
use eventscope::eval::dvc_to_json;
use eventscope::media::FrameManifest;
use eventscope::providers::stub::StubSpec;
use eventscope::synthetic;

pub const QA_MICRO_ITEMS: usize = 8;

const STUB_CONFIG: &str = r#"stubs = "stubs.json"

[providers]
image.endpoint = "stub:spec"
text.endpoint = "stub:spec"
caption.endpoint = "stub:spec"
scene_graph.endpoint = "stub:spec"
oie.endpoint = "stub:spec"
llm.endpoint = "stub:spec"
"#;

pub fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_eventscope")
}

fn stubs_json(spec: &StubSpec) -> String {
    serde_json::to_string_pretty(spec).unwrap() + "\n"
}

fn manifest_files(dir: &str, manifests: &[FrameManifest]) -> Vec<(String, String)> {
    manifests
        .iter()
        .map(|m| (format!("{dir}/manifests/{}.json", m.video.video_id), m.to_json() + "\n"))
        .collect()
}

/// Every generated fixture file, relative to `fixtures/`.
pub fn fixture_files() -> Vec<(String, String)> {
    let mut files = Vec::new();

    let qa = synthetic::qa_world(QA_MICRO_ITEMS);
    files.extend(manifest_files("qa_micro", &qa.manifests));
    files.push(("qa_micro/dataset.jsonl".into(), qa.dataset.to_jsonl()));
    files.push(("qa_micro/stubs.json".into(), stubs_json(&qa.stubs)));
    files.push(("qa_micro/config.toml".into(), format!("task = \"qa\"\n{STUB_CONFIG}")));

    let dvc = synthetic::dvc_world();
    files.extend(manifest_files("dvc_micro", &dvc.manifests));
    files.push(("dvc_micro/dataset.json".into(), dvc_to_json(&dvc.dataset) + "\n"));
    files.push(("dvc_micro/stubs.json".into(), stubs_json(&dvc.stubs)));
    files.push(("dvc_micro/config.toml".into(), format!("task = \"dvc\"\n{STUB_CONFIG}")));

    let peaked = synthetic::peaked_world();
    files.push(("peaked/manifest.json".into(), peaked.manifest.to_json() + "\n"));
    files.push(("peaked/stubs.json".into(), stubs_json(&peaked.stubs)));
    files.push((
        "peaked/regions.json".into(),
        serde_json::to_string(&[peaked.start]).unwrap() + "\n",
    ));
    files.push(("peaked/instructions.txt".into(), format!("{}\n", peaked.instruction)));
    files.push(("peaked/config.toml".into(), format!("task = \"dvc\"\n{STUB_CONFIG}")));
    files
}

pub fn blessing() -> bool {
    std::env::var_os("EVENTSCOPE_BLESS").is_some_and(|v| v == "1")
}

/// Compare `actual` with the stored file, or overwrite it when blessing.
pub fn check_golden(rel: &str, actual: &str) -> Result<(), String> {
    let path = fixtures_dir().join(rel);
    if blessing() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, actual).unwrap();
        return Ok(());
    }
    let stored = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    if stored == actual {
        Ok(())
    } else {
        Err(format!("{rel} is stale; rerun with EVENTSCOPE_BLESS=1"))
    }
}

pub fn peaked_truth() -> EventRegion {
    synthetic::PEAKED_TRUTH
}
