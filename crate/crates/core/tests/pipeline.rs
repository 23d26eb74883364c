use std::fs;
use std::path::Path;

use vlbias::config::AuditConfig;
use vlbias::pipeline::{build_outputs, run_pipeline, REPORT_FILE};
use vlbias::synthetic::write_demo;

fn demo(dir: &Path) -> AuditConfig {
    let path = write_demo(dir, &[0, 1, 2, 3], 24, 11).unwrap();
    AuditConfig::load(&path).unwrap()
}

fn listing(dir: &Path) -> Vec<String> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(dir).unwrap().to_string_lossy().into_owned());
            }
        }
    }
    out.sort();
    out
}

#[test]
fn full_demo_run_writes_every_section() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = demo(tmp.path());
    let report = run_pipeline(&cfg, tmp.path()).unwrap();
    let out = tmp.path().join("audit-out");
    let files = listing(&out);
    for f in [
        "causalface/similarity.csv",
        "causalface/similarity.json",
        "causalface/variation.csv",
        "causalface/variation.json",
        "causalface/trends.json",
        "causalface/ellipses.json",
        "causalface/confounds.json",
        "causalface/densities.json",
        "causalface/neutral_tests.json",
        "causalface/valence_correlations.json",
        "metrics.json",
        "valence_geometry.json",
        REPORT_FILE,
    ] {
        assert!(files.contains(&f.to_string()), "missing {f}: {files:?}");
    }
    assert_eq!(report.files.len() + 1, files.len());
    assert!(report.skipped.is_empty(), "{:?}", report.skipped);
    assert_eq!(report.inputs.len(), 4);

    let metrics: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["weat"]["columns"][0], "causalface");
    assert_eq!(metrics["markedness"]["rows"].as_array().unwrap().len(), 5);
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = demo(tmp.path());
    let (_, a) = build_outputs(&cfg, tmp.path()).unwrap();
    let (_, b) = build_outputs(&cfg, tmp.path()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn empty_sections_only_score_similarity() {
    let tmp = tempfile::tempdir().unwrap();
    demo(tmp.path());
    let cfg = AuditConfig::parse(
        r#"
text_embeddings = "texts.emb"
[[datasets]]
name = "cf"
manifest = "manifest.json"
embeddings = "images.emb"
"#,
    )
    .unwrap();
    run_pipeline(&cfg, tmp.path()).unwrap();
    assert_eq!(
        listing(&tmp.path().join("audit-out")),
        ["cf/similarity.csv", "cf/similarity.json", REPORT_FILE]
    );
}

#[test]
fn failure_leaves_no_partial_output() {
    let tmp = tempfile::tempdir().unwrap();
    demo(tmp.path());
    let cfg = AuditConfig::parse(
        r#"
text_embeddings = "texts.emb"
[[datasets]]
name = "cf"
manifest = "manifest.json"
embeddings = "missing.emb"
"#,
    )
    .unwrap();
    assert!(run_pipeline(&cfg, tmp.path()).is_err());
    assert!(!tmp.path().join("audit-out").exists());
    let stray: Vec<_> = fs::read_dir(tmp.path())
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_name().to_string_lossy().contains("staging"))
        .collect();
    assert!(stray.is_empty());
}

#[test]
fn refuses_to_clobber_foreign_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = demo(tmp.path());
    let out = tmp.path().join("audit-out");
    fs::create_dir_all(&out).unwrap();
    fs::write(out.join("notes.txt"), "keep").unwrap();
    let mut cfg = cfg;
    cfg.metrics = Default::default();
    cfg.variation.enabled = false;
    cfg.trends.enabled = false;
    cfg.valence.enabled = false;
    assert!(run_pipeline(&cfg, tmp.path()).is_err());
    assert_eq!(fs::read_to_string(out.join("notes.txt")).unwrap(), "keep");
}

#[test]
fn missing_text_embeddings_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    demo(tmp.path());
    let cfg = AuditConfig::parse(
        r#"
[[datasets]]
name = "cf"
manifest = "manifest.json"
embeddings = "images.emb"
"#,
    )
    .unwrap();
    let err = run_pipeline(&cfg, tmp.path()).unwrap_err().to_string();
    assert!(err.contains("text_embeddings"), "{err}");
}
