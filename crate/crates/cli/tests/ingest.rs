use std::fs;

use sicerp::dataset::{ingest, read_jsonl, FeatureMode};
use sicerp::CliError;

fn skeleton_rows(m: usize, joints: usize, offset: f64) -> Vec<Vec<f64>> {
    (0..m)
        .map(|t| (0..3 * joints).map(|k| offset + (t * 7 + k * 3) as f64 * 0.01).collect())
        .collect()
}

fn csv(rows: &[Vec<f64>]) -> String {
    rows.iter()
        .map(|r| r.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","))
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn minimal_manifest_with_csv_files() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("b.csv"), csv(&skeleton_rows(6, 20, 0.0))).unwrap();
    fs::write(dir.path().join("a.csv"), csv(&skeleton_rows(9, 20, 1.0))).unwrap();
    let manifest = r#"{"mode": "coordinates", "samples": [
        {"id": "b", "label": "wave", "subject": 2, "path": "b.csv"},
        {"id": "a", "label": "kick", "subject": 1, "path": "a.csv"}]}"#;
    let path = dir.path().join("manifest.json");
    fs::write(&path, manifest).unwrap();

    let data = ingest(&path, None).unwrap();
    assert_eq!(data.len(), 2);
    // ordered by id
    assert_eq!(data.samples[0].id, "a");
    assert_eq!((data.samples[0].features.dim(), data.samples[0].features.len()), (60, 9));
    assert_eq!((data.samples[1].features.dim(), data.samples[1].features.len()), (60, 6));
    assert_eq!(data.samples[1].subject, Some(2));

    let vel = ingest(&path, Some(FeatureMode::Velocity)).unwrap();
    assert_eq!((vel.samples[0].features.dim(), vel.samples[0].features.len()), (120, 7));
}

#[test]
fn raw_mode_keeps_rows_as_features() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.jsonl");
    fs::write(
        &path,
        "{\"id\": \"x\", \"label\": \"l\", \"frames\": [[1, 2], [3, 4.5], [0, 0]]}\n\n{\"id\": \"w\", \"label\": \"l\", \"frames\": [[1, 1], [2, 2]]}\n",
    )
    .unwrap();
    let data = read_jsonl(&path, FeatureMode::Raw).unwrap();
    assert_eq!(data.samples[1].features.frames(), &[vec![1.0, 2.0], vec![3.0, 4.5], vec![0.0, 0.0]]);

    // writing and reading back is exact
    let back = dir.path().join("back.jsonl");
    data.write_jsonl(&back).unwrap();
    assert_eq!(read_jsonl(&back, FeatureMode::Raw).unwrap(), data);
}

#[test]
fn malformed_rows_report_file_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("s.csv");
    fs::write(&file, "0,0,0\n1,1,1\n\n2,2\n").unwrap();
    let manifest = dir.path().join("m.json");
    fs::write(&manifest, r#"{"samples": [{"id": "s", "label": "a", "path": "s.csv"}]}"#).unwrap();
    match ingest(&manifest, Some(FeatureMode::Coordinates)) {
        Err(CliError::Format { file: f, line, .. }) => {
            assert!(f.ends_with("s.csv"));
            assert_eq!(line, 4);
        }
        other => panic!("expected a format error, got {other:?}"),
    }

    fs::write(&file, "0,0,0\n1,NaN,1\n").unwrap();
    assert!(matches!(ingest(&manifest, None), Err(CliError::Format { line: 2, .. })));

    let jsonl = dir.path().join("d.jsonl");
    fs::write(&jsonl, "{\"id\": \"a\", \"label\": \"x\", \"frames\": [[1, 2], [3]]}\n").unwrap();
    let err = read_jsonl(&jsonl, FeatureMode::Raw).unwrap_err();
    assert!(matches!(err, CliError::Format { line: 1, .. }), "{err}");
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn manifest_problems() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("m.json");
    fs::write(&manifest, r#"{"samples": [{"id": "s", "label": "a", "path": "missing.csv"}]}"#).unwrap();
    assert!(matches!(ingest(&manifest, None), Err(CliError::NotFound(_))));

    fs::write(
        &manifest,
        r#"{"samples": [{"id": "s", "label": "a", "frames": [[1], [2]]}, {"id": "s", "label": "b", "frames": [[1], [2]]}]}"#,
    )
    .unwrap();
    assert!(matches!(ingest(&manifest, None), Err(CliError::Config(_))));

    fs::write(&manifest, r#"{"samples": [{"id": "s", "label": "", "frames": [[1], [2]]}]}"#).unwrap();
    assert!(matches!(ingest(&manifest, None), Err(CliError::Config(_))));
}
