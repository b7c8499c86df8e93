use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lod3_refine::cloud::write_point_cloud;
use lod3_refine::maps::{export_map_pgm, Channel};
use lod3_refine::model::{parse_model, serialize_model, validate_model};
use lod3_refine::pipeline::compute_maps;
use lod3_refine::synthetic::{box_building, generate, Scene, SceneSpec};
use lod3_refine::{BuildingModel, Point3, RunConfig};

const TS: &str = "2016-04-01T10:00:00Z";

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lod3-refine"))
}

fn write_scene(dir: &Path, scene: &Scene) -> (PathBuf, PathBuf) {
    let (m, c) = (dir.join("model.cm.json"), dir.join("scan.txt"));
    std::fs::write(&m, serialize_model(&scene.model)).unwrap();
    std::fs::write(&c, write_point_cloud(&scene.cloud)).unwrap();
    (m, c)
}

fn run(sub: &str, model: &Path, cloud: &Path, out: &Path, extra: &[&str]) -> Output {
    bin()
        .arg(sub)
        .arg("--model")
        .arg(model)
        .arg("--cloud")
        .arg(cloud)
        .arg("--out")
        .arg(out)
        .args(["--timestamp", TS])
        .args(extra)
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn refine_fixture_finds_two_windows() {
    let dir = tempfile::tempdir().unwrap();
    let (m, c) = write_scene(dir.path(), &generate(&SceneSpec::two_windows(1)));
    let out = dir.path().join("out");
    let o = run("refine", &m, &c, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let refined = parse_model(&std::fs::read(out.join("refined.cm.json")).unwrap()).unwrap();
    let b = &refined.buildings[0];
    assert_eq!(b.openings.len(), 2);
    assert!(validate_model(&refined).is_clean());
    assert!(std::fs::read_to_string(out.join("refined.gml")).unwrap().contains("bldg:Window"));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("report.json")).unwrap()).unwrap();
    assert_eq!((report["skipped"].as_u64(), report["findings"].as_u64()), (Some(0), Some(0)));

    let v = bin().arg("validate").arg("--model").arg(out.join("refined.cm.json")).output().unwrap();
    assert_eq!(v.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&v.stdout).contains("no findings"));
}

#[test]
fn missing_cloud_is_fatal_and_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let (m, _) = write_scene(dir.path(), &generate(&SceneSpec::two_windows(1)));
    let missing = dir.path().join("does-not-exist.txt");
    let o = run("refine", &m, &missing, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("does-not-exist.txt"), "{}", stderr(&o));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn bad_flag_values_are_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let (m, c) = write_scene(dir.path(), &generate(&SceneSpec::plain_wall(1)));
    let o = run("refine", &m, &c, &dir.path().join("out"), &["--voxel-size", "-1"]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    let o = run("refine", &m, &c, &dir.path().join("out2"), &["--timestamp", "noon"]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}

#[test]
fn skipped_instance_gives_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let (m, c) = write_scene(dir.path(), &generate(&SceneSpec::gable_window(3)));
    let out = dir.path().join("out");
    let o = run("refine", &m, &c, &out, &[]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("skipped"));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("report.json")).unwrap()).unwrap();
    assert!(report["skipped"].as_u64().unwrap() >= 1);
    let reasons: Vec<&serde_json::Value> = report["walls"]
        .as_array()
        .unwrap()
        .iter()
        .flat_map(|w| w["skipped"].as_array().unwrap())
        .map(|s| &s["reason"])
        .collect();
    assert!(!reasons.is_empty());
    // The model is still written and valid.
    let refined = parse_model(&std::fs::read(out.join("refined.cm.json")).unwrap()).unwrap();
    assert!(validate_model(&refined).is_clean());
}

#[test]
fn maps_match_the_library_export() {
    let dir = tempfile::tempdir().unwrap();
    let scene = generate(&SceneSpec::two_windows(4));
    let (m, c) = write_scene(dir.path(), &scene);
    let out = dir.path().join("maps");
    let o = run("maps", &m, &c, &out, &["--jobs", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let lib = compute_maps(&scene.model, &scene.cloud, &Default::default(), &RunConfig::default()).unwrap();
    let mut files: Vec<String> = std::fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    files.sort();
    assert_eq!(files.len(), 3 * lib.walls.len());
    for w in &lib.walls {
        for (suffix, map, ch) in [
            ("conflict", &w.conflict, Channel::Conflict),
            ("pointcloud", &w.point_labels, Channel::Openings),
            ("posterior", &w.posterior, Channel::Openings),
        ] {
            let got = std::fs::read(out.join(format!("{}_{suffix}.pgm", w.wall_id))).unwrap();
            assert_eq!(got, export_map_pgm(map, ch).unwrap(), "{} {suffix}", w.wall_id);
        }
    }
}

#[test]
fn validate_reports_open_shells() {
    let dir = tempfile::tempdir().unwrap();
    let mut m = BuildingModel {
        crs_label: "local".into(),
        buildings: vec![box_building("B", Point3::new(0.0, 0.0, 0.0), Point3::new(5.0, 4.0, 3.0), 2)],
        ..Default::default()
    };
    let p = dir.path().join("m.cm.json");
    std::fs::write(&p, serialize_model(&m)).unwrap();
    let o = bin().arg("validate").arg("--model").arg(&p).output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    m.buildings[0].surfaces.retain(|s| !s.id.ends_with("roof"));
    std::fs::write(&p, serialize_model(&m)).unwrap();
    let o = bin().arg("validate").arg("--model").arg(&p).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stdout).contains("4 findings"));
    std::fs::write(&p, b"{not json").unwrap();
    assert_eq!(bin().arg("validate").arg("--model").arg(&p).output().unwrap().status.code(), Some(1));
}

#[test]
fn runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (m, c) = write_scene(dir.path(), &generate(&SceneSpec::mixed_facade(2)));
    let outs: Vec<PathBuf> = [("a", "1"), ("b", "4")]
        .iter()
        .map(|(name, jobs)| {
            let out = dir.path().join(name);
            let o = run("refine", &m, &c, &out, &["--jobs", jobs, "--export-maps"]);
            assert!(o.status.code().unwrap() <= 2, "{}", stderr(&o));
            out
        })
        .collect();
    for f in ["refined.cm.json", "refined.gml", "report.json"] {
        assert_eq!(std::fs::read(outs[0].join(f)).unwrap(), std::fs::read(outs[1].join(f)).unwrap(), "{f}");
    }
    for e in std::fs::read_dir(outs[0].join("maps")).unwrap() {
        let name = e.unwrap().file_name();
        assert_eq!(
            std::fs::read(outs[0].join("maps").join(&name)).unwrap(),
            std::fs::read(outs[1].join("maps").join(&name)).unwrap()
        );
    }
}
