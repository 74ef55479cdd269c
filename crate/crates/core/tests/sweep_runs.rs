use std::fs;
use std::path::Path;

use bicavity::rcwa::MapResult;
use bicavity::sweep::{apply_override, run_sweep, JobConfig, RunOptions, TaskOutput};
use bicavity::Error;
use serde_json::{json, Value};

fn map_job(cache: bool) -> Value {
    json!({
        "task": "map",
        "structure": {
            "kind": "slab",
            "period": {"value": 0.6, "unit": "lambda0"},
            "hole_radius": {"value": 0.15, "unit": "lambda0"},
            "thickness": {"value": 100, "unit": "nm"}
        },
        "solver": {"half_order": 2},
        "quantity": "reflectance",
        "axes": [
            {"name": "freq", "min": {"value": 0.95, "unit": "f0"}, "max": {"value": 1.05, "unit": "f0"}, "count": 6},
            {"name": "hole_radius", "min": {"value": 0.1, "unit": "lambda0"}, "max": {"value": 0.2, "unit": "lambda0"}, "count": 4}
        ],
        "output": {"cache": cache}
    })
}

fn run(v: &Value, dir: &Path, threads: Option<usize>) -> bicavity::Result<bicavity::sweep::RunRecord> {
    let cfg = JobConfig::from_value(v)?;
    let opts = RunOptions { threads, out_dir: Some(dir.to_path_buf()), ..Default::default() };
    run_sweep(&cfg, &opts).map(|(r, _)| r)
}

#[test]
fn cached_rerun_is_byte_identical_without_solves() {
    let dir = tempfile::tempdir().unwrap();
    let first = run(&map_job(true), dir.path(), None).unwrap();
    assert_eq!(first.solver_calls, 24);
    assert!(!first.cache_hit);
    let csv = fs::read(dir.path().join("map.csv")).unwrap();
    let json = fs::read(dir.path().join("map.json")).unwrap();

    let second = run(&map_job(true), dir.path(), None).unwrap();
    assert_eq!(second.solver_calls, 0);
    assert!(second.cache_hit);
    assert_eq!(fs::read(dir.path().join("map.csv")).unwrap(), csv);
    assert_eq!(fs::read(dir.path().join("map.json")).unwrap(), json);
    assert_eq!(first.outputs, second.outputs);
    assert_eq!(first.config_hash, second.config_hash);
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ra = run(&map_job(false), a.path(), Some(1)).unwrap();
    let rb = run(&map_job(false), b.path(), Some(3)).unwrap();
    // map.json carries wall-clock stamps, so compare its values instead.
    assert_eq!(ra.outputs["map.csv"], rb.outputs["map.csv"]);
    let load = |d: &Path| MapResult::from_json(&fs::read_to_string(d.join("map.json")).unwrap()).unwrap();
    let (ma, mb) = (load(a.path()), load(b.path()));
    assert_eq!(ma.values, mb.values);
    assert_eq!(ma.config_hash, mb.config_hash);
}

#[test]
fn record_lists_digests_of_written_files() {
    let dir = tempfile::tempdir().unwrap();
    let rec = run(&map_job(false), dir.path(), None).unwrap();
    let on_disk: bicavity::sweep::RunRecord = serde_json::from_str(&fs::read_to_string(dir.path().join("runrecord.json")).unwrap()).unwrap();
    assert_eq!(on_disk, rec);
    assert_eq!(rec.outputs.keys().collect::<Vec<_>>(), ["map.csv", "map.json"]);
    assert_eq!(rec.points.len(), 24);
    assert!(rec.points.iter().all(|p| p.ok));
    assert!(rec.started <= rec.finished);
}

#[test]
fn unwritable_output_fails_before_solving() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, b"x").unwrap();
    match run(&map_job(false), &blocker.join("out"), None) {
        Err(Error::Io(_)) => {}
        other => panic!("{other:?}"),
    }
}

#[test]
fn invalid_points_are_recorded_not_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = map_job(false);
    // Radii up to 0.35 exceed half the 0.6 period for the last column.
    apply_override(&mut v, r#"axes.1.max={"value": 0.35, "unit": "lambda0"}"#).unwrap();
    let rec = run(&v, dir.path(), None).unwrap();
    assert_eq!(rec.failed_points(), 6);
    let map = MapResult::from_json(&fs::read_to_string(dir.path().join("map.json")).unwrap()).unwrap();
    assert!(map.values.iter().all(|row| row[3].is_nan() && row[..3].iter().all(|x| x.is_finite())));
    assert!(fs::read_to_string(dir.path().join("map.json")).unwrap().contains("null"));
}

#[test]
fn any_field_change_changes_the_hash() {
    let base = JobConfig::from_value(&map_job(true)).unwrap().hash;
    for o in [
        "solver.half_order=3",
        r#"structure.thickness={"value": 101, "unit": "nm"}"#,
        "axes.0.count=7",
        "quantity=\"transmittance\"",
    ] {
        let mut v = map_job(true);
        apply_override(&mut v, o).unwrap();
        assert_ne!(JobConfig::from_value(&v).unwrap().hash, base, "{o}");
    }
    let mut v = map_job(true);
    apply_override(&mut v, "output.dir=\"elsewhere\"").unwrap();
    assert_eq!(JobConfig::from_value(&v).unwrap().hash, base);
}

#[test]
fn table_tasks_run_without_output_directory() {
    let v = json!({
        "task": "fp-compare",
        "mechanics": {"frequency": {"value": 500, "unit": "kHz"}, "mass": {"value": 40, "unit": "ng"}, "temperature": {"value": 4, "unit": "K"}, "q_m": 1e6},
        "fabry_perot": {"finesse": 5e5, "wavelength": {"value": 1550, "unit": "nm"}, "lengths": [{"value": 17, "unit": "um"}, {"value": 0.5, "unit": "lambda0"}]}
    });
    let (rec, out) = run_sweep(&JobConfig::from_value(&v).unwrap(), &RunOptions::default()).unwrap();
    assert!(rec.outputs.is_empty());
    let TaskOutput::FpCompare { rows } = out else { panic!() };
    let ratio = rows[0].figure.g0_over_kappa / rows[1].figure.g0_over_kappa;
    assert!((ratio - 1.0).abs() < 1e-12);
}
