use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use trm::segments::save_segments;
use trm::topomap::load_topographic;
use trm::trm_core::data::{generate_synthetic, EegSegmentSet, Segment, SynthSpec};
use trm::trm_core::montage::gather_from_topographic;
use trm::trm_core::Tensor;

fn montage(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../montages")
        .join(name)
}

fn trm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_trm"))
        .args(args)
        .env_remove("TRM_PRECISION")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn failure(o: &Output) -> (i32, String) {
    (
        o.status.code().unwrap(),
        String::from_utf8_lossy(&o.stderr).into_owned(),
    )
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Small synthetic set on the demo montage; short segments keep runs quick.
fn write_small_set(path: &Path) -> EegSegmentSet {
    let m = trm::montage_file::load_montage(&montage("demo-20ch-5x6.json")).unwrap();
    let mut spec = SynthSpec::localized(&m, 2, 4).unwrap();
    spec.time_points = 100;
    spec.segments_per_class = 12;
    spec.seed = 4;
    let set = generate_synthetic(&spec).unwrap();
    save_segments(&set, path).unwrap();
    set
}

#[test]
fn params_prints_published_counts() {
    for (file, k, expected) in [
        ("ebdsdd-55ch-7x9.json", "5", "46860"),
        ("ebdsdd-55ch-7x9.json", "3", "64130"),
        ("hgd-44ch-7x7.json", "5", "18612"),
        ("hgd-44ch-7x7.json", "3", "35332"),
    ] {
        let out = trm(&["params", "--montage", p(&montage(file)), "--k", k]);
        assert_eq!(stdout(&out).trim(), expected, "{file} k={k}");
    }
}

#[test]
fn params_on_single_cell_montage() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("one.json");
    std::fs::write(
        &path,
        r#"{"name":"one","grid_height":1,"grid_width":1,"channels":[{"name":"Cz","row":0,"col":0}]}"#,
    )
    .unwrap();
    assert_eq!(stdout(&trm(&["params", "--montage", p(&path), "--k", "3"])).trim(), "2");
}

#[test]
fn params_summary_totals_match_counts() {
    let out = stdout(&trm(&[
        "params",
        "--montage",
        p(&montage("ebdsdd-55ch-7x9.json")),
        "--k",
        "5",
        "--summary",
        "--format",
        "csv",
    ]));
    let trm_total: usize = out
        .lines()
        .filter(|l| l.starts_with("trm."))
        .map(|l| l.rsplit(',').next().unwrap().parse::<usize>().unwrap())
        .sum();
    assert_eq!(trm_total, 46860);
    assert!(out.lines().last().unwrap().starts_with("total,,"));
}

#[test]
fn schedule_step_counts() {
    for (grid, k, steps) in [("7x9", "5", 2), ("7x7", "3", 3), ("1x1", "3", 1)] {
        let out = stdout(&trm(&["schedule", "--grid", grid, "--k", k, "--format", "csv"]));
        let rows: Vec<&str> = out.lines().skip(1).collect();
        assert_eq!(rows.len(), steps, "{grid} k={k}");
        assert!(rows.last().unwrap().contains(",1,1,"), "{out}");
    }
}

#[test]
fn validation_failures_exit_with_2() {
    let (code, _) = failure(&trm(&["schedule", "--grid", "7by9", "--k", "5"]));
    assert_eq!(code, 2);
    let (code, err) = failure(&trm(&["schedule", "--grid", "7x9", "--k", "1"]));
    assert_eq!(code, 2);
    assert!(err.starts_with("error: validation: "), "{err}");
    let (code, err) = failure(&trm(&["params", "--montage", "/nonexistent/montage.json", "--k", "3"]));
    assert_eq!(code, 2);
    assert!(err.starts_with("error: io: "), "{err}");
}

#[test]
fn precision_variable_is_validated() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.etsr");
    write_small_set(&data);
    let out = Command::new(env!("CARGO_BIN_EXE_trm"))
        .args([
            "train",
            "--data",
            p(&data),
            "--epochs",
            "1",
            "--out",
            p(&dir.path().join("r")),
        ])
        .env("TRM_PRECISION", "double")
        .output()
        .unwrap();
    let (code, err) = failure(&out);
    assert_eq!(code, 2);
    assert!(err.contains("TRM_PRECISION"), "{err}");
}

#[test]
fn non_finite_data_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("nan.etsr");
    let segments = (0..8)
        .map(|i| Segment {
            label: i % 2,
            data: (0..2 * 100)
                .map(|j| if j == 7 { f32::NAN } else { j as f32 * 0.01 })
                .collect(),
        })
        .collect();
    let set = EegSegmentSet::new(vec!["A".into(), "B".into()], 100.0, 2, 100, segments).unwrap();
    save_segments(&set, &data).unwrap();
    let (code, err) = failure(&trm(&[
        "train",
        "--data",
        p(&data),
        "--epochs",
        "1",
        "--out",
        p(&dir.path().join("r")),
    ]));
    assert_eq!(code, 3, "{err}");
    assert!(err.starts_with("error: numerical: "), "{err}");
}

#[test]
fn map_dump_round_trips_and_leaves_empty_cells_zero() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.etsr");
    let set = write_small_set(&data);
    let dump = dir.path().join("map.bin");
    let m_path = montage("demo-20ch-5x6.json");
    stdout(&trm(&[
        "map",
        "--data",
        p(&data),
        "--montage",
        p(&m_path),
        "--segment",
        "5",
        "--out",
        p(&dump),
    ]));
    let topo = load_topographic(&dump).unwrap();
    let m = trm::montage_file::load_montage(&m_path).unwrap();
    assert_eq!((topo.height(), topo.width(), topo.time_points()), (5, 6, 100));
    for r in 0..5 {
        for c in 0..6 {
            if m.channel_at(r, c).is_none() {
                assert!((0..100).all(|t| topo.at(r, c, t).to_bits() == 0));
            }
        }
    }
    let back: Tensor<f32> = gather_from_topographic(&topo, &m).unwrap();
    let original: Vec<u32> = set.segments()[5].data.iter().map(|v| v.to_bits()).collect();
    assert_eq!(back.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(), original);

    let (code, err) = failure(&trm(&[
        "map",
        "--data",
        p(&data),
        "--montage",
        p(&m_path),
        "--segment",
        "24",
        "--out",
        p(&dump),
    ]));
    assert_eq!(code, 2, "{err}");
}

#[test]
fn map_of_zero_segment_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("z.etsr");
    let m = trm::montage_file::load_montage(&montage("hgd-44ch-7x7.json")).unwrap();
    let names = m.channel_names().map(String::from).collect();
    let set = EegSegmentSet::new(
        names,
        250.0,
        1,
        16,
        vec![Segment {
            label: 0,
            data: vec![0.0; 44 * 16],
        }],
    )
    .unwrap();
    save_segments(&set, &data).unwrap();
    let dump = dir.path().join("z.bin");
    stdout(&trm(&[
        "map",
        "--data",
        p(&data),
        "--montage",
        p(&montage("hgd-44ch-7x7.json")),
        "--segment",
        "0",
        "--out",
        p(&dump),
    ]));
    let bytes = std::fs::read(&dump).unwrap();
    assert_eq!(bytes.len(), 16 + 4 * 7 * 7 * 16);
    assert!(bytes[16..].iter().all(|&b| b == 0));
}

#[test]
fn one_epoch_gives_one_row_per_fold_and_checkpoints_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.etsr");
    write_small_set(&data);
    let out = dir.path().join("run");
    let m = montage("demo-20ch-5x6.json");
    stdout(&trm(&[
        "train",
        "--data",
        p(&data),
        "--montage",
        p(&m),
        "--trm",
        "3",
        "--epochs",
        "1",
        "--out",
        p(&out),
    ]));
    for fold in 0..4 {
        let report = std::fs::read_to_string(out.join(format!("fold{fold}/report.csv"))).unwrap();
        assert_eq!(report.lines().count(), 2, "{report}");
        assert!(report.starts_with("epoch,train_loss,val_loss\n0,"));
    }
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 5);
    assert!(out.join("manifest.json").exists());
    let manifest = trm::manifest::RunManifest::load(&out.join("manifest.json")).unwrap();
    assert_eq!(
        (manifest.trm_k, manifest.protocol.as_str(), manifest.train.epochs),
        (Some(3), "cv4", 1)
    );

    let ckpt = out.join("fold0/best.trmc");
    let eval = stdout(&trm(&[
        "eval",
        "--data",
        p(&data),
        "--montage",
        p(&m),
        "--trm",
        "3",
        "--checkpoint",
        p(&ckpt),
    ]));
    let row: Vec<f64> = eval
        .lines()
        .nth(1)
        .unwrap()
        .split(',')
        .map(|v| v.parse().unwrap())
        .collect();
    assert!(row[0].is_finite() && (0.0..=1.0).contains(&row[1]));
    // a raw model cannot load a TRM checkpoint
    let (code, _) = failure(&trm(&["eval", "--data", p(&data), "--checkpoint", p(&ckpt)]));
    assert_eq!(code, 2);
}

#[test]
fn split_protocol_with_external_test_file() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.etsr");
    write_small_set(&data);
    let out = dir.path().join("run");
    stdout(&trm(&[
        "train",
        "--data",
        p(&data),
        "--test",
        p(&data),
        "--protocol",
        "split",
        "--epochs",
        "2",
        "--out",
        p(&out),
    ]));
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 2);
    assert!(summary.lines().nth(1).unwrap().starts_with("split,"));
    let (code, _) = failure(&trm(&[
        "train",
        "--data",
        p(&data),
        "--test",
        p(&data),
        "--protocol",
        "cv4",
        "--epochs",
        "1",
        "--out",
        p(&out),
    ]));
    assert_eq!(code, 2);
}

#[test]
fn trm_without_montage_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.etsr");
    write_small_set(&data);
    let (code, err) = failure(&trm(&[
        "train",
        "--data",
        p(&data),
        "--trm",
        "5",
        "--out",
        p(&dir.path().join("r")),
    ]));
    assert_eq!(code, 2);
    assert!(err.contains("--montage"), "{err}");
}

#[test]
fn compare_reports_paired_t_test() {
    let dir = tempfile::tempdir().unwrap();
    let table = dir.path().join("table.csv");
    std::fs::write(&table, "subject,A,B\n1,1,2\n2,2,3\n3,3,4\n4,4,5\n5,5,7\n").unwrap();
    let a = format!("{}:A", p(&table));
    let b = format!("{}:B", p(&table));
    let out = stdout(&trm(&["compare", "--a", &a, "--b", &b]));
    let row: Vec<f64> = out
        .lines()
        .nth(1)
        .unwrap()
        .split(',')
        .map(|v| v.parse().unwrap())
        .collect();
    assert!((row[0] + 6.0).abs() < 1e-9);
    assert_eq!(row[1], 4.0);
    assert!((row[2] - 0.003882537).abs() < 1e-6);
    let (code, _) = failure(&trm(&["compare", "--a", &a, "--b", &a]));
    assert_eq!(code, 2);
}
