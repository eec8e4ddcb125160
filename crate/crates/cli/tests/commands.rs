use std::fs;
use std::path::Path;
use std::process::Command as Process;

use cascade_cli::{parse_config, run, Command};

fn identical(out: &Path, extra: &str) -> String {
    format!(
        "network.0.nodes = 2000
network.0.load = point:75
network.0.space = uniform:20,180
network.1.nodes = 2000
network.1.load = point:75
network.1.space = uniform:20,180
out_dir = {}
{extra}",
        out.display()
    )
}

fn csv_rows(path: &Path) -> Vec<String> {
    fs::read_to_string(path).unwrap().lines().skip(1).map(String::from).collect()
}

#[test]
fn small_attack_gives_one_step_no_cascade() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = parse_config(&identical(dir.path(), "attack = 0.001,0\n")).unwrap();
    let report = run(Command::MeanField, &cfg, dir.path()).unwrap();
    assert_eq!(report.lines[0], "outcome: NoCascade");
    assert_eq!(report.lines[1], "steps: 1");
    // one row per network for the single state
    assert_eq!(csv_rows(&dir.path().join("trajectory.csv")).len(), 2);
}

#[test]
fn heatmap_at_default_resolution_has_441_cells() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = parse_config(&identical(dir.path(), "tol = 0.01\n")).unwrap();
    run(Command::Heatmap, &cfg, dir.path()).unwrap();
    let rows = csv_rows(&dir.path().join("heatmap.csv"));
    assert_eq!(rows.len(), 441);
    assert!(rows[0].starts_with("0,0,"));
    assert!(rows[440].starts_with("1,1,"));
    assert!(rows.iter().all(|r| r.split(',').count() == 3));
}

#[test]
fn identical_config_and_seed_give_identical_files() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let extra = "engine = montecarlo\nruns = 6\nseed = 40\nattack = 0.45,0\nstrategy = sbd\n";
    for cmd in [Command::Simulate, Command::Sweep] {
        let ra = run(cmd, &parse_config(&identical(a.path(), extra)).unwrap(), a.path()).unwrap();
        let rb = run(cmd, &parse_config(&identical(b.path(), extra)).unwrap(), b.path()).unwrap();
        assert_eq!(ra.outputs.len(), rb.outputs.len());
        for (pa, pb) in ra.outputs.iter().zip(&rb.outputs) {
            assert_eq!(fs::read(pa).unwrap(), fs::read(pb).unwrap(), "{}", pa.display());
        }
    }
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(a.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "sweep");
    assert_eq!(manifest["seeds"], serde_json::json!([40, 41, 42, 43, 44, 45]));
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
    assert_eq!(csv_rows(&a.path().join("summary.csv")).len(), 6);
}

#[test]
fn compare_lists_every_strategy() {
    let dir = tempfile::tempdir().unwrap();
    let extra = "compare = sbd swo fcc\ncoupling = 0.5,0.5;0.5,0.5\ntol = 0.01\nsweep_step = 0.25\n";
    let cfg = parse_config(&identical(dir.path(), extra)).unwrap();
    run(Command::Compare, &cfg, dir.path()).unwrap();
    let rows = csv_rows(&dir.path().join("compare.csv"));
    assert!(rows[0].starts_with("SBD,"));
    assert!(rows[1].starts_with("SWO,"));
    // the label holds a comma, so it is quoted
    assert!(rows[2].starts_with("\"FCC(0.5,0.5)\","), "{}", rows[2]);
    assert_eq!(csv_rows(&dir.path().join("compare_sweep.csv")).len(), 3 * 5);
}

#[test]
fn binary_runs_critical_with_edge_list_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    // ring on 2000 nodes
    let edges: String = (0..2000).map(|i| format!("{i} {}\n", (i + 1) % 2000)).collect();
    fs::write(dir.path().join("ring.txt"), edges).unwrap();
    let cfg = identical(&dir.path().join("ignored"), "engine = montecarlo\nruns = 3\nstrategy = sbd\n");
    fs::write(dir.path().join("run.cfg"), cfg).unwrap();
    let out = dir.path().join("out");
    let status = Process::new(env!("CARGO_BIN_EXE_cascade"))
        .args(["critical", "--config"])
        .arg(dir.path().join("run.cfg"))
        .args(["--edges", "1=ring.txt", "--tol", "0.05", "--seed", "7", "--threads", "1", "--out-dir"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let stdout = String::from_utf8(status.stdout).unwrap();
    assert!(stdout.starts_with("SBD critical attack size: "), "{stdout}");
    let manifest = fs::read_to_string(out.join("manifest.json")).unwrap();
    assert!(manifest.contains("network.1.edges = ring.txt"), "{manifest}");
    assert!(manifest.contains("montecarlo:local"));
    assert!(manifest.contains("\"seeds\": [\n    7,\n    8,\n    9\n  ]"), "{manifest}");
}

#[test]
fn bad_config_exits_nonzero_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let text = identical(dir.path(), "strategy = fcc\ncoupling = 1.3,-0.3;0.5,0.5\n");
    fs::write(dir.path().join("bad.cfg"), text).unwrap();
    let out = Process::new(env!("CARGO_BIN_EXE_cascade"))
        .args(["critical", "--config"])
        .arg(dir.path().join("bad.cfg"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("line 9") && err.contains("coupling"), "{err}");
}
