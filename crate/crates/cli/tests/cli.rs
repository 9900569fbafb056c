use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const QUICK: &str = "# small budget so the tests stay fast\ndoas = 1.6, 13.2\nnoise = gmm\nsnr_db = 10\ngrid_interval = 4\nmax_generations = 3\n";

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("doa-cli-{name}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("run.cfg");
    fs::write(&path, text).unwrap();
    path
}

fn doa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_doa")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn estimate_writes_json() {
    let dir = scratch("estimate");
    let cfg = write_config(&dir, QUICK);
    let out = dir.join("est.json");
    let o = doa(&["estimate", "--config", s(&cfg), "--seed", "4", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    let k = json["source_number"].as_u64().unwrap();
    assert_eq!(json["estimated_doas"].as_array().unwrap().len() as u64, k);
    assert_eq!(json["seed"].as_u64(), Some(4));
}

#[test]
fn montecarlo_csv_has_one_row_per_sweep_value() {
    let dir = scratch("mc");
    let cfg = write_config(&dir, QUICK);
    let out = dir.join("sweep.csv");
    let json = dir.join("trials.json");
    let o = doa(&[
        "montecarlo", "--config", s(&cfg), "--trials", "3", "--seed", "1", "--sweep", "snapshots=10,20",
        "--workers", "2", "--out", s(&out), "--json", s(&json),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "sweep_param,value,rmse,admitted,avg_k,mean_runtime_s");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("snapshots,10,"));
    assert!(lines[2].starts_with("snapshots,20,"));
    let trials: serde_json::Value = serde_json::from_str(&fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(trials.as_array().unwrap().len(), 6);
}

#[test]
fn same_seed_same_bytes() {
    let dir = scratch("repeat");
    let cfg = write_config(&dir, QUICK);
    let run = |name: &str, workers: &str| {
        let out = dir.join(name);
        let o = doa(&[
            "montecarlo", "--config", s(&cfg), "--trials", "4", "--seed", "9", "--sweep", "separation=8,12",
            "--workers", workers, "--out", s(&out),
        ]);
        assert!(o.status.success());
        fs::read(out).unwrap()
    };
    assert_eq!(run("a.csv", "1"), run("b.csv", "3"));
}

#[test]
fn ablate_writes_a_csv_per_mode_and_traces() {
    let dir = scratch("ablate");
    let cfg = write_config(&dir, QUICK);
    let traces = dir.join("traces");
    let o = doa(&[
        "ablate", "--config", s(&cfg), "--trials", "2", "--seed", "3", "--modes", "forward,on-grid",
        "--out", s(&dir.join("abl.csv")), "--emit-trace", s(&traces),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for mode in ["forward", "on-grid"] {
        let csv = fs::read_to_string(dir.join(format!("abl-{mode}.csv"))).unwrap();
        assert!(csv.starts_with("sweep_param,value,rmse,admitted,avg_k,mean_runtime_s\ngrid_interval,4,"));
        assert!(fs::read_dir(traces.join(mode)).unwrap().count() >= 2);
    }
    assert!(!dir.join("abl-taylor.csv").exists());
}

#[test]
fn config_problems_exit_with_1() {
    let dir = scratch("config");
    let missing = dir.join("absent.cfg");
    assert_eq!(doa(&["estimate", "--config", s(&missing), "--seed", "1"]).status.code(), Some(1));

    let bad = write_config(&dir, "doas = 1, 2\nwavelength = 3\n");
    assert_eq!(doa(&["estimate", "--config", s(&bad), "--seed", "1"]).status.code(), Some(1));

    let good = write_config(&dir, QUICK);
    let out = dir.join("x.csv");
    let sweep = |arg: &str| {
        doa(&["montecarlo", "--config", s(&good), "--seed", "1", "--sweep", arg, "--out", s(&out)]).status.code()
    };
    assert_eq!(sweep("volume=1,2"), Some(1));
    assert_eq!(sweep("snapshots=1.5"), Some(1));
    assert_eq!(
        doa(&["ablate", "--config", s(&good), "--seed", "1", "--modes", "magic", "--out", s(&out)]).status.code(),
        Some(1)
    );
    assert_eq!(doa(&["estimate", "--seed", "1"]).status.code(), Some(1));
    assert_eq!(doa(&["--help"]).status.code(), Some(0));
}

#[test]
fn unwritable_output_exits_with_2() {
    let dir = scratch("runtime");
    let cfg = write_config(&dir, QUICK);
    let out = dir.join("no").join("such").join("dir").join("est.json");
    let o = doa(&["estimate", "--config", s(&cfg), "--seed", "1", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
}
