mod common;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn ascbs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ascbs")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn map_path() -> String {
    common::data_dir().join("empty-8-8.map").display().to_string()
}

fn scen_path(i: u32) -> String {
    common::data_dir().join(format!("empty-8-8-random-{i}.scen")).display().to_string()
}

/// Writes a uniform instance over the bundled 8x8 map.
fn write_instance(dir: &Path, name: &str, cycle: u32, streams: &[([u32; 2], [u32; 2], u32)]) -> PathBuf {
    let streams: Vec<String> = streams
        .iter()
        .enumerate()
        .map(|(id, (s, g, t))| {
            format!(r#"{{"id":{id},"start":[{},{}],"goal":[{},{}],"t_start":{t}}}"#, s[0], s[1], g[0], g[1])
        })
        .collect();
    let json = format!(
        r#"{{"map":{:?},"mode":"uniform","cycle_time":{cycle},"streams":[{}]}}"#,
        map_path(),
        streams.join(",")
    );
    let path = dir.join(name);
    fs::write(&path, json).unwrap();
    path
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn solve_exit_codes() {
    let dir = TempDir::new().unwrap();
    let easy = write_instance(dir.path(), "easy.json", 2, &[([0, 0], [0, 7], 0), ([7, 0], [7, 7], 1)]);
    let out = dir.path().join("sol.json");
    let o = ascbs(&["solve", "--instance", p(&easy), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("soc: 14"));
    assert!(out.exists());

    let dup = write_instance(dir.path(), "dup.json", 2, &[([0, 0], [0, 7], 1), ([0, 0], [7, 7], 1)]);
    assert_eq!(ascbs(&["solve", "--instance", p(&dup)]).status.code(), Some(2));

    let (m, s) = (map_path(), scen_path(1));
    let args = ["solve", "--map", &m, "--scen", &s, "--streams", "5", "--cycle", "1", "--variant", "ida-d"];
    let o = ascbs(&[&args[..], &["--timeout", "0.001"]].concat());
    assert_eq!(o.status.code(), Some(3), "{}", stdout(&o));
    assert!(stdout(&o).contains("outcome: timeout"));

    assert_eq!(ascbs(&["solve", "--instance", "/nonexistent.json"]).status.code(), Some(1));
    assert_eq!(ascbs(&["solve", "--bogus"]).status.code(), Some(1));
    assert_eq!(ascbs(&["--help"]).status.code(), Some(0));
}

#[test]
fn validate_round_trip_and_failures() {
    let dir = TempDir::new().unwrap();
    let inst = write_instance(
        dir.path(),
        "inst.json",
        2,
        &[([0, 0], [0, 7], 0), ([0, 7], [0, 0], 0), ([3, 3], [5, 5], 1)],
    );
    let sol = dir.path().join("sol.json");
    assert_eq!(ascbs(&["solve", "--instance", p(&inst), "--out", p(&sol)]).status.code(), Some(0));
    let o = ascbs(&["validate", "--instance", p(&inst), "--solution", p(&sol)]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).starts_with("valid"));

    // Head-on swap of two streams with a long cycle.
    let swap = write_instance(dir.path(), "swap.json", 10, &[([0, 0], [0, 1], 0), ([0, 1], [0, 0], 0)]);
    let swap_sol = dir.path().join("swap_sol.json");
    fs::write(
        &swap_sol,
        r#"{"cycle_time":10,"soc":2,"streams":[{"id":0,"t_start":0,"start":[0,0],"actions":"R"},{"id":1,"t_start":0,"start":[0,1],"actions":"L"}]}"#,
    )
    .unwrap();
    let o = ascbs(&["validate", "--instance", p(&swap), "--solution", p(&swap_sol), "--horizon", "5"]);
    assert_eq!(o.status.code(), Some(1));
    let events: Vec<String> = stdout(&o).lines().filter(|l| l.starts_with("t=")).map(String::from).collect();
    assert_eq!(events, vec!["t=0 kind=e a=(0,0) b=(1,0) at=(0,0)->(0,1)".to_string()]);

    // Walking off the map is structural.
    let bad = dir.path().join("bad.json");
    fs::write(
        &bad,
        r#"{"cycle_time":10,"soc":2,"streams":[{"id":0,"t_start":0,"start":[0,0],"actions":"U"},{"id":1,"t_start":0,"start":[0,1],"actions":"L"}]}"#,
    )
    .unwrap();
    let o = ascbs(&["validate", "--instance", p(&swap), "--solution", p(&bad)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("structural error"));
}

#[test]
fn bench_writes_one_row_per_job() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("out.csv");
    let (m, s) = (map_path(), scen_path(2));
    let o = ascbs(&[
        "bench", "--map", &m, "--scen", &s, "--streams-list", "2", "--cycle-list", "2", "--seeds", "2",
        "--variants", "a-nd", "--timeout", "5", "--csv", p(&csv),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let text = fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines[0],
        "map,scen,n_streams,cycle,seed,variant,outcome,soc,runtime_ms,ct_expanded,ct_generated,low_level_expansions"
    );
    assert_eq!(lines.len(), 3);
    assert!(!text.contains('\r'));
    assert!(lines[1].starts_with("empty-8-8.map,empty-8-8-random-2.scen,2,2,0,a-nd,"));
    assert!(lines[2].starts_with("empty-8-8.map,empty-8-8-random-2.scen,2,2,1,a-nd,"));
}

#[test]
fn compare_reports_zero_error_without_interaction() {
    let dir = TempDir::new().unwrap();
    let inst = write_instance(dir.path(), "inst.json", 3, &[([0, 0], [0, 7], 0), ([7, 0], [7, 7], 1)]);
    let csv = dir.path().join("cmp.csv");
    let o = ascbs(&["compare-cbs", "--instance", p(&inst), "--horizons", "3,9", "--timeout", "10", "--csv", p(&csv)]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let mut r = csv::Reader::from_path(&csv).unwrap();
    let headers = r.headers().unwrap().clone();
    let err = headers.iter().position(|h| h == "relative_error").unwrap();
    let rows: Vec<csv::StringRecord> = r.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 2);
    for row in rows {
        assert_eq!(row[err].parse::<f64>().unwrap(), 0.0);
    }
}
