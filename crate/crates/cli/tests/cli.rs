use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn ecsqp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ecsqp")).args(args).output().unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("run.toml");
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

const SMALL: &str = r#"
[problem]
name = "rastrigin"
dimension = 3

[ga]
population_size = 12
overlap_fraction = 0.25

[switching]
max_generations = 15

[run]
repetitions = 3
seed = 42
"#;

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|x| x.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

#[test]
fn repeat_runs_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    // different worker counts must not change anything
    let out = ecsqp(&["run", "--config", &cfg, "--out", a.to_str().unwrap(), "--jobs", "1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = ecsqp(&["run", "--config", &cfg, "--out", b.to_str().unwrap(), "--jobs", "3"]);
    assert!(out.status.success());
    for f in ["trace_0.csv", "trace_1.csv", "trace_2.csv", "aggregate.csv", "summary.txt"] {
        let x = std::fs::read(a.join(f)).unwrap();
        let y = std::fs::read(b.join(f)).unwrap();
        assert!(x == y, "{f} differs");
    }
}

#[test]
fn single_run_twice_is_identical() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    for d in ["x", "y"] {
        let o = tmp.path().join(d);
        assert!(ecsqp(&["run", "--config", &cfg, "--runs", "1", "--seed", "7", "--out", o.to_str().unwrap()]).status.success());
    }
    assert_eq!(
        std::fs::read(tmp.path().join("x/trace_0.csv")).unwrap(),
        std::fs::read(tmp.path().join("y/trace_0.csv")).unwrap()
    );
}

#[test]
fn unknown_problem_exits_2_and_names_registry() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "[problem]\nname = \"sphere\"\ndimension = 2\n");
    let out = ecsqp(&["run", "--config", &cfg, "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    for name in ["ackley", "rastrigin", "schwefel", "schwefel-max"] {
        assert!(err.contains(name), "{err}");
    }
}

#[test]
fn malformed_config_exits_2() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "[problem\nname=");
    assert_eq!(ecsqp(&["run", "--config", &cfg]).status.code(), Some(2));
    let cfg = write_config(tmp.path(), "[problem]\nname='ackley'\ndimension=2\n[ga]\npopulation_size=7\n");
    assert_eq!(ecsqp(&["run", "--config", &cfg]).status.code(), Some(2));
    assert_eq!(ecsqp(&["run", "--config", "/nonexistent/run.toml"]).status.code(), Some(2));
}

#[test]
fn trace_schema_is_stable() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let o = tmp.path().join("o");
    assert!(ecsqp(&["run", "--config", &cfg, "--out", o.to_str().unwrap()]).status.success());
    let (h, rows) = read_csv(&o.join("trace_0.csv"));
    assert_eq!(
        h,
        [
            "phase", "step", "evaluations", "best", "mean", "worst", "selection_term", "crossover_term", "mutation_term",
            "crossover_width", "mutation_width"
        ]
    );
    assert_eq!(rows[0][0], "ec");
    assert!(rows.iter().any(|r| r[0] == "sqp"));
    assert!(rows.iter().any(|r| r[0] == "validation"));
    for r in &rows {
        for v in &r[3..] {
            if v.is_empty() {
                continue;
            }
            let digits: String = v.split('e').next().unwrap().chars().filter(|c| c.is_ascii_digit()).collect();
            assert!(digits.trim_start_matches('0').len() <= 9, "{v}");
            v.parse::<f64>().unwrap();
        }
    }
}

/// Recomputes aggregate.csv from the per-run traces.
#[test]
fn aggregate_is_the_mean_of_traces() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let o = tmp.path().join("o");
    assert!(ecsqp(&["price-trace", "--config", &cfg, "--runs", "4", "--out", o.to_str().unwrap()]).status.success());
    let traces: Vec<_> = (0..4).map(|i| read_csv(&o.join(format!("trace_{i}.csv"))).1).collect();
    let (h, agg) = read_csv(&o.join("aggregate.csv"));
    for row in &agg {
        let g = &row[0];
        for (k, col) in ["best", "mean", "worst", "selection_term", "mutation_width"].iter().enumerate() {
            let tcol = 3 + [0, 1, 2, 3, 7][k];
            let vals: Vec<f64> = traces
                .iter()
                .filter_map(|t| t.iter().find(|r| r[0] == "ec" && &r[1] == g))
                .filter(|r| !r[tcol].is_empty())
                .map(|r| r[tcol].parse().unwrap())
                .collect();
            let ai = h.iter().position(|x| *x == format!("{col}_mean")).unwrap();
            if vals.is_empty() {
                assert!(row[ai].is_empty());
                continue;
            }
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            let a: f64 = row[ai].parse().unwrap();
            assert!((a - m).abs() <= 1e-8 * m.abs().max(1e-3), "{col} gen {g}: {a} vs {m}");
            // sample standard error
            let se: f64 = row[ai + 1].parse().unwrap();
            let n = vals.len() as f64;
            let sd = (vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
            assert!((se - sd / n.sqrt()).abs() <= 1e-7 * sd.max(1e-3), "{col} se gen {g}");
        }
    }
}

#[test]
fn price_trace_without_crossover() {
    let tmp = TempDir::new().unwrap();
    let body = SMALL.replace("overlap_fraction = 0.25", "overlap_fraction = 0.25\ncrossover_rate = 0.0");
    let cfg = write_config(tmp.path(), &body);
    let o = tmp.path().join("o");
    assert!(ecsqp(&["price-trace", "--config", &cfg, "--out", o.to_str().unwrap()]).status.success());
    let (_, rows) = read_csv(&o.join("trace_1.csv"));
    assert!(rows.iter().all(|r| r[0] == "ec"));
    for r in rows.iter().skip(1) {
        assert_eq!(r[7], "0");
        assert_eq!(r[9], "0");
    }
}

#[test]
fn variants_get_their_own_directories() {
    let tmp = TempDir::new().unwrap();
    let body = format!(
        "{SMALL}\n[[variants]]\nlabel = \"rws\"\nselection = \"roulette\"\n\n[[variants]]\nlabel = \"bts\"\nselection = \"tournament\"\n"
    );
    let cfg = write_config(tmp.path(), &body);
    let o = tmp.path().join("o");
    let out = ecsqp(&["run", "--config", &cfg, "--mode", "ec", "--runs", "2", "--out", o.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(o.join("rws/trace_1.csv").exists() && o.join("bts/aggregate.csv").exists());
    let summary = std::fs::read_to_string(o.join("summary.txt")).unwrap();
    assert!(summary.lines().any(|l| l.starts_with("rws") && l.contains("RWS")));
    assert!(summary.lines().any(|l| l.starts_with("bts") && l.contains("BTS")));
    assert_eq!(String::from_utf8_lossy(&out.stdout), summary);
}

#[test]
fn sqp_mode_writes_only_sqp_rows() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let o = tmp.path().join("o");
    assert!(ecsqp(&["run", "--config", &cfg, "--mode", "sqp", "--out", o.to_str().unwrap()]).status.success());
    let (_, rows) = read_csv(&o.join("trace_0.csv"));
    assert!(rows.iter().all(|r| r[0] == "sqp"));
    // no EC rows, so nothing per generation, but final stats are summarized
    let (_, agg) = read_csv(&o.join("aggregate.csv"));
    assert!(agg.is_empty());
}

fn err_line(stdout: &[u8], key: &str) -> f64 {
    let s = String::from_utf8_lossy(stdout);
    let line = s.lines().find(|l| l.starts_with(key)).unwrap();
    line.split_whitespace().nth(3).unwrap().parse().unwrap()
}

#[test]
fn ad_check_ackley_passes() {
    let out = ecsqp(&["ad-check", "--problem", "ackley", "--dimension", "10", "--samples", "100"]);
    assert!(out.status.success());
    assert!(err_line(&out.stdout, "max grad err") < 1e-6);
}

#[test]
fn ad_check_rastrigin_hessian() {
    let out = ecsqp(&["ad-check", "--problem", "rastrigin", "--dimension", "2"]);
    assert!(out.status.success());
    assert!(err_line(&out.stdout, "max hess err") < 1e-4);
}

#[test]
fn ad_check_catches_corruption() {
    let out = ecsqp(&["ad-check", "--problem", "ackley", "--corrupt"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAILED"));
}

#[test]
fn ad_check_unknown_problem() {
    assert_eq!(ecsqp(&["ad-check", "--problem", "nope"]).status.code(), Some(2));
}

#[test]
fn bench_list_names_everything() {
    let out = ecsqp(&["bench-list"]);
    let s = String::from_utf8_lossy(&out.stdout);
    for name in ["ackley", "rastrigin", "schwefel", "schwefel-max"] {
        assert!(s.lines().any(|l| l.starts_with(name)));
    }
}
