use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn hyperwalk(cache: &Path, out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hyperwalk"))
        .env("HYPERWALK_CACHE", cache)
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("spawn hyperwalk")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn pressure_outputs_are_versioned_and_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let first = hyperwalk(&cache, &a, &["--profile", "smoke", "pressure"]);
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    let csv = fs::read_to_string(a.join("pressure.csv")).unwrap();
    assert!(csv.starts_with("# hyperwalk-csv pressure v1\nr,theta,k,pressure,gap,depth_delta\n"));
    assert_eq!(csv.lines().count(), 5);
    let pot = fs::read_to_string(a.join("potential.csv")).unwrap();
    assert!(pot.starts_with("# hyperwalk-csv potential v1\nprefix,value,depth,r\n"));

    let second = hyperwalk(&cache, &b, &["--profile", "smoke", "pressure"]);
    assert!(second.status.success());
    let (ma, mb) = (json(&a.join("manifest.json")), json(&b.join("manifest.json")));
    assert_eq!(ma["outputs"], mb["outputs"]);
    assert_eq!(ma["config_hash"], mb["config_hash"]);
    // the second run reads the ball and the Green columns back from the cache
    assert!(ma["cache_hits"].as_array().unwrap().is_empty());
    assert!(mb["cache_hits"].as_array().unwrap().iter().any(|h| h.as_str().unwrap().starts_with("ball")));
    assert!(fs::read_dir(&cache).unwrap().count() >= 4);
}

#[test]
fn errors_produce_a_record_and_nonzero_exit() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.ini");
    fs::write(&cfg, "[ball]\nradiuss = 3\n").unwrap();
    let out = dir.path().join("out");
    let o = hyperwalk(&dir.path().join("c"), &out, &["--config", cfg.to_str().unwrap(), "green"]);
    assert_eq!(o.status.code(), Some(2));
    let rec = json(&out.join("error.json"));
    assert_eq!(rec["error"]["kind"], "config");
    assert_eq!(rec["error"]["subcommand"], "green");
    let line: Value = serde_json::from_str(String::from_utf8_lossy(&o.stderr).trim()).unwrap();
    assert_eq!(line, rec);

    // simple random walk is bipartite; the spectrum check declines it
    let o = hyperwalk(&dir.path().join("c"), &out, &["--profile", "smoke", "spectrum"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(json(&out.join("error.json"))["error"]["kind"], "core:not_applicable");
}

#[test]
fn free_group_fits_report_the_standard_fields() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("f2.ini");
    fs::write(
        &cfg,
        "[group]\nkind = free\nrank = 2\n[ball]\nradius = 20\n[green]\ndelta_grid = 1e-6, 2e-6, 4e-6, 1e-5, 2e-5, 4e-5, 1e-4\ndelta_work = 1e-6\n",
    )
    .unwrap();
    for (cmd, file, target) in [("critical-fit", "critical-fit.json", 0.5), ("llt-fit", "llt-fit.json", 1.5)] {
        let out = dir.path().join(cmd);
        let o = hyperwalk(&dir.path().join("c"), &out, &["--config", cfg.to_str().unwrap(), cmd]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let f = json(&out.join(file));
        for key in ["quantity", "exponent", "constant", "range", "residual", "sensitivity"] {
            assert!(f.get(key).is_some(), "{cmd} lacks {key}");
        }
        assert!((f["exponent"].as_f64().unwrap() - target).abs() < 0.02, "{cmd}: {f}");
    }
}

#[test]
fn automaton_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let c = dir.path().join("c");
    let out = dir.path().join("aut");
    assert!(hyperwalk(&c, &out, &["--profile", "smoke", "automaton", "check"]).status.success());
    assert_eq!(json(&out.join("automaton-check.json"))["pass"], true);
    assert!(hyperwalk(&c, &out, &["--profile", "smoke", "automaton", "export"]).status.success());
    let tsv = fs::read_to_string(out.join("automaton.tsv")).unwrap();
    assert!(tsv.lines().count() > 10);
    assert!(hyperwalk(&c, &out, &["--profile", "smoke", "automaton", "build"]).status.success());
    let b = json(&out.join("automaton.json"));
    assert_eq!(b["sphere_counts"][1], "8");
}

#[test]
fn r_accepts_multiples_of_the_critical_radius() {
    let dir = tempfile::tempdir().unwrap();
    let c = dir.path().join("c");
    let out = dir.path().join("g");
    let o = hyperwalk(&c, &out, &["--profile", "smoke", "--r", "crit*0.5", "green"]);
    assert!(o.status.success());
    let g = json(&out.join("green.json"));
    let r = g["r"].as_f64().unwrap();
    assert!(r > 0.74 && r < 0.76, "{r}");
    let spheres = fs::read_to_string(out.join("spheres.csv")).unwrap();
    assert!(spheres.starts_with("# hyperwalk-csv spheres v1\n"));
}

#[test]
fn smoke_report_runs_the_reduced_suite() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report");
    let t = std::time::Instant::now();
    let o = hyperwalk(&dir.path().join("c"), &out, &["--profile", "smoke", "report"]);
    assert!(t.elapsed().as_secs() < 60);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rep = json(&out.join("report.json"));
    assert_eq!(rep.as_array().unwrap().len(), 12);
    assert!(rep.as_array().unwrap().iter().all(|c| c["status"] != "Fail"));
    let csv = fs::read_to_string(out.join("report.csv")).unwrap();
    assert!(csv.starts_with("# hyperwalk-csv report v1\nid,name,pass,measured,tolerance,seconds\n"));

    let o = hyperwalk(&dir.path().join("c"), &out, &["--profile", "smoke", "report", "--only", "1,3"]);
    assert!(o.status.success());
    assert_eq!(json(&out.join("report.json")).as_array().unwrap().len(), 2);
}
