use std::process::Command;

use coldstart_core::config::EngineConfig;
use coldstart_core::eval::{read_results_csv, RESULTS_CSV, RESULTS_TABLE};

fn engine() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_engine"));
    c.env("RUST_LOG", "warn");
    c
}

#[test]
fn synth_then_eval_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("ml");
    let out = dir.path().join("out");
    let st = engine()
        .args(["synth", "--users", "150", "--movies", "90", "--seed", "3", "--out"])
        .arg(&data)
        .output()
        .unwrap();
    assert!(st.status.success());

    let run = |out: &std::path::Path| {
        let o = engine()
            .args([
                "eval",
                "--models",
                "random,popularity,full_ce",
                "--seeds",
                "2",
                "--k",
                "10",
                "--data",
            ])
            .arg(&data)
            .arg("--out")
            .arg(out)
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        String::from_utf8(o.stdout).unwrap()
    };
    let stdout = run(&out);
    assert!(stdout.contains("HR@10"));
    let table = std::fs::read_to_string(out.join(RESULTS_TABLE)).unwrap();
    assert!(table.contains("popularity") && table.contains("full_ce"));
    let rows = read_results_csv(&out.join(RESULTS_CSV)).unwrap();
    assert_eq!(rows.len(), 6);
    let pop: Vec<_> = rows.iter().filter(|r| r.model == "popularity").collect();
    assert!(pop.iter().all(|r| r.unique_top1 == 1));

    // Same seeds, same bytes.
    let again = dir.path().join("again");
    run(&again);
    assert_eq!(
        std::fs::read(out.join(RESULTS_CSV)).unwrap(),
        std::fs::read(again.join(RESULTS_CSV)).unwrap()
    );
}

#[test]
fn bad_arguments_fail() {
    let dir = tempfile::tempdir().unwrap();
    let o = engine()
        .args(["eval", "--models", "magic", "--data"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("magic"));

    let o = engine()
        .args(["eval", "--data"])
        .arg(dir.path().join("missing"))
        .output()
        .unwrap();
    assert!(!o.status.success());
}

#[test]
fn config_prints_loadable_toml() {
    let o = engine().arg("config").output().unwrap();
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(EngineConfig::from_toml_str(&text).unwrap(), EngineConfig::default());

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("engine.toml");
    std::fs::write(&path, "[adaptation]\nserendipity_rate = 0.3\n").unwrap();
    let o = engine().arg("--config").arg(&path).arg("config").output().unwrap();
    let cfg = EngineConfig::from_toml_str(&String::from_utf8(o.stdout).unwrap()).unwrap();
    assert_eq!(cfg.adaptation.serendipity_rate, 0.3);
}
