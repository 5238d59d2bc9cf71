use std::fs;
use std::process::{Command, Output};

fn dmra(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dmra"))
        .args(args)
        .output()
        .expect("spawn dmra")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn generate_then_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("obs.bin");
    let data = data.to_str().unwrap();
    let o = dmra(&["generate", "--L", "6", "--n", "400", "--snr", "50", "--seed", "3", "--out", data]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for method in ["em", "mom", "sync", "invert"] {
        let o = dmra(&["estimate", data, "--method", method]);
        assert!(o.status.success(), "{method}: {}", String::from_utf8_lossy(&o.stderr));
        let text = stdout(&o);
        let err: f64 = text
            .lines()
            .find_map(|l| l.strip_prefix("relative error = "))
            .expect("error line")
            .parse()
            .unwrap();
        assert!(err < 0.5, "{method}: {err}");
    }
}

#[test]
fn sweep_is_deterministic_and_reportable() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("sweep.cfg");
    fs::write(&config, "L = 5\nn = 200\nsnr_grid = 1:100:3\ntrials = 2\nmethods = em,mom\n").unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        let o = dmra(&[
            "sweep",
            "--config",
            config.to_str().unwrap(),
            "--seed",
            "11",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let text = fs::read_to_string(&a).unwrap();
    assert_eq!(text, fs::read_to_string(&b).unwrap());
    assert_eq!(text.lines().count(), 1 + 3 * 2 * 2);
    assert!(text.starts_with("method,snr,trial,rel_error,iters,wall_ms,status\n"));

    let o = dmra(&["report", a.to_str().unwrap(), "--slope-range", "1:100"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("snr,mean_em_iterations"));
    assert!(text.contains("slope em"));
}

#[test]
fn invert_demo_recovers_orbit() {
    let o = dmra(&["invert", "--L", "7", "--seed", "4"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let err: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("relative error = "))
        .unwrap()
        .parse()
        .unwrap();
    assert!(err < 1e-6);
}

#[test]
fn fatal_errors_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.bin");
    let o = dmra(&["estimate", missing.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("dmra:"));

    let o = dmra(&["sweep", "--snr-grid", "10,1", "--trials", "1", "--n", "50"]);
    assert!(!o.status.success());

    let bad = dir.path().join("bad.cfg");
    fs::write(&bad, "bogus = 1\n").unwrap();
    let o = dmra(&["sweep", "--config", bad.to_str().unwrap()]);
    assert!(!o.status.success());

    let o = dmra(&["estimate", "x", "--method", "nope"]);
    assert!(!o.status.success());
}

#[test]
fn sync_is_dropped_for_large_n_unless_forced() {
    let o = dmra(&["sweep", "--n", "6000", "--L", "4", "--snr-grid", "100", "--trials", "1", "--method", "sync"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("sync"));
}
