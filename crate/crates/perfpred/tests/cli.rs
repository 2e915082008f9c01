use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_perfpred");

const SMALL: &str = "\
data.m = 60
data.m_test = 30
data.d = 4
map.eps = 0.5
plan.g.kind = greedy
run.T = 400
run.eval_every = 50
run.seeds = 0..3
";

fn perfpred(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn write_cfg(dir: &Path, text: &str) -> String {
    let p = dir.join("exp.cfg");
    fs::write(&p, text).unwrap();
    p.display().to_string()
}

fn files(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    v.sort();
    v
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for sub in ["", "runs", "aggregate"] {
        let d = dir.join(sub);
        for name in files(&d) {
            let p = d.join(&name);
            if p.is_file() {
                out.push((format!("{sub}/{name}"), fs::read(p).unwrap()));
            }
        }
    }
    out
}

#[test]
fn sweep_counts_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), SMALL);
    let out = tmp.path().join("out");
    let o = perfpred(&[
        "sweep",
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
        "--jobs",
        "2",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(files(&out.join("runs")).len(), 3);
    assert_eq!(files(&out.join("aggregate")), ["g_eps0.5.csv"]);
    let manifest = fs::read_to_string(out.join("manifest.csv")).unwrap();
    let kinds: Vec<&str> = manifest
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(kinds, ["config", "run", "run", "run", "aggregate"]);
    let run = fs::read_to_string(out.join("runs/g_eps0.5_seed1.csv")).unwrap();
    assert_eq!(
        run.lines().next().unwrap(),
        "run_id,seed,t,samples,gamma,sps_sq,risk,train_acc,test_acc,status"
    );
    // t = 0, 50, ..., 350 and the final iterate
    assert_eq!(run.lines().count(), 1 + 9);
}

#[test]
fn rerun_is_byte_identical_regardless_of_jobs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), SMALL);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert!(perfpred(&[
        "sweep",
        "--config",
        &cfg,
        "--out",
        a.to_str().unwrap(),
        "--jobs",
        "3"
    ])
    .status
    .success());
    assert!(perfpred(&[
        "sweep",
        "--config",
        &cfg,
        "--out",
        b.to_str().unwrap(),
        "--jobs",
        "1"
    ])
    .status
    .success());
    assert_eq!(snapshot(&a), snapshot(&b));
}

#[test]
fn aggregate_rebuilds_identical_files() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), SMALL);
    let out = tmp.path().join("out");
    assert!(
        perfpred(&["sweep", "--config", &cfg, "--out", out.to_str().unwrap()])
            .status
            .success()
    );
    let before = snapshot(&out);
    fs::remove_dir_all(out.join("aggregate")).unwrap();
    fs::create_dir(out.join("aggregate")).unwrap();
    assert!(perfpred(&["aggregate", "--out", out.to_str().unwrap()])
        .status
        .success());
    assert_eq!(snapshot(&out), before);
}

#[test]
fn aggregate_skips_runs_from_another_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), SMALL);
    let out = tmp.path().join("out");
    assert!(
        perfpred(&["sweep", "--config", &cfg, "--out", out.to_str().unwrap()])
            .status
            .success()
    );
    let manifest = out.join("manifest.csv");
    let text = fs::read_to_string(&manifest).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    let i = lines
        .iter()
        .position(|l| l.starts_with("run,g_eps0.5_seed2"))
        .unwrap();
    let mut fields: Vec<&str> = lines[i].split(',').collect();
    fields[3] = "0000";
    lines[i] = fields.join(",");
    fs::write(&manifest, lines.join("\n") + "\n").unwrap();
    assert!(perfpred(&["aggregate", "--out", out.to_str().unwrap()])
        .status
        .success());
    let agg = fs::read_to_string(out.join("aggregate/g_eps0.5.csv")).unwrap();
    let n = agg.lines().nth(1).unwrap().split(',').nth(2).unwrap();
    assert_eq!(n, "2");
}

#[test]
fn aggregate_rejects_edited_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), SMALL);
    let out = tmp.path().join("out");
    assert!(
        perfpred(&["sweep", "--config", &cfg, "--out", out.to_str().unwrap()])
            .status
            .success()
    );
    let stored = out.join("config.cfg");
    let text = fs::read_to_string(&stored)
        .unwrap()
        .replace("run.T = 400", "run.T = 401");
    fs::write(&stored, text).unwrap();
    let o = perfpred(&["aggregate", "--out", out.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("hashes to"));
}

#[test]
fn divergence_gives_nonzero_exit_and_status_row() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        tmp.path(),
        "model.beta = 1\ndata.m = 20\ndata.m_test = 10\nschedule.kind = constant\n\
         schedule.gamma = 1e10\nplan.g.kind = greedy\nrun.T = 100\nrun.eval_every = 10\n",
    );
    let out = tmp.path().join("out");
    let o = perfpred(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(
        o.status.code(),
        Some(1),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let run = fs::read_to_string(out.join("g_eps0_seed0.csv")).unwrap();
    assert!(
        run.lines()
            .last()
            .unwrap()
            .ends_with("NaN,NaN,NaN,NaN,diverged"),
        "{run}"
    );
}

#[test]
fn seed_override_selects_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), SMALL);
    let out = tmp.path().join("out");
    let o = perfpred(&[
        "run",
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
        "--seed-override",
        "42",
    ]);
    assert!(o.status.success());
    assert_eq!(files(&out), ["g_eps0.5_seed42.csv"]);
}

#[test]
fn gen_data_round_trips_through_csv_source() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), SMALL);
    let data = tmp.path().join("data");
    assert!(perfpred(&[
        "gen-data",
        "--config",
        &cfg,
        "--out",
        data.to_str().unwrap()
    ])
    .status
    .success());
    let train = fs::read_to_string(data.join("train.csv")).unwrap();
    assert_eq!(train.lines().count(), 60);
    assert_eq!(train.lines().next().unwrap().split(',').count(), 5);
    // labels are written in the model's encoding
    assert!(train
        .lines()
        .all(|l| l.ends_with(",1") || l.ends_with(",-1")));

    let csv_cfg = tmp.path().join("csv.cfg");
    fs::write(
        &csv_cfg,
        "data.source = csv\ndata.path = data/train.csv\ndata.feature_count = 4\n\
         data.label_map = -1:-1,1:1\nplan.g.kind = greedy\nrun.T = 100\n",
    )
    .unwrap();
    let out = tmp.path().join("out");
    let o = perfpred(&[
        "run",
        "--config",
        csv_cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn check_writes_reports_and_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        tmp.path(),
        "data.m = 30\ndata.d = 4\nmap.eps = 0, 1\nplan.g.kind = greedy\n\
         checks.instances = 20\nchecks.pairs = 10\nchecks.descent_steps = 30\nchecks.smoothness_trials = 2000\n",
    );
    let out = tmp.path().join("out");
    let o = perfpred(&["check", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        files(&out),
        ["descent.csv", "gradcheck.csv", "sensitivity.csv"]
    );
    let descent = fs::read_to_string(out.join("descent.csv")).unwrap();
    assert_eq!(descent.lines().count(), 1 + 2 * 30);
}

#[test]
fn check_reports_oversized_support() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        tmp.path(),
        "data.m = 100\ndata.d = 3\nplan.g.kind = greedy\nchecks.instances = 5\nchecks.pairs = 2\n",
    );
    let out = tmp.path().join("out");
    assert!(
        perfpred(&["check", "--config", &cfg, "--out", out.to_str().unwrap()])
            .status
            .success()
    );
    let descent = fs::read_to_string(out.join("descent.csv")).unwrap();
    assert!(descent
        .lines()
        .nth(1)
        .unwrap()
        .ends_with("support_too_large"));
}

#[test]
fn config_errors_exit_with_key_path() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), "plan.g.kind = greedy\nplan.g.K = 5\n");
    let o = perfpred(&[
        "run",
        "--config",
        &cfg,
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("plan.g.K"));
}

#[test]
fn shipped_examples_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("examples");
    for name in files(&dir) {
        perfpred::config::ExperimentConfig::from_path(&dir.join(&name))
            .unwrap_or_else(|e| panic!("{name}: {e:#}"));
    }
}
