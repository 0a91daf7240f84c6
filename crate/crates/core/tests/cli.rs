use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_trimgame"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(cmd: &mut Command) -> Output {
    let out = cmd.output().unwrap();
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn header(text: &str) -> &str {
    text.lines().next().unwrap()
}

const RESULT_HEADER: &str = "scheme,attack_ratio,tth_pp,param,metric,value,stderr,repetitions";

#[test]
fn simulate_writes_trace() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("trace.csv");
    run(bin()
        .args(["simulate", "--config"])
        .arg(configs().join("simulate.toml"))
        .arg("--output")
        .arg(&out));
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(
        header(&text),
        "round,threshold_pp,injection_pp,qe,kept_benign,kept_poison,removed_benign,removed_poison,u_a,u_c"
    );
    assert_eq!(text.lines().count(), 26);
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let sim = |seed: Option<&str>| {
        let out = dir.path().join(format!("{}.csv", seed.unwrap_or("cfg")));
        let mut c = bin();
        c.args(["simulate", "--config"])
            .arg(configs().join("simulate.toml"))
            .arg("--output")
            .arg(&out);
        if let Some(s) = seed {
            c.args(["--seed", s]);
        }
        run(&mut c);
        let text = std::fs::read_to_string(&out).unwrap();
        assert!(text.lines().count() > 1);
        text
    };
    let from_config = sim(None);
    assert_eq!(from_config, sim(Some("7")));
    assert_ne!(from_config, sim(Some("8")));
    assert_eq!(sim(Some("8")), sim(Some("8")));
}

#[test]
fn experiment_writes_results_and_samples() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    std::fs::write(
        &cfg,
        r#"
        seed = 5
        repetitions = 3
        round_no = 4
        samples_per_round = 200
        tth_pp = [95.0]
        attack_ratios = [0.2]
        dataset = { kind = "uniform", lo = 0.0, hi = 1.0 }
        output = "from_config.csv"

        [[schemes]]
        name = "titfortat"
        defender = { scheme = "titfortat", red = 0.05 }
        attacker = { scheme = "ideal_static" }
        "#,
    )
    .unwrap();
    run(bin().arg("experiment").arg("--config").arg(&cfg));
    let text = std::fs::read_to_string(dir.path().join("from_config.csv")).unwrap();
    assert_eq!(header(&text), RESULT_HEADER);

    let out = dir.path().join("r.csv");
    let samples = dir.path().join("s.csv");
    run(bin()
        .arg("experiment")
        .arg("--config")
        .arg(&cfg)
        .arg("--output")
        .arg(&out)
        .arg("--samples-output")
        .arg(&samples));
    assert_eq!(std::fs::read_to_string(&out).unwrap(), text);
    let s = std::fs::read_to_string(&samples).unwrap();
    assert_eq!(
        header(&s),
        "scheme,attack_ratio,tth_pp,param,repetition,metric,value"
    );
    assert_eq!(s.lines().count(), 1 + 3 * 5);
}

#[test]
fn theory_prints_thresholds_and_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let traj = dir.path().join("traj.csv");
    let out = run(bin()
        .args(["theory", "--d", "0.5,0.9", "--p", "0,0.5,1", "--trajectory"])
        .arg(&traj));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(header(&text), RESULT_HEADER);
    assert!(text.contains("d=0.5;p=0;g_ac=1,delta_max,0.5,"));
    assert!(
        text.contains("d=0.9;p=1;g_ac=1,delta_max,0,")
            || text.contains("d=0.9;p=1;g_ac=1,delta_max,0.0,")
    );
    let t = std::fs::read_to_string(&traj).unwrap();
    assert!(t.lines().count() > 1000);
}

#[test]
fn ldp_runs_small_sweep() {
    let out = run(bin().args([
        "--seed",
        "1",
        "ldp",
        "--epsilons",
        "1,2",
        "--users",
        "500",
        "--repetitions",
        "5",
    ]));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(header(&text), RESULT_HEADER);
    for metric in [
        "mse_honest",
        "mse_input_manipulation",
        "mse_output_manipulation",
    ] {
        assert_eq!(text.matches(metric).count(), 2, "{metric}");
    }
}

#[test]
fn bad_config_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "repetitions = \"many\"\n").unwrap();
    let out = bin()
        .arg("experiment")
        .arg("--config")
        .arg(&cfg)
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(!out.stderr.is_empty());

    let out = bin()
        .args(["simulate", "--config", "/nonexistent/game.toml"])
        .output()
        .unwrap();
    assert!(!out.status.success());

    let out = bin().args(["ldp", "--epsilons", "-1"]).output().unwrap();
    assert!(!out.status.success());
}
