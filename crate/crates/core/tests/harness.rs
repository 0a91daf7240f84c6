use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use trimgame::engine::run_game;
use trimgame::harness::{
    game_metrics, load_dataset, mean_stderr, redundancy_protocol, run_experiment, ExperimentConfig,
    GameFile, ProtocolDefender,
};

const SMALL: &str = r#"
seed = 11
repetitions = 4
round_no = 6
samples_per_round = 300
tth_pp = [90.0, 95.0]
attack_ratios = [0.2, [0.1, 0.3]]
dataset = { kind = "clusters", centers = [-1.0, 1.0], sd = 0.1 }

[[schemes]]
name = "titfortat"
defender = { scheme = "titfortat", red = 0.05 }
attacker = { scheme = "ideal_static" }

[[schemes]]
name = "elastic"
defender = { scheme = "elastic", k = 0.5 }
attacker = { scheme = "elastic_adversary", k = 0.5 }
"#;

fn csv_bytes(cfg: &ExperimentConfig) -> (Vec<u8>, Vec<u8>) {
    let out = run_experiment(cfg).unwrap();
    let (mut r, mut s) = (Vec::new(), Vec::new());
    out.write_results(&mut r).unwrap();
    out.write_samples(&mut s).unwrap();
    (r, s)
}

#[test]
fn experiment_output_is_byte_identical_across_runs() {
    let cfg = ExperimentConfig::from_toml(SMALL).unwrap();
    assert_eq!(csv_bytes(&cfg), csv_bytes(&cfg));
}

#[test]
fn results_header_is_fixed() {
    let cfg = ExperimentConfig::from_toml(SMALL).unwrap();
    let (r, s) = csv_bytes(&cfg);
    let first = |b: &[u8]| {
        String::from_utf8(b.to_vec())
            .unwrap()
            .lines()
            .next()
            .unwrap()
            .to_string()
    };
    assert_eq!(
        first(&r),
        "scheme,attack_ratio,tth_pp,param,metric,value,stderr,repetitions"
    );
    assert_eq!(
        first(&s),
        "scheme,attack_ratio,tth_pp,param,repetition,metric,value"
    );
}

#[test]
fn a_scheme_does_not_depend_on_its_neighbours() {
    let both = run_experiment(&ExperimentConfig::from_toml(SMALL).unwrap()).unwrap();
    let mut alone = ExperimentConfig::from_toml(SMALL).unwrap();
    alone.schemes.retain(|s| s.name == "elastic");
    let alone = run_experiment(&alone).unwrap();
    let from_both: Vec<_> = both
        .rows
        .iter()
        .filter(|r| r.scheme == "elastic")
        .cloned()
        .collect();
    assert_eq!(from_both, alone.rows);
}

#[test]
fn aggregates_recompute_from_samples() {
    let out = run_experiment(&ExperimentConfig::from_toml(SMALL).unwrap()).unwrap();
    let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for s in &out.samples {
        let key = format!(
            "{}|{}|{:?}|{}|{}",
            s.scheme, s.attack_ratio, s.tth_pp, s.param, s.metric
        );
        groups.entry(key).or_default().push(s.value);
    }
    assert_eq!(groups.len(), out.rows.len());
    for r in &out.rows {
        let key = format!(
            "{}|{}|{:?}|{}|{}",
            r.scheme, r.attack_ratio, r.tth_pp, r.param, r.metric
        );
        let v = &groups[&key];
        assert_eq!(v.len(), r.repetitions);
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!(
            (mean - r.value).abs() <= 1e-12 * (1.0 + mean.abs()),
            "{key}"
        );
        assert!(
            (sd / n.sqrt() - r.stderr).abs() <= 1e-12 * (1.0 + sd),
            "{key}"
        );
    }
}

#[test]
fn mean_stderr_small_cases() {
    assert_eq!(mean_stderr(&[3.0]), (3.0, 0.0));
    let (m, se) = mean_stderr(&[1.0, 2.0, 3.0, 4.0]);
    assert_eq!(m, 2.5);
    assert!((se - (5.0f64 / 12.0).sqrt()).abs() < 1e-12);
}

#[test]
fn clusters_recovered_without_poison() {
    let cfg = ExperimentConfig::from_toml(
        r#"
        seed = 2
        repetitions = 5
        round_no = 5
        samples_per_round = 1000
        tth_pp = [90.0]
        attack_ratios = [0.0]
        dataset = { kind = "clusters", centers = [-1.0, 1.0], sd = 0.1 }

        [[schemes]]
        name = "ostrich"
        defender = { scheme = "ostrich" }
        attacker = { scheme = "static_attacker", pp = 99.0 }
        "#,
    )
    .unwrap();
    let out = run_experiment(&cfg).unwrap();
    let dist = out
        .rows
        .iter()
        .find(|r| r.metric == "centroid_distance")
        .unwrap();
    assert!(dist.value < 0.05, "{}", dist.value);
    let offset = out.rows.iter().find(|r| r.metric == "sse_offset").unwrap();
    assert!(offset.value < 1e-3, "{}", offset.value);
}

#[test]
fn redundancy_config_matches_preset() {
    let text = include_str!("../../../configs/redundancy.toml");
    let mut cfg = ExperimentConfig::from_toml(text).unwrap();
    cfg.repetitions = 3;
    cfg.mix_p = vec![0.0, 0.5, 1.0];
    let out = run_experiment(&cfg).unwrap();
    for (name, which) in [
        ("titfortat", ProtocolDefender::Titfortat),
        ("elastic", ProtocolDefender::Elastic),
    ] {
        for p in [0.0, 0.5, 1.0] {
            for rep in 0..3 {
                let game = redundancy_protocol(p, which, cfg.seed + rep as u64);
                let direct = game_metrics(&game, None).unwrap();
                for (metric, value) in direct {
                    let s = out
                        .samples
                        .iter()
                        .find(|s| {
                            s.scheme == name
                                && s.param == format!("p={p}")
                                && s.repetition == rep
                                && s.metric == metric
                        })
                        .unwrap_or_else(|| panic!("{name} p={p} rep {rep} {metric}"));
                    assert_eq!(
                        s.value.to_bits(),
                        value.to_bits(),
                        "{name} p={p} rep {rep} {metric}"
                    );
                }
            }
        }
    }
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for name in [
        "clusters.toml",
        "redundancy.toml",
        "theory.toml",
        "ldp.toml",
    ] {
        let cfg = ExperimentConfig::from_path(&dir.join(name)).unwrap();
        cfg.validate().unwrap();
    }
    let game =
        GameFile::from_toml(&std::fs::read_to_string(dir.join("simulate.toml")).unwrap()).unwrap();
    let trace = run_game(&game.game_config(&dir).unwrap()).unwrap();
    assert_eq!(trace.rounds.len(), 25);
}

#[test]
fn file_dataset_drives_an_experiment() {
    let dir = tempfile::tempdir().unwrap();
    let mut f = std::fs::File::create(dir.path().join("data.csv")).unwrap();
    writeln!(f, "# readings").unwrap();
    for i in 0..500 {
        writeln!(f, "{}", (i % 50) as f64 * 0.3).unwrap();
    }
    drop(f);
    let batch = load_dataset(&dir.path().join("data.csv"), true).unwrap();
    assert_eq!(batch.len(), 500);
    assert!(batch.values().iter().all(|v| (-1.0..=1.0).contains(v)));

    let cfg_path = dir.path().join("exp.toml");
    std::fs::write(
        &cfg_path,
        r#"
        repetitions = 2
        round_no = 3
        samples_per_round = 100
        tth_pp = [95.0]
        attack_ratios = [0.1]
        dataset = { kind = "file", path = "data.csv", normalize = true }

        [[schemes]]
        name = "baseline"
        defender = { scheme = "baseline" }
        attacker = { scheme = "static_attacker", pp = 99.0 }
        "#,
    )
    .unwrap();
    let cfg = ExperimentConfig::from_path(&cfg_path).unwrap();
    let out = run_experiment(&cfg).unwrap();
    assert!(out.rows.iter().any(|r| r.metric == "untrimmed_fraction"));
}

#[test]
fn bad_configs_are_rejected() {
    assert!(ExperimentConfig::from_toml("surprise = 1").is_err());
    let bad_ratio = r#"
        tth_pp = [95.0]
        attack_ratios = [1.5]
        dataset = { kind = "uniform", lo = 0.0, hi = 1.0 }
        [[schemes]]
        name = "o"
        defender = { scheme = "ostrich" }
        attacker = { scheme = "static_attacker", pp = 99.0 }
    "#;
    let cfg = ExperimentConfig::from_toml(bad_ratio);
    assert!(cfg.is_err() || run_experiment(&cfg.unwrap()).is_err());
}
