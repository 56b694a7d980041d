use std::io::Write;

use super::*;

fn parse(argv: &[&str]) -> Result<RunConfig> {
    let m = Cli::command().try_get_matches_from(argv).unwrap();
    let cli = Cli::from_arg_matches(&m).unwrap();
    effective_config(&cli, &m)
}

fn config_file(json: &str) -> tempfile::NamedTempFile {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    f.write_all(json.as_bytes()).unwrap();
    f
}

const TRAIN: [&str; 6] = ["mixsvs", "train", "--data", "d", "--out", "o"];

#[test]
fn defaults_match_config_defaults() {
    let cfg = parse(&TRAIN).unwrap();
    assert_eq!(cfg, RunConfig::default());
    assert_eq!(cfg.model.n_blocks, 16);
    assert_eq!(cfg.train.warmup_steps, 2000);
    assert_eq!(cfg.inference.overlap, 30);
}

#[test]
fn help_shows_defaults() {
    let mut cmd = Cli::command();
    let train = cmd.find_subcommand_mut("train").unwrap().render_long_help().to_string();
    for needle in [
        "--blocks <BLOCKS>",
        "[default: 16]",
        "[default: 200]",
        "[default: 256]",
        "[default: 32]",
        "[default: 0.5]",
        "[default: 0.001]",
        "[default: 0.9]",
        "[default: 0.999]",
        "[default: 3]",
        "[default: steps / 10]",
    ] {
        assert!(train.contains(needle), "missing {needle}");
    }
    let synth = cmd.find_subcommand_mut("synth").unwrap().render_long_help().to_string();
    assert!(synth.contains("[default: overlapped]") && synth.contains("[default: 30]"));
    for sub in cmd.get_subcommands() {
        for arg in sub.get_arguments() {
            let takes_value = arg.get_num_args().is_some_and(|n| n.takes_values());
            if takes_value && !arg.is_required_set() && arg.get_default_values().is_empty() {
                let help = arg.get_help().map(|h| h.to_string()).unwrap_or_default();
                let documented = help.contains("[default:") || arg.get_id() == "config";
                let optional_path = ["ckpt", "resume", "score"].contains(&arg.get_id().as_str());
                assert!(documented || optional_path, "{} --{}", sub.get_name(), arg.get_id());
            }
        }
    }
}

#[test]
fn flags_override_file() {
    let f = config_file(r#"{"seed": 3, "model": {"n_blocks": 4, "dropout": 0.1}, "train": {"total_steps": 50}}"#);
    let path = f.path().to_str().unwrap();
    let mut argv = TRAIN.to_vec();
    argv.extend(["--config", path, "--blocks", "2"]);
    let cfg = parse(&argv).unwrap();
    assert_eq!(cfg.model.n_blocks, 2);
    assert_eq!(cfg.model.dropout, 0.1);
    assert_eq!(cfg.seed, 3);
    assert_eq!(cfg.train.seed, 3);
    assert_eq!(cfg.train.total_steps, 50);
    assert_eq!(cfg.train.warmup_steps, 5);

    argv.extend(["--seed", "9", "--steps", "100", "--seq-len", "64"]);
    let cfg = parse(&argv).unwrap();
    assert_eq!((cfg.seed, cfg.train.seed), (9, 9));
    assert_eq!((cfg.train.total_steps, cfg.train.warmup_steps), (100, 10));
    assert_eq!((cfg.model.seq_len, cfg.train.seq_len), (64, 64));
}

#[test]
fn explicit_warmup_in_file_is_kept() {
    let f = config_file(r#"{"train": {"total_steps": 50, "warmup_steps": 0}}"#);
    let mut argv = TRAIN.to_vec();
    argv.extend(["--config", f.path().to_str().unwrap()]);
    assert_eq!(parse(&argv).unwrap().train.warmup_steps, 0);
}

#[test]
fn bad_configs_are_config_errors() {
    for json in [
        r#"{"model": {"n_blokcs": 4}}"#,
        r#"{"train": {"batch_size": 0}}"#,
        r#"{"model": {"dropout": 1.5}}"#,
        r#"{"train": {"seq_len": 10}}"#,
        "[1, 2]",
        "{",
    ] {
        let f = config_file(json);
        let mut argv = TRAIN.to_vec();
        argv.extend(["--config", f.path().to_str().unwrap()]);
        assert!(matches!(parse(&argv), Err(Error::Config(_))), "{json}");
    }
}

#[test]
fn config_round_trips_through_dump() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.json");
    let cfg = RunConfig {
        seed: 5,
        model: ModelConfig::ablation(),
        ..Default::default()
    };
    cfg.dump(&path).unwrap();
    let (back, _) = config_from_json(&fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(back, cfg);
}

#[test]
fn bench_lists_parse() {
    let cfg = parse(&["mixsvs", "bench", "--out", "b.csv", "--frames", "100,200", "--modes", "sequential"]).unwrap();
    assert_eq!(cfg.bench.frames, vec![100, 200]);
    assert_eq!(cfg.bench.modes, vec![BenchMode::Sequential]);
    let cfg = parse(&["mixsvs", "analyze", "loss-profile", "--ckpt", "m", "--data", "d", "--out", "p.csv", "--k", "2"]).unwrap();
    assert_eq!(cfg.train.k, 2);
}

#[test]
fn exit_codes() {
    assert_eq!(run(["mixsvs", "--bogus"]), 2);
    assert_eq!(run(["mixsvs", "frobnicate"]), 2);
    assert_eq!(run(["mixsvs", "synth", "--score", "x"]), 2);
    assert_eq!(run(["mixsvs", "--help"]), 0);
    assert_eq!(run(["mixsvs", "synth", "--score", "/nonexistent/s.json", "--ckpt", "/nonexistent/m.ten1", "--out", "/tmp/x.mel1"]), 1);
}
