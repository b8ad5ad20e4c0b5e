use super::*;

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn ov(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

#[test]
fn empty_file_gives_defaults_and_echo_is_stable() {
    let dir = tempfile::tempdir().unwrap();
    let file = write(dir.path(), "empty.cfg", "# nothing here\n\n");
    let a = parse_config(Some(&file), &[]).unwrap();
    let b = parse_config(None, &[]).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.adam, crate::adam::AdamConfig::default());
    assert_eq!(a.model.hidden_dims, vec![16]);
    assert_eq!(a.beta0, vec![0.3, 0.3]);
    assert_eq!(a.to_text(Command::TrainIb), b.to_text(Command::TrainIb));
    let echo = write(dir.path(), "echo.cfg", &a.to_text(Command::TrainIb));
    assert_eq!(parse_config(Some(&echo), &[]).unwrap(), a);
}

#[test]
fn cli_overrides_take_precedence_over_file() {
    let dir = tempfile::tempdir().unwrap();
    let file = write(dir.path(), "run.cfg", "eta = 0.01  # file value\nepochs=7\n");
    let cfg = parse_config(Some(&file), &ov(&["eta=0.05"])).unwrap();
    assert_eq!(cfg.adam.eta, 0.05);
    assert_eq!(cfg.epochs, 7);
}

#[test]
fn unknown_key_names_nearest_valid_key() {
    let err = parse_config(None, &ov(&["betaa0=0.5"])).unwrap_err().to_string();
    assert!(err.contains("'beta0'"), "{err}");
    assert!(err.contains("valid keys: seed"), "{err}");
    let dir = tempfile::tempdir().unwrap();
    let file = write(dir.path(), "bad.cfg", "neighbour_sizes = 3\n");
    let err = parse_config(Some(&file), &[]).unwrap_err().to_string();
    assert!(err.contains("'neighbor_sizes'"), "{err}");
}

#[test]
fn type_mismatch_and_missing_values_are_rejected() {
    let e = parse_config(None, &ov(&["eta=fast"])).unwrap_err();
    assert!(e.to_string().contains("key 'eta'"));
    assert_eq!(exit_code(&e), 2);
    let e = parse_config(None, &ov(&["dataset=files"])).unwrap_err();
    assert!(e.to_string().contains("missing required value for key 'data_dir'"), "{e}");
    assert!(parse_config(None, &ov(&["epochs=-3"])).is_err());
    assert!(parse_config(None, &ov(&["beta0=0.1,0.2,0.3"])).is_err());
    assert!(parse_config(None, &ov(&["layer_kind=lstm"])).is_err());
    assert!(parse_config(None, &ov(&["p_in=1.5"])).is_err());
    assert!(parse_config(None, &ov(&["eta"])).is_err());
    assert!(parse_config(None, &ov(&["dataset=files", "data_dir=/no/such/dir"])).is_err());
    let dir = tempfile::tempdir().unwrap();
    let file = write(dir.path(), "x.cfg", "just words\n");
    match parse_config(Some(&file), &[]) {
        Err(Error::Parse { line: 1, .. }) => {}
        other => panic!("{other:?}"),
    }
}

#[test]
fn lists_broadcast_or_match_layer_count() {
    let cfg = parse_config(None, &ov(&["hidden_dims=8,8", "beta0=0.5", "neighbor_sizes=1,2,3"])).unwrap();
    assert_eq!(cfg.model.num_layers(), 3);
    assert_eq!(cfg.beta0, vec![0.5; 3]);
    assert_eq!(cfg.neighbor_sizes, vec![1, 2, 3]);
    let linear = parse_config(None, &ov(&["hidden_dims=none"])).unwrap();
    assert_eq!(linear.model.num_layers(), 1);
}

#[test]
fn generated_dataset_loads_back_identically() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("data");
    let cfg = parse_config(None, &ov(&["sbm_block_size=15", "seed=4"])).unwrap();
    run(Command::GenData, &cfg, &out).unwrap();
    let files = parse_config(None, &ov(&["dataset=files", &format!("data_dir={}", out.display())])).unwrap();
    let (g1, d1) = load_dataset(&cfg).unwrap();
    let (g2, d2) = load_dataset(&files).unwrap();
    assert_eq!(g1, g2);
    assert_eq!(d1.labels, d2.labels);
    assert_eq!(d1.split, d2.split);
    assert!(d1.features.max_abs_diff(&d2.features) < 1e-15);
}

#[test]
fn runs_write_stable_schema_and_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let base = ["sbm_block_size=10", "epochs=3", "iterations=200", "log_every=50", "trailing_window=20"];
    let mut key_sets = Vec::new();
    for cmd in [Command::TrainFull, Command::TrainIb, Command::TrainOb, Command::Staleness, Command::Compopt] {
        let out = dir.path().join(cmd.name());
        let cfg = parse_config(None, &ov(&base)).unwrap();
        run(cmd, &cfg, &out).unwrap();
        let text = fs::read_to_string(out.join(METRICS_FILE)).unwrap();
        for line in text.lines() {
            let v: serde_json::Value = serde_json::from_str(line).unwrap();
            let keys: Vec<String> = v.as_object().unwrap().keys().cloned().collect();
            key_sets.push(keys);
        }
        assert!(out.join(CONFIG_ECHO_FILE).exists());
        assert!(out.join(TIMING_FILE).exists());
    }
    assert!(key_sets.windows(2).all(|w| w[0] == w[1]));
    let ckpt = Model::<f64>::load_checkpoint(dir.path().join("train-ib").join(MODEL_FILE)).unwrap();
    assert_eq!(ckpt.num_layers(), 2);
    assert!(crate::history::HistoryTable::<f64>::load_snapshot(dir.path().join("train-ob").join(HISTORY_FILE)).is_ok());
    let comp = fs::read_to_string(dir.path().join("compopt").join(COMPOPT_FILE)).unwrap();
    assert_eq!(comp.lines().count(), 4);
}

#[test]
fn sweep_writes_one_directory_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = parse_config(None, &ov(&["sbm_block_size=10", "epochs=2", "sweep_seeds=3", "seed=5"])).unwrap();
    run(Command::TrainFull, &cfg, dir.path()).unwrap();
    for s in 5..8 {
        let echo = fs::read_to_string(dir.path().join(format!("seed_{s}")).join(CONFIG_ECHO_FILE)).unwrap();
        assert!(echo.contains(&format!("seed = {s}\n")));
    }
}

#[test]
fn failures_leave_an_error_record_and_nonzero_exit() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    assert_eq!(main_entry(Command::TrainIb, None, &out, &ov(&["nope=1"])), 2);
    // Concat layers are rejected by the out-of-batch trainer at run time.
    let code = main_entry(Command::TrainOb, None, &out, &ov(&["layer_kind=concat_sage", "epochs=1"]));
    assert_eq!(code, 1);
    let text = fs::read_to_string(out.join(METRICS_FILE)).unwrap();
    let last: serde_json::Value = serde_json::from_str(text.lines().last().unwrap()).unwrap();
    assert_eq!(last["record"], "error");
    assert!(last["error_kind"].is_string());
    assert!(last["epoch"].is_null());
}

#[test]
fn command_names_round_trip() {
    for c in Command::ALL {
        assert_eq!(c.name().parse::<Command>().unwrap(), c);
    }
    assert!("train".parse::<Command>().is_err());
}
