use proptest::prelude::*;
use serde_json::json;
use surrogates::harness::*;
use surrogates::Error;

fn short(kind: ExperimentKind) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(kind);
    cfg.rsk.steps = 12;
    cfg.rsk.eval_every = 4;
    cfg.contrastive.steps = 10;
    cfg.contrastive.eval_every = 5;
    cfg.strings.train = 64;
    cfg.strings.val = 16;
    cfg.learned.schedule.rounds = 2;
    cfg.learned.schedule.surrogate_steps = 2;
    cfg.learned.schedule.model_steps = 2;
    cfg.learned.pretrain_steps = 5;
    cfg.learned.prefit_triplets = 64;
    cfg.learned.prefit_steps = 5;
    cfg.checks.gradcheck_instances = 1;
    cfg.checks.edit_pairs = 50;
    cfg.checks.iou_pairs = 2;
    cfg.checks.iou_samples = 1000;
    cfg
}

const KINDS: [ExperimentKind; 7] = [
    ExperimentKind::Rsk,
    ExperimentKind::RskSimix,
    ExperimentKind::Ls,
    ExperimentKind::Feds,
    ExperimentKind::Esupcon,
    ExperimentKind::Gradcheck,
    ExperimentKind::OracleSuite,
];

#[test]
fn every_kind_is_deterministic() {
    for kind in KINDS {
        let cfg = short(kind);
        let a = run(&cfg).unwrap();
        let b = run(&cfg).unwrap();
        assert_eq!(a.deterministic_json(), b.deterministic_json(), "{kind:?}");
        assert!(!a.summary.is_empty(), "{kind:?}");
    }
}

#[test]
fn simix_does_not_perturb_the_data_stream() {
    let plain = run(&short(ExperimentKind::Rsk)).unwrap();
    let mixed = run(&short(ExperimentKind::RskSimix)).unwrap();
    for k in ["initial_train_recall@1", "initial_test_recall@4"] {
        assert_eq!(plain.summary[k], mixed.summary[k]);
    }
}

#[test]
fn report_round_trip_and_csv() {
    let report = run(&short(ExperimentKind::Rsk)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    report.write(dir.path()).unwrap();
    assert_eq!(RunReport::read(dir.path()).unwrap(), report);

    let text = std::fs::read_to_string(dir.path().join(METRICS_FILE)).unwrap();
    assert!(!text.contains('\r'));
    assert_eq!(text.lines().count(), report.series.len() + 1);
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header = reader.headers().unwrap().clone();
    assert_eq!(&header[0], "epoch");
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), report.series.len());
    for (row, epoch) in rows.iter().zip(&report.series.epochs) {
        assert_eq!(row[0].parse::<usize>().unwrap(), *epoch);
        assert_eq!(row.len(), header.len());
    }
}

#[test]
fn report_read_surfaces_the_path() {
    let dir = tempfile::tempdir().unwrap();
    match RunReport::read(&dir.path().join("missing")) {
        Err(Error::Io { path, .. }) => assert!(path.ends_with(REPORT_FILE)),
        other => panic!("{other:?}"),
    }
}

#[test]
fn overrides_use_dotted_paths() {
    let cfg = ExperimentConfig::new(ExperimentKind::Rsk)
        .with_overrides(&["rsk.steps=7", "seed=9", "rsk.k_set=[1,3]"])
        .unwrap();
    assert_eq!((cfg.rsk.steps, cfg.seed, cfg.rsk.k_set.clone()), (7, 9, vec![1, 3]));
    for bad in ["rsk.nope=1", "rsk.steps", "rsk.tau2=-1", "kind=unknown"] {
        assert!(matches!(cfg.with_overrides(&[bad]), Err(Error::Config { .. })), "{bad}");
    }
}

#[test]
fn config_round_trips_through_json() {
    let cfg = short(ExperimentKind::Feds);
    let text = serde_json::to_string(&cfg.to_value()).unwrap();
    assert_eq!(ExperimentConfig::from_json(&text).unwrap(), cfg);
    let minimal = ExperimentConfig::from_value(json!({"kind": "esupcon"})).unwrap();
    assert_eq!(minimal, ExperimentConfig::new(ExperimentKind::Esupcon));
}

fn field(e: &Error) -> String {
    match e {
        Error::Config { field, .. } => field.clone(),
        other => panic!("expected a config error, got {other:?}"),
    }
}

// Each (path, value) breaks one documented precondition of a downstream
// module; validation must reject it by name before anything runs.
const VIOLATIONS: &[(&str, &str, ExperimentKind)] = &[
    ("rsk.tau1", "0", ExperimentKind::Rsk),
    ("rsk.tau2", "-0.5", ExperimentKind::Rsk),
    ("rsk.k_set", "[]", ExperimentKind::Rsk),
    ("rsk.k_set", "[0]", ExperimentKind::Rsk),
    ("rsk.samples_per_class", "1", ExperimentKind::Rsk),
    ("rsk.classes_per_batch", "99", ExperimentKind::Rsk),
    ("rsk.chunk_size", "0", ExperimentKind::Rsk),
    ("rsk.chunk_size", "4", ExperimentKind::RskSimix),
    ("rsk.embed_dim", "0", ExperimentKind::Rsk),
    ("rsk.eval_every", "0", ExperimentKind::Rsk),
    ("rsk.optimizer.lr", "-1", ExperimentKind::Rsk),
    ("data.classes", "1", ExperimentKind::Rsk),
    ("data.sigma", "-1", ExperimentKind::Esupcon),
    ("data.label_noise", "1.5", ExperimentKind::Esupcon),
    ("data.per_class", "1", ExperimentKind::Esupcon),
    ("contrastive.tau", "0", ExperimentKind::Esupcon),
    ("contrastive.tau_c", "-1", ExperimentKind::Esupcon),
    ("strings.alphabet", "1", ExperimentKind::Ls),
    ("strings.length", "0", ExperimentKind::Feds),
    ("learned.ramp.upper", "0.1", ExperimentKind::Feds),
    ("learned.schedule.batch_size", "0", ExperimentKind::Ls),
    ("learned.surrogate.hidden", "0", ExperimentKind::Ls),
    ("checks.gradcheck_eps", "0", ExperimentKind::Gradcheck),
    ("checks.iou_samples", "0", ExperimentKind::OracleSuite),
];

#[test]
fn validation_names_the_field() {
    for &(path, value, kind) in VIOLATIONS {
        let err = ExperimentConfig::new(kind).with_overrides(&[format!("{path}={value}")]).unwrap_err();
        assert_eq!(field(&err), path, "{path}={value}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// Random corruptions of a valid config either fail validation or run
    /// to completion; nothing invalid reaches a pipeline.
    #[test]
    fn fuzzed_configs_fail_early_or_run(
        pick in 0..VIOLATIONS.len(),
        scale in prop::sample::select(vec![-1.0f64, 0.0, 0.5, 2.0, 1e9]),
        kind in 0usize..7,
    ) {
        let (path, _, _) = VIOLATIONS[pick];
        let base = short(KINDS[kind]);
        let current = path.split('.').try_fold(base.to_value(), |v, k| v.get(k).cloned());
        let value = match current {
            Some(serde_json::Value::Number(n)) => {
                let x = n.as_f64().unwrap() * scale;
                if n.is_f64() { json!(x) } else if x >= 0.0 && x.fract() == 0.0 { json!(x as u64) } else { json!(x) }
            }
            _ => json!(scale),
        };
        match base.with_overrides(&[format!("{path}={value}")]) {
            Err(Error::Config { .. }) => {}
            Err(other) => prop_assert!(false, "{other:?}"),
            Ok(cfg) => {
                if scale < 1e6 {
                    match run(&cfg) {
                        Ok(_) | Err(Error::NumericAbort { .. }) => {}
                        Err(other) => prop_assert!(false, "{path}={value} passed validation but failed with {other:?}"),
                    }
                }
            }
        }
    }
}
