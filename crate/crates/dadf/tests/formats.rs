use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use dadf::config::{ConfigError, RunConfig};
use dadf::manifest::{Manifest, ManifestEntry, ManifestError};
use dadf::report::{EvalReport, ReportRecord, FIELDS};
use dadf_core::data::Label;

#[test]
fn config_text_round_trips() {
    let cfg = RunConfig::default();
    let text = cfg.to_text();
    assert_eq!(text.lines().count(), RunConfig::KEYS.len());
    assert_eq!(RunConfig::parse_text(&text).unwrap(), cfg);

    let mut custom = cfg.clone();
    custom
        .apply_overrides(&[
            "adapter.variant=c",
            "rga.rec_data=fake",
            "train.lr=0.00025",
            "data.test=a.tsv,b.tsv",
            "ablate.epochs=3",
            "rga.enabled=off",
        ])
        .unwrap();
    assert_ne!(custom, cfg);
    assert_eq!(RunConfig::parse_text(&custom.to_text()).unwrap(), custom);
    assert_eq!(custom.data.test, vec![PathBuf::from("a.tsv"), PathBuf::from("b.tsv")]);
    assert_eq!(custom.ablate.epochs, Some(3));
}

#[test]
fn config_every_key_is_readable() {
    let cfg = RunConfig::default();
    for key in RunConfig::KEYS {
        let v = cfg.get(key).unwrap();
        let mut copy = cfg.clone();
        copy.set(key, &v).unwrap();
        assert_eq!(copy, cfg, "{key}");
    }
}

#[test]
fn config_overrides_apply_in_order() {
    let mut cfg = RunConfig::default();
    cfg.apply_overrides(&["train.epochs=3", "train.epochs=7"]).unwrap();
    assert_eq!(cfg.train.epochs, 7);
}

#[test]
fn config_errors_are_specific() {
    let mut cfg = RunConfig::default();
    assert_eq!(
        cfg.set("model.colour", "1"),
        Err(ConfigError::UnknownKey("model.colour".into()))
    );
    assert!(matches!(
        cfg.set("train.epochs", "many"),
        Err(ConfigError::Value { .. })
    ));
    assert!(matches!(
        cfg.set("rga.enabled", "maybe"),
        Err(ConfigError::Value { .. })
    ));
    assert!(matches!(
        cfg.set("adapter.variant", "z"),
        Err(ConfigError::Value { .. })
    ));
    assert_eq!(
        cfg.apply_overrides(&["train.epochs"]),
        Err(ConfigError::Override("train.epochs".into()))
    );
    assert_eq!(
        RunConfig::parse_text("# comment\n\ntrain.epochs = 2\nnonsense\n"),
        Err(ConfigError::Syntax { line: 4 })
    );
    let mut zero = RunConfig::default();
    zero.set("train.epochs", "0").unwrap();
    assert!(matches!(zero.validate(), Err(ConfigError::Invalid(_))));
    let mut bad_patch = RunConfig::default();
    bad_patch.set("model.image_size", "60").unwrap();
    assert!(bad_patch.validate().is_err());
}

#[test]
fn config_load_reads_file_then_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("run.cfg");
    std::fs::write(&p, "train.epochs = 5\ntrain.seed = 9\n").unwrap();
    let cfg = dadf::config::load(Some(&p), &["train.seed=11".to_string()]).unwrap();
    assert_eq!(cfg.train.epochs, 5);
    assert_eq!(cfg.train.seed, 11);
    std::fs::write(&p, "train.epochs = 5\nbogus.key = 1\n").unwrap();
    let err = dadf::config::load(Some(&p), &[]).unwrap_err().to_string();
    assert!(err.contains("bogus.key"), "{err}");
}

fn entry(i: usize, label: Label) -> ManifestEntry {
    ManifestEntry {
        image_path: PathBuf::from(format!("images/{i:05}.png")),
        label,
        mask_path: match label {
            Label::Fake => Some(PathBuf::from(format!("masks/{i:05}.png"))),
            Label::Real => None,
        },
        domain_tag: "clean".into(),
    }
}

#[test]
fn manifest_round_trips() {
    let m = Manifest {
        entries: (0..6)
            .map(|i| entry(i, if i % 2 == 0 { Label::Real } else { Label::Fake }))
            .collect(),
        base: PathBuf::from("/data"),
    };
    let back = Manifest::parse(&m.to_text(), Path::new("/data"), "m.tsv").unwrap();
    assert_eq!(back, m);
    assert_eq!(back.resolve(Path::new("x.png")), PathBuf::from("/data/x.png"));
    assert_eq!(back.resolve(Path::new("/abs/x.png")), PathBuf::from("/abs/x.png"));
}

#[test]
fn manifest_reports_malformed_line_numbers() {
    let text = "# header\na.png\treal\t\tclean\n\nb.png\tfake\tclean\n";
    match Manifest::parse(text, Path::new("."), "m.tsv") {
        Err(ManifestError::Malformed { line, path, .. }) => {
            assert_eq!(line, 4);
            assert_eq!(path, "m.tsv");
        }
        other => panic!("expected a malformed-line error, got {other:?}"),
    }
    let bad_label = "a.png\tmaybe\t\tclean\n";
    assert!(matches!(
        Manifest::parse(bad_label, Path::new("."), "m.tsv"),
        Err(ManifestError::Malformed { line: 1, .. })
    ));
    let fake_without_mask = "a.png\treal\t\tclean\nb.png\tfake\t\tclean\n";
    assert!(matches!(
        Manifest::parse(fake_without_mask, Path::new("."), "m.tsv"),
        Err(ManifestError::Malformed { line: 2, .. })
    ));
}

#[test]
fn manifest_validation_names_missing_files() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("a.png"), b"").unwrap();
    let text = "a.png\treal\t\tclean\nb.png\tfake\tb_mask.png\tclean\n";
    let p = dir.path().join("m.tsv");
    std::fs::write(&p, text).unwrap();
    let m = Manifest::load(&p).unwrap();
    match m.validate("m.tsv") {
        Err(ManifestError::Missing { line, file, .. }) => {
            assert_eq!(line, 2);
            assert_eq!(file, "b.png");
        }
        other => panic!("expected a missing-file error, got {other:?}"),
    }
    let empty = Manifest::parse("# nothing\n", dir.path(), "e.tsv").unwrap();
    assert!(matches!(empty.validate("e.tsv"), Err(ManifestError::Empty(_))));
}

#[test]
fn large_manifest_loads_quickly() {
    let dir = tempfile::tempdir().unwrap();
    let m = Manifest {
        entries: (0..10_000)
            .map(|i| entry(i, if i % 3 == 0 { Label::Fake } else { Label::Real }))
            .collect(),
        base: dir.path().to_path_buf(),
    };
    let p = dir.path().join("big.tsv");
    m.write(&p).unwrap();
    let t = Instant::now();
    let back = Manifest::load(&p).unwrap();
    let elapsed = t.elapsed();
    assert_eq!(back.entries.len(), 10_000);
    assert_eq!(back, m);
    assert!(elapsed.as_secs_f64() < 1.0, "{elapsed:?}");
}

fn record(pbca: f64, auc: Option<f64>) -> ReportRecord {
    ReportRecord {
        pbca,
        iinc: 0.1 + 1e-17,
        acc: 87.5,
        auc,
        eer: auc.map(|a| 100.0 - a),
        trainable_fraction: 1.0 / 3.0,
        samples: 8,
    }
}

#[test]
fn report_json_round_trips_exactly() {
    let mut domains = BTreeMap::new();
    domains.insert("clean".to_string(), record(0.1 + 0.2, Some(91.25)));
    domains.insert("jpeg-2".to_string(), record(93.0, None));
    let r = EvalReport {
        overall: record(std::f64::consts::PI * 30.0, Some(88.0)),
        domains,
    };
    let back = EvalReport::from_json(&r.to_json()).unwrap();
    assert_eq!(back, r);
    assert_eq!(back.overall.pbca.to_bits(), r.overall.pbca.to_bits());
}

#[test]
fn report_text_lists_every_field() {
    let mut domains = BTreeMap::new();
    domains.insert("clean".to_string(), record(90.0, None));
    let r = EvalReport {
        overall: record(95.5, Some(97.0)),
        domains,
    };
    let text = r.to_text();
    for f in FIELDS {
        assert!(text.lines().any(|l| l.starts_with(&format!("{f} = "))), "{f}");
        assert!(
            text.lines().any(|l| l.starts_with(&format!("domain.clean.{f} = "))),
            "{f}"
        );
    }
    assert!(text.contains("domain.clean.auc = undefined"));
    assert!(text.contains("pbca = 95.5"));
    let dir = tempfile::tempdir().unwrap();
    r.write(dir.path(), "report").unwrap();
    let json = std::fs::read_to_string(dir.path().join("report.json")).unwrap();
    assert_eq!(EvalReport::from_json(&json).unwrap(), r);
    assert_eq!(std::fs::read_to_string(dir.path().join("report.txt")).unwrap(), text);
}
