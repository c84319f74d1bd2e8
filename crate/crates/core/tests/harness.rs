mod common;

use std::path::Path;

use common::{rng, scrambled_model, tiny_config, TINY_EXPERIMENT};
use cplm::compress::{calibrate, compress_model, CompressionSpec};
use cplm::data::{synth_corpus, SynthSpec};
use cplm::harness::container::{self, Record};
use cplm::harness::pipeline::{ablation_prompt_size, run_pipeline, transfer_matrix, Session};
use cplm::harness::{
    emit_report, load_checkpoint, load_compressed, load_model, load_prompt, save_checkpoint, Artifact,
    ExperimentConfig, ReportRow, ReportTable, CSV_HEADER,
};
use cplm::model::{forward_logits, LanguageModel};
use cplm::prompt::{init_prompt, PromptKind, Provenance, SoftPrompt};
use cplm::{Corruption, Error};


fn tiny() -> ExperimentConfig {
    ExperimentConfig::from_json(TINY_EXPERIMENT).unwrap()
}

fn corrupt_kind(path: &Path) -> Corruption {
    match load_checkpoint(path) {
        Err(Error::Corrupt(c)) => c,
        other => panic!("expected a corruption error, got {other:?}"),
    }
}

#[test]
fn checkpoints_round_trip_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(256, 16, 2, 2, 32, 5);
    let w = scrambled_model(&cfg, 0.1);
    let path = dir.path().join("m.ckpt");
    save_checkpoint(&Artifact::Model(w.clone()), &path).unwrap();
    assert_eq!(load_model(&path).unwrap(), w);

    let corpus = synth_corpus(&SynthSpec::named("alpha", 20_000).unwrap()).unwrap();
    let stats = calibrate(&w, &corpus, 4, 32, 0.01).unwrap();
    let tokens: Vec<u32> = corpus.tokens[..24].to_vec();
    for spec in [
        CompressionSpec::rtn(3).with_group_size(8),
        CompressionSpec::obs_prune(0.5),
        CompressionSpec::joint(0.5, 4).with_group_size(16),
        CompressionSpec::magnitude(0.25),
    ] {
        let m = compress_model(&w, &spec, Some(&stats)).unwrap();
        let path = dir.path().join(format!("{}.ckpt", spec.method.quantizes()));
        save_checkpoint(&Artifact::Compressed(m.clone()), &path).unwrap();
        let back = load_compressed(&path).unwrap();
        assert_eq!(back.fingerprint(), m.fingerprint(), "{}", spec.label());
        assert_eq!(back.spec(), m.spec());
        assert_eq!(back.pruned_count(), m.pruned_count());
        assert_eq!(forward_logits(&back, &tokens, None).unwrap(), forward_logits(&m, &tokens, None).unwrap());
    }

    let p = init_prompt(5, &w.token_embedding, 9);
    let path = dir.path().join("p.ckpt");
    save_checkpoint(&Artifact::Prompt(p.clone()), &path).unwrap();
    let back = load_prompt(&path).unwrap();
    assert_eq!(back, p);
    assert_eq!(back.id(), p.id());
    // a prompt file is not a model file
    assert!(matches!(load_model(&path), Err(Error::Config(_))));
}

#[test]
fn corrupted_checkpoints_report_distinct_errors() {
    let dir = tempfile::tempdir().unwrap();
    let p = SoftPrompt::new(common::gaussian(&mut rng(1), 3, 8, 1.0), Provenance::new(PromptKind::Random)).unwrap();
    let good = dir.path().join("p.ckpt");
    save_checkpoint(&Artifact::Prompt(p), &good).unwrap();
    let bytes = std::fs::read(&good).unwrap();
    let write = |name: &str, b: &[u8]| {
        let path = dir.path().join(name);
        std::fs::write(&path, b).unwrap();
        path
    };

    let mut magic = bytes.clone();
    magic[0] = b'X';
    assert_eq!(corrupt_kind(&write("magic", &magic)), Corruption::BadMagic);

    let mut version = bytes.clone();
    version[4..8].copy_from_slice(&7u32.to_le_bytes());
    assert_eq!(corrupt_kind(&write("version", &version)), Corruption::UnsupportedVersion(7));

    assert_eq!(corrupt_kind(&write("short", &bytes[..bytes.len() - 40])), Corruption::Truncated);
    assert_eq!(corrupt_kind(&write("tiny", &bytes[..6])), Corruption::Truncated);

    let mut flipped = bytes.clone();
    let at = bytes.len() - 40;
    flipped[at] ^= 0x01;
    assert_eq!(corrupt_kind(&write("flip", &flipped)), Corruption::DigestMismatch);

    assert!(matches!(load_checkpoint(&dir.path().join("missing")), Err(Error::Io(_))));
}

#[test]
fn container_round_trips_arbitrary_records() {
    let t = common::gaussian(&mut rng(2), 4, 3, 1.0);
    let records = vec![
        Record::f32("a", &t),
        Record::bytes("b", container::DType::PackedUint, &[5], vec![1, 2, 3, 4, 5]),
    ];
    let meta = serde_json::json!({ "hello": [1, 2] });
    let bytes = container::encode(&meta, &records);
    assert_eq!(&bytes[..4], container::MAGIC);
    let (m, r) = container::decode(&bytes).unwrap();
    assert_eq!(m, meta);
    assert_eq!(r, records);
    assert_eq!(r[0].to_tensor().unwrap(), t);
}

fn row(experiment: &str, source: &str, ppl: Option<f64>) -> ReportRow {
    ReportRow {
        experiment_id: experiment.into(),
        corpus: "alpha".into(),
        compression: "joint-50%+4bit".into(),
        prompt_source: source.into(),
        k: 16,
        ppl,
        nll: ppl.map(f64::ln),
        accuracy: None,
        latency_ms: Some(0.125),
    }
}

#[test]
fn csv_report_reads_back_and_rewrites_identically() {
    let mut table = ReportTable::default();
    table.push(row("pipeline", "none", Some(7.591234)));
    table.push(row("odd, \"quoted\"", "learned:rtn-3bit", None));
    let dir = tempfile::tempdir().unwrap();
    emit_report(&table, dir.path()).unwrap();
    let first = std::fs::read(dir.path().join("report.csv")).unwrap();
    emit_report(&table, dir.path()).unwrap();
    assert_eq!(std::fs::read(dir.path().join("report.csv")).unwrap(), first);
    assert!(dir.path().join("report.md").exists());

    let mut reader = csv::Reader::from_reader(first.as_slice());
    assert_eq!(reader.headers().unwrap().iter().collect::<Vec<_>>(), CSV_HEADER);
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(&rows[0][5], "7.59123");
    assert_eq!(&rows[0][8], "0.125000");
    assert_eq!(&rows[1][0], "odd, \"quoted\"");
    assert_eq!(&rows[1][3], "learned:rtn-3bit");
    assert_eq!(&rows[1][5], "");
    assert!(emit_report(&ReportTable::default(), dir.path()).is_err());
}

#[test]
fn config_rejects_unknown_keys_and_names() {
    let cfg = tiny();
    assert_eq!(ExperimentConfig::from_json(&cfg.to_json()).unwrap(), cfg);
    let extra = TINY_EXPERIMENT.replacen("\"seed\": 0,", "\"seed\": 0, \"learning_rate\": 1,", 1);
    assert!(matches!(ExperimentConfig::from_json(&extra), Err(Error::Config(_))));
    let nested = TINY_EXPERIMENT.replacen("\"warmup_steps\": 5", "\"warmup_steps\": 5, \"momentum\": 0.9", 1);
    assert!(ExperimentConfig::from_json(&nested).is_err());
    let unknown = TINY_EXPERIMENT.replacen("\"train_corpus\": \"alpha\"", "\"train_corpus\": \"gamma\"", 1);
    assert!(ExperimentConfig::from_json(&unknown).is_err());
    let bad_bits = TINY_EXPERIMENT.replacen("\"bits\": 4", "\"bits\": 9", 1);
    assert!(ExperimentConfig::from_json(&bad_bits).is_err());
}

fn csv_of(dir: &Path, resume: bool) -> String {
    let mut s = Session::new(tiny(), dir, resume).unwrap();
    run_pipeline(&mut s).unwrap().to_csv()
}

#[test]
fn pipeline_is_deterministic_and_resumable() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let first = csv_of(a.path(), false);
    assert_eq!(first, csv_of(b.path(), false));

    // interrupted run: drop one prompt, keep everything else
    let prompts = a.path().join("prompts");
    let victim = std::fs::read_dir(&prompts)
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.extension().is_some_and(|x| x == "ckpt"))
        .unwrap();
    std::fs::remove_file(&victim).unwrap();
    let base_before = std::fs::metadata(a.path().join("base.ckpt")).unwrap().modified().unwrap();
    assert_eq!(csv_of(a.path(), true), first);
    assert!(victim.exists());
    let base_after = std::fs::metadata(a.path().join("base.ckpt")).unwrap().modified().unwrap();
    assert_eq!(base_before, base_after, "resume retrained the base model");

    let table = {
        let mut s = Session::new(tiny(), a.path(), true).unwrap();
        run_pipeline(&mut s).unwrap()
    };
    // full rows never carry a learned prompt; compressed rows do
    assert!(table.rows.iter().filter(|r| r.compression == "full").all(|r| !r.prompt_source.starts_with("learned")));
    for c in ["rtn-4bit", "obs-quant-3bit"] {
        for corpus in ["alpha", "beta"] {
            let r = table.find("pipeline", corpus, c, &format!("learned:{c}")).unwrap();
            assert_eq!(r.k, 4);
            assert!(r.ppl.unwrap() > 1.0);
        }
    }
}

#[test]
fn full_only_compression_gives_only_full_rows() {
    let mut cfg = tiny();
    cfg.compression = vec![CompressionSpec::none()];
    let dir = tempfile::tempdir().unwrap();
    let mut s = Session::new(cfg, dir.path(), false).unwrap();
    let table = run_pipeline(&mut s).unwrap();
    assert_eq!(table.rows.len(), 2);
    assert!(table.rows.iter().all(|r| r.compression == "full" && r.prompt_source == "none" && r.k == 0));
    assert!(!dir.path().join("prompts").exists());
}

#[test]
fn transfer_diagonal_and_baseline_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = Session::new(tiny(), dir.path(), false).unwrap();
    let pipeline = run_pipeline(&mut s).unwrap();
    let grid = transfer_matrix(&mut s).unwrap();
    // one target × two corpora × (baseline + one source)
    assert_eq!(grid.rows.len(), 4);
    for corpus in ["alpha", "beta"] {
        let diag = grid.find("transfer", corpus, "obs-quant-3bit", "learned:obs-quant-3bit").unwrap();
        let cell = pipeline.find("pipeline", corpus, "obs-quant-3bit", "learned:obs-quant-3bit").unwrap();
        assert_eq!(diag.ppl, cell.ppl);
        let none = grid.find("transfer", corpus, "obs-quant-3bit", "none").unwrap();
        assert_eq!(none.k, 0);
    }

    let sweep = ablation_prompt_size(&mut s).unwrap();
    assert_eq!(sweep.rows.len(), 1);
    assert_eq!((sweep.rows[0].k, sweep.rows[0].prompt_source.as_str()), (0, "none"));
}

#[test]
fn cli_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("tiny.json");
    std::fs::write(&cfg_path, TINY_EXPERIMENT).unwrap();
    let out = dir.path().join("out");
    let run = |cmd: &str, extra: &[&str]| {
        std::process::Command::new(env!("CARGO_BIN_EXE_cplm"))
            .args([cmd, "--config", cfg_path.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", "4"])
            .args(extra)
            .env("RUST_LOG", "warn")
            .output()
            .unwrap()
    };
    let base = run("train-base", &[]);
    assert!(base.status.success(), "{}", String::from_utf8_lossy(&base.stderr));
    assert!(out.join("base.ckpt").exists());
    let ablate = run("ablate-k", &["--resume"]);
    assert!(ablate.status.success(), "{}", String::from_utf8_lossy(&ablate.stderr));
    let csv = std::fs::read_to_string(out.join("report.csv")).unwrap();
    assert!(csv.starts_with(&CSV_HEADER.join(",")));
    assert!(csv.contains("ablate-k,alpha,rtn-4bit,none,0,"));

    let missing = std::process::Command::new(env!("CARGO_BIN_EXE_cplm"))
        .args(["eval", "--config", dir.path().join("nope.json").to_str().unwrap()])
        .output()
        .unwrap();
    assert!(!missing.status.success());
    assert!(String::from_utf8_lossy(&missing.stderr).starts_with("error:"));
}
