//! Experiment pipelines over a shared, resumable artifact store.
//!
//! Artifacts live under the output directory:
//! `base.ckpt`, `compressed/<spec>.ckpt`, `prompts/<spec>-k<k>.ckpt` (plus a
//! `.history.json` next to each prompt). With `resume` set, an existing
//! artifact is loaded instead of recomputed; everything is deterministic in
//! the config, so loaded and recomputed artifacts are bitwise identical.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::rc::Rc;

use super::checkpoint::{load_compressed, load_model, load_prompt, save_checkpoint, Artifact};
use super::config::ExperimentConfig;
use super::report::{ReportRow, ReportTable};
use crate::compress::{calibrate, compress_model, CalibStats, CompressedModel, CompressionSpec, Method};
use crate::data::{Corpus, Split};
use crate::error::{Error, Result};
use crate::eval::{continuation_tasks, mc_accuracy, perplexity, profile_latency, EvalReport};
use crate::model::{init_model, train_base, LanguageModel, ModelWeights};
use crate::prompt::{hard_prompt, stitch, train_prompt, SoftPrompt, TrainHistory, HARD_PROMPT_TEXT};

/// File-name-safe key for a compression spec. Includes the group size and
/// calibration corpus when they differ from the defaults.
pub fn spec_key(spec: &CompressionSpec) -> String {
    let mut key = spec.label().replace('%', "pct").replace('+', "_");
    if spec.method.quantizes() && spec.group_size != 32 {
        key.push_str(&format!("-g{}", spec.group_size));
    }
    if let Some(c) = spec.calib.corpus.as_ref().filter(|_| spec.method.needs_calibration()) {
        key.push_str(&format!("-cal{c}"));
    }
    key
}

pub fn learned_source(spec: &CompressionSpec) -> String {
    format!("learned:{}", spec.label())
}

pub struct Session {
    pub cfg: ExperimentConfig,
    pub out: PathBuf,
    pub resume: bool,
    corpora: BTreeMap<String, Corpus>,
    base: Option<Rc<ModelWeights>>,
    calib: BTreeMap<String, Rc<CalibStats>>,
    compressed: BTreeMap<String, Rc<CompressedModel>>,
    prompts: BTreeMap<String, Rc<SoftPrompt>>,
    histories: BTreeMap<String, TrainHistory>,
    evals: BTreeMap<(String, String, String), EvalReport>,
}

impl Session {
    pub fn new(cfg: ExperimentConfig, out: &Path, resume: bool) -> Result<Session> {
        cfg.validate()?;
        let mut corpora = BTreeMap::new();
        for src in &cfg.corpora {
            let c = src.load().map_err(|e| e.in_stage("load-corpora"))?;
            corpora.insert(src.name().to_string(), c);
        }
        std::fs::create_dir_all(out)?;
        Ok(Session {
            cfg,
            out: out.to_path_buf(),
            resume,
            corpora,
            base: None,
            calib: BTreeMap::new(),
            compressed: BTreeMap::new(),
            prompts: BTreeMap::new(),
            histories: BTreeMap::new(),
            evals: BTreeMap::new(),
        })
    }

    pub fn corpus(&self, name: &str) -> Result<&Corpus> {
        self.corpora.get(name).ok_or_else(|| Error::Config(format!("corpus `{name}` is not defined")))
    }

    pub fn train_corpus(&self) -> &Corpus {
        &self.corpora[&self.cfg.train_corpus]
    }

    fn reuse(&self, path: &Path) -> bool {
        self.resume && path.exists()
    }

    /// The trained full-precision model.
    pub fn base(&mut self) -> Result<Rc<ModelWeights>> {
        if let Some(b) = &self.base {
            return Ok(b.clone());
        }
        let path = self.out.join("base.ckpt");
        let w = if self.reuse(&path) {
            log::info!("loading base model from {}", path.display());
            load_model(&path).map_err(|e| e.in_stage("train-base"))?
        } else {
            let run = || -> Result<ModelWeights> {
                let init = init_model(&self.cfg.model_config())?;
                let outcome = train_base(&init, self.train_corpus(), &self.cfg.base_train_config())?;
                let losses = serde_json::to_string(&outcome.losses)?;
                std::fs::write(self.out.join("base.losses.json"), losses)?;
                save_checkpoint(&Artifact::Model(outcome.weights.clone()), &path)?;
                Ok(outcome.weights)
            };
            log::info!("training base model");
            run().map_err(|e| e.in_stage("train-base"))?
        };
        let w = Rc::new(w);
        self.base = Some(w.clone());
        Ok(w)
    }

    fn calib_stats(&mut self, spec: &CompressionSpec) -> Result<Rc<CalibStats>> {
        let corpus = spec.calib.corpus.clone().unwrap_or_else(|| self.cfg.train_corpus.clone());
        let key = format!("{corpus}/{}x{}/{}", spec.calib.n_sequences, spec.calib.seq_len, spec.damping);
        if let Some(c) = self.calib.get(&key) {
            return Ok(c.clone());
        }
        let base = self.base()?;
        let stats = calibrate(
            &*base,
            self.corpus(&corpus)?,
            spec.calib.n_sequences,
            spec.calib.seq_len,
            spec.damping,
        )?;
        let stats = Rc::new(stats);
        self.calib.insert(key, stats.clone());
        Ok(stats)
    }

    pub fn compressed(&mut self, spec: &CompressionSpec) -> Result<Rc<CompressedModel>> {
        let key = spec_key(spec);
        if let Some(m) = self.compressed.get(&key) {
            return Ok(m.clone());
        }
        let path = self.out.join("compressed").join(format!("{key}.ckpt"));
        let m = if self.reuse(&path) {
            load_compressed(&path).map_err(|e| e.in_stage("compress"))?
        } else {
            log::info!("compressing: {}", spec.label());
            let mut run = || -> Result<CompressedModel> {
                let base = self.base()?;
                let calib = if spec.method.needs_calibration() {
                    Some(self.calib_stats(spec)?)
                } else {
                    None
                };
                let m = compress_model(&base, spec, calib.as_deref())?;
                save_checkpoint(&Artifact::Compressed(m.clone()), &path)?;
                Ok(m)
            };
            run().map_err(|e| e.in_stage("compress"))?
        };
        let m = Rc::new(m);
        self.compressed.insert(key, m.clone());
        Ok(m)
    }

    /// Prompt of length `k` trained against `spec` on the training corpus.
    pub fn prompt(&mut self, spec: &CompressionSpec, k: usize) -> Result<Rc<SoftPrompt>> {
        let key = format!("{}-k{k}", spec_key(spec));
        if let Some(p) = self.prompts.get(&key) {
            return Ok(p.clone());
        }
        let dir = self.out.join("prompts");
        let path = dir.join(format!("{key}.ckpt"));
        let hist_path = dir.join(format!("{key}.history.json"));
        let (p, h) = if self.reuse(&path) && hist_path.exists() {
            let p = load_prompt(&path).map_err(|e| e.in_stage("train-prompt"))?;
            let h: TrainHistory = serde_json::from_str(&std::fs::read_to_string(&hist_path)?)?;
            (p, h)
        } else {
            let model = self.compressed(spec)?;
            log::info!("training prompt k={k} against {}", spec.label());
            let run = || -> Result<(SoftPrompt, TrainHistory)> {
                let (p, h) = train_prompt(&model, self.train_corpus(), &self.cfg.prompt_config(k))?;
                save_checkpoint(&Artifact::Prompt(p.clone()), &path)?;
                std::fs::write(&hist_path, serde_json::to_string_pretty(&h)?)?;
                Ok((p, h))
            };
            run().map_err(|e| e.in_stage("train-prompt"))?
        };
        let p = Rc::new(p);
        self.prompts.insert(key.clone(), p.clone());
        self.histories.insert(key, h);
        Ok(p)
    }

    pub fn history(&self, spec: &CompressionSpec, k: usize) -> Option<&TrainHistory> {
        self.histories.get(&format!("{}-k{k}", spec_key(spec)))
    }

    /// Evaluation of `prompt` stitched onto the `spec` model, memoized per session.
    pub fn evaluate(
        &mut self,
        spec: &CompressionSpec,
        prompt: Option<&SoftPrompt>,
        corpus: &str,
    ) -> Result<EvalReport> {
        let key = (spec_key(spec), prompt.map(SoftPrompt::id).unwrap_or_default(), corpus.to_string());
        if let Some(r) = self.evals.get(&key) {
            return Ok(r.clone());
        }
        let model = self.compressed(spec)?;
        let run = || -> Result<EvalReport> {
            let handle = match prompt {
                Some(p) => Some(stitch(p, &model)?),
                None => None,
            };
            perplexity(
                &model,
                handle.map(|h| h.prompt),
                self.corpus(corpus)?,
                self.cfg.eval_split,
                self.cfg.eval_seq_len,
            )
        };
        let r = run().map_err(|e| e.in_stage("eval"))?;
        self.evals.insert(key, r.clone());
        Ok(r)
    }

    fn row(
        &mut self,
        experiment: &str,
        spec: &CompressionSpec,
        prompt: Option<&SoftPrompt>,
        source: &str,
        corpus: &str,
    ) -> Result<ReportRow> {
        let r = self.evaluate(spec, prompt, corpus)?;
        Ok(ReportRow {
            experiment_id: experiment.to_string(),
            corpus: corpus.to_string(),
            compression: spec.label(),
            prompt_source: source.to_string(),
            k: r.k,
            ppl: Some(r.ppl),
            nll: Some(r.mean_nll),
            accuracy: None,
            latency_ms: None,
        })
    }
}

/// Base training, then per compression spec: compress, evaluate without a
/// prompt, train a prompt (compressed specs only) and evaluate with it on
/// every eval corpus. The hand-written prompt is evaluated too when it fits
/// in the context window.
pub fn run_pipeline(s: &mut Session) -> Result<ReportTable> {
    let mut table = ReportTable::default();
    let k = s.cfg.prompt.k;
    let base = s.base()?;
    let tokenizer = crate::data::TokenizerSpec::Byte;
    let hard = hard_prompt(HARD_PROMPT_TEXT, &tokenizer, base.token_embedding()).ok().filter(|p| {
        p.k() + s.cfg.eval_seq_len <= s.cfg.model.max_positions
            && s.train_corpus().tokenizer_id == tokenizer.id()
    });
    for spec in s.cfg.compression.clone() {
        let prompt = if spec.method != Method::None { Some(s.prompt(&spec, k)?) } else { None };
        for corpus in s.cfg.eval_corpora.clone() {
            table.push(s.row("pipeline", &spec, None, "none", &corpus)?);
            if let Some(h) = &hard {
                table.push(s.row("pipeline", &spec, Some(h), "hard", &corpus)?);
            }
            if let Some(p) = &prompt {
                table.push(s.row("pipeline", &spec, Some(p), &learned_source(&spec), &corpus)?);
            }
        }
    }
    Ok(table)
}

/// One prompt per `k` against the sweep's compressed model; `k = 0` is the
/// no-prompt baseline. Rows are evaluated on the training corpus.
pub fn ablation_prompt_size(s: &mut Session) -> Result<ReportTable> {
    let sweep = s.cfg.k_sweep.clone().ok_or_else(|| Error::Config("config has no k_sweep".into()))?;
    let corpus = s.cfg.train_corpus.clone();
    let mut table = ReportTable::default();
    for &k in &sweep.ks {
        if k == 0 {
            table.push(s.row("ablate-k", &sweep.spec, None, "none", &corpus)?);
        } else {
            let p = s.prompt(&sweep.spec, k)?;
            table.push(s.row("ablate-k", &sweep.spec, Some(&p), &learned_source(&sweep.spec), &corpus)?);
        }
    }
    Ok(table)
}

/// Every source prompt stitched onto every target model, plus a no-prompt
/// row per target, on every eval corpus. Diagonal cells are the directly
/// trained prompts, shared with [`run_pipeline`].
pub fn transfer_matrix(s: &mut Session) -> Result<ReportTable> {
    let t = s.cfg.transfer.clone().ok_or_else(|| Error::Config("config has no transfer grid".into()))?;
    let k = s.cfg.prompt.k;
    let mut table = ReportTable::default();
    for target in &t.targets {
        for corpus in s.cfg.eval_corpora.clone() {
            table.push(s.row("transfer", target, None, "none", &corpus)?);
            for source in &t.sources {
                let p = s.prompt(source, k)?;
                table.push(s.row("transfer", target, Some(&p), &learned_source(source), &corpus)?);
            }
        }
    }
    Ok(table)
}

/// Continuation multiple-choice accuracy with and without the learned prompt.
pub fn zero_shot(s: &mut Session) -> Result<ReportTable> {
    let z = s.cfg.zero_shot.clone().ok_or_else(|| Error::Config("config has no zero_shot".into()))?;
    let k = s.cfg.prompt.k;
    let split = s.cfg.eval_split;
    let mut table = ReportTable::default();
    for spec in &z.specs {
        let model = s.compressed(spec)?;
        let prompt = if spec.method != Method::None { Some(s.prompt(spec, k)?) } else { None };
        for corpus in s.cfg.eval_corpora.clone() {
            let tasks = continuation_tasks(
                s.corpus(&corpus)?.split(split),
                z.n_tasks,
                z.n_choices,
                z.context_len,
                z.choice_len,
                z.seed,
            )
            .map_err(|e| e.in_stage("zero-shot"))?;
            let mut variants: Vec<(Option<&SoftPrompt>, String)> = vec![(None, "none".into())];
            if let Some(p) = &prompt {
                variants.push((Some(p), learned_source(spec)));
            }
            for (p, source) in variants {
                let acc = mc_accuracy(&*model, p.and_then(SoftPrompt::as_input), &tasks)
                    .map_err(|e| e.in_stage("zero-shot"))?;
                let mut row = s.row("zero-shot", spec, p, &source, &corpus)?;
                row.accuracy = Some(acc.accuracy);
                table.push(row);
            }
        }
    }
    Ok(table)
}

/// Per-token generation latency for each prompt length (wall-clock, so not
/// reproducible byte for byte).
pub fn profile(s: &mut Session) -> Result<ReportTable> {
    let l = s.cfg.latency.clone().ok_or_else(|| Error::Config("config has no latency section".into()))?;
    let model = s.compressed(&l.spec)?;
    let corpus = s.cfg.train_corpus.clone();
    let prefix = s.corpus(&corpus)?.split(Split::Test).get(..l.prefix_len).map(<[_]>::to_vec);
    let prefix = prefix.ok_or_else(|| Error::Data("test split shorter than the latency prefix".into()))?;
    let profiles = profile_latency(&*model, &l.ks, &prefix, l.steps, l.repeats)
        .map_err(|e| e.in_stage("profile"))?;
    Ok(ReportTable {
        rows: profiles
            .into_iter()
            .map(|p| ReportRow {
                experiment_id: "latency".into(),
                corpus: corpus.clone(),
                compression: l.spec.label(),
                prompt_source: if p.k == 0 { "none".into() } else { "init".into() },
                k: p.k,
                ppl: None,
                nll: None,
                accuracy: None,
                latency_ms: Some(p.median_ms_per_token),
            })
            .collect(),
    })
}

/// Everything reproducible: pipeline, then the optional k sweep, transfer
/// grid and zero-shot sections.
pub fn full_report(s: &mut Session) -> Result<ReportTable> {
    let mut table = run_pipeline(s)?;
    if s.cfg.k_sweep.is_some() {
        table.extend(ablation_prompt_size(s)?);
    }
    if s.cfg.transfer.is_some() {
        table.extend(transfer_matrix(s)?);
    }
    if s.cfg.zero_shot.is_some() {
        table.extend(zero_shot(s)?);
    }
    Ok(table)
}
