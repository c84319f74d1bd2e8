//! Deterministic synthetic corpora.
//!
//! Two generator families: an order-`n` Markov chain over a small alphabet
//! (analytic entropy rate available) and a template grammar over a fixed
//! made-up lexicon. The named corpora "alpha" and "beta" share the lexicon
//! but draw their sentence templates, word frequencies and subject/verb
//! affinities from independent rule seeds.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::corpus::Corpus;
use super::tokenizer::TokenizerSpec;
use crate::error::{Error, Result};
use crate::TokenId;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Generator {
    Markov { order: usize, transition_seed: u64, alphabet: usize },
    Grammar { rule_seed: u64 },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub name: String,
    pub generator: Generator,
    pub length: usize,
    pub seed: u64,
}

impl SynthSpec {
    /// The shipped named corpora. `alpha` and `beta` are the pair used for
    /// cross-dataset experiments.
    pub fn named(name: &str, length: usize) -> Result<SynthSpec> {
        let (rule_seed, seed) = match name {
            "alpha" => (11, 101),
            "beta" => (29, 202),
            other => return Err(Error::Config(format!("unknown named corpus `{other}`"))),
        };
        Ok(SynthSpec {
            name: name.to_string(),
            generator: Generator::Grammar { rule_seed },
            length,
            seed,
        })
    }
}

/// Generates the corpus described by `spec`, tokenized with the byte tokenizer.
pub fn synth_corpus(spec: &SynthSpec) -> Result<Corpus> {
    if spec.length < 3 {
        return Err(Error::Config("synthetic corpus needs at least 3 tokens".into()));
    }
    let tokens = match &spec.generator {
        Generator::Markov { order, transition_seed, alphabet } => {
            MarkovChain::random(*order, *alphabet, *transition_seed)?.sample(spec.length, spec.seed)
        }
        Generator::Grammar { rule_seed } => {
            let text = Grammar::new(*rule_seed).generate(spec.length, spec.seed);
            TokenizerSpec::Byte.tokenize(&text)
        }
    };
    Corpus::from_tokens(&spec.name, tokens, &TokenizerSpec::Byte)
}

/// Markov chain whose state is the last `order` symbols.
#[derive(Clone, Debug)]
pub struct MarkovChain {
    order: usize,
    alphabet: usize,
    /// Row-major `contexts × alphabet` transition probabilities.
    probs: Vec<f64>,
}

impl MarkovChain {
    /// Peaked random transitions: weights `exp(2·z)`, `z ~ N(0,1)`.
    pub fn random(order: usize, alphabet: usize, transition_seed: u64) -> Result<MarkovChain> {
        if order == 0 || !(2..=256).contains(&alphabet) {
            return Err(Error::Config("markov needs order ≥ 1 and 2 ≤ alphabet ≤ 256".into()));
        }
        let contexts = alphabet
            .checked_pow(order as u32)
            .filter(|&c| c <= 1 << 20)
            .ok_or_else(|| Error::Config("markov context space too large".into()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(transition_seed);
        let mut probs = Vec::with_capacity(contexts * alphabet);
        for _ in 0..contexts {
            let w: Vec<f64> = (0..alphabet)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    (2.0 * z).exp()
                })
                .collect();
            let s: f64 = w.iter().sum();
            probs.extend(w.iter().map(|x| x / s));
        }
        Ok(MarkovChain { order, alphabet, probs })
    }

    /// Order-1 chain from an explicit row-stochastic matrix.
    pub fn from_matrix(matrix: &[Vec<f64>]) -> Result<MarkovChain> {
        let a = matrix.len();
        if a < 2 || matrix.iter().any(|r| r.len() != a) {
            return Err(Error::Config("transition matrix must be square, size ≥ 2".into()));
        }
        if matrix.iter().any(|r| (r.iter().sum::<f64>() - 1.0).abs() > 1e-9) {
            return Err(Error::Config("transition rows must sum to 1".into()));
        }
        Ok(MarkovChain { order: 1, alphabet: a, probs: matrix.concat() })
    }

    fn contexts(&self) -> usize {
        self.probs.len() / self.alphabet
    }

    pub fn prob(&self, context: usize, next: usize) -> f64 {
        self.probs[context * self.alphabet + next]
    }

    fn next_context(&self, context: usize, symbol: usize) -> usize {
        (context * self.alphabet + symbol) % self.contexts()
    }

    pub fn sample(&self, length: usize, seed: u64) -> Vec<TokenId> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ctx = rng.random_range(0..self.contexts());
        let mut out = Vec::with_capacity(length);
        for _ in 0..length {
            let u: f64 = rng.random();
            let row = &self.probs[ctx * self.alphabet..(ctx + 1) * self.alphabet];
            let mut acc = 0.0;
            let mut sym = self.alphabet - 1;
            for (j, p) in row.iter().enumerate() {
                acc += p;
                if u < acc {
                    sym = j;
                    break;
                }
            }
            out.push(sym as TokenId);
            ctx = self.next_context(ctx, sym);
        }
        out
    }

    /// Mean `-ln P(x_t | context)` of `tokens` under this chain, skipping the
    /// first `order` tokens.
    pub fn mean_nll(&self, tokens: &[TokenId]) -> f64 {
        let mut ctx = 0usize;
        let mut total = 0.0;
        let mut count = 0usize;
        for (i, &t) in tokens.iter().enumerate() {
            if i >= self.order {
                total -= self.prob(ctx, t as usize).ln();
                count += 1;
            }
            ctx = self.next_context(ctx, t as usize);
        }
        total / count.max(1) as f64
    }

    /// Stationary distribution over contexts by power iteration.
    pub fn stationary(&self) -> Vec<f64> {
        let n = self.contexts();
        let mut pi = vec![1.0 / n as f64; n];
        for _ in 0..2000 {
            let mut next = vec![0.0; n];
            for (c, &mass) in pi.iter().enumerate() {
                for j in 0..self.alphabet {
                    next[self.next_context(c, j)] += mass * self.prob(c, j);
                }
            }
            let delta: f64 = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
            pi = next;
            if delta < 1e-14 {
                break;
            }
        }
        pi
    }

    /// Entropy rate in nats per symbol.
    pub fn entropy_rate(&self) -> f64 {
        let pi = self.stationary();
        pi.iter()
            .enumerate()
            .map(|(c, &m)| {
                let h: f64 = (0..self.alphabet)
                    .map(|j| self.prob(c, j))
                    .filter(|&p| p > 0.0)
                    .map(|p| -p * p.ln())
                    .sum();
                m * h
            })
            .sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Class {
    Det,
    Noun,
    Verb,
    Adj,
    Adv,
    Prep,
    Conj,
}

const CLASSES: [(Class, usize, (usize, usize)); 7] = [
    (Class::Det, 6, (1, 1)),
    (Class::Noun, 48, (2, 3)),
    (Class::Verb, 32, (2, 2)),
    (Class::Adj, 24, (2, 3)),
    (Class::Adv, 12, (2, 3)),
    (Class::Prep, 10, (1, 2)),
    (Class::Conj, 5, (1, 1)),
];

const LEXICON_SEED: u64 = 0x5eed_1e81;
const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
const VOWELS: &[u8] = b"aeiou";

/// Template grammar over a shared lexicon.
#[derive(Clone, Debug)]
pub struct Grammar {
    lexicon: Vec<Vec<Vec<u8>>>,
    /// Per class, a Zipf-weighted order over the class's words.
    word_weights: Vec<Vec<f64>>,
    templates: Vec<Vec<Class>>,
    template_weights: Vec<f64>,
    /// For each noun, the verbs it prefers as a subject.
    affinity: Vec<Vec<usize>>,
}

fn class_index(c: Class) -> usize {
    CLASSES.iter().position(|(k, _, _)| *k == c).unwrap_or(0)
}

fn zipf_weights(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    let mut w = vec![0.0; n];
    for (rank, &idx) in order.iter().enumerate() {
        w[idx] = 1.0 / (rank as f64 + 1.0);
    }
    w
}

fn pick(weights: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if u < w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

impl Grammar {
    pub fn new(rule_seed: u64) -> Grammar {
        let mut lex_rng = ChaCha8Rng::seed_from_u64(LEXICON_SEED);
        let mut seen = BTreeSet::new();
        let mut lexicon = Vec::new();
        for &(_, count, (lo, hi)) in CLASSES.iter() {
            let mut words = Vec::with_capacity(count);
            while words.len() < count {
                let syllables = lex_rng.random_range(lo..=hi);
                let mut w = Vec::new();
                for _ in 0..syllables {
                    w.push(CONSONANTS[lex_rng.random_range(0..CONSONANTS.len())]);
                    w.push(VOWELS[lex_rng.random_range(0..VOWELS.len())]);
                    if lex_rng.random_bool(0.3) {
                        w.push(CONSONANTS[lex_rng.random_range(0..CONSONANTS.len())]);
                    }
                }
                if seen.insert(w.clone()) {
                    words.push(w);
                }
            }
            lexicon.push(words);
        }

        let mut rng = ChaCha8Rng::seed_from_u64(rule_seed);
        let word_weights = CLASSES.iter().map(|&(_, n, _)| zipf_weights(n, &mut rng)).collect();
        let n_templates = 12;
        let templates: Vec<Vec<Class>> =
            (0..n_templates).map(|_| Self::sample_template(&mut rng)).collect();
        let template_weights = zipf_weights(n_templates, &mut rng);
        let n_verbs = CLASSES[class_index(Class::Verb)].1;
        let affinity = (0..CLASSES[class_index(Class::Noun)].1)
            .map(|_| (0..3).map(|_| rng.random_range(0..n_verbs)).collect())
            .collect();
        Grammar { lexicon, word_weights, templates, template_weights, affinity }
    }

    fn sample_template(rng: &mut ChaCha8Rng) -> Vec<Class> {
        let mut t = Vec::new();
        let clauses = if rng.random_bool(0.3) { 2 } else { 1 };
        for c in 0..clauses {
            if c > 0 {
                t.push(Class::Conj);
            }
            Self::noun_phrase(rng, &mut t);
            t.push(Class::Verb);
            match rng.random_range(0..4) {
                0 => t.push(Class::Adv),
                1 => {
                    Self::noun_phrase(rng, &mut t);
                    t.push(Class::Prep);
                    Self::noun_phrase(rng, &mut t);
                }
                _ => Self::noun_phrase(rng, &mut t),
            }
        }
        t
    }

    fn noun_phrase(rng: &mut ChaCha8Rng, t: &mut Vec<Class>) {
        t.push(Class::Det);
        for _ in 0..rng.random_range(0..3) {
            t.push(Class::Adj);
        }
        t.push(Class::Noun);
    }

    /// Exactly `length` bytes of text.
    pub fn generate(&self, length: usize, seed: u64) -> Vec<u8> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(length + 128);
        let noun = class_index(Class::Noun);
        let verb = class_index(Class::Verb);
        while out.len() < length {
            let template = &self.templates[pick(&self.template_weights, &mut rng)];
            let mut subject: Option<usize> = None;
            let mut first = true;
            for (pos, &class) in template.iter().enumerate() {
                let ci = class_index(class);
                let idx = match (class, subject) {
                    (Class::Verb, Some(s)) if rng.random_bool(0.75) => {
                        let prefs = &self.affinity[s];
                        prefs[rng.random_range(0..prefs.len())]
                    }
                    _ => pick(&self.word_weights[ci], &mut rng),
                };
                if ci == noun && subject.is_none() {
                    subject = Some(idx);
                }
                if ci == verb {
                    subject = None;
                }
                if class == Class::Conj {
                    subject = None;
                }
                if pos > 0 {
                    out.push(b' ');
                }
                let word = &self.lexicon[ci][idx];
                if first {
                    out.push(word[0].to_ascii_uppercase());
                    out.extend_from_slice(&word[1..]);
                    first = false;
                } else {
                    out.extend_from_slice(word);
                }
            }
            out.push(b'.');
            out.push(if rng.random_bool(0.2) { b'\n' } else { b' ' });
        }
        out.truncate(length);
        out
    }
}
