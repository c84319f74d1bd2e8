#![allow(clippy::needless_range_loop)]

mod common;

use common::rng;
use cplm::data::{pack, synth_corpus, Corpus, Grammar, MarkovChain, Split, SynthSpec, TokenizerSpec};
use cplm::eval::perplexity;
use cplm::model::{init_model, train_base, BaseTrainConfig, ModelConfig};
use proptest::prelude::*;
use rand::Rng;

#[test]
fn markov_draw_matches_analytic_entropy_rate() {
    let p = vec![
        vec![0.7, 0.2, 0.1, 0.0],
        vec![0.1, 0.1, 0.4, 0.4],
        vec![0.25, 0.25, 0.25, 0.25],
        vec![0.5, 0.0, 0.0, 0.5],
    ];
    // stationary distribution by power iteration, then H = −Σ π_i P_ij ln P_ij
    let mut pi = vec![0.25; 4];
    for _ in 0..10_000 {
        let mut next = vec![0.0; 4];
        for i in 0..4 {
            for j in 0..4 {
                next[j] += pi[i] * p[i][j];
            }
        }
        pi = next;
    }
    let mut h = 0.0;
    for i in 0..4 {
        for j in 0..4 {
            if p[i][j] > 0.0 {
                h -= pi[i] * p[i][j] * f64::ln(p[i][j]);
            }
        }
    }
    let chain = MarkovChain::from_matrix(&p).unwrap();
    assert!((chain.entropy_rate() - h).abs() < 1e-9);
    let draw = chain.sample(1_000_000, 7);
    let empirical = draw
        .windows(2)
        .map(|w| -f64::ln(p[w[0] as usize][w[1] as usize]))
        .sum::<f64>()
        / (draw.len() - 1) as f64;
    assert!((empirical - h).abs() / h < 0.02, "empirical {empirical} vs analytic {h}");
}

#[test]
fn bpe_round_trips_substrings_of_its_corpus() {
    let text = Grammar::new(11).generate(20_000, 3);
    let bpe = TokenizerSpec::train_bpe(&text, 320).unwrap();
    assert_eq!(bpe.vocab_size(), 320);
    let mut r = rng(4);
    for _ in 0..1000 {
        let a = r.random_range(0..text.len());
        let b = r.random_range(a..=text.len().min(a + 200));
        let piece = &text[a..b];
        let ids = bpe.tokenize(piece);
        assert!(ids.iter().all(|&t| (t as usize) < 320));
        assert_eq!(bpe.detokenize(&ids).unwrap(), piece);
    }
    let ids = bpe.tokenize(&text[..2000]);
    assert!(ids.len() < 2000, "merges should shorten the text");
}

#[test]
fn byte_tokenizer_is_identity() {
    assert_eq!(TokenizerSpec::Byte.tokenize(b"ab"), vec![97, 98]);
    assert_eq!(TokenizerSpec::Byte.detokenize(&[97, 98]).unwrap(), b"ab");
    assert!(TokenizerSpec::Byte.tokenize(b"").is_empty());
    let all: Vec<u8> = (0..=255).collect();
    assert_eq!(TokenizerSpec::Byte.detokenize(&TokenizerSpec::Byte.tokenize(&all)).unwrap(), all);
}

#[test]
fn pack_arithmetic() {
    let tokens: Vec<u32> = (0..10).collect();
    let w = pack(&tokens, 4);
    assert_eq!(w.len(), 2);
    assert_eq!(w.concat(), &tokens[..8]);
    assert!(pack(&tokens[..3], 4).is_empty());
}

#[test]
fn alpha_model_prefers_alpha_over_beta() {
    let alpha = synth_corpus(&SynthSpec::named("alpha", 200_000).unwrap()).unwrap();
    let beta = synth_corpus(&SynthSpec::named("beta", 200_000).unwrap()).unwrap();
    let cfg = ModelConfig {
        vocab_size: 256,
        embed_dim: 32,
        n_layers: 2,
        n_heads: 2,
        ff_dim: 64,
        max_positions: 64,
        seed: 1,
    };
    let trained = train_base(
        &init_model(&cfg).unwrap(),
        &alpha,
        &BaseTrainConfig { steps: 400, seq_len: 64, seed: 2, ..Default::default() },
    )
    .unwrap()
    .weights;
    let model = cplm::compress::compress_model(&trained, &cplm::compress::CompressionSpec::none(), None).unwrap();
    let on_alpha = perplexity(&model, None, &alpha, Split::Test, 64).unwrap().ppl;
    let on_beta = perplexity(&model, None, &beta, Split::Test, 64).unwrap().ppl;
    assert!(on_beta > on_alpha, "alpha {on_alpha} beta {on_beta}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pack_conserves_tokens(len in 0usize..500, seq in 2usize..40) {
        let tokens: Vec<u32> = (0..len as u32).collect();
        let w = pack(&tokens, seq);
        let covered: usize = w.iter().map(|x| x.len()).sum();
        prop_assert_eq!(covered + len % seq, len);
        prop_assert_eq!(w.concat(), tokens[..covered].to_vec());
    }

    #[test]
    fn splits_are_disjoint_and_ordered(len in 1usize..2000, train in 0.0f64..1.0, val in 0.0f64..1.0) {
        prop_assume!(train + val <= 1.0);
        let c = Corpus::with_split("p", vec![1; len], &TokenizerSpec::Byte, (train, val)).unwrap();
        prop_assert_eq!(c.train.start, 0);
        prop_assert_eq!(c.train.end, c.validation.start);
        prop_assert_eq!(c.validation.end, c.test.start);
        prop_assert_eq!(c.test.end, len);
    }

    #[test]
    fn byte_round_trip(bytes in proptest::collection::vec(any::<u8>(), 0..300)) {
        let ids = TokenizerSpec::Byte.tokenize(&bytes);
        prop_assert_eq!(TokenizerSpec::Byte.detokenize(&ids).unwrap(), bytes);
    }
}
