//! Synthetic corpora and tokenizers.
//!
//! Prints the entropy rate of a random Markov source next to the empirical
//! NLL of a sample from it, a few lines of the two grammar corpora, and how
//! much a small BPE vocabulary shortens grammar text.

use cplm::data::{synth_corpus, Grammar, MarkovChain, Split, SynthSpec, TokenizerSpec};

fn main() -> cplm::Result<()> {
    let chain = MarkovChain::random(1, 16, 7)?;
    let sample = chain.sample(200_000, 1);
    println!("markov source: entropy rate {:.4} nats, sample NLL {:.4}", chain.entropy_rate(), chain.mean_nll(&sample));

    for name in ["alpha", "beta"] {
        let corpus = synth_corpus(&SynthSpec::named(name, 50_000)?)?;
        let bytes = TokenizerSpec::Byte.detokenize(&corpus.split(Split::Train)[..160])?;
        println!(
            "{name}: {} train / {} validation / {} test tokens",
            corpus.split(Split::Train).len(),
            corpus.split(Split::Validation).len(),
            corpus.split(Split::Test).len()
        );
        println!("  {}", String::from_utf8_lossy(&bytes).replace('\n', " "));
    }

    let text = Grammar::new(11).generate(40_000, 2);
    let bpe = TokenizerSpec::train_bpe(&text, 384)?;
    let ids = bpe.tokenize(&text);
    assert_eq!(bpe.detokenize(&ids)?, text);
    println!("bpe (vocab {}): {} bytes → {} tokens", bpe.vocab_size(), text.len(), ids.len());
    Ok(())
}
