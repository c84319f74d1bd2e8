//! Tokenizers, corpora, fixed-length packing and synthetic corpus generators.

pub mod corpus;
pub mod synth;
pub mod tokenizer;

pub use corpus::{pack, Corpus, Split, DEFAULT_SPLIT};
pub use synth::{synth_corpus, Generator, Grammar, MarkovChain, SynthSpec};
pub use tokenizer::TokenizerSpec;
