//! Corpus ingestion, vocabularies, pretrained embeddings and deterministic
//! batching for sentence-pair tasks.

mod batch;
mod corpus;
mod glove;
mod tokenize;
mod vocab;

pub use batch::{exact_match_flags, make_batches, Batch};
pub use corpus::{load_pairs, DataFormat, LabelMap, LoadReport, SentencePair};
pub use glove::{load_glove, EmbeddingTable};
pub use tokenize::tokenize;
pub use vocab::{Vocab, PAD_ID, UNK_ID};
