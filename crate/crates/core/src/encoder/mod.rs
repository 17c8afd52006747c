//! Tokenization, context windows and the pooled text encoder.

mod text;
mod transformer;
mod vocab;

pub use text::{build_context, tokenize, tokenize_with_limit, words, Role, MAX_ACTION_TOKENS, MAX_CONTEXT_TOKENS};
pub use transformer::{encode, encode_text, init_encoder, EncodedText, EncoderConfig};
pub use vocab::{Vocabulary, CLS, CLS_ID, PAD, PAD_ID, SEP, UNK, UNK_ID};
