use std::collections::HashMap;

use super::{encode_with, ModelConfig, Student, Teacher};
use crate::encoder::{EncodedText, Role, Vocabulary};
use crate::error::Result;
use crate::numcore::ParamSet;

/// Memoized value-level encodings for one frozen model.
pub struct EncodingCache<'m> {
    params: &'m ParamSet,
    vocab: &'m Vocabulary,
    config: &'m ModelConfig,
    seen: HashMap<(Role, String), EncodedText>,
}

impl<'m> EncodingCache<'m> {
    pub fn new(params: &'m ParamSet, vocab: &'m Vocabulary, config: &'m ModelConfig) -> Self {
        Self {
            params,
            vocab,
            config,
            seen: HashMap::new(),
        }
    }

    pub fn student(s: &'m Student) -> Self {
        Self::new(&s.params, &s.vocab, &s.config)
    }

    pub fn teacher(t: &'m Teacher) -> Self {
        Self::new(&t.params, &t.vocab, &t.config)
    }

    pub fn encode(&mut self, text: &str, role: Role) -> Result<EncodedText> {
        if let Some(e) = self.seen.get(&(role, text.to_string())) {
            return Ok(e.clone());
        }
        let e = encode_with(self.params, self.vocab, self.config, text, role)?;
        self.seen.insert((role, text.to_string()), e.clone());
        Ok(e)
    }

    pub fn encode_all(&mut self, texts: &[String], role: Role) -> Result<Vec<EncodedText>> {
        texts.iter().map(|t| self.encode(t, role)).collect()
    }
}
