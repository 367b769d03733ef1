//! Hashing tokenizer: lowercase, split on non-alphanumeric runs, FNV-1a of
//! each word modulo the text vocabulary. Collisions are accepted; the ids it
//! emits never collide with reserved ids (memory slots, separator, padding),
//! which live at the top of the vocabulary.

use crate::rng::fnv1a64;

#[derive(Debug, Clone)]
pub struct Tokenizer {
    text_vocab: usize,
}

impl Tokenizer {
    /// `text_vocab` is the number of ids available to hashed words, i.e. the
    /// model vocabulary minus the reserved ids.
    pub fn new(text_vocab: usize) -> Self {
        assert!(text_vocab > 0, "empty text vocabulary");
        Tokenizer { text_vocab }
    }

    pub fn text_vocab(&self) -> usize {
        self.text_vocab
    }

    pub fn encode(&self, text: &str) -> Vec<u32> {
        text.split(|c: char| !c.is_alphanumeric())
            .filter(|w| !w.is_empty())
            .map(|w| {
                let lower = w.to_lowercase();
                (fnv1a64(lower.as_bytes()) % self.text_vocab as u64) as u32
            })
            .collect()
    }
}
