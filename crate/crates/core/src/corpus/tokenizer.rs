// SPDX-License-Identifier: MIT OR Apache-2.0

//! Closed-vocabulary word-level tokenizer.
//!
//! Text is split on whitespace; inside each chunk, runs of alphanumerics
//! (plus `'` and `-`) form word tokens and every other character is a
//! single punctuation token. Detokenizing joins words with one space and
//! attaches punctuation to the preceding token, so text in that canonical
//! spacing round-trips exactly.

use std::collections::{BTreeSet, HashMap};

use crate::model::special;

const SPECIAL_NAMES: [&str; special::COUNT] = ["<pad>", "<bos>", "<eos>", "<unk>"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tokenizer {
    id_to_token: Vec<String>,
    token_to_id: HashMap<String, u32>,
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '\'' || c == '-'
}

/// Splits `text` into word and punctuation pieces.
pub fn segment(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        let mut start = None;
        for (i, c) in chunk.char_indices() {
            if is_word_char(c) {
                start.get_or_insert(i);
            } else {
                if let Some(s) = start.take() {
                    out.push(&chunk[s..i]);
                }
                out.push(&chunk[i..i + c.len_utf8()]);
            }
        }
        if let Some(s) = start {
            out.push(&chunk[s..]);
        }
    }
    out
}

/// True when a piece contains no word characters.
pub fn is_punctuation(piece: &str) -> bool {
    !piece.is_empty() && !piece.chars().any(is_word_char)
}

impl Tokenizer {
    /// Builds a vocabulary from every piece found in `texts`, sorted so the
    /// id assignment does not depend on input order.
    pub fn from_texts<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let pieces: BTreeSet<&str> = texts.into_iter().flat_map(segment).collect();
        Self::from_vocab(pieces.into_iter().map(str::to_string))
    }

    /// Specials are prepended; duplicates and special names are skipped.
    pub fn from_vocab(tokens: impl IntoIterator<Item = String>) -> Self {
        let mut id_to_token: Vec<String> = SPECIAL_NAMES.iter().map(|s| s.to_string()).collect();
        let mut token_to_id: HashMap<String, u32> = id_to_token
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        for token in tokens {
            if !token_to_id.contains_key(&token) {
                token_to_id.insert(token.clone(), id_to_token.len() as u32);
                id_to_token.push(token);
            }
        }
        Self {
            id_to_token,
            token_to_id,
        }
    }

    /// Restores a tokenizer from a full id-ordered list (as embedded in checkpoints).
    pub fn from_id_list(list: Vec<String>) -> crate::Result<Self> {
        if list.len() < special::COUNT || list[..special::COUNT] != SPECIAL_NAMES {
            return Err(crate::Error::Format("vocabulary does not start with the special tokens".into()));
        }
        let token_to_id: HashMap<String, u32> = list
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        if token_to_id.len() != list.len() {
            return Err(crate::Error::Format("vocabulary has duplicate entries".into()));
        }
        Ok(Self {
            id_to_token: list,
            token_to_id,
        })
    }

    pub fn vocab(&self) -> &[String] {
        &self.id_to_token
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.token_to_id
            .get(token)
            .copied()
            .filter(|&id| !special::is_special(id))
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.id_to_token.get(id as usize).map(String::as_str)
    }

    /// Maps every piece to its id; unknown pieces become UNK.
    pub fn tokenize(&self, text: &str) -> Vec<u32> {
        segment(text)
            .into_iter()
            .map(|piece| self.id(piece).unwrap_or(special::UNK))
            .collect()
    }

    /// Inverse of [`Tokenizer::tokenize`] for canonical text. PAD, BOS and EOS
    /// are dropped; UNK renders as `<unk>`.
    pub fn detokenize(&self, ids: &[u32]) -> String {
        let mut out = String::new();
        for &id in ids {
            if matches!(id, special::PAD | special::BOS | special::EOS) {
                continue;
            }
            let piece = self.token(id).unwrap_or(SPECIAL_NAMES[special::UNK as usize]);
            if !out.is_empty() && !is_punctuation(piece) {
                out.push(' ');
            }
            out.push_str(piece);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn segments_words_and_punctuation() {
        assert_eq!(segment("The weather is great!"), ["The", "weather", "is", "great", "!"]);
        assert_eq!(segment("  don't  stop, ok?"), ["don't", "stop", ",", "ok", "?"]);
        assert!(segment("").is_empty());
    }

    #[test]
    fn empty_text_is_empty_sequence() {
        let tok = Tokenizer::from_texts(["great day"]);
        assert!(tok.tokenize("").is_empty());
    }

    #[test]
    fn repetition_maps_to_repeated_ids() {
        let tok = Tokenizer::from_texts(["great day"]);
        let ids = tok.tokenize("great great");
        assert_eq!(ids.len(), 2);
        assert_eq!(ids[0], ids[1]);
        assert_eq!(Some(ids[0]), tok.id("great"));
    }

    #[test]
    fn unknown_words_map_to_unk_and_specials_never_appear() {
        let tok = Tokenizer::from_texts(["great day"]);
        assert_eq!(tok.tokenize("awful day"), vec![special::UNK, tok.id("day").unwrap()]);
        let sneaky = tok.tokenize("<bos> <eos>");
        assert!(sneaky.iter().all(|&id| id == special::UNK));
    }

    #[test]
    fn id_list_roundtrip() {
        let tok = Tokenizer::from_texts(["b a c", "a !"]);
        let again = Tokenizer::from_id_list(tok.vocab().to_vec()).unwrap();
        assert_eq!(tok, again);
        assert!(Tokenizer::from_id_list(vec!["x".into()]).is_err());
    }

    proptest! {
        #[test]
        fn canonical_text_roundtrips(words in proptest::collection::vec(
            proptest::sample::select(vec!["good", "bad", "movie", "it's", "well-made", ".", "!", ","]), 0..20)) {
            let mut text = String::new();
            for w in &words {
                if !text.is_empty() && !is_punctuation(w) {
                    text.push(' ');
                }
                text.push_str(w);
            }
            let tok = Tokenizer::from_texts(["good bad movie it's well-made . ! ,"]);
            prop_assert_eq!(tok.detokenize(&tok.tokenize(&text)), text);
        }
    }
}
