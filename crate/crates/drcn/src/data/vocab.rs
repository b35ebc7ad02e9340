//! Token and character vocabularies with reserved PAD/UNK ids.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{DrcnError, Result};

use super::SentencePair;

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;

pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

/// Bijective token↔id map over non-special entries, ids assigned in first
/// occurrence order over the training split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    token_to_id: BTreeMap<String, u32>,
    id_to_token: Vec<String>,
}

impl Vocab {
    fn with_specials() -> Vocab {
        let mut v = Vocab { token_to_id: BTreeMap::new(), id_to_token: Vec::new() };
        v.push(PAD_TOKEN);
        v.push(UNK_TOKEN);
        v
    }

    fn push(&mut self, token: &str) -> u32 {
        if let Some(&id) = self.token_to_id.get(token) {
            return id;
        }
        let id = self.id_to_token.len() as u32;
        self.token_to_id.insert(token.to_string(), id);
        self.id_to_token.push(token.to_string());
        id
    }

    /// Word vocabulary from the training pairs only; dev/test OOV maps to UNK.
    pub fn build_words(pairs: &[SentencePair]) -> Vocab {
        let mut v = Vocab::with_specials();
        for p in pairs {
            for tok in p.premise.iter().chain(&p.hypothesis) {
                v.push(tok);
            }
        }
        v
    }

    /// Character vocabulary over every character of every training token.
    pub fn build_chars(pairs: &[SentencePair]) -> Vocab {
        let mut v = Vocab::with_specials();
        let mut buf = [0u8; 4];
        for p in pairs {
            for tok in p.premise.iter().chain(&p.hypothesis) {
                for c in tok.chars() {
                    v.push(c.encode_utf8(&mut buf));
                }
            }
        }
        v
    }

    pub fn id(&self, token: &str) -> u32 {
        self.token_to_id.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn char_id(&self, c: char) -> u32 {
        let mut buf = [0u8; 4];
        self.id(c.encode_utf8(&mut buf))
    }

    pub fn token(&self, id: u32) -> &str {
        &self.id_to_token[id as usize]
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.is_empty()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.token_to_id.contains_key(token)
    }

    /// UTF-8 `token<TAB>id` lines in id order.
    pub fn dump(&self, path: &Path) -> Result<()> {
        let mut f =
            File::create(path).map_err(|e| DrcnError::io(path.display().to_string(), e))?;
        for (id, tok) in self.id_to_token.iter().enumerate() {
            writeln!(f, "{tok}\t{id}").map_err(|e| DrcnError::io(path.display().to_string(), e))?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Vocab> {
        let f = File::open(path).map_err(|e| DrcnError::io(path.display().to_string(), e))?;
        let mut v = Vocab { token_to_id: BTreeMap::new(), id_to_token: Vec::new() };
        for (i, line) in BufReader::new(f).lines().enumerate() {
            let line = line.map_err(|e| DrcnError::io(path.display().to_string(), e))?;
            let (tok, id) = line
                .rsplit_once('\t')
                .ok_or_else(|| DrcnError::Format(format!("vocab line {i} missing tab")))?;
            let id: u32 = id
                .parse()
                .map_err(|_| DrcnError::Format(format!("vocab line {i}: bad id {id:?}")))?;
            if id as usize != v.id_to_token.len() {
                return Err(DrcnError::Format(format!(
                    "vocab ids out of order at line {i}: got {id}"
                )));
            }
            v.token_to_id.insert(tok.to_string(), id);
            v.id_to_token.push(tok.to_string());
        }
        if v.len() < 2 || v.id_to_token[0] != PAD_TOKEN || v.id_to_token[1] != UNK_TOKEN {
            return Err(DrcnError::Format("vocab file missing PAD/UNK header rows".into()));
        }
        Ok(v)
    }
}
