use std::collections::HashMap;
use std::path::Path;
use std::sync::OnceLock;

use super::ChemError;
use crate::util::sha256_hex;

pub const PAD: &str = "<pad>";
pub const BOS: &str = "<bos>";
pub const EOS: &str = "<eos>";

const DEFAULT_VOCAB_TXT: &str = include_str!("../../data/vocab.txt");

/// Token inventory. Ids are line numbers of the vocabulary file.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    pad_id: usize,
    bos_id: usize,
    eos_id: usize,
    /// Vocabulary ids the decoder may emit (everything except PAD and BOS),
    /// in id order. Position in this list is the decoder output index.
    emittable: Vec<usize>,
    output_of: Vec<Option<usize>>,
}

impl Vocabulary {
    pub fn from_tokens<I, S>(tokens: I) -> Result<Self, ChemError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let tokens: Vec<String> = tokens.into_iter().map(Into::into).collect();
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() || t.chars().any(char::is_whitespace) {
                return Err(ChemError::Vocabulary(format!("token {i} is empty or contains whitespace")));
            }
            if index.insert(t.clone(), i).is_some() {
                return Err(ChemError::Vocabulary(format!("duplicate token `{t}`")));
            }
        }
        let find = |name: &str| {
            index
                .get(name)
                .copied()
                .ok_or_else(|| ChemError::Vocabulary(format!("missing reserved token `{name}`")))
        };
        let (pad_id, bos_id, eos_id) = (find(PAD)?, find(BOS)?, find(EOS)?);
        let emittable: Vec<usize> = (0..tokens.len()).filter(|&i| i != pad_id && i != bos_id).collect();
        let mut output_of = vec![None; tokens.len()];
        for (k, &id) in emittable.iter().enumerate() {
            output_of[id] = Some(k);
        }
        Ok(Self {
            tokens,
            index,
            pad_id,
            bos_id,
            eos_id,
            emittable,
            output_of,
        })
    }

    /// One token per line; line number is the id.
    pub fn parse(text: &str) -> Result<Self, ChemError> {
        Self::from_tokens(text.lines().map(|l| l.trim_end_matches('\r')).filter(|l| !l.is_empty()))
    }

    pub fn load(path: &Path) -> Result<Self, ChemError> {
        let text = std::fs::read_to_string(path).map_err(|e| ChemError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// The shipped 40-token SMILES vocabulary.
    pub fn builtin() -> &'static Vocabulary {
        static V: OnceLock<Vocabulary> = OnceLock::new();
        V.get_or_init(|| Vocabulary::parse(DEFAULT_VOCAB_TXT).expect("shipped vocabulary is well-formed"))
    }

    pub fn to_file_text(&self) -> String {
        let mut s = self.tokens.join("\n");
        s.push('\n');
        s
    }

    /// SHA-256 over the vocabulary file text; recorded in checkpoints.
    pub fn hash(&self) -> String {
        sha256_hex(self.to_file_text().as_bytes())
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn pad_id(&self) -> usize {
        self.pad_id
    }

    pub fn bos_id(&self) -> usize {
        self.bos_id
    }

    pub fn eos_id(&self) -> usize {
        self.eos_id
    }

    pub fn is_special(&self, id: usize) -> bool {
        id == self.pad_id || id == self.bos_id || id == self.eos_id
    }

    /// Size of the decoder's output distribution.
    pub fn output_size(&self) -> usize {
        self.emittable.len()
    }

    pub fn output_index(&self, id: usize) -> Option<usize> {
        self.output_of.get(id).copied().flatten()
    }

    pub fn id_of_output(&self, k: usize) -> usize {
        self.emittable[k]
    }
}

/// Integer-encoded SMILES framed by BOS and (normally) EOS.
///
/// A sequence produced by decoding may hit the length cap before emitting
/// EOS; such a sequence is *truncated* and lacks the trailing EOS.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TokenSequence {
    ids: Vec<usize>,
    max_len: usize,
}

impl TokenSequence {
    pub const DEFAULT_MAX_LEN: usize = 100;

    /// Validates framing against `vocab`.
    pub fn new(ids: Vec<usize>, max_len: usize, vocab: &Vocabulary) -> Result<Self, ChemError> {
        let bad = |msg: &str| Err(ChemError::Sequence(msg.to_string()));
        if ids.first() != Some(&vocab.bos_id()) {
            return bad("sequence must start with BOS");
        }
        let terminated = ids.len() >= 2 && ids.last() == Some(&vocab.eos_id());
        let body_end = if terminated { ids.len() - 1 } else { ids.len() };
        let body = &ids[1..body_end];
        if body.len() > max_len {
            return bad("sequence exceeds max_len");
        }
        if body.iter().any(|&i| i >= vocab.len() || vocab.is_special(i)) {
            return bad("reserved or out-of-range id inside sequence body");
        }
        Ok(Self { ids, max_len })
    }

    pub(crate) fn from_raw(ids: Vec<usize>, max_len: usize) -> Self {
        Self { ids, max_len }
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn is_terminated(&self, vocab: &Vocabulary) -> bool {
        self.ids.len() >= 2 && self.ids.last() == Some(&vocab.eos_id())
    }

    /// Token ids strictly between BOS and EOS.
    pub fn body(&self, vocab: &Vocabulary) -> &[usize] {
        let end = if self.is_terminated(vocab) { self.ids.len() - 1 } else { self.ids.len() };
        &self.ids[1.min(end)..end]
    }

    /// Number of next-token predictions scored under teacher forcing.
    pub fn n_predictions(&self) -> usize {
        self.ids.len().saturating_sub(1)
    }
}

/// Tokenizes with the default 100-character cap.
pub fn tokenize(smiles: &str, vocab: &Vocabulary) -> Result<TokenSequence, ChemError> {
    tokenize_with_max(smiles, vocab, TokenSequence::DEFAULT_MAX_LEN)
}

/// Maximal-munch tokenization: bracket atoms and `%nn` ring labels are single
/// tokens, two-letter tokens (`Cl`, `Br`) win over their one-letter prefixes.
pub fn tokenize_with_max(smiles: &str, vocab: &Vocabulary, max_len: usize) -> Result<TokenSequence, ChemError> {
    if smiles.is_empty() {
        return Err(ChemError::EmptyInput);
    }
    let n_chars = smiles.chars().count();
    if n_chars > max_len {
        return Err(ChemError::TooLong { len: n_chars, max: max_len });
    }
    let mut ids = vec![vocab.bos_id()];
    for (pos, tok) in split_tokens(smiles, vocab) {
        match vocab.id(tok) {
            Some(id) if !vocab.is_special(id) => ids.push(id),
            _ => {
                return Err(ChemError::UnknownToken {
                    token: tok.to_string(),
                    position: pos,
                })
            }
        }
    }
    ids.push(vocab.eos_id());
    Ok(TokenSequence { ids, max_len })
}

fn split_tokens<'a>(s: &'a str, vocab: &Vocabulary) -> Vec<(usize, &'a str)> {
    let bytes = s.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let rest = &s[i..];
        let len = if bytes[i] == b'[' {
            rest.find(']').map_or(rest.len(), |j| j + 1)
        } else if bytes[i] == b'%' && rest.len() >= 3 && rest.is_char_boundary(3) {
            3
        } else if rest.len() >= 2 && rest.is_char_boundary(2) && vocab.id(&rest[..2]).is_some() {
            2
        } else {
            rest.chars().next().map_or(1, char::len_utf8)
        };
        out.push((i, &rest[..len]));
        i += len;
    }
    out
}

/// Inverse of [`tokenize`]; fails on reserved ids inside the body.
pub fn detokenize(seq: &TokenSequence, vocab: &Vocabulary) -> Result<String, ChemError> {
    let mut s = String::new();
    for &id in seq.body(vocab) {
        if vocab.is_special(id) {
            return Err(ChemError::Sequence("reserved id inside sequence body".into()));
        }
        s.push_str(
            vocab
                .token(id)
                .ok_or_else(|| ChemError::Sequence(format!("id {id} out of range")))?,
        );
    }
    Ok(s)
}
