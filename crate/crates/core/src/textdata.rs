//! Character corpora and their windowed training views.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::rng::substream;
use crate::{Error, Result};

/// Characters used by [`gen_random_letters`].
pub const LETTERS: &str = "abcdefghijklmnopqrstuvwxyz";

/// Sorted character set with its inverse index.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    chars: Vec<char>,
    index: BTreeMap<char, usize>,
}

impl Vocab {
    /// Distinct characters of `chars`, ordered by code point.
    pub fn from_chars(chars: impl IntoIterator<Item = char>) -> Self {
        let index: BTreeMap<char, usize> = chars.into_iter().map(|c| (c, 0)).collect();
        let chars: Vec<char> = index.keys().copied().collect();
        let index = chars.iter().enumerate().map(|(i, &c)| (c, i)).collect();
        Self { chars, index }
    }

    pub fn len(&self) -> usize {
        self.chars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    pub fn index_of(&self, c: char) -> Option<usize> {
        self.index.get(&c).copied()
    }

    pub fn char_at(&self, i: usize) -> Option<char> {
        self.chars.get(i).copied()
    }

    pub fn as_string(&self) -> String {
        self.chars.iter().collect()
    }
}

/// A character stream encoded against its vocabulary.
#[derive(Clone, Debug, PartialEq)]
pub struct CharDataset {
    text: String,
    vocab: Vocab,
    indices: Vec<usize>,
    split: f64,
}

/// One truncation segment: `targets[i]` is the character after `inputs[i]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Segment<'a> {
    pub inputs: &'a [usize],
    pub targets: &'a [usize],
}

impl CharDataset {
    /// Build from text; the vocabulary is the sorted set of its characters.
    pub fn from_text(text: &str) -> Result<Self> {
        Self::with_vocab(text, Vocab::from_chars(text.chars()))
    }

    /// Encode `text` against an existing vocabulary.
    pub fn with_vocab(text: &str, vocab: Vocab) -> Result<Self> {
        let mut indices = Vec::with_capacity(text.len());
        for c in text.chars() {
            let i = vocab.index_of(c).ok_or_else(|| {
                Error::InvalidArgument(format!("character {c:?} is not in the vocabulary"))
            })?;
            indices.push(i);
        }
        if indices.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "corpus needs at least 2 characters, got {}",
                indices.len()
            )));
        }
        Ok(Self {
            text: text.into(),
            vocab,
            indices,
            split: 1.0,
        })
    }

    /// Restrict training views to the leading `fraction` of the text.
    pub fn with_split(mut self, fraction: f64) -> Result<Self> {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "train fraction must be in (0, 1], got {fraction}"
            )));
        }
        self.split = fraction;
        Ok(self)
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn split(&self) -> f64 {
        self.split
    }

    /// The training prefix of the encoded text.
    pub fn train_indices(&self) -> &[usize] {
        let n = ((self.indices.len() as f64 * self.split) as usize).clamp(2, self.indices.len());
        &self.indices[..n]
    }

    /// Consecutive non-overlapping segments over the training prefix. The
    /// last one may be shorter than `seg_len`.
    ///
    /// # Panics
    /// If `seg_len` is zero.
    pub fn segments(&self, seg_len: usize) -> Segments<'_> {
        assert!(seg_len >= 1, "segment length must be >= 1");
        Segments {
            indices: self.train_indices(),
            seg_len,
            pos: 0,
        }
    }
}

pub struct Segments<'a> {
    indices: &'a [usize],
    seg_len: usize,
    pos: usize,
}

impl<'a> Iterator for Segments<'a> {
    type Item = Segment<'a>;

    fn next(&mut self) -> Option<Segment<'a>> {
        let predictable = self.indices.len() - 1;
        if self.pos >= predictable {
            return None;
        }
        let end = (self.pos + self.seg_len).min(predictable);
        let seg = Segment {
            inputs: &self.indices[self.pos..end],
            targets: &self.indices[self.pos + 1..end + 1],
        };
        self.pos = end;
        Some(seg)
    }
}

/// `n` letters drawn i.i.d. uniformly from a-z on the "data" substream.
pub fn gen_random_letters(n: usize, seed: u64) -> Result<CharDataset> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "random corpus needs n >= 2, got {n}"
        )));
    }
    let letters: Vec<char> = LETTERS.chars().collect();
    let mut rng = substream(seed, "data");
    let text: String = (0..n).map(|_| letters[rng.below(letters.len())]).collect();
    CharDataset::from_text(&text)
}
