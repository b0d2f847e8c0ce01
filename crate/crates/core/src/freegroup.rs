//! Reduced words of a free group of rank `g` on generators `a1, .., ag`.
//!
//! The canonical letter order is `a1 < a2 < .. < ag < a1' < .. < ag'`
//! (apostrophe = inverse); words of a fixed length are ordered
//! lexicographically in that alphabet. All enumeration, tables and file
//! formats in this crate follow this one order, which is what makes repeated
//! runs byte-identical.

use std::fmt;
use std::str::FromStr;

use crate::{Error, Result};

/// Hard default on enumeration size: 2g(2g-1)^(n-1) words must stay below
/// this before any level is materialized.
pub const DEFAULT_WORD_CAP: u128 = 5_000_000;

/// Default cap on word length / filtration depth for front-end entry points.
pub const DEFAULT_DEPTH_CAP: usize = 10;

/// A generator or inverse generator. `index` is 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Letter {
    index: u8,
    inverted: bool,
}

impl Letter {
    pub fn new(index: usize, inverted: bool) -> Result<Self> {
        if index == 0 || index > u8::MAX as usize {
            return Err(Error::LetterOutOfRange {
                index,
                rank: u8::MAX as usize,
            });
        }
        Ok(Self {
            index: index as u8,
            inverted,
        })
    }

    pub fn index(&self) -> usize {
        self.index as usize
    }

    pub fn is_inverted(&self) -> bool {
        self.inverted
    }

    pub fn inverse(&self) -> Self {
        Self {
            index: self.index,
            inverted: !self.inverted,
        }
    }

    /// Position in the canonical alphabet of rank `g`, in `0..2g`.
    pub fn rank_in(&self, g: usize) -> usize {
        debug_assert!((self.index as usize) <= g);
        if self.inverted {
            g + self.index as usize - 1
        } else {
            self.index as usize - 1
        }
    }

    /// Inverse of `rank_in`.
    pub fn from_rank(rank: usize, g: usize) -> Self {
        debug_assert!(rank < 2 * g);
        if rank < g {
            Self {
                index: (rank + 1) as u8,
                inverted: false,
            }
        } else {
            Self {
                index: (rank - g + 1) as u8,
                inverted: true,
            }
        }
    }
}

impl PartialOrd for Letter {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Letter {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // uninverted block first, then by generator index
        (self.inverted, self.index).cmp(&(other.inverted, other.index))
    }
}

impl fmt::Display for Letter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "a{}{}", self.index, if self.inverted { "'" } else { "" })
    }
}

impl FromStr for Letter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (body, inverted) = match s.strip_suffix('\'') {
            Some(b) => (b, true),
            None => (s, false),
        };
        let idx = body
            .strip_prefix('a')
            .and_then(|d| d.parse::<usize>().ok())
            .ok_or_else(|| Error::Parse {
                reason: format!("bad letter token {s:?}"),
            })?;
        Letter::new(idx, inverted)
    }
}

/// Canonical alphabet of rank `g`.
pub fn alphabet(g: usize) -> Vec<Letter> {
    (0..2 * g).map(|r| Letter::from_rank(r, g)).collect()
}

/// A freely reduced word. The reduced invariant is maintained by every
/// constructor; adjacent inverse pairs can never appear.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Word(Vec<Letter>);

impl Word {
    pub fn empty() -> Self {
        Self(Vec::new())
    }

    /// Validates that `letters` is already reduced.
    pub fn new(letters: Vec<Letter>) -> Result<Self> {
        for pair in letters.windows(2) {
            if pair[0] == pair[1].inverse() {
                return Err(Error::Parse {
                    reason: format!("word not reduced at {}.{}", pair[0], pair[1]),
                });
            }
        }
        Ok(Self(letters))
    }

    pub fn single(l: Letter) -> Self {
        Self(vec![l])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn letters(&self) -> &[Letter] {
        &self.0
    }

    /// First letter `i(w)`.
    pub fn first(&self) -> Option<Letter> {
        self.0.first().copied()
    }

    /// Terminal letter `t(w)`.
    pub fn last(&self) -> Option<Letter> {
        self.0.last().copied()
    }

    pub fn prefix(&self, k: usize) -> Word {
        Word(self.0[..k.min(self.0.len())].to_vec())
    }

    /// `w.l`, or `None` when `l` cancels the terminal letter.
    pub fn extended(&self, l: Letter) -> Option<Word> {
        if self.last() == Some(l.inverse()) {
            return None;
        }
        let mut v = self.0.clone();
        v.push(l);
        Some(Word(v))
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "e");
        }
        let mut first = true;
        for l in &self.0 {
            if !first {
                write!(f, ".")?;
            }
            write!(f, "{l}")?;
            first = false;
        }
        Ok(())
    }
}

impl FromStr for Word {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "e" {
            return Ok(Word::empty());
        }
        let letters = s
            .split('.')
            .map(Letter::from_str)
            .collect::<Result<Vec<_>>>()?;
        Word::new(letters)
    }
}

/// Free reduction of an arbitrary letter sequence (stack cancellation).
pub fn reduce(letters: impl IntoIterator<Item = Letter>) -> Word {
    let mut out: Vec<Letter> = Vec::new();
    for l in letters {
        if out.last() == Some(&l.inverse()) {
            out.pop();
        } else {
            out.push(l);
        }
    }
    Word(out)
}

/// Reduced product `w.v`.
pub fn concat(w: &Word, v: &Word) -> Word {
    reduce(w.0.iter().chain(v.0.iter()).copied())
}

/// Prefix order: true iff `w` is a prefix of `v` (every end extending `v`
/// extends `w`).
pub fn extends(w: &Word, v: &Word) -> bool {
    w.len() <= v.len() && v.0[..w.len()] == w.0[..]
}

/// The longer of two prefix-comparable words; `None` when incomparable.
/// The cylinder of the result is the intersection of the two cylinders.
pub fn max_word(w: &Word, v: &Word) -> Option<Word> {
    if extends(w, v) {
        Some(v.clone())
    } else if extends(v, w) {
        Some(w.clone())
    } else {
        None
    }
}

/// Number of reduced words of length `n`: 2g(2g-1)^(n-1), and 1 at n = 0.
pub fn word_count(g: usize, n: usize) -> u128 {
    if n == 0 {
        return 1;
    }
    let mut c = 2 * g as u128;
    for _ in 1..n {
        c *= 2 * g as u128 - 1;
    }
    c
}

/// Letters that extend `w` to a longer reduced word, in canonical order.
/// For the empty word this is the whole alphabet.
pub fn admissible_extensions(w: &Word, g: usize) -> Vec<Letter> {
    let forbidden = w.last().map(|t| t.inverse());
    alphabet(g)
        .into_iter()
        .filter(|l| Some(*l) != forbidden)
        .collect()
}

/// All reduced words of length `n` in canonical order, capped.
pub fn enumerate_words(g: usize, n: usize) -> Result<Vec<Word>> {
    enumerate_words_capped(g, n, DEFAULT_WORD_CAP)
}

pub fn enumerate_words_capped(g: usize, n: usize, cap: u128) -> Result<Vec<Word>> {
    let count = word_count(g, n);
    if count > cap {
        return Err(Error::WordCountExceeded {
            length: n,
            count,
            cap,
        });
    }
    let mut out = Vec::with_capacity(count as usize);
    if n == 0 {
        out.push(Word::empty());
        return Ok(out);
    }
    let mut stack = Vec::with_capacity(n);
    descend(g, n, &mut stack, &mut out);
    Ok(out)
}

fn descend(g: usize, n: usize, stack: &mut Vec<Letter>, out: &mut Vec<Word>) {
    if stack.len() == n {
        out.push(Word(stack.clone()));
        return;
    }
    let forbidden = stack.last().map(|t| t.inverse());
    for r in 0..2 * g {
        let l = Letter::from_rank(r, g);
        if Some(l) == forbidden {
            continue;
        }
        stack.push(l);
        descend(g, n, stack, out);
        stack.pop();
    }
}

/// Position of `w` in the canonical enumeration of words of length `w.len()`.
///
/// First letter contributes its alphabet rank; each later letter contributes
/// its rank among the 2g-1 letters admissible after the previous one. Words
/// sharing a prefix therefore occupy a contiguous index block, which the
/// measure and Hilbert-space code exploits for O(1) cylinder lookups.
pub fn word_index(w: &Word, g: usize) -> usize {
    let n = w.len();
    if n == 0 {
        return 0;
    }
    let b = 2 * g - 1;
    let mut idx = w.0[0].rank_in(g);
    for k in 1..n {
        let skip = w.0[k - 1].inverse().rank_in(g);
        let r = w.0[k].rank_in(g);
        let adm_rank = if r > skip { r - 1 } else { r };
        idx = idx * b + adm_rank;
    }
    idx
}

/// Which letter a policy removes from an admissible set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropPolicy {
    /// Remove the greatest admissible letter (the canonical choice).
    Greatest,
    /// Remove the smallest admissible letter.
    Smallest,
}

/// Order in which each level of an index family is stored and consumed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LevelOrder {
    Canonical,
    Reversed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IndexPolicy {
    pub drop: DropPolicy,
    pub order: LevelOrder,
}

impl Default for IndexPolicy {
    fn default() -> Self {
        Self {
            drop: DropPolicy::Greatest,
            order: LevelOrder::Canonical,
        }
    }
}

/// Nested index sets I_0 c I_1 c .. c I_N selecting which cylinder words
/// enter each stage of the orthonormalization.
///
/// I_0 = {e}; I_1 adds all but one letter; past that, every word `w` of
/// length n contributes its admissible one-letter extensions minus one
/// dropped letter, giving level sizes 2g-1 and then 2g(2g-1)^(n-1)(2g-2).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexSetFamily {
    rank: usize,
    levels: Vec<Vec<Word>>,
}

impl IndexSetFamily {
    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Largest word length present.
    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    /// Words in I_n \ I_{n-1} (all of length n), in construction order.
    pub fn level(&self, n: usize) -> &[Word] {
        &self.levels[n]
    }

    /// Number of words in I_n.
    pub fn cumulative_len(&self, n: usize) -> usize {
        self.levels[..=n].iter().map(Vec::len).sum()
    }
}

pub fn build_index_sets(g: usize, depth: usize) -> Result<IndexSetFamily> {
    build_index_sets_with(g, depth, IndexPolicy::default())
}

pub fn build_index_sets_with(
    g: usize,
    depth: usize,
    policy: IndexPolicy,
) -> Result<IndexSetFamily> {
    let mut levels = vec![vec![Word::empty()]];
    for n in 1..=depth {
        let mut level = Vec::new();
        // every length-(n-1) word contributes, not only family members
        for w in enumerate_words(g, n - 1)? {
            let mut ext = admissible_extensions(&w, g);
            match policy.drop {
                DropPolicy::Greatest => {
                    ext.pop();
                }
                DropPolicy::Smallest => {
                    ext.remove(0);
                }
            }
            for l in ext {
                level.push(w.extended(l).expect("admissible extension reduces"));
            }
        }
        if policy.order == LevelOrder::Reversed {
            level.reverse();
        }
        levels.push(level);
    }
    Ok(IndexSetFamily { rank: g, levels })
}
