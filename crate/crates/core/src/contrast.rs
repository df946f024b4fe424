//! Contrast sets and coalitions.
//!
//! A [`ContrastSet`] fixes the order of the input channels for a whole run;
//! a [`Coalition`] is a bitmask over that order (bit `i` set means contrast
//! `i` is supplied to the model).

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported contrast count. Exact enumeration visits `2^n` coalitions
/// and the weight table needs `n!` in 64 bits.
pub const MAX_CONTRASTS: usize = 16;

/// Contrast names of the BraTS multi-parametric MRI inputs, in their usual order.
pub const BRATS_CONTRASTS: [&str; 4] = ["T1c", "T1n", "T2f", "T2w"];

/// Text used for the empty coalition in tabular files.
pub const EMPTY_COALITION: &str = "EMPTY";

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct ContrastSet {
    names: Vec<String>,
}

impl ContrastSet {
    pub fn new<I, S>(names: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.is_empty() || names.len() > MAX_CONTRASTS {
            return Err(Error::InvalidContrastSet(format!(
                "expected 1..={MAX_CONTRASTS} contrasts, got {}",
                names.len()
            )));
        }
        for (i, name) in names.iter().enumerate() {
            if name.trim().is_empty() {
                return Err(Error::InvalidContrastSet("empty contrast name".into()));
            }
            if name.contains('+') || name == EMPTY_COALITION {
                return Err(Error::InvalidContrastSet(format!(
                    "contrast name `{name}` clashes with the coalition syntax"
                )));
            }
            if names[..i].contains(name) {
                return Err(Error::InvalidContrastSet(format!(
                    "duplicate contrast `{name}`"
                )));
            }
        }
        Ok(Self { names })
    }

    pub fn brats() -> Self {
        Self::new(BRATS_CONTRASTS).expect("static contrast list is valid")
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, index: usize) -> &str {
        &self.names[index]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Number of coalitions, `2^n`.
    pub fn coalition_count(&self) -> usize {
        1 << self.names.len()
    }

    pub fn full(&self) -> Coalition {
        Coalition((self.coalition_count() - 1) as u32)
    }

    /// All coalitions in ascending mask order.
    pub fn coalitions(&self) -> impl Iterator<Item = Coalition> {
        (0..self.coalition_count() as u32).map(Coalition)
    }

    /// Parses the `T1c+T2f` / `EMPTY` textual form.
    pub fn parse_coalition(&self, text: &str) -> Result<Coalition> {
        let text = text.trim();
        if text == EMPTY_COALITION || text.is_empty() {
            return Ok(Coalition::EMPTY);
        }
        coalition_from_names(text.split('+').map(str::trim), self)
    }

    pub fn format_coalition(&self, coalition: Coalition) -> String {
        if coalition.is_empty() {
            EMPTY_COALITION.to_string()
        } else {
            coalition.names(self).join("+")
        }
    }
}

impl TryFrom<Vec<String>> for ContrastSet {
    type Error = Error;

    fn try_from(names: Vec<String>) -> Result<Self> {
        Self::new(names)
    }
}

impl From<ContrastSet> for Vec<String> {
    fn from(set: ContrastSet) -> Self {
        set.names
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Coalition(pub u32);

impl Coalition {
    pub const EMPTY: Coalition = Coalition(0);

    pub fn mask(self) -> u32 {
        self.0
    }

    pub fn cardinality(self) -> u32 {
        self.0.count_ones()
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn contains(self, index: usize) -> bool {
        self.0 & (1 << index) != 0
    }

    pub fn with(self, index: usize) -> Coalition {
        Coalition(self.0 | (1 << index))
    }

    pub fn without(self, index: usize) -> Coalition {
        Coalition(self.0 & !(1 << index))
    }

    /// Member indices in ascending order.
    pub fn members(self) -> impl Iterator<Item = usize> {
        let mask = self.0;
        (0..32).filter(move |i| mask & (1 << i) != 0)
    }

    /// Member names in declared contrast order.
    pub fn names(self, contrasts: &ContrastSet) -> Vec<&str> {
        self.members().map(|i| contrasts.name(i)).collect()
    }
}

impl fmt::Display for Coalition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#b}", self.0)
    }
}

/// Builds the coalition holding exactly the named contrasts. Order and
/// repetition of `names` do not matter.
pub fn coalition_from_names<I, S>(names: I, contrasts: &ContrastSet) -> Result<Coalition>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    names.into_iter().try_fold(Coalition::EMPTY, |acc, name| {
        let name = name.as_ref();
        contrasts
            .index_of(name)
            .map(|i| acc.with(i))
            .ok_or_else(|| Error::UnknownContrast(name.to_string()))
    })
}
