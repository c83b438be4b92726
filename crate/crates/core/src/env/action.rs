use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// One index per level; `indices[h]` addresses `A_h`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CompositeAction {
    pub indices: Vec<usize>,
}

impl CompositeAction {
    pub fn new(indices: Vec<usize>) -> Self {
        Self { indices }
    }

    pub fn levels(&self) -> usize {
        self.indices.len()
    }

    /// The first `len` coordinates `a^(1:len)`.
    pub fn prefix(&self, len: usize) -> &[usize] {
        &self.indices[..len]
    }
}

impl fmt::Display for CompositeAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.indices.iter().map(|i| i.to_string()).collect();
        write!(f, "{}", parts.join("-"))
    }
}

/// Allowed children of a prefix; prefixes without an entry allow every action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskEntry {
    pub prefix: Vec<usize>,
    pub allowed: Vec<usize>,
}

/// The shape of the hierarchy plus the optional prefix mask.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionSpace {
    actions_per_level: Vec<usize>,
    mask: BTreeMap<Vec<usize>, Vec<usize>>,
}

impl ActionSpace {
    pub fn new(actions_per_level: Vec<usize>, mask: &[MaskEntry]) -> Result<Self> {
        if actions_per_level.is_empty() {
            return Err(Error::config("levels", "must be at least 1"));
        }
        if let Some(h) = actions_per_level.iter().position(|&k| k == 0) {
            return Err(Error::config(
                "actions_per_level",
                format!("level {} has no actions", h + 1),
            ));
        }
        let mut map = BTreeMap::new();
        for entry in mask {
            let level = entry.prefix.len();
            if level >= actions_per_level.len() {
                return Err(Error::config(
                    "action_mask",
                    format!("prefix {:?} is too long", entry.prefix),
                ));
            }
            if let Some(&bad) = entry.allowed.iter().find(|&&a| a >= actions_per_level[level]) {
                return Err(Error::config(
                    "action_mask",
                    format!("action {bad} out of range at level {}", level + 1),
                ));
            }
            let mut allowed = entry.allowed.clone();
            allowed.sort_unstable();
            allowed.dedup();
            map.insert(entry.prefix.clone(), allowed);
        }
        Ok(Self {
            actions_per_level,
            mask: map,
        })
    }

    pub fn levels(&self) -> usize {
        self.actions_per_level.len()
    }

    pub fn actions_per_level(&self) -> &[usize] {
        &self.actions_per_level
    }

    /// Allowed actions at level `prefix.len()`, ascending.
    pub fn allowed(&self, prefix: &[usize]) -> Vec<usize> {
        match self.mask.get(prefix) {
            Some(list) => list.clone(),
            None => (0..self.actions_per_level[prefix.len()]).collect(),
        }
    }

    /// Upper bound on the number of composite actions (mask ignored).
    pub fn raw_count(&self) -> u128 {
        self.actions_per_level
            .iter()
            .fold(1u128, |acc, &k| acc.saturating_mul(k as u128))
    }

    /// Every allowed prefix of length `len` in lexicographic order.
    pub fn prefixes(&self, len: usize) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        let mut stack = Vec::new();
        self.walk(&mut stack, len, &mut out);
        out
    }

    fn walk(&self, prefix: &mut Vec<usize>, len: usize, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == len {
            out.push(prefix.clone());
            return;
        }
        for a in self.allowed(prefix) {
            prefix.push(a);
            self.walk(prefix, len, out);
            prefix.pop();
        }
    }

    /// Every allowed composite action in lexicographic order.
    pub fn full_actions(&self) -> Vec<CompositeAction> {
        self.prefixes(self.levels())
            .into_iter()
            .map(CompositeAction::new)
            .collect()
    }

    /// Every allowed prefix of every length `1..=H`, grouped by length.
    pub fn all_prefixes(&self) -> Vec<Vec<usize>> {
        (1..=self.levels()).flat_map(|len| self.prefixes(len)).collect()
    }

    pub fn validate(&self, action: &CompositeAction) -> Result<()> {
        if action.levels() != self.levels() {
            return Err(Error::InvalidAction {
                action: action.indices.clone(),
                reason: format!("expected {} levels", self.levels()),
            });
        }
        for h in 0..self.levels() {
            let a = action.indices[h];
            if a >= self.actions_per_level[h] {
                return Err(Error::InvalidAction {
                    action: action.indices.clone(),
                    reason: format!("index {a} out of range at level {}", h + 1),
                });
            }
            if !self.allowed(action.prefix(h)).contains(&a) {
                return Err(Error::InvalidAction {
                    action: action.indices.clone(),
                    reason: format!("index {a} masked at level {}", h + 1),
                });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn enumeration_is_lexicographic() {
        let space = ActionSpace::new(vec![2, 3], &[]).unwrap();
        let all: Vec<Vec<usize>> = space.full_actions().into_iter().map(|a| a.indices).collect();
        assert_eq!(all.len(), 6);
        let mut sorted = all.clone();
        sorted.sort();
        assert_eq!(all, sorted);
        assert_eq!(space.all_prefixes().len(), 2 + 6);
    }

    #[test]
    fn mask_restricts_children() {
        let mask = [MaskEntry {
            prefix: vec![1],
            allowed: vec![2],
        }];
        let space = ActionSpace::new(vec![2, 3], &mask).unwrap();
        assert_eq!(space.full_actions().len(), 4);
        assert!(space.validate(&CompositeAction::new(vec![1, 0])).is_err());
        assert!(space.validate(&CompositeAction::new(vec![1, 2])).is_ok());
        assert!(space.validate(&CompositeAction::new(vec![0, 3])).is_err());
        assert!(space.validate(&CompositeAction::new(vec![0])).is_err());
    }

    #[test]
    fn rejects_empty_levels() {
        assert!(ActionSpace::new(vec![], &[]).is_err());
        assert!(ActionSpace::new(vec![2, 0], &[]).is_err());
    }
}
