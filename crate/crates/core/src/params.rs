use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    Weight,
    Bias,
    NormScale,
    NormShift,
    /// Batch-norm running mean/variance; never touched by the optimizer.
    RunningStat,
    SpectralReal,
    SpectralImag,
}

impl ParamKind {
    pub fn trainable(self) -> bool {
        self != ParamKind::RunningStat
    }

    pub fn spectral(self) -> bool {
        matches!(self, ParamKind::SpectralReal | ParamKind::SpectralImag)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub value: Tensor,
    pub kind: ParamKind,
}

/// Named parameters, ordered by name so iteration (and therefore
/// serialization and optimizer updates) is deterministic.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    entries: BTreeMap<String, Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor, kind: ParamKind) {
        self.entries.insert(name.into(), Param { value, kind });
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn param(&self, name: &str) -> Result<&Param> {
        self.entries
            .get(name)
            .ok_or_else(|| Error::Config(format!("missing parameter `{name}`")))
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.param(name).map(|p| &p.value)
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.entries
            .get_mut(name)
            .map(|p| &mut p.value)
            .ok_or_else(|| Error::Config(format!("missing parameter `{name}`")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Param)> {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn trainable_count(&self) -> usize {
        self.iter()
            .filter(|(_, p)| p.kind.trainable())
            .map(|(_, p)| p.value.len())
            .sum()
    }

    pub fn non_trainable_count(&self) -> usize {
        self.iter()
            .filter(|(_, p)| !p.kind.trainable())
            .map(|(_, p)| p.value.len())
            .sum()
    }

    /// Copies values from `other` for every shared name with a matching shape.
    pub fn assign_from(&mut self, other: &ParamStore) -> Result<()> {
        for (name, p) in self.entries.iter_mut() {
            let src = other.get(name)?;
            if src.shape() != p.value.shape() {
                return Err(Error::Integrity(format!(
                    "parameter `{name}` has shape {:?}, source has {:?}",
                    p.value.shape(),
                    src.shape()
                )));
            }
            p.value = src.clone();
        }
        Ok(())
    }
}

/// Gradients keyed like [`ParamStore`]; each entry is co-shaped with its
/// parameter.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradStore {
    entries: BTreeMap<String, Tensor>,
}

impl GradStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `grad` into the entry for `name`, creating it if absent.
    pub fn accumulate(&mut self, name: &str, grad: Tensor) -> Result<()> {
        match self.entries.get_mut(name) {
            Some(existing) => existing.add_assign(&grad),
            None => {
                self.entries.insert(name.to_owned(), grad);
                Ok(())
            }
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }

    /// Checks the co-indexing contract against a parameter store.
    pub fn check_against(&self, params: &ParamStore) -> Result<()> {
        for (name, p) in params.iter().filter(|(_, p)| p.kind.trainable()) {
            let g = self
                .get(name)
                .ok_or_else(|| Error::State(format!("no gradient for `{name}`")))?;
            if g.shape() != p.value.shape() {
                return Err(Error::State(format!(
                    "gradient for `{name}` has shape {:?}, parameter has {:?}",
                    g.shape(),
                    p.value.shape()
                )));
            }
        }
        Ok(())
    }
}
