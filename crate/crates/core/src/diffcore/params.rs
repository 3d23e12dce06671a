//! Named parameter storage and matching gradient buffers.

use super::scalar::Scalar;
use crate::error::{Error, Result};
use std::collections::HashMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(pub(crate) usize);

#[derive(Debug, Clone)]
pub struct ParamEntry<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<T>,
    /// False for auxiliary buffers (spectral-norm u/v vectors).
    pub trainable: bool,
}

/// Parameter tensors in declaration order; names are unique.
#[derive(Debug, Clone, Default)]
pub struct ParamStore<T> {
    entries: Vec<ParamEntry<T>>,
    index: HashMap<String, usize>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            entries: Vec::new(),
            index: HashMap::new(),
        }
    }

    /// Adds a fresh entry, or binds to an existing one with the same name
    /// (used when compiling a network over a store loaded from a checkpoint).
    /// The second result is true when the entry was newly created.
    pub fn add_or_bind(
        &mut self,
        name: &str,
        shape: Vec<usize>,
        init: impl FnOnce() -> Vec<T>,
        trainable: bool,
    ) -> Result<(ParamId, bool)> {
        if let Some(&i) = self.index.get(name) {
            let e = &self.entries[i];
            if e.shape != shape {
                return Err(Error::Shape(format!(
                    "parameter {name} has shape {:?}, expected {:?}",
                    e.shape, shape
                )));
            }
            return Ok((ParamId(i), false));
        }
        let numel: usize = shape.iter().product();
        let value = init();
        assert_eq!(value.len(), numel, "init length mismatch for {name}");
        let id = self.entries.len();
        self.entries.push(ParamEntry {
            name: name.to_string(),
            shape,
            value,
            trainable,
        });
        self.index.insert(name.to_string(), id);
        Ok((ParamId(id), true))
    }

    #[inline]
    pub fn value(&self, id: ParamId) -> &[T] {
        &self.entries[id.0].value
    }

    #[inline]
    pub fn value_mut(&mut self, id: ParamId) -> &mut [T] {
        &mut self.entries[id.0].value
    }

    pub fn entry(&self, id: ParamId) -> &ParamEntry<T> {
        &self.entries[id.0]
    }

    pub fn entries(&self) -> &[ParamEntry<T>] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn id_of(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).map(|&i| ParamId(i))
    }

    /// Entries in declaration order with their ids.
    pub fn iter_ids(&self) -> impl Iterator<Item = (ParamId, &ParamEntry<T>)> {
        self.entries.iter().enumerate().map(|(i, e)| (ParamId(i), e))
    }

    /// Total element count over trainable entries; the brute-force
    /// counterpart of the analytic parameter tally.
    pub fn trainable_count(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| e.trainable)
            .map(|e| e.value.len())
            .sum()
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            entries: self
                .entries
                .iter()
                .map(|e| ParamEntry {
                    name: e.name.clone(),
                    shape: e.shape.clone(),
                    value: e.value.iter().map(|v| U::from_f64(v.to_f64())).collect(),
                    trainable: e.trainable,
                })
                .collect(),
            index: self.index.clone(),
        }
    }
}

/// Gradient slots aligned index-for-index with a [`ParamStore`].
#[derive(Debug, Clone)]
pub struct Grads<T> {
    slots: Vec<Vec<T>>,
}

impl<T: Scalar> Grads<T> {
    pub fn zeros_like(store: &ParamStore<T>) -> Self {
        Grads {
            slots: store
                .entries
                .iter()
                .map(|e| vec![T::ZERO; e.value.len()])
                .collect(),
        }
    }

    pub fn zero(&mut self) {
        for s in &mut self.slots {
            s.fill(T::ZERO);
        }
    }

    #[inline]
    pub fn slot(&self, id: ParamId) -> &[T] {
        &self.slots[id.0]
    }

    #[inline]
    pub fn slot_mut(&mut self, id: ParamId) -> &mut [T] {
        &mut self.slots[id.0]
    }

    pub fn slots(&self) -> &[Vec<T>] {
        &self.slots
    }

    /// Fixed-order accumulation of another gradient set.
    pub fn add_assign(&mut self, other: &Grads<T>) {
        assert_eq!(self.slots.len(), other.slots.len());
        for (a, b) in self.slots.iter_mut().zip(&other.slots) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += *y;
            }
        }
    }
}
