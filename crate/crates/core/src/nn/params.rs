use std::collections::{BTreeMap, BTreeSet};

use crate::error::{ensure, MgaError, Result};
use crate::nn::Tensor;

/// Trainable parameters receive gradients and optimizer updates; buffers
/// (batch-norm running statistics, bookkeeping markers) are state only.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Trainable,
    Buffer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub tensor: Tensor,
    pub kind: ParamKind,
}

/// Named parameter and buffer tensors, keyed by layer-qualified names such as
/// `can.conv1.weight`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParameterStore {
    entries: BTreeMap<String, Entry>,
    frozen: BTreeSet<String>,
}

/// Pending buffer overwrites produced by a training-mode forward pass.
#[derive(Debug, Default)]
pub struct BufferUpdates {
    pub(crate) updates: Vec<(String, Vec<f64>)>,
}

impl BufferUpdates {
    pub fn push(&mut self, name: &str, values: Vec<f64>) {
        self.updates.push((name.to_owned(), values));
    }

    pub fn is_empty(&self) -> bool {
        self.updates.is_empty()
    }
}

const STAGE_MARKER_PREFIX: &str = "meta.done.";

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, tensor: Tensor, kind: ParamKind) {
        self.entries.insert(name.to_owned(), Entry { tensor, kind });
    }

    pub fn insert_param(&mut self, name: &str, tensor: Tensor) {
        self.insert(name, tensor, ParamKind::Trainable);
    }

    pub fn insert_buffer(&mut self, name: &str, tensor: Tensor) {
        self.insert(name, tensor, ParamKind::Buffer);
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.entries
            .get(name)
            .map(|e| &e.tensor)
            .ok_or_else(|| MgaError::State(format!("parameter `{name}` is not in the store")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.entries
            .get_mut(name)
            .map(|e| &mut e.tensor)
            .ok_or_else(|| MgaError::State(format!("parameter `{name}` is not in the store")))
    }

    pub fn kind(&self, name: &str) -> Option<ParamKind> {
        self.entries.get(name).map(|e| e.kind)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &Entry)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn trainable_names(&self) -> impl Iterator<Item = &str> {
        self.entries
            .iter()
            .filter(|(_, e)| e.kind == ParamKind::Trainable)
            .map(|(k, _)| k.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total scalar count over trainable parameters whose name starts with
    /// any of `prefixes` (all trainable parameters when `prefixes` is empty).
    pub fn count_trainable(&self, prefixes: &[&str]) -> usize {
        self.entries
            .iter()
            .filter(|(k, e)| {
                e.kind == ParamKind::Trainable
                    && (prefixes.is_empty() || prefixes.iter().any(|p| k.starts_with(p)))
            })
            .map(|(_, e)| e.tensor.len())
            .sum()
    }

    pub fn freeze(&mut self, name: &str) -> Result<()> {
        ensure!(
            self.entries.contains_key(name),
            State,
            "cannot freeze unknown parameter `{name}`"
        );
        self.frozen.insert(name.to_owned());
        Ok(())
    }

    /// Freezes every trainable parameter for which `keep_trainable` is false.
    pub fn freeze_all_except(&mut self, keep_trainable: impl Fn(&str) -> bool) {
        let names: Vec<String> = self
            .entries
            .iter()
            .filter(|(k, e)| e.kind == ParamKind::Trainable && !keep_trainable(k))
            .map(|(k, _)| k.clone())
            .collect();
        self.frozen.extend(names);
    }

    pub fn unfreeze_all(&mut self) {
        self.frozen.clear();
    }

    pub fn is_frozen(&self, name: &str) -> bool {
        self.frozen.contains(name)
    }

    pub fn frozen(&self) -> impl Iterator<Item = &str> {
        self.frozen.iter().map(String::as_str)
    }

    /// Adds into a parameter's gradient buffer. Frozen and buffer entries are
    /// skipped silently.
    pub fn accumulate_grad(&mut self, name: &str, delta: &[f64]) -> Result<()> {
        if self.frozen.contains(name) {
            return Ok(());
        }
        let entry = self
            .entries
            .get_mut(name)
            .ok_or_else(|| MgaError::State(format!("no parameter `{name}` to receive a gradient")))?;
        if entry.kind == ParamKind::Buffer {
            return Ok(());
        }
        entry.tensor.accumulate_grad(delta)
    }

    pub fn zero_grads(&mut self) {
        for e in self.entries.values_mut() {
            e.tensor.zero_grad();
        }
    }

    /// Moves all accumulated gradients out of the store.
    pub fn take_grads(&mut self) -> BTreeMap<String, Tensor> {
        let mut out = BTreeMap::new();
        for (k, e) in self.entries.iter_mut() {
            if let Some(g) = e.tensor.take_grad() {
                out.insert(k.clone(), g);
            }
        }
        out
    }

    /// Applies running-statistics updates gathered during a training forward
    /// pass.
    pub fn apply_buffer_updates(&mut self, updates: BufferUpdates) -> Result<()> {
        for (name, values) in updates.updates {
            let t = self.get_mut(&name)?;
            ensure!(
                t.len() == values.len(),
                Dimension,
                "buffer update for `{name}` has {} values, expected {}",
                values.len(),
                t.len()
            );
            t.data_mut().copy_from_slice(&values);
        }
        Ok(())
    }

    /// Copies every entry whose name starts with `prefix` from `other`.
    pub fn merge_prefix(&mut self, other: &ParameterStore, prefix: &str) -> usize {
        let mut n = 0;
        for (k, e) in other.entries.iter().filter(|(k, _)| k.starts_with(prefix)) {
            self.entries.insert(k.clone(), e.clone());
            n += 1;
        }
        n
    }

    pub fn mark_done(&mut self, marker: &str) {
        self.insert_buffer(&format!("{STAGE_MARKER_PREFIX}{marker}"), Tensor::scalar(1.0));
    }

    pub fn is_done(&self, marker: &str) -> bool {
        self.contains(&format!("{STAGE_MARKER_PREFIX}{marker}"))
    }

    /// Bitwise comparison of all entries outside the given prefixes.
    pub fn identical_outside(&self, other: &ParameterStore, excluded_prefixes: &[&str]) -> bool {
        let keep = |k: &str| !excluded_prefixes.iter().any(|p| k.starts_with(p)) && !k.starts_with(STAGE_MARKER_PREFIX);
        let a: Vec<_> = self.entries.iter().filter(|(k, _)| keep(k)).collect();
        let b: Vec<_> = other.entries.iter().filter(|(k, _)| keep(k)).collect();
        a.len() == b.len()
            && a.iter().zip(&b).all(|((ka, ea), (kb, eb))| {
                ka == kb
                    && ea.tensor.shape() == eb.tensor.shape()
                    && ea
                        .tensor
                        .data()
                        .iter()
                        .zip(eb.tensor.data())
                        .all(|(x, y)| x.to_bits() == y.to_bits())
            })
    }
}
