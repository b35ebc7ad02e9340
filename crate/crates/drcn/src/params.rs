//! Named parameter storage shared by the model, optimizer, gradient checker
//! and checkpoint serializer. BTreeMap keys give every consumer the same
//! deterministic iteration order.

use std::collections::BTreeMap;

use crate::tensor::{Result, TensorError};

#[derive(Debug, Clone)]
pub struct Param {
    pub data: Vec<f64>,
    pub shape: Vec<usize>,
    /// Receives gradient updates. Non-trainable entries (fixed embeddings,
    /// batch-norm running stats) are still checkpointed.
    pub trainable: bool,
    /// Exempt from L2 regularization (embedding matrices).
    pub no_decay: bool,
    /// Leading coordinates pinned to their initial value (the zero PAD row of
    /// embedding tables): excluded from updates and from gradient checking.
    pub frozen_prefix: usize,
}

impl Param {
    pub fn numel(&self) -> usize {
        self.data.len()
    }
}

#[derive(Debug, Clone, Default)]
pub struct ParamSet {
    entries: BTreeMap<String, Param>,
}

pub type GradMap = BTreeMap<String, Vec<f64>>;

impl ParamSet {
    pub fn new() -> Self {
        ParamSet { entries: BTreeMap::new() }
    }

    pub fn insert(&mut self, name: &str, data: Vec<f64>, shape: Vec<usize>) {
        debug_assert_eq!(data.len(), shape.iter().product::<usize>(), "param {name}");
        self.entries.insert(
            name.to_string(),
            Param { data, shape, trainable: true, no_decay: false, frozen_prefix: 0 },
        );
    }

    pub fn insert_full(&mut self, name: &str, p: Param) {
        debug_assert_eq!(p.data.len(), p.shape.iter().product::<usize>(), "param {name}");
        self.entries.insert(name.to_string(), p);
    }

    pub fn get(&self, name: &str) -> &Param {
        self.entries.get(name).unwrap_or_else(|| panic!("unknown parameter {name}"))
    }

    pub fn try_get(&self, name: &str) -> Result<&Param> {
        self.entries
            .get(name)
            .ok_or_else(|| TensorError::Argument(format!("unknown parameter {name}")))
    }

    pub fn get_mut(&mut self, name: &str) -> &mut Param {
        self.entries.get_mut(name).unwrap_or_else(|| panic!("unknown parameter {name}"))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Param)> {
        self.entries.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Param)> {
        self.entries.iter_mut()
    }

    pub fn names(&self) -> Vec<String> {
        self.entries.keys().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total scalar count over trainable entries.
    pub fn trainable_numel(&self) -> usize {
        self.entries.values().filter(|p| p.trainable).map(Param::numel).sum()
    }

    pub fn total_numel(&self) -> usize {
        self.entries.values().map(Param::numel).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iteration_order_is_name_sorted() {
        let mut ps = ParamSet::new();
        ps.insert("z", vec![0.0], vec![1]);
        ps.insert("a", vec![0.0], vec![1]);
        ps.insert("m", vec![0.0], vec![1]);
        let names: Vec<_> = ps.iter().map(|(n, _)| n.clone()).collect();
        assert_eq!(names, vec!["a", "m", "z"]);
    }
}
