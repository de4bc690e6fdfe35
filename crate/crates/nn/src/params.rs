//! Named parameter storage and gradient maps.

use indexmap::IndexMap;
use ndarray::Array2;

use crate::error::{NnError, Result};
use crate::scalar::Scalar;

/// One named tensor. Non-trainable entries hold auxiliary state such as the
/// persisted spectral-norm power-iteration vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<S: Scalar> {
    pub values: Array2<S>,
    pub trainable: bool,
}

/// Ordered collection of uniquely named parameters.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet<S: Scalar> {
    entries: IndexMap<String, Param<S>>,
}

impl<S: Scalar> ParamSet<S> {
    pub fn new() -> Self {
        Self {
            entries: IndexMap::new(),
        }
    }

    /// Register a new parameter. Names must be unique within the set.
    pub fn insert(&mut self, name: &str, values: Array2<S>, trainable: bool) -> Result<()> {
        if self.entries.contains_key(name) {
            return Err(NnError::Param(format!("duplicate parameter `{name}`")));
        }
        self.entries
            .insert(name.to_string(), Param { values, trainable });
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Param<S>> {
        self.entries
            .get(name)
            .ok_or_else(|| NnError::Param(format!("unknown parameter `{name}`")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Param<S>> {
        self.entries
            .get_mut(name)
            .ok_or_else(|| NnError::Param(format!("unknown parameter `{name}`")))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    /// Iterate in insertion order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param<S>)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
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

    /// Total number of trainable scalars.
    pub fn trainable_count(&self) -> usize {
        self.entries
            .values()
            .filter(|p| p.trainable)
            .map(|p| p.values.len())
            .sum()
    }

    /// Cast every tensor to another element type (used to instantiate the
    /// verification graph in `f64`).
    pub fn cast<T: Scalar>(&self) -> ParamSet<T> {
        let entries = self
            .entries
            .iter()
            .map(|(k, p)| {
                (
                    k.clone(),
                    Param {
                        values: p.values.mapv(|v| T::from_f64(v.as_f64())),
                        trainable: p.trainable,
                    },
                )
            })
            .collect();
        ParamSet { entries }
    }
}

/// Gradients keyed by parameter name, accumulated in `f64` regardless of the
/// graph element type.
#[derive(Debug, Clone, Default)]
pub struct GradientMap {
    entries: IndexMap<String, Array2<f64>>,
}

impl GradientMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Add `grad` into the accumulator for `name` (sum over batches/samples).
    pub fn accumulate<S: Scalar>(&mut self, name: &str, grad: &Array2<S>) {
        match self.entries.get_mut(name) {
            Some(acc) => {
                for (a, g) in acc.iter_mut().zip(grad.iter()) {
                    *a += g.as_f64();
                }
            }
            None => {
                self.entries
                    .insert(name.to_string(), grad.mapv(Scalar::as_f64));
            }
        }
    }

    /// Merge another gradient map (summing shared names).
    pub fn merge(&mut self, other: &GradientMap) {
        for (name, grad) in &other.entries {
            match self.entries.get_mut(name) {
                Some(acc) => *acc += grad,
                None => {
                    self.entries.insert(name.clone(), grad.clone());
                }
            }
        }
    }

    /// Divide every gradient by `n` (batch averaging).
    pub fn scale(&mut self, factor: f64) {
        for grad in self.entries.values_mut() {
            *grad *= factor;
        }
    }

    pub fn get(&self, name: &str) -> Option<&Array2<f64>> {
        self.entries.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Array2<f64>)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn duplicate_names_are_rejected() {
        let mut p: ParamSet<f32> = ParamSet::new();
        p.insert("w", array![[1.0f32]], true).unwrap();
        assert!(p.insert("w", array![[2.0f32]], true).is_err());
    }

    #[test]
    fn gradient_accumulation_sums_in_f64() {
        let mut g = GradientMap::new();
        g.accumulate("w", &array![[1.5f32]]);
        g.accumulate("w", &array![[2.25f32]]);
        assert_eq!(g.get("w").unwrap()[[0, 0]], 3.75);
    }

    #[test]
    fn cast_roundtrip_preserves_f32_values() {
        let mut p: ParamSet<f32> = ParamSet::new();
        p.insert("w", array![[0.1f32, -2.5], [3.25, 0.0]], true).unwrap();
        let back: ParamSet<f32> = p.cast::<f64>().cast();
        assert_eq!(p, back);
    }
}
