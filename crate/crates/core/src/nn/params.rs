//! Flat parameter storage for a compiled network.

use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// One named tensor inside a [`ParameterSet`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub len: usize,
}

/// Initialisation rule for an entry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Init {
    /// Uniform He-style fan-in scaling: U(-sqrt(6/fan_in), sqrt(6/fan_in)).
    HeUniform { fan_in: usize },
    Zero,
    One,
}

/// Flat collection of named tensors, in declaration order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSet {
    entries: Arc<Vec<ParamEntry>>,
    data: Vec<f64>,
}

impl ParameterSet {
    pub(crate) fn init(
        entries: Arc<Vec<ParamEntry>>,
        inits: &[Init],
        seed: u64,
    ) -> ParameterSet {
        debug_assert_eq!(entries.len(), inits.len());
        let total: usize = entries.iter().map(|e| e.len).sum();
        let mut data = vec![0.0f64; total];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (entry, init) in entries.iter().zip(inits) {
            let slot = &mut data[entry.offset..entry.offset + entry.len];
            match *init {
                Init::HeUniform { fan_in } => {
                    let bound = (6.0 / fan_in as f64).sqrt();
                    for v in slot {
                        *v = rng.gen_range(-bound..=bound);
                    }
                }
                Init::Zero => {}
                Init::One => slot.fill(1.0),
            }
        }
        ParameterSet { entries, data }
    }

    pub(crate) fn with_data(entries: Arc<Vec<ParamEntry>>, data: Vec<f64>) -> Result<ParameterSet> {
        let total: usize = entries.iter().map(|e| e.len).sum();
        if data.len() != total {
            return Err(Error::invalid(format!(
                "parameter payload has {} values, network needs {total}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("parameters must be finite"));
        }
        Ok(ParameterSet { entries, data })
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Values of entry `idx`.
    pub fn slice(&self, idx: usize) -> &[f64] {
        let e = &self.entries[idx];
        &self.data[e.offset..e.offset + e.len]
    }

    /// Entry values looked up by name, for inspection in tests and tools.
    pub fn by_name(&self, name: &str) -> Option<&[f64]> {
        let e = self.entries.iter().find(|e| e.name == name)?;
        Some(&self.data[e.offset..e.offset + e.len])
    }

    pub fn by_name_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        let e = self.entries.iter().find(|e| e.name == name)?;
        Some(&mut self.data[e.offset..e.offset + e.len])
    }

    /// Same entry layout with the given flat values (used for gradients).
    pub(crate) fn like_with(&self, data: Vec<f64>) -> ParameterSet {
        debug_assert_eq!(data.len(), self.data.len());
        ParameterSet {
            entries: Arc::clone(&self.entries),
            data,
        }
    }
}
