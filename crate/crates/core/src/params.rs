//! Named, shaped collections of learnable arrays.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{domain_err, Result};
use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

/// Version tag of the store layout; bumped whenever names or shapes change.
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct ParameterStore {
    arrays: BTreeMap<String, Tensor>,
    format_version: u32,
}

impl Default for ParameterStore {
    fn default() -> Self {
        Self::new()
    }
}

impl ParameterStore {
    pub fn new() -> Self {
        Self {
            arrays: BTreeMap::new(),
            format_version: FORMAT_VERSION,
        }
    }

    pub fn format_version(&self) -> u32 {
        self.format_version
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) -> Option<Tensor> {
        self.arrays.insert(name.into(), value)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.arrays.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.arrays.get_mut(name)
    }

    pub fn require(&self, name: &str) -> Result<&Tensor> {
        match self.arrays.get(name) {
            Some(t) => Ok(t),
            None => domain_err!("parameter `{}` missing from store", name),
        }
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.arrays.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.arrays.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.arrays.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.arrays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arrays.is_empty()
    }

    /// Sub-store of the arrays whose name starts with `prefix`.
    pub fn filtered(&self, prefix: &str) -> ParameterStore {
        Self {
            arrays: self
                .arrays
                .iter()
                .filter(|(k, _)| k.starts_with(prefix))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
            format_version: self.format_version,
        }
    }
}

/// Total number of scalar parameters.
pub fn count_params(store: &ParameterStore) -> usize {
    store.iter().map(|(_, t)| t.len()).sum()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) enum Init {
    /// Zero-mean normal with standard deviation `gain / sqrt(fan_in)`.
    FanIn { fan_in: usize, gain: f32 },
    Zero,
}

/// Declared name, shape and initialiser of one learnable array.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

pub(crate) const RELU_GAIN: f32 = std::f32::consts::SQRT_2;

/// Declares `name.weight` `(c_out, c_in, k, k)` and `name.bias`.
pub(crate) fn conv_spec(specs: &mut Vec<ParamSpec>, name: &str, c_in: usize, c_out: usize, k: usize, gain: f32) {
    specs.push(ParamSpec {
        name: format!("{name}.weight"),
        shape: vec![c_out, c_in, k, k],
        init: Init::FanIn {
            fan_in: c_in * k * k,
            gain,
        },
    });
    specs.push(ParamSpec {
        name: format!("{name}.bias"),
        shape: vec![c_out],
        init: Init::Zero,
    });
}

/// Declares a 4×4 stride-2 transposed convolution `(c_in, c_out, 4, 4)`.
/// Each output pixel receives 2×2 taps per input channel.
pub(crate) fn deconv_spec(specs: &mut Vec<ParamSpec>, name: &str, c_in: usize, c_out: usize) {
    specs.push(ParamSpec {
        name: format!("{name}.weight"),
        shape: vec![c_in, c_out, 4, 4],
        init: Init::FanIn {
            fan_in: c_in * 4,
            gain: RELU_GAIN,
        },
    });
    specs.push(ParamSpec {
        name: format!("{name}.bias"),
        shape: vec![c_out],
        init: Init::Zero,
    });
}

pub(crate) fn materialize(specs: &[ParamSpec], seed: u64) -> ParameterStore {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParameterStore::new();
    for spec in specs {
        let n: usize = spec.shape.iter().product();
        let data = match spec.init {
            Init::Zero => vec![0.0; n],
            Init::FanIn { fan_in, gain } => {
                let std = gain / (fan_in as f32).sqrt();
                let normal = Normal::new(0.0f32, std).expect("finite std");
                (0..n).map(|_| normal.sample(&mut rng)).collect()
            }
        };
        store.insert(
            spec.name.clone(),
            Tensor::new(spec.shape.clone(), data).expect("spec shape matches data"),
        );
    }
    store
}

/// Checks that `store` holds exactly the declared arrays with the declared shapes.
pub(crate) fn validate(store: &ParameterStore, specs: &[ParamSpec]) -> Result<()> {
    if store.len() != specs.len() {
        return domain_err!(
            "parameter store has {} arrays, the configuration declares {}",
            store.len(),
            specs.len()
        );
    }
    for spec in specs {
        let t = store.require(&spec.name)?;
        if t.shape() != spec.shape.as_slice() {
            return domain_err!(
                "parameter `{}` has shape {:?}, expected {:?}",
                spec.name,
                t.shape(),
                spec.shape
            );
        }
    }
    Ok(())
}

/// Registers store arrays on a graph on first use and remembers their variables.
pub struct ParamBinder<'a> {
    store: &'a ParameterStore,
    bound: BTreeMap<String, Var>,
    trainable: Box<dyn Fn(&str) -> bool + 'a>,
}

impl<'a> ParamBinder<'a> {
    /// Every array is trainable.
    pub fn new(store: &'a ParameterStore) -> Self {
        Self::with_filter(store, |_| true)
    }

    /// Only arrays accepted by `trainable` receive gradients.
    pub fn with_filter(store: &'a ParameterStore, trainable: impl Fn(&str) -> bool + 'a) -> Self {
        Self {
            store,
            bound: BTreeMap::new(),
            trainable: Box::new(trainable),
        }
    }

    /// All arrays are constants (inference).
    pub fn frozen(store: &'a ParameterStore) -> Self {
        Self::with_filter(store, |_| false)
    }

    pub fn get(&mut self, g: &mut Graph<'a>, name: &str) -> Result<Var> {
        if let Some(v) = self.bound.get(name) {
            return Ok(*v);
        }
        let t = self.store.require(name)?;
        let v = if (self.trainable)(name) {
            g.param(t)
        } else {
            g.constant(t)
        };
        self.bound.insert(name.to_string(), v);
        Ok(v)
    }

    /// Edge-replicated convolution layer `name` (weight + bias).
    pub fn conv(&mut self, g: &mut Graph<'a>, name: &str, x: Var, stride: usize) -> Result<Var> {
        let w = self.get(g, &format!("{name}.weight"))?;
        let b = self.get(g, &format!("{name}.bias"))?;
        g.conv2d(x, w, b, stride)
    }

    pub fn conv_relu(&mut self, g: &mut Graph<'a>, name: &str, x: Var, stride: usize) -> Result<Var> {
        let y = self.conv(g, name, x, stride)?;
        Ok(g.relu(y))
    }

    pub fn deconv_relu(&mut self, g: &mut Graph<'a>, name: &str, x: Var) -> Result<Var> {
        let w = self.get(g, &format!("{name}.weight"))?;
        let b = self.get(g, &format!("{name}.bias"))?;
        let y = g.deconv2d(x, w, b)?;
        Ok(g.relu(y))
    }

    /// `(name, variable)` of every array bound so far.
    pub fn bound(&self) -> impl Iterator<Item = (&str, Var)> {
        self.bound.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counting() {
        assert_eq!(count_params(&ParameterStore::new()), 0);
        let mut specs = Vec::new();
        conv_spec(&mut specs, "c", 3, 64, 5, 1.0);
        let store = materialize(&specs, 1);
        assert_eq!(count_params(&store), 4864);
        assert!(validate(&store, &specs).is_ok());
    }

    #[test]
    fn materialize_is_deterministic() {
        let mut specs = Vec::new();
        conv_spec(&mut specs, "a", 8, 8, 3, RELU_GAIN);
        deconv_spec(&mut specs, "b", 8, 4);
        assert_eq!(materialize(&specs, 9), materialize(&specs, 9));
        assert_ne!(materialize(&specs, 9), materialize(&specs, 10));
    }

    #[test]
    fn validate_catches_shape_drift() {
        let mut specs = Vec::new();
        conv_spec(&mut specs, "a", 8, 8, 3, 1.0);
        let mut store = materialize(&specs, 0);
        store.insert("a.bias", Tensor::zeros(&[7]));
        assert!(validate(&store, &specs).is_err());
        store.insert("extra", Tensor::zeros(&[1]));
        assert!(validate(&store, &specs).is_err());
    }
}
