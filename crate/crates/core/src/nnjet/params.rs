//! Flat parameter vectors spanning one or two networks.

use super::mlp::Mlp;
use crate::error::{Error, Result};

/// Whether a flat index addresses a weight matrix entry or a bias entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Weight,
    Bias,
}

/// Location of one flat parameter inside its network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamSlot {
    pub net: usize,
    pub layer: usize,
    pub kind: ParamKind,
    pub row: usize,
    pub col: usize,
}

/// Block structure of a flat vector: each network's layer sizes, in order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamLayout {
    nets: Vec<Vec<usize>>,
    offsets: Vec<usize>,
}

impl ParamLayout {
    pub fn new(nets: Vec<Vec<usize>>) -> Self {
        let mut offsets = vec![0];
        for sizes in &nets {
            offsets.push(offsets.last().unwrap() + super::mlp::param_count(sizes));
        }
        Self { nets, offsets }
    }

    pub fn len(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn net_count(&self) -> usize {
        self.nets.len()
    }

    /// Flat index range owned by network `net`.
    pub fn range(&self, net: usize) -> std::ops::Range<usize> {
        self.offsets[net]..self.offsets[net + 1]
    }

    pub fn layer_sizes(&self, net: usize) -> &[usize] {
        &self.nets[net]
    }

    /// Maps a flat index to the parameter it addresses.
    pub fn locate(&self, index: usize) -> Option<ParamSlot> {
        if index >= self.len() {
            return None;
        }
        let net = self.offsets.partition_point(|&o| o <= index) - 1;
        let mut k = index - self.offsets[net];
        let sizes = &self.nets[net];
        for layer in 0..sizes.len() - 1 {
            let (fan_in, fan_out) = (sizes[layer], sizes[layer + 1]);
            if k < fan_in * fan_out {
                return Some(ParamSlot { net, layer, kind: ParamKind::Weight, row: k / fan_in, col: k % fan_in });
            }
            k -= fan_in * fan_out;
            if k < fan_out {
                return Some(ParamSlot { net, layer, kind: ParamKind::Bias, row: k, col: 0 });
            }
            k -= fan_out;
        }
        unreachable!("offsets cover every index")
    }
}

/// All trainable parameters as one vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    pub flat: Vec<f64>,
    pub layout: ParamLayout,
}

impl ParamVector {
    pub fn flatten(nets: &[&Mlp]) -> Self {
        let layout = ParamLayout::new(nets.iter().map(|n| n.layer_sizes().to_vec()).collect());
        let mut flat = Vec::with_capacity(layout.len());
        for n in nets {
            n.write_params(&mut flat);
        }
        Self { flat, layout }
    }

    pub fn len(&self) -> usize {
        self.flat.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flat.is_empty()
    }

    /// Slice owned by network `net`.
    pub fn net(&self, net: usize) -> &[f64] {
        &self.flat[self.layout.range(net)]
    }

    /// Rebuilds the networks with these parameters.
    pub fn unflatten(&self) -> Result<Vec<Mlp>> {
        if self.flat.len() != self.layout.len() {
            return Err(Error::Internal(format!(
                "parameter vector has {} entries, layout expects {}",
                self.flat.len(),
                self.layout.len()
            )));
        }
        (0..self.layout.net_count())
            .map(|i| {
                let mut m = Mlp::zeros(self.layout.layer_sizes(i))?;
                m.read_params(self.net(i))?;
                Ok(m)
            })
            .collect()
    }

    /// Writes this vector's parameters into existing networks of matching shape.
    pub fn load_into(&self, nets: &mut [&mut Mlp]) -> Result<()> {
        if nets.len() != self.layout.net_count() {
            return Err(Error::Internal("network count does not match parameter layout".into()));
        }
        for (i, n) in nets.iter_mut().enumerate() {
            if n.layer_sizes() != self.layout.layer_sizes(i) {
                return Err(Error::Internal(format!("network {i} shape does not match parameter layout")));
            }
            n.read_params(self.net(i))?;
        }
        Ok(())
    }
}
