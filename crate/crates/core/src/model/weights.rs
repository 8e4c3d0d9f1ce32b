//! Named parameter storage, the parameter inventory implied by a config, and
//! seeded initialization.

use std::collections::BTreeMap;

use super::config::{ModelConfig, SE_BLOCK_SITES};
use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::rng::RngStream;

/// Map from dotted tensor path (e.g. `block0.pw.weight`) to tensor.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WeightStore {
    map: BTreeMap<String, Tensor>,
}

impl WeightStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Insert a tensor; duplicate names are an error.
    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<()> {
        let name = name.into();
        if self.map.contains_key(&name) {
            return Err(Error::Input(format!("duplicate tensor name `{name}`")));
        }
        self.map.insert(name, tensor);
        Ok(())
    }

    /// Replace or insert without the duplicate check.
    pub fn put(&mut self, name: impl Into<String>, tensor: Tensor) {
        self.map.insert(name.into(), tensor);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.map
            .get(name)
            .ok_or_else(|| Error::WeightMismatch {
                name: name.to_string(),
                reason: "missing".into(),
            })
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.map.get_mut(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.map.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Name-sorted iteration (BTreeMap order), the canonical order for
    /// serialization.
    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.map.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.map.iter_mut()
    }

    /// Total number of scalar elements across all tensors.
    pub fn element_count(&self) -> usize {
        self.map.values().map(Tensor::len).sum()
    }
}

/// How a parameter tensor is filled at initialization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitKind {
    /// Uniform in `+-sqrt(6 / (fan_in + fan_out))`.
    Xavier { fan_in: usize, fan_out: usize },
    /// Orthogonal square matrix from the QR of a seeded Gaussian matrix.
    Orthogonal,
    Zero,
}

/// One entry of the parameter inventory.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: InitKind,
}

/// The full parameter inventory implied by a config, in definition order.
/// This list is the single source of truth for initialization and for
/// store-against-config validation.
pub fn parameter_specs(cfg: &ModelConfig) -> Result<Vec<ParamSpec>> {
    cfg.validate()?;
    let mut specs: Vec<ParamSpec> = Vec::new();

    let c0 = cfg.stem_out_channels;
    specs.push(ParamSpec {
        name: "stem.weight".into(),
        shape: vec![c0, 1, 3, 3],
        init: InitKind::Xavier { fan_in: 9, fan_out: 9 * c0 },
    });
    specs.push(ParamSpec {
        name: "stem.bias".into(),
        shape: vec![c0],
        init: InitKind::Zero,
    });

    let se_site = |prefix: &str, channels: usize, specs: &mut Vec<ParamSpec>| {
        let mid = channels / cfg.se_reduction;
        specs.push(ParamSpec {
            name: format!("{prefix}.w1"),
            shape: vec![mid, channels],
            init: InitKind::Xavier { fan_in: channels, fan_out: mid },
        });
        specs.push(ParamSpec {
            name: format!("{prefix}.b1"),
            shape: vec![mid],
            init: InitKind::Zero,
        });
        specs.push(ParamSpec {
            name: format!("{prefix}.w2"),
            shape: vec![channels, mid],
            init: InitKind::Xavier { fan_in: mid, fan_out: channels },
        });
        specs.push(ParamSpec {
            name: format!("{prefix}.b2"),
            shape: vec![channels],
            init: InitKind::Zero,
        });
    };
    se_site("stem_se", c0, &mut specs);

    for (i, block) in cfg.block_specs.iter().enumerate() {
        let cin = block.in_channels;
        let cp = block.expanded_channels();
        let cout = block.out_channels();
        specs.push(ParamSpec {
            name: format!("block{i}.pw.weight"),
            shape: vec![cp, cin],
            init: InitKind::Xavier { fan_in: cin, fan_out: cp },
        });
        specs.push(ParamSpec {
            name: format!("block{i}.pw.bias"),
            shape: vec![cp],
            init: InitKind::Zero,
        });
        specs.push(ParamSpec {
            name: format!("block{i}.dw_time.weight"),
            shape: vec![cp, block.time_kernel],
            init: InitKind::Xavier { fan_in: block.time_kernel, fan_out: block.time_kernel },
        });
        specs.push(ParamSpec {
            name: format!("block{i}.dw_freq.weight"),
            shape: vec![cout, block.freq_kernel],
            init: InitKind::Xavier {
                fan_in: block.freq_kernel,
                fan_out: block.freq_kernel * block.dw_multiplier,
            },
        });
        if i < SE_BLOCK_SITES {
            se_site(&format!("block{i}.se"), cout, &mut specs);
        }
    }

    let h = cfg.gru_hidden;
    let fp = cfg.gru_input_size();
    for gate in ["z", "r", "h"] {
        specs.push(ParamSpec {
            name: format!("gru.w_{gate}"),
            shape: vec![h, fp],
            init: InitKind::Xavier { fan_in: fp, fan_out: h },
        });
        specs.push(ParamSpec {
            name: format!("gru.u_{gate}"),
            shape: vec![h, h],
            init: InitKind::Orthogonal,
        });
        specs.push(ParamSpec {
            name: format!("gru.b_{gate}"),
            shape: vec![h],
            init: InitKind::Zero,
        });
    }
    specs.push(ParamSpec {
        name: "parallel.weight".into(),
        shape: vec![h, fp],
        init: InitKind::Xavier { fan_in: fp, fan_out: h },
    });
    let hw = cfg.head_width();
    specs.push(ParamSpec {
        name: "head.weight".into(),
        shape: vec![cfg.n_classes, hw],
        init: InitKind::Xavier { fan_in: hw, fan_out: cfg.n_classes },
    });
    specs.push(ParamSpec {
        name: "head.bias".into(),
        shape: vec![cfg.n_classes],
        init: InitKind::Zero,
    });

    Ok(specs)
}

/// Orthogonal matrix via modified Gram-Schmidt QR of a Gaussian draw.
fn orthogonal(n: usize, rng: &mut RngStream) -> Tensor {
    let mut cols: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..n).map(|_| rng.normal()).collect())
        .collect();
    for j in 0..n {
        for k in 0..j {
            let dot: f64 = (0..n).map(|i| cols[j][i] * cols[k][i]).sum();
            for i in 0..n {
                cols[j][i] -= dot * cols[k][i];
            }
        }
        let norm: f64 = (0..n).map(|i| cols[j][i] * cols[j][i]).sum::<f64>().sqrt();
        // A random Gaussian matrix is full rank with probability one; the
        // guard keeps degenerate draws finite.
        let inv = if norm > 0.0 { 1.0 / norm } else { 0.0 };
        for i in 0..n {
            cols[j][i] *= inv;
        }
    }
    let mut q = Tensor::zeros(&[n, n]).expect("square shape");
    for j in 0..n {
        for i in 0..n {
            q.set(&[i, j], cols[j][i]);
        }
    }
    q
}

/// Seeded initialization of every parameter the config implies.
pub fn init_weights(cfg: &ModelConfig, seed: u64) -> Result<WeightStore> {
    let specs = parameter_specs(cfg)?;
    let mut rng = RngStream::new(seed);
    let mut store = WeightStore::new();
    for spec in &specs {
        let tensor = match spec.init {
            InitKind::Zero => Tensor::zeros(&spec.shape)?,
            InitKind::Xavier { fan_in, fan_out } => {
                let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let len: usize = spec.shape.iter().product();
                let data = (0..len)
                    .map(|_| (rng.uniform() * 2.0 - 1.0) * bound)
                    .collect();
                Tensor::from_vec(&spec.shape, data)?
            }
            InitKind::Orthogonal => orthogonal(spec.shape[0], &mut rng),
        };
        store.insert(spec.name.clone(), tensor)?;
    }
    Ok(store)
}

/// Check that a store holds exactly the tensors the config implies, with the
/// implied shapes. Reports the first offending tensor by name.
pub fn validate_weights(cfg: &ModelConfig, store: &WeightStore) -> Result<()> {
    let specs = parameter_specs(cfg)?;
    for spec in &specs {
        let tensor = store.get(&spec.name)?;
        if tensor.shape() != spec.shape.as_slice() {
            return Err(Error::WeightMismatch {
                name: spec.name.clone(),
                reason: format!("shape {:?}, expected {:?}", tensor.shape(), spec.shape),
            });
        }
    }
    if store.len() != specs.len() {
        let expected: std::collections::BTreeSet<&str> =
            specs.iter().map(|s| s.name.as_str()).collect();
        if let Some((name, _)) = store.iter().find(|(n, _)| !expected.contains(n.as_str())) {
            return Err(Error::WeightMismatch {
                name: name.clone(),
                reason: "not implied by the config".into(),
            });
        }
    }
    Ok(())
}

/// A store of the same shape as `reference` with every tensor zeroed;
/// the accumulator for gradients.
pub fn zeros_like(reference: &WeightStore) -> WeightStore {
    let mut out = WeightStore::new();
    for (name, tensor) in reference.iter() {
        out.put(name.clone(), Tensor::zeros(tensor.shape()).expect("same shape"));
    }
    out
}
