//! JSON checkpoints. Masks are not stored; they are rebuilt from
//! `(d, k, hidden)` and reapplied on load.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{FlowModel, MafLayer, MaskedMlp};
use crate::error::{Error, Result};
use crate::stats::CondNorm;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DenseDoc {
    weights: Vec<Vec<f64>>,
    biases: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerDoc {
    mu_net: Vec<DenseDoc>,
    s_net: Vec<DenseDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointDoc {
    format_version: u32,
    d: usize,
    k: usize,
    hidden: usize,
    n_layers: usize,
    perm_seed: u64,
    permutations: Vec<Vec<usize>>,
    cond_norm: CondNorm,
    layers: Vec<LayerDoc>,
}

fn net_doc(net: &MaskedMlp) -> Vec<DenseDoc> {
    net.layers
        .iter()
        .map(|dense| DenseDoc {
            weights: dense.weights.chunks(dense.in_dim).map(<[f64]>::to_vec).collect(),
            biases: dense.biases.clone(),
        })
        .collect()
}

pub fn to_json(model: &FlowModel) -> Result<String> {
    let doc = CheckpointDoc {
        format_version: FORMAT_VERSION,
        d: model.dims(),
        k: model.cond_dims(),
        hidden: model.hidden(),
        n_layers: model.n_layers(),
        perm_seed: model.perm_seed(),
        permutations: model.permutations().to_vec(),
        cond_norm: model.cond_norm().clone(),
        layers: model
            .layers()
            .iter()
            .map(|l| LayerDoc {
                mu_net: net_doc(&l.mu_net),
                s_net: net_doc(&l.s_net),
            })
            .collect(),
    };
    Ok(serde_json::to_string(&doc)?)
}

fn corrupt(field: impl Into<String>) -> Error {
    Error::corrupt(field)
}

fn fill_net(net: &mut MaskedMlp, docs: Vec<DenseDoc>, path: &str) -> Result<()> {
    if docs.len() != net.layers.len() {
        return Err(corrupt(path));
    }
    for (i, (dense, doc)) in net.layers.iter_mut().zip(docs).enumerate() {
        let here = format!("{path}[{i}]");
        if doc.weights.len() != dense.out_dim || doc.biases.len() != dense.out_dim {
            return Err(corrupt(format!("{here}.weights")));
        }
        let mut flat = Vec::with_capacity(dense.weights.len());
        for row in doc.weights {
            if row.len() != dense.in_dim {
                return Err(corrupt(format!("{here}.weights")));
            }
            flat.extend(row);
        }
        if flat.iter().chain(&doc.biases).any(|v| !v.is_finite()) {
            return Err(corrupt(format!("{here}: non-finite value")));
        }
        dense.weights = flat;
        dense.biases = doc.biases;
        dense.apply_mask();
    }
    Ok(())
}

pub fn from_json(text: &str) -> Result<FlowModel> {
    let doc: CheckpointDoc = serde_json::from_str(text).map_err(|e| corrupt(e.to_string()))?;
    if doc.format_version != FORMAT_VERSION {
        return Err(corrupt("format_version"));
    }
    if doc.d == 0 || doc.hidden == 0 || doc.n_layers == 0 {
        return Err(corrupt("d/hidden/n_layers"));
    }
    if doc.permutations.len() != doc.n_layers {
        return Err(corrupt("permutations"));
    }
    for p in &doc.permutations {
        let mut s = p.clone();
        s.sort_unstable();
        if s != (0..doc.d).collect::<Vec<_>>() {
            return Err(corrupt("permutations"));
        }
    }
    if doc.cond_norm.mean.len() != doc.k || doc.cond_norm.std.len() != doc.k {
        return Err(corrupt("cond_norm"));
    }
    if doc.layers.len() != doc.n_layers {
        return Err(corrupt("layers"));
    }
    let mut layers = Vec::with_capacity(doc.n_layers);
    for (l, ld) in doc.layers.into_iter().enumerate() {
        let mut layer = MafLayer {
            mu_net: MaskedMlp::zeros(doc.d, doc.k, doc.hidden),
            s_net: MaskedMlp::zeros(doc.d, doc.k, doc.hidden),
        };
        fill_net(&mut layer.mu_net, ld.mu_net, &format!("layers[{l}].mu_net"))?;
        fill_net(&mut layer.s_net, ld.s_net, &format!("layers[{l}].s_net"))?;
        layers.push(layer);
    }
    Ok(FlowModel::from_parts(
        doc.d,
        doc.k,
        doc.hidden,
        doc.perm_seed,
        layers,
        doc.permutations,
        doc.cond_norm,
    ))
}

pub fn save_model(model: &FlowModel, path: &Path) -> Result<()> {
    std::fs::write(path, to_json(model)?)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<FlowModel> {
    let text = std::fs::read_to_string(path)?;
    from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use rand_distr::{Distribution, StandardNormal};

    fn model() -> FlowModel {
        let mut rng = seed::rng(3);
        let mut m = FlowModel::new(2, 9, 12, 5, 17, &mut rng);
        m.perturb(0.2, &mut rng);
        m.set_cond_norm(CondNorm {
            mean: (0..9).map(|i| i as f64 / 7.0).collect(),
            std: (0..9).map(|i| 1.0 + i as f64 / 3.0).collect(),
        });
        m
    }

    #[test]
    fn round_trip_is_exact() {
        let m = model();
        let back = from_json(&to_json(&m).unwrap()).unwrap();
        assert_eq!(back, m);
        let mut rng = seed::rng(5);
        for _ in 0..100 {
            let c: Vec<f64> = (0..9).map(|_| StandardNormal.sample(&mut rng)).collect();
            let t: Vec<f64> = (0..2).map(|_| StandardNormal.sample(&mut rng)).collect();
            let a = m.log_prob(&c, &t).unwrap();
            let b = back.log_prob(&c, &t).unwrap();
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn file_round_trip_of_zero_model() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        save_model(&FlowModel::zeroed(3, 9, 50, 5, 1), &p).unwrap();
        let m = load_model(&p).unwrap();
        let lp = m.log_prob(&[0.3; 9], &[0.0; 3]).unwrap();
        let expect = -1.5 * (2.0 * std::f64::consts::PI).ln();
        assert!((lp - expect).abs() < 1e-12);
    }

    #[test]
    fn wrong_dimension_is_corrupt() {
        let text = to_json(&model()).unwrap();
        let bad = text.replacen("\"d\":2", "\"d\":3", 1);
        assert_ne!(bad, text);
        assert!(matches!(from_json(&bad), Err(Error::CheckpointCorrupt { .. })));
        assert!(matches!(from_json("{\"d\":1}"), Err(Error::CheckpointCorrupt { .. })));
    }
}
