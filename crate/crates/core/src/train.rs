//! Training loops: node classification, link prediction, and KG
//! embedding, all deterministic under a fixed seed.

use std::collections::HashMap;
use std::rc::Rc;
use std::time::Instant;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::data::{EdgeSplit, Graph as DataGraph, KGDataset, Triple};
use crate::layers::{build_model, fermi_dirac_node, Model, ModelSpec, ParamRegistry};
use crate::metrics;
use crate::multirel::{kg_train_step, rank_evaluate, KGConfig, RankReport};
use crate::optim::{adam_step, riemannian_adam_step, sgd_step, Grads, OptimState, Params, Tags};
use crate::tensor::{EvalMode, Graph, NodeId, Tensor};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("non-finite loss at epoch {0}")]
    NonFiniteLoss(usize),
    #[error("dataset has no {0} nodes")]
    EmptySplit(&'static str),
    #[error("graph construction failed: {0}")]
    Build(#[from] crate::tensor::TensorError),
    #[error("layer error: {0}")]
    Layer(#[from] crate::layers::LayerError),
    #[error("metric error: {0}")]
    Metric(#[from] crate::metrics::MetricError),
    #[error("optimizer error: {0}")]
    Optim(#[from] crate::optim::OptimError),
    #[error("kg error: {0}")]
    Multirel(#[from] crate::multirel::MultirelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerChoice {
    Adam,
    RAdam,
    Sgd,
}

#[derive(Debug, Clone, Copy)]
pub struct TrainConfig {
    pub optimizer: OptimizerChoice,
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub val_metric: f64,
    pub epoch_seconds: f64,
}

#[derive(Debug)]
pub struct TrainOutput {
    pub records: Vec<EpochRecord>,
    pub best_val: f64,
    pub test_metric: f64,
    /// Parameters at the best validation epoch.
    pub best_params: Params,
    /// Model output rows at the best validation epoch (eval mode).
    pub embeddings: Tensor,
    /// Mean seconds per epoch, forward+backward+update only.
    pub mean_epoch_seconds: f64,
}

fn optimizer_step(
    choice: OptimizerChoice,
    params: &mut Params,
    grads: &Grads,
    state: &mut OptimState,
    tags: &Tags,
) -> Result<(), crate::optim::OptimError> {
    match choice {
        OptimizerChoice::Adam => adam_step(params, grads, state),
        OptimizerChoice::RAdam => riemannian_adam_step(params, grads, state, tags),
        OptimizerChoice::Sgd => sgd_step(params, grads, state),
    }
}

fn mask_indices(mask: &[bool]) -> Vec<usize> {
    mask.iter()
        .enumerate()
        .filter_map(|(i, &m)| if m { Some(i) } else { None })
        .collect()
}

/// Masked softmax cross-entropy on the given logit rows. Returns the
/// scalar loss node.
fn cross_entropy_node(
    g: &mut Graph,
    logits: NodeId,
    idx: Rc<Vec<usize>>,
    labels: &[i64],
    num_classes: usize,
) -> Result<NodeId, crate::tensor::TensorError> {
    let m = idx.len();
    let rows = g.gather_rows(logits, idx.clone())?;
    let mx = g.row_max_detached(rows);
    let shifted = g.sub(rows, mx)?;
    let ex = g.exp(shifted);
    let z = g.row_sum(ex);
    let lz = g.log(z);
    let mut onehot = vec![0.0; m * num_classes];
    for (k, &i) in idx.iter().enumerate() {
        onehot[k * num_classes + labels[i] as usize] = 1.0;
    }
    let oh = g.constant(Tensor::matrix(m, num_classes, onehot)?);
    let tgt_terms = g.mul(shifted, oh)?;
    let tgt = g.row_sum(tgt_terms);
    let per = g.sub(lz, tgt)?;
    Ok(g.mean(per))
}

fn argmax_rows(t: &Tensor) -> Vec<usize> {
    (0..t.rows())
        .map(|r| {
            t.row(r)
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0
        })
        .collect()
}

fn bindings_of(params: &Params, extra: &[(&str, Tensor)]) -> HashMap<String, Tensor> {
    let mut b: HashMap<String, Tensor> =
        params.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
    for (k, v) in extra {
        b.insert(k.to_string(), v.clone());
    }
    b
}

/// Full-batch node classification with early best-val checkpointing.
pub fn train_node_classifier(
    data: &DataGraph,
    spec: &ModelSpec,
    cfg: &TrainConfig,
) -> Result<TrainOutput, TrainError> {
    let train_idx = Rc::new(mask_indices(&data.train_mask));
    if train_idx.is_empty() {
        return Err(TrainError::EmptySplit("train"));
    }
    let num_classes = *spec.dims.last().unwrap();
    let mut model: Model = build_model(spec, &data.edges, data.n)?;
    let loss_node = cross_entropy_node(
        &mut model.graph,
        model.output,
        train_idx,
        &data.labels,
        num_classes,
    )?;
    let features = Tensor::matrix(
        data.n,
        data.feature_dim(),
        data.features.iter().flatten().copied().collect(),
    )
    .map_err(TrainError::Build)?;
    let mut params = model.params.clone();
    let mut state = OptimState::new(cfg.lr)?.with_weight_decay(cfg.weight_decay);
    let mut records = Vec::with_capacity(cfg.epochs);
    let mut best_val = f64::NEG_INFINITY;
    let mut best_params = params.clone();
    let mut best_embeddings = Tensor::zeros(vec![1]);
    let mut total_seconds = 0.0;
    for epoch in 0..cfg.epochs {
        let bindings = bindings_of(&params, &[("x", features.clone())]);
        let start = Instant::now();
        let eval = model.graph.forward(
            &bindings,
            EvalMode::Train {
                seed: cfg.seed ^ epoch as u64,
            },
        )?;
        let loss = eval.value(loss_node).item();
        if !loss.is_finite() {
            return Err(TrainError::NonFiniteLoss(epoch));
        }
        let grads = model.graph.backward(&eval, loss_node)?;
        let grad_map: Grads = grads
            .inputs()
            .iter()
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        optimizer_step(
            cfg.optimizer,
            &mut params,
            &grad_map,
            &mut state,
            &model.tags,
        )?;
        let epoch_seconds = start.elapsed().as_secs_f64();
        total_seconds += epoch_seconds;

        let eval_bindings = bindings_of(&params, &[("x", features.clone())]);
        let ev = model.graph.forward(&eval_bindings, EvalMode::Eval)?;
        let logits = ev.value(model.output);
        let preds = argmax_rows(logits);
        let val = metrics::accuracy(&preds, &data.labels, &data.val_mask)?;
        if val.value > best_val {
            best_val = val.value;
            best_params = params.clone();
            best_embeddings = logits.clone();
        }
        records.push(EpochRecord {
            epoch,
            loss,
            val_metric: val.value,
            epoch_seconds,
        });
    }
    // test metric at the best-val checkpoint
    let test_bindings = bindings_of(&best_params, &[("x", features.clone())]);
    let ev = model.graph.forward(&test_bindings, EvalMode::Eval)?;
    let preds = argmax_rows(ev.value(model.output));
    let test = metrics::accuracy(&preds, &data.labels, &data.test_mask)?;
    Ok(TrainOutput {
        best_val,
        test_metric: test.value,
        best_params,
        embeddings: best_embeddings,
        mean_epoch_seconds: total_seconds / cfg.epochs.max(1) as f64,
        records,
    })
}

fn bce_over_pairs(
    g: &mut Graph,
    reg: &mut ParamRegistry,
    z: NodeId,
    pos: &[(usize, usize)],
    neg: &[(usize, usize)],
    hyperbolic: Option<crate::geometry::Curvature>,
) -> Result<NodeId, crate::tensor::TensorError> {
    let is: Vec<usize> = pos.iter().chain(neg).map(|e| e.0).collect();
    let js: Vec<usize> = pos.iter().chain(neg).map(|e| e.1).collect();
    let p = fermi_dirac_node(g, reg, z, Rc::new(is), Rc::new(js), hyperbolic, "dec")?;
    // −mean(y·log p + (1−y)·log(1−p)) via a ±1 sign trick on the logit
    // is unavailable here (p is already a probability), so use log p and
    // log(1−p) directly
    let mut signs = vec![1.0; pos.len()];
    signs.extend(vec![0.0; neg.len()]);
    let y = g.constant(Tensor::matrix(signs.len(), 1, signs)?);
    let lp = g.log(p);
    let neg_p = g.neg(p);
    let one_m = g.add_const(neg_p, 1.0);
    let lq = g.log(one_m);
    let term_pos = g.mul(y, lp)?;
    let ny = g.neg(y);
    let one_my = g.add_const(ny, 1.0);
    let term_neg = g.mul(one_my, lq)?;
    let sum_terms = g.add(term_pos, term_neg)?;
    let mean = g.mean(sum_terms);
    Ok(g.neg(mean))
}

/// Link prediction: encoder from the model spec, Fermi-Dirac decoder,
/// fresh uniform train negatives each epoch. HGCN decodes with the ball
/// distance; everything else with the Euclidean distance.
pub fn train_link_predictor(
    data: &DataGraph,
    split: &EdgeSplit,
    spec: &ModelSpec,
    cfg: &TrainConfig,
) -> Result<TrainOutput, TrainError> {
    if split.train_pos.is_empty() {
        return Err(TrainError::EmptySplit("train"));
    }
    let features = Tensor::matrix(
        data.n,
        data.feature_dim(),
        data.features.iter().flatten().copied().collect(),
    )
    .map_err(TrainError::Build)?;
    // every encoder, including the hyperbolic one, emits tangent-space
    // rows at its output, so the decoder always uses Euclidean distance
    let hyper: Option<crate::geometry::Curvature> = None;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5EED);
    let mut params: Option<Params> = None;
    let mut tags = Tags::new();
    let mut state = OptimState::new(cfg.lr)?.with_weight_decay(cfg.weight_decay);
    let mut records = Vec::with_capacity(cfg.epochs);
    let mut best_val = f64::NEG_INFINITY;
    let mut best_params = Params::new();
    let mut best_embeddings = Tensor::zeros(vec![1]);
    let mut total_seconds = 0.0;

    // evaluation graph with fixed val/test pairs, built once
    let mut eval_model = build_model(spec, &split.train_pos, data.n)?;
    let mut eval_reg = ParamRegistry::new(spec.seed ^ 1);
    let vp: Vec<(usize, usize)> = split.val_pos.clone();
    let vn: Vec<(usize, usize)> = split.val_neg.clone();
    let tp: Vec<(usize, usize)> = split.test_pos.clone();
    let tn: Vec<(usize, usize)> = split.test_neg.clone();
    let val_is: Vec<usize> = vp.iter().chain(&vn).map(|e| e.0).collect();
    let val_js: Vec<usize> = vp.iter().chain(&vn).map(|e| e.1).collect();
    let test_is: Vec<usize> = tp.iter().chain(&tn).map(|e| e.0).collect();
    let test_js: Vec<usize> = tp.iter().chain(&tn).map(|e| e.1).collect();
    let val_prob = fermi_dirac_node(
        &mut eval_model.graph,
        &mut eval_reg,
        eval_model.output,
        Rc::new(val_is),
        Rc::new(val_js),
        hyper,
        "dec",
    )?;
    let test_prob = fermi_dirac_node(
        &mut eval_model.graph,
        &mut eval_reg,
        eval_model.output,
        Rc::new(test_is),
        Rc::new(test_js),
        hyper,
        "dec",
    )?;

    for epoch in 0..cfg.epochs {
        // fresh negatives, one per train positive
        let mut train_neg = Vec::with_capacity(split.train_pos.len());
        let edge_set: std::collections::HashSet<(usize, usize)> =
            data.edges.iter().copied().collect();
        use rand::Rng as _;
        while train_neg.len() < split.train_pos.len() {
            let u = rng.gen_range(0..data.n);
            let v = rng.gen_range(0..data.n);
            if u == v {
                continue;
            }
            let e = (u.min(v), u.max(v));
            if edge_set.contains(&e) {
                continue;
            }
            train_neg.push(e);
        }
        let mut model = build_model(spec, &split.train_pos, data.n)?;
        let mut reg = ParamRegistry::new(spec.seed ^ 1);
        let loss_node = bce_over_pairs(
            &mut model.graph,
            &mut reg,
            model.output,
            &split.train_pos,
            &train_neg,
            hyper,
        )?;
        if params.is_none() {
            let mut init = model.params.clone();
            for (k, v) in &reg.values {
                init.insert(k.clone(), v.clone());
            }
            tags = model.tags.clone();
            for (k, t) in &reg.tags {
                tags.insert(k.clone(), *t);
            }
            params = Some(init);
        }
        let p = params.as_mut().unwrap();
        let bindings = bindings_of(p, &[("x", features.clone())]);
        let start = Instant::now();
        let eval = model.graph.forward(
            &bindings,
            EvalMode::Train {
                seed: cfg.seed ^ epoch as u64,
            },
        )?;
        let loss = eval.value(loss_node).item();
        if !loss.is_finite() {
            return Err(TrainError::NonFiniteLoss(epoch));
        }
        let grads = model.graph.backward(&eval, loss_node)?;
        let grad_map: Grads = grads
            .inputs()
            .iter()
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        optimizer_step(cfg.optimizer, p, &grad_map, &mut state, &tags)?;
        let epoch_seconds = start.elapsed().as_secs_f64();
        total_seconds += epoch_seconds;

        let eval_bindings = bindings_of(p, &[("x", features.clone())]);
        let ev = eval_model.graph.forward(&eval_bindings, EvalMode::Eval)?;
        let scores: Vec<f64> = ev.value(val_prob).data().to_vec();
        let labels: Vec<bool> = (0..scores.len()).map(|i| i < vp.len()).collect();
        let val = metrics::roc_auc(&scores, &labels)?;
        if val.value > best_val {
            best_val = val.value;
            best_params = p.clone();
            best_embeddings = ev.value(eval_model.output).clone();
        }
        records.push(EpochRecord {
            epoch,
            loss,
            val_metric: val.value,
            epoch_seconds,
        });
    }
    let eval_bindings = bindings_of(&best_params, &[("x", features.clone())]);
    let ev = eval_model.graph.forward(&eval_bindings, EvalMode::Eval)?;
    let scores: Vec<f64> = ev.value(test_prob).data().to_vec();
    let labels: Vec<bool> = (0..scores.len()).map(|i| i < tp.len()).collect();
    let test = metrics::roc_auc(&scores, &labels)?;
    Ok(TrainOutput {
        best_val,
        test_metric: test.value,
        best_params,
        embeddings: best_embeddings,
        mean_epoch_seconds: total_seconds / cfg.epochs.max(1) as f64,
        records,
    })
}

#[derive(Debug)]
pub struct KGTrainOutput {
    pub records: Vec<EpochRecord>,
    pub valid_report: RankReport,
    pub test_report: RankReport,
    pub params: Params,
    pub projections: usize,
}

/// Mini-batch KG training with per-epoch filtered validation MRR.
#[allow(clippy::too_many_arguments)]
pub fn train_kg(
    data: &KGDataset,
    cfg: &KGConfig,
    dim: usize,
    negatives: usize,
    batch_size: usize,
    tcfg: &TrainConfig,
) -> Result<KGTrainOutput, TrainError> {
    let mut rng = ChaCha8Rng::seed_from_u64(tcfg.seed);
    let (mut params, tags) = crate::multirel::init_kg_params(
        data.num_entities(),
        data.num_relations(),
        dim,
        cfg,
        &mut rng,
    );
    let mut state = OptimState::new(tcfg.lr)?.with_weight_decay(tcfg.weight_decay);
    let filter: std::collections::HashSet<Triple> = data
        .train
        .iter()
        .chain(&data.valid)
        .chain(&data.test)
        .copied()
        .collect();
    let mut records = Vec::with_capacity(tcfg.epochs);
    let mut projections = 0usize;
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    for epoch in 0..tcfg.epochs {
        use rand::seq::SliceRandom as _;
        order.shuffle(&mut rng);
        let start = Instant::now();
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(batch_size.max(1)) {
            let batch: Vec<Triple> = chunk.iter().map(|&i| data.train[i]).collect();
            let (loss, proj) = kg_train_step(
                &batch,
                &mut params,
                &tags,
                cfg,
                negatives,
                &mut rng,
                &mut state,
            )?;
            epoch_loss += loss;
            projections += proj;
            batches += 1;
        }
        let epoch_seconds = start.elapsed().as_secs_f64();
        let loss = epoch_loss / batches.max(1) as f64;
        if !loss.is_finite() {
            return Err(TrainError::NonFiniteLoss(epoch));
        }
        records.push(EpochRecord {
            epoch,
            loss,
            val_metric: f64::NAN,
            epoch_seconds,
        });
    }
    let valid_report = if data.valid.is_empty() {
        RankReport {
            mrr: f64::NAN,
            hits1: f64::NAN,
            hits3: f64::NAN,
            hits10: f64::NAN,
            count: 0,
        }
    } else {
        rank_evaluate(&data.valid, &params, cfg, &filter)?
    };
    let test_report = rank_evaluate(&data.test, &params, cfg, &filter)?;
    // backfill the final validation metric for the record stream
    if let Some(last) = records.last_mut() {
        last.val_metric = valid_report.mrr;
    }
    Ok(KGTrainOutput {
        records,
        valid_report,
        test_report,
        params,
        projections,
    })
}

#[cfg(test)]
mod tests {
    use crate::data::{gen_balanced_tree, make_splits, split_edges};
    use crate::hypnorm::{NormConfig, Placement};
    use crate::layers::ModelKind;

    use super::*;

    fn tree_dataset(seed: u64) -> DataGraph {
        let mut g = gen_balanced_tree(3, 4, 16, seed).unwrap();
        g.labels[0] = 1;
        make_splits(&g, (0.6, 0.2, 0.2), seed).unwrap()
    }

    fn node_spec(kind: ModelKind, in_dim: usize, classes: usize, seed: u64) -> ModelSpec {
        ModelSpec {
            kind,
            dims: vec![in_dim, 16, classes],
            heads: 2,
            dropout_keep: 0.9,
            slope: 0.2,
            bias: true,
            norm: NormConfig::new(1.0, 3.0, Placement::PerLayer).unwrap(),
            seed,
        }
    }

    #[test]
    fn node_training_learns_tree_depths() {
        let data = tree_dataset(3);
        let spec = node_spec(ModelKind::Ngcn, 16, 5, 7);
        let cfg = TrainConfig {
            optimizer: OptimizerChoice::Adam,
            lr: 0.02,
            weight_decay: 0.0005,
            epochs: 60,
            seed: 7,
        };
        let out = train_node_classifier(&data, &spec, &cfg).unwrap();
        assert_eq!(out.records.len(), 60);
        assert!(out.records.last().unwrap().loss < out.records[0].loss);
        // depth labels on a tree are learnable well above chance (5
        // classes, majority class ~60%)
        assert!(out.test_metric > 0.5, "test accuracy {}", out.test_metric);
    }

    #[test]
    fn node_training_deterministic() {
        let data = tree_dataset(4);
        let spec = node_spec(ModelKind::Gcn, 16, 5, 9);
        let cfg = TrainConfig {
            optimizer: OptimizerChoice::Adam,
            lr: 0.02,
            weight_decay: 0.0,
            epochs: 10,
            seed: 42,
        };
        let a = train_node_classifier(&data, &spec, &cfg).unwrap();
        let b = train_node_classifier(&data, &spec, &cfg).unwrap();
        for (x, y) in a.records.iter().zip(&b.records) {
            assert_eq!(x.loss, y.loss);
            assert_eq!(x.val_metric, y.val_metric);
        }
        assert_eq!(a.test_metric, b.test_metric);
        assert_eq!(a.embeddings.data(), b.embeddings.data());
    }

    #[test]
    fn radam_equals_adam_for_euclidean_models() {
        let data = tree_dataset(5);
        let spec = node_spec(ModelKind::Ngat, 16, 5, 11);
        let base = TrainConfig {
            optimizer: OptimizerChoice::Adam,
            lr: 0.02,
            weight_decay: 0.0005,
            epochs: 8,
            seed: 3,
        };
        let radam = TrainConfig {
            optimizer: OptimizerChoice::RAdam,
            ..base
        };
        let a = train_node_classifier(&data, &spec, &base).unwrap();
        let b = train_node_classifier(&data, &spec, &radam).unwrap();
        // every parameter of the N-variants is Euclidean-tagged, so the
        // Riemannian path reduces exactly
        for (x, y) in a.records.iter().zip(&b.records) {
            assert_eq!(x.loss, y.loss);
        }
    }

    #[test]
    fn link_prediction_beats_chance() {
        // two dense communities: held-out intra-community edges stay
        // predictable through alternative paths, unlike a tree where
        // removing an edge disconnects its endpoints
        use rand::Rng as _;
        let n = 60;
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut edges = Vec::new();
        for u in 0..n {
            for v in (u + 1)..n {
                let same = (u < n / 2) == (v < n / 2);
                let p = if same { 0.3 } else { 0.02 };
                if rng.gen::<f64>() < p {
                    edges.push((u, v));
                }
            }
        }
        let features: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let mut f = vec![0.0; n];
                f[i] = 1.0;
                f
            })
            .collect();
        let g = DataGraph {
            n,
            edges,
            features,
            labels: vec![0; n],
            train_mask: vec![false; n],
            val_mask: vec![false; n],
            test_mask: vec![false; n],
        };
        let split = split_edges(&g, (0.80, 0.10, 0.10), 13).unwrap();
        let spec = ModelSpec {
            kind: ModelKind::Gcn,
            dims: vec![60, 16, 8],
            heads: 1,
            dropout_keep: 0.9,
            slope: 0.2,
            bias: true,
            norm: NormConfig::new(1.0, 3.0, Placement::PerLayer).unwrap(),
            seed: 21,
        };
        let cfg = TrainConfig {
            optimizer: OptimizerChoice::Adam,
            lr: 0.01,
            weight_decay: 0.0005,
            epochs: 80,
            seed: 5,
        };
        let out = train_link_predictor(&g, &split, &spec, &cfg).unwrap();
        assert!(out.records.last().unwrap().loss < out.records[0].loss);
        assert!(out.test_metric > 0.6, "test AUC {}", out.test_metric);
    }

    #[test]
    fn kg_training_runs_and_ranks() {
        // small synthetic KG: a tree's parent-of relation
        let tree = gen_balanced_tree(3, 3, 4, 8).unwrap();
        let triples: Vec<Triple> = tree
            .edges
            .iter()
            .map(|&(u, v)| Triple {
                head: u,
                rel: 0,
                tail: v,
            })
            .collect();
        let n = triples.len();
        let data = KGDataset {
            entities: (0..tree.n).map(|i| (format!("n{i}"), i)).collect(),
            relations: [("parent_of".to_string(), 0)].into(),
            train: triples[..n - 6].to_vec(),
            valid: triples[n - 6..n - 3].to_vec(),
            test: triples[n - 3..].to_vec(),
        };
        let cfg = KGConfig::new(
            crate::multirel::ScorerKind::NMuR(crate::multirel::NMuRMode::EmbedNorm),
            crate::geometry::Curvature::new(1.0).unwrap(),
        );
        let tcfg = TrainConfig {
            optimizer: OptimizerChoice::RAdam,
            lr: 0.01,
            weight_decay: 0.0,
            epochs: 5,
            seed: 77,
        };
        let out = train_kg(&data, &cfg, 8, 5, 16, &tcfg).unwrap();
        assert_eq!(out.records.len(), 5);
        assert!(out.test_report.mrr > 0.0 && out.test_report.mrr <= 1.0);
        assert!(out.test_report.hits1 <= out.test_report.hits10);
    }
}
