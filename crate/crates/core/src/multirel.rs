//! Multi-relational KG scoring: Euclidean MuRE, hyperbolic MuRP, and the
//! normalized NMuR variants, with negative sampling, Bernoulli NLL
//! training, and filtered ranking evaluation.

use std::collections::{HashMap, HashSet};
use std::rc::Rc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::data::Triple;
use crate::geometry::{self, Curvature};
use crate::hypnorm::NormConfig;
use crate::layers::{mobius_add_node, project_rows_to_ball};
use crate::optim::{riemannian_adam_step, ManifoldTag, OptimState, Params, Tags};
use crate::tensor::{EvalMode, Graph, NodeId, Result as TensorResult, Tensor};

#[derive(Debug, Error)]
pub enum MultirelError {
    #[error("vocabulary too small for negative sampling: {0} entities")]
    TinyVocab(usize),
    #[error("empty test set")]
    EmptyTest,
    #[error("empty batch")]
    EmptyBatch,
    #[error("non-finite loss: {0}")]
    NonFiniteLoss(f64),
    #[error("graph construction failed: {0}")]
    Build(#[from] crate::tensor::TensorError),
    #[error("optimizer failed: {0}")]
    Optim(#[from] crate::optim::OptimError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Distance {
    L1,
    L2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NMuRMode {
    /// Squash the Euclidean score: sign(φ)·tanh(√c|φ|)/√c.
    ScoreNorm,
    /// Normalize both sides of the distance before scoring.
    EmbedNorm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScorerKind {
    MuRE,
    MuRP,
    NMuR(NMuRMode),
}

#[derive(Debug, Clone, Copy)]
pub struct KGConfig {
    pub kind: ScorerKind,
    pub distance: Distance,
    pub biases: bool,
    pub curvature: Curvature,
    /// Output scale for embed-norm normalization.
    pub scale: f64,
}

impl KGConfig {
    pub fn new(kind: ScorerKind, curvature: Curvature) -> Self {
        KGConfig {
            kind,
            distance: Distance::L1,
            biases: true,
            curvature,
            scale: 1.0,
        }
    }
}

pub const KG_PARAM_KEYS: [&str; 5] = ["entity", "rel_trans", "rel_diag", "bh", "bt"];

/// Initialize the five KG parameter tables. Embeddings start small so
/// MuRP rows begin well inside the ball; diagonal matrices start near
/// the identity.
pub fn init_kg_params(
    n_entities: usize,
    n_relations: usize,
    dim: usize,
    cfg: &KGConfig,
    rng: &mut ChaCha8Rng,
) -> (Params, Tags) {
    let mut params = Params::new();
    let mut small = |rows: usize, cols: usize| -> Tensor {
        let data = (0..rows * cols)
            .map(|_| rng.gen_range(-0.05..0.05))
            .collect();
        Tensor::matrix(rows, cols, data).unwrap()
    };
    params.insert("entity".into(), small(n_entities, dim));
    params.insert("rel_trans".into(), small(n_relations, dim));
    let diag: Vec<f64> = (0..n_relations * dim)
        .map(|i| 1.0 + 0.01 * ((i % 7) as f64 - 3.0))
        .collect();
    params.insert(
        "rel_diag".into(),
        Tensor::matrix(n_relations, dim, diag).unwrap(),
    );
    params.insert(
        "bh".into(),
        Tensor::matrix(n_entities, 1, vec![0.0; n_entities]).unwrap(),
    );
    params.insert(
        "bt".into(),
        Tensor::matrix(n_entities, 1, vec![0.0; n_entities]).unwrap(),
    );
    let mut tags = Tags::new();
    let ball = matches!(cfg.kind, ScorerKind::MuRP);
    for key in KG_PARAM_KEYS {
        let tag = if ball && (key == "entity" || key == "rel_trans") {
            ManifoldTag::PoincareBall(cfg.curvature)
        } else {
            ManifoldTag::Euclidean
        };
        tags.insert(key.to_string(), tag);
    }
    (params, tags)
}

fn l_distance(a: &[f64], b: &[f64], d: Distance) -> f64 {
    match d {
        Distance::L1 => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
        Distance::L2 => a
            .iter()
            .zip(b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt(),
    }
}

fn bias_term(params: &Params, cfg: &KGConfig, h: usize, t: usize) -> f64 {
    if cfg.biases {
        params["bh"].data()[h] + params["bt"].data()[t]
    } else {
        0.0
    }
}

/// φ^ℝ = −d(R∘x_h, x_t + x_r)² (+ biases).
pub fn mure_score(params: &Params, cfg: &KGConfig, h: usize, r: usize, t: usize) -> f64 {
    let xh = params["entity"].row(h);
    let xt = params["entity"].row(t);
    let xr = params["rel_trans"].row(r);
    let dg = params["rel_diag"].row(r);
    let u: Vec<f64> = xh.iter().zip(dg).map(|(x, d)| x * d).collect();
    let v: Vec<f64> = xt.iter().zip(xr).map(|(x, y)| x + y).collect();
    let d = l_distance(&u, &v, cfg.distance);
    -d * d + bias_term(params, cfg, h, t)
}

/// Diagonal Möbius matrix product diag(d) ⊗_c p.
fn diag_mobius(dg: &[f64], p: &[f64], c: Curvature) -> Vec<f64> {
    let wp: Vec<f64> = p.iter().zip(dg).map(|(x, d)| x * d).collect();
    let np = geometry::norm(p);
    let nwp = geometry::norm(&wp);
    if np == 0.0 || nwp == 0.0 {
        return vec![0.0; p.len()];
    }
    let arg = (nwp / np) * (c.sqrt() * np).atanh();
    let coef = arg.tanh() / (c.sqrt() * nwp);
    wp.iter().map(|x| x * coef).collect()
}

/// −d^𝔹(R ⊗_c p_h, p_t ⊕_c p_r)² (+ biases).
pub fn murp_score(params: &Params, cfg: &KGConfig, h: usize, r: usize, t: usize) -> f64 {
    let c = cfg.curvature;
    let ph = geometry::PoincarePoint::project(params["entity"].row(h).to_vec(), c);
    let pt = geometry::PoincarePoint::project(params["entity"].row(t).to_vec(), c);
    let pr = geometry::PoincarePoint::project(params["rel_trans"].row(r).to_vec(), c);
    let u =
        geometry::PoincarePoint::project(diag_mobius(params["rel_diag"].row(r), ph.coords(), c), c);
    let v = geometry::mobius_add(&pt, &pr).unwrap();
    let d = geometry::hyperbolic_distance(&u, &v).unwrap();
    -d * d + bias_term(params, cfg, h, t)
}

/// NMuR in either reading. score_norm squashes the Euclidean score with
/// the odd extension of ω·id: tanh(√c·φ)/√c. embed_norm normalizes both
/// sides of the distance instead.
pub fn nmur_score(
    params: &Params,
    cfg: &KGConfig,
    mode: NMuRMode,
    h: usize,
    r: usize,
    t: usize,
) -> f64 {
    match mode {
        NMuRMode::ScoreNorm => {
            let phi = mure_score(params, cfg, h, r, t);
            let sc = cfg.curvature.sqrt();
            (sc * phi).tanh() / sc
        }
        NMuRMode::EmbedNorm => {
            let ncfg = NormConfig::new(
                cfg.curvature.get(),
                cfg.scale,
                crate::hypnorm::Placement::Final,
            )
            .unwrap();
            let xh = params["entity"].row(h);
            let xt = params["entity"].row(t);
            let xr = params["rel_trans"].row(r);
            let dg = params["rel_diag"].row(r);
            let u: Vec<f64> = xh.iter().zip(dg).map(|(x, d)| x * d).collect();
            let v: Vec<f64> = xt.iter().zip(xr).map(|(x, y)| x + y).collect();
            let u = crate::hypnorm::apply_norm(&u, &ncfg);
            let v = crate::hypnorm::apply_norm(&v, &ncfg);
            let d = l_distance(&u, &v, cfg.distance);
            -d * d + bias_term(params, cfg, h, t)
        }
    }
}

/// Dispatch on the configured scorer.
pub fn score(params: &Params, cfg: &KGConfig, h: usize, r: usize, t: usize) -> f64 {
    match cfg.kind {
        ScorerKind::MuRE => mure_score(params, cfg, h, r, t),
        ScorerKind::MuRP => murp_score(params, cfg, h, r, t),
        ScorerKind::NMuR(mode) => nmur_score(params, cfg, mode, h, r, t),
    }
}

/// k corruptions of one triple: replace head or tail (50/50) with a
/// uniform entity; a collision with the original is resampled once.
pub fn negative_sample(
    triple: &Triple,
    k: usize,
    rng: &mut ChaCha8Rng,
    n_entities: usize,
) -> Result<Vec<Triple>, MultirelError> {
    if n_entities < 2 {
        return Err(MultirelError::TinyVocab(n_entities));
    }
    let mut out = Vec::with_capacity(k);
    for _ in 0..k {
        let corrupt_head = rng.gen_bool(0.5);
        let mut cand = rng.gen_range(0..n_entities);
        let original = if corrupt_head {
            triple.head
        } else {
            triple.tail
        };
        if cand == original {
            cand = rng.gen_range(0..n_entities);
        }
        out.push(if corrupt_head {
            Triple {
                head: cand,
                ..*triple
            }
        } else {
            Triple {
                tail: cand,
                ..*triple
            }
        });
    }
    Ok(out)
}

/// Differentiable score column [m,1] for a batch of triples, matching
/// the scalar scorers. Inputs are the five KG parameter tables.
pub fn build_score_graph(
    g: &mut Graph,
    cfg: &KGConfig,
    n_entities: usize,
    n_relations: usize,
    dim: usize,
    triples: &[Triple],
) -> TensorResult<NodeId> {
    let entity = g.input("entity", vec![n_entities, dim], true);
    let rel_trans = g.input("rel_trans", vec![n_relations, dim], true);
    let rel_diag = g.input("rel_diag", vec![n_relations, dim], true);
    let bh = g.input("bh", vec![n_entities, 1], true);
    let bt = g.input("bt", vec![n_entities, 1], true);
    let heads = Rc::new(triples.iter().map(|t| t.head).collect::<Vec<_>>());
    let rels = Rc::new(triples.iter().map(|t| t.rel).collect::<Vec<_>>());
    let tails = Rc::new(triples.iter().map(|t| t.tail).collect::<Vec<_>>());
    let xh = g.gather_rows(entity, heads.clone())?;
    let xt = g.gather_rows(entity, tails.clone())?;
    let xr = g.gather_rows(rel_trans, rels.clone())?;
    let dg = g.gather_rows(rel_diag, rels)?;
    let c = cfg.curvature;
    let sc = c.sqrt();

    let phi = match cfg.kind {
        ScorerKind::MuRE | ScorerKind::NMuR(_) => {
            let mut u = g.mul(dg, xh)?;
            let mut v = g.add(xt, xr)?;
            if let ScorerKind::NMuR(NMuRMode::EmbedNorm) = cfg.kind {
                let ncfg =
                    NormConfig::new(c.get(), cfg.scale, crate::hypnorm::Placement::Final).unwrap();
                u = crate::hypnorm::apply_norm_node(g, u, &ncfg)?;
                v = crate::hypnorm::apply_norm_node(g, v, &ncfg)?;
            }
            let diff = g.sub(u, v)?;
            let d = match cfg.distance {
                Distance::L1 => g.row_norm_l1(diff),
                Distance::L2 => g.row_norm_l2(diff),
            };
            let d2 = g.mul(d, d)?;
            g.neg(d2)
        }
        ScorerKind::MuRP => {
            // diag Möbius product on gathered rows
            let wp = g.mul(dg, xh)?;
            let np = g.row_norm_l2(xh);
            let nwp = g.row_norm_l2(wp);
            let np_safe = g.add_const(np, 1e-300);
            let ratio = g.div(nwp, np_safe)?;
            let tq = g.scale_const(np, sc);
            let at = g.artanh(tq);
            let arg = g.mul(ratio, at)?;
            let th = g.tanh(arg);
            let snwp = g.scale_const(nwp, sc);
            let snwp_safe = g.add_const(snwp, 1e-300);
            let coef = g.div(th, snwp_safe)?;
            let u = g.scale(wp, coef)?;
            let v = mobius_add_node(g, xt, xr, c)?;
            let neg_u = g.neg(u);
            let m = mobius_add_node(g, neg_u, v, c)?;
            let nm = g.row_norm_l2(m);
            let snm = g.scale_const(nm, sc);
            let atm = g.artanh(snm);
            let d = g.scale_const(atm, 2.0 / sc);
            let d2 = g.mul(d, d)?;
            g.neg(d2)
        }
    };
    let mut phi = phi;
    if cfg.biases {
        let bhg = g.gather_rows(bh, heads)?;
        let btg = g.gather_rows(bt, tails)?;
        let b = g.add(bhg, btg)?;
        phi = g.add(phi, b)?;
    }
    if let ScorerKind::NMuR(NMuRMode::ScoreNorm) = cfg.kind {
        let t = g.scale_const(phi, sc);
        let th = g.tanh(t);
        phi = g.scale_const(th, 1.0 / sc);
    }
    Ok(phi)
}

/// One optimization step on a batch of positives: Bernoulli NLL over
/// positives plus k sampled negatives each. Returns the loss. MuRP
/// entity and translation rows are re-projected into the ball after the
/// step; the projection count is returned alongside.
#[allow(clippy::too_many_arguments)]
pub fn kg_train_step(
    batch: &[Triple],
    params: &mut Params,
    tags: &Tags,
    cfg: &KGConfig,
    k: usize,
    rng: &mut ChaCha8Rng,
    state: &mut OptimState,
) -> Result<(f64, usize), MultirelError> {
    if batch.is_empty() {
        return Err(MultirelError::EmptyBatch);
    }
    let n_entities = params["entity"].rows();
    let n_relations = params["rel_trans"].rows();
    let dim = params["entity"].cols();
    let mut triples = Vec::with_capacity(batch.len() * (1 + k));
    let mut signs = Vec::with_capacity(batch.len() * (1 + k));
    for t in batch {
        triples.push(*t);
        signs.push(1.0);
        for neg in negative_sample(t, k, rng, n_entities)? {
            triples.push(neg);
            signs.push(-1.0);
        }
    }
    let mut g = Graph::new();
    let phi = build_score_graph(&mut g, cfg, n_entities, n_relations, dim, &triples)?;
    let sign_node = g.constant(Tensor::matrix(signs.len(), 1, signs).unwrap());
    let agreed = g.mul(phi, sign_node)?;
    // −log σ(z) = softplus(−z) = relu(−z) + log(1 + e^{−|z|}), stable
    // for any magnitude because the exponent is never positive
    let neg_z = g.neg(agreed);
    let relu_neg = g.relu(neg_z);
    let relu_pos = g.relu(agreed);
    let abs_z = g.add(relu_neg, relu_pos)?;
    let neg_abs = g.neg(abs_z);
    let e = g.exp(neg_abs);
    let one_p = g.add_const(e, 1.0);
    let lg = g.log(one_p);
    let sp = g.add(relu_neg, lg)?;
    let loss_node = g.mean(sp);

    let bindings: HashMap<String, Tensor> =
        params.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
    let eval = g.forward(&bindings, EvalMode::Eval)?;
    let loss = eval.value(loss_node).item();
    if !loss.is_finite() {
        return Err(MultirelError::NonFiniteLoss(loss));
    }
    let grads = g.backward(&eval, loss_node)?;
    let grad_map: crate::optim::Grads = grads
        .inputs()
        .iter()
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    riemannian_adam_step(params, &grad_map, state, tags)?;
    let mut projected = 0;
    if matches!(cfg.kind, ScorerKind::MuRP) {
        projected += project_rows_to_ball(params.get_mut("entity").unwrap(), cfg.curvature);
        projected += project_rows_to_ball(params.get_mut("rel_trans").unwrap(), cfg.curvature);
    }
    Ok((loss, projected))
}

#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct RankReport {
    pub mrr: f64,
    pub hits1: f64,
    pub hits3: f64,
    pub hits10: f64,
    pub count: usize,
}

/// Filtered ranking over both directions with pessimistic tie breaking:
/// the true answer ranks below every candidate scoring ≥ it.
pub fn rank_evaluate(
    test: &[Triple],
    params: &Params,
    cfg: &KGConfig,
    filter: &HashSet<Triple>,
) -> Result<RankReport, MultirelError> {
    if test.is_empty() {
        return Err(MultirelError::EmptyTest);
    }
    let n_entities = params["entity"].rows();
    let mut ranks = Vec::with_capacity(test.len() * 2);
    for t in test {
        // tail direction
        let true_score = score(params, cfg, t.head, t.rel, t.tail);
        let mut rank = 1usize;
        for cand in 0..n_entities {
            if cand == t.tail {
                continue;
            }
            let candidate = Triple { tail: cand, ..*t };
            if filter.contains(&candidate) {
                continue;
            }
            if score(params, cfg, t.head, t.rel, cand) >= true_score {
                rank += 1;
            }
        }
        ranks.push(rank);
        // head direction
        let true_score = score(params, cfg, t.head, t.rel, t.tail);
        let mut rank = 1usize;
        for cand in 0..n_entities {
            if cand == t.head {
                continue;
            }
            let candidate = Triple { head: cand, ..*t };
            if filter.contains(&candidate) {
                continue;
            }
            if score(params, cfg, cand, t.rel, t.tail) >= true_score {
                rank += 1;
            }
        }
        ranks.push(rank);
    }
    Ok(report_from_ranks(&ranks))
}

pub fn report_from_ranks(ranks: &[usize]) -> RankReport {
    let n = ranks.len() as f64;
    let mrr = ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / n;
    let hits = |k: usize| ranks.iter().filter(|&&r| r <= k).count() as f64 / n;
    RankReport {
        mrr,
        hits1: hits(1),
        hits3: hits(3),
        hits10: hits(10),
        count: ranks.len(),
    }
}
