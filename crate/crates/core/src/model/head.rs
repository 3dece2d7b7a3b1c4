//! Prototype head: class centers, similarity layouts and the backward pass
//! from similarity gradients to embedding gradients.

use crate::data::Episode;
use crate::error::{Error, Result};
use crate::loss::{
    self, CategorySims, CePartition, LossConfig, LossKind, LossResult, MarginPair, Partition,
    SimEntry, SimGrad, SimilarityPartition, Source,
};
use crate::numeric::{cosine_similarity, dot, l2_normalize, normalize_backward, UnitVector};

use super::mlp::{ForwardCache, MlpParams, ParamGrads};

/// Normalized class centers, one per episode label.
#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeSet {
    pub protos: Vec<UnitVector>,
    /// Norm of each unnormalized mean, needed for the backward pass.
    pub mean_norms: Vec<f64>,
    /// Support indices averaged into each prototype.
    pub members: Vec<Vec<usize>>,
}

impl PrototypeSet {
    pub fn way(&self) -> usize {
        self.protos.len()
    }
}

/// `c_j = normalize(mean of the support embeddings labelled j)`.
///
/// Every label in `0..way` must own the same, nonzero number of supports.
pub fn compute_prototypes(support: &[UnitVector], labels: &[usize], way: usize) -> Result<PrototypeSet> {
    if support.len() != labels.len() {
        return Err(Error::Shape(format!("{} support embeddings, {} labels", support.len(), labels.len())));
    }
    let mut members = vec![Vec::new(); way];
    for (i, &label) in labels.iter().enumerate() {
        if label >= way {
            return Err(Error::Shape(format!("support label {label} outside 0..{way}")));
        }
        members[label].push(i);
    }
    let shot = members.first().map_or(0, Vec::len);
    if shot == 0 || members.iter().any(|m| m.len() != shot) {
        return Err(Error::Shape(format!(
            "every label needs the same nonzero support count, got {:?}",
            members.iter().map(Vec::len).collect::<Vec<_>>()
        )));
    }
    let dim = support[0].dim();
    let mut protos = Vec::with_capacity(way);
    let mut mean_norms = Vec::with_capacity(way);
    for (label, idx) in members.iter().enumerate() {
        let mut mean = vec![0.0; dim];
        for &i in idx {
            mean.iter_mut().zip(support[i].as_slice()).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= shot as f64);
        let proto = l2_normalize(&mean).map_err(|e| match e {
            Error::Degenerate { norm, threshold, .. } => Error::Degenerate {
                what: format!("support mean of label {label}"),
                norm,
                threshold,
            },
            other => other,
        })?;
        mean_norms.push(crate::numeric::norm(&mean));
        protos.push(proto);
    }
    Ok(PrototypeSet { protos, mean_norms, members })
}

/// Lays out the similarities a loss consumes.
///
/// For the relative losses, category `j` gets its own queries as positives
/// and, as negatives, every other-label query followed by every other-label
/// support sample. For cross entropy, row `i` holds query `i` against all
/// prototypes.
pub fn build_partition(
    protos: &PrototypeSet,
    query: &[UnitVector],
    support: &[UnitVector],
    episode: &Episode,
    kind: LossKind,
) -> Result<Partition> {
    let way = episode.spec.way;
    if protos.way() != way || query.len() != episode.query.len() || support.len() != episode.support.len() {
        return Err(Error::Shape(format!(
            "episode is {way}-way with {} queries and {} supports; got {} prototypes, {} query and {} support embeddings",
            episode.query.len(),
            episode.support.len(),
            protos.way(),
            query.len(),
            support.len()
        )));
    }
    let query_labels = episode.query_labels();
    if !kind.is_relative() {
        let sims = query
            .iter()
            .map(|q| protos.protos.iter().map(|c| cosine_similarity(c, q)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        return Ok(Partition::CrossEntropy(CePartition { sims, labels: query_labels }));
    }
    let support_labels = episode.support_labels();
    let mut categories = Vec::with_capacity(way);
    for (j, c) in protos.protos.iter().enumerate() {
        let mut cat = CategorySims::default();
        for (i, (q, &label)) in query.iter().zip(&query_labels).enumerate() {
            let entry = SimEntry::new(cosine_similarity(c, q)?, Source::Query(i));
            if label == j {
                cat.pos.push(entry);
            } else {
                cat.neg.push(entry);
            }
        }
        for (i, (s, &label)) in support.iter().zip(&support_labels).enumerate() {
            if label != j {
                cat.neg.push(SimEntry::new(cosine_similarity(c, s)?, Source::Support(i)));
            }
        }
        categories.push(cat);
    }
    Ok(Partition::Relative(SimilarityPartition { categories }))
}

/// Gradients with respect to the query and the support embeddings.
pub type EmbeddingGrads = (Vec<Vec<f64>>, Vec<Vec<f64>>);

/// Routes similarity gradients back to the query and support embeddings,
/// through the cosine, the prototype normalization and the support mean.
pub fn head_backward(
    grads: &[SimGrad],
    protos: &PrototypeSet,
    query: &[UnitVector],
    support: &[UnitVector],
) -> Result<EmbeddingGrads> {
    let dim = protos.protos.first().map_or(0, UnitVector::dim);
    let mut d_query = vec![vec![0.0; dim]; query.len()];
    let mut d_support = vec![vec![0.0; dim]; support.len()];
    let mut d_protos = vec![vec![0.0; dim]; protos.way()];
    for g in grads {
        let proto = protos.protos.get(g.category).ok_or_else(|| {
            Error::Shape(format!("gradient for category {} of a {}-way head", g.category, protos.way()))
        })?;
        let (emb, d_emb) = match g.source {
            Source::Query(i) if i < query.len() => (&query[i], &mut d_query[i]),
            Source::Support(i) if i < support.len() => (&support[i], &mut d_support[i]),
            other => return Err(Error::Shape(format!("gradient source {other:?} is not in the episode"))),
        };
        d_protos[g.category]
            .iter_mut()
            .zip(emb.as_slice())
            .for_each(|(d, x)| *d += g.grad * x);
        d_emb.iter_mut().zip(proto.as_slice()).for_each(|(d, c)| *d += g.grad * c);
    }
    for (j, d_proto) in d_protos.iter().enumerate() {
        let members = &protos.members[j];
        let d_mean = normalize_backward(protos.protos[j].as_slice(), protos.mean_norms[j], d_proto);
        let share = 1.0 / members.len() as f64;
        for &k in members {
            d_support[k].iter_mut().zip(&d_mean).for_each(|(d, m)| *d += share * m);
        }
    }
    Ok((d_query, d_support))
}

/// Forward state of one episode: support embeddings first, then queries, in
/// one batch.
#[derive(Debug, Clone)]
pub struct EpisodePass {
    pub support: Vec<UnitVector>,
    pub query: Vec<UnitVector>,
    pub protos: PrototypeSet,
    cache: ForwardCache,
}

impl EpisodePass {
    /// Smallest |pre-activation| over all hidden units and samples; infinite
    /// for a network without hidden layers.
    pub fn min_hidden_preactivation(&self) -> f64 {
        self.cache
            .traces
            .iter()
            .flat_map(|t| {
                let hidden = t.pre_activations.len().saturating_sub(1);
                t.pre_activations[..hidden].iter().flatten()
            })
            .fold(f64::INFINITY, |m, z| m.min(z.abs()))
    }

    /// Smallest norm that gets divided by: embeddings before normalization
    /// and prototype means.
    pub fn min_normalized_norm(&self) -> f64 {
        self.cache
            .traces
            .iter()
            .map(|t| t.norm)
            .chain(self.protos.mean_norms.iter().copied())
            .fold(f64::INFINITY, f64::min)
    }
}

pub fn forward_episode(params: &MlpParams, episode: &Episode) -> Result<EpisodePass> {
    let batch: Vec<Vec<f64>> = episode
        .support
        .iter()
        .chain(&episode.query)
        .map(|s| s.features.clone())
        .collect();
    let (mut embeddings, cache) = params.forward(&batch)?;
    let query = embeddings.split_off(episode.support.len());
    let support = embeddings;
    let protos = compute_prototypes(&support, &episode.support_labels(), episode.spec.way)?;
    Ok(EpisodePass { support, query, protos, cache })
}

/// Loss of one episode together with the partition it was computed on.
pub fn episode_loss(
    params: &MlpParams,
    episode: &Episode,
    cfg: &LossConfig,
    frozen_margins: Option<&[MarginPair]>,
) -> Result<(LossResult, Partition, EpisodePass)> {
    let pass = forward_episode(params, episode)?;
    let partition = build_partition(&pass.protos, &pass.query, &pass.support, episode, cfg.kind)?;
    let result = loss::compute(cfg, &partition, frozen_margins)?;
    Ok((result, partition, pass))
}

/// Parameter gradients of an episode loss, given its similarity gradients.
pub fn backprop_episode(
    params: &MlpParams,
    grads: &[SimGrad],
    pass: &EpisodePass,
) -> Result<ParamGrads> {
    let (d_query, d_support) = head_backward(grads, &pass.protos, &pass.query, &pass.support)?;
    let embeddings: Vec<UnitVector> = pass.support.iter().chain(&pass.query).cloned().collect();
    let d_embeddings: Vec<Vec<f64>> = d_support.into_iter().chain(d_query).collect();
    params.backward(&pass.cache, &embeddings, &d_embeddings)
}

/// Loss value and parameter gradients for one episode.
pub fn episode_gradients(params: &MlpParams, episode: &Episode, cfg: &LossConfig) -> Result<(f64, ParamGrads)> {
    let (result, _, pass) = episode_loss(params, episode, cfg, None)?;
    let grads = backprop_episode(params, &result.grads, &pass)?;
    Ok((result.value, grads))
}

/// Predicted episode label of every query: the prototype with the highest
/// cosine, lowest index on ties.
pub fn predict(protos: &PrototypeSet, query: &[UnitVector]) -> Vec<usize> {
    query
        .iter()
        .map(|q| {
            let mut best = 0;
            let mut best_sim = f64::NEG_INFINITY;
            for (j, c) in protos.protos.iter().enumerate() {
                let s = dot(c.as_slice(), q.as_slice()).clamp(-1.0, 1.0);
                if s > best_sim {
                    best = j;
                    best_sim = s;
                }
            }
            best
        })
        .collect()
}
