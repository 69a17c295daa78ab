//! Online hard-tuple mining.
//!
//! For each reference sample the miner draws a same-class feature at
//! random, then samples `p` candidates from similar-class samples and
//! `p` from dissimilar-class samples, keeping the candidate with the
//! highest loss contribution. Classes with an empty similar or
//! dissimilar pool are legal; the corresponding tuple member is simply
//! absent and the loss term is skipped downstream.

use crate::error::{Error, Result};
use crate::numkit::{dot, l2_norm, Matrix, Rng};
use crate::objectives::{MinedCandidate, Quadruplet};
use crate::relations::{classify_relation, Relation, RelationConfig, SimilarityTable};

#[derive(Clone, Debug)]
pub struct MinerConfig {
    /// Candidates drawn per relation pool.
    pub pool_size: usize,
}

impl MinerConfig {
    pub fn new(pool_size: usize) -> Result<MinerConfig> {
        if pool_size == 0 {
            return Err(Error::InvalidConfig(
                "candidate pool size must be at least 1".to_string(),
            ));
        }
        Ok(MinerConfig { pool_size })
    }
}

impl Default for MinerConfig {
    fn default() -> MinerConfig {
        MinerConfig { pool_size: 50 }
    }
}

/// Per-class sample lists plus, for each class, the flattened sample
/// pools of its similar and dissimilar classes. The three class groups
/// (self, similar, dissimilar) partition the classes present in the
/// label set.
#[derive(Clone, Debug)]
pub struct ClassIndex {
    samples_by_class: Vec<Vec<usize>>,
    similar_pool: Vec<Vec<usize>>,
    dissimilar_pool: Vec<Vec<usize>>,
    similar_classes: Vec<Vec<usize>>,
    dissimilar_classes: Vec<Vec<usize>>,
    /// Classes lacking a similar or dissimilar pool, by kind.
    empty_similar: Vec<usize>,
    empty_dissimilar: Vec<usize>,
}

impl ClassIndex {
    pub fn samples_of(&self, class: usize) -> &[usize] {
        &self.samples_by_class[class]
    }

    pub fn similar_classes(&self, class: usize) -> &[usize] {
        &self.similar_classes[class]
    }

    pub fn dissimilar_classes(&self, class: usize) -> &[usize] {
        &self.dissimilar_classes[class]
    }

    pub fn empty_similar(&self) -> &[usize] {
        &self.empty_similar
    }

    pub fn empty_dissimilar(&self) -> &[usize] {
        &self.empty_dissimilar
    }
}

/// Groups training samples by class and splits the other classes of
/// each class into similar and dissimilar pools under `cfg`.
///
/// `labels[i]` is the class of training sample `i`; `present` lists the
/// classes that participate (typically the seen classes). Every present
/// class must have at least one sample.
pub fn build_class_index(
    labels: &[usize],
    present: &[usize],
    table: &SimilarityTable,
    cfg: &RelationConfig,
) -> Result<ClassIndex> {
    let c = table.num_classes();
    let mut samples_by_class = vec![Vec::new(); c];
    for (i, &l) in labels.iter().enumerate() {
        if l >= c {
            return Err(Error::DataViolation(format!(
                "label {l} out of range for {c} classes"
            )));
        }
        samples_by_class[l].push(i);
    }
    for &cl in present {
        if cl >= c {
            return Err(Error::DataViolation(format!(
                "class {cl} out of range for {c} classes"
            )));
        }
        if samples_by_class[cl].is_empty() {
            return Err(Error::DataViolation(format!(
                "class {cl} has no training samples"
            )));
        }
    }
    let mut similar_pool = vec![Vec::new(); c];
    let mut dissimilar_pool = vec![Vec::new(); c];
    let mut similar_classes = vec![Vec::new(); c];
    let mut dissimilar_classes = vec![Vec::new(); c];
    let mut empty_similar = Vec::new();
    let mut empty_dissimilar = Vec::new();
    for &m in present {
        for &n in present {
            if m == n {
                continue;
            }
            match classify_relation(table.get(m, n), cfg) {
                // embedding collisions across distinct classes fall into
                // the similar pool; the table already warned about them
                Relation::Similar | Relation::Identical => {
                    similar_classes[m].push(n);
                    similar_pool[m].extend_from_slice(&samples_by_class[n]);
                }
                Relation::Dissimilar => {
                    dissimilar_classes[m].push(n);
                    dissimilar_pool[m].extend_from_slice(&samples_by_class[n]);
                }
            }
        }
        if similar_pool[m].is_empty() {
            empty_similar.push(m);
        }
        if dissimilar_pool[m].is_empty() {
            empty_dissimilar.push(m);
        }
    }
    if !empty_similar.is_empty() {
        log::warn!(
            "{} of {} classes have no similar class under tau {}; their band terms are skipped",
            empty_similar.len(),
            present.len(),
            cfg.tau()
        );
    }
    if !empty_dissimilar.is_empty() {
        log::warn!(
            "{} of {} classes have no dissimilar class under tau {}; their push terms are skipped",
            empty_dissimilar.len(),
            present.len(),
            cfg.tau()
        );
    }
    Ok(ClassIndex {
        samples_by_class,
        similar_pool,
        dissimilar_pool,
        similar_classes,
        dissimilar_classes,
        empty_similar,
        empty_dissimilar,
    })
}

/// Draws `k` indices uniformly from `pool`: without replacement when the
/// pool is large enough, with replacement otherwise.
fn draw_candidates(pool: &[usize], k: usize, rng: &mut Rng) -> Vec<usize> {
    if pool.len() <= k {
        // with replacement; also covers pool.len() == k (order varies,
        // argmax does not care)
        return (0..k).map(|_| pool[rng.index(pool.len())]).collect();
    }
    // Floyd's algorithm: k distinct indices, O(k) draws
    let mut chosen: Vec<usize> = Vec::with_capacity(k);
    for j in (pool.len() - k)..pool.len() {
        let t = rng.index(j + 1);
        if chosen.contains(&pool[t]) {
            chosen.push(pool[j]);
        } else {
            chosen.push(pool[t]);
        }
    }
    chosen
}

/// Record of the candidate draws behind one mined tuple, so selections
/// can be audited against the exact pools that were scored.
#[derive(Clone, Debug, Default)]
pub struct MiningTrace {
    /// Train-local index of the same-class feature.
    pub same_index: usize,
    pub similar_draws: Vec<usize>,
    pub similar_pick: Option<usize>,
    pub dissimilar_draws: Vec<usize>,
    pub dissimilar_pick: Option<usize>,
}

/// Mines the hardest tuple for one reference sample.
///
/// `reference_embedding` is the (standardized) class embedding of the
/// reference sample's class, `mapped` is the current encoder output for
/// it, `features` holds the standardized training features row-per-
/// sample, and `labels` gives each sample's class. The similar candidate
/// maximizes the band penalty; the dissimilar candidate maximizes the
/// weighted push term `(tau - delta_kr) * s(f, x_k)`. Scores use the
/// parameter snapshot the caller encoded with, so mining within a batch
/// is consistent.
#[allow(clippy::too_many_arguments)]
pub fn mine_quadruplet(
    reference_class: usize,
    reference_embedding: &[f64],
    mapped: &[f64],
    features: &Matrix,
    labels: &[usize],
    index: &ClassIndex,
    table: &SimilarityTable,
    cfg: &MinerConfig,
    relation_cfg: &RelationConfig,
    want_similar: bool,
    rng: &mut Rng,
) -> Result<Quadruplet> {
    Ok(mine_quadruplet_traced(
        reference_class,
        reference_embedding,
        mapped,
        features,
        labels,
        index,
        table,
        cfg,
        relation_cfg,
        want_similar,
        rng,
    )?
    .0)
}

/// Same as [`mine_quadruplet`] but also returns which candidates were
/// drawn and picked. Consumes the RNG identically.
#[allow(clippy::too_many_arguments)]
pub fn mine_quadruplet_traced(
    reference_class: usize,
    reference_embedding: &[f64],
    mapped: &[f64],
    features: &Matrix,
    labels: &[usize],
    index: &ClassIndex,
    table: &SimilarityTable,
    cfg: &MinerConfig,
    relation_cfg: &RelationConfig,
    want_similar: bool,
    rng: &mut Rng,
) -> Result<(Quadruplet, MiningTrace)> {
    let own = index.samples_of(reference_class);
    if own.is_empty() {
        return Err(Error::DataViolation(format!(
            "class {reference_class} has no training samples"
        )));
    }
    let norm_f = l2_norm(mapped);
    if norm_f == 0.0 {
        return Err(Error::DegenerateVector(
            "mapped reference embedding has zero norm during mining".to_string(),
        ));
    }
    let score = |x: &[f64]| -> Result<f64> {
        let nx = l2_norm(x);
        if nx == 0.0 {
            return Err(Error::DegenerateVector(
                "zero-norm feature during mining".to_string(),
            ));
        }
        Ok(dot(mapped, x) / (norm_f * nx))
    };

    let mut trace = MiningTrace::default();
    let same_idx = own[rng.index(own.len())];
    trace.same_index = same_idx;
    let same_class_feature = features.row(same_idx).to_vec();

    let tau = relation_cfg.tau();
    let mut similar = None;
    if want_similar {
        let pool = &index.similar_pool[reference_class];
        if !pool.is_empty() {
            trace.similar_draws = draw_candidates(pool, cfg.pool_size, rng);
            let mut best: Option<(f64, usize)> = None;
            for &cand in &trace.similar_draws {
                let delta = table.get(reference_class, labels[cand]);
                let s = score(features.row(cand))?;
                let penalty = (tau - s).max(0.0) + (s - delta).max(0.0);
                if best.map_or(true, |(b, _)| penalty > b) {
                    best = Some((penalty, cand));
                }
            }
            let (_, cand) = best.expect("nonempty candidate draw");
            trace.similar_pick = Some(cand);
            similar = Some(MinedCandidate {
                feature: features.row(cand).to_vec(),
                class_similarity: table.get(reference_class, labels[cand]),
            });
        }
    }

    let mut dissimilar = None;
    {
        let pool = &index.dissimilar_pool[reference_class];
        if !pool.is_empty() {
            trace.dissimilar_draws = draw_candidates(pool, cfg.pool_size, rng);
            let mut best: Option<(f64, usize)> = None;
            for &cand in &trace.dissimilar_draws {
                let delta = table.get(reference_class, labels[cand]);
                let push = (tau - delta) * score(features.row(cand))?;
                if best.map_or(true, |(b, _)| push > b) {
                    best = Some((push, cand));
                }
            }
            let (_, cand) = best.expect("nonempty candidate draw");
            trace.dissimilar_pick = Some(cand);
            dissimilar = Some(MinedCandidate {
                feature: features.row(cand).to_vec(),
                class_similarity: table.get(reference_class, labels[cand]),
            });
        }
    }

    let quad = Quadruplet {
        reference_embedding: reference_embedding.to_vec(),
        same_class_feature,
        similar,
        dissimilar,
    };
    Ok((quad, trace))
}
