//! Semantic similarity between class embeddings and the three-way
//! relation taxonomy derived from it.
//!
//! Every pair of classes is either identical, similar, or dissimilar:
//! cosine similarity delta at least 1 - 1e-9 counts as identical, delta
//! in [tau, 1 - 1e-9) as similar, and anything below tau as dissimilar.
//! The threshold tau lives in (-1, 1) and can be picked on a validation
//! set via [`select_tau`].

use crate::error::{Error, Result};
use crate::numkit::{dot, l2_norm, Matrix};

/// Deltas at or above `1 - IDENTICAL_EPS` are treated as identical.
pub const IDENTICAL_EPS: f64 = 1e-9;

/// Threshold separating similar from dissimilar class pairs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RelationConfig {
    tau: f64,
}

impl RelationConfig {
    /// Validated constructor; tau must lie strictly inside (-1, 1).
    pub fn new(tau: f64) -> Result<RelationConfig> {
        if !tau.is_finite() || tau <= -1.0 || tau >= 1.0 {
            return Err(Error::InvalidConfig(format!(
                "tau must lie in (-1, 1), got {tau}"
            )));
        }
        Ok(RelationConfig { tau })
    }

    /// Skips range validation. Training variants that close the similar
    /// band push tau to 1 so that no pair classifies as similar.
    pub fn new_unchecked(tau: f64) -> RelationConfig {
        RelationConfig { tau }
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    Identical,
    Similar,
    Dissimilar,
}

/// All pairwise cosine similarities between class embeddings.
#[derive(Clone, Debug)]
pub struct SimilarityTable {
    delta: Matrix,
    collisions: Vec<(usize, usize)>,
}

impl SimilarityTable {
    pub fn get(&self, m: usize, n: usize) -> f64 {
        self.delta.get(m, n)
    }

    pub fn num_classes(&self) -> usize {
        self.delta.rows()
    }

    pub fn delta(&self) -> &Matrix {
        &self.delta
    }

    /// Distinct class pairs (m < n) whose embeddings coincide.
    pub fn collisions(&self) -> &[(usize, usize)] {
        &self.collisions
    }
}

/// Cosine similarity, clamped into [-1, 1] against rounding excursions.
pub fn cosine(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::shape(
            "cosine",
            format!("{} vs {} components", p.len(), q.len()),
        ));
    }
    let np = l2_norm(p);
    let nq = l2_norm(q);
    if np == 0.0 || nq == 0.0 {
        return Err(Error::DegenerateVector(
            "cosine of a zero-norm vector".to_string(),
        ));
    }
    Ok((dot(p, q) / (np * nq)).clamp(-1.0, 1.0))
}

/// Builds the full table of pairwise cosines, one row per class.
///
/// Each unordered pair is computed once and mirrored, so the table is
/// exactly symmetric. Distinct classes with coinciding embeddings are a
/// data defect; they are recorded and warned about, not rejected.
pub fn build_similarity_table(class_embeddings: &Matrix) -> Result<SimilarityTable> {
    let c = class_embeddings.rows();
    if c == 0 {
        return Err(Error::EmptyInput("similarity table over zero classes"));
    }
    for m in 0..c {
        if l2_norm(class_embeddings.row(m)) == 0.0 {
            return Err(Error::DegenerateVector(format!(
                "class {m} has a zero-norm embedding"
            )));
        }
    }
    let mut delta = Matrix::zeros(c, c);
    let mut collisions = Vec::new();
    for m in 0..c {
        delta.set(m, m, 1.0);
        for n in (m + 1)..c {
            let d = cosine(class_embeddings.row(m), class_embeddings.row(n))?;
            delta.set(m, n, d);
            delta.set(n, m, d);
            if d >= 1.0 - IDENTICAL_EPS {
                log::warn!("classes {m} and {n} have indistinguishable embeddings (delta {d})");
                collisions.push((m, n));
            }
        }
    }
    Ok(SimilarityTable { delta, collisions })
}

pub fn classify_relation(delta: f64, cfg: &RelationConfig) -> Relation {
    if delta >= 1.0 - IDENTICAL_EPS {
        Relation::Identical
    } else if delta >= cfg.tau {
        Relation::Similar
    } else {
        Relation::Dissimilar
    }
}

/// Picks the threshold whose validation score is highest.
///
/// `evaluate` maps a candidate tau to its validation average per-class
/// top-1 accuracy. Ties break toward the smaller candidate.
pub fn select_tau<F>(candidates: &[f64], mut evaluate: F) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    if candidates.is_empty() {
        return Err(Error::EmptyInput("tau candidates"));
    }
    let mut best: Option<(f64, f64)> = None;
    for &tau in candidates {
        let score = evaluate(tau)?;
        let better = match best {
            None => true,
            Some((best_tau, best_score)) => {
                score > best_score || (score == best_score && tau < best_tau)
            }
        };
        if better {
            best = Some((tau, score));
        }
    }
    Ok(best.expect("nonempty candidates").0)
}
