//! Approximate semantic inference: describe a feature vector whose true
//! class may have no embedding by ranking every known class against it.
//!
//! Scores come from the same [`Scorer`](crate::evaluator::Scorer) the
//! evaluator uses, so a report row always matches what `predict` would
//! have seen. Classes score similar when the cosine reaches the
//! threshold (closed at tau), dissimilar otherwise.

use std::fmt::Write as _;

use crate::checkpoint::NormStats;
use crate::error::{Error, Result};
use crate::evaluator::Scorer;
use crate::model::Network;
use crate::numkit::Matrix;

#[derive(Clone, Debug, PartialEq)]
pub struct SemanticEntry {
    pub class: usize,
    pub name: String,
    pub score: f64,
    pub similar: bool,
}

impl SemanticEntry {
    pub fn tag(&self) -> &'static str {
        if self.similar {
            "similar"
        } else {
            "dissimilar"
        }
    }
}

/// Known classes ranked by descending score (ties by ascending id),
/// optionally truncated to the strongest entries.
#[derive(Clone, Debug, PartialEq)]
pub struct SemanticReport {
    pub tau: f64,
    pub entries: Vec<SemanticEntry>,
}

pub fn semantic_report(
    net: &Network,
    stats: &NormStats,
    feature_raw: &[f64],
    class_embeddings: &Matrix,
    class_names: &[String],
    known: &[usize],
    tau: f64,
    top: Option<usize>,
) -> Result<SemanticReport> {
    if !tau.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "semantic report threshold must be finite, got {tau}"
        )));
    }
    let scorer = Scorer::new(net, stats, class_embeddings, known)?;
    let mut ranked = scorer.ranked(feature_raw)?;
    if let Some(n) = top {
        ranked.truncate(n);
    }
    let entries = ranked
        .into_iter()
        .map(|(class, score)| {
            let name = class_names
                .get(class)
                .cloned()
                .unwrap_or_else(|| format!("class_{class}"));
            SemanticEntry {
                class,
                name,
                score,
                similar: score >= tau,
            }
        })
        .collect();
    Ok(SemanticReport { tau, entries })
}

impl SemanticReport {
    /// Fixed-width table for terminal output.
    pub fn render_table(&self) -> String {
        let name_width = self
            .entries
            .iter()
            .map(|e| e.name.len())
            .max()
            .unwrap_or(4)
            .max(5);
        let mut out = String::new();
        let _ = writeln!(out, "threshold tau = {}", self.tau);
        let _ = writeln!(
            out,
            "{:>4}  {:>5}  {:<name_width$}  {:>10}  {}",
            "rank", "class", "name", "score", "tag"
        );
        for (rank, e) in self.entries.iter().enumerate() {
            let _ = writeln!(
                out,
                "{:>4}  {:>5}  {:<name_width$}  {:>10.6}  {}",
                rank + 1,
                e.class,
                e.name,
                e.score,
                e.tag()
            );
        }
        out
    }

    /// Machine-readable form: `class,score,tag` rows.
    pub fn render_csv(&self) -> String {
        let mut out = String::from("class,score,tag\n");
        for e in &self.entries {
            let _ = writeln!(out, "{},{},{}", e.class, e.score, e.tag());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_network;
    use crate::numkit::{ColumnStats, Rng};
    use crate::relations::cosine;

    fn identity_stats(feat_dim: usize, attr_dim: usize) -> NormStats {
        NormStats {
            features: ColumnStats {
                mean: vec![0.0; feat_dim],
                std: vec![1.0; feat_dim],
            },
            attributes: ColumnStats {
                mean: vec![0.0; attr_dim],
                std: vec![1.0; attr_dim],
            },
        }
    }

    fn setup(c: usize, seed: u64) -> (Network, NormStats, Matrix, Vec<String>) {
        let mut rng = Rng::new(seed);
        let net = build_network(3, 5, &[8], &mut rng).unwrap();
        let emb =
            Matrix::from_vec(c, 3, (0..c * 3).map(|_| rng.uniform(-1.0, 1.0)).collect()).unwrap();
        let names = (0..c).map(|i| format!("cls{i}")).collect();
        (net, identity_stats(5, 3), emb, names)
    }

    #[test]
    fn own_mapped_embedding_ranks_first_with_unit_score() {
        let (net, stats, emb, names) = setup(4, 1);
        let known = [0, 1, 2, 3];
        let mapped = net.encode(&emb).unwrap().output().clone();
        for c in 0..4 {
            let report = semantic_report(
                &net,
                &stats,
                mapped.row(c),
                &emb,
                &names,
                &known,
                0.0,
                None,
            )
            .unwrap();
            assert_eq!(report.entries[0].class, c);
            assert!((report.entries[0].score - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn tau_one_tags_everything_dissimilar() {
        let (net, stats, emb, names) = setup(4, 2);
        let report =
            semantic_report(&net, &stats, &[0.4, -0.2, 0.9, 0.1, -0.5], &emb, &names, &[0, 1, 2, 3], 1.0, None)
                .unwrap();
        assert!(report.entries.iter().all(|e| !e.similar));
        // and a floor threshold tags everything similar
        let report =
            semantic_report(&net, &stats, &[0.4, -0.2, 0.9, 0.1, -0.5], &emb, &names, &[0, 1, 2, 3], -1.0, None)
                .unwrap();
        assert!(report.entries.iter().all(|e| e.similar));
    }

    #[test]
    fn scores_match_a_direct_cosine_recomputation() {
        let (net, stats, emb, names) = setup(4, 3);
        let mapped = net.encode(&emb).unwrap().output().clone();
        // query built near classes 0 and 1: sum of their unit directions
        let m0 = mapped.row(0);
        let m1 = mapped.row(1);
        let n0 = crate::numkit::l2_norm(m0);
        let n1 = crate::numkit::l2_norm(m1);
        let x: Vec<f64> = (0..5).map(|i| m0[i] / n0 + m1[i] / n1).collect();
        // threshold between the second and third ranked score isolates
        // exactly the two constructed neighbours
        let mut scores: Vec<f64> = (0..4).map(|c| cosine(mapped.row(c), &x).unwrap()).collect();
        let report =
            semantic_report(&net, &stats, &x, &emb, &names, &[0, 1, 2, 3], 0.0, None).unwrap();
        for e in &report.entries {
            assert_eq!(e.score, scores[e.class], "class {}", e.class);
        }
        scores.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let tau = 0.5 * (scores[1] + scores[2]);
        let report =
            semantic_report(&net, &stats, &x, &emb, &names, &[0, 1, 2, 3], tau, None).unwrap();
        let similar: Vec<usize> = report
            .entries
            .iter()
            .filter(|e| e.similar)
            .map(|e| e.class)
            .collect();
        let mut similar_sorted = similar.clone();
        similar_sorted.sort_unstable();
        assert_eq!(similar_sorted, vec![0, 1]);
    }

    #[test]
    fn entries_sort_descending_with_id_breaking_ties() {
        let (net, stats, _, names) = setup(3, 4);
        // rows 0 and 2 identical, so their scores tie bitwise
        let emb = Matrix::from_rows(&[
            vec![0.3, -0.4, 0.8],
            vec![-0.9, 0.2, 0.1],
            vec![0.3, -0.4, 0.8],
        ])
        .unwrap();
        let report =
            semantic_report(&net, &stats, &[1.0, 0.2, -0.3, 0.5, 0.7], &emb, &names, &[0, 1, 2], 0.0, None)
                .unwrap();
        for pair in report.entries.windows(2) {
            assert!(
                pair[0].score > pair[1].score
                    || (pair[0].score == pair[1].score && pair[0].class < pair[1].class)
            );
        }
        let tied: Vec<usize> = report
            .entries
            .iter()
            .filter(|e| e.score == report.entries.iter().find(|f| f.class == 0).unwrap().score)
            .map(|e| e.class)
            .collect();
        assert_eq!(tied, vec![0, 2]);
    }

    #[test]
    fn truncation_keeps_the_strongest_prefix() {
        let (net, stats, emb, names) = setup(5, 5);
        let x = [0.2, 0.8, -0.1, 0.4, -0.6];
        let full = semantic_report(&net, &stats, &x, &emb, &names, &[0, 1, 2, 3, 4], 0.0, None)
            .unwrap();
        let cut = semantic_report(&net, &stats, &x, &emb, &names, &[0, 1, 2, 3, 4], 0.0, Some(2))
            .unwrap();
        assert_eq!(cut.entries.len(), 2);
        assert_eq!(cut.entries[..], full.entries[..2]);
        let wide = semantic_report(&net, &stats, &x, &emb, &names, &[0, 1, 2, 3, 4], 0.0, Some(99))
            .unwrap();
        assert_eq!(wide.entries.len(), 5);
    }

    #[test]
    fn tags_partition_the_known_set() {
        let (net, stats, emb, names) = setup(6, 6);
        let known = [0, 1, 2, 3, 4, 5];
        for tau in [-0.5, 0.0, 0.3] {
            let report =
                semantic_report(&net, &stats, &[0.1, -0.7, 0.3, 0.9, 0.2], &emb, &names, &known, tau, None)
                    .unwrap();
            assert_eq!(report.entries.len(), known.len());
            for e in &report.entries {
                assert!((-1.0..=1.0).contains(&e.score));
                assert_eq!(e.similar, e.score >= tau);
            }
        }
    }

    #[test]
    fn renders_table_and_csv() {
        let (net, stats, emb, names) = setup(3, 7);
        let report =
            semantic_report(&net, &stats, &[0.5, 0.1, -0.2, 0.7, 0.0], &emb, &names, &[0, 1, 2], 0.0, None)
                .unwrap();
        let table = report.render_table();
        assert!(table.contains("rank"));
        assert!(table.contains("cls0"));
        let csv = report.render_csv();
        assert!(csv.starts_with("class,score,tag\n"));
        assert_eq!(csv.lines().count(), 4);
        for line in csv.lines().skip(1) {
            let fields: Vec<&str> = line.split(',').collect();
            assert_eq!(fields.len(), 3);
            assert!(fields[2] == "similar" || fields[2] == "dissimilar");
        }
    }

    #[test]
    fn empty_known_set_is_rejected() {
        let (net, stats, emb, names) = setup(3, 8);
        assert!(matches!(
            semantic_report(&net, &stats, &[0.0; 5], &emb, &names, &[], 0.0, None),
            Err(Error::EmptyInput(_))
        ));
        assert!(semantic_report(
            &net,
            &stats,
            &[0.1; 5],
            &emb,
            &names,
            &[0],
            f64::NAN,
            None
        )
        .is_err());
    }
}
