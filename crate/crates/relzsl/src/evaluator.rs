//! Conventional and generalized zero-shot evaluation plus top-k scoring.
//!
//! Classification maps every candidate class embedding through the
//! encoder once, then ranks candidates by cosine similarity against the
//! (standardized) query feature. All evaluation flows through one
//! [`Scorer`] so that prediction, top-k ranking, and the semantic report
//! cannot drift apart. Accuracies are per-class top-1 averaged without
//! sample weighting; argmax ties break toward the smallest class id.

use rayon::prelude::*;
use std::fmt::Write as _;

use crate::checkpoint::NormStats;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::Network;
use crate::numkit::{standardize_apply, Matrix};
use crate::relations::cosine;

/// Candidate class embeddings mapped into visual space, ready to score
/// raw features. Encoding happens once at construction.
pub struct Scorer {
    mapped: Matrix,
    candidates: Vec<usize>,
    feature_stats: crate::numkit::ColumnStats,
}

impl Scorer {
    pub fn new(
        net: &Network,
        stats: &NormStats,
        class_embeddings: &Matrix,
        candidates: &[usize],
    ) -> Result<Scorer> {
        if candidates.is_empty() {
            return Err(Error::EmptyInput("candidate class set"));
        }
        for &c in candidates {
            if c >= class_embeddings.rows() {
                return Err(Error::DataViolation(format!(
                    "candidate class {c} has no embedding ({} available)",
                    class_embeddings.rows()
                )));
            }
        }
        let rows: Vec<Vec<f64>> = candidates
            .iter()
            .map(|&c| class_embeddings.row(c).to_vec())
            .collect();
        let raw = Matrix::from_rows(&rows)?;
        let standardized = standardize_apply(&raw, &stats.attributes)?;
        let mapped = net.encode(&standardized)?.output().clone();
        Ok(Scorer {
            mapped,
            candidates: candidates.to_vec(),
            feature_stats: stats.features.clone(),
        })
    }

    pub fn candidates(&self) -> &[usize] {
        &self.candidates
    }

    /// Cosine score of the raw feature against every candidate, in
    /// candidate order.
    pub fn scores(&self, feature_raw: &[f64]) -> Result<Vec<f64>> {
        let x = Matrix::from_rows(&[feature_raw.to_vec()])?;
        let x = standardize_apply(&x, &self.feature_stats)?;
        (0..self.candidates.len())
            .map(|i| cosine(self.mapped.row(i), x.row(0)))
            .collect()
    }

    /// Scores sorted best-first; ties ordered by ascending class id.
    pub fn ranked(&self, feature_raw: &[f64]) -> Result<Vec<(usize, f64)>> {
        let scores = self.scores(feature_raw)?;
        let mut ranked: Vec<(usize, f64)> = self
            .candidates
            .iter()
            .copied()
            .zip(scores)
            .collect();
        ranked.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .expect("scores are finite")
                .then(a.0.cmp(&b.0))
        });
        Ok(ranked)
    }
}

/// Highest-scoring candidate class for a raw feature.
pub fn predict(scorer: &Scorer, feature_raw: &[f64]) -> Result<usize> {
    let scores = scorer.scores(feature_raw)?;
    let mut best: Option<(usize, f64)> = None;
    for (&class, &score) in scorer.candidates().iter().zip(&scores) {
        let better = match best {
            None => true,
            Some((bc, bs)) => score > bs || (score == bs && class < bc),
        };
        if better {
            best = Some((class, score));
        }
    }
    Ok(best.expect("nonempty candidates").0)
}

/// Per-class accuracies and their unweighted mean. Classes from the
/// requested set that had no samples are excluded and listed.
#[derive(Clone, Debug, PartialEq)]
pub struct PerClassAccuracy {
    pub per_class: Vec<(usize, f64)>,
    pub mean: f64,
    pub excluded: Vec<usize>,
}

/// Averages top-1 hits per class, then over classes. `sample_labels` and
/// `predictions` run parallel to each other.
pub fn per_class_top1(
    sample_labels: &[usize],
    predictions: &[usize],
    classes: &[usize],
) -> Result<PerClassAccuracy> {
    if sample_labels.len() != predictions.len() {
        return Err(Error::shape(
            "per-class accuracy",
            format!(
                "{} labels vs {} predictions",
                sample_labels.len(),
                predictions.len()
            ),
        ));
    }
    if classes.is_empty() {
        return Err(Error::EmptyInput("class set for per-class accuracy"));
    }
    let mut per_class = Vec::new();
    let mut excluded = Vec::new();
    for &c in classes {
        let mut hits = 0usize;
        let mut total = 0usize;
        for (&l, &p) in sample_labels.iter().zip(predictions) {
            if l == c {
                total += 1;
                hits += usize::from(p == c);
            }
        }
        if total == 0 {
            excluded.push(c);
        } else {
            per_class.push((c, hits as f64 / total as f64));
        }
    }
    if per_class.is_empty() {
        return Err(Error::EmptyInput("no class in the set has any samples"));
    }
    if !excluded.is_empty() {
        log::warn!(
            "{} classes had no test samples and are excluded from the per-class mean",
            excluded.len()
        );
    }
    let mean = per_class.iter().map(|(_, a)| a).sum::<f64>() / per_class.len() as f64;
    Ok(PerClassAccuracy {
        per_class,
        mean,
        excluded,
    })
}

pub fn harmonic_mean(ts: f64, tr: f64) -> f64 {
    if ts + tr > 0.0 {
        2.0 * ts * tr / (ts + tr)
    } else {
        0.0
    }
}

fn predict_split(scorer: &Scorer, ds: &Dataset, samples: &[usize]) -> Result<Vec<usize>> {
    // ordered collect keeps the result identical for any worker count
    samples
        .par_iter()
        .map(|&i| predict(scorer, ds.features.row(i)))
        .collect()
}

fn split_labels(ds: &Dataset, samples: &[usize]) -> Vec<usize> {
    samples.iter().map(|&i| ds.labels[i]).collect()
}

/// Unseen-class accuracy with candidates restricted to unseen classes.
pub fn evaluate_conventional(
    net: &Network,
    stats: &NormStats,
    ds: &Dataset,
) -> Result<PerClassAccuracy> {
    if ds.splits.test_unseen.is_empty() {
        return Err(Error::EmptyInput("unseen test split"));
    }
    let scorer = Scorer::new(net, stats, &ds.class_embeddings, &ds.unseen)?;
    let predictions = predict_split(&scorer, ds, &ds.splits.test_unseen)?;
    per_class_top1(
        &split_labels(ds, &ds.splits.test_unseen),
        &predictions,
        &ds.unseen,
    )
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneralizedOutcome {
    pub ts: PerClassAccuracy,
    pub tr: PerClassAccuracy,
    pub harmonic: f64,
}

/// Generalized protocol: both test pools score against the union of
/// seen and unseen candidates; ts averages over unseen classes, tr over
/// seen classes, and the harmonic mean balances the two.
pub fn evaluate_generalized(
    net: &Network,
    stats: &NormStats,
    ds: &Dataset,
) -> Result<GeneralizedOutcome> {
    if ds.splits.test_unseen.is_empty() {
        return Err(Error::EmptyInput("unseen test split"));
    }
    if ds.splits.test_seen.is_empty() {
        return Err(Error::EmptyInput("seen test split"));
    }
    let mut all: Vec<usize> = ds.seen.iter().chain(&ds.unseen).copied().collect();
    all.sort_unstable();
    let scorer = Scorer::new(net, stats, &ds.class_embeddings, &all)?;
    let ts_pred = predict_split(&scorer, ds, &ds.splits.test_unseen)?;
    let ts = per_class_top1(
        &split_labels(ds, &ds.splits.test_unseen),
        &ts_pred,
        &ds.unseen,
    )?;
    let tr_pred = predict_split(&scorer, ds, &ds.splits.test_seen)?;
    let tr = per_class_top1(&split_labels(ds, &ds.splits.test_seen), &tr_pred, &ds.seen)?;
    let harmonic = harmonic_mean(ts.mean, tr.mean);
    Ok(GeneralizedOutcome { ts, tr, harmonic })
}

/// Per-class average of hit-within-top-k over the unseen test split,
/// candidates restricted to unseen classes.
pub fn topk_accuracy(net: &Network, stats: &NormStats, ds: &Dataset, k: usize) -> Result<f64> {
    if ds.splits.test_unseen.is_empty() {
        return Err(Error::EmptyInput("unseen test split"));
    }
    let scorer = Scorer::new(net, stats, &ds.class_embeddings, &ds.unseen)?;
    if k == 0 || k > scorer.candidates().len() {
        return Err(Error::InvalidConfig(format!(
            "top-k needs 1 <= k <= {} candidates, got {k}",
            scorer.candidates().len()
        )));
    }
    let hits: Vec<bool> = ds
        .splits
        .test_unseen
        .par_iter()
        .map(|&i| {
            let ranked = scorer.ranked(ds.features.row(i))?;
            Ok(ranked[..k].iter().any(|&(c, _)| c == ds.labels[i]))
        })
        .collect::<Result<_>>()?;
    let labels = split_labels(ds, &ds.splits.test_unseen);
    let as_predictions: Vec<usize> = labels
        .iter()
        .zip(&hits)
        // encode hit/miss as matching or non-matching prediction so the
        // per-class averaging path is shared
        .map(|(&l, &h)| if h { l } else { usize::MAX })
        .collect();
    Ok(per_class_top1(&labels, &as_predictions, &ds.unseen)?.mean)
}

/// Per-class top-1 accuracy on the validation split, candidates being
/// the classes present in that split. Used for model selection and
/// hyperparameter search.
pub fn validation_accuracy(net: &Network, stats: &NormStats, ds: &Dataset) -> Result<f64> {
    if ds.splits.val.is_empty() {
        return Err(Error::MissingValidation(
            "validation split required for this operation",
        ));
    }
    let mut classes = split_labels(ds, &ds.splits.val);
    classes.sort_unstable();
    classes.dedup();
    let scorer = Scorer::new(net, stats, &ds.class_embeddings, &classes)?;
    let predictions = predict_split(&scorer, ds, &ds.splits.val)?;
    Ok(per_class_top1(&split_labels(ds, &ds.splits.val), &predictions, &classes)?.mean)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalReport {
    pub conventional: Option<PerClassAccuracy>,
    pub generalized: Option<GeneralizedOutcome>,
    pub topk: Vec<(usize, f64)>,
}

impl EvalReport {
    /// One `metric = value` line per computed metric.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        if let Some(conv) = &self.conventional {
            let _ = writeln!(out, "zsl_acc = {}", conv.mean);
        }
        if let Some(gen) = &self.generalized {
            let _ = writeln!(out, "ts = {}", gen.ts.mean);
            let _ = writeln!(out, "tr = {}", gen.tr.mean);
            let _ = writeln!(out, "harmonic = {}", gen.harmonic);
        }
        for (k, acc) in &self.topk {
            let _ = writeln!(out, "top{k}_acc = {acc}");
        }
        out
    }

    /// Per-class accuracy table: `setting,class,accuracy`.
    pub fn render_per_class_csv(&self) -> String {
        let mut out = String::from("setting,class,accuracy\n");
        let mut push = |setting: &str, acc: &PerClassAccuracy| {
            for (class, a) in &acc.per_class {
                let _ = writeln!(out, "{setting},{class},{a}");
            }
        };
        if let Some(conv) = &self.conventional {
            push("conventional", conv);
        }
        if let Some(gen) = &self.generalized {
            push("ts", &gen.ts);
            push("tr", &gen.tr);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SynthConfig};
    use crate::model::build_network;
    use crate::numkit::{ColumnStats, Rng};

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

    fn toy_setup(c: usize, seed: u64) -> (Network, NormStats, Matrix) {
        let mut rng = Rng::new(seed);
        let net = build_network(4, 6, &[8], &mut rng).unwrap();
        let emb = Matrix::from_vec(c, 4, (0..c * 4).map(|_| rng.uniform(-1.0, 1.0)).collect())
            .unwrap();
        (net, identity_stats(6, 4), emb)
    }

    #[test]
    fn single_candidate_always_wins() {
        let (net, stats, emb) = toy_setup(3, 1);
        let scorer = Scorer::new(&net, &stats, &emb, &[2]).unwrap();
        assert_eq!(predict(&scorer, &[0.3; 6]).unwrap(), 2);
    }

    #[test]
    fn exact_mapped_embedding_scores_one_and_wins() {
        let (net, stats, emb) = toy_setup(4, 2);
        let all = [0, 1, 2, 3];
        let scorer = Scorer::new(&net, &stats, &emb, &all).unwrap();
        // with identity stats the mapped embedding itself is a raw query
        let mapped = net.encode(&emb).unwrap().output().clone();
        for c in 0..4 {
            let scores = scorer.scores(mapped.row(c)).unwrap();
            assert!((scores[c] - 1.0).abs() < 1e-12);
            assert_eq!(predict(&scorer, mapped.row(c)).unwrap(), c);
        }
    }

    #[test]
    fn predictions_match_brute_force_over_random_queries() {
        let (net, stats, emb) = toy_setup(5, 3);
        let all = [0, 1, 2, 3, 4];
        let scorer = Scorer::new(&net, &stats, &emb, &all).unwrap();
        let mapped = net.encode(&emb).unwrap().output().clone();
        let mut rng = Rng::new(9);
        for _ in 0..100 {
            let x: Vec<f64> = (0..6).map(|_| rng.uniform(-2.0, 2.0)).collect();
            let got = predict(&scorer, &x).unwrap();
            let mut best = (usize::MAX, f64::NEG_INFINITY);
            for c in 0..5 {
                let s = cosine(mapped.row(c), &x).unwrap();
                if s > best.1 {
                    best = (c, s);
                }
            }
            assert_eq!(got, best.0);
        }
    }

    #[test]
    fn prediction_ignores_positive_scaling_under_centered_stats() {
        let (net, stats, emb) = toy_setup(5, 4);
        let scorer = Scorer::new(&net, &stats, &emb, &[0, 1, 2, 3, 4]).unwrap();
        let mut rng = Rng::new(10);
        for _ in 0..20 {
            let x: Vec<f64> = (0..6).map(|_| rng.uniform(-2.0, 2.0)).collect();
            let scaled: Vec<f64> = x.iter().map(|v| v * 251.0).collect();
            assert_eq!(
                predict(&scorer, &x).unwrap(),
                predict(&scorer, &scaled).unwrap()
            );
        }
    }

    #[test]
    fn per_class_mean_is_unweighted() {
        // class 0: 99 samples all correct; class 1: 1 sample wrong
        let mut labels = vec![0usize; 99];
        labels.push(1);
        let mut preds = vec![0usize; 99];
        preds.push(0);
        let acc = per_class_top1(&labels, &preds, &[0, 1]).unwrap();
        assert_eq!(acc.mean, 0.5);

        let labels = [0, 0, 1, 1, 2, 2];
        let preds = [0, 0, 1, 2, 0, 1];
        let acc = per_class_top1(&labels, &preds, &[0, 1, 2]).unwrap();
        assert_eq!(acc.mean, 0.5);
        assert_eq!(acc.per_class, vec![(0, 1.0), (1, 0.5), (2, 0.0)]);

        let acc = per_class_top1(&[0, 1], &[0, 1], &[0, 1]).unwrap();
        assert_eq!(acc.mean, 1.0);
    }

    #[test]
    fn zero_sample_classes_are_excluded_with_notice() {
        let acc = per_class_top1(&[0, 0], &[0, 0], &[0, 5]).unwrap();
        assert_eq!(acc.mean, 1.0);
        assert_eq!(acc.excluded, vec![5]);
        assert!(per_class_top1(&[0], &[0], &[7]).is_err());
    }

    #[test]
    fn harmonic_mean_matches_hand_values() {
        assert!((harmonic_mean(0.2, 0.6) - 0.3).abs() < 1e-12);
        assert_eq!(harmonic_mean(0.0, 0.6), 0.0);
        assert_eq!(harmonic_mean(0.0, 0.0), 0.0);
        let ts = 0.437;
        assert!((harmonic_mean(ts, ts) - ts).abs() < 1e-12);
        // harmonic stays between the smaller and larger input
        for (a, b) in [(0.3, 0.9), (0.5, 0.1), (0.7, 0.7)] {
            let h = harmonic_mean(a, b);
            assert!(h <= a.max(b) + 1e-12);
            assert!(h + 1e-12 >= a.min(b));
        }
    }

    fn eval_dataset() -> crate::data::Dataset {
        generate_synthetic(&SynthConfig {
            classes_seen: 6,
            classes_unseen: 3,
            attr_dim: 5,
            feat_dim: 8,
            per_class: 10,
            noise: 0.02,
            seed: 11,
        })
        .unwrap()
    }

    #[test]
    fn restricted_ts_equals_conventional_exactly() {
        let ds = eval_dataset();
        let mut rng = Rng::new(30);
        let net = build_network(5, 8, &[8], &mut rng).unwrap();
        let stats = identity_stats(8, 5);
        let conv = evaluate_conventional(&net, &stats, &ds).unwrap();
        // generalized scoring restricted to unseen candidates is the
        // same computation; rerun it through the scorer path by hand
        let scorer = Scorer::new(&net, &stats, &ds.class_embeddings, &ds.unseen).unwrap();
        let preds: Vec<usize> = ds
            .splits
            .test_unseen
            .iter()
            .map(|&i| predict(&scorer, ds.features.row(i)).unwrap())
            .collect();
        let labels: Vec<usize> = ds.splits.test_unseen.iter().map(|&i| ds.labels[i]).collect();
        let ts = per_class_top1(&labels, &preds, &ds.unseen).unwrap();
        assert_eq!(ts, conv);
    }

    #[test]
    fn generalized_outcome_is_consistent() {
        let ds = eval_dataset();
        let mut rng = Rng::new(31);
        let net = build_network(5, 8, &[8], &mut rng).unwrap();
        let stats = identity_stats(8, 5);
        let gen = evaluate_generalized(&net, &stats, &ds).unwrap();
        assert!((0.0..=1.0).contains(&gen.ts.mean));
        assert!((0.0..=1.0).contains(&gen.tr.mean));
        let want = harmonic_mean(gen.ts.mean, gen.tr.mean);
        assert_eq!(gen.harmonic, want);
        assert!(gen.harmonic <= gen.ts.mean.max(gen.tr.mean) + 1e-12);
    }

    #[test]
    fn topk_is_monotone_and_saturates() {
        let ds = eval_dataset();
        let mut rng = Rng::new(32);
        let net = build_network(5, 8, &[8], &mut rng).unwrap();
        let stats = identity_stats(8, 5);
        let k_max = ds.unseen.len();
        let mut prev = 0.0;
        for k in 1..=k_max {
            let acc = topk_accuracy(&net, &stats, &ds, k).unwrap();
            assert!(acc + 1e-12 >= prev, "top-{k} {acc} below top-{} {prev}", k - 1);
            prev = acc;
        }
        assert_eq!(prev, 1.0);
        let top1 = topk_accuracy(&net, &stats, &ds, 1).unwrap();
        let conv = evaluate_conventional(&net, &stats, &ds).unwrap();
        assert_eq!(top1, conv.mean);
        assert!(topk_accuracy(&net, &stats, &ds, k_max + 1).is_err());
        assert!(topk_accuracy(&net, &stats, &ds, 0).is_err());
    }

    #[test]
    fn report_renders_every_metric_line() {
        let ds = eval_dataset();
        let mut rng = Rng::new(33);
        let net = build_network(5, 8, &[8], &mut rng).unwrap();
        let stats = identity_stats(8, 5);
        let report = EvalReport {
            conventional: Some(evaluate_conventional(&net, &stats, &ds).unwrap()),
            generalized: Some(evaluate_generalized(&net, &stats, &ds).unwrap()),
            topk: vec![(1, 0.25), (2, 0.5)],
        };
        let text = report.render_text();
        for key in ["zsl_acc = ", "ts = ", "tr = ", "harmonic = ", "top1_acc = ", "top2_acc = "] {
            assert!(text.contains(key), "missing {key:?} in {text}");
        }
        let csv = report.render_per_class_csv();
        assert!(csv.starts_with("setting,class,accuracy\n"));
        assert!(csv.contains("conventional,"));
        assert!(csv.contains("ts,"));
        assert!(csv.contains("tr,"));
    }

    #[test]
    fn missing_pools_are_reported() {
        let mut ds = eval_dataset();
        ds.splits.test_seen.clear();
        let mut rng = Rng::new(34);
        let net = build_network(5, 8, &[8], &mut rng).unwrap();
        let stats = identity_stats(8, 5);
        assert!(evaluate_conventional(&net, &stats, &ds).is_ok());
        assert!(matches!(
            evaluate_generalized(&net, &stats, &ds),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn validation_accuracy_requires_a_val_split() {
        let mut ds = eval_dataset();
        let mut rng = Rng::new(35);
        let net = build_network(5, 8, &[8], &mut rng).unwrap();
        let stats = identity_stats(8, 5);
        assert!(validation_accuracy(&net, &stats, &ds).is_ok());
        ds.splits.val.clear();
        assert!(matches!(
            validation_accuracy(&net, &stats, &ds),
            Err(Error::MissingValidation(_))
        ));
    }
}
