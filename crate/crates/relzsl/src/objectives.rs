//! Loss terms and their hand-derived gradients.
//!
//! The training objective per mined tuple combines three terms: a
//! contrast term that pulls the mapped embedding toward a feature of its
//! own class and pushes it from a dissimilar-class feature, a band term
//! that keeps the score of a similar-class feature inside
//! [tau, delta_jr], and a squared reconstruction error from the decoder.
//! The batch loss is the mean over tuples of
//! `contrast + lambda1 * band + lambda2 * reconstruction`; the mean
//! applies to the whole sum so the lambdas stay scale-free in the batch
//! size.
//!
//! Baseline variants swap parts out: `MseRecons` replaces the two cosine
//! terms with a squared alignment error, `NoSimilar` drops the band term
//! (the miner sees no similar classes once tau is pushed to 1), and
//! `NoRecons` drops the decoder entirely.

use crate::error::{Error, Result};
use crate::model::{backward_stack, BackwardOutput, Network, NetGrads};
use crate::numkit::{dot, l2_norm, relu as positive_part, squared_distance, Matrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BaselineMode {
    Proposed,
    /// Squared-error alignment instead of the cosine contrast and band.
    MseRecons,
    /// Similar band disabled; every non-identical class mined dissimilar.
    NoSimilar,
    /// Reconstruction disabled; decoder left untouched.
    NoRecons,
}

impl BaselineMode {
    /// Whether the decoder participates in training under this mode.
    pub fn uses_decoder(&self) -> bool {
        !matches!(self, BaselineMode::NoRecons)
    }

    /// Whether mining should look for similar-class candidates.
    pub fn uses_similar(&self) -> bool {
        matches!(self, BaselineMode::Proposed)
    }

    /// Stable name used in config files and on the command line.
    pub fn name(&self) -> &'static str {
        match self {
            BaselineMode::Proposed => "proposed",
            BaselineMode::MseRecons => "b1",
            BaselineMode::NoSimilar => "b2",
            BaselineMode::NoRecons => "b3",
        }
    }

    pub fn from_name(name: &str) -> Option<BaselineMode> {
        match name {
            "proposed" => Some(BaselineMode::Proposed),
            "b1" => Some(BaselineMode::MseRecons),
            "b2" => Some(BaselineMode::NoSimilar),
            "b3" => Some(BaselineMode::NoRecons),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
}

impl LossWeights {
    pub fn new(lambda1: f64, lambda2: f64) -> Result<LossWeights> {
        if !(lambda1 >= 0.0 && lambda2 >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "loss weights must be nonnegative, got lambda1={lambda1} lambda2={lambda2}"
            )));
        }
        Ok(LossWeights { lambda1, lambda2 })
    }
}

/// A feature mined from a related class, along with the cosine
/// similarity between that class and the reference class.
#[derive(Clone, Debug)]
pub struct MinedCandidate {
    pub feature: Vec<f64>,
    pub class_similarity: f64,
}

/// One training tuple: the reference class embedding, a feature of the
/// same class, and optionally the mined similar and dissimilar features.
/// Absent members mean the reference class simply has no such classes
/// under the current threshold; the corresponding terms are skipped.
#[derive(Clone, Debug)]
pub struct Quadruplet {
    pub reference_embedding: Vec<f64>,
    pub same_class_feature: Vec<f64>,
    pub similar: Option<MinedCandidate>,
    pub dissimilar: Option<MinedCandidate>,
}

/// Batch-mean loss values. `contrast` carries the alignment term, which
/// is the squared error under `MseRecons`. `total` equals
/// `contrast + lambda1 * similar_band + lambda2 * reconstruction` for
/// the effective weights of the active mode. The skip counters say how
/// many tuples lacked a similar or dissimilar member.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossBreakdown {
    pub contrast: f64,
    pub similar_band: f64,
    pub reconstruction: f64,
    pub total: f64,
    pub skipped_similar: usize,
    pub skipped_dissimilar: usize,
}

/// Unclamped cosine and its gradient with respect to `p`:
/// `ds/dp = q / (|p||q|) - s * p / |p|^2`. The gradient is orthogonal
/// to `p`, so pure rescaling of the mapped embedding is never rewarded.
fn cosine_with_grad(p: &[f64], q: &[f64]) -> Result<(f64, Vec<f64>)> {
    let np = l2_norm(p);
    let nq = l2_norm(q);
    if np == 0.0 || nq == 0.0 {
        return Err(Error::DegenerateVector(
            "cosine of a zero-norm vector in loss evaluation".to_string(),
        ));
    }
    let s = dot(p, q) / (np * nq);
    let grad = p
        .iter()
        .zip(q)
        .map(|(pi, qi)| qi / (np * nq) - s * pi / (np * np))
        .collect();
    Ok((s, grad))
}

fn cosine_value(p: &[f64], q: &[f64]) -> Result<f64> {
    let np = l2_norm(p);
    let nq = l2_norm(q);
    if np == 0.0 || nq == 0.0 {
        return Err(Error::DegenerateVector(
            "cosine of a zero-norm vector in loss evaluation".to_string(),
        ));
    }
    Ok(dot(p, q) / (np * nq))
}

/// Contrast term: `-s(f, x_same) + (tau - delta_kr) * s(f, x_dissim)`.
/// The weight `tau - delta_kr` grows with how dissimilar the mined class
/// is, scaling the push-away strength.
pub fn contrast_loss(
    mapped: &[f64],
    same_class_feature: &[f64],
    dissimilar_feature: &[f64],
    delta_kr: f64,
    tau: f64,
) -> Result<f64> {
    debug_assert!(delta_kr < tau, "dissimilar delta {delta_kr} vs tau {tau}");
    Ok(-cosine_value(mapped, same_class_feature)?
        + (tau - delta_kr) * cosine_value(mapped, dissimilar_feature)?)
}

/// Band term: `[tau - s]+ + [s - delta_jr]+` with `s = s(f, x_sim)`.
/// Zero exactly when the score sits inside [tau, delta_jr]; at most one
/// hinge is active at a time.
pub fn similar_band_loss(
    mapped: &[f64],
    similar_feature: &[f64],
    delta_jr: f64,
    tau: f64,
) -> Result<f64> {
    let s = cosine_value(mapped, similar_feature)?;
    Ok(positive_part(tau - s) + positive_part(s - delta_jr))
}

/// Squared reconstruction error `|y - y_hat|^2`, summed over components.
pub fn reconstruction_loss(reference: &[f64], reconstructed: &[f64]) -> Result<f64> {
    if reference.len() != reconstructed.len() {
        return Err(Error::shape(
            "reconstruction loss",
            format!("{} vs {} components", reference.len(), reconstructed.len()),
        ));
    }
    Ok(squared_distance(reference, reconstructed))
}

/// Batch loss under the given mode. See [`LossBreakdown`].
pub fn loss_total(
    batch: &[Quadruplet],
    net: &Network,
    weights: &LossWeights,
    tau: f64,
    mode: BaselineMode,
) -> Result<LossBreakdown> {
    Ok(evaluate(batch, net, weights, tau, mode, false)?.0)
}

/// Batch loss plus exact analytic gradients for every parameter tensor.
/// Under `NoRecons` the decoder gradients are all zero.
pub fn backward(
    batch: &[Quadruplet],
    net: &Network,
    weights: &LossWeights,
    tau: f64,
    mode: BaselineMode,
) -> Result<(LossBreakdown, NetGrads)> {
    let (breakdown, grads) = evaluate(batch, net, weights, tau, mode, true)?;
    Ok((breakdown, grads.expect("gradients requested")))
}

fn evaluate(
    batch: &[Quadruplet],
    net: &Network,
    weights: &LossWeights,
    tau: f64,
    mode: BaselineMode,
    want_grads: bool,
) -> Result<(LossBreakdown, Option<NetGrads>)> {
    if batch.is_empty() {
        return Err(Error::EmptyInput("loss over an empty batch"));
    }
    let b = batch.len();
    let inv_b = 1.0 / b as f64;
    let lambda1 = if mode == BaselineMode::Proposed {
        weights.lambda1
    } else {
        0.0
    };
    let lambda2 = if mode.uses_decoder() {
        weights.lambda2
    } else {
        0.0
    };

    let refs = Matrix::from_rows(
        &batch
            .iter()
            .map(|q| q.reference_embedding.clone())
            .collect::<Vec<_>>(),
    )?;
    let enc_trace = net.encode(&refs)?;
    let mapped = enc_trace.output();

    let mut contrast_sum = 0.0;
    let mut band_sum = 0.0;
    let mut skipped_similar = 0;
    let mut skipped_dissimilar = 0;
    // gradient of the mean loss with respect to the mapped embeddings
    let mut d_mapped = Matrix::zeros(b, mapped.cols());

    for (row, quad) in batch.iter().enumerate() {
        let f = mapped.row(row);
        if quad.same_class_feature.len() != f.len() {
            return Err(Error::shape(
                "loss batch",
                format!(
                    "same-class feature has {} components, mapped embedding {}",
                    quad.same_class_feature.len(),
                    f.len()
                ),
            ));
        }
        let grad_row = |d_mapped: &mut Matrix, g: &[f64], scale: f64| {
            let target = d_mapped.row_mut(row);
            for (t, gi) in target.iter_mut().zip(g) {
                *t += scale * gi;
            }
        };
        if mode == BaselineMode::MseRecons {
            contrast_sum += squared_distance(f, &quad.same_class_feature);
            if want_grads {
                let g: Vec<f64> = f
                    .iter()
                    .zip(&quad.same_class_feature)
                    .map(|(fi, xi)| 2.0 * (fi - xi))
                    .collect();
                grad_row(&mut d_mapped, &g, inv_b);
            }
        } else {
            let (s_same, g_same) = cosine_with_grad(f, &quad.same_class_feature)?;
            let mut o1 = -s_same;
            if want_grads {
                grad_row(&mut d_mapped, &g_same, -inv_b);
            }
            match &quad.dissimilar {
                Some(cand) => {
                    debug_assert!(cand.class_similarity < tau);
                    let w = tau - cand.class_similarity;
                    let (s_dis, g_dis) = cosine_with_grad(f, &cand.feature)?;
                    o1 += w * s_dis;
                    if want_grads {
                        grad_row(&mut d_mapped, &g_dis, inv_b * w);
                    }
                }
                None => skipped_dissimilar += 1,
            }
            contrast_sum += o1;

            if mode == BaselineMode::Proposed {
                match &quad.similar {
                    Some(cand) => {
                        debug_assert!(cand.class_similarity < 1.0);
                        let (s_sim, g_sim) = cosine_with_grad(f, &cand.feature)?;
                        band_sum += positive_part(tau - s_sim)
                            + positive_part(s_sim - cand.class_similarity);
                        if want_grads {
                            // hinge subgradient at the kink stays 0
                            let mut ds = 0.0;
                            if tau - s_sim > 0.0 {
                                ds -= 1.0;
                            }
                            if s_sim - cand.class_similarity > 0.0 {
                                ds += 1.0;
                            }
                            if ds != 0.0 {
                                grad_row(&mut d_mapped, &g_sim, inv_b * lambda1 * ds);
                            }
                        }
                    }
                    None => skipped_similar += 1,
                }
            }
        }
    }

    let mut recon_sum = 0.0;
    let mut dec_output = None;
    if mode.uses_decoder() {
        let dec_trace = net.decode(mapped)?;
        let recon = dec_trace.output();
        for (row, quad) in batch.iter().enumerate() {
            recon_sum += reconstruction_loss(&quad.reference_embedding, recon.row(row))?;
        }
        dec_output = Some(dec_trace);
    }

    let grads = if want_grads {
        let mut decoder_grads = None;
        if let Some(dec_trace) = &dec_output {
            // d(mean loss)/d(reconstruction) = 2 lambda2 / B * (y_hat - y)
            let recon = dec_trace.output();
            let mut upstream = Matrix::zeros(b, recon.cols());
            for (row, quad) in batch.iter().enumerate() {
                let target = upstream.row_mut(row);
                for ((t, r), y) in target
                    .iter_mut()
                    .zip(recon.row(row))
                    .zip(&quad.reference_embedding)
                {
                    *t = 2.0 * lambda2 * inv_b * (r - y);
                }
            }
            let BackwardOutput {
                layer_grads,
                input_grad,
            } = backward_stack(net.decoder(), dec_trace, &upstream)?;
            d_mapped = d_mapped.add(&input_grad)?;
            decoder_grads = Some(layer_grads);
        }
        let BackwardOutput {
            layer_grads: encoder_grads,
            ..
        } = backward_stack(net.encoder(), &enc_trace, &d_mapped)?;
        let mut grads = NetGrads::zeros_like(net);
        grads.encoder = encoder_grads;
        if let Some(dg) = decoder_grads {
            grads.decoder = dg;
        }
        Some(grads)
    } else {
        None
    };

    let contrast = contrast_sum * inv_b;
    let similar_band = band_sum * inv_b;
    let reconstruction = recon_sum * inv_b;
    let total = contrast + lambda1 * similar_band + lambda2 * reconstruction;
    if !total.is_finite() {
        return Err(Error::Diverged(format!(
            "non-finite batch loss: contrast {contrast}, band {similar_band}, \
             reconstruction {reconstruction}"
        )));
    }
    Ok((
        LossBreakdown {
            contrast,
            similar_band,
            reconstruction,
            total,
            skipped_similar,
            skipped_dissimilar,
        },
        grads,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_network;
    use crate::numkit::Rng;
    use proptest::prelude::*;

    // unit vector with a prescribed cosine against [1, 0]
    fn at_cosine(s: f64) -> Vec<f64> {
        vec![s, (1.0 - s * s).sqrt()]
    }

    #[test]
    fn contrast_matches_scalar_evaluation() {
        let f = [1.0, 0.0];
        let same = [1.0, 0.0]; // s = 1
        let dis = [-1.0, 0.0]; // s = -1
        let got = contrast_loss(&f, &same, &dis, -0.5, 0.0).unwrap();
        assert_eq!(got, -1.5);
    }

    #[test]
    fn contrast_second_term_vanishes_at_zero_score() {
        let f = [1.0, 0.0];
        let got = contrast_loss(&f, &[1.0, 0.0], &[0.0, 1.0], -0.5, 0.0).unwrap();
        assert_eq!(got, -1.0);
    }

    #[test]
    fn contrast_weight_fades_as_delta_approaches_tau() {
        let f = [1.0, 0.0];
        let got = contrast_loss(&f, &[1.0, 0.0], &[-1.0, 0.0], -1e-9, 0.0).unwrap();
        assert!((got - (-1.0)).abs() < 2e-9, "got {got}");
    }

    #[test]
    fn band_is_zero_inside_and_hinged_outside() {
        let f = [1.0, 0.0];
        assert_eq!(similar_band_loss(&f, &at_cosine(0.3), 0.6, 0.0).unwrap(), 0.0);
        let low = similar_band_loss(&f, &at_cosine(-0.2), 0.6, 0.0).unwrap();
        assert!((low - 0.2).abs() < 1e-12, "got {low}");
        let high = similar_band_loss(&f, &at_cosine(0.8), 0.6, 0.0).unwrap();
        assert!((high - 0.2).abs() < 1e-12, "got {high}");
    }

    #[test]
    fn reconstruction_matches_hand_arithmetic() {
        assert_eq!(reconstruction_loss(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(reconstruction_loss(&[1.0, 0.0], &[0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(reconstruction_loss(&[1.0, 2.0], &[-1.0, 1.0]).unwrap(), 5.0);
        assert!(reconstruction_loss(&[1.0], &[1.0, 2.0]).is_err());
    }

    fn random_quad(rng: &mut Rng, a: usize, d: usize, with_sim: bool, with_dis: bool) -> Quadruplet {
        let v = |rng: &mut Rng, n: usize| (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect::<Vec<_>>();
        Quadruplet {
            reference_embedding: v(rng, a),
            same_class_feature: v(rng, d),
            similar: with_sim.then(|| MinedCandidate {
                feature: v(rng, d),
                class_similarity: rng.uniform(0.0, 0.9),
            }),
            dissimilar: with_dis.then(|| MinedCandidate {
                feature: v(rng, d),
                class_similarity: rng.uniform(-0.9, -0.1),
            }),
        }
    }

    fn random_batch(rng: &mut Rng, a: usize, d: usize, n: usize) -> Vec<Quadruplet> {
        (0..n).map(|_| random_quad(rng, a, d, true, true)).collect()
    }

    #[test]
    fn total_reduces_to_contrast_mean_with_zero_weights() {
        let mut rng = Rng::new(1);
        let net = build_network(3, 4, &[3], &mut rng).unwrap();
        let batch = random_batch(&mut rng, 3, 4, 5);
        let w = LossWeights::new(0.0, 0.0).unwrap();
        let out = loss_total(&batch, &net, &w, 0.0, BaselineMode::Proposed).unwrap();
        assert!((out.total - out.contrast).abs() < 1e-15);
    }

    #[test]
    fn singleton_batch_total_is_exact_weighted_sum() {
        let mut rng = Rng::new(2);
        let net = build_network(3, 4, &[3], &mut rng).unwrap();
        let batch = random_batch(&mut rng, 3, 4, 1);
        let w = LossWeights::new(0.7, 0.3).unwrap();
        let out = loss_total(&batch, &net, &w, 0.0, BaselineMode::Proposed).unwrap();
        let want = out.contrast + 0.7 * out.similar_band + 0.3 * out.reconstruction;
        assert!((out.total - want).abs() < 1e-15);

        // cross-check the breakdown against the scalar operations
        let quad = &batch[0];
        let f = net
            .encode(&Matrix::from_rows(&[quad.reference_embedding.clone()]).unwrap())
            .unwrap()
            .output()
            .clone();
        let dis = quad.dissimilar.as_ref().unwrap();
        let sim = quad.similar.as_ref().unwrap();
        let o1 = contrast_loss(
            f.row(0),
            &quad.same_class_feature,
            &dis.feature,
            dis.class_similarity,
            0.0,
        )
        .unwrap();
        let o2 = similar_band_loss(f.row(0), &sim.feature, sim.class_similarity, 0.0).unwrap();
        let y_hat = net.decode(&f).unwrap();
        let o3 = reconstruction_loss(&quad.reference_embedding, y_hat.output().row(0)).unwrap();
        assert!((out.contrast - o1).abs() < 1e-12);
        assert!((out.similar_band - o2).abs() < 1e-12);
        assert!((out.reconstruction - o3).abs() < 1e-12);
    }

    #[test]
    fn duplicating_the_batch_leaves_the_mean_unchanged() {
        let mut rng = Rng::new(3);
        let net = build_network(3, 4, &[3], &mut rng).unwrap();
        let one = random_batch(&mut rng, 3, 4, 1);
        let two = vec![one[0].clone(), one[0].clone()];
        let w = LossWeights::new(0.5, 0.25).unwrap();
        let a = loss_total(&one, &net, &w, 0.0, BaselineMode::Proposed).unwrap();
        let b = loss_total(&two, &net, &w, 0.0, BaselineMode::Proposed).unwrap();
        assert!((a.total - b.total).abs() < 1e-15);
    }

    #[test]
    fn total_is_linear_in_the_lambdas() {
        let mut rng = Rng::new(4);
        let net = build_network(3, 4, &[3], &mut rng).unwrap();
        let batch = random_batch(&mut rng, 3, 4, 4);
        let base = loss_total(
            &batch,
            &net,
            &LossWeights::new(0.5, 0.2).unwrap(),
            0.0,
            BaselineMode::Proposed,
        )
        .unwrap();
        let bumped = loss_total(
            &batch,
            &net,
            &LossWeights::new(1.5, 0.2).unwrap(),
            0.0,
            BaselineMode::Proposed,
        )
        .unwrap();
        assert!((bumped.total - base.total - base.similar_band).abs() < 1e-10);
        let bumped2 = loss_total(
            &batch,
            &net,
            &LossWeights::new(0.5, 1.2).unwrap(),
            0.0,
            BaselineMode::Proposed,
        )
        .unwrap();
        assert!((bumped2.total - base.total - base.reconstruction).abs() < 1e-10);
    }

    #[test]
    fn cosine_terms_ignore_positive_feature_scaling() {
        // hidden wide enough that no sample kills the whole ReLU layer
        let mut rng = Rng::new(5);
        let net = build_network(3, 4, &[8], &mut rng).unwrap();
        let batch = random_batch(&mut rng, 3, 4, 3);
        let scaled: Vec<Quadruplet> = batch
            .iter()
            .map(|q| {
                let scale = |v: &[f64]| v.iter().map(|x| x * 37.5).collect::<Vec<_>>();
                Quadruplet {
                    reference_embedding: q.reference_embedding.clone(),
                    same_class_feature: scale(&q.same_class_feature),
                    similar: q.similar.as_ref().map(|c| MinedCandidate {
                        feature: scale(&c.feature),
                        class_similarity: c.class_similarity,
                    }),
                    dissimilar: q.dissimilar.as_ref().map(|c| MinedCandidate {
                        feature: scale(&c.feature),
                        class_similarity: c.class_similarity,
                    }),
                }
            })
            .collect();
        let w = LossWeights::new(0.8, 0.0).unwrap();
        let a = loss_total(&batch, &net, &w, 0.1, BaselineMode::Proposed).unwrap();
        let b = loss_total(&scaled, &net, &w, 0.1, BaselineMode::Proposed).unwrap();
        assert!((a.contrast - b.contrast).abs() < 1e-10);
        assert!((a.similar_band - b.similar_band).abs() < 1e-10);
    }

    #[test]
    fn absent_members_are_skipped_and_counted() {
        let mut rng = Rng::new(6);
        let net = build_network(3, 4, &[3], &mut rng).unwrap();
        let batch = vec![
            random_quad(&mut rng, 3, 4, false, true),
            random_quad(&mut rng, 3, 4, true, false),
            random_quad(&mut rng, 3, 4, false, false),
        ];
        let w = LossWeights::new(1.0, 0.1).unwrap();
        let out = loss_total(&batch, &net, &w, 0.0, BaselineMode::Proposed).unwrap();
        assert_eq!(out.skipped_similar, 2);
        assert_eq!(out.skipped_dissimilar, 2);
        assert!(out.total.is_finite());
    }

    #[test]
    fn empty_batch_is_rejected() {
        let net = build_network(3, 4, &[3], &mut Rng::new(0)).unwrap();
        let w = LossWeights::new(1.0, 0.1).unwrap();
        assert!(matches!(
            loss_total(&[], &net, &w, 0.0, BaselineMode::Proposed),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn cosine_gradient_is_orthogonal_to_the_mapped_embedding() {
        let mut rng = Rng::new(7);
        for _ in 0..50 {
            let p: Vec<f64> = (0..5).map(|_| rng.uniform(-2.0, 2.0)).collect();
            let q: Vec<f64> = (0..5).map(|_| rng.uniform(-2.0, 2.0)).collect();
            if l2_norm(&p) < 1e-6 || l2_norm(&q) < 1e-6 {
                continue;
            }
            let (_, grad) = cosine_with_grad(&p, &q).unwrap();
            assert!(dot(&grad, &p).abs() < 1e-12);
        }
        // parallel vectors: s is at its max, gradient still orthogonal
        let p = [2.0, 4.0, -1.0];
        let q = [1.0, 2.0, -0.5];
        let (s, grad) = cosine_with_grad(&p, &q).unwrap();
        assert!((s - 1.0).abs() < 1e-12);
        assert!(dot(&grad, &p).abs() < 1e-12);
    }

    #[test]
    fn inactive_band_contributes_nothing_to_gradients() {
        let mut rng = Rng::new(8);
        let net = build_network(2, 2, &[2], &mut rng).unwrap();
        let reference = vec![0.4, -0.7];
        let f = net
            .encode(&Matrix::from_rows(&[reference.clone()]).unwrap())
            .unwrap()
            .output()
            .clone();
        // place the similar feature so its score sits strictly inside the band
        let s_target = 0.5;
        let fr = f.row(0);
        let n = l2_norm(fr);
        let unit: Vec<f64> = fr.iter().map(|v| v / n).collect();
        let perp = vec![-unit[1], unit[0]];
        let sim_feature: Vec<f64> = unit
            .iter()
            .zip(&perp)
            .map(|(u, p)| s_target * u + (1.0 - s_target * s_target).sqrt() * p)
            .collect();
        let with_sim = vec![Quadruplet {
            reference_embedding: reference.clone(),
            same_class_feature: vec![1.0, 0.0],
            similar: Some(MinedCandidate {
                feature: sim_feature,
                class_similarity: 0.9,
            }),
            dissimilar: None,
        }];
        let without = vec![Quadruplet {
            similar: None,
            ..with_sim[0].clone()
        }];
        let w = LossWeights::new(2.0, 0.1).unwrap();
        let (la, ga) = backward(&with_sim, &net, &w, 0.0, BaselineMode::Proposed).unwrap();
        let (lb, gb) = backward(&without, &net, &w, 0.0, BaselineMode::Proposed).unwrap();
        assert_eq!(la.similar_band, 0.0);
        assert_eq!(la.total, lb.total);
        for (x, y) in ga.tensors(true).iter().zip(gb.tensors(true).iter()) {
            assert_eq!(x, y);
        }
    }

    #[test]
    fn no_recons_mode_produces_zero_decoder_gradients() {
        let mut rng = Rng::new(9);
        let net = build_network(3, 4, &[3], &mut rng).unwrap();
        let batch = random_batch(&mut rng, 3, 4, 3);
        let w = LossWeights::new(1.0, 0.5).unwrap();
        let (out, grads) = backward(&batch, &net, &w, 0.0, BaselineMode::NoRecons).unwrap();
        assert_eq!(out.reconstruction, 0.0);
        for layer in &grads.decoder {
            assert!(layer.weights.data().iter().all(|g| *g == 0.0));
            assert!(layer.bias.iter().all(|g| *g == 0.0));
        }
    }

    fn fd_check(mode: BaselineMode, seed: u64) {
        // hidden wide enough that no sample kills the whole ReLU layer
        let mut rng = Rng::new(seed);
        let mut net = build_network(3, 4, &[8], &mut rng).unwrap();
        let batch = random_batch(&mut rng, 3, 4, 3);
        let w = LossWeights::new(0.7, 0.3).unwrap();
        let tau = 0.0;
        let (_, grads) = backward(&batch, &net, &w, tau, mode).unwrap();
        let flat: Vec<f64> = grads
            .tensors(true)
            .iter()
            .flat_map(|t| t.iter().copied().collect::<Vec<_>>())
            .collect();
        let h = 1e-6;
        let mut idx = 0;
        let n_tensors = net.trainable_mut(true).len();
        for t in 0..n_tensors {
            let len = net.trainable_mut(true)[t].0.len();
            for p in 0..len {
                net.trainable_mut(true)[t].0[p] += h;
                let up = loss_total(&batch, &net, &w, tau, mode).unwrap().total;
                net.trainable_mut(true)[t].0[p] -= 2.0 * h;
                let down = loss_total(&batch, &net, &w, tau, mode).unwrap().total;
                net.trainable_mut(true)[t].0[p] += h;
                let numeric = (up - down) / (2.0 * h);
                let analytic = flat[idx];
                let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1.0);
                assert!(
                    rel < 1e-5,
                    "{mode:?} param {idx}: analytic {analytic} vs numeric {numeric}"
                );
                idx += 1;
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences_in_each_mode() {
        fd_check(BaselineMode::Proposed, 40);
        fd_check(BaselineMode::MseRecons, 41);
        fd_check(BaselineMode::NoSimilar, 42);
        fd_check(BaselineMode::NoRecons, 43);
    }

    proptest! {
        #[test]
        fn band_is_nonnegative_and_zero_only_inside(
            s in -1.0f64..=1.0,
            tau in -0.5f64..0.5,
            delta in 0.5f64..0.95,
        ) {
            let f = [1.0, 0.0];
            let x = at_cosine(s);
            let got = similar_band_loss(&f, &x, delta, tau).unwrap();
            prop_assert!(got >= 0.0);
            // the achieved score carries rounding from at_cosine
            let achieved = dot(&f, &x) / l2_norm(&x);
            prop_assert_eq!(got == 0.0, tau <= achieved && achieved <= delta);
        }
    }
}
