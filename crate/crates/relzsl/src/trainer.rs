//! Training orchestration: normalization, epoch and batch scheduling,
//! mining fan-out, optimization, model selection and hyperparameter
//! search.
//!
//! One epoch walks the training split in dataset order, cut into
//! contiguous batches; only the batch order is shuffled between epochs.
//! Mining runs against the parameter snapshot taken at batch start,
//! with one derived RNG stream per reference sample, so any worker
//! count produces bitwise-identical results.

use rayon::prelude::*;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use crate::checkpoint::NormStats;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::evaluator::validation_accuracy;
use crate::miner::{build_class_index, mine_quadruplet, MinerConfig};
use crate::model::{build_network, Network, ParamKind};
use crate::numkit::{standardize_apply, standardize_fit, AdamState, Matrix, Rng};
use crate::objectives::{backward, BaselineMode, LossWeights, Quadruplet};
use crate::relations::{build_similarity_table, select_tau, RelationConfig};

/// Thresholds tried when the config asks for `tau = auto`.
pub const DEFAULT_TAU_CANDIDATES: [f64; 4] = [-0.25, 0.0, 0.25, 0.5];

// substream tags; distinct per use so streams never overlap
const STREAM_INIT: u64 = 0x11;
const STREAM_BATCH: u64 = 0x12;
const STREAM_MINE: u64 = 0x13;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TauSetting {
    Fixed(f64),
    /// Pick the threshold by validation accuracy over
    /// [`DEFAULT_TAU_CANDIDATES`].
    Auto,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub tau: TauSetting,
    pub p: usize,
    pub seed: u64,
    pub mode: BaselineMode,
    pub hidden: Vec<usize>,
    pub workers: usize,
}

impl Default for TrainConfig {
    fn default() -> TrainConfig {
        TrainConfig {
            epochs: 50,
            batch_size: 64,
            lr: 1e-3,
            weight_decay: 5e-5,
            lambda1: 1.0,
            lambda2: 0.1,
            tau: TauSetting::Fixed(0.0),
            p: 50,
            seed: 0,
            mode: BaselineMode::Proposed,
            hidden: vec![1024],
            workers: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "lr must be a positive finite number, got {}",
                self.lr
            )));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "weight_decay must be nonnegative, got {}",
                self.weight_decay
            )));
        }
        LossWeights::new(self.lambda1, self.lambda2)?;
        if let TauSetting::Fixed(t) = self.tau {
            if !t.is_finite() {
                return Err(Error::InvalidConfig(format!("tau must be finite, got {t}")));
            }
        }
        if self.p == 0 {
            return Err(Error::InvalidConfig("p must be positive".into()));
        }
        if self.workers == 0 {
            return Err(Error::InvalidConfig("workers must be positive".into()));
        }
        if self.hidden.iter().any(|&h| h == 0) {
            return Err(Error::InvalidConfig(
                "hidden layer sizes must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss_total: f64,
    pub loss_o1: f64,
    pub loss_o2: f64,
    pub loss_o3: f64,
    /// NaN when the dataset has no validation split.
    pub val_acc: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,loss_total,loss_o1,loss_o2,loss_o3,val_acc,seconds\n");
        for r in &self.epochs {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.epoch, r.loss_total, r.loss_o1, r.loss_o2, r.loss_o3, r.val_acc, r.seconds
            );
        }
        out
    }

    fn best_val_acc(&self) -> f64 {
        self.epochs
            .iter()
            .map(|r| r.val_acc)
            .filter(|a| !a.is_nan())
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub network: Network,
    pub stats: NormStats,
    pub log: TrainLog,
    /// Threshold the model was trained with; resolved when `tau = auto`.
    pub tau: f64,
}

fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("cannot build a {workers}-thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Trains under the given config. Feature statistics are fit on the
/// training split only and attribute statistics on seen-class
/// embeddings only. Returns the parameter snapshot with the best
/// validation accuracy, or the final parameters when the dataset has
/// no validation split.
pub fn train(ds: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if cfg.mode == BaselineMode::NoSimilar {
        // the threshold is pinned at 1 in this mode, so auto-selection
        // would train identical models for every candidate
        return train_fixed(ds, cfg, 1.0);
    }
    match cfg.tau {
        TauSetting::Fixed(t) => train_fixed(ds, cfg, t),
        TauSetting::Auto => {
            if ds.splits.val.is_empty() {
                return Err(Error::MissingValidation(
                    "tau = auto selects the threshold on validation accuracy",
                ));
            }
            let mut cache: Vec<(f64, TrainOutcome)> = Vec::new();
            let chosen = select_tau(&DEFAULT_TAU_CANDIDATES, |t| {
                let outcome = train_fixed(ds, cfg, t)?;
                let score = outcome.log.best_val_acc();
                cache.push((t, outcome));
                Ok(score)
            })?;
            let (_, outcome) = cache
                .into_iter()
                .find(|(t, _)| *t == chosen)
                .expect("selected threshold was evaluated");
            Ok(outcome)
        }
    }
}

fn train_fixed(ds: &Dataset, cfg: &TrainConfig, tau: f64) -> Result<TrainOutcome> {
    if ds.splits.train.is_empty() {
        return Err(Error::EmptyInput("training split"));
    }
    let relation_cfg = if cfg.mode == BaselineMode::NoSimilar {
        RelationConfig::new_unchecked(1.0)
    } else {
        RelationConfig::new(tau)?
    };
    let tau_eff = relation_cfg.tau();
    let weights = LossWeights::new(cfg.lambda1, cfg.lambda2)?;
    let miner_cfg = MinerConfig::new(cfg.p)?;

    let stats = NormStats {
        features: standardize_fit(&ds.features, &ds.splits.train)?,
        attributes: standardize_fit(&ds.class_embeddings, &ds.seen)?,
    };
    let train_rows: Vec<Vec<f64>> = ds
        .splits
        .train
        .iter()
        .map(|&i| ds.features.row(i).to_vec())
        .collect();
    let train_features = standardize_apply(&Matrix::from_rows(&train_rows)?, &stats.features)?;
    let train_labels: Vec<usize> = ds.splits.train.iter().map(|&i| ds.labels[i]).collect();
    let emb_std = standardize_apply(&ds.class_embeddings, &stats.attributes)?;
    let table = build_similarity_table(&emb_std)?;
    let index = build_class_index(&train_labels, &ds.seen, &table, &relation_cfg)?;

    let base_rng = Rng::new(cfg.seed);
    let mut init_rng = base_rng.derive(STREAM_INIT, 0, 0);
    let mut net = build_network(ds.attr_dim(), ds.feat_dim(), &cfg.hidden, &mut init_rng)?;

    let opt_decoder = cfg.mode.uses_decoder();
    let mut adam: Vec<AdamState> = net
        .trainable_mut(opt_decoder)
        .iter()
        .map(|(tensor, kind)| {
            let wd = match kind {
                ParamKind::Weight => cfg.weight_decay,
                ParamKind::Bias => 0.0,
            };
            AdamState::new(tensor.len(), cfg.lr, wd)
        })
        .collect();

    let n = train_labels.len();
    let n_batches = n.div_ceil(cfg.batch_size);
    let want_similar = cfg.mode.uses_similar();
    let mut log = TrainLog::default();
    let mut best: Option<(f64, Network)> = None;

    with_workers(cfg.workers, || -> Result<()> {
        for epoch in 0..cfg.epochs {
            let started = Instant::now();
            let mut order: Vec<usize> = (0..n_batches).collect();
            base_rng
                .derive(STREAM_BATCH, epoch as u64, 0)
                .shuffle(&mut order);

            let mut sums = [0.0f64; 4];
            for &b in &order {
                let lo = b * cfg.batch_size;
                let hi = (lo + cfg.batch_size).min(n);
                let ref_rows: Vec<Vec<f64>> = (lo..hi)
                    .map(|r| emb_std.row(train_labels[r]).to_vec())
                    .collect();
                let ref_mat = Matrix::from_rows(&ref_rows)?;
                // parameter snapshot at batch start scores the mining pools
                let mapped = net.encode(&ref_mat)?.output().clone();

                let quads: Vec<Quadruplet> = (lo..hi)
                    .into_par_iter()
                    .enumerate()
                    .map(|(pos, r)| {
                        let mut rng = base_rng.derive(
                            STREAM_MINE,
                            epoch as u64,
                            ds.splits.train[r] as u64,
                        );
                        mine_quadruplet(
                            train_labels[r],
                            ref_mat.row(pos),
                            mapped.row(pos),
                            &train_features,
                            &train_labels,
                            &index,
                            &table,
                            &miner_cfg,
                            &relation_cfg,
                            want_similar,
                            &mut rng,
                        )
                    })
                    .collect::<Result<_>>()?;

                let (breakdown, grads) = backward(&quads, &net, &weights, tau_eff, cfg.mode)?;
                let bs = quads.len() as f64;
                sums[0] += breakdown.total * bs;
                sums[1] += breakdown.contrast * bs;
                sums[2] += breakdown.similar_band * bs;
                sums[3] += breakdown.reconstruction * bs;

                let grad_tensors = grads.tensors(opt_decoder);
                for (i, (tensor, _)) in net.trainable_mut(opt_decoder).into_iter().enumerate() {
                    adam[i].step(tensor, grad_tensors[i])?;
                }
            }

            let val_acc = if ds.splits.val.is_empty() {
                f64::NAN
            } else {
                validation_accuracy(&net, &stats, ds)?
            };
            log.epochs.push(EpochRecord {
                epoch: epoch + 1,
                loss_total: sums[0] / n as f64,
                loss_o1: sums[1] / n as f64,
                loss_o2: sums[2] / n as f64,
                loss_o3: sums[3] / n as f64,
                val_acc,
                seconds: started.elapsed().as_secs_f64(),
            });
            if !val_acc.is_nan() && best.as_ref().is_none_or(|(b, _)| val_acc > *b) {
                best = Some((val_acc, net.clone()));
            }
        }
        Ok(())
    })??;

    let network = match best {
        Some((_, snapshot)) => snapshot,
        None => net,
    };
    Ok(TrainOutcome {
        network,
        stats,
        log,
        tau: tau_eff,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridCell {
    pub tau: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub val_acc: f64,
}

/// Strict "c beats incumbent" order: higher accuracy, then smaller
/// lambda2, then smaller lambda1, then smaller tau.
fn beats(c: &GridCell, incumbent: &GridCell) -> bool {
    if c.val_acc != incumbent.val_acc {
        return c.val_acc > incumbent.val_acc;
    }
    if c.lambda2 != incumbent.lambda2 {
        return c.lambda2 < incumbent.lambda2;
    }
    if c.lambda1 != incumbent.lambda1 {
        return c.lambda1 < incumbent.lambda1;
    }
    c.tau < incumbent.tau
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridOutcome {
    /// One cell per grid point, in (tau, lambda1, lambda2) nesting order.
    pub cells: Vec<GridCell>,
    pub best: GridCell,
}

impl GridOutcome {
    pub fn render_csv(&self) -> String {
        let mut out = String::from("tau,lambda1,lambda2,val_acc\n");
        for c in &self.cells {
            let _ = writeln!(out, "{},{},{},{}", c.tau, c.lambda1, c.lambda2, c.val_acc);
        }
        out
    }

    /// Base config with the winning cell's hyperparameters substituted.
    pub fn best_config(&self, base: &TrainConfig) -> TrainConfig {
        TrainConfig {
            tau: TauSetting::Fixed(self.best.tau),
            lambda1: self.best.lambda1,
            lambda2: self.best.lambda2,
            ..base.clone()
        }
    }
}

/// Full-factorial search over the three grids, scored by best-epoch
/// validation accuracy.
pub fn grid_search(
    ds: &Dataset,
    cfg: &TrainConfig,
    tau_grid: &[f64],
    lambda1_grid: &[f64],
    lambda2_grid: &[f64],
) -> Result<GridOutcome> {
    cfg.validate()?;
    if ds.splits.val.is_empty() {
        return Err(Error::MissingValidation(
            "grid search scores every cell on validation accuracy",
        ));
    }
    if tau_grid.is_empty() {
        return Err(Error::EmptyInput("tau grid"));
    }
    if lambda1_grid.is_empty() {
        return Err(Error::EmptyInput("lambda1 grid"));
    }
    if lambda2_grid.is_empty() {
        return Err(Error::EmptyInput("lambda2 grid"));
    }
    let mut cells = Vec::new();
    for &t in tau_grid {
        for &l1 in lambda1_grid {
            for &l2 in lambda2_grid {
                let cell_cfg = TrainConfig {
                    lambda1: l1,
                    lambda2: l2,
                    tau: TauSetting::Fixed(t),
                    ..cfg.clone()
                };
                let outcome = train_fixed(ds, &cell_cfg, t)?;
                cells.push(GridCell {
                    tau: t,
                    lambda1: l1,
                    lambda2: l2,
                    val_acc: outcome.log.best_val_acc(),
                });
            }
        }
    }
    let best = cells
        .iter()
        .copied()
        .reduce(|inc, c| if beats(&c, &inc) { c } else { inc })
        .expect("grids are nonempty");
    Ok(GridOutcome { cells, best })
}

/// Parses a flat `key = value` config file; `#` starts a comment and
/// blank lines are skipped. Unset keys keep their defaults.
pub fn parse_config_file(path: &Path) -> Result<TrainConfig> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path)?;
    parse_config_str(&text, path)
}

pub fn parse_config_str(text: &str, origin: &Path) -> Result<TrainConfig> {
    let err = |line: usize, detail: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        detail,
    };
    let mut cfg = TrainConfig::default();
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(err(lineno, format!("expected `key = value`, got {line:?}")));
        };
        let key = key.trim();
        let value = value.trim();
        let bad = |what: &str| err(lineno, format!("invalid {what} value {value:?}"));
        match key {
            "epochs" => cfg.epochs = value.parse().map_err(|_| bad("epochs"))?,
            "batch_size" => cfg.batch_size = value.parse().map_err(|_| bad("batch_size"))?,
            "lr" => cfg.lr = value.parse().map_err(|_| bad("lr"))?,
            "weight_decay" => {
                cfg.weight_decay = value.parse().map_err(|_| bad("weight_decay"))?;
            }
            "lambda1" => cfg.lambda1 = value.parse().map_err(|_| bad("lambda1"))?,
            "lambda2" => cfg.lambda2 = value.parse().map_err(|_| bad("lambda2"))?,
            "tau" => {
                cfg.tau = if value == "auto" {
                    TauSetting::Auto
                } else {
                    TauSetting::Fixed(value.parse().map_err(|_| bad("tau"))?)
                };
            }
            "p" => cfg.p = value.parse().map_err(|_| bad("p"))?,
            "seed" => cfg.seed = value.parse().map_err(|_| bad("seed"))?,
            "mode" => {
                cfg.mode = BaselineMode::from_name(value).ok_or_else(|| {
                    err(
                        lineno,
                        format!("unknown mode {value:?}; expected proposed, b1, b2 or b3"),
                    )
                })?;
            }
            "hidden" => {
                let sizes: std::result::Result<Vec<usize>, _> =
                    value.split(',').map(|s| s.trim().parse()).collect();
                cfg.hidden = sizes.map_err(|_| bad("hidden"))?;
            }
            "workers" => cfg.workers = value.parse().map_err(|_| bad("workers"))?,
            other => {
                return Err(err(lineno, format!("unknown config key {other:?}")));
            }
        }
    }
    Ok(cfg)
}

/// Renders a config in the same `key = value` format the parser reads.
pub fn to_config_string(cfg: &TrainConfig) -> String {
    let tau = match cfg.tau {
        TauSetting::Fixed(t) => t.to_string(),
        TauSetting::Auto => "auto".to_string(),
    };
    let hidden = cfg
        .hidden
        .iter()
        .map(|h| h.to_string())
        .collect::<Vec<_>>()
        .join(",");
    format!(
        "epochs = {}\nbatch_size = {}\nlr = {}\nweight_decay = {}\nlambda1 = {}\nlambda2 = {}\ntau = {}\np = {}\nseed = {}\nmode = {}\nhidden = {}\nworkers = {}\n",
        cfg.epochs,
        cfg.batch_size,
        cfg.lr,
        cfg.weight_decay,
        cfg.lambda1,
        cfg.lambda2,
        tau,
        cfg.p,
        cfg.seed,
        cfg.mode.name(),
        hidden,
        cfg.workers,
    )
}
