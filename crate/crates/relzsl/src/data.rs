//! Dataset ingestion, validation, and synthetic generation.
//!
//! On disk a dataset is a directory:
//!
//! ```text
//! features.csv      N rows, d comma-separated floats (no header)
//! labels.csv        N lines, one zero-based class id per line
//! attributes.csv    C rows, a comma-separated floats (no header)
//! classes.txt       C lines, one class name per line
//! splits/train.txt          zero-based sample indices, one per line
//! splits/val.txt
//! splits/test_unseen.txt
//! splits/test_seen.txt
//! ```
//!
//! Floats are written with 17 significant digits so save/load round
//! trips are lossless. Seen classes are those with training samples;
//! unseen classes are those appearing in the unseen test split. The two
//! sets must not overlap.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numkit::{l2_norm, Matrix, Rng};

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test_unseen: Vec<usize>,
    pub test_seen: Vec<usize>,
}

impl Splits {
    fn named(&self) -> [(&'static str, &Vec<usize>); 4] {
        [
            ("train", &self.train),
            ("val", &self.val),
            ("test_unseen", &self.test_unseen),
            ("test_seen", &self.test_seen),
        ]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub class_embeddings: Matrix,
    pub class_names: Vec<String>,
    pub splits: Splits,
    /// Classes with training samples, ascending.
    pub seen: Vec<usize>,
    /// Classes appearing in the unseen test split, ascending.
    pub unseen: Vec<usize>,
}

impl Dataset {
    /// Assembles a dataset, deriving the seen/unseen sets and enforcing
    /// every structural invariant.
    pub fn new(
        features: Matrix,
        labels: Vec<usize>,
        class_embeddings: Matrix,
        class_names: Vec<String>,
        splits: Splits,
    ) -> Result<Dataset> {
        let n = features.rows();
        let c = class_embeddings.rows();
        if n == 0 {
            return Err(Error::EmptyInput("dataset has no samples"));
        }
        if c == 0 {
            return Err(Error::EmptyInput("dataset has no classes"));
        }
        if labels.len() != n {
            return Err(Error::DataViolation(format!(
                "{} labels for {} feature rows",
                labels.len(),
                n
            )));
        }
        if class_names.len() != c {
            return Err(Error::DataViolation(format!(
                "{} class names for {} attribute rows",
                class_names.len(),
                c
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
            return Err(Error::DataViolation(format!(
                "label {bad} out of range for {c} classes"
            )));
        }
        let mut owner = vec![None::<&str>; n];
        for (name, indices) in splits.named() {
            for &i in indices {
                if i >= n {
                    return Err(Error::DataViolation(format!(
                        "split {name} references sample {i}, dataset has {n}"
                    )));
                }
                if let Some(prev) = owner[i] {
                    return Err(Error::DataViolation(format!(
                        "sample {i} appears in both {prev} and {name} splits"
                    )));
                }
                owner[i] = Some(name);
            }
        }
        let class_set = |indices: &[usize]| {
            let mut classes: Vec<usize> = indices.iter().map(|&i| labels[i]).collect();
            classes.sort_unstable();
            classes.dedup();
            classes
        };
        let seen = class_set(&splits.train);
        let unseen = class_set(&splits.test_unseen);
        if let Some(&clash) = seen.iter().find(|s| unseen.binary_search(s).is_ok()) {
            return Err(Error::DataViolation(format!(
                "class {clash} has training samples but appears in the unseen test split"
            )));
        }
        for &i in &splits.test_seen {
            if seen.binary_search(&labels[i]).is_err() {
                return Err(Error::DataViolation(format!(
                    "sample {i} (class {}) is in the seen test split but its class \
                     has no training samples",
                    labels[i]
                )));
            }
        }
        Ok(Dataset {
            features,
            labels,
            class_embeddings,
            class_names,
            splits,
            seen,
            unseen,
        })
    }

    pub fn num_samples(&self) -> usize {
        self.features.rows()
    }

    pub fn num_classes(&self) -> usize {
        self.class_embeddings.rows()
    }

    pub fn feat_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn attr_dim(&self) -> usize {
        self.class_embeddings.cols()
    }
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    Ok(fs::read_to_string(path)?
        .lines()
        .map(|l| l.trim().to_string())
        .filter(|l| !l.is_empty())
        .collect())
}

fn read_matrix(path: &Path) -> Result<Matrix> {
    let lines = read_lines(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(lines.len());
    for (lineno, line) in lines.iter().enumerate() {
        let row: Vec<f64> = line
            .split(',')
            .map(|tok| {
                tok.trim().parse::<f64>().map_err(|e| Error::Parse {
                    path: path.to_path_buf(),
                    line: lineno + 1,
                    detail: format!("bad float {tok:?}: {e}"),
                })
            })
            .collect::<Result<_>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: lineno + 1,
                    detail: format!("{} columns, expected {}", row.len(), first.len()),
                });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            detail: "no rows".to_string(),
        });
    }
    Matrix::from_rows(&rows)
}

fn read_indices(path: &Path) -> Result<Vec<usize>> {
    read_lines(path)?
        .iter()
        .enumerate()
        .map(|(lineno, line)| {
            line.parse::<usize>().map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                detail: format!("bad index {line:?}: {e}"),
            })
        })
        .collect()
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let features = read_matrix(&dir.join("features.csv"))?;
    let labels_path = dir.join("labels.csv");
    let labels: Vec<usize> = read_lines(&labels_path)?
        .iter()
        .enumerate()
        .map(|(lineno, line)| {
            line.parse::<usize>().map_err(|e| Error::Parse {
                path: labels_path.clone(),
                line: lineno + 1,
                detail: format!("bad label {line:?}: {e}"),
            })
        })
        .collect::<Result<_>>()?;
    let class_embeddings = read_matrix(&dir.join("attributes.csv"))?;
    let class_names = read_lines(&dir.join("classes.txt"))?;
    let splits_dir = dir.join("splits");
    let splits = Splits {
        train: read_indices(&splits_dir.join("train.txt"))?,
        val: read_indices(&splits_dir.join("val.txt"))?,
        test_unseen: read_indices(&splits_dir.join("test_unseen.txt"))?,
        test_seen: read_indices(&splits_dir.join("test_seen.txt"))?,
    };
    Dataset::new(features, labels, class_embeddings, class_names, splits)
}

fn write_matrix(path: &Path, m: &Matrix) -> Result<()> {
    let mut out = String::new();
    for r in 0..m.rows() {
        let row = m.row(r);
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            // 17 significant digits: exact f64 round trip
            let _ = write!(out, "{v:.16e}");
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

fn write_index_file(path: &Path, indices: &[usize]) -> Result<()> {
    let mut out = String::new();
    for i in indices {
        let _ = writeln!(out, "{i}");
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn save_dataset(dir: &Path, ds: &Dataset) -> Result<()> {
    fs::create_dir_all(dir.join("splits"))?;
    write_matrix(&dir.join("features.csv"), &ds.features)?;
    write_matrix(&dir.join("attributes.csv"), &ds.class_embeddings)?;
    let mut labels = String::new();
    for l in &ds.labels {
        let _ = writeln!(labels, "{l}");
    }
    fs::write(dir.join("labels.csv"), labels)?;
    fs::write(dir.join("classes.txt"), ds.class_names.join("\n") + "\n")?;
    let splits_dir = dir.join("splits");
    for (name, indices) in ds.splits.named() {
        write_index_file(&splits_dir.join(format!("{name}.txt")), indices)?;
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct SynthConfig {
    pub classes_seen: usize,
    pub classes_unseen: usize,
    pub attr_dim: usize,
    pub feat_dim: usize,
    pub per_class: usize,
    pub noise: f64,
    pub seed: u64,
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        let counts = [
            ("classes-seen", self.classes_seen),
            ("classes-unseen", self.classes_unseen),
            ("attr-dim", self.attr_dim),
            ("feat-dim", self.feat_dim),
            ("per-class", self.per_class),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if !(self.noise >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "noise must be nonnegative, got {}",
                self.noise
            )));
        }
        Ok(())
    }
}

/// Generates a linear synthetic task.
///
/// Class embeddings are drawn uniformly on the unit sphere in attribute
/// space. A fixed random linear map sends each embedding to a visual-
/// space class center (map entries have variance 1/d, so centers sit
/// near unit norm), and samples scatter around their center with
/// isotropic Gaussian noise. Seen-class samples split 60/20/20 into
/// train/val/seen-test; unseen-class samples all go to the unseen test
/// split. Sample order is class-major, so split files stay readable.
pub fn generate_synthetic(cfg: &SynthConfig) -> Result<Dataset> {
    cfg.validate()?;
    let c = cfg.classes_seen + cfg.classes_unseen;
    let root = Rng::new(cfg.seed);

    let mut embeddings = Matrix::zeros(c, cfg.attr_dim);
    let mut emb_rng = root.derive(1, 0, 0);
    for class in 0..c {
        loop {
            let v: Vec<f64> = (0..cfg.attr_dim)
                .map(|_| emb_rng.standard_normal())
                .collect();
            let norm = l2_norm(&v);
            if norm > 1e-9 {
                for (j, x) in v.iter().enumerate() {
                    embeddings.set(class, j, x / norm);
                }
                break;
            }
        }
    }

    let mut map_rng = root.derive(2, 0, 0);
    let scale = (1.0 / cfg.feat_dim as f64).sqrt();
    let linear_map = Matrix::from_vec(
        cfg.attr_dim,
        cfg.feat_dim,
        (0..cfg.attr_dim * cfg.feat_dim)
            .map(|_| scale * map_rng.standard_normal())
            .collect(),
    )?;
    let centers = embeddings.matmul(&linear_map)?;

    let n = c * cfg.per_class;
    let mut features = Matrix::zeros(n, cfg.feat_dim);
    let mut labels = Vec::with_capacity(n);
    let mut splits = Splits::default();
    // within each seen class: 60% train, 20% val, 20% seen test
    let train_per = ((cfg.per_class * 3) / 5).max(1);
    let val_per = (cfg.per_class - train_per) / 2;
    let mut sample = 0;
    for class in 0..c {
        let mut noise_rng = root.derive(3, class as u64, 0);
        for k in 0..cfg.per_class {
            for j in 0..cfg.feat_dim {
                let wobble = cfg.noise * noise_rng.standard_normal();
                features.set(sample, j, centers.get(class, j) + wobble);
            }
            labels.push(class);
            if class < cfg.classes_seen {
                if k < train_per {
                    splits.train.push(sample);
                } else if k < train_per + val_per {
                    splits.val.push(sample);
                } else {
                    splits.test_seen.push(sample);
                }
            } else {
                splits.test_unseen.push(sample);
            }
            sample += 1;
        }
    }

    let class_names = (0..c).map(|i| format!("class_{i:03}")).collect();
    Dataset::new(features, labels, embeddings, class_names, splits)
}
