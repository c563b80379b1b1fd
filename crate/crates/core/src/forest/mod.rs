//! Probabilistic random decision forest for binary water/non-water labels.
//!
//! Trees use axis-aligned `x[feature] <= threshold` splits chosen by Gini
//! impurity over a random feature subset, with thresholds at midpoints between
//! consecutive distinct values. Leaves store the fraction of water samples.

mod dataset;

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use dataset::{Dataset, Provenance, Sample};

use crate::error::{Error, Result};
use crate::Label;

pub const MODEL_FORMAT: &str = "aquascan-forest";
pub const MODEL_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// `None` grows until purity or `min_leaf`.
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    /// `None` means `ceil(sqrt(d))`.
    pub features_per_split: Option<usize>,
    pub bootstrap: bool,
    /// Leaf posterior `(water + 1) / (total + 2)` instead of the raw fraction.
    pub laplace: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 100,
            max_depth: Some(16),
            min_leaf: 5,
            features_per_split: None,
            bootstrap: true,
            laplace: true,
            seed: 0,
        }
    }
}

impl ForestConfig {
    fn validate(&self) -> Result<()> {
        if self.n_trees == 0
            || self.min_leaf == 0
            || self.max_depth == Some(0)
            || self.features_per_split == Some(0)
        {
            return Err(Error::Invalid(
                "forest counts (trees, depth, min_leaf, features) must be >= 1".into(),
            ));
        }
        Ok(())
    }

    pub fn features_for(&self, descriptor_len: usize) -> usize {
        self.features_per_split
            .unwrap_or_else(|| (descriptor_len as f64).sqrt().ceil() as usize)
            .clamp(1, descriptor_len.max(1))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        water: f64,
    },
}

/// Nodes in creation order; the root is node 0 and children always follow
/// their parent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { water } => return water,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    fn validate(&self, descriptor_len: usize) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::Model("tree without nodes".into()));
        }
        for (i, node) in self.nodes.iter().enumerate() {
            match *node {
                Node::Leaf { water } => {
                    if !(0.0..=1.0).contains(&water) {
                        return Err(Error::Model(format!(
                            "leaf probability {} outside [0, 1]",
                            water
                        )));
                    }
                }
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    if feature >= descriptor_len {
                        return Err(Error::Model(format!(
                            "split on feature {} but descriptors have {}",
                            feature, descriptor_len
                        )));
                    }
                    if !threshold.is_finite() {
                        return Err(Error::Model("non-finite split threshold".into()));
                    }
                    let n = self.nodes.len();
                    if left <= i || right <= i || left >= n || right >= n {
                        return Err(Error::Model(format!("node {} has invalid children", i)));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub format: String,
    pub version: u32,
    pub descriptor_len: usize,
    pub seed: u64,
    /// Which descriptor block the model was trained on, e.g. "hybrid".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_set: Option<String>,
    pub config: ForestConfig,
    pub trees: Vec<Tree>,
}

impl ForestModel {
    pub fn new(descriptor_len: usize, config: ForestConfig, trees: Vec<Tree>) -> Result<Self> {
        let model = ForestModel {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            descriptor_len,
            seed: config.seed,
            feature_set: None,
            config,
            trees,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if self.format != MODEL_FORMAT {
            return Err(Error::Model(format!(
                "unknown model format {:?}",
                self.format
            )));
        }
        if self.version != MODEL_VERSION {
            return Err(Error::Model(format!(
                "model version {} unsupported (expected {})",
                self.version, MODEL_VERSION
            )));
        }
        if self.trees.is_empty() {
            return Err(Error::Model("forest has no trees".into()));
        }
        if self.descriptor_len == 0 {
            return Err(Error::Model("descriptor length is zero".into()));
        }
        self.trees
            .iter()
            .try_for_each(|t| t.validate(self.descriptor_len))
    }
}

/// Water probability: the mean of the trees' leaf posteriors.
pub fn predict_proba(model: &ForestModel, descriptor: &[f64]) -> Result<f64> {
    if descriptor.len() != model.descriptor_len {
        return Err(Error::Dimension(format!(
            "descriptor has {} values, model expects {}",
            descriptor.len(),
            model.descriptor_len
        )));
    }
    let sum: f64 = model.trees.iter().map(|t| t.predict(descriptor)).sum();
    Ok(sum / model.trees.len() as f64)
}

fn tree_seed(seed: u64, tree: usize) -> u64 {
    // splitmix64 finaliser
    let mut z = seed.wrapping_add((tree as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

struct TreeBuilder<'a> {
    rows: &'a [Sample],
    cfg: &'a ForestConfig,
    n_features: usize,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    impurity: f64,
}

impl TreeBuilder<'_> {
    fn leaf_value(&self, water: usize, total: usize) -> f64 {
        if self.cfg.laplace {
            (water as f64 + 1.0) / (total as f64 + 2.0)
        } else {
            water as f64 / total as f64
        }
    }

    fn water_count(&self, idx: &[usize]) -> usize {
        idx.iter()
            .filter(|&&i| self.rows[i].label == Label::Water)
            .count()
    }

    fn find_split(&mut self, idx: &[usize]) -> Option<BestSplit> {
        let n = idx.len();
        let d = self.rows[0].values.len();
        let min_leaf = self.cfg.min_leaf;
        let total_water = self.water_count(idx);
        let mut features: Vec<usize> = (0..d).collect();
        let mut best: Option<BestSplit> = None;
        let mut tried = 0;
        let mut column: Vec<(f64, bool)> = Vec::with_capacity(n);
        // Partial Fisher-Yates: draw features until enough non-constant ones
        // have been examined.
        for k in 0..d {
            if tried == self.n_features {
                break;
            }
            let j = self.rng.gen_range(k..d);
            features.swap(k, j);
            let f = features[k];
            column.clear();
            column.extend(
                idx.iter()
                    .map(|&i| (self.rows[i].values[f], self.rows[i].label == Label::Water)),
            );
            column.sort_by(|a, b| a.0.total_cmp(&b.0));
            if column[0].0 == column[n - 1].0 {
                continue;
            }
            tried += 1;
            let mut left_water = 0usize;
            for i in 1..n {
                left_water += column[i - 1].1 as usize;
                if column[i - 1].0 == column[i].0 || i < min_leaf || n - i < min_leaf {
                    continue;
                }
                let (nl, nr) = (i as f64, (n - i) as f64);
                let pl = left_water as f64 / nl;
                let pr = (total_water - left_water) as f64 / nr;
                let impurity = nl * 2.0 * pl * (1.0 - pl) + nr * 2.0 * pr * (1.0 - pr);
                if best.as_ref().is_none_or(|b| impurity < b.impurity) {
                    let (lo, hi) = (column[i - 1].0, column[i].0);
                    let mut threshold = lo + (hi - lo) / 2.0;
                    if threshold >= hi {
                        threshold = lo;
                    }
                    best = Some(BestSplit {
                        feature: f,
                        threshold,
                        impurity,
                    });
                }
            }
        }
        best
    }

    fn build(&mut self, idx: &mut [usize], depth: usize) -> usize {
        let n = idx.len();
        let water = self.water_count(idx);
        let node_id = self.nodes.len();
        self.nodes.push(Node::Leaf {
            water: self.leaf_value(water, n),
        });
        let stop = water == 0
            || water == n
            || n < 2 * self.cfg.min_leaf
            || self.cfg.max_depth.is_some_and(|d| depth >= d);
        if stop {
            return node_id;
        }
        let Some(split) = self.find_split(idx) else {
            return node_id;
        };
        let mut mid = 0;
        for i in 0..n {
            if self.rows[idx[i]].values[split.feature] <= split.threshold {
                idx.swap(i, mid);
                mid += 1;
            }
        }
        let (l, r) = idx.split_at_mut(mid);
        let left = self.build(l, depth + 1);
        let right = self.build(r, depth + 1);
        self.nodes[node_id] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        node_id
    }
}

fn grow_tree(ds: &Dataset, cfg: &ForestConfig, tree: usize) -> Tree {
    let rows = ds.rows();
    let mut rng = ChaCha8Rng::seed_from_u64(tree_seed(cfg.seed, tree));
    let mut idx: Vec<usize> = if cfg.bootstrap {
        (0..rows.len())
            .map(|_| rng.gen_range(0..rows.len()))
            .collect()
    } else {
        (0..rows.len()).collect()
    };
    // Bootstrap order is irrelevant to the splits; sorting keeps partitions stable.
    idx.sort_unstable();
    let mut builder = TreeBuilder {
        rows,
        cfg,
        n_features: cfg.features_for(ds.descriptor_len()),
        rng,
        nodes: Vec::new(),
    };
    builder.build(&mut idx, 0);
    Tree {
        nodes: builder.nodes,
    }
}

/// Grows `cfg.n_trees` trees in parallel; the result depends only on the
/// dataset and the configuration (including its seed).
pub fn train(ds: &Dataset, cfg: &ForestConfig) -> Result<ForestModel> {
    cfg.validate()?;
    if ds.len() < 2 {
        return Err(Error::Invalid("training needs at least 2 rows".into()));
    }
    let (nonwater, water) = ds.class_counts();
    if nonwater == 0 || water == 0 {
        return Err(Error::Invalid(format!(
            "training data holds a single class ({} water, {} non-water rows); check the labels",
            water, nonwater
        )));
    }
    let trees: Vec<Tree> = (0..cfg.n_trees)
        .into_par_iter()
        .map(|t| grow_tree(ds, cfg, t))
        .collect();
    ForestModel::new(ds.descriptor_len(), cfg.clone(), trees)
}

pub fn to_json(model: &ForestModel) -> Result<Vec<u8>> {
    Ok(serde_json::to_vec(model)?)
}

pub fn from_json(bytes: &[u8]) -> Result<ForestModel> {
    let model: ForestModel = serde_json::from_slice(bytes)
        .map_err(|e| Error::Model(format!("corrupt model file: {}", e)))?;
    model.validate()?;
    Ok(model)
}

pub fn save_model(model: &ForestModel, path: &Path) -> Result<()> {
    fs::write(path, to_json(model)?).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<ForestModel> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_json(&bytes)
}
