//! Gradient-boosted trees on logistic loss.
//!
//! Trees are grown level by level with exact greedy splits over presorted
//! feature columns. Leaf values are Newton steps `-G / (H + lambda)`.
//! With `dropout_rate > 0`, each round drops a random subset of the existing
//! trees, fits the new tree against the remaining ensemble, then rescales:
//! the new tree gets weight `lr / (k + lr)` and each of the `k` dropped trees
//! is multiplied by `k / (k + lr)`. With no trees dropped this is ordinary
//! shrinkage by `lr`.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::loss;
use super::{
    Dataset, LearnError, LearnerConfig, ModelKind, Node, SurrogateModel, TrainingMetadata, Tree,
    MODEL_VERSION,
};
use crate::rng::{stream, Domain};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbdtConfig {
    pub num_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_samples_leaf: usize,
    pub dropout_rate: f64,
    pub subsample: f64,
    /// L2 penalty on leaf values.
    pub lambda: f64,
    pub seed: u64,
}

impl Default for GbdtConfig {
    fn default() -> Self {
        Self {
            num_trees: 200,
            max_depth: 5,
            learning_rate: 0.1,
            min_samples_leaf: 20,
            dropout_rate: 0.1,
            subsample: 1.0,
            lambda: 1.0,
            seed: 0,
        }
    }
}

impl GbdtConfig {
    pub fn validate(&self) -> Result<(), LearnError> {
        let bad = |m: &str| Err(LearnError::InvalidConfig(m.to_string()));
        if self.num_trees == 0 {
            return bad("num_trees must be >= 1");
        }
        if !(1..=14).contains(&self.max_depth) {
            return bad("max_depth must be in 1..=14");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad("learning_rate must be in (0, 1]");
        }
        if self.min_samples_leaf == 0 {
            return bad("min_samples_leaf must be >= 1");
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad("dropout_rate must be in [0, 1)");
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return bad("subsample must be in (0, 1]");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be >= 0");
        }
        Ok(())
    }
}

/// Features with at most this many distinct values are scanned through
/// per-value statistics instead of presorted rows. Both scans visit every
/// distinct value, so splits stay exact.
const MAX_DISTINCT: usize = 4096;

enum Column {
    /// Distinct values ascending, and each row's index into them.
    Discrete { values: Vec<f64>, index: Vec<u16> },
    /// Row indices in ascending value order, with the values in that order.
    Sorted { order: Vec<u32>, values: Vec<f64> },
}

struct Columns {
    values: Vec<Vec<f64>>,
    columns: Vec<Column>,
}

impl Columns {
    fn new(data: &Dataset) -> Self {
        let n = data.len();
        let values: Vec<Vec<f64>> = (0..data.n_features())
            .map(|f| (0..n).map(|i| data.row(i)[f]).collect())
            .collect();
        let columns = values
            .iter()
            .map(|col| {
                let mut order: Vec<u32> = (0..n as u32).collect();
                order.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]));
                let sorted: Vec<f64> = order.iter().map(|&i| col[i as usize]).collect();
                let mut distinct = sorted.clone();
                distinct.dedup();
                if distinct.len() <= MAX_DISTINCT {
                    let mut index = vec![0u16; n];
                    let mut k = 0;
                    for (&i, &v) in order.iter().zip(&sorted) {
                        while distinct[k] != v {
                            k += 1;
                        }
                        index[i as usize] = k as u16;
                    }
                    Column::Discrete {
                        values: distinct,
                        index,
                    }
                } else {
                    Column::Sorted {
                        order,
                        values: sorted,
                    }
                }
            })
            .collect();
        Self { values, columns }
    }
}

/// Gradient statistics of one row and its frontier slot, packed for the split scan.
#[derive(Clone, Copy)]
struct RowInfo {
    g: f64,
    h: f64,
    slot: u32,
}

const NO_SLOT: u32 = u32::MAX;

#[derive(Clone, Copy, Default)]
struct Stats {
    g: f64,
    h: f64,
    n: usize,
}

impl Stats {
    fn score(&self, lambda: f64) -> f64 {
        self.g * self.g / (self.h + lambda)
    }
}

#[derive(Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
    left: Stats,
}

const MIN_GAIN: f64 = 1e-12;

/// Grows one tree; returns its nodes and the leaf node of every row.
fn grow(
    cols: &Columns,
    g: &[f64],
    h: &[f64],
    in_bag: Option<&[bool]>,
    cfg: &GbdtConfig,
) -> (Vec<Node>, Vec<u16>) {
    let n = g.len();
    let bag = |i: usize| in_bag.is_none_or(|b| b[i]);
    let mut root = Stats::default();
    for i in (0..n).filter(|&i| bag(i)) {
        root.g += g[i];
        root.h += h[i];
        root.n += 1;
    }
    let mut stats = vec![root];
    let mut splits: Vec<Option<(usize, f64, usize, usize)>> = vec![None];
    let mut node_of = vec![0u16; n];
    let mut frontier = vec![0usize];

    for _depth in 0..cfg.max_depth {
        if frontier.is_empty() {
            break;
        }
        let mut slot_of = vec![NO_SLOT; stats.len()];
        for (s, &node) in frontier.iter().enumerate() {
            slot_of[node] = s as u32;
        }
        let info: Vec<RowInfo> = (0..n)
            .map(|i| RowInfo {
                g: g[i],
                h: h[i],
                slot: if bag(i) {
                    slot_of[node_of[i] as usize]
                } else {
                    NO_SLOT
                },
            })
            .collect();
        let parents: Vec<Stats> = frontier.iter().map(|&node| stats[node]).collect();
        let parent_scores: Vec<f64> = parents.iter().map(|p| p.score(cfg.lambda)).collect();
        let mut best: Vec<Option<Candidate>> = vec![None; frontier.len()];
        let mut left = vec![Stats::default(); frontier.len()];
        let mut last = vec![f64::NAN; frontier.len()];
        // Called at the first row (or value) of each new distinct value `v`
        // in slot `s`, with `left` holding every smaller value.
        let consider =
            |best: &mut Option<Candidate>, s: usize, l: Stats, last: f64, v: f64, f: usize| {
                let parent = parents[s];
                if v > last && l.n >= cfg.min_samples_leaf && parent.n - l.n >= cfg.min_samples_leaf
                {
                    let r = Stats {
                        g: parent.g - l.g,
                        h: parent.h - l.h,
                        n: parent.n - l.n,
                    };
                    let gain = l.score(cfg.lambda) + r.score(cfg.lambda) - parent_scores[s];
                    if gain > MIN_GAIN && best.is_none_or(|b| gain > b.gain) {
                        let mut threshold = 0.5 * (last + v);
                        if threshold >= v {
                            threshold = last;
                        }
                        *best = Some(Candidate {
                            gain,
                            feature: f,
                            threshold,
                            left: l,
                        });
                    }
                }
            };
        for (f, column) in cols.columns.iter().enumerate() {
            left.iter_mut().for_each(|s| *s = Stats::default());
            last.iter_mut().for_each(|v| *v = f64::NAN);
            match column {
                Column::Discrete { values, index } => {
                    let nb = values.len();
                    let mut hist = vec![Stats::default(); frontier.len() * nb];
                    for (row, &b) in info.iter().zip(index) {
                        if row.slot == NO_SLOT {
                            continue;
                        }
                        let cell = &mut hist[row.slot as usize * nb + b as usize];
                        cell.g += row.g;
                        cell.h += row.h;
                        cell.n += 1;
                    }
                    for s in 0..frontier.len() {
                        for (b, cell) in hist[s * nb..(s + 1) * nb].iter().enumerate() {
                            if cell.n == 0 {
                                continue;
                            }
                            consider(&mut best[s], s, left[s], last[s], values[b], f);
                            let l = &mut left[s];
                            l.g += cell.g;
                            l.h += cell.h;
                            l.n += cell.n;
                            last[s] = values[b];
                        }
                    }
                }
                Column::Sorted { order, values } => {
                    for (&i, &v) in order.iter().zip(values) {
                        let row = info[i as usize];
                        if row.slot == NO_SLOT {
                            continue;
                        }
                        let s = row.slot as usize;
                        consider(&mut best[s], s, left[s], last[s], v, f);
                        let l = &mut left[s];
                        l.g += row.g;
                        l.h += row.h;
                        l.n += 1;
                        last[s] = v;
                    }
                }
            }
        }

        let mut next = Vec::new();
        for (s, cand) in best.iter().enumerate() {
            let Some(c) = cand else { continue };
            let node = frontier[s];
            let parent = stats[node];
            let right = Stats {
                g: parent.g - c.left.g,
                h: parent.h - c.left.h,
                n: parent.n - c.left.n,
            };
            let l = stats.len();
            stats.push(c.left);
            stats.push(right);
            splits.push(None);
            splits.push(None);
            splits[node] = Some((c.feature, c.threshold, l, l + 1));
            next.push(l);
            next.push(l + 1);
        }
        if next.is_empty() {
            break;
        }
        for (i, node) in node_of.iter_mut().enumerate() {
            if let Some((f, t, l, r)) = splits[*node as usize] {
                *node = if cols.values[f][i] <= t {
                    l as u16
                } else {
                    r as u16
                };
            }
        }
        frontier = next;
    }

    let nodes = stats
        .iter()
        .zip(&splits)
        .map(|(st, sp)| match *sp {
            Some((feature, threshold, left, right)) => Node::Split {
                feature,
                threshold,
                left,
                right,
            },
            None => Node::Leaf {
                value: -st.g / (st.h + cfg.lambda),
            },
        })
        .collect();
    (nodes, node_of)
}

fn leaf_value(nodes: &[Node], idx: u16) -> f64 {
    match nodes[idx as usize] {
        Node::Leaf { value } => value,
        Node::Split { .. } => unreachable!("rows end in leaves"),
    }
}

fn mean_loss(scores: &[f64], y: &[f64]) -> f64 {
    scores
        .iter()
        .zip(y)
        .map(|(&s, &y)| loss::log_loss(s, y))
        .sum::<f64>()
        / scores.len() as f64
}

pub fn train_gbdt(data: &Dataset, cfg: &GbdtConfig) -> Result<SurrogateModel, LearnError> {
    cfg.validate()?;
    data.check_trainable()?;
    let n = data.len();
    let y: Vec<f64> = data.labels().iter().map(|&v| v as f64).collect();
    let positives = data.positives();
    let base = loss::logit(positives as f64 / n as f64);
    let cols = Columns::new(data);
    let mut rng = stream(cfg.seed, Domain::Gbdt, 0);

    let mut trees: Vec<Tree> = Vec::with_capacity(cfg.num_trees);
    let mut leaves: Vec<Vec<u16>> = Vec::new();
    let mut scores = vec![base; n];
    let mut working = vec![0.0; n];
    let mut g = vec![0.0; n];
    let mut h = vec![0.0; n];
    let mut trace = Vec::with_capacity(cfg.num_trees);
    let mut rows: Vec<usize> = (0..n).collect();
    let mut in_bag = vec![true; n];

    for _ in 0..cfg.num_trees {
        let dropped: Vec<usize> = if cfg.dropout_rate > 0.0 {
            (0..trees.len())
                .filter(|_| rng.random::<f64>() < cfg.dropout_rate)
                .collect()
        } else {
            Vec::new()
        };
        working.copy_from_slice(&scores);
        for &k in &dropped {
            let (w, nodes, lv) = (trees[k].weight, &trees[k].nodes, &leaves[k]);
            for i in 0..n {
                working[i] -= w * leaf_value(nodes, lv[i]);
            }
        }
        for i in 0..n {
            g[i] = loss::gradient(working[i], y[i]);
            h[i] = loss::hessian(working[i]);
        }
        let bag = if cfg.subsample < 1.0 {
            let m = ((n as f64 * cfg.subsample).round() as usize).max(1);
            rows.shuffle(&mut rng);
            in_bag.iter_mut().for_each(|b| *b = false);
            rows[..m].iter().for_each(|&i| in_bag[i] = true);
            Some(in_bag.as_slice())
        } else {
            None
        };
        let (nodes, leaf_of) = grow(&cols, &g, &h, bag, cfg);

        let k = dropped.len() as f64;
        let new_weight = if dropped.is_empty() {
            cfg.learning_rate
        } else {
            cfg.learning_rate / (k + cfg.learning_rate)
        };
        let scale = k / (k + cfg.learning_rate);
        for &d in &dropped {
            trees[d].weight *= scale;
        }
        scores.copy_from_slice(&working);
        for &d in &dropped {
            let (w, nodes, lv) = (trees[d].weight, &trees[d].nodes, &leaves[d]);
            for i in 0..n {
                scores[i] += w * leaf_value(nodes, lv[i]);
            }
        }
        for i in 0..n {
            scores[i] += new_weight * leaf_value(&nodes, leaf_of[i]);
        }
        trace.push(mean_loss(&scores, &y));
        trees.push(Tree {
            weight: new_weight,
            nodes,
        });
        if cfg.dropout_rate > 0.0 {
            leaves.push(leaf_of);
        }
    }

    Ok(SurrogateModel {
        version: MODEL_VERSION.to_string(),
        kind: ModelKind::Gbdt,
        feature_count: data.n_features(),
        base_score: base,
        trees,
        weights: Vec::new(),
        metadata: TrainingMetadata {
            config: LearnerConfig::Gbdt(cfg.clone()),
            data_hash: data.content_hash(),
            n_examples: n,
            n_positive: positives,
            training_log_loss: trace,
            train_window: None,
        },
    })
}
