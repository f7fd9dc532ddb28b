use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{argmax_first, shifted_mean, ColumnKind, DenseColumns, ForestConfig, Task};

/// Minimum impurity decrease for a split to count.
const MIN_GAIN: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SplitRule {
    /// Values `<= threshold` go left.
    Threshold(f64),
    /// Bit `c` set: category `c` goes left.
    Categories(u64),
}

impl SplitRule {
    fn goes_left(&self, v: f64) -> bool {
        match *self {
            SplitRule::Threshold(t) => v <= t,
            SplitRule::Categories(mask) => {
                let c = v as usize;
                c < 64 && mask & (1u64 << c) != 0
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Split {
        feature: u32,
        rule: SplitRule,
        left: u32,
        right: u32,
    },
    Leaf(f64),
    ClassLeaf(Vec<u32>),
}

/// A fitted tree stored as a flat arena; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<TreeNode>,
}

struct Candidate {
    gain: f64,
    feature: usize,
    rule: SplitRule,
}

struct Grower<'a> {
    x: &'a DenseColumns,
    y: &'a [f64],
    task: Task,
    config: &'a ForestConfig,
    mtry: usize,
    rng: ChaCha8Rng,
    nodes: Vec<TreeNode>,
}

impl Tree {
    pub(super) fn grow(
        x: &DenseColumns,
        y: &[f64],
        task: Task,
        config: &ForestConfig,
        mtry: usize,
        seed: u64,
    ) -> Tree {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = x.n_rows();
        let mut sample: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
        let mut g = Grower {
            x,
            y,
            task,
            config,
            mtry,
            rng,
            nodes: Vec::new(),
        };
        g.build(&mut sample, 0);
        Tree { nodes: g.nodes }
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    fn leaf_for(&self, row: &[f64]) -> &TreeNode {
        let mut i = 0usize;
        loop {
            match &self.nodes[i] {
                TreeNode::Split {
                    feature,
                    rule,
                    left,
                    right,
                } => {
                    i = if rule.goes_left(row[*feature as usize]) {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
                leaf => return leaf,
            }
        }
    }

    pub fn predict_value(&self, row: &[f64]) -> f64 {
        match self.leaf_for(row) {
            TreeNode::Leaf(v) => *v,
            TreeNode::ClassLeaf(counts) => {
                let counts: Vec<usize> = counts.iter().map(|&c| c as usize).collect();
                argmax_first(&counts) as f64
            }
            TreeNode::Split { .. } => unreachable!(),
        }
    }

    pub fn predict_class(&self, row: &[f64]) -> usize {
        self.predict_value(row) as usize
    }
}

impl Grower<'_> {
    fn make_leaf(&self, idx: &[usize]) -> TreeNode {
        match self.task {
            Task::Regression => {
                TreeNode::Leaf(shifted_mean(idx.iter().map(|&i| self.y[i])))
            }
            Task::Classification { n_classes } => {
                let mut counts = vec![0u32; n_classes];
                for &i in idx {
                    counts[self.y[i] as usize] += 1;
                }
                TreeNode::ClassLeaf(counts)
            }
        }
    }

    fn build(&mut self, idx: &mut [usize], depth: usize) -> u32 {
        let id = self.nodes.len() as u32;
        self.nodes.push(TreeNode::Leaf(0.0));
        let min_leaf = self.config.min_leaf;
        let split = if depth >= self.config.max_depth || idx.len() < 2 * min_leaf {
            None
        } else {
            self.best_split(idx)
        };
        match split {
            None => {
                self.nodes[id as usize] = self.make_leaf(idx);
            }
            Some(c) => {
                let col = self.x.column(c.feature);
                // stable partition keeps sample order deterministic
                let (mut l, mut r): (Vec<usize>, Vec<usize>) =
                    idx.iter().partition(|&&i| c.rule.goes_left(col[i]));
                let left = self.build(&mut l, depth + 1);
                let right = self.build(&mut r, depth + 1);
                self.nodes[id as usize] = TreeNode::Split {
                    feature: c.feature as u32,
                    rule: c.rule,
                    left,
                    right,
                };
            }
        }
        id
    }

    fn sample_features(&mut self) -> Vec<usize> {
        let p = self.x.n_features();
        let mut all: Vec<usize> = (0..p).collect();
        for i in 0..self.mtry {
            let j = self.rng.random_range(i..p);
            all.swap(i, j);
        }
        let mut chosen = all[..self.mtry].to_vec();
        chosen.sort_unstable();
        chosen
    }

    fn best_split(&mut self, idx: &[usize]) -> Option<Candidate> {
        let features = self.sample_features();
        let mut best: Option<Candidate> = None;
        for f in features {
            let cand = match (self.x.kinds()[f], self.task) {
                (ColumnKind::Continuous, Task::Regression) => self.continuous_regression(f, idx),
                (ColumnKind::Continuous, Task::Classification { n_classes }) => {
                    self.continuous_classification(f, idx, n_classes)
                }
                (ColumnKind::Categorical { n_categories }, task) => {
                    self.categorical(f, idx, n_categories, task)
                }
            };
            if let Some(c) = cand {
                if c.gain > MIN_GAIN && best.as_ref().is_none_or(|b| c.gain > b.gain) {
                    best = Some(c);
                }
            }
        }
        best
    }

    fn sorted_by_feature(&self, f: usize, idx: &[usize]) -> Vec<(f64, usize)> {
        let col = self.x.column(f);
        let mut pairs: Vec<(f64, usize)> = idx.iter().map(|&i| (col[i], i)).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        pairs
    }

    fn continuous_regression(&self, f: usize, idx: &[usize]) -> Option<Candidate> {
        let pairs = self.sorted_by_feature(f, idx);
        let n = pairs.len();
        // centring keeps a constant target at exactly zero gain
        let centre = shifted_mean(idx.iter().map(|&i| self.y[i]));
        let total: f64 = pairs.iter().map(|&(_, i)| self.y[i] - centre).sum();
        let parent = total * total / n as f64;
        let min_leaf = self.config.min_leaf;
        let mut left_sum = 0.0;
        let mut best: Option<(f64, f64)> = None;
        for k in 0..n - 1 {
            left_sum += self.y[pairs[k].1] - centre;
            let nl = k + 1;
            let nr = n - nl;
            if pairs[k].0 == pairs[k + 1].0 || nl < min_leaf || nr < min_leaf {
                continue;
            }
            let right_sum = total - left_sum;
            let gain = left_sum * left_sum / nl as f64 + right_sum * right_sum / nr as f64 - parent;
            if best.is_none_or(|(g, _)| gain > g) {
                best = Some((gain, 0.5 * (pairs[k].0 + pairs[k + 1].0)));
            }
        }
        best.map(|(gain, t)| Candidate {
            gain,
            feature: f,
            rule: SplitRule::Threshold(t),
        })
    }

    fn continuous_classification(&self, f: usize, idx: &[usize], k: usize) -> Option<Candidate> {
        let pairs = self.sorted_by_feature(f, idx);
        let n = pairs.len();
        let mut total = vec![0usize; k];
        for &(_, i) in &pairs {
            total[self.y[i] as usize] += 1;
        }
        let parent = weighted_gini(&total, n);
        let min_leaf = self.config.min_leaf;
        let mut left = vec![0usize; k];
        let mut best: Option<(f64, f64)> = None;
        for j in 0..n - 1 {
            left[self.y[pairs[j].1] as usize] += 1;
            let nl = j + 1;
            let nr = n - nl;
            if pairs[j].0 == pairs[j + 1].0 || nl < min_leaf || nr < min_leaf {
                continue;
            }
            let right: Vec<usize> = total.iter().zip(&left).map(|(t, l)| t - l).collect();
            let gain = parent - weighted_gini(&left, nl) - weighted_gini(&right, nr);
            if best.is_none_or(|(g, _)| gain > g) {
                best = Some((gain, 0.5 * (pairs[j].0 + pairs[j + 1].0)));
            }
        }
        best.map(|(gain, t)| Candidate {
            gain,
            feature: f,
            rule: SplitRule::Threshold(t),
        })
    }

    /// Orders the categories present in the node by mean target (regression)
    /// or by the share of the node's majority class (classification), then
    /// scans prefixes of that order as the left set.
    fn categorical(&self, f: usize, idx: &[usize], n_cat: usize, task: Task) -> Option<Candidate> {
        let col = self.x.column(f);
        let n_classes = match task {
            Task::Regression => 0,
            Task::Classification { n_classes } => n_classes,
        };
        let centre = if n_classes == 0 {
            shifted_mean(idx.iter().map(|&i| self.y[i]))
        } else {
            0.0
        };
        let mut count = vec![0usize; n_cat];
        let mut sum = vec![0.0; n_cat];
        let mut class_counts = vec![vec![0usize; n_classes]; n_cat];
        for &i in idx {
            let c = col[i] as usize;
            count[c] += 1;
            sum[c] += self.y[i] - centre;
            if n_classes > 0 {
                class_counts[c][self.y[i] as usize] += 1;
            }
        }
        let present: Vec<usize> = (0..n_cat).filter(|&c| count[c] > 0).collect();
        if present.len() < 2 {
            return None;
        }
        let key: Vec<f64> = if n_classes == 0 {
            (0..n_cat).map(|c| if count[c] > 0 { sum[c] / count[c] as f64 } else { 0.0 }).collect()
        } else {
            let mut totals = vec![0usize; n_classes];
            for cc in &class_counts {
                for (t, v) in totals.iter_mut().zip(cc) {
                    *t += v;
                }
            }
            let major = argmax_first(&totals);
            (0..n_cat)
                .map(|c| {
                    if count[c] > 0 {
                        class_counts[c][major] as f64 / count[c] as f64
                    } else {
                        0.0
                    }
                })
                .collect()
        };
        let mut order = present;
        order.sort_by(|&a, &b| key[a].total_cmp(&key[b]).then(a.cmp(&b)));

        let n = idx.len();
        let min_leaf = self.config.min_leaf;
        let mut best: Option<(f64, u64)> = None;
        let mut mask = 0u64;
        let mut nl = 0usize;
        if n_classes == 0 {
            let total: f64 = sum.iter().sum();
            let parent = total * total / n as f64;
            let mut left_sum = 0.0;
            for &c in &order[..order.len() - 1] {
                mask |= 1 << c;
                nl += count[c];
                left_sum += sum[c];
                let nr = n - nl;
                if nl < min_leaf || nr < min_leaf {
                    continue;
                }
                let rs = total - left_sum;
                let gain = left_sum * left_sum / nl as f64 + rs * rs / nr as f64 - parent;
                if best.is_none_or(|(g, _)| gain > g) {
                    best = Some((gain, mask));
                }
            }
        } else {
            let mut total = vec![0usize; n_classes];
            for cc in &class_counts {
                for (t, v) in total.iter_mut().zip(cc) {
                    *t += v;
                }
            }
            let parent = weighted_gini(&total, n);
            let mut left = vec![0usize; n_classes];
            for &c in &order[..order.len() - 1] {
                mask |= 1 << c;
                nl += count[c];
                for (l, v) in left.iter_mut().zip(&class_counts[c]) {
                    *l += v;
                }
                let nr = n - nl;
                if nl < min_leaf || nr < min_leaf {
                    continue;
                }
                let right: Vec<usize> = total.iter().zip(&left).map(|(t, l)| t - l).collect();
                let gain = parent - weighted_gini(&left, nl) - weighted_gini(&right, nr);
                if best.is_none_or(|(g, _)| gain > g) {
                    best = Some((gain, mask));
                }
            }
        }
        best.map(|(gain, mask)| Candidate {
            gain,
            feature: f,
            rule: SplitRule::Categories(mask),
        })
    }
}

/// `n · Gini(counts)`.
fn weighted_gini(counts: &[usize], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let nf = n as f64;
    let sq: f64 = counts.iter().map(|&c| (c as f64) * (c as f64)).sum();
    nf - sq / nf
}
