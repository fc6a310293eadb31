use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForestParams {
    #[serde(default = "default_trees")]
    pub n_trees: usize,
    #[serde(default = "default_depth")]
    pub max_depth: usize,
    #[serde(default = "default_min_leaf")]
    pub min_leaf: usize,
    /// Columns tried per split; `floor(sqrt(d))` when unset.
    #[serde(default)]
    pub max_features: Option<usize>,
    #[serde(default = "default_bootstrap")]
    pub bootstrap: bool,
}

fn default_trees() -> usize {
    100
}
fn default_depth() -> usize {
    8
}
fn default_min_leaf() -> usize {
    2
}
fn default_bootstrap() -> bool {
    true
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: default_trees(),
            max_depth: default_depth(),
            min_leaf: default_min_leaf(),
            max_features: None,
            bootstrap: default_bootstrap(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf {
        class: u32,
        counts: Vec<usize>,
    },
    Split {
        column: usize,
        threshold: f64,
        left: usize,
        right: usize,
        /// Samples reaching the node times its impurity decrease.
        gain: f64,
        samples: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
    pub n_samples: usize,
}

impl Tree {
    pub fn predict_row(&self, row: &[f64]) -> u32 {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { class, .. } => return *class,
                Node::Split {
                    column,
                    threshold,
                    left,
                    right,
                    ..
                } => at = if row[*column] <= *threshold { *left } else { *right },
            }
        }
    }

    /// Impurity decrease per column, weighted by node sample fraction.
    pub fn importances(&self, width: usize) -> Vec<f64> {
        let mut imp = vec![0.0; width];
        for n in &self.nodes {
            if let Node::Split { column, gain, .. } = n {
                imp[*column] += gain / self.n_samples as f64;
            }
        }
        imp
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, at: usize) -> usize {
            match &t.nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(t, *left).max(go(t, *right)),
            }
        }
        go(self, 0)
    }
}

fn gini(counts: &[usize], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>()
}

/// Argmax of `counts`; ties go to the lowest `rank`.
pub(crate) fn majority(counts: &[usize], rank: &[usize]) -> u32 {
    let mut best = 0;
    for c in 1..counts.len() {
        if counts[c] > counts[best] || (counts[c] == counts[best] && rank[c] < rank[best]) {
            best = c;
        }
    }
    best as u32
}

struct Builder<'a> {
    x: &'a [f64],
    y: &'a [u32],
    d: usize,
    n_classes: usize,
    rank: &'a [usize],
    p: &'a ForestParams,
    m: usize,
    nodes: Vec<Node>,
}

impl Builder<'_> {
    fn counts(&self, idx: &[usize]) -> Vec<usize> {
        let mut c = vec![0; self.n_classes];
        for &i in idx {
            c[self.y[i] as usize] += 1;
        }
        c
    }

    fn grow(&mut self, idx: Vec<usize>, depth: usize, rng: &mut ChaCha8Rng) -> usize {
        let counts = self.counts(&idx);
        let n = idx.len();
        let here = self.nodes.len();
        self.nodes.push(Node::Leaf {
            class: majority(&counts, self.rank),
            counts: counts.clone(),
        });
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        if depth >= self.p.max_depth || pure || n < 2 * self.p.min_leaf {
            return here;
        }
        let parent = gini(&counts, n) * n as f64;
        let mut best: Option<(f64, usize, f64)> = None;
        let mut pairs: Vec<(f64, u32)> = Vec::with_capacity(n);
        for col in index::sample(rng, self.d, self.m) {
            pairs.clear();
            pairs.extend(idx.iter().map(|&i| (self.x[i * self.d + col], self.y[i])));
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut left = vec![0usize; self.n_classes];
            for s in 0..n - 1 {
                left[pairs[s].1 as usize] += 1;
                let nl = s + 1;
                if pairs[s].0 == pairs[s + 1].0 || nl < self.p.min_leaf || n - nl < self.p.min_leaf {
                    continue;
                }
                let right: Vec<usize> = counts.iter().zip(&left).map(|(t, l)| t - l).collect();
                let child = gini(&left, nl) * nl as f64 + gini(&right, n - nl) * (n - nl) as f64;
                let gain = parent - child;
                if gain > 1e-12 && best.is_none_or(|(g, _, _)| gain > g) {
                    best = Some((gain, col, (pairs[s].0 + pairs[s + 1].0) / 2.0));
                }
            }
        }
        let Some((gain, column, threshold)) = best else {
            return here;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = idx
            .into_iter()
            .partition(|&i| self.x[i * self.d + column] <= threshold);
        let left = self.grow(l, depth + 1, rng);
        let right = self.grow(r, depth + 1, rng);
        self.nodes[here] = Node::Split {
            column,
            threshold,
            left,
            right,
            gain,
            samples: n,
        };
        here
    }
}

/// Bagged Gini trees with per-split column subsampling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<Tree>,
    pub width: usize,
    /// Lexicographic rank of each label index, for tie-breaking.
    pub rank: Vec<usize>,
}

impl Forest {
    /// Tree `t` draws from stream `t` of `seed`, so the result does not
    /// depend on how trees are scheduled.
    pub fn fit(x: &[f64], y: &[u32], d: usize, rank: &[usize], p: &ForestParams, seed: u64) -> Forest {
        let n = y.len();
        let m = p
            .max_features
            .unwrap_or_else(|| (d as f64).sqrt().floor() as usize)
            .clamp(1, d.max(1));
        let trees = (0..p.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(t as u64);
                let idx: Vec<usize> = if p.bootstrap {
                    (0..n).map(|_| rng.random_range(0..n)).collect()
                } else {
                    (0..n).collect()
                };
                let mut b = Builder {
                    x,
                    y,
                    d,
                    n_classes: rank.len(),
                    rank,
                    p,
                    m: if d == 0 { 0 } else { m },
                    nodes: Vec::new(),
                };
                b.grow(idx, 0, &mut rng);
                Tree {
                    nodes: b.nodes,
                    n_samples: n,
                }
            })
            .collect();
        Forest {
            trees,
            width: d,
            rank: rank.to_vec(),
        }
    }

    /// Majority vote; ties go to the lexicographically smallest label.
    pub fn predict_row(&self, row: &[f64]) -> u32 {
        let mut votes = vec![0usize; self.rank.len()];
        for t in &self.trees {
            votes[t.predict_row(row) as usize] += 1;
        }
        majority(&votes, &self.rank)
    }

    /// Per-column importances: each tree's vector normalized to sum 1,
    /// averaged, then renormalized. All zeros when no tree splits.
    pub fn column_importances(&self) -> Vec<f64> {
        let mut total = vec![0.0; self.width];
        for t in &self.trees {
            let imp = t.importances(self.width);
            let s: f64 = imp.iter().sum();
            if s > 0.0 {
                for (a, v) in total.iter_mut().zip(&imp) {
                    *a += v / s;
                }
            }
        }
        let s: f64 = total.iter().sum();
        if s > 0.0 {
            for v in total.iter_mut() {
                *v /= s;
            }
        }
        total
    }
}
