//! Regression forest used as a weight generator.
//!
//! Each tree is grown on a bootstrap resample with per-split feature
//! subsampling and a minimum leaf size. A query point receives, from every
//! tree, equal weight on each bootstrap draw sharing its leaf; averaging over
//! trees gives nonnegative training weights that sum to one.

use rand::Rng;

#[cfg(test)]
use crate::exec::Exec;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ForestParams {
    pub n_trees: usize,
    pub min_leaf: usize,
    pub mtry: usize,
}

#[derive(Debug, Clone, Copy)]
enum Node {
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
    },
    Leaf {
        start: u32,
        end: u32,
    },
}

#[derive(Debug, Clone)]
pub(crate) struct Tree {
    nodes: Vec<Node>,
    /// Bootstrap draws, permuted so that every leaf owns a contiguous range.
    samples: Vec<u32>,
}

impl Tree {
    fn fit<R: Rng>(x: &[f64], d: usize, v: &[f64], params: ForestParams, rng: &mut R) -> Tree {
        let n = v.len();
        let mut samples: Vec<u32> = (0..n).map(|_| rng.random_range(0..n) as u32).collect();
        let mut nodes = vec![Node::Leaf {
            start: 0,
            end: n as u32,
        }];
        let mut features: Vec<usize> = (0..d).collect();
        let mtry = params.mtry.clamp(1, d.max(1));
        let min_leaf = params.min_leaf.max(1);
        let mut buf: Vec<(f64, f64)> = Vec::with_capacity(n);
        let mut stack = vec![(0usize, 0usize, n)];

        while let Some((id, lo, hi)) = stack.pop() {
            nodes[id] = Node::Leaf {
                start: lo as u32,
                end: hi as u32,
            };
            let m = hi - lo;
            if d == 0 || m < 2 * min_leaf {
                continue;
            }
            let node = &samples[lo..hi];
            let (mut vmin, mut vmax, mut total) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
            for &s in node {
                let val = v[s as usize];
                vmin = vmin.min(val);
                vmax = vmax.max(val);
                total += val;
            }
            if vmin == vmax {
                continue;
            }
            let parent_score = total * total / m as f64;

            for k in 0..mtry {
                let j = rng.random_range(k..d);
                features.swap(k, j);
            }
            let mut best: Option<(usize, f64, f64)> = None;
            let mut best_score = parent_score + 1e-12 * m as f64;
            for &f in &features[..mtry] {
                buf.clear();
                buf.extend(node.iter().map(|&s| (x[s as usize * d + f], v[s as usize])));
                buf.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
                if buf[0].0 == buf[m - 1].0 {
                    continue;
                }
                let mut left_sum: f64 = buf[..min_leaf - 1].iter().map(|p| p.1).sum();
                for i in min_leaf..=(m - min_leaf) {
                    left_sum += buf[i - 1].1;
                    if buf[i - 1].0 == buf[i].0 {
                        continue;
                    }
                    let right_sum = total - left_sum;
                    let score =
                        left_sum * left_sum / i as f64 + right_sum * right_sum / (m - i) as f64;
                    if score > best_score {
                        best_score = score;
                        let (a, b) = (buf[i - 1].0, buf[i].0);
                        let mut thr = a + 0.5 * (b - a);
                        if thr >= b {
                            thr = a;
                        }
                        best = Some((f, thr, score));
                    }
                }
            }
            let Some((f, thr, _)) = best else { continue };

            // Partition samples[lo..hi] so that x_f <= thr comes first.
            let part = &mut samples[lo..hi];
            let mut i = 0;
            let mut j = part.len();
            while i < j {
                if x[part[i] as usize * d + f] <= thr {
                    i += 1;
                } else {
                    j -= 1;
                    part.swap(i, j);
                }
            }
            let mid = lo + i;
            let left = nodes.len();
            nodes.push(Node::Leaf {
                start: lo as u32,
                end: mid as u32,
            });
            nodes.push(Node::Leaf {
                start: mid as u32,
                end: hi as u32,
            });
            nodes[id] = Node::Split {
                feature: f as u32,
                threshold: thr,
                left: left as u32,
                right: (left + 1) as u32,
            };
            stack.push((left + 1, mid, hi));
            stack.push((left, lo, mid));
        }
        Tree { nodes, samples }
    }

    fn leaf(&self, q: &[f64]) -> &[u32] {
        let mut id = 0usize;
        loop {
            match self.nodes[id] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    id = if q[feature as usize] <= threshold {
                        left
                    } else {
                        right
                    } as usize;
                }
                Node::Leaf { start, end } => return &self.samples[start as usize..end as usize],
            }
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Forest {
    trees: Vec<Tree>,
}

impl Forest {
    /// Grows `params.n_trees` trees; tree `i` draws from the stream
    /// `(seed, keys.., i)`, so the result does not depend on `exec`.
    #[cfg(test)]
    pub(crate) fn fit(
        x: &[f64],
        d: usize,
        v: &[f64],
        params: ForestParams,
        seed: u64,
        keys: &[u64],
        exec: Exec,
    ) -> Forest {
        let trees = exec.map(params.n_trees, |i| {
            let mut path = keys.to_vec();
            path.push(i as u64);
            let mut rng = rng::stream(seed, &path);
            Tree::fit(x, d, v, params, &mut rng)
        });
        Forest { trees }
    }

    pub(crate) fn from_trees(trees: Vec<Tree>) -> Forest {
        Forest { trees }
    }

    pub(crate) fn grow_tree(
        x: &[f64],
        d: usize,
        v: &[f64],
        params: ForestParams,
        seed: u64,
        path: &[u64],
    ) -> Tree {
        let mut rng = rng::stream(seed, path);
        Tree::fit(x, d, v, params, &mut rng)
    }

    /// Adds the forest weights of query `q` to `out` (one slot per training
    /// row). The added weights sum to one.
    pub(crate) fn add_weights(&self, q: &[f64], out: &mut [f64]) {
        let per_tree = 1.0 / self.trees.len() as f64;
        for tree in &self.trees {
            let leaf = tree.leaf(q);
            let w = per_tree / leaf.len() as f64;
            for &s in leaf {
                out[s as usize] += w;
            }
        }
    }

    /// Plain forest prediction Σ w_t v_t.
    #[cfg(test)]
    pub(crate) fn predict(&self, q: &[f64], v: &[f64]) -> f64 {
        let per_tree = 1.0 / self.trees.len() as f64;
        self.trees
            .iter()
            .map(|t| {
                let leaf = t.leaf(q);
                leaf.iter().map(|&s| v[s as usize]).sum::<f64>() / leaf.len() as f64
            })
            .sum::<f64>()
            * per_tree
    }

    #[cfg(test)]
    pub(crate) fn trees(&self) -> &[Tree] {
        &self.trees
    }
}
