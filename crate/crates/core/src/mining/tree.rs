//! CART regression tree: greedy variance-reduction splits with exhaustive
//! threshold search, used to read simple design rules off the Pareto
//! neighborhood.

use serde::{Deserialize, Serialize};

pub const DEFAULT_MAX_DEPTH: usize = 3;
pub const DEFAULT_MIN_LEAF: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub depth: usize,
    pub n: usize,
    /// Mean of the targets routed to this node.
    pub value: f64,
    pub split: Option<Split>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub variable: usize,
    /// Rows with x[variable] <= threshold go left.
    pub threshold: f64,
    pub left: Box<TreeNode>,
    pub right: Box<TreeNode>,
}

impl TreeNode {
    pub fn predict(&self, x: &[f64]) -> f64 {
        match &self.split {
            None => self.value,
            Some(s) => {
                if x[s.variable] <= s.threshold {
                    s.left.predict(x)
                } else {
                    s.right.predict(x)
                }
            }
        }
    }

    pub fn max_depth(&self) -> usize {
        match &self.split {
            None => self.depth,
            Some(s) => s.left.max_depth().max(s.right.max_depth()),
        }
    }

    pub fn to_text(&self, names: &[&str]) -> String {
        let mut out = String::new();
        self.write_text(names, &mut out);
        out
    }

    fn write_text(&self, names: &[&str], out: &mut String) {
        let pad = "  ".repeat(self.depth);
        match &self.split {
            None => out.push_str(&format!("{pad}leaf value={:.6} n={}\n", self.value, self.n)),
            Some(s) => {
                out.push_str(&format!(
                    "{pad}if {} <= {:.6} (n={})\n",
                    names[s.variable], s.threshold, self.n
                ));
                s.left.write_text(names, out);
                out.push_str(&format!("{pad}else\n"));
                s.right.write_text(names, out);
            }
        }
    }

    pub fn to_dot(&self, names: &[&str], target: &str) -> String {
        let mut out = format!("digraph tree {{\n  label=\"{target}\";\n  node [shape=box];\n");
        let mut id = 0;
        self.write_dot(names, &mut out, &mut id);
        out.push_str("}\n");
        out
    }

    fn write_dot(&self, names: &[&str], out: &mut String, id: &mut usize) -> usize {
        let me = *id;
        *id += 1;
        match &self.split {
            None => {
                out.push_str(&format!(
                    "  n{me} [label=\"value={:.4}\\nn={}\"];\n",
                    self.value, self.n
                ));
            }
            Some(s) => {
                out.push_str(&format!(
                    "  n{me} [label=\"{} <= {:.4}\\nn={}\"];\n",
                    names[s.variable], s.threshold, self.n
                ));
                let l = s.left.write_dot(names, out, id);
                let r = s.right.write_dot(names, out, id);
                out.push_str(&format!("  n{me} -> n{l} [label=\"yes\"];\n"));
                out.push_str(&format!("  n{me} -> n{r} [label=\"no\"];\n"));
            }
        }
        me
    }
}

fn mean_sse(y: &[f64], idx: &[usize]) -> (f64, f64) {
    let n = idx.len() as f64;
    let mean = idx.iter().map(|&i| y[i]).sum::<f64>() / n;
    let sse = idx.iter().map(|&i| (y[i] - mean).powi(2)).sum::<f64>();
    (mean, sse)
}

/// Best (variable, threshold, sse_left + sse_right) over all exhaustive
/// splits honoring the leaf minimum; ties go to the lowest variable index,
/// then the lowest threshold.
fn best_split(x: &[Vec<f64>], y: &[f64], idx: &[usize], min_leaf: usize) -> Option<(usize, f64, f64)> {
    let p = x[0].len();
    let mut best: Option<(usize, f64, f64)> = None;
    for var in 0..p {
        let mut order: Vec<usize> = idx.to_vec();
        order.sort_by(|&a, &b| x[a][var].partial_cmp(&x[b][var]).expect("finite feature"));
        let total_sum: f64 = order.iter().map(|&i| y[i]).sum();
        let mut left_sum = 0.0;
        let mut left_sq = 0.0;
        let total_sq: f64 = order.iter().map(|&i| y[i] * y[i]).sum();
        for (k, &i) in order.iter().enumerate() {
            left_sum += y[i];
            left_sq += y[i] * y[i];
            let n_left = k + 1;
            let n_right = order.len() - n_left;
            if n_left < min_leaf || n_right < min_leaf {
                continue;
            }
            let here = x[i][var];
            let next = x[order[k + 1]][var];
            if next <= here {
                continue; // no room for a threshold between equal values
            }
            let sse_left = left_sq - left_sum * left_sum / n_left as f64;
            let right_sum = total_sum - left_sum;
            let sse_right = (total_sq - left_sq) - right_sum * right_sum / n_right as f64;
            let sse = sse_left + sse_right;
            let threshold = 0.5 * (here + next);
            let better = match best {
                None => true,
                Some((bv, bt, bs)) => {
                    sse < bs - 1e-12
                        || (sse < bs + 1e-12 && (var < bv || (var == bv && threshold < bt)))
                }
            };
            if better {
                best = Some((var, threshold, sse));
            }
        }
    }
    best
}

fn grow(
    x: &[Vec<f64>],
    y: &[f64],
    idx: Vec<usize>,
    depth: usize,
    max_depth: usize,
    min_leaf: usize,
) -> TreeNode {
    let (value, sse) = mean_sse(y, &idx);
    let n = idx.len();
    // Zero target variance degenerates to a single leaf, as does exhausted
    // depth or a node too small to split.
    if depth >= max_depth || n < 2 * min_leaf || sse <= 0.0 {
        return TreeNode { depth, n, value, split: None };
    }
    let Some((variable, threshold, split_sse)) = best_split(x, y, &idx, min_leaf) else {
        return TreeNode { depth, n, value, split: None };
    };
    if split_sse >= sse {
        return TreeNode { depth, n, value, split: None };
    }
    let (li, ri): (Vec<usize>, Vec<usize>) =
        idx.into_iter().partition(|&i| x[i][variable] <= threshold);
    let left = grow(x, y, li, depth + 1, max_depth, min_leaf);
    let right = grow(x, y, ri, depth + 1, max_depth, min_leaf);
    TreeNode {
        depth,
        n,
        value,
        split: Some(Split { variable, threshold, left: Box::new(left), right: Box::new(right) }),
    }
}

pub fn fit_tree(x: &[Vec<f64>], y: &[f64], max_depth: usize, min_leaf: usize) -> TreeNode {
    assert!(x.len() == y.len() && x.len() >= 2, "need at least two samples");
    assert!(max_depth >= 1 && min_leaf >= 1);
    grow(x, y, (0..x.len()).collect(), 0, max_depth, min_leaf)
}
