use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::graph::SubgraphSpec;
use crate::seed;

const SPLIT_STREAM: u64 = 0x20;

/// Disjoint train/val/test node-index sets over one client's subgraph,
/// in local index space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    train: Vec<usize>,
    val: Vec<usize>,
    test: Vec<usize>,
}

impl Split {
    pub fn train(&self) -> &[usize] {
        &self.train
    }

    pub fn val(&self) -> &[usize] {
        &self.val
    }

    pub fn test(&self) -> &[usize] {
        &self.test
    }
}

/// Uniform random split with sizes ⌊ratio·n_i⌋ per set. When the ratios sum
/// to 1 the flooring remainder goes to test; when they sum to less than 1
/// the unallocated nodes stay out of every set.
pub fn split_nodes(s: &SubgraphSpec, ratios: (f64, f64, f64), seed: u64) -> Result<Split> {
    let (rt, rv, rs) = ratios;
    for (name, r) in [("train", rt), ("val", rv), ("test", rs)] {
        if !(0.0..=1.0).contains(&r) {
            return Err(Error::invalid("ratios", format!("{name} ratio {r}")));
        }
    }
    let sum = rt + rv + rs;
    if sum > 1.0 + 1e-9 {
        return Err(Error::invalid("ratios", format!("sum {sum} exceeds 1")));
    }
    let n = s.n_nodes();
    if n < 3 {
        return Err(Error::invalid(
            "subgraph",
            format!("client {} has {n} nodes, need at least 3 to split", s.client_id()),
        ));
    }

    let n_train = (rt * n as f64).floor() as usize;
    let n_val = (rv * n as f64).floor() as usize;
    let n_test = if (sum - 1.0).abs() <= 1e-9 {
        n - n_train - n_val
    } else {
        (rs * n as f64).floor() as usize
    };

    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = seed::rng(seed::derive(seed, &[SPLIT_STREAM, s.client_id() as u64]));
    order.shuffle(&mut rng);

    let take = |count: usize, from: &mut usize| {
        let mut part: Vec<usize> = order[*from..*from + count].to_vec();
        *from += count;
        part.sort_unstable();
        part
    };
    let mut cursor = 0;
    Ok(Split {
        train: take(n_train, &mut cursor),
        val: take(n_val, &mut cursor),
        test: take(n_test, &mut cursor),
    })
}
