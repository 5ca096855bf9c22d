use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{Graph, SubgraphSpec};
use crate::seed;

const LOUVAIN_STREAM: u64 = 0x10;
const OVERLAP_STREAM: u64 = 0x11;

/// Client assignment over a graph's nodes.
#[derive(Debug, Clone)]
pub struct Partition {
    assignment: Vec<usize>,
    num_clients: usize,
    fallback_round_robin: bool,
}

impl Partition {
    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn num_clients(&self) -> usize {
        self.num_clients
    }

    /// True when the graph had no edges and nodes were dealt out round-robin.
    pub fn fallback_round_robin(&self) -> bool {
        self.fallback_round_robin
    }

    pub fn from_assignment(assignment: Vec<usize>) -> Result<Partition> {
        let num_clients = assignment.iter().copied().max().map_or(0, |m| m + 1);
        for c in 0..num_clients {
            if !assignment.contains(&c) {
                return Err(Error::EmptyClient { client: c });
            }
        }
        Ok(Partition {
            assignment,
            num_clients,
            fallback_round_robin: false,
        })
    }
}

/// Partition a graph into exactly `num_clients` groups: Louvain communities,
/// merged or bisected to the requested count, then balanced so group sizes
/// stay within 20% of n/num_clients (or within ±1 of the mean when the graph
/// is too small for that band to be feasible).
pub fn partition_louvain(g: &Graph, num_clients: usize, seed: u64) -> Result<Partition> {
    if num_clients == 0 || num_clients > g.n() {
        return Err(Error::invalid(
            "num_clients",
            format!("{num_clients} not in 1..={}", g.n()),
        ));
    }
    if g.edge_count() == 0 {
        return Ok(Partition {
            assignment: (0..g.n()).map(|i| i % num_clients).collect(),
            num_clients,
            fallback_round_robin: true,
        });
    }

    let mut rng = seed::rng(seed::derive(seed, &[LOUVAIN_STREAM]));
    let labels = louvain_labels(g, &mut rng);
    let mut groups = group_by_label(&labels, g.n());

    while groups.len() > num_clients {
        merge_smallest(g, &mut groups);
    }
    while groups.len() < num_clients {
        bisect_largest(g, &mut groups);
    }
    balance(g, &mut groups);

    groups.sort_by_key(|nodes| nodes[0]);
    let mut assignment = vec![0; g.n()];
    for (c, nodes) in groups.iter().enumerate() {
        for &u in nodes {
            assignment[u] = c;
        }
    }
    Ok(Partition {
        assignment,
        num_clients,
        fallback_round_robin: false,
    })
}

/// One induced subgraph per client; node sets partition the graph.
pub fn make_nonoverlapping(g: &Graph, assignment: &[usize]) -> Result<Vec<SubgraphSpec>> {
    if assignment.len() != g.n() {
        return Err(Error::DimensionMismatch(format!(
            "assignment covers {} nodes, graph has {}",
            assignment.len(),
            g.n()
        )));
    }
    let num_clients = assignment.iter().copied().max().map_or(0, |m| m + 1);
    let mut lists = vec![Vec::new(); num_clients];
    for (u, &c) in assignment.iter().enumerate() {
        lists[c].push(u);
    }
    lists
        .into_iter()
        .enumerate()
        .map(|(c, nodes)| {
            if nodes.is_empty() {
                Err(Error::EmptyClient { client: c })
            } else {
                SubgraphSpec::induce(g, c, nodes)
            }
        })
        .collect()
}

/// Partition into `num_base_parts` disjoint parts, then sample each part
/// `samples_per_part` times: every sample keeps ⌈sample_frac·part_size⌉ nodes
/// and the induced edges. Clients from the same base part may overlap.
pub fn make_overlapping(
    g: &Graph,
    num_base_parts: usize,
    samples_per_part: usize,
    sample_frac: f64,
    seed: u64,
) -> Result<Vec<SubgraphSpec>> {
    if !(sample_frac > 0.0 && sample_frac <= 1.0) {
        return Err(Error::invalid("sample_frac", "must be in (0, 1]"));
    }
    if samples_per_part == 0 {
        return Err(Error::invalid("samples_per_part", "must be positive"));
    }
    let part = partition_louvain(g, num_base_parts, seed)?;
    let mut parts = vec![Vec::new(); num_base_parts];
    for (u, &c) in part.assignment().iter().enumerate() {
        parts[c].push(u);
    }
    let mut specs = Vec::with_capacity(num_base_parts * samples_per_part);
    for (p, nodes) in parts.iter().enumerate() {
        if nodes.len() < 2 {
            return Err(Error::invalid(
                "num_base_parts",
                format!("base part {p} has fewer than 2 nodes"),
            ));
        }
        let take = (sample_frac * nodes.len() as f64).ceil() as usize;
        for s in 0..samples_per_part {
            let mut rng = seed::rng(seed::derive(seed, &[OVERLAP_STREAM, p as u64, s as u64]));
            let mut pool = nodes.clone();
            pool.shuffle(&mut rng);
            pool.truncate(take);
            specs.push(SubgraphSpec::induce(g, p * samples_per_part + s, pool)?);
        }
    }
    Ok(specs)
}

// ---------------------------------------------------------------------------
// Louvain

/// Weighted graph for one aggregation level. `self_w[i]` follows the matrix
/// convention w_ii (an internal undirected edge contributes 2 after
/// aggregation), so strength(i) = self_w[i] + Σ off-diagonal weights.
struct Level {
    adj: Vec<Vec<(usize, f64)>>,
    self_w: Vec<f64>,
}

impl Level {
    fn from_graph(g: &Graph) -> Level {
        let adj = (0..g.n())
            .map(|u| g.neighbors(u).iter().map(|&v| (v, 1.0)).collect())
            .collect();
        Level {
            adj,
            self_w: vec![0.0; g.n()],
        }
    }

    fn n(&self) -> usize {
        self.adj.len()
    }

    fn strengths(&self) -> Vec<f64> {
        self.adj
            .iter()
            .zip(&self.self_w)
            .map(|(nbrs, &s)| s + nbrs.iter().map(|&(_, w)| w).sum::<f64>())
            .collect()
    }
}

fn louvain_labels(g: &Graph, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut level = Level::from_graph(g);
    // node -> index of its super-node at the current level
    let mut membership: Vec<usize> = (0..g.n()).collect();
    loop {
        let label = local_move(&level, rng);
        let compact = compact_labels(&label);
        let count = 1 + compact.iter().copied().max().unwrap_or(0);
        if count == level.n() {
            break;
        }
        for m in &mut membership {
            *m = compact[label[*m]];
        }
        level = aggregate(&level, &compact, count);
        if level.n() == 1 {
            break;
        }
    }
    compact_labels(&membership)
}

/// One Louvain level: greedy modularity moves until no node improves.
fn local_move(level: &Level, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = level.n();
    let k = level.strengths();
    let two_m: f64 = k.iter().sum();
    let mut label: Vec<usize> = (0..n).collect();
    let mut sigma_tot = k.clone();
    let mut order: Vec<usize> = (0..n).collect();

    for _ in 0..200 {
        let mut improved = false;
        order.shuffle(rng);
        for &i in &order {
            let old = label[i];
            let mut w_to: BTreeMap<usize, f64> = BTreeMap::new();
            for &(j, w) in &level.adj[i] {
                *w_to.entry(label[j]).or_insert(0.0) += w;
            }
            sigma_tot[old] -= k[i];
            let stay = w_to.get(&old).copied().unwrap_or(0.0) - k[i] * sigma_tot[old] / two_m;
            let mut best = (old, stay);
            for (&c, &w) in &w_to {
                if c != old {
                    let gain = w - k[i] * sigma_tot[c] / two_m;
                    if gain > best.1 + 1e-12 {
                        best = (c, gain);
                    }
                }
            }
            if best.0 != old {
                improved = true;
                label[i] = best.0;
            }
            sigma_tot[label[i]] += k[i];
        }
        if !improved {
            break;
        }
    }
    label
}

/// Renumber arbitrary labels to 0..count, ordered by smallest member.
fn compact_labels(label: &[usize]) -> Vec<usize> {
    let mut new_id = BTreeMap::new();
    let mut out = vec![0; label.len()];
    for (i, &l) in label.iter().enumerate() {
        let next = new_id.len();
        out[i] = *new_id.entry(l).or_insert(next);
    }
    out
}

fn aggregate(level: &Level, compact: &[usize], count: usize) -> Level {
    let mut self_w = vec![0.0; count];
    let mut cross: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); count];
    for i in 0..level.n() {
        let a = compact[i];
        self_w[a] += level.self_w[i];
        for &(j, w) in &level.adj[i] {
            let b = compact[j];
            if a == b {
                // both directions visited, totals the w_ii convention
                self_w[a] += w;
            } else {
                *cross[a].entry(b).or_insert(0.0) += w;
            }
        }
    }
    Level {
        adj: cross
            .into_iter()
            .map(|m| m.into_iter().collect())
            .collect(),
        self_w,
    }
}

// ---------------------------------------------------------------------------
// Community count and balance adjustment

fn group_by_label(labels: &[usize], n: usize) -> Vec<Vec<usize>> {
    let count = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut groups = vec![Vec::new(); count.max(usize::from(n > 0))];
    for (u, &l) in labels.iter().enumerate() {
        groups[l].push(u);
    }
    groups
}

/// Fold the smallest group into its most-connected neighbor group
/// (ties: smaller recipient, then lower index).
fn merge_smallest(g: &Graph, groups: &mut Vec<Vec<usize>>) {
    let donor = (0..groups.len())
        .min_by_key(|&i| (groups[i].len(), groups[i][0]))
        .unwrap();
    let mut group_of = vec![usize::MAX; g.n()];
    for (i, nodes) in groups.iter().enumerate() {
        for &u in nodes {
            group_of[u] = i;
        }
    }
    let mut weight = vec![0usize; groups.len()];
    for &u in &groups[donor] {
        for &v in g.neighbors(u) {
            if group_of[v] != donor {
                weight[group_of[v]] += 1;
            }
        }
    }
    let recipient = (0..groups.len())
        .filter(|&i| i != donor)
        .max_by(|&a, &b| {
            (weight[a], std::cmp::Reverse(groups[a].len()), std::cmp::Reverse(a))
                .cmp(&(weight[b], std::cmp::Reverse(groups[b].len()), std::cmp::Reverse(b)))
        })
        .unwrap();
    let donated = groups.remove(donor);
    let recipient = if recipient > donor { recipient - 1 } else { recipient };
    groups[recipient].extend(donated);
    groups[recipient].sort_unstable();
}

/// Split the largest group in two with a BFS sweep, so each half stays
/// internally connected when the group is.
fn bisect_largest(g: &Graph, groups: &mut Vec<Vec<usize>>) {
    let target = (0..groups.len())
        .max_by_key(|&i| (groups[i].len(), std::cmp::Reverse(groups[i][0])))
        .unwrap();
    let nodes = groups[target].clone();
    let half = nodes.len() / 2;
    let mut in_group = vec![false; g.n()];
    for &u in &nodes {
        in_group[u] = true;
    }
    let start = *nodes
        .iter()
        .max_by_key(|&&u| {
            let deg_in = g.neighbors(u).iter().filter(|&&v| in_group[v]).count();
            (deg_in, std::cmp::Reverse(u))
        })
        .unwrap();
    let mut taken = vec![false; g.n()];
    let mut picked = Vec::with_capacity(half);
    let mut queue = std::collections::VecDeque::from([start]);
    taken[start] = true;
    let mut fallback = nodes.iter();
    while picked.len() < half {
        let u = match queue.pop_front() {
            Some(u) => u,
            // group is disconnected: restart from the lowest untouched node
            None => {
                let u = *fallback.by_ref().find(|&&u| !taken[u]).unwrap();
                taken[u] = true;
                u
            }
        };
        picked.push(u);
        for &v in g.neighbors(u) {
            if in_group[v] && !taken[v] {
                taken[v] = true;
                queue.push_back(v);
            }
        }
    }
    picked.sort_unstable();
    let rest: Vec<usize> = nodes
        .iter()
        .copied()
        .filter(|u| picked.binary_search(u).is_err())
        .collect();
    groups[target] = picked;
    groups.push(rest);
}

/// Move boundary nodes from the largest to the smallest group until all
/// sizes sit inside the balance band.
fn balance(g: &Graph, groups: &mut [Vec<usize>]) {
    let n = g.n() as f64;
    let k = groups.len() as f64;
    let avg = n / k;
    let lower = ((0.8 * avg).floor() as usize).min(avg.floor() as usize).max(1);
    let upper = ((1.2 * avg).ceil() as usize).max(avg.ceil() as usize);

    let mut group_of = vec![usize::MAX; g.n()];
    for (i, nodes) in groups.iter().enumerate() {
        for &u in nodes {
            group_of[u] = i;
        }
    }
    for _ in 0..g.n() {
        let big = (0..groups.len())
            .max_by_key(|&i| (groups[i].len(), std::cmp::Reverse(i)))
            .unwrap();
        let small = (0..groups.len())
            .min_by_key(|&i| (groups[i].len(), i))
            .unwrap();
        if groups[big].len() <= upper && groups[small].len() >= lower {
            break;
        }
        // prefer the donor node most attached to the recipient, least
        // attached to the donor
        let (pos, _) = groups[big]
            .iter()
            .enumerate()
            .max_by_key(|&(_, &u)| {
                let to_small = g.neighbors(u).iter().filter(|&&v| group_of[v] == small).count();
                let within = g.neighbors(u).iter().filter(|&&v| group_of[v] == big).count();
                (to_small, std::cmp::Reverse(within), std::cmp::Reverse(u))
            })
            .unwrap();
        let u = groups[big].remove(pos);
        group_of[u] = small;
        let at = groups[small].binary_search(&u).unwrap_err();
        groups[small].insert(at, u);
    }
}
