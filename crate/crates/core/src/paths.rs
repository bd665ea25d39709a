//! Root-to-leaf path enumeration over directed acyclic graphs.

use std::collections::BTreeMap;
use std::fmt::Display;

use crate::error::{Error, Result};

/// Default maximum number of paths enumerated per graph.
pub const DEFAULT_PATH_CAP: usize = 4096;

/// Maximal root-to-leaf paths of a graph, plus the flattened token map.
///
/// `dup_map[k]` is the node behind the `k`-th token of the concatenated path
/// sequence; nodes shared by several paths appear once per path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathIndex<Id> {
    pub paths: Vec<Vec<Id>>,
    pub dup_map: Vec<Id>,
}

impl<Id: Copy + Ord> PathIndex<Id> {
    pub fn from_paths(paths: Vec<Vec<Id>>) -> Self {
        let dup_map = paths.iter().flatten().copied().collect();
        Self { paths, dup_map }
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    /// Start offset of every path inside `dup_map`.
    pub fn offsets(&self) -> Vec<usize> {
        let mut acc = 0;
        self.paths
            .iter()
            .map(|p| {
                let o = acc;
                acc += p.len();
                o
            })
            .collect()
    }
}

fn adjacency<Id: Copy + Ord>(
    nodes: &[Id],
    edges: impl IntoIterator<Item = (Id, Id)>,
) -> BTreeMap<Id, Vec<Id>> {
    let mut adj: BTreeMap<Id, Vec<Id>> = nodes.iter().map(|&n| (n, Vec::new())).collect();
    for (a, b) in edges {
        adj.entry(a).or_default().push(b);
        adj.entry(b).or_default();
    }
    for succ in adj.values_mut() {
        succ.sort();
        succ.dedup();
    }
    adj
}

/// Returns one node lying on a directed cycle, if the graph has any.
pub fn find_cycle<Id: Copy + Ord>(
    nodes: &[Id],
    edges: impl IntoIterator<Item = (Id, Id)>,
) -> Option<Id> {
    let adj = adjacency(nodes, edges);
    cycle_in(&adj)
}

fn cycle_in<Id: Copy + Ord>(adj: &BTreeMap<Id, Vec<Id>>) -> Option<Id> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Open,
        Done,
    }
    let mut marks: BTreeMap<Id, Mark> = BTreeMap::new();
    for &start in adj.keys() {
        if marks.contains_key(&start) {
            continue;
        }
        // Iterative DFS: (node, next successor index).
        let mut stack = vec![(start, 0usize)];
        marks.insert(start, Mark::Open);
        while let Some(&mut (node, ref mut next)) = stack.last_mut() {
            let succ = &adj[&node];
            if *next < succ.len() {
                let s = succ[*next];
                *next += 1;
                match marks.get(&s) {
                    Some(Mark::Open) => return Some(s),
                    Some(Mark::Done) => {}
                    None => {
                        marks.insert(s, Mark::Open);
                        stack.push((s, 0));
                    }
                }
            } else {
                marks.insert(node, Mark::Done);
                stack.pop();
            }
        }
    }
    None
}

/// Enumerates every maximal path from an in-degree-0 node to an out-degree-0
/// node, sorted lexicographically by node sequence. Isolated nodes form
/// singleton paths.
pub fn enumerate_paths<Id: Copy + Ord + Display>(
    nodes: &[Id],
    edges: impl IntoIterator<Item = (Id, Id)>,
    cap: usize,
) -> Result<PathIndex<Id>> {
    let adj = adjacency(nodes, edges);
    if let Some(node) = cycle_in(&adj) {
        return Err(Error::Topology(format!("graph has a cycle through node {node}")));
    }

    let mut indeg: BTreeMap<Id, usize> = adj.keys().map(|&n| (n, 0)).collect();
    for succ in adj.values() {
        for s in succ {
            *indeg.get_mut(s).unwrap() += 1;
        }
    }

    let mut paths: Vec<Vec<Id>> = Vec::new();
    for (&root, _) in indeg.iter().filter(|(_, &d)| d == 0) {
        let mut current = vec![root];
        let mut stack = vec![0usize];
        while let Some(next) = stack.last_mut() {
            let node = *current.last().unwrap();
            let succ = &adj[&node];
            if succ.is_empty() {
                if paths.len() == cap {
                    return Err(Error::PathLimit { cap });
                }
                paths.push(current.clone());
                stack.pop();
                current.pop();
            } else if *next < succ.len() {
                let s = succ[*next];
                *next += 1;
                current.push(s);
                stack.push(0);
            } else {
                stack.pop();
                current.pop();
            }
        }
    }
    paths.sort();
    Ok(PathIndex::from_paths(paths))
}
