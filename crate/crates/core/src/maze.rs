//! Perfect mazes on a rectangular grid, stored as symmetric 0/1 adjacency.
//!
//! Cells are indexed row-major with row 0 at the bottom, so index 0 is the
//! lower-left cell (the default entrance) and `N − 1` the upper-right cell
//! (the default exit).

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MazeGraph {
    width: usize,
    height: usize,
    adjacency: Vec<u8>,
    entrance: usize,
    exit: usize,
    seed: u64,
}

/// Column sums of the adjacency matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeDegrees(pub Vec<usize>);

impl NodeDegrees {
    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }
}

impl std::ops::Index<usize> for NodeDegrees {
    type Output = usize;

    fn index(&self, j: usize) -> &usize {
        &self.0[j]
    }
}

/// Randomized depth-first search (recursive backtracker), run iteratively.
pub fn generate_perfect_maze(width: usize, height: usize, seed: u64) -> Result<MazeGraph> {
    if width < 2 || height < 2 {
        return Err(Error::invalid(format!(
            "maze must be at least 2x2, got {width}x{height}"
        )));
    }
    let n = width * height;
    let mut maze = MazeGraph {
        width,
        height,
        adjacency: vec![0; n * n],
        entrance: 0,
        exit: n - 1,
        seed,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut visited = vec![false; n];
    let mut stack = vec![0usize];
    visited[0] = true;
    while let Some(&cell) = stack.last() {
        let mut options: Vec<usize> = maze
            .grid_neighbors(cell)
            .into_iter()
            .filter(|&c| !visited[c])
            .collect();
        if options.is_empty() {
            stack.pop();
            continue;
        }
        options.shuffle(&mut rng);
        let next = options[0];
        maze.set_link(cell, next, 1);
        visited[next] = true;
        stack.push(next);
    }
    Ok(maze)
}

impl MazeGraph {
    /// Builds a maze from an explicit edge list. Every edge must join two
    /// distinct grid-adjacent cells and be listed once as `(i, j)` with `i < j`.
    pub fn from_edges(
        width: usize,
        height: usize,
        entrance: usize,
        exit: usize,
        seed: u64,
        edges: &[(usize, usize)],
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Validation("width and height must be positive".into()));
        }
        let n = width * height;
        if width == 1 && height == 1 {
            return Err(Error::Validation("maze needs at least two cells".into()));
        }
        if entrance >= n || exit >= n {
            return Err(Error::Validation(format!(
                "entrance {entrance} / exit {exit} out of range for {n} nodes"
            )));
        }
        if entrance == exit {
            return Err(Error::Validation("entrance and exit must differ".into()));
        }
        let mut maze = MazeGraph {
            width,
            height,
            adjacency: vec![0; n * n],
            entrance,
            exit,
            seed,
        };
        for (k, &(i, j)) in edges.iter().enumerate() {
            if i >= n || j >= n {
                return Err(Error::Validation(format!(
                    "edge #{k} ({i}, {j}) references a node outside 0..{n}"
                )));
            }
            if i >= j {
                return Err(Error::Validation(format!(
                    "edge #{k} ({i}, {j}) is not stored as (low, high); adjacency would be asymmetric"
                )));
            }
            if !maze.are_grid_adjacent(i, j) {
                return Err(Error::Validation(format!(
                    "edge #{k} ({i}, {j}) joins cells that are not grid-adjacent"
                )));
            }
            if maze.has_link(i, j) {
                return Err(Error::Validation(format!("edge #{k} ({i}, {j}) is duplicated")));
            }
            maze.set_link(i, j, 1);
        }
        Ok(maze)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn node_count(&self) -> usize {
        self.width * self.height
    }

    pub fn entrance(&self) -> usize {
        self.entrance
    }

    pub fn exit(&self) -> usize {
        self.exit
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn with_exit(mut self, exit: usize) -> Result<Self> {
        if exit >= self.node_count() || exit == self.entrance {
            return Err(Error::invalid(format!("exit {exit} is out of range or equals the entrance")));
        }
        self.exit = exit;
        Ok(self)
    }

    pub fn with_entrance(mut self, entrance: usize) -> Result<Self> {
        if entrance >= self.node_count() || entrance == self.exit {
            return Err(Error::invalid(format!(
                "entrance {entrance} is out of range or equals the exit"
            )));
        }
        self.entrance = entrance;
        Ok(self)
    }

    /// `A_ij` as 0 or 1.
    pub fn adjacency(&self, i: usize, j: usize) -> u8 {
        self.adjacency[i * self.node_count() + j]
    }

    pub fn has_link(&self, i: usize, j: usize) -> bool {
        self.adjacency(i, j) == 1
    }

    fn set_link(&mut self, i: usize, j: usize, value: u8) {
        let n = self.node_count();
        self.adjacency[i * n + j] = value;
        self.adjacency[j * n + i] = value;
    }

    /// `(row, col)` with row 0 at the bottom.
    pub fn coords(&self, node: usize) -> (usize, usize) {
        (node / self.width, node % self.width)
    }

    pub fn node_at(&self, row: usize, col: usize) -> usize {
        row * self.width + col
    }

    pub fn are_grid_adjacent(&self, i: usize, j: usize) -> bool {
        let n = self.node_count();
        if i >= n || j >= n {
            return false;
        }
        let (ri, ci) = self.coords(i);
        let (rj, cj) = self.coords(j);
        ri.abs_diff(rj) + ci.abs_diff(cj) == 1
    }

    /// Cells sharing a side with `node`, in ascending index order.
    pub fn grid_neighbors(&self, node: usize) -> Vec<usize> {
        let (r, c) = self.coords(node);
        let mut out = Vec::with_capacity(4);
        if r > 0 {
            out.push(self.node_at(r - 1, c));
        }
        if c > 0 {
            out.push(self.node_at(r, c - 1));
        }
        if c + 1 < self.width {
            out.push(self.node_at(r, c + 1));
        }
        if r + 1 < self.height {
            out.push(self.node_at(r + 1, c));
        }
        out
    }

    /// Every grid-adjacent pair `(i, j)` with `i < j`, lexicographically sorted.
    pub fn grid_adjacent_pairs(&self) -> Vec<(usize, usize)> {
        let mut pairs: Vec<(usize, usize)> = (0..self.node_count())
            .flat_map(|i| {
                self.grid_neighbors(i)
                    .into_iter()
                    .filter(move |&j| j > i)
                    .map(move |j| (i, j))
            })
            .collect();
        pairs.sort_unstable();
        pairs
    }

    /// Linked pairs `(i, j)` with `i < j`, lexicographically sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let n = self.node_count();
        (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .filter(|&(i, j)| self.has_link(i, j))
            .collect()
    }

    pub fn edge_count(&self) -> usize {
        self.edges().len()
    }

    pub fn neighbors(&self, node: usize) -> Vec<usize> {
        self.grid_neighbors(node)
            .into_iter()
            .filter(|&j| self.has_link(node, j))
            .collect()
    }

    pub fn degrees(&self) -> NodeDegrees {
        let n = self.node_count();
        NodeDegrees(
            (0..n)
                .map(|j| (0..n).map(|i| self.adjacency(i, j) as usize).sum())
                .collect(),
        )
    }

    /// Connected components as a label per node (labels start at 0).
    pub fn component_labels(&self) -> Vec<usize> {
        let n = self.node_count();
        let mut label = vec![usize::MAX; n];
        let mut next = 0;
        for start in 0..n {
            if label[start] != usize::MAX {
                continue;
            }
            let mut stack = vec![start];
            label[start] = next;
            while let Some(u) = stack.pop() {
                for v in self.neighbors(u) {
                    if label[v] == usize::MAX {
                        label[v] = next;
                        stack.push(v);
                    }
                }
            }
            next += 1;
        }
        label
    }

    pub fn component_count(&self) -> usize {
        self.component_labels().into_iter().max().map_or(0, |m| m + 1)
    }

    pub fn is_connected(&self) -> bool {
        self.component_count() == 1
    }

    /// Connected with exactly `N − 1` links.
    pub fn is_perfect(&self) -> bool {
        self.is_connected() && self.edge_count() + 1 == self.node_count()
    }

    /// Independent cycles in the link graph (`E − N + components`).
    pub fn cycle_rank(&self) -> usize {
        self.edge_count() + self.component_count() - self.node_count()
    }

    /// Returns a copy with the link between grid-adjacent cells `i` and `j`
    /// added if absent or removed if present.
    pub fn toggle_link(&self, i: usize, j: usize) -> Result<MazeGraph> {
        if i == j {
            return Err(Error::IllegalAction(format!("cannot toggle self-link ({i}, {j})")));
        }
        if !self.are_grid_adjacent(i, j) {
            return Err(Error::IllegalAction(format!(
                "cells {i} and {j} are not grid-adjacent"
            )));
        }
        let mut next = self.clone();
        next.set_link(i, j, 1 - self.adjacency(i, j));
        Ok(next)
    }

    pub fn to_json(&self) -> String {
        let doc = MazeDocument {
            width: self.width,
            height: self.height,
            entrance: self.entrance,
            exit: self.exit,
            seed: self.seed,
            edges: self.edges().into_iter().map(|(i, j)| [i, j]).collect(),
        };
        let mut text = serde_json::to_string_pretty(&doc).expect("maze document serializes");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> Result<MazeGraph> {
        let doc: MazeDocument = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        let edges: Vec<(usize, usize)> = doc.edges.iter().map(|e| (e[0], e[1])).collect();
        MazeGraph::from_edges(doc.width, doc.height, doc.entrance, doc.exit, doc.seed, &edges)
    }
}

pub fn degrees(maze: &MazeGraph) -> NodeDegrees {
    maze.degrees()
}

pub fn toggle_link(maze: &MazeGraph, i: usize, j: usize) -> Result<MazeGraph> {
    maze.toggle_link(i, j)
}

pub fn serialize(maze: &MazeGraph) -> String {
    maze.to_json()
}

pub fn deserialize(text: &str) -> Result<MazeGraph> {
    MazeGraph::from_json(text)
}

#[derive(Debug, Serialize, Deserialize)]
struct MazeDocument {
    width: usize,
    height: usize,
    entrance: usize,
    exit: usize,
    seed: u64,
    edges: Vec<[usize; 2]>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn path_1x3() -> MazeGraph {
        MazeGraph::from_edges(3, 1, 0, 2, 0, &[(0, 1), (1, 2)]).unwrap()
    }

    #[test]
    fn two_by_two_has_three_links() {
        for seed in 0..20 {
            let m = generate_perfect_maze(2, 2, seed).unwrap();
            assert_eq!(m.node_count(), 4);
            assert_eq!(m.edge_count(), 3);
            assert!(m.is_perfect());
        }
    }

    #[test]
    fn six_by_six_is_a_spanning_tree() {
        let m = generate_perfect_maze(6, 6, 42).unwrap();
        assert_eq!(m.node_count(), 36);
        assert_eq!(m.edge_count(), 35);
        assert!(m.is_connected());
        assert_eq!(m.cycle_rank(), 0);
        assert_eq!(m.entrance(), 0);
        assert_eq!(m.exit(), 35);
    }

    #[test]
    fn generation_is_deterministic() {
        assert_eq!(generate_perfect_maze(5, 4, 9).unwrap(), generate_perfect_maze(5, 4, 9).unwrap());
        // different seeds explore different trees on a grid this size
        let distinct: std::collections::HashSet<_> =
            (0..10).map(|s| generate_perfect_maze(5, 4, s).unwrap().edges()).collect();
        assert!(distinct.len() > 1);
    }

    #[test]
    fn generation_rejects_small_dimensions() {
        assert!(generate_perfect_maze(1, 5, 0).is_err());
        assert!(generate_perfect_maze(5, 1, 0).is_err());
    }

    #[test]
    fn path_degrees() {
        assert_eq!(path_1x3().degrees(), NodeDegrees(vec![1, 2, 1]));
    }

    #[test]
    fn two_by_two_degree_patterns_match_enumerated_trees() {
        // The 2x2 grid is a 4-cycle; its 4 spanning trees are the paths
        // obtained by dropping one side, each with degree multiset {1,1,2,2}.
        let grid = [(0, 1), (0, 2), (1, 3), (2, 3)];
        let mut expected = Vec::new();
        for drop in 0..4 {
            let edges: Vec<_> = grid.iter().enumerate().filter(|&(k, _)| k != drop).map(|(_, &e)| e).collect();
            let tree = MazeGraph::from_edges(2, 2, 0, 3, 0, &edges).unwrap();
            assert!(tree.is_perfect());
            let mut d = tree.degrees().0;
            d.sort_unstable();
            expected.push(d);
        }
        for seed in 0..20 {
            let mut d = generate_perfect_maze(2, 2, seed).unwrap().degrees().0;
            d.sort_unstable();
            assert!(expected.contains(&d));
            assert_eq!(d, vec![1, 1, 2, 2]);
        }
    }

    #[test]
    fn toggle_examples() {
        let m = generate_perfect_maze(4, 4, 3).unwrap();
        let (i, j) = m.edges()[0];
        let removed = m.toggle_link(i, j).unwrap();
        assert_eq!(removed.component_count(), 2);
        assert_eq!(removed.toggle_link(i, j).unwrap(), m);

        let (a, b) = m
            .grid_adjacent_pairs()
            .into_iter()
            .find(|&(a, b)| !m.has_link(a, b))
            .unwrap();
        let added = m.toggle_link(a, b).unwrap();
        assert_eq!(added.cycle_rank(), 1);
        assert!(added.is_connected());
    }

    #[test]
    fn toggle_rejects_illegal_pairs() {
        let m = generate_perfect_maze(3, 3, 1).unwrap();
        assert!(matches!(m.toggle_link(4, 4), Err(Error::IllegalAction(_))));
        assert!(matches!(m.toggle_link(0, 4), Err(Error::IllegalAction(_))));
        assert!(matches!(m.toggle_link(0, 99), Err(Error::IllegalAction(_))));
    }

    #[test]
    fn json_round_trip_and_errors() {
        let m = generate_perfect_maze(6, 6, 1).unwrap().with_exit(30).unwrap();
        assert_eq!(deserialize(&serialize(&m)).unwrap(), m);

        assert!(matches!(deserialize(""), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(deserialize("{\"width\": 2,"), Err(Error::Parse { .. })));

        let asym = r#"{"width":2,"height":2,"entrance":0,"exit":3,"seed":0,"edges":[[1,0],[0,2],[2,3]]}"#;
        match deserialize(asym) {
            Err(Error::Validation(msg)) => assert!(msg.contains("(1, 0)"), "{msg}"),
            other => panic!("expected validation error, got {other:?}"),
        }
        let far = r#"{"width":2,"height":2,"entrance":0,"exit":3,"seed":0,"edges":[[0,3]]}"#;
        assert!(matches!(deserialize(far), Err(Error::Validation(_))));
        let oob = r#"{"width":2,"height":2,"entrance":0,"exit":7,"seed":0,"edges":[]}"#;
        assert!(matches!(deserialize(oob), Err(Error::Validation(_))));
    }

    proptest! {
        #[test]
        fn generated_mazes_are_perfect_grid_trees(w in 2usize..8, h in 2usize..8, seed: u64) {
            let m = generate_perfect_maze(w, h, seed).unwrap();
            prop_assert!(m.is_perfect());
            let n = m.node_count();
            for i in 0..n {
                prop_assert_eq!(m.adjacency(i, i), 0);
                for j in 0..n {
                    prop_assert_eq!(m.adjacency(i, j), m.adjacency(j, i));
                    if m.has_link(i, j) {
                        prop_assert!(m.are_grid_adjacent(i, j));
                    }
                }
            }
            prop_assert_eq!(m.degrees().total(), 2 * (n - 1));
        }

        #[test]
        fn toggle_touches_only_the_pair(seed: u64, k in 0usize..24) {
            let m = generate_perfect_maze(4, 4, seed).unwrap();
            let pairs = m.grid_adjacent_pairs();
            let (i, j) = pairs[k % pairs.len()];
            let t = m.toggle_link(i, j).unwrap();
            let n = m.node_count();
            for a in 0..n {
                for b in 0..n {
                    let flipped = (a, b) == (i, j) || (a, b) == (j, i);
                    prop_assert_eq!(t.adjacency(a, b) != m.adjacency(a, b), flipped);
                }
            }
        }
    }
}
