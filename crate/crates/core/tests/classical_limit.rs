//! At `p = 1` the walk is a classical continuous-time random walk with the
//! sink attached. Its populations are compared against `exp(Qt)` for every
//! perfect maze on the small grids.

use nalgebra::{DMatrix, DVector};
use qml_core::maze::MazeGraph;
use qml_core::qsw::{build_model, evolve, initial_state};
use qml_core::QswParams;

/// All spanning trees of the `w × h` grid graph.
fn all_perfect_mazes(w: usize, h: usize) -> Vec<MazeGraph> {
    let probe = MazeGraph::from_edges(w, h, 0, w * h - 1, 0, &[]).unwrap();
    let pairs = probe.grid_adjacent_pairs();
    let need = w * h - 1;
    let mut out = Vec::new();
    for mask in 0u32..(1 << pairs.len()) {
        if mask.count_ones() as usize != need {
            continue;
        }
        let edges: Vec<_> = (0..pairs.len()).filter(|k| mask >> k & 1 == 1).map(|k| pairs[k]).collect();
        let maze = MazeGraph::from_edges(w, h, 0, w * h - 1, 0, &edges).unwrap();
        if maze.is_connected() {
            out.push(maze);
        }
    }
    out
}

/// Rate matrix of the classical walk: hop `j → i` at `A_ij / d_j²`, leak
/// `exit → sink` at `2Γ`.
fn rate_matrix(maze: &MazeGraph, gamma: f64) -> DMatrix<f64> {
    let n = maze.node_count();
    let mut q = DMatrix::zeros(n + 1, n + 1);
    for j in 0..n {
        let d: f64 = (0..n).map(|i| maze.adjacency(i, j) as f64).sum();
        for i in 0..n {
            if maze.adjacency(i, j) == 1 {
                let rate = 1.0 / (d * d);
                q[(i, j)] += rate;
                q[(j, j)] -= rate;
            }
        }
    }
    q[(n, maze.exit())] += 2.0 * gamma;
    q[(maze.exit(), maze.exit())] -= 2.0 * gamma;
    q
}

#[test]
fn spanning_tree_counts() {
    assert_eq!(all_perfect_mazes(2, 2).len(), 4);
    assert_eq!(all_perfect_mazes(3, 2).len(), 15);
    assert_eq!(all_perfect_mazes(3, 3).len(), 192);
}

#[test]
fn full_dephasing_matches_classical_master_equation() {
    let params = QswParams::new(1.0, 1.0, 0.005, 10.0).unwrap();
    let mut worst = 0.0f64;
    for (w, h) in [(2, 2), (2, 3), (3, 2), (3, 3)] {
        for maze in all_perfect_mazes(w, h) {
            let model = build_model(&maze, params);
            let traj = evolve(&initial_state(&model), &model, 200).unwrap();
            let q = rate_matrix(&maze, params.gamma);
            let mut p0 = DVector::zeros(maze.node_count() + 1);
            p0[maze.entrance()] = 1.0;
            for (t, rho) in traj.times.iter().zip(&traj.states) {
                let p = (&q * *t).exp() * &p0;
                for (k, pop) in rho.populations().iter().enumerate() {
                    worst = worst.max((pop - p[k]).abs());
                }
            }
        }
    }
    assert!(worst <= 1e-6, "max population deviation {worst:e}");
}
