use qml_core::maze::generate_perfect_maze;
use qml_core::qsw::{build_model, evolve, initial_state};
use qml_core::rl::{Action, EnvConfig, MazeEnv};
use qml_core::QswParams;

#[test]
fn noop_episode_reproduces_free_evolution() {
    let maze = generate_perfect_maze(4, 4, 3).unwrap();
    let params = QswParams::new(0.5, 1.0, 0.005, 10.0).unwrap();
    let model = build_model(&maze, params);
    let free = evolve(&initial_state(&model), &model, 100).unwrap().final_p_sink();

    let mut env = MazeEnv::new(maze, EnvConfig::new(params, 1.0, 8).unwrap());
    let record = env.run_episode(0, |_| Action::NoOp).unwrap();
    assert!((record.final_p_sink - free).abs() <= 1e-9);
    let total: f64 = record.rewards.iter().sum();
    assert!((total - free).abs() <= 1e-12);
}

#[test]
fn every_toggle_keeps_the_episode_physical() {
    let maze = generate_perfect_maze(3, 3, 8).unwrap();
    let params = QswParams::new(0.8, 1.0, 0.005, 4.0).unwrap();
    let mut env = MazeEnv::new(maze, EnvConfig::new(params, 1.0, 3).unwrap());
    let actions = env.action_space().to_vec();
    for &first in &actions {
        env.reset(0);
        env.step(first).unwrap();
        let diag = env.current_state().diagnostics();
        assert!(diag.trace_error <= 1e-6 && diag.min_eigenvalue >= -1e-6);
    }
}
