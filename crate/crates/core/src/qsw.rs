//! Quantum stochastic walk on a maze with an absorbing sink.
//!
//! The state lives in `N + 1` dimensions: the `N` maze cells plus the sink
//! `S = N`. The generator is
//!
//! ```text
//! dρ/dt = −(1−p)·i[H, ρ] + p·Σ_ij (L_ij ρ L_ij† − ½{L_ij† L_ij, ρ})
//!         + Γ·(2|S⟩⟨n|ρ|n⟩⟨S| − {|n⟩⟨n|, ρ})
//! ```
//!
//! with `H = A`, `L_ij = (A_ij / d_j)|i⟩⟨j|` and `n` the exit cell. Because
//! the sink is part of the state space the generator is trace preserving
//! and the escape probability is simply `ρ_SS(t)`; the time integral
//! `2Γ∫ρ_nn dt` is kept as an independent cross-check.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{anticommutator, commutator, ComplexMatrix, DensityMatrix, C64};
use crate::maze::MazeGraph;

pub const DEFAULT_GAMMA: f64 = 1.0;
pub const DEFAULT_DT: f64 = 0.005;
pub const DEFAULT_T_FINAL: f64 = 10.0;
/// Integration aborts once |Tr ρ − 1| exceeds this.
pub const TRACE_DRIFT_LIMIT: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QswParams {
    pub p: f64,
    pub gamma: f64,
    pub dt: f64,
    pub t_final: f64,
}

impl QswParams {
    pub fn new(p: f64, gamma: f64, dt: f64, t_final: f64) -> Result<Self> {
        let params = QswParams { p, gamma, dt, t_final };
        params.check(false)?;
        Ok(params)
    }

    /// Like [`QswParams::new`] but also accepts `gamma = 0`, which
    /// decouples the sink and is only meant for closed-system checks.
    pub fn validation_mode(p: f64, gamma: f64, dt: f64, t_final: f64) -> Result<Self> {
        let params = QswParams { p, gamma, dt, t_final };
        params.check(true)?;
        Ok(params)
    }

    pub fn with_p(p: f64) -> Result<Self> {
        Self::new(p, DEFAULT_GAMMA, DEFAULT_DT, DEFAULT_T_FINAL)
    }

    fn check(&self, allow_zero_gamma: bool) -> Result<()> {
        if !(self.p.is_finite() && (0.0..=1.0).contains(&self.p)) {
            return Err(Error::invalid(format!("p must lie in [0, 1], got {}", self.p)));
        }
        let gamma_ok = if allow_zero_gamma { self.gamma >= 0.0 } else { self.gamma > 0.0 };
        if !(self.gamma.is_finite() && gamma_ok) {
            return Err(Error::invalid(format!("gamma must be positive, got {}", self.gamma)));
        }
        if !(self.dt.is_finite() && self.t_final.is_finite() && self.dt > 0.0 && self.dt <= self.t_final) {
            return Err(Error::invalid(format!(
                "need 0 < dt <= t_final, got dt = {}, t_final = {}",
                self.dt, self.t_final
            )));
        }
        Ok(())
    }
}

/// A jump operator `coefficient · |target⟩⟨source|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpOperator {
    pub target: usize,
    pub source: usize,
    pub coefficient: f64,
}

impl JumpOperator {
    pub fn to_matrix(&self, dim: usize) -> ComplexMatrix {
        ComplexMatrix::basis(dim, self.target, self.source).scale(C64::new(self.coefficient, 0.0))
    }
}

#[derive(Debug, Clone)]
pub struct LindbladModel {
    dim: usize,
    hamiltonian: ComplexMatrix,
    neighbors: Vec<Vec<usize>>,
    jump_ops: Vec<JumpOperator>,
    // per-basis-state total outflow rate: p·Σ_i c_ij² plus 2Γ at the exit
    decay: Vec<f64>,
    entrance: usize,
    sink_exit: usize,
    params: QswParams,
}

/// Builds the generator for the maze's current topology. Degrees are
/// recomputed from the adjacency; isolated cells get no jump operators.
pub fn build_model(maze: &MazeGraph, params: QswParams) -> LindbladModel {
    let n = maze.node_count();
    let dim = n + 1;
    let degrees = maze.degrees();
    let hamiltonian = ComplexMatrix::from_fn(dim, dim, |i, j| {
        if i < n && j < n {
            C64::new(maze.adjacency(i, j) as f64, 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    });
    let neighbors: Vec<Vec<usize>> = (0..n).map(|i| maze.neighbors(i)).collect();

    let mut jump_ops = Vec::with_capacity(2 * maze.edge_count());
    for j in 0..n {
        if degrees[j] == 0 {
            continue;
        }
        for i in 0..n {
            let a = maze.adjacency(i, j);
            if a == 1 {
                jump_ops.push(JumpOperator {
                    target: i,
                    source: j,
                    coefficient: a as f64 / degrees[j] as f64,
                });
            }
        }
    }

    let mut decay = vec![0.0; dim];
    for op in &jump_ops {
        decay[op.source] += params.p * op.coefficient * op.coefficient;
    }
    decay[maze.exit()] += 2.0 * params.gamma;

    LindbladModel {
        dim,
        hamiltonian,
        neighbors,
        jump_ops,
        decay,
        entrance: maze.entrance(),
        sink_exit: maze.exit(),
        params,
    }
}

impl LindbladModel {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sink(&self) -> usize {
        self.dim - 1
    }

    pub fn exit(&self) -> usize {
        self.sink_exit
    }

    pub fn entrance(&self) -> usize {
        self.entrance
    }

    pub fn params(&self) -> &QswParams {
        &self.params
    }

    pub fn hamiltonian(&self) -> &ComplexMatrix {
        &self.hamiltonian
    }

    pub fn jump_operators(&self) -> &[JumpOperator] {
        &self.jump_ops
    }

    /// `dρ/dt` using the rank-one structure of every jump operator and the
    /// sparsity of `H`.
    pub fn rhs(&self, rho: &DensityMatrix) -> Result<ComplexMatrix> {
        self.check_dim(rho)?;
        let mut out = ComplexMatrix::zeros(self.dim, self.dim);
        let mut scratch = vec![C64::new(0.0, 0.0); self.dim * self.dim];
        self.rhs_into(rho.matrix().as_slice(), out.as_mut_slice(), &mut scratch);
        Ok(out)
    }

    /// `dρ/dt` assembled from dense matrices with the generic commutator and
    /// anticommutator. Slow; used to cross-check [`LindbladModel::rhs`].
    pub fn rhs_dense(&self, rho: &DensityMatrix) -> Result<ComplexMatrix> {
        self.check_dim(rho)?;
        let rho = rho.matrix();
        let d = self.dim;
        let p = self.params.p;
        let mut out = commutator(&self.hamiltonian, rho)?.scale(C64::new(0.0, -(1.0 - p)));

        for op in &self.jump_ops {
            let l = op.to_matrix(d);
            let ld = l.dagger();
            let gain = &(&l * rho) * &ld;
            let loss = anticommutator(&(&ld * &l), rho)?.scale(C64::new(0.5, 0.0));
            out = &out + &(&gain - &loss).scale(C64::new(p, 0.0));
        }

        let n = self.sink_exit;
        let s = self.sink();
        let sink_in = ComplexMatrix::basis(d, s, n);
        let gain = &(&sink_in * rho) * &sink_in.dagger();
        let loss = anticommutator(&ComplexMatrix::basis(d, n, n), rho)?;
        let sink_term = &gain.scale(C64::new(2.0, 0.0)) - &loss;
        Ok(&out + &sink_term.scale(C64::new(self.params.gamma, 0.0)))
    }

    fn check_dim(&self, rho: &DensityMatrix) -> Result<()> {
        if rho.dim() != self.dim {
            return Err(Error::dims(self.dim, rho.dim()));
        }
        Ok(())
    }

    /// Structured right-hand side. `rho` must be Hermitian, which gives
    /// `ρH = (Hρ)†` for the real symmetric `H`; `scratch` receives `Hρ`.
    pub(crate) fn rhs_into(&self, rho: &[C64], out: &mut [C64], scratch: &mut [C64]) {
        let d = self.dim;
        let p = self.params.p;
        let hop = 1.0 - p;

        if hop > 0.0 {
            scratch.fill(C64::new(0.0, 0.0));
            for (a, nbrs) in self.neighbors.iter().enumerate() {
                let dst = &mut scratch[a * d..(a + 1) * d];
                for &k in nbrs {
                    for (o, &r) in dst.iter_mut().zip(&rho[k * d..(k + 1) * d]) {
                        *o += r;
                    }
                }
            }
        }

        for a in 0..d {
            let da = self.decay[a];
            for b in a..d {
                let damp = -0.5 * (da + self.decay[b]);
                let r = rho[a * d + b];
                let v = if hop > 0.0 {
                    // [H, ρ]_ab = (Hρ)_ab − conj((Hρ)_ba)
                    let comm = scratch[a * d + b] - scratch[b * d + a].conj();
                    C64::new(hop * comm.im + damp * r.re, -hop * comm.re + damp * r.im)
                } else {
                    r * damp
                };
                out[a * d + b] = v;
                if a != b {
                    out[b * d + a] = v.conj();
                }
            }
        }

        if p > 0.0 {
            for op in &self.jump_ops {
                let c2 = op.coefficient * op.coefficient;
                out[op.target * d + op.target] += rho[op.source * d + op.source] * (p * c2);
            }
        }

        let n = self.sink_exit;
        let s = self.sink();
        out[s * d + s] += rho[n * d + n] * (2.0 * self.params.gamma);
    }
}

pub fn lindblad_rhs(rho: &DensityMatrix, model: &LindbladModel) -> Result<ComplexMatrix> {
    model.rhs(rho)
}

/// `|entrance⟩⟨entrance|` in the model's `N + 1` dimensions.
pub fn initial_state(model: &LindbladModel) -> DensityMatrix {
    DensityMatrix::basis_state(model.dim, model.entrance).expect("entrance is a valid node")
}

/// Number of equal RK4 steps covering `duration` with step at most `dt`.
pub fn step_count(duration: f64, dt: f64) -> usize {
    ((duration / dt) - 1e-9).ceil().max(1.0) as usize
}

/// Fixed-step RK4 integrator with reusable scratch buffers.
#[derive(Debug, Clone)]
pub struct Rk4 {
    k1: Vec<C64>,
    k2: Vec<C64>,
    k3: Vec<C64>,
    k4: Vec<C64>,
    tmp: Vec<C64>,
    scratch: Vec<C64>,
}

impl Rk4 {
    pub fn new(dim: usize) -> Self {
        let z = vec![C64::new(0.0, 0.0); dim * dim];
        Rk4 {
            k1: z.clone(),
            k2: z.clone(),
            k3: z.clone(),
            k4: z.clone(),
            tmp: z.clone(),
            scratch: z,
        }
    }

    fn resize(&mut self, len: usize) {
        for buf in [
            &mut self.k1,
            &mut self.k2,
            &mut self.k3,
            &mut self.k4,
            &mut self.tmp,
            &mut self.scratch,
        ] {
            buf.resize(len, C64::new(0.0, 0.0));
        }
    }

    /// One step of size `h`, in place.
    pub fn step(&mut self, model: &LindbladModel, state: &mut [C64], h: f64) {
        self.resize(state.len());
        model.rhs_into(state, &mut self.k1, &mut self.scratch);
        for ((t, &s), &k) in self.tmp.iter_mut().zip(state.iter()).zip(&self.k1) {
            *t = s + k * (0.5 * h);
        }
        model.rhs_into(&self.tmp, &mut self.k2, &mut self.scratch);
        for ((t, &s), &k) in self.tmp.iter_mut().zip(state.iter()).zip(&self.k2) {
            *t = s + k * (0.5 * h);
        }
        model.rhs_into(&self.tmp, &mut self.k3, &mut self.scratch);
        for ((t, &s), &k) in self.tmp.iter_mut().zip(state.iter()).zip(&self.k3) {
            *t = s + k * h;
        }
        model.rhs_into(&self.tmp, &mut self.k4, &mut self.scratch);
        let w = h / 6.0;
        for (i, s) in state.iter_mut().enumerate() {
            *s += (self.k1[i] + (self.k2[i] + self.k3[i]) * 2.0 + self.k4[i]) * w;
        }
    }

    /// Integrates `steps` steps of size `h`, checking the trace and the
    /// sign of the populations after each one. `observe(step, state)` runs after every step (1-based).
    pub fn integrate(
        &mut self,
        model: &LindbladModel,
        state: &mut [C64],
        h: f64,
        steps: usize,
        mut observe: impl FnMut(usize, &[C64]),
    ) -> Result<()> {
        let d = model.dim;
        for k in 1..=steps {
            self.step(model, state, h);
            let trace: C64 = (0..d).map(|i| state[i * d + i]).sum();
            if !(trace.re.is_finite() && trace.im.is_finite()) {
                return Err(Error::Integration { step: k, reason: "state became non-finite".into() });
            }
            let drift = (trace - C64::new(1.0, 0.0)).norm();
            if drift > TRACE_DRIFT_LIMIT {
                return Err(Error::Integration {
                    step: k,
                    reason: format!("trace drift {drift:e} exceeds {TRACE_DRIFT_LIMIT:e}; reduce dt"),
                });
            }
            if let Some(i) = (0..d).find(|&i| state[i * d + i].re < -TRACE_DRIFT_LIMIT) {
                return Err(Error::Integration {
                    step: k,
                    reason: format!("population {i} went negative ({:e}); reduce dt", state[i * d + i].re),
                });
            }
            observe(k, state);
        }
        if state.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::Integration { step: steps, reason: "state became non-finite".into() });
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    /// Snapshot times.
    pub times: Vec<f64>,
    pub states: Vec<DensityMatrix>,
    /// `ρ_SS` at each snapshot.
    pub p_sink_series: Vec<f64>,
    /// Integrator step index of each snapshot.
    pub snapshot_steps: Vec<usize>,
    /// Step size used throughout.
    pub step_size: f64,
    /// `ρ_nn` after every integrator step, starting with the initial state.
    pub exit_population: Vec<f64>,
}

impl Trajectory {
    pub fn final_state(&self) -> &DensityMatrix {
        self.states.last().expect("trajectory has at least one snapshot")
    }

    pub fn final_p_sink(&self) -> f64 {
        *self.p_sink_series.last().expect("trajectory has at least one snapshot")
    }

    /// CSV with header `t,p_sink,pop_0,...,pop_N`, preceded by `# ` comment
    /// lines.
    pub fn to_csv(&self, comments: &[String]) -> String {
        let mut out = String::new();
        for c in comments {
            writeln!(out, "# {c}").unwrap();
        }
        let dim = self.states.first().map_or(0, DensityMatrix::dim);
        out.push_str("t,p_sink");
        for k in 0..dim {
            write!(out, ",pop_{k}").unwrap();
        }
        out.push('\n');
        for ((t, ps), rho) in self.times.iter().zip(&self.p_sink_series).zip(&self.states) {
            write!(out, "{t:?},{ps:?}").unwrap();
            for pop in rho.populations() {
                write!(out, ",{pop:?}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    /// Snapshots as `[{"t": .., "rho": [[[re, im], ..], ..]}, ..]`.
    pub fn states_to_json(&self) -> String {
        #[derive(Serialize)]
        struct Snapshot {
            t: f64,
            rho: Vec<Vec<[f64; 2]>>,
        }
        let snaps: Vec<Snapshot> = self
            .times
            .iter()
            .zip(&self.states)
            .map(|(&t, rho)| {
                let m = rho.matrix();
                Snapshot {
                    t,
                    rho: (0..m.rows())
                        .map(|i| m.row(i).iter().map(|z| [z.re, z.im]).collect())
                        .collect(),
                }
            })
            .collect();
        let mut text = serde_json::to_string(&snaps).expect("snapshots serialize");
        text.push('\n');
        text
    }
}

/// RK4 from `t = 0` to `t_final`, snapshotting every `sample_every` steps
/// (and always at the final step).
pub fn evolve(rho0: &DensityMatrix, model: &LindbladModel, sample_every: usize) -> Result<Trajectory> {
    if rho0.dim() != model.dim {
        return Err(Error::dims(model.dim, rho0.dim()));
    }
    if sample_every == 0 {
        return Err(Error::invalid("sample_every must be at least 1"));
    }
    let params = model.params;
    let steps = step_count(params.t_final, params.dt);
    let h = params.t_final / steps as f64;
    let d = model.dim;
    let (n, s) = (model.sink_exit, model.sink());

    let mut state = rho0.matrix().as_slice().to_vec();
    let mut traj = Trajectory {
        times: vec![0.0],
        states: vec![rho0.clone()],
        p_sink_series: vec![state[s * d + s].re],
        snapshot_steps: vec![0],
        step_size: h,
        exit_population: Vec::with_capacity(steps + 1),
    };
    traj.exit_population.push(state[n * d + n].re);

    let mut rk4 = Rk4::new(d);
    rk4.integrate(model, &mut state, h, steps, |k, st| {
        traj.exit_population.push(st[n * d + n].re);
        if k % sample_every == 0 || k == steps {
            let m = ComplexMatrix::from_vec(d, d, st.to_vec()).expect("finite state");
            traj.times.push(if k == steps { params.t_final } else { k as f64 * h });
            traj.p_sink_series.push(st[s * d + s].re);
            traj.snapshot_steps.push(k);
            traj.states.push(DensityMatrix::from_propagated(m));
        }
    })?;
    Ok(traj)
}

/// `2Γ ∫₀ᵗ ρ_nn dt'` by the trapezoid rule over every integrator step,
/// reported at the trajectory's snapshot times.
pub fn p_sink_from_integral(traj: &Trajectory, model: &LindbladModel) -> Result<Vec<f64>> {
    if traj.exit_population.is_empty() || traj.snapshot_steps.is_empty() {
        return Err(Error::invalid("trajectory is empty"));
    }
    let two_gamma = 2.0 * model.params.gamma;
    let h = traj.step_size;
    let mut cumulative = Vec::with_capacity(traj.exit_population.len());
    let mut acc = 0.0;
    cumulative.push(0.0);
    for w in traj.exit_population.windows(2) {
        acc += 0.5 * h * (w[0] + w[1]);
        cumulative.push(acc);
    }
    traj.snapshot_steps
        .iter()
        .map(|&k| {
            cumulative
                .get(k)
                .map(|v| two_gamma * v)
                .ok_or_else(|| Error::invalid(format!("snapshot step {k} has no exit sample")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::StateTolerance;
    use crate::maze::generate_perfect_maze;

    fn two_node() -> MazeGraph {
        MazeGraph::from_edges(2, 1, 0, 1, 0, &[(0, 1)]).unwrap()
    }

    fn path_1x3() -> MazeGraph {
        MazeGraph::from_edges(3, 1, 0, 2, 0, &[(0, 1), (1, 2)]).unwrap()
    }

    fn random_state(dim: usize, seed: u64) -> DensityMatrix {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let g = ComplexMatrix::from_fn(dim, dim, |_, _| {
            C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        });
        let mut m = &g * &g.dagger();
        let tr = m.trace().re;
        m = m.scale(C64::new(1.0 / tr, 0.0));
        DensityMatrix::new(m).unwrap()
    }

    #[test]
    fn param_validation() {
        assert!(QswParams::new(1.5, 1.0, 0.01, 1.0).is_err());
        assert!(QswParams::new(0.5, 0.0, 0.01, 1.0).is_err());
        assert!(QswParams::validation_mode(0.5, 0.0, 0.01, 1.0).is_ok());
        assert!(QswParams::new(0.5, 1.0, 2.0, 1.0).is_err());
        assert!(QswParams::new(0.5, 1.0, 0.0, 1.0).is_err());
        assert!(QswParams::new(f64::NAN, 1.0, 0.01, 1.0).is_err());
    }

    #[test]
    fn jump_operator_counts_and_coefficients() {
        let params = QswParams::with_p(0.5).unwrap();
        let m2 = build_model(&two_node(), params);
        assert_eq!(m2.jump_operators().len(), 2);
        assert!(m2.jump_operators().iter().all(|op| op.coefficient == 1.0));

        let m3 = build_model(&path_1x3(), params);
        for op in m3.jump_operators() {
            let want = if op.source == 1 { 0.5 } else { 1.0 };
            assert_eq!(op.coefficient, want, "{op:?}");
        }

        let m6 = build_model(&generate_perfect_maze(6, 6, 1).unwrap(), params);
        assert_eq!(m6.jump_operators().len(), 70);
        assert_eq!(m6.dim(), 37);
        assert!(m6.hamiltonian().is_hermitian(0.0));
        for k in 0..37 {
            assert_eq!(m6.hamiltonian()[(36, k)], C64::new(0.0, 0.0));
        }
    }

    #[test]
    fn isolated_nodes_get_no_jump_operators() {
        let maze = path_1x3().toggle_link(1, 2).unwrap();
        let model = build_model(&maze, QswParams::with_p(1.0).unwrap());
        assert!(model.jump_operators().iter().all(|op| op.source != 2 && op.target != 2));
    }

    #[test]
    fn structured_rhs_matches_dense_rhs() {
        let maze = generate_perfect_maze(3, 3, 5).unwrap().toggle_link(0, 1).unwrap();
        for (k, &p) in [0.0, 0.3, 0.8, 1.0].iter().enumerate() {
            let model = build_model(&maze, QswParams::new(p, 0.7, 0.01, 1.0).unwrap());
            let rho = random_state(model.dim(), k as u64);
            let fast = model.rhs(&rho).unwrap();
            let dense = model.rhs_dense(&rho).unwrap();
            assert!(fast.max_abs_diff(&dense) < 1e-13, "p = {p}");
        }
    }

    #[test]
    fn rhs_is_traceless_and_hermitian() {
        let model = build_model(&generate_perfect_maze(4, 3, 2).unwrap(), QswParams::with_p(0.6).unwrap());
        for seed in 0..5 {
            let rho = random_state(model.dim(), seed);
            let r = model.rhs(&rho).unwrap();
            assert!(r.trace().norm() < 1e-12);
            assert!(r.hermiticity_error() < 1e-12);
        }
    }

    #[test]
    fn rhs_at_p_one_keeps_diagonal_states_diagonal() {
        let model = build_model(&path_1x3(), QswParams::with_p(1.0).unwrap());
        let rho = DensityMatrix::new(ComplexMatrix::diagonal(&[0.5, 0.3, 0.2, 0.0])).unwrap();
        let r = model.rhs(&rho).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    assert_eq!(r[(i, j)], C64::new(0.0, 0.0));
                }
            }
        }
    }

    #[test]
    fn sink_is_absorbing() {
        let model = build_model(&generate_perfect_maze(3, 3, 0).unwrap(), QswParams::with_p(0.4).unwrap());
        let rho = DensityMatrix::basis_state(model.dim(), model.sink()).unwrap();
        let r = model.rhs(&rho).unwrap();
        assert_eq!(r.max_abs_diff(&ComplexMatrix::zeros(model.dim(), model.dim())), 0.0);
    }

    #[test]
    fn rhs_rejects_wrong_dimension() {
        let model = build_model(&two_node(), QswParams::with_p(0.4).unwrap());
        let rho = DensityMatrix::basis_state(5, 0).unwrap();
        assert!(matches!(model.rhs(&rho), Err(Error::DimensionMismatch { .. })));
        assert!(evolve(&rho, &model, 1).is_err());
    }

    #[test]
    fn initial_state_is_entrance_projector() {
        let model = build_model(&generate_perfect_maze(3, 3, 0).unwrap(), QswParams::with_p(0.4).unwrap());
        let rho = initial_state(&model);
        assert_eq!(rho.trace(), 1.0);
        assert_eq!(rho.purity(), 1.0);
        assert_eq!(rho.matrix()[(0, 0)], C64::new(1.0, 0.0));
        assert_eq!(rho.matrix().as_slice().iter().filter(|z| z.norm() > 0.0).count(), 1);
    }

    #[test]
    fn first_leak_reaches_only_grid_neighbours_of_entrance() {
        // With H = A the commutator couples |e⟩⟨e| only to |k⟩⟨e| and |e⟩⟨k|
        // for linked k, and the dissipator only feeds the linked diagonals.
        let maze = generate_perfect_maze(4, 4, 8).unwrap();
        let model = build_model(&maze, QswParams::with_p(0.5).unwrap());
        let r = model.rhs(&initial_state(&model)).unwrap();
        let e = maze.entrance();
        let nbrs = maze.neighbors(e);
        for i in 0..model.dim() {
            for j in 0..model.dim() {
                let allowed = (i == e || nbrs.contains(&i)) && (j == e || nbrs.contains(&j))
                    && (i == e || j == e || i == j);
                if !allowed {
                    assert_eq!(r[(i, j)], C64::new(0.0, 0.0), "({i}, {j})");
                }
            }
        }
        for &k in &nbrs {
            assert!(r[(k, k)].re > 0.0);
            assert!(r[(k, e)].norm() > 0.0);
        }
    }

    #[test]
    fn tiny_horizon_far_from_exit_leaves_sink_empty() {
        let maze = generate_perfect_maze(5, 5, 3).unwrap();
        let model = build_model(&maze, QswParams::new(0.5, 1.0, 1e-3, 1e-2).unwrap());
        let traj = evolve(&initial_state(&model), &model, 1).unwrap();
        assert!(traj.final_p_sink() < 1e-12);
    }

    #[test]
    fn evolution_keeps_state_valid_and_sink_monotone() {
        let maze = generate_perfect_maze(3, 3, 4).unwrap();
        let model = build_model(&maze, QswParams::new(0.8, 1.0, 0.005, 5.0).unwrap());
        let traj = evolve(&initial_state(&model), &model, 50).unwrap();
        assert_eq!(traj.times.len(), traj.states.len());
        assert_eq!(*traj.times.last().unwrap(), 5.0);
        for rho in &traj.states {
            rho.validate(&StateTolerance::PROPAGATED).unwrap();
        }
        for w in traj.p_sink_series.windows(2) {
            assert!(w[1] >= w[0] - 1e-9);
        }
        let integral = p_sink_from_integral(&traj, &model).unwrap();
        for (a, b) in integral.iter().zip(&traj.p_sink_series) {
            assert!((a - b).abs() < 1e-4);
        }
    }

    #[test]
    fn integral_of_zero_exit_population_is_zero() {
        let traj = Trajectory {
            times: vec![0.0, 0.5, 1.0],
            states: vec![DensityMatrix::basis_state(2, 0).unwrap(); 3],
            p_sink_series: vec![0.0; 3],
            snapshot_steps: vec![0, 5, 10],
            step_size: 0.1,
            exit_population: vec![0.0; 11],
        };
        let model = build_model(&two_node(), QswParams::with_p(0.5).unwrap());
        assert_eq!(p_sink_from_integral(&traj, &model).unwrap(), vec![0.0; 3]);
        let empty = Trajectory { exit_population: vec![], ..traj };
        assert!(p_sink_from_integral(&empty, &model).is_err());
    }

    #[test]
    fn oversized_step_is_reported_as_integration_failure() {
        let model = build_model(&generate_perfect_maze(4, 4, 1).unwrap(), QswParams::new(0.2, 1.0, 2.0, 40.0).unwrap());
        match evolve(&initial_state(&model), &model, 1) {
            Err(Error::Integration { step, .. }) => assert!(step >= 1),
            other => panic!("expected integration failure, got {other:?}"),
        }
    }

    #[test]
    fn unstable_step_with_exact_trace_is_still_rejected() {
        // every RHS is traceless, so only the negative population exposes it
        let model = build_model(&generate_perfect_maze(6, 6, 0).unwrap(), QswParams::new(0.5, 1.0, 5.0, 10.0).unwrap());
        match evolve(&initial_state(&model), &model, 1) {
            Err(Error::Integration { step: 1, reason }) => assert!(reason.contains("negative")),
            other => panic!("expected integration failure, got {other:?}"),
        }
    }

    #[test]
    fn csv_header_and_rows() {
        let model = build_model(&two_node(), QswParams::new(1.0, 1.0, 0.1, 0.2).unwrap());
        let traj = evolve(&initial_state(&model), &model, 1).unwrap();
        let csv = traj.to_csv(&["seed=1".into()]);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("# seed=1"));
        assert_eq!(lines.next(), Some("t,p_sink,pop_0,pop_1,pop_2"));
        assert_eq!(lines.count(), 3);
        let json: serde_json::Value = serde_json::from_str(&traj.states_to_json()).unwrap();
        assert_eq!(json.as_array().unwrap().len(), 3);
    }
}
