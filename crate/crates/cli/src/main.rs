//! `qml`: generate mazes, run quantum stochastic walks, train the maze agent
//! and the quantum embedding. Exit status 0 on success, 2 for invalid
//! configuration or input, 3 when a simulation fails numerically.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use qml_core::embed::{self, EmbeddingModel, GramMode, LabeledDataset1D, TrainConfig};
use qml_core::maze::{generate_perfect_maze, MazeGraph};
use qml_core::qsw::{self, build_model, evolve, initial_state};
use qml_core::rl::{self, AgentConfig, EnvConfig, MazeEnv, Policy};
use qml_core::{Error, QswParams};

#[derive(Parser)]
#[command(name = "qml", version, about = "Quantum walks in mazes and trainable quantum embeddings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a perfect maze and write it as JSON.
    MazeGen(MazeGenArgs),
    /// Evolve the walker from the entrance and write p_sink and populations as CSV.
    QswRun(QswRunArgs),
    /// Train the link-toggling agent with Q-learning.
    RlTrain(RlTrainArgs),
    /// Compare the escape probability of a policy against the untouched maze.
    RlEval(RlEvalArgs),
    /// Write a synthetic 1D two-class dataset.
    EmbedDataset(EmbedDatasetArgs),
    /// Train the embedding angles by gradient descent.
    EmbedTrain(EmbedTrainArgs),
    /// Write the Gram matrix of a dataset under a trained embedding.
    EmbedGram(EmbedGramArgs),
}

#[derive(Args)]
struct MazeGenArgs {
    #[arg(long)]
    width: usize,
    #[arg(long)]
    height: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Exit node (defaults to the upper-right cell).
    #[arg(long)]
    exit: Option<usize>,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args, Clone, Copy)]
struct PhysicsArgs {
    /// Dephasing weight: 0 is a coherent quantum walk, 1 a classical random walk.
    #[arg(long)]
    p: f64,
    /// Sink coupling rate.
    #[arg(long, default_value_t = qsw::DEFAULT_GAMMA)]
    gamma: f64,
    /// Maximum RK4 step.
    #[arg(long, default_value_t = qsw::DEFAULT_DT)]
    dt: f64,
    #[arg(long, default_value_t = qsw::DEFAULT_T_FINAL)]
    t_final: f64,
}

impl PhysicsArgs {
    fn params(&self) -> Result<QswParams> {
        Ok(QswParams::new(self.p, self.gamma, self.dt, self.t_final)?)
    }
}

#[derive(Args)]
struct QswRunArgs {
    #[arg(long)]
    maze: PathBuf,
    #[command(flatten)]
    physics: PhysicsArgs,
    /// Record every n-th integrator step (the final step is always recorded).
    #[arg(long, default_value_t = 20)]
    sample_every: usize,
    #[arg(short, long)]
    output: PathBuf,
    /// Also dump the sampled density matrices as JSON.
    #[arg(long)]
    states_json: Option<PathBuf>,
}

#[derive(Args, Clone, Copy)]
struct EnvArgs {
    #[command(flatten)]
    physics: PhysicsArgs,
    /// Time between decisions.
    #[arg(long, default_value_t = rl::DEFAULT_ACTION_PERIOD)]
    action_period: f64,
    /// Decisions per episode.
    #[arg(long, default_value_t = rl::DEFAULT_MAX_ACTIONS)]
    max_actions: usize,
    /// Number of cached action prefixes (0 disables the cache).
    #[arg(long, default_value_t = 4096)]
    cache: usize,
}

impl EnvArgs {
    fn config(&self) -> Result<EnvConfig> {
        Ok(EnvConfig::new(self.physics.params()?, self.action_period, self.max_actions)?)
    }
}

#[derive(Args)]
struct RlTrainArgs {
    #[arg(long)]
    maze: PathBuf,
    #[command(flatten)]
    env: EnvArgs,
    #[arg(long, default_value_t = 500)]
    episodes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.1)]
    learning_rate: f64,
    #[arg(long, default_value_t = 1.0)]
    discount: f64,
    #[arg(long, default_value_t = 1.0)]
    epsilon_start: f64,
    #[arg(long, default_value_t = 0.05)]
    epsilon_end: f64,
    /// Fraction of the episodes over which epsilon decays linearly.
    #[arg(long, default_value_t = 0.5)]
    decay_fraction: f64,
    /// Learning curve CSV.
    #[arg(long)]
    curve: PathBuf,
    /// Greedy policy JSON.
    #[arg(long)]
    policy: PathBuf,
}

#[derive(Args)]
struct RlEvalArgs {
    #[arg(long)]
    maze: PathBuf,
    #[command(flatten)]
    env: EnvArgs,
    /// Policy JSON; without it only the untouched maze is evaluated.
    #[arg(long)]
    policy: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    runs: usize,
}

#[derive(Args)]
struct EmbedDatasetArgs {
    #[arg(long, default_value_t = 20)]
    n_per_class: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct DataArgs {
    /// Dataset JSON; generated from --n-per-class and --data-seed when absent.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    n_per_class: usize,
    #[arg(long, default_value_t = 0)]
    data_seed: u64,
}

impl DataArgs {
    fn load(&self) -> Result<(LabeledDataset1D, String)> {
        match &self.data {
            Some(path) => Ok((LabeledDataset1D::from_json(&read(path)?)?, format!("data={}", path.display()))),
            None => Ok((
                embed::synth_dataset(self.n_per_class, self.data_seed)?,
                format!("n_per_class={} data_seed={}", self.n_per_class, self.data_seed),
            )),
        }
    }
}

#[derive(Args)]
struct EmbedTrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 0.1)]
    lr: f64,
    #[arg(long, default_value_t = 300)]
    epochs: usize,
    /// Seed of the initial angles.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Per-epoch loss and angles CSV.
    #[arg(long)]
    log: PathBuf,
    /// Trained model JSON.
    #[arg(long)]
    model: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum GramKind {
    Exact,
    Sampled,
}

#[derive(Args)]
struct EmbedGramArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_enum, default_value = "exact")]
    mode: GramKind,
    #[arg(long, default_value_t = 1000)]
    shots: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Serialize, Deserialize)]
struct ModelDocument {
    config: serde_json::Value,
    thetas: [f64; 3],
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn load_maze(path: &Path) -> Result<MazeGraph> {
    MazeGraph::from_json(&read(path)?).with_context(|| format!("invalid maze {}", path.display()))
}

fn physics_comment(p: &QswParams) -> String {
    format!("p={:?} gamma={:?} dt={:?} t_final={:?}", p.p, p.gamma, p.dt, p.t_final)
}

fn env_comment(c: &EnvConfig, cache: usize) -> String {
    format!(
        "{} action_period={:?} max_actions={} cache={}",
        physics_comment(&c.params),
        c.action_period,
        c.max_actions,
        cache
    )
}

fn maze_comment(path: &Path, maze: &MazeGraph) -> String {
    format!(
        "maze={} width={} height={} seed={} entrance={} exit={}",
        path.display(),
        maze.width(),
        maze.height(),
        maze.seed(),
        maze.entrance(),
        maze.exit()
    )
}

fn maze_gen(args: &MazeGenArgs) -> Result<()> {
    let mut maze = generate_perfect_maze(args.width, args.height, args.seed)?;
    if let Some(exit) = args.exit {
        maze = maze.with_exit(exit)?;
    }
    write(&args.output, &maze.to_json())
}

fn qsw_run(args: &QswRunArgs) -> Result<()> {
    let maze = load_maze(&args.maze)?;
    let params = args.physics.params()?;
    let model = build_model(&maze, params);
    let traj = evolve(&initial_state(&model), &model, args.sample_every)?;
    let comments = vec![
        "qsw-run".to_string(),
        maze_comment(&args.maze, &maze),
        format!("{} sample_every={}", physics_comment(&params), args.sample_every),
        format!("final_p_sink={:?}", traj.final_p_sink()),
    ];
    write(&args.output, &traj.to_csv(&comments))?;
    if let Some(path) = &args.states_json {
        write(path, &traj.states_to_json())?;
    }
    println!("p_sink({:?}) = {:?}", params.t_final, traj.final_p_sink());
    Ok(())
}

fn rl_train(args: &RlTrainArgs) -> Result<()> {
    let maze = load_maze(&args.maze)?;
    let env_config = args.env.config()?;
    let agent = AgentConfig {
        learning_rate: args.learning_rate,
        discount: args.discount,
        epsilon_start: args.epsilon_start,
        epsilon_end: args.epsilon_end,
        decay_fraction: args.decay_fraction,
    };
    agent.validate()?;
    let mut env = MazeEnv::new(maze.clone(), env_config).with_cache(args.env.cache);
    let outcome = rl::train(&mut env, &agent, args.episodes, args.seed)?;
    let baseline = rl::evaluate(&mut env, &Policy::noop(), 1)?;
    let trained = rl::evaluate(&mut env, &outcome.policy, 1)?;

    let comments = vec![
        "rl-train".to_string(),
        maze_comment(&args.maze, &maze),
        env_comment(&env_config, args.env.cache),
        format!(
            "episodes={} seed={} learning_rate={:?} discount={:?} epsilon_start={:?} epsilon_end={:?} decay_fraction={:?}",
            args.episodes,
            args.seed,
            agent.learning_rate,
            agent.discount,
            agent.epsilon_start,
            agent.epsilon_end,
            agent.decay_fraction
        ),
        format!("baseline_p_sink={baseline:?} policy_p_sink={trained:?}"),
    ];
    write(&args.curve, &outcome.curve.to_csv(&comments))?;
    let config = json!({
        "maze": args.maze.display().to_string(),
        "maze_seed": maze.seed(),
        "env": env_config,
        "agent": agent,
        "episodes": args.episodes,
        "seed": args.seed,
        "baseline_p_sink": baseline,
        "policy_p_sink": trained,
    });
    write(&args.policy, &outcome.policy.to_json(&config))?;
    println!("baseline_p_sink = {baseline:?}");
    println!("policy_p_sink = {trained:?}");
    Ok(())
}

fn rl_eval(args: &RlEvalArgs) -> Result<()> {
    let maze = load_maze(&args.maze)?;
    let mut env = MazeEnv::new(maze, args.env.config()?).with_cache(args.env.cache);
    let baseline = rl::evaluate(&mut env, &Policy::noop(), args.runs)?;
    println!("baseline_p_sink = {baseline:?}");
    if let Some(path) = &args.policy {
        let policy = Policy::from_json(&read(path)?)?;
        let value = rl::evaluate(&mut env, &policy, args.runs)?;
        let record = rl::rollout(&mut env, &policy)?;
        let actions: Vec<String> = record.actions.iter().map(ToString::to_string).collect();
        println!("policy_p_sink = {value:?}");
        println!("ratio = {:?}", value / baseline);
        println!("actions = {}", actions.join(" "));
    }
    Ok(())
}

fn embed_dataset(args: &EmbedDatasetArgs) -> Result<()> {
    write(&args.output, &embed::synth_dataset(args.n_per_class, args.seed)?.to_json())
}

fn embed_train(args: &EmbedTrainArgs) -> Result<()> {
    let (data, source) = args.data.load()?;
    let config = TrainConfig { learning_rate: args.lr, epochs: args.epochs, seed: args.seed };
    let run = embed::train(&data, &config)?;
    let comments = vec![
        "embed-train".to_string(),
        source.clone(),
        format!("lr={:?} epochs={} seed={}", config.learning_rate, config.epochs, config.seed),
    ];
    write(&args.log, &run.to_csv(&comments))?;
    let doc = ModelDocument {
        config: json!({ "data": source, "train": config, "final_loss": run.losses.last() }),
        thetas: run.model.thetas,
    };
    write(&args.model, &(serde_json::to_string_pretty(&doc)? + "\n"))?;
    println!("loss {:?} -> {:?}", run.losses[0], run.losses[run.losses.len() - 1]);
    Ok(())
}

fn embed_gram(args: &EmbedGramArgs) -> Result<()> {
    let (data, source) = args.data.load()?;
    let doc: ModelDocument = serde_json::from_str(&read(&args.model)?)
        .map_err(|e| Error::Parse { line: e.line(), column: e.column(), message: e.to_string() })
        .with_context(|| format!("invalid model {}", args.model.display()))?;
    let model = EmbeddingModel::new(doc.thetas)?;
    let (mode, mode_text) = match args.mode {
        GramKind::Exact => (GramMode::Exact, "mode=exact".to_string()),
        GramKind::Sampled => (
            GramMode::Sampled { shots: args.shots, seed: args.seed },
            format!("mode=sampled shots={} seed={}", args.shots, args.seed),
        ),
    };
    let g = embed::gram(&data.xs(), &model, mode)?;
    let (intra, inter) = g.block_means(&data.labels());
    let labels: String = data.labels().iter().map(|l| format!("{l:?}")).collect();
    let comments = vec![
        "embed-gram".to_string(),
        source,
        format!("model={} thetas={:?}", args.model.display(), model.thetas),
        mode_text,
        format!("labels={labels}"),
        format!("evaluations={} intra_mean={intra:?} inter_mean={inter:?}", g.evaluations),
    ];
    write(&args.output, &g.to_csv(&comments))?;
    println!("intra_mean = {intra:?}");
    println!("inter_mean = {inter:?}");
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::MazeGen(a) => maze_gen(a),
        Command::QswRun(a) => qsw_run(a),
        Command::RlTrain(a) => rl_train(a),
        Command::RlEval(a) => rl_eval(a),
        Command::EmbedDataset(a) => embed_dataset(a),
        Command::EmbedTrain(a) => embed_train(a),
        Command::EmbedGram(a) => embed_gram(a),
    }
}

fn exit_status(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<Error>()) {
        Some(Error::Integration { .. }) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_status(&err))
        }
    }
}
