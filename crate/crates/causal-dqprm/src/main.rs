//! Command-line front end: decomposition checks, projections, diagram
//! compilation, training experiments, and plotting.
//!
//! Exit codes: 0 on success, 1 when a task is rejected or an input is
//! invalid, 2 on usage errors (handled by the argument parser).

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use causal_dqprm::compose::{check_relaxed, check_strict, BisimResult};
use causal_dqprm::envs::load_task;
use causal_dqprm::error::Result;
use causal_dqprm::event::Event;
use causal_dqprm::harness::{
    emit_csv, first_reach, read_csv, run_experiment, train_one, ExperimentConfig, Mode,
};
use causal_dqprm::plot::{emit_plot, PlotSeries};
use causal_dqprm::tilde::{build_tilde, value_iteration};
use causal_dqprm::tlcd::parse_tlcd;
use causal_dqprm::train::{
    execute_centralized, execute_team, frechet_bounds, Execution, TrainConfig,
};
use causal_dqprm::Error;

#[derive(Parser)]
#[command(
    name = "causal-dqprm",
    version,
    about = "Decentralized Q-learning with reward machines and causal knowledge"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check whether a task decomposes cleanly across its agents
    Check(CheckArgs),
    /// Print each agent's projected machine
    Project(ProjectArgs),
    /// Compile a causal diagram into its DFA
    CompileTlcd(CompileArgs),
    /// Show an agent's machine/DFA product with attainable-reward values
    InspectTilde(InspectArgs),
    /// Train one mode over several seeds and write the aggregated CSV
    Train(TrainArgs),
    /// Train once, then report greedy execution statistics
    Eval(EvalArgs),
    /// Render CSV curves into an SVG plot
    Plot(PlotArgs),
}

#[derive(Args)]
struct CheckArgs {
    /// Task definition file
    #[arg(long)]
    task: PathBuf,
    /// Causal diagram to relax the check with
    #[arg(long)]
    tlcd: Option<PathBuf>,
}

#[derive(Args)]
struct ProjectArgs {
    #[arg(long)]
    task: PathBuf,
    /// Restrict the output to one agent (1-based)
    #[arg(long)]
    agent: Option<usize>,
}

#[derive(Args)]
struct CompileArgs {
    /// Causal diagram file
    #[arg(long)]
    tlcd: PathBuf,
    /// Compile over these events instead of the diagram's own alphabet
    #[arg(long, num_args = 1..)]
    alphabet: Vec<String>,
    /// Emit Graphviz instead of the text form
    #[arg(long)]
    dot: bool,
}

#[derive(Args)]
struct InspectArgs {
    #[arg(long)]
    task: PathBuf,
    /// Agent whose augmented machine to show (1-based)
    #[arg(long)]
    agent: usize,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    task: PathBuf,
    /// One of dec-tlcd, dec-no-tlcd, cent-tlcd, cent-no-tlcd
    #[arg(long)]
    mode: String,
    /// Independent seeded runs to aggregate
    #[arg(long, default_value_t = 10)]
    runs: usize,
    /// Seed of the first run; later runs use consecutive seeds
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Training episodes per run
    #[arg(long, default_value_t = 200)]
    episodes: usize,
    /// Step cap per episode
    #[arg(long, default_value_t = 1000)]
    steps: usize,
    /// Override the task file's synchronization probability
    #[arg(long)]
    p_sync: Option<f64>,
    /// Output directory (also settable via CAUSAL_DQPRM_OUT; default "results")
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for the seed fan-out (default: all cores)
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    task: PathBuf,
    /// One of dec-tlcd, dec-no-tlcd, cent-tlcd, cent-no-tlcd
    #[arg(long)]
    mode: String,
    /// Greedy evaluation episodes after training
    #[arg(long, default_value_t = 500)]
    episodes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Training episodes before evaluating
    #[arg(long, default_value_t = 200)]
    train_episodes: usize,
    /// Step cap per episode
    #[arg(long, default_value_t = 1000)]
    steps: usize,
}

#[derive(Args)]
struct PlotArgs {
    /// Input CSV files, one series each
    #[arg(long, num_args = 1.., required = true)]
    csv: Vec<PathBuf>,
    /// Legend labels, one per CSV (default: file stems)
    #[arg(long, num_args = 1..)]
    label: Vec<String>,
    /// Output SVG file
    #[arg(long, default_value = "plot.svg")]
    out: PathBuf,
    /// Top of the steps-to-completion axis
    #[arg(long, default_value_t = 1000.0)]
    cap: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<u8> {
    match cli.cmd {
        Cmd::Check(args) => cmd_check(args),
        Cmd::Project(args) => cmd_project(args),
        Cmd::CompileTlcd(args) => cmd_compile(args),
        Cmd::InspectTilde(args) => cmd_inspect(args),
        Cmd::Train(args) => cmd_train(args),
        Cmd::Eval(args) => cmd_eval(args),
        Cmd::Plot(args) => cmd_plot(args),
    }
}

fn describe(result: &BisimResult) -> String {
    match result {
        BisimResult::Bisimilar { .. } => "PASS".to_string(),
        BisimResult::NotBisimilar { counterexample } => {
            let seq = if counterexample.is_empty() {
                "the empty sequence".to_string()
            } else {
                counterexample.iter().map(Event::name).collect::<Vec<_>>().join(" ")
            };
            format!("FAIL — team and composed projections disagree on: {seq}")
        }
    }
}

fn cmd_check(args: CheckArgs) -> Result<u8> {
    let task = load_task(&args.task)?;
    let locals = task.local_alphabets();
    let strict = check_strict(&task.team, &locals)?;
    println!("strict check: {}", describe(&strict));
    match args.tlcd {
        Some(path) => {
            let text = fs::read_to_string(&path)
                .map_err(|e| Error::invalid(format!("cannot read '{}': {e}", path.display())))?;
            let causal = parse_tlcd(&text)?.compile(task.team.alphabet())?;
            let relaxed = check_relaxed(&task.team, &locals, causal.dfa())?;
            println!("relaxed check: {}", describe(&relaxed));
            Ok(if relaxed.is_bisimilar() { 0 } else { 1 })
        }
        None => Ok(if strict.is_bisimilar() { 0 } else { 1 }),
    }
}

fn cmd_project(args: ProjectArgs) -> Result<u8> {
    let task = load_task(&args.task)?;
    let env = task.team_env()?;
    let agents: Vec<usize> = match args.agent {
        Some(a) => {
            if a == 0 || a > env.num_agents() {
                return Err(Error::invalid(format!(
                    "agent {a} out of range 1..={}",
                    env.num_agents()
                )));
            }
            vec![a - 1]
        }
        None => (0..env.num_agents()).collect(),
    };
    for (k, &i) in agents.iter().enumerate() {
        if k > 0 {
            println!();
        }
        let machine = env.local(i).machine();
        println!("# agent {} over alphabet {{{}}}", i + 1, join_alphabet(machine));
        print!("{}", machine.to_text());
        println!("# team states behind each projected state:");
        for (state, members) in env.projection(i).back_map().iter().enumerate() {
            println!("#   {} = {{{members}}}", machine.state_name(state));
        }
    }
    Ok(0)
}

fn join_alphabet(machine: &causal_dqprm::rm::RewardMachine) -> String {
    machine.alphabet().iter().map(Event::name).collect::<Vec<_>>().join(" ")
}

fn cmd_compile(args: CompileArgs) -> Result<u8> {
    let text = fs::read_to_string(&args.tlcd)
        .map_err(|e| Error::invalid(format!("cannot read '{}': {e}", args.tlcd.display())))?;
    let tlcd = parse_tlcd(&text)?;
    let alphabet = if args.alphabet.is_empty() {
        tlcd.alphabet().clone()
    } else {
        let names: Vec<&str> = args.alphabet.iter().map(String::as_str).collect();
        causal_dqprm::event::EventAlphabet::from_names(&names)?
    };
    let causal = tlcd.compile(&alphabet)?;
    println!("# formula: {}", tlcd.formula());
    match causal.rejecting_sink() {
        Some(q) => println!("# rejecting sink: {}", causal.dfa().state_name(q)),
        None => println!("# rejecting sink: none"),
    }
    if args.dot {
        print!("{}", causal.dfa().to_dot());
    } else {
        print!("{}", causal.dfa().to_text());
    }
    Ok(0)
}

fn cmd_inspect(args: InspectArgs) -> Result<u8> {
    let task = load_task(&args.task)?;
    let env = task.team_env()?;
    if args.agent == 0 || args.agent > env.num_agents() {
        return Err(Error::invalid(format!(
            "agent {} out of range 1..={}",
            args.agent,
            env.num_agents()
        )));
    }
    let i = args.agent - 1;
    let causal = task.agent_causal(i)?;
    let tilde = build_tilde(env.local(i).machine(), &causal)?;
    let values = value_iteration(&tilde)?;
    print!("{}", tilde.to_text(&values));
    Ok(0)
}

fn cmd_train(args: TrainArgs) -> Result<u8> {
    let mode = Mode::parse(&args.mode)?;
    let out_dir = args
        .out
        .or_else(|| std::env::var_os("CAUSAL_DQPRM_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("results"));

    let mut cfg = ExperimentConfig::new(&args.task, mode, args.runs, args.seed);
    cfg.train = TrainConfig {
        num_episodes: args.episodes,
        num_steps: args.steps,
        ..TrainConfig::default()
    };
    cfg.p_sync_override = args.p_sync;

    let agg = match args.workers {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::invalid(format!("cannot build worker pool: {e}")))?;
            pool.install(|| run_experiment(&cfg))?
        }
        None => run_experiment(&cfg)?,
    };

    fs::create_dir_all(&out_dir)?;
    let task_name = load_task(&args.task)?.kind.name().to_string();
    let path = out_dir.join(format!("{task_name}_{}.csv", mode.name()));
    emit_csv(&agg, &path)?;

    println!("wrote {}", path.display());
    if let (Some(&step), Some(&median)) = (agg.steps.last(), agg.prc_50.last()) {
        println!("final median steps-to-completion at step {step}: {median:.1}");
    }
    match first_reach(&agg, 200.0) {
        Some(step) => println!("median first reached 200 steps-to-completion at step {step}"),
        None => println!("median never reached 200 steps-to-completion"),
    }
    Ok(0)
}

fn cmd_eval(args: EvalArgs) -> Result<u8> {
    let mode = Mode::parse(&args.mode)?;
    let task = load_task(&args.task)?;
    let train_cfg = TrainConfig {
        num_episodes: args.train_episodes,
        num_steps: args.steps,
        p_sync: task.p_sync,
        seed: args.seed,
        ..TrainConfig::default()
    };
    let run = train_one(&task, mode, &train_cfg)?;
    let env = task.team_env()?;
    let tilde = if mode == Mode::CentTlcd {
        let causal = task.team_causal()?.expect("cent-tlcd trained without a diagram");
        Some(build_tilde(env.team_machine(), &causal)?)
    } else {
        None
    };

    let mut rng = ChaCha8Rng::seed_from_u64(args.seed.wrapping_add(0x00c0_ffee));
    let n = env.num_agents();
    let mut team_ok = 0usize;
    let mut agent_ok = vec![0usize; n];
    let mut equivalence_ok = 0usize;
    for _ in 0..args.episodes {
        let ex: Execution = if mode.centralized() {
            execute_centralized(&env, &run.policies[0], tilde.as_ref(), args.steps, &mut rng)?
        } else {
            execute_team(&env, &run.policies, args.steps, &mut rng)?
        };
        if ex.success {
            team_ok += 1;
        }
        for (i, &ok) in ex.local_accepts.iter().enumerate() {
            if ok {
                agent_ok[i] += 1;
            }
        }
        if ex.success == ex.local_accepts.iter().all(|&ok| ok) {
            equivalence_ok += 1;
        }
    }

    let denom = args.episodes.max(1) as f64;
    let team_rate = team_ok as f64 / denom;
    let agent_rates: Vec<f64> = agent_ok.iter().map(|&c| c as f64 / denom).collect();
    println!("episodes: {}", args.episodes);
    println!("team success rate: {team_rate:.3}");
    for (i, r) in agent_rates.iter().enumerate() {
        println!("agent {} local acceptance rate: {r:.3}", i + 1);
    }
    println!(
        "team acceptance == all local acceptances in {equivalence_ok}/{} episodes",
        args.episodes
    );
    if args.episodes > 0 {
        let (lo, hi) = frechet_bounds(&agent_rates, args.episodes);
        let inside = lo <= team_rate && team_rate <= hi;
        println!(
            "team rate bounds from agent rates: [{lo:.3}, {hi:.3}] — {}",
            if inside { "satisfied" } else { "VIOLATED" }
        );
    }
    Ok(0)
}

fn cmd_plot(args: PlotArgs) -> Result<u8> {
    if !args.label.is_empty() && args.label.len() != args.csv.len() {
        return Err(Error::invalid(format!(
            "{} labels for {} CSV files",
            args.label.len(),
            args.csv.len()
        )));
    }
    let mut series = Vec::with_capacity(args.csv.len());
    for (k, path) in args.csv.iter().enumerate() {
        let label = match args.label.get(k) {
            Some(l) => l.clone(),
            None => path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| format!("series {}", k + 1)),
        };
        series.push(PlotSeries::from_curve(label, read_csv(path)?)?);
    }
    emit_plot(&series, args.cap, &args.out)?;
    println!("wrote {}", args.out.display());
    Ok(0)
}
