mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use fosae::ama1::{self, GroundedModel};
use fosae::dataset::TransitionDataset;
use fosae::fosae::{load_checkpoint, CheckpointManifest, FosaeConfig, FosaeModel, PropositionalState};
use fosae::pipeline::{self, GridOrder, GridSpec, TrainError, TrainOptions, TransitionLog};
use fosae::planner::{self, PlanValidation, SearchOptions, SearchOutcome};
use fosae::puzzle::PuzzleState;
use fosae::solve::{self, SolveOptions};
use fosae::{interpret, Scalar};

use config::ModelArgs;

/// Learns first-order propositional representations of 8-puzzle states and
/// plans with them.
#[derive(Parser, Debug)]
#[command(name = "fosae", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Precision {
    F32,
    F64,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Split {
    Train,
    Test,
    All,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Transitions {
    /// Every legal move between reachable states.
    Full,
    /// Only the transitions of `--data`.
    Observed,
    /// Both.
    Both,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate an 8-puzzle transition dataset.
    GenData {
        #[arg(long, default_value_t = 20_000)]
        count: usize,
        #[arg(long, env = config::SEED_ENV, default_value_t = 0)]
        seed: u64,
        /// Fraction of pairs used for training.
        #[arg(long, default_value_t = 0.9)]
        split: f64,
        /// Drop repeated (pre, suc) pairs.
        #[arg(long)]
        dedup: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model and write its best checkpoint.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Checkpoint directory.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_enum, default_value_t = Precision::F32)]
        precision: Precision,
        /// Per-epoch metrics CSV.
        #[arg(long)]
        metrics: Option<PathBuf>,
        #[arg(long)]
        max_train_states: Option<usize>,
        #[arg(long)]
        max_test_states: Option<usize>,
        /// Stop once the per-object test error reaches this value.
        #[arg(long)]
        stop_below: Option<f64>,
        #[arg(long)]
        quiet: bool,
    },
    /// Train one model per (arity, units, predicates) cell.
    Grid {
        #[arg(long)]
        data: PathBuf,
        /// Results CSV.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_delimiter = ',', default_values_t = [1, 2, 3])]
        arities: Vec<usize>,
        #[arg(long, default_value_t = 8)]
        max_units: usize,
        #[arg(long, default_value_t = 8)]
        max_predicates: usize,
        /// Per-object reconstruction error a cell must reach.
        #[arg(long, default_value_t = 0.1)]
        threshold: f64,
        /// Visit cells by ascending proposition count and stop each arity
        /// at its first success.
        #[arg(long)]
        min_search: bool,
        #[arg(long, value_enum, default_value_t = Precision::F32)]
        precision: Precision,
        #[arg(long)]
        max_train_states: Option<usize>,
        #[arg(long)]
        max_test_states: Option<usize>,
    },
    /// Encode a dataset's transitions into a transition log.
    Encode {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Split::All)]
        split: Split,
        #[arg(long, value_enum)]
        precision: Option<Precision>,
    },
    /// Write PDDL domain and problem files for a transition log.
    EmitPddl {
        #[arg(long)]
        log: PathBuf,
        /// Initial state as a bit string.
        #[arg(long, conflicts_with = "init_board")]
        init: Option<String>,
        #[arg(long, conflicts_with = "goal_board")]
        goal: Option<String>,
        /// Initial board such as `125/340/678`, encoded with `--checkpoint`.
        #[arg(long, requires = "checkpoint")]
        init_board: Option<String>,
        #[arg(long, requires = "checkpoint")]
        goal_board: Option<String>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Directory receiving `domain.pddl` and `problem.pddl`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve a PDDL task; exit 0 solved, 1 unsolvable, 2 error.
    Plan {
        #[arg(long)]
        domain: PathBuf,
        #[arg(long)]
        problem: PathBuf,
        #[arg(long, default_value_t = 4096)]
        budget_mb: u64,
        /// Plan file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate puzzle instances and solve them end to end; exit 0 all
    /// solved, 3 some unsolved, 2 error.
    Solve {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 7)]
        steps: usize,
        #[arg(long, default_value_t = 20)]
        count: usize,
        #[arg(long, env = config::SEED_ENV, default_value_t = 0)]
        seed: u64,
        /// Source of the transitions the action model is built from.
        #[arg(long, value_enum, default_value_t = Transitions::Full)]
        transitions: Transitions,
        /// Dataset for `observed` / `both`.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Results CSV; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Directory receiving the decoded board sequence of each plan.
        #[arg(long)]
        trace_dir: Option<PathBuf>,
        /// Write `domain.pddl` and one `problem-NNN.pddl` per instance here
        /// and stop before planning.
        #[arg(long)]
        emit_only: Option<PathBuf>,
        #[arg(long, default_value_t = 4096)]
        budget_mb: u64,
        #[arg(long, value_enum)]
        precision: Option<Precision>,
    },
    /// Report positive and negative argument examples per predicate.
    Interpret {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, required_unless_present = "all")]
        pred: Option<usize>,
        #[arg(long)]
        all: bool,
        /// Examples kept per predicate and truth value.
        #[arg(long, default_value_t = 10)]
        max_k: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        precision: Option<Precision>,
    },
    /// Check a plan file against a PDDL task; exit 0 valid, 1 invalid.
    Validate {
        #[arg(long)]
        domain: PathBuf,
        #[arg(long)]
        problem: PathBuf,
        #[arg(long)]
        plan: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn write_out(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            fs::write(p, text).with_context(|| format!("writing {}", p.display()))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_data(path: &Path) -> Result<TransitionDataset> {
    TransitionDataset::load(path).with_context(|| format!("loading dataset {}", path.display()))
}

fn checkpoint_precision(dir: &Path, requested: Option<Precision>) -> Result<Precision> {
    if let Some(p) = requested {
        return Ok(p);
    }
    let text = fs::read_to_string(dir.join(fosae::fosae::MANIFEST_FILE))
        .with_context(|| format!("reading checkpoint {}", dir.display()))?;
    let manifest: CheckpointManifest = serde_json::from_str(&text)?;
    Ok(if manifest.precision == "f64" { Precision::F64 } else { Precision::F32 })
}

fn load_model<T: Scalar>(dir: &Path) -> Result<FosaeModel<T>> {
    Ok(load_checkpoint::<T>(dir)
        .with_context(|| format!("loading checkpoint {}", dir.display()))?
        .0)
}

macro_rules! with_precision {
    ($p:expr, $f:ident ( $($arg:expr),* )) => {
        match $p {
            Precision::F32 => $f::<f32>($($arg),*),
            Precision::F64 => $f::<f64>($($arg),*),
        }
    };
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::GenData {
            count,
            seed,
            split,
            dedup,
            out,
        } => {
            if !(0.0..=1.0).contains(&split) {
                bail!("--split must lie in [0, 1]");
            }
            let data = TransitionDataset::generate_puzzle(count, seed, split, dedup)?;
            data.save(&out)?;
            eprintln!(
                "wrote {} pairs ({} train, {} test) to {}",
                data.manifest.num_pairs,
                data.manifest.num_train_pairs,
                data.manifest.num_test_pairs,
                out.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Train {
            data,
            out,
            model,
            precision,
            metrics,
            max_train_states,
            max_test_states,
            stop_below,
            quiet,
        } => {
            let cfg = model.resolve(&FosaeConfig::default())?;
            if model.print_config {
                println!("{}", serde_json::to_string_pretty(&cfg)?);
                return Ok(ExitCode::SUCCESS);
            }
            let opts = TrainOptions {
                max_train_states,
                max_test_states,
                checkpoint_dir: Some(out.clone()),
                stop_below_object_error: stop_below,
                verbose: !quiet,
            };
            let data = load_data(&data)?;
            with_precision!(precision, run_train(&cfg, &data, &opts, metrics.as_deref()))
        }
        Command::Grid {
            data,
            out,
            model,
            arities,
            max_units,
            max_predicates,
            threshold,
            min_search,
            precision,
            max_train_states,
            max_test_states,
        } => {
            let cfg = model.resolve(&FosaeConfig::default().with_epochs(50))?;
            if model.print_config {
                println!("{}", serde_json::to_string_pretty(&cfg)?);
                return Ok(ExitCode::SUCCESS);
            }
            let spec = GridSpec {
                arities,
                max_units,
                max_predicates,
                base: cfg,
                train: TrainOptions {
                    max_train_states,
                    max_test_states,
                    ..TrainOptions::default()
                },
                threshold,
                order: if min_search { GridOrder::MinimumSearch } else { GridOrder::Full },
            };
            let data = load_data(&data)?;
            with_precision!(precision, run_grid(&spec, &data, &out))
        }
        Command::Encode {
            checkpoint,
            data,
            out,
            split,
            precision,
        } => {
            let data = load_data(&data)?;
            let p = checkpoint_precision(&checkpoint, precision)?;
            let log = with_precision!(p, run_encode(&checkpoint, &data, split))?;
            let c = log.collisions;
            eprintln!(
                "{} distinct transitions from {} observations; {} distinct inputs -> {} codes, collision rate {:.4}",
                log.transitions.len(),
                log.total_observations(),
                c.distinct_inputs,
                c.distinct_codes,
                c.collision_rate()
            );
            write_out(Some(&out), &log.to_csv())?;
            Ok(ExitCode::SUCCESS)
        }
        Command::EmitPddl {
            log,
            init,
            goal,
            init_board,
            goal_board,
            checkpoint,
            out,
        } => {
            let text = fs::read_to_string(&log).with_context(|| format!("reading {}", log.display()))?;
            let log = TransitionLog::from_csv(&text)?;
            let encode_board = |b: &str| -> Result<PropositionalState> {
                let dir = checkpoint.as_deref().context("--checkpoint is required with boards")?;
                let p = checkpoint_precision(dir, None)?;
                with_precision!(p, encode_board_with(dir, b))
            };
            let pick = |bits: Option<String>, board: Option<String>, what: &str| -> Result<PropositionalState> {
                match (bits, board) {
                    (Some(b), _) => Ok(b.parse()?),
                    (None, Some(b)) => encode_board(&b),
                    (None, None) => bail!("give --{what} or --{what}-board"),
                }
            };
            let init = pick(init, init_board, "init")?;
            let goal = pick(goal, goal_board, "goal")?;
            let model = ama1::build_model(&log, &init, &goal)?;
            write_pddl(&out, &model)?;
            eprintln!(
                "wrote {} actions over {} propositions to {}",
                model.actions.len(),
                model.num_propositions,
                out.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Plan {
            domain,
            problem,
            budget_mb,
            out,
        } => {
            let task = parse_files(&domain, &problem)?;
            let opts = SearchOptions {
                memory_budget_bytes: budget_mb << 20,
                trace_expansions: false,
            };
            let outcome = planner::search(&task, &opts)?;
            let s = outcome.stats();
            eprintln!(
                "expanded {} generated {} stored {} in {:.4}s",
                s.expanded, s.generated, s.stored, s.seconds
            );
            match outcome {
                SearchOutcome::Solved { plan, .. } => {
                    write_out(out.as_deref(), &planner::format_plan(&task, &plan))?;
                    Ok(ExitCode::SUCCESS)
                }
                SearchOutcome::Unsolvable { .. } => {
                    eprintln!("unsolvable");
                    Ok(ExitCode::from(1))
                }
            }
        }
        Command::Solve {
            checkpoint,
            steps,
            count,
            seed,
            transitions,
            data,
            out,
            trace_dir,
            emit_only,
            budget_mb,
            precision,
        } => {
            let p = checkpoint_precision(&checkpoint, precision)?;
            let args = SolveArgs {
                checkpoint,
                opts: SolveOptions {
                    steps,
                    count,
                    seed,
                    memory_budget_bytes: budget_mb << 20,
                },
                transitions,
                data,
                out,
                trace_dir,
                emit_only,
            };
            with_precision!(p, run_solve(&args))
        }
        Command::Interpret {
            checkpoint,
            data,
            pred,
            all,
            max_k,
            out,
            precision,
        } => {
            let data = load_data(&data)?;
            let p = checkpoint_precision(&checkpoint, precision)?;
            let pred = if all { None } else { pred };
            with_precision!(p, run_interpret(&checkpoint, &data, pred, max_k, &out))
        }
        Command::Validate { domain, problem, plan } => {
            let task = parse_files(&domain, &problem)?;
            let text = fs::read_to_string(&plan).with_context(|| format!("reading {}", plan.display()))?;
            let plan = planner::parse_plan(&task, &text)?;
            match planner::validate_plan(&task, &plan.actions) {
                PlanValidation::Valid => {
                    println!("valid, cost {}", plan.cost());
                    Ok(ExitCode::SUCCESS)
                }
                PlanValidation::Inapplicable { step } => {
                    println!("invalid: step {step} ({}) is not applicable", task.actions[plan.actions[step]].name);
                    Ok(ExitCode::from(1))
                }
                PlanValidation::UnknownAction { step } => {
                    println!("invalid: step {step} names no action");
                    Ok(ExitCode::from(1))
                }
                PlanValidation::GoalNotReached => {
                    println!("invalid: the goal does not hold after the last step");
                    Ok(ExitCode::from(1))
                }
            }
        }
    }
}

fn parse_files(domain: &Path, problem: &Path) -> Result<planner::ParsedTask> {
    let d = fs::read_to_string(domain).with_context(|| format!("reading {}", domain.display()))?;
    let p = fs::read_to_string(problem).with_context(|| format!("reading {}", problem.display()))?;
    planner::parse_pddl(&d, &p).map_err(|e| match e {
        fosae::Error::Syntax { line, column, message } => anyhow::anyhow!(
            "{}/{}:{line}:{column}: {message}",
            domain.display(),
            problem.file_name().map(|f| f.to_string_lossy()).unwrap_or_default()
        ),
        other => other.into(),
    })
}

fn write_pddl(dir: &Path, model: &GroundedModel) -> Result<()> {
    let files = ama1::emit_pddl(model);
    fs::create_dir_all(dir)?;
    fs::write(dir.join("domain.pddl"), files.domain)?;
    fs::write(dir.join("problem.pddl"), files.problem)?;
    Ok(())
}

fn run_train<T: Scalar>(cfg: &FosaeConfig, data: &TransitionDataset, opts: &TrainOptions, metrics: Option<&Path>) -> Result<ExitCode> {
    let started = Instant::now();
    let outcome = match pipeline::train::<T>(cfg, data, opts) {
        Ok(o) => o,
        Err(TrainError::Diverged { epoch, last_good }) => {
            if let (Some(o), Some(path)) = (&last_good, metrics) {
                write_out(Some(path), &o.metrics_csv())?;
            }
            bail!("training diverged at epoch {epoch}; the last good checkpoint is kept");
        }
        Err(TrainError::Failed(e)) => return Err(e.into()),
    };
    if let Some(path) = metrics {
        write_out(Some(path), &outcome.metrics_csv())?;
    }
    let best = outcome.best();
    eprintln!(
        "best epoch {}: test mse {:.6}, per-object error {:.6} ({:.1}s)",
        best.epoch,
        best.test_mse,
        best.test_object_error,
        started.elapsed().as_secs_f64()
    );
    Ok(ExitCode::SUCCESS)
}

fn run_grid<T: Scalar>(spec: &GridSpec, data: &TransitionDataset, out: &Path) -> Result<ExitCode> {
    let rows = pipeline::eval_arity_grid::<T>(spec, data, |r| eprintln!("{}", r.csv_row()));
    write_out(Some(out), &pipeline::grid_csv(&rows))?;
    for &a in &spec.arities {
        match pipeline::min_propositions(&rows, a) {
            Some(n) => eprintln!("arity {a}: minimum propositions {n}"),
            None => eprintln!("arity {a}: threshold not reached"),
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn run_encode<T: Scalar>(checkpoint: &Path, data: &TransitionDataset, split: Split) -> Result<TransitionLog> {
    let model = load_model::<T>(checkpoint)?;
    let range = match split {
        Split::Train => data.train_pairs(),
        Split::Test => data.test_pairs(),
        Split::All => 0..data.manifest.num_pairs,
    };
    Ok(pipeline::encode_dataset(&model, data, range)?)
}

fn parse_board(text: &str) -> Result<PuzzleState> {
    let cells: Vec<u8> = text
        .chars()
        .filter(|c| c.is_ascii_digit())
        .map(|c| c as u8 - b'0')
        .collect();
    Ok(PuzzleState::from_cells(&cells)?)
}

fn encode_board_with<T: Scalar>(checkpoint: &Path, board: &str) -> Result<PropositionalState> {
    let model = load_model::<T>(checkpoint)?;
    Ok(model.encode(&parse_board(board)?.objects())?)
}

struct SolveArgs {
    checkpoint: PathBuf,
    opts: SolveOptions,
    transitions: Transitions,
    data: Option<PathBuf>,
    out: Option<PathBuf>,
    trace_dir: Option<PathBuf>,
    emit_only: Option<PathBuf>,
}

fn run_solve<T: Scalar>(args: &SolveArgs) -> Result<ExitCode> {
    let model = load_model::<T>(&args.checkpoint)?;
    let started = Instant::now();
    let space = solve::encode_space(&model)?;
    let c = space.collisions;
    eprintln!(
        "encoded {} states into {} codes (collision rate {:.5})",
        c.distinct_inputs,
        c.distinct_codes,
        c.collision_rate()
    );
    let observed = match (args.transitions, &args.data) {
        (Transitions::Full, _) => None,
        (_, Some(d)) => {
            let data = load_data(d)?;
            Some(pipeline::encode_dataset(&model, &data, 0..data.manifest.num_pairs)?)
        }
        (_, None) => bail!("--transitions observed/both needs --data"),
    };
    let grounded = match (args.transitions, &observed) {
        (Transitions::Observed, Some(log)) => {
            let zero = PropositionalState::zeros(log.num_propositions);
            ama1::build_model(log, &zero, &zero)?
        }
        _ => solve::build_space_model(&space, observed.as_ref())?,
    };
    eprintln!(
        "action model: {} actions over {} propositions ({:.1}s)",
        grounded.actions.len(),
        grounded.num_propositions,
        started.elapsed().as_secs_f64()
    );
    if let Some(dir) = &args.emit_only {
        // The domain is shared, so it is written once.
        fs::create_dir_all(dir)?;
        fs::write(dir.join("domain.pddl"), ama1::emit_pddl(&grounded).domain)?;
        for i in 0..args.opts.count {
            let (init, goal) = fosae::puzzle::make_instance(args.opts.steps, args.opts.seed.wrapping_add(i as u64));
            let (Some(ci), Some(cg)) = (space.code_of(&init), space.code_of(&goal)) else {
                bail!("instance outside the encoded space");
            };
            let m = GroundedModel {
                num_propositions: grounded.num_propositions,
                actions: Vec::new(),
                init: ci.clone(),
                goal: cg.clone(),
            };
            fs::write(dir.join(format!("problem-{i:03}.pddl")), ama1::emit_pddl(&m).problem)?;
        }
        eprintln!("wrote domain.pddl and {} problems to {}", args.opts.count, dir.display());
        return Ok(ExitCode::SUCCESS);
    }
    let mut task = grounded.to_task()?;
    drop(grounded);
    let results = solve::solve_instances(&model, &space, &mut task, &args.opts)?;
    write_out(args.out.as_deref(), &solve::results_csv(&results))?;
    if let Some(dir) = &args.trace_dir {
        fs::create_dir_all(dir)?;
        for r in &results {
            fs::write(dir.join(format!("instance-{:03}.tsv", r.instance)), solve::render_trace(r))?;
        }
    }
    let s = solve::summarize(&results);
    eprintln!(
        "solved {}/{}; mean cost {:.2}; mean search time {:.4}s; total {:.1}s",
        s.solved,
        s.count,
        s.mean_cost,
        s.mean_seconds,
        started.elapsed().as_secs_f64()
    );
    Ok(if s.solved == s.count { ExitCode::SUCCESS } else { ExitCode::from(3) })
}

fn run_interpret<T: Scalar>(checkpoint: &Path, data: &TransitionDataset, pred: Option<usize>, max_k: usize, out: &Path) -> Result<ExitCode> {
    let model = load_model::<T>(checkpoint)?;
    let observations = data.distinct_states(0..data.manifest.num_pairs);
    let examples = match pred {
        Some(p) => vec![interpret::collect_examples(&model, &observations, p, max_k)?],
        None => interpret::collect_all(&model, &observations, max_k)?,
    };
    let c = interpret::check_consistency(&model, &observations, &examples)?;
    write_out(Some(out), &interpret::render_report(&examples))?;
    eprintln!(
        "{} predicates, {} examples, re-evaluation consistency {}/{}",
        examples.len(),
        c.checked,
        c.consistent,
        c.checked
    );
    if c.consistent != c.checked {
        bail!("recorded truth values disagree with re-evaluation");
    }
    Ok(ExitCode::SUCCESS)
}
