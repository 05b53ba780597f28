//! End-to-end 8-puzzle planning through a learned representation.
//!
//! Every reachable puzzle state is encoded, every legal move becomes an
//! encoded transition, and the resulting action model is searched for each
//! instance. Plans are checked twice: symbolically against the action model,
//! and by decoding each intermediate state back into a puzzle and checking
//! that consecutive boards differ by one legal move.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::time::Instant;

use crate::ama1::{self, GroundedModel};
use crate::error::{Error, Result};
use crate::fosae::{FosaeModel, PropositionalState};
use crate::pipeline::{CollisionStats, TransitionLog};
use crate::planner::{search, validate_plan, BitsetState, ParsedTask, PlanValidation, SearchOptions, SearchOutcome};
use crate::puzzle::{self, PuzzleState};
use crate::scalar::Scalar;

/// Observations per encoding batch.
const CHUNK: usize = 1000;

/// The encoded 8-puzzle state space.
#[derive(Debug, Clone)]
pub struct EncodedSpace {
    pub states: Vec<PuzzleState>,
    pub codes: Vec<PropositionalState>,
    pub collisions: CollisionStats,
    index: HashMap<PuzzleState, usize>,
}

impl EncodedSpace {
    pub fn code_of(&self, s: &PuzzleState) -> Option<&PropositionalState> {
        self.index.get(s).map(|&i| &self.codes[i])
    }

    /// One encoded transition per legal move, in enumeration order.
    pub fn transition_log(&self) -> Result<TransitionLog> {
        let width = self.codes.first().map_or(0, PropositionalState::len);
        let mut log = TransitionLog::from_pairs(
            width,
            self.states.iter().enumerate().flat_map(|(i, s)| {
                s.successors()
                    .into_iter()
                    .map(move |t| (self.codes[i].clone(), self.codes[self.index[&t]].clone()))
            }),
        )?;
        log.collisions = self.collisions;
        Ok(log)
    }
}

/// Encodes all reachable states.
pub fn encode_space<T: Scalar>(model: &FosaeModel<T>) -> Result<EncodedSpace> {
    let cfg = model.config();
    if cfg.num_objects != puzzle::CELLS || cfg.num_features != puzzle::FEATURES {
        return Err(Error::Validation(format!(
            "an 8-puzzle model needs {}×{} objects, got {}×{}",
            puzzle::CELLS,
            puzzle::FEATURES,
            cfg.num_objects,
            cfg.num_features
        )));
    }
    let states: Vec<PuzzleState> = puzzle::enumerate_reachable().into_iter().map(|(s, _)| s).collect();
    let mut codes = Vec::with_capacity(states.len());
    for chunk in states.chunks(CHUNK) {
        let x = puzzle::batch_objects::<T>(chunk);
        codes.extend(model.encode_batch(&x)?.into_iter().map(|(s, _)| s));
    }
    let collisions = CollisionStats::from_codes(states.iter().copied().zip(codes.iter().cloned()));
    let index = states.iter().enumerate().map(|(i, s)| (*s, i)).collect();
    Ok(EncodedSpace {
        states,
        codes,
        collisions,
        index,
    })
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub steps: usize,
    pub count: usize,
    /// Instance `i` uses seed `seed + i`.
    pub seed: u64,
    pub memory_budget_bytes: u64,
}

/// Outcome of one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceResult {
    pub instance: usize,
    pub init: PuzzleState,
    pub goal: PuzzleState,
    /// Solved with a plan that passes both validations.
    pub solved: bool,
    pub cost: Option<usize>,
    pub expansions: u64,
    pub generated: u64,
    pub seconds: f64,
    /// `ok`, `unsolvable`, `representation failure`, `invalid plan`,
    /// `invalid decoded plan` or `error: ...`.
    pub status: String,
    /// Decoded boards along the plan, init first.
    pub decoded: Vec<PuzzleState>,
}

impl InstanceResult {
    pub const CSV_HEADER: &'static str = "instance,solved,cost,expansions,generated,seconds,init,goal,status";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{:.6},{},{},{}",
            self.instance,
            self.solved,
            self.cost.map_or(String::new(), |c| c.to_string()),
            self.expansions,
            self.generated,
            self.seconds,
            self.init,
            self.goal,
            self.status.replace(',', ";")
        )
    }
}

pub fn results_csv(results: &[InstanceResult]) -> String {
    let mut out = String::from(InstanceResult::CSV_HEADER);
    out.push('\n');
    for r in results {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

/// Aggregates over a set of results.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveSummary {
    pub count: usize,
    pub solved: usize,
    pub mean_cost: f64,
    pub mean_seconds: f64,
}

pub fn summarize(results: &[InstanceResult]) -> SolveSummary {
    let solved: Vec<&InstanceResult> = results.iter().filter(|r| r.solved).collect();
    let mean = |xs: &mut dyn Iterator<Item = f64>, n: usize| if n == 0 { f64::NAN } else { xs.sum::<f64>() / n as f64 };
    SolveSummary {
        count: results.len(),
        solved: solved.len(),
        mean_cost: mean(&mut solved.iter().map(|r| r.cost.unwrap_or(0) as f64), solved.len()),
        mean_seconds: mean(&mut solved.iter().map(|r| r.seconds), solved.len()),
    }
}

/// Builds the grounded model over the whole encoded state space, plus any
/// extra observed transitions, with placeholder init and goal.
pub fn build_space_model(space: &EncodedSpace, extra: Option<&TransitionLog>) -> Result<GroundedModel> {
    let log = space.transition_log()?;
    let width = log.num_propositions;
    if let Some(e) = extra {
        if e.num_propositions != width {
            return Err(Error::dim("extra transitions", &[e.num_propositions], &[width]));
        }
    }
    let zero = PropositionalState::zeros(width);
    let pairs = log
        .transitions
        .iter()
        .chain(extra.into_iter().flat_map(|e| &e.transitions))
        .map(|t| (&t.pre, &t.suc));
    ama1::build_from_pairs(width, pairs, &zero, &zero)
}

/// Sets init and goal (as a full assignment) on a task.
pub fn set_problem(task: &mut ParsedTask, init: &PropositionalState, goal: &PropositionalState) {
    let n = goal.len();
    task.init = BitsetState::from(init);
    task.goal_pos = BitsetState::from(goal);
    task.goal_neg = BitsetState::from_indices(n, (0..n).filter(|&i| !goal.get(i)));
}

/// Decodes the states along `plan` and checks they form a legal move
/// sequence from `init` to `goal`. Returns the decoded boards.
pub fn decode_plan<T: Scalar>(
    model: &FosaeModel<T>,
    task: &ParsedTask,
    plan: &[usize],
    init: &PuzzleState,
    goal: &PuzzleState,
) -> Result<(Vec<PuzzleState>, bool)> {
    let mut state = task.init.clone();
    let mut codes = vec![state.to_state()];
    for &a in plan {
        state = task.actions[a].apply(&state);
        codes.push(state.to_state());
    }
    let recon = model.decode_states(&codes)?;
    let block = puzzle::CELLS * puzzle::FEATURES;
    let mut boards = Vec::with_capacity(codes.len());
    for i in 0..codes.len() {
        let x = crate::nn::Tensor::new(
            vec![puzzle::CELLS, puzzle::FEATURES],
            recon.data()[i * block..(i + 1) * block].to_vec(),
        )?;
        match PuzzleState::from_objects(&x) {
            Ok(b) => boards.push(b),
            Err(_) => return Ok((boards, false)),
        }
    }
    let legal = boards.first() == Some(init)
        && boards.last() == Some(goal)
        && boards.windows(2).all(|w| w[0].is_successor(&w[1]));
    Ok((boards, legal))
}

/// Runs every instance against `task`, whose init and goal are overwritten.
pub fn solve_instances<T: Scalar>(
    model: &FosaeModel<T>,
    space: &EncodedSpace,
    task: &mut ParsedTask,
    opts: &SolveOptions,
) -> Result<Vec<InstanceResult>> {
    let search_opts = SearchOptions {
        memory_budget_bytes: opts.memory_budget_bytes,
        trace_expansions: false,
    };
    let mut results = Vec::with_capacity(opts.count);
    for i in 0..opts.count {
        let (init, goal) = puzzle::make_instance(opts.steps, opts.seed.wrapping_add(i as u64));
        let mut r = InstanceResult {
            instance: i,
            init,
            goal,
            solved: false,
            cost: None,
            expansions: 0,
            generated: 0,
            seconds: 0.0,
            status: String::new(),
            decoded: Vec::new(),
        };
        let (ci, cg) = match (space.code_of(&init), space.code_of(&goal)) {
            (Some(a), Some(b)) => (a.clone(), b.clone()),
            _ => return Err(Error::Validation("instance state outside the encoded space".into())),
        };
        if ci == cg && init != goal {
            r.status = "representation failure".into();
            results.push(r);
            continue;
        }
        set_problem(task, &ci, &cg);
        let started = Instant::now();
        match search(task, &search_opts) {
            Ok(SearchOutcome::Solved { plan, stats }) => {
                r.seconds = started.elapsed().as_secs_f64();
                r.expansions = stats.expanded;
                r.generated = stats.generated;
                r.cost = Some(plan.cost());
                if validate_plan(task, &plan.actions) != PlanValidation::Valid {
                    r.status = "invalid plan".into();
                } else {
                    let (boards, legal) = decode_plan(model, task, &plan.actions, &init, &goal)?;
                    r.decoded = boards;
                    r.solved = legal;
                    r.status = if legal { "ok" } else { "invalid decoded plan" }.into();
                }
            }
            Ok(SearchOutcome::Unsolvable { stats }) => {
                r.seconds = started.elapsed().as_secs_f64();
                r.expansions = stats.expanded;
                r.generated = stats.generated;
                r.status = "unsolvable".into();
            }
            Err(e) => {
                r.seconds = started.elapsed().as_secs_f64();
                r.status = format!("error: {e}");
            }
        }
        results.push(r);
    }
    Ok(results)
}

/// Attribute table of the decoded boards: one line per step.
pub fn render_trace(r: &InstanceResult) -> String {
    let mut out = String::new();
    for (step, b) in r.decoded.iter().enumerate() {
        let attrs: Vec<String> = (0..puzzle::CELLS)
            .map(|tile| {
                let c = b.position(tile);
                format!("({},{},{})", tile, c % puzzle::SIDE, c / puzzle::SIDE)
            })
            .collect();
        let _ = writeln!(out, "{}\t{}\t{}", step, b, attrs.join(" "));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_steps_gives_empty_plans() {
        // An untrained model still encodes; the goal equals the init state.
        let model = FosaeModel::<f32>::new(crate::FosaeConfig {
            attention_hidden: 8,
            pn_hidden: 4,
            decoder_hidden: 8,
            ..Default::default()
        })
        .unwrap();
        let (init, goal) = puzzle::make_instance(0, 1);
        assert_eq!(init, goal);
        let code = model.encode(&init.objects()).unwrap();
        let mut task = ama1::build_from_pairs(code.len(), [], &code, &code).unwrap().to_task().unwrap();
        set_problem(&mut task, &code, &code);
        let plan = search(&task, &SearchOptions::default()).unwrap();
        assert_eq!(plan.plan().unwrap().cost(), 0);
    }

    #[test]
    fn csv_and_summary() {
        let mk = |i, solved, cost: Option<usize>| InstanceResult {
            instance: i,
            init: PuzzleState::solved(),
            goal: PuzzleState::solved(),
            solved,
            cost,
            expansions: 3,
            generated: 5,
            seconds: 0.5,
            status: if solved { "ok".into() } else { "unsolvable".into() },
            decoded: vec![],
        };
        let rs = [mk(0, true, Some(4)), mk(1, true, Some(6)), mk(2, false, None)];
        let s = summarize(&rs);
        assert_eq!((s.count, s.solved), (3, 2));
        assert_eq!(s.mean_cost, 5.0);
        let csv = results_csv(&rs);
        assert_eq!(csv.lines().nth(3).unwrap(), "2,false,,3,5,0.500000,012/345/678,012/345/678,unsolvable");
    }
}
