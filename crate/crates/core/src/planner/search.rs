use std::collections::hash_map::Entry;
use std::collections::{HashMap, VecDeque};
use std::time::Instant;

use crate::error::{Error, Result};

use super::{BitsetState, ParsedTask, SuccessorIndex};

pub const DEFAULT_MEMORY_BUDGET: u64 = 4 << 30;

/// Per-state bookkeeping besides the state itself: the hash-map slot, the
/// parent record and the queue entry.
const NODE_OVERHEAD: u64 = 48;

#[derive(Debug, Clone)]
pub struct SearchOptions {
    pub memory_budget_bytes: u64,
    /// Record the id of every expanded state, in expansion order.
    pub trace_expansions: bool,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            memory_budget_bytes: DEFAULT_MEMORY_BUDGET,
            trace_expansions: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SearchStats {
    pub expanded: u64,
    pub generated: u64,
    /// Distinct states stored.
    pub stored: u64,
    pub estimated_bytes: u64,
    pub seconds: f64,
    /// Expanded state ids when tracing is on.
    pub expansion_trace: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Plan {
    pub actions: Vec<usize>,
}

impl Plan {
    pub fn cost(&self) -> usize {
        self.actions.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SearchOutcome {
    Solved { plan: Plan, stats: SearchStats },
    Unsolvable { stats: SearchStats },
}

impl SearchOutcome {
    pub fn stats(&self) -> &SearchStats {
        match self {
            SearchOutcome::Solved { stats, .. } | SearchOutcome::Unsolvable { stats } => stats,
        }
    }

    pub fn plan(&self) -> Option<&Plan> {
        match self {
            SearchOutcome::Solved { plan, .. } => Some(plan),
            SearchOutcome::Unsolvable { .. } => None,
        }
    }
}

/// Breadth-first search with unit action costs, which is uniform-cost
/// search without a heuristic. Successors are generated in action index
/// order, so plans are reproducible.
pub fn search(task: &ParsedTask, opts: &SearchOptions) -> Result<SearchOutcome> {
    let started = Instant::now();
    let index = SuccessorIndex::new(task);
    let mut stats = SearchStats::default();
    let node_bytes = task.init.footprint() as u64 * 2 + NODE_OVERHEAD;

    let mut states: Vec<BitsetState> = vec![task.init.clone()];
    let mut ids: HashMap<BitsetState, u32> = HashMap::from([(task.init.clone(), 0)]);
    // (parent id, action) for every state but the root.
    let mut parents: Vec<(u32, u32)> = vec![(u32::MAX, u32::MAX)];
    let mut queue = VecDeque::from([0u32]);
    stats.stored = 1;
    stats.estimated_bytes = node_bytes;

    let finish = |mut stats: SearchStats, goal: Option<u32>, parents: &[(u32, u32)]| {
        stats.seconds = started.elapsed().as_secs_f64();
        match goal {
            None => SearchOutcome::Unsolvable { stats },
            Some(mut id) => {
                let mut actions = Vec::new();
                while id != 0 {
                    let (p, a) = parents[id as usize];
                    actions.push(a as usize);
                    id = p;
                }
                actions.reverse();
                SearchOutcome::Solved {
                    plan: Plan { actions },
                    stats,
                }
            }
        }
    };

    if task.is_goal(&task.init) {
        return Ok(finish(stats, Some(0), &parents));
    }
    let mut successors = Vec::new();
    while let Some(id) = queue.pop_front() {
        stats.expanded += 1;
        if opts.trace_expansions {
            stats.expansion_trace.push(id);
        }
        let state = states[id as usize].clone();
        index.applicable(&state, &mut successors);
        for &a in &successors {
            stats.generated += 1;
            let next = task.actions[a].apply(&state);
            let Entry::Vacant(slot) = ids.entry(next) else {
                continue;
            };
            if stats.estimated_bytes + node_bytes > opts.memory_budget_bytes {
                stats.seconds = started.elapsed().as_secs_f64();
                return Err(Error::Resource(format!(
                    "search memory budget of {} bytes exhausted after {} expansions, {} generated, {} states stored, {:.3}s",
                    opts.memory_budget_bytes, stats.expanded, stats.generated, stats.stored, stats.seconds
                )));
            }
            let next_id = u32::try_from(states.len())
                .map_err(|_| Error::Resource("more than 2^32 search states".into()))?;
            let is_goal = task.is_goal(slot.key());
            states.push(slot.key().clone());
            slot.insert(next_id);
            parents.push((id, a as u32));
            stats.stored += 1;
            stats.estimated_bytes += node_bytes;
            if is_goal {
                return Ok(finish(stats, Some(next_id), &parents));
            }
            queue.push_back(next_id);
        }
    }
    Ok(finish(stats, None, &parents))
}

/// Result of simulating a plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlanValidation {
    Valid,
    /// The action at this step does not exist.
    UnknownAction { step: usize },
    /// The action at this step is not applicable.
    Inapplicable { step: usize },
    /// Every step applies but the final state misses the goal.
    GoalNotReached,
}

pub fn validate_plan(task: &ParsedTask, plan: &[usize]) -> PlanValidation {
    let mut state = task.init.clone();
    for (step, &a) in plan.iter().enumerate() {
        let Some(action) = task.actions.get(a) else {
            return PlanValidation::UnknownAction { step };
        };
        if !action.is_applicable(&state) {
            return PlanValidation::Inapplicable { step };
        }
        state = action.apply(&state);
    }
    if task.is_goal(&state) {
        PlanValidation::Valid
    } else {
        PlanValidation::GoalNotReached
    }
}

/// Plan file text: one action name per line and a `; cost = K` trailer.
pub fn format_plan(task: &ParsedTask, plan: &Plan) -> String {
    let mut out = String::new();
    for &a in &plan.actions {
        out.push_str(&task.actions[a].name);
        out.push('\n');
    }
    out.push_str(&format!("; cost = {}\n", plan.cost()));
    out
}

/// Reads a plan file; names may be bare or parenthesized.
pub fn parse_plan(task: &ParsedTask, text: &str) -> Result<Plan> {
    let mut actions = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split(';').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let name = line.trim_start_matches('(').trim_end_matches(')').trim().to_ascii_lowercase();
        let a = task.action_index(&name).ok_or_else(|| Error::Syntax {
            line: n + 1,
            column: 1,
            message: format!("unknown action `{name}`"),
        })?;
        actions.push(a);
    }
    Ok(Plan { actions })
}
