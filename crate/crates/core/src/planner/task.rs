use std::collections::HashMap;

use crate::error::{Error, Result};

use super::BitsetState;

/// A grounded STRIPS action as bit masks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskAction {
    pub name: String,
    pub pos_pre: BitsetState,
    pub neg_pre: BitsetState,
    pub add: BitsetState,
    pub del: BitsetState,
}

impl TaskAction {
    pub fn is_applicable(&self, state: &BitsetState) -> bool {
        self.pos_pre.is_subset_of(state) && self.neg_pre.is_disjoint(state)
    }

    pub fn apply(&self, state: &BitsetState) -> BitsetState {
        state.apply(&self.add, &self.del)
    }

    /// Whether the precondition mentions every proposition.
    pub fn has_full_precondition(&self) -> bool {
        self.pos_pre.count_ones() + self.neg_pre.count_ones() == self.pos_pre.len()
    }
}

/// A propositional planning task.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedTask {
    pub domain_name: String,
    pub problem_name: String,
    pub propositions: Vec<String>,
    pub actions: Vec<TaskAction>,
    pub init: BitsetState,
    pub goal_pos: BitsetState,
    pub goal_neg: BitsetState,
    index: HashMap<String, usize>,
}

impl ParsedTask {
    /// Builds and validates a task.
    pub fn new(
        domain_name: &str,
        problem_name: &str,
        propositions: Vec<String>,
        actions: Vec<TaskAction>,
        init: BitsetState,
        goal_pos: BitsetState,
        goal_neg: BitsetState,
    ) -> Result<Self> {
        let mut index = HashMap::with_capacity(propositions.len());
        for (i, p) in propositions.iter().enumerate() {
            if index.insert(p.clone(), i).is_some() {
                return Err(Error::Validation(format!("duplicate proposition `{p}`")));
            }
        }
        let task = ParsedTask {
            domain_name: domain_name.into(),
            problem_name: problem_name.into(),
            propositions,
            actions,
            init,
            goal_pos,
            goal_neg,
            index,
        };
        task.validate()?;
        Ok(task)
    }

    fn validate(&self) -> Result<()> {
        let n = self.propositions.len();
        let widths_ok = |sets: &[&BitsetState]| sets.iter().all(|s| s.len() == n);
        if !widths_ok(&[&self.init, &self.goal_pos, &self.goal_neg]) {
            return Err(Error::Validation("init/goal width differs from the proposition count".into()));
        }
        if !self.goal_pos.is_disjoint(&self.goal_neg) {
            return Err(Error::Validation("goal requires a proposition both true and false".into()));
        }
        let mut names = std::collections::HashSet::new();
        for a in &self.actions {
            if !names.insert(a.name.as_str()) {
                return Err(Error::Validation(format!("duplicate action `{}`", a.name)));
            }
            if !widths_ok(&[&a.pos_pre, &a.neg_pre, &a.add, &a.del]) {
                return Err(Error::Validation(format!("action `{}` has masks of the wrong width", a.name)));
            }
            if !a.pos_pre.is_disjoint(&a.neg_pre) {
                return Err(Error::Validation(format!("action `{}` has a contradictory precondition", a.name)));
            }
            if !a.add.is_disjoint(&a.del) {
                return Err(Error::Validation(format!("action `{}` has a contradictory effect", a.name)));
            }
        }
        Ok(())
    }

    pub fn num_propositions(&self) -> usize {
        self.propositions.len()
    }

    pub fn proposition(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn action_index(&self, name: &str) -> Option<usize> {
        self.actions.iter().position(|a| a.name == name)
    }

    pub fn is_goal(&self, state: &BitsetState) -> bool {
        self.goal_pos.is_subset_of(state) && self.goal_neg.is_disjoint(state)
    }
}

/// Actions applicable in `state`, by linear scan, in index order.
pub fn applicable(task: &ParsedTask, state: &BitsetState) -> Vec<usize> {
    task.actions
        .iter()
        .enumerate()
        .filter(|(_, a)| a.is_applicable(state))
        .map(|(i, _)| i)
        .collect()
}

/// Successor generation that looks up full-precondition actions by state
/// and scans only the remaining actions.
#[derive(Debug)]
pub struct SuccessorIndex<'a> {
    task: &'a ParsedTask,
    by_precondition: HashMap<&'a BitsetState, Vec<usize>>,
    partial: Vec<usize>,
}

impl<'a> SuccessorIndex<'a> {
    pub fn new(task: &'a ParsedTask) -> Self {
        let mut by_precondition: HashMap<&BitsetState, Vec<usize>> = HashMap::new();
        let mut partial = Vec::new();
        for (i, a) in task.actions.iter().enumerate() {
            if a.has_full_precondition() {
                by_precondition.entry(&a.pos_pre).or_default().push(i);
            } else {
                partial.push(i);
            }
        }
        SuccessorIndex {
            task,
            by_precondition,
            partial,
        }
    }

    pub fn task(&self) -> &'a ParsedTask {
        self.task
    }

    /// Same result as [`applicable`].
    pub fn applicable(&self, state: &BitsetState, out: &mut Vec<usize>) {
        out.clear();
        if let Some(full) = self.by_precondition.get(state) {
            out.extend_from_slice(full);
        }
        let before = out.len();
        out.extend(
            self.partial
                .iter()
                .copied()
                .filter(|&i| self.task.actions[i].is_applicable(state)),
        );
        if before > 0 && out.len() > before {
            out.sort_unstable();
        }
    }
}
