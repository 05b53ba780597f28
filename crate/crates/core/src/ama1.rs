//! Oracular action model acquisition: one grounded STRIPS action per
//! distinct observed transition, with the whole pre-state as precondition
//! and the whole successor state as effect.

use std::collections::HashSet;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::fosae::PropositionalState;
use crate::pipeline::TransitionLog;
use crate::planner::{BitsetState, ParsedTask, TaskAction};

pub const DOMAIN_NAME: &str = "fosae";
pub const PROBLEM_NAME: &str = "fosae-problem";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundedAction {
    pub name: String,
    /// Required value of every proposition.
    pub precondition: PropositionalState,
    /// Value of every proposition afterwards.
    pub effect: PropositionalState,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundedModel {
    pub num_propositions: usize,
    pub actions: Vec<GroundedAction>,
    pub init: PropositionalState,
    /// Full assignment: distinct states may share all positive literals.
    pub goal: PropositionalState,
}

pub fn proposition_name(i: usize) -> String {
    format!("b{i}")
}

pub fn action_name(k: usize) -> String {
    format!("a{k}")
}

/// One action per distinct `(s, t)` pair with `s ≠ t`, named in first-seen
/// order.
pub fn build_model(log: &TransitionLog, init: &PropositionalState, goal: &PropositionalState) -> Result<GroundedModel> {
    build_from_pairs(
        log.num_propositions,
        log.transitions.iter().map(|t| (&t.pre, &t.suc)),
        init,
        goal,
    )
}

pub fn build_from_pairs<'a>(
    num_propositions: usize,
    pairs: impl IntoIterator<Item = (&'a PropositionalState, &'a PropositionalState)>,
    init: &PropositionalState,
    goal: &PropositionalState,
) -> Result<GroundedModel> {
    for (what, s) in [("init", init), ("goal", goal)] {
        if s.len() != num_propositions {
            return Err(Error::Validation(format!(
                "{what} has {} propositions, the model {num_propositions}",
                s.len()
            )));
        }
    }
    let mut seen = HashSet::new();
    let mut actions = Vec::new();
    for (pre, suc) in pairs {
        if pre.len() != num_propositions || suc.len() != num_propositions {
            return Err(Error::Validation(format!(
                "transition of width {}/{} in a {num_propositions}-proposition model",
                pre.len(),
                suc.len()
            )));
        }
        if pre == suc || !seen.insert((pre, suc)) {
            continue;
        }
        actions.push(GroundedAction {
            name: action_name(actions.len()),
            precondition: pre.clone(),
            effect: suc.clone(),
        });
    }
    Ok(GroundedModel {
        num_propositions,
        actions,
        init: init.clone(),
        goal: goal.clone(),
    })
}

impl GroundedModel {
    pub fn validate(&self) -> Result<()> {
        let n = self.num_propositions;
        if self.init.len() != n || self.goal.len() != n {
            return Err(Error::Validation("init/goal width differs from the proposition count".into()));
        }
        let mut names = HashSet::new();
        for a in &self.actions {
            if a.precondition.len() != n || a.effect.len() != n {
                return Err(Error::Validation(format!("action `{}` has the wrong width", a.name)));
            }
            if !names.insert(a.name.as_str()) {
                return Err(Error::Validation(format!("duplicate action `{}`", a.name)));
            }
        }
        Ok(())
    }

    /// The planning task this model denotes; equal to parsing the emitted
    /// PDDL.
    pub fn to_task(&self) -> Result<ParsedTask> {
        self.validate()?;
        let n = self.num_propositions;
        let actions = self
            .actions
            .iter()
            .map(|a| {
                let pre = BitsetState::from(&a.precondition);
                let eff = BitsetState::from(&a.effect);
                TaskAction {
                    name: a.name.clone(),
                    neg_pre: BitsetState::from_indices(n, (0..n).filter(|&i| !pre.get(i))),
                    add: BitsetState::from_indices(n, (0..n).filter(|&i| eff.get(i))),
                    del: BitsetState::from_indices(n, (0..n).filter(|&i| !eff.get(i))),
                    pos_pre: pre,
                }
            })
            .collect();
        let goal = BitsetState::from(&self.goal);
        ParsedTask::new(
            DOMAIN_NAME,
            PROBLEM_NAME,
            (0..n).map(proposition_name).collect(),
            actions,
            BitsetState::from(&self.init),
            BitsetState::from_indices(n, (0..n).filter(|&i| goal.get(i))),
            BitsetState::from_indices(n, (0..n).filter(|&i| !goal.get(i))),
        )
    }

    /// Recovers a model from a parsed task. Every precondition, effect and
    /// the goal must assign all propositions, named `b0, b1, ...` in order.
    pub fn from_task(task: &ParsedTask) -> Result<Self> {
        let n = task.num_propositions();
        if let Some((i, p)) = task.propositions.iter().enumerate().find(|(i, p)| **p != proposition_name(*i)) {
            return Err(Error::Validation(format!("proposition {i} is `{p}`, expected `{}`", proposition_name(i))));
        }
        let full = |pos: &BitsetState, neg: &BitsetState, what: &str| -> Result<PropositionalState> {
            if pos.count_ones() + neg.count_ones() != n || !pos.is_disjoint(neg) {
                return Err(Error::Validation(format!("{what} does not assign every proposition")));
            }
            Ok(pos.to_state())
        };
        let actions = task
            .actions
            .iter()
            .map(|a| {
                Ok(GroundedAction {
                    name: a.name.clone(),
                    precondition: full(&a.pos_pre, &a.neg_pre, &format!("precondition of `{}`", a.name))?,
                    effect: full(&a.add, &a.del, &format!("effect of `{}`", a.name))?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(GroundedModel {
            num_propositions: n,
            actions,
            init: task.init.to_state(),
            goal: full(&task.goal_pos, &task.goal_neg, "goal")?,
        })
    }
}

/// Domain and problem text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PddlFiles {
    pub domain: String,
    pub problem: String,
}

fn write_assignment(out: &mut String, state: &PropositionalState, indent: &str) {
    for (i, &b) in state.bits().iter().enumerate() {
        if b {
            let _ = writeln!(out, "{indent}({})", proposition_name(i));
        } else {
            let _ = writeln!(out, "{indent}(not ({}))", proposition_name(i));
        }
    }
}

/// Serializes the model; equal models give identical bytes.
pub fn emit_pddl(model: &GroundedModel) -> PddlFiles {
    let mut d = String::new();
    let _ = writeln!(
        d,
        "; {} propositions, {} actions",
        model.num_propositions,
        model.actions.len()
    );
    let _ = writeln!(d, "(define (domain {DOMAIN_NAME})");
    d.push_str("  (:requirements :strips :negative-preconditions)\n");
    d.push_str("  (:predicates\n");
    for i in 0..model.num_propositions {
        let _ = writeln!(d, "    ({})", proposition_name(i));
    }
    d.push_str("  )\n");
    for a in &model.actions {
        let _ = writeln!(d, "  (:action {}", a.name);
        d.push_str("    :parameters ()\n    :precondition (and\n");
        write_assignment(&mut d, &a.precondition, "      ");
        d.push_str("    )\n    :effect (and\n");
        write_assignment(&mut d, &a.effect, "      ");
        d.push_str("    )\n  )\n");
    }
    d.push_str(")\n");

    let mut p = String::new();
    let _ = writeln!(p, "(define (problem {PROBLEM_NAME})");
    let _ = writeln!(p, "  (:domain {DOMAIN_NAME})");
    p.push_str("  (:init\n");
    for i in model.init.true_indices() {
        let _ = writeln!(p, "    ({})", proposition_name(i));
    }
    p.push_str("  )\n  (:goal (and\n");
    write_assignment(&mut p, &model.goal, "    ");
    p.push_str("  ))\n)\n");
    PddlFiles { domain: d, problem: p }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::{parse_pddl, search, SearchOptions};

    fn st(s: &str) -> PropositionalState {
        s.parse().unwrap()
    }

    fn log(pairs: &[(&str, &str)]) -> TransitionLog {
        TransitionLog::from_pairs(pairs[0].0.len(), pairs.iter().map(|(a, b)| (st(a), st(b)))).unwrap()
    }

    #[test]
    fn single_pair_gives_one_action() {
        let m = build_model(&log(&[("01", "10")]), &st("01"), &st("10")).unwrap();
        assert_eq!(m.actions.len(), 1);
        let task = m.to_task().unwrap();
        assert_eq!(task.actions[0].apply(&BitsetState::from(&st("01"))), BitsetState::from(&st("10")));
    }

    #[test]
    fn duplicates_and_self_loops_collapse() {
        let pairs = [(st("01"), st("10")), (st("01"), st("10")), (st("11"), st("11"))];
        let m = build_from_pairs(2, pairs.iter().map(|(a, b)| (a, b)), &st("01"), &st("10")).unwrap();
        assert_eq!(m.actions.len(), 1);
    }

    #[test]
    fn length_mismatches_are_rejected() {
        let l = log(&[("01", "10")]);
        assert!(matches!(build_model(&l, &st("0"), &st("10")), Err(Error::Validation(_))));
        assert!(matches!(build_model(&l, &st("01"), &st("101")), Err(Error::Validation(_))));
    }

    #[test]
    fn toy_log_plan_has_length_two() {
        let m = build_model(&log(&[("000", "001"), ("001", "011")]), &st("000"), &st("011")).unwrap();
        let files = emit_pddl(&m);
        let task = parse_pddl(&files.domain, &files.problem).unwrap();
        let plan = search(&task, &SearchOptions::default()).unwrap().plan().cloned().unwrap();
        let names: Vec<&str> = plan.actions.iter().map(|&a| task.actions[a].name.as_str()).collect();
        assert_eq!(names, ["a0", "a1"]);
    }

    #[test]
    fn emitted_text_parses_back_to_the_model() {
        let m = build_model(&log(&[("0101", "0110"), ("0110", "1110")]), &st("0101"), &st("1110")).unwrap();
        let files = emit_pddl(&m);
        assert_eq!(emit_pddl(&m), files);
        let task = parse_pddl(&files.domain, &files.problem).unwrap();
        assert_eq!(GroundedModel::from_task(&task).unwrap(), m);
        assert_eq!(task, m.to_task().unwrap());
    }

    #[test]
    fn header_counts_propositions() {
        let zero = PropositionalState::zeros(54);
        let mut one = zero.clone();
        one.set(3, true);
        let m = build_from_pairs(54, [(&zero, &one)], &zero, &one).unwrap();
        let d = emit_pddl(&m).domain;
        assert!(d.starts_with("; 54 propositions, 1 actions\n"));
        assert_eq!(parse_pddl(&d, &emit_pddl(&m).problem).unwrap().num_propositions(), 54);
    }

    #[test]
    fn partial_assignments_do_not_convert() {
        let d = "(define (domain fosae) (:predicates (b0) (b1)) (:action a0 :precondition (b0) :effect (and (b1) (not (b0)))))";
        let p = "(define (problem x) (:domain fosae) (:init (b0)) (:goal (and (b1) (not (b0)))))";
        let task = parse_pddl(d, p).unwrap();
        assert!(GroundedModel::from_task(&task).is_err());
    }
}
