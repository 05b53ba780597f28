//! PDDL-subset parsing and blind forward search over bitset states.

mod bitset;
mod parse;
mod search;
mod task;

pub use bitset::BitsetState;
pub use parse::parse_pddl;
pub use search::{
    format_plan, parse_plan, search, validate_plan, Plan, PlanValidation, SearchOptions, SearchOutcome, SearchStats,
    DEFAULT_MEMORY_BUDGET,
};
pub use task::{applicable, ParsedTask, SuccessorIndex, TaskAction};
