use crate::dataset::TransitionDataset;
use crate::fosae::{closed_form_parameter_count, FosaeConfig};
use crate::scalar::Scalar;

use super::train::{train, TrainError, TrainOptions};

/// Which cells of the grid to visit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridOrder {
    /// Every `(U, P)` cell, `U` outer, `P` inner.
    Full,
    /// Cells by ascending `U·P` (ties by `U`); stops at the first cell that
    /// meets the threshold, which is then the minimum proposition count.
    MinimumSearch,
}

#[derive(Debug, Clone)]
pub struct GridSpec {
    pub arities: Vec<usize>,
    pub max_units: usize,
    pub max_predicates: usize,
    /// Shared settings; units, arity and predicates are overwritten per cell.
    pub base: FosaeConfig,
    pub train: TrainOptions,
    /// Per-object reconstruction error a cell must reach.
    pub threshold: f64,
    pub order: GridOrder,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridRow {
    pub arity: usize,
    pub units: usize,
    pub predicates: usize,
    pub propositions: usize,
    pub parameters: usize,
    pub test_mse: f64,
    pub test_object_error: f64,
    pub epochs_run: usize,
    /// `ok`, `miss` (threshold not reached), `diverged` or `error: ...`.
    pub status: String,
}

impl GridRow {
    pub const CSV_HEADER: &'static str =
        "arity,units,predicates,propositions,parameters,test_mse,test_object_error,epochs_run,status";

    pub fn reached(&self) -> bool {
        self.status == "ok"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{:.8},{:.8},{},{}",
            self.arity,
            self.units,
            self.predicates,
            self.propositions,
            self.parameters,
            self.test_mse,
            self.test_object_error,
            self.epochs_run,
            self.status.replace(',', ";")
        )
    }
}

fn cells(spec: &GridSpec) -> Vec<(usize, usize)> {
    let mut cells: Vec<(usize, usize)> = (1..=spec.max_units)
        .flat_map(|u| (1..=spec.max_predicates).map(move |p| (u, p)))
        .collect();
    if spec.order == GridOrder::MinimumSearch {
        cells.sort_by_key(|&(u, p)| (u * p, u));
    }
    cells
}

/// Trains one model per cell and arity. A failing cell is recorded and the
/// grid continues. `progress` sees each row as it completes.
pub fn eval_arity_grid<T: Scalar>(spec: &GridSpec, data: &TransitionDataset, mut progress: impl FnMut(&GridRow)) -> Vec<GridRow> {
    let mut rows = Vec::new();
    for &arity in &spec.arities {
        for (units, predicates) in cells(spec) {
            let config = FosaeConfig {
                num_units: units,
                arity,
                num_predicates: predicates,
                ..spec.base.clone()
            };
            let mut row = GridRow {
                arity,
                units,
                predicates,
                propositions: units * predicates,
                parameters: closed_form_parameter_count(&config),
                test_mse: f64::NAN,
                test_object_error: f64::NAN,
                epochs_run: 0,
                status: String::new(),
            };
            let opts = TrainOptions {
                stop_below_object_error: Some(spec.threshold),
                checkpoint_dir: None,
                ..spec.train.clone()
            };
            match train::<T>(&config, data, &opts) {
                Ok(out) => {
                    let best = out.best();
                    row.test_mse = best.test_mse;
                    row.test_object_error = best.test_object_error;
                    row.epochs_run = out.history.len();
                    row.status = if best.test_object_error <= spec.threshold { "ok" } else { "miss" }.into();
                }
                Err(TrainError::Diverged { epoch, last_good }) => {
                    if let Some(best) = last_good.as_ref().map(|o| o.best()) {
                        row.test_mse = best.test_mse;
                        row.test_object_error = best.test_object_error;
                    }
                    row.epochs_run = epoch + 1;
                    row.status = "diverged".into();
                }
                Err(TrainError::Failed(e)) => row.status = format!("error: {e}"),
            }
            progress(&row);
            let stop = spec.order == GridOrder::MinimumSearch && row.reached();
            rows.push(row);
            if stop {
                break;
            }
        }
    }
    rows
}

/// Smallest proposition count reaching the threshold under `arity`.
pub fn min_propositions(rows: &[GridRow], arity: usize) -> Option<usize> {
    rows.iter()
        .filter(|r| r.arity == arity && r.reached())
        .map(|r| r.propositions)
        .min()
}

pub fn grid_csv(rows: &[GridRow]) -> String {
    let mut out = String::from(GridRow::CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(order: GridOrder) -> GridSpec {
        GridSpec {
            arities: vec![1, 2],
            max_units: 3,
            max_predicates: 2,
            base: FosaeConfig::default(),
            train: TrainOptions::default(),
            threshold: 0.1,
            order,
        }
    }

    #[test]
    fn cell_orders() {
        assert_eq!(cells(&spec(GridOrder::Full)), [(1, 1), (1, 2), (2, 1), (2, 2), (3, 1), (3, 2)]);
        assert_eq!(
            cells(&spec(GridOrder::MinimumSearch)),
            [(1, 1), (1, 2), (2, 1), (3, 1), (2, 2), (3, 2)]
        );
    }

    #[test]
    fn failing_cells_are_recorded_and_the_grid_continues() {
        let data = TransitionDataset::generate_puzzle(40, 1, 0.5, true).unwrap();
        let mut s = spec(GridOrder::Full);
        s.arities = vec![0, 1];
        s.max_units = 1;
        s.max_predicates = 1;
        s.base = FosaeConfig {
            attention_hidden: 4,
            pn_hidden: 4,
            decoder_hidden: 4,
            batch_size: 16,
            ..FosaeConfig::default().with_epochs(1)
        };
        let rows = eval_arity_grid::<f32>(&s, &data, |_| {});
        assert_eq!(rows.len(), 2);
        assert!(rows[0].status.starts_with("error"));
        assert!(rows[1].status == "ok" || rows[1].status == "miss");
        assert_eq!(rows[1].epochs_run, 1);
        let csv = grid_csv(&rows);
        assert_eq!(csv.lines().count(), 3);
        assert_eq!(min_propositions(&rows, 0), None);
    }

    #[test]
    fn minimum_over_reached_cells() {
        let row = |arity, propositions, status: &str| GridRow {
            arity,
            units: 1,
            predicates: propositions,
            propositions,
            parameters: 0,
            test_mse: 0.0,
            test_object_error: 0.0,
            epochs_run: 1,
            status: status.into(),
        };
        let rows = [row(2, 4, "miss"), row(2, 6, "ok"), row(2, 8, "ok"), row(1, 2, "diverged")];
        assert_eq!(min_propositions(&rows, 2), Some(6));
        assert_eq!(min_propositions(&rows, 1), None);
    }
}
