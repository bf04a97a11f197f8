use super::config::{ExperimentConfig, GridSpec};
use super::report::{CellReport, ReportSet};
use super::run::{run_experiment, ExperimentData, Runtime};
use crate::augment::{committee_plan_size, PlanVerdict};
use crate::strategies::StrategyKind;

#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    pub config: ExperimentConfig,
    /// Why the cell will not run, if it cannot.
    pub skip_reason: Option<String>,
}

/// Expands a grid into cells: the baseline first when requested, then every
/// strategy pair by `n` by `k`.
pub fn grid_cells(base: &ExperimentConfig, grid: &GridSpec) -> Vec<GridCell> {
    let ns = if grid.n.is_empty() {
        vec![base.n]
    } else {
        grid.n.clone()
    };
    let ks = if grid.k.is_empty() {
        vec![base.k]
    } else {
        grid.k.clone()
    };
    let mut cells = Vec::new();
    if grid.include_baseline {
        let mut cfg = base.clone();
        cfg.baseline_mode = true;
        cfg.candidate_strategy = StrategyKind::Random;
        cfg.augment_strategy = StrategyKind::Random;
        cfg.k = 1;
        cells.push(GridCell {
            config: cfg,
            skip_reason: None,
        });
    }
    for (cand, aug) in grid.strategy_pairs(base) {
        for &n in &ns {
            for &k in &ks {
                let mut cfg = base.clone();
                cfg.baseline_mode = false;
                cfg.candidate_strategy = cand;
                cfg.augment_strategy = aug;
                cfg.n = n;
                cfg.k = k;
                let skip_reason = match committee_plan_size(n, k, cfg.m) {
                    PlanVerdict::Feasible { .. } => None,
                    PlanVerdict::Infeasible {
                        required,
                        available,
                    } => Some(format!(
                        "k*m = {required} demonstrations exceed the candidate pool n = {available}"
                    )),
                };
                cells.push(GridCell {
                    config: cfg,
                    skip_reason,
                });
            }
        }
    }
    cells
}

/// Runs every cell. Infeasible cells are recorded as skipped and a failing
/// cell is recorded as failed; neither stops the grid.
pub fn run_grid(
    base: &ExperimentConfig,
    grid: &GridSpec,
    data: &ExperimentData,
    rt: &Runtime,
) -> ReportSet {
    let cells = grid_cells(base, grid)
        .into_iter()
        .map(|cell| match cell.skip_reason {
            Some(reason) => CellReport::skipped(&cell.config, reason),
            None => run_experiment(&cell.config, data, rt)
                .unwrap_or_else(|e| CellReport::failed(&cell.config, e.to_string())),
        })
        .collect();
    ReportSet::new(cells)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::StrategyMatrix;

    fn base() -> ExperimentConfig {
        ExperimentConfig::mock("esnli", StrategyKind::Random, StrategyKind::Random, 100, 10)
    }

    #[test]
    fn eight_cells_with_one_skipped() {
        let grid = GridSpec {
            n: vec![50, 100],
            k: vec![3, 5, 10, 20],
            strategies: vec![],
            matrix: None,
            include_baseline: false,
        };
        let cells = grid_cells(&base(), &grid);
        assert_eq!(cells.len(), 8);
        let skipped: Vec<_> = cells.iter().filter(|c| c.skip_reason.is_some()).collect();
        assert_eq!(skipped.len(), 1);
        assert_eq!((skipped[0].config.n, skipped[0].config.k), (50, 20));
    }

    #[test]
    fn strategy_matrix_has_eleven_rows() {
        let grid = GridSpec {
            n: vec![],
            k: vec![],
            strategies: vec![],
            matrix: Some(StrategyMatrix::StrategyComparison),
            include_baseline: true,
        };
        let cells = grid_cells(&base(), &grid);
        assert_eq!(cells.len(), 11);
        assert!(cells[0].config.baseline_mode);
        assert_eq!(cells.iter().filter(|c| c.config.baseline_mode).count(), 1);
        let last = &cells[10].config;
        assert_eq!(
            (last.candidate_strategy, last.augment_strategy),
            (StrategyKind::Random, StrategyKind::Random)
        );
    }
}
