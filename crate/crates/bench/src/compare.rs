use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result, Stage};
use crate::experiment::Summary;

/// `(1 - b/a) * 100` for the 1000-step index and the tracking error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reduction {
    pub steps: usize,
    pub index_a: f64,
    pub index_b: f64,
    pub index_reduction_pct: f64,
    pub error_a: f64,
    pub error_b: f64,
    pub error_reduction_pct: f64,
}

fn pct(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (1.0 - b / a) * 100.0
    }
}

pub fn compare_runs(a: &Summary, b: &Summary) -> Result<Reduction> {
    if a.steps != b.steps {
        return Err(BenchError::invalid(Stage::Compare, format!("runs have different horizons: {} vs {} steps", a.steps, b.steps)));
    }
    if a.perf_index_1000 == 0.0 && b.perf_index_1000 != 0.0 {
        return Err(BenchError::invalid(Stage::Compare, "baseline index is zero"));
    }
    Ok(Reduction {
        steps: a.steps,
        index_a: a.perf_index_1000,
        index_b: b.perf_index_1000,
        index_reduction_pct: pct(a.perf_index_1000, b.perf_index_1000),
        error_a: a.tracking_error_l2,
        error_b: b.tracking_error_l2,
        error_reduction_pct: if a.tracking_error_l2 == 0.0 { 0.0 } else { pct(a.tracking_error_l2, b.tracking_error_l2) },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Pipeline;

    fn summary(index: f64, error: f64, steps: usize) -> Summary {
        Summary {
            pipeline: Pipeline::ModelBased,
            steps,
            report_step: 100,
            seed: 0,
            final_outputs: vec![],
            tracking_error_l2: error,
            perf_index_100: index,
            perf_index_1000: index,
            unweighted_index_1000: index,
            iterations: 1,
            converged: true,
            estimation_error: None,
            output_estimation_error: None,
            wall_time: 0.0,
        }
    }

    #[test]
    fn identical_runs_reduce_nothing() {
        let a = summary(10.0, 1.0, 1000);
        let r = compare_runs(&a, &a).unwrap();
        assert_eq!(r.index_reduction_pct, 0.0);
        assert_eq!(r.error_reduction_pct, 0.0);
        let empty = summary(0.0, 0.0, 0);
        assert_eq!(compare_runs(&empty, &empty).unwrap().index_reduction_pct, 0.0);
    }

    #[test]
    fn published_observer_reduction() {
        use lqt_core::fixtures::expected as e;
        let a = summary(e::OBSERVER_INDEX_1000, e::OBSERVER_ERROR, 1000);
        let b = summary(e::OBSERVER_BO_INDEX_1000, e::OBSERVER_BO_ERROR, 1000);
        let r = compare_runs(&a, &b).unwrap();
        assert!((r.index_reduction_pct - e::OBSERVER_REDUCTION_PCT).abs() < 0.1);
    }

    #[test]
    fn horizons_must_match() {
        let err = compare_runs(&summary(1.0, 1.0, 100), &summary(1.0, 1.0, 1000)).unwrap_err();
        assert_eq!(err.stage(), Stage::Compare);
    }
}
