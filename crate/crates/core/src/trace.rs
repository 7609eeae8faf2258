//! Append-only per-step simulation records.

use std::io::Write;

use nalgebra::DVector;

use crate::error::{dim_err, Error, Result};
use crate::statespace::CostWeights;

/// One closed-loop step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: usize,
    /// True plant state; diagnostics only.
    pub x: Option<DVector<f64>>,
    pub xhat: Option<DVector<f64>>,
    pub y: DVector<f64>,
    pub yhat: Option<DVector<f64>>,
    pub u: DVector<f64>,
    pub r: DVector<f64>,
    /// Stage cost of this step.
    pub cost: f64,
    /// `sum_{k <= t} gamma^k cost(k)`.
    pub cum_cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTrace {
    gamma: f64,
    records: Vec<StepRecord>,
    discount: f64,
    cum_cost: f64,
}

impl SimulationTrace {
    pub fn new(gamma: f64) -> Self {
        Self {
            gamma,
            records: Vec::new(),
            discount: 1.0,
            cum_cost: 0.0,
        }
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Appends a step; `t` and `cum_cost` are filled in here.
    #[allow(clippy::too_many_arguments)]
    pub fn push(
        &mut self,
        x: Option<DVector<f64>>,
        xhat: Option<DVector<f64>>,
        y: DVector<f64>,
        yhat: Option<DVector<f64>>,
        u: DVector<f64>,
        r: DVector<f64>,
        cost: f64,
    ) -> Result<()> {
        if let Some(first) = self.records.first() {
            let same = |a: &Option<DVector<f64>>, b: &Option<DVector<f64>>| match (a, b) {
                (Some(a), Some(b)) => a.len() == b.len(),
                (None, None) => true,
                _ => false,
            };
            if !same(&first.x, &x)
                || !same(&first.xhat, &xhat)
                || !same(&first.yhat, &yhat)
                || first.y.len() != y.len()
                || first.u.len() != u.len()
                || first.r.len() != r.len()
            {
                return Err(dim_err("trace record", "consistent series", "mismatched record"));
            }
        }
        self.cum_cost += self.discount * cost;
        self.discount *= self.gamma;
        self.records.push(StepRecord {
            t: self.records.len(),
            x,
            xhat,
            y,
            yhat,
            u,
            r,
            cost,
            cum_cost: self.cum_cost,
        });
        Ok(())
    }

    pub fn records(&self) -> &[StepRecord] {
        &self.records
    }
    pub fn len(&self) -> usize {
        self.records.len()
    }
    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
    pub fn last(&self) -> Option<&StepRecord> {
        self.records.last()
    }

    /// Running discounted cost over all records.
    pub fn discounted_cost(&self) -> f64 {
        self.cum_cost
    }

    /// `sum_{t < horizon} gamma^t stage_cost(t)` recomputed under `w`.
    pub fn performance_index(&self, w: &CostWeights, horizon: usize) -> Result<f64> {
        if horizon > self.records.len() {
            return Err(Error::HorizonTooLong {
                horizon,
                len: self.records.len(),
            });
        }
        let mut total = 0.0;
        let mut disc = 1.0;
        for rec in &self.records[..horizon] {
            total += disc * w.stage_cost(&rec.y, &rec.r, &rec.u)?;
            disc *= w.gamma();
        }
        Ok(total)
    }

    /// `sum_{t < horizon} gamma^t (|y - r|^2 + |u|^2)`.
    pub fn unweighted_index(&self, gamma: f64, horizon: usize) -> Result<f64> {
        if horizon > self.records.len() {
            return Err(Error::HorizonTooLong {
                horizon,
                len: self.records.len(),
            });
        }
        let mut total = 0.0;
        let mut disc = 1.0;
        for rec in &self.records[..horizon] {
            total += disc * ((&rec.y - &rec.r).norm_squared() + rec.u.norm_squared());
            disc *= gamma;
        }
        Ok(total)
    }

    /// Writes `t,x1..xn,xhat1..xhatn,y1..yp,u1..um,r1..rp,cost,cum_cost`.
    /// State columns are left out when the trace has no state record.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        let Some(first) = self.records.first() else {
            wtr.write_record(["t", "cost", "cum_cost"])?;
            wtr.flush()?;
            return Ok(());
        };
        let mut header = vec!["t".to_string()];
        let mut named = |prefix: &str, len: usize| {
            for i in 1..=len {
                header.push(format!("{prefix}{i}"));
            }
        };
        if let Some(x) = &first.x {
            named("x", x.len());
        }
        if let Some(xh) = &first.xhat {
            named("xhat", xh.len());
        }
        named("y", first.y.len());
        named("u", first.u.len());
        named("r", first.r.len());
        header.push("cost".into());
        header.push("cum_cost".into());
        wtr.write_record(&header)?;

        for rec in &self.records {
            let mut row = vec![rec.t.to_string()];
            for v in [&rec.x, &rec.xhat].into_iter().flatten() {
                row.extend(v.iter().map(f64::to_string));
            }
            for v in [&rec.y, &rec.u, &rec.r] {
                row.extend(v.iter().map(f64::to_string));
            }
            row.push(rec.cost.to_string());
            row.push(rec.cum_cost.to_string());
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}
