//! Hidden labels behind a metered query interface.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::error::{check_len, Error, Result};
use crate::linalg::{check_p, DenseMatrix};
use crate::sampling::{realize, SamplePlan, Sketch};
use crate::solvers::{solve_weighted, SolveResult, SolverOptions};

/// A design matrix with labels that can only be read through [`query`].
#[derive(Debug, Clone)]
pub struct RegressionInstance {
    a: DenseMatrix,
    hidden_y: Vec<f64>,
    p: f64,
}

impl RegressionInstance {
    pub fn new(a: DenseMatrix, y: Vec<f64>, p: f64) -> Result<Self> {
        check_len(a.rows(), y.len())?;
        check_p(p)?;
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { a, hidden_y: y, p })
    }

    pub fn a(&self) -> &DenseMatrix {
        &self.a
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn n(&self) -> usize {
        self.a.rows()
    }

    pub fn d(&self) -> usize {
        self.a.cols()
    }

    /// Same design and labels under a different loss exponent.
    pub fn with_p(&self, p: f64) -> Result<Self> {
        check_p(p)?;
        Ok(Self { p, ..self.clone() })
    }

    /// Every label, bypassing the ledger. For evaluation harnesses that need
    /// the full-data optimum; the query-limited algorithms never call it.
    pub fn reveal(&self) -> &[f64] {
        &self.hidden_y
    }
}

/// Rows whose labels have been read, with their cached values.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct QueryLedger {
    seen: BTreeMap<usize, f64>,
    budget: Option<usize>,
}

impl QueryLedger {
    pub fn new(budget: Option<usize>) -> Self {
        Self {
            seen: BTreeMap::new(),
            budget,
        }
    }

    pub fn budget(&self) -> Option<usize> {
        self.budget
    }

    /// Number of distinct rows queried.
    pub fn len(&self) -> usize {
        self.seen.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seen.is_empty()
    }

    /// Queried rows in increasing order.
    pub fn queried(&self) -> impl ExactSizeIterator<Item = usize> + '_ {
        self.seen.keys().copied()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.seen.contains_key(&i)
    }
}

/// Reads `y_i`. Repeated reads of a row are served from the ledger and are
/// not counted again; a new row beyond the budget is refused.
pub fn query(instance: &RegressionInstance, ledger: &mut QueryLedger, i: usize) -> Result<f64> {
    let n = instance.n();
    if i >= n {
        return Err(Error::IndexOutOfRange { index: i, len: n });
    }
    if let Some(&v) = ledger.seen.get(&i) {
        return Ok(v);
    }
    if let Some(budget) = ledger.budget {
        if ledger.seen.len() >= budget {
            return Err(Error::BudgetExceeded { budget });
        }
    }
    let v = instance.hidden_y[i];
    ledger.seen.insert(i, v);
    Ok(v)
}

/// Realizes the plan, queries exactly the sampled rows and minimizes the
/// reweighted loss on them. The returned `objective` is the sketched loss.
pub fn active_solve(
    instance: &RegressionInstance,
    plan: &SamplePlan,
    seed: u64,
    budget: Option<usize>,
) -> Result<(SolveResult, QueryLedger, Sketch)> {
    active_solve_with(instance, plan, seed, budget, SolverOptions::default())
}

/// [`active_solve`] with explicit solver options.
pub fn active_solve_with(
    instance: &RegressionInstance,
    plan: &SamplePlan,
    seed: u64,
    budget: Option<usize>,
    opts: SolverOptions,
) -> Result<(SolveResult, QueryLedger, Sketch)> {
    check_len(instance.n(), plan.n)?;
    let sketch = realize(plan, seed);
    let mut ledger = QueryLedger::new(budget);
    let rows: Vec<usize> = sketch.indices().collect();
    let mut y = Vec::with_capacity(rows.len());
    for &i in &rows {
        y.push(query(instance, &mut ledger, i)?);
    }
    assert_eq!(ledger.len(), sketch.support_size(), "ledger must match the sketch support");
    assert!(rows.iter().copied().eq(ledger.queried()), "ledger must match the sketch support");
    let sub = instance.a.select_rows(&rows)?;
    let s: Vec<f64> = sketch.entries.iter().map(|e| e.1).collect();
    let result = solve_weighted(&sub, &y, &s, instance.p, opts)?;
    Ok((result, ledger, sketch))
}
