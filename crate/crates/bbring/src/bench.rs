//! Query-complexity benchmarking: run full recoveries across field orders
//! and seeds, take medians, and hold them against a cubic-in-log-q bound
//! calibrated at the smallest order.

use rayon::prelude::*;

use crate::blackbox::reference::ReferenceOracle;
use crate::blackbox::BbRing;
use crate::field::{FieldError, FieldParams};
use crate::recovery::{recover, RecoveryConfig};

#[derive(Debug, Clone)]
pub struct BenchRow {
    pub q: u64,
    pub seeds: usize,
    pub failures: usize,
    pub median_queries: u64,
    pub median_millis: u64,
    /// Calibrated ceiling C * (log2 q)^3 for the query median.
    pub bound: f64,
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub struct BenchTable {
    /// C, fixed from the smallest order's median.
    pub calibration: f64,
    pub rows: Vec<BenchRow>,
}

impl BenchTable {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn any_failures(&self) -> bool {
        self.rows.iter().any(|r| r.failures > 0)
    }

    /// Machine-readable rows, stable key order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("bench:\n");
        out.push_str(&format!("  calibration: {:.3}\n", self.calibration));
        out.push_str("  rows:\n");
        for row in &self.rows {
            out.push_str(&format!("    - q: {}\n", row.q));
            out.push_str(&format!("      seeds: {}\n", row.seeds));
            out.push_str(&format!("      failures: {}\n", row.failures));
            out.push_str(&format!("      median_queries: {}\n", row.median_queries));
            out.push_str(&format!("      median_ms: {}\n", row.median_millis));
            out.push_str(&format!("      bound: {:.1}\n", row.bound));
            out.push_str(&format!("      pass: {}\n", row.pass));
        }
        out
    }
}

/// One recovery per (q, seed), fanned out across sessions in parallel;
/// each worker owns its own oracle session.
pub fn run_bench(
    q_list: &[u64],
    seeds: &[u64],
    cfg_base: &RecoveryConfig,
) -> Result<BenchTable, FieldError> {
    let mut orders = q_list.to_vec();
    orders.sort_unstable();
    orders.dedup();

    // Validate all orders up front so a bad one is a usage error, not a
    // half-finished table.
    let params: Vec<FieldParams> = orders
        .iter()
        .map(|&q| FieldParams::from_order(q))
        .collect::<Result<_, _>>()?;

    let mut rows = Vec::with_capacity(orders.len());
    let mut calibration = 0.0f64;
    for (i, &q) in orders.iter().enumerate() {
        let runs: Vec<Option<(u64, u64)>> = seeds
            .par_iter()
            .map(|&seed| {
                let ring = BbRing::new(ReferenceOracle::new(params[i].clone(), seed));
                let cfg = RecoveryConfig { seed, ..cfg_base.clone() };
                let start = std::time::Instant::now();
                match recover(&ring, q, &cfg) {
                    Ok((_, steps)) => {
                        let queries: u64 = steps.iter().map(|s| s.queries.total()).sum();
                        Some((queries, start.elapsed().as_millis() as u64))
                    }
                    Err(_) => None,
                }
            })
            .collect();

        let failures = runs.iter().filter(|r| r.is_none()).count();
        let mut queries: Vec<u64> = runs.iter().flatten().map(|&(q, _)| q).collect();
        let mut millis: Vec<u64> = runs.iter().flatten().map(|&(_, m)| m).collect();
        queries.sort_unstable();
        millis.sort_unstable();
        let median_queries = queries.get(queries.len() / 2).copied().unwrap_or(0);
        let median_millis = millis.get(millis.len() / 2).copied().unwrap_or(0);

        let log_q = (q as f64).log2();
        if i == 0 {
            calibration = median_queries as f64 / log_q.powi(3);
        }
        let bound = calibration * log_q.powi(3);
        // Slack for the float round trip on the calibration row itself.
        let pass = failures == 0 && median_queries as f64 <= bound * (1.0 + 1e-9);
        rows.push(BenchRow {
            q,
            seeds: seeds.len(),
            failures,
            median_queries,
            median_millis,
            bound,
            pass,
        });
    }

    Ok(BenchTable { calibration, rows })
}
