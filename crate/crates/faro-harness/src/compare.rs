//! Policy comparison tables and ranking distance.

use anyhow::{bail, Result};
use serde::{Deserialize, Serialize};

use crate::report::AggregateReport;

/// Normalized Kendall-Tau distance between two rankings of the same item
/// set: discordant pairs over total pairs. 0 means identical order, 1
/// means fully reversed.
pub fn kendall_tau_distance<T: AsRef<str>>(a: &[T], b: &[T]) -> Result<f64> {
    let n = a.len();
    if n != b.len() {
        bail!("rankings have different lengths ({n} vs {})", b.len());
    }
    if n < 2 {
        return Ok(0.0);
    }
    // Position of each item in b.
    let pos = |item: &str| -> Result<usize> {
        b.iter()
            .position(|x| x.as_ref() == item)
            .ok_or_else(|| anyhow::anyhow!("item '{item}' missing from second ranking"))
    };
    let positions: Vec<usize> = a
        .iter()
        .map(|item| pos(item.as_ref()))
        .collect::<Result<_>>()?;
    {
        let mut seen = positions.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != n {
            bail!("rankings are not over the same distinct items");
        }
    }
    let mut discordant = 0usize;
    for i in 0..n {
        for j in i + 1..n {
            if positions[i] > positions[j] {
                discordant += 1;
            }
        }
    }
    Ok(discordant as f64 / (n * (n - 1) / 2) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub policy: String,
    pub mean_lost_utility: f64,
    pub sd_lost_utility: f64,
    pub mean_violation_rate: f64,
    pub sd_violation_rate: f64,
    pub mean_cluster_utility: f64,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    /// Rows ranked by mean lost utility, best first. Ties break on policy
    /// name so output stays deterministic.
    pub rows: Vec<ComparisonRow>,
    /// Distance to a caller-supplied reference ranking, when given.
    pub kendall_tau_vs_reference: Option<f64>,
}

impl ComparisonTable {
    pub fn ranking(&self) -> Vec<String> {
        self.rows.iter().map(|r| r.policy.clone()).collect()
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<4} {:<22} {:>12} {:>8} {:>10} {:>8}\n",
            "rank", "policy", "lost_util", "sd", "viol_rate", "sd"
        ));
        for (i, r) in self.rows.iter().enumerate() {
            out.push_str(&format!(
                "{:<4} {:<22} {:>12.4} {:>8.4} {:>10.4} {:>8.4}\n",
                i + 1,
                r.policy,
                r.mean_lost_utility,
                r.sd_lost_utility,
                r.mean_violation_rate,
                r.sd_violation_rate
            ));
        }
        if let Some(kt) = self.kendall_tau_vs_reference {
            out.push_str(&format!("kendall-tau distance vs reference: {kt:.4}\n"));
        }
        out
    }
}

/// Ranks aggregate reports by mean lost cluster utility.
pub fn compare(reports: &[AggregateReport], reference: Option<&[String]>) -> Result<ComparisonTable> {
    if reports.is_empty() {
        bail!("no reports to compare");
    }
    let scenario = &reports[0].scenario.name;
    for r in reports {
        if &r.scenario.name != scenario {
            bail!(
                "incompatible scenarios: '{}' vs '{}'",
                scenario,
                r.scenario.name
            );
        }
    }
    let mut rows: Vec<ComparisonRow> = reports
        .iter()
        .map(|r| ComparisonRow {
            policy: r.policy.clone(),
            mean_lost_utility: r.mean_lost_utility,
            sd_lost_utility: r.sd_lost_utility,
            mean_violation_rate: r.mean_violation_rate,
            sd_violation_rate: r.sd_violation_rate,
            mean_cluster_utility: r.mean_cluster_utility,
            trials: r.trials.len(),
        })
        .collect();
    rows.sort_by(|a, b| {
        a.mean_lost_utility
            .partial_cmp(&b.mean_lost_utility)
            .unwrap()
            .then_with(|| a.policy.cmp(&b.policy))
    });
    let kendall = match reference {
        Some(reference) => {
            let ranking: Vec<String> = rows.iter().map(|r| r.policy.clone()).collect();
            let shared: Vec<String> = ranking
                .iter()
                .filter(|p| reference.contains(p))
                .cloned()
                .collect();
            let reference_shared: Vec<String> = reference
                .iter()
                .filter(|p| ranking.contains(p))
                .cloned()
                .collect();
            Some(kendall_tau_distance(&shared, &reference_shared)?)
        }
        None => None,
    };
    Ok(ComparisonTable {
        rows,
        kendall_tau_vs_reference: kendall,
    })
}
