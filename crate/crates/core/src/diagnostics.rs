//! Convergence diagnostics: split-R̂, effective sample size, Monte Carlo
//! standard errors and empirical quantiles.

use serde::{Deserialize, Serialize};

use crate::draws::DrawsTable;
use crate::error::{Error, Result};

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Unbiased sample variance.
fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() as f64 - 1.0)
}

/// Splits every chain into its first and second half (dropping the middle
/// draw of odd-length chains).
pub fn split_chains(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(2 * chains.len());
    for c in chains {
        let half = c.len() / 2;
        out.push(c[..half].to_vec());
        out.push(c[c.len() - half..].to_vec());
    }
    out
}

fn check_chains(chains: &[Vec<f64>]) -> Result<usize> {
    let n = chains.first().map_or(0, Vec::len);
    if chains.is_empty() || n < 4 {
        return Err(Error::contract("need at least one chain with 4 or more draws"));
    }
    if chains.iter().any(|c| c.len() != n) {
        return Err(Error::contract("chains must have equal length"));
    }
    if chains.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::domain("draws contain non-finite values"));
    }
    Ok(n)
}

/// Within-chain mean variance `W` and pooled estimate `var⁺`.
fn variance_components(chains: &[Vec<f64>]) -> (f64, f64) {
    let n = chains[0].len() as f64;
    let w = mean(&chains.iter().map(|c| variance(c)).collect::<Vec<_>>());
    let b_over_n = if chains.len() > 1 {
        variance(&chains.iter().map(|c| mean(c)).collect::<Vec<_>>())
    } else {
        0.0
    };
    (w, w * (n - 1.0) / n + b_over_n)
}

/// Why a diagnostic could not be computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Degenerate {
    pub notice: String,
}

/// Split-R̂ `√(var⁺ / W)` over half-chains. A column with zero within-chain
/// variance has no meaningful R̂ and is reported as degenerate.
pub fn split_rhat(chains: &[Vec<f64>]) -> Result<std::result::Result<f64, Degenerate>> {
    check_chains(chains)?;
    let split = split_chains(chains);
    let (w, var_plus) = variance_components(&split);
    if !(w > 0.0) {
        return Ok(Err(Degenerate {
            notice: "degenerate variance: within-chain variance is zero, R-hat is undefined".into(),
        }));
    }
    Ok(Ok((var_plus / w).sqrt()))
}

/// Biased autocovariance of a centered series at lag `k`.
fn autocovariance(centered: &[f64], k: usize) -> f64 {
    let n = centered.len();
    centered[..n - k].iter().zip(&centered[k..]).map(|(a, b)| a * b).sum::<f64>() / n as f64
}

/// Multi-chain effective sample size with Geyer's initial monotone sequence,
/// computed over split chains.
pub fn ess(chains: &[Vec<f64>]) -> Result<std::result::Result<f64, Degenerate>> {
    check_chains(chains)?;
    let split = split_chains(chains);
    let m = split.len();
    let n = split[0].len();
    let (w, var_plus) = variance_components(&split);
    if !(w > 0.0) {
        return Ok(Err(Degenerate {
            notice: "degenerate variance: effective sample size is undefined".into(),
        }));
    }
    let centered: Vec<Vec<f64>> = split
        .iter()
        .map(|c| {
            let mu = mean(c);
            c.iter().map(|v| v - mu).collect()
        })
        .collect();
    let mean_acov = |t: usize| centered.iter().map(|c| autocovariance(c, t)).sum::<f64>() / m as f64;
    let rho_at = |t: usize| 1.0 - (w - mean_acov(t)) / var_plus;

    let mut rho = vec![0.0; n + 1];
    let mut rho_even = 1.0;
    let mut rho_odd = rho_at(1);
    rho[0] = rho_even;
    rho[1] = rho_odd;
    let mut s = 1;
    while s + 4 < n && rho_even + rho_odd > 0.0 {
        rho_even = rho_at(s + 1);
        rho_odd = rho_at(s + 2);
        if rho_even + rho_odd >= 0.0 {
            rho[s + 1] = rho_even;
            rho[s + 2] = rho_odd;
        }
        s += 2;
    }
    let max_s = s;
    if rho_even > 0.0 {
        rho[max_s + 1] = rho_even;
    }
    let mut t = 1;
    while t + 3 <= max_s {
        if rho[t + 1] + rho[t + 2] > rho[t - 1] + rho[t] {
            rho[t + 1] = 0.5 * (rho[t - 1] + rho[t]);
            rho[t + 2] = rho[t + 1];
        }
        t += 2;
    }
    let total = (m * n) as f64;
    let tau = -1.0 + 2.0 * rho[..max_s].iter().sum::<f64>() + rho[max_s + 1];
    let tau = tau.max(1.0 / total.log10());
    Ok(Ok(total / tau))
}

/// Monte Carlo standard error of the mean, `sd / √ESS`.
pub fn mcse_mean(chains: &[Vec<f64>]) -> Result<std::result::Result<f64, Degenerate>> {
    let e = ess(chains)?;
    let pooled: Vec<f64> = chains.iter().flatten().copied().collect();
    Ok(e.map(|e| (variance(&pooled) / e).sqrt()))
}

/// Batch-means standard error of the mean of one long series, with
/// `⌊√n⌋` batches.
pub fn batch_means_mcse(x: &[f64]) -> Result<f64> {
    let b = (x.len() as f64).sqrt().floor() as usize;
    if b < 2 {
        return Err(Error::contract("series too short for batch means"));
    }
    let size = x.len() / b;
    let means: Vec<f64> = (0..b).map(|i| mean(&x[i * size..(i + 1) * size])).collect();
    Ok((variance(&means) / b as f64).sqrt())
}

/// Empirical quantile with linear interpolation between order statistics
/// (position `q (n − 1)` in the sorted sample).
pub fn quantile(x: &[f64], q: f64) -> Result<f64> {
    if x.is_empty() {
        return Err(Error::contract("quantile of an empty sample"));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::domain(format!("quantile level {q} outside [0, 1]")));
    }
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    let h = q * (s.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    Ok(s[lo] + (h - lo as f64) * (s[hi] - s[lo]))
}

/// Summary of one column of a draws table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub mcse_mean: Option<f64>,
    pub ess: Option<f64>,
    pub rhat: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub notice: Option<String>,
    pub q05: f64,
    pub q50: f64,
    pub q90: f64,
    pub q95: f64,
}

/// Column summaries for every parameter of a table.
pub fn summarize(table: &DrawsTable) -> Result<Vec<ColumnSummary>> {
    (0..table.names.len())
        .map(|j| {
            let chains = table.by_chain(j);
            let pooled: Vec<f64> = chains.iter().flatten().copied().collect();
            let rhat = split_rhat(&chains)?;
            let e = ess(&chains)?;
            let m = mcse_mean(&chains)?;
            let notice = rhat.as_ref().err().map(|d| d.notice.clone());
            Ok(ColumnSummary {
                name: table.names[j].clone(),
                mean: mean(&pooled),
                sd: variance(&pooled).sqrt(),
                mcse_mean: m.ok(),
                ess: e.ok(),
                rhat: rhat.ok(),
                notice,
                q05: quantile(&pooled, 0.05)?,
                q50: quantile(&pooled, 0.5)?,
                q90: quantile(&pooled, 0.9)?,
                q95: quantile(&pooled, 0.95)?,
            })
        })
        .collect()
}
