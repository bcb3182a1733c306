//! Real-valued summaries of persistence diagrams: persistent entropy, the
//! ALPS statistic, longest barcode, mean persistence, lifetime power sums,
//! signal-to-noise ratio, and skewness.
//!
//! All logarithms are natural. Summaries operate on finite lifetime
//! multisets; infinite pairs must be resolved upstream.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::detect::MarkedPointSet;
use crate::error::{Error, Result};

/// A multiset of lifetimes, kept sorted ascending. Zero lifetimes are
/// legal members and count toward `K`.
#[derive(Debug, Clone, PartialEq)]
pub struct LifetimeVector {
    values: Vec<f64>,
}

impl LifetimeVector {
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if let Some(bad) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidParameter(format!("lifetime {bad}")));
        }
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(LifetimeVector { values })
    }

    pub fn from_points(points: &MarkedPointSet) -> Result<Self> {
        LifetimeVector::new(points.lifetimes())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Sorted ascending.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn require_nonempty(&self) -> Result<()> {
        if self.values.is_empty() {
            Err(Error::EmptyLifetimes)
        } else {
            Ok(())
        }
    }

    /// Negated persistent entropy `sum (l/L) ln(l/L)` with `0 ln 0 := 0`.
    /// Always in `[-ln K, 0]`; undefined when every lifetime is zero.
    pub fn persistent_entropy(&self) -> Result<f64> {
        self.require_nonempty()?;
        let total: f64 = self.values.iter().sum();
        if total <= 0.0 {
            return Err(Error::ZeroTotalLifetime);
        }
        Ok(self
            .values
            .iter()
            .map(|&l| {
                if l == 0.0 {
                    0.0
                } else {
                    let r = l / total;
                    r * r.ln()
                }
            })
            .sum())
    }

    /// The ALPS statistic, integral of `ln U(eta)` over the survival count
    /// `U(eta) = #{l > eta}`, in the closed form
    /// `-sum_{i=1}^{K-1} l_(i) ln(1 - 1/(K-i+1))`.
    ///
    /// The largest lifetime never enters the sum, so the statistic needs no
    /// convention for the essential class.
    pub fn alps(&self) -> Result<f64> {
        self.require_nonempty()?;
        let k = self.values.len();
        let mut acc = 0.0;
        for (i, &l) in self.values[..k - 1].iter().enumerate() {
            // i is 0-based; the order statistic index is i+1.
            let remaining = (k - i) as f64; // K - (i+1) + 1
            acc -= l * (1.0 - 1.0 / remaining).ln();
        }
        Ok(acc)
    }

    pub fn longest_barcode(&self) -> Result<f64> {
        self.require_nonempty()?;
        Ok(*self.values.last().unwrap())
    }

    pub fn mean_persistence(&self) -> Result<f64> {
        self.require_nonempty()?;
        Ok(self.values.iter().sum::<f64>() / self.values.len() as f64)
    }

    /// `L_k = sum l^k`; zero for the empty multiset.
    pub fn lifetime_power_sum(&self, k: u32) -> f64 {
        self.values.iter().map(|l| l.powi(k as i32)).sum()
    }

    /// Population central moment `M_k = (1/K) sum (l - mean)^k`.
    pub fn central_moment(&self, k: u32) -> Result<f64> {
        let mean = self.mean_persistence()?;
        Ok(self
            .values
            .iter()
            .map(|l| (l - mean).powi(k as i32))
            .sum::<f64>()
            / self.values.len() as f64)
    }

    /// Mean lifetime over lifetime standard deviation.
    pub fn snr(&self) -> Result<f64> {
        let m2 = self.spread()?;
        Ok(self.mean_persistence()? / m2.sqrt())
    }

    /// Sample skewness `M_3 / M_2^(3/2)`.
    pub fn skewness(&self) -> Result<f64> {
        let m2 = self.spread()?;
        Ok(self.central_moment(3)? / m2.powf(1.5))
    }

    fn spread(&self) -> Result<f64> {
        if self.values.len() < 2 {
            return Err(Error::ZeroVariance(
                "moment ratio on fewer than two lifetimes".to_string(),
            ));
        }
        let m2 = self.central_moment(2)?;
        if m2 <= 0.0 {
            return Err(Error::ZeroVariance("constant lifetimes".to_string()));
        }
        Ok(m2)
    }
}

/// The summaries usable as goodness-of-fit test statistics. Rejection
/// direction is `>=` for all of them (entropy is already negated).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SummaryStatistic {
    Count,
    Entropy,
    Longest,
    Mean,
    Alps,
    L1,
    L2,
    Snr,
    Skew,
}

impl SummaryStatistic {
    pub const ALL: [SummaryStatistic; 9] = [
        SummaryStatistic::Count,
        SummaryStatistic::Entropy,
        SummaryStatistic::Longest,
        SummaryStatistic::Mean,
        SummaryStatistic::Alps,
        SummaryStatistic::L1,
        SummaryStatistic::L2,
        SummaryStatistic::Snr,
        SummaryStatistic::Skew,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SummaryStatistic::Count => "count",
            SummaryStatistic::Entropy => "entropy",
            SummaryStatistic::Longest => "longest",
            SummaryStatistic::Mean => "mean",
            SummaryStatistic::Alps => "alps",
            SummaryStatistic::L1 => "l1",
            SummaryStatistic::L2 => "l2",
            SummaryStatistic::Snr => "snr",
            SummaryStatistic::Skew => "skew",
        }
    }

    /// Evaluates the statistic on detector output. `Count` and the power
    /// sums are defined on empty output; the rest propagate an error,
    /// which Monte Carlo replicates treat as an undefined draw.
    pub fn evaluate(&self, points: &MarkedPointSet) -> Result<f64> {
        if let SummaryStatistic::Count = self {
            return Ok(points.len() as f64);
        }
        let v = LifetimeVector::from_points(points)?;
        match self {
            SummaryStatistic::Count => Ok(v.len() as f64),
            SummaryStatistic::Entropy => v.persistent_entropy(),
            SummaryStatistic::Longest => v.longest_barcode(),
            SummaryStatistic::Mean => v.mean_persistence(),
            SummaryStatistic::Alps => v.alps(),
            SummaryStatistic::L1 => Ok(v.lifetime_power_sum(1)),
            SummaryStatistic::L2 => Ok(v.lifetime_power_sum(2)),
            SummaryStatistic::Snr => v.snr(),
            SummaryStatistic::Skew => v.skewness(),
        }
    }
}

impl fmt::Display for SummaryStatistic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SummaryStatistic {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SummaryStatistic::ALL
            .into_iter()
            .find(|stat| stat.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown statistic {s:?}")))
    }
}

/// Time-series CSV rows `frame_index,statistic_name,value`.
pub fn write_timeseries_csv<W: std::io::Write>(
    rows: &[(usize, SummaryStatistic, f64)],
    mut out: W,
) -> std::io::Result<()> {
    writeln!(out, "frame_index,statistic_name,value")?;
    for (idx, stat, value) in rows {
        writeln!(out, "{},{},{}", idx, stat.name(), value)?;
    }
    Ok(())
}
