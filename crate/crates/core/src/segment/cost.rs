use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostModel {
    L1,
    #[default]
    L2,
    Linear,
}

impl FromStr for CostModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.to_ascii_lowercase().as_str() {
            "l1" => Ok(Self::L1),
            "l2" => Ok(Self::L2),
            "linear" => Ok(Self::Linear),
            _ => Err(Error::InvalidParameter(format!("unknown cost model {s:?}"))),
        }
    }
}

impl fmt::Display for CostModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::L1 => "l1",
            Self::L2 => "l2",
            Self::Linear => "linear",
        })
    }
}

/// Cost of treating `series[a..b]` as one segment.
///
/// L2 is the sum of squared deviations from the mean, L1 the sum of
/// absolute deviations from the median and Linear the residual sum of
/// squares of a least-squares line over the frame index.
pub fn segment_cost(series: &[f64], a: usize, b: usize, cost: CostModel) -> f64 {
    let x = &series[a..b];
    if x.len() < 2 {
        return 0.0;
    }
    let n = x.len() as f64;
    match cost {
        CostModel::L2 => {
            let m = x.iter().sum::<f64>() / n;
            x.iter().map(|v| (v - m).powi(2)).sum()
        }
        CostModel::L1 => {
            let mut s = x.to_vec();
            s.sort_by(f64::total_cmp);
            let h = s.len() / 2;
            let med = if s.len() % 2 == 1 {
                s[h]
            } else {
                0.5 * (s[h - 1] + s[h])
            };
            x.iter().map(|v| (v - med).abs()).sum()
        }
        CostModel::Linear => {
            let mt = (n - 1.0) / 2.0;
            let my = x.iter().sum::<f64>() / n;
            let mut sxy = 0.0;
            let mut sxx = 0.0;
            for (i, v) in x.iter().enumerate() {
                let dt = i as f64 - mt;
                sxy += dt * (v - my);
                sxx += dt * dt;
            }
            let slope = sxy / sxx;
            x.iter()
                .enumerate()
                .map(|(i, v)| (v - my - slope * (i as f64 - mt)).powi(2))
                .sum()
        }
    }
}
