//! One-way between-subjects ANOVA with Bonferroni-adjusted pairwise t-tests,
//! plus the F-distribution tail and HbO block averaging.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("need at least 2 groups, got {0}")]
    TooFewGroups(usize),
    #[error("group {label:?} has {n} values, need at least 2")]
    SmallGroup { label: String, n: usize },
    #[error("group {label:?} contains a non-finite value")]
    NonFinite { label: String },
    #[error("F must be non-negative, got {0}")]
    NegativeF(f64),
    #[error("degrees of freedom must be >= 1, got ({0}, {1})")]
    BadDf(f64, f64),
    #[error("p-value {0} outside [0, 1]")]
    PValue(f64),
    #[error("bonferroni factor {m} smaller than the {n} tests")]
    TooFewTests { m: usize, n: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Group {
    pub label: String,
    pub values: Vec<f64>,
}

impl Group {
    pub fn new(label: impl Into<String>, values: Vec<f64>) -> Self {
        Self {
            label: label.into(),
            values,
        }
    }

    fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    fn sum_sq_dev(&self) -> f64 {
        let m = self.mean();
        self.values.iter().map(|v| (v - m) * (v - m)).sum()
    }
}

/// Condition-grouped outcomes. Construct with [`GroupedData::new`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupedData {
    groups: Vec<Group>,
}

impl GroupedData {
    pub fn new(groups: Vec<Group>) -> Result<Self, StatsError> {
        if groups.len() < 2 {
            return Err(StatsError::TooFewGroups(groups.len()));
        }
        for g in &groups {
            if g.values.len() < 2 {
                return Err(StatsError::SmallGroup {
                    label: g.label.clone(),
                    n: g.values.len(),
                });
            }
            if g.values.iter().any(|v| !v.is_finite()) {
                return Err(StatsError::NonFinite {
                    label: g.label.clone(),
                });
            }
        }
        Ok(Self { groups })
    }

    /// Build from `(label, value)` rows, keeping first-seen group order.
    pub fn from_rows<I, S>(rows: I) -> Result<Self, StatsError>
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        let mut groups: Vec<Group> = Vec::new();
        for (label, value) in rows {
            let label = label.into();
            match groups.iter_mut().find(|g| g.label == label) {
                Some(g) => g.values.push(value),
                None => groups.push(Group::new(label, vec![value])),
            }
        }
        Self::new(groups)
    }

    pub fn groups(&self) -> &[Group] {
        &self.groups
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseComparison {
    pub a: String,
    pub b: String,
    pub t_stat: f64,
    pub df: usize,
    pub raw_p: f64,
    pub adjusted_p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaResult {
    /// `f64::INFINITY` when within-group variance is zero but means differ.
    pub f_stat: f64,
    pub df_between: usize,
    pub df_within: usize,
    pub p_value: f64,
    pub ss_between: f64,
    pub ss_within: f64,
    pub pairwise: Vec<PairwiseComparison>,
}

pub fn one_way_anova(data: &GroupedData) -> AnovaResult {
    let groups = data.groups();
    let k = groups.len();
    let n_total: usize = groups.iter().map(|g| g.values.len()).sum();
    let grand = groups.iter().flat_map(|g| &g.values).sum::<f64>() / n_total as f64;

    let ss_between: f64 = groups
        .iter()
        .map(|g| {
            let d = g.mean() - grand;
            g.values.len() as f64 * d * d
        })
        .sum();
    let ss_within: f64 = groups.iter().map(Group::sum_sq_dev).sum();
    let df_between = k - 1;
    let df_within = n_total - k;

    let (f_stat, p_value) = variance_ratio(
        ss_between / df_between as f64,
        ss_within / df_within as f64,
        df_between as f64,
        df_within as f64,
    );

    let mut pairwise = Vec::with_capacity(k * (k - 1) / 2);
    for i in 0..k {
        for j in i + 1..k {
            pairwise.push(pooled_t_test(&groups[i], &groups[j]));
        }
    }
    let m = pairwise.len();
    for cmp in &mut pairwise {
        cmp.adjusted_p = (cmp.raw_p * m as f64).min(1.0);
    }

    AnovaResult {
        f_stat,
        df_between,
        df_within,
        p_value,
        ss_between,
        ss_within,
        pairwise,
    }
}

/// F and its upper-tail p from two mean squares. Zero denominators follow the
/// degenerate-case rules: `x/0` with `x > 0` is infinite F with p = 0, `0/0`
/// is F = 0 with p = 1.
fn variance_ratio(num: f64, den: f64, d1: f64, d2: f64) -> (f64, f64) {
    if den > 0.0 {
        let f = num / den;
        let p = f_survival_unchecked(f, d1, d2);
        (f, p)
    } else if num > 0.0 {
        (f64::INFINITY, 0.0)
    } else {
        (0.0, 1.0)
    }
}

/// Two-sided pooled-variance two-sample t-test. The two-sided p of `t` with
/// `df` degrees of freedom equals the F(1, df) tail at `t²`.
fn pooled_t_test(a: &Group, b: &Group) -> PairwiseComparison {
    let (na, nb) = (a.values.len() as f64, b.values.len() as f64);
    let df = a.values.len() + b.values.len() - 2;
    let pooled = (a.sum_sq_dev() + b.sum_sq_dev()) / df as f64;
    let diff = a.mean() - b.mean();
    let se2 = pooled * (1.0 / na + 1.0 / nb);
    let t_stat = if se2 > 0.0 {
        diff / se2.sqrt()
    } else if diff == 0.0 {
        0.0
    } else {
        diff.signum() * f64::INFINITY
    };
    let (_, raw_p) = variance_ratio(diff * diff, se2, 1.0, df as f64);
    PairwiseComparison {
        a: a.label.clone(),
        b: b.label.clone(),
        t_stat,
        df,
        raw_p,
        adjusted_p: raw_p,
    }
}

/// `P(F > f)` for an F distribution with `(d1, d2)` degrees of freedom.
pub fn f_survival(f: f64, d1: f64, d2: f64) -> Result<f64, StatsError> {
    if !(d1 >= 1.0 && d2 >= 1.0) {
        return Err(StatsError::BadDf(d1, d2));
    }
    if !(f >= 0.0) {
        return Err(StatsError::NegativeF(f));
    }
    Ok(f_survival_unchecked(f, d1, d2))
}

fn f_survival_unchecked(f: f64, d1: f64, d2: f64) -> f64 {
    if f == 0.0 {
        return 1.0;
    }
    if f.is_infinite() {
        return 0.0;
    }
    let x = d2 / (d2 + d1 * f);
    regularized_incomplete_beta(x, d2 / 2.0, d1 / 2.0).clamp(0.0, 1.0)
}

/// `min(1, p * m)` for each raw p.
pub fn bonferroni(raw_p: &[f64], m: usize) -> Result<Vec<f64>, StatsError> {
    if m < raw_p.len() {
        return Err(StatsError::TooFewTests { m, n: raw_p.len() });
    }
    raw_p
        .iter()
        .map(|&p| {
            if (0.0..=1.0).contains(&p) {
                Ok((p * m as f64).min(1.0))
            } else {
                Err(StatsError::PValue(p))
            }
        })
        .collect()
}

/// Natural log of the gamma function (Lanczos, g = 7, n = 9).
pub fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    for (i, c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Regularized incomplete beta `I_x(a, b)`.
pub fn regularized_incomplete_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    // The continued fraction converges fast for x < (a+1)/(a+b+2); use the
    // symmetry I_x(a,b) = 1 - I_{1-x}(b,a) otherwise.
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(x, a, b) / a
    } else {
        1.0 - front * beta_continued_fraction(1.0 - x, b, a) / b
    }
}

/// Modified Lentz evaluation of the incomplete-beta continued fraction.
fn beta_continued_fraction(x: f64, a: f64, b: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-15;
    const MAX_ITER: usize = 10_000;

    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        // even step
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        // odd step
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Time-stamped multichannel samples, sorted by time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSeries {
    pub channels: Vec<String>,
    pub t_ms: Vec<f64>,
    /// `values[i][c]` is channel `c` at `t_ms[i]`.
    pub values: Vec<Vec<f64>>,
}

impl ChannelSeries {
    pub fn channel_index(&self, name: &str) -> Option<usize> {
        self.channels.iter().position(|c| c == name)
    }
}

/// Mean over the selected channels of all samples in each half-open window
/// `[onset, onset + duration)`; `None` for windows without samples.
pub fn block_average_hbo(
    series: &ChannelSeries,
    windows: &[(f64, f64)],
    channels: &[usize],
) -> Vec<Option<f64>> {
    windows
        .iter()
        .map(|&(onset, duration)| {
            let lo = series.t_ms.partition_point(|&t| t < onset);
            let hi = series.t_ms.partition_point(|&t| t < onset + duration);
            let mut sum = 0.0;
            let mut count = 0usize;
            for row in &series.values[lo..hi] {
                for &c in channels {
                    if let Some(v) = row.get(c) {
                        sum += v;
                        count += 1;
                    }
                }
            }
            (count > 0).then(|| sum / count as f64)
        })
        .collect()
}

/// Fixed-format result table, 4 decimal places.
pub fn render_anova_table(metric: &str, data: &GroupedData, result: &AnovaResult) -> String {
    let mut out = String::new();
    out.push_str(&format!("One-way ANOVA: {metric}\n"));
    out.push_str(&format!("{:<16} {:>6} {:>12}\n", "group", "n", "mean"));
    for g in data.groups() {
        out.push_str(&format!("{:<16} {:>6} {:>12.4}\n", g.label, g.values.len(), g.mean()));
    }
    out.push_str(&format!(
        "F({}, {}) = {:.4}  p = {:.4}\n",
        result.df_between, result.df_within, result.f_stat, result.p_value
    ));
    out.push_str(&format!(
        "{:<16} {:<16} {:>10} {:>10} {:>10}\n",
        "a", "b", "t", "p", "p_bonf"
    ));
    for c in &result.pairwise {
        out.push_str(&format!(
            "{:<16} {:<16} {:>10.4} {:>10.4} {:>10.4}\n",
            c.a, c.b, c.t_stat, c.raw_p, c.adjusted_p
        ));
    }
    out
}
