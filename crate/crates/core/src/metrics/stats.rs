use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest sample size for which the exact null distribution is used.
const EXACT_LIMIT: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MannWhitney {
    pub u1: f64,
    pub u2: f64,
    /// `min(U1, U2)`.
    pub u: f64,
    /// Two-sided p-value.
    pub p: f64,
    pub exact: bool,
}

/// Midranks (1-based) of the pooled sample and whether any ties occurred.
fn midranks(pooled: &[f64]) -> (Vec<f64>, bool) {
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    order.sort_by(|&i, &j| pooled[i].total_cmp(&pooled[j]));
    let mut ranks = vec![0.0; pooled.len()];
    let mut ties = false;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && pooled[order[j + 1]] == pooled[order[i]] {
            j += 1;
        }
        ties |= j > i;
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    (ranks, ties)
}

/// Number of orderings giving each value of `U1`, for samples of size `n1`, `n2`.
fn u_counts(n1: usize, n2: usize) -> Vec<f64> {
    // table[a][b][u]: arrangements of a first-sample and b second-sample items
    let max_u = n1 * n2;
    let mut table = vec![vec![vec![0.0; max_u + 1]; n2 + 1]; n1 + 1];
    for a in 0..=n1 {
        for b in 0..=n2 {
            if a == 0 || b == 0 {
                table[a][b][0] = 1.0;
                continue;
            }
            for u in 0..=a * b {
                // largest item from the first sample exceeds all b second-sample items
                let from_a = if u >= b { table[a - 1][b][u - b] } else { 0.0 };
                table[a][b][u] = from_a + table[a][b - 1][u];
            }
        }
    }
    table[n1][n2].clone()
}

/// Standard normal survival times two, `erfc(|z| / √2)`.
fn two_sided_normal(z: f64) -> f64 {
    libm::erfc(z.abs() / std::f64::consts::SQRT_2)
}

/// Mann-Whitney U test with midranks. Exact for `n1, n2 ≤ 8` without ties,
/// otherwise the normal approximation.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<MannWhitney> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Invalid("Mann-Whitney U needs two non-empty samples".into()));
    }
    if a.iter().chain(b).any(|v| v.is_nan()) {
        return Err(Error::Invalid("Mann-Whitney U sample contains NaN".into()));
    }
    let (n1, n2) = (a.len(), b.len());
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (ranks, ties) = midranks(&pooled);
    let r1: f64 = ranks[..n1].iter().sum();
    let nn = (n1 * n2) as f64;
    let u1 = nn + (n1 * (n1 + 1)) as f64 / 2.0 - r1;
    let u2 = nn - u1;
    let u = u1.min(u2);
    let exact = !ties && n1 <= EXACT_LIMIT && n2 <= EXACT_LIMIT;
    let p = if exact {
        let counts = u_counts(n1, n2);
        let total: f64 = counts.iter().sum();
        let tail: f64 = counts.iter().take(u.round() as usize + 1).sum();
        (2.0 * tail / total).min(1.0)
    } else {
        let sigma = (nn * (n1 + n2 + 1) as f64 / 12.0).sqrt();
        two_sided_normal((u - nn / 2.0) / sigma)
    };
    Ok(MannWhitney { u1, u2, u, p, exact })
}

pub fn significance_stars(p: f64) -> &'static str {
    if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        "ns"
    }
}

/// Min, lower quartile, median, upper quartile, max by linear interpolation.
pub fn quartiles(values: &[f64]) -> [f64; 5] {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let at = |q: f64| {
        let pos = q * (v.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
    };
    [v[0], at(0.25), at(0.5), at(0.75), v[v.len() - 1]]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub label: String,
    pub n: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairTest {
    pub a: String,
    pub b: String,
    pub u: f64,
    pub p: f64,
    pub exact: bool,
    pub stars: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiusReport {
    pub groups: Vec<GroupSummary>,
    pub tests: Vec<PairTest>,
    /// Groups left out, with the reason.
    pub notes: Vec<String>,
}

impl RadiusReport {
    pub fn summary_csv(&self) -> String {
        let mut out = String::from("group,n,min,q1,median,q3,max,mean\n");
        for g in &self.groups {
            let _ = writeln!(out, "{},{},{},{},{},{},{},{}", g.label, g.n, g.min, g.q1, g.median, g.q3, g.max, g.mean);
        }
        out
    }

    pub fn tests_csv(&self) -> String {
        let mut out = String::from("group_a,group_b,u,p,exact,stars\n");
        for t in &self.tests {
            let _ = writeln!(out, "{},{},{},{},{},{}", t.a, t.b, t.u, t.p, t.exact, t.stars);
        }
        out
    }
}

/// Summaries per group and U tests between adjacent groups. Groups with
/// fewer than two samples are left out.
pub fn radius_report(groups: &[(String, Vec<f64>)]) -> RadiusReport {
    let mut notes = Vec::new();
    let kept: Vec<&(String, Vec<f64>)> = groups
        .iter()
        .filter(|(label, values)| {
            let ok = values.len() >= 2;
            if !ok {
                notes.push(format!("group {label} excluded: {} sample(s)", values.len()));
            }
            ok
        })
        .collect();
    let summaries = kept
        .iter()
        .map(|(label, values)| {
            let [min, q1, median, q3, max] = quartiles(values);
            GroupSummary {
                label: label.clone(),
                n: values.len(),
                min,
                q1,
                median,
                q3,
                max,
                mean: values.iter().sum::<f64>() / values.len() as f64,
            }
        })
        .collect();
    let tests = kept
        .windows(2)
        .filter_map(|pair| {
            let (la, a) = pair[0];
            let (lb, b) = pair[1];
            mann_whitney_u(a, b).ok().map(|mw| PairTest {
                a: la.clone(),
                b: lb.clone(),
                u: mw.u,
                p: mw.p,
                exact: mw.exact,
                stars: significance_stars(mw.p).into(),
            })
        })
        .collect();
    RadiusReport { groups: summaries, tests, notes }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Permutation oracle: the fraction of all rank assignments whose
    /// `min(U1, U2)` is at most the observed one.
    fn brute_force_p(n1: usize, n2: usize, u_obs: f64) -> f64 {
        let n = n1 + n2;
        let (mut hits, mut total) = (0u64, 0u64);
        for mask in 0u32..(1 << n) {
            if mask.count_ones() as usize != n1 {
                continue;
            }
            let r1: usize = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| i + 1).sum();
            let u1 = (n1 * n2 + n1 * (n1 + 1) / 2) as f64 - r1 as f64;
            let u = u1.min((n1 * n2) as f64 - u1);
            total += 1;
            if u <= u_obs {
                hits += 1;
            }
        }
        hits as f64 / total as f64
    }

    #[test]
    fn hand_examples() {
        let mw = mann_whitney_u(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert_eq!((mw.u1, mw.u2, mw.u), (9.0, 0.0, 0.0));
        assert!(mw.exact);
        assert!((mw.p - 0.1).abs() < 1e-15);
        assert_eq!(mann_whitney_u(&[1.0, 3.0], &[2.0, 4.0]).unwrap().u, 1.0);
        assert!(mann_whitney_u(&[], &[1.0]).is_err());
    }

    #[test]
    fn identical_groups_are_not_significant() {
        let a = [0.3, 1.2, 2.5, 3.1];
        assert!(mann_whitney_u(&a, &a).unwrap().p > 0.9);
        let b = [0.31, 1.21, 2.51, 3.11];
        let c = [0.29, 1.19, 2.49, 3.09];
        assert!(mann_whitney_u(&b, &c).unwrap().p > 0.6);
    }

    #[test]
    fn exact_matches_enumeration_for_all_small_sizes() {
        for n1 in 1..=8 {
            for n2 in 1..=8 {
                if n1 + n2 > 14 {
                    continue;
                }
                for u in 0..=n1 * n2 / 2 {
                    let counts = u_counts(n1, n2);
                    let total: f64 = counts.iter().sum();
                    let exact = (2.0 * counts[..=u].iter().sum::<f64>() / total).min(1.0);
                    let oracle = brute_force_p(n1, n2, u as f64);
                    assert!((exact - oracle).abs() < 1e-12, "n1={n1} n2={n2} u={u}: {exact} vs {oracle}");
                }
            }
        }
    }

    #[test]
    fn normal_approximation_for_large_samples() {
        let a: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let b: Vec<f64> = (0..20).map(|i| i as f64 + 10.5).collect();
        let mw = mann_whitney_u(&a, &b).unwrap();
        assert!(!mw.exact);
        // pairs with a > b: a_i > j + 10.5 for 9 + 8 + … + 1 = 45 of 400
        assert_eq!(mw.u, 45.0);
        let sigma = (400.0 * 41.0 / 12.0f64).sqrt();
        assert!((mw.p - libm::erfc(((45.0 - 200.0) / sigma).abs() / 2f64.sqrt())).abs() < 1e-15);
        assert!(mw.p < 0.001);
    }

    #[test]
    fn ties_use_midranks_and_the_normal_approximation() {
        let mw = mann_whitney_u(&[1.0, 2.0, 2.0], &[2.0, 3.0]).unwrap();
        assert!(!mw.exact);
        // ranks: 1, 3, 3 | 3, 5  → R1 = 7, U1 = 6 + 6 − 7 = 5
        assert_eq!(mw.u1, 5.0);
    }

    proptest! {
        #[test]
        fn swapping_samples_keeps_u_and_p(
            a in proptest::collection::vec(-100.0f64..100.0, 1..12),
            b in proptest::collection::vec(-100.0f64..100.0, 1..12)
        ) {
            let x = mann_whitney_u(&a, &b).unwrap();
            let y = mann_whitney_u(&b, &a).unwrap();
            prop_assert_eq!(x.u, y.u);
            prop_assert!((x.p - y.p).abs() < 1e-12);
            prop_assert!((x.u1 + x.u2 - (a.len() * b.len()) as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn quartile_example() {
        assert_eq!(quartiles(&[4.0, 1.0, 3.0, 2.0, 5.0]), [1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(quartiles(&[1.0, 2.0]), [1.0, 1.25, 1.5, 1.75, 2.0]);
    }

    #[test]
    fn report_examples() {
        let single = radius_report(&[("a".into(), vec![1.0, 2.0, 3.0])]);
        assert_eq!(single.groups.len(), 1);
        assert!(single.tests.is_empty());

        let report = radius_report(&[
            ("slow".into(), vec![4.0, 5.0, 6.0]),
            ("tiny".into(), vec![9.0]),
            ("fast".into(), vec![1.0, 2.0, 3.0]),
        ]);
        assert_eq!(report.groups.len(), 2);
        assert_eq!(report.notes.len(), 1);
        assert_eq!(report.tests.len(), 1);
        assert!((report.tests[0].p - 0.1).abs() < 1e-15);
        assert_eq!(report.tests[0].stars, "ns");
        assert_eq!(report.summary_csv().lines().count(), 3);
        assert!(report.tests_csv().starts_with("group_a,group_b,u,p,exact,stars\n"));
    }

    #[test]
    fn stars() {
        assert_eq!(significance_stars(0.0005), "***");
        assert_eq!(significance_stars(0.005), "**");
        assert_eq!(significance_stars(0.03), "*");
        assert_eq!(significance_stars(0.2), "ns");
    }
}
