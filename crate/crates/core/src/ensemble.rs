//! Validation-RMSE weighted combination of member forecasts.
//!
//! Weights are computed per variable. `Literal` mode makes a member's
//! weight proportional to its validation RMSE; `Inverse` mode uses the
//! reciprocal, the usual forecast-combination convention.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{Features, FEATURE_NAMES, N_FEATURES};
use crate::error::{Error, Result};
use crate::forecast::ForecastResult;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightMode {
    /// `w_i = RMSE_i / Σ_j RMSE_j`
    #[default]
    Literal,
    /// `w_i = (1/RMSE_i) / Σ_j (1/RMSE_j)`
    Inverse,
}

impl std::fmt::Display for WeightMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            WeightMode::Literal => "literal",
            WeightMode::Inverse => "inverse",
        })
    }
}

/// How the three per-variable RMSEs feed the weights.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RmseAggregation {
    /// A separate weight vector per variable.
    #[default]
    PerVariable,
    /// One weight vector from the mean of the three RMSEs, shared by all variables.
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationScore {
    pub member_id: String,
    pub rmse_per_variable: Features,
}

impl ValidationScore {
    pub fn new(member_id: impl Into<String>, rmse_per_variable: Features) -> Result<Self> {
        let score = Self {
            member_id: member_id.into(),
            rmse_per_variable,
        };
        score.validate()?;
        Ok(score)
    }

    fn validate(&self) -> Result<()> {
        for (v, r) in self.rmse_per_variable.iter().enumerate() {
            if !(r.is_finite() && *r > 0.0) {
                return Err(Error::ZeroRmse {
                    member: self.member_id.clone(),
                    variable: FEATURE_NAMES[v],
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub member_ids: Vec<String>,
    /// `weights[i][v]`: weight of member `i` for variable `v`.
    pub weights: Vec<Features>,
    pub mode: WeightMode,
    pub aggregation: RmseAggregation,
}

impl EnsembleSpec {
    pub fn label(&self) -> String {
        combination_label(&self.member_ids)
    }

    pub fn weight_sums(&self) -> Features {
        let mut sums = [0.0; N_FEATURES];
        for w in &self.weights {
            for v in 0..N_FEATURES {
                sums[v] += w[v];
            }
        }
        sums
    }
}

/// Per-variable weights in the given mode.
pub fn compute_weights(scores: &[ValidationScore], mode: WeightMode) -> Result<EnsembleSpec> {
    compute_weights_with(scores, mode, RmseAggregation::PerVariable)
}

pub fn compute_weights_with(
    scores: &[ValidationScore],
    mode: WeightMode,
    aggregation: RmseAggregation,
) -> Result<EnsembleSpec> {
    if scores.is_empty() {
        return Err(Error::EmptyMemberList);
    }
    for s in scores {
        s.validate()?;
    }
    let effective: Vec<Features> = scores
        .iter()
        .map(|s| match aggregation {
            RmseAggregation::PerVariable => s.rmse_per_variable,
            RmseAggregation::Mean => [s.rmse_per_variable.iter().sum::<f64>() / N_FEATURES as f64; N_FEATURES],
        })
        .collect();

    let mut weights = vec![[0.0; N_FEATURES]; scores.len()];
    for v in 0..N_FEATURES {
        let raw: Vec<f64> = effective
            .iter()
            .map(|r| match mode {
                WeightMode::Literal => r[v],
                WeightMode::Inverse => 1.0 / r[v],
            })
            .collect();
        let total: f64 = raw.iter().sum();
        for (w, x) in weights.iter_mut().zip(&raw) {
            w[v] = x / total;
        }
    }
    Ok(EnsembleSpec {
        member_ids: scores.iter().map(|s| s.member_id.clone()).collect(),
        weights,
        mode,
        aggregation,
    })
}

pub fn ensemble_id(member_ids: &[String]) -> String {
    format!("ensemble({})", member_ids.join("+"))
}

/// Human-readable combination name, e.g. `Spain - Brazil`.
pub fn combination_label(member_ids: &[String]) -> String {
    member_ids.join(" - ")
}

/// Weighted sum of aligned member forecasts, per date and variable.
///
/// Evaluated as `p_0 + Σ_{i>0} w_i (p_i − p_0)`, which equals `Σ w_i p_i`
/// when the weights sum to one, reproduces identical members exactly, and
/// is clamped to the member range to absorb rounding.
pub fn combine(forecasts: &[ForecastResult], spec: &EnsembleSpec) -> Result<ForecastResult> {
    if forecasts.is_empty() || spec.member_ids.is_empty() {
        return Err(Error::EmptyMemberList);
    }
    if forecasts.len() != spec.member_ids.len() || spec.weights.len() != spec.member_ids.len() {
        return Err(Error::MemberMismatch(format!(
            "{} forecasts for {} members",
            forecasts.len(),
            spec.member_ids.len()
        )));
    }
    for (f, id) in forecasts.iter().zip(&spec.member_ids) {
        if &f.member_id != id {
            return Err(Error::MemberMismatch(format!(
                "expected member {id}, found {}",
                f.member_id
            )));
        }
    }
    let first = &forecasts[0];
    for f in &forecasts[1..] {
        if f.start_date != first.start_date || f.horizon() != first.horizon() {
            return Err(Error::DateMisalignment(format!(
                "{} starts {} ({} days) but {} starts {} ({} days)",
                first.member_id,
                first.start_date,
                first.horizon(),
                f.member_id,
                f.start_date,
                f.horizon()
            )));
        }
    }

    let values = (0..first.horizon())
        .map(|d| {
            std::array::from_fn(|v| {
                let anchor = forecasts[0].values[d][v];
                let mut lo = anchor;
                let mut hi = anchor;
                let mut acc = anchor;
                for (f, w) in forecasts.iter().zip(&spec.weights).skip(1) {
                    let p = f.values[d][v];
                    acc += w[v] * (p - anchor);
                    lo = lo.min(p);
                    hi = hi.max(p);
                }
                acc.clamp(lo, hi)
            })
        })
        .collect();
    ForecastResult::new(first.start_date, values, ensemble_id(&spec.member_ids))
}

/// All non-empty subsets of `member_ids`, smallest first, each size in
/// lexicographic order of member position.
pub fn enumerate_combinations(member_ids: &[String]) -> Result<Vec<Vec<String>>> {
    let n = member_ids.len();
    if !(1..=8).contains(&n) {
        return Err(Error::InvalidConfig(format!(
            "combination enumeration supports 1 to 8 members, got {n}"
        )));
    }
    let mut subsets: Vec<Vec<usize>> = (1u32..(1 << n))
        .map(|mask| (0..n).filter(|i| mask & (1 << i) != 0).collect())
        .collect();
    subsets.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    Ok(subsets
        .into_iter()
        .map(|s| s.into_iter().map(|i| member_ids[i].clone()).collect())
        .collect())
}

/// JSON-facing summary of an ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleReport {
    pub mode: WeightMode,
    pub aggregation: RmseAggregation,
    pub members: Vec<String>,
    /// Variable name → weight per member, in `members` order.
    pub weights: BTreeMap<String, Vec<f64>>,
    pub validation_scores: Vec<ValidationScore>,
}

impl EnsembleReport {
    pub fn new(spec: &EnsembleSpec, scores: &[ValidationScore]) -> Self {
        let weights = FEATURE_NAMES
            .iter()
            .enumerate()
            .map(|(v, name)| (name.to_string(), spec.weights.iter().map(|w| w[v]).collect()))
            .collect();
        Self {
            mode: spec.mode,
            aggregation: spec.aggregation,
            members: spec.member_ids.clone(),
            weights,
            validation_scores: scores.to_vec(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;
    use proptest::prelude::*;

    fn ids(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    fn score(id: &str, r: f64) -> ValidationScore {
        ValidationScore::new(id, [r; 3]).unwrap()
    }

    fn fc(id: &str, rows: Vec<Features>) -> ForecastResult {
        ForecastResult::new(NaiveDate::from_ymd_opt(2021, 4, 16).unwrap(), rows, id).unwrap()
    }

    #[test]
    fn single_member_gets_full_weight() {
        for mode in [WeightMode::Literal, WeightMode::Inverse] {
            let spec = compute_weights(&[score("Spain", 0.3)], mode).unwrap();
            assert_eq!(spec.weights, vec![[1.0; 3]]);
        }
    }

    #[test]
    fn table_one_pair() {
        // New-cases validation RMSE: Spain 0.0239, Brazil 0.0338.
        let scores = [
            ValidationScore::new("Spain", [0.0239, 0.0128, 0.0092]).unwrap(),
            ValidationScore::new("Brazil", [0.0338, 0.0131, 0.0084]).unwrap(),
        ];
        let lit = compute_weights(&scores, WeightMode::Literal).unwrap();
        assert!((lit.weights[0][0] - 0.41421).abs() < 1e-5);
        assert!((lit.weights[1][0] - 0.58579).abs() < 1e-5);
        let inv = compute_weights(&scores, WeightMode::Inverse).unwrap();
        assert!((inv.weights[0][0] - 0.58579).abs() < 1e-5);
        assert!((inv.weights[1][0] - 0.41421).abs() < 1e-5);
        // deaths weights are independent of the cases weights
        assert!((lit.weights[0][1] - 0.0128 / 0.0259).abs() < 1e-12);
    }

    #[test]
    fn equal_rmse_equal_weights() {
        let scores = [score("a", 0.2), score("b", 0.2), score("c", 0.2)];
        for mode in [WeightMode::Literal, WeightMode::Inverse] {
            let spec = compute_weights(&scores, mode).unwrap();
            for w in &spec.weights {
                for v in w {
                    assert!((v - 1.0 / 3.0).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn mean_aggregation_shares_weights() {
        let scores = [
            ValidationScore::new("a", [0.1, 0.2, 0.3]).unwrap(),
            ValidationScore::new("b", [0.3, 0.2, 0.1]).unwrap(),
        ];
        let spec = compute_weights_with(&scores, WeightMode::Literal, RmseAggregation::Mean).unwrap();
        for w in spec.weights[0] {
            assert!((w - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn weight_errors() {
        assert!(matches!(
            compute_weights(&[], WeightMode::Literal),
            Err(Error::EmptyMemberList)
        ));
        assert!(matches!(
            ValidationScore::new("x", [0.1, 0.0, 0.1]),
            Err(Error::ZeroRmse { .. })
        ));
        let sneaky = ValidationScore {
            member_id: "x".into(),
            rmse_per_variable: [0.0; 3],
        };
        assert!(matches!(
            compute_weights(&[sneaky], WeightMode::Inverse),
            Err(Error::ZeroRmse { .. })
        ));
    }

    #[test]
    fn combine_examples() {
        let spec = EnsembleSpec {
            member_ids: ids(&["a", "b"]),
            weights: vec![[0.25; 3], [0.75; 3]],
            mode: WeightMode::Literal,
            aggregation: RmseAggregation::PerVariable,
        };
        let out = combine(&[fc("a", vec![[100.0; 3]]), fc("b", vec![[200.0; 3]])], &spec).unwrap();
        assert_eq!(out.values, vec![[175.0; 3]]);
        assert_eq!(out.member_id, "ensemble(a+b)");

        let one_hot = EnsembleSpec {
            weights: vec![[0.0; 3], [1.0; 3]],
            ..spec.clone()
        };
        let b = fc("b", vec![[3.0, 4.0, 5.0], [1.0, 2.0, 3.0]]);
        let out = combine(&[fc("a", vec![[9.0; 3]; 2]), b.clone()], &one_hot).unwrap();
        assert_eq!(out.values, b.values);
    }

    #[test]
    fn combine_rejects_misaligned_members() {
        let spec = EnsembleSpec {
            member_ids: ids(&["a", "b"]),
            weights: vec![[0.5; 3], [0.5; 3]],
            mode: WeightMode::Literal,
            aggregation: RmseAggregation::PerVariable,
        };
        let a = fc("a", vec![[1.0; 3]; 2]);
        let short = fc("b", vec![[1.0; 3]]);
        assert!(matches!(
            combine(&[a.clone(), short], &spec),
            Err(Error::DateMisalignment(_))
        ));
        let c = fc("c", vec![[1.0; 3]; 2]);
        assert!(matches!(combine(&[a.clone(), c], &spec), Err(Error::MemberMismatch(_))));
        assert!(matches!(combine(&[a], &spec), Err(Error::MemberMismatch(_))));
    }

    #[test]
    fn combinations() {
        let four = ids(&["Spain", "Brazil", "USA", "Bangladesh"]);
        let subsets = enumerate_combinations(&four).unwrap();
        assert_eq!(subsets.len(), 15);
        let labels: Vec<String> = subsets.iter().map(|s| combination_label(s)).collect();
        assert_eq!(labels[0], "Spain");
        assert_eq!(labels[4], "Spain - Brazil");
        assert_eq!(labels[9], "USA - Bangladesh");
        assert_eq!(labels[10], "Spain - Brazil - USA");
        assert_eq!(labels[14], "Spain - Brazil - USA - Bangladesh");
        assert_eq!(enumerate_combinations(&ids(&["a"])).unwrap().len(), 1);
        assert_eq!(enumerate_combinations(&ids(&["a", "b"])).unwrap().len(), 3);
        assert!(enumerate_combinations(&[]).is_err());
    }

    #[test]
    fn report_lists_weights_by_variable() {
        let spec = compute_weights(&[score("a", 0.1), score("b", 0.3)], WeightMode::Inverse).unwrap();
        let report = EnsembleReport::new(&spec, &[score("a", 0.1), score("b", 0.3)]);
        let json = serde_json::to_value(&report).unwrap();
        assert_eq!(json["mode"], "inverse");
        assert_eq!(json["weights"]["new_cases"].as_array().unwrap().len(), 2);
    }

    fn members() -> impl Strategy<Value = (Vec<f64>, Vec<Vec<Features>>)> {
        (1usize..6, 1usize..8).prop_flat_map(|(n, h)| {
            (
                prop::collection::vec(1e-3f64..1.0, n),
                prop::collection::vec(prop::collection::vec(prop::array::uniform3(0.0f64..1e6), h), n),
            )
        })
    }

    fn build(rmse: &[f64], rows: &[Vec<Features>], mode: WeightMode) -> (Vec<ForecastResult>, EnsembleSpec) {
        let scores: Vec<ValidationScore> = rmse
            .iter()
            .enumerate()
            .map(|(i, r)| ValidationScore::new(format!("m{i}"), [*r, r * 2.0, r * 0.5]).unwrap())
            .collect();
        let spec = compute_weights(&scores, mode).unwrap();
        let fcs = rows
            .iter()
            .enumerate()
            .map(|(i, r)| fc(&format!("m{i}"), r.clone()))
            .collect();
        (fcs, spec)
    }

    proptest! {
        #[test]
        fn weights_normalized((rmse, _) in members()) {
            for mode in [WeightMode::Literal, WeightMode::Inverse] {
                let (_, spec) = build(&rmse, &vec![vec![[0.0; 3]]; rmse.len()], mode);
                for s in spec.weight_sums() {
                    prop_assert!((s - 1.0).abs() <= 1e-12);
                }
                prop_assert!(spec.weights.iter().flatten().all(|w| *w >= 0.0));
            }
        }

        #[test]
        fn combination_is_convex((rmse, rows) in members()) {
            let (fcs, spec) = build(&rmse, &rows, WeightMode::Literal);
            let out = combine(&fcs, &spec).unwrap();
            for (d, row) in out.values.iter().enumerate() {
                for v in 0..3 {
                    let lo = fcs.iter().map(|f| f.values[d][v]).fold(f64::INFINITY, f64::min);
                    let hi = fcs.iter().map(|f| f.values[d][v]).fold(f64::NEG_INFINITY, f64::max);
                    prop_assert!(row[v] >= lo && row[v] <= hi);
                }
            }
        }

        #[test]
        fn identical_members_reproduced_exactly((rmse, rows) in members()) {
            let same = vec![rows[0].clone(); rmse.len()];
            let (fcs, spec) = build(&rmse, &same, WeightMode::Inverse);
            let out = combine(&fcs, &spec).unwrap();
            prop_assert_eq!(&out.values, &rows[0]);
        }

        #[test]
        fn permutation_invariant((rmse, rows) in members(), rot in 0usize..6) {
            let (fcs, spec) = build(&rmse, &rows, WeightMode::Inverse);
            let out = combine(&fcs, &spec).unwrap();
            let n = rmse.len();
            let k = rot % n;
            let perm: Vec<usize> = (0..n).map(|i| (i + k) % n).collect();
            let scores: Vec<ValidationScore> = perm
                .iter()
                .map(|&i| ValidationScore::new(format!("m{i}"), [rmse[i], rmse[i] * 2.0, rmse[i] * 0.5]).unwrap())
                .collect();
            let spec2 = compute_weights(&scores, WeightMode::Inverse).unwrap();
            let fcs2: Vec<ForecastResult> = perm.iter().map(|&i| fcs[i].clone()).collect();
            let out2 = combine(&fcs2, &spec2).unwrap();
            for (d, (a, b)) in out.values.iter().zip(&out2.values).enumerate() {
                for v in 0..3 {
                    let scale = fcs.iter().map(|f| f.values[d][v].abs()).fold(1.0, f64::max);
                    prop_assert!((a[v] - b[v]).abs() <= 1e-12 * scale);
                }
            }
        }

        #[test]
        fn two_member_mode_duality(a in 1e-4f64..1.0, b in 1e-4f64..1.0) {
            let lit = compute_weights(&[score("x", a), score("y", b)], WeightMode::Literal).unwrap();
            let inv = compute_weights(&[score("x", b), score("y", a)], WeightMode::Inverse).unwrap();
            for i in 0..2 {
                for v in 0..3 {
                    prop_assert!((lit.weights[i][v] - inv.weights[i][v]).abs() < 1e-12);
                }
            }
        }
    }
}
