//! Element-wise fuzzy-vector logic operators.
//!
//! Conjunction, disjunction, and negation on vectors in `[0,1]^d` in three
//! t-norm families (product, Gödel, Łukasiewicz), with m-ary extensions.
//! Product conjunction over m inputs is the element-wise product; product
//! disjunction uses the closed form `1 - prod(1 - q_i)`, which equals the
//! inclusion-exclusion expansion. Gödel extends by component-wise min/max;
//! Łukasiewicz by left folds of its binary t-norm/t-conorm (both are
//! associative, so folding is well-defined).
//!
//! These functions are the reference semantics; the differentiable execution
//! path in [`crate::encoder`] builds the same formulas on the autodiff tape
//! and is tested against them.

use serde::{Deserialize, Serialize};

use crate::error::{NqeError, Result};

/// A d-dimensional vector with every component in the closed interval [0,1].
#[derive(Debug, Clone, PartialEq)]
pub struct FuzzyVec(Vec<f64>);

impl FuzzyVec {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(bad) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(NqeError::Numerical(format!(
                "fuzzy component {bad} outside [0,1]"
            )));
        }
        Ok(FuzzyVec(values))
    }

    pub fn ones(d: usize) -> Self {
        FuzzyVec(vec![1.0; d])
    }

    pub fn zeros(d: usize) -> Self {
        FuzzyVec(vec![0.0; d])
    }

    pub fn splat(value: f64, d: usize) -> Result<Self> {
        Self::new(vec![value; d])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }

    pub fn max_abs_diff(&self, other: &FuzzyVec) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// T-norm family used for the logical operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LogicKind {
    #[default]
    Product,
    Godel,
    Lukasiewicz,
}

impl std::str::FromStr for LogicKind {
    type Err = NqeError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "product" => Ok(LogicKind::Product),
            "godel" => Ok(LogicKind::Godel),
            "lukasiewicz" => Ok(LogicKind::Lukasiewicz),
            _ => Err(NqeError::Config(format!("unknown logic kind `{s}`"))),
        }
    }
}

impl std::fmt::Display for LogicKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LogicKind::Product => "product",
            LogicKind::Godel => "godel",
            LogicKind::Lukasiewicz => "lukasiewicz",
        })
    }
}

fn check_inputs(inputs: &[FuzzyVec]) -> Result<usize> {
    if inputs.len() < 2 {
        return Err(NqeError::Shape(format!(
            "logic operators need at least 2 inputs, got {}",
            inputs.len()
        )));
    }
    let d = inputs[0].len();
    if inputs.iter().any(|v| v.len() != d) {
        return Err(NqeError::Shape("fuzzy vector dimension mismatch".into()));
    }
    Ok(d)
}

/// M-ary conjunction (m >= 2).
pub fn conj(kind: LogicKind, inputs: &[FuzzyVec]) -> Result<FuzzyVec> {
    let d = check_inputs(inputs)?;
    let mut out = inputs[0].0.clone();
    for v in &inputs[1..] {
        for i in 0..d {
            out[i] = match kind {
                LogicKind::Product => out[i] * v.0[i],
                LogicKind::Godel => out[i].min(v.0[i]),
                LogicKind::Lukasiewicz => (out[i] + v.0[i] - 1.0).max(0.0),
            };
        }
    }
    FuzzyVec::new(out)
}

/// M-ary disjunction (m >= 2). The product form is `1 - prod(1 - q_i)`,
/// algebraically equal to the inclusion-exclusion expansion.
pub fn disj(kind: LogicKind, inputs: &[FuzzyVec]) -> Result<FuzzyVec> {
    let d = check_inputs(inputs)?;
    match kind {
        LogicKind::Product => {
            let mut acc = vec![1.0; d];
            for v in inputs {
                for i in 0..d {
                    acc[i] *= 1.0 - v.0[i];
                }
            }
            FuzzyVec::new(acc.into_iter().map(|x| 1.0 - x).collect())
        }
        LogicKind::Godel | LogicKind::Lukasiewicz => {
            let mut out = inputs[0].0.clone();
            for v in &inputs[1..] {
                for i in 0..d {
                    out[i] = match kind {
                        LogicKind::Godel => out[i].max(v.0[i]),
                        _ => (out[i] + v.0[i]).min(1.0),
                    };
                }
            }
            FuzzyVec::new(out)
        }
    }
}

/// Negation `1 - q` (shared by all families).
pub fn neg(q: &FuzzyVec) -> FuzzyVec {
    FuzzyVec(q.0.iter().map(|v| 1.0 - v).collect())
}

/// Component-wise arithmetic mean; replaces conj/disj under the logic-blind
/// ablation (negation stays `1 - q`).
pub fn mean(inputs: &[FuzzyVec]) -> Result<FuzzyVec> {
    let d = check_inputs(inputs)?;
    let mut out = vec![0.0; d];
    for v in inputs {
        for i in 0..d {
            out[i] += v.0[i];
        }
    }
    let m = inputs.len() as f64;
    for x in &mut out {
        *x /= m;
    }
    FuzzyVec::new(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const KINDS: [LogicKind; 3] = [LogicKind::Product, LogicKind::Godel, LogicKind::Lukasiewicz];

    fn fv(values: &[f64]) -> FuzzyVec {
        FuzzyVec::new(values.to_vec()).unwrap()
    }

    #[test]
    fn construction_rejects_out_of_range() {
        assert!(FuzzyVec::new(vec![0.1, 1.2]).is_err());
        assert!(FuzzyVec::new(vec![-0.01]).is_err());
        assert!(FuzzyVec::new(vec![0.0, 1.0]).is_ok());
    }

    #[test]
    fn product_conj_identity_and_hand_value() {
        let q = fv(&[0.2, 0.9]);
        let one = FuzzyVec::ones(2);
        assert_eq!(conj(LogicKind::Product, &[q.clone(), one]).unwrap(), q);

        // 0.5 * 0.4 * 0.5 = 0.1
        let out = conj(
            LogicKind::Product,
            &[fv(&[0.5]), fv(&[0.4]), fv(&[0.5])],
        )
        .unwrap();
        assert!((out.values()[0] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn godel_conj_is_min() {
        let out = conj(LogicKind::Godel, &[fv(&[0.3]), fv(&[0.7])]).unwrap();
        assert_eq!(out.values()[0], 0.3);
    }

    #[test]
    fn product_disj_identity_and_inclusion_exclusion_value() {
        let q = fv(&[0.2, 0.9]);
        let zero = FuzzyVec::zeros(2);
        let out = disj(LogicKind::Product, &[q.clone(), zero]).unwrap();
        assert!(out.max_abs_diff(&q) < 1e-12);

        // 1.5 - 0.75 + 0.125 = 0.875
        let out = disj(
            LogicKind::Product,
            &[fv(&[0.5]), fv(&[0.5]), fv(&[0.5])],
        )
        .unwrap();
        assert!((out.values()[0] - 0.875).abs() < 1e-15);
    }

    #[test]
    fn lukasiewicz_disj_saturates() {
        let out = disj(LogicKind::Lukasiewicz, &[fv(&[0.6]), fv(&[0.7])]).unwrap();
        assert_eq!(out.values()[0], 1.0);
    }

    #[test]
    fn negation_boundary_involution_and_hand_value() {
        assert_eq!(neg(&FuzzyVec::zeros(3)), FuzzyVec::ones(3));
        let q = fv(&[0.25, 0.5, 0.75]);
        assert_eq!(neg(&neg(&q)), q);
        assert_eq!(neg(&fv(&[0.25])).values()[0], 0.75);
    }

    #[test]
    fn arity_and_shape_errors() {
        for kind in KINDS {
            assert!(conj(kind, &[fv(&[0.5])]).is_err());
            assert!(conj(kind, &[fv(&[0.5]), fv(&[0.5, 0.5])]).is_err());
            assert!(disj(kind, &[fv(&[0.5])]).is_err());
        }
    }

    #[test]
    fn mean_is_the_arithmetic_mean() {
        let out = mean(&[fv(&[0.2]), fv(&[0.4])]).unwrap();
        assert!((out.values()[0] - 0.3).abs() < 1e-15);
    }

    fn arb_fuzzy(d: usize) -> impl Strategy<Value = FuzzyVec> {
        prop::collection::vec(0.0..=1.0f64, d).prop_map(|v| FuzzyVec::new(v).unwrap())
    }

    proptest! {
        #[test]
        fn commutativity_identity_annihilator(a in arb_fuzzy(8), b in arb_fuzzy(8)) {
            for kind in KINDS {
                let ab = conj(kind, &[a.clone(), b.clone()]).unwrap();
                let ba = conj(kind, &[b.clone(), a.clone()]).unwrap();
                prop_assert_eq!(ab, ba);
                let ab = disj(kind, &[a.clone(), b.clone()]).unwrap();
                let ba = disj(kind, &[b.clone(), a.clone()]).unwrap();
                prop_assert_eq!(ab, ba);

                // identity and annihilator within double-precision rounding
                let zero = FuzzyVec::zeros(8);
                let one = FuzzyVec::ones(8);
                let out = conj(kind, &[a.clone(), one.clone()]).unwrap();
                prop_assert!(out.max_abs_diff(&a) < 1e-12);
                let out = disj(kind, &[a.clone(), zero.clone()]).unwrap();
                prop_assert!(out.max_abs_diff(&a) < 1e-12);
                let out = conj(kind, &[a.clone(), zero.clone()]).unwrap();
                prop_assert!(out.max_abs_diff(&zero) < 1e-12);
                let out = disj(kind, &[a.clone(), one.clone()]).unwrap();
                prop_assert!(out.max_abs_diff(&one) < 1e-12);
            }
        }

        #[test]
        fn outputs_stay_in_range(inputs in prop::collection::vec(arb_fuzzy(6), 2..6)) {
            for kind in KINDS {
                conj(kind, &inputs).unwrap();
                disj(kind, &inputs).unwrap();
            }
        }

        #[test]
        fn monotone_in_each_argument(
            a in arb_fuzzy(4),
            b in arb_fuzzy(4),
            bump in 0.0..=0.2f64,
        ) {
            for kind in KINDS {
                let a_up = FuzzyVec::new(
                    a.values().iter().map(|v| (v + bump).min(1.0)).collect(),
                )
                .unwrap();
                let low = conj(kind, &[a.clone(), b.clone()]).unwrap();
                let high = conj(kind, &[a_up.clone(), b.clone()]).unwrap();
                for (l, h) in low.values().iter().zip(high.values()) {
                    prop_assert!(l <= h);
                }
                let low = disj(kind, &[a.clone(), b.clone()]).unwrap();
                let high = disj(kind, &[a_up, b.clone()]).unwrap();
                for (l, h) in low.values().iter().zip(high.values()) {
                    prop_assert!(l <= h);
                }
            }
        }

        #[test]
        fn de_morgan_product_and_godel(a in arb_fuzzy(6), b in arb_fuzzy(6)) {
            for kind in [LogicKind::Product, LogicKind::Godel] {
                let lhs = disj(kind, &[a.clone(), b.clone()]).unwrap();
                let rhs = neg(&conj(kind, &[neg(&a), neg(&b)]).unwrap());
                prop_assert!(lhs.max_abs_diff(&rhs) < 1e-12);
            }
        }
    }
}
