//! Parameter classification: Gindikin membership, existence verdicts for
//! `Γ(p, ω; σ)`, the Kalman rank condition and transition-density existence.

use serde::{Serialize, Serializer};

use crate::affine_flow::sigma_flow;
use crate::params::{ProcessParams, WishartParams};
use crate::symcone::{rank_tol, Mat, RANK_ABS_FLOOR, RANK_REL_TOL};

/// Absolute tolerance on `|2p − round(2p)|` for half-integer membership.
pub const HALF_INTEGER_TOL: f64 = 1e-12;

fn is_half_integer(p: f64) -> bool {
    (2.0 * p - (2.0 * p).round()).abs() <= HALF_INTEGER_TOL
}

/// Membership in `Λ_d = {0, ½, …, (d−1)/2} ∪ ((d−1)/2, ∞)`.
pub fn gindikin_contains(d: usize, p: f64) -> bool {
    let threshold = (d as f64 - 1.0) / 2.0;
    if p > threshold {
        return true;
    }
    is_half_integer(p) && p >= -HALF_INTEGER_TOL && (2.0 * p).round() <= 2.0 * threshold
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Status {
    Valid,
    Invalid,
    Unknown,
}

/// Rows of the decision table, in evaluation order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Rule {
    /// `p ≥ (d−1)/2`.
    ShapeAboveThreshold,
    /// `2p ∈ ℕ` and `rank(ω) ≤ 2p`.
    IntegerShapeLowRank,
    /// `p ∉ Λ_d`.
    OutsideGindikin,
    /// `σ` invertible and `rank(ω) > 2p + 1`.
    RankAboveTwoPPlusOne,
    /// `σ`, `ω` invertible and `p < (d−1)/2`.
    FullRankBelowThreshold,
}

impl Rule {
    pub fn id(self) -> &'static str {
        match self {
            Rule::ShapeAboveThreshold => "R1",
            Rule::IntegerShapeLowRank => "R2",
            Rule::OutsideGindikin => "R3",
            Rule::RankAboveTwoPPlusOne => "R4",
            Rule::FullRankBelowThreshold => "R5",
        }
    }

    pub fn citation(self) -> &'static str {
        match self {
            Rule::ShapeAboveThreshold => {
                "p >= (d-1)/2: the law exists for every omega and sigma"
            }
            Rule::IntegerShapeLowRank => {
                "2p integer and rank(omega) <= 2p: sum of 2p squared Gaussian vectors"
            }
            Rule::OutsideGindikin => "p not in the Gindikin set Λ_d",
            Rule::RankAboveTwoPPlusOne => {
                "sigma invertible and rank(omega) > 2p+1 violates the rank condition"
            }
            Rule::FullRankBelowThreshold => {
                "sigma and omega invertible require p >= (d-1)/2"
            }
        }
    }
}

/// Outcome of [`classify_wishart`]. `Valid` and `Invalid` always carry a rule.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Verdict {
    pub status: Status,
    pub rule: Option<Rule>,
}

impl Verdict {
    fn decided(status: Status, rule: Rule) -> Self {
        Verdict {
            status,
            rule: Some(rule),
        }
    }
}

impl Serialize for Verdict {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("Verdict", 3)?;
        st.serialize_field("status", &self.status)?;
        st.serialize_field("rule_id", &self.rule.map(Rule::id))?;
        st.serialize_field(
            "citation",
            &self
                .rule
                .map(Rule::citation)
                .unwrap_or("no decision rule applies; existence is open for these parameters"),
        )?;
        st.end()
    }
}

/// Applies the existence decision table; sufficiency rules come first.
pub fn classify_wishart(params: &WishartParams) -> Verdict {
    let d = params.dim();
    let p = params.p;
    let threshold = (d as f64 - 1.0) / 2.0;
    let rank_omega = rank_tol(&params.omega);
    let sigma_invertible = rank_tol(&params.sigma) == d;

    if p >= threshold - HALF_INTEGER_TOL {
        return Verdict::decided(Status::Valid, Rule::ShapeAboveThreshold);
    }
    if is_half_integer(p) && rank_omega as f64 <= (2.0 * p).round() {
        return Verdict::decided(Status::Valid, Rule::IntegerShapeLowRank);
    }
    if !gindikin_contains(d, p) {
        return Verdict::decided(Status::Invalid, Rule::OutsideGindikin);
    }
    if sigma_invertible && rank_omega as f64 > 2.0 * p + 1.0 + HALF_INTEGER_TOL {
        return Verdict::decided(Status::Invalid, Rule::RankAboveTwoPPlusOne);
    }
    if sigma_invertible && rank_omega == d && p < threshold {
        return Verdict::decided(Status::Invalid, Rule::FullRankBelowThreshold);
    }
    Verdict {
        status: Status::Unknown,
        rule: None,
    }
}

/// The `d × d²` block matrix `[Qᵀ | βQᵀ | … | β^{d−1}Qᵀ]`.
pub fn kalman_matrix(process: &ProcessParams) -> Mat {
    let d = process.dim();
    let mut out = Mat::zeros(d, d * d);
    let mut block = process.q.transpose();
    for k in 0..d {
        out.view_mut((0, k * d), (d, d)).copy_from(&block);
        block = &process.beta * block;
    }
    out
}

/// Numerical rank of the Kalman matrix (singular values `> 1e−10 · s_max`).
pub fn kalman_rank(process: &ProcessParams) -> usize {
    let svals = kalman_matrix(process).singular_values();
    let top = svals.max();
    if top <= 0.0 {
        return 0;
    }
    let threshold = (RANK_REL_TOL * top).max(RANK_ABS_FLOOR);
    svals.iter().filter(|&&s| s > threshold).count()
}

/// `p > (d−1)/2` and the Kalman matrix has full rank.
pub fn transition_density_exists(process: &ProcessParams) -> bool {
    let d = process.dim();
    process.p > (d as f64 - 1.0) / 2.0 && kalman_rank(process) == d
}

/// Evaluates both sides of the controllability equivalence:
/// full Kalman rank, and positive definiteness of `σ_t^β(α)`.
pub fn kalman_equiv_probe(process: &ProcessParams, t: f64) -> crate::Result<(bool, bool)> {
    if !(t > 0.0) {
        return Err(crate::Error::InvalidParams(format!("probe time must be > 0, got {t}")));
    }
    let d = process.dim();
    let rank_maximal = kalman_rank(process) == d;
    let sigma_t = sigma_flow(&process.beta, process.alpha(), t)?;
    Ok((rank_maximal, rank_tol(&sigma_t) == d))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symcone::{PsdMatrix, SymMatrix};
    use nalgebra::DVector;

    fn wp(p: f64, omega: PsdMatrix, sigma: PsdMatrix) -> WishartParams {
        WishartParams::new(p, omega, sigma).unwrap()
    }

    fn diag_rank(d: usize, r: usize) -> PsdMatrix {
        let v: Vec<f64> = (0..d).map(|i| if i < r { 1.0 + i as f64 } else { 0.0 }).collect();
        PsdMatrix::from_diagonal(&v).unwrap()
    }

    #[test]
    fn gindikin_examples() {
        assert!(gindikin_contains(3, 0.5));
        assert!(!gindikin_contains(3, 0.75));
        assert!(gindikin_contains(3, 0.0));
        assert!(gindikin_contains(3, 1.0));
        assert!(gindikin_contains(3, 1.0000001));
        assert!(!gindikin_contains(4, 1.25));
        for p in [0.0, 0.1, 0.5, 0.77, 3.0] {
            assert!(gindikin_contains(1, p));
        }
        // tolerance on half-integers
        assert!(gindikin_contains(4, 0.5 + 1e-13));
    }

    #[test]
    fn classify_examples() {
        let v = classify_wishart(&wp(1.0, diag_rank(2, 2), PsdMatrix::identity(2)));
        assert_eq!(v, Verdict::decided(Status::Valid, Rule::ShapeAboveThreshold));

        let v = classify_wishart(&wp(0.5, diag_rank(4, 3), PsdMatrix::identity(4)));
        assert_eq!(v, Verdict::decided(Status::Invalid, Rule::RankAboveTwoPPlusOne));

        let v = classify_wishart(&wp(0.5, diag_rank(3, 2), PsdMatrix::identity(3)));
        assert_eq!(v.status, Status::Unknown);
        assert_eq!(v.rule, None);

        let v = classify_wishart(&wp(0.75, PsdMatrix::identity(3), PsdMatrix::identity(3)));
        assert_eq!(v, Verdict::decided(Status::Invalid, Rule::OutsideGindikin));
    }

    #[test]
    fn verdict_json_shape() {
        let v = classify_wishart(&wp(0.75, PsdMatrix::identity(3), PsdMatrix::identity(3)));
        let json = serde_json::to_value(v).unwrap();
        assert_eq!(json["status"], "Invalid");
        assert_eq!(json["rule_id"], "R3");
        assert!(json["citation"].as_str().unwrap().contains("Gindikin"));
        let u = classify_wishart(&wp(0.5, diag_rank(3, 2), PsdMatrix::identity(3)));
        assert_eq!(serde_json::to_value(u).unwrap()["rule_id"], serde_json::Value::Null);
    }

    #[test]
    fn kalman_examples() {
        for d in 1..=4 {
            let pp = ProcessParams::new(1.0, Mat::zeros(d, d), Mat::identity(d, d)).unwrap();
            assert_eq!(kalman_rank(&pp), d);
            let pp = ProcessParams::new(1.0, Mat::zeros(d, d), Mat::zeros(d, d)).unwrap();
            assert_eq!(kalman_rank(&pp), 0);
        }
        // Qᵀ = e1 e1ᵀ, β e1 = e2
        let qt = Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let beta = Mat::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 0.0]);
        let pp = ProcessParams::new(1.0, beta, qt.transpose()).unwrap();
        assert_eq!(kalman_rank(&pp), 2);
    }

    #[test]
    fn transition_density_gate() {
        let eye = Mat::identity(2, 2);
        let zero = Mat::zeros(2, 2);
        assert!(transition_density_exists(&ProcessParams::new(1.2, zero.clone(), eye.clone()).unwrap()));
        assert!(!transition_density_exists(&ProcessParams::new(1.2, zero.clone(), zero.clone()).unwrap()));
        assert!(!transition_density_exists(&ProcessParams::new(0.5, zero, eye).unwrap()));
    }

    #[test]
    fn probe_examples() {
        let eye = Mat::identity(3, 3);
        let zero = Mat::zeros(3, 3);
        let pp = ProcessParams::new(1.0, zero.clone(), eye).unwrap();
        assert_eq!(kalman_equiv_probe(&pp, 1.0).unwrap(), (true, true));
        let pp = ProcessParams::new(1.0, zero.clone(), zero).unwrap();
        assert_eq!(kalman_equiv_probe(&pp, 1.0).unwrap(), (false, false));
        assert!(kalman_equiv_probe(&pp, 0.0).is_err());
    }

    #[test]
    fn congruence_keeps_verdict() {
        let q = Mat::from_row_slice(3, 3, &[2.0, 0.3, 0.0, 0.3, 1.0, 0.2, 0.0, 0.2, 0.7]);
        let v = DVector::from_vec(vec![1.0, -1.0, 0.5]);
        let omega = PsdMatrix::new(SymMatrix::outer(&v)).unwrap();
        for p in [0.0, 0.5, 0.75, 1.0, 2.0] {
            let base = wp(p, omega.clone(), PsdMatrix::identity(3));
            let moved = wp(
                p,
                PsdMatrix::new(omega.sym().congruence(&q)).unwrap(),
                PsdMatrix::new(SymMatrix::identity(3).congruence(&q)).unwrap(),
            );
            assert_eq!(classify_wishart(&base), classify_wishart(&moved));
        }
    }
}
