//! Maps from raw alignment scores onto the probability simplex.
//!
//! Three projections are provided: softmax, sparsemax (Euclidean projection)
//! and sparsegen, whose sparsity is tuned by `lambda < 1`. Each comes with a
//! vector-Jacobian product used by the tape. On the measure-zero set where a
//! coordinate sits exactly on a support boundary, the backward rule uses the
//! support found by the forward pass (an element of the generalized
//! Jacobian).

use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Elementwise map applied to scores before the sparsegen projection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum ScoreTransform {
    #[default]
    Identity,
    Tanh,
}

impl ScoreTransform {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            ScoreTransform::Identity => z,
            ScoreTransform::Tanh => libm::tanh(z),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "lowercase"))]
pub enum ProjectionKind {
    Softmax,
    Sparsemax,
    Sparsegen {
        lambda: f64,
        #[cfg_attr(feature = "serde", serde(default))]
        transform: ScoreTransform,
    },
}

impl ProjectionKind {
    pub fn sparsegen(lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        Ok(ProjectionKind::Sparsegen { lambda, transform: ScoreTransform::Identity })
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            ProjectionKind::Sparsegen { lambda, .. } => check_lambda(lambda),
            _ => Ok(()),
        }
    }

    /// Sparsity parameter; sparsemax is sparsegen at zero.
    pub fn lambda(&self) -> Option<f64> {
        match *self {
            ProjectionKind::Softmax => None,
            ProjectionKind::Sparsemax => Some(0.0),
            ProjectionKind::Sparsegen { lambda, .. } => Some(lambda),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ProjectionKind::Softmax => "softmax",
            ProjectionKind::Sparsemax => "sparsemax",
            ProjectionKind::Sparsegen { .. } => "sparsegen",
        }
    }

    pub fn project(&self, z: &[f64]) -> Result<SimplexPoint> {
        match *self {
            ProjectionKind::Softmax => softmax(z),
            ProjectionKind::Sparsemax => sparsemax(z),
            ProjectionKind::Sparsegen { lambda, transform } => sparsegen(z, lambda, transform),
        }
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda < 1.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidLambda(lambda))
    }
}

/// A point of the probability simplex together with its support.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexPoint {
    p: Vec<f64>,
    support: Vec<usize>,
}

impl SimplexPoint {
    /// Wraps `p`, checking nonnegativity and unit sum to within `1e-10`.
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::EmptyInput { op: "SimplexPoint" });
        }
        let sum: f64 = p.iter().sum();
        if p.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) || (sum - 1.0).abs() > 1e-10 {
            return Err(Error::ShapeMismatch {
                op: "SimplexPoint",
                detail: alloc::format!("not on the simplex (sum {sum})"),
            });
        }
        Ok(Self::from_raw(p))
    }

    pub(crate) fn from_raw(p: Vec<f64>) -> Self {
        let support = p.iter().enumerate().filter(|(_, &v)| v > 0.0).map(|(i, _)| i).collect();
        SimplexPoint { p, support }
    }

    pub fn values(&self) -> &[f64] {
        &self.p
    }

    pub fn into_values(self) -> Vec<f64> {
        self.p
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    pub fn one_hot(n: usize, index: usize) -> Self {
        let mut p = alloc::vec![0.0; n];
        p[index] = 1.0;
        Self::from_raw(p)
    }

    pub fn uniform(n: usize) -> Self {
        Self::from_raw(alloc::vec![1.0 / n as f64; n])
    }
}

fn check_input(op: &'static str, z: &[f64]) -> Result<()> {
    if z.is_empty() {
        return Err(Error::EmptyInput { op });
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { op });
    }
    Ok(())
}

pub fn softmax(z: &[f64]) -> Result<SimplexPoint> {
    check_input("softmax", z)?;
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|&v| libm::exp(v - max)).collect();
    let total: f64 = exps.iter().sum();
    Ok(SimplexPoint::from_raw(exps.into_iter().map(|e| e / total).collect()))
}

/// Threshold `tau` such that `max(z - tau, 0)` sums to one.
pub fn sparsemax_threshold(z: &[f64]) -> Result<f64> {
    check_input("sparsemax", z)?;
    let mut sorted = z.to_vec();
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut support_sum = sorted[0];
    let mut k_z = 1usize;
    for (idx, &v) in sorted.iter().enumerate() {
        cumsum += v;
        let k = idx + 1;
        if 1.0 + k as f64 * v > cumsum {
            k_z = k;
            support_sum = cumsum;
        }
    }
    Ok((support_sum - 1.0) / k_z as f64)
}

pub fn sparsemax(z: &[f64]) -> Result<SimplexPoint> {
    let tau = sparsemax_threshold(z)?;
    let mut p: Vec<f64> = z.iter().map(|&v| f64::max(v - tau, 0.0)).collect();
    // a lone support entry is exactly 1, whatever `z_k - tau` rounds to
    if let [k] = p.iter().enumerate().filter(|(_, &v)| v > 0.0).map(|(i, _)| i).collect::<Vec<_>>()[..] {
        p[k] = 1.0;
    }
    Ok(SimplexPoint::from_raw(p))
}

/// `argmin_{p in simplex} ||p - g(z)||^2 - lambda ||p||^2`, evaluated as
/// `sparsemax(g(z) / (1 - lambda))`.
pub fn sparsegen(z: &[f64], lambda: f64, transform: ScoreTransform) -> Result<SimplexPoint> {
    check_lambda(lambda)?;
    check_input("sparsegen", z)?;
    let scale = 1.0 - lambda;
    let scaled: Vec<f64> = z.iter().map(|&v| transform.apply(v) / scale).collect();
    sparsemax(&scaled)
}

/// Vector-Jacobian product `J^T upstream` of the projection at `p`.
///
/// Sparsegen with a `tanh` transform is not handled here: the tape expresses
/// it as an explicit `tanh` followed by an identity-transform sparsegen.
pub fn projection_vjp(kind: &ProjectionKind, p: &SimplexPoint, upstream: &[f64]) -> Result<Vec<f64>> {
    if upstream.len() != p.len() {
        return Err(Error::ShapeMismatch {
            op: "projection_vjp",
            detail: alloc::format!("upstream {} vs p {}", upstream.len(), p.len()),
        });
    }
    match *kind {
        ProjectionKind::Softmax => {
            let pv: f64 = p.values().iter().zip(upstream).map(|(a, b)| a * b).sum();
            Ok(p.values().iter().zip(upstream).map(|(&pi, &vi)| pi * (vi - pv)).collect())
        }
        ProjectionKind::Sparsemax => Ok(sparsemax_vjp(p, upstream, 1.0)),
        ProjectionKind::Sparsegen { lambda, transform } => {
            check_lambda(lambda)?;
            if transform != ScoreTransform::Identity {
                return Err(Error::Config("projection_vjp: compose tanh separately".into()));
            }
            Ok(sparsemax_vjp(p, upstream, 1.0 / (1.0 - lambda)))
        }
    }
}

fn sparsemax_vjp(p: &SimplexPoint, upstream: &[f64], scale: f64) -> Vec<f64> {
    let support = p.support();
    let mean = support.iter().map(|&i| upstream[i]).sum::<f64>() / support.len() as f64;
    let mut out = alloc::vec![0.0; p.len()];
    for &i in support {
        out[i] = scale * (upstream[i] - mean);
    }
    out
}

pub mod oracle {
    //! Brute-force reference for the sparse projections.
    //!
    //! Every non-empty support is tried; on each, the equality-constrained
    //! quadratic is solved from its KKT system by Gaussian elimination and the
    //! feasible solution of least objective is kept.

    use alloc::vec;
    use alloc::vec::Vec;

    use super::SimplexPoint;
    use crate::error::{Error, Result};

    pub const MAX_DIM: usize = 12;

    /// Exact minimiser of `||p - z||^2 - lambda ||p||^2` over the simplex.
    pub fn simplex_qp_oracle(z: &[f64], lambda: f64) -> Result<SimplexPoint> {
        let n = z.len();
        if n == 0 {
            return Err(Error::EmptyInput { op: "simplex_qp_oracle" });
        }
        if n > MAX_DIM {
            return Err(Error::TooLarge { op: "simplex_qp_oracle", n, max: MAX_DIM });
        }
        super::check_lambda(lambda)?;
        let objective = |p: &[f64]| -> f64 {
            p.iter().zip(z).map(|(pi, zi)| (pi - zi) * (pi - zi) - lambda * pi * pi).sum()
        };
        let mut best: Option<(f64, Vec<f64>)> = None;
        for mask in 1u32..(1u32 << n) {
            let idx: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
            let Some(sol) = solve_on_support(z, lambda, &idx) else { continue };
            if sol.iter().any(|&v| v < -1e-13) {
                continue;
            }
            let mut p = vec![0.0; n];
            for (&i, &v) in idx.iter().zip(&sol) {
                p[i] = v.max(0.0);
            }
            let obj = objective(&p);
            if best.as_ref().map_or(true, |(b, _)| obj < *b) {
                best = Some((obj, p));
            }
        }
        let (_, p) = best.expect("singleton supports are always feasible");
        Ok(SimplexPoint::from_raw(p))
    }

    // Stationarity 2(1 - lambda) p_i + mu = 2 z_i for i in S, plus sum p_S = 1.
    fn solve_on_support(z: &[f64], lambda: f64, support: &[usize]) -> Option<Vec<f64>> {
        let k = support.len();
        let dim = k + 1;
        let mut a = vec![vec![0.0; dim + 1]; dim];
        for (r, &i) in support.iter().enumerate() {
            a[r][r] = 2.0 * (1.0 - lambda);
            a[r][k] = 1.0;
            a[r][dim] = 2.0 * z[i];
        }
        for c in 0..k {
            a[k][c] = 1.0;
        }
        a[k][dim] = 1.0;
        let x = gaussian_elimination(a)?;
        Some(x[..k].to_vec())
    }

    fn gaussian_elimination(mut a: Vec<Vec<f64>>) -> Option<Vec<f64>> {
        let n = a.len();
        for col in 0..n {
            let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
            if a[pivot][col].abs() < 1e-14 {
                return None;
            }
            a.swap(col, pivot);
            for row in 0..n {
                if row == col {
                    continue;
                }
                let factor = a[row][col] / a[col][col];
                if factor == 0.0 {
                    continue;
                }
                for c in col..=n {
                    a[row][c] -= factor * a[col][c];
                }
            }
        }
        Some((0..n).map(|i| a[i][n] / a[i][i]).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::oracle::simplex_qp_oracle;
    use super::*;
    use proptest::prelude::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn softmax_examples() {
        assert!(close(softmax(&[0.0, 0.0]).unwrap().values(), &[0.5, 0.5], 1e-15));
        let p = softmax(&[0.0, libm::log(3.0)]).unwrap();
        assert!(close(p.values(), &[0.25, 0.75], 1e-15));
        assert!(softmax(&[]).is_err());
    }

    #[test]
    fn sparsemax_examples() {
        assert_eq!(sparsemax(&[2.0, 0.0]).unwrap().values(), &[1.0, 0.0]);
        let z = [0.5, 0.2, -0.1];
        let tau = sparsemax_threshold(&z).unwrap();
        assert!((tau + 0.4 / 3.0).abs() < 1e-15);
        let p = sparsemax(&z).unwrap();
        assert!(close(p.values(), &[0.5 + 0.4 / 3.0, 0.2 + 0.4 / 3.0, -0.1 + 0.4 / 3.0], 1e-15));
        // the oracle (independent KKT enumeration) agrees
        let o = simplex_qp_oracle(&z, 0.0).unwrap();
        assert!(close(p.values(), o.values(), 1e-12));
        assert_eq!(simplex_qp_oracle(&[2.0, 0.0], 0.0).unwrap().values(), &[1.0, 0.0]);
        let feasible = [0.2, 0.3, 0.5];
        assert!(close(sparsemax(&feasible).unwrap().values(), &feasible, 1e-15));
        assert!(sparsemax(&[]).is_err());
    }

    #[test]
    fn sparsegen_examples() {
        let z = [0.5, 0.2, -0.1];
        let p = sparsegen(&z, 0.5, ScoreTransform::Identity).unwrap();
        assert!(close(p.values(), &[0.8, 0.2, 0.0], 1e-12));
        let o = simplex_qp_oracle(&z, 0.5).unwrap();
        assert!(close(p.values(), o.values(), 1e-12));
        assert_eq!(p.support(), &[0, 1]);
        assert!(sparsegen(&z, 1.0, ScoreTransform::Identity).is_err());
        assert!(ProjectionKind::sparsegen(1.5).is_err());
    }

    #[test]
    fn sparsegen_at_zero_is_sparsemax() {
        let z = [0.3, -1.2, 0.25, 0.9];
        assert_eq!(
            sparsegen(&z, 0.0, ScoreTransform::Identity).unwrap(),
            sparsemax(&z).unwrap()
        );
    }

    #[test]
    fn vjp_examples() {
        let p = SimplexPoint::new(alloc::vec![0.5, 0.5]).unwrap();
        let g = projection_vjp(&ProjectionKind::Softmax, &p, &[1.0, 0.0]).unwrap();
        assert!(close(&g, &[0.25, -0.25], 1e-15));
        let p = SimplexPoint::new(alloc::vec![0.4, 0.6, 0.0]).unwrap();
        let g = projection_vjp(&ProjectionKind::Sparsemax, &p, &[1.0, 0.0, 5.0]).unwrap();
        assert!(close(&g, &[0.5, -0.5, 0.0], 1e-15));
        assert!(projection_vjp(&ProjectionKind::Sparsemax, &p, &[1.0]).is_err());
        let sg = ProjectionKind::sparsegen(0.5).unwrap();
        let g = projection_vjp(&sg, &p, &[1.0, 0.0, 5.0]).unwrap();
        assert!(close(&g, &[1.0, -1.0, 0.0], 1e-15));
    }

    #[test]
    fn tanh_transform_bounds_input() {
        let p = sparsegen(&[100.0, 99.0], 0.0, ScoreTransform::Tanh).unwrap();
        // tanh saturates both scores to ~1, so the projection is ~uniform
        assert!(close(p.values(), &[0.5, 0.5], 1e-12));
    }

    #[test]
    fn oracle_rejects_large_n() {
        assert!(simplex_qp_oracle(&[0.0; 13], 0.0).is_err());
    }

    fn kinds() -> impl Strategy<Value = ProjectionKind> {
        prop_oneof![
            Just(ProjectionKind::Softmax),
            Just(ProjectionKind::Sparsemax),
            (-5.0f64..0.95).prop_map(|l| ProjectionKind::sparsegen(l).unwrap()),
        ]
    }

    proptest! {
        #[test]
        fn outputs_lie_on_simplex(z in prop::collection::vec(-20.0f64..20.0, 1..16), kind in kinds()) {
            let p = kind.project(&z).unwrap();
            let sum: f64 = p.values().iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
            prop_assert!(p.values().iter().all(|&v| v >= 0.0));
            if kind == ProjectionKind::Softmax {
                prop_assert!(z.iter().any(|v| (v - z[0]).abs() > 700.0) || p.values().iter().all(|&v| v > 0.0));
            }
        }

        #[test]
        fn permutation_equivariant(z in prop::collection::vec(-5.0f64..5.0, 2..10), kind in kinds(), seed in any::<u64>()) {
            let n = z.len();
            let mut perm: Vec<usize> = (0..n).collect();
            let mut s = seed;
            for i in (1..n).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                perm.swap(i, (s >> 33) as usize % (i + 1));
            }
            let zp: Vec<f64> = perm.iter().map(|&i| z[i]).collect();
            let p = kind.project(&z).unwrap();
            let pp = kind.project(&zp).unwrap();
            for (k, &i) in perm.iter().enumerate() {
                prop_assert!((pp.values()[k] - p.values()[i]).abs() < 1e-12);
            }
        }

        #[test]
        fn shift_invariant(z in prop::collection::vec(-5.0f64..5.0, 1..10), c in -10.0f64..10.0) {
            let shifted: Vec<f64> = z.iter().map(|v| v + c).collect();
            prop_assert!(close(sparsemax(&z).unwrap().values(), sparsemax(&shifted).unwrap().values(), 1e-12));
            prop_assert!(close(softmax(&z).unwrap().values(), softmax(&shifted).unwrap().values(), 1e-12));
        }

        #[test]
        fn vjp_tangent_to_simplex(z in prop::collection::vec(-3.0f64..3.0, 1..10), v in prop::collection::vec(-3.0f64..3.0, 10), kind in kinds()) {
            let p = kind.project(&z).unwrap();
            let g = projection_vjp(&kind, &p, &v[..z.len()]).unwrap();
            prop_assert!(g.iter().sum::<f64>().abs() < 1e-10);
        }

        #[test]
        fn support_shrinks_with_lambda(z in prop::collection::vec(-2.0f64..2.0, 2..12)) {
            let mut last = usize::MAX;
            for lambda in [-10.0, -1.0, 0.0, 0.5, 0.9] {
                let k = sparsegen(&z, lambda, ScoreTransform::Identity).unwrap().support().len();
                prop_assert!(k <= last);
                last = k;
            }
        }
    }
}
