//! Jets of smooth maps: values, Jacobians, and Hessians through dual numbers,
//! with a central-difference cross-check.

use crate::error::CoreError;
use crate::linalg::{Mat, Tensor3};
use crate::scalar::{seed1, seed2, Scalar};

/// A smooth map `ℝⁿ → ℝᵐ` that can be evaluated over any [`Scalar`].
///
/// Implementors write `eval` once; jets and finite-difference checks come for
/// free from the generic evaluation.
pub trait SmoothMap {
    fn in_dim(&self) -> usize;
    fn out_dim(&self) -> usize;
    fn eval<S: Scalar>(&self, x: &[S]) -> Vec<S>;
    /// Domain predicate; `evaluate_jet` rejects points outside it.
    fn contains(&self, _x: &[f64]) -> bool {
        true
    }
}

/// Adapter turning a [`GenericFn`] (a callable generic over the scalar, which
/// plain `Fn` closures can't express) into a [`SmoothMap`] with declared
/// dimensions.
pub struct FnMap<F> {
    pub in_dim: usize,
    pub out_dim: usize,
    pub f: F,
}

impl<F> SmoothMap for FnMap<F>
where
    F: GenericFn,
{
    fn in_dim(&self) -> usize {
        self.in_dim
    }
    fn out_dim(&self) -> usize {
        self.out_dim
    }
    fn eval<S: Scalar>(&self, x: &[S]) -> Vec<S> {
        self.f.call(x)
    }
}

/// Object-safe-free helper for closures generic in the scalar type.
pub trait GenericFn {
    fn call<S: Scalar>(&self, x: &[S]) -> Vec<S>;
}

/// Value, Jacobian, and Hessian of a map at a point.
///
/// `jacobian[(r, j)] = ∂f_r/∂x_j`, `hessian[[r, j, k]] = ∂²f_r/∂x_j∂x_k`.
/// For order-1 jets the Hessian is present but zero.
#[derive(Clone, Debug)]
pub struct Jet2 {
    pub value: Vec<f64>,
    pub jacobian: Mat<f64>,
    pub hessian: Tensor3<f64>,
}

/// Evaluates the jet of `map` at `x` to the requested order (1 or 2).
///
/// First derivatives come from one dual evaluation per input direction;
/// second derivatives from nested duals, one evaluation per ordered pair, so
/// Hessian symmetry is a genuine check on the arithmetic rather than true by
/// construction.
pub fn evaluate_jet<M: SmoothMap>(map: &M, x: &[f64], order: u8) -> Result<Jet2, CoreError> {
    let n = map.in_dim();
    let m = map.out_dim();
    if x.len() != n {
        return Err(CoreError::shape(format!(
            "jet point has {} coordinates, map expects {n}",
            x.len()
        )));
    }
    if !map.contains(x) {
        return Err(CoreError::domain(format!(
            "jet point {x:?} outside the map's domain"
        )));
    }
    if order == 0 || order > 2 {
        return Err(CoreError::Config(format!(
            "jet order must be 1 or 2, got {order}"
        )));
    }

    let value: Vec<f64> = map.eval(x).iter().map(|s| s.value()).collect();
    if value.len() != m {
        return Err(CoreError::shape(format!(
            "map produced {} outputs, declared {m}",
            value.len()
        )));
    }

    let mut jacobian = Mat::zeros(m, n);
    for j in 0..n {
        let out = map.eval(&seed1(x, j));
        for r in 0..m {
            jacobian[(r, j)] = out[r].du;
        }
    }

    let mut hessian = Tensor3::zeros(m, n, n);
    if order == 2 {
        for j in 0..n {
            for k in 0..n {
                let out = map.eval(&seed2(x, j, k));
                for r in 0..m {
                    hessian[[r, j, k]] = out[r].du.du;
                }
            }
        }
    }

    Ok(Jet2 {
        value,
        jacobian,
        hessian,
    })
}

/// Central-difference Jacobian with step `h`.
pub fn fd_jacobian<M: SmoothMap>(map: &M, x: &[f64], h: f64) -> Mat<f64> {
    let n = map.in_dim();
    let m = map.out_dim();
    let mut jac = Mat::zeros(m, n);
    let mut xp = x.to_vec();
    for j in 0..n {
        xp[j] = x[j] + h;
        let fp: Vec<f64> = map.eval(&xp).iter().map(|s| s.value()).collect();
        xp[j] = x[j] - h;
        let fm: Vec<f64> = map.eval(&xp).iter().map(|s| s.value()).collect();
        xp[j] = x[j];
        for r in 0..m {
            jac[(r, j)] = (fp[r] - fm[r]) / (2.0 * h);
        }
    }
    jac
}

/// Max relative deviation between the dual-number Jacobian and central
/// differences, `|ad − fd| / max(1, |ad|)` per entry.
pub fn fd_check<M: SmoothMap>(map: &M, x: &[f64], h: f64) -> Result<f64, CoreError> {
    let jet = evaluate_jet(map, x, 1)?;
    let fd = fd_jacobian(map, x, h);
    let mut worst = 0.0f64;
    for r in 0..map.out_dim() {
        for j in 0..map.in_dim() {
            let a = jet.jacobian[(r, j)];
            let d = (a - fd[(r, j)]).abs() / a.abs().max(1.0);
            worst = worst.max(d);
        }
    }
    Ok(worst)
}

/// Max |H_rjk − H_rkj| over the Hessian: zero for clean arithmetic.
pub fn hessian_symmetry_defect(jet: &Jet2) -> f64 {
    let [m, n, _] = jet.hessian.dims();
    let mut worst = 0.0f64;
    for r in 0..m {
        for j in 0..n {
            for k in (j + 1)..n {
                worst = worst.max((jet.hessian[[r, j, k]] - jet.hessian[[r, k, j]]).abs());
            }
        }
    }
    worst
}
