//! The bundle-model contract: everything the geometry layer needs to know
//! about a concrete symmetric mechanical system.
//!
//! A model describes a configuration space `P × V` — a principal-bundle part
//! with points `Q` (group chart coordinates and base coordinates mixed) and a
//! linear part with points `f` — acted on by a group `G`, together with a
//! block-diagonal kinetic metric `G_P ⊕ G_V`, the action's Killing fields on
//! both factors, a gauge function `χ` cutting out a section, the section map
//! `x ↦ Q*(x)` with its inverse on the section, and an invariant potential.
//! All maps are generic over [`Scalar`] so jets come from dual evaluation.

use crate::algebra::{GroupChart, LieData};
use crate::calculus::SmoothMap;
use crate::linalg::Mat;
use crate::scalar::Scalar;

/// Dimension bookkeeping: `n_x = n_p − n_g` base coordinates, `n_v` linear
/// coordinates, `n_g` group coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Dims {
    pub n_p: usize,
    pub n_g: usize,
    pub n_v: usize,
    pub n_x: usize,
}

impl Dims {
    /// Reduced configuration dimension `(x, f̃)`.
    pub fn n_z(&self) -> usize {
        self.n_x + self.n_v
    }
    /// Full configuration dimension `(Q, f)`.
    pub fn n_w(&self) -> usize {
        self.n_p + self.n_v
    }
    /// Reduced state dimension `(x, f̃, ẋ, f̃̇, p)`.
    pub fn n_state(&self) -> usize {
        2 * self.n_z() + self.n_g
    }
}

pub trait Model {
    fn name(&self) -> &'static str;
    fn dims(&self) -> Dims;
    fn lie(&self) -> &LieData;
    fn chart(&self) -> &GroupChart;

    /// Kinetic metric on the bundle factor at `q` (`n_p × n_p`).
    fn metric_p<S: Scalar>(&self, q: &[S]) -> Mat<S>;
    /// Kinetic metric on the linear factor at `f` (`n_v × n_v`).
    fn metric_v<S: Scalar>(&self, f: &[S]) -> Mat<S>;
    /// Killing fields on the bundle factor, column `α` = `K^A_α` (`n_p × n_g`).
    fn killing_p<S: Scalar>(&self, q: &[S]) -> Mat<S>;
    /// Killing fields on the linear factor (`n_v × n_g`).
    fn killing_v<S: Scalar>(&self, f: &[S]) -> Mat<S>;
    /// Gauge function `χ`; the section is its zero set (`n_g` values).
    fn gauge<S: Scalar>(&self, q: &[S]) -> Vec<S>;
    /// Section map `x ↦ Q*(x)` (`n_p` values).
    fn section<S: Scalar>(&self, x: &[S]) -> Vec<S>;
    /// Inverse of the section map on its image: recovers `x` from an
    /// on-section point.
    fn section_coords<S: Scalar>(&self, q: &[S]) -> Vec<S>;
    /// Invariant potential.
    fn potential<S: Scalar>(&self, q: &[S], f: &[S]) -> S;
    /// Group action on the bundle factor, `Q ↦ a·Q`.
    fn action_p<S: Scalar>(&self, a: &[S], q: &[S]) -> Vec<S>;
    /// Group action on the linear factor, `f ↦ ρ(a)f`.
    fn action_v<S: Scalar>(&self, a: &[S], f: &[S]) -> Vec<S>;

    /// Validity of a base point for the section map.
    fn section_domain(&self, x: &[f64]) -> bool;
    /// Validity of a bundle point (chart radius, excluded strata, ...).
    fn p_domain(&self, q: &[f64]) -> bool;

    /// Coordinate boxes for sampling valid `(x, f̃)` check points.
    fn sample_ranges(&self) -> (Vec<(f64, f64)>, Vec<(f64, f64)>);
    /// A representative reduced initial state `(x, f̃, ẋ, f̃̇, p)` used as the
    /// simulation default.
    fn default_initial(&self) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>);
}

// ---------------------------------------------------------------------------
// SmoothMap adapters over the model's maps, for jets and fd checks
// ---------------------------------------------------------------------------

macro_rules! model_map {
    ($name:ident, $in:expr, $out:expr, $eval:expr, $dom:expr) => {
        pub struct $name<'a, M: Model>(pub &'a M);
        impl<'a, M: Model> SmoothMap for $name<'a, M> {
            fn in_dim(&self) -> usize {
                ($in)(self.0.dims())
            }
            fn out_dim(&self) -> usize {
                let d = self.0.dims();
                ($out)(d)
            }
            fn eval<S: Scalar>(&self, x: &[S]) -> Vec<S> {
                ($eval)(self.0, x)
            }
            fn contains(&self, x: &[f64]) -> bool {
                ($dom)(self.0, x)
            }
        }
    };
}

fn flatten<S: Scalar>(m: &Mat<S>) -> Vec<S> {
    let mut out = Vec::with_capacity(m.rows() * m.cols());
    for i in 0..m.rows() {
        for j in 0..m.cols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

model_map!(
    MetricPMap,
    |d: Dims| d.n_p,
    |d: Dims| d.n_p * d.n_p,
    |m: &M, q: &[S]| flatten(&m.metric_p(q)),
    |m: &M, q: &[f64]| m.p_domain(q)
);

model_map!(
    MetricVMap,
    |d: Dims| d.n_v,
    |d: Dims| d.n_v * d.n_v,
    |m: &M, f: &[S]| flatten(&m.metric_v(f)),
    |_m: &M, _f: &[f64]| true
);

model_map!(
    KillingPMap,
    |d: Dims| d.n_p,
    |d: Dims| d.n_p * d.n_g,
    |m: &M, q: &[S]| flatten(&m.killing_p(q)),
    |m: &M, q: &[f64]| m.p_domain(q)
);

model_map!(
    KillingVMap,
    |d: Dims| d.n_v,
    |d: Dims| d.n_v * d.n_g,
    |m: &M, f: &[S]| flatten(&m.killing_v(f)),
    |_m: &M, _f: &[f64]| true
);

model_map!(
    GaugeMap,
    |d: Dims| d.n_p,
    |d: Dims| d.n_g,
    |m: &M, q: &[S]| m.gauge(q),
    |m: &M, q: &[f64]| m.p_domain(q)
);

model_map!(
    SectionMap,
    |d: Dims| d.n_x,
    |d: Dims| d.n_p,
    |m: &M, x: &[S]| m.section(x),
    |m: &M, x: &[f64]| m.section_domain(x)
);

// Potential as a map on the joint configuration (Q, f).
model_map!(
    PotentialMap,
    |d: Dims| d.n_p + d.n_v,
    |_d: Dims| 1,
    |m: &M, w: &[S]| {
        let np = m.dims().n_p;
        vec![m.potential(&w[..np], &w[np..])]
    },
    |m: &M, w: &[f64]| m.p_domain(&w[..m.dims().n_p])
);

/// All first-order-checkable maps of a model, for derivative cross-checks.
pub fn fd_checkable_maps<'a, M: Model>(
    model: &'a M,
) -> Vec<(&'static str, Box<dyn CheckableMap + 'a>)> {
    vec![
        ("metric_p", Box::new(MetricPMap(model))),
        ("metric_v", Box::new(MetricVMap(model))),
        ("killing_p", Box::new(KillingPMap(model))),
        ("killing_v", Box::new(KillingVMap(model))),
        ("gauge", Box::new(GaugeMap(model))),
        ("section", Box::new(SectionMap(model))),
        ("potential", Box::new(PotentialMap(model))),
    ]
}

/// Object-safe view of a [`SmoothMap`] restricted to what the fd check needs.
pub trait CheckableMap {
    fn fd_deviation(&self, x: &[f64], h: f64) -> Result<f64, crate::error::CoreError>;
    fn in_dim(&self) -> usize;
    fn contains(&self, x: &[f64]) -> bool;
}

impl<T: SmoothMap> CheckableMap for T {
    fn fd_deviation(&self, x: &[f64], h: f64) -> Result<f64, crate::error::CoreError> {
        crate::calculus::fd_check(self, x, h)
    }
    fn in_dim(&self) -> usize {
        SmoothMap::in_dim(self)
    }
    fn contains(&self, x: &[f64]) -> bool {
        SmoothMap::contains(self, x)
    }
}
