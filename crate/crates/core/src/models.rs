//! Built-in models: a planar abelian system (`abelian_disk`) and a coupled
//! rigid-body system (`so3_coupled`), plus named-parameter instantiation.
//!
//! `abelian_disk`: SO(2) acting by rotation on the punctured plane and on a
//! two-dimensional linear factor, flat metric, radial section. Everything is
//! closed-form, which makes it the reference model for hand-checked values
//! and for the Euler–Lagrange oracle.
//!
//! `so3_coupled`: SO(3) in rotation-vector coordinates acting on
//! `SO(3) × ℝ²` (left multiplication on the group factor, trivially on the
//! base factor) and on `V = ℝ³` by rotation. The kinetic metric carries an
//! orientation-invariant body inertia that depends on the base point, plus a
//! constant coupling between base velocity and body angular velocity; the
//! coupling makes the gauge section non-horizontal, so every curvature and
//! projector term in the reduction is exercised. An optional `twist` bends
//! the section away from the identity-gauge slice to exercise second-order
//! section jets.

use crate::algebra::{self, GroupChart, LieData};
use crate::error::CoreError;
use crate::linalg::Mat;
use crate::model::{Dims, Model};
use crate::scalar::Scalar;
use std::collections::BTreeMap;

/// Declared parameter: name, default, and optional lower bound (exclusive).
#[derive(Clone, Copy, Debug)]
pub struct ParamSpec {
    pub name: &'static str,
    pub default: f64,
    pub min_exclusive: Option<f64>,
    pub doc: &'static str,
}

pub const ABELIAN_DISK_PARAMS: &[ParamSpec] = &[ParamSpec {
    name: "k",
    default: 1.0,
    min_exclusive: Some(0.0),
    doc: "isotropic quadratic potential stiffness",
}];

pub const SO3_COUPLED_PARAMS: &[ParamSpec] = &[
    ParamSpec {
        name: "i1",
        default: 1.0,
        min_exclusive: Some(0.0),
        doc: "principal inertia 1",
    },
    ParamSpec {
        name: "i2",
        default: 1.2,
        min_exclusive: Some(0.0),
        doc: "principal inertia 2",
    },
    ParamSpec {
        name: "i3",
        default: 1.5,
        min_exclusive: Some(0.0),
        doc: "principal inertia 3",
    },
    ParamSpec {
        name: "g",
        default: 0.2,
        min_exclusive: None,
        doc: "base-dependent inertia perturbation (1-2 off-diagonal per unit x¹)",
    },
    ParamSpec {
        name: "lambda",
        default: 0.3,
        min_exclusive: None,
        doc: "base-velocity / body-angular-velocity coupling",
    },
    ParamSpec {
        name: "k1",
        default: 1.0,
        min_exclusive: Some(0.0),
        doc: "linear-factor stiffness",
    },
    ParamSpec {
        name: "k2",
        default: 1.0,
        min_exclusive: Some(0.0),
        doc: "base stiffness",
    },
    ParamSpec {
        name: "k3",
        default: 0.3,
        min_exclusive: None,
        doc: "base/linear cubic coupling",
    },
    ParamSpec {
        name: "twist",
        default: 0.0,
        min_exclusive: None,
        doc: "section twist amplitude (bends the gauge slice)",
    },
];

/// Named scalar parameters for [`instantiate`]; unknown names are rejected
/// against the model's declared list.
#[derive(Clone, Debug, Default)]
pub struct ModelParams(pub BTreeMap<String, f64>);

impl ModelParams {
    pub fn empty() -> Self {
        ModelParams(BTreeMap::new())
    }
    pub fn set(mut self, name: &str, value: f64) -> Self {
        self.0.insert(name.to_string(), value);
        self
    }

    fn resolve(
        &self,
        specs: &[ParamSpec],
        model: &str,
    ) -> Result<BTreeMap<String, f64>, CoreError> {
        for key in self.0.keys() {
            if !specs.iter().any(|s| s.name == key) {
                return Err(CoreError::Config(format!(
                    "unknown parameter `{key}` for model `{model}` (declared: {})",
                    specs.iter().map(|s| s.name).collect::<Vec<_>>().join(", ")
                )));
            }
        }
        let mut out = BTreeMap::new();
        for spec in specs {
            let v = self.0.get(spec.name).copied().unwrap_or(spec.default);
            if let Some(min) = spec.min_exclusive {
                if v <= min {
                    return Err(CoreError::Config(format!(
                        "parameter `{}` of `{model}` must be > {min}, got {v}",
                        spec.name
                    )));
                }
            }
            out.insert(spec.name.to_string(), v);
        }
        Ok(out)
    }
}

/// Built-in model names with their declared parameters.
pub fn builtin_catalog() -> &'static [(&'static str, &'static [ParamSpec])] {
    &[
        ("abelian_disk", ABELIAN_DISK_PARAMS),
        ("so3_coupled", SO3_COUPLED_PARAMS),
    ]
}

/// Builds a built-in model by name with parameter overrides.
pub fn instantiate(name: &str, params: &ModelParams) -> Result<BuiltinModel, CoreError> {
    match name {
        "abelian_disk" => {
            let p = params.resolve(ABELIAN_DISK_PARAMS, name)?;
            Ok(BuiltinModel::AbelianDisk(AbelianDisk { k: p["k"] }))
        }
        "so3_coupled" => {
            let p = params.resolve(SO3_COUPLED_PARAMS, name)?;
            let m = So3Coupled {
                inertia: [p["i1"], p["i2"], p["i3"]],
                g: p["g"],
                lambda: p["lambda"],
                k1: p["k1"],
                k2: p["k2"],
                k3: p["k3"],
                twist: p["twist"],
                lie: LieData::so3_left(),
                chart: GroupChart::So3 {
                    radius: std::f64::consts::PI - 0.1,
                },
            };
            m.validate()?;
            Ok(BuiltinModel::So3Coupled(m))
        }
        other => Err(CoreError::Config(format!(
            "unknown model `{other}` (built-ins: abelian_disk, so3_coupled)"
        ))),
    }
}

/// Dispatch enum over the built-in models.
#[derive(Clone, Debug)]
pub enum BuiltinModel {
    AbelianDisk(AbelianDisk),
    So3Coupled(So3Coupled),
}

macro_rules! dispatch {
    ($self:ident, $m:ident => $body:expr) => {
        match $self {
            BuiltinModel::AbelianDisk($m) => $body,
            BuiltinModel::So3Coupled($m) => $body,
        }
    };
}

impl Model for BuiltinModel {
    fn name(&self) -> &'static str {
        dispatch!(self, m => m.name())
    }
    fn dims(&self) -> Dims {
        dispatch!(self, m => m.dims())
    }
    fn lie(&self) -> &LieData {
        dispatch!(self, m => m.lie())
    }
    fn chart(&self) -> &GroupChart {
        dispatch!(self, m => m.chart())
    }
    fn metric_p<S: Scalar>(&self, q: &[S]) -> Mat<S> {
        dispatch!(self, m => m.metric_p(q))
    }
    fn metric_v<S: Scalar>(&self, f: &[S]) -> Mat<S> {
        dispatch!(self, m => m.metric_v(f))
    }
    fn killing_p<S: Scalar>(&self, q: &[S]) -> Mat<S> {
        dispatch!(self, m => m.killing_p(q))
    }
    fn killing_v<S: Scalar>(&self, f: &[S]) -> Mat<S> {
        dispatch!(self, m => m.killing_v(f))
    }
    fn gauge<S: Scalar>(&self, q: &[S]) -> Vec<S> {
        dispatch!(self, m => m.gauge(q))
    }
    fn section<S: Scalar>(&self, x: &[S]) -> Vec<S> {
        dispatch!(self, m => m.section(x))
    }
    fn section_coords<S: Scalar>(&self, q: &[S]) -> Vec<S> {
        dispatch!(self, m => m.section_coords(q))
    }
    fn potential<S: Scalar>(&self, q: &[S], f: &[S]) -> S {
        dispatch!(self, m => m.potential(q, f))
    }
    fn action_p<S: Scalar>(&self, a: &[S], q: &[S]) -> Vec<S> {
        dispatch!(self, m => m.action_p(a, q))
    }
    fn action_v<S: Scalar>(&self, a: &[S], f: &[S]) -> Vec<S> {
        dispatch!(self, m => m.action_v(a, f))
    }
    fn section_domain(&self, x: &[f64]) -> bool {
        dispatch!(self, m => m.section_domain(x))
    }
    fn p_domain(&self, q: &[f64]) -> bool {
        dispatch!(self, m => m.p_domain(q))
    }
    fn sample_ranges(&self) -> (Vec<(f64, f64)>, Vec<(f64, f64)>) {
        dispatch!(self, m => m.sample_ranges())
    }
    fn default_initial(&self) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
        dispatch!(self, m => m.default_initial())
    }
}

// ---------------------------------------------------------------------------
// abelian_disk
// ---------------------------------------------------------------------------

/// SO(2) rotating the punctured plane and a planar linear factor; flat
/// metric, polar-angle gauge, radial section `Q*(x) = (x, 0)` for `x > 0`.
#[derive(Clone, Debug)]
pub struct AbelianDisk {
    pub k: f64,
}

static SO2_LIE: once_lie::OnceLie = once_lie::OnceLie::new();
static SO2_CHART: GroupChart = GroupChart::So2 {
    radius: std::f64::consts::PI,
};

/// Tiny hand-rolled lazy cell so `lie()` can hand out a `'static` reference
/// without pulling in a sync primitive per model instance.
mod once_lie {
    use crate::algebra::LieData;
    use std::sync::OnceLock;

    pub struct OnceLie(OnceLock<LieData>);
    impl OnceLie {
        pub const fn new() -> Self {
            OnceLie(OnceLock::new())
        }
        pub fn get(&self, dim: usize) -> &LieData {
            self.0.get_or_init(|| LieData::abelian(dim))
        }
    }
}

impl AbelianDisk {
    fn rot<S: Scalar>(a: S) -> Mat<S> {
        let (c, s) = (a.cos(), a.sin());
        Mat::from_rows(&[&[c, -s], &[s, c]])
    }
}

impl Model for AbelianDisk {
    fn name(&self) -> &'static str {
        "abelian_disk"
    }
    fn dims(&self) -> Dims {
        Dims {
            n_p: 2,
            n_g: 1,
            n_v: 2,
            n_x: 1,
        }
    }
    fn lie(&self) -> &LieData {
        SO2_LIE.get(1)
    }
    fn chart(&self) -> &GroupChart {
        &SO2_CHART
    }
    fn metric_p<S: Scalar>(&self, _q: &[S]) -> Mat<S> {
        Mat::identity(2)
    }
    fn metric_v<S: Scalar>(&self, _f: &[S]) -> Mat<S> {
        Mat::identity(2)
    }
    fn killing_p<S: Scalar>(&self, q: &[S]) -> Mat<S> {
        Mat::from_rows(&[&[-q[1]], &[q[0]]])
    }
    fn killing_v<S: Scalar>(&self, f: &[S]) -> Mat<S> {
        Mat::from_rows(&[&[-f[1]], &[f[0]]])
    }
    fn gauge<S: Scalar>(&self, q: &[S]) -> Vec<S> {
        vec![q[1].atan2(q[0])]
    }
    fn section<S: Scalar>(&self, x: &[S]) -> Vec<S> {
        vec![x[0], S::zero()]
    }
    fn section_coords<S: Scalar>(&self, q: &[S]) -> Vec<S> {
        vec![q[0]]
    }
    fn potential<S: Scalar>(&self, q: &[S], f: &[S]) -> S {
        let r2 = q[0] * q[0] + q[1] * q[1] + f[0] * f[0] + f[1] * f[1];
        S::from_f64(0.5 * self.k) * r2
    }
    fn action_p<S: Scalar>(&self, a: &[S], q: &[S]) -> Vec<S> {
        Self::rot(a[0]).matvec(q)
    }
    fn action_v<S: Scalar>(&self, a: &[S], f: &[S]) -> Vec<S> {
        Self::rot(a[0]).matvec(f)
    }
    fn section_domain(&self, x: &[f64]) -> bool {
        x[0] > 1e-6
    }
    fn p_domain(&self, q: &[f64]) -> bool {
        q[0] * q[0] + q[1] * q[1] > 1e-12
    }
    fn sample_ranges(&self) -> (Vec<(f64, f64)>, Vec<(f64, f64)>) {
        (vec![(0.5, 2.0)], vec![(-1.0, 1.0), (-1.0, 1.0)])
    }
    fn default_initial(&self) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
        (
            vec![1.2],
            vec![0.4, 0.3],
            vec![0.2],
            vec![-0.1, 0.2],
            vec![0.25],
        )
    }
}

// ---------------------------------------------------------------------------
// so3_coupled
// ---------------------------------------------------------------------------

/// SO(3) × ℝ² bundle with a rotated ℝ³ linear factor.
///
/// Bundle coordinates are `Q = (q, y)` with `q` the rotation vector and `y`
/// the base pair. The kinetic energy is
/// `½ ω_bᵀ I(y) ω_b + ω_bᵀ C ẏ + ½|ẏ|² + ½|ḟ|²` with body angular velocity
/// `ω_b = T_L(q) q̇`, inertia `I(y) = diag(i1,i2,i3) + g·y¹·(e₁e₂ᵀ+e₂e₁ᵀ)`,
/// and coupling `C = λ·(e₁|e₂)`. Left multiplication acts on `q` only, so the
/// metric is invariant; the coupling tilts the horizontal spaces away from
/// the section, giving the mechanical connection visible base curvature.
#[derive(Clone, Debug)]
pub struct So3Coupled {
    pub inertia: [f64; 3],
    pub g: f64,
    pub lambda: f64,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub twist: f64,
    lie: LieData,
    chart: GroupChart,
}

impl So3Coupled {
    /// Inertia tensor at base point `y`.
    fn inertia_at<S: Scalar>(&self, y: &[S]) -> Mat<S> {
        let mut i = Mat::zeros(3, 3);
        for d in 0..3 {
            i[(d, d)] = S::from_f64(self.inertia[d]);
        }
        let c = S::from_f64(self.g) * y[0];
        i[(0, 1)] += c;
        i[(1, 0)] += c;
        i
    }

    /// Velocity coupling block `C` (3 × 2).
    fn coupling<S: Scalar>(&self) -> Mat<S> {
        let l = S::from_f64(self.lambda);
        let z = S::zero();
        Mat::from_rows(&[&[l, z], &[z, l], &[z, z]])
    }

    /// Section twist `q₀(y)`.
    fn twist_at<S: Scalar>(&self, y: &[S]) -> Vec<S> {
        let t = S::from_f64(self.twist);
        vec![
            t * S::from_f64(0.3) * y[0].sin(),
            t * S::from_f64(0.2) * y[1],
            t * S::from_f64(0.1) * y[0] * y[1],
        ]
    }

    /// PD sanity of the declared parameters over the sampling box.
    fn validate(&self) -> Result<(), CoreError> {
        for corner in [[-1.5f64, -1.5], [1.5, 1.5], [-1.5, 1.5], [1.5, -1.5]] {
            let iy = self.inertia_at(&corner[..1]);
            let mut full = Mat::zeros(5, 5);
            for a in 0..3 {
                for b in 0..3 {
                    full[(a, b)] = iy[(a, b)];
                }
            }
            let c = self.coupling::<f64>();
            for a in 0..3 {
                for j in 0..2 {
                    full[(a, 3 + j)] = c[(a, j)];
                    full[(3 + j, a)] = c[(a, j)];
                }
            }
            full[(3, 3)] = 1.0;
            full[(4, 4)] = 1.0;
            if !crate::linalg::is_positive_definite(&full) {
                return Err(CoreError::Config(format!(
                    "kinetic metric not positive definite at y = {corner:?}; \
                     reduce |g| or |lambda| relative to the inertia"
                )));
            }
        }
        Ok(())
    }
}

impl Model for So3Coupled {
    fn name(&self) -> &'static str {
        "so3_coupled"
    }
    fn dims(&self) -> Dims {
        Dims {
            n_p: 5,
            n_g: 3,
            n_v: 3,
            n_x: 2,
        }
    }
    fn lie(&self) -> &LieData {
        &self.lie
    }
    fn chart(&self) -> &GroupChart {
        &self.chart
    }

    fn metric_p<S: Scalar>(&self, qy: &[S]) -> Mat<S> {
        let (q, y) = (&qy[..3], &qy[3..]);
        let tl = algebra::t_right(q).transpose();
        let iy = self.inertia_at(y);
        let c = self.coupling::<S>();
        let g_qq = tl.transpose().matmul(&iy).matmul(&tl);
        let g_qy = tl.transpose().matmul(&c);
        let mut g = Mat::zeros(5, 5);
        for a in 0..3 {
            for b in 0..3 {
                g[(a, b)] = g_qq[(a, b)];
            }
            for j in 0..2 {
                g[(a, 3 + j)] = g_qy[(a, j)];
                g[(3 + j, a)] = g_qy[(a, j)];
            }
        }
        g[(3, 3)] = S::one();
        g[(4, 4)] = S::one();
        g
    }

    fn metric_v<S: Scalar>(&self, _f: &[S]) -> Mat<S> {
        Mat::identity(3)
    }

    fn killing_p<S: Scalar>(&self, qy: &[S]) -> Mat<S> {
        // Left translation moves q with spatial velocity ξ: q̇ = T_R(q)⁻¹ ξ.
        let k_q = algebra::t_right(&qy[..3]).inverse().unwrap();
        let mut k = Mat::zeros(5, 3);
        for a in 0..3 {
            for al in 0..3 {
                k[(a, al)] = k_q[(a, al)];
            }
        }
        k
    }

    fn killing_v<S: Scalar>(&self, f: &[S]) -> Mat<S> {
        Mat::from_fn(3, 3, |p, mu| {
            let mut acc = S::zero();
            for r in 0..3 {
                let e = algebra::levi_civita(p, mu, r);
                if e != 0.0 {
                    acc += S::from_f64(e) * f[r];
                }
            }
            acc
        })
    }

    fn gauge<S: Scalar>(&self, qy: &[S]) -> Vec<S> {
        let tw = self.twist_at(&qy[3..]);
        (0..3).map(|a| qy[a] - tw[a]).collect()
    }

    fn section<S: Scalar>(&self, x: &[S]) -> Vec<S> {
        let mut q = self.twist_at(x);
        q.push(x[0]);
        q.push(x[1]);
        q
    }

    fn section_coords<S: Scalar>(&self, qy: &[S]) -> Vec<S> {
        vec![qy[3], qy[4]]
    }

    fn potential<S: Scalar>(&self, qy: &[S], f: &[S]) -> S {
        let f2 = f[0] * f[0] + f[1] * f[1] + f[2] * f[2];
        let y2 = qy[3] * qy[3] + qy[4] * qy[4];
        S::from_f64(0.5 * self.k1) * f2
            + S::from_f64(0.5 * self.k2) * y2
            + S::from_f64(self.k3) * qy[3] * f2
    }

    fn action_p<S: Scalar>(&self, a: &[S], qy: &[S]) -> Vec<S> {
        let mut out = self.chart.compose(a, &qy[..3]);
        out.push(qy[3]);
        out.push(qy[4]);
        out
    }

    fn action_v<S: Scalar>(&self, a: &[S], f: &[S]) -> Vec<S> {
        algebra::rotation_matrix(a).matvec(f)
    }

    fn section_domain(&self, x: &[f64]) -> bool {
        x.iter().all(|v| v.abs() < 3.0)
    }

    fn p_domain(&self, qy: &[f64]) -> bool {
        let q2: f64 = qy[..3].iter().map(|v| v * v).sum();
        q2.sqrt() < self.chart.radius() && qy[3..].iter().all(|v| v.abs() < 3.0)
    }

    fn sample_ranges(&self) -> (Vec<(f64, f64)>, Vec<(f64, f64)>) {
        (
            vec![(-1.0, 1.0), (-1.0, 1.0)],
            vec![(-1.0, 1.0), (-1.0, 1.0), (-1.0, 1.0)],
        )
    }

    fn default_initial(&self) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
        (
            vec![0.3, -0.2],
            vec![0.2, 0.1, -0.1],
            vec![0.1, 0.15],
            vec![0.05, -0.1, 0.1],
            vec![0.1, -0.15, 0.1],
        )
    }
}
