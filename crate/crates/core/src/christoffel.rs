//! Christoffel symbols of the reduced kinetic metric, their raising through
//! the closed-form inverse blocks, and the identity suite that cross-checks
//! the reduced symbols against full-space geometry through the projectors.
//!
//! Conventions: `lowered[[j̃, k̃, l̃]] = ½(∂_j̃ h̃_{k̃l̃} + ∂_k̃ h̃_{j̃l̃} − ∂_l̃ h̃_{j̃k̃})`
//! is symmetric in the first two slots with the *last* slot lowered;
//! `raised[[ĩ, j̃, k̃]] = h̃^{ĩl̃} lowered[[j̃, k̃, l̃]]`. All reduced indices run
//! over `z = (x, f̃)`.

use crate::bundle::{block_metric, block_metric_lower_at, gh_full_at, section_jet};
use crate::error::CoreError;
use crate::linalg::{Mat, Tensor3};
use crate::model::Model;
use crate::report::CheckReport;
use crate::scalar::seed1;

/// Christoffel symbols of the reduced metric at one point.
#[derive(Clone, Debug)]
pub struct ChristoffelSet {
    pub lowered: Tensor3<f64>,
    pub raised: Tensor3<f64>,
}

pub fn christoffels<M: Model>(m: &M, x: &[f64], f: &[f64]) -> Result<ChristoffelSet, CoreError> {
    let d = m.dims();
    let n_z = d.n_z();
    let mut z0 = x.to_vec();
    z0.extend_from_slice(f);

    // ∂_k̃ h̃_{ĩj̃}, one dual lane per reduced direction.
    let mut dh = Tensor3::zeros(n_z, n_z, n_z);
    for k in 0..n_z {
        let zd = seed1(&z0, k);
        let h = block_metric_lower_at(m, &zd[..d.n_x], &zd[d.n_x..])?;
        for i in 0..n_z {
            for j in 0..n_z {
                dh[[k, i, j]] = h[(i, j)].du;
            }
        }
    }
    let lowered = Tensor3::from_fn(n_z, n_z, n_z, |j, k, l| {
        0.5 * (dh[[k, j, l]] + dh[[j, k, l]] - dh[[l, j, k]])
    });
    let upper = block_metric(m, x, f)?.upper;
    let raised = raise(&lowered, &upper);
    Ok(ChristoffelSet { lowered, raised })
}

fn raise(lowered: &Tensor3<f64>, upper: &Mat<f64>) -> Tensor3<f64> {
    let n_z = upper.rows();
    Tensor3::from_fn(n_z, n_z, n_z, |i, j, k| {
        let mut acc = 0.0;
        for l in 0..n_z {
            acc += upper[(i, l)] * lowered[[j, k, l]];
        }
        acc
    })
}

/// Raising through a numeric inversion of the assembled reduced metric —
/// the independent oracle for the closed-form inverse blocks.
pub fn raised_by_numeric_inverse<M: Model>(
    m: &M,
    x: &[f64],
    f: &[f64],
) -> Result<Tensor3<f64>, CoreError> {
    let set = christoffels(m, x, f)?;
    let lower = block_metric(m, x, f)?.lower;
    let upper = lower
        .inverse()
        .map_err(|_| CoreError::degenerate("reduced metric singular"))?;
    Ok(raise(&set.lowered, &upper))
}

/// Lowered Christoffel symbols of the joint-space horizontal metric `G̃^H`
/// over `(Q, f)` coordinates, same slot conventions. Identity-suite support;
/// not on the dynamics path.
pub fn full_horizontal_christoffels<M: Model>(
    m: &M,
    q: &[f64],
    f: &[f64],
) -> Result<Tensor3<f64>, CoreError> {
    let d = m.dims();
    let n_w = d.n_w();
    let mut w0 = q.to_vec();
    w0.extend_from_slice(f);
    let mut dg = Tensor3::zeros(n_w, n_w, n_w);
    for r in 0..n_w {
        let wd = seed1(&w0, r);
        let g = gh_full_at(m, &wd[..d.n_p], &wd[d.n_p..])?;
        for a in 0..n_w {
            for b in 0..n_w {
                dg[[r, a, b]] = g[(a, b)].du;
            }
        }
    }
    Ok(Tensor3::from_fn(n_w, n_w, n_w, |r, s, p| {
        0.5 * (dg[[s, r, p]] + dg[[r, s, p]] - dg[[p, r, s]])
    }))
}

/// Runs the Christoffel cross-check identities at the given reduced sample
/// points and folds the residuals into a [`CheckReport`].
///
/// The identities, all exact statements about the construction:
/// - `christoffel_symmetry`: `Γ_{j̃k̃l̃} = Γ_{k̃j̃l̃}`.
/// - `christoffel_raising_oracle`: closed-form inverse blocks against
///   numeric inversion.
/// - `identity_a1`–`identity_a4`: every lowered reduced symbol equals the
///   pullback of the full-space symbol plus the section-Hessian correction
///   `G̃^H_{R̃S̃} ∂²Q*^R̃ E^S̃`, split by leg family (all-base, base pair with
///   linear slot, mixed pair, linear pair).
/// - `identity_b`: the raised base-block symbols push forward through `Q*`
///   to the projector-weighted full-space combination.
/// - `identity_c1`/`identity_c2`: the mixed inverse block against its
///   projector form, bare and contracted with the curvature.
/// - `identity_d`: the projected potential gradient agrees between the
///   full-space and reduced routes.
pub fn identity_suite<M: Model>(
    m: &M,
    points: &[(Vec<f64>, Vec<f64>)],
    tolerance: f64,
) -> Result<CheckReport, CoreError> {
    let mut report = CheckReport::new(m.name(), points.len(), 0);
    for (x, f) in points {
        let residuals = identity_residuals(m, x, f)?;
        let mut point = x.clone();
        point.extend_from_slice(f);
        for (name, resid) in residuals {
            let tol = match name {
                "christoffel_symmetry" => 1e-10,
                "christoffel_raising_oracle" => 1e-9,
                _ => tolerance,
            };
            report.record(name, tol, resid, &point);
        }
    }
    Ok(report)
}

/// All identity residuals at a single reduced point.
pub fn identity_residuals<M: Model>(
    m: &M,
    x: &[f64],
    f: &[f64],
) -> Result<Vec<(&'static str, f64)>, CoreError> {
    let d = m.dims();
    let (n_x, n_v, n_p, n_g) = (d.n_x, d.n_v, d.n_p, d.n_g);
    let n_z = d.n_z();
    let n_w = d.n_w();

    let set = christoffels(m, x, f)?;
    let jet = section_jet(m, x)?;
    let q = jet.value.clone();
    let qjac = &jet.jacobian;
    let gh = gh_full_at(m, &q, f)?;
    let full = full_horizontal_christoffels(m, &q, f)?;
    let block = block_metric(m, x, f)?;
    let geom = crate::bundle::GeometryPoint::new(m, x, f)?;

    let mut out: Vec<(&'static str, f64)> = Vec::new();

    // Symmetry of the lowered symbols in the first two slots.
    let mut sym = 0.0f64;
    for j in 0..n_z {
        for k in 0..n_z {
            for l in 0..n_z {
                sym = sym.max((set.lowered[[j, k, l]] - set.lowered[[k, j, l]]).abs());
            }
        }
    }
    out.push(("christoffel_symmetry", sym));

    // Closed-form raising against numeric inversion.
    let oracle = raised_by_numeric_inverse(m, x, f)?;
    out.push((
        "christoffel_raising_oracle",
        set.raised.max_abs_diff(&oracle),
    ));

    // (a) Lowered reduced symbols against the full-space pullback. The
    // embedding E maps reduced to joint legs; only base pairs pick up the
    // section-Hessian correction.
    let e = crate::bundle::embedding(qjac, n_v);
    let pulled = Tensor3::from_fn(n_z, n_z, n_z, |u, v, w| {
        let mut acc = 0.0;
        for r in 0..n_w {
            if e[(r, u)] == 0.0 {
                continue;
            }
            for s in 0..n_w {
                if e[(s, v)] == 0.0 {
                    continue;
                }
                for p in 0..n_w {
                    acc += full[[r, s, p]] * e[(r, u)] * e[(s, v)] * e[(p, w)];
                }
            }
        }
        if u < n_x && v < n_x {
            // + G̃^H_{R̃ S̃} Q*^R̃_{uv} E^S̃_w with R̃ restricted to bundle rows.
            for r in 0..n_p {
                for s in 0..n_w {
                    acc += gh[(r, s)] * jet.hessian[[r, u, v]] * e[(s, w)];
                }
            }
        }
        acc
    });
    let mut a = [0.0f64; 4];
    for u in 0..n_z {
        for v in 0..n_z {
            for w in 0..n_z {
                let resid = (set.lowered[[u, v, w]] - pulled[[u, v, w]]).abs();
                let family = match (u < n_x, v < n_x, w < n_x) {
                    (true, true, true) => 0,
                    (true, true, false) => 1,
                    (true, false, _) | (false, true, _) => 2,
                    (false, false, _) => 3,
                };
                a[family] = a[family].max(resid);
            }
        }
    }
    out.push(("identity_a1", a[0]));
    out.push(("identity_a2", a[1]));
    out.push(("identity_a3", a[2]));
    out.push(("identity_a4", a[3]));

    // (b) Push-forward of the raised base-block symbols.
    let n_pp = &geom.proj.n_pp;
    let n_full = {
        let mut n = Mat::zeros(n_w, n_p);
        for i in 0..n_p {
            for j in 0..n_p {
                n[(i, j)] = n_pp[(i, j)];
            }
        }
        for a in 0..n_v {
            for j in 0..n_p {
                n[(n_p + a, j)] = geom.proj.n_vp[(a, j)];
            }
        }
        n
    };
    let gp_inv = &geom.g_p_inv;
    let mut b_resid = 0.0f64;
    for dd in 0..n_p {
        for j in 0..n_x {
            for k in 0..n_x {
                let mut lhs = 0.0;
                for i in 0..n_x {
                    lhs += qjac[(dd, i)] * set.raised[[i, j, k]];
                }
                let mut rhs = 0.0;
                for e_idx in 0..n_p {
                    for f_idx in 0..n_p {
                        let weight = n_pp[(dd, e_idx)] * gp_inv[(e_idx, f_idx)];
                        if weight == 0.0 {
                            continue;
                        }
                        // Σ_C̃ N^C̃_F Γ_{ABC̃} Q*^A_j Q*^B_k
                        let mut inner = 0.0;
                        for c in 0..n_w {
                            if n_full[(c, f_idx)] == 0.0 {
                                continue;
                            }
                            let mut g_jk = 0.0;
                            for aa in 0..n_p {
                                for bb in 0..n_p {
                                    g_jk += full[[aa, bb, c]] * qjac[(aa, j)] * qjac[(bb, k)];
                                }
                            }
                            inner += n_full[(c, f_idx)] * g_jk;
                        }
                        // + Σ_S̃ N^S̃_F G̃^H_{A S̃} Q*^A_{jk}
                        for s in 0..n_w {
                            if n_full[(s, f_idx)] == 0.0 {
                                continue;
                            }
                            let mut g_hess = 0.0;
                            for aa in 0..n_p {
                                g_hess += gh[(aa, s)] * jet.hessian[[aa, j, k]];
                            }
                            inner += n_full[(s, f_idx)] * g_hess;
                        }
                        rhs += weight * inner;
                    }
                }
                b_resid = b_resid.max((lhs - rhs).abs());
            }
        }
    }
    out.push(("identity_b", b_resid));

    // (c1) Mixed inverse block: Q*^R_j h̃^{jb} = (N G⁻¹ Nᵀ)_{R b}.
    let upper_xv = block.upper_xv();
    let lhs_c1 = qjac.matmul(&upper_xv);
    let c1_proj = n_pp.matmul(gp_inv).matmul(&geom.proj.n_vp.transpose());
    out.push(("identity_c1", lhs_c1.max_abs_diff(&c1_proj)));

    // (c2) Same projector combination contracted with the curvature legs.
    let curv = crate::gaugefield::curvature(m, x, f)?;
    let mut c2 = 0.0f64;
    for aa in 0..n_p {
        for al in 0..n_g {
            for k in 0..n_x {
                let mut lhs = 0.0;
                for mm in 0..n_x {
                    for b in 0..n_v {
                        lhs += qjac[(aa, mm)] * upper_xv[(mm, b)] * curv.on_z[[al, k, n_x + b]];
                    }
                }
                let mut rhs = 0.0;
                for b in 0..n_v {
                    let mut f_bk = 0.0;
                    for bb in 0..n_p {
                        f_bk += curv.on_w[[al, bb, n_p + b]] * qjac[(bb, k)];
                    }
                    rhs += c1_proj[(aa, b)] * f_bk;
                }
                c2 = c2.max((lhs - rhs).abs());
            }
        }
    }
    out.push(("identity_c2", c2));

    // (d) Projected potential gradient, full-space vs reduced route.
    let mut w0 = q.clone();
    w0.extend_from_slice(f);
    let mut grad_w = vec![0.0f64; n_w];
    for r in 0..n_w {
        let wd = seed1(&w0, r);
        grad_w[r] = m.potential(&wd[..n_p], &wd[n_p..]).du;
    }
    let mut z0 = x.to_vec();
    z0.extend_from_slice(f);
    let mut grad_z = vec![0.0f64; n_z];
    for u in 0..n_z {
        let zd = seed1(&z0, u);
        let qs = m.section(&zd[..n_x]);
        grad_z[u] = m.potential(&qs, &zd[n_x..]).du;
    }
    let mut d_resid = 0.0f64;
    for aa in 0..n_p {
        let mut lhs = 0.0;
        for e_idx in 0..n_p {
            for f_idx in 0..n_p {
                let mut proj_grad = 0.0;
                for r in 0..n_w {
                    proj_grad += n_full[(r, f_idx)] * grad_w[r];
                }
                lhs += n_pp[(aa, e_idx)] * gp_inv[(e_idx, f_idx)] * proj_grad;
            }
        }
        let mut rhs = 0.0;
        for mm in 0..n_x {
            let mut raised_grad = 0.0;
            for u in 0..n_z {
                raised_grad += block.upper[(mm, u)] * grad_z[u];
            }
            rhs += qjac[(aa, mm)] * raised_grad;
        }
        d_resid = d_resid.max((lhs - rhs).abs());
    }
    out.push(("identity_d", d_resid));

    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{instantiate, BuiltinModel, ModelParams};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn abelian() -> BuiltinModel {
        instantiate("abelian_disk", &ModelParams::empty()).unwrap()
    }
    fn so3() -> BuiltinModel {
        instantiate("so3_coupled", &ModelParams::empty()).unwrap()
    }
    fn so3_twisted() -> BuiltinModel {
        instantiate("so3_coupled", &ModelParams::empty().set("twist", 0.4)).unwrap()
    }

    #[test]
    fn abelian_christoffels_closed_form() {
        // On the radial section the reduced metric is
        // diag(1) ⊕ (δ − f̃f̃ᵀ-projector scaled), with d = x² + |f̃|²:
        //   h̃_{f1f1} = 1 − f2²/d, so Γ_{f1 f1 x} = −½ ∂_x h̃_{f1f1} = −x f2²/d².
        let m = abelian();
        let (x, f1, f2) = (1.2, 0.3, 0.4);
        let dd = x * x + f1 * f1 + f2 * f2;
        let set = christoffels(&m, &[x], &[f1, f2]).unwrap();
        assert_relative_eq!(
            set.lowered[[1, 1, 0]],
            -x * f2 * f2 / (dd * dd),
            max_relative = 1e-11
        );
        // h̃^{xx} = 1 and the x-row of the inverse has no mixed terms, so the
        // raised symbol matches the lowered one.
        assert_relative_eq!(
            set.raised[[0, 1, 1]],
            -x * f2 * f2 / (dd * dd),
            max_relative = 1e-11
        );
        // Flat base direction: h̃_xx ≡ 1.
        assert!(set.lowered[[0, 0, 0]].abs() < 1e-13);
    }

    #[test]
    fn raising_oracle_agrees_at_random_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for m in [abelian(), so3(), so3_twisted()] {
            let (xr, fr) = m.sample_ranges();
            for _ in 0..6 {
                let x: Vec<f64> = xr.iter().map(|&(a, b)| rng.gen_range(a..b)).collect();
                let f: Vec<f64> = fr.iter().map(|&(a, b)| rng.gen_range(a..b)).collect();
                let set = christoffels(&m, &x, &f).unwrap();
                let oracle = raised_by_numeric_inverse(&m, &x, &f).unwrap();
                let diff = set.raised.max_abs_diff(&oracle);
                assert!(diff < 1e-9, "{}: {diff:.3e}", m.name());
            }
        }
    }

    #[test]
    fn identity_suite_passes_for_all_models() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for m in [abelian(), so3(), so3_twisted()] {
            let (xr, fr) = m.sample_ranges();
            let points: Vec<(Vec<f64>, Vec<f64>)> = (0..10)
                .map(|_| {
                    (
                        xr.iter().map(|&(a, b)| rng.gen_range(a..b)).collect(),
                        fr.iter().map(|&(a, b)| rng.gen_range(a..b)).collect(),
                    )
                })
                .collect();
            let report = identity_suite(&m, &points, 1e-8).unwrap();
            for e in &report.entries {
                assert!(
                    e.pass,
                    "{} {}: residual {:.3e} > {:.1e} at {:?}",
                    m.name(),
                    e.name,
                    e.max_residual,
                    e.tolerance,
                    e.worst_point
                );
            }
            assert!(report.pass);
        }
    }
}
