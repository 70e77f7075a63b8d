//! P1 finite-element discretization of the Poisson problem
//! `-div(kappa grad u) = f` with homogeneous Dirichlet conditions:
//! assembly, interior-DOF reduction, residual and Jacobian operators,
//! functionals and their partial derivatives.
//!
//! The residual of the discrete system is `F(u; kappa, f) = A(kappa) u - M f`
//! restricted to interior vertices. `A` uses one-point (element-mean)
//! quadrature for `kappa`, which is exact for P1 coefficients because the
//! basis gradients are constant per triangle.

use crate::mesh::{triangle_geometry, TriMesh};
use crate::sparse::{cg_solve, norm2, CsrMatrix, DEFAULT_REL_TOL};
use crate::{Error, Result};
#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Default absolute tolerance on the residual norm for `solve_forward`.
pub const DEFAULT_NEWTON_TOL: f64 = 1e-10;
const MAX_NEWTON_ITER: usize = 25;

/// What a nodal coefficient vector represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldRole {
    State,
    Conductivity,
    Source,
    Target,
    Measurement,
    Adjoint,
    Tangent,
}

/// P1 nodal field: one coefficient per mesh vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct FeFunction {
    values: Vec<f64>,
    role: FieldRole,
}

impl FeFunction {
    pub fn new(mesh: &TriMesh, values: Vec<f64>, role: FieldRole) -> Result<Self> {
        if values.len() != mesh.n_vertices() {
            return Err(Error::DimensionMismatch(format!(
                "field length {} does not match vertex count {}",
                values.len(),
                mesh.n_vertices()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("nodal field".into()));
        }
        Ok(FeFunction { values, role })
    }

    pub fn constant(mesh: &TriMesh, value: f64, role: FieldRole) -> Self {
        FeFunction {
            values: vec![value; mesh.n_vertices()],
            role,
        }
    }

    /// Nodal interpolation of a coordinate function.
    pub fn interpolate(mesh: &TriMesh, role: FieldRole, f: impl Fn(f64, f64) -> f64) -> Self {
        FeFunction {
            values: mesh.vertices.iter().map(|&(x, y)| f(x, y)).collect(),
            role,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn role(&self) -> FieldRole {
        self.role
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Homogeneous Dirichlet reduction: keeps the interior degrees of freedom.
#[derive(Debug, Clone)]
pub struct DirichletMap {
    interior: Vec<usize>,
    full_size: usize,
    full_to_interior: Vec<Option<usize>>,
}

impl DirichletMap {
    pub fn from_mesh(mesh: &TriMesh) -> Self {
        let interior = mesh.interior_vertices();
        let mut full_to_interior = vec![None; mesh.n_vertices()];
        for (k, &v) in interior.iter().enumerate() {
            full_to_interior[v] = Some(k);
        }
        DirichletMap {
            interior,
            full_size: mesh.n_vertices(),
            full_to_interior,
        }
    }

    pub fn interior_indices(&self) -> &[usize] {
        &self.interior
    }

    pub fn n_interior(&self) -> usize {
        self.interior.len()
    }

    pub fn full_size(&self) -> usize {
        self.full_size
    }

    /// Keep interior entries.
    pub fn restrict(&self, full: &[f64]) -> Result<Vec<f64>> {
        if full.len() != self.full_size {
            return Err(Error::DimensionMismatch(format!(
                "restrict: length {} != full size {}",
                full.len(),
                self.full_size
            )));
        }
        Ok(self.interior.iter().map(|&i| full[i]).collect())
    }

    /// Zero-fill boundary entries.
    pub fn prolong(&self, interior: &[f64]) -> Result<Vec<f64>> {
        if interior.len() != self.interior.len() {
            return Err(Error::DimensionMismatch(format!(
                "prolong: length {} != interior size {}",
                interior.len(),
                self.interior.len()
            )));
        }
        let mut full = vec![0.0; self.full_size];
        for (k, &i) in self.interior.iter().enumerate() {
            full[i] = interior[k];
        }
        Ok(full)
    }

    /// Interior-by-interior block of a full matrix.
    pub fn restrict_matrix(&self, a: &CsrMatrix) -> CsrMatrix {
        let mut entries = Vec::new();
        for (k, &i) in self.interior.iter().enumerate() {
            for (c, v) in a.row(i) {
                if let Some(kc) = self.full_to_interior[c] {
                    entries.push((k, kc, v));
                }
            }
        }
        CsrMatrix::from_triplets(self.interior.len(), self.interior.len(), &entries)
            .expect("restricted indices are in range by construction")
    }
}

fn check_field_len(mesh: &TriMesh, values: &[f64], what: &str) -> Result<()> {
    if values.len() != mesh.n_vertices() {
        return Err(Error::DimensionMismatch(format!(
            "{what}: length {} does not match vertex count {}",
            values.len(),
            mesh.n_vertices()
        )));
    }
    Ok(())
}

type LocalMatrix = ([usize; 3], [[f64; 3]; 3]);

/// Run a per-triangle local kernel and accumulate the element matrices into a
/// full CSR matrix. The local pass is data-parallel under the `parallel`
/// feature; accumulation is sequential in triangle order so both paths are
/// bit-identical.
fn assemble_from_local(
    mesh: &TriMesh,
    local: impl Fn(usize) -> Result<LocalMatrix> + Sync,
) -> Result<CsrMatrix> {
    #[cfg(feature = "parallel")]
    let locals: Vec<LocalMatrix> = (0..mesh.n_triangles())
        .into_par_iter()
        .map(local)
        .collect::<Result<_>>()?;
    #[cfg(not(feature = "parallel"))]
    let locals: Vec<LocalMatrix> = (0..mesh.n_triangles())
        .map(local)
        .collect::<Result<_>>()?;

    let n = mesh.n_vertices();
    let mut entries = Vec::with_capacity(9 * locals.len());
    for (verts, elem) in &locals {
        for (i, &vi) in verts.iter().enumerate() {
            for (j, &vj) in verts.iter().enumerate() {
                entries.push((vi, vj, elem[i][j]));
            }
        }
    }
    CsrMatrix::from_triplets(n, n, &entries)
}

fn stiffness_local(mesh: &TriMesh, t: usize, kappa: &[f64], check_positive: bool) -> Result<LocalMatrix> {
    let verts = mesh.triangles[t];
    let (area, grads) = triangle_geometry(mesh, t)?;
    let kbar = (kappa[verts[0]] + kappa[verts[1]] + kappa[verts[2]]) / 3.0;
    if check_positive && kbar <= 0.0 {
        return Err(Error::NonPositiveConductivity {
            triangle: t,
            mean: kbar,
        });
    }
    let mut elem = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            elem[i][j] = kbar * area * (grads[i][0] * grads[j][0] + grads[i][1] * grads[j][1]);
        }
    }
    Ok((verts, elem))
}

/// Stiffness matrix `A(kappa)` with entries
/// `sum_T mean(kappa)_T |T| grad(phi_i) . grad(phi_j)`, full size, no
/// boundary reduction. Errors if any element-mean conductivity is
/// non-positive.
pub fn assemble_stiffness(mesh: &TriMesh, kappa: &FeFunction) -> Result<CsrMatrix> {
    check_field_len(mesh, kappa.values(), "kappa")?;
    assemble_from_local(mesh, |t| stiffness_local(mesh, t, kappa.values(), true))
}

/// Stiffness-form assembly without the positivity guard, for derivative
/// actions where the weight is a perturbation and may change sign.
fn assemble_stiffness_unchecked(mesh: &TriMesh, weight: &[f64]) -> Result<CsrMatrix> {
    assemble_from_local(mesh, |t| stiffness_local(mesh, t, weight, false))
}

/// Consistent mass matrix, element contribution `(|T|/12) [[2,1,1],[1,2,1],[1,1,2]]`.
pub fn assemble_mass(mesh: &TriMesh) -> Result<CsrMatrix> {
    assemble_from_local(mesh, |t| {
        let verts = mesh.triangles[t];
        let (area, _) = triangle_geometry(mesh, t)?;
        let off = area / 12.0;
        let diag = area / 6.0;
        Ok((
            verts,
            [
                [diag, off, off],
                [off, diag, off],
                [off, off, diag],
            ],
        ))
    })
}

/// Interior restriction of `A(kappa) u - M f`.
pub fn residual(
    mesh: &TriMesh,
    bc: &DirichletMap,
    u: &FeFunction,
    kappa: &FeFunction,
    f: &FeFunction,
) -> Result<Vec<f64>> {
    check_field_len(mesh, u.values(), "u")?;
    check_field_len(mesh, f.values(), "f")?;
    let a = assemble_stiffness(mesh, kappa)?;
    let m = assemble_mass(mesh)?;
    let au = a.matvec(u.values())?;
    let mf = m.matvec(f.values())?;
    let full: Vec<f64> = au.iter().zip(&mf).map(|(x, y)| x - y).collect();
    bc.restrict(&full)
}

/// Solve the discrete problem by Newton iteration on the residual. The
/// problem is linear in `u`, so the loop terminates after one linear solve;
/// boundary entries of the returned state are exactly zero.
pub fn solve_forward(
    mesh: &TriMesh,
    bc: &DirichletMap,
    kappa: &FeFunction,
    f: &FeFunction,
    tol: f64,
) -> Result<FeFunction> {
    check_field_len(mesh, f.values(), "f")?;
    let a = assemble_stiffness(mesh, kappa)?;
    let m = assemble_mass(mesh)?;
    let a_ii = bc.restrict_matrix(&a);
    let mf = m.matvec(f.values())?;

    let n_int = bc.n_interior();
    let mut u_full = vec![0.0; mesh.n_vertices()];
    if n_int == 0 {
        return FeFunction::new(mesh, u_full, FieldRole::State);
    }

    let mut last_res = f64::INFINITY;
    for _ in 0..MAX_NEWTON_ITER {
        let au = a.matvec(&u_full)?;
        let r: Vec<f64> = bc
            .interior_indices()
            .iter()
            .map(|&i| au[i] - mf[i])
            .collect();
        last_res = norm2(&r);
        if last_res <= tol {
            return FeFunction::new(mesh, u_full, FieldRole::State);
        }
        let neg_r: Vec<f64> = r.iter().map(|v| -v).collect();
        let delta = cg_solve(&a_ii, &neg_r, DEFAULT_REL_TOL, (10 * n_int).max(100))?;
        for (k, &i) in bc.interior_indices().iter().enumerate() {
            u_full[i] += delta[k];
        }
    }
    Err(Error::NewtonNoConvergence {
        iterations: MAX_NEWTON_ITER,
        residual: last_res,
    })
}

/// Directional derivative of the residual with respect to the conductivity:
/// interior entries of the vector with i-th component
/// `sum_T mean(delta_kappa)_T |T| grad(u) . grad(phi_i)`.
pub fn df_dkappa_action(
    mesh: &TriMesh,
    bc: &DirichletMap,
    u: &FeFunction,
    delta_kappa: &FeFunction,
) -> Result<Vec<f64>> {
    check_field_len(mesh, u.values(), "u")?;
    check_field_len(mesh, delta_kappa.values(), "delta_kappa")?;
    let a_delta = assemble_stiffness_unchecked(mesh, delta_kappa.values())?;
    let out = a_delta.matvec(u.values())?;
    bc.restrict(&out)
}

/// Transpose of the conductivity action: per kappa-DOF `k`,
/// `sum_{T owning k} (|T|/3) (grad(u) . grad(lambda))|_T`, with `lambda`
/// prolonged by zero onto the boundary.
pub fn df_dkappa_transpose_action(
    mesh: &TriMesh,
    bc: &DirichletMap,
    u: &FeFunction,
    lambda_interior: &[f64],
) -> Result<Vec<f64>> {
    check_field_len(mesh, u.values(), "u")?;
    let lambda = bc.prolong(lambda_interior)?;
    let u_vals = u.values();
    let mut out = vec![0.0; mesh.n_vertices()];
    for t in 0..mesh.n_triangles() {
        let verts = mesh.triangles[t];
        let (area, grads) = triangle_geometry(mesh, t)?;
        let mut grad_u = [0.0; 2];
        let mut grad_l = [0.0; 2];
        for (k, &v) in verts.iter().enumerate() {
            grad_u[0] += u_vals[v] * grads[k][0];
            grad_u[1] += u_vals[v] * grads[k][1];
            grad_l[0] += lambda[v] * grads[k][0];
            grad_l[1] += lambda[v] * grads[k][1];
        }
        let s = (area / 3.0) * (grad_u[0] * grad_l[0] + grad_u[1] * grad_l[1]);
        for &v in &verts {
            out[v] += s;
        }
    }
    Ok(out)
}

/// Directional derivative of the residual with respect to the source:
/// `-(M delta_f)` restricted to interior vertices.
pub fn df_df_action(
    mesh: &TriMesh,
    bc: &DirichletMap,
    mass: &CsrMatrix,
    delta_f: &[f64],
) -> Result<Vec<f64>> {
    check_field_len(mesh, delta_f, "delta_f")?;
    let m_df = mass.matvec(delta_f)?;
    let neg: Vec<f64> = m_df.iter().map(|v| -v).collect();
    bc.restrict(&neg)
}

/// Transpose of the source action: `-(M^T lambda)` with `lambda` prolonged by
/// zero onto the boundary. Routed through the transposed product even though
/// the mass matrix is symmetric.
pub fn df_df_transpose_action(
    mesh: &TriMesh,
    bc: &DirichletMap,
    mass: &CsrMatrix,
    lambda_interior: &[f64],
) -> Result<Vec<f64>> {
    let lambda = bc.prolong(lambda_interior)?;
    let _ = mesh;
    let mt_l = mass.matvec_transpose(&lambda)?;
    Ok(mt_l.iter().map(|v| -v).collect())
}

/// `1/2 (u - u_t)^T M (u - u_t)`, the squared-misfit functional.
pub fn misfit_value(mass: &CsrMatrix, u: &[f64], u_target: &[f64]) -> Result<f64> {
    let d: Vec<f64> = u.iter().zip(u_target).map(|(a, b)| a - b).collect();
    let md = mass.matvec(&d)?;
    Ok(0.5 * crate::sparse::dot(&d, &md))
}

/// Gradient of the misfit with respect to `u`: `M (u - u_t)`.
pub fn misfit_grad_u(mass: &CsrMatrix, u: &[f64], u_target: &[f64]) -> Result<Vec<f64>> {
    let d: Vec<f64> = u.iter().zip(u_target).map(|(a, b)| a - b).collect();
    mass.matvec(&d)
}

/// `(gamma/2) f^T M f`, Tikhonov penalty on the control.
pub fn control_reg_value(mass: &CsrMatrix, f: &[f64], gamma: f64) -> Result<f64> {
    let mf = mass.matvec(f)?;
    Ok(0.5 * gamma * crate::sparse::dot(f, &mf))
}

pub fn control_reg_grad(mass: &CsrMatrix, f: &[f64], gamma: f64) -> Result<Vec<f64>> {
    let mf = mass.matvec(f)?;
    Ok(mf.iter().map(|v| gamma * v).collect())
}

/// `(gamma/2) kappa^T K1 kappa` with `K1` the unit-coefficient stiffness
/// (full, no boundary reduction): the H1-seminorm penalty on the coefficient.
pub fn kappa_reg_value(stiff_unit: &CsrMatrix, kappa: &[f64], gamma: f64) -> Result<f64> {
    let kk = stiff_unit.matvec(kappa)?;
    Ok(0.5 * gamma * crate::sparse::dot(kappa, &kk))
}

pub fn kappa_reg_grad(stiff_unit: &CsrMatrix, kappa: &[f64], gamma: f64) -> Result<Vec<f64>> {
    let kk = stiff_unit.matvec(kappa)?;
    Ok(kk.iter().map(|v| gamma * v).collect())
}

/// Discrete L2 norm `sqrt(g^T M g)`.
pub fn l2_norm(mass: &CsrMatrix, g: &[f64]) -> Result<f64> {
    let mg = mass.matvec(g)?;
    Ok(crate::sparse::dot(g, &mg).max(0.0).sqrt())
}

/// Discrete L2 norm of the difference of two nodal fields.
pub fn l2_error(mass: &CsrMatrix, g: &[f64], h: &[f64]) -> Result<f64> {
    if g.len() != h.len() {
        return Err(Error::DimensionMismatch(format!(
            "l2_error: lengths {} and {} differ",
            g.len(),
            h.len()
        )));
    }
    let d: Vec<f64> = g.iter().zip(h).map(|(a, b)| a - b).collect();
    l2_norm(mass, &d)
}

// Degree-5 quadrature on the reference triangle (7 points), in barycentric
// coordinates with weights summing to one.
fn quadrature_deg5() -> [([f64; 3], f64); 7] {
    let s15 = 15.0f64.sqrt();
    let a = (6.0 - s15) / 21.0;
    let b = (6.0 + s15) / 21.0;
    let wa = (155.0 - s15) / 1200.0;
    let wb = (155.0 + s15) / 1200.0;
    [
        ([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], 9.0 / 40.0),
        ([1.0 - 2.0 * a, a, a], wa),
        ([a, 1.0 - 2.0 * a, a], wa),
        ([a, a, 1.0 - 2.0 * a], wa),
        ([1.0 - 2.0 * b, b, b], wb),
        ([b, 1.0 - 2.0 * b, b], wb),
        ([b, b, 1.0 - 2.0 * b], wb),
    ]
}

/// True L2 error of a nodal field against an analytic function, by
/// per-triangle degree-5 quadrature. Used for discretization-convergence
/// studies where the interpolant-based norm would hide the error.
pub fn l2_error_vs_exact(
    mesh: &TriMesh,
    g: &[f64],
    exact: impl Fn(f64, f64) -> f64 + Sync,
) -> Result<f64> {
    check_field_len(mesh, g, "g")?;
    let quad = quadrature_deg5();
    let per_triangle = |t: usize| -> Result<f64> {
        let verts = mesh.triangles[t];
        let (area, _) = triangle_geometry(mesh, t)?;
        let mut acc = 0.0;
        for (bary, w) in &quad {
            let mut x = 0.0;
            let mut y = 0.0;
            let mut gh = 0.0;
            for (k, &v) in verts.iter().enumerate() {
                let (vx, vy) = mesh.vertices[v];
                x += bary[k] * vx;
                y += bary[k] * vy;
                gh += bary[k] * g[v];
            }
            let d = gh - exact(x, y);
            acc += w * d * d;
        }
        Ok(acc * area)
    };
    #[cfg(feature = "parallel")]
    let contributions: Vec<f64> = (0..mesh.n_triangles())
        .into_par_iter()
        .map(per_triangle)
        .collect::<Result<_>>()?;
    #[cfg(not(feature = "parallel"))]
    let contributions: Vec<f64> = (0..mesh.n_triangles())
        .map(per_triangle)
        .collect::<Result<_>>()?;
    Ok(contributions.iter().sum::<f64>().sqrt())
}
