//! Structured triangulations of the unit square.
//!
//! Vertices live on a regular grid, ordered row-major by grid position
//! (x fastest), so meshes are deterministic and suitable for golden-file
//! comparisons. Each grid cell is split along its lower-left to upper-right
//! diagonal into two counter-clockwise triangles.

use crate::{Error, Result};

/// Triangulated unit-square domain with boundary identification.
#[derive(Debug, Clone)]
pub struct TriMesh {
    /// Vertex coordinates in `[0,1]^2`.
    pub vertices: Vec<(f64, f64)>,
    /// Vertex indices per triangle, counter-clockwise.
    pub triangles: Vec<[usize; 3]>,
    /// `true` iff the vertex lies on the boundary of the square.
    pub boundary_flag: Vec<bool>,
}

impl TriMesh {
    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    /// Indices of vertices not on the boundary, in ascending order.
    pub fn interior_vertices(&self) -> Vec<usize> {
        (0..self.n_vertices())
            .filter(|&i| !self.boundary_flag[i])
            .collect()
    }
}

/// Build the structured triangulation with `n` subdivisions per side:
/// `(n+1)^2` vertices and `2 n^2` triangles.
pub fn build_unit_square_mesh(n: usize) -> Result<TriMesh> {
    if n == 0 {
        return Err(Error::InvalidArgument(
            "subdivision count must be at least 1".into(),
        ));
    }
    let np = n + 1;
    let h = 1.0 / n as f64;
    let mut vertices = Vec::with_capacity(np * np);
    let mut boundary_flag = Vec::with_capacity(np * np);
    for iy in 0..np {
        for ix in 0..np {
            let x = ix as f64 * h;
            let y = iy as f64 * h;
            vertices.push((x, y));
            boundary_flag.push(ix == 0 || ix == n || iy == 0 || iy == n);
        }
    }
    let mut triangles = Vec::with_capacity(2 * n * n);
    for iy in 0..n {
        for ix in 0..n {
            let ll = iy * np + ix;
            let lr = ll + 1;
            let ul = ll + np;
            let ur = ul + 1;
            // Split along the ll-ur diagonal; both triangles counter-clockwise.
            triangles.push([ll, lr, ur]);
            triangles.push([ll, ur, ul]);
        }
    }
    Ok(TriMesh {
        vertices,
        triangles,
        boundary_flag,
    })
}

/// Area and the three constant P1 basis gradients of triangle `t`.
///
/// Gradient `i` belongs to the local vertex `mesh.triangles[t][i]`; the three
/// gradients sum to the zero vector (partition of unity).
pub fn triangle_geometry(mesh: &TriMesh, t: usize) -> Result<(f64, [[f64; 2]; 3])> {
    if t >= mesh.n_triangles() {
        return Err(Error::IndexOutOfRange {
            what: "triangle",
            index: t,
            size: mesh.n_triangles(),
        });
    }
    let [a, b, c] = mesh.triangles[t];
    let (x0, y0) = mesh.vertices[a];
    let (x1, y1) = mesh.vertices[b];
    let (x2, y2) = mesh.vertices[c];
    let signed_area = 0.5 * ((x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0));
    if signed_area <= 0.0 {
        return Err(Error::DegenerateTriangle {
            triangle: t,
            area: signed_area,
        });
    }
    let d = 2.0 * signed_area;
    let grads = [
        [(y1 - y2) / d, (x2 - x1) / d],
        [(y2 - y0) / d, (x0 - x2) / d],
        [(y0 - y1) / d, (x1 - x0) / d],
    ];
    Ok((signed_area, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn smallest_grid_counts() {
        let mesh = build_unit_square_mesh(1).unwrap();
        assert_eq!(mesh.n_vertices(), 4);
        assert_eq!(mesh.n_triangles(), 2);
        assert_eq!(mesh.boundary_flag.iter().filter(|&&b| b).count(), 4);
    }

    #[test]
    fn n2_counts() {
        let mesh = build_unit_square_mesh(2).unwrap();
        assert_eq!(mesh.n_vertices(), 9);
        assert_eq!(mesh.n_triangles(), 8);
        assert_eq!(mesh.boundary_flag.iter().filter(|&&b| b).count(), 8);
        assert_eq!(mesh.interior_vertices(), vec![4]);
    }

    #[test]
    fn rejects_zero_subdivisions() {
        assert!(build_unit_square_mesh(0).is_err());
    }

    #[test]
    fn areas_partition_unit_square() {
        let mesh = build_unit_square_mesh(4).unwrap();
        let total: f64 = (0..mesh.n_triangles())
            .map(|t| triangle_geometry(&mesh, t).unwrap().0)
            .sum();
        assert!((total - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn basis_gradients_reference_triangle() {
        // Hand computation: triangle (0,0),(1,0),(1,1) has area 1/2 and the
        // barycentric gradient of vertex (0,0) is (-1, 0).
        let mesh = TriMesh {
            vertices: vec![(0.0, 0.0), (1.0, 0.0), (1.0, 1.0)],
            triangles: vec![[0, 1, 2]],
            boundary_flag: vec![true, true, true],
        };
        let (area, grads) = triangle_geometry(&mesh, 0).unwrap();
        assert!((area - 0.5).abs() <= 1e-14);
        assert!((grads[0][0] + 1.0).abs() <= 1e-14);
        assert!(grads[0][1].abs() <= 1e-14);
    }

    #[test]
    fn right_triangle_area() {
        let mesh = TriMesh {
            vertices: vec![(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)],
            triangles: vec![[0, 1, 2]],
            boundary_flag: vec![true, true, true],
        };
        let (area, _) = triangle_geometry(&mesh, 0).unwrap();
        assert!((area - 0.5).abs() <= 1e-14);
    }

    #[test]
    fn degenerate_triangle_rejected() {
        let mesh = TriMesh {
            vertices: vec![(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)],
            triangles: vec![[0, 1, 2]],
            boundary_flag: vec![true, true, true],
        };
        assert!(triangle_geometry(&mesh, 0).is_err());
    }

    #[test]
    fn triangle_index_out_of_range() {
        let mesh = build_unit_square_mesh(1).unwrap();
        assert!(triangle_geometry(&mesh, 2).is_err());
    }

    #[test]
    fn vertex_indices_in_range_and_flags_match_geometry() {
        let mesh = build_unit_square_mesh(5).unwrap();
        for tri in &mesh.triangles {
            for &v in tri {
                assert!(v < mesh.n_vertices());
            }
        }
        for (i, &(x, y)) in mesh.vertices.iter().enumerate() {
            let on_boundary = x.abs() <= 1e-12
                || (x - 1.0).abs() <= 1e-12
                || y.abs() <= 1e-12
                || (y - 1.0).abs() <= 1e-12;
            assert_eq!(mesh.boundary_flag[i], on_boundary);
        }
    }

    proptest! {
        #[test]
        fn structured_mesh_invariants(n in 1usize..16) {
            let mesh = build_unit_square_mesh(n).unwrap();
            prop_assert_eq!(mesh.n_vertices(), (n + 1) * (n + 1));
            prop_assert_eq!(mesh.n_triangles(), 2 * n * n);
            prop_assert_eq!(mesh.boundary_flag.iter().filter(|&&b| b).count(), 4 * n);
            let mut total = 0.0;
            for t in 0..mesh.n_triangles() {
                let (area, grads) = triangle_geometry(&mesh, t).unwrap();
                prop_assert!(area > 0.0);
                total += area;
                for k in 0..2 {
                    let s: f64 = grads.iter().map(|g| g[k]).sum();
                    prop_assert!(s.abs() <= 1e-14);
                }
            }
            prop_assert!((total - 1.0).abs() <= 1e-12);
        }
    }
}
