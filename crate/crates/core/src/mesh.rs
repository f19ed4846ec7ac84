//! Structured meshes of the unit interval and the unit square.
//!
//! Every element carries an ordered vertex list `[x0, x1, (x2)]` where `x0` is
//! the reference vertex and `xk` is its neighbour along axis `k`. On such
//! elements the gradient of a P1 function is the vector of axis difference
//! quotients, which is what the P0 mobility matrices are built from.

use crate::error::{Error, Result};

/// One simplex of a structured mesh.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Element {
    /// `vertices[0]` is the reference vertex, `vertices[k]` its neighbour along
    /// axis `k`. The third slot is unused in 1D.
    pub vertices: [usize; 3],
    /// Direction of the edge `x0 -> xk` relative to axis `k` (+1 or -1).
    pub orientation: [f64; 2],
}

impl Element {
    #[inline]
    pub fn x0(&self) -> usize {
        self.vertices[0]
    }

    /// Neighbour of `x0` along axis `axis` (0-based).
    #[inline]
    pub fn along(&self, axis: usize) -> usize {
        self.vertices[axis + 1]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructuredMesh {
    dim: usize,
    nx: usize,
    ny: usize,
    coords: Vec<[f64; 2]>,
    elements: Vec<Element>,
    spacing: [f64; 2],
    element_measure: f64,
}

impl StructuredMesh {
    /// Uniform mesh of (0, 1) with `nx` cells.
    pub fn interval(nx: usize) -> Result<Self> {
        if nx < 2 {
            return Err(Error::InvalidMesh(format!("need nx >= 2, got {nx}")));
        }
        let coords = (0..=nx).map(|i| [i as f64 / nx as f64, 0.0]).collect();
        let elements = (0..nx)
            .map(|i| Element {
                vertices: [i, i + 1, usize::MAX],
                orientation: [1.0, 0.0],
            })
            .collect();
        let hx = 1.0 / nx as f64;
        Ok(Self {
            dim: 1,
            nx,
            ny: 0,
            coords,
            elements,
            spacing: [hx, 0.0],
            element_measure: hx,
        })
    }

    /// Uniform triangulation of the unit square with `nx * ny` cells, each cut
    /// along its lower-left to upper-right diagonal into two right triangles.
    ///
    /// Nodes are numbered row-major: node `(i, j)` has index `j * (nx + 1) + i`.
    /// Each triangle's `x0` is its right-angle corner. For the lower triangle
    /// that corner is `(i+1, j)`, so its x-neighbour lies in the negative x
    /// direction; the upper triangle's y-neighbour likewise lies below it.
    pub fn grid(nx: usize, ny: usize) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(Error::InvalidMesh(format!(
                "need nx, ny >= 2, got {nx} x {ny}"
            )));
        }
        let stride = nx + 1;
        let node = |i: usize, j: usize| j * stride + i;
        let mut coords = Vec::with_capacity((nx + 1) * (ny + 1));
        for j in 0..=ny {
            for i in 0..=nx {
                coords.push([i as f64 / nx as f64, j as f64 / ny as f64]);
            }
        }
        let mut elements = Vec::with_capacity(2 * nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                // below the diagonal: (i,j), (i+1,j), (i+1,j+1)
                elements.push(Element {
                    vertices: [node(i + 1, j), node(i, j), node(i + 1, j + 1)],
                    orientation: [-1.0, 1.0],
                });
                // above the diagonal: (i,j), (i+1,j+1), (i,j+1)
                elements.push(Element {
                    vertices: [node(i, j + 1), node(i + 1, j + 1), node(i, j)],
                    orientation: [1.0, -1.0],
                });
            }
        }
        let hx = 1.0 / nx as f64;
        let hy = 1.0 / ny as f64;
        Ok(Self {
            dim: 2,
            nx,
            ny,
            coords,
            elements,
            spacing: [hx, hy],
            element_measure: 0.5 * hx * hy,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    /// Cell count along y; `None` in 1D.
    pub fn ny(&self) -> Option<usize> {
        (self.dim == 2).then_some(self.ny)
    }

    pub fn num_nodes(&self) -> usize {
        self.coords.len()
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn coords(&self) -> &[[f64; 2]] {
        &self.coords
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    /// Axis spacing `h_k`.
    pub fn spacing(&self, axis: usize) -> f64 {
        self.spacing[axis]
    }

    /// `|I|`, identical for every element.
    pub fn element_measure(&self) -> f64 {
        self.element_measure
    }

    /// Number of vertices per element.
    pub fn vertices_per_element(&self) -> usize {
        self.dim + 1
    }

    /// Vertex list of element `e` trimmed to the mesh dimension.
    #[inline]
    pub fn element_vertices(&self, e: usize) -> &[usize] {
        &self.elements[e].vertices[..=self.dim]
    }

    /// Node index of the grid point `(i, j)`; `j` is ignored in 1D.
    pub fn node_index(&self, i: usize, j: usize) -> usize {
        if self.dim == 1 {
            i
        } else {
            j * (self.nx + 1) + i
        }
    }

    /// True when `other` is a uniform refinement of `self` (its node set
    /// contains every node of `self`).
    pub fn is_refined_by(&self, other: &StructuredMesh) -> bool {
        self.dim == other.dim
            && other.nx.is_multiple_of(self.nx)
            && (self.dim == 1 || other.ny.is_multiple_of(self.ny))
    }

    /// Point evaluation of the P1 function with nodal `values` at `p`.
    pub fn evaluate(&self, values: &[f64], p: [f64; 2]) -> f64 {
        let locate = |t: f64, n: usize| -> (usize, f64) {
            let s = (t * n as f64).clamp(0.0, n as f64);
            let cell = (s.floor() as usize).min(n - 1);
            (cell, s - cell as f64)
        };
        let (i, xi) = locate(p[0], self.nx);
        if self.dim == 1 {
            return values[i] + xi * (values[i + 1] - values[i]);
        }
        let (j, eta) = locate(p[1], self.ny);
        let u00 = values[self.node_index(i, j)];
        let u10 = values[self.node_index(i + 1, j)];
        let u01 = values[self.node_index(i, j + 1)];
        let u11 = values[self.node_index(i + 1, j + 1)];
        if xi >= eta {
            u00 + xi * (u10 - u00) + eta * (u11 - u10)
        } else {
            u00 + eta * (u01 - u00) + xi * (u11 - u01)
        }
    }

    /// Index map of the point reflection `x -> 1 - x` (1D) or
    /// `(x, y) -> (1 - x, 1 - y)` (2D). Both leave the mesh invariant.
    pub fn reflection(&self) -> Vec<usize> {
        let n = self.num_nodes();
        (0..n).map(|k| n - 1 - k).collect()
    }
}
