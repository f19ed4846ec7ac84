//! P1 finite-element primitives on a [`StructuredMesh`]: nodal fields, the
//! lumped and consistent mass, stiffness with a per-element diagonal
//! coefficient, element quadrature and L2 norms.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mesh::StructuredMesh;
use crate::par;
use crate::sparse::{CsrMatrix, Pattern};

/// Nodal values of a P1 function.
#[derive(Debug, Clone, PartialEq)]
pub struct NodalField(Vec<f64>);

impl NodalField {
    /// Checks the length against `mesh` and that every entry is finite.
    pub fn new(mesh: &StructuredMesh, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.num_nodes() {
            return Err(Error::MeshMismatch {
                expected: mesh.num_nodes(),
                found: values.len(),
            });
        }
        if let Some((node, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Evaluation { node, value });
        }
        Ok(Self(values))
    }

    /// Wraps values without validation.
    pub fn from_vec(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn constant(mesh: &StructuredMesh, value: f64) -> Self {
        Self(vec![value; mesh.num_nodes()])
    }

    /// Nodal interpolant of a function of position.
    pub fn from_fn(mesh: &StructuredMesh, f: impl Fn([f64; 2]) -> f64) -> Self {
        Self(mesh.coords().iter().map(|&c| f(c)).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Per-element diagonal `d x d` coefficient (a P0 matrix function).
#[derive(Debug, Clone, PartialEq)]
pub struct ElementDiagCoeff {
    dim: usize,
    entries: Vec<[f64; 2]>,
}

impl ElementDiagCoeff {
    pub fn new(dim: usize, entries: Vec<[f64; 2]>) -> Self {
        Self { dim, entries }
    }

    pub fn uniform(mesh: &StructuredMesh, value: f64) -> Self {
        Self::from_scalar(mesh, vec![value; mesh.num_elements()])
    }

    /// Isotropic coefficient `value * I` per element.
    pub fn from_scalar(mesh: &StructuredMesh, values: Vec<f64>) -> Self {
        let entries = values.into_iter().map(|v| [v, v]).collect();
        Self {
            dim: mesh.dim(),
            entries,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[[f64; 2]] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entry `(k, k)` on element `e`.
    pub fn get(&self, e: usize, k: usize) -> f64 {
        self.entries[e][k]
    }

    fn validate(&self, mesh: &StructuredMesh) -> Result<()> {
        if self.entries.len() != mesh.num_elements() || self.dim != mesh.dim() {
            return Err(Error::Assembly(format!(
                "coefficient has {} entries of dim {}, mesh has {} elements of dim {}",
                self.entries.len(),
                self.dim,
                mesh.num_elements(),
                mesh.dim()
            )));
        }
        for (e, d) in self.entries.iter().enumerate() {
            for &v in &d[..self.dim] {
                if v < 0.0 || !v.is_finite() {
                    return Err(Error::Assembly(format!(
                        "coefficient entry {v} on element {e} is negative or not finite"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Reference quadrature in barycentric coordinates. Weights sum to one.
#[derive(Debug, Clone)]
struct Quadrature {
    points: Vec<[f64; 3]>,
    weights: Vec<f64>,
}

impl Quadrature {
    /// 3-point Gauss-Legendre on a segment, exact to degree 5.
    fn gauss3() -> Self {
        let d = 0.5 * 0.6f64.sqrt();
        let t = [0.5 - d, 0.5, 0.5 + d];
        Self {
            points: t.iter().map(|&t| [1.0 - t, t, 0.0]).collect(),
            weights: vec![5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0],
        }
    }

    /// Symmetric 6-point triangle rule, exact to degree 4.
    fn triangle6() -> Self {
        let a1 = 0.445_948_490_915_964_9;
        let b1 = 1.0 - 2.0 * a1;
        let w1 = 0.223_381_589_678_011_47;
        let a2 = 0.091_576_213_509_770_74;
        let b2 = 1.0 - 2.0 * a2;
        let w2 = (1.0 - 3.0 * w1) / 3.0;
        Self {
            points: vec![
                [a1, a1, b1],
                [a1, b1, a1],
                [b1, a1, a1],
                [a2, a2, b2],
                [a2, b2, a2],
                [b2, a2, a2],
            ],
            weights: vec![w1, w1, w1, w2, w2, w2],
        }
    }
}

/// Operators and quadrature shared by every solve on one mesh.
#[derive(Debug, Clone)]
pub struct FeSpace {
    mesh: Arc<StructuredMesh>,
    lumped: Vec<f64>,
    pattern: Arc<Pattern>,
    /// Value-array positions of the local pairs `(a, b)`, stored at `3 * a + b`.
    scatter: Vec<[usize; 9]>,
    stiffness: CsrMatrix,
    mass: CsrMatrix,
    quad: Quadrature,
}

impl FeSpace {
    pub fn new(mesh: &StructuredMesh) -> Self {
        Self::from_arc(Arc::new(mesh.clone()))
    }

    pub fn from_arc(mesh: Arc<StructuredMesh>) -> Self {
        let n = mesh.num_nodes();
        let nv = mesh.vertices_per_element();
        let measure = mesh.element_measure();

        let mut lumped = vec![0.0; n];
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); n];
        for e in 0..mesh.num_elements() {
            let verts = mesh.element_vertices(e);
            for &a in verts {
                lumped[a] += measure / nv as f64;
                rows[a].extend_from_slice(verts);
            }
        }
        let pattern = Arc::new(Pattern::from_rows(rows, n));
        let scatter = (0..mesh.num_elements())
            .map(|e| {
                let verts = mesh.element_vertices(e);
                let mut pos = [usize::MAX; 9];
                for (a, &va) in verts.iter().enumerate() {
                    for (b, &vb) in verts.iter().enumerate() {
                        pos[3 * a + b] = pattern.position(va, vb).expect("pattern covers element");
                    }
                }
                pos
            })
            .collect();
        let quad = if mesh.dim() == 1 {
            Quadrature::gauss3()
        } else {
            Quadrature::triangle6()
        };

        let mut space = Self {
            mesh,
            lumped,
            stiffness: CsrMatrix::zeros(pattern.clone()),
            mass: CsrMatrix::zeros(pattern.clone()),
            pattern,
            scatter,
            quad,
        };
        let mut k = CsrMatrix::zeros(space.pattern.clone());
        space.assemble_stiffness_into(&mut k, None);
        space.stiffness = k;
        space.mass = space.assemble_consistent_mass();
        space
    }

    pub fn mesh(&self) -> &StructuredMesh {
        &self.mesh
    }

    pub fn mesh_arc(&self) -> &Arc<StructuredMesh> {
        &self.mesh
    }

    pub fn num_nodes(&self) -> usize {
        self.mesh.num_nodes()
    }

    /// Node adjacency pattern shared by all node-by-node operators.
    pub fn pattern(&self) -> &Arc<Pattern> {
        &self.pattern
    }

    /// Diagonal of the lumped mass, `w_i = int basis_i`.
    pub fn lumped_weights(&self) -> &[f64] {
        &self.lumped
    }

    /// Stiffness with unit coefficient.
    pub fn unit_stiffness(&self) -> &CsrMatrix {
        &self.stiffness
    }

    /// Consistent (exact) mass matrix.
    pub fn consistent_mass(&self) -> &CsrMatrix {
        &self.mass
    }

    fn check(&self, f: &NodalField) -> Result<()> {
        if f.len() != self.num_nodes() {
            return Err(Error::MeshMismatch {
                expected: self.num_nodes(),
                found: f.len(),
            });
        }
        Ok(())
    }

    /// `(f, g)_h = int I_h(f g)`.
    pub fn lumped_inner(&self, f: &NodalField, g: &NodalField) -> Result<f64> {
        self.check(f)?;
        self.check(g)?;
        Ok(self
            .lumped
            .iter()
            .zip(f.values().iter().zip(g.values()))
            .map(|(w, (a, b))| w * a * b)
            .sum())
    }

    /// `int phi` (exact for P1).
    pub fn integral(&self, f: &NodalField) -> f64 {
        self.lumped.iter().zip(f.values()).map(|(w, v)| w * v).sum()
    }

    /// Nodal interpolant `I_h(fun(field))`.
    pub fn interpolate(&self, field: &NodalField, fun: impl Fn(f64) -> f64 + Sync + Send) -> Result<NodalField> {
        self.check(field)?;
        let v = field.values();
        let out = par::map_range(v.len(), |i| fun(v[i]));
        NodalField::new(&self.mesh, out)
    }

    /// Nodal interpolant of a function of two fields.
    pub fn interpolate2(
        &self,
        a: &NodalField,
        b: &NodalField,
        fun: impl Fn(f64, f64) -> f64 + Sync + Send,
    ) -> Result<NodalField> {
        self.check(a)?;
        self.check(b)?;
        let (va, vb) = (a.values(), b.values());
        let out = par::map_range(va.len(), |i| fun(va[i], vb[i]));
        NodalField::new(&self.mesh, out)
    }

    /// Assembles `(D grad u, grad v)` for a per-element diagonal coefficient
    /// `D`; `None` means the identity.
    pub fn stiffness(&self, coeff: Option<&ElementDiagCoeff>) -> Result<CsrMatrix> {
        let mut k = CsrMatrix::zeros(self.pattern.clone());
        if let Some(c) = coeff {
            c.validate(&self.mesh)?;
        }
        self.assemble_stiffness_into(&mut k, coeff);
        Ok(k)
    }

    /// Like [`FeSpace::stiffness`] but reuses the storage of `out`, which must
    /// share this space's pattern.
    pub fn stiffness_into(&self, out: &mut CsrMatrix, coeff: &ElementDiagCoeff) -> Result<()> {
        coeff.validate(&self.mesh)?;
        assert!(Arc::ptr_eq(out.pattern(), &self.pattern));
        self.assemble_stiffness_into(out, Some(coeff));
        Ok(())
    }

    fn assemble_stiffness_into(&self, out: &mut CsrMatrix, coeff: Option<&ElementDiagCoeff>) {
        let mesh = &*self.mesh;
        let dim = mesh.dim();
        let measure = mesh.element_measure();
        let vals = out.values_mut();
        vals.iter_mut().for_each(|v| *v = 0.0);
        for (e, pos) in self.scatter.iter().enumerate() {
            for k in 0..dim {
                let h = mesh.spacing(k);
                let d = coeff.map_or(1.0, |c| c.get(e, k));
                let c = d * measure / (h * h);
                let j = k + 1;
                vals[pos[0]] += c;
                vals[pos[3 * j + j]] += c;
                vals[pos[j]] -= c;
                vals[pos[3 * j]] -= c;
            }
        }
    }

    fn assemble_consistent_mass(&self) -> CsrMatrix {
        let mut m = CsrMatrix::zeros(self.pattern.clone());
        let nv = self.mesh.vertices_per_element();
        let measure = self.mesh.element_measure();
        // int l_a l_b = |I| (1 + delta_ab) / ((d + 1)(d + 2))
        let denom = (nv * (nv + 1)) as f64;
        let vals = m.values_mut();
        for pos in &self.scatter {
            for a in 0..nv {
                for b in 0..nv {
                    let f = if a == b { 2.0 } else { 1.0 };
                    vals[pos[3 * a + b]] += f * measure / denom;
                }
            }
        }
        m
    }

    /// Values of `field` at the quadrature points of element `e`.
    #[inline]
    fn at_quad_points<'a>(&'a self, e: usize, v: &'a [f64]) -> impl Iterator<Item = (f64, &'a [f64; 3])> + 'a {
        let verts = self.mesh.element_vertices(e);
        self.quad.points.iter().map(move |lam| {
            let x = verts.iter().zip(lam).map(|(&n, l)| l * v[n]).sum::<f64>();
            (x, lam)
        })
    }

    /// `b_i = int g(a, c) basis_i` for P1 fields `a`, `c`, by element quadrature
    /// exact to polynomial degree 4 (non-lumped product).
    pub fn quad_product2(
        &self,
        a: &NodalField,
        c: &NodalField,
        g: impl Fn(f64, f64) -> f64 + Sync + Send,
    ) -> Result<Vec<f64>> {
        self.check(a)?;
        self.check(c)?;
        let nv = self.mesh.vertices_per_element();
        let measure = self.mesh.element_measure();
        let (va, vc) = (a.values(), c.values());
        let local = par::map_range(self.mesh.num_elements(), |e| {
            let mut out = [0.0; 3];
            let qa = self.at_quad_points(e, va);
            let qc = self.at_quad_points(e, vc);
            for ((x, lam), ((y, _), w)) in qa.zip(qc.zip(&self.quad.weights)) {
                let gv = g(x, y) * w * measure;
                for k in 0..nv {
                    out[k] += gv * lam[k];
                }
            }
            out
        });
        let mut b = vec![0.0; self.num_nodes()];
        for (e, loc) in local.iter().enumerate() {
            for (k, &n) in self.mesh.element_vertices(e).iter().enumerate() {
                b[n] += loc[k];
            }
        }
        if let Some((node, &value)) = b.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Evaluation { node, value });
        }
        Ok(b)
    }

    /// Single-field version of [`FeSpace::quad_product2`].
    pub fn quad_product(&self, a: &NodalField, g: impl Fn(f64) -> f64 + Sync + Send) -> Result<Vec<f64>> {
        self.quad_product2(a, a, |x, _| g(x))
    }

    /// Mean of `g(field)` over each element, by the same quadrature.
    pub fn element_means(&self, field: &NodalField, g: impl Fn(f64) -> f64 + Sync + Send) -> Vec<f64> {
        let v = field.values();
        par::map_range(self.mesh.num_elements(), |e| {
            self.at_quad_points(e, v)
                .zip(&self.quad.weights)
                .map(|((x, _), w)| w * g(x))
                .sum()
        })
    }

    /// `int g(field)` by element quadrature.
    pub fn integrate(&self, field: &NodalField, g: impl Fn(f64) -> f64 + Sync + Send) -> f64 {
        let measure = self.mesh.element_measure();
        self.element_means(field, g).iter().sum::<f64>() * measure
    }

    /// `(grad phi, grad phi)` from the axis difference quotients on each element.
    pub fn dirichlet_energy(&self, phi: &NodalField) -> f64 {
        let mesh = &*self.mesh;
        let v = phi.values();
        let measure = mesh.element_measure();
        let mut acc = 0.0;
        for el in mesh.elements() {
            for k in 0..mesh.dim() {
                let s = (v[el.along(k)] - v[el.x0()]) / mesh.spacing(k);
                acc += s * s;
            }
        }
        acc * measure
    }

    /// Exact `||f||_{L2}^2` of the P1 function with nodal values `f`.
    pub fn l2_norm_sq(&self, f: &[f64]) -> f64 {
        let nv = self.mesh.vertices_per_element();
        let measure = self.mesh.element_measure();
        // int u^2 = |I| / ((d+1)(d+2)) * (sum u_a^2 + (sum u_a)^2)
        let scale = measure / (nv * (nv + 1)) as f64;
        let mut acc = 0.0;
        for e in 0..self.mesh.num_elements() {
            let mut sq = 0.0;
            let mut s = 0.0;
            for &n in self.mesh.element_vertices(e) {
                sq += f[n] * f[n];
                s += f[n];
            }
            acc += sq + s * s;
        }
        acc * scale
    }

    pub fn l2_norm(&self, f: &NodalField) -> f64 {
        self.l2_norm_sq(f.values()).sqrt()
    }

    /// Nodal interpolant on this space's mesh of a P1 field living on `from`.
    pub fn transfer_from(&self, from: &FeSpace, field: &NodalField) -> Result<NodalField> {
        from.check(field)?;
        let v = field.values();
        Ok(NodalField::from_vec(
            self.mesh
                .coords()
                .iter()
                .map(|&p| from.mesh.evaluate(v, p))
                .collect(),
        ))
    }
}

/// `|| reference - I(f) ||_{L2}` on the fine mesh, where `I(f)` interpolates
/// the coarse field onto the nodes of the reference mesh.
pub fn l2_error(coarse: &FeSpace, f: &NodalField, fine: &FeSpace, reference: &NodalField) -> Result<f64> {
    if !coarse.mesh().is_refined_by(fine.mesh()) {
        return Err(Error::IncompatibleMeshes(format!(
            "reference mesh ({} cells) does not refine the coarse mesh ({} cells)",
            fine.mesh().nx(),
            coarse.mesh().nx()
        )));
    }
    fine.check(reference)?;
    let lifted = fine.transfer_from(coarse, f)?;
    let diff: Vec<f64> = reference
        .values()
        .iter()
        .zip(lifted.values())
        .map(|(r, l)| r - l)
        .collect();
    Ok(fine.l2_norm_sq(&diff).sqrt())
}
