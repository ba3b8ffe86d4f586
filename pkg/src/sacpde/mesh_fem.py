"""Uniform periodic simplicial meshes on (0,R)^d and the P1 element toolkit.

The mesh splits every cell of a uniform n^d grid into d! path simplices
(intervals for d=1, two triangles per square, six tetrahedra per cube), with
opposite faces identified so there are exactly n**d degrees of freedom.  This
family is closed under dyadic refinement, which makes nodal prolongation
exact and lets the rate harness compare levels without interpolation error.

All integrals are evaluated with a fixed simplex quadrature rule whose
polynomial exactness degree is chosen at space construction (default 4: the
cubic nonlinearity times a P1 test function is degree 4, and the discrete
energy identity holds to rounding only when those integrals are exact).
"""

import itertools

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import quadrature
from .errors import SolverError, ValidationError

MASS_SOLVE_RTOL = 1e-12


class PeriodicMesh:
    """Geometry and connectivity of the periodic path-simplex mesh.

    Attributes
    ----------
    d, R, n, h : dimension, period, cells per axis, mesh size R/n
    vertices : (n**d, d) dof coordinates
    elements : (E, d+1) dof index per element corner, E = d! * n**d
    corners : (E, d+1, d) unwrapped corner coordinates (for quadrature)
    volumes : (E,) element measures (all equal to h**d / d!)
    grads : (E, d+1, d) constant gradients of the P1 basis on each element
    """

    def __init__(self, d, R, n):
        if d not in (1, 2, 3):
            raise ValidationError(f"d must be one of 1, 2, 3 (got {d})")
        if not isinstance(n, (int, np.integer)) or isinstance(n, bool) or n < 2:
            raise ValidationError(f"n must be an integer >= 2 (got {n!r})")
        if not np.isfinite(R) or R <= 0:
            raise ValidationError(f"R must be a positive real number (got {R!r})")
        self.d = int(d)
        self.R = float(R)
        self.n = int(n)
        self.h = self.R / self.n

        cells = np.indices((self.n,) * d).reshape(d, -1).T  # (n^d, d)
        self.vertices = cells * self.h

        elem_blocks, corner_blocks, grad_blocks = [], [], []
        for perm in itertools.permutations(range(d)):
            offsets = np.zeros((d + 1, d), dtype=np.int64)
            for step, axis in enumerate(perm):
                offsets[step + 1] = offsets[step]
                offsets[step + 1, axis] += 1
            g = cells[:, None, :] + offsets[None, :, :]  # (n^d, d+1, d)
            dofs = np.ravel_multi_index(
                tuple(np.moveaxis(g % self.n, -1, 0)), (self.n,) * d
            )
            elem_blocks.append(dofs)
            corner_blocks.append(g * self.h)
            grads = np.zeros((d + 1, d))
            grads[0, perm[0]] = -1.0 / self.h
            for step in range(1, d):
                grads[step, perm[step - 1]] = 1.0 / self.h
                grads[step, perm[step]] = -1.0 / self.h
            grads[d, perm[d - 1]] = 1.0 / self.h
            grad_blocks.append(np.broadcast_to(grads, (self.n**d, d + 1, d)))

        self.elements = np.concatenate(elem_blocks).astype(np.int64)
        self.corners = np.concatenate(corner_blocks)
        self.grads = np.ascontiguousarray(np.concatenate(grad_blocks))
        vol = self.h**d
        for m in range(2, d + 1):
            vol /= m
        self.volumes = np.full(len(self.elements), vol)

    @property
    def dof_count(self):
        return self.n**self.d

    def metadata(self):
        return {
            "d": self.d,
            "R": self.R,
            "n": self.n,
            "h": self.h,
            "dofs": self.dof_count,
            "elements": int(len(self.elements)),
        }


class FemSpace:
    """P1 space on a PeriodicMesh plus assembled mass/stiffness operators.

    ``lumped=True`` switches every integral to the nodal vertex rule,
    which diagonalises the mass matrix but is exact only to degree 1, so
    the per-step energy identity no longer holds to rounding (the identity
    suite reports that configuration as an expected failure).
    """

    def __init__(self, mesh, quad_degree=4, lumped=False):
        self.mesh = mesh
        self.lumped = bool(lumped)
        if self.lumped:
            pts, wts = quadrature.vertex_rule(mesh.d)
            self.quad_degree = 1
        else:
            pts, wts = quadrature.simplex_rule(mesh.d, quad_degree)
            self.quad_degree = int(quad_degree)
        self.quad_points = pts          # (Q, d+1) barycentric = P1 values
        self.quad_weights = wts         # (Q,), sums to 1
        # w_q * lam_j(q) * lam_k(q), ready for weighted-mass assembly
        self._wjk = np.einsum("q,qj,qk->qjk", wts, pts, pts)

        el = mesh.elements
        nl = mesh.d + 1
        self._rows = np.repeat(el, nl, axis=1).ravel()
        self._cols = np.tile(el, (1, nl)).ravel()
        self._shape = (mesh.dof_count, mesh.dof_count)

        vol = mesh.volumes[:, None, None]
        mass_data = np.broadcast_to(
            self._wjk.sum(axis=0), (len(el), nl, nl)
        ) * vol
        stiff_data = np.einsum("ejd,ekd->ejk", mesh.grads, mesh.grads) * vol
        self.mass = self._from_data(mass_data)
        self.stiffness = self._from_data(stiff_data)
        self._mass_data = mass_data.ravel()
        self._stiff_data = stiff_data.ravel()
        self._mass_lu = None
        self._phys_quad = None
        self._exact_twin = None

    # -- assembly helpers -------------------------------------------------

    def _from_data(self, data):
        coo = sp.coo_matrix(
            (np.asarray(data).ravel(), (self._rows, self._cols)), shape=self._shape
        )
        return coo.tocsr()

    def system_matrix(self, k, weight_values):
        """Sparse M + k*(A + W) with W the weighted mass for ``weight_values``.

        weight_values has shape (E, Q): the nonlinearity derivative at the
        quadrature points.  Shares the precomputed scatter pattern, so one
        COO->CSR conversion per Newton iteration is the whole cost.
        """
        wdata = np.tensordot(weight_values, self._wjk, axes=(1, 0))
        wdata *= self.mesh.volumes[:, None, None]
        data = self._mass_data + k * (self._stiff_data + wdata.ravel())
        coo = sp.coo_matrix((data, (self._rows, self._cols)), shape=self._shape)
        return coo.tocsr()

    # -- pointwise evaluation and integration ------------------------------

    def element_values(self, coeffs):
        """Values of the P1 function at all quadrature points, shape (E, Q)."""
        return np.asarray(coeffs)[self.mesh.elements] @ self.quad_points.T

    def physical_quad_points(self):
        if self._phys_quad is None:
            self._phys_quad = np.einsum(
                "qj,ejd->eqd", self.quad_points, self.mesh.corners
            )
        return self._phys_quad

    def integrate(self, values):
        """Integral over the torus of per-quadrature-point values (..., E, Q)."""
        v = np.asarray(values)
        return (v @ self.quad_weights) @ self.mesh.volumes

    def load_vector(self, values):
        """Assemble b_i = int values * phi_i from point values (E, Q)."""
        be = (values * self.quad_weights) @ self.quad_points
        be *= self.mesh.volumes[:, None]
        b = np.zeros(self.mesh.dof_count)
        np.add.at(b, self.mesh.elements, be)
        return b

    # -- linear algebra -----------------------------------------------------

    def solve_mass(self, rhs):
        """Solve M x = rhs with the cached factorization, checking the residual."""
        if self._mass_lu is None:
            self._mass_lu = spla.splu(self.mass.tocsc())
        x = self._mass_lu.solve(rhs)
        resid = np.linalg.norm(self.mass @ x - rhs)
        if not resid <= MASS_SOLVE_RTOL * (1.0 + np.linalg.norm(rhs)):
            raise SolverError(
                f"mass solve residual {resid:.3e} exceeds contract "
                f"{MASS_SOLVE_RTOL:.1e} * (1 + |rhs|)"
            )
        return x

    def exact_twin(self):
        """Same mesh, degree-4 quadrature: the space whose integrals are exact
        for the quartic terms.  Returns self when already exact."""
        if not self.lumped and self.quad_degree >= 4:
            return self
        if self._exact_twin is None:
            self._exact_twin = FemSpace(self.mesh, 4, lumped=False)
        return self._exact_twin

    def metadata(self):
        md = self.mesh.metadata()
        md["quad_degree"] = self.quad_degree
        md["lumped"] = self.lumped
        return md


class Field:
    """A P1 coefficient vector bound to its space."""

    def __init__(self, space, coeffs, name=""):
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape != (space.mesh.dof_count,):
            raise ValidationError(
                f"coeffs must have shape ({space.mesh.dof_count},), got {coeffs.shape}"
            )
        self.space = space
        self.coeffs = coeffs
        self.name = name

    def copy(self, name=None):
        return Field(self.space, self.coeffs.copy(), self.name if name is None else name)


def build_periodic_mesh(d, R, n):
    return PeriodicMesh(d, R, n)


def build_space(mesh, quad_degree=4, lumped=False):
    return FemSpace(mesh, quad_degree=quad_degree, lumped=lumped)


def as_coeffs(u):
    return u.coeffs if isinstance(u, Field) else np.asarray(u, dtype=float)


def l2_project(space, g, name=""):
    """L2 projection onto the space.

    ``g`` may be a callable of position arrays (..., d), a Field on a nested
    finer space of the same torus (projection computed exactly through the
    prolongation transpose), or a Field/array already on this space.
    """
    if callable(g):
        xq = space.physical_quad_points()
        b = space.load_vector(np.asarray(g(xq), dtype=float))
    elif isinstance(g, Field):
        if g.space is space or g.space.mesh.n == space.mesh.n:
            return Field(space, as_coeffs(g).copy(), name)
        P = prolongation_matrix(space.mesh, g.space.mesh)
        b = P.T @ (g.space.mass @ g.coeffs)
    else:
        arr = np.asarray(g, dtype=float)
        if arr.shape != (space.mesh.dof_count,):
            raise ValidationError(
                "l2_project expects a callable, a Field, or a coefficient "
                f"vector of length {space.mesh.dof_count} (got shape {arr.shape})"
            )
        return Field(space, arr.copy(), name)
    return Field(space, space.solve_mass(b), name)


def nodal_interpolant(space, g, name=""):
    """Nodal interpolation of a callable (the 'interpolate' initial-datum mode)."""
    vals = np.asarray(g(space.mesh.vertices), dtype=float)
    return Field(space, vals, name)


def discrete_laplacian(space, u):
    """The mesh Laplacian: solve M w = -A u, so (w, v) = -(grad u, grad v)."""
    w = space.solve_mass(-(space.stiffness @ as_coeffs(u)))
    return Field(space, w)


def norms(space, u):
    """Return (l2, h1_semi) norms of a P1 function; exact mass/stiffness forms."""
    c = as_coeffs(u)
    l2sq = c @ (space.mass @ c)
    h1sq = c @ (space.stiffness @ c)
    return np.sqrt(max(l2sq, 0.0)), np.sqrt(max(h1sq, 0.0))


def _path_dofs(cells, axis_order, n):
    """Dof indices of the path simplex with given corner cells and axis order.

    cells: (B, d) integer lower corners; axis_order: (B, d) axis visited at
    each step.  Returns (B, d+1) raveled periodic dof indices.
    """
    B, d = cells.shape
    g = np.repeat(cells[:, None, :], d + 1, axis=1)
    step = np.zeros((B, d + 1, d), dtype=np.int64)
    rows = np.arange(B)[:, None]
    for m in range(d):
        step[rows, m + 1, axis_order[:, m : m + 1]] = 1
    g = g + np.cumsum(step, axis=1)
    return np.ravel_multi_index(tuple(np.moveaxis(g % n, -1, 0)), (n,) * d)


def prolongation_matrix(coarse_mesh, fine_mesh):
    """Nodal interpolation operator from the coarse space into the fine one.

    Requires the same torus and a dyadic refinement ratio; on this mesh
    family the fine mesh refines the coarse one, so prolongation is exact
    as functions (norm-preserving), which the tests pin down.
    """
    if coarse_mesh.d != fine_mesh.d or coarse_mesh.R != fine_mesh.R:
        raise ValidationError(
            "prolongation requires meshes on the same torus "
            f"(got d={coarse_mesh.d},{fine_mesh.d} R={coarse_mesh.R},{fine_mesh.R})"
        )
    nc, nf = coarse_mesh.n, fine_mesh.n
    if nf % nc != 0:
        raise ValidationError(f"fine n={nf} is not a multiple of coarse n={nc}")
    r = nf // nc
    if r & (r - 1):
        raise ValidationError(f"refinement ratio must be a power of two (got {r})")

    d = coarse_mesh.d
    fine_idx = np.indices((nf,) * d).reshape(d, -1).T  # (nf^d, d)
    cells = fine_idx // r
    t = (fine_idx % r) / r  # exact binary fractions
    order = np.argsort(-t, axis=1, kind="stable")  # descending coordinates
    s = np.take_along_axis(t, order, axis=1)
    lam = np.empty((len(fine_idx), d + 1))
    lam[:, 0] = 1.0 - s[:, 0]
    for m in range(1, d):
        lam[:, m] = s[:, m - 1] - s[:, m]
    lam[:, d] = s[:, d - 1]
    dofs = _path_dofs(cells, order, nc)

    rows = np.repeat(np.arange(len(fine_idx)), d + 1)
    mask = lam.ravel() != 0.0
    P = sp.coo_matrix(
        (lam.ravel()[mask], (rows[mask], dofs.ravel()[mask])),
        shape=(nf**d, nc**d),
    )
    return P.tocsr()


def prolongate(field, fine_space):
    P = prolongation_matrix(field.space.mesh, fine_space.mesh)
    return Field(fine_space, P @ field.coeffs, field.name)
