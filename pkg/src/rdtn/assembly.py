"""P1 finite element matrices and the operator function ``B(k)``.

    B(k) = K - k^2 M - sum'_{n=0..N} z_n(k) / (pi R) (c_n c_n^T + s_n s_n^T)

``K`` is the stiffness matrix, ``M`` the mass matrix weighted by the
refractive index, ``c_n``/``s_n`` the boundary traces of ``cos(n theta)`` and
``sin(n theta)`` on the truncation circle, and ``z_n = k H_n'(kR)/H_n(kR)``.
The primed sum halves the ``n = 0`` term.  The boundary term couples all
boundary vertices, so it is stored as a dense block and scattered into a
precomputed sparse pattern on every evaluation.
"""
import io
import logging
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import pymetis
import scipy.io
import scipy.sparse.linalg as spla

from . import specfun
from .errors import AssemblyError, SingularMatrixError
from .mesh import REGION_INSIDE, TAG_GAMMA_R

log = logging.getLogger(__name__)

DEGENERATE_AREA_RTOL = 1e-14


def boundary_quadrature_order(N, edge_length):
    """Gauss points per boundary edge: enough to resolve ``cos(N theta)`` along it."""
    return max(6, int(math.ceil(3 + N * edge_length)))


@dataclass(frozen=True, eq=False)
class FemSystem:
    """Assembled matrices for one mesh and one problem.

    Attributes
    ----------
    K, M : scipy.sparse.csr_matrix
        Stiffness and index-weighted mass matrices.
    C, S : ndarray, shape (len(boundary_dofs), N + 1)
        Column ``n`` holds ``c_n`` (resp. ``s_n``) restricted to the boundary vertices.
    boundary_dofs : ndarray of int
        Vertex indices on the truncation circle.
    """

    K: sp.csr_matrix
    M: sp.csr_matrix
    C: np.ndarray
    S: np.ndarray
    boundary_dofs: np.ndarray
    R: float
    N: int
    n_inside: float

    @property
    def size(self):
        return self.K.shape[0]

    def trace_vector(self, n, kind="cos"):
        """Full-length ``c_n`` or ``s_n``."""
        out = np.zeros(self.size)
        out[self.boundary_dofs] = (self.C if kind == "cos" else self.S)[:, n]
        return out

    def mode_weights(self, k):
        """``w_n z_n(k) / (pi R)`` for ``n = 0..N`` with ``w_0 = 1/2``."""
        z = specfun.dtn_coefficients(self.N, k, self.R)
        w = z / (math.pi * self.R)
        w[0] *= 0.5
        return w

    def mode_weights_dk(self, k):
        z = specfun.dtn_coefficients_dk(self.N, k, self.R)
        w = z / (math.pi * self.R)
        w[0] *= 0.5
        return w

    def dtn_block(self, k, weights=None):
        """Dense boundary block ``sum' z_n/(pi R) (c_n c_n^T + s_n s_n^T)``, exactly symmetric."""
        w = self.mode_weights(k) if weights is None else weights
        block = (self.C * w) @ self.C.T + (self.S * w) @ self.S.T
        return 0.5 * (block + block.T)


def _element_geometry(mesh):
    p = mesh.vertices[mesh.triangles]
    x, y = p[..., 0], p[..., 1]
    # gradient numerators: b_i = y_j - y_k, c_i = x_k - x_j (i, j, k cyclic)
    b = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1)
    c = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1)
    area = 0.5 * (b[:, 0] * c[:, 1] - b[:, 1] * c[:, 0])
    return b, c, area


def assemble_volume(mesh, n_inside):
    """Stiffness ``K`` and weighted mass ``M`` by closed-form P1 element integrals."""
    b, c, area = _element_geometry(mesh)
    h2 = mesh.nominal_h**2
    if np.any(area < DEGENERATE_AREA_RTOL * h2):
        bad = int(np.argmin(area))
        raise AssemblyError(f"degenerate triangle {bad} with area {area[bad]:.3e}")
    ke = (b[:, :, None] * b[:, None, :] + c[:, :, None] * c[:, None, :]) / (4 * area)[:, None, None]
    index = np.where(mesh.element_region == REGION_INSIDE, n_inside, 1.0)
    base = (np.ones((3, 3)) + np.eye(3)) / 12.0
    me = (index * area)[:, None, None] * base[None]
    rows = np.repeat(mesh.triangles, 3, axis=1).ravel()
    cols = np.tile(mesh.triangles, (1, 3)).ravel()
    n = mesh.num_vertices
    K = sp.csr_matrix((ke.ravel(), (rows, cols)), shape=(n, n))
    M = sp.csr_matrix((me.ravel(), (rows, cols)), shape=(n, n))
    K.sum_duplicates()
    M.sum_duplicates()
    return K, M


def _boundary_edges(mesh):
    edges = mesh.boundary_edges()
    if len(edges) == 0 or not np.all(mesh.vertex_tag[edges] == TAG_GAMMA_R):
        raise AssemblyError("mesh boundary must lie on the truncation circle")
    return edges


def boundary_quadrature(mesh, N):
    """Quadrature points on the polygonal truncation boundary.

    Returns
    -------
    edges : (E, 2) int
    points : list of (q, 2) arrays per edge
    weights : list of (q,) arrays (including the edge length)
    shape_values : list of (q, 2) arrays, the two hat functions of the edge
    """
    edges = _boundary_edges(mesh)
    pts, wts, phis = [], [], []
    cache = {}
    for a, b in edges:
        pa, pb = mesh.vertices[a], mesh.vertices[b]
        length = float(np.hypot(*(pb - pa)))
        q = boundary_quadrature_order(N, length)
        if q not in cache:
            t, w = np.polynomial.legendre.leggauss(q)
            cache[q] = (0.5 * (t + 1), 0.5 * w)
        t, w = cache[q]
        pts.append(pa[None, :] * (1 - t)[:, None] + pb[None, :] * t[:, None])
        wts.append(w * length)
        phis.append(np.column_stack([1 - t, t]))
    return edges, pts, wts, phis


def assemble_traces(mesh, N):
    """Boundary Fourier traces ``c_n[i] = int phi_i cos(n theta) ds`` and ``s_n``."""
    edges, pts, wts, phis = boundary_quadrature(mesh, N)
    bdofs = np.unique(edges)
    local = {int(v): i for i, v in enumerate(bdofs)}
    C = np.zeros((len(bdofs), N + 1))
    S = np.zeros((len(bdofs), N + 1))
    orders = np.arange(N + 1)
    for (a, b), x, w, phi in zip(edges, pts, wts, phis):
        theta = np.arctan2(x[:, 1], x[:, 0])
        cosn = np.cos(np.outer(theta, orders))
        sinn = np.sin(np.outer(theta, orders))
        for vert, col in ((a, 0), (b, 1)):
            wp = w * phi[:, col]
            C[local[int(vert)]] += wp @ cosn
            S[local[int(vert)]] += wp @ sinn
    S[:, 0] = 0.0
    return bdofs, C, S


def assemble(mesh, problem):
    """Assemble the :class:`FemSystem` for ``mesh`` and ``problem``."""
    K, M = assemble_volume(mesh, problem.n_inside)
    bdofs, C, S = assemble_traces(mesh, problem.N)
    log.debug("assembled %d dofs, %d boundary dofs, N = %d", K.shape[0], len(bdofs), problem.N)
    return FemSystem(K, M, C, S, bdofs, float(problem.R), int(problem.N), float(problem.n_inside))


class OperatorFunction:
    """Evaluate ``B(k)`` and ``B'(k)`` on a fixed sparse pattern.

    The pattern is the union of the volume matrices and the dense boundary
    block, so each evaluation only fills the data array.
    """

    def __init__(self, system):
        self.system = system
        n = system.size
        K = system.K.tocoo()
        M = system.M.tocoo()
        bd = system.boundary_dofs
        br = np.repeat(bd, len(bd))
        bc = np.tile(bd, len(bd))
        rows = np.concatenate([K.row, M.row, br])
        cols = np.concatenate([K.col, M.col, bc])
        keys = cols.astype(np.int64) * n + rows  # column-major order for CSC
        uniq, inverse = np.unique(keys, return_inverse=True)
        nk, nm = len(K.data), len(M.data)
        self._inv_block = inverse[nk + nm:]
        self._nnz = len(uniq)
        self._k_data = np.bincount(inverse[:nk], weights=K.data, minlength=self._nnz)
        self._m_data = np.bincount(inverse[nk:nk + nm], weights=M.data, minlength=self._nnz)
        self._indices = (uniq % n).astype(np.int32)
        self._indptr = np.searchsorted(uniq // n, np.arange(n + 1)).astype(np.int32)
        self._shape = (n, n)
        self._order = None

    @property
    def size(self):
        return self._shape[0]

    def _block_data(self, block):
        flat = block.ravel()
        return (np.bincount(self._inv_block, weights=flat.real, minlength=self._nnz)
                + 1j * np.bincount(self._inv_block, weights=flat.imag, minlength=self._nnz))

    def _build(self, data):
        return sp.csc_matrix((data, self._indices.copy(), self._indptr.copy()), shape=self._shape)

    def evaluate(self, k):
        """``B(k)`` as a complex CSC matrix."""
        k = complex(k)
        block = self.system.dtn_block(k)
        return self._build(self._k_data - k * k * self._m_data - self._block_data(block))

    @property
    def order(self):
        """Fill-reducing ordering, computed on first use from the stiffness graph."""
        if self._order is None:
            self._order = fill_reducing_order(self.system.K, self.system.boundary_dofs)
        return self._order

    def factorize(self, k):
        """LU factors of ``B(k)``."""
        return factor_solve(self.evaluate(k), self.order)

    def derivative(self, k):
        """``dB/dk``."""
        k = complex(k)
        block = self.system.dtn_block(k, self.system.mode_weights_dk(k))
        return self._build(-2 * k * self._m_data - self._block_data(block))

    def __call__(self, k):
        return self.evaluate(k)


def evaluate(opfun, k):
    return opfun.evaluate(k)


def fill_reducing_order(pattern, last=()):
    """Nested-dissection ordering of a symmetric sparsity pattern, ``last`` moved to the end.

    Putting the dense boundary block last keeps its fill confined to one
    trailing dense block instead of spreading through the separators.
    """
    graph = sp.csr_matrix(pattern)
    graph = (graph + graph.T).tocsr()
    graph.setdiag(0)
    graph.eliminate_zeros()
    adjacency = np.split(graph.indices, graph.indptr[1:-1])
    order = np.asarray(pymetis.nested_dissection(adjacency=adjacency)[0], dtype=np.int64)
    tail = np.zeros(graph.shape[0], dtype=bool)
    tail[np.asarray(last, dtype=np.int64)] = True
    return np.concatenate([order[~tail[order]], order[tail[order]]])


class LUSolver:
    """Sparse LU with partial pivoting; single or multiple right-hand sides.

    With ``order`` the matrix is symmetrically permuted before factorising
    and the column ordering of the factorisation is left alone.
    """

    def __init__(self, matrix, order=None):
        matrix = sp.csc_matrix(matrix)
        self.order = None if order is None else np.asarray(order)
        try:
            if self.order is None:
                self._lu = spla.splu(matrix, permc_spec="COLAMD")
            else:
                permuted = matrix[self.order][:, self.order].tocsc()
                self._lu = spla.splu(permuted, permc_spec="NATURAL")
        except RuntimeError as exc:
            if "singular" in str(exc).lower():
                raise SingularMatrixError(str(exc)) from exc
            raise
        self.shape = matrix.shape

    def solve(self, rhs, trans="N"):
        """Solve ``A x = rhs`` (``trans="H"``: ``A^H x = rhs``)."""
        rhs = np.asarray(rhs)
        if np.iscomplexobj(rhs) or self._lu.L.dtype.kind == "c":
            rhs = rhs.astype(complex)
        if self.order is None:
            return self._lu.solve(rhs, trans=trans)
        out = np.empty_like(rhs)
        out[self.order] = self._lu.solve(rhs[self.order], trans=trans)
        return out


def factor_solve(matrix, order=None):
    """Factorise ``matrix``; raises :class:`SingularMatrixError` on an exactly singular pivot."""
    return LUSolver(matrix, order)


# ---------------------------------------------------------------------------
# reference computations
# ---------------------------------------------------------------------------

def dtn_block_bruteforce(mesh, problem, k):
    """Boundary block by direct double quadrature of the kernel

        sum'_n z_n(k)/(pi R) cos(n (theta - theta'))  phi_i(x) phi_j(x')

    over all pairs of boundary edges.  Independent of the separated form
    used by :class:`FemSystem`; returns the block on the sorted boundary vertices.
    """
    edges, pts, wts, phis = boundary_quadrature(mesh, problem.N)
    bdofs = np.unique(edges)
    local = np.searchsorted(bdofs, edges)
    x = np.vstack(pts)
    w = np.concatenate(wts)
    # hat-function values at each quadrature point, scattered to boundary vertices
    phi = np.zeros((len(bdofs), len(x)))
    start = 0
    for (la, lb), ph in zip(local, phis):
        q = len(ph)
        phi[la, start:start + q] += ph[:, 0]
        phi[lb, start:start + q] += ph[:, 1]
        start += q
    theta = np.arctan2(x[:, 1], x[:, 0])
    dtheta = theta[:, None] - theta[None, :]
    z = specfun.dtn_coefficients(problem.N, k, problem.R)
    kernel = np.zeros(dtheta.shape, dtype=complex)
    for n in range(problem.N + 1):
        weight = 0.5 if n == 0 else 1.0
        kernel += weight * z[n] / (math.pi * problem.R) * np.cos(n * dtheta)
    return (phi * w) @ kernel @ (phi * w).T


def nodal_interpolant(mesh, func):
    """Vector of ``func(x, y)`` at the mesh vertices."""
    return np.asarray(func(mesh.vertices[:, 0], mesh.vertices[:, 1]))


def format_triplets(matrix, comment=""):
    """Matrix Market coordinate text (1-based ``i j value`` triplets) for debugging."""
    buf = io.BytesIO()
    scipy.io.mmwrite(buf, sp.coo_matrix(matrix), comment=comment, precision=17)
    return buf.getvalue().decode()
