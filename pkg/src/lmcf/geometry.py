"""Pointwise Lagrangian-graph geometry over a flat torus.

For a graph generated by the differential of a potential u, the induced
metric is mu = I + Q^2 with Q the Hessian of u, the Lagrangian angle is
theta = sum_i arctan(lambda_i(Q)), and the mean curvature 1-form is
-d(theta + kappa*u).  Everything here is a pure function of pointwise
matrix data plus flat partial derivatives.

The angle uses the eigenvalue arctan sum, which picks the globally
continuous branch; arg det(I + iQ) is kept only as an independent oracle
valid on the principal branch (Re det(I + iQ) > 0).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import (
    NonFiniteError,
    PeriodicScalarField,
    SpecMismatchError,
    SymMatrixField,
    VectorField,
    derivative,
    l2_pairing,
    sym_indices,
    tree_sum,
)

JACOBI_TOL = 1e-13
JACOBI_MAX_SWEEPS = 30


@dataclass(frozen=True, eq=False)
class InducedMetricField:
    """mu, its inverse and sqrt(det mu) as fields over one grid."""

    mu: SymMatrixField
    mu_inv: SymMatrixField
    sqrt_det: PeriodicScalarField

    @property
    def spec(self):
        return self.mu.spec


@dataclass(frozen=True, eq=False)
class AngleField:
    """Lagrangian angle of the graph, |theta| < n*pi/2 pointwise."""

    theta: PeriodicScalarField

    @property
    def spec(self):
        return self.theta.spec


def _square_components(q, dim):
    """Components of Q @ Q from the symmetric component stack of Q."""
    if dim == 1:
        return q[0] * q[0],
    if dim == 2:
        q00, q01, q11 = q
        return (q00 * q00 + q01 * q01, q01 * (q00 + q11), q01 * q01 + q11 * q11)
    q00, q01, q02, q11, q12, q22 = q
    return (
        q00 * q00 + q01 * q01 + q02 * q02,
        q00 * q01 + q01 * q11 + q02 * q12,
        q00 * q02 + q01 * q12 + q02 * q22,
        q01 * q01 + q11 * q11 + q12 * q12,
        q01 * q02 + q11 * q12 + q12 * q22,
        q02 * q02 + q12 * q12 + q22 * q22,
    )


def _metric_arrays(qcomps, dim):
    """(mu comps, mu_inv comps, sqrt_det) for mu = I + Q^2."""
    sq = _square_components(qcomps, dim)
    if dim == 1:
        m00 = 1.0 + sq[0]
        return (m00,), (1.0 / m00,), np.sqrt(m00)
    if dim == 2:
        m00, m01, m11 = 1.0 + sq[0], sq[1], 1.0 + sq[2]
        det = m00 * m11 - m01 * m01
        inv = (m11 / det, -m01 / det, m00 / det)
        return (m00, m01, m11), inv, np.sqrt(det)
    m00, m01, m02 = 1.0 + sq[0], sq[1], sq[2]
    m11, m12, m22 = 1.0 + sq[3], sq[4], 1.0 + sq[5]
    c00 = m11 * m22 - m12 * m12
    c01 = m02 * m12 - m01 * m22
    c02 = m01 * m12 - m02 * m11
    det = m00 * c00 + m01 * c01 + m02 * c02
    inv = (
        c00 / det,
        c01 / det,
        c02 / det,
        (m00 * m22 - m02 * m02) / det,
        (m01 * m02 - m00 * m12) / det,
        (m00 * m11 - m01 * m01) / det,
    )
    return (m00, m01, m02, m11, m12, m22), inv, np.sqrt(det)


def induced_metric(Q: SymMatrixField) -> InducedMetricField:
    """First fundamental form mu = I + Q^2 of the graph, with inverse and sqrt(det)."""
    if not np.isfinite(Q.components).all():
        raise NonFiniteError("induced_metric of a non-finite Hessian field")
    mu_c, inv_c, sqrt_det = _metric_arrays(Q.components, Q.spec.dim)
    return InducedMetricField(
        mu=SymMatrixField(Q.spec, np.stack(mu_c)),
        mu_inv=SymMatrixField(Q.spec, np.stack(inv_c)),
        sqrt_det=PeriodicScalarField(Q.spec, sqrt_det),
    )


def jacobi_eigenvalues_sym3(dense, tol=JACOBI_TOL, max_sweeps=JACOBI_MAX_SWEEPS):
    """Eigenvalues of a (..., 3, 3) stack of symmetric matrices.

    Vectorized cyclic Jacobi sweeps; exact symmetry is maintained by
    construction.  Returns eigenvalues sorted ascending along the last axis.
    """
    a = np.array(dense, dtype=np.float64)
    ref = max(float(np.max(np.abs(a))), 1e-300)
    for _ in range(max_sweeps):
        off = max(
            float(np.max(np.abs(a[..., p, q]))) for p, q in ((0, 1), (0, 2), (1, 2))
        )
        if off <= tol * ref:
            break
        for p, q in ((0, 1), (0, 2), (1, 2)):
            apq = a[..., p, q]
            ang = 0.5 * np.arctan2(2.0 * apq, a[..., p, p] - a[..., q, q])
            c = np.cos(ang)[..., np.newaxis]
            s = np.sin(ang)[..., np.newaxis]
            rowp = c * a[..., p, :] + s * a[..., q, :]
            rowq = -s * a[..., p, :] + c * a[..., q, :]
            a[..., p, :] = rowp
            a[..., q, :] = rowq
            colp = c * a[..., :, p] + s * a[..., :, q]
            colq = -s * a[..., :, p] + c * a[..., :, q]
            a[..., :, p] = colp
            a[..., :, q] = colq
    eig = np.stack([a[..., 0, 0], a[..., 1, 1], a[..., 2, 2]], axis=-1)
    return np.sort(eig, axis=-1)


def _angle_values(qcomps, dim):
    """theta = sum_i arctan(lambda_i(Q)) from the component stack of Q."""
    if dim == 1:
        return np.arctan(qcomps[0])
    if dim == 2:
        q00, q01, q11 = qcomps
        mid = 0.5 * (q00 + q11)
        rad = np.sqrt((0.5 * (q00 - q11)) ** 2 + q01 * q01)
        return np.arctan(mid + rad) + np.arctan(mid - rad)
    dense = np.empty(qcomps.shape[1:] + (3, 3))
    for pos, (i, j) in enumerate(sym_indices(3, 2)):
        dense[..., i, j] = qcomps[pos]
        dense[..., j, i] = qcomps[pos]
    lam = jacobi_eigenvalues_sym3(dense)
    at = np.arctan(lam)
    return at[..., 0] + at[..., 1] + at[..., 2]


def lagrangian_angle(Q: SymMatrixField) -> AngleField:
    """Lagrangian angle of the graph with Hessian field Q (continuous branch)."""
    theta = _angle_values(np.asarray(Q.components), Q.spec.dim)
    return AngleField(PeriodicScalarField(Q.spec, theta))


@dataclass(frozen=True)
class OracleAngle:
    value: float
    branch_valid: bool


def angle_oracle(Q) -> OracleAngle:
    """arg det(I + iQ) at one point, principal branch.

    Independent of the eigenvalue route; only comparable to
    ``lagrangian_angle`` while Re det(I + iQ) > 0 (``branch_valid``).
    """
    Q = np.asarray(Q, dtype=np.float64)
    z = np.linalg.det(np.eye(Q.shape[0]) + 1j * Q)
    return OracleAngle(value=float(np.arctan2(z.imag, z.real)), branch_valid=bool(z.real > 0.0))


def angle_gradient(Q) -> np.ndarray:
    """d(theta)/dQ at one point: the inverse metric (I + Q^2)^(-1)."""
    Q = np.asarray(Q, dtype=np.float64)
    return np.linalg.inv(np.eye(Q.shape[0]) + Q @ Q)


def mean_curvature_one_form(u: PeriodicScalarField, kappa: float, scheme: str = "spectral") -> VectorField:
    """Mean curvature 1-form of the graph: -d(theta + kappa*u)."""
    hess = derivative(u, 2, scheme)
    theta = _angle_values(hess.components, u.spec.dim)
    s = PeriodicScalarField(u.spec, theta + kappa * u.values)
    grad = derivative(s, 1, scheme)
    return VectorField(u.spec, -grad.components)


def _component_lookup(tensor):
    table = {}
    for pos, idx in enumerate(tensor.indices):
        table[idx] = tensor.components[pos]
    def get(*idx):
        return table[tuple(sorted(idx))]
    return get


def laplace_beltrami(
    f: PeriodicScalarField,
    M: InducedMetricField,
    route: str = "divergence",
    scheme: str = "spectral",
) -> PeriodicScalarField:
    """Laplace-Beltrami operator of the induced metric applied to f.

    ``divergence`` route: (1/sqrt(det mu)) d_i(sqrt(det mu) mu^{ij} d_j f).
    ``christoffel`` route: mu^{ij} (d_i d_j f - Gamma^k_ij d_k f), kept as an
    independent oracle for the divergence form.
    """
    if f.spec != M.spec:
        raise SpecMismatchError("f and metric live on different grids")
    if route not in ("divergence", "christoffel"):
        raise ValueError(f"unknown route {route!r}")
    n = f.spec.dim
    inv = _component_lookup(M.mu_inv)
    grad_f = derivative(f, 1, scheme).components

    if route == "divergence":
        sqrt_det = M.sqrt_det.values
        out = np.zeros(f.spec.sizes)
        for i in range(n):
            flux = np.zeros(f.spec.sizes)
            for j in range(n):
                flux += inv(i, j) * grad_f[j]
            g = PeriodicScalarField(f.spec, sqrt_det * flux)
            out += derivative(g, 1, scheme).components[i]
        return PeriodicScalarField(f.spec, out / sqrt_det)

    # christoffel route
    mu = _component_lookup(M.mu)
    hess_f = _component_lookup(derivative(f, 2, scheme))
    dmu = {}  # dmu[(l, i, j)] = d_l mu_ij
    for i, j in sym_indices(n, 2):
        comp = PeriodicScalarField(f.spec, mu(i, j))
        g = derivative(comp, 1, scheme).components
        for l in range(n):
            dmu[(l, i, j)] = g[l]
            dmu[(l, j, i)] = g[l]
    out = np.zeros(f.spec.sizes)
    for i in range(n):
        for j in range(n):
            out += inv(i, j) * hess_f(i, j)
            for k in range(n):
                gamma = np.zeros(f.spec.sizes)
                for l in range(n):
                    gamma += inv(k, l) * (dmu[(i, j, l)] + dmu[(j, i, l)] - dmu[(l, i, j)])
                out -= 0.5 * inv(i, j) * gamma * grad_f[k]
    return PeriodicScalarField(f.spec, out)


def volume(M: InducedMetricField) -> float:
    """Total Riemannian volume of the graph."""
    one = PeriodicScalarField.constant(M.spec, 1.0)
    return l2_pairing(M.sqrt_det, one)


def metric_from_potential(u: PeriodicScalarField, scheme: str = "spectral") -> InducedMetricField:
    """Induced metric of the graph generated by the potential u."""
    return induced_metric(derivative(u, 2, scheme))


def graph_volume(u: PeriodicScalarField, scheme: str = "spectral") -> float:
    """Volume of the graph generated by the potential u."""
    hess = derivative(u, 2, scheme)
    _, _, sqrt_det = _metric_arrays(hess.components, u.spec.dim)
    return tree_sum(sqrt_det) * u.spec.cell_volume
