"""Periodic grid fields on flat tori and their differential calculus.

Fields live on a uniform grid over T^n (n = 1, 2 or 3) with the flat metric,
so every covariant derivative reduces to plain partial derivatives and all
pointwise tensor norms are Euclidean/Frobenius norms of the component arrays.

Two differentiation schemes are provided:

* ``spectral`` — FFT differentiation, exact for band-limited fields up to
  roundoff.  Nyquist modes are zeroed for odd derivative orders so that
  real input always maps to real output.
* ``central4`` — 4th-order centered finite differences with periodic wrap,
  kept as an independent fallback so discretization error can be separated
  from modeling error.

Symmetric tensor fields store each distinct component once (sorted
multi-index layout); Frobenius norms account for index multiplicities.
"""

from __future__ import annotations

import itertools
import math
import operator
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

SCHEMES = ("spectral", "central4")


class SpecMismatchError(ValueError):
    """Operands were built over different grids."""


class UnsupportedOrderError(ValueError):
    """Requested derivative order outside 1..4."""


class NonFiniteError(ValueError):
    """Input field contains NaN or Inf."""


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic grid: per-axis point counts and periods.

    Sizes must be even (unambiguous Nyquist handling) and at least 8.
    """

    dim: int
    sizes: tuple
    periods: tuple

    def __init__(self, dim, sizes, periods=None):
        sizes = tuple(int(s) for s in sizes)
        if dim not in (1, 2, 3):
            raise ValueError(f"dim must be 1, 2 or 3, got {dim}")
        if len(sizes) != dim:
            raise ValueError(f"expected {dim} sizes, got {len(sizes)}")
        for s in sizes:
            if s < 8 or s % 2 != 0:
                raise ValueError(f"grid sizes must be even and >= 8, got {s}")
        if periods is None:
            periods = (1.0,) * dim
        periods = tuple(float(p) for p in periods)
        if len(periods) != dim:
            raise ValueError(f"expected {dim} periods, got {len(periods)}")
        for p in periods:
            if not (p > 0.0 and math.isfinite(p)):
                raise ValueError(f"periods must be positive, got {p}")
        object.__setattr__(self, "dim", dim)
        object.__setattr__(self, "sizes", sizes)
        object.__setattr__(self, "periods", periods)

    @property
    def spacings(self):
        return tuple(p / s for p, s in zip(self.periods, self.sizes))

    @property
    def npoints(self):
        return int(np.prod(self.sizes))

    @property
    def cell_volume(self):
        return float(np.prod(self.spacings))

    @property
    def torus_volume(self):
        return float(np.prod(self.periods))

    def coordinates(self):
        """Meshgrid coordinate arrays, one per axis, shape == sizes."""
        axes = [np.arange(n) * (p / n) for n, p in zip(self.sizes, self.periods)]
        return np.meshgrid(*axes, indexing="ij")


def _frozen_array(values):
    """Read-only C-contiguous float64 copy; reuses arrays already frozen."""
    vals = np.asarray(values)
    if vals.dtype == np.float64 and vals.flags.c_contiguous and not vals.flags.writeable:
        return vals
    vals = np.array(vals, dtype=np.float64, order="C")
    vals.flags.writeable = False
    return vals


def _check_same_spec(a, b):
    if a.spec != b.spec:
        raise SpecMismatchError(f"grid specs differ: {a.spec} vs {b.spec}")


@dataclass(frozen=True, eq=False)
class PeriodicScalarField:
    """Sampled real function on a periodic grid; immutable once built."""

    spec: GridSpec
    values: np.ndarray

    def __post_init__(self):
        vals = _frozen_array(self.values)
        if vals.shape != self.spec.sizes:
            raise ValueError(
                f"values shape {vals.shape} does not match grid {self.spec.sizes}"
            )
        object.__setattr__(self, "values", vals)

    @classmethod
    def zeros(cls, spec):
        return cls(spec, np.zeros(spec.sizes))

    @classmethod
    def constant(cls, spec, value):
        return cls(spec, np.full(spec.sizes, float(value)))

    @classmethod
    def from_function(cls, spec, fn):
        """Sample ``fn(*coords)`` on the grid."""
        return cls(spec, fn(*spec.coordinates()))

    def is_finite(self):
        return bool(np.isfinite(self.values).all())


@lru_cache(maxsize=None)
def sym_indices(dim, rank):
    """Sorted multi-indices of a fully symmetric rank-``rank`` tensor."""
    return tuple(itertools.combinations_with_replacement(range(dim), rank))


@lru_cache(maxsize=None)
def sym_multiplicities(dim, rank):
    """Number of index permutations represented by each stored component."""
    mults = []
    for idx in sym_indices(dim, rank):
        counts = [idx.count(a) for a in set(idx)]
        m = math.factorial(rank)
        for c in counts:
            m //= math.factorial(c)
        mults.append(m)
    return tuple(mults)


@dataclass(frozen=True, eq=False)
class SymTensorField:
    """Field of fully symmetric tensors, one array per distinct component."""

    spec: GridSpec
    rank: int
    components: np.ndarray  # shape (ncomp, *sizes)

    def __post_init__(self):
        comps = _frozen_array(self.components)
        ncomp = len(sym_indices(self.spec.dim, self.rank))
        if comps.shape != (ncomp,) + self.spec.sizes:
            raise ValueError(
                f"components shape {comps.shape} does not match "
                f"({ncomp},) + {self.spec.sizes}"
            )
        object.__setattr__(self, "components", comps)

    @property
    def indices(self):
        return sym_indices(self.spec.dim, self.rank)

    def component(self, *idx):
        """One component as a scalar field; index order is irrelevant."""
        key = tuple(sorted(idx))
        pos = self.indices.index(key)
        return PeriodicScalarField(self.spec, self.components[pos])

    def pointwise_norm_sq(self):
        """|T|^2 at every point, counting index multiplicities."""
        mults = np.array(sym_multiplicities(self.spec.dim, self.rank))
        out = np.einsum("c...,c->...", self.components * self.components, mults)
        return PeriodicScalarField(self.spec, out)

    def pointwise_norm(self):
        return PeriodicScalarField(self.spec, np.sqrt(self.pointwise_norm_sq().values))


class VectorField(SymTensorField):
    def __init__(self, spec, components):
        super().__init__(spec, 1, components)


class SymMatrixField(SymTensorField):
    def __init__(self, spec, components):
        super().__init__(spec, 2, components)

    def to_dense(self):
        """Dense (*sizes, n, n) array of the symmetric matrices."""
        n = self.spec.dim
        out = np.empty(self.spec.sizes + (n, n))
        for pos, (i, j) in enumerate(self.indices):
            out[..., i, j] = self.components[pos]
            out[..., j, i] = self.components[pos]
        return out

    @classmethod
    def from_dense(cls, spec, dense):
        comps = np.stack([dense[..., i, j] for i, j in sym_indices(spec.dim, 2)])
        return cls(spec, comps)


class SymTensor3Field(SymTensorField):
    def __init__(self, spec, components):
        super().__init__(spec, 3, components)


class SymTensor4Field(SymTensorField):
    def __init__(self, spec, components):
        super().__init__(spec, 4, components)


_TENSOR_BY_RANK = {1: VectorField, 2: SymMatrixField, 3: SymTensor3Field, 4: SymTensor4Field}


# ---------------------------------------------------------------------------
# spectral machinery

@lru_cache(maxsize=32)
def _wavenumbers(spec):
    """Per-axis angular wavenumber arrays in rfftn layout, broadcast-shaped."""
    ks = []
    for axis in range(spec.dim):
        n = spec.sizes[axis]
        d = spec.periods[axis] / n
        if axis == spec.dim - 1:
            k = 2.0 * np.pi * np.fft.rfftfreq(n, d=d)
        else:
            k = 2.0 * np.pi * np.fft.fftfreq(n, d=d)
        shape = [1] * spec.dim
        shape[axis] = k.size
        ks.append(k.reshape(shape))
    return tuple(ks)


@lru_cache(maxsize=32)
def _nyquist_masks(spec):
    """Boolean per-axis masks selecting the Nyquist wavenumber."""
    masks = []
    for axis in range(spec.dim):
        n = spec.sizes[axis]
        if axis == spec.dim - 1:
            idx = np.arange(n // 2 + 1)
        else:
            idx = np.abs(np.fft.fftfreq(n) * n).astype(int)
        m = idx == n // 2
        shape = [1] * spec.dim
        shape[axis] = m.size
        masks.append(m.reshape(shape))
    return tuple(masks)


@lru_cache(maxsize=128)
def _spectral_multiplier(spec, powers):
    """Fourier multiplier of the partial derivative with the given per-axis powers.

    Odd powers zero the Nyquist mode of their axis so real maps to real.
    """
    ks = _wavenumbers(spec)
    nyq = _nyquist_masks(spec)
    mult = np.ones((1,) * spec.dim, dtype=np.complex128)
    for axis, m in enumerate(powers):
        if m == 0:
            continue
        k = ks[axis]
        fac = (-(k * k)) ** (m // 2) if m % 2 == 0 else (1j * k) * (-(k * k)) ** ((m - 1) // 2)
        if m % 2 == 1:
            fac = np.where(nyq[axis], 0.0, fac)
        mult = mult * fac
    mult.flags.writeable = False
    return mult


def _powers_of(idx, dim):
    powers = [0] * dim
    for a in idx:
        powers[a] += 1
    return tuple(powers)


def _spectral_derivative_components(spec, values, order):
    return jet_ops(spec, "spectral").components(values, order)


# ---------------------------------------------------------------------------
# 4th-order centered stencils

def _d1_central4(values, axis, h):
    return (
        -np.roll(values, -2, axis) + 8.0 * np.roll(values, -1, axis)
        - 8.0 * np.roll(values, 1, axis) + np.roll(values, 2, axis)
    ) / (12.0 * h)


def _d2_central4(values, axis, h):
    return (
        -np.roll(values, -2, axis) + 16.0 * np.roll(values, -1, axis) - 30.0 * values
        + 16.0 * np.roll(values, 1, axis) - np.roll(values, 2, axis)
    ) / (12.0 * h * h)


def _central4_partial(values, axis, h, power):
    # powers 3 and 4 compose the first/second-derivative stencils, which
    # keeps 4th-order accuracy and exact commutation across axes
    if power == 1:
        return _d1_central4(values, axis, h)
    if power == 2:
        return _d2_central4(values, axis, h)
    if power == 3:
        return _d1_central4(_d2_central4(values, axis, h), axis, h)
    return _d2_central4(_d2_central4(values, axis, h), axis, h)


def _central4_derivative_components(spec, values, order):
    hs = spec.spacings
    comps = []
    for idx in sym_indices(spec.dim, order):
        out = values
        for axis, m in enumerate(_powers_of(idx, spec.dim)):
            if m:
                out = _central4_partial(out, axis, hs[axis], m)
        comps.append(out)
    return np.stack(comps)


# ---------------------------------------------------------------------------
# cached per-grid differentiation operators (hot-loop path)

class _SpectralJetOps:
    def __init__(self, spec):
        self.spec = spec
        self._axes = tuple(range(spec.dim))
        self._mults = {}

    def _rank_multipliers(self, rank):
        mults = self._mults.get(rank)
        if mults is None:
            mults = tuple(
                _spectral_multiplier(self.spec, _powers_of(idx, self.spec.dim))
                for idx in sym_indices(self.spec.dim, rank)
            )
            self._mults[rank] = mults
        return mults

    def components(self, values, rank):
        sizes = self.spec.sizes
        if self.spec.dim == 1:
            fhat = np.fft.rfft(values)
            outs = [np.fft.irfft(fhat * m, n=sizes[0]) for m in self._rank_multipliers(rank)]
        else:
            fhat = np.fft.rfftn(values, axes=self._axes)
            outs = [
                np.fft.irfftn(fhat * m, s=sizes, axes=self._axes)
                for m in self._rank_multipliers(rank)
            ]
        if len(outs) == 1:
            return outs[0][np.newaxis]
        return np.stack(outs)

    def gradient(self, values):
        return self.components(values, 1)

    def hessian(self, values):
        return self.components(values, 2)


class _Central4JetOps:
    def __init__(self, spec):
        self.spec = spec

    def components(self, values, rank):
        return _central4_derivative_components(self.spec, values, rank)

    def gradient(self, values):
        return self.components(values, 1)

    def hessian(self, values):
        return self.components(values, 2)


@lru_cache(maxsize=32)
def jet_ops(spec, scheme):
    """Cached differentiation operator for raw value arrays on one grid."""
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}, expected one of {SCHEMES}")
    if scheme == "spectral":
        return _SpectralJetOps(spec)
    return _Central4JetOps(spec)


# ---------------------------------------------------------------------------
# public operations

def derivative(f: PeriodicScalarField, order: int, scheme: str = "spectral"):
    """All distinct symmetrized partial derivatives of the given order.

    Returns a VectorField, SymMatrixField, SymTensor3Field or SymTensor4Field
    for order 1..4 respectively.
    """
    try:
        order = operator.index(order)
    except TypeError:
        raise UnsupportedOrderError(f"derivative order must be an integer, got {order!r}") from None
    if order < 1 or order > 4:
        raise UnsupportedOrderError(f"derivative order must be 1..4, got {order}")
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}, expected one of {SCHEMES}")
    if not f.is_finite():
        raise NonFiniteError("derivative of a non-finite field")
    if scheme == "spectral":
        comps = _spectral_derivative_components(f.spec, f.values, order)
    else:
        comps = _central4_derivative_components(f.spec, f.values, order)
    return _TENSOR_BY_RANK[order](f.spec, comps)


def laplacian_flat(f: PeriodicScalarField, scheme: str = "spectral"):
    """Trace of the Hessian: the flat-metric Laplacian."""
    hess = derivative(f, 2, scheme)
    out = np.zeros(f.spec.sizes)
    for pos, (i, j) in enumerate(hess.indices):
        if i == j:
            out += hess.components[pos]
    return PeriodicScalarField(f.spec, out)


def sup_norm(field):
    """Max over the grid of the pointwise norm (|.| for scalars, Frobenius for tensors)."""
    if isinstance(field, PeriodicScalarField):
        return float(np.max(np.abs(field.values)))
    return float(np.sqrt(np.max(field.pointwise_norm_sq().values)))


def tree_sum(a):
    """Deterministic fixed-order pairwise summation of a float array.

    Folds the flattened (row-major) array in half repeatedly; the reduction
    order never depends on thread count or chunking, so results are
    bit-identical across runs.
    """
    a = np.ascontiguousarray(a, dtype=np.float64).reshape(-1)
    n = a.size
    if n == 0:
        return 0.0
    while n > 1:
        half = n // 2
        s = a[:half] + a[half : 2 * half]
        if n % 2:
            s = np.concatenate([s, a[2 * half :]])
        a = s
        n = a.size
    return float(a[0])


def l2_pairing(f: PeriodicScalarField, g: PeriodicScalarField, weight=None):
    """Grid quadrature of f*g (optionally *weight) against the flat measure."""
    _check_same_spec(f, g)
    prod = f.values * g.values
    if weight is not None:
        _check_same_spec(f, weight)
        prod = prod * weight.values
    return tree_sum(prod) * f.spec.cell_volume


def mean_value(f: PeriodicScalarField):
    """Average of f over the torus."""
    return tree_sum(f.values) * f.spec.cell_volume / f.spec.torus_volume
