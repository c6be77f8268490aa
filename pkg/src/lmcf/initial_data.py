"""Deterministic initial potentials for experiments.

Three families: exact constants, single Fourier modes with a raw
amplitude, and seeded random band-limited fields.  Random fields are
rescaled so that the initial max of psi = C0 u^2 + C1 |du|^2 + |D^2 u|^2
equals amplitude^2 exactly (psi is homogeneous of degree two in u), since
the certified hypothesis is a psi bound rather than a norm bound on u.
"""

from __future__ import annotations

import itertools

import numpy as np

from .fields import GridSpec, PeriodicScalarField, jet_ops, sym_multiplicities

PRESET_NAMES = ("constant", "single_mode", "random_bandlimited")


def constant_potential(spec: GridSpec, amplitude: float) -> PeriodicScalarField:
    return PeriodicScalarField.constant(spec, amplitude)


def single_mode_potential(spec: GridSpec, amplitude: float, mode) -> PeriodicScalarField:
    """amplitude * cos(2 pi k . x / P) for an integer mode vector k."""
    mode = tuple(int(m) for m in mode)
    if len(mode) == 1 and spec.dim > 1:
        mode = mode + (0,) * (spec.dim - 1)
    if len(mode) != spec.dim:
        raise ValueError(f"mode vector {mode} does not match dimension {spec.dim}")
    if all(m == 0 for m in mode):
        raise ValueError("mode vector must be nonzero; use the constant preset instead")
    coords = spec.coordinates()
    phase = np.zeros(spec.sizes)
    for k, x, p in zip(mode, coords, spec.periods):
        phase += k * x / p
    return PeriodicScalarField(spec, amplitude * np.cos(2.0 * np.pi * phase))


def _half_space_modes(dim, max_mode):
    """Mode vectors with 0 < max|k_a| <= max_mode, one per +/- pair, in a fixed order."""
    modes = []
    for k in itertools.product(range(-max_mode, max_mode + 1), repeat=dim):
        if all(c == 0 for c in k):
            continue
        first = next(c for c in k if c != 0)
        if first > 0:
            modes.append(k)
    return sorted(modes)


def _psi_max(values, spec, C0, C1, scheme):
    ops = jet_ops(spec, scheme)
    grad = ops.components(values, 1)
    hess = ops.components(values, 2)
    du_sq = (grad * grad).sum(axis=0)
    mults = np.array(sym_multiplicities(spec.dim, 2), dtype=np.float64)
    d2_sq = np.einsum("c...,c->...", hess * hess, mults)
    return float(np.max(C0 * values * values + C1 * du_sq + d2_sq))


def random_bandlimited_potential(
    spec: GridSpec,
    amplitude: float,
    max_mode: int,
    seed: int,
    C0: float = 100.0,
    C1: float = 10.0,
    scheme: str = "spectral",
) -> PeriodicScalarField:
    """Seeded random mean-zero field, scaled so initial max psi = amplitude^2."""
    if max_mode < 1:
        raise ValueError("max_mode must be >= 1")
    rng = np.random.default_rng(seed)
    coords = spec.coordinates()
    values = np.zeros(spec.sizes)
    for mode in _half_space_modes(spec.dim, max_mode):
        a, b = rng.standard_normal(2)
        phase = np.zeros(spec.sizes)
        for k, x, p in zip(mode, coords, spec.periods):
            phase += k * x / p
        values += a * np.cos(2.0 * np.pi * phase) + b * np.sin(2.0 * np.pi * phase)
    psi_max = _psi_max(values, spec, C0, C1, scheme)
    if psi_max <= 0.0:
        raise ValueError("degenerate random draw")
    values *= amplitude / np.sqrt(psi_max)
    return PeriodicScalarField(spec, values)


def build_initial(
    spec: GridSpec,
    preset: str,
    amplitude: float,
    modes=(1,),
    seed: int = 0,
    C0: float = 100.0,
    C1: float = 10.0,
    scheme: str = "spectral",
) -> PeriodicScalarField:
    """Dispatch on the preset name; see the module docstring for semantics."""
    if preset == "constant":
        return constant_potential(spec, amplitude)
    if preset == "single_mode":
        return single_mode_potential(spec, amplitude, modes)
    if preset == "random_bandlimited":
        max_mode = int(modes[0]) if not isinstance(modes, int) else int(modes)
        return random_bandlimited_potential(spec, amplitude, max_mode, seed, C0, C1, scheme)
    raise ValueError(f"unknown initial-data preset {preset!r}; known: {PRESET_NAMES}")
