"""Explicit time integration of the potential flow du/dt = theta(D^2 u) + kappa*u.

Classical RK4 with a heat-type CFL step dt = cfl * min(h_a)^2 / (2n): the
linearization coefficient matrix mu^(-1) = (I + Q^2)^(-1) satisfies
0 < mu^(-1) <= I on flat tori, so the flat-heat stability bound is
uniformly valid and implicit stepping is unnecessary at desk scale.

The integrator is sequential in time and fully deterministic: identical
configurations reproduce bit-identical trajectories.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .fields import (
    GridSpec,
    PeriodicScalarField,
    SymMatrixField,
    SymTensor3Field,
    VectorField,
    jet_ops,
    sym_multiplicities,
    tree_sum,
)
from .geometry import _angle_values, _metric_arrays
from .monitors import MonitorRecord

CHECKPOINT_MAGIC = b"LMCF"
CHECKPOINT_VERSION = 1
HESSIAN_BLOWUP_GUARD = 10.0  # far outside the small-data regime; not graph-like anymore


class BlowupError(RuntimeError):
    """A field left the finite / graph-like regime during a step."""

    def __init__(self, t, sup_u, reason):
        super().__init__(f"blowup at t={t:.6g}: {reason} (sup|u|={sup_u:.6g})")
        self.t = t
        self.sup_u = sup_u
        self.reason = reason


class CheckpointError(ValueError):
    """Checkpoint file is malformed, truncated or incompatible."""


@dataclass(frozen=True)
class FlowConfig:
    """Grid, Einstein constant and stepper/monitor parameters for one run."""

    grid: GridSpec
    kappa: float
    t_max: float
    cfl: float = 0.2
    scheme: str = "spectral"
    conv_tol: float = 1e-8
    C0: float = 100.0
    C1: float = 10.0
    eps1: float = 0.1
    checkpoint_every: int = 0

    def __post_init__(self):
        if not (0.0 < self.cfl <= 0.5):
            raise ValueError(f"cfl must be in (0, 0.5], got {self.cfl}")
        if self.scheme not in ("spectral", "central4"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if not self.t_max > 0.0:
            raise ValueError(f"t_max must be positive, got {self.t_max}")
        if not self.conv_tol > 0.0:
            raise ValueError(f"conv_tol must be positive, got {self.conv_tol}")
        if self.C0 < 1.0 or self.C1 < 1.0:
            raise ValueError("C0 and C1 must be >= 1")
        if not (0.0 < self.eps1 <= 1.0):
            raise ValueError(f"eps1 must be in (0, 1], got {self.eps1}")
        if self.checkpoint_every < 0:
            raise ValueError("checkpoint_every must be >= 0")

    @property
    def dt(self):
        h_min = min(self.grid.spacings)
        return self.cfl * h_min * h_min / (2.0 * self.grid.dim)


class FlowState:
    """Potential u at one time, with jets cached under the configured scheme."""

    def __init__(self, t, u, scheme="spectral", last_dt=0.0):
        self.t = float(t)
        self.u = u
        self.scheme = scheme
        self.last_dt = float(last_dt)
        self._du = None
        self._d2u = None
        self._d3u = None

    @classmethod
    def initial(cls, u0, cfg):
        return cls(0.0, u0, scheme=cfg.scheme, last_dt=0.0)

    @property
    def spec(self):
        return self.u.spec

    @property
    def du(self) -> VectorField:
        if self._du is None:
            ops = jet_ops(self.spec, self.scheme)
            self._du = VectorField(self.spec, ops.components(self.u.values, 1))
        return self._du

    @property
    def d2u(self) -> SymMatrixField:
        if self._d2u is None:
            ops = jet_ops(self.spec, self.scheme)
            self._d2u = SymMatrixField(self.spec, ops.components(self.u.values, 2))
        return self._d2u

    @property
    def d3u(self) -> SymTensor3Field:
        if self._d3u is None:
            ops = jet_ops(self.spec, self.scheme)
            self._d3u = SymTensor3Field(self.spec, ops.components(self.u.values, 3))
        return self._d3u


@dataclass(frozen=True)
class BlowupReport:
    t: float
    sup_u: float
    sup_d2u: float
    reason: str


@dataclass(frozen=True, eq=False)
class FlowResult:
    """Outcome of one integration: converged, timed_out or blowup."""

    outcome: str
    state: FlowState
    records: tuple
    steps: int
    blowup: BlowupReport | None = None

    @property
    def converged(self):
        return self.outcome == "converged"


def rhs(u: PeriodicScalarField, kappa: float, scheme: str = "spectral") -> PeriodicScalarField:
    """Right-hand side theta(D^2 u) + kappa*u of the potential flow."""
    ops = jet_ops(u.spec, scheme)
    vals = _rhs_values(u.values, ops.hessian(u.values), kappa, ops, u.spec.dim)
    return PeriodicScalarField(u.spec, vals)


def _rhs_values(u_vals, hess, kappa, ops, dim):
    out = _angle_values(hess, dim)
    if kappa != 0.0:
        out += kappa * u_vals
    return out


def _rk4_update(u_vals, hess, dt, kappa, ops, dim):
    """One RK4 step from raw values; ``hess`` is the Hessian stack of u_vals."""
    k1 = _rhs_values(u_vals, hess, kappa, ops, dim)
    y = u_vals + (0.5 * dt) * k1
    k2 = _rhs_values(y, ops.hessian(y), kappa, ops, dim)
    y = u_vals + (0.5 * dt) * k2
    k3 = _rhs_values(y, ops.hessian(y), kappa, ops, dim)
    y = u_vals + dt * k3
    k4 = _rhs_values(y, ops.hessian(y), kappa, ops, dim)
    return u_vals + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def step_rk4(state: FlowState, cfg: FlowConfig, dt=None) -> FlowState:
    """Advance one RK4 step; jets of the returned state are refreshed lazily."""
    if dt is None:
        dt = cfg.dt
    ops = jet_ops(state.spec, cfg.scheme)
    u_new = _rk4_update(
        state.u.values, state.d2u.components, dt, cfg.kappa, ops, state.spec.dim
    )
    sup_new = float(np.max(np.abs(u_new)))
    if not np.isfinite(sup_new):
        raise BlowupError(state.t + dt, float(np.max(np.abs(state.u.values))), "non-finite field")
    return FlowState(state.t + dt, PeriodicScalarField(state.spec, u_new),
                     scheme=cfg.scheme, last_dt=dt)


@lru_cache(maxsize=8)
def _hessian_mults(dim):
    return np.array(sym_multiplicities(dim, 2), dtype=np.float64)


def _hessian_sup(hess, dim):
    if dim == 1:
        return float(np.max(np.abs(hess[0])))
    nsq = np.einsum("c...,c->...", hess * hess, _hessian_mults(dim))
    return float(np.sqrt(np.max(nsq)))


def monitor_record(state: FlowState, cfg: FlowConfig) -> MonitorRecord:
    """All tracked scalars of one state (sup norms, psi, angle range, volume)."""
    u = state.u.values
    du = state.du
    d2u = state.d2u
    d3u = state.d3u
    du_sq = du.pointwise_norm_sq().values
    d2u_sq = d2u.pointwise_norm_sq().values
    psi = cfg.C0 * u * u + cfg.C1 * du_sq + d2u_sq
    theta = _angle_values(d2u.components, state.spec.dim)
    _, _, sqrt_det = _metric_arrays(d2u.components, state.spec.dim)
    vol = tree_sum(sqrt_det) * state.spec.cell_volume
    return MonitorRecord(
        t=state.t,
        max_u=float(np.max(np.abs(u))),
        max_du=float(np.sqrt(np.max(du_sq))),
        max_d2u=float(np.sqrt(np.max(d2u_sq))),
        max_d3u=float(np.sqrt(np.max(d3u.pointwise_norm_sq().values))),
        psi_max=float(np.max(psi)),
        theta_min=float(np.min(theta)),
        theta_max=float(np.max(theta)),
        volume=vol,
        dt=state.last_dt if state.last_dt > 0.0 else cfg.dt,
    )


def integrate(u0: PeriodicScalarField, cfg: FlowConfig, sink=None, t_start=0.0) -> FlowResult:
    """Run the flow from u0 until convergence, t_max or blowup.

    Convergence means sup|du| < conv_tol and sup|D^2 u| < conv_tol, plus
    sup|u| < conv_tol when kappa < 0 (the zero potential is the target);
    for kappa = 0 constants are stationary and any constant limit counts.

    Emits a MonitorRecord at step 0, every ``checkpoint_every`` steps and at
    termination.  Raises nothing on blowup: the result carries a report.

    ``t_start`` continues the clock from a checkpoint: the update sequence is
    then bit-identical to the uninterrupted run.
    """
    if u0.spec != cfg.grid:
        raise ValueError("u0 grid does not match config grid")
    if not u0.is_finite():
        raise ValueError("u0 is not finite")
    if cfg.kappa > 0.0:
        warnings.warn(
            "kappa > 0 is experimental: no convergence guarantee is certified",
            stacklevel=2,
        )

    ops = jet_ops(cfg.grid, cfg.scheme)
    dim = cfg.grid.dim
    dt = cfg.dt
    tol = cfg.conv_tol
    kappa = cfg.kappa
    eps1_sq = cfg.eps1 * cfg.eps1
    record_every = cfg.checkpoint_every

    u = u0.values
    t = float(t_start)
    step = 0
    records = []
    last_emitted = -1
    warned_region = False

    def emit(state):
        nonlocal last_emitted, warned_region
        rec = monitor_record(state, cfg)
        records.append(rec)
        if sink is not None:
            sink(rec)
        last_emitted = step
        if not warned_region and rec.psi_max >= eps1_sq:
            warned_region = True
            warnings.warn(
                f"max psi = {rec.psi_max:.3g} is outside the certified region "
                f"psi < eps1^2 = {eps1_sq:.3g}",
                stacklevel=3,
            )

    def make_state(hess_stack):
        state = FlowState(t, PeriodicScalarField(cfg.grid, u), scheme=cfg.scheme, last_dt=dt if step else 0.0)
        state._d2u = SymMatrixField(cfg.grid, hess_stack)
        return state

    hess = ops.hessian(u)
    emit(make_state(hess))

    while True:
        # a non-finite u yields a non-finite Hessian, so this guard catches both
        sup_d2 = _hessian_sup(hess, dim)
        if not (sup_d2 <= HESSIAN_BLOWUP_GUARD):
            sup_u = float(np.max(np.abs(u)))
            report = BlowupReport(
                t=t,
                sup_u=sup_u,
                sup_d2u=sup_d2,
                reason="non-finite field" if not np.isfinite(sup_d2)
                else f"sup|D2u| exceeded {HESSIAN_BLOWUP_GUARD}",
            )
            state = make_state(hess)
            if last_emitted != step:
                emit(state)
            return FlowResult("blowup", state, tuple(records), step, blowup=report)

        if sup_d2 < tol and (kappa >= 0.0 or float(np.max(np.abs(u))) < tol):
            grad = ops.gradient(u)
            sup_du = float(np.sqrt(np.max((grad * grad).sum(axis=0))))
            if sup_du < tol:
                state = make_state(hess)
                if last_emitted != step:
                    emit(state)
                return FlowResult("converged", state, tuple(records), step)

        if t + 0.5 * dt >= cfg.t_max:
            state = make_state(hess)
            if last_emitted != step:
                emit(state)
            return FlowResult("timed_out", state, tuple(records), step)

        u = _rk4_update(u, hess, dt, kappa, ops, dim)
        t += dt
        step += 1
        hess = ops.hessian(u)

        if record_every and step % record_every == 0:
            emit(make_state(hess))


# ---------------------------------------------------------------------------
# checkpoint persistence (bit-exact round trip)
#
# layout, little-endian: magic "LMCF" | version u32 | n u32 | N_a u32 each |
# P_a f64 each | t f64 | kappa f64 | row-major f64 grid values of u

def checkpoint_save(state: FlowState, cfg: FlowConfig, path):
    spec = state.spec
    n = spec.dim
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        fh.write(struct.pack("<I", n))
        fh.write(struct.pack(f"<{n}I", *spec.sizes))
        fh.write(struct.pack(f"<{n}d", *spec.periods))
        fh.write(struct.pack("<d", state.t))
        fh.write(struct.pack("<d", cfg.kappa))
        fh.write(np.ascontiguousarray(state.u.values, dtype="<f8").tobytes())


def _read_exact(fh, nbytes, what):
    buf = fh.read(nbytes)
    if len(buf) != nbytes:
        raise CheckpointError(f"truncated checkpoint while reading {what}")
    return buf


def checkpoint_load(path, t_max=None):
    """Load a checkpoint; returns (FlowState, FlowConfig).

    Only grid, time, kappa and u are stored; the returned config carries
    defaults for everything else (t_max defaults to t + 1).  Jets are
    recomputed on demand, so the round trip is bit-exact in u.
    """
    with open(path, "rb") as fh:
        magic = _read_exact(fh, 4, "magic")
        if magic != CHECKPOINT_MAGIC:
            raise CheckpointError(f"bad magic {magic!r}, expected {CHECKPOINT_MAGIC!r}")
        (version,) = struct.unpack("<I", _read_exact(fh, 4, "version"))
        if version != CHECKPOINT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        (n,) = struct.unpack("<I", _read_exact(fh, 4, "dimension"))
        if n not in (1, 2, 3):
            raise CheckpointError(f"unsupported dimension {n}")
        sizes = struct.unpack(f"<{n}I", _read_exact(fh, 4 * n, "grid sizes"))
        periods = struct.unpack(f"<{n}d", _read_exact(fh, 8 * n, "periods"))
        (t,) = struct.unpack("<d", _read_exact(fh, 8, "time"))
        (kappa,) = struct.unpack("<d", _read_exact(fh, 8, "kappa"))
        try:
            spec = GridSpec(n, sizes, periods)
        except ValueError as exc:
            raise CheckpointError(f"invalid grid in checkpoint: {exc}") from exc
        npoints = spec.npoints
        raw = _read_exact(fh, 8 * npoints, "grid values")
        if fh.read(1):
            raise CheckpointError("trailing bytes after grid values")
    values = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(spec.sizes)
    u = PeriodicScalarField(spec, values)
    cfg = FlowConfig(grid=spec, kappa=kappa, t_max=t_max if t_max is not None else t + 1.0)
    state = FlowState(t, u, scheme=cfg.scheme, last_dt=0.0)
    return state, cfg


def resume_flow(state: FlowState, cfg: FlowConfig, sink=None) -> FlowResult:
    """Continue integrating a loaded state until cfg.t_max.

    The step sequence, and hence every emitted record from the resume point
    on, is bit-identical to the uninterrupted run.
    """
    return integrate(state.u, cfg, sink=sink, t_start=state.t)
