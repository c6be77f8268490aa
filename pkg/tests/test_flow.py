"""Time integration, convergence detection, checkpoints, determinism."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lmcf.fields import GridSpec, PeriodicScalarField, sup_norm
from lmcf.flow import (
    CheckpointError,
    FlowConfig,
    FlowState,
    checkpoint_load,
    checkpoint_save,
    integrate,
    monitor_record,
    resume_flow,
    rhs,
    step_rk4,
)
from lmcf.initial_data import random_bandlimited_potential, single_mode_potential

TWO_PI = 2.0 * np.pi


def rk4_scalar_factor(dt, lam):
    """Amplification factor of one RK4 step for u' = lam * u."""
    z = lam * dt
    return 1.0 + z + z * z / 2.0 + z ** 3 / 6.0 + z ** 4 / 24.0


class TestRhs:
    def test_constant_kappa_zero(self):
        spec = GridSpec(1, (32,))
        u = PeriodicScalarField.constant(spec, 0.7)
        assert sup_norm(rhs(u, 0.0)) == 0.0

    def test_constant_kappa_negative(self):
        spec = GridSpec(1, (32,))
        u = PeriodicScalarField.constant(spec, 0.7)
        assert np.allclose(rhs(u, -1.0).values, -0.7)

    def test_single_mode_formula(self):
        spec = GridSpec(1, (128,))
        eps, kappa = 1e-2, -0.3
        u = single_mode_potential(spec, eps, (1,))
        x = spec.coordinates()[0]
        expected = np.arctan(-(TWO_PI ** 2) * eps * np.cos(TWO_PI * x)) + kappa * u.values
        assert np.max(np.abs(rhs(u, kappa).values - expected)) <= 1e-10


class TestStepRk4:
    def test_matches_scalar_polynomial(self):
        spec = GridSpec(1, (16,))
        cfg = FlowConfig(grid=spec, kappa=-1.0, t_max=1.0)
        c = 0.01
        state = FlowState.initial(PeriodicScalarField.constant(spec, c), cfg)
        nxt = step_rk4(state, cfg)
        expected = c * rk4_scalar_factor(cfg.dt, -1.0)
        assert np.max(np.abs(nxt.u.values - expected)) <= 1e-15

    def test_constants_subspace_many_steps(self):
        spec = GridSpec(1, (16,))
        cfg = FlowConfig(grid=spec, kappa=-1.0, t_max=1.0, cfl=0.5)
        c = 0.01
        state = FlowState.initial(PeriodicScalarField.constant(spec, c), cfg)
        rho = rk4_scalar_factor(cfg.dt, -1.0)
        for k in range(1, 200):
            state = step_rk4(state, cfg)
            assert np.max(np.abs(state.u.values - c * rho ** k)) <= 1e-15

    def test_zero_field_stays_zero(self):
        spec = GridSpec(1, (16,))
        cfg = FlowConfig(grid=spec, kappa=-1.0, t_max=1.0)
        state = FlowState.initial(PeriodicScalarField.zeros(spec), cfg)
        for _ in range(10):
            state = step_rk4(state, cfg)
        assert sup_norm(state.u) == 0.0

    def test_order_four(self):
        # halving dt shrinks the endpoint difference by ~16
        spec = GridSpec(1, (16,))
        cfg = FlowConfig(grid=spec, kappa=-0.5, t_max=1.0)
        u0 = single_mode_potential(spec, 0.01, (1,))
        T = 0.08
        finals = []
        for dt in (8e-4, 4e-4, 2e-4):
            state = FlowState.initial(u0, cfg)
            for _ in range(round(T / dt)):
                state = step_rk4(state, cfg, dt=dt)
            finals.append(state.u.values)
        e1 = np.max(np.abs(finals[0] - finals[1]))
        e2 = np.max(np.abs(finals[1] - finals[2]))
        assert abs(math.log2(e1 / e2) - 4.0) <= 0.3


class TestIntegrate:
    def test_ode_regime_tracks_exponential(self):
        spec = GridSpec(1, (16,))
        cfg = FlowConfig(grid=spec, kappa=-1.0, t_max=1.0, cfl=0.5,
                         conv_tol=1e-12, checkpoint_every=100)
        res = integrate(PeriodicScalarField.constant(spec, 0.01), cfg)
        assert res.outcome == "timed_out"
        for rec in res.records:
            assert abs(rec.max_u - 0.01 * math.exp(-rec.t)) <= 1e-10

    def test_converges_to_constant(self):
        spec = GridSpec(1, (32,))
        cfg = FlowConfig(grid=spec, kappa=0.0, t_max=2.0, conv_tol=1e-7,
                         checkpoint_every=200)
        u0 = single_mode_potential(spec, 1e-3, (1,))
        res = integrate(u0, cfg)
        assert res.outcome == "converged"
        final = res.state.u.values
        assert np.max(np.abs(final - final.mean())) <= 1e-6

    def test_2d_small_data_converges(self):
        spec = GridSpec(2, (16, 16))
        cfg = FlowConfig(grid=spec, kappa=0.0, t_max=1.0, conv_tol=1e-7,
                         checkpoint_every=100)
        u0 = random_bandlimited_potential(spec, 0.05, 2, seed=77)
        res = integrate(u0, cfg)
        assert res.outcome == "converged"
        psi = [rec.psi_max for rec in res.records]
        assert all(b <= a + 1e-8 for a, b in zip(psi, psi[1:]))

    def test_3d_small_data_converges(self):
        spec = GridSpec(3, (8, 8, 8))
        cfg = FlowConfig(grid=spec, kappa=0.0, t_max=1.0, conv_tol=1e-6,
                         checkpoint_every=100)
        u0 = random_bandlimited_potential(spec, 0.04, 1, seed=78)
        res = integrate(u0, cfg)
        assert res.outcome == "converged"
        psi = [rec.psi_max for rec in res.records]
        assert all(b <= a + 1e-8 for a, b in zip(psi, psi[1:]))

    def test_central4_scheme_matches_spectral(self):
        spec = GridSpec(1, (64,))
        u0 = single_mode_potential(spec, 1e-3, (1,))
        finals = {}
        for scheme in ("spectral", "central4"):
            cfg = FlowConfig(grid=spec, kappa=0.0, t_max=0.05, conv_tol=1e-13,
                             scheme=scheme, checkpoint_every=500)
            res = integrate(u0, cfg)
            finals[scheme] = res.state.u.values
            rate = np.log(res.records[-1].max_du / res.records[0].max_du) / (
                res.records[-1].t - res.records[0].t)
            assert abs(rate + 4 * np.pi ** 2) <= 0.01 * 4 * np.pi ** 2
        # mode-1 data at N=64: the central4 phase error is ~(2 pi h)^4 / 30
        assert np.max(np.abs(finals["spectral"] - finals["central4"])) <= 1e-6

    def test_mean_drift_bound(self):
        # kappa = 0: the limit constant stays within 10 * initial psi_max of mean(u0)
        spec = GridSpec(1, (64,))
        cfg = FlowConfig(grid=spec, kappa=0.0, t_max=1.0, conv_tol=1e-7,
                         checkpoint_every=500)
        u0 = random_bandlimited_potential(spec, 0.07, 3, seed=3)
        res = integrate(u0, cfg)
        assert res.outcome == "converged"
        from lmcf.fields import mean_value

        drift = np.max(np.abs(res.state.u.values - mean_value(u0)))
        assert drift <= 10.0 * res.records[0].psi_max

    def test_psi_monotone_records(self):
        spec = GridSpec(1, (64,))
        cfg = FlowConfig(grid=spec, kappa=0.0, t_max=0.1, conv_tol=1e-12,
                         checkpoint_every=50)
        u0 = random_bandlimited_potential(spec, 0.08, 3, seed=5)
        res = integrate(u0, cfg)
        psi = [rec.psi_max for rec in res.records]
        assert all(b <= a + 1e-8 for a, b in zip(psi, psi[1:]))

    def test_volume_never_increases_per_step(self):
        spec = GridSpec(1, (32,))
        cfg = FlowConfig(grid=spec, kappa=0.0, t_max=1.0, conv_tol=1e-12,
                         checkpoint_every=1)
        u0 = random_bandlimited_potential(spec, 0.08, 3, seed=6)
        res = integrate(u0, cfg)
        vols = [rec.volume for rec in res.records[:400]]
        assert all(b <= a + 1e-10 for a, b in zip(vols, vols[1:]))

    def test_blowup_guard(self):
        spec = GridSpec(1, (32,))
        cfg = FlowConfig(grid=spec, kappa=0.0, t_max=1.0)
        u0 = single_mode_potential(spec, 0.05, (8,))  # sup|D2u| ~ 126 > 10
        with pytest.warns(UserWarning, match="certified region"):
            res = integrate(u0, cfg)
        assert res.outcome == "blowup"
        assert res.blowup is not None and res.blowup.sup_d2u > 10.0

    def test_sink_receives_every_record(self):
        spec = GridSpec(1, (32,))
        cfg = FlowConfig(grid=spec, kappa=0.0, t_max=0.02, conv_tol=1e-13,
                         checkpoint_every=10)
        u0 = random_bandlimited_potential(spec, 0.05, 2, seed=8)
        seen = []
        res = integrate(u0, cfg, sink=seen.append)
        assert tuple(seen) == res.records

    def test_bitwise_determinism(self):
        spec = GridSpec(1, (32,))
        cfg = FlowConfig(grid=spec, kappa=-0.2, t_max=0.05, conv_tol=1e-12,
                         checkpoint_every=25)
        u0 = random_bandlimited_potential(spec, 0.05, 2, seed=7)
        res1 = integrate(u0, cfg)
        res2 = integrate(u0, cfg)
        assert len(res1.records) == len(res2.records)
        for a, b in zip(res1.records, res2.records):
            assert a == b  # dataclass equality on floats: bitwise
        assert np.array_equal(res1.state.u.values, res2.state.u.values)

    def test_kappa_positive_warns(self):
        spec = GridSpec(1, (16,))
        cfg = FlowConfig(grid=spec, kappa=0.5, t_max=5 * FlowConfig(
            grid=spec, kappa=0.0, t_max=1.0).dt)
        with pytest.warns(UserWarning, match="experimental"):
            integrate(PeriodicScalarField.constant(spec, 1e-6), cfg)

    def test_region_warning(self):
        spec = GridSpec(1, (32,))
        cfg = FlowConfig(grid=spec, kappa=0.0, t_max=0.01, conv_tol=1e-12)
        u0 = single_mode_potential(spec, 0.05, (2,))  # psi >> eps1^2, D2u < 10
        with pytest.warns(UserWarning, match="certified region"):
            integrate(u0, cfg)


class TestFlowConfig:
    def test_dt_formula(self):
        spec = GridSpec(2, (32, 64), (1.0, 1.0))
        cfg = FlowConfig(grid=spec, kappa=0.0, t_max=1.0, cfl=0.2)
        h_min = 1.0 / 64
        assert cfg.dt == 0.2 * h_min * h_min / 4.0

    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(cfl=0.6),
            dict(cfl=0.0),
            dict(t_max=-1.0),
            dict(conv_tol=0.0),
            dict(C0=0.5),
            dict(eps1=1.5),
            dict(checkpoint_every=-1),
            dict(scheme="upwind"),
        ],
    )
    def test_validation(self, kwargs):
        base = dict(grid=GridSpec(1, (16,)), kappa=0.0, t_max=1.0)
        base.update(kwargs)
        with pytest.raises(ValueError):
            FlowConfig(**base)


class TestCheckpoint:
    @settings(max_examples=10, deadline=None)
    @given(seed=st.integers(0, 1000))
    def test_roundtrip_bit_exact(self, seed, tmp_path_factory):
        spec = GridSpec(2, (16, 16), (1.0, 2.0))
        cfg = FlowConfig(grid=spec, kappa=-0.7, t_max=1.0)
        u = random_bandlimited_potential(spec, 0.05, 2, seed=seed)
        state = FlowState(0.123456789, u, scheme=cfg.scheme)
        path = tmp_path_factory.mktemp("ckpt") / "s.lmcf"
        checkpoint_save(state, cfg, path)
        loaded, cfg2 = checkpoint_load(path)
        assert np.array_equal(loaded.u.values, state.u.values)
        assert loaded.t == state.t
        assert cfg2.kappa == cfg.kappa
        assert cfg2.grid == spec

    def test_truncated_file(self, tmp_path):
        spec = GridSpec(1, (16,))
        cfg = FlowConfig(grid=spec, kappa=0.0, t_max=1.0)
        state = FlowState.initial(PeriodicScalarField.constant(spec, 1.0), cfg)
        path = tmp_path / "t.lmcf"
        checkpoint_save(state, cfg, path)
        data = path.read_bytes()
        path.write_bytes(data[:-8])
        with pytest.raises(CheckpointError, match="truncated"):
            checkpoint_load(path)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.lmcf"
        path.write_bytes(b"NOPE" + b"\x00" * 64)
        with pytest.raises(CheckpointError, match="magic"):
            checkpoint_load(path)

    def test_trailing_bytes(self, tmp_path):
        spec = GridSpec(1, (16,))
        cfg = FlowConfig(grid=spec, kappa=0.0, t_max=1.0)
        state = FlowState.initial(PeriodicScalarField.constant(spec, 1.0), cfg)
        path = tmp_path / "t.lmcf"
        checkpoint_save(state, cfg, path)
        path.write_bytes(path.read_bytes() + b"x")
        with pytest.raises(CheckpointError, match="trailing"):
            checkpoint_load(path)

    def test_resume_is_bitwise_identical(self, tmp_path):
        spec = GridSpec(1, (32,))
        u0 = random_bandlimited_potential(spec, 0.05, 2, seed=9)
        cadence = 20
        full_cfg = FlowConfig(grid=spec, kappa=-0.3, t_max=0.06, conv_tol=1e-13,
                              checkpoint_every=cadence)
        full = integrate(u0, full_cfg)

        # walk exactly 2 * cadence steps (the shared update path), checkpoint,
        # reload, continue: records and final state must match bit for bit
        state = FlowState.initial(u0, full_cfg)
        for _ in range(2 * cadence):
            state = step_rk4(state, full_cfg)
        path = tmp_path / "mid.lmcf"
        checkpoint_save(state, full_cfg, path)
        loaded, _ = checkpoint_load(path)
        rest = resume_flow(loaded, full_cfg)

        tail_full = [rec for rec in full.records if rec.t >= loaded.t]
        assert len(rest.records) == len(tail_full)
        for a, b in zip(rest.records, tail_full):
            assert a == b
        assert np.array_equal(rest.state.u.values, full.state.u.values)


class TestInitialData:
    def test_random_bandlimited_controls_psi(self):
        # amplitude fixes the initial max of psi, the certified quantity
        spec = GridSpec(1, (64,))
        cfg = FlowConfig(grid=spec, kappa=0.0, t_max=1.0)
        for amp in (0.03, 0.09):
            u0 = random_bandlimited_potential(spec, amp, 3, seed=2,
                                              C0=cfg.C0, C1=cfg.C1)
            from lmcf.verification import psi_field

            psi_max = np.max(psi_field(u0, cfg).values)
            assert abs(psi_max - amp * amp) <= 1e-12 * amp * amp

    def test_random_bandlimited_is_seeded(self):
        spec = GridSpec(1, (32,))
        a = random_bandlimited_potential(spec, 0.05, 3, seed=4)
        b = random_bandlimited_potential(spec, 0.05, 3, seed=4)
        c = random_bandlimited_potential(spec, 0.05, 3, seed=5)
        assert np.array_equal(a.values, b.values)
        assert not np.array_equal(a.values, c.values)

    def test_single_mode_vector(self):
        spec = GridSpec(2, (16, 16))
        u = single_mode_potential(spec, 2.0, (1, 2))
        x, y = spec.coordinates()
        assert np.allclose(u.values, 2.0 * np.cos(TWO_PI * (x + 2 * y)))

    def test_zero_mode_rejected(self):
        spec = GridSpec(1, (16,))
        with pytest.raises(ValueError):
            single_mode_potential(spec, 1.0, (0,))


class TestMonitorRecordContents:
    def test_initial_record_fields(self):
        spec = GridSpec(1, (32,))
        cfg = FlowConfig(grid=spec, kappa=0.0, t_max=1.0)
        u0 = single_mode_potential(spec, 1e-3, (1,))
        rec = monitor_record(FlowState.initial(u0, cfg), cfg)
        assert rec.t == 0.0
        assert abs(rec.max_u - 1e-3) <= 1e-12
        assert abs(rec.max_du - TWO_PI * 1e-3) <= 1e-9
        assert abs(rec.max_d2u - TWO_PI ** 2 * 1e-3) <= 1e-8
        assert rec.volume >= 1.0 - 1e-10
        assert rec.theta_min <= rec.theta_max
        assert abs(rec.theta_max) < np.pi / 2
