import math

import numpy as np
import pytest

from beamtrack import dynamics
from beamtrack.arrays import (
    ArrayConfig,
    ChannelState,
    SnrConfig,
    array_response,
    steering_vector,
)
from beamtrack.baselines import (
    KF_OFFSET_RAD,
    cs_dictionary,
    cs_update,
    kf_update,
    ls_update,
    make_cs_state,
    make_kf_state,
    make_ls_state,
    make_wlan_state,
    wlan_probe_index,
    wlan_update,
)
from beamtrack.engine import TrialSetup, run_chunk
from beamtrack.trackers import DiminishingStep, alpha_star, codebook_directions

PILOT = (1 - 1j) / math.sqrt(2)
BETA = (1 + 1j) / math.sqrt(2)
CFG = ArrayConfig(16, 0.5)
NOISELESS = SnrConfig(pilot=PILOT, rho=10.0, no_noise=True)


def run_ls_sweeps(cfg, snr, channel, rng, n_sweeps=1, mode="window"):
    state = make_ls_state(cfg, mode=mode)
    w = None
    for slot in range(1, n_sweeps * cfg.num_antennas + 1):
        state, w = ls_update(cfg, snr, channel, state, slot, rng)
    return state, w


class TestLeastSquares:
    def test_noise_free_exact(self):
        ch = ChannelState(0.3, BETA)
        state, w = run_ls_sweeps(CFG, NOISELESS, ch, None)
        h = BETA * steering_vector(CFG, 0.3)
        np.testing.assert_allclose(state.h_hat, h, atol=1e-10)
        # data beamformer matches the conjugate beamformer up to a global phase
        resp = array_response(w, CFG, 0.3)
        assert abs(resp) == pytest.approx(math.sqrt(16), abs=1e-9)
        assert math.log2(1 + 10.0 * abs(resp) ** 2) == pytest.approx(math.log2(1 + 160), rel=1e-9)

    def test_insufficient_pilots_reported(self):
        ch = ChannelState(0.3, BETA)
        state = make_ls_state(CFG, fallback_direction=0.25)
        state, w = ls_update(CFG, NOISELESS, ch, state, 1, None)
        assert state.insufficient_pilots
        assert state.h_hat is None
        # meanwhile the stage-1 direction steers the data beam
        assert array_response(w, CFG, 0.25) == pytest.approx(math.sqrt(16), abs=1e-9)

    def test_window_noise_floor(self):
        # analytic LS covariance: E||h_hat - h||^2 = M*sigma^2/|p|^2 per sweep
        snr = SnrConfig(pilot=PILOT, rho=10.0)
        ch = ChannelState(0.37, BETA)
        h = BETA * steering_vector(CFG, 0.37)
        rng = np.random.default_rng(0)
        total = 0.0
        sweeps = 1500
        for _ in range(sweeps):
            state, _ = run_ls_sweeps(CFG, snr, ch, rng)
            total += float(np.sum(np.abs(state.h_hat - h) ** 2))
        sigma2 = abs(PILOT * BETA) ** 2 / 10.0
        assert total / sweeps == pytest.approx(16 * sigma2 / abs(PILOT) ** 2, rel=0.05)

    def test_all_mode_averages_sweeps(self):
        snr = SnrConfig(pilot=PILOT, rho=10.0)
        ch = ChannelState(0.37, BETA)
        h = BETA * steering_vector(CFG, 0.37)
        rng = np.random.default_rng(1)
        errs = []
        for k in (1, 8):
            total = 0.0
            for _ in range(150):
                state, _ = run_ls_sweeps(CFG, snr, ch, rng, n_sweeps=k, mode="all")
                total += float(np.sum(np.abs(state.h_hat - h) ** 2))
            errs.append(total / 150)
        assert errs[1] == pytest.approx(errs[0] / 8, rel=0.35)

    def test_seeded_determinism(self):
        snr = SnrConfig(pilot=PILOT, rho=5.0)
        ch = ChannelState(-0.2, BETA)
        s1, _ = run_ls_sweeps(CFG, snr, ch, np.random.default_rng(3))
        s2, _ = run_ls_sweeps(CFG, snr, ch, np.random.default_rng(3))
        np.testing.assert_array_equal(s1.h_hat, s2.h_hat)


class TestCompressedSensing:
    def test_noise_free_on_atom_exact_recovery(self):
        grid = cs_dictionary()
        x_atom = float(grid[700])
        ch = ChannelState(x_atom, BETA)
        for seed in range(10):
            rng = np.random.default_rng(seed)
            state = make_cs_state(window=8)
            for slot in range(1, 9):
                state, x_hat, _ = cs_update(CFG, NOISELESS, ch, state, slot, rng)
            assert x_hat == x_atom

    def test_quantization_floor(self):
        # noise-free off-grid directions: mean squared error is at least the
        # uniform-quantization bound of the 1024-atom grid
        rng = np.random.default_rng(5)
        xs = rng.uniform(-0.99, 0.99, 600)
        errs = []
        for x in xs:
            ch = ChannelState(float(x), BETA)
            state = make_cs_state(window=4)
            for slot in range(1, 5):
                state, x_hat, _ = cs_update(CFG, NOISELESS, ch, state, slot, rng)
            errs.append((x_hat - x) ** 2)
        errs = np.asarray(errs)
        bound = (2 / 1024) ** 2 / 12
        assert errs.mean() >= bound - 3 * errs.std() / math.sqrt(errs.size)

    def test_estimate_in_range(self):
        snr = SnrConfig(pilot=PILOT, rho=0.5)
        rng = np.random.default_rng(8)
        ch = ChannelState(0.93, BETA)
        state = make_cs_state(window=8)
        for slot in range(1, 30):
            state, x_hat, w = cs_update(CFG, snr, ch, state, slot, rng)
            assert -1.0 <= x_hat <= 1.0
            np.testing.assert_allclose(np.abs(w.weights), 0.25, atol=1e-12)

    def test_window_bounded(self):
        snr = SnrConfig(pilot=PILOT, rho=1.0)
        rng = np.random.default_rng(2)
        ch = ChannelState(0.0, BETA)
        state = make_cs_state(window=8)
        for slot in range(1, 40):
            state, _, _ = cs_update(CFG, snr, ch, state, slot, rng)
        assert len(state.obs) == 8 and len(state.probes) == 8


class TestWlanSweepRefine:
    def test_noise_free_static_locks_nearest(self):
        dirs = codebook_directions(CFG)
        x = 0.3
        best0 = int(np.argmin(np.abs(dirs - x)))
        state = make_wlan_state(best=best0)
        ch = ChannelState(x, BETA)
        for slot in range(1, 31):
            state, w = wlan_update(CFG, NOISELESS, ch, state, slot, None)
            assert state.best == best0
        assert abs(dirs[state.best] - x) <= 1.0 / 16

    def test_recovers_after_bad_init(self):
        dirs = codebook_directions(CFG)
        x = 0.3
        best0 = int(np.argmin(np.abs(dirs - x)))
        state = make_wlan_state(best=best0 + 1)
        ch = ChannelState(x, BETA)
        for slot in range(1, 10):
            state, _ = wlan_update(CFG, NOISELESS, ch, state, slot, None)
        assert state.best == best0

    def test_boundary_probes_clip(self):
        import dataclasses

        m = CFG.num_antennas
        lo = {wlan_probe_index(dataclasses.replace(make_wlan_state(best=0), phase=p), m) for p in range(3)}
        assert lo == {0, 1}
        hi = {wlan_probe_index(dataclasses.replace(make_wlan_state(best=m - 1), phase=p), m) for p in range(3)}
        assert hi == {m - 2, m - 1}

    def test_period_respected(self):
        state = make_wlan_state(best=5, period=3)
        ch = ChannelState(0.1, BETA)
        rng = np.random.default_rng(0)
        snr = SnrConfig(pilot=PILOT, rho=10.0)
        bests = []
        for slot in range(1, 10):
            state, _ = wlan_update(CFG, snr, ch, state, slot, rng)
            bests.append(state.best)
        # best may change only at the end of each 3-slot period
        assert bests[0] == bests[1] == 5


class TestKalman:
    def test_noise_free_fixed_point(self):
        theta = 0.4
        ch = ChannelState(math.sin(theta), BETA)
        state = make_kf_state(theta0=theta, q=0.0)
        for slot in range(1, 20):
            state, theta_hat, _ = kf_update(CFG, NOISELESS, ch, state, slot, None)
            assert theta_hat == pytest.approx(theta, abs=1e-12)

    def test_probe_offsets_alternate(self):
        assert KF_OFFSET_RAD == pytest.approx(math.radians(3.5))
        state = make_kf_state(theta0=0.0)
        assert state.phase == 0
        ch = ChannelState(0.0, BETA)
        state2, _, _ = kf_update(CFG, NOISELESS, ch, state, 1, None)
        assert state2.phase == 1
        state3, _, _ = kf_update(CFG, NOISELESS, ch, state2, 2, None)
        assert state3.phase == 0

    def test_static_mse_decreases(self):
        # Monte-Carlo mean squared AoA error shrinks over the first 50 slots
        theta = 0.3
        model = dynamics.Static(math.sin(theta))
        setup = TrialSetup(
            algorithm="kf", cfg_track=CFG, cfg_data=CFG, rho=10.0, stage1_rho=10.0,
            beta=BETA, pilot=PILOT, no_noise=False,
            schedule=DiminishingStep(alpha_star(CFG)), model=model,
            n_slots=50, m0=32, base_seed=4,
        )
        res = run_chunk(setup, 0, 1000)
        mse = res.sums["mse_x"] / 1000
        checkpoints = mse[[0, 9, 19, 34, 49]]
        assert np.all(np.diff(checkpoints) < 0)

    def test_divergence_flagged(self):
        state = make_kf_state(theta0=1.5707, q=0.0, p0=1e-2)
        ch = ChannelState(0.0, BETA)
        rng = np.random.default_rng(0)
        snr = SnrConfig(pilot=PILOT, rho=0.01)
        for slot in range(1, 200):
            state, theta_hat, _ = kf_update(CFG, snr, ch, state, slot, rng)
            assert abs(theta_hat) <= math.pi / 2
        # heavy noise at the domain edge eventually pins and flags the filter
        assert isinstance(state.diverged, bool)

    def test_seeded_determinism(self):
        ch = ChannelState(0.2, BETA)
        snr = SnrConfig(pilot=PILOT, rho=5.0)
        outs = []
        for _ in range(2):
            rng = np.random.default_rng(12)
            state = make_kf_state(theta0=0.1)
            for slot in range(1, 30):
                state, theta_hat, _ = kf_update(CFG, snr, ch, state, slot, rng)
            outs.append(theta_hat)
        assert outs[0] == outs[1]


class TestPilotParity:
    def test_one_pilot_per_slot(self):
        # every baseline consumes exactly one complex observation per update
        class CountingRng:
            def __init__(self, seed):
                self._rng = np.random.default_rng(seed)
                self.normal_draws = 0

            def standard_normal(self, *args, **kwargs):
                out = self._rng.standard_normal(*args, **kwargs)
                self.normal_draws += np.size(out)
                return out

            def integers(self, *args, **kwargs):
                return self._rng.integers(*args, **kwargs)

        ch = ChannelState(0.2, BETA)
        snr = SnrConfig(pilot=PILOT, rho=10.0)

        rng = CountingRng(0)
        state = make_ls_state(CFG)
        state, _ = ls_update(CFG, snr, ch, state, 1, rng)
        assert rng.normal_draws == 2

        rng = CountingRng(0)
        state = make_cs_state(window=8)
        state, _, _ = cs_update(CFG, snr, ch, state, 1, rng)
        assert rng.normal_draws == 2

        rng = CountingRng(0)
        state = make_wlan_state(best=3)
        state, _ = wlan_update(CFG, snr, ch, state, 1, rng)
        assert rng.normal_draws == 2

        rng = CountingRng(0)
        state = make_kf_state(theta0=0.1)
        state, _, _ = kf_update(CFG, snr, ch, state, 1, rng)
        assert rng.normal_draws == 2

    def test_data_beamformers_unit_modulus(self):
        ch = ChannelState(0.2, BETA)
        snr = SnrConfig(pilot=PILOT, rho=10.0)
        rng = np.random.default_rng(1)
        mod = 1 / math.sqrt(16)

        state = make_ls_state(CFG)
        for slot in range(1, 18):
            state, w = ls_update(CFG, snr, ch, state, slot, rng)
            np.testing.assert_allclose(np.abs(w.weights), mod, atol=1e-12)

        state = make_kf_state(theta0=0.1)
        for slot in range(1, 6):
            state, _, w = kf_update(CFG, snr, ch, state, slot, rng)
            np.testing.assert_allclose(np.abs(w.weights), mod, atol=1e-12)


class TestLsWindowModeFloor:
    def test_no_improvement_with_more_sweeps(self):
        # the sliding window forgets old pilots, so the error stays at the
        # one-sweep floor no matter how long it runs
        snr = SnrConfig(pilot=PILOT, rho=10.0)
        ch = ChannelState(0.37, BETA)
        h = BETA * steering_vector(CFG, 0.37)
        rng = np.random.default_rng(7)
        means = []
        for sweeps in (1, 6):
            total = 0.0
            reps = 400
            for _ in range(reps):
                state, _ = run_ls_sweeps(CFG, snr, ch, rng, n_sweeps=sweeps, mode="window")
                total += float(np.sum(np.abs(state.h_hat - h) ** 2))
            means.append(total / reps)
        assert means[1] == pytest.approx(means[0], rel=0.15)
