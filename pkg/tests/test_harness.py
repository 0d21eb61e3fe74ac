import json
from dataclasses import replace

import numpy as np
import pytest

from l0nsaf.engine import FIXED, VSS_KNOWN, VSS_UNKNOWN, AlgoConfig, ResetConfig
from l0nsaf.filterbank import make_bank
from l0nsaf.harness import (
    FLOOR_DB,
    ExperimentResult,
    SignalSpec,
    TrialSpec,
    emit_csv,
    emit_plot_data,
    emit_trials_csv,
    make_trial_data,
    misalignment_db,
    msd_bound_check,
    ratio_to_db,
    read_csv,
    run_monte_carlo,
    run_trial,
    steady_state_db,
    window_db,
)
from l0nsaf.signals import gen_ar1, gen_sparse_system, system_output
from l0nsaf.stream import prepare, run_filter

SMALL = SignalSpec(L=16, K=2, N=2, M=17, T=2000)
ALGOS = (
    AlgoConfig(mode=FIXED, mu=0.3, rho=1e-4, name="fixed"),
    AlgoConfig(mode=VSS_KNOWN, rho=1e-4, name="known"),
    AlgoConfig(mode=VSS_UNKNOWN, rho=1e-4, name="unknown"),
)


class TestMisalignment:
    def test_examples(self):
        w0 = np.array([1.0, 0.0, 0.0])
        assert misalignment_db(w0, np.zeros(3)) == 0.0
        assert misalignment_db(w0, w0) == FLOOR_DB
        assert misalignment_db(w0, 0.9 * w0) == pytest.approx(-20.0)

    def test_zero_reference(self):
        with pytest.raises(ValueError):
            misalignment_db(np.zeros(3), np.ones(3))

    def test_ratio_floor(self):
        assert ratio_to_db([0.0, 1.0, 0.1]).tolist() == pytest.approx([FLOOR_DB, 0.0, -10.0])

    def test_window_helpers(self):
        tr = ratio_to_db([1.0, 1.0, 0.1, 0.1])
        assert window_db(tr, 0, 2) == pytest.approx(0.0)
        assert steady_state_db(tr, 0.5) == pytest.approx(-10.0)


class TestSpecs:
    @pytest.mark.parametrize("kw", [dict(input="pink"), dict(system="dense"), dict(N=0),
                                    dict(flip_at=1.0), dict(snr_change_at=0.5),
                                    dict(doubletalk=(0.6, 0.5)), dict(input="file"),
                                    dict(system="file")])
    def test_signal_rejects(self, kw):
        with pytest.raises(ValueError):
            SignalSpec(**kw)

    def test_trial_rejects(self):
        with pytest.raises(ValueError):
            TrialSpec(ALGOS, trials=0)
        with pytest.raises(ValueError):
            TrialSpec((ALGOS[0], ALGOS[0]))
        with pytest.raises(ValueError):
            TrialSpec(())


class TestTrials:
    def test_deterministic(self):
        spec = TrialSpec(ALGOS, SMALL, seed=3)
        a, b = run_trial(spec, 1), run_trial(spec, 1)
        for name in spec.names:
            np.testing.assert_array_equal(a[name].misalignment, b[name].misalignment)
        c = run_trial(spec, 2)
        assert not np.array_equal(a["fixed"].misalignment, c["fixed"].misalignment)

    def test_seed_discipline(self):
        # trial i of base s equals trial 0 of base s + i
        a = run_trial(TrialSpec(ALGOS, SMALL, seed=3), 2)
        b = run_trial(TrialSpec(ALGOS, SMALL, seed=5), 0)
        np.testing.assert_array_equal(a["unknown"].w, b["unknown"].w)

    def test_known_gets_calibrated_noise(self):
        data = make_trial_data(SMALL, 0)
        y = system_output(data.x, data.system)
        assert data.noise.sigma_eta_sq == pytest.approx(np.mean(y * y) / 1e3)

    def test_trace_length(self):
        res = run_trial(TrialSpec(ALGOS, SMALL), 0)
        assert all(r.misalignment.size == 1000 for r in res.values())

    def test_nsaf_single_band_matches_scalar_reference(self):
        sig = replace(SMALL, N=1, M=1)
        cfg = AlgoConfig(mode=FIXED, mu=0.5, rho=0.0, delta=0.01, name="nlms")
        res = run_trial(TrialSpec((cfg,), sig, seed=4), 0)["nlms"]
        data = make_trial_data(sig, 4)
        h = data.system.coeffs
        w = np.zeros(16)
        buf = np.zeros(16)
        ref = []
        for t in range(sig.T):
            buf = np.concatenate([[data.x[t]], buf[:-1]])
            e = data.d[t] - buf @ w
            w = w + 0.5 * e * buf / (buf @ buf + 0.01)
            ref.append(np.sum((h - w) ** 2) / (h @ h))
        np.testing.assert_allclose(res.misalignment, ref, rtol=1e-10, atol=1e-14)

    def test_zero_noise_known_variance_monotone(self):
        T, L = 20000, 16
        x = gen_ar1(T, 2)
        h = gen_sparse_system(L, 3, 2).coeffs
        cfg = AlgoConfig(mode=VSS_KNOWN, noise_var=0.0, rho=0.0, delta=1e-6)
        res = run_filter(prepare(make_bank(1), x, system_output(x, h), L), cfg, h)
        tail = res.misalignment[int(0.2 * res.misalignment.size):]
        assert np.all(np.diff(tail) <= 1e-9)


class TestMonteCarlo:
    def test_single_trial_equals_run_trial(self):
        spec = TrialSpec(ALGOS, SMALL, seed=1)
        mc = run_monte_carlo(spec)
        one = run_trial(spec, 0)
        for name in spec.names:
            np.testing.assert_array_equal(mc.misalignment_db[name], ratio_to_db(one[name].misalignment))
            np.testing.assert_array_equal(mc.mu[name], one[name].mu)

    def test_linear_average(self):
        spec = TrialSpec(ALGOS, SMALL, trials=2, seed=1)
        mc = run_monte_carlo(spec)
        a, b = run_trial(spec, 0), run_trial(spec, 1)
        for name in spec.names:
            ref = ratio_to_db(np.mean([a[name].misalignment, b[name].misalignment], axis=0))
            np.testing.assert_array_equal(mc.misalignment_db[name], ref)

    def test_parallel_matches_serial(self):
        spec = TrialSpec(ALGOS, SMALL, trials=3, seed=2)
        s = run_monte_carlo(spec)
        p = run_monte_carlo(spec, parallel=2)
        for name in spec.names:
            np.testing.assert_array_equal(s.misalignment_db[name], p.misalignment_db[name])

    def test_meta(self):
        spec = TrialSpec(ALGOS, SMALL, trials=2, seed=7)
        r = run_monte_carlo(spec, keep_trials=True)
        assert r.meta["seed"] == 7 and r.meta["trials"] == 2
        assert r.meta["wall_time_s"] >= 0
        assert len(r.meta["per_trial"]) == 2
        assert r.algorithms == spec.names and r.n_iter == 1000

    def test_reset_recorded(self):
        cfg = AlgoConfig(mode=VSS_UNKNOWN, rho=1e-4, reset=ResetConfig.default(16), name="r")
        sig = replace(SMALL, T=8000, flip_at=0.5)
        r = run_monte_carlo(TrialSpec((cfg,), sig))
        assert r.meta["resets"]["r"][0]


class TestFiles:
    def result(self, n_iter=3, names=("a", "b")):
        rng = np.random.default_rng(0)
        mk = lambda: {n: rng.standard_normal(n_iter) for n in names}  # noqa: E731
        return ExperimentResult(misalignment_db=mk(), mu=mk(), p=mk(), meta={"seed": 1})

    def test_rows_and_header(self, tmp_path):
        emit_csv(self.result(), tmp_path / "r.csv")
        lines = (tmp_path / "r.csv").read_text().splitlines()
        assert lines[0] == "iter,algorithm,misalignment_db,mu,p"
        assert len(lines) == 7

    def test_empty(self, tmp_path):
        emit_csv(ExperimentResult(misalignment_db={}), tmp_path / "e.csv")
        assert (tmp_path / "e.csv").read_text().splitlines() == ["iter,algorithm,misalignment_db"]

    def test_round_trip_exact(self, tmp_path):
        r = self.result(50)
        emit_csv(r, tmp_path / "r.csv")
        back = read_csv(tmp_path / "r.csv")
        for n in r.algorithms:
            np.testing.assert_array_equal(back.misalignment_db[n], r.misalignment_db[n])
            np.testing.assert_array_equal(back.mu[n], r.mu[n])
            np.testing.assert_array_equal(back.p[n], r.p[n])

    def test_io_error_names_path(self, tmp_path):
        bad = tmp_path / "missing" / "r.csv"
        with pytest.raises(OSError, match="missing"):
            emit_csv(self.result(), bad)

    def test_plot_data(self, tmp_path):
        emit_plot_data(self.result(10), tmp_path / "p.json", stride=3)
        payload = json.loads((tmp_path / "p.json").read_text())
        assert payload["iterations"] == [0, 3, 6, 9]
        assert len(payload["series"]["a"]["misalignment_db"]) == 4
        assert payload["meta"]["seed"] == 1

    def test_trials_csv(self, tmp_path):
        spec = TrialSpec(ALGOS[:1], replace(SMALL, T=20), trials=2)
        r = run_monte_carlo(spec, keep_trials=True)
        emit_trials_csv(r.meta["per_trial"], tmp_path / "t.csv")
        lines = (tmp_path / "t.csv").read_text().splitlines()
        assert lines[0] == "trial,iter,algorithm,misalignment_db,mu,p"
        assert len(lines) == 1 + 2 * 10


def test_bound_check_shape():
    bc = msd_bound_check(trials=3, T=800)
    assert bc.start == 40
    assert bc.empirical.size == bc.tracked.size == 200
    assert 0.0 <= bc.coverage <= 1.0
    assert bc.tracked[0] < 1.0
