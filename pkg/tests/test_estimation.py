import dataclasses

import numpy as np
import pytest

from rfkit import apply_batch, build_operator
from rfkit.estimation import (
    StackedRealOperator,
    TemplateSet,
    classify_compressed,
    classify_whitened,
    detect_events,
    estimate_trace_compressed,
    estimate_trace_original,
    estimate_trace_whitened,
)
from rfkit.exceptions import (
    DegenerateProfileError,
    DimensionError,
    UnidentifiableProfileError,
)
from rfkit.metrics import inner_product_deviation


def _project_one(op, v):
    return apply_batch(op, np.asarray(v)[:, None])[:, 0]


class TestEstimateTraceOriginal:
    def test_noiseless_rank_one_recovers_exactly(self):
        rng = np.random.default_rng(0)
        a = rng.standard_normal(50)
        t = rng.standard_normal(30)
        D = np.outer(a, t)
        np.testing.assert_allclose(estimate_trace_original(D, a), t, atol=1e-12)

    def test_zero_profile_rejected(self):
        with pytest.raises(DegenerateProfileError):
            estimate_trace_original(np.ones((4, 3)), np.zeros(4))

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            estimate_trace_original(np.ones((4, 3)), np.ones(5))


class TestEstimateTraceCompressed:
    def test_equals_original_at_unitary_limit(self):
        rng = np.random.default_rng(1)
        n = 96
        op = build_operator(n, n, 7)
        a = rng.standard_normal(n)
        D = np.outer(a, rng.standard_normal(25)) + 0.2 * rng.standard_normal((n, 25))
        s_o = estimate_trace_original(D, a)
        s_c = estimate_trace_compressed(apply_batch(op, D), _project_one(op, a))
        np.testing.assert_allclose(s_c, s_o, atol=1e-12)

    def test_noiseless_template_movie_exact_at_any_m(self):
        # common projection factors cancel on the template's image
        rng = np.random.default_rng(2)
        n = 128
        a = rng.standard_normal(n)
        t = rng.standard_normal(40)
        op = build_operator(n, n // 4, 3)
        Z = apply_batch(op, np.outer(a, t))
        s = estimate_trace_compressed(Z, _project_one(op, a))
        np.testing.assert_allclose(s, t, atol=1e-10)

    def test_scale_invariance(self):
        rng = np.random.default_rng(3)
        n = 64
        op = build_operator(n, 16, 5)
        doubled = dataclasses.replace(op, scale=op.scale * 2.0)
        D = rng.standard_normal((n, 10))
        a = rng.standard_normal(n)
        s1 = estimate_trace_compressed(apply_batch(op, D), _project_one(op, a))
        s2 = estimate_trace_compressed(apply_batch(doubled, D), _project_one(doubled, a))
        np.testing.assert_allclose(s1, s2, atol=1e-12)

    def test_error_bounded_by_inner_product_deviation(self):
        rng = np.random.default_rng(4)
        n, m, T = 256, 64, 30
        a = rng.standard_normal(n)
        D = np.outer(a, np.abs(rng.standard_normal(T))) + 0.3 * rng.standard_normal((n, T))
        op = build_operator(n, m, 11)
        s_o = estimate_trace_original(D, a)
        s_c = estimate_trace_compressed(apply_batch(op, D), _project_one(op, a))
        bounds = inner_product_deviation(op, [(D[:, t], a) for t in range(T)])
        na2 = float(a @ a)
        for t in range(T):
            assert abs(s_c[t] - s_o[t]) <= bounds[t][1] / na2

    def test_zero_projected_profile_rejected(self):
        with pytest.raises(DegenerateProfileError):
            estimate_trace_compressed(np.ones((4, 3), dtype=complex), np.zeros(4, dtype=complex))


def _spectral_null_profile(op):
    """Real profile a != 0 whose projection is exactly zero.

    Puts a conjugate-symmetric spectrum on frequencies the operator discards,
    then undoes the sign flips.
    """
    kept = set(op.freq_indices.tolist())
    k = next(
        k for k in range(1, op.n) if k not in kept and (op.n - k) % op.n not in kept
    )
    spectrum = np.zeros(op.n, dtype=complex)
    spectrum[k] = 1.0
    spectrum[(op.n - k) % op.n] = 1.0
    a = np.fft.ifft(spectrum, norm="ortho")
    assert np.max(np.abs(a.imag)) < 1e-14
    return op.signs * a.real


class TestEstimateTraceWhitened:
    def test_equals_original_at_unitary_limit(self):
        rng = np.random.default_rng(5)
        n = 48
        op = build_operator(n, n, 2)
        a = rng.standard_normal(n)
        D = np.outer(a, rng.standard_normal(20)) + 0.1 * rng.standard_normal((n, 20))
        s_o = estimate_trace_original(D, a)
        s_w = estimate_trace_whitened(op, apply_batch(op, D), a)
        np.testing.assert_allclose(s_w, s_o, atol=1e-10)

    def test_mse_not_worse_than_simple_estimator(self):
        rng = np.random.default_rng(6)
        n, m, T = 64, 16, 200
        op = build_operator(n, m, 9)
        a = rng.standard_normal(n)
        t_true = rng.standard_normal(T)
        stacked = StackedRealOperator.from_operator(op)
        a_c = _project_one(op, a)
        mse_w = 0.0
        mse_c = 0.0
        for _ in range(100):
            D = np.outer(a, t_true) + 0.1 * rng.standard_normal((n, T))
            Z = apply_batch(op, D)
            s_w = estimate_trace_whitened(op, Z, a, stacked=stacked)
            s_c = estimate_trace_compressed(Z, a_c)
            mse_w += np.mean((s_w - t_true) ** 2)
            mse_c += np.mean((s_c - t_true) ** 2)
        assert mse_w <= mse_c

    def test_rank_deficient_gram_still_finite(self):
        # row 0 of the DFT is real, so the stacked gram is singular whenever
        # frequency 0 is kept; scan seeds for such an operator
        op = None
        for seed in range(200):
            cand = build_operator(32, 8, seed)
            if 0 in cand.freq_indices:
                op = cand
                break
        assert op is not None
        stacked = StackedRealOperator.from_operator(op)
        gram = stacked.a @ stacked.a.T
        assert np.linalg.matrix_rank(gram) < gram.shape[0]
        rng = np.random.default_rng(7)
        a = rng.standard_normal(32)
        Z = apply_batch(op, np.outer(a, rng.standard_normal(5)))
        s = estimate_trace_whitened(op, Z, a, stacked=stacked)
        assert np.all(np.isfinite(s))

    def test_pinv_identity(self):
        op = build_operator(40, 10, 3)
        stacked = StackedRealOperator.from_operator(op)
        gram = stacked.a @ stacked.a.T
        resid = stacked.gram_pinv @ gram @ stacked.gram_pinv - stacked.gram_pinv
        assert np.max(np.abs(resid)) <= 1e-8

    def test_unidentifiable_profile(self):
        op = build_operator(32, 8, 1)
        a = _spectral_null_profile(op)
        assert np.max(np.abs(_project_one(op, a))) <= 1e-12
        Z = np.zeros((8, 3), dtype=complex)
        with pytest.raises(UnidentifiableProfileError):
            estimate_trace_whitened(op, Z, a)


class TestDetectEvents:
    def test_single_impulse_on_noise_floor(self):
        rng = np.random.default_rng(12)
        trace = rng.standard_normal(100)
        trace[50] += 10.0
        assert detect_events(trace, k_sigma=3.0) == [50]

    def test_two_close_impulses_merge_to_earlier(self):
        trace = np.zeros(40)
        trace[10] = 5.0
        trace[12] = 4.0
        noise = 0.01 * np.sin(np.arange(40))  # break the flat MAD
        events = detect_events(trace + noise, k_sigma=3.0, refractory=3)
        assert events == [10]

    def test_separated_impulses_both_kept(self):
        trace = np.zeros(40)
        trace[10] = 5.0
        trace[20] = 4.0
        events = detect_events(trace + 0.01 * np.sin(np.arange(40)), refractory=3)
        assert events == [10, 20]

    def test_constant_trace_no_events(self):
        assert detect_events(np.full(30, 2.5)) == []

    def test_zero_trace_no_events(self):
        assert detect_events(np.zeros(30)) == []

    def test_plateau_reports_leading_edge(self):
        trace = np.zeros(20)
        trace[8] = trace[9] = 3.0
        events = detect_events(trace + 0.001 * np.cos(np.arange(20)), refractory=2)
        assert events == [8]

    def test_validation(self):
        with pytest.raises(DimensionError):
            detect_events(np.ones(1))
        with pytest.raises(ValueError):
            detect_events(np.ones(10), k_sigma=0.0)
        with pytest.raises(ValueError):
            detect_events(np.ones(10), refractory=0)


class TestClassifyCompressed:
    def _setup(self, seed=0, n=64, m=16, P=5):
        rng = np.random.default_rng(seed)
        S = rng.standard_normal((n, P))
        templates = TemplateSet(S, labels=[f"c{i}" for i in range(P)])
        op = build_operator(n, m, seed)
        return rng, S, templates, op

    def test_matches_original_space_at_unitary_limit(self):
        rng, S, templates, _ = self._setup()
        op = build_operator(64, 64, 4)
        for _ in range(20):
            x = S[:, rng.integers(5)] + 0.3 * rng.standard_normal(64)
            original_label = templates.labels[
                int(np.argmin(np.sum((S - x[:, None]) ** 2, axis=0)))
            ]
            z = _project_one(op, x)
            assert classify_compressed(z, templates, op) == original_label

    def test_recovers_true_template_at_moderate_compression(self):
        rng, S, templates, op = self._setup(seed=1)
        correct = 0
        for i in range(5):
            z = _project_one(op, S[:, i])
            correct += classify_compressed(z, templates, op) == f"c{i}"
        assert correct == 5

    def test_tie_breaks_to_lowest_index(self):
        n = 32
        a = np.random.default_rng(2).standard_normal(n)
        templates = TemplateSet(np.stack([a, a], axis=1), labels=["first", "second"])
        op = build_operator(n, 8, 0)
        z = _project_one(op, a)
        assert classify_compressed(z, templates, op) == "first"

    def test_batch_matches_single(self):
        rng, S, templates, op = self._setup(seed=3)
        X = rng.standard_normal((64, 9))
        Z = apply_batch(op, X)
        batch = classify_compressed(Z, templates, op)
        singles = [classify_compressed(Z[:, j], templates, op) for j in range(9)]
        assert batch == singles

    def test_permutation_invariance(self):
        rng, S, templates, op = self._setup(seed=4)
        perm = [3, 0, 4, 1, 2]
        permuted = TemplateSet(S[:, perm], labels=[f"c{i}" for i in perm])
        for _ in range(10):
            x = rng.standard_normal(64)
            z = _project_one(op, x)
            assert classify_compressed(z, templates, op) == classify_compressed(
                z, permuted, op
            )

    def test_projection_cache_reused(self):
        _, _, templates, op = self._setup(seed=5)
        z = np.zeros(16, dtype=complex)
        classify_compressed(z, templates, op)
        first = templates.projected(op)
        classify_compressed(z, templates, op)
        assert templates.projected(op) is first

    def test_scale_invariant_decisions(self):
        rng, S, templates, op = self._setup(seed=6)
        doubled = dataclasses.replace(op, scale=op.scale * 3.0)
        for _ in range(10):
            x = rng.standard_normal(64)
            assert classify_compressed(
                _project_one(op, x), templates, op
            ) == classify_compressed(_project_one(doubled, x), templates, doubled)


class TestClassifyWhitened:
    def test_matches_original_space_at_unitary_limit(self):
        rng = np.random.default_rng(8)
        n = 40
        S = rng.standard_normal((n, 4))
        templates = TemplateSet(S)
        op = build_operator(n, n, 1)
        stacked = StackedRealOperator.from_operator(op)
        for _ in range(15):
            x = S[:, rng.integers(4)] + 0.2 * rng.standard_normal(n)
            original_label = int(np.argmin(np.sum((S - x[:, None]) ** 2, axis=0)))
            y = stacked.stack(_project_one(op, x)[:, None])[:, 0]
            assert classify_whitened(y, templates, stacked) == original_label

    def test_finite_scores_with_singular_gram(self):
        op = None
        for seed in range(200):
            cand = build_operator(24, 6, seed)
            if 0 in cand.freq_indices:
                op = cand
                break
        stacked = StackedRealOperator.from_operator(op)
        rng = np.random.default_rng(9)
        S = rng.standard_normal((24, 3))
        templates = TemplateSet(S)
        y = stacked.stack(_project_one(op, S[:, 1])[:, None])[:, 0]
        assert classify_whitened(y, templates, stacked) == 1


class TestTemplateSet:
    def test_rejects_zero_template(self):
        with pytest.raises(DegenerateProfileError):
            TemplateSet(np.zeros((4, 2)))

    def test_rejects_duplicate_labels(self):
        with pytest.raises(ValueError):
            TemplateSet(np.ones((4, 2)) * np.array([1.0, 2.0]), labels=["a", "a"])

    def test_default_labels(self):
        ts = TemplateSet(np.eye(3))
        assert ts.labels == [0, 1, 2]
        assert ts.count == 3
