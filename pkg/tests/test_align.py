import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from difftts.align import (
    Alignment,
    DurationPredictor,
    brute_force_alignment,
    count_alignments,
    duration_loss,
    durations_from_alignment,
    encoder_loss,
    expand_encoded,
    mas,
    scale_durations,
)
from difftts.errors import ContractError, DomainError, ShapeError

LOG2PI = math.log(2 * math.pi)
MU2 = np.array([[0.0], [1.0]])
Y3 = np.array([[0.0], [0.0], [1.0]])


class TestAlignment:
    def test_from_durations(self):
        a = Alignment.from_durations([2, 1, 3])
        assert a.frame_to_token.tolist() == [0, 0, 1, 2, 2, 2]
        assert a.durations.tolist() == [2, 1, 3]
        assert (a.num_tokens, a.num_frames) == (3, 6)

    @pytest.mark.parametrize("bad", [[1, 1], [0, 2], [0, 1, 0], []])
    def test_invalid(self, bad):
        with pytest.raises(ContractError):
            Alignment(bad)

    def test_zero_duration(self):
        with pytest.raises(ContractError):
            Alignment.from_durations([2, 0])

    def test_check(self):
        with pytest.raises(ContractError):
            Alignment.from_durations([1, 1]).check(2, 3)


class TestEncoderLoss:
    def test_perfect_fit(self):
        y = np.array([[0.3], [0.3], [-1.0]])
        a = Alignment([0, 0, 1])
        assert encoder_loss(np.array([[0.3], [-1.0]]), y, a) == pytest.approx(1.5 * LOG2PI)
        assert encoder_loss(np.array([[0.3], [-1.0]]), y, a) == pytest.approx(2.7568, abs=5e-5)

    def test_hand_values(self):
        assert encoder_loss(MU2, Y3, Alignment([0, 0, 1])) == pytest.approx(1.5 * LOG2PI)
        assert encoder_loss(MU2, Y3, Alignment([0, 1, 1])) == pytest.approx(1.5 * LOG2PI + 0.5)

    def test_matches_gaussian_logpdf(self, rng):
        from scipy import stats

        mu, y = rng.normal(size=(3, 4)), rng.normal(size=(7, 4))
        a = Alignment.from_durations([2, 4, 1])
        ref = -sum(stats.multivariate_normal(mu[i], np.eye(4)).logpdf(y[j]) for j, i in enumerate(a.frame_to_token))
        assert encoder_loss(mu, y, a) == pytest.approx(ref, rel=1e-12)

    def test_wrong_alignment(self):
        with pytest.raises(ContractError):
            encoder_loss(MU2, Y3, Alignment([0, 0, 0]))


class TestMAS:
    def test_single_token(self, rng):
        a = mas(rng.normal(size=(1, 3)), rng.normal(size=(6, 3)))
        assert a.frame_to_token.tolist() == [0] * 6

    def test_hand_example(self):
        assert mas(MU2, Y3).durations.tolist() == [2, 1]

    def test_too_few_frames(self, rng):
        with pytest.raises(ContractError):
            mas(rng.normal(size=(4, 2)), rng.normal(size=(3, 2)))

    def test_tie_break(self):
        # every alignment scores the same; lexicographically smallest durations win
        assert mas(np.zeros((2, 1)), np.zeros((4, 1))).durations.tolist() == [1, 3]
        assert mas(np.zeros((3, 2)), np.zeros((5, 2))).durations.tolist() == [1, 1, 3]

    def test_agrees_with_enumeration(self):
        rng = np.random.default_rng(0)
        for n_tok in range(1, 5):
            for n_frm in range(n_tok, 9):
                for _ in range(10):
                    mu, y = rng.normal(size=(n_tok, 2)), rng.normal(size=(n_frm, 2))
                    a, b = mas(mu, y), brute_force_alignment(mu, y)
                    assert encoder_loss(mu, y, a) == encoder_loss(mu, y, b)
                    assert a.frame_to_token.tolist() == b.frame_to_token.tolist()

    def test_agrees_on_integer_ties(self):
        rng = np.random.default_rng(1)
        for _ in range(300):
            n_tok = int(rng.integers(1, 4))
            n_frm = int(rng.integers(n_tok, 8))
            mu, y = rng.integers(0, 2, (n_tok, 1)).astype(float), rng.integers(0, 2, (n_frm, 1)).astype(float)
            assert mas(mu, y).durations.tolist() == brute_force_alignment(mu, y).durations.tolist()

    @settings(max_examples=60, deadline=None)
    @given(seed=st.integers(0, 2**31), shift=st.floats(-50, 50))
    def test_translation_invariant(self, seed, shift):
        r = np.random.default_rng(seed)
        n_tok = int(r.integers(1, 6))
        mu, y = r.normal(size=(n_tok, 3)), r.normal(size=(n_tok + int(r.integers(0, 10)), 3))
        c = shift * r.normal(size=3)
        a, b = mas(mu, y), mas(mu + c, y + c)
        np.testing.assert_array_equal(a.frame_to_token, b.frame_to_token)

    @settings(max_examples=60, deadline=None)
    @given(seed=st.integers(0, 2**31))
    def test_output_always_valid(self, seed):
        r = np.random.default_rng(seed)
        n_tok = int(r.integers(1, 12))
        n_frm = n_tok + int(r.integers(0, 30))
        a = mas(r.normal(size=(n_tok, 2)), r.normal(size=(n_frm, 2)))
        a.check(n_tok, n_frm)
        assert a.durations.sum() == n_frm and np.all(a.durations >= 1)


class TestBruteForce:
    def test_square_is_identity(self, rng):
        assert brute_force_alignment(rng.normal(size=(4, 2)), rng.normal(size=(4, 2))).durations.tolist() == [1] * 4

    def test_candidate_count(self):
        assert count_alignments(2, 3) == 2
        assert count_alignments(4, 8) == 35

    def test_cap(self, rng):
        with pytest.raises(DomainError):
            brute_force_alignment(rng.normal(size=(4, 1)), rng.normal(size=(8, 1)), cap=34)


class TestDurations:
    def test_log_durations(self):
        np.testing.assert_allclose(durations_from_alignment(Alignment([0, 0, 1])), [math.log(2), 0.0])
        np.testing.assert_array_equal(durations_from_alignment(Alignment([0, 1, 2])), 0.0)
        assert durations_from_alignment(Alignment([0] * 5)).tolist() == [math.log(5)]

    def test_expand(self, rng):
        mu = rng.normal(size=(2, 3))
        np.testing.assert_array_equal(expand_encoded(mu, [1, 1]), mu)
        np.testing.assert_array_equal(expand_encoded(mu, [2, 1]), mu[[0, 0, 1]])
        with pytest.raises(ContractError):
            expand_encoded(mu, [2, 0])
        with pytest.raises(ShapeError):
            expand_encoded(mu, [1, 1, 1])

    @settings(max_examples=50, deadline=None)
    @given(d=st.lists(st.integers(1, 9), min_size=1, max_size=10))
    def test_round_trip(self, d):
        mu = np.arange(len(d), dtype=float)[:, None]
        frames = expand_encoded(mu, d)
        a = Alignment(frames[:, 0].astype(int))
        np.testing.assert_allclose(durations_from_alignment(a), np.log(d))

    @pytest.mark.parametrize(
        "d,factor,expected",
        [([math.log(2), 0.0], 1.0, [2, 1]), ([math.log(2), 0.0], 2.0, [4, 2]), ([0.0], 0.1, [1])],
    )
    def test_scale(self, d, factor, expected):
        assert scale_durations(d, factor).tolist() == expected

    def test_scale_rounds_half_up(self):
        assert scale_durations([math.log(2.5), math.log(1.5)], 1.0).tolist() == [3, 2]

    @pytest.mark.parametrize("factor", [0.0, -1.0])
    def test_scale_bad_factor(self, factor):
        with pytest.raises(DomainError):
            scale_durations([0.0], factor)


class TestDurationPredictor:
    def test_output_length(self, rng):
        dp = DurationPredictor.init(4, rng)
        for n_tok in (1, 3, 11):
            assert dp(rng.normal(size=(n_tok, 4))).shape == (n_tok,)

    def test_loss_values(self):
        d = np.array([0.5, 1.0, 0.0])
        assert duration_loss(d, None, d) == 0.0
        assert duration_loss(d + 1, None, d) == pytest.approx(1.0)
        with pytest.raises(ShapeError):
            duration_loss(d, None, d[:2])

    def test_gradients(self, rng):
        dp = DurationPredictor(3, 5, rng.normal(size=DurationPredictor(3, 5).num_params))
        mu, d = rng.normal(size=(6, 3)), rng.normal(size=6)
        pred, cache = dp.forward(mu)
        g_out = 2 * (pred - d) / d.size
        grad, g_in = dp.backward(cache, g_out)
        h = 1e-6
        for i in range(dp.num_params):
            p = dp.params.copy()
            p[i] += h
            up = duration_loss(DurationPredictor(3, 5, p), mu, d)
            p[i] -= 2 * h
            dn = duration_loss(DurationPredictor(3, 5, p), mu, d)
            assert grad[i] == pytest.approx((up - dn) / (2 * h), rel=1e-4, abs=1e-8)
        e = np.zeros_like(mu)
        e[2, 1] = h
        fd = (duration_loss(dp, mu + e, d) - duration_loss(dp, mu - e, d)) / (2 * h)
        assert g_in[2, 1] == pytest.approx(fd, rel=1e-4, abs=1e-8)
