import itertools

import numpy as np
import pytest

from conftest import encode_pair, random_violating_case
from streamhash.codes import HashCode, hamming_distance
from streamhash.inference import delta_scores, infer_zero_loss_codes
from streamhash.loss import CodePair, LossParams, PairSample, similarity_loss
from streamhash.model import HashModel


def pair_of(i_signs, j_signs) -> CodePair:
    return CodePair(HashCode.from_signs(i_signs), HashCode.from_signs(j_signs))


class TestDeltaScores:
    def test_picks_smaller_product_and_side(self):
        # products: side i -> (+1)(0.3) = 0.3, side j -> (-1)(-0.5) = 0.5
        m = HashModel(np.array([[1.0]]))
        pair = PairSample([0.3], [-0.5], -1)
        h = pair_of([1], [-1])
        [(k, delta, side)] = delta_scores(m, pair, h, {0})
        assert (k, side) == (0, "i")
        assert delta == pytest.approx(0.3)

    def test_exact_tie_goes_to_side_i(self):
        m = HashModel(np.array([[1.0]]))
        pair = PairSample([0.5], [0.5], 1)
        h = pair_of([1], [1])
        [(_, delta, side)] = delta_scores(m, pair, h, {0})
        assert side == "i"
        assert delta == pytest.approx(0.5)

    def test_matches_scalar_recomputation(self, rng):
        m = HashModel(rng.normal(size=(6, 14)))
        pair = PairSample(rng.normal(size=6), rng.normal(size=6), 1)
        h = encode_pair(m, pair)
        results = delta_scores(m, pair, h, set(range(14)))
        for k, delta, side in results:
            a = h.i_code.signs[k] * (m.projection[:, k] @ pair.x_i)
            b = h.j_code.signs[k] * (m.projection[:, k] @ pair.x_j)
            assert delta == pytest.approx(min(a, b), abs=1e-12)
            assert side == ("i" if a <= b else "j")

    def test_out_of_range_candidate_rejected(self, rng):
        m = HashModel(rng.normal(size=(3, 4)))
        pair = PairSample(rng.normal(size=3), rng.normal(size=3), 1)
        h = encode_pair(m, pair)
        with pytest.raises(ValueError):
            delta_scores(m, pair, h, {7})


class TestInferZeroLossCodes:
    def test_similar_single_forced_candidate(self):
        # one disagreeing bit, alpha=0: that bit must flip, distance drops to 0
        m = HashModel(np.eye(4))
        pair = PairSample([1.0, 1.0, 1.0, 1.0], [1.0, 1.0, 1.0, -1.0], 1)
        h = encode_pair(m, pair)
        np.testing.assert_array_equal(h.i_code.signs, [1, 1, 1, 1])
        np.testing.assert_array_equal(h.j_code.signs, [1, 1, 1, -1])
        params = LossParams(alpha=0, beta=0.5, n_bits=4)
        g, plan = infer_zero_loss_codes(m, pair, h, 1, params)
        assert plan.p0 == 1
        assert plan.flips[0][0] == 3
        assert hamming_distance(g.i_code, g.j_code) == 0
        assert similarity_loss(g, 1, params) == 0.0

    def test_dissimilar_identical_codes_flip_two(self):
        # identical 4-bit codes, beta=0.5: ceil(2) - 0 = 2 flips, distance 2
        m = HashModel(np.eye(4))
        x = [1.0, 2.0, 3.0, 4.0]
        pair = PairSample(x, x, -1)
        h = encode_pair(m, pair)
        params = LossParams(alpha=0, beta=0.5, n_bits=4)
        g, plan = infer_zero_loss_codes(m, pair, h, -1, params)
        assert plan.p0 == 2
        assert hamming_distance(g.i_code, g.j_code) == 2
        # cheapest bits are the smallest projections: bits 0 and 1
        assert sorted(k for k, _ in plan.flips) == [0, 1]
        assert similarity_loss(g, -1, params) == 0.0

    def test_rejects_zero_loss_input(self):
        m = HashModel(np.eye(4))
        pair = PairSample([1.0, 1.0, 1.0, 1.0], [1.0, 1.0, 1.0, 1.0], 1)
        h = encode_pair(m, pair)
        with pytest.raises(ValueError):
            infer_zero_loss_codes(m, pair, h, 1, LossParams(0, 0.5, 4))

    def test_zero_loss_guarantee_random(self, rng):
        params = LossParams(alpha=1, beta=0.5, n_bits=10)
        for _ in range(400):
            m, pair, h, s = random_violating_case(rng, 5, 10, params)
            g, plan = infer_zero_loss_codes(m, pair, h, s, params)
            assert similarity_loss(g, s, params) == 0.0
            d_h = hamming_distance(h.i_code, h.j_code)
            d_g = hamming_distance(g.i_code, g.j_code)
            assert d_g == (params.alpha if s == 1 else params.dissimilar_target)
            assert plan.p0 == abs(d_g - d_h)

    def test_exact_p0_flips_one_side_per_bit(self, rng):
        params = LossParams(alpha=0, beta=0.6, n_bits=12)
        for _ in range(200):
            m, pair, h, s = random_violating_case(rng, 4, 12, params)
            g, plan = infer_zero_loss_codes(m, pair, h, s, params)
            flipped_i = np.flatnonzero(g.i_code.signs != h.i_code.signs)
            flipped_j = np.flatnonzero(g.j_code.signs != h.j_code.signs)
            # never both sides at one bit
            assert not set(flipped_i) & set(flipped_j)
            assert len(flipped_i) + len(flipped_j) == plan.p0
            assert len(set(k for k, _ in plan.flips)) == plan.p0

    def test_selection_minimizes_total_delta(self, rng):
        # oracle: enumerate every p0-subset of the candidate set
        params = LossParams(alpha=1, beta=0.5, n_bits=10)
        for _ in range(60):
            m, pair, h, s = random_violating_case(rng, 5, 10, params)
            g, plan = infer_zero_loss_codes(m, pair, h, s, params)
            disagree = h.i_code.signs != h.j_code.signs
            candidates = np.flatnonzero(disagree if s == 1 else ~disagree)
            deltas = {
                k: delta for k, delta, _ in delta_scores(m, pair, h, set(candidates))
            }
            chosen_sum = sum(deltas[k] for k, _ in plan.flips)
            best = min(
                sum(deltas[k] for k in subset)
                for subset in itertools.combinations(candidates.tolist(), plan.p0)
            )
            assert chosen_sum == pytest.approx(best, abs=1e-12)

    def test_zero_projection_column_flagged(self):
        w = np.array([[1.0, 0.0], [0.0, 0.0]])  # column 1 is all zero
        m = HashModel(w)
        pair = PairSample([1.0, 1.0], [1.0, 1.0], -1)
        h = encode_pair(m, pair)
        params = LossParams(alpha=0, beta=1.0, n_bits=2)
        g, plan = infer_zero_loss_codes(m, pair, h, -1, params)
        assert plan.p0 == 2
        assert plan.zero_columns == (1,)

    def test_stable_tie_break_prefers_low_bit_index(self):
        # all candidate deltas equal: the p0 lowest bit indexes are chosen
        m = HashModel(np.ones((1, 6)))
        pair = PairSample([1.0], [1.0], -1)
        h = encode_pair(m, pair)  # identical codes, all deltas equal 1.0
        params = LossParams(alpha=0, beta=0.5, n_bits=6)
        _, plan = infer_zero_loss_codes(m, pair, h, -1, params)
        assert sorted(k for k, _ in plan.flips) == [0, 1, 2]
