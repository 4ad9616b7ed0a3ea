import math

import numpy as np
import pytest

from conftest import encode_pair, random_violating_case
from streamhash.codes import HashCode
from streamhash.inference import infer_zero_loss_codes
from streamhash.loss import (
    CodePair,
    LossParams,
    PairSample,
    pair_score,
    prediction_loss,
    similarity_loss,
)
from streamhash.model import HashModel, init_lsh


def codes_at_distance(r: int, d_h: int) -> CodePair:
    a = [1] * r
    b = [-1] * d_h + [1] * (r - d_h)
    return CodePair(HashCode.from_signs(a), HashCode.from_signs(b))


class TestLossParams:
    def test_margin_invariant_enforced(self):
        # beta * r must exceed alpha
        with pytest.raises(ValueError):
            LossParams(alpha=5, beta=0.01, n_bits=64)

    @pytest.mark.parametrize(
        "alpha,beta,bits", [(-1, 0.5, 8), (8, 0.5, 8), (0, 0.0, 8), (0, 1.5, 8)]
    )
    def test_range_invariants(self, alpha, beta, bits):
        with pytest.raises(ValueError):
            LossParams(alpha=alpha, beta=beta, n_bits=bits)

    def test_dissimilar_target_is_ceiling(self):
        assert LossParams(0, 0.5, 48).dissimilar_target == 24
        assert LossParams(0, 0.4, 48).dissimilar_target == 20  # ceil(19.2)
        assert LossParams(0, 0.3, 10).dissimilar_target == 3  # exact product


class TestSimilarityLoss:
    params = LossParams(alpha=0, beta=0.5, n_bits=8)

    def test_matched_similar_pair(self):
        assert similarity_loss(codes_at_distance(8, 0), 1, self.params) == 0.0

    def test_similar_pair_pays_excess_distance(self):
        assert similarity_loss(codes_at_distance(8, 3), 1, self.params) == 3.0

    def test_dissimilar_pair_pays_shortfall(self):
        assert similarity_loss(codes_at_distance(8, 2), -1, self.params) == 2.0

    def test_zero_loss_characterization_exhaustive(self):
        # loss is zero iff (similar and D_h <= alpha) or (dissimilar and D_h >= beta*r)
        params = LossParams(alpha=2, beta=0.5, n_bits=10)
        for d_h in range(11):
            pair = codes_at_distance(10, d_h)
            assert (similarity_loss(pair, 1, params) == 0) == (d_h <= 2)
            assert (similarity_loss(pair, -1, params) == 0) == (d_h >= 5)

    def test_non_negative_everywhere(self):
        params = LossParams(alpha=1, beta=0.7, n_bits=12)
        for d_h in range(13):
            for s in (-1, 1):
                assert similarity_loss(codes_at_distance(12, d_h), s, params) >= 0


class TestPairScore:
    def test_argmax_identity_per_point(self, rng):
        m = init_lsh(5, 12, seed=0)
        pair = PairSample(rng.normal(size=5), rng.normal(size=5), 1)
        h = encode_pair(m, pair)
        expected = np.abs(m.projection.T @ pair.x_i).sum() + np.abs(
            m.projection.T @ pair.x_j
        ).sum()
        assert pair_score(m, pair, h) == pytest.approx(expected, rel=1e-12)

    def test_flipping_all_signs_negates(self, rng):
        m = init_lsh(5, 12, seed=0)
        pair = PairSample(rng.normal(size=5), rng.normal(size=5), 1)
        h = encode_pair(m, pair)
        flipped = CodePair(
            HashCode.from_signs(-h.i_code.signs), HashCode.from_signs(-h.j_code.signs)
        )
        assert pair_score(m, pair, flipped) == pytest.approx(
            -pair_score(m, pair, h), rel=1e-12
        )

    def test_matches_dense_matrix_oracle(self, rng):
        m = HashModel(rng.normal(size=(5, 12)))
        pair = PairSample(rng.normal(size=5), rng.normal(size=5), -1)
        ci = HashCode.from_signs(rng.choice([-1, 1], size=12))
        cj = HashCode.from_signs(rng.choice([-1, 1], size=12))
        expected = 0.0
        for k in range(12):
            expected += ci.signs[k] * (m.projection[:, k] @ pair.x_i)
            expected += cj.signs[k] * (m.projection[:, k] @ pair.x_j)
        assert pair_score(m, pair, CodePair(ci, cj)) == pytest.approx(expected, rel=1e-10)


class TestPredictionLoss:
    def test_zero_when_codes_match_and_no_loss(self, rng):
        m = init_lsh(4, 8, seed=1)
        pair = PairSample(rng.normal(size=4), rng.normal(size=4), 1)
        h = encode_pair(m, pair)
        assert prediction_loss(m, pair, h, h, 0.0) == 0.0

    def test_sqrt_penalty_when_gap_vanishes(self, rng):
        m = init_lsh(4, 8, seed=1)
        pair = PairSample(rng.normal(size=4), rng.normal(size=4), 1)
        h = encode_pair(m, pair)
        assert prediction_loss(m, pair, h, h, 9.0) == pytest.approx(3.0)

    def test_negative_similarity_loss_rejected(self, rng):
        m = init_lsh(4, 8, seed=1)
        pair = PairSample(rng.normal(size=4), rng.normal(size=4), 1)
        h = encode_pair(m, pair)
        with pytest.raises(ValueError):
            prediction_loss(m, pair, h, h, -0.1)

    def test_per_flipped_bit_reformulation(self, rng):
        # the margin gap equals the sum of 2 h[k] w_k^T x over flipped bits
        params = LossParams(alpha=1, beta=0.5, n_bits=16)
        for _ in range(25):
            m, pair, h, s = random_violating_case(rng, 6, 16, params)
            r_loss = similarity_loss(h, s, params)
            g, plan = infer_zero_loss_codes(m, pair, h, s, params)
            expected = math.sqrt(r_loss)
            for k, side in plan.flips:
                if side == "i":
                    expected += 2 * h.i_code.signs[k] * (m.projection[:, k] @ pair.x_i)
                else:
                    expected += 2 * h.j_code.signs[k] * (m.projection[:, k] @ pair.x_j)
            got = prediction_loss(m, pair, h, g, r_loss)
            assert got == pytest.approx(expected, abs=1e-9)

    def test_at_least_sqrt_loss_for_own_encoding(self, rng):
        params = LossParams(alpha=0, beta=0.5, n_bits=12)
        for _ in range(25):
            m, pair, h, s = random_violating_case(rng, 5, 12, params)
            r_loss = similarity_loss(h, s, params)
            g, _ = infer_zero_loss_codes(m, pair, h, s, params)
            assert prediction_loss(m, pair, h, g, r_loss) >= math.sqrt(r_loss) - 1e-12

    def test_strictly_increasing_in_similarity_loss(self, rng):
        m = init_lsh(5, 10, seed=3)
        pair = PairSample(rng.normal(size=5), rng.normal(size=5), 1)
        h = encode_pair(m, pair)
        g = CodePair(HashCode.from_signs(-h.i_code.signs), h.j_code)
        values = [prediction_loss(m, pair, h, g, r) for r in (0.0, 1.0, 4.0, 9.0)]
        assert all(b > a for a, b in zip(values, values[1:]))
