import math

import numpy as np
import pytest

from cmattn import metrics as M
from cmattn.tensor_ops import ContractError, ShapeError
from oracles import naive_e_measure, naive_f_measure, naive_mae, naive_s_measure


def random_pair(rng, h=16, w=16, fg=0.35):
    gt = (rng.random((h, w)) < fg).astype(float)
    if gt.sum() == 0:
        gt[h // 2, w // 2] = 1.0
    if gt.sum() == gt.size:
        gt[0, 0] = 0.0
    return M.EvalPair(pred=rng.random((h, w)), gt=gt)


def binary_pair(rng, h=16, w=16, fg=0.35):
    gt = random_pair(rng, h, w, fg).gt
    return M.EvalPair(pred=gt.copy(), gt=gt)


class TestMae:
    def test_identity(self):
        pair = binary_pair(np.random.default_rng(0))
        assert M.mae(pair) == 0.0

    def test_complement(self):
        pair = binary_pair(np.random.default_rng(1))
        assert M.mae(M.EvalPair(pred=1.0 - pair.gt, gt=pair.gt)) == 1.0

    def test_matches_naive_loop(self):
        pair = random_pair(np.random.default_rng(2), 8, 8)
        assert abs(M.mae(pair) - naive_mae(pair.pred, pair.gt)) < 1e-15


class TestFMeasure:
    def test_perfect_match(self):
        pair = binary_pair(np.random.default_rng(3))
        assert abs(M.f_measure(pair, 128.0) - 1.0) < 1e-12

    def test_disjoint(self):
        gt = np.zeros((4, 4))
        gt[:2] = 1.0
        pred = 1.0 - gt
        assert M.f_measure(M.EvalPair(pred=pred, gt=gt), 128.0) == 0.0

    def test_closed_form_half_precision_full_recall(self):
        gt = np.zeros((2, 2))
        gt[0, 0] = 1.0
        pred = np.zeros((2, 2))
        pred[0, :] = 1.0
        f = M.f_measure(M.EvalPair(pred=pred, gt=gt), 128.0)
        assert abs(f - 1.3 * 0.5 / (0.3 * 0.5 + 1.0)) < 1e-15
        assert abs(f - 0.5652173913043479) < 1e-12


class TestAdaptiveThreshold:
    def test_uniform_quarter(self):
        assert M.adaptive_threshold(np.full((4, 4), 0.25)) == 127.5

    def test_all_zero(self):
        assert M.adaptive_threshold(np.zeros((4, 4))) == 0.0

    def test_clamped(self):
        assert M.adaptive_threshold(np.ones((4, 4))) == 255.0


class TestEMeasure:
    def test_perfect_alignment(self):
        pair = binary_pair(np.random.default_rng(4))
        assert abs(M.e_measure(pair, 128.0) - 1.0) < 1e-9

    def test_complement_matches_naive(self):
        gt = np.zeros((6, 6))
        gt[:3] = 1.0
        pair = M.EvalPair(pred=1.0 - gt, gt=gt)
        got = M.e_measure(pair, 128.0)
        assert abs(got - naive_e_measure(pair.pred, pair.gt, 128.0)) < 1e-12

    def test_soft_equals_threshold_zero_on_uniform_half(self):
        gt = np.zeros((6, 6))
        gt[:3] = 1.0
        pair = M.EvalPair(pred=np.full((6, 6), 0.5), gt=gt)
        soft = M.e_measure(pair, None)
        hard = M.e_measure(pair, 0.0)
        assert abs(soft - hard) < 1e-15
        assert abs(soft - naive_e_measure(pair.pred, pair.gt, None)) < 1e-12

    def test_degenerate_gt_conventions(self):
        pred = np.full((4, 4), 0.25)
        zeros = M.EvalPair(pred=pred, gt=np.zeros((4, 4)))
        ones = M.EvalPair(pred=pred, gt=np.ones((4, 4)))
        assert abs(M.e_measure(zeros, None) - 0.75) < 1e-15
        assert abs(M.e_measure(ones, None) - 0.25) < 1e-15
        # thresholded: binarized map is all-ones at tau=0
        assert M.e_measure(zeros, 0.0) == 0.0
        assert M.e_measure(ones, 0.0) == 1.0


class TestSMeasure:
    def test_perfect_binary(self):
        pair = binary_pair(np.random.default_rng(5))
        assert abs(M.s_measure(pair) - 1.0) < 1e-9

    def test_all_background_with_zero_prediction(self):
        pair = M.EvalPair(pred=np.zeros((4, 4)), gt=np.zeros((4, 4)))
        assert M.s_measure(pair) == 1.0

    def test_degenerate_conventions(self):
        pred = np.full((4, 4), 0.25)
        assert abs(M.s_measure(M.EvalPair(pred=pred, gt=np.zeros((4, 4)))) - 0.75) < 1e-15
        assert abs(M.s_measure(M.EvalPair(pred=pred, gt=np.ones((4, 4)))) - 0.25) < 1e-15

    def test_alpha_blend_is_half_half(self):
        pair = random_pair(np.random.default_rng(6))
        blended = 0.5 * M._s_object(pair.pred, pair.gt) + 0.5 * M._s_region(pair.pred, pair.gt)
        assert abs(M.s_measure(pair) - min(max(blended, 0.0), 1.0)) < 1e-15

    @pytest.mark.parametrize("seed", range(10))
    def test_matches_scalar_loop_oracle(self, seed):
        pair = random_pair(np.random.default_rng(seed))
        assert abs(M.s_measure(pair) - naive_s_measure(pair.pred, pair.gt)) < 1e-12


class TestOracleEquivalence:
    @pytest.mark.parametrize("seed", range(12))
    def test_all_metrics_match_naive(self, seed):
        rng = np.random.default_rng(200 + seed)
        pair = random_pair(rng)
        tau = M.adaptive_threshold(pair.pred)
        assert abs(M.mae(pair) - naive_mae(pair.pred, pair.gt)) < 1e-12
        assert abs(M.f_measure(pair, tau) - naive_f_measure(pair.pred, pair.gt, tau)) < 1e-12
        assert abs(M.e_measure(pair, tau) - naive_e_measure(pair.pred, pair.gt, tau)) < 1e-12
        assert abs(M.e_measure(pair, None) - naive_e_measure(pair.pred, pair.gt, None)) < 1e-12
        assert abs(M.s_measure(pair) - naive_s_measure(pair.pred, pair.gt)) < 1e-12


class TestCurves:
    def test_f_curve_pointwise_equal(self):
        pair = random_pair(np.random.default_rng(7))
        rep = M.single_report(pair)
        for tau in range(0, 256, 7):
            assert rep.f_curve[tau] == pytest.approx(M.f_measure(pair, float(tau)), abs=1e-14)

    def test_e_curve_matches_direct(self):
        pair = random_pair(np.random.default_rng(8))
        rep = M.single_report(pair)
        for tau in range(0, 256, 7):
            assert rep.e_curve[tau] == pytest.approx(M.e_measure(pair, float(tau)), abs=1e-12)

    def test_adaptive_f_equals_f_at_adaptive_tau(self):
        pair = random_pair(np.random.default_rng(9))
        rep = M.single_report(pair)
        assert rep.f_beta == M.f_measure(pair, M.adaptive_threshold(pair.pred))

    def test_curve_length(self):
        rep = M.single_report(random_pair(np.random.default_rng(10)))
        assert len(rep.f_curve) == 256 and len(rep.e_curve) == 256


class TestRangeInvariant:
    @pytest.mark.parametrize("seed", range(6))
    def test_all_outputs_in_unit_interval(self, seed):
        rng = np.random.default_rng(300 + seed)
        pair = random_pair(rng, fg=float(rng.uniform(0.05, 0.95)))
        rep = M.single_report(pair)
        for value in (rep.f_beta, rep.s_alpha, rep.e_phi, rep.mae):
            assert 0.0 <= value <= 1.0
        assert (rep.f_curve >= 0).all() and (rep.f_curve <= 1).all()
        assert (rep.e_curve >= 0).all() and (rep.e_curve <= 1).all()


class TestPermutationInvariance:
    def test_mae_and_f_invariant_under_shared_permutation(self):
        rng = np.random.default_rng(11)
        pair = random_pair(rng, 8, 8)
        perm = rng.permutation(64)
        pred_p = pair.pred.ravel()[perm].reshape(8, 8)
        gt_p = pair.gt.ravel()[perm].reshape(8, 8)
        permuted = M.EvalPair(pred=pred_p, gt=gt_p)
        assert abs(M.mae(pair) - M.mae(permuted)) < 1e-15
        for tau in (0.0, 64.0, 128.0, 200.0):
            assert abs(M.f_measure(pair, tau) - M.f_measure(permuted, tau)) < 1e-15


class TestEvaluate:
    def test_singleton_average(self):
        pair = random_pair(np.random.default_rng(12))
        single = M.single_report(pair)
        agg = M.evaluate([pair])
        assert agg.f_beta == single.f_beta and agg.mae == single.mae
        assert np.array_equal(agg.f_curve, single.f_curve)

    def test_duplicated_list_idempotent(self):
        pair = random_pair(np.random.default_rng(13))
        once = M.evaluate([pair])
        twice = M.evaluate([pair, pair])
        assert once.f_beta == twice.f_beta
        assert np.array_equal(once.e_curve, twice.e_curve)

    def test_hand_built_pairs_average(self):
        gt = np.zeros((4, 4))
        gt[1:3, 1:3] = 1.0
        exact = M.EvalPair(pred=gt.copy(), gt=gt)      # all metrics 1, mae 0
        inverted = M.EvalPair(pred=1.0 - gt, gt=gt)    # mae 1, f 0
        r_exact = M.single_report(exact)
        r_inv = M.single_report(inverted)
        agg = M.aggregate([r_exact, r_inv])
        assert agg.mae == pytest.approx((0.0 + 1.0) / 2, abs=1e-15)
        assert agg.f_beta == pytest.approx((1.0 + 0.0) / 2, abs=1e-9)
        assert agg.s_alpha == pytest.approx(
            (r_exact.s_alpha + r_inv.s_alpha) / 2, abs=1e-15
        )
        assert agg.e_phi == pytest.approx((r_exact.e_phi + r_inv.e_phi) / 2, abs=1e-15)

    def test_order_independence(self):
        rng = np.random.default_rng(14)
        pairs = [random_pair(rng) for _ in range(6)]
        fwd = M.evaluate(pairs)
        rev = M.evaluate(list(reversed(pairs)))
        assert abs(fwd.f_beta - rev.f_beta) < 1e-12
        assert abs(fwd.mae - rev.mae) < 1e-12
        assert np.abs(fwd.e_curve - rev.e_curve).max() < 1e-12

    def test_workers_do_not_change_results(self):
        rng = np.random.default_rng(15)
        pairs = [random_pair(rng) for _ in range(5)]
        assert M.evaluate(pairs, workers=1).f_beta == M.evaluate(pairs, workers=4).f_beta

    def test_empty_list_rejected(self):
        with pytest.raises(ContractError):
            M.evaluate([])


class TestValidation:
    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            M.EvalPair(pred=np.zeros((4, 4)), gt=np.zeros((4, 5)))

    def test_pred_out_of_range(self):
        with pytest.raises(ContractError):
            M.EvalPair(pred=np.full((2, 2), 1.5), gt=np.ones((2, 2)))

    def test_gt_not_binary(self):
        with pytest.raises(ContractError):
            M.EvalPair(pred=np.zeros((2, 2)), gt=np.full((2, 2), 0.5))


def test_dataset_mean_matches_fsum_of_singles():
    rng = np.random.default_rng(16)
    pairs = [random_pair(rng) for _ in range(7)]
    reports = [M.single_report(p) for p in pairs]
    agg = M.evaluate(pairs)
    assert agg.s_alpha == math.fsum(r.s_alpha for r in reports) / 7
