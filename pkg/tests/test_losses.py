import math

import numpy as np
import pytest

from cmattn import losses as L
from cmattn import tensor_ops as T
from cmattn.gradcheck import finite_difference, relative_error
from cmattn.tensor_ops import ContractError, ShapeError, Tape, Tensor
from oracles import naive_e_measure


def gt_fixture(seed=0, shape=(6, 6), fg=0.4):
    rng = np.random.default_rng(seed)
    arr = (rng.random(shape) < fg).astype(float)
    arr[0, 0] = 1.0
    arr[-1, -1] = 0.0
    return L.GroundTruth(Tensor(arr)), arr


class TestBce:
    def test_perfect_prediction(self):
        g, arr = gt_fixture()
        loss = L.bce_loss(Tensor(arr), g).item()
        assert 0.0 <= loss <= 1e-6

    def test_uniform_half_is_ln2(self):
        g, _ = gt_fixture()
        loss = L.bce_loss(Tensor(np.full((6, 6), 0.5)), g).item()
        assert abs(loss - math.log(2.0)) < 1e-9

    def test_gradient(self):
        g, _ = gt_fixture(1)
        p_arr = np.random.default_rng(2).uniform(0.1, 0.9, size=(6, 6))
        tape = Tape()
        p = Tensor(p_arr)
        analytic = tape.backward(L.bce_loss(p, g, tape=tape))[p]
        numeric = finite_difference(lambda a: L.bce_loss(Tensor(a), g).item(), p_arr)
        assert relative_error(analytic, numeric) < 1e-5

    def test_shape_mismatch(self):
        g, _ = gt_fixture()
        with pytest.raises(ShapeError):
            L.bce_loss(Tensor(np.zeros((3, 3))), g)


class TestIou:
    def test_perfect_overlap(self):
        g, arr = gt_fixture(3)
        loss = L.iou_loss(Tensor(arr), g).item()
        assert 0.0 <= loss < 1.0 / (arr.sum() + 1.0)

    def test_disjoint_near_maximal(self):
        half = np.zeros((6, 6))
        half[:3] = 1.0
        g = L.GroundTruth(Tensor(half))
        loss = L.iou_loss(Tensor(1.0 - half), g).item()
        assert loss > 1.0 - 2.0 / (half.sum() + 1.0)

    def test_gradient(self):
        g, _ = gt_fixture(4)
        p_arr = np.random.default_rng(5).uniform(0.1, 0.9, size=(6, 6))
        tape = Tape()
        p = Tensor(p_arr)
        analytic = tape.backward(L.iou_loss(p, g, tape=tape))[p]
        numeric = finite_difference(lambda a: L.iou_loss(Tensor(a), g).item(), p_arr)
        assert relative_error(analytic, numeric) < 1e-5


class TestEm:
    def test_perfect_alignment(self):
        g, arr = gt_fixture(6)
        assert L.em_loss(Tensor(arr), g).item() <= 1e-6

    def test_uniform_half_matches_scalar_oracle(self):
        half = np.zeros((6, 6))
        half[:3] = 1.0
        g = L.GroundTruth(Tensor(half))
        p = np.full((6, 6), 0.5)
        loss = L.em_loss(Tensor(p), g).item()
        # the loss stabilizer (1e-8) keeps it within a hair of the eps-free oracle
        assert abs(loss - (1.0 - naive_e_measure(p, half, None))) < 1e-6

    def test_degenerate_gt(self):
        p = Tensor(np.full((4, 4), 0.25))
        all_zero = L.GroundTruth(Tensor(np.zeros((4, 4))))
        all_one = L.GroundTruth(Tensor(np.ones((4, 4))))
        assert abs(L.em_loss(p, all_zero).item() - 0.25) < 1e-15
        assert abs(L.em_loss(p, all_one).item() - 0.75) < 1e-15

    def test_gradient(self):
        g, _ = gt_fixture(7)
        p_arr = np.random.default_rng(8).uniform(0.1, 0.9, size=(6, 6))
        tape = Tape()
        p = Tensor(p_arr)
        analytic = tape.backward(L.em_loss(p, g, tape=tape))[p]
        numeric = finite_difference(lambda a: L.em_loss(Tensor(a), g).item(), p_arr)
        assert relative_error(analytic, numeric) < 1e-4


class TestHybrid:
    def test_perfect_prediction_within_slack(self):
        g, arr = gt_fixture(9)
        pred = L.Prediction(tuple(Tensor(arr) for _ in range(3)))
        total = L.hybrid_loss(pred, g).item()
        slack = 3 * (1e-6 + 1.0 / (arr.sum() + 1.0) + 1e-6)
        assert 0.0 <= total <= slack

    def test_additivity(self):
        g, _ = gt_fixture(10)
        rng = np.random.default_rng(11)
        maps = tuple(Tensor(rng.random((6, 6))) for _ in range(3))
        total = L.hybrid_loss(L.Prediction(maps), g).item()
        parts = sum(
            L.bce_loss(m, g).item() + L.iou_loss(m, g).item() + L.em_loss(m, g).item()
            for m in maps
        )
        assert abs(total - parts) < 1e-12

    @pytest.mark.parametrize("seed", range(5))
    def test_nonnegative(self, seed):
        g, _ = gt_fixture(seed)
        rng = np.random.default_rng(100 + seed)
        maps = tuple(Tensor(rng.random((6, 6))) for _ in range(3))
        assert L.hybrid_loss(L.Prediction(maps), g).item() >= 0.0

    def test_wrong_head_count_rejected(self):
        with pytest.raises(ContractError):
            L.Prediction((Tensor(np.zeros((2, 2))), Tensor(np.zeros((2, 2)))))

    def test_map_range_validated(self):
        with pytest.raises(ContractError):
            L.Prediction(tuple(Tensor(np.full((2, 2), 1.2)) for _ in range(3)))

    def test_permutation_invariance(self):
        g, g_arr = gt_fixture(12)
        rng = np.random.default_rng(13)
        p_arr = rng.uniform(0.05, 0.95, size=(6, 6))
        perm = rng.permutation(36)
        g_perm = L.GroundTruth(Tensor(g_arr.ravel()[perm].reshape(6, 6)))
        p_perm = Tensor(p_arr.ravel()[perm].reshape(6, 6))
        for fn in (L.bce_loss, L.iou_loss, L.em_loss):
            assert abs(fn(Tensor(p_arr), g).item() - fn(p_perm, g_perm).item()) < 1e-12

    def test_gradient_through_hybrid(self):
        g, _ = gt_fixture(14)
        rng = np.random.default_rng(15)
        arrs = [rng.uniform(0.1, 0.9, size=(6, 6)) for _ in range(3)]
        tape = Tape()
        maps = tuple(Tensor(a) for a in arrs)
        loss = L.hybrid_loss(L.Prediction(maps), g, tape=tape)
        grads = tape.backward(loss)
        for i, m in enumerate(maps):
            def scalar(a, i=i):
                probe = [Tensor(v) for v in arrs]
                probe[i] = Tensor(a)
                return L.hybrid_loss(L.Prediction(tuple(probe)), g).item()

            numeric = finite_difference(scalar, arrs[i])
            assert relative_error(grads[m], numeric) < 1e-4


class TestTrainingSanity:
    def test_loss_decreases_monotonically_over_first_50_steps(self):
        from cmattn.toymodel import ToyConfig, gen_synthetic, train

        cfg = ToyConfig(epochs=50, batch=1, seed=0, eval_every=0)  # default lr
        result = train(cfg, "cma", gen_synthetic(1, seed=3))
        losses = result.trace.step_losses
        assert len(losses) == 50
        diffs = np.diff(losses)
        assert (diffs < 0.0).all(), f"non-monotone at steps {np.where(diffs >= 0)[0]}"
