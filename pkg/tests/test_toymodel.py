import numpy as np
import pytest

from cmattn import tensor_ops as T
from cmattn.gradcheck import finite_difference, relative_error
from cmattn.losses import GroundTruth, hybrid_loss
from cmattn.tensor_ops import ContractError, Tape, Tensor
from cmattn.toymodel import (
    AdamState,
    ToyConfig,
    VARIANTS,
    adam_step,
    decode,
    encode,
    gen_synthetic,
    init_params,
    load_checkpoint,
    model_forward,
    parameter_count,
    rfb_lite,
    save_checkpoint,
    train,
)
from oracles import naive_adam_trace


@pytest.fixture(scope="module")
def small_data():
    return gen_synthetic(4, seed=0)


@pytest.fixture(scope="module")
def cfg():
    return ToyConfig()


class TestEncode:
    def test_stage_extents(self, small_data, cfg):
        params = init_params("cma", cfg, np.random.default_rng(0))
        aif_stages, dep_stages = encode(small_data[0], params, "cma")
        assert [f.shape for f in aif_stages] == [(16, 16, 8), (8, 8, 16), (4, 4, 32)]
        assert [f.shape for f in dep_stages] == [(16, 16, 8), (8, 8, 16), (4, 4, 32)]

    def test_model1_single_branch(self, small_data, cfg):
        params = init_params("model1", cfg, np.random.default_rng(0))
        aif_stages, dep_stages = encode(small_data[0], params, "model1")
        assert dep_stages is None
        assert len(aif_stages) == 3
        assert not any(k.startswith("enc.dep") for k in params)

    def test_gradient_check_on_8x8_input(self):
        cfg8 = ToyConfig(input_size=(8, 8))
        sample = gen_synthetic(1, seed=1, size=(8, 8))[0]
        params = init_params("model1", cfg8, np.random.default_rng(2))
        name = "enc.aif.s2.w"

        tape = Tape()
        stages, _ = encode(sample, params, "model1", tape=tape)
        w = [np.random.default_rng(3).normal(size=s.shape) for s in stages]
        loss = None
        for s, ww in zip(stages, w):
            term = T.sum_all(T.hadamard(s, Tensor(ww), tape=tape), tape=tape)
            loss = term if loss is None else T.add(loss, term, tape=tape)
        analytic = tape.backward(loss)[params[name]]

        def scalar(arr):
            probe = dict(params)
            probe[name] = Tensor(arr)
            stages, _ = encode(sample, probe, "model1")
            return sum(float((s.data * ww).sum()) for s, ww in zip(stages, w))

        numeric = finite_difference(scalar, params[name].data)
        assert relative_error(analytic, numeric) < 1e-4


class TestRfbLite:
    def test_zero_kernels_give_zero(self):
        f = Tensor(np.random.default_rng(4).normal(size=(6, 6, 3)))
        kernels = [Tensor(np.zeros((3, 3, 3, 3))) for _ in range(3)]
        out = rfb_lite(f, kernels, Tensor(np.zeros(3)))
        assert np.array_equal(out.data, np.zeros((6, 6, 3)))

    def test_single_dilation_degenerates_to_plain_conv(self):
        rng = np.random.default_rng(5)
        f = Tensor(rng.normal(size=(6, 6, 2)))
        k = Tensor(rng.normal(size=(3, 3, 2, 2)))
        bias = Tensor(np.zeros(2))
        out = rfb_lite(f, [k], bias, dilations=(1,))
        ref = T.relu(T.conv2d(f, k, padding=1))
        assert np.array_equal(out.data, ref.data)

    def test_channel_preserving(self):
        rng = np.random.default_rng(6)
        f = Tensor(rng.normal(size=(5, 5, 4)))
        kernels = [Tensor(rng.normal(size=(3, 3, 4, 4))) for _ in range(3)]
        assert rfb_lite(f, kernels, Tensor(np.zeros(4))).shape == (5, 5, 4)

    def test_gradient(self):
        rng = np.random.default_rng(7)
        f_arr = rng.normal(size=(5, 5, 2))
        kernels = [rng.normal(size=(3, 3, 2, 2)) for _ in range(3)]
        bias = np.zeros(2)
        w = rng.normal(size=(5, 5, 2))

        tape = Tape()
        f = Tensor(f_arr)
        out = rfb_lite(f, [Tensor(k) for k in kernels], Tensor(bias), tape=tape)
        analytic = tape.backward(out, seed=w)[f]

        def scalar(arr):
            out = rfb_lite(Tensor(arr), [Tensor(k) for k in kernels], Tensor(bias))
            return float((out.data * w).sum())

        numeric = finite_difference(scalar, f_arr)
        assert relative_error(analytic, numeric) < 1e-5


class TestDecode:
    def test_zero_parameters_give_half_maps(self, small_data, cfg):
        params = init_params("cma", cfg, np.random.default_rng(8))
        zeroed = {k: Tensor(np.zeros(p.shape)) for k, p in params.items()}
        pred, _ = model_forward(zeroed, small_data[0], "cma", cfg)
        for m in pred.maps:
            assert np.abs(m.data - 0.5).max() < 1e-15

    @pytest.mark.parametrize("variant", VARIANTS)
    def test_output_resolution_matches_gt(self, small_data, cfg, variant):
        params = init_params(variant, cfg, np.random.default_rng(9))
        pred, _ = model_forward(params, small_data[0], variant, cfg)
        assert all(m.shape == small_data[0].gt.shape for m in pred.maps)
        for m in pred.maps:
            assert m.data.min() >= 0.0 and m.data.max() <= 1.0

    def test_odd_input_size_still_matches_gt(self):
        cfg_odd = ToyConfig(input_size=(20, 28))
        sample = gen_synthetic(1, seed=10, size=(20, 28))[0]
        params = init_params("cma", cfg_odd, np.random.default_rng(11))
        pred, _ = model_forward(params, sample, "cma", cfg_odd)
        assert all(m.shape == (20, 28) for m in pred.maps)

    def test_hybrid_loss_gradient_spot_check(self):
        # Five random parameter coordinates, full model, central differences.
        cfg8 = ToyConfig(input_size=(16, 16))
        sample = gen_synthetic(1, seed=12, size=(16, 16))[0]
        params = init_params("cma", cfg8, np.random.default_rng(13))
        gt = GroundTruth(sample.gt)

        tape = Tape()
        pred, _ = model_forward(params, sample, "cma", cfg8, tape=tape)
        grads = tape.backward(hybrid_loss(pred, gt, tape=tape))

        rng = np.random.default_rng(14)
        names = sorted(params)
        step = 1e-5
        for _ in range(5):
            name = names[int(rng.integers(len(names)))]
            flat = int(rng.integers(params[name].size))
            base = params[name].data.copy()

            def loss_at(value):
                probe = dict(params)
                arr = base.copy()
                arr.flat[flat] = value
                probe[name] = Tensor(arr)
                p, _ = model_forward(probe, sample, "cma", cfg8)
                return hybrid_loss(p, gt).item()

            orig = base.flat[flat]
            numeric = (loss_at(orig + step) - loss_at(orig - step)) / (2 * step)
            analytic = grads[params[name]].flat[flat]
            assert abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-6) < 1e-3


class TestAdam:
    def test_zero_gradient_fixed_point(self):
        params = {"w": Tensor(np.array([1.0, -2.0]))}
        state = AdamState.zeros_like(params)
        out = adam_step(params, {"w": np.zeros(2)}, state, t=1, lr=0.1)
        assert np.array_equal(out["w"].data, params["w"].data)

    def test_constant_gradient_update_approaches_lr(self):
        params = {"w": Tensor(np.array([0.0]))}
        state = AdamState.zeros_like(params)
        lr = 0.05
        prev = params["w"].data.copy()
        for t in range(1, 60):
            params = adam_step(params, {"w": np.array([3.7])}, state, t, lr)
        delta = abs(params["w"].data[0] - prev[0]) / 59
        assert abs(delta - lr) < 0.05 * lr

    def test_matches_textbook_scalar_trace(self):
        # quadratic f(x) = 0.5 x^2, gradient x, ten steps
        lr = 0.1
        expected = naive_adam_trace(lambda th: th, 2.0, steps=10, lr=lr)
        params = {"x": Tensor(np.array(2.0))}
        state = AdamState.zeros_like(params)
        got = []
        for t in range(1, 11):
            grads = {"x": np.asarray(float(params["x"].data))}
            params = adam_step(params, grads, state, t, lr)
            got.append(float(params["x"].data))
        assert np.abs(np.array(got) - np.array(expected)).max() < 1e-12

    def test_step_counter_contract(self):
        params = {"w": Tensor(np.zeros(1))}
        with pytest.raises(ContractError):
            adam_step(params, {"w": np.zeros(1)}, AdamState.zeros_like(params), 0, 0.1)


class TestSyntheticData:
    def test_same_seed_identical(self):
        a = gen_synthetic(3, seed=5)
        b = gen_synthetic(3, seed=5)
        for sa, sb in zip(a, b):
            assert np.array_equal(sa.aif.data, sb.aif.data)
            assert np.array_equal(sa.depth.data, sb.depth.data)
            assert np.array_equal(sa.gt.data, sb.gt.data)

    def test_different_seed_differs(self):
        a = gen_synthetic(1, seed=5)[0]
        b = gen_synthetic(1, seed=6)[0]
        assert not np.array_equal(a.gt.data, b.gt.data)

    def test_masks_nonempty_and_non_full(self):
        for s in gen_synthetic(20, seed=7):
            total = s.gt.data.sum()
            assert 0 < total < s.gt.data.size
            assert set(np.unique(s.gt.data)) <= {0.0, 1.0}

    def test_depth_separates_foreground(self):
        for s in gen_synthetic(20, seed=8):
            depth = s.depth.data[:, :, 0]
            fg = depth[s.gt.data == 1.0].mean()
            bg = depth[s.gt.data == 0.0].mean()
            assert fg > bg

    def test_value_ranges(self):
        for s in gen_synthetic(5, seed=9):
            assert s.aif.data.min() >= 0.0 and s.aif.data.max() <= 1.0
            assert s.depth.data.min() >= 0.0 and s.depth.data.max() <= 1.0

    def test_n_contract(self):
        with pytest.raises(ContractError):
            gen_synthetic(0, seed=0)


class TestCheckpoint:
    def test_roundtrip_bit_exact(self, cfg, tmp_path):
        params = init_params("cma", cfg, np.random.default_rng(15))
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, params)
        loaded = load_checkpoint(path)
        assert list(loaded) == list(params)
        for name in params:
            assert np.array_equal(loaded[name].data, params[name].data)

    def test_rejects_garbage(self, tmp_path):
        path = tmp_path / "bogus.ckpt"
        path.write_bytes(b"not a checkpoint")
        with pytest.raises(ContractError):
            load_checkpoint(path)


class TestTraining:
    def test_empty_dataset_rejected(self, cfg):
        with pytest.raises(ContractError):
            train(cfg, "cma", [])

    def test_unknown_variant_rejected(self, small_data, cfg):
        with pytest.raises(ContractError):
            train(cfg, "model9", small_data)

    def test_deterministic_bit_identical(self, small_data, tmp_path):
        cfg = ToyConfig(epochs=2, batch=2, seed=11, lr=1e-3)
        r1 = train(cfg, "model2", small_data)
        r2 = train(cfg, "model2", small_data)
        assert r1.trace.step_losses == r2.trace.step_losses
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        r1.trace.write_csv(p1)
        r2.trace.write_csv(p2)
        assert p1.read_bytes() == p2.read_bytes()
        for name in r1.params:
            assert np.array_equal(r1.params[name].data, r2.params[name].data)

    def test_single_sample_overfit(self):
        cfg = ToyConfig(epochs=300, batch=1, seed=0, lr=1e-2, eval_every=0)
        result = train(cfg, "cma", gen_synthetic(1, seed=7))
        losses = result.trace.step_losses
        assert min(losses[:300]) < 0.1 * losses[0]

    @pytest.mark.parametrize("variant", VARIANTS)
    def test_every_variant_trains_and_improves(self, variant):
        cfg = ToyConfig(epochs=10, batch=4, seed=1, lr=3e-3, eval_every=0)
        result = train(cfg, variant, gen_synthetic(8, seed=2))
        losses = result.trace.step_losses
        assert losses[-1] < losses[0]
        assert np.isfinite(losses).all()

    def test_trace_rows_and_report(self, small_data):
        cfg = ToyConfig(epochs=3, batch=2, seed=4, lr=1e-3, eval_every=1)
        result = train(cfg, "model1", small_data)
        assert len(result.trace.epoch_rows) == 3
        last = result.trace.epoch_rows[-1]
        assert last.epoch == 2
        assert last.step == len(result.trace.step_losses)
        assert 0.0 <= result.final_report.mae <= 1.0
        assert last.mae == pytest.approx(result.final_report.mae)


class TestParameterCounts:
    def test_monotone_in_added_modules(self, cfg):
        counts = {
            v: parameter_count(init_params(v, cfg, np.random.default_rng(0)))
            for v in VARIANTS
        }
        assert counts["cma"] > counts["model2"] > counts["model1"]
        assert counts["model3"] > counts["model2"]
        assert counts["model4"] > counts["model2"]
