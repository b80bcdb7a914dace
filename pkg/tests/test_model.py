import numpy as np
import pytest

from fsrcnn import model as M
from fsrcnn.layers import ConvLayer, DeconvLayer, PReLULayer


def fsrcnn_spec(d, s, m, scale=3):
    return M.ArchitectureSpec(M.FSRCNN, scale=scale, d=d, s=s, m=m)


class TestArchitectureSpec:
    def test_fsrcnn_layer_sequence(self):
        specs = fsrcnn_spec(56, 12, 4).layer_specs()
        kinds = [ls.kind for ls in specs]
        assert kinds.count("conv") == 7          # extract, shrink, 4 map, expand
        assert kinds.count("deconv") == 1
        assert kinds.count("prelu") == 7         # one after every conv
        assert kinds[-1] == "deconv"
        first, last = specs[0], specs[-1]
        assert (first.filter_size, first.out_channels, first.in_channels) == (5, 56, 1)
        assert (last.filter_size, last.out_channels, last.in_channels) == (9, 1, 56)

    def test_invalid_triples(self):
        with pytest.raises(ValueError):
            fsrcnn_spec(0, 0, 0)
        with pytest.raises(ValueError):
            fsrcnn_spec(12, 56, 4)   # s > d
        with pytest.raises(ValueError):
            M.ArchitectureSpec(M.FSRCNN, scale=5, d=56, s=12, m=4)
        with pytest.raises(ValueError):
            M.ArchitectureSpec("vdsr", scale=3)


class TestParameterCounts:
    @pytest.mark.parametrize("spec,expected", [
        (M.ArchitectureSpec(M.SRCNN_915, 3), 8032),
        (M.ArchitectureSpec(M.SRCNN_EX_955, 3), 57184),
        (M.ArchitectureSpec(M.TRANSITION_1, 3), 58976),
        (M.ArchitectureSpec(M.TRANSITION_2, 3), 17088),
        (fsrcnn_spec(56, 12, 4), 12464),
        (fsrcnn_spec(48, 12, 2), 8832),
        (fsrcnn_spec(32, 5, 1), 3937),
    ])
    def test_weights_only_fixtures(self, spec, expected):
        assert M.count_parameters(spec) == expected

    def test_with_bias_and_prelu_adds_extras(self):
        spec = fsrcnn_spec(56, 12, 4)
        # biases: 56+12+4*12+56+1, prelu slopes: 56+12+4*12+56
        assert M.count_parameters(spec, include_bias_and_prelu=True) \
            == 12464 + 173 + 172

    @pytest.mark.parametrize("d,s,m", [(48, 12, 2), (56, 16, 4), (32, 5, 1)])
    def test_count_equals_per_pixel_mac_formula(self, d, s, m):
        spec = fsrcnn_spec(d, s, m)
        assert M.count_parameters(spec) == 9 * m * s * s + 2 * s * d + 106 * d
        assert M.macs_per_input_pixel(spec) == M.count_parameters(spec)


class TestCost:
    def test_srcnn_cost_scales_with_hr_size(self):
        spec = M.ArchitectureSpec(M.SRCNN_EX_955, 3)
        assert M.estimate_cost(spec, 100, 3) == 57184 * 100 * 9
        assert M.estimate_cost(spec, 100, 2) == 57184 * 100 * 4

    def test_fsrcnn_cost_scales_with_lr_size(self):
        spec = fsrcnn_spec(56, 12, 4)
        assert M.estimate_cost(spec, 100, 3) == 12464 * 100
        assert M.estimate_cost(spec, 100, 4) == 12464 * 100

    @pytest.mark.parametrize("spec,expected", [
        (M.ArchitectureSpec(M.TRANSITION_1, 3), 8.7),
        (M.ArchitectureSpec(M.TRANSITION_2, 3), 30.1),
        (fsrcnn_spec(56, 12, 4), 41.3),
        (fsrcnn_spec(48, 12, 2), 58.3),
    ])
    def test_speedup_ledger(self, spec, expected):
        assert M.speedup_vs_srcnn_ex(spec, 3) == pytest.approx(expected, abs=0.05)

    def test_bad_lr_size(self):
        with pytest.raises(ValueError):
            M.estimate_cost(fsrcnn_spec(56, 12, 4), 0)


class TestBuild:
    def test_deterministic_in_seed(self):
        a = M.build(fsrcnn_spec(56, 12, 4), rng_seed=1)
        b = M.build(fsrcnn_spec(56, 12, 4), rng_seed=1)
        for la, lb in zip(a.layers, b.layers):
            if isinstance(la, PReLULayer):
                np.testing.assert_array_equal(la.slopes, lb.slopes)
            else:
                np.testing.assert_array_equal(la.weights, lb.weights)
                np.testing.assert_array_equal(la.bias, lb.bias)
        c = M.build(fsrcnn_spec(56, 12, 4), rng_seed=2)
        assert not np.array_equal(a.layers[0].weights, c.layers[0].weights)

    def test_layer_counts(self):
        net = M.build(fsrcnn_spec(56, 12, 4), rng_seed=0)
        convs = [l for l in net.layers if isinstance(l, ConvLayer)]
        deconvs = [l for l in net.layers if isinstance(l, DeconvLayer)]
        prelus = [l for l in net.layers if isinstance(l, PReLULayer)]
        assert (len(convs), len(deconvs), len(prelus)) == (7, 1, 7)

    def test_deconv_init_std(self):
        net = M.build(fsrcnn_spec(56, 12, 4), rng_seed=5)
        w = net.layers[-1].weights   # 56*81 = 4536 samples
        assert w.size == 4536
        assert abs(float(w.mean())) < 1e-4
        assert float(w.std()) == pytest.approx(0.001, rel=0.2)

    def test_conv_init_variance_follows_fan_in(self):
        net = M.build(fsrcnn_spec(56, 12, 4), rng_seed=6)
        first = net.layers[0]              # fan_in 25
        expected = np.sqrt(2.0 / ((1 + 0.25 ** 2) * 25))
        assert float(first.weights.std()) == pytest.approx(expected, rel=0.15)
        assert not first.bias.any()

    def test_prelu_init_slope(self):
        net = M.build(fsrcnn_spec(32, 5, 1), rng_seed=0)
        for layer in net.layers:
            if isinstance(layer, PReLULayer):
                assert np.all(layer.slopes == np.float32(0.25))


class TestForward:
    def test_fsrcnn_output_geometry(self):
        net = M.build(fsrcnn_spec(56, 12, 4, scale=3), rng_seed=0)
        y = net.forward(np.zeros((1, 1, 7, 7), np.float32))
        assert y.shape == (1, 1, 19, 19)

    def test_srcnn_preserves_size(self):
        net = M.build(M.ArchitectureSpec(M.SRCNN_915, 3), rng_seed=0)
        y = net.forward(np.zeros((1, 1, 12, 14), np.float32))
        assert y.shape == (1, 1, 12, 14)

    def test_zero_weights_give_bias_output(self):
        net = M.build(fsrcnn_spec(8, 4, 1, scale=2), rng_seed=0)
        for layer in net.layers:
            if not isinstance(layer, PReLULayer):
                layer.weights[:] = 0
        net.layers[-1].bias[:] = 0.37
        y = net.forward(np.random.default_rng(0).random((1, 1, 6, 6)).astype(np.float32))
        np.testing.assert_allclose(y, 0.37, rtol=1e-6)

    def test_prelu_zero_equals_relu_net(self):
        # with slopes 0 the activations are plain ReLU
        net = M.build(fsrcnn_spec(8, 4, 1, scale=2), rng_seed=1)
        x = np.random.default_rng(1).random((1, 1, 6, 6)).astype(np.float32)
        for layer in net.layers:
            if isinstance(layer, PReLULayer):
                layer.slopes[:] = 0
        y = net.forward(x)
        z = x
        for layer in net.layers:
            z = np.maximum(layer.forward(z), 0) if isinstance(layer, PReLULayer) \
                else layer.forward(z)
        np.testing.assert_array_equal(y, z)

    def test_rejects_multichannel(self):
        net = M.build(fsrcnn_spec(8, 4, 1), rng_seed=0)
        with pytest.raises(ValueError):
            net.forward(np.zeros((1, 3, 7, 7), np.float32))


class TestTransplant:
    def test_conv_layers_copied_bit_exact(self):
        src = M.build(fsrcnn_spec(16, 5, 2, scale=3), rng_seed=3)
        dst = M.transplant_conv_layers(src, 2, rng_seed=4)
        assert dst.scale == 2
        assert dst.layers[-1].stride == 2
        for a, b in zip(src.layers[:-1], dst.layers[:-1]):
            if isinstance(a, PReLULayer):
                np.testing.assert_array_equal(a.slopes, b.slopes)
            else:
                np.testing.assert_array_equal(a.weights, b.weights)
                np.testing.assert_array_equal(a.bias, b.bias)
            assert not b.trainable
        assert dst.layers[-1].trainable

    def test_pre_deconv_activations_preserved(self):
        src = M.build(fsrcnn_spec(16, 5, 2, scale=3), rng_seed=3)
        dst = M.transplant_conv_layers(src, 2, rng_seed=4)
        x = np.random.default_rng(5).random((1, 1, 9, 9)).astype(np.float32)
        xs, xd = x, x
        for ls, ld in zip(src.layers[:-1], dst.layers[:-1]):
            xs = ls.forward(xs)
            xd = ld.forward(xd)
            np.testing.assert_array_equal(xs, xd)

    def test_output_geometry_at_new_scale(self):
        src = M.build(fsrcnn_spec(16, 5, 2, scale=3), rng_seed=3)
        dst = M.transplant_conv_layers(src, 2, rng_seed=4)
        y = dst.forward(np.zeros((1, 1, 10, 10), np.float32))
        assert y.shape == (1, 1, 19, 19)

    def test_full_copy_is_identity(self):
        src = M.build(fsrcnn_spec(16, 5, 2, scale=3), rng_seed=3)
        dst = M.transplant_conv_layers(src, 3, rng_seed=99)
        dst.layers[-1].weights[:] = src.layers[-1].weights
        dst.layers[-1].bias[:] = src.layers[-1].bias
        x = np.random.default_rng(6).random((1, 1, 7, 7)).astype(np.float32)
        np.testing.assert_array_equal(src.forward(x), dst.forward(x))

    def test_rejects_non_fsrcnn(self):
        src = M.build(M.ArchitectureSpec(M.SRCNN_915, 3), rng_seed=0)
        with pytest.raises(ValueError):
            M.transplant_conv_layers(src, 2, rng_seed=0)


class TestSerialization:
    def test_roundtrip_forward_identical(self):
        net = M.build(fsrcnn_spec(16, 5, 2, scale=3), rng_seed=8)
        blob = M.save(net)
        back = M.load(blob)
        assert back.spec == net.spec
        x = np.random.default_rng(8).random((1, 1, 7, 7)).astype(np.float32)
        np.testing.assert_array_equal(net.forward(x), back.forward(x))

    def test_roundtrip_all_kinds(self):
        for kind in M.VALID_KINDS:
            spec = fsrcnn_spec(8, 4, 1) if kind == M.FSRCNN \
                else M.ArchitectureSpec(kind, scale=3)
            net = M.build(spec, rng_seed=1)
            back = M.load(M.save(net))
            for a, b in zip(net.layers, back.layers):
                if isinstance(a, PReLULayer):
                    np.testing.assert_array_equal(a.slopes, b.slopes)
                else:
                    np.testing.assert_array_equal(a.weights, b.weights)
                    np.testing.assert_array_equal(a.bias, b.bias)

    def test_file_size_matches_format(self):
        spec = fsrcnn_spec(8, 4, 1)
        net = M.build(spec, rng_seed=0)
        blob = M.save(net)
        header = 4 + 4 + 1 + 4 * 4
        records = len(spec.layer_specs()) * (1 + 4 * 4)
        payload = 4 * M.count_parameters(spec, include_bias_and_prelu=True)
        assert len(blob) == header + records + payload + 4

    def test_bad_magic(self):
        net = M.build(fsrcnn_spec(8, 4, 1), rng_seed=0)
        blob = bytearray(M.save(net))
        blob[0] ^= 0xFF
        with pytest.raises(M.FormatError) as exc:
            M.load(bytes(blob))
        assert exc.value.offset == 0

    def test_truncation(self):
        net = M.build(fsrcnn_spec(8, 4, 1), rng_seed=0)
        blob = M.save(net)
        with pytest.raises(M.FormatError):
            M.load(blob[:len(blob) // 2])

    def test_corrupt_payload_fails_crc(self):
        net = M.build(fsrcnn_spec(8, 4, 1), rng_seed=0)
        blob = bytearray(M.save(net))
        blob[60] ^= 0x01
        with pytest.raises(M.FormatError):
            M.load(bytes(blob))

    def test_bad_version(self):
        net = M.build(fsrcnn_spec(8, 4, 1), rng_seed=0)
        blob = bytearray(M.save(net))
        blob[4] = 99
        with pytest.raises(M.FormatError):
            M.load(bytes(blob))

    def test_file_roundtrip(self, tmp_path):
        net = M.build(fsrcnn_spec(8, 4, 1), rng_seed=0)
        path = tmp_path / "m.fsr"
        M.save_file(net, path)
        back = M.load_file(path)
        np.testing.assert_array_equal(net.layers[0].weights, back.layers[0].weights)
