import numpy as np
import pytest

from ctxretrieval.convnet import (CONV, MAXPOOL, RELU, LayerSpec, NetworkSpec,
                                  forward, load_network, output_grid_size,
                                  project_roi, rf_params, save_network,
                                  toy_network)
from ctxretrieval.tensor import FeatureMap, Image, Rect


def identity_conv(channels=1):
    w = np.zeros((channels, channels, 3, 3), dtype=np.float32)
    for c in range(channels):
        w[c, c, 1, 1] = 1.0
    return LayerSpec(kind=CONV, kernel=3, stride=1, padding=1,
                     in_channels=channels, out_channels=channels, weights=w)


def single_layer_net(layer):
    return NetworkSpec(layers=(layer,), taps={"final": 1})


class TestForward:
    def test_identity_kernel(self):
        net = single_layer_net(identity_conv())
        fmap = FeatureMap(np.random.default_rng(0).uniform(-1, 1, (1, 5, 7))
                          .astype(np.float32))
        out = forward(fmap, net, 1, 1)
        assert np.array_equal(out.data, fmap.data)
        assert not out.rectified

    def test_relu(self):
        net = single_layer_net(LayerSpec(kind=RELU))
        fmap = FeatureMap(np.array([[[-1.0, 2.0], [0.0, -3.0]]], dtype=np.float32))
        out = forward(fmap, net, 1, 1)
        assert np.array_equal(out.data[0], [[0, 2], [0, 0]])
        assert out.rectified

    def test_maxpool(self):
        net = single_layer_net(LayerSpec(kind=MAXPOOL, kernel=2, stride=2))
        fmap = FeatureMap(np.array([[[1.0, 2.0], [3.0, 4.0]]], dtype=np.float32))
        out = forward(fmap, net, 1, 1)
        assert out.data.shape == (1, 1, 1)
        assert out.data[0, 0, 0] == 4.0

    def test_channel_mismatch(self):
        net = toy_network(0)
        fmap = FeatureMap(np.zeros((5, 8, 8), dtype=np.float32))
        with pytest.raises(ValueError, match="channels"):
            forward(fmap, net, 1, 1)

    def test_too_small_after_padding(self):
        net = single_layer_net(LayerSpec(kind=MAXPOOL, kernel=4, stride=4))
        fmap = FeatureMap(np.zeros((1, 2, 2), dtype=np.float32))
        with pytest.raises(ValueError, match="smaller"):
            forward(fmap, net, 1, 1)

    def test_composition_at_every_split(self):
        net = toy_network(3)
        rng = np.random.default_rng(4)
        img = Image(rng.uniform(0, 1, (16, 16, 3)).astype(np.float32))
        full = forward(img, net, 1, net.depth)
        for b in range(1, net.depth):
            part = forward(img, net, 1, b)
            rest = forward(part, net, b + 1, net.depth)
            assert rest == full


class TestRFParams:
    def test_single_conv(self):
        net = single_layer_net(identity_conv())
        rf = rf_params(net, 1)
        assert (rf.stride, rf.size, rf.offset) == (1, 3, 0.0)

    def test_conv_relu_pool(self):
        net = NetworkSpec(layers=(identity_conv(), LayerSpec(kind=RELU),
                                  LayerSpec(kind=MAXPOOL, kernel=2, stride=2)),
                          taps={"final": 3})
        rf = rf_params(net, 3)
        assert (rf.stride, rf.size, rf.offset) == (2, 4, 0.5)

    def test_two_stacked_convs(self):
        net = NetworkSpec(layers=(identity_conv(), identity_conv()),
                          taps={"final": 2})
        rf = rf_params(net, 2)
        assert (rf.stride, rf.size, rf.offset) == (1, 5, 0.0)

    def test_delta_oracle_small(self):
        # every pixel a positive-weight net responds to must lie in the
        # analytic receptive field, exhaustively on a 12x12 input
        net = _positive_toy_like()
        n = 12
        for layer in range(1, net.depth + 1):
            rf = rf_params(net, layer)
            gw, gh = output_grid_size(net, layer, n, n)
            for px in range(n):
                img = np.zeros((n, n, 3), dtype=np.float32)
                img[5, px] = 1.0
                out = forward(Image(img), net, 1, layer)
                responding = np.nonzero(np.abs(out.data).sum(axis=(0, 1)) > 0)[0]
                centers = np.arange(gw) * rf.stride + rf.offset
                analytic = np.nonzero(np.abs(centers - px) <= (rf.size - 1) / 2)[0]
                assert np.array_equal(responding, analytic), (layer, px)


def _positive_toy_like():
    """Toy-network geometry with strictly positive weights, so the set of
    responding activations is exactly the geometric receptive field."""
    def conv(cin, cout):
        w = np.full((cout, cin, 3, 3), 0.05, dtype=np.float32)
        return LayerSpec(kind=CONV, kernel=3, stride=1, padding=1,
                         in_channels=cin, out_channels=cout, weights=w)

    layers = (conv(3, 8), LayerSpec(kind=RELU),
              LayerSpec(kind=MAXPOOL, kernel=2, stride=2),
              conv(8, 16), LayerSpec(kind=RELU),
              LayerSpec(kind=MAXPOOL, kernel=2, stride=2),
              conv(16, 32), LayerSpec(kind=RELU))
    return NetworkSpec(layers=layers, taps={"low": 2, "mid": 5, "final": 8})


class TestProjectRoi:
    def test_unit_stride_identity(self):
        net = single_layer_net(identity_conv())
        rect = project_roi(net, Rect(2, 2, 6, 6), 1, 8, 8)
        assert rect == Rect(2, 2, 6, 6)

    def test_stride2_projection(self):
        # S=2, O=0.5: centers 2i+0.5 inside [2,6) are i in {1,2}
        net = NetworkSpec(layers=(identity_conv(), LayerSpec(kind=RELU),
                                  LayerSpec(kind=MAXPOOL, kernel=2, stride=2)),
                          taps={"final": 3})
        rect = project_roi(net, Rect(2, 2, 6, 6), 3, 8, 8)
        assert (rect.x0, rect.x1) == (1, 3)
        assert (rect.y0, rect.y1) == (1, 3)

    def test_tiny_roi_falls_back_to_nearest_center(self):
        net = toy_network(0)
        rect = project_roi(net, Rect(9, 9, 10, 10), net.depth, 32, 32)
        assert rect.area == 1

    def test_monotone_in_roi(self):
        net = toy_network(0)
        small = project_roi(net, Rect(4, 4, 16, 16), net.depth, 32, 32)
        large = project_roi(net, Rect(2, 2, 24, 24), net.depth, 32, 32)
        assert large.contains(small)

    def test_full_image_projects_to_full_grid(self):
        net = toy_network(0)
        for layer in range(1, net.depth + 1):
            gw, gh = output_grid_size(net, layer, 32, 32)
            rect = project_roi(net, Rect(0, 0, 32, 32), layer, 32, 32)
            assert rect == Rect(0, 0, gw, gh)

    def test_roi_outside_image_rejected(self):
        net = toy_network(0)
        with pytest.raises(ValueError):
            project_roi(net, Rect(0, 0, 40, 8), net.depth, 32, 32)


class TestToyNetwork:
    def test_deterministic(self):
        a, b = toy_network(5), toy_network(5)
        for la, lb in zip(a.layers, b.layers):
            if la.kind == CONV:
                assert np.array_equal(la.weights, lb.weights)
                assert np.array_equal(la.bias, lb.bias)

    def test_seeds_differ(self):
        a, b = toy_network(0), toy_network(1)
        assert not np.array_equal(a.layers[0].weights, b.layers[0].weights)

    def test_final_shape_and_nonnegativity(self):
        net = toy_network(0)
        img = Image(np.random.default_rng(1).uniform(0, 1, (64, 64, 3))
                    .astype(np.float32))
        out = forward(img, net, 1, net.tap_index("final"))
        assert (out.width, out.height, out.channels) == (16, 16, 32)
        assert out.rectified and out.data.min() >= 0


class TestNetworkFile:
    def test_seed_roundtrip(self, tmp_path):
        net = toy_network(9)
        save_network(net, tmp_path / "net.json", seed=9)
        back = load_network(tmp_path / "net.json")
        assert np.array_equal(back.layers[0].weights, net.layers[0].weights)

    def test_blob_roundtrip(self, tmp_path):
        net = toy_network(2)
        save_network(net, tmp_path / "net.json")
        back = load_network(tmp_path / "net.json")
        assert back.taps == net.taps
        for la, lb in zip(net.layers, back.layers):
            assert la.kind == lb.kind
            if la.kind == CONV:
                assert np.array_equal(la.weights, lb.weights)
                assert np.array_equal(la.bias, lb.bias)
