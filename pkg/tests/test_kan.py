import numpy as np
import pytest

from optkan.autograd import Tensor, gradcheck, tsum
from optkan.errors import DomainError, ShapeError
from optkan.kan import (KanEdge, KanLayer, KanNetwork, KanRegressor, SplineBasis, edge_forward,
                        layer_forward, network_forward, spline_eval)

from oracles import naive_layer, naive_silu, naive_spline

BASIS = SplineBasis()


def test_knot_grid():
    assert BASIS.n_basis == 8
    assert np.all(np.diff(BASIS.knots) > 0)
    assert BASIS.knots[3] == -1.5 and BASIS.knots[-4] == pytest.approx(1.5)
    with pytest.raises(DomainError):
        SplineBasis(intervals=0)


@pytest.mark.parametrize("order", [0, 1, 2, 3])
def test_partition_of_unity(order):
    b = SplineBasis(intervals=5, order=order)
    x = np.linspace(b.g_min, b.g_max, 1001)
    assert np.max(np.abs(b.values(x).sum(axis=-1) - 1.0)) < 1e-12


def test_constant_and_zero_coefficients():
    x = np.linspace(-1.5, 1.5, 37)
    assert np.allclose(spline_eval(BASIS, np.ones(8), x), 1.0, atol=1e-12)
    assert np.all(spline_eval(BASIS, np.zeros(8), x) == 0.0)


def test_spline_matches_recursive_de_boor():
    rng = np.random.default_rng(0)
    coeffs = rng.normal(size=BASIS.n_basis)
    xs = np.linspace(-1.5, 1.5, 100)
    got = spline_eval(BASIS, coeffs, xs)
    want = np.array([naive_spline(coeffs, x, BASIS) for x in xs])
    assert np.max(np.abs(got - want)) < 1e-12


def test_spline_clamps_out_of_range():
    coeffs = np.random.default_rng(1).normal(size=BASIS.n_basis)
    assert spline_eval(BASIS, coeffs, 7.0) == spline_eval(BASIS, coeffs, 1.5)
    assert spline_eval(BASIS, coeffs, -7.0) == spline_eval(BASIS, coeffs, -1.5)


def test_spline_first_derivative_continuous_at_knots():
    coeffs = np.random.default_rng(2).normal(size=BASIS.n_basis)
    h = 1e-6
    for knot in BASIS.knots[4:-4]:
        left = (spline_eval(BASIS, coeffs, knot) - spline_eval(BASIS, coeffs, knot - h)) / h
        right = (spline_eval(BASIS, coeffs, knot + h) - spline_eval(BASIS, coeffs, knot)) / h
        assert abs(left - right) < 1e-4


def test_spline_coefficient_count_checked():
    with pytest.raises(ShapeError):
        spline_eval(BASIS, np.ones(5), 0.0)


def test_edge_examples():
    silu_only = KanEdge(BASIS, np.ones(8), w_spline=0.0, w_silu=1.0)
    assert edge_forward(silu_only, Tensor(0.0)).item() == 0.0
    spline_only = KanEdge(BASIS, np.zeros(8), w_spline=1.0, w_silu=0.0)
    assert edge_forward(spline_only, Tensor(np.linspace(-3, 3, 9))).data.tolist() == [0.0] * 9


def test_edge_silu_term_not_clamped():
    e = KanEdge(BASIS, np.zeros(8), w_spline=1.0, w_silu=1.0)
    assert edge_forward(e, Tensor(4.0)).item() == pytest.approx(naive_silu(4.0), abs=1e-15)


def test_edge_gradients():
    e = KanEdge(BASIS, rng=np.random.default_rng(3), w_spline=0.8, w_silu=1.2)
    x = Tensor(np.random.default_rng(4).uniform(-1.4, 1.4, size=6), requires_grad=True)
    assert gradcheck(lambda: tsum(edge_forward(e, x)), [x, *e.parameters()]) < 1e-6


def test_zero_layer_outputs_zero():
    layer = KanLayer(3, 2, BASIS, w_spline=0.0, w_silu=0.0)
    layer.coeffs.data[:] = 0.0
    assert np.all(layer_forward(layer, Tensor(np.ones(3))).data == 0.0)


def test_layer_matches_double_loop():
    rng = np.random.default_rng(5)
    layer = KanLayer(2, 3, BASIS, rng)
    layer.w_spline.data[:] = rng.normal(size=(3, 2))
    layer.w_silu.data[:] = rng.normal(size=(3, 2))
    for x in rng.uniform(-2, 2, size=(10, 2)):
        got = layer_forward(layer, Tensor(x)).data
        assert np.max(np.abs(got - naive_layer(layer, x))) < 1e-12


def test_single_input_layer_is_bank_of_edges():
    rng = np.random.default_rng(6)
    layer = KanLayer(1, 4, BASIS, rng)
    x = Tensor(np.array([0.3]))
    out = layer_forward(layer, x).data
    for i in range(4):
        assert out[i] == pytest.approx(edge_forward(layer.edge(i, 0), Tensor(0.3)).item(),
                                       abs=1e-15)


def test_batched_layer_equals_per_sample():
    rng = np.random.default_rng(7)
    layer = KanLayer(4, 3, BASIS, rng)
    xs = rng.normal(size=(5, 4))
    batched = layer_forward(layer, Tensor(xs)).data
    for row, x in zip(batched, xs):
        assert np.array_equal(row, layer_forward(layer, Tensor(x)).data)


def test_layer_width_checked():
    with pytest.raises(ShapeError):
        layer_forward(KanLayer(3, 2, BASIS), Tensor(np.ones(4)))


def test_single_layer_network_is_layer():
    rng = np.random.default_rng(8)
    net = KanNetwork([3, 2], BASIS, rng)
    x = Tensor(rng.normal(size=(4, 3)))
    assert np.array_equal(network_forward(net, x).data, layer_forward(net.layers[0], x).data)


def test_two_layer_representation_shape():
    n = 3
    net = KanNetwork([n, 2 * n + 1, 1], BASIS)
    assert [(l.n_in, l.n_out) for l in net.layers] == [(3, 7), (7, 1)]


def test_network_gradients_2_5_1():
    rng = np.random.default_rng(9)
    net = KanNetwork([2, 5, 1], BASIS, rng)
    x = Tensor(rng.uniform(-1.2, 1.2, size=(6, 2)))
    assert gradcheck(lambda: tsum(network_forward(net, x)), net.parameters()) < 1e-4


def test_regressor_flattens_windows():
    rng = np.random.default_rng(10)
    model = KanRegressor(2 * 3 * 4, [5], BASIS, rng)
    feats = rng.normal(size=(7, 2, 3, 4))
    assert model(model.prepare(feats)).shape == (7, 1)


def test_fan_in_scaling():
    a = KanLayer(16, 2, BASIS, np.random.default_rng(0))
    b = KanLayer(16, 2, BASIS, np.random.default_rng(0), fan_in_scale=True)
    assert np.allclose(b.w_silu.data, a.w_silu.data / 4.0)
    assert np.allclose(b.w_spline.data, a.w_spline.data / 4.0)
