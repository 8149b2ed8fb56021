import numpy as np
import pytest

from exceptions import NonFiniteError
from exceptions import ShapeError
from nn_core.checkpoint import load_into
from nn_core.checkpoint import read_container
from nn_core.checkpoint import save_weights
from nn_core.layers import MLP
from nn_core.layers import Dropout
from nn_core.layers import GRUCell
from nn_core.layers import LayerNorm
from nn_core.layers import Linear
from nn_core.layers import constrain_tanh
from nn_core.layers import gru_latent_derivative
from nn_core.layers import layer_norm
from nn_core.optim import Adam
from nn_core.optim import AdamState
from nn_core.optim import PlateauScheduler
from nn_core.optim import adam_step
from nn_core.optim import clip_gradients
from nn_core.tape import Tensor
from nn_core.tape import backward
from nn_core.tape import concat
from nn_core.tape import no_grad


def test_square_gradient():
    x = Tensor(3.0, requires_grad=True)
    (grad,) = backward(x * x, [x])
    assert grad == pytest.approx(6.0)


def test_tanh_slope_at_zero():
    x = Tensor(0.0, requires_grad=True)
    (grad,) = backward(x.tanh(), [x])
    assert grad == pytest.approx(1.0)


def test_broadcast_gradient_is_summed():
    x = Tensor(np.ones((4, 3)), requires_grad=True)
    b = Tensor(np.zeros(3), requires_grad=True)
    gx, gb = backward((x + b).sum(), [x, b])
    np.testing.assert_allclose(gx, np.ones((4, 3)))
    np.testing.assert_allclose(gb, np.full(3, 4.0))


def test_unused_leaf_gets_zero_gradient():
    x = Tensor(np.ones(2), requires_grad=True)
    y = Tensor(np.ones(2), requires_grad=True)
    _, gy = backward((x * 2.0).sum(), [x, y])
    np.testing.assert_array_equal(gy, np.zeros(2))


def test_backward_needs_scalar():
    x = Tensor(np.ones(2), requires_grad=True)
    with pytest.raises(ShapeError):
        backward(x * 2.0, [x])


def test_backward_rejects_non_finite_forward():
    x = Tensor(np.array([0.0]), requires_grad=True)
    with np.errstate(divide="ignore"), pytest.raises(NonFiniteError):
        backward((1.0 / x).sum(), [x])


def test_no_grad_records_nothing():
    x = Tensor(1.0, requires_grad=True)
    with no_grad():
        y = x * 2.0
    assert not y.requires_grad


def test_concat_gradient_splits():
    a = Tensor(np.ones(2), requires_grad=True)
    b = Tensor(np.ones(3), requires_grad=True)
    weights = np.arange(5.0)
    ga, gb = backward((concat([a, b]) * weights).sum(), [a, b])
    np.testing.assert_allclose(ga, [0.0, 1.0])
    np.testing.assert_allclose(gb, [2.0, 3.0, 4.0])


def _zero_cell(input_size, hidden_size):
    cell = GRUCell(input_size, hidden_size, np.random.default_rng(0))
    for param in cell.parameters():
        param.value = np.zeros_like(param.value)
    return cell


def test_zero_weight_gru_decays_half():
    cell = _zero_cell(2, 3)
    zeta = np.array([0.4, -1.0, 2.0])
    rate = gru_latent_derivative(np.zeros(1), np.zeros(1), zeta, cell)
    np.testing.assert_allclose(rate.value, -0.5 * zeta)


def test_gru_shape_mismatch():
    cell = GRUCell(2, 3, np.random.default_rng(0))
    with pytest.raises(ShapeError):
        cell.derivative(np.zeros(4), np.zeros(3))


def test_gru_gradient_matches_finite_difference():
    rng = np.random.default_rng(3)
    cell = GRUCell(2, 4, rng)
    x = rng.normal(size=2)
    h = rng.normal(size=4)

    def loss():
        return (cell(x, h) * cell(x, h)).sum()

    (grad,) = backward(loss(), [cell.U_h])
    eps = 1e-6
    numeric = np.zeros_like(cell.U_h.value)
    for idx in np.ndindex(*numeric.shape):
        original = cell.U_h.value[idx]
        cell.U_h.value[idx] = original + eps
        up = float(loss().value)
        cell.U_h.value[idx] = original - eps
        down = float(loss().value)
        cell.U_h.value[idx] = original
        numeric[idx] = (up - down) / (2 * eps)
    np.testing.assert_allclose(grad, numeric, rtol=1e-5, atol=1e-8)


def test_gru_tangent_matches_finite_difference():
    rng = np.random.default_rng(5)
    cell = GRUCell(3, 2, rng)
    x, dx, h = rng.normal(size=3), rng.normal(size=3), rng.normal(size=2)
    _, tangent = cell.step_with_tangent(x, dx, h)
    eps = 1e-6
    numeric = (cell(x + eps * dx, h).value - cell(x - eps * dx, h).value) / (2 * eps)
    np.testing.assert_allclose(tangent.value, numeric, rtol=1e-5, atol=1e-8)


def test_layer_norm_constant_vector_is_zero():
    out = layer_norm(np.full(4, 7.0), np.ones(4), np.zeros(4))
    np.testing.assert_allclose(out.value, np.zeros(4), atol=1e-12)


def test_layer_norm_symmetric_pair_is_unchanged():
    out = layer_norm(np.array([1.0, -1.0]), np.ones(2), np.zeros(2))
    np.testing.assert_allclose(out.value, [1.0, -1.0], atol=1e-4)


def test_layer_norm_ramp():
    v = np.array([1.0, 2.0, 3.0, 4.0])
    out = layer_norm(v, np.ones(4), np.zeros(4))
    expected = (v - 2.5) / np.sqrt(1.25 + 1e-5)
    np.testing.assert_allclose(out.value, expected, rtol=1e-10)


def test_layer_norm_needs_two_features():
    with pytest.raises(ShapeError):
        layer_norm(np.ones(1), np.ones(1), np.zeros(1))


def test_layer_norm_tangent_matches_finite_difference():
    rng = np.random.default_rng(2)
    norm = LayerNorm(5)
    norm.gain.value = rng.normal(size=5)
    x, dx = rng.normal(size=5), rng.normal(size=5)
    eps = 1e-6
    numeric = (norm(x + eps * dx).value - norm(x - eps * dx).value) / (2 * eps)
    np.testing.assert_allclose(norm.tangent(x, dx).value, numeric, rtol=1e-5, atol=1e-8)


def test_constrain_tanh():
    assert float(constrain_tanh(1.0, 0.2).value) == pytest.approx(0.15232, abs=1e-5)
    big = constrain_tanh(np.array([-50.0, 50.0])).value
    assert np.all(np.abs(big) <= 0.2)
    with pytest.raises(ValueError):
        constrain_tanh(1.0, 0.0)


def test_dropout_only_in_training():
    layer = Dropout(0.5, np.random.default_rng(0))
    x = np.ones(1000)
    np.testing.assert_array_equal(layer(x).value, x)
    layer.train()
    out = layer(x).value
    assert set(np.unique(out)) <= {0.0, 2.0}
    assert 0.3 < np.mean(out == 0.0) < 0.7


def test_mlp_parameter_names_and_validation():
    net = MLP([3, 8, 2], np.random.default_rng(0))
    names = [name for name, _ in net.named_parameters()]
    assert names == ["layers.0.weight", "layers.0.bias", "layers.1.weight", "layers.1.bias"]
    assert net(np.zeros((5, 3))).shape == (5, 2)
    with pytest.raises(ValueError):
        MLP([3], np.random.default_rng(0))
    with pytest.raises(ValueError):
        MLP([3, 2], np.random.default_rng(0), activation="relu")


def test_adam_first_step_moves_by_learning_rate():
    params = [np.zeros(3)]
    grads = [np.array([0.5, -2.0, 10.0])]
    updated, state = adam_step(params, grads, AdamState(lr=1e-3))
    np.testing.assert_allclose(updated[0], [-1e-3, 1e-3, -1e-3], rtol=1e-6)
    assert state.step == 1


def test_adam_shape_mismatch():
    with pytest.raises(ShapeError):
        adam_step([np.zeros(3)], [np.zeros(2)], AdamState())


def test_adam_updates_tensors_in_place():
    param = Tensor(np.ones(2), requires_grad=True)
    optimizer = Adam([param], lr=0.1)
    optimizer.step([np.ones(2)])
    np.testing.assert_allclose(param.value, [0.9, 0.9], rtol=1e-6)


@pytest.mark.parametrize(
    "grad,expected",
    [
        (np.array([0.3, 0.4]), np.array([0.3, 0.4])),
        (np.array([3.0, 4.0]), np.array([0.6, 0.8])),
        (np.zeros(2), np.zeros(2)),
    ],
)
def test_clip_gradients(grad, expected):
    (clipped,) = clip_gradients([grad], max_norm=1.0)
    np.testing.assert_allclose(clipped, expected)


def test_plateau_scheduler_halves_learning_rate():
    optimizer = Adam([Tensor(np.zeros(1), requires_grad=True)], lr=1e-2)
    scheduler = PlateauScheduler(optimizer, factor=0.5, patience=2)
    assert not scheduler.step(1.0)
    assert not scheduler.step(1.0)
    assert scheduler.step(1.0)
    assert optimizer.lr == pytest.approx(5e-3)


def test_checkpoint_restores_weights(tmp_path):
    source = MLP([2, 4, 1], np.random.default_rng(1))
    path = str(tmp_path / "mlp.json")
    save_weights(path, source, {"kind": "test"})
    arrays, meta = read_container(path)
    target = load_into(MLP([2, 4, 1], np.random.default_rng(9)), arrays)
    assert meta == {"kind": "test"}
    x = np.array([[0.3, -0.7]])
    np.testing.assert_allclose(target(x).value, source(x).value)


def test_checkpoint_shape_mismatch(tmp_path):
    path = str(tmp_path / "mlp.json")
    save_weights(path, MLP([2, 4, 1], np.random.default_rng(1)), {})
    arrays, _ = read_container(path)
    with pytest.raises(ShapeError):
        load_into(MLP([2, 5, 1], np.random.default_rng(1)), arrays)


def test_layer_norm_ignores_shift_and_positive_scale():
    rng = np.random.default_rng(11)
    v = rng.normal(size=6)
    gain, bias = rng.normal(size=6), rng.normal(size=6)
    base = layer_norm(v, gain, bias).value
    np.testing.assert_allclose(layer_norm(3.0 * v - 2.0, gain, bias).value, base, atol=1e-4)
    flipped = layer_norm(-v, np.ones(6), np.zeros(6)).value
    np.testing.assert_allclose(flipped, -layer_norm(v, np.ones(6), np.zeros(6)).value)


def test_layer_norm_output_is_affine_in_gain_and_bias():
    rng = np.random.default_rng(12)
    v = rng.normal(size=(3, 5))
    gain, bias = rng.normal(size=5), rng.normal(size=5)
    unit = layer_norm(v, np.ones(5), np.zeros(5)).value
    np.testing.assert_allclose(layer_norm(v, gain, bias).value, unit * gain + bias, rtol=1e-12)
    np.testing.assert_allclose(unit.mean(axis=-1), 0.0, atol=1e-12)


def _numeric_gradient(loss, param, eps=1e-6):
    numeric = np.zeros_like(param.value)
    for idx in np.ndindex(*numeric.shape):
        original = param.value[idx]
        param.value[idx] = original + eps
        up = float(loss().value)
        param.value[idx] = original - eps
        down = float(loss().value)
        param.value[idx] = original
        numeric[idx] = (up - down) / (2 * eps)
    return numeric


def _layer_norm_module(rng):
    module = LayerNorm(4)
    module.gain.value = rng.normal(size=4)
    module.bias.value = rng.normal(size=4)
    return module


@pytest.mark.parametrize(
    "build",
    [
        lambda rng: Linear(4, 3, rng),
        lambda rng: MLP([4, 5, 2], rng),
        lambda rng: MLP([4, 6, 6, 3], rng, activation="sigmoid"),
        _layer_norm_module,
    ],
    ids=["linear", "mlp_tanh", "mlp_sigmoid", "layer_norm"],
)
def test_module_gradients_match_finite_difference(build):
    rng = np.random.default_rng(21)
    module = build(rng)
    x = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
    target = rng.normal(size=module(x).shape)

    def loss():
        diff = module(x) - target
        return (diff * diff).sum()

    leaves = [x] + module.parameters()
    grads = backward(loss(), leaves)
    for leaf, grad in zip(leaves, grads):
        np.testing.assert_allclose(grad, _numeric_gradient(loss, leaf), rtol=1e-5, atol=1e-7)
