import math
import threading

import numpy as np
import pytest

from st_enhance.core.errors import DegenerateInputError, DomainError, GraphError, ShapeError
from st_enhance.tensor import (
    DTYPE,
    Adam,
    Linear,
    Tensor,
    avg_pool2d,
    concat,
    compute_dtype,
    conv2d_3x3,
    double_precision,
    elementwise,
    expand,
    is_grad_enabled,
    logsumexp_rows,
    matmul,
    no_grad,
    normalize_rows,
    softmax_rows,
    take_rows,
    upsample_nearest,
)
from st_enhance.tensor.gradcheck import check_gradients


def test_matmul_identity():
    a = Tensor(np.eye(2))
    b = Tensor([[1, 2], [3, 4]])
    np.testing.assert_array_equal(matmul(a, b).data, [[1, 2], [3, 4]])


def test_matmul_projection():
    out = matmul(Tensor([[1, 0], [0, 0]]), Tensor([[5], [7]]))
    np.testing.assert_array_equal(out.data, [[5], [0]])


def test_matmul_shape_mismatch_names_both_shapes():
    with pytest.raises(ShapeError) as excinfo:
        matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))
    assert excinfo.value.shapes == [(2, 3), (2, 3)]


def test_elementwise_examples():
    np.testing.assert_allclose(elementwise("exp", Tensor([0.0])).data, [1.0])
    np.testing.assert_allclose(elementwise("log", elementwise("exp", Tensor([2.5]))).data, [2.5], atol=1e-6)
    np.testing.assert_array_equal(elementwise("relu", Tensor([-1.0, 2.0])).data, [0.0, 2.0])
    np.testing.assert_array_equal(elementwise("scale", Tensor([1.0, -2.0]), factor=3.0).data, [3.0, -6.0])


def test_log_of_non_positive_is_a_domain_error():
    with pytest.raises(DomainError):
        Tensor([1.0, 0.0]).log()


def test_incompatible_shapes_are_rejected():
    with pytest.raises(ShapeError):
        Tensor(np.ones((2, 3))) + Tensor(np.ones((3, 2)))


def test_scalar_broadcast_gradient_sums():
    x = Tensor(np.ones((2, 3)), requires_grad=True)
    s = Tensor(2.0, requires_grad=True)
    (x * s).sum().backward()
    np.testing.assert_allclose(x.grad, np.full((2, 3), 2.0))
    assert s.grad == pytest.approx(6.0)


def test_softmax_rows_examples():
    np.testing.assert_allclose(softmax_rows(Tensor([[0.0, 0.0, 0.0]])).data, [[1 / 3] * 3], atol=1e-7)
    out = softmax_rows(Tensor([[1000.0, 0.0]])).data
    assert np.all(np.isfinite(out))
    np.testing.assert_allclose(out, [[1.0, 0.0]], atol=1e-6)
    e = [math.exp(v) for v in (1.0, 2.0, 3.0)]
    np.testing.assert_allclose(softmax_rows(Tensor([[1.0, 2.0, 3.0]])).data, [[v / sum(e) for v in e]], atol=1e-6)


def test_softmax_rows_rejects_non_finite_input():
    with pytest.raises(DomainError):
        softmax_rows(Tensor([[np.inf, 0.0]]))


def test_backward_of_sum_is_ones():
    x = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
    x.sum().backward()
    np.testing.assert_array_equal(x.grad, np.ones((2, 3)))


def test_backward_of_dot_product():
    x = Tensor([1.0, 2.0], requires_grad=True)
    (x * x).sum().backward()
    np.testing.assert_allclose(x.grad, [2.0, 4.0])


def test_backward_needs_a_scalar():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with pytest.raises(ShapeError):
        (x * 2.0).backward()


def test_backward_outside_graph_is_an_error():
    with pytest.raises(GraphError):
        Tensor([1.0]).sum().backward()


def test_backward_frees_graph_unless_retained():
    x = Tensor([1.0, 2.0], requires_grad=True)
    loss = (x * x).sum()
    loss.backward(retain_graph=True)
    loss.backward()
    np.testing.assert_allclose(x.grad, [4.0, 8.0])
    with pytest.raises(GraphError):
        loss.backward()


def test_shared_subexpression_accumulates():
    x = Tensor([3.0], requires_grad=True)
    y = x * 2.0
    (y + y).sum().backward()
    np.testing.assert_allclose(x.grad, [4.0])


def test_no_grad_records_nothing_and_is_thread_local():
    x = Tensor([1.0], requires_grad=True)
    seen = []

    def other_thread():
        seen.append(is_grad_enabled())

    with no_grad():
        y = x * 3.0
        worker = threading.Thread(target=other_thread)
        worker.start()
        worker.join()
        assert not is_grad_enabled()
    assert is_grad_enabled()
    assert seen == [True]
    assert not y.requires_grad


def test_normalize_rows():
    np.testing.assert_allclose(normalize_rows(Tensor([[3.0, 4.0]])).data, [[0.6, 0.8]], atol=1e-7)
    with pytest.raises(DegenerateInputError):
        normalize_rows(Tensor([[0.0, 0.0]]))


def test_logsumexp_rows_is_stable():
    out = logsumexp_rows(Tensor([[1000.0, 1000.0], [0.0, 0.0]])).data
    np.testing.assert_allclose(out, [1000.0 + math.log(2), math.log(2)], rtol=1e-6)


def test_take_rows_accumulates_repeated_indices():
    x = Tensor(np.arange(6.0).reshape(3, 2), requires_grad=True)
    take_rows(x, [0, 0, 2]).sum().backward()
    np.testing.assert_array_equal(x.grad, [[2, 2], [0, 0], [1, 1]])


def test_take_rows_range_check():
    with pytest.raises(ShapeError):
        take_rows(Tensor(np.ones((2, 2))), [2])


def test_expand_backward_reduces():
    x = Tensor(np.ones((1, 3)), requires_grad=True)
    expand(x, (4, 3)).sum().backward()
    np.testing.assert_array_equal(x.grad, np.full((1, 3), 4.0))


def test_concat_splits_gradient():
    a = Tensor(np.ones((1, 2)), requires_grad=True)
    b = Tensor(np.ones((2, 2)), requires_grad=True)
    out = concat([a, b], axis=0)
    (out * Tensor(np.arange(6.0).reshape(3, 2))).sum().backward()
    np.testing.assert_array_equal(a.grad, [[0, 1]])
    np.testing.assert_array_equal(b.grad, [[2, 3], [4, 5]])


def test_avg_pool_and_upsample():
    x = Tensor(np.arange(16.0).reshape(1, 1, 4, 4))
    pooled = avg_pool2d(x, 2).data
    np.testing.assert_allclose(pooled[0, 0], [[2.5, 4.5], [10.5, 12.5]])
    up = upsample_nearest(Tensor(pooled), 2).data
    assert up.shape == (1, 1, 4, 4)
    assert up[0, 0, 1, 1] == pytest.approx(2.5)
    with pytest.raises(ShapeError):
        avg_pool2d(Tensor(np.ones((1, 1, 5, 4))), 2)


def test_conv_with_centre_tap_is_identity():
    weight = np.zeros((1, 1, 3, 3), dtype=np.float32)
    weight[0, 0, 1, 1] = 1.0
    x = np.random.default_rng(0).normal(size=(2, 1, 5, 5))
    out = conv2d_3x3(Tensor(x), Tensor(weight))
    np.testing.assert_allclose(out.data, x.astype(np.float32), atol=1e-6)


def test_conv_matches_direct_loop(rng):
    x = rng.normal(size=(1, 2, 4, 3)).astype(np.float32)
    w = rng.normal(size=(3, 2, 3, 3)).astype(np.float32)
    b = rng.normal(size=3).astype(np.float32)
    out = conv2d_3x3(Tensor(x), Tensor(w), Tensor(b)).data
    padded = np.pad(x.astype(np.float64), ((0, 0), (0, 0), (1, 1), (1, 1)))
    for o in range(3):
        for i in range(4):
            for j in range(3):
                expected = (padded[0, :, i:i + 3, j:j + 3] * w[o]).sum() + b[o]
                assert out[0, o, i, j] == pytest.approx(expected, abs=1e-4)


@pytest.mark.parametrize(
    "name, build",
    [
        ("softmax", lambda x, _: (softmax_rows(x) * Tensor(np.linspace(-1, 1, 12).reshape(3, 4))).sum()),
        ("logsumexp", lambda x, _: logsumexp_rows(x).mean()),
        ("normalize", lambda x, _: (normalize_rows(x) * Tensor(np.linspace(-1, 1, 12).reshape(3, 4))).sum()),
        ("matmul", lambda x, w: matmul(x, w).square().mean()),
        ("division", lambda x, w: (x / (x.square() + 1.0)).mean()),
    ],
)
def test_gradients_match_finite_differences(name, build, rng):
    x = Tensor(rng.normal(size=(3, 4)) * 0.5, requires_grad=True)
    w = Tensor(rng.normal(size=(4, 2)) * 0.5, requires_grad=True)
    inputs = [x, w] if name == "matmul" else [x]
    assert check_gradients(lambda: build(x, w), inputs, step=1e-3) < 1e-3


def test_conv_pool_gradients_match_finite_differences(rng):
    x = Tensor(rng.normal(size=(1, 2, 4, 4)) * 0.5, requires_grad=True)
    w = Tensor(rng.normal(size=(2, 2, 3, 3)) * 0.3, requires_grad=True)
    b = Tensor(rng.normal(size=2) * 0.1, requires_grad=True)
    target = Tensor(rng.normal(size=(1, 2, 4, 4)))

    def loss() -> Tensor:
        pooled = avg_pool2d(conv2d_3x3(x, w, b), 2)
        return (upsample_nearest(pooled, 2) * target).mean()

    assert check_gradients(loss, [x, w, b], step=1e-3) < 1e-3


def test_double_precision_is_scoped():
    assert compute_dtype() == DTYPE
    with double_precision():
        assert Tensor([1.0]).data.dtype == np.float64
        assert (Tensor([1.0]) * 2.0).data.dtype == np.float64
    assert Tensor([1.0]).data.dtype == np.float32


def test_gradient_check_restores_float32_inputs(rng):
    x = Tensor(rng.normal(size=(2, 3)), requires_grad=True)
    before = x.data.copy()
    assert check_gradients(lambda: x.square().sum(), [x]) < 1e-6
    assert x.data.dtype == np.float32
    np.testing.assert_array_equal(x.data, before)
    assert compute_dtype() == DTYPE


def test_adam_minimises_a_quadratic(rng):
    layer = Linear(3, 1, rng)
    opt = Adam(list(layer.named_parameters()), lr=0.05)
    x = Tensor(rng.normal(size=(16, 3)))
    target = Tensor(x.data @ np.array([[1.0], [-2.0], [0.5]], dtype=np.float32))
    first = None
    for _ in range(200):
        opt.zero_grad()
        loss = (layer(x) - target).square().mean()
        first = first if first is not None else loss.item()
        loss.backward()
        opt.step()
    assert loss.item() < first * 0.01


def test_adam_state_round_trip(rng):
    layer = Linear(2, 2, rng)
    opt = Adam(list(layer.named_parameters()))
    (layer(Tensor(np.ones((1, 2)))).sum()).backward()
    opt.step()
    clone = Adam(list(layer.named_parameters()))
    clone.load_state_dict(opt.state_dict(), opt.t)
    assert clone.t == 1
    for a, b in zip(opt.m, clone.m):
        np.testing.assert_array_equal(a, b)


def test_detach_cuts_the_graph():
    x = Tensor([2.0], requires_grad=True)
    y = x * 3.0
    assert x.is_leaf and not y.is_leaf
    d = y.detach()
    assert d.is_leaf and not d.requires_grad
    np.testing.assert_array_equal(d.data, [6.0])
