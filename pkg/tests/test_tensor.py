import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from geossl import tensor as T
from geossl.tensor import DomainError, NonDeterminismError, ShapeError, Tensor, grad_check


def rnd(*shape, seed=0, lo=-2.0, hi=2.0):
    return Tensor(np.random.default_rng(seed).uniform(lo, hi, size=shape), requires_grad=True)


def central_diff(f, x, step=1e-5):
    """Independent finite-difference gradient of a scalar numpy function."""
    g = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        xp, xm = x.copy(), x.copy()
        xp[i] += step
        xm[i] -= step
        g[i] = (f(xp) - f(xm)) / (2 * step)
    return g


# ---------------------------------------------------------------- matmul

def test_matmul_identity_and_hand_case():
    m = np.array([[1.5, -2.0], [0.25, 3.0]])
    assert np.array_equal((Tensor(np.eye(2)) @ Tensor(m)).data, m)
    out = Tensor([[1.0, 2.0], [3.0, 4.0]]) @ Tensor([[1.0], [1.0]])
    assert np.array_equal(out.data, [[3.0], [7.0]])


def test_matmul_sum_gradient_is_ones_times_bt():
    a, b = rnd(4, 5, seed=1), rnd(5, 3, seed=2)
    T.backward((a @ b).sum())
    assert np.allclose(a.grad, np.ones((4, 3)) @ b.data.T, rtol=0, atol=1e-14)
    fd = central_diff(lambda x: (x @ b.data).sum(), a.data)
    assert np.allclose(a.grad, fd, rtol=1e-8, atol=1e-8)


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(4, 2\)"):
        rnd(2, 3) @ rnd(4, 2)


# ---------------------------------------------------------------- elementwise

def test_elementwise_basics():
    a = rnd(3, 4)
    assert np.array_equal((a + 0.0).data, a.data)
    assert np.array_equal(T.elementwise(Tensor([2.0, 4.0]), Tensor([2.0, 2.0]), "div").data, [1.0, 2.0])


def test_division_by_zero_is_a_domain_error():
    with pytest.raises(DomainError):
        Tensor([1.0, 2.0]) / Tensor([1.0, 0.0])


def test_non_broadcastable_shapes_rejected():
    with pytest.raises(ShapeError):
        rnd(3, 4) + rnd(3)


def test_broadcast_operand_gradient_is_column_sum():
    a, b = rnd(5, 3, seed=3), rnd(3, seed=4)
    w = np.random.default_rng(5).normal(size=(5, 3))
    T.backward(((a + b) * w).sum())
    assert np.allclose(b.grad, w.sum(axis=0), atol=1e-14)
    fd = central_diff(lambda x: ((a.data + x) * w).sum(), b.data)
    assert np.allclose(b.grad, fd, atol=1e-8)


@pytest.mark.parametrize("kind", ["add", "sub", "mul", "div"])
def test_elementwise_grad_check(kind):
    a = rnd(3, 4, seed=6)
    b = Tensor(np.random.default_rng(7).uniform(0.5, 2.0, size=(4,)) * np.array([1, -1, 1, -1]))
    assert grad_check(lambda: (T.elementwise(a, b, kind) ** 2).sum(), [a, b]) < 1e-4


# ---------------------------------------------------------------- softmax

def test_softmax_examples():
    assert np.array_equal(T.softmax(Tensor([0.0, 0.0])).data, [0.5, 0.5])
    big = T.softmax(Tensor([1000.0, 0.0])).data
    assert np.all(np.isfinite(big)) and big[0] == pytest.approx(1.0) and big[1] < 1e-300


def test_softmax_jacobian_matches_finite_differences():
    x = np.array([0.3, -1.2, 2.0])
    for j in range(3):
        t = Tensor(x.copy(), requires_grad=True)
        T.backward(T.softmax(t)[j])
        fd = central_diff(lambda v: np.exp(v[j]) / np.exp(v).sum(), x)
        assert np.allclose(t.grad, fd, atol=1e-6)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (3, 5), elements=st.floats(-50, 50)), st.floats(-100, 100))
def test_softmax_rows_sum_to_one_and_shift_invariant(x, c):
    s = T.softmax(Tensor(x), axis=-1).data
    assert np.all(np.abs(s.sum(axis=-1) - 1.0) <= 1e-12)
    assert np.all((s >= 0) & (s <= 1))
    assert np.allclose(T.softmax(Tensor(x + c), axis=-1).data, s, rtol=0, atol=1e-12)


def test_grad_check_sum_softmax_is_near_zero():
    # the true gradient is exactly 0, so only roundoff remains in both estimates
    x = rnd(6, seed=8)
    T.backward(T.softmax(x).sum())
    assert np.max(np.abs(x.grad)) < 1e-12
    err = grad_check(lambda t: T.softmax(t).sum(), x)
    # relative error is taken against the 1e-8 floor, so roundoff of order 1e-11 shows up as ~1e-3
    assert err < 1e-2


# ---------------------------------------------------------------- layer norm

def test_layer_norm_examples():
    g, b = Tensor(np.ones(3)), Tensor(np.zeros(3))
    assert np.array_equal(T.layer_norm(Tensor([[2.0, 2.0, 2.0]]), g, b).data, np.zeros((1, 3)))
    row = T.layer_norm(Tensor([[1.0, 2.0, 3.0]]), g, b, eps=1e-12).data
    assert abs(row.mean()) < 1e-9 and abs(row.var() - 1.0) < 1e-9


def test_layer_norm_grad_check():
    x, g, b = rnd(4, 6, seed=9), rnd(6, seed=10), rnd(6, seed=11)
    w = np.random.default_rng(12).normal(size=(4, 6))
    assert grad_check(lambda: (T.layer_norm(x, g, b) * w).sum(), [x, g, b]) < 1e-5


# ---------------------------------------------------------------- activations

def test_activation_examples():
    assert np.array_equal(T.relu(Tensor([-1.0, 2.0])).data, [0.0, 2.0])
    assert T.sigmoid(Tensor([0.0])).data[0] == 0.5
    with pytest.raises(DomainError):
        T.log(Tensor([1.0, 0.0]))
    with pytest.raises(DomainError):
        T.log(Tensor([-1.0]))


@pytest.mark.parametrize("kind", ["relu", "gelu", "tanh", "sigmoid", "exp", "log", "softplus"])
def test_activation_grad_check(kind):
    x = np.random.default_rng(13).uniform(-2, 2, size=(5, 4))
    if kind == "relu":
        x = np.where(np.abs(x) < 1e-2, 0.5, x)   # stay away from the kink
    if kind == "log":
        x = np.abs(x) + 0.1
    t = Tensor(x, requires_grad=True)
    w = np.random.default_rng(14).normal(size=x.shape)
    assert grad_check(lambda v: (T.activation(v, kind) * w).sum(), t) < 1e-5


def test_gelu_matches_tanh_approximation_oracle():
    x = np.linspace(-4, 4, 41)
    ref = 0.5 * x * (1 + np.tanh(np.sqrt(2 / np.pi) * (x + 0.044715 * x ** 3)))
    assert np.allclose(T.gelu(Tensor(x)).data, ref, atol=1e-14)


# ---------------------------------------------------------------- reductions

def test_reductions():
    assert T.reduce(Tensor([1.0, 2.0, 3.0]), "sum").item() == 6.0
    assert T.reduce(Tensor(np.full((3, 4), 2.5)), "mean").item() == 2.5
    x = rnd(7, seed=15)
    T.backward(x.mean())
    assert np.allclose(x.grad, 1.0 / 7)
    with pytest.raises((ShapeError, ValueError)):
        T.reduce(rnd(2, 3), "sum", axis=2)


def test_axis_reductions_grad_check():
    x = rnd(3, 4, 5, seed=16)
    w = np.random.default_rng(17).normal(size=(3, 5))
    assert grad_check(lambda v: (T.mean(v, axis=1) * w).sum() + T.tsum(v, axis=(0, 2)).sum(), x) < 1e-6


def test_logsumexp_grad_check_and_value():
    x = rnd(4, 6, seed=18)
    assert np.allclose(T.logsumexp(x, axis=1).data, np.log(np.exp(x.data).sum(axis=1)), atol=1e-13)
    assert grad_check(lambda v: (T.logsumexp(v, axis=1) ** 2).sum(), x) < 1e-6


# ---------------------------------------------------------------- backward / tape

def test_backward_examples():
    x = rnd(5, seed=19)
    T.backward(x.sum())
    assert np.array_equal(x.grad, np.ones(5))
    T.backward((x * x).sum())
    assert np.allclose(x.grad, 2 * x.data)   # second call resets, no accumulation


def test_backward_rejects_non_scalar():
    with pytest.raises(ShapeError):
        T.backward(rnd(3) * 2.0)


def test_tape_is_topological_and_visits_each_op_once():
    x = rnd(3, seed=20)
    y = T.exp(x) * x
    z = (y + y).sum()
    tape = T.backward(z)
    outputs = [e.output for e in tape.entries]
    assert len({id(o) for o in outputs}) == len(outputs)
    seen = set()
    for e in tape.entries:
        for p in e.inputs:
            if p._parents:
                assert id(p) in seen
        seen.add(id(e.output))


def test_backward_is_linear_over_examples():
    w = rnd(4, 3, seed=21)
    xs = np.random.default_rng(22).normal(size=(6, 4))
    T.backward(T.tanh(Tensor(xs) @ w).sum())
    batched = w.grad.copy()
    total = np.zeros_like(batched)
    for row in xs:
        T.backward(T.tanh(Tensor(row[None]) @ w).sum())
        total += w.grad
    assert np.allclose(batched, total, atol=1e-13)


def test_no_grad_records_nothing():
    x = rnd(3)
    with T.no_grad():
        y = (x * 2).sum()
    assert not y.requires_grad


# ---------------------------------------------------------------- shape ops and conv

def test_shape_ops_grad_check():
    x = rnd(2, 3, 4, seed=23)
    w = np.random.default_rng(24).normal(size=(4, 6))
    f = lambda v: (T.concat([v.reshape(4, 6), v.transpose((0, 2, 1)).reshape(4, 6)], axis=0)[1:6] * w[:1]).sum()  # noqa: E731
    assert grad_check(f, x) < 1e-6


def test_conv2d_matches_direct_oracle_and_grads():
    rng = np.random.default_rng(25)
    x, w, b = rnd(2, 3, 6, 6, seed=26), rnd(4, 3, 3, 3, seed=27), rnd(4, seed=28)
    out = T.conv2d(x, w, b, stride=2, padding=1).data
    xp = np.pad(x.data, ((0, 0), (0, 0), (1, 1), (1, 1)))
    ref = np.zeros((2, 4, 3, 3))
    for n in range(2):
        for o in range(4):
            for i in range(3):
                for j in range(3):
                    ref[n, o, i, j] = (xp[n, :, 2 * i:2 * i + 3, 2 * j:2 * j + 3] * w.data[o]).sum() + b.data[o]
    assert np.allclose(out, ref, atol=1e-12)
    up = rng.normal(size=ref.shape)
    assert grad_check(lambda: (T.conv2d(x, w, b, stride=2, padding=1) * up).sum(), [x, w, b]) < 1e-5


# ---------------------------------------------------------------- grad_check contract

def test_grad_check_sum_is_exact():
    assert grad_check(lambda t: t.sum(), rnd(4, 3)) < 1e-9


def test_grad_check_rejects_bad_step():
    with pytest.raises(ValueError):
        grad_check(lambda t: t.sum(), rnd(2), step=1e-2)


def test_grad_check_detects_nondeterminism():
    rng = np.random.default_rng(0)
    with pytest.raises(NonDeterminismError):
        grad_check(lambda t: (t * rng.normal()).sum(), rnd(2))


def test_finite_inputs_give_finite_outputs():
    x = Tensor(np.array([-800.0, 0.0, 800.0]))
    for op in (T.sigmoid, T.softplus, T.tanh, T.gelu, lambda v: T.softmax(v), lambda v: T.logsumexp(v)):
        assert np.all(np.isfinite(op(x).data))
