import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from layermg import DimensionError, apply_transform, conv2d_params, dense_params, l2_norm
from layermg.errors import ConfigurationError
from layermg.kernels import transform_vjp


def test_dense_zero_weights_tanh_gives_zero():
    params = dense_params(np.zeros((3, 3)), np.zeros(3), "tanh")
    out = apply_transform(params, np.array([1.0, -2.0, 0.5]))
    assert np.array_equal(out, np.zeros(3))


def test_dense_identity_passthrough():
    params = dense_params(np.eye(3), np.zeros(3), "identity")
    u = np.array([1.0, 2.0, 3.0])
    assert np.array_equal(apply_transform(params, u), u)


def test_dense_affine_relu_hand_case():
    # W=I, b=(1,-1), u=(-2,3): relu((-1, 2)) = (0, 2)
    params = dense_params(np.eye(2), np.array([1.0, -1.0]), "relu")
    out = apply_transform(params, np.array([-2.0, 3.0]))
    assert np.array_equal(out, np.array([0.0, 2.0]))


def test_dense_rectangular_shapes():
    params = dense_params(np.ones((2, 5)), np.zeros(2), "identity")
    out = apply_transform(params, np.ones(5))
    assert out.shape == (2,)
    assert np.array_equal(out, np.array([5.0, 5.0]))


def test_shape_mismatch_raises():
    params = dense_params(np.eye(3), np.zeros(3), "tanh")
    with pytest.raises(DimensionError):
        apply_transform(params, np.zeros(4))


def test_bad_kind_and_activation_rejected():
    with pytest.raises(ConfigurationError):
        dense_params(np.eye(2), np.zeros(2), "softplus")
    with pytest.raises(ConfigurationError):
        from layermg.kernels import TransformParams

        TransformParams("sparse", np.eye(2), np.zeros(2))


def test_apply_transform_deterministic_bitwise():
    rng = np.random.default_rng(0)
    params = dense_params(rng.normal(size=(8, 8)), rng.normal(size=8), "tanh")
    u = rng.normal(size=8)
    first = apply_transform(params, u)
    second = apply_transform(params, u)
    assert first.tobytes() == second.tobytes()


def test_l2_norm_zeros():
    assert l2_norm(np.zeros((4, 3))) == 0.0


def test_l2_norm_three_four_five():
    assert l2_norm(np.array([3.0, 4.0])) == 5.0


def test_l2_norm_matches_naive_summation_oracle():
    rng = np.random.default_rng(7)
    x = rng.normal(size=257)
    oracle = math.sqrt(math.fsum(float(v) * float(v) for v in x))
    assert abs(l2_norm(x) - oracle) <= 1e-14 * oracle


# entry magnitudes are kept where squaring stays in the normal float range;
# subnormal squares lose the relative-error guarantee
_sane_floats = st.one_of(
    st.just(0.0),
    st.floats(min_value=1e-100, max_value=1e6),
    st.floats(min_value=-1e6, max_value=-1e-100),
)


@settings(max_examples=50, deadline=None)
@given(
    st.lists(_sane_floats, min_size=1, max_size=32),
    st.one_of(st.floats(min_value=1e-3, max_value=1e3), st.floats(min_value=-1e3, max_value=-1e-3)),
)
def test_l2_norm_absolutely_homogeneous(values, alpha):
    x = np.array(values)
    lhs = l2_norm(alpha * x)
    rhs = abs(alpha) * l2_norm(x)
    assert abs(lhs - rhs) <= 1e-12 * max(rhs, 1e-300)


@settings(max_examples=50, deadline=None)
@given(st.lists(_sane_floats, min_size=1, max_size=16))
def test_l2_norm_zero_iff_all_entries_zero(values):
    x = np.array(values)
    assert (l2_norm(x) == 0.0) == bool(np.all(x == 0.0))


# --- conv2d ------------------------------------------------------------------


def _naive_conv(params, u):
    # quadruple-loop cross-correlation with one ring of zero padding
    k = params.weights.shape[0]
    c_in, c_out = params.weights.shape[2], params.weights.shape[3]
    h, w = params.height, params.width
    x = u.reshape(c_in, h, w)
    padded = np.zeros((c_in, h + 2, w + 2))
    padded[:, 1 : 1 + h, 1 : 1 + w] = x
    out_h, out_w = h + 2 - k + 1, w + 2 - k + 1
    out = np.zeros((c_out, out_h, out_w))
    for co in range(c_out):
        for r in range(out_h):
            for col in range(out_w):
                acc = 0.0
                for ci in range(c_in):
                    for dr in range(k):
                        for dc in range(k):
                            acc += padded[ci, r + dr, col + dc] * params.weights[dr, dc, ci, co]
                out[co, r, col] = acc + params.bias[co]
    return np.tanh(out.ravel())


def test_conv2d_matches_naive_loop_oracle():
    rng = np.random.default_rng(3)
    params = conv2d_params(rng.normal(size=(3, 3, 2, 2)), rng.normal(size=2), "tanh", 4, 5)
    u = rng.normal(size=2 * 4 * 5)
    out = apply_transform(params, u)
    assert out.shape == (2 * 4 * 5,)
    np.testing.assert_allclose(out, _naive_conv(params, u), rtol=0, atol=1e-13)


def test_conv2d_delta_kernel_is_identity():
    # a centered unit impulse with 3x3 kernel and padding 1 passes input through
    weights = np.zeros((3, 3, 1, 1))
    weights[1, 1, 0, 0] = 1.0
    params = conv2d_params(weights, np.zeros(1), "identity", 6, 6)
    u = np.random.default_rng(1).normal(size=36)
    assert np.allclose(apply_transform(params, u), u)


def test_conv2d_width_bookkeeping():
    params = conv2d_params(np.zeros((3, 3, 2, 2)), np.zeros(2), "relu", 7, 7)
    assert params.input_width == 2 * 7 * 7
    assert params.output_width == 2 * 7 * 7


def _vjp_vs_fd(params, u, seed, atol=2e-6):
    rng = np.random.default_rng(seed)
    g = rng.normal(size=params.output_width)
    gu, gw, gb = transform_vjp(params, u, g)
    eps = 1e-6

    def scalar(vec):
        return float(g @ apply_transform(params, vec))

    for i in range(len(u)):
        up, um = u.copy(), u.copy()
        up[i] += eps
        um[i] -= eps
        fd = (scalar(up) - scalar(um)) / (2 * eps)
        assert abs(fd - gu[i]) <= atol * max(1.0, abs(fd))

    flat_w = params.weights.ravel()
    for i in range(0, flat_w.size, max(1, flat_w.size // 17)):
        orig = flat_w[i]
        flat_w[i] = orig + eps
        hi = scalar(u)
        flat_w[i] = orig - eps
        lo = scalar(u)
        flat_w[i] = orig
        fd = (hi - lo) / (2 * eps)
        assert abs(fd - gw.ravel()[i]) <= atol * max(1.0, abs(fd))

    for i in range(len(params.bias)):
        orig = params.bias[i]
        params.bias[i] = orig + eps
        hi = scalar(u)
        params.bias[i] = orig - eps
        lo = scalar(u)
        params.bias[i] = orig
        fd = (hi - lo) / (2 * eps)
        assert abs(fd - gb[i]) <= atol * max(1.0, abs(fd))


def test_dense_vjp_matches_finite_differences():
    rng = np.random.default_rng(11)
    params = dense_params(rng.normal(0, 0.5, (4, 4)), rng.normal(size=4), "tanh")
    _vjp_vs_fd(params, rng.normal(size=4), seed=12)


def test_conv2d_vjp_matches_finite_differences():
    rng = np.random.default_rng(13)
    params = conv2d_params(rng.normal(0, 0.3, (3, 3, 2, 2)), rng.normal(size=2), "tanh", 4, 4)
    _vjp_vs_fd(params, rng.normal(size=32), seed=14)
