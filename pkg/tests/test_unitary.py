import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mdra.errors import ConfigurationError, ShapeError
from mdra.unitary import (
    UnitaryParams,
    apply_unitary,
    apply_unitary_adjoint,
    build_unitary_params,
    unitary_backward,
    unitary_matrix,
)


def random_complex(rng, *shape):
    return rng.normal(size=shape) + 1j * rng.normal(size=shape)


def zero_params(L, capacity=1, fft_style=False, cpx=False):
    p = build_unitary_params(L, capacity, fft_style, 0, cpx)
    return p.with_vector(np.zeros(p.n_angles))


def fd_angle_grad(p, v, g, step=1e-5):
    """Central differences of Re<g, V(angles) v> with respect to every angle."""
    theta = p.to_vector()
    out = np.zeros_like(theta)
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e[i] = step
        fp = np.real(np.vdot(g, apply_unitary(p.with_vector(theta + e), v)))
        fm = np.real(np.vdot(g, apply_unitary(p.with_vector(theta - e), v)))
        out[i] = (fp - fm) / (2 * step)
    return out


def rel_err(a, b, floor=1e-6):
    return np.abs(a - b) / np.maximum(np.abs(b), floor)


class TestBuild:
    def test_tunable_counts(self):
        p = build_unitary_params(4, 8, fft_style=False, rng_seed=7)
        assert p.rotation_angles.shape == (8, 2)
        assert p.phase_angles.shape == (4,)
        assert p.to_vector().size == 8 * 2 + 4

    def test_smallest_configuration(self):
        for fft in (False, True):
            p = build_unitary_params(2, 1, fft, 0)
            assert p.rotation_angles.size == 1
            assert p.phase_angles.size == 2

    def test_fft_ignores_capacity(self):
        for L, layers in [(2, 1), (4, 2), (5, 3), (8, 3), (16, 4)]:
            p = build_unitary_params(L, 8, fft_style=True, rng_seed=1)
            assert p.rotation_angles.shape == (layers, L // 2)

    def test_angles_in_range(self):
        p = build_unitary_params(8, 20, False, 3, cpx=True)
        v = p.to_vector()
        assert np.all(v >= -np.pi) and np.all(v < np.pi)

    def test_deterministic(self):
        a = build_unitary_params(6, 4, False, 11).to_vector()
        b = build_unitary_params(6, 4, False, 11).to_vector()
        assert a.tobytes() == b.tobytes()
        c = build_unitary_params(6, 4, False, 12).to_vector()
        assert not np.array_equal(a, c)

    @pytest.mark.parametrize("L,capacity", [(1, 1), (0, 3), (4, 0), (4, -1)])
    def test_invalid(self, L, capacity):
        with pytest.raises(ConfigurationError):
            build_unitary_params(L, capacity)

    @pytest.mark.parametrize("L", [2, 3, 4, 5, 6, 7, 8, 16])
    @pytest.mark.parametrize("fft", [False, True])
    def test_every_layer_is_a_disjoint_pairing(self, L, fft):
        p = build_unitary_params(L, 4, fft, 0)
        for a, b in p.pairs:
            idx = np.concatenate([a, b])
            assert len(a) == L // 2
            assert len(set(idx.tolist())) == idx.size

    def test_json_roundtrip(self):
        for cpx in (False, True):
            p = build_unitary_params(5, 3, False, 2, cpx=cpx)
            d = json.loads(json.dumps(p.to_dict()))
            assert set(d) >= {"L", "capacity", "fft_style", "cpx", "rotation_angles", "phase_angles"}
            q = UnitaryParams.from_dict(d)
            assert np.array_equal(q.to_vector(), p.to_vector())
            assert (q.L, q.capacity, q.fft_style, q.cpx) == (5, 3, False, cpx)


class TestApply:
    def test_zero_angles_identity(self):
        rng = np.random.default_rng(0)
        for fft in (False, True):
            p = zero_params(6, 3, fft)
            v = random_complex(rng, 6)
            np.testing.assert_array_equal(apply_unitary(p, v), v)

    def test_quarter_turn_by_hand(self):
        # [[cos, -sin], [sin, cos]] at pi/2 maps (1, 0) -> (0, 1)
        p = zero_params(2).with_vector(np.array([np.pi / 2, 0.0, 0.0]))
        out = apply_unitary(p, np.array([1.0, 0.0]))
        np.testing.assert_allclose(out, [0.0, 1.0], atol=1e-15)

    def test_matches_dense_matrix(self):
        rng = np.random.default_rng(1)
        p = build_unitary_params(7, 5, False, 4, cpx=True)
        v = random_complex(rng, 3, 7)
        np.testing.assert_allclose(apply_unitary(p, v), v @ unitary_matrix(p).T, atol=1e-13)

    @pytest.mark.parametrize("L", [2, 3, 4, 8, 16])
    @pytest.mark.parametrize("fft", [False, True])
    @pytest.mark.parametrize("cpx", [False, True])
    def test_dense_matrix_is_unitary(self, L, fft, cpx):
        V = unitary_matrix(build_unitary_params(L, 6, fft, L, cpx))
        np.testing.assert_allclose(V.conj().T @ V, np.eye(L), atol=1e-12)

    def test_norm_preserved_random_L8(self):
        rng = np.random.default_rng(2)
        p = build_unitary_params(8, 8, False, 5)
        v = random_complex(rng, 8)
        assert abs(np.linalg.norm(apply_unitary(p, v)) - np.sqrt(np.sum(np.abs(v) ** 2))) <= 1e-10

    def test_shape_error(self):
        p = build_unitary_params(4, 2)
        with pytest.raises(ShapeError):
            apply_unitary(p, np.zeros(3))
        with pytest.raises(ShapeError):
            unitary_backward(p, np.zeros(4), np.zeros(5))

    def test_input_not_modified(self):
        p = build_unitary_params(4, 2, False, 1)
        v = np.arange(4, dtype=np.complex128)
        apply_unitary(p, v)
        np.testing.assert_array_equal(v, np.arange(4))


@settings(max_examples=60, deadline=None)
@given(
    L=st.integers(2, 12),
    capacity=st.integers(1, 10),
    fft=st.booleans(),
    cpx=st.booleans(),
    seed=st.integers(0, 2**32 - 1),
)
def test_norm_preservation_property(L, capacity, fft, cpx, seed):
    rng = np.random.default_rng(seed)
    p = build_unitary_params(L, capacity, fft, seed, cpx)
    v = random_complex(rng, 4, L) * rng.uniform(0.01, 100)
    out = apply_unitary(p, v)
    np.testing.assert_allclose(
        np.linalg.norm(out, axis=-1), np.linalg.norm(v, axis=-1), rtol=0, atol=1e-10 * max(1.0, np.abs(v).max())
    )


@settings(max_examples=60, deadline=None)
@given(L=st.integers(2, 12), capacity=st.integers(1, 6), fft=st.booleans(), cpx=st.booleans(),
       seed=st.integers(0, 2**32 - 1))
def test_adjoint_composition_property(L, capacity, fft, cpx, seed):
    rng = np.random.default_rng(seed)
    p = build_unitary_params(L, capacity, fft, seed, cpx)
    v = random_complex(rng, L)
    np.testing.assert_allclose(apply_unitary_adjoint(p, apply_unitary(p, v)), v, atol=1e-10)
    np.testing.assert_allclose(apply_unitary(p, apply_unitary_adjoint(p, v)), v, atol=1e-10)


class TestBackward:
    def test_zero_upstream(self):
        rng = np.random.default_rng(3)
        p = build_unitary_params(6, 4, False, 1, cpx=True)
        ga, gv = unitary_backward(p, random_complex(rng, 6), np.zeros(6, dtype=complex))
        assert np.all(ga == 0) and np.all(gv == 0)

    def test_identity_params_pass_gradient_through(self):
        rng = np.random.default_rng(4)
        p = zero_params(5, 3)
        g = random_complex(rng, 5)
        _, gv = unitary_backward(p, random_complex(rng, 5), g)
        np.testing.assert_allclose(gv, g, atol=1e-15)

    def test_grad_v_is_adjoint_product(self):
        rng = np.random.default_rng(5)
        p = build_unitary_params(6, 3, True, 2, cpx=True)
        g = random_complex(rng, 2, 6)
        _, gv = unitary_backward(p, random_complex(rng, 2, 6), g)
        np.testing.assert_allclose(gv, apply_unitary_adjoint(p, g), atol=1e-13)

    def test_single_angle_L2_finite_differences(self):
        rng = np.random.default_rng(6)
        p = zero_params(2).with_vector(np.array([0.7, 0.0, 0.0]))
        v, g = random_complex(rng, 2), random_complex(rng, 2)
        ga, _ = unitary_backward(p, v, g)
        fd = fd_angle_grad(p, v, g)
        assert rel_err(ga[0], fd[0]) < 1e-6

    def test_batch_gradients_are_summed(self):
        rng = np.random.default_rng(7)
        p = build_unitary_params(4, 3, False, 3)
        v, g = random_complex(rng, 3, 4), random_complex(rng, 3, 4)
        total, _ = unitary_backward(p, v, g)
        parts = sum(unitary_backward(p, v[i], g[i])[0] for i in range(3))
        np.testing.assert_allclose(total, parts, atol=1e-12)


def test_gradient_correctness_random_triples():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for i in range(100):
        L = (2, 4, 8)[i % 3]
        p = build_unitary_params(L, int(rng.integers(1, 5)), bool(i % 2), i, cpx=bool(i % 5 == 0))
        v, g = random_complex(rng, L), random_complex(rng, L)
        ga, _ = unitary_backward(p, v, g)
        worst = max(worst, rel_err(ga, fd_angle_grad(p, v, g)).max())
    assert worst <= 1e-4
