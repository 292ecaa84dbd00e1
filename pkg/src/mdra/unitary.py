"""Factorized unitary transition matrices.

A transition matrix ``V`` is stored as a product of sparse layers::

    V = diag(exp(i * phase_angles)) @ R_{n-1} @ ... @ R_1 @ R_0

Each rotation layer ``R_j`` acts on disjoint coordinate pairs ``(a, b)`` with
a real planar rotation::

    out_a = cos(t) * a - sin(t) * b
    out_b = sin(t) * a + cos(t) * b

so an angle of ``pi/2`` sends ``(1, 0)`` to ``(0, 1)``.  With ``cpx=True`` the
first output of every block is additionally multiplied by ``exp(i * phi)``.

Two pairings are available:

* tunable style: even layers pair ``(0,1), (2,3), ...``; odd layers pair
  ``(1,2), (3,4), ...`` and, for even ``L``, close the cycle with ``(L-1, 0)``.
* fft style: layer ``j`` pairs ``i`` with ``i + 2**j`` (butterfly); for ``L``
  that is not a power of two the coordinates left without a partner are
  paired among themselves in index order.  ``ceil(log2 L)`` layers are used
  and ``capacity`` is ignored.

Every layer holds ``L // 2`` pairs; for odd ``L`` one coordinate is left
untouched by each rotation layer.

Gradients use the real-decomposition convention: for a real loss ``f`` and a
complex quantity ``w`` the gradient is ``df/dRe(w) + 1j * df/dIm(w)``.  Under
this convention the gradient through ``y = V v`` is ``V^H g``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import ConfigurationError, ShapeError


def _tunable_pairs(L, n_layers):
    half = L // 2
    even = [(2 * i, 2 * i + 1) for i in range(half)]
    odd = [(2 * i + 1, 2 * i + 2) for i in range((L - 1) // 2)]
    if L % 2 == 0 and L > 2:
        odd.append((L - 1, 0))
    elif L == 2:
        odd = even
    return [even if j % 2 == 0 else odd for j in range(n_layers)]


def _fft_pairs(L, n_layers):
    layers = []
    for j in range(n_layers):
        stride = 1 << j
        pairs, used = [], set()
        for i in range(L):
            if (i // stride) % 2 == 0 and i + stride < L:
                pairs.append((i, i + stride))
                used.update((i, i + stride))
        rest = [i for i in range(L) if i not in used]
        pairs.extend(zip(rest[0::2], rest[1::2]))
        layers.append(sorted(pairs))
    return layers


def layer_pairs(L, n_layers, fft_style):
    """Index arrays ``(a, b)`` for each rotation layer."""
    raw = _fft_pairs(L, n_layers) if fft_style else _tunable_pairs(L, n_layers)
    out = []
    for pairs in raw:
        a = np.array([p[0] for p in pairs], dtype=np.intp)
        b = np.array([p[1] for p in pairs], dtype=np.intp)
        out.append((a, b))
    return out


def n_rotation_layers(L, capacity, fft_style):
    if fft_style:
        return max(1, math.ceil(math.log2(L)))
    return capacity


@dataclass(frozen=True, eq=False)
class UnitaryParams:
    """Angles defining an ``L x L`` unitary matrix.

    ``rotation_angles`` has shape ``(n_layers, L // 2)``, ``phase_angles``
    has shape ``(L,)`` and ``block_phases`` matches ``rotation_angles`` when
    ``cpx`` is set (it is empty otherwise).
    """

    L: int
    capacity: int
    fft_style: bool
    rotation_angles: np.ndarray
    phase_angles: np.ndarray
    cpx: bool = False
    block_phases: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))

    def __post_init__(self):
        if self.L < 2:
            raise ConfigurationError(f"L must be >= 2, got {self.L}")
        if self.capacity < 1:
            raise ConfigurationError(f"capacity must be >= 1, got {self.capacity}")
        shape = (self.n_layers, self.L // 2)
        rot = np.asarray(self.rotation_angles, dtype=np.float64).reshape(shape)
        ph = np.asarray(self.phase_angles, dtype=np.float64).reshape(self.L)
        if self.cpx:
            blk = np.asarray(self.block_phases, dtype=np.float64).reshape(shape)
        else:
            blk = np.zeros((0, 0))
        object.__setattr__(self, "rotation_angles", rot)
        object.__setattr__(self, "phase_angles", ph)
        object.__setattr__(self, "block_phases", blk)

    @property
    def n_layers(self):
        return n_rotation_layers(self.L, self.capacity, self.fft_style)

    @cached_property
    def pairs(self):
        return layer_pairs(self.L, self.n_layers, self.fft_style)

    @property
    def n_angles(self):
        return self.rotation_angles.size + self.block_phases.size + self.L

    def to_vector(self):
        """Flat angle vector: rotations, block phases (if any), phases."""
        return np.concatenate(
            [self.rotation_angles.ravel(), self.block_phases.ravel(), self.phase_angles]
        )

    def with_vector(self, vec):
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (self.n_angles,):
            raise ShapeError(f"expected {self.n_angles} angles, got shape {vec.shape}")
        nr = self.rotation_angles.size
        nb = self.block_phases.size
        return UnitaryParams(
            L=self.L,
            capacity=self.capacity,
            fft_style=self.fft_style,
            cpx=self.cpx,
            rotation_angles=vec[:nr],
            block_phases=vec[nr : nr + nb] if self.cpx else np.zeros((0, 0)),
            phase_angles=vec[nr + nb :],
        )

    def to_dict(self):
        d = {
            "L": self.L,
            "capacity": self.capacity,
            "fft_style": self.fft_style,
            "cpx": self.cpx,
            "rotation_angles": self.rotation_angles.ravel().tolist(),
            "phase_angles": self.phase_angles.tolist(),
        }
        if self.cpx:
            d["block_phases"] = self.block_phases.ravel().tolist()
        return d

    @classmethod
    def from_dict(cls, d):
        cpx = bool(d.get("cpx", False))
        return cls(
            L=int(d["L"]),
            capacity=int(d["capacity"]),
            fft_style=bool(d["fft_style"]),
            cpx=cpx,
            rotation_angles=np.asarray(d["rotation_angles"], dtype=np.float64),
            phase_angles=np.asarray(d["phase_angles"], dtype=np.float64),
            block_phases=np.asarray(d.get("block_phases", []), dtype=np.float64)
            if cpx
            else np.zeros((0, 0)),
        )


def build_unitary_params(L, capacity, fft_style=False, rng_seed=0, cpx=False):
    """Draw random unitary parameters.

    All angles are sampled uniformly from ``[-pi, pi)`` using a generator
    seeded with ``rng_seed``.  With ``fft_style`` the number of rotation
    layers is ``ceil(log2 L)`` whatever ``capacity`` says.

    Raises
    ------
    ConfigurationError
        If ``L < 2`` or ``capacity < 1``.
    """
    if L < 2:
        raise ConfigurationError(f"L must be >= 2, got {L}")
    if capacity < 1:
        raise ConfigurationError(f"capacity must be >= 1, got {capacity}")
    rng = np.random.default_rng(rng_seed)
    shape = (n_rotation_layers(L, capacity, fft_style), L // 2)
    rot = rng.uniform(-np.pi, np.pi, size=shape)
    blk = rng.uniform(-np.pi, np.pi, size=shape) if cpx else np.zeros((0, 0))
    ph = rng.uniform(-np.pi, np.pi, size=L)
    return UnitaryParams(
        L=L,
        capacity=capacity,
        fft_style=fft_style,
        cpx=cpx,
        rotation_angles=rot,
        phase_angles=ph,
        block_phases=blk,
    )


def _check_vec(p, v):
    v = np.asarray(v)
    if v.ndim == 0 or v.shape[-1] != p.L:
        raise ShapeError(f"last axis must have length {p.L}, got shape {v.shape}")
    return v.astype(np.complex128, copy=True)


def _rotate(h, a, b, c, s):
    ha = h[..., a]
    hb = h[..., b]
    h[..., a] = c * ha - s * hb
    h[..., b] = s * ha + c * hb


def apply_unitary(p: UnitaryParams, v) -> np.ndarray:
    """Return ``V @ v`` along the last axis of ``v`` without forming ``V``."""
    h = _check_vec(p, v)
    for j, (a, b) in enumerate(p.pairs):
        t = p.rotation_angles[j]
        _rotate(h, a, b, np.cos(t), np.sin(t))
        if p.cpx:
            h[..., a] *= np.exp(1j * p.block_phases[j])
    h *= np.exp(1j * p.phase_angles)
    return h


def apply_unitary_adjoint(p: UnitaryParams, v) -> np.ndarray:
    """Return ``V^H @ v``: conjugated phases, layers reversed, angles negated."""
    h = _check_vec(p, v)
    h *= np.exp(-1j * p.phase_angles)
    for j in reversed(range(p.n_layers)):
        a, b = p.pairs[j]
        if p.cpx:
            h[..., a] *= np.exp(-1j * p.block_phases[j])
        t = p.rotation_angles[j]
        _rotate(h, a, b, np.cos(t), -np.sin(t))
    return h


def unitary_matrix(p: UnitaryParams) -> np.ndarray:
    """Dense ``L x L`` matrix, built by pushing identity rows through the layers."""
    return apply_unitary(p, np.eye(p.L, dtype=np.complex128)).T


def unitary_backward(p: UnitaryParams, v, upstream_grad):
    """Gradients of a real loss through ``y = V v``.

    Parameters
    ----------
    p : UnitaryParams
    v : array_like, shape (..., L)
        Input vectors (complex).  Leading axes are treated as a batch.
    upstream_grad : array_like, shape (..., L)
        ``dloss/dRe(y) + 1j * dloss/dIm(y)``.

    Returns
    -------
    grad_angles : ndarray, shape (p.n_angles,)
        Partials with respect to ``p.to_vector()``, summed over the batch.
    grad_v : ndarray, shape (..., L)
        Gradient with respect to ``v`` in the same convention, i.e. ``V^H g``.
    """
    h = _check_vec(p, v)
    g = _check_vec(p, upstream_grad)
    if g.shape != h.shape:
        raise ShapeError(f"upstream_grad shape {g.shape} != v shape {h.shape}")
    batch_axes = tuple(range(h.ndim - 1))

    # forward pass, keeping each rotation layer's input
    inputs = []
    for j, (a, b) in enumerate(p.pairs):
        inputs.append(h[..., np.concatenate([a, b])].copy())
        t = p.rotation_angles[j]
        _rotate(h, a, b, np.cos(t), np.sin(t))
        if p.cpx:
            h[..., a] *= np.exp(1j * p.block_phases[j])
    y = h * np.exp(1j * p.phase_angles)

    g_phase = -np.imag(np.conj(g) * y).sum(axis=batch_axes)
    g = g * np.exp(-1j * p.phase_angles)

    n_layers, half = p.rotation_angles.shape
    g_rot = np.zeros((n_layers, half))
    g_blk = np.zeros((n_layers, half)) if p.cpx else np.zeros((0, 0))
    for j in reversed(range(n_layers)):
        a, b = p.pairs[j]
        k = len(a)
        xa, xb = inputs[j][..., :k], inputs[j][..., k:]
        t = p.rotation_angles[j]
        c, s = np.cos(t), np.sin(t)
        ua = c * xa - s * xb
        ub = s * xa + c * xb
        ga = g[..., a]
        gb = g[..., b]
        if p.cpx:
            e = np.exp(1j * p.block_phases[j])
            g_blk[j] = -np.imag(np.conj(ga) * (e * ua)).sum(axis=batch_axes)
            ga = ga * np.conj(e)
        g_rot[j] = np.real(np.conj(ga) * (-ub) + np.conj(gb) * ua).sum(axis=batch_axes)
        g[..., a] = c * ga + s * gb
        g[..., b] = -s * ga + c * gb

    grad_angles = np.concatenate([g_rot.ravel(), g_blk.ravel(), g_phase])
    return grad_angles, g
