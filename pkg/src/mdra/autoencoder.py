"""Recurrent autoencoder with one shared encoder and K decoders.

Cell update (encoder and decoders)::

    z_t = V h_{t-1} + U x_t + b,    h_t = modrelu(z_t)

with ``V`` unitary and ``h`` complex.  The encoder starts from ``h_0 = 0`` and
returns its final state.  Each decoder rolls out autonomously from that
state: frame ``t`` is read out from ``h_{t-1}`` and fed back as the input of
the next cell update, so no ground truth is consumed at generation time.

By default the rollout is matched against the signal read backwards, i.e. a
decoder emits the last frame first.  The code then only has to describe the
end of the signal, which it saw most recently, and the reconstruction does not
depend on the phase the encoder accumulated over the signal's length.  Public
outputs (:func:`decode`, :func:`reconstruct`) are always returned in signal
order; ``ModelParams.reverse`` switches to forward matching.

All batch routines work on padded arrays with a boolean step mask.  The
encoder freezes a signal's state once its mask runs out, and decoder errors
past a signal's length are masked out, so every per-signal quantity equals
what an unpadded run of that signal would give.  The K decoders are stacked
along a leading axis and stepped together.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, InvalidResponsibilitiesError, ShapeError
from .unitary import (
    UnitaryParams,
    build_unitary_params,
    unitary_backward,
    unitary_matrix,
)

MODEL_VERSION = 1


@dataclass
class TimeSeries:
    """One signal: ``values`` is a ``(T, D)`` float array."""

    values: np.ndarray
    id: int = 0
    label: object = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise ShapeError(f"time series must be (T, D) with T, D >= 1, got {v.shape}")
        self.values = v

    @property
    def T(self):
        return self.values.shape[0]

    @property
    def D(self):
        return self.values.shape[1]

    @property
    def size(self):
        """Total scalar dimension ``T * D``."""
        return self.values.size


# --------------------------------------------------------------------------
# parameters
# --------------------------------------------------------------------------


@dataclass
class EncoderParams:
    V: UnitaryParams
    U: np.ndarray  # (L, D) complex
    b: np.ndarray  # (L,) complex
    modrelu_bias: np.ndarray  # (L,) real


@dataclass
class DecoderParams:
    V: UnitaryParams
    U: np.ndarray  # (L, D) complex
    b: np.ndarray  # (L,) complex
    modrelu_bias: np.ndarray  # (L,) real
    readout_W: np.ndarray  # (D, 2L) real, acts on [Re h, Im h]
    readout_c: np.ndarray  # (D,) real


def _cplx_to_list(a):
    a = np.asarray(a, dtype=np.complex128).ravel()
    return np.stack([a.real, a.imag], axis=-1).tolist()


def _cplx_from_list(lst, shape):
    arr = np.asarray(lst, dtype=np.float64).reshape(-1, 2)
    return (arr[:, 0] + 1j * arr[:, 1]).reshape(shape)


def _cell_to_vector(p):
    return [
        p.V.to_vector(),
        p.U.real.ravel(),
        p.U.imag.ravel(),
        p.b.real,
        p.b.imag,
        p.modrelu_bias,
    ]


@dataclass
class ModelParams:
    """Full trainable state: encoder plus ``K`` decoders sharing ``(L, D)``.

    The same structure doubles as the gradient record returned by
    :func:`loss_gradients`; there the angle fields hold partial derivatives
    and complex fields hold ``d/dRe + 1j d/dIm``.
    """

    encoder: EncoderParams
    decoders: list = field(default_factory=list)
    reverse: bool = True

    @property
    def L(self):
        return self.encoder.V.L

    @property
    def D(self):
        return self.encoder.U.shape[1]

    @property
    def K(self):
        return len(self.decoders)

    def to_vector(self):
        """Flatten into one real vector (complex entries split re/im)."""
        parts = _cell_to_vector(self.encoder)
        for dec in self.decoders:
            parts += _cell_to_vector(dec)
            parts += [dec.readout_W.ravel(), dec.readout_c]
        return np.concatenate(parts)

    def with_vector(self, vec):
        """Inverse of :meth:`to_vector` using ``self`` as the shape template."""
        vec = np.asarray(vec, dtype=np.float64)
        L, D = self.L, self.D
        pos = 0

        def take(n):
            nonlocal pos
            out = vec[pos : pos + n]
            pos += n
            return out

        def cell(tmpl):
            V = tmpl.V.with_vector(take(tmpl.V.n_angles))
            U = (take(L * D) + 1j * take(L * D)).reshape(L, D)
            b = take(L) + 1j * take(L)
            return V, U, b, take(L).copy()

        enc = EncoderParams(*cell(self.encoder))
        decs = []
        for tmpl in self.decoders:
            V, U, b, mb = cell(tmpl)
            W = take(D * 2 * L).reshape(D, 2 * L).copy()
            c = take(D).copy()
            decs.append(DecoderParams(V, U, b, mb, W, c))
        if pos != vec.size:
            raise ShapeError(f"vector has {vec.size} entries, model needs {pos}")
        return ModelParams(enc, decs, self.reverse)

    def to_dict(self):
        def cell(p):
            return {
                "V": p.V.to_dict(),
                "U": _cplx_to_list(p.U),
                "b": _cplx_to_list(p.b),
                "modrelu_bias": p.modrelu_bias.tolist(),
            }

        decs = []
        for d in self.decoders:
            c = cell(d)
            c["readout_W"] = d.readout_W.ravel().tolist()
            c["readout_c"] = d.readout_c.tolist()
            decs.append(c)
        return {
            "version": MODEL_VERSION,
            "L": self.L,
            "D": self.D,
            "K": self.K,
            "reverse": bool(self.reverse),
            "encoder": cell(self.encoder),
            "decoders": decs,
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("version") != MODEL_VERSION:
            raise ValueError(f"unsupported model version {d.get('version')!r}")
        L, D = int(d["L"]), int(d["D"])

        def cell(c):
            return (
                UnitaryParams.from_dict(c["V"]),
                _cplx_from_list(c["U"], (L, D)),
                _cplx_from_list(c["b"], (L,)),
                np.asarray(c["modrelu_bias"], dtype=np.float64),
            )

        enc = EncoderParams(*cell(d["encoder"]))
        decs = [
            DecoderParams(
                *cell(c),
                np.asarray(c["readout_W"], dtype=np.float64).reshape(D, 2 * L),
                np.asarray(c["readout_c"], dtype=np.float64),
            )
            for c in d["decoders"]
        ]
        if len(decs) != int(d["K"]):
            raise ShapeError("K does not match number of decoders")
        return cls(enc, decs, bool(d.get("reverse", True)))


def init_model(L, D, K, capacity=8, fft_style=True, cpx=False, seed=0,
               input_scale=None, readout_scale=None, decoder_input_scale=0.0,
               reverse=True):
    """Random model with unitary angles in ``[-pi, pi)``.

    The encoder input matrix is complex with uniform real and imaginary parts
    in ``[-a, a]``, ``a = sqrt(6 / (L + D))`` unless ``input_scale`` is given;
    readouts use ``sqrt(6 / (2L + D))``.  Complex and modReLU biases start at
    zero.

    Decoder input matrices use ``decoder_input_scale`` (default 0).  The
    output-to-input feedback loop of an autonomous decoder has gain above one
    for typical random draws and rollouts then grow geometrically; started
    from zero, each decoder begins as a pure unitary rotation of the code.
    """
    rng = np.random.default_rng(seed)
    a_in = np.sqrt(6.0 / (L + D)) if input_scale is None else input_scale
    a_out = np.sqrt(6.0 / (2 * L + D)) if readout_scale is None else readout_scale

    def cell(scale):
        V = build_unitary_params(L, capacity, fft_style, int(rng.integers(2**63)), cpx)
        U = rng.uniform(-scale, scale, (L, D)) + 1j * rng.uniform(-scale, scale, (L, D))
        return V, U, np.zeros(L, dtype=np.complex128), np.zeros(L)

    enc = EncoderParams(*cell(a_in))
    decs = []
    for _ in range(K):
        V, U, b, mb = cell(decoder_input_scale)
        W = rng.uniform(-a_out, a_out, (D, 2 * L))
        decs.append(DecoderParams(V, U, b, mb, W, np.zeros(D)))
    return ModelParams(enc, decs, reverse)


# --------------------------------------------------------------------------
# activation
# --------------------------------------------------------------------------


def modrelu(z, bias):
    """Scale each ``|z|`` by ``relu(|z| + bias) / |z|``, keeping the phase."""
    r = np.abs(z)
    s = r + bias
    scale = np.divide(s, r, out=np.zeros_like(r), where=(r > 0) & (s > 0))
    return scale * z


def modrelu_backward(g, z, bias):
    """Return ``(grad_z, grad_bias)`` for upstream ``g`` (re/im convention).

    ``grad_bias`` keeps the shape of ``z``; callers sum over batch axes.
    """
    r = np.abs(z)
    active = (r > 0) & (r + bias > 0)
    safe_r = np.where(active, r, 1.0)
    u = np.where(active, z / safe_r, 0.0)
    gu = np.real(np.conj(g) * u)
    k = np.where(active, (r + bias) / safe_r, 0.0)
    gz = k * g - np.where(active, bias / safe_r, 0.0) * gu * u
    return gz, gu


# --------------------------------------------------------------------------
# packing
# --------------------------------------------------------------------------


def pack(batch):
    """Pad a list of :class:`TimeSeries` to ``(N, Tmax, D)`` plus a step mask."""
    if len(batch) == 0:
        raise DataError("empty batch")
    D = batch[0].D
    T = max(x.T for x in batch)
    X = np.zeros((len(batch), T, D))
    mask = np.zeros((len(batch), T), dtype=bool)
    for n, x in enumerate(batch):
        if x.D != D:
            raise ShapeError(f"signal {x.id} has D={x.D}, expected {D}")
        if not np.all(np.isfinite(x.values)):
            raise DataError(f"signal {x.id} contains non-finite values")
        X[n, : x.T] = x.values
        mask[n, : x.T] = True
    return X, mask


def _stack(decoders):
    return {
        "V": np.stack([unitary_matrix(d.V) for d in decoders]),
        "U": np.stack([d.U for d in decoders]),
        "b": np.stack([d.b for d in decoders]),
        "mb": np.stack([d.modrelu_bias for d in decoders]),
        "W": np.stack([d.readout_W for d in decoders]),
        "c": np.stack([d.readout_c for d in decoders]),
    }


# --------------------------------------------------------------------------
# forward
# --------------------------------------------------------------------------


def _encode_forward(enc, X, mask, V=None):
    if V is None:
        V = unitary_matrix(enc.V)
    N, T, _ = X.shape
    h = np.zeros((N, enc.V.L), dtype=np.complex128)
    Vt, Ut = V.T, enc.U.T
    hs, zs = [], []
    for t in range(T):
        z = h @ Vt + X[:, t] @ Ut + enc.b
        hs.append(h)
        zs.append(z)
        m = mask[:, t, None]
        h = np.where(m, modrelu(z, enc.modrelu_bias), h)
    return h, (V, hs, zs)


def _readout(S, h):
    L = h.shape[-1]
    W = S["W"]
    return (
        np.matmul(h.real, W[:, :, :L].transpose(0, 2, 1))
        + np.matmul(h.imag, W[:, :, L:].transpose(0, 2, 1))
        + S["c"][:, None, :]
    )


def _decode_forward(S, h0, T):
    """Roll out ``T`` frames from ``h0`` (N, L) for every stacked decoder."""
    K = S["V"].shape[0]
    h = np.broadcast_to(h0, (K,) + h0.shape).astype(np.complex128)
    Vt = S["V"].transpose(0, 2, 1)
    Ut = S["U"].transpose(0, 2, 1)
    hs, zs, xs = [], [], []
    for t in range(T):
        x = _readout(S, h)
        hs.append(h)
        xs.append(x)
        if t < T - 1:
            z = np.matmul(h, Vt) + np.matmul(x, Ut) + S["b"][:, None, :]
            zs.append(z)
            h = modrelu(z, S["mb"][:, None, :])
    Xhat = np.stack(xs, axis=2)  # (K, N, T, D)
    return Xhat, (hs, zs, xs)


def encode_batch(enc, X, mask):
    h, _ = _encode_forward(enc, X, mask)
    return h


def encode(enc: EncoderParams, x: TimeSeries) -> np.ndarray:
    """Final encoder state ``h_T`` (length-L complex) for one signal."""
    if x.D != enc.U.shape[1]:
        raise ShapeError(f"signal has D={x.D}, encoder expects {enc.U.shape[1]}")
    X, mask = pack([x])
    return encode_batch(enc, X, mask)[0]


def _flip(X, mask):
    """Reverse each signal's valid steps along the time axis (-2); padding stays 0."""
    T = mask.shape[1]
    lengths = mask.sum(axis=1)
    src = lengths[:, None] - 1 - np.arange(T)[None, :]
    src = np.where(mask, src, 0)
    rows = np.arange(mask.shape[0])[:, None]
    return X[..., rows, src, :] * mask[..., None]


def decode(dec: DecoderParams, h, T: int, reverse=True) -> TimeSeries:
    """Autonomous rollout of ``T`` frames starting from state ``h``.

    With ``reverse`` the rollout produces the last frame first; the result is
    flipped so that it lines up with the signal either way.
    """
    if T < 1:
        raise ShapeError(f"T must be >= 1, got {T}")
    h = np.asarray(h, dtype=np.complex128)
    if h.shape != (dec.V.L,):
        raise ShapeError(f"h must have shape ({dec.V.L},), got {h.shape}")
    Xhat, _ = _decode_forward(_stack([dec]), h[None, :], T)
    out = Xhat[0, 0]
    return TimeSeries(out[::-1].copy() if reverse else out)


def reconstruct(model: ModelParams, batch):
    """Decoded signals ``(K, N, Tmax, D)`` in signal order, with the step mask."""
    X, mask = pack(batch)
    h = encode_batch(model.encoder, X, mask)
    Xhat, _ = _decode_forward(_stack(model.decoders), h, X.shape[1])
    if model.reverse:
        Xhat = _flip(Xhat, mask)
    return Xhat, mask


def reconstruction_error(x, x_dec) -> float:
    """Squared Frobenius norm of ``x - x_dec``."""
    a = x.values if isinstance(x, TimeSeries) else np.asarray(x, dtype=np.float64)
    b = x_dec.values if isinstance(x_dec, TimeSeries) else np.asarray(x_dec, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch {a.shape} vs {b.shape}")
    d = a - b
    return float(np.sum(d * d))


def _targets(model, X, mask):
    """What the rollout is matched against, in generation order."""
    return _flip(X, mask) if model.reverse else X


def _errors_from(X, mask, Xhat):
    diff = (Xhat - X[None]) * mask[None, :, :, None]
    return np.einsum("kntd,kntd->nk", diff, diff), diff


def error_matrix(model: ModelParams, batch) -> np.ndarray:
    """``E[n, k] = ||X^n - g_k(h_n)||_F^2`` for every signal and decoder."""
    X, mask = pack(batch)
    h = encode_batch(model.encoder, X, mask)
    Xhat, _ = _decode_forward(_stack(model.decoders), h, X.shape[1])
    E, _ = _errors_from(_targets(model, X, mask), mask, Xhat)
    return E


def check_responsibilities(R, N, K, tol=1e-9):
    R = np.asarray(R, dtype=np.float64)
    if R.shape != (N, K):
        raise InvalidResponsibilitiesError(f"R has shape {R.shape}, expected {(N, K)}")
    if not np.all(np.isfinite(R)) or np.any(R < 0):
        raise InvalidResponsibilitiesError("R must be finite and nonnegative")
    bad = np.abs(R.sum(axis=1) - 1.0) > tol
    if np.any(bad):
        raise InvalidResponsibilitiesError(
            f"rows {np.flatnonzero(bad).tolist()} of R do not sum to 1"
        )
    return R


def weighted_loss(model: ModelParams, batch, R) -> float:
    """``sum_n sum_k R[n, k] * ||X^n - g_k(h_n)||_F^2``."""
    R = check_responsibilities(R, len(batch), model.K)
    return float(np.sum(R * error_matrix(model, batch)))


# --------------------------------------------------------------------------
# backward
# --------------------------------------------------------------------------


def _unitary_grad(p, G):
    """Angle gradient from ``G = dloss/dV`` (dense, re/im convention)."""
    eye = np.eye(p.L, dtype=np.complex128)
    return unitary_backward(p, eye, G.T)[0]


def loss_and_gradients(model: ModelParams, batch, R, check=True):
    """Weighted loss, per-pair error matrix and the gradient record.

    Returns
    -------
    loss : float
    E : ndarray, shape (N, K)
    grad : ModelParams
    """
    X, mask = pack(batch)
    N, T, D = X.shape
    L, K = model.L, model.K
    if check:
        R = check_responsibilities(R, N, K)
    enc = model.encoder
    h_enc, (Venc, enc_hs, enc_zs) = _encode_forward(enc, X, mask)
    S = _stack(model.decoders)
    Xhat, (hs, zs, xs) = _decode_forward(S, h_enc, T)
    E, diff = _errors_from(_targets(model, X, mask), mask, Xhat)
    loss = float(np.sum(R * E))

    # decoders, stepped backwards together
    coef = 2.0 * R.T[:, :, None, None] * diff  # (K, N, T, D)
    V, U, mb = S["V"], S["U"], S["mb"][:, None, :]
    Vc, Uc = np.conj(V), np.conj(U)
    Wr, Wi = S["W"][:, :, :L], S["W"][:, :, L:]
    gV = np.zeros((K, L, L), dtype=np.complex128)
    gU = np.zeros((K, L, D), dtype=np.complex128)
    gb = np.zeros((K, L), dtype=np.complex128)
    gmb = np.zeros((K, L))
    gW = np.zeros((K, D, 2 * L))
    gc = np.zeros((K, D))
    g_next = None
    for t in reversed(range(T)):
        gx = coef[:, :, t, :].copy()
        h = hs[t]
        if t < T - 1:
            gz, gbias = modrelu_backward(g_next, zs[t], mb)
            gV += np.matmul(gz.transpose(0, 2, 1), np.conj(h))
            gU += np.matmul(gz.transpose(0, 2, 1), xs[t])
            gb += gz.sum(axis=1)
            gmb += gbias.sum(axis=1)
            gx += np.real(np.matmul(gz, Uc))
            gh = np.matmul(gz, Vc)
        else:
            gh = np.zeros_like(h)
        gW[:, :, :L] += np.matmul(gx.transpose(0, 2, 1), h.real)
        gW[:, :, L:] += np.matmul(gx.transpose(0, 2, 1), h.imag)
        gc += gx.sum(axis=1)
        gh = gh + np.matmul(gx, Wr) + 1j * np.matmul(gx, Wi)
        g_next = gh
    g_h = g_next.sum(axis=0)  # (N, L): gradient of the shared code

    # encoder
    eVt = np.conj(Venc)
    egV = np.zeros((L, L), dtype=np.complex128)
    egU = np.zeros((L, D), dtype=np.complex128)
    egb = np.zeros(L, dtype=np.complex128)
    egmb = np.zeros(L)
    for t in reversed(range(T)):
        m = mask[:, t, None]
        gz, gbias = modrelu_backward(np.where(m, g_h, 0.0), enc_zs[t], enc.modrelu_bias)
        egV += gz.T @ np.conj(enc_hs[t])
        egU += gz.T @ X[:, t]
        egb += gz.sum(axis=0)
        egmb += gbias.sum(axis=0)
        g_h = gz @ eVt + np.where(m, 0.0, g_h)

    grad_enc = EncoderParams(
        enc.V.with_vector(_unitary_grad(enc.V, egV)), egU, egb, egmb
    )
    grad_decs = [
        DecoderParams(
            d.V.with_vector(_unitary_grad(d.V, gV[k])), gU[k], gb[k], gmb[k], gW[k], gc[k]
        )
        for k, d in enumerate(model.decoders)
    ]
    return loss, E, ModelParams(grad_enc, grad_decs, model.reverse)


def loss_gradients(model: ModelParams, batch, R) -> ModelParams:
    """Exact gradients of :func:`weighted_loss` with respect to every parameter."""
    return loss_and_gradients(model, batch, R)[2]
