"""Alternating optimisation of network weights and VB allocations.

Each outer iteration runs a few epochs of minibatch gradient descent on the
responsibility-weighted reconstruction loss, recomputes every signal's
reconstruction error under the updated network, then runs the VB
E/M loop starting from the previous responsibilities.  Training stops when
the free energy changes by less than the threshold or after
``max_outer_iters`` iterations.
"""

from __future__ import annotations

import dataclasses
import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .autoencoder import (
    ModelParams,
    encode_batch,
    error_matrix,
    init_model,
    loss_and_gradients,
    pack,
)
from .errors import ConfigurationError, DivergenceError
from .vb import (
    ErrorMatrix,
    Hyperparams,
    VBState,
    m_step_state,
    run_vb,
    uniform_responsibilities,
    variational_free_energy,
)

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1


@dataclass
class OptimizerConfig:
    method: str = "adam"  # "adam" or "sgd"
    learning_rate: float = 1e-3
    epochs_per_outer: int = 20
    batch_size: int = 32
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip_norm: float | None = None

    def __post_init__(self):
        if self.method not in ("adam", "sgd"):
            raise ConfigurationError(f"unknown optimizer {self.method!r}")
        if self.learning_rate < 0:
            raise ConfigurationError("learning_rate must be >= 0")
        if self.epochs_per_outer < 0 or self.batch_size < 1:
            raise ConfigurationError("epochs_per_outer >= 0 and batch_size >= 1 required")


@dataclass
class TrainConfig:
    hyper: Hyperparams
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    L: int = 4
    capacity: int = 8
    fft_style: bool = True
    cpx: bool = False
    reverse: bool = True  # decoders emit the last frame first
    vb_iters: int = 5
    free_energy_threshold: float = 1e-3
    relative_threshold: bool = True
    max_outer_iters: int = 100
    rng_seed: int = 0

    def __post_init__(self):
        if self.vb_iters < 0 or self.max_outer_iters < 1:
            raise ConfigurationError("vb_iters >= 0 and max_outer_iters >= 1 required")
        if not self.free_energy_threshold > 0:
            raise ConfigurationError("free_energy_threshold must be positive")

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["hyper"] = Hyperparams(**d["hyper"])
        d["optimizer"] = OptimizerConfig(**d.get("optimizer", {}))
        return cls(**d)


@dataclass
class TrainedModel:
    model: ModelParams
    vb: VBState
    config: TrainConfig
    trace: list = field(default_factory=list)

    def to_dict(self):
        return {
            "version": CHECKPOINT_VERSION,
            "config": self.config.to_dict(),
            "model": self.model.to_dict(),
            "vb": self.vb.to_dict(),
            "trace": self.trace,
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {d.get('version')!r}")
        return cls(
            model=ModelParams.from_dict(d["model"]),
            vb=VBState.from_dict(d["vb"]),
            config=TrainConfig.from_dict(d["config"]),
            trace=list(d["trace"]),
        )

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


class Adam:
    """Adaptive-moment update on a flat parameter vector."""

    def __init__(self, size, cfg: OptimizerConfig):
        self.cfg = cfg
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, theta, grad):
        c = self.cfg
        self.t += 1
        self.m = c.beta1 * self.m + (1 - c.beta1) * grad
        self.v = c.beta2 * self.v + (1 - c.beta2) * grad * grad
        mhat = self.m / (1 - c.beta1**self.t)
        vhat = self.v / (1 - c.beta2**self.t)
        return theta - c.learning_rate * mhat / (np.sqrt(vhat) + c.eps)


def _sgd_step(theta, grad, cfg):
    return theta - cfg.learning_rate * grad


def _check_finite(loss, E, ids, iteration):
    if not np.isfinite(loss):
        bad = np.flatnonzero(~np.all(np.isfinite(E), axis=1))
        raise DivergenceError(
            f"weighted loss became non-finite at outer iteration {iteration}",
            iteration=iteration,
            signal_ids=[ids[i] for i in bad],
        )


def rnn_substep(model, dataset, R, opt: OptimizerConfig, rng=None, state=None,
                iteration=0, grad_norms=None):
    """Minibatch passes over ``dataset`` minimising the weighted loss.

    Parameters
    ----------
    state : Adam, optional
        Optimizer state carried across calls; created when omitted.
    grad_norms : list, optional
        If given, the mean gradient norm of every epoch is appended.

    Returns
    -------
    model : ModelParams
    loss : float
        Weighted loss of the updated model on the full dataset.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    R = np.asarray(R, dtype=np.float64)
    ids = [s.id for s in dataset]
    theta = model.to_vector()
    if state is None and opt.method == "adam":
        state = Adam(theta.size, opt)
    N = len(dataset)
    for _ in range(opt.epochs_per_outer):
        perm = rng.permutation(N)
        norms = []
        for start in range(0, N, opt.batch_size):
            idx = np.sort(perm[start : start + opt.batch_size])
            batch = [dataset[i] for i in idx]
            loss, E, grad = loss_and_gradients(model, batch, R[idx], check=False)
            _check_finite(loss, E, [ids[i] for i in idx], iteration)
            g = grad.to_vector()
            gn = float(np.linalg.norm(g))
            if opt.clip_norm is not None and gn > opt.clip_norm:
                g = g * (opt.clip_norm / gn)
            norms.append(gn)
            if opt.method == "adam":
                theta = state.step(theta, g)
            else:
                theta = _sgd_step(theta, g, opt)
            model = model.with_vector(theta)
        if grad_norms is not None:
            grad_norms.append(float(np.mean(norms)))
    E = error_matrix(model, dataset)
    loss = float(np.sum(R * E))
    _check_finite(loss, E, ids, iteration)
    return model, loss


def _sizes(dataset):
    return np.array([s.size for s in dataset], dtype=np.float64)


def train(dataset, cfg: TrainConfig, progress=None) -> TrainedModel:
    """Run the alternating weight / allocation optimisation.

    Parameters
    ----------
    dataset : list of TimeSeries
        Nonempty, common channel count ``D``.
    cfg : TrainConfig
    progress : file-like, optional
        Receives one TSV line per outer iteration:
        ``iter, weighted_loss, free_energy, top cluster masses``.
    """
    if not dataset:
        raise ConfigurationError("dataset is empty")
    pack(dataset)  # validates shapes and finiteness
    hyper = cfg.hyper
    D = dataset[0].D
    rng = np.random.default_rng(cfg.rng_seed)
    model = init_model(
        cfg.L, D, hyper.K, cfg.capacity, cfg.fft_style, cfg.cpx,
        seed=int(rng.integers(2**63)), reverse=cfg.reverse,
    )
    sizes = _sizes(dataset)
    N = len(dataset)

    E0 = error_matrix(model, dataset)
    _check_finite(float(np.sum(E0)), E0, [s.id for s in dataset], 0)
    err = ErrorMatrix(E0, sizes)
    vb = m_step_state(err, uniform_responsibilities(N, hyper.K), hyper)
    f_prev = variational_free_energy(err, vb, hyper)
    opt_state = None
    trace = []
    if progress is not None:
        progress.write("iter\tweighted_loss\tfree_energy\ttop_masses\n")
    for it in range(1, cfg.max_outer_iters + 1):
        if cfg.optimizer.method == "adam" and opt_state is None:
            opt_state = Adam(model.to_vector().size, cfg.optimizer)
        model, loss = rnn_substep(
            model, dataset, vb.R, cfg.optimizer, rng=rng, state=opt_state, iteration=it
        )
        err = ErrorMatrix(error_matrix(model, dataset), sizes)
        vb = run_vb(err, hyper, cfg.vb_iters, init_R=vb.R)
        f = vb.trace[-1]
        if not np.isfinite(f):
            raise DivergenceError(f"free energy became non-finite at iteration {it}", it)
        masses = vb.R.mean(axis=0)
        rec = {
            "iter": it,
            "weighted_loss": loss,
            "free_energy": f,
            "masses": masses.tolist(),
        }
        trace.append(rec)
        log.info("iter %d loss %.6g F %.6g masses %s", it, loss, f, np.round(masses, 3))
        if progress is not None:
            top = ",".join(f"{m:.4f}" for m in sorted(masses, reverse=True)[:3])
            progress.write(f"{it}\t{loss!r}\t{f!r}\t{top}\n")
        tol = cfg.free_energy_threshold
        if cfg.relative_threshold and np.isfinite(tol):
            tol *= abs(f)
        if abs(f_prev - f) < tol:
            break
        f_prev = f
    vb.trace = []
    return TrainedModel(model, vb, cfg, trace)


def extract(model: ModelParams, vb: VBState, dataset):
    """Encoded states ``H`` (N, L) and the final responsibilities."""
    X, mask = pack(dataset)
    return encode_batch(model.encoder, X, mask), vb.R
