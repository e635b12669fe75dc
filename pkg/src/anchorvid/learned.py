"""A one-hidden-layer noise predictor trained with plain SGD and hand-written
backprop.

Input features are ``[flattened z_t | t/T, sin/cos(pi 2^k t/T) for k < 4 |
conditioning embedding]``; the hidden layer uses ``tanh``.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional

import numpy as np

from .latents import RandomStream, ShapeError, TRAIN, as_latent, write_atomic
from .prior import GmmVideoPrior, optimal_predict_noise, sample_videos
from .schedule import NoiseSchedule

CHECKPOINT_MAGIC = b"NVSDMLP1"
N_FREQ = 4
PARAM_NAMES = ("W1", "b1", "W2", "b2")


class DivergenceError(FloatingPointError):
    pass


def time_features(t, T_train: int) -> np.ndarray:
    u = np.asarray(t, dtype=np.float64).reshape(-1, 1) / T_train
    freqs = math.pi * 2.0 ** np.arange(N_FREQ)
    return np.concatenate([u, np.sin(u * freqs), np.cos(u * freqs)], axis=1)


@dataclass
class TinyDenoiser:
    F: int
    d: int
    emb_dim: int
    T_train: int
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray

    @property
    def hidden(self) -> int:
        return int(self.b1.shape[0])

    @property
    def in_dim(self) -> int:
        return self.F * self.d + 1 + 2 * N_FREQ + self.emb_dim

    @classmethod
    def init(cls, F, d, emb_dim, T_train, hidden, stream: RandomStream, zero=False):
        D = F * d
        n_in = D + 1 + 2 * N_FREQ + emb_dim
        if zero:
            W1, W2 = np.zeros((n_in, hidden)), np.zeros((hidden, D))
        else:
            rng = stream.generator()
            W1 = rng.standard_normal((n_in, hidden)) / math.sqrt(n_in)
            W2 = rng.standard_normal((hidden, D)) / math.sqrt(hidden)
        return cls(F, d, emb_dim, T_train, W1, np.zeros(hidden), W2, np.zeros(D))

    def params(self) -> Dict[str, np.ndarray]:
        return {k: getattr(self, k) for k in PARAM_NAMES}

    def copy(self) -> "TinyDenoiser":
        return TinyDenoiser(self.F, self.d, self.emb_dim, self.T_train,
                            *(getattr(self, k).copy() for k in PARAM_NAMES))

    def features(self, z, emb, t) -> np.ndarray:
        B = z.shape[0]
        return np.concatenate([z.reshape(B, -1), time_features(t, self.T_train),
                               emb.reshape(B, self.emb_dim)], axis=1)

    def forward(self, X):
        H = np.tanh(X @ self.W1 + self.b1)
        return H @ self.W2 + self.b2, H

    def predict_batch(self, z, emb, t) -> np.ndarray:
        Y, _ = self.forward(self.features(z, emb, t))
        return Y.reshape(z.shape[0], self.F, self.d)

    def embed(self, c) -> np.ndarray:
        if c is None:
            return np.zeros(self.emb_dim)
        if c.dim != self.emb_dim:
            raise ShapeError(f"conditioning dim {c.dim} != model emb_dim {self.emb_dim}")
        return c.embedding

    def predict_noise(self, z_t, c, t) -> np.ndarray:
        z_t = as_latent(z_t, "z_t")
        if z_t.shape != (self.F, self.d):
            raise ShapeError(f"latent {z_t.shape} does not match model ({self.F}, {self.d})")
        return self.predict_batch(z_t[None], self.embed(c)[None], [t])[0]


def predict_noise(m: TinyDenoiser, z_t, c, t) -> np.ndarray:
    return m.predict_noise(z_t, c, t)


def loss_and_grads(m: TinyDenoiser, z, emb, t, eps, need_grads=True):
    """Batch-mean of ``||eps - eps_hat||^2`` and its parameter gradients."""
    X = m.features(z, emb, t)
    B = X.shape[0]
    Y, H = m.forward(X)
    R = Y - eps.reshape(B, -1)
    loss = float(np.sum(R * R) / B)
    if not need_grads:
        return loss, None
    dY = 2.0 * R / B
    dA = (dY @ m.W2.T) * (1.0 - H * H)
    grads = {"W1": X.T @ dA, "b1": dA.sum(axis=0), "W2": H.T @ dY, "b2": dY.sum(axis=0)}
    return loss, grads


@dataclass
class TrainingBatch:
    z_t: np.ndarray
    emb: np.ndarray
    t: np.ndarray
    eps: np.ndarray
    labels: np.ndarray


def draw_batch(prior: GmmVideoPrior, s: NoiseSchedule, n: int, stream: RandomStream) -> TrainingBatch:
    z0, ks = sample_videos(prior, n, stream.child(0), return_modes=True)
    rng = stream.child(1).generator()
    t = rng.integers(1, s.T_train + 1, size=n)
    eps = rng.standard_normal(z0.shape)
    a = s.alpha_bars[t - 1][:, None, None]
    z_t = np.sqrt(a) * z0 + np.sqrt(1.0 - a) * eps
    return TrainingBatch(z_t, prior.embeddings[ks], t, eps, ks)


def oracle_gap(m: TinyDenoiser, prior: GmmVideoPrior, s: NoiseSchedule, batch: TrainingBatch) -> float:
    """Mean ``||eps_hat - eps*||^2`` against the conditioned optimal denoiser."""
    pred = m.predict_batch(batch.z_t, batch.emb, batch.t)
    total = 0.0
    for i in range(len(batch.t)):
        c = prior.condition(int(batch.labels[i]))
        opt = optimal_predict_noise(prior, batch.z_t[i], c, int(batch.t[i]), s)
        total += float(np.sum((pred[i] - opt) ** 2))
    return total / len(batch.t)


def gradient_check(m: TinyDenoiser, sample: TrainingBatch, h: float = 1e-5,
                   max_coords: Optional[int] = 256, seed: int = 0,
                   corrupt: Optional[Callable[[Dict[str, np.ndarray]], None]] = None) -> float:
    """Max over parameter blocks of ``||g - g_fd|| / (||g|| + ||g_fd||)``.

    ``g_fd`` uses central differences with step ``h`` on up to ``max_coords``
    coordinates per block. ``corrupt`` may mutate the analytic gradients in
    place before comparison.
    """
    _, grads = loss_and_grads(m, sample.z_t, sample.emb, sample.t, sample.eps)
    if corrupt is not None:
        corrupt(grads)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for name in PARAM_NAMES:
        p = getattr(m, name)
        flat = p.reshape(-1)
        idx = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            idx = rng.choice(flat.size, size=max_coords, replace=False)
        num = np.empty(len(idx))
        for j, i in enumerate(idx):
            old = flat[i]
            flat[i] = old + h
            lp, _ = loss_and_grads(m, sample.z_t, sample.emb, sample.t, sample.eps, False)
            flat[i] = old - h
            lm, _ = loss_and_grads(m, sample.z_t, sample.emb, sample.t, sample.eps, False)
            flat[i] = old
            num[j] = (lp - lm) / (2 * h)
        ana = grads[name].reshape(-1)[idx]
        denom = np.linalg.norm(ana) + np.linalg.norm(num)
        err = 0.0 if denom == 0 else float(np.linalg.norm(ana - num) / denom)
        worst = max(worst, err)
    return worst


@dataclass
class TrainReport:
    epoch_losses: List[float] = field(default_factory=list)
    oracle_gaps: List[float] = field(default_factory=list)
    initial_loss: float = float("nan")
    zero_predictor_loss: float = float("nan")
    grad_check_error: float = float("nan")

    @property
    def final_loss(self) -> float:
        return self.epoch_losses[-1] if self.epoch_losses else float("nan")

    def as_dict(self):
        return {"epoch_losses": self.epoch_losses, "oracle_gaps": self.oracle_gaps,
                "initial_loss": self.initial_loss, "final_loss": self.final_loss,
                "zero_predictor_loss": self.zero_predictor_loss,
                "grad_check_error": self.grad_check_error}


def train(prior: GmmVideoPrior, s: NoiseSchedule, epochs: int, batch: int, lr: float,
          stream: RandomStream, hidden: int = 128, steps_per_epoch: int = 200,
          eval_size: int = 512, checkpoints: Optional[list] = None):
    """SGD on the noise-prediction objective. Returns ``(model, report)``.

    ``checkpoints``, if given, receives a copy of the model after each epoch.
    """
    if epochs < 1 or batch < 1 or not lr > 0 or steps_per_epoch < 1:
        raise ValueError("epochs, batch, steps_per_epoch and lr must be positive")
    stream = stream.child(TRAIN)
    m = TinyDenoiser.init(prior.F, prior.d, prior.embedding_dim, s.T_train, hidden,
                          stream.child(0))
    held_out = draw_batch(prior, s, eval_size, stream.child(1))
    report = TrainReport()
    report.initial_loss, _ = loss_and_grads(m, held_out.z_t, held_out.emb, held_out.t,
                                            held_out.eps, False)
    report.zero_predictor_loss = float(np.sum(held_out.eps ** 2) / eval_size)
    report.grad_check_error = gradient_check(
        m, draw_batch(prior, s, 4, stream.child(2)), max_coords=64)
    for epoch in range(epochs):
        for step in range(steps_per_epoch):
            b = draw_batch(prior, s, batch, stream.child(3, epoch, step))
            loss, grads = loss_and_grads(m, b.z_t, b.emb, b.t, b.eps)
            if not math.isfinite(loss):
                raise DivergenceError(f"training loss became non-finite at epoch {epoch}, step {step}")
            for name in PARAM_NAMES:
                getattr(m, name)[...] -= lr * grads[name]
        ev, _ = loss_and_grads(m, held_out.z_t, held_out.emb, held_out.t, held_out.eps, False)
        if not math.isfinite(ev):
            raise DivergenceError(f"held-out loss became non-finite after epoch {epoch}")
        report.epoch_losses.append(ev)
        report.oracle_gaps.append(oracle_gap(m, prior, s, held_out))
        if checkpoints is not None:
            checkpoints.append(m.copy())
    return m, report


# -- checkpoint format -----------------------------------------------------

def checkpoint_bytes(m: TinyDenoiser) -> bytes:
    head = CHECKPOINT_MAGIC + struct.pack("<5Q", m.F, m.d, m.emb_dim, m.T_train, m.hidden)
    body = b"".join(np.ascontiguousarray(getattr(m, k), dtype="<f8").tobytes()
                    for k in PARAM_NAMES)
    return head + body


def checkpoint_from_bytes(data: bytes) -> TinyDenoiser:
    if data[:8] != CHECKPOINT_MAGIC:
        raise ValueError("not a denoiser checkpoint (bad magic)")
    F, d, emb_dim, T_train, hidden = struct.unpack("<5Q", data[8:48])
    D = F * d
    n_in = D + 1 + 2 * N_FREQ + emb_dim
    shapes = {"W1": (n_in, hidden), "b1": (hidden,), "W2": (hidden, D), "b2": (D,)}
    expected = 8 * sum(int(np.prod(v)) for v in shapes.values())
    body = data[48:]
    if len(body) != expected:
        raise ValueError(f"checkpoint body has {len(body)} bytes, expected {expected}")
    arrays, off = {}, 0
    for k in PARAM_NAMES:
        n = int(np.prod(shapes[k]))
        arrays[k] = np.frombuffer(body[off:off + 8 * n], dtype="<f8").astype(np.float64).reshape(shapes[k])
        off += 8 * n
    return TinyDenoiser(F, d, emb_dim, T_train, **arrays)


def save_checkpoint(path, m: TinyDenoiser) -> Path:
    return write_atomic(path, checkpoint_bytes(m))


def load_checkpoint(path) -> TinyDenoiser:
    return checkpoint_from_bytes(Path(path).read_bytes())
