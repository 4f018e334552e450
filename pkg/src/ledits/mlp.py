"""A small trainable denoiser: MLP with hand-rolled backpropagation and
Adam, usable wherever the analytic predictor is.

Architecture: concat(x, sinusoidal time features of t/T, learned condition
embedding) -> hidden -> hidden -> d, with SiLU activations. Condition ids
are small integers; id 0 is reserved for "unconditional", which is also the
id substituted during classifier-free dropout at training time.

Everything is float64 numpy. Parameters live in a dict and flatten to a
single vector in a fixed order (cond_table, W1, b1, W2, b2, W3, b3), which
is also the checkpoint layout.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import ParameterError, TrainingDivergedError
from .predictors import Condition, NoisePredictor
from .schedule import NoiseSchedule

CHECKPOINT_MAGIC = b"LDTSMLP1"
CHECKPOINT_VERSION = 1

PARAM_ORDER = ("cond_table", "W1", "b1", "W2", "b2", "W3", "b3")


def silu(x: np.ndarray) -> np.ndarray:
    return x * expit(x)


def silu_grad(x: np.ndarray) -> np.ndarray:
    s = expit(x)
    return s * (1.0 + x * (1.0 - s))


def time_features(t, n_timesteps: int, width: int) -> np.ndarray:
    """Sinusoidal features of u = t/T: sin/cos at geometric frequencies.

    Frequencies run from 1 to 32 cycles over u in (0, 1]; higher ones made
    the fit visibly noisier between adjacent timesteps.
    """
    u = np.asarray(t, dtype=float) / n_timesteps
    n_freq = width // 2
    freqs = 2.0 ** (np.arange(n_freq) * 5.0 / (n_freq - 1))
    angles = 2.0 * np.pi * u[..., None] * freqs
    return np.concatenate([np.sin(angles), np.cos(angles)], axis=-1)


@dataclass
class TrainConfig:
    """Hyper-parameters for one training run (classifier-free style).

    The learning rate decays linearly from ``learning_rate`` to
    ``learning_rate * final_lr_scale`` across epochs; the default anneals to
    zero, which cuts Adam's gradient-noise floor substantially.
    """

    epochs: int = 30
    batch_size: int = 128
    batches_per_epoch: int = 50
    learning_rate: float = 1e-3
    final_lr_scale: float = 0.0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    cond_dropout: float = 0.1

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.batches_per_epoch < 1:
            raise ParameterError("epochs, batch_size, batches_per_epoch must be >= 1")
        if self.learning_rate <= 0 or self.adam_eps <= 0:
            raise ParameterError("learning_rate and adam_eps must be positive")
        if not 0.0 <= self.final_lr_scale <= 1.0:
            raise ParameterError("final_lr_scale must lie in [0, 1]")
        if not (0 < self.adam_beta1 < 1 and 0 < self.adam_beta2 < 1):
            raise ParameterError("adam betas must lie in (0, 1)")
        if not 0.0 <= self.cond_dropout <= 1.0:
            raise ParameterError("cond_dropout must lie in [0, 1]")


class Adam:
    """Adam over a flat parameter vector; moments start at zero."""

    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = None
        self.v = None

    def step(self, params: np.ndarray, grads: np.ndarray) -> np.ndarray:
        if self.m is None:
            self.m = np.zeros_like(params)
            self.v = np.zeros_like(params)
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grads
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grads * grads
        m_hat = self.m / (1.0 - self.beta1**self.t)
        v_hat = self.v / (1.0 - self.beta2**self.t)
        return params - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


class MlpDenoiser:
    """Two-hidden-layer MLP noise estimator with condition embeddings."""

    def __init__(
        self,
        dim: int,
        n_timesteps: int,
        n_condition_ids: int,
        hidden: int = 128,
        cond_width: int = 8,
        time_width: int = 16,
        seed: int = 0,
        schedule_fingerprint: str | None = None,
    ):
        if dim < 1 or hidden < 1 or n_condition_ids < 1:
            raise ParameterError("dim, hidden and n_condition_ids must be >= 1")
        if time_width % 2 != 0:
            raise ParameterError("time_width must be even (sin/cos pairs)")
        self.dim = dim
        self.n_timesteps = n_timesteps
        self.n_condition_ids = n_condition_ids
        self.hidden = hidden
        self.cond_width = cond_width
        self.time_width = time_width
        self.schedule_fingerprint = schedule_fingerprint
        in_width = dim + time_width + cond_width
        rng = np.random.default_rng(seed)
        self.params = {
            "cond_table": 0.1 * rng.standard_normal((n_condition_ids, cond_width)),
            "W1": rng.standard_normal((in_width, hidden)) / np.sqrt(in_width),
            "b1": np.zeros(hidden),
            "W2": rng.standard_normal((hidden, hidden)) / np.sqrt(hidden),
            "b2": np.zeros(hidden),
            "W3": rng.standard_normal((hidden, dim)) / np.sqrt(hidden),
            "b3": np.zeros(dim),
        }

    # -- parameter plumbing -------------------------------------------------

    def get_flat(self) -> np.ndarray:
        return np.concatenate([self.params[k].ravel() for k in PARAM_ORDER])

    def set_flat(self, flat: np.ndarray) -> None:
        pos = 0
        for k in PARAM_ORDER:
            n = self.params[k].size
            self.params[k] = flat[pos : pos + n].reshape(self.params[k].shape).copy()
            pos += n
        if pos != flat.size:
            raise ParameterError(f"flat vector has {flat.size} entries, expected {pos}")

    def flatten_grads(self, grads: dict) -> np.ndarray:
        return np.concatenate([grads[k].ravel() for k in PARAM_ORDER])

    # -- forward / backward -------------------------------------------------

    def _check_inputs(self, x: np.ndarray, cond_ids: np.ndarray) -> None:
        if x.shape[-1] != self.dim:
            raise ParameterError(f"x has dimension {x.shape[-1]}, model expects {self.dim}")
        if cond_ids.min() < 0 or cond_ids.max() >= self.n_condition_ids:
            raise ParameterError(
                f"condition id outside 0..{self.n_condition_ids - 1}: "
                f"{int(cond_ids.min())}..{int(cond_ids.max())}"
            )

    def _forward_cached(self, x: np.ndarray, t: np.ndarray, cond_ids: np.ndarray) -> dict:
        temb = time_features(t, self.n_timesteps, self.time_width)
        temb = np.broadcast_to(temb, x.shape[:-1] + (self.time_width,))
        cemb = self.params["cond_table"][cond_ids]
        h0 = np.concatenate([x, temb, cemb], axis=-1)
        a1 = h0 @ self.params["W1"] + self.params["b1"]
        h1 = silu(a1)
        a2 = h1 @ self.params["W2"] + self.params["b2"]
        h2 = silu(a2)
        out = h2 @ self.params["W3"] + self.params["b3"]
        return {"h0": h0, "a1": a1, "h1": h1, "a2": a2, "h2": h2, "out": out}

    def forward(self, x: np.ndarray, t, cond_id) -> np.ndarray:
        """ε̂ for x of shape (d,) or (..., d); t and cond_id scalars or
        arrays broadcasting against the batch shape."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        xb = x[None, :] if single else x
        tb = np.broadcast_to(np.asarray(t), xb.shape[:-1])
        cb = np.broadcast_to(np.asarray(cond_id, dtype=int), xb.shape[:-1])
        self._check_inputs(xb, cb)
        out = self._forward_cached(xb, tb, cb)["out"]
        return out[0] if single else out


def loss_and_grads(
    model: MlpDenoiser,
    schedule: NoiseSchedule,
    x0: np.ndarray,
    t: np.ndarray,
    eps: np.ndarray,
    cond_ids: np.ndarray,
) -> tuple[float, dict]:
    """ε-matching loss and gradients by explicit backpropagation.

    loss = mean over batch and coordinates of
    (model(√ᾱ_t·x_0 + √(1−ᾱ_t)·ε, t, c) − ε)².
    """
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    eps = np.atleast_2d(np.asarray(eps, dtype=float))
    t = np.asarray(t, dtype=int).reshape(-1)
    cond_ids = np.asarray(cond_ids, dtype=int).reshape(-1)
    if x0.shape[0] == 0:
        raise ParameterError("batch must be nonempty")
    model._check_inputs(x0, cond_ids)

    if t.min() < 1 or t.max() > schedule.T:
        raise ParameterError(f"timesteps outside 1..{schedule.T}")
    abar = schedule.alpha_bars[t - 1][:, None]
    x_t = np.sqrt(abar) * x0 + np.sqrt(1.0 - abar) * eps
    cache = model._forward_cached(x_t, t, cond_ids)
    resid = cache["out"] - eps
    loss = float(np.mean(resid * resid))

    p = model.params
    d_out = 2.0 * resid / resid.size
    grads = {}
    grads["W3"] = cache["h2"].T @ d_out
    grads["b3"] = d_out.sum(axis=0)
    d_h2 = d_out @ p["W3"].T
    d_a2 = d_h2 * silu_grad(cache["a2"])
    grads["W2"] = cache["h1"].T @ d_a2
    grads["b2"] = d_a2.sum(axis=0)
    d_h1 = d_a2 @ p["W2"].T
    d_a1 = d_h1 * silu_grad(cache["a1"])
    grads["W1"] = cache["h0"].T @ d_a1
    grads["b1"] = d_a1.sum(axis=0)
    d_h0 = d_a1 @ p["W1"].T
    d_cemb = d_h0[:, model.dim + model.time_width :]
    grads["cond_table"] = np.zeros_like(p["cond_table"])
    np.add.at(grads["cond_table"], cond_ids, d_cemb)
    return loss, grads


def train(
    sampler,
    schedule: NoiseSchedule,
    config: TrainConfig,
    dim: int,
    n_condition_ids: int,
    hidden: int = 128,
    cond_width: int = 8,
) -> tuple[MlpDenoiser, list]:
    """Train a denoiser on batches drawn from ``sampler(rng, n)``.

    ``sampler`` returns (x0 batch (n, dim), condition ids (n,)). All
    randomness (init, data, timesteps, noise, dropout) derives from
    config.seed, so the run is a pure function of (sampler, config).

    Returns (model, history) with history rows (epoch, mean loss).

    Raises:
        TrainingDivergedError: on a non-finite loss, with the failing step.
    """
    model = MlpDenoiser(
        dim=dim,
        n_timesteps=schedule.T,
        n_condition_ids=n_condition_ids,
        hidden=hidden,
        cond_width=cond_width,
        seed=np.random.default_rng([config.seed, 0]).integers(2**32),
        schedule_fingerprint=schedule.fingerprint(),
    )
    data_rng = np.random.default_rng([config.seed, 1])
    noise_rng = np.random.default_rng([config.seed, 2])
    adam = Adam(config.learning_rate, config.adam_beta1, config.adam_beta2, config.adam_eps)
    flat = model.get_flat()

    history = []
    for epoch in range(1, config.epochs + 1):
        if config.epochs > 1:
            frac = (epoch - 1) / (config.epochs - 1)
            adam.lr = config.learning_rate * (1.0 - frac * (1.0 - config.final_lr_scale))
        epoch_losses = []
        for step in range(config.batches_per_epoch):
            x0, cond_ids = sampler(data_rng, config.batch_size)
            cond_ids = np.asarray(cond_ids, dtype=int)
            t = noise_rng.integers(1, schedule.T + 1, size=config.batch_size)
            eps = noise_rng.standard_normal(x0.shape)
            dropped = noise_rng.random(config.batch_size) < config.cond_dropout
            cond_ids = np.where(dropped, 0, cond_ids)
            loss, grads = loss_and_grads(model, schedule, x0, t, eps, cond_ids)
            if not np.isfinite(loss):
                raise TrainingDivergedError(
                    f"loss became {loss} at epoch {epoch}, step {step}"
                )
            flat = adam.step(flat, model.flatten_grads(grads))
            model.set_flat(flat)
            epoch_losses.append(loss)
        history.append((epoch, float(np.mean(epoch_losses))))
    return model, history


# -- checkpoint I/O ---------------------------------------------------------


def save_checkpoint(model: MlpDenoiser, path) -> None:
    """Flat binary: magic, version, widths, fingerprint, then parameters as
    little-endian float64 in PARAM_ORDER."""
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(
            struct.pack(
                "<IIIIIII",
                CHECKPOINT_VERSION,
                model.dim,
                model.n_timesteps,
                model.n_condition_ids,
                model.hidden,
                model.cond_width,
                model.time_width,
            )
        )
        fp = model.schedule_fingerprint or ""
        fh.write(fp.encode("ascii").ljust(16, b"\x00"))
        fh.write(model.get_flat().astype("<f8").tobytes())


def load_checkpoint(path) -> MlpDenoiser:
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != CHECKPOINT_MAGIC:
            raise ParameterError(f"{path}: bad checkpoint magic {magic!r}")
        version, dim, n_t, n_cond, hidden, cond_w, time_w = struct.unpack(
            "<IIIIIII", fh.read(28)
        )
        if version != CHECKPOINT_VERSION:
            raise ParameterError(f"{path}: unsupported checkpoint version {version}")
        fp = fh.read(16).rstrip(b"\x00").decode("ascii") or None
        model = MlpDenoiser(
            dim=dim,
            n_timesteps=n_t,
            n_condition_ids=n_cond,
            hidden=hidden,
            cond_width=cond_w,
            time_width=time_w,
            schedule_fingerprint=fp,
        )
        flat = np.frombuffer(fh.read(8 * model.get_flat().size), dtype="<f8").copy()
        model.set_flat(flat)
    return model


class MlpPredictor(NoisePredictor):
    """NoisePredictor adapter: unconditional -> id 0, subset {k} -> id k+1."""

    def __init__(self, model: MlpDenoiser):
        self.model = model

    @property
    def dimension(self) -> int:
        return self.model.dim

    def condition_id(self, c: Condition) -> int:
        if c.is_unconditional:
            return 0
        if len(c.subset) != 1:
            raise ParameterError(
                f"MLP predictor only supports singleton subsets, got {sorted(c.subset)}"
            )
        (k,) = c.subset
        cid = k + 1
        if cid >= self.model.n_condition_ids:
            raise ParameterError(
                f"condition {{{k}}} unknown to this predictor "
                f"(ids 0..{self.model.n_condition_ids - 1})"
            )
        return cid

    def predict(self, x: np.ndarray, t: int, c: Condition) -> np.ndarray:
        return self.model.forward(x, t, self.condition_id(c))
