"""Edit-friendly DDPM inversion.

Instead of reversing the sampler, build an auxiliary trajectory by
corrupting x_0 with noise drawn independently per step,

    x_t = √ᾱ_t·x_0 + √(1−ᾱ_t)·ε̃_t,    ε̃_t ⊥ ε̃_s  (t ≠ s),

then isolate the noise maps that make the reverse update reproduce it:

    z_t = (x_{t-1} − μ̂_t(x_t)) / σ_t.

Replaying the reverse loop from x_T with these z_t returns x_0 up to float
round-off, for any predictor; replaying under a different condition is what
produces edits. The independent per-step corruption makes the extracted z_t
correlated across consecutive steps and gives them variance well above 1,
unlike the iid maps of ordinary sampling.

σ_1 = 0 under the ᾱ_0 = 1 convention, so z_1 is stored as zero and never
used; the final replay step is the deterministic μ̂_1(x_1). To keep that
step consistent with x_0 (there is no z_1 to absorb a residual), x_1 is not
independently corrupted: it is the solution of the fixed point
x_1 = √ᾱ_1·x_0 + √(1−ᾱ_1)·ε̂(x_1, 1), which makes μ̂_1(x_1) = x_0 exactly.
The map contracts with factor ~√β_1·Lip(ε̂), so a few Picard iterations
reach machine precision.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import (
    CompatibilityError,
    InversionUndefinedError,
    NumericError,
    ParameterError,
)
from .predictors import UNCONDITIONAL, Condition, NoisePredictor
from .sampler import mu_hat
from .schedule import NoiseSchedule

ARTIFACT_MAGIC = b"LDTSINV1"
ARTIFACT_VERSION = 1


@dataclass
class InversionResult:
    """Inverted start latent plus the noise maps that reproduce x_0.

    x_T: (..., d) start latent (equals xs[T-1]).
    zs: (T, ..., d); zs[t-1] is z_t, with zs[0] ≡ 0.
    xs: (T, ..., d) auxiliary trajectory; xs[t-1] is x_t.
    condition: the conditioning μ̂ was computed with.
    schedule_fingerprint: hash of the schedule parameters used.
    """

    x_T: np.ndarray
    zs: np.ndarray
    xs: np.ndarray
    condition: Condition
    schedule_fingerprint: str

    @property
    def T(self) -> int:
        return self.zs.shape[0]

    def x_at(self, t: int) -> np.ndarray:
        """Auxiliary state x_t for t in 1..T."""
        if not 1 <= t <= self.T:
            raise IndexError(f"t={t} outside 1..{self.T}")
        return self.xs[t - 1]

    def z_at(self, t: int) -> np.ndarray:
        if not 1 <= t <= self.T:
            raise IndexError(f"t={t} outside 1..{self.T}")
        return self.zs[t - 1]

    def save(self, path) -> None:
        """Write a flat binary artifact (header, then f64 arrays)."""
        if self.x_T.ndim != 1:
            raise ParameterError("only single-sample inversions are serializable")
        d = self.x_T.shape[0]
        cond = self.condition
        subset = sorted(cond.subset)
        with open(path, "wb") as fh:
            fh.write(ARTIFACT_MAGIC)
            fh.write(struct.pack("<II", ARTIFACT_VERSION, self.T))
            fh.write(struct.pack("<I", d))
            fh.write(struct.pack("<B", 0 if cond.is_unconditional else 1))
            fh.write(struct.pack("<I", len(subset)))
            for i in subset:
                fh.write(struct.pack("<I", i))
            fh.write(self.schedule_fingerprint.encode("ascii"))
            fh.write(self.x_T.astype("<f8").tobytes())
            fh.write(self.zs.astype("<f8").tobytes())
            fh.write(self.xs.astype("<f8").tobytes())

    @classmethod
    def load(cls, path) -> "InversionResult":
        with open(path, "rb") as fh:
            magic = fh.read(8)
            if magic != ARTIFACT_MAGIC:
                raise CompatibilityError(f"{path}: bad magic {magic!r}")
            version, T = struct.unpack("<II", fh.read(8))
            if version != ARTIFACT_VERSION:
                raise CompatibilityError(f"{path}: unsupported version {version}")
            (d,) = struct.unpack("<I", fh.read(4))
            (kind,) = struct.unpack("<B", fh.read(1))
            (n_subset,) = struct.unpack("<I", fh.read(4))
            subset = [struct.unpack("<I", fh.read(4))[0] for _ in range(n_subset)]
            fingerprint = fh.read(16).decode("ascii")
            x_T = np.frombuffer(fh.read(8 * d), dtype="<f8").copy()
            zs = np.frombuffer(fh.read(8 * T * d), dtype="<f8").reshape(T, d).copy()
            xs = np.frombuffer(fh.read(8 * T * d), dtype="<f8").reshape(T, d).copy()
        cond = UNCONDITIONAL if kind == 0 else Condition.components(*subset)
        return cls(x_T=x_T, zs=zs, xs=xs, condition=cond, schedule_fingerprint=fingerprint)


def _consistent_x1(
    x_0: np.ndarray,
    predictor: NoisePredictor,
    condition: Condition,
    schedule: NoiseSchedule,
    x1_init: np.ndarray,
    max_iter: int = 200,
) -> np.ndarray:
    """Solve x_1 = √ᾱ_1·x_0 + √(1−ᾱ_1)·ε̂(x_1, 1) so μ̂_1(x_1) = x_0."""
    abar_1 = schedule.alpha_bar(1)
    base = np.sqrt(abar_1) * x_0
    coeff = np.sqrt(1.0 - abar_1)
    x1 = x1_init
    for _ in range(max_iter):
        x1_next = base + coeff * predictor.predict(x1, 1, condition)
        delta = np.max(np.abs(x1_next - x1))
        x1 = x1_next
        if delta <= 1e-13 * (1.0 + np.max(np.abs(x1))):
            return x1
    raise NumericError(
        "x_1 consistency iteration did not converge; the predictor is too "
        "stiff near t=1 for the final deterministic step"
    )


def invert(
    x_0: np.ndarray,
    predictor: NoisePredictor,
    condition: Condition = UNCONDITIONAL,
    schedule: NoiseSchedule | None = None,
    seed: int = 0,
) -> InversionResult:
    """Invert x_0 into (x_T, noise maps) under the given conditioning.

    ``x_0`` may be (d,) or a batch (..., d); ε̃ draws are shaped like
    (T, *x_0.shape) from a single seeded stream.

    Raises:
        InversionUndefinedError: if the schedule has η = 0 (σ_t = 0 makes
            the residual division undefined for t ≥ 2).
    """
    if schedule is None:
        raise ParameterError("invert requires a schedule")
    if schedule.eta == 0.0:
        raise InversionUndefinedError(
            "inversion requires eta > 0: with eta = 0 every sigma_t = 0 and "
            "z_t = (x_{t-1} - mu_hat) / sigma_t is undefined"
        )
    x_0 = np.asarray(x_0, dtype=float)
    if not np.isfinite(x_0).all():
        raise ParameterError("x_0 must be finite")

    rng = np.random.default_rng(seed)
    T = schedule.T
    eps_tilde = rng.standard_normal((T,) + x_0.shape)
    sqrt_abar = np.sqrt(schedule.alpha_bars).reshape((T,) + (1,) * x_0.ndim)
    sqrt_1m_abar = np.sqrt(1.0 - schedule.alpha_bars).reshape((T,) + (1,) * x_0.ndim)
    xs = sqrt_abar * x_0 + sqrt_1m_abar * eps_tilde
    xs[0] = _consistent_x1(x_0, predictor, condition, schedule, xs[0])

    zs = np.zeros_like(xs)
    for t in range(T, 1, -1):
        x_t = xs[t - 1]
        x_prev = xs[t - 2] if t >= 2 else x_0
        eps = predictor.predict(x_t, t, condition)
        zs[t - 1] = (x_prev - mu_hat(x_t, eps, t, schedule)) / schedule.sigma(t)

    return InversionResult(
        x_T=xs[T - 1],
        zs=zs,
        xs=xs,
        condition=condition,
        schedule_fingerprint=schedule.fingerprint(),
    )


def replay(
    result: InversionResult,
    predictor: NoisePredictor,
    schedule: NoiseSchedule,
    condition: Condition | None = None,
) -> np.ndarray:
    """Run the reverse loop from x_T with the stored noise maps.

    With ``condition`` omitted (the one recorded at inversion time) this
    reproduces x_0 exactly up to round-off; a different condition edits.
    """
    if schedule.fingerprint() != result.schedule_fingerprint:
        raise CompatibilityError(
            "inversion artifact was built against a different schedule"
        )
    cond = result.condition if condition is None else condition
    x = result.x_T
    for t in range(schedule.T, 0, -1):
        eps = predictor.predict(x, t, cond)
        x = mu_hat(x, eps, t, schedule) + schedule.sigma(t) * result.z_at(t)
    return x
