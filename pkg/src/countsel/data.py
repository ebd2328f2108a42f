"""Dataset container and model configuration."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

__all__ = ["Dataset", "ModelConfig", "LIKELIHOODS"]

LIKELIHOODS = ("binomial", "negbin")

_ALIASES = {
    "binomial": "binomial",
    "negbin": "negbin",
    "negative-binomial": "negbin",
    "negative_binomial": "negbin",
}


@dataclass
class Dataset:
    """Design matrix with integer responses and per-row totals.

    ``C`` holds binomial total counts; all ones encodes plain logistic
    regression and the column is ignored under the negative-binomial
    likelihood.
    """

    X: np.ndarray
    Y: np.ndarray
    C: np.ndarray
    names: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.X = np.ascontiguousarray(self.X, dtype=np.float64)
        self.Y = np.asarray(self.Y, dtype=np.int64)
        self.C = np.asarray(self.C, dtype=np.int64)
        if self.X.ndim != 2:
            raise ValueError("X must be a 2-d array")
        n, p = self.X.shape
        if n < 1 or p < 1:
            raise ValueError("need at least one row and one covariate")
        if not np.all(np.isfinite(self.X)):
            bad = np.argwhere(~np.isfinite(self.X))[0]
            raise ValueError(f"non-finite covariate value at row {bad[0]}, column {bad[1]}")
        if self.Y.shape != (n,):
            raise ValueError(f"Y must have length {n}, got {self.Y.shape}")
        if self.C.shape != (n,):
            raise ValueError(f"C must have length {n}, got {self.C.shape}")
        if np.any(self.Y < 0):
            raise ValueError(f"negative response at row {int(np.nonzero(self.Y < 0)[0][0])}")
        if np.any(self.C < 1):
            raise ValueError(f"non-positive total count at row {int(np.nonzero(self.C < 1)[0][0])}")
        if not self.names:
            self.names = [f"x{j + 1}" for j in range(p)]
        if len(self.names) != p:
            raise ValueError(f"expected {p} covariate names, got {len(self.names)}")

    @property
    def N(self) -> int:
        return self.X.shape[0]

    @property
    def P(self) -> int:
        return self.X.shape[1]

    def check_binomial(self):
        """Binomial responses cannot exceed their totals."""
        bad = np.nonzero(self.Y > self.C)[0]
        if bad.size:
            raise ValueError(
                f"response exceeds total count at row {int(bad[0])}: "
                f"Y={int(self.Y[bad[0]])} > C={int(self.C[bad[0]])}"
            )


@dataclass(frozen=True)
class ModelConfig:
    """Likelihood choice and prior hyperparameters.

    ``h`` defaults to 5/P (capped at 1/2 for tiny P) and ``psi0`` to
    log(mean(Y)); both are resolved against a concrete dataset by
    :meth:`resolve`.  ``tau_bias`` falls back to ``tau``.
    """

    likelihood: str = "binomial"
    tau: float = 0.01
    tau_bias: float | None = None
    h: float | None = None
    psi0: float | None = None

    def __post_init__(self):
        canon = _ALIASES.get(self.likelihood)
        if canon is None:
            raise ValueError(f"unknown likelihood {self.likelihood!r}; use one of {LIKELIHOODS}")
        object.__setattr__(self, "likelihood", canon)
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if self.tau_bias is not None and not self.tau_bias > 0:
            raise ValueError(f"tau_bias must be positive, got {self.tau_bias}")
        if self.h is not None and not 0.0 < self.h < 1.0:
            raise ValueError(f"h must lie strictly in (0, 1), got {self.h}")
        if self.psi0 is not None and not math.isfinite(self.psi0):
            raise ValueError(f"psi0 must be finite, got {self.psi0}")

    @property
    def is_negbin(self) -> bool:
        return self.likelihood == "negbin"

    def resolve(self, dataset: Dataset) -> "ModelConfig":
        """Fill dataset-dependent defaults and validate compatibility."""
        h = self.h if self.h is not None else min(5.0 / dataset.P, 0.5)
        tau_bias = self.tau_bias if self.tau_bias is not None else self.tau
        psi0 = self.psi0
        if self.is_negbin and psi0 is None:
            mean_y = float(dataset.Y.mean())
            if mean_y <= 0.0:
                raise ValueError("cannot default psi0: observed responses are all zero")
            psi0 = math.log(mean_y)
        if not self.is_negbin:
            dataset.check_binomial()
        return replace(self, h=h, tau_bias=tau_bias, psi0=psi0)

    @property
    def log_h_ratio(self) -> float:
        if self.h is None:
            raise ValueError("h is unresolved; call resolve() first")
        return math.log(self.h) - math.log1p(-self.h)
