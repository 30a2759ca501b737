"""Aligned observation / base-forecast panels."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .hierarchy import Hierarchy

__all__ = ["ForecastPanel"]


@dataclass(frozen=True)
class ForecastPanel:
    """Bottom-level observations next to base forecasts for every node.

    ``Y`` is T x m (bottom observations), ``Yhat`` is T x n (base forecasts,
    columns ordered exactly as the hierarchy rows).  ``times`` is an opaque
    per-row sort key used only for reporting.
    """

    Y: np.ndarray
    Yhat: np.ndarray
    times: tuple = field(default=())

    def __post_init__(self):
        Y = np.asarray(self.Y, dtype=float)
        Yhat = np.asarray(self.Yhat, dtype=float)
        if Y.ndim != 2 or Yhat.ndim != 2:
            raise ValueError("Y and Yhat must be 2-d")
        if Y.shape[0] != Yhat.shape[0]:
            raise ValueError(
                f"row mismatch: Y has {Y.shape[0]} rows, Yhat has {Yhat.shape[0]}"
            )
        if Y.shape[1] >= Yhat.shape[1]:
            raise ValueError("Yhat must cover more nodes than the bottom level alone")
        if not (np.all(np.isfinite(Y)) and np.all(np.isfinite(Yhat))):
            raise ValueError("panel contains non-finite entries")
        if self.times and len(self.times) != Y.shape[0]:
            raise ValueError("times must align with panel rows")
        Y.setflags(write=False)
        Yhat.setflags(write=False)
        object.__setattr__(self, "Y", Y)
        object.__setattr__(self, "Yhat", Yhat)
        object.__setattr__(self, "times", tuple(self.times))

    @property
    def t_obs(self) -> int:
        return self.Y.shape[0]

    def check_against(self, h: Hierarchy) -> None:
        if self.Y.shape[1] != h.m or self.Yhat.shape[1] != h.n:
            raise ValueError(
                f"panel shaped for (m={self.Y.shape[1]}, n={self.Yhat.shape[1]}) "
                f"does not match hierarchy (m={h.m}, n={h.n})"
            )

    def yhat_top(self, h: Hierarchy) -> np.ndarray:
        self.check_against(h)
        return self.Yhat[:, : h.n - h.m]

    def yhat_bottom(self, h: Hierarchy) -> np.ndarray:
        self.check_against(h)
        return self.Yhat[:, h.n - h.m :]

    def response(self, h: Hierarchy) -> np.ndarray:
        """Bottom-level base-forecast errors ``Y - Yhat_B``, the regression target."""
        return self.Y - self.yhat_bottom(h)

    def base_errors(self, h: Hierarchy) -> np.ndarray:
        """All-level base-forecast errors ``Y S^T - Yhat`` (T x n)."""
        self.check_against(h)
        return self.Y @ h.S.T - self.Yhat
