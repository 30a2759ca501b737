"""Summation matrices for temporal and structural hierarchies.

A hierarchy is described by its 0/1 summation matrix ``S`` (n x m) whose last
``m`` rows are the identity: the bottom-level series sum into every aggregate
node above them.  Node order is coarse to fine, so the matrix splits as
``S = [S_T; I_m]`` with ``S_T`` holding the aggregate rows.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "Hierarchy",
    "NodeSelection",
    "build_temporal",
    "build_structural",
    "select",
    "check_coherency",
    "from_spec",
    "load_spec",
]


@dataclass(frozen=True)
class Hierarchy:
    """Validated summation matrix plus node labels and level grouping.

    ``level_groups`` maps a display label (e.g. ``"24h"``) to the node
    indices belonging to that aggregation level; it drives the per-level
    rows of the variance-separation table.
    """

    S: np.ndarray
    labels: tuple[str, ...]
    level_groups: tuple[tuple[str, tuple[int, ...]], ...] = field(default=())

    def __post_init__(self):
        S = np.asarray(self.S, dtype=float)
        if S.ndim != 2:
            raise ValueError("S must be 2-d")
        n, m = S.shape
        if n <= m or m < 1:
            raise ValueError(f"S must have more rows than columns, got {n}x{m}")
        if not np.all(np.isin(S, (0.0, 1.0))):
            raise ValueError("S entries must be 0 or 1")
        if not np.array_equal(S[n - m :], np.eye(m)):
            raise ValueError("last m rows of S must equal the identity")
        top_sums = S[: n - m].sum(axis=1)
        if np.any(top_sums < 2):
            bad = int(np.argmin(top_sums))
            raise ValueError(
                f"aggregate row {bad} sums fewer than 2 bottom series; not a genuine aggregate"
            )
        if len(self.labels) != n:
            raise ValueError(f"expected {n} labels, got {len(self.labels)}")
        if len(set(self.labels)) != n:
            raise ValueError("node labels must be unique")
        S.setflags(write=False)
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "labels", tuple(self.labels))
        if not self.level_groups:
            groups = (
                ("aggregate", tuple(range(n - m))),
                ("bottom", tuple(range(n - m, n))),
            )
            object.__setattr__(self, "level_groups", groups)

    @property
    def n(self) -> int:
        return self.S.shape[0]

    @property
    def m(self) -> int:
        return self.S.shape[1]

    @property
    def S_T(self) -> np.ndarray:
        """Aggregate-only top block, (n - m) x m."""
        return self.S[: self.n - self.m]

    @property
    def bottom_labels(self) -> tuple[str, ...]:
        return self.labels[self.n - self.m :]

    @property
    def top_labels(self) -> tuple[str, ...]:
        return self.labels[: self.n - self.m]

    def index_of(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise KeyError(f"unknown node label {label!r}") from None


@dataclass(frozen=True)
class NodeSelection:
    """A strictly increasing subset of node indices and the matching rows of S."""

    indices: tuple[int, ...]
    S_I: np.ndarray
    labels: tuple[str, ...]

    @property
    def q(self) -> int:
        return len(self.indices)


def build_temporal(period: int, levels: Sequence[int]) -> Hierarchy:
    """Temporal hierarchy over one forecast window of ``period`` steps.

    Each entry of ``levels`` is an aggregation block length that must divide
    ``period``; level 1 (the bottom) must be present.  Nodes are ordered
    coarse to fine and, within a level, by position in the window.

    >>> h = build_temporal(4, [4, 2, 1])
    >>> h.S.astype(int).tolist()
    [[1, 1, 1, 1], [1, 1, 0, 0], [0, 0, 1, 1], [1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1]]
    """
    if period < 2:
        raise ValueError("period must be at least 2")
    lv = [int(k) for k in levels]
    if len(set(lv)) != len(lv):
        raise ValueError("duplicate aggregation levels")
    if 1 not in lv:
        raise ValueError("levels must include the bottom level 1")
    for k in lv:
        if k < 1 or period % k != 0:
            raise ValueError(f"level {k} does not divide period {period}")
    lv_sorted = sorted(lv, reverse=True)
    m = period
    rows, labels, groups = [], [], []
    for k in lv_sorted:
        blocks = period // k
        start = len(rows)
        for j in range(blocks):
            row = np.zeros(m)
            row[j * k : (j + 1) * k] = 1.0
            rows.append(row)
            labels.append(f"{k}h" if blocks == 1 else f"{k}h-{j + 1}")
        groups.append((f"{k}h", tuple(range(start, start + blocks))))
    S = np.vstack(rows)
    return Hierarchy(S=S, labels=tuple(labels), level_groups=tuple(groups))


def build_structural(
    aggregates: Sequence[Iterable[int]],
    bottom_labels: Sequence[str],
    aggregate_labels: Sequence[str] | None = None,
) -> Hierarchy:
    """Cross-sectional hierarchy from explicit aggregate membership sets.

    ``aggregates`` lists, per aggregate node and in top-to-bottom order, the
    0-based bottom-series indices it sums.  Every aggregate needs at least
    two members.
    """
    m = len(bottom_labels)
    if m < 1:
        raise ValueError("need at least one bottom series")
    aggs = [sorted(set(int(i) for i in a)) for a in aggregates]
    if not aggs:
        raise ValueError("need at least one aggregate row")
    if aggregate_labels is None:
        aggregate_labels = [f"agg{j + 1}" for j in range(len(aggs))]
    if len(aggregate_labels) != len(aggs):
        raise ValueError("one label per aggregate required")
    top = np.zeros((len(aggs), m))
    for j, members in enumerate(aggs):
        for i in members:
            if i < 0 or i >= m:
                raise ValueError(
                    f"aggregate {aggregate_labels[j]!r} references bottom index {i}, "
                    f"valid range is 0..{m - 1}"
                )
        top[j, members] = 1.0
    S = np.vstack([top, np.eye(m)])
    labels = tuple(aggregate_labels) + tuple(bottom_labels)
    return Hierarchy(S=S, labels=labels)


def select(h: Hierarchy, nodes: Iterable[int | str]) -> NodeSelection:
    """Row selection ``S_I`` for a subset of nodes given by index or label."""
    idx = []
    for node in nodes:
        i = h.index_of(node) if isinstance(node, str) else int(node)
        if i < 0 or i >= h.n:
            raise IndexError(f"node index {i} out of range 0..{h.n - 1}")
        idx.append(i)
    if len(set(idx)) != len(idx):
        raise ValueError("duplicate nodes in selection")
    if not idx:
        raise ValueError("empty selection")
    idx = sorted(idx)
    return NodeSelection(
        indices=tuple(idx),
        S_I=h.S[idx],
        labels=tuple(h.labels[i] for i in idx),
    )


def check_coherency(h: Hierarchy, P, tol: float = 1e-9) -> bool:
    """True iff ``max |P S - I_m| <= tol``."""
    P = np.asarray(P, dtype=float)
    if P.shape != (h.m, h.n):
        raise ValueError(f"P must be {h.m}x{h.n}, got {P.shape}")
    return float(np.abs(P @ h.S - np.eye(h.m)).max()) <= tol


def coherency_gap(h: Hierarchy, P) -> float:
    """``max |P S - I_m|``, the amount by which the linear constraints fail."""
    P = np.asarray(P, dtype=float)
    return float(np.abs(P @ h.S - np.eye(h.m)).max())


def from_spec(spec: dict) -> Hierarchy:
    """Build a hierarchy from its JSON description.

    Two forms are accepted::

        {"temporal": {"period": 24, "levels": [24, 12, 8, 6, 4, 3, 2, 1]}}
        {"structural": {"bottom": ["SE1", ...],
                        "aggregates": [{"label": "SE", "members": ["SE1", ...]}]}}
    """
    if "temporal" in spec and "structural" in spec:
        raise ValueError("hierarchy spec must be temporal or structural, not both")
    if "temporal" in spec:
        t = spec["temporal"]
        return build_temporal(int(t["period"]), t["levels"])
    if "structural" in spec:
        s = spec["structural"]
        bottom = list(s["bottom"])
        pos = {lab: i for i, lab in enumerate(bottom)}
        member_sets, agg_labels = [], []
        for agg in s["aggregates"]:
            try:
                member_sets.append([pos[lab] for lab in agg["members"]])
            except KeyError as exc:
                raise ValueError(
                    f"aggregate {agg.get('label')!r} references unknown bottom label {exc.args[0]!r}"
                ) from None
            agg_labels.append(agg["label"])
        return build_structural(member_sets, bottom, agg_labels)
    raise ValueError("hierarchy spec needs a 'temporal' or 'structural' key")


def load_spec(path) -> Hierarchy:
    with open(path) as fh:
        return from_spec(json.load(fh))
