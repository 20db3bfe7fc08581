"""Scenario sampling, ash classification and scenario bundling.

Random streams come from numpy's Philox4x64-10 counter-based generator keyed
through ``SeedSequence(entropy=[seed, *stream])``; ``tests/test_scenario.py``
pins the first draws as test vectors.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from pelletsc.model import Scenario

log = logging.getLogger(__name__)

# stream tags for derived seeds
STREAM_REPLICATION = 1
STREAM_EVAL = 2
STREAM_BUNDLE = 3


def make_rng(seed) -> np.random.Generator:
    entropy = [int(s) for s in np.atleast_1d(seed)]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def derive_seed(master_seed: int, stream: int, index: int = 0) -> tuple:
    return (int(master_seed), int(stream), int(index))


@dataclass(frozen=True, eq=False)
class ScenarioModelSpec:
    """Distributions of the uncertain parameters.

    supply ~ max(0, mean * (1 + cv * N(0,1))) per (b, i, t); dry-matter loss
    ~ U[dml_low, dml_high] per (b, tau, t); ash content and excess moisture
    ~ triangular(min, mode, max) per (b, j, t), scaled by the quality
    multipliers; preheating ~ Bernoulli(preheat_prob) per (b, j, t), shared
    by all ash ranges.
    """

    supply_mean: np.ndarray  # (B, I, T)
    n_depots: int
    ash_edges: tuple  # R + 1 increasing edges, last may be inf
    supply_cv: float = 0.25
    dml_low: float = 0.01
    dml_high: float = 0.05
    ash_tri: tuple = (0.005, 0.012, 0.03)
    moisture_tri: tuple = (0.02, 0.08, 0.2)
    preheat_prob: float = 0.5
    smear_width: float = 0.0
    ash_mult: float = 1.0
    moist_mult: float = 1.0

    @property
    def shape(self):
        B, I, T = np.shape(self.supply_mean)
        return B, I, self.n_depots, len(self.ash_edges) - 1, T

    def with_quality(self, ash_mult: float = 1.0, moist_mult: float = 1.0) -> "ScenarioModelSpec":
        return replace(self, ash_mult=float(ash_mult), moist_mult=float(moist_mult))

    def scaled_distributions(self) -> "ScenarioModelSpec":
        """Same law with the multipliers folded into the triangular parameters."""
        return replace(self, ash_tri=tuple(v * self.ash_mult for v in self.ash_tri),
                       moisture_tri=tuple(v * self.moist_mult for v in self.moisture_tri),
                       ash_mult=1.0, moist_mult=1.0)

    def problems(self) -> list[str]:
        out = []
        mean = np.asarray(self.supply_mean, float)
        if mean.ndim != 3 or np.any(mean < 0) or not np.all(np.isfinite(mean)):
            out.append("supply_mean must be a finite non-negative (B, I, T) array")
        if self.n_depots < 1:
            out.append("n_depots must be >= 1")
        if self.supply_cv < 0:
            out.append("supply_cv must be >= 0")
        if not 0 <= self.dml_low <= self.dml_high < 1:
            out.append("need 0 <= dml_low <= dml_high < 1")
        for name in ("ash_tri", "moisture_tri"):
            a, c, b = getattr(self, name)
            if not (0 <= a <= c <= b <= 1) or a == b:
                out.append(f"{name} must satisfy 0 <= min <= mode <= max <= 1 with min < max")
        if not 0 <= self.preheat_prob <= 1:
            out.append("preheat_prob outside [0, 1]")
        edges = np.asarray(self.ash_edges, float)
        if edges.size < 2 or np.any(np.diff(edges) <= 0):
            out.append("ash_edges must be strictly increasing with at least two entries")
        if self.smear_width < 0:
            out.append("smear_width must be >= 0")
        if self.ash_mult <= 0 or self.moist_mult <= 0:
            out.append("quality multipliers must be positive")
        if self.ash_tri[2] * self.ash_mult > 1 or self.moisture_tri[2] * self.moist_mult > 1:
            out.append("scaled ash/moisture support leaves [0, 1]")
        return out


def triangular_ppf(u: np.ndarray, lo: float, mode: float, hi: float) -> np.ndarray:
    u = np.asarray(u, float)
    span = hi - lo
    split = (mode - lo) / span
    left = lo + np.sqrt(u * span * (mode - lo))
    right = hi - np.sqrt((1.0 - u) * span * (hi - mode))
    return np.where(u < split, left, right)


def derive_ash_fractions(gamma, edges: Sequence[float], width: float = 0.0) -> np.ndarray:
    """Distribute each ash content over half-open ranges [e_r, e_{r+1}).

    With ``width == 0`` the whole mass lands on the range containing gamma.
    Otherwise gamma is smeared uniformly over [gamma - w/2, gamma + w/2] and
    each range receives its overlap; mass outside the edges is credited to the
    nearest end range. Returns an array with a trailing axis of length R.
    """
    edges = np.asarray(edges, float)
    if edges.size < 2 or np.any(np.diff(edges) <= 0):
        raise ValueError("edges must be strictly increasing")
    g = np.asarray(gamma, float)
    R = edges.size - 1
    out = np.zeros(g.shape + (R,))
    if width <= 0:
        idx = np.searchsorted(edges, g, side="right") - 1
        if np.any(idx >= R) or np.any(g >= edges[-1]):
            log.warning("ash content above the top edge; clamped to the highest range")
        if np.any(idx < 0):
            log.warning("ash content below the first edge; clamped to the lowest range")
        idx = np.clip(idx, 0, R - 1)
        np.put_along_axis(out, idx[..., None], 1.0, axis=-1)
        return out
    lo = g - width / 2
    hi = g + width / 2
    for r in range(R):
        a = -np.inf if r == 0 else edges[r]
        b = np.inf if r == R - 1 else edges[r + 1]
        out[..., r] = np.clip(np.minimum(hi, b) - np.maximum(lo, a), 0.0, None) / width
    return out / out.sum(axis=-1, keepdims=True)


def sample_scenarios(spec: ScenarioModelSpec, n: int, seed) -> list[Scenario]:
    """Draw ``n`` equiprobable scenarios; a pure function of (spec, n, seed)."""
    if n < 1:
        raise ValueError("need at least one scenario")
    bad = spec.problems()
    if bad:
        raise ValueError("invalid scenario model: " + "; ".join(bad))
    B, I, J, R, T = spec.shape
    rng = make_rng(seed)
    mean = np.asarray(spec.supply_mean, float)
    tri_mask = np.tril(np.ones((T, T)), 0).T  # [tau, t] = 1 when tau <= t
    out = []
    for _ in range(n):
        z = rng.standard_normal((B, I, T))
        u_dml = rng.random((B, T, T))
        u_ash = rng.random((B, J, T))
        u_moist = rng.random((B, J, T))
        u_pre = rng.random((B, J, T))
        supply = np.maximum(0.0, mean * (1.0 + spec.supply_cv * z))
        dml = (spec.dml_low + (spec.dml_high - spec.dml_low) * u_dml) * tri_mask
        gamma = np.clip(triangular_ppf(u_ash, *spec.ash_tri) * spec.ash_mult, 0.0, 1.0)
        moist = np.clip(triangular_ppf(u_moist, *spec.moisture_tri) * spec.moist_mult, 0.0, 1.0)
        pre = (u_pre < spec.preheat_prob).astype(float)
        frac = derive_ash_fractions(gamma, spec.ash_edges, spec.smear_width)  # (B, J, T, R)
        out.append(Scenario(
            probability=1.0 / n, supply=supply, dml=dml,
            ash_fraction=np.moveaxis(frac, -1, 2), ash_content=gamma, moisture=moist,
            preheat=np.repeat(pre[:, :, None, :], R, axis=2),
        ))
    return out


def supply_score(scenarios: Sequence[Scenario]) -> float:
    """Total supply mass over (b, i, t, omega)."""
    return float(sum(np.sum(sc.supply) for sc in scenarios))


@dataclass(frozen=True)
class Bundle:
    members: tuple
    probabilities: tuple  # conditional, sum to 1
    mass: float = field(default=1.0)


def make_bundles(scenarios: Sequence[Scenario], groups: Sequence[Sequence[int]]) -> list[Bundle]:
    out = []
    for g in groups:
        g = tuple(sorted(int(k) for k in g))
        p = np.array([scenarios[k].probability for k in g])
        out.append(Bundle(g, tuple(p / p.sum()), float(p.sum())))
    return out


def bundle_scenarios(scenarios: Sequence[Scenario], n_bundles: int,
                     method: str = "round_robin", seed=0) -> list[Bundle]:
    n = len(scenarios)
    if not 1 <= n_bundles <= n:
        raise ValueError(f"n_bundles must lie in [1, {n}]")
    if method == "round_robin":
        groups = [[k for k in range(n) if k % n_bundles == g] for g in range(n_bundles)]
    elif method == "supply_kmeans":
        groups = _kmeans_groups(scenarios, n_bundles, seed)
    else:
        raise ValueError(f"unknown bundling method {method!r}")
    groups.sort(key=min)
    return make_bundles(scenarios, groups)


def _kmeans_groups(scenarios, k, seed) -> list[list[int]]:
    from sklearn.cluster import KMeans

    feats = np.array([sc.supply.ravel() for sc in scenarios])
    n = len(scenarios)
    if k == n:
        return [[i] for i in range(n)]
    rs = int(make_rng(derive_seed(seed, STREAM_BUNDLE)).integers(2**31 - 1))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        km = KMeans(n_clusters=k, n_init=1, max_iter=50, random_state=rs).fit(feats)
    labels = km.labels_.copy()
    # duplicate points can leave a cluster empty; move the farthest member of the largest cluster
    dist = np.linalg.norm(feats - km.cluster_centers_[labels], axis=1)
    for c in range(k):
        if np.any(labels == c):
            continue
        counts = np.bincount(labels, minlength=k)
        big = int(np.argmax(counts))
        cand = np.flatnonzero(labels == big)
        mover = int(cand[np.argmax(dist[cand])])
        labels[mover] = c
        dist[mover] = 0.0
    return [np.flatnonzero(labels == c).tolist() for c in range(k)]
