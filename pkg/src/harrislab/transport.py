"""Discrete measures on the line and exact Wasserstein-1 machinery.

``w1_real`` integrates the absolute CDF difference over the merged support,
which is the exact 1D optimal transport cost.  ``w1_ensembles`` lifts it one
level: the distance between two finite families of measures is the optimal
transport cost between the uniform distributions over the families, with the
inner distance as ground cost.  Equal-size families reduce to an assignment
problem and are solved exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment, linprog
from scipy.sparse import csr_matrix, eye, kron, vstack

WEIGHT_TOL = 1e-12


@dataclass(frozen=True)
class DiscreteMeasure:
    """Probability measure with finitely many atoms on the real line.

    Atoms are strictly increasing; weights are positive and sum to one
    within ``1e-12``.  Use :meth:`from_points` to build one from unsorted or
    duplicated data (duplicates are merged, zero weights dropped).
    """

    atoms: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        atoms = np.asarray(self.atoms, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", weights)
        if atoms.ndim != 1 or weights.shape != atoms.shape or len(atoms) == 0:
            raise ValueError("atoms and weights must be equal-length 1-d arrays")
        if not np.all(np.diff(atoms) > 0):
            raise ValueError("atoms must be strictly increasing; use from_points to merge")
        if np.any(weights <= 0):
            raise ValueError("weights must be positive; use from_points to drop zeros")
        if abs(weights.sum() - 1.0) >= WEIGHT_TOL:
            raise ValueError(f"weights must sum to 1 (got {weights.sum()!r})")

    @classmethod
    def from_points(cls, atoms, weights) -> "DiscreteMeasure":
        """Sort atoms, merge duplicates by summing weights, drop zero weights."""
        atoms = np.asarray(atoms, dtype=float)
        weights = np.asarray(weights, dtype=float)
        if atoms.shape != weights.shape or atoms.ndim != 1:
            raise ValueError("atoms and weights must be equal-length 1-d arrays")
        if np.any(weights < 0):
            raise ValueError("weights must be nonnegative")
        order = np.argsort(atoms, kind="stable")
        atoms = atoms[order]
        weights = weights[order]
        uniq, inverse = np.unique(atoms, return_inverse=True)
        merged = np.zeros(len(uniq))
        np.add.at(merged, inverse, weights)
        keep = merged > 0
        return cls(uniq[keep], merged[keep])

    @classmethod
    def dirac(cls, at: float) -> "DiscreteMeasure":
        return cls(np.array([float(at)]), np.array([1.0]))

    def shift(self, c: float) -> "DiscreteMeasure":
        return DiscreteMeasure(self.atoms + c, self.weights)

    def quantile(self, levels) -> np.ndarray:
        """Right-continuous inverse CDF evaluated at the given levels in (0, 1]."""
        levels = np.asarray(levels, dtype=float)
        cum = np.cumsum(self.weights)
        cum[-1] = 1.0
        idx = np.searchsorted(cum, levels, side="left")
        return self.atoms[np.minimum(idx, len(self.atoms) - 1)]

    def to_json(self) -> str:
        return json.dumps({"atoms": self.atoms.tolist(), "weights": self.weights.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "DiscreteMeasure":
        obj = json.loads(text)
        return cls.from_points(obj["atoms"], obj["weights"])


@dataclass(frozen=True)
class MeasureEnsemble:
    """Independent draws of a random measure, tagged with their provenance."""

    samples: list = field(repr=False)
    provenance: str = "unknown"

    def __post_init__(self):
        if len(self.samples) < 1:
            raise ValueError("ensemble must contain at least one sample")
        for s in self.samples:
            if not isinstance(s, DiscreteMeasure):
                raise TypeError("ensemble samples must be DiscreteMeasure instances")

    def __len__(self):
        return len(self.samples)


def uniform_interval_masses(n: int) -> np.ndarray:
    """Masses a uniform law on [0, 1] assigns to the n-interval partition."""
    return np.full(n, 1.0 / n)


def midpoint_atoms(n: int) -> np.ndarray:
    """Midpoints (2k - 1) / (2n) of the n-interval partition of [0, 1]."""
    return (2.0 * np.arange(1, n + 1) - 1.0) / (2.0 * n)


def discretize(mu, n: int) -> DiscreteMeasure:
    """Project a measure supported in [0, 1] onto the n interval midpoints.

    Atom k sits at ``(2k - 1) / (2n)`` and carries the mass of
    ``[(k-1)/n, k/n)``; the last interval is closed at 1 so boundary mass is
    kept.  ``mu`` is either a :class:`DiscreteMeasure` or the string
    ``"uniform"`` for Lebesgue measure on [0, 1].  Zero-mass midpoints are
    dropped.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    mids = midpoint_atoms(n)
    if isinstance(mu, str):
        if mu != "uniform":
            raise ValueError(f"unknown measure spec {mu!r}")
        return DiscreteMeasure(mids, uniform_interval_masses(n))
    if not isinstance(mu, DiscreteMeasure):
        raise TypeError("mu must be a DiscreteMeasure or the string 'uniform'")
    if mu.atoms[0] < 0.0 or mu.atoms[-1] > 1.0:
        raise ValueError("support of mu must be contained in [0, 1]")
    # interval of atom a: floor(a * n), except a = 1 belongs to the last one
    idx = np.minimum(np.floor(mu.atoms * n).astype(int), n - 1)
    masses = np.zeros(n)
    np.add.at(masses, idx, mu.weights)
    keep = masses > 0
    return DiscreteMeasure(mids[keep], masses[keep])


def pushforward(mu_n: DiscreteMeasure, endpoint_map) -> DiscreteMeasure:
    """Image measure under an atom-wise map; equal images merge their mass.

    ``endpoint_map`` may be an array aligned with ``mu_n.atoms``, a mapping
    keyed by atom value, or a callable.  Every atom must have an image.
    """
    if callable(endpoint_map):
        images = np.asarray([endpoint_map(a) for a in mu_n.atoms], dtype=float)
    elif isinstance(endpoint_map, dict):
        try:
            images = np.asarray([endpoint_map[a] for a in mu_n.atoms], dtype=float)
        except KeyError as exc:
            raise ValueError(f"missing endpoint for atom {exc.args[0]!r}") from exc
    else:
        images = np.asarray(endpoint_map, dtype=float)
        if images.shape != mu_n.atoms.shape:
            raise ValueError("endpoint array must align with the atoms")
    if np.any(~np.isfinite(images)):
        raise ValueError("endpoint map produced non-finite positions")
    return DiscreteMeasure.from_points(images, mu_n.weights)


def w1_real(a: DiscreteMeasure, b: DiscreteMeasure) -> float:
    """Exact Wasserstein-1 distance on the line: CDF difference integral."""
    xs = np.concatenate([a.atoms, b.atoms])
    xs.sort(kind="mergesort")
    deltas = np.diff(xs)
    ca = np.concatenate([[0.0], np.cumsum(a.weights)])
    cb = np.concatenate([[0.0], np.cumsum(b.weights)])
    fa = ca[np.searchsorted(a.atoms, xs[:-1], side="right")]
    fb = cb[np.searchsorted(b.atoms, xs[:-1], side="right")]
    return float(np.sum(np.abs(fa - fb) * deltas))


def assignment_solve(cost, lexicographic: bool = True):
    """Exact minimum-cost perfect matching on a square cost matrix.

    Returns ``(permutation, total_cost)`` where ``permutation[i]`` is the
    column matched to row ``i``.  With ``lexicographic=True`` (default) the
    returned permutation is the lexicographically smallest among all optimal
    ones, fixed row by row; turn it off when only the optimal value matters.
    """
    cost = np.asarray(cost, dtype=float)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise ValueError("cost matrix must be square; use w1_ensembles for rectangular OT")
    if not np.all(np.isfinite(cost)):
        raise ValueError("cost matrix entries must be finite")
    m = cost.shape[0]
    rows, cols = linear_sum_assignment(cost)
    total = float(cost[rows, cols].sum())
    if not lexicographic or m == 1:
        perm = np.empty(m, dtype=int)
        perm[rows] = cols
        return perm, total
    tol = 1e-9 * max(1.0, abs(total))
    perm = np.empty(m, dtype=int)
    free = list(range(m))
    remaining = total
    for i in range(m):
        sub_rows = np.arange(i + 1, m)
        chosen = None
        for j in free:
            rest_cols = [c for c in free if c != j]
            if len(sub_rows) == 0:
                completion = 0.0
            else:
                sub = cost[np.ix_(sub_rows, rest_cols)]
                rr, cc = linear_sum_assignment(sub)
                completion = float(sub[rr, cc].sum())
            if cost[i, j] + completion <= remaining + tol:
                chosen = j
                break
        assert chosen is not None, "no column completes the optimal assignment"
        perm[i] = chosen
        remaining -= cost[i, chosen]
        free.remove(chosen)
    return perm, total


def _uniform_marginal_ot(cost: np.ndarray) -> float:
    """Exact rectangular OT with uniform marginals, solved as a sparse LP."""
    m, k = cost.shape
    row_sums = kron(eye(m, format="csr"), csr_matrix(np.ones(k)))
    col_sums = kron(csr_matrix(np.ones(m)), eye(k, format="csr"))
    a_eq = vstack([row_sums, col_sums]).tocsr()
    b_eq = np.concatenate([np.full(m, 1.0 / m), np.full(k, 1.0 / k)])
    res = linprog(cost.ravel(), A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if res.status != 0:
        raise RuntimeError(f"transport LP failed: {res.message}")
    return float(res.fun)


def w1_cost_matrix(a: MeasureEnsemble, b: MeasureEnsemble) -> np.ndarray:
    return np.array([[w1_real(x, y) for y in b.samples] for x in a.samples])


def w1_ensembles(a: MeasureEnsemble, b: MeasureEnsemble) -> float:
    """Wasserstein-1 between the uniform laws over two measure families.

    Ground cost is the inner ``w1_real``.  Equal sizes: exact assignment,
    reported as mean matched cost.  Unequal sizes: exact LP with uniform
    marginals (total transported mass one, so no extra normalization).
    """
    cost = w1_cost_matrix(a, b)
    m, k = cost.shape
    if m == k:
        _, total = assignment_solve(cost, lexicographic=False)
        return total / m
    return _uniform_marginal_ot(cost)
