"""Stagewise gluing transform of a simulated particle path.

Given a base path and a gap threshold ``epsilon``, the transform produces a
chain of processes: stage 1 is the base path itself; each later stage
freezes, from the stage's trigger time on, the particles that just came
within ``epsilon`` of their left neighbor at exact epsilon offsets from the
leftmost member (the leader) of their group, and lets them ride the leader's
increments.  Triggers are grid times at which the number of adjacent pairs
with gap <= epsilon increases; several pairs reaching the threshold at one
grid time are merged in a single left-to-right pass.

Group membership is kept as integer leader indices, so run detection never
compares floating-point offsets: a pair is exactly glued if and only if the
two particles share a leader.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .flows import FlowPath, _rng
from .stats import MeanCI, mean_ci

WALD_HITTING_CONSTANT = 4.0 * math.sqrt(2.0) / math.sqrt(math.pi)


@dataclass(frozen=True)
class CouplingTrace:
    """Record of the stagewise gluing transform of one base path.

    ``sigma`` lists the n-1 trigger times (grid times, ``inf`` when a stage
    never triggered).  ``partitions[i]`` is the particle partition (0-based
    indices, contiguous blocks) in force after trigger ``i``; untriggered
    entries repeat the last partition.  ``stage_sup_discrepancy[i][k]`` is
    the sup over grid times of the distance between particle k's stage-(i+1)
    and stage-(i+2) paths.  ``stage_paths`` holds the n stage matrices when
    they were requested at build time.
    """

    epsilon: float
    base_path: FlowPath
    sigma: np.ndarray
    sigma_steps: np.ndarray
    partitions: tuple
    stage_sup_discrepancy: np.ndarray
    final_endpoints: np.ndarray
    stage_paths: list | None = field(default=None, repr=False)

    @property
    def n_particles(self) -> int:
        return self.base_path.n_particles


def _leader_partition(leader: np.ndarray) -> tuple:
    groups: list[list[int]] = []
    for k in range(len(leader)):
        if leader[k] == k:
            groups.append([k])
        else:
            groups[-1].append(k)
    return tuple(tuple(g) for g in groups)


def build_coupling(path: FlowPath, epsilon: float, keep_stage_paths: bool = True) -> CouplingTrace:
    """Run the stagewise gluing transform over a simulated path.

    Requires at least two particles and initial adjacent gaps strictly above
    ``epsilon``.  Stage detection reads the current stage's positions, i.e.
    base positions for ungrouped particles and exact epsilon-offset positions
    for grouped ones.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    P = path.positions
    n = path.n_particles
    if n < 2:
        raise ValueError("coupling needs at least two particles")
    if np.diff(P[0]).min() <= epsilon:
        raise ValueError("adjacent initial gaps must exceed epsilon at time 0")
    idx = np.arange(n)
    leader = idx.copy()
    events: list[tuple[int, np.ndarray, np.ndarray]] = []
    t_from = 0
    while len(events) < n - 1:
        inter = leader[1:] != leader[:-1]
        if not inter.any() or t_from >= path.n_steps:
            break
        off = (idx - leader) * epsilon
        seg = P[t_from + 1:, :][:, leader] + off[None, :]
        gaps = seg[:, 1:][:, inter] - seg[:, :-1][:, inter]
        trig = (gaps <= epsilon).any(axis=1)
        if not trig.any():
            break
        s = t_from + 1 + int(trig.argmax())
        before = leader.copy()
        for k in range(1, n):
            if leader[k] != leader[k - 1]:
                left = P[s, leader[k - 1]] + (k - 1 - leader[k - 1]) * epsilon
                right = P[s, leader[k]] + (k - leader[k]) * epsilon
                if right - left <= epsilon:
                    leader[leader == leader[k]] = leader[k - 1]
        events.append((s, before, leader.copy()))
        t_from = s

    sigma_steps = np.full(n - 1, -1, dtype=np.int64)
    sigma = np.full(n - 1, np.inf)
    for i, (s, _, _) in enumerate(events):
        sigma_steps[i] = s
        sigma[i] = s * path.dt

    partitions = []
    current = _leader_partition(idx)
    for i in range(n - 1):
        if i < len(events):
            current = _leader_partition(events[i][2])
        partitions.append(current)

    disc = np.zeros((n - 1, n))
    for i, (s, before, after) in enumerate(events):
        for k in range(n):
            a, b = before[k], after[k]
            if a == b:
                continue
            seg = P[s:, a] - P[s:, b] + (b - a) * epsilon
            disc[i, k] = float(np.abs(seg).max())

    final_leader = events[-1][2] if events else idx
    final_endpoints = P[-1, final_leader] + (idx - final_leader) * epsilon

    stage_paths = None
    if keep_stage_paths:
        stage_paths = [P.copy()]
        current_mat = P.copy()
        for s, _, after in events:
            nxt = current_mat.copy()
            off = (idx - after) * epsilon
            nxt[s:, :] = P[s:, :][:, after] + off[None, :]
            stage_paths.append(nxt)
            current_mat = nxt
        while len(stage_paths) < n:
            stage_paths.append(current_mat.copy())

    return CouplingTrace(
        epsilon=epsilon,
        base_path=path,
        sigma=sigma,
        sigma_steps=sigma_steps,
        partitions=tuple(partitions),
        stage_sup_discrepancy=disc,
        final_endpoints=final_endpoints,
        stage_paths=stage_paths,
    )


def coupling_cost(trace: CouplingTrace, weights) -> float:
    """Weighted endpoint displacement between the base and final stage.

    One replica's contribution to the transport-distance upper bound between
    the laws of the raw and glued endpoint measures.
    """
    w = np.asarray(weights, dtype=float)
    n = trace.n_particles
    if w.shape != (n,) or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
        raise ValueError("weights must be a probability vector over the particles")
    base_end = trace.base_path.positions[-1]
    return float(np.sum(w * np.abs(base_end - trace.final_endpoints)))


def lemma3_statistic(traces, stage: int) -> MeanCI:
    """Monte Carlo mean of the per-replica stage discrepancy sums.

    ``stage`` is 1-based; the statistic for stage i averages, over traces,
    the sum over particles of the sup distance between stage-i and
    stage-(i+1) paths.  All traces must share the particle count, epsilon,
    and time grid.
    """
    traces = list(traces)
    if not traces:
        raise ValueError("need at least one trace")
    first = traces[0]
    n = first.n_particles
    if not 1 <= stage <= n - 1:
        raise ValueError(f"stage must lie in 1..{n - 1}")
    for tr in traces:
        if tr.n_particles != n or tr.epsilon != first.epsilon:
            raise ValueError("traces must share the particle count and epsilon")
        if tr.base_path.n_steps != first.base_path.n_steps or tr.base_path.dt != first.base_path.dt:
            raise ValueError("traces must share the time grid")
    values = [float(tr.stage_sup_discrepancy[stage - 1].sum()) for tr in traces]
    return mean_ci(values)


@dataclass(frozen=True)
class HittingBoundResult:
    estimate: float
    bound: float
    se: float
    replicas: int

    def __iter__(self):
        return iter((self.estimate, self.bound))


def wald_hitting_bound(c: float, horizon: float = 4.0) -> float:
    """Closed-form bound on the expected capped hitting time of level c < 0.

    The horizon-4 statement reads E(4 ^ tau_c) <= (4*sqrt(2)/sqrt(pi))*|c|;
    Brownian scaling stretches it to other horizons by sqrt(horizon / 4).
    """
    return WALD_HITTING_CONSTANT * abs(c) * math.sqrt(horizon / 4.0)


def hitting_time_bound_check(c: float, horizon: float = 4.0, replicas: int = 10_000,
                             seed: int = 0, dt: float = 1e-4,
                             bridge_correction: bool = True) -> HittingBoundResult:
    """Monte Carlo check of the capped-hitting-time bound for level c <= 0.

    Simulates standard Brownian paths on a dt grid; tau is the first grid
    time by which level c has been reached, with the exact sub-step bridge
    crossing probability exp(-2*a*b/dt) applied by default (pure grid
    detection biases the estimate upward by about 0.58*sqrt(dt), which
    swamps the bound's slack for small |c|).  Returns the estimate of
    E(horizon ^ tau) together with the closed-form bound.
    """
    if c > 0:
        raise ValueError("level c must be nonpositive")
    if replicas < 1:
        raise ValueError("need at least one replica")
    bound = wald_hitting_bound(c, horizon)
    if c == 0.0:
        return HittingBoundResult(0.0, bound, 0.0, replicas)
    T = int(round(horizon / dt))
    g = _rng(seed)
    sqdt = math.sqrt(dt)
    capped = np.full(replicas, horizon)
    done = 0
    chunk = max(1, min(replicas, 4_000_000 // max(T, 1) * 64))
    while done < replicas:
        C = min(chunk, replicas - done)
        w = np.zeros(C)
        tau = np.full(C, horizon)
        alive = np.arange(C)
        for t in range(T):
            if len(alive) == 0:
                break
            z = g.standard_normal(len(alive))
            w_new = w + sqdt * z
            hit = w_new <= c
            if bridge_correction:
                u = g.random(len(alive))
                a = w - c
                b = w_new - c
                hit |= (b > 0) & (u < np.exp(-2.0 * a * b / dt))
            if hit.any():
                tau[alive[hit]] = (t + 1) * dt
                keep = ~hit
                alive = alive[keep]
                w = w_new[keep]
            else:
                w = w_new
        capped[done:done + C] = np.minimum(tau, horizon)
        done += C
    est = mean_ci(capped)
    return HittingBoundResult(est.mean, bound, est.se, replicas)
