"""Grid simulators for interacting Brownian particle systems on [0, horizon].

Three particle systems share one convention: a uniform grid of ``T`` steps of
size ``dt``, and a driving-noise layout of one ``(T, n)`` block of standard
normal increments followed, when sub-step crossing corrections are enabled,
by a ``(T, n-1)`` block of uniforms.  Replica ensembles consume chunks laid
out the same way, so a single-replica ensemble reproduces the matching
per-path simulator bit for bit.

Ordering is part of every contract: particle positions are nondecreasing in
the particle index at every grid time.  Groups that meet adopt the path of
their leftmost member (the leader), which keeps every marginal an unmodified
Brownian path up to the merge instant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .kernels import CovarianceKernel, indicator_kernel

HARRIS = "harris"
ARRATIA = "arratia"
GLUED = "glued"

_JITTER_LADDER = (0.0, 1e-12, 1e-11, 1e-10, 1e-9, 1e-8)


class FactorizationError(RuntimeError):
    """Covariance factorization failed even with maximal diagonal jitter."""


@dataclass(frozen=True)
class GluedFlowParams:
    """Gap threshold at which adjacent particles freeze into a rigid group."""

    epsilon: float

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")


@dataclass(frozen=True)
class FlowPath:
    """One realization of an n-point motion on a uniform time grid.

    ``positions`` has shape ``(T + 1, n)`` with ``positions[0]`` equal to the
    initial points.  ``pair_merge_step[k]`` is the grid index at which the
    adjacent pair ``(k, k+1)`` merged (coalesced, or glued at the epsilon
    offset), ``-1`` if it never did.
    """

    flow_kind: str
    initial_points: np.ndarray
    dt: float
    positions: np.ndarray
    seed: int
    pair_merge_step: np.ndarray | None = field(default=None, repr=False)
    epsilon: float | None = None

    @property
    def n_particles(self) -> int:
        return self.positions.shape[1]

    @property
    def n_steps(self) -> int:
        return self.positions.shape[0] - 1

    @property
    def horizon(self) -> float:
        return self.n_steps * self.dt

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.positions.shape[0]) * self.dt

    @property
    def endpoints(self) -> np.ndarray:
        return self.positions[-1]


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.PCG64(seed))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed))))


def _seed_field(seed) -> int:
    return -1 if isinstance(seed, np.random.SeedSequence) else int(seed)


def _steps(dt: float, horizon: float) -> int:
    if not 0 < dt <= horizon:
        raise ValueError("need 0 < dt <= horizon")
    steps = int(round(horizon / dt))
    if steps < 1 or abs(steps * dt - horizon) > 1e-6 * horizon:
        raise ValueError("horizon must be an integer multiple of dt")
    return steps


def _validate_initial(points, min_gap: float = 0.0, strict: bool = False) -> np.ndarray:
    u = np.asarray(points, dtype=float)
    if u.ndim != 1 or len(u) < 1:
        raise ValueError("initial points must form a nonempty 1-d array")
    gaps = np.diff(u)
    if strict:
        if np.any(gaps <= min_gap):
            raise ValueError(f"adjacent initial gaps must exceed {min_gap!r}")
    elif np.any(gaps < 0):
        raise ValueError("initial points must be sorted in nondecreasing order")
    return u.copy()


def _initial_leaders(u: np.ndarray) -> np.ndarray:
    """Leftmost index of each run of equal initial points."""
    n = len(u)
    leader = np.arange(n)
    for k in range(1, n):
        if u[k] == u[k - 1]:
            leader[k] = leader[k - 1]
    return leader


def _factor_with_jitter(cov: np.ndarray) -> np.ndarray:
    for jit in _JITTER_LADDER:
        try:
            if jit == 0.0:
                return np.linalg.cholesky(cov)
            return np.linalg.cholesky(cov + jit * np.eye(len(cov)))
        except np.linalg.LinAlgError:
            continue
    raise FactorizationError(
        "covariance factorization failed after diagonal jitter escalation to 1e-8; "
        "the kernel is likely not positive semidefinite"
    )


# ---------------------------------------------------------------------------
# coalescing / gluing resolution, vectorized over the time axis
# ---------------------------------------------------------------------------

def _resolve_merging(u, dt, Z, U, threshold, offset):
    """Columnwise merge recursion over raw Brownian paths.

    Particle k follows its own Brownian path until its difference to the
    already-resolved particle k-1 first drops to ``threshold`` at a grid time
    (or a sub-step bridge crossing fires, when a uniform block ``U`` is
    supplied); from then on it rides exactly ``offset`` above particle k-1.
    Returns the resolved ``(T+1, n)`` paths and per-pair merge indices.
    """
    T, n = Z.shape
    W = np.empty((T + 1, n))
    W[0] = u
    W[1:] = u[None, :] + np.cumsum(math.sqrt(dt) * Z, axis=0)
    merge = np.full(max(n - 1, 0), -1, dtype=np.int64)
    for k in range(1, n):
        D = W[:, k] - W[:, k - 1]
        hit = D <= threshold
        if U is not None:
            a = np.maximum(D[:-1] - threshold, 0.0)
            b = np.maximum(D[1:] - threshold, 0.0)
            hit[1:] |= U[:, k - 1] < np.exp(-(a * b) / dt)
        if hit.any():
            s = int(hit.argmax())
            merge[k - 1] = s
            W[s:, k] = W[s:, k - 1] + offset
    return W, merge


def _resolve_merging_block(u, dt, Z, U, threshold, offset):
    """Replica-batched version of :func:`_resolve_merging`; returns endpoints."""
    C, T, n = Z.shape
    W = np.empty((C, T + 1, n))
    W[:, 0, :] = u
    W[:, 1:, :] = u[None, None, :] + np.cumsum(math.sqrt(dt) * Z, axis=1)
    merge = np.full((C, max(n - 1, 0)), -1, dtype=np.int64)
    tidx = np.arange(T + 1)
    for k in range(1, n):
        D = W[:, :, k] - W[:, :, k - 1]
        hit = D <= threshold
        if U is not None:
            a = np.maximum(D[:, :-1] - threshold, 0.0)
            b = np.maximum(D[:, 1:] - threshold, 0.0)
            hit[:, 1:] |= U[:, :, k - 1] < np.exp(-(a * b) / dt)
        any_hit = hit.any(axis=1)
        s = np.where(any_hit, hit.argmax(axis=1), T + 1)
        mask = tidx[None, :] >= s[:, None]
        leader_vals = W[:, :, k - 1] + offset
        W[:, :, k] = np.where(mask, leader_vals, W[:, :, k])
        merge[:, k - 1] = np.where(any_hit, s, -1)
    return W[:, T, :], merge


def _ensemble_chunks(replicas: int, T: int, n: int, budget_floats: int = 8_000_000):
    chunk = max(1, min(replicas, budget_floats // max((T + 1) * n, 1)))
    done = 0
    while done < replicas:
        yield min(chunk, replicas - done)
        done += chunk


# ---------------------------------------------------------------------------
# coalescing Brownian particles (zero interaction range)
# ---------------------------------------------------------------------------

def simulate_arratia(initial_points, dt, horizon, seed, bridge_correction=True) -> FlowPath:
    """Independent Brownian particles that coalesce on meeting.

    Adjacent pairs merge at the first grid time their gap is <= 0; with the
    bridge correction on (default), an uncrossed pair also merges with the
    exact sub-step meeting probability exp(-a*b/dt) of the linear bridge of
    their gap (a, b: gaps at step start and end; the gap diffuses at rate 2).
    A merged pair adopts the left particle's path.
    """
    u = _validate_initial(initial_points)
    n = len(u)
    T = _steps(dt, horizon)
    g = _rng(seed)
    Z = g.standard_normal((T, n))
    U = g.random((T, n - 1)) if (bridge_correction and n > 1) else None
    pos, merge = _resolve_merging(u, dt, Z, U, threshold=0.0, offset=0.0)
    return FlowPath(ARRATIA, u, dt, pos, _seed_field(seed), pair_merge_step=merge)


def arratia_endpoint_ensemble(initial_points, dt, horizon, replicas, seed, bridge_correction=True):
    """Endpoints and merge indices for independent replicas, in one batch.

    Returns ``(endpoints, merge_steps)`` of shapes ``(replicas, n)`` and
    ``(replicas, n-1)``.  A single-replica call consumes the generator
    exactly like :func:`simulate_arratia` with the same seed.
    """
    u = _validate_initial(initial_points)
    n = len(u)
    T = _steps(dt, horizon)
    g = _rng(seed)
    ends, merges = [], []
    for C in _ensemble_chunks(replicas, T, n):
        Z = g.standard_normal((C, T, n))
        U = g.random((C, T, n - 1)) if (bridge_correction and n > 1) else None
        e, m = _resolve_merging_block(u, dt, Z, U, threshold=0.0, offset=0.0)
        ends.append(e)
        merges.append(m)
    return np.concatenate(ends), np.concatenate(merges)


# ---------------------------------------------------------------------------
# independent Brownian groups glued at a fixed gap
# ---------------------------------------------------------------------------

def _epsilon_of(params) -> float:
    if isinstance(params, GluedFlowParams):
        return params.epsilon
    eps = float(params)
    if not eps > 0:
        raise ValueError("epsilon must be positive")
    return eps


def simulate_glued(params, initial_points, dt, horizon, seed) -> FlowPath:
    """Group leaders drive independent Brownian paths; followers ride at
    exact epsilon offsets.

    Adjacent groups merge at the first grid time their gap is <= epsilon
    (grid detection only); the right group then snaps to offsets that are
    exact epsilon multiples above the left group's leader and never detaches.
    The first particle's path is its own Brownian path, never modified.
    """
    eps = _epsilon_of(params)
    u = _validate_initial(initial_points, min_gap=eps, strict=True)
    n = len(u)
    T = _steps(dt, horizon)
    g = _rng(seed)
    Z = g.standard_normal((T, n))
    pos, merge = _resolve_merging(u, dt, Z, None, threshold=eps, offset=eps)
    return FlowPath(GLUED, u, dt, pos, _seed_field(seed), pair_merge_step=merge, epsilon=eps)


def glued_endpoint_ensemble(params, initial_points, dt, horizon, replicas, seed):
    """Batched endpoints/glue indices; single-replica calls match
    :func:`simulate_glued` bit for bit."""
    eps = _epsilon_of(params)
    u = _validate_initial(initial_points, min_gap=eps, strict=True)
    n = len(u)
    T = _steps(dt, horizon)
    g = _rng(seed)
    ends, merges = [], []
    for C in _ensemble_chunks(replicas, T, n):
        Z = g.standard_normal((C, T, n))
        e, m = _resolve_merging_block(u, dt, Z, None, threshold=eps, offset=eps)
        ends.append(e)
        merges.append(m)
    return np.concatenate(ends), np.concatenate(merges)


# ---------------------------------------------------------------------------
# particles with covariance-kernel interaction
# ---------------------------------------------------------------------------

def simulate_harris(kernel: CovarianceKernel, initial_points, dt, horizon, seed,
                    bridge_correction=False) -> FlowPath:
    """Euler scheme for particles whose increment correlation is a kernel of
    the spatial gap.

    Each step draws a standard normal vector, correlates the group leaders'
    increments through the Cholesky factor of ``[Gamma(x_i - x_j)]`` (with a
    diagonal jitter ladder 1e-12 .. 1e-8 on factorization failure), and then
    restores ordering with a left-to-right projection in which crossed or
    touching adjacent groups merge and adopt the left leader's path.  Merging
    is the ``Gamma(0) = 1`` limit: a zero gap forces perfectly correlated
    increments, so met particles move together ever after.

    ``bridge_correction`` adds the sub-step meeting probability
    ``exp(-a*b/dt)`` for adjacent leader pairs whose start and end gaps both
    exceed the interaction radius (where the pair diffuses like two
    independent particles, the regime in which that closed form is exact).
    """
    u = _validate_initial(initial_points)
    n = len(u)
    T = _steps(dt, horizon)
    g = _rng(seed)
    Z = g.standard_normal((T, n))
    U = g.random((T, n - 1)) if (bridge_correction and n > 1) else None
    sqdt = math.sqrt(dt)
    half_d = kernel.interaction_radius
    idx = np.arange(n)
    leader = _initial_leaders(u)
    merge_step = np.full(max(n - 1, 0), -1, dtype=np.int64)
    if n > 1:
        merge_step[leader[1:] == leader[:-1]] = 0
    pos = np.empty((T + 1, n))
    X = u.copy()
    pos[0] = X
    for t in range(T):
        leaders = np.flatnonzero(leader == idx)
        lx = X[leaders]
        m = len(leaders)
        z = Z[t]
        if m == 1:
            new_lx = lx + sqdt * z[leaders]
        else:
            gaps = np.diff(lx)
            if gaps.min() > half_d:
                dW = z[leaders]
            elif m == 2:
                rho = float(kernel(lx[1] - lx[0]))
                z0, z1 = z[leaders[0]], z[leaders[1]]
                dW = np.array([z0, rho * z0 + math.sqrt(max(1.0 - rho * rho, 0.0)) * z1])
            else:
                cov = np.asarray(kernel(lx[:, None] - lx[None, :]))
                chol = _factor_with_jitter(cov)
                dW = chol @ z[leaders]
            new_lx = lx + sqdt * dW
        fired = np.zeros(max(m - 1, 0), dtype=bool)
        if U is not None and m > 1:
            a = np.diff(lx)
            b = np.diff(new_lx)
            elig = (a > half_d) & (b > half_d)
            if elig.any():
                fired = elig & (U[t][leaders[:-1]] < np.exp(-(a * b) / dt))
        tgt = np.arange(m)
        for i in range(1, m):
            j = tgt[i - 1]
            if new_lx[i] <= new_lx[j] or fired[i - 1]:
                tgt[i] = j
                new_lx[i] = new_lx[j]
        X[leaders] = new_lx
        if np.any(tgt != np.arange(m)):
            for i in range(m):
                if tgt[i] != i:
                    leader[leader == leaders[i]] = leaders[tgt[i]]
            newly = (merge_step < 0) & (leader[1:] == leader[:-1])
            merge_step[newly] = t + 1
        X = X[leader]
        pos[t + 1] = X
    return FlowPath(HARRIS, u, dt, pos, _seed_field(seed), pair_merge_step=merge_step)


@dataclass(frozen=True)
class PairEnsemble:
    """Endpoint batch of a two-particle system plus event bookkeeping.

    ``merge_step``: grid index at which the pair met (coalesced), -1 never.
    ``glue_step``: first grid index with gap <= ``eps_detect`` (populated
    when a detection threshold was requested); -1 never.
    """

    x1: np.ndarray
    x2: np.ndarray
    merge_step: np.ndarray
    glue_step: np.ndarray | None = None
    epsilon: float | None = None

    @property
    def glued(self) -> np.ndarray:
        if self.glue_step is None:
            raise ValueError("ensemble was run without a detection threshold")
        return self.glue_step >= 0

    def coupled_endpoints(self) -> np.ndarray:
        """Endpoints of the two-stage glued transform: the second particle
        rides at exactly epsilon above the first from the detection time on."""
        z2 = np.where(self.glued, self.x1 + self.epsilon, self.x2)
        return np.column_stack([self.x1, z2])


def harris_pair_ensemble(kernel: CovarianceKernel, initial_points, dt, horizon, replicas,
                         seed, bridge_correction=False, eps_detect=None) -> PairEnsemble:
    """Replica-batched two-particle version of :func:`simulate_harris`.

    With the indicator kernel this is exactly a batch of coalescing
    independent pairs.  A single-replica call consumes the generator like the
    per-path simulator, so the two agree bit for bit; across replicas the
    batch shares one stream, which makes runs with different kernels but the
    same seed pathwise coupled (common random numbers).
    """
    u = _validate_initial(initial_points)
    if len(u) != 2:
        raise ValueError("pair ensemble needs exactly two initial points")
    T = _steps(dt, horizon)
    g = _rng(seed)
    sqdt = math.sqrt(dt)
    half_d = kernel.interaction_radius
    x1_out = np.empty(replicas)
    x2_out = np.empty(replicas)
    merge_out = np.empty(replicas, dtype=np.int64)
    glue_out = np.empty(replicas, dtype=np.int64) if eps_detect is not None else None
    done = 0
    for C in _ensemble_chunks(replicas, T, 2):
        Z = g.standard_normal((C, T, 2))
        U = g.random((C, T, 1)) if bridge_correction else None
        x1 = np.full(C, u[0])
        x2 = np.full(C, u[1])
        merged = np.full(C, u[1] == u[0])
        merge_step = np.where(merged, 0, -1).astype(np.int64)
        if eps_detect is not None:
            glue_step = np.where(u[1] - u[0] <= eps_detect, 0, -1).astype(np.int64)
        for t in range(T):
            zl = Z[:, t, 0]
            zr = Z[:, t, 1]
            gap = x2 - x1
            rho = np.asarray(kernel(gap))
            root = np.sqrt(np.maximum(1.0 - rho * rho, 0.0))
            nx1 = x1 + sqdt * zl
            nx2 = x2 + sqdt * (rho * zl + root * zr)
            crossed = ~merged & (nx2 <= nx1)
            if U is not None:
                b = nx2 - nx1
                elig = ~merged & (gap > half_d) & (b > half_d)
                fired = elig & (U[:, t, 0] < np.exp(-(gap * b) / dt))
                crossed |= fired
            x1 = nx1
            x2 = np.where(merged | crossed, nx1, nx2)
            merge_step = np.where((merge_step < 0) & crossed, t + 1, merge_step)
            merged |= crossed
            if eps_detect is not None:
                glue_step = np.where(
                    (glue_step < 0) & (x2 - x1 <= eps_detect), t + 1, glue_step
                )
        x1_out[done:done + C] = x1
        x2_out[done:done + C] = x2
        merge_out[done:done + C] = merge_step
        if eps_detect is not None:
            glue_out[done:done + C] = glue_step
        done += C
    return PairEnsemble(x1_out, x2_out, merge_out, glue_out, eps_detect)


def arratia_pair_ensemble(initial_points, dt, horizon, replicas, seed,
                          bridge_correction=True, eps_detect=None) -> PairEnsemble:
    """Coalescing pair batch: the zero-interaction-range case of
    :func:`harris_pair_ensemble`, sharing its noise layout for pathwise
    coupling under common seeds."""
    return harris_pair_ensemble(
        indicator_kernel(), initial_points, dt, horizon, replicas, seed,
        bridge_correction=bridge_correction, eps_detect=eps_detect,
    )


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------

def flowpath_to_csv(path: FlowPath, full_path: bool = False) -> str:
    """CSV text: header of particle labels, one row per exported grid time.

    Default exports only the final-time slice; ``full_path`` exports every
    grid time (T + 1 rows).
    """
    header = ",".join(repr(float(v)) for v in path.initial_points)
    rows = path.positions if full_path else path.positions[-1:]
    body = "\n".join(",".join(repr(float(v)) for v in row) for row in rows)
    return header + "\n" + body + "\n"


def flowpath_meta(path: FlowPath) -> dict:
    meta = {
        "flow_kind": path.flow_kind,
        "initial_points": [float(v) for v in path.initial_points],
        "dt": path.dt,
        "horizon": path.horizon,
        "seed": path.seed,
        "n_steps": path.n_steps,
    }
    if path.epsilon is not None:
        meta["epsilon"] = path.epsilon
    if path.pair_merge_step is not None:
        meta["pair_merge_step"] = [int(v) for v in path.pair_merge_step]
    return meta
