"""Discrete information theory: entropy, mutual information, union and excluded information.

Union information is the minimum I(Q;Y) over channel variables Q that are
Blackwell-above every source channel, i.e. each source's conditional p(x_i|y)
must be reproducible by post-processing Q. The exact solver runs an augmented
Lagrangian alternating minimization over the channel p(q|y) and the
post-processing maps; a brute-force simplex-grid oracle (binary alphabets)
bounds its error in tests.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

LOG2 = np.log(2.0)
_TINY = 1e-300


class PidError(Exception):
    """Inconsistent distributions or solver failure."""


class SolverInfeasibleError(PidError):
    """No feasible channel found within the configured residual tolerance."""


# ---------------------------------------------------------------------------
# Distribution types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DiscreteDistribution:
    p: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=np.float64)
        object.__setattr__(self, "p", p)
        if p.ndim != 1:
            raise PidError(f"distribution must be 1-D, got shape {p.shape}")
        if np.any(p < 0):
            raise PidError("negative probability")
        if abs(p.sum() - 1.0) > 1e-12:
            raise PidError(f"probabilities sum to {p.sum()!r}, not 1")

    def __len__(self) -> int:
        return len(self.p)


@dataclass(frozen=True)
class JointDistribution:
    """p(x, y) as an [|X| x |Y|] matrix."""

    p: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=np.float64)
        object.__setattr__(self, "p", p)
        if p.ndim != 2:
            raise PidError(f"joint must be 2-D, got shape {p.shape}")
        if np.any(p < 0):
            raise PidError("negative probability")
        if abs(p.sum() - 1.0) > 1e-12:
            raise PidError(f"probabilities sum to {p.sum()!r}, not 1")

    def marginal_x(self) -> DiscreteDistribution:
        return DiscreteDistribution(self.p.sum(axis=1))

    def marginal_y(self) -> DiscreteDistribution:
        return DiscreteDistribution(self.p.sum(axis=0))

    def channel_x_given_y(self) -> np.ndarray:
        """Column-stochastic p(x|y); columns with p(y)=0 are set uniform."""
        py = self.p.sum(axis=0)
        safe = np.where(py > 0, py, 1.0)
        cond = self.p / safe[None, :]
        cond[:, py == 0] = 1.0 / self.p.shape[0]
        return cond


@dataclass(frozen=True)
class SourceChannelSet:
    """Target marginal p(y) plus one conditional channel p(x_i|y) per source."""

    p_y: np.ndarray
    conditionals: tuple[np.ndarray, ...]

    def __post_init__(self):
        py = np.asarray(self.p_y, dtype=np.float64)
        conds = tuple(np.asarray(c, dtype=np.float64) for c in self.conditionals)
        object.__setattr__(self, "p_y", py)
        object.__setattr__(self, "conditionals", conds)
        if py.ndim != 1 or np.any(py < 0) or abs(py.sum() - 1.0) > 1e-12:
            raise PidError("p_y is not a distribution")
        if not conds:
            raise PidError("need at least one source channel")
        live = py > 0
        for i, c in enumerate(conds):
            if c.ndim != 2 or c.shape[1] != len(py):
                raise PidError(f"source {i}: channel shape {c.shape} inconsistent with |Y|={len(py)}")
            if np.any(c < -1e-12):
                raise PidError(f"source {i}: negative conditional probability")
            colsums = c[:, live].sum(axis=0)
            if np.any(np.abs(colsums - 1.0) > 1e-9):
                raise PidError(f"source {i}: conditional columns do not sum to 1")

    @property
    def n_sources(self) -> int:
        return len(self.conditionals)

    def source_joint(self, i: int) -> JointDistribution:
        return JointDistribution(self.conditionals[i] * self.p_y[None, :])


@dataclass
class UnionSolverConfig:
    method: str = "exact"  # "exact" | "surrogate"
    q_size: int | None = None  # default: sum of source alphabet sizes + 1
    max_outer: int = 400
    tol_bits: float = 1e-6
    restarts: int = 8
    seed: int = 0
    product_budget: int = 4096  # exact method requires prod(|X_i|) within this

    def __post_init__(self):
        if self.method not in ("exact", "surrogate"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.q_size is not None and self.q_size < 2:
            raise ValueError("q_size must be >= 2")
        if self.tol_bits <= 0:
            raise ValueError("tol_bits must be positive")


@dataclass
class UnionSolveInfo:
    method: str
    iterations: int = 0
    restarts: int = 0
    best_restart: int = -1
    residual: float = 0.0
    lower_bound_bits: float = 0.0
    gap_bits: float = 0.0


@dataclass
class PidResult:
    sources: int
    i_bits: np.ndarray
    u_bits: float
    e_bits: np.ndarray
    info: UnionSolveInfo = field(repr=False)

    def __post_init__(self):
        if np.any(self.e_bits < -1e-9):
            raise PidError(f"excluded information below -1e-9: {self.e_bits}")
        if self.u_bits < self.i_bits.max() - 1e-9:
            raise PidError(
                f"union information {self.u_bits} below max source information {self.i_bits.max()}"
            )


# ---------------------------------------------------------------------------
# Entropy and mutual information
# ---------------------------------------------------------------------------


def entropy(d: DiscreteDistribution) -> float:
    """Shannon entropy in bits, with 0*log(0) = 0."""
    p = d.p
    nz = p > 0
    return float(-np.sum(p[nz] * np.log2(p[nz])))


def _entropy_raw(p: np.ndarray) -> float:
    nz = p > 0
    return float(-np.sum(p[nz] * np.log2(p[nz])))


def mutual_information(j: JointDistribution) -> float:
    """I(X;Y) = H(X) + H(Y) - H(X,Y) in bits."""
    p = j.p
    return _entropy_raw(p.sum(axis=1)) + _entropy_raw(p.sum(axis=0)) - _entropy_raw(p.ravel())


def _channel_mi_nats(s: np.ndarray, p_y: np.ndarray) -> float:
    """I(Q;Y) in nats for channel s = p(q|y) and marginal p(y)."""
    pqy = s * p_y[None, :]
    pq = pqy.sum(axis=1)
    mask = pqy > 0
    denom = np.maximum(pq[:, None] * p_y[None, :], _TINY)
    terms = np.where(mask, pqy * np.log(np.where(mask, pqy / denom, 1.0)), 0.0)
    return float(terms.sum())


def _channel_mi_grad_nats(s: np.ndarray, p_y: np.ndarray) -> np.ndarray:
    pq = (s * p_y[None, :]).sum(axis=1)
    log_s = np.log(np.maximum(s, _TINY))
    log_pq = np.log(np.maximum(pq, _TINY))
    return p_y[None, :] * (log_s - log_pq[:, None])


# ---------------------------------------------------------------------------
# Simplex projection
# ---------------------------------------------------------------------------


def _project_columns_to_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection of each column onto the probability simplex."""
    n, m = v.shape
    u = np.sort(v, axis=0)[::-1]
    css = np.cumsum(u, axis=0) - 1.0
    ind = np.arange(1, n + 1)[:, None]
    cond = u - css / ind > 0
    rho = n - 1 - np.argmax(cond[::-1], axis=0)
    theta = css[rho, np.arange(m)] / (rho + 1)
    return np.maximum(v - theta[None, :], 0.0)


# ---------------------------------------------------------------------------
# Exact union-information solver
# ---------------------------------------------------------------------------


def _alm_objective(s, maps, lams, rho, p_y, conds):
    val = _channel_mi_nats(s, p_y)
    for m, lam, p in zip(maps, lams, conds):
        r = m @ s - p
        val += float(np.sum(lam * r)) + 0.5 * rho * float(np.sum(r * r))
    return val


def _m_step(m, s, p, lam, rho, iters=15):
    """Minimize <lam, MS-P> + rho/2 ||MS-P||^2 over column-stochastic M."""
    ssT = s @ s.T
    lip = rho * max(float(np.linalg.eigvalsh(ssT)[-1]), 1e-12)
    step = 1.0 / lip
    for _ in range(iters):
        grad = (lam + rho * (m @ s - p)) @ s.T
        new = _project_columns_to_simplex(m - step * grad)
        if np.max(np.abs(new - m)) < 1e-15:
            m = new
            break
        m = new
    return m


def _s_step(s, maps, lams, rho, p_y, conds, step, iters=12):
    """Backtracking projected gradient on the ALM objective in S.

    The step size persists across outer iterations but is re-anchored to the
    penalty curvature each call so it can recover after deep backtracking.
    """
    pen_lip = rho * sum(np.linalg.norm(m, 2) ** 2 for m in maps) + 1.0
    step = float(np.clip(step, 0.5 / pen_lip, 100.0 / pen_lip))
    obj = _alm_objective(s, maps, lams, rho, p_y, conds)
    for _ in range(iters):
        grad = _channel_mi_grad_nats(s, p_y)
        for m, lam, p in zip(maps, lams, conds):
            grad += m.T @ (lam + rho * (m @ s - p))
        improved = False
        for _ in range(30):
            cand = _project_columns_to_simplex(s - step * grad)
            cand_obj = _alm_objective(cand, maps, lams, rho, p_y, conds)
            if cand_obj < obj - 1e-16:
                improved = True
                break
            step *= 0.5
            if step < 1e-4 / pen_lip:
                break
        if not improved:
            break
        delta = np.max(np.abs(cand - s))
        s, obj = cand, cand_obj
        step = min(step * 2.0, 100.0 / pen_lip)
        if delta < 1e-15:
            break
    return s, obj, step


def _product_coupling_init(conds, nq):
    """Feasible start: Q = product coupling of the sources, padded to nq rows."""
    sizes = [c.shape[0] for c in conds]
    ny = conds[0].shape[1]
    s = np.zeros((nq, ny))
    maps = [np.zeros((nx, nq)) for nx in sizes]
    for row, combo in enumerate(itertools.product(*[range(nx) for nx in sizes])):
        col = np.ones(ny)
        for c, xi in zip(conds, combo):
            col = col * c[xi, :]
        s[row, :] = col
        for m, xi in zip(maps, combo):
            m[xi, row] = 1.0
    for m, nx in zip(maps, sizes):
        pad = np.prod(sizes)
        m[:, pad:] = 1.0 / nx
    return s, maps


def _solve_restart(s, maps, p_y, conds, max_outer, tol_nats):
    rho = 10.0
    lams = [np.zeros_like(p) for p in conds]
    prev_val = np.inf
    step = 1.0
    stable = 0
    iterations = 0
    res = np.inf
    window_res = np.inf
    for outer in range(max_outer):
        iterations = outer + 1
        maps = [
            _m_step(m, s, p, lam, rho) for m, p, lam in zip(maps, conds, lams)
        ]
        s, _, step = _s_step(s, maps, lams, rho, p_y, conds, step)
        residuals = [m @ s - p for m, p in zip(maps, conds)]
        res = max(float(np.max(np.abs(r))) for r in residuals)
        for lam, r in zip(lams, residuals):
            lam += rho * r
        # ramp the penalty only when a 4-outer window failed to cut the
        # residual substantially; runaway rho makes the duals oscillate
        if outer % 4 == 3:
            if res > 0.25 * window_res:
                rho = min(rho * 4.0, 1e6)
            window_res = res
        val = _channel_mi_nats(s, p_y)
        if res < 1e-12 and abs(val - prev_val) < min(tol_nats * 1e-3, 1e-11):
            stable += 1
            if stable >= 3:
                break
        else:
            stable = 0
        prev_val = val
    return s, maps, _channel_mi_nats(s, p_y), res, iterations


def union_information(
    channels: SourceChannelSet,
    cfg: UnionSolverConfig | None = None,
    joint: JointDistribution | None = None,
) -> tuple[float, UnionSolveInfo]:
    """Union information U in bits, plus solver metadata.

    The exact method alternates between the channel p(q|y) and per-source
    post-processing maps under an augmented Lagrangian, over several restarts;
    the surrogate method returns I(joint; Y) and requires the full joint.
    """
    cfg = cfg if cfg is not None else UnionSolverConfig()

    if cfg.method == "surrogate":
        if joint is None:
            raise PidError("surrogate method requires the full joint distribution")
        u = mutual_information(joint)
        info = UnionSolveInfo(method="surrogate")
        info.lower_bound_bits = max(
            mutual_information(channels.source_joint(i)) for i in range(channels.n_sources)
        )
        info.gap_bits = u - info.lower_bound_bits
        return u, info

    live = channels.p_y > 0
    p_y = channels.p_y[live]
    p_y = p_y / p_y.sum()
    conds = [np.clip(c[:, live], 0.0, None) for c in channels.conditionals]
    conds = [c / c.sum(axis=0, keepdims=True) for c in conds]
    sizes = [c.shape[0] for c in conds]

    product = int(np.prod(sizes))
    if product > cfg.product_budget:
        raise PidError(
            f"exact method budget exceeded: product alphabet {product} > {cfg.product_budget}"
        )

    nq = cfg.q_size if cfg.q_size is not None else sum(sizes) + 1
    ny = len(p_y)
    tol_nats = cfg.tol_bits * LOG2
    lower_bound = max(
        _channel_mi_nats(c, p_y) for c in conds
    )

    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0xB1ACC]))
    best = None  # (feasible, value_nats, restart, residual, iterations, s)
    total_iter = 0
    used = 0
    for restart in range(max(cfg.restarts, 1)):
        used += 1
        if restart == 0 and product <= nq:
            s, maps = _product_coupling_init(conds, nq)
        else:
            s = rng.gamma(1.0, size=(nq, ny))
            s /= s.sum(axis=0, keepdims=True)
            maps = []
            for nx in sizes:
                m = rng.gamma(1.0, size=(nx, nq))
                maps.append(m / m.sum(axis=0, keepdims=True))
        s, maps, val, res, iters = _solve_restart(
            s, maps, p_y, conds, cfg.max_outer, tol_nats
        )
        total_iter += iters
        feasible = res < cfg.tol_bits
        cand = (not feasible, val, restart, res)
        if best is None or cand < best[:4]:
            best = (not feasible, val, restart, res, iters)
        if feasible and val <= lower_bound + min(tol_nats, 1e-9):
            break

    infeasible, val, restart, res, _ = best
    if infeasible:
        raise SolverInfeasibleError(
            f"no feasible channel after {used} restarts (best residual {res:.3e})"
        )
    u_bits = val / LOG2
    info = UnionSolveInfo(
        method="exact",
        iterations=total_iter,
        restarts=used,
        best_restart=restart,
        residual=res,
        lower_bound_bits=lower_bound / LOG2,
        gap_bits=u_bits - lower_bound / LOG2,
    )
    return u_bits, info


def excluded_information(u_bits: float, i_bits: float) -> float:
    """E_i = U - I(X_i;Y); tiny negative slack from the solver clamps to zero."""
    e = u_bits - i_bits
    if e < -1e-9:
        raise PidError(f"excluded information {e} below -1e-9: solver inconsistency")
    return max(e, 0.0)


def pid_report(
    channels: SourceChannelSet,
    joint: JointDistribution | None = None,
    cfg: UnionSolverConfig | None = None,
) -> PidResult:
    """Bundle per-source I, union U and per-source excluded information E."""
    cfg = cfg if cfg is not None else UnionSolverConfig()
    i_bits = np.array(
        [mutual_information(channels.source_joint(i)) for i in range(channels.n_sources)]
    )
    u_bits, info = union_information(channels, cfg, joint=joint)
    if joint is not None:
        i_joint = mutual_information(joint)
        if u_bits > i_joint + 1e-9:
            raise PidError(
                f"union information {u_bits} exceeds joint information {i_joint}"
            )
    e_bits = np.array([excluded_information(u_bits, i) for i in i_bits])
    return PidResult(channels.n_sources, i_bits, u_bits, e_bits, info)


# ---------------------------------------------------------------------------
# Brute-force grid oracle (binary alphabets)
# ---------------------------------------------------------------------------


def _simplex_grid(dim: int, steps: int) -> np.ndarray:
    """All points of the (dim-1)-simplex with coordinates on a steps-division grid."""
    combos = itertools.combinations(range(steps + dim - 1), dim - 1)
    pts = []
    for c in combos:
        prev = -1
        parts = []
        for cut in c:
            parts.append(cut - prev - 1)
            prev = cut
        parts.append(steps + dim - 2 - prev)
        pts.append(parts)
    return np.array(pts, dtype=np.float64) / steps


def grid_union_oracle(
    channels: SourceChannelSet,
    resolution: float = 0.02,
    q_size: int = 3,
    chunk: int = 131072,
) -> float:
    """Brute-force union information over a simplex mesh of channels p(q|y).

    Binary target and binary sources only. Every mesh candidate is tested for
    feasibility (each source's conditional point must lie inside the zonotope
    spanned by the candidate's columns, which is exactly the existence of a
    stochastic post-processing map for binary sources) and the minimum I(Q;Y)
    over feasible candidates is returned, in bits.
    """
    if len(channels.p_y) != 2:
        raise PidError("grid oracle supports binary targets only")
    for c in channels.conditionals:
        if c.shape[0] != 2:
            raise PidError("grid oracle supports binary sources only")
    p_y = channels.p_y
    steps = int(round(1.0 / resolution))
    mesh = _simplex_grid(q_size, steps)  # [G, q_size]
    n_grid = len(mesh)
    targets = [c[0, :].copy() for c in channels.conditionals]  # (p(x=0|y0), p(x=0|y1))

    best = np.inf
    idx = np.arange(n_grid)
    for lo in range(0, n_grid * n_grid, chunk):
        hi = min(lo + chunk, n_grid * n_grid)
        flat = np.arange(lo, hi)
        a = mesh[idx[flat // n_grid]]  # column for y=0, [B, q]
        b = mesh[idx[flat % n_grid]]  # column for y=1, [B, q]

        feasible = np.ones(len(flat), dtype=bool)
        for t in targets:
            # facet normals of the zonotope are perpendicular to its generators
            for sign in (1.0, -1.0):
                ux = sign * -b  # [B, q]
                uy = sign * a
                lhs = ux * t[0] + uy * t[1]  # [B, q] one test per generator
                supp = np.maximum(ux[:, :, None] * a[:, None, :] + uy[:, :, None] * b[:, None, :], 0.0).sum(axis=2)
                feasible &= np.all(lhs <= supp + 1e-9, axis=1)
        if not feasible.any():
            continue

        af, bf = a[feasible], b[feasible]
        pqy = np.stack([af * p_y[0], bf * p_y[1]], axis=2)  # [F, q, 2]
        pq = pqy.sum(axis=2)
        denom = np.maximum(pq[:, :, None] * p_y[None, None, :], _TINY)
        mask = pqy > 0
        mi = np.where(mask, pqy * np.log2(np.where(mask, pqy / denom, 1.0)), 0.0).sum(axis=(1, 2))
        m = float(mi.min())
        if m < best:
            best = m
    if not np.isfinite(best):
        raise SolverInfeasibleError("grid oracle found no feasible candidate")
    return best
