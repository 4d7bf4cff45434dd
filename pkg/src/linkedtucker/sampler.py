"""No-U-Turn sampler with dual-averaging step-size and diagonal mass adaptation.

The transition builds a binary tree of leapfrog trajectories by repeated
doubling (multinomial sampling over the trajectory, biased toward the new
subtree) and stops at a U-turn of the generalized momentum-sum criterion
or when the energy error exceeds the divergence threshold.

Targets are callables ``target(q) -> (log_density, gradient)`` with a
``dim`` attribute; an optional ``block_of(i)`` names the parameter block
of coordinate ``i`` for error reporting.

Chains use independent counter-based RNG streams (Philox keyed by
spawning the master seed), so results are reproducible bit for bit for a
fixed (seed, n_chains, target) regardless of execution order. Warmup
follows the standard windowed scheme: a step-size-only opening buffer,
doubling variance-estimation windows (each ending with a mass-matrix
update and a step-size re-initialization), and a closing step-size-only
buffer. After warmup the step size is frozen at the dual-averaging mean.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np
from scipy import stats as _scipy_stats

__all__ = [
    "NutsConfig",
    "DualAveraging",
    "ChainState",
    "DrawStats",
    "PosteriorDraws",
    "DiagnosticsResult",
    "SamplerError",
    "ChainInitError",
    "leapfrog",
    "adapt_step_size",
    "nuts_transition",
    "run_chains",
    "diagnostics",
    "mass_adaptation_windows",
]


class SamplerError(RuntimeError):
    """Hard sampler failure."""


class ChainInitError(SamplerError):
    """A chain could not find a finite starting point."""


@dataclass(frozen=True)
class NutsConfig:
    """Sampler configuration; defaults are the documented "paper" scale."""

    n_warmup: int = 5000
    n_samples: int = 5000
    n_chains: int = 4
    target_accept: float = 0.8
    max_tree_depth: int = 10
    seed: int = 0
    init_scale: float = 0.1
    mass_matrix: str = "diagonal-adapted"  # or "identity"
    divergence_threshold: float = 1000.0
    progress: bool = False

    def __post_init__(self):
        if self.n_warmup < 0 or self.n_samples <= 0 or self.n_chains <= 0:
            raise ValueError("iteration and chain counts must be positive")
        if not 0.0 < self.target_accept < 1.0:
            raise ValueError("target_accept must be in (0, 1)")
        if not 1 <= self.max_tree_depth <= 15:
            raise ValueError("max_tree_depth must be in [1, 15]")
        if self.init_scale <= 0:
            raise ValueError("init_scale must be positive")
        if self.mass_matrix not in ("identity", "diagonal-adapted", "diag"):
            raise ValueError(f"unknown mass_matrix {self.mass_matrix!r}")


@dataclass(frozen=True)
class DualAveraging:
    """Nesterov dual-averaging accumulators for the log step size."""

    mu: float
    log_step: float
    target_accept: float = 0.8
    log_step_avg: float = 0.0
    h_bar: float = 0.0
    count: int = 0
    gamma: float = 0.05
    t0: float = 10.0
    kappa: float = 0.75

    @classmethod
    def started_at(cls, step_size: float, target_accept: float) -> "DualAveraging":
        return cls(
            mu=math.log(10.0 * step_size),
            log_step=math.log(step_size),
            target_accept=target_accept,
        )

    @property
    def step_size(self) -> float:
        return math.exp(self.log_step)

    @property
    def averaged_step_size(self) -> float:
        if self.count == 0:
            return math.exp(self.log_step)
        return math.exp(self.log_step_avg)


def adapt_step_size(acc: DualAveraging, accept_prob: float) -> DualAveraging:
    """One dual-averaging update toward the target acceptance rate."""
    t = acc.count + 1
    eta = 1.0 / (t + acc.t0)
    h_bar = (1.0 - eta) * acc.h_bar + eta * (acc.target_accept - accept_prob)
    log_step = acc.mu - math.sqrt(t) / acc.gamma * h_bar
    w = t ** (-acc.kappa)
    log_step_avg = w * log_step + (1.0 - w) * acc.log_step_avg
    return replace(acc, h_bar=h_bar, log_step=log_step,
                   log_step_avg=log_step_avg, count=t)


@dataclass
class ChainState:
    """Mutable per-chain sampling state."""

    position: np.ndarray
    rng: np.random.Generator
    step_size: float
    inv_mass: np.ndarray
    dual: DualAveraging
    iteration: int = 0
    max_tree_depth: int = 10
    divergence_threshold: float = 1000.0
    logp: float = field(default=np.nan)
    grad: np.ndarray | None = None

    def __post_init__(self):
        if self.step_size <= 0:
            raise ValueError("step_size must be positive")
        if np.any(self.inv_mass <= 0):
            raise ValueError("inverse mass diagonal must be positive")


class DrawStats(NamedTuple):
    """Per-draw sampler statistics."""

    accept_prob: float
    tree_depth: int
    n_leapfrog: int
    divergent: bool
    energy: float


def _kinetic(p, inv_mass):
    return 0.5 * float(p @ (inv_mass * p))


def leapfrog(position, momentum, step, grad_fn, inv_mass=None):
    """One velocity-Verlet step under H(q, p) = -logpost(q) + p' M^-1 p / 2.

    ``grad_fn(q)`` must return ``(log_density, gradient)``. Non-finite
    gradients produce non-finite outputs for the caller to flag as a
    divergence; they never raise.
    """
    q = np.asarray(position, dtype=np.float64)
    p = np.asarray(momentum, dtype=np.float64)
    if inv_mass is None:
        inv_mass = np.ones_like(q)
    _, grad = grad_fn(q)
    q_new, p_new, _, _ = _leapfrog_known(q, p, grad, step, grad_fn, inv_mass)
    return q_new, p_new


def _leapfrog_known(q, p, grad, step, target, inv_mass):
    """Leapfrog step reusing the gradient already known at ``q``."""
    p_half = p + 0.5 * step * grad
    q_new = q + step * inv_mass * p_half
    with np.errstate(all="ignore"):
        logp_new, grad_new = target(q_new)
    p_new = p_half + 0.5 * step * grad_new
    return q_new, p_new, logp_new, grad_new


class _Tree:
    """A contiguous trajectory segment with both end states."""

    __slots__ = (
        "q_minus", "p_minus", "grad_minus", "q_plus", "p_plus", "grad_plus",
        "q", "logp", "grad", "h", "log_sum_weight", "r_sum",
        "sum_alpha", "n_alpha", "n_leapfrog", "ok", "divergent",
    )

    @classmethod
    def leaf(cls, q, p, grad, logp, h, log_weight, alpha, divergent):
        t = cls()
        t.q_minus = t.q_plus = t.q = q
        t.p_minus = t.p_plus = t.r_sum = p
        t.grad_minus = t.grad_plus = t.grad = grad
        t.logp = logp
        t.h = h
        t.log_sum_weight = log_weight
        t.sum_alpha = alpha
        t.n_alpha = 1
        t.n_leapfrog = 1
        t.divergent = divergent
        t.ok = not divergent
        return t


def _criterion(p_begin, p_end, rho, inv_mass):
    return (
        float(rho @ (inv_mass * p_begin)) > 0.0
        and float(rho @ (inv_mass * p_end)) > 0.0
    )


def _no_uturn(left, right, inv_mass):
    """Generalized U-turn checks across two chronologically ordered trees."""
    rho = left.r_sum + right.r_sum
    ok = _criterion(left.p_minus, right.p_plus, rho, inv_mass)
    ok = ok and _criterion(
        left.p_minus, right.p_minus, left.r_sum + right.p_minus, inv_mass
    )
    ok = ok and _criterion(
        left.p_plus, right.p_plus, right.r_sum + left.p_plus, inv_mass
    )
    return ok


def _build_leaf(q, p, grad, direction, step, target, inv_mass, h0, max_delta):
    q1, p1, logp1, grad1 = _leapfrog_known(q, p, grad, direction * step, target, inv_mass)
    bad = not (np.isfinite(logp1) and np.all(np.isfinite(grad1)) and np.all(np.isfinite(p1)))
    h1 = np.inf if bad else -logp1 + _kinetic(p1, inv_mass)
    delta = h1 - h0
    divergent = not np.isfinite(h1) or delta > max_delta
    log_weight = -np.inf if divergent else -delta
    alpha = 0.0 if not np.isfinite(delta) else min(1.0, math.exp(min(0.0, -delta)))
    return _Tree.leaf(q1, p1, grad1, logp1, h1, log_weight, alpha, divergent)


def _build_tree(depth, q, p, grad, direction, step, target, inv_mass, h0,
                max_delta, rng):
    if depth == 0:
        return _build_leaf(q, p, grad, direction, step, target, inv_mass, h0, max_delta)
    first = _build_tree(depth - 1, q, p, grad, direction, step, target,
                        inv_mass, h0, max_delta, rng)
    if not first.ok:
        return first
    if direction == 1:
        second = _build_tree(depth - 1, first.q_plus, first.p_plus, first.grad_plus,
                             direction, step, target, inv_mass, h0, max_delta, rng)
    else:
        second = _build_tree(depth - 1, first.q_minus, first.p_minus, first.grad_minus,
                             direction, step, target, inv_mass, h0, max_delta, rng)
    first.n_leapfrog += second.n_leapfrog
    first.sum_alpha += second.sum_alpha
    first.n_alpha += second.n_alpha
    first.divergent |= second.divergent
    if not second.ok:
        first.ok = False
        return first
    # multinomial sampling between the two subtrees
    total = np.logaddexp(first.log_sum_weight, second.log_sum_weight)
    if math.log(rng.random() + 1e-300) < second.log_sum_weight - total:
        first.q, first.logp, first.grad, first.h = second.q, second.logp, second.grad, second.h
    left, right = (first, second) if direction == 1 else (second, first)
    ok = _no_uturn(left, right, inv_mass)
    if direction == 1:
        first.q_plus, first.p_plus, first.grad_plus = second.q_plus, second.p_plus, second.grad_plus
    else:
        first.q_minus, first.p_minus, first.grad_minus = second.q_minus, second.p_minus, second.grad_minus
    first.r_sum = first.r_sum + second.r_sum
    first.log_sum_weight = total
    first.ok = ok
    return first


def _describe_bad_coords(grad, block_of):
    bad = np.flatnonzero(~np.isfinite(grad))
    if bad.size == 0 or block_of is None:
        return f"{bad.size} non-finite gradient coordinates"
    blocks = sorted({block_of(int(i)) for i in bad[:200]})
    return "non-finite gradient in parameter blocks: " + ", ".join(blocks)


def nuts_transition(state: ChainState, target) -> tuple[ChainState, DrawStats]:
    """One NUTS draw; returns the updated chain state and its statistics."""
    q0 = np.asarray(state.position, dtype=np.float64)
    if state.grad is None or not np.isfinite(state.logp):
        logp0, grad0 = target(q0)
    else:
        logp0, grad0 = state.logp, state.grad
    if not (np.isfinite(logp0) and np.all(np.isfinite(grad0))):
        detail = _describe_bad_coords(grad0, getattr(target, "block_of", None))
        raise SamplerError(
            f"log-density not finite at the current position ({detail})"
        )
    rng = state.rng
    inv_mass = state.inv_mass
    step = state.step_size
    p0 = rng.standard_normal(q0.size) / np.sqrt(inv_mass)
    h0 = -logp0 + _kinetic(p0, inv_mass)

    tree = _Tree.leaf(q0, p0, grad0, logp0, h0, 0.0, 0.0, False)
    tree.n_alpha = 0
    tree.n_leapfrog = 0
    sum_alpha = 0.0
    n_alpha = 0
    n_leapfrog = 0
    divergent = False
    depth = 0
    while depth < state.max_tree_depth:
        direction = 1 if rng.random() < 0.5 else -1
        if direction == 1:
            sub = _build_tree(depth, tree.q_plus, tree.p_plus, tree.grad_plus,
                              direction, step, target, inv_mass, h0,
                              state.divergence_threshold, rng)
        else:
            sub = _build_tree(depth, tree.q_minus, tree.p_minus, tree.grad_minus,
                              direction, step, target, inv_mass, h0,
                              state.divergence_threshold, rng)
        sum_alpha += sub.sum_alpha
        n_alpha += sub.n_alpha
        n_leapfrog += sub.n_leapfrog
        divergent |= sub.divergent
        if not sub.ok:
            break
        # biased progressive sampling toward the new subtree
        if math.log(rng.random() + 1e-300) < sub.log_sum_weight - tree.log_sum_weight:
            tree.q, tree.logp, tree.grad, tree.h = sub.q, sub.logp, sub.grad, sub.h
        left, right = (tree, sub) if direction == 1 else (sub, tree)
        still_ok = _no_uturn(left, right, inv_mass)
        if direction == 1:
            tree.q_plus, tree.p_plus, tree.grad_plus = sub.q_plus, sub.p_plus, sub.grad_plus
        else:
            tree.q_minus, tree.p_minus, tree.grad_minus = sub.q_minus, sub.p_minus, sub.grad_minus
        tree.r_sum = tree.r_sum + sub.r_sum
        tree.log_sum_weight = np.logaddexp(tree.log_sum_weight, sub.log_sum_weight)
        depth += 1
        if not still_ok:
            break

    accept = sum_alpha / max(n_alpha, 1)
    new_state = replace(
        state,
        position=tree.q,
        logp=tree.logp,
        grad=tree.grad,
        iteration=state.iteration + 1,
    )
    stat = DrawStats(
        accept_prob=float(accept),
        tree_depth=depth,
        n_leapfrog=int(n_leapfrog),
        divergent=bool(divergent),
        energy=float(tree.h),
    )
    return new_state, stat


def _find_reasonable_step(q, logp, grad, target, inv_mass, rng):
    """Step-size heuristic: double/halve until the acceptance ratio
    crosses one half (Hoffman-Gelman Algorithm 4, with mass matrix)."""
    step = 1.0
    p = rng.standard_normal(q.size) / np.sqrt(inv_mass)
    h0 = -logp + _kinetic(p, inv_mass)

    def energy_error(step):
        q1, p1, logp1, grad1 = _leapfrog_known(q, p, grad, step, target, inv_mass)
        if not (np.isfinite(logp1) and np.all(np.isfinite(p1))):
            return -np.inf
        return h0 - (-logp1 + _kinetic(p1, inv_mass))  # log accept ratio

    ratio = energy_error(step)
    direction = 1.0 if ratio > math.log(0.5) else -1.0
    for _ in range(100):
        if direction * ratio <= direction * math.log(0.5):
            break
        step *= 2.0**direction
        if not 1e-10 < step < 1e7:
            break
        ratio = energy_error(step)
    return step


_INIT_BUFFER = 75
_TERM_BUFFER = 50
_BASE_WINDOW = 25


def mass_adaptation_windows(n_warmup, init_buffer=_INIT_BUFFER,
                            term_buffer=_TERM_BUFFER, base_window=_BASE_WINDOW):
    """End iterations (exclusive, 0-based) of the doubling variance windows."""
    if n_warmup < init_buffer + term_buffer + base_window:
        return []
    ends = []
    start, size = init_buffer, base_window
    while True:
        end = start + size
        if end + 2 * size + term_buffer > n_warmup:
            ends.append(n_warmup - term_buffer)
            return ends
        ends.append(end)
        start, size = end, 2 * size


class _Welford:
    """Streaming mean/variance accumulator."""

    def __init__(self, dim):
        self.n = 0
        self.mean = np.zeros(dim)
        self.m2 = np.zeros(dim)

    def add(self, x):
        self.n += 1
        delta = x - self.mean
        self.mean += delta / self.n
        self.m2 += delta * (x - self.mean)

    def variance(self):
        if self.n < 2:
            return np.ones_like(self.mean)
        return self.m2 / (self.n - 1)


def _regularized_variance(welford):
    n = welford.n
    var = welford.variance()
    # shrink toward a small diagonal, as in the standard windowed scheme
    return var * (n / (n + 5.0)) + 1e-3 * (5.0 / (n + 5.0))


@dataclass(frozen=True)
class PosteriorDraws:
    """Retained posterior draws and per-draw statistics for all chains."""

    positions: np.ndarray  # (n_chains, n_samples, dim)
    accept_prob: np.ndarray
    tree_depth: np.ndarray
    n_leapfrog: np.ndarray
    divergent: np.ndarray
    energy: np.ndarray
    step_size: np.ndarray
    n_warmup: int
    seed: int

    @property
    def n_chains(self) -> int:
        return self.positions.shape[0]

    @property
    def n_samples(self) -> int:
        return self.positions.shape[1]

    @property
    def dim(self) -> int:
        return self.positions.shape[2]

    def flat(self) -> np.ndarray:
        """Draws with the chain axis folded in: (n_chains * n_samples, dim)."""
        return self.positions.reshape(-1, self.positions.shape[2])


def _init_chain(cfg: NutsConfig, target, rng, chain_index):
    last_grad = None
    for _ in range(100):
        q = rng.uniform(-cfg.init_scale, cfg.init_scale, size=target.dim)
        with np.errstate(all="ignore"):
            logp, grad = target(q)
        if np.isfinite(logp) and np.all(np.isfinite(grad)):
            return q, logp, grad
        last_grad = grad
    detail = ""
    if last_grad is not None:
        detail = " (" + _describe_bad_coords(
            np.asarray(last_grad), getattr(target, "block_of", None)
        ) + ")"
    raise ChainInitError(
        f"chain {chain_index}: no finite starting point in 100 jittered draws{detail}"
    )


def _run_single_chain(cfg: NutsConfig, target, seed_seq, chain_index):
    rng = np.random.Generator(np.random.Philox(seed_seq))
    q, logp, grad = _init_chain(cfg, target, rng, chain_index)
    dim = target.dim
    inv_mass = np.ones(dim)
    adapt_mass = cfg.mass_matrix in ("diagonal-adapted", "diag")
    windows = mass_adaptation_windows(cfg.n_warmup) if adapt_mass else []
    starts = [_INIT_BUFFER] + windows[:-1]
    window_starts = dict(zip(starts, windows))

    step = _find_reasonable_step(q, logp, grad, target, inv_mass, rng)
    dual = DualAveraging.started_at(step, cfg.target_accept)
    state = ChainState(
        position=q, rng=rng, step_size=step, inv_mass=inv_mass, dual=dual,
        max_tree_depth=cfg.max_tree_depth,
        divergence_threshold=cfg.divergence_threshold,
        logp=logp, grad=grad,
    )
    welford = None
    next_window_end = None

    total = cfg.n_warmup + cfg.n_samples
    positions = np.empty((cfg.n_samples, dim))
    stats = {
        "accept_prob": np.empty(cfg.n_samples),
        "tree_depth": np.empty(cfg.n_samples, dtype=np.int32),
        "n_leapfrog": np.empty(cfg.n_samples, dtype=np.int64),
        "divergent": np.empty(cfg.n_samples, dtype=bool),
        "energy": np.empty(cfg.n_samples),
        "step_size": np.empty(cfg.n_samples),
    }
    for it in range(total):
        warming = it < cfg.n_warmup
        if warming and it in window_starts:
            welford = _Welford(dim)
            next_window_end = window_starts[it]
        state, stat = nuts_transition(state, target)
        if warming:
            state.dual = adapt_step_size(state.dual, stat.accept_prob)
            state.step_size = state.dual.step_size
            if welford is not None:
                welford.add(state.position)
                if it + 1 == next_window_end:
                    state.inv_mass = _regularized_variance(welford)
                    welford = None
                    with np.errstate(all="ignore"):
                        lp, gr = target(state.position)
                    new_step = _find_reasonable_step(
                        state.position, lp, gr, target, state.inv_mass, rng
                    )
                    state.dual = DualAveraging.started_at(new_step, cfg.target_accept)
                    state.step_size = new_step
            if it + 1 == cfg.n_warmup:
                state.step_size = state.dual.averaged_step_size
        else:
            k = it - cfg.n_warmup
            positions[k] = state.position
            stats["accept_prob"][k] = stat.accept_prob
            stats["tree_depth"][k] = stat.tree_depth
            stats["n_leapfrog"][k] = stat.n_leapfrog
            stats["divergent"][k] = stat.divergent
            stats["energy"][k] = stat.energy
            stats["step_size"][k] = state.step_size
        if cfg.progress and (it + 1) % 100 == 0:
            phase = "warmup" if warming else "sampling"
            print(
                f"chain {chain_index + 1}: iteration {it + 1}/{total} ({phase})",
                file=sys.stderr,
            )
    return positions, stats


def run_chains(cfg: NutsConfig, target, n_threads: int = 1) -> PosteriorDraws:
    """Run all chains and collect retained draws (warmup excluded).

    Results are deterministic for a fixed (seed, n_chains, target):
    each chain owns an independent RNG stream and a distinct slice of the
    draw store, so the thread count cannot change the output.
    """
    children = np.random.SeedSequence(cfg.seed).spawn(cfg.n_chains)
    results = [None] * cfg.n_chains

    def run_one(c):
        results[c] = _run_single_chain(cfg, target, children[c], c)

    if n_threads > 1 and cfg.n_chains > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=min(n_threads, cfg.n_chains)) as pool:
            list(pool.map(run_one, range(cfg.n_chains)))
    else:
        for c in range(cfg.n_chains):
            run_one(c)

    positions = np.stack([r[0] for r in results])
    merged = {
        key: np.stack([r[1][key] for r in results])
        for key in results[0][1]
    }
    return PosteriorDraws(
        positions=positions, n_warmup=cfg.n_warmup, seed=cfg.seed, **merged
    )


@dataclass(frozen=True)
class DiagnosticsResult:
    """Per-coordinate convergence diagnostics.

    Coordinates with zero variance across all chains get sentinel 0 for
    both statistics and are flagged in ``zero_variance``.
    """

    split_rhat: np.ndarray
    ess_bulk: np.ndarray
    n_divergent: int
    zero_variance: np.ndarray


def _split_chains(x):
    half = x.shape[1] // 2
    return np.vstack((x[:, :half], x[:, -half:]))


def _split_rhat(x):
    sp = _split_chains(x)
    n = sp.shape[1]
    chain_mean = sp.mean(axis=1)
    chain_var = sp.var(axis=1, ddof=1)
    between = n * np.var(chain_mean, ddof=1)
    within = np.mean(chain_var)
    if within == 0.0:
        return np.nan
    return math.sqrt((between / within + n - 1) / n)


def _z_scale(x):
    rank = _scipy_stats.rankdata(x, method="average")
    z = _scipy_stats.norm.ppf((rank - 0.5) / x.size)
    return z.reshape(x.shape)


def _autocovariance(x):
    n = x.size
    m = 2 ** math.ceil(math.log2(2 * n))
    centered = x - x.mean()
    f = np.fft.rfft(centered, m)
    acov = np.fft.irfft(f * np.conj(f), m)[:n].real
    return acov / n


def _ess(x):
    """Bulk ESS via Geyer's initial monotone sequence (on z-scaled splits)."""
    n_chain, n_draw = x.shape
    if n_draw < 4:
        return np.nan
    acov = np.array([_autocovariance(x[c]) for c in range(n_chain)])
    chain_mean = x.mean(axis=1)
    mean_var = np.mean(acov[:, 0]) * n_draw / (n_draw - 1.0)
    var_plus = mean_var * (n_draw - 1.0) / n_draw
    if n_chain > 1:
        var_plus += np.var(chain_mean, ddof=1)
    if var_plus == 0.0:
        return np.nan
    rho_hat = np.zeros(n_draw)
    rho_hat[0] = 1.0
    rho_even = 1.0
    rho_odd = 1.0 - (mean_var - np.mean(acov[:, 1])) / var_plus
    rho_hat[1] = rho_odd
    t = 1
    while t < n_draw - 2 and (rho_even + rho_odd) >= 0.0:
        rho_even = 1.0 - (mean_var - np.mean(acov[:, t + 1])) / var_plus
        rho_odd = 1.0 - (mean_var - np.mean(acov[:, t + 2])) / var_plus
        rho_hat[t + 1] = rho_even
        if rho_even + rho_odd >= 0:
            rho_hat[t + 2] = rho_odd
        t += 2
    max_t = t
    t = 1
    while t <= max_t - 2:
        if rho_hat[t + 1] + rho_hat[t + 2] > rho_hat[t - 1] + rho_hat[t]:
            rho_hat[t + 1] = (rho_hat[t - 1] + rho_hat[t]) / 2.0
            rho_hat[t + 2] = rho_hat[t + 1]
        t += 2
    tau = -1.0 + 2.0 * np.sum(rho_hat[:max_t]) + np.sum(rho_hat[max_t + 1:max_t + 2])
    return (n_chain * n_draw) / tau


def diagnostics(draws: PosteriorDraws) -> DiagnosticsResult:
    """Split R-hat, rank-normalized bulk ESS, and divergence count."""
    if draws.n_chains < 2:
        raise ValueError("diagnostics need at least 2 chains")
    if draws.n_samples < 4:
        raise ValueError("diagnostics need at least 4 draws per chain")
    dim = draws.dim
    rhat = np.zeros(dim)
    ess = np.zeros(dim)
    flat_var = draws.flat().var(axis=0)
    zero = flat_var == 0.0
    for i in range(dim):
        if zero[i]:
            continue
        x = draws.positions[:, :, i]
        rhat[i] = _split_rhat(x)
        ess[i] = _ess(_z_scale(_split_chains(x)))
    return DiagnosticsResult(
        split_rhat=rhat,
        ess_bulk=ess,
        n_divergent=int(draws.divergent.sum()),
        zero_variance=zero,
    )
