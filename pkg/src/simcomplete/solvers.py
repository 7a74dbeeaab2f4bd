"""Completion solvers over a symmetric initial similarity matrix S0.

The main family minimizes a fit-plus-regularizer objective over a factor
V (n x r) with the estimate S = V V^T, which is PSD with rank at most r
by construction:

    smcnn   |VV^T - S0|_F^2 + lam * |V|_F^2
    smcnmf  |VV^T - S0|_F^2 + lam * (|V|_F^2 - |VV^T|_F)
    smc_f   |VV^T - S0|_F^2 + (lam/2) * |VV^T|_F^2
    smc_nr  |VV^T - S0|_F^2

All four run plain gradient descent with a fixed stepsize. Three more
variants cover the ablation space: smc_gd interleaves gradient steps with
spectral soft-thresholding, mc_on clamps the spectrum of the full matrix,
and mc_fon descends on an unconstrained two-factor product W H^T. A mean
imputation baseline completes the set.

Inside the descent loop the fit gradient is evaluated as
``4 * (V @ (V.T @ V) - S0 @ V)``, which equals ``4 * (V V^T - S0) V`` by
associativity but costs one n^2 r product per iteration instead of two.
"""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import Diverged, DimensionMismatch, EmptyFeature, InvalidBound, InvalidRank
from .linalg import sym_eigendecompose, symmetrize
from .simdata import MaskedDataset, true_similarity


class SolverKind(str, enum.Enum):
    SMCNN = "smcnn"
    SMCNMF = "smcnmf"
    SMC_F = "smc_f"
    SMC_NR = "smc_nr"
    SMC_GD = "smc_gd"
    MC_ON = "mc_on"
    MC_FON = "mc_fon"
    MEAN_IMPUTE = "mean"


FACTORIZED_KINDS = (
    SolverKind.SMCNN,
    SolverKind.SMCNMF,
    SolverKind.SMC_F,
    SolverKind.SMC_NR,
)

# |VV^T|_F below this is treated as zero and the scale-normalized
# regularizer term of smcnmf is dropped (valid subgradient at the origin).
ZERO_GRAM_NORM = 1e-12

MC_ON_DEFAULT_TAU = 1e-4


@dataclass
class SolverConfig:
    """Hyperparameters for one solver run.

    ``tau`` is the spectral threshold used by smc_gd and mc_on; leaving it
    None picks the per-solver default (gamma * lam for smc_gd, 1e-4 for
    mc_on). ``grad_tol`` > 0 stops early once the gradient norm falls below
    it. ``bound_G`` optionally records the factor-norm bound used to derive
    the stepsize; solvers do not enforce it.
    """

    kind: SolverKind
    r: int
    lam: float
    gamma: float
    iters: int
    seed: int = 0
    tau: float | None = None
    grad_tol: float = 0.0
    bound_G: float | None = None
    trace_stride: int = 1

    def __post_init__(self):
        self.kind = SolverKind(self.kind)
        if self.r < 1:
            raise InvalidRank(f"r must be >= 1, got {self.r}")
        if self.gamma <= 0.0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if self.iters < 1:
            raise ValueError(f"iters must be >= 1, got {self.iters}")
        if self.lam < 0.0:
            raise ValueError(f"lam must be nonnegative, got {self.lam}")
        if self.grad_tol < 0.0:
            raise ValueError("grad_tol must be nonnegative")
        if self.trace_stride < 1:
            raise ValueError("trace_stride must be >= 1")


@dataclass
class ConvergenceTrace:
    """Per-iteration record of one solver run.

    ``objective`` holds the objective at every recorded state including the
    final one; ``grad_norm_sq`` the squared gradient Frobenius norm at every
    recorded pre-update state. Recording is thinned by ``trace_stride``
    (iteration 0 and the final state are always kept). ``step_norm`` is used
    by the spectral-clamp solver, where successive-iterate distance replaces
    the gradient. ``wall_nanos_per_iter`` is never thinned, so its sum is
    the loop's wall time; ``factor_norm_max`` tracks max_t |V^t|_F.
    """

    objective: np.ndarray
    grad_norm_sq: np.ndarray
    step_norm: np.ndarray
    wall_nanos_per_iter: np.ndarray
    iterations: int
    factor_norm_max: float = 0.0


class FactorizedSolution(NamedTuple):
    factor: np.ndarray
    estimate: np.ndarray
    trace: ConvergenceTrace


class MatrixSolution(NamedTuple):
    estimate: np.ndarray
    trace: ConvergenceTrace


class SolveOutcome(NamedTuple):
    """Uniform result for the grid runner: factor is None for solvers that
    do not maintain a PSD factor."""

    estimate: np.ndarray
    trace: ConvergenceTrace
    factor: np.ndarray | None


def init_factor(n: int, r: int, seed: int) -> np.ndarray:
    """Random starting factor with N(0, 1/r) entries.

    The variance makes diag(V V^T) average to one, the scale of cosine
    similarities, so the initial objective starts near the data's own
    magnitude instead of exploding.
    """
    if not 1 <= r < n:
        raise InvalidRank(f"factor width must satisfy 1 <= r < n, got r={r}, n={n}")
    rng = np.random.default_rng(seed)
    return rng.normal(0.0, np.sqrt(1.0 / r), size=(n, r))


def _check_dims(v: np.ndarray, s0: np.ndarray):
    if s0.ndim != 2 or s0.shape[0] != s0.shape[1]:
        raise DimensionMismatch(f"S0 must be square, got {s0.shape}")
    if v.ndim != 2 or v.shape[0] != s0.shape[0]:
        raise DimensionMismatch(f"factor shape {v.shape} does not match S0 {s0.shape}")


def grad_smcnn(v, s0, lam: float) -> np.ndarray:
    """4 (VV^T - S0) V + 2 lam V."""
    v = np.asarray(v, dtype=np.float64)
    s0 = np.asarray(s0, dtype=np.float64)
    _check_dims(v, s0)
    return 4.0 * (v @ v.T - s0) @ v + 2.0 * lam * v


def grad_smcnmf(v, s0, lam: float) -> np.ndarray:
    """4 (VV^T - S0) V + 2 lam V - 2 lam V (V^T V) / |VV^T|_F.

    The last term is dropped when |VV^T|_F is numerically zero.
    """
    v = np.asarray(v, dtype=np.float64)
    s0 = np.asarray(s0, dtype=np.float64)
    _check_dims(v, s0)
    g = 4.0 * (v @ v.T - s0) @ v + 2.0 * lam * v
    gram_norm = float(np.linalg.norm(v @ v.T, "fro"))
    if gram_norm >= ZERO_GRAM_NORM:
        g = g - 2.0 * lam * (v @ (v.T @ v)) / gram_norm
    return g


def grad_smc_f(v, s0, lam: float) -> np.ndarray:
    """4 (VV^T - S0) V + 2 lam V V^T V."""
    v = np.asarray(v, dtype=np.float64)
    s0 = np.asarray(s0, dtype=np.float64)
    _check_dims(v, s0)
    return 4.0 * (v @ v.T - s0) @ v + 2.0 * lam * (v @ v.T @ v)


def grad_smc_nr(v, s0, lam: float = 0.0) -> np.ndarray:
    """4 (VV^T - S0) V; the regularizer is absent by definition."""
    v = np.asarray(v, dtype=np.float64)
    s0 = np.asarray(s0, dtype=np.float64)
    _check_dims(v, s0)
    return 4.0 * (v @ v.T - s0) @ v


def grad_mc_fon(w, h, s0) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of |W H^T - S0|_F^2 in W and H."""
    w = np.asarray(w, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    s0 = np.asarray(s0, dtype=np.float64)
    _check_dims(w, s0)
    _check_dims(h, s0)
    resid = w @ h.T - s0
    return 2.0 * resid @ h, 2.0 * resid.T @ w


def factor_objective(kind: SolverKind, v, s0, lam: float) -> float:
    """Objective value matching each factorized gradient."""
    kind = SolverKind(kind)
    v = np.asarray(v, dtype=np.float64)
    s0 = np.asarray(s0, dtype=np.float64)
    _check_dims(v, s0)
    fit = float(np.linalg.norm(v @ v.T - s0, "fro") ** 2)
    if kind == SolverKind.SMCNN:
        return fit + lam * float(np.vdot(v, v))
    if kind == SolverKind.SMCNMF:
        return fit + lam * (float(np.vdot(v, v)) - float(np.linalg.norm(v @ v.T, "fro")))
    if kind == SolverKind.SMC_F:
        return fit + 0.5 * lam * float(np.linalg.norm(v @ v.T, "fro") ** 2)
    if kind == SolverKind.SMC_NR:
        return fit
    raise ValueError(f"{kind} has no single-factor objective")


def two_factor_objective(w, h, s0) -> float:
    w = np.asarray(w, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    s0 = np.asarray(s0, dtype=np.float64)
    return float(np.linalg.norm(w @ h.T - s0, "fro") ** 2)


class _TraceRecorder:
    def __init__(self, iters: int, stride: int):
        self.stride = stride
        self.objective = []
        self.grad_norm_sq = []
        self.step_norm = []
        self.wall = np.zeros(iters, dtype=np.int64)
        self.factor_norm_max = 0.0

    def want(self, t: int) -> bool:
        return t % self.stride == 0

    def build(self, iterations: int) -> ConvergenceTrace:
        return ConvergenceTrace(
            objective=np.asarray(self.objective),
            grad_norm_sq=np.asarray(self.grad_norm_sq),
            step_norm=np.asarray(self.step_norm),
            wall_nanos_per_iter=self.wall[:iterations].copy(),
            iterations=iterations,
            factor_norm_max=self.factor_norm_max,
        )


def solve_factorized(s0, cfg: SolverConfig, v0=None) -> FactorizedSolution:
    """Fixed-stepsize gradient descent on one of the single-factor objectives.

    Runs ``cfg.iters`` updates (fewer if ``grad_tol`` triggers), then returns
    the factor, the symmetrized estimate V V^T, and the trace. ``v0``
    overrides the random start with a caller-chosen factor.

    Raises ``Diverged`` as soon as the objective stops being finite.
    """
    if cfg.kind not in FACTORIZED_KINDS:
        raise ValueError(f"solve_factorized does not handle kind={cfg.kind}")
    s0 = symmetrize(s0)
    n = s0.shape[0]
    lam, gamma = cfg.lam, cfg.gamma
    if v0 is None:
        v = init_factor(n, cfg.r, cfg.seed)
    else:
        v = np.array(v0, dtype=np.float64)
        if v.shape != (n, cfg.r):
            raise DimensionMismatch(f"v0 shape {v.shape} != ({n}, {cfg.r})")
    s0_sq = float(np.vdot(s0, s0))
    rec = _TraceRecorder(cfg.iters, cfg.trace_stride)
    rec.factor_norm_max = float(np.linalg.norm(v, "fro"))
    iterations = 0
    # overflow shows up as a non-finite objective and is promoted to Diverged
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(cfg.iters):
            tick = time.perf_counter_ns()
            sv = s0 @ v
            c = v.T @ v
            # |VV^T - S0|_F^2 expanded around the reused products
            fit = float(np.vdot(c, c)) - 2.0 * float(np.vdot(v, sv)) + s0_sq
            vsq = float(np.vdot(v, v))
            g = 4.0 * (v @ c - sv)
            if cfg.kind == SolverKind.SMCNN:
                obj = fit + lam * vsq
                g += 2.0 * lam * v
            elif cfg.kind == SolverKind.SMCNMF:
                gram_norm = float(np.linalg.norm(c, "fro"))  # == |VV^T|_F
                obj = fit + lam * (vsq - gram_norm)
                g += 2.0 * lam * v
                if gram_norm >= ZERO_GRAM_NORM:
                    g -= (2.0 * lam / gram_norm) * (v @ c)
            elif cfg.kind == SolverKind.SMC_F:
                gram_sq = float(np.vdot(c, c))  # == |VV^T|_F^2
                obj = fit + 0.5 * lam * gram_sq
                g += 2.0 * lam * (v @ c)
            else:  # SMC_NR
                obj = fit
            if not np.isfinite(obj):
                raise Diverged(f"objective became non-finite at iteration {t}")
            gn2 = float(np.vdot(g, g))
            if rec.want(t):
                rec.objective.append(obj)
                rec.grad_norm_sq.append(gn2)
            if cfg.grad_tol > 0.0 and np.sqrt(gn2) <= cfg.grad_tol:
                stopped_on_recorded = rec.want(t)
                break
            v = v - gamma * g
            fn = float(np.linalg.norm(v, "fro"))
            if fn > rec.factor_norm_max:
                rec.factor_norm_max = fn
            rec.wall[t] = time.perf_counter_ns() - tick
            iterations = t + 1
        else:
            stopped_on_recorded = False
    if not stopped_on_recorded:
        final_obj = factor_objective(cfg.kind, v, s0, lam)
        if not np.isfinite(final_obj):
            raise Diverged("objective became non-finite at the final iterate")
        rec.objective.append(final_obj)
    estimate = symmetrize(v @ v.T)
    return FactorizedSolution(v, estimate, rec.build(iterations))


def solve_smc_gd(s0, cfg: SolverConfig) -> FactorizedSolution:
    """Gradient step on the fit term followed by spectral soft-thresholding.

    Each iteration moves V along -4 (VV^T - S0) V, rebuilds S = V V^T,
    shrinks its eigenvalues by ``tau`` (default gamma * lam, the proximal
    scaling of the nuclear-norm weight), and refactors to width r. Because
    soft-thresholding preserves the eigenvectors and their order, the
    refactoring reuses the decomposition directly.
    """
    if SolverKind(cfg.kind) != SolverKind.SMC_GD:
        raise ValueError(f"solve_smc_gd requires kind=smc_gd, got {cfg.kind}")
    s0 = symmetrize(s0)
    n = s0.shape[0]
    tau = cfg.tau if cfg.tau is not None else cfg.gamma * cfg.lam
    if tau < 0.0:
        raise ValueError("tau must be nonnegative")
    v = init_factor(n, cfg.r, cfg.seed)
    s0_sq = float(np.vdot(s0, s0))
    rec = _TraceRecorder(cfg.iters, cfg.trace_stride)
    rec.factor_norm_max = float(np.linalg.norm(v, "fro"))
    iterations = 0
    for t in range(cfg.iters):
        tick = time.perf_counter_ns()
        sv = s0 @ v
        c = v.T @ v
        fit = float(np.vdot(c, c)) - 2.0 * float(np.vdot(v, sv)) + s0_sq
        # nuclear norm of the PSD gram V V^T is its trace
        obj = fit + cfg.lam * float(np.trace(c))
        if not np.isfinite(obj):
            raise Diverged(f"objective became non-finite at iteration {t}")
        g = 4.0 * (v @ c - sv)
        gn2 = float(np.vdot(g, g))
        if rec.want(t):
            rec.objective.append(obj)
            rec.grad_norm_sq.append(gn2)
        if cfg.grad_tol > 0.0 and np.sqrt(gn2) <= cfg.grad_tol:
            stopped_on_recorded = rec.want(t)
            break
        v = v - cfg.gamma * g
        vals, u = sym_eigendecompose(symmetrize(v @ v.T))
        shrunk = np.maximum(vals[: cfg.r] - tau, 0.0)
        v = u[:, : cfg.r] * np.sqrt(shrunk)
        fn = float(np.linalg.norm(v, "fro"))
        if fn > rec.factor_norm_max:
            rec.factor_norm_max = fn
        rec.wall[t] = time.perf_counter_ns() - tick
        iterations = t + 1
    else:
        stopped_on_recorded = False
    if not stopped_on_recorded:
        c = v.T @ v
        sv = s0 @ v
        fit = float(np.vdot(c, c)) - 2.0 * float(np.vdot(v, sv)) + s0_sq
        rec.objective.append(fit + cfg.lam * float(np.trace(c)))
    estimate = symmetrize(v @ v.T)
    return FactorizedSolution(v, estimate, rec.build(iterations))


def solve_mc_on(s0, cfg: SolverConfig) -> MatrixSolution:
    """Spectral floor on the full matrix: eigenvalues below tau are raised
    to tau each iteration.

    The rule is a fixed point after one application, so later iterations
    only confirm convergence; ``step_norm`` records |S^t - S^{t-1}|_F.
    """
    if SolverKind(cfg.kind) != SolverKind.MC_ON:
        raise ValueError(f"solve_mc_on requires kind=mc_on, got {cfg.kind}")
    s = symmetrize(s0)
    tau = cfg.tau if cfg.tau is not None else MC_ON_DEFAULT_TAU
    s0_sym = s.copy()
    rec = _TraceRecorder(cfg.iters, cfg.trace_stride)
    iterations = 0
    for t in range(cfg.iters):
        tick = time.perf_counter_ns()
        vals, u = sym_eigendecompose(s)
        clamped = np.maximum(vals, tau)
        s_next = symmetrize((u * clamped) @ u.T)
        step = float(np.linalg.norm(s_next - s, "fro"))
        obj = float(np.linalg.norm(s_next - s0_sym, "fro") ** 2) + cfg.lam * float(
            np.abs(clamped).sum()
        )
        if rec.want(t):
            rec.objective.append(obj)
            rec.step_norm.append(step)
        s = s_next
        rec.wall[t] = time.perf_counter_ns() - tick
        iterations = t + 1
    return MatrixSolution(s, rec.build(iterations))


def solve_mc_fon(s0, cfg: SolverConfig) -> MatrixSolution:
    """Two-factor descent on |W H^T - S0|_F^2 without a PSD constraint.

    Both gradients are evaluated at the pre-step pair and applied together.
    The estimate is the symmetrized product W H^T.
    """
    if SolverKind(cfg.kind) != SolverKind.MC_FON:
        raise ValueError(f"solve_mc_fon requires kind=mc_fon, got {cfg.kind}")
    s0 = symmetrize(s0)
    n = s0.shape[0]
    seeds = np.random.SeedSequence(cfg.seed).generate_state(2)
    w = init_factor(n, cfg.r, int(seeds[0]))
    h = init_factor(n, cfg.r, int(seeds[1]))
    rec = _TraceRecorder(cfg.iters, cfg.trace_stride)
    iterations = 0
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(cfg.iters):
            tick = time.perf_counter_ns()
            resid = w @ h.T - s0
            obj = float(np.vdot(resid, resid))
            if not np.isfinite(obj):
                raise Diverged(f"objective became non-finite at iteration {t}")
            gw = 2.0 * resid @ h
            gh = 2.0 * resid.T @ w
            gn2 = float(np.vdot(gw, gw)) + float(np.vdot(gh, gh))
            if rec.want(t):
                rec.objective.append(obj)
                rec.grad_norm_sq.append(gn2)
            if cfg.grad_tol > 0.0 and np.sqrt(gn2) <= cfg.grad_tol:
                stopped_on_recorded = rec.want(t)
                break
            w = w - cfg.gamma * gw
            h = h - cfg.gamma * gh
            rec.wall[t] = time.perf_counter_ns() - tick
            iterations = t + 1
        else:
            stopped_on_recorded = False
    if not stopped_on_recorded:
        final = two_factor_objective(w, h, s0)
        if not np.isfinite(final):
            raise Diverged("objective became non-finite at the final iterate")
        rec.objective.append(final)
    return MatrixSolution(symmetrize(w @ h.T), rec.build(iterations))


def impute_with_search_means(ds: MaskedDataset) -> np.ndarray:
    """Fill every missing entry with its feature's mean over search rows."""
    if ds.n_search < 1:
        raise EmptyFeature("no search rows to take feature means from")
    means = ds.X[: ds.n_search].mean(axis=0)
    filled = ds.X.copy()
    filled[~ds.mask] = np.broadcast_to(means, ds.X.shape)[~ds.mask]
    return filled


def mean_impute_similarity(ds: MaskedDataset) -> np.ndarray:
    """Mean-imputation baseline: impute, then take full cosine similarities."""
    return true_similarity(impute_with_search_means(ds), ds.epsilon)


def stepsize_from_theorem(bound_g: float, lam: float) -> float:
    """Convergence-guaranteeing stepsize 1 / (6 G^2 + lam) for a factor-norm
    bound G."""
    if bound_g <= 0.0:
        raise InvalidBound(f"bound G must be positive, got {bound_g}")
    return 1.0 / (6.0 * bound_g * bound_g + lam)


class TheoremStepsizeRun(NamedTuple):
    solution: FactorizedSolution
    bound: float
    gamma: float
    reruns: int
    bound_held: bool


def solve_with_theorem_stepsize(
    s0,
    cfg: SolverConfig,
    initial_bound: float | None = None,
    max_reruns: int = 1,
) -> TheoremStepsizeRun:
    """Run a factorized solver with gamma = 1 / (6 G^2 + lam).

    G is not known ahead of time, so the run starts from a guess (the
    initial factor's norm by default), measures max_t |V^t|_F afterwards,
    and reruns once with the measured bound if the guess was exceeded.
    """
    s0 = symmetrize(s0)
    n = s0.shape[0]
    if initial_bound is None:
        initial_bound = float(np.linalg.norm(init_factor(n, cfg.r, cfg.seed), "fro"))
    bound = initial_bound
    reruns = 0
    while True:
        gamma = stepsize_from_theorem(bound, cfg.lam)
        run_cfg = SolverConfig(
            kind=cfg.kind,
            r=cfg.r,
            lam=cfg.lam,
            gamma=gamma,
            iters=cfg.iters,
            seed=cfg.seed,
            tau=cfg.tau,
            grad_tol=cfg.grad_tol,
            bound_G=bound,
            trace_stride=cfg.trace_stride,
        )
        solution = solve_factorized(s0, run_cfg)
        measured = solution.trace.factor_norm_max
        if measured <= bound or reruns >= max_reruns:
            return TheoremStepsizeRun(solution, bound, gamma, reruns, measured <= bound)
        bound = measured
        reruns += 1


def solve(s0, cfg: SolverConfig) -> SolveOutcome:
    """Dispatch on ``cfg.kind``; the mean baseline needs the dataset and is
    not available here."""
    kind = SolverKind(cfg.kind)
    if kind in FACTORIZED_KINDS:
        factor, estimate, trace = solve_factorized(s0, cfg)
        return SolveOutcome(estimate, trace, factor)
    if kind == SolverKind.SMC_GD:
        factor, estimate, trace = solve_smc_gd(s0, cfg)
        return SolveOutcome(estimate, trace, factor)
    if kind == SolverKind.MC_ON:
        estimate, trace = solve_mc_on(s0, cfg)
        return SolveOutcome(estimate, trace, None)
    if kind == SolverKind.MC_FON:
        estimate, trace = solve_mc_fon(s0, cfg)
        return SolveOutcome(estimate, trace, None)
    raise ValueError(
        f"kind={kind.value} operates on the dataset; use mean_impute_similarity"
    )
