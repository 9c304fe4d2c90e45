"""Two-stage least-squares reconstruction of the source state.

Stage 1 fits the product of the empirical marginals with a per-mode
detector model, determining for each mode the detected thermal mean, the
dark-count mean, and the crosstalk probability. Binomial loss acting on
a thermal state is again thermal, with the mean scaled by the
efficiency, so stage 1 can only identify the product
``efficiency * mean_photons`` (the detected mean); the coincidence
structure in stage 2 splits it.

Stage 2 fits the full joint histogram with the degree of correlation and
the source mean as the free parameters, holding the detected means,
darks, and crosstalk from stage 1 fixed (the per-mode efficiency is
``detected_mean / mean_photons``).

Bootstrap uncertainties assume Poissonian counting noise: every cell is
replaced by an independent Poisson draw centered on the observed count
and the stage-2 fit and product distance are recomputed per resample.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import minimize

from .detector import (
    DetectorParams,
    crosstalk_matrix,
    dark_matrix,
    loss_matrix,
)
from .distributions import JointDistribution, SourceParams, mixture_joint, thermal_pmf
from .measures import product_distance, singular_spectrum
from .montecarlo import CountsMatrix, normalize

_DARK_MAX = 5.0
_XTALK_MAX = 0.45


@dataclass(frozen=True)
class FitConfig:
    """Optimizer settings shared by both fit stages.

    ``n_max`` is the photon-number truncation of the model distribution
    before the detector channel (the histogram's own range sets the
    output truncation). ``convergence_tol`` is the absolute tolerance on
    the objective decrease at which the simplex search stops.
    """

    max_iterations: int = 4000
    convergence_tol: float = 1e-14
    weighting: str = "poisson"
    n_max: int = 40

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError(f"max_iterations must be >= 1, got {self.max_iterations}")
        if not (self.convergence_tol > 0.0):
            raise ValueError(f"convergence_tol must be > 0, got {self.convergence_tol}")
        if self.weighting not in ("unweighted", "poisson"):
            raise ValueError(f"weighting must be 'unweighted' or 'poisson', got {self.weighting!r}")
        if self.n_max < 1:
            raise ValueError(f"n_max must be >= 1, got {self.n_max}")


@dataclass(frozen=True)
class Stage1Result:
    """Per-mode detector parameters identifiable from the marginals alone."""

    detected_mean_h: float
    detected_mean_v: float
    dark_h: float
    dark_v: float
    xtalk_h: float
    xtalk_v: float
    residual: float


@dataclass(frozen=True)
class FitResult:
    """Full fitted model with optional bootstrap uncertainties."""

    source: SourceParams
    det_h: DetectorParams
    det_v: DetectorParams
    residual: float
    g_error: float | None = None
    distance_error: float | None = None


class FitConvergenceError(RuntimeError):
    """Raised when the simplex search exhausts its iteration budget.

    ``best`` carries the best parameter estimate reached so far, so a
    caller can inspect or reuse it.
    """

    def __init__(self, message: str, best=None, objective: float | None = None):
        super().__init__(message)
        self.best = best
        self.objective = objective


def _weights(counts: CountsMatrix, config: FitConfig) -> np.ndarray:
    if config.weighting == "poisson":
        return 1.0 / np.maximum(counts.counts, 1)
    return np.ones_like(counts.counts, dtype=float)


def _minimize(objective, x0, bounds, config: FitConfig, trace: list | None = None):
    """Nelder-Mead with restarts; raises FitConvergenceError on budget exhaustion."""
    best = [np.inf, None]

    def tracked(x):
        val = objective(x)
        if val < best[0]:
            best[0], best[1] = val, np.array(x)
        if trace is not None:
            trace.append(best[0])
        return val

    x = np.asarray(x0, dtype=float)
    result = None
    for _ in range(3):
        result = minimize(
            tracked,
            x,
            method="Nelder-Mead",
            bounds=bounds,
            options={
                "maxiter": config.max_iterations,
                "fatol": config.convergence_tol,
                "xatol": 1e-10,
            },
        )
        x = result.x
        if result.success:
            break
    if result is None or not result.success:
        raise FitConvergenceError(
            f"simplex search did not converge within {config.max_iterations} iterations",
            best=best[1],
            objective=best[0],
        )
    return best[1], best[0]


def _detected_marginal(
    detected_mean: float,
    dark: float,
    xtalk: float,
    n_model: int,
    n_out: int,
) -> np.ndarray:
    """Thermal mode with the loss already absorbed, then darks and crosstalk."""
    t = thermal_pmf(detected_mean, n_model).probs
    after_dark = dark_matrix(dark, n_model, n_out).entries @ t
    return crosstalk_matrix(xtalk, n_out, n_out).entries @ after_dark


def _empirical_marginals(counts: CountsMatrix) -> tuple[np.ndarray, np.ndarray]:
    p = counts.counts / counts.shots
    return p.sum(axis=1), p.sum(axis=0)


def fit_stage1(
    counts: CountsMatrix, config: FitConfig | None = None, trace: list | None = None
) -> Stage1Result:
    """Fit the product of the empirical marginals with the detector model.

    Free parameters are, per mode, the detected thermal mean, the dark
    mean, and the crosstalk probability. Raises ValueError for a
    degenerate histogram (fewer than two occupied bins in a marginal) and
    FitConvergenceError if the search exhausts its budget.
    """
    config = config or FitConfig()
    emp_h, emp_v = _empirical_marginals(counts)
    if np.count_nonzero(emp_h) < 2 or np.count_nonzero(emp_v) < 2:
        raise ValueError("marginal with fewer than 2 occupied bins cannot constrain the fit")
    target = np.outer(emp_h, emp_v)
    w = _weights(counts, config)
    n_out = counts.n_max
    n_model = config.n_max

    def objective(x):
        marg_h = _detected_marginal(x[0], x[2], x[4], n_model, n_out)
        marg_v = _detected_marginal(x[1], x[3], x[5], n_model, n_out)
        diff = np.outer(marg_h, marg_v) - target
        return float((w * diff * diff).sum())

    counts_h = counts.counts.sum(axis=1)
    counts_v = counts.counts.sum(axis=0)
    dm_h, dk_h, xt_h = _prefit_marginal(emp_h, counts_h, n_model, n_out, config)
    dm_v, dk_v, xt_v = _prefit_marginal(emp_v, counts_v, n_model, n_out, config)
    x0 = np.array([dm_h, dm_v, dk_h, dk_v, xt_h, xt_v])
    mean_cap = 2.0 * max(_mean_of(emp_h), _mean_of(emp_v)) + 1.0
    bounds = [
        (1e-8, mean_cap),
        (1e-8, mean_cap),
        (0.0, _DARK_MAX),
        (0.0, _DARK_MAX),
        (0.0, _XTALK_MAX),
        (0.0, _XTALK_MAX),
    ]
    x, fval = _minimize(objective, x0, bounds, config, trace=trace)
    return Stage1Result(
        detected_mean_h=float(x[0]),
        detected_mean_v=float(x[1]),
        dark_h=float(x[2]),
        dark_v=float(x[3]),
        xtalk_h=float(x[4]),
        xtalk_v=float(x[5]),
        residual=fval,
    )


def _mean_of(marginal: np.ndarray) -> float:
    total = marginal.sum()
    if total <= 0.0:
        return 0.0
    return float(np.arange(marginal.size) @ marginal / total)


def _fact2_of(marginal: np.ndarray) -> float:
    total = marginal.sum()
    if total <= 0.0:
        return 0.0
    n = np.arange(marginal.size, dtype=float)
    return float((n * (n - 1.0)) @ marginal / total)


def _moment_start(emp: np.ndarray) -> tuple[float, float, float]:
    """Solve (detected mean, dark, crosstalk) from three marginal statistics.

    For the thermal + Poisson + one-generation-crosstalk model:
      mean                    = (1+eps) (dm + dark)
      P(0)                    = exp(-dark) / (1 + dm)
      <m(m-1)> / mean**2      = 2 - (dark/(dm+dark))**2
                                + 2 eps / ((1+eps)**2 (dm+dark))
    solved by alternating between the crosstalk update and a bisection of
    the zero-bin equation. Clipped into the fit bounds; accuracy beyond a
    few percent is the optimizer's job.
    """
    m1 = max(_mean_of(emp), 1e-6)
    f2 = _fact2_of(emp)
    p0 = float(np.clip(emp[0] / max(emp.sum(), 1e-300), 1e-12, 1.0 - 1e-12))
    eps = 0.05
    dm, dark = m1, 0.0
    for _ in range(12):
        total = m1 / (1.0 + eps)
        # P(0) is increasing in dm along the dm + dark = total line.
        lo, hi = 1e-9, total
        f_lo = math.exp(-(total - lo)) / (1.0 + lo) - p0
        f_hi = 1.0 / (1.0 + total) - p0
        if f_lo >= 0.0:
            dm = lo
        elif f_hi <= 0.0:
            dm = total
        else:
            for _ in range(50):
                mid = 0.5 * (lo + hi)
                if math.exp(-(total - mid)) / (1.0 + mid) - p0 < 0.0:
                    lo = mid
                else:
                    hi = mid
            dm = 0.5 * (lo + hi)
        dark = total - dm
        ratio = (dark / total) ** 2 if total > 0 else 0.0
        rhs = (f2 / (m1 * m1) - 2.0 + ratio) * total / 2.0
        eps = min(max(rhs, 0.0), _XTALK_MAX)
        for _ in range(5):
            eps = min(max(rhs * (1.0 + eps) ** 2, 0.0), _XTALK_MAX)
    return max(dm, 1e-8), max(dark, 0.0), eps


def _prefit_marginal(
    emp: np.ndarray,
    marginal_counts: np.ndarray,
    n_model: int,
    n_out: int,
    config: FitConfig,
) -> tuple[float, float, float]:
    """Fit one detected marginal alone; used to start the joint search.

    Runs the simplex from the moment solution and from two fallback
    regimes (all-signal and dark-dominated) and keeps the best, which
    makes the joint stage-1 fit robust to poor moment estimates.
    """
    if config.weighting == "poisson":
        w = 1.0 / np.maximum(marginal_counts, 1)
    else:
        w = np.ones_like(emp)

    def objective(x):
        diff = _detected_marginal(x[0], x[1], x[2], n_model, n_out) - emp
        return float((w * diff * diff).sum())

    m1 = max(_mean_of(emp), 1e-6)
    mean_cap = 2.0 * m1 + 1.0
    bounds = [(1e-8, mean_cap), (0.0, _DARK_MAX), (0.0, _XTALK_MAX)]
    starts = [
        _moment_start(emp),
        (0.9 * m1, 0.05 * m1 + 1e-3, 0.05),
        (0.3 * m1, 0.6 * m1, 0.1),
    ]
    best_x, best_val = None, np.inf
    for x0 in starts:
        try:
            x, val = _minimize(objective, x0, bounds, config)
        except FitConvergenceError as err:
            if err.best is None:
                continue
            x, val = err.best, err.objective
        if val < best_val:
            best_x, best_val = x, val
    if best_x is None:
        raise FitConvergenceError("no marginal prefit converged", best=None)
    return float(best_x[0]), float(best_x[1]), float(best_x[2])


def fit_stage2(
    counts: CountsMatrix,
    stage1: Stage1Result,
    config: FitConfig | None = None,
    trace: list | None = None,
) -> FitResult:
    """Fit the full joint histogram with (g, mean_photons) free.

    The stage-1 detected means, darks, and crosstalk are held fixed; the
    efficiencies follow from ``detected_mean / mean_photons``, so the
    source mean is bounded below by the larger detected mean. ``g`` is
    constrained to [0, 1] by the bounded search itself.
    """
    config = config or FitConfig()
    emp = counts.counts / counts.shots
    w = _weights(counts, config)
    n_out = counts.n_max
    n_model = config.n_max

    # Dark and crosstalk matrices do not depend on the free parameters.
    after_loss_h = (
        crosstalk_matrix(stage1.xtalk_h, n_out, n_out).entries
        @ dark_matrix(stage1.dark_h, n_model, n_out).entries
    )
    after_loss_v = (
        crosstalk_matrix(stage1.xtalk_v, n_out, n_out).entries
        @ dark_matrix(stage1.dark_v, n_model, n_out).entries
    )

    def model(g: float, mean: float) -> np.ndarray:
        eta_h = min(stage1.detected_mean_h / mean, 1.0)
        eta_v = min(stage1.detected_mean_v / mean, 1.0)
        ch = after_loss_h @ loss_matrix(eta_h, n_model).entries
        cv = after_loss_v @ loss_matrix(eta_v, n_model).entries
        joint = mixture_joint(SourceParams(mean, g), n_model)
        return ch @ joint.probs @ cv.T

    def objective(x):
        diff = model(x[0], x[1]) - emp
        return float((w * diff * diff).sum())

    mean_lo = max(stage1.detected_mean_h, stage1.detected_mean_v) * (1.0 + 1e-9)
    mean_hi = max(n_model / 3.0, mean_lo * 2.0)
    g0, mean0 = _stage2_scan(objective, mean_lo, mean_hi)
    x, fval = _minimize(
        objective, [g0, mean0], [(0.0, 1.0), (mean_lo, mean_hi)], config, trace=trace
    )
    g, mean = float(x[0]), float(x[1])
    return FitResult(
        source=SourceParams(mean_photons=mean, correlation=g),
        det_h=DetectorParams(
            efficiency=min(stage1.detected_mean_h / mean, 1.0),
            dark_mean=stage1.dark_h,
            crosstalk=stage1.xtalk_h,
        ),
        det_v=DetectorParams(
            efficiency=min(stage1.detected_mean_v / mean, 1.0),
            dark_mean=stage1.dark_v,
            crosstalk=stage1.xtalk_v,
        ),
        residual=fval,
    )


def _stage2_scan(objective, mean_lo: float, mean_hi: float) -> tuple[float, float]:
    """Coarse grid over (g, mean) picks the simplex starting point."""
    g_grid = np.linspace(0.05, 0.95, 10)
    mean_grid = np.geomspace(max(mean_lo, 1e-6), mean_hi, 14)
    best = (np.inf, 0.5, mean_grid[len(mean_grid) // 2])
    for g in g_grid:
        for m in mean_grid:
            val = objective([g, m])
            if val < best[0]:
                best = (val, float(g), float(m))
    return best[1], best[2]


def reconstruct(fit: FitResult, n_max: int) -> JointDistribution:
    """Pre-detector source distribution evaluated at the fitted parameters."""
    return mixture_joint(fit.source, n_max)


def poisson_resample(counts: CountsMatrix, rng: np.random.Generator) -> CountsMatrix:
    """Replace every cell (and the overflow) with a Poisson draw around it.

    The total number of shots is not conserved; it is recomputed from the
    resampled counts, matching the assumption of independent Poissonian
    cell noise.
    """
    for _ in range(100):
        new_counts = rng.poisson(counts.counts)
        new_overflow = int(rng.poisson(counts.overflow))
        total = int(new_counts.sum()) + new_overflow
        if total > 0:
            return CountsMatrix(
                n_max=counts.n_max,
                counts=new_counts,
                shots=total,
                overflow=new_overflow,
            )
    raise ValueError("resampling produced only empty histograms; counts are too sparse")


def _resample_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, index))))


def bootstrap(
    counts: CountsMatrix,
    n_resamples: int = 100,
    seed: int = 0,
    config: FitConfig | None = None,
) -> tuple[float, float]:
    """Bootstrap standard deviations of the fitted g and of the product distance.

    Each resample draws an independent Poisson histogram around the
    observed counts, then recomputes the product distance and the stage-2
    fit (stage 1 is fit once, on the original counts). Resamples use
    independent RNG streams derived from ``(seed, resample_index)``, so
    the result does not depend on execution order.
    """
    if n_resamples < 2:
        raise ValueError(f"n_resamples must be >= 2, got {n_resamples}")
    config = config or FitConfig()
    stage1 = fit_stage1(counts, config)
    g_samples = np.empty(n_resamples)
    d_samples = np.empty(n_resamples)
    for r in range(n_resamples):
        resampled = poisson_resample(counts, _resample_rng(seed, r))
        d_samples[r] = product_distance(singular_spectrum(normalize(resampled)))
        try:
            g_samples[r] = fit_stage2(resampled, stage1, config).source.correlation
        except FitConvergenceError as err:
            if err.best is None:
                raise
            g_samples[r] = float(err.best[0])
    return float(g_samples.std(ddof=1)), float(d_samples.std(ddof=1))


def fit_counts(
    counts: CountsMatrix,
    config: FitConfig | None = None,
    n_bootstrap: int = 0,
    seed: int = 0,
) -> FitResult:
    """Run both stages, optionally followed by bootstrap error estimation."""
    config = config or FitConfig()
    stage1 = fit_stage1(counts, config)
    result = fit_stage2(counts, stage1, config)
    if n_bootstrap > 0:
        g_err, d_err = bootstrap(counts, n_bootstrap, seed, config)
        result = replace(result, g_error=g_err, distance_error=d_err)
    return result
