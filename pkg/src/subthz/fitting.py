"""Parameter estimation: log-distance path loss, distributions, CDFs, gain curves."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import optimize, stats


class FitError(RuntimeError):
    def __init__(self, message: str, best_residual: float = math.inf):
        super().__init__(message)
        self.best_residual = best_residual


# ---------------------------------------------------------------------------
# log-distance path loss


@dataclass(frozen=True)
class LogDistanceFit:
    pl0: float
    n: float
    sigma: float
    d0: float = 1.0

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")

    def predict(self, distance, shadowing=0.0):
        return self.pl0 + 10 * self.n * np.log10(np.asarray(distance) / self.d0) + shadowing


def fit_log_distance(
    distances,
    path_loss_db,
    pl0_mode: str = "fixed_friis",
    *,
    frequency: float = 140e9,
    d0: float = 1.0,
) -> LogDistanceFit:
    """Gaussian-shadowing MLE of the path-loss exponent.

    Under zero-mean Gaussian shadowing the likelihood is maximized by least
    squares on x = 10 log10(d / d0); sigma is the RMS residual. In
    ``fixed_friis`` mode the intercept is the free-space loss at d0.
    """
    from .model import friis_pl0

    d = np.asarray(distances, dtype=float)
    y = np.asarray(path_loss_db, dtype=float)
    if d.shape != y.shape or d.ndim != 1:
        raise ValueError("distances and path losses must be 1-D and equally long")
    if np.any(d <= 0):
        raise ValueError("distances must be positive")
    if len(np.unique(d)) < 2:
        raise FitError("degenerate design: fewer than two distinct distances")
    x = 10 * np.log10(d / d0)
    if pl0_mode == "fixed_friis":
        pl0 = friis_pl0(frequency, d0)
        n = float(np.dot(x, y - pl0) / np.dot(x, x))
    elif pl0_mode == "free":
        xm, ym = x.mean(), y.mean()
        n = float(np.dot(x - xm, y - ym) / np.dot(x - xm, x - xm))
        pl0 = float(ym - n * xm)
    else:
        raise ValueError(f"unknown pl0_mode {pl0_mode!r}")
    resid = y - pl0 - n * x
    sigma = float(np.sqrt(np.mean(resid**2)))
    return LogDistanceFit(pl0=float(pl0), n=n, sigma=sigma, d0=d0)


# ---------------------------------------------------------------------------
# distributions and empirical CDFs


@dataclass(frozen=True)
class DistributionFit:
    family: str
    params: tuple

    def __post_init__(self):
        if self.family == "normal":
            if self.params[1] < 0:
                raise ValueError("sigma must be >= 0")
        elif self.family == "exponential":
            if self.params[0] <= 0:
                raise ValueError("beta must be positive")
        else:
            raise ValueError(f"unknown family {self.family!r}")

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        if self.family == "normal":
            mu, sigma = self.params
            if sigma == 0:
                return (x >= mu).astype(float)
            return stats.norm.cdf(x, mu, sigma)
        (beta,) = self.params
        return stats.expon.cdf(x, scale=beta)

    def to_dict(self) -> dict:
        names = ("mu", "sigma") if self.family == "normal" else ("beta",)
        return {"family": self.family, **dict(zip(names, self.params))}


def fit_distribution(samples, family: str) -> DistributionFit:
    """Maximum-likelihood normal (mean, std) or exponential (mean) fit."""
    x = np.asarray(samples, dtype=float)
    if x.size < 2:
        raise ValueError("at least two samples are required")
    if not np.all(np.isfinite(x)):
        raise ValueError("samples must be finite")
    if family == "normal":
        if np.ptp(x) == 0:  # exact zero rather than rounding noise
            return DistributionFit("normal", (float(x[0]), 0.0))
        return DistributionFit("normal", (float(x.mean()), float(x.std())))
    if family == "exponential":
        if np.any(x < 0):
            raise ValueError("exponential fit needs non-negative samples")
        return DistributionFit("exponential", (float(x.mean()),))
    raise ValueError(f"unknown family {family!r}")


def empirical_cdf(samples):
    """Distinct sorted values and P(X <= value), a right-continuous step function."""
    x = np.sort(np.asarray(samples, dtype=float))
    if x.size == 0:
        raise ValueError("empirical CDF of an empty sample")
    values, counts = np.unique(x, return_counts=True)
    return values, np.cumsum(counts) / x.size


def ks_statistic(samples, cdf: Callable) -> float:
    """Two-sided Kolmogorov-Smirnov distance between the sample and ``cdf``."""
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.size
    f = cdf(x)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - f), np.max(f - (i - 1) / n)))


# ---------------------------------------------------------------------------
# gain curves

FORMS = {"quadratic": 3, "two_exponential": 4}


@dataclass(frozen=True)
class GainCurveFit:
    form: str
    coefficients: tuple
    rmse: float
    n_points: int

    def __post_init__(self):
        if len(self.coefficients) != FORMS[self.form]:
            raise ValueError(f"{self.form} takes {FORMS[self.form]} coefficients")

    def __call__(self, gain):
        return _evaluate(self.form, np.asarray(self.coefficients), np.asarray(gain, dtype=float))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["coefficients"] = list(self.coefficients)
        return d


def _evaluate(form: str, p: np.ndarray, g: np.ndarray):
    if form == "quadratic":
        return p[0] * g**2 + p[1] * g + p[2]
    return p[0] * np.exp(p[1] * g) + p[2] * np.exp(p[3] * g)


def _two_exp_jacobian(p: np.ndarray, g: np.ndarray) -> np.ndarray:
    e1 = np.exp(p[1] * g)
    e2 = np.exp(p[3] * g)
    return np.column_stack([e1, p[0] * g * e1, e2, p[2] * g * e2])


def _linear_amplitudes(rates, g, y):
    basis = np.column_stack([np.exp(rates[0] * g), np.exp(rates[1] * g)])
    amps, *_ = np.linalg.lstsq(basis, y, rcond=None)
    return amps


def _refine(p0, g, y, max_iter, tol):
    """Levenberg-Marquardt (damped Gauss-Newton) refinement of one start."""
    def resid(p):
        with np.errstate(over="ignore", invalid="ignore"):
            return _evaluate("two_exponential", p, g) - y

    try:
        res = optimize.least_squares(
            resid, p0, jac=lambda p: _two_exp_jacobian(p, g), method="lm",
            x_scale="jac", xtol=tol, ftol=tol, gtol=tol, max_nfev=max_iter * 5,
        )
    except (ValueError, np.linalg.LinAlgError):
        return p0, math.inf, False
    cost = float(res.fun @ res.fun)
    return res.x, cost, bool(res.status > 0 and np.isfinite(cost))


def _rate_starts(seed: Optional[int]) -> list[tuple[float, float]]:
    mags = np.logspace(-4, 0, 8)
    rates = np.concatenate([-mags[::-1], mags])
    if seed is not None:
        rates = rates * np.exp(np.random.default_rng(seed).normal(0.0, 0.1, rates.size))
    return [(b, d) for b in rates for d in rates if b > d]


def fit_gain_curve(
    gains: Sequence[float],
    values: Sequence[float],
    form: str = "quadratic",
    *,
    seed: Optional[int] = None,
    max_iter: int = 200,
    tol: float = 1e-15,
) -> GainCurveFit:
    """Fit a metric-vs-gain curve.

    ``quadratic`` a g^2 + b g + c is solved in closed form.
    ``two_exponential`` a e^(b g) + c e^(d g) runs Levenberg-Marquardt from
    every pair of 16 log-spaced rate constants (slower rate first), with the
    amplitudes of each start solved linearly; the lowest residual wins.
    ``seed`` jitters the start rates.
    """
    if form not in FORMS:
        raise ValueError(f"unknown form {form!r}")
    g = np.asarray(gains, dtype=float)
    y = np.asarray(values, dtype=float)
    if g.shape != y.shape or g.ndim != 1:
        raise ValueError("gains and values must be 1-D and equally long")
    if g.size < FORMS[form]:
        raise ValueError(f"{form} needs at least {FORMS[form]} points")

    if form == "quadratic":
        design = np.column_stack([g**2, g, np.ones_like(g)])
        coef, *_ = np.linalg.lstsq(design, y, rcond=None)
        rmse = float(np.sqrt(np.mean((design @ coef - y) ** 2)))
        return GainCurveFit(form, tuple(float(c) for c in coef), rmse, int(g.size))

    best = None
    for rates in _rate_starts(seed):
        amps = _linear_amplitudes(rates, g, y)
        p0 = np.array([amps[0], rates[0], amps[1], rates[1]])
        p, cost, converged = _refine(p0, g, y, max_iter, tol)
        if not converged or not np.all(np.isfinite(p)):
            continue
        if p[1] < p[3]:
            p = p[[2, 3, 0, 1]]
        key = (cost, tuple(p))
        if best is None or key < best:
            best = key
    if best is None:
        raise FitError("two-exponential fit did not converge from any start")
    cost, coef = best
    return GainCurveFit(form, tuple(float(c) for c in coef), math.sqrt(cost / g.size), int(g.size))
