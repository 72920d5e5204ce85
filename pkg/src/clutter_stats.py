"""
Sea-clutter amplitude statistics

Maximum-likelihood fits of five amplitude families, empirical densities,
KL distance and model selection.
"""

import math
from dataclasses import dataclass
from typing import Dict, Optional, Union

import numpy as np
from scipy.special import digamma, gammaln, polygamma

from config import FIT_TOL, FIT_MAX_ITER, KL_EPS, KL_ROUNDING
from errors import FittingError, InvalidInputError
from logging_conf import logger
from schemas import Family, FittedModel, KlReport

MIN_SAMPLES = 10
ArrayLike = Union[float, np.ndarray]


@dataclass(frozen=True)
class EmpiricalPdf:
    """Normalized histogram: density integrates to 1 over the bins"""

    bin_edges: np.ndarray
    density: np.ndarray
    n_samples: int

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.bin_edges)

    @property
    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.bin_edges[:-1] + self.bin_edges[1:])


def _log_pdf(model: FittedModel, x: np.ndarray) -> np.ndarray:
    """Log density at strictly positive x"""
    p1, p2 = model.p1, model.p2
    ln_x = np.log(x)
    if model.family == Family.WEIBULL:
        alpha, beta = p1, p2
        return math.log(alpha / beta) + (alpha - 1.0) * (ln_x - math.log(beta)) - (x / beta) ** alpha
    if model.family == Family.LOGNORMAL:
        gamma, eta = p1, p2
        return -ln_x - math.log(eta * math.sqrt(2.0 * math.pi)) - (ln_x - gamma) ** 2 / (2.0 * eta ** 2)
    if model.family == Family.INVERSE_GAUSSIAN:
        mu, lam = p1, p2
        return 0.5 * (math.log(lam / (2.0 * math.pi)) - 3.0 * ln_x) - lam * (x - mu) ** 2 / (2.0 * mu ** 2 * x)
    if model.family == Family.GAMMA:
        a, b = p1, p2
        return (a - 1.0) * ln_x - x / b - a * math.log(b) - gammaln(a)
    if model.family == Family.RAYLEIGH:
        sigma = p1
        return ln_x - 2.0 * math.log(sigma) - x ** 2 / (2.0 * sigma ** 2)
    raise InvalidInputError(f"unsupported family {model.family}")


def pdf_eval(model: FittedModel, x: ArrayLike) -> ArrayLike:
    """
    Closed-form density of the model at amplitude(s) x >= 0

    At x = 0 the lognormal, inverse Gaussian, gamma and Rayleigh
    densities are 0; Weibull gives 0, 1/beta or inf for alpha >, =, < 1.
    """
    values = np.asarray(x, dtype=np.float64)
    if np.any(values < 0) or np.any(np.isnan(values)):
        raise InvalidInputError("amplitudes must be >= 0")

    out = np.zeros_like(values)
    positive = values > 0
    out[positive] = np.exp(_log_pdf(model, values[positive]))

    if model.family == Family.WEIBULL:
        alpha, beta = model.p1, model.p2
        at_zero = 1.0 / beta if alpha == 1.0 else (np.inf if alpha < 1.0 else 0.0)
        out[values == 0] = at_zero

    return float(out) if out.ndim == 0 else out


def log_likelihood(model: FittedModel, samples: np.ndarray) -> float:
    return float(np.sum(_log_pdf(model, np.asarray(samples, dtype=np.float64))))


def _validated(samples: np.ndarray) -> np.ndarray:
    """Sorted float copy; sorting makes every sum independent of input order"""
    x = np.asarray(samples, dtype=np.float64).ravel()
    if x.size < MIN_SAMPLES:
        raise InvalidInputError(f"need at least {MIN_SAMPLES} samples, got {x.size}")
    if not np.all(np.isfinite(x)) or np.any(x <= 0):
        raise InvalidInputError("samples must be finite and strictly positive")
    x = np.sort(x)
    if x[0] == x[-1]:
        raise InvalidInputError("samples are all identical")
    return x


def _fit_weibull(x: np.ndarray, tol: float, max_iter: int) -> tuple[float, float]:
    # Newton on the profile equation 1/a = sum(x^a ln x)/sum(x^a) - mean(ln x);
    # data scaled by its max keeps x^a in (0, 1]
    scale = x[-1]
    y = x / scale
    ln_y = np.log(y)
    mean_ln = float(np.mean(ln_y))

    cv = float(np.std(x) / np.mean(x))
    alpha = cv ** -1.086

    for _ in range(max_iter):
        y_a = y ** alpha
        s0 = np.sum(y_a)
        s1 = np.sum(y_a * ln_y)
        s2 = np.sum(y_a * ln_y ** 2)
        g = s1 / s0 - mean_ln - 1.0 / alpha
        dg = s2 / s0 - (s1 / s0) ** 2 + 1.0 / alpha ** 2
        updated = alpha - g / dg
        if not updated > 0:
            updated = alpha / 2.0
        if abs(updated - alpha) < tol:
            alpha = updated
            break
        alpha = updated
    else:
        raise FittingError(f"weibull shape did not converge in {max_iter} iterations")

    beta = scale * float(np.mean(y ** alpha)) ** (1.0 / alpha)
    return float(alpha), beta


def _fit_gamma(x: np.ndarray, tol: float, max_iter: int) -> tuple[float, float]:
    mean = float(np.mean(x))
    s = math.log(mean) - float(np.mean(np.log(x)))
    a = mean ** 2 / float(np.var(x))

    for _ in range(max_iter):
        f = math.log(a) - float(digamma(a)) - s
        df = 1.0 / a - float(polygamma(1, a))
        updated = a - f / df
        if not updated > 0:
            updated = a / 2.0
        if abs(updated - a) < tol * max(1.0, a):
            a = updated
            break
        a = updated
    else:
        raise FittingError(f"gamma shape did not converge in {max_iter} iterations")

    return a, mean / a


def fit(family: Family, samples: np.ndarray, tol: float = FIT_TOL, max_iter: int = FIT_MAX_ITER) -> FittedModel:
    """
    Maximum-likelihood fit of one family

    Args:
        family: distribution family
        samples: at least 10 strictly positive, not all identical
        tol: stopping tolerance on the shape update (Weibull, gamma)
        max_iter: iteration cap

    Raises:
        InvalidInputError: degenerate samples
        FittingError: no convergence within max_iter
    """
    x = _validated(samples)
    family = Family(family)

    if family == Family.WEIBULL:
        p1, p2 = _fit_weibull(x, tol, max_iter)
    elif family == Family.LOGNORMAL:
        ln_x = np.log(x)
        p1, p2 = float(np.mean(ln_x)), float(np.std(ln_x))
    elif family == Family.INVERSE_GAUSSIAN:
        mu = float(np.mean(x))
        p1, p2 = mu, x.size / float(np.sum(1.0 / x - 1.0 / mu))
    elif family == Family.GAMMA:
        p1, p2 = _fit_gamma(x, tol, max_iter)
    elif family == Family.RAYLEIGH:
        p1, p2 = math.sqrt(float(np.sum(x ** 2)) / (2.0 * x.size)), None
    else:
        raise InvalidInputError(f"unsupported family {family}")

    model = FittedModel(family=family, p1=p1, p2=p2, n_samples=int(x.size))
    return model.model_copy(update={"log_likelihood": log_likelihood(model, x)})


def build_histogram(samples: np.ndarray, bins: Optional[int] = None, upper: Optional[float] = None) -> EmpiricalPdf:
    """
    Equal-width density histogram over [0, upper]

    upper defaults to max(samples); bins defaults to ceil(2 N^(1/3)).
    """
    x = np.asarray(samples, dtype=np.float64).ravel()
    if x.size == 0:
        raise InvalidInputError("cannot build a histogram of no samples")
    if not np.all(np.isfinite(x)) or np.any(x < 0):
        raise InvalidInputError("histogram samples must be finite and non-negative")

    if upper is None:
        upper = float(x.max())
    if not upper > 0:
        raise InvalidInputError("histogram range is empty")
    if bins is None:
        bins = int(math.ceil(2.0 * x.size ** (1.0 / 3.0)))
    if bins < 1:
        raise InvalidInputError(f"bins must be >= 1, got {bins}")

    counts, edges = np.histogram(x, bins=bins, range=(0.0, upper))
    total = int(counts.sum())
    if total == 0:
        raise InvalidInputError("no samples fall inside the histogram range")
    density = counts / (total * np.diff(edges))
    return EmpiricalPdf(bin_edges=edges, density=density, n_samples=total)


def kl_from_densities(p_d: np.ndarray, p_e: np.ndarray, widths: np.ndarray, eps: float = KL_EPS) -> float:
    """
    Discrete D(p_d || p_e) = sum p_d ln(p_d / p_e) dx

    p_e is floored at eps and scaled down if its mass exceeds 1, so a
    normalized p_d gives a non-negative result up to rounding.
    """
    p_d = np.asarray(p_d, dtype=np.float64)
    p_e = np.maximum(np.asarray(p_e, dtype=np.float64), eps)
    widths = np.asarray(widths, dtype=np.float64)

    mass = float(np.sum(p_e * widths))
    if mass > 1.0:
        p_e = p_e / mass

    used = p_d > 0
    terms = p_d[used] * np.log(p_d[used] / p_e[used]) * widths[used]
    d = float(np.sum(terms))
    # rounding only; larger negatives mean p_d was not a density
    return 0.0 if -KL_ROUNDING < d < 0.0 else d


def kl_distance(emp: EmpiricalPdf, model: FittedModel, eps: float = KL_EPS) -> float:
    """KL distance from the histogram to the model, model sampled at bin midpoints"""
    return kl_from_densities(emp.density, pdf_eval(model, emp.midpoints), emp.widths, eps)


def model_mean(model: FittedModel) -> float:
    """Mean amplitude of the model"""
    p1, p2 = model.p1, model.p2
    if model.family == Family.WEIBULL:
        return p2 * math.gamma(1.0 + 1.0 / p1)
    if model.family == Family.LOGNORMAL:
        return math.exp(p1 + p2 ** 2 / 2.0)
    if model.family == Family.INVERSE_GAUSSIAN:
        return p1
    if model.family == Family.GAMMA:
        return p1 * p2
    if model.family == Family.RAYLEIGH:
        return p1 * math.sqrt(math.pi / 2.0)
    raise InvalidInputError(f"unsupported family {model.family}")


def select_model(
    samples: np.ndarray,
    bins: Optional[int] = None,
    emp: Optional[EmpiricalPdf] = None,
) -> KlReport:
    """
    Fit all five families and rank them by KL distance on one histogram

    Non-positive samples are dropped. A family whose fit fails is left
    out of the report with a warning.
    """
    x = np.asarray(samples, dtype=np.float64).ravel()
    positive = x[x > 0]
    if positive.size < x.size:
        logger.warning(f"Dropped {x.size - positive.size} non-positive samples before fitting")
    x = np.sort(positive)

    if emp is None:
        emp = build_histogram(x, bins)

    distances: Dict[Family, float] = {}
    models: Dict[Family, FittedModel] = {}
    for family in Family:
        try:
            model = fit(family, x)
        except (FittingError, InvalidInputError) as e:
            logger.warning(f"Fit of {family.value} failed, omitted from report: {e}")
            continue
        models[family] = model
        distances[family] = kl_distance(emp, model)
        logger.info(f"  {family.value:<17} p1={model.p1:.4g} p2={model.p2} KL={distances[family]:.5f}")

    if not distances:
        raise FittingError("no family could be fitted to the samples")

    best = min(distances, key=lambda fam: (distances[fam], list(Family).index(fam)))
    return KlReport(distances=distances, models=models, best_family=best)
