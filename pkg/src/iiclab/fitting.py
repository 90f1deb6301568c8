"""Log-log power-law fits with bootstrap confidence intervals."""
from dataclasses import asdict, dataclass, field

import numpy as np


class InsufficientDataError(ValueError):
    pass


@dataclass
class ScalingFit:
    """Least-squares line through (log x, log y).

    ``ci`` is the bootstrap interval of the slope.  ``exponent`` is a
    derived quantity (e.g. 2/slope for displacement fits) with its own
    interval ``exponent_ci``.
    """

    x: np.ndarray
    y: np.ndarray
    slope: float
    intercept: float
    stderr: float
    intercept_stderr: float
    ci: tuple
    exponent: float = float("nan")
    exponent_ci: tuple = (float("nan"), float("nan"))
    kind: str = "power"
    n_boot: int = 0
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        d = asdict(self)
        d["x"] = [float(v) for v in self.x]
        d["y"] = [float(v) for v in self.y]
        d["ci"] = [float(v) for v in self.ci]
        d["exponent_ci"] = [float(v) for v in self.exponent_ci]
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["x"] = np.asarray(d["x"], dtype=float)
        d["y"] = np.asarray(d["y"], dtype=float)
        d["ci"] = tuple(d["ci"])
        d["exponent_ci"] = tuple(d["exponent_ci"])
        return cls(**d)


def _wls(lx, ly, w):
    """Weighted least squares line; returns slope, intercept, their standard errors."""
    W = w.sum()
    mx = (w * lx).sum() / W
    my = (w * ly).sum() / W
    sxx = (w * (lx - mx) ** 2).sum()
    if sxx <= 0:
        raise InsufficientDataError("abscissae are all equal")
    slope = (w * (lx - mx) * (ly - my)).sum() / sxx
    intercept = my - slope * mx
    resid = ly - intercept - slope * lx
    dof = len(lx) - 2
    s2 = (w * resid**2).sum() / dof if dof > 0 else 0.0
    se_slope = np.sqrt(s2 / sxx)
    se_int = np.sqrt(s2 * (1.0 / W + mx**2 / sxx))
    return slope, intercept, se_slope, se_int


def _interval(samples, level):
    a = (1 - level) / 2
    return float(np.quantile(samples, a)), float(np.quantile(samples, 1 - a))


def fit_loglog(x, y, yerr=None, bootstrap=1000, seed=0, level=0.95, min_points=4):
    """Weighted least squares on (log x, log y), bootstrap CI by point resampling.

    Weights are 1/sigma^2 with sigma = yerr/y (the delta-method error of
    log y); unweighted when ``yerr`` is None or has zeros.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < min_points:
        raise InsufficientDataError(f"need at least {min_points} points, got {len(x)}")
    if np.any(x <= 0):
        raise ValueError("abscissae must be positive")
    if np.any(~(y > 0)):
        raise ValueError("ordinates must be positive")
    lx, ly = np.log(x), np.log(y)
    if yerr is None or np.any(np.asarray(yerr) <= 0):
        w = np.ones_like(lx)
    else:
        w = (y / np.asarray(yerr, dtype=float)) ** 2
    slope, intercept, se, se_i = _wls(lx, ly, w)
    rng = np.random.default_rng(seed)
    boots = []
    for _ in range(bootstrap):
        idx = rng.integers(len(x), size=len(x))
        if np.ptp(lx[idx]) == 0:
            continue
        boots.append(_wls(lx[idx], ly[idx], w[idx])[0])
    if boots:
        lo, hi = _interval(np.array(boots), level)
    else:
        lo = hi = slope
    return ScalingFit(
        x=x,
        y=y,
        slope=float(slope),
        intercept=float(intercept),
        stderr=float(se),
        intercept_stderr=float(se_i),
        ci=(min(lo, slope), max(hi, slope)),
        n_boot=len(boots),
    )


def fit_loglog_grouped(x, sums, counts, bootstrap=1000, seed=0, level=0.95, min_points=4):
    """Fit log of pooled means against log x, bootstrapping over units.

    ``sums`` and ``counts`` have shape (units, len(x)); the ordinate at
    grid point g is sums[:, g].sum() / counts[:, g].sum().  Units (e.g.
    clusters) are resampled with replacement, so the interval reflects
    unit-to-unit variability.
    """
    x = np.asarray(x, dtype=float)
    sums = np.asarray(sums, dtype=float)
    counts = np.asarray(counts, dtype=float)
    if len(x) < min_points:
        raise InsufficientDataError(f"need at least {min_points} points, got {len(x)}")
    lx = np.log(x)

    def line(s, c):
        with np.errstate(invalid="ignore", divide="ignore"):
            m = s.sum(axis=0) / c.sum(axis=0)
        ok = m > 0
        if ok.sum() < 2:
            return None
        return _wls(lx[ok], np.log(m[ok]), np.ones(ok.sum())), m

    res = line(sums, counts)
    if res is None:
        raise InsufficientDataError("fewer than two positive means")
    (slope, intercept, se, se_i), means = res
    rng = np.random.default_rng(seed)
    U = sums.shape[0]
    boots = []
    for _ in range(bootstrap):
        idx = rng.integers(U, size=U)
        r = line(sums[idx], counts[idx])
        if r is not None:
            boots.append(r[0][0])
    lo, hi = _interval(np.array(boots), level) if boots else (slope, slope)
    fit = ScalingFit(
        x=x,
        y=means,
        slope=float(slope),
        intercept=float(intercept),
        stderr=float(se),
        intercept_stderr=float(se_i),
        ci=(min(lo, slope), max(hi, slope)),
        n_boot=len(boots),
    )
    fit.extra["boot_slopes"] = boots
    return fit


def with_exponent(fit, transform, kind):
    """Attach a monotone transform of the slope as the derived exponent."""
    a, b = transform(fit.ci[0]), transform(fit.ci[1])
    fit.exponent = float(transform(fit.slope))
    fit.exponent_ci = (float(min(a, b)), float(max(a, b)))
    fit.kind = kind
    return fit
