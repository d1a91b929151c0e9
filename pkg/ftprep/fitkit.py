"""
Nonlinear least-squares fits of the insertion curves and of logical decay,
and recovery of the readout crossovers that best explain a set of fitted
insertion coefficients.

Fits use :py:func:`scipy.optimize.least_squares` (trust region reflective,
finite-difference Jacobian). Standard errors come from the singular values
of the Jacobian at the solution; a parameter the data cannot determine gets
an infinite standard error.
"""
import concurrent.futures
import csv
import dataclasses
import json
import logging
import math
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy import optimize

from ftprep.analytic import (
    DecayModelParams,
    Location,
    bit_populations,
    decay_model,
    ideal_decay,
    insertion_coefficients,
)
from ftprep.errors import FitError, SchemaError, UnknownNameError

__all__ = [
    'CurveData',
    'FitResult',
    'InsertionCurves',
    'InsertionFit',
    'MatchResult',
    'least_squares',
    'fit_insertion',
    'fit_decay',
    'decay_symmetries',
    'fit_ideal_decay',
    'match_model_params',
    'read_curve_csv',
    'write_curve_csv',
    'write_fit_json',
]

logger = logging.getLogger(__name__)

TOLERANCE = 1e-14
OPTIMALITY_LIMIT = 1e-6
IDENTIFIABILITY_LIMIT = 1e3
DELTA_STARTS = 5
FLAT_CURVATURE = 1e-9


@dataclasses.dataclass(frozen=True, eq=False)
class CurveData:
    """A measured curve. ``sigma`` defaults to unit weights."""

    x: np.ndarray
    y: np.ndarray
    sigma: np.ndarray | None = None

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if x.ndim != 1 or x.shape != y.shape:
            raise FitError(f"x and y must be equal-length vectors, got {x.shape}, {y.shape}")
        if self.sigma is None:
            sigma = np.ones_like(y)
        else:
            sigma = np.asarray(self.sigma, dtype=float)
            if sigma.shape != y.shape:
                raise FitError("sigma must have one entry per point")
            if not np.all(sigma > 0):
                raise FitError("Standard errors must be positive")
        object.__setattr__(self, 'x', x)
        object.__setattr__(self, 'y', y)
        object.__setattr__(self, 'sigma', sigma)

    def __len__(self):
        return len(self.x)


@dataclasses.dataclass(frozen=True, eq=False)
class FitResult:
    names: tuple[str, ...]
    values: np.ndarray
    stderr: np.ndarray
    rss: float
    converged: bool
    optimality: float
    message: str = ''

    def __getitem__(self, name):
        try:
            return float(self.values[self.names.index(name)])
        except ValueError as e:
            raise UnknownNameError(name, 'fit parameter', self.names) from e

    def error(self, name) -> float:
        return float(self.stderr[self.names.index(name)])

    @property
    def identifiable(self) -> bool:
        """Whether every standard error is finite and not absurdly large."""
        scale = np.maximum(1.0, np.abs(self.values))
        bounded = self.stderr <= IDENTIFIABILITY_LIMIT * scale
        return bool(np.all(np.isfinite(self.stderr) & bounded))

    def as_dict(self) -> dict:
        return {
            'parameters': {n: float(v) for n, v in zip(self.names, self.values)},
            'stderr': {
                n: (float(e) if math.isfinite(e) else None)
                for n, e in zip(self.names, self.stderr)
            },
            'rss': self.rss,
            'converged': self.converged,
            'identifiable': self.identifiable,
            'optimality': self.optimality,
            'message': self.message,
        }


def _standard_errors(jac, residuals, weighted):
    n, p = jac.shape
    if p == 0:
        return np.zeros(0)
    _, s, vt = np.linalg.svd(jac, full_matrices=False)
    threshold = np.finfo(float).eps * max(jac.shape) * (s[0] if len(s) else 0)
    var = np.zeros(p)
    for k in range(len(s)):
        weight = vt[k] ** 2
        if s[k] <= threshold:
            var = np.where(weight > 1e-12, np.inf, var)
        else:
            var = var + weight / s[k] ** 2
    if len(s) < p:
        var[:] = np.inf
    if not weighted:
        dof = n - p
        scale = residuals @ residuals / dof if dof > 0 else np.inf
        var = np.where(np.isinf(var), np.inf, var * scale)
    return np.sqrt(var)


def least_squares(
    model: Callable,
    data: CurveData,
    init: Sequence[float],
    names: Sequence[str] | None = None,
    bounds=(-np.inf, np.inf),
    weighted: bool = True,
    strict: bool = False,
) -> FitResult:
    """Minimize :math:`\\sum_i ((y_i - f(x_i; p)) / \\sigma_i)^2`.

    Parameters
    ----------
    model : Callable
        ``model(x, *params)`` returning an array like ``x``.
    data : CurveData
        The curve to fit.
    init : Sequence[float]
        Starting parameters.
    names : Sequence[str], optional
        Parameter names, ``p0, p1, ...`` by default.
    bounds : tuple
        Lower and upper bounds as accepted by
        :py:func:`scipy.optimize.least_squares`.
    weighted : bool
        Divide residuals by ``sigma``. Unweighted fits scale the covariance
        by the residual variance.
    strict : bool
        Raise instead of warning when the fit does not converge.

    Raises
    ------
    FitError
        If ``init`` is not finite, or if ``strict`` and the fit did not
        converge.
    """
    init = np.asarray(init, dtype=float)
    if not np.all(np.isfinite(init)):
        raise FitError(f"Initial parameters must be finite, got {init}")
    names = tuple(names) if names is not None else tuple(f'p{i}' for i in range(len(init)))
    scale = data.sigma if weighted else np.ones_like(data.y)

    def residuals(p):
        return (data.y - model(data.x, *p)) / scale

    res = optimize.least_squares(
        residuals,
        init,
        jac='2-point',
        bounds=bounds,
        method='trf',
        xtol=TOLERANCE,
        ftol=TOLERANCE,
        gtol=TOLERANCE,
        max_nfev=2000 * (len(init) + 1),
    )
    rss = float(res.fun @ res.fun)
    converged = bool(res.success and res.optimality <= OPTIMALITY_LIMIT * max(1.0, rss))
    result = FitResult(
        names=names,
        values=res.x,
        stderr=_standard_errors(res.jac, res.fun, weighted),
        rss=rss,
        converged=converged,
        optimality=float(res.optimality),
        message=res.message,
    )
    if not converged:
        if strict:
            raise FitError(f"Fit of {', '.join(names)} did not converge: {res.message}")
        logger.warning("Fit of %s did not converge: %s", ', '.join(names), res.message)
    return result


def wrap_angle(delta: float) -> float:
    """Map an angle to (-pi, pi]."""
    return math.pi - (math.pi - delta) % (2 * math.pi)


def _cosine(x, a, b, delta):
    return a + b * np.cos(x + delta)


def _rational(x, c, d, k, delta):
    phase = np.cos(x + delta)
    return (c + d * phase) / (1 + k * phase)


def _curvature(curve):
    order = np.argsort(curve.x)
    return float(np.sum(np.abs(np.diff(curve.y[order], n=2))))


def _fit_delta(curve, rational, weighted):
    spread = (np.max(curve.y) - np.min(curve.y)) / 2
    best = None
    for delta0 in np.linspace(-math.pi, math.pi, DELTA_STARTS, endpoint=False):
        if rational:
            res = least_squares(
                _rational,
                curve,
                [np.mean(curve.y), -spread, 0.0, delta0],
                names=('c', 'd', 'k', 'delta'),
                bounds=([-np.inf, -np.inf, -0.999, -np.inf], [np.inf, np.inf, 0.999, np.inf]),
                weighted=weighted,
            )
        else:
            res = least_squares(
                _cosine,
                curve,
                [np.mean(curve.y), spread, delta0],
                names=('a', 'b', 'delta'),
                weighted=weighted,
            )
        if best is None or res.rss < best.rss:
            best = res
    values = best.values.copy()
    delta = values[-1]
    if rational:
        _, d, k, _ = values
        flip = k < 0 if abs(k) > 1e-9 else d > 0
    else:
        flip = values[1] < 0
    if flip:
        delta += math.pi
    return wrap_angle(delta), best


@dataclasses.dataclass(frozen=True, eq=False)
class InsertionCurves:
    """Measured acceptance and marginal error curves of one site, over
    the inserted phase."""

    acceptance: CurveData
    protected: CurveData
    gauge: CurveData


@dataclasses.dataclass(frozen=True, eq=False)
class InsertionFit:
    location: Location
    delta: float
    a: float
    b: float
    c_protected: float
    d_protected: float
    c_gauge: float
    d_gauge: float
    delta_source: str
    results: dict[str, FitResult]

    @property
    def coefficients(self) -> np.ndarray:
        """``(a, b, c1, d1, c2, d2)`` as compared by
        :py:func:`match_model_params`."""
        return np.array(
            [self.a, self.b, self.c_protected, self.d_protected, self.c_gauge, self.d_gauge]
        )

    @property
    def converged(self) -> bool:
        return all(r.converged for r in self.results.values())


_DELTA_CURVES = ('acceptance', 'protected', 'gauge')


def _fit_site(loc, curves, delta_source, weighted):
    if delta_source is None:
        curvatures = {name: _curvature(getattr(curves, name)) for name in _DELTA_CURVES}
        delta_source = max(curvatures, key=curvatures.get)
        if curvatures[delta_source] < FLAT_CURVATURE:
            raise FitError(f"No curve of site {loc.value} has enough curvature to fix the offset")
    elif delta_source not in _DELTA_CURVES:
        raise UnknownNameError(delta_source, 'offset source curve', _DELTA_CURVES)
    delta, first = _fit_delta(
        getattr(curves, delta_source), delta_source != 'acceptance', weighted
    )
    logger.debug("Site %s: offset %.4f from the %s curve", loc.value, delta, delta_source)

    acc = least_squares(
        lambda x, a, b: _cosine(x, a, b, delta),
        curves.acceptance,
        [np.mean(curves.acceptance.y), 0.0],
        names=('a', 'b'),
        weighted=weighted,
    )
    a, b = acc.values

    def error_model(x, c, d):
        phase = np.cos(x + delta)
        return (c + d * phase) / (a + b * phase)

    errors = {}
    for name in ('protected', 'gauge'):
        curve = getattr(curves, name)
        errors[name] = least_squares(
            error_model, curve, [np.mean(curve.y) * a, 0.0], names=('c', 'd'), weighted=weighted
        )
    return InsertionFit(
        location=loc,
        delta=delta,
        a=float(a),
        b=float(b),
        c_protected=errors['protected']['c'],
        d_protected=errors['protected']['d'],
        c_gauge=errors['gauge']['c'],
        d_gauge=errors['gauge']['d'],
        delta_source=delta_source,
        results={'delta': first, 'acceptance': acc, **errors},
    )


def _location(key):
    if isinstance(key, Location):
        return key
    try:
        return Location(key)
    except ValueError as e:
        raise UnknownNameError(key, 'insertion site', [m.value for m in Location]) from e


def fit_insertion(
    curves: Mapping,
    delta_source: Mapping | None = None,
    weighted: bool = True,
    lanes: int = 1,
) -> dict[Location, InsertionFit]:
    """Fit the insertion curves of each site.

    The offset :math:`\\delta` comes first, from the curve with the largest
    summed second difference unless ``delta_source`` names one per site.
    An acceptance curve is fitted with :math:`a + b\\cos(\\theta+\\delta)`,
    an error curve with the equivalent ratio form. With :math:`\\delta`
    frozen, :math:`(\\tilde{a}, \\tilde{b})` are fitted to the acceptance
    and then :math:`(\\tilde{c}, \\tilde{d})` to each error curve through
    :math:`(\\tilde{c} + \\tilde{d}\\cos\\phi) / (\\tilde{a} + \\tilde{b}\\cos\\phi)`.

    Parameters
    ----------
    curves : Mapping
        :py:class:`InsertionCurves` keyed by site (``Location`` or ``'A'``...).
    delta_source : Mapping, optional
        Site to ``'acceptance'``, ``'protected'`` or ``'gauge'``.
    weighted : bool
        Weight residuals by the standard errors of the points.
    lanes : int
        Sites fitted in parallel.

    Raises
    ------
    FitError
        If no curve of a site has any curvature.
    """
    delta_source = {_location(k): v for k, v in (delta_source or {}).items()}
    jobs = [(_location(k), v) for k, v in curves.items()]

    def run(job):
        loc, site_curves = job
        return _fit_site(loc, site_curves, delta_source.get(loc), weighted)

    if lanes > 1:
        with concurrent.futures.ThreadPoolExecutor(lanes) as pool:
            fits = list(pool.map(run, jobs))
    else:
        fits = [run(job) for job in jobs]
    return {fit.location: fit for fit in fits}


DECAY_NAMES = ('T1_1', 'T1_2', 'T1_3', 'T1_4', 'p0', 'p1')
# Data-qubit permutations that keep both c1 ^ c2 and c1 ^ c3 on accepted
# outcomes. Each is its own inverse.
PARITY_PRESERVING = ((0, 1, 2, 3), (1, 0, 3, 2), (2, 3, 0, 1), (3, 2, 1, 0))
# One T1 ordering per coset of PARITY_PRESERVING in the permutations of four.
_SPREAD = (40.0, 60.0, 80.0, 100.0)
_SPREAD_ORDERS = ((0, 1, 2, 3), (0, 1, 3, 2), (0, 2, 1, 3), (0, 2, 3, 1), (0, 3, 1, 2), (0, 3, 2, 1))


def decay_symmetries(init_mixture) -> tuple[tuple[int, ...], ...]:
    """Permutations of the data-qubit T1 values that leave every decay curve
    of ``init_mixture`` unchanged.

    These are the elements of :py:data:`PARITY_PRESERVING` under which the
    computational populations of the mixture are invariant. Any mixture of
    the four codewords admits all of them.
    """
    tensor = bit_populations(init_mixture).reshape((2,) * 4)
    return tuple(
        perm
        for perm in PARITY_PRESERVING
        if np.allclose(tensor, tensor.transpose(perm), rtol=0, atol=1e-12)
    )


def _canonical_decay(res, symmetries):
    t1 = res.values[:4]
    best = max(symmetries, key=lambda perm: tuple(t1[list(perm)]))
    order = list(best) + [4, 5]
    return dataclasses.replace(res, values=res.values[order], stderr=res.stderr[order])


def fit_decay(
    protected: CurveData,
    gauge: CurveData,
    init_mixture: np.ndarray,
    init: Sequence[float] = (50.0, 50.0, 50.0, 50.0, 0.05, 0.02),
    acceptance: CurveData | None = None,
    weighted: bool = True,
) -> FitResult:
    """Fit the four data-qubit T1 values and the readout crossovers to the
    logical decay curves through :py:func:`ftprep.analytic.decay_model`.

    The curves share the mixture ``init_mixture`` of the 16 logical basis
    states at ``t = 0``. ``acceptance`` is included in the fit when given.

    The fit starts from ``init`` and from spread T1 guesses in every
    ordering that the data can tell apart, and keeps the smallest residual.
    T1 values related by :py:func:`decay_symmetries` give identical curves,
    so the reported ordering is the one that puts the largest of them
    first. Non-identifiable combinations are reported through
    :py:attr:`FitResult.identifiable`.
    """
    series = [('protected', protected), ('gauge', gauge)]
    if acceptance is not None:
        series.append(('acceptance', acceptance))
    x = np.concatenate([c.x for _, c in series])
    y = np.concatenate([c.y for _, c in series])
    sigma = np.concatenate([c.sigma for _, c in series])
    bounds_idx = np.cumsum([0] + [len(c) for _, c in series])
    mixture = np.asarray(init_mixture, dtype=float)
    init = np.asarray(init, dtype=float)

    def model(_, *params):
        prediction = decay_model(
            x, DecayModelParams(mixture, params[:4], params[4], params[5])
        )
        parts = {
            'protected': prediction.p_protected,
            'gauge': prediction.p_gauge,
            'acceptance': prediction.acceptance,
        }
        return np.concatenate(
            [
                parts[name][bounds_idx[i] : bounds_idx[i + 1]]
                for i, (name, _) in enumerate(series)
            ]
        )

    starts = [init]
    for order in _SPREAD_ORDERS:
        start = init.copy()
        start[:4] = np.asarray(_SPREAD)[list(order)]
        starts.append(start)
    best = None
    for start in starts:
        res = least_squares(
            model,
            CurveData(x, y, sigma),
            start,
            names=DECAY_NAMES,
            bounds=([1e-3] * 4 + [0.0, 0.0], [np.inf] * 4 + [0.5, 0.5]),
            weighted=weighted,
        )
        logger.debug("Decay fit from %s: rss %.3g", start, res.rss)
        if best is None or res.rss < best.rss:
            best = res
    best = _canonical_decay(best, decay_symmetries(mixture))
    if not best.identifiable:
        logger.warning("Decay fit parameters are not all identifiable from the data")
    return best


def fit_ideal_decay(curve: CurveData, init_t1: float = 50.0, weighted: bool = True) -> FitResult:
    """Fit a single T1 to a logical decay curve with
    :py:func:`ftprep.analytic.ideal_decay`."""
    return least_squares(
        lambda t, t1: ideal_decay(t, t1),
        curve,
        [init_t1],
        names=('T1',),
        bounds=([1e-3], [np.inf]),
        weighted=weighted,
    )


@dataclasses.dataclass(frozen=True)
class MatchResult:
    p0: float
    p1: float
    objective: float
    at_boundary: bool


MATCH_BOUNDS = (0.0, 0.5)


def _model_coefficients(p0, p1):
    return np.stack(
        [
            np.broadcast_to(getattr(insertion_coefficients(loc, p0, p1), field), np.shape(p0))
            for loc in Location
            for field in ('a', 'b', 'c_protected', 'd_protected', 'c_gauge', 'd_gauge')
        ],
        axis=-1,
    )


def match_model_params(fitted: Mapping, step: float = 0.005) -> MatchResult:
    """Readout crossovers minimizing the summed absolute difference between
    the closed-form coefficients and fitted ones.

    Parameters
    ----------
    fitted : Mapping
        Site to :py:class:`InsertionFit`, or to the six numbers
        ``(a, b, c1, d1, c2, d2)``. All three sites are needed.
    step : float
        Spacing of the initial grid over :math:`[0, 0.5]^2`.

    Notes
    -----
    The coefficients are symmetric under exchanging ``p0`` and ``p1``, so
    the pair is reported with ``p0 >= p1``.
    """
    target = []
    for loc in Location:
        entry = fitted.get(loc, fitted.get(loc.value))
        if entry is None:
            raise FitError(f"Fitted coefficients for site {loc.value} are missing")
        coefficients = entry.coefficients if isinstance(entry, InsertionFit) else entry
        target.extend(np.asarray(coefficients, dtype=float))
    target = np.array(target)
    if target.shape != (18,):
        raise FitError(f"Expected 6 coefficients per site, got {target.size} in total")

    lo, hi = MATCH_BOUNDS
    grid = np.linspace(lo, hi, int(round((hi - lo) / step)) + 1)
    g0, g1 = np.meshgrid(grid, grid, indexing='ij')
    costs = np.abs(_model_coefficients(g0, g1) - target).sum(axis=-1)
    i, j = np.unravel_index(np.argmin(costs), costs.shape)

    def objective(p):
        return float(np.abs(_model_coefficients(p[0], p[1]) - target).sum())

    res = optimize.minimize(
        objective,
        [grid[i], grid[j]],
        method='Nelder-Mead',
        bounds=[MATCH_BOUNDS, MATCH_BOUNDS],
        options={'xatol': 1e-10, 'fatol': 1e-14, 'maxiter': 4000},
    )
    p0, p1 = (float(v) for v in res.x)
    if res.fun > costs[i, j]:
        p0, p1 = float(grid[i]), float(grid[j])
    best = min(float(res.fun), float(costs[i, j]))
    p0, p1 = max(p0, p1), min(p0, p1)
    edge = min(p0 - lo, hi - p0, p1 - lo, hi - p1) < 1e-4
    if edge:
        logger.warning("Best readout crossovers (%.4f, %.4f) lie on the search boundary", p0, p1)
    return MatchResult(p0=p0, p1=p1, objective=best, at_boundary=edge)


CURVE_COLUMNS = ('x', 'y', 'sigma')


def write_curve_csv(path, curve: CurveData) -> None:
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f)
        writer.writerow(CURVE_COLUMNS)
        writer.writerows(zip(curve.x.tolist(), curve.y.tolist(), curve.sigma.tolist()))


def read_curve_csv(path) -> CurveData:
    """Read ``x,y,sigma`` rows.

    Raises
    ------
    SchemaError
        On a wrong header, a non-numeric value or a nonpositive sigma.
    """
    xs, ys, sigmas = [], [], []
    with open(path, newline='') as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != CURVE_COLUMNS:
            raise SchemaError(f"Expected columns x,y,sigma, got {header}", wrong_line=1)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                x, y, sigma = (float(v) for v in row)
            except ValueError as e:
                raise SchemaError(f"Expected three numbers, got {row}", wrong_line=lineno) from e
            if not sigma > 0:
                raise SchemaError(f"sigma must be positive, got {sigma}", wrong_line=lineno)
            xs.append(x)
            ys.append(y)
            sigmas.append(sigma)
    return CurveData(np.array(xs), np.array(ys), np.array(sigmas))


def write_fit_json(path, results: Mapping[str, FitResult]) -> None:
    with open(path, 'w') as f:
        json.dump({k: r.as_dict() for k, r in results.items()}, f, indent=2)
