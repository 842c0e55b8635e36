"""Derivative-free scalar optimization on open domains.

The Legendre-transform and variational computations in this package all reduce
to maximizing a unimodal (typically concave) scalar function over an open
interval whose endpoints may be finite (moment-generating-function domain
boundaries) or infinite. This module provides that primitive: the open domain
is mapped onto the whole real line by a monotone transform (exponential for
one-sided domains, logistic for bounded ones), a bracket is grown
geometrically, and golden-section search finishes the job. Unimodality is
preserved by the monotone reparameterization, so golden-section remains valid
arbitrarily close to the domain edges.

A failure to bracket an interior maximum (the objective keeps increasing
toward a domain edge) raises :class:`~manysources.errors.NumericInstabilityError`
rather than silently returning an edge value: for the callers in this package
that situation means the underlying transform is degenerate or the requested
point is outside the achievable range, and it must surface as a diagnostic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

from .errors import NumericInstabilityError

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0  # inverse golden ratio, ~0.618


def _make_transform(lower: float, upper: float) -> tuple[Callable[[float], float], Callable[[float], float]]:
    """Build (map, inverse_map) from the real line onto the open (lower, upper)."""
    lo_finite = math.isfinite(lower)
    hi_finite = math.isfinite(upper)
    if not lo_finite and not hi_finite:
        return (lambda u: u), (lambda x: x)
    if lo_finite and not hi_finite:
        return (lambda u: lower + math.exp(u)), (lambda x: math.log(x - lower))
    if hi_finite and not lo_finite:
        return (lambda u: upper - math.exp(-u)), (lambda x: -math.log(upper - x))
    width = upper - lower

    def fwd(u: float) -> float:
        return lower + width / (1.0 + math.exp(-u))

    def inv(x: float) -> float:
        frac = (x - lower) / width
        return math.log(frac / (1.0 - frac))

    return fwd, inv


@dataclass(frozen=True)
class ScalarMax:
    """Result of a scalar maximization: argmax, value, and effort spent."""

    x: float
    value: float
    evaluations: int


def maximize_unimodal(
    func: Callable[[float], float],
    *,
    lower: float = -math.inf,
    upper: float = math.inf,
    x0: float | None = None,
    xtol: float = 1e-10,
    max_expand: int = 200,
    max_iter: int = 500,
) -> ScalarMax:
    """Maximize a unimodal function over the open interval (lower, upper).

    Parameters
    ----------
    func:
        Objective; may return ``-inf`` for effectively infeasible points.
    lower, upper:
        Open domain endpoints; either may be infinite. ``lower < upper``.
    x0:
        Starting point strictly inside the domain; a domain-appropriate
        default is chosen when omitted.
    xtol:
        Termination width measured in the original coordinate.
    max_expand:
        Bracket-expansion step budget; exhausting it without enclosing a
        maximum raises :class:`NumericInstabilityError`.

    Returns
    -------
    ScalarMax
        Argmax and value; the argmax lies strictly inside the domain.
    """
    if not lower < upper:
        raise ValueError(f"empty domain ({lower}, {upper})")
    fwd, inv = _make_transform(lower, upper)

    if x0 is None:
        if math.isfinite(lower) and math.isfinite(upper):
            x0 = 0.5 * (lower + upper)
        elif math.isfinite(lower):
            x0 = lower + 1.0
        elif math.isfinite(upper):
            x0 = upper - 1.0
        else:
            x0 = 0.0
    if not (lower < x0 < upper):
        raise ValueError(f"x0={x0} outside the open domain ({lower}, {upper})")

    evals = 0

    def g(u: float) -> float:
        nonlocal evals
        evals += 1
        val = func(fwd(u))
        return val if val == val else -math.inf  # NaN -> -inf

    # --- bracket expansion in the transformed coordinate -------------------
    u_mid = inv(x0)
    step = 1.0
    u_lo, u_hi = u_mid - step, u_mid + step
    g_lo, g_mid, g_hi = g(u_lo), g(u_mid), g(u_hi)

    expansions = 0
    while not (g_mid >= g_lo and g_mid >= g_hi):
        if expansions >= max_expand:
            raise NumericInstabilityError(
                "could not bracket an interior maximum: the objective keeps "
                "increasing toward a domain edge (degenerate or unbounded "
                "transform, or target outside the achievable range)"
            )
        expansions += 1
        step *= 2.0
        if g_hi > g_mid:
            u_lo, g_lo = u_mid, g_mid
            u_mid, g_mid = u_hi, g_hi
            u_hi = u_mid + step
            g_hi = g(u_hi)
        else:
            u_hi, g_hi = u_mid, g_mid
            u_mid, g_mid = u_lo, g_lo
            u_lo = u_mid - step
            g_lo = g(u_lo)

    # --- golden-section on [u_lo, u_hi] -------------------------------------
    a, b = u_lo, u_hi
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = g(c), g(d)
    for _ in range(max_iter):
        if abs(fwd(b) - fwd(a)) < xtol or (b - a) < 1e-13:
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = g(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = g(d)

    u_best, f_best = (c, fc) if fc >= fd else (d, fd)
    if g_mid > f_best:  # keep the pre-refinement point if it was better
        u_best, f_best = u_mid, g_mid
    return ScalarMax(x=fwd(u_best), value=f_best, evaluations=evals)


def minimize_unimodal(
    func: Callable[[float], float],
    *,
    lower: float = -math.inf,
    upper: float = math.inf,
    x0: float | None = None,
    xtol: float = 1e-10,
    max_expand: int = 200,
) -> ScalarMax:
    """Minimize a unimodal function; thin wrapper over :func:`maximize_unimodal`."""
    res = maximize_unimodal(
        lambda x: -func(x), lower=lower, upper=upper, x0=x0, xtol=xtol, max_expand=max_expand
    )
    return ScalarMax(x=res.x, value=-res.value, evaluations=res.evaluations)


def solve_increasing(
    func: Callable[[float], float],
    target: float,
    *,
    lower: float = -math.inf,
    upper: float = math.inf,
    x0: float | None = None,
    rtol: float = 1e-13,
    max_expand: int = 200,
) -> float:
    """Solve ``func(x) = target`` for a strictly increasing func on (lower, upper).

    Expands a sign-change bracket geometrically in the transformed coordinate,
    then bisects. Raises :class:`NumericInstabilityError` when the target is
    outside the achievable range of ``func`` over the domain.
    """
    fwd, inv = _make_transform(lower, upper)
    if x0 is None:
        x0 = fwd(0.0)
    u_lo = u_hi = inv(x0)

    def h(u: float) -> float:
        return func(fwd(u)) - target

    step = 1.0
    lo_val = hi_val = h(u_lo)
    expansions = 0
    while lo_val > 0.0:
        if expansions >= max_expand:
            raise NumericInstabilityError("target below the achievable range of the transform derivative")
        expansions += 1
        u_lo -= step
        step *= 2.0
        lo_val = h(u_lo)
    step = 1.0
    while hi_val < 0.0:
        if expansions >= max_expand:
            raise NumericInstabilityError("target above the achievable range of the transform derivative")
        expansions += 1
        u_hi += step
        step *= 2.0
        hi_val = h(u_hi)

    for _ in range(400):
        u_mid = 0.5 * (u_lo + u_hi)
        if (u_hi - u_lo) < rtol * max(1.0, abs(u_lo), abs(u_hi)) or (u_hi - u_lo) < 1e-15:
            break
        if h(u_mid) < 0.0:
            u_lo = u_mid
        else:
            u_hi = u_mid
    return fwd(0.5 * (u_lo + u_hi))
