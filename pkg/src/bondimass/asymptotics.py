"""Least-squares extraction of large-r expansion coefficients.

A sampled function of r is fitted by a finite sum of terms ``ln(r)^k / r^n``.
Terms are keyed by ``(n, k)``.  Columns are scaled to unit max-norm before
solving, and the fit reports the condition number of the scaled design
matrix and the relative residual so that callers can reject fits that cannot
resolve the requested orders.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, Optional, Sequence, Tuple

import numpy as np

Term = Tuple[int, int]

# orders 0..3 are resolved; 4..9 absorb the truncated remainder
POWER_BASIS: Tuple[Term, ...] = tuple((n, 0) for n in range(10))
LOG_TERM: Term = (3, 1)
# levels at which ln r is frozen when separating logarithmic modes
LOG_LEVELS: Tuple[float, ...] = (0.0, 1.5, 3.0, 4.5, 6.0, 7.5)

COND_LIMIT = 1e12
RESIDUAL_LIMIT = 1e-9
# absolute misfits below this are roundoff, whatever the relative size
ABS_RESIDUAL_FLOOR = 1e-13

DEFAULT_RADII = (20.0, 2000.0, 24)


class IllConditionedFit(ArithmeticError):
    pass


def radii(r_min: float = DEFAULT_RADII[0], r_max: float = DEFAULT_RADII[1],
          n: int = DEFAULT_RADII[2]) -> np.ndarray:
    """Geometrically spaced sample radii."""
    if not (0 < r_min < r_max) or n < 2:
        raise ValueError("need 0 < r_min < r_max and at least two radii")
    return np.geomspace(r_min, r_max, int(n))


@dataclass
class CoefficientFit:
    coefficients: Dict[Term, np.ndarray]
    residual: np.ndarray
    condition: float
    threshold: float = RESIDUAL_LIMIT
    basis: Tuple[Term, ...] = field(default=POWER_BASIS)
    abs_residual: Optional[np.ndarray] = None

    @property
    def reliable(self) -> bool:
        ok = self.residual <= self.threshold
        if self.abs_residual is not None:
            ok = ok | (self.abs_residual <= ABS_RESIDUAL_FLOOR)
        return bool(self.condition <= COND_LIMIT and np.all(ok))

    def __getitem__(self, term: Term) -> np.ndarray:
        return self.coefficients.get(term, np.zeros_like(self.residual))

    def order(self, n: int, k: int = 0) -> np.ndarray:
        return self[(n, k)]


def design_matrix(r: np.ndarray, basis: Sequence[Term]) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    lr = np.log(r)
    return np.stack([lr**k / r**n for n, k in basis], axis=1)


def extract_coefficients(r, values, include_log: bool = False,
                         basis: Optional[Iterable[Term]] = None,
                         weight_power: float = 0.0,
                         threshold: float = RESIDUAL_LIMIT,
                         strict: bool = False) -> CoefficientFit:
    """Fit ``values`` (radius along axis 0; extra axes are fitted independently).

    ``weight_power`` multiplies every row by ``r**weight_power``; with 3 the
    fit balances errors on the 1/r^3 scale.  The residual is the max
    weighted misfit divided by the max weighted sample (absolute when the
    samples vanish).  ``strict`` raises on an ill-conditioned design instead
    of flagging it.
    """
    r = np.asarray(r, dtype=float)
    y = np.asarray(values, dtype=float)
    if r.ndim != 1 or y.shape[0] != r.size:
        raise ValueError("values must have the radius axis first, matching r")
    if r.size < 10:
        raise ValueError("need at least 10 radii")
    if np.any(r <= 0):
        raise ValueError("radii must be positive")
    if basis is None:
        basis = POWER_BASIS + ((LOG_TERM,) if include_log else ())
    basis = tuple(basis)
    if len(basis) >= r.size:
        raise ValueError("more basis terms than samples")
    A = design_matrix(r, basis)
    w = r**weight_power
    A = A * w[:, None]
    ys = y.reshape(r.size, -1) * w[:, None]
    scale = np.max(np.abs(A), axis=0)
    As = A / scale
    cond = float(np.linalg.cond(As))
    if strict and cond > COND_LIMIT:
        raise IllConditionedFit(f"condition number {cond:.3g} exceeds {COND_LIMIT:g}")
    sol, *_ = np.linalg.lstsq(As, ys, rcond=None)
    res = ys - As @ sol
    ymax = np.max(np.abs(ys), axis=0)
    absres = np.max(np.abs(res), axis=0)
    rel = absres / np.where(ymax > 0, ymax, 1.0)
    sol = sol / scale[:, None]
    shape = y.shape[1:]
    coeffs = {t: sol[i].reshape(shape) for i, t in enumerate(basis)}
    return CoefficientFit(coeffs, rel.reshape(shape), cond, threshold, basis, absres.reshape(shape))


def extract_log_separated(r, evaluate: Callable[[float], np.ndarray], levels: Sequence[float] = LOG_LEVELS,
                          degree: int = 3, basis: Optional[Iterable[Term]] = None,
                          threshold: float = RESIDUAL_LIMIT) -> CoefficientFit:
    """Coefficients of ``ln(r)^k / r^n`` for a quantity whose only logs come
    from an explicit ``ln r`` that can be frozen.

    ``evaluate(lam)`` returns samples (radius axis first) with every
    occurrence of ``ln r`` replaced by the constant ``lam``.  At each level
    the samples are a pure Laurent series in 1/r, fitted on the power basis;
    each power coefficient is then a polynomial in ``lam`` of degree at most
    ``degree``, whose monomials give the log powers.  This avoids the
    near-collinear columns of a mixed log/power design.
    """
    levels = np.asarray(levels, dtype=float)
    if levels.size <= degree:
        raise ValueError("need more levels than the polynomial degree")
    fits = [extract_coefficients(r, evaluate(lam), basis=basis, threshold=threshold) for lam in levels]
    powers = fits[0].basis
    V = np.vander(levels, degree + 1, increasing=True)
    vscale = np.max(np.abs(V), axis=0)
    Vs = V / vscale
    cond = max(max(f.condition for f in fits), float(np.linalg.cond(Vs)))
    coeffs: Dict[Term, np.ndarray] = {}
    resid = np.max([f.residual for f in fits], axis=0)
    absres = np.max([f.abs_residual for f in fits], axis=0)
    for term in powers:
        n = term[0]
        y = np.stack([f[term] for f in fits])
        shape = y.shape[1:]
        sol, *_ = np.linalg.lstsq(Vs, y.reshape(levels.size, -1), rcond=None)
        sol = sol / vscale[:, None]
        for k in range(degree + 1):
            coeffs[(n, k)] = sol[k].reshape(shape)
    basis_out = tuple(sorted(coeffs))
    return CoefficientFit(coeffs, resid, cond, threshold, basis_out, absres)
