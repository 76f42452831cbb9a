"""Scalar special functions for the probabilistic machinery.

Everything here is a pure function of its arguments: the Gaussian tail
Q(x) and its inverse, the scheduler covariance factor kappa(beta), central
and noncentral chi-square survival functions, and the Marcum Q-function
Q_nu(a, b) = Pr(V >= b^2) for V noncentral chi-square with 2*nu degrees of
freedom and noncentrality a^2.

Half-integer orders use the closed form built from erfc and exponentials;
integer orders default to the exact Poisson mixture of central chi-square
survivals, with the half-order averaging heuristic available as an
alternative mode.
"""

import math

from scipy import optimize, special as sp

from .errors import DomainError, NumericError

_SQRT2 = math.sqrt(2.0)
_SQRT_2PI = math.sqrt(2.0 * math.pi)

# Below this the closed-form Marcum expression loses ~eps/a to cancellation
# while the central branch is within a^2/2 <= 5e-13 of the true value.
_MARCUM_CENTRAL_CUTOFF = 1e-6

_SERIES_TAIL = 1e-14
_SERIES_MAX_TERMS = 100_000


def gaussian_q(x: float) -> float:
    """Upper tail of the standard Gaussian, Q(x) = Pr(N(0,1) >= x)."""
    x = float(x)
    if not math.isfinite(x):
        raise DomainError(f"gaussian_q requires finite x, got {x!r}")
    return 0.5 * math.erfc(x / _SQRT2)


def gaussian_q_inv(p: float) -> float:
    """Inverse of gaussian_q: the x with Q(x) = p, for p in (0, 1).

    Seeded by the erfc inverse and polished with one Newton step against
    gaussian_q itself, so the round trip is exact at working precision.
    Note the binary64 limit on the left tail: p near 1 carries an absolute
    resolution of ~1.1e-16, so x = gaussian_q_inv(gaussian_q(x)) can be off
    by ~eps/(2 pdf(x)) for x below about -5.5 no matter the algorithm.
    """
    p = float(p)
    if not (0.0 < p < 1.0):
        raise DomainError(f"gaussian_q_inv requires p in (0, 1), got {p!r}")
    x = _SQRT2 * float(sp.erfcinv(2.0 * p))
    # Newton polish: d/dx Q(x) = -pdf(x)
    pdf = math.exp(-0.5 * x * x) / _SQRT_2PI
    if pdf > 0.0:
        x += (gaussian_q(x) - p) / pdf
    return x


def kappa(beta: float) -> float:
    """Covariance shrink factor of the open (non-triggered) update.

    kappa(beta) = (2/sqrt(2*pi)) * beta * exp(-beta^2/2) / (1 - 2*Q(beta)),
    with the analytic limit kappa(0) = 1 (both numerator and denominator
    vanish linearly at beta = 0).
    """
    beta = float(beta)
    if not math.isfinite(beta) or beta < 0.0:
        raise DomainError(f"kappa requires beta >= 0, got {beta!r}")
    if beta == 0.0:
        return 1.0
    num = (2.0 / _SQRT_2PI) * beta * math.exp(-0.5 * beta * beta)
    den = math.erf(beta / _SQRT2)  # equals 1 - 2*Q(beta)
    return num / den


def _check_dof(dof: int) -> int:
    if not isinstance(dof, (int,)) or isinstance(dof, bool) or dof < 1:
        raise DomainError(f"degrees of freedom must be a positive integer, got {dof!r}")
    return dof


def chi2_survival(x: float, dof: int) -> float:
    """Pr(X >= x) for a central chi-square variable with `dof` degrees of freedom."""
    _check_dof(dof)
    x = float(x)
    if not math.isfinite(x) or x < 0.0:
        raise DomainError(f"chi2_survival requires x >= 0, got {x!r}")
    return float(sp.gammaincc(0.5 * dof, 0.5 * x))


def chi2_quantile(upper_tail: float, dof: int) -> float:
    """The threshold s with chi2_survival(s, dof) = upper_tail."""
    _check_dof(dof)
    upper_tail = float(upper_tail)
    if not (0.0 < upper_tail < 1.0):
        raise DomainError(
            f"chi2_quantile requires upper_tail in (0, 1), got {upper_tail!r}"
        )
    hi = float(dof) + 10.0
    while chi2_survival(hi, dof) > upper_tail:
        hi *= 2.0
        if hi > 1e12:
            raise NumericError("chi2_quantile failed to bracket the root")
    root = optimize.brentq(
        lambda s: chi2_survival(s, dof) - upper_tail, 0.0, hi, xtol=1e-13, rtol=1e-15
    )
    return float(root)


def _check_order(nu: float) -> float:
    nu = float(nu)
    two_nu = 2.0 * nu
    if not math.isfinite(nu) or nu <= 0.0 or abs(two_nu - round(two_nu)) > 1e-9:
        raise DomainError(
            f"Marcum order must be a positive multiple of 0.5, got {nu!r}"
        )
    return nu


def _marcum_half_order(nu: float, a: float, b: float) -> float:
    """Closed form for odd multiples of 0.5 (erfc plus a finite exponential sum).

    Valid for a > 0; the k-sum is empty at nu = 0.5.
    """
    total = 0.5 * math.erfc((b + a) / _SQRT2) + 0.5 * math.erfc((b - a) / _SQRT2)
    kmax = int(round(nu - 1.5))
    if kmax < 0:
        return total
    e_minus = math.exp(-0.5 * (b - a) ** 2)
    e_plus = math.exp(-0.5 * (b + a) ** 2)
    ab = a * b
    outer = 0.0
    for k in range(kmax + 1):
        inner_q = 0.0
        for q in range(k + 1):
            inner_i = 0.0
            for i in range(2 * q + 1):
                bracket = ((-1.0) ** i) * e_minus - e_plus
                inner_i += bracket / (ab ** (2 * q - i) * math.factorial(i))
            coeff = ((-1.0) ** q) * math.factorial(2 * q) / (
                math.factorial(k - q) * math.factorial(q)
            )
            inner_q += coeff * inner_i
        outer += (b ** (2 * k) / 2.0**k) * inner_q
    return total + outer / (a * _SQRT_2PI)


def _marcum_integer_series(nu: int, a: float, b: float) -> float:
    """Poisson mixture of central chi-square survivals, summed from the mode.

    Q_nu(a,b) = sum_j pois(j; a^2/2) * Pr(chi^2_{2(nu+j)} >= b^2). The sweep
    starts at the Poisson mode and expands both ways; the neglected mass of
    the weights bounds the truncation error because every survival is <= 1.
    """
    lam = 0.5 * a * a
    y = 0.5 * b * b
    if y == 0.0:  # b underflowed; survival at zero
        return 1.0
    j0 = int(lam)
    log_lam = math.log(lam)
    log_y = math.log(y)

    def erlang_term(t: int) -> float:
        # e^{-y} y^t / t!, the survival increment between orders t and t+1
        return math.exp(t * log_y - y - math.lgamma(t + 1))

    p0 = math.exp(j0 * log_lam - lam - math.lgamma(j0 + 1))
    s0 = float(sp.gammaincc(nu + j0, y))
    total = p0 * s0
    mass = p0

    # downward sweep first (finite): its mass feeds the tail criterion.
    # Weights decrease away from the mode, so the mass still below index j
    # is at most p * j; stop once that is negligible.
    p, s = p0, s0
    for j in range(j0, 0, -1):
        s -= erlang_term(nu + j - 1)
        p *= j / lam
        total += p * s
        mass += p
        if p * j < 2.0 * _SERIES_TAIL:
            break

    # upward sweep until the neglected Poisson mass is below the tail bound;
    # past the mode the weights decay with ratio r = lam/(j+2) <= lam/(lam+2),
    # so the remaining tail is at most p/(1-r) <= p*(lam+2)/2
    p, s = p0, s0
    j = j0
    while mass < 1.0 - _SERIES_TAIL:
        s += erlang_term(nu + j)
        p *= lam / (j + 1)
        j += 1
        total += p * s
        mass += p
        if j + 1 >= lam and p * (lam + 2.0) < 2.0 * _SERIES_TAIL:
            break
        if j - j0 > _SERIES_MAX_TERMS:
            raise NumericError(
                f"Marcum series did not converge within {_SERIES_MAX_TERMS} terms"
            )

    return total


def marcum_q(nu: float, a: float, b: float, method: str = "series") -> float:
    """Marcum Q-function Q_nu(a, b) for nu a positive multiple of 0.5.

    `method` selects the integer-order evaluation: "series" (default, exact
    Poisson mixture) or "average" (mean of the two adjacent half-order
    closed forms, a common approximation for even multiples of 0.5).
    Half-integer orders always use the closed form.
    """
    nu = _check_order(nu)
    a = float(a)
    b = float(b)
    if not math.isfinite(a) or a < 0.0:
        raise DomainError(f"marcum_q requires a >= 0, got {a!r}")
    if not math.isfinite(b) or b < 0.0:
        raise DomainError(f"marcum_q requires b >= 0, got {b!r}")
    if method not in ("series", "average"):
        raise DomainError(f"marcum_q method must be 'series' or 'average', got {method!r}")

    if b <= _MARCUM_CENTRAL_CUTOFF:
        # Pr(V >= b^2) differs from 1 by O(b^(2 nu)), below 1e-12 here
        return 1.0
    if a <= _MARCUM_CENTRAL_CUTOFF:
        return chi2_survival(b * b, int(round(2 * nu)))

    if int(round(2 * nu)) % 2 == 1:  # odd multiple of 0.5
        value = _marcum_half_order(nu, a, b)
    elif method == "average":
        value = 0.5 * (
            _marcum_half_order(nu - 0.5, a, b) + _marcum_half_order(nu + 0.5, a, b)
        )
    else:
        value = _marcum_integer_series(int(round(nu)), a, b)

    return min(1.0, max(0.0, value))


def noncentral_chi2_survival(x: float, dof: int, noncentrality: float) -> float:
    """Pr(V >= x) for V noncentral chi-square with `dof` dof and the given noncentrality."""
    _check_dof(dof)
    x = float(x)
    noncentrality = float(noncentrality)
    if not math.isfinite(x) or x < 0.0:
        raise DomainError(f"noncentral_chi2_survival requires x >= 0, got {x!r}")
    if not math.isfinite(noncentrality) or noncentrality < 0.0:
        raise DomainError(
            f"noncentral_chi2_survival requires noncentrality >= 0, got {noncentrality!r}"
        )
    return marcum_q(0.5 * dof, math.sqrt(noncentrality), math.sqrt(x))
