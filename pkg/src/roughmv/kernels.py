"""Volterra convolution kernels, Mittag-Leffler functions, and resolvents.

The variance process convolves its shocks against a kernel K.  Everything
downstream (hedge terms, Riccati solvers, forward variance) is driven by K,
by the resolvent of the second kind R_lam of lam*K, defined through

    lam*K * R_lam = R_lam * lam*K = lam*K - R_lam,

and by the integrated ratio  int_0^tau R_lam(s)/lam ds.  For lam = 0 the
convention is R_lam = 0 and R_lam/lam = K.

Closed forms (weight c != 0):

    constant     K(t) = c                      R(t) = c exp(-c t)
    fractional   K(t) = c t^(a-1)/Gamma(a)     R(t) = c t^(a-1) E_{a,a}(-c t^a)
    exponential  K(t) = c exp(-b t)            R(t) = c exp(-b t) exp(-c t)

where E_{a,b} is the Mittag-Leffler function and the resolvent of lam*K is
obtained by rescaling the weight c -> lam*c.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import mpmath
import numpy as np
from scipy.special import gamma as _gamma, rgamma as _rgamma


class KernelDomainError(ValueError):
    """Kernel evaluated outside its domain (e.g. t <= 0 for a singular kernel)."""


class UnsupportedVariantError(ValueError):
    """Operation has no closed form for this kernel variant."""


# ---------------------------------------------------------------------------
# Kernel variants
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConstantKernel:
    c: float

    def __post_init__(self):
        if self.c == 0:
            raise ValueError("kernel weight c must be nonzero")


@dataclass(frozen=True)
class FractionalKernel:
    """Power-law kernel c * t^(alpha-1)/Gamma(alpha), alpha in (0, 1].

    alpha = hurst + 1/2; alpha = 1 recovers the constant kernel (classic
    Heston), smaller alpha means rougher variance paths.
    """

    c: float
    alpha: float

    def __post_init__(self):
        if self.c == 0:
            raise ValueError("kernel weight c must be nonzero")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")

    @classmethod
    def from_hurst(cls, hurst: float, c: float = 1.0) -> "FractionalKernel":
        if not 0.0 < hurst <= 0.5:
            raise ValueError(f"hurst must lie in (0, 0.5], got {hurst}")
        return cls(c=c, alpha=hurst + 0.5)

    @property
    def hurst(self) -> float:
        return self.alpha - 0.5

    @property
    def singular(self) -> bool:
        return self.alpha < 1.0


@dataclass(frozen=True)
class ExponentialKernel:
    c: float
    beta: float

    def __post_init__(self):
        if self.c == 0:
            raise ValueError("kernel weight c must be nonzero")
        if self.beta < 0:
            raise ValueError(f"decay rate beta must be >= 0, got {self.beta}")


@dataclass(frozen=True)
class SumOfExponentialsKernel:
    weights: tuple
    rates: tuple

    def __post_init__(self):
        w = tuple(float(x) for x in self.weights)
        r = tuple(float(x) for x in self.rates)
        if len(w) != len(r) or len(w) < 1:
            raise ValueError("weights and rates must have equal length >= 1")
        if any(x == 0 for x in w):
            raise ValueError("all weights must be nonzero")
        if any(x < 0 for x in r):
            raise ValueError("all rates must be >= 0")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "rates", r)

    @property
    def n_factors(self) -> int:
        return len(self.weights)


Kernel = ConstantKernel | FractionalKernel | ExponentialKernel | SumOfExponentialsKernel


def is_singular(spec: Kernel) -> bool:
    return isinstance(spec, FractionalKernel) and spec.alpha < 1.0


# ---------------------------------------------------------------------------
# Time grid
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid on [t_start, t_end] with n_steps cells (n_steps+1 nodes)."""

    t_start: float
    t_end: float
    n_steps: int

    def __post_init__(self):
        if self.n_steps < 1:
            raise ValueError("n_steps must be >= 1")
        if not self.t_end > self.t_start:
            raise ValueError("grid must be strictly increasing")

    @property
    def spacing(self) -> float:
        return (self.t_end - self.t_start) / self.n_steps

    def nodes(self) -> np.ndarray:
        return np.linspace(self.t_start, self.t_end, self.n_steps + 1)

    @classmethod
    def for_horizon(cls, horizon: float, steps_per_year: int = 250) -> "TimeGrid":
        """Grid on [0, horizon] at the default resolution of 250 steps/year."""
        n = max(1, round(steps_per_year * horizon))
        return cls(0.0, float(horizon), int(n))


# ---------------------------------------------------------------------------
# Pointwise evaluation and exact integrals
# ---------------------------------------------------------------------------

def kernel_eval(spec: Kernel, t):
    """K(t) for scalar or array t > 0 (t = 0 allowed for non-singular variants)."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise KernelDomainError("kernel is defined on t >= 0 only")
    if is_singular(spec) and np.any(t_arr == 0):
        raise KernelDomainError(
            f"fractional kernel with alpha={spec.alpha} is singular at t = 0"
        )
    if isinstance(spec, ConstantKernel):
        out = np.full_like(t_arr, spec.c)
    elif isinstance(spec, FractionalKernel):
        out = spec.c * t_arr ** (spec.alpha - 1.0) / _gamma(spec.alpha)
    elif isinstance(spec, ExponentialKernel):
        out = spec.c * np.exp(-spec.beta * t_arr)
    elif isinstance(spec, SumOfExponentialsKernel):
        w = np.asarray(spec.weights)
        r = np.asarray(spec.rates)
        out = np.exp(-t_arr[..., None] * r) @ w
    else:
        raise TypeError(f"unknown kernel variant {type(spec).__name__}")
    return out if out.ndim else float(out)


def kernel_integral(spec: Kernel, t):
    """int_0^t K(s) ds, exact for every variant."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise KernelDomainError("kernel integral requires t >= 0")
    if isinstance(spec, ConstantKernel):
        out = spec.c * t_arr
    elif isinstance(spec, FractionalKernel):
        out = spec.c * t_arr ** spec.alpha / _gamma(spec.alpha + 1.0)
    elif isinstance(spec, ExponentialKernel):
        if spec.beta == 0:
            out = spec.c * t_arr
        else:
            out = spec.c * (-np.expm1(-spec.beta * t_arr)) / spec.beta
    elif isinstance(spec, SumOfExponentialsKernel):
        out = np.zeros_like(t_arr)
        for w, r in zip(spec.weights, spec.rates):
            if r == 0:
                out = out + w * t_arr
            else:
                out = out + w * (-np.expm1(-r * t_arr)) / r
    else:
        raise TypeError(f"unknown kernel variant {type(spec).__name__}")
    return out if out.ndim else float(out)


def cell_moments(spec: Kernel, h: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Exact first two kernel moments over the lag cells [(m-1)h, mh], m = 1..n.

    Returns (I0, I1) with I0[m-1] = int K(u) du and I1[m-1] = int u K(u) du over
    the m-th cell.  These are the building blocks of product-integration rules:
    integrating t^(alpha-1) exactly is what keeps quadrature stable at the
    origin where the fractional kernel blows up.
    """
    if h <= 0 or n < 1:
        raise ValueError("need h > 0 and n >= 1")
    edges = h * np.arange(n + 1, dtype=float)
    a, b = edges[:-1], edges[1:]
    if isinstance(spec, ConstantKernel):
        i0 = spec.c * (b - a)
        i1 = spec.c * (b**2 - a**2) / 2.0
    elif isinstance(spec, FractionalKernel):
        al = spec.alpha
        i0 = spec.c * (b**al - a**al) / _gamma(al + 1.0)
        i1 = spec.c * (b ** (al + 1.0) - a ** (al + 1.0)) / ((al + 1.0) * _gamma(al))
    elif isinstance(spec, ExponentialKernel):
        i0, i1 = _exp_cell_moments(spec.c, spec.beta, a, b)
    elif isinstance(spec, SumOfExponentialsKernel):
        i0 = np.zeros(n)
        i1 = np.zeros(n)
        for w, r in zip(spec.weights, spec.rates):
            j0, j1 = _exp_cell_moments(w, r, a, b)
            i0 += j0
            i1 += j1
    else:
        raise TypeError(f"unknown kernel variant {type(spec).__name__}")
    return i0, i1


def _exp_cell_moments(c, beta, a, b):
    if beta == 0:
        return c * (b - a), c * (b**2 - a**2) / 2.0
    ea = np.exp(-beta * a)
    eb = np.exp(-beta * b)
    i0 = c * (ea - eb) / beta
    i1 = c * (ea * (a / beta + 1.0 / beta**2) - eb * (b / beta + 1.0 / beta**2))
    return i0, i1


# ---------------------------------------------------------------------------
# Mittag-Leffler function
# ---------------------------------------------------------------------------

# For z >= 0 every series term is positive, so summation in log space is
# accurate up to overflow.  For z < 0 the series cancels catastrophically
# (worst term grows like exp(|z|^(1/alpha))), so moderate negative arguments
# are summed in arbitrary precision and far-negative ones (alpha < 1,
# |z|^(1/alpha) >= 38, where the optimally-truncated remainder ~ e^-38 is
# negligible) use the algebraic asymptotic expansion.  A naive
# switch-at-|z|=5 rule cannot reach 1e-10 relative accuracy on the negative
# axis, hence this three-branch layout.
_ML_NEG_FLOAT_CUTOFF = -1.5
_ML_ASYMPTOTIC_PEAK = 38.0
_ML_MAX_EXPONENT = 700.0  # exp argument beyond which float64 overflows


def mittag_leffler(alpha: float, beta: float, z: float) -> float:
    """E_{alpha,beta}(z) = sum_n z^n / Gamma(alpha*n + beta) for real z."""
    if not alpha > 0:
        raise ValueError(f"alpha must be > 0, got {alpha}")
    if not beta > 0:
        raise ValueError(f"beta must be > 0, got {beta}")
    z = float(z)
    if not math.isfinite(z):
        raise ValueError(f"z must be finite, got {z}")
    if z == 0.0:
        return float(_rgamma(beta))
    if z > 0:
        if z ** (1.0 / alpha) > _ML_MAX_EXPONENT:
            raise OverflowError(
                f"E_{{{alpha},{beta}}}({z}) overflows double precision "
                f"(growth ~ exp(z^(1/alpha)))"
            )
        return _ml_series_positive(alpha, beta, z)
    if z >= _ML_NEG_FLOAT_CUTOFF:
        return _ml_series_small_negative(alpha, beta, z)
    if alpha < 1.0 and (-z) ** (1.0 / alpha) >= _ML_ASYMPTOTIC_PEAK:
        return _ml_asymptotic_negative(alpha, beta, -z)
    return _ml_series_mp(alpha, beta, z)


def _ml_series_positive(alpha, beta, z):
    # All terms positive; work in log space because z^n may overflow long
    # before the Gamma denominator catches up (small alpha, moderate z).
    log_z = math.log(z)
    n_peak = z ** (1.0 / alpha) / alpha
    total = 0.0
    for n in range(int(n_peak) + 10_000):
        log_term = n * log_z - math.lgamma(alpha * n + beta)
        if log_term > 709.0:
            raise OverflowError(f"Mittag-Leffler series overflowed for z={z}")
        term = math.exp(log_term)
        total += term
        if n > n_peak and term < 1e-18 * total:
            return total
    raise RuntimeError(f"Mittag-Leffler series failed to converge for z={z}")


def _ml_series_small_negative(alpha, beta, z):
    total = 0.0
    term_arg = beta
    power = 1.0
    for _ in range(10_000):
        term = power * _rgamma(term_arg)
        total += term
        if abs(term) < 1e-18 * max(abs(total), 1.0) and term_arg > alpha + beta:
            return total
        power *= z
        term_arg += alpha
    raise RuntimeError(f"Mittag-Leffler series failed to converge for z={z}")


def _ml_series_mp(alpha, beta, z):
    # Cancellation amplifies the worst term exp(|z|^(1/alpha)); add that many
    # decimal digits of working precision so the float64 result is exact.
    # The gamma argument alpha*n + beta must be formed at working precision:
    # in float64 its rounding error alone corrupts the cancellation.
    peak = abs(z) ** (1.0 / alpha)
    extra = int(0.4343 * peak) + 15
    if extra > 10_000:
        raise ValueError(
            f"z={z} too negative for series evaluation at alpha={alpha}"
        )
    with mpmath.workdps(20 + extra):
        ma = mpmath.mpf(alpha)
        mb = mpmath.mpf(beta)
        mz = mpmath.mpf(z)
        cutoff = mpmath.mpf(10) ** (-(extra + 10))
        total = mpmath.mpf(0)
        power = mpmath.mpf(1)
        n = 0
        while n < 200_000:
            term = power / mpmath.gamma(ma * n + mb)
            total += term
            power *= mz
            n += 1
            if n > peak / alpha + 5 and abs(term) <= abs(total) * cutoff:
                return float(total)
        raise RuntimeError(f"Mittag-Leffler series failed to converge for z={z}")


def _ml_asymptotic_negative(alpha, beta, x):
    # E_{a,b}(-x) = sum_{k>=1} (-1)^(k-1) x^(-k) / Gamma(b - a k) + O(opt),
    # valid for 0 < alpha < 1.  Truncation is decided on a smooth envelope:
    # once b - a k < 0 the raw terms carry an oscillating |sin(pi(b - a k))|
    # factor (reflection formula) that would trip a naive smallest-term rule,
    # so the envelope drops the sine via x^-k Gamma(1 - b + a k) / pi.
    log_x = math.log(x)
    log_pi = math.log(math.pi)
    total = 0.0
    sign = 1.0
    prev_env = math.inf
    for k in range(1, 400):
        refl_arg = 1.0 - beta + alpha * k
        if refl_arg > 0.5:
            log_env = -k * log_x + math.lgamma(refl_arg) - log_pi
            # term assembled in log space: x^-k / Gamma(b-ak) can pair an
            # underflowing power with an overflowing reciprocal gamma
            term = sign * math.exp(log_env) * math.sin(math.pi * (beta - alpha * k))
        else:
            # Gamma(b - a k) still regular here; raw magnitude is smooth
            term = sign * math.exp(-k * log_x) * float(_rgamma(beta - alpha * k))
            mag = abs(term)
            log_env = math.log(mag) if mag > 0 else prev_env
        if log_env > prev_env and k > 1:
            break
        if k > 2 and log_env < math.log(max(abs(total), 1e-300)) - 40.0:
            break
        prev_env = log_env
        total += term
        sign = -sign
    return total


def _ml_array(alpha: float, beta: float, z) -> np.ndarray:
    z_arr = np.asarray(z, dtype=float)
    flat = [mittag_leffler(alpha, beta, v) for v in np.atleast_1d(z_arr)]
    out = np.array(flat).reshape(z_arr.shape)
    return out


# ---------------------------------------------------------------------------
# Resolvents of the second kind
# ---------------------------------------------------------------------------

def resolvent_closed_form(spec: Kernel, lam: float):
    """Closed-form R_lam as a vectorized callable of t > 0.

    lam = 0 returns the zero function.  The sum-of-exponentials variant has no
    tabulated closed form here; use resolvent_numeric for it.
    """
    if isinstance(spec, SumOfExponentialsKernel):
        raise UnsupportedVariantError(
            "no closed-form resolvent for SumOfExponentialsKernel; "
            "use resolvent_numeric"
        )
    if lam == 0.0:
        def zero(t):
            t_arr = np.asarray(t, dtype=float)
            out = np.zeros_like(t_arr)
            return out if out.ndim else 0.0
        return zero

    if isinstance(spec, ConstantKernel):
        lc = lam * spec.c

        def r_const(t):
            t_arr = np.asarray(t, dtype=float)
            out = lc * np.exp(-lc * t_arr)
            return out if out.ndim else float(out)

        return r_const

    if isinstance(spec, ExponentialKernel):
        lc = lam * spec.c
        b = spec.beta

        def r_exp(t):
            t_arr = np.asarray(t, dtype=float)
            out = lc * np.exp(-(b + lc) * t_arr)
            return out if out.ndim else float(out)

        return r_exp

    if isinstance(spec, FractionalKernel):
        lc = lam * spec.c
        al = spec.alpha

        def r_frac(t):
            t_arr = np.asarray(t, dtype=float)
            if np.any(t_arr <= 0) and al < 1.0:
                raise KernelDomainError("fractional resolvent is singular at t <= 0")
            ml = _ml_array(al, al, -lc * t_arr**al)
            out = lc * t_arr ** (al - 1.0) * ml
            return out if out.ndim else float(out)

        return r_frac

    raise TypeError(f"unknown kernel variant {type(spec).__name__}")


@dataclass(frozen=True)
class ResolventSamples:
    """R_lam sampled on a grid, with the discrete-identity residual attached.

    residual is max_i |lam*(K*R)(t_i) - lam*K(t_i) + R(t_i)| over interior
    nodes, relative to max_i |lam*K(t_i)|, with the convolution taken by the
    same product-integration rule the solver enforced; it certifies the
    triangular solve, while accuracy against closed forms is a separate check.
    """

    grid: TimeGrid
    values: np.ndarray
    lam: float
    residual: float
    warning: str | None = None


def resolvent_numeric(spec: Kernel, lam: float, grid: TimeGrid) -> ResolventSamples:
    """Solve R + lam*(K*R) = lam*K on the grid by product integration.

    For singular fractional kernels R itself blows up at 0, so the leading
    Neumann terms sum_{k<=m} (-1)^(k-1) lam^k K^{*k} (closed-form powers
    c^k t^(k a - 1)/Gamma(k a)) are split off analytically, with m chosen so
    the remainder's forcing t^((m+1)a - 1) is C^1; only the smooth remainder
    is solved numerically.  The node at t = 0 is stored as +-inf.
    """
    if grid.t_start != 0.0:
        raise ValueError("resolvent grid must start at t = 0")
    if not math.isfinite(lam):
        raise ValueError("lambda must be finite")
    nodes = grid.nodes()
    n = grid.n_steps
    h = grid.spacing

    warning = None
    if isinstance(spec, FractionalKernel) and spec.alpha < 0.55 and n < 50:
        warning = (
            f"grid with {n} steps is too coarse to resolve the t^(alpha-1) "
            f"singularity at alpha={spec.alpha}; refine the grid"
        )

    if lam == 0.0:
        return ResolventSamples(grid, np.zeros(n + 1), 0.0, 0.0, warning)

    i0, i1 = cell_moments(spec, h, n)
    a_w, b_w = _lag_weights(i0, i1, h)

    if is_singular(spec):
        al = spec.alpha
        m = math.ceil(2.0 / al) - 1
        partial = np.zeros(n)  # leading Neumann sum at nodes[1:]
        for k in range(1, m + 1):
            partial += (
                (-1.0) ** (k - 1)
                * (lam * spec.c) ** k
                * nodes[1:] ** (k * al - 1.0)
                * _rgamma(k * al)
            )
        s = (m + 1) * al - 1.0
        forcing = (
            (-1.0) ** m
            * (lam * spec.c) ** (m + 1)
            / lam
            * nodes**s
            * _rgamma((m + 1) * al)
        ) * lam
        rem = _vie_solve(lam, a_w, b_w, forcing)
        resid = _vie_residual(lam, a_w, b_w, forcing, rem)
        values = np.empty(n + 1)
        values[0] = np.inf if spec.c * lam > 0 else -np.inf
        values[1:] = partial + rem[1:]
        scale = np.max(np.abs(lam * kernel_eval(spec, nodes[1:])))
    else:
        forcing = lam * kernel_eval(spec, nodes)
        values = _vie_solve(lam, a_w, b_w, forcing)
        resid = _vie_residual(lam, a_w, b_w, forcing, values)
        scale = np.max(np.abs(forcing))

    return ResolventSamples(grid, values, lam, float(resid / scale), warning)


def _lag_weights(i0: np.ndarray, i1: np.ndarray, h: float):
    """Product-trapezoidal lag weights from cell moments.

    For (K*x)(t_i) = sum_m A[m] x_{i-m} + B[m] x_{i-m+1} with x piecewise
    linear; A[m] + B[m] = I0[m] and the rule is exact for linear x.
    Index m-1 holds lag m.
    """
    m = np.arange(1, len(i0) + 1, dtype=float)
    a_w = (i1 - (m - 1.0) * h * i0) / h
    b_w = (m * h * i0 - i1) / h
    return a_w, b_w


def _vie_solve(lam, a_w, b_w, forcing):
    """Sequential solve of x_i + lam * (K*x)_i = f_i with x_0 = f_0."""
    n = len(a_w)
    x = np.empty(n + 1)
    x[0] = forcing[0]
    b1 = b_w[0]
    for i in range(1, n + 1):
        past = a_w[:i] @ x[i - 1 :: -1]
        if i >= 2:
            past += b_w[1:i] @ x[i - 1 : 0 : -1]
        x[i] = (forcing[i] - lam * past) / (1.0 + lam * b1)
    return x


def _vie_residual(lam, a_w, b_w, forcing, x):
    conv = discrete_convolution(a_w, b_w, x)
    return float(np.max(np.abs(x + lam * conv - forcing)))


def discrete_convolution(a_w: np.ndarray, b_w: np.ndarray, x: np.ndarray) -> np.ndarray:
    """(K*x) at all nodes from lag weights; out[0] = 0."""
    n = len(a_w)
    out = np.zeros(n + 1)
    full_a = np.convolve(x[:-1], a_w)
    full_b = np.convolve(x[1:], b_w)
    out[1:] = full_a[:n] + full_b[:n]
    return out


# ---------------------------------------------------------------------------
# Integrated resolvent ratio  int_0^tau R_lam(s)/lam ds
# ---------------------------------------------------------------------------

def integrated_resolvent_ratio(spec: Kernel, lam: float, tau: float) -> float:
    """int_0^tau R_lam(s)/lam ds, continuous in lam at lam = 0.

    lam = 0 reduces to int_0^tau K.  Fractional kernels use the Mittag-Leffler
    identity (1 - E_{a,1}(-lam c tau^a))/lam; constant and exponential kernels
    integrate their exponential resolvents exactly; sum-of-exponentials falls
    back to quadrature of the numeric resolvent.
    """
    if tau < 0:
        raise ValueError(f"tau must be >= 0, got {tau}")
    if tau == 0.0:
        return 0.0
    if lam == 0.0:
        return float(kernel_integral(spec, tau))

    if isinstance(spec, FractionalKernel):
        ml = mittag_leffler(spec.alpha, 1.0, -lam * spec.c * tau**spec.alpha)
        return (1.0 - ml) / lam
    if isinstance(spec, ConstantKernel):
        return float(-np.expm1(-lam * spec.c * tau) / lam)
    if isinstance(spec, ExponentialKernel):
        rate = spec.beta + lam * spec.c
        if rate == 0.0:
            return spec.c * tau
        return float(spec.c * (-np.expm1(-rate * tau)) / rate)
    if isinstance(spec, SumOfExponentialsKernel):
        n = max(200, int(250 * tau))
        samples = resolvent_numeric(spec, lam, TimeGrid(0.0, tau, n))
        return float(np.trapezoid(samples.values, dx=samples.grid.spacing) / lam)
    raise TypeError(f"unknown kernel variant {type(spec).__name__}")


def integrated_resolvent_ratio_curve(spec: Kernel, lam: float, taus) -> np.ndarray:
    """Vectorized integrated_resolvent_ratio over an array of tau >= 0."""
    taus = np.asarray(taus, dtype=float)
    if np.any(taus < 0):
        raise ValueError("tau values must be >= 0")
    if lam == 0.0:
        return np.asarray(kernel_integral(spec, taus), dtype=float)
    if isinstance(spec, FractionalKernel):
        ml = _ml_array(spec.alpha, 1.0, -lam * spec.c * taus**spec.alpha)
        return (1.0 - ml) / lam
    return np.array([integrated_resolvent_ratio(spec, lam, t) for t in taus])
