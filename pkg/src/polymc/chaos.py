"""Exact finite-N second-moment analytics for the averaged field.

Everything here follows from the polynomial chaos expansion of Z - 1:
the overlap moment generating function e_M = E[exp(lambda2 * L_M)] by
renewal over collision times, the exact variance of the scaled averaged
field via

    Var[N^{(d-2)/4} Z_N(phi)] = N^{d/2-1} sum_{n=1}^{N} sigma^2 s_n e_{N-n},
    s_n = sum_{x,y} phi_N(x) phi_N(y) q_{2n}(x-y),

its decomposition by chaos degree, and the limiting variance
C_beta * int_0^1 int int phi(x) g_{2t/d}(x-y) phi(y) dx dy dt.

The pair sums s_n are evaluated exactly for separable phi by contracting
each axis of the step-count decomposition of q_{2n} against the 1-d
autocorrelation of the sampled phi grid, so no d-dimensional kernel boxes
are ever materialized.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import quad
from scipy.special import gammaln

from . import walks
from .disorder import DisorderLaw
from .testfunc import TestFunction

try:
    import numba as _nb
except ImportError:  # pragma: no cover
    _nb = None

if _nb is not None:
    @_nb.njit(cache=True)
    def _renewal_kernel(q, sigma2):  # pragma: no cover (jit)
        """e_M = 1 + sigma2 * sum_l q[l-1] e_{M-l}, Neumaier-compensated."""
        m_max = q.size
        e = np.empty(m_max + 1)
        e[0] = 1.0
        for m in range(1, m_max + 1):
            s = 0.0
            c = 0.0
            for l in range(1, m + 1):
                term = q[l - 1] * e[m - l]
                t = s + term
                if abs(s) >= abs(term):
                    c += (s - t) + term
                else:
                    c += (term - t) + s
                s = t
            e[m] = 1.0 + sigma2 * (s + c)
        return e
else:  # pragma: no cover
    def _renewal_kernel(q, sigma2):
        m_max = q.size
        e = np.empty(m_max + 1)
        e[0] = 1.0
        for m in range(1, m_max + 1):
            e[m] = 1.0 + sigma2 * float(np.dot(q[:m], e[m - 1::-1]))
        return e


class SupercriticalError(ValueError):
    """beta at or above the L2-critical temperature where a limit is needed."""


@dataclass
class OverlapMGF:
    """e_M = E[exp(lambda2(beta) L_M)] for M = 0..m_max."""
    d: int
    law: DisorderLaw
    beta: float
    values: np.ndarray          # e_0 .. e_{m_max}
    limit: float                # closed form (1-pi)/(1-pi e^{lambda2}); inf if supercritical
    tail_bound: float           # certified bound on limit - e_{m_max}
    subcritical: bool

    @property
    def m_max(self) -> int:
        return len(self.values) - 1


def _return_data(d: int, m_max: int):
    ser = walks.return_series(d)
    if ser.n_max >= m_max:
        q = ser.q0[:m_max]
    else:
        q = walks.return_prob_series(d, m_max)
    return q, ser


@lru_cache(maxsize=32)
def overlap_mgf(d: int, law: DisorderLaw, beta: float, m_max: int) -> OverlapMGF:
    """Renewal recursion e_M = 1 + sigma^2 sum_{l<=M} q_{2l}(0) e_{M-l}.

    Cached (all inputs are immutable); treat the returned arrays as
    read-only."""
    if m_max < 0:
        raise ValueError("m_max >= 0")
    lam2 = law.lambda2(beta)
    sig2 = law.sigma2(beta)
    q, ser = _return_data(d, max(m_max, 1))
    e = _renewal_kernel(np.ascontiguousarray(q[:m_max], dtype=float), sig2)
    subcritical = lam2 < math.log(1.0 / ser.pi_d)
    if subcritical:
        limit = (1.0 - ser.pi_d) / (1.0 - ser.pi_d * math.exp(lam2))
        tail = _overlap_tail_bound(sig2, ser, m_max)
    else:
        limit = math.inf
        tail = math.inf
    return OverlapMGF(d=d, law=law, beta=beta, values=e, limit=limit,
                      tail_bound=tail, subcritical=subcritical)


def _overlap_tail_bound(sig2: float, ser: walks.ReturnSeries, m: int) -> float:
    """Certified bound on e_inf - e_M.

    A degree-k collision chain missing from e_M has total time > M, so
    some single gap exceeds M/k; union-bounding over the k gaps gives
    k * sigma^{2k} R^{k-1} T(floor(M/k)), with T the return-series tail.
    The k-sum is cut where the geometric envelope (sigma^2 R)^k closes it.
    """
    r_up = ser.r_inf_bound
    x = sig2 * r_up
    if x >= 1.0:
        return math.inf
    if m < 1:
        return x / (1.0 - x) + 1.0  # crude but finite: e_inf - 1 bound

    def tail_T(j: int) -> float:
        # sum_{n > j} q_{2n}(0), certified from partial sums + envelope
        if j >= ser.n_max:
            return ser.r_inf_bound - float(ser.partial[-1])
        return r_up - float(ser.partial[j - 1]) if j >= 1 else r_up

    total = 0.0
    k = 1
    while True:
        geom_rest = x ** (k) / (1.0 - x) * (k / (1.0 - x) + 1.0)
        if geom_rest < 1e-18 * max(total, 1e-300) or k > 10_000:
            total += geom_rest  # close the sum with the geometric envelope
            break
        total += k * sig2 ** k * r_up ** (k - 1) * tail_T(m // k)
        k += 1
    return total


def degree_resolved_mgf(d: int, law: DisorderLaw, beta: float,
                        m_max: int, k_max: int) -> np.ndarray:
    """e[k, M] with e[0, :] = 1, e[k, M] = sigma^2 sum_l q_{2l}(0) e[k-1, M-l]."""
    sig2 = law.sigma2(beta)
    q, _ = _return_data(d, max(m_max, 1))
    q = np.asarray(q[:m_max], dtype=float)
    out = np.zeros((k_max + 1, m_max + 1))
    out[0] = 1.0
    qfull = np.concatenate(([0.0], q))  # q_0 := 0, collisions take time
    for k in range(1, k_max + 1):
        conv = np.convolve(qfull, out[k - 1])[:m_max + 1]
        out[k] = sig2 * conv
    return out


# ---------------------------------------------------------------------------
# exact pair sums s_n for separable phi
# ---------------------------------------------------------------------------

@lru_cache(maxsize=32)
def pair_sums(d: int, n_steps: int, phi: TestFunction) -> np.ndarray:
    """s_n = sum_{x,y} phi_N(x) phi_N(y) q_{2n}(x-y) for n = 1..N, exact.
    Cached; treat the returned array as read-only.

    Uses q_m(v) = sum_{m_1+..+m_d=m} m!/(prod m_i!) d^{-m} prod p1(m_i, v_i)
    and contracts each axis against the autocorrelation of phi's grid."""
    if phi.d != d:
        raise ValueError("phi dimension mismatch")
    n2 = 2 * n_steps
    r = phi.lattice_radius(n_steps)
    rows = walks._binomial_kernel_rows(n2, 2 * r)
    m = np.arange(n2 + 1)
    log_c = []
    for i in range(d):
        g = phi.lattice_axis(n_steps, i)
        a = np.correlate(g, g, mode="full")  # autocorrelation, length 4r+1
        b = rows @ a                          # b[m] = sum_v a(v) p1(m, v)
        with np.errstate(divide="ignore"):
            log_c.append(np.log(np.maximum(b, 0.0)) - gammaln(m + 1))
    acc = log_c[0]
    for i in range(1, d):
        acc = walks._logconv(acc, log_c[i])
    lead = gammaln(m + 1) - m * math.log(d) + acc
    s = np.exp(lead[2::2]) * n_steps ** (-d)  # each phi_N carries N^{-d/2}
    return s


def kernel_riemann_sum(d: int, n_steps: int, phi: TestFunction,
                       n_range=None) -> float:
    """N^{d/2-1} sum_{n in range} s_n (range defaults to 1..N)."""
    s = pair_sums(d, n_steps, phi)
    if n_range is None:
        n_range = range(1, n_steps + 1)
    idx = [n - 1 for n in n_range]
    if any(i < 0 or i >= n_steps for i in idx):
        raise ValueError("n_range must lie within 1..N")
    return n_steps ** (d / 2.0 - 1.0) * float(np.sum(s[idx]))


def exact_variance(d: int, law: DisorderLaw, beta: float, n_steps: int,
                   phi: TestFunction) -> float:
    """Var[N^{(d-2)/4} Z_{N,beta}(phi)], exact at finite N."""
    if beta == 0:
        return 0.0
    sig2 = law.sigma2(beta)
    s = pair_sums(d, n_steps, phi)
    e = overlap_mgf(d, law, beta, n_steps - 1).values
    # sum_n sigma^2 s_n e_{N-n}
    return n_steps ** (d / 2.0 - 1.0) * sig2 * float(np.dot(s, e[::-1]))


def degree_variances(d: int, law: DisorderLaw, beta: float, n_steps: int,
                     phi: TestFunction, k_max: int) -> np.ndarray:
    """var_k for k = 1..k_max: the degree-k chaos contribution to the
    exact variance; var_k = N^{d/2-1} sigma^2 sum_n s_n e_{N-n, k-1}."""
    if beta == 0:
        return np.zeros(k_max)
    sig2 = law.sigma2(beta)
    s = pair_sums(d, n_steps, phi)
    ek = degree_resolved_mgf(d, law, beta, n_steps - 1, max(k_max - 1, 0))
    scale = n_steps ** (d / 2.0 - 1.0) * sig2
    return np.array([scale * float(np.dot(s, ek[k - 1][::-1]))
                     for k in range(1, k_max + 1)])


def truncation_gap(d: int, law: DisorderLaw, beta: float, n_steps: int,
                   phi: TestFunction, m: int) -> float:
    """sum_{k>m} var_k: the exact squared L2 distance between Z(phi) and
    its degree-<=m chaos truncation.  Zero once m >= N."""
    if beta == 0 or m >= n_steps:
        return 0.0
    total = exact_variance(d, law, beta, n_steps, phi)
    if m == 0:
        return total
    covered = float(np.sum(degree_variances(d, law, beta, n_steps, phi, m)))
    return max(total - covered, 0.0)


# ---------------------------------------------------------------------------
# limiting variance
# ---------------------------------------------------------------------------

def _autocorr_1d(phi: TestFunction, w: np.ndarray) -> np.ndarray:
    """Closed-form autocorrelation a(w) = int f(u) f(u+w) du of the 1-d factor."""
    s = phi.scale
    aw = np.abs(w)
    if phi.kind == "gaussian":
        return s * math.sqrt(math.pi) * np.exp(-(w ** 2) / (4.0 * s ** 2))
    if phi.kind == "indicator":
        return np.maximum(0.0, 2.0 * s - aw)
    t = aw / s
    out = np.where(t <= 1.0, t ** 3 / 2.0 - t ** 2 + 2.0 / 3.0,
                   np.maximum(0.0, 2.0 - t) ** 3 / 6.0)
    return s * out


def _heat_overlap_1d(phi: TestFunction, var: float) -> float:
    """int a(w) g_var(w) dw  (g_var a centered Gaussian of variance var)."""
    s = math.sqrt(var)
    if phi.kind == "gaussian":
        sc = phi.scale
        return sc * sc * math.sqrt(math.pi) / math.sqrt(sc * sc + var / 2.0)
    dens = 1.0 / math.sqrt(2.0 * math.pi)
    kinks = [k / s for k in (phi.scale, 2.0 * phi.scale) if k / s < 9.0]
    val, _ = quad(lambda u: float(_autocorr_1d(phi, np.array([u * s]))[0])
                  * dens * math.exp(-u * u / 2.0),
                  -9.0, 9.0, points=sorted({-k for k in kinks} | set(kinks) | {0.0}),
                  limit=200)
    return val


def heat_smoothing_integral(d: int, phi: TestFunction,
                            t_nodes: int = 48) -> tuple[float, float]:
    """(int_0^1 dt int int phi(x) g_{2t/d}(x-y) phi(y) dx dy, error estimate).

    Factorized per axis; the t-integral uses Gauss-Legendre after the
    substitution t = tau^2 (which removes the sqrt(t) edge behavior of the
    kinked profiles); the error estimate compares against half the nodes."""
    def value(nodes: int) -> float:
        x, wts = np.polynomial.legendre.leggauss(nodes)
        tau = 0.5 * (x + 1.0)
        wts = 0.5 * wts * 2.0 * tau   # dt = 2 tau dtau
        tot = 0.0
        for tau_i, w_i in zip(tau, wts):
            t = tau_i * tau_i
            if t == 0.0:
                continue
            prod = 1.0
            for _ in range(d):
                prod *= _heat_overlap_1d(phi, 2.0 * t / d)
            tot += w_i * prod
        return tot
    v2 = value(t_nodes)
    v1 = value(t_nodes // 2)
    return v2, abs(v2 - v1)


@dataclass
class LimitVariance:
    value: float
    c_beta: float
    heat_integral: float
    quadrature_error: float
    closed_form: float | None   # pure-Gaussian phi in d = 3 only


def limit_variance(d: int, law: DisorderLaw, beta: float,
                   phi: TestFunction) -> LimitVariance:
    """C_beta int_0^1 int int phi g_{2t/d} phi, the Theorem-variance."""
    lam2 = law.lambda2(beta)
    ser = walks.return_series(d)
    if lam2 >= math.log(1.0 / ser.pi_d):
        raise SupercriticalError(
            "beta at or above the L2-critical temperature: limit variance "
            "is infinite")
    sig2 = law.sigma2(beta)
    c_beta = sig2 * (1.0 - ser.pi_d) / (1.0 - ser.pi_d * math.exp(lam2))
    heat, err = heat_smoothing_integral(d, phi)
    closed = None
    if phi.kind == "gaussian" and d == 3:
        s = phi.scale
        closed = c_beta * (s * s * math.sqrt(math.pi)) ** 3 \
            * 6.0 * (1.0 / s - 1.0 / math.sqrt(s * s + 1.0 / 3.0))
    return LimitVariance(value=c_beta * heat, c_beta=c_beta,
                         heat_integral=heat, quadrature_error=c_beta * err,
                         closed_form=closed)


@dataclass
class VarianceReport:
    """Exact finite-N variance, its by-degree decomposition, and the limit."""
    d: int
    n_steps: int
    beta: float
    exact: float
    degree: np.ndarray          # var_1 .. var_m
    tail: float                 # sum_{k>m} var_k
    m: int
    limit: LimitVariance


def variance_report(d: int, law: DisorderLaw, beta: float, n_steps: int,
                    phi: TestFunction, m: int) -> VarianceReport:
    exact = exact_variance(d, law, beta, n_steps, phi)
    deg = degree_variances(d, law, beta, n_steps, phi, m)
    tail = truncation_gap(d, law, beta, n_steps, phi, m)
    lim = limit_variance(d, law, beta, phi)
    return VarianceReport(d=d, n_steps=n_steps, beta=beta, exact=exact,
                          degree=deg, tail=tail, m=m, limit=lim)


# ---------------------------------------------------------------------------
# first-order chaos term
# ---------------------------------------------------------------------------

class ChaosTermOne:
    """Z^{(1)}(phi) = sigma sum_{n<=N, z} (sum_x phi_N(x) q_n(z-x)) eta_{n,z}.

    The smoothed-phi tables depend only on (config geometry, phi) and are
    built once; evaluate() is then cheap per disorder replica."""

    def __init__(self, d: int, n_steps: int, phi: TestFunction):
        self.d = d
        self.n_steps = n_steps
        self.phi = phi
        grid, r_phi = phi.lattice_values(n_steps)
        self.tables = []
        for n in range(1, n_steps + 1):
            rad = r_phi + n
            q = walks.kernel_box(d, n, n)
            q = walks._crop_or_pad(q, n, rad, d)
            psi = _convolve_full(q, grid, d)
            self.tables.append((rad + r_phi, psi))

    def evaluate(self, law: DisorderLaw, beta: float, field) -> float:
        sig = law.sigma(beta)
        tot = 0.0
        for n, (rad, psi) in enumerate(self.tables, start=1):
            om = field.omega_box(n, (-rad,) * self.d, (rad,) * self.d)
            tot += float(np.sum(psi * law.eta(beta, om)))
        return sig * tot


def _convolve_full(a: np.ndarray, b: np.ndarray, d: int) -> np.ndarray:
    from scipy.signal import fftconvolve
    return fftconvolve(a, b, mode="full")


def chaos_term_1(d: int, n_steps: int, law: DisorderLaw, beta: float,
                 field, phi: TestFunction) -> float:
    return ChaosTermOne(d, n_steps, phi).evaluate(law, beta, field)


def chaos_term_1_variance(d: int, law: DisorderLaw, beta: float,
                          n_steps: int, phi: TestFunction) -> float:
    """Exact Var[Z^{(1)}(phi)] = sigma^2 sum_n s_n (degree-1, unscaled)."""
    return law.sigma2(beta) * float(np.sum(pair_sums(d, n_steps, phi)))
