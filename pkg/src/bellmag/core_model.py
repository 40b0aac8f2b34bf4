"""Closed-form CHSH kernel for the photon pair emitted by the two-pulse protocol.

The first pulse (two-mode squeezing between cavity mode 1 and the magnon)
produces pairs with probability parameter ``p = 1 - exp(-2*g1tau)``; the
second pulse (beam splitter between magnon and cavity mode 2) maps the magnon
onto a travelling photon with efficiency ``T = 1 - exp(-2*g2tau)``.  The
resulting two-photon state is

    rho = (1 - p) * sum_{n,n'} (-sqrt(p*T))**(n + n') |n,n><n',n'|

and each arm is measured by a displaced on-off detector, i.e. the projector
``|alpha><alpha|`` (outcome +1) against its complement (outcome -1).

Every function here accepts scalars or numpy arrays for the displacement
amplitudes and broadcasts.  For ``T < 1`` the operator above has trace
``(1 - p)/(1 - p*T)``; it is the magnon-vacuum block of the full three-mode
state and is used as is, without renormalisation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ConversionParam",
    "Efficiency",
    "MeasurementSettings",
    "SqueezeParam",
    "R_of_eta",
    "S_of_eta",
    "T_from_g2tau",
    "chsh_S",
    "chsh_S_eta",
    "correlation",
    "correlations",
    "is_probability",
    "joint_click_prob",
    "marginal_click_prob",
    "p_from_g1tau",
    "q1_eta",
    "q2_eta",
]

TSIRELSON = 2.0 * math.sqrt(2.0)


def _check_p(p):
    if not (0.0 <= p < 1.0):
        raise ValueError(f"p must lie in [0, 1), got {p!r}")


def _check_T(T):
    if not (0.0 <= T <= 1.0):
        raise ValueError(f"T must lie in [0, 1], got {T!r}")


def _check_eta(eta):
    if not (0.0 < eta <= 1.0):
        raise ValueError(f"eta must lie in (0, 1], got {eta!r}")


def p_from_g1tau(g1tau: float) -> float:
    """Pair-generation parameter ``1 - exp(-2*g1tau)`` of the squeezing pulse."""
    if not math.isfinite(g1tau) or g1tau < 0:
        raise ValueError(f"g1tau must be finite and >= 0, got {g1tau!r}")
    return -math.expm1(-2.0 * g1tau)


def T_from_g2tau(g2tau: float) -> float:
    """Conversion efficiency ``1 - exp(-2*g2tau)``; ``math.inf`` maps to 1."""
    if math.isnan(g2tau) or g2tau < 0:
        raise ValueError(f"g2tau must be >= 0, got {g2tau!r}")
    if math.isinf(g2tau):
        return 1.0
    return -math.expm1(-2.0 * g2tau)


@dataclass(frozen=True)
class SqueezeParam:
    """Pulse area of the squeezing pulse and the pair parameter it implies."""

    g1tau: float
    p: float

    def __post_init__(self):
        if not math.isfinite(self.g1tau) or self.g1tau < 0:
            raise ValueError(f"g1tau must be finite and >= 0, got {self.g1tau!r}")
        _check_p(self.p)
        if not math.isclose(self.p, p_from_g1tau(self.g1tau), rel_tol=1e-12, abs_tol=1e-15):
            raise ValueError("p is inconsistent with g1tau")

    @classmethod
    def from_g1tau(cls, g1tau: float) -> "SqueezeParam":
        return cls(g1tau, p_from_g1tau(g1tau))

    @classmethod
    def from_p(cls, p: float) -> "SqueezeParam":
        _check_p(p)
        return cls(-0.5 * math.log1p(-p), p)

    @property
    def r(self) -> float:
        """Two-mode squeezing parameter, ``p = tanh(r)**2``."""
        return math.atanh(math.sqrt(self.p))


@dataclass(frozen=True)
class ConversionParam:
    """Pulse area of the read-out pulse and its conversion efficiency.

    ``T = 1`` may be given directly, in which case ``g2tau`` is ``math.inf``.
    """

    g2tau: float
    T: float

    def __post_init__(self):
        if math.isnan(self.g2tau) or self.g2tau < 0:
            raise ValueError(f"g2tau must be >= 0, got {self.g2tau!r}")
        _check_T(self.T)
        if not math.isclose(self.T, T_from_g2tau(self.g2tau), rel_tol=1e-12, abs_tol=1e-15):
            raise ValueError("T is inconsistent with g2tau")

    @classmethod
    def from_g2tau(cls, g2tau: float) -> "ConversionParam":
        return cls(g2tau, T_from_g2tau(g2tau))

    @classmethod
    def from_T(cls, T: float) -> "ConversionParam":
        _check_T(T)
        g2tau = math.inf if T == 1.0 else -0.5 * math.log1p(-T)
        return cls(g2tau, T)

    @property
    def T_prime(self) -> float:
        """``exp(2*g2tau) * T``, the coefficient in the factorised propagator."""
        if math.isinf(self.g2tau):
            return math.inf
        return math.expm1(2.0 * self.g2tau)


@dataclass(frozen=True)
class Efficiency:
    """Overall detection efficiency ``eta = eta_d * lambda_t``."""

    eta: float
    eta_d: float | None = None
    lambda_t: float | None = None

    def __post_init__(self):
        _check_eta(self.eta)
        if (self.eta_d is None) != (self.lambda_t is None):
            raise ValueError("give both eta_d and lambda_t or neither")
        if self.eta_d is not None:
            if not math.isclose(self.eta, self.eta_d * self.lambda_t, rel_tol=1e-12):
                raise ValueError("eta must equal eta_d * lambda_t")

    @classmethod
    def from_components(cls, eta_d: float, lambda_t: float) -> "Efficiency":
        return cls(eta_d * lambda_t, eta_d, lambda_t)


@dataclass(frozen=True)
class MeasurementSettings:
    """Displacements ``(alpha1, alpha2)`` of arm A and ``(beta1, beta2)`` of arm B."""

    alpha1: complex
    alpha2: complex
    beta1: complex
    beta2: complex

    def __post_init__(self):
        for name in ("alpha1", "alpha2", "beta1", "beta2"):
            value = complex(getattr(self, name))
            if not (math.isfinite(value.real) and math.isfinite(value.imag)):
                raise ValueError(f"{name} must be finite")
            object.__setattr__(self, name, value)

    @classmethod
    def from_vector(cls, x) -> "MeasurementSettings":
        """Build from 4 real values or 8 interleaved (re, im) values."""
        x = np.asarray(x, dtype=float).ravel()
        if x.size == 4:
            return cls(*x)
        if x.size == 8:
            return cls(*(x[0::2] + 1j * x[1::2]))
        raise ValueError(f"expected 4 or 8 values, got {x.size}")

    def as_complex(self) -> np.ndarray:
        return np.array([self.alpha1, self.alpha2, self.beta1, self.beta2])

    def as_real_imag(self) -> np.ndarray:
        """Interleaved ``(re, im)`` vector of length 8."""
        z = self.as_complex()
        out = np.empty(8)
        out[0::2] = z.real
        out[1::2] = z.imag
        return out

    @property
    def is_real(self) -> bool:
        return not np.any(self.as_complex().imag)

    def negated(self) -> "MeasurementSettings":
        return MeasurementSettings(-self.alpha1, -self.alpha2, -self.beta1, -self.beta2)

    def canonical(self) -> "MeasurementSettings":
        """Representative of ``{s, -s}`` whose first nonzero real part is positive."""
        for v in self.as_real_imag():
            if v > 0:
                return self
            if v < 0:
                return self.negated()
        return self

    def norm(self) -> float:
        return float(np.linalg.norm(self.as_complex()))


def is_probability(value, tol: float = 1e-12):
    """Validity flag: True where ``value`` lies in [0, 1] up to ``tol``."""
    value = np.asarray(value)
    return (value >= -tol) & (value <= 1.0 + tol)


def _abs2(z):
    return np.real(z) ** 2 + np.imag(z) ** 2


def joint_click_prob(p, T, alpha, beta):
    """Probability that both detectors report +1 (projection onto ``|alpha, beta>``).

    ``(1-p) exp(-|a|^2 - |b|^2 - sqrt(pT) (a* b* + a b))``; the last term is
    ``2 sqrt(pT) Re(a b)``, so the result is real.
    """
    _check_p(p)
    _check_T(T)
    exponent = -_abs2(alpha) - _abs2(beta) - 2.0 * math.sqrt(p * T) * np.real(np.multiply(alpha, beta))
    return (1.0 - p) * np.exp(exponent)


def marginal_click_prob(p, T, alpha):
    """Single-arm +1 probability ``(1-p) exp(-(1 - pT)|alpha|^2)``.

    The state is symmetric, so the same expression serves either arm.
    """
    _check_p(p)
    _check_T(T)
    return (1.0 - p) * np.exp(-(1.0 - p * T) * _abs2(alpha))


def correlation(p, T, alpha, beta):
    """``E = <(2P_alpha - 1) x (2P_beta - 1)> = 4 P(++) - 2 [P(+|alpha) + P(+|beta)] + 1``."""
    return (
        4.0 * joint_click_prob(p, T, alpha, beta)
        - 2.0 * (marginal_click_prob(p, T, alpha) + marginal_click_prob(p, T, beta))
        + 1.0
    )


def correlations(p, T, settings: MeasurementSettings) -> tuple[float, float, float, float]:
    """The four correlators ``(E11, E12, E21, E22)`` entering the CHSH sum."""
    s = settings
    return (
        float(correlation(p, T, s.alpha1, s.beta1)),
        float(correlation(p, T, s.alpha1, s.beta2)),
        float(correlation(p, T, s.alpha2, s.beta1)),
        float(correlation(p, T, s.alpha2, s.beta2)),
    )


def chsh_S(p, T, settings: MeasurementSettings) -> float:
    """``|E11 + E12 + E21 - E22|``; local realism bounds this by 2."""
    e11, e12, e21, e22 = correlations(p, T, settings)
    return abs(e11 + e12 + e21 - e22)


def R_of_eta(p, eta):
    _check_p(p)
    _check_eta(eta)
    x = 1.0 - 2.0 / eta
    return x * x - 2.0 * x * (1.0 + p) / (1.0 - p) + 1.0


def S_of_eta(p, eta):
    _check_p(p)
    _check_eta(eta)
    return (1.0 + p) / (1.0 - p) + 2.0 / eta - 1.0


def q2_eta(p, eta, alpha, beta):
    """Two-mode Q function seen through detectors of overall efficiency ``eta`` (T = 1).

    At ``eta = 1`` this is ``joint_click_prob(p, 1, alpha, beta) / pi**2``.
    """
    R = R_of_eta(p, eta)
    S = S_of_eta(p, eta)
    exponent = (
        -2.0 * (S / R) * (_abs2(alpha) + _abs2(beta))
        - (4.0 * math.sqrt(p) / (R * (1.0 - p))) * 2.0 * np.real(np.multiply(alpha, beta))
    )
    return 4.0 / (math.pi**2 * R) * np.exp(exponent)


def q1_eta(p, eta, alpha):
    """Single-mode counterpart of :func:`q2_eta`, ``2/(pi S) exp(-2|alpha|^2 / S)``."""
    S = S_of_eta(p, eta)
    return 2.0 / (math.pi * S) * np.exp(-(2.0 / S) * _abs2(alpha))


def chsh_S_eta(p, eta, settings: MeasurementSettings) -> float:
    """CHSH value from the efficiency-dependent Q functions.

    ``|(4 pi^2/eta^2) [Q(a1,b1) + Q(a1,b2) + Q(a2,b1) - Q(a2,b2)]
    - (4 pi/eta) [Q(a1) + Q(b1)] + 2|``
    """
    s = settings
    pairs = (
        q2_eta(p, eta, s.alpha1, s.beta1)
        + q2_eta(p, eta, s.alpha1, s.beta2)
        + q2_eta(p, eta, s.alpha2, s.beta1)
        - q2_eta(p, eta, s.alpha2, s.beta2)
    )
    singles = q1_eta(p, eta, s.alpha1) + q1_eta(p, eta, s.beta1)
    return abs(float(4.0 * math.pi**2 / eta**2 * pairs - 4.0 * math.pi / eta * singles + 2.0))
