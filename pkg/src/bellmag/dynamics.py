"""Second-moment dynamics of the un-eliminated Langevin equations.

Both pulses are linear in the cavity mode ``a`` and the magnon ``m``:

squeezer (first pulse)::

    da = (-kappa/2 a - i G m+) dt + sqrt(kappa) dA_in
    dm = (-gamma/2 m - i G a+) dt + sqrt(gamma) dM_in

beam splitter (second pulse)::

    da = (-kappa/2 a - i G m) dt + sqrt(kappa) dA_in
    dm = (-gamma/2 m - i G a) dt + sqrt(gamma) dM_in

The optical input is vacuum, the magnon bath has occupation ``n_th``.  The
output temporal mode ``B = c * int_0^tau w(t) a_out(t) dt`` with
``a_out = -a_in + sqrt(kappa) a`` is tracked through an auxiliary operator
``u``.  With ``w(t) = exp(-lam t)`` the substitution ``u = exp(lam t) b``
makes the equation autonomous,

    du = (lam u + sqrt(kappa) a) dt - dA_in,

with ``lam = -G~`` for the squeezer (``w = exp(+G~ t)``) and ``lam = +G~``
for the beam splitter.  The ``-dA_in`` increment is the white-noise
feed-through of the output; it enters the diffusion matrix with weight
``1`` in ``<du du+>`` and ``-sqrt(kappa)`` in ``<da du+>`` and ``<du da+>``.

For ``x = (a, a+, m, m+, u, u+)`` and ``dx = M x dt + L dxi`` the ordered
second moments ``Sigma_ij = <x_i x_j>`` obey

    dSigma/dt = M Sigma + Sigma M^T + L N L^T

where ``N_kl dt = <dxi_k dxi_l>``.  This is integrated with classical RK4 at
a fixed step.  Because the system is linear and autonomous, one RK4 step is
the affine map ``z -> P z`` with ``P = sum_{k<=4} (hA)^k / k!``; ``n`` steps
are applied as ``P**n`` by repeated squaring, which is the same arithmetic
sequence up to round-off and keeps the 10^7-step adiabatic-limit runs cheap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "DynamicsError",
    "LangevinParams",
    "MomentState",
    "adiabatic_error_scan",
    "closed_form",
    "default_dt",
    "integrate_first_pulse",
    "integrate_pulse",
    "integrate_second_pulse",
    "output_mode_moment",
    "time_series",
]

A, AD, MG, MD, U, UD = range(6)
KINDS = ("squeezer", "beamsplitter")


class DynamicsError(RuntimeError):
    pass


@dataclass(frozen=True)
class LangevinParams:
    """Rates in rad/s (any consistent unit works; ``kappa = 1`` is common)."""

    G: float
    kappa: float
    gamma: float = 0.0
    n_th: float = 0.0
    pulse_kind: str = "squeezer"

    def __post_init__(self):
        if self.pulse_kind not in KINDS:
            raise ValueError(f"pulse_kind must be one of {KINDS}")
        for name in ("G", "kappa", "gamma", "n_th"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.kappa <= 0:
            raise ValueError("kappa must be > 0")

    @property
    def G_eff(self) -> float:
        """Adiabatic rate ``2 G^2 / kappa``."""
        return 2.0 * self.G**2 / self.kappa


@dataclass
class MomentState:
    time: float
    cav_occ: float
    mag_occ: float
    cross: complex
    out_occ: float
    out_commutator: float
    sigma: np.ndarray = field(repr=False)

    def cauchy_schwarz_gap(self, kind) -> float:
        """Slack of ``|<am>|^2 <= (<a+a>+1)<m+m>`` (squeezer) or ``|<a+m>|^2 <= <a+a><m+m>``."""
        if kind == "squeezer":
            return (self.cav_occ + 1.0) * self.mag_occ - abs(self.cross) ** 2
        return self.cav_occ * self.mag_occ - abs(self.cross) ** 2


def default_dt(kappa, tau):
    return min(0.005 / kappa, tau / 2000.0)


def _drift_and_diffusion(params: LangevinParams):
    G, kappa, gamma, n_th = params.G, params.kappa, params.gamma, params.n_th
    Gt = params.G_eff
    M = np.zeros((6, 6), dtype=complex)
    M[A, A] = M[AD, AD] = -kappa / 2
    M[MG, MG] = M[MD, MD] = -gamma / 2
    if params.pulse_kind == "squeezer":
        M[A, MD] = -1j * G
        M[AD, MG] = 1j * G
        M[MG, AD] = -1j * G
        M[MD, A] = 1j * G
        lam = -Gt
    else:
        M[A, MG] = -1j * G
        M[AD, MD] = 1j * G
        M[MG, A] = -1j * G
        M[MD, AD] = 1j * G
        lam = Gt
    M[U, U] = M[UD, UD] = lam
    M[U, A] = M[UD, AD] = math.sqrt(kappa)
    # noise increments (dA_in, dA_in+, dM_in, dM_in+)
    L = np.zeros((6, 4))
    L[A, 0] = L[AD, 1] = math.sqrt(kappa)
    L[MG, 2] = L[MD, 3] = math.sqrt(gamma)
    L[U, 0] = L[UD, 1] = -1.0
    N = np.zeros((4, 4))
    N[0, 1] = 1.0
    N[2, 3] = n_th + 1.0
    N[3, 2] = n_th
    return M, L @ N @ L.T, lam


def _initial_sigma(m_occ0):
    S = np.zeros((6, 6), dtype=complex)
    S[A, AD] = 1.0
    S[MG, MD] = 1.0 + m_occ0
    S[MD, MG] = m_occ0
    return S


def _out_norm2(params, t):
    """Squared normalisation of the temporal mode including the ``exp(lam t)`` undo factor."""
    Gt = params.G_eff
    if t <= 0:
        return 0.0
    x = 2.0 * Gt * t
    if params.pulse_kind == "squeezer":
        # 2G~/(e^{2G~t}-1) * e^{2G~t}
        base = 1.0 / t if x == 0 else 2.0 * Gt / -math.expm1(-x)
    else:
        # 2G~/(1-e^{-2G~t}) * e^{-2G~t}
        base = 1.0 / t if x == 0 else 2.0 * Gt / math.expm1(x)
    return base


def _state(params, S, t):
    c2 = _out_norm2(params, t)
    cross = S[A, MG] if params.pulse_kind == "squeezer" else S[AD, MG]
    return MomentState(
        time=t,
        cav_occ=float(S[AD, A].real),
        mag_occ=float(S[MD, MG].real),
        cross=complex(cross),
        out_occ=float(S[UD, U].real * c2),
        out_commutator=float((S[U, UD] - S[UD, U]).real * c2),
        sigma=S,
    )


def _step_matrix(params, h):
    M, D, _ = _drift_and_diffusion(params)
    I6 = np.eye(6)
    n = 36
    # row-major vec: vec(M S) = kron(M, I) vec S, vec(S M^T) = kron(I, M) vec S
    Aaug = np.zeros((n + 1, n + 1), dtype=complex)
    Aaug[:n, :n] = np.kron(M, I6) + np.kron(I6, M)
    Aaug[:n, n] = D.ravel()
    hA = h * Aaug
    P = np.eye(n + 1, dtype=complex)
    term = np.eye(n + 1, dtype=complex)
    for k in range(1, 5):
        term = term @ hA / k
        P = P + term
    return P


def _check(params, S, t, m_occ0):
    if not np.all(np.isfinite(S)):
        raise DynamicsError(f"moments became non-finite at t={t:g}")
    # linear-theory growth bound: no moment grows faster than exp(2 G t)
    bound = (2.0 + params.n_th + m_occ0) * math.exp(min(2.0 * params.G * t, 700.0)) * (1.0 + t * (params.kappa + params.gamma))
    if np.max(np.abs(S[:4, :4])) > 10.0 * bound:
        raise DynamicsError(f"moments exceed the linear-theory bound at t={t:g}; reduce dt")
    if S[AD, A].real < -1e-10 or S[MD, MG].real < -1e-10:
        raise DynamicsError(f"negative occupation at t={t:g}")


def integrate_pulse(params: LangevinParams, tau: float, dt: float | None = None, m_occ0: float = 0.0, samples: int = 0):
    """Integrate one pulse from the vacuum cavity and a magnon of occupation ``m_occ0``.

    Returns the final :class:`MomentState`, or a list of ``samples + 1``
    states on a uniform time grid when ``samples > 0``.
    """
    if tau <= 0:
        raise ValueError("tau must be > 0")
    if dt is None:
        dt = default_dt(params.kappa, tau)
    if dt > 0.01 / params.kappa:
        raise ValueError("dt must be <= 0.01/kappa")
    n_steps = max(1, math.ceil(tau / dt - 1e-9))
    h = tau / n_steps
    P = _step_matrix(params, h)
    z = np.append(_initial_sigma(m_occ0).ravel(), 1.0)

    if samples <= 0:
        z = np.linalg.matrix_power(P, n_steps) @ z
        S = z[:36].reshape(6, 6)
        _check(params, S, tau, m_occ0)
        return _state(params, S, tau)

    states = [_state(params, z[:36].reshape(6, 6), 0.0)]
    done = 0
    for k in range(1, samples + 1):
        target = round(k * n_steps / samples)
        z = np.linalg.matrix_power(P, target - done) @ z
        done = target
        S = z[:36].reshape(6, 6)
        _check(params, S, done * h, m_occ0)
        states.append(_state(params, S, done * h))
    return states


def integrate_first_pulse(params: LangevinParams, tau1: float, dt: float | None = None) -> MomentState:
    if params.pulse_kind != "squeezer":
        raise ValueError("first pulse uses the squeezer interaction")
    return integrate_pulse(params, tau1, dt)


def integrate_second_pulse(params: LangevinParams, tau2: float, dt: float | None = None, m_occ0: float = 0.0) -> MomentState:
    if params.pulse_kind != "beamsplitter":
        raise ValueError("second pulse uses the beam-splitter interaction")
    return integrate_pulse(params, tau2, dt, m_occ0=m_occ0)


def output_mode_moment(params: LangevinParams, tau: float, dt: float | None = None, m_occ0: float = 0.0) -> float:
    """Normally ordered occupation ``<B+ B>`` of the output temporal mode at pulse end."""
    return integrate_pulse(params, tau, dt, m_occ0=m_occ0).out_occ


def time_series(params, tau, samples=200, dt=None, m_occ0=0.0):
    return integrate_pulse(params, tau, dt, m_occ0=m_occ0, samples=samples)


def closed_form(kind, g_tau, m_occ0=0.0):
    """Adiabatic-limit predictions ``(mag_occ, out_occ)`` at pulse end, vacuum optical input."""
    if kind == "squeezer":
        v = math.expm1(2.0 * g_tau)
        return v, v
    T = -math.expm1(-2.0 * g_tau)
    return (1.0 - T) * m_occ0, T * m_occ0


def adiabatic_error_scan(ratios, g_tau, kappa=1.0, kind="squeezer", m_occ0=1.0):
    """Relative deviation from the adiabatic closed forms across ``G/kappa`` values.

    Rows are ``(ratio, mag_occ, out_occ, mag_dev, out_dev)``.
    """
    rows = []
    mag_ref, out_ref = closed_form(kind, g_tau, m_occ0)
    for ratio in ratios:
        params = LangevinParams(G=ratio * kappa, kappa=kappa, pulse_kind=kind)
        tau = g_tau / params.G_eff
        st = integrate_pulse(params, tau, m_occ0=0.0 if kind == "squeezer" else m_occ0)
        rows.append((ratio, st.mag_occ, st.out_occ, abs(st.mag_occ - mag_ref) / mag_ref, abs(st.out_occ - out_ref) / out_ref))
    return rows
