"""Brute-force photon-number-basis oracle for the closed forms in :mod:`core_model`.

States are built in a truncated Fock basis, the pulse propagators are applied
as operator exponentials (truncated Taylor series), and every probability is
recomputed by direct summation against coherent-state amplitudes.  Nothing in
here calls into :mod:`bellmag.core_model`.

Three storage forms are used, all with per-mode dimension ``cutoff + 1``:

``paired``
    ``c[n, n']`` for ``sum c[n, n'] |n,n><n',n'|`` on two paired modes, all
    other modes in vacuum.
``density``
    full density tensor of shape ``(d,)*k + (d,)*k`` (bra indices last).
``ket``
    pure state amplitudes of shape ``(d,)*k``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

__all__ = [
    "TruncatedState",
    "TruncationError",
    "apply_U1",
    "apply_U1_vacuum",
    "apply_U2",
    "apply_loss",
    "build_rho1",
    "build_rho_pair",
    "choose_cutoff",
    "coherent_amplitudes",
    "coherent_tail",
    "eq25_coefficients",
    "lossy_q1",
    "lossy_q2",
    "oracle_chsh",
    "oracle_correlation",
    "oracle_joint_prob",
    "oracle_marginal_prob",
    "vacuum",
]

SERIES_TOL = 1e-14
GUARD_BAND = 10
MAX_SERIES_TERMS = 2000


class TruncationError(ValueError):
    """A truncation tail exceeds the requested tolerance."""

    def __init__(self, message, suggested_cutoff=None):
        super().__init__(message)
        self.suggested_cutoff = suggested_cutoff


@dataclass
class TruncatedState:
    cutoff: int
    modes: tuple[str, ...]
    form: str
    data: np.ndarray
    pair: tuple[int, int] | None = None
    tail_bound: float = 0.0
    warnings: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.cutoff < 1:
            raise ValueError("cutoff must be >= 1")
        if self.form not in ("paired", "density", "ket"):
            raise ValueError(f"unknown form {self.form!r}")
        if self.form == "paired" and self.pair is None:
            raise ValueError("paired form needs the pair of mode indices")

    @property
    def dim(self) -> int:
        return self.cutoff + 1

    @property
    def truncated(self) -> bool:
        return bool(self.warnings)

    def trace(self) -> float:
        if self.form == "paired":
            return float(np.real(np.trace(self.data)))
        if self.form == "ket":
            return float(np.vdot(self.data, self.data).real)
        k = len(self.modes)
        mat = self.data.reshape(self.dim**k, self.dim**k)
        return float(np.real(np.trace(mat)))

    def to_density(self) -> np.ndarray:
        """Full density tensor; only sensible for one or two modes."""
        k = len(self.modes)
        d = self.dim
        if self.form == "density":
            return self.data
        if self.form == "ket":
            return np.multiply.outer(self.data, self.data.conj())
        rho = np.zeros((d,) * (2 * k), dtype=complex)
        n = np.arange(d)
        idx = [0] * (2 * k)
        i, j = self.pair
        nn, mm = np.meshgrid(n, n, indexing="ij")
        idx[i] = idx[j] = nn
        idx[k + i] = idx[k + j] = mm
        rho[tuple(idx)] = self.data
        return rho

    def matrix(self) -> np.ndarray:
        k = len(self.modes)
        return self.to_density().reshape(self.dim**k, self.dim**k)

    def reduce(self, keep) -> "TruncatedState":
        """Partial trace onto the modes listed in ``keep`` (names or indices)."""
        k = len(self.modes)
        keep = [self.modes.index(m) if isinstance(m, str) else m for m in keep]
        drop = [i for i in range(k) if i not in keep]
        if self.form == "ket":
            rho = np.tensordot(self.data, self.data.conj(), axes=(drop, drop))
        else:
            rho = self.to_density()
            for offset, i in enumerate(sorted(drop, reverse=True)):
                kk = k - offset
                rho = np.trace(rho, axis1=i, axis2=i + kk)
        return TruncatedState(
            self.cutoff,
            tuple(self.modes[i] for i in keep),
            "density",
            rho,
            tail_bound=self.tail_bound,
            warnings=list(self.warnings),
        )

    def paired_coefficients(self, i=0, j=1, others=None) -> np.ndarray:
        """Entries ``<n,n|rho|n',n'>`` on modes ``i, j`` (other modes at ``others``, default vacuum)."""
        d = self.dim
        k = len(self.modes)
        if self.form == "paired" and {i, j} == set(self.pair) and not others:
            return self.data
        n = np.arange(d)
        others = others or {}
        if self.form == "ket":
            idx = [others.get(m, 0) for m in range(k)]
            idx[i] = idx[j] = n
            v = self.data[tuple(idx)]
            return np.outer(v, v.conj())
        rho = self.to_density()
        nn, mm = np.meshgrid(n, n, indexing="ij")
        idx = [others.get(m, 0) for m in range(k)] * 2
        idx[i] = idx[j] = nn
        idx[k + i] = idx[k + j] = mm
        return rho[tuple(idx)]

    def min_eigenvalue(self) -> float:
        if self.form == "ket":
            return 0.0
        if self.form == "paired":
            return float(np.linalg.eigvalsh(self.data).min())
        return float(np.linalg.eigvalsh(self.matrix()).min())

    def hermiticity_error(self) -> float:
        mat = self.data if self.form == "paired" else (None if self.form == "ket" else self.matrix())
        if mat is None:
            return 0.0
        return float(np.max(np.abs(mat - mat.conj().T)))


def vacuum(cutoff: int, modes=("A1", "A2", "m")) -> TruncatedState:
    ket = np.zeros((cutoff + 1,) * len(modes), dtype=complex)
    ket[(0,) * len(modes)] = 1.0
    return TruncatedState(cutoff, tuple(modes), "ket", ket)


def _geometric_tail(ratio, cutoff):
    if ratio <= 0:
        return 0.0
    return ratio ** (cutoff + 1) / (1.0 - ratio)


def _log_factorials(n_max):
    return gammaln(np.arange(n_max + 1) + 1.0)


def coherent_tail(alpha, cutoff) -> float:
    """Upper bound ``|alpha|^(2(N+1)) / (N+1)!`` on the weight of ``|alpha>`` above the cutoff."""
    a2 = abs(alpha) ** 2
    if a2 == 0:
        return 0.0
    return math.exp((cutoff + 1) * math.log(a2) - math.lgamma(cutoff + 2))


def coherent_amplitudes(alpha, cutoff) -> np.ndarray:
    """``<n|alpha> = exp(-|alpha|^2/2) alpha^n / sqrt(n!)`` for ``n = 0..cutoff``."""
    alpha = complex(alpha)
    n = np.arange(cutoff + 1)
    out = np.zeros(cutoff + 1, dtype=complex)
    if alpha == 0:
        out[0] = 1.0
        return out
    r = abs(alpha)
    log_mag = -0.5 * r * r + n * math.log(r) - 0.5 * _log_factorials(cutoff)
    return np.exp(log_mag) * np.exp(1j * n * np.angle(alpha))


def choose_cutoff(p, T=1.0, amplitudes=(), tol=1e-12, minimum=20, maximum=400) -> int:
    """Smallest cutoff (at least ``minimum``) with state and coherent tails below ``tol``."""
    ratio = p * T
    amax = max((abs(a) for a in amplitudes), default=0.0)
    for n in range(minimum, maximum + 1):
        if _geometric_tail(ratio, n) < tol and coherent_tail(amax, n) < tol:
            return n
    raise TruncationError(f"no cutoff <= {maximum} meets tol={tol}", suggested_cutoff=maximum)


def _state_tail_warning(state, tol):
    if state.tail_bound > tol:
        state.warnings.append(f"truncation tail {state.tail_bound:.3g} exceeds {tol:g}")
    return state


def build_rho1(p, cutoff, tol=1e-12) -> TruncatedState:
    """State after the squeezing pulse: ``(1-p) (-1)^n (i sqrt p)^(n+n')`` on the A1-m pair."""
    if not 0 <= p < 1:
        raise ValueError("p must lie in [0, 1)")
    n = np.arange(cutoff + 1)
    z = (1j * math.sqrt(p)) ** np.add.outer(n, n)
    c = (1.0 - p) * ((-1.0) ** n)[:, None] * z
    st = TruncatedState(cutoff, ("A1", "A2", "m"), "paired", c, pair=(0, 2), tail_bound=_geometric_tail(p, cutoff))
    return _state_tail_warning(st, tol)


def eq25_coefficients(p, T, cutoff) -> np.ndarray:
    """``(1-p) (-sqrt(pT))^(n+n')``, the paired coefficients of the final two-photon block."""
    n = np.arange(cutoff + 1)
    return (1.0 - p) * (-math.sqrt(p * T)) ** np.add.outer(n, n)


def build_rho_pair(p, T, cutoff, tol=1e-12) -> TruncatedState:
    """Two-photon state ``(1-p) sum (-sqrt(pT))^(n+n') |n,n><n',n'|``.

    Its trace is ``(1-p)(1-(pT)^(N+1))/(1-pT)``, i.e. below one for ``T < 1``.
    """
    if not 0 <= p < 1:
        raise ValueError("p must lie in [0, 1)")
    if not 0 <= T <= 1:
        raise ValueError("T must lie in [0, 1]")
    c = eq25_coefficients(p, T, cutoff)
    st = TruncatedState(cutoff, ("A1", "A2"), "paired", c, pair=(0, 1), tail_bound=_geometric_tail(p * T, cutoff))
    return _state_tail_warning(st, tol)


def expected_pair_trace(p, T, cutoff):
    return (1.0 - p) * (1.0 - (p * T) ** (cutoff + 1)) / (1.0 - p * T)


# ---------------------------------------------------------------- operators on kets


def _lower(ket, axis):
    """Annihilation operator on one axis of a ket tensor."""
    d = ket.shape[axis]
    out = np.zeros_like(ket)
    src = [slice(None)] * ket.ndim
    dst = [slice(None)] * ket.ndim
    src[axis] = slice(1, d)
    dst[axis] = slice(0, d - 1)
    shape = [1] * ket.ndim
    shape[axis] = d - 1
    out[tuple(dst)] = ket[tuple(src)] * np.sqrt(np.arange(1, d)).reshape(shape)
    return out


def _raise(ket, axis):
    """Creation operator; amplitude pushed above the cutoff is dropped."""
    d = ket.shape[axis]
    out = np.zeros_like(ket)
    src = [slice(None)] * ket.ndim
    dst = [slice(None)] * ket.ndim
    src[axis] = slice(0, d - 1)
    dst[axis] = slice(1, d)
    shape = [1] * ket.ndim
    shape[axis] = d - 1
    out[tuple(dst)] = ket[tuple(src)] * np.sqrt(np.arange(1, d)).reshape(shape)
    return out


def _number_diag(shape, axes_weights):
    total = 0.0
    for axis, w in axes_weights:
        n = np.arange(shape[axis]).reshape([-1 if i == axis else 1 for i in range(len(shape))])
        total = total + w * n
    return total


def _exp_series(op, ket, coeff):
    """``exp(coeff * op) ket`` by Taylor series until the next term is below ``SERIES_TOL``."""
    result = ket.copy()
    term = ket
    for k in range(1, MAX_SERIES_TERMS):
        term = coeff * op(term) / k
        result = result + term
        if np.linalg.norm(term) < SERIES_TOL:
            return result
    raise ArithmeticError("operator exponential series did not converge")


def _as_ket(state):
    if state.form == "ket":
        return state.data
    raise ValueError("propagators act on pure three-mode kets; use vacuum() or apply_U1_vacuum()")


def apply_U1(state: TruncatedState, p: float) -> TruncatedState:
    """Squeezing-pulse propagator on modes (A1, m) of a three-mode ket.

    ``exp(-i sqrt(p) A1+ m+) exp(-g1tau (1 + nA1 + nm)) exp(i sqrt(p) A1 m)``
    with ``exp(-2 g1tau) = 1 - p``.
    """
    a1, m = state.modes.index("A1"), state.modes.index("m")
    ket = _as_ket(state)
    s = math.sqrt(p)
    ket = _exp_series(lambda v: _lower(_lower(v, a1), m), ket, 1j * s)
    diag = _number_diag(ket.shape, [(a1, 1.0), (m, 1.0)])
    ket = ket * (1.0 - p) ** (0.5 * (1.0 + diag))
    ket = _exp_series(lambda v: _raise(_raise(v, a1), m), ket, -1j * s)
    out = TruncatedState(state.cutoff, state.modes, "ket", ket, tail_bound=state.tail_bound + _geometric_tail(p, state.cutoff))
    return out


def apply_U1_vacuum(p: float, cutoff: int) -> TruncatedState:
    """The squeezing pulse acting on ``|000>`` of (A1, A2, m), by series application."""
    if not 0 <= p < 1:
        raise ValueError("p must lie in [0, 1)")
    return apply_U1(vacuum(cutoff), p)


def apply_U2(state: TruncatedState, g2tau: float) -> TruncatedState:
    """Read-out-pulse propagator on modes (A2, m).

    ``exp(-i sqrt(T') A2+ m) exp(g2tau (nA2 - nm)) exp(i sqrt(T') A2 m+)`` with
    ``T' = exp(2 g2tau) T = exp(2 g2tau) - 1``.
    """
    if not (g2tau >= 0 and math.isfinite(g2tau)):
        raise ValueError("g2tau must be finite and >= 0")
    a2, m = state.modes.index("A2"), state.modes.index("m")
    ket = _as_ket(state)
    s = math.sqrt(math.expm1(2.0 * g2tau))
    ket = _exp_series(lambda v: _raise(_lower(v, a2), m), ket, 1j * s)
    diag = _number_diag(ket.shape, [(a2, 1.0), (m, -1.0)])
    ket = ket * np.exp(g2tau * diag)
    ket = _exp_series(lambda v: _raise(_lower(v, m), a2), ket, -1j * s)
    return TruncatedState(state.cutoff, state.modes, "ket", ket, tail_bound=state.tail_bound, warnings=list(state.warnings))


def _loss_kraus(eta, d):
    """Stacked Kraus operators ``E_k[n-k, n] = sqrt(C(n,k) eta^(n-k) (1-eta)^k)``."""
    K = np.zeros((d, d, d))
    lf = _log_factorials(d - 1)
    for k in range(d):
        n = np.arange(k, d)
        logc = lf[n] - lf[k] - lf[n - k]
        with np.errstate(divide="ignore"):
            logw = logc + (n - k) * math.log(eta) + (k * math.log1p(-eta) if k else 0.0)
        K[k, n - k, n] = np.exp(0.5 * logw)
    return K


def apply_loss(state: TruncatedState, eta: float) -> TruncatedState:
    """Pure-loss channel of transmissivity ``eta`` on every mode of a one- or two-mode state."""
    if not 0 < eta <= 1:
        raise ValueError("eta must lie in (0, 1]")
    rho = state.to_density().astype(complex)
    k = len(state.modes)
    if eta == 1.0:
        return TruncatedState(state.cutoff, state.modes, "density", rho.copy(), tail_bound=state.tail_bound, warnings=list(state.warnings))
    d = state.dim
    K = _loss_kraus(eta, d)
    for axis in range(k):
        # rho' = sum_j E_j rho E_j^dagger on this mode
        rho = np.moveaxis(rho, (axis, k + axis), (0, 1))
        rest = rho.shape[2:]
        r2 = rho.reshape(d, d, -1)
        tmp = np.tensordot(K, r2, axes=(2, 0))  # (j, a, n', rest)
        new = np.moveaxis(np.tensordot(tmp, K, axes=([0, 2], [0, 2])), -1, 1)  # (a, b, rest)
        rho = np.moveaxis(new.reshape((d, d) + rest), (0, 1), (axis, k + axis))
    return TruncatedState(state.cutoff, state.modes, "density", rho, tail_bound=state.tail_bound, warnings=list(state.warnings))


# ---------------------------------------------------------------- probabilities


def _check_coherent_tail(state, amplitudes, tol):
    for a in amplitudes:
        tail = coherent_tail(a, state.cutoff)
        if tail > tol:
            n = state.cutoff
            while coherent_tail(a, n) > tol and n < 2000:
                n += 1
            raise TruncationError(f"coherent tail {tail:.3g} for |alpha|={abs(a):.3g} exceeds {tol:g}; use cutoff >= {n}", suggested_cutoff=n)


def oracle_joint_prob(state: TruncatedState, alpha, beta, tol=1e-12) -> float:
    """``<alpha, beta| rho |alpha, beta>`` by direct Fock-basis summation."""
    _check_coherent_tail(state, (alpha, beta), tol)
    u = coherent_amplitudes(alpha, state.cutoff)
    v = coherent_amplitudes(beta, state.cutoff)
    if state.form == "paired" and state.modes == ("A1", "A2"):
        w = u.conj() * v.conj()  # <alpha,beta|n,n>
        return float(np.real(w @ state.data @ w.conj()))
    if len(state.modes) != 2:
        raise ValueError("joint probability needs a two-mode state")
    if state.form == "ket":
        amp = np.einsum("a,b,ab->", u.conj(), v.conj(), state.data)
        return float(abs(amp) ** 2)
    rho = state.to_density()
    return float(np.real(np.einsum("a,b,abcd,c,d->", u.conj(), v.conj(), rho, u, v)))


def oracle_marginal_prob(state: TruncatedState, alpha, which_arm=0, tol=1e-12) -> float:
    """``<alpha| Tr_other(rho) |alpha>`` for arm ``which_arm`` (index or mode name)."""
    _check_coherent_tail(state, (alpha,), tol)
    u = coherent_amplitudes(alpha, state.cutoff)
    if state.form == "paired" and state.modes == ("A1", "A2"):
        diag = np.real(np.diag(state.data))
        return float(np.sum(diag * np.abs(u) ** 2))
    red = state.reduce([which_arm]).data
    return float(np.real(u.conj() @ red @ u))


def oracle_correlation(state, alpha, beta, tol=1e-12) -> float:
    return (
        4.0 * oracle_joint_prob(state, alpha, beta, tol)
        - 2.0 * (oracle_marginal_prob(state, alpha, 0, tol) + oracle_marginal_prob(state, beta, 1, tol))
        + 1.0
    )


def oracle_chsh(state, settings, tol=1e-12) -> float:
    s = settings
    return abs(
        oracle_correlation(state, s.alpha1, s.beta1, tol)
        + oracle_correlation(state, s.alpha1, s.beta2, tol)
        + oracle_correlation(state, s.alpha2, s.beta1, tol)
        - oracle_correlation(state, s.alpha2, s.beta2, tol)
    )


def lossy_q2(lossy_state, eta, alpha, beta, tol=1e-12) -> float:
    """Efficiency-``eta`` two-mode Q function from an explicitly attenuated state.

    A detector of efficiency ``eta`` behind a displacement ``alpha`` has the
    no-click probability of an ideal detector looking at the attenuated state
    displaced by ``sqrt(eta) alpha``, so the value is
    ``eta^2 <sqrt(eta) alpha, sqrt(eta) beta| rho_eta |...> / pi^2``.
    """
    s = math.sqrt(eta)
    return eta**2 * oracle_joint_prob(lossy_state, s * alpha, s * beta, tol) / math.pi**2


def lossy_q1(lossy_state, eta, alpha, which_arm=0, tol=1e-12) -> float:
    s = math.sqrt(eta)
    return eta * oracle_marginal_prob(lossy_state, s * alpha, which_arm, tol) / math.pi
