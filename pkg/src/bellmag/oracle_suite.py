"""Randomised comparison of the closed forms against the Fock-basis oracle."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import core_model as cm
from . import fock_oracle as fo


@dataclass
class CheckResult:
    name: str
    tol: float
    max_dev: float = 0.0
    worst: dict = field(default_factory=dict)
    count: int = 0

    @property
    def passed(self) -> bool:
        return self.max_dev <= self.tol

    def record(self, dev, **where):
        self.count += 1
        if dev > self.max_dev or not self.worst:
            self.max_dev = max(self.max_dev, dev)
            self.worst = where


def _random_amplitude(rng, bound):
    return complex(bound * math.sqrt(rng.uniform()) * np.exp(2j * math.pi * rng.uniform()))


def check_pair_probabilities(samples, rng, tol=1e-9, p_max=0.8, amp_max=2.0):
    """Joint, marginal, correlation and S on random ``(p, T, settings)`` tuples."""
    checks = {k: CheckResult(k, tol) for k in ("joint", "marginal", "correlation", "chsh")}
    for _ in range(samples):
        p = float(rng.uniform(0.0, p_max))
        T = float(rng.uniform(0.0, 1.0))
        amps = [_random_amplitude(rng, amp_max) for _ in range(4)]
        s = cm.MeasurementSettings(*amps)
        where = dict(p=p, T=T, alpha1=amps[0], alpha2=amps[1], beta1=amps[2], beta2=amps[3])
        state = fo.build_rho_pair(p, T, fo.choose_cutoff(p, T, amps))
        a, b = s.alpha1, s.beta1
        checks["joint"].record(abs(fo.oracle_joint_prob(state, a, b) - float(cm.joint_click_prob(p, T, a, b))), **where)
        dev = max(
            abs(fo.oracle_marginal_prob(state, a, 0) - float(cm.marginal_click_prob(p, T, a))),
            abs(fo.oracle_marginal_prob(state, b, 1) - float(cm.marginal_click_prob(p, T, b))),
        )
        checks["marginal"].record(dev, **where)
        checks["correlation"].record(abs(fo.oracle_correlation(state, a, b) - float(cm.correlation(p, T, a, b))), **where)
        checks["chsh"].record(abs(fo.oracle_chsh(state, s) - cm.chsh_S(p, T, s)), **where)
    return list(checks.values())


def chain_deviation(p, g2tau, guard=fo.GUARD_BAND):
    """Largest deviation of the propagated magnon-vacuum block from the closed-form coefficients.

    Entries within ``guard`` of the cutoff are excluded.
    """
    T = cm.T_from_g2tau(g2tau)
    N = fo.choose_cutoff(p, 1.0) + guard
    ket = fo.apply_U2(fo.apply_U1_vacuum(p, N), g2tau).data
    keep = N + 1 - guard
    psi = ket[:keep, :keep, 0]  # magnon vacuum, guard band dropped
    # block[a,b,c,d] = psi[a,b] psi[c,d]^*; expected is c[n,n'] on a=b, c=d and zero elsewhere
    diag = np.diagonal(psi)
    dev_diag = np.max(np.abs(np.outer(diag, diag.conj()) - fo.eq25_coefficients(p, T, keep - 1)))
    off = np.abs(psi - np.diag(diag))
    dev_off = float(off.max()) * float(np.abs(psi).max())
    return float(max(dev_diag, dev_off))


def check_propagator_chain(samples, rng, tol=1e-9, p_max=0.6, g2tau_max=3.0):
    res = CheckResult("propagator_chain", tol)
    for _ in range(samples):
        p = float(rng.uniform(0.0, p_max))
        g2tau = float(rng.uniform(0.0, g2tau_max))
        res.record(chain_deviation(p, g2tau), p=p, g2tau=g2tau)
    return res


def check_loss_channel(samples, rng, tol=1e-8, p_max=0.4, amp_max=1.5):
    """Efficiency-dependent Q functions against the explicitly attenuated state (T = 1)."""
    res = CheckResult("loss_channel", tol)
    for _ in range(samples):
        p = float(rng.uniform(0.0, p_max))
        eta = float(rng.uniform(0.5, 1.0))
        a, b = _random_amplitude(rng, amp_max), _random_amplitude(rng, amp_max)
        N = fo.choose_cutoff(p, 1.0, (a, b))
        lossy = fo.apply_loss(fo.build_rho_pair(p, 1.0, N), eta)
        dev = max(
            abs(fo.lossy_q2(lossy, eta, a, b) - float(cm.q2_eta(p, eta, a, b))),
            abs(fo.lossy_q1(lossy, eta, a, 0) - float(cm.q1_eta(p, eta, a))),
            abs(fo.lossy_q1(lossy, eta, b, 1) - float(cm.q1_eta(p, eta, b))),
        )
        res.record(dev, p=p, eta=eta, alpha=a, beta=b)
    return res


def run_suite(samples=200, seed=0, tol=1e-9, chain_samples=None, loss_samples=None, loss_tol=1e-8):
    """All oracle checks on one seeded sample; returns a list of :class:`CheckResult`."""
    rng = np.random.default_rng(seed)
    if chain_samples is None:
        chain_samples = min(samples, 10)
    if loss_samples is None:
        loss_samples = min(samples, 3)
    results = check_pair_probabilities(samples, rng, tol)
    results.append(check_propagator_chain(chain_samples, rng, tol))
    results.append(check_loss_channel(loss_samples, rng, min(tol, loss_tol)))
    return results
