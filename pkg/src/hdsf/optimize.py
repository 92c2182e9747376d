"""Per-instance update rules: plain SGD and the Nesterov-accelerated scheme.

The functions here operate on one rating at a time and are the readable
reference form. Trainers call the batched equivalents in ``_kernels``.
"""

from __future__ import annotations

import numpy as np

from .core import FactorModel, RatingTriple, TrainingDivergedError, _check_index


def analytic_gradient(model: FactorModel, t: RatingTriple, lam: float) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of the instance loss w.r.t. ``m_u`` and ``n_v``."""
    u, v, r = t
    _check_index(model, u, v)
    mu, nv = model.m[u], model.n[v]
    e = r - float(mu @ nv)
    return -e * nv + lam * mu, -e * mu + lam * nv


def _ensure_finite(model: FactorModel, t: RatingTriple) -> None:
    u, v, _ = t
    if not (np.isfinite(model.m[u]).all() and np.isfinite(model.n[v]).all()):
        raise TrainingDivergedError(*t)


def sgd_step(model: FactorModel, t: RatingTriple, cfg) -> None:
    """One SGD update of ``m_u`` and ``n_v``; both sides read the pre-update vectors.

    ``cfg`` supplies ``eta`` and ``lam``; ``gamma`` is ignored.
    """
    eta, lam = cfg.eta, cfg.lam
    u, v, r = t
    _check_index(model, u, v)
    mu = model.m[u].copy()
    nv = model.n[v].copy()
    e = r - float(mu @ nv)
    model.m[u] = mu + eta * (e * nv - lam * mu)
    model.n[v] = nv + eta * (e * mu - lam * nv)
    _ensure_finite(model, t)


def nag_step(model: FactorModel, t: RatingTriple, cfg) -> None:
    """One Nesterov update.

    The gradient is taken at the lookahead point ``(m_u + gamma*phi_u,
    n_v + gamma*psi_v)`` with a single shared error term, then the momentum
    rows absorb it and the factors move by the new momentum.
    """
    eta, lam, gamma = cfg.eta, cfg.lam, cfg.gamma
    u, v, r = t
    _check_index(model, u, v)
    mt = model.m[u] + gamma * model.phi[u]
    nt = model.n[v] + gamma * model.psi[v]
    e = r - float(mt @ nt)
    model.phi[u] = gamma * model.phi[u] - eta * (-e * nt + lam * mt)
    model.psi[v] = gamma * model.psi[v] - eta * (-e * mt + lam * nt)
    model.m[u] = model.m[u] + model.phi[u]
    model.n[v] = model.n[v] + model.psi[v]
    _ensure_finite(model, t)


def apply_step(model: FactorModel, t: RatingTriple, cfg) -> None:
    """Dispatch on ``cfg``: NAG for a2psgd/serial-nag (or when forced), else SGD."""
    if uses_nag(cfg):
        nag_step(model, t, cfg)
    else:
        sgd_step(model, t, cfg)


def uses_nag(cfg) -> bool:
    if cfg.optimizer is not None:
        return cfg.optimizer == "nag"
    return cfg.algorithm in ("a2psgd", "serial-nag")
