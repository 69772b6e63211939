"""Gibbs updates for the horseshoe and multiplicative gamma process priors.

Every gamma-type draw uses the (shape, rate) parameterisation.  An inverse
gamma IG(a, b) has density proportional to x^(-a-1) exp(-b / x) and is drawn
as ``b / Gamma(a, 1)``.  The ``*_params`` helpers return the conditional
parameters without drawing, so tests can check them directly.
"""

from __future__ import annotations

import numpy as np

from .exceptions import DimensionError, InsufficientDrawsError, StateCorruptionError
from .model import HorseshoeState, MgpState

# Draws are clipped into this range to keep downstream precisions finite.
SCALE_FLOOR = 1e-12
SCALE_CEIL = 1e12


def inv_gamma(shape, rate, rng):
    """Draw IG(shape, rate); arrays broadcast."""
    g = rng.standard_gamma(shape, size=np.broadcast(shape, rate).shape)
    return np.clip(np.asarray(rate) / np.maximum(g, 1e-300), SCALE_FLOOR, SCALE_CEIL)


def gamma_rate(shape, rate, rng):
    """Draw Gamma(shape, rate) (mean shape / rate)."""
    return rng.standard_gamma(shape, size=np.broadcast(shape, rate).shape) / np.asarray(rate)


# -- horseshoe ---------------------------------------------------------------

def local_scale_params(coeffs, global_scale_sq, aux_local):
    """IG parameters of each local scale phi_j^2 given everything else."""
    coeffs = np.asarray(coeffs, dtype=float)
    g = np.asarray(global_scale_sq)[..., None] if coeffs.ndim == 2 else global_scale_sq
    return 1.0, 1.0 / aux_local + coeffs**2 / (2.0 * g)


def global_scale_params(coeffs, local_scales_sq, aux_global):
    """IG parameters of the global scale lambda^2: shape (n+1)/2."""
    coeffs = np.asarray(coeffs, dtype=float)
    n = coeffs.shape[-1]
    return (n + 1) / 2.0, 1.0 / aux_global + np.sum(coeffs**2 / (2.0 * local_scales_sq), axis=-1)


def aux_local_params(local_scales_sq):
    return 1.0, 1.0 + 1.0 / local_scales_sq


def aux_global_params(global_scale_sq):
    return 1.0, 1.0 + 1.0 / global_scale_sq


def horseshoe_update(coeffs, state: HorseshoeState, rng) -> HorseshoeState:
    """One Gibbs pass over the auxiliary-variable horseshoe hierarchy.

    Draw order: local scales, global scale, local auxiliaries, global
    auxiliary, each conditional on the freshest values.  Works on a single
    block (coeffs of shape (n,)) or a stack of blocks (coeffs (B, n)) where
    each row has its own global scale.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape != state.local_scales_sq.shape:
        raise DimensionError(
            f"coefficient block {coeffs.shape} does not match scales {state.local_scales_sq.shape}"
        )
    try:
        state.validate()
    except (StateCorruptionError, DimensionError) as err:
        raise StateCorruptionError(f"incoming horseshoe state is corrupt: {err}") from err

    local = inv_gamma(*local_scale_params(coeffs, state.global_scale_sq, state.aux_local), rng)
    glob = inv_gamma(*global_scale_params(coeffs, local, state.aux_global), rng)
    aux_local = inv_gamma(*aux_local_params(local), rng)
    aux_global = inv_gamma(*aux_global_params(glob), rng)
    if not state.is_stack:
        glob, aux_global = float(glob), float(aux_global)
    return HorseshoeState(glob, local, aux_local, aux_global)


# -- multiplicative gamma process -------------------------------------------

def mgp_conditional_params(beta, components, r: int, a1: float, a2: float):
    """Gamma (shape, rate) of component ``r`` (0-based) given the others.

    Only neurons q >= r involve component r; each contributes its loading
    squared times the precision product with component r left out.
    """
    beta = np.asarray(beta, dtype=float)
    components = np.asarray(components, dtype=float)
    Q = beta.shape[0]
    loo = np.cumprod(components) / components[r]
    tail = slice(r, Q)
    shape = (a1 if r == 0 else a2) + (Q - r) / 2.0
    rate = 1.0 + 0.5 * np.sum(loo[tail] * beta[tail] ** 2)
    return shape, rate


def mgp_update(beta, state: MgpState, rng) -> MgpState:
    """Sequential Gibbs update of every MGP component."""
    beta = np.asarray(beta, dtype=float)
    if beta.shape != state.components.shape:
        raise DimensionError(f"beta has {beta.shape[0]} entries, MGP has {state.Q}")
    comps = state.components.copy()
    for r in range(state.Q):
        shape, rate = mgp_conditional_params(beta, comps, r, state.a1, state.a2)
        comps[r] = max(float(gamma_rate(shape, rate, rng)), 1e-300)
    return MgpState(comps, state.a1, state.a2)


def mgp_prior_draw(Q: int, a1: float, a2: float, rng, size=None) -> np.ndarray:
    """Components drawn from the prior; shape (size, Q) or (Q,)."""
    shape = (Q,) if size is None else (size, Q)
    comps = rng.standard_gamma(a2, size=shape)
    comps[..., 0] = rng.standard_gamma(a1, size=shape[:-1])
    return comps


def effective_neurons(mgp: MgpState, tau: float) -> int:
    """Number of neurons whose prior variance exceeds ``tau``."""
    return int(np.sum(mgp.variances > tau))


def active_neurons_ci(beta_draws, lower=5.0, upper=95.0) -> int:
    """Neurons whose 5th-95th percentile posterior interval excludes zero.

    The interval is closed: an interval touching zero counts as containing it.
    """
    beta_draws = np.asarray(beta_draws, dtype=float)
    if beta_draws.ndim != 2:
        raise DimensionError("beta_draws must be (S, Q)")
    if beta_draws.shape[0] < 20:
        raise InsufficientDrawsError(f"need at least 20 draws, got {beta_draws.shape[0]}")
    lo, hi = np.percentile(beta_draws, [lower, upper], axis=0)
    return int(np.sum((lo > 0) | (hi < 0)))
