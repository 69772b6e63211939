"""Hamiltonian Monte Carlo for the per-neuron weight vectors.

Each neuron's weights and bias are stacked into one (K+1)-vector and drawn
from their conditional posterior with the No-U-Turn sampler: multinomial
selection along the trajectory and dual-averaging step size adaptation that
is switched off after burn-in.  The generic kernel uses an identity mass
matrix; neuron draws first rescale each coordinate by a fixed curvature bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .activations import act_eval, act_grad
from .exceptions import DimensionError

DIVERGENCE_THRESHOLD = 1000.0


@dataclass
class NutsConfig:
    target_accept: float = 0.8
    max_tree_depth: int = 10
    adapt_steps: int = 1000
    init_step_size: float = 0.1

    def __post_init__(self):
        if not 0 < self.target_accept < 1:
            raise ValueError("target_accept must lie in (0, 1)")
        if not 1 <= self.max_tree_depth <= 12:
            raise ValueError("max_tree_depth must be between 1 and 12")
        if self.adapt_steps < 0 or self.init_step_size <= 0:
            raise ValueError("adapt_steps must be >= 0 and init_step_size > 0")


@dataclass
class DualAveraging:
    """Step-size adaptation state (Hoffman and Gelman, 2014, algorithm 5)."""

    step_size: float = 0.1
    target_accept: float = 0.8
    gamma: float = 0.05
    t0: float = 10.0
    kappa: float = 0.75
    counter: int = 0
    h_bar: float = 0.0
    log_step_bar: float = 0.0
    mu: float = field(default=float("nan"))
    initialised: bool = False
    frozen: bool = False

    def start(self, step_size):
        self.step_size = float(step_size)
        self.mu = math.log(10.0 * self.step_size)
        self.log_step_bar = 0.0
        self.h_bar = 0.0
        self.counter = 0
        self.initialised = True

    def update(self, accept_stat):
        if self.frozen:
            return
        self.counter += 1
        m = self.counter
        w = 1.0 / (m + self.t0)
        self.h_bar = (1.0 - w) * self.h_bar + w * (self.target_accept - accept_stat)
        log_step = self.mu - math.sqrt(m) / self.gamma * self.h_bar
        eta = m ** (-self.kappa)
        self.log_step_bar = eta * log_step + (1.0 - eta) * self.log_step_bar
        self.step_size = math.exp(log_step)

    def freeze(self):
        if not self.frozen and self.counter > 0:
            self.step_size = math.exp(self.log_step_bar)
        self.frozen = True


@dataclass
class NutsDiagnostics:
    tree_depth: int
    n_leapfrog: int
    divergent: bool
    accept_stat: float
    step_size: float


def leapfrog(position, momentum, step_size, grad_fn, n_steps=1):
    """Half-step momentum, full-step position, half-step momentum; ``n_steps`` times.

    Returns ``(position, momentum, divergent)``; integration stops at the first
    non-finite value and flags a divergence.
    """
    if step_size == 0:
        raise ValueError("step_size must be non-zero")
    q = np.array(position, dtype=float)
    p = np.array(momentum, dtype=float)
    if n_steps == 0:
        return q, p, False
    g = grad_fn(q)
    for _ in range(n_steps):
        p = p + 0.5 * step_size * g
        q = q + step_size * p
        g = grad_fn(q)
        p = p + 0.5 * step_size * g
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(p))):
            return q, p, True
    return q, p, False


class _Target:
    """Wraps separate or joint density/gradient callables as one joint call."""

    def __init__(self, log_post_fn, grad_fn=None):
        self._lp = log_post_fn
        self._grad = grad_fn

    def __call__(self, q):
        if self._grad is None:
            lp, g = self._lp(q)
        else:
            lp, g = self._lp(q), self._grad(q)
        return float(lp), np.asarray(g, dtype=float)


class _Tree:
    __slots__ = ("q_minus", "p_minus", "g_minus", "q_plus", "p_plus", "g_plus",
                 "proposal", "proposal_lp", "proposal_g", "log_weight", "stop", "divergent",
                 "accept_sum", "n_leapfrog", "p_sum")


def _step(target, q, p, g, eps):
    p = p + 0.5 * eps * g
    q = q + eps * p
    lp, g = target(q)
    p = p + 0.5 * eps * g
    return q, p, g, lp


def _uturn(p_sum, p_minus, p_plus):
    return float(p_sum @ p_minus) <= 0 or float(p_sum @ p_plus) <= 0


def _build(target, q, p, g, direction, depth, eps, H0, rng):
    if depth == 0:
        q1, p1, g1, lp1 = _step(target, q, p, g, direction * eps)
        H = -lp1 + 0.5 * float(p1 @ p1)
        t = _Tree()
        bad = not (math.isfinite(H) and math.isfinite(float(g1 @ g1)))
        t.divergent = bad or (H - H0) > DIVERGENCE_THRESHOLD
        t.stop = t.divergent
        t.q_minus = t.q_plus = t.proposal = q1
        t.p_minus = t.p_plus = p1
        t.g_minus = t.g_plus = t.proposal_g = g1
        t.proposal_lp = lp1
        t.log_weight = -H if not bad else -math.inf
        t.accept_sum = 0.0 if bad else min(1.0, math.exp(min(0.0, H0 - H)))
        t.n_leapfrog = 1
        t.p_sum = p1
        return t

    inner = _build(target, q, p, g, direction, depth - 1, eps, H0, rng)
    if inner.stop:
        return inner
    if direction > 0:
        outer = _build(target, inner.q_plus, inner.p_plus, inner.g_plus, direction, depth - 1, eps, H0, rng)
    else:
        outer = _build(target, inner.q_minus, inner.p_minus, inner.g_minus, direction, depth - 1, eps, H0, rng)

    inner.accept_sum += outer.accept_sum
    inner.n_leapfrog += outer.n_leapfrog
    if outer.stop:
        inner.stop = True
        inner.divergent = inner.divergent or outer.divergent
        return inner

    total = np.logaddexp(inner.log_weight, outer.log_weight)
    if math.log(rng.random()) < outer.log_weight - total:
        inner.proposal, inner.proposal_lp, inner.proposal_g = outer.proposal, outer.proposal_lp, outer.proposal_g
    inner.log_weight = total
    if direction > 0:
        inner.q_plus, inner.p_plus, inner.g_plus = outer.q_plus, outer.p_plus, outer.g_plus
    else:
        inner.q_minus, inner.p_minus, inner.g_minus = outer.q_minus, outer.p_minus, outer.g_minus
    inner.p_sum = inner.p_sum + outer.p_sum
    inner.stop = _uturn(inner.p_sum, inner.p_minus, inner.p_plus)
    return inner


def find_reasonable_step_size(q, target, rng, step_size=1.0):
    """Double or halve the step until a single leapfrog crosses acceptance 1/2."""
    lp, g = target(q)
    p = rng.standard_normal(q.shape[0])
    H0 = -lp + 0.5 * float(p @ p)

    def log_accept(eps):
        q1, p1, _, lp1 = _step(target, q, p, g, eps)
        H = -lp1 + 0.5 * float(p1 @ p1)
        return H0 - H if math.isfinite(H) else -math.inf

    la = log_accept(step_size)
    direction = 1.0 if la > math.log(0.5) else -1.0
    for _ in range(60):
        if direction * la <= direction * math.log(0.5):
            break
        step_size *= 2.0**direction
        la = log_accept(step_size)
    return float(np.clip(step_size, 1e-8, 1e3))


class _Scaled:
    """Target in coordinates ``u = position / scale`` (a diagonal mass matrix)."""

    def __init__(self, target, scale):
        self.target = target
        self.scale = scale

    def __call__(self, u):
        lp, g = self.target(u * self.scale)
        return lp, g * self.scale


def nuts_draw(current, log_post_fn, grad_fn, config: NutsConfig, adapt_state: DualAveraging, rng,
              scale=None):
    """One NUTS transition from ``current``.

    ``log_post_fn`` may return ``(log_density, gradient)`` when ``grad_fn`` is
    None.  ``scale`` optionally rescales each coordinate, which is the same
    as using the diagonal mass matrix ``diag(scale ** -2)``; it must not
    depend on ``current``.  While ``adapt_state`` is not frozen its step size
    is updated after the transition.  A non-finite start or a divergent
    first step returns ``current`` with the divergence recorded.
    """
    x0 = np.array(current, dtype=float)
    target = _Target(log_post_fn, grad_fn)
    if scale is not None:
        scale = np.asarray(scale, dtype=float)
        target = _Scaled(target, scale)
        q0 = x0 / scale
    else:
        q0 = x0
    lp0, g0 = target(q0)
    if not (math.isfinite(lp0) and np.all(np.isfinite(g0))):
        return x0, NutsDiagnostics(0, 0, True, 0.0, adapt_state.step_size)
    if not adapt_state.initialised:
        adapt_state.target_accept = config.target_accept
        adapt_state.start(find_reasonable_step_size(q0, target, rng, config.init_step_size))

    eps = adapt_state.step_size
    p0 = rng.standard_normal(q0.shape[0])
    H0 = -lp0 + 0.5 * float(p0 @ p0)

    q_minus = q_plus = q0
    p_minus = p_plus = p0
    g_minus = g_plus = g0
    p_sum = p0
    proposal = q0
    log_weight = -H0
    accept_sum, n_leapfrog, depth, divergent = 0.0, 0, 0, False

    while depth < config.max_tree_depth:
        direction = 1 if rng.random() < 0.5 else -1
        if direction > 0:
            sub = _build(target, q_plus, p_plus, g_plus, 1, depth, eps, H0, rng)
        else:
            sub = _build(target, q_minus, p_minus, g_minus, -1, depth, eps, H0, rng)
        accept_sum += sub.accept_sum
        n_leapfrog += sub.n_leapfrog
        depth += 1
        if sub.stop:
            divergent = sub.divergent
            break
        # Biased progressive sampling favours the new subtree.
        if math.log(rng.random()) < sub.log_weight - log_weight:
            proposal = sub.proposal
        log_weight = np.logaddexp(log_weight, sub.log_weight)
        if direction > 0:
            q_plus, p_plus, g_plus = sub.q_plus, sub.p_plus, sub.g_plus
        else:
            q_minus, p_minus, g_minus = sub.q_minus, sub.p_minus, sub.g_minus
        p_sum = p_sum + sub.p_sum
        if _uturn(p_sum, p_minus, p_plus):
            break

    accept_stat = accept_sum / max(n_leapfrog, 1)
    if not adapt_state.frozen:
        adapt_state.update(accept_stat)
    out = proposal if scale is None else proposal * scale
    if not np.all(np.isfinite(out)):
        out = x0
    return np.array(out), NutsDiagnostics(depth, n_leapfrog, divergent, accept_stat, eps)


def hmc_draw(current, log_post_fn, grad_fn, step_size, n_steps, rng):
    """Fixed-length HMC with a Metropolis correction.

    Kept as a simple reference kernel for tests; the sampler uses NUTS.
    """
    q0 = np.array(current, dtype=float)
    p0 = rng.standard_normal(q0.shape[0])
    q1, p1, divergent = leapfrog(q0, p0, step_size, grad_fn, n_steps)
    if divergent:
        return q0, False
    log_eta = (log_post_fn(q1) - 0.5 * p1 @ p1) - (log_post_fn(q0) - 0.5 * p0 @ p0)
    if math.isfinite(log_eta) and math.log(rng.random()) < min(0.0, log_eta):
        return q1, True
    return q0, False


# -- neuron conditional posterior ------------------------------------------

def _neuron_terms(kappa_aug, q, residual, state, X, weights):
    kappa_aug = np.asarray(kappa_aug, dtype=float)
    K = state.K
    if kappa_aug.shape != (K + 1,):
        raise DimensionError(f"kappa_aug must have {K + 1} entries, got {kappa_aug.shape}")
    if X.shape[1] != K or residual.shape[0] != X.shape[0]:
        raise DimensionError("data and residual do not match the state dimensions")
    prec = np.append(1.0 / state.hs_kappa.prior_variance()[q], 1.0)
    kind = int(state.delta[q])
    beta_q = float(state.beta[q])
    z = X @ kappa_aug[:K] + kappa_aug[K]
    return kappa_aug, prec, kind, beta_q, z


def _weights(state, T):
    v = state.sv.variances
    return 1.0 / (v if v.shape[0] == T else np.full(T, v[-1] if v.size else 1.0))


def neuron_log_posterior(kappa_aug, q, residual, state, data) -> float:
    """Log conditional density of (kappa_q, zeta_q), dropping constants.

    The additive constant omitted is the Gaussian normalisation of the
    likelihood and of the N(0, prior variance) priors; it depends on the
    volatility and shrinkage states but not on ``kappa_aug``.
    """
    X = np.asarray(data.X, dtype=float)
    residual = np.asarray(residual, dtype=float)
    w = _weights(state, X.shape[0])
    theta, prec, kind, beta_q, z = _neuron_terms(kappa_aug, q, residual, state, X, w)
    r = residual - beta_q * act_eval(kind, z)
    return float(-0.5 * np.sum(w * r * r) - 0.5 * np.sum(prec * theta * theta))


def neuron_grad(kappa_aug, q, residual, state, data) -> np.ndarray:
    X = np.asarray(data.X, dtype=float)
    residual = np.asarray(residual, dtype=float)
    w = _weights(state, X.shape[0])
    theta, prec, kind, beta_q, z = _neuron_terms(kappa_aug, q, residual, state, X, w)
    r = residual - beta_q * act_eval(kind, z)
    v = w * r * beta_q * act_grad(kind, z)
    return np.append(X.T @ v, v.sum()) - prec * theta


class NeuronTarget:
    """Fast joint log density and gradient for one neuron, data fixed.

    Equivalent to :func:`neuron_log_posterior` and :func:`neuron_grad` but
    precomputes everything that does not change along a trajectory.
    """

    def __init__(self, q, residual, state, X, weights):
        self.X = X
        self.K = X.shape[1]
        self.residual = residual
        self.w = weights
        self.prec = np.append(1.0 / state.hs_kappa.prior_variance()[q], 1.0)
        self.kind = int(state.delta[q])
        self.beta_q = float(state.beta[q])
        self._h = _ACT[self.kind]

    def scale(self) -> np.ndarray:
        """Per-coordinate scale for NUTS from a curvature bound.

        Each coordinate's precision is bounded above by its prior precision
        plus ``beta_q^2 max(h')^2 sum_t w_t x_tj^2``.  The bound uses only
        quantities held fixed during the transition, so it is a valid mass
        matrix.
        """
        c = self.beta_q**2 * _MAX_SLOPE_SQ[self.kind]
        data = c * np.append(self.w @ (self.X * self.X), self.w.sum())
        return 1.0 / np.sqrt(self.prec + data)

    def __call__(self, theta):
        z = self.X @ theta[:-1] + theta[-1]
        h, dh = self._h(z)
        r = self.residual - self.beta_q * h
        wr = self.w * r
        pt = self.prec * theta
        lp = -0.5 * float(wr @ r) - 0.5 * float(pt @ theta)
        v = wr * (self.beta_q * dh)
        grad = np.empty_like(theta)
        grad[:-1] = self.X.T @ v
        grad[-1] = v.sum()
        return lp, grad - pt


def _pair_sigmoid(z):
    s = np.exp(-np.logaddexp(0.0, -z))
    return s, s * (1.0 - s)


def _pair_tanh(z):
    t = np.tanh(z)
    return t, 1.0 - t * t


def _pair_relu(z):
    neg = z < 0
    return np.where(neg, 0.0, z), np.where(neg, 0.0, 1.0)


def _pair_leaky(z):
    neg = z < 0
    return np.where(neg, 0.01 * z, z), np.where(neg, 0.01, 1.0)


_MAX_SLOPE_SQ = {1: 1.0, 2: 1.0 / 16.0, 3: 1.0, 4: 1.0}
_ACT = {1: _pair_leaky, 2: _pair_sigmoid, 3: _pair_relu, 4: _pair_tanh}


def neuron_nuts_draw(target: NeuronTarget, current, config: NutsConfig,
                     adapt_state: DualAveraging, rng):
    """Compiled equivalent of ``nuts_draw(current, target, None, ..., scale=target.scale())``.

    Consumes one integer from ``rng`` to seed the compiled kernel.
    """
    from . import _nuts_jit as jit

    x0 = np.array(current, dtype=float)
    scale = target.scale()
    args = (scale, target.X, target.residual, target.w, target.prec, target.kind, target.beta_q)
    jit.seed(int(rng.integers(2**31 - 1)))
    u0 = x0 / scale
    if not adapt_state.initialised:
        adapt_state.target_accept = config.target_accept
        adapt_state.start(jit.find_step_size(u0, *args, config.init_step_size))
    eps = adapt_state.step_size
    u, depth, n_leap, divergent, accept = jit.transition(u0, eps, config.max_tree_depth, *args)
    if n_leap > 0 and not adapt_state.frozen:
        adapt_state.update(accept)
    out = u * scale
    if not np.all(np.isfinite(out)):
        out = x0
    return out, NutsDiagnostics(int(depth), int(n_leap), bool(divergent), float(accept), eps)
