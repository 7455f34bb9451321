"""Full conditional distributions and Gibbs / Metropolis updates.

Each ``fcd_*`` function returns the parameters of a full conditional without
drawing from it; the matching ``update_*`` function draws and writes the result
into the state in place. Residuals are always formed fresh from the current
state, never carried incrementally.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln, ndtr, ndtri

from .models import draw_categorical, draw_invgamma, draw_log_dirichlet, eta, latent_distances

TAIL_SWITCH = -5.0


# ------------------------------------------------------------ truncated normal

def sample_truncated_normal(mean, positive, rng):
    """N(mean, 1) truncated to (0, inf) where ``positive`` else to (-inf, 0].

    Both sides reduce to drawing x ~ N(m, 1) on x > 0 with m = +-mean. For
    m >= -5 an inverse-CDF draw on the survival scale is used; deeper in the
    tail an exponential-proposal rejection sampler avoids underflow.
    """
    mean = np.asarray(mean, dtype=np.float64)
    positive = np.broadcast_to(np.asarray(positive, dtype=bool), mean.shape)
    m = np.where(positive, mean, -mean)
    u = rng.random(m.shape)
    u = np.where(u > 0.0, u, 5e-324)
    x = m - ndtri(u * ndtr(m))
    tail = m < TAIL_SWITCH
    if np.any(tail):
        x[tail] = _tail_positive(-m[tail], rng) + m[tail]
    return np.where(positive, x, -x)


def _tail_positive(a, rng):
    """Standard normal truncated to (a, inf), a > 0, by exponential rejection."""
    a = np.asarray(a, dtype=np.float64)
    rate = 0.5 * (a + np.sqrt(a * a + 4.0))
    out = np.empty_like(a)
    todo = np.arange(a.size)
    while todo.size:
        prop = a[todo] + rng.exponential(1.0, todo.size) / rate[todo]
        accept = rng.random(todo.size) <= np.exp(-0.5 * (prop - rate[todo]) ** 2)
        out[todo[accept]] = prop[accept]
        todo = todo[~accept]
    return out


def update_z(model, state, y, X, rng):
    return sample_truncated_normal(eta(model, state, X), np.asarray(y) == 1, rng)


# ------------------------------------------------------------ helpers

def residual(model, state, z, X, exclude):
    return z - eta(model, state, X, exclude=exclude)


def to_square(model, r):
    """(K, D) dyad array to a (K, n, n) symmetric array with zero diagonal."""
    out = np.zeros((r.shape[0], model.n, model.n))
    out[:, model.iu, model.ju] = r
    out[:, model.ju, model.iu] = r
    return out


def node_sums(model, r):
    """sum_{j != i} r_{ij} for every node, shape (n, K)."""
    n = model.n
    return np.stack([np.bincount(model.iu, rk, n) + np.bincount(model.ju, rk, n) for rk in r],
                    axis=1)


def _normal(rng, mean, var):
    return mean + np.sqrt(var) * rng.standard_normal(np.shape(mean))


# ------------------------------------------------------------ intercepts and effects

def fcd_zeta(model, state, z, X=None):
    r = residual(model, state, z, X, ("zeta",))
    V2 = 1.0 / (1.0 / state.omega2 + model.K * model.D)
    return V2 * r.sum(), V2


def update_zeta(model, state, z, X, rng):
    M, V2 = fcd_zeta(model, state, z, X)
    state.zeta = float(_normal(rng, M, V2))


def fcd_mu(model, state, z, X=None):
    r = residual(model, state, z, X, ("mu",))
    V2 = 1.0 / (1.0 / state.sigma2 + model.D)
    return V2 * r.sum(axis=1), V2


def update_mu(model, state, z, X, rng):
    M, V2 = fcd_mu(model, state, z, X)
    state.mu = _normal(rng, M, V2)


def fcd_delta_site(model, state, z, X, i, k):
    """Single-site conditional of delta_{i,k}."""
    r = residual(model, state, z, X, ("delta",))[k]
    others = np.delete(np.arange(model.n), i)
    rij = r[model.pair_index[i, others]]
    V2 = 1.0 / (1.0 / state.tau2 + model.n - 1)
    M = V2 * (state.vartheta[i] / state.tau2 + np.sum(rij - state.delta[others, k]))
    return M, V2


def update_delta(model, state, z, X, rng):
    """Sequential single-site Gibbs over nodes, vectorized over layers."""
    r = residual(model, state, z, X, ("delta",))
    R = node_sums(model, r)
    V2 = 1.0 / (1.0 / state.tau2 + model.n - 1)
    sd = np.sqrt(V2)
    delta = state.delta
    S = delta.sum(axis=0)
    prior_pull = state.vartheta / state.tau2
    noise = rng.standard_normal(delta.shape)
    for i in range(model.n):
        old = delta[i].copy()
        M = V2 * (prior_pull[i] + R[i] - (S - old))
        delta[i] = M + sd * noise[i]
        S += delta[i] - old


def fcd_vartheta(model, state):
    V2 = 1.0 / (1.0 / state.kappa2 + model.K / state.tau2)
    return V2 * state.delta.sum(axis=1) / state.tau2, V2


def update_vartheta(model, state, rng):
    M, V2 = fcd_vartheta(model, state)
    state.vartheta = _normal(rng, M, V2)


def fcd_beta(model, state, z, X):
    """Per-layer Gaussian conditional of beta_k: means (K, p) and shared covariance."""
    r = residual(model, state, z, X, ("beta",))
    X = np.asarray(X)
    prec = np.eye(model.p) / state.varsigma2 + X.T @ X
    V = np.linalg.inv(prec)
    V = 0.5 * (V + V.T)
    return (r @ X) @ V, V


def update_beta(model, state, z, X, rng):
    r = residual(model, state, z, X, ("beta",))
    X = np.asarray(X)
    prec = np.eye(model.p) / state.varsigma2 + X.T @ X
    L = np.linalg.cholesky(prec)
    b = r @ X  # (K, p)
    # mean = prec^{-1} b; noise with covariance prec^{-1} via L^{-T}
    mean = np.linalg.solve(L.T, np.linalg.solve(L, b.T)).T
    noise = np.linalg.solve(L.T, rng.standard_normal((model.p, model.K))).T
    state.beta = mean + noise


# ------------------------------------------------------------ bilinear latent term

def fcd_bilinear_u(model, state, z, X, i):
    Rb = to_square(model, residual(model, state, z, X, ("latent",)))
    return _bilinear_u_params(model, state, Rb, i)


def _bilinear_u_params(model, state, Rb, i):
    others = np.delete(np.arange(model.n), i)
    Uo = state.U[others]
    lam = state.lam
    prec = np.eye(model.d) + np.sum(lam ** 2) * (Uo.T @ Uo)
    b = Uo.T @ (lam @ Rb[:, i, others])
    V = np.linalg.inv(prec)
    V = 0.5 * (V + V.T)
    return V @ b, V


def fcd_bilinear_lam(model, state, z, X):
    r = residual(model, state, z, X, ("latent",))
    s = np.sum(state.U[model.iu] * state.U[model.ju], axis=1)
    V2 = 1.0 / (1.0 / state.upsilon2 + s @ s)
    return V2 * (r @ s), np.full(model.K, V2)


def update_bilinear(model, state, z, X, rng):
    Rb = to_square(model, residual(model, state, z, X, ("latent",)))
    for i in range(model.n):
        M, V = _bilinear_u_params(model, state, Rb, i)
        state.U[i] = M + np.linalg.cholesky(V) @ rng.standard_normal(model.d)
    M, V2 = fcd_bilinear_lam(model, state, z, X)
    state.lam = _normal(rng, M, V2)


# ------------------------------------------------------------ latent distance term

@dataclass
class AdaptationState:
    """Log proposal scales for the latent-distance Metropolis steps."""
    log_step_u: np.ndarray
    log_step_lam: np.ndarray
    t: int = 0
    eta0: float = 0.05
    target_u: float = 0.234
    target_lam: float = 0.44
    log_min: float = float(np.log(1e-3))
    log_max: float = float(np.log(10.0))
    adapting: bool = True
    accepted_u: np.ndarray = field(default=None)
    accepted_lam: np.ndarray = field(default=None)
    proposed: int = 0

    @classmethod
    def initial(cls, n, K, log_step=0.0, **kw):
        return cls(np.full(n, log_step), np.full(K, log_step), accepted_u=np.zeros(n),
                   accepted_lam=np.zeros(K), **kw)

    def record(self, acc_u, acc_lam):
        """Count acceptances and, while adapting, take one Robbins-Monro step."""
        self.accepted_u += acc_u
        self.accepted_lam += acc_lam
        self.proposed += 1
        if not self.adapting:
            return
        gain = self.eta0 / np.sqrt(1.0 + self.t)
        self.log_step_u = np.clip(self.log_step_u + gain * (acc_u - self.target_u),
                                  self.log_min, self.log_max)
        self.log_step_lam = np.clip(self.log_step_lam + gain * (acc_lam - self.target_lam),
                                    self.log_min, self.log_max)
        self.t += 1

    def freeze(self):
        self.adapting = False
        self.accepted_u[:] = 0
        self.accepted_lam[:] = 0
        self.proposed = 0

    def acceptance_rates(self):
        m = max(self.proposed, 1)
        return self.accepted_u / m, self.accepted_lam / m


def log_fcd_distance_u(model, state, z, X, i, u):
    """Unnormalized log conditional of u_i at the point ``u``."""
    Rb = to_square(model, residual(model, state, z, X, ("latent",)))
    others = np.delete(np.arange(model.n), i)
    w = np.exp(state.lam) @ Rb[:, i, others]
    return _distance_u_logf(u, state.U[others], w, np.sum(np.exp(2.0 * state.lam)))


def _distance_u_logf(u, Uo, w, e2):
    dist = np.sqrt(np.sum((Uo - u) ** 2, axis=1))
    return -w @ dist - 0.5 * e2 * (dist @ dist) - 0.5 * (u @ u)


def distance_lam_stats(model, state, z, X):
    """S1_k = sum_dyads r d and S2 = sum_dyads d^2 for the scale conditionals."""
    r = residual(model, state, z, X, ("latent",))
    dist = np.sqrt(np.sum((state.U[model.iu] - state.U[model.ju]) ** 2, axis=1))
    return r @ dist, dist @ dist


def log_fcd_distance_lam(lam, S1, S2, upsilon2):
    return -np.exp(lam) * S1 - 0.5 * np.exp(2.0 * lam) * S2 - 0.5 * lam * lam / upsilon2


def update_distance(model, state, z, X, rng, adapt):
    """Random-walk Metropolis for every u_i (scale s_i / sqrt(d)), then every lambda_k."""
    Rb = to_square(model, residual(model, state, z, X, ("latent",)))
    e_lam = np.exp(state.lam)
    e2 = np.sum(e_lam ** 2)
    n, d = model.n, model.d
    steps = np.exp(adapt.log_step_u) / np.sqrt(d)
    noise = rng.standard_normal((n, d))
    log_u = np.log(rng.random(n))
    acc_u = np.zeros(n)
    idx = np.arange(n)
    for i in range(n):
        others = idx != i
        Uo = state.U[others]
        w = e_lam @ Rb[:, i, others]
        cur = state.U[i]
        prop = cur + steps[i] * noise[i]
        delta_logf = _distance_u_logf(prop, Uo, w, e2) - _distance_u_logf(cur, Uo, w, e2)
        if log_u[i] < delta_logf:
            state.U[i] = prop
            acc_u[i] = 1.0
    S1, S2 = distance_lam_stats(model, state, z, X)
    prop = state.lam + np.exp(adapt.log_step_lam) * rng.standard_normal(model.K)
    log_ratio = (log_fcd_distance_lam(prop, S1, S2, state.upsilon2)
                 - log_fcd_distance_lam(state.lam, S1, S2, state.upsilon2))
    acc_lam = (np.log(rng.random(model.K)) < log_ratio).astype(float)
    state.lam = np.where(acc_lam > 0, prop, state.lam)
    adapt.record(acc_u, acc_lam)


# ------------------------------------------------------------ stochastic blocks

def block_pair_index(model, xi):
    """Index a*C + b of phi(xi_i, xi_j) = (min, max) per layer and dyad, (K, D)."""
    a = xi[model.iu].T
    b = xi[model.ju].T
    return np.minimum(a, b) * model.C + np.maximum(a, b)


def fcd_gamma(model, state, z, X):
    """Means and variances of every gamma_{a,b,k} (a <= b), as (K, C, C) arrays."""
    C = model.C
    r = residual(model, state, z, X, ("blocks",))
    idx = block_pair_index(model, state.xi)
    N = np.stack([np.bincount(idx[k], minlength=C * C) for k in range(model.K)])
    sums = np.stack([np.bincount(idx[k], r[k], C * C) for k in range(model.K)])
    V2 = 1.0 / (1.0 / state.rho2 + N)
    M = V2 * sums
    M, V2 = M.reshape(-1, C, C), V2.reshape(-1, C, C)
    lo = np.tril_indices(C, -1)
    M[:, lo[0], lo[1]] = M[:, lo[1], lo[0]]
    V2[:, lo[0], lo[1]] = V2[:, lo[1], lo[0]]
    return M, V2


def update_gamma(model, state, z, X, rng):
    M, V2 = fcd_gamma(model, state, z, X)
    a_up, b_up = np.triu_indices(model.C)
    vals = _normal(rng, M[:, a_up, b_up], V2[:, a_up, b_up])
    G = np.zeros_like(M)
    G[:, a_up, b_up] = vals
    G[:, b_up, a_up] = vals
    state.Gamma = G


def fcd_labels(model, state, z, X, i, k):
    """Normalized conditional probabilities of xi_{i,k} over the C blocks."""
    Rb = to_square(model, residual(model, state, z, X, ("blocks",)))
    lp = _label_log_probs(model, state, Rb[k, i], i, k)
    w = np.exp(lp - lp.max())
    return w / w.sum()


def _label_log_probs(model, state, r_row, i, k):
    others = np.arange(model.n) != i
    G = state.Gamma[k][:, state.xi[others, k]]  # (C, n-1)
    diff = r_row[others][None, :] - G
    return state.log_weights[k] - np.log(np.sum(np.exp(state.log_weights[k]))) \
        - 0.5 * np.sum(diff * diff, axis=1)


def update_labels(model, state, z, X, rng):
    Rb = to_square(model, residual(model, state, z, X, ("blocks",)))
    for k in range(model.K):
        for i in range(model.n):
            lp = _label_log_probs(model, state, Rb[k, i], i, k)
            state.xi[i, k] = draw_categorical(rng, lp[None])[0]


def block_counts(model, xi):
    return np.stack([np.bincount(xi[:, k], minlength=model.C) for k in range(model.K)])


def fcd_weights(model, state):
    """Dirichlet concentration of each layer's mixing weights, shape (K, C)."""
    return state.alpha / model.C + block_counts(model, state.xi)


def update_weights(model, state, rng):
    state.log_weights = draw_log_dirichlet(rng, fcd_weights(model, state))


def log_alpha_conditional(alpha, log_weights, a, b, C):
    """log p(alpha | weights) up to a constant: Gamma(a, rate b) times the
    K symmetric Dirichlet(alpha / C) densities."""
    if not alpha > 0:
        return -np.inf
    K = log_weights.shape[0]
    return ((a - 1.0) * np.log(alpha) - b * alpha
            + K * (gammaln(alpha) - C * gammaln(alpha / C))
            + (alpha / C - 1.0) * np.sum(log_weights))


def slice_sample(logf, x0, rng, width=1.0, max_steps=50):
    """One stepping-out / shrinkage slice-sampling update of a scalar."""
    level = logf(x0) + np.log(rng.random())
    left = x0 - width * rng.random()
    right = left + width
    j = int(np.floor(max_steps * rng.random()))
    k = max_steps - 1 - j
    while j > 0 and logf(left) > level:
        left -= width
        j -= 1
    while k > 0 and logf(right) > level:
        right += width
        k -= 1
    while True:
        x1 = left + (right - left) * rng.random()
        if logf(x1) > level:
            return x1
        if x1 < x0:
            left = x1
        else:
            right = x1


def update_alpha_slice(model, state, rng):
    """Slice-sampling update of log(alpha) given the mixing weights."""
    a, b = model.hyper.alpha
    lw = state.log_weights - np.logaddexp.reduce(state.log_weights, axis=1, keepdims=True)
    C = model.C

    def logf(x):
        return log_alpha_conditional(np.exp(x), lw, a, b, C) + x

    state.alpha = float(np.exp(slice_sample(logf, np.log(state.alpha), rng)))


def escobar_west_weight(a, b, n_dot, m_dot, aux):
    """Mixture weight of the Gamma(a + m, b - log aux) component."""
    num = a + m_dot - 1.0
    return num / (num + n_dot * (b - np.log(aux)))


def update_alpha_escobar_west(model, state, rng):
    a, b = model.hyper.alpha
    n_dot = model.n * model.K
    m_dot = int(np.count_nonzero(block_counts(model, state.xi)))
    aux = rng.beta(state.alpha + 1.0, n_dot)
    pi = escobar_west_weight(a, b, n_dot, m_dot, aux)
    shape = a + m_dot if rng.random() < pi else a + m_dot - 1.0
    state.alpha = float(rng.gamma(shape, 1.0 / (b - np.log(aux))))


def permute_block_labels(model, state, rng):
    """Relabel the blocks of every layer by a uniformly random permutation.

    Labels, weights and the rows/columns of Gamma move together, and every prior
    term is exchangeable in the block index, so the joint density is unchanged.
    """
    C = model.C
    for k in range(model.K):
        perm = rng.permutation(C)
        state.xi[:, k] = perm[state.xi[:, k]]
        lw = np.empty(C)
        lw[perm] = state.log_weights[k]
        state.log_weights[k] = lw
        G = np.empty((C, C))
        G[np.ix_(perm, perm)] = state.Gamma[k]
        state.Gamma[k] = G


def update_blocks(model, state, z, X, rng, alpha_update="slice"):
    update_gamma(model, state, z, X, rng)
    update_labels(model, state, z, X, rng)
    update_weights(model, state, rng)
    if alpha_update == "slice":
        update_alpha_slice(model, state, rng)
    elif alpha_update == "escobar-west":
        update_alpha_escobar_west(model, state, rng)
    else:
        raise ValueError(f"unknown alpha update {alpha_update!r}")


# ------------------------------------------------------------ variance components

def fcd_variances(model, state):
    """Inverse-gamma (shape, rate) of every active variance component."""
    h = model.hyper
    K, n = model.K, model.n
    out = {"omega2": (h.omega[0] + 0.5, h.omega[1] + 0.5 * state.zeta ** 2)}
    if model.has_mu:
        out["sigma2"] = (h.sigma[0] + 0.5 * K, h.sigma[1] + 0.5 * np.sum(state.mu ** 2))
    if model.has_delta:
        dev = state.delta - state.vartheta[:, None]
        out["tau2"] = (h.tau[0] + 0.5 * n * K, h.tau[1] + 0.5 * np.sum(dev * dev))
        out["kappa2"] = (h.kappa[0] + 0.5 * n, h.kappa[1] + 0.5 * np.sum(state.vartheta ** 2))
    if model.has_beta:
        out["varsigma2"] = (h.varsigma[0] + 0.5 * K * model.p,
                            h.varsigma[1] + 0.5 * np.sum(state.beta ** 2))
    if model.has_latent:
        out["upsilon2"] = (h.upsilon[0] + 0.5 * K, h.upsilon[1] + 0.5 * np.sum(state.lam ** 2))
    if model.has_blocks:
        C = model.C
        a_up, b_up = np.triu_indices(C)
        g = state.Gamma[:, a_up, b_up]
        out["rho2"] = (h.rho[0] + K * C * (C + 1) / 4.0, h.rho[1] + 0.5 * np.sum(g * g))
    return out


def update_variances(model, state, rng):
    for name, (A, B) in fcd_variances(model, state).items():
        setattr(state, name, float(draw_invgamma(rng, A, B)))


# ------------------------------------------------------------ translation moves

def ridge_params(model, state):
    """Gaussian conditionals of the shift c for each predictor-preserving translation.

    * ``zeta_mu``: zeta + c, every mu_k - c.
    * ``mu_delta``: per layer, mu_k + 2c and delta_{., k} - c.
    * ``zeta_delta``: zeta + 2c, every delta - c and every vartheta - c.
    * ``mu_gamma``: per layer, mu_k - c and every gamma_{a,b,k} + c.

    Each leaves the linear predictor unchanged, so only prior terms enter.
    Returns a dict of (mean, variance) pairs.
    """
    out = {}
    K, n = model.K, model.n
    if model.has_mu:
        P = 1.0 / state.omega2 + K / state.sigma2
        out["zeta_mu"] = ((-state.zeta / state.omega2 + state.mu.sum() / state.sigma2) / P, 1.0 / P)
    if model.has_delta:
        P = 4.0 / state.sigma2 + n / state.tau2
        m = (-2.0 * state.mu / state.sigma2
             + (state.delta - state.vartheta[:, None]).sum(axis=0) / state.tau2) / P
        out["mu_delta"] = (m, np.full(K, 1.0 / P))
        P = 4.0 / state.omega2 + n / state.kappa2
        out["zeta_delta"] = ((-2.0 * state.zeta / state.omega2 + state.vartheta.sum() / state.kappa2) / P,
                             1.0 / P)
    return out


def ridge_params_blocks(model, state):
    C = model.C
    a_up, b_up = np.triu_indices(C)
    P = 1.0 / state.sigma2 + a_up.size / state.rho2
    m = (state.mu / state.sigma2 - state.Gamma[:, a_up, b_up].sum(axis=1) / state.rho2) / P
    return m, np.full(model.K, 1.0 / P)


def update_ridges(model, state, rng):
    params = ridge_params(model, state)
    if "zeta_mu" in params:
        c = float(_normal(rng, *params["zeta_mu"]))
        state.zeta += c
        state.mu = state.mu - c
    if "mu_delta" in params:
        m, v = ridge_params(model, state)["mu_delta"]
        c = _normal(rng, m, v)
        state.mu = state.mu + 2.0 * c
        state.delta = state.delta - c[None, :]
        m, v = ridge_params(model, state)["zeta_delta"]
        c = float(_normal(rng, m, v))
        state.zeta += 2.0 * c
        state.delta = state.delta - c
        state.vartheta = state.vartheta - c


def update_ridge_blocks(model, state, rng):
    m, v = ridge_params_blocks(model, state)
    c = _normal(rng, m, v)
    state.mu = state.mu - c
    state.Gamma = state.Gamma + c[:, None, None]


# ------------------------------------------------------------ joint rescaling

SCALED_LOCATIONS = ("zeta", "mu", "delta", "vartheta", "beta", "Gamma")


def scaled_variances(model):
    """Variance components whose children all scale with the predictor."""
    names = ["omega2"]
    if model.has_mu:
        names.append("sigma2")
    if model.has_delta:
        names += ["tau2", "kappa2"]
    if model.has_beta:
        names.append("varsigma2")
    if model.has_bilinear:
        names.append("upsilon2")
    if model.has_blocks:
        names.append("rho2")
    return names


def _variance_prior(model, name):
    h = model.hyper
    return {"omega2": h.omega, "sigma2": h.sigma, "tau2": h.tau, "kappa2": h.kappa,
            "varsigma2": h.varsigma, "upsilon2": h.upsilon, "rho2": h.rho}[name]


def log_scale_conditional(model, state, z, X):
    """log density of s for the move z -> e^s z, eta -> e^s eta, variances -> e^{2s} v.

    Locations (and lambda for the bilinear term) scale by e^s; the latent
    distance scales shift by s instead. Includes the Jacobian and Haar terms.
    """
    e = z - eta(model, state, X)
    Q = float(np.sum(e * e))
    N = z.size
    lin, inv = 0.0, 0.0
    for name in scaled_variances(model):
        a, b = _variance_prior(model, name)
        lin += 2.0 * a
        inv += b / getattr(state, name)
    lam = state.lam if model.has_distance else None

    def logf(s):
        val = -0.5 * np.exp(2.0 * s) * Q + N * s - lin * s - inv * np.exp(-2.0 * s)
        if lam is not None:
            val -= 0.5 * np.sum((lam + s) ** 2) / state.upsilon2
        return val

    return logf


def apply_scale(model, state, s):
    g = np.exp(s)
    for name in SCALED_LOCATIONS:
        v = getattr(state, name)
        if v is not None:
            setattr(state, name, v * g if isinstance(v, np.ndarray) else float(v * g))
    if model.has_bilinear:
        state.lam = state.lam * g
    if model.has_distance:
        state.lam = state.lam + s
    for name in scaled_variances(model):
        setattr(state, name, float(getattr(state, name) * g * g))
    return g


def update_scale(model, state, z, X, rng):
    """Generalized Gibbs rescaling move; returns the rescaled latent z."""
    s = slice_sample(log_scale_conditional(model, state, z, X), 0.0, rng, width=0.5)
    return z * apply_scale(model, state, s)


# ------------------------------------------------------------ per-component rescaling
#
# Each move rescales one variance component v -> e^{2s} v together with the
# quantities whose prior scale it sets (those move by e^s). Their Gaussian prior
# terms are unchanged apart from normalising constants that cancel the Jacobian,
# so the density of s reduces to the z-residual term plus the inverse-gamma term.

def partial_scale_groups(model):
    """Variance components with a rescalable group, in update order."""
    names = ["omega2"]
    if model.has_mu:
        names.append("sigma2")
    if model.has_delta:
        names += ["tau2", "kappa2"]
    if model.has_beta:
        names.append("varsigma2")
    if model.has_latent:
        names.append("upsilon2")
    if model.has_blocks:
        names.append("rho2")
    return names


def _group_direction(model, state, variance, X):
    """d eta / d g at g = 1 for the groups that enter eta linearly, shape (K, D)."""
    K, D = model.K, model.D
    if variance == "omega2":
        return np.full((K, D), state.zeta)
    if variance == "sigma2":
        return np.repeat(state.mu[:, None], D, axis=1)
    if variance in ("tau2", "kappa2"):
        part = state.delta - state.vartheta[:, None] if variance == "tau2" \
            else np.broadcast_to(state.vartheta[:, None], state.delta.shape)
        part = part.T
        return part[:, model.iu] + part[:, model.ju]
    if variance == "varsigma2":
        return state.beta @ np.asarray(X).T
    if variance == "upsilon2":
        inner = np.sum(state.U[model.iu] * state.U[model.ju], axis=1)
        return state.lam[:, None] * inner[None, :]
    k = np.arange(K)[:, None]
    return state.Gamma[k, state.xi[model.iu].T, state.xi[model.ju].T]


def log_partial_scale_conditional(model, state, z, X, variance):
    """log density (up to a constant) of the log scale s for one variance group."""
    a, b = _variance_prior(model, variance)
    b_over_v = b / getattr(state, variance)
    r0 = z - eta(model, state, X)
    if variance == "upsilon2" and model.has_distance:
        # eta holds -exp(lambda_k) d_ij, and lambda -> e^s lambda
        dist = latent_distances(model, state.U)
        rd = r0 @ dist
        dd = float(dist @ dist)
        lam = state.lam

        def resid(s):
            shift = np.exp(np.exp(s) * lam) - np.exp(lam)
            return float(np.sum(2.0 * shift * rd + shift * shift * dd))
    else:
        c = _group_direction(model, state, variance, X)
        rc, cc = float(np.sum(r0 * c)), float(np.sum(c * c))

        def resid(s):
            t = np.exp(s) - 1.0
            return -2.0 * t * rc + t * t * cc

    def logf(s):
        return -0.5 * resid(s) - 2.0 * a * s - b_over_v * np.exp(-2.0 * s)

    return logf


def apply_partial_scale(state, variance, g):
    if variance == "omega2":
        state.zeta *= g
    elif variance == "sigma2":
        state.mu = state.mu * g
    elif variance == "tau2":
        centre = state.vartheta[:, None]
        state.delta = centre + g * (state.delta - centre)
    elif variance == "kappa2":
        # delta follows its centre, leaving the deviations delta - vartheta unchanged
        state.delta = state.delta + (g - 1.0) * state.vartheta[:, None]
        state.vartheta = state.vartheta * g
    elif variance == "varsigma2":
        state.beta = state.beta * g
    elif variance == "upsilon2":
        state.lam = state.lam * g
    elif variance == "rho2":
        state.Gamma = state.Gamma * g
    setattr(state, variance, getattr(state, variance) * g * g)


def update_partial_scales(model, state, z, X, rng):
    """Generalized Gibbs rescaling of each variance component with its group."""
    for variance in partial_scale_groups(model):
        s = slice_sample(log_partial_scale_conditional(model, state, z, X, variance), 0.0, rng,
                         width=0.5)
        apply_partial_scale(state, variance, float(np.exp(s)))
