"""Full-conditional checks: every analytic kernel against the brute-force joint.

``run_suite`` returns (name, max_abs_error) pairs; shared by the unit tests and
the acceptance run.
"""
import math

import numpy as np

from smnet import kernels
from smnet.models import Model, default_hyperparameters, prior_draw

from oracles import (beta_fit, inverse_gamma_fit, loop_eta, oracle_log_joint, quadratic_fit,
                     quadratic_fit_vector)


class ZeroNoise:
    """Stand-in generator whose Gaussian draws are all zero (draws become means)."""

    def standard_normal(self, size=None):
        return np.zeros(size if size is not None else ())


def make_instance(variant, seed, n=4, K=2, p=2, d=2, C=2):
    rng = np.random.default_rng(seed)
    h = default_hyperparameters(variant, d=d, C=C)
    model = Model(variant, n, K, p if variant != "SMN" else 0, h)
    state = prior_draw(model, rng)
    if model.has_blocks:
        # keep every label value present so block sums are non-trivial
        state.xi[:, :] = np.array([0, 1, 1, 0])[:, None][:n]
        state.log_weights = np.log(rng.dirichlet(np.ones(C), size=K))
    X = rng.normal(size=(model.D, model.p)) if model.p else None
    z = loop_eta(model, state, X) + rng.normal(size=(K, model.D))
    return model, state, X, z


def _joint(model, state, X, z):
    return lambda: oracle_log_joint(model, state, z, X)


def _with(state, name, value, index=None):
    s = state.copy()
    if index is None:
        setattr(s, name, value)
    else:
        arr = getattr(s, name).copy()
        arr[index] = value
        setattr(s, name, arr)
    return s


def _err(a, b):
    return float(np.max(np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))))


def check_location_blocks(variant, seed):
    model, state, X, z = make_instance(variant, seed)
    out = []

    def f_of(name, index=None):
        return lambda v: oracle_log_joint(model, _with(state, name, v, index), z, X)

    M, V2 = kernels.fcd_zeta(model, state, z, X)
    m, v = quadratic_fit(f_of("zeta"), state.zeta)
    out.append((f"{variant}/zeta", max(_err(M, m), _err(V2, v))))

    M, V2 = kernels.fcd_mu(model, state, z, X)
    errs = []
    for k in range(model.K):
        m, v = quadratic_fit(f_of("mu", k), state.mu[k])
        errs += [_err(M[k], m), _err(V2, v)]
    out.append((f"{variant}/mu", max(errs)))

    errs = []
    for i in range(model.n):
        for k in range(model.K):
            M, V2 = kernels.fcd_delta_site(model, state, z, X, i, k)
            m, v = quadratic_fit(f_of("delta", (i, k)), state.delta[i, k])
            errs += [_err(M, m), _err(V2, v)]
    out.append((f"{variant}/delta", max(errs)))

    # the sequential sweep must visit the same conditionals in node order
    seq = state.copy()
    kernels.update_delta(model, seq, z, X, ZeroNoise())
    ref = state.copy()
    for i in range(model.n):
        for k in range(model.K):
            ref.delta[i, k] = kernels.fcd_delta_site(model, ref, z, X, i, k)[0]
    out.append((f"{variant}/delta_sequential", _err(seq.delta, ref.delta)))

    M, V2 = kernels.fcd_vartheta(model, state)
    errs = []
    for i in range(model.n):
        m, v = quadratic_fit(f_of("vartheta", i), state.vartheta[i])
        errs += [_err(M[i], m), _err(V2, v)]
    out.append((f"{variant}/vartheta", max(errs)))

    if model.has_beta:
        M, V = kernels.fcd_beta(model, state, z, X)
        errs = []
        for k in range(model.K):
            def f(b, k=k):
                return oracle_log_joint(model, _with(state, "beta", b, k), z, X)
            m, cov = quadratic_fit_vector(f, state.beta[k])
            errs += [_err(M[k], m), _err(V, cov)]
        out.append((f"{variant}/beta", max(errs)))
    return out


def check_variances(variant, seed):
    model, state, X, z = make_instance(variant, seed)
    errs = []
    for name, (A, B) in kernels.fcd_variances(model, state).items():
        def f(v, name=name):
            return oracle_log_joint(model, _with(state, name, v), z, X)
        a_hat, b_hat = inverse_gamma_fit(f)
        errs.append(max(_err(A, a_hat), _err(B, b_hat)))
    return [(f"{variant}/variances", max(errs))]


def check_bilinear(seed):
    model, state, X, z = make_instance("SMN-C-BG", seed)
    errs = []
    for i in range(model.n):
        M, V = kernels.fcd_bilinear_u(model, state, z, X, i)

        def f(u, i=i):
            return oracle_log_joint(model, _with(state, "U", u, i), z, X)
        m, cov = quadratic_fit_vector(f, state.U[i])
        errs += [_err(M, m), _err(V, cov)]
    out = [("SMN-C-BG/u", max(errs))]
    M, V2 = kernels.fcd_bilinear_lam(model, state, z, X)
    errs = []
    for k in range(model.K):
        m, v = quadratic_fit(lambda t, k=k: oracle_log_joint(model, _with(state, "lam", t, k), z, X),
                             state.lam[k])
        errs += [_err(M[k], m), _err(V2[k], v)]
    out.append(("SMN-C-BG/lambda", max(errs)))
    return out


def check_distance(seed):
    """Metropolis targets: log-FCD differences equal joint differences."""
    model, state, X, z = make_instance("SMN-C-LD", seed)
    rng = np.random.default_rng(seed + 1)
    errs = []
    for i in range(model.n):
        u0, u1 = state.U[i], state.U[i] + rng.normal(size=model.d)
        k_diff = (kernels.log_fcd_distance_u(model, state, z, X, i, u1)
                  - kernels.log_fcd_distance_u(model, state, z, X, i, u0))
        o_diff = (oracle_log_joint(model, _with(state, "U", u1, i), z, X)
                  - oracle_log_joint(model, state, z, X))
        errs.append(_err(k_diff, o_diff))
    S1, S2 = kernels.distance_lam_stats(model, state, z, X)
    for k in range(model.K):
        l0, l1 = state.lam[k], state.lam[k] + rng.normal()
        k_diff = (kernels.log_fcd_distance_lam(l1, S1[k], S2, state.upsilon2)
                  - kernels.log_fcd_distance_lam(l0, S1[k], S2, state.upsilon2))
        o_diff = (oracle_log_joint(model, _with(state, "lam", l1, k), z, X)
                  - oracle_log_joint(model, state, z, X))
        errs.append(_err(k_diff, o_diff))
    return [("SMN-C-LD/metropolis_targets", max(errs))]


def check_blocks(seed):
    model, state, X, z = make_instance("SMN-C-SB", seed)
    C = model.C
    out = []
    M, V2 = kernels.fcd_gamma(model, state, z, X)
    errs = []
    for k in range(model.K):
        for a in range(C):
            for b in range(a, C):
                def f(g, k=k, a=a, b=b):
                    s = state.copy()
                    s.Gamma = s.Gamma.copy()
                    s.Gamma[k, a, b] = s.Gamma[k, b, a] = g
                    return oracle_log_joint(model, s, z, X)
                m, v = quadratic_fit(f, state.Gamma[k, a, b])
                errs += [_err(M[k, a, b], m), _err(V2[k, a, b], v),
                         _err(M[k, b, a], m), _err(V2[k, b, a], v)]
    out.append(("SMN-C-SB/gamma", max(errs)))

    errs = []
    for k in range(model.K):
        for i in range(model.n):
            probs = kernels.fcd_labels(model, state, z, X, i, k)
            lj = np.array([oracle_log_joint(model, _with(state, "xi", c, (i, k)), z, X)
                           for c in range(C)])
            ref = np.exp(lj - lj.max())
            errs.append(_err(probs, ref / ref.sum()))
    out.append(("SMN-C-SB/labels", max(errs)))

    conc = kernels.fcd_weights(model, state)
    errs = []
    for k in range(model.K):
        def f(w, k=k):
            s = state.copy()
            s.log_weights = s.log_weights.copy()
            s.log_weights[k] = np.log([w, 1.0 - w])
            return oracle_log_joint(model, s, z, X)
        a1, a2 = beta_fit(f)
        errs.append(max(_err(conc[k, 0], a1), _err(conc[k, 1], a2)))
    out.append(("SMN-C-SB/weights", max(errs)))

    a, b = model.hyper.alpha
    errs = []
    for a0, a1 in ((0.3, 1.7), (1.0, 4.0)):
        k_diff = (kernels.log_alpha_conditional(a1, state.log_weights, a, b, C)
                  - kernels.log_alpha_conditional(a0, state.log_weights, a, b, C))
        o_diff = (oracle_log_joint(model, _with(state, "alpha", a1), z, X)
                  - oracle_log_joint(model, _with(state, "alpha", a0), z, X))
        errs.append(_err(k_diff, o_diff))
    out.append(("SMN-C-SB/alpha", max(errs)))
    return out


def check_ridges(variant, seed):
    model, state, X, z = make_instance(variant, seed)
    params = kernels.ridge_params(model, state)
    out = []

    def shifted(c, kind, k=None):
        s = state.copy()
        if kind == "zeta_mu":
            s.zeta += c
            s.mu = s.mu - c
        elif kind == "mu_delta":
            s.mu = s.mu.copy()
            s.mu[k] += 2 * c
            s.delta = s.delta.copy()
            s.delta[:, k] -= c
        elif kind == "zeta_delta":
            s.zeta += 2 * c
            s.delta = s.delta - c
            s.vartheta = s.vartheta - c
        elif kind == "mu_gamma":
            s.mu = s.mu.copy()
            s.mu[k] -= c
            s.Gamma = s.Gamma.copy()
            s.Gamma[k] += c
        return s

    errs = []
    for kind in ("zeta_mu", "zeta_delta"):
        m, v = quadratic_fit(lambda c: oracle_log_joint(model, shifted(c, kind), z, X), 0.0)
        errs += [_err(params[kind][0], m), _err(params[kind][1], v)]
    for k in range(model.K):
        m, v = quadratic_fit(lambda c: oracle_log_joint(model, shifted(c, "mu_delta", k), z, X), 0.0)
        errs += [_err(params["mu_delta"][0][k], m), _err(params["mu_delta"][1][k], v)]
    if model.has_blocks:
        bm, bv = kernels.ridge_params_blocks(model, state)
        for k in range(model.K):
            m, v = quadratic_fit(
                lambda c: oracle_log_joint(model, shifted(c, "mu_gamma", k), z, X), 0.0)
            errs += [_err(bm[k], m), _err(bv[k], v)]
    out.append((f"{variant}/translation_moves", max(errs)))
    return out


def check_scale(variant, seed):
    """Rescaling move: kernel log density vs joint at the transformed point plus Jacobian."""
    model, state, X, z = make_instance(variant, seed)
    n, K, C, p = model.n, model.K, model.C, model.p
    n_loc = 1 + K + n * K + n + K * p
    n_var = 4 + (p > 0)
    if model.has_bilinear:
        n_loc += K
        n_var += 1
    if model.has_blocks:
        n_loc += K * C * (C + 1) // 2
        n_var += 1
    jac = z.size + n_loc + 2 * n_var

    def transformed(s):
        t = state.copy()
        kernels.apply_scale(model, t, s)
        return t

    logf = kernels.log_scale_conditional(model, state, z, X)
    errs = []
    for s1 in (-0.3, 0.2, 0.5):
        k_diff = logf(s1) - logf(0.0)
        o_diff = (oracle_log_joint(model, transformed(s1), z * math.exp(s1), X) + jac * s1
                  - oracle_log_joint(model, state, z, X))
        errs.append(_err(k_diff, o_diff))
    return [(f"{variant}/scale_move", max(errs))]


def run_suite(seeds=(0, 1)):
    results = []
    for seed in seeds:
        for variant in ("SMN", "SMN-C", "SMN-C-BG", "SMN-C-LD", "SMN-C-SB"):
            results += check_location_blocks(variant, seed)
            results += check_variances(variant, seed)
            results += check_ridges(variant, seed)
            results += check_scale(variant, seed)
        results += check_bilinear(seed)
        results += check_distance(seed)
        results += check_blocks(seed)
    return results
