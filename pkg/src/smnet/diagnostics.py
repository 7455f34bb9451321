"""Sampler-correctness diagnostics: joint-distribution (Geweke) tests."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .chain import batch_means_mcse, sweep
from .kernels import AdaptationState
from .models import prior_draw, simulate_dyads

VARIANCE_NAMES = ("omega2", "sigma2", "tau2", "kappa2", "varsigma2", "upsilon2", "rho2", "alpha")


def scalar_summaries(model, state):
    """Scalar functions of the parameters compared in the joint test.

    Variance components and the concentration are tracked on the log scale
    because their inverse-gamma / gamma priors lack the moments needed for a
    finite-variance comparison of squares.
    """
    out = {"zeta": state.zeta}
    for name in VARIANCE_NAMES:
        v = getattr(state, name)
        if v is not None:
            out[f"log_{name}"] = np.log(v)
    if model.has_mu:
        for k in range(model.K):
            out[f"mu[{k + 1}]"] = state.mu[k]
    if model.has_delta:
        out["delta[1,1]"] = state.delta[0, 0]
        out["vartheta[1]"] = state.vartheta[0]
    if model.has_beta:
        out["beta[1,1]"] = state.beta[0, 0]
    if model.has_latent:
        out["U[1,1]"] = state.U[0, 0]
        for k in range(model.K):
            out[f"lam[{k + 1}]"] = state.lam[k]
    if model.has_blocks:
        out["Gamma[1,1,1]"] = state.Gamma[0, 0, 0]
        out["Gamma[1,1,2]"] = state.Gamma[0, 0, -1]
        out["weight[1,1]"] = state.weights[0, 0]
    return out


@dataclass
class MomentCheck:
    name: str
    moment: int
    coupled: float
    prior: float
    z_score: float

    @property
    def ok(self):
        return bool(np.isfinite(self.z_score))


def geweke_test(model, X, sweeps, rng, prior_draws=None, alpha_update="slice",
                ridge_moves=True, scale_move=True, partial_scale_moves=True,
                label_permutation=True, batches=25):
    """Successive-conditional simulator against independent prior draws.

    Returns a list of MomentCheck, one per scalar summary and moment (1, 2).
    """
    state = prior_draw(model, rng)
    adapt = AdaptationState.initial(model.n, model.K)
    adapt.freeze()
    coupled = []
    for _ in range(sweeps):
        y = simulate_dyads(model, state, X, rng)
        sweep(model, state, y, X, rng, adapt, alpha_update, ridge_moves, scale_move,
              partial_scale_moves, label_permutation)
        coupled.append(scalar_summaries(model, state))
    independent = [scalar_summaries(model, prior_draw(model, rng))
                   for _ in range(prior_draws or sweeps)]
    checks = []
    for name in coupled[0]:
        a = np.array([c[name] for c in coupled])
        b = np.array([c[name] for c in independent])
        for moment in (1, 2):
            ga, gb = a ** moment, b ** moment
            se = np.sqrt(batch_means_mcse(ga, batches) ** 2 + gb.var(ddof=1) / gb.size)
            diff = ga.mean() - gb.mean()
            if se > 0:
                z = diff / se
            else:
                # degenerate summary (e.g. the weight of a single block): exact agreement or not
                z = 0.0 if diff == 0 else np.inf
            checks.append(MomentCheck(name, moment, float(ga.mean()), float(gb.mean()),
                                      float(z)))
    return checks
