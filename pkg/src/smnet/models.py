"""The five probit multilayer network models: structure, priors, predictors, simulation."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.special import gammaln, log_ndtr, ndtr

VARIANTS = ("SMN", "SMN-C", "SMN-C-BG", "SMN-C-LD", "SMN-C-SB")
LOG_2PI = np.log(2.0 * np.pi)


def check_variant(variant):
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    return variant


@dataclass(frozen=True)
class Hyperparameters:
    """Shape/rate pairs of the inverse-gamma variance priors, the gamma prior
    on the concentration, the latent dimension and the block count."""
    omega: tuple = (3.0, 3.0)
    sigma: tuple = (3.0, 3.0)
    tau: tuple = (3.0, 3.0)
    kappa: tuple = (3.0, 3.0)
    varsigma: tuple = (3.0, 200.0)
    upsilon: tuple = (3.0, 100.0)
    rho: tuple = (3.0, 200.0)
    alpha: tuple = (1.0, 1.0)
    d: int = 3
    C: int = 2

    def __post_init__(self):
        for name in ("omega", "sigma", "tau", "kappa", "varsigma", "upsilon", "rho", "alpha"):
            a, b = getattr(self, name)
            if not (a > 0 and b > 0):
                raise ValueError(f"hyperparameter pair {name} must be positive, got {(a, b)}")
            object.__setattr__(self, name, (float(a), float(b)))
        if self.d < 1 or self.C < 1:
            raise ValueError("need d >= 1 and C >= 1")

    def to_dict(self):
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in d.items()})

    def updated(self, **kw):
        return replace(self, **kw)


def default_hyperparameters(variant, d=3, C=2):
    check_variant(variant)
    upsilon = (3.0, 1.0) if variant == "SMN-C-LD" else (3.0, 100.0)
    return Hyperparameters(upsilon=upsilon, d=d, C=C)


def parameter_count(variant, n, K, p=0, d=3, C=2):
    check_variant(variant)
    if variant == "SMN":
        return K * (n + 1) + n + 5
    if variant == "SMN-C":
        return K * (n + p + 1) + n + 6
    if variant in ("SMN-C-BG", "SMN-C-LD"):
        return K * (n + p + 2) + n * (d + 1) + 7
    return K * (2 * n + p + C + C * (C + 1) // 2 + 1) + n + 8


@dataclass
class Model:
    """Dimensions and active parameter blocks of one variant.

    ``reduced`` switches to the covariate-free predictors: eta = zeta for SMN,
    eta = zeta + mu_k for SMN-C, and no regression block for the latent variants.
    """
    variant: str
    n: int
    K: int
    p: int = 0
    hyper: Hyperparameters = field(default_factory=Hyperparameters)
    reduced: bool = False

    def __post_init__(self):
        check_variant(self.variant)
        if self.n < 2 or self.K < 1:
            raise ValueError("need n >= 2 and K >= 1")
        if not self.has_beta:
            self.p = 0
        elif self.p < 1:
            raise ValueError(f"{self.variant} needs covariates (p >= 1) unless reduced")
        self.iu, self.ju = np.triu_indices(self.n, k=1)
        self.D = self.iu.size
        pair = np.full((self.n, self.n), -1, dtype=np.int64)
        pair[self.iu, self.ju] = np.arange(self.D)
        pair[self.ju, self.iu] = np.arange(self.D)
        self.pair_index = pair

    @property
    def d(self):
        return self.hyper.d

    @property
    def C(self):
        return self.hyper.C

    @property
    def has_mu(self):
        return not (self.reduced and self.variant == "SMN")

    @property
    def has_delta(self):
        return not (self.reduced and self.variant in ("SMN", "SMN-C"))

    @property
    def has_beta(self):
        return self.variant != "SMN" and not self.reduced

    @property
    def has_bilinear(self):
        return self.variant == "SMN-C-BG"

    @property
    def has_distance(self):
        return self.variant == "SMN-C-LD"

    @property
    def has_latent(self):
        return self.has_bilinear or self.has_distance

    @property
    def has_blocks(self):
        return self.variant == "SMN-C-SB"

    def describe(self):
        return {"variant": self.variant, "n": self.n, "K": self.K, "p": self.p,
                "d": self.d, "C": self.C, "reduced": self.reduced}


@dataclass
class ModelState:
    """All unknowns of one variant at one iteration; absent blocks are None.

    Block labels ``xi`` are 0-based here and written 1-based on disk.
    """
    variant: str
    zeta: float
    omega2: float
    mu: np.ndarray = None
    sigma2: float = None
    delta: np.ndarray = None
    vartheta: np.ndarray = None
    tau2: float = None
    kappa2: float = None
    beta: np.ndarray = None
    varsigma2: float = None
    U: np.ndarray = None
    lam: np.ndarray = None
    upsilon2: float = None
    xi: np.ndarray = None
    Gamma: np.ndarray = None
    log_weights: np.ndarray = None
    alpha: float = None
    rho2: float = None

    FIELDS = ("zeta", "omega2", "mu", "sigma2", "delta", "vartheta", "tau2", "kappa2",
              "beta", "varsigma2", "U", "lam", "upsilon2", "xi", "Gamma", "log_weights",
              "alpha", "rho2")

    @property
    def weights(self):
        if self.log_weights is None:
            return None
        w = np.exp(self.log_weights - self.log_weights.max(axis=1, keepdims=True))
        return w / w.sum(axis=1, keepdims=True)

    def copy(self):
        kw = {}
        for name in self.FIELDS:
            v = getattr(self, name)
            kw[name] = v.copy() if isinstance(v, np.ndarray) else v
        return ModelState(self.variant, **kw)

    def to_dict(self):
        out = {"variant": self.variant}
        for name in self.FIELDS:
            v = getattr(self, name)
            if v is None:
                continue
            if name == "xi":
                v = np.asarray(v) + 1
            out[name] = np.asarray(v).tolist() if isinstance(v, np.ndarray) else float(v)
        return out

    @classmethod
    def from_dict(cls, d):
        kw = {}
        for name in cls.FIELDS:
            if name not in d:
                continue
            v = d[name]
            if isinstance(v, list):
                v = np.asarray(v, dtype=np.int64 if name == "xi" else np.float64)
                if name == "xi":
                    v = v - 1
            else:
                v = float(v)
            kw[name] = v
        return cls(d["variant"], **kw)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)


def check_state(model, state):
    """Raise ValueError if ``state`` violates the invariants of ``model``."""
    problems = []
    variances = ["omega2"]
    if model.has_mu:
        variances.append("sigma2")
    if model.has_delta:
        variances += ["tau2", "kappa2"]
    if model.has_beta:
        variances.append("varsigma2")
    if model.has_latent:
        variances.append("upsilon2")
    if model.has_blocks:
        variances += ["rho2", "alpha"]
    for name in variances:
        v = getattr(state, name)
        if v is None or not v > 0:
            problems.append(f"{name} must be positive")
    if model.has_blocks:
        if np.any(state.xi < 0) or np.any(state.xi >= model.C):
            problems.append("labels out of range")
        if not np.allclose(state.Gamma, np.swapaxes(state.Gamma, 1, 2)):
            problems.append("Gamma not symmetric")
        if not np.allclose(state.weights.sum(axis=1), 1.0):
            problems.append("weights do not sum to one")
    if problems:
        raise ValueError("; ".join(problems))


# ------------------------------------------------------------ predictor

def latent_distances(model, U):
    diff = U[model.iu] - U[model.ju]
    return np.sqrt(np.sum(diff * diff, axis=1))


def eta_terms(model, state, X=None):
    """Dictionary of the additive predictor components, each of shape (K, D)."""
    K, D = model.K, model.D
    terms = {"zeta": np.full((K, D), state.zeta)}
    if model.has_mu:
        terms["mu"] = np.repeat(np.asarray(state.mu)[:, None], D, axis=1)
    if model.has_delta:
        dT = np.asarray(state.delta).T
        terms["delta"] = dT[:, model.iu] + dT[:, model.ju]
    if model.has_beta:
        terms["beta"] = np.asarray(state.beta) @ np.asarray(X).T
    if model.has_bilinear:
        inner = np.sum(state.U[model.iu] * state.U[model.ju], axis=1)
        terms["latent"] = state.lam[:, None] * inner[None, :]
    if model.has_distance:
        terms["latent"] = -np.exp(state.lam)[:, None] * latent_distances(model, state.U)[None, :]
    if model.has_blocks:
        k = np.arange(K)[:, None]
        terms["blocks"] = state.Gamma[k, state.xi[model.iu].T, state.xi[model.ju].T]
    return terms


def eta(model, state, X=None, exclude=()):
    """Linear predictor on all dyads, shape (K, D), optionally leaving out terms."""
    total = np.zeros((model.K, model.D))
    for name, term in eta_terms(model, state, X).items():
        if name not in exclude:
            total += term
    return total


def linear_predictor(model, state, i, j, k, x=None):
    """eta for the single dyad (i, j) in layer k (0-based indices)."""
    if i == j:
        raise ValueError("dyad endpoints must differ")
    out = state.zeta
    if model.has_mu:
        out += state.mu[k]
    if model.has_delta:
        out += state.delta[i, k] + state.delta[j, k]
    if model.has_beta:
        if x is None or state.beta is None:
            raise ValueError(f"{model.variant} needs covariates and beta")
        out += float(np.dot(x, state.beta[k]))
    if model.has_bilinear:
        out += state.lam[k] * float(state.U[i] @ state.U[j])
    if model.has_distance:
        out -= np.exp(state.lam[k]) * float(np.linalg.norm(state.U[i] - state.U[j]))
    if model.has_blocks:
        a, b = state.xi[i, k], state.xi[j, k]
        out += state.Gamma[k, min(a, b), max(a, b)]
    return float(out)


def edge_probability(eta_values):
    return ndtr(eta_values)


def log_likelihood(y, eta_values):
    """Bernoulli-probit log-likelihood summed over dyads and layers."""
    return float(np.sum(pointwise_log_likelihood(y, eta_values)))


def pointwise_log_likelihood(y, eta_values):
    y = np.asarray(y)
    return np.where(y == 1, log_ndtr(eta_values), log_ndtr(-eta_values))


# ------------------------------------------------------------ prior

def _norm_logpdf(x, mean, var):
    x = np.asarray(x, dtype=np.float64)
    return float(np.sum(-0.5 * (LOG_2PI + np.log(var)) - 0.5 * (x - mean) ** 2 / var))


def _invgamma_logpdf(v, a, b):
    if v is None or not v > 0:
        return -np.inf
    return a * np.log(b) - gammaln(a) - (a + 1.0) * np.log(v) - b / v


def _gamma_logpdf(x, a, b):
    if not x > 0:
        return -np.inf
    return a * np.log(b) - gammaln(a) + (a - 1.0) * np.log(x) - b * x


def log_dirichlet(log_w, conc):
    """log Dir(w | conc), w given through its logarithms (rows)."""
    log_w = np.atleast_2d(log_w)
    conc = np.broadcast_to(conc, log_w.shape)
    return float(np.sum(gammaln(conc.sum(axis=1)) - gammaln(conc).sum(axis=1)
                        + ((conc - 1.0) * log_w).sum(axis=1)))


def log_prior(model, state):
    """Sum of all prior log densities of the active blocks (-inf off support)."""
    h = model.hyper
    lp = 0.0
    for name, pair in (("omega2", h.omega), ("sigma2", h.sigma), ("tau2", h.tau),
                       ("kappa2", h.kappa), ("varsigma2", h.varsigma),
                       ("upsilon2", h.upsilon), ("rho2", h.rho)):
        active = {"omega2": True, "sigma2": model.has_mu, "tau2": model.has_delta,
                  "kappa2": model.has_delta, "varsigma2": model.has_beta,
                  "upsilon2": model.has_latent, "rho2": model.has_blocks}[name]
        if active:
            lp += _invgamma_logpdf(getattr(state, name), *pair)
    if not np.isfinite(lp):
        return -np.inf
    lp += _norm_logpdf(state.zeta, 0.0, state.omega2)
    if model.has_mu:
        lp += _norm_logpdf(state.mu, 0.0, state.sigma2)
    if model.has_delta:
        lp += _norm_logpdf(state.delta, np.asarray(state.vartheta)[:, None], state.tau2)
        lp += _norm_logpdf(state.vartheta, 0.0, state.kappa2)
    if model.has_beta:
        lp += _norm_logpdf(state.beta, 0.0, state.varsigma2)
    if model.has_latent:
        lp += _norm_logpdf(state.U, 0.0, 1.0)
        lp += _norm_logpdf(state.lam, 0.0, state.upsilon2)
    if model.has_blocks:
        C = model.C
        if state.alpha is None or not state.alpha > 0:
            return -np.inf
        if np.any(state.xi < 0) or np.any(state.xi >= C):
            return -np.inf
        a_up, b_up = np.triu_indices(C)
        lp += _norm_logpdf(state.Gamma[:, a_up, b_up], 0.0, state.rho2)
        log_w = state.log_weights - np.logaddexp.reduce(state.log_weights, axis=1, keepdims=True)
        lp += log_dirichlet(log_w, state.alpha / C)
        lp += float(np.sum(np.take_along_axis(log_w, state.xi.T, axis=1)))
        lp += _gamma_logpdf(state.alpha, *model.hyper.alpha)
    return float(lp)


# ------------------------------------------------------------ simulation

def draw_invgamma(rng, a, b, size=None):
    return b / rng.gamma(a, 1.0, size=size)


def draw_log_dirichlet(rng, conc):
    """log of a Dirichlet draw, stable for tiny concentrations.

    Uses G(a) = G(a + 1) * U^(1/a) in log space.
    """
    conc = np.asarray(conc, dtype=np.float64)
    log_g = np.log(rng.gamma(conc + 1.0)) + np.log(rng.random(conc.shape)) / conc
    return log_g - np.logaddexp.reduce(log_g, axis=-1, keepdims=True)


def draw_categorical(rng, log_probs):
    """One draw per row (last axis) from unnormalized log probabilities."""
    lp = np.asarray(log_probs, dtype=np.float64)
    w = np.exp(lp - lp.max(axis=-1, keepdims=True))
    cum = np.cumsum(w, axis=-1)
    u = rng.random(lp.shape[:-1]) * cum[..., -1]
    return np.minimum((cum <= u[..., None]).sum(axis=-1), lp.shape[-1] - 1).astype(np.int64)


def prior_draw(model, rng, hyper=None):
    """Draw every active block top-down from the prior."""
    h = hyper or model.hyper
    n, K, p, d, C = model.n, model.K, model.p, h.d, h.C
    omega2 = draw_invgamma(rng, *h.omega)
    state = ModelState(model.variant, zeta=float(rng.normal(0.0, np.sqrt(omega2))),
                       omega2=float(omega2))
    if model.has_mu:
        state.sigma2 = float(draw_invgamma(rng, *h.sigma))
        state.mu = rng.normal(0.0, np.sqrt(state.sigma2), size=K)
    if model.has_delta:
        state.tau2 = float(draw_invgamma(rng, *h.tau))
        state.kappa2 = float(draw_invgamma(rng, *h.kappa))
        state.vartheta = rng.normal(0.0, np.sqrt(state.kappa2), size=n)
        state.delta = state.vartheta[:, None] + rng.normal(0.0, np.sqrt(state.tau2), size=(n, K))
    if model.has_beta:
        state.varsigma2 = float(draw_invgamma(rng, *h.varsigma))
        state.beta = rng.normal(0.0, np.sqrt(state.varsigma2), size=(K, p))
    if model.has_latent:
        state.upsilon2 = float(draw_invgamma(rng, *h.upsilon))
        state.U = rng.normal(size=(n, d))
        state.lam = rng.normal(0.0, np.sqrt(state.upsilon2), size=K)
    if model.has_blocks:
        state.alpha = float(rng.gamma(h.alpha[0], 1.0 / h.alpha[1]))
        state.log_weights = draw_log_dirichlet(rng, np.full((K, C), state.alpha / C))
        state.xi = draw_categorical(rng, np.repeat(state.log_weights[None], n, axis=0))
        state.rho2 = float(draw_invgamma(rng, *h.rho))
        G = np.zeros((K, C, C))
        a_up, b_up = np.triu_indices(C)
        vals = rng.normal(0.0, np.sqrt(state.rho2), size=(K, a_up.size))
        G[:, a_up, b_up] = vals
        G[:, b_up, a_up] = vals
        state.Gamma = G
    return state


def simulate_dyads(model, state, X, rng):
    """Bernoulli(Phi(eta)) outcomes on all dyads, shape (K, D)."""
    theta = edge_probability(eta(model, state, X))
    return (rng.random(theta.shape) < theta).astype(np.int8)


def simulate_network(model, state, X, rng, **labels):
    from .netcore import MultilayerNetwork
    return MultilayerNetwork.from_dyads(simulate_dyads(model, state, X, rng), model.n, **labels)


def prior_predictive_edges(model, S, rng, X=None):
    """S prior-predictive edge probabilities, one random dyad and layer per draw.

    When the variant uses covariates and ``X`` is None, a fresh standard-normal
    covariate vector is drawn for the chosen dyad, matching standardized inputs.
    """
    out = np.empty(S)
    for s in range(S):
        state = prior_draw(model, rng)
        d = int(rng.integers(model.D))
        k = int(rng.integers(model.K))
        i, j = int(model.iu[d]), int(model.ju[d])
        x = None
        if model.has_beta:
            x = rng.normal(size=model.p) if X is None else np.asarray(X)[d]
        out[s] = edge_probability(linear_predictor(model, state, i, j, k, x))
    return out


def _louvain(A, seed, resolution):
    import networkx as nx
    G = nx.from_numpy_array(np.asarray(A))
    return nx.community.louvain_communities(G, resolution=resolution, seed=seed)


def louvain_labels(layers, C, seed=0, resolution=1.0):
    """Louvain communities of each layer as 0-based labels, shape (n, K).

    Communities are ranked by size (ties by smallest member); any beyond the
    C-th share the last label.
    """
    layers = [np.asarray(A) for A in layers]
    n = layers[0].shape[0]
    xi = np.zeros((n, len(layers)), dtype=np.int64)
    for k, A in enumerate(layers):
        comms = sorted(_louvain(A, seed, resolution), key=lambda c: (-len(c), min(c)))
        for rank, members in enumerate(comms):
            xi[sorted(members), k] = min(rank, C - 1)
    return xi


def louvain_block_count(network, seed=0, resolution=1.0):
    """Largest Louvain community count over the observed layers."""
    best = 1
    for A in network.layers:
        best = max(best, len(_louvain(A, seed, resolution)))
    return best
