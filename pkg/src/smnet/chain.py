"""Chain orchestration: sweep order, burn-in / thinning, adaptation and archives."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .models import (Hyperparameters, Model, ModelState, default_hyperparameters, eta,
                     log_likelihood, louvain_labels, prior_draw)
from .netcore import MultilayerNetwork

PRESETS = {
    "desk": {"burn": 2000, "keep": 10000, "thin": 10},
    "paper": {"burn": 200000, "keep": 1000000, "thin": 20},
}

# block name -> ModelState attribute, in archive order
BLOCKS = ("zeta", "omega2", "mu", "sigma2", "delta", "vartheta", "tau2", "kappa2", "beta",
          "varsigma2", "U", "lam", "upsilon2", "xi", "Gamma", "log_weights", "alpha", "rho2")


@dataclass
class ChainConfig:
    variant: str = "SMN"
    burn: int = PRESETS["desk"]["burn"]
    keep: int = PRESETS["desk"]["keep"]
    thin: int = PRESETS["desk"]["thin"]
    seed: int = 0
    hyper: Hyperparameters = None
    reduced: bool = False
    alpha_update: str = "slice"
    ridge_moves: bool = True
    scale_move: bool = True
    partial_scale_moves: bool = True
    label_permutation: bool = True
    label_init: str = "louvain"
    eta0: float = 0.05
    target_u: float = 0.234
    target_lam: float = 0.44
    step_min: float = 1e-3
    step_max: float = 10.0
    initial_log_step: float = 0.0

    def __post_init__(self):
        if self.hyper is None:
            self.hyper = default_hyperparameters(self.variant)
        elif isinstance(self.hyper, dict):
            self.hyper = Hyperparameters.from_dict(self.hyper)
        if self.burn < 0 or self.keep < 1 or self.thin < 1:
            raise ValueError("need burn >= 0, keep >= 1 and thin >= 1")
        if self.label_init not in ("louvain", "prior"):
            raise ValueError(f"unknown label_init {self.label_init!r}")
        if self.keep // self.thin < 1:
            raise ValueError("keep/thin leaves no stored draws")

    @property
    def n_draws(self):
        return self.keep // self.thin

    @classmethod
    def preset(cls, name, **kw):
        return cls(**{**PRESETS[name], **kw})

    def to_dict(self):
        d = asdict(self)
        d["hyper"] = self.hyper.to_dict()
        return d


def sweep(model, state, y, X, rng, adapt=None, alpha_update="slice", ridge_moves=True,
          scale_move=True, partial_scale_moves=True, label_permutation=True):
    """One full scan: z, location blocks, variant blocks, variances. Returns z."""
    z = kernels.update_z(model, state, y, X, rng)
    if scale_move:
        z = kernels.update_scale(model, state, z, X, rng)
    kernels.update_zeta(model, state, z, X, rng)
    if model.has_mu:
        kernels.update_mu(model, state, z, X, rng)
    if model.has_delta:
        kernels.update_delta(model, state, z, X, rng)
        kernels.update_vartheta(model, state, rng)
    if ridge_moves:
        kernels.update_ridges(model, state, rng)
    if model.has_beta:
        kernels.update_beta(model, state, z, X, rng)
    if model.has_bilinear:
        kernels.update_bilinear(model, state, z, X, rng)
    if model.has_distance:
        kernels.update_distance(model, state, z, X, rng, adapt)
    if model.has_blocks:
        kernels.update_blocks(model, state, z, X, rng, alpha_update)
        if label_permutation:
            kernels.permute_block_labels(model, state, rng)
        if ridge_moves:
            kernels.update_ridge_blocks(model, state, rng)
    if partial_scale_moves:
        kernels.update_partial_scales(model, state, z, X, rng)
    kernels.update_variances(model, state, rng)
    return z


def new_adaptation(model, config):
    return kernels.AdaptationState.initial(
        model.n, model.K, config.initial_log_step, eta0=config.eta0,
        target_u=config.target_u, target_lam=config.target_lam,
        log_min=float(np.log(config.step_min)), log_max=float(np.log(config.step_max)))


def make_model(config, n, K, p):
    return Model(config.variant, n, K, p, config.hyper, config.reduced)


def run_chain(y, X, config, rng=None, init=None, progress=None):
    """Run one chain on dyad outcomes ``y`` (K, D) and dyad covariates ``X`` (D, p).

    The chain starts from a prior draw unless ``init`` is given; block labels
    of that draw are replaced by per-layer Louvain communities (and the weights
    redrawn given them) when ``config.label_init`` is "louvain". Burn-in
    iterations are discarded and Metropolis scales are frozen once it ends.
    """
    y = np.asarray(y)
    K, D = y.shape
    n = int(round((1 + np.sqrt(1 + 8 * D)) / 2))
    p = 0 if X is None else np.asarray(X).shape[1]
    model = make_model(config, n, K, p)
    if model.has_beta and X is None:
        raise ValueError(f"{config.variant} requires covariates; use reduced mode")
    if rng is None:
        rng = np.random.Generator(np.random.PCG64(config.seed))
    if init is None:
        state = prior_draw(model, rng)
        if model.has_blocks and config.label_init == "louvain":
            layers = MultilayerNetwork.from_dyads(y, n).layers
            state.xi = louvain_labels(layers, model.C, seed=config.seed)
            kernels.update_weights(model, state, rng)
    else:
        state = init.copy()
    adapt = new_adaptation(model, config)
    positive = y == 1
    store = {name: [] for name in BLOCKS if getattr(state, name) is not None}
    loglik = []
    total = config.burn + config.keep
    for t in range(total):
        z = sweep(model, state, y, X, rng, adapt, config.alpha_update, config.ridge_moves,
                  config.scale_move, config.partial_scale_moves, config.label_permutation)
        if not np.array_equal(z > 0, positive):
            raise RuntimeError("latent sign no longer matches the observed edges")
        if t == config.burn - 1:
            adapt.freeze()
        if t >= config.burn and (t - config.burn + 1) % config.thin == 0:
            for name in store:
                store[name].append(np.copy(getattr(state, name)))
            loglik.append(log_likelihood(y, eta(model, state, X)))
        if progress is not None:
            progress(t, total)
    if config.burn == 0:
        adapt.freeze()
    draws = {name: np.asarray(v) for name, v in store.items()}
    extra = {}
    if model.has_distance:
        acc_u, acc_lam = adapt.acceptance_rates()
        extra["acceptance_u"] = acc_u.tolist()
        extra["acceptance_lam"] = acc_lam.tolist()
        extra["log_step_u"] = adapt.log_step_u.tolist()
        extra["log_step_lam"] = adapt.log_step_lam.tolist()
    return ChainArchive(model, config, draws, np.asarray(loglik), extra)


def chain_rngs(seed, chains):
    """Independent generators: the seed itself for one chain, spawned streams otherwise."""
    if chains == 1:
        return [np.random.Generator(np.random.PCG64(seed))]
    return [np.random.Generator(np.random.PCG64(s))
            for s in np.random.SeedSequence(seed).spawn(chains)]


# ------------------------------------------------------------ archive

def batch_means_mcse(x, batches=None):
    """Monte Carlo standard error of the mean by non-overlapping batch means."""
    x = np.asarray(x, dtype=np.float64)
    S = x.shape[0]
    if S < 4:
        return np.full(x.shape[1:], np.nan)
    size = max(1, S // batches) if batches else int(np.floor(np.sqrt(S)))
    a = S // size
    means = x[: a * size].reshape(a, size, *x.shape[1:]).mean(axis=1)
    var = size * np.var(means, axis=0, ddof=1)
    return np.sqrt(var / S)


def _column_names(name, shape):
    if not shape:
        return [name]
    return [f"{name}[{','.join(str(i + 1) for i in idx)}]" for idx in np.ndindex(*shape)]


@dataclass
class ChainArchive:
    model: Model
    config: ChainConfig
    draws: dict
    loglik: np.ndarray
    extra: dict = field(default_factory=dict)

    @property
    def n_draws(self):
        return int(self.loglik.shape[0])

    @property
    def variant(self):
        return self.model.variant

    def state(self, s):
        kw = {}
        for name, arr in self.draws.items():
            v = arr[s]
            kw[name] = float(v) if np.ndim(v) == 0 else np.array(v)
        return ModelState(self.model.variant, **kw)

    def states(self):
        for s in range(self.n_draws):
            yield self.state(s)

    def subset(self, index):
        index = np.asarray(index)
        return ChainArchive(self.model, self.config,
                            {k: v[index] for k, v in self.draws.items()},
                            self.loglik[index], dict(self.extra))

    def posterior_mean_state(self):
        """Block-wise posterior means (labels and weights are not meaningful here)."""
        kw = {}
        for name, arr in self.draws.items():
            if name == "xi":
                kw[name] = arr[-1].copy()
                continue
            m = arr.mean(axis=0)
            kw[name] = float(m) if np.ndim(m) == 0 else m
        return ModelState(self.model.variant, **kw)

    def summary(self):
        """Rows of (parameter, mean, sd, mcse) for every scalar coordinate."""
        rows = []
        for name, arr in self.draws.items():
            if name == "xi":
                continue
            flat = arr.reshape(arr.shape[0], -1).astype(np.float64)
            mean, sd = flat.mean(axis=0), flat.std(axis=0, ddof=1) if flat.shape[0] > 1 \
                else np.zeros(flat.shape[1])
            mcse = batch_means_mcse(flat)
            for col, m, s, e in zip(_column_names(name, arr.shape[1:]), mean, sd, mcse):
                rows.append((col, float(m), float(s), float(e)))
        return rows

    # ---- persistence

    def save(self, out_dir):
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        blocks = {}
        for name, arr in self.draws.items():
            shape = list(arr.shape[1:])
            flat = arr.reshape(arr.shape[0], -1)
            fmt = "%d" if name == "xi" else "%.17g"
            if name == "xi":
                flat = flat + 1
            np.savetxt(out / f"{name}.csv", flat, fmt=fmt, delimiter=",",
                       header=",".join(_column_names(name, tuple(shape))), comments="")
            blocks[name] = {"file": f"{name}.csv", "shape": shape}
        np.savetxt(out / "loglik.csv", self.loglik[:, None], fmt="%.17g", header="loglik",
                   comments="")
        with open(out / "mcse.csv", "w") as fh:
            fh.write("parameter,mean,sd,mcse\n")
            for row in self.summary():
                fh.write(f"{row[0]},{row[1]!r},{row[2]!r},{row[3]!r}\n")
        manifest = {
            "variant": self.model.variant,
            "dims": self.model.describe(),
            "seed": self.config.seed,
            "config": self.config.to_dict(),
            "n_draws": self.n_draws,
            "blocks": blocks,
            "loglik": "loglik.csv",
            "mcse": "mcse.csv",
            "extra": self.extra,
        }
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
        return out / "manifest.json"

    @classmethod
    def load(cls, path):
        path = Path(path)
        if path.is_dir():
            path = path / "manifest.json"
        man = json.loads(path.read_text())
        cfg = dict(man["config"])
        config = ChainConfig(**cfg)
        dims = man["dims"]
        model = Model(dims["variant"], dims["n"], dims["K"], dims["p"], config.hyper,
                      dims["reduced"])
        draws = {}
        for name, info in man["blocks"].items():
            arr = np.loadtxt(path.parent / info["file"], delimiter=",", skiprows=1, ndmin=2,
                             dtype=np.int64 if name == "xi" else np.float64)
            if name == "xi":
                arr = arr - 1
            draws[name] = arr.reshape(arr.shape[0], *info["shape"])
        loglik = np.loadtxt(path.parent / man["loglik"], skiprows=1, ndmin=1)
        return cls(model, config, draws, np.atleast_1d(loglik), man.get("extra", {}))
