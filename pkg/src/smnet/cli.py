"""Command-line pipeline: extract, build, fit, assess, communities, simulate."""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .assess import evaluate, ppc, write_metrics_report, write_ppc_report
from .audio import AudioError, extract_file, list_wavs, read_features, METRICS
from .chain import PRESETS, ChainArchive, ChainConfig, chain_rngs, run_chain
from .community import (album_ari_table, coclustering, dahl_partition, node_effect_means,
                        read_partition, write_ari_table, write_partitions)
from .curves import (CurveError, distance_matrix, make_curve, write_curves,
                     write_distance_matrix)
from .graph_build import (DyadicCovariates, assemble_covariates, build_multilayer,
                          read_covariates, read_song_table, write_covariates)
from .models import (VARIANTS, Hyperparameters, Model, ModelState, default_hyperparameters,
                     louvain_block_count, prior_draw, prior_predictive_edges,
                     simulate_dyads)
from .netcore import MultilayerNetwork, NetworkError, read_network, write_network

log = logging.getLogger("smnet")

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 2, 3


class ValidationError(Exception):
    pass


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=False) + "\n")


def _require(path, what):
    if path is None:
        raise ValidationError(f"missing required input: {what}")
    p = Path(path)
    if not p.exists():
        raise ValidationError(f"{what} not found: {path}")
    return p


def _load_network(path):
    try:
        return read_network(_require(path, "network"))
    except (NetworkError, ValueError, KeyError, json.JSONDecodeError) as exc:
        raise ValidationError(f"invalid network {path}: {exc}") from exc


def _load_covariates(path, n):
    if path is None:
        return None
    try:
        cov = read_covariates(_require(path, "covariates"))
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        raise ValidationError(f"invalid covariates {path}: {exc}") from exc
    if cov.p == 0:
        return None
    if cov.n != n:
        raise ValidationError(f"covariates are for n={cov.n}, network has n={n}")
    return cov.dyad_matrix()


# ------------------------------------------------------------ subcommands

def cmd_extract(args):
    wav_dir = _require(args.wav_dir, "WAV directory")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    wavs = list_wavs(wav_dir)
    if not wavs:
        log.warning("no WAV files found in %s", wav_dir)
    tracks, failures = [], []
    for wav in wavs:
        target = out / f"{wav.stem}.csv"
        try:
            series = extract_file(wav, target, args.eps)
        except (AudioError, ValueError, OSError) as exc:
            log.warning("skipping %s: %s", wav.name, exc)
            failures.append({"file": wav.name, "error": str(exc)})
            continue
        tracks.append({"song_id": wav.stem, "file": target.name,
                       "frames": int(series["rms"].values.size)})
    _write_json(out / "manifest.json", {
        "command": "extract", "wav_dir": str(args.wav_dir), "eps": args.eps,
        "tracks": tracks, "failures": failures, "version": __version__})
    return EXIT_OK


def cmd_build(args):
    feat_dir = _require(args.features_dir, "features directory")
    files = sorted(p for p in feat_dir.glob("*.csv"))
    if len(files) < 2:
        raise ValidationError("need feature files for at least two songs")
    songs = [p.stem for p in files]
    if not 1 <= args.k < len(songs):
        raise ValidationError(f"k must be in [1, {len(songs) - 1}]")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    curves_by_metric = {m: [] for m in METRICS}
    for song, path in zip(songs, files):
        series = read_features(path)
        for m in METRICS:
            try:
                curves_by_metric[m].append(make_curve(song, series[m], args.M, args.lam))
            except CurveError as exc:
                raise ValidationError(f"song {song}, metric {m}: {exc}") from exc
    distances = []
    for m in METRICS:
        D = distance_matrix(curves_by_metric[m], args.distance)
        write_distance_matrix(D, args.distance, out / f"distance_{m}.csv", songs)
        distances.append(D)
    write_curves([c for m in METRICS for c in curves_by_metric[m]], out / "curves.csv")
    net = build_multilayer(distances, args.k, songs, list(METRICS))
    write_network(net, out / "network")
    cov_info = None
    if args.song_table:
        table = {row["song_id"]: row for row in read_song_table(_require(args.song_table,
                                                                          "song table"))}
        missing = [s for s in songs if s not in table]
        if missing:
            raise ValidationError(f"song table lacks {missing[:5]}")
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            cov = assemble_covariates([table[s] for s in songs])
        for w in caught:
            log.warning("%s", w.message)
        write_covariates(cov, out / "covariates")
        cov_info = {"names": cov.names, "dir": "covariates"}
    _write_json(out / "manifest.json", {
        "command": "build", "features_dir": str(args.features_dir),
        "song_table": args.song_table, "k": args.k, "M": args.M, "distance": args.distance,
        "spline_lambda": args.lam, "order": "resample_then_standardize",
        "songs": songs, "layers": list(METRICS), "covariates": cov_info,
        "version": __version__})
    return EXIT_OK


def _hyper_from_args(args, network=None):
    base = default_hyperparameters(args.variant, d=args.d)
    over = {}
    if args.hyper:
        over = json.loads(Path(args.hyper).read_text()) if Path(args.hyper).exists() \
            else json.loads(args.hyper)
    h = Hyperparameters.from_dict({**base.to_dict(), **over})
    if args.variant == "SMN-C-SB" and "C" not in over:
        if args.C is not None:
            h = h.updated(C=args.C)
        elif network is not None:
            h = h.updated(C=louvain_block_count(network, seed=args.seed))
    elif args.C is not None:
        h = h.updated(C=args.C)
    return h


def cmd_fit(args):
    net = _load_network(args.network)
    X = _load_covariates(args.covariates, net.n)
    reduced = bool(args.reduced)
    if args.variant != "SMN" and X is None and not reduced:
        log.warning("no covariates supplied: fitting %s with the covariate-free predictor",
                    args.variant)
        reduced = True
    if reduced:
        X = None
    hyper = _hyper_from_args(args, net)
    counts = PRESETS[args.preset]
    config = ChainConfig(
        variant=args.variant, burn=args.burn if args.burn is not None else counts["burn"],
        keep=args.keep if args.keep is not None else counts["keep"],
        thin=args.thin if args.thin is not None else counts["thin"],
        seed=args.seed, hyper=hyper, reduced=reduced, alpha_update=args.alpha_update,
        label_init=args.label_init)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    y = net.dyads()
    timings = {}
    chains = []
    for c, rng in enumerate(chain_rngs(args.seed, args.chains)):
        start = time.perf_counter()
        archive = run_chain(y, X, config, rng=rng)
        timings[f"chain_{c + 1}"] = time.perf_counter() - start
        target = out if args.chains == 1 else out / f"chain_{c + 1}"
        archive.save(target)
        chains.append(str(target.relative_to(out)) if target != out else ".")
    _write_json(out / "run.json", {
        "command": "fit", "network": str(args.network), "covariates": args.covariates,
        "variant": args.variant, "reduced": reduced, "seed": args.seed,
        "chains": chains, "config": config.to_dict(), "version": __version__})
    _write_json(out / "timing.json", timings)
    return EXIT_OK


def _load_archive(path):
    p = _require(path, "archive")
    try:
        return ChainArchive.load(p)
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        raise ValidationError(f"invalid archive {path}: {exc}") from exc


def cmd_assess(args):
    archive = _load_archive(args.archive)
    net = _load_network(args.network)
    if net.n != archive.model.n or net.K != archive.model.K:
        raise ValidationError("archive and network dimensions differ")
    X = None if archive.model.p == 0 else _load_covariates(args.covariates, net.n)
    if archive.model.p and X is None:
        raise ValidationError("archive was fitted with covariates; pass --covariates")
    y = net.dyads()
    out = Path(args.out)
    label = args.label or archive.variant
    rng = np.random.Generator(np.random.PCG64(args.seed))
    report = ppc(archive, y, X, rng)
    report.layer_labels = net.layer_labels
    write_ppc_report(report, out, label)
    write_metrics_report(evaluate(archive, y, X), out, label)
    _write_json(out / "manifest.json", {
        "command": "assess", "archive": str(args.archive), "network": str(args.network),
        "covariates": args.covariates, "seed": args.seed, "label": label,
        "version": __version__})
    return EXIT_OK


def cmd_communities(args):
    archive = _load_archive(args.archive)
    if "xi" not in archive.draws:
        raise ValidationError("community summaries need a SMN-C-SB archive")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    node_labels = layer_labels = None
    if args.network:
        net = _load_network(args.network)
        node_labels, layer_labels = net.node_labels, net.layer_labels
    K = archive.model.K
    parts = [dahl_partition(archive, k) for k in range(K)]
    write_partitions(parts, out / "partitions.csv", node_labels, layer_labels)
    for k in range(K):
        np.savetxt(out / f"coclustering_{k + 1}.csv", coclustering(archive, k), fmt="%.17g",
                   delimiter=",")
    if "delta" in archive.draws:
        np.savetxt(out / "node_effects.csv", node_effect_means(archive), fmt="%.17g",
                   delimiter=",")
    if args.albums:
        albums = read_partition(_require(args.albums, "album partition"), node_labels)
        if albums.size != archive.model.n:
            raise ValidationError("album partition size differs from the network")
        write_ari_table(album_ari_table(archive, albums), out / "ari.csv",
                        args.label or archive.variant, layer_labels)
    _write_json(out / "manifest.json", {
        "command": "communities", "archive": str(args.archive), "albums": args.albums,
        "network": args.network, "version": __version__})
    return EXIT_OK


def cmd_simulate(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.Generator(np.random.PCG64(args.seed))
    hyper = _hyper_from_args(args)
    p = args.p if args.variant != "SMN" else 0
    reduced = args.variant != "SMN" and p == 0
    model = Model(args.variant, args.n, args.K, p, hyper, reduced)
    X = rng.standard_normal((model.D, p)) if p else None
    if X is not None:
        X = (X - X.mean(axis=0)) / X.std(axis=0, ddof=1)
    if args.state:
        state = ModelState.from_dict(json.loads(_require(args.state, "state").read_text()))
        if state.variant != args.variant:
            raise ValidationError("state variant differs from --variant")
    else:
        state = prior_draw(model, rng)
    y = simulate_dyads(model, state, X, rng)
    write_network(MultilayerNetwork.from_dyads(y, model.n), out / "network")
    if X is not None:
        write_covariates(DyadicCovariates.from_dyads(X, model.n, standardized=[True] * p),
                         out / "covariates")
    (out / "state.json").write_text(state.to_json() + "\n")
    if args.draws:
        theta = prior_predictive_edges(model, args.draws, rng)
        np.savetxt(out / "prior_theta.csv", theta, fmt="%.17g", header="theta", comments="")
    _write_json(out / "manifest.json", {
        "command": "simulate", "variant": args.variant, "n": args.n, "K": args.K, "p": p,
        "seed": args.seed, "state": args.state, "draws": args.draws,
        "hyper": hyper.to_dict(), "version": __version__})
    return EXIT_OK


# ------------------------------------------------------------ argument handling

def _common_model_args(p):
    p.add_argument("--variant", choices=VARIANTS, default="SMN")
    p.add_argument("--hyper", help="JSON file or string of hyperparameter overrides")
    p.add_argument("--d", type=int, default=3, help="latent dimension")
    p.add_argument("--C", type=int, default=None,
                   help="block count (default: largest Louvain community count)")
    p.add_argument("--seed", type=int, default=0)


def build_parser():
    parser = argparse.ArgumentParser(prog="smnet", description=__doc__)
    parser.add_argument("--config", help="JSON file of option values; flags override it")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="per-frame audio features from WAV files")
    p.add_argument("--wav-dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--eps", type=float, default=1e-10)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("build", help="curves, distances, kNN layers and covariates")
    p.add_argument("--features-dir", required=True)
    p.add_argument("--song-table")
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--M", type=int, default=1000)
    p.add_argument("--distance", default="canberra",
                   choices=("canberra", "correlation", "cosine", "euclidean"))
    p.add_argument("--lam", type=float, default=None, help="spline penalty (default GCV)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("fit", help="run the MCMC sampler")
    p.add_argument("--network", required=True)
    p.add_argument("--covariates")
    _common_model_args(p)
    p.add_argument("--preset", choices=sorted(PRESETS), default="desk")
    p.add_argument("--burn", type=int)
    p.add_argument("--keep", type=int)
    p.add_argument("--thin", type=int)
    p.add_argument("--chains", type=int, default=1)
    p.add_argument("--reduced", action="store_true",
                   help="covariate-free predictor (eta = zeta for SMN)")
    p.add_argument("--alpha-update", choices=("slice", "escobar-west"), default="slice")
    p.add_argument("--label-init", choices=("louvain", "prior"), default="louvain",
                   help="starting block labels for SMN-C-SB")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("assess", help="posterior predictive checks and fit metrics")
    p.add_argument("--archive", required=True)
    p.add_argument("--network", required=True)
    p.add_argument("--covariates")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--label")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_assess)

    p = sub.add_parser("communities", help="co-clustering, Dahl partitions and ARI")
    p.add_argument("--archive", required=True)
    p.add_argument("--network")
    p.add_argument("--albums")
    p.add_argument("--label")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_communities)

    p = sub.add_parser("simulate", help="synthetic data and prior-predictive draws")
    _common_model_args(p)
    p.add_argument("--n", type=int, default=30)
    p.add_argument("--K", type=int, default=3)
    p.add_argument("--p", type=int, default=1)
    p.add_argument("--state", help="ModelState JSON to simulate from instead of the prior")
    p.add_argument("--draws", type=int, default=0, help="prior-predictive edge probabilities")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)
    return parser


def _argv_with_config(parser, argv):
    """Parse once to find --config, then re-parse with its values as defaults."""
    args = parser.parse_args(argv)
    if not args.config:
        return args
    try:
        conf = json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read config {args.config}: {exc}") from exc
    sub = parser._subparsers._group_actions[0].choices[args.command]
    known = {a.dest for a in sub._actions}
    unknown = set(conf) - known
    if unknown:
        raise ValidationError(f"unknown config keys: {sorted(unknown)}")
    sub.set_defaults(**conf)
    for action in sub._actions:
        if action.dest in conf:
            action.required = False
    return parser.parse_args(argv)


def main(argv=None):
    parser = build_parser()
    try:
        args = _argv_with_config(parser, argv)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # noqa: BLE001 - report and map to the runtime exit code
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
