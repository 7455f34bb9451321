"""Small builders shared by several test modules."""
import numpy as np

from smnet.chain import BLOCKS, ChainArchive, ChainConfig
from smnet.models import Model, default_hyperparameters, eta, log_likelihood


def archive_from_states(model, states, y=None, X=None):
    draws = {}
    for name in BLOCKS:
        if getattr(states[0], name) is not None:
            draws[name] = np.asarray([np.copy(getattr(s, name)) for s in states])
    if y is None:
        loglik = np.zeros(len(states))
    else:
        loglik = np.array([log_likelihood(y, eta(model, s, X)) for s in states])
    config = ChainConfig(model.variant, burn=0, keep=len(states), thin=1, hyper=model.hyper,
                         reduced=model.reduced)
    return ChainArchive(model, config, draws, loglik)


def label_archive(label_draws, K=1):
    """SB archive whose only meaningful block is the (S, n) label array (0-based)."""
    L = np.asarray(label_draws)
    S, n = L.shape
    C = int(L.max()) + 1
    model = Model("SMN-C-SB", max(n, 2), K, 1, default_hyperparameters("SMN-C-SB", C=max(C, 1)))
    xi = np.repeat(L[:, :, None], K, axis=2)
    config = ChainConfig("SMN-C-SB", burn=0, keep=S, thin=1, hyper=model.hyper)
    return ChainArchive(model, config, {"xi": xi}, np.zeros(S))


def write_wav_corpus(directory, n_songs=5, rate=8000, seconds=0.6, seed=0):
    """Short synthetic tracks (tone plus noise) and a matching song table."""
    import csv

    from scipy.io import wavfile

    rng = np.random.default_rng(seed)
    directory.mkdir(parents=True, exist_ok=True)
    t = np.arange(int(rate * seconds)) / rate
    rows = []
    for s in range(n_songs):
        f0 = 200.0 * (s + 1)
        envelope = np.linspace(0.2 + 0.1 * s, 1.0, t.size) ** (s + 1)
        x = 0.4 * envelope * np.sin(2 * np.pi * f0 * t) + 0.05 * rng.normal(size=t.size)
        wavfile.write(directory / f"song{s + 1}.wav", rate,
                      (np.clip(x, -1, 1) * 32767).astype(np.int16))
        row = {"song_id": f"song{s + 1}", "band": "synthetic", "album": f"A{s % 2}",
               "year": 1983 + 2 * s + s % 2, "duration_s": 180 + 17 * s * s, "bpm": 90 + 11 * s}
        row.update({f"emo_{i}": float(rng.uniform()) for i in range(1, 9)})
        row.update(vad_v=rng.uniform(), vad_a=rng.uniform(), vad_d=rng.uniform())
        rows.append(row)
    table = directory.parent / "songs.csv"
    with open(table, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    return table


def run_pipeline(root, seed=0):
    """extract -> build -> fit (SB) -> assess -> communities under ``root``; returns exit codes."""
    from smnet.cli import main

    table = write_wav_corpus(root / "wav")
    codes = [
        main(["extract", "--wav-dir", str(root / "wav"), "--out", str(root / "features")]),
        main(["build", "--features-dir", str(root / "features"), "--song-table", str(table),
              "--k", "2", "--M", "200", "--out", str(root / "build")]),
        main(["fit", "--network", str(root / "build" / "network"), "--covariates",
              str(root / "build" / "covariates"), "--variant", "SMN-C-SB", "--d", "2",
              "--burn", "20", "--keep", "40", "--thin", "2", "--seed", str(seed),
              "--out", str(root / "fit")]),
        main(["assess", "--archive", str(root / "fit"), "--network", str(root / "build" / "network"),
              "--covariates", str(root / "build" / "covariates"), "--seed", str(seed),
              "--out", str(root / "assess")]),
    ]
    albums = root / "albums.csv"
    albums.write_text("node_id,label\n" + "".join(f"song{s + 1},A{s % 2}\n" for s in range(5)))
    codes.append(main(["communities", "--archive", str(root / "fit"), "--network",
                       str(root / "build" / "network"), "--albums", str(albums),
                       "--out", str(root / "communities")]))
    return codes


def tree_bytes(root, skip=("timing.json",)):
    """Relative path -> bytes for every file below ``root`` except wall-clock records."""
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*"))
            if p.is_file() and p.name not in skip}
