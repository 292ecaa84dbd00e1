"""Command-line front end: ``mdra gen | ingest | train | report | mds``.

Exit codes are 0 on success, 2 for configuration or input errors and 3 when
training fails numerically.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from .analysis import (
    classical_mds,
    cluster_report,
    real_features,
    write_embedding_tsv,
    write_masses_tsv,
    write_rgb_tsv,
)
from .errors import DivergenceError, MDRAError
from .signals import (
    ComplexPeriodicSpec,
    PeriodicSpec,
    WindowSpec,
    gen_complex_periodic,
    gen_periodic,
    read_csv,
    read_dataset,
    sliding_window,
    write_dataset,
)
from .training import OptimizerConfig, TrainConfig, TrainedModel, extract, train
from .vb import Hyperparams, effective_clusters

log = logging.getLogger("mdra")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

# Shared optimiser schedule of the presets; network and prior values follow
# the published parameter tables for each experiment.
_SCHEDULE = dict(
    method="adam",
    learning_rate=3e-3,
    epochs_per_outer=10,
    batch_size=32,
    vb_iters=5,
    free_energy_threshold=1e-3,
    max_outer_iters=80,
)

PRESETS = {
    "periodic": dict(L=4, capacity=8, fft_style=True, cpx=False, K=5,
                     theta0=0.5, nu0=1.0, lambda0=0.01, **_SCHEDULE),
    "complex-periodic": dict(L=4, capacity=8, fft_style=True, cpx=False, K=5,
                             theta0=1.0, nu0=1.0, lambda0=0.01, **_SCHEDULE),
    "route": dict(L=4, capacity=8, fft_style=True, cpx=False, K=10,
                  theta0=10.0, nu0=1.0, lambda0=5.0, **_SCHEDULE),
}

# keys accepted in a flat run configuration (preset, config file or flags)
RUN_KEYS = (
    "K", "theta0", "nu0", "lambda0", "L", "capacity", "fft_style", "cpx", "reverse",
    "method", "learning_rate", "epochs_per_outer", "batch_size", "clip_norm",
    "vb_iters", "free_energy_threshold", "relative_threshold", "max_outer_iters", "seed",
)


def preset_help():
    lines = []
    for name, p in PRESETS.items():
        lines.append(
            f"  {name:<17} L={p['L']} capacity={p['capacity']} fft={p['fft_style']} cpx={p['cpx']} "
            f"K={p['K']} theta0={p['theta0']} nu0={p['nu0']} lambda0={p['lambda0']}"
        )
    return "presets:\n" + "\n".join(lines)


def resolve_run_config(preset=None, config=None, flags=None):
    """Merge run settings with precedence flags > config file > preset.

    Returns
    -------
    TrainConfig
    """
    merged = {"seed": 0}
    if preset is not None:
        if preset not in PRESETS:
            raise MDRAError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        merged.update(PRESETS[preset])
    for layer in (config or {}, flags or {}):
        unknown = set(layer) - set(RUN_KEYS)
        if unknown:
            raise MDRAError(f"unknown configuration keys {sorted(unknown)}")
        merged.update({k: v for k, v in layer.items() if v is not None})
    missing = {"K", "theta0", "nu0", "lambda0"} - set(merged)
    if missing:
        raise MDRAError(f"missing settings {sorted(missing)}; give --preset or set them explicitly")
    opt_keys = ("method", "learning_rate", "epochs_per_outer", "batch_size", "clip_norm")
    opt = OptimizerConfig(**{k: merged[k] for k in opt_keys if k in merged})
    hyper = Hyperparams(float(merged["theta0"]), float(merged["nu0"]), float(merged["lambda0"]),
                        int(merged["K"]))
    rest = {
        k: merged[k]
        for k in ("L", "capacity", "fft_style", "cpx", "reverse", "vb_iters",
                  "free_energy_threshold", "relative_threshold", "max_outer_iters")
        if k in merged
    }
    return TrainConfig(hyper=hyper, optimizer=opt, rng_seed=int(merged["seed"]), **rest)


def _read_json(path):
    with open(path) as fh:
        return json.load(fh)


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------


def cmd_gen(args):
    if args.kind == "periodic":
        spec = PeriodicSpec(
            n_per_class=args.n_per_class,
            base_length=args.base_length,
            max_phase_shift=args.phase_shift,
            amplitude_range=(args.amplitude_min, args.amplitude_max),
            noise_level=args.noise,
            max_length_shortening=args.shortening,
            seed=args.seed,
        )
        data = gen_periodic(spec)
    else:
        spec = ComplexPeriodicSpec(n_per_type=args.n_per_type, length=args.length, seed=args.seed)
        data = gen_complex_periodic(spec)
    write_dataset(args.output, data)
    log.info("wrote %d signals to %s", len(data), args.output)


def cmd_ingest(args):
    spec = WindowSpec(args.window, args.slide, args.sampling_pitch, args.threshold, args.channel)
    windows, starts = sliding_window(read_csv(args.csv), spec)
    write_dataset(args.output, windows)
    log.info("wrote %d windows to %s", len(windows), args.output)


def cmd_train(args):
    flags = {k: getattr(args, k, None) for k in RUN_KEYS}
    config = _read_json(args.config) if args.config else None
    cfg = resolve_run_config(args.preset, config, flags)
    data = read_dataset(args.data)
    os.makedirs(args.output, exist_ok=True)
    with open(os.path.join(args.output, "trace.tsv"), "w") as progress:
        trained = train(data, cfg, progress=progress)
    trained.save(os.path.join(args.output, "checkpoint.json"))
    log.info("trained %d outer iterations; masses %s", len(trained.trace),
             np.round(trained.vb.R.mean(axis=0), 4).tolist())


def _features(trained, data, which):
    if which == "r":
        return trained.vb.R
    H, _ = extract(trained.model, trained.vb, data)
    return real_features(H)


def _load(args):
    trained = TrainedModel.load(args.checkpoint)
    data = read_dataset(args.data)
    if len(data) != trained.vb.N:
        raise MDRAError(f"dataset has {len(data)} signals, checkpoint was trained on {trained.vb.N}")
    return trained, data


def cmd_report(args):
    trained, data = _load(args)
    labels = [s.label for s in data]
    has_labels = all(lab is not None for lab in labels)
    feats = _features(trained, data, args.features)
    rep = cluster_report(trained.vb.R, labels if has_labels else None, feats, args.dims)
    os.makedirs(args.output, exist_ok=True)
    d = rep.to_dict()
    d.pop("embedding")
    d["ids"] = [s.id for s in data]
    d["effective_clusters"] = [
        {"cluster": k, "mass": m} for k, m in effective_clusters(trained.vb.R, args.mass_threshold)
    ]
    with open(os.path.join(args.output, "report.json"), "w") as fh:
        json.dump(d, fh, indent=1, sort_keys=True)
        fh.write("\n")
    write_embedding_tsv(os.path.join(args.output, "embedding.tsv"), d["ids"], rep.embedding,
                        rep.assignments, labels if has_labels else None)
    write_masses_tsv(os.path.join(args.output, "masses.tsv"), rep.masses)
    if rep.purity is not None:
        log.info("purity %.4f", rep.purity)


def cmd_mds(args):
    trained, data = _load(args)
    Y = classical_mds(_features(trained, data, args.features), args.dims)
    ids = [s.id for s in data]
    if args.rgb:
        write_rgb_tsv(args.output, ids, Y)
    else:
        assignments = trained.vb.R.argmax(axis=1)
        labels = [s.label for s in data]
        write_embedding_tsv(args.output, ids, Y, assignments,
                            labels if all(lab is not None for lab in labels) else None)


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------


def _bool(s):
    v = s.lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {s!r}")


def build_parser():
    fmt = argparse.RawDescriptionHelpFormatter
    p = argparse.ArgumentParser(
        prog="mdra",
        description="Multi-decoder recurrent autoencoder clustering of time series.",
        epilog=preset_help(),
        formatter_class=fmt,
    )
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a synthetic dataset", epilog=preset_help(), formatter_class=fmt)
    g.add_argument("kind", choices=["periodic", "complex-periodic"])
    g.add_argument("-o", "--output", required=True, help="JSON-lines dataset to write")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--n-per-class", type=int, default=100, help="periodic: signals per class")
    g.add_argument("--base-length", type=int, default=64, help="periodic: full signal length")
    g.add_argument("--phase-shift", type=float, default=1.0, help="periodic: max shift in periods")
    g.add_argument("--amplitude-min", type=float, default=0.5)
    g.add_argument("--amplitude-max", type=float, default=1.0)
    g.add_argument("--noise", type=float, default=0.02, help="periodic: uniform noise half-width")
    g.add_argument("--shortening", type=float, default=0.8, help="periodic: max fraction cut off")
    g.add_argument("--n-per-type", type=int, default=500, help="complex-periodic: signals per type")
    g.add_argument("--length", type=int, default=32, help="complex-periodic: signal length")
    g.set_defaults(func=cmd_gen)

    i = sub.add_parser("ingest", help="cut a CSV recording into differenced windows",
                       epilog=preset_help(), formatter_class=fmt)
    i.add_argument("csv", help="header row, timestamp column, then channels")
    i.add_argument("-o", "--output", required=True)
    i.add_argument("--window", type=int, default=512)
    i.add_argument("--slide", type=int, default=8)
    i.add_argument("--sampling-pitch", type=float, default=0.1, help="seconds per row (metadata)")
    i.add_argument("--threshold", type=float, default=0.0,
                   help="keep windows whose max |difference| in --channel reaches this")
    i.add_argument("--channel", type=int, default=0, help="activity channel (0-based, after timestamp)")
    i.set_defaults(func=cmd_ingest)

    t = sub.add_parser("train", help="fit the model; writes checkpoint.json and trace.tsv",
                       epilog=preset_help() + "\n\nprecedence: flags > --config file > --preset",
                       formatter_class=fmt)
    t.add_argument("-d", "--data", required=True, help="JSON-lines dataset")
    t.add_argument("-o", "--output", required=True, help="output directory")
    t.add_argument("--preset", choices=sorted(PRESETS))
    t.add_argument("--config", help="JSON object with any of: " + ", ".join(RUN_KEYS))
    t.add_argument("--seed", type=int)
    t.add_argument("--threads", type=int, default=1, help="worker cap (computation is single-threaded)")
    t.add_argument("--K", type=int, dest="K", help="number of decoders")
    t.add_argument("--theta0", type=float, help="Dirichlet concentration")
    t.add_argument("--nu0", type=float, help="gamma shape")
    t.add_argument("--lambda0", type=float, help="gamma rate")
    t.add_argument("--L", type=int, dest="L", help="hidden size")
    t.add_argument("--capacity", type=int, help="rotation layers of the tunable parametrisation")
    t.add_argument("--fft", type=_bool, dest="fft_style", help="butterfly layers (true/false)")
    t.add_argument("--cpx", type=_bool, help="extra block phases (true/false)")
    t.add_argument("--reverse", type=_bool, help="decoders emit the last frame first (true/false)")
    t.add_argument("--optimizer", choices=["adam", "sgd"], dest="method")
    t.add_argument("--lr", type=float, dest="learning_rate")
    t.add_argument("--epochs", type=int, dest="epochs_per_outer", help="epochs per outer iteration")
    t.add_argument("--batch-size", type=int)
    t.add_argument("--clip-norm", type=float)
    t.add_argument("--vb-iters", type=int)
    t.add_argument("--threshold", type=float, dest="free_energy_threshold",
                   help="stop when |dF| < threshold * |F| (absolute with --absolute-threshold)")
    t.add_argument("--absolute-threshold", action="store_const", const=False, dest="relative_threshold")
    t.add_argument("--max-outer-iters", type=int)
    t.set_defaults(func=cmd_train)

    for name, func, text in (("report", cmd_report, "cluster report and embedding TSVs"),
                             ("mds", cmd_mds, "classical MDS embedding of r_n or h_n")):
        r = sub.add_parser(name, help=text, epilog=preset_help(), formatter_class=fmt)
        r.add_argument("-c", "--checkpoint", required=True)
        r.add_argument("-d", "--data", required=True, help="the dataset used for training")
        r.add_argument("-o", "--output", required=True,
                       help="output directory" if name == "report" else "TSV file to write")
        r.add_argument("--features", choices=["r", "h"], default="r",
                       help="responsibilities r_n or encoded states h_n")
        r.add_argument("--dims", type=int, default=3 if name == "mds" else 2)
        if name == "report":
            r.add_argument("--mass-threshold", type=float, default=0.1)
        else:
            r.add_argument("--rgb", action="store_true", help="write id, x, y, z, r, g, b rows")
        r.set_defaults(func=func)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if getattr(args, "threads", 1) < 1:
        parser.error("--threads must be >= 1")
    try:
        args.func(args)
    except DivergenceError as exc:
        print(f"mdra: numerical failure: {exc} (signals {exc.signal_ids[:10]})", file=sys.stderr)
        return EXIT_NUMERIC
    except FloatingPointError as exc:
        print(f"mdra: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (MDRAError, ValueError, KeyError, OSError) as exc:
        print(f"mdra: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
