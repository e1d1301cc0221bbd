"""Command-line entry point: ``spectral-complement <subcommand> ...``.

Option values are resolved as command-line flag > ``--config`` JSON file >
built-in default. Config files hold flat keys named like the flags with
dashes replaced by underscores (``learning_rate``, ``num_negatives``, ...).
"""

import argparse
import json
import logging
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import errors
from .data_io import SynthSpec, generate_synthetic, load_features, write_features, write_report
from .estimator import ComplementRecommender
from .evaluation import evaluate, split_edges
from .graph import read_edge_list, write_edge_list
from .model import ModelState, load_checkpoint, save_checkpoint
from .spectral import DEFAULT_NODE_CAP, DEFAULT_NUM_BINS, analyze_dataset
from .training import TrainingConfig, gradient_check, train

logger = logging.getLogger("spectral_complement")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INPUT = 3
EXIT_CAPACITY = 4
EXIT_RUNTIME = 5

# most specific first; every library error class resolves to one code
EXIT_CODES = (
    (errors.ConfigError, EXIT_USAGE),
    (errors.InputError, EXIT_INPUT),
    (errors.CapacityError, EXIT_CAPACITY),
    (errors.DivergenceError, EXIT_RUNTIME),
    (errors.ReportIOError, EXIT_RUNTIME),
    (errors.SpectralComplementError, EXIT_RUNTIME),
)

COMMON_DEFAULTS = {
    "out_dir": ".",
    "seed": 42,
    "deterministic": False,
    "threads": None,
}

COMMAND_DEFAULTS = {
    "analyze": {
        "edges": None, "features": None, "bins": DEFAULT_NUM_BINS, "dims": None,
        "node_cap": DEFAULT_NODE_CAP,
    },
    "train": {
        "edges": None, "features": None, "train_config": None,
        "epochs": 100, "learning_rate": 1e-3, "optimizer": "adam", "num_negatives": 5,
        "temperature": 1.0, "batch_size": 256, "embed_dim": 16, "num_layers": 1,
        "shared_weights": True, "branches": "both", "checkpoint_every": 1,
        "checkpoint_format": "binary", "validate": False,
    },
    "evaluate": {
        "edges": None, "features": None, "checkpoint": None, "pool": 100,
        "per_query_csv": False,
    },
    "recommend": {
        "edges": None, "features": None, "checkpoint": None, "item": None, "topk": 10,
        "pool": None,
    },
    "synth": {
        "clusters": 4, "items_per_cluster": 50, "feature_dim": 8, "noise": 0.1,
        "wiring": "heterophilous", "pairing": "cyclic", "edge_probability": 0.1,
    },
    "gradcheck": {
        "nodes": 6, "input_dim": 3, "embed_dim": 4, "num_negatives": 2, "temperature": 1.0,
        "shared_weights": True, "num_seeds": 10, "tolerance": 1e-4,
    },
}

REQUIRED = {
    "analyze": ("edges", "features"),
    "train": ("edges", "features"),
    "evaluate": ("edges", "features", "checkpoint"),
    "recommend": ("edges", "features", "checkpoint", "item"),
    "synth": (),
    "gradcheck": (),
}

TRAINING_KEYS = ("epochs", "learning_rate", "optimizer", "num_negatives", "temperature",
                 "batch_size", "embed_dim", "num_layers", "shared_weights", "branches")


@dataclass
class CliConfig:
    command: str
    options: dict = field(default_factory=dict)

    def __getattr__(self, name):
        try:
            return self.__dict__["options"][name]
        except KeyError:
            raise AttributeError(name) from None

    @property
    def out_path(self):
        return Path(self.options["out_dir"])

    def training_config(self):
        """TrainingConfig from (in rising precedence) defaults, the
        ``train_config`` JSON file, the ``--config`` file and flags."""
        data = {k: self.options[k] for k in TRAINING_KEYS}
        data["seed"] = self.options["seed"]
        return TrainingConfig(**data).validate()


def _add_common(p):
    p.add_argument("--config", help="JSON file with flat option keys")
    p.add_argument("--out-dir", help="directory for outputs (default: .)")
    p.add_argument("--seed", type=int, help="random seed (default: 42)")
    p.add_argument("--deterministic", action="store_true",
                   help="single-threaded, byte-reproducible outputs")
    p.add_argument("--threads", type=int, help="BLAS threads (default: all cores)")
    p.add_argument("-v", "--verbose", action="store_true")


def _graph_inputs(p):
    p.add_argument("--edges", help="tab-separated edge list")
    p.add_argument("--features", help="feature file (text or .npy)")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="spectral-complement",
        description="Spectral analysis and low/mid-pass GCN recommendation "
                    "on complementary item graphs.",
        argument_default=argparse.SUPPRESS,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="spectrum and high-frequency area of features",
                       argument_default=argparse.SUPPRESS)
    _add_common(p)
    _graph_inputs(p)
    p.add_argument("--bins", type=int, help=f"histogram bins over [0, 2] (default {DEFAULT_NUM_BINS})")
    p.add_argument("--dims", type=int, nargs="+", help="feature columns to histogram")
    p.add_argument("--node-cap", type=int, help="largest graph for the dense eigensolver")

    p = sub.add_parser("train", help="train the model; writes checkpoints and trace.csv",
                       argument_default=argparse.SUPPRESS)
    _add_common(p)
    _graph_inputs(p)
    p.add_argument("--train-config", help="JSON file with TrainingConfig keys")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", "--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--optimizer", choices=("adam", "sgd"))
    p.add_argument("--negatives", "--num-negatives", dest="num_negatives", type=int)
    p.add_argument("--temperature", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--embed-dim", type=int)
    p.add_argument("--layers", "--num-layers", dest="num_layers", type=int)
    p.add_argument("--unshared", dest="shared_weights", action="store_false",
                   help="separate filter weights for the two branches")
    p.add_argument("--branches", choices=("both", "low", "mid"))
    p.add_argument("--checkpoint-every", type=int, help="epochs between checkpoints")
    p.add_argument("--checkpoint-format", choices=("binary", "json"))
    p.add_argument("--validate", action="store_true", help="record validation HR@10")

    p = sub.add_parser("evaluate", help="HR@5/HR@10/NDCG on the held-out test edges",
                       argument_default=argparse.SUPPRESS)
    _add_common(p)
    _graph_inputs(p)
    p.add_argument("--checkpoint")
    p.add_argument("--pool", type=int, help="sampled negatives per query (default 100)")
    p.add_argument("--per-query-csv", action="store_true")

    p = sub.add_parser("recommend", help="top-K complementary items for one item",
                       argument_default=argparse.SUPPRESS)
    _add_common(p)
    _graph_inputs(p)
    p.add_argument("--checkpoint")
    p.add_argument("--item", type=int)
    p.add_argument("--topk", type=int)
    p.add_argument("--pool", type=int, help="rank a random sample of non-neighbours")

    p = sub.add_parser("synth", help="write a planted-cluster dataset",
                       argument_default=argparse.SUPPRESS)
    _add_common(p)
    p.add_argument("--clusters", type=int)
    p.add_argument("--items-per-cluster", type=int)
    p.add_argument("--feature-dim", type=int)
    p.add_argument("--noise", type=float)
    p.add_argument("--wiring", choices=("homophilous", "heterophilous"))
    p.add_argument("--pairing", choices=("cyclic", "matched"))
    p.add_argument("--edge-probability", type=float)

    p = sub.add_parser("gradcheck", help="finite-difference check of the gradients",
                       argument_default=argparse.SUPPRESS)
    _add_common(p)
    p.add_argument("--nodes", type=int)
    p.add_argument("--input-dim", type=int)
    p.add_argument("--embed-dim", type=int)
    p.add_argument("--negatives", dest="num_negatives", type=int)
    p.add_argument("--temperature", type=float)
    p.add_argument("--unshared", dest="shared_weights", action="store_false")
    p.add_argument("--num-seeds", type=int)
    p.add_argument("--tolerance", type=float)
    return parser


def _read_json(path, what):
    try:
        with Path(path).open(encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise errors.ConfigError(f"cannot read {what} {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise errors.ConfigError(f"{what} {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise errors.ConfigError(f"{what} {path} must hold a JSON object")
    return data


def parse_config(argv=None):
    """Parse ``argv`` into a :class:`CliConfig`.

    Raises :class:`ConfigError` for unknown config-file keys and for missing
    required inputs (naming the flag).
    """
    ns = vars(build_parser().parse_args(argv))
    command = ns.pop("command")
    verbose = ns.pop("verbose", False)
    options = dict(COMMON_DEFAULTS)
    options.update(COMMAND_DEFAULTS[command])
    allowed = set(options)

    layers = []
    if command == "train":
        train_cfg = ns.get("train_config")
        if train_cfg is None and "config" in ns:
            train_cfg = _read_json(ns["config"], "config file").get("train_config")
        if train_cfg:
            data = _read_json(train_cfg, "training config")
            TrainingConfig.from_dict(data)
            layers.append(("training config", data))
    if "config" in ns:
        layers.append(("config file", _read_json(ns.pop("config"), "config file")))
    for what, data in layers:
        unknown = sorted(set(data) - allowed)
        if unknown:
            raise errors.ConfigError(f"unknown {what} keys for '{command}': {', '.join(unknown)}")
        options.update(data)
    options.update(ns)
    options["verbose"] = bool(verbose)

    for key in REQUIRED[command]:
        if options.get(key) is None:
            raise errors.ConfigError(f"'{command}' requires --{key.replace('_', '-')}")
    if options["seed"] is None:
        options["seed"] = 42
    return CliConfig(command, options)


# -- subcommands ----------------------------------------------------------------

def _load_inputs(cfg):
    features = load_features(cfg.features)
    g = read_edge_list(cfg.edges, num_nodes=features.item_count)
    return g, features.rows


def _prepare_out(cfg):
    out = cfg.out_path
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise errors.ReportIOError(f"cannot create output directory {out}: {exc}") from exc
    return out


def cmd_analyze(cfg):
    g, X = _load_inputs(cfg)
    report = analyze_dataset(g, X, num_bins=cfg.bins, dims_for_histogram=cfg.dims,
                             seed=cfg.seed, node_cap=cfg.node_cap)
    out = _prepare_out(cfg)
    report.write(out / "spectrum.csv", out / "spectrum.json")
    if g.num_nodes > cfg.node_cap:
        logger.warning("graph exceeds node cap %d: histogram omitted", cfg.node_cap)
    print(json.dumps({"s_high_mean": report.s_high_mean, "num_nodes": g.num_nodes,
                      "num_edges": g.num_edges}))
    return EXIT_OK


def cmd_train(cfg):
    g, X = _load_inputs(cfg)
    config = cfg.training_config()
    split = split_edges(g, seed=cfg.seed)
    train_graph = split.train_graph()
    out = _prepare_out(cfg)
    suffix = "bin" if cfg.checkpoint_format == "binary" else "json"
    meta = {"split_seed": cfg.seed, "training": config.to_dict()}

    def on_epoch_end(epoch, params, trace):
        if epoch % cfg.checkpoint_every == 0 or epoch == config.epochs:
            save_checkpoint(params, out / f"checkpoint_epoch_{epoch}.{suffix}",
                            cfg.checkpoint_format, dict(meta, epoch=epoch))

    val = split.oriented("validation") if cfg.validate else None
    params, trace = train(train_graph, X, config, val_edges=val, eval_graph=g,
                          on_epoch_end=on_epoch_end)
    trace.write_csv(out / "trace.csv", include_time=not cfg.deterministic)
    print(json.dumps({"epochs": config.epochs, "final_loss": trace.loss[-1],
                      "checkpoint": str(out / f"checkpoint_epoch_{config.epochs}.{suffix}")}))
    return EXIT_OK


def _restore(cfg):
    g, X = _load_inputs(cfg)
    params, meta = load_checkpoint(cfg.checkpoint)
    if params.input_dim != X.shape[1]:
        raise errors.InputError(
            f"checkpoint expects {params.input_dim} features, file has {X.shape[1]}")
    return g, X, params, meta


def cmd_evaluate(cfg):
    g, X, params, meta = _restore(cfg)
    split = split_edges(g, seed=meta.get("split_seed", cfg.seed))
    state = ModelState(params, split.train_graph(), X)
    report = evaluate(split, state, pool_size=cfg.pool, seed=cfg.seed)
    out = _prepare_out(cfg)
    write_report(report, out / "eval.json")
    if cfg.per_query_csv:
        report.write_query_csv(out / "eval_queries.csv")
    print(json.dumps({k: v for k, v in report.to_dict().items() if k != "per_query_ranks"}))
    return EXIT_OK


def cmd_recommend(cfg):
    g, X, params, _ = _restore(cfg)
    est = ComplementRecommender.from_params(params, X, g)
    rng = np.random.default_rng(cfg.seed)
    recs = est.recommend(cfg.item, cfg.topk, pool=cfg.pool, rng=rng)
    if not recs:
        logger.warning("item %d has no non-neighbours to recommend", cfg.item)
    out = _prepare_out(cfg)
    payload = {"item": cfg.item, "topk": cfg.topk,
               "recommendations": [{"item": i, "score": s} for i, s in recs]}
    write_report(payload, out / "recommendations.json")
    for i, s in recs:
        print(f"{i}\t{s:.6f}")
    return EXIT_OK


def cmd_synth(cfg):
    spec = SynthSpec(cfg.clusters, cfg.items_per_cluster, cfg.feature_dim, cfg.noise,
                     cfg.wiring, cfg.edge_probability, cfg.seed, cfg.pairing)
    g, X, labels = generate_synthetic(spec)
    out = _prepare_out(cfg)
    try:
        write_edge_list(g, out / "edges.tsv")
        write_features(X, out / "features.txt")
        (out / "labels.txt").write_text("".join(f"{k}\t{c}\n" for k, c in enumerate(labels)))
    except OSError as exc:
        raise errors.ReportIOError(f"cannot write synthetic dataset: {exc}") from exc
    print(json.dumps({"num_nodes": g.num_nodes, "num_edges": g.num_edges, "out_dir": str(out)}))
    return EXIT_OK


def cmd_gradcheck(cfg):
    reports = []
    for k in range(cfg.num_seeds):
        reports.append(gradient_check(
            num_nodes=cfg.nodes, input_dim=cfg.input_dim, embed_dim=cfg.embed_dim,
            num_negatives=cfg.num_negatives, seed=cfg.seed + k, tau=cfg.temperature,
            shared_weights=cfg.shared_weights))
    worst = max(r["max_relative_error"] for r in reports)
    print(json.dumps({"max_relative_error": worst, "tolerance": cfg.tolerance,
                      "passed": worst < cfg.tolerance, "seeds": cfg.num_seeds}))
    return EXIT_OK if worst < cfg.tolerance else EXIT_RUNTIME


COMMANDS = {
    "analyze": cmd_analyze,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "recommend": cmd_recommend,
    "synth": cmd_synth,
    "gradcheck": cmd_gradcheck,
}


def exit_code_for(exc):
    for cls, code in EXIT_CODES:
        if isinstance(exc, cls):
            return code
    raise TypeError(f"not a library error: {exc!r}")


def run(cfg):
    """Execute a parsed command; returns the process exit status."""
    threads = 1 if cfg.deterministic else cfg.threads
    try:
        with threadpool_limits(limits=threads):
            return COMMANDS[cfg.command](cfg)
    except errors.SpectralComplementError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exit_code_for(exc)


def main(argv=None):
    try:
        cfg = parse_config(argv)
    except errors.SpectralComplementError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exit_code_for(exc)
    logging.basicConfig(level=logging.INFO if cfg.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    logging.captureWarnings(True)
    warnings.simplefilter("default")
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
