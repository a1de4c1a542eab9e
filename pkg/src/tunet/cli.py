"""Command-line entry point: ``tunet {synth,train,eval,predict,gradcheck}``.

Settings come from a flat ``key=value`` file (``--config``) and command-line
flags; flags win. Every command writes ``run_manifest.txt`` into ``--out``.
"""
import argparse
import hashlib
import logging
import os
import sys
import time
from dataclasses import asdict, dataclass, fields

import numpy as np

from . import __version__, data, metrics, model, optim
from ._accel import USE_NUMBA
from .errors import ChecksumError, ConfigError, DataError, DivergenceError, ShapeError, VersionError
from .gradcheck import run_gradcheck

log = logging.getLogger("tunet")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_DIVERGENCE = 4
EXIT_GRADCHECK = 5
EXIT_CHECKPOINT = 6

TASKS = ("detect", "classify")


@dataclass
class RunConfig:
    task: str = "detect"
    cls: int = 6
    manifest: str = ""
    out: str = "run"
    checkpoint: str = ""
    split: str = "test"
    normalize: bool = True
    # model
    input_channels: int = 52
    series_length: int = 192
    depth: int = 3
    base_channels: int = 64
    conv_kernel: int = 3
    # training
    batch_size: int = 128
    epochs: int = 200
    lr_init: float = 0.005
    lr_decay: float = 0.5
    decay_every: int = 10
    max_grad_norm: float = 0.0
    seed: int = 0
    precision: int = 32

    def validate(self):
        if self.task not in TASKS:
            raise ConfigError(f"task must be one of {TASKS}, got {self.task!r}")
        if self.cls < 1:
            raise ConfigError("cls must be >= 1")
        self.model_config().validate()
        self.train_config().validate()
        return self

    @property
    def num_classes(self):
        return 2 if self.task == "detect" else self.cls + 1

    def model_config(self):
        return model.TUnetConfig(
            input_channels=self.input_channels,
            series_length=self.series_length,
            num_classes=self.num_classes,
            depth=self.depth,
            base_channels=self.base_channels,
            conv_kernel=self.conv_kernel,
            seed=self.seed,
        )

    def train_config(self):
        return optim.TrainConfig(
            batch_size=self.batch_size,
            epochs=self.epochs,
            lr_init=self.lr_init,
            lr_decay=self.lr_decay,
            decay_every=self.decay_every,
            seed=self.seed,
            precision=self.precision,
            max_grad_norm=self.max_grad_norm,
        )

    def class_names(self):
        if self.task == "detect":
            return ["non-action", "action"]
        return ["non-action"] + [f"gesture{g}" for g in range(1, self.cls + 1)]


def _coerce(name, raw):
    kind = {f.name: f.type for f in fields(RunConfig)}[name]
    try:
        if kind is bool or kind == "bool":
            if str(raw).lower() in ("1", "true", "yes", "on"):
                return True
            if str(raw).lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind is int or kind == "int":
            return int(raw)
        if kind is float or kind == "float":
            return float(raw)
        return str(raw)
    except ValueError:
        raise ConfigError(f"bad value for {name}: {raw!r}") from None


def read_config_file(path):
    values = {}
    known = {f.name for f in fields(RunConfig)}
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in known:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        values[key] = _coerce(key, value)
    return values


def resolve_config(args):
    """Defaults, then the config file, then explicit flags."""
    values = {}
    if getattr(args, "config", None):
        values.update(read_config_file(args.config))
    for f in fields(RunConfig):
        flag = getattr(args, f.name, None)
        if flag is not None:
            values[f.name] = _coerce(f.name, flag)
    return RunConfig(**values).validate()


def file_digest(paths):
    h = hashlib.sha256()
    for p in paths:
        with open(p, "rb") as fh:
            h.update(fh.read())
    return h.hexdigest()


def corpus_files(manifest_path):
    root = os.path.dirname(os.path.abspath(manifest_path))
    paths = [manifest_path]
    with open(manifest_path) as fh:
        for line in fh:
            parts = line.strip().split(",")
            if len(parts) == 4 and not line.startswith("#"):
                paths += [os.path.join(root, parts[2]), os.path.join(root, parts[3])]
    return paths


def write_run_manifest(out_dir, command, cfg=None, extra=()):
    os.makedirs(out_dir, exist_ok=True)
    lines = [
        f"command={command}",
        f"argv={' '.join(sys.argv[1:])}",
        f"tunet_version={__version__}",
        f"numpy_version={np.__version__}",
        f"numba_kernels={'on' if USE_NUMBA else 'off'}",
    ]
    if cfg is not None:
        lines += [f"{k}={v}" for k, v in asdict(cfg).items()]
    lines += [f"{k}={v}" for k, v in extra]
    with open(os.path.join(out_dir, "run_manifest.txt"), "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _stats_path(checkpoint):
    return os.path.join(os.path.dirname(os.path.abspath(checkpoint)), "normalization.csv")


def _write_stats(path, mean, std):
    with open(path, "w") as fh:
        fh.write(",".join(f"{v:.17g}" for v in mean) + "\n")
        fh.write(",".join(f"{v:.17g}" for v in std) + "\n")


def _read_stats(path):
    rows = np.loadtxt(path, delimiter=",", ndmin=2)
    return rows[0], rows[1]


def _load_splits(cfg):
    if not cfg.manifest:
        raise ConfigError("a dataset manifest is required (--manifest)")
    train, test = data.load_dataset(cfg.manifest, carriers=cfg.input_channels, cls=cfg.cls)
    if len(train.series[0]) != cfg.series_length:
        raise DataError(f"series length {len(train.series[0])} != configured series_length {cfg.series_length}")
    if cfg.normalize:
        train, test = data.normalize(train), data.normalize(test)
    return train, test


def _load_model(cfg):
    if not cfg.checkpoint:
        raise ConfigError("--checkpoint is required")
    params, _ = model.load_checkpoint(cfg.checkpoint, cfg.model_config())
    return params


# --- commands ---------------------------------------------------------------


def cmd_synth(args):
    cfg = resolve_config(args)
    n_test = args.test if args.test is not None else args.series // 4
    train, test = data.synth_generate(args.series, cfg.cls, cfg.series_length, cfg.seed, n_test, cfg.input_channels)
    try:
        path = data.write_dataset(cfg.out, train, test)
    except OSError as exc:
        raise ConfigError(f"cannot write corpus to {cfg.out}: {exc.strerror}") from None
    sep = data.separability(train, cfg.cls)
    write_run_manifest(
        cfg.out,
        "synth",
        cfg,
        [("series", args.series), ("test_series", n_test), ("separability", sep),
         ("corpus_sha256", file_digest(corpus_files(path)))],
    )
    print(f"wrote {len(train)} train / {len(test)} test series ({cfg.series_length} x {cfg.input_channels}) to {path}")
    print(f"matched-filter separability: {sep:.4f}")
    return EXIT_OK


def cmd_train(args):
    cfg = resolve_config(args)
    train, _ = _load_splits(cfg)
    mcfg, tcfg = cfg.model_config(), cfg.train_config()
    params = model.build(mcfg, cfg.precision)
    os.makedirs(cfg.out, exist_ok=True)
    log_path = os.path.join(cfg.out, "train_log.csv")
    started = time.perf_counter()
    with open(log_path, "w") as fh:
        fh.write(optim.EPOCH_CSV_HEADER + "\n")
        print(optim.EPOCH_CSV_HEADER, flush=True)

        def emit(report):
            fh.write(report.csv() + "\n")
            fh.flush()
            print(report.csv(), flush=True)

        reports = optim.fit(params, train, mcfg, tcfg, cfg.task, on_epoch=emit)
    ckpt = os.path.join(cfg.out, "checkpoint.tunet")
    model.save_checkpoint(params, mcfg, ckpt)
    _write_stats(_stats_path(ckpt), train.mean, train.std)
    final = reports[-1] if reports else None
    extra = [
        ("corpus_sha256", file_digest(corpus_files(cfg.manifest))),
        ("checkpoint_sha256", file_digest([ckpt])),
        ("elapsed_seconds", f"{time.perf_counter() - started:.1f}"),
    ]
    if final is not None:
        extra += [("final_loss", final.loss), ("final_train_accuracy", final.accuracy)]
    write_run_manifest(cfg.out, "train", cfg, extra)
    print(f"checkpoint written to {ckpt}")
    return EXIT_OK


def cmd_eval(args):
    cfg = resolve_config(args)
    params = _load_model(cfg)
    train, test = _load_splits(cfg)
    split = train if cfg.split == "train" else test
    if not split.series:
        raise DataError(f"the {cfg.split} split is empty")
    x, y = split.arrays()
    truth = optim.task_labels(y, cfg.task)
    preds = []
    mcfg = cfg.model_config()
    for start in range(0, len(x), cfg.batch_size):
        labels, _ = model.predict(params, x[start : start + cfg.batch_size], mcfg)
        preds.append(labels)
    result = metrics.evaluate(np.concatenate(preds), truth, cfg.num_classes, class_names=cfg.class_names())
    print(metrics.format_report(result))
    os.makedirs(cfg.out, exist_ok=True)
    with open(os.path.join(cfg.out, "metrics.csv"), "w") as fh:
        fh.write("\n".join(metrics.metrics_csv(result)) + "\n")
    write_run_manifest(
        cfg.out,
        "eval",
        cfg,
        [("corpus_sha256", file_digest(corpus_files(cfg.manifest))),
         ("checkpoint_sha256", file_digest([cfg.checkpoint])),
         ("accuracy", result.accuracy), ("mean_ap", result.ap.mean_ap)],
    )
    return EXIT_OK


def predict_series(params, cfg, values, stats=None):
    """Labels and confidences for one ``(n, carriers)`` series."""
    if stats is not None:
        values = (values - stats[0]) / stats[1]
    x = np.ascontiguousarray(values.T[None])
    labels, probs = model.predict(params, x, cfg.model_config())
    return labels[0], probs[0]


def confidence_csv(labels, probs):
    ncls = probs.shape[0]
    rows = ["sample," + ",".join(f"p{c}" for c in range(ncls)) + ",label"]
    for t in range(probs.shape[1]):
        rows.append(f"{t}," + ",".join(f"{p:.6g}" for p in probs[:, t]) + f",{int(labels[t])}")
    return "\n".join(rows) + "\n"


def cmd_predict(args):
    cfg = resolve_config(args)
    params = _load_model(cfg)
    s = data.read_series(args.series, None, carriers=cfg.input_channels)
    if len(s) != cfg.series_length:
        raise DataError(f"{args.series}: {len(s)} samples, model expects {cfg.series_length}")
    stats = None
    if cfg.normalize:
        path = args.stats or _stats_path(cfg.checkpoint)
        if os.path.exists(path):
            stats = _read_stats(path)
        else:
            log.warning("no normalization statistics at %s; using raw values", path)
    labels, probs = predict_series(params, cfg, s.values, stats)
    os.makedirs(cfg.out, exist_ok=True)
    stem = os.path.splitext(os.path.basename(args.series))[0]
    out_path = os.path.join(cfg.out, f"{stem}_confidence.csv")
    with open(out_path, "w") as fh:
        fh.write(confidence_csv(labels, probs))
    write_run_manifest(
        cfg.out,
        "predict",
        cfg,
        [("series", args.series), ("series_sha256", file_digest([args.series])),
         ("checkpoint_sha256", file_digest([cfg.checkpoint]))],
    )
    print(f"wrote {out_path}")
    return EXIT_OK


def cmd_gradcheck(args):
    seeds = range(args.seed or 0, (args.seed or 0) + args.seeds)
    started = time.perf_counter()
    results = run_gradcheck(seeds, inject_fault=args.inject_fault)
    ok = True
    for r in results:
        ok &= r.passed
        print(f"{r.layer:<14} worst rel err {r.worst:.3e}  {'PASS' if r.passed else 'FAIL'}")
    print(f"{'all checks passed' if ok else 'gradient check FAILED'} ({time.perf_counter() - started:.1f} s)")
    if args.out:
        write_run_manifest(
            args.out, "gradcheck", None,
            [("seeds", f"{seeds.start}..{seeds.stop - 1}"), ("inject_fault", args.inject_fault)]
            + [(f"worst_{r.layer}", f"{r.worst:.3e}") for r in results],
        )
    return EXIT_OK if ok else EXIT_GRADCHECK


# --- argument parsing -------------------------------------------------------


def _shared(p):
    p.add_argument("--config", help="key=value settings file")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--task", choices=TASKS)
    p.add_argument("--precision", type=int, choices=(32, 64))
    p.add_argument("--cls", type=int, help="number of gesture classes")


def _model_flags(p):
    p.add_argument("--depth", type=int)
    p.add_argument("--base-channels", dest="base_channels", type=int)
    p.add_argument("--conv-kernel", dest="conv_kernel", type=int)
    p.add_argument("--series-length", dest="series_length", type=int)
    p.add_argument("--input-channels", dest="input_channels", type=int)
    p.add_argument("--no-normalize", dest="normalize", action="store_const", const="false")


def build_parser():
    parser = argparse.ArgumentParser(prog="tunet", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic CSI corpus")
    _shared(p)
    p.add_argument("--series", type=int, default=64, help="number of training series")
    p.add_argument("--test", type=int, help="number of test series (default series/4)")
    p.add_argument("--n", dest="series_length", type=int, help="samples per series")
    p.add_argument("--carriers", dest="input_channels", type=int)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a model")
    _shared(p)
    _model_flags(p)
    p.add_argument("--manifest")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--lr", dest="lr_init", type=float)
    p.add_argument("--lr-decay", dest="lr_decay", type=float)
    p.add_argument("--decay-every", dest="decay_every", type=int)
    p.add_argument("--max-grad-norm", dest="max_grad_norm", type=float)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    _shared(p)
    _model_flags(p)
    p.add_argument("--manifest")
    p.add_argument("--checkpoint")
    p.add_argument("--split", choices=("train", "test"))
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="export per-sample confidence curves for one series")
    _shared(p)
    _model_flags(p)
    p.add_argument("--checkpoint")
    p.add_argument("--series", required=True, help="series file in the dataset format")
    p.add_argument("--stats", help="normalization.csv (default: next to the checkpoint)")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("gradcheck", help="finite-difference check of every backward pass")
    p.add_argument("--seed", type=int, default=0, help="first seed")
    p.add_argument("--seeds", type=int, default=5, help="number of seeds")
    p.add_argument("--out", help="directory for run_manifest.txt")
    p.add_argument("--inject-fault", dest="inject_fault", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except DivergenceError as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except (ShapeError, ChecksumError, VersionError, FileNotFoundError) as exc:
        print(f"checkpoint error: {exc}", file=sys.stderr)
        return EXIT_CHECKPOINT


if __name__ == "__main__":
    sys.exit(main())
