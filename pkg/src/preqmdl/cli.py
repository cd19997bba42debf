"""Command-line front end.

Subcommands: run, sweep, regret, pareto, posterior, oracle-check, gen-data,
import-idx.  Configs are flat ``key = value`` files with ``#`` comments.
Exit codes: 0 success, 1 usage or config error, 2 data error, 3 failed
internal invariant.

All CSV output is written with "\n" newlines, floats as %.17g, to a
temporary file renamed into place, so identical runs produce byte-identical
files.
"""

import argparse
import concurrent.futures
import csv
import hashlib
import math
import os
import sys
import tempfile

import numpy as np

from preqmdl import analysis, dataset as ds, oracle, replay
from preqmdl.estimators import InvariantError, RunConfig, run
from preqmdl.models import ModelSpec
from preqmdl.dataset import FormatError


class UsageError(Exception):
    pass


class ConfigError(Exception):
    pass


class DataError(Exception):
    pass


# ---------------------------------------------------------------------------
# config files

_REQUIRED = object()

# key -> (type tag, default); _REQUIRED means the key must be present.
_SCHEMA = {
    "protocol": ("str", _REQUIRED),
    "seed": ("int", 0),
    "data_pqds": ("str", None),
    "data_idx_images": ("str", None),
    "data_idx_labels": ("str", None),
    "data_synthetic": ("str", None),
    "synth_n": ("int", 1000),
    "synth_channels": ("int", 3),
    "synth_classes": ("int", 2),
    "synth_dim_per_channel": ("int", 4),
    "synth_noise_std": ("float", 0.25),
    "synth_seed": ("int", 0),
    "synth_condition_on": ("ints", None),
    "shuffle_seed": ("int", None),
    "model": ("str", "linear"),
    "hidden_sizes": ("ints", ()),
    "weight_standardization": ("bool", False),
    "standardize_output": ("bool", False),
    "init_scale": ("float", 1.0),
    "optimizer": ("str", "adamw"),
    "lr": ("float", 1e-3),
    "weight_decay": ("float", 0.0),
    "adam_beta1": ("float", 0.9),
    "adam_beta2": ("float", 0.999),
    "adam_eps": ("float", 1e-8),
    "sgd_momentum": ("float", 0.9),
    "ema_alpha": ("float", 0.01),
    "label_smoothing": ("float", 0.01),
    "batch_size": ("int", 32),
    "augment_sigma": ("float", 0.0),
    "calibrate": ("bool", True),
    "num_streams": ("int", 4),
    "replay_distribution": ("str", "uniform"),
    "replay_rate": ("float", 1.0),
    "replay_scale": ("float", 1.0),
    "replay_shape": ("float", replay.PARETO_DEFAULT_SHAPE),
    "buffer_capacity": ("int", 512),
    "buffer_policy": ("str", "fifo"),
    "schedule_first": ("int", 2),
    "schedule_ratio": ("float", 2.0),
    "epochs_per_chunk": ("int", 1),
    "shrink_perturb": ("bool", False),
    "sp_shrink": ("float", 0.5),
    "sp_noise": ("float", 0.01),
    "sweep_runs": ("int", 8),
    "sweep_seed": ("int", 0),
    "sweep_lr_lo": ("float", 1e-4),
    "sweep_lr_hi": ("float", 3e-3),
    "sweep_eps_lo": ("float", 1e-4),
    "sweep_eps_hi": ("float", 1.0),
    "sweep_ema_lo": ("float", 1e-3),
    "sweep_ema_hi": ("float", 0.1),
    "sweep_wd_lo": ("float", 1e-4),
    "sweep_wd_hi": ("float", 1.0),
    "sweep_streams_lo": ("int", 25),
    "sweep_streams_hi": ("int", 100),
}

# keys that do not change the meaning of a single run
_HASH_EXEMPT = {"seed"} | {k for k in _SCHEMA if k.startswith("sweep_")}


def _convert(key, raw, kind, line_no):
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "bool":
            low = raw.lower()
            if low in ("true", "false"):
                return low == "true"
            raise ValueError
        if kind == "ints":
            return tuple(int(p) for p in raw.split(",") if p.strip() != "")
        return raw
    except ValueError:
        raise ConfigError(
            f"line {line_no}: bad {kind} value {raw!r} for key {key!r}"
        ) from None


def parse_config(text):
    """Parse ``key = value`` lines into a fully defaulted dict."""
    seen = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"line {line_no}: expected 'key = value'")
        key, raw = (part.strip() for part in body.split("=", 1))
        if key not in _SCHEMA:
            raise ConfigError(f"line {line_no}: unknown key {key!r}")
        if key in seen:
            raise ConfigError(f"line {line_no}: duplicate key {key!r}")
        kind, _ = _SCHEMA[key]
        seen[key] = _convert(key, raw, kind, line_no)
    out = {}
    for key, (kind, default) in _SCHEMA.items():
        if key in seen:
            out[key] = seen[key]
        elif default is _REQUIRED:
            raise ConfigError(f"missing required key {key!r}")
        else:
            out[key] = default
    return out


def load_config(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise DataError(f"cannot read config: {exc}") from None


def _fmt(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format(value, ".17g")
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    return str(value)


def config_hash(cfg):
    """Stable 16-hex-digit digest of the resolved config, seed excluded."""
    lines = [f"{k} = {_fmt(cfg[k])}" for k in sorted(cfg)
             if k not in _HASH_EXEMPT and cfg[k] is not None]
    digest = hashlib.sha256("\n".join(lines).encode("utf-8")).hexdigest()
    return digest[:16]


# ---------------------------------------------------------------------------
# building runs from configs


def build_dataset(cfg):
    sources = [cfg["data_pqds"] is not None,
               cfg["data_idx_images"] is not None,
               cfg["data_synthetic"] is not None]
    if sum(sources) != 1:
        raise ConfigError("exactly one data source must be set "
                          "(data_pqds, data_idx_images, data_synthetic)")
    if (cfg["data_idx_images"] is None) != (cfg["data_idx_labels"] is None):
        raise ConfigError("data_idx_images and data_idx_labels go together")
    if cfg["data_pqds"] is not None:
        data = ds.read_sequence(cfg["data_pqds"])
    elif cfg["data_idx_images"] is not None:
        data = ds.import_idx(cfg["data_idx_images"], cfg["data_idx_labels"])
    else:
        if cfg["data_synthetic"] != "channel":
            raise ConfigError(
                f"unknown synthetic task {cfg['data_synthetic']!r}")
        data = ds.generate_channel_task(
            cfg["synth_n"], cfg["synth_channels"], cfg["synth_classes"],
            cfg["synth_dim_per_channel"], cfg["synth_noise_std"],
            cfg["synth_seed"], cfg["synth_condition_on"])
    if cfg["shuffle_seed"] is not None:
        data = ds.shuffle_sequence(data, cfg["shuffle_seed"])
    return data


def build_run_config(cfg, input_dim, num_classes):
    try:
        spec = ModelSpec(
            kind=cfg["model"],
            input_dim=input_dim,
            num_classes=num_classes,
            hidden_sizes=tuple(cfg["hidden_sizes"]),
            weight_standardization=cfg["weight_standardization"],
            standardize_output=cfg["standardize_output"],
        )
        kind = cfg["replay_distribution"]
        if kind == "uniform":
            dist = replay.uniform()
        elif kind == "exponential":
            dist = replay.exponential(cfg["replay_rate"])
        elif kind == "pareto":
            dist = replay.pareto(cfg["replay_scale"], cfg["replay_shape"])
        else:
            raise ValueError(f"unknown replay distribution {kind!r}")
        return RunConfig(
            protocol=cfg["protocol"],
            model=spec,
            seed=cfg["seed"],
            optimizer=cfg["optimizer"],
            lr=cfg["lr"],
            weight_decay=cfg["weight_decay"],
            adam_beta1=cfg["adam_beta1"],
            adam_beta2=cfg["adam_beta2"],
            adam_eps=cfg["adam_eps"],
            sgd_momentum=cfg["sgd_momentum"],
            ema_alpha=cfg["ema_alpha"],
            label_smoothing=cfg["label_smoothing"],
            batch_size=cfg["batch_size"],
            augment_sigma=cfg["augment_sigma"],
            calibrate=cfg["calibrate"],
            init_scale=cfg["init_scale"],
            num_streams=cfg["num_streams"],
            distribution=dist,
            buffer_capacity=cfg["buffer_capacity"],
            buffer_policy=cfg["buffer_policy"],
            schedule_first=cfg["schedule_first"],
            schedule_ratio=cfg["schedule_ratio"],
            epochs_per_chunk=cfg["epochs_per_chunk"],
            use_shrink_perturb=cfg["shrink_perturb"],
            sp_shrink=cfg["sp_shrink"],
            sp_noise=cfg["sp_noise"],
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


# ---------------------------------------------------------------------------
# CSV helpers


def _write_atomic(path, text):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".csv-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _g17(x):
    return format(float(x), ".17g")


def write_steps_csv(path, result):
    lines = ["step,next_step_loss_nats,cumulative_loss_nats,"
             "cumulative_errors,beta,eval_flops,train_flops"]
    cum_loss = np.cumsum(result.per_step_loss)
    cum_err = np.cumsum(result.per_step_error.astype(np.int64))
    for i in range(result.per_step_loss.shape[0]):
        lines.append(",".join((
            str(i + 1),
            _g17(result.per_step_loss[i]),
            _g17(cum_loss[i]),
            str(int(cum_err[i])),
            _g17(result.beta_trace[i]),
            str(int(result.cumulative_eval_flops[i])),
            str(int(result.cumulative_train_flops[i])),
        )))
    _write_atomic(path, "\n".join(lines) + "\n")


def write_summary_csv(path, result, seed, digest):
    lines = ["description_length_nats,total_errors,total_flops,seed,"
             "config_hash",
             ",".join((_g17(result.description_length),
                       str(result.total_errors),
                       str(result.ledger.total),
                       str(seed),
                       digest))]
    _write_atomic(path, "\n".join(lines) + "\n")


def _read_csv(path, required_columns):
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            fields = reader.fieldnames or []
            missing = [c for c in required_columns if c not in fields]
            if missing:
                raise DataError(
                    f"{path}: missing required column(s) "
                    + ", ".join(missing))
            rows = list(reader)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None
    if not rows:
        raise DataError(f"{path}: no data rows")
    return rows


# ---------------------------------------------------------------------------
# subcommands


def _execute_run(cfg, outdir):
    data = build_dataset(cfg)
    config = build_run_config(cfg, data.dim, data.num_classes)
    result = run(config, data)
    write_steps_csv(os.path.join(outdir, "steps.csv"), result)
    write_summary_csv(os.path.join(outdir, "summary.csv"), result,
                      cfg["seed"], config_hash(cfg))
    return result


def cmd_run(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg["seed"] = args.seed
    result = _execute_run(cfg, args.out)
    print(f"description_length_nats={_g17(result.description_length)} "
          f"total_errors={result.total_errors} "
          f"total_flops={result.ledger.total}")
    return 0


_SWEEP_KEYS = ("lr", "adam_eps", "ema_alpha", "weight_decay", "num_streams")


def _sweep_worker(job):
    cfg, outdir = job
    result = _execute_run(cfg, outdir)
    return (float(result.description_length), int(result.ledger.total))


def _log_uniform(rng, lo, hi):
    if not 0 < lo <= hi:
        raise ConfigError("sweep intervals need 0 < lo <= hi")
    return float(np.exp(rng.uniform(np.log(lo), np.log(hi))))


def cmd_sweep(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg["sweep_seed"] = args.seed
    n_runs = cfg["sweep_runs"]
    if n_runs < 1:
        raise ConfigError("sweep_runs must be positive")
    root = np.random.SeedSequence(cfg["sweep_seed"])
    hyper_ss, seed_ss = root.spawn(2)
    rng = np.random.Generator(np.random.PCG64(hyper_ss))
    run_seeds = [int(child.generate_state(1, np.uint32)[0])
                 for child in seed_ss.spawn(n_runs)]

    jobs = []
    sampled = []
    for run_id in range(n_runs):
        draw = {
            "lr": _log_uniform(rng, cfg["sweep_lr_lo"], cfg["sweep_lr_hi"]),
            "adam_eps": _log_uniform(rng, cfg["sweep_eps_lo"],
                                     cfg["sweep_eps_hi"]),
            "ema_alpha": _log_uniform(rng, cfg["sweep_ema_lo"],
                                      cfg["sweep_ema_hi"]),
            "weight_decay": _log_uniform(rng, cfg["sweep_wd_lo"],
                                         cfg["sweep_wd_hi"]),
            "num_streams": int(round(_log_uniform(
                rng, cfg["sweep_streams_lo"], cfg["sweep_streams_hi"]))),
        }
        run_cfg = dict(cfg)
        run_cfg.update(draw)
        run_cfg["seed"] = run_seeds[run_id]
        sampled.append(draw)
        jobs.append((run_cfg, os.path.join(args.out, f"run_{run_id:03d}")))

    if args.parallelism <= 1:
        outcomes = [_sweep_worker(job) for job in jobs]
    else:
        with concurrent.futures.ProcessPoolExecutor(
                max_workers=args.parallelism) as pool:
            outcomes = list(pool.map(_sweep_worker, jobs))

    lines = ["run_id,lr,adam_eps,ema_alpha,weight_decay,num_streams,seed,"
             "description_length_nats,total_flops"]
    for run_id, (draw, (length, flops)) in enumerate(zip(sampled, outcomes)):
        lines.append(",".join((
            str(run_id), _g17(draw["lr"]), _g17(draw["adam_eps"]),
            _g17(draw["ema_alpha"]), _g17(draw["weight_decay"]),
            str(draw["num_streams"]), str(run_seeds[run_id]),
            _g17(length), str(flops))))
    _write_atomic(os.path.join(args.out, "index.csv"),
                  "\n".join(lines) + "\n")
    print(f"wrote {n_runs} runs to {args.out}")
    return 0


def cmd_regret(args):
    rows_a = _read_csv(args.a, ["step", "next_step_loss_nats"])
    rows_b = _read_csv(args.b, ["step", "next_step_loss_nats"])
    if len(rows_a) != len(rows_b):
        raise DataError(
            f"step counts differ: {len(rows_a)} vs {len(rows_b)}")
    a = np.array([float(r["next_step_loss_nats"]) for r in rows_a])
    b = np.array([float(r["next_step_loss_nats"]) for r in rows_b])
    curve = analysis.regret_curve(a, b)
    lines = ["step,regret_nats"]
    for i, value in enumerate(curve):
        lines.append(f"{i + 1},{_g17(value)}")
    _write_atomic(args.out, "\n".join(lines) + "\n")
    return 0


def cmd_pareto(args):
    rows = _read_csv(args.infile,
                     ["run_id", "description_length_nats", "total_flops"])
    flops = np.array([float(r["total_flops"]) for r in rows])
    lengths = np.array([float(r["description_length_nats"]) for r in rows])
    keep = analysis.pareto_front(flops, lengths)
    lines = ["run_id,total_flops,description_length_nats"]
    for i in keep:
        lines.append(",".join((rows[i]["run_id"], str(int(flops[i])),
                               _g17(lengths[i]))))
    _write_atomic(args.out, "\n".join(lines) + "\n")
    return 0


def cmd_posterior(args):
    labels = []
    lengths = []
    for path in args.summaries:
        row = _read_csv(path, ["description_length_nats"])[0]
        labels.append(path)
        lengths.append(float(row["description_length_nats"]))
    log_post = analysis.model_log_posterior(np.array(lengths))
    post = np.exp(log_post)
    lines = ["label,description_length_nats,log_posterior,posterior"]
    for label, length, lp, p in zip(labels, lengths, log_post, post):
        lines.append(f"{label},{_g17(length)},{_g17(lp)},{_g17(p)}")
        print(f"{label}: length={_g17(length)} posterior={p:.6g}")
    if args.out:
        _write_atomic(args.out, "\n".join(lines) + "\n")
    return 0


def cmd_oracle_check(args):
    max_t = args.max_t
    if not 1 <= max_t <= 16:
        raise UsageError("--max-t must lie in [1, 16]")
    failures = 0
    for t in range(1, max_t + 1):
        total = 0.0
        worst_gap = -np.inf
        worst_regret = -np.inf
        for ones in range(t + 1):
            seq = [1] * ones + [0] * (t - ones)
            l_nml = oracle.nml_code_length(seq)
            l_kt = oracle.kt_code_length(seq)
            total += math.comb(t, ones) * math.exp(-l_nml)
            worst_gap = max(worst_gap, l_kt - l_nml)
            worst_regret = max(worst_regret,
                               l_kt - oracle.ml_code_length(seq))
        bound = 0.5 * math.log(t) + math.log(2.0)
        ok = (abs(total - 1.0) <= 1e-10 and worst_gap <= 1.0
              and worst_regret <= bound)
        failures += 0 if ok else 1
        print(f"T={t}: sum_exp(-L_NML)={total:.12f} "
              f"max(L_KT - L_NML)={worst_gap:.6f} "
              f"max_KT_regret={worst_regret:.6f} bound={bound:.6f} "
              f"{'ok' if ok else 'FAIL'}")
    if failures:
        raise InvariantError(f"{failures} sequence lengths failed")
    return 0


def cmd_gen_data(args):
    condition = None
    if args.condition_on is not None:
        condition = tuple(int(p) for p in args.condition_on.split(","))
    try:
        data = ds.generate_channel_task(
            args.n, args.channels, args.classes, args.dim_per_channel,
            args.noise_std, args.seed, condition)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    ds.write_sequence(data, args.out)
    print(f"wrote {len(data)} examples, dim={data.dim}, "
          f"classes={data.num_classes} to {args.out}")
    return 0


def cmd_import_idx(args):
    data = ds.import_idx(args.images, args.labels)
    ds.write_sequence(data, args.out)
    print(f"wrote {len(data)} examples, dim={data.dim}, "
          f"classes={data.num_classes} to {args.out}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _build_parser():
    parser = _Parser(prog="preqmdl",
                     description="Prequential description lengths for "
                                 "classification sequences.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="execute one prequential run")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="random hyperparameter sweep")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--parallelism", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("regret", help="cumulative regret of run A over B")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_regret)

    p = sub.add_parser("pareto", help="compute the flops/length front")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_pareto)

    p = sub.add_parser("posterior",
                       help="posterior over runs from summary files")
    p.add_argument("summaries", nargs="+")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_posterior)

    p = sub.add_parser("oracle-check",
                       help="verify the exact small-scale coders")
    p.add_argument("--max-t", type=int, default=14)
    p.set_defaults(func=cmd_oracle_check)

    p = sub.add_parser("gen-data", help="generate the synthetic channel task")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--channels", type=int, default=3)
    p.add_argument("--classes", type=int, default=2)
    p.add_argument("--dim-per-channel", type=int, default=4)
    p.add_argument("--noise-std", type=float, default=0.25)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--condition-on", default=None)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("import-idx", help="convert an IDX pair to the "
                                          "container format")
    p.add_argument("--images", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_import_idx)

    return parser


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (DataError, FormatError, ds.StreamExhausted) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except InvariantError as exc:
        print(f"invariant failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
