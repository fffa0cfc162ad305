"""Command-line entry point: ``handover <subcommand> [options]``.

Configuration file (JSON), every section optional::

    {
      "dataset":    {"samples_per_class": 300, "num_subjects": 8, "n_points": 512, "noise_sigma": 0.002},
      "net":        {"sa_layers": [...], "head_widths": [64, 32, 7], "dropout_p": 0.2, "use_norm": false},
      "train":      {"epochs": 30, "batch_size": 16, "learning_rate": 0.01, "seed": 42, "held_out_subject": 0},
      "perception": {"eps_still": 0.01, "tau_u": 0.6, ...},
      "task":       {"eps_replan": 0.04, "v_max": 0.25, ...},
      "profiles":   {"Attentive": {"reposition_rate": 0.5, ...}, ...},
      "experiment": {"trials_per_cell": 100, "seed": 7, "checkpoint": "m.gnet"}
    }
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import fields, replace
from pathlib import Path

from . import harness
from . import net as gnet
from . import scenegen
from .core import HandoverError
from .humansim import PROFILES
from .perception import PerceptionCfg
from .taskmodel import Policy, TaskCfg, events_to_csv


class UsageError(Exception):
    pass


def _section(cfg: dict, name: str, cls, base=None):
    raw = cfg.get(name, {})
    if not isinstance(raw, dict):
        raise UsageError(f"config section {name!r} must be an object")
    known = {f.name for f in fields(cls)}
    unknown = set(raw) - known
    if unknown:
        raise UsageError(f"unknown keys in {name!r}: {sorted(unknown)}")
    raw = {k: tuple(v) if isinstance(v, list) else v for k, v in raw.items()}
    return replace(base, **raw) if base is not None else cls(**raw)


def load_config(path) -> dict:
    if path is None:
        return {}
    try:
        cfg = json.loads(Path(path).read_text())
    except OSError as e:
        raise UsageError(f"cannot read config: {e}") from e
    except json.JSONDecodeError as e:
        raise UsageError(f"config is not valid JSON: {e}") from e
    if not isinstance(cfg, dict):
        raise UsageError("config must be a JSON object")
    return cfg


def _net_cfg(cfg: dict) -> gnet.NetCfg:
    raw = cfg.get("net")
    return gnet.NetCfg.from_dict(raw) if raw else gnet.NetCfg()


def _experiment(cfg: dict, args, mode: str) -> harness.ExperimentCfg:
    exp = dict(cfg.get("experiment", {}))
    overrides = cfg.get("profiles", {})
    unknown = set(overrides) - set(PROFILES)
    if unknown:
        raise UsageError(f"unknown profiles: {sorted(unknown)}")
    profiles = [replace(prof, **overrides.get(name, {})) for name, prof in PROFILES.items()]
    base = harness.ExperimentCfg(
        mode=mode,
        trials_per_cell=int(exp.get("trials_per_cell", 100)),
        seed=int(exp.get("seed", 7)),
        checkpoint=exp.get("checkpoint"),
        task=_section(cfg, "task", TaskCfg),
        perception=_section(cfg, "perception", PerceptionCfg),
        profiles=tuple(profiles),
    )
    flags = {"seed": "seed", "trials": "trials_per_cell", "model": "checkpoint", "out": "out_dir"}
    over = {key: getattr(args, flag) for flag, key in flags.items() if getattr(args, flag, None) is not None}
    return replace(base, **over)


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int)
    common.add_argument("--config", help="JSON configuration file")
    common.add_argument("--out", help="output file or directory")
    p = argparse.ArgumentParser(prog="handover", description="Handover simulator and experiment harness.")
    sub = p.add_subparsers(dest="cmd", required=True)
    s = sub.add_parser("gen-data", parents=[common], help="generate the labeled point-cloud dataset")
    s.add_argument("--samples-per-class", type=int)
    s = sub.add_parser("train", parents=[common], help="train the grasp classifier")
    s.add_argument("--data", required=True)
    s.add_argument("--epochs", type=int)
    s = sub.add_parser("eval-model", parents=[common], help="held-out-subject accuracy of a checkpoint")
    s.add_argument("--data", required=True)
    s.add_argument("--model")
    s = sub.add_parser("run-trial", parents=[common], help="run one handover trial")
    s.add_argument("--policy", choices=[p.name for p in Policy], default="Ours")
    s.add_argument("--profile", choices=list(PROFILES), default="Attentive")
    s.add_argument("--model")
    for name in ("run-systematic", "run-study"):
        s = sub.add_parser(name, parents=[common], help=f"{name[4:]} experiment")
        s.add_argument("--trials", type=int)
        s.add_argument("--model")
    sub.add_parser("report", parents=[common], help="rebuild metrics.csv and table.md from event logs")
    return p


def _gen_data(args, cfg):
    spec = _section(cfg, "dataset", scenegen.DatasetSpec)
    if args.samples_per_class is not None:
        spec = replace(spec, samples_per_class=args.samples_per_class)
    if args.out is None:
        raise UsageError("gen-data needs --out")
    ds = scenegen.generate_dataset(spec, 42 if args.seed is None else args.seed, args.out)
    print(f"wrote {len(ds)} samples to {args.out}")


def _train(args, cfg):
    if args.out is None:
        raise UsageError("train needs --out")
    tcfg = _section(cfg, "train", gnet.TrainCfg)
    if args.seed is not None:
        tcfg = replace(tcfg, seed=args.seed)
    if args.epochs is not None:
        tcfg = replace(tcfg, epochs=args.epochs)
    ncfg = _net_cfg(cfg)
    ds = scenegen.read_dataset(args.data)
    params, history = gnet.train(ds, ncfg, tcfg, progress=lambda e, l, a: print(f"epoch {e} loss {l:.4f} acc {a:.4f}"))
    gnet.save_checkpoint(args.out, params, ncfg)
    _, test = ds.split(tcfg.held_out_subject)
    if test:
        acc, _ = gnet.evaluate(params, ncfg, test)
        print(f"held-out accuracy {acc:.4f}")


def _eval(args, cfg):
    params, ncfg = gnet.load_checkpoint(args.model or gnet.default_model_path())
    tcfg = _section(cfg, "train", gnet.TrainCfg)
    _, test = scenegen.read_dataset(args.data).split(tcfg.held_out_subject)
    acc, conf = gnet.evaluate(params, ncfg, test)
    print(f"held-out accuracy {acc:.4f}")
    for row in conf:
        print(" ".join(f"{v:4d}" for v in row))


def _run_trial(args, cfg):
    exp = _experiment(cfg, args, "systematic")
    model = harness.Model.load(exp.checkpoint)
    rec, log = harness.run_trial(args.policy, exp.profile(args.profile), exp.seed, model, exp.task, exp.perception)
    text = events_to_csv(log)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    print(
        f"policy={rec.policy} profile={rec.profile} blocks={rec.blocks_placed} "
        f"grasp={harness._pct(rec.grasp_rate) or '-'} planning={harness._pct(rec.planning_rate) or '-'} "
        f"duration={harness._fmt(rec.trial_duration, 2) or '-'}",
        file=sys.stderr,
    )


def _run_experiment(args, cfg, mode):
    exp = _experiment(cfg, args, mode)
    run = harness.run_systematic if mode == "systematic" else harness.run_study
    rep = run(exp)
    sys.stdout.write(rep.to_markdown())


def _report(args, cfg):
    if args.out is None:
        raise UsageError("report needs --out pointing at an experiment directory")
    rep = harness.report_from_dir(args.out)
    harness.write_report(rep, args.out)
    sys.stdout.write(rep.to_markdown())


def main(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        cfg = load_config(args.config)
        handler = {
            "gen-data": _gen_data,
            "train": _train,
            "eval-model": _eval,
            "run-trial": _run_trial,
            "run-systematic": lambda a, c: _run_experiment(a, c, "systematic"),
            "run-study": lambda a, c: _run_experiment(a, c, "study"),
            "report": _report,
        }[args.cmd]
        handler(args, cfg)
    except (UsageError, TypeError) as e:
        print(f"handover: error: {e}", file=sys.stderr)
        return 2
    except (HandoverError, OSError, ValueError) as e:
        print(f"handover: error: {e}", file=sys.stderr)
        return 1
    return 0


def cli(argv=None) -> int:
    return main(argv)


if __name__ == "__main__":
    sys.exit(main())
