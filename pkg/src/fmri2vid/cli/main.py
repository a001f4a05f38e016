"""Command-line entry point: ``fmri2vid [global flags] <command> [flags]``."""
from __future__ import annotations

import argparse
import json
import logging
import shutil
import sys
from pathlib import Path

from ..checkpoint import CheckpointError
from ..encoder.train import NonFiniteLoss
from ..eval import read_csv
from .ablate import ablation_suite
from .config import SCHEMA, STAGES, ConfigError, RunConfig
from .stages import MARKER, PrerequisiteError, Store, read_marker, run_stage, upstream, validate

log = logging.getLogger("fmri2vid")

EXIT_OK, EXIT_CONFIG, EXIT_PREREQ, EXIT_NUMERIC = 0, 2, 3, 4
CONFIG_FILE = "config.txt"
MANIFEST = "manifest.json"


# -- run directory --------------------------------------------------------------------
def stage_affected(key_stage: str, command: str) -> bool:
    """Whether changing a key owned by ``key_stage`` only touches ``command`` or later stages."""
    if key_stage == "ablate":
        return True
    if command == "pipeline":
        return False
    return command in STAGES and command in upstream(key_stage)


def resolve_config(args) -> RunConfig:
    run_dir = Path(args.run_dir)
    stored_path = run_dir / CONFIG_FILE
    stored = RunConfig.from_file(stored_path) if stored_path.exists() else None
    if args.resume and stored is None:
        raise ConfigError(f"--resume: no config stored in {run_dir}")
    if args.config:
        cfg = RunConfig.from_file(args.config)
    elif stored is not None:
        cfg = stored.replace()
    else:
        cfg = RunConfig()
    for item in args.set or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        cfg.set(key.strip(), value)
    if args.seed is not None:
        cfg.set("seed", args.seed)
    for key, value in command_overrides(args).items():
        cfg.set(key, value)
    if stored is not None and stored.digest() != cfg.digest():
        changed = [k for k in SCHEMA if stored[k] != cfg[k]]
        if args.resume:
            raise ConfigError(f"config hash mismatch on resume; changed keys: {changed}")
        blocked = [k for k in changed if not stage_affected(SCHEMA[k].stage, args.command)]
        if blocked:
            raise ConfigError(f"{run_dir} was created with a different config (changed: {blocked}); "
                              "use a fresh --run-dir")
    return cfg


def command_overrides(args) -> dict:
    out = {}
    if args.command == "sample":
        if args.steps is not None:
            out["ddim_steps"] = args.steps
        if args.guidance_scale is not None:
            out["guidance_scale"] = args.guidance_scale
        if args.negative is not None:
            out["guidance"] = "adversarial" if args.negative == "avg-fmri" else "classifier-free"
        if args.sample_seed is not None:
            out["sample_seed"] = args.sample_seed
    return out


def store_config(cfg: RunConfig, run_dir: Path) -> None:
    run_dir.mkdir(parents=True, exist_ok=True)
    cfg.write(run_dir / CONFIG_FILE)
    (run_dir / "config.sha256").write_text(cfg.digest() + "\n")
    for stage in STAGES:
        d = run_dir / stage
        m = read_marker(d)
        if d.exists() and (m is None or m.get("fingerprint") != cfg.fingerprint(stage)):
            # stale output of an earlier config; it would otherwise linger unreferenced
            shutil.rmtree(d)


def write_manifest(cfg: RunConfig, run_dir: Path, extra: dict | None = None) -> Path:
    path = run_dir / MANIFEST
    old = json.loads(path.read_text()) if path.exists() else {}
    stages = {}
    for stage in STAGES:
        m = read_marker(run_dir / stage)
        if m is not None and m.get("fingerprint") == cfg.fingerprint(stage):
            stages[stage] = {
                "completed": True,
                "fingerprint": m["fingerprint"],
                "artifacts": [f"{stage}/{a}" for a in m["artifacts"]] + [f"{stage}/{MARKER}"],
                "seconds": m["seconds"],
            }
    manifest = {"config": CONFIG_FILE, "config_sha256": cfg.digest(), "stages": stages}
    for key in ("ablation", "report"):
        if key in old:
            manifest[key] = old[key]
    manifest.update(extra or {})
    path.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return path


def ablation_artifacts(run_dir: Path, outputs: list[Path]) -> dict:
    shared = run_dir / "ablation" / "stages"
    files = [str(p.relative_to(run_dir)) for p in outputs]
    for d in sorted(shared.iterdir()) if shared.exists() else []:
        m = read_marker(d)
        if m is not None:
            files += [str((d / a).relative_to(run_dir)) for a in m["artifacts"]]
            files.append(str((d / MARKER).relative_to(run_dir)))
    return {"artifacts": files}


# -- report -----------------------------------------------------------------------------
def write_report(cfg: RunConfig, run_dir: Path) -> Path:
    ev = run_dir / "evaluate"
    if read_marker(ev) is None:
        raise PrerequisiteError("report needs stage 'evaluate' to be completed first")
    lines = ["# Run report", "", f"config sha256: `{cfg.digest()}`", "", "## Held-out metrics", "",
             "| metric | mean | std | n |", "|---|---|---|---|"]
    for r in read_csv(ev / "metrics_summary.csv"):
        lines.append(f"| {r['metric']} | {r['mean']} | {r['std']} | {r['n']} |")
    lines += ["", "## Stage wall-clock", "", "| stage | seconds |", "|---|---|"]
    for stage in STAGES:
        m = read_marker(run_dir / stage)
        if m is not None:
            lines.append(f"| {stage} | {m['seconds']} |")
    abl = run_dir / "ablation" / "ablation.csv"
    if abl.exists():
        lines += ["", "## Ablations", "", "| variant | metric | mean | std | p | band |",
                  "|---|---|---|---|---|---|"]
        for r in read_csv(abl):
            lines.append(f"| {r['variant']} | {r['metric']} | {r['mean']} | {r['std']} | {r['p']} | {r['band']} |")
    path = run_dir / "report.md"
    path.write_text("\n".join(lines) + "\n")
    return path


# -- argument parsing -----------------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fmri2vid", description="Desk-scale fMRI-to-video pipeline.")
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--run-dir", default="run", help="run directory (default: ./run)")
    p.add_argument("--seed", type=int, help="training seed override")
    p.add_argument("--resume", action="store_true", help="continue with the run directory's stored config")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
    p.add_argument("-q", "--quiet", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for stage in STAGES:
        sp = sub.add_parser(stage, help=f"run the {stage} stage")
        if stage == "sample":
            sp.add_argument("--steps", type=int, help="DDIM steps")
            sp.add_argument("--guidance-scale", type=float)
            sp.add_argument("--negative", choices=("avg-fmri", "null"))
            sp.add_argument("--seed", dest="sample_seed", type=int, help="sampling noise seed")
            sp.add_argument("--dump-frames", action="store_true", help="also write PPM frames")
    ab = sub.add_parser("ablate", help="single-axis ablations over seeds")
    ab.add_argument("--axes", help='e.g. "window=1|3,contrastive=off,guidance"')
    ab.add_argument("--seeds", type=int)
    sub.add_parser("report", help="summarise metrics into report.md")
    sub.add_parser("pipeline", help="run every stage in order")
    return p


def execute(args) -> int:
    run_dir = Path(args.run_dir)
    cfg = resolve_config(args)
    validate(cfg)
    store_config(cfg, run_dir)
    store = Store(run_dir)
    if args.command in STAGES:
        options = {"dump_frames": getattr(args, "dump_frames", False)}
        _, ran = run_stage(args.command, cfg, store, options)
        if not ran:
            log.info("%s: already complete for this config", args.command)
        write_manifest(cfg, run_dir)
    elif args.command == "pipeline":
        for stage in STAGES:
            run_stage(stage, cfg, store)
            write_manifest(cfg, run_dir)
    elif args.command == "ablate":
        if read_marker(run_dir / "evaluate") is None:
            raise PrerequisiteError("ablate needs a completed base run (stage 'evaluate')")
        shared = Store(run_dir / "ablation" / "stages", shared=True, fallback=(store,))
        outputs = ablation_suite(cfg, shared, run_dir / "ablation", args.axes, args.seeds)
        write_manifest(cfg, run_dir, {"ablation": ablation_artifacts(run_dir, outputs)})
    elif args.command == "report":
        path = write_report(cfg, run_dir)
        write_manifest(cfg, run_dir, {"report": {"artifacts": [path.name]}})
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(message)s", stream=sys.stderr)
    try:
        return execute(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (PrerequisiteError, CheckpointError) as exc:
        print(f"prerequisite error: {exc}", file=sys.stderr)
        return EXIT_PREREQ
    except NonFiniteLoss as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
