"""`grade-harness loocv`: manifest + train config in, results.json out."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - Python 3.10
    import tomli as tomllib

from .dataset import load_dataset
from .errors import ConfigError, DataError, HarnessError, TrainingError
from .loocv import loocv, results_payload
from .models import VARIANTS
from .train import TrainConfig

_EXIT_CODES = {ConfigError: 2, DataError: 3, TrainingError: 4}
_CONFIG_KEYS = {"learning_rate", "epochs", "batch_size", "seed", "variant",
                "freeze_layers"}


def load_train_config(path) -> tuple[TrainConfig, str]:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}", tag="config.missing-file")
    try:
        with open(path, "rb") as fh:
            tree = tomllib.load(fh)
    except tomllib.TOMLDecodeError as err:
        raise ConfigError(f"{path}: {err}", tag="config.toml") from None
    unknown = set(tree) - _CONFIG_KEYS
    if unknown:
        raise ConfigError(f"{path}: unknown keys {sorted(unknown)} "
                          f"(expected subset of {sorted(_CONFIG_KEYS)})",
                          tag="config.unknown-key")
    variant = tree.pop("variant", "toy")
    if variant not in VARIANTS:
        raise ConfigError(f"variant must be one of {VARIANTS}, got {variant!r}",
                          tag="model.variant")
    try:
        return TrainConfig(**tree), variant
    except TypeError as err:
        raise ConfigError(f"{path}: {err}", tag="config.type") from None


def cmd_loocv(args: argparse.Namespace) -> int:
    cfg, variant = load_train_config(args.config)
    dataset = load_dataset(args.manifest)
    folds, skipped, aggregate = loocv(dataset, cfg, variant)
    payload = results_payload(dataset, cfg, variant, folds, skipped, aggregate)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n",
                   encoding="utf-8")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="grade-harness",
                                     description="LOOCV grade prediction over "
                                                 "multi-channel diffusion cubes")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("loocv", help="leave-one-out cross-validation")
    p.add_argument("--manifest", required=True, help="cohort manifest CSV")
    p.add_argument("--config", required=True, help="training config TOML")
    p.add_argument("--out", required=True, help="results JSON path")
    p.set_defaults(func=cmd_loocv)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except HarnessError as err:
        print(f"grade-harness: {err}", file=sys.stderr)
        for cls, code in _EXIT_CODES.items():
            if isinstance(err, cls):
                return code
        return 4
    except OSError as err:
        print(f"grade-harness: io.error: {err}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
