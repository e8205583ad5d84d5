"""Command line entry point: ``qte parity|bc|titanic|mnist|selftest|bloch-export``.

Settings come from an optional YAML config file, then command-line flags.
Progress goes to stderr; results go to ``report.json``, ``losses.csv`` and
``bloch.csv`` in the output directory.
"""
from __future__ import annotations

import functools
import json
import logging
import sys
from pathlib import Path

import click
import numpy as np
import yaml

from . import encode
from .errors import ConfigError, IngestionError, QteError
from .experiments import ExperimentConfig, export_bloch, run, write_outputs

log = logging.getLogger("qte")


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        raw = yaml.safe_load(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"config file {path} is not valid YAML: {exc}") from None
    if raw is None:
        return {}
    if not isinstance(raw, dict):
        raise ConfigError(f"config file {path} must hold a mapping")
    return raw


def _build_config(experiment: str, config_file, overrides: dict) -> ExperimentConfig:
    raw = _load_config_file(config_file)
    if raw.get("experiment", experiment) != experiment:
        raise ConfigError(f"config file is for {raw['experiment']!r}, not {experiment!r}")
    raw["experiment"] = experiment
    raw.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig.from_dict(raw)


def _exit_on_error(fn):
    """Map package errors onto the documented exit codes."""
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except QteError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(exc.exit_code)
    return wrapper


def common_options(fn):
    options = [
        click.option("--config", "config_file", type=click.Path(dir_okay=False), help="YAML config file."),
        click.option("--embedding", help="Embedding name, e.g. te, reg-te, qrac, ncopies-qrac:2, zz."),
        click.option("--lambda", "lam", type=float, help="Spread-regularizer weight."),
        click.option("--epochs", type=int, help="Training epochs."),
        click.option("--depth", type=int, help="RyRz depth."),
        click.option("--entanglement", type=click.Choice(["full", "linear"]), help="RyRz entangler layout."),
        click.option("--seed", type=int, help="First seed."),
        click.option("--runs", type=int, help="Seeded repetitions."),
        click.option("--shots", type=int, help="Measurement shots (0 = exact probabilities)."),
        click.option("--init", type=click.Choice(["random", "qrac"]), help="Embedding-table initialisation."),
        click.option("--data-root", type=click.Path(file_okay=False), help="Dataset directory (else $QTE_DATA_ROOT)."),
        click.option("--output", "-o", type=click.Path(file_okay=False), help="Output directory."),
        click.option("--print-config", is_flag=True, help="Print the resolved config as YAML and exit."),
    ]
    for option in reversed(options):
        fn = option(fn)
    return fn


def _execute(experiment: str, config_file, print_config: bool, **overrides):
    cfg = _build_config(experiment, config_file, overrides)
    if print_config:
        click.echo(yaml.safe_dump(cfg.as_dict(), sort_keys=False), nl=False)
        return
    log.info("running %s with %s", cfg.experiment, cfg.embedding)
    out_dir = Path(cfg.output)
    report = run(cfg, out_dir)
    paths = write_outputs(report, out_dir)
    click.echo(f"wrote {paths['report']}", err=True)


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log every epoch.")
def main(verbose: bool):
    """Trainable discrete-feature embeddings for variational quantum classifiers."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


@main.command()
@common_options
@click.option("--nbits", type=int, help="Parity width (1..12).")
@click.option("--sweep", is_flag=True, default=None, help="Sweep lambda over a log grid instead.")
@_exit_on_error
def parity(config_file, print_config, **kw):
    """Learn the parity function on the full truth table."""
    _execute("parity", config_file, print_config, **kw)


@main.command()
@common_options
@click.option("--folds", type=int, help="Cross-validation folds.")
@click.option("--sweep", is_flag=True, default=None, help="Sweep lambda over a log grid instead.")
@_exit_on_error
def bc(config_file, print_config, **kw):
    """UCI Breast Cancer recurrence, k-fold cross validated."""
    _execute("bc", config_file, print_config, **kw)


@main.command()
@common_options
@click.option("--folds", type=int, help="Cross-validation folds.")
@click.option("--mode", "titanic_mode", type=click.Choice(["discrete", "mixed"]),
              help="Feature mode for the pure ZZ baseline.")
@click.option("--sweep", is_flag=True, default=None, help="Sweep lambda over a log grid instead.")
@_exit_on_error
def titanic(config_file, print_config, **kw):
    """Titanic survival, k-fold cross validated."""
    _execute("titanic", config_file, print_config, **kw)


@main.command()
@common_options
@click.option("--train-cap", type=int, help="Use at most this many training images.")
@click.option("--test-cap", type=int, help="Use at most this many test images.")
@click.option("--lr", type=float, help="Adam learning rate.")
@click.option("--batch-size", type=int, help="Adam mini-batch size.")
@_exit_on_error
def mnist(config_file, print_config, **kw):
    """Binary 3-vs-6 MNIST with the Ising-readout QNN."""
    _execute("mnist", config_file, print_config, **kw)


@main.command()
@click.option("--seed", type=int, default=0)
@click.option("--epochs", type=int, default=400)
@click.option("--output", "-o", type=click.Path(file_okay=False), default="results")
@_exit_on_error
def selftest(seed, epochs, output):
    """Check SPSA and Adam on a quadratic bowl."""
    cfg = ExperimentConfig.from_dict({"experiment": "optimizer-selftest", "seed": seed, "epochs": epochs,
                                      "output": output})
    report = run(cfg)
    write_outputs(report, output)
    result = report["selftest"]
    click.echo(json.dumps(result))
    if not result["passed"]:
        sys.exit(4)


@main.command("bloch-export")
@click.argument("table_file", type=click.Path(dir_okay=False))
@click.option("--chunk-bits", type=click.IntRange(2, 4), default=3, help="Bits per chunk of the table.")
@click.option("--output", "-o", type=click.Path(dir_okay=False), default="bloch.csv")
@_exit_on_error
def bloch_export(table_file, chunk_bits, output):
    """Write Bloch coordinates of a saved table (``.npy`` angles, or ``qrac:<slots>``)."""
    if table_file.startswith("qrac:"):
        try:
            slots = int(table_file.split(":", 1)[1])
        except ValueError:
            raise ConfigError(f"expected qrac:<slots>, got {table_file!r}") from None
        if slots < 1 or chunk_bits == 4:
            raise ConfigError("qrac tables need at least one slot and 2 or 3 chunk bits")
        table = encode.qrac_table(encode.sequential_scheme(chunk_bits * slots, chunk_bits))
    else:
        try:
            params = np.load(table_file)
        except (OSError, ValueError) as exc:
            raise IngestionError(f"cannot read table {table_file}: {exc}") from None
        if params.ndim != 3 or params.shape[1:] != (2 ** chunk_bits, 2):
            raise IngestionError(f"table must have shape (slots, {2 ** chunk_bits}, 2), got {params.shape}")
        table = encode.EmbeddingTable(chunk_bits, params)
    try:
        path = export_bloch(table, output)
    except OSError as exc:
        raise IngestionError(f"cannot write {output}: {exc}") from None
    click.echo(str(path), err=True)


if __name__ == "__main__":  # pragma: no cover
    main()
