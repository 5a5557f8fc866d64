"""CLI entry points: export-model and export-traces."""

from __future__ import annotations

import logging
import sys

import click

from .export import ExportError, export_model, export_traces, load_inputs

logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")


@click.command(name="export-model")
@click.argument("checkpoint", type=click.Path())
@click.argument("out_dir", type=click.Path())
def export_model_cmd(checkpoint, out_dir):
    """Convert a saved PyTorch module into an interchange package."""
    try:
        export_model(checkpoint, out_dir)
    except (ExportError, OSError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    click.echo(f"exported {checkpoint} -> {out_dir}")


@click.command(name="export-traces")
@click.argument("checkpoint", type=click.Path())
@click.argument("inputs_file", type=click.Path())
@click.argument("out_dir", type=click.Path())
@click.option("--n", "limit", default=32, show_default=True,
              help="Maximum number of calibration inputs to run.")
def export_traces_cmd(checkpoint, inputs_file, out_dir, limit):
    """Record post-softmax activation traces via forward hooks."""
    try:
        inputs = load_inputs(inputs_file)[:limit]
        manifest = export_traces(checkpoint, inputs, out_dir)
    except (ExportError, OSError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    click.echo(
        f"recorded {manifest['n_samples']} samples for "
        f"{len(manifest['sites'])} sites -> {out_dir}"
    )
