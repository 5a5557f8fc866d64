"""Command-line interface: inspect, trace, quantize, report, eval."""

from __future__ import annotations

import json
import sys

import click
import numpy as np

from .blocks import identify_blocks
from .calibration import execute, record_traces
from .inputs import load_inputs
from .package import load_package, load_traces, save_package, save_traces
from .pipeline import PipelineConfig, derive_report, quantize_model
from .tensor import error_metrics


def _fail(exc: Exception) -> None:
    click.echo(f"error: {exc}", err=True)
    sys.exit(1)


@click.group()
def main():
    """Structure-aware post-training quantization for hybrid models."""


@main.command()
@click.argument("model_dir", type=click.Path())
@click.option("--json", "as_json", is_flag=True, help="Emit machine-readable JSON.")
def inspect(model_dir, as_json):
    """Print the CNN/transformer block partition of a model."""
    try:
        pkg = load_package(model_dir)
        partition = identify_blocks(pkg)
    except Exception as exc:
        _fail(exc)
    payload = partition.to_json()
    if as_json:
        click.echo(json.dumps(payload, indent=2, sort_keys=True))
    else:
        click.echo("cnn:")
        for p in payload["cnn"]:
            click.echo(f"  {p}")
        click.echo("transformer:")
        for p in payload["transformer"]:
            click.echo(f"  {p}")


@main.command()
@click.argument("model_dir", type=click.Path())
@click.option("--inputs", "inputs_file", required=True, type=click.Path())
@click.option("--out", "out_dir", required=True, type=click.Path())
def trace(model_dir, inputs_file, out_dir):
    """Record post-softmax calibration traces with the toy executor."""
    try:
        pkg = load_package(model_dir)
        tensors = load_inputs(inputs_file)
        traces = record_traces(pkg, tensors)
        save_traces(traces, out_dir)
    except Exception as exc:
        _fail(exc)
    click.echo(f"recorded {traces.n_samples} samples for {len(traces.sites)} sites -> {out_dir}")


@main.command()
@click.argument("model_dir", type=click.Path())
@click.option("--traces", "traces_dir", type=click.Path(), default=None)
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--bits", default=8, show_default=True)
@click.option("--epsilon", default=1e-5, show_default=True)
@click.option("--granularity", default="per-module", show_default=True,
              type=click.Choice(["per-module", "per-group"]))
@click.option("--report", "report_file", type=click.Path(), default=None)
@click.option("--allow-uncalibrated", is_flag=True)
def quantize(model_dir, traces_dir, out_dir, bits, epsilon, granularity,
             report_file, allow_uncalibrated):
    """Quantize conv weights and annotate softmax sites; write package + report."""
    try:
        pkg = load_package(model_dir)
        traces = load_traces(traces_dir) if traces_dir else None
        cfg = PipelineConfig(bits=bits, epsilon=epsilon, granularity=granularity,
                             allow_uncalibrated=allow_uncalibrated)
        quantized, rpt = quantize_model(pkg, traces, cfg)
        save_package(quantized, out_dir)
        if report_file:
            with open(report_file, "w", encoding="utf-8") as f:
                json.dump(rpt, f, indent=2, sort_keys=True)
                f.write("\n")
    except Exception as exc:
        _fail(exc)
    totals = rpt["totals"]
    click.echo(
        f"quantized {len(rpt['tensors'])} tensors/sites, "
        f"compression {totals['compression_ratio']:.2f}x -> {out_dir}"
    )
    for warning in rpt["warnings"]:
        click.echo(f"warning: {warning}", err=True)


@main.command()
@click.argument("quant_dir", type=click.Path())
def report(quant_dir):
    """Re-derive and print the quantization report for a quantized package."""
    try:
        pkg = load_package(quant_dir)
        rpt = derive_report(pkg)
    except Exception as exc:
        _fail(exc)
    click.echo(json.dumps(rpt, indent=2, sort_keys=True))


@main.command(name="eval")
@click.argument("model_dir", type=click.Path())
@click.argument("quant_dir", type=click.Path())
@click.option("--inputs", "inputs_file", required=True, type=click.Path())
def eval_cmd(model_dir, quant_dir, inputs_file):
    """Compare fp32 and simulated-quantized execution on a batch of inputs."""
    try:
        pkg = load_package(model_dir)
        qpkg = load_package(quant_dir)
        tensors = load_inputs(inputs_file)
        cosines = []
        max_abs = 0.0
        agree = 0
        for x in tensors:
            ref, _ = execute(pkg, x, mode="fp32")
            sim, _ = execute(pkg, x, mode="simulated_quant", quant=qpkg)
            m = error_metrics(ref, sim)
            cosines.append(m["cosine_sim"])
            max_abs = max(max_abs, m["max_abs_err"])
            agree += int(np.argmax(ref) == np.argmax(sim))
    except Exception as exc:
        _fail(exc)
    result = {
        "n_inputs": len(tensors),
        "cosine_sim": float(np.mean(cosines)),
        "min_cosine_sim": float(np.min(cosines)),
        "max_abs_diff": max_abs,
        "top1_agreement": agree / len(tensors),
    }
    click.echo(json.dumps(result, indent=2, sort_keys=True))


if __name__ == "__main__":
    main()
