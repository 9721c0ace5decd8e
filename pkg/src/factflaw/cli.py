"""Command-line interface: distill, train-retriever, finetune, run, evaluate.

All commands read one declarative YAML config (see PipelineConfig for the
keys) and accept per-command overrides by flag. Defaults follow the pipeline
conventions: top-50 retrieval, adapter rank 8, greedy decoding, seed 13.
"""

from __future__ import annotations

import logging

import click

from .corpus import dataset_stats, format_stats_table, load_dataset
from .pipeline import (
    PipelineConfig,
    RunScope,
    STAGES,
    cmd_distill,
    cmd_evaluate,
    cmd_finetune,
    cmd_train_retriever,
    run_pipeline,
)

_SCOPES = [s.value for s in RunScope]


def _load_config(config_path: str, scope: str | None, seed: int | None,
                 out: str | None) -> PipelineConfig:
    return PipelineConfig.from_yaml(config_path, scope=scope, seed=seed, out_dir=out)


def _common_options(fn):
    fn = click.option("--config", "config_path", required=True,
                      type=click.Path(exists=True, dir_okay=False),
                      help="YAML pipeline config")(fn)
    fn = click.option("--scope", type=click.Choice(_SCOPES), default=None,
                      help="override the configured scope")(fn)
    fn = click.option("--seed", type=int, default=None, help="override the seed")(fn)
    fn = click.option("--out", type=click.Path(), default=None,
                      help="override the output directory")(fn)
    return fn


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="debug logging")
def main(verbose: bool) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )


@main.command()
@_common_options
@click.option("--resume/--no-resume", default=True, show_default=True)
def distill(config_path, scope, seed, out, resume):
    """Build silver aspect/flaw labels from review articles."""
    config = _load_config(config_path, scope, seed, out)
    summary = cmd_distill(config, resume=resume)
    click.echo(
        f"distilled {summary.written} records "
        f"({summary.skipped} already done, {len(summary.failures)} failed) "
        f"-> {config.silver_file}"
    )


@main.command("train-retriever")
@_common_options
def train_retriever_cmd(config_path, scope, seed, out):
    """Train the dense evidence retriever on review-article positives."""
    config = _load_config(config_path, scope, seed, out)
    checkpoint, curve = cmd_train_retriever(config)
    click.echo(f"retriever saved to {checkpoint} (loss {curve[0]:.4f} -> {curve[-1]:.4f})")


@main.command()
@click.argument("stage", type=click.Choice(STAGES))
@_common_options
def finetune(stage, config_path, scope, seed, out):
    """Fine-tune one stage's adapters on the distilled silver labels."""
    config = _load_config(config_path, scope, seed, out)
    checkpoint, curve = cmd_finetune(config, stage)
    click.echo(f"adapters saved to {checkpoint} (loss {curve[0]:.4f} -> {curve[-1]:.4f})")


@main.command()
@_common_options
@click.option("--resume/--no-resume", default=True, show_default=True)
def run(config_path, scope, seed, out, resume):
    """Run the pipeline: retrieve, generate, justify; writes outputs + manifest."""
    config = _load_config(config_path, scope, seed, out)
    result = run_pipeline(config, resume=resume)
    click.echo(
        f"processed {result.n_done} claims ({result.n_skipped} already done, "
        f"{len(result.failures)} failed) -> {result.outputs_path}"
    )


@main.command()
@_common_options
def evaluate(config_path, scope, seed, out):
    """Score a completed run: generation metrics, judge scores, veracity."""
    config = _load_config(config_path, scope, seed, out)
    reports = cmd_evaluate(config)
    click.echo(
        f"scored {reports['n_scored']} claims "
        f"({reports['excluded']} excluded, {reports['unjudged']} unjudged)"
    )
    for name in ("justification_report", "judge_report", "veracity_report"):
        path = config.out_dir / f"{name}.txt"
        click.echo(f"\n{path}:")
        click.echo(path.read_text(encoding="utf-8").rstrip())


@main.command()
@click.argument("dataset", type=click.Path(exists=True, dir_okay=False))
def stats(dataset):
    """Print the per-split label distribution of a dataset file."""
    records = load_dataset(dataset)
    click.echo(format_stats_table(dataset_stats(records)))


if __name__ == "__main__":
    main()
