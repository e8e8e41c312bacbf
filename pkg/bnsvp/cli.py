"""Command line interface for bnsvp.

The ``bnsvp`` command groups the experiment pipeline: generate synthetic data,
partition positive bags, train a scorer, evaluate it, collect reports and run
ablation sweeps. Every subcommand leaves a ``run.json`` next to its outputs.

Exit codes: 0 on success, 1 on I/O or numeric failures, 2 on argument errors.
"""

import functools
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Any, Callable, NoReturn, Optional

import click

from . import configure
from .data import Dataset, load_dataset, write_dataset
from .environment import ExperimentEnvironment, derive_seed
from .errors import ArgumentError, BnsvpError
from .metrics import RocResult, evaluate_model, read_eval_result, report, write_eval_result
from .partition import PartitionConfig, PartitionResult, SamplerInit, run_gibbs_many
from .synth import ScenarioConfig, generate_multimodal, generate_planted, inject_outliers
from .training import LossKind, ScorerModel, TrainConfig, train

logger = logging.getLogger(__name__)

ABLATION_GRIDS: dict[str, list[float]] = {
    "epsilon": [10, 20, 35, 50, 75],
    "rho": [0, 1],
    "kappa": [1, 2, 3, 5, 8],
    "k": [1, 2, 3, 4, 5, 6, 7, 8],
}
_OUTLIER_STREAM = 3


def _fail(error: Exception) -> NoReturn:
    """Map a failure onto the exit-code contract."""
    if isinstance(error, ArgumentError):
        logger.error("Invalid arguments: %s", error)
        raise click.UsageError(str(error)) from error
    logger.error("Command failed: %s", error)
    sys.exit(1)


def _guarded(command: Callable[..., None]) -> Callable[..., None]:
    @functools.wraps(command)
    def wrapper(*args: Any, **kwargs: Any) -> None:
        try:
            command(*args, **kwargs)
        except (BnsvpError, OSError, ValueError) as e:
            _fail(e)

    return wrapper


def _environment() -> ExperimentEnvironment:
    return click.get_current_context().find_object(ExperimentEnvironment) or ExperimentEnvironment.from_environ()


def _partition_options(command: Callable[..., None]) -> Callable[..., None]:
    options = [
        click.option("--alpha", default=1.0, show_default=True, help="Transition concentration"),
        click.option("--gamma", default=1.0, show_default=True, help="Global stick concentration"),
        click.option("--rho", default=1.0, show_default=True, help="Sticky self-transition mass"),
        click.option("--tau", default=1.0, show_default=True, help="Sub-scene concentration"),
        click.option("--max-states", default=10, show_default=True, help="Scene truncation L"),
        click.option("--max-components", default=5, show_default=True, help="Sub-scene truncation T"),
        click.option("--iters", default=300, show_default=True, help="Gibbs sweeps"),
        click.option("--burn-in", default=100, show_default=True, help="Burn-in sweeps"),
        click.option(
            "--init",
            "sampler_init",
            type=click.Choice([init.value for init in SamplerInit]),
            default=SamplerInit.WARD.value,
            show_default=True,
            help="Starting assignments",
        ),
    ]
    for option in reversed(options):
        command = option(command)
    return command


def _partition_config(params: dict[str, Any], seed: int) -> PartitionConfig:
    return PartitionConfig(
        alpha=params["alpha"],
        gamma=params["gamma"],
        rho=params["rho"],
        tau=params["tau"],
        max_states=params["max_states"],
        max_components=params["max_components"],
        n_iters=params["iters"],
        burn_in=params["burn_in"],
        init=params["sampler_init"],
        seed=seed,
    )


@click.group()
@click.option(
    "--log-level",
    default=None,
    type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"]),
    help="Override log level (default: BNSVP_LOG_LEVEL or INFO)",
)
@click.pass_context
def cli(ctx: click.Context, log_level: Optional[str]) -> None:
    """Bayesian nonparametric submodular video partition experiments."""
    env = ExperimentEnvironment.from_environ()
    settings = dict(env.settings)
    if log_level is not None:
        settings["bnsvp.log_level"] = log_level
    settings = configure(settings)
    logging.basicConfig(
        level=getattr(logging, settings["bnsvp.log_level"].upper(), logging.INFO),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    )
    ctx.obj = ExperimentEnvironment(settings)


@cli.command()
@click.option(
    "--scenario", type=click.Choice(["planted", "outlier", "multimodal"]), default="planted", show_default=True
)
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False), help="Output dataset directory")
@click.option("--seed", default=0, show_default=True, help="Seed of the bag draws")
@click.option("--library-seed", default=0, show_default=True, help="Seed of the scene and anomaly means")
@click.option("--dim", default=8, show_default=True)
@click.option("--segments", default=32, show_default=True)
@click.option("--pos-bags", default=20, show_default=True)
@click.option("--neg-bags", default=20, show_default=True)
@click.option("--outlier-count", default=120, show_default=True, help="Segments replaced by noise (outlier scenario)")
@click.option("--modes", default=None, type=int, help="Anomaly modes (default: 1, or 3 for multimodal)")
@click.option("--separation", default=6.0, show_default=True, help="Distance between Gaussian means")
@click.option("--anomaly-fraction", default=0.25, show_default=True)
@click.option("--overlay/--no-overlay", default=False, show_default=True, help="Add anomaly means onto the scene")
@_guarded
def generate(
    scenario: str,
    out_dir: str,
    seed: int,
    library_seed: int,
    dim: int,
    segments: int,
    pos_bags: int,
    neg_bags: int,
    outlier_count: int,
    modes: Optional[int],
    separation: float,
    anomaly_fraction: float,
    overlay: bool,
) -> None:
    """Generate a synthetic dataset (manifest plus feature files)."""
    env = _environment()
    n_modes = modes if modes is not None else (3 if scenario == "multimodal" else 1)
    config = ScenarioConfig(
        n_bags_pos=pos_bags,
        n_bags_neg=neg_bags,
        n_segments=segments,
        dim=dim,
        anomaly_modes=1 if scenario == "multimodal" else n_modes,
        anomaly_fraction=anomaly_fraction,
        mean_separation=separation,
        anomaly_overlay=overlay,
        seed=seed,
        library_seed=library_seed,
        name=scenario,
    )
    record: dict[str, Any] = {"scenario": scenario, "scenario_config": config.to_dict()}
    env.start(record, seed=seed)

    if scenario == "multimodal":
        record["modes"] = n_modes
        dataset = generate_multimodal(config, n_modes)
    else:
        dataset = generate_planted(config)
    if scenario == "outlier":
        record["outlier_count"] = outlier_count
        dataset = inject_outliers(dataset, outlier_count, derive_seed(seed, _OUTLIER_STREAM))
    env.record.config.update(record)

    env.add_output(write_dataset(dataset, out_dir))
    env.close(out_dir)
    logger.info("Dataset written to %s", out_dir)


@cli.command()
@click.option("--manifest", required=True, type=click.Path(dir_okay=False), help="Dataset manifest")
@_partition_options
@click.option("--seed", default=0, show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@_guarded
def partition(manifest: str, seed: int, out_dir: str, **params: Any) -> None:
    """Partition every positive bag and write ``<id>.partition.json`` files."""
    env = _environment()
    base = _partition_config(params, seed)
    env.start({"manifest": manifest, "partition_config": base.to_dict()}, seed=seed)

    dataset = load_dataset(manifest)
    positives = dataset.positives()
    configs = [replace(base, seed=derive_seed(seed, position)) for position in range(len(positives))]
    results = run_gibbs_many([bag.features for bag in positives], configs, env.threads)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for bag, result in zip(positives, results):
        path = out / f"{bag.id}.partition.json"
        path.write_text(json.dumps(result.to_dict(), indent=2), encoding="utf-8")
        env.add_output(path)
        logger.info("Bag '%s': kappa=%d", bag.id, result.kappa_count)
    env.close(out)


def _load_partitions(directory: Path, dataset: Dataset) -> dict[str, PartitionResult]:
    partitions = {}
    for bag in dataset.positives():
        path = directory / f"{bag.id}.partition.json"
        if not path.is_file():
            raise FileNotFoundError(f"Partition file not found: {path}")
        partitions[bag.id] = PartitionResult.from_dict(json.loads(path.read_text(encoding="utf-8")))
    return partitions


@cli.command("train")
@click.option("--manifest", required=True, type=click.Path(dir_okay=False))
@click.option("--loss", "loss_kind", type=click.Choice(["max", "topk", "bnsvp"]), default="bnsvp", show_default=True)
@click.option("--k", default=1, show_default=True, help="k for the top-k loss")
@click.option("--epsilon-percentile", default=35.0, show_default=True)
@click.option("--lr", default=0.001, show_default=True)
@click.option("--l2", default=0.001, show_default=True)
@click.option("--epochs", default=50, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False), help="Model JSON path")
@click.option("--partitions", "partitions_dir", type=click.Path(file_okay=False), help="Directory of partition files")
@click.option("--auto-partition", is_flag=True, help="Partition positive bags inline")
@click.option("--no-propagation", is_flag=True, help="Score raw features without graph propagation")
@click.option("--refresh-every", type=int, default=None, help="Re-partition every N epochs")
@click.option("--smoothness", default=0.0, show_default=True, help="Temporal smoothness coefficient")
@click.option("--sparsity", default=0.0, show_default=True, help="Sparsity coefficient")
@_partition_options
@_guarded
def train_command(
    manifest: str,
    loss_kind: str,
    k: int,
    epsilon_percentile: float,
    lr: float,
    l2: float,
    epochs: int,
    seed: int,
    out: str,
    partitions_dir: Optional[str],
    auto_partition: bool,
    no_propagation: bool,
    refresh_every: Optional[int],
    smoothness: float,
    sparsity: float,
    **params: Any,
) -> None:
    """Train a segment scorer and write the model and its training log."""
    env = _environment()
    if loss_kind == "bnsvp" and partitions_dir is None and not auto_partition:
        raise ArgumentError("--loss bnsvp needs --partitions DIR or --auto-partition")
    config = TrainConfig(
        loss_kind=LossKind(loss_kind),
        k=k,
        learning_rate=lr,
        l2_coeff=l2,
        epochs=epochs,
        partition_refresh_every=refresh_every,
        epsilon_percentile=epsilon_percentile,
        partition_config=_partition_config(params, seed),
        seed=seed,
        use_propagation=not no_propagation,
        smoothness_coeff=smoothness,
        sparsity_coeff=sparsity,
    )
    env.start({"manifest": manifest, "partitions": partitions_dir, **config.to_dict()}, seed=seed)

    dataset = load_dataset(manifest)
    partitions = None
    if config.loss_kind is LossKind.BNSVP and partitions_dir is not None:
        partitions = _load_partitions(Path(partitions_dir), dataset)
    model, log = train(dataset, config, partitions=partitions, threads=env.threads)

    model_path = model.save(out)
    log_path = log.to_csv(model_path.with_name(f"{model_path.stem}_log.csv"))
    env.add_output(model_path)
    env.add_output(log_path)
    env.close(model_path.parent)


@cli.command("eval")
@click.option("--manifest", required=True, type=click.Path(dir_okay=False))
@click.option("--model", "model_path", required=True, type=click.Path(dir_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--name", default=None, help="Result name (default: model file stem)")
@_guarded
def eval_command(manifest: str, model_path: str, out_dir: str, name: Optional[str]) -> None:
    """Score a dataset and write ``eval_<name>.json``."""
    env = _environment()
    name = name or Path(model_path).stem
    env.start({"manifest": manifest, "model": model_path, "name": name})
    result = evaluate_model(ScorerModel.load(model_path), load_dataset(manifest))
    env.add_output(write_eval_result(name, result, out_dir))
    env.close(out_dir)
    click.echo(f"{name}: AUC {result.auc:.4f}")


@cli.command("report")
@click.option("--in", "in_dir", required=True, type=click.Path(file_okay=False), help="Directory of eval_*.json")
@click.option("--svg", is_flag=True, help="Also draw ROC curves as SVG")
@_guarded
def report_command(in_dir: str, svg: bool) -> None:
    """Collect evaluation results into ``metrics.csv`` and ROC curve files."""
    env = _environment()
    env.start({"in": in_dir, "svg": svg})
    directory = Path(in_dir)
    if not directory.is_dir():
        raise FileNotFoundError(f"Input directory not found: {directory}")
    results = sorted(
        (read_eval_result(path) for path in directory.glob("eval_*.json")), key=lambda item: item[0]
    )
    for path in report(results, directory, svg=svg):
        env.add_output(path)
    env.close(directory)


def _ablation_point(sweep: str, value: float, config: TrainConfig) -> TrainConfig:
    if sweep == "epsilon":
        return replace(config, epsilon_percentile=float(value))
    if sweep == "rho":
        return replace(config, partition_config=replace(config.partition_config, rho=float(value)))
    if sweep == "kappa":
        return replace(config, partition_config=replace(config.partition_config, max_components=int(value)))
    return replace(config, loss_kind=LossKind.TOPK, k=int(value))


@cli.command()
@click.option("--sweep", type=click.Choice(sorted(ABLATION_GRIDS)), required=True)
@click.option("--train-manifest", required=True, type=click.Path(dir_okay=False))
@click.option("--test-manifest", required=True, type=click.Path(dir_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--values", default=None, help="Comma-separated grid overriding the default")
@click.option("--epsilon-percentile", default=35.0, show_default=True)
@click.option("--lr", default=0.001, show_default=True)
@click.option("--l2", default=0.001, show_default=True)
@click.option("--epochs", default=50, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--no-propagation", is_flag=True)
@click.option("--svg", is_flag=True)
@_partition_options
@_guarded
def ablate(
    sweep: str,
    train_manifest: str,
    test_manifest: str,
    out_dir: str,
    values: Optional[str],
    epsilon_percentile: float,
    lr: float,
    l2: float,
    epochs: int,
    seed: int,
    no_propagation: bool,
    svg: bool,
    **params: Any,
) -> None:
    """Train and evaluate one bnsvp (or top-k) model per grid value."""
    env = _environment()
    try:
        grid = [float(v) for v in values.split(",")] if values else ABLATION_GRIDS[sweep]
    except ValueError as e:
        raise ArgumentError(f"Invalid --values {values!r}: {e}") from e
    base = TrainConfig(
        loss_kind=LossKind.BNSVP,
        learning_rate=lr,
        l2_coeff=l2,
        epochs=epochs,
        epsilon_percentile=epsilon_percentile,
        partition_config=_partition_config(params, seed),
        seed=seed,
        use_propagation=not no_propagation,
    )
    env.start({"sweep": sweep, "grid": grid, "base": base.to_dict()}, seed=seed)

    train_set, test_set = load_dataset(train_manifest), load_dataset(test_manifest)
    results: list[tuple[str, RocResult]] = []
    for value in grid:
        name = f"{sweep}_{value:g}"
        model, _ = train(train_set, _ablation_point(sweep, value, base), threads=env.threads)
        result = evaluate_model(model, test_set)
        env.add_output(write_eval_result(name, result, out_dir))
        results.append((name, result))
        click.echo(f"{name}: AUC {result.auc:.4f}")
    for path in report(results, out_dir, svg=svg):
        env.add_output(path)
    env.close(out_dir)


def main() -> None:
    cli(prog_name="bnsvp")


if __name__ == "__main__":
    main()
