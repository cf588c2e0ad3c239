"""Command-line surface: one subcommand per pipeline stage.

Every command writes its artifacts plus a ``<command>_manifest.json`` under
--out-dir; ``replay --manifest`` re-runs the recorded arguments.
"""
import argparse
import logging
import sys
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from pydantic import ValidationError

from . import __version__
from .compare import (
    compare_models,
    class_sequence,
    class_transition_count,
    endpoint_latent,
    interpolation_curves,
    interpolation_sequence,
    sample_test_pairs,
    select_rows,
)
from .config import Settings, load_settings, mnist_paths
from .data import Dataset, filter_digits, load_idx
from .errors import InvalidInputError, LatentGeometryError
from .fields import scalar_grid, streamlines
from .geodesic import shorten
from .metrics import build_metric
from .metrics.base import MetricProvider
from .models import (
    Bounds,
    CompareConfig,
    CurveOptConfig,
    FieldKind,
    GradientMode,
    GridConfig,
    McConfig,
    MetricVariant,
    RunManifest,
    StreamKind,
    StreamlineConfig,
    TrainConfig,
)
from .network import FeatureMap, StochasticGenerator, VaeModel, audit_jacobians, load_model, save_model
from .outputs import (
    write_comparison_csv,
    write_grid_csv,
    write_json,
    write_pgm,
    write_records_csv,
    write_streamlines_csv,
    write_summary_json,
)
from .sampling import run_monte_carlo
from .training import train_logreg, train_vae

logger = logging.getLogger(__name__)

DEFAULT_DIGITS = [2, 4, 5, 7]
GRID_KINDS = {"log-cond": FieldKind.LOG_CONDITION, "log-sqrt-det": FieldKind.LOG_SQRT_DET}
STREAM_KINDS = {"min": StreamKind.MIN_EIG, "max": StreamKind.MAX_EIG}

_TRAIN = TrainConfig()
_CURVE = CurveOptConfig()
_MC = McConfig()
_COMPARE = CompareConfig()
_GRID = GridConfig()
_STREAM = StreamlineConfig()


@dataclass
class CommandResult:
    outputs: List[Path] = field(default_factory=list)
    exit_code: int = 0


# Argument groups


def _add_common(p: argparse.ArgumentParser, settings: Settings) -> None:
    p.add_argument("--out-dir", type=Path, default=settings.output_dir, help="directory for all outputs")
    p.add_argument("--seed", type=int, default=0, help="single source of randomness")
    p.add_argument("--workers", type=int, default=settings.workers, help="parallel jobs")
    p.add_argument("--log-level", default=settings.log_level,
                   choices=["DEBUG", "INFO", "WARNING", "ERROR"], type=str.upper)


def _add_dataset(p: argparse.ArgumentParser) -> None:
    p.add_argument("--images", type=Path, help="IDX image file (default from LATENT_GEODESICS_MNIST_DIR)")
    p.add_argument("--labels", type=Path, help="IDX label file")
    p.add_argument("--digits", type=int, nargs="+", default=DEFAULT_DIGITS)
    p.add_argument("--limit", type=int, help="use only the first N images after filtering")


def _add_metric(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", type=Path, required=True, help="model JSON file")
    p.add_argument("--feature", type=Path, help="logistic regression model JSON to measure in")
    p.add_argument("--variant", choices=[v.value for v in MetricVariant if v != MetricVariant.CONFORMAL])


def _add_curve(p: argparse.ArgumentParser) -> None:
    p.add_argument("--quad-points", type=int, default=_CURVE.quad_points)
    p.add_argument("--energy-segments", type=int, default=_CURVE.energy_segments)
    p.add_argument("--step-size", type=float, default=_CURVE.step_size)
    p.add_argument("--max-step-size", type=float, default=_CURVE.max_step_size)
    p.add_argument("--step-growth", type=float, default=_CURVE.step_growth)
    p.add_argument("--max-halvings", type=int, default=_CURVE.max_halvings, help="backtracking halvings per step")
    p.add_argument("--max-iters", type=int, default=_CURVE.max_iters)
    p.add_argument("--plateau-window", type=int, default=_CURVE.plateau_window)
    p.add_argument("--plateau-rel-tol", type=float, default=_CURVE.plateau_rel_tol)
    p.add_argument("--max-control-points", type=int, default=_CURVE.max_control_points)
    p.add_argument("--gradient-mode", choices=[m.value for m in GradientMode])
    p.add_argument("--fd-step", type=float, default=_CURVE.fd_step, help="central-difference step")


def _add_optimizer(p: argparse.ArgumentParser) -> None:
    p.add_argument("--beta1", type=float, default=_TRAIN.beta1)
    p.add_argument("--beta2", type=float, default=_TRAIN.beta2)
    p.add_argument("--adam-eps", type=float, default=_TRAIN.adam_eps)


def _add_bounds(p: argparse.ArgumentParser) -> None:
    b = _GRID.bounds
    p.add_argument("--bounds", type=float, nargs=4, metavar=("XMIN", "XMAX", "YMIN", "YMAX"),
                   default=[b.xmin, b.xmax, b.ymin, b.ymax])


def build_parser(settings: Optional[Settings] = None) -> argparse.ArgumentParser:
    settings = settings or Settings()
    parser = argparse.ArgumentParser(
        prog="latent-geodesics",
        description="Pull-back metrics, shorter curves and relative improvements for generator latent spaces",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-vae", help="train the 2D-latent VAE")
    _add_common(p, settings)
    _add_dataset(p)
    p.add_argument("--epochs", type=int, default=_TRAIN.epochs)
    p.add_argument("--variance-epochs", type=int, default=_TRAIN.variance_epochs)
    p.add_argument("--batch-size", type=int, default=_TRAIN.batch_size)
    p.add_argument("--learning-rate", type=float, default=_TRAIN.learning_rate)
    p.add_argument("--latent-dim", type=int, default=_TRAIN.latent_dim)
    p.add_argument("--hidden", type=int, nargs="+", default=_TRAIN.hidden)
    p.add_argument("--sigma-floor", type=float, default=_TRAIN.sigma_floor)
    p.add_argument("--holdout-fraction", type=float, default=_TRAIN.holdout_fraction)
    p.add_argument("--grad-clip", type=float, default=_TRAIN.grad_clip, help="global gradient norm cap")
    _add_optimizer(p)
    p.add_argument("--output", default="vae.json", help="model file name inside --out-dir")
    p.set_defaults(handler=cmd_train_vae)

    p = sub.add_parser("train-logreg", help="train the logistic regression feature map")
    _add_common(p, settings)
    _add_dataset(p)
    p.add_argument("--epochs", type=int, default=_TRAIN.epochs)
    p.add_argument("--batch-size", type=int, default=_TRAIN.batch_size)
    p.add_argument("--learning-rate", type=float, default=_TRAIN.learning_rate)
    p.add_argument("--l2", type=float, default=_TRAIN.l2)
    _add_optimizer(p)
    p.add_argument("--output", default="logreg.json")
    p.set_defaults(handler=cmd_train_logreg)

    p = sub.add_parser("shorten", help="shorten the straight line between two latent points")
    _add_common(p, settings)
    _add_metric(p)
    _add_curve(p)
    p.add_argument("--from", dest="z0", type=float, nargs="+", required=True)
    p.add_argument("--to", dest="z1", type=float, nargs="+", required=True)
    p.set_defaults(handler=cmd_shorten)

    p = sub.add_parser("mc-improve", help="Monte-Carlo expected worst-case relative improvement")
    _add_common(p, settings)
    _add_metric(p)
    _add_curve(p)
    p.add_argument("--alpha", type=float, required=True, help="step along the maximal eigenvector")
    p.add_argument("--samples", type=int, default=_MC.n_samples)
    p.add_argument("--bins", type=int, default=_MC.histogram_bins)
    p.add_argument("--bootstrap", type=int, default=_MC.bootstrap_resamples)
    p.add_argument("--max-failure-fraction", type=float, default=_MC.max_failure_fraction,
                   help="abort when more samples than this fail")
    p.set_defaults(handler=cmd_mc_improve)

    p = sub.add_parser("grid", help="scalar metric field over a 2D window")
    _add_common(p, settings)
    _add_metric(p)
    _add_bounds(p)
    p.add_argument("--kind", choices=list(GRID_KINDS), default="log-cond")
    p.add_argument("--resolution", type=int, nargs=2, metavar=("NX", "NY"), default=[_GRID.nx, _GRID.ny])
    p.set_defaults(handler=cmd_grid)

    p = sub.add_parser("streamlines", help="streamlines of the extreme eigenvector fields")
    _add_common(p, settings)
    _add_metric(p)
    _add_bounds(p)
    p.add_argument("--kind", choices=list(STREAM_KINDS), default="min")
    p.add_argument("--seed-grid", type=int, nargs=2, metavar=("NX", "NY"), default=[5, 5])
    p.add_argument("--seed-point", type=float, nargs=2, action="append", metavar=("X", "Y"),
                   help="explicit seed, repeatable; replaces --seed-grid")
    p.add_argument("--step-length", type=float, default=_STREAM.step_length)
    p.add_argument("--steps", type=int, default=_STREAM.n_steps)
    p.set_defaults(handler=cmd_streamlines)

    p = sub.add_parser("compare", help="match interpolations across two models")
    _add_common(p, settings)
    _add_dataset(p)
    _add_curve(p)
    p.add_argument("--model-a", type=Path, required=True)
    p.add_argument("--model-b", type=Path, required=True)
    p.add_argument("--pairs", type=int, default=_COMPARE.n_pairs)
    p.add_argument("--threshold", type=float, default=_COMPARE.threshold)
    p.add_argument("--variant", choices=[MetricVariant.DETERMINISTIC.value, MetricVariant.STOCHASTIC.value],
                   default=_COMPARE.variant.value)
    p.set_defaults(handler=cmd_compare)

    p = sub.add_parser("interp", help="straight and shortened interpolation strips")
    _add_common(p, settings)
    _add_dataset(p)
    _add_curve(p)
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--feature", type=Path)
    p.add_argument("--from-idx", type=int, required=True)
    p.add_argument("--to-idx", type=int, required=True)
    p.add_argument("--frames", type=int, default=10)
    p.set_defaults(handler=cmd_interp)

    p = sub.add_parser("check-jacobian", help="audit analytic Jacobians against finite differences")
    _add_common(p, settings)
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--points", type=int, default=10)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--fd-step", type=float, default=1e-6, help="central-difference step")
    p.set_defaults(handler=cmd_check_jacobian)

    p = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    p.add_argument("--manifest", type=Path, required=True)
    p.set_defaults(handler=None)
    return parser


# Shared loaders


def _curve_config(args: argparse.Namespace) -> CurveOptConfig:
    return CurveOptConfig(
        quad_points=args.quad_points,
        energy_segments=args.energy_segments,
        step_size=args.step_size,
        max_step_size=args.max_step_size,
        step_growth=args.step_growth,
        max_halvings=args.max_halvings,
        max_iters=args.max_iters,
        plateau_window=args.plateau_window,
        plateau_rel_tol=args.plateau_rel_tol,
        max_control_points=args.max_control_points,
        gradient_mode=args.gradient_mode,
        fd_step=args.fd_step,
    )


def _feature(path: Optional[Path]) -> Optional[FeatureMap]:
    if path is None:
        return None
    feature = load_model(path)
    if not isinstance(feature, FeatureMap):
        raise InvalidInputError(f"{path} is not a logistic regression model")
    return feature


def _provider(args: argparse.Namespace) -> MetricProvider:
    variant = MetricVariant(args.variant) if args.variant else None
    return build_metric(load_model(args.model), _feature(args.feature), variant)


def _generator_model(path: Path):
    model = load_model(path)
    if not isinstance(model, (VaeModel, StochasticGenerator)):
        raise InvalidInputError(f"{path} does not hold a stochastic generator")
    return model


def _dataset(args: argparse.Namespace, split: str) -> Dataset:
    images, labels = args.images, args.labels
    if images is None or labels is None:
        settings = load_settings()
        if settings.mnist_dir is None:
            raise InvalidInputError("pass --images and --labels or set LATENT_GEODESICS_MNIST_DIR")
        default_images, default_labels = mnist_paths(settings.mnist_dir, split)
        images, labels = images or default_images, labels or default_labels
        # resolved paths go into the manifest argv
        args.images, args.labels = images, labels
    ds = filter_digits(load_idx(images, labels), args.digits)
    if args.limit is not None:
        ds = ds.subset(np.arange(min(args.limit, len(ds))))
    logger.info("loaded %d images of digits %s", len(ds), args.digits)
    return ds


# Commands


def cmd_train_vae(args: argparse.Namespace) -> CommandResult:
    cfg = TrainConfig(
        epochs=args.epochs, variance_epochs=args.variance_epochs, batch_size=args.batch_size,
        learning_rate=args.learning_rate, seed=args.seed, latent_dim=args.latent_dim,
        hidden=args.hidden, sigma_floor=args.sigma_floor, holdout_fraction=args.holdout_fraction,
        grad_clip=args.grad_clip, beta1=args.beta1, beta2=args.beta2, adam_eps=args.adam_eps,
    )
    result = train_vae(_dataset(args, "train"), cfg)
    model_path = save_model(args.out_dir / args.output, result.model)
    history_path = write_json(args.out_dir / "vae_history.json",
                              [h.model_dump(mode="json") for h in result.history])
    print(f"🧠 final held-out ELBO {result.history[-1].heldout_elbo:.4f}")
    return CommandResult([model_path, history_path])


def cmd_train_logreg(args: argparse.Namespace) -> CommandResult:
    cfg = TrainConfig(
        epochs=args.epochs, batch_size=args.batch_size, learning_rate=args.learning_rate,
        seed=args.seed, l2=args.l2, beta1=args.beta1, beta2=args.beta2, adam_eps=args.adam_eps,
    )
    result = train_logreg(_dataset(args, "train"), cfg)
    model_path = save_model(args.out_dir / args.output, result.feature_map)
    history_path = write_json(args.out_dir / "logreg_history.json",
                              [h.model_dump(mode="json") for h in result.history])
    print(f"🎯 training accuracy {result.train_accuracy:.4f}")
    return CommandResult([model_path, history_path])


def cmd_shorten(args: argparse.Namespace) -> CommandResult:
    result = shorten(np.array(args.z0), np.array(args.z1), _provider(args), _curve_config(args))
    path = write_json(args.out_dir / "shorten.json", {
        "d_straight": result.d_straight,
        "d_short": result.d_short,
        "rel_improvement": result.rel_improvement,
        "iterations": result.iterations,
        "control_points": result.control_points,
        "fallback_used": result.fallback_used,
        "insertions": result.insertions,
        "energy_trace": result.energy_trace,
        "curve": result.curve.to_document().model_dump(mode="json"),
    })
    print(f"📏 relative improvement {result.rel_improvement:.6f} "
          f"({result.d_straight:.6f} -> {result.d_short:.6f})")
    return CommandResult([path])


def cmd_mc_improve(args: argparse.Namespace) -> CommandResult:
    cfg = McConfig(
        n_samples=args.samples, alpha=args.alpha, seed=args.seed, shorten=_curve_config(args),
        histogram_bins=args.bins, workers=args.workers, bootstrap_resamples=args.bootstrap,
        max_failure_fraction=args.max_failure_fraction,
    )
    summary = run_monte_carlo(_provider(args), cfg)
    records = write_records_csv(args.out_dir / "mc_records.csv", summary)
    sidecar = write_summary_json(args.out_dir / "mc_summary.json", summary)
    print(f"📊 mean relative improvement {summary.mean:.4f} ± {summary.std:.4f} "
          f"({summary.n_recorded} samples, {summary.n_failures} failed, {summary.n_fallbacks} fallbacks)")
    return CommandResult([records, sidecar])


def _bounds(args: argparse.Namespace) -> Bounds:
    xmin, xmax, ymin, ymax = args.bounds
    return Bounds(xmin=xmin, xmax=xmax, ymin=ymin, ymax=ymax)


def cmd_grid(args: argparse.Namespace) -> CommandResult:
    cfg = GridConfig(kind=GRID_KINDS[args.kind], bounds=_bounds(args), nx=args.resolution[0],
                     ny=args.resolution[1], workers=args.workers)
    grid = scalar_grid(_provider(args), cfg.kind, cfg.bounds, (cfg.nx, cfg.ny), cfg.workers)
    path = write_grid_csv(args.out_dir / f"grid_{cfg.kind.value}.csv", grid)
    if grid.n_missing:
        print(f"⚠️  {grid.n_missing} singular nodes written as nan")
    return CommandResult([path])


def cmd_streamlines(args: argparse.Namespace) -> CommandResult:
    cfg = StreamlineConfig(kind=STREAM_KINDS[args.kind], step_length=args.step_length,
                           n_steps=args.steps, bounds=_bounds(args), workers=args.workers)
    b = cfg.bounds
    if args.seed_point:
        seeds = [tuple(point) for point in args.seed_point]
    else:
        nx, ny = args.seed_grid
        # interior points only, so no seed starts on the boundary
        xs = np.linspace(b.xmin, b.xmax, nx + 2)[1:-1]
        ys = np.linspace(b.ymin, b.ymax, ny + 2)[1:-1]
        seeds = [(x, y) for y in ys for x in xs]
    lines = streamlines(_provider(args), cfg.kind, seeds, cfg.step_length, cfg.n_steps, cfg.bounds,
                        workers=cfg.workers)
    path = write_streamlines_csv(args.out_dir / f"streamlines_{cfg.kind.value}.csv", lines)
    return CommandResult([path])


def cmd_compare(args: argparse.Namespace) -> CommandResult:
    cfg = CompareConfig(n_pairs=args.pairs, threshold=args.threshold, seed=args.seed,
                        variant=MetricVariant(args.variant), shorten=_curve_config(args), workers=args.workers)
    model_a, model_b = _generator_model(args.model_a), _generator_model(args.model_b)
    pairs = sample_test_pairs(_dataset(args, "t10k"), cfg.n_pairs, cfg.seed)
    rows = compare_models(model_a, model_b, pairs, cfg)
    path = write_comparison_csv(args.out_dir / "comparison.csv", rows)
    selected = [r.pair_index + 1 for r in select_rows(rows, cfg.threshold)]
    print(f"🔎 {len(selected)} of {len(rows)} pairs within gap {cfg.threshold}: {selected}")
    return CommandResult([path])


def cmd_interp(args: argparse.Namespace) -> CommandResult:
    model = _generator_model(args.model)
    generator = model.generator if isinstance(model, VaeModel) else model
    feature = _feature(args.feature)
    ds = _dataset(args, "t10k")
    for index in (args.from_idx, args.to_idx):
        if not 0 <= index < len(ds):
            raise InvalidInputError(f"image index {index} outside the {len(ds)} filtered images")
    z0 = endpoint_latent(model, ds.images[args.from_idx], args.seed)
    z1 = endpoint_latent(model, ds.images[args.to_idx], args.seed + 1)
    curves = interpolation_curves(generator, z0, z1, _curve_config(args), feature)

    outputs, report = [], {"from_idx": args.from_idx, "to_idx": args.to_idx, "curves": {}}
    for name, (curve, improvement) in curves.items():
        strip = interpolation_sequence(generator, curve, args.frames)
        outputs.append(write_pgm(args.out_dir / f"interp_{name}.pgm", strip))
        entry: Dict[str, Any] = {"rel_improvement": improvement}
        if feature is not None:
            entry["classes"] = class_sequence(feature, generator, curve, args.frames).tolist()
            entry["transitions"] = class_transition_count(feature, generator, curve, args.frames)
        report["curves"][name] = entry
    outputs.append(write_json(args.out_dir / "interp.json", report))
    return CommandResult(outputs)


def cmd_check_jacobian(args: argparse.Namespace) -> CommandResult:
    audits = audit_jacobians(load_model(args.model), args.points, args.seed, args.tolerance, args.fd_step)
    path = write_json(args.out_dir / "jacobian_audit.json", [a.model_dump() for a in audits])
    for audit in audits:
        mark = "✅" if audit.passed else "❌"
        print(f"{mark} {audit.network}: max relative error {audit.max_rel_error:.3e}")
    return CommandResult([path], exit_code=0 if all(a.passed for a in audits) else 1)


# Dispatch


def _jsonable(value: Any) -> Any:
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


def _manifest(args: argparse.Namespace, argv: List[str], started: datetime, outputs: List[Path]) -> RunManifest:
    recorded = list(argv)
    for flag, name in (("--out-dir", "out_dir"), ("--images", "images"), ("--labels", "labels")):
        value = getattr(args, name, None)
        if value is not None and flag not in recorded:
            recorded += [flag, str(value)]
    config = {k: _jsonable(v) for k, v in vars(args).items() if k != "handler"}
    return RunManifest(
        command=args.command,
        argv=recorded,
        config=config,
        seed=args.seed,
        started_at=started,
        finished_at=datetime.now(timezone.utc),
        outputs=[str(p) for p in outputs],
        version=__version__,
    )


def cli_dispatch(argv: Optional[Sequence[str]] = None) -> int:
    """Run one command; returns 0 on success, 1 on domain errors, 2 on usage errors"""
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        settings = load_settings()
    except ValueError as e:
        print(f"❌ bad environment settings: {e}", file=sys.stderr)
        return 1
    parser = build_parser(settings)
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 2

    if args.command == "replay":
        try:
            manifest = RunManifest.model_validate_json(args.manifest.read_text())
        except (ValidationError, OSError) as e:
            print(f"❌ cannot read manifest: {e}", file=sys.stderr)
            return 1
        print(f"🔁 replaying {manifest.command}")
        return cli_dispatch(manifest.argv)

    logging.basicConfig(level=args.log_level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    started = datetime.now(timezone.utc)
    try:
        result = args.handler(args)
        manifest_path = write_json(args.out_dir / f"{args.command}_manifest.json",
                                   _manifest(args, argv, started, result.outputs))
    except (LatentGeometryError, ValidationError, OSError) as e:
        print(f"❌ {args.command} failed: {e}", file=sys.stderr)
        return 1

    for path in [*result.outputs, manifest_path]:
        print(f"✅ wrote {path}")
    return result.exit_code


def main() -> None:
    sys.exit(cli_dispatch())


if __name__ == "__main__":
    main()
