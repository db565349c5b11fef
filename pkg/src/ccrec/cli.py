"""Entry point for the ``ccrec`` command.

Every subcommand writes a ``manifest.json`` into its output directory
before doing any heavy work. The manifest records the argument vector and
a snapshot of the resolved configuration, so ``ccrec rerun manifest.json``
repeats the run without the original config file or environment.

Exit codes: 0 on success, 2 for invalid flags or configuration, 1 for
data, checkpoint, training or evaluation errors.
"""
from __future__ import annotations

import argparse
import logging
import subprocess
import sys
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

from . import __version__
from .baselines import BprRegime, probe_experiment, run_bpr_regime, train_channel_models
from .config import ExperimentConfig, Variant, load_config
from .dataset import (
    DatasetBundle,
    InteractionStore,
    load_interactions,
    read_split,
    sample_negatives,
    split,
    stats,
    write_interactions,
    write_split,
)
from .exceptions import CcrecCheckpointError, CcrecConfigError, CcrecDataError, CcrecError
from .metrics import CandidateMode, MetricReport, UserFilter, aggregate_reports, evaluate_channels
from .model import ModelScorer
from .persistence import (
    load_checkpoint,
    read_json,
    save_checkpoint,
    save_ground_truth,
    write_json,
)
from .synthgen import generate
from .training import GridSpec, DEFAULT_GRID, evaluate_result, grid_search, train
from .utils import setup_logging

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"

# (argparse dest, config section, config field)
_FLAG_FIELDS: Tuple[Tuple[str, str, str], ...] = (
    ("d", "model", "d"),
    ("d_prime", "model", "d_prime"),
    ("clf_hidden", "model", "clf_hidden"),
    ("lambda_cls", "model", "lambda_cls"),
    ("lambda_attn", "model", "lambda_attn"),
    ("variant", "model", "variant"),
    ("epochs", "train", "epochs"),
    ("batch_size", "train", "batch_size"),
    ("lr", "train", "learning_rate"),
    ("patience", "train", "patience"),
    ("negatives", "train", "negatives_per_positive"),
    ("eval_k", "train", "eval_k"),
    ("threads", "train", "threads"),
    ("seed", "train", "seed"),
    ("seed", "gen", "seed"),
    ("gamma", "gen", "gamma"),
    ("n_users", "gen", "n_users"),
    ("n_items", "gen", "n_items"),
    ("latent_dim", "gen", "latent_dim"),
    ("overlap_user_frac", "gen", "overlap_user_frac"),
    ("overlap_item_frac", "gen", "overlap_item_frac"),
    ("per_channel", "gen", "interactions_per_user_channel"),
    ("dup_prob", "gen", "dup_prob"),
    ("offline_user_share", "gen", "offline_user_share"),
    ("signal_scale", "gen", "signal_scale"),
    ("bpr_d", "bpr", "d"),
    ("bpr_lr", "bpr", "learning_rate"),
    ("bpr_reg", "bpr", "reg"),
    ("bpr_epochs", "bpr", "epochs"),
    ("bpr_batch_size", "bpr", "batch_size"),
)


def _describe_version() -> str:
    """``git describe`` of the source tree, or the installed version."""
    try:
        described = subprocess.run(
            ["git", "describe", "--tags", "--always", "--dirty"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True,
            text=True,
            timeout=5,
        )
    except (OSError, subprocess.SubprocessError):
        return f"v{__version__}"
    if described.returncode != 0 or not described.stdout.strip():
        return f"v{__version__}"
    return described.stdout.strip()


@dataclass
class RunManifest:
    """
    Everything needed to repeat a run.

    Attributes:
        command: Subcommand name
        argv: Arguments after the program name, as given
        config: Resolved :class:`ExperimentConfig` snapshot
        seeds: Seeds the run uses
        inputs / outputs: Named file paths read and written
        started_at: UTC timestamp, ISO 8601
        version: ``git describe`` string or package version
    """
    command: str
    argv: List[str]
    config: Dict[str, Any]
    seeds: List[int]
    inputs: Dict[str, str] = field(default_factory=dict)
    outputs: Dict[str, str] = field(default_factory=dict)
    started_at: str = ""
    version: str = ""

    def to_dict(self) -> Dict[str, Any]:
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RunManifest":
        try:
            return cls(**{k: data[k] for k in cls.__dataclass_fields__ if k in data})
        except TypeError as e:
            raise CcrecConfigError(f"Incomplete run manifest: {e}")

    @classmethod
    def read(cls, path: Path) -> "RunManifest":
        path = Path(path)
        if not path.exists():
            raise CcrecConfigError(f"Manifest not found: {path}", path=str(path))
        return cls.from_dict(read_json(path))

    def write(self, out_dir: Path) -> Path:
        return write_json(Path(out_dir) / MANIFEST_NAME, self.to_dict())


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _int_list(raw: str) -> List[int]:
    try:
        return [int(x) for x in raw.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {raw!r}")


def _common_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(add_help=False)
    parser.add_argument("--config", type=Path, help="JSON or YAML experiment config file.")
    parser.add_argument("--out", type=Path, required=True, help="Output directory.")
    parser.add_argument("--threads", type=int, help="Worker threads for ranking evaluation.")
    parser.add_argument("--log-level", help="Overrides $CCREC_LOG (DEBUG, INFO, WARNING, ERROR).")
    parser.add_argument("--log-file", help="Also write log records to this file.")
    return parser


def _model_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(add_help=False)
    group = parser.add_argument_group("model")
    group.add_argument("--d", type=int, help="Embedding dimension.")
    group.add_argument("--d-prime", type=int, help="Attention projection width.")
    group.add_argument("--clf-hidden", type=int, help="Classifier hidden width.")
    group.add_argument("--lambda-cls", type=float, help="Classification loss weight.")
    group.add_argument("--lambda-attn", type=float, help="Attention loss weight.")
    group.add_argument("--variant", choices=[v.value for v in Variant], help="Model variant.")
    return parser


def _train_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(add_help=False)
    group = parser.add_argument_group("training")
    group.add_argument("--epochs", type=int, help="Maximum epochs.")
    group.add_argument("--batch-size", type=int, help="Mini-batch size.")
    group.add_argument("--lr", type=float, help="Adam learning rate.")
    group.add_argument("--patience", type=int, help="Early-stopping patience in epochs.")
    group.add_argument("--negatives", type=int, help="Negatives per positive.")
    group.add_argument("--eval-k", type=int, help="NDCG depth used for model selection.")
    return parser


def _gen_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(add_help=False)
    group = parser.add_argument_group("generator")
    group.add_argument("--gamma", type=float, help="Channel divergence strength.")
    group.add_argument("--n-users", type=int)
    group.add_argument("--n-items", type=int)
    group.add_argument("--latent-dim", type=int)
    group.add_argument("--overlap-user-frac", type=float)
    group.add_argument("--overlap-item-frac", type=float)
    group.add_argument("--per-channel", type=int, nargs=2, metavar=("LOW", "HIGH"),
                       help="Inclusive range of draws per active user and channel.")
    group.add_argument("--dup-prob", type=float)
    group.add_argument("--offline-user-share", type=float)
    group.add_argument("--signal-scale", type=float)
    return parser


def _bpr_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(add_help=False)
    group = parser.add_argument_group("BPR baseline")
    group.add_argument("--bpr-d", type=int)
    group.add_argument("--bpr-lr", type=float)
    group.add_argument("--bpr-reg", type=float)
    group.add_argument("--bpr-epochs", type=int)
    group.add_argument("--bpr-batch-size", type=int)
    return parser


def _eval_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(add_help=False)
    group = parser.add_argument_group("evaluation")
    group.add_argument("--k", type=_int_list, help="Comma-separated ranking depths, e.g. 5,10.")
    group.add_argument(
        "--candidate-mode",
        choices=[m.value for m in CandidateMode],
        default=CandidateMode.WITHOUT_PURCHASED.value,
    )
    return parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ccrec",
        description="Cross-channel retail recommendation experiments.",
    )
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    common, model, training = _common_parser(), _model_parser(), _train_parser()
    gen, bpr, evaluation = _gen_parser(), _bpr_parser(), _eval_parser()

    p = sub.add_parser("generate", parents=[common, gen], help="Draw a synthetic multi-channel dataset.")
    p.add_argument("--seed", type=int)

    p = sub.add_parser("split", parents=[common], help="Split interactions 6:2:2 and sample negatives.")
    p.add_argument("--data", type=Path, required=True, help="Interactions CSV.")
    p.add_argument("--seed", type=int)
    p.add_argument("--negatives", type=int, help="Negatives per positive.")

    p = sub.add_parser("train", parents=[common, model, training], help="Train the cross-channel model.")
    p.add_argument("--data", type=Path, required=True, help="Split directory.")
    p.add_argument("--seed", type=int)

    p = sub.add_parser("evaluate", parents=[common, evaluation], help="Rank the test split with a checkpoint.")
    p.add_argument("--data", type=Path, required=True, help="Split directory.")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--users", choices=[f.value for f in UserFilter], default=UserFilter.ALL.value)

    p = sub.add_parser("probe", parents=[common, bpr, evaluation],
                       help="Self- versus cross-match BPR on overlapping users.")
    p.add_argument("--data", type=Path, required=True, help="Interactions CSV.")
    p.add_argument("--seeds", type=_int_list)

    p = sub.add_parser("ablate", parents=[common, model, training, evaluation],
                       help="Train the full model and its ablations.")
    p.add_argument("--data", type=Path, required=True, help="Interactions CSV.")
    p.add_argument("--seeds", type=_int_list)
    p.add_argument("--variants", nargs="+", choices=[v.value for v in Variant],
                   default=[v.value for v in Variant])

    p = sub.add_parser("gridsearch", parents=[common, model, training, evaluation],
                       help="Grid search on validation NDCG.")
    p.add_argument("--data", type=Path, required=True, help="Split directory.")
    p.add_argument("--seeds", type=_int_list)
    p.add_argument("--grid", type=Path, help="JSON file of candidate lists; defaults to the full grid.")
    p.add_argument("--no-final", action="store_true", help="Skip re-running the winner on every seed.")

    p = sub.add_parser("compare", parents=[common, model, training, bpr, evaluation],
                       help="Cross-channel model against per-channel and integrated BPR.")
    p.add_argument("--data", type=Path, required=True, help="Interactions CSV.")
    p.add_argument("--seeds", type=_int_list)

    p = sub.add_parser("rerun", help="Repeat a run from its manifest.")
    p.add_argument("manifest", type=Path)
    p.add_argument("--out", type=Path, help="Write into this directory instead of the recorded one.")
    return parser


def _resolve_config(args: argparse.Namespace, base: Optional[ExperimentConfig]) -> ExperimentConfig:
    """Config file (plus environment), or a manifest snapshot, overlaid with explicit flags."""
    if base is not None:
        config = ExperimentConfig.from_dict(base.to_dict())
    else:
        config = load_config(getattr(args, "config", None))

    for dest, section, name in _FLAG_FIELDS:
        value = getattr(args, dest, None)
        if value is None:
            continue
        if dest == "variant":
            value = Variant(value)
        elif dest == "per_channel":
            value = tuple(value)
        setattr(getattr(config, section), name, value)

    if getattr(args, "seeds", None):
        config.seeds = list(args.seeds)
    if getattr(args, "k", None):
        config.k_values = list(args.k)
    if getattr(args, "log_level", None):
        config.log_level = args.log_level.upper()
    if getattr(args, "log_file", None):
        config.log_file = args.log_file
    config.validate()
    return config


def _start(
    args: argparse.Namespace,
    argv: Sequence[str],
    config: ExperimentConfig,
    seeds: Sequence[int],
    inputs: Dict[str, Path],
    outputs: Dict[str, Path],
) -> RunManifest:
    for name, path in inputs.items():
        if not Path(path).exists():
            raise CcrecDataError(f"Input '{name}' not found: {path}", path=str(path), operation=args.command)
    manifest = RunManifest(
        command=args.command,
        argv=list(argv),
        config=config.to_dict(),
        seeds=[int(s) for s in seeds],
        inputs={k: str(v) for k, v in inputs.items()},
        outputs={k: str(v) for k, v in outputs.items()},
        started_at=datetime.now(timezone.utc).isoformat(),
        version=_describe_version(),
    )
    args.out.mkdir(parents=True, exist_ok=True)
    manifest.write(args.out)
    logger.info(f"ccrec {args.command} ({manifest.version}) writing to {args.out}")
    return manifest


def _done(path: Path) -> None:
    print(f"Wrote {path}")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_generate(args: argparse.Namespace, argv: Sequence[str], config: ExperimentConfig) -> int:
    outputs = {
        "interactions": args.out / "interactions.csv",
        "ground_truth": args.out / "ground_truth.c2r",
        "stats": args.out / "stats.json",
    }
    _start(args, argv, config, [config.gen.seed], {}, outputs)
    store, truth = generate(config.gen)
    write_interactions(store, outputs["interactions"])
    save_ground_truth(outputs["ground_truth"], truth)
    write_json(outputs["stats"], {"stats": stats(store).to_dict(), "emitted": truth.counts.to_dict()})
    _done(outputs["interactions"])
    return 0


def cmd_split(args: argparse.Namespace, argv: Sequence[str], config: ExperimentConfig) -> int:
    seed = config.train.seed
    _start(args, argv, config, [seed], {"data": args.data}, {"split": args.out})
    store = load_interactions(args.data)
    bundle = sample_negatives(split(store, seed), store, config.train.negatives_per_positive, seed)
    write_split(bundle, args.out)
    write_json(args.out / "stats.json", stats(store).to_dict())
    _done(args.out)
    return 0


def cmd_train(args: argparse.Namespace, argv: Sequence[str], config: ExperimentConfig) -> int:
    outputs = {
        "checkpoint": args.out / "checkpoint.c2r",
        "log": args.out / "train_log.jsonl",
        "result": args.out / "train_result.json",
    }
    _start(args, argv, config, [config.train.seed], {"data": args.data}, outputs)
    bundle = read_split(args.data)
    outputs["log"].unlink(missing_ok=True)
    result = train(bundle, config.model, config.train, log_path=outputs["log"])
    save_checkpoint(
        outputs["checkpoint"],
        result.best_params,
        config.model,
        bundle.vocab,
        extra={"best_epoch": result.best_epoch, "best_score": result.best_score, "seed": config.train.seed},
    )
    write_json(outputs["result"], result.to_dict())
    _done(outputs["checkpoint"])
    return 0


def cmd_evaluate(args: argparse.Namespace, argv: Sequence[str], config: ExperimentConfig) -> int:
    report_path = args.out / "report.json"
    _start(
        args, argv, config, [config.train.seed],
        {"data": args.data, "checkpoint": args.checkpoint}, {"report": report_path},
    )
    bundle = read_split(args.data)
    params, model_cfg, vocab = load_checkpoint(args.checkpoint)
    if vocab != bundle.vocab:
        raise CcrecCheckpointError(
            f"Checkpoint {args.checkpoint} was trained on a different vocabulary than {args.data}",
            path=str(args.checkpoint),
        )
    report = evaluate_channels(
        ModelScorer(params, model_cfg),
        bundle,
        config.k_values,
        CandidateMode(args.candidate_mode),
        UserFilter(args.users),
        "test",
        config.train.threads,
    )
    write_json(report_path, report.to_dict())
    _done(report_path)
    return 0


def _seed_bundles(store: InteractionStore, seed: int, negatives: int) -> Tuple[DatasetBundle, DatasetBundle]:
    """The plain split for ``seed`` and the same split with negatives."""
    plain = split(store, seed)
    return plain, sample_negatives(plain, store, negatives, seed)


def cmd_probe(args: argparse.Namespace, argv: Sequence[str], config: ExperimentConfig) -> int:
    report_path = args.out / "probe.json"
    _start(args, argv, config, config.seeds, {"data": args.data}, {"report": report_path})
    store = load_interactions(args.data)
    rows = [(r, m) for r in (BprRegime.SELF_MATCH, BprRegime.CROSS_MATCH) for m in CandidateMode]
    collected: Dict[Tuple[BprRegime, CandidateMode], List[MetricReport]] = {row: [] for row in rows}

    for seed in config.seeds:
        bundle = split(store, seed)
        models = train_channel_models(bundle, config.bpr, seed)
        for regime, mode in rows:
            collected[(regime, mode)].append(probe_experiment(
                store, bundle, regime, mode, d=config.bpr.d, seed=seed,
                bpr_cfg=config.bpr, k_values=config.k_values, models=models,
            ))

    write_json(report_path, {
        "seeds": list(config.seeds),
        "rows": [
            {
                "regime": regime.value,
                "candidate_mode": mode.value,
                "metrics": aggregate_reports(collected[(regime, mode)], config.seeds).to_dict(),
            }
            for regime, mode in rows
        ],
    })
    _done(report_path)
    return 0


def cmd_ablate(args: argparse.Namespace, argv: Sequence[str], config: ExperimentConfig) -> int:
    report_path = args.out / "ablation.json"
    _start(args, argv, config, config.seeds, {"data": args.data}, {"report": report_path})
    store = load_interactions(args.data)
    variants = [Variant(v) for v in dict.fromkeys(args.variants)]
    mode = CandidateMode(args.candidate_mode)
    collected: Dict[Variant, List[MetricReport]] = {v: [] for v in variants}

    for seed in config.seeds:
        _, bundle = _seed_bundles(store, seed, config.train.negatives_per_positive)
        train_cfg = replace(config.train, seed=seed)
        for variant in variants:
            result = train(bundle, replace(config.model, variant=variant), train_cfg)
            collected[variant].append(
                evaluate_result(result, bundle, config.k_values, mode, threads=train_cfg.threads)
            )
            logger.info(f"ablation seed {seed} {variant.value}: best epoch {result.best_epoch}")

    write_json(report_path, {
        "seeds": list(config.seeds),
        "variants": [
            {"variant": v.value, "metrics": aggregate_reports(collected[v], config.seeds).to_dict()}
            for v in variants
        ],
    })
    _done(report_path)
    return 0


def cmd_gridsearch(args: argparse.Namespace, argv: Sequence[str], config: ExperimentConfig) -> int:
    report_path = args.out / "gridsearch.json"
    inputs = {"data": args.data}
    if args.grid is not None:
        inputs["grid"] = args.grid
    _start(args, argv, config, config.seeds, inputs, {"report": report_path})
    grid = GridSpec.from_dict(read_json(args.grid)) if args.grid is not None else DEFAULT_GRID
    bundle = read_split(args.data)
    outcome = grid_search(
        bundle, grid, config.train, config.seeds,
        model_cfg=config.model, k_values=config.k_values, report_all_seeds=not args.no_final,
    )
    data = outcome.to_dict()
    data["grid"] = grid.to_dict()
    write_json(report_path, data)
    _done(report_path)
    return 0


def cmd_compare(args: argparse.Namespace, argv: Sequence[str], config: ExperimentConfig) -> int:
    report_path = args.out / "compare.json"
    _start(args, argv, config, config.seeds, {"data": args.data}, {"report": report_path})
    store = load_interactions(args.data)
    mode = CandidateMode(args.candidate_mode)
    names = ("c2rec", "bpr", "bpr_integration")
    collected: Dict[str, List[MetricReport]] = {name: [] for name in names}

    for seed in config.seeds:
        _, bundle = _seed_bundles(store, seed, config.train.negatives_per_positive)
        result = train(bundle, config.model, replace(config.train, seed=seed))
        collected["c2rec"].append(
            evaluate_result(result, bundle, config.k_values, mode, threads=config.train.threads)
        )
        for name, regime in (("bpr", BprRegime.SELF_MATCH), ("bpr_integration", BprRegime.INTEGRATION)):
            collected[name].append(run_bpr_regime(
                bundle, regime, mode, UserFilter.ALL, config.bpr, seed, config.k_values, config.train.threads,
            ))

    write_json(report_path, {
        "seeds": list(config.seeds),
        "models": [
            {"model": name, "metrics": aggregate_reports(collected[name], config.seeds).to_dict()}
            for name in names
        ],
    })
    _done(report_path)
    return 0


_COMMANDS: Dict[str, Callable[[argparse.Namespace, Sequence[str], ExperimentConfig], int]] = {
    "generate": cmd_generate,
    "split": cmd_split,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "probe": cmd_probe,
    "ablate": cmd_ablate,
    "gridsearch": cmd_gridsearch,
    "compare": cmd_compare,
}


def _with_out(argv: Sequence[str], out: Path) -> List[str]:
    """``argv`` with its ``--out`` value replaced."""
    result: List[str] = []
    skip = False
    for i, token in enumerate(argv):
        if skip:
            skip = False
            continue
        if token == "--out":
            skip = i + 1 < len(argv)
            continue
        if token.startswith("--out="):
            continue
        result.append(token)
    return result + ["--out", str(out)]


def _rerun(args: argparse.Namespace) -> int:
    manifest = RunManifest.read(args.manifest)
    argv = list(manifest.argv)
    if args.out is not None:
        argv = _with_out(argv, args.out)
    logger.info(f"Re-running '{manifest.command}' recorded at {manifest.started_at} ({manifest.version})")
    return main(argv, base_config=ExperimentConfig.from_dict(manifest.config))


def main(argv: Optional[List[str]] = None, base_config: Optional[ExperimentConfig] = None) -> int:
    """
    Run one ``ccrec`` subcommand. Returns an exit code.

    ``base_config`` replaces the config file and environment lookup; it is
    how ``rerun`` feeds a manifest's snapshot back in.
    """
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)

    if args.command == "rerun":
        try:
            return _rerun(args)
        except CcrecError as e:
            print(f"error: {e}", file=sys.stderr)
            return 2

    try:
        config = _resolve_config(args, base_config)
    except (CcrecConfigError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    setup_logging(config.log_level, config.log_file)

    try:
        return _COMMANDS[args.command](args, argv, config)
    except CcrecError as e:
        logger.error(e.get_detailed_message())
        print(f"error: {e}", file=sys.stderr)
        for suggestion in e.suggestions:
            print(f"  hint: {suggestion}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
