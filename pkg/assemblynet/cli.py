"""
Command-line driver.

    assemblynet phantom-gen  --out DIR --n-labeled K --n-unlabeled M --n-test T --seed S [--stratify]
    assemblynet train        --data DIR [--config FILE] --out RUNDIR
    assemblynet segment      --run RUNDIR (--input AVOL [--prior AVOL] | --data DIR) --out PATH [--dump-votes]
    assemblynet ssl          --run RUNDIR --data DIR [--generations G] --out RUNDIR2
    assemblynet scan-rescan  --run RUNDIR --data DIR --out CSV
    assemblynet evaluate     --pred DIR --gt DIR --out CSV [--baseline DIR]
    assemblynet report       --runs RUNDIR... --out CSV [--data DIR] [--timings]

Exit codes: 0 success, 1 usage, 2 data, 3 numerical. Failures print one line
``error[<kind>]: <reason>`` on standard error.
"""

import argparse
import json
import logging
import sys
import time
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .config import ExperimentConfig, load_config
from .data.phantom import (
    Phantom,
    PhantomSpec,
    foreground_mask,
    generate_pool,
    phantom_label_pairs,
    random_rigid_transform,
    simulate_rescan,
)
from .data.pool import Pool, PoolSample, RescanImages, load_pool, write_pool
from .data.priors import noisy_rater, synthetic_prior
from .errors import AssemblyNetError, DataError, NumericalError, UsageError
from .evaluation.consistency import consistency_scores
from .evaluation.dice import mean_dice
from .evaluation.report import ReportRow, summarize, write_report
from .evaluation.stats import mann_whitney_one_sided, p_value_or_none, wilcoxon_signed_rank_one_sided
from .pipeline import LoadedRun, load_model, prepare_subject, save_model, subject_from_sample, train_model
from .ssl import SslPlan, ssl_generations
from .volume.avol import read_avol, write_avol
from .volume.grid import LabelMap, Volume
from .volume.ops import upsample_label_nn

__all__ = ["main", "build_parser"]

logger = logging.getLogger(__name__)

_ROLE_STREAMS = {"labeled": 0, "unlabeled": 1, "test": 2, "rescan": 3, "pathological": 4}
_ROLE_PREFIX = {"labeled": "lab", "unlabeled": "unl", "test": "tst", "rescan": "rsc", "pathological": "pat"}
PATHOLOGICAL_SCALES = (0.8, 0.9)
PATHOLOGICAL_NOISE = 1.5


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        raise UsageError(message)


def _derived_seed(seed: int, *key: int) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=key).generate_state(1, dtype=np.uint64)[0])


def _stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def _experiment_config(args: argparse.Namespace, config: Optional[ExperimentConfig] = None) -> ExperimentConfig:
    if config is None:
        path = getattr(args, "config", None)
        config = load_config(path) if path else ExperimentConfig()
    changes = {}
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    if getattr(args, "workers", None) is not None:
        changes["workers"] = args.workers
    return config.replace(**changes) if changes else config


def _read_volume(path: str) -> Volume:
    item = read_avol(path)
    if not isinstance(item, Volume):
        raise DataError(f"{path} holds a label map, expected an intensity volume")
    return item


def _read_labels(path: str) -> LabelMap:
    item = read_avol(path)
    if not isinstance(item, LabelMap):
        raise DataError(f"{path} holds an intensity volume, expected a label map")
    return item


# phantom-gen

def _pool_sample(sample_id: str, role: str, phantom: Phantom, strength: float) -> PoolSample:
    seed = phantom.spec.seed
    prior = synthetic_prior(phantom.gt, strength, _stream(seed, 1))
    transform = rescan = None
    if role == "rescan":
        transform = random_rigid_transform(_stream(seed, 2))
        t1_r, gt_r = simulate_rescan(phantom, transform, _derived_seed(seed, 3))
        rescan = RescanImages(t1_r, gt_r, foreground_mask(gt_r), synthetic_prior(gt_r, strength, _stream(seed, 4)))
    return PoolSample(
        sample_id, role, phantom.t1, phantom.gt, phantom.mask, prior,
        spec=phantom.spec.to_dict(), transform=transform, rescan=rescan,
    )


def cmd_phantom_gen(args: argparse.Namespace) -> int:
    try:
        template = PhantomSpec(dims=tuple(args.dims), num_labels=args.num_labels)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    if not 0.0 <= args.prior_strength <= 1.0:
        raise UsageError(f"--prior-strength must lie in [0, 1], got {args.prior_strength}")
    sizes = {
        "labeled": args.n_labeled,
        "unlabeled": args.n_unlabeled,
        "test": args.n_test,
        "rescan": args.n_rescan,
        "pathological": args.n_pathological,
    }
    if any(n < 0 for n in sizes.values()):
        raise UsageError("sample counts must be >= 0")
    samples: List[PoolSample] = []
    for role, n in sizes.items():
        if n == 0:
            continue
        spec, scales = template, (0.8, 1.2)
        if role == "pathological":
            spec = PhantomSpec(template.dims, template.num_labels, template.noise_sigma * PATHOLOGICAL_NOISE,
                               template.bias_amplitude)
            scales = PATHOLOGICAL_SCALES
        pool = generate_pool(
            n, args.stratify, _derived_seed(args.seed, _ROLE_STREAMS[role]), spec,
            prefix=_ROLE_PREFIX[role], scale_range=scales, workers=args.workers or 1,
        )
        samples.extend(_pool_sample(sample_id, role, phantom, args.prior_strength) for sample_id, phantom in pool)
    if not samples:
        raise UsageError("nothing to generate: every sample count is 0")
    write_pool(args.out, samples, template.num_labels, phantom_label_pairs(template.num_labels))
    return 0


# train / segment / ssl

def _labeled_pairs(config: ExperimentConfig, pool: Pool) -> Tuple[Tuple[int, int], ...]:
    return config.label_pairs if config.label_pairs is not None else pool.label_pairs


def cmd_train(args: argparse.Namespace) -> int:
    config = _experiment_config(args)
    pool = load_pool(args.data)
    samples = pool.samples("labeled")
    if not samples:
        raise DataError(f"pool {args.data} has no labeled samples")
    subjects = [subject_from_sample(s) for s in samples]
    started = time.perf_counter()
    model = train_model(subjects, config, pool.num_labels, _labeled_pairs(config, pool))
    save_model(args.out, model, config, extra={
        "data_dir": str(Path(args.data).resolve()),
        "phases": {"train": [s.sample_id for s in subjects]},
        "wall_seconds": time.perf_counter() - started,
    })
    return 0


def _segment_pool(loaded: LoadedRun, args: argparse.Namespace, config: ExperimentConfig, passes: int) -> None:
    pool = load_pool(args.data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for position, sample in enumerate(pool.samples(args.role)):
        subject = subject_from_sample(sample)
        result = loaded.model.segment(subject, passes, _stream(config.seed, position), config.resolved_workers)
        write_avol(out / f"{sample.sample_id}.avol", result.fine_seg)
        if args.dump_votes:
            result.fine_votes.dump(out, prefix=f"{sample.sample_id}_votes")


def cmd_segment(args: argparse.Namespace) -> int:
    if (args.input is None) == (args.data is None):
        raise UsageError("give exactly one of --input or --data")
    loaded = load_model(args.run)
    config = _experiment_config(args, loaded.config)
    passes = args.passes if args.passes is not None else config.mc_passes
    if args.data is not None:
        _segment_pool(loaded, args, config, passes)
        return 0
    needs_prior = any("prior" in a.channels for a in loaded.model.assemblies())
    if needs_prior and args.prior is None:
        raise UsageError("--prior is required: the model was trained with a prior channel")
    t1 = _read_volume(args.input)
    prior = _read_labels(args.prior) if args.prior is not None else None
    if prior is not None and prior.num_labels != loaded.model.num_labels:
        raise DataError(f"prior has {prior.num_labels} labels, the model segments {loaded.model.num_labels}")
    mask = _read_labels(args.mask) if args.mask is not None else None
    subject = prepare_subject(Path(args.input).stem, t1, prior, mask=mask)
    result = loaded.model.segment(subject, passes, _stream(config.seed, 0), config.resolved_workers)
    out = Path(args.out)
    write_avol(out, result.fine_seg)
    if args.dump_votes:
        result.fine_votes.dump(out.parent, prefix=f"{out.stem}_votes")
    return 0


def cmd_ssl(args: argparse.Namespace) -> int:
    loaded = load_model(args.run)
    config = _experiment_config(args, loaded.config)
    if args.generations is not None:
        config = config.replace(ssl={**config.to_dict()["ssl"], "generations": args.generations})
    pool = load_pool(args.data)
    unlabeled = [subject_from_sample(s) for s in pool.samples("unlabeled")]
    labeled = [subject_from_sample(s) for s in pool.samples("labeled")]
    started = time.perf_counter()
    chain = ssl_generations(loaded.model, unlabeled, labeled, SslPlan.from_config(config), config, str(args.run))
    wall = time.perf_counter() - started
    out = Path(args.out)
    data_dir = str(Path(args.data).resolve())
    for generation in chain:
        record = generation.to_dict()
        save_model(out / f"generation-{generation.index}-pseudo", generation.result.pseudo_model, config, extra={
            "data_dir": data_dir,
            "phases": {"pseudo": generation.pseudo_ids},
            "lineage": record,
        })
        save_model(out / f"generation-{generation.index}", generation.result.student, config, extra={
            "data_dir": data_dir,
            "phases": {"pseudo": generation.pseudo_ids, "finetune": generation.labeled_ids},
            "lineage": record,
        })
    last = chain[-1]
    save_model(out, last.result.student, config, extra={
        "data_dir": data_dir,
        "phases": {"pseudo": last.pseudo_ids, "finetune": last.labeled_ids},
        "lineage": last.to_dict(),
        "wall_seconds": wall,
    })
    chain_record = [g.to_dict() for g in chain]
    (out / "generations.json").write_text(json.dumps(chain_record, indent=2) + "\n")
    return 0


# scan-rescan / evaluate / report

def cmd_scan_rescan(args: argparse.Namespace) -> int:
    loaded = load_model(args.run)
    config = _experiment_config(args, loaded.config)
    passes = args.passes if args.passes is not None else config.mc_passes
    pool = load_pool(args.data)
    samples = pool.samples("rescan")
    if not samples:
        raise DataError(f"pool {args.data} has no rescan samples")
    rows: Dict[str, List[float]] = {"intra-method": [], "method-expert": [], "intra-rater": []}
    for position, sample in enumerate(samples):
        workers = config.resolved_workers
        auto_scan = loaded.model.segment(subject_from_sample(sample), passes, _stream(config.seed, position, 0), workers)
        auto_rescan = loaded.model.segment(
            subject_from_sample(sample, rescan=True), passes, _stream(config.seed, position, 1), workers
        )
        manual_scan = noisy_rater(sample.gt, _stream(config.seed, position, 2))
        manual_rescan = noisy_rater(sample.rescan.gt, _stream(config.seed, position, 3))
        scores = consistency_scores(
            auto_scan.fine_seg, auto_rescan.fine_seg, manual_scan, manual_rescan, sample.transform
        )
        rows["intra-method"].append(scores.intra_method)
        rows["method-expert"].append(scores.method_expert)
        rows["intra-rater"].append(scores.intra_rater)
    p = p_value_or_none(wilcoxon_signed_rank_one_sided, rows["intra-method"], rows["method-expert"], "intra-method")
    report = [
        summarize("intra-method", "rescan", rows["intra-method"], p),
        summarize("method-expert", "rescan", rows["method-expert"]),
        summarize("intra-rater", "rescan", rows["intra-rater"]),
    ]
    write_report(args.out, report)
    return 0


def _prediction(directory: Path, sample_id: str) -> Optional[Path]:
    for candidate in (directory / f"{sample_id}.avol", directory / sample_id / "gt.avol"):
        if candidate.exists():
            return candidate
    return None


def _scores_by_role(pool: Pool, pred: Path) -> Dict[str, Dict[str, float]]:
    scores: Dict[str, Dict[str, float]] = {}
    for sample_id in pool.ids():
        path = _prediction(pred, sample_id)
        if path is None:
            continue
        gt = pool.sample(sample_id).gt
        scores.setdefault(pool.role_of(sample_id), {})[sample_id] = mean_dice(_read_labels(str(path)), gt)
    return scores


def cmd_evaluate(args: argparse.Namespace) -> int:
    pool = load_pool(args.gt)
    pred = Path(args.pred)
    if not pred.is_dir():
        raise DataError(f"no prediction directory at {pred}")
    scores = _scores_by_role(pool, pred)
    if not scores:
        raise DataError(f"{pred} holds no prediction for any sample of {args.gt}")
    baseline = _scores_by_role(pool, Path(args.baseline)) if args.baseline else None
    method = pred.resolve().name
    rows = []
    for role in [r for r in pool.roles() if r in scores]:
        ids = sorted(scores[role])
        values = [scores[role][i] for i in ids]
        p = None
        if baseline is not None:
            reference = baseline.get(role, {})
            missing = [i for i in ids if i not in reference]
            if missing:
                raise DataError(f"baseline has no prediction for {missing}")
            p = p_value_or_none(wilcoxon_signed_rank_one_sided, values, [reference[i] for i in ids], role)
        elif role == "pathological" and "test" in scores:
            p = mann_whitney_one_sided(values, list(scores["test"].values()))
        rows.append(summarize(method, role, values, p))
    write_report(args.out, rows)
    return 0


def _run_scores(
    loaded: LoadedRun, subjects: Sequence, config: ExperimentConfig, passes: int
) -> Tuple[List[float], Optional[List[float]]]:
    fine, coarse = [], []
    for position, subject in enumerate(subjects):
        result = loaded.model.segment(subject, passes, _stream(config.seed, position), config.resolved_workers)
        fine.append(mean_dice(result.fine_seg, subject.gt))
        if result.coarse_seg is not None:
            coarse.append(mean_dice(upsample_label_nn(result.coarse_seg, subject.t1.grid), subject.gt))
    return fine, coarse if loaded.model.coarse is not None else None


def cmd_report(args: argparse.Namespace) -> int:
    rows: List[ReportRow] = []
    baseline: Optional[List[float]] = None
    for run in args.runs:
        loaded = load_model(run)
        config = _experiment_config(args, loaded.config)
        passes = args.passes if args.passes is not None else config.mc_passes
        data = args.data or loaded.manifest.get("data_dir")
        if not data:
            raise UsageError(f"run {run} records no data directory; pass --data")
        samples = load_pool(data).samples(args.role)
        if not samples:
            raise DataError(f"pool {data} has no {args.role} samples")
        subjects = [subject_from_sample(s) for s in samples]
        fine, coarse = _run_scores(loaded, subjects, config, passes)
        name = Path(run).resolve().name
        wall = loaded.manifest.get("wall_seconds") if args.timings else None
        p = p_value_or_none(wilcoxon_signed_rank_one_sided, fine, baseline, name) if baseline is not None else None
        rows.append(summarize(name, args.role, fine, p, wall))
        if coarse is not None:
            p = p_value_or_none(wilcoxon_signed_rank_one_sided, coarse, baseline, name) if baseline is not None else None
            rows.append(summarize(f"{name}:coarse-only", args.role, coarse, p))
        if baseline is None:
            baseline = fine
    write_report(args.out, rows)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="assemblynet", description="Assembly of local 3D U-Nets for volume segmentation.")
    parser.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    commands = parser.add_subparsers(dest="command", parser_class=_Parser)
    commands.required = True

    gen = commands.add_parser("phantom-gen", help="write a pool of synthetic labeled phantoms")
    gen.add_argument("--out", required=True)
    gen.add_argument("--n-labeled", type=int, default=10)
    gen.add_argument("--n-unlabeled", type=int, default=0)
    gen.add_argument("--n-test", type=int, default=8)
    gen.add_argument("--n-rescan", type=int, default=2)
    gen.add_argument("--n-pathological", type=int, default=0)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--stratify", action="store_true")
    gen.add_argument("--dims", type=int, nargs=3, default=[32, 32, 32], metavar=("X", "Y", "Z"))
    gen.add_argument("--num-labels", type=int, default=5)
    gen.add_argument("--prior-strength", type=float, default=0.5)
    gen.add_argument("--workers", type=int)
    gen.set_defaults(handler=cmd_phantom_gen)

    train = commands.add_parser("train", help="train the coarse and fine assemblies")
    train.add_argument("--data", required=True)
    train.add_argument("--config")
    train.add_argument("--out", required=True)
    train.add_argument("--seed", type=int)
    train.add_argument("--workers", type=int)
    train.set_defaults(handler=cmd_train)

    seg = commands.add_parser("segment", help="cascade segmentation of one image or a pool")
    seg.add_argument("--run", required=True)
    seg.add_argument("--input")
    seg.add_argument("--prior")
    seg.add_argument("--mask")
    seg.add_argument("--data")
    seg.add_argument("--role", default="test")
    seg.add_argument("--out", required=True)
    seg.add_argument("--dump-votes", action="store_true")
    seg.add_argument("--passes", type=int)
    seg.add_argument("--seed", type=int)
    seg.add_argument("--workers", type=int)
    seg.set_defaults(handler=cmd_segment)

    ssl = commands.add_parser("ssl", help="teacher-student training on the unlabeled pool")
    ssl.add_argument("--run", required=True)
    ssl.add_argument("--data", required=True)
    ssl.add_argument("--generations", type=int)
    ssl.add_argument("--out", required=True)
    ssl.add_argument("--seed", type=int)
    ssl.add_argument("--workers", type=int)
    ssl.set_defaults(handler=cmd_ssl)

    rescan = commands.add_parser("scan-rescan", help="scan-rescan consistency experiment")
    rescan.add_argument("--run", required=True)
    rescan.add_argument("--data", required=True)
    rescan.add_argument("--out", required=True)
    rescan.add_argument("--passes", type=int)
    rescan.add_argument("--seed", type=int)
    rescan.add_argument("--workers", type=int)
    rescan.set_defaults(handler=cmd_scan_rescan)

    ev = commands.add_parser("evaluate", help="Dice of predictions against a pool")
    ev.add_argument("--pred", required=True)
    ev.add_argument("--gt", required=True)
    ev.add_argument("--out", required=True)
    ev.add_argument("--baseline")
    ev.set_defaults(handler=cmd_evaluate)

    rep = commands.add_parser("report", help="comparison table over trained runs")
    rep.add_argument("--runs", nargs="+", required=True)
    rep.add_argument("--out", required=True)
    rep.add_argument("--data")
    rep.add_argument("--role", default="test")
    rep.add_argument("--timings", action="store_true")
    rep.add_argument("--passes", type=int)
    rep.add_argument("--seed", type=int)
    rep.add_argument("--workers", type=int)
    rep.set_defaults(handler=cmd_report)
    return parser


def _fail(kind: str, reason: object, code: int) -> int:
    text = " ".join(str(reason).split()) or kind
    print(f"error[{kind}]: {text}", file=sys.stderr)
    return code


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(
            level=getattr(logging, args.log_level),
            stream=sys.stderr,
            format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        )
        return args.handler(args)
    except AssemblyNetError as exc:
        return _fail(exc.kind, exc, exc.exit_code)
    except (FileNotFoundError, IsADirectoryError) as exc:
        return _fail("data", f"missing file {exc.filename}", DataError.exit_code)
    except (ArithmeticError, FloatingPointError) as exc:
        return _fail("numerical", exc, NumericalError.exit_code)
    except (ValueError, KeyError, IndexError) as exc:
        return _fail("data", exc, DataError.exit_code)
    except OSError as exc:
        return _fail("data", exc, DataError.exit_code)


if __name__ == "__main__":
    sys.exit(main())
