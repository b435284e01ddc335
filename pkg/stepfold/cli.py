"""
stepfold.cli
============

The ``stepfold`` command: train a teacher, distill it, sample, evaluate,
interpolate and check checkpoints.

Exit codes: 0 success, 2 usage or configuration error, 3 numeric failure
(non-finite loss, failed check), 4 I/O or parse error.

Every command is reproducible from its flags: with the same flags and
seed, all output files are byte-identical (the ``wall_ms`` field of the
training log excepted).

"""

import argparse
import logging
import os
import sys

import numpy as np

from . import data as datasets
from .autograde import output_results, run_checks
from .check import BundleTester
from .evaluate import consistency_score, energy_distance, sliced_wasserstein
from .exceptions import (
    DimensionMismatchError,
    InvalidParameterError,
    NonFiniteLossError,
    ParseError,
    SchemaViolationError,
)
from .persistence import (
    load_bundle,
    load_config,
    read_document,
    save_bundle,
    save_config,
    write_report,
)
from .plot import scatter_svg, trajectory_svg
from .sample import ancestral_sample, ddim_sample, interpolate_noises
from .schedule import (
    make_linear_beta_schedule,
    make_sigmoid_schedule,
    make_subsequence,
    parse_phi,
)
from .train import TrainConfig, distill, train_scratch_student, train_teacher

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_IO = 4

SCHEDULES = {
    "sigmoid": make_sigmoid_schedule,
    "linear": make_linear_beta_schedule,
}
METRICS = {
    "energy": ("energy_distance", energy_distance),
    "swd": ("sliced_wasserstein", sliced_wasserstein),
}
RING_MODES = 8
RING_RADIUS = 2.0


def configure_logging(verbose=False, quiet=False):
    level = logging.INFO
    if verbose:
        level = logging.DEBUG
    elif quiet:
        level = logging.WARNING
    logging.basicConfig(
        level=level,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
        force=True,
    )


def load_dataset(source, n, noise, seed):
    """Data matrix and dataset name from a ``--dataset`` value."""
    if source == "swiss-roll":
        return datasets.swiss_roll(n, noise_std=noise, seed=seed), source
    if source == "mixture":
        centers = datasets.ring_centers(RING_MODES, RING_RADIUS)
        points = datasets.gaussian_mixture(n, centers, std=noise, seed=seed)
        return points, source
    if source.startswith("csv:"):
        path = source[len("csv:") :]
        return datasets.load_csv(path), os.path.basename(path)
    raise InvalidParameterError(
        "dataset must be swiss-roll, mixture or csv:<path>, got {0!r}".format(
            source
        )
    )


def build_config(args, **defaults):
    """TrainConfig from defaults, then ``--config``, then explicit flags."""
    values = TrainConfig(**defaults).to_dict()
    if args.config:
        values.update(load_config(args.config).to_dict())
    flags = {
        "steps": args.steps,
        "batch_size": args.batch,
        "lr": args.lr,
        "loss_norm": args.loss,
        "weighting": args.weighting,
        "seed": args.seed,
        "log_every": args.log_every,
        "hidden_widths": args.hidden,
        "warm_start": getattr(args, "warm_start", None) or None,
    }
    values.update({k: v for k, v in flags.items() if v is not None})
    return TrainConfig.from_dict(values)


def _log_path(args):
    return args.log or args.out + ".log.jsonl"


def _subsequence(args, T, seed):
    if args.phi is not None:
        if os.path.exists(args.phi):
            with open(args.phi) as f:
                return parse_phi(f.read())
        return parse_phi(args.phi)
    return make_subsequence(T, args.tprime, args.mode, seed=seed)


def _save_run(bundle, config, args):
    save_bundle(bundle, args.out)
    save_config(config, args.out + ".config.json")
    return EXIT_OK


def cmd_train_teacher(args):
    config = build_config(args)
    data, name = load_dataset(args.dataset, args.n, args.noise, config.seed)
    schedule = SCHEDULES[args.schedule](args.T)
    bundle = train_teacher(
        data,
        schedule,
        config,
        dataset=name,
        log_path=_log_path(args),
        progress=not args.quiet,
    )
    return _save_run(bundle, config, args)


def cmd_distill(args):
    config = build_config(args, loss_norm="l1")
    teacher = load_bundle(args.teacher)
    phi = _subsequence(args, teacher.schedule.T, config.seed)
    data, name = load_dataset(args.dataset, args.n, args.noise, config.seed)
    logger.info("distilling T=%d into T'=%d", teacher.schedule.T, phi.T_prime)
    bundle = distill(
        teacher,
        phi,
        config,
        data,
        dataset=name,
        log_path=_log_path(args),
        progress=not args.quiet,
    )
    return _save_run(bundle, config, args)


def cmd_train_scratch(args):
    config = build_config(args)
    schedule = SCHEDULES[args.schedule](args.T)
    phi = _subsequence(args, schedule.T, config.seed)
    data, name = load_dataset(args.dataset, args.n, args.noise, config.seed)
    bundle = train_scratch_student(
        data,
        schedule,
        phi,
        config,
        dataset=name,
        log_path=_log_path(args),
        progress=not args.quiet,
    )
    return _save_run(bundle, config, args)


def _draw(bundle, n, seed, sampler, noise_scale="stddev", trajectory=False):
    if sampler == "ancestral":
        return ancestral_sample(
            bundle,
            n,
            seed=seed,
            noise_scale=noise_scale,
            return_trajectory=trajectory,
        )
    noise = np.random.default_rng(seed).standard_normal((n, bundle.input_dim))
    return ddim_sample(bundle, noise, return_trajectory=trajectory)


def cmd_sample(args):
    bundle = load_bundle(args.ckpt)
    if args.trajectory_svg:
        samples, states = _draw(
            bundle, args.n, args.seed, args.sampler, args.noise_scale, True
        )
        labels = [
            "t={0}".format(bundle.phi.T_prime - i)
            for i in range(states.shape[0])
        ]
        trajectory_svg(states, args.trajectory_svg, args.panels, labels)
    else:
        samples = _draw(
            bundle, args.n, args.seed, args.sampler, args.noise_scale
        )
    datasets.save_csv(args.out, samples)
    if args.svg:
        title = "{0} {1}, T'={2}".format(
            bundle.kind, args.sampler, bundle.phi.T_prime
        )
        scatter_svg(samples, args.svg, title=title)
    logger.info("wrote %d samples to %s", args.n, args.out)
    return EXIT_OK


def cmd_evaluate(args):
    bundle = load_bundle(args.ckpt)
    report = {
        "config": {
            "ckpt": args.ckpt,
            "data": args.data,
            "metrics": args.metrics,
            "sampler": args.sampler,
            "n_projections": args.projections,
        },
        "seed": args.seed,
    }
    if args.data:
        reference = datasets.load_csv(args.data)
        n = args.n or reference.shape[0]
        report["config"]["n"] = n
        samples = _draw(bundle, n, args.seed, args.sampler)
        for key in [m for m in args.metrics.split(",") if m]:
            if key not in METRICS:
                raise InvalidParameterError(
                    "unknown metric {0!r}; choose from {1}".format(
                        key, ", ".join(sorted(METRICS))
                    )
                )
            name, metric = METRICS[key]
            if key == "swd":
                value = metric(
                    samples, reference, args.projections, args.seed
                )
            else:
                value = metric(samples, reference)
            report[name] = value
            logger.info("%s = %.6g", name, value)
    if args.consistency:
        if not args.against:
            raise InvalidParameterError("--consistency requires --against")
        teacher = load_bundle(args.against)
        paired, baseline = consistency_score(
            teacher, bundle, n=args.consistency_n, seed=args.seed
        )
        report["config"]["against"] = args.against
        report["config"]["consistency_n"] = args.consistency_n
        report["paired_mse"] = paired
        report["random_baseline_mse"] = baseline
    write_report(report, args.report)
    return EXIT_OK


def cmd_interpolate(args):
    teacher = load_bundle(args.teacher)
    student = load_bundle(args.student)
    if teacher.input_dim != student.input_dim:
        raise DimensionMismatchError(
            "teacher and student differ in dimension"
        )
    rng = np.random.default_rng(args.seed)
    a, b = rng.standard_normal((2, teacher.input_dim))
    noises = interpolate_noises(a, b, args.k)
    rows = np.concatenate(
        [ddim_sample(teacher, noises), ddim_sample(student, noises)]
    )
    labels = {
        "model": ["teacher"] * args.k + ["student"] * args.k,
        "index": list(range(args.k)) * 2,
    }
    datasets.save_csv(args.out, rows, labels=labels)
    return EXIT_OK


def cmd_check(args):
    document = read_document(args.ckpt)
    tester = BundleTester(document, seed=args.seed)
    failures = output_results(run_checks(tester))
    if failures:
        logger.error("%d check(s) failed for %s", failures, args.ckpt)
        return EXIT_NUMERIC
    return EXIT_OK


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return value


def _non_negative_int(text):
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError("must be a non-negative integer")
    return value


def _widths(text):
    try:
        return [int(w) for w in text.split(",") if w]
    except ValueError:
        raise argparse.ArgumentTypeError("expected comma separated integers")


def _add_training_flags(parser):
    parser.add_argument("--steps", type=_non_negative_int)
    parser.add_argument("--batch", type=_positive_int)
    parser.add_argument("--lr", type=float)
    parser.add_argument("--loss", choices=["l1", "l2"])
    parser.add_argument("--weighting", choices=["unit", "gamma"])
    parser.add_argument("--seed", type=int)
    parser.add_argument("--log-every", type=_positive_int)
    parser.add_argument("--hidden", type=_widths, help="e.g. 128,128,128")
    parser.add_argument("--config", help="JSON run config")
    parser.add_argument("--dataset", default="swiss-roll")
    parser.add_argument("--n", type=_positive_int, default=10000)
    parser.add_argument("--noise", type=float, default=0.05)
    parser.add_argument("--out", required=True, help="checkpoint path")
    parser.add_argument("--log", help="training log (JSON lines)")


def _add_subsequence_flags(parser):
    group = parser.add_mutually_exclusive_group(required=True)
    group.add_argument("--tprime", type=_positive_int)
    group.add_argument("--phi", help="comma separated indices or a file")
    parser.add_argument("--mode", default="uniform")


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true")
    verbosity.add_argument("-q", "--quiet", action="store_true")

    parser = argparse.ArgumentParser(
        prog="stepfold",
        description="Single-fold distillation of diffusion models.",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    p = commands.add_parser(
        "train-teacher", parents=[common], help="train a DDPM teacher"
    )
    _add_training_flags(p)
    p.add_argument("--T", type=_positive_int, default=500)
    p.add_argument("--schedule", choices=sorted(SCHEDULES), default="sigmoid")
    p.set_defaults(func=cmd_train_teacher)

    p = commands.add_parser(
        "distill", parents=[common], help="distill a teacher into a student"
    )
    _add_training_flags(p)
    _add_subsequence_flags(p)
    p.add_argument("--teacher", required=True)
    p.add_argument("--warm-start", action="store_true")
    p.set_defaults(func=cmd_distill)

    p = commands.add_parser(
        "train-scratch",
        parents=[common],
        help="train a student directly on data",
    )
    _add_training_flags(p)
    _add_subsequence_flags(p)
    p.add_argument("--T", type=_positive_int, default=500)
    p.add_argument("--schedule", choices=sorted(SCHEDULES), default="sigmoid")
    p.set_defaults(func=cmd_train_scratch)

    p = commands.add_parser("sample", parents=[common], help="draw samples")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--n", type=_positive_int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument(
        "--sampler", choices=["ancestral", "ddim"], default="ancestral"
    )
    p.add_argument(
        "--noise-scale", choices=["stddev", "raw"], default="stddev"
    )
    p.add_argument("--out", required=True, help="CSV path")
    p.add_argument("--svg")
    p.add_argument("--trajectory-svg")
    p.add_argument("--panels", type=_positive_int, default=5)
    p.set_defaults(func=cmd_sample)

    p = commands.add_parser(
        "evaluate", parents=[common], help="compute sample metrics"
    )
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", help="reference samples (CSV)")
    p.add_argument("--metrics", default="energy,swd")
    p.add_argument("--n", type=_positive_int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument(
        "--sampler", choices=["ancestral", "ddim"], default="ancestral"
    )
    p.add_argument("--projections", type=_positive_int, default=64)
    p.add_argument("--against", help="teacher checkpoint")
    p.add_argument("--consistency", action="store_true")
    p.add_argument("--consistency-n", type=_positive_int, default=1000)
    p.add_argument("--report", required=True, help="JSON report path")
    p.set_defaults(func=cmd_evaluate)

    p = commands.add_parser(
        "interpolate",
        parents=[common],
        help="decode interpolated noises with a teacher and a student",
    )
    p.add_argument("--teacher", required=True)
    p.add_argument("--student", required=True)
    p.add_argument("--k", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_interpolate)

    p = commands.add_parser(
        "check", parents=[common], help="run the invariant checks"
    )
    p.add_argument("--ckpt", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_check)
    return parser


def main(argv=None):
    """Runs the command line; returns the exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code
    configure_logging(args.verbose, args.quiet)
    try:
        return args.func(args)
    except NonFiniteLossError as e:
        logger.error("%s", e)
        return EXIT_NUMERIC
    except ParseError as e:
        logger.error("parse error: %s", e)
        return EXIT_IO
    except (
        InvalidParameterError,
        DimensionMismatchError,
        SchemaViolationError,
    ) as e:
        logger.error("%s", e)
        return EXIT_CONFIG
    except OSError as e:
        logger.error("%s", e)
        return EXIT_IO


def run():
    sys.exit(main())
