"""Command-line entry point.

Exit status: 0 success, 2 configuration or input error, 3 evaluator outage,
4 empty front.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .config import RunConfig
from .evaluation import SyntheticEvaluator, fitness_vector
from .exceptions import ConfigError, EmptyFront, EvaluatorFailure, EvaluatorOutage, InvalidGenome
from .external import ExternalEvaluator
from .genome import complexity
from .pipeline import emit_report, final_front, load_manifest, operating_point_trace, run_evolution
from .validation import load_genome

EXIT_OK, EXIT_USAGE, EXIT_OUTAGE, EXIT_EMPTY = 0, 2, 3, 4

log = logging.getLogger("topocoevo")


def _err(msg: str) -> None:
    print(f"topocoevo: {msg}", file=sys.stderr)


def cmd_init_config(args) -> int:
    text = RunConfig().to_json()
    if args.out:
        path = Path(args.out)
        if path.exists() and not args.force:
            _err(f"{path} exists (use --force to overwrite)")
            return EXIT_USAGE
        path.write_text(text, encoding="utf-8")
        print(path)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_validate(args) -> int:
    status = EXIT_OK
    if args.config:
        try:
            RunConfig.load(args.config)
            print(f"{args.config}: ok")
        except ConfigError as exc:
            _err(f"{args.config}: {exc}")
            status = EXIT_USAGE
    for path in args.genome or ():
        try:
            load_genome(path)
            print(f"{path}: ok")
        except InvalidGenome as exc:
            _err(f"{path}: {', '.join(exc.codes)}")
            status = EXIT_USAGE
    if not args.config and not args.genome:
        _err("nothing to validate (pass --config and/or --genome)")
        return EXIT_USAGE
    return status


def cmd_run(args) -> int:
    try:
        config = RunConfig.load(args.config) if args.config else RunConfig()
        overrides = {}
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.jobs is not None:
            overrides["n_jobs"] = args.jobs
        if args.run_id is not None:
            overrides["run_id"] = args.run_id
        if overrides:
            config = config.replace(**overrides)
    except ConfigError as exc:
        _err(f"config error: {exc}")
        return EXIT_USAGE
    try:
        result = run_evolution(config, out_dir=args.out, resume=args.resume, force=args.force)
    except FileExistsError as exc:
        _err(str(exc))
        return EXIT_USAGE
    except EvaluatorOutage as exc:
        _err(f"evaluator outage: {exc}; partial checkpoint written")
        return EXIT_OUTAGE
    print(json.dumps({"run_dir": str(result.run_dir), "generations": result.state.generation,
                      "operating_point": result.operating_point, "final_hv": result.state.history[-1].hv}))
    return EXIT_OK


def cmd_select(args) -> int:
    run_dir = Path(args.run)
    try:
        config = RunConfig.from_dict(load_manifest(run_dir)["config"])
        front, _ = final_front(run_dir)
    except (FileNotFoundError, KeyError, ConfigError) as exc:
        _err(f"cannot read run at {run_dir}: {exc}")
        return EXIT_USAGE
    except EmptyFront as exc:
        _err(str(exc))
        return EXIT_EMPTY
    if not front:
        _err("final front is empty")
        return EXIT_EMPTY
    delta = config.delta if args.delta is None else args.delta
    eps = config.eps_acc if args.eps_acc is None else args.eps_acc
    trace = operating_point_trace(front, delta, eps, config.cost_factor, config.tail_percentile)
    record = next(r for r in front if r.genome_id == trace.selected)
    payload = {"genome_id": trace.selected, "record": record.to_dict(), "trace": trace.to_dict()}
    (run_dir / "selected_genome.json").write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n",
                                                  encoding="utf-8")
    print(trace.selected)
    print(json.dumps(record.to_dict(), sort_keys=True))
    return EXIT_OK


def cmd_report(args) -> int:
    try:
        paths = emit_report(args.run)
    except FileNotFoundError as exc:
        _err(f"cannot read run at {args.run}: {exc}")
        return EXIT_USAGE
    except EmptyFront as exc:
        _err(str(exc))
        return EXIT_EMPTY
    for name in sorted(paths):
        print(paths[name])
    return EXIT_OK


def cmd_eval_genome(args) -> int:
    try:
        genome = load_genome(args.genome)
    except InvalidGenome as exc:
        _err(f"{args.genome}: invalid genome")
        for code in exc.codes:
            print(code, file=sys.stderr)
        return EXIT_USAGE
    try:
        config = RunConfig.load(args.config) if args.config else RunConfig()
    except ConfigError as exc:
        _err(f"config error: {exc}")
        return EXIT_USAGE
    try:
        if args.evaluator == "external":
            ev = config.evaluator
            evaluator = ExternalEvaluator(args.endpoint or ev.endpoint, ev.task_batch_id, ev.timeout, ev.retries,
                                          ev.backoff)
        else:
            evaluator = SyntheticEvaluator(config.landscape)
        accuracy, cost = evaluator(genome, args.seed)[:2]
    except EvaluatorOutage as exc:
        _err(f"evaluator outage: {exc}")
        return EXIT_OUTAGE
    except EvaluatorFailure as exc:
        _err(f"evaluation failed: {exc}")
        return EXIT_USAGE
    K = complexity(genome)
    print(json.dumps({"genome_id": genome.genome_id, "accuracy": accuracy, "cost": cost, "K": K,
                      "fitness": list(fitness_vector(accuracy, cost, K))}, sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="topocoevo", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("init-config", help="write the default run config")
    p.add_argument("--out", help="target file (stdout when omitted)")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_init_config)

    p = sub.add_parser("validate", help="check a config and/or genome files")
    p.add_argument("--config")
    p.add_argument("--genome", action="append")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("run", help="run the evolutionary search")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="runs root directory (config checkpoint_dir by default)")
    p.add_argument("--run-id")
    p.add_argument("--jobs", type=int)
    p.add_argument("--force", action="store_true", help="overwrite an existing run directory")
    p.add_argument("--resume", action="store_true", help="continue from the last checkpoint")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("select", help="apply the operating-point rule to a finished run")
    p.add_argument("--run", required=True)
    p.add_argument("--delta", type=float)
    p.add_argument("--eps-acc", type=float)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("report", help="(re)write the reports directory of a run")
    p.add_argument("--run", required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("eval-genome", help="evaluate one genome file")
    p.add_argument("--genome", required=True)
    p.add_argument("--evaluator", choices=("synthetic", "external"), default="synthetic")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config")
    p.add_argument("--endpoint")
    p.set_defaults(func=cmd_eval_genome)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
