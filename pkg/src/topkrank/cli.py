"""command-line interface for top-k feedback ranking experiments."""

from __future__ import annotations
import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from pydantic import ValidationError

from .adversary import indistinguishability_report, simulated_stream
from .contextual import ContextualConfig, RankerMode, run_contextual
from .core import AppConfig, ConfigError, CoreError, load_config, make_rng
from .datasets import load_svmlight_ranking, synthesize_contextual
from .measures import MeasureId
from .noncontextual import plan_blocks, run_noncontextual
from .partial_monitoring import build_game, dump_matrices, observability_report
from .runner.experiment import ExperimentSpec, Scenario, compare_report, run_experiment
from .surrogates import SurrogateId, SurrogateKind

logger = logging.getLogger("topkrank")

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}

def _int_list(text: str) -> List[int]:
    return [int(t) for t in text.split(",") if t.strip()]

def _str_list(text: str) -> List[str]:
    return [t.strip() for t in text.split(",") if t.strip()]

# ---------------------------
# Flat key=value config files
# ---------------------------
def read_flat_config(path: Path) -> Dict[str, str]:
    """`key = value` per line; '#' comments and blank lines ignored."""
    out: Dict[str, str] = {}
    for line_no, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"{path}:{line_no}: expected key=value")
        out[key.strip().lstrip("-").replace("-", "_")] = value.strip()
    return out

def _apply_flat_config(
    sub: argparse.ArgumentParser, current: argparse.Namespace, values: Dict[str, str]
) -> None:
    """Install file values as subcommand defaults; argparse converts string defaults through `type`."""
    known = set(vars(current)) - {"command", "config", "log_level"}
    defaults: Dict[str, object] = {}
    for key, value in values.items():
        if key not in known:
            raise ConfigError(f"unknown config key {key!r}")
        if isinstance(getattr(current, key), bool):
            low = value.lower()
            if low not in _TRUE | _FALSE:
                raise ConfigError(f"config key {key!r} expects a boolean, got {value!r}")
            defaults[key] = low in _TRUE
        else:
            defaults[key] = value
    sub.set_defaults(**defaults)

# ---------------------------
# Parser
# ---------------------------
def build_parser(cfg: AppConfig) -> tuple[argparse.ArgumentParser, Dict[str, argparse.ArgumentParser]]:
    d = cfg.defaults
    p = argparse.ArgumentParser(prog="topkrank", description="Online learning to rank with top-k feedback.")
    p.add_argument("--config", default=None, help="Flat key=value file with defaults for the chosen command")
    p.add_argument("--log-level", default="WARNING", help="Logging level (DEBUG, INFO, WARNING, ...)")
    subs = p.add_subparsers(dest="command", required=True)
    parsers: Dict[str, argparse.ArgumentParser] = {}

    o = subs.add_parser("observability", help="Observability of the top-1 feedback game")
    o.add_argument("--measure", default="sumloss", help="sumloss, pairwise, dcg, ndcg, ap, auc, precision@n")
    o.add_argument("--m", type=int, default=3, help="Number of items (<= 6)")
    o.add_argument("--n", type=int, default=1, help="Maximum relevance grade")
    o.add_argument(
        "--dump-matrices", "--dump", dest="dump", default=None, help="Directory to write loss.csv / feedback.csv"
    )
    parsers["observability"] = o

    nc = subs.add_parser("noncontextual", help="Blocked explore/exploit run on a corrupted relevance stream")
    nc.add_argument("--measure", default="dcg")
    nc.add_argument("--m", type=int, default=20)
    nc.add_argument("--T", type=int, default=10_000)
    nc.add_argument("--k", type=int, default=1, help="Feedback depth")
    nc.add_argument("--K", type=int, default=None, help="Number of blocks (planned when omitted)")
    nc.add_argument("--ones", type=int, default=5, help="Relevant items in the planted vector")
    nc.add_argument("--flip-prob", type=float, default=d.flip_prob)
    nc.add_argument("--k-factor", type=float, default=d.k_factor)
    nc.add_argument("--epsilon-factor", type=float, default=d.epsilon_factor)
    nc.add_argument("--full-information", action="store_true", help="Observe the whole vector; no exploration")
    nc.add_argument("--seed", type=int, default=0)
    nc.add_argument("--out", default=None, help="RunLog CSV path (required)")
    parsers["noncontextual"] = nc

    c = subs.add_parser("contextual", help="Linear ranker trained from top-k feedback")
    c.add_argument("--surrogate", default="kl", help="squared, ranksvm, kl, smoothdcg")
    c.add_argument("--data", default=None, help="SVMlight ranking file (synthetic data when omitted)")
    c.add_argument("--num-queries", type=int, default=500)
    c.add_argument("--d", type=int, default=10, help="Feature dimension of synthetic data")
    c.add_argument("--noise", type=float, default=0.1)
    c.add_argument("--data-seed", type=int, default=0)
    c.add_argument("--m", type=int, default=20)
    c.add_argument("--T", type=int, default=20_000)
    c.add_argument("--U", type=float, default=10.0)
    c.add_argument("--c-gamma", type=float, default=0.1)
    c.add_argument("--c-eta", type=float, default=0.01)
    c.add_argument("--mismatch-boost", type=float, default=d.mismatch_boost)
    c.add_argument("--smooth-epsilon", type=float, default=d.smooth_epsilon)
    c.add_argument("--baselines", type=_str_list, default=[], help="Comma list of listnet,random")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--out", default=None, help="RunLog CSV path (required); baselines go next to it")
    parsers["contextual"] = c

    e = subs.add_parser("experiment", help="Multi-seed experiment grid with aggregation")
    e.add_argument("--scenario", default=None, choices=[s.value for s in Scenario])
    e.add_argument("--seeds", type=int, default=d.seeds, help="Run seeds 0..N-1")
    e.add_argument("--out", default=None, help="Artifact directory (default <runs_dir>/<scenario>)")
    e.add_argument("--measure", default="dcg")
    e.add_argument("--m", type=int, default=20)
    e.add_argument("--T", type=int, default=10_000)
    e.add_argument("--K", type=int, default=200)
    e.add_argument("--K-values", type=_int_list, default=[10, 200, 400])
    e.add_argument("--k-values", type=_int_list, default=[1, 5, 10])
    e.add_argument("--flip-prob", type=float, default=d.flip_prob)
    e.add_argument("--k-factor", type=float, default=d.k_factor)
    e.add_argument("--epsilon-factor", type=float, default=d.epsilon_factor)
    e.add_argument("--surrogates", type=_str_list, default=["squared", "ranksvm", "kl", "smoothdcg"])
    e.add_argument("--baselines", type=_str_list, default=["listnet", "random"])
    e.add_argument("--data", default=None)
    e.add_argument("--num-queries", type=int, default=500)
    e.add_argument("--d", type=int, default=10)
    e.add_argument("--mismatch-boost", type=float, default=d.mismatch_boost)
    e.add_argument("--smooth-epsilon", type=float, default=d.smooth_epsilon)
    e.add_argument("--max-workers", type=int, default=cfg.max_workers)
    e.add_argument("--no-progress", action="store_true")
    parsers["experiment"] = e

    a = subs.add_parser("adversary", help="Adversary constructions")
    a.add_argument("action", choices=["demo-impossibility"])
    parsers["adversary"] = a

    cmp_ = subs.add_parser("compare", help="Summarise aggregated curves of experiment directories")
    cmp_.add_argument("dirs", nargs="+")
    parsers["compare"] = cmp_
    return p, parsers

# ---------------------------
# Commands
# ---------------------------
def _observability(args: argparse.Namespace) -> int:
    measure = MeasureId.parse(args.measure)
    report = observability_report(measure, args.m, args.n)
    if args.dump:
        dump_matrices(build_game(measure, args.m, args.n), Path(args.dump))
    print(json.dumps(report.model_dump(), indent=2))
    return 0

def _noncontextual(args: argparse.Namespace) -> int:
    measure = MeasureId.parse(args.measure)
    config = plan_blocks(
        args.T,
        args.m,
        args.k,
        measure,
        K=args.K,
        k_factor=args.k_factor,
        epsilon_factor=args.epsilon_factor,
        full_information=args.full_information,
    )
    stream = simulated_stream(m=args.m, ones=args.ones, flip_prob=args.flip_prob, T=args.T, seed=args.seed)
    log = run_noncontextual(config, stream.grades, make_rng(args.seed, stream=100))
    log.write_csv(Path(args.out))
    print(json.dumps({"out": args.out, "final_avg_regret": log.final("avg_regret"), **log.metadata}, indent=2))
    return 0

def _contextual(args: argparse.Namespace) -> int:
    if args.data:
        data = load_svmlight_ranking(Path(args.data))
    else:
        data = synthesize_contextual(args.num_queries, args.m, args.d, args.noise, seed=args.data_seed)
    data = data.fixed_length(args.m)

    unknown = sorted(set(args.baselines) - {"listnet", "random"})
    if unknown:
        raise ConfigError(f"unknown baselines: {unknown}")
    runs = [("", RankerMode.PARTIAL, SurrogateId.parse(args.surrogate, epsilon=args.smooth_epsilon))]
    if "listnet" in args.baselines:
        runs.append(("listnet", RankerMode.FULL_INFORMATION, SurrogateId(kind=SurrogateKind.LISTNET)))
    if "random" in args.baselines:
        runs.append(("random", RankerMode.RANDOM, SurrogateId(kind=SurrogateKind.SQUARED)))

    out = Path(args.out)
    summary = []
    for i, (suffix, mode, sid) in enumerate(runs):
        config = ContextualConfig(
            m=args.m,
            d=data.d,
            U=args.U,
            surrogate=sid,
            mode=mode,
            c_gamma=args.c_gamma,
            c_eta=args.c_eta,
            mismatch_boost=args.mismatch_boost,
        )
        rounds = data.iter_rounds(args.T, make_rng(args.seed, stream=2))
        log = run_contextual(config, rounds, make_rng(args.seed, stream=100 + i))
        path = out if not suffix else out.with_name(f"{out.stem}_{suffix}{out.suffix}")
        log.write_csv(path)
        summary.append({"out": str(path), "final_avg_ndcg10": log.final("avg_ndcg10"), **log.metadata})
    print(json.dumps(summary, indent=2))
    return 0

def _experiment(args: argparse.Namespace, cfg: AppConfig) -> int:
    out = Path(args.out) if args.out else cfg.runs_dir / args.scenario
    spec = ExperimentSpec(
        scenario=Scenario(args.scenario),
        seeds=list(range(args.seeds)),
        out_dir=out,
        measure=args.measure,
        m=args.m,
        T=args.T,
        K=args.K,
        K_values=args.K_values,
        k_values=args.k_values,
        flip_prob=args.flip_prob,
        k_factor=args.k_factor,
        epsilon_factor=args.epsilon_factor,
        surrogates=args.surrogates,
        baselines=args.baselines,
        data=Path(args.data) if args.data else None,
        num_queries=args.num_queries,
        d=args.d,
        mismatch_boost=args.mismatch_boost,
        smooth_epsilon=args.smooth_epsilon,
    )
    result = run_experiment(spec, max_workers=args.max_workers, progress=not args.no_progress)
    print(json.dumps(result.model_dump(mode="json"), indent=2))
    return 0 if result.ok else 1

def _adversary(args: argparse.Namespace) -> int:
    report = indistinguishability_report()
    print(f"{'':14s}{'item 1':>10s}{'item 2':>10s}{'item 3':>10s}")
    for label, row in (
        ("E_p[R]", report.mean_p),
        ("E_q[R]", report.mean_p_tilde),
        ("E_p[G/Z]", report.gain_p),
        ("E_q[G/Z]", report.gain_p_tilde),
    ):
        print(f"{label:14s}" + "".join(f"{v:10.4f}" for v in row))
    print(f"means match: {report.means_match}")
    print(f"order under p: {[i + 1 for i in report.order_p]}")
    print(f"order under q: {[i + 1 for i in report.order_p_tilde]}")
    print(f"top items differ: {report.top_items_differ}")
    return 0

def _compare(args: argparse.Namespace) -> int:
    report = compare_report([Path(d) for d in args.dirs])
    print(json.dumps(report.model_dump(), indent=2))
    return 0

def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        cfg = load_config(Path("config.json"))
        parser, subparsers = build_parser(cfg)
        pre = argparse.ArgumentParser(add_help=False)
        pre.add_argument("--config", default=None)
        pre.add_argument("--log-level", default="WARNING")
        known, rest = pre.parse_known_args(argv)
        logging.basicConfig(level=str(known.log_level).upper(), format="%(levelname)s %(name)s: %(message)s")
        args = parser.parse_args(rest)
        if known.config:
            _apply_flat_config(subparsers[args.command], args, read_flat_config(Path(known.config)))
            args = parser.parse_args(rest)
        args.config, args.log_level = known.config, known.log_level
        if args.command in ("noncontextual", "contextual") and not args.out:
            raise ConfigError("--out is required")
        if args.command == "experiment" and not args.scenario:
            raise ConfigError("--scenario is required")

        if args.command == "observability":
            return _observability(args)
        if args.command == "noncontextual":
            return _noncontextual(args)
        if args.command == "contextual":
            return _contextual(args)
        if args.command == "experiment":
            return _experiment(args, cfg)
        if args.command == "adversary":
            return _adversary(args)
        return _compare(args)
    except (CoreError, ValidationError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2

if __name__ == "__main__":
    raise SystemExit(main())
