"""Command line front end: generate instances, solve, benchmark sweeps, verify estimators.

Exit codes are stable: 0 success, 2 no feasible solution, 3 validation or
input error, 4 solver budget exhausted. Benchmark CSV column order is
normative and versioned in the leading comment line.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import dataclass
from pathlib import Path as FsPath

import numpy as np

from .errors import (
    ConfigurationError,
    EnumerationLimitError,
    GenerationError,
    InstanceFormatError,
    NoFeasibleSolution,
    SolverTimeout,
    UnsupportedDistributionError,
)
from .instances import GeneratorConfig, generate_oracle_instance, generate_synthetic
from .model import (
    Estimator,
    Instance,
    SearchConfig,
    Solution,
    SolveRequest,
    load_instance,
    save_instance,
    validate_instance,
)
from .probability import (
    TransitionMatrixStore,
    build_range_grid,
    exact_completion_probability,
    matrix_completion_probability,
    sampling_completion_probability,
)
from .solver import branch_and_bound, construction_heuristic, derive_sampler_seed, local_search

EXIT_OK = 0
EXIT_INFEASIBLE = 2
EXIT_VALIDATION = 3
EXIT_TIMEOUT = 4

CSV_VERSION_LINE = "# dsop benchmark csv v1"
CSV_HEADER = "instance_id,method,estimator,H,epsilon,theta,reward,prob_matrix,prob_sampling,runtime_s,seed"

_GENERATION_STREAM = 1
_SOLVER_STREAM = 2
_VERIFY_INSTANCE_STREAM = 4
_VERIFY_PATH_STREAM = 5


def _sub_seed(master: int, *key: int) -> int:
    """Named sub-seed so each component is independently reproducible."""
    seq = np.random.SeedSequence([int(master)] + [int(k) for k in key])
    return int(seq.generate_state(1)[0])


def _format_path(sequence) -> str:
    return " -> ".join(str(v) for v in sequence)


@dataclass
class BenchmarkRow:
    """One benchmark result; probabilities under both estimators mirror P_M / P_S."""

    instance_id: str
    method: str
    estimator: str
    deadline: float
    epsilon: float
    theta: str
    reward: float
    prob_matrix: float
    prob_sampling: float
    runtime_s: float
    seed: int

    def csv(self) -> str:
        return ",".join(
            (
                self.instance_id,
                self.method,
                self.estimator,
                f"{self.deadline:g}",
                f"{self.epsilon:g}",
                self.theta,
                f"{self.reward:g}",
                f"{self.prob_matrix:.6f}",
                f"{self.prob_sampling:.6f}",
                f"{self.runtime_s:.3f}",
                str(self.seed),
            )
        )


def cmd_generate(args: argparse.Namespace) -> int:
    config = GeneratorConfig(
        vertex_count=args.vertices,
        theta=args.theta,
        hard_variant=args.hard,
        seed=args.seed,
    )
    instance = generate_synthetic(config)
    out = FsPath(args.out)
    out.write_text(save_instance(instance))
    kind = "hard" if args.hard else "simple"
    print(f"wrote {out} ({kind}, {instance.vertex_count} vertices, seed {args.seed})")
    return EXIT_OK


def _load_validated(path: str) -> Instance:
    try:
        text = FsPath(path).read_text()
    except OSError as exc:
        raise InstanceFormatError(f"{path}: {exc.strerror or exc}") from exc
    instance = load_instance(text)
    violations = validate_instance(instance)
    if violations:
        for v in violations:
            print(f"{path}: {v.location}: {v.message}", file=sys.stderr)
        raise InstanceFormatError(f"{path}: {len(violations)} validation violation(s)")
    return instance


def _solve_report(
    instance: Instance, request: SolveRequest, config: SearchConfig, solution: Solution
) -> None:
    grid = build_range_grid(request, instance, config.range_count)
    store = TransitionMatrixStore(instance, grid)
    seq = solution.path.sequence
    pm = matrix_completion_probability(seq, request, grid, store).value
    ps = sampling_completion_probability(
        instance, seq, request, config.sample_count, derive_sampler_seed(config.rng_seed)
    ).value
    own = solution.completion_probability
    print(f"path: {_format_path(seq)}")
    print(f"reward: {solution.reward:g}")
    print(f"probability (matrix): {pm:.6f}")
    print(f"probability (sampling): {ps:.6f}")
    print(f"threshold: {request.threshold:.6f}")
    print(f"feasible ({solution.estimator.value}): {'yes' if own >= request.threshold else 'no'}")
    print(f"runtime: {solution.runtime_s:.3f} s", file=sys.stderr)


def _search_config(args: argparse.Namespace) -> SearchConfig:
    return SearchConfig(
        estimator=Estimator(args.estimator),
        max_iterations=args.max_iterations,
        max_iter_no_improve=args.max_no_improve,
        initial_temperature=args.initial_temperature,
        cooling=args.cooling,
        range_count=args.range_count,
        sample_count=args.sample_count,
        rng_seed=args.seed,
    )


def cmd_solve(args: argparse.Namespace) -> int:
    instance = _load_validated(args.instance)
    request = SolveRequest(deadline=args.deadline, epsilon=args.epsilon)
    config = _search_config(args)
    if args.method == "ch":
        t0 = time.perf_counter()
        path = construction_heuristic(instance, request, config)
        runtime = time.perf_counter() - t0
        if config.estimator is Estimator.MATRIX:
            grid = build_range_grid(request, instance, config.range_count)
            value = matrix_completion_probability(
                path.sequence, request, grid, TransitionMatrixStore(instance, grid)
            ).value
        else:
            value = sampling_completion_probability(
                instance,
                path.sequence,
                request,
                config.sample_count,
                derive_sampler_seed(config.rng_seed),
            ).value
        solution = Solution(
            path=path,
            reward=path.total_reward(instance),
            completion_probability=value,
            estimator=config.estimator,
            runtime_s=runtime,
        )
    elif args.method == "ls":
        solution = local_search(instance, request, config)
    else:
        try:
            solution = branch_and_bound(instance, request, config, node_budget=args.node_budget)
        except SolverTimeout as exc:
            print(f"error: {exc}", file=sys.stderr)
            if exc.best is not None:
                _solve_report(instance, request, config, exc.best)
            return EXIT_TIMEOUT
    _solve_report(instance, request, config, solution)
    return EXIT_OK


def _benchmark_solves(instance, request, config):
    """Time CH and LS on one cell; yields (method, solution) pairs."""
    t0 = time.perf_counter()
    path = construction_heuristic(instance, request, config)
    ch_runtime = time.perf_counter() - t0
    ch = Solution(
        path=path,
        reward=path.total_reward(instance),
        completion_probability=0.0,
        estimator=config.estimator,
        runtime_s=ch_runtime,
    )
    ls = local_search(instance, request, config)
    return (("CH", ch), ("LS", ls))


def cmd_benchmark(args: argparse.Namespace) -> int:
    deadlines = sorted(args.deadlines)
    epsilons = sorted(args.epsilons)
    sweeps = [("simple", float(t), args.reps, sorted(args.estimators)) for t in args.thetas]
    if not args.no_hard:
        sweeps.append(("hard", None, args.hard_reps, ["sampling"]))

    rows: list[BenchmarkRow] = []
    sidecar_rows: list[dict] = []
    skipped = 0
    for kind_idx, (kind, theta, reps, estimators) in enumerate(sweeps):
        for rep in range(reps):
            gen_seed = _sub_seed(args.seed, _GENERATION_STREAM, kind_idx, rep)
            gen = GeneratorConfig(
                vertex_count=args.vertices,
                theta=2.0 if theta is None else theta,
                hard_variant=theta is None,
                seed=gen_seed,
            )
            instance = generate_synthetic(gen)
            theta_label = "mixed" if theta is None else f"{theta:g}"
            instance_id = f"{kind}-t{theta_label}-r{rep}"
            for h_idx, deadline in enumerate(deadlines):
                range_count = max(10, round(deadline / args.grid_width))
                grid = None
                store = None
                for e_idx, epsilon in enumerate(epsilons):
                    request = SolveRequest(deadline=deadline, epsilon=epsilon)
                    if grid is None:
                        grid = build_range_grid(request, instance, range_count)
                        store = TransitionMatrixStore(instance, grid)
                    cell_seed = _sub_seed(
                        args.seed, _SOLVER_STREAM, kind_idx, rep, h_idx, e_idx
                    )
                    sampler_seed = derive_sampler_seed(cell_seed)
                    for estimator in estimators:
                        config = SearchConfig(
                            estimator=Estimator(estimator),
                            max_iterations=args.max_iterations,
                            range_count=range_count,
                            sample_count=args.sample_count,
                            rng_seed=cell_seed,
                        )
                        try:
                            solved = _benchmark_solves(instance, request, config)
                        except NoFeasibleSolution:
                            skipped += 1
                            continue
                        for method, solution in solved:
                            seq = solution.path.sequence
                            pm = matrix_completion_probability(seq, request, grid, store).value
                            ps = sampling_completion_probability(
                                instance, seq, request, args.sample_count, sampler_seed
                            ).value
                            rows.append(
                                BenchmarkRow(
                                    instance_id=instance_id,
                                    method=method,
                                    estimator=estimator,
                                    deadline=deadline,
                                    epsilon=epsilon,
                                    theta=theta_label,
                                    reward=solution.reward,
                                    prob_matrix=pm,
                                    prob_sampling=ps,
                                    runtime_s=solution.runtime_s,
                                    seed=cell_seed,
                                )
                            )
                            sidecar_rows.append(
                                {
                                    "instance_id": instance_id,
                                    "method": method,
                                    "estimator": estimator,
                                    "H": deadline,
                                    "epsilon": epsilon,
                                    "theta": theta_label,
                                    "seed": cell_seed,
                                    "range_count": range_count,
                                    "sample_count": args.sample_count,
                                    "sequence": list(seq),
                                    "generator": {
                                        "vertices": args.vertices,
                                        "theta": theta,
                                        "hard": theta is None,
                                        "seed": gen_seed,
                                    },
                                }
                            )

    out = FsPath(args.out)
    out.write_text(CSV_VERSION_LINE + "\n" + CSV_HEADER + "\n" + "".join(r.csv() + "\n" for r in rows))
    FsPath(str(out) + ".paths.json").write_text(
        json.dumps({"version": 1, "master_seed": args.seed, "rows": sidecar_rows}, indent=1)
    )
    _print_summary(rows, deadlines, epsilons, skipped)
    print(f"wrote {out} ({len(rows)} rows)", file=sys.stderr)
    return EXIT_OK


def _mean(values) -> float:
    return float(np.mean(values)) if values else float("nan")


def _reward_table(rows, key, values, label) -> None:
    combos = sorted({(r.method, r.estimator) for r in rows})
    header = " ".join(f"{v:>8g}" for v in values)
    print(f"  mean reward by {label}:")
    print(f"    {'method':<6} {'estimator':<9} {header}")
    for method, estimator in combos:
        cells = []
        for v in values:
            sel = [r.reward for r in rows if r.method == method and r.estimator == estimator and key(r) == v]
            cells.append(f"{_mean(sel):>8.1f}")
        print(f"    {method:<6} {estimator:<9} " + " ".join(cells))


def _improvement(rows) -> dict[str, float]:
    """Mean percent reward gain of LS over CH per estimator, paired by cell."""
    gains: dict[str, list[float]] = {}
    by_key = {}
    for r in rows:
        by_key[(r.instance_id, r.deadline, r.epsilon, r.estimator, r.method)] = r.reward
    for (iid, h, e, est, method), reward in by_key.items():
        if method != "LS":
            continue
        base = by_key.get((iid, h, e, est, "CH"))
        if base:
            gains.setdefault(est, []).append(100.0 * (reward - base) / base)
    return {est: _mean(v) for est, v in sorted(gains.items())}


def _print_summary(rows, deadlines, epsilons, skipped) -> None:
    print(f"rows: {len(rows)}  skipped infeasible cells: {skipped}")
    for kind in ("simple", "hard"):
        part = [r for r in rows if r.instance_id.startswith(kind)]
        if not part:
            continue
        print(f"[{kind}]")
        _reward_table(part, lambda r: r.deadline, deadlines, "deadline H")
        _reward_table(part, lambda r: r.epsilon, epsilons, "epsilon")
        ls = [r for r in part if r.method == "LS"]
        print("  mean completion probability of LS rows by epsilon:")
        print(f"    {'estimator':<9} {'eps':>5} {'prob_matrix':>12} {'prob_sampling':>14}")
        for estimator in sorted({r.estimator for r in ls}):
            for eps in epsilons:
                sel = [r for r in ls if r.estimator == estimator and r.epsilon == eps]
                if sel:
                    print(
                        f"    {estimator:<9} {eps:>5g} "
                        f"{_mean([r.prob_matrix for r in sel]):>12.3f} "
                        f"{_mean([r.prob_sampling for r in sel]):>14.3f}"
                    )
        for estimator, gain in _improvement(part).items():
            print(f"  LS over CH mean improvement ({estimator}): {gain:.1f}%")
    both = _improvement([r for r in rows if r.instance_id.startswith("simple") and r.estimator == "sampling"])
    hard = _improvement([r for r in rows if r.instance_id.startswith("hard")])
    if both and hard:
        print(
            f"hard vs simple LS improvement (sampling): "
            f"{hard.get('sampling', float('nan')):.1f}% vs {both.get('sampling', float('nan')):.1f}%"
        )


def cmd_verify(args: argparse.Namespace) -> int:
    conservativeness_violations = 0
    sampling_misses = 0
    compared = 0
    for trial in range(args.trials):
        vertex_count = 3 + trial % 4
        oracle_seed = _sub_seed(args.seed, _VERIFY_INSTANCE_STREAM, trial)
        instance = generate_oracle_instance(
            vertex_count,
            outcomes_per_edge=1 + trial % 3,
            band_count=2,
            seed=oracle_seed,
            fractional=trial % 2 == 1,
        )
        rng = np.random.default_rng(
            np.random.SeedSequence([args.seed, _VERIFY_PATH_STREAM, trial])
        )
        interior = [v for v in range(instance.vertex_count) if v not in (instance.start, instance.exit)]
        for p in range(args.paths):
            k = int(rng.integers(0, len(interior) + 1))
            middle = list(rng.permutation(interior)[:k])
            sequence = (instance.start, *middle, instance.exit)
            deadline = float(rng.integers(4, 16))
            request = SolveRequest(deadline=deadline, epsilon=0.5)
            grid = build_range_grid(request, instance, int(deadline))
            store = TransitionMatrixStore(instance, grid)
            exact = exact_completion_probability(instance, sequence, request).value
            matrix = matrix_completion_probability(sequence, request, grid, store).value
            sample = sampling_completion_probability(
                instance,
                sequence,
                request,
                args.sample_count,
                _sub_seed(args.seed, _VERIFY_PATH_STREAM, trial, p),
            ).value
            compared += 1
            if matrix > exact + 1e-9:
                conservativeness_violations += 1
            if abs(sample - exact) > args.tolerance:
                sampling_misses += 1
    miss_share = sampling_misses / compared if compared else 0.0
    print(f"trials: {args.trials}  paths compared: {compared}")
    print(f"conservativeness violations (matrix > exact + 1e-9): {conservativeness_violations}")
    print(
        f"sampling deviations beyond {args.tolerance:g}: {sampling_misses} "
        f"({100 * miss_share:.1f}%, bound 5%)"
    )
    ok = conservativeness_violations == 0 and miss_share <= 0.05
    print("verify: PASS" if ok else "verify: FAIL")
    return EXIT_OK if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dsop",
        description="Chance-constrained stochastic orienteering with time-dependent travel bands.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write a synthetic instance file")
    gen.add_argument("--vertices", type=int, default=32)
    gen.add_argument("--theta", type=float, default=2.0, help="gamma scale for simple instances")
    gen.add_argument("--hard", action="store_true", help="triangle-inequality breaking variant")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", default="instance.json")
    gen.set_defaults(func=cmd_generate)

    solve = sub.add_parser("solve", help="solve one instance")
    solve.add_argument("instance")
    solve.add_argument("-H", "--deadline", type=float, required=True)
    solve.add_argument("--epsilon", type=float, required=True)
    solve.add_argument("--method", choices=("ch", "ls", "bnb"), default="ls")
    solve.add_argument("--estimator", choices=("matrix", "sampling"), default="matrix")
    solve.add_argument("--seed", type=int, default=0)
    solve.add_argument("--max-iterations", type=int, default=1500)
    solve.add_argument("--max-no-improve", type=int, default=50)
    solve.add_argument("--initial-temperature", type=float, default=0.1)
    solve.add_argument("--cooling", type=float, default=0.99)
    solve.add_argument("--range-count", type=int, default=100)
    solve.add_argument("--sample-count", type=int, default=1000)
    solve.add_argument("--node-budget", type=int, default=10_000_000)
    solve.set_defaults(func=cmd_solve)

    bench = sub.add_parser("benchmark", help="run a sweep over deadlines and risk levels")
    bench.add_argument("--out", default="benchmark.csv")
    bench.add_argument("--vertices", type=int, default=32)
    bench.add_argument("--deadlines", type=float, nargs="+", default=[20.0, 40.0, 60.0, 80.0, 100.0])
    bench.add_argument("--epsilons", type=float, nargs="+", default=[0.1, 0.2, 0.3, 0.4, 0.5])
    bench.add_argument("--thetas", type=float, nargs="+", default=[2.0])
    bench.add_argument("--reps", type=int, default=5, help="instances per theta setting")
    bench.add_argument("--hard-reps", type=int, default=3, help="hard-variant instances")
    bench.add_argument("--no-hard", action="store_true")
    bench.add_argument("--estimators", nargs="+", choices=("matrix", "sampling"),
                       default=["matrix", "sampling"])
    bench.add_argument("--seed", type=int, default=0)
    bench.add_argument("--max-iterations", type=int, default=150)
    bench.add_argument("--sample-count", type=int, default=150)
    bench.add_argument("--grid-width", type=float, default=0.2,
                       help="arrival range width; range count scales with H")
    bench.set_defaults(func=cmd_benchmark)

    ver = sub.add_parser("verify", help="check estimators against exact enumeration")
    ver.add_argument("--trials", type=int, default=100)
    ver.add_argument("--paths", type=int, default=5)
    ver.add_argument("--sample-count", type=int, default=10_000)
    ver.add_argument("--tolerance", type=float, default=0.02)
    ver.add_argument("--seed", type=int, default=0)
    ver.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_VALIDATION
    try:
        return args.func(args)
    except NoFeasibleSolution as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except SolverTimeout as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TIMEOUT
    except (
        InstanceFormatError,
        ConfigurationError,
        GenerationError,
        UnsupportedDistributionError,
        EnumerationLimitError,
        OSError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
