"""Command line: generate instances, compute prices, simulate, verify, sweep.

Exit status is 0 on success, 1 when a verification fails and 2 on bad input.
"""
from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import random
import sys
from fractions import Fraction
from typing import Sequence

from . import serialize as ser
from .allocation import brute_force_opt
from .core import E_UPPER, Caps, MarketError, log2_upper
from .generate import derive_seed, generate_instance
from .mechanisms import (
    expected_outcome, run_commitment, run_otf, verify_alg1,
    verify_commitment_guarantee, verify_guess_price_guarantee, verify_lemma8,
    verify_otf_guarantee, verify_subadditive_guarantee, VerificationReport,
)
from .pricing import (
    ALGORITHMS, alpha_boundedness, bayesian_otf_prices, commitment_prices, draw_guess_exponents,
    guarantee_factor, guess_price_params, subadditive_benchmark, subadditive_otf_prices, summarize_benchmark,
)

CSV_COLUMNS = ["instance_id", "rule", "mechanism", "order_policy", "expected_welfare",
               "benchmark_welfare", "ratio", "alpha", "pass"]


# (rule, mechanism) pairs that carry a welfare guarantee
CLAIMED = {("otf", "otf"), ("commitment", "commitment"), ("subadditive", "otf")}


class UsageError(Exception):
    pass


def _rat(x) -> str:
    """Exact text for CSV cells: integers plainly, otherwise num/den."""
    if x is None:
        return ""
    if isinstance(x, float):
        return "inf" if x > 0 else "-inf"
    x = Fraction(x)
    return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"


def _read_json(path: str):
    try:
        return ser.load(path)
    except OSError as e:
        raise UsageError(f"cannot read {path}: {e.strerror}") from None
    except json.JSONDecodeError as e:
        raise UsageError(f"{path}: invalid JSON ({e})") from None


def _write(text: str, path: str | None) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def _load_instance(path: str):
    return ser.instance_from_json(_read_json(path))


def make_plan(instance, rule: str, alg_name: str, seed: int = 0, samples: int | None = None):
    alg = ALGORITHMS[alg_name]
    if rule in ("otf", "commitment"):
        summary = summarize_benchmark(instance, alg, samples=samples, seed=seed)
        return (bayesian_otf_prices if rule == "otf" else commitment_prices)(summary)
    if rule == "subadditive":
        return subadditive_otf_prices(instance, alg)
    if rule == "guess":
        _, sw = brute_force_opt(instance, instance.buyers())
        r1, r2 = draw_guess_exponents(instance.M, instance.N, instance.M, seed)
        return guess_price_params(instance.M, instance.N, sw, instance.schedules, r1, r2)
    raise UsageError(f"unknown rule {rule!r}")


def _parse_order(text: str, n: int):
    try:
        order = [int(x) for x in text.split(",")]
    except ValueError:
        raise UsageError(f"--order must be 'random', 'worst' or a comma-separated permutation, got {text!r}") from None
    if sorted(order) != list(range(n)):
        raise UsageError(f"--order {text} is not a permutation of 0..{n - 1}")
    return order


# --------------------------------------------------------------------------
# subcommands


def cmd_gen(args) -> int:
    spec = _read_json(args.spec)
    inst = generate_instance(spec, args.seed)
    _write(ser.dumps(ser.instance_to_json(inst)), args.output)
    return 0


def cmd_price(args) -> int:
    inst = _load_instance(args.instance)
    plan = make_plan(inst, args.rule, args.alg, args.seed, args.samples)
    _write(ser.dumps(ser.plan_to_json(plan)), args.output)
    return 0


def cmd_run(args) -> int:
    inst = _load_instance(args.instance)
    plan = ser.plan_from_json(_read_json(args.plan))
    rng = random.Random(args.seed)
    profile = inst.buyers() if inst.is_full_information() else inst.distribution.sample(rng)
    supply = plan.draw_supply(rng)
    run = run_otf if args.mechanism == "otf" else run_commitment
    if args.order == "random":
        order = list(range(inst.N))
        rng.shuffle(order)
    elif args.order == "worst":
        outs = [run(inst, profile, plan, o, supply=supply) for o in itertools.permutations(range(inst.N))]
        order = list(min(outs, key=lambda o: o.welfare).order)
    else:
        order = _parse_order(args.order, inst.N)
    out = run(inst, profile, plan, order, supply=supply)
    _write(ser.dumps(ser.outcome_to_json(out)), args.output)
    return 0


def _lemma8_report(inst, alg_name: str) -> VerificationReport:
    alg = ALGORITHMS[alg_name]
    report = VerificationReport("lemma8")
    for n, (_, profile) in enumerate(inst.distribution.enumerate_support()):
        alloc = alg(inst, profile)
        for j, (v, bundle) in enumerate(zip(profile, alloc.bundles)):
            if not bundle:
                continue
            sub = verify_lemma8(v, bundle, inst.M)
            for c in sub.checks:
                report.add(f"profile {n} buyer {j}: {c.name}", c.passed, c.lhs, c.rhs, c.asserted, c.detail)
    return report


def run_verifier(inst, theorem: str, alg_name: str = "opt") -> VerificationReport:
    alg = ALGORITHMS[alg_name]
    if theorem == "1":
        return verify_otf_guarantee(inst, alg)
    if theorem == "2":
        return verify_commitment_guarantee(inst, alg)
    if theorem == "3":
        return verify_subadditive_guarantee(inst, alg)
    if theorem == "4":
        return verify_guess_price_guarantee(inst)
    if theorem == "alg1":
        return verify_alg1(inst)
    if theorem == "lemma8":
        return _lemma8_report(inst, alg_name)
    raise UsageError(f"unknown theorem {theorem!r}")


def cmd_verify(args) -> int:
    inst = _load_instance(args.instance)
    report = run_verifier(inst, args.theorem, args.alg)
    text = ser.dumps(ser.report_to_json(report))
    if args.report:
        _write(text, args.report)
    for c in report.failures:
        print(f"FAIL {c.name}: {c.detail or f'{_rat_or(c.lhs)} vs {_rat_or(c.rhs)}'}", file=sys.stderr)
    print(f"{report.name}: {'pass' if report.passed else 'FAIL'}"
          f"{'' if report.claimed else ' (no guarantee claimed)'}")
    return 0 if report.passed else 1


def _rat_or(x):
    try:
        return _rat(x)
    except (TypeError, ValueError):
        return repr(x)


def sweep_row(inst, instance_id: str, rule: str, mechanism: str, policy: str, alg_name: str) -> dict:
    """Expected welfare of one (instance, rule, mechanism, policy) against its benchmark and bound."""
    alpha = None
    if rule == "guess":
        rep = verify_guess_price_guarantee(inst)
        expected, bench = rep.data["expected_welfare"], rep.data["sw_opt"]
        ok = rep.passed
        policy = "worst"
    else:
        alg = ALGORITHMS[alg_name]
        if rule == "subadditive":
            summary = subadditive_benchmark(inst, alg)
            plan = subadditive_otf_prices(inst, alg, summary=summary)
            bench = summary.expected_welfare
            factor = 1 / (4 * E_UPPER * log2_upper(inst.M)) if inst.M >= 2 else Fraction(0)
        else:
            summary = summarize_benchmark(inst, alg)
            alpha = alpha_boundedness(summary)
            plan = (bayesian_otf_prices if rule == "otf" else commitment_prices)(summary)
            bench = summary.expected_welfare
            factor = Fraction(1, 2) if rule == "otf" else guarantee_factor(alpha)
        if (rule, mechanism) not in CLAIMED:
            factor = Fraction(0)
        expected = expected_outcome(inst, plan, mechanism, policy).welfare
        ok = expected >= factor * bench
    ratio = None if bench == 0 else expected / bench
    return {
        "instance_id": instance_id, "rule": rule, "mechanism": mechanism, "order_policy": policy,
        "expected_welfare": _rat(expected), "benchmark_welfare": _rat(bench),
        "ratio": _rat(ratio), "alpha": _rat(alpha), "pass": "true" if ok else "false",
    }


def run_sweep(config: dict) -> tuple[str, bool]:
    base = int(config.get("seed", 0))
    rows = config.get("rows")
    if not isinstance(rows, list) or not rows:
        raise UsageError("sweep config needs a non-empty 'rows' list")
    out = io.StringIO()
    writer = csv.DictWriter(out, CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    all_ok = True
    index = 0
    for n, row in enumerate(rows):
        reps = int(row.get("replications", 1))
        for r in range(reps):
            seed = derive_seed(base, index)
            index += 1
            if "instance" in row:
                inst = _load_instance(row["instance"])
            elif "spec" in row:
                inst = generate_instance(row["spec"], seed)
            else:
                raise UsageError(f"sweep row {n} needs 'spec' or 'instance'")
            rid = f"{row.get('id', n)}-{r}"
            rec = sweep_row(inst, rid, row.get("rule", "otf"), row.get("mechanism", "otf"),
                            row.get("order_policy", "worst"), row.get("alg", "opt"))
            all_ok &= rec["pass"] == "true"
            writer.writerow(rec)
    return out.getvalue(), all_ok


GNUPLOT = r"""set xlabel 'row'
set ylabel 'expected / benchmark welfare'
set yrange [0:*]
# ratios are exact "n/d" strings, so split them before plotting
plot "< awk -F, 'NR > 1 && $7 != \"\" {{ n = split($7, q, \"/\"); print NR - 2, (n == 2 ? q[1] / q[2] : q[1]) }}' {csv}" \
    using 1:2 with points pt 7 title 'ratio'
"""


def cmd_sweep(args) -> int:
    config = _read_json(args.config)
    text, ok = run_sweep(config)
    _write(text, args.output)
    if args.gnuplot:
        # ratios are written as num/den; the script is a starting point for plotting
        _write(GNUPLOT.format(csv=args.output or "results.csv"), args.gnuplot)
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="posted-market", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate an instance from a spec")
    g.add_argument("--spec", required=True)
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("-o", "--output")
    g.set_defaults(func=cmd_gen)

    pr = sub.add_parser("price", help="compute a price plan")
    pr.add_argument("--instance", required=True)
    pr.add_argument("--rule", choices=["otf", "commitment", "subadditive", "guess"], required=True)
    pr.add_argument("--alg", choices=sorted(ALGORITHMS), default="opt")
    pr.add_argument("--seed", type=int, default=0, help="exponent draws for guess prices; sampling seed")
    pr.add_argument("--samples", type=int, help="Monte Carlo profiles when the support exceeds the cap")
    pr.add_argument("-o", "--output")
    pr.set_defaults(func=cmd_price)

    r = sub.add_parser("run", help="simulate one mechanism run")
    r.add_argument("--instance", required=True)
    r.add_argument("--plan", required=True)
    r.add_argument("--mechanism", choices=["otf", "commitment"], default="otf")
    r.add_argument("--order", default="random", help="'random', 'worst' or a permutation like 1,0,2")
    r.add_argument("--seed", type=int, required=True)
    r.add_argument("-o", "--output")
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("verify", help="check a guarantee on an instance")
    v.add_argument("--instance", required=True)
    v.add_argument("--theorem", choices=["1", "2", "3", "4", "alg1", "lemma8"], required=True)
    v.add_argument("--alg", choices=sorted(ALGORITHMS), default="opt")
    v.add_argument("--report")
    v.set_defaults(func=cmd_verify)

    s = sub.add_parser("sweep", help="batch experiments to CSV")
    s.add_argument("--config", required=True)
    s.add_argument("-o", "--output")
    s.add_argument("--gnuplot", help="also write a gnuplot script for the CSV")
    s.set_defaults(func=cmd_sweep)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        Caps.from_env()
        return args.func(args)
    except (UsageError, MarketError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
