"""Command-line entry point.

One binary with subcommands; machine-readable results go to stdout,
diagnostics to stderr.  Exit codes: 0 success, 1 domain error or failed
check, 2 usage error.  Floats in JSON output are serialized with 17
significant digits so identical runs produce byte-identical files.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time

import numpy as np

from . import adversary, distill, mermin, polytope, protocol, security

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_USAGE = 2


def worker_threads() -> int:
    """Worker cap from RANDAMP_THREADS; this build runs solvers serially."""
    try:
        return max(1, int(os.environ.get("RANDAMP_THREADS", "1")))
    except ValueError:
        return 1


# ---------------------------------------------------------------------------
# Output helpers
# ---------------------------------------------------------------------------

def _format_value(obj):
    if isinstance(obj, float):
        return float(f"{obj:.17g}")
    if isinstance(obj, dict):
        return {k: _format_value(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_format_value(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_format_value(float(v)) for v in obj]
    if isinstance(obj, (np.floating,)):
        return float(f"{float(obj):.17g}")
    if isinstance(obj, (np.integer,)):
        return int(obj)
    return obj


def emit_json(payload: dict, path: str | None = None) -> None:
    text = json.dumps(_format_value(payload), indent=2, sort_keys=True)
    if path:
        with open(path, "w") as fh:
            fh.write(text + "\n")
        print(f"wrote {path}", file=sys.stderr)
    else:
        print(text)


def _parse_setting(text: str, parties: int) -> int:
    if len(text) != parties or set(text) - {"0", "1"}:
        raise ValueError(
            f"setting must be {parties} bits (party 1 leftmost), got {text!r}")
    return polytope.bits_to_int(text)


def _parse_function(text: str) -> adversary.OutputFunction:
    if text == "maj3":
        return adversary.OutputFunction.majority3()
    if text in ("const0", "const1"):
        return adversary.OutputFunction.constant(int(text[-1]), arity=1)
    if text.startswith("table:"):
        return adversary.OutputFunction.from_hex(text[len("table:"):])
    raise ValueError(
        f"unknown function {text!r}; use maj3, const0, const1 or table:<hex>")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_mermin_value(args) -> int:
    bell = mermin.mermin_coefficients(args.parties)
    if args.dist == "ghz":
        dist = mermin.ghz_correlations(args.parties)
    elif args.dist == "uniform":
        dist = polytope.uniform_distribution(args.parties)
    elif args.dist.endswith(".csv"):
        dist = polytope.ConditionalDistribution.from_csv(args.dist)
    else:
        with open(args.dist) as fh:
            dist = polytope.ConditionalDistribution.from_json(fh.read())
    value = polytope.functional_value(bell.functional, dist)
    if args.functional_out:
        with open(args.functional_out, "w") as fh:
            fh.write(bell.to_json() + "\n")
        print(f"wrote {args.functional_out}", file=sys.stderr)
    if args.format == "json":
        emit_json({"parties": args.parties, "dist": args.dist, "value": value},
                  args.out)
    else:
        print(f"{value:.17g}")
    return EXIT_OK


def cmd_ghz(args) -> int:
    dist = mermin.ghz_correlations(args.parties)
    if args.format == "csv":
        if not args.out:
            raise ValueError("--format csv requires --out")
        dist.to_csv(args.out)
        print(f"wrote {args.out}", file=sys.stderr)
    else:
        payload = json.loads(dist.to_json())
        emit_json(payload, args.out)
    return EXIT_OK


def cmd_adversary_bound(args) -> int:
    if args.parties == 7 and not args.allow_large:
        raise adversary.ResourceLimitError(
            "7-party solves need --allow-large")
    bell = mermin.mermin_coefficients(args.parties)
    g = _parse_function(args.function)
    setting = (_parse_setting(args.setting, args.parties)
               if args.setting else max(bell.support))
    result = adversary.max_predictability(bell, g, setting, args.target)
    emit_json({
        "optimum": result.optimum,
        "status": result.certificate.status,
        "solve_ms": result.solve_ms,
        "parties": args.parties,
        "setting": polytope.int_to_bits(setting, args.parties),
        "target": args.target,
    }, args.out)
    return EXIT_OK


def cmd_lemma_vectors(args) -> int:
    setting = _parse_setting(args.setting, 5)
    vectors = distill.solve_lambda_vectors(setting, args.gamma)
    emit_json({
        "setting": args.setting,
        "gamma": vectors.gamma,
        "alpha": vectors.alpha,
        "beta": vectors.beta,
        "lambda0": vectors.lambda0.coefficients,
        "lambda1": vectors.lambda1.coefficients,
        "lambda2": vectors.lambda2.coefficients,
    }, args.out)
    return EXIT_OK


def cmd_find_hash(args) -> int:
    config = distill.HashSearchConfig(
        block_size=args.nd, slack=args.mu_tilde, seed=args.seed,
        max_attempts=args.max_attempts)
    if args.slots == "lemma":
        vectors = distill.solve_lambda_vectors(
            _parse_setting(args.setting, 5), args.gamma)
        pairs = distill.support_pairs(vectors)
    else:
        pairs = _synthetic_slot_pairs()
    gammas = [pairs] * args.nd
    result = distill.find_hash_function(gammas, config)
    emit_json({
        "nd": result.block_size,
        "table": result.bitstring(),
        "attempts": result.attempts,
        "slack": result.slack,
        "union_bound": result.union_bound,
        "premise_margin": result.premise_margin,
    }, args.out)
    return EXIT_OK


def _synthetic_slot_pairs() -> np.ndarray:
    """Eight balanced (Gamma_0, Gamma_1) pairs on the unit circle.

    Angles keep both coordinates comparable, so the pairs satisfy the
    hash-search premise for small block sizes.
    """
    angles = np.linspace(np.pi / 4 - 0.15, np.pi / 4 + 0.15, 8)
    return np.column_stack([np.cos(angles), np.sin(angles)])


def _parse_source(obj: dict) -> protocol.EpsilonSource:
    kind = obj.get("strategy", "honest")
    eps = float(obj.get("epsilon", 0.5))
    if kind == "honest":
        return protocol.EpsilonSource(epsilon=eps,
                                      bias=float(obj.get("bias", 0.5)))
    if kind == "adversarial-constant":
        return protocol.EpsilonSource.adversarial_constant(
            eps, float(obj.get("bias", 0.0)))
    raise ValueError(f"unknown source strategy {kind!r}")


def _parse_boxes(obj: dict) -> protocol.BoxModel:
    kind = obj.get("kind", "ideal-quantum")
    if kind == "ideal-quantum":
        return protocol.BoxModel.ideal_quantum(int(obj.get("parties", 5)))
    if kind == "local-deterministic":
        return protocol.BoxModel.local_deterministic(obj["strategy"])
    if kind == "custom-nonsignalling":
        dist = polytope.ConditionalDistribution(
            int(obj["parties"]), np.asarray(obj["values"], dtype=float))
        return protocol.BoxModel.custom_nonsignalling(dist)
    raise ValueError(f"unknown box kind {kind!r}")


def load_protocol_config(path: str, seed: int | None) -> protocol.ProtocolConfig:
    with open(path) as fh:
        obj = json.load(fh)
    return protocol.ProtocolConfig(
        n_quintuplets=int(obj["n_quintuplets"]),
        n_blocks=int(obj["n_blocks"]),
        hash_function=obj.get("hash_function", "xor"),
        source=_parse_source(obj.get("source", {})),
        boxes=_parse_boxes(obj.get("boxes", {})),
        seed=obj.get("seed") if seed is None else seed)


def cmd_simulate(args) -> int:
    config = load_protocol_config(args.config, args.seed)
    sink = None
    transcripts_fh = None
    if args.transcripts:
        transcripts_fh = open(args.transcripts, "w")

        def sink(t: protocol.ProtocolTranscript) -> None:
            record = {
                "abort_stage": t.abort_stage,
                "k": "empty" if t.final_bit is None else t.final_bit,
                "survivors": int(len(t.surviving)),
                "block_size": t.block_size,
                "distill_index": t.distill_index,
                "g": t.g,
                "source_bits_used": t.source_bits_used,
            }
            transcripts_fh.write(json.dumps(_format_value(record),
                                            sort_keys=True) + "\n")

    try:
        summary = protocol.monte_carlo(config, args.runs, collect=sink)
    finally:
        if transcripts_fh:
            transcripts_fh.close()
    emit_json(summary.to_dict(), args.out)
    return EXIT_OK


def cmd_security_bound(args) -> int:
    if args.nb == "auto":
        block = security.recommended_block_count(
            args.epsilon, args.nd, args.beta)
        log2_nb = block.log2
        nb_value = block.value
    else:
        nb_value = int(args.nb)
        if nb_value < 1 or nb_value & (nb_value - 1):
            raise ValueError(f"--nb must be a power of 2, got {nb_value}")
        log2_nb = nb_value.bit_length() - 1
    params = security.SecurityParams(
        epsilon=args.epsilon, block_size=args.nd, log2_blocks=log2_nb,
        alpha=args.alpha, beta=args.beta)
    bound = security.security_bound(params)
    payload = {
        "epsilon": args.epsilon,
        "nd": args.nd,
        "log2_nb": log2_nb,
        "nb": nb_value,
        "alpha": args.alpha,
        "beta": args.beta,
        "bound": bound,
    }
    if args.json:
        emit_json(payload, args.out)
    else:
        print(f"{bound:.17g}")
    return EXIT_OK


def cmd_param_sweep(args) -> int:
    epsilons = [float(e) for e in args.epsilon_grid.split(",")]
    nds = [int(n) for n in args.nd_grid.split(",")]
    rows = []
    for eps in epsilons:
        for nd in nds:
            block = security.recommended_block_count(eps, nd, args.beta)
            params = security.SecurityParams(
                epsilon=eps, block_size=nd, log2_blocks=block.log2,
                alpha=args.alpha, beta=args.beta)
            rows.append((eps, nd, block.log2,
                         security.security_bound(params)))
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epsilon", "nd", "log2_nb", "bound"])
        for eps, nd, log2_nb, bound in rows:
            writer.writerow([f"{eps:.17g}", nd, log2_nb, f"{bound:.17g}"])
    print(f"wrote {args.out} ({len(rows)} rows)", file=sys.stderr)
    return EXIT_OK


# ---------------------------------------------------------------------------
# reproduce: the claim battery
# ---------------------------------------------------------------------------

def _check_mermin_structure():
    bell = mermin.mermin_coefficients(5)
    x0 = {polytope.int_to_bits(x, 5) for x in bell.x0_settings}
    x1 = {polytope.int_to_bits(x, 5) for x in bell.x1_settings}
    expected_x0 = {"10000", "01000", "00100", "00010", "00001", "11111"}
    expected_x1 = {"00111", "01011", "01101", "01110", "10011",
                   "10101", "10110", "11001", "11010", "11100"}
    ok = x0 == expected_x0 and x1 == expected_x1
    return ok, f"|X0|={len(x0)}, |X1|={len(x1)}"


def _check_quantum_violation():
    bell = mermin.mermin_coefficients(5)
    value = polytope.functional_value(
        bell.functional, mermin.ghz_correlations(5))
    return abs(value) <= 1e-12, f"value={value:.3e}"


def _check_classical_bound():
    bell = mermin.mermin_coefficients(5)
    minimum = mermin.minimum_deterministic_value(bell)
    return minimum == 6.0, f"min={minimum}"


def _check_majority_bound():
    bell = mermin.mermin_coefficients(5)
    g = adversary.OutputFunction.majority3()
    worst = 0.0
    for setting in sorted(bell.support):
        for target in (0, 1):
            result = adversary.max_predictability(bell, g, setting, target)
            worst = max(worst, abs(result.optimum - 0.75))
    return worst <= 1e-6, f"max |optimum - 3/4| = {worst:.2e}"


def _check_three_party_attack():
    bell = mermin.mermin_coefficients(3)
    setting = max(bell.support)
    worst = 1.0
    for g in adversary.enumerate_unbiased_functions(3):
        worst = min(worst, adversary.best_predictability(bell, g, setting))
    return worst >= 1.0 - 1e-6, f"min predictability = {worst:.9f}"


def _check_lambda_vectors():
    alphas = []
    bell = mermin.mermin_coefficients(5)
    for setting in sorted(bell.support):
        vectors = distill.solve_lambda_vectors(setting, 0.9732)
        alphas.append(vectors.alpha)
    spread = max(alphas) - min(alphas)
    ok = max(alphas) <= 0.8852 and spread <= 1e-4
    try:
        distill.solve_lambda_vectors(min(bell.support), 0.95)
        ok = False
        note = "gamma=0.95 unexpectedly feasible"
    except distill.DistillationInfeasibleError:
        note = (f"alpha={max(alphas):.6f}, spread={spread:.2e}, "
                "gamma=0.95 infeasible")
    return ok, note


def _check_threshold():
    ok = (distill.gamma_threshold(130, 0.9732)
          and not distill.gamma_threshold(129, 0.9732))
    return ok, "threshold at block size 130"


def _check_hash_search():
    pairs = _synthetic_slot_pairs()
    config = distill.HashSearchConfig(block_size=3, seed=7, max_attempts=100)
    result = distill.find_hash_function([pairs] * 3, config)
    excess = distill.verify_hash_function(
        result.table, [pairs] * 3, result.slack)
    valid = 0
    for value in range(256):
        table = [(value >> i) & 1 for i in range(8)]
        if distill.verify_hash_function(table, [pairs] * 3,
                                        result.slack) <= 1e-12:
            valid += 1
    ok = excess <= 1e-12 and result.attempts <= 100 and valid >= 1
    return ok, (f"attempts={result.attempts}, verifier excess={excess:.2e}, "
                f"{valid}/256 tables valid")


def _check_protocol_honest():
    config = protocol.ProtocolConfig(
        n_quintuplets=64, n_blocks=4, hash_function="xor",
        source=protocol.EpsilonSource.honest_uniform(),
        boxes=protocol.BoxModel.ideal_quantum(), seed=2026)
    summary = protocol.monte_carlo(config, 2000)
    ok = (summary.step4_aborts == 0
          and summary.step2_abort_rate < 0.01
          and abs(summary.k_one_rate - 0.5) < 0.02)
    return ok, (f"step2={summary.step2_abort_rate:.4f}, "
                f"step4={summary.step4_aborts}, "
                f"P(k=1)={summary.k_one_rate:.4f}")


def _check_protocol_adversarial():
    config = protocol.ProtocolConfig(
        n_quintuplets=64, n_blocks=4, hash_function="xor",
        source=protocol.EpsilonSource.honest_uniform(),
        boxes=protocol.BoxModel.all_zero(), seed=2027)
    summary = protocol.monte_carlo(config, 2000)
    ok = summary.step4_abort_rate > 0.99
    return ok, f"step4 abort rate = {summary.step4_abort_rate:.4f}"


def _check_security_bound():
    bounds = []
    for nd in (130, 260, 520):
        block = security.recommended_block_count(0.5, nd, 1.260)
        params = security.SecurityParams(
            epsilon=0.5, block_size=nd, log2_blocks=block.log2,
            alpha=0.8842, beta=1.260)
        bounds.append(security.security_bound(params))
    ok = (0.5 < bounds[0] <= 0.5 + 1e-5
          and bounds[0] > bounds[1] > bounds[2] > 0.5)
    return ok, f"bounds={['%.3e' % (b - 0.5) for b in bounds]} above 1/2"


def _check_seven_party():
    result = adversary.seven_party_predictability(allow_large=True)
    ok = abs(result.optimum - 2.0 / 3.0) <= 1e-5
    return ok, f"optimum={result.optimum:.9f}"


REPRODUCE_CHECKS = [
    ("mermin-structure", _check_mermin_structure, False),
    ("mermin-quantum-violation", _check_quantum_violation, False),
    ("mermin-classical-bound", _check_classical_bound, False),
    ("adversary-majority-bound", _check_majority_bound, False),
    ("adversary-three-party", _check_three_party_attack, False),
    ("distill-lambda-vectors", _check_lambda_vectors, False),
    ("distill-threshold", _check_threshold, False),
    ("distill-hash-search", _check_hash_search, False),
    ("protocol-honest", _check_protocol_honest, False),
    ("protocol-adversarial", _check_protocol_adversarial, False),
    ("security-bound", _check_security_bound, False),
    ("adversary-seven-party", _check_seven_party, True),
]


def cmd_reproduce(args) -> int:
    failures = 0
    ran = 0
    for name, check, is_stretch in REPRODUCE_CHECKS:
        if args.only and args.only not in name:
            continue
        if is_stretch and not args.allow_large:
            print(f"SKIP {name} (stretch; pass --allow-large)")
            continue
        ran += 1
        start = time.perf_counter()
        try:
            ok, note = check()
        except Exception as exc:  # a crash is a failed check, keep going
            ok, note = False, f"exception: {exc}"
        seconds = time.perf_counter() - start
        status = "PASS" if ok else "FAIL"
        if not ok:
            failures += 1
        print(f"{status} {name:28s} ({seconds:6.1f}s) {note}")
    if ran == 0:
        print(f"no checks match --only {args.only!r}", file=sys.stderr)
        return EXIT_USAGE
    print(f"{ran - failures}/{ran} checks passed")
    return EXIT_OK if failures == 0 else EXIT_DOMAIN


# ---------------------------------------------------------------------------
# Dispatch
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="randamp",
        description="randomness amplification toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mermin-value",
                       help="Bell value of a distribution")
    p.add_argument("--parties", type=int, default=5)
    p.add_argument("--dist", default="ghz",
                   help="ghz | uniform | path to .json/.csv")
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.add_argument("--functional-out",
                   help="also export the Bell functional as JSON")
    p.add_argument("--out")
    p.set_defaults(func=cmd_mermin_value)

    p = sub.add_parser("ghz", help="export the GHZ correlation table")
    p.add_argument("--parties", type=int, default=5)
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--out")
    p.set_defaults(func=cmd_ghz)

    p = sub.add_parser("adversary-bound",
                       help="max predictability of an outcome function")
    p.add_argument("--parties", type=int, default=5)
    p.add_argument("--function", default="maj3",
                   help="maj3 | const0 | const1 | table:<hex>")
    p.add_argument("--setting", help="bit string, party 1 leftmost")
    p.add_argument("--target", type=int, choices=(0, 1), default=0)
    p.add_argument("--allow-large", action="store_true",
                   help="permit the 16384-variable 7-party solve")
    p.add_argument("--out")
    p.set_defaults(func=cmd_adversary_bound)

    p = sub.add_parser("lemma-vectors",
                       help="solve the distillation vectors at a setting")
    p.add_argument("--gamma", type=float, default=0.9732)
    p.add_argument("--setting", default="11111")
    p.add_argument("--out")
    p.set_defaults(func=cmd_lemma_vectors)

    p = sub.add_parser("find-hash",
                       help="search a hash table for the distillation bound")
    p.add_argument("--nd", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mu-tilde", type=float, default=None,
                   help="slack; default 3*sqrt(nd)")
    p.add_argument("--max-attempts", type=int, default=100)
    p.add_argument("--slots", choices=("lemma", "synthetic"),
                   default="lemma",
                   help="slot domain: solved vectors or synthetic pairs")
    p.add_argument("--setting", default="11111")
    p.add_argument("--gamma", type=float, default=0.9732)
    p.add_argument("--out")
    p.set_defaults(func=cmd_find_hash)

    p = sub.add_parser("simulate", help="Monte Carlo protocol runs")
    p.add_argument("--config", required=True)
    p.add_argument("--runs", type=int, default=1000)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--transcripts", help="JSON-lines transcript dump")
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("security-bound",
                       help="evaluate the guessing-probability bound")
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--nd", type=int, required=True)
    p.add_argument("--nb", default="auto")
    p.add_argument("--alpha", type=float, default=0.8842)
    p.add_argument("--beta", type=float, default=1.260)
    p.add_argument("--json", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_security_bound)

    p = sub.add_parser("param-sweep",
                       help="bound table over an epsilon/block grid")
    p.add_argument("--epsilon-grid", required=True,
                   help="comma-separated epsilons")
    p.add_argument("--nd-grid", default="130")
    p.add_argument("--alpha", type=float, default=0.8842)
    p.add_argument("--beta", type=float, default=1.260)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_param_sweep)

    p = sub.add_parser("reproduce", help="run the claim battery")
    p.add_argument("--only", help="substring filter on check names")
    p.add_argument("--allow-large", action="store_true",
                   help="include the 7-party stretch check")
    p.set_defaults(func=cmd_reproduce)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except (ValueError, KeyError, FileNotFoundError,
            adversary.ResourceLimitError,
            distill.DistillationInfeasibleError,
            distill.HashSearchError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
