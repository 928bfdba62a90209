"""Command-line interface: privatize, account, attack, baseline, divergence-trace.

Every flag can also be supplied through --config <json>, a flat object whose
keys are flag names with dashes replaced by underscores; explicit flags win.
The remote backend's auth token comes from PRIVGEN_AUTH_TOKEN.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

from . import accounting, attacks, baselines, fusion
from .backend import MockModel
from .dist import RenyiOrder
from .document import PromptBundle, load_document
from .errors import GenerationAbortedError, InvalidInputError, PrivgenError
from .wire import RemoteBackend, RemoteBackendConfig

AUTH_ENV = "PRIVGEN_AUTH_TOKEN"


def build_backend(spec: str, mock_seed: int = 0):
    if spec == "mock" or spec.startswith("mock:"):
        mode = spec.partition(":")[2] or "ngram"
        return MockModel(mode=mode, seed=mock_seed)
    if spec.startswith("remote:"):
        endpoint = spec.partition(":")[2]
        return RemoteBackend(
            RemoteBackendConfig(endpoint=endpoint, auth_token=os.environ.get(AUTH_ENV))
        )
    raise InvalidInputError(f"unknown backend spec {spec!r}; expected mock[:MODE] or remote:HOST:PORT")


def parse_budgets(spec: str | None) -> dict[int, float] | None:
    """--budgets accepts a single beta, id=beta pairs, or a JSON file path."""
    if spec is None or spec == "":
        return None
    path = Path(spec)
    if path.is_file():
        obj = json.loads(path.read_text(encoding="utf-8"))
        return {int(k): float(v) for k, v in obj.items()}
    if "=" in spec:
        out = {}
        for part in spec.split(","):
            gid, _, val = part.partition("=")
            out[int(gid.strip())] = float(val)
        return out
    try:
        beta = float(spec)
    except ValueError as exc:
        raise InvalidInputError(f"cannot parse budget spec {spec!r}") from exc
    return {"*": beta}  # sentinel: same beta for every group, resolved per document


def _resolve_budget_map(budgets, doc) -> dict[int, float] | None:
    if budgets is None:
        return None
    if "*" in budgets:
        return {g.group_id: budgets["*"] for g in doc.groups}
    return budgets


def _add_backend_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--backend", default="mock", help="mock[:uniform|ngram] or remote:HOST:PORT")
    p.add_argument("--mock-seed", type=int, default=0, help="seed for the mock backend's tables")


def _add_generation_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--doc", required=True, help="document JSON file")
    p.add_argument("--tmax", type=int, default=900, help="maximum tokens to generate")
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0, help="sampling seed")
    p.add_argument("--placeholder", default="___")
    p.add_argument("--out", required=True, help="transcript JSONL output path")


def build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(prog="privgen", description=__doc__)
    top.add_argument("--config", default=None, help="JSON file of flag defaults")
    sub = top.add_subparsers(dest="command", required=True)

    p = sub.add_parser("privatize", help="divergence-bounded private paraphrase of a document")
    _add_generation_flags(p)
    _add_backend_flags(p)
    p.add_argument("--budgets", default=None, help="beta | id=beta,... | JSON file (default: document budgets)")
    p.add_argument("--alpha", type=float, default=2.0, help="Renyi order")
    p.add_argument("--tol", type=float, default=1e-4, help="bisection tolerance")

    p = sub.add_parser("account", help="privacy report from a transcript")
    p.add_argument("--transcript", required=True)
    p.add_argument("--delta", type=float, default=accounting.DEFAULT_DELTA)
    p.add_argument("--composition", choices=("sum", "max"), default="sum")
    p.add_argument("--out", required=True, help="report JSON output path")
    p.add_argument("--plot-csv", default=None, help="also write per-step epsilon curves as CSV")

    p = sub.add_parser("attack", help="token-recovery game over an instance file")
    p.add_argument("--instances", required=True, help="attack instance JSONL file")
    p.add_argument("--scorer", choices=("loss", "mink"), default="loss")
    p.add_argument("--k", type=float, default=20.0, help="Min-K percentage")
    _add_backend_flags(p)
    p.add_argument("--seed", type=int, default=0, help="tie-breaking seed")
    p.add_argument("--mismatched-template", action="store_true",
                   help="score with a template differing from the defender's (robustness study)")
    p.add_argument("--out", default=None, help="summary JSON path (default: stdout)")

    p = sub.add_parser("baseline", help="comparison mechanisms behind the same interface")
    _add_generation_flags(p)
    _add_backend_flags(p)
    p.add_argument("--mode", required=True, choices=("original", "ner_public", "dp_decoding", "dp_prompt"))
    p.add_argument("--lambda", dest="lambda_interp", type=float, default=0.5, help="dp_decoding weight")
    p.add_argument("--width", type=float, default=None, help="dp_prompt symmetric clip width")
    p.add_argument("--clip-low", type=float, default=-2.5)
    p.add_argument("--clip-high", type=float, default=2.5)
    p.add_argument("--mech-temperature", type=float, default=1.0, help="dp mechanism temperature")

    p = sub.add_parser("divergence-trace", help="per-step lambda/divergence curves as CSV")
    p.add_argument("--transcript", required=True)
    p.add_argument("--plot-csv", required=True, help="CSV output path")

    return top


def _apply_config_file(parser: argparse.ArgumentParser, argv: list[str]) -> list[str]:
    if "--config" not in argv:
        return argv
    idx = argv.index("--config")
    try:
        path = argv[idx + 1]
    except IndexError as exc:
        raise InvalidInputError("--config needs a file path") from exc
    defaults = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(defaults, dict):
        raise InvalidInputError("config file must hold a JSON object of flag defaults")
    for action in parser._subparsers._group_actions[0].choices.values():  # type: ignore[union-attr]
        known = {a.dest for a in action._actions}
        action.set_defaults(**{k: v for k, v in defaults.items() if k in known})
    return argv


def cmd_privatize(args) -> int:
    doc = load_document(args.doc)
    backend = build_backend(args.backend, args.mock_seed)
    budgets = _resolve_budget_map(parse_budgets(args.budgets), doc)
    config = fusion.FusionConfig(
        max_tokens=args.tmax,
        order=RenyiOrder(args.alpha),
        temperature=args.temperature,
        rng_seed=args.seed,
        per_group_budgets=budgets,
        tol=args.tol,
    )
    template = PromptBundle(placeholder=args.placeholder)
    transcript = fusion.generate(backend, doc, template, config)
    fusion.write_transcript(transcript, args.out)
    print(f"wrote {len(transcript.steps)} steps to {args.out}")
    return 0


def cmd_account(args) -> int:
    transcript = fusion.read_transcript(args.transcript)
    ledger = accounting.ledger_from_transcript(transcript, delta=args.delta)
    betas = {int(k): float(v) for k, v in transcript.config_echo.get("budgets", {}).items()}
    report = accounting.build_report(ledger, betas, composition=args.composition)
    Path(args.out).write_text(json.dumps(accounting.report_to_obj(report), indent=2), encoding="utf-8")
    if args.plot_csv:
        with open(args.plot_csv, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["group_id", "step", "eps_data", "eps_theoretical"])
            writer.writerows(accounting.epsilon_trace_rows(ledger, betas))
    for g in report.groups:
        print(f"group {g.group_id}: eps_theoretical={g.epsilon_theoretical:.4f} eps_data={g.epsilon_data_dependent:.4f}")
    return 0


def cmd_attack(args) -> int:
    backend = build_backend(args.backend, args.mock_seed)
    instances = attacks.load_instances(args.instances)
    template = PromptBundle()
    if args.mismatched_template:
        template = template.with_privacy_instruction()
    result = attacks.run_token_recovery(
        backend,
        instances,
        scorer="min_k" if args.scorer == "mink" else "loss",
        k_percent=args.k,
        template=template,
        seed=args.seed,
    )
    payload = json.dumps(attacks.result_to_obj(result), indent=2)
    if args.out:
        Path(args.out).write_text(payload, encoding="utf-8")
    print(payload)
    return 0


def cmd_baseline(args) -> int:
    doc = load_document(args.doc)
    backend = build_backend(args.backend, args.mock_seed)
    mode = "original_doc" if args.mode == "original" else args.mode
    config = fusion.FusionConfig(max_tokens=args.tmax, temperature=args.temperature, rng_seed=args.seed)
    dp_dec = None
    dp_pr = None
    if mode == "dp_decoding":
        dp_dec = baselines.DpDecodingConfig(lambda_interp=args.lambda_interp, temperature=args.mech_temperature)
    if mode == "dp_prompt":
        if args.width is not None:
            dp_pr = baselines.DpPromptConfig.from_width(args.width, args.mech_temperature)
        else:
            dp_pr = baselines.DpPromptConfig(args.clip_low, args.clip_high, args.mech_temperature)
    template = PromptBundle(placeholder=args.placeholder)
    transcript = baselines.baseline_generate(
        backend, doc, template, mode=mode, config=config, dp_decoding=dp_dec, dp_prompt=dp_pr
    )
    fusion.write_transcript(transcript, args.out)
    print(f"wrote {len(transcript.steps)} steps to {args.out}")
    return 0


def cmd_divergence_trace(args) -> int:
    transcript = fusion.read_transcript(args.transcript)
    with open(args.plot_csv, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "group_id", "lambda", "divergence"])
        for rec in transcript.steps:
            for gid, out in sorted(rec.per_group.items()):
                writer.writerow([rec.step_index, gid, out.lam, out.achieved_divergence])
    print(f"wrote divergence trace to {args.plot_csv}")
    return 0


_COMMANDS = {
    "privatize": cmd_privatize,
    "account": cmd_account,
    "attack": cmd_attack,
    "baseline": cmd_baseline,
    "divergence-trace": cmd_divergence_trace,
}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        argv = _apply_config_file(parser, argv)
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except GenerationAbortedError as exc:
        print(f"error: {exc} (partial transcript discarded)", file=sys.stderr)
        return 1
    except (PrivgenError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
