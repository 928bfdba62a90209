#!/usr/bin/env python3
"""Desk-scale sweep over divergence budgets on the mock backend.

For each allowed per-step divergence (alpha * beta), privatize a batch of
synthetic documents, then report: mean observed divergence, theoretical and
data-dependent epsilon, teacher-forced perplexity of the source text, and the
LOSS-attack success rate over a small instance set. Numbers demonstrate the
pipeline's shape (budget binds, eps_data < eps_theo, ASR near trivial), not
any benchmark's absolute values.
"""
import argparse

import numpy as np

from privgen import (
    FusionConfig,
    MockModel,
    assemble_prompt,
    build_report,
    generate,
    ledger_from_transcript,
    partition,
    perplexity,
    run_token_recovery,
    sequence_logprobs,
)
from privgen.attacks import make_attack_instance, perturb_candidates

from make_fixtures import SPAN_POOL, build_doc

DIVERGENCE_GRID = [0.01, 0.02, 0.03, 0.05, 0.06, 0.07, 0.10]


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n-docs", type=int, default=8)
    ap.add_argument("--n-instances", type=int, default=80)
    ap.add_argument("--tmax", type=int, default=40)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--alpha", type=float, default=2.0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    backend = MockModel(seed=args.seed)
    docs = [build_doc(i, rng) for i in range(args.n_docs)]

    header = f"{'max div':>8} {'mean obs div':>13} {'eps_theo':>9} {'eps_data':>9} {'ppl(src)':>9} {'loss ASR':>9}"
    print(header)
    print("-" * len(header))
    for max_div in DIVERGENCE_GRID:
        beta = max_div / args.alpha
        budgets = {1: beta, 2: beta}
        observed, eps_theo, eps_data, ppls = [], [], [], []
        instances = []
        i = 0
        while len(instances) < args.n_instances:
            doc = docs[i % len(docs)]
            cfg = FusionConfig(max_tokens=args.tmax, rng_seed=1000 * i + int(1e4 * max_div),
                               per_group_budgets=budgets)
            tr = generate(backend, doc, config=cfg)
            i += 1
            for step in tr.steps:
                observed.extend(o.achieved_divergence for o in step.per_group.values())
            report = build_report(ledger_from_transcript(tr), budgets)
            eps_theo.extend(g.epsilon_theoretical for g in report.groups)
            eps_data.extend(g.epsilon_data_dependent for g in report.groups)
            public_view, _ = partition(doc)
            ppls.append(perplexity(sequence_logprobs(backend, assemble_prompt(public_view), doc.text)))
            if not tr.output_text:
                continue
            target = 1 + (i % 2)
            true_piece = doc.text[doc.spans[target - 1].start:doc.spans[target - 1].end]
            candidates, true_index = perturb_candidates((true_piece,), SPAN_POOL, 5, rng)
            instances.append(make_attack_instance(doc, target, tr.output_text, candidates, true_index))
        attack = run_token_recovery(backend, instances, scorer="loss", seed=args.seed)
        print(
            f"{max_div:>8.2f} {np.mean(observed):>13.5f} {np.mean(eps_theo):>9.2f} "
            f"{np.mean(eps_data):>9.2f} {np.mean(ppls):>9.3f} {attack.asr:>9.3f}"
        )
    print("\ntrivial-leakage ASR for 5 candidates is 0.200")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
