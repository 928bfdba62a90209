#!/usr/bin/env python3
"""Build a synthetic desk-scale corpus: annotated documents plus attack instances.

Documents are composed from the mock backend's vocabulary so that scoring and
perplexity are well-defined end to end. Span contents are drawn from a small
pool; candidate sets perturb the true span with pool re-samples.
"""
import argparse
import json
from pathlib import Path

import numpy as np

from privgen import AnnotatedDocument, FusionConfig, MockModel, PrivacyGroup, Span, generate, save_document
from privgen.attacks import make_attack_instance, perturb_candidates, save_instances

SPAN_POOL = [" court", " case", " city", " state", " review", " applicant"]
_FILLER = [" year", " state", " review", " city", " court", " case"]


def build_doc(idx: int, rng: np.random.Generator) -> AnnotatedDocument:
    """Document whose text consists purely of mock-vocabulary pieces.

    That keeps teacher-forced scoring of the source text well-defined under
    the mock tokenizer.
    """
    a, b = rng.choice(len(SPAN_POOL), size=2, replace=False)
    secret_1, secret_2 = SPAN_POOL[int(a)], SPAN_POOL[int(b)]
    w = [_FILLER[int(i)] for i in rng.integers(len(_FILLER), size=3)]
    text = (
        f" the{secret_1} was held in the{w[0]}."
        f" the{secret_2} was filed by the{w[1]} in the{w[2]}."
    )
    s1 = text.index(secret_1)
    s2 = text.index(secret_2, s1 + len(secret_1))
    return AnnotatedDocument(
        doc_id=f"synth-{idx:04d}",
        text=text,
        spans=(Span(s1, s1 + len(secret_1), 1), Span(s2, s2 + len(secret_2), 2)),
        groups=(PrivacyGroup(1, "SUBJECT", 0.005), PrivacyGroup(2, "FILING", 0.05)),
    )


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out-dir", default="fixtures", help="output directory")
    ap.add_argument("--n-docs", type=int, default=20)
    ap.add_argument("--n-instances", type=int, default=60)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--tmax", type=int, default=30, help="tokens per privatized output")
    args = ap.parse_args()

    out = Path(args.out_dir)
    (out / "docs").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(args.seed)
    backend = MockModel(seed=args.seed)

    docs = []
    for i in range(args.n_docs):
        doc = build_doc(i, rng)
        save_document(doc, out / "docs" / f"{doc.doc_id}.json")
        docs.append(doc)
    print(f"wrote {len(docs)} documents to {out / 'docs'}")

    instances = []
    i = 0
    while len(instances) < args.n_instances:
        doc = docs[i % len(docs)]
        target = 1 + (i % 2)
        transcript = generate(backend, doc, config=FusionConfig(max_tokens=args.tmax, rng_seed=i))
        i += 1
        if not transcript.output_text:
            continue
        true_piece = doc.text[doc.spans[target - 1].start:doc.spans[target - 1].end]
        candidates, true_index = perturb_candidates((true_piece,), SPAN_POOL, 5, rng)
        instances.append(
            make_attack_instance(doc, target, transcript.output_text, candidates, true_index)
        )
    save_instances(instances, out / "instances.jsonl")
    print(f"wrote {len(instances)} attack instances to {out / 'instances.jsonl'}")

    (out / "budgets.json").write_text(json.dumps({"1": 0.005, "2": 0.05}))
    print(f"wrote {out / 'budgets.json'}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
