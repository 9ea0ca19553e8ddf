#!/usr/bin/env python3
"""Independent reference implementation of dataset shaping.

Regenerates the golden files used by the shaping golden test from
fixture.jsonl and fixture_scores.jsonl. It shares no code with the C++
library: the vocabulary, the ranking, the bucket lookup (a plain interval
scan) and the input/target layout are re-derived here from their definitions.

    python3 shaping_oracle.py            # rewrite goldens next to this file
"""
import json
import os

HERE = os.path.dirname(os.path.abspath(__file__))
RESERVED = ["[PAD]", "[BOS]", "[EOS]", "[SEP]", "[UNK]",
            "[_YES_]", "[_PROBABLY_]", "[_MAYBE_]", "[_DOUBT_]", "[_NO_]"]
BUCKETS = {5: "[_YES_]", 4: "[_PROBABLY_]", 3: "[_MAYBE_]", 2: "[_DOUBT_]", 1: "[_NO_]"}
K = 5


def bucket_index(score, levels=5):
    # Interval i covers [(i-1)/l, i/l); the top interval is closed at 1.
    for i in range(1, levels + 1):
        lo, hi = (i - 1) / levels, i / levels
        if lo <= score < hi or (i == levels and score == 1.0):
            return i
    raise ValueError(score)


def load(name):
    with open(os.path.join(HERE, name)) as f:
        return [json.loads(line) for line in f if line.strip()]


def main():
    corpus = load("fixture.jsonl")
    scores = {r["id"]: r["scores"] for r in load("fixture_scores.jsonl")}
    words = set()
    for ex in corpus:
        words.update(ex["question"].split())
        for c in ex["candidates"]:
            words.update(c["text"].split())
    vocab = {tok: i for i, tok in enumerate(RESERVED + sorted(words))}
    with open(os.path.join(HERE, "fixture.vocab"), "w") as f:
        for tok in RESERVED + sorted(words):
            f.write(tok + "\n")

    for name, sci, sco in [("ws", False, False), ("sci", True, False),
                           ("sco", False, True), ("sci_sco", True, True)]:
        lines = []
        for ex in corpus:
            s = scores[ex["id"]]
            order = sorted(range(len(s)), key=lambda i: (-s[i], i))
            ids = [vocab[t] for t in ex["question"].split()]
            for j in order[1:K + 1]:
                ids.append(vocab["[SEP]"])
                if sci:
                    ids.append(vocab[BUCKETS[bucket_index(s[j])]])
                ids += [vocab[t] for t in ex["candidates"][j]["text"].split()]
            top = order[0]
            target = []
            if sco:
                target.append(vocab[BUCKETS[bucket_index(s[top])]])
            target += [vocab[t] for t in ex["candidates"][top]["text"].split()]
            target.append(vocab["[EOS]"])
            rec = {"id": ex["id"], "input_ids": ids, "target_ids": target,
                   "weight": s[top], "target_bucket": BUCKETS[bucket_index(s[top])],
                   "k_used": K}
            lines.append(json.dumps(rec, separators=(",", ":")))
        with open(os.path.join(HERE, "golden_%s.jsonl" % name), "w") as f:
            f.write("\n".join(lines) + "\n")


if __name__ == "__main__":
    main()
