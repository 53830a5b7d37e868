#!/usr/bin/env python3
"""Reference implementation of the caption metrics, written from the metric
definitions without consulting the C++ sources.  Emits golden values for the
pair fixture as JSON."""

import argparse
import json
import math
from collections import Counter
from functools import lru_cache


def grams(tokens, n):
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def closest_len(cand, refs):
    return min((abs(len(r) - len(cand)), len(r)) for r in refs)[1]


def bleu4(pairs):
    num = [0] * 4
    den = [0] * 4
    c_len = r_len = 0
    for cand, refs in pairs:
        for n in range(1, 5):
            cg = grams(cand, n)
            limit = Counter()
            for r in refs:
                limit |= grams(r, n)
            num[n - 1] += sum(min(v, limit[g]) for g, v in cg.items())
            den[n - 1] += sum(cg.values())
        c_len += len(cand)
        r_len += closest_len(cand, refs)
    if min(num) == 0:
        return 0.0
    bp = 1.0 if c_len > r_len else math.exp(1 - r_len / c_len)
    return bp * math.exp(sum(math.log(a / b) for a, b in zip(num, den)) / 4)


def sentence_bleu4(cand, refs):
    logs = 0.0
    for n in range(1, 5):
        cg = grams(cand, n)
        limit = Counter()
        for r in refs:
            limit |= grams(r, n)
        m = sum(min(v, limit[g]) for g, v in cg.items())
        t = sum(cg.values())
        if n == 1:
            if m == 0:
                return 0.0
            logs += math.log(m / t)
        else:
            logs += math.log((m + 1) / (t + 1))
    c, r = len(cand), closest_len(cand, refs)
    bp = 1.0 if c > r else math.exp(1 - r / c)
    return bp * math.exp(logs / 4)


def lcs(a, b):
    @lru_cache(maxsize=None)
    def go(i, j):
        if i == len(a) or j == len(b):
            return 0
        if a[i] == b[j]:
            return 1 + go(i + 1, j + 1)
        return max(go(i + 1, j), go(i, j + 1))
    return go(0, 0)


def rouge_l(pairs, beta=1.2):
    total = 0.0
    for cand, refs in pairs:
        best = 0.0
        for r in refs:
            l = lcs(tuple(cand), tuple(r))
            if l:
                p, q = l / len(cand), l / len(r)
                best = max(best, (1 + beta ** 2) * p * q / (q + beta ** 2 * p))
        total += best
    return total / len(pairs)


def cider_d(pairs, sigma=6.0):
    doc_freq = Counter()
    for _, refs in pairs:
        present = set()
        for r in refs:
            for n in range(1, 5):
                present.update(grams(r, n))
        doc_freq.update(present)
    log_docs = math.log(len(pairs))

    def vectorize(tokens):
        vec = [dict() for _ in range(4)]
        norms = [0.0] * 4
        for n in range(1, 5):
            for g, tf in grams(tokens, n).items():
                w = tf * (log_docs - math.log(max(1.0, doc_freq[g])))
                vec[n - 1][g] = w
                norms[n - 1] += w * w
        bigram_len = sum(grams(tokens, 2).values())
        return vec, [math.sqrt(x) for x in norms], bigram_len

    scores = []
    for cand, refs in pairs:
        hv, hn, hl = vectorize(cand)
        per_n = [0.0] * 4
        for r in refs:
            rv, rn, rl = vectorize(r)
            gauss = math.exp(-((hl - rl) ** 2) / (2 * sigma ** 2))
            for n in range(4):
                s = sum(min(w, rv[n][g]) * rv[n][g] for g, w in hv[n].items() if g in rv[n])
                if hn[n] and rn[n]:
                    s /= hn[n] * rn[n]
                per_n[n] += s * gauss
        scores.append(sum(per_n) / 4 / len(refs) * 10)
    return sum(scores) / len(scores), scores


def stem(word):
    for suffix in ("ing", "ed", "es", "ly", "s"):
        if len(word) >= len(suffix) + 3 and word.endswith(suffix):
            return word[: -len(suffix)]
    return word


def all_alignments(cand, ref):
    """Every injective partial map candidate index -> reference index between
    matching words, as a list of (i, j) pairs ordered by i."""
    def ok(i, j):
        return cand[i] == ref[j] or stem(cand[i]) == stem(ref[j])

    def rec(i, used):
        if i == len(cand):
            yield []
            return
        for rest in rec(i + 1, used):
            yield rest
        for j in range(len(ref)):
            if j not in used and ok(i, j):
                for rest in rec(i + 1, used | {j}):
                    yield [(i, j)] + rest
    return rec(0, frozenset())


def count_chunks(alignment):
    chunks = 0
    prev = None
    for i, j in alignment:
        if prev is None or not (i == prev[0] + 1 and j == prev[1] + 1):
            chunks += 1
        prev = (i, j)
    return chunks


def meteor_pair(cand, ref):
    best = None
    for a in all_alignments(cand, ref):
        key = (-len(a), count_chunks(a))
        if best is None or key < best:
            best = key
    m, ch = -best[0], best[1]
    if m == 0:
        return 0.0
    p, r = m / len(cand), m / len(ref)
    f = 10 * p * r / (r + 9 * p)
    return f * (1 - 0.5 * (ch / m) ** 3)


def meteor(pairs):
    return sum(max(meteor_pair(c, r) for r in refs) for c, refs in pairs) / len(pairs)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("fixture")
    args = ap.parse_args()
    with open(args.fixture) as f:
        raw = json.load(f)["pairs"]
    pairs = [(p["candidate"].split(), [r.split() for r in p["references"]]) for p in raw]
    cider, cider_pairs = cider_d(pairs)
    out = {
        "bleu4": bleu4(pairs),
        "rouge_l": rouge_l(pairs),
        "cider_d": cider,
        "cider_d_per_pair": cider_pairs,
        "meteor_basic": meteor(pairs),
        "sentence_bleu4": [sentence_bleu4(c, r) for c, r in pairs],
        "rouge_l_hand_example": rouge_l([("a b c".split(), ["a c".split()])]),
    }
    print(json.dumps(out, indent=2))


if __name__ == "__main__":
    main()
