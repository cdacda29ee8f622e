#!/usr/bin/env python3
"""Independent brute-force reference for the mini_space goldens.

Shares no code with the C++ engine.  Templates are tuples:
  1-slot: ((pos, word_or_None),)
  2-slot: ((pos, word_or_None), gap, (pos, word_or_None))
Writes the golden response bodies consumed by the acceptance suite."""

import hashlib
import json
import sys
from pathlib import Path

ESCAPED = set('\\[]{},= \t\n')
COVERAGE_FLOOR = 2


def esc(s):
    return "".join("\\" + c if c in ESCAPED else c for c in s)


def slot_str(slot):
    pos, word = slot
    return "[pos=" + esc(pos) + ("" if word is None else " word=" + esc(word)) + "]"


def canon(t):
    if len(t) == 1:
        return slot_str(t[0])
    return slot_str(t[0]) + " gap=" + str(t[1]) + " " + slot_str(t[2])


def tid(t):
    return hashlib.sha256(canon(t).encode("utf-8")).hexdigest()[:16]


def load(path):
    recs = [json.loads(l) for l in open(path, encoding="utf-8") if l.strip()]
    labels, splits = [], []
    for r in recs:
        if r["label"] not in labels:
            labels.append(r["label"])
        if r["split"] not in splits:
            splits.append(r["split"])
    return recs, labels, splits


def instance_templates(tokens):
    out = set()
    n = len(tokens)
    for p in range(n):
        a = tokens[p]
        out.add(((a["pos"], None),))
        out.add(((a["pos"], a["t"]),))
        for q in range(p + 1, n):
            b = tokens[q]
            for wa in (None, a["t"]):
                for wb in (None, b["t"]):
                    out.add(((a["pos"], wa), q - p - 1, (b["pos"], wb)))
    return out


def parents(t):
    res = set()
    if len(t) == 1:
        if t[0][1] is not None:
            res.add(((t[0][0], None),))
        return res
    s1, g, s2 = t
    if s1[1] is not None:
        res.add(((s1[0], None), g, s2))
    if s2[1] is not None:
        res.add((s1, g, (s2[0], None)))
    res.add((s1,))
    res.add((s2,))
    return res


def counts_stats(counts, labels):
    cov = sum(counts)
    if cov == 0:
        return {"coverage": 0, "label_distribution": dict(zip(labels, counts)),
                "prediction": None, "productivity": "undefined"}
    best = 0
    for i in range(1, len(labels)):
        if counts[i] > counts[best]:
            best = i
    return {"coverage": cov, "label_distribution": dict(zip(labels, counts)),
            "prediction": labels[best], "productivity": counts[best] / cov}


def mine(recs, labels, splits, min_cov, min_prod):
    covered = {}
    for idx, r in enumerate(recs):
        for t in instance_templates(r["tokens"]):
            covered.setdefault(t, []).append(idx)

    def stats(t, split=None):
        c = [0] * len(labels)
        for i in covered[t]:
            if split is None or recs[i]["split"] == split:
                c[labels.index(recs[i]["label"])] += 1
        return counts_stats(c, labels)

    selected = set()
    for t in covered:
        s = stats(t)
        if s["coverage"] >= min_cov and s["productivity"] >= min_prod:
            selected.add(t)
    graph = set(selected)
    stack = list(selected)
    while stack:
        t = stack.pop()
        for p in parents(t):
            if p not in graph:
                graph.add(p)
                stack.append(p)
    for t in covered:
        if len(covered[t]) >= COVERAGE_FLOOR and parents(t) & selected:
            graph.add(t)
    children = {t: set() for t in graph}
    for t in graph:
        for p in parents(t):
            if p in graph:
                children[p].add(t)
    return covered, stats, selected, graph, children


def dump(obj):
    return json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False)


def main(fixture_dir, golden_dir):
    fx = Path(fixture_dir)
    recs, labels, splits = load(fx / "mini_space.jsonl")
    covered, stats, selected, graph, children = mine(recs, labels, splits, 5, 0.75)

    rows = []
    for t in selected:
        rows.append({
            "aggregated": False,
            "child_count": len(children[t]),
            "display": canon(t),
            "id": tid(t),
            "selected": True,
            "template": canon(t),
            "whole": stats(t),
        })
    rows.sort(key=lambda r: (-r["whole"]["coverage"], r["id"]))
    body = {"count": len(rows), "dataset": "mini_space", "min_coverage": 5,
            "min_productivity": 0.75, "shortcuts": rows}
    out = Path(golden_dir)
    (out / "mini_space.shortcuts.json").write_text(dump(body), encoding="utf-8")

    shape = {"count": len(rows),
             "keys": ["arc", "id", "label", "radius", "x", "y"],
             "points": sorted(({"arc": r["whole"]["productivity"], "id": r["id"],
                                "label": r["whole"]["prediction"]} for r in rows),
                              key=lambda p: p["id"])}
    (out / "mini_space.projection_shape.json").write_text(dump(shape), encoding="utf-8")

    # Scripted what-if: the two highest-coverage selected shortcuts on test.
    pick = sorted(r["id"] for r in rows[:2])
    by_id = {tid(t): t for t in selected}
    split = "test"
    split_idx = [i for i, r in enumerate(recs) if r["split"] == split]
    cover_of = {}
    for sid in pick:
        t = by_id[sid]
        pred = stats(t, split)["prediction"]
        for i in covered[t]:
            if recs[i]["split"] == split:
                cover_of.setdefault(i, set()).add(pred)
    dirty = sorted(cover_of)
    clean = [i for i in split_idx if i not in cover_of]
    disagreed = [i for i in dirty if len(cover_of[i]) > 1]
    agreed = [i for i in dirty if len(cover_of[i]) == 1]
    correct = sum(1 for i in agreed if recs[i]["label"] in cover_of[i])
    prod = correct / len(agreed) if agreed else "undefined"

    models = [json.loads(l) for l in open(fx / "mini_space.predictions.jsonl", encoding="utf-8") if l.strip()]

    def acc(m, idxs):
        if not idxs:
            return "undefined"
        ok = sum(1 for i in idxs if m["predictions"][recs[i]["id"]] == recs[i]["label"])
        return ok / len(idxs)

    def block(w, d, c):
        return {"clean": c, "delta_clean": "undefined" if c == "undefined" else c - w,
                "delta_dirty": "undefined" if d == "undefined" else d - w,
                "dirty": d, "whole": w}

    per_model = []
    sums = {"whole": [], "dirty": [], "clean": []}
    for m in models:
        w, d, c = acc(m, split_idx), acc(m, dirty), acc(m, clean)
        b = block(w, d, c)
        b["model"] = m["model"]
        per_model.append(b)
        for k, v in (("whole", w), ("dirty", d), ("clean", c)):
            sums[k].append(v)

    def mean(vs):
        if not vs or any(v == "undefined" for v in vs):
            return "undefined"
        s = 0.0
        for v in vs:
            s += v
        return s / len(vs)

    avg = block(mean(sums["whole"]), mean(sums["dirty"]), mean(sums["clean"]))
    report = {
        "accuracy": {"average": avg, "models": per_model, "omitted_models": []},
        "clean_ids": [recs[i]["id"] for i in clean],
        "dirty_ids": [recs[i]["id"] for i in dirty],
        "disagreed_count": len(disagreed),
        "group_coverage": len(dirty),
        "group_productivity": prod,
        "shortcut_ids": pick,
        "split": split,
    }
    (out / "mini_space.whatif.json").write_text(dump(report), encoding="utf-8")
    (out / "mini_space.whatif_request.json").write_text(
        dump({"shortcut_ids": pick, "split": split}), encoding="utf-8")
    print("selected:", len(rows))
    for r in rows:
        print(" ", r["whole"]["coverage"], r["whole"]["prediction"],
              round(r["whole"]["productivity"], 4), r["template"])
    print("whatif:", pick, "dirty", len(dirty), "disagreed", len(disagreed), "prod", prod)


if __name__ == "__main__":
    here = Path(__file__).parent
    main(sys.argv[1] if len(sys.argv) > 1 else here,
         sys.argv[2] if len(sys.argv) > 2 else here / "golden")
