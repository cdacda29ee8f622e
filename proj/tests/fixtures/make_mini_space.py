#!/usr/bin/env python3
"""Writes the mini_space fixture: 50 pre-annotated sentences (English with UD
tags, Chinese with PKU tags), three model prediction sets and a small
embedding table.  The output is committed; rerunning reproduces it exactly."""

import json
import random
import sys
from pathlib import Path

ENGLISH = """\
The/DET cup/NOUN is/AUX on/ADP the/DET table/NOUN ./PUNCT
A/DET cat/NOUN sleeps/VERB under/ADP the/DET bed/NOUN ./PUNCT
The/DET men/NOUN will/AUX all/ADV leave/VERB ./PUNCT
She/PRON put/VERB the/DET book/NOUN to/ADP the/DET left/NOUN of/ADP the/DET lamp/NOUN ./PUNCT
He/PRON stood/VERB to/ADP the/DET left/NOUN of/ADP the/DET door/NOUN ./PUNCT
The/DET park/NOUN lies/VERB north/ADV of/ADP the/DET river/NOUN ./PUNCT
They/PRON picked/VERB up/ADP the/DET box/NOUN near/ADP the/DET wall/NOUN ./PUNCT
We/PRON walked/VERB into/ADP a/DET small/ADJ room/NOUN ./PUNCT
The/DET bird/NOUN flew/VERB over/ADP the/DET roof/NOUN ./PUNCT
I/PRON left/VERB my/PRON keys/NOUN inside/ADP the/DET car/NOUN ./PUNCT
The/DET shop/NOUN is/AUX to/ADP the/DET left/NOUN of/ADP the/DET bank/NOUN ./PUNCT
A/DET tree/NOUN grows/VERB behind/ADP our/PRON house/NOUN ./PUNCT
He/PRON looked/VERB up/ADP at/ADP the/DET sky/NOUN ./PUNCT
She/PRON turned/VERB left/ADV at/ADP the/DET corner/NOUN ./PUNCT
The/DET lamp/NOUN hangs/VERB above/ADP the/DET desk/NOUN ./PUNCT
The/DET dog/NOUN will/AUX wait/VERB outside/ADV ./PUNCT
It/PRON sits/VERB between/ADP two/NUM chairs/NOUN ./PUNCT
The/DET road/NOUN runs/VERB along/ADP the/DET coast/NOUN ./PUNCT
They/PRON moved/VERB the/DET sofa/NOUN to/ADP the/DET right/NOUN ./PUNCT
The/DET train/NOUN stopped/VERB beside/ADP the/DET platform/NOUN ./PUNCT
She/PRON climbed/VERB up/ADP the/DET hill/NOUN ./PUNCT
The/DET school/NOUN is/AUX across/ADP the/DET street/NOUN ./PUNCT
He/PRON hid/VERB the/DET letter/NOUN in/ADP a/DET drawer/NOUN ./PUNCT
The/DET boat/NOUN drifted/VERB toward/ADP the/DET shore/NOUN ./PUNCT
We/PRON will/AUX meet/VERB in/ADP front/NOUN of/ADP the/DET station/NOUN ./PUNCT
The/DET keys/NOUN are/AUX on/ADP the/DET left/NOUN ./PUNCT
A/DET man/NOUN stood/VERB on/ADP the/DET right/NOUN of/ADP the/DET gate/NOUN ./PUNCT
The/DET children/NOUN will/AUX play/VERB inside/ADV ./PUNCT
She/PRON set/VERB up/ADP the/DET tent/NOUN by/ADP the/DET lake/NOUN ./PUNCT
The/DET window/NOUN faces/VERB the/DET garden/NOUN ./PUNCT"""

CHINESE = """\
杯子/n 在/p 桌子/n 上/f 。/w
他/r 站/v 在/p 门/n 的/u 左边/f 。/w
猫/n 躲/v 在/p 床/n 下/f 。/w
书/n 放/v 在/p 箱子/n 里/f 。/w
她/r 坐/v 在/p 窗户/n 的/u 右边/f 。/w
商店/n 在/p 银行/n 左边/f 。/w
我们/r 走/v 进/v 房间/n 里/f 。/w
鸟/n 飞/v 过/v 屋顶/n 。/w
学校/n 在/p 公园/n 的/u 北边/f 。/w
他/r 把/p 钥匙/n 留/v 在/p 车/n 里/f 。/w
灯/n 挂/v 在/p 桌子/n 上方/f 。/w
河/n 的/u 左边/f 有/v 一/m 座/q 山/n 。/w
孩子/n 们/k 在/p 院子/n 里/f 玩/v 。/w
车站/n 在/p 商店/n 的/u 对面/f 。/w
她/r 向/p 左/f 转/v 。/w
狗/n 睡/v 在/p 门/n 外/f 。/w
桥/n 在/p 河/n 上/f 。/w
花/n 种/v 在/p 房子/n 后面/f 。/w
他/r 住/v 在/p 学校/n 左边/f 。/w
船/n 停/v 在/p 岸/n 边/f 。/w"""

# Labels (english block, then chinese block), tuned so that exactly five
# shortcuts reach productivity >= 0.75 with coverage >= 5.
LABELS = "ffttfffttftffffffftfttfttffttf" "ttttftffftfftttftfft"


def split_of(i):
    return {3: "dev", 4: "test"}.get(i % 5, "train")


def parse(line):
    toks = []
    for item in line.split(" "):
        word, _, pos = item.rpartition("/")
        toks.append({"t": word, "pos": pos})
    return toks


def build():
    lines = ENGLISH.splitlines() + CHINESE.splitlines()
    assert len(lines) == 50 and len(LABELS) == 50
    records = []
    for i, line in enumerate(lines):
        toks = parse(line)
        zh = i >= 30
        text = ("" if zh else " ").join(t["t"] for t in toks)
        if not zh:
            text = text.replace(" .", ".")
        records.append({
            "id": ("zh%02d" % (i - 29)) if zh else ("en%02d" % (i + 1)),
            "text": text,
            "tokens": toks,
            "label": "true" if LABELS[i] == "t" else "false",
            "split": split_of(i),
        })
    return records


def predictions(records):
    rng = random.Random(20220917)
    models = []
    for name, acc in (("m1", 0.85), ("m2", 0.7), ("m3", 0.6)):
        preds = {}
        for r in records:
            ok = rng.random() < acc
            preds[r["id"]] = r["label"] if ok else ("false" if r["label"] == "true" else "true")
        models.append({"model": name, "predictions": preds})
    return models


def embeddings(records):
    rng = random.Random(7)
    base = {}
    words = sorted({t["t"] for r in records for t in r["tokens"]})
    # Spatial direction words cluster together.
    direction = [1.0, 0.2, 0.0, 0.1]
    for w in words:
        v = [round(rng.uniform(-1, 1), 4) for _ in range(4)]
        if w in ("left", "right", "左边", "右边", "北边", "对面", "后面"):
            v = [round(d + rng.uniform(-0.1, 0.1), 4) for d in direction]
        if all(x == 0 for x in v):
            v[0] = 0.5
        base[w] = v
    return base


def main(out_dir):
    out = Path(out_dir)
    records = build()
    with open(out / "mini_space.jsonl", "w", encoding="utf-8") as f:
        for r in records:
            f.write(json.dumps(r, ensure_ascii=False) + "\n")
    with open(out / "mini_space.predictions.jsonl", "w", encoding="utf-8") as f:
        for m in predictions(records):
            f.write(json.dumps(m, ensure_ascii=False, sort_keys=True) + "\n")
    with open(out / "mini_space.embeddings.tsv", "w", encoding="utf-8") as f:
        for w, v in embeddings(records).items():
            f.write(w + "\t" + " ".join(repr(x) for x in v) + "\n")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else Path(__file__).parent)
