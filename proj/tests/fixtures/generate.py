#!/usr/bin/env python3
"""Generates the shipped test fixtures under tests/fixtures/data.

Expected labels are derived from how each record is constructed here, not
from the C++ pipeline, so the filter test compares two independent routes.

    python3 tests/fixtures/generate.py
"""

import json
import math
import random
from pathlib import Path

OUT = Path(__file__).resolve().parent / "data"

HEADER = "import matplotlib.pyplot as plt\n"


def fmt_list(values):
    return "[" + ", ".join(repr(v) for v in values) + "]"


# ---------------------------------------------------------------- variants

def variant_pairs():
    """(name, a, b): scripts that differ only syntactically."""
    p = []

    p.append(("rename_variables",
              HEADER + "x = [1, 2, 3]\ny = [4, 5, 6]\nplt.plot(x, y)\n",
              HEADER + "days = [1, 2, 3]\ntemps = [4, 5, 6]\nplt.plot(days, temps)\n"))
    p.append(("literal_vs_variable",
              HEADER + "plt.plot([1, 2, 3], [4, 5, 6])\n",
              HEADER + "xs = [1, 2, 3]\nys = [4, 5, 6]\nplt.plot(xs, ys)\n"))
    p.append(("reorder_assignments",
              HEADER + "a = [3, 1, 2]\nb = ['p', 'q', 'r']\nplt.bar(b, a)\nplt.title('Sales')\n",
              HEADER + "b = ['p', 'q', 'r']\na = [3, 1, 2]\nplt.bar(b, a)\nplt.title('Sales')\n"))
    p.append(("reorder_text_calls",
              HEADER + "plt.plot([1, 2], [3, 4])\nplt.title('T')\nplt.xlabel('x')\nplt.ylabel('y')\n",
              HEADER + "plt.ylabel('y')\nplt.xlabel('x')\nplt.plot([1, 2], [3, 4])\nplt.title('T')\n"))
    p.append(("import_alias",
              "import matplotlib.pyplot as plt\nplt.scatter([1, 2, 3], [3, 2, 1])\n",
              "from matplotlib import pyplot as mp\nmp.scatter([1, 2, 3], [3, 2, 1])\n"))
    p.append(("pyplot_vs_axes",
              HEADER + "plt.plot([0, 1, 2], [2, 3, 5])\nplt.title('Growth')\nplt.xlabel('t')\n",
              HEADER + "fig, ax = plt.subplots()\nax.plot([0, 1, 2], [2, 3, 5])\nax.set_title('Growth')\nax.set_xlabel('t')\n"))
    p.append(("quote_style",
              HEADER + "plt.bar(['a', 'b'], [1, 2])\nplt.title('Quarterly')\n",
              HEADER + 'plt.bar(["a", "b"], [1, 2])\nplt.title("Quarterly")\n'))
    p.append(("int_vs_float_literals",
              HEADER + "plt.plot([1, 2, 3], [10, 20, 30])\n",
              HEADER + "plt.plot([1.0, 2.0, 3.0], [10.0, 20.0, 30.0])\n"))
    p.append(("tuple_vs_list",
              HEADER + "plt.plot([1, 2, 3], [7, 8, 9])\n",
              HEADER + "plt.plot((1, 2, 3), (7, 8, 9))\n"))
    p.append(("numpy_array_wrapper",
              HEADER + "import numpy as np\nplt.plot([1, 2, 3], [2, 4, 8])\n",
              HEADER + "import numpy as np\nx = np.array([1, 2, 3])\ny = np.array([2, 4, 8])\nplt.plot(x, y)\n"))
    p.append(("range_vs_list",
              HEADER + "plt.plot([0, 1, 2, 3], [5, 6, 7, 8])\n",
              HEADER + "plt.plot(range(4), [5, 6, 7, 8])\n"))
    p.append(("comments_and_blank_lines",
              HEADER + "plt.pie([30, 70], labels=['yes', 'no'])\n",
              HEADER + "\n# share of answers\n\nplt.pie([30, 70],   labels=['yes', 'no'])  # two wedges\n\n"))
    p.append(("keyword_order",
              HEADER + "plt.plot([1, 2], [3, 4], color='red', label='s1', linewidth=2)\nplt.legend()\n",
              HEADER + "plt.plot([1, 2], [3, 4], linewidth=2, label='s1', color='red')\nplt.legend()\n"))
    p.append(("semicolons",
              HEADER + "x = [1, 2]\ny = [5, 6]\nplt.plot(x, y)\n",
              HEADER + "x = [1, 2]; y = [5, 6]; plt.plot(x, y)\n"))
    p.append(("line_continuation",
              HEADER + "plt.bar(['a', 'b', 'c'], [4, 5, 6])\n",
              HEADER + "plt.bar(['a', 'b', 'c'],\n        [4,\n         5,\n         6])\n"))
    p.append(("dict_key_order",
              HEADER + "d = {'a': 3, 'b': 5, 'c': 1}\nplt.bar(list(d.keys()), list(d.values()))\n",
              HEADER + "d = {'b': 5, 'c': 1, 'a': 3}\nplt.bar(list(d.keys()), list(d.values()))\n"))
    p.append(("subplots_rename_axes",
              HEADER + "fig, axs = plt.subplots(2, 1)\naxs[0].bar(['a', 'b'], [1, 2])\naxs[1].plot([1, 2], [3, 4])\n",
              HEADER + "figure, panels = plt.subplots(2, 1)\npanels[0].bar(['a', 'b'], [1, 2])\npanels[1].plot([1, 2], [3, 4])\n"))
    p.append(("subplots_call_order",
              HEADER + "fig, axs = plt.subplots(1, 2)\naxs[0].plot([1, 2], [3, 4])\naxs[1].scatter([1, 2], [5, 6])\n",
              HEADER + "fig, axs = plt.subplots(1, 2)\naxs[1].scatter([1, 2], [5, 6])\naxs[0].plot([1, 2], [3, 4])\n"))
    p.append(("subplot_vs_subplots",
              HEADER + "fig, (a1, a2) = plt.subplots(1, 2)\na1.plot([1, 2], [2, 1])\na2.bar(['x', 'y'], [3, 4])\n",
              HEADER + "plt.subplot(1, 2, 1)\nplt.plot([1, 2], [2, 1])\nplt.subplot(1, 2, 2)\nplt.bar(['x', 'y'], [3, 4])\n"))
    p.append(("figure_add_subplot",
              HEADER + "fig, ax = plt.subplots()\nax.barh(['a', 'b'], [2, 3])\n",
              HEADER + "fig = plt.figure(figsize=(4, 3))\nax = fig.add_subplot(111)\nax.barh(['a', 'b'], [2, 3])\n"))
    p.append(("style_only_changes",
              HEADER + "plt.plot([1, 2, 3], [1, 4, 9])\n",
              HEADER + "plt.style.use('ggplot')\nplt.figure(figsize=(6, 4))\nplt.plot([1, 2, 3], [1, 4, 9], 'r--')\nplt.grid(True)\nplt.tight_layout()\nplt.show()\n"))
    p.append(("hist_alias",
              HEADER + "plt.hist([1, 2, 2, 3, 3, 3])\n",
              "import matplotlib.pyplot as pp\nvalues = [1, 2, 2, 3, 3, 3]\npp.hist(values)\n"))
    p.append(("negative_and_exponent",
              HEADER + "plt.plot([1, 2], [-0.5, 1500])\n",
              HEADER + "plt.plot([1, 2], [-5e-1, 1.5e3])\n"))
    p.append(("legend_labels",
              HEADER + "plt.plot([1, 2], [1, 2], label='up')\nplt.plot([1, 2], [2, 1], label='down')\nplt.legend()\n",
              HEADER + "up = [1, 2]\ndown = [2, 1]\nt = [1, 2]\nplt.plot(t, up, label='up')\nplt.plot(t, down, label='down')\nplt.legend(loc='best')\n"))
    return p


# ------------------------------------------------------------ filter corpus

TYPE_CALLS = {
    "line": "plot",
    "bar": "bar",
    "scatter": "scatter",
    "pie": "pie",
    "histogram": "hist",
    "barh": "barh",
}


def flat_script(rng, ctype, style):
    n = rng.randint(3, 7)
    ys = [rng.randint(1, 90) for _ in range(n)]
    cats = [chr(ord("a") + k) for k in range(n)]
    title = rng.choice(["Revenue", "Visitors", "Rainfall", "Scores", "Output", "Usage"])
    call = TYPE_CALLS[ctype]
    if ctype == "pie":
        body = f"plt.pie({fmt_list(ys)}, labels={fmt_list(cats)})\n"
    elif ctype == "histogram":
        body = f"plt.hist({fmt_list(ys)}, bins=5)\n"
    elif style == 0:
        body = f"plt.{call}({fmt_list(cats if ctype in ('bar', 'barh') else list(range(n)))}, {fmt_list(ys)})\n"
    elif style == 1:
        xs = cats if ctype in ("bar", "barh") else list(range(n))
        body = f"x = {fmt_list(xs)}\ny = {fmt_list(ys)}\nplt.{call}(x, y)\n"
    else:
        d = {c: v for c, v in zip(cats, ys)}
        body = f"data = {json.dumps(d)}\nplt.{call}(list(data.keys()), list(data.values()))\n"
    return HEADER + body + f"plt.title({title!r})\n"


def multi_script(rng):
    n = rng.randint(3, 5)
    a = [rng.randint(1, 50) for _ in range(n)]
    b = [rng.randint(1, 50) for _ in range(n)]
    cats = [chr(ord("a") + k) for k in range(n)]
    return (HEADER + "fig, ax = plt.subplots()\n"
            f"ax.bar({fmt_list(cats)}, {fmt_list(a)})\n"
            f"ax2 = ax.twinx()\nax2.plot({fmt_list(cats)}, {fmt_list(b)})\n")


def nested_script(rng, k):
    if k % 2 == 0:
        rows = [[rng.randint(1, 9) for _ in range(3)] for _ in range(3)]
        return HEADER + f"grid = {json.dumps(rows)}\nplt.plot(grid[0], grid[1])\n"
    d = {"north": {"q1": rng.randint(1, 9), "q2": rng.randint(1, 9)},
         "south": {"q1": rng.randint(1, 9), "q2": rng.randint(1, 9)}}
    return HEADER + f"sales = {json.dumps(d)}\nplt.bar(['q1', 'q2'], [1, 2])\n"


def opaque_script(rng, k):
    if k % 2 == 0:
        return HEADER + f"import numpy as np\nvals = np.random.rand({rng.randint(5, 20)})\nplt.plot(vals)\n"
    return HEADER + "import pandas as pd\ndf = pd.read_csv('data.csv')\nplt.scatter(df['a'], df['b'])\n"


def filter_corpus():
    rng = random.Random(20240601)
    records = []  # (id, code, construction)
    plan = (["line"] * 50 + ["bar"] * 40 + ["scatter"] * 25 + ["pie"] * 15 + ["histogram"] * 10 + ["barh"] * 10)
    kinds = [("flat", t) for t in plan]
    kinds += [("multi", None)] * 10
    kinds += [("nested", None)] * 20
    kinds += [("opaque", None)] * 10
    kinds += [("parse", None)] * 5
    kinds += [("noplot", None)] * 5
    kinds += [("other", None)] * 3
    # 203 planned; trim three flat line charts to land on 200.
    kinds.remove(("flat", "line"))
    kinds.remove(("flat", "line"))
    kinds.remove(("flat", "line"))
    rng.shuffle(kinds)
    assert len(kinds) == 200, len(kinds)

    for i, (kind, ctype) in enumerate(kinds):
        rid = f"rec{i:03d}"
        if kind == "flat":
            code = flat_script(rng, ctype, i % 3)
            info = {"format": "flat_ok", "types": [ctype]}
        elif kind == "multi":
            code = multi_script(rng)
            info = {"format": "flat_ok", "types": ["bar", "line"]}
        elif kind == "nested":
            code = nested_script(rng, i)
            info = {"format": "nested", "types": None}
        elif kind == "opaque":
            code = opaque_script(rng, i)
            info = {"format": "non_extractable", "types": None}
        elif kind == "parse":
            code = HEADER + f"plt.plot([1, 2, 3], [4, 5, {i}]\nplt.title('unbalanced')\n"
            info = {"format": "parse_error", "types": None}
        elif kind == "noplot":
            code = HEADER + f"vals = [1, 2, {i}]\nprint(sum(vals))\nplt.show()\n"
            info = {"format": "flat_ok", "types": []}
        else:
            code = HEADER + f"fig, ax = plt.subplots()\nax.custom_glyphs([1, 2, {i}])\n"
            info = {"format": "flat_ok", "types": ["other"]}
        records.append((rid, code, info))

    # Quality scores: most above threshold, a band right at it.
    scores = {}
    for rid, _, _ in records:
        r = rng.random()
        if r < 0.1:
            q = 0.7
        elif r < 0.2:
            q = 0.69
        elif r < 0.3:
            q = round(rng.uniform(0.1, 0.6), 2)
        else:
            q = round(rng.uniform(0.71, 1.0), 2)
        scores[rid] = q

    target_size = 120
    per_type = {"pie": 5}
    threshold = 0.7

    # Expected decisions, straight from the construction.
    survivors = [(rid, info) for rid, _, info in records if info["format"] == "flat_ok"]
    distinct = sorted({t for _, info in survivors for t in info["types"]})
    default_cap = math.ceil(target_size / len(distinct))
    counts = {}
    labels = {}
    for rid, _, info in records:
        if info["format"] == "parse_error":
            labels[rid] = {"verdict": "drop", "stage": "data_format", "reason": "parse"}
        elif info["format"] != "flat_ok":
            labels[rid] = {"verdict": "drop", "stage": "data_format", "reason": "data_format"}
    for rid, info in survivors:
        types = sorted(set(info["types"]))
        if not types:
            labels[rid] = {"verdict": "drop", "stage": "chart_type", "reason": "no_chart_type"}
            continue
        if any(counts.get(t, 0) >= per_type.get(t, default_cap) for t in types):
            labels[rid] = {"verdict": "drop", "stage": "chart_type", "reason": "type_cap"}
            continue
        for t in types:
            counts[t] = counts.get(t, 0) + 1
        if types == ["other"]:
            labels[rid] = {"verdict": "drop", "stage": "visual_quality", "reason": "render"}
        elif scores[rid] >= threshold:
            labels[rid] = {"verdict": "keep", "stage": "visual_quality", "reason": "ok"}
        else:
            labels[rid] = {"verdict": "drop", "stage": "visual_quality", "reason": "quality"}

    config = (
        "# Caps and threshold for the 200-record filter fixture.\n"
        "[filter]\n"
        f"target_size = {target_size}\n"
        f"threshold = {threshold}\n"
        "cap.pie = 5\n"
    )
    return records, scores, labels, config


# -------------------------------------------------------------- batch eval

def batch_fixture():
    refs, cands = [], []
    rng = random.Random(99)
    for i in range(10):
        n = 4
        ys = [rng.randint(1, 20) for _ in range(n)]
        ref = HEADER + f"plt.plot({fmt_list(list(range(n)))}, {fmt_list(ys)})\nplt.title('Series {i}')\n"
        if i in (2, 5, 8):
            bad = {
                2: HEADER + "plt.plot([0, 1, 2, 3], [1, 2, 3, 4]\n",
                5: HEADER + "values = [1, 2, 3]\nprint(values)\n",
                8: HEADER + "fig, ax = plt.subplots()\nax.sparkle([1, 2, 3])\n",
            }[i]
            cand = bad
        else:
            noisy = [v * (1.0 + (0.02 if k % 2 else -0.03)) for k, v in enumerate(ys)]
            cand = HEADER + f"plt.plot({fmt_list(list(range(n)))}, {fmt_list([round(v, 3) for v in noisy])})\nplt.title('Series {i}')\n"
        refs.append({"id": f"s{i:02d}", "code": ref, "image": None, "meta": {"source": "fixture"}})
        cands.append({"id": f"s{i:02d}", "code": cand, "image": None, "meta": {"source": "fixture"}})
    return refs, cands


# ---------------------------------------------------------------- toy task

def toy_task():
    """Prompts with a candidate pool each: the reference itself, near
    misses, a visual decoy (data rescaled so the schematic render matches
    but the values do not), and broken scripts."""
    rng = random.Random(7)
    prompts = []
    kinds = ["plot", "bar", "scatter", "barh"]
    for i in range(6):
        kind = kinds[i % len(kinds)]
        n = 5
        ys = [rng.randint(2, 30) for _ in range(n)]
        xs = list(range(n)) if kind in ("plot", "scatter") else [chr(ord("a") + k) for k in range(n)]
        title = f"Metric {i}"

        def script(call, values, ttl=title, xlabel="time"):
            return (HEADER + f"plt.{call}({fmt_list(xs)}, {fmt_list(values)})\n"
                    f"plt.title({ttl!r})\nplt.xlabel({xlabel!r})\n")

        other_call = {"plot": "scatter", "bar": "barh", "scatter": "plot", "barh": "bar"}[kind]
        pool = [
            script(kind, ys),                                    # reference
            script(kind, ys, ttl=f"Metrc {i}"),                  # title typo
            script(kind, [v * 3 for v in ys]),                   # visual decoy
            script(kind, [v * 2 for v in ys], ttl="Chart"),      # visual decoy, wrong title
            script(other_call, ys),                              # wrong type
            script(kind, [v + 7 for v in ys], xlabel="t"),       # shifted data
            HEADER + f"plt.{kind}({fmt_list(xs)}, {fmt_list(ys)}\n",   # parse error
            HEADER + f"vals = {fmt_list(ys)}\nprint(vals)\n",          # no plot
        ]
        prompts.append({"id": f"toy{i}", "reference": pool[0], "candidates": pool})
    return {"prompts": prompts}


def main():
    OUT.mkdir(parents=True, exist_ok=True)

    pairs = [{"name": n, "a": a, "b": b} for n, a, b in variant_pairs()]
    (OUT / "variant_pairs.json").write_text(json.dumps(pairs, indent=1) + "\n")

    records, scores, labels, config = filter_corpus()
    with (OUT / "filter_corpus.jsonl").open("w") as f:
        for rid, code, _ in records:
            f.write(json.dumps({"id": rid, "code": code, "image": None, "meta": {"source": "fixture"}}) + "\n")
    (OUT / "filter_judge_scores.json").write_text(json.dumps(scores, indent=1, sort_keys=True) + "\n")
    (OUT / "filter_labels.json").write_text(json.dumps(labels, indent=1, sort_keys=True) + "\n")
    (OUT / "filter_config.toml").write_text(config)

    refs, cands = batch_fixture()
    with (OUT / "batch_refs.jsonl").open("w") as f:
        for r in refs:
            f.write(json.dumps(r) + "\n")
    with (OUT / "batch_cands.jsonl").open("w") as f:
        for r in cands:
            f.write(json.dumps(r) + "\n")

    (OUT / "toy_task.json").write_text(json.dumps(toy_task(), indent=1) + "\n")


if __name__ == "__main__":
    main()
