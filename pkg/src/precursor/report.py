"""Result tables (CSV + aligned text) and a small static SVG bar chart."""
import csv
import io
from xml.sax.saxutils import escape

import numpy as np

MODEL_ORDER = ("XGB", "RF", "SVM", "XGB+RF", "Random")
FAMILY_LABEL = {"gbm": "XGB", "forest": "RF", "svm": "SVM", "stack": "XGB+RF", "random": "Random"}
METRICS = (("precision", "prec."), ("recall", "rec."), ("f1", "F1"))


def _ordered(results):
    rank = {m: i for i, m in enumerate(MODEL_ORDER)}
    return sorted(results, key=lambda r: (rank.get(r[0], len(rank)), r[0]))


def best_f1_columns(results):
    """Label of the model with the highest F1 per category column plus the mean column."""
    best = []
    n_cols = len(results[0][1].f1) + 1
    for c in range(n_cols):
        vals = [(s.f1[c] if c < len(s.f1) else s.macro_f1) for _, s in results]
        best.append(results[int(np.argmax(vals))][0])
    return best


def metrics_table(outcome, categories, results, header_lines=()):
    """Render ``[(model label, ClassScores), ...]`` as (csv text, aligned text).

    Rows are model x {prec., rec., F1}; columns are categories then the mean.
    Scores are percentages with two decimals; the best F1 of every column is
    starred in the text table and named in a trailing CSV row.
    """
    results = _ordered(results)
    best = best_f1_columns(results)
    cols = list(categories) + ["mean"]
    buf = io.StringIO()
    for line in header_lines:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["model", "metric"] + cols)
    body = []
    for label, s in results:
        for attr, short in METRICS:
            vals = list(getattr(s, attr)) + [float(getattr(s, attr).mean())]
            w.writerow([label, short] + [f"{100 * v:.2f}" for v in vals])
            cells = []
            for c, v in enumerate(vals):
                star = "*" if attr == "f1" and best[c] == label else ""
                cells.append(f"{100 * v:.2f}{star}")
            body.append([label, short] + cells)
    w.writerow(["best", "F1"] + best)
    head = [f"{outcome}", ""] + cols
    widths = [max(len(str(r[i])) for r in [head] + body) for i in range(len(head))]
    lines = [f"# {h}" for h in header_lines]
    fmt = lambda r: "  ".join(str(x).rjust(wd) if i > 1 else str(x).ljust(wd)  # noqa: E731
                              for i, (x, wd) in enumerate(zip(r, widths)))
    lines.append(fmt(head))
    lines.append("-" * len(lines[-1]))
    lines.extend(fmt(r) for r in body)
    return buf.getvalue(), "\n".join(lines) + "\n"


def contributions_csv(rows):
    """``rows``: (category, attribute, coefficient, rank) tuples."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["category", "attribute", "coefficient", "rank"])
    for cat, attr, coef, rank in rows:
        w.writerow([cat, attr, f"{coef:.6g}", rank])
    return buf.getvalue()


def barplot_svg(title, labels, values, width=560, bar_h=16, gap=4, label_w=200):
    """Horizontal bars around a zero line; values are scaled by their max magnitude."""
    values = np.asarray(values, dtype=np.float64)
    top = float(np.abs(values).max()) if values.size else 0.0
    scale = (width - label_w - 20) / 2 / top if top > 0 else 0.0
    zero = label_w + (width - label_w - 20) / 2
    height = 30 + len(labels) * (bar_h + gap) + 10
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'font-family="sans-serif" font-size="11">',
           f'<text x="{width / 2:.1f}" y="16" text-anchor="middle" font-size="13">{escape(title)}</text>']
    for i, (lab, v) in enumerate(zip(labels, values)):
        y = 28 + i * (bar_h + gap)
        x0 = zero if v >= 0 else zero + v * scale
        color = "#3b6ea5" if v >= 0 else "#b5523b"
        out.append(f'<text x="{label_w - 6}" y="{y + bar_h - 4}" text-anchor="end">{escape(str(lab))}</text>')
        out.append(f'<rect x="{x0:.2f}" y="{y}" width="{abs(v) * scale:.2f}" height="{bar_h}" fill="{color}"/>')
    out.append(f'<line x1="{zero:.2f}" y1="24" x2="{zero:.2f}" y2="{height - 8}" stroke="#333"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
