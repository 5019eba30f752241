"""AUC, parameter counting and the side-by-side model comparison."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .errors import UndefinedMetricError


def auc(scores, labels) -> float:
    """Mann-Whitney AUC with average ranks for ties."""
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel().astype(bool)
    if scores.shape != labels.shape:
        raise ValueError(f"{scores.size} scores but {labels.size} labels")
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError(f"AUC undefined with {n_pos} positives and {n_neg} negatives")
    ranks = rankdata(scores, method="average")
    return float((ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


@dataclass
class ParamReport:
    groups: dict[str, int] = field(default_factory=dict)

    @property
    def total(self) -> int:
        return sum(self.groups.values())

    def __str__(self):
        width = max([len(g) for g in self.groups] + [5])
        lines = [f"{g.ljust(width)}  {n:>10d}" for g, n in self.groups.items()]
        lines.append(f"{'total'.ljust(width)}  {self.total:>10d}")
        return "\n".join(lines)


def count_params(model) -> ParamReport:
    report = ParamReport()
    for group, names in model.groups().items():
        report.groups[group] = int(sum(model.params[n].size for n in names))
    return report


def task_aucs(model, ids, labels, batch_size: int = 4096) -> list[float]:
    logits = model.predict(ids, batch_size=batch_size)
    return [auc(logits[:, t], labels[:, t]) for t in range(logits.shape[1])]


@dataclass
class CompareReport:
    rows: list[tuple[str, str, float, int]]   # (model, task, auc, params)
    ratio: float

    def table(self) -> str:
        lines = [f"{'model':<24}{'task':<14}{'auc':>10}{'params':>12}"]
        for model, task, a, n in self.rows:
            lines.append(f"{model:<24}{task:<14}{a:>10.4f}{n:>12d}")
        lines.append(f"param ratio (dcrnn / mmoe): {self.ratio:.4f}")
        return "\n".join(lines) + "\n"

    def csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["model", "task", "auc", "params"])
        for model, task, a, n in self.rows:
            writer.writerow([model, task, repr(a), n])
        return buf.getvalue()

    def write(self, stem) -> None:
        with open(f"{stem}.txt", "w") as fh:
            fh.write(self.table())
        with open(f"{stem}.csv", "w") as fh:
            fh.write(self.csv())


def compare_report(dcrnn, mmoe, data) -> CompareReport:
    names = list(data.task_names)
    rows = []
    totals = []
    for label, model in (("dcrnn", dcrnn), ("mmoe", mmoe)):
        name = f"{label}:{model.config.name}"
        total = count_params(model).total
        totals.append(total)
        for task, a in zip(names, task_aucs(model, data.ids, data.labels)):
            rows.append((name, task, a, total))
    return CompareReport(rows, totals[0] / totals[1])
