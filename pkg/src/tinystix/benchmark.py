"""Size-reduction measurement: s0 (minified JSON), s1 (integer-mapped JSON),
s2 (tinySTIX CBOR body), aggregated per dataset and per object type.
"""

from __future__ import annotations

import csv
import io
import logging
import time
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .codec import PARITY, apply_integer_mapping, encode_cbor, mapped_json
from .errors import EmptyCorpus
from .ingest import CORPORA, CorpusSnapshot, load_corpus
from .model import StixObject, canonical_json
from .vocab import Dictionary

log = logging.getLogger(__name__)

AGGREGATE = "aggregate"
MEAN = "mean"
MODES = (AGGREGATE, MEAN)

DISPLAY_NAMES = {"circl": "CIRCL.LU", "enterprise": "Enterprise", "ics": "ICS", "mobile": "Mobile"}
ROW_LABELS = ("Integer value keys", "CBOR representation", "Total reduction")

# published reference values, printed next to the measured ones
REFERENCE = {
    "circl": (21.82, 3.52, 24.58),
    "enterprise": (43.26, 9.74, 48.79),
    "ics": (42.71, 9.75, 48.29),
    "mobile": (46.55, 11.00, 52.43),
}


@dataclass(frozen=True)
class SizeTriple:
    s0: int
    s1: int
    s2: int
    object_type: str
    object_id: str = ""
    covered: bool = True

    @property
    def ordered(self) -> bool:
        return self.s2 <= self.s1 <= self.s0


def _all_keys_coded(tree) -> bool:
    if isinstance(tree, dict):
        return all(isinstance(k, int) and _all_keys_coded(v) for k, v in tree.items())
    if isinstance(tree, list):
        return all(_all_keys_coded(v) for v in tree)
    return True


def uncoded_keys(tree, out: set | None = None) -> set:
    out = set() if out is None else out
    if isinstance(tree, dict):
        for k, v in tree.items():
            if isinstance(k, str):
                out.add(k)
            uncoded_keys(v, out)
    elif isinstance(tree, list):
        for v in tree:
            uncoded_keys(v, out)
    return out


def measure_object(obj: StixObject, d: Dictionary, profile: str = PARITY) -> SizeTriple:
    mapped = apply_integer_mapping(obj, d)
    s0 = len(canonical_json(obj))
    s1 = len(mapped_json(mapped))
    s2 = len(encode_cbor(mapped, d.version_id, profile, d).body)
    return SizeTriple(s0, s1, s2, obj.object_type, str(obj.id), _all_keys_coded(mapped))


@dataclass(frozen=True)
class Reduction:
    """Reductions in percent for one group of objects."""

    n: int
    s0: int
    s1: int
    s2: int
    r1: float
    r2: float
    r_total: float
    mean_r1: float
    mean_r2: float
    mean_r_total: float

    def rows(self, mode: str = AGGREGATE) -> tuple:
        if mode == AGGREGATE:
            return (self.r1, self.r2, self.r_total)
        return (self.mean_r1, self.mean_r2, self.mean_r_total)

    def composition_error(self) -> float:
        """|r_total - (1 - (1-r1)(1-r2))| in aggregate mode, as a fraction."""
        r1, r2, rt = self.r1 / 100, self.r2 / 100, self.r_total / 100
        return abs(rt - (1 - (1 - r1) * (1 - r2)))


def aggregate(triples: Sequence[SizeTriple], mode: str = AGGREGATE) -> Reduction:
    """Both aggregation modes are always computed; *mode* only validates the request."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    triples = list(triples)
    if not triples:
        raise EmptyCorpus("no objects to aggregate")
    S0 = sum(t.s0 for t in triples)
    S1 = sum(t.s1 for t in triples)
    S2 = sum(t.s2 for t in triples)
    n = len(triples)

    def mean(xs):
        return 100.0 * sum(xs) / n

    return Reduction(
        n, S0, S1, S2,
        100.0 * (1 - S1 / S0), 100.0 * (1 - S2 / S1), 100.0 * (1 - S2 / S0),
        mean([1 - t.s1 / t.s0 for t in triples]),
        mean([1 - t.s2 / t.s1 for t in triples]),
        mean([1 - t.s2 / t.s0 for t in triples]),
    )


@dataclass
class DatasetResult:
    name: str
    source_version: str
    overall: Reduction
    per_type: dict
    violations: list = field(default_factory=list)
    uncovered_keys: list = field(default_factory=list)
    seconds: float = 0.0


@dataclass
class ReductionReport:
    datasets: list
    mode: str = AGGREGATE
    dict_version: int = 1

    def dataset(self, name: str) -> DatasetResult:
        for ds in self.datasets:
            if ds.name == name:
                return ds
        raise KeyError(name)


def size_violations(triples: Iterable[SizeTriple]) -> list:
    """Dictionary-covered objects breaking s2 <= s1 <= s0."""
    return [t for t in triples if t.covered and not t.ordered]


def measure_snapshot(snapshot: CorpusSnapshot, d: Dictionary) -> list:
    return [measure_object(o, d) for o in snapshot.objects]


def evaluate(snapshot: CorpusSnapshot, d: Dictionary) -> DatasetResult:
    t0 = time.perf_counter()
    triples = measure_snapshot(snapshot, d)
    by_type = defaultdict(list)
    missing: set = set()
    for o, t in zip(snapshot.objects, triples):
        by_type[t.object_type].append(t)
        if not t.covered:
            uncoded_keys(apply_integer_mapping(o, d), missing)
    if missing:
        log.warning("%s: property names outside the dictionary: %s", snapshot.name, sorted(missing))
    return DatasetResult(
        name=snapshot.name,
        source_version=snapshot.source_version,
        overall=aggregate(triples),
        per_type={k: aggregate(v) for k, v in sorted(by_type.items())},
        violations=[(t.object_id, t.s0, t.s1, t.s2) for t in size_violations(triples)],
        uncovered_keys=sorted(missing),
        seconds=time.perf_counter() - t0,
    )


def run_benchmark(corpora: Iterable[str], d: Dictionary, root=None, mode: str = AGGREGATE) -> ReductionReport:
    results = []
    for name in corpora:
        if name not in CORPORA:
            raise ValueError(f"unknown corpus {name!r}; choose from {CORPORA}")
        results.append(evaluate(load_corpus(name, root), d))
    return ReductionReport(results, mode, d.version_id)


# -- rendering --------------------------------------------------------------

def _pct(v: float) -> str:
    return f"{v:.2f}"


def emit_report(report: ReductionReport, fmt: str = "table") -> str:
    if fmt == "csv":
        return _emit_csv(report)
    if fmt != "table":
        raise ValueError("format must be 'table' or 'csv'")
    mode = report.mode
    names = [DISPLAY_NAMES.get(ds.name, ds.name) for ds in report.datasets]
    width = max(len(r) for r in ROW_LABELS) + 2
    col = max([10] + [len(n) + 2 for n in names])
    out = io.StringIO()
    out.write(f"Size reduction (%), {mode} mode, dictionary v{report.dict_version}\n")
    out.write(" " * width + "".join(n.rjust(col) for n in names) + "\n")
    for i, label in enumerate(ROW_LABELS):
        out.write(label.ljust(width))
        out.write("".join(_pct(ds.overall.rows(mode)[i]).rjust(col) for ds in report.datasets))
        out.write("\n")
    out.write("\nPublished\n")
    for i, label in enumerate(ROW_LABELS):
        out.write(label.ljust(width))
        out.write("".join((_pct(REFERENCE[ds.name][i]) if ds.name in REFERENCE else "-").rjust(col)
                          for ds in report.datasets))
        out.write("\n")
    other = MEAN if mode == AGGREGATE else AGGREGATE
    out.write(f"\n({other} mode: " + "; ".join(
        f"{DISPLAY_NAMES.get(ds.name, ds.name)} " + "/".join(_pct(v) for v in ds.overall.rows(other))
        for ds in report.datasets) + ")\n")
    for ds in report.datasets:
        out.write(f"\n{DISPLAY_NAMES.get(ds.name, ds.name)}: {ds.overall.n} objects, "
                  f"S0={ds.overall.s0} S1={ds.overall.s1} S2={ds.overall.s2}, "
                  f"source {ds.source_version}\n")
        if len(ds.per_type) > 1:
            out.write(f"  {'type':<24}{'n':>8}{'r1':>9}{'r2':>9}{'total':>9}\n")
            for t, r in ds.per_type.items():
                a, b, c = r.rows(mode)
                out.write(f"  {t:<24}{r.n:>8}{_pct(a):>9}{_pct(b):>9}{_pct(c):>9}\n")
        out.write(f"  size-order violations: {len(ds.violations)}\n")
        if ds.uncovered_keys:
            out.write(f"  keys outside dictionary: {', '.join(ds.uncovered_keys)}\n")
    out.write("\nAggregate mode divides byte totals; mean mode averages per-object ratios.\n")
    return out.getvalue()


_CSV_FIELDS = ("dataset", "type", "source_version", "n", "s0", "s1", "s2",
               "r1", "r2", "r_total", "mean_r1", "mean_r2", "mean_r_total")


def _row(ds: DatasetResult, type_name: str, r: Reduction) -> dict:
    return {
        "dataset": ds.name, "type": type_name, "source_version": ds.source_version,
        "n": r.n, "s0": r.s0, "s1": r.s1, "s2": r.s2,
        "r1": repr(r.r1), "r2": repr(r.r2), "r_total": repr(r.r_total),
        "mean_r1": repr(r.mean_r1), "mean_r2": repr(r.mean_r2), "mean_r_total": repr(r.mean_r_total),
    }


def _emit_csv(report: ReductionReport) -> str:
    out = io.StringIO()
    out.write(f"# mode={report.mode} dict_version={report.dict_version}\n")
    w = csv.DictWriter(out, fieldnames=_CSV_FIELDS, lineterminator="\n")
    w.writeheader()
    for ds in report.datasets:
        w.writerow(_row(ds, "*", ds.overall))
        for t, r in ds.per_type.items():
            w.writerow(_row(ds, t, r))
    return out.getvalue()


def parse_csv(text: str) -> ReductionReport:
    """Inverse of ``emit_report(..., 'csv')`` for the reduction values."""
    lines = text.splitlines()
    mode, dict_version = AGGREGATE, 1
    if lines and lines[0].startswith("#"):
        meta = dict(p.split("=", 1) for p in lines[0][1:].split())
        mode, dict_version = meta.get("mode", AGGREGATE), int(meta.get("dict_version", 1))
        lines = lines[1:]
    datasets: dict = {}
    for row in csv.DictReader(lines):
        r = Reduction(int(row["n"]), int(row["s0"]), int(row["s1"]), int(row["s2"]),
                      float(row["r1"]), float(row["r2"]), float(row["r_total"]),
                      float(row["mean_r1"]), float(row["mean_r2"]), float(row["mean_r_total"]))
        ds = datasets.get(row["dataset"])
        if row["type"] == "*":
            datasets[row["dataset"]] = DatasetResult(row["dataset"], row["source_version"], r, {})
        else:
            ds.per_type[row["type"]] = r
    return ReductionReport(list(datasets.values()), mode, dict_version)
