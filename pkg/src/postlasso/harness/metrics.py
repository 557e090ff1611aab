"""Coverage, power and size summaries over simulated datasets."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SUBSETS = ("A", "A0_in_A", "A0c_in_A")


@dataclass
class DatasetRecord:
    """One replicate.  ``nu`` is ``X_A^+ mu0`` for the realized ``A``."""

    dataset_id: int
    A: np.ndarray
    A0: np.ndarray
    nu: np.ndarray
    intervals: dict = field(default_factory=dict)
    sets: list = field(default_factory=list)
    status: str = "ok"
    lam: float = float("nan")

    def subset_mask(self, name):
        in_a0 = np.isin(self.A, self.A0)
        if name == "A":
            return np.ones(self.A.size, dtype=bool)
        if name == "A0_in_A":
            return in_a0
        if name == "A0c_in_A":
            return ~in_a0
        raise ValueError(name)


@dataclass
class SetRecord:
    kind: str
    B: tuple
    delta: object
    radius: float
    covered: bool
    excludes_zero: bool
    diameter: float
    log_volume: float

    @property
    def m(self):
        return len(self.B)

    @property
    def volume_star(self):
        """``Volume ** (1/m)``; for the joint set ``m = |A|``."""
        return float(np.exp(self.log_volume / self.m))


def _rate(num, den):
    return num / den if den else None


@dataclass
class SimulationReport:
    replicates: int
    used: int
    status_counts: dict
    coverage: dict
    power: dict
    pairs: dict
    length_pooled: dict
    length_mean_of_means: dict
    per_dataset_coverage: dict
    sets: dict = field(default_factory=dict)

    def to_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def compute_metrics(records, variants=None):
    """Pool (dataset, j) pairs per variant and index subset.

    Coverage counts ``nu_j`` inside the interval; power counts ``0`` outside.
    Datasets whose status is not ``ok`` are excluded and tallied.
    """
    records = list(records)
    ok = [r for r in records if r.status == "ok"]
    status_counts = {}
    for r in records:
        status_counts[r.status] = status_counts.get(r.status, 0) + 1
    if variants is None:
        variants = sorted({v for r in ok for v in r.intervals})
    coverage, power, pairs = {}, {}, {}
    length_pooled, length_mom, per_ds = {}, {}, {}
    for v in variants:
        hits = {s: 0 for s in SUBSETS}
        rej = {s: 0 for s in SUBSETS}
        cnt = {s: 0 for s in SUBSETS}
        lengths, means, ds_cov = [], [], []
        for r in ok:
            ivs = r.intervals.get(v)
            if not ivs:
                continue
            lo = np.array([iv.lower for iv in ivs])
            hi = np.array([iv.upper for iv in ivs])
            cov = (lo <= r.nu) & (r.nu <= hi)
            rj = (lo > 0) | (hi < 0)
            for s in SUBSETS:
                mask = r.subset_mask(s)
                hits[s] += int(cov[mask].sum())
                rej[s] += int(rj[mask].sum())
                cnt[s] += int(mask.sum())
            lengths.extend((hi - lo).tolist())
            means.append(float(np.mean(hi - lo)))
            ds_cov.append(float(cov.mean()))
        coverage[v] = {s: _rate(hits[s], cnt[s]) for s in SUBSETS}
        power[v] = {s: _rate(rej[s], cnt[s]) for s in SUBSETS}
        pairs[v] = cnt
        length_pooled[v] = float(np.mean(lengths)) if lengths else None
        length_mom[v] = float(np.mean(means)) if means else None
        per_ds[v] = ds_cov
    return SimulationReport(
        replicates=len(records), used=len(ok), status_counts=status_counts,
        coverage=coverage, power=power, pairs=pairs, length_pooled=length_pooled,
        length_mean_of_means=length_mom, per_dataset_coverage=per_ds,
        sets=set_metrics(ok))


def set_metrics(records):
    """Average set outcomes within each (kind, delta) group over all B."""
    groups = {}
    for r in records:
        for s in r.sets:
            groups.setdefault(f"{s.kind}:{s.delta}", []).append(s)
    out = {}
    for key in sorted(groups):
        ss = groups[key]
        out[key] = {
            "count": len(ss),
            "coverage": float(np.mean([s.covered for s in ss])),
            "power": float(np.mean([s.excludes_zero for s in ss])),
            "mean_diameter": float(np.mean([s.diameter for s in ss])),
            "mean_volume_star": float(np.mean([s.volume_star for s in ss])),
        }
    return out
