"""Config-driven simulation runs: intervals, lambda sensitivity, joint sets.

Each replicate draws from its own seed stream ``SeedSequence(seed,
spawn_key=(r,))`` and is cached as one JSON file, so an interrupted run
resumes where it stopped and reruns give byte-identical outputs.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
import yaml

from ..errors import ConfigError, EmptyModel, PostLassoError
from ..inference import (VARIANTS, IntervalResult, build_set,
                         coordinate_selector, parse_delta, run_algorithm1)
from ..lasso import cv_lambda_1se, fit_lasso, lambda_grid
from ..linalg import build_design_context
from ..sampler import default_threads
from .data import DESIGNS, DesignSpec, a0_preset, generate_dataset
from .metrics import DatasetRecord, SetRecord, compute_metrics
from .serialize import dumps, write_csv, write_json

MODES = ("intervals", "lambda_sensitivity", "sets")
CSV_HEADER = ["dataset_id", "j", "variant", "lower", "upper", "covered", "length"]


@dataclass(frozen=True)
class ExperimentConfig:
    mode: str = "intervals"
    design: str = "identity"
    n: int = 50
    p: int = 100
    A0: object = "contiguous"
    a0_size: int = 5
    sigma2: float = 1.0
    alpha: float = 0.05
    K: int = 20
    N: int = 500
    burn_in: int = 1000
    thin: int = 1
    tau_multiplier: float = 2.0
    replicates: int = 20
    seed: int = 0
    # "cv_1se" or a fixed positive value
    lam: object = "cv_1se"
    cv_folds: int = 10
    grid_size: int = 20
    variants: tuple = ("randomized", "conservative")
    set_delta: tuple = (2, "inf")
    set_kinds: tuple = ("pairwise", "joint")
    verify_fraction: float = 0.0
    notes: str = ""

    def support(self):
        if isinstance(self.A0, str):
            return tuple(int(i) for i in a0_preset(self.A0, self.p, self.a0_size))
        return tuple(int(i) for i in self.A0)

    def to_dict(self):
        d = asdict(self)
        d["A0_resolved"] = list(self.support())
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in d.items()}

    def digest(self):
        return hashlib.sha256(dumps(self.to_dict()).encode()).hexdigest()[:16]


# key -> (field name, checker returning the coerced value or raising ValueError)
def _pos_int(v):
    if isinstance(v, bool) or not isinstance(v, int) or v < 1:
        raise ValueError("expected a positive integer")
    return v


def _nonneg_int(v):
    if isinstance(v, bool) or not isinstance(v, int) or v < 0:
        raise ValueError("expected a non-negative integer")
    return v


def _pos_float(v):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not v > 0:
        raise ValueError("expected a positive number")
    return float(v)


def _unit(v):
    v = _pos_float(v)
    if v >= 1:
        raise ValueError("expected a number in (0, 1)")
    return v


def _fraction(v):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not 0 <= v <= 1:
        raise ValueError("expected a number in [0, 1]")
    return float(v)


def _choice(options):
    def check(v):
        if v not in options:
            raise ValueError(f"expected one of {list(options)}")
        return v
    return check


def _a0(v):
    if isinstance(v, str):
        return _choice(("contiguous", "spread"))(v)
    if isinstance(v, list) and all(isinstance(i, int) and i >= 0 for i in v):
        return tuple(v)
    raise ValueError("expected 'contiguous', 'spread' or a list of 0-based indices")


def _lam(v):
    if v == "cv_1se":
        return v
    return _pos_float(v)


def _subset(options):
    def check(v):
        if not isinstance(v, list) or not v:
            raise ValueError("expected a non-empty list")
        for x in v:
            _choice(options)(x)
        return tuple(v)
    return check


def _deltas(v):
    if not isinstance(v, list) or not v:
        raise ValueError("expected a non-empty list")
    out = []
    for x in v:
        d = parse_delta(x)
        out.append(2 if d == 2 else "inf")
    return tuple(out)


def _str(v):
    if not isinstance(v, str):
        raise ValueError("expected a string")
    return v


_KEYS = {
    "mode": ("mode", _choice(MODES)),
    "design": ("design", _choice(DESIGNS)),
    "n": ("n", _pos_int),
    "p": ("p", _pos_int),
    "A0": ("A0", _a0),
    "a0_size": ("a0_size", _pos_int),
    "sigma2": ("sigma2", _pos_float),
    "alpha": ("alpha", _unit),
    "K": ("K", _pos_int),
    "N": ("N", _pos_int),
    "burn_in": ("burn_in", _nonneg_int),
    "thin": ("thin", _pos_int),
    "tau_multiplier": ("tau_multiplier", _pos_float),
    "replicates": ("replicates", _pos_int),
    "seed": ("seed", _nonneg_int),
    "lambda": ("lam", _lam),
    "cv_folds": ("cv_folds", _pos_int),
    "grid_size": ("grid_size", _pos_int),
    "variants": ("variants", _subset(VARIANTS)),
    "set_delta": ("set_delta", _deltas),
    "set_kinds": ("set_kinds", _subset(("pairwise", "joint"))),
    "verify_fraction": ("verify_fraction", _fraction),
    "notes": ("notes", _str),
}


def parse_config(text, source="<config>"):
    """Validate YAML text; errors cite ``source:line``."""
    try:
        root = yaml.compose(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        line = mark.line + 1 if mark is not None else "?"
        raise ConfigError(f"{source}:{line}: invalid YAML ({getattr(e, 'problem', e)})")
    if root is None:
        return ExperimentConfig()
    if not isinstance(root, yaml.MappingNode):
        raise ConfigError(f"{source}:{root.start_mark.line + 1}: top level must be a mapping")
    values = {}
    loader_data = yaml.safe_load(text)
    for key_node, _ in root.value:
        key = key_node.value
        line = key_node.start_mark.line + 1
        if key not in _KEYS:
            raise ConfigError(f"{source}:{line}: unknown key {key!r}")
        name, check = _KEYS[key]
        raw = loader_data[key]
        try:
            values[name] = check(raw)
        except ValueError as e:
            raise ConfigError(f"{source}:{line}: {key}: {e}") from None
    try:
        cfg = ExperimentConfig(**values)
        DesignSpec(kind=cfg.design, n=cfg.n, p=cfg.p, A0=cfg.support(),
                   sigma2=cfg.sigma2)
    except ValueError as e:
        raise ConfigError(f"{source}: {e}") from None
    if cfg.p <= cfg.n:
        raise ConfigError(f"{source}: need p > n")
    if "oracle" in cfg.variants and cfg.mode != "intervals":
        raise ConfigError(f"{source}: oracle variant is only available in intervals mode")
    return cfg


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), source=str(path))


def _streams(cfg, r):
    rep = np.random.SeedSequence(cfg.seed, spawn_key=(r,))
    data_ss, cv_ss, inf_ss = rep.spawn(3)
    return data_ss, int(cv_ss.generate_state(1)[0]), inf_ss


def _dataset(cfg, r):
    data_ss, cv_seed, inf_ss = _streams(cfg, r)
    spec = DesignSpec(kind=cfg.design, n=cfg.n, p=cfg.p, A0=cfg.support(),
                      sigma2=cfg.sigma2, seed=data_ss)
    data = generate_dataset(spec)
    return data, build_design_context(data.X), cv_seed, inf_ss


def _interval_payload(ivs):
    return [[iv.lower, iv.upper] for iv in ivs]


def _infer(cfg, ctx, y, mu0, lam, inf_ss, variants):
    """One inference call; returns (payload dict, InferenceResult or None)."""
    try:
        sol = fit_lasso(ctx, y, lam)
        res = run_algorithm1(
            ctx, y, lam, cfg.sigma2, cfg.alpha, cfg.K, cfg.N, variants=variants,
            mu_true=mu0, seed=inf_ss, burn_in=cfg.burn_in, thin=cfg.thin,
            tau_multiplier=cfg.tau_multiplier, verify_fraction=cfg.verify_fraction,
            threads=1, solution=sol)
    except EmptyModel:
        return {"status": "empty_model", "lam": lam, "A": []}, None
    except PostLassoError as e:
        A = sol.A.tolist() if "sol" in locals() else []
        return {"status": type(e).__name__, "lam": lam, "A": A}, None
    A = res.A
    nu = np.linalg.lstsq(ctx.X[:, A], mu0, rcond=None)[0]
    payload = {
        "status": "ok", "lam": lam, "A": A.tolist(), "nu": nu.tolist(),
        "intervals": {v: _interval_payload(res.intervals[v]) for v in variants},
        "acceptance_b_mean": float(np.mean(res.diagnostics["chains"]["acceptance_b"])),
    }
    if "selection_check" in res.diagnostics:
        payload["selection_check"] = res.diagnostics["selection_check"]
    return payload, res


def _set_payload(cfg, res, nu):
    q = res.geometry.q
    out = []
    Bs = []
    if "pairwise" in cfg.set_kinds and q >= 2:
        Bs += [("pairwise", B) for B in itertools.combinations(range(q), 2)]
    if "joint" in cfg.set_kinds:
        Bs.append(("joint", tuple(range(q))))
    for delta in cfg.set_delta:
        for kind, B in Bs:
            H = coordinate_selector(q, B)
            s = res.build_set(H, delta)
            out.append({"kind": kind, "B": list(B), "delta": delta,
                        "radius": s.radius, "covered": s.contains(H @ nu),
                        "excludes_zero": s.excludes_zero(),
                        "diameter": s.diameter, "log_volume": s.log_volume})
    return out


def run_replicate(cfg, r):
    """Compute one replicate's JSON-ready payload."""
    data, ctx, cv_seed, inf_ss = _dataset(cfg, r)
    base = {"dataset_id": r, "A0": list(cfg.support())}
    if cfg.mode == "lambda_sensitivity":
        grid = lambda_grid(ctx, data.y, cfg.grid_size)
        points = []
        for i, (lam, ss) in enumerate(zip(grid, inf_ss.spawn(len(grid)))):
            payload, _ = _infer(cfg, ctx, data.y, data.mu0, lam, ss, cfg.variants)
            payload["lambda_index"] = i
            points.append(payload)
        return {**base, "points": points}
    lam = (cv_lambda_1se(ctx, data.y, folds=cfg.cv_folds, seed=cv_seed)
           if cfg.lam == "cv_1se" else cfg.lam)
    variants = cfg.variants
    if cfg.mode == "sets" and "randomized" not in variants:
        variants = ("randomized",) + tuple(variants)
    payload, res = _infer(cfg, ctx, data.y, data.mu0, lam, inf_ss, variants)
    if cfg.mode == "sets" and res is not None:
        payload["sets"] = _set_payload(cfg, res, np.asarray(payload["nu"]))
    return {**base, **payload}


def _record(dataset_id, A0, point, variants):
    A = np.asarray(point.get("A", []), dtype=int)
    if point["status"] != "ok":
        return DatasetRecord(dataset_id=dataset_id, A=A, A0=np.asarray(A0),
                             nu=np.zeros(0), status=point["status"],
                             lam=point["lam"])
    ivs = {}
    for v in variants:
        ivs[v] = [IntervalResult(j=jj, variable=int(A[jj]), lower=lo, upper=hi,
                                 variant=v, alpha=float("nan"))
                  for jj, (lo, hi) in enumerate(point["intervals"][v])]
    sets = [SetRecord(kind=s["kind"], B=tuple(s["B"]), delta=s["delta"],
                      radius=s["radius"], covered=s["covered"],
                      excludes_zero=s["excludes_zero"], diameter=s["diameter"],
                      log_volume=s["log_volume"]) for s in point.get("sets", [])]
    return DatasetRecord(dataset_id=dataset_id, A=A, A0=np.asarray(A0),
                         nu=np.asarray(point["nu"]), intervals=ivs, sets=sets,
                         lam=point["lam"])


def _csv_rows(records, variants, lambda_index=None):
    rows = []
    for rec in records:
        if rec.status != "ok":
            continue
        for v in variants:
            for iv in rec.intervals[v]:
                nu = rec.nu[iv.j]
                row = [rec.dataset_id, iv.variable, v, iv.lower, iv.upper,
                       bool(iv.lower <= nu <= iv.upper), iv.upper - iv.lower]
                if lambda_index is not None:
                    row.append(lambda_index)
                rows.append(row)
    return rows


def _lambda_series(payloads, grid_size, variant="randomized"):
    series = []
    for i in range(grid_size):
        qs, covs, hits, cnt = [], [], 0, 0
        banded_hits = banded_cnt = 0
        for pl in payloads:
            pt = pl["points"][i]
            qs.append(len(pt.get("A", [])))
            if pt["status"] != "ok":
                continue
            rec = _record(pl["dataset_id"], pl["A0"], pt, (variant,))
            lo = np.array([iv.lower for iv in rec.intervals[variant]])
            hi = np.array([iv.upper for iv in rec.intervals[variant]])
            cov = (lo <= rec.nu) & (rec.nu <= hi)
            covs.append(float(cov.mean()))
            hits += int(cov.sum())
            cnt += cov.size
            if 2 <= rec.A.size <= 30:
                banded_hits += int(cov.sum())
                banded_cnt += cov.size
        series.append({
            "lambda_index": i, "mean_q": float(np.mean(qs)), "n_valid": len(covs),
            "coverage_mean": float(np.mean(covs)) if covs else None,
            "coverage_pooled": hits / cnt if cnt else None,
            "coverage_q_2_30": banded_hits / banded_cnt if banded_cnt else None,
            "pairs_q_2_30": banded_cnt,
        })
    return series


@dataclass
class ExperimentResult:
    report: dict
    records: list = field(default_factory=list)
    payloads: list = field(default_factory=list)


def run_experiment(config, out_dir=None, threads=None, resume=True):
    """Run every replicate, write outputs to ``out_dir`` and return them.

    ``config`` is an :class:`ExperimentConfig`, a mapping of YAML keys, or a
    path to a YAML file.  Existing per-replicate files with a matching
    config digest are reused.
    """
    if isinstance(config, (str, os.PathLike)):
        cfg = load_config(config)
    elif isinstance(config, dict):
        cfg = parse_config(yaml.safe_dump(config, sort_keys=False))
    else:
        cfg = config
    digest = cfg.digest()
    rep_dir = None
    if out_dir is not None:
        rep_dir = os.path.join(out_dir, "replicates")
        os.makedirs(rep_dir, exist_ok=True)

    def one(r):
        path = None if rep_dir is None else os.path.join(rep_dir, f"rep_{r:04d}.json")
        if resume and path and os.path.exists(path):
            with open(path, encoding="utf-8") as fh:
                cached = json.load(fh)
            if cached.get("config_digest") == digest:
                return cached["payload"]
        payload = run_replicate(cfg, r)
        if path:
            # round-trip through the writer so fresh and cached runs agree
            text = dumps({"config_digest": digest, "payload": payload})
            with open(path + ".tmp", "w", encoding="utf-8") as fh:
                fh.write(text + "\n")
            os.replace(path + ".tmp", path)
        return json.loads(dumps(payload))

    threads = default_threads() if threads is None else max(1, int(threads))
    if threads == 1:
        payloads = [one(r) for r in range(cfg.replicates)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            payloads = list(ex.map(one, range(cfg.replicates)))

    report = {"config": cfg.to_dict(), "config_digest": digest, "mode": cfg.mode}
    records = []
    if cfg.mode == "lambda_sensitivity":
        rows = []
        for i in range(cfg.grid_size):
            recs = [_record(pl["dataset_id"], pl["A0"], pl["points"][i], cfg.variants)
                    for pl in payloads]
            records.append(recs)
            rows += _csv_rows(recs, cfg.variants, lambda_index=i)
        report["lambda_series"] = _lambda_series(payloads, cfg.grid_size)
        header = CSV_HEADER + ["lambda_index"]
    else:
        variants = cfg.variants
        if cfg.mode == "sets" and "randomized" not in variants:
            variants = ("randomized",) + tuple(variants)
        records = [_record(pl["dataset_id"], pl["A0"], pl, variants) for pl in payloads]
        report["metrics"] = compute_metrics(records, variants).to_dict()
        report["per_dataset"] = [
            {"dataset_id": pl["dataset_id"], "status": pl["status"],
             "lambda": pl["lam"], "A": pl.get("A", [])} for pl in payloads]
        rows = _csv_rows(records, variants)
        header = CSV_HEADER
    if out_dir is not None:
        write_json(os.path.join(out_dir, "report.json"), report)
        write_csv(os.path.join(out_dir, "records.csv"), header, rows)
        if cfg.mode == "sets":
            set_rows = [[pl["dataset_id"], s["kind"], " ".join(map(str, s["B"])),
                         s["delta"], s["radius"], s["covered"], s["excludes_zero"],
                         s["diameter"], s["log_volume"]]
                        for pl in payloads for s in pl.get("sets", [])]
            write_csv(os.path.join(out_dir, "sets.csv"),
                      ["dataset_id", "kind", "B", "delta", "radius", "covered",
                       "excludes_zero", "diameter", "log_volume"], set_rows)
    return ExperimentResult(report=report, records=records, payloads=payloads)
