"""Experiment grids: attacks per window, PI sweeps, covariance and AM accuracy.

Every random choice derives from ``(cfg.seed, d, window_start)`` so a single
cell can be replayed on its own and reproduces the value in the grid output.
Rows are always emitted in config order, whatever order the cells finish in.
"""
from __future__ import annotations

import csv
import io
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import adversary, attack, defense
from .data import Dataset, Partition, SplitSpec, load_preset, prepare, split, window_partitions
from .model import LRParams, TrainConfig, accuracy, confidence, log_ratio, partition_params, train
from .synthetic import SyntheticSpec, generate

__all__ = [
    "RamSettings",
    "PpsSettings",
    "ExperimentConfig",
    "Context",
    "load_context",
    "attack_cell",
    "run_attack_grid",
    "run_pi_grid",
    "covariance_matrix",
    "emit_covariance",
    "run_am_accuracy",
    "write_csv",
    "ATTACK_COLUMNS",
    "PI_COLUMNS",
    "METHODS",
]

log = logging.getLogger(__name__)

METHODS = ("half", "ls_exact", "halfstar_exact", "am", "ram")
ATTACK_COLUMNS = ["dataset", "window_start", "d", "method", "n_p", "alpha", "beta", "mse"]
PI_COLUMNS = ["dataset", "case", "d", "epsilon", "g_achieved", "mse_predicted", "mse_empirical",
              "solver_status", "window_start"]
AM_COLUMNS = ["dataset", "active_features", "d", "accuracy"]


@dataclass
class RamSettings:
    n_p: list[int] = field(default_factory=lambda: [100])
    score_mode: str = "exact"  # "exact" -> (alpha, beta) = (1, 0); "labels" -> (0, 1)
    alpha: float | None = None
    beta: float | None = None

    def weights(self) -> tuple[float, float]:
        if self.score_mode not in ("exact", "labels"):
            raise ValueError(f"score_mode must be 'exact' or 'labels', got {self.score_mode!r}")
        a0, b0 = (1.0, 0.0) if self.score_mode == "exact" else (0.0, 1.0)
        return (a0 if self.alpha is None else self.alpha, b0 if self.beta is None else self.beta)


@dataclass
class PpsSettings:
    cases: list[str] | None = None  # None -> every case applicable to (d, k)
    eps_grid: list[float] = field(default_factory=lambda: [0.0, 0.01, 0.05, 0.1])
    randomize: str = "none"  # "none" | "epsilon" | "sign"
    n_starts: int = 5


@dataclass
class ExperimentConfig:
    dataset: str | None = None  # preset name
    data_dir: str | None = None
    synthetic: SyntheticSpec | None = None
    d_values: list[int] = field(default_factory=lambda: [1, 2])
    methods: list[str] = field(default_factory=lambda: ["half", "am", "ram"])
    ram: RamSettings = field(default_factory=RamSettings)
    pps: PpsSettings = field(default_factory=PpsSettings)
    train: TrainConfig = field(default_factory=TrainConfig)
    seed: int = 0
    max_windows: int | None = None
    per_window: bool = False
    workers: int = 1
    out: str | None = None

    def __post_init__(self):
        if (self.dataset is None) == (self.synthetic is None):
            raise ValueError("give exactly one of 'dataset' and 'synthetic'")
        bad = set(self.methods) - set(METHODS)
        if bad:
            raise ValueError(f"unknown methods {sorted(bad)}; choose from {list(METHODS)}")

    @property
    def name(self) -> str:
        return self.dataset if self.dataset is not None else "synthetic"

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        doc = dict(doc)
        if doc.get("synthetic") is not None:
            doc["synthetic"] = SyntheticSpec(**doc["synthetic"])
        if "ram" in doc:
            doc["ram"] = RamSettings(**doc["ram"])
        if "pps" in doc:
            doc["pps"] = PpsSettings(**doc["pps"])
        if "train" in doc:
            doc["train"] = TrainConfig(**doc["train"])
        return cls(**doc)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return asdict(self)


def _cell_seed(seed: int, *parts: int) -> int:
    return int(np.random.SeedSequence([seed, *parts]).generate_state(1)[0])


# -- shared state -------------------------------------------------------------------


@dataclass
class Context:
    """Splits plus the jointly trained VFL model for one config."""

    cfg: ExperimentConfig
    train: Dataset
    test: Dataset
    pred: Dataset
    model: LRParams

    @property
    def k(self) -> int:
        return self.train.k

    @property
    def d_t(self) -> int:
        return self.train.d_t

    def windows(self, d: int) -> list[Partition]:
        parts = window_partitions(self.d_t, d)
        return parts[: self.cfg.max_windows] if self.cfg.max_windows else parts

    def exact_scores(self, X: np.ndarray) -> np.ndarray:
        return confidence(self.model, X)


def load_splits(cfg: ExperimentConfig) -> tuple[Dataset, Dataset, Dataset]:
    spec = SplitSpec(seed=cfg.seed)
    if cfg.synthetic is not None:
        # generator output already lies in [0, 1] and is fully numeric
        return split(generate(cfg.synthetic), spec)
    if cfg.data_dir is None:
        raise ValueError("preset datasets need 'data_dir'")
    return prepare(load_preset(cfg.dataset, cfg.data_dir), spec)


def load_context(cfg: ExperimentConfig) -> Context:
    tr, te, pr = load_splits(cfg)
    tc = replace(cfg.train, seed=_cell_seed(cfg.seed, 0))
    model = train(tr.features, tr.labels, tc, k=tr.k, feature_indices=range(tr.d_t))
    return Context(cfg, tr, te, pr, model)


# -- attacks ------------------------------------------------------------------------


class _AdversaryCache:
    def __init__(self, ctx: Context):
        self.ctx = ctx
        self.am = lru_cache(maxsize=None)(self._am)
        self.ram = lru_cache(maxsize=None)(self._ram)

    def _tc(self, d, start):
        return replace(self.ctx.cfg.train, seed=_cell_seed(self.ctx.cfg.seed, d, start))

    def _am(self, d: int, start: int) -> LRParams:
        part = window_partitions(self.ctx.d_t, d)[start]
        tr = self.ctx.train
        return adversary.train_am(tr.features[:, list(part.active_indices)], tr.labels,
                                  self._tc(d, start), k=self.ctx.k)

    def _ram(self, d: int, start: int, n_p: int) -> LRParams:
        ctx = self.ctx
        part = window_partitions(ctx.d_t, d)[start]
        act = list(part.active_indices)
        alpha, beta = ctx.cfg.ram.weights()
        Xp = ctx.pred.features[:n_p]
        c = ctx.exact_scores(Xp)
        obs = adversary.Observed(Xp[:, act], c, np.argmax(c, axis=1))
        if ctx.cfg.ram.score_mode == "labels":
            obs = obs.as_labels()
        rc = adversary.RamConfig(alpha, beta, obs, self._tc(d, start))
        return adversary.train_ram(rc, ctx.train.features[:, act], ctx.train.labels, k=ctx.k)


def _agnostic_mse(ctx: Context, part: Partition, am: LRParams) -> float:
    pm = partition_params(ctx.model, part)
    X = np.vstack([ctx.train.features, ctx.pred.features])
    act, pas = list(part.active_indices), list(part.passive_indices)
    _, c_hat_p = adversary.estimate_score(am, X[:, act])
    sys = attack.form_system(pm.W_act, pm.W_pas, pm.b, X[:, act], c_hat_p)
    x_hat = attack.clip_to_box(attack.estimate(sys, ctx.k))
    return attack.empirical_mse(X[:, pas], x_hat)


def attack_cell(ctx: Context, d: int, start: int, method: str, n_p: int = 0,
                cache: _AdversaryCache | None = None) -> float | None:
    """MSE of one (window, method) cell; ``None`` when the method does not apply."""
    cache = cache or _AdversaryCache(ctx)
    part = window_partitions(ctx.d_t, d)[start]
    pas = list(part.passive_indices)
    k = ctx.k
    if method == "half":
        X = np.vstack([ctx.train.features, ctx.pred.features])[:, pas]
        return attack.empirical_mse(X, np.full_like(X, 0.5))
    if method in ("ls_exact", "halfstar_exact"):
        if (method == "ls_exact") != (d < k):
            return None
        pm = partition_params(ctx.model, part)
        Xp = ctx.pred.features
        c_p = log_ratio(ctx.exact_scores(Xp))
        sys = attack.form_system(pm.W_act, pm.W_pas, pm.b, Xp[:, list(part.active_indices)], c_p)
        x_hat = attack.ls_estimate(sys) if method == "ls_exact" else attack.halfstar_estimate(sys)
        return attack.empirical_mse(Xp[:, pas], attack.clip_to_box(x_hat))
    if method == "am":
        return _agnostic_mse(ctx, part, cache.am(d, start))
    if method == "ram":
        if n_p > len(ctx.pred.labels):
            return None
        return _agnostic_mse(ctx, part, cache.ram(d, start, n_p))
    raise ValueError(f"unknown method {method!r}")


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(round(x, 12))
    return str(x)


def write_csv(rows: list[dict], columns: list[str], out=None) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({c: _fmt(r[c]) for c in columns})
    text = buf.getvalue()
    if out is not None:
        Path(out).write_text(text)
    return text


def _map(fn, items, workers):
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            return list(ex.map(fn, items))
    return [fn(it) for it in items]


def run_attack_grid(cfg: ExperimentConfig, ctx: Context | None = None) -> list[dict]:
    """One averaged row per (d, method[, n_p]), plus per-window rows if requested."""
    ctx = ctx or load_context(cfg)
    cache = _AdversaryCache(ctx)
    alpha, beta = cfg.ram.weights()
    specs = []
    for d in cfg.d_values:
        if not 1 <= d < ctx.d_t:
            log.warning("skipping d=%d: needs 1 <= d < d_t=%d", d, ctx.d_t)
            continue
        for method in cfg.methods:
            for n_p in (cfg.ram.n_p if method == "ram" else [0]):
                specs.append((d, method, n_p))

    cells = [(d, p.start, m, n_p) for d, m, n_p in specs for p in ctx.windows(d)]
    vals = _map(lambda c: attack_cell(ctx, c[0], c[1], c[2], c[3], cache), cells, cfg.workers)
    by_cell = dict(zip(cells, vals))

    rows = []
    for d, method, n_p in specs:
        a, b = (alpha, beta) if method == "ram" else (0.0, 0.0)
        base = {"dataset": cfg.name, "d": d, "method": method, "n_p": n_p, "alpha": a, "beta": b}
        per = [(p.start, by_cell[(d, p.start, method, n_p)]) for p in ctx.windows(d)]
        if any(v is None for _, v in per):
            log.info("skipping %s at d=%d, k=%d: not applicable", method, d, ctx.k)
            continue
        if cfg.per_window:
            rows += [{**base, "window_start": s, "mse": v} for s, v in per]
        rows.append({**base, "window_start": "all", "mse": float(np.mean([v for _, v in per]))})
    if cfg.out:
        write_csv(rows, ATTACK_COLUMNS, cfg.out)
    return rows


# -- defenses -----------------------------------------------------------------------


def applicable_cases(d: int, k: int) -> list[str]:
    if d == 1:
        return ["iii"]
    out = ["i"] if d >= k else ["ii"]
    if k == 2:
        out.append("iv")
    return out


def _defend(case, W_pas, stats, eps, settings: PpsSettings, seed: int):
    rng = np.random.default_rng(seed)
    target = eps
    if settings.randomize == "epsilon" and eps > 0:
        target = float(rng.uniform(0.0, eps))
    kw = {"seed": seed}
    if case in ("i", "ii"):
        kw["n_starts"] = settings.n_starts
    out = defense.solve(case, W_pas, stats, target, **kw)
    if settings.randomize == "sign" and case == "ii" and out.R is not None and rng.random() < 0.5:
        R = -out.R
        W_n = W_pas @ R
        out = defense.PPSOutcome(W_n, defense.interpretability_gap(W_pas, W_n),
                                 defense.case_ii_mse(R, stats), case, eps, out.status, R,
                                 {**out.diagnostics, "sign_flipped": True})
    return out


def run_pi_grid(cfg: ExperimentConfig, ctx: Context | None = None) -> list[dict]:
    """PI sweep rows per (case, d, window, eps) with a Monte-Carlo MSE column.

    Statistics come from the passive training features; the empirical column
    attacks the prediction split with exact scores and no clipping.
    """
    ctx = ctx or load_context(cfg)
    cells = []
    for d in cfg.d_values:
        if not 1 <= d < ctx.d_t:
            log.warning("skipping d=%d: needs 1 <= d < d_t=%d", d, ctx.d_t)
            continue
        cases = applicable_cases(d, ctx.k)
        if cfg.pps.cases is not None:
            skipped = [c for c in cfg.pps.cases if c not in cases]
            if skipped:
                log.info("d=%d, k=%d: cases %s not applicable", d, ctx.k, skipped)
            cases = [c for c in cfg.pps.cases if c in cases]
        for case in cases:
            for p in ctx.windows(d):
                for eps in sorted(cfg.pps.eps_grid):
                    cells.append((case, d, p, float(eps)))

    def run(cell):
        case, d, p, eps = cell
        pas = list(p.passive_indices)
        W_pas = partition_params(ctx.model, p).W_pas
        stats = defense.PassiveStats.from_features(ctx.train.features[:, pas])
        out = _defend(case, W_pas, stats, eps, cfg.pps, _cell_seed(cfg.seed, d, p.start))
        emp = defense.simulate_attack_mse(case, W_pas, out.W_n, ctx.pred.features[:, pas])
        return {"dataset": cfg.name, "case": case, "d": d, "epsilon": eps,
                "g_achieved": out.g_achieved, "mse_predicted": out.mse_predicted,
                "mse_empirical": emp, "solver_status": out.status, "window_start": p.start}

    rows = _map(run, cells, cfg.workers)
    if cfg.out:
        write_csv(rows, PI_COLUMNS, cfg.out)
    return rows


# -- descriptive outputs -------------------------------------------------------------


def covariance_matrix(X: np.ndarray) -> np.ndarray:
    Xc = np.asarray(X, float) - np.mean(X, axis=0)
    return Xc.T @ Xc / Xc.shape[0]


def emit_covariance(ds: Dataset, out=None) -> str:
    """Covariance of all features as CSV: a header of feature names, then rows."""
    K = covariance_matrix(ds.features)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ds.feature_names)
    for row in K:
        w.writerow([_fmt(float(v)) for v in row])
    text = buf.getvalue()
    if out is not None:
        Path(out).write_text(text)
    return text


def run_am_accuracy(cfg: ExperimentConfig, ctx: Context | None = None) -> list[dict]:
    """Window-averaged AM test accuracy per active-feature count.

    The last row uses all features, i.e. the VFL model itself.
    """
    ctx = ctx or load_context(cfg)
    cache = _AdversaryCache(ctx)
    te = ctx.test
    rows = []
    for d in sorted(set(cfg.d_values), reverse=True):
        if not 1 <= d < ctx.d_t:
            continue
        accs = []
        for p in ctx.windows(d):
            am = cache.am(d, p.start)
            accs.append(accuracy(am, te.features[:, list(p.active_indices)], te.labels))
        rows.append({"dataset": cfg.name, "active_features": ctx.d_t - d, "d": d,
                     "accuracy": float(np.mean(accs))})
    rows.append({"dataset": cfg.name, "active_features": ctx.d_t, "d": 0,
                 "accuracy": accuracy(ctx.model, te.features, te.labels)})
    if cfg.out:
        write_csv(rows, AM_COLUMNS, cfg.out)
    return rows
