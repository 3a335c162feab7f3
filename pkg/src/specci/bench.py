"""Seeded Monte-Carlo repetitions of the full pipeline across scenarios.

Config files are INI-style flat key/value text::

    [bench]
    repetitions = 100
    alpha = 0.05
    split = 0.5
    base_seed = 0

    [train]
    d = 2
    n_steps = 300
    hidden = 16

    [scenario:pnl-null]
    kind = pnl
    hypothesis = null
    n = 1500
    d_z = 100

Scenario keys by kind:

``pnl``
    n, d_x, d_y, d_z, f, g, y_noise_matrix
``gauss_linear``
    n, d_x, d_y, d_z, a, b, c, noise_x, noise_y (scalars, see GaussLinConfig.build)
``discrete``
    sizes (comma list), strength (0 gives a CI joint), joint_seed, n;
    rows are one-hot encoded

Every repetition draws from its own stream seeded by
(base_seed, crc32 of the scenario name, repetition index), so results do not
depend on execution order or on the number of workers.
"""

from __future__ import annotations

import configparser
import csv
import json
import logging
import math
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .citest import run_test
from .datagen import (
    Dataset,
    GaussLinConfig,
    PnlConfig,
    gen_discrete,
    gen_gauss_linear,
    gen_pnl,
    make_ci_joint,
    make_dep_joint,
    onehot_dataset,
)
from .trainer import TrainConfig

log = logging.getLogger(__name__)

KINDS = ("pnl", "gauss_linear", "discrete")
MAX_ERROR_SHARE = 0.2
REPORT_COLUMNS = ("scenario", "hypothesis", "reps", "reject_rate", "rate_ci_halfwidth",
                  "mean_T", "p50_T", "p95_T", "mean_omega_residual", "seconds")


class ConfigError(ValueError):
    pass


@dataclass
class Scenario:
    name: str
    kind: str
    hypothesis: str = "null"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"scenario {self.name!r}: unknown kind {self.kind!r}")
        if self.hypothesis not in ("null", "alternative"):
            raise ConfigError(f"scenario {self.name!r}: hypothesis must be null or alternative")

    @property
    def stream_id(self) -> int:
        return zlib.crc32(self.name.encode("utf-8"))

    def generate(self, seed: int) -> Dataset:
        p = dict(self.params)
        try:
            if self.kind == "pnl":
                return gen_pnl(PnlConfig(hypothesis=self.hypothesis, seed=seed, **p))
            if self.kind == "gauss_linear":
                n = int(p.pop("n"))
                return gen_gauss_linear(GaussLinConfig.build(**p), n, seed=seed)
            sizes = tuple(p.pop("sizes"))
            n = int(p.pop("n"))
            strength = float(p.pop("strength", 0.0))
            joint_seed = int(p.pop("joint_seed", 0))
            if p:
                raise TypeError(f"unexpected keys {sorted(p)}")
            joint = make_dep_joint(sizes, joint_seed, strength) if strength else make_ci_joint(sizes, joint_seed)
            return onehot_dataset(gen_discrete(joint, n, seed), sizes)
        except TypeError as exc:
            raise ConfigError(f"scenario {self.name!r}: {exc}") from exc


@dataclass
class BenchConfig:
    scenarios: list
    repetitions: int = 100
    alpha: float = 0.05
    split: float = 0.5
    base_seed: int = 0
    train: TrainConfig = field(default_factory=TrainConfig)
    output: str | None = None

    def __post_init__(self):
        if self.repetitions < 1:
            raise ConfigError("repetitions must be at least 1")
        if not 0.0 < self.split < 1.0:
            raise ConfigError("split must lie in (0, 1)")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError("alpha must lie in (0, 1)")
        if not self.scenarios:
            raise ConfigError("no scenarios configured")
        names = [s.name for s in self.scenarios]
        if len(set(names)) != len(names):
            raise ConfigError("scenario names must be unique")


# --- config parsing ------------------------------------------------------------

_INT_KEYS = {"n", "d_x", "d_y", "d_z", "joint_seed", "aux_draws"}
_FLOAT_KEYS = {"a", "b", "c", "noise_x", "noise_y", "strength"}


def _parse_scenario_value(key: str, raw: str):
    if key in _INT_KEYS:
        return int(raw)
    if key in _FLOAT_KEYS:
        return float(raw)
    if key == "sizes":
        return tuple(int(s) for s in raw.split(","))
    return raw.strip()


def _train_from_section(section) -> TrainConfig:
    kinds = {f.name: f.type for f in fields(TrainConfig)}
    kw = {}
    for key, raw in section.items():
        if key not in kinds:
            raise ConfigError(f"unknown train key {key!r}")
        ftype = str(kinds[key])
        if "tuple" in ftype:
            kw[key] = tuple(int(h) for h in raw.split(",") if h.strip())
        elif ftype == "int":
            kw[key] = int(raw)
        elif ftype == "float":
            kw[key] = float(raw)
        else:
            kw[key] = raw.strip()
    return TrainConfig(**kw)


def parse_config(text: str) -> BenchConfig:
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    try:
        bench = cp["bench"] if cp.has_section("bench") else {}
        train = _train_from_section(cp["train"]) if cp.has_section("train") else TrainConfig()
        scenarios = []
        for name in cp.sections():
            if not name.startswith("scenario:"):
                if name not in ("bench", "train"):
                    raise ConfigError(f"unknown section [{name}]")
                continue
            sec = dict(cp[name])
            kind = sec.pop("kind", None)
            if kind is None:
                raise ConfigError(f"[{name}] needs a kind")
            hyp = sec.pop("hypothesis", "null")
            params = {k: _parse_scenario_value(k, v) for k, v in sec.items()}
            scenarios.append(Scenario(name.split(":", 1)[1], kind, hyp, params))
        return BenchConfig(
            scenarios=scenarios,
            repetitions=int(bench.get("repetitions", 100)),
            alpha=float(bench.get("alpha", 0.05)),
            split=float(bench.get("split", 0.5)),
            base_seed=int(bench.get("base_seed", 0)),
            train=train,
            output=bench.get("output"),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def load_config(path) -> BenchConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


# --- repetitions -----------------------------------------------------------------

def stream_seeds(base_seed: int, scenario: Scenario, rep: int) -> tuple[int, int]:
    """(data seed, training seed) for one repetition."""
    ss = np.random.SeedSequence([int(base_seed), scenario.stream_id, int(rep)])
    data, train = (int(s.generate_state(1, np.uint64)[0]) for s in ss.spawn(2))
    return data, train


@dataclass
class RepResult:
    scenario: str
    rep: int
    statistic: float | None = None
    reject: bool | None = None
    p_value: float | None = None
    omega_residual: float | None = None
    seconds: float = 0.0
    error: str | None = None


def run_repetition(config: BenchConfig, scenario: Scenario, rep: int) -> RepResult:
    start = time.perf_counter()
    data_seed, train_seed = stream_seeds(config.base_seed, scenario, rep)
    try:
        ds = scenario.generate(data_seed)
        train_set, test_set = ds.split(config.split)
        tcfg = TrainConfig.from_dict({**config.train.to_dict(), "seed": train_seed})
        out = run_test(train_set, test_set, tcfg, alpha=config.alpha)
        diag = out.diagnostics
        resid = (diag.get("final_omega_in") or 0.0) + (diag.get("final_omega_out") or 0.0)
        return RepResult(scenario.name, rep, out.statistic, out.reject, out.p_value, resid,
                         time.perf_counter() - start)
    except ConfigError:
        raise
    except Exception as exc:  # recorded, the scenario decides whether it is fatal
        log.warning("scenario %s rep %d failed: %s", scenario.name, rep, exc)
        return RepResult(scenario.name, rep, seconds=time.perf_counter() - start,
                         error=f"{type(exc).__name__}: {exc}")


def _run_job(args):
    return run_repetition(*args)


# --- aggregation -------------------------------------------------------------------

@dataclass
class ScenarioSummary:
    scenario: str
    hypothesis: str
    reps: int
    reject_rate: float
    rate_ci_halfwidth: float
    mean_T: float
    p50_T: float
    p95_T: float
    mean_omega_residual: float
    seconds: float
    errors: int = 0
    failed: bool = False

    def row(self) -> dict:
        return {k: getattr(self, k) for k in REPORT_COLUMNS}


@dataclass
class BenchReport:
    summaries: list
    repetitions: list
    alpha: float
    base_seed: int
    train: dict

    @property
    def failed(self) -> bool:
        return any(s.failed for s in self.summaries)

    def summary(self, name: str) -> ScenarioSummary:
        for s in self.summaries:
            if s.scenario == name:
                return s
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "base_seed": self.base_seed,
            "train": self.train,
            "scenarios": [asdict(s) for s in self.summaries],
            "repetitions": [asdict(r) for r in self.repetitions],
        }

    def write(self, prefix) -> tuple[str, str]:
        csv_path, json_path = f"{prefix}.csv", f"{prefix}.json"
        with open(csv_path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS, lineterminator="\n")
            writer.writeheader()
            for s in self.summaries:
                writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in s.row().items()})
        with open(json_path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
        return csv_path, json_path


def summarize(scenario: Scenario, results: list) -> ScenarioSummary:
    results = sorted(results, key=lambda r: r.rep)
    ok = [r for r in results if r.error is None]
    errors = len(results) - len(ok)
    stats = np.array([r.statistic for r in ok], dtype=np.float64)
    nan = float("nan")
    rate = float(np.mean([r.reject for r in ok])) if ok else nan
    half = 1.96 * math.sqrt(rate * (1.0 - rate) / len(ok)) if ok else nan
    return ScenarioSummary(
        scenario=scenario.name,
        hypothesis=scenario.hypothesis,
        reps=len(ok),
        reject_rate=rate,
        rate_ci_halfwidth=half,
        mean_T=float(stats.mean()) if ok else nan,
        p50_T=float(np.quantile(stats, 0.5)) if ok else nan,
        p95_T=float(np.quantile(stats, 0.95)) if ok else nan,
        mean_omega_residual=float(np.mean([r.omega_residual for r in ok])) if ok else nan,
        seconds=float(sum(r.seconds for r in results)),
        errors=errors,
        failed=errors > MAX_ERROR_SHARE * len(results),
    )


def run_bench(config: BenchConfig, workers: int = 1) -> BenchReport:
    jobs = [(config, s, r) for s in config.scenarios for r in range(config.repetitions)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_job, jobs, chunksize=1))
    else:
        results = [_run_job(job) for job in jobs]
    summaries = [summarize(s, [r for r in results if r.scenario == s.name]) for s in config.scenarios]
    return BenchReport(summaries, results, config.alpha, config.base_seed, config.train.to_dict())
