"""Experiment harness: configuration, chunked ensemble runs and tidy output.

Every experiment reduces to rows of binomial counts per n.  Trials are split
into contiguous index chunks; chunk results are merged by summing counts per
statistic, so the output does not depend on the worker count.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import clock, counterexample, defocus, srw2d, walk3d
from ._hashset import ResourceLimitError
from .stats import wilson_interval

EXPERIMENTS = (
    "walk-return",
    "embed-moments",
    "defocus-corollary",
    "defocus-embedded",
    "bridge-stats",
    "kset-scan",
    "counterexample",
)
FORMATS = ("csv", "json")
COLUMNS = ("experiment", "n", "statistic", "estimate", "ci_low", "ci_high", "count", "trials", "seed")
TAIL_MAX = 10
ESCAPE_K_MAX = 8


class ConfigError(ValueError):
    pass


def parse_n_list(text: str) -> tuple[int, ...]:
    """Comma separated sizes; each is an integer or ``2^k``."""
    out = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        try:
            if "^" in item:
                base, exp = item.split("^")
                out.append(int(base) ** int(exp))
            else:
                out.append(int(item))
        except ValueError:
            raise ConfigError(f"cannot read n value {item!r}") from None
    if not out:
        raise ConfigError("empty n list")
    return tuple(out)


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    n: tuple[int, ...]
    trials: int
    seed: int = 0
    rho: float = srw2d.DEFAULT_RHO
    a: float = 0.5
    epsilon: float = srw2d.DEFAULT_EPSILON
    bridge: bool = False
    workers: int = 1
    out: str | None = None
    format: str = "csv"

    def validate(self) -> "ExperimentConfig":
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; choose from {', '.join(EXPERIMENTS)}")
        if self.trials < 1:
            raise ConfigError(f"trials must be at least 1, got {self.trials}")
        if not self.n:
            raise ConfigError("n list is empty")
        for n in self.n:
            if n < 4:
                raise ConfigError(f"n values must be at least 4, got {n}")
            needs_even = self.experiment in ("bridge-stats", "kset-scan") or self.bridge
            if needs_even and n % 2:
                raise ConfigError(f"bridges need even n, got {n}")
        if self.seed < 0:
            raise ConfigError(f"seed must be non-negative, got {self.seed}")
        if not self.rho > 0:
            raise ConfigError(f"rho must be positive, got {self.rho}")
        if not 0 < self.a < 1:
            raise ConfigError(f"a must lie in (0, 1), got {self.a}")
        if not 0 < self.epsilon < 1 / 48:
            raise ConfigError(f"epsilon must lie in (0, 1/48), got {self.epsilon}")
        if self.workers < 1:
            raise ConfigError(f"workers must be at least 1, got {self.workers}")
        if self.format not in FORMATS:
            raise ConfigError(f"format must be one of {FORMATS}, got {self.format!r}")
        return self


@dataclass(frozen=True)
class Row:
    experiment: str
    n: int
    statistic: str
    estimate: float
    ci_low: float
    ci_high: float
    count: int
    trials: int
    seed: int

    @classmethod
    def of(cls, experiment: str, n: int, statistic: str, count: int, trials: int, seed: int) -> "Row":
        lo, hi = wilson_interval(count, trials)
        return cls(experiment, n, statistic, count / trials, lo, hi, count, trials, seed)


@dataclass
class EnsembleResult:
    rows: list[Row]
    config: ExperimentConfig | None = None
    fits: dict[str, float] = field(default_factory=dict)
    wall_clock: float = 0.0
    rng: str = ""

    def row(self, n: int, statistic: str) -> Row:
        for r in self.rows:
            if r.n == n and r.statistic == statistic:
                return r
        raise KeyError((n, statistic))


# ---------------------------------------------------------------------------
# per-chunk statistics: each returns a list of (statistic, count, trials)


def _walk_return(cfg, n, idx):
    hits = walk3d.return_window_counts(n, idx, cfg.seed)
    return [(f"return_in_window[{i}]", int(h > 0), 1) for i, h in zip(idx, hits)]


def _embed_moments(cfg, n, idx):
    tails = np.zeros(TAIL_MAX, dtype=np.int64)
    pos = nonzero = total = 0
    for i in idx:
        inc = clock.simulate_martingale(n, cfg.seed, int(i), bridge=cfg.bridge).increments
        mag = np.abs(inc)
        tails += np.array([np.count_nonzero(mag >= m) for m in range(1, TAIL_MAX + 1)])
        pos += int(np.count_nonzero(inc > 0))
        nonzero += int(np.count_nonzero(inc))
        total += len(inc)
    rows = [(f"tail_ge_{m}", int(tails[m - 1]), total) for m in range(1, TAIL_MAX + 1)]
    rows.append(("positive_given_nonzero", pos, nonzero))
    return rows


def _defocus_lazy(cfg, n, idx):
    z = defocus.zero_prob(defocus.LazyFamily(cfg.a), n, idx, cfg.seed)
    return [("zero_at_n", z.count, z.trials)]


def _defocus_embedded(cfg, n, idx):
    ladder = defocus.box_ladder(n, cfg.rho, cfg.a)
    records = []
    for i in idx:
        mp = clock.simulate_martingale(n, cfg.seed, int(i), bridge=cfg.bridge)
        records.append(defocus.crossing_record(mp.values, ladder, mp.qvar))
    rows = [("zero_at_n", sum(r.terminal == 0 for r in records), len(records))]
    for k in range(1, min(ESCAPE_K_MAX, ladder.k_max) + 1):
        e = defocus.escape_stats(records, ladder, k)
        rows.append((f"escape[{k}]", e.count, e.trials))
    return rows


def _bridge_stats(cfg, n, idx):
    bs = srw2d.bridge_statistics(n, idx, cfg.seed, cfg.rho, cfg.epsilon, with_excursions=False)
    small = int(np.count_nonzero(bs.k_count <= srw2d.k_set_threshold(n)))
    return [
        ("all_B_k", int(bs.all_Bk.sum()), len(idx)),
        ("k_set_small", small, len(idx)),
        ("endpoint_zero", srw2d.endpoint_zero_count(n, idx, cfg.seed), len(idx)),
    ]


def _kset_scan(cfg, n, idx):
    sizes = srw2d.k_set_sizes(n, idx, cfg.seed, cfg.rho)
    return [("k_set_small", int(np.count_nonzero(sizes <= srw2d.k_set_threshold(n))), len(idx))]


def _counterexample(cfg, n, idx):
    p = counterexample.return_prob(n, idx, cfg.seed)
    return [("zero_at_n", p.count, p.trials)]


_RUNNERS = {
    "walk-return": _walk_return,
    "embed-moments": _embed_moments,
    "defocus-corollary": _defocus_lazy,
    "defocus-embedded": _defocus_embedded,
    "bridge-stats": _bridge_stats,
    "kset-scan": _kset_scan,
    "counterexample": _counterexample,
}


def _chunks(trials: int, workers: int) -> list[np.ndarray]:
    pieces = 1 if workers <= 1 else min(trials, 4 * workers)
    return [c for c in np.array_split(np.arange(trials, dtype=np.int64), pieces) if len(c)]


def _merge(parts) -> dict[str, list[int]]:
    acc: dict[str, list[int]] = {}
    for part in parts:
        for name, count, trials in part:
            slot = acc.setdefault(name, [0, 0])
            slot[0] += int(count)
            slot[1] += int(trials)
    return acc


def run_experiment(config: ExperimentConfig) -> EnsembleResult:
    cfg = config.validate()
    runner = _RUNNERS[cfg.experiment]
    start = time.perf_counter()
    rows = []
    chunks = _chunks(cfg.trials, cfg.workers)
    for n in cfg.n:
        if cfg.workers > 1:
            with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
                parts = list(pool.map(lambda idx: runner(cfg, n, idx), chunks))
        else:
            parts = [runner(cfg, n, idx) for idx in chunks]
        for name, (count, trials) in _merge(parts).items():
            if trials > 0:
                rows.append(Row.of(cfg.experiment, n, name, count, trials, cfg.seed))
    fits = {}
    zero = [(r.n, r.estimate) for r in rows if r.statistic == "zero_at_n"]
    if cfg.experiment.startswith("defocus") and sum(0 < p < 1 for _, p in zero) >= 3:
        fit = defocus.decay_fit([(n, p) for n, p in zero if 0 < p < 1])
        fits["decay_slope"] = fit.slope
        fits["decay_intercept"] = fit.intercept
    return EnsembleResult(
        rows,
        cfg,
        fits,
        time.perf_counter() - start,
        f"counter-based splitmix streams keyed by (seed={cfg.seed}, trial index, stream id)",
    )


# ---------------------------------------------------------------------------
# output


def _cell(v) -> str:
    return repr(v) if isinstance(v, float) else str(v)


def emit(result: EnsembleResult, format: str = "csv") -> bytes:
    if format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in result.rows:
            w.writerow([_cell(getattr(r, c)) for c in COLUMNS])
        return buf.getvalue().encode()
    if format == "json":
        return (json.dumps([asdict(r) for r in result.rows], indent=1) + "\n").encode()
    raise ConfigError(f"format must be one of {FORMATS}, got {format!r}")


def _row_from(values: dict) -> Row:
    kinds = {f.name: f.type for f in fields(Row)}
    conv = {"str": str, "int": int, "float": float}
    return Row(**{k: conv[kinds[k]](values[k]) for k in COLUMNS})


def parse(data: bytes, format: str = "csv") -> EnsembleResult:
    """Inverse of ``emit``; only the rows are recovered."""
    text = data.decode()
    if format == "csv":
        reader = csv.reader(io.StringIO(text))
        header = next(reader)
        if tuple(header) != COLUMNS:
            raise ValueError(f"unexpected header {header}")
        return EnsembleResult([_row_from(dict(zip(COLUMNS, rec))) for rec in reader])
    if format == "json":
        return EnsembleResult([_row_from(obj) for obj in json.loads(text)])
    raise ValueError(f"format must be one of {FORMATS}, got {format!r}")


# ---------------------------------------------------------------------------
# command line


def read_config_file(path: str) -> dict[str, str]:
    """``key = value`` lines; ``#`` starts a comment."""
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            out[key.replace("-", "_")] = value
    return out


def _coerce(values: dict[str, str]) -> dict:
    types = {"experiment": str, "trials": int, "seed": int, "rho": float, "a": float,
             "epsilon": float, "workers": int, "out": str, "format": str}
    out = {}
    for key, value in values.items():
        if key == "n":
            out["n"] = parse_n_list(value) if isinstance(value, str) else tuple(value)
        elif key == "bridge":
            out["bridge"] = value if isinstance(value, bool) else str(value).lower() in ("1", "true", "yes")
        elif key in types:
            try:
                out[key] = types[key](value)
            except ValueError:
                raise ConfigError(f"bad value for {key}: {value!r}") from None
        else:
            raise ConfigError(f"unknown setting {key!r}")
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="siwalk", description="Run a seeded simulation ensemble and emit tidy results.")
    p.add_argument("experiment", nargs="?", help=f"one of: {', '.join(EXPERIMENTS)}")
    p.add_argument("--config", help="file of key = value lines; flags override it")
    p.add_argument("--n", help="comma separated sizes, e.g. 2^10,2^12")
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--rho", type=float)
    p.add_argument("--a", type=float)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--bridge", action="store_true", default=None,
                   help="condition the planar walk to return at time n")
    p.add_argument("--workers", type=int)
    p.add_argument("--out", help="output file (default stdout)")
    p.add_argument("--format", choices=FORMATS)
    return p


def config_from_args(argv=None) -> ExperimentConfig:
    args = build_parser().parse_args(argv)
    values: dict = read_config_file(args.config) if args.config else {}
    for key, value in vars(args).items():
        if key != "config" and value is not None:
            values[key] = value
    for required in ("experiment", "n", "trials"):
        if required not in values:
            raise ConfigError(f"missing required setting {required!r}")
    return ExperimentConfig(**_coerce(values)).validate()


def main(argv=None) -> int:
    try:
        cfg = config_from_args(argv)
        result = run_experiment(cfg)
    except (ConfigError, OSError) as exc:
        print(f"siwalk: {exc}", file=sys.stderr)
        return 2
    except (ResourceLimitError, MemoryError) as exc:
        print(f"siwalk: resource limit: {exc}", file=sys.stderr)
        return 3
    payload = emit(result, cfg.format)
    if cfg.out:
        with open(cfg.out, "wb") as fh:
            fh.write(payload)
    else:
        sys.stdout.buffer.write(payload)
        sys.stdout.flush()
    for name, value in result.fits.items():
        print(f"{name} = {value:.4f}", file=sys.stderr)
    print(f"done in {result.wall_clock:.1f}s", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
