"""Monte Carlo experiment runner: presets, configuration files, seeding, parallel trials and CSV output.

Every trial draws its randomness from ``SeedSequence([seed, point, trial])``
and returns integer counters, so the aggregated results do not depend on how
trials are scheduled over worker processes.
"""
import configparser
import math
import os
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
from scipy.stats import norm

from ._validation import ParameterError
from .analysis import ALGORITHMS, DETECTOR_CHOICES, complexity_curve, sum_rate
from .baselines import aa_rls_df_detect, aa_rls_linear_detect, lmmse_detect, oracle_lmmse_detect
from .config import SystemConfig
from .detector import detect_slot
from .idd import build_slot_code, idd_loop
from .metadata import build_codebook, lmmse_channel_estimate
from .traffic import draw_profiles, generate_slot

FIGURES = ("fig4a", "fig5", "fig6", "fig7", "fig8", "fig9", "custom")
DETECTORS = ("oracle-lmmse", "aa-vgl-df", "aa-rls-df-il", "aa-rls-df", "aa-rls-linear", "lmmse")
CSV_HEADER = "x,y,ci_low,ci_high,trials"
CHUNK = 64  # trials per task
_POPULATION_STREAM = 2**32 - 1
_CODE_STREAM = 2**32 - 2


@dataclass(frozen=True)
class ExperimentSpec:
    """What to run.

    Attributes
    ----------
    figure : str
        One of :data:`FIGURES`.
    snr_grid : tuple of float
        Strictly increasing SNR points (dB).  For ``fig5`` the grid holds
        device counts instead.
    trials : int
        Slots per point (Monte Carlo samples per (K, c) pair for the rate presets).
    detectors : tuple of str
    system : SystemConfig
    out : str
        Output directory.
    seed : int
    sparsity : tuple of (alpha, beta)
        Activity scenarios of ``fig8``.
    """

    figure: str = "fig6"
    snr_grid: tuple = (4.0, 8.0, 12.0, 16.0)
    trials: int = 10_000
    detectors: tuple = DETECTORS
    system: SystemConfig = field(default_factory=SystemConfig)
    out: str = "results"
    seed: int = 0
    sparsity: tuple = ((1.0, 9.0), (4.0, 8.0), (6.0, 6.0))
    rate_detector: str = "imperfect-rls"
    iterations: int = 2

    def __post_init__(self):
        if self.figure not in FIGURES:
            raise ParameterError(f"figure must be one of {FIGURES}, got {self.figure!r}")
        if int(self.trials) != self.trials or self.trials < 1:
            raise ParameterError(f"trials must be an integer >= 1, got {self.trials!r}")
        grid = tuple(float(x) for x in self.snr_grid)
        if not grid or any(b <= a for a, b in zip(grid, grid[1:])):
            raise ParameterError("snr_grid must be nonempty and strictly increasing")
        object.__setattr__(self, "snr_grid", grid)
        bad = [d for d in self.detectors if d not in DETECTORS]
        if bad:
            raise ParameterError(f"unknown detectors {bad}; expected a subset of {DETECTORS}")
        if not 0 <= self.seed < 2**63:
            raise ParameterError("seed must be a non-negative 63-bit integer")
        if self.iterations < 1:
            raise ParameterError("iterations must be >= 1")
        if self.rate_detector not in DETECTOR_CHOICES:
            raise ParameterError(f"rate_detector must be one of {DETECTOR_CHOICES}, got {self.rate_detector!r}")


@dataclass
class ResultSeries:
    """One curve: ``y`` against ``x`` with 95 % bounds and the trials behind each point."""

    name: str
    x: list = field(default_factory=list)
    y: list = field(default_factory=list)
    ci_low: list = field(default_factory=list)
    ci_high: list = field(default_factory=list)
    trials: list = field(default_factory=list)

    def append(self, x, y, lo, hi, n):
        if y < 0:
            raise ValueError(f"{self.name}: negative value {y}")
        self.x.append(x)
        self.y.append(y)
        self.ci_low.append(lo)
        self.ci_high.append(hi)
        self.trials.append(int(n))

    def to_csv(self):
        rows = [CSV_HEADER]
        for row in zip(self.x, self.y, self.ci_low, self.ci_high, self.trials):
            rows.append(",".join(_fmt(v) for v in row))
        return "\n".join(rows) + "\n"


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    return str(int(v)) if v.is_integer() and abs(v) < 1e15 else repr(v)


def wilson_interval(successes, n, confidence=0.95):
    """Wilson score interval for a binomial proportion."""
    if n <= 0:
        return 0.0, 1.0
    z = norm.ppf(0.5 + confidence / 2.0)
    p = successes / n
    den = 1.0 + z * z / n
    centre = (p + z * z / (2 * n)) / den
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    return max(0.0, centre - half), min(1.0, centre + half)


def mean_interval(total, total_sq, n, confidence=0.95):
    """Normal interval for a sample mean from its sum and sum of squares."""
    if n <= 0:
        return 0.0, 0.0
    m = total / n
    var = max(total_sq / n - m * m, 0.0) * n / max(n - 1, 1)
    half = norm.ppf(0.5 + confidence / 2.0) * math.sqrt(var / n)
    return max(0.0, m - half), m + half


# --------------------------------------------------------------------------- presets


def preset(name, paper_scale=False):
    """Default :class:`ExperimentSpec` of a named figure."""
    if name not in FIGURES:
        raise ParameterError(f"unknown preset {name!r}; expected one of {FIGURES}")
    system = SystemConfig()
    kw = {}
    if name == "fig4a":
        kw = dict(detectors=("aa-vgl-df",))
    elif name == "fig5":
        kw = dict(snr_grid=(16, 32, 64, 128, 256), trials=1)
        system = replace(system, M=20)
    elif name == "fig7":
        kw = dict(detectors=("aa-vgl-df",), trials=2000)
    elif name in ("fig8", "fig9"):
        kw = dict(snr_grid=(0.0, 10.0, 20.0, 30.0), trials=200)
    spec = ExperimentSpec(figure=name, system=system, **kw)
    if paper_scale:
        spec = replace(spec, system=replace(spec.system, N=128, M=64), trials=max(spec.trials, 100_000))
    return spec


# --------------------------------------------------------------------------- config files

_SPEC_KEYS = {
    "preset": str,
    "snr_grid": "floats",
    "trials": int,
    "detectors": "names",
    "out": str,
    "seed": int,
    "sparsity": "pairs",
    "rate_detector": str,
    "iterations": int,
}


def _convert(key, text, kind):
    text = text.strip()
    try:
        if kind == "floats":
            return tuple(float(t) for t in text.replace(",", " ").split())
        if kind == "names":
            return tuple(t for t in text.replace(",", " ").split())
        if kind == "pairs":
            vals = [float(t) for t in text.replace(",", " ").replace(";", " ").split()]
            if len(vals) % 2:
                raise ValueError("odd number of values")
            return tuple(zip(vals[::2], vals[1::2]))
        if kind is bool:
            return {"true": True, "false": False, "1": True, "0": False}[text.lower()]
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
        if kind == "float | None":
            return None if text.lower() in ("", "none") else float(text)
        return text
    except (ValueError, KeyError) as exc:
        raise ParameterError(f"{key}: cannot parse {text!r} ({exc})") from exc


def parse_config(path, cli=None, paper_scale=False):
    """Build an :class:`ExperimentSpec` from a key-value file and CLI overrides.

    The file has an ``[experiment]`` section (preset, snr_grid, trials,
    detectors, out, seed, sparsity, rate_detector, iterations) and a
    ``[system]`` section with :class:`SystemConfig` fields.  Unknown
    sections or keys are rejected.  Precedence: ``cli`` > file > preset
    defaults.

    Parameters
    ----------
    path : str or None
        ``None`` or an empty file gives the defaults.
    cli : dict, optional
        Non-``None`` entries override the file (same keys as ``[experiment]``).
    """
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                cp.read_file(fh)
        except configparser.Error as exc:
            raise ParameterError(f"malformed config file {path}: {exc}") from exc
    unknown = set(cp.sections()) - {"experiment", "system"}
    if unknown:
        raise ParameterError(f"unknown config sections: {sorted(unknown)}")

    exp = {}
    if cp.has_section("experiment"):
        for key, text in cp.items("experiment"):
            if key not in _SPEC_KEYS:
                raise ParameterError(f"unknown key [experiment] {key}")
            exp[key] = _convert(key, text, _SPEC_KEYS[key])
    for key, value in (cli or {}).items():
        if value is not None:
            exp[key] = value

    types = SystemConfig.field_types()
    sysvals = {}
    if cp.has_section("system"):
        for key, text in cp.items("system"):
            name = "lambda_" if key == "lambda" else key
            if name not in types:
                raise ParameterError(f"unknown key [system] {key}")
            kind = types[name]
            if kind not in (int, float, str, bool):
                kind = "float | None"
            sysvals[name] = _convert(key, text, kind)

    spec = preset(exp.pop("preset", "fig6"), paper_scale=paper_scale)
    system = replace(spec.system, **sysvals)  # SystemConfig validates ranges
    return replace(spec, system=system, **exp)


# --------------------------------------------------------------------------- trials


def _trial_rng(seed, point, trial):
    return np.random.default_rng(np.random.SeedSequence([seed, point, trial]))


@lru_cache(maxsize=8)
def _population(seed, system):
    rng = np.random.default_rng(np.random.SeedSequence([seed, _POPULATION_STREAM]))
    return draw_profiles(system, rng), build_codebook(system.tau_phi)


@lru_cache(maxsize=4)
def _code(seed, system):
    return build_slot_code(system, np.random.default_rng(np.random.SeedSequence([seed, _CODE_STREAM])))


def _estimate(slot, codebook, profiles, config):
    active = slot.delta if config.channel_estimator == "genie" else None
    return lmmse_channel_estimate(slot.Y_phi, codebook, slot.assignment, profiles, slot.sigma_v2, active=active)


def _detect(name, slot, H_hat, profiles, config):
    amp = np.sqrt(profiles.b)
    if name == "oracle-lmmse":
        return oracle_lmmse_detect(slot.Y_x, slot.H, slot.delta, amp, slot.sigma_v2)[1], None
    if name == "lmmse":
        return lmmse_detect(slot.Y_x, H_hat, amp, slot.sigma_v2)[1], None
    if name == "aa-rls-linear":
        res = aa_rls_linear_detect(slot, H_hat, profiles, config)
    elif name == "aa-rls-df":
        res = aa_rls_df_detect(slot, H_hat, profiles, config)
    elif name == "aa-rls-df-il":
        res = aa_rls_df_detect(slot, H_hat, profiles, config, internal_list=True)
    else:
        res = detect_slot(slot, H_hat, profiles, config)
    return res.d_hard, res


def _run_chunk(spec, point, x, start, stop):
    """Counters for trials ``start..stop-1`` of one point (integers or exact halves)."""
    config = replace(spec.system, snr_db=float(x))
    profiles, codebook = _population(spec.seed, spec.system)
    counts = {}

    def add(key, v):
        counts[key] = counts.get(key, 0) + v

    if spec.figure == "fig7":
        code = _code(spec.seed, spec.system)
        sigma_v2 = config.noise_variance(code.rate)
        for t in range(start, stop):
            rng = _trial_rng(spec.seed, point, t)
            slot = generate_slot(config, profiles, codebook, rng, sigma_v2=sigma_v2, code=code)
            est = _estimate(slot, codebook, profiles, config)
            res = idd_loop(slot, est.H_hat, profiles, config, code, spec.iterations)
            for it, e in enumerate(res.bit_errors, start=1):
                add(f"coded-ber-it{it}", int(e))
            add("info_bits", res.n_bits)
            add("uncoded-ber", res.uncoded_bit_errors)
            add("coded_bits", res.n_coded_bits)
            add("frames", int(slot.delta.sum()))
        return counts

    for t in range(start, stop):
        rng = _trial_rng(spec.seed, point, t)
        slot = generate_slot(config, profiles, codebook, rng)
        est = _estimate(slot, codebook, profiles, config)
        X = slot.data_symbols
        add("symbols", X.size)
        for name in spec.detectors:
            hard, res = _detect(name, slot, est.H_hat, profiles, config)
            add(name, int(np.sum(np.abs(hard - X) > 1e-9)))
            if res is not None and name == "aa-vgl-df":
                nu = res.nu.astype(np.int64)
                add("nu_sum", int(nu.sum()))
                add("nu_sq", int(np.sum(nu * nu)))
                add("nu_n", int(nu.size))
    return counts


def _run_rate_point(spec, point, x):
    """Sum-rate series values at one SNR point (``{series: rate}``)."""
    config = replace(spec.system, snr_db=float(x))
    out = {}
    if spec.figure == "fig8":
        for a, b in spec.sparsity:
            rng = _trial_rng(spec.seed, point, int(1000 * a + b))
            rep = sum_rate(replace(config, alpha=a, beta=b), spec.rate_detector, mc_samples=spec.trials, rng=rng)
            out[f"sumrate-a{_fmt(a)}-b{_fmt(b)}"] = rep.rate
    else:
        for i, choice in enumerate(("perfect", "imperfect", "imperfect-rls")):
            rng = _trial_rng(spec.seed, point, i)
            out[f"sumrate-{choice}"] = sum_rate(config, choice, mc_samples=spec.trials, rng=rng).rate
    return out


def worker_count(requested=None):
    """Workers to use: ``requested``, else ``MMTC_THREADS``, else the CPU count."""
    if requested is None:
        env = os.environ.get("MMTC_THREADS")
        if env:
            try:
                requested = int(env)
            except ValueError as exc:
                raise ParameterError(f"MMTC_THREADS must be an integer, got {env!r}") from exc
        else:
            requested = os.cpu_count() or 1
    if requested < 1:
        raise ParameterError("worker count must be >= 1")
    return int(requested)


def _series_from_counts(spec, points, per_point):
    series = {}

    def get(name):
        return series.setdefault(name, ResultSeries(name))

    for x, counts in zip(points, per_point):
        if spec.figure == "fig7":
            n = counts["info_bits"]
            for key in sorted(k for k in counts if k.startswith("coded-ber-it")):
                lo, hi = wilson_interval(counts[key], n)
                get(key).append(x, counts[key] / n if n else 0.0, lo, hi, spec.trials)
            nc = counts["coded_bits"]
            lo, hi = wilson_interval(counts["uncoded-ber"], nc)
            get("uncoded-ber").append(x, counts["uncoded-ber"] / nc if nc else 0.0, lo, hi, spec.trials)
            # codewords behind the point (one per active device and slot)
            f = counts["frames"]
            get("frames").append(x, f, f, f, spec.trials)
            continue
        if spec.figure == "fig4a":
            n = counts["nu_n"]
            lo, hi = mean_interval(counts["nu_sum"], counts["nu_sq"], n)
            get("mean-nu").append(x, counts["nu_sum"] / n, lo, hi, spec.trials)
            continue
        n = counts["symbols"]
        for name in spec.detectors:
            lo, hi = wilson_interval(counts[name], n)
            get(f"ser-{name}").append(x, counts[name] / n, lo, hi, spec.trials)
    return list(series.values())


def run_experiment(spec, workers=None, write=True, progress=None):
    """Run ``spec`` and (optionally) write one CSV per series into ``spec.out``.

    Returns the list of :class:`ResultSeries`.  On ``KeyboardInterrupt`` the
    points finished so far are written before the exception propagates.
    """
    if spec.figure == "fig5":
        curves = complexity_curve([int(n) for n in spec.snr_grid], M=spec.system.M)
        series = []
        for alg in ALGORITHMS:
            s = ResultSeries(f"flops-{alg.lower()}")
            for n, v in zip(spec.snr_grid, curves[alg]):
                s.append(int(n), v, v, v, 1)
            series.append(s)
        if write:
            write_series(spec, series)
        return series

    n_workers = worker_count(workers)
    points = list(spec.snr_grid)
    done = []
    try:
        if spec.figure in ("fig8", "fig9"):
            vals = _map(_run_rate_point, [(spec, i, x) for i, x in enumerate(points)], n_workers)
            series = {}
            for x, v in zip(points, vals):
                for name, rate in v.items():
                    series.setdefault(name, ResultSeries(name)).append(x, rate, rate, rate, spec.trials)
                done.append(x)
            result = list(series.values())
        else:
            tasks = []
            for i, x in enumerate(points):
                for start in range(0, spec.trials, CHUNK):
                    tasks.append((spec, i, x, start, min(start + CHUNK, spec.trials)))
            per_point = [dict() for _ in points]
            for (s, i, x, a, b), counts in zip(tasks, _map(_run_chunk, tasks, n_workers, lazy=True)):
                for k, v in counts.items():
                    per_point[i][k] = per_point[i].get(k, 0) + v
                if b == spec.trials:
                    done.append(x)
                    if progress:
                        progress(x)
            result = _series_from_counts(spec, points, per_point)
    except KeyboardInterrupt:
        if write and done and spec.figure not in ("fig8", "fig9"):
            idx = [points.index(x) for x in done]
            write_series(spec, _series_from_counts(spec, done, [per_point[i] for i in idx]))
        raise
    if write:
        write_series(spec, result)
    return result


def _map(fn, tasks, n_workers, lazy=False):
    if n_workers == 1 or len(tasks) == 1:
        it = (fn(*t) for t in tasks)
        return it if lazy else list(it)
    ex = ProcessPoolExecutor(max_workers=n_workers)
    try:
        futures = [ex.submit(fn, *t) for t in tasks]
        results = [f.result() for f in futures]
    finally:
        ex.shutdown(cancel_futures=True)
    return results


def write_series(spec, series):
    os.makedirs(spec.out, exist_ok=True)
    paths = []
    for s in series:
        path = os.path.join(spec.out, f"{spec.figure}_{s.name}.csv")
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(s.to_csv())
        paths.append(path)
    return paths


def warn_paper_scale(stream=sys.stderr):
    msg = "paper-scale run (N=128, M=64, 1e5 trials): expect many hours of CPU time"
    warnings.warn(msg, RuntimeWarning, stacklevel=2)
    print(f"warning: {msg}", file=stream)
