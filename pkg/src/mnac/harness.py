"""Experiment configuration, Monte Carlo error estimation and report runs."""

from __future__ import annotations

import dataclasses
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np
from scipy.stats import binomtest

from . import capacity as cap
from . import codec, plotting, report
from . import rng as rngmod
from .channel import sample_state, transmit
from .detector import DECODERS, DETECTORS, decode, detect, delta_n, two_stage_decode
from .exponent import achievable_message_length, default_p_prime

log = logging.getLogger(__name__)

CODEBOOK_MODES = ("fresh", "fixed")
THETA_BRANCHES = ("auto", "vanishing", "nonvanishing")
UNITS = ("nats", "bits")

# stream path prefixes
_TRIAL = 0
_FIXED = 1


class ConfigError(ValueError):
    pass


def _intlist(text: str) -> tuple[int, ...]:
    return tuple(int(t) for t in str(text).replace(" ", "").split(",") if t)


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(text)


def _optional_int(text):
    if text is None or str(text).strip().lower() in ("", "none", "auto"):
        return None
    return int(text)


@dataclass
class ExperimentConfig:
    n: int = 32
    ell: int = 8
    alpha: float = 0.25
    power: float = 2.0
    epsilon: float = 0.3
    power_margin: float = 0.05
    trials: int = 1000
    seed: int = 2014
    detector: str = "exhaustive"
    decoder: str = "exhaustive"
    power_policy: str = codec.CHARGE
    codebook_mode: str = "fresh"
    theta_branch: str = "auto"
    ell_exp: float = 1.0
    k_exp: float = 1.0
    n0: int | None = None
    m: int | None = None
    genie: bool = False
    noise_variance: float = 1.0
    workers: int = 1
    units: str = "nats"
    out: str | None = None
    # validation sweeps
    det_ell: int = 16
    det_alpha: float = 0.25
    det_power: float = 10.0
    det_n0: tuple[int, ...] = (8, 16, 32, 64)
    genie_k: int = 2
    genie_m: int = 2
    genie_power: float = 100.0
    genie_n: tuple[int, ...] = (16, 32, 64)
    genie_policy: str = codec.CHARGE
    sources: dict[str, str] = field(default_factory=dict, repr=False, compare=False)
    conflicts: tuple[str, ...] = field(default=(), repr=False, compare=False)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if self.detector not in DETECTORS:
            raise ConfigError(f"detector must be one of {DETECTORS}")
        if self.decoder not in DECODERS:
            raise ConfigError(f"decoder must be one of {DECODERS}")
        for key in ("power_policy", "genie_policy"):
            if getattr(self, key) not in codec.POWER_POLICIES:
                raise ConfigError(f"{key} must be one of {codec.POWER_POLICIES}")
        if self.codebook_mode not in CODEBOOK_MODES:
            raise ConfigError(f"codebook_mode must be one of {CODEBOOK_MODES}")
        if self.theta_branch not in THETA_BRANCHES:
            raise ConfigError(f"theta_branch must be one of {THETA_BRANCHES}")
        if self.units not in UNITS:
            raise ConfigError(f"units must be one of {UNITS}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        if self.noise_variance < 0:
            raise ConfigError("noise_variance must be nonnegative")
        if self.out is not None:
            parent = Path(self.out).parent
            if parent.exists() and not parent.is_dir():
                raise ConfigError(f"output directory {parent} is not a directory")

    @property
    def params(self) -> cap.SystemParams:
        return cap.SystemParams(self.n, self.ell, self.alpha, self.power)

    @property
    def p_prime(self) -> float:
        return default_p_prime(self.power, self.power_margin)

    def echo(self) -> dict[str, Any]:
        """Resolved configuration for output metadata."""
        out = {}
        for f in dataclasses.fields(self):
            if f.name in ("sources", "conflicts"):
                continue
            val = getattr(self, f.name)
            out[f.name] = ",".join(map(str, val)) if isinstance(val, tuple) else val
        for i, c in enumerate(self.conflicts):
            out[f"override_{i}"] = c
        return out

    def replace(self, **changes) -> "ExperimentConfig":
        new = dataclasses.replace(self, **changes)
        new.sources = dict(self.sources)
        new.conflicts = self.conflicts
        return new


_CONVERTERS = {
    int: int, float: float, str: str, bool: _bool,
    "int | None": _optional_int, "str | None": lambda t: None if str(t).lower() in ("", "none") else str(t),
    "tuple[int, ...]": _intlist,
}


def _field_types() -> dict[str, Any]:
    out = {}
    for f in dataclasses.fields(ExperimentConfig):
        if f.name in ("sources", "conflicts"):
            continue
        t = f.type
        out[f.name] = _CONVERTERS[t] if t in _CONVERTERS else _CONVERTERS[{"int": int, "float": float, "str": str, "bool": bool}[t]]
    return out


FIELD_TYPES = _field_types()

PRESETS: dict[str, dict[str, Any]] = {
    "tiny": dict(n=16, ell=4, alpha=0.5, power=10.0, m=4, n0=8, trials=200,
                 detector="exhaustive", decoder="exhaustive",
                 det_n0=(4, 8, 16), genie_n=(8, 16, 32), power_policy=codec.RESAMPLE),
    # base n = 16 so the doubled run (n = 32, M = 1700) still fits in memory;
    # exhaustive ML decoding is out of reach at that M
    "small": dict(n=16, ell=8, alpha=0.25, power=2.0, epsilon=0.3, trials=2000,
                  detector="exhaustive", decoder="iterative",
                  power_policy=codec.RESAMPLE, theta_branch="auto"),
    "fig1": dict(power=2.0),
}


def _convert(key: str, raw, where: str):
    conv = FIELD_TYPES[key]
    try:
        return conv(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: malformed value {raw!r} for key {key!r}") from None


def read_config_file(path) -> dict[str, tuple[Any, int]]:
    """Parse ``key = value`` lines; returns key -> (value, line number)."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        key, sep, val = text.partition("=")
        key = key.strip()
        if not sep:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        if key not in FIELD_TYPES:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        out[key] = (_convert(key, val.strip(), f"{path}:{lineno}"), lineno)
    return out


def parse_config(path=None, flags: Mapping[str, Any] | None = None, preset: str | None = None) -> ExperimentConfig:
    """Build a config from defaults, then a preset, then a file, then flags.

    ``path`` may also name a preset. Later layers win; a flag that overrides
    a file value is recorded in ``conflicts`` and echoed in output metadata.
    """
    values: dict[str, Any] = {}
    sources: dict[str, str] = {}
    if path is not None and not Path(path).exists() and str(path) in PRESETS:
        preset, path = str(path), None
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        for k, v in PRESETS[preset].items():
            values[k] = v
            sources[k] = f"preset:{preset}"
    if path is not None:
        if not Path(path).exists():
            raise ConfigError(f"config file {path} not found")
        for k, (v, lineno) in read_config_file(path).items():
            values[k] = v
            sources[k] = f"file:{lineno}"
    conflicts = []
    for k, v in (flags or {}).items():
        if v is None:
            continue
        if k not in FIELD_TYPES:
            raise ConfigError(f"unknown flag {k!r}")
        v = _convert(k, v, f"flag --{k}") if isinstance(v, str) else v
        if sources.get(k, "").startswith("file") and values[k] != v:
            conflicts.append(f"{k}: file={values[k]} flag={v}")
        values[k] = v
        sources[k] = "flag"
    cfg = ExperimentConfig(**values)
    cfg.sources = sources
    cfg.conflicts = tuple(conflicts)
    return cfg


# ---------------------------------------------------------------- scheme setup


@dataclass(frozen=True)
class Scheme:
    n: int
    n0: int
    m: int
    ell: int
    alpha: float
    power: float
    p_prime: float
    vanishing: bool | None
    capacity: float | None
    log_m: float

    @property
    def k(self) -> float:
        return self.alpha * self.ell


def _vanishing(cfg: ExperimentConfig) -> bool:
    if cfg.theta_branch != "auto":
        return cfg.theta_branch == "vanishing"
    law = cap.ScalingLaw(power=cfg.power, ell_coef=cfg.ell / cfg.n ** cfg.ell_exp, ell_exp=cfg.ell_exp,
                         k_coef=cfg.ell * cfg.alpha / cfg.n ** cfg.k_exp, k_exp=cfg.k_exp)
    return cap.theta_vanishes(law)


def resolve_scheme(cfg: ExperimentConfig) -> Scheme:
    """Signature length and codebook size for the configured operating point.

    Raises codec.InfeasibleError when the scheme cannot run (n0 >= n or
    log M <= 0); explicit ``n0`` / ``m`` settings bypass the formulas.
    """
    p_prime = cfg.p_prime
    if cfg.genie:
        if cfg.m is not None:
            m = cfg.m
        else:
            v = achievable_message_length(cfg.n, cfg.ell * cfg.alpha, p_prime, cfg.epsilon)
            if v <= 0:
                raise codec.InfeasibleError("no positive message length")
            m = math.ceil(math.exp(v) - 1e-12)
        return Scheme(cfg.n, 0, m, cfg.ell, cfg.alpha, cfg.power, p_prime, None, None, math.log(m))

    params = cfg.params
    vanishing = _vanishing(cfg)
    rep = cap.symmetric_capacity(params, cap.RegimeCase.UNBOUNDED_K) if params.k > 0 else None
    capacity = rep.capacity if rep else None
    if cfg.n0 is not None:
        n0 = cfg.n0
        if not 0 <= n0 < cfg.n:
            raise codec.InfeasibleError(f"n0 = {n0} must satisfy 0 <= n0 < n = {cfg.n}")
    else:
        if rep is None:
            raise codec.InfeasibleError("no active users expected; set n0 explicitly")
        n0 = codec.signature_length(params, cfg.epsilon, rep.theta, vanishing)
    if cfg.m is not None:
        m = cfg.m
    else:
        if capacity is None:
            raise codec.InfeasibleError("capacity undefined; set m explicitly")
        m = codec.codeword_count(params, cfg.epsilon, vanishing, capacity_nats=capacity)
    if m < 1:
        raise codec.InfeasibleError("codebook needs at least one codeword")
    return Scheme(cfg.n, n0, m, cfg.ell, cfg.alpha, cfg.power, p_prime, vanishing, capacity, math.log(m))


# ---------------------------------------------------------------- trials


@dataclass(frozen=True)
class TrialResult:
    detection_exact: bool
    tuple_exact: bool
    decode_exact: bool
    missed: int
    false_alarm: int
    message_errors: int
    power_violation: bool
    n_active: int


def _codebook(cfg: ExperimentConfig, scheme: Scheme, trial: int, fixed: codec.CodebookSet | None):
    if fixed is not None:
        return fixed
    path = (_FIXED,) if cfg.codebook_mode == "fixed" else (_TRIAL, trial)
    return codec.generate(scheme.n, scheme.n0, scheme.m, scheme.ell, scheme.power, scheme.p_prime,
                          cfg.seed, path=path, policy=cfg.power_policy)


def run_trial(cfg: ExperimentConfig, scheme: Scheme, trial: int,
              fixed: codec.CodebookSet | None = None) -> TrialResult:
    """One block: draw activity and messages, transmit, decode, score."""
    cb = _codebook(cfg, scheme, trial, fixed)
    state = sample_state(scheme.ell, scheme.alpha, scheme.m, rngmod.stream(cfg.seed, _TRIAL, trial, rngmod.ACTIVITY))
    out = transmit(cb, state, rngmod.stream(cfg.seed, _TRIAL, trial, rngmod.NOISE), cfg.noise_variance)
    truth = state.messages
    active = state.support

    if cfg.genie:
        support = tuple(int(u) for u in active)
        dec = decode(out.y_b, cb, support, cfg.decoder)
        est = np.zeros(scheme.ell, dtype=np.int64)
        for u, w in dec.messages_hat.items():
            est[u] = w
    else:
        det, dec, est = two_stage_decode(out, cb, scheme.k, cfg.detector, cfg.decoder)
        support = det.support_hat

    true_set = set(int(u) for u in active)
    found = set(support)
    violated = bool(np.any(cb.violations[active, truth[active] - 1])) if active.size else False
    decode_exact = bool(np.array_equal(est, truth))
    charged = violated and cfg.power_policy == codec.CHARGE
    return TrialResult(
        detection_exact=found == true_set,
        tuple_exact=decode_exact and not charged,
        decode_exact=decode_exact,
        missed=len(true_set - found),
        false_alarm=len(found - true_set),
        message_errors=int(np.count_nonzero(est != truth)),
        power_violation=violated,
        n_active=len(true_set),
    )


def _run_chunk(args) -> list[TrialResult]:
    cfg, scheme, lo, hi = args
    fixed = _codebook(cfg, scheme, 0, None) if cfg.codebook_mode == "fixed" else None
    return [run_trial(cfg, scheme, t, fixed) for t in range(lo, hi)]


def run_trials(cfg: ExperimentConfig, scheme: Scheme, trials: int | None = None) -> list[TrialResult]:
    trials = cfg.trials if trials is None else trials
    if cfg.workers == 1 or trials < 2 * cfg.workers:
        return _run_chunk((cfg, scheme, 0, trials))
    step = math.ceil(trials / (4 * cfg.workers))
    chunks = [(cfg, scheme, lo, min(trials, lo + step)) for lo in range(0, trials, step)]
    with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
        # map preserves chunk order, so aggregation is index-ordered
        return [r for part in pool.map(_run_chunk, chunks) for r in part]


def wilson(errors: int, trials: int) -> tuple[float, float, float]:
    """(p_hat, low, high) with a 95% Wilson score interval."""
    ci = binomtest(errors, trials).proportion_ci(confidence_level=0.95, method="wilson")
    return errors / trials, float(ci.low), float(ci.high)


@dataclass(frozen=True)
class ErrorEstimate:
    p_hat: float
    half_width: float
    low: float
    high: float
    errors: int
    trials: int
    detection_error_rate: float
    decode_error_rate: float
    power_violation_rate: float
    scheme: Scheme | None = None

    @classmethod
    def from_flags(cls, errors: Sequence[bool], scheme=None, det=None, dec=None, pow_=None) -> "ErrorEstimate":
        n = len(errors)
        e = int(sum(errors))
        p, lo, hi = wilson(e, n)
        rate = lambda xs: float(np.mean(xs)) if xs is not None else float("nan")
        return cls(p, (hi - lo) / 2.0, lo, hi, e, n, rate(det), rate(dec), rate(pow_), scheme)


def estimate_error_probability(cfg: ExperimentConfig, scheme: Scheme | None = None) -> ErrorEstimate:
    """Fraction of blocks whose full message tuple is not recovered."""
    scheme = resolve_scheme(cfg) if scheme is None else scheme
    log.info("scheme n=%d n0=%d M=%d ell=%d alpha=%g", scheme.n, scheme.n0, scheme.m, scheme.ell, scheme.alpha)
    res = run_trials(cfg, scheme)
    return ErrorEstimate.from_flags(
        [not r.tuple_exact for r in res], scheme,
        det=[not r.detection_exact for r in res],
        dec=[not r.decode_exact for r in res],
        pow_=[r.power_violation for r in res],
    )


def detection_error_rate(ell: int, alpha: float, power: float, p_prime: float, n0: int, trials: int,
                         seed: int, detector: str = "exhaustive") -> ErrorEstimate:
    """Stage-1 only: how often the detected active set differs from the true one.

    Signatures and activity come from the same keyed streams as full trials,
    so runs at different n0 share activity patterns trial by trial.
    """
    k = alpha * ell
    errors = []
    for t in range(trials):
        sigs = np.stack([
            rngmod.stream(seed, _TRIAL, t, rngmod.CODEBOOK, rngmod.SIGNATURE, u).standard_normal(n0)
            for u in range(ell)
        ]) * math.sqrt(p_prime)
        state = sample_state(ell, alpha, 1, rngmod.stream(seed, _TRIAL, t, rngmod.ACTIVITY))
        noise = rngmod.stream(seed, _TRIAL, t, rngmod.NOISE).standard_normal(n0)
        act = state.support
        y = sigs[act].sum(axis=0) + noise if act.size else noise
        det = detect(y, sigs, k, detector, delta_n(k) if k >= 1 else 0.5)
        errors.append(set(det.support_hat) != set(int(u) for u in act))
    return ErrorEstimate.from_flags(errors, det=errors)


# ---------------------------------------------------------------- reports

FIG1_LAWS = (("n", 1.0), ("n^1.5", 1.5), ("n^2", 2.0), ("n^3", 3.0))


def fig1_rows(n_min: int = 100, n_max: int = 10_000, points: int = 41, power: float = 2.0):
    grid = cap.log_grid(n_min, n_max, points)
    out = {}
    for label, b in FIG1_LAWS:
        law = cap.ScalingLaw(power=power, ell_coef=1.0, ell_exp=b, k_coef=0.25, k_exp=1.0)
        out[label] = cap.sweep_capacity(law, grid)
    return out


def run_fig1(outdir, units: str = "nats", n_min: int = 100, n_max: int = 10_000, points: int = 41,
             power: float = 2.0) -> dict[str, Path]:
    """Capacity curves for k_n = n/4 under four user-growth laws: CSV plus SVG."""
    curves = fig1_rows(n_min, n_max, points, power)
    outdir = Path(outdir)
    header = ("law",) + cap.SWEEP_HEADER
    rows = [
        (label, r.n, r.ell, r.alpha, r.k, r.c1_nats, r.theta, r.capacity_nats, r.capacity_bits)
        for label, rs in curves.items() for r in rs
    ]
    meta = {"preset": "fig1", "power": power, "k_n": "n/4", "laws": ";".join(l for l, _ in FIG1_LAWS),
            "note": "ell_n scalings are a reconstruction"}
    csv_path = outdir / "fig1.csv"
    report.write(csv_path, header, rows, meta)
    scale = 1.0 if units == "nats" else 1.0 / cap.LN2
    svg = plotting.plot_capacity_curves(
        {f"ell_n = {label}": ([r.n for r in rs], [r.capacity_nats * scale for r in rs]) for label, rs in curves.items()},
        outdir / "fig1.svg", units=units, title="P = 2, k_n = n/4",
    )
    return {"csv": csv_path, "svg": svg}


@dataclass
class ValidationReport:
    detection: list[tuple[int, ErrorEstimate]]
    genie: list[tuple[int, ErrorEstimate]]
    end_to_end: list[tuple[int, ErrorEstimate]]
    verdicts: dict[str, bool]
    paths: dict[str, Path] = field(default_factory=dict)


def _non_increasing(xs) -> bool:
    return all(b <= a for a, b in zip(xs, xs[1:]))


def _strictly_decreasing(xs) -> bool:
    return all(b < a for a, b in zip(xs, xs[1:]))


def genie_error_rates(cfg: ExperimentConfig) -> list[tuple[int, ErrorEstimate]]:
    out = []
    for n in cfg.genie_n:
        g = cfg.replace(n=n, ell=cfg.genie_k, alpha=1.0, power=cfg.genie_power, m=cfg.genie_m,
                        n0=0, genie=True, codebook_mode="fresh", power_policy=cfg.genie_policy,
                        decoder="exhaustive")
        out.append((n, estimate_error_probability(g)))
    return out


def detection_sweep(cfg: ExperimentConfig) -> list[tuple[int, ErrorEstimate]]:
    p_prime = default_p_prime(cfg.det_power, cfg.power_margin)
    return [
        (n0, detection_error_rate(cfg.det_ell, cfg.det_alpha, cfg.det_power, p_prime, n0,
                                  cfg.trials, cfg.seed, cfg.detector))
        for n0 in cfg.det_n0
    ]


def end_to_end_doubling(cfg: ExperimentConfig) -> list[tuple[int, ErrorEstimate]]:
    return [(n, estimate_error_probability(cfg.replace(n=n))) for n in (cfg.n, 2 * cfg.n)]


def _estimate_row(x, e: ErrorEstimate, scheme=None):
    s = e.scheme or scheme
    return (x, e.trials, e.errors, e.p_hat, e.half_width, e.detection_error_rate, e.decode_error_rate,
            e.power_violation_rate, s.n0 if s else "", s.m if s else "")


ESTIMATE_HEADER = ("x", "trials", "errors", "p_hat", "half_width", "detection_error_rate",
                   "decode_error_rate", "power_violation_rate", "n0", "m")


def run_scheme_validation(cfg: ExperimentConfig, outdir=None) -> ValidationReport:
    """Stage-1 error vs n0, genie-aided stage-2 error vs n, and end-to-end at n vs 2n."""
    det = detection_sweep(cfg)
    gen = genie_error_rates(cfg)
    e2e = end_to_end_doubling(cfg)
    verdicts = {
        "detection_non_increasing_in_n0": _non_increasing([e.p_hat for _, e in det]),
        "genie_strictly_decreasing_in_n": _strictly_decreasing([e.p_hat for _, e in gen]),
        "end_to_end_decreases_when_n_doubles": e2e[1][1].p_hat < e2e[0][1].p_hat,
    }
    rep = ValidationReport(det, gen, e2e, verdicts)
    if outdir is not None:
        outdir = Path(outdir)
        meta = cfg.echo()
        for name, rows, xlabel in (("detection", det, "n0"), ("genie", gen, "n"), ("end_to_end", e2e, "n")):
            path = outdir / f"validate_{name}.csv"
            report.write(path, ESTIMATE_HEADER, [_estimate_row(x, e) for x, e in rows],
                         {**meta, "experiment": name, "x": xlabel})
            rep.paths[name] = path
            rep.paths[f"{name}_svg"] = plotting.plot_error_rates(
                [x for x, _ in rows], [e.p_hat for _, e in rows], [e.half_width for _, e in rows],
                outdir / f"validate_{name}.svg", xlabel=xlabel, title=name.replace("_", " "),
            )
        path = outdir / "validate_summary.csv"
        report.write(path, ("check", "pass"), sorted(verdicts.items()), meta)
        rep.paths["summary"] = path
    return rep
