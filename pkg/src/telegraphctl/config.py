"""Experiment configuration: flat ``key = value`` text with dotted sections.

All physical quantities carry their unit in the key name (bin_time_ms,
*_per_s). Unknown keys are rejected with the offending line number, so a
typo cannot silently fall back to a default. parse/serialize round-trip
exactly: floats are written with repr().

The same photon model drives the simulator and the filter unless the
explicit mismatch override is set (robustness experiments only).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

from .control import DEFAULT_T_DEPUMP, DEFAULT_T_REPUMP, ControlPolicy
from .errors import ConfigError
from .filtering import FilterConfig
from .model import Belief, PhotonCountModel, TransitionRates, normalize
from .rategrid import GridAxis, GridSpec
from .simulate import SimConfig

DEFAULT_MEAN_COUNTS = (40.0, 28.0, 16.0)
DEFAULT_RATES_OPEN_LOOP = TransitionRates(35.0, 50.0, 59.0, 0.0)
DEFAULT_RATES_FEEDBACK = TransitionRates(35.0, 50.0, 0.0, 0.0)
DEFAULT_SEED = 20260809


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = DEFAULT_SEED
    n_traces: int = 1
    bin_time_ms: float = 1.0
    n_bins: int = 5100
    initial_state: int = 2
    rates: TransitionRates = DEFAULT_RATES_OPEN_LOOP
    mean_counts: tuple[float, float, float] = DEFAULT_MEAN_COUNTS
    family: str = "poisson"
    fano: Optional[float] = None
    initial_belief: Belief = Belief(0.0, 0.0, 1.0)
    propagation: str = "linear"
    allow_model_mismatch: bool = False
    filter_mean_counts: Optional[tuple[float, float, float]] = None
    grid: GridSpec = field(default_factory=GridSpec)
    policy_mode: str = "simple"
    t_repump: float = DEFAULT_T_REPUMP
    t_depump: float = DEFAULT_T_DEPUMP
    target: Belief = Belief(0.0, 1.0, 0.0)

    @property
    def bin_time(self) -> float:
        return self.bin_time_ms * 1e-3

    def photon_model(self) -> PhotonCountModel:
        return PhotonCountModel(
            self.mean_counts, family=self.family, fano=self.fano, bin_time=self.bin_time
        )

    def filter_photon_model(self) -> PhotonCountModel:
        if self.filter_mean_counts is None:
            return self.photon_model()
        return PhotonCountModel(
            self.filter_mean_counts,
            family=self.family,
            fano=self.fano,
            bin_time=self.bin_time,
        )

    def sim_config(self, seed: Optional[int] = None) -> SimConfig:
        return SimConfig(
            rates=self.rates,
            photon_model=self.photon_model(),
            bin_time=self.bin_time,
            n_bins=self.n_bins,
            initial_state=self.initial_state,
            rng_seed=self.seed if seed is None else seed,
        )

    def filter_config(self) -> FilterConfig:
        return FilterConfig(
            photon_model=self.filter_photon_model(),
            rates=self.rates,
            bin_time=self.bin_time,
            initial_belief=self.initial_belief,
            propagation=self.propagation,
            repump_t=self.t_repump,
            depump_t=self.t_depump,
        )

    def control_policy(self) -> ControlPolicy:
        return ControlPolicy(
            mode=self.policy_mode,
            fixed_t_repump=self.t_repump,
            fixed_t_depump=self.t_depump,
            target=self.target,
        )


def feedback_defaults() -> ExperimentConfig:
    """Closed-loop defaults: pulses replace the continuous pumps."""
    return ExperimentConfig(
        rates=DEFAULT_RATES_FEEDBACK, n_bins=300, n_traces=100
    )


def _triple(text: str, lineno: int, key: str) -> tuple[float, float, float]:
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 3:
        raise ConfigError(f"line {lineno}: {key} needs three comma-separated values")
    try:
        return tuple(float(p) for p in parts)
    except ValueError:
        raise ConfigError(f"line {lineno}: {key} has a non-numeric component") from None


def _scalar(cast, text: str, lineno: int, key: str):
    try:
        return cast(text)
    except ValueError:
        raise ConfigError(
            f"line {lineno}: cannot parse {key} value {text!r} as {cast.__name__}"
        ) from None


def _bool(text: str, lineno: int, key: str) -> bool:
    if text.lower() in ("true", "1", "yes"):
        return True
    if text.lower() in ("false", "0", "no"):
        return False
    raise ConfigError(f"line {lineno}: {key} must be true or false, got {text!r}")


def parse_config(text: str, base: Optional[ExperimentConfig] = None) -> ExperimentConfig:
    """Parse flat dotted-key config text on top of ``base`` (or defaults)."""
    cfg = base if base is not None else ExperimentConfig()
    rates = dict(
        r21=cfg.rates.r21,
        r10=cfg.rates.r10,
        r_repump=cfg.rates.r_repump,
        r_depump=cfg.rates.r_depump,
    )
    axes = {
        name: {"min": axis.min, "max": axis.max, "points": axis.n_points}
        for name, axis in (
            ("r21", cfg.grid.r21),
            ("r10", cfg.grid.r10),
            ("repump", cfg.grid.r_repump),
        )
    }
    grid_cells = cfg.grid.max_cells
    updates: dict = {}

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key or not value:
            raise ConfigError(f"line {lineno}: empty key or value")
        if key == "run.seed":
            updates["seed"] = _scalar(int, value, lineno, key)
        elif key == "run.n_traces":
            updates["n_traces"] = _scalar(int, value, lineno, key)
        elif key == "sim.bin_time_ms":
            updates["bin_time_ms"] = _scalar(float, value, lineno, key)
        elif key == "sim.n_bins":
            updates["n_bins"] = _scalar(int, value, lineno, key)
        elif key == "sim.initial_state":
            updates["initial_state"] = _scalar(int, value, lineno, key)
        elif key == "rates.r21_per_s":
            rates["r21"] = _scalar(float, value, lineno, key)
        elif key == "rates.r10_per_s":
            rates["r10"] = _scalar(float, value, lineno, key)
        elif key == "rates.repump_per_s":
            rates["r_repump"] = _scalar(float, value, lineno, key)
        elif key == "rates.depump_per_s":
            rates["r_depump"] = _scalar(float, value, lineno, key)
        elif key == "photon.mean_counts_per_bin":
            updates["mean_counts"] = _triple(value, lineno, key)
        elif key == "photon.family":
            updates["family"] = value
        elif key == "photon.fano":
            updates["fano"] = _scalar(float, value, lineno, key)
        elif key == "filter.initial_belief":
            updates["initial_belief"] = normalize(_triple(value, lineno, key))
        elif key == "filter.propagation":
            updates["propagation"] = value
        elif key == "filter.allow_model_mismatch":
            updates["allow_model_mismatch"] = _bool(value, lineno, key)
        elif key == "filter.mean_counts_per_bin":
            updates["filter_mean_counts"] = _triple(value, lineno, key)
        elif key.startswith("grid."):
            parts = key.split(".")
            if len(parts) == 2 and parts[1] == "max_cells":
                grid_cells = _scalar(int, value, lineno, key)
                continue
            if len(parts) != 3 or parts[1] not in axes:
                raise ConfigError(f"line {lineno}: unknown grid key {key!r}")
            if parts[2] == "min_per_s":
                axes[parts[1]]["min"] = _scalar(float, value, lineno, key)
            elif parts[2] == "max_per_s":
                axes[parts[1]]["max"] = _scalar(float, value, lineno, key)
            elif parts[2] == "points":
                axes[parts[1]]["points"] = _scalar(int, value, lineno, key)
            else:
                raise ConfigError(f"line {lineno}: unknown grid key {key!r}")
        elif key == "policy.mode":
            updates["policy_mode"] = value
        elif key == "policy.t_repump":
            updates["t_repump"] = _scalar(float, value, lineno, key)
        elif key == "policy.t_depump":
            updates["t_depump"] = _scalar(float, value, lineno, key)
        elif key == "policy.target":
            updates["target"] = normalize(_triple(value, lineno, key))
        else:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")

    try:
        updates["rates"] = TransitionRates(**rates)
        updates["grid"] = GridSpec(
            r21=GridAxis(axes["r21"]["min"], axes["r21"]["max"], axes["r21"]["points"]),
            r10=GridAxis(axes["r10"]["min"], axes["r10"]["max"], axes["r10"]["points"]),
            r_repump=GridAxis(
                axes["repump"]["min"], axes["repump"]["max"], axes["repump"]["points"]
            ),
            max_cells=grid_cells,
        )
        cfg = replace(cfg, **updates)
        _validate(cfg)
    except ConfigError:
        raise
    except Exception as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def _validate(cfg: ExperimentConfig) -> None:
    if cfg.filter_mean_counts is not None and not cfg.allow_model_mismatch:
        raise ConfigError(
            "filter.mean_counts_per_bin requires filter.allow_model_mismatch = true"
        )
    if cfg.n_traces < 1:
        raise ConfigError("run.n_traces must be >= 1")
    # constructing the derived objects performs the remaining validation
    cfg.photon_model()
    cfg.filter_photon_model()
    cfg.sim_config()
    cfg.filter_config()
    cfg.control_policy()


def serialize_config(cfg: ExperimentConfig) -> str:
    """Canonical text form; parse(serialize(cfg)) == cfg."""
    lines = [
        f"run.seed = {cfg.seed}",
        f"run.n_traces = {cfg.n_traces}",
        f"sim.bin_time_ms = {cfg.bin_time_ms!r}",
        f"sim.n_bins = {cfg.n_bins}",
        f"sim.initial_state = {cfg.initial_state}",
        f"rates.r21_per_s = {cfg.rates.r21!r}",
        f"rates.r10_per_s = {cfg.rates.r10!r}",
        f"rates.repump_per_s = {cfg.rates.r_repump!r}",
        f"rates.depump_per_s = {cfg.rates.r_depump!r}",
        "photon.mean_counts_per_bin = "
        + ",".join(repr(x) for x in cfg.mean_counts),
        f"photon.family = {cfg.family}",
    ]
    if cfg.fano is not None:
        lines.append(f"photon.fano = {cfg.fano!r}")
    lines += [
        "filter.initial_belief = "
        + ",".join(repr(x) for x in cfg.initial_belief.as_tuple()),
        f"filter.propagation = {cfg.propagation}",
    ]
    if cfg.allow_model_mismatch:
        lines.append("filter.allow_model_mismatch = true")
    if cfg.filter_mean_counts is not None:
        lines.append(
            "filter.mean_counts_per_bin = "
            + ",".join(repr(x) for x in cfg.filter_mean_counts)
        )
    for name, axis in (
        ("r21", cfg.grid.r21),
        ("r10", cfg.grid.r10),
        ("repump", cfg.grid.r_repump),
    ):
        lines += [
            f"grid.{name}.min_per_s = {axis.min!r}",
            f"grid.{name}.max_per_s = {axis.max!r}",
            f"grid.{name}.points = {axis.n_points}",
        ]
    lines += [
        f"grid.max_cells = {cfg.grid.max_cells}",
        f"policy.mode = {cfg.policy_mode}",
        f"policy.t_repump = {cfg.t_repump!r}",
        f"policy.t_depump = {cfg.t_depump!r}",
        "policy.target = " + ",".join(repr(x) for x in cfg.target.as_tuple()),
    ]
    return "\n".join(lines) + "\n"
