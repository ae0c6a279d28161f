"""Declarative experiment configs and the runner behind ``gap run``."""

from __future__ import annotations

import copy
import dataclasses
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

from gap.baselines import (
    DivergenceKind,
    divergence_to_target,
    laplace_approx,
    minimize_divergence_1d,
    quadrature_grid,
)
from gap.conjugate import (
    GaussianDataSummary,
    NormalGammaParams,
    ng_maximize_log_g,
    ng_posterior,
)
from gap.core import GaussianModel, OptimizerConfig, ScalarGaussian, TargetDensity
from gap.errors import GapError, InvalidSpec, NoConvergence
from gap.estimators import draw_samples, estimate_overlap
from gap.geometry import spherical_fisher_distance
from gap.io import SCHEMA_VERSION, write_density_curves, write_json, write_trace_csv
from gap.optimizer import GapResult, gap1d_run, gap_run
from gap.targets import (
    LogisticDataset,
    MixtureSpec,
    gaussian_target,
    generate_logistic_data,
    logistic_posterior_target,
    mixture_target,
    student_t1_target,
)

__all__ = [
    "EXPERIMENTS",
    "ExperimentConfig",
    "ExperimentOutcome",
    "build_target",
    "load_config",
    "normal_gamma_oracle",
    "preset",
    "run_experiment",
]

EXPERIMENTS = ("t1", "logistic", "mixture-near", "mixture-far", "normal-gamma-oracle", "custom")
PATHS = ("general", "scalar")
# Stream id for the Monte Carlo distance of a multivariate fit; optimizer iterations use 0, 1, ...
STREAM_EVAL = (1 << 62) + 7
EVAL_SAMPLES = 100_000
CURVE_NODES = 2001

_OPTIMIZER_KEYS = {f.name for f in dataclasses.fields(OptimizerConfig)} - {"seed"}


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce one run.

    ``target`` is a JSON-style dict whose ``kind`` is one of ``t1``, ``mixture``,
    ``gaussian``, ``logistic`` or ``normal-gamma``.  ``init`` is ``{"mean", "chol"}``, or
``"laplace"`` to start from the Laplace approximation (a standard normal if omitted).
    ``tail_window > 0`` additionally reports the average of the last iterates.
    """

    experiment: str
    target: dict
    init: Optional[dict | str] = None
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    seed: int = 0
    path: str = "general"
    tail_window: int = 0
    laplace: bool = False
    divergences: tuple[str, ...] = ()
    output_dir: str = "gap-out"

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise InvalidSpec(f"unknown experiment {self.experiment!r}; choose from {', '.join(EXPERIMENTS)}")
        if self.path not in PATHS:
            raise InvalidSpec(f"path must be one of {PATHS}")
        if self.tail_window < 0:
            raise InvalidSpec("tail_window must be nonnegative")
        if not isinstance(self.target, dict) or "kind" not in self.target:
            raise InvalidSpec("target must be an object with a 'kind'")
        object.__setattr__(self, "divergences", tuple(self.divergences))
        for name in self.divergences:
            try:
                DivergenceKind.parse(name)
            except ValueError as exc:
                raise InvalidSpec(f"bad divergence {name!r}: {exc}") from exc
        if self.optimizer.seed != self.seed:
            object.__setattr__(self, "optimizer", dataclasses.replace(self.optimizer, seed=self.seed))
        if isinstance(self.init, str) and self.init != "laplace":
            raise InvalidSpec(f"init must be an object or 'laplace', got {self.init!r}")
        data_csv = self.target.get("data_csv")
        if data_csv is not None and not Path(data_csv).is_file():
            raise InvalidSpec(f"dataset file {data_csv} does not exist")

    def to_dict(self) -> dict:
        opt = {k: _plain(getattr(self.optimizer, k)) for k in sorted(_OPTIMIZER_KEYS)}
        return {
            "experiment": self.experiment,
            "seed": self.seed,
            "target": copy.deepcopy(self.target),
            "init": copy.deepcopy(self.init),
            "optimizer": opt,
            "path": self.path,
            "tail_window": self.tail_window,
            "baselines": {"laplace": self.laplace, "divergences": list(self.divergences)},
            "output_dir": self.output_dir,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        """Build from a dict; missing fields come from the named experiment's preset."""
        if not isinstance(data, dict):
            raise InvalidSpec("config must be a JSON object")
        unknown = set(data) - {"experiment", "seed", "target", "init", "optimizer", "path",
                               "tail_window", "baselines", "output_dir"}
        if unknown:
            raise InvalidSpec(f"unknown config keys: {sorted(unknown)}")
        name = data.get("experiment")
        if name not in EXPERIMENTS:
            raise InvalidSpec(f"unknown experiment {name!r}; choose from {', '.join(EXPERIMENTS)}")
        base = preset(name).to_dict() if name != "custom" else _custom_skeleton()
        merged = _merge(base, data)
        opt = merged["optimizer"]
        bad = set(opt) - _OPTIMIZER_KEYS
        if bad:
            raise InvalidSpec(f"unknown optimizer keys: {sorted(bad)}")
        baselines = merged.get("baselines") or {}
        if set(baselines) - {"laplace", "divergences"}:
            raise InvalidSpec("baselines takes only 'laplace' and 'divergences'")
        try:
            seed = int(merged["seed"])
            optimizer = OptimizerConfig(seed=seed, **opt)
            return cls(
                experiment=name,
                target=merged["target"],
                init=merged.get("init"),
                optimizer=optimizer,
                seed=seed,
                path=merged["path"],
                tail_window=int(merged["tail_window"]),
                laplace=bool(baselines.get("laplace", False)),
                divergences=tuple(baselines.get("divergences", ())),
                output_dir=str(merged["output_dir"]),
            )
        except (TypeError, ValueError) as exc:
            if isinstance(exc, InvalidSpec):
                raise
            raise InvalidSpec(str(exc)) from exc

    def with_overrides(self, **kwargs) -> "ExperimentConfig":
        """Copy with CLI-style overrides: seed, samples, max_iters, step_mu, step_l, output_dir."""
        opt = {}
        if kwargs.get("samples") is not None:
            opt["mc_samples"] = kwargs["samples"]
        if kwargs.get("max_iters") is not None:
            opt["max_iters"] = kwargs["max_iters"]
        if kwargs.get("step_mu") is not None:
            opt["step_mu"] = kwargs["step_mu"]
        if kwargs.get("step_l") is not None:
            opt["step_l"] = kwargs["step_l"]
        top = {}
        if kwargs.get("seed") is not None:
            top["seed"] = kwargs["seed"]
            opt["seed"] = kwargs["seed"]
        if kwargs.get("output_dir") is not None:
            top["output_dir"] = str(kwargs["output_dir"])
        try:
            optimizer = dataclasses.replace(self.optimizer, **opt)
        except ValueError as exc:
            raise InvalidSpec(str(exc)) from exc
        return dataclasses.replace(self, optimizer=optimizer, **top)


def _plain(value):
    if isinstance(value, (list, tuple, np.ndarray)):
        return [float(v) for v in value]
    return value


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if key in ("optimizer", "baselines") and isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = {**out[key], **value}
        else:
            out[key] = copy.deepcopy(value)
    return out


def _custom_skeleton() -> dict:
    return {
        "experiment": "custom",
        "seed": 0,
        "init": None,
        "optimizer": {},
        "path": "general",
        "tail_window": 0,
        "baselines": {"laplace": False, "divergences": []},
        "output_dir": "gap-out",
    }


def _scalar_init(mean: float, sigma: float) -> dict:
    return {"mean": [mean], "chol": [[sigma]]}


def preset(name: str) -> ExperimentConfig:
    """Default configuration of a named experiment."""
    if name == "t1":
        return ExperimentConfig(
            experiment="t1",
            target={"kind": "t1"},
            init=_scalar_init(10.0, 5.0),
            optimizer=OptimizerConfig(step_mu=0.1, step_l=5.0, mc_samples=10_000, max_iters=1000,
                                      early_stop=False),
            path="scalar",
            laplace=True,
            divergences=("hellinger", "kl"),
            output_dir="gap-out/t1",
        )
    if name in ("mixture-near", "mixture-far"):
        spec = ({"weights": [0.7, 0.3], "means": [0.0, 5.0], "variances": [1.0, 1.0]}
                if name == "mixture-near" else
                {"weights": [0.9, 0.1], "means": [0.0, 15.0], "variances": [1.0, 1.0]})
        return ExperimentConfig(
            experiment=name,
            target={"kind": "mixture", **spec},
            init=_scalar_init(2.0, 1.0),
            optimizer=OptimizerConfig(step_mu=0.1, step_l=0.5, mc_samples=10_000, max_iters=2000,
                                      early_stop=False),
            path="scalar",
            tail_window=1000,
            laplace=True,
            divergences=("kl", "reverse_kl", "hellinger"),
            output_dir=f"gap-out/{name}",
        )
    if name == "logistic":
        return ExperimentConfig(
            experiment="logistic",
            target={"kind": "logistic", "n": 100, "beta": [0.5, -1.5, 1.0], "rho": 0.7, "data_seed": 0,
                    "data_csv": None, "prior_var": 100.0},
            init="laplace",
            optimizer=OptimizerConfig(step_mu=0.02, step_l=0.02, mc_samples=10_000, max_iters=1000,
                                      early_stop=False),
            path="general",
            tail_window=250,
            laplace=True,
            output_dir="gap-out/logistic",
        )
    if name == "normal-gamma-oracle":
        return ExperimentConfig(
            experiment="normal-gamma-oracle",
            target={"kind": "normal-gamma", "instances": 50},
            output_dir="gap-out/normal-gamma-oracle",
        )
    if name == "custom":
        raise InvalidSpec("the custom experiment has no preset; supply a config file")
    raise InvalidSpec(f"unknown experiment {name!r}")


def load_config(path: str | Path) -> ExperimentConfig:
    """Parse a JSON config file.

    Raises:
        InvalidSpec: the file is missing, is not valid JSON, or fails validation.
    """
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except FileNotFoundError as exc:
        raise InvalidSpec(f"config file {path} does not exist") from exc
    except json.JSONDecodeError as exc:
        raise InvalidSpec(f"{path} is not valid JSON: {exc}") from exc
    return ExperimentConfig.from_dict(data)


def build_target(spec: dict) -> TargetDensity:
    kind = spec.get("kind")
    try:
        if kind == "t1":
            return student_t1_target()
        if kind == "mixture":
            return mixture_target(MixtureSpec(spec["weights"], spec["means"], spec["variances"]))
        if kind == "gaussian":
            return gaussian_target(GaussianModel.from_dict(spec), float(spec.get("scale", 1.0)))
        if kind == "logistic":
            return logistic_posterior_target(_logistic_data(spec))
    except KeyError as exc:
        raise InvalidSpec(f"target of kind {kind!r} is missing {exc}") from exc
    raise InvalidSpec(f"unknown target kind {kind!r}")


def _logistic_data(spec: dict) -> LogisticDataset:
    prior_var = float(spec.get("prior_var", 100.0))
    if spec.get("data_csv"):
        d = len(spec.get("beta", [0, 0, 0]))
        return LogisticDataset.from_csv(spec["data_csv"], np.zeros(d), prior_var * np.eye(d))
    return generate_logistic_data(int(spec["n"]), spec["beta"], float(spec["rho"]), int(spec["data_seed"]),
                                  prior_cov=prior_var * np.eye(3))


# --- running ---------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ExperimentOutcome:
    result: dict
    gap: Optional[GapResult]
    out_dir: Path


def normal_gamma_oracle(instances: int, seed: int) -> dict:
    """Maximize ``log g`` for random (prior, data) draws and compare with the posterior."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        prior = NormalGammaParams(rng.normal(0.0, 2.0), rng.uniform(0.2, 5.0),
                                  rng.uniform(0.5, 5.0), rng.uniform(0.5, 5.0))
        x = rng.normal(rng.normal(0.0, 2.0), rng.uniform(0.3, 3.0), size=int(rng.integers(0, 50)))
        data = GaussianDataSummary.from_data(x)
        post = ng_posterior(prior, data)
        start = NormalGammaParams(post.mu + rng.normal(0.0, 0.5), post.lam * rng.uniform(0.5, 2.0),
                                  post.alpha * rng.uniform(0.5, 2.0), post.beta * rng.uniform(0.5, 2.0))
        est = ng_maximize_log_g(prior, data, start)
        truth = post.as_array()
        rel = np.abs(est.as_array() - truth) / np.maximum(np.abs(truth), 1e-12)
        worst = max(worst, float(np.max(rel)))
    return {"instances": instances, "max_rel_param_error": worst}


def _distance_to_target(target: TargetDensity, model: GaussianModel, seed: int) -> float:
    if target.dim == 1:
        scalar = ScalarGaussian(model.mean[0], model.chol[0, 0])
        h2 = divergence_to_target(target, scalar, DivergenceKind.hellinger())
        return spherical_fisher_distance(1.0 - h2)
    z = draw_samples(model, EVAL_SAMPLES, seed, stream=STREAM_EVAL)
    overlap, _ = estimate_overlap(model, target, z)
    return spherical_fisher_distance(overlap)


def _model_block(model: GaussianModel, target: TargetDensity, seed: int, **extra) -> dict:
    return {"mean": model.mean.tolist(), "chol": model.chol.tolist(),
            "distance_to_target": _distance_to_target(target, model, seed), **extra}


def _laplace_start(target: TargetDensity, init: GaussianModel) -> np.ndarray:
    if target.dim != 1:
        return np.zeros(target.dim)
    # Highest point of the density on a grid around the target and the init.
    grid = quadrature_grid(target, ScalarGaussian(init.mean[0], init.chol[0, 0]))
    return np.array([grid[np.argmax(target.log_sqrt_at(grid[:, None]))]])


def _density_curves(target: TargetDensity, fits: dict[str, GaussianModel], path: Path) -> None:
    lo = min(m.mean[0] - 6 * abs(m.chol[0, 0]) for m in fits.values())
    hi = max(m.mean[0] + 6 * abs(m.chol[0, 0]) for m in fits.values())
    if target.bounds is not None and target.bounds[1] - target.bounds[0] < 100:
        lo, hi = min(lo, target.bounds[0]), max(hi, target.bounds[1])
    grid = np.linspace(lo, hi, CURVE_NODES)
    cols = {"target": target.density_1d(grid)}
    for name, m in fits.items():
        cols[name] = np.exp(2.0 * ScalarGaussian(m.mean[0], m.chol[0, 0]).log_sqrt_density(grid))
    write_density_curves(grid, cols, path)


def run_experiment(config: ExperimentConfig) -> ExperimentOutcome:
    """Run one experiment and write its files under ``config.output_dir``.

    Raises:
        InvalidSpec: the configuration cannot be turned into a target or init.
        NoConvergence: the optimizer failed; ``trace.csv`` still holds the partial run.
        OSError: the output files could not be written.
    """
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    result: dict[str, Any] = {"schema_version": SCHEMA_VERSION, "experiment": config.experiment,
                              "seed": config.seed}

    if config.experiment == "normal-gamma-oracle" or config.target.get("kind") == "normal-gamma":
        oracle = normal_gamma_oracle(int(config.target.get("instances", 50)), config.seed)
        result.update({"gap": None, "baselines": {}, **oracle,
                       "runtime_seconds": time.perf_counter() - started})
        write_json(result, out / "result.json")
        return ExperimentOutcome(result, None, out)

    target = build_target(config.target)
    laplace_fit = None
    if config.init is None:
        init = GaussianModel.standard(target.dim)
    elif config.init == "laplace":
        try:
            laplace_fit = laplace_approx(target, _laplace_start(target, GaussianModel.standard(target.dim)))
        except GapError as exc:
            raise NoConvergence(f"Laplace initialization failed: {exc}") from exc
        init = laplace_fit
    else:
        try:
            init = GaussianModel.from_dict(config.init)
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidSpec(f"bad init: {exc}") from exc
    if init.dim != target.dim:
        raise InvalidSpec(f"init has dimension {init.dim}, target has {target.dim}")
    if config.path == "scalar" and target.dim != 1:
        raise InvalidSpec("the scalar path needs a 1-D target")

    try:
        if config.path == "scalar":
            run = gap1d_run(ScalarGaussian(init.mean[0], init.chol[0, 0]), target, config.optimizer)
        else:
            run = gap_run(init, target, config.optimizer)
    except NoConvergence as exc:
        if exc.partial is not None:
            write_trace_csv(exc.partial.trace, out / "trace.csv", target.dim)
        raise
    write_trace_csv(run.trace, out / "trace.csv", target.dim)

    seed = config.seed
    result["gap"] = _model_block(run.final_model, target, seed, converged=run.converged,
                                 stop_reason=run.stop_reason.value, iterations=len(run.trace))
    fits = {"gap": run.final_model}
    if config.tail_window > 0:
        mean, vl = run.tail_mean(config.tail_window)
        tail = GaussianModel.from_vech(mean, vl)
        result["gap_tail_average"] = _model_block(tail, target, seed, window=config.tail_window)
        fits["gap_tail_average"] = tail

    baselines: dict[str, Any] = {}
    if config.laplace:
        try:
            lap = laplace_fit or laplace_approx(target, _laplace_start(target, init))
            baselines["laplace"] = _model_block(lap, target, seed)
            fits["laplace"] = lap
        except GapError as exc:
            baselines["laplace"] = {"error": str(exc)}
    for name in config.divergences:
        kind = DivergenceKind.parse(name)
        if target.dim != 1:
            baselines[name] = {"error": "divergence baselines are 1-D only"}
            continue
        try:
            fit = minimize_divergence_1d(target, kind, ScalarGaussian(init.mean[0], init.chol[0, 0]))
        except GapError as exc:
            baselines[name] = {"error": str(exc)}
            continue
        model = fit.to_model()
        baselines[name] = _model_block(model, target, seed, divergence=divergence_to_target(target, fit, kind))
        fits[name] = model
    result["baselines"] = baselines

    if target.dim == 1:
        _density_curves(target, fits, out / "density_curves.csv")
    result["runtime_seconds"] = time.perf_counter() - started
    write_json(result, out / "result.json")
    return ExperimentOutcome(result, run, out)
