"""Declarative experiment specs: flat key-value configs in, CSV traces out.

A spec is an INI-style file with sections (experiment / cost / dataset /
init / optimizer / metrics / output). Presets shipping with the package are
just such files, so every canned experiment is diffable and versionable.
Each output CSV embeds the fully resolved config and seed as '#' comment
lines, making any trace reproducible from its own header.
"""

from __future__ import annotations

import configparser
import io
import json
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import costs as C
from . import data as D
from . import metrics as M
from . import mlp as NN
from . import optimizer as O
from .errors import ConfigError

CSV_HEADER = "iter,loss,grad_norm,rp,dir,sharpness,identity_residual,tau_dir_mean,tau_dir_std"

_SECTIONS = ("experiment", "cost", "dataset", "init", "optimizer", "metrics", "output")


def parse_number(text: str, *, where: str) -> float:
    """Floats, with 'a/b' fractions accepted so step sizes stay exact in configs."""
    text = text.strip()
    try:
        if "/" in text:
            num, den = text.split("/", 1)
            return float(num) / float(den)
        return float(text)
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"{where}: cannot parse number {text!r}") from exc


def _parse_list(text: str, where: str) -> List[float]:
    items = [t for t in (p.strip() for p in text.split(",")) if t]
    if not items:
        raise ConfigError(f"{where}: empty list")
    return [parse_number(t, where=where) for t in items]


def _parse_bool(text: str, where: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "yes", "on", "1"):
        return True
    if t in ("false", "no", "off", "0"):
        return False
    raise ConfigError(f"{where}: expected a boolean, got {text!r}")


@dataclass
class ExperimentSpec:
    """One declarative run: cost description, optimizer settings, metric flags."""

    name: str
    cost: dict
    dataset: dict
    init: dict
    etas: List[float]
    optimizer: dict
    algorithm: str
    flags: O.MetricFlags
    output_path: str
    resolved: List[str] = field(default_factory=list)  # header echo lines

    def optimizer_config(self, eta: float) -> O.OptimizerConfig:
        return O.OptimizerConfig(eta=eta, **self.optimizer)


def _section(cp: configparser.ConfigParser, name: str) -> dict:
    return dict(cp[name]) if cp.has_section(name) else {}


def parse_spec(source, name_hint: str = "<config>") -> ExperimentSpec:
    """Parse a spec from a path or file-like object; errors carry field names."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        if hasattr(source, "read"):
            cp.read_file(source, source=name_hint)
        else:
            with open(source, "r") as fh:
                cp.read_file(fh, source=str(source))
    except OSError as exc:
        raise ConfigError(f"cannot read config {source}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"config parse error: {exc}") from exc

    for sec in cp.sections():
        if sec not in _SECTIONS:
            raise ConfigError(f"unknown config section [{sec}]")

    exp = _section(cp, "experiment")
    name = exp.get("name", "").strip()
    if not name:
        raise ConfigError("experiment.name: required and nonempty")

    cost = _section(cp, "cost")
    if "kind" not in cost:
        raise ConfigError("cost.kind: required")

    dataset = _section(cp, "dataset")
    init = _section(cp, "init")

    opt = _section(cp, "optimizer")
    if "eta" not in opt:
        raise ConfigError("optimizer.eta: required")
    etas = _parse_list(opt.pop("eta"), "optimizer.eta")
    algorithm = opt.pop("algorithm", "gd").strip().lower()
    if algorithm not in ("gd", "sgd"):
        raise ConfigError(f"optimizer.algorithm: expected gd or sgd, got {algorithm!r}")

    opt_kwargs = {}
    for key, caster in (
        ("max_iter", int),
        ("metric_cadence", int),
        ("seed", int),
        ("batch_size", int),
        ("stop_accuracy", None),
        ("blowup_threshold", None),
    ):
        if key in opt:
            raw = opt.pop(key)
            where = f"optimizer.{key}"
            try:
                opt_kwargs[key] = caster(raw) if caster else parse_number(raw, where=where)
            except ValueError as exc:
                raise ConfigError(f"{where}: cannot parse {raw!r}") from exc
    if opt:
        raise ConfigError(f"optimizer: unknown keys {sorted(opt)}")
    if algorithm == "sgd" and "batch_size" not in opt_kwargs:
        raise ConfigError("optimizer.batch_size: required for sgd")

    met = _section(cp, "metrics")
    flag_kwargs = {}
    for key in ("rp", "dir", "sharpness", "identity", "tau_sweep", "expected_rp"):
        if key in met:
            flag_kwargs[key] = _parse_bool(met.pop(key), f"metrics.{key}")
    if "expected_rp_batches" in met:
        flag_kwargs["expected_rp_batches"] = int(met.pop("expected_rp_batches"))
    if "tau_points" in met:
        flag_kwargs["grid"] = M.QuadratureGrid.default(int(met.pop("tau_points")))
    if met:
        raise ConfigError(f"metrics: unknown keys {sorted(met)}")
    flags = O.MetricFlags(**flag_kwargs)

    out = _section(cp, "output")
    output_path = out.get("path", f"{name}.csv")

    resolved = []
    for sec in cp.sections():
        for key, val in cp[sec].items():
            resolved.append(f"{sec}.{key} = {val}")

    return ExperimentSpec(
        name=name, cost=cost, dataset=dataset, init=init, etas=etas,
        optimizer=opt_kwargs, algorithm=algorithm, flags=flags,
        output_path=output_path, resolved=resolved,
    )


def _build_dataset(spec: ExperimentSpec) -> D.Dataset:
    sec = dict(spec.dataset)
    source = sec.get("source", "synthetic").strip().lower()
    if source == "synthetic":
        try:
            synth = D.SynthSpec(
                n=int(sec.get("n", 512)),
                d=int(sec.get("d", 16)),
                classes=int(sec.get("classes", 4)),
                cluster_spread=parse_number(sec.get("spread", "0.35"), where="dataset.spread"),
                seed=int(sec.get("seed", 0)),
            )
        except ValueError as exc:
            raise ConfigError(f"dataset: {exc}") from exc
        return D.synth_dataset(synth)
    if source == "cifar10":
        path = sec.get("path", "").strip()
        if not path:
            raise ConfigError("dataset.path: required for source=cifar10")
        if not Path(path).exists():
            raise ConfigError(f"dataset.path: {path} does not exist")
        return D.load_cifar10_binary(path, int(sec.get("n_take", 5000)))
    raise ConfigError(f"dataset.source: unknown source {source!r}")


def build_cost(spec: ExperimentSpec):
    """Instantiate (cost, theta0) from the spec's cost/dataset/init sections."""
    sec = dict(spec.cost)
    kind = sec.pop("kind").strip().lower()
    gamma = parse_number(sec.pop("weight_decay", "0"), where="cost.weight_decay")

    if kind in ("quadratic", "tanh_quadratic"):
        if "p_diag" not in sec:
            raise ConfigError("cost.p_diag: required for quadratic kinds")
        diag = _parse_list(sec.pop("p_diag"), "cost.p_diag")
        P = np.diag(diag)
        q = None
        if "q" in sec:
            q = np.array(_parse_list(sec.pop("q"), "cost.q"))
        r = parse_number(sec.pop("r", "0"), where="cost.r")
        cost = C.make_quadratic(P, q, r) if kind == "quadratic" else C.make_tanh_quadratic(P, q, r)
    elif kind in ("single_neuron_linear", "single_neuron_tanh"):
        cost = C.make_single_neuron(kind.rsplit("_", 1)[-1])
    elif kind == "mlp":
        dataset = _build_dataset(spec)
        hidden = [int(h) for h in _parse_list(sec.pop("hidden", "32, 32"), "cost.hidden")]
        cost = NN.make_mlp(
            dataset,
            hidden_sizes=hidden,
            activation=sec.pop("activation", "tanh").strip().lower(),
            normalize_first=_parse_bool(sec.pop("normalize_first", "false"), "cost.normalize_first"),
            normalize_eps=parse_number(sec.pop("normalize_eps", "0"), where="cost.normalize_eps"),
        )
    else:
        raise ConfigError(f"cost.kind: unknown kind {kind!r}")
    if sec:
        raise ConfigError(f"cost: unknown keys {sorted(sec)}")

    if gamma > 0:
        cost = C.wrap_weight_decay(cost, gamma)

    init = dict(spec.init)
    if "theta0" in init:
        theta0 = np.array(_parse_list(init["theta0"], "init.theta0"))
        if theta0.shape[0] != cost.dimension:
            raise ConfigError(
                f"init.theta0: got {theta0.shape[0]} entries, cost needs {cost.dimension}"
            )
    elif kind == "mlp":
        inner = cost.inner if isinstance(cost, C.WeightDecayWrapped) else cost
        theta0 = inner.init_params(int(init.get("seed", 0)))
    else:
        raise ConfigError("init.theta0: required for closed-form costs")
    return cost, theta0


def _fmt(x) -> str:
    return "" if x is None else repr(float(x))


def write_trace_csv(path, spec: ExperimentSpec, eta: float, cost, samples,
                    config: O.OptimizerConfig) -> None:
    lines = [
        "# gdscope trace",
        f"# name = {spec.name}",
        f"# eta = {eta!r}",
        f"# algorithm = {spec.algorithm}",
    ]
    lines += [f"# {item}" for item in spec.resolved]
    # resolved runtime settings, so the trace is reproducible even where the
    # config file relied on defaults
    lines += [
        f"# resolved.optimizer.seed = {config.seed}",
        f"# resolved.optimizer.max_iter = {config.max_iter}",
        f"# resolved.metric_cadence = {config.cadence_for(cost)}",
        f"# resolved.init.seed = {spec.init.get('seed', 0)}",
    ]
    if spec.flags.sharpness and not cost.is_c2:
        lines.append("# sharpness = finite-difference surrogate (cost is not C2)")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
        fh.write(CSV_HEADER + "\n")
        for s in samples:
            fh.write(
                f"{s.iteration},{_fmt(s.loss)},{_fmt(s.grad_norm)},{_fmt(s.rp)},"
                f"{_fmt(s.dir)},{_fmt(s.sharpness)},{_fmt(s.identity_residual)},"
                f"{_fmt(s.tau_dir_mean)},{_fmt(s.tau_dir_std)}\n"
            )


@dataclass
class RunSummary:
    name: str
    eta: float
    outcome: str
    label: str
    regime: Optional[str]
    regime_reason: Optional[str]
    final_loss: float
    iterations: int
    runtime_s: float
    seed: int
    csv_path: str

    def to_json(self) -> str:
        return json.dumps(self.__dict__, sort_keys=True)


def _outcome_label(traj: O.Trajectory) -> str:
    if traj.outcome == O.OUTCOME_DIVERGED:
        return "diverged"
    if traj.outcome == O.OUTCOME_CONVERGED:
        return "converged"
    return "bounded-oscillation"


def run_spec(spec: ExperimentSpec, outdir=".", eta: Optional[float] = None,
             suffix: str = "") -> RunSummary:
    """Execute one (spec, eta) run and write its trace + summary files."""
    the_eta = spec.etas[0] if eta is None else eta
    cost, theta0 = build_cost(spec)
    config = spec.optimizer_config(the_eta)
    started = time.perf_counter()
    if spec.algorithm == "sgd":
        traj = O.sgd_run(cost, theta0, config, spec.flags)
    else:
        traj = O.gd_run(cost, theta0, config, spec.flags)
    runtime = time.perf_counter() - started

    regime = reason = None
    defined_rp = sum(1 for s in traj.samples if s.rp is not None)
    if traj.outcome == O.OUTCOME_DIVERGED or defined_rp >= 10:
        call = O.classify_regime(traj, the_eta)
        regime, reason = call.regime, call.reason

    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    if suffix:
        base = Path(spec.output_path)
        csv_path = outdir / f"{base.stem}{suffix}{base.suffix or '.csv'}"
    else:
        csv_path = outdir / spec.output_path
    write_trace_csv(csv_path, spec, the_eta, cost, traj.samples, config)

    summary = RunSummary(
        name=spec.name, eta=the_eta, outcome=traj.outcome,
        label=_outcome_label(traj), regime=regime, regime_reason=reason,
        final_loss=traj.final_loss, iterations=traj.samples[-1].iteration,
        runtime_s=round(runtime, 4), seed=config.seed, csv_path=str(csv_path),
    )
    with open(str(csv_path) + ".summary.json", "w") as fh:
        fh.write(summary.to_json() + "\n")
    return summary


def sweep_spec(spec: ExperimentSpec, etas: List[float], outdir=".",
               max_workers: int = 4) -> List[RunSummary]:
    """Fan one spec out over a step-size list; results ordered like the input."""
    from concurrent.futures import ThreadPoolExecutor

    if not etas:
        raise ConfigError("sweep needs a nonempty eta list")
    suffixes = [f".eta{i}" for i in range(len(etas))]
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        futures = [
            pool.submit(run_spec, spec, outdir, eta, suffix)
            for eta, suffix in zip(etas, suffixes)
        ]
        return [f.result() for f in futures]


# --- presets ------------------------------------------------------------------


def preset_names() -> List[str]:
    files = resources.files("gdscope").joinpath("presets")
    return sorted(p.name[: -len(".cfg")] for p in files.iterdir() if p.name.endswith(".cfg"))


def load_preset(name: str) -> ExperimentSpec:
    files = resources.files("gdscope").joinpath("presets")
    res = files.joinpath(f"{name}.cfg")
    if not res.is_file():
        raise ConfigError(
            f"unknown preset {name!r}; available: {', '.join(preset_names())}"
        )
    return parse_spec(io.StringIO(res.read_text()), name_hint=f"preset:{name}")


def resolve_spec(ref: str) -> ExperimentSpec:
    """A config path if one exists at ref, otherwise a preset name."""
    if Path(ref).exists():
        return parse_spec(ref)
    return load_preset(ref)
