"""Command-line entry point: ``python3 -m influence_sketching <command> [options]``.

Every command reads an optional flat ``key=value`` config file (``--config``),
then applies command-line flags on top.  Outputs go to ``--out-dir``; each
JSON output carries a provenance block with the config hash, seed and
package version.  Failures print one line of JSON to stderr and exit 1.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
import time
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import harness
from .glm import FitOptions, fit_irls
from .influence import exact_influence, influence_sketch
from .io import FORMATS, ingest, read_mask, write_mask, write_svmlight
from .provenance import config_hash, derive_seed, package_version
from .sketch import KINDS, ProjectionSpec, make_projection
from .sparse import SparseDesignMatrix

logger = logging.getLogger("influence_sketching")

COMMANDS = ("synth", "fit", "score", "ablate", "reliability", "skew", "mislabel", "plot-data")
NEEDS_TRAIN = set(COMMANDS) - {"synth"}


@dataclass
class RunConfig:
    command: str = "score"
    train: str | None = None
    test: str | None = None
    noise_mask: str | None = None
    format: str | None = None
    out_dir: str = "."
    intercept: bool = True
    # fit
    family: str = "logistic"
    tol: float = 1e-8
    max_iters: int = 100
    l1_strength: float = 0.0
    weight_floor: float = 1e-12
    # sketch
    k: int = 256
    projection: str = "very-sparse"
    density: float | None = None
    exact: bool = False
    form: str = "cook"
    eps_h: float = 1e-8
    seed: int = 0
    threads: int | None = None
    # experiments
    fractions: str = "0.001,0.01,0.05,0.1"
    # synthetic data
    n_train: int = 20000
    n_test: int = 10000
    p: int = 1000
    sparsity: float = 0.0224
    true_beta_sparsity: float = 0.5
    noise_rate: float = 0.05
    noise_mechanism: str = "leverage_biased_flip"
    noise_direction: str = "both"

    # -- serialization ----------------------------------------------------

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            lines.append(f"{f.name}={_format_value(value)}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, source: str = "<config>") -> dict:
        """Parse ``key=value`` lines into typed overrides (unknown keys are errors)."""
        types = _field_types()
        out = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            key = key.strip().replace("-", "_")
            if not sep:
                raise ValueError(f"{source}:{lineno}: expected key=value")
            if key not in types:
                raise ValueError(f"{source}:{lineno}: unknown key {key!r}")
            out[key] = _parse_value(types[key], value.strip(), f"{source}:{lineno}")
        return out

    def hash(self) -> str:
        return config_hash(self.to_dict())

    # -- derived objects ----------------------------------------------------

    def fit_options(self) -> FitOptions:
        return FitOptions(family=self.family, tol=self.tol, max_iters=self.max_iters,
                          l1_strength=self.l1_strength, weight_floor=self.weight_floor)

    def projection_spec(self, p: int, label: str = "projection") -> ProjectionSpec:
        return ProjectionSpec(p=p, k=self.k, kind=self.projection, density=self.density,
                              seed=derive_seed(self.seed, label))

    def synthetic_spec(self) -> harness.SyntheticSpec:
        noise = harness.LabelNoise(self.noise_rate, self.noise_mechanism, self.noise_direction)
        return harness.SyntheticSpec(n_train=self.n_train, n_test=self.n_test, p=self.p,
                                     sparsity=self.sparsity,
                                     true_beta_sparsity=self.true_beta_sparsity,
                                     label_noise=noise, seed=self.seed)

    def fraction_list(self) -> list[float]:
        return [float(x) for x in self.fractions.split(",") if x.strip()]

    def validate(self) -> None:
        if self.command not in COMMANDS:
            raise ValueError(f"unknown command {self.command!r}")
        if self.command in NEEDS_TRAIN and not self.train:
            raise ValueError(f"{self.command} needs --train")
        if self.command == "ablate" and not self.test:
            raise ValueError("ablate needs --test")
        if self.command == "mislabel" and not self.noise_mask:
            raise ValueError("mislabel needs --noise-mask")
        for name in ("train", "test", "noise_mask"):
            path = getattr(self, name)
            if path is not None and not Path(path).is_file():
                raise FileNotFoundError(f"{name} file not found: {path}")
        if self.format is not None and self.format not in FORMATS:
            raise ValueError(f"format must be one of {FORMATS}")
        if self.projection.replace("-", "_") not in KINDS:
            raise ValueError(f"projection must be gaussian or very-sparse, got {self.projection!r}")
        if self.threads is not None and self.threads < 1:
            raise ValueError("threads must be at least 1")
        self.fraction_list()


def _field_types() -> dict:
    hints = {"str": str, "int": int, "float": float, "bool": bool}
    out = {}
    for f in fields(RunConfig):
        base = str(f.type).split("|")[0].strip()
        out[f.name] = hints[base]
    return out


def _format_value(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse_value(kind, text: str, where: str):
    if text == "":
        return None
    try:
        if kind is bool:
            lowered = text.lower()
            if lowered not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(text)
            return lowered in ("true", "1", "yes")
        return kind(text)
    except ValueError:
        raise ValueError(f"{where}: cannot read {text!r} as {kind.__name__}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="influence_sketching",
                                     description="Influence sketching for sparse GLMs.")
    sub = parser.add_subparsers(dest="command", required=True)
    types = _field_types()
    for command in COMMANDS:
        sp = sub.add_parser(command)
        sp.add_argument("--config", help="flat key=value file; flags override it")
        sp.add_argument("-v", "--verbose", action="store_true")
        for name, kind in types.items():
            if name == "command":
                continue
            flag = "--" + name.replace("_", "-")
            if name == "projection":
                sp.add_argument(flag, default=None, choices=["gaussian", "very-sparse",
                                                             "very_sparse"])
            elif kind is bool:
                sp.add_argument(flag, default=None, type=lambda t, n=name:
                                _parse_value(bool, t, "--" + n))
            else:
                sp.add_argument(flag, default=None, type=kind)
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    values = {}
    if args.config:
        values.update(RunConfig.from_text(Path(args.config).read_text(), args.config))
    for name in _field_types():
        if name != "command" and getattr(args, name, None) is not None:
            values[name] = getattr(args, name)
    values["command"] = args.command
    cfg = RunConfig(**values)
    cfg.validate()
    return cfg


# -- commands ---------------------------------------------------------------

def _provenance(cfg: RunConfig) -> dict:
    return {"config": cfg.to_dict(), "config_hash": cfg.hash(), "seed": cfg.seed,
            "version": package_version()}


def _write_json(path: Path, payload: dict) -> Path:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=harness._plain) + "\n")
    return path


def _load(cfg: RunConfig, path) -> tuple[SparseDesignMatrix, np.ndarray]:
    X, y = ingest(path, cfg.format)
    return (X.with_intercept() if cfg.intercept else X), y


def _load_pair(cfg: RunConfig) -> harness.SyntheticData:
    X, y = _load(cfg, cfg.train)
    if cfg.test:
        Xt, yt = _load(cfg, cfg.test)
        width = max(X.n_cols, Xt.n_cols)
        X, Xt = _pad(X, width), _pad(Xt, width)
    else:
        Xt, yt = X, y
    mask = read_mask(cfg.noise_mask) if cfg.noise_mask else None
    if mask is not None and mask.size != X.n_rows:
        raise ValueError(f"noise mask has {mask.size} entries for {X.n_rows} training rows")
    return harness.SyntheticData(X, y, Xt, yt, mask)


def _pad(X: SparseDesignMatrix, width: int) -> SparseDesignMatrix:
    if X.n_cols == width:
        return X
    csr = X.csr.copy()
    csr.resize((X.n_rows, width))
    return SparseDesignMatrix(csr, has_intercept=X.has_intercept)


def _timed(timings: dict, stage: str, fn, *args, **kwargs):
    t0 = time.perf_counter()
    out = fn(*args, **kwargs)
    timings[stage] = time.perf_counter() - t0
    logger.info("%s: %.3fs", stage, timings[stage])
    return out


def _score(cfg: RunConfig, data: harness.SyntheticData, timings: dict):
    fit = _timed(timings, "fit", fit_irls, data.X_train, data.y_train, opts=cfg.fit_options())
    if cfg.exact:
        report = _timed(timings, "exact_leverage", exact_influence, data.X_train, fit,
                        cfg.eps_h, cfg.form)
    else:
        omega = _timed(timings, "projection_draw", make_projection,
                       cfg.projection_spec(data.X_train.n_cols))
        stages = {}
        report = influence_sketch(data.X_train, fit, omega, cfg.eps_h, form=cfg.form,
                                  timings=stages)
        timings.update(stages)
    return fit, report


def cmd_synth(cfg: RunConfig, out: Path) -> list[Path]:
    data = harness.generate(cfg.synthetic_spec())
    paths = []
    for name, X, y in (("train.svm", data.X_train, data.y_train),
                       ("test.svm", data.X_test, data.y_test)):
        bare = SparseDesignMatrix(X.csr[:, 1:], has_intercept=False)
        write_svmlight(out / name, bare, y)
        paths.append(out / name)
    write_mask(out / "noise_mask.txt", data.noise_mask)
    write_mask(out / "test_noise_mask.txt", data.test_noise_mask)
    paths += [out / "noise_mask.txt", out / "test_noise_mask.txt"]
    paths.append(_write_json(out / "synth.json", {
        "spec": data.spec.to_dict(), "attempts": data.attempts,
        "flipped_train": int(data.noise_mask.sum()), "flipped_test": int(data.test_noise_mask.sum()),
        "provenance": _provenance(cfg)}))
    return paths


def cmd_fit(cfg: RunConfig, out: Path) -> list[Path]:
    data = _load_pair(cfg)
    timings = {}
    fit = _timed(timings, "fit", fit_irls, data.X_train, data.y_train, opts=cfg.fit_options())
    payload = {"family": fit.family.kind, "coefficients": fit.beta, "converged": fit.converged,
               "n_iter": fit.n_iter, "deviance_trace": fit.deviance_trace,
               "regularization": list(fit.regularization),
               "approximate_influence_basis": fit.approximate_influence_basis,
               "floored_count": int(fit.floored_rows.size), "jitter": fit.jitter,
               "timings": timings, "provenance": _provenance(cfg)}
    return [_write_json(out / "fit.json", payload)]


def cmd_score(cfg: RunConfig, out: Path) -> list[Path]:
    data = _load_pair(cfg)
    timings = {}
    _, report = _score(cfg, data, timings)
    csv_path = out / "influence.csv"
    sidecar = report.write(csv_path, {"timings": timings, "provenance": _provenance(cfg)})
    return [csv_path, sidecar]


def cmd_ablate(cfg: RunConfig, out: Path) -> list[Path]:
    data = _load_pair(cfg)
    timings = {}
    fit, report = _score(cfg, data, timings)
    res = _timed(timings, "ablation", harness.run_displacement, data, cfg.fit_options(), report,
                 cfg.fraction_list(), derive_seed(cfg.seed, "ablation"), fit)
    paths = harness.plot_data(out, report, ablations=[res]) if res.ok else []
    paths = [p for p in paths if p.name == "ablation_curve.csv"]
    payload = res.to_dict() | {"timings": timings, "cli_provenance": _provenance(cfg)}
    paths.append(_write_json(out / "ablation.json", payload))
    if not res.ok:
        raise RuntimeError(f"ablation refit failed: {res.error}")
    return paths


def cmd_reliability(cfg: RunConfig, out: Path) -> list[Path]:
    data = _load_pair(cfg)
    fit = fit_irls(data.X_train, data.y_train, opts=cfg.fit_options())
    spec = cfg.projection_spec(data.X_train.n_cols)
    seeds = (derive_seed(cfg.seed, "projection"), derive_seed(cfg.seed, "projection/second"))
    res = harness.run_reliability(data, cfg.fit_options(), spec, seeds, fit)
    payload = res.to_dict() | {"cli_provenance": _provenance(cfg)}
    return [_write_json(out / "reliability.json", payload)]


def cmd_skew(cfg: RunConfig, out: Path) -> list[Path]:
    data = _load_pair(cfg)
    _, report = _score(cfg, data, {})
    res = harness.run_skew(report, data=data)
    return [_write_json(out / "skew.json", res.to_dict() | {"cli_provenance": _provenance(cfg)})]


def cmd_mislabel(cfg: RunConfig, out: Path) -> list[Path]:
    data = _load_pair(cfg)
    fit, report = _score(cfg, data, {})
    res = harness.run_mislabel_discrimination(data, report, data.noise_mask, fit=fit)
    return [_write_json(out / "mislabel.json",
                        res.to_dict() | {"cli_provenance": _provenance(cfg)})]


def cmd_plot_data(cfg: RunConfig, out: Path) -> list[Path]:
    data = _load_pair(cfg)
    fit, report = _score(cfg, data, {})
    ablations = []
    if cfg.test:
        res = harness.run_displacement(data, cfg.fit_options(), report, cfg.fraction_list(),
                                       derive_seed(cfg.seed, "ablation"), fit)
        if not res.ok:
            raise RuntimeError(f"ablation refit failed: {res.error}")
        ablations.append(res)
    seeds = (derive_seed(cfg.seed, "projection"), derive_seed(cfg.seed, "projection/second"))
    rel = harness.run_reliability(data, cfg.fit_options(),
                                  cfg.projection_spec(data.X_train.n_cols), seeds, fit)
    mis = None
    if data.noise_mask is not None:
        mis = harness.run_mislabel_discrimination(data, report, data.noise_mask, fit=fit)
    paths = harness.plot_data(out, report, ablations, rel, mis, data.noise_mask)
    paths.append(_write_json(out / "plot_data.json", {
        "files": [p.name for p in paths], "provenance": _provenance(cfg)}))
    return paths


HANDLERS = {"synth": cmd_synth, "fit": cmd_fit, "score": cmd_score, "ablate": cmd_ablate,
            "reliability": cmd_reliability, "skew": cmd_skew, "mislabel": cmd_mislabel,
            "plot-data": cmd_plot_data}


def _limit_threads(n: int | None):
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n or os.cpu_count() or 1)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s", stream=sys.stderr)
    try:
        cfg = resolve_config(args)
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with _limit_threads(cfg.threads):
            paths = HANDLERS[cfg.command](cfg, out)
    except Exception as exc:  # every failure becomes a machine-readable error
        err = {"status": "error", "command": args.command, "error": type(exc).__name__,
               "message": str(exc)}
        print(json.dumps(err, sort_keys=True), file=sys.stderr)
        return 1
    print(json.dumps({"status": "ok", "command": cfg.command,
                      "outputs": [str(p) for p in paths]}, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
