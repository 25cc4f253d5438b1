"""Command-line harness: samplers, lifts, integrals, flows, experiments.

Every subcommand reads one flat configuration (key=value file, overridden by
flags), validates it with messages naming the violated precondition, and
writes deterministic CSV/JSON outputs: identical configuration means
byte-identical files.  Exit codes: 0 success, 2 validation error, 3
numerical non-convergence.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional

import numpy as np

from .continuity import ParticleMeasure, discontinuous_drift_experiment
from .errors import ConfigurationError, NonConvergenceError
from .fbm import (
    FbmSpec,
    check_hurst_constraint,
    default_gamma,
    fbm_metadata,
    lift_fbm,
    sample,
    write_fbm_csv,
)
from .presets import DRIFT_NAMES, ETA_NAMES, drift_preset, eta_preset
from .rough_flow import compose_lift, driver_stability, ito_residual, solve_flow
from .rough_path import RoughPathGrid, TimeGrid, max_chen_defect, max_symmetry_defect
from .sewing import rough_integral_result

COMMANDS = (
    "sample-fbm",
    "lift",
    "integrate",
    "flow",
    "ito-check",
    "stability",
    "continuity",
)


@dataclass
class ExperimentConfig:
    command: str
    hurst: float = 0.3
    dim: int = 1
    gamma: Optional[float] = None
    horizon: float = 1.0
    grid_k: int = 8
    substeps: int = 2
    particles: int = 64
    seed: int = 12345
    eps_ladder: str = "2:7"
    drift: str = "sine"
    eta: str = "gauss-bump-1"
    driver: str = "fbm"
    out: str = "out"
    timing: bool = False

    def resolved_gamma(self) -> float:
        return self.gamma if self.gamma is not None else default_gamma(self.hurst)

    def eps_values(self):
        """Ladder '2:7' means 2^-2 .. 2^-7; or explicit comma floats."""
        text = self.eps_ladder
        if ":" in text:
            lo, hi = (int(x) for x in text.split(":"))
            return [2.0 ** -k for k in range(lo, hi + 1)]
        return [float(x) for x in text.split(",")]

    def validate(self):
        problems = []
        if not 0.0 < self.hurst < 0.5:
            problems.append(f"hurst must lie in (0, 1/2), got {self.hurst}")
        if self.dim < 1 or self.dim > 4:
            problems.append(f"dim must be 1..4, got {self.dim}")
        gamma = self.resolved_gamma()
        if not 0.0 < gamma < self.hurst:
            problems.append(
                f"gamma must be strictly below hurst, got gamma={gamma}, hurst={self.hurst}"
            )
        elif math.floor(1.0 / gamma) > 7:
            problems.append(
                f"floor(1/gamma) = {math.floor(1.0 / gamma)} exceeds the supported "
                "truncation level 7"
            )
        if self.horizon <= 0:
            problems.append(f"horizon must be positive, got {self.horizon}")
        if not 1 <= self.grid_k <= 14:
            problems.append(f"grid-k must be 1..14 (N = 2^k), got {self.grid_k}")
        if self.substeps < 1:
            problems.append(f"substeps must be at least 1, got {self.substeps}")
        if self.particles < 1:
            problems.append(f"particles must be positive, got {self.particles}")
        if self.drift not in DRIFT_NAMES:
            problems.append(f"unknown drift preset {self.drift!r}; choose from {DRIFT_NAMES}")
        if self.eta not in ETA_NAMES:
            problems.append(f"unknown test function {self.eta!r}; choose from {ETA_NAMES}")
        if self.driver not in ("fbm", "smooth"):
            problems.append(f"driver must be 'fbm' or 'smooth', got {self.driver!r}")
        try:
            eps = self.eps_values()
            if any(b >= a for a, b in zip(eps, eps[1:])):
                problems.append("eps ladder must be strictly decreasing")
        except ValueError:
            problems.append(f"cannot parse eps ladder {self.eps_ladder!r}")
        if self.command == "continuity" and not check_hurst_constraint(self.hurst, self.dim):
            problems.append(
                f"continuity pipeline requires hurst < 1/(2(3d-1)) = "
                f"{1.0 / (2 * (3 * self.dim - 1)):g} for dim={self.dim}, got {self.hurst}"
            )
        if problems:
            raise ConfigurationError("; ".join(problems))
        return self


def _read_config_file(path: str) -> dict:
    values = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"config line {raw!r} is not key=value")
        key, val = (part.strip() for part in line.split("=", 1))
        values[key.replace("-", "_")] = val
    return values


_FIELD_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def _coerce(name: str, value: str):
    kind = _FIELD_TYPES.get(name)
    if kind in ("int", int):
        return int(value)
    if kind in ("float", float):
        return float(value)
    if kind in ("Optional[float]",):
        return None if value.lower() in ("none", "") else float(value)
    if kind in ("bool", bool):
        return value.lower() in ("1", "true", "yes")
    return value


def build_config(args: argparse.Namespace) -> ExperimentConfig:
    config = ExperimentConfig(command=args.command)
    if args.config:
        for key, raw in _read_config_file(args.config).items():
            if key not in _FIELD_TYPES:
                raise ConfigurationError(f"unknown config key {key!r}")
            setattr(config, key, _coerce(key, raw))
    for key in _FIELD_TYPES:
        flag = getattr(args, key, None)
        if flag is not None and key != "command":
            setattr(config, key, flag)
    return config.validate()


# -- shared pieces -------------------------------------------------------------


def _write_json(path: Path, doc) -> None:
    with open(path, "w", newline="") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def _sampled_noise(config: ExperimentConfig):
    grid = TimeGrid.dyadic(config.horizon, config.grid_k)
    spec = FbmSpec(hurst=config.hurst, dim=config.dim, grid=grid, seed=config.seed)
    return grid, sample(spec)


def _smooth_driver(grid: TimeGrid, dim: int) -> np.ndarray:
    t = grid.nodes
    cols = [0.5 * np.sin(2 * np.pi * t) + 0.25 * t]
    if dim > 1:
        cols.append(0.5 * (np.cos(2 * np.pi * t) - 1.0))
    for j in range(2, dim):
        cols.append(0.3 * np.sin((j + 1) * t))
    return np.stack(cols[:dim], axis=1)


def _initial_points(config: ExperimentConfig) -> ParticleMeasure:
    return ParticleMeasure.from_quantiles(
        lambda q: np.full(config.dim, 2 * q - 1), n_particles=config.particles
    )


# -- subcommands ----------------------------------------------------------------


def run_sample_fbm(config: ExperimentConfig, outdir: Path) -> None:
    _, noise = _sampled_noise(config)
    with open(outdir / "fbm.csv", "w", newline="") as fh:
        write_fbm_csv(noise, fh)
    _write_json(outdir / "fbm_meta.json", fbm_metadata(noise))


def run_lift(config: ExperimentConfig, outdir: Path) -> None:
    grid, noise = _sampled_noise(config)
    path = lift_fbm(noise, config.resolved_gamma())
    path.save_json(outdir / "rough_path.json")
    report = {
        "N": grid.n_segments,
        "dim": path.dim,
        "level": path.level,
        "gamma": config.resolved_gamma(),
        "lift": "piecewise-linear interpolation",
    }
    if grid.n_segments <= 256:
        report["max_chen_defect"] = max_chen_defect(path)
        report["max_symmetry_defect"] = max_symmetry_defect(path)
        report["defect_sweep"] = "exhaustive"
    else:
        rng = np.random.default_rng(config.seed)
        worst_chen = 0.0
        worst_sym = 0.0
        nodes = grid.nodes
        for _ in range(256):
            i, u, j = sorted(rng.choice(grid.n_segments + 1, size=3, replace=False))
            if i < u < j:
                worst_chen = max(worst_chen, path.chen_defect(nodes[i], nodes[u], nodes[j]))
                worst_sym = max(worst_sym, path.symmetry_defect(nodes[i], nodes[j]))
        report["max_chen_defect"] = worst_chen
        report["max_symmetry_defect"] = worst_sym
        report["defect_sweep"] = "sampled-256"
    _write_json(outdir / "lift_report.json", report)


def _oracle_paths():
    """Five smooth paths with their derivative callables (time-analytic)."""
    return [
        ("linear", 1, lambda t: np.array([t]), lambda t: np.array([1.0])),
        ("quadratic", 1, lambda t: np.array([t * t]), lambda t: np.array([2 * t])),
        (
            "cubic",
            1,
            lambda t: np.array([t ** 3 - 0.5 * t]),
            lambda t: np.array([3 * t * t - 0.5]),
        ),
        (
            "sine",
            1,
            lambda t: np.array([0.5 * np.sin(2 * np.pi * t)]),
            lambda t: np.array([np.pi * np.cos(2 * np.pi * t)]),
        ),
        (
            "circle",
            2,
            lambda t: np.array([0.5 * np.sin(2 * np.pi * t), 0.5 * (np.cos(2 * np.pi * t) - 1)]),
            lambda t: np.array([np.pi * np.cos(2 * np.pi * t), -np.pi * np.sin(2 * np.pi * t)]),
        ),
    ]


def run_integrate(config: ExperimentConfig, outdir: Path) -> None:
    """Rough integral of a gradient field along canonical lifts of smooth
    paths, against adaptive classical quadrature."""
    import scipy.integrate

    grid = TimeGrid.dyadic(config.horizon, config.grid_k)
    # smooth demo paths always lift at level 3; any gamma with 4*gamma > 1 works
    level, gamma = 3, 0.26
    rows = []
    for name, dim, pos, vel in _oracle_paths():
        eta = eta_preset(config.eta, dim)
        samples = np.stack([pos(t) for t in grid.nodes])
        path = RoughPathGrid.lift_piecewise_linear(grid, samples, level)
        zero = drift_preset("zero", dim)
        flow = solve_flow(zero, grid, samples - samples[0], np.atleast_2d(samples[0]))
        lifted = compose_lift(eta, flow, path, 0)
        res = rough_integral_result(lifted, 0.0, config.horizon, gamma)
        if not res.converged:
            raise NonConvergenceError(
                f"rough integral for path {name!r} did not converge: {res.reason}"
            )

        def integrand(t):
            grads = eta.gradient(pos(t)[None, :])[0]
            return float(np.dot(grads, vel(t)))

        classical, _ = scipy.integrate.quad(
            integrand, 0.0, config.horizon, limit=400, epsabs=1e-12, epsrel=1e-12
        )
        rows.append((name, grid.n_segments, res.value, classical, abs(res.value - classical)))
    with open(outdir / "integrate.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["path", "n_segments", "rough_integral", "classical", "abs_error"])
        for name, n, rough, classical, err in rows:
            writer.writerow([name, n, _fmt(rough), _fmt(classical), _fmt(err)])


def run_flow(config: ExperimentConfig, outdir: Path) -> None:
    grid, noise = _sampled_noise(config)
    driver = noise.values if config.driver == "fbm" else _smooth_driver(grid, config.dim)
    mu0 = _initial_points(config)
    flow = solve_flow(
        drift_preset(config.drift, config.dim), grid, driver, mu0.points, config.substeps
    )
    with open(outdir / "flow.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "particle"] + [f"phi{j + 1}" for j in range(config.dim)])
        for i, t in enumerate(grid.nodes):
            for m in range(flow.n_particles):
                writer.writerow(
                    [_fmt(t), m] + [_fmt(v) for v in flow.trajectories[i, m]]
                )


def run_ito_check(config: ExperimentConfig, outdir: Path) -> None:
    gamma = config.resolved_gamma()
    drift = drift_preset(config.drift, config.dim)
    eta = eta_preset(config.eta, config.dim)
    ks = [config.grid_k - 4, config.grid_k - 2, config.grid_k]
    if ks[0] < 1:
        raise ConfigurationError(
            f"ito-check needs grid-k >= 5 so the refinement ladder stays valid, got {config.grid_k}"
        )
    fine = TimeGrid.dyadic(config.horizon, config.grid_k)
    if config.driver == "fbm":
        spec = FbmSpec(hurst=config.hurst, dim=config.dim, grid=fine, seed=config.seed)
        fine_driver = sample(spec).values
    else:
        fine_driver = _smooth_driver(fine, config.dim)
    x0 = np.zeros((1, config.dim))
    rows = []
    for k in ks:
        step = 2 ** (config.grid_k - k)
        grid = fine.subsample(step) if step > 1 else fine
        driver = fine_driver[::step]
        level = math.floor(1.0 / gamma)
        path = RoughPathGrid.lift_piecewise_linear(grid, driver, level)
        flow = solve_flow(drift, grid, driver, x0, config.substeps)
        res = ito_residual(eta, flow, path, 0, config.horizon, gamma)
        rows.append((k, grid.n_segments, abs(res)))
    with open(outdir / "ito.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["grid_k", "n_segments", "abs_residual"])
        for k, n, r in rows:
            writer.writerow([k, n, _fmt(r)])


def run_stability(config: ExperimentConfig, outdir: Path) -> None:
    grid, noise = _sampled_noise(config)
    gamma = config.resolved_gamma()
    path = lift_fbm(noise, gamma)
    drift = drift_preset(config.drift, config.dim)
    eta = eta_preset(config.eta, config.dim)
    x0 = np.zeros((1, config.dim))
    bump = np.stack(
        [np.sin((j + 2) * np.pi * grid.nodes) for j in range(config.dim)], axis=1
    )
    entries = []
    for eps in config.eps_values():
        tilde = RoughPathGrid.lift_piecewise_linear(
            grid, noise.values + eps * bump, path.level
        )
        rep = driver_stability(drift, path, tilde, eta, gamma, x0, config.substeps)
        entries.append(
            {
                "parameter": eps,
                "flow_ratio": rep["flow_ratio"],
                "lift_ratio": rep["lift_ratio"],
            }
        )
    _write_json(outdir / "stability.json", entries)


def run_continuity(config: ExperimentConfig, outdir: Path) -> None:
    grid = TimeGrid.dyadic(config.horizon, config.grid_k)
    mu0 = _initial_points(config)
    report = discontinuous_drift_experiment(
        drift_preset(config.drift, config.dim),
        config.hurst,
        config.dim,
        mu0,
        eta_preset(config.eta, config.dim),
        config.eps_values(),
        config.seed,
        grid=grid,
        gamma=config.resolved_gamma(),
        substeps=config.substeps,
        timing=config.timing,
    )
    with open(outdir / "continuity.json", "w", newline="") as fh:
        report.write_json(fh)
    with open(outdir / "continuity.csv", "w", newline="") as fh:
        report.write_csv(fh)


_RUNNERS = {
    "sample-fbm": run_sample_fbm,
    "lift": run_lift,
    "integrate": run_integrate,
    "flow": run_flow,
    "ito-check": run_ito_check,
    "stability": run_stability,
    "continuity": run_continuity,
}


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="roughflow",
        description="rough-path numerics: sampling, lifting, integration, transport",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="key=value configuration file")
        p.add_argument("--hurst", type=float, default=None)
        p.add_argument("--dim", type=int, default=None)
        p.add_argument("--gamma", type=float, default=None)
        p.add_argument("--horizon", type=float, default=None)
        p.add_argument("--grid-k", dest="grid_k", type=int, default=None)
        p.add_argument("--substeps", type=int, default=None)
        p.add_argument("--particles", type=int, default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--eps-ladder", dest="eps_ladder", default=None)
        p.add_argument("--drift", default=None, choices=DRIFT_NAMES)
        p.add_argument("--eta", default=None, choices=ETA_NAMES)
        p.add_argument("--driver", default=None, choices=("fbm", "smooth"))
        p.add_argument("--out", default=None)
        p.add_argument("--timing", action="store_true", default=None)
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        config = build_config(args)
        outdir = Path(config.out)
        outdir.mkdir(parents=True, exist_ok=True)
        _RUNNERS[config.command](config, outdir)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except NonConvergenceError as exc:
        print(f"numerical non-convergence: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
