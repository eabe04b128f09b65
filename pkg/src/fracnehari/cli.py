"""Config-driven experiment runner.

    fracnehari --config run.json --out results/ --seed 42 --jobs 4

Writes results.csv (one row per lambda, in lambda order), nodal text files
for every converged branch and summary.json with the discrete constants and
per-suite verdicts. Exit status: 0 success, 2 bad configuration,
3 numerical failure inside the guaranteed two-solution window.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from .bubbles import BubbleParams, energy_gap_check, extremal_profile, truncated_bubble
from .diagnostics import moser_ladder
from .energy import ProblemParams
from .fibering import fiber_roots, lambda_star
from .operator import (EigenPair, EmbeddingConstants, StiffnessForm, assemble_stiffness,
                       build_grid, estimate_constants, principal_eigenpair)
from .solver import (BranchFailure, barrier_height, bracket_failure_lambda, lambda_upper_bound,
                     lowest_Nminus, minimize_Nplus)

log = logging.getLogger("fracnehari")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
FAILED, SKIPPED = "failed", "skipped"
COLUMNS = [
    "lambda", "lambda_star", "mu_star", "E_plus", "E_minus", "residual_plus",
    "residual_minus", "barrier_eta", "gap_min_eps", "rays_0_roots", "rays_1_root",
    "rays_2_roots", "status",
]
SUITES = ("fiber", "branches", "gap", "moser", "window")


class ConfigError(ValueError):
    pass


@dataclass
class Sweep:
    lo: float
    hi: float
    count: int
    log: bool = False

    def values(self) -> List[float]:
        if self.count == 1:
            return [float(self.lo)]
        if self.log:
            return [float(v) for v in np.geomspace(self.lo, self.hi, self.count)]
        return [float(v) for v in np.linspace(self.lo, self.hi, self.count)]


@dataclass
class RunConfig:
    """Experiment description.

    Lambda values are absolute unless ``lambda_units`` is "lambda_star", in
    which case they multiply the explicit two-root threshold. The weight is
    {"kind": "constant", "value": c} or {"kind": "file", "path": ...} with
    one nodal value per line.
    """

    s: float = 0.25
    q: float = 0.5
    N: int = 256
    x_lo: float = -1.0
    x_hi: float = 1.0
    lam: Optional[float] = None
    lambda_sweep: Optional[Sweep] = None
    lambda_units: str = "lambda_star"
    weight: Dict[str, Any] = field(default_factory=lambda: {"kind": "constant", "value": 1.0})
    seed: int = 0
    suites: Dict[str, bool] = field(default_factory=lambda: {
        "fiber": True, "branches": True, "gap": True, "moser": True, "window": False})
    rays: int = 100
    constant_starts: int = 5
    gap_eps_cells: List[int] = field(default_factory=lambda: [16, 32, 64])
    max_iters: int = 5000

    def to_dict(self) -> Dict[str, Any]:
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        return d

    @classmethod
    def from_dict(cls, raw: Dict[str, Any]) -> "RunConfig":
        if not isinstance(raw, dict):
            raise ConfigError("configuration must be a JSON object")
        raw = dict(raw)
        if "lambda" in raw:
            raw["lam"] = raw.pop("lambda")
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
        sweep = raw.get("lambda_sweep")
        if sweep is not None:
            try:
                raw["lambda_sweep"] = Sweep(**sweep)
            except TypeError as exc:
                raise ConfigError(f"bad lambda_sweep: {exc}") from exc
        suites = dict(cls().suites)
        suites.update(raw.get("suites", {}))
        raw["suites"] = suites
        try:
            cfg = cls(**raw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if set(self.suites) - set(SUITES):
            raise ConfigError(f"unknown suites {sorted(set(self.suites) - set(SUITES))}")
        if self.lambda_units not in ("absolute", "lambda_star"):
            raise ConfigError("lambda_units must be 'absolute' or 'lambda_star'")
        if self.lam is not None and self.lambda_sweep is not None:
            raise ConfigError("give either lambda or lambda_sweep, not both")
        if self.lam is not None and not self.lam > 0:
            raise ConfigError("lambda must be positive")
        sw = self.lambda_sweep
        if sw is not None:
            if sw.count < 1:
                raise ConfigError("sweep count must be at least 1")
            if not (sw.lo > 0 and sw.hi >= sw.lo):
                raise ConfigError("sweep needs 0 < lo <= hi")
        if not 0 < self.s < 0.5 or not 0 < self.q <= 1:
            raise ConfigError("need 0 < s < 1/2 and 0 < q <= 1")
        if self.N < 3 or self.rays < 0 or self.constant_starts < 1:
            raise ConfigError("need N >= 3, rays >= 0 and at least one start")
        if self.weight.get("kind") not in ("constant", "file"):
            raise ConfigError("weight kind must be 'constant' or 'file'")
        if any(int(c) < 4 for c in self.gap_eps_cells):
            raise ConfigError("gap scales below 4 mesh cells are not resolvable")

    def lambda_values(self) -> List[float]:
        if self.lam is not None:
            return [float(self.lam)]
        if self.lambda_sweep is not None:
            return self.lambda_sweep.values()
        return []


def load_config(path: Path) -> RunConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    return RunConfig.from_dict(raw)


def _weight_values(cfg: RunConfig, N: int) -> np.ndarray:
    if cfg.weight["kind"] == "constant":
        value = float(cfg.weight.get("value", 1.0))
        if not value > 0:
            raise ConfigError("weight must be positive")
        return np.full(N, value)
    try:
        a = np.loadtxt(cfg.weight["path"], ndmin=1)
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"cannot read weight file: {exc}") from exc
    if a.shape != (N,) or not np.all(a > 0):
        raise ConfigError(f"weight file must hold {N} positive values")
    return a


@dataclass
class Setup:
    K: StiffnessForm
    eig: EigenPair
    consts: EmbeddingConstants
    base: ProblemParams
    lambda_star: float
    mu_star: float


def prepare(cfg: RunConfig) -> Setup:
    grid = build_grid(cfg.x_lo, cfg.x_hi, cfg.N)
    K = assemble_stiffness(grid, cfg.s)
    eig = principal_eigenpair(K)
    consts = estimate_constants(K, [1.0 - cfg.q], starts=cfg.constant_starts, seed=cfg.seed)
    a = _weight_values(cfg, cfg.N)
    base = ProblemParams(cfg.s, cfg.q, 1.0, a)
    return Setup(K, eig, consts, base, lambda_star(base, consts), lambda_upper_bound(base, eig))


def ray_histogram(P: ProblemParams, K: StiffnessForm, rays: int, seed: int) -> List[int]:
    """Counts of rays with 0, 1 and 2 Nehari scalings among random nonnegative rays."""
    rng = np.random.default_rng(seed)
    counts = [0, 0, 0]
    for _ in range(rays):
        counts[fiber_roots(rng.random(K.grid.N), P, K).n_roots] += 1
    return counts


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    return repr(x) if math.isfinite(x) else FAILED


def _write_field(path: Path, u: np.ndarray, K: StiffnessForm) -> None:
    g = K.grid
    header = f"N={g.N} x_lo={g.x_lo!r} x_hi={g.x_hi!r} s={K.s!r}"
    np.savetxt(path, u, fmt="%.17g", header=header)


def solve_point(cfg: RunConfig, setup: Setup, idx: int, lam: float, out: Optional[Path]) -> Dict[str, Any]:
    """All enabled suites at one lambda; never raises for numerical trouble."""
    K, eig = setup.K, setup.eig
    P = setup.base.with_lambda(lam)
    row: Dict[str, Any] = {c: SKIPPED for c in COLUMNS}
    row.update({"lambda": lam, "lambda_star": setup.lambda_star, "mu_star": setup.mu_star})
    info: Dict[str, Any] = {"lambda": lam}
    if cfg.suites.get("fiber"):
        counts = ray_histogram(P, K, cfg.rays, cfg.seed + idx)
        row["rays_0_roots"], row["rays_1_root"], row["rays_2_roots"] = counts
    status = "ok"
    if cfg.suites.get("branches") or cfg.suites.get("gap") or cfg.suites.get("moser"):
        barrier = barrier_height(P, eig)
        row["barrier_eta"] = barrier.eta
        info["barrier_active"] = barrier.active
        try:
            up = minimize_Nplus(P, K, barrier, eig=eig, max_iters=cfg.max_iters)
            if not up.converged:
                raise BranchFailure("N+ descent hit max_iters")
        except BranchFailure as exc:
            up = None
            status = "nplus_failed"
            info["error"] = str(exc)
            row.update({"E_plus": FAILED, "residual_plus": FAILED, "E_minus": FAILED,
                        "residual_minus": FAILED})
        if up is not None:
            row["E_plus"], row["residual_plus"] = up.energy, up.residual_dual
            if out is not None:
                _write_field(out / f"u_plus_{idx:03d}.txt", up.u, K)
            h = K.grid.h
            S = setup.consts.S_d
            if cfg.suites.get("gap"):
                eps = [c * h for c in cfg.gap_eps_cells]
                try:
                    rep = energy_gap_check(up, P, K, eps, S)
                    row["gap_min_eps"] = rep.smallest_eps_gap
                    info["gap"] = {"eps": rep.eps, "gap": rep.gap, "t_argmax": rep.t_argmax,
                                   "improving": rep.improving}
                except (ValueError, RuntimeError) as exc:
                    row["gap_min_eps"] = FAILED
                    info["gap_error"] = str(exc)
            if cfg.suites.get("moser"):
                lad = moser_ladder(up.u, P, K, depth=8)
                info["moser"] = {"D": lad.lp_norms, "power_means": lad.power_means,
                                 "sup_norm": lad.sup_norm, "relative_error": lad.relative_error}
            if cfg.suites.get("branches"):
                seeds = [truncated_bubble(K.grid, P, BubbleParams(c * h, S)) for c in cfg.gap_eps_cells]
                seeds.append(extremal_profile(setup.consts, K))
                try:
                    v = lowest_Nminus(P, K, barrier, up, seeds, max_iters=cfg.max_iters)
                    row["E_minus"], row["residual_minus"] = v.energy, v.residual_dual
                    info["signs"] = [up.fiber.classification_at_1.value,
                                     v.fiber.classification_at_1.value]
                    if out is not None:
                        _write_field(out / f"v_minus_{idx:03d}.txt", v.u, K)
                except BranchFailure as exc:
                    status = "nminus_failed"
                    info["error"] = str(exc)
                    row["E_minus"], row["residual_minus"] = FAILED, FAILED
    if status != "ok":
        if lam > setup.mu_star:
            status = "expected_failure"
        elif lam >= setup.lambda_star:
            status = "window_failure"
    row["status"] = status
    info["status"] = status
    return {"row": row, "info": info}


def _solve_star(args):
    return solve_point(*args)


def run(cfg: RunConfig, out: Path, jobs: int = 1) -> int:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    setup = prepare(cfg)
    lams = cfg.lambda_values()
    if cfg.lambda_units == "lambda_star":
        lams = [l * setup.lambda_star for l in lams]
    lams = sorted(lams)
    tasks = [(cfg, setup, i, lam, out) for i, lam in enumerate(lams)]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_solve_star, tasks))
    else:
        results = [_solve_star(t) for t in tasks]

    with open(out / "results.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(COLUMNS)
        for res in results:
            writer.writerow([_fmt(res["row"][c]) for c in COLUMNS])

    summary: Dict[str, Any] = {
        "config": cfg.to_dict(),
        "S_d": setup.consts.S_d,
        "C": {repr(k): v for k, v in sorted(setup.consts.C.items())},
        "lambda1": setup.eig.lambda1,
        "lambda_star": setup.lambda_star,
        "mu_star": setup.mu_star,
        "points": [r["info"] for r in results],
    }
    verdicts: Dict[str, bool] = {}
    if cfg.suites.get("fiber"):
        probe = setup.base.with_lambda(0.9 * setup.lambda_star)
        hist = ray_histogram(probe, setup.K, cfg.rays, cfg.seed)
        summary["fiber_probe"] = {"lambda": probe.lam, "root_histogram": hist}
        verdicts["fiber"] = hist[2] == cfg.rays and all(
            r["row"]["rays_2_roots"] == cfg.rays for r in results if r["row"]["lambda"] < setup.lambda_star)
    inside = [r for r in results if r["row"]["lambda"] < setup.lambda_star]
    if cfg.suites.get("branches"):
        verdicts["branches"] = all(r["info"]["status"] == "ok" for r in inside)
    if cfg.suites.get("gap"):
        verdicts["gap"] = all(isinstance(r["row"]["gap_min_eps"], float) and r["row"]["gap_min_eps"] > 0
                              for r in inside)
    if cfg.suites.get("moser"):
        verdicts["moser"] = all("moser" in r["info"] and r["info"]["moser"]["relative_error"] <= 0.05
                                for r in inside)
    if cfg.suites.get("window"):
        br = bracket_failure_lambda(setup.base, setup.K, setup.eig, setup.lambda_star, setup.mu_star)
        summary["window"] = asdict(br)
        verdicts["window"] = setup.lambda_star <= br.lam_fail <= setup.mu_star
    summary["suites"] = verdicts
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")

    numeric_failure = any(r["info"]["status"] not in ("ok", "expected_failure", "window_failure")
                          for r in results)
    return EXIT_NUMERIC if numeric_failure else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fracnehari", description=__doc__.splitlines()[0])
    ap.add_argument("--config", type=Path, required=True, help="JSON run description")
    ap.add_argument("--out", type=Path, required=True, help="output directory")
    ap.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    ap.add_argument("--jobs", type=int, default=1, help="worker processes for a sweep")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.jobs < 1:
            raise ConfigError("--jobs must be at least 1")
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    try:
        return run(cfg, args.out, args.jobs)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except (ArithmeticError, RuntimeError, np.linalg.LinAlgError) as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
