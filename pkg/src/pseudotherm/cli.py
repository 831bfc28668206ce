"""Command-line experiment driver.

Every experiment writes CSV data files plus ``manifest.json`` into the output
directory (``--output``, else ``$PSEUDOTHERM_OUTPUT_DIR``, else
``./pseudotherm-out``). Exit codes: 0 success, 2 validation failure,
3 capacity, 4 eigensolver non-convergence.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import __version__
from .chain import (
    DEFAULT_INDEX_BUDGET,
    TransitionOperator,
    has_self_loop,
    reachable_component,
    relative_chain,
    top_eigenvalues,
)
from .dynamics import (
    RunManifest,
    SubsetDistribution,
    evolve_exact,
    fit_late_time,
    induced_initial,
    linear_r2,
    observable_trace,
    parse_initial_state,
    phi_map,
    tv_to_uniform,
    worst_case_mixing_time,
    mixing_time,
)
from .errors import CapacityError, FitError, IterativeFailure
from .gates import GateFamily
from .moments import DEFAULT_MOMENT_BUDGET, haar_moment, m_matrix, subset_moment, subset_phase_moment, trace_distance
from .subsetcore import MAX_QUBITS, MAX_QUBITS_EXACT, Subset, subset_count, subset_from_json

EXPERIMENTS = ("spectrum", "tvdecay", "lightcone", "mixing", "irreducibility", "moments", "phimap")
STOCHASTIC = ("lightcone",)
EXIT_OK, EXIT_VALIDATION, EXIT_CAPACITY, EXIT_SOLVER = 0, 2, 3, 4


@dataclass
class RunConfig:
    experiment: str
    family: str = "local"
    n: int | None = None
    m: int | None = None
    mrange: str | None = None
    K: int | None = None
    initial: str | None = None
    subset: str | None = None
    t_max: int | None = None
    record_every: int = 1
    realizations: int = 10_000
    seed: int | None = None
    na: int | None = None
    k: int = 20
    tol: float = 1e-10
    eps: float = 0.25
    relative: bool = False
    budget: int = DEFAULT_INDEX_BUDGET
    moment_budget: int = DEFAULT_MOMENT_BUDGET
    output: str | None = None

    def m_values(self) -> list[int]:
        if self.mrange:
            lo, hi = (int(x) for x in self.mrange.split(":"))
            return list(range(lo, hi + 1))
        return [self.m] if self.m is not None else []

    def initial_subset(self) -> Subset | None:
        if self.subset:
            text = Path(self.subset).read_text()
            return subset_from_json(text, self.n)
        if self.initial:
            return parse_initial_state(self.initial)
        if self.experiment == "lightcone" and self.n and self.na is not None:
            return parse_initial_state("+" * self.na + "0" * (self.n - self.na))
        return None


def validate(config: RunConfig) -> list[str]:
    """Every violated constraint, as human-readable messages (empty when valid)."""
    v = []
    if config.experiment not in EXPERIMENTS:
        return [f"unknown experiment {config.experiment!r}; expected one of {EXPERIMENTS}"]
    n = config.n
    if n is None:
        return ["n is required"]
    exact = config.experiment != "lightcone"
    cap = MAX_QUBITS_EXACT if exact else MAX_QUBITS
    if not 1 <= n <= cap:
        v.append(f"n = {n} outside [1, {cap}] for experiment {config.experiment}")
        return v
    try:
        GateFamily(config.family, n)
    except ValueError as exc:
        v.append(str(exc))
    if config.experiment in STOCHASTIC and config.seed is None:
        v.append("seed is required for stochastic experiments")
    try:
        ms = config.m_values()
    except ValueError:
        v.append(f"mrange must look like lo:hi, got {config.mrange!r}")
        ms = []
    S0 = None
    try:
        S0 = config.initial_subset()
    except (ValueError, OSError) as exc:
        v.append(f"initial state: {exc}")
    if S0 is not None and S0.n != n:
        v.append(f"initial state has {S0.n} sites but n = {n}")
    if config.t_max is not None and config.t_max < 0:
        v.append("t_max must be non-negative")
    if config.record_every < 1:
        v.append("record_every must be positive")
    if config.realizations < 1:
        v.append("realizations must be positive")

    e = config.experiment
    if e in ("spectrum", "mixing", "irreducibility", "tvdecay", "phimap") and not ms:
        v.append("m or mrange is required")
    if e in ("tvdecay", "phimap", "moments") and S0 is None:
        v.append("an initial state (--initial or --subset) is required")
    if e == "lightcone" and S0 is None:
        v.append("lightcone needs --na or an initial state")
    if e == "moments" and config.m is None:
        v.append("m is required")
    for m in ms:
        if not 1 <= m <= (1 << n):
            v.append(f"m = {m} outside [1, 2^{n}]")
            continue
        if e == "spectrum" and config.relative:
            if m != 2:
                v.append("the relative-coordinate chain describes m = 2 only")
            continue
        if e in ("spectrum", "mixing", "irreducibility", "tvdecay", "phimap"):
            dim = subset_count(n, m)
            if dim > config.budget:
                v.append(f"capacity: |Sigma_{m}| = C({1 << n}, {m}) = {dim} exceeds budget {config.budget}")
        if S0 is not None and e in ("tvdecay", "phimap") and m > S0.m:
            v.append(f"m = {m} exceeds the initial subset size {S0.m}")
    if e in ("tvdecay", "phimap", "moments") and S0 is not None:
        dimK = subset_count(n, S0.m)
        if dimK > config.budget:
            v.append(f"capacity: |Sigma_{S0.m}| = {dimK} exceeds budget {config.budget}")
    if e == "moments" and config.m is not None and S0 is not None:
        if config.m > S0.m:
            v.append(f"m = {config.m} exceeds the initial subset size {S0.m}")
        tdim = math.comb((1 << n) + config.m - 1, config.m)
        if tdim > config.moment_budget:
            v.append(f"capacity: type-basis dimension {tdim} exceeds budget {config.moment_budget}")
    if e == "irreducibility" and config.mrange:
        v.append("irreducibility takes a single m")
    return v


def _out_dir(config: RunConfig) -> Path:
    path = Path(config.output or os.environ.get("PSEUDOTHERM_OUTPUT_DIR", "pseudotherm-out"))
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_rows(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])


def _spectrum(cfg, fam, out, summary):
    files = []
    for m in cfg.m_values():
        op = relative_chain(cfg.n) if cfg.relative else TransitionOperator(fam, m, budget=cfg.budget)
        spec = top_eigenvalues(op, k=cfg.k, tol=cfg.tol)
        name = f"spectrum_m{m}{'_relative' if cfg.relative else ''}.csv"
        spec.to_csv(out / name)
        files.append(name)
        if spec.eigenvalues.size > 1:
            summary[f"lambda1_m{m}"] = float(spec.eigenvalues[1])
    return files


def _tvdecay(cfg, fam, out, summary):
    S0 = cfg.initial_subset()
    t_max = cfg.t_max if cfg.t_max is not None else 4000
    files, fits = [], []
    for m in cfg.m_values():
        T = TransitionOperator(fam, m, budget=cfg.budget)
        trace, _ = evolve_exact(T, induced_initial(S0, m), t_max, cfg.record_every, stop_below=1e-9)
        name = f"tv_m{m}.csv"
        trace.to_csv(out / name)
        files.append(name)
        try:
            fit = fit_late_time(trace)
            fits.append((m, fit.lam, fit.dt, fit.npoints, fit.r2))
        except FitError as exc:
            summary[f"fit_error_m{m}"] = str(exc)
    _write_rows(out / "fits.csv", ["m", "lambda", "dt", "npoints", "r2"], fits)
    files.append("fits.csv")
    if len(fits) >= 3:
        slope, icpt, r2 = linear_r2([f[0] for f in fits], [f[2] for f in fits])
        summary.update(dt_slope=slope, dt_intercept=icpt, dt_r2=r2)
    return files


def front_times(trace, block: list[int], threshold: float, which: str = "z2bar"):
    """Crossing time (units of t/n) versus distance from a contiguous block, averaged over both sides."""
    n = trace.zbar.shape[1]
    cross = trace.crossing_times(threshold, which) / n
    lo, hi = min(block), max(block)
    rows = []
    for ell in range(1, (n - len(block)) // 2 + 1):
        right, left = (hi + ell) % n, (lo - ell) % n
        rows.append((ell, 0.5 * (cross[right] + cross[left])))
    return np.array(rows)


def _lightcone(cfg, fam, out, summary):
    S0 = cfg.initial_subset()
    n = cfg.n
    t_max = cfg.t_max if cfg.t_max is not None else 80 * n
    every = cfg.record_every if cfg.record_every > 1 else n
    trace = observable_trace(fam, S0, t_max, cfg.realizations, cfg.seed, every)
    trace.to_csv(out / "observables.csv")
    # sites whose bits differ inside S0 form the initial block
    spread = np.bitwise_or.reduce(S0.as_array() ^ S0.as_array()[0])
    block = [i for i in range(n) if (int(spread) >> i) & 1] or [0]
    thr = 0.5 * (1.0 + 1.0 / S0.m)
    z2 = front_times(trace, block, thr, "z2bar")
    z1 = front_times(trace, block, 0.5, "zbar")
    _write_rows(out / "fronts.csv", ["distance", "tau_z2bar", "tau_zbar"], np.column_stack([z2, z1[:, 1]]))
    ok = ~np.isnan(z2[:, 1])
    if ok.sum() >= 3:
        slope, icpt, r2 = linear_r2(z2[ok, 0], z2[ok, 1])
        summary.update(front_slope=slope, front_velocity=1.0 / slope, front_r2=r2)
    return ["observables.csv", "fronts.csv"]


def _mixing(cfg, fam, out, summary):
    rows = []
    S0 = cfg.initial_subset()
    for m in cfg.m_values():
        T = TransitionOperator(fam, m, budget=cfg.budget)
        t_cap = cfg.t_max if cfg.t_max is not None else 100_000
        if S0 is None:
            res = worst_case_mixing_time(T, cfg.eps, t_cap)
        else:
            res = mixing_time(T, induced_initial(S0, m), cfg.eps, t_cap)
        spec = top_eigenvalues(T, k=2, tol=cfg.tol)
        t_rel = 1.0 / (1.0 - spec.eigenvalues[1])
        lower = (t_rel - 1) * math.log(1 / (2 * cfg.eps))
        upper = t_rel * math.log(T.dim / cfg.eps)
        rows.append((m, "" if res.t_mix is None else res.t_mix, float(res.tv), t_rel, lower, upper))
    _write_rows(out / "mixing.csv", ["m", "t_mix", "tv", "t_rel", "lower_bound", "upper_bound"], rows)
    return ["mixing.csv"]


def _irreducibility(cfg, fam, out, summary):
    m = cfg.m_values()[0]
    S0 = cfg.initial_subset()
    if S0 is None:
        S0 = Subset(tuple(range(m)), cfg.n)
    if S0.m != m:
        raise ValueError(f"initial subset has {S0.m} elements, m = {m}")
    comp = reachable_component(fam, S0, budget=cfg.budget)
    (out / "component.json").write_text(comp.to_json())
    summary.update(component_size=comp.size, space_size=comp.total, connected=comp.connected,
                   self_loop=has_self_loop(fam, S0))
    return ["component.json"]


def _moments(cfg, fam, out, summary):
    S0 = cfg.initial_subset()
    m, K, n = cfg.m, S0.m, cfg.n
    t_max = cfg.t_max if cfg.t_max is not None else 0
    T = TransitionOperator(fam, K, budget=cfg.budget)
    haar = haar_moment(1 << n, m, cfg.moment_budget)
    p = SubsetDistribution.delta(S0).probs
    rows = []
    use_m = 2 * m <= K and n <= 6
    for t in range(t_max + 1):
        if t > 0:
            p = T.apply(p)
        if t % cfg.record_every and t != t_max:
            continue
        dist = SubsetDistribution(n, K, p, check=False)
        tv = tv_to_uniform(phi_map(dist, m))
        d_phase = trace_distance(subset_phase_moment(dist, m, cfg.moment_budget), haar)
        d_plain = trace_distance(subset_moment(dist, m, cfg.moment_budget), haar)
        mt = m_matrix(dist, m).trace_norm if use_m else float("nan")
        rows.append((t, tv, d_phase, d_plain, mt))
    _write_rows(out / "moments.csv", ["t", "tv_phi", "trace_distance_phase", "trace_distance_plain", "m_trace_norm"], rows)
    return ["moments.csv"]


def _phimap(cfg, fam, out, summary):
    S0 = cfg.initial_subset()
    T = TransitionOperator(fam, S0.m, budget=cfg.budget)
    t_max = cfg.t_max if cfg.t_max is not None else 0
    trace, pK = evolve_exact(T, SubsetDistribution.delta(S0), t_max, max(t_max, 1))
    files, rows = [], []
    for m in cfg.m_values():
        q = phi_map(pK, m)
        name = f"phi_m{m}.csv"
        q.to_csv(out / name)
        files.append(name)
        rows.append((m, tv_to_uniform(q)))
    _write_rows(out / "phi_tv.csv", ["m", "tv"], rows)
    return files + ["phi_tv.csv"]


_RUNNERS = {
    "spectrum": _spectrum,
    "tvdecay": _tvdecay,
    "lightcone": _lightcone,
    "mixing": _mixing,
    "irreducibility": _irreducibility,
    "moments": _moments,
    "phimap": _phimap,
}


def run(config: RunConfig) -> int:
    """Execute one experiment; returns the process exit code."""
    problems = validate(config)
    if problems:
        for msg in problems:
            print(f"error: {msg}", file=sys.stderr)
        return EXIT_CAPACITY if all(p.startswith("capacity") for p in problems) else EXIT_VALIDATION
    out = _out_dir(config)
    fam = GateFamily(config.family, config.n)
    summary: dict = {}
    start = time.perf_counter()
    try:
        files = _RUNNERS[config.experiment](config, fam, out, summary)
    except CapacityError as exc:
        print(f"capacity: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    except IterativeFailure as exc:
        print(f"eigensolver: {exc} (best residual {exc.best_residual:.3e})", file=sys.stderr)
        return EXIT_SOLVER
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    manifest = RunManifest(config.experiment, asdict(config), __version__, time.perf_counter() - start, files)
    data = asdict(manifest)
    data["summary"] = summary
    with open(out / "manifest.json", "w") as fh:
        json.dump(data, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")
    for key, val in summary.items():
        print(f"{key} = {val}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pseudotherm", description=__doc__.splitlines()[0])
    ap.add_argument("experiment", choices=EXPERIMENTS)
    ap.add_argument("--config", help="JSON file with RunConfig field names; flags override it")
    ap.add_argument("--family")
    ap.add_argument("--n", type=int)
    ap.add_argument("--m", type=int)
    ap.add_argument("--mrange", help="inclusive range lo:hi")
    ap.add_argument("--K", type=int)
    ap.add_argument("--initial", help="site string over {0,1,+}, e.g. 00+++")
    ap.add_argument("--subset", help="JSON file holding the initial subset as an integer array")
    ap.add_argument("--t-max", "--t_max", dest="t_max", type=int)
    ap.add_argument("--record-every", "--record_every", dest="record_every", type=int)
    ap.add_argument("--realizations", type=int)
    ap.add_argument("--seed", type=int)
    ap.add_argument("--na", type=int, help="size of the initial |+> block (lightcone)")
    ap.add_argument("--k", type=int, help="number of eigenvalues")
    ap.add_argument("--tol", type=float)
    ap.add_argument("--eps", type=float)
    ap.add_argument("--relative", action="store_true", default=None, help="use the m=2 relative-coordinate chain")
    ap.add_argument("--budget", type=int)
    ap.add_argument("--moment-budget", "--moment_budget", dest="moment_budget", type=int)
    ap.add_argument("--output", help="output directory")
    ap.add_argument("--threads", type=int, help="cap on BLAS/OpenMP worker threads")
    return ap


def config_from_args(args: argparse.Namespace) -> RunConfig:
    data = {}
    if args.config:
        data = json.loads(Path(args.config).read_text())
        known = {f.name for f in fields(RunConfig)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
    for f in fields(RunConfig):
        val = getattr(args, f.name, None)
        if val is not None:
            data[f.name] = val
    data["experiment"] = args.experiment
    return RunConfig(**data)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = config_from_args(args)
    except (ValueError, OSError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    if args.threads:
        from threadpoolctl import threadpool_limits

        with threadpool_limits(limits=args.threads):
            return run(config)
    return run(config)


if __name__ == "__main__":
    sys.exit(main())
