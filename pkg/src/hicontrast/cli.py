"""Command-line entry point: ``hicontrast {validate,homogenize,correctors,sweep,spectrum,report}``.

Exit codes: 0 success, 1 solver or internal failure, 2 configuration or
validation failure. JSON reports are written with sorted keys and carry no
wall-clock data, so identical config and seed give byte-identical files;
timings go to ``timings.json`` instead.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import queue
import sys
import threading
import time
from contextlib import contextmanager
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import __version__
from .config import RunConfig, load_config
from .errors import HiContrastError, ValidationError
from .estimator import default_theta_grid, fit_rate, naive_matching_sweep, sweep
from .fem import AssembledForms, assemble_forms
from .homogenization import CellSolutions, HomogenizedMatrix, compute_Ahom, corrector_suite, solve_cell_problems
from .oracles import FIXTURE_VERSION
from .spectra import (
    DirichletEigendata,
    beta_eval,
    beta_function,
    dirichlet_eigs,
    hausdorff_distance,
    hausdorff_trend,
    limit_spectrum,
    truncation_order,
)

log = logging.getLogger("hicontrast")

SLOPE_THRESHOLD = 0.9
NAIVE_BAND = (0.35, 0.65)
BLOCH_COLUMNS = ("eps", "theta_index", "theta1", "theta2", "band", "lam")
CSV_COLUMNS = ("eps", "theta1", "theta2", "region", "distance")


# persistence ----------------------------------------------------------------

class RunWriter:
    """Single writer thread draining a queue of ``(path, text)`` items."""

    def __init__(self, root: Path):
        self.root = root
        self._q: "queue.Queue" = queue.Queue()
        self._err: list = []
        self._thread = threading.Thread(target=self._drain, daemon=True)
        self._thread.start()

    def _drain(self):
        while True:
            item = self._q.get()
            if item is None:
                return
            path, payload = item
            try:
                path.parent.mkdir(parents=True, exist_ok=True)
                if isinstance(payload, bytes):
                    path.write_bytes(payload)
                else:
                    path.write_text(payload)
            except OSError as exc:  # surfaced on close
                self._err.append(exc)

    def write(self, name: str, payload) -> None:
        self._q.put((self.root / name, payload))

    def close(self) -> None:
        self._q.put(None)
        self._thread.join()
        if self._err:
            raise self._err[0]


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=True) + "\n"


def sweep_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([repr(r.eps), repr(r.theta[0]), repr(r.theta[1]), r.region, repr(r.distance)])
    return buf.getvalue()


# cached computations ------------------------------------------------------------

class RunContext:
    def __init__(self, cfg: RunConfig, out: Path, threads: int, use_cache: bool):
        self.cfg = cfg
        self.out = out
        self.threads = max(1, threads)
        self.use_cache = use_cache
        self.timings: dict = {}
        self._forms: Optional[AssembledForms] = None
        self._hom: Optional[tuple] = None
        self._eig: Optional[DirichletEigendata] = None

    @contextmanager
    def timed(self, name: str):
        t0 = time.perf_counter()
        yield
        self.timings[name] = round(time.perf_counter() - t0, 6)

    @property
    def cache_dir(self) -> Path:
        return self.out / "cache"

    @property
    def forms(self) -> AssembledForms:
        if self._forms is None:
            self._forms = assemble_forms(self.cfg.build_model())
        return self._forms

    def homogenized(self) -> tuple[CellSolutions, HomogenizedMatrix]:
        if self._hom is None:
            key = self.cache_dir / f"cells_{self.forms.model.digest}.npz"
            cells = None
            if self.use_cache and key.exists():
                z = np.load(key)
                cells = CellSolutions(N=z["N"], rhs=z["rhs"])
            if cells is None:
                cells = solve_cell_problems(self.forms)
                if self.use_cache:
                    key.parent.mkdir(parents=True, exist_ok=True)
                    np.savez(key, N=cells.N, rhs=cells.rhs)
            self._hom = (cells, compute_Ahom(self.forms, cells))
        return self._hom

    def eigendata(self) -> DirichletEigendata:
        if self._eig is None:
            key = self.cache_dir / f"dirichlet_{self.forms.model.digest}.npz"
            if self.use_cache and key.exists():
                z = np.load(key)
                self._eig = DirichletEigendata(
                    values=z["values"], vectors=z["vectors"], weights=z["weights"],
                    total_weight=float(z["total"]), soft_volume=float(z["volume"]),
                )
            else:
                self._eig = dirichlet_eigs(self.forms)
                if self.use_cache:
                    key.parent.mkdir(parents=True, exist_ok=True)
                    d = self._eig
                    np.savez(key, values=d.values, vectors=d.vectors, weights=d.weights,
                             total=d.total_weight, volume=d.soft_volume)
        return self._eig

    def header(self) -> dict:
        return {
            "config": self.cfg.data,
            "config_hash": self.cfg.digest,
            "model_hash": self.forms.model.digest,
            "fixture_version": FIXTURE_VERSION,
            "seed": self.cfg.seed,
            "version": __version__,
        }


# sections ------------------------------------------------------------------------

def section_validate(ctx: RunContext) -> dict:
    m = ctx.cfg.build_model()
    return {
        "status": "valid",
        "classical": m.geometry.is_classical,
        "n": m.n,
        "soft_elements": int(m.soft_mask.sum()),
        "interior_soft_nodes": m.n_interior,
    }


def section_homogenize(ctx: RunContext) -> dict:
    cells, hom = ctx.homogenized()
    lam = np.linalg.eigvalsh(hom.matrix)
    out = {
        "Ahom": hom.matrix.tolist(),
        "eigenvalues": lam.tolist(),
        "m_min": hom.m_min,
        "nu": hom.nu,
        "spd": bool(lam[0] > 0),
        "floor_ok": bool(lam[0] >= hom.nu * hom.m_min * (1 - 1e-10)),
    }
    return out


def section_correctors(ctx: RunContext) -> dict:
    cells, hom = ctx.homogenized()
    c = ctx.cfg.section("correctors")
    suite = corrector_suite(ctx.forms, hom, cells, c["theta_radii"], c["draws"], c["eps"], ctx.cfg.seed)
    eps = sorted(suite.residuals)
    out = {
        "seed": suite.seed,
        "max_ratio": suite.max_ratio,
        "case1_residual": [[e, suite.residuals[e]] for e in eps],
        "within_constant": suite.within_constant,
    }
    if len(eps) >= 4:
        fit = fit_rate([(e, suite.residuals[e]) for e in eps])
        out["case1_slope"] = fit.slope
    return out


def _fit_dict(fit) -> dict:
    lo, hi = fit.band()
    return {"slope": fit.slope, "r2": fit.r2, "stderr": fit.stderr, "band": [lo, hi]}


def section_sweep(ctx: RunContext, writer: Optional[RunWriter] = None) -> dict:
    _, hom = ctx.homogenized()
    s = ctx.cfg.section("sweep")
    rows, sups, region = [], [], {}
    naive: dict = {a: [] for a in s["alpha"]}
    for eps in s["eps"]:
        grid = default_theta_grid(eps, s["radii"], s["directions"])
        res = sweep(ctx.forms, hom, eps, grid, ctx.threads, s["method"])
        rows.extend(res.rows)
        sups.append([eps, res.sup])
        region[repr(eps)] = res.region_max
        for a in s["alpha"]:
            naive[a].append([eps, naive_matching_sweep(ctx.forms, hom, eps, a, grid, ctx.threads, s["method"]).sup])
    out: dict = {"sup": sups, "region_max": region, "grid": {"radii": s["radii"], "directions": s["directions"]}}
    if len(sups) >= 4:
        fit = fit_rate(sups)
        out["fit"] = _fit_dict(fit)
        out["pass"] = bool(fit.slope >= SLOPE_THRESHOLD)
    out["naive"] = {}
    for a, pairs in naive.items():
        entry: dict = {"sup": pairs}
        if len(pairs) >= 4:
            nf = fit_rate(pairs)
            entry["fit"] = _fit_dict(nf)
        out["naive"][repr(a)] = entry
    if writer is not None and "csv" in ctx.cfg.section("output")["formats"]:
        writer.write("sweep.csv", sweep_csv(rows))
    return out


def section_spectrum(ctx: RunContext, writer: Optional[RunWriter] = None) -> dict:
    _, hom = ctx.homogenized()
    s = ctx.cfg.section("spectra")
    data = ctx.eigendata()
    beta = beta_function(data, s["J"])
    lim = limit_spectrum(beta, s["lam_max"])
    samples = []
    for lam in np.linspace(0.0, s["lam_max"], 61):
        try:
            v, hw = beta_eval(beta, lam)
            samples.append([float(lam), v, hw])
        except HiContrastError:
            continue
    trend = hausdorff_trend(ctx.forms, hom, beta, s["eps"], s["lam_max"], s["bands"], s["theta_points"], ctx.threads)
    stability = None
    try:
        j0 = truncation_order(data, s["lam_max"])
        a = limit_spectrum(beta_function(data, j0), s["lam_max"]).union
        b = limit_spectrum(beta_function(data, min(2 * j0, data.count)), s["lam_max"]).union
        stability = {"J": j0, "J_doubled": min(2 * j0, data.count), "hausdorff": hausdorff_distance(a, b)}
    except HiContrastError:
        pass
    d = [t["hausdorff"] for t in trend]
    out = {
        "dirichlet": {
            "values": data.values[data.values <= s["lam_max"]].tolist(),
            "weights": data.weights[data.values <= s["lam_max"]].tolist(),
            "total_weight": data.total_weight,
        },
        "J": beta.J,
        "beta_samples": samples,
        "limit_set": lim.union.to_list(),
        "bands": lim.bands.to_list(),
        "edges": list(lim.edges),
        "tail_halfwidth": lim.max_halfwidth,
        "hausdorff": trend,
        "monotone": bool(all(a >= b for a, b in zip(d, d[1:]))),
        "truncation_stability": stability,
    }
    if writer is not None and "csv" in ctx.cfg.section("output")["formats"]:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(["lam", "beta", "halfwidth"])
        w.writerows([[repr(x) for x in row] for row in samples])
        writer.write("beta.csv", buf.getvalue())
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(BLOCH_COLUMNS)
        for t in trend:
            for i, (theta, lams) in enumerate(zip(t["thetas"], t["bands"])):
                for b, lam in enumerate(lams):
                    w.writerow([repr(t["eps"]), i, repr(theta[0]), repr(theta[1]), b, repr(lam)])
        writer.write("bloch.csv", buf.getvalue())
    return out


# commands -------------------------------------------------------------------------

def _run(name: str, ctx: RunContext, body: Callable[[RunWriter], dict]) -> int:
    writer = RunWriter(ctx.out)
    try:
        with ctx.timed(name):
            section = body(writer)
        report = {**ctx.header(), name: section}
        writer.write(f"{name}.json", dumps(report))
        writer.write("timings.json", dumps(ctx.timings))
        print(json.dumps({"command": name, "status": "ok", "out": str(ctx.out)}, sort_keys=True))
        return 0
    finally:
        writer.close()


def cmd_validate(ctx: RunContext) -> int:
    print(json.dumps({"status": "valid", **section_validate(ctx)}, sort_keys=True))
    return 0


def cmd_homogenize(ctx: RunContext) -> int:
    def body(w):
        sec = section_homogenize(ctx)
        if ctx.cfg.section("output")["fields"]:
            cells, _ = ctx.homogenized()
            buf = io.StringIO()
            cw = csv.writer(buf, lineterminator="\r\n")
            cw.writerow(["y1", "y2", "N1", "N2"])
            for (y1, y2), n1, n2 in zip(ctx.forms.model.node_coords, cells.N[0], cells.N[1]):
                cw.writerow([repr(float(y1)), repr(float(y2)), repr(float(n1)), repr(float(n2))])
            w.write("cell_solutions.csv", buf.getvalue())
        return sec

    return _run("homogenize", ctx, body)


def cmd_correctors(ctx: RunContext) -> int:
    return _run("correctors", ctx, lambda w: section_correctors(ctx))


def cmd_sweep(ctx: RunContext) -> int:
    return _run("sweep", ctx, lambda w: section_sweep(ctx, w))


def cmd_spectrum(ctx: RunContext) -> int:
    if ctx.cfg.build_model().geometry.is_classical:
        raise ValidationError("spectrum needs a soft inclusion")
    return _run("spectrum", ctx, lambda w: section_spectrum(ctx, w))


def cmd_report(ctx: RunContext) -> int:
    def body(w):
        sec = {
            "validate": section_validate(ctx),
            "homogenize": section_homogenize(ctx),
            "correctors": section_correctors(ctx),
            "sweep": section_sweep(ctx, w),
        }
        if not ctx.forms.model.geometry.is_classical:
            sec["spectrum"] = section_spectrum(ctx, w)
        return sec

    return _run("report", ctx, body)


COMMANDS = {
    "validate": cmd_validate,
    "homogenize": cmd_homogenize,
    "correctors": cmd_correctors,
    "sweep": cmd_sweep,
    "spectrum": cmd_spectrum,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hicontrast", description="High-contrast periodic homogenisation laboratory.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", type=Path, default=None, help="YAML run configuration")
    p.add_argument("--out", type=Path, default=None, help="run directory (overrides output.dir)")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--no-cache", action="store_true", help="do not read or write the on-disk cache")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv: Optional[list] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = cfg.with_overrides(seed=args.seed)
        out = args.out if args.out is not None else Path(cfg.section("output")["dir"])
        ctx = RunContext(cfg, out, args.threads, not args.no_cache)
        return COMMANDS[args.command](ctx)
    except HiContrastError as exc:
        print(json.dumps({"status": "error", "code": exc.code, "message": str(exc)}, sort_keys=True))
        return exc.exit_code
    except Exception as exc:  # noqa: BLE001 - last-resort solver/internal failure
        log.debug("internal failure", exc_info=True)
        print(json.dumps({"status": "error", "code": type(exc).__name__, "message": str(exc)}, sort_keys=True))
        return 1


if __name__ == "__main__":
    sys.exit(main())
