"""Command-line experiment runner.

    rbmhit <estimate|sweep|fit|oracle|localize> --config FILE [--seed N]
           [--format csv|json] [--out PATH] [--paths N] [--workers N]

Exit codes: 0 success, 1 statistical or bracket failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import sys
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Sequence

import numpy as np

from . import geometry as g
from .conformal import L_epsilon, QuadratureError, l_epsilon, limit_f0, sc_map
from .config import (ConfigError, ExperimentConfig, build_domain, build_partition, dumps_report,
                     fmt_float, load_config, partition_name, row_dt)
from .core import Estimate, _z_value
from .oracles import (GridError, GridProblem, annulus_escape_probability, disk_arc_measure,
                      grid_laplace_solve, half_plane_interval_measure, localization_bracket,
                      potential_at, strip_harmonic_measure, thm31_bounds_check,
                      thm51_prediction)
from .sde import TARGET, Localization, simulate_paths

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2
CSV_COLUMNS = ("epsilon", "p_hat", "ci_low", "ci_high", "n_paths", "dt", "seed",
               "oracle_value", "product_thm31", "timeout_fraction")
N_SIGMA = 3.0
STAGE2_OFFSET = 1 << 40


class FitError(RuntimeError):
    pass


@dataclass
class SweepRow:
    epsilon: float | None
    p_hat: float | None
    ci_low: float | None
    ci_high: float | None
    n_paths: int
    dt: float
    seed: int
    oracle_value: float | None
    product_thm31: float | None
    timeout_fraction: float | None
    status: str = "ok"
    sigma: float | None = None
    notes: list[str] = field(default_factory=list)


def _start(cfg: ExperimentConfig, domain: g.Domain) -> np.ndarray:
    if len(cfg.start) != domain.dim:
        raise ConfigError(f"start must have {domain.dim} coordinates")
    return np.array(cfg.start, dtype=float)


def oracle_value(cfg: ExperimentConfig, domain: g.Domain, eps: float | None) -> float | None:
    """Closed-form hitting probability from the start point, if the setup has one."""
    x = _start(cfg, domain)
    name = partition_name(cfg)
    if isinstance(domain, g.HalfPlane2D) and name == "thm51":
        return thm51_prediction(complex(x[0], x[1]), eps)
    if isinstance(domain, g.HalfPlane2D) and name == "interval":
        return half_plane_interval_measure(complex(x[0], x[1]), *cfg.interval)
    if isinstance(domain, (g.Strip2D, g.Rectangle2D)):
        return strip_harmonic_measure(complex(x[0], x[1]), domain.L)
    if isinstance(domain, g.Disk2D):
        return disk_arc_measure(complex(x[0], x[1]) / domain.radius, *cfg.arc)
    if isinstance(domain, g.Annulus):
        return annulus_escape_probability(domain.dim, float(np.linalg.norm(x)),
                                          domain.r_inner, domain.r_outer)
    return None


def _product(n: int, eps: float | None, p: float) -> float | None:
    if eps is None:
        return None
    return p * potential_at(n, eps)


def _run_row(cfg: ExperimentConfig, domain: g.Domain, eps: float | None,
             workers: int | None = None) -> SweepRow:
    dt = row_dt(cfg, eps)
    row = SweepRow(eps, None, None, None, cfg.n_paths, dt, cfg.master_seed, None, None, None)
    try:
        part = build_partition(cfg, domain, eps)
        start = _start(cfg, domain)
        batch = simulate_paths(domain, part, start, cfg.sim_config(dt), workers=workers)
        est = batch.estimate(cfg.master_seed, cfg.confidence)
        row.p_hat, row.ci_low, row.ci_high = est.p_hat, est.ci_low, est.ci_high
        row.sigma = est.sigma
        row.timeout_fraction = est.timeout_fraction
        row.notes.extend(est.flags)
        row.product_thm31 = _product(domain.dim, eps, est.p_hat)
        row.oracle_value = oracle_value(cfg, domain, eps)
        if cfg.check_oracle and row.oracle_value is not None:
            dist = abs(est.p_hat - row.oracle_value)
            if dist > N_SIGMA * max(est.sigma, 1e-300):
                row.status = "failed"
                row.notes.append(f"oracle mismatch: {dist / est.sigma:.2f} sigma")
    except ConfigError:
        raise
    except (g.GeometryError, QuadratureError, ValueError) as exc:
        row.status = "failed"
        row.notes.append(f"{type(exc).__name__}: {exc}")
    return row


def cmd_estimate(cfg: ExperimentConfig, workers: int | None = None) -> tuple[dict[str, Any], int]:
    eps_list = cfg.epsilons()
    if len(eps_list) > 1:
        raise ConfigError("estimate takes a single epsilon; use sweep for a list")
    domain = build_domain(cfg)
    row = _run_row(cfg, domain, eps_list[0] if eps_list else None, workers)
    res: dict[str, Any] = {"rows": [row]}
    if row.oracle_value is not None and row.p_hat is not None:
        res["abs_error"] = abs(row.p_hat - row.oracle_value)
        res["sigma_distance"] = res["abs_error"] / row.sigma if row.sigma else math.inf
    return res, EXIT_OK if row.status == "ok" else EXIT_FAIL


def cmd_sweep(cfg: ExperimentConfig, workers: int | None = None) -> tuple[dict[str, Any], int]:
    eps_list = cfg.epsilons()
    if not eps_list:
        raise ConfigError("sweep needs epsilon_list")
    domain = build_domain(cfg)
    rows = [_run_row(cfg, domain, e, workers) for e in eps_list]
    res: dict[str, Any] = {"rows": rows}
    done = [r for r in rows if r.p_hat is not None]
    if done:
        res["thm31_bounds"] = thm31_bounds_check([r.p_hat for r in done],
                                                 [r.epsilon for r in done], domain.dim)
    failed = any(r.status != "ok" for r in rows)
    return res, EXIT_FAIL if failed else EXIT_OK


@dataclass
class FitResult:
    C_hat: float
    C_se: float
    b_hat: float
    b_se: float
    condition: float
    n_rows: int
    warnings: list[str] = field(default_factory=list)
    C_limit: float | None = None


def fit_log_law(rows: Sequence[SweepRow], confidence: float = 0.95,
                max_condition: float = 1e8) -> FitResult:
    """Least squares ``p = a / log(eps) + b / log(eps)^2``; ``a`` estimates the limit constant."""
    rows = [r for r in rows if r.status == "ok" and r.p_hat is not None]
    if len(rows) < 3:
        raise FitError("fit needs at least 3 usable rows")
    eps = np.array([r.epsilon for r in rows], float)
    if np.any(eps <= 0) or np.any(eps >= 1):
        raise FitError("fit needs 0 < eps < 1")
    x = np.log(eps)
    p = np.array([r.p_hat for r in rows], float)
    A = np.column_stack([1.0 / x, 1.0 / x ** 2])
    z = _z_value(confidence)
    sig = np.array([(r.ci_high - r.ci_low) / (2 * z) for r in rows], float)
    weighted = bool(np.all(sig > 0))
    w = 1.0 / sig if weighted else np.ones_like(p)
    Aw = A * w[:, None]
    cond = float(np.linalg.cond(Aw))
    if not cond < max_condition:
        raise FitError(f"ill-conditioned fit: condition number {cond:.3g} >= {max_condition:g}")
    coef, *_ = np.linalg.lstsq(Aw, p * w, rcond=None)
    cov = np.linalg.inv(Aw.T @ Aw)
    if not weighted:
        dof = len(p) - 2
        resid = p - A @ coef
        cov = cov * (float(resid @ resid) / dof if dof > 0 else math.nan)
    se = np.sqrt(np.diag(cov))
    warnings = []
    order = np.argsort(-eps)
    for i, j in zip(order, order[1:]):
        # p should shrink with eps
        if rows[j].ci_low > rows[i].ci_high:
            warnings.append(f"p_hat increases from eps={eps[i]:g} to eps={eps[j]:g} beyond CI")
    return FitResult(float(coef[0]), float(se[0]), float(coef[1]), float(se[1]), cond,
                     len(rows), warnings)


def read_rows_csv(path: str) -> list[SweepRow]:
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
                raise ConfigError(f"{path}: header must be {','.join(CSV_COLUMNS)}")
            out = []
            for rec in reader:
                def num(k):
                    return float(rec[k]) if rec[k] not in ("", None) else None
                out.append(SweepRow(num("epsilon"), num("p_hat"), num("ci_low"), num("ci_high"),
                                    int(float(rec["n_paths"])), float(rec["dt"]),
                                    int(float(rec["seed"])), num("oracle_value"),
                                    num("product_thm31"), num("timeout_fraction"),
                                    status="ok" if rec["p_hat"] else "failed"))
            return out
    except OSError as exc:
        raise ConfigError(f"cannot read rows file: {exc}") from None
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"bad rows file {path}: {exc}") from None


def oracle_rows(cfg: ExperimentConfig) -> list[SweepRow]:
    domain = build_domain(cfg)
    rows = []
    for e in cfg.epsilons():
        v = oracle_value(cfg, domain, e)
        if v is None:
            raise ConfigError(f"{cfg.domain} has no closed form for fit_source 'oracle'")
        rows.append(SweepRow(e, v, v, v, 0, 0.0, cfg.master_seed, v,
                             _product(domain.dim, e, v), 0.0))
    return rows


def cmd_fit(cfg: ExperimentConfig, workers: int | None = None) -> tuple[dict[str, Any], int]:
    if build_domain(cfg).dim != 2:
        raise ConfigError("fit applies to planar domains")
    if cfg.fit_source == "rows":
        rows = read_rows_csv(cfg.rows_file)
    elif cfg.fit_source == "oracle":
        rows = oracle_rows(cfg)
    else:
        rows = cmd_sweep(cfg, workers)[0]["rows"]
    try:
        fit = fit_log_law(rows, cfg.confidence)
    except FitError as exc:
        return {"error": str(exc), "n_rows": len(rows)}, EXIT_FAIL
    if cfg.domain == "HalfPlane2D" and partition_name(cfg) == "thm51":
        fit.C_limit = limit_f0(complex(*cfg.start)).real
    return {"fit": fit}, EXIT_OK


def cmd_oracle(cfg: ExperimentConfig, workers: int | None = None) -> tuple[dict[str, Any], int]:
    if cfg.grid:
        try:
            prob = GridProblem.from_rows(cfg.grid, cfg.grid_h)
            sol = grid_laplace_solve(prob)
        except KeyError as exc:
            raise ConfigError(f"unknown grid flag {exc}") from None
        except GridError as exc:
            return {"error": str(exc)}, EXIT_FAIL
        return {"grid": {"u": sol.u.tolist(), "sweeps": sol.sweeps,
                         "residual": sol.residual}}, EXIT_OK
    domain = build_domain(cfg)
    out = []
    for e in cfg.epsilons() or (None,):
        build_partition(cfg, domain, e)
        rec: dict[str, Any] = {"epsilon": e, "oracle_value": oracle_value(cfg, domain, e)}
        if isinstance(domain, g.HalfPlane2D) and partition_name(cfg) == "thm51":
            z0 = complex(*cfg.start)
            w = sc_map(z0, e)
            L = L_epsilon(e)
            c = limit_f0(z0).real
            # P log(eps) and the strip form -Re f / L * log(eps) should agree, and
            # both share the sign of the limit constant (log eps < 0 < P)
            p_log = rec["oracle_value"] * math.log(e)
            strip_log = -w.real / L * math.log(e)
            rec.update(L_epsilon=L, l_epsilon=l_epsilon(e), f_re=w.real, f_im=w.imag,
                       limit_constant=c, p_log_eps=p_log, strip_log_eps=strip_log,
                       sign_consistent=bool(abs(p_log - strip_log) <= 1e-12 * abs(p_log)
                                            and (p_log < 0) == (c < 0)))
        out.append(rec)
    return {"oracle": out}, EXIT_OK


def _estimate_dict(e: Estimate) -> dict[str, Any]:
    d = asdict(e)
    d["sigma"] = e.sigma
    d["flags"] = list(e.flags)
    return d


def _nudge_inside(domain: g.Domain, pts: np.ndarray) -> np.ndarray:
    pts = pts.copy()
    gap = 1e3 * domain.tolerance
    for w in domain.walls():
        if w.kind == g.FLAT:
            d = w.sign * (pts[:, w.axis] - w.offset)
            pts[:, w.axis] = np.where(d < gap, w.offset + w.sign * gap, pts[:, w.axis])
    return pts


def cmd_localize(cfg: ExperimentConfig, workers: int | None = None) -> tuple[dict[str, Any], int]:
    domain = build_domain(cfg)
    if not isinstance(domain, (g.HalfBallND, g.Annulus)):
        raise ConfigError("localize applies to HalfBallND and Annulus")
    eps_list = cfg.epsilons()
    if len(eps_list) > 1:
        raise ConfigError("localize takes a single epsilon")
    eps = eps_list[0] if eps_list else None
    part = build_partition(cfg, domain, eps)
    x0 = _start(cfg, domain)
    rho0 = float(np.linalg.norm(x0))
    inner = eps if isinstance(domain, g.HalfBallND) else domain.r_inner
    if not inner < cfg.r2 < rho0 < cfg.r1:
        raise ConfigError("need target radius < r2 < |start| < r1")
    sim = cfg.sim_config(row_dt(cfg, eps))
    full = simulate_paths(domain, part, x0, sim, workers=workers).estimate(
        cfg.master_seed, cfg.confidence)
    local = simulate_paths(domain, part, x0, sim, workers=workers,
                           localization=Localization(cfg.r2, cfg.r1)).estimate(
        cfg.master_seed, cfg.confidence)
    bracket = localization_bracket(full, local)

    # two-stage factorization through the sphere of radius r2
    stop = g.Wall("stop", g.SPHERE, -1, cfg.r2, -1.0, "none", 0.0, 0.0)
    stage1 = simulate_paths(domain, part, x0, sim, workers=workers,
                            extra_walls=[(stop, g.TARGET)])
    reached = stage1.cls == TARGET
    n1 = int(reached.sum())
    p1 = n1 / sim.n_paths
    fact: dict[str, Any] = {"p_reach_c2": p1, "n_restarts": n1}
    if n1 > 0:
        restarts = _nudge_inside(domain, stage1.exit_points[reached])
        sim2 = replace(sim, n_paths=n1)
        stage2 = simulate_paths(domain, part, restarts, sim2, workers=workers,
                                index_offset=STAGE2_OFFSET)
        p2 = float(np.mean(stage2.cls == TARGET))
        prod = p1 * p2
        s1 = math.sqrt(p1 * (1 - p1) / sim.n_paths)
        s2 = math.sqrt(p2 * (1 - p2) / n1)
        s_prod = math.hypot(p2 * s1, p1 * s2)
        s_diff = math.hypot(s_prod, full.sigma)
        fact.update(p_from_c2=p2, product=prod, product_sigma=s_prod,
                    sigma_distance=abs(prod - full.p_hat) / s_diff if s_diff > 0 else 0.0,
                    consistent=abs(prod - full.p_hat) <= N_SIGMA * s_diff)
    probe = []
    for e in cfg.c3_epsilons:
        if not isinstance(domain, g.HalfBallND):
            raise ConfigError("the c3 probe needs a HalfBallND domain")
        k_eps = cfg.c3_k1 * e
        if not e < k_eps < cfg.r1:
            raise ConfigError("c3 probe needs eps < c3_k1 * eps < r1")
        pe = build_partition(cfg, domain, e)
        origin = np.zeros(domain.dim)
        est = simulate_paths(domain, pe, origin, cfg.sim_config(row_dt(cfg, e)),
                             start_radius=k_eps, workers=workers,
                             localization=Localization(0.0, cfg.r1)).estimate(
            cfg.master_seed, cfg.confidence)
        probe.append({"epsilon": e, "p_hat": est.p_hat, "ci_low": est.ci_low,
                      "ci_high": est.ci_high})
    res = {"full": _estimate_dict(full), "local": _estimate_dict(local),
           "bracket": asdict(bracket), "factorization": fact, "c3_probe": probe}
    return res, EXIT_OK if bracket.holds else EXIT_FAIL


COMMANDS = {"estimate": cmd_estimate, "sweep": cmd_sweep, "fit": cmd_fit,
            "oracle": cmd_oracle, "localize": cmd_localize}


def rows_to_csv(rows: Sequence[SweepRow]) -> str:
    buf = io.StringIO()
    buf.write(",".join(CSV_COLUMNS) + "\n")
    for r in rows:
        cells = []
        for k in CSV_COLUMNS:
            v = getattr(r, k)
            if v is None:
                cells.append("")
            elif isinstance(v, float):
                cells.append("" if not math.isfinite(v) else fmt_float(v))
            else:
                cells.append(str(v))
        buf.write(",".join(cells) + "\n")
    return buf.getvalue()


def _flatten(prefix: str, v: Any, out: list[tuple[str, str]]) -> None:
    if isinstance(v, dict):
        for k, x in v.items():
            _flatten(f"{prefix}.{k}" if prefix else k, x, out)
    elif isinstance(v, list) and v and isinstance(v[0], (dict, list)):
        for i, x in enumerate(v):
            _flatten(f"{prefix}.{i}", x, out)
    elif hasattr(v, "__dataclass_fields__"):
        _flatten(prefix, asdict(v), out)
    else:
        out.append((prefix, fmt_float(v) if isinstance(v, float) else str(v)))


def render(cfg: ExperimentConfig, results: dict[str, Any]) -> str:
    if cfg.output_format == "json":
        return dumps_report(cfg, results)
    if "rows" in results:
        return rows_to_csv(results["rows"])
    pairs: list[tuple[str, str]] = []
    _flatten("", results, pairs)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("key", "value"))
    w.writerows(pairs)
    return buf.getvalue()


def run(cfg: ExperimentConfig, workers: int | None = None) -> tuple[str, int]:
    results, code = COMMANDS[cfg.mode](cfg, workers)
    return render(cfg, results), code


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rbmhit", description=__doc__.splitlines()[0])
    ap.add_argument("mode", choices=sorted(COMMANDS))
    ap.add_argument("--config", required=True, help="flat JSON config file")
    ap.add_argument("--seed", type=int, help="override master_seed")
    ap.add_argument("--format", choices=("csv", "json"), help="override output_format")
    ap.add_argument("--out", help="write the report here instead of stdout")
    ap.add_argument("--paths", type=int, help="override n_paths")
    ap.add_argument("--workers", type=int, help="worker threads (default RBMHIT_WORKERS or all cores)")
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        over: dict[str, Any] = {"mode": args.mode}
        if args.seed is not None:
            over["master_seed"] = args.seed
        if args.format is not None:
            over["output_format"] = args.format
        if args.paths is not None:
            over["n_paths"] = args.paths
        cfg = ExperimentConfig.from_dict({**cfg.to_dict(), **over})
        if args.workers is not None and args.workers < 1:
            raise ConfigError("--workers must be at least 1")
        text, code = run(cfg, args.workers)
    except ConfigError as exc:
        print(f"rbmhit: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (QuadratureError, GridError, FitError) as exc:
        print(f"rbmhit: {exc}", file=sys.stderr)
        return EXIT_FAIL
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
