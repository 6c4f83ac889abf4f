"""Batch front door: ``rbsde-horizon run | verify | schema``.

Exit codes: 0 all checks pass, 1 a numerical check failed, 2 the config or an
expression could not be parsed or validated, 3 a model invariant (positivity,
barrier dominance) was violated at a named node.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from rbsde_horizon import horizon, identities, oracles
from rbsde_horizon.config import (
    SCHEMA, VERIFY_EXPERIMENTS, ScenarioConfig, load_config_file,
)
from rbsde_horizon.errors import (
    ArgumentError, ConfigurationError, InputError, RBSDEError,
)
from rbsde_horizon.estimates import (
    solution_norms, verify_discounted, verify_lemma_discounting, verify_stability,
    verify_appendixA_inequality,
)
from rbsde_horizon.random_time import (
    build_enlarged_space, build_random_time, check_g_projection,
)
from rbsde_horizon.rbsde_f import solve_f_rbsde, solve_f_rbsde_infinite, transform_data
from rbsde_horizon.rbsde_g import lift_solution, residual_check, solve_g_snell_oracle
from rbsde_horizon.tree import build_tree

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_INVARIANT = 0, 1, 2, 3

IDENTITY_TOL = 1e-12
SOLVER_TOL = 1e-10
LEMMA_INSTANCES = 20
APPENDIX_A_SEEDS = 200
APPENDIX_A_CEILING = 100.0

_RESIDUAL_NAMES = {
    "terminal": "terminal condition Y = h at T^tau",
    "dynamics": "G-dynamics dY = -f dt - dK - dM + Z dW",
    "stopped": "solution frozen after T^tau",
    "K_nondecreasing": "K nondecreasing",
    "barrier": "Y >= S before T^tau",
    "skorokhod": "Skorokhod condition sum (Y_- - S_-) dK = 0",
    "M_martingale_Qtilde": "M is a Q~ martingale",
    "M_martingale_P": "M is a P martingale",
    "W_stopped_martingale_Qtilde": "W stopped at T^tau is a Q~ martingale",
}
_MODEL_NAMES = {
    "decomposition": "decomposition G = G_0 E(G_-^-1 . m) Etilde",
    "Gtilde_vs_Gminus_dm": "Gtilde = G_- + dm",
    "Gtilde_minus_dD": "Gtilde - dD^{o,F} = G",
    "m_martingale": "m is an F martingale",
    "Ztilde_reciprocal": "Ztilde = 1 / E(G_-^-1 . m)",
    "VF_monotone": "V^F nondecreasing",
}


def fmt(x) -> str:
    """Shortest round-trip text for a float; integers stay integers."""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    if x is None:
        return ""
    return repr(float(x) + 0.0)  # folds -0.0 into 0.0


@dataclass
class Check:
    experiment: str
    name: str
    passed: bool | None  # None: report-only
    value: float | None = None
    bound: float | None = None
    note: str = ""

    @property
    def status(self) -> str:
        return "REPORT" if self.passed is None else ("PASS" if self.passed else "FAIL")


@dataclass
class RunReport:
    experiments: list = field(default_factory=list)
    checks: list = field(default_factory=list)
    scalars: dict = field(default_factory=dict)
    files: list = field(default_factory=list)

    def status(self, experiment: str) -> str:
        own = [c for c in self.checks if c.experiment == experiment and c.passed is not None]
        if not own:
            return "REPORT"
        return "PASS" if all(c.passed for c in own) else "FAIL"

    @property
    def failures(self) -> list:
        return [c for c in self.checks if c.passed is False]

    @property
    def exit_code(self) -> int:
        return EXIT_FAIL if self.failures else EXIT_OK

    def render(self) -> str:
        lines = []
        for exp in self.experiments:
            lines.append(f"[{exp}] {self.status(exp)}")
            for c in (c for c in self.checks if c.experiment == exp):
                detail = ""
                if c.value is not None:
                    detail = f"  value={fmt(c.value)}"
                    if c.bound is not None:
                        detail += f" bound={fmt(c.bound)}"
                if c.note:
                    detail += f"  ({c.note})"
                lines.append(f"  {c.status:6s} {c.name}{detail}")
        if self.scalars:
            lines.append("[scalars]")
            lines.extend(f"  {k} = {fmt(v)}" for k, v in self.scalars.items())
        if self.files:
            lines.append("[files]")
            lines.extend(f"  {f}" for f in self.files)
        status = "FAIL" if self.failures else "PASS"
        lines.append(f"overall: {status}")
        for c in self.failures:
            lines.append(f"  failing check: {c.experiment}: {c.name}")
        return "\n".join(lines) + "\n"


class _Run:
    """Lazily built model objects and cached solutions for one scenario."""

    def __init__(self, cfg: ScenarioConfig, threads: int | None):
        self.cfg = cfg
        self.threads = threads
        self.tree = cfg.tree
        self.model = build_random_time(cfg.tree, cfg.kernel)
        self._space = None
        self._cache = {}
        self.report = RunReport()
        self.norm_rows = []
        self.profile_rows = []

    @property
    def space(self):
        if self._space is None:
            self._space = build_enlarged_space(self.tree, self.model)
        return self._space

    def solve(self, T: int | None = None, data=None):
        """(SolutionF, SolutionG) for the configured horizon mode, cached by (T, data)."""
        data = self.cfg.data if data is None else data
        T = self.cfg.T if T is None else T
        key = (T, id(data))
        if key not in self._cache:
            tf = transform_data(data, self.model, T)
            if self.cfg.infinite and T == self.tree.depth:
                solF = solve_f_rbsde_infinite(tf, self.tree, self.model, self.threads)
            else:
                solF = solve_f_rbsde(tf, self.tree, T, self.threads)
            self._cache[key] = (solF, lift_solution(solF, self.model, self.space, data.h, T))
        return self._cache[key]

    def check(self, exp, name, passed, value=None, bound=None, note=""):
        self.report.checks.append(Check(exp, name, passed, value, bound, note))

    def le(self, exp, name, value, bound, note=""):
        self.check(exp, name, bool(value <= bound), value, bound, note)

    def norm_row(self, exp, rep):
        self.norm_rows.append([exp, rep.p, rep.measure, rep.T, rep.yNorm, rep.zNorm,
                               rep.mNorm, rep.kNorm, rep.dataNorm, rep.ratio])


# ------------------------------------------------------------------ experiments

def _exp_solve(run: _Run):
    solF, solG = run.solve()
    d = solF.diagnostics
    tol = IDENTITY_TOL * d.get("scale", 1.0)
    run.le("solve", "F-level Snell recursion residual", d.get("dynamics", 0.0), tol)
    if "barrier" in d:
        run.le("solve", "F-level Y^F >= S^F", d["barrier"], tol)
    run.report.scalars["Y0_F"] = float(solF.Y[0])
    space = run.space
    for cls, mask in (("alive", space.death > 0), ("dead_at_0", space.death == 0)):
        if np.any(mask):
            run.report.scalars[f"Y0_G_{cls}"] = float(solG.Y[mask, 0][0])
    for p in run.cfg.p_grid:
        rep = solution_norms(solG, run.cfg.data, space, p, "Qtilde")
        run.norm_row("solve", rep)


def _exp_oracle_check(run: _Run):
    cfg, space = run.cfg, run.space
    solF, solG = run.solve()
    oracle = solve_g_snell_oracle(cfg.data, space, cfg.T)
    scale = 1.0 + float(np.max(np.abs(oracle)))
    diff = float(np.max(np.abs(oracle - solG.Y)))
    run.le("oracle_check", "lifted F-solution equals G-level Snell envelope", diff, SOLVER_TOL * scale)
    for key, entry in residual_check(solG, cfg.data, space).items():
        run.check("oracle_check", _RESIDUAL_NAMES.get(key, key), entry["pass"],
                  entry["value"], entry["tol"], "vacuous" if entry["vacuous"] else "")
    if cfg.T <= oracles.MAX_ENUM_DEPTH:
        tf = transform_data(cfg.data, run.model, cfg.T)
        fval = oracles.f_stopping_value(tf, run.tree)
        run.le("oracle_check", "Y^F_0 = max over F-stopping times", abs(fval - solF.Y[0]),
               IDENTITY_TOL * (1.0 + abs(fval)))
        alive = space.death > 0
        if np.any(alive):
            gval = oracles.g_stopping_value(cfg.data, space, cfg.T)
            y0 = float(solG.Y[alive, 0][0])
            run.le("oracle_check", "Y^G_0 = max over G-stopping times", abs(gval - y0),
                   IDENTITY_TOL * (1.0 + abs(gval)))
    if not cfg.data.has_barrier:
        ref = oracles.conditional_sum_oracle(cfg.data.f, cfg.data.h, space, cfg.T)
        run.check("oracle_check", "no barrier: K identically 0", bool(np.all(solG.K == 0.0)))
        run.le("oracle_check", "no barrier: Y = conditional Q~ sum", float(np.max(np.abs(ref - solG.Y))),
               SOLVER_TOL * (1.0 + float(np.max(np.abs(ref)))))


def _exp_identities(run: _Run):
    model, space, tree = run.model, run.space, run.tree
    N = tree.depth
    rng = np.random.default_rng(run.cfg.seed)
    struct_scale = max(1.0, float(np.max(model.EGm)), float(np.max(model.Ztilde)))
    tol = IDENTITY_TOL * struct_scale
    for key, value in model.invariant_residuals().items():
        run.le("identities", _MODEL_NAMES.get(key, key), value, tol)
    run.le("identities", "Q~ normalization E^Q~[1] = 1", identities.qtilde_normalization(space), tol)
    run.le("identities", "Ztilde stopped at tau is a P martingale",
           identities.stopped_density_martingale(space), tol)
    ng = identities.ng_martingale(space)
    run.le("identities", "N^G is a P martingale", ng["P"], tol)
    run.le("identities", "N^G is a Q~ martingale", ng["Qtilde"], tol)

    samples = [("W", tree.W), ("random X", rng.normal(size=tree.size))]
    T_max = run.cfg.T
    for label, X in samples:
        worst_a = worst_b = 0.0
        xs = max(1.0, float(np.max(np.abs(X))))
        for T in range(T_max + 1):
            for fn in (identities.qtilde_stopped_via_vf, identities.qtilde_stopped_via_increments):
                lhs, rhs = fn(space, model, X, T)
                err = abs(lhs - rhs) / max(xs, abs(lhs), abs(rhs))
                if fn is identities.qtilde_stopped_via_vf:
                    worst_a = max(worst_a, err)
                else:
                    worst_b = max(worst_b, err)
        run.le("identities", f"E^Q~[X_(T^tau)] via dV^F ({label})", worst_a, IDENTITY_TOL)
        run.le("identities", f"E^Q~[X_(T^tau)] via Etilde_- . X ({label})", worst_b, IDENTITY_TOL)
    levels = range(N) if model.finite_tau else range(N + 1)
    leaf_x = rng.normal(size=tree.n_leaves)
    proj = max(max(check_g_projection(space, model, tree.W, n), check_g_projection(space, model, leaf_x, n))
               for n in levels)
    run.le("identities", "G-projection E[X|G_n] = E[X 1{n<tau}|F_n] / G_n", proj,
           IDENTITY_TOL * max(1.0, float(np.max(np.abs(leaf_x))), float(np.max(np.abs(tree.W)))))

    worst = -np.inf
    X_up = identities.nondecreasing_sample(tree, rng)
    for r in (1.0, *run.cfg.p_grid):
        for T in range(1, T_max + 1):
            lhs, rhs = identities.discounted_integral_bound(space, model, X_up, T, r)
            worst = max(worst, lhs - rhs * (1.0 + IDENTITY_TOL))
    if T_max >= 1:
        run.le("identities", "||(Etilde_- . X)_T||_r <= 2 G_0^(-1/r) ||X_(T^tau)||_r(Q~), X nondecreasing",
               worst, 0.0)
    excess = {"qtilde_excess": -np.inf, "p_excess": -np.inf, "gtilde_excess": -np.inf}
    for T in range(1, T_max + 1):
        for k, v in identities.lemma_hazard_mass(space, model, T).items():
            excess[k] = max(excess[k], v)
    if T_max >= 1:
        run.le("identities", "E^Q~[D^{o,F} mass over (t^tau, T^tau] | G_t] <= Gtilde_t",
               excess["qtilde_excess"], IDENTITY_TOL)
        run.le("identities", "E[sum Gtilde^-1 dD^{o,F} | G_t] <= 1", excess["p_excess"], IDENTITY_TOL)
    mono = min(identities.lemma_vtilde_monotone(model, a)
               for p in run.cfg.p_grid for a in (1.0 / p, 2.0 / p, 1.0, p))
    run.le("identities", "max(a,1) Gtilde^-1 . D^{o,F} - Vtilde^(a) nondecreasing", -mono,
           1e-15)


def _exp_apriori(run: _Run):
    cfg, space = run.cfg, run.space
    horizons = range(1, cfg.T + 1)
    for p in cfg.p_grid:
        ratios = []
        for T in horizons:
            _, solG = run.solve(T)
            rep = solution_norms(solG, cfg.data, space, p, "Qtilde", T)
            run.norm_row("apriori", rep)
            run.profile_rows.append(["apriori_ratio", p, T, rep.ratio, ""])
            ratios.append(rep.ratio)
        finite = bool(ratios) and bool(np.all(np.isfinite(ratios)))
        run.check("apriori", f"a-priori ratio finite over T = 1..{cfg.T} (p = {fmt(p)})", finite,
                  max(ratios) if ratios else None)
        if ratios:
            run.report.scalars[f"apriori_max_ratio_p{fmt(p)}"] = max(ratios)
    if cfg.T >= 1:
        base = solution_norms(run.solve()[1], cfg.data, space, cfg.p_grid[0], "Qtilde").ratio
        worst = 0.0
        for lam in (0.1, 10.0):
            scaled = cfg.data.scaled(lam)
            tf = transform_data(scaled, run.model, cfg.T)
            solver = solve_f_rbsde_infinite if cfg.infinite else None
            solF = (solver(tf, run.tree, run.model, run.threads) if solver
                    else solve_f_rbsde(tf, run.tree, cfg.T, run.threads))
            solG = lift_solution(solF, run.model, space, scaled.h, cfg.T)
            r = solution_norms(solG, scaled, space, cfg.p_grid[0], "Qtilde").ratio
            worst = max(worst, abs(r - base) / max(abs(base), 1e-300))
        run.le("apriori", "ratio invariant under data scaling (lambda = 0.1, 10)", worst, 1e-10)


def _exp_stability(run: _Run):
    cfg = run.cfg
    _, solA = run.solve()
    _, solB = run.solve(data=cfg.data2)
    for p in cfg.p_grid:
        out = verify_stability(solA, solB, cfg.data, cfg.data2, run.space, p)
        run.check("stability", f"stability implied constant finite (p = {fmt(p)})",
                  out["finite"], out["implied"])
        run.report.scalars[f"stability_lhs_p{fmt(p)}"] = out["lhs"]
        run.report.scalars[f"stability_implied_p{fmt(p)}"] = out["implied"]


def _exp_discounted(run: _Run):
    cfg, model, space = run.cfg, run.model, run.space
    _, solG = run.solve()
    rng = np.random.default_rng(cfg.seed + 1)
    for p in cfg.p_grid:
        rep = verify_discounted(solG, cfg.data, space, model, p)
        run.norm_row("discounted", rep)
        run.check("discounted", f"discounted ratio finite (p = {fmt(p)})",
                  bool(np.isfinite(rep.ratio)), rep.ratio)
        if cfg.T >= 1:
            worst = {}
            for _ in range(LEMMA_INSTANCES):
                for key, (lhs, rhs) in verify_lemma_discounting(model, space, p, cfg.T, rng).items():
                    worst[key] = max(worst.get(key, -np.inf), lhs / rhs if rhs > 0 else
                                     (0.0 if lhs == 0 else np.inf))
            for key in sorted(worst):
                run.le("discounted", f"discounting lemma ({key}) with kappa constant (p = {fmt(p)})",
                       worst[key], 1.0 + IDENTITY_TOL)
        if cfg.infinite:
            res = horizon.solve_infinite(cfg.data, model, space, p, threads=run.threads)
            for n, c in zip(res.cutoffs, res.cauchy):
                run.profile_rows.append(["cauchy", p, n, c, ""])
            run.check("discounted", f"truncation Cauchy profile nonincreasing to 0 (p = {fmt(p)})",
                      res.cauchy_nonincreasing, res.cauchy[0])
            run.check("discounted", f"discounted bound against P x V^F data (p = {fmt(p)})",
                      bool(np.isfinite(res.discounted_ratio)), res.discounted_ratio)
            run.report.scalars[f"pvf_data_p{fmt(p)}"] = res.pvf_data
            run.report.scalars[f"pvf_data_abs_p{fmt(p)}"] = res.pvf_data_abs


def _exp_limit_profile(run: _Run):
    model, space, tree = run.model, run.space, run.tree
    for label, X in (("VF", np.asarray(model.VF)), ("W", tree.W)):
        out = horizon.qtilde_limit_check(X, model, space)
        for T, v in enumerate(out["profile"], start=1):
            run.profile_rows.append([f"limit_{label}", "", T, v, out["target"] + out["boundary"]])
        bound = IDENTITY_TOL * max(1.0, abs(out["target"]))
        run.le("limit_profile", f"E^Q~_N[X_(N^tau)] = G_0 ||X||_(P x V^F) at T = N ({label})",
               out["error"], bound)


def _exp_equivalent_check(run: _Run):
    _, solG = run.solve()
    for p in run.cfg.p_grid:
        out = horizon.equivalent_rbsde_check(solG, run.cfg.data, run.model, run.space, p)
        worst = max(out["dynamics"], out["barrier"], out["skorokhod"], out["terminal"])
        run.le("equivalent_check", f"Etilde^(1/p)-discounted equation residual (p = {fmt(p)})",
               worst, out["tol"])


def _exp_appendixA(run: _Run):
    cfg = run.cfg
    tree = build_tree(min(cfg.tree.depth, 8), cfg.tree.dt)
    seeds = range(cfg.seed, cfg.seed + APPENDIX_A_SEEDS)
    out = verify_appendixA_inequality(tree, seeds, 4.0, 4.0)
    run.check("appendixA", "sup|H.M| bound ratio finite and below sanity ceiling",
              bool(out["finite"] and out["max_ratio"] < APPENDIX_A_CEILING),
              out["max_ratio"], APPENDIX_A_CEILING)
    run.report.scalars["appendixA_max_ratio"] = out["max_ratio"]


_EXPERIMENTS = {
    "solve": _exp_solve, "oracle_check": _exp_oracle_check, "identities": _exp_identities,
    "apriori": _exp_apriori, "stability": _exp_stability, "discounted": _exp_discounted,
    "limit_profile": _exp_limit_profile, "equivalent_check": _exp_equivalent_check,
    "appendixA": _exp_appendixA,
}


# ------------------------------------------------------------------ writers

def _write_csv(path: Path, header, rows) -> None:
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([c if isinstance(c, str) else fmt(c) for c in row])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc


def emit_solution_f_csv(solF, path) -> None:
    tree, T = solF.tree, solF.T
    lv = tree.level

    def rows():
        for n in range(T + 1):
            Y, K = lv(solF.Y, n), lv(solF.K, n)
            Z = lv(solF.Z, n) if n < T else None
            for i in range(1 << n):
                yield [n, i, Y[i], "" if Z is None else Z[i], K[i]]
    _write_csv(Path(path), ["level", "path_bits", "Y", "Z", "K"], rows())


def emit_solution_csv(sol, space, path) -> None:
    """One row per G_n atom: level, path prefix, death index (inf = alive at n)."""
    N = space.tree.depth

    def rows():
        for n in range(N + 1):
            codes = space.atom_codes(n)
            _, first = np.unique(codes, return_index=True)
            for s in first:
                d = space.death[s]
                z = "" if n == N else sol.Z[s, n]
                yield [n, int(space.prefix(n)[s]), "inf" if d > n else int(d),
                       sol.Y[s, n], z, sol.K[s, n], sol.M[s, n]]
    _write_csv(Path(path), ["level", "path_bits", "death_index", "Y", "Z", "K", "M"], rows())


NORM_HEADER = ["experiment", "p", "measure", "T", "Y", "Z", "M", "K", "data", "ratio"]
PROFILE_HEADER = ["profile", "p", "T", "value", "target"]


def run_scenario(cfg: ScenarioConfig, out_dir=None, threads: int | None = None,
                 experiments=None, write: bool = True) -> RunReport:
    run = _Run(cfg, threads)
    chosen = tuple(cfg.experiments if experiments is None else experiments)
    run.report.experiments = list(chosen)
    for exp in chosen:
        _EXPERIMENTS[exp](run)
    if write:
        out = Path(out_dir or cfg.output_dir or "rbsde_out")
        out.mkdir(parents=True, exist_ok=True)
        solF, solG = run.solve()
        emit_solution_f_csv(solF, out / "solution_f.csv")
        emit_solution_csv(solG, run.space, out / "solution_g.csv")
        _write_csv(out / "norms.csv", NORM_HEADER, run.norm_rows)
        _write_csv(out / "profiles.csv", PROFILE_HEADER, run.profile_rows)
        run.report.files = ["report.txt", "norms.csv", "profiles.csv",
                            "solution_f.csv", "solution_g.csv"]
        (out / "report.txt").write_text(run.report.render())
    return run.report


# ------------------------------------------------------------------ entry point

def _p_list(text: str):
    try:
        values = tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}")
    if not values or any(not v > 1 for v in values):
        raise argparse.ArgumentTypeError("every p must exceed 1")
    return values


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rbsde-horizon",
                                 description="Reflected BSDEs under a random horizon on a binary tree.")
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run every experiment of a scenario and write CSV outputs")
    run.add_argument("config")
    run.add_argument("--out", default=None, help="output directory (overrides output_dir)")
    run.add_argument("--threads", type=int, default=None, help="worker threads (else RBSDE_THREADS)")
    run.add_argument("--p", type=_p_list, default=None, help="comma-separated p grid override")
    ver = sub.add_parser("verify", help="run only the identity and estimate checks, print the report")
    ver.add_argument("config")
    ver.add_argument("--threads", type=int, default=None)
    ver.add_argument("--p", type=_p_list, default=None)
    sub.add_parser("schema", help="print the scenario JSON schema")
    return ap


def main(argv=None) -> int:
    ap = _parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    if args.command == "schema":
        print(json.dumps(SCHEMA, indent=2, sort_keys=True))
        return EXIT_OK
    try:
        cfg = load_config_file(args.config, args.p)
        if args.command == "run":
            report = run_scenario(cfg, args.out, args.threads)
        else:
            chosen = [e for e in cfg.experiments if e in VERIFY_EXPERIMENTS] or ["identities"]
            report = run_scenario(cfg, threads=args.threads, experiments=chosen, write=False)
    except (ConfigurationError, ArgumentError, InputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RBSDEError as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    sys.stdout.write(report.render())
    for c in report.failures:
        print(f"FAIL: {c.experiment}: {c.name}", file=sys.stderr)
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
