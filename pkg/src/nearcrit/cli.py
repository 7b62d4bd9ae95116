"""Scenario-file driven command line: classify, propagate, simulate, report, limits."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass

from . import diagnostics, engine, limits, pgf
from .errors import (
    NumericError,
    ScenarioParseError,
    ScenarioValidationError,
    WrongRegimeError,
)
from .families import (
    CompoundPoissonLimit,
    GeneralExpLimit,
    NegativeBinomialLimit,
    PoissonLimit,
    classify,
)
from .scenarios import ScenarioFile, parse_scenario

EXIT_PARSE = 2
EXIT_VALIDATION = 3
EXIT_NUMERIC = 4
EXIT_WRONG_REGIME = 5

_DEFAULT_TOL = 1e-7


def _effective_tol(cfg: "RunConfig", sf: "ScenarioFile") -> float:
    if cfg.tol is not None:
        return cfg.tol
    if sf.defaults.tol is not None:
        return sf.defaults.tol
    return _DEFAULT_TOL


@dataclass(frozen=True)
class RunConfig:
    scenario: str
    command: str
    n: int | None = None
    n_grid: tuple[int, ...] | None = None
    k_trunc: int | None = None
    reps: int | None = None
    seed: int | None = None
    x_grid: tuple[float, ...] | None = None
    tol: float | None = None
    out: str | None = None
    format: str = "csv"


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(","))


def _float_list(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(","))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="nearcrit",
        description="Propagate, simulate and classify nearly critical "
        "branching processes with immigration from scenario files.",
    )
    p.add_argument("--scenario", required=True, help="path to a .scn file")
    p.add_argument(
        "--command",
        required=True,
        choices=("classify", "propagate", "simulate", "report", "limits"),
    )
    p.add_argument("--n", type=int, help="generation index")
    p.add_argument("--n-grid", type=_int_list, help="comma list of generations")
    p.add_argument("--K", type=int, dest="k_trunc", help="truncation length")
    p.add_argument("--reps", type=int, help="Monte Carlo trajectories")
    p.add_argument("--seed", type=int, help="RNG seed")
    p.add_argument("--x-grid", type=_float_list, help="comma list of PGF points")
    p.add_argument("--tol", type=float, help="series/product tolerance")
    p.add_argument("--out", help="output path (default stdout)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    return p


def _pmf_text(p: pgf.Pmf, fmt: str, meta: dict) -> str:
    if fmt == "json":
        payload = dict(meta)
        payload["deficiency"] = p.deficiency
        payload["pmf"] = [float(v) for v in p.coeffs]
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"
    lines = ["k,p"]
    lines += [f"{k},{v:.17g}" for k, v in enumerate(p.coeffs)]
    return "\n".join(lines) + "\n"


def _pgf_grid_text(xs, values, fmt: str, meta: dict) -> str:
    if fmt == "json":
        payload = dict(meta)
        payload["pgf"] = {f"{x:.17g}": v for x, v in zip(xs, values)}
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"
    lines = ["x,g"]
    lines += [f"{x:.17g},{v:.17g}" for x, v in zip(xs, values)]
    return "\n".join(lines) + "\n"


def _limit_output(sf: ScenarioFile, cfg: RunConfig, k: int, xs) -> str:
    spec = sf.spec
    law = classify(spec)
    meta = {"scenario": spec.name, "law": law.describe()}
    if isinstance(law, PoissonLimit):
        return _pmf_text(limits.poisson_pmf(law.lam, k), cfg.format, meta)
    if isinstance(law, NegativeBinomialLimit):
        return _pmf_text(limits.nb_pmf(law.r, law.p, k), cfg.format, meta)
    if isinstance(law, CompoundPoissonLimit):
        measure = limits.cp_intensity_finite(law.lambdas)
        meta["atoms"] = [float(v) for v in measure.atoms]
        return _pmf_text(limits.cp_pmf(measure, k), cfg.format, meta)
    if isinstance(law, GeneralExpLimit):
        tol = _effective_tol(cfg, sf)
        vals = [
            limits.general_limit_pgf(spec.lambda_over_factorial, x, tol)
            for x in xs
        ]
        return _pgf_grid_text(xs, vals, cfg.format, meta)
    # product regime: PGF on the grid
    tol = _effective_tol(cfg, sf)
    vals = [limits.product_law_eval(spec, x, tol) for x in xs]
    return _pgf_grid_text(xs, vals, cfg.format, meta)


def run(cfg: RunConfig) -> int:
    """Execute one command; returns the exit status, writing artifacts."""
    sf = parse_scenario(cfg.scenario)
    spec = sf.spec
    for note in sf.notes:
        print(f"warning: {note}", file=sys.stderr)
    k = cfg.k_trunc if cfg.k_trunc is not None else spec.k_trunc
    n = cfg.n if cfg.n is not None else spec.horizon
    seed = cfg.seed if cfg.seed is not None else (sf.defaults.seed or 0)
    xs = cfg.x_grid or sf.defaults.x_grid or diagnostics.DEFAULT_X_GRID

    if cfg.command == "classify":
        law = classify(spec)
        if cfg.format == "json":
            text = json.dumps(
                {"scenario": spec.name, "law": law.describe()}, sort_keys=True
            ) + "\n"
        else:
            text = law.describe() + "\n"
    elif cfg.command == "propagate":
        state = engine.propagate(spec, n, k)
        text = _pmf_text(
            state.pmf,
            cfg.format,
            {"scenario": spec.name, "command": "propagate", "n": n, "K": k},
        )
    elif cfg.command == "simulate":
        reps = cfg.reps if cfg.reps is not None else sf.defaults.reps
        if reps is None:
            raise ScenarioValidationError("simulate needs --reps")
        empirical = engine.simulate(spec, n, reps, seed)
        text = _pmf_text(
            empirical,
            cfg.format,
            {
                "scenario": spec.name,
                "command": "simulate",
                "n": n,
                "reps": reps,
                "seed": seed,
            },
        )
    elif cfg.command == "report":
        grid = cfg.n_grid or sf.defaults.n_grid or (spec.horizon,)
        rep = diagnostics.report(
            spec, grid, k, reps=cfg.reps, seed=seed, x_grid=xs
        )
        text = rep.to_json() if cfg.format == "json" else rep.to_csv(
            include_mc=cfg.reps is not None
        )
    elif cfg.command == "limits":
        text = _limit_output(sf, cfg, k, xs)
    else:  # pragma: no cover - argparse restricts choices
        raise ScenarioValidationError(f"unknown command {cfg.command!r}")

    if cfg.out:
        with open(cfg.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cfg = RunConfig(
        scenario=args.scenario,
        command=args.command,
        n=args.n,
        n_grid=args.n_grid,
        k_trunc=args.k_trunc,
        reps=args.reps,
        seed=args.seed,
        x_grid=args.x_grid,
        tol=args.tol,
        out=args.out,
        format=args.format,
    )
    try:
        return run(cfg)
    except ScenarioParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (ScenarioValidationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except WrongRegimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_WRONG_REGIME
    except (NumericError, OverflowError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
