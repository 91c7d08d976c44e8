"""Command-line front door.

Subcommands::

    recovr fit       --elicited panel.csv --out summary.json
    recovr simulate  --empirical ref:logistic --experts 5 --out panel.json
    recovr sweep     --config sweep.json --out-dir results/
    recovr export    --summary summary.json --format band-csv
    recovr serve     --port 8000 --data-dir ./workshops

Exit codes: 0 success, 2 validation, 3 numerical failure, 4 I/O.  Failures
write a single JSON object ``{"error_code": ..., "detail": ...}`` to stderr.
Every subcommand that uses randomness takes ``--seed`` and is byte-for-byte
reproducible.  The ``RECOVR_LOG`` environment variable sets the log level.

Report-producing subcommands also render a PNG figure next to their
delimited output (``--no-fig`` opts out).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .elicitation import (
    AGGREGATORS,
    aggregate,
    aggregate_sparse,
    estimate_noise,
    estimate_noise_sparse,
    make_levels,
    normalize_panel,
)
from .errors import (
    InputError,
    NumericalError,
    ParseError,
    RangeError,
    RecovrError,
)
from .experts import (
    ExpertPath,
    NoiseSpec,
    fit_surrogate,
    panel_to_json,
    simulate_panel,
)
from .fitting import FitSettings, fit_elicited
from .gpr import PosteriorSummary
from .kernels import KERNEL_KINDS
from .reference_curves import resolve_curve_source

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4

log = logging.getLogger("recovr.cli")


def _emit_error(code: str, detail: str) -> None:
    sys.stderr.write(json.dumps({"error_code": code, "detail": detail}) + "\n")


class _Parser(argparse.ArgumentParser):
    """Argument parser whose usage errors are machine-readable JSON."""

    def error(self, message: str) -> "NoReturn":  # noqa: F821 - argparse API
        _emit_error("usage_error", message)
        raise SystemExit(EXIT_VALIDATION)


def _setup_logging() -> None:
    name = os.environ.get("RECOVR_LOG", "WARNING").upper()
    level = getattr(logging, name, None)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(
        level=level,
        format="%(asctime)s %(levelname)s %(name)s %(message)s",
    )


# ---------------------------------------------------------------------------
# elicited CSV intake


def read_elicited_csv(path) -> tuple[dict[str, dict[float, float]], dict[str, float]]:
    """Parse ``expert_id,level,time_days[,D_days]`` rows.

    Returns per-expert ``{level: time}`` maps and per-expert D values (only
    for experts whose rows carry one).  Raises on schema violations with
    1-based line numbers.
    """
    import csv

    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None:
                raise ParseError(f"{path}: empty file")
            fields = [f.strip() for f in reader.fieldnames]
            required = ("expert_id", "level", "time_days")
            missing = [c for c in required if c not in fields]
            if missing:
                raise ParseError(
                    f"{path}: header must contain {', '.join(required)} "
                    f"(missing: {', '.join(missing)})"
                )
            has_d = "D_days" in fields
            estimates: dict[str, dict[float, float]] = {}
            d_values: dict[str, float] = {}
            for line_no, row in enumerate(reader, start=2):
                expert = (row.get("expert_id") or "").strip()
                if not expert:
                    raise ParseError(f"{path}:{line_no}: empty expert_id")
                try:
                    level = float(row["level"])
                    time = float(row["time_days"])
                except (TypeError, ValueError) as exc:
                    raise ParseError(
                        f"{path}:{line_no}: level and time_days must be numbers"
                    ) from exc
                per = estimates.setdefault(expert, {})
                if level in per:
                    raise InputError(
                        f"{path}:{line_no}: duplicate estimate for "
                        f"expert {expert!r} at level {level}",
                        code="duplicate_estimate",
                    )
                per[level] = time
                if has_d:
                    raw = (row.get("D_days") or "").strip()
                    if raw:
                        try:
                            d = float(raw)
                        except ValueError as exc:
                            raise ParseError(
                                f"{path}:{line_no}: D_days must be a number"
                            ) from exc
                        if expert in d_values and d_values[expert] != d:
                            raise InputError(
                                f"{path}:{line_no}: conflicting D_days for "
                                f"expert {expert!r} "
                                f"({d_values[expert]} vs {d})",
                                code="conflicting_D",
                            )
                        d_values[expert] = d
    except OSError as exc:
        raise InputError(
            f"cannot read {path}: {exc}", code="curve_file_error"
        ) from exc
    if not estimates:
        raise ParseError(f"{path}: no estimate rows")
    return estimates, d_values


def _paths_from_csv(
    estimates: dict[str, dict[float, float]],
    d_values: dict[str, float],
    d_policy: str,
    consensus_d: float | None,
) -> tuple[list[ExpertPath], float | None]:
    """Build expert paths, enforcing the D policy."""
    if d_policy == "per_expert":
        missing = sorted(e for e in estimates if e not in d_values)
        if missing:
            raise InputError(
                "per-expert D policy requires a D_days value for every "
                f"expert; missing for: {', '.join(missing)}",
                code="missing_D",
            )
    else:  # consensus
        if consensus_d is None:
            raise InputError(
                "consensus D policy requires --D", code="missing_D"
            )
        if not (consensus_d > 0.0 and np.isfinite(consensus_d)):
            raise RangeError(f"--D must be positive, got {consensus_d}")
    paths = []
    for expert in sorted(estimates):
        per = estimates[expert]
        levels = sorted(per)
        times = [per[lv] for lv in levels]
        # under consensus the shared D is checked at normalization; the
        # path itself just needs a value no earlier than its last time
        d = d_values.get(expert, times[-1] if times else 1.0)
        paths.append(ExpertPath(
            levels=tuple(levels), times=tuple(times),
            D=float(d), expert_id=expert,
        ))
    return paths, consensus_d


# ---------------------------------------------------------------------------
# subcommands


def cmd_fit(args) -> int:
    estimates, d_values = read_elicited_csv(args.elicited)
    d_policy = args.d_policy.replace("-", "_")
    paths, consensus_d = _paths_from_csv(
        estimates, d_values, d_policy, args.D)
    normalized = normalize_panel(paths, d_policy, consensus_d)

    level_sets = [set(p.levels) for p in paths]
    if all(ls == level_sets[0] for ls in level_sets):
        # complete panel: every expert estimated every level
        agg = aggregate(normalized, args.aggregator)
        points = agg.points
        sigma_tau = None
        if args.noise == "pooled":
            sigma_tau = estimate_noise(normalized)
    else:
        per_expert = {
            p.expert_id: dict(zip(p.levels, p.taus)) for p in normalized
        }
        points, _ = aggregate_sparse(per_expert, aggregator=args.aggregator)
        sigma_tau = None
        if args.noise == "pooled":
            if len(paths) < 2:
                raise InputError(
                    "pooled noise needs at least 2 experts",
                    code="insufficient_experts",
                )
            sigma_tau = estimate_noise_sparse(per_expert)
            if sigma_tau is None:
                raise InputError(
                    "pooled noise needs at least one level with 2 or more "
                    "estimates; use --noise ml",
                    code="insufficient_experts",
                )

    settings = FitSettings(
        knot_count=args.knots,
        noise_policy=args.noise,
        anchor=not args.no_anchor,
        kernel_kind=args.kernel,
        n_samples=args.samples,
        grid_size=args.grid_size,
    )
    outcome = fit_elicited(points, sigma_tau, args.top_level, settings,
                           seed=args.seed)
    summary = outcome.summary

    out = Path(args.out)
    out.write_text(json.dumps(summary.to_dict(), sort_keys=True, indent=2)
                   + "\n", encoding="utf-8")
    if not args.no_fig:
        from .figures import render_band_figure

        render_band_figure(summary, out.with_suffix(".png"), train=points,
                           title=f"fit of {args.elicited}")
    width = summary.band_width_at(0.5)
    sig = "none" if outcome.sigma_tau is None else f"{outcome.sigma_tau:.6g}"
    print(
        f"n_experts={len(paths)} sigma_tau={sig} "
        f"band_width_at_0.5={width:.6g} noise_source={outcome.noise_source} "
        f"out={out}"
    )
    return EXIT_OK


def _parse_levels_spec(spec: str, top_level: float):
    """``"5,custom"`` / ``"7,equal"`` / explicit ``"0.1,0.3,0.7"``."""
    tokens = [t.strip() for t in spec.split(",") if t.strip()]
    if not tokens:
        raise RangeError("--levels must not be empty")
    if tokens[-1] in ("custom", "equal"):
        if len(tokens) != 2:
            raise RangeError(
                "--levels with a spacing rule takes the form COUNT,RULE"
            )
        try:
            count = int(tokens[0])
        except ValueError as exc:
            raise RangeError(f"bad level count {tokens[0]!r}") from exc
        return make_levels(count, tokens[-1])
    try:
        values = tuple(float(t) for t in tokens)
    except ValueError as exc:
        raise RangeError(
            f"--levels must be COUNT,RULE or a comma list of numbers, "
            f"got {spec!r}"
        ) from exc
    if len(values) == 1 and float(values[0]).is_integer() and values[0] > 1:
        return make_levels(int(values[0]), "custom")
    return values


def cmd_simulate(args) -> int:
    curve = resolve_curve_source(args.empirical)
    levels = _parse_levels_spec(args.levels, args.top_level)
    surrogate = fit_surrogate(curve, args.degree)
    noise = NoiseSpec(var_within=args.var_within, var_across=args.var_across)
    panel = simulate_panel(
        surrogate, args.experts, levels, noise, args.top_level,
        seed=args.seed, across_noise_per_level=args.across_per_level,
    )
    payload = panel_to_json(panel)
    text = json.dumps(payload, sort_keys=True, indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(f"wrote {len(panel)} expert paths to {args.out}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_sweep(args) -> int:
    from .experiments import run_sweep_from_config

    try:
        raw = Path(args.config).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(
            f"cannot read config {args.config}: {exc}", code="config_io_error"
        ) from exc
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{args.config}: invalid JSON: {exc}") from exc
    if args.seed is not None:
        if not isinstance(data, dict):
            raise ParseError(f"{args.config}: config must be a JSON object")
        data = {**data, "base_seed": args.seed}
    report = run_sweep_from_config(data, n_jobs=args.parallel)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_text(report.to_json(), encoding="utf-8")
    (out_dir / "report.csv").write_text(report.to_csv(), encoding="utf-8")
    if not args.no_fig:
        from .figures import render_sweep_figure

        render_sweep_figure(report, out_dir / "report.png",
                            title=f"{report.kind} sweep")
    for cell in report.cells:
        print(
            f"{cell.label}: mean_rmse={cell.mean_rmse:.6g} "
            f"ci=[{cell.ci_lower:.6g}, {cell.ci_upper:.6g}] "
            f"rejection_rate={cell.rejection_rate:.4g}"
        )
    print(f"report written to {out_dir}")
    return EXIT_OK


def cmd_export(args) -> int:
    try:
        raw = Path(args.summary).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(
            f"cannot read summary {args.summary}: {exc}",
            code="summary_io_error",
        ) from exc
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{args.summary}: invalid JSON: {exc}") from exc
    summary = PosteriorSummary.from_dict(data)
    lines = []
    if args.format == "band-csv":
        lines.append("tau,mean,lower95,upper95")
        for i in range(summary.grid.size):
            lines.append(
                f"{float(summary.grid[i])!r},{float(summary.mean[i])!r},"
                f"{float(summary.lower95[i])!r},{float(summary.upper95[i])!r}"
            )
    else:  # csv
        lines.append("tau,mean")
        for i in range(summary.grid.size):
            lines.append(
                f"{float(summary.grid[i])!r},{float(summary.mean[i])!r}"
            )
    text = "\n".join(lines) + "\n"
    if args.out:
        out = Path(args.out)
        out.write_text(text, encoding="utf-8")
        if not args.no_fig:
            from .figures import render_band_figure

            render_band_figure(summary, out.with_suffix(".png"))
        print(f"wrote {summary.grid.size} rows to {out}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(data_dir=args.data_dir)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser assembly


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="recovr",
        description="Fit, simulate, sweep, and serve bounded monotone "
                    "recovery curves from expert estimates.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True,
                                parser_class=_Parser)

    p_fit = sub.add_parser("fit", help="fit a curve from an elicited CSV")
    p_fit.add_argument("--elicited", required=True,
                       help="CSV with expert_id,level,time_days[,D_days]")
    p_fit.add_argument("--out", required=True, help="output JSON path")
    p_fit.add_argument("--d-policy", choices=("per-expert", "consensus"),
                       default="per-expert")
    p_fit.add_argument("--D", type=float, default=None,
                       help="consensus duration in days (consensus policy)")
    p_fit.add_argument("--knots", type=int, default=30)
    p_fit.add_argument("--noise", choices=("pooled", "ml"), default="pooled")
    p_fit.add_argument("--samples", type=int, default=1000)
    p_fit.add_argument("--grid-size", type=int, default=201)
    p_fit.add_argument("--top-level", type=float, default=0.9)
    p_fit.add_argument("--aggregator", choices=tuple(AGGREGATORS),
                       default="mean")
    p_fit.add_argument("--kernel", choices=KERNEL_KINDS, default="matern52")
    p_fit.add_argument("--no-anchor", action="store_true",
                       help="do not pin the curve at tau=0 and tau=1")
    p_fit.add_argument("--no-fig", action="store_true",
                       help="skip the PNG band figure")
    p_fit.add_argument("--seed", type=int, default=0)
    p_fit.set_defaults(func=cmd_fit)

    p_sim = sub.add_parser("simulate", help="simulate an expert panel")
    p_sim.add_argument("--empirical", required=True,
                       help="empirical curve CSV path or ref:NAME")
    p_sim.add_argument("--experts", type=int, default=5)
    p_sim.add_argument("--var-within", type=float, default=0.1)
    p_sim.add_argument("--var-across", type=float, default=0.1)
    p_sim.add_argument("--levels", default="5,custom",
                       help="COUNT,RULE (rule: custom|equal) or comma list")
    p_sim.add_argument("--top-level", type=float, default=0.9)
    p_sim.add_argument("--degree", type=int, default=4)
    p_sim.add_argument("--across-per-level", action="store_true",
                       help="draw across-expert noise per level, not shared")
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--out", default=None, help="panel JSON (else stdout)")
    p_sim.set_defaults(func=cmd_simulate)

    p_sweep = sub.add_parser("sweep", help="run a replicated sweep")
    p_sweep.add_argument("--config", required=True, help="sweep config JSON")
    p_sweep.add_argument("--out-dir", required=True)
    p_sweep.add_argument("--parallel", type=int, default=1,
                         help="worker threads for replications")
    p_sweep.add_argument("--seed", type=int, default=None,
                         help="override the config's base_seed")
    p_sweep.add_argument("--no-fig", action="store_true",
                         help="skip the PNG sweep figure")
    p_sweep.set_defaults(func=cmd_sweep)

    p_exp = sub.add_parser("export", help="flatten a summary JSON to CSV")
    p_exp.add_argument("--summary", required=True,
                       help="PosteriorSummary JSON from `recovr fit`")
    p_exp.add_argument("--format", choices=("csv", "band-csv"),
                       default="band-csv")
    p_exp.add_argument("--out", default=None, help="CSV path (else stdout)")
    p_exp.add_argument("--no-fig", action="store_true",
                       help="skip the PNG band figure")
    p_exp.set_defaults(func=cmd_export)

    p_srv = sub.add_parser("serve", help="run the workshop HTTP service")
    p_srv.add_argument("--port", type=int, default=8000)
    p_srv.add_argument("--host", default="127.0.0.1")
    p_srv.add_argument("--data-dir", default="./recovr-sessions",
                       help="directory for session event logs")
    p_srv.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except InputError as exc:
        log.debug("validation failure", exc_info=True)
        _emit_error(exc.code, str(exc))
        return EXIT_VALIDATION
    except NumericalError as exc:
        log.debug("numerical failure", exc_info=True)
        _emit_error(exc.code, str(exc))
        return EXIT_NUMERICAL
    except RecovrError as exc:
        log.debug("failure", exc_info=True)
        _emit_error(exc.code, str(exc))
        return EXIT_VALIDATION
    except OSError as exc:
        log.debug("io failure", exc_info=True)
        _emit_error("io_error", str(exc))
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
