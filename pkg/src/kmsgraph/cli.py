"""Command line interface: ``kmsgraph analyze|classify|construct|verify|export``.

Exit codes: 0 success, 1 invalid input or failed verification, 2 a result
left undecided by the budget (the partial output is still written).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict, dataclass, fields
from decimal import Decimal, InvalidOperation
from pathlib import Path
from typing import Any

from . import kgd
from .constructor import ConstructionRecipe, realise
from .enclosure import Enclosure
from .errors import IncompleteExitData, KmsGraphError, ValidationError
from .graph import ExplicitGraph, GraphView, VertexId, to_dot, truncate
from .harmonic import (
    Existence,
    HarmonicVector,
    KmsReport,
    MeasureLabel,
    enumerate_kms,
    vertex_key,
)
from .series import SeriesBudget
from .spectrum import Recurrence, RecurrenceClass, classify
from .verify import verify_report

CONFIG_ENV = "KMSGRAPH_CONFIG"
EXIT_OK, EXIT_INVALID, EXIT_UNDECIDED = 0, 1, 2


@dataclass(frozen=True)
class CliConfig:
    max_terms: int = 20_000
    target_width: float = 1e-9
    tolerance: float = 1e-6
    depth: int = 200
    width: int = 64
    format: str = "json"

    def __post_init__(self) -> None:
        if self.format not in ("json", "text"):
            raise ValidationError("format must be 'json' or 'text'")
        self.budget()

    def budget(self) -> SeriesBudget:
        return SeriesBudget(max_terms=self.max_terms, target_width=self.target_width, tolerance=self.tolerance,
                            depth=self.depth, width=self.width)

    @classmethod
    def load(cls, path: str | None) -> CliConfig:
        path = path or os.environ.get(CONFIG_ENV)
        if not path:
            return cls()
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ValidationError(f"cannot read config {path}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config line {exc.lineno} column {exc.colno}: {exc.msg}") from None
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def with_overrides(self, args: argparse.Namespace) -> CliConfig:
        data = asdict(self)
        for key in ("depth", "width", "format"):
            value = getattr(args, key, None)
            if value is not None:
                data[key] = value
        return CliConfig(**data)


def beta_grid(spec: str) -> list[str]:
    """``start:stop:step`` with both ends included, as decimal strings."""
    try:
        start, stop, step = (Decimal(part) for part in spec.split(":"))
    except (ValueError, InvalidOperation):
        raise ValidationError(f"beta grid must be start:stop:step, got {spec!r}") from None
    if step <= 0 or stop < start:
        raise ValidationError("beta grid needs a positive step and start <= stop")
    if (stop - start) / step > 10_000:
        raise ValidationError("beta grid has too many points")
    points = []
    value = start
    while value <= stop:
        points.append(str(value))
        value += step
    return points


def _betas(args: argparse.Namespace) -> list[str]:
    if args.beta_grid:
        return beta_grid(args.beta_grid)
    if args.beta is None:
        raise ValidationError("give --beta or --beta-grid")
    return [args.beta]


def _emit(args: argparse.Namespace, config: CliConfig, payload: Any, text: str) -> None:
    out = json.dumps(payload, indent=2) + "\n" if config.format == "json" else text
    if getattr(args, "output", None):
        Path(args.output).write_text(out, encoding="utf-8")
    else:
        sys.stdout.write(out)


def _report_text(report: KmsReport) -> str:
    lines = [
        f"beta={report.beta:g} exists={report.exists.value} recurrence={report.recurrence.value.value}"
        f" label={report.measure_label.value}",
        f"  boundary rays: {len(report.boundary_rays)} "
        + " ".join(vertex_key(v) for v, _ in report.boundary_rays),
        f"  harmonic rays: {len(report.harmonic_rays)} " + " ".join(src for src, _ in report.harmonic_rays),
    ]
    if report.unenumerated_harmonics:
        lines.append("  further harmonic rays possible")
    lines.extend(f"  note: {n}" for n in report.notes)
    return "\n".join(lines) + "\n"


def cmd_analyze(args: argparse.Namespace, config: CliConfig) -> int:
    g = kgd.load(args.graph)
    budget = config.budget()
    reports = []
    code = EXIT_OK
    for beta in sorted(_betas(args), key=Decimal):
        try:
            report = enumerate_kms(g, float(beta), budget)
        except IncompleteExitData as exc:
            report = exc.partial
            code = EXIT_UNDECIDED
        if not report.complete:
            code = EXIT_UNDECIDED
        reports.append(report)
    payload = [r.to_json() for r in reports]
    _emit(args, config, payload if len(payload) > 1 else payload[0], "".join(_report_text(r) for r in reports))
    return code


def cmd_classify(args: argparse.Namespace, config: CliConfig) -> int:
    g = kgd.load(args.graph)
    results = []
    code = EXIT_OK
    for beta in sorted(_betas(args), key=Decimal):
        verdict = classify(g, float(beta), config.budget())
        if verdict.value is Recurrence.INDETERMINATE:
            code = EXIT_UNDECIDED
        results.append({"beta": float(beta), **verdict.to_json()})
    text = "".join(f"beta={r['beta']:g} {r['value']}\n" for r in results)
    _emit(args, config, results if len(results) > 1 else results[0], text)
    return code


def cmd_construct(args: argparse.Namespace, config: CliConfig) -> int:
    if args.emitters.lower() in ("inf", "infinity"):
        emitters = None
    elif args.emitters.isdigit():
        emitters = int(args.emitters)
    else:
        raise ValidationError(f"--emitters must be a count or 'inf', got {args.emitters!r}")
    recipe = ConstructionRecipe.parse(args.theorem, args.entropy, args.interval or [], emitters)
    recipe.validate()
    text = kgd.dumps(realise(recipe))
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _vector_from_json(data: dict[str, Any], resolve: dict[str, VertexId]) -> HarmonicVector:
    values = {resolve.get(k, k): Enclosure.from_json(v) for k, v in data["values"].items()}
    horizon = tuple(resolve.get(k, k) for k in data.get("horizon", []))
    normalized = data.get("normalized_at")
    return HarmonicVector(values, horizon, certified=data.get("certified", True),
                          normalized_at=None if normalized is None else resolve.get(normalized, normalized))


def report_from_json(data: dict[str, Any], g: GraphView, budget: SeriesBudget) -> KmsReport:
    """Rebuild a report written by :meth:`KmsReport.to_json`, resolving vertex keys against ``g``."""
    if isinstance(g, ExplicitGraph):
        vertices = g.order
    else:
        vertices = truncate(g, budget.depth, budget.width).order
    resolve = {vertex_key(v): v for v in vertices}
    rec = data["recurrence"]
    recurrence = RecurrenceClass(Recurrence(rec["value"]), Enclosure.from_json(rec["loop_sum"]), rec.get("critical", False))
    return KmsReport(
        beta=float(data["beta"]),
        exists=Existence(data["exists"]),
        recurrence=recurrence,
        pressure=None if data.get("pressure") is None else Enclosure.from_json(data["pressure"]),
        boundary_rays=[(resolve.get(r["vertex"], r["vertex"]), _vector_from_json(r["vector"], resolve))
                       for r in data["boundary_rays"]],
        harmonic_rays=[(r["source"], _vector_from_json(r["vector"], resolve)) for r in data["harmonic_rays"]],
        unenumerated_harmonics=data.get("unenumerated_harmonics", False),
        measure_label=MeasureLabel(data["measure_label"]),
        notes=list(data.get("notes", [])),
    )


def cmd_verify(args: argparse.Namespace, config: CliConfig) -> int:
    g = kgd.load(args.graph)
    budget = config.budget()
    beta = float(args.beta)
    if args.report:
        try:
            data = json.loads(Path(args.report).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"cannot read report {args.report}: {exc}") from None
        if isinstance(data, list):
            matches = [d for d in data if float(d["beta"]) == beta]
            if not matches:
                raise ValidationError(f"the report holds no entry for beta={beta}")
            data = matches[0]
        report = report_from_json(data, g, budget)
    else:
        report = enumerate_kms(g, beta, budget)
    listing = verify_report(g, beta, report, budget)
    sys.stdout.write("\n".join(listing.lines()) + "\n")
    sys.stdout.write(("PASS" if listing.passed else "FAIL") + "\n")
    return EXIT_OK if listing.passed else EXIT_INVALID


def cmd_export(args: argparse.Namespace, config: CliConfig) -> int:
    g = kgd.load(args.graph)
    if args.width is not None and args.width < 1 or args.depth is not None and args.depth < 1:
        raise ValidationError("depth and width must be at least 1")
    cut = g if isinstance(g, ExplicitGraph) and args.depth is None else truncate(g, config.depth, config.width)
    text = to_dot(cut)
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kmsgraph", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help=f"JSON config file (default: ${CONFIG_ENV})")
    sub = parser.add_subparsers(dest="command", required=True)

    def graph_command(name: str, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("graph", help="graph description file")
        p.add_argument("--beta")
        p.add_argument("--beta-grid", help="start:stop:step, both ends included")
        p.add_argument("--format", choices=("json", "text"))
        p.add_argument("--depth", type=int)
        p.add_argument("--width", type=int)
        p.add_argument("-o", "--output")
        return p

    graph_command("analyze", "KMS report per beta").set_defaults(run=cmd_analyze)
    graph_command("classify", "recurrence class per beta").set_defaults(run=cmd_classify)

    p = sub.add_parser("construct", help="build a graph from a recipe")
    p.add_argument("--theorem", required=True, help="rev1, rev2, intro1 or intro")
    p.add_argument("--entropy", type=float, required=True)
    p.add_argument("--interval", action="append", help="interval in terms of h, e.g. '[h+1,h+2]'")
    p.add_argument("--emitters", default="1", help="number of infinite emitters, or 'inf'")
    p.add_argument("-o", "--output")
    p.set_defaults(run=cmd_construct)

    p = sub.add_parser("verify", help="re-derive a KMS report from primitives")
    p.add_argument("--graph", required=True)
    p.add_argument("--beta", required=True)
    p.add_argument("--report", help="report JSON written by analyze (recomputed when omitted)")
    p.add_argument("--depth", type=int)
    p.add_argument("--width", type=int)
    p.set_defaults(run=cmd_verify)

    p = sub.add_parser("export", help="DOT text of a truncation")
    p.add_argument("graph")
    p.add_argument("--dot", action="store_true", help="DOT output (the only format)")
    p.add_argument("--depth", type=int)
    p.add_argument("--width", type=int)
    p.add_argument("-o", "--output")
    p.set_defaults(run=cmd_export)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = CliConfig.load(args.config).with_overrides(args)
        return args.run(args, config)
    except KmsGraphError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_UNDECIDED if not isinstance(exc, ValidationError) else EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
