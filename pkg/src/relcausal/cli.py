"""Command-line entry point.

Every subcommand reads a JSON project manifest. Reports go to stdout,
diagnostics to stderr. Exit codes: 0 ok, 2 bad manifest or failed
precondition, 3 resource bound exceeded, 4 no valid matching groups.
"""
from __future__ import annotations

import argparse
import json
import random
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

from . import causal, gaxioms, joinprop, ugm
from .generators import perfect_factor_relation
from .relcore import (
    ArgumentError, Relation, SchemaError, is_key, join_all, natural_join, read_csv,
    validate_foreign_key,
)

EXIT_OK, EXIT_MANIFEST, EXIT_RESOURCE, EXIT_NO_GROUPS = 0, 2, 3, 4


class ManifestError(ValueError):
    pass


@dataclass
class Project:
    root: Path
    data: dict
    schemas: dict[str, tuple[str, ...]] = field(default_factory=dict)
    keys: dict[str, list[list[str]]] = field(default_factory=dict)
    relations: dict[str, Relation] = field(default_factory=dict)
    foreign_keys: list[joinprop.ForeignKey] = field(default_factory=list)
    order: list[list[str]] = field(default_factory=list)

    def path(self, p: str) -> Path:
        q = Path(p)
        return q if q.is_absolute() else self.root / q

    def load_json(self, value: Any) -> Any:
        if isinstance(value, str):
            p = self.path(value)
            try:
                return json.loads(p.read_text(encoding="utf-8"))
            except OSError as exc:
                raise ManifestError(f"cannot read {p}: {exc.strerror}") from None
            except json.JSONDecodeError as exc:
                raise ManifestError(f"{p}: invalid JSON ({exc})") from None
        return value


def load_project(path: str) -> Project:
    p = Path(path)
    try:
        data = json.loads(p.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ManifestError(f"cannot read manifest {p}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ManifestError(f"manifest {p}: invalid JSON ({exc})") from None
    if not isinstance(data, dict):
        raise ManifestError("manifest must be a JSON object")
    proj = Project(p.parent, data)
    for spec in data.get("relations", []):
        name = spec.get("name")
        if not name:
            raise ManifestError("relation entry without a name")
        if name in proj.schemas:
            raise ManifestError(f"relation {name!r} declared twice")
        attrs = spec.get("attributes")
        if spec.get("csv_path"):
            csv_path = proj.path(spec["csv_path"])
            if not csv_path.exists():
                raise ManifestError(f"relation {name!r}: missing file {csv_path}")
            rel = read_csv(csv_path, name)
            if attrs is not None and set(attrs) != set(rel.schema):
                raise ManifestError(f"relation {name!r}: CSV header {list(rel.schema)} "
                                    f"does not match attributes {attrs}")
            proj.relations[name] = rel
            attrs = list(rel.schema)
        if not attrs:
            raise ManifestError(f"relation {name!r} has neither attributes nor csv_path")
        proj.schemas[name] = tuple(attrs)
        proj.keys[name] = [list(k) for k in spec.get("keys", [])]
    for fk in data.get("foreign_keys", []):
        try:
            src, dst, attrs = fk["from"], fk["to"], fk["attributes"]
        except KeyError as exc:
            raise ManifestError(f"foreign key entry missing {exc}") from None
        for n in (src, dst):
            if n not in proj.schemas:
                raise ManifestError(f"foreign key names unknown relation {n!r}")
        proj.foreign_keys.append(joinprop.ForeignKey(src, dst, attrs))
    proj.order = [list(p) for p in data.get("join_order", [])]
    return proj


def load_assertions(proj: Project) -> dict[str, list[gaxioms.CIStatement]]:
    files = proj.data.get("assertions", [])
    if isinstance(files, str):
        files = [files]
    out: dict[str, list[gaxioms.CIStatement]] = {n: [] for n in proj.schemas}
    for f in files:
        p = proj.path(f)
        try:
            text = p.read_text(encoding="utf-8")
        except OSError as exc:
            raise ManifestError(f"cannot read assertions {p}: {exc.strerror}") from None
        try:
            stmts = gaxioms.parse_ci_lines(text)
        except gaxioms.CIParseError as exc:
            raise ManifestError(f"{p}: {exc}") from None
        for s in stmts:
            if s.context not in proj.schemas:
                raise ManifestError(f"{p}: statement {s} names unknown relation {s.context!r}")
            out[s.context].append(s)
    return out


def bounds(args, proj: Project) -> dict[str, int]:
    b = proj.data.get("bounds", {})
    return {
        "max_universe": args.max_universe or b.get("max_universe", gaxioms.DEFAULT_MAX_UNIVERSE),
        "max_statements": args.max_closure or b.get("max_closure", gaxioms.DEFAULT_MAX_STATEMENTS),
    }


def joined_relation(proj: Project) -> Relation:
    if not proj.relations:
        raise ManifestError("this command needs relation data (csv_path)")
    if not proj.order:
        if len(proj.relations) != 1:
            raise ManifestError("several relations but no join_order")
        return next(iter(proj.relations.values()))
    names = [proj.order[0][0], proj.order[0][1]]
    for pair in proj.order[1:]:
        names += [n for n in pair if n not in names]
    missing = [n for n in names if n not in proj.relations]
    if missing:
        raise ManifestError(f"no data for relations {missing}")
    return join_all([proj.relations[n] for n in names])


# ------------------------------------------------------------ output

def emit(args, payload: Any, table: str) -> None:
    if args.format == "table":
        sys.stdout.write(table if table.endswith("\n") else table + "\n")
    else:
        sys.stdout.write(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def render_table(header: Sequence[str], rows: Sequence[Sequence[Any]]) -> str:
    cells = [list(map(str, header))] + [[str(c) for c in r] for r in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


# ----------------------------------------------------------- commands

def cmd_infer(args) -> int:
    proj = load_project(args.manifest)
    asserted = load_assertions(proj)
    rels = proj.relations if len(proj.relations) == len(proj.schemas) else None
    specs = joinprop.plan_joins(proj.order, proj.schemas, rels, proj.foreign_keys)
    used = set(n for p in proj.order for n in p) or set(proj.schemas)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", joinprop.RefutedAssertionWarning)
        result = joinprop.infer_join_cis(
            {n: proj.schemas[n] for n in used}, {n: asserted[n] for n in used}, specs,
            args.mode, relations=rels if args.audit else None,
            abort_on_refuted=args.strict, **bounds(args, proj))
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    inferred = result.report()
    report = [r.as_dict() for r in inferred]
    joined = joined_relation(proj) if args.audit and rels else None
    rows = []
    for entry, r in zip(report, inferred):
        row = [str(r.statement), ",".join(r.rule_tags)]
        if joined is not None:
            entry["audit"] = r.statement.holds_in(joined)
            row.append("pass" if entry["audit"] else "FAIL")
        rows.append(row)
    header = ["statement", "rules"] + (["audit"] if joined is not None else [])
    emit(args, report, render_table(header, rows))
    return EXIT_OK


def cmd_closure(args) -> int:
    proj = load_project(args.manifest)
    asserted = [s for v in load_assertions(proj).values() for s in v]
    universe = set().union(*map(set, proj.schemas.values())) if proj.schemas else set()
    base = gaxioms.CISet(asserted, universe)
    kw = bounds(args, proj)
    if args.goal:
        try:
            goal = gaxioms.parse_ci(args.goal)
        except gaxioms.CIParseError as exc:
            raise ManifestError(str(exc)) from None
        ok, trace = gaxioms.derivable(base, goal, args.mode, **kw)
        payload = {"goal": str(goal), "derivable": ok, "trace": trace.lines() if trace else []}
        text = f"{goal}: {'derivable' if ok else 'not derivable'}\n" + "".join(
            f"  {line}\n" for line in payload["trace"])
        emit(args, payload, text)
        return EXIT_OK
    closed = gaxioms.closure(base, args.mode, **kw)
    stmts = [str(s) for s in closed]
    emit(args, stmts, "\n".join(stmts))
    return EXIT_OK


def cmd_imap(args) -> int:
    proj = load_project(args.manifest)
    spec = proj.data.get("graphs")
    if not spec:
        raise ManifestError("manifest has no 'graphs' section")
    try:
        g1 = ugm.UndirectedGraph.from_json(proj.load_json(spec["first"]))
        g2 = ugm.UndirectedGraph.from_json(proj.load_json(spec["second"]))
        d = spec["shared"]
    except KeyError as exc:
        raise ManifestError(f"graphs section missing {exc}") from None
    r = s = None
    names = spec.get("relations")
    if names:
        r, s = proj.relations.get(names[0]), proj.relations.get(names[1])
    elif args.audit:
        rng = random.Random(args.seed)
        r = perfect_factor_relation(rng, g1, name="R")
        s = perfect_factor_relation(rng, g2, name="S")
    union = ugm.union_imap(g1, g2, d, r, s)
    payload: dict[str, Any] = {"dot": ugm.to_dot(union), "vertices": sorted(union.vertices),
                               "edges": [list(e) for e in union.sorted_edges()]}
    summary = f"union of {len(g1.vertices)}- and {len(g2.vertices)}-vertex graphs on {d}"
    if r is not None and s is not None:
        verdict = ugm.verify_map(union, natural_join(r, s), "i_map")
        payload["verdict"] = verdict.as_dict()
        summary += f"; i_map on join: {'holds' if verdict.holds else 'FAILS'} ({verdict.checked} separations)"
    emit(args, payload, payload["dot"] + "// " + summary + "\n")
    return EXIT_OK


def _analysis(proj: Project) -> dict:
    cfg = proj.data.get("analysis")
    if cfg is None:
        raise ManifestError("manifest has no 'analysis' section")
    cfg = proj.load_json(cfg)
    try:
        t = cfg["treatment"]
        spec = causal.TreatmentSpec(t["attribute"], t.get("op", "="), t["value"])
        return {"treatment": spec, "outcome": cfg["outcome"],
                "covariates": list(cfg.get("covariates", [])),
                "matching": cfg.get("matching", {"method": "exact"})}
    except KeyError as exc:
        raise ManifestError(f"analysis config missing {exc}") from None


def cmd_ate(args) -> int:
    proj = load_project(args.manifest)
    cfg = _analysis(proj)
    u = joined_relation(proj)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", causal.ZeroAteWarning)
        units = causal.build_unit_table(u, cfg["treatment"], cfg["outcome"], cfg["covariates"])
    notes = [str(w.message) for w in caught if issubclass(w.category, causal.ZeroAteWarning)]
    for n in notes:
        print(f"WARNING: {n}", file=sys.stderr)
    m = cfg["matching"]
    if m.get("method", "exact") == "cem":
        cuts = m.get("cutpoints", {})
        cats = m.get("categories", {})
        ident = [a for a in units.covariates if a not in cuts and a not in cats]
        groups = causal.cem(units, None, causal.CoarseningSpec(cuts, cats, frozenset(ident)))
    elif m.get("method", "exact") == "exact":
        groups = causal.exact_match(units)
    else:
        raise ManifestError(f"unknown matching method {m.get('method')!r}")
    report = causal.estimate_ate(groups, notes)
    payload = report.as_dict()
    rows = [[",".join(g["signature"]) or "-", g["n_treated"], g["n_control"], g["weight"], g["effect"]]
            for g in payload["groups"]]
    text = (f"ATE = {payload['ate']} ({payload['ate_float']:.6g}); matched {report.n_matched}, "
            f"dropped {report.n_dropped}\n"
            + "".join(f"WARNING: {n}\n" for n in notes)
            + render_table(["signature", "treated", "control", "weight", "effect"], rows))
    emit(args, payload, text)
    return EXIT_OK


def cmd_validate(args) -> int:
    proj = load_project(args.manifest)
    checks: list[dict] = []
    for name, keys in sorted(proj.keys.items()):
        rel = proj.relations.get(name)
        for k in keys:
            ok = None if rel is None else is_key(rel, k)
            checks.append({"check": "key", "relation": name, "attributes": sorted(k), "ok": ok})
    for fk in proj.foreign_keys:
        a, b = proj.relations.get(fk.source), proj.relations.get(fk.target)
        ok = None if a is None or b is None else validate_foreign_key(a, b, fk.attrs)
        checks.append({"check": "foreign_key", "relation": f"{fk.source}->{fk.target}",
                       "attributes": sorted(fk.attrs), "ok": ok})
    sutva = proj.data.get("sutva", [])
    if sutva:
        joined = joined_relation(proj)
        for entry in sutva:
            try:
                origin = proj.relations[entry["outcome_relation"]]
                y, key = entry["outcome"], entry["key"]
            except KeyError as exc:
                raise ManifestError(f"sutva entry: unknown or missing {exc}") from None
            rep = causal.validate_sutva_units(joined, origin, y, key)
            checks.append({"check": "sutva", "relation": entry["outcome_relation"],
                           "attributes": sorted(key), "ok": rep.ok,
                           "violations": [{"key": list(k), "rows": n} for k, n in rep.violations]})
    rows = [[c["check"], c["relation"], ",".join(c["attributes"]),
             "n/a" if c["ok"] is None else ("pass" if c["ok"] else "FAIL")] for c in checks]
    for c in checks:
        for v in c.get("violations", []):
            rows.append(["", "", "  duplicated " + ",".join(v["key"]), f"{v['rows']} rows"])
    emit(args, {"checks": checks, "ok": all(c["ok"] is not False for c in checks)},
         render_table(["check", "relation", "attributes", "result"], rows))
    return EXIT_OK


def cmd_emvd(args) -> int:
    proj = load_project(args.manifest)
    entries = proj.data.get("emvds", [])
    rels = [proj.relations[n] for n in proj.schemas if n in proj.relations]
    reduced = joinprop.semi_join_reduced(rels)
    joined = joined_relation(proj) if args.audit and len(rels) > 1 else None
    results = []
    for e in entries:
        try:
            stmt = joinprop.EmvdStatement(e["x"], e["y"], e["scope"])
            rel = proj.relations[e["relation"]]
        except KeyError as exc:
            raise ManifestError(f"emvd entry: unknown or missing {exc}") from None
        res = {"emvd": str(stmt), "relation": e["relation"], "holds": joinprop.emvd_holds(rel, stmt),
               "semi_join_reduced": reduced}
        res["propagates"] = res["holds"] and reduced
        if joined is not None:
            res["holds_in_join"] = joinprop.emvd_holds(joined, stmt)
        results.append(res)
    rows = [[r["emvd"], r["relation"], r["holds"], r["propagates"]] + ([r["holds_in_join"]] if joined else [])
            for r in results]
    header = ["emvd", "relation", "holds", "propagates"] + (["in join"] if joined else [])
    emit(args, {"semi_join_reduced": reduced, "emvds": results},
         f"semi-join reduced: {reduced}\n" + render_table(header, rows))
    return EXIT_OK


COMMANDS = {"infer": cmd_infer, "imap": cmd_imap, "ate": cmd_ate, "validate": cmd_validate,
            "closure": cmd_closure, "emvd": cmd_emvd}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--manifest", required=True, help="project manifest (JSON)")
    common.add_argument("--format", choices=("json", "table"), default="json")
    common.add_argument("--audit", action="store_true", help="attach empirical checks on the data")
    common.add_argument("--max-universe", type=int, default=None)
    common.add_argument("--max-closure", type=int, default=None)
    common.add_argument("--seed", type=int, default=0, help="seed for generated test data")
    common.add_argument("--mode", choices=gaxioms.MODES, default=gaxioms.SEMIGRAPHOID)
    parser = argparse.ArgumentParser(prog="relcausal", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("infer", parents=[common], help="CIs of the join").add_argument(
        "--strict", action="store_true", help="abort when an asserted CI fails on the data")
    sub.add_parser("closure", parents=[common], help="axiom closure of asserted CIs").add_argument(
        "--goal", help="only test derivability of this statement")
    sub.add_parser("imap", parents=[common], help="union I-map of two perfect maps")
    sub.add_parser("ate", parents=[common], help="matching estimate of the treatment effect")
    sub.add_parser("validate", parents=[common], help="key, foreign key and SUTVA checks")
    sub.add_parser("emvd", parents=[common], help="embedded multivalued dependencies")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if not hasattr(args, "strict"):
        args.strict = False
    if not hasattr(args, "goal"):
        args.goal = None
    try:
        return COMMANDS[args.command](args)
    except gaxioms.ResourceLimitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except causal.NoValidGroupsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NO_GROUPS
    except (ManifestError, SchemaError, ArgumentError, ugm.PreconditionError,
            joinprop.RefutedAssertionError, causal.OutcomeParseError, causal.BinningError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MANIFEST


if __name__ == "__main__":
    sys.exit(main())
