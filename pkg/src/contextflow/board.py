"""The visible alignment board: one record per planner consultation.

A trace is line-delimited JSON with a schema-versioned header, one record
line per consultation, and a terminal line carrying episode totals. Records
capture everything the planner saw and decided, so the auditor can re-run
classification and selection offline and flag any drift, plus structural
violations: ungated promotion, goal-changing transfers, prefix-touching
repairs, and memory matches without a live witness.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .alignment import (
    ACT_CONTINUE,
    ACT_PROMOTE,
    ACT_REPAIR,
    ACT_TRANSFER,
    ConsultResult,
    ScopedUpdate,
    classify_misalignment,
    select_update,
)
from .contracts import EvidenceClause, StageGoal, StageTemplate, Workflow
from .errors import SchemaMismatch
from .executors import StatusReport
from .memory import MemoryEntry
from .monitor import EvidencePacket

SCHEMA = "cftrace/1"


def template_to_json(t: StageTemplate) -> dict:
    return {
        "name": t.name,
        "goal": t.goal.to_json(),
        "handoff": [c.to_json() for c in t.handoff],
        "expected": [c.to_json() for c in t.expected],
        "compatible": list(t.compatible),
        "contradicts": list(t.contradicts),
        "alternates": [template_to_json(a) for a in t.alternates],
    }


def template_from_json(data: dict) -> StageTemplate:
    return StageTemplate(
        name=data["name"],
        goal=StageGoal.from_json(data["goal"]),
        handoff=tuple(EvidenceClause.from_json(c) for c in data["handoff"]),
        expected=tuple(EvidenceClause.from_json(c) for c in data["expected"]),
        compatible=tuple(data["compatible"]),
        contradicts=tuple(data["contradicts"]),
        alternates=tuple(template_from_json(a) for a in data["alternates"]),
    )


@dataclass
class BoardRecord:
    index: int
    tick: int
    instruction: str
    active_stage: dict
    expected_evidence: dict
    memory_context: list
    live_evidence: dict
    executor_status: dict
    alignment_factors: dict
    selected_update: dict
    plan_diff: dict
    workflow: dict

    def to_json(self) -> dict:
        return {
            "index": self.index,
            "tick": self.tick,
            "instruction": self.instruction,
            "active_stage": self.active_stage,
            "expected_evidence": self.expected_evidence,
            "memory_context": self.memory_context,
            "live_evidence": self.live_evidence,
            "executor_status": self.executor_status,
            "alignment_factors": self.alignment_factors,
            "selected_update": self.selected_update,
            "plan_diff": self.plan_diff,
            "workflow": self.workflow,
        }

    @staticmethod
    def from_json(data: dict) -> "BoardRecord":
        return BoardRecord(**data)


@dataclass
class Trace:
    header: dict
    records: list[BoardRecord] = field(default_factory=list)
    terminal: dict | None = None


def make_header(scenario_id: str, variant: str, seed: int, budget: int, cadence: int, templates) -> dict:
    return {
        "schema": SCHEMA,
        "scenario": scenario_id,
        "variant": variant,
        "seed": seed,
        "budget": budget,
        "cadence": cadence,
        "templates": [template_to_json(t) for t in templates],
    }


def emit_record(
    trace: Trace,
    tick: int,
    instruction: str,
    workflow_before: dict,
    result: ConsultResult,
    packet: EvidencePacket,
    executor_kind: str,
    executor_ident: str,
    status: StatusReport,
) -> BoardRecord:
    """Append one consultation to the trace (append-only)."""
    contracts = workflow_before["contracts"]
    frontier = workflow_before["frontier"]
    active = contracts[frontier]
    record = BoardRecord(
        index=len(trace.records),
        tick=tick,
        instruction=instruction,
        active_stage={"index": frontier, "name": active["name"], "goal": active["goal"]},
        expected_evidence={"handoff": active["handoff"], "expected": active["expected"]},
        memory_context=[e.to_json() for e in result.memory_context],
        live_evidence=packet.to_json(),
        executor_status={
            "kind": executor_kind,
            "ident": executor_ident,
            "report": status.to_json(),
        },
        alignment_factors={
            "case": result.case.to_json(),
            "q": packet.q,
            "active_report": result.active_report.to_json(),
            "boundary_reports": {
                str(i): r.to_json() for i, r in sorted(result.reports.items())
            },
            "retry_count": result.retry_count,
        },
        selected_update=result.update.to_json(),
        plan_diff=result.diff.to_json(),
        workflow=workflow_before,
    )
    trace.records.append(record)
    return record


def serialize_trace(trace: Trace) -> str:
    lines = [json.dumps(trace.header, sort_keys=True, separators=(",", ":"))]
    for record in trace.records:
        lines.append(
            json.dumps({"record": record.to_json()}, sort_keys=True, separators=(",", ":"))
        )
    if trace.terminal is not None:
        lines.append(
            json.dumps({"terminal": trace.terminal}, sort_keys=True, separators=(",", ":"))
        )
    return "\n".join(lines) + "\n"


def parse_trace(text: str) -> Trace:
    lines = [line for line in text.splitlines() if line.strip()]
    if not lines:
        raise SchemaMismatch("empty trace")
    header = json.loads(lines[0])
    if header.get("schema") != SCHEMA:
        raise SchemaMismatch(f"unknown schema {header.get('schema')!r}")
    trace = Trace(header=header)
    for line in lines[1:]:
        data = json.loads(line)
        if "record" in data:
            trace.records.append(BoardRecord.from_json(data["record"]))
        elif "terminal" in data:
            trace.terminal = data["terminal"]
        else:
            raise SchemaMismatch(f"unrecognized trace line: {line[:60]}")
    return trace


def load_trace(path) -> Trace:
    from pathlib import Path

    return parse_trace(Path(path).read_text(encoding="utf-8"))


# -- update labels -----------------------------------------------------------


def update_label(record: BoardRecord) -> str:
    """Display name for a record's update: the first consultation's Continue
    reads `initialize/continue`; a Promote past the last stage reads
    `complete`; everything else is the action name."""
    action = record.selected_update["action"]
    if action == ACT_CONTINUE and record.index == 0:
        return "initialize/continue"
    if action == ACT_PROMOTE:
        stage_count = len(record.workflow["contracts"])
        if record.selected_update["payload"]["target"] >= stage_count:
            return "complete"
    return action


def update_sequence(trace: Trace) -> list[str]:
    return [update_label(r) for r in trace.records]


# -- renderer ----------------------------------------------------------------

_COLUMNS = (
    ("tick", 5),
    ("instruction", 12),
    ("stage", 18),
    ("expected", 28),
    ("memory", 20),
    ("live", 28),
    ("executor", 22),
    ("factors", 26),
    ("update", 20),
    ("diff", 22),
)


def _fit(text: str, width: int) -> str:
    if len(text) <= width:
        return text.ljust(width)
    return text[: width - 1] + "~"


def _clause_digest(clauses: list) -> str:
    return ";".join(f"{c['kind']}:{c['label']}>={c['min_confidence']:g}" for c in clauses)


def render_trace(trace: Trace) -> str:
    """One row per record, stable column widths, deterministic output."""
    header_cells = [_fit(name, width) for name, width in _COLUMNS]
    lines = [
        f"alignment board: scenario={trace.header['scenario']} "
        f"variant={trace.header['variant']} seed={trace.header['seed']}",
        " | ".join(header_cells),
        "-+-".join("-" * width for _, width in _COLUMNS),
    ]
    for record in trace.records:
        live = ",".join(
            f"{a['label']}:{a['confidence']:.2f}" for a in record.live_evidence["a"]
        )
        mem = ",".join(
            f"{e['kind']}:{e.get('tag') or (e['anchor'] or {}).get('label', '')}"
            for e in record.memory_context[:4]
        )
        factors = (
            f"{record.alignment_factors['case']['case']}"
            f" q={record.alignment_factors['q']:.2f}"
            f" sat={record.alignment_factors['active_report']['satisfied']}"
        )
        update = update_label(record)
        payload = record.selected_update["payload"]
        if payload:
            compact = ",".join(f"{k}={payload[k]}" for k in sorted(payload) if k != "regenerated")
            update = f"{update}({compact})" if compact else update
        diff = record.plan_diff
        diff_text = (
            "empty"
            if not diff["changed"]
            else f"changes={len(diff['changed'])} root={diff['repair_root']}"
        )
        cells = [
            _fit(str(record.tick), _COLUMNS[0][1]),
            _fit(record.instruction, _COLUMNS[1][1]),
            _fit(
                f"{record.active_stage['index']}:{record.active_stage['name']}",
                _COLUMNS[2][1],
            ),
            _fit(_clause_digest(record.expected_evidence["handoff"]), _COLUMNS[3][1]),
            _fit(mem, _COLUMNS[4][1]),
            _fit(live, _COLUMNS[5][1]),
            _fit(
                f"{record.executor_status['kind']}:{record.executor_status['report']['state']}",
                _COLUMNS[6][1],
            ),
            _fit(factors, _COLUMNS[7][1]),
            _fit(update, _COLUMNS[8][1]),
            _fit(diff_text, _COLUMNS[9][1]),
        ]
        lines.append(" | ".join(cells))
    if trace.terminal:
        term = trace.terminal
        lines.append(
            f"terminal: reason={term['reason']} tick={term['tick']} node={term['node']} "
            f"frontier={term['frontier']} stopped={term['stopped']}"
        )
    return "\n".join(lines) + "\n"


# -- auditor -----------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    record_index: int
    check: str
    message: str


def audit_trace(trace: Trace) -> list[Violation]:
    """Structural and replay checks over a parsed trace; empty for a
    compliant one."""
    violations: list[Violation] = []
    templates = [template_from_json(t) for t in trace.header["templates"]]
    variant = trace.header["variant"]
    for record in trace.records:
        violations.extend(_audit_promote_gating(record))
        violations.extend(_audit_transfer(record))
        violations.extend(_audit_repair_scope(record))
        violations.extend(_audit_handoff_blocking(record))
        violations.extend(_audit_memory_witness(record))
        violations.extend(_audit_replay(record, templates, variant))
    return violations


def _audit_promote_gating(record: BoardRecord) -> list[Violation]:
    if record.selected_update["action"] != ACT_PROMOTE:
        return []
    out = []
    frontier = record.workflow["frontier"]
    target = record.selected_update["payload"]["target"]
    reports = record.alignment_factors["boundary_reports"]
    for i in range(frontier, target):
        report = reports.get(str(i))
        if report is None or not report["satisfied"]:
            out.append(
                Violation(
                    record.index,
                    "promote-gating",
                    f"boundary {i} crossed without satisfied handoff",
                )
            )
    return out


def _audit_transfer(record: BoardRecord) -> list[Violation]:
    if record.selected_update["action"] != ACT_TRANSFER:
        return []
    if record.plan_diff["changed"]:
        return [
            Violation(
                record.index,
                "transfer-preservation",
                "transfer changed contract fields",
            )
        ]
    return []


def _audit_repair_scope(record: BoardRecord) -> list[Violation]:
    if record.selected_update["action"] != ACT_REPAIR:
        return []
    out = []
    root = record.selected_update["payload"]["root"]
    validated = {"done", "done-evidence-promoted"}
    for change in record.plan_diff["changed"]:
        if change["index"] < root:
            out.append(
                Violation(
                    record.index,
                    "repair-prefix-preservation",
                    f"change at index {change['index']} below root {root}",
                )
            )
    contracts = record.workflow["contracts"]
    changed_indices = {c["index"] for c in record.plan_diff["changed"]}
    for idx in sorted(changed_indices):
        if idx < len(contracts) and contracts[idx]["status"] in validated:
            out.append(
                Violation(
                    record.index,
                    "repair-prefix-preservation",
                    f"repair revised validated stage {idx}",
                )
            )
    return out


def _audit_handoff_blocking(record: BoardRecord) -> list[Violation]:
    state = record.executor_status["report"]["state"]
    satisfied = record.alignment_factors["active_report"]["satisfied"]
    action = record.selected_update["action"]
    if state == "done" and not satisfied and action == ACT_PROMOTE:
        return [
            Violation(
                record.index,
                "unsupported-handoff-blocking",
                "promoted while executor done and handoff unsatisfied",
            )
        ]
    return []


def _audit_memory_witness(record: BoardRecord) -> list[Violation]:
    out = []
    live_labels = {a["label"] for a in record.live_evidence["a"]}
    reports = [record.alignment_factors["active_report"]] + list(
        record.alignment_factors["boundary_reports"].values()
    )
    for report in reports:
        for match in report["matched"]:
            if match["provenance"] != "memory-corroborated":
                continue
            witness = match.get("witness_label")
            if witness is None or witness not in live_labels:
                out.append(
                    Violation(
                        record.index,
                        "memory-witness",
                        f"memory match {match['anchor_label']!r} lacks live witness",
                    )
                )
    return out


def _audit_replay(record: BoardRecord, templates, variant: str) -> list[Violation]:
    workflow = Workflow.from_json(record.workflow)
    packet = EvidencePacket.from_json(record.live_evidence)
    status = StatusReport.from_json(record.executor_status["report"])
    memory_entries = [MemoryEntry.from_json(e) for e in record.memory_context]
    retry_count = record.alignment_factors["retry_count"]
    case, active_report, reports = classify_misalignment(
        workflow.active(), packet, memory_entries, status, workflow
    )
    update = select_update(
        case, workflow, packet, status, active_report, reports, retry_count, templates, variant
    )
    recorded = ScopedUpdate.from_json(record.selected_update)
    out = []
    if case.to_json() != record.alignment_factors["case"]:
        out.append(
            Violation(
                record.index,
                "decision-replay",
                f"case drift: {case.case} != {record.alignment_factors['case']['case']}",
            )
        )
    if update != recorded:
        out.append(
            Violation(
                record.index,
                "decision-replay",
                f"update drift: {update.action} != {recorded.action}",
            )
        )
    return out
