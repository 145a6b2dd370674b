"""Evidence aggregation: observations, executor status, memory, and workflow
fold into evidence packets on a fixed cadence.

Asynchrony is modeled as a deterministic cadence (default: every 2 ticks);
the planner acts only on emitted packets, so it can be working from stale
evidence between emissions exactly like a planner behind a real monitor.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .contracts import ClauseMatch, StageContract, Workflow, evaluate_clauses
from .executors import ExecutorRegistry
from .memory import MemoryState
from .world import Anchor, Observation, WorldState, geodesic_distance

DEFAULT_CADENCE = 2
CONTRADICTION_STREAK = 3
FITNESS_TRANSFER_THRESHOLD = 0.5


@dataclass(frozen=True)
class Discovery:
    """A live anchor that fully satisfies a downstream handoff clause; the
    stage index names the stage that boundary unlocks."""

    stage: int
    match: ClauseMatch

    def to_json(self) -> dict:
        return {"stage": self.stage, "match": self.match.to_json()}

    @staticmethod
    def from_json(data: dict) -> "Discovery":
        return Discovery(data["stage"], ClauseMatch.from_json(data["match"]))


@dataclass(frozen=True)
class ContradictionCue:
    stage: int
    assumption: str
    conflicting: str
    streak: int

    def to_json(self) -> dict:
        return {
            "stage": self.stage,
            "assumption": self.assumption,
            "conflicting": self.conflicting,
            "streak": self.streak,
        }

    @staticmethod
    def from_json(data: dict) -> "ContradictionCue":
        return ContradictionCue(data["stage"], data["assumption"], data["conflicting"], data["streak"])


@dataclass(frozen=True)
class EvidencePacket:
    tick: int
    pose_node: str
    pose_heading: str
    blocked: bool
    a: tuple[Anchor, ...]
    goal_distance_delta: float
    executor_progress: float
    blocked_streak: int
    d: tuple[Discovery, ...]
    u: tuple[ContradictionCue, ...]
    q: float
    scene_tags: tuple[str, ...]
    degraded: dict[str, tuple[str, ...]]

    def to_json(self) -> dict:
        return {
            "tick": self.tick,
            "pose_node": self.pose_node,
            "pose_heading": self.pose_heading,
            "blocked": self.blocked,
            "a": [
                {"label": x.label, "kind": x.kind, "confidence": x.confidence, "node": x.node}
                for x in self.a
            ],
            "goal_distance_delta": self.goal_distance_delta,
            "executor_progress": self.executor_progress,
            "blocked_streak": self.blocked_streak,
            "d": [x.to_json() for x in self.d],
            "u": [x.to_json() for x in self.u],
            "q": self.q,
            "scene_tags": list(self.scene_tags),
            "degraded": {k: list(v) for k, v in sorted(self.degraded.items())},
        }

    @staticmethod
    def from_json(data: dict) -> "EvidencePacket":
        return EvidencePacket(
            tick=data["tick"],
            pose_node=data["pose_node"],
            pose_heading=data["pose_heading"],
            blocked=data["blocked"],
            a=tuple(
                Anchor(x["label"], x["kind"], x["confidence"], x["node"]) for x in data["a"]
            ),
            goal_distance_delta=data["goal_distance_delta"],
            executor_progress=data["executor_progress"],
            blocked_streak=data["blocked_streak"],
            d=tuple(Discovery.from_json(x) for x in data["d"]),
            u=tuple(ContradictionCue.from_json(x) for x in data["u"]),
            q=data["q"],
            scene_tags=tuple(data["scene_tags"]),
            degraded={k: tuple(v) for k, v in data["degraded"].items()},
        )


def scene_tags(world: WorldState, visible, goal_region: str) -> tuple[str, ...]:
    """Context tags of visible region anchors plus the active goal region."""
    tags: set[str] = set(world.tags_for_region(goal_region))
    for anchor in visible:
        if anchor.kind in ("room", "pose-region"):
            tags.update(world.tags_for_region(world.region_of(anchor.node)))
    return tuple(sorted(tags))


def fitness_from_tags(profile_tags: frozenset[str], scene: tuple[str, ...]) -> float:
    """Set-overlap ratio between executor context tags and scene tags."""
    scene_set = set(scene)
    union = profile_tags | scene_set
    if not union:
        return 1.0
    return len(profile_tags & scene_set) / len(union)


def estimate_fitness(
    profile_tags: frozenset[str],
    contract: StageContract,
    obs: Observation,
    world: WorldState,
) -> float:
    return fitness_from_tags(profile_tags, scene_tags(world, obs.visible, contract.goal.region))


def boundary_discoveries(workflow: Workflow, anchors, now: int) -> tuple[Discovery, ...]:
    """Scan every handoff boundary at or beyond the frontier for live anchors
    that fully satisfy its clauses. A match of boundary i is tagged with the
    stage it unlocks (i + 1), so every discovery cites a stage > frontier."""
    found: list[Discovery] = []
    for i in range(workflow.frontier, len(workflow.contracts)):
        report = evaluate_clauses(workflow.contracts[i].handoff, anchors, [], now)
        for match in report.matched:
            if match.provenance == "live":
                found.append(Discovery(stage=i + 1, match=match))
    return tuple(found)


def trailing_streaks(history: list, workflow: Workflow) -> dict[int, tuple[str, int]]:
    """Trailing consecutive-emission streak of contradiction sightings per
    stage, computed from a history of anchor snapshots (oldest first)."""
    streaks: dict[int, tuple[str, int]] = {}
    for j in range(workflow.frontier, len(workflow.contracts)):
        labels = workflow.contracts[j].contradicts
        if not labels:
            continue
        streak = 0
        latest = ""
        for anchors in reversed(history):
            seen = sorted({a.label for a in anchors if a.label in labels})
            if not seen:
                break
            streak += 1
            if not latest:
                latest = seen[0]
        if streak:
            streaks[j] = (latest, streak)
    return streaks


def detect_contradiction(history: list, workflow: Workflow) -> tuple[ContradictionCue, ...]:
    """Cues for stages whose excluded anchor classes have been visible for at
    least CONTRADICTION_STREAK consecutive monitor emissions."""
    cues = []
    for stage, (label, streak) in sorted(trailing_streaks(history, workflow).items()):
        if streak >= CONTRADICTION_STREAK:
            cues.append(
                ContradictionCue(
                    stage=stage,
                    assumption=workflow.contracts[stage].goal.target,
                    conflicting=label,
                    streak=streak,
                )
            )
    return tuple(cues)


@dataclass
class Monitor:
    """Per-episode monitor: cadence bookkeeping plus streak state."""

    world: WorldState
    registry: ExecutorRegistry
    cadence: int = DEFAULT_CADENCE
    anchor_history: list = field(default_factory=list)
    _last_goal_distance: float | None = None
    _last_frontier: int = -1

    def is_monitor_tick(self, tick: int) -> bool:
        return tick % self.cadence == 0

    def aggregate(
        self,
        obs: Observation,
        status,
        mem: MemoryState,
        workflow: Workflow,
        tick: int,
        blocked_streak: int = 0,
    ) -> EvidencePacket:
        active = workflow.active()
        self.anchor_history.append(obs.visible)

        goal_nodes = self.world.region_nodes(active.goal.region)
        dist = min(
            (geodesic_distance(self.world, obs.pose.node, n) for n in goal_nodes),
            default=0.0,
        )
        if self._last_frontier != workflow.frontier or self._last_goal_distance is None:
            delta = 0.0
        else:
            delta = self._last_goal_distance - dist
        self._last_goal_distance = dist
        self._last_frontier = workflow.frontier

        tags = scene_tags(self.world, obs.visible, active.goal.region)
        kind = self.registry.current.kind if self.registry.current else ""
        if kind:
            q = fitness_from_tags(self.registry.effective_tags(kind), tags)
        else:
            q = 1.0

        return EvidencePacket(
            tick=tick,
            pose_node=obs.pose.node,
            pose_heading=obs.pose.heading,
            blocked=obs.blocked,
            a=obs.visible,
            goal_distance_delta=delta,
            executor_progress=status.progress,
            blocked_streak=blocked_streak,
            d=boundary_discoveries(workflow, obs.visible, tick),
            u=detect_contradiction(self.anchor_history, workflow),
            q=q,
            scene_tags=tags,
            degraded={k: tuple(v) for k, v in sorted(self.registry.degraded_tags.items())},
        )
