"""The reconciliation core: one logical loop that owns all run state.

Events (state changes, timers, fired metric rules, tag notifications) are
consumed in (timestamp, sequence) order from a single queue. Each event
starts a reconciliation cycle that re-checks dependencies, dispatches
newly satisfied actions in document order, evaluates assertions, and
decides the run outcome. Executors affect the run only through the events
they emit, and the engine affects executors only through commands, so a
simulated run is a deterministic function of (document, seed).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import yaml

from .dsl import (
    ENGINE_DEFAULT_TIMEOUT,
    ActionSpec,
    ScenarioDoc,
    build_tree,
    effective_timeout,
    expand_targets,
    instantiate_template,
    validate,
)
from .errors import (
    InvalidScenario,
    IllegalTransition,
    SchemaError,
    SpawnError,
    TargetNotRunning,
    UnknownCheckpoint,
    UnknownHandle,
    UnknownMetric,
    UnsupportedFault,
    WhatifError,
)
from .events import Event, EventKind, EventQueue, SimClock, WallClock
from .executors.base import Executor, FaultSpec, JobSpec, parse_fault_body, parse_job_body
from .expressions import (
    MetricsExprAst,
    eval_metrics,
    eval_state,
    parse_expression,
    snapshot_scope,
)
from .lifecycle import (
    ChaosTag,
    FailureClass,
    Phase,
    ResourceNode,
    advance_to,
    aggregate_phase,
    classify_failure,
    find_node,
    iter_nodes,
    revoke_chaos_tag,
    tag_chaos_target,
)
from .telemetry import AnnotationLog, CheckpointRegistry, MetricsStore
from .trace import RunTrace

logger = logging.getLogger(__name__)

GUARD_SLACK = 60.0


class Outcome(Enum):
    SUCCESS = "Success"
    FAILED = "Failed"
    ABORTED = "Aborted"

    def __str__(self) -> str:
        return self.value


@dataclass
class ReconcileCommand:
    verb: str  # CreateJob | KillJob | InjectFault | RevokeFault | Snapshot | Annotate | Transition | AbortRun
    target: str
    args: dict = field(default_factory=dict)


@dataclass
class RunResult:
    outcome: Outcome
    reason: str
    trace: RunTrace
    store: MetricsStore = field(default_factory=MetricsStore, compare=False)
    checkpoints: CheckpointRegistry = field(default_factory=CheckpointRegistry, compare=False)
    annotations: AnnotationLog = field(default_factory=AnnotationLog, compare=False)


def ready_since(clause, tree: ResourceNode) -> Optional[float]:
    """When the running/success parts of a clause became satisfied; None if not.

    A `running` target satisfies once it reached Running and has not failed;
    completing successfully keeps it satisfied so a fast job cannot deadlock
    its dependents.
    """
    base = 0.0
    for name in clause.running:
        node = find_node(tree, name)
        if node is None or node.phase not in (Phase.RUNNING, Phase.SUCCESS):
            return None
        at = node.phase_times.get(Phase.RUNNING)
        if at is None:
            at = node.phase_times.get(node.phase, 0.0)
        base = max(base, at)
    for name in clause.success:
        node = find_node(tree, name)
        if node is None or node.phase != Phase.SUCCESS:
            return None
        base = max(base, node.phase_times.get(Phase.SUCCESS, 0.0))
    return base


def dependency_satisfied(clause, tree: ResourceNode, clock) -> bool:
    """True when every referenced state holds and any `after` delay elapsed."""
    base = ready_since(clause, tree)
    if base is None:
        return False
    if clause.after is not None:
        return clock.now() + 1e-9 >= base + clause.after
    return True


class Engine:
    """Runs one scenario to completion over a bound executor."""

    def __init__(
        self,
        doc: ScenarioDoc,
        templates: Optional[dict] = None,
        executor: Optional[Executor] = None,
        clock=None,
        seed: int = 0,
        tick_interval: float = 1.0,
        default_timeout: float = ENGINE_DEFAULT_TIMEOUT,
    ):
        self.doc = doc
        self.templates = templates or {}
        report = validate(doc, self.templates, default_timeout)
        if not report.ok:
            raise InvalidScenario(report)

        if executor is None:
            from .executors.sim import SimExecutor

            executor = SimExecutor()
        self.executor = executor
        self.clock = clock if clock is not None else (SimClock() if executor.name == "sim" else WallClock())
        self.seed = seed
        self.tick_interval = tick_interval
        self.default_timeout = default_timeout

        self.queue = EventQueue()
        self.trace = RunTrace()
        self.store = MetricsStore()
        self.checkpoints = CheckpointRegistry()
        self.annotations = AnnotationLog()
        self.executor.bind(self.queue, self.clock, self.store)

        self.tree = build_tree(doc)
        self.nodes = {node.name: node for node in iter_nodes(self.tree)}
        self.actions = {action.name: action for action in doc.actions}
        self.asserts = {
            action.name: [(text, parse_expression(text)) for text in action.assertions]
            for action in doc.actions
            if action.assertions
        }
        self.checkpoint_exprs = {
            action.name: [(key, parse_expression(text)) for key, text in action.values.items()]
            for action in doc.actions
            if action.kind == "Checkpoint"
        }

        self.dispatched: set = set()
        self.after_armed: set = set()
        self.kill_watch: dict[str, list] = {}  # chaos action -> kill targets
        self.active_faults: dict[str, str] = {}  # chaos action -> executor handle
        self.finished = False
        self.outcome = Outcome.SUCCESS
        self.reason = ""
        self._tick_armed = False

    # --- public surface ---------------------------------------------------

    def run(self) -> RunResult:
        now = self.clock.now()
        self.trace.append(
            "run", now,
            scenario=self.doc.name, seed=self.seed,
            executor=self.executor.name, tick=self.tick_interval,
            actions=[{"name": a.name, "kind": a.kind} for a in self.doc.actions],
            assertions={name: [t for t, _ in pairs] for name, pairs in self.asserts.items()},
        )
        for phase in advance_to(self.tree, Phase.RUNNING, now):
            self._trace_transition(self.tree, phase)
        guard = sum(effective_timeout(a, self.doc, self.default_timeout) for a in self.doc.actions)
        self.queue.push(now + guard + GUARD_SLACK, Event(EventKind.TIME, now + guard + GUARD_SLACK, timer_id="guard"))

        commands: list[ReconcileCommand] = []
        self._recheck_dispatch(commands)
        self._maybe_arm_tick()
        self._check_completion()

        while not self.finished:
            popped = self.queue.pop_next() if self.clock.virtual else self.queue.wait_next(self.clock)
            if popped is None:
                self._abort("timeout: no pending events but actions remain unfinished")
                break
            at, item = popped
            self.clock.set(at)
            if isinstance(item, Event):
                self.trace.append("event", at, **item.describe())
                self.reconcile(item)
            else:
                item()  # scheduled executor/timer work; may emit events

        self._finalize()
        return RunResult(
            self.outcome, self.reason, self.trace,
            store=self.store, checkpoints=self.checkpoints, annotations=self.annotations,
        )

    def reconcile(self, event: Event) -> list[ReconcileCommand]:
        """One reconciliation cycle; returns the commands it issued."""
        commands: list[ReconcileCommand] = []
        if self.finished:
            return commands
        try:
            if event.kind == EventKind.STATE:
                self._on_state(event, commands)
            elif event.kind == EventKind.TIME:
                self._on_time(event, commands)
            elif event.kind == EventKind.METRICS:
                self._on_metrics(event, commands)
            elif event.kind == EventKind.TAG:
                self._on_tag(event, commands)
            if not self.finished:
                self._recheck_dispatch(commands)
                self._maybe_arm_tick()
                self._check_completion()
        except IllegalTransition as exc:
            self._abort(f"illegal transition: {exc}", commands)
        return commands

    def fire_tag_event(self, source: str, payload: dict) -> Event:
        """Enqueue a Tag event carrying contextual data between controllers."""
        tags = dict(payload)
        event = Event(EventKind.TAG, self.clock.now(), subject=tags.get("target", ""), tags=tags)
        if source:
            event.tags.setdefault("source", source)
        self.queue.push_event(event)
        return event

    # --- event handlers -----------------------------------------------------

    def _on_state(self, event: Event, commands: list) -> None:
        node = self.nodes.get(event.subject)
        if node is None:
            logger.warning("state event for unknown resource %s", event.subject)
            return
        if node.phase.terminal or event.phase is None:
            return
        now = event.at

        if event.phase == Phase.FAILED:
            node.failure_class = event.failure_class or classify_failure(node, event.failure_mode)
            node.failure_reason = event.reason or event.failure_mode or "failed"
        for phase in advance_to(node, event.phase, now):
            self._trace_transition(node, phase, commands)

        newly_terminal = [node] if node.phase.terminal else []
        owner = node.owner
        if owner is not None and owner.kind == "cluster" and not owner.phase.terminal:
            agg = aggregate_phase([(c.phase, c.failure_class) for c in owner.children], owner.tolerated)
            if _order(agg) > _order(owner.phase):
                for phase in advance_to(owner, agg, now):
                    self._trace_transition(owner, phase, commands)
                if owner.phase.terminal:
                    newly_terminal.append(owner)

        for done in newly_terminal:
            self._on_terminal(done, now, commands)
            if self.finished:
                return

        self._watch_kill_faults(event.subject, now, commands)
        if not self.finished:
            self._evaluate_assertions(now, commands, state=True, metrics=False)

    def _on_terminal(self, node: ResourceNode, now: float, commands: list) -> None:
        if node.name in self.actions:
            action = self.actions[node.name]
            if action.kind in ("Call", "Chaos") and node.name in self.annotations.open_labels():
                self._close_region(node.name, now, commands)
        if node.phase == Phase.FAILED:
            if node.failure_class == FailureClass.UNEXPECTED:
                self._fail(f"{node.name}: {node.failure_reason or 'unexpected failure'}", commands)
                return
            # Expected failure: culpable only when it pushed its owner over
            # tolerance, or when it sits at scenario level (tolerance 0).
            owner = node.owner
            if owner is not None and owner.kind == "cluster":
                if owner.phase == Phase.FAILED:
                    self._fail(f"{node.name}: expected failure beyond cluster tolerance", commands)
                return
            if owner is self.tree or (owner is not None and owner.kind == "scenario"):
                self._fail(f"{node.name}: {node.failure_reason or 'failure'} at scenario level", commands)
            return
        if node.phase == Phase.SUCCESS and node.name in self.asserts:
            self._evaluate_action_assertions(node.name, now, commands, state=True, metrics=True)

    def _on_time(self, event: Event, commands: list) -> None:
        timer = event.timer_id
        now = event.at
        if timer == "guard":
            self._abort("timeout: run exceeded its total timeout budget", commands)
        elif timer.startswith("timeout:"):
            name = timer.split(":", 1)[1]
            node = self.nodes.get(name)
            if node is not None and not node.phase.terminal:
                self._abort(f"timeout: action {name} did not finish in time", commands)
        elif timer == "tick":
            self._tick_armed = False
            self._evaluate_assertions(now, commands, state=True, metrics=True)
        # "after:" timers only need the dispatch recheck that follows.

    def _on_metrics(self, event: Event, commands: list) -> None:
        if event.fired:
            self._fail(f"{event.subject}: assertion fired: {event.expr_id}", commands)

    def _on_tag(self, event: Event, commands: list) -> None:
        tags = event.tags
        if tags.get("event") == "fault-revoked":
            action = tags.get("action", "")
            self.active_faults.pop(action, None)
            for target in [t for t in tags.get("targets", "").split(",") if t]:
                if find_node(self.tree, target) is not None:
                    revoke_chaos_tag(self.tree, target)
            node = self.nodes.get(action)
            if node is not None and not node.phase.terminal:
                if action in self.annotations.open_labels():
                    self._close_region(action, event.at, commands)
                for phase in advance_to(node, Phase.SUCCESS, event.at):
                    self._trace_transition(node, phase, commands)
                self._on_terminal(node, event.at, commands)
            return
        if event.subject and event.subject not in self.nodes:
            logger.warning("tag event for unknown target %s", event.subject)

    # --- dispatch -------------------------------------------------------------

    def _recheck_dispatch(self, commands: list) -> None:
        progress = True
        while progress and not self.finished:
            progress = False
            for action in self.doc.actions:
                if action.name in self.dispatched:
                    continue
                clause = action.depends
                if not dependency_satisfied(clause, self.tree, self.clock):
                    self._maybe_arm_after(action, clause)
                    continue
                self.dispatched.add(action.name)
                self._dispatch(action, commands)
                progress = True
                if self.finished:
                    return

    def _maybe_arm_after(self, action: ActionSpec, clause) -> None:
        if clause.after is None or action.name in self.after_armed:
            return
        base = ready_since(clause, self.tree)
        if base is None:
            return
        self.after_armed.add(action.name)
        due = base + clause.after
        self.queue.push(due, Event(EventKind.TIME, due, timer_id=f"after:{action.name}"))

    def _dispatch(self, action: ActionSpec, commands: list) -> None:
        now = self.clock.now()
        timeout = effective_timeout(action, self.doc, self.default_timeout)
        due = now + timeout
        self.queue.push(due, Event(EventKind.TIME, due, timer_id=f"timeout:{action.name}"))
        try:
            if action.kind == "Service":
                self._dispatch_service(action, now, commands)
            elif action.kind == "Cluster":
                self._dispatch_cluster(action, now, commands)
            elif action.kind == "Call":
                self._dispatch_call(action, now, commands)
            elif action.kind == "Chaos":
                self._dispatch_chaos(action, now, commands)
            elif action.kind == "Checkpoint":
                self._dispatch_checkpoint(action, now, commands)
        except (SchemaError, WhatifError) as exc:
            self._fail(f"{action.name}: {exc}", commands)

    def _dispatch_service(self, action: ActionSpec, now: float, commands: list) -> None:
        spec = self._resolve_job(action, action.inputs[0] if action.inputs else {}).named(action.name)
        self._create_job(spec, now, commands)
        self.annotations.point(action.name, now)
        self._trace_annotation("point", action.name, now, commands)

    def _dispatch_cluster(self, action: ActionSpec, now: float, commands: list) -> None:
        node = self.nodes[action.name]
        for phase in advance_to(node, Phase.PENDING, now):
            self._trace_transition(node, phase, commands)
        for index, child in enumerate(node.children):
            inputs = action.inputs[index % len(action.inputs)] if action.inputs else {}
            spec = self._resolve_job(action, inputs).named(child.name)
            self._create_job(spec, now, commands)
            self.annotations.point(child.name, now)
            self._trace_annotation("point", child.name, now, commands)

    def _dispatch_call(self, action: ActionSpec, now: float, commands: list) -> None:
        spec = self._resolve_job(action, action.inputs[0] if action.inputs else {}).named(action.name)
        self._create_job(spec, now, commands)
        self.annotations.open_region(action.name, now)
        self._trace_annotation("open", action.name, now, commands)

    def _dispatch_chaos(self, action: ActionSpec, now: float, commands: list) -> None:
        spec = self._resolve_fault(action)
        node = self.nodes[action.name]
        for phase in advance_to(node, Phase.PENDING, now):
            self._trace_transition(node, phase, commands)
        tag = ChaosTag(spec.kind, action.name)
        for target in spec.targets:
            tag_chaos_target(self.tree, target, tag)
            self.trace.append(
                "event", now, event="Tag", subject=target,
                tags={ChaosTag.key: spec.kind, "target": target, "source": action.name},
            )
        command = ReconcileCommand("InjectFault", action.name, {
            "kind": spec.kind, "targets": list(spec.targets), "dst": list(spec.dst),
            "direction": spec.direction, "duration": spec.duration,
        })
        commands.append(command)
        self._trace_command(command, now)
        try:
            handle = self.executor.inject_fault(action.name, spec)
        except (UnsupportedFault, TargetNotRunning, SpawnError) as exc:
            self._fail(f"{action.name}: {type(exc).__name__}: {exc}", commands)
            return
        for phase in advance_to(node, Phase.RUNNING, now):
            self._trace_transition(node, phase, commands)
        self.annotations.open_region(action.name, now)
        self._trace_annotation("open", action.name, now, commands)
        if spec.kind == "kill":
            self.kill_watch[action.name] = list(spec.targets)
        else:
            self.active_faults[action.name] = handle

    def _dispatch_checkpoint(self, action: ActionSpec, now: float, commands: list) -> None:
        node = self.nodes[action.name]
        for phase in advance_to(node, Phase.RUNNING, now):
            self._trace_transition(node, phase, commands)
        command = ReconcileCommand("Snapshot", action.name, {"keys": list(action.values)})
        commands.append(command)
        self._trace_command(command, now)
        try:
            checkpoint = self.checkpoints.snapshot(
                action.name, self.checkpoint_exprs.get(action.name, []), self.tree, self.store, now,
            )
        except UnknownMetric as exc:
            self._fail(f"{action.name}: expression error: unknown metric {exc}", commands)
            return
        self.trace.append(
            "checkpoint", now, name=checkpoint.name,
            values=dict(checkpoint.values),
            phases={name: phase.value for name, phase in checkpoint.phases.items()},
        )
        for phase in advance_to(node, Phase.SUCCESS, now):
            self._trace_transition(node, phase, commands)
        self._on_terminal(node, now, commands)

    def _create_job(self, spec: JobSpec, now: float, commands: list) -> None:
        command = ReconcileCommand("CreateJob", spec.name, {
            "command": spec.command, "script_effects": len(spec.script), "metrics": spec.metrics_source,
        })
        commands.append(command)
        self._trace_command(command, now)
        try:
            self.executor.start_job(spec)
        except SpawnError as exc:
            # The job never came up: surface the standard lifecycle so the
            # failure classifies as an unexpected crash of that service.
            for phase in (Phase.PENDING, Phase.RUNNING):
                self.queue.push_event(Event(EventKind.STATE, now, subject=spec.name, phase=phase))
            self.queue.push_event(Event(
                EventKind.STATE, now, subject=spec.name, phase=Phase.FAILED,
                failure_mode="crash", reason=f"spawn failed: {exc}",
            ))

    def _resolve_job(self, action: ActionSpec, inputs: dict) -> JobSpec:
        if action.inline_job is not None:
            return parse_job_body(action.inline_job)
        ref = action.callable if action.kind == "Call" else action.template_ref
        template = self.templates[ref]
        merged = dict(inputs)
        if "services" in template.parameters and "services" not in merged and action.kind == "Call":
            merged["services"] = ", ".join(expand_targets(action.services, self.doc))
        text = instantiate_template(template, merged)
        try:
            body = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise SchemaError(f"template {ref} body does not parse: {exc}") from exc
        return parse_job_body(body)

    def _resolve_fault(self, action: ActionSpec) -> FaultSpec:
        if action.fault is not None:
            return parse_fault_body(action.fault, self.doc)
        template = self.templates[action.template_ref]
        text = instantiate_template(template, action.inputs[0] if action.inputs else {})
        body = yaml.safe_load(text)
        return parse_fault_body(body, self.doc)

    # --- assertions ------------------------------------------------------------

    def _evaluate_assertions(self, now: float, commands: list, state: bool, metrics: bool) -> None:
        for action in self.doc.actions:
            if self.finished:
                return
            if action.name not in self.asserts or action.name not in self.dispatched:
                continue
            if self.nodes[action.name].phase.terminal:
                continue
            self._evaluate_action_assertions(action.name, now, commands, state, metrics)

    def _evaluate_action_assertions(self, name: str, now: float, commands: list, state: bool, metrics: bool) -> None:
        node = self.nodes[name]
        for text, ast in self.asserts.get(name, []):
            if self.finished:
                return
            if isinstance(ast, MetricsExprAst):
                if not metrics:
                    continue
                try:
                    fired = eval_metrics(ast, self.store, now, self.checkpoints)
                except (UnknownMetric, UnknownCheckpoint, ValueError) as exc:
                    self._fail(f"{name}: expression error: {type(exc).__name__}: {exc}", commands)
                    return
            else:
                if not state:
                    continue
                fired = eval_state(ast, snapshot_scope(node))
            if fired:
                self.trace.append("event", now, event="Metrics", subject=name, expr=text, fired=True)
                self._fail(f"{name}: assertion fired: {text}", commands)
                return

    def _maybe_arm_tick(self) -> None:
        if self._tick_armed or self.finished:
            return
        needed = any(
            name in self.dispatched and not self.nodes[name].phase.terminal
            for name in self.asserts
        )
        if needed:
            due = self.clock.now() + self.tick_interval
            self.queue.push(due, Event(EventKind.TIME, due, timer_id="tick"))
            self._tick_armed = True

    # --- fault bookkeeping -------------------------------------------------------

    def _watch_kill_faults(self, subject: str, now: float, commands: list) -> None:
        for action_name, targets in list(self.kill_watch.items()):
            if subject not in targets:
                continue
            if all(self.nodes[t].phase.terminal for t in targets if t in self.nodes):
                del self.kill_watch[action_name]
                node = self.nodes[action_name]
                if not node.phase.terminal:
                    if action_name in self.annotations.open_labels():
                        self._close_region(action_name, now, commands)
                    for phase in advance_to(node, Phase.SUCCESS, now):
                        self._trace_transition(node, phase, commands)
                    self._on_terminal(node, now, commands)

    # --- outcome ----------------------------------------------------------------

    def _check_completion(self) -> None:
        if self.finished:
            return
        action_nodes = [self.nodes[a.name] for a in self.doc.actions]
        if not all(node.phase.terminal for node in action_nodes):
            return
        agg = aggregate_phase([(n.phase, n.failure_class) for n in action_nodes], tolerated=0)
        if agg == Phase.SUCCESS or not action_nodes:
            self.outcome = Outcome.SUCCESS
            self.reason = "all actions completed"
        else:
            failed = next(n for n in action_nodes if n.phase == Phase.FAILED)
            self.outcome = Outcome.FAILED
            self.reason = f"{failed.name}: {failed.failure_reason or 'failed'}"
        self.finished = True

    def _fail(self, reason: str, commands: list) -> None:
        if self.finished:
            return
        self.outcome = Outcome.FAILED
        self.reason = reason
        self.finished = True
        command = ReconcileCommand("AbortRun", self.doc.name, {"outcome": "Failed", "reason": reason})
        commands.append(command)
        self._trace_command(command, self.clock.now())

    def _abort(self, reason: str, commands: Optional[list] = None) -> None:
        if self.finished:
            return
        self.outcome = Outcome.ABORTED
        self.reason = reason
        self.finished = True
        command = ReconcileCommand("AbortRun", self.doc.name, {"outcome": "Aborted", "reason": reason})
        if commands is not None:
            commands.append(command)
        self._trace_command(command, self.clock.now())

    def _finalize(self) -> None:
        now = self.clock.now()
        for action_name, handle in list(self.active_faults.items()):
            command = ReconcileCommand("RevokeFault", action_name, {})
            self._trace_command(command, now)
            try:
                self.executor.revoke_fault(handle)
            except UnknownHandle:
                pass
            self.active_faults.pop(action_name, None)
        for label in self.annotations.open_labels():
            self._close_region(label, now, None)
        for node in iter_nodes(self.tree):
            in_cluster = node.owner is not None and node.owner.kind == "cluster"
            is_job = in_cluster or (
                node.name in self.dispatched
                and node.name in self.actions
                and self.actions[node.name].kind in ("Service", "Call")
            )
            if is_job and node.phase in (Phase.PENDING, Phase.RUNNING):
                command = ReconcileCommand("KillJob", node.name, {})
                self._trace_command(command, now)
                self.executor.kill_job(node.name)
        self.executor.shutdown()
        if not self.tree.phase.terminal and self.outcome in (Outcome.SUCCESS, Outcome.FAILED):
            target = Phase.SUCCESS if self.outcome == Outcome.SUCCESS else Phase.FAILED
            for phase in advance_to(self.tree, target, now):
                self._trace_transition(self.tree, phase, None)
        self.trace.append("outcome", now, outcome=self.outcome.value, reason=self.reason)

    # --- trace helpers -------------------------------------------------------------

    def _trace_transition(self, node: ResourceNode, phase: Phase, commands: Optional[list] = None) -> None:
        at = node.phase_times.get(phase, self.clock.now())
        data = {"subject": node.name, "to": phase.value}
        if phase == Phase.FAILED:
            if node.failure_class is not None:
                data["class"] = node.failure_class.value
            if node.failure_reason:
                data["reason"] = node.failure_reason
        self.trace.append("transition", at, **data)
        if commands is not None:
            commands.append(ReconcileCommand("Transition", node.name, {"to": phase.value}))

    def _trace_command(self, command: ReconcileCommand, at: float) -> None:
        self.trace.append("command", at, verb=command.verb, target=command.target, args=command.args)

    def _trace_annotation(self, action: str, label: str, at: float, commands: Optional[list], **extra) -> None:
        kind = "Point" if action == "point" else "Region"
        self.trace.append("annotation", at, action=action, label=label, ann_kind=kind, **extra)
        if commands is not None:
            commands.append(ReconcileCommand("Annotate", label, {"action": action}))

    def _close_region(self, label: str, at: float, commands: Optional[list]) -> None:
        region = self.annotations.close_region(label, at)
        self._trace_annotation("close", label, at, commands, start=region.start, end=region.end)


def _order(phase: Phase) -> int:
    return (Phase.UNINITIALIZED, Phase.PENDING, Phase.RUNNING, Phase.SUCCESS, Phase.FAILED).index(phase)


def run_scenario(
    doc: ScenarioDoc,
    templates: Optional[dict] = None,
    executor: Optional[Executor] = None,
    clock=None,
    seed: int = 0,
    tick_interval: float = 1.0,
    default_timeout: float = ENGINE_DEFAULT_TIMEOUT,
) -> RunResult:
    """Validate, run, and trace one scenario; see Engine for the mechanics."""
    engine = Engine(
        doc, templates, executor, clock=clock, seed=seed,
        tick_interval=tick_interval, default_timeout=default_timeout,
    )
    return engine.run()
