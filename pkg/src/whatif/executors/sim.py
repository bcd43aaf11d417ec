"""Deterministic discrete-event executor.

Jobs are scripts of timed effects; nothing here consults wall time or
randomness, so identical scripts produce identical event sequences. A
minimal message layer (send / block effects) exists solely to give
network partitions observable meaning: partitions drop messages per
direction, suspends freeze a job's effect chain and drop the metric
emissions scheduled inside the window.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from ..errors import SpawnError, TargetNotRunning, UnknownHandle, UnsupportedFault
from ..events import Event, EventKind
from ..lifecycle import Phase
from ..telemetry import MetricPoint
from .base import Executor, FaultSpec, JobSpec


@dataclass
class _SimJob:
    spec: JobSpec
    started_at: float
    index: int = 0  # next effect to fire
    phase: Phase = Phase.UNINITIALIZED
    suspended: bool = False
    blocked: bool = False
    held: bool = False  # chain paused by a suspend window
    mailbox: int = 0
    finished: bool = False
    token: int = 0  # bumped to invalidate scheduled callbacks


class SimExecutor(Executor):
    name = "sim"

    def __init__(self):
        self.jobs: dict[str, _SimJob] = {}
        self.faults: dict[str, dict] = {}
        self.partitions: dict[str, FaultSpec] = {}

    # --- jobs -----------------------------------------------------------

    def start_job(self, spec: JobSpec) -> None:
        if spec.name in self.jobs:
            raise SpawnError(f"job name already in use: {spec.name}")
        if not spec.script:
            raise SpawnError(f"{spec.name}: simulated jobs need a script")
        job = _SimJob(spec, self.clock.now())
        self.jobs[spec.name] = job
        for metric in spec.declares:
            self.store.declare(metric)
        for effect in spec.script:
            if effect.op == "metric":
                self.store.declare(effect.metric)
        job.phase = Phase.PENDING
        self._emit(spec.name, Phase.PENDING)
        self._schedule_next(job)

    def kill_job(self, name: str) -> None:
        job = self.jobs.get(name)
        if job is not None and not job.finished:
            job.finished = True
            job.token += 1

    # --- faults -----------------------------------------------------------

    def supports_fault(self, kind: str) -> bool:
        return kind in ("kill", "suspend", "partition")

    def inject_fault(self, action: str, spec: FaultSpec) -> str:
        if not self.supports_fault(spec.kind):
            raise UnsupportedFault(spec.kind)
        for target in spec.targets:
            job = self.jobs.get(target)
            if job is None or job.finished or job.phase != Phase.RUNNING:
                raise TargetNotRunning(target)
        handle = action
        fault = {"spec": spec, "action": action, "active": True}
        self.faults[handle] = fault
        if spec.kind == "kill":
            for target in spec.targets:
                job = self.jobs[target]
                job.finished = True
                job.token += 1
                job.phase = Phase.FAILED
                self._emit(target, Phase.FAILED, mode="kill", reason=f"killed by {action}")
            fault["active"] = False  # nothing left to revoke
        elif spec.kind == "suspend":
            for target in spec.targets:
                self.jobs[target].suspended = True
            self._arm_auto_revoke(handle, spec.duration)
        else:  # partition
            self.partitions[handle] = spec
            self._arm_auto_revoke(handle, spec.duration)
        return handle

    def revoke_fault(self, handle: str) -> None:
        fault = self.faults.get(handle)
        if fault is None or not fault["active"]:
            raise UnknownHandle(handle)
        fault["active"] = False
        spec: FaultSpec = fault["spec"]
        if spec.kind == "suspend":
            for target in spec.targets:
                job = self.jobs.get(target)
                if job is not None and not job.finished:
                    self._resume(job)
        elif spec.kind == "partition":
            self.partitions.pop(handle, None)
        self.queue.push_event(Event(
            EventKind.TAG, self.clock.now(),
            subject=fault["action"],
            tags={
                "event": "fault-revoked",
                "action": fault["action"],
                "fault": spec.kind,
                "targets": ",".join(spec.targets),
            },
        ))

    def _arm_auto_revoke(self, handle: str, duration: Optional[float]) -> None:
        if duration is None:
            return
        due = self.clock.now() + duration
        self.queue.push(due, lambda: self._auto_revoke(handle))

    def _auto_revoke(self, handle: str) -> None:
        fault = self.faults.get(handle)
        if fault is not None and fault["active"]:
            self.revoke_fault(handle)

    # --- effect chain -----------------------------------------------------------

    def _schedule_next(self, job: _SimJob) -> None:
        if job.finished or job.blocked or job.held or job.index >= len(job.spec.script):
            return
        effect = job.spec.script[job.index]
        due = max(self.clock.now(), job.started_at + effect.offset)
        index, token = job.index, job.token
        self.queue.push(due, lambda: self._fire(job, index, token))

    def _fire(self, job: _SimJob, index: int, token: int) -> None:
        if job.finished or token != job.token or index != job.index:
            return
        effect = job.spec.script[index]
        if job.suspended:
            if effect.op == "metric":
                # Emissions scheduled inside the suspend window are dropped.
                job.index += 1
                self._schedule_next(job)
            else:
                job.held = True
            return
        if effect.op == "block":
            if job.mailbox > 0:
                job.mailbox -= 1
                job.index += 1
                self._schedule_next(job)
            else:
                job.blocked = True
            return
        self._apply(job, effect)
        job.index += 1
        self._schedule_next(job)

    def _apply(self, job: _SimJob, effect) -> None:
        name = job.spec.name
        now = self.clock.now()
        if effect.op == "metric":
            self.store.ingest(MetricPoint(effect.metric, effect.value, now))
        elif effect.op == "send":
            self._deliver(name, effect.target)
        elif effect.op == "crash":
            job.finished = True
            job.phase = Phase.FAILED
            self._emit(name, Phase.FAILED, mode="crash", reason="crashed")
        elif effect.op == "failed":
            job.finished = True
            job.phase = Phase.FAILED
            self._emit(name, Phase.FAILED, mode="crash", reason="scripted failure")
        elif effect.op == "success":
            job.finished = True
            job.phase = Phase.SUCCESS
            self._emit(name, Phase.SUCCESS)
        elif effect.op == "running":
            job.phase = Phase.RUNNING
            self._emit(name, Phase.RUNNING)

    def _resume(self, job: _SimJob) -> None:
        job.suspended = False
        if job.held:
            job.held = False
            index, token = job.index, job.token
            self.queue.push(self.clock.now(), lambda: self._fire(job, index, token))
        elif job.blocked and job.mailbox > 0:
            job.blocked = False
            job.mailbox -= 1
            job.index += 1
            self._schedule_next(job)

    # --- message layer ------------------------------------------------------------

    def _deliver(self, src: str, dst: str) -> None:
        if self._dropped(src, dst):
            return
        target = self.jobs.get(dst)
        if target is None or target.finished:
            return
        if target.blocked and not target.suspended:
            target.blocked = False
            target.index += 1
            self._schedule_next(target)
        else:
            target.mailbox += 1

    def _dropped(self, src: str, dst: str) -> bool:
        # direction "to": source->dst delivered, dst->source dropped.
        for spec in self.partitions.values():
            if spec.direction in ("to", "both") and src in spec.dst and dst in spec.targets:
                return True
            if spec.direction in ("from", "both") and src in spec.targets and dst in spec.dst:
                return True
        return False

    # --- plumbing ---------------------------------------------------------------------

    def _emit(self, name: str, phase: Phase, mode: str = "", reason: str = "") -> None:
        self.queue.push_event(Event(
            EventKind.STATE, self.clock.now(),
            subject=name, phase=phase, failure_mode=mode, reason=reason,
        ))

    def advance_to(self, to: float) -> list[Event]:
        """Harness mode: fire everything due through ``to``, in (time, seq) order.

        Returns the events delivered, with the bound clock left at ``to``.
        Engine-driven runs pop the queue themselves instead.
        """
        if to < self.clock.now():
            raise ValueError(f"cannot rewind the clock to {to}")
        delivered: list[Event] = []
        while True:
            at = self.queue.peek_time()
            if at is None or at > to:
                break
            popped_at, item = self.queue.pop_next()
            self.clock.set(popped_at)
            if isinstance(item, Event):
                delivered.append(item)
            else:
                item()
        self.clock.set(to)
        return delivered
