"""Pluggable job/fault backends: a deterministic simulator and local processes."""

from .base import Executor, FaultSpec, JobSpec, SimEffect, parse_fault_body, parse_job_body
from .process import ProcessExecutor
from .sim import SimExecutor


def make_executor(name: str) -> Executor:
    if name == "sim":
        return SimExecutor()
    if name == "process":
        return ProcessExecutor()
    raise ValueError(f"unknown executor {name!r}")


__all__ = [
    "Executor",
    "FaultSpec",
    "JobSpec",
    "SimEffect",
    "SimExecutor",
    "ProcessExecutor",
    "make_executor",
    "parse_fault_body",
    "parse_job_body",
]
