# Copyright 2026 The faaschain Authors
# SPDX-License-Identifier: Apache-2.0
"""Checkpoint-chained serverless execution.

Long computations run as a chain of short function invocations: each link
checkpoints before its timeout and re-invokes the function, which restores
and continues. This package exposes the simulated local platform and the
benchmark harness of the C++ core.
"""

import json

from . import _core
from ._core import Error, sha256_hex

__all__ = ["Error", "canonical", "run_bench", "run_chain", "run_workload", "sha256_hex", "workloads"]


def canonical(value):
    """Canonical JSON text of a Python value."""
    return _core.canonical(json.dumps(value))


def workloads():
    return list(_core.workloads())


def run_workload(bin, args=(), block_size=1):
    """Runs a workload uninterrupted; returns {"result", "partials", "steps"}."""
    return json.loads(_core.run_workload(bin, [str(a) for a in args], block_size))


def run_chain(bin, args=(), *, timeout_ms=60000, trigger_ms=50000, unit_ms=1000, enabled=True, fencing=True,
              race_delay_ms=None):
    """Runs one chain on a simulated platform.

    Returns a dict with the chain id, the chain record, the report (once the
    chain has settled) and the activation records.
    """
    return json.loads(
        _core.run_chain(bin, [str(a) for a in args], timeout_ms, trigger_ms, unit_ms, enabled, fencing, race_delay_ms)
    )


def run_bench(workload, args, **plan):
    """Runs a benchmark sweep; returns (csv_text, summary_dict)."""
    plan = dict(plan, workload=workload, args=list(args))
    csv_text, summary = _core.run_bench(json.dumps(plan))
    return csv_text, json.loads(summary)
