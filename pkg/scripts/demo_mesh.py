#!/usr/bin/env python3
"""Coordinator + five workers, offline: distribute scripted instruction
blocks, let the workers draft plans, batch-approve them (the human gate),
and collect the correlated responses."""
import json
import sys
import tempfile
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from labloop.config import Config
from labloop.gateway import Gateway, MockChatProvider, MockEmbeddingProvider, MockScript
from labloop.mesh import batch_approve, collect, distribute, planning_worker_handler, \
    run_workers, spawn_mesh

BLOCKS = "\n".join(
    f"WORKER {i}: embed shard {i} of the dataset, cluster it, and report the top groups"
    for i in range(1, 6))

WORKER_PLAN = json.dumps([
    {"module": "chat", "prompt": "embed and cluster the shard", "successors": [2]},
    {"module": "chat", "prompt": "summarize the top groups", "successors": ["STOP"]},
])


def main():
    root = Path(tempfile.mkdtemp(prefix="labloop-mesh-"))
    config = Config(output_directory_root=str(root))

    counter = {"n": -1}

    def factory(session):
        counter["n"] += 1
        entries = [("distribute", BLOCKS)] if counter["n"] == 0 else \
            [("plan-generate", WORKER_PLAN)]
        return Gateway(chat=MockChatProvider(script=MockScript(entries)),
                       embedder=MockEmbeddingProvider(), session=session)

    mesh = spawn_mesh(5, config, factory)
    print("agents:", ", ".join(sorted(mesh.handles)))

    assignments = distribute(mesh, "explore the reprogramming dataset shard by shard")
    for worker_id, text in assignments:
        print(f"  {worker_id} <- {text[:70]}")

    run_workers(mesh, planning_worker_handler(["chat"]))
    approved = batch_approve(mesh)
    print(f"approved {approved} worker plans (human gate)")

    result = collect(mesh, timeout=30)
    print(f"collected {len(result.responses)} responses, missing: {result.missing or 'none'}")
    for message in result.responses:
        print(f"  {message.from_id} [{message.correlation_id}]: {message.body[:80]}")


if __name__ == "__main__":
    main()
