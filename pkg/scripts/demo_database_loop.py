#!/usr/bin/env python3
"""End-to-end demo of the build-a-database loop, fully offline.

Starts with an empty index and a canned literature connector, drafts the
three-stage plan (fetch literature -> answer from database -> judge the
answer), approves it, and runs it until the scripted judge accepts the
second answer. Prints the instruction trace as it goes.
"""
import json
import sys
import tempfile
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from labloop.agent import AgentRuntime
from labloop.config import Config
from labloop.gateway import Gateway, MockChatProvider, MockEmbeddingProvider, MockScript
from labloop.library import LiteratureHit, StubLiteratureConnector
from labloop.session import create_session

PLAN = json.dumps([
    {"module": "digital-library",
     "prompt": "download literature about single cell foundation models",
     "successors": [2]},
    {"module": "lab-notebook",
     "prompt": "what are single cell foundation models?",
     "successors": [3]},
    {"module": "chat",
     "prompt": "judge whether the answer is satisfactory",
     "successors": [1, "STOP"],
     "condition_hint": "return 1 while the answer is unsatisfactory"},
])

HITS = [
    LiteratureHit(source="arxiv", external_id="2401.0001",
                  title="A survey of single cell foundation models",
                  abstract="Pretrained models for single cell transcriptomics.",
                  link="https://example.org/2401.0001"),
    LiteratureHit(source="arxiv", external_id="2401.0002",
                  title="Transformers for single cell analysis",
                  abstract="Learning cell level representations with attention.",
                  link="https://example.org/2401.0002"),
]

TEXTS = {
    "2401.0001": ("Single cell foundation models are large pretrained networks. "
                  "They are trained on transcriptomic profiles of individual cells "
                  "and learn gene level and cell level representations."),
    "2401.0002": ("Transformer models categorize known cell types and can uncover "
                  "novel cell populations in single cell RNA sequencing data."),
}

SCRIPT = [
    ("plan-generate", PLAN),
    ("derive-search-terms", "SOURCE: arxiv\nsingle cell foundation models\nsingle cell"),
    ("generate", "The database is empty and I could not find any information; "
                 "I cannot answer this confidently."),
    ("choose-successor", "1"),
    ("derive-search-terms", "SOURCE: arxiv\ndeep learning for single cell analysis"),
    ("generate", "Single cell foundation models are pretrained transformer networks "
                 "built on transcriptomic data; they learn gene and cell level "
                 "representations and can classify cell types."),
    ("choose-successor", "STOP"),
]


def main():
    root = Path(tempfile.mkdtemp(prefix="labloop-demo-"))
    config = Config(output_directory_root=str(root))
    session = create_session(config)
    gateway = Gateway(chat=MockChatProvider(script=MockScript(SCRIPT)),
                      embedder=MockEmbeddingProvider(), session=session)
    connector = StubLiteratureConnector(source="arxiv", hits=HITS, texts=TEXTS)
    runtime = AgentRuntime(config, session=session, gateway=gateway,
                           literature_connector=connector)

    print(f"session: {session.output_dir}")
    print("index size at start:", len(runtime.index))

    turn = runtime.handle_message("first download papers, then answer, then check the answer")
    print("\n--- drafted plan ---")
    print(turn.text)

    runtime.approve_plan()
    print("\n--- executing ---")
    while runtime.plan.ip != "STOP":
        outcome = runtime.step_plan()
        print(f"instruction {outcome.instruction_id} "
              f"[{runtime.plan.instruction(outcome.instruction_id).module}] "
              f"-> next {outcome.chosen_next}")
        print(f"   {outcome.response[:110]}")

    print("\nindex size at end:", len(runtime.index))
    print("plan status:", runtime.plan.status)
    runtime.save()
    print(f"log: {session.log_path}")


if __name__ == "__main__":
    main()
