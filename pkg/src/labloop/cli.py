"""Command-line entry points: interactive chat, the HTTP service, document
ingestion, the eval suite, and report generation."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import evaluation, index as index_mod, report
from .agent import AgentRuntime
from .config import Config, load_config
from .gateway import build_gateway
from .session import restore_session


def _config_from_args(args) -> Config:
    overrides = {}
    if getattr(args, "provider", None):
        overrides["llm_provider"] = args.provider
        overrides["embedding_provider"] = args.provider
    if getattr(args, "output_root", None):
        overrides["output_directory_root"] = args.output_root
    return load_config(getattr(args, "config", None), overrides)


def cmd_chat(args) -> int:
    config = _config_from_args(args)
    Path(config.output_directory_root).mkdir(parents=True, exist_ok=True)
    runtime = AgentRuntime(config)
    print(f"session {runtime.session.id} (provider: {config.llm_provider}); "
          "empty line or Ctrl-D exits")
    while True:
        try:
            text = input("> ").strip()
        except (EOFError, KeyboardInterrupt):
            print()
            break
        if not text:
            break
        result = runtime.handle_message(text)
        print(f"[{result.route}] {result.text}")
        for doc_id, chunk_id in result.citations:
            print(f"  source: {doc_id} ({chunk_id})")
    runtime.save()
    print(f"saved to {runtime.session.output_dir}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .api import create_app

    config = _config_from_args(args)
    Path(config.output_directory_root).mkdir(parents=True, exist_ok=True)
    params = config.module_params("service-api")
    app = create_app(config)
    uvicorn.run(app, host=args.host or params["host"], port=args.port or params["port"])
    return 0


def cmd_ingest(args) -> int:
    config = _config_from_args(args)
    gateway = build_gateway(config)
    db_dir = Path(args.db)
    idx = index_mod.load_index(db_dir) if (db_dir / "catalog.json").is_file() else index_mod.VectorIndex()
    params = config.module_params("notebook-index")
    total = 0
    for file_path in args.files:
        path = Path(file_path)
        doc = index_mod.Document(doc_id=path.stem, title=path.stem, source="local-file",
                                 pages=[path.read_text(encoding="utf-8")])
        added = index_mod.ingest_document(idx, doc, gateway, chunking_mode=args.chunking,
                                          params=params)
        print(f"{path.name}: {added} chunks")
        total += added
    index_mod.save_index(idx, db_dir)
    print(f"index now holds {len(idx)} chunks from {len(idx.docs)} documents at {db_dir}")
    return 0 if total or args.files == [] else 1


def cmd_eval(args) -> int:
    config = _config_from_args(args)
    records = evaluation.load_records(args.dataset)
    gateway = build_gateway(config)
    rows = evaluation.run_suite(records, gateway, out_path=args.out)
    means = {r["metric"]: r["value"] for r in rows
             if r["record"] == "mean" and r["kind"] == "all"}
    for metric, value in sorted(means.items()):
        print(f"{metric}: {value:.4f}")
    print(f"results written to {args.out}")
    return 0


def cmd_report(args) -> int:
    session = restore_session(args.session)
    gateway = build_gateway(session.config, session)
    path = report.render_report(session, args.template, gateway)
    print(path)
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="labloop",
                                     description="agentic RAG orchestration toolkit")
    parser.add_argument("--config", help="path to a JSON config file")
    parser.add_argument("--provider", choices=["mock", "local", "remote-endpoint"],
                        help="override both providers")
    parser.add_argument("--output-root", help="override output_directory_root")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("chat", help="interactive chat session")

    p_serve = sub.add_parser("serve", help="run the HTTP service")
    p_serve.add_argument("--host", default=None)
    p_serve.add_argument("--port", type=int, default=None)

    p_ingest = sub.add_parser("ingest", help="ingest text files into an index directory")
    p_ingest.add_argument("--db", required=True, help="index directory")
    p_ingest.add_argument("--chunking", choices=["recursive", "semantic"], default="recursive")
    p_ingest.add_argument("files", nargs="+")

    p_eval = sub.add_parser("eval", help="run the metric suite on a JSONL dataset")
    p_eval.add_argument("--dataset", required=True)
    p_eval.add_argument("--out", default="eval-results.csv")

    p_report = sub.add_parser("report", help="render a report from a saved session")
    p_report.add_argument("--session", required=True, help="session directory or state.json")
    p_report.add_argument("--template", default="standard")

    args = parser.parse_args(argv)
    commands = {"chat": cmd_chat, "serve": cmd_serve, "ingest": cmd_ingest,
                "eval": cmd_eval, "report": cmd_report}
    return commands[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
