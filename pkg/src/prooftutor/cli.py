"""The `tutor` command line: repl, check, eval, prove, serve."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .logic import ParseError, Sequent, render_formula
from .script import Qed, parse_script, render_step
from .session import SessionError, evaluate_corpus, open_session
from .strategy import execute_strategy, flatten_at_level
from .theory import Library, TheoryError


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tutor", description="Assertion-level proof tutor")
    p.add_argument("--theory-dir", help="directory with .thy/.ex/.tree files (default: bundled)")
    p.add_argument("--format", choices=("text", "json"), default="text")
    sub = p.add_subparsers(dest="command", required=True)

    repl = sub.add_parser("repl", help="interactive step/hint loop")
    repl.add_argument("--exercise", required=True)
    repl.add_argument("--theory", help="override the exercise's theory")
    repl.add_argument("--depth", type=int)
    repl.add_argument("--socratic", action="store_true")

    check = sub.add_parser("check", help="batch-verify a proof script")
    check.add_argument("--exercise", required=True)
    check.add_argument("--script", required=True)
    check.add_argument("--theory")
    check.add_argument("--depth", type=int)

    ev = sub.add_parser("eval", help="replay a gold-labelled corpus")
    ev.add_argument("--corpus", default="mini.corpus")
    ev.add_argument("--depth", type=int)
    ev.add_argument("--theory")

    prove = sub.add_parser("prove", help="run a strategy and print the plan")
    prove.add_argument("--exercise", required=True)
    prove.add_argument("--strategy")
    prove.add_argument("--level", type=int, default=None)
    prove.add_argument("--budget", type=int, default=5000)

    serve = sub.add_parser("serve", help="start the HTTP service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8234)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    lib = Library(args.theory_dir) if args.theory_dir else Library()
    try:
        if args.command == "repl":
            return cmd_repl(args, lib)
        if args.command == "check":
            return cmd_check(args, lib)
        if args.command == "eval":
            return cmd_eval(args, lib)
        if args.command == "prove":
            return cmd_prove(args, lib)
        if args.command == "serve":
            return cmd_serve(args, lib)
    except (TheoryError, ParseError, SessionError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    return 0


def cmd_repl(args, lib: Library) -> int:
    session = open_session(
        args.exercise, lib, theory_name=args.theory, depth=args.depth, socratic=args.socratic
    )
    print(f"exercise {session.exercise.id}: prove {render_formula(session.exercise.goal)}")
    print("enter proof steps; :hint for a hint, :state to show tasks, :quit to leave")
    while True:
        try:
            line = input("> ").strip()
        except EOFError:
            print()
            return 0
        if not line:
            continue
        if line in (":quit", ":q"):
            return 0
        if line == ":state":
            _emit(args, session.state_view(), _render_state_text(session))
            continue
        if line == ":hint":
            try:
                hint = session.request_hint()
            except SessionError as e:
                print(f"({e})")
                continue
            _emit(args, {"category": hint.category, "text": hint.text},
                  f"[{hint.category_name}] {hint.text}")
            continue
        try:
            out = session.submit_step(line)
        except SessionError as e:
            print(f"({e})")
            continue
        _emit(args, out.as_dict(), " | ".join(out.messages))
        if out.proof_complete:
            print("proof complete — well done.")
            return 0


def _render_state_text(session) -> str:
    return session.best_state.render()


def _emit(args, payload: dict, text: str):
    if args.format == "json":
        print(json.dumps(payload, indent=None))
    else:
        print(text)


def cmd_check(args, lib: Library) -> int:
    session = open_session(args.exercise, lib, theory_name=args.theory, depth=args.depth)
    text = Path(args.script).read_text()
    script = parse_script(text, session.theory.arities)
    results = []
    all_correct = True
    for step, span in zip(script.steps, script.spans):
        rendered = render_step(step)
        if isinstance(step, Qed) and session.proof_complete:
            results.append({"step": rendered, "soundness": "correct", "messages": ["correct"]})
            continue
        out = session.submit_step(rendered)
        ok = out.feedback.soundness == "correct"
        all_correct = all_correct and ok
        results.append(
            {"step": rendered, "soundness": out.feedback.soundness,
             "granularity": out.feedback.granularity, "relevance": out.feedback.relevance,
             "messages": list(out.messages)}
        )
    payload = {"steps": results, "all_correct": all_correct,
               "proof_complete": session.proof_complete}
    if args.format == "json":
        print(json.dumps(payload))
    else:
        for r in results:
            print(f"{r['soundness']:<10} {r['step']}")
        print(f"all correct: {all_correct}; proof complete: {session.proof_complete}")
    return 0 if all_correct else 1


def cmd_eval(args, lib: Library) -> int:
    corpus = lib.corpus_path(args.corpus) if not Path(args.corpus).exists() else Path(args.corpus)
    report = evaluate_corpus(corpus, lib, depth=args.depth, theory_name=args.theory)
    if args.format == "json":
        print(json.dumps(report.as_dict()))
    else:
        print(report.render_table())
    return 0 if report.incorrect_verified == 0 else 1


def cmd_prove(args, lib: Library) -> int:
    ex = lib.exercise(args.exercise)
    theory = lib.theory(ex.theory_name)
    task = Sequent((), ex.goal, "T1")
    outcome = execute_strategy(args.strategy or ex.strategy, task, theory, args.budget)
    if outcome.plan is None:
        reason = "budget exhausted" if outcome.budget_exhausted else "strategy made no progress"
        print(f"no plan: {reason}", file=sys.stderr)
        return 1
    plan = outcome.plan
    if args.format == "json":
        edges = [
            {"label": e.label, "kind": e.kind, "source": e.source, "targets": list(e.targets)}
            for e in (flatten_at_level(plan, args.level) if args.level is not None else plan.all_edges())
        ]
        print(json.dumps({"closed": plan.closed, "edges": edges}))
        return 0
    if args.level is not None:
        for e in flatten_at_level(plan, args.level):
            tgt = ",".join(e.targets) or "closed"
            print(f"{e.source} -[{e.label}]-> {tgt}")
    else:
        print(plan.render())
    print(f"closed: {plan.closed}")
    return 0


def cmd_serve(args, lib: Library) -> int:
    import uvicorn

    from .server import create_app

    uvicorn.run(create_app(lib), host=args.host, port=args.port)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
