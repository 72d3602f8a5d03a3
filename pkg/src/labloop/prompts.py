"""Prompt template library.

Two classes of templates: `action` prompts turn a user query into a decision
or a piece of code (structured output, few-shot examples, chain-of-thought
instructions), and `output` prompts produce text for the user (generation,
summaries, report narrative).
"""
from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    kind: str                      # "action" | "output"
    template: str
    few_shot: tuple[str, ...] = ()
    chain_of_thought: bool = False

    def render(self, **kwargs) -> str:
        body = self.template.format(**kwargs)
        parts = []
        if self.few_shot:
            parts.append("Examples:\n" + "\n".join(self.few_shot))
        parts.append(body)
        if self.chain_of_thought:
            parts.append("Reason through the problem step by step before giving the final answer.")
        return "\n\n".join(parts)


_TEMPLATES: dict[str, PromptTemplate] = {}


def register(template: PromptTemplate) -> PromptTemplate:
    if template.name in _TEMPLATES:
        raise ValueError(f"duplicate prompt template {template.name!r}")
    _TEMPLATES[template.name] = template
    return template


def get(name: str) -> PromptTemplate:
    return _TEMPLATES[name]


def render(name: str, **kwargs) -> str:
    return get(name).render(**kwargs)


def names(kind: str | None = None) -> list[str]:
    return sorted(n for n, t in _TEMPLATES.items() if kind is None or t.kind == kind)


register(PromptTemplate(
    name="multi_query",
    kind="action",
    template=(
        "Rewrite the following question in {n} different ways that keep its meaning.\n"
        "Question: {query}\n"
        "Answer with one rewriting per line, numbered 1..{n}, and nothing else."
    ),
))

register(PromptTemplate(
    name="compress",
    kind="action",
    template=(
        "Summarize the passage below, keeping only material relevant to the question "
        "and removing everything else. If nothing in the passage is relevant, answer "
        "exactly NOT_RELEVANT.\n"
        "Question: {query}\n"
        "Passage:\n{chunk}"
    ),
))

register(PromptTemplate(
    name="generate_answer",
    kind="output",
    template=(
        "Answer the user's question using the supporting excerpts. Cite only what the "
        "excerpts support and say so when they are insufficient.\n"
        "Question: {query}\n"
        "Excerpts:\n{context}"
    ),
))

register(PromptTemplate(
    name="generate_answer_empty",
    kind="output",
    template=(
        "No supporting material was found in the database for the question below. "
        "State clearly that the database holds no information on it, then answer as "
        "best you can from general knowledge.\n"
        "Question: {query}"
    ),
))

register(PromptTemplate(
    name="derive_search_terms",
    kind="action",
    template=(
        "A user wants new literature. Choose the best source among {sources} and give "
        "1-{max_terms} search terms.\n"
        "Conversation so far:\n{memory}\n"
        "Request: {query}\n"
        "Answer with the source on the first line as SOURCE: <name>, then one term per line."
    ),
))

register(PromptTemplate(
    name="select_script",
    kind="action",
    template=(
        "Pick the one script that best addresses the task. Answer with the script name "
        "exactly as listed and nothing else.\n"
        "Available scripts:\n{catalog}\n"
        "Task: {query}"
    ),
))

register(PromptTemplate(
    name="synthesize_call",
    kind="action",
    template=(
        "Write the invocation that runs the script for this task. Use the call form "
        "run('<script name>', ...) with keyword arguments from the documentation, and "
        "point the {output_arg} argument inside {output_dir}. Put the final invocation "
        "in a fenced code block.\n"
        "Script documentation:\n{doc}\n"
        "Task: {query}"
    ),
    chain_of_thought=True,
))

register(PromptTemplate(
    name="repair_call",
    kind="action",
    template=(
        "The previous invocation failed validation. Fix it and answer with a corrected "
        "invocation in a fenced code block.\n"
        "Task: {query}\n"
        "Previous invocation:\n{code}\n"
        "Validation failures:\n{failures}"
    ),
    chain_of_thought=True,
))

register(PromptTemplate(
    name="summarize_execution",
    kind="output",
    template=(
        "A script just ran for the user. Summarize what happened for them.\n"
        "Task: {query}\nScript: {script}\nExit status: {exit_status}\n"
        "Output:\n{stdout}\nErrors:\n{stderr}\nNew files: {artifacts}"
    ),
))

register(PromptTemplate(
    name="plan_match",
    kind="action",
    template=(
        "Does one of these saved plans already fit the request? Answer with the plan "
        "name exactly as listed, or NONE.\n"
        "Saved plans:\n{catalog}\n"
        "Request: {query}"
    ),
))

register(PromptTemplate(
    name="plan_generate",
    kind="action",
    template=(
        "Break the request into numbered instructions for the available modules. Answer "
        "with a JSON array; each element needs \"module\" (one of {modules}), \"prompt\" "
        "(the instruction for that module), and \"successors\" (list of instruction ids "
        "and/or \"STOP\"; ids are 1-based positions in the array).\n"
        "Request: {query}"
    ),
    chain_of_thought=True,
))

register(PromptTemplate(
    name="choose_successor",
    kind="action",
    template=(
        "An instruction just finished. Choose which instruction runs next. Answer with "
        "one candidate verbatim and nothing else.\n"
        "Condition: {condition}\n"
        "Module response:\n{response}\n"
        "Candidates: {candidates}"
    ),
))

register(PromptTemplate(
    name="distribute_objective",
    kind="action",
    template=(
        "Split this objective into {n} self-contained instruction blocks, one per "
        "worker. Mark each block with a line WORKER <k>: followed by its instructions.\n"
        "Objective: {objective}\n"
        "Reference material:\n{documentation}"
    ),
))

register(PromptTemplate(
    name="generate_questions",
    kind="action",
    template=(
        "Write one exam-style question whose answer is contained in the passage. Answer "
        "with the question only.\n"
        "Passage:\n{context}"
    ),
))

register(PromptTemplate(
    name="evolve_question",
    kind="action",
    template=(
        "Rewrite this question, making it {direction}. Keep it answerable from the same "
        "material and answer with the question only.\n"
        "Question: {question}"
    ),
))

register(PromptTemplate(
    name="questions_from_answer",
    kind="action",
    template=(
        "Write {n} questions that the following answer would fully address, one per "
        "line, numbered.\n"
        "Answer:\n{answer}"
    ),
))

register(PromptTemplate(
    name="decompose_claims",
    kind="action",
    template=(
        "Split the text into small, independently verifiable claims, one per line.\n"
        "Text:\n{text}"
    ),
))

register(PromptTemplate(
    name="verify_claim",
    kind="action",
    template=(
        "Can the claim be inferred from the evidence? Answer YES or NO.\n"
        "Claim: {claim}\nEvidence:\n{evidence}"
    ),
))

register(PromptTemplate(
    name="report_narrative",
    kind="output",
    template=(
        "Write a short narrative paragraph for a run report section.\n"
        "Section: {heading}\nFacts:\n{facts}"
    ),
))

register(PromptTemplate(
    name="chat",
    kind="output",
    template="{query}",
))
