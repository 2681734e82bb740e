#!/usr/bin/env python3
# SPDX-License-Identifier: Apache-2.0
"""Writes the scripted question-answering scenario under data/scenarios/.

Every rule is anchored to the end of the prompt, so it only fires for the episode in progress
and never for a demonstration of the same task. The scripted actor answers an evaluation question correctly only when the prompt holds the
context that question depends on: a retrieved training trajectory about the same entity, or the
insight about year questions. One question is always answered correctly and one never is, so the
four evaluation modes land on distinct, predictable success rates.
"""
import json
import pathlib
import re
import sys

ROOT = pathlib.Path(sys.argv[1] if len(sys.argv) > 1 else "data")
TASKS = {t["id"]: t for t in json.loads((ROOT / "toyqa" / "tasks.json").read_text())["tasks"]}

YEAR_INSIGHT = ("When the question asks for a year, answer with the four-digit year stated in the "
                "article rather than guessing.")
SEARCH_INSIGHT = "Search for the main entity named in the question first, then answer from the returned article."
REFLECTION = ("I answered from memory instead of reading the observation. Next time I will read the "
              "observation and copy the exact answer from it.")

ENTITY = {
    "t1": "Marlowe", "t2": "Harriet Vance", "t3": "Orin Castle", "t4": "The Glass Arcade",
    "t5": "Estria", "t6": "Mount Ossory", "t7": "Duke Aldric", "t8": "Kellow",
    "e1": "Marlowe", "e2": "Harriet Vance", "e3": "Orin Castle", "e4": "The Glass Arcade",
    "e5": "Velt Observatory", "e6": "Corran Prize", "e7": "Moonpetal orchid", "e8": "Tessel River",
}

# Evaluation question -> text whose presence unlocks the right answer. None means no condition.
EVAL_MARKERS = {
    "e1": "Question: " + TASKS["t1"]["question"],
    "e2": "Question: " + TASKS["t2"]["question"],
    "e3": "Question: " + TASKS["t3"]["question"],
    "e4": "Question: " + TASKS["t4"]["question"],
    "e5": YEAR_INSIGHT,
    "e6": YEAR_INSIGHT,
    "e7": None,
    "e8": "never present in any prompt",
}
# Training question -> marker; t1 and t2 need a reflection, t8 never succeeds.
TRAIN_MARKERS = {
    "t1": REFLECTION, "t2": REFLECTION, "t3": None, "t4": None,
    "t5": None, "t6": None, "t7": None, "t8": "never present in any prompt",
}


def ecma_escape(text):
    return re.sub(r"([\\^$.*+?()\[\]{}|/])", r"\\\1", text)


def answer(action, thought):
    return f"Thought: {thought}\nAction: {action}"


def actor_rules(markers):
    rules = []
    for tid, marker in markers.items():
        q = TASKS[tid]["question"]
        rules.append({
            "regex": ecma_escape(f"Question: {q}\n") + "$",
            "response": answer(f"Search[{ENTITY[tid]}]", f"I need to search {ENTITY[tid]}."),
        })
        step1 = ecma_escape(f"Question: {q}\n") + r"Thought: [^\n]*\nAction: [^\n]*\nObservation: [^\n]*\n$"
        right = {"regex": step1, "all_of": [], "response": answer(f"Finish[{TASKS[tid]['answer']}]", "The article states the answer.")}
        if marker is not None:
            right["all_of"].append(marker)
        rules.append(right)
        rules.append({"regex": step1, "response": answer("Finish[unknown]", "I am not sure, I will guess.")})
    return rules


def main():
    compare = "Below are a successful attempt and an unsuccessful attempt"
    success = "Below are successful attempts at different tasks"
    scripted = {
        "actor": {"id": "scripted-actor", "rules": actor_rules(EVAL_MARKERS) + actor_rules(TRAIN_MARKERS),
                  "default": "Thought: I have no plan.\nAction: Finish[unknown]"},
        "reflector": {"id": "scripted-reflector", "rules": [], "default": REFLECTION},
        "extractor": {
            "id": "scripted-extractor",
            "rules": [
                {"all_of": [compare, YEAR_INSIGHT], "response": "UPVOTE 1"},
                {"all_of": [compare], "response": f"ADD {YEAR_INSIGHT}"},
                {"all_of": [success, SEARCH_INSIGHT], "response": "UPVOTE 2"},
                {"all_of": [success], "response": f"ADD {SEARCH_INSIGHT}"},
            ],
            "default": "",
        },
        "transfer": {
            "id": "scripted-transfer",
            "rules": [],
            "default": "1. Check the claim against the article before choosing a label.\n"
                       "2. Search for the main entity named in the claim first.",
        },
    }
    out = ROOT / "scenarios"
    out.mkdir(exist_ok=True)
    (out / "toyqa_scripted.json").write_text(json.dumps(scripted, indent=2) + "\n")

    models = {role: {"type": "scripted", "path": "toyqa_scripted.json", "section": role}
              for role in ("actor", "reflector", "extractor", "transfer")}
    config = {
        "env": "toyqa",
        "data_dir": "..",
        "output_dir": "../../runs/toyqa_modes",
        "models": models,
        "max_retries": 1,
        "fewshot_k": 3,
        "split": {"train": [f"t{i}" for i in range(1, 9)], "eval": [f"e{i}" for i in range(1, 9)]},
        "modes": ["base", "insights_only", "retrieve_only", "full"],
    }
    (out / "toyqa_modes.json").write_text(json.dumps(config, indent=2) + "\n")
    folds = dict(config, output_dir="../../runs/toyqa_folds", modes=["full"])
    del folds["split"]
    (out / "toyqa_folds.json").write_text(json.dumps(folds, indent=2) + "\n")


if __name__ == "__main__":
    main()
