"""Writes a small synthetic corpus and two run manifests under data/."""
import json
import random
from pathlib import Path

OUT = Path(__file__).resolve().parent.parent / "data"
rng = random.Random(7)

PHRASES = [
    "I have been sleeping badly and worry most of the day.",
    "Sometimes I hear my name called when nobody is there.",
    "Things feel a bit strange lately, like people are watching.",
    "Mostly fine, school is going okay.",
    "I feel down and tired, and I stopped seeing friends.",
    "I get irritated quickly with my family.",
]
PHRASES_ES = [
    "Duermo mal y me preocupo casi todo el dia.",
    "A veces oigo mi nombre cuando no hay nadie.",
    "Me siento triste y cansado.",
]


def ratings(base):
    return [max(1, min(7, b + rng.choice([-1, 0, 0, 1]))) for b in base]


def transcript(pid, visit, kind, language):
    pool = PHRASES_ES if language == "es" else PHRASES
    lines = []
    for _ in range(6):
        lines.append("Interviewer: How have things been?")
        lines.append("Participant: " + rng.choice(pool))
    return {"type": "transcript", "patient_id": pid, "visit_index": visit, "kind": kind,
            "language": language, "text": "\n".join(lines)}


records = []
for p in range(12):
    pid = f"demo{p:02d}"
    language = "es" if p % 4 == 3 else "en"
    base = [rng.choice([1, 1, 2, 2, 3, 4]) for _ in range(24)]
    for visit in range(3):
        for kind in ("open", "psychs"):
            records.append(transcript(pid, visit, kind, language))
        records.append({"type": "assessment", "patient_id": pid, "visit_index": visit, "ratings": ratings(base)})

OUT.mkdir(exist_ok=True)
with open(OUT / "demo_corpus.jsonl", "w") as f:
    for r in records:
        f.write(json.dumps(r) + "\n")

common = {
    "corpus": ["demo_corpus.jsonl"],
    "model": {"model_name": "o3-mini-2025-01-31", "max_concurrent_requests": 4},
    "seed": 11,
    "output_dir": "../runs",
    "scripted": {"noise": "uniform", "magnitude": 1, "seed": 11},
}
zero = dict(common, run_id="demo-zero-shot", selection={"kinds": ["open", "psychs"], "languages": "all"})
longi = dict(common, run_id="demo-longitudinal",
             selection={"kinds": ["psychs"], "languages": "all", "min_points": 3},
             strategies=["0-shot", "0-shot+1-score", "0-shot+1-transcript", "1-shot", "2-shot", "last_score"])
for name, doc in (("demo_manifest.json", zero), ("demo_longitudinal.json", longi)):
    (OUT / name).write_text(json.dumps(doc, indent=2) + "\n")
