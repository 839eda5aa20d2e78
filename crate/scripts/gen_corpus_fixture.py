#!/usr/bin/env python3
"""Generate the literature corpus fixture: 20 documents x 5 paragraphs.

Usage: python3 scripts/gen_corpus_fixture.py [OUT_FILE]
"""

import json
import random
import sys
from pathlib import Path

OUT = Path(sys.argv[1]) if len(sys.argv) > 1 else (
    Path(__file__).resolve().parent.parent / "fixtures" / "corpus" / "documents.json")

rng = random.Random(7)

TOPICS = [
    ("team size", "disruption", "small teams disrupt while large teams develop existing ideas"),
    ("citation dynamics", "impact", "long-term citation impact follows a predictable aging curve"),
    ("scientific careers", "productivity", "the hot streak of a career can appear at any point"),
    ("novelty", "conventionality", "atypical combinations of prior work raise the chance of a hit paper"),
    ("gender gaps", "collaboration", "women remain underrepresented in authorship and credit"),
    ("funding", "grants", "grant support shifts research toward safer directions"),
    ("science and patents", "innovation", "scientific papers increasingly feed technological inventions"),
    ("public attention", "news coverage", "media attention amplifies a small share of papers"),
    ("university collaboration", "institutions", "elite institutions concentrate collaborative output"),
    ("peer review", "bias", "reviewers favour familiar methods and famous authors"),
]
HEADERS = [
    ["Abstract", "Introduction", "Methodology", "Results", "Discussion"],
    ["Abstract", "Related work", "Methods", "Results", "Conclusion"],
    ["Abstract", "Background", "Data and methods", "Findings", "Acknowledgements"],
    ["Abstract", "Introduction", "Materials", "Results", "Appendix"],
]
FIRST = ["Ana", "Ben", "Chloe", "Deepak", "Elif", "Felix", "Grace", "Hiro", "Ines", "Jonas", "Kofi", "Lena"]
LAST = ["Arendt", "Bauer", "Castro", "Dubois", "Egan", "Fontaine", "Gomez", "Holm", "Iqbal", "Jansen"]


def sentences(topic, metric, claim, header):
    h = header.lower()
    if h == "abstract":
        return [f"We study {topic} and its relation to {metric}.", f"We find that {claim}.",
                f"The analysis covers {rng.randint(2, 60)} million records."]
    if h in ("introduction", "background"):
        return [f"Questions about {topic} have a long history in the science of science.",
                f"Earlier accounts of {metric} relied on small samples.", "We revisit them at scale."]
    if h == "related work":
        return [f"Prior studies linked {topic} to {metric} using surveys.",
                f"Bibliometric work on {metric} proposed several indicators.", "Our approach builds on both."]
    if h in ("methodology", "methods", "data and methods", "materials"):
        return [f"We measure {metric} with a citation-network indicator.",
                f"Regression models control for field, year and {topic}.", "Robustness checks use matched samples."]
    if h in ("results", "findings"):
        return [f"The data show that {claim}.", f"The effect of {topic} on {metric} holds across fields.",
                f"It is {rng.choice(['strongest', 'weakest'])} in the life sciences."]
    if h == "discussion":
        return [f"These results suggest policies on {topic} should consider {metric}.",
                "Limitations include coverage gaps in older records."]
    if h == "conclusion":
        return [f"In conclusion, {claim}.", f"Future work should track {metric} over longer horizons."]
    if h == "acknowledgements":
        return ["We thank colleagues for comments on early drafts.", "Data access was provided by a consortium."]
    return [f"Supplementary tables report {metric} by field.", f"Additional figures vary the {topic} threshold."]


docs = []
for i in range(20):
    topic, metric, claim = TOPICS[i % len(TOPICS)]
    headers = HEADERS[i % len(HEADERS)]
    authors = [f"{rng.choice(FIRST)} {rng.choice(LAST)}" for _ in range(rng.randint(1, 4))]
    year = 2005 + (i * 7) % 19
    title = f"{topic.capitalize()} and {metric}: evidence {i + 1}" if i >= 10 else f"{topic.capitalize()} and {metric}"
    paragraphs = []
    for h in headers:
        body = " ".join(sentences(topic, metric, claim, h))
        sep = "—" if h == "Abstract" else ". "
        paragraphs.append(f"{h}{sep}{body}")
    docs.append({"title": title, "authors": authors, "year": year, "paragraphs": paragraphs})

OUT.parent.mkdir(parents=True, exist_ok=True)
OUT.write_text(json.dumps(docs, indent=1, ensure_ascii=False) + "\n")
