#!/usr/bin/env python3
"""Generate the standard data-lake fixture under fixtures/lake/.

The output is deterministic. Citation-derived columns of `papers`
(citation counts, disruption_score and the percentile columns) are computed
here in plain Python so the Rust metrics can be cross-checked against an
independent implementation.

Usage: python3 scripts/gen_lake_fixture.py [OUT_DIR]
"""

import csv
import random
import sys
from pathlib import Path

SEED = 20240915
N_PAPERS = 250
N_AUTHORS = 160

OUT = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).resolve().parent.parent / "fixtures" / "lake"

INSTITUTIONS = [
    # name_search results for "Harvard University"
    (136199984, "Harvard University", "grid.38142.3c", "http://www.harvard.edu/", 42.37444, -71.11694),
    (2801851002, "Harvard University Press", "grid.446714.4", None, 42.3830147, -71.12706),
    (32971472, "Yale University", "grid.47100.32", "http://www.yale.edu/", 41.31111, -72.92667),
    (20089843, "Princeton University", "grid.16750.35", "http://www.princeton.edu/", 40.34873, -74.65931),
    (205783295, "Cornell University", "grid.5386.8", "http://www.cornell.edu/", 42.45345, -76.4735),
    (78577930, "Columbia University", "grid.21729.3f", "http://www.columbia.edu/", 40.8075, -73.96194),
    (27804330, "Brown University", "grid.40263.33", "http://www.brown.edu/", 41.8262, -71.4032),
    (121934306, "Tufts University", "grid.429997.8", "http://www.tufts.edu/", 42.4069481, -71.11982),
    (145311948, "Johns Hopkins University", "grid.21107.35", "http://www.jhu.edu/", 39.32889, -76.62028),
    (107672454, "Dartmouth College", "grid.254880.3", "http://dartmouth.edu/", 43.70333, -72.28833),
    # name_search results for "University of Pennsylvania"
    (79576946, "University of Pennsylvania", "grid.25879.31", "http://www.upenn.edu/", 39.95, -75.19),
    (130769515, "Pennsylvania State University", "grid.29857.31", "http://www.psu.edu/", 40.79611, -77.86278),
    (922845939, "Philadelphia University", "grid.261870.a", "http://www.philau.edu/", 40.023, -75.192),
    (2799810409, "Hospital of the University of Pennsylvania", "grid.411115.1", None, 39.95, -75.1936),
    (2802460994, "William Penn University", "grid.441278.c", None, 41.309, -92.6481),
    (200885203, "Indiana University of Pennsylvania", "grid.257427.1", "http://www.iup.edu/", 40.617, -79.16),
    (36788626, "California University of Pennsylvania", "grid.253569.e", "http://www.calu.edu/", 40.06678, -79.88482),
    (161171246, "West Chester University of Pennsylvania", "grid.268132.c", "http://www.wcupa.edu/", 39.95219, -75.6001),
    (84392919, "Temple University", "grid.264727.2", "http://www.temple.edu/", 39.981, -75.16),
    (104651037, "Millersville University of Pennsylvania", "grid.260049.9", "http://www.millersville.edu/", 40.0, -76.356),
    # sample rows shown by sql_get_schema
    (3048424156, "Central Valley General Hospital", "grid.461337.4", None, 36.3367, -119.6454),
    (2803044603, "Brighton Hospital", "grid.461435.1", None, 42.5197, -83.6959),
    (2801014300, "Florida Gulf Coast University", "grid.255962.f", None, 26.4625, -81.7729),
    (2800066368, "Alaska State Museum", "grid.450427.0", None, 58.3003, -134.4156),
    (2801998001, "Ireland Army Community Hospital", "grid.414829.2", None, 37.9006, -85.9419),
    (3146210015, "Embassy of Switzerland in Washington", "grid.483319.4", None, 38.9283, -77.0578),
]

FIELDS = [
    # name_search results for "Physics"
    (121332964, "Physics", "Top"),
    (61696701, "Engineering physics", "Sub"),
    (109214941, "Particle physics", "Sub"),
    (127413603, "Engineering", "Top"),
    (37914503, "Mathematical physics", "Sub"),
    (33332235, "Theoretical physics", "Sub"),
    (147789679, "Physical chemistry", "Sub"),
    (121864883, "Statistical physics", "Sub"),
    (159467904, "Chemical physics", "Sub"),
    (30475298, "Computational physics", "Sub"),
    # other top-level fields
    (71924100, "Medicine", "Top"),
    (86803240, "Biology", "Top"),
    (41008148, "Computer science", "Top"),
    (15744967, "Psychology", "Top"),
    (185592680, "Chemistry", "Top"),
    (33923547, "Mathematics", "Top"),
    (162324750, "Economics", "Top"),
    (144024400, "Sociology", "Top"),
]

TOPICS = {
    121332964: ["quantum", "particle", "field", "energy", "lattice", "spin", "scattering", "symmetry"],
    71924100: ["clinical", "patients", "trial", "therapy", "disease", "cohort", "treatment", "outcomes"],
    86803240: ["gene", "protein", "cell", "expression", "genome", "species", "evolution", "tissue"],
    41008148: ["algorithm", "network", "learning", "model", "graph", "data", "neural", "optimization"],
    15744967: ["cognitive", "behavior", "memory", "perception", "social", "emotion", "attention", "survey"],
    185592680: ["molecule", "reaction", "catalyst", "synthesis", "bond", "spectroscopy", "solvent", "crystal"],
    162324750: ["market", "policy", "labor", "growth", "price", "firms", "trade", "welfare"],
    144024400: ["collaboration", "team", "science", "citation", "innovation", "disruption", "career", "funding"],
}
SUBFIELDS = {f[0]: 121332964 for f in FIELDS if f[2] == "Sub"}

FIRST = ["Alice", "Bo", "Carlos", "Dana", "Emeka", "Fatima", "Gustav", "Hana", "Ivan", "Jun", "Kavya", "Liam",
         "Mei", "Nadia", "Omar", "Priya", "Quinn", "Rosa", "Sven", "Tariq", "Uma", "Viktor", "Wen", "Yara"]
LAST = ["Anders", "Brooks", "Chen", "Diaz", "Eze", "Fischer", "Garcia", "Haddad", "Ito", "Jensen", "Kim",
        "Lopez", "Mensah", "Novak", "Okafor", "Patel", "Rossi", "Sato", "Tanaka", "Wang", "Young", "Zhang"]
JOURNALS = [
    (137773608, "Nature", "0028-0836", "Nature Portfolio", "http://www.nature.com/nature/"),
    (3880285, "Science", "0036-8075", "American Association for the Advancement of Science", "http://www.sciencemag.org/"),
    (125754415, "Proceedings of the National Academy of Sciences of the United States of America", "0027-8424",
     "National Academy of Sciences", "http://www.pnas.org/"),
    (196734849, "Physical Review Letters", "0031-9007", "American Physical Society", "http://prl.aps.org/"),
]
CONFERENCES = [(1184914352, "AAAI", "National Conference on Artificial Intelligence"),
               (1130985203, "KDD", "Knowledge Discovery and Data Mining")]


def percentile(pop, v):
    return 100.0 * sum(1 for x in pop if x < v) / len(pop)


def disruption(pid, year, cites, cited_by):
    refs = cites[pid]
    citers_f = {c for c in cited_by[pid] if paper_year[c] > year}
    citers_r = set()
    for r in refs:
        citers_r |= {c for c in cited_by[r] if paper_year[c] > year}
    citers_f.discard(pid)
    citers_r.discard(pid)
    n_j = len(citers_f & citers_r)
    n_i = len(citers_f) - n_j
    n_k = len(citers_r - citers_f)
    total = n_i + n_j + n_k
    return None if total == 0 else (n_i - n_j) / total


def fmt(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(round(v, 6))
    return str(v)


def write(name, header, rows):
    with open(OUT / f"{name}.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


rng = random.Random(SEED)
OUT.mkdir(parents=True, exist_ok=True)

authors = []
used = set()
for i in range(N_AUTHORS):
    while True:
        name = f"{rng.choice(FIRST)} {rng.choice(LAST)}"
        if name not in used:
            break
    used.add(name)
    authors.append((2000000000 + 7919 * i, name, rng.choice(["male", "female", "unknown"])))

# papers, in publication order
paper_year = {}
papers = []
for i in range(N_PAPERS):
    pid = 1900000000 + 104729 * i
    year = 1990 + (i * 31) // N_PAPERS
    paper_year[pid] = year
    papers.append(pid)

topic_of = {}
field_rows = []
for pid in papers:
    top = rng.choice(list(TOPICS))
    topic_of[pid] = top
    chosen = {top}
    if top == 121332964 and rng.random() < 0.7:
        chosen.add(rng.choice(list(SUBFIELDS)))
    if rng.random() < 0.3:
        chosen.add(rng.choice([f[0] for f in FIELDS if f[2] == "Top"]))
    for f in sorted(chosen):
        field_rows.append((pid, f))

# citations only point to strictly earlier papers
cites = {p: set() for p in papers}
cited_by = {p: set() for p in papers}
for idx, pid in enumerate(papers):
    earlier = [q for q in papers[:idx] if paper_year[q] < paper_year[pid]]
    if not earlier:
        continue
    same_topic = [q for q in earlier if topic_of[q] == topic_of[pid]]
    k = min(len(earlier), rng.randint(0, 8))
    pool = same_topic if len(same_topic) >= k and rng.random() < 0.7 else earlier
    for q in rng.sample(pool, min(k, len(pool))):
        cites[pid].add(q)
        cited_by[q].add(pid)

# affiliations
inst_ids = [i[0] for i in INSTITUTIONS]
affil_rows = []
team = {}
insts_of = {}
for pid in papers:
    size = min(10, max(1, int(rng.expovariate(1 / 3.0)) + 1))
    members = rng.sample(authors, size)
    team[pid] = size
    insts = set()
    for order, a in enumerate(members, start=1):
        inst = rng.choice(inst_ids) if rng.random() < 0.9 else None
        if inst is not None:
            insts.add(inst)
        affil_rows.append((pid, a[0], inst, order))
    insts_of[pid] = len(insts)

scores = {p: disruption(p, paper_year[p], cites, cited_by) for p in papers}
cc = {p: len(cited_by[p]) for p in papers}
cc10 = {p: sum(1 for c in cited_by[p] if paper_year[c] <= paper_year[p] + 10) for p in papers}
cc5 = {p: sum(1 for c in cited_by[p] if paper_year[c] <= paper_year[p] + 5) for p in papers}
novelty = {p: round(rng.gauss(0, 1), 6) for p in papers}
conventionality = {p: round(rng.gauss(0, 1), 6) for p in papers}
cc_pop = list(cc.values())
ds_pop = [round(s, 6) for s in scores.values() if s is not None]
nov_pop = list(novelty.values())
conv_pop = list(conventionality.values())

paper_rows = []
for i, pid in enumerate(papers):
    words = TOPICS[topic_of[pid]]
    w = rng.sample(words, 4)
    title = f"{w[0].capitalize()} {w[1]} and {w[2]} in {w[3]} studies"
    abstract = (f"We study {w[0]} {w[1]} using {w[2]} methods. "
                f"Results on {w[3]} {rng.choice(words)} suggest new {rng.choice(words)} directions. "
                f"The {rng.choice(words)} analysis covers {team[pid]} teams.")
    year = paper_year[pid]
    if rng.random() < 0.8:
        j = rng.choice(JOURNALS)
        venue = (j[0], j[1], j[2], j[3], j[4], None, None, None)
        doc_type = "Journal"
    else:
        c = rng.choice(CONFERENCES)
        venue = (None, None, None, None, None, c[0], c[1], c[2])
        doc_type = "Conference"
    ds = scores[pid]
    ds_r = None if ds is None else round(ds, 6)
    paper_rows.append((
        pid, f"10.{1000 + i % 97}/fixture.{i:04d}", doc_type, year, f"{year}-{1 + i % 12:02d}-{1 + i % 28:02d}",
        team[pid], insts_of[pid], *venue,
        cc[pid], percentile(cc_pop, cc[pid]), cc10[pid], cc5[pid], len(cites[pid]),
        ds_r, None if ds_r is None else percentile(ds_pop, ds_r),
        novelty[pid], percentile(nov_pop, novelty[pid]),
        conventionality[pid], percentile(conv_pop, conventionality[pid]),
        title, abstract, None,
    ))

write("authors", ["author_id", "author_name", "author_gender"], authors)
write("fields", ["field_id", "field_name", "field_level"], FIELDS)
write("institutions", ["institution_id", "institution_name", "grid_id", "url", "latitude", "longitude"],
      INSTITUTIONS)
write("papers", [
    "paper_id", "doi", "doc_type", "year", "date", "author_count", "institution_count",
    "journal_id", "journal_name", "journal_issn", "journal_publisher", "journal_url",
    "conference_id", "conference_abbr_name", "conference_name",
    "citation_count", "citation_count_pct", "citation_count_10y", "citation_count_5y", "reference_count",
    "disruption_score", "disruption_score_pct", "novelty_score", "novelty_score_pct",
    "conventionality_score", "conventionality_score_pct", "title", "abstract", "abstract_embedding",
], paper_rows)
write("paper_citations", ["citing_paper_id", "cited_paper_id"],
      sorted((c, r) for c in papers for r in cites[c]))
write("paper_author_affiliations", ["paper_id", "author_id", "institution_id", "author_order"], affil_rows)

# per-field normalized citations and hit flags
by_field = {}
for pid, f in field_rows:
    by_field.setdefault(f, []).append(pid)
pf_rows = []
for pid, f in field_rows:
    peers = [cc[q] for q in by_field[f] if paper_year[q] == paper_year[pid]]
    mean = sum(peers) / len(peers)
    norm = None if mean == 0 else cc[pid] / mean
    rank = percentile([cc[q] for q in by_field[f]], cc[pid])
    pf_rows.append((pid, f, rank >= 99, rank >= 95, rank >= 90, None if norm is None else round(norm, 6)))
write("paper_fields", ["paper_id", "field_id", "is_hit_1pct", "is_hit_5pct", "is_hit_10pct",
                       "normalized_citations"], pf_rows)

# funding, clinical trials, news, patents, twitter
nct = [f"NCT{rng.randint(10**7, 10**8 - 1):08d}" for _ in range(12)]
nih = [f"R01{rng.choice(['CA', 'GM', 'HL', 'MH'])}{rng.randint(10**5, 10**6 - 1)}" for _ in range(15)]
nsf = [(str(rng.randint(10**6, 10**7 - 1)), f"{rng.randint(1995, 2020)}-0{rng.randint(1, 9)}-15",
        f"Collaborative research on {' '.join(rng.sample(TOPICS[144024400], 2))}") for _ in range(15)]
news = [(f"https://news.example.org/story/{i}", f"{rng.randint(2005, 2022)}-1{rng.randint(0, 2)}-0{rng.randint(1, 9)}",
         f"Study links {' and '.join(rng.sample(TOPICS[rng.choice(list(TOPICS))], 2))}") for i in range(12)]
patents = []
for i in range(20):
    words = TOPICS[rng.choice(list(TOPICS))]
    w = rng.sample(words, 3)
    year = rng.randint(1995, 2022)
    patents.append((f"{9000000 + 1237 * i}", rng.choice(["utility", "design"]), f"{year}-06-01", year,
                    f"System for {w[0]} {w[1]}", f"A method applying {w[0]} {w[1]} to {w[2]} problems.", None))
tweets = [(1300000000000000000 + 7 * i, f"{rng.randint(2012, 2022)}-0{rng.randint(1, 9)}-1{rng.randint(0, 9)}",
           f"https://twitter.com/i/web/status/{1300000000000000000 + 7 * i}") for i in range(25)]

write("nct", ["nct_id"], [(n,) for n in nct])
write("nih", ["nih_project_id"], [(n,) for n in nih])
write("nsf", ["nsf_award_id", "date", "title"], nsf)
write("newsfeed", ["newsfeed_id", "date", "title"], news)
write("patents", ["patent_id", "type", "date", "year", "title", "abstract", "abstract_embedding"], patents)
write("twitter", ["tweet_id", "date", "url"], tweets)


def link(name, col, ids, n):
    rows = set()
    while len(rows) < n:
        rows.add((rng.choice(papers), rng.choice(ids)))
    write(name, ["paper_id", col], sorted(rows))


link("paper_nct", "nct_id", nct, 15)
link("paper_nih", "nih_project_id", nih, 25)
link("paper_nsf", "nsf_award_id", [n[0] for n in nsf], 25)
link("paper_newsfeed", "newsfeed_id", [n[0] for n in news], 18)
link("paper_patents", "patent_id", [p[0] for p in patents], 30)
link("paper_twitter", "tweet_id", [t[0] for t in tweets], 40)
