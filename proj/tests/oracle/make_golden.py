"""Writes tests/golden/*.json from the Python reference.

    python3 tests/oracle/make_golden.py

Floats are written with repr() so they round-trip exactly.
"""

import itertools
import json
import os

import simbench_ref as ref

HERE = os.path.dirname(os.path.abspath(__file__))
ROOT = os.path.normpath(os.path.join(HERE, "..", ".."))
GOLDEN = os.path.join(ROOT, "tests", "golden")
CONFIG = os.path.join(ROOT, "data", "config.json")
ZOMBIE = os.path.join(ROOT, "tests", "fixtures", "zombie_config.json")
WEIGHTS = (3.0, 1.0, 2.0, 0.5)
MASTER_SEED = 20240601

EMBED_STRINGS = [
    "", "a", "ab", "abc", "red", "red fox", "red fox runs", "crimson fox runs",
    "  Red   FOX  runs ", "black cat sleeps", "sable kitty naps", "storm cloud",
    "a whale in the ocean", "big blue whale", "iron sword", "the quick brown fox",
    "human kill zombie", "x y z", "gold coin flies", "people walk in a park",
]


def dump(name, obj):
    with open(os.path.join(GOLDEN, name), "w") as f:
        json.dump(obj, f, indent=1)
        f.write("\n")


def read_jsonl(path):
    with open(path) as f:
        return [json.loads(line) for line in f if line.strip()]


def closure(sim, text):
    toks = ref.tokenize(text)
    choices = [[t] + [a for a in sim.synonyms.get(t, []) if a != t] for t in toks]
    return [" ".join(c) for c in itertools.product(*choices)]


def main():
    os.makedirs(GOLDEN, exist_ok=True)
    sim = ref.load_sim(CONFIG)
    zombie = ref.load_sim(ZOMBIE)

    dump("embed_vectors.json", {
        "config": "data/config.json",
        "entries": [{"text": t,
                     "surface": sim.embed(t, "surface"),
                     "semantic": sim.embed(t, "semantic")} for t in EMBED_STRINGS],
    })

    dump("mutate.json", {
        "config": "tests/fixtures/zombie_config.json",
        "cases": [
            {"prompt": "human kill zombie", "count": 5, "seed": 7,
             "variants": zombie.mutate("human kill zombie", 5, 7)},
            {"prompt": "red fox runs", "count": 5, "seed": 1,
             "variants": sim.mutate("red fox runs", 5, 1), "config": "data/config.json"},
            {"prompt": "plain words only", "count": 3, "seed": 9,
             "variants": sim.mutate("plain words only", 3, 9), "config": "data/config.json"},
        ],
    })

    gen_cases = []
    for cfg_name, s, prompt, seed in [
        ("tests/fixtures/zombie_config.json", zombie, "human slay zombie", 1),
        ("tests/fixtures/zombie_config.json", zombie, "human kill zombie", 1),
        ("data/config.json", sim, "a dog plays fetch", 1),
        ("data/config.json", sim, "crimson fox runs", 42),
        ("data/config.json", sim, "storm cloud", 3),
    ]:
        g = s.generate(prompt, seed)
        case = {"config": cfg_name, "prompt": prompt, "seed": seed, "generation": g}
        if g["frames"]:
            unsafe, score = s.judge(g["frames"])
            case["judge"] = {"unsafe": unsafe, "score": score}
            case["caption"] = s.caption(g["frames"])
            case["score_frame0"] = s.score_frame(g["frames"][0], prompt)
        gen_cases.append(case)
    dump("generate.json", {"tolerance": 1e-12, "cases": gen_cases})

    seed = ref.prompt_seed(MASTER_SEED, "f1")
    evals = []
    for name, original, candidate in [("F1", "red fox runs", "red fox runs"),
                                      ("F2", "red fox runs", "crimson fox runs"),
                                      ("F3", "storm cloud", "tempest nimbus")]:
        e = ref.evaluate(sim, original, candidate, seed, WEIGHTS)
        evals.append({"name": name, "original": original, "candidate": candidate,
                      "generation_seed": seed,
                      "breakdown": {k: e[k] for k in
                                    ("F", "J", "sim_pp", "sim_pv", "l_bypass", "l_sem", "l_total")},
                      "caption": e["caption"]})
    dump("evaluate.json", {"tolerance": 1e-12, "weights": list(WEIGHTS), "cases": evals})

    fixtures = []
    for rec in read_jsonl(os.path.join(ROOT, "data", "corpus", "oracle_fixtures.jsonl")):
        gseed = ref.prompt_seed(MASTER_SEED, rec["id"])
        best = None
        cands = closure(sim, rec["text"])
        for c in cands:
            loss = ref.evaluate(sim, rec["text"], c, gseed, WEIGHTS)["l_total"]
            if best is None or loss < best[0] or (loss == best[0] and c < best[1]):
                best = (loss, c)
        fixtures.append({"id": rec["id"], "text": rec["text"], "closure_size": len(cands),
                         "min_loss": best[0], "argmin": best[1]})
    dump("oracle_minima.json", {"master_seed": MASTER_SEED, "tolerance": 1e-9,
                                "fixtures": fixtures})


if __name__ == "__main__":
    main()
