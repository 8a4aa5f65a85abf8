"""Regenerate the checked-in fixtures deterministically.

Writes fixtures/fixture_dataset.jsonl, fixtures/mock_fixtures.json,
fixtures/taxonomy.json and fixtures/fixture_config.json. No RNG: content is
a function of thread index only, so reruns are byte-identical.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from threadsmith.embeddings import write_embedding_file

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "fixtures"

# (community, keyword-rich body pool); every body mentions a taxonomy word
BODIES = {
    "camping": [
        "Heading out to the ridge camp this weekend. Which tent handles wind best?",
        "Low dome tent, every time. Stake every corner and point it into the wind.",
        "The trail up there is exposed, bring extra guylines for the tent.",
        "I cook over the fire at camp. A dutch oven for bread is worth the weight.",
        "Second the dome. My tent on that trail survived a 40 mph night.",
        "Thanks all, packing extra stakes and a low tent for the camp.",
        "Anyone tried the north trail in spring? Mud up to the ankles last year.",
        "Mud season is real.\nGaiters saved my camp shoes in April.",
        "Bring trail runners and accept wet feet, that is my camp rule.",
    ],
    "baking": [
        "My first sourdough came out dense. The dough barely rose overnight. Underproofed?",
        "Sounds underproofed. Let the dough double before you shape the bread.",
        "Check your oven temperature with a separate thermometer, mine ran 20 degrees cold.",
        "Rye dough behaves differently, it will never rise like wheat bread.",
        "I proof the dough in the oven with just the light on, works all winter.",
        "Thanks, longer bulk fermentation fixed the bread. Open crumb at last.",
        "Scoring patterns: does depth matter or is it all decoration on the bread?",
        "Depth matters for the ear.\nA shallow slash # at an angle # opens better.",
        "My oven spring doubled when I started baking the bread on a steel.",
    ],
}

TITLES = {
    "camping": [
        "Tent advice for a windy ridge",
        "Dome or tunnel for exposed sites",
        "Spring mud on the north trail",
        "Cooking setups for long trips",
        "First overnight with new gear",
        "Stakes keep pulling out",
        "Solo camp safety basics",
        "Rainfly condensation fixes",
        "Best season for the high loop",
        "Packing list sanity check",
        "Campfire bread experiments",
        "Wind shelter placement",
    ],
    "baking": [
        "Dense first sourdough loaf",
        "Oven temperature mysteries",
        "Rye starter questions",
        "Scoring depth and the ear",
        "Winter proofing tricks",
        "Baking steel results",
        "Overnight bulk fermentation",
        "Crumb too tight, why",
        "Dutch oven versus steel",
        "Hydration for beginners",
        "Whole wheat conversion",
        "Starter smells like acetone",
    ],
}

# thread shapes as (parent index or None) per post; index 0 is the opener
SHAPES = [
    [None, 0, 1],  # chain of 3
    [None, 0, 0, 0],  # star of 4
    [None, 0, 1, 0, 2],  # mixed tree of 5
    [None, 0],  # pair
]


def make_thread(community: str, i: int) -> dict:
    shape = SHAPES[i % len(SHAPES)]
    pool = BODIES[community]
    canonical = i % 2 == 0
    posts = []
    for j, parent in enumerate(shape):
        if canonical:
            pid = "post" if j == 0 else f"comment-{j}"
            user = f"user-{(j % 3) + 1}"
            parent_id = None if parent is None else ("post" if parent == 0 else f"comment-{parent}")
        else:
            # raw-style ids exercise normalization at load time
            pid = f"node{j}"
            user = ["alice", "bob", "carol"][j % 3]
            parent_id = None if parent is None else f"node{parent}"
        posts.append(
            {
                "id": pid,
                "user": user,
                "parent": parent_id,
                "content": pool[(i + j) % len(pool)],
            }
        )
    return {
        "community": community,
        "thread_id": f"{community}-{i}",
        "title": TITLES[community][i % len(TITLES[community])],
        "posts": posts,
    }


VALID_SCAFFOLD = "\n".join(
    [
        "title: Planning a windy ridge overnight",
        "post # user-1 # NA # The user asks which tent will hold up to strong wind at an exposed camp.",
        "comment-1 # user-2 # post # The user recommends a low dome tent and mentions baking bread in a dutch oven at camp.",
        "comment-2 # user-1 # comment-1 # The user thanks them and asks whether extra stakes are worth the weight.",
    ]
)

INVALID_SCAFFOLD = "\n".join(
    [
        "title: Gear list gone sideways",
        "post # user-1 # NA # The user starts planning the trip gear list.",
        "comment-2 # user-2 # comment-1 # The user replies to a post that does not exist yet.",
    ]
)

VALID_THREAD = "\n".join(
    [
        "title: Which tent for a windy ridge camp?",
        "post # user-1 # NA # Taking my tent up the exposed ridge next weekend. Which shape holds best in wind?",
        "comment-1 # user-2 # post # Low dome, always. And pack bread dough, baking in the fire pit oven is the best part of camp.",
        "comment-2 # user-1 # comment-1 # Will do. Doubling the stakes too.",
    ]
)

INVALID_THREAD = "\n".join(
    [
        "title: Duplicate id mess",
        "post # user-1 # NA # First try at this trail.",
        "comment-1 # user-2 # post # Nice, which oven did you pack?",
        "comment-1 # user-3 # post # Same id twice, not a valid thread.",
    ]
)

MOCK_FIXTURES = {
    "extract-topics": [
        "camping, gear",
        "camping, food",
        "gear, food",
        "camping, gear, food",
    ],
    "summarize": [
        "The user asks a practical question about their setup.",
        "The user shares advice drawn from their own experience.",
        "The user thanks the others and adds a follow-up detail.",
    ],
    # valid/invalid alternation pins the success rate at exactly 0.5
    "generate-scaffold": [VALID_SCAFFOLD, INVALID_SCAFFOLD],
    "generate-thread": [VALID_THREAD, INVALID_THREAD],
    "first-post": [
        "Heading up the exposed ridge with my tent this weekend and the wind looks rough. What keeps camp standing?",
        "My first loaf of bread out of the dutch oven came out dense. The dough never rose. What went wrong?",
    ],
    "next-post": [
        "Go with a low dome and double the stakes. Mine survived worse on that trail.",
        "Knead the dough longer and let the oven heat fully before the bread goes in.",
        "Thanks, that makes sense. I will try it on the next trip and report back.",
    ],
    "judge-path": [
        "EXPLANATION: Each reply answers its parent directly and stays on topic.\nANSWER: The answer is yes.",
        "EXPLANATION: The last reply changes the subject completely.\nANSWER: The answer is no.",
    ],
    "classify-topics": ["camping: 0.9\nbaking: 0.6"],
}

TAXONOMY = {
    "baking": ["bread", "dough", "oven"],
    "camping": ["camp", "tent", "trail"],
}

FIXTURE_CONFIG = {
    "dataset": "fixtures/fixture_dataset.jsonl",
    "out_dir": "out/fixture-run",
    "seed": 7,
    "topic_sampling": ["ind", "cond"],
    "mode": ["baseline", "scaffold-fewshot"],
    "content_mode": "few",
    "n_train": 4,
    "m_synth": 8,
    "num_examples": 2,
    "backend": "mock",
    "backend_fixtures": "fixtures/mock_fixtures.json",
    "classifier": "keyword",
    "taxonomy": "fixtures/taxonomy.json",
    "embeddings": "builtin",
    "mauve_clusters": 2,
    "realism_threads": 4,
    "realism_paths": 2,
    "content_pool_size": 4,
}


def write_gaussian_embeddings(path: Path) -> None:
    """Two well-separated clouds (centers 10 apart, sigma 0.01, d=8)."""
    rng = np.random.default_rng(20240817)
    dim, per_side, sigma = 8, 40, 0.01
    center_b = np.zeros(dim)
    center_b[0] = 10.0
    items = []
    for i in range(per_side):
        items.append((f"real-{i}", rng.normal(0.0, sigma, dim)))
    for i in range(per_side):
        items.append((f"synth-{i}", center_b + rng.normal(0.0, sigma, dim)))
    write_embedding_file(path, items, dim)


def main() -> None:
    FIXTURES.mkdir(exist_ok=True)
    lines = [
        json.dumps(make_thread(community, i), sort_keys=True, ensure_ascii=False)
        for community in ("camping", "baking")
        for i in range(12)
    ]
    (FIXTURES / "fixture_dataset.jsonl").write_text("\n".join(lines) + "\n", encoding="utf-8")
    (FIXTURES / "mock_fixtures.json").write_text(
        json.dumps(MOCK_FIXTURES, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )
    (FIXTURES / "taxonomy.json").write_text(
        json.dumps(TAXONOMY, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    (FIXTURES / "fixture_config.json").write_text(
        json.dumps(FIXTURE_CONFIG, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    write_gaussian_embeddings(FIXTURES / "embeddings_gaussian.txt")
    print(f"wrote fixtures to {FIXTURES}")


if __name__ == "__main__":
    main()
