"""Seeded synthetic corpora.

Three generators: a 10-intent classroom-style benchmark with number
entities, a distribution-shifted counterpart of it (more side talk, drifted
vocabulary, shorter utterances), and dataset pairs with pinned class counts
and word totals for exercising corpus statistics and shift reports.
"""

from __future__ import annotations

import re

import numpy as np

from .corpus import Dataset, Entity, Utterance, tokenize
from .featurizer import DenseProvider

__all__ = [
    "BENCHMARK_INTENTS",
    "PLANTING_DEPLOYMENT_COUNTS",
    "PLANTING_POC_COUNTS",
    "WATERING_DEPLOYMENT_COUNTS",
    "WATERING_POC_COUNTS",
    "make_benchmark",
    "make_centroid_provider",
    "make_shifted",
    "make_table_pair",
    "make_token_centroid_provider",
]

NUMBER_WORDS = [
    "one", "two", "three", "four", "five", "six", "seven", "eight", "nine",
    "ten", "eleven", "twelve", "thirteen", "fourteen", "fifteen", "twenty",
]

_SLOTS = {
    "number": NUMBER_WORDS,
    "flower": ["flowers", "roses", "tulips", "daisies", "sunflowers"],
    "lead": ["okay", "well", "oh", "alright", "hmm", "so"],
    "name": ["oscar", "everyone", "friends", "buddy", "team"],
    "greet_word": ["hi", "hello", "hey"],
}

# {number} slots carry a number entity; everything else is plain text.
# Each intent needs comfortably more than 60 distinct realizations so the
# default benchmark has no repeated texts.
_GRAMMAR: dict[str, list[str]] = {
    "affirm": [
        "yes", "yeah", "yes please", "sure", "of course", "that is right",
        "yeah totally", "i think so", "exactly", "sure thing", "you got it",
        "yes that looks right", "yeah i agree", "yes yes",
        "that is correct", "{lead} yes", "{lead} sure",
        "{lead} that sounds right", "{lead} yes exactly", "yes {name}",
        "{lead} yeah {name}", "{lead} i think so",
    ],
    "deny": [
        "no", "nope", "no thanks", "not really", "i do not think so",
        "that is wrong", "never", "no way", "definitely not",
        "no that is not it", "not that one", "i disagree", "{lead} no",
        "{lead} not really", "{lead} no way", "no {name}",
        "{lead} no {name}", "no no {name}",
    ],
    "greet": [
        "good morning", "hey hey", "morning", "hello hello",
        "good morning {name}", "{greet_word}", "{greet_word} {name}",
        "{greet_word} there", "{greet_word} there {name}",
        "{lead} {greet_word}", "{greet_word} {greet_word} {name}",
    ],
    "goodbye": [
        "bye", "goodbye", "bye bye", "see you later", "farewell",
        "see you next time", "that was fun goodbye", "time to go bye",
        "see you soon", "bye for now", "gotta go bye",
        "see you tomorrow", "we are done goodbye", "bye {name}",
        "goodbye {name}", "see you later {name}", "{lead} bye",
        "{lead} bye bye", "{lead} goodbye {name}",
    ],
    "counting": [
        "{number}", "{number} {flower}", "i count {number}",
        "i count {number} {flower}", "there are {number} {flower}",
        "we have {number} {flower}", "i see {number}", "that makes {number}",
        "{number} plus {number}", "{number} plus {number} is {number}",
        "we planted {number} {flower}", "let us count to {number}",
        "i think it is {number}", "maybe {number}",
    ],
    "ask-number": [
        "what number is it", "what number comes next", "how many do we need",
        "which number should we pick", "what number do you think",
        "how many are left", "can you tell me the number",
        "which number is missing", "what number should we try",
        "how many more to go", "how many pots do we need",
        "how many {flower} do we need", "how many {flower} are there",
        "how many {flower} now", "what comes after {number}",
        "what number {name}", "tell us the number {name}",
        "{lead} how many {flower}",
    ],
    "answer-flowers": [
        "{flower}", "maybe {flower}", "i would say {flower}",
        "{flower} i think", "pretty {flower}", "some {flower}",
        "lots of {flower}", "{flower} would look nice", "how about {flower}",
        "definitely {flower}", "i bet {flower}", "{flower} for sure",
        "what about {flower}", "{lead} {flower}", "{flower} maybe",
    ],
    "help-request": [
        "help", "can you help me", "i need help", "help me please",
        "i am stuck", "can you help us", "we need some help",
        "how does this work", "i do not get it", "can you show me",
        "what do i do now", "we are stuck", "this is confusing",
        "i cannot do this", "can someone help", "i need a hint",
        "give us a hint", "show us how", "i am so stuck",
        "how do we start", "help us {name}", "{name} can you help",
        "help please {name}", "what do we do {name}", "{lead} help me",
        "{lead} i am stuck", "{lead} can you help", "{lead} we need help",
    ],
    "next-step": [
        "next", "next one", "what is next", "let us move on",
        "skip this one", "next step please", "can we skip this", "move on",
        "go to the next one", "let us keep going", "next please",
        "on to the next", "keep going", "ready for the next one",
        "next round", "skip it", "onwards then", "move to the next",
        "lets go on", "next question please", "{lead} next one",
        "next {name}", "{lead} skip this one", "next one {name}",
        "{lead} move on", "{lead} keep going", "what is next {name}",
        "skip this one {name}",
    ],
    "out-of-scope": [
        "look at the whiteboard", "my shoe is untied",
        "can we go outside after this", "what time is lunch",
        "stop poking me", "i like your backpack", "she took my pencil",
        "this chair is wobbly", "the projector is not working",
        "did you watch the movie last night", "my mom is picking me up",
        "it is raining outside", "i lost my eraser", "wait for the teacher",
        "that desk is taken", "somebody turned off the lights",
        "whose turn is it anyway", "the marker smells funny",
        "my brother plays this at home", "are we on tv",
        "the floor is lava", "i can see the playground from here",
        "that cloud looks like a bunny", "who ate my snack",
        "my badge fell off", "this sticker is cool", "when is art class",
        "the screen went dark again", "my sock has a hole",
        "is that a real camera", "the lights are buzzing",
        "someone is knocking on the door", "i heard the bell ring",
        "my glasses are dirty", "the rug is itchy",
        "do we get stickers today", "my juice box is empty",
        "the window is foggy", "my desk is wobbling",
        "that poster fell down", "the hallway is loud today",
        "my crayon snapped in half", "is the door locked",
        "somebody left the faucet on", "{lead} look over there",
        "{lead} look at the camera", "{lead} someone is outside",
    ],
}

BENCHMARK_INTENTS = sorted(_GRAMMAR)

# extra side talk only the shifted corpus draws from
_SHIFT_OOS_EXTRA = [
    "the facilitator said to wait", "look at the grid on the wall",
    "can i use the marker", "he is not listening again",
    "my water bottle spilled", "is it recess yet", "scoot over a bit",
    "the tablet froze again", "who drew on my paper",
    "i want the blue chair", "quit hogging the pots",
    "miss can you come here",
]

_SHIFT_SWAPS = {
    "yes": "yep", "yeah": "ya", "no": "nah", "nope": "naw", "hello": "heya",
    "hi": "yo", "bye": "byee", "flowers": "blossoms", "help": "halp",
    "next": "nex", "sure": "surely", "okay": "ok", "please": "pls",
    "teacher": "miss", "number": "numba", "count": "countin",
}

_SLOT_RE = re.compile(r"\{(\w+)\}")


def _render(template: str, rng: np.random.Generator) -> tuple[str, list[Entity]]:
    parts: list[str] = []
    entities: list[Entity] = []
    offset = 0
    for piece in re.split(r"(\{\w+\})", template):
        if not piece:
            continue
        m = _SLOT_RE.fullmatch(piece)
        if m:
            name = m.group(1)
            word = str(rng.choice(_SLOTS[name]))
            if name == "number":
                entities.append(Entity(start=offset, end=offset + len(word),
                                       entity="number", value=word))
            parts.append(word)
            offset += len(word)
        else:
            parts.append(piece)
            offset += len(piece)
    return "".join(parts), entities


def _sample_intent(intent: str, templates: list[str], n: int, seen: set[str],
                   rng: np.random.Generator, id_prefix: str,
                   keep_entities: bool = True) -> list[Utterance]:
    """n utterances with texts not in `seen`; duplicates allowed as a last
    resort so callers always get exactly n."""
    out: list[Utterance] = []
    fresh: list[tuple[str, list[Entity]]] = []
    for _ in range(n * 200):
        if len(fresh) == n:
            break
        text, entities = _render(str(rng.choice(templates)), rng)
        if text in seen:
            continue
        seen.add(text)
        fresh.append((text, entities))
    while len(fresh) < n:
        fresh.append(_render(str(rng.choice(templates)), rng))
    for i, (text, entities) in enumerate(fresh):
        out.append(Utterance(
            id=f"{id_prefix}-{intent}-{i}",
            text=text,
            intent=intent,
            entities=tuple(entities) if keep_entities else (),
        ))
    return out


def make_benchmark(seed: int = 0, per_intent: int = 60) -> Dataset:
    """10 intents (one of them out-of-scope), ~per_intent utterances each."""
    rng = np.random.default_rng(seed)
    seen: set[str] = set()
    utts: list[Utterance] = []
    for intent in BENCHMARK_INTENTS:
        utts.extend(_sample_intent(intent, _GRAMMAR[intent], per_intent,
                                   seen, rng, id_prefix="bench"))
    return Dataset(name="synthetic-benchmark", utterances=tuple(utts))


def _drift_words(text: str, rng: np.random.Generator, swap_p: float,
                 typo_p: float, max_words: int) -> str:
    words = text.split()
    if len(words) > max_words:
        start = int(rng.integers(0, len(words) - max_words + 1))
        words = words[start:start + max_words]
    out = []
    for w in words:
        if w in _SHIFT_SWAPS and rng.random() < swap_p:
            out.append(_SHIFT_SWAPS[w])
        elif len(w) >= 4 and rng.random() < typo_p:
            out.append(w[:-1])
        else:
            out.append(w)
    return " ".join(out)


def make_shifted(seed: int = 0, per_intent: int = 30,
                 oos_share: float = 0.2) -> Dataset:
    """Shifted counterpart of make_benchmark: out-of-scope share doubled
    (0.1 -> 0.2 at defaults), drifted vocabulary, shorter utterances.
    Entity annotations are dropped; the corpus is meant for testing only.
    """
    rng = np.random.default_rng(seed)
    seen: set[str] = set()
    utts: list[Utterance] = []
    regular = [i for i in BENCHMARK_INTENTS if i != "out-of-scope"]
    for intent in regular:
        fresh = _sample_intent(intent, _GRAMMAR[intent], per_intent, seen,
                               rng, id_prefix="shift", keep_entities=False)
        for u in fresh:
            drifted = _drift_words(u.text, rng, swap_p=0.5, typo_p=0.1,
                                   max_words=3)
            utts.append(Utterance(id=u.id, text=drifted, intent=u.intent))
    n_regular = len(utts)
    n_oos = round(n_regular * oos_share / (1.0 - oos_share))
    oos_templates = _GRAMMAR["out-of-scope"] + _SHIFT_OOS_EXTRA
    fresh = _sample_intent("out-of-scope", oos_templates, n_oos, seen, rng,
                           id_prefix="shift", keep_entities=False)
    for u in fresh:
        drifted = _drift_words(u.text, rng, swap_p=0.3, typo_p=0.1,
                               max_words=4)
        utts.append(Utterance(id=u.id, text=drifted, intent=u.intent))
    return Dataset(name="synthetic-shifted", utterances=tuple(utts))


# --------------------------------------------------------------------------
# fixed-count fixture pairs

PLANTING_POC_COUNTS = {
    "intro-meadow": 23, "answer-flowers": 110, "answer-valid": 176,
    "answer-invalid": 95, "intro-game": 134, "help-affirm": 41,
    "everyone-understand": 22, "oscar-understand": 25, "ask-number": 34,
    "counting": 418, "affirm": 144, "deny": 125, "next-step": 25,
    "out-of-scope": 555,
}  # 1927 samples, 14 intents

PLANTING_DEPLOYMENT_COUNTS = {
    "intro-meadow": 7, "answer-flowers": 13, "answer-valid": 17,
    "intro-game": 78, "help-affirm": 4, "everyone-understand": 11,
    "oscar-understand": 15, "ask-number": 18, "counting": 581,
    "affirm": 370, "deny": 54, "out-of-scope": 1005,
}  # 2173 samples; next-step and answer-invalid never observed

WATERING_POC_COUNTS = {
    "answer-water": 69, "answer-valid": 201, "answer-invalid": 91,
    "intro-game": 102, "everyone-understand": 44, "oscar-understand": 25,
    "ask-number": 73, "counting": 476, "affirm": 165, "deny": 157,
    "next-step": 34, "out-of-scope": 601, "goodbye": 77,
}  # 2115 samples, 13 intents

WATERING_DEPLOYMENT_COUNTS = {
    "answer-water": 9, "answer-valid": 6, "intro-game": 30,
    "everyone-understand": 11, "oscar-understand": 15, "ask-number": 21,
    "counting": 581, "affirm": 370, "deny": 54, "out-of-scope": 1005,
    "goodbye": 20,
}  # 2122 samples

_TABLE_WORD_TOTALS = {
    ("planting", "poc"): 10141,
    ("planting", "deployment"): 10433,
    ("watering", "poc"): 10469,
    ("watering", "deployment"): 9508,
}

_TABLE_COUNTS = {
    ("planting", "poc"): PLANTING_POC_COUNTS,
    ("planting", "deployment"): PLANTING_DEPLOYMENT_COUNTS,
    ("watering", "poc"): WATERING_POC_COUNTS,
    ("watering", "deployment"): WATERING_DEPLOYMENT_COUNTS,
}

_WORD_POOL = [
    "the", "we", "you", "flowers", "water", "count", "plant", "game",
    "okay", "look", "pot", "number", "grid", "help", "next", "teddy",
    "bear", "garden", "soil", "seed",
]


def _build_counted(name: str, counts: dict[str, int],
                   total_words: int) -> Dataset:
    """Exact per-class sample counts and an exact corpus word total.

    The word total is spread as evenly as possible: with n samples and
    q, r = divmod(total_words, n), the first r samples get q+1 words.
    """
    n = sum(counts.values())
    q, r = divmod(total_words, n)
    utts = []
    i = 0
    for intent, c in counts.items():
        for _ in range(c):
            w = q + 1 if i < r else q
            words = [_WORD_POOL[(i + 3 * j) % len(_WORD_POOL)]
                     for j in range(w)]
            utts.append(Utterance(id=f"{name}-{i}", text=" ".join(words),
                                  intent=intent))
            i += 1
    return Dataset(name=name, utterances=tuple(utts))


def make_table_pair(game: str = "planting") -> tuple[Dataset, Dataset]:
    """(clean, deployment) datasets with the pinned class counts and word
    totals for the named game."""
    if game not in {"planting", "watering"}:
        raise ValueError(f"unknown game {game!r}")
    poc = _build_counted(f"{game}-poc", _TABLE_COUNTS[(game, "poc")],
                         _TABLE_WORD_TOTALS[(game, "poc")])
    dep = _build_counted(f"{game}-deployment",
                         _TABLE_COUNTS[(game, "deployment")],
                         _TABLE_WORD_TOTALS[(game, "deployment")])
    return poc, dep


# --------------------------------------------------------------------------
# class-informative dense fixtures


def make_centroid_provider(ds: Dataset, dim: int = 16, seed: int = 0,
                           noise: float = 0.5) -> DenseProvider:
    """Sentence-table provider mapping each utterance to its intent's
    centroid plus Gaussian noise. Deliberately label-informative: it gives
    dense-only models genuine signal."""
    rng = np.random.default_rng(seed)
    intents = sorted({u.intent for u in ds.utterances})
    centroids = {it: rng.normal(size=dim) for it in intents}
    table = {}
    for u in ds.utterances:
        table[u.text] = (centroids[u.intent]
                         + noise * rng.normal(size=dim)).astype(np.float32)
    return DenseProvider.from_table("sentence-table", dim, table)


def make_token_centroid_provider(ds: Dataset, dim: int = 16, seed: int = 0,
                                 noise: float = 0.5) -> DenseProvider:
    """Token-table provider covering exactly the corpus vocabulary: each
    token maps to the mean of the intent centroids it occurs under, plus
    noise. Words outside the corpus read back as zero vectors, the usual
    fate of out-of-vocabulary words under a fixed pretrained table."""
    rng = np.random.default_rng(seed)
    intents = sorted({u.intent for u in ds.utterances})
    centroids = {it: rng.normal(size=dim) for it in intents}
    sums: dict[str, np.ndarray] = {}
    counts: dict[str, int] = {}
    for u in ds.utterances:
        for tok in tokenize(u.text):
            if tok not in sums:
                sums[tok] = np.zeros(dim)
                counts[tok] = 0
            sums[tok] += centroids[u.intent]
            counts[tok] += 1
    table = {tok: (vec_sum / counts[tok]
                   + noise * rng.normal(size=dim)).astype(np.float32)
             for tok, vec_sum in sums.items()}
    return DenseProvider.from_table("token-table", dim, table)
