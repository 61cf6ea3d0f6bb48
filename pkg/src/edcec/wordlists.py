"""Word inventories for the bundled synthetic corpus."""

COMMON_WORDS = """
the a an and or but if then so of to in on at by for with from as into over under
after before about between through during without within is was are were be been
has had have do did does will would can could should may might must shall not no
yes all any each every some many much more most other such only own same than too
very just also now here there when where why how what which who whom this that these
those it its they them their we our you your he him his she her i me my one two three
four five six seven eight nine ten first last next new old good great high long little
big small large young early late right left hard easy open close full free sure real
day night week year time way man woman child people world life hand part place case
point group work home house room water fire light dark road city town river hill field
tree stone door window table chair book letter paper story word name voice face head
eye heart mind body king queen ship horse dog bird fish bread wine salt gold iron
come go make take give find think know see look want tell ask feel seem leave call
keep hold bring begin turn show hear play run move live stand sit speak read write
walk wait send pay meet lead grow fall rise carry break
""".split()

# carrier words that introduce the planted rare words
TRIGGER_WORDS = "mister madam doctor captain visited named called beyond".split()

# real low-frequency words kept in the inventory next to generated ones
SEED_RARE_WORDS = """
mussulmans giaours cormorant quixotic halcyon obsequy saturnine lachrymose
perspicacity sesquipedalian tintinnabulation zephyrs
""".split()

_ONSETS = "b br c ch d dr f fl g gr h j k kl l m n p pl qu r s sh st t tr v w z".split()
_VOWELS = "a e i o u ai ea ou io".split()
_CODAS = "n r s th x l m nd rk st".split()


def pseudo_words(n: int, seed: int = 7) -> list[str]:
    """``n`` distinct pronounceable non-words, two or three syllables long."""
    import numpy as np

    rng = np.random.default_rng(seed)
    taken = set(COMMON_WORDS) | set(TRIGGER_WORDS) | set(SEED_RARE_WORDS)
    out: list[str] = []
    while len(out) < n:
        syl = int(rng.integers(2, 4))
        w = "".join(_ONSETS[rng.integers(len(_ONSETS))] + _VOWELS[rng.integers(len(_VOWELS))]
                    for _ in range(syl))
        if rng.random() < 0.5:
            w += _CODAS[rng.integers(len(_CODAS))]
        if w not in taken:
            taken.add(w)
            out.append(w)
    return out


def rare_inventory(n: int = 120, seed: int = 7) -> list[str]:
    base = list(SEED_RARE_WORDS[:n])
    return base + pseudo_words(n - len(base), seed)


def recognizer_lexicon(n_extra: int = 1000, seed: int = 11, exclude=()) -> list[str]:
    """In-lexicon words a corrupted rare word can snap to.

    The common and trigger words plus ``n_extra`` generated words that never
    occur in clean sentences, standing in for the long tail of a recognizer
    vocabulary.  Words in ``exclude`` (the rare inventory) are skipped.
    """
    banned = set(exclude) | set(SEED_RARE_WORDS)
    extra = [w for w in pseudo_words(n_extra + len(banned), seed) if w not in banned][:n_extra]
    return sorted(set(COMMON_WORDS) | set(TRIGGER_WORDS) | set(extra))
