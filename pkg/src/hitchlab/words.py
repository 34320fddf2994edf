"""Words in the surface-group generators.

A word is a tuple of nonzero ints: ``2k-1`` is ``A_k``, ``2k`` is ``B_k``
(``k`` counted from 1) and a negative entry is the inverse letter.
"""

from __future__ import annotations

import re

import numpy as np

from .hyperbolic import chain, inv

Word = tuple


def reduce(word):
    out = []
    for letter in word:
        if out and out[-1] == -letter:
            out.pop()
        else:
            out.append(letter)
    return tuple(out)


def invert(word):
    return tuple(-x for x in reversed(word))


def mul(*words):
    return reduce(tuple(x for w in words for x in w))


def relator(genus):
    """``A_1 B_1 A_1^-1 B_1^-1 ... A_g B_g A_g^-1 B_g^-1``."""
    out = []
    for k in range(1, genus + 1):
        a, b = 2 * k - 1, 2 * k
        out += [a, b, -a, -b]
    return tuple(out)


def evaluate(word, generators):
    """Matrix of ``word`` for a stack of generator matrices (index ``|x|-1``)."""
    gens = np.asarray(generators)
    inverses = inv(gens)
    mats = [gens[x - 1] if x > 0 else inverses[-x - 1] for x in word]
    return chain(mats)


def letter_name(x):
    k = (abs(x) + 1) // 2
    name = f"{'A' if abs(x) % 2 else 'B'}{k}"
    return name if x > 0 else name + "^-1"


def format_word(word):
    return " ".join(letter_name(x) for x in word) or "1"


_TOKEN = re.compile(r"([AB])(\d+)(\^-1|')?")


def parse(text):
    """Parse ``"A1 B1 A1^-1"`` (or ``A1'`` for inverses) into a word."""
    word = []
    for tok in text.replace(",", " ").split():
        m = _TOKEN.fullmatch(tok)
        if not m:
            raise ValueError(f"bad generator token {tok!r}")
        k = int(m.group(2))
        x = 2 * k - 1 if m.group(1) == "A" else 2 * k
        word.append(-x if m.group(3) else x)
    return tuple(word)
