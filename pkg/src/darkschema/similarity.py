"""Column/table name similarity helpers."""

from __future__ import annotations

import re


def levenshtein(a: str, b: str) -> int:
    if len(a) < len(b):
        a, b = b, a
    previous = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        current = [i]
        for j, cb in enumerate(b, start=1):
            current.append(min(previous[j] + 1, current[j - 1] + 1, previous[j - 1] + (ca != cb)))
        previous = current
    return previous[-1]


def normalize_name(name: str) -> str:
    """Lower-case and drop everything but letters and digits."""
    return re.sub(r"[^0-9a-z]", "", name.lower())


MIN_CONTAINMENT_LENGTH = 3


def name_similarity(a: str, b: str) -> float:
    """1.0 on a full match, 0.8 when one name contains the other, else 1 - lev/maxlen."""
    x, y = normalize_name(a), normalize_name(b)
    if not x or not y:
        return 0.0
    if x == y:
        return 1.0
    short, long_ = sorted((x, y), key=len)
    if len(short) >= MIN_CONTAINMENT_LENGTH and short in long_:
        return 0.8
    return max(0.0, 1.0 - levenshtein(x, y) / max(len(x), len(y)))


def strip_id_suffix(name: str) -> str:
    stem = re.sub(r"[_\s]*id$", "", name, flags=re.IGNORECASE)
    return stem.rstrip("_ ")


def plural_variants(stem: str) -> set[str]:
    s = normalize_name(stem)
    if not s:
        return set()
    out = {s, s + "s", s + "es"}
    if s.endswith("y"):
        out.add(s[:-1] + "ies")
    return out


def names_match_table(stem: str, table_name: str) -> bool:
    """Singular/plural tolerant match between a column stem and a table name."""
    t = normalize_name(table_name)
    return bool(t) and (t in plural_variants(stem) or normalize_name(stem) in plural_variants(t))
