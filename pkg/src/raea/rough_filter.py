"""Rule-based blocking: concatenate category hierarchies (and titles on the
candidate side), then apply per-category regular expressions.

Rule file: one rule per line, ``query_pattern<TAB>candidate_pattern``; blank
lines and lines starting with ``#`` are ignored.  Patterns are matched with
``re.search`` against lowercased text.
"""

import csv
import re
from dataclasses import dataclass, field


class RuleError(ValueError):
    pass


@dataclass
class ProductRecord:
    id: str
    title: str = ""
    categories: list = field(default_factory=list)
    attrs: dict = field(default_factory=dict)


@dataclass
class MatchRule:
    query_category_pattern: str
    candidate_pattern: str
    line: int = 0

    def __post_init__(self):
        try:
            self._q = re.compile(self.query_category_pattern)
            self._c = re.compile(self.candidate_pattern)
        except re.error as exc:
            raise RuleError(f"rule on line {self.line}: {exc}") from None

    def matches_query(self, text):
        return self._q.search(text) is not None

    def matches_candidate(self, text):
        return self._c.search(text) is not None


def concat_fields(rec, include_title=False):
    parts = [c.strip().lower() for c in rec.categories if c and c.strip()]
    if include_title and rec.title and rec.title.strip():
        parts.append(rec.title.strip().lower())
    return ", ".join(parts)


def load_rules(path):
    rules = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise RuleError(f"{path}:{lineno}: expected query_pattern<TAB>candidate_pattern")
            rules.append(MatchRule(parts[0].strip(), parts[1].strip(), line=lineno))
    return rules


def apply_rules(rules, queries, candidates):
    """Union over rules of the candidates matching each rule the query matches.

    Candidate lists are sorted by id and contain no duplicates.
    """
    cand_text = [(c.id, concat_fields(c, include_title=True)) for c in candidates]
    out = {}
    for q in queries:
        qtext = concat_fields(q)
        hits = set()
        for rule in rules:
            if rule.matches_query(qtext):
                hits.update(cid for cid, text in cand_text if rule.matches_candidate(text))
        out[q.id] = sorted(hits)
    return out


@dataclass
class CoverageStats:
    per_query: dict
    n_empty: int
    n_distinct: int


def coverage_stats(cands, queries=None):
    ids = [q.id if isinstance(q, ProductRecord) else q for q in (queries if queries is not None else cands)]
    per_query = {qid: len(cands.get(qid, ())) for qid in ids}
    distinct = set()
    for qid in ids:
        distinct.update(cands.get(qid, ()))
    return CoverageStats(per_query, sum(1 for n in per_query.values() if n == 0), len(distinct))


def read_products(path):
    """TSV with header: ``id``, ``title``, any ``category*`` columns (in order), optional ``attrs``.

    ``attrs`` holds ``key=value`` pairs separated by ``;``.
    """
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh, delimiter="\t", quoting=csv.QUOTE_NONE)
        header = next(reader, None)
        if header is None:
            return []
        header = [h.strip().lower() for h in header]
        if "id" not in header:
            raise ValueError(f"{path}: header must contain an 'id' column")
        cat_cols = [i for i, h in enumerate(header) if h.startswith("category")]
        i_id = header.index("id")
        i_title = header.index("title") if "title" in header else None
        i_attrs = header.index("attrs") if "attrs" in header else None
        records = []
        for lineno, row in enumerate(reader, 2):
            if not any(cell.strip() for cell in row):
                continue
            row = row + [""] * (len(header) - len(row))
            attrs = {}
            if i_attrs is not None and row[i_attrs].strip():
                for kv in row[i_attrs].split(";"):
                    if not kv.strip():
                        continue
                    k, sep, v = kv.partition("=")
                    if not sep:
                        raise ValueError(f"{path}:{lineno}: attribute {kv!r} is not key=value")
                    attrs[k.strip()] = v.strip()
            records.append(ProductRecord(
                id=row[i_id].strip(),
                title=row[i_title] if i_title is not None else "",
                categories=[row[i] for i in cat_cols if row[i].strip()],
                attrs=attrs,
            ))
    return records


def write_candidates(path, cands):
    with open(path, "w", encoding="utf-8") as fh:
        for qid, items in cands.items():
            fh.write(f"{qid}\t{','.join(items)}\n")


def read_candidates(path):
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            qid, _, rest = line.partition("\t")
            out[qid] = [c for c in rest.split(",") if c]
    return out
