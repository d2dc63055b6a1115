import re

import pytest
from hypothesis import given, settings, strategies as st

from raea.rough_filter import (MatchRule, ProductRecord, RuleError, apply_rules, concat_fields, coverage_stats,
                               load_rules, read_candidates, read_products, write_candidates)

from conftest import write
from product_data import distractor_candidates, ebay_query, table3_candidates

CRAMPONS = MatchRule("climbing", "climbing.*crampons")


def test_concat_examples():
    assert concat_fields(ProductRecord("a", categories=["Outdoor fitness", "Outdoor sport"])) == \
        "outdoor fitness, outdoor sport"
    assert concat_fields(ProductRecord("b", "KAHTOOLA steel hiking crampons"), include_title=True) == \
        "kahtoola steel hiking crampons"
    assert concat_fields(ProductRecord("c")) == ""
    assert concat_fields(ProductRecord("d", "title only")) == ""


@pytest.mark.parametrize("text,hit", [
    ("outdoor fitness, ice climbing equipment, kahtoola steel hiking crampons", True),
    ("yoga mat non-slip", False),
    ("crampons for ice climbing", False),
])
def test_pattern_examples(text, hit):
    assert CRAMPONS.matches_candidate(text) is hit
    assert (re.search("climbing.*crampons", text) is not None) is hit


def test_table3_titles_match_and_distractors_do_not():
    cands = table3_candidates() + distractor_candidates()
    out = apply_rules([CRAMPONS], [ebay_query()], cands)
    assert out["ebay0"] == sorted(c.id for c in table3_candidates())


def test_query_side_must_match():
    q = ProductRecord("q", categories=["Kitchen"])
    assert apply_rules([CRAMPONS], [q], table3_candidates()) == {"q": []}


def test_bad_pattern_names_line(tmp_path):
    with pytest.raises(RuleError, match="line 2"):
        load_rules(write(tmp_path / "r", "# rules\nclimbing\t(crampons\n"))
    with pytest.raises(RuleError):
        load_rules(write(tmp_path / "s", "only one field\n"))


def test_load_rules_skips_comments(tmp_path):
    rules = load_rules(write(tmp_path / "r", "# c\n\nclimbing\tclimbing.*crampons\nyoga\tmat\n"))
    assert [(r.query_category_pattern, r.candidate_pattern, r.line) for r in rules] == \
        [("climbing", "climbing.*crampons", 3), ("yoga", "mat", 4)]


def test_coverage():
    qs = [ProductRecord(f"q{i}", categories=["kitchen"]) for i in range(3)]
    stats = coverage_stats(apply_rules([CRAMPONS], qs, table3_candidates()), qs)
    assert stats.n_empty == 3 and stats.n_distinct == 0
    cands = table3_candidates() + distractor_candidates()
    stats = coverage_stats(apply_rules([MatchRule("", "")], qs, cands), qs)
    assert set(stats.per_query.values()) == {len(cands)} and stats.n_distinct == len(cands)


def test_products_and_candidates_io(tmp_path):
    path = write(tmp_path / "p.tsv", "id\ttitle\tcategory1\tcategory2\tattrs\n"
                                     "e1\tSteel crampons\tOutdoor\tClimbing\tcolor=black;weight=13.6 ounces\n"
                                     "e2\tMat\tYoga\t\t\n")
    recs = read_products(path)
    assert recs[0] == ProductRecord("e1", "Steel crampons", ["Outdoor", "Climbing"],
                                    {"color": "black", "weight": "13.6 ounces"})
    assert recs[1].categories == ["Yoga"] and recs[1].attrs == {}
    out = tmp_path / "c.tsv"
    write_candidates(out, {"q1": ["a", "b"], "q2": []})
    assert read_candidates(out) == {"q1": ["a", "b"], "q2": []}


words = st.sampled_from(["climbing", "ice", "crampons", "yoga", "mat", "rope", "steel", "Climbing", "CRAMPONS"])
records = st.lists(st.tuples(st.lists(words, max_size=3), st.lists(words, max_size=4)), min_size=1, max_size=8)
patterns = st.sampled_from(["climbing", "crampons", "ice|yoga", "climbing.*crampons", "^mat", "rope$", "steel"])


def _recs(raw, prefix):
    return [ProductRecord(f"{prefix}{i}", " ".join(t), [" ".join(c)] if c else [])
            for i, (c, t) in enumerate(raw)]


@settings(max_examples=80, deadline=None)
@given(records, records, st.lists(st.tuples(patterns, patterns), min_size=1, max_size=3), st.tuples(patterns, patterns))
def test_adding_a_rule_never_shrinks(qraw, craw, rules, extra):
    qs, cs = _recs(qraw, "q"), _recs(craw, "c")
    base = [MatchRule(a, b) for a, b in rules]
    before = apply_rules(base, qs, cs)
    after = apply_rules(base + [MatchRule(*extra)], qs, cs)
    for q in before:
        assert set(before[q]) <= set(after[q])


@settings(max_examples=60, deadline=None)
@given(records, records, st.tuples(patterns, patterns), st.randoms())
def test_order_and_case_invariance(qraw, craw, rule, rnd):
    qs, cs = _recs(qraw, "q"), _recs(craw, "c")
    r = [MatchRule(*rule)]
    out = apply_rules(r, qs, cs)
    shuffled = list(cs)
    rnd.shuffle(shuffled)
    assert apply_rules(r, qs, shuffled) == out
    upper = [ProductRecord(c.id, c.title.upper(), [x.upper() for x in c.categories]) for c in cs]
    assert apply_rules(r, qs, upper) == out
    for v in out.values():
        assert v == sorted(set(v))
