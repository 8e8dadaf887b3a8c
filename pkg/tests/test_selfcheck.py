import pytest

from reldata.corpus import Task
from reldata.errors import ConfigError
from reldata.providers import MockScorer
from reldata.selfcheck import (
    FilterAction,
    FilterConfig,
    filter_report,
    is_contradiction,
    validate_corpus,
)

from .conftest import FailingScorer, FixedScorer, mk


def test_config_validates_threshold():
    FilterConfig(confidence_threshold=0.9)
    FilterConfig(confidence_threshold=1.0)
    for bad in (0.5, 0.3, 1.01, 0.0):
        with pytest.raises(ConfigError):
            FilterConfig(confidence_threshold=bad)


def test_contradiction_boundaries_are_inclusive():
    # label 0 contradicted when the scorer is confidently positive
    assert is_contradiction(0, 0.9, 0.9)
    assert not is_contradiction(0, 0.89999, 0.9)
    # label 1 contradicted when the scorer is confidently negative
    assert is_contradiction(1, 0.1, 0.9)
    assert not is_contradiction(1, 0.10001, 0.9)
    assert not is_contradiction(0, 0.5, 0.9)
    assert not is_contradiction(1, 0.5, 0.9)


def corpus_with_flips():
    keep = [
        mk("red shoes", "red shoes", 1),          # scorer agrees: yes
        mk("red shoes", "blue kettle", 0),        # scorer agrees: no
        mk("half match here", "half match gone", 1),  # mid confidence, kept
    ]
    flipped = [
        mk("green hat", "green hat", 0),          # scorer: certainly yes
        mk("wool scarf", "steel pipe", 1),        # scorer: certainly no
    ]
    return keep, flipped


def test_remove_action_drops_contradicted_records():
    keep, flipped = corpus_with_flips()
    records = keep + flipped
    kept, verdicts = validate_corpus(records, MockScorer(), FilterConfig(0.9))
    assert [rec.id for rec in kept] == [rec.id for rec in keep]
    assert len(verdicts) == len(records)
    assert [v.record_id for v in verdicts] == [rec.id for rec in records]
    contradicted = {v.record_id for v in verdicts if v.contradiction}
    assert contradicted == {rec.id for rec in flipped}
    assert all(v.removed == v.contradiction for v in verdicts)


def test_flag_only_keeps_everything():
    keep, flipped = corpus_with_flips()
    records = keep + flipped
    kept, verdicts = validate_corpus(
        records, MockScorer(), FilterConfig(0.9, action=FilterAction.FLAG_ONLY)
    )
    assert kept == records
    assert {v.record_id for v in verdicts if v.contradiction} == {r.id for r in flipped}
    assert not any(v.removed for v in verdicts)


def test_unscored_records_are_kept():
    records = [mk("POISON text", "whatever thing", 0), mk("red shoes", "red shoes", 1)]
    scorer = FailingScorer(MockScorer())
    kept, verdicts = validate_corpus(records, scorer, FilterConfig(0.9))
    assert kept == records
    assert verdicts[0].p_yes is None and not verdicts[0].scored
    assert not verdicts[0].contradiction
    assert verdicts[1].scored


def test_higher_threshold_removes_a_subset():
    queries = {f"q{i}": p for i, p in enumerate(
        [0.99, 0.96, 0.92, 0.85, 0.5, 0.12, 0.07, 0.03]
    )}
    records = [mk(q, "some candidate", 0) for q in queries]
    scorer = FixedScorer(queries)
    removed_at = {}
    for tau in (0.9, 0.95):
        kept, verdicts = validate_corpus(records, scorer, FilterConfig(tau))
        removed_at[tau] = {v.record_id for v in verdicts if v.removed}
    assert removed_at[0.95] < removed_at[0.9]  # strictly fewer at the stricter bar
    assert removed_at[0.95] <= removed_at[0.9]


def test_filter_report_tallies():
    keep, flipped = corpus_with_flips()
    records = keep + flipped + [mk("POISON q", "thing here", 1, language="de")]
    scorer = FailingScorer(MockScorer())
    kept, verdicts = validate_corpus(records, scorer, FilterConfig(0.9))
    report = filter_report(verdicts)
    assert report.total == len(records)
    assert report.removed == 2
    assert report.unscored == 1
    assert report.kept == len(records) - 3  # scored and kept; unscored counted apart
    assert len(kept) == len(records) - 2  # the kept list still holds unscored records
    assert report.by_task["qc"]["removed"] == 2
    assert report.by_language["en"]["removed"] == 2
    assert sum(report.by_origin["original"].values()) == len(records)
    assert not report.all_removed_warning


def test_filter_report_orders_contradictions_by_confidence():
    queries = {"worst": 0.999, "bad": 0.95, "mild": 0.91}
    records = [mk(q, "candidate text", 0) for q in queries]
    _, verdicts = validate_corpus(records, FixedScorer(queries), FilterConfig(0.9))
    report = filter_report(verdicts, top_n=2)
    top = [entry["record_id"] for entry in report.top_contradictions]
    by_query = {rec.query: rec.id for rec in records}
    assert top == [by_query["worst"], by_query["bad"]]


def test_all_removed_warning():
    records = [mk("green hat", "green hat", 0), mk("wool scarf", "steel pipe", 1)]
    kept, verdicts = validate_corpus(records, MockScorer(), FilterConfig(0.9))
    report = filter_report(verdicts)
    assert kept == []
    assert report.all_removed_warning
