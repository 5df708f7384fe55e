import io
import json
import re

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from biorag.corpus import (
    DUP_ID,
    EMPTY,
    MALFORMED,
    NON_ALPHA,
    TOO_SHORT,
    CleanDocument,
    RawRecord,
    RuleSet,
    clean_text,
    ingest_corpus,
    ingest_file,
    iter_raw_records,
    quality_filter,
    read_corpus,
    write_corpus,
)
from biorag.errors import IngestAborted

PROSE = ("Macrophages sense microbial products through surface receptors and respond with rapid "
         "cytokine release. ")


def doc(abstract, id="d1"):
    return CleanDocument(id, "t", abstract, (), 2020)


# clean_text examples

def test_clean_empty():
    assert clean_text("") == ""


def test_clean_hyperlink():
    assert clean_text("Visit https://example.org for charts") == "Visit for charts"


def test_clean_table_block():
    assert clean_text("<table><tr>…</tr></table>Results show X") == "Results show X"


def test_clean_tags_and_controls():
    assert clean_text("a <b>bold</b>\x07 claim\x00 \n\t here") == "a bold claim here"


def test_clean_www_and_comment():
    assert clean_text("see www.ncbi.nlm.nih.gov/gene <!-- hidden --> today") == "see today"


def test_clean_keeps_comparisons():
    # a bare "<" that does not open a tag is prose, not markup
    assert clean_text("p < 0.05 and x > y") == "p < 0.05 and x > y"


fragments = st.sampled_from([
    "http://a.b/c", "www.x.org", "<i>", "</i>", "<br/>", "<table>", "</table>", "<!--", "-->",
    "\x00", "\x1f", "\x85", " ", "\n", "word", "<", ">", "<<b>>", "<scr<script>ipt>",
])


@settings(max_examples=300, deadline=None)
@given(st.lists(st.one_of(fragments, st.text(max_size=8)), max_size=15).map("".join))
def test_clean_text_properties(raw):
    out = clean_text(raw)
    assert clean_text(out) == out
    assert out == out.strip()
    assert "  " not in out
    assert not re.search(r"[\x00-\x08\x0b\x0c\x0e-\x1f\x7f-\x9f]", out)
    assert not re.search(r"https?://|www\.", out, re.IGNORECASE)
    assert not re.search(r"</?[A-Za-z][A-Za-z0-9:_-]*(\s[^<>]*)?/?>", out)


# quality_filter examples

def test_quality_empty():
    assert quality_filter(doc("")) == (False, EMPTY)


def test_quality_accepts_prose():
    text = (PROSE * 6)[:500]
    assert quality_filter(doc(text)) == (True, None)


def test_quality_non_alpha():
    # 300 visible characters, 40% letters
    text = ("ab1.2" * 60)
    assert len(text) == 300
    assert quality_filter(doc(text)) == (False, NON_ALPHA)


def test_quality_too_short():
    assert quality_filter(doc(PROSE)) == (False, TOO_SHORT)


def test_quality_dup():
    assert quality_filter(doc(PROSE * 3), seen_ids={"d1"}) == (False, DUP_ID)


def test_thresholds_configurable():
    rules = RuleSet("t", (), min_length=10, min_alpha_ratio=0.1)
    assert quality_filter(doc("x1 2 3 4 5 6 7"), rules) == (True, None)


# ingest_corpus

def raw(id, abstract=PROSE * 3, **kw):
    return {"id": id, "title": kw.get("title", "T"), "abstract": abstract,
            "mesh": kw.get("mesh", []), "year": kw.get("year", 2001)}


def test_ingest_empty_stream():
    docs, stats = ingest_corpus([])
    assert docs == []
    assert stats.to_dict() == {"input_count": 0, "accepted_count": 0, "rejected_count": 0,
                               "rejection_reasons": {}}


def test_ingest_duplicate_second_rejected():
    docs, stats = ingest_corpus([raw("a"), raw("a", title="other")])
    assert [d.title for d in docs] == ["T"]
    assert stats.rejection_reasons == {DUP_ID: 1}


def test_ingest_malformed_line_counted():
    stream = io.StringIO(json.dumps(raw("a")) + "\n{not json\n" + json.dumps({"title": "no id"}) + "\n")
    docs, stats = ingest_corpus(iter_raw_records(stream))
    assert len(docs) == 1
    assert stats.rejection_reasons == {MALFORMED: 2}
    assert stats.input_count == 3


def test_ingest_mesh_dedup_and_year_default():
    docs, _ = ingest_corpus([{"id": "a", "title": "T", "abstract": PROSE * 3, "mesh": ["Humans", " Humans", "humans"]}])
    assert docs[0].mesh == ("Humans",)
    assert docs[0].year == 0


def test_ingest_io_failure_keeps_partial_stats():
    def stream():
        yield RawRecord.from_dict(raw("a"))
        yield RawRecord.from_dict(raw("b", abstract=""))
        raise OSError("disk gone")

    with pytest.raises(IngestAborted) as err:
        ingest_corpus(stream())
    stats = err.value.stats
    assert (stats.input_count, stats.accepted_count, stats.rejected_count) == (2, 1, 1)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.sampled_from("abcdef"), st.sampled_from(["", "short", PROSE * 3, "1.2 " * 80])),
                max_size=20))
def test_ingest_conservation_and_order(pairs):
    records = [raw(i, a) for i, a in pairs]
    docs, stats = ingest_corpus(records)
    assert stats.input_count == stats.accepted_count + stats.rejected_count == len(records)
    assert sum(stats.rejection_reasons.values()) == stats.rejected_count
    ids = [d.id for d in docs]
    positions = [next(n for n, r in enumerate(records) if r["id"] == i and clean_text(r["abstract"]) == d.abstract)
                 for i, d in zip(ids, docs)]
    assert positions == sorted(positions)
    assert len(set(ids)) == len(ids)
    assert ingest_corpus(records)[0] == docs


def test_ingest_file_roundtrip(tmp_path):
    src = tmp_path / "in.jsonl"
    src.write_text("\n".join(json.dumps(raw(f"r{i}")) for i in range(3)) + "\n", encoding="utf-8")
    stats = ingest_file(src, tmp_path / "out.jsonl", stats_path=tmp_path / "stats.json")
    assert stats.accepted_count == 3
    assert [d.id for d in read_corpus(tmp_path / "out.jsonl")] == ["r0", "r1", "r2"]
    assert json.loads((tmp_path / "stats.json").read_text())["accepted_count"] == 3


def test_write_corpus_schema():
    buf = io.StringIO()
    write_corpus([CleanDocument("x", "T", "A", ("M",), 0)], buf)
    assert json.loads(buf.getvalue()) == {"id": "x", "title": "T", "abstract": "A", "mesh": ["M"], "year": 0}
