import json
import threading

import httpx
import pytest

from biorag.embedding import ReferenceEmbedder
from biorag.errors import CassetteMiss, EmptyInput, NotConfigured, RateLimited, RetrieverFailure
from biorag.mesh import build_filter
from biorag.retrievers import (
    DEFAULT_MAX_RESULTS,
    RECORD,
    REPLAY,
    SNIPPET_CAP,
    Cassette,
    ClientSet,
    EntrezClient,
    EvidenceItem,
    LocalCorpus,
    RecordReplay,
    RetrievalRequest,
    RetrieverId,
    WebSearchClient,
    cap_snippet,
    entity_lookup,
    execute,
    list_manuals,
    request_key,
    web_search,
)
from biorag.retrievers.http import get_json
from biorag.retrievers.ratelimit import TokenBucket
from conftest import DEMO

WEB_Q = "differences between innate and adaptive immunity"


@pytest.fixture
def replay():
    return RecordReplay(Cassette(DEMO / "cassette.jsonl"), REPLAY)


def recorded(key):
    for line in (DEMO / "cassette.jsonl").read_text(encoding="utf-8").splitlines():
        obj = json.loads(line)
        if obj["key"] == key:
            return [EvidenceItem.from_dict(i) for i in obj["items"]]
    raise KeyError(key)


# manuals and request model

def test_six_manuals_in_order():
    manuals = list_manuals()
    assert [m.id for m in manuals] == list(RetrieverId)
    assert "the input must be a specific gene name" in manuals[0].manual_text
    assert "retrieving biomedical literature and research articles" in manuals[-1].manual_text


def test_input_requirements_is_last_sentence():
    gene = list_manuals()[0]
    assert gene.input_requirements == "To utilize this search engine effectively, the input must be a specific gene name."
    assert gene.manual_text.endswith(gene.input_requirements)


def test_default_caps():
    assert [RetrievalRequest(r, "q").max_results for r in RetrieverId] == [10, 10, 10, 10, 10, 4]
    assert DEFAULT_MAX_RESULTS[RetrieverId.PUBMED_LOCAL] == 4


def test_filter_only_for_local():
    with pytest.raises(ValueError):
        RetrievalRequest(RetrieverId.GENE, "q", build_filter(["A"]))


def test_evidence_item_requires_locator():
    with pytest.raises(ValueError):
        EvidenceItem(RetrieverId.GENE, "t", "s", "")
    with pytest.raises(ValueError):
        EvidenceItem(RetrieverId.GENE, "t", "", "x")


def test_cap_snippet():
    assert cap_snippet("T", "first para\n\nsecond") == "T. first para"
    assert len(cap_snippet("T", "x" * 5000)) == SNIPPET_CAP


# execute

def test_execute_local(demo_index):
    deps = ClientSet(local=LocalCorpus(demo_index, ReferenceEmbedder()))
    ev = execute(RetrievalRequest(RetrieverId.PUBMED_LOCAL, "innate immunity receptors", build_filter([])), deps)
    assert len(ev.items) == 4
    ids = {d.id for d in demo_index.docs}
    assert all(item.locator in ids for item in ev.items)
    assert ev.replayed is False


def test_execute_web_replay(replay):
    ev = execute(RetrievalRequest(RetrieverId.WEB_SEARCH, WEB_Q), ClientSet(web=replay))
    assert list(ev.items) == recorded(f"WebSearch|10|{WEB_Q}")
    assert ev.replayed is True


def test_execute_gene_miss(replay):
    with pytest.raises(RetrieverFailure) as err:
        execute(RetrievalRequest(RetrieverId.GENE, "BRCA9"), ClientSet(entity=replay))
    assert err.value.retriever is RetrieverId.GENE
    assert isinstance(err.value.cause, CassetteMiss)


def test_execute_local_without_index():
    with pytest.raises(RetrieverFailure) as err:
        execute(RetrievalRequest(RetrieverId.PUBMED_LOCAL, "q"), ClientSet())
    assert isinstance(err.value.cause, NotConfigured)


def test_dispatch_is_total(replay, demo_index):
    deps = ClientSet(entity=replay, web=replay, local=LocalCorpus(demo_index, ReferenceEmbedder()))
    for rid in RetrieverId:
        try:
            ev = execute(RetrievalRequest(rid, "tp53"), deps)
            assert len(ev.items) <= ev.request.max_results
        except RetrieverFailure as exc:
            assert exc.retriever is rid


# entity_lookup / web_search

def test_entity_lookup_tp53(replay):
    items = entity_lookup(RetrieverId.GENE, "TP53", 10, replay)
    assert items == recorded("Gene|10|tp53")
    assert len(items) <= 10


def test_entity_lookup_empty_term(replay):
    with pytest.raises(EmptyInput):
        entity_lookup(RetrieverId.DBSNP, "", 10, replay)


def test_entity_lookup_zero_results_rejected_before_dispatch():
    class Spy:
        calls = 0

        def lookup(self, *a):
            Spy.calls += 1
            return []

    with pytest.raises(ValueError):
        entity_lookup(RetrieverId.PROTEIN, "x", 0, Spy())
    assert Spy.calls == 0


def test_web_replay_three(replay):
    assert web_search(WEB_Q, 10, replay) == recorded(f"WebSearch|10|{WEB_Q}")


def test_web_truncation(replay):
    items = web_search(WEB_Q, 1, replay)
    assert items == recorded(f"WebSearch|1|{WEB_Q}")[:1]


def test_web_live_not_configured(monkeypatch):
    monkeypatch.delenv("BIORAG_SEARCH_PROVIDER", raising=False)
    with pytest.raises(RetrieverFailure) as err:
        web_search("q", 3, WebSearchClient())
    assert err.value.retriever is RetrieverId.WEB_SEARCH
    assert isinstance(err.value.cause, NotConfigured)


def test_replay_is_deterministic(replay):
    a = execute(RetrievalRequest(RetrieverId.WEB_SEARCH, WEB_Q), ClientSet(web=replay))
    b = execute(RetrievalRequest(RetrieverId.WEB_SEARCH, "  Differences  between innate and ADAPTIVE immunity"),
                ClientSet(web=replay))
    assert a.items == b.items


# cassette

def test_request_key_normalization():
    assert request_key(RetrieverId.GENE, "  TP53\tgene ", 10) == "Gene|10|tp53 gene"


def test_cassette_first_entry_wins(tmp_path):
    item = {"source": "Gene", "title": "t", "snippet": "s", "locator": "l"}
    path = tmp_path / "c.jsonl"
    path.write_text(json.dumps({"key": "k", "items": [item]}) + "\n" +
                    json.dumps({"key": "k", "items": []}) + "\n")
    assert len(Cassette(path).lookup("k")) == 1


def test_record_mode_appends(tmp_path):
    class Live:
        def search(self, query, n):
            return [EvidenceItem(RetrieverId.WEB_SEARCH, "T", "S", "https://x")]

    path = tmp_path / "rec.jsonl"
    rr = RecordReplay(Cassette(path), RECORD, web=Live())
    rr.search("Hello  World", 5)
    rr.search("hello world", 5)
    lines = path.read_text().splitlines()
    assert len(lines) == 1
    assert json.loads(lines[0])["key"] == "WebSearch|5|hello world"
    replayed = RecordReplay(Cassette(path), REPLAY).search("hello world", 5)
    assert replayed[0].locator == "https://x"


def test_cassette_concurrent_record(tmp_path):
    cas = Cassette(tmp_path / "c.jsonl")
    item = EvidenceItem(RetrieverId.GENE, "t", "s", "l")
    threads = [threading.Thread(target=cas.record, args=(f"k{i % 10}", [item])) for i in range(50)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert len((tmp_path / "c.jsonl").read_text().splitlines()) == 10


# live clients over mocked HTTP

ESEARCH = {"esearchresult": {"idlist": ["7157", "22059"]}}
ESUMMARY = {"result": {
    "uids": ["7157", "22059"],
    "7157": {"uid": "7157", "name": "TP53", "description": "tumor protein p53", "chromosome": "17",
             "maplocation": "17p13.1", "otheraliases": "BCC7, LFS1, P53",
             "organism": {"scientificname": "Homo sapiens"}, "summary": "This gene encodes a tumor suppressor."},
    "22059": {"uid": "22059", "name": "Trp53", "description": "transformation related protein 53",
              "organism": {"scientificname": "Mus musculus"}},
}}


def eutils(handler_log):
    def handler(request):
        handler_log.append(request)
        if request.url.path.endswith("esearch.fcgi"):
            return httpx.Response(200, json=ESEARCH)
        return httpx.Response(200, json=ESUMMARY)
    return httpx.MockTransport(handler)


def free_bucket():
    return TokenBucket(rate=1000, capacity=1000)


def test_entrez_gene_mapping():
    log = []
    client = EntrezClient(api_key="KEY", transport=eutils(log), limiter=free_bucket())
    items = client.lookup(RetrieverId.GENE, "TP53", 10)
    assert [i.locator for i in items] == ["https://www.ncbi.nlm.nih.gov/gene/7157",
                                         "https://www.ncbi.nlm.nih.gov/gene/22059"]
    assert items[0].title == "TP53 (tumor protein p53)"
    assert "Aliases: BCC7, LFS1, P53" in items[0].snippet
    assert "Homo sapiens" in items[0].snippet
    assert log[0].url.params["db"] == "gene"
    assert log[0].url.params["api_key"] == "KEY"
    assert log[0].url.params["retmode"] == "json"
    assert log[1].url.params["id"] == "7157,22059"


def test_entrez_truncates():
    client = EntrezClient(transport=eutils([]), limiter=free_bucket())
    assert len(client.lookup(RetrieverId.GENE, "TP53", 1)) == 1


def test_entrez_snp_mapping():
    body = {"result": {"uids": ["1042522"], "1042522": {"snp_id": 1042522, "chr": "17", "chrpos": "7676154",
                                                        "genes": [{"name": "TP53"}]}}}

    def handler(request):
        if "esearch" in request.url.path:
            return httpx.Response(200, json={"esearchresult": {"idlist": ["1042522"]}})
        return httpx.Response(200, json=body)

    items = EntrezClient(transport=httpx.MockTransport(handler), limiter=free_bucket()).lookup(RetrieverId.DBSNP, "rs1042522", 10)
    assert items[0].title == "rs1042522"
    assert items[0].locator == "https://www.ncbi.nlm.nih.gov/snp/rs1042522"
    assert "Genes: TP53" in items[0].snippet


def test_entrez_transport_failure():
    def boom(request):
        raise httpx.ConnectError("down")

    with pytest.raises(RetrieverFailure) as err:
        EntrezClient(transport=httpx.MockTransport(boom), limiter=free_bucket()).lookup(RetrieverId.GENE, "x", 3)
    assert err.value.retriever is RetrieverId.GENE


def test_entrez_empty_idlist():
    t = httpx.MockTransport(lambda r: httpx.Response(200, json={"esearchresult": {"idlist": []}}))
    assert EntrezClient(transport=t, limiter=free_bucket()).lookup(RetrieverId.PROTEIN, "x", 3) == []


def test_429_retried_once_honoring_retry_after():
    calls, sleeps = [], []

    def handler(request):
        calls.append(1)
        if len(calls) == 1:
            return httpx.Response(429, headers={"Retry-After": "0.5"})
        return httpx.Response(200, json={"ok": True})

    client = httpx.Client(transport=httpx.MockTransport(handler))
    assert get_json(client, "http://x", {}, free_bucket(), sleep=sleeps.append) == {"ok": True}
    assert sleeps == [0.5]


def test_429_twice_is_rate_limited():
    client = httpx.Client(transport=httpx.MockTransport(lambda r: httpx.Response(429, headers={"Retry-After": "1"})))
    with pytest.raises(RateLimited) as err:
        get_json(client, "http://x", {}, free_bucket(), sleep=lambda s: None)
    assert err.value.retry_after == 1.0


def test_token_bucket_paces_requests():
    now = [0.0]
    slept = []

    def sleep(s):
        slept.append(s)
        now[0] += s

    bucket = TokenBucket(rate=3, clock=lambda: now[0], sleep=sleep)
    for _ in range(6):
        bucket.acquire()
    # 3 immediate tokens, then one every 1/3 s
    assert len(slept) == 3
    assert all(abs(s - 1 / 3) < 1e-9 for s in slept)


def test_token_bucket_budget_exceeded():
    bucket = TokenBucket(rate=0.1, capacity=1, max_wait=1.0, clock=lambda: 0.0, sleep=lambda s: None)
    bucket.acquire()
    with pytest.raises(RateLimited):
        bucket.acquire()


@pytest.mark.parametrize("provider,body", [
    ("generic", {"results": [{"title": "A", "url": "https://a", "snippet": "<b>alpha</b> text"}]}),
    ("bing", {"webPages": {"value": [{"name": "A", "url": "https://a", "snippet": "alpha text"}]}}),
    ("google", {"items": [{"title": "A", "link": "https://a", "snippet": "alpha text"}]}),
    ("wikimedia", {"query": {"search": [{"title": "A", "snippet": "alpha text"}]}}),
])
def test_web_providers(provider, body):
    log = []

    def handler(request):
        log.append(request)
        return httpx.Response(200, json=body)

    client = WebSearchClient(provider=provider, endpoint="https://search.test", api_key="K",
                             transport=httpx.MockTransport(handler), limiter=free_bucket())
    items = client.search("alpha", 5)
    assert len(items) == 1
    assert items[0].snippet == "alpha text"
    assert items[0].locator.startswith("https://")
    assert log[0].url.params["key"] == "K"


def test_web_items_truncated():
    body = {"results": [{"title": f"T{i}", "url": f"https://t/{i}", "snippet": "s"} for i in range(5)]}
    client = WebSearchClient(provider="generic", endpoint="https://s", transport=httpx.MockTransport(
        lambda r: httpx.Response(200, json=body)), limiter=free_bucket())
    assert [i.title for i in client.search("q", 2)] == ["T0", "T1"]
