"""One web-search client contract; the concrete engine is configuration.

Responses are accepted in any of the common JSON shapes: a flat
``{"results": [{"title", "url", "snippet"}]}``, Bing-style
``webPages.value``, Google CSE ``items``, MediaWiki ``query.search`` and
Crossref ``message.items``.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import httpx

from ..corpus import clean_text
from ..errors import NotConfigured, RetrieverFailure
from .http import get_json
from .models import EvidenceItem, RetrieverId, cap_snippet
from .ratelimit import TokenBucket, limiter_for


@dataclass(frozen=True)
class Provider:
    name: str
    endpoint: str | None
    query_param: str
    count_param: str
    description: str
    static_params: tuple[tuple[str, str], ...] = ()


PROVIDERS = {
    "google": Provider("google", "https://www.googleapis.com/customsearch/v1", "q", "num",
                       "general web: news, blogs and forums"),
    "bing": Provider("bing", "https://api.bing.microsoft.com/v7.0/search", "q", "count",
                     "general web: news, blogs and forums"),
    "arxiv": Provider("arxiv", None, "q", "count", "preprints"),
    "wikimedia": Provider("wikimedia", "https://en.wikipedia.org/w/api.php", "srsearch", "srlimit",
                          "encyclopedic explanations",
                          (("action", "query"), ("list", "search"), ("format", "json"))),
    "crossref": Provider("crossref", "https://api.crossref.org/works", "query", "rows",
                         "peer-reviewed citation metadata"),
    "generic": Provider("generic", None, "q", "count", "any service returning {results: [...]}"),
}


def _records(body: dict) -> list[tuple[str, str, str]]:
    if "results" in body:
        return [(r.get("title", ""), r.get("url", ""), r.get("snippet", "")) for r in body["results"]]
    if "webPages" in body:
        return [(r.get("name", ""), r.get("url", ""), r.get("snippet", "")) for r in body["webPages"].get("value", [])]
    if "items" in body:
        return [(r.get("title", ""), r.get("link", ""), r.get("snippet", "")) for r in body["items"]]
    if "query" in body and "search" in body["query"]:
        out = []
        for r in body["query"]["search"]:
            title = r.get("title", "")
            url = "https://en.wikipedia.org/wiki/" + title.replace(" ", "_")
            out.append((title, url, r.get("snippet", "")))
        return out
    if "message" in body and "items" in body["message"]:
        out = []
        for r in body["message"]["items"]:
            title = " ".join(r.get("title") or [])
            out.append((title, r.get("URL", ""), r.get("abstract", "") or title))
        return out
    return []


def map_results(body: dict, max_results: int) -> list[EvidenceItem]:
    items = []
    for title, url, snippet in _records(body):
        title, snippet = clean_text(title), clean_text(snippet)
        text = cap_snippet("", snippet) or title
        if not url or not text:
            continue
        items.append(EvidenceItem(RetrieverId.WEB_SEARCH, title, text, url))
        if len(items) >= max_results:
            break
    return items


class WebSearchClient:
    replaying = False

    def __init__(
        self,
        provider: str | None = None,
        endpoint: str | None = None,
        api_key: str | None = None,
        limiter: TokenBucket | None = None,
        timeout: float = 30.0,
        transport: httpx.BaseTransport | None = None,
    ):
        name = provider or os.environ.get("BIORAG_SEARCH_PROVIDER")
        self.provider = PROVIDERS.get(name.lower()) if name else None
        self.endpoint = endpoint or (self.provider.endpoint if self.provider else None)
        self.api_key = api_key if api_key is not None else os.environ.get("BIORAG_SEARCH_API_KEY")
        self.limiter = limiter or (limiter_for(self.endpoint) if self.endpoint else None)
        self._client = httpx.Client(timeout=timeout, transport=transport)

    def search(self, query: str, max_results: int) -> list[EvidenceItem]:
        if self.provider is None or not self.endpoint:
            raise RetrieverFailure(RetrieverId.WEB_SEARCH, NotConfigured("no web search provider configured"))
        params = dict(self.provider.static_params)
        params[self.provider.query_param] = query
        params[self.provider.count_param] = max_results
        if self.api_key:
            params["key"] = self.api_key
        try:
            body = get_json(self._client, self.endpoint, params, self.limiter)
        except (httpx.HTTPError, ValueError) as exc:
            raise RetrieverFailure(RetrieverId.WEB_SEARCH, exc) from exc
        return map_results(body, max_results)
