"""NCBI E-utilities client for the Gene, dbSNP, Genome and Protein databases.

Each lookup is an ``esearch`` for UIDs followed by one ``esummary`` for the
returned UIDs (JSON mode).  Summaries are reduced to evidence items whose
locator is the record's NCBI URL.
"""

from __future__ import annotations

import os

import httpx

from ..errors import RetrieverFailure
from .http import get_json
from .models import EvidenceItem, RetrieverId, cap_snippet
from .ratelimit import TokenBucket, limiter_for

EUTILS_BASE = "https://eutils.ncbi.nlm.nih.gov/entrez/eutils"

ENTREZ_DB = {
    RetrieverId.GENE: "gene",
    RetrieverId.DBSNP: "snp",
    RetrieverId.GENOME: "genome",
    RetrieverId.PROTEIN: "protein",
}


def _join(parts) -> str:
    return "; ".join(p for p in parts if p)


def _gene_item(uid: str, rec: dict) -> EvidenceItem:
    name = rec.get("name", "")
    desc = rec.get("description", "")
    organism = (rec.get("organism") or {}).get("scientificname", "")
    facts = _join([
        f"Official symbol: {name}" if name else "",
        f"Aliases: {rec['otheraliases']}" if rec.get("otheraliases") else "",
        f"Chromosome: {rec['chromosome']}" if rec.get("chromosome") else "",
        f"Location: {rec['maplocation']}" if rec.get("maplocation") else "",
        f"Organism: {organism}" if organism else "",
    ])
    summary = rec.get("summary", "")
    paragraph = f"{facts}. {summary}" if summary else facts
    title = f"{name} ({desc})" if desc else name
    return EvidenceItem(
        RetrieverId.GENE,
        title or uid,
        cap_snippet(title or uid, paragraph),
        f"https://www.ncbi.nlm.nih.gov/gene/{uid}",
    )


def _snp_item(uid: str, rec: dict) -> EvidenceItem:
    rsid = f"rs{rec.get('snp_id', uid)}"
    genes = ", ".join(g.get("name", "") for g in rec.get("genes") or [] if g.get("name"))
    paragraph = _join([
        f"Genes: {genes}" if genes else "",
        f"Chromosome: {rec['chr']}" if rec.get("chr") else "",
        f"Position: {rec['chrpos']}" if rec.get("chrpos") else "",
        f"Function class: {rec['fxn_class']}" if rec.get("fxn_class") else "",
        f"Clinical significance: {rec['clinical_significance']}" if rec.get("clinical_significance") else "",
    ])
    return EvidenceItem(
        RetrieverId.DBSNP,
        rsid,
        cap_snippet(rsid, paragraph),
        f"https://www.ncbi.nlm.nih.gov/snp/{rsid}",
    )


def _protein_item(uid: str, rec: dict) -> EvidenceItem:
    title = rec.get("title", "") or rec.get("caption", "") or uid
    accession = rec.get("accessionversion") or rec.get("caption") or ""
    paragraph = _join([
        f"Accession: {accession}" if accession else "",
        f"Length: {rec['slen']} aa" if rec.get("slen") else "",
        f"Organism: {rec['organism']}" if rec.get("organism") else "",
    ])
    return EvidenceItem(
        RetrieverId.PROTEIN,
        title,
        cap_snippet(title, paragraph),
        f"https://www.ncbi.nlm.nih.gov/protein/{accession or uid}",
    )


def _generic_item(source: RetrieverId, db: str, uid: str, rec: dict) -> EvidenceItem:
    title = next(
        (str(rec[k]) for k in ("title", "organism_name", "name", "caption", "defline") if rec.get(k)),
        uid,
    )
    scalars = [
        f"{key}: {value}"
        for key, value in sorted(rec.items())
        if key != "uid" and isinstance(value, (str, int, float)) and not isinstance(value, bool) and str(value)
    ]
    return EvidenceItem(source, title, cap_snippet(title, _join(scalars)), f"https://www.ncbi.nlm.nih.gov/{db}/{uid}")


def map_summary(source: RetrieverId, summary: dict, max_results: int) -> list[EvidenceItem]:
    """Turn an esummary JSON body into evidence items, in UID order."""
    result = summary.get("result") or {}
    items = []
    for uid in result.get("uids", [])[:max_results]:
        rec = result.get(uid)
        if not isinstance(rec, dict) or rec.get("error"):
            continue
        if source is RetrieverId.GENE:
            items.append(_gene_item(uid, rec))
        elif source is RetrieverId.DBSNP:
            items.append(_snp_item(uid, rec))
        elif source is RetrieverId.PROTEIN:
            items.append(_protein_item(uid, rec))
        else:
            items.append(_generic_item(source, ENTREZ_DB[source], uid, rec))
    return items


class EntrezClient:
    replaying = False

    def __init__(
        self,
        api_key: str | None = None,
        base_url: str = EUTILS_BASE,
        rate: float | None = None,
        limiter: TokenBucket | None = None,
        timeout: float = 30.0,
        transport: httpx.BaseTransport | None = None,
        tool: str = "biorag",
        email: str | None = None,
    ):
        self.api_key = api_key if api_key is not None else os.environ.get("BIORAG_NCBI_API_KEY")
        self.base_url = base_url.rstrip("/")
        self.tool = tool
        self.email = email
        self.limiter = limiter or limiter_for(self.base_url, rate or 3.0)
        self._client = httpx.Client(timeout=timeout, transport=transport)

    def _params(self, **extra) -> dict:
        params = {"retmode": "json", "tool": self.tool, **extra}
        if self.api_key:
            params["api_key"] = self.api_key
        if self.email:
            params["email"] = self.email
        return params

    def lookup(self, db: RetrieverId, term: str, max_results: int) -> list[EvidenceItem]:
        name = ENTREZ_DB[db]
        try:
            found = get_json(
                self._client,
                f"{self.base_url}/esearch.fcgi",
                self._params(db=name, term=term, retmax=max_results),
                self.limiter,
            )
            ids = [str(i) for i in (found.get("esearchresult") or {}).get("idlist", [])][:max_results]
            if not ids:
                return []
            summary = get_json(
                self._client,
                f"{self.base_url}/esummary.fcgi",
                self._params(db=name, id=",".join(ids)),
                self.limiter,
            )
        except (httpx.HTTPError, ValueError) as exc:
            raise RetrieverFailure(db, exc) from exc
        return map_summary(db, summary, max_results)
