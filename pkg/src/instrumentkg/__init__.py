"""instrumentkg: research-instrument metadata into a queryable knowledge graph.

Harvests instrument descriptions and their linked artefacts (datasets,
articles) from DataCite/AWI/PANGAEA/Unpaywall-style sources, analyzes
dataset content and article text for usage knowledge, and populates an
in-memory RDF graph that can be queried through a SPARQL subset engine,
the CLI or an HTTP endpoint.
"""

__version__ = "0.1.0"

from .model import (  # noqa: F401
    ArticleRecord,
    DatasetRecord,
    Doi,
    EntityLabel,
    EntitySpan,
    ExperimentDetails,
    InstrumentRecord,
    LinkEdge,
    MalformedDoi,
    normalize_doi,
    validate_instrument,
)
from .store import Iri, Literal, Triple, TripleStore  # noqa: F401
