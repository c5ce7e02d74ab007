"""Linear knowledge graph embedding models and relation-type diagnostics."""

__version__ = "0.1.0"

from .data import (  # noqa: F401
    Dataset,
    RawTriple,
    RelationTaxonomy,
    TripleStore,
    Vocab,
    build_vocab,
    encode_store,
    load_dataset,
    load_split,
    load_taxonomy,
    resplit_nell,
)
from .models import Dims, ModelKind, ModelParams, init_params, score  # noqa: F401
