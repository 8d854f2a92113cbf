import json
from pathlib import Path

import pytest

from structsql.schema import build_schema_graph, load_schema, load_schemas

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def tables_path() -> Path:
    return FIXTURES / "tables.json"


@pytest.fixture(scope="session")
def content_path() -> Path:
    return FIXTURES / "content.json"


@pytest.fixture(scope="session")
def tennis_doc(tables_path):
    with open(tables_path, encoding="utf-8") as f:
        return next(d for d in json.load(f) if d["db_id"] == "tennis")


@pytest.fixture(scope="session")
def tennis(tables_path, content_path):
    return load_schemas(tables_path, content_path)["tennis"]


@pytest.fixture(scope="session")
def tennis_plain(tennis_doc):
    # Same schema without the value sidecar.
    return load_schema(tennis_doc)


@pytest.fixture(scope="session")
def tennis_graph(tennis):
    return build_schema_graph(tennis)


@pytest.fixture(scope="session")
def concert(tables_path):
    return load_schemas(tables_path)["concert_singer"]
