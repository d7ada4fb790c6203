import json
import os
import pathlib

import pytest

ROOT = pathlib.Path(__file__).resolve().parents[2]
SCHEMA_DIR = pathlib.Path(os.environ.get("WEASUL_SCHEMA_DIR", ROOT / "schema"))
FIXTURE_DIR = ROOT / "tests" / "fixtures"


def _load(name):
    with open(SCHEMA_DIR / name, encoding="utf-8") as fh:
        return json.load(fh)


@pytest.fixture(scope="session")
def api_schema():
    return _load("label_server_api.schema.json")


@pytest.fixture(scope="session")
def record_schema():
    return _load("run_history_record.schema.json")


@pytest.fixture(scope="session")
def validate_api(api_schema, record_schema):
    """validate_api(instance, "state") checks against one of the API definitions."""
    import jsonschema
    from referencing import Registry, Resource

    registry = Registry().with_resources(
        (schema["$id"], Resource.from_contents(schema)) for schema in (api_schema, record_schema)
    )

    def check(instance, definition):
        schema = {"$ref": f"{api_schema['$id']}#/$defs/{definition}"}
        jsonschema.Draft202012Validator(schema, registry=registry).validate(instance)

    return check


@pytest.fixture(scope="session")
def synthetic():
    import weasul

    return weasul.generate_gaussian_mixture({"seed": 3, "n_train": 2000, "n_test": 600})


@pytest.fixture(scope="session")
def cli_binary():
    path = os.environ.get("WEASUL_CLI")
    if not path or not pathlib.Path(path).exists():
        pytest.skip("WEASUL_CLI is not set to a built command-line binary")
    return path
