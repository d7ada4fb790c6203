"""Active weak supervision: matrix-completion label model with expert feedback."""

import json

from . import _core
from ._core import (
    BucketIndex,
    Dataset,
    DependencyStructure,
    FitConfig,
    LabelMatrix,
    WeasulError,
    accuracy,
    auto_alpha,
    binarize,
    build_buckets,
    diversity_entropy,
    f1,
    fit,
    gradient,
    loss_base,
    make_moment_input,
    objective,
    predict_bucket,
    predict_points,
    recover_moments,
    synthetic_dependency,
)

__all__ = [
    "BucketIndex", "Dataset", "DependencyStructure", "FitConfig", "LabelMatrix", "LabelServer",
    "WeasulError", "accuracy", "auto_alpha", "binarize", "build_buckets", "diversity_entropy", "f1",
    "fit", "generate_gaussian_mixture", "gradient", "load_table", "loss_base", "make_moment_input",
    "objective", "predict_bucket", "predict_points", "recover_moments", "run_method",
    "synthetic_dependency",
]


def generate_gaussian_mixture(spec=None):
    """(train, test) datasets for a synthetic spec dict; seed defaults to 0."""
    spec = dict(spec or {})
    spec.setdefault("seed", 0)
    return _core.generate_gaussian_mixture(json.dumps(spec))


def load_table(path, schema):
    return _core.load_table(str(path), json.dumps(schema))


def run_method(method, train, test=None, dependency=None, prior=0.5, strategy="maxkl", budget=30,
               seed=0, fit=None, discriminative=False):
    """Runs one experiment with ground truth as the oracle; returns the history records."""
    dependency = dependency if dependency is not None else synthetic_dependency()
    text = _core.run_method(method, train, test, dependency, prior, strategy, budget, seed,
                            json.dumps(fit or {}), discriminative)
    return [json.loads(line) for line in text.splitlines() if line]


class LabelServer:
    """In-process access to the label server handlers; responses are (status, dict)."""

    def __init__(self, state_dir=None, default_budget=30):
        self._server = _core.LabelServer(None if state_dir is None else str(state_dir), default_budget)

    def register_dataset(self, name, train, test=None, dependency=None, prior=0.5):
        dependency = dependency if dependency is not None else synthetic_dependency()
        self._server.register_dataset(name, train, test, dependency, prior)

    @staticmethod
    def _decode(result):
        status, body = result
        return status, json.loads(body)

    def create_session(self, request):
        body = request if isinstance(request, str) else json.dumps(request)
        return self._decode(self._server.create_session(body))

    def get_query(self, session_id):
        return self._decode(self._server.get_query(session_id))

    def submit_label(self, session_id, request):
        body = request if isinstance(request, str) else json.dumps(request)
        return self._decode(self._server.submit_label(session_id, body))

    def get_state(self, session_id):
        return self._decode(self._server.get_state(session_id))

    def health(self):
        return self._decode(self._server.health())

    def restore_sessions(self):
        return self._server.restore_sessions()

    def bind(self, host="127.0.0.1", port=0):
        return self._server.bind(host, port)

    def listen(self):
        self._server.listen()

    def stop(self):
        self._server.stop()
