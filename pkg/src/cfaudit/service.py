"""HTTP facade for interactive what-if exploration and batch audits.

State lives in memory: models and datasets are loaded through explicit
endpoints, sessions wrap one instance plus its editable constraints, and
long-running audits become background jobs polled via /jobs/{id}.
Requests for one session are serialized by a per-session lock so its
history stays linear; distinct sessions proceed concurrently. With the
same loaded artifacts and the same seeds, identical requests produce
identical response bodies.

All endpoints live under /v1. Errors use one shape:

    {"error": {"code": "infeasible_space", "detail": "..."}}
"""

from __future__ import annotations

import contextlib
import json
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse

from . import audit as audit_mod
from .dataset import Dataset, DatasetStats, compute_stats, dataset_from_rows, load_csv
from .engine import (
    Constraints,
    GAConfig,
    constraints_from_dict,
    constraints_to_dict,
    generate_counterfactuals,
    result_to_dict,
)
from .errors import (
    AuditError,
    CfauditError,
    ConstraintError,
    DataError,
    DistanceError,
    InfeasibleSpaceError,
    InstanceValidationError,
    PredictorProtocolError,
    SchemaError,
    TimeBudgetError,
    TrainingError,
)
from .external import connect_external
from .predictors import load_model
from .schema import FeatureSchema, schema_from_dict, schema_to_dict

DEFAULT_TIME_BUDGET_S = 60.0

_AUDIT_KINDS = ("robustness", "burden", "importance", "individual_fairness")


class _NotFound(Exception):
    pass


@dataclass
class LoadedModel:
    id: str
    predictor: object
    schema: FeatureSchema
    stats: DatasetStats | None
    kind: str


@dataclass
class Session:
    id: str
    model_id: str
    instance: tuple
    input_class: str
    constraints: Constraints
    history: list = field(default_factory=list)
    lock: threading.Lock = field(default_factory=threading.Lock)


@dataclass
class Job:
    id: str
    kind: str
    status: str = "queued"
    report: dict | None = None
    error: dict | None = None


class ServiceState:
    """Everything the endpoints share; safe for threaded access."""

    def __init__(self, time_budget_s: float = DEFAULT_TIME_BUDGET_S, workers: int = 2):
        self.models: dict = {}
        self.datasets: dict = {}
        self.sessions: dict = {}
        self.jobs: dict = {}
        self.time_budget_s = time_budget_s
        self._counters = {"m": 0, "d": 0, "s": 0, "j": 0}
        self._registry_lock = threading.Lock()
        self._pool = ThreadPoolExecutor(max_workers=workers)

    def next_id(self, prefix: str) -> str:
        with self._registry_lock:
            self._counters[prefix] += 1
            return f"{prefix}-{self._counters[prefix]:06d}"

    def add_model(self, predictor, schema, stats, kind) -> LoadedModel:
        model = LoadedModel(self.next_id("m"), predictor, schema, stats, kind)
        self.models[model.id] = model
        return model

    def add_dataset(self, dataset: Dataset) -> str:
        dataset_id = self.next_id("d")
        self.datasets[dataset_id] = dataset
        return dataset_id

    def submit_job(self, kind: str, work) -> Job:
        job = Job(self.next_id("j"), kind)
        self.jobs[job.id] = job

        def run():
            job.status = "running"
            try:
                job.report = work()
                job.status = "done"
            except CfauditError as exc:
                job.error = {"code": _error_code(exc), "detail": str(exc)}
                job.status = "failed"
            except Exception as exc:  # noqa: BLE001 - job must not vanish silently
                job.error = {"code": "internal", "detail": str(exc)}
                job.status = "failed"

        self._pool.submit(run)
        return job

    def snapshot(self) -> dict:
        return {
            "sessions": [
                {
                    "id": s.id,
                    "model_id": s.model_id,
                    "instance": list(s.instance),
                    "input_class": s.input_class,
                    "constraints": constraints_to_dict(s.constraints),
                    "history": s.history,
                }
                for s in self.sessions.values()
            ]
        }

    def write_snapshot(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.snapshot(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def shutdown(self) -> None:
        self._pool.shutdown(wait=False, cancel_futures=True)


def _error_code(exc: Exception) -> str:
    return {
        InstanceValidationError: "invalid_instance",
        ConstraintError: "invalid_constraints",
        SchemaError: "invalid_schema",
        DataError: "invalid_data",
        DistanceError: "distance_error",
        TrainingError: "training_error",
        PredictorProtocolError: "predictor_protocol_error",
        InfeasibleSpaceError: "infeasible_space",
        TimeBudgetError: "time_budget_exceeded",
        AuditError: "audit_error",
    }.get(type(exc), "internal")


_STATUS_FOR = {
    "invalid_instance": 422,
    "invalid_constraints": 422,
    "invalid_schema": 422,
    "invalid_data": 422,
    "distance_error": 422,
    "training_error": 422,
    "audit_error": 422,
    "predictor_protocol_error": 502,
    "infeasible_space": 409,
    "time_budget_exceeded": 504,
    "internal": 500,
}


def _error_response(code: str, detail, status: int | None = None) -> JSONResponse:
    return JSONResponse(
        status_code=status or _STATUS_FOR.get(code, 500),
        content={"error": {"code": code, "detail": detail}},
    )


def _fields_detail(exc) -> object:
    field_errors = getattr(exc, "field_errors", None)
    if field_errors:
        return [{"feature": name, "message": message} for name, message in field_errors]
    return str(exc)


def _ga_config(body: dict, fallback_seed: int = 0) -> GAConfig:
    kwargs = {}
    if body.get("seed") is not None:
        kwargs["seed"] = int(body["seed"])
    else:
        kwargs["seed"] = fallback_seed
    if body.get("generations") is not None:
        kwargs["generations"] = int(body["generations"])
    if body.get("population_size") is not None:
        kwargs["population_size"] = int(body["population_size"])
    return GAConfig(**kwargs)


def build_app(state: ServiceState | None = None, snapshot_path=None) -> FastAPI:
    state = state or ServiceState()

    @contextlib.asynccontextmanager
    async def lifespan(app: FastAPI):
        yield
        if snapshot_path is not None:
            state.write_snapshot(snapshot_path)
        state.shutdown()

    app = FastAPI(title="cfaudit", lifespan=lifespan)
    app.state.service = state

    @app.exception_handler(CfauditError)
    async def on_domain_error(request: Request, exc: CfauditError):
        return _error_response(_error_code(exc), _fields_detail(exc))

    @app.exception_handler(RequestValidationError)
    async def on_malformed(request: Request, exc: RequestValidationError):
        return _error_response("validation_error", str(exc), status=422)

    @app.get("/healthz")
    @app.get("/v1/healthz")
    def healthz():
        return {"status": "ok", "models": len(state.models), "sessions": len(state.sessions)}

    @app.post("/v1/models", status_code=201)
    def load_model_endpoint(body: dict):
        if "path" in body:
            try:
                predictor, stats, _ = load_model(body["path"])
            except OSError as exc:
                raise DataError(f"cannot read model file {body['path']}: {exc}") from exc
            model = state.add_model(predictor, predictor.schema, stats, predictor.kind)
        elif "endpoint" in body:
            if "schema" not in body:
                raise SchemaError("external models need a schema payload")
            schema = schema_from_dict(body["schema"])
            stats = DatasetStats.from_dict(body["stats"]) if body.get("stats") else None
            predictor = connect_external(body["endpoint"])
            model = state.add_model(predictor, schema, stats, "external")
        else:
            raise SchemaError("body must carry 'path' or 'endpoint'")
        return {
            "id": model.id,
            "kind": model.kind,
            "classes": list(model.schema.classes),
            "schema": schema_to_dict(model.schema),
        }

    @app.post("/v1/datasets", status_code=201)
    def load_dataset_endpoint(body: dict):
        if "csv_path" in body:
            schema = (
                schema_from_dict(body["schema"]) if "schema" in body
                else _model_schema(body)
            )
            dataset = load_csv(body["csv_path"], schema)
        elif "rows" in body:
            schema = schema_from_dict(body["schema"]) if "schema" in body else _model_schema(body)
            rows = [tuple(row) for row in body["rows"]]
            dataset = dataset_from_rows(rows, schema)
        else:
            raise DataError("body must carry 'csv_path' or 'rows'")
        dataset_id = state.add_dataset(dataset)
        return {
            "id": dataset_id,
            "n_rows": len(dataset.rows),
            "classes": list(schema.classes),
        }

    def _model_schema(body: dict) -> FeatureSchema:
        model = _get_model(body.get("model_id"))
        return model.schema

    def _get_model(model_id) -> LoadedModel:
        model = state.models.get(model_id)
        if model is None:
            raise _NotFound(f"unknown model {model_id!r}")
        return model

    def _get_dataset(dataset_id) -> Dataset:
        dataset = state.datasets.get(dataset_id)
        if dataset is None:
            raise _NotFound(f"unknown dataset {dataset_id!r}")
        return dataset

    def _get_session(session_id) -> Session:
        session = state.sessions.get(session_id)
        if session is None:
            raise _NotFound(f"unknown session {session_id!r}")
        return session

    @app.post("/v1/sessions", status_code=201)
    def create_session(body: dict):
        model = _get_model(body.get("model_id"))
        instance = model.schema.validate_instance(body.get("instance", ()))
        input_class = model.predictor.predict_batch([instance])[0]
        session = Session(
            id=state.next_id("s"),
            model_id=model.id,
            instance=instance,
            input_class=input_class,
            constraints=Constraints(),
        )
        state.sessions[session.id] = session
        return {
            "id": session.id,
            "model_id": model.id,
            "instance": list(instance),
            "input_class": input_class,
            "constraints": constraints_to_dict(session.constraints),
            "schema": schema_to_dict(model.schema),
        }

    @app.patch("/v1/sessions/{session_id}/constraints")
    def patch_constraints(session_id: str, body: dict):
        session = _get_session(session_id)
        model = _get_model(session.model_id)
        with session.lock:
            merged = constraints_from_dict(model.schema, body, base=session.constraints)
            muted = merged.effective_muted(model.schema)
            if len(muted) == model.schema.n:
                raise ConstraintError(
                    [("*", "every feature is muted; the search space is just the input")]
                )
            session.constraints = merged
            return {"id": session.id, "constraints": constraints_to_dict(merged)}

    @app.post("/v1/sessions/{session_id}/counterfactuals")
    def request_counterfactuals(session_id: str, body: dict | None = None):
        body = body or {}
        session = _get_session(session_id)
        model = _get_model(session.model_id)
        with session.lock:
            constraints = session.constraints
            if body.get("k") is not None or body.get("target_class") is not None:
                patch = {}
                if body.get("k") is not None:
                    patch["k"] = body["k"]
                if "target_class" in body:
                    patch["target_class"] = body["target_class"]
                constraints = constraints_from_dict(model.schema, patch, base=constraints)
            config = _ga_config(body)
            result = generate_counterfactuals(
                session.instance, model.predictor, model.schema, model.stats,
                constraints=constraints, config=config,
                time_budget_s=state.time_budget_s,
            )
            payload = result_to_dict(result, model.schema)
            payload["session_id"] = session.id
            payload["seed"] = config.seed
            session.history.append(
                {
                    "constraints": constraints_to_dict(constraints),
                    "result": {k: v for k, v in payload.items() if k != "session_id"},
                    "timestamp": time.time(),
                }
            )
            payload["history_length"] = len(session.history)
            return payload

    @app.post("/v1/audits/{kind}", status_code=202)
    def run_audit(kind: str, body: dict):
        if kind not in _AUDIT_KINDS:
            raise _NotFound(f"unknown audit kind {kind!r}")
        model = _get_model(body.get("model_id"))
        dataset = _get_dataset(body.get("dataset_id"))
        config = _ga_config(body)
        common = {
            "config": config,
            "sample_size": body.get("sample_size"),
            "only_correct": body.get("only_correct", True),
            "use_heldout": body.get("use_heldout", True),
        }
        if kind == "robustness":
            work = lambda: audit_mod.audit_robustness(model.predictor, dataset, **common).to_dict()
        elif kind == "burden":
            group_by = body.get("group_by") or []
            for name in group_by:
                spec = dataset.schema.feature(name)  # raises on unknown names
                if spec.is_continuous:
                    raise AuditError(f"burden grouping requires categorical features: {name!r}")
            if not group_by:
                raise AuditError("burden needs 'group_by'")
            work = lambda: audit_mod.burden(model.predictor, dataset, group_by, **common).to_dict()
        elif kind == "importance":
            work = lambda: audit_mod.feature_importance(model.predictor, dataset, **common).to_dict()
        else:
            protected = body.get("protected") or []
            if not protected:
                raise AuditError("individual_fairness needs 'protected'")
            for name in protected:
                dataset.schema.feature(name)
            threshold = float(body.get("threshold", 0.05))
            work = lambda: audit_mod.audit_fairness(
                model.predictor, dataset, protected, threshold=threshold, **common
            ).to_dict()
        job = state.submit_job(kind, work)
        return {"job_id": job.id, "status": job.status}

    @app.get("/v1/jobs/{job_id}")
    def get_job(job_id: str):
        job = state.jobs.get(job_id)
        if job is None:
            raise _NotFound(f"unknown job {job_id!r}")
        return {"id": job.id, "kind": job.kind, "status": job.status,
                "report": job.report, "error": job.error}

    @app.exception_handler(_NotFound)
    async def on_not_found(request: Request, exc: _NotFound):
        return _error_response("not_found", str(exc), status=404)

    return app
