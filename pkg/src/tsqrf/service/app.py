"""FastAPI application wrapping the core estimation package.

All endpoints are stateless with respect to disk: models travel in request
and response bodies as their serialized JSON documents. A small in-memory
registry additionally lets long-running deployments fit once and serve many
prediction calls.
"""

from __future__ import annotations

import itertools
import threading

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.responses import JSONResponse

from .. import __version__
from ..data import Series, embed, log_returns
from ..estimator import predict_quantiles
from ..evaluation import Scenario, coverage_table, run_simulation
from ..forest import FOREST_FORMAT, Forest, fit_forest, forest_from_doc, forest_to_doc
from ..svgplot import band_chart, histogram_chart
from ..synth import DgpSpec, error_quantile, g_eval_rows, simulate_path
from ..wnw import WNW_FORMAT, fit_wnw, wnw_from_doc, wnw_to_doc
from . import schemas

__all__ = ["create_app", "app"]


def _fit_model_doc(req: schemas.FitRequest) -> dict:
    series = Series(values=np.asarray(req.series, dtype=float))
    if req.log_returns:
        series = log_returns(series)
    train = embed(series, req.p)
    if req.method == "tsqrf":
        forest = fit_forest(train, req.forest.to_config(), threads=req.forest.threads)
        return forest_to_doc(forest)
    return wnw_to_doc(fit_wnw(train, req.wnw.to_config()))


def _load_model(doc: dict):
    fmt = doc.get("format")
    if fmt == FOREST_FORMAT:
        return forest_from_doc(doc)
    if fmt == WNW_FORMAT:
        return wnw_from_doc(doc)
    raise ValueError(f"unrecognized model document format {fmt!r}")


def _predict_with(model, queries, taus) -> list[list[float]]:
    q = np.asarray(queries, dtype=float)
    if q.ndim != 2:
        raise ValueError("queries must be a list of equal-length rows")
    if isinstance(model, Forest):
        preds = predict_quantiles(model, q, taus)
    else:
        preds = model.predict(q, taus)
    return preds.tolist()


def create_app() -> FastAPI:
    app = FastAPI(title="tsqrf", version=__version__)
    app.state.models = {}
    app.state.models_lock = threading.Lock()
    app.state.model_ids = itertools.count(1)

    @app.exception_handler(ValueError)
    async def _value_error(request, exc: ValueError):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.get("/health", response_model=schemas.HealthResponse)
    def health():
        return schemas.HealthResponse(status="ok", name="tsqrf", version=__version__)

    @app.post("/simulate", response_model=schemas.SimulateResponse)
    def simulate(req: schemas.SimulateRequest):
        spec = DgpSpec(model=req.model, error=req.error)
        series = simulate_path(spec, req.length, burn_in=req.burn_in, seed=req.seed)
        quantiles: dict[float, list[float]] = {}
        if req.taus and req.length > spec.p:
            pairs = embed(series, spec.p)
            g = g_eval_rows(spec, pairs.x)
            for tau in req.taus:
                quantiles[float(tau)] = (g + error_quantile(spec.error, float(tau))).tolist()
        return schemas.SimulateResponse(
            values=series.values.tolist(),
            p=spec.p,
            first_t=spec.p + 1,
            true_quantiles=quantiles,
        )

    @app.post("/fit", response_model=schemas.FitResponse)
    def fit(req: schemas.FitRequest):
        return schemas.FitResponse(model=_fit_model_doc(req))

    @app.post("/predict", response_model=schemas.PredictResponse)
    def predict(req: schemas.PredictRequest):
        model = _load_model(req.model)
        return schemas.PredictResponse(predictions=_predict_with(model, req.queries, req.taus))

    @app.post("/models", response_model=schemas.ModelInfo)
    def register_model(req: schemas.FitRequest):
        doc = _fit_model_doc(req)
        model = _load_model(doc)
        with app.state.models_lock:
            model_id = next(app.state.model_ids)
            app.state.models[model_id] = (model, req.method)
        return schemas.ModelInfo(
            model_id=model_id, method=req.method, p=model.p, n_train=len(model.train)
        )

    @app.get("/models", response_model=list[schemas.ModelInfo])
    def list_models():
        with app.state.models_lock:
            return [
                schemas.ModelInfo(model_id=mid, method=method, p=m.p, n_train=len(m.train))
                for mid, (m, method) in sorted(app.state.models.items())
            ]

    @app.post("/models/{model_id}/predict", response_model=schemas.PredictResponse)
    def predict_registered(model_id: int, req: schemas.RegistryPredictRequest):
        with app.state.models_lock:
            entry = app.state.models.get(model_id)
        if entry is None:
            raise HTTPException(status_code=404, detail=f"no model with id {model_id}")
        return schemas.PredictResponse(
            predictions=_predict_with(entry[0], req.queries, req.taus)
        )

    @app.delete("/models/{model_id}")
    def delete_model(model_id: int):
        with app.state.models_lock:
            if model_id not in app.state.models:
                raise HTTPException(status_code=404, detail=f"no model with id {model_id}")
            del app.state.models[model_id]
        return {"deleted": model_id}

    @app.post("/bench", response_model=schemas.BenchResponse)
    def bench(req: schemas.BenchRequest):
        grid = [
            Scenario(model=m, error=e, t_train=t)
            for m in req.models
            for e in req.errors
            for t in req.t_train
        ]
        result = run_simulation(
            grid,
            req.replicates,
            req.seed,
            req.methods,
            taus=req.taus,
            t_test=req.t_test,
            forest_config=req.forest.to_config(),
            wnw_config=req.wnw.to_config(),
            burn_in=req.burn_in,
            threads=req.threads,
        )
        return schemas.BenchResponse(
            report_train=[r.to_dict() for r in result.train_rows],
            report_test=[r.to_dict() for r in result.test_rows],
            bias_samples=result.bias_samples,
        )

    @app.post("/coverage", response_model=schemas.CoverageResponse)
    def coverage(req: schemas.CoverageRequest):
        series = Series(values=np.asarray(req.values, dtype=float))
        if req.prices:
            series = log_returns(series)
        n_train = req.n_train if req.n_train is not None else int(round(req.train_frac * len(series)))
        rows = coverage_table(
            series,
            req.p,
            n_train,
            req.taus,
            req.methods,
            forest_config=req.forest.to_config(),
            wnw_config=req.wnw.to_config(),
        )
        return schemas.CoverageResponse(rows=[r.to_dict() for r in rows], n_train=n_train)

    @app.post("/plot/bands", response_model=schemas.PlotResponse)
    def plot_bands(req: schemas.PlotBandsRequest):
        svg = band_chart(req.t, req.quantiles, series=req.series, title=req.title)
        return schemas.PlotResponse(svg=svg)

    @app.post("/plot/histogram", response_model=schemas.PlotResponse)
    def plot_histogram(req: schemas.PlotHistogramRequest):
        svg = histogram_chart(req.values, bins=req.bins, title=req.title)
        return schemas.PlotResponse(svg=svg)

    return app


app = create_app()
