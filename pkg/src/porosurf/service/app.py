"""FastAPI application exposing the porosurf pipeline.

All heavy lifting happens in the core package; handlers translate payloads,
run the requested stage synchronously, and map package exceptions onto a
stable error contract: ``{"detail": {"kind": ..., "message": ...}}`` with
kinds io / spec / invalid-input / data / compat / numerical.  Thin clients
(the bundled CLI) turn those kinds into exit codes.
"""
from __future__ import annotations

import os
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException

from .. import __version__, bench, export, persist
from ..errors import (CompatibilityError, DataError, InvalidInput,
                      NumericalFailure, PorosurfError)
from . import schemas

ENV_SEED = "POROSURF_SEED"


def _error_kind(exc: Exception) -> tuple[int, str]:
    if isinstance(exc, (InvalidInput,)):
        return 400, "invalid-input"
    if isinstance(exc, DataError):
        return 409, "data"
    if isinstance(exc, CompatibilityError):
        return 409, "compat"
    if isinstance(exc, NumericalFailure):
        return 500, "numerical"
    if isinstance(exc, FileNotFoundError):
        return 404, "io"
    if isinstance(exc, OSError):
        return 400, "io"
    return 500, "internal"


def _raise_http(exc: Exception):
    status, kind = _error_kind(exc)
    raise HTTPException(status_code=status,
                        detail={"kind": kind, "message": str(exc)}) from exc


def _default_seed(seed: int | None) -> int:
    if seed is not None:
        return int(seed)
    return int(os.environ.get(ENV_SEED, "0"))


def _resolve_spec(payload: schemas.SpecPayload) -> bench.BenchmarkSpec:
    if (payload.benchmark is None) == (payload.spec is None):
        raise InvalidInput("provide exactly one of 'benchmark' or 'spec'")
    if payload.spec is not None:
        try:
            return bench.BenchmarkSpec.from_dict(payload.spec)
        except (TypeError, KeyError) as exc:
            raise InvalidInput(f"malformed benchmark spec: {exc}") from exc
    b = payload.benchmark
    if b.kind == bench.CONSOLIDATION:
        if b.l_z is None:
            raise InvalidInput("consolidation needs l_z")
        return bench.consolidation_spec(b.sigma, b.l_x, b.l_z,
                                        profile=b.profile, **b.overrides)
    return bench.subsidence_spec(b.sigma, b.l_x, profile=b.profile,
                                 **b.overrides)


def create_app() -> FastAPI:
    app = FastAPI(title="porosurf", version=__version__,
                  description="DeepONet surrogate pipeline for poroelasticity "
                              "with random permeability fields")

    @app.get("/health")
    def health():
        return {"status": "ok", "version": __version__}

    @app.post("/benchmarks/resolve", response_model=schemas.SpecResponse)
    def resolve(payload: schemas.SpecPayload):
        try:
            spec = _resolve_spec(payload)
            d = spec.to_dict()
            return schemas.SpecResponse(spec=d, spec_sha256=persist.spec_hash(d),
                                        m_y=spec.m_y,
                                        kl_points=spec.kl_points_count())
        except PorosurfError as exc:
            _raise_http(exc)

    @app.post("/datasets", response_model=schemas.GenDataResponse)
    def gen_data(req: schemas.GenDataRequest):
        try:
            spec = _resolve_spec(req)
            seed = _default_seed(req.seed)
            manifest = bench.generate_dataset(spec, req.out_dir, seed=seed,
                                              workers=req.workers)
            timings = persist.read_timings(req.out_dir)
            return schemas.GenDataResponse(
                dataset_dir=str(Path(req.out_dir)),
                spec_sha256=manifest["spec_sha256"], seed=manifest["seed"],
                n_train=manifest["n_train"], n_test=manifest["n_test"],
                variables=manifest["variables"],
                fem_seconds=timings.get("fem_seconds", 0.0))
        except (PorosurfError, OSError) as exc:
            _raise_http(exc)

    @app.post("/trainings", response_model=schemas.TrainResponse)
    def train(req: schemas.TrainRequest):
        try:
            dataset = persist.load_dataset(req.dataset_dir)
            out_dir = req.out_dir or str(
                Path(req.dataset_dir).parent / "models"
                / f"{req.variable}_M{req.m_modes}")
            model, manifest = bench.train_variable(
                dataset, req.variable, req.m_modes, out_dir,
                seed=_default_seed(req.seed), k_multiplier=req.k_multiplier,
                opt_overrides=req.optimizer_overrides or None)
            timings = persist.read_timings(out_dir)
            return schemas.TrainResponse(
                checkpoint_dir=str(Path(out_dir)), variable=model.variable,
                M=model.M, K=model.K,
                trunk_final_loss=manifest["trunk_final_loss"],
                train_seconds=timings.get("train_seconds", 0.0))
        except (PorosurfError, OSError) as exc:
            _raise_http(exc)

    @app.post("/evaluations", response_model=schemas.EvalResponse)
    def evaluate(req: schemas.EvalRequest):
        try:
            model, _, _ = persist.load_checkpoint(req.checkpoint_dir)
            dataset = persist.load_dataset(req.dataset_dir)
            metrics = bench.evaluate_model(model, dataset, split=req.split,
                                           baseline=req.baseline)
            persist.write_json(Path(req.checkpoint_dir)
                               / f"metrics_{req.split}.json", metrics)
            return schemas.EvalResponse(**metrics)
        except (PorosurfError, OSError) as exc:
            _raise_http(exc)

    @app.post("/predictions", response_model=schemas.PredictResponse)
    def predict(req: schemas.PredictRequest):
        try:
            model, _, _ = persist.load_checkpoint(req.checkpoint_dir)
            xi = np.asarray(req.xi, dtype=float)
            pts = np.asarray(req.points, dtype=float)
            if pts.ndim != 2 or pts.shape[1] != 3:
                raise InvalidInput("points must be (n, 3) rows of (x, z, t)")
            values = model.predict_batch(xi, pts)
            frac = float(np.mean(model.extrapolation_mask(pts)))
            return schemas.PredictResponse(values=values.tolist(),
                                           extrapolation_fraction=frac)
        except (PorosurfError, OSError) as exc:
            _raise_http(exc)

    @app.post("/exports", response_model=schemas.ExportResponse)
    def export_fields(req: schemas.ExportRequest):
        try:
            model, _, _ = persist.load_checkpoint(req.checkpoint_dir)
            dataset_coords = fem_flat = None
            if req.dataset_dir:
                dataset = persist.load_dataset(req.dataset_dir)
                if model.variable not in dataset.variables:
                    raise CompatibilityError(
                        f"dataset lacks variable {model.variable!r}")
                if not 0 <= req.row < dataset.xi.shape[0]:
                    raise InvalidInput(f"row {req.row} out of range")
                xi_row = dataset.xi[req.row]
                dataset_coords = dataset.coords
                fem_flat = dataset.fields[model.variable][req.row]
                spec = bench.BenchmarkSpec.from_dict(dataset.manifest["spec"])
                xs = req.xs or list(spec.output_xs)
                zs = req.zs or list(spec.output_zs)
            elif req.xi is not None:
                xi_row = np.asarray(req.xi, dtype=float)
                if req.xs is None or req.zs is None:
                    raise InvalidInput("xs and zs are required without a dataset")
                xs, zs = req.xs, req.zs
            else:
                raise InvalidInput("provide a dataset_dir/row or an xi vector")
            files = export.export_time_slices(
                model, xi_row, xs, zs, req.times, req.out_dir,
                svg=req.svg, dataset_coords=dataset_coords, fem_flat=fem_flat)
            return schemas.ExportResponse(files=files)
        except (PorosurfError, OSError) as exc:
            _raise_http(exc)

    @app.post("/pipelines", response_model=schemas.PipelineResponse)
    def pipeline(req: schemas.PipelineRequest):
        try:
            spec = _resolve_spec(req)
            report = bench.run_pipeline(
                spec, req.out_dir, seed=_default_seed(req.seed),
                train_seed=_default_seed(req.train_seed), workers=req.workers)
            return schemas.PipelineResponse(run_dir=str(Path(req.out_dir)),
                                            report=report)
        except (PorosurfError, OSError) as exc:
            _raise_http(exc)

    @app.post("/reports", response_model=schemas.ReportResponse)
    def report(req: schemas.ReportRequest):
        try:
            reports = [persist.read_json(Path(d) / "report.json")
                       for d in req.run_dirs]
            return schemas.ReportResponse(csv=bench.study_table(reports),
                                          reports=reports)
        except (PorosurfError, OSError) as exc:
            _raise_http(exc)

    return app


app = create_app()
