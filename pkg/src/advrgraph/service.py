"""HTTP API over the pipeline: sweeps, comparison graphs, neuron details, edits.

All artifacts are immutable canonical documents in the content-addressed
store; GETs stream stored bytes unchanged, long computations run as polled
background jobs deduplicated per cache key.
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

from fastapi import FastAPI, Request, Response
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from .assets import synthesize_feature_vis, to_png, top_patches
from .errors import ConfigError, NotFoundError
from .jobs import JobManager, JobQueueFull
from .model import NeuronId
from .pipeline import PipelineContext, RunConfig, compute_comparison, comparison_key, evaluate_edits
from .store import canonical_bytes

PATCH_COUNT = 9
FEATURE_VIS_STEPS = 96
FEATURE_VIS_STEP_SIZE = 0.1


def neuron_seed(model_digest: str, neuron: NeuronId) -> int:
    h = hashlib.sha256(f"{model_digest}:{neuron.key()}".encode()).hexdigest()
    return int(h[:8], 16)


def ensure_neuron_assets(ctx: PipelineContext, neuron: NeuronId,
                         pixel_range: tuple[float, float] = (0.0, 1.0)) -> dict:
    """Generate (once) and describe the patch strip and feature-vis image."""
    rel = Path("assets") / ctx.model.weight_digest[:16] / neuron.layer / str(neuron.channel)
    directory = ctx.root / rel
    meta_path = directory / "meta.json"
    if meta_path.exists():
        return json.loads(meta_path.read_text())

    patches = top_patches(ctx.model, ctx.dataset.images, ctx.dataset.ids, neuron, PATCH_COUNT)
    patch_docs = []
    for i, ref in enumerate(patches):
        r0, c0, r1, c1 = ref.box
        crop = ctx.dataset.images[ref.image_id][r0:r1, c0:c1]
        name = f"patch_{i}.png"
        to_png(crop, directory / name, pixel_range, scale=8)
        patch_docs.append({
            "imageId": ref.image_id,
            "box": list(ref.box),
            "activation": ref.activation,
            "uri": f"/{rel.as_posix()}/{name}",
        })
    vis = synthesize_feature_vis(ctx.model, neuron, FEATURE_VIS_STEPS, FEATURE_VIS_STEP_SIZE,
                                 neuron_seed(ctx.model.weight_digest, neuron), pixel_range)
    to_png(vis.image, directory / "featurevis.png", pixel_range, scale=8)
    meta = {
        "layer": neuron.layer,
        "channel": neuron.channel,
        "patches": patch_docs,
        "featureVis": {
            "uri": f"/{rel.as_posix()}/featurevis.png",
            "objective": vis.objective,
            "steps": vis.steps,
            "seed": vis.seed,
        },
    }
    directory.mkdir(parents=True, exist_ok=True)
    meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True))
    return meta


def neuron_detail(ctx: PipelineContext, key: str, layer: str, channel: int) -> dict:
    doc = ctx.store.get_json(key)
    node = next((n for n in doc["nodes"] if n["layer"] == layer and n["channel"] == channel), None)
    if node is None:
        raise NotFoundError(f"neuron {layer}/{channel} not in graph {key}")
    incoming = [e for e in doc["edges"]
                if e["targetLayer"] == layer and e["targetChannel"] == channel]
    incoming.sort(key=lambda e: (-e["weight"], e["sourceChannel"]))
    assets = ensure_neuron_assets(ctx, NeuronId(layer, channel),
                                  tuple(doc["pixelRange"]))
    return {
        **node,
        "incomingEdges": incoming,
        "patches": assets["patches"],
        "featureVis": assets["featureVis"],
    }


def create_app(root: Path | None = None, frontend_dir: Path | None = None,
               workers: int = 2, capacity: int = 16) -> FastAPI:
    ctx = PipelineContext.open(root)
    jobs = JobManager(workers=workers, capacity=capacity)
    app = FastAPI(title="advrgraph", docs_url=None, redoc_url=None)
    app.state.ctx = ctx
    app.state.jobs = jobs

    @app.exception_handler(ConfigError)
    async def _config_error(_req: Request, exc: ConfigError):
        return JSONResponse({"error": str(exc)}, status_code=422)

    @app.exception_handler(NotFoundError)
    async def _not_found(_req: Request, exc: NotFoundError):
        return JSONResponse({"error": str(exc.args[0] if exc.args else exc)}, status_code=404)

    @app.exception_handler(JobQueueFull)
    async def _queue_full(_req: Request, exc: JobQueueFull):
        return JSONResponse({"error": str(exc)}, status_code=503)

    def parse_run_config(body: dict) -> RunConfig:
        if not isinstance(body, dict):
            raise ConfigError("body must be a JSON object")
        required = ("benignClass", "targetClass")
        for field in required:
            if field not in body:
                raise ConfigError(f"missing field {field!r}")
        cfg = RunConfig.from_mapping({
            "benign_class": body["benignClass"],
            "target_class": body["targetClass"],
            "method": body.get("method"),
            "strengths": body.get("strengths"),
            "k": body.get("k"),
            "m": body.get("m"),
            "reducer": body.get("reducer"),
        })
        return cfg.validate(ctx.model.num_classes)

    async def json_body(request: Request) -> dict:
        try:
            return await request.json()
        except Exception as exc:
            raise ConfigError(f"body is not valid JSON: {exc}") from exc

    @app.post("/api/v1/graphs")
    async def post_graph(request: Request):
        cfg = parse_run_config(await json_body(request))
        key = comparison_key(ctx.model.weight_digest, cfg)
        if ctx.store.has(key):
            return {"resultKey": key, "cached": True}
        status = jobs.submit(
            key, lambda progress: compute_comparison(ctx, cfg, progress=progress)[0])
        return {"jobId": status.job_id}

    @app.get("/api/v1/graphs/{key}")
    async def get_graph(key: str):
        return Response(content=ctx.store.get_bytes(key), media_type="application/json")

    @app.get("/api/v1/jobs/{job_id}")
    async def get_job(job_id: str):
        status = jobs.get(job_id)
        if status is None:
            raise NotFoundError(f"unknown job {job_id}")
        return status.to_doc()

    @app.get("/api/v1/neurons/{layer}/{channel}")
    async def get_neuron(layer: str, channel: int, key: str):
        return neuron_detail(ctx, key, layer, channel)

    @app.post("/api/v1/edits")
    async def post_edits(request: Request):
        body = await json_body(request)
        if not isinstance(body, dict) or "key" not in body:
            raise ConfigError("body must carry 'key' and 'neurons'")
        neurons = [NeuronId(str(n["layer"]), int(n["channel"]))
                   for n in body.get("neurons", [])]
        _report_key, report = evaluate_edits(ctx, str(body["key"]), neurons)
        return Response(content=canonical_bytes(report), media_type="application/json")

    @app.get("/api/v1/attack-curve")
    async def get_curve(key: str):
        doc = ctx.store.get_json(key)
        return {"attackCurve": doc["attackCurve"]}

    @app.get("/api/v1/classes")
    async def get_classes():
        return {"classes": [{"index": i, "name": name}
                            for i, name in enumerate(ctx.dataset.class_names)]}

    @app.get("/api/v1/layers")
    async def get_layers():
        return {"layers": [spec.to_manifest() for spec in ctx.model.layers]}

    @app.get("/api/v1/schema/comparison-graph")
    async def get_schema():
        schema = Path(__file__).parent / "schema" / "comparison_graph.schema.json"
        return Response(content=schema.read_bytes(), media_type="application/json")

    assets_dir = ctx.root / "assets"
    assets_dir.mkdir(parents=True, exist_ok=True)
    app.mount("/assets", StaticFiles(directory=assets_dir), name="assets")

    if frontend_dir is None:
        candidate = Path(__file__).resolve().parents[2] / "frontend" / "dist"
        frontend_dir = candidate if candidate.exists() else None
    if frontend_dir is not None and Path(frontend_dir).exists():
        app.mount("/", StaticFiles(directory=frontend_dir, html=True), name="ui")

    return app
