"""HTTP service over the annotation store, consumed by the review UI.

Endpoints:
  GET  /api/queue?status=draft&page=0&page_size=50   paged record listing
  GET  /api/records/{seq}/{idx}                      full record (incl. GT box)
  PUT  /api/records/{seq}/{idx}                      store full annotation
  POST /api/validate                                 dry-run format check
  GET  /api/frames/{seq}/{idx}                       frame PNG, no overlay

The frame is served clean; the ground-truth box travels as JSON so clients
can draw (and toggle) the overlay themselves. Submitting a record as
"reviewed" while it has error findings is rejected with 422.
"""

from __future__ import annotations

from pathlib import Path

from fastapi import FastAPI, HTTPException, Query
from fastapi.responses import FileResponse, JSONResponse

from soi_forge.annotations import AnnotationStore, SoiAnnotation, validate


def create_app(
    store: AnnotationStore,
    frames_root: str | Path | None = None,
    static_dir: str | Path | None = None,
) -> FastAPI:
    app = FastAPI(title="soi-forge annotation review")

    @app.get("/api/queue")
    def queue(status: str | None = Query(default=None), page: int = 0,
              page_size: int = 50):
        return store.query(status=status, page=page, page_size=page_size)

    @app.get("/api/records/{sequence}/{frame_index}")
    def get_record(sequence: str, frame_index: int):
        record = store.get(sequence, frame_index)
        if record is None:
            raise HTTPException(status_code=404, detail="unknown record")
        return record

    @app.put("/api/records/{sequence}/{frame_index}")
    def put_record(sequence: str, frame_index: int, body: dict):
        body = dict(body)
        body["sequence"] = sequence
        body["frame_index"] = frame_index
        gt = body.pop("gt", None)
        body.pop("validation", None)
        try:
            annotation = SoiAnnotation.from_dict(body)
        except (TypeError, ValueError) as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        report = validate(annotation)
        if annotation.status == "reviewed" and report.errors():
            return JSONResponse(
                status_code=422,
                content={"detail": "format errors block review", **report.to_dict()},
            )
        return store.put(annotation, report, gt=gt)

    @app.post("/api/validate")
    def dry_run(body: dict):
        body = dict(body)
        body.setdefault("sequence", "_dry_run")
        body.setdefault("frame_index", 0)
        body.pop("gt", None)
        body.pop("validation", None)
        try:
            annotation = SoiAnnotation.from_dict(body)
        except (TypeError, ValueError) as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return validate(annotation).to_dict()

    @app.get("/api/frames/{sequence}/{frame_index}")
    def get_frame(sequence: str, frame_index: int):
        if frames_root is None:
            raise HTTPException(status_code=404, detail="no frames root configured")
        path = Path(frames_root) / sequence / "img" / f"{frame_index + 1:08d}.png"
        if not path.exists():
            raise HTTPException(status_code=404, detail="unknown frame")
        return FileResponse(path, media_type="image/png")

    if static_dir is not None and Path(static_dir).exists():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")

    return app


def serve_annotations(
    store_path: str | Path,
    bind: str = "127.0.0.1:8787",
    frames_root: str | Path | None = None,
    static_dir: str | Path | None = None,
) -> None:
    """Run the review service (blocking)."""
    import uvicorn

    host, _, port = bind.rpartition(":")
    app = create_app(AnnotationStore(store_path), frames_root, static_dir)
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port))
