"""Depth maps in, per-layer feature files out."""

import json
from pathlib import Path

import numpy as np

from .backends import get_backend
from .depthio import load_frames, read_depth_png, resize_nearest
from .errors import DepthFormatError
from .rft import feature_filename, write_feature_map


def extract_layers(depth, cfg, backend=None):
    """Feature maps for every configured layer of one depth map.

    Returns them in cfg.layers order. The depth map is resized to the
    configured working resolution first so grid shapes depend only on the
    config, not on the sensor.
    """
    d = np.asarray(depth, dtype=np.float64)
    if d.ndim != 2:
        raise DepthFormatError(f"depth must be 2-D, got shape {d.shape}")
    if backend is None:
        backend = get_backend(cfg)
    d = resize_nearest(d, cfg.target_height, cfg.target_width)
    return [backend.layer(d, lid) for lid in cfg.layers]


def extract_frames(frames_path, cfg, backend=None):
    """Process every depth map referenced by a framing manifest.

    Writes one feature file per (view, cloud, layer) into cfg.out_dir,
    plus a sidecar recording the run parameters, and returns the list of
    written paths.
    """
    frames_path = Path(frames_path)
    frames = load_frames(frames_path)
    pair = frames["pair_id"]
    if backend is None:
        backend = get_backend(cfg)
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for view in sorted(frames["views"]):
        files = frames["views"][view].get("files", {})
        for cloud in sorted(files):
            depth = read_depth_png(frames_path.parent / files[cloud])
            depth = resize_nearest(depth, cfg.target_height, cfg.target_width)
            for lid in cfg.layers:
                fmap = backend.layer(depth, lid)
                path = out_dir / feature_filename(pair, view, cloud, lid)
                write_feature_map(path, fmap, lid)
                written.append(path)
    sidecar = out_dir / f"{pair}.extract.json"
    meta = {
        "backend": backend.name,
        "seed": cfg.seed,
        "timestep": cfg.timestep,
        "total_steps": cfg.total_steps,
        "layers": list(cfg.layers),
        "target_resolution": [cfg.target_height, cfg.target_width],
        "source_frames": str(frames_path),
    }
    sidecar.write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n")
    written.append(sidecar)
    return written
