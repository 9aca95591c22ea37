#!/usr/bin/env python3
"""
Provenance Helper - Standardized metadata for experiment runs.

Every run directory gets a manifest.json with:
- Git commit SHA, branch, dirty status
- Environment info (Python, numpy, scipy, PyYAML, BLAS thread settings)
- The effective configuration and its hash
- Timestamps and wall time
- One entry per written artifact

The manifest is the only artifact carrying timestamps and host data, so all
CSV and summary outputs stay byte-identical across reruns.

Usage:
    from tnbm import provenance_helper

    manifest = provenance_helper.create_run_manifest(
        run_id="bas_4x4_trend",
        config=effective_config,
        planned_artifacts=["steepest_descent/aggregate.csv", "summary.json"]
    )
    provenance_helper.update_run_manifest(manifest, "summary.json", "run_summary", success=True)
    provenance_helper.save_manifest(manifest, out_dir / "manifest.json")
"""

import hashlib
import json
import logging
import os
import socket
import subprocess
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import scipy
import yaml

logger = logging.getLogger(__name__)

THREAD_ENV_VARS = ('OMP_NUM_THREADS', 'OPENBLAS_NUM_THREADS', 'MKL_NUM_THREADS')


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


REPO_ROOT = Path(__file__).resolve().parents[2]


def _git(args: List[str], cwd: Path) -> str:
    out = subprocess.run(
        ["git", *args], cwd=cwd, capture_output=True, text=True, check=True
    )
    return out.stdout.strip()


def get_git_info(repo_path: Optional[Path] = None) -> Dict[str, Any]:
    """
    Commit, branch and dirty flag of the checkout holding this package.

    Outside a git checkout (or without git installed) every field is "unknown"
    and the run proceeds.
    """
    cwd = REPO_ROOT if repo_path is None else Path(repo_path)
    try:
        dirty = bool(_git(["status", "--porcelain", "--untracked-files=no"], cwd))
        return {
            "git_commit": _git(["rev-parse", "HEAD"], cwd),
            "git_branch": _git(["rev-parse", "--abbrev-ref", "HEAD"], cwd),
            "git_dirty": dirty,
        }
    except (OSError, subprocess.CalledProcessError) as e:
        logger.warning(f"⚠️  No git metadata for manifest: {e}")
        return {"git_commit": "unknown", "git_branch": "unknown", "git_dirty": "unknown"}


def get_environment_info() -> Dict[str, Any]:
    """
    Get environment information.

    Returns:
        Dict with interpreter, numerical library versions and BLAS thread settings
    """
    return {
        "hostname": socket.gethostname(),
        "python_version": sys.version.split()[0],
        "numpy_version": np.__version__,
        "scipy_version": scipy.__version__,
        "pyyaml_version": yaml.__version__,
        "cpu_count": os.cpu_count(),
        "thread_env": {name: os.environ.get(name) for name in THREAD_ENV_VARS},
    }


def canonical_json(data: Dict[str, Any]) -> str:
    return json.dumps(data, sort_keys=True, separators=(',', ':'), default=str)


def config_hash(config: Dict[str, Any]) -> str:
    """sha256 of the canonical JSON form of a configuration."""
    return hashlib.sha256(canonical_json(config).encode('utf-8')).hexdigest()


def create_run_manifest(
    run_id: str,
    config: Dict[str, Any],
    planned_artifacts: List[str],
    notes: Optional[str] = None
) -> Dict[str, Any]:
    """
    Create the manifest for an experiment run.

    Args:
        run_id: Experiment name
        config: Effective configuration (after CLI overrides)
        planned_artifacts: Relative paths of the artifacts the run will write
        notes: Optional free text

    Returns:
        Manifest dict
    """
    manifest = {
        "run_id": run_id,
        "run_start": _now(),
        **get_git_info(),
        "environment": get_environment_info(),
        "config": config,
        "config_hash": config_hash(config),
        "planned_artifacts": planned_artifacts,
        "artifacts_generated": [],
    }
    if notes:
        manifest["notes"] = notes
    return manifest


def update_run_manifest(
    manifest: Dict[str, Any],
    artifact_path: str,
    artifact_type: str,
    success: bool,
    error: Optional[str] = None
) -> Dict[str, Any]:
    """
    Record a written (or failed) artifact.

    Args:
        manifest: Existing run manifest
        artifact_path: Path relative to the run directory
        artifact_type: e.g. "seed_trace", "aggregate", "checkpoint"
        success: Whether the artifact was produced
        error: Error message if it failed

    Returns:
        Updated manifest
    """
    entry = {
        "path": artifact_path,
        "type": artifact_type,
        "timestamp": _now(),
        "success": success
    }
    if error:
        entry["error"] = error
    manifest["artifacts_generated"].append(entry)
    return manifest


def finalize_run_manifest(
    manifest: Dict[str, Any],
    status: str,
    wall_time: float,
    extra: Optional[Dict[str, Any]] = None
) -> Dict[str, Any]:
    manifest["run_end"] = _now()
    manifest["status"] = status
    manifest["wall_time_seconds"] = wall_time
    if extra:
        manifest.update(extra)
    return manifest


def save_manifest(manifest: Dict[str, Any], path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w') as f:
        json.dump(manifest, f, indent=2, default=str)
    logger.info(f"💾 Manifest saved: {path}")
    return path
