"""
Resources
Worker counts and a snapshot of the machine a run executed on.
"""

import platform
from datetime import datetime
from typing import Any, Dict, Optional

import numpy as np
import psutil
import scipy


def get_worker_count(requested: Optional[int] = None) -> int:
    """
    Number of threads to use for independent runs.

    Args:
        requested: Explicit count from the config; None means one per physical core

    Returns:
        Worker count, at least 1
    """
    if requested is not None:
        return max(1, int(requested))
    cores = psutil.cpu_count(logical=False) or psutil.cpu_count(logical=True) or 1
    return max(1, cores)


def get_run_environment() -> Dict[str, Any]:
    """Host, core, memory and library versions for run_info.json."""
    mem = psutil.virtual_memory()
    freq = psutil.cpu_freq()
    return {
        "timestamp": datetime.now().strftime("%Y-%m-%d %H:%M:%S"),
        "system": platform.system(),
        "release": platform.release(),
        "machine": platform.machine(),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "physical_cores": psutil.cpu_count(logical=False),
        "total_cores": psutil.cpu_count(logical=True),
        "cpu_frequency": f"{freq.current:.0f} MHz" if freq else None,
        "memory_total": format_bytes(mem.total),
        "memory_available": format_bytes(mem.available),
    }


def format_bytes(bytes_value: float) -> str:
    """Format bytes to human-readable string."""
    for unit in ['B', 'KB', 'MB', 'GB', 'TB']:
        if bytes_value < 1024:
            return f"{bytes_value:.2f} {unit}"
        bytes_value /= 1024
    return f"{bytes_value:.2f} PB"
