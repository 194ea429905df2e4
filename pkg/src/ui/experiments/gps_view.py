"""
GPS Tomography View
Both step schedules on three receiver scenes over a 3-D volume.
"""

from ui.components.run_view_base import RunViewBase


class GpsView(RunViewBase):
    """View for the GPS scene experiments; previews the middle layer."""

    PROBLEM = "gps3d"

    def __init__(self, parent, colors: dict, on_back=None, on_finished=None, **kwargs):
        super().__init__(
            parent,
            title="GPS Tomography",
            icon="🛰️",
            description="Dynamic vs fixed schedule with 1, 5 and all satellites per station",
            colors=colors,
            on_back=on_back,
            on_finished=on_finished,
            **kwargs
        )

    def execute(self, cfg, progress_callback):
        from core.experiments import run_gps_experiments

        outcome = run_gps_experiments(cfg, progress_callback=progress_callback)
        checks = outcome["checks"]

        passed = sum(1 for k, v in checks.items() if isinstance(v, bool) and v)
        total = sum(1 for v in checks.values() if isinstance(v, bool))
        lines = [f"{passed}/{total} checks passed", f"Summary: {outcome['summary_csv']}", ""]
        for name, value in checks.items():
            lines.append(f"{name}: {value}")
        lines.append("")
        for schedule, scenes in outcome["iterations"].items():
            stops = ", ".join(f"{scene}: {i}" for scene, i in scenes.items())
            lines.append(f"{schedule} iterations to stop: {stops}")

        field = next(
            (r["_result"].u for r in outcome["rows"]
             if r["schedule"] == "dynamic" and r["scene"] == "5" and "_result" in r),
            None
        )
        return "\n".join(lines), field
