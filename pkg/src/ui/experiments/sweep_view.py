"""
Noise Sweep View
Runs the noise-level sweep and previews the cleanest-data reconstruction.
"""

from ui.components.run_view_base import RunViewBase


class SweepView(RunViewBase):
    """View for the noise-level sweep."""

    def __init__(self, parent, colors: dict, on_back=None, on_finished=None, **kwargs):
        super().__init__(
            parent,
            title="Noise Sweep",
            icon="📈",
            description="Reconstruct at every noise level and seed; check the error grows with delta",
            colors=colors,
            on_back=on_back,
            on_finished=on_finished,
            **kwargs
        )

    def execute(self, cfg, progress_callback):
        from core.experiments import run_noise_sweep

        outcome = run_noise_sweep(cfg, progress_callback=progress_callback)
        rows = outcome["rows"]

        lines = [
            f"Monotone in delta: {'pass' if outcome['monotone'] else 'fail'}",
            f"Summary: {outcome['summary_csv']}",
            "",
            f"{'noise':>8} {'seed':>5} {'status':>9} {'i*':>6} {'rel. error':>12}",
        ]
        for r in rows:
            error = r.get("final_rel_error")
            lines.append(
                f"{r['noise_fraction']:>8g} {r['seed']:>5} {r['status']:>9} "
                f"{r.get('i_star', '-')!s:>6} {'-' if error is None else f'{error:.4f}':>12}"
            )
        if outcome["diverged"]:
            lines.append(f"{outcome['diverged']} cell(s) diverged")

        field = next((r["_result"].u for r in rows if "_result" in r), None)
        return "\n".join(lines), field
