"""
Benchmark View
Alg 1 against Alg 2 on one shared problem.
"""

from ui.components.run_view_base import RunViewBase


class BenchView(RunViewBase):
    """View for the Alg 1 vs Alg 2 benchmark."""

    def __init__(self, parent, colors: dict, on_back=None, on_finished=None, **kwargs):
        super().__init__(
            parent,
            title="Alg 1 vs Alg 2",
            icon="⚖️",
            description="Same data and schedule; compare iterations to the band and final error",
            colors=colors,
            on_back=on_back,
            on_finished=on_finished,
            **kwargs
        )
        # Both modes always run; the menu would be ignored.
        self.mode_menu.configure(state="disabled")

    def execute(self, cfg, progress_callback):
        from core.experiments import run_benchmark_alg1_vs_alg2

        outcome = run_benchmark_alg1_vs_alg2(cfg, progress_callback=progress_callback)

        lines = [
            f"First to band: {outcome['first_to_band']}",
            f"Alg 2 not worse: {'pass' if outcome['alg2_not_worse'] else 'fail'}",
            f"Curves: {outcome['curves_csv']}",
            "",
        ]
        field = None
        for r in outcome["rows"]:
            error = r.get("final_rel_error")
            lines.append(
                f"{r['mode']}: {r['status']}, stop {r.get('reason', '-')} at {r.get('i_star', '-')}, "
                f"rel. error {'-' if error is None else f'{error:.4f}'}"
            )
            if r["mode"] == "alg2" and "_result" in r:
                field = r["_result"].u
        return "\n".join(lines), field
