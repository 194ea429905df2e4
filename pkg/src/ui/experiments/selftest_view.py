"""
Self-Test View
Runs the numerical invariant suite.
"""

from ui.components.run_view_base import RunViewBase


class SelfTestView(RunViewBase):
    """View for the self-test checks."""

    SHOW_SOLVER_OPTIONS = False

    def __init__(self, parent, colors: dict, on_back=None, on_finished=None, **kwargs):
        super().__init__(
            parent,
            title="Self-Test",
            icon="🧪",
            description="Adjoint pairs, operator norms, step identities and stopping behaviour",
            colors=colors,
            on_back=on_back,
            on_finished=on_finished,
            **kwargs
        )
        self.config_entry.configure(state="disabled")

    def build_config(self):
        # read on the UI thread; execute runs on a worker
        self._out_dir = self.output_entry.get().strip() or None
        return None

    def execute(self, cfg, progress_callback):
        from pathlib import Path
        from core.selftest import run_selftest

        out = self._out_dir
        results = run_selftest(Path(out) if out else None, progress_callback=progress_callback)

        failed = [r for r in results if not r.passed]
        lines = ["All checks passed" if not failed else f"{len(failed)} check(s) failed", ""]
        for r in results:
            lines.append(f"{'PASS' if r.passed else 'FAIL'}  {r.check}: {r.detail}")
        return "\n".join(lines), None
