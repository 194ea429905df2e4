"""
Experiments Tab View
Card grid of the reconstruction experiments.
"""

import customtkinter as ctk
from typing import Dict
from ui.components.experiment_card import ExperimentCard


class ExperimentsTab(ctk.CTkFrame):
    """Main view for the Experiments tab with one card per experiment."""

    TOOLS = [
        {
            "id": "sweep",
            "icon": "📈",
            "title": "Noise Sweep",
            "description": "Final error against noise level"
        },
        {
            "id": "bench",
            "icon": "⚖️",
            "title": "Alg 1 vs Alg 2",
            "description": "Plain and extrapolated iterations on one problem"
        },
        {
            "id": "gps",
            "icon": "🛰️",
            "title": "GPS Tomography",
            "description": "Schedules on 1-ray, 5-ray and full scenes"
        },
        {
            "id": "selftest",
            "icon": "🧪",
            "title": "Self-Test",
            "description": "Adjoints, norms and solver invariants"
        },
    ]

    def __init__(self, parent, colors: dict, **kwargs):
        super().__init__(parent, **kwargs)

        self.colors = colors
        self.current_view = None
        self.outcomes: Dict[str, str] = {}

        self.configure(fg_color=colors["bg_dark"])
        self.grid_columnconfigure(0, weight=1)
        self.grid_rowconfigure(0, weight=1)

        # Container for switching views
        self.container = ctk.CTkFrame(self, fg_color="transparent")
        self.container.grid(row=0, column=0, sticky="nsew")
        self.container.grid_columnconfigure(0, weight=1)
        self.container.grid_rowconfigure(0, weight=1)

        self._show_tool_grid()

    def _show_tool_grid(self):
        """Show the grid of experiment cards."""
        for widget in self.container.winfo_children():
            widget.destroy()

        scroll_frame = ctk.CTkScrollableFrame(
            self.container,
            fg_color="transparent",
            scrollbar_button_color=self.colors["primary"],
            scrollbar_button_hover_color=self.colors["primary_hover"]
        )
        scroll_frame.grid(row=0, column=0, sticky="nsew", padx=10, pady=10)

        for i in range(4):
            scroll_frame.grid_columnconfigure(i, weight=1, uniform="col")

        for i, tool in enumerate(self.TOOLS):
            card = ExperimentCard(
                scroll_frame,
                title=tool["title"],
                icon=tool["icon"],
                description=tool["description"],
                colors=self.colors,
                command=lambda t=tool: self._open_tool(t["id"]),
                last_outcome=self.outcomes.get(tool["id"], "")
            )
            card.grid(row=i // 4, column=i % 4, padx=10, pady=10, sticky="nsew")

    def _remember(self, tool_id: str):
        def record(headline: str):
            self.outcomes[tool_id] = headline
        return record

    def _open_tool(self, tool_id: str):
        """Open a specific experiment view."""
        for widget in self.container.winfo_children():
            widget.destroy()

        view = None
        hooks = {"on_back": self._show_tool_grid, "on_finished": self._remember(tool_id)}

        if tool_id == "sweep":
            from ui.experiments.sweep_view import SweepView
            view = SweepView(self.container, self.colors, **hooks)
        elif tool_id == "bench":
            from ui.experiments.bench_view import BenchView
            view = BenchView(self.container, self.colors, **hooks)
        elif tool_id == "gps":
            from ui.experiments.gps_view import GpsView
            view = GpsView(self.container, self.colors, **hooks)
        elif tool_id == "selftest":
            from ui.experiments.selftest_view import SelfTestView
            view = SelfTestView(self.container, self.colors, **hooks)

        if view:
            view.grid(row=0, column=0, sticky="nsew")
            self.current_view = view
