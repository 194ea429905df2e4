"""
Run View Base Component
Base class for experiment views: run options, threaded execution,
progress reporting and a preview of the final reconstruction.
"""

import customtkinter as ctk
from tkinter import filedialog, messagebox
from typing import Callable, Optional, Tuple
import threading

from core.errors import TomodualError
from core.experiments import ExperimentConfig, load_config
from core.fields import GridField
from core.preview import render_slice


PREVIEW_SIZE = (256, 256)


class RunViewBase(ctk.CTkFrame):
    """
    Shared layout for experiment views.

    Subclasses implement execute(); it runs on a worker thread and returns a
    summary text plus an optional field to preview.
    """

    PROBLEM = "radon2d"
    SHOW_SOLVER_OPTIONS = True

    def __init__(
        self,
        parent,
        title: str,
        icon: str,
        description: str,
        colors: dict,
        on_back: Optional[Callable] = None,
        on_finished: Optional[Callable[[str], None]] = None,
        **kwargs
    ):
        super().__init__(parent, **kwargs)

        self.colors = colors
        self.on_back = on_back
        self.on_finished = on_finished
        self._preview_image = None

        self.configure(fg_color=colors["bg_dark"])
        self.grid_columnconfigure(0, weight=1)
        self.grid_rowconfigure(2, weight=1)

        self._create_header(title, icon, description)
        self._create_content()
        self._create_status_bar()

    def _create_header(self, title: str, icon: str, description: str):
        header = ctk.CTkFrame(self, fg_color="transparent")
        header.grid(row=0, column=0, sticky="ew", padx=20, pady=(10, 5))
        header.grid_columnconfigure(1, weight=1)

        back_btn = ctk.CTkButton(
            header,
            text="← Back",
            width=80,
            height=32,
            fg_color=self.colors["bg_card"],
            hover_color=self.colors["bg_card_hover"],
            text_color=self.colors["text"],
            command=self._go_back
        )
        back_btn.grid(row=0, column=0, sticky="w")

        title_frame = ctk.CTkFrame(header, fg_color="transparent")
        title_frame.grid(row=0, column=1, sticky="w", padx=(20, 0))

        ctk.CTkLabel(
            title_frame,
            text=icon,
            font=ctk.CTkFont(size=28),
            text_color=self.colors["primary_light"]
        ).pack(side="left", padx=(0, 10))

        ctk.CTkLabel(
            title_frame,
            text=title,
            font=ctk.CTkFont(family="Segoe UI", size=20, weight="bold"),
            text_color=self.colors["text"]
        ).pack(side="left")

        ctk.CTkLabel(
            self,
            text=description,
            font=ctk.CTkFont(family="Segoe UI", size=12),
            text_color=self.colors["text_secondary"]
        ).grid(row=1, column=0, sticky="w", padx=20, pady=(0, 10))

    def _create_content(self):
        content = ctk.CTkFrame(self, fg_color="transparent")
        content.grid(row=2, column=0, sticky="nsew", padx=20, pady=10)
        content.grid_columnconfigure(1, weight=1)
        content.grid_rowconfigure(0, weight=1)

        options = ctk.CTkFrame(content, fg_color=self.colors["bg_card"], corner_radius=10)
        options.grid(row=0, column=0, sticky="nsw", padx=(0, 15))

        self.config_entry = self._add_path_row(options, 0, "Config (JSON):", "Defaults", self._browse_config)
        self.output_entry = self._add_path_row(options, 2, "Output folder:", "results", self._browse_output)

        self.seed_entry = None
        self.max_iter_entry = None
        self.mode_menu = None
        if self.SHOW_SOLVER_OPTIONS:
            self.seed_entry = self._add_entry_row(options, 4, "Seed:", "from config")
            self.max_iter_entry = self._add_entry_row(options, 6, "Max iterations:", "from config")

            ctk.CTkLabel(
                options, text="Mode:", font=ctk.CTkFont(size=13), text_color=self.colors["text"]
            ).grid(row=8, column=0, padx=15, pady=(10, 2), sticky="w")
            self.mode_menu = ctk.CTkOptionMenu(
                options,
                values=["from config", "alg1", "alg2", "bregman"],
                fg_color=self.colors["bg_dark"],
                button_color=self.colors["primary"],
                button_hover_color=self.colors["primary_hover"]
            )
            self.mode_menu.grid(row=9, column=0, columnspan=2, padx=15, pady=(0, 10), sticky="ew")

        self.run_btn = ctk.CTkButton(
            options,
            text="Run",
            height=40,
            fg_color=self.colors["primary"],
            hover_color=self.colors["primary_hover"],
            command=self._start
        )
        self.run_btn.grid(row=10, column=0, columnspan=2, padx=15, pady=15, sticky="ew")

        results = ctk.CTkFrame(content, fg_color=self.colors["bg_card"], corner_radius=10)
        results.grid(row=0, column=1, sticky="nsew")
        results.grid_columnconfigure(1, weight=1)
        results.grid_rowconfigure(0, weight=1)

        self.preview_label = ctk.CTkLabel(
            results,
            text="No reconstruction yet",
            width=PREVIEW_SIZE[0],
            height=PREVIEW_SIZE[1],
            fg_color=self.colors["bg_dark"],
            text_color=self.colors["text_secondary"]
        )
        self.preview_label.grid(row=0, column=0, padx=15, pady=15, sticky="n")

        self.summary_box = ctk.CTkTextbox(
            results,
            fg_color=self.colors["bg_dark"],
            text_color=self.colors["text"],
            font=ctk.CTkFont(family="Consolas", size=12)
        )
        self.summary_box.grid(row=0, column=1, padx=(0, 15), pady=15, sticky="nsew")
        self.summary_box.configure(state="disabled")

    def _add_path_row(self, parent, row: int, label: str, placeholder: str, browse: Callable):
        ctk.CTkLabel(
            parent, text=label, font=ctk.CTkFont(size=13), text_color=self.colors["text"]
        ).grid(row=row, column=0, columnspan=2, padx=15, pady=(10, 2), sticky="w")
        entry = ctk.CTkEntry(
            parent,
            placeholder_text=placeholder,
            width=200,
            fg_color=self.colors["bg_dark"],
            border_color=self.colors["primary"],
            text_color=self.colors["text"]
        )
        entry.grid(row=row + 1, column=0, padx=(15, 5), pady=(0, 5), sticky="ew")
        ctk.CTkButton(
            parent,
            text="…",
            width=32,
            fg_color=self.colors["bg_card_hover"],
            hover_color=self.colors["primary"],
            command=browse
        ).grid(row=row + 1, column=1, padx=(0, 15), pady=(0, 5))
        return entry

    def _add_entry_row(self, parent, row: int, label: str, placeholder: str):
        ctk.CTkLabel(
            parent, text=label, font=ctk.CTkFont(size=13), text_color=self.colors["text"]
        ).grid(row=row, column=0, columnspan=2, padx=15, pady=(10, 2), sticky="w")
        entry = ctk.CTkEntry(
            parent,
            placeholder_text=placeholder,
            fg_color=self.colors["bg_dark"],
            border_color=self.colors["primary"],
            text_color=self.colors["text"]
        )
        entry.grid(row=row + 1, column=0, columnspan=2, padx=15, pady=(0, 5), sticky="ew")
        return entry

    def _create_status_bar(self):
        self.status_frame = ctk.CTkFrame(self, fg_color=self.colors["bg_card"], height=50)
        self.status_frame.grid(row=3, column=0, sticky="ew", padx=20, pady=(10, 10))
        self.status_frame.grid_columnconfigure(1, weight=1)

        self.status_label = ctk.CTkLabel(
            self.status_frame,
            text="Ready",
            font=ctk.CTkFont(family="Segoe UI", size=12),
            text_color=self.colors["text_secondary"]
        )
        self.status_label.grid(row=0, column=0, padx=15, pady=10)

        self.progress = ctk.CTkProgressBar(
            self.status_frame,
            progress_color=self.colors["primary"],
            fg_color=self.colors["bg_dark"]
        )
        self.progress.set(0)

    def _browse_config(self):
        path = filedialog.askopenfilename(title="Select config", filetypes=[("JSON", "*.json")])
        if path:
            self.config_entry.delete(0, "end")
            self.config_entry.insert(0, path)

    def _browse_output(self):
        folder = filedialog.askdirectory(title="Select output folder")
        if folder:
            self.output_entry.delete(0, "end")
            self.output_entry.insert(0, folder)

    def _go_back(self):
        if self.on_back:
            self.on_back()

    def set_status(self, text: str, color: Optional[str] = None):
        self.status_label.configure(
            text=text,
            text_color=color or self.colors["text_secondary"]
        )

    def show_progress(self, show: bool = True):
        if show:
            self.progress.grid(row=0, column=1, padx=15, pady=10, sticky="ew")
        else:
            self.progress.grid_forget()

    def set_progress(self, value: float):
        """Set progress bar value (0.0 to 1.0)."""
        self.progress.set(value)

    def show_success(self, message: str):
        self.set_status(f"✓ {message}", self.colors["success"])

    def show_error(self, message: str):
        self.set_status(f"✗ {message}", self.colors["error"])
        messagebox.showerror("Error", message)

    def build_config(self) -> ExperimentConfig:
        """Config from the chosen file (or defaults) with the form's overrides."""
        path = self.config_entry.get().strip() or None
        cfg = load_config(path) if path else ExperimentConfig(problem=self.PROBLEM).validate()

        def as_int(entry) -> Optional[int]:
            text = entry.get().strip() if entry is not None else ""
            if not text:
                return None
            try:
                return int(text)
            except ValueError:
                raise TomodualError(f"Expected an integer, got '{text}'")

        mode = self.mode_menu.get() if self.mode_menu is not None else "from config"
        return cfg.with_overrides(
            out=self.output_entry.get().strip() or None,
            seed=as_int(self.seed_entry),
            max_iter=as_int(self.max_iter_entry),
            mode=None if mode == "from config" else mode,
        )

    def execute(
        self,
        cfg: ExperimentConfig,
        progress_callback: Callable[[int, int], None]
    ) -> Tuple[str, Optional[GridField]]:
        raise NotImplementedError

    def _start(self):
        try:
            cfg = self.build_config()
        except (TomodualError, ValueError) as e:
            self.show_error(str(e))
            return

        self.run_btn.configure(state="disabled", text="Running...")
        self.show_progress(True)
        self.set_progress(0)
        self.set_status("Running...")

        thread = threading.Thread(target=self._worker, args=(cfg,))
        thread.daemon = True
        thread.start()

    def _worker(self, cfg: ExperimentConfig):
        def progress(current, total):
            self.after(0, lambda: self.set_progress(current / max(total, 1)))

        try:
            summary, field = self.execute(cfg, progress)
            self.after(0, lambda: self._finished(summary, field))
        except Exception as e:
            message = str(e)
            self.after(0, lambda: self._failed(message))

    def _finished(self, summary: str, field: Optional[GridField]):
        self.show_progress(False)
        self.run_btn.configure(state="normal", text="Run")

        self.summary_box.configure(state="normal")
        self.summary_box.delete("1.0", "end")
        self.summary_box.insert("1.0", summary)
        self.summary_box.configure(state="disabled")

        if field is not None:
            image = render_slice(field, PREVIEW_SIZE)
            self._preview_image = ctk.CTkImage(light_image=image, dark_image=image, size=PREVIEW_SIZE)
            self.preview_label.configure(image=self._preview_image, text="")

        headline = summary.splitlines()[0] if summary else "Done"
        self.show_success(headline)
        if self.on_finished:
            self.on_finished(headline)

    def _failed(self, message: str):
        self.show_progress(False)
        self.run_btn.configure(state="normal", text="Run")
        self.show_error(message)
