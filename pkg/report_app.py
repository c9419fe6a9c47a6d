from __future__ import annotations

import sys
from pathlib import Path

import pandas as pd
from rich.console import Console
from rich.table import Table
from textual.app import App, ComposeResult
from textual.binding import Binding
from textual.containers import Container
from textual.screen import ModalScreen
from textual.widgets import Button, DataTable, Footer, Header, Label, Static

from harness import render_pattern
from problem import ProblemInstance, load_instance
from stats import format_p

TABLES = {
    "summary": "summary.csv",
    "friedman": "friedman.csv",
    "nemenyi": "nemenyi.csv",
    "best": "best_patterns.csv",
    "curves": "curves.csv",
    "foms": "fom_curves.csv",
}

P_COLUMNS = {"friedman": ("p_value",)}


def load_table(directory: Path, name: str) -> pd.DataFrame:
    path = Path(directory) / TABLES[name]
    if name == "nemenyi":
        return pd.read_csv(path, index_col=0).rename_axis("algo").reset_index()
    return pd.read_csv(path, dtype={"vector": str})


def cell_text(name: str, column: str, value) -> str:
    if pd.isna(value):
        return ""
    if (name == "nemenyi" and column != "algo") or column in P_COLUMNS.get(name, ()):
        return format_p(float(value))
    if isinstance(value, float):
        return f"{value:.3f}"
    return str(value)


def print_tables(directory: Path, console: Console) -> None:
    """Plain rendering of every table present in the directory."""
    for name, filename in TABLES.items():
        if not (Path(directory) / filename).exists():
            continue
        frame = load_table(directory, name)
        table = Table(title=name)
        for column in frame.columns:
            table.add_column(str(column))
        for row in frame.itertuples(index=False):
            table.add_row(*(cell_text(name, c, v) for c, v in zip(frame.columns, row)))
        console.print(table)


class PatternScreen(ModalScreen):
    def __init__(self, title: str, body: str):
        super().__init__()
        self.title_text = title
        self.body = body

    def compose(self) -> ComposeResult:
        yield Container(
            Label(self.title_text, classes="title"),
            Static(self.body, id="pattern"),
            Button("Close", id="close", variant="primary"),
            id="pattern_dialog",
        )

    def on_button_pressed(self, event: Button.Pressed) -> None:
        self.app.pop_screen()


class ReportApp(App):
    CSS = """
    DataTable {
        height: 1fr;
    }

    #caption {
        height: 1;
        background: $accent;
        color: $text;
        padding: 0 1;
        text-style: bold;
    }

    #pattern_dialog {
        width: auto;
        height: auto;
        padding: 1 2;
        border: thick $primary;
        background: $surface;
    }
    """

    BINDINGS = [
        Binding("s", "show('summary')", "Summary"),
        Binding("f", "show('friedman')", "Friedman"),
        Binding("n", "show('nemenyi')", "Nemenyi"),
        Binding("b", "show('best')", "Best"),
        Binding("c", "show('curves')", "Curves"),
        Binding("o", "show('foms')", "FOM curves"),
        Binding("p", "pattern", "Pattern"),
        Binding("q", "quit", "Quit"),
    ]

    def __init__(self, directory: Path, instance: ProblemInstance | None = None):
        super().__init__()
        self.directory = Path(directory)
        self.instance = instance
        self.current = "summary"
        self.frame: pd.DataFrame | None = None

    def compose(self) -> ComposeResult:
        yield Header()
        yield Static("", id="caption")
        yield DataTable(id="table")
        yield Footer()

    def on_mount(self) -> None:
        self.title = f"Results: {self.directory}"
        table = self.query_one(DataTable)
        table.cursor_type = "row"
        self.action_show("summary")

    def action_show(self, name: str) -> None:
        table = self.query_one(DataTable)
        try:
            frame = load_table(self.directory, name)
        except Exception as e:
            self.notify(f"Cannot load {TABLES[name]}: {e}", severity="error")
            return
        self.current = name
        self.frame = frame
        table.clear(columns=True)
        table.add_columns(*(str(c) for c in frame.columns))
        for row in frame.itertuples(index=False):
            table.add_row(*(cell_text(name, c, v) for c, v in zip(frame.columns, row)))
        self.query_one("#caption", Static).update(f"{name} ({len(frame)} rows)")

    def action_pattern(self) -> None:
        if self.current != "best" or self.frame is None or self.frame.empty:
            self.notify("Select a row in the best pattern table first", severity="warning")
            return
        if self.instance is None:
            self.notify("Start the viewer with --instance to decode patterns", severity="warning")
            return
        row = self.frame.iloc[self.query_one(DataTable).cursor_row]
        try:
            body = render_pattern(row["vector"], self.instance)
        except Exception as e:
            self.notify(f"Cannot decode pattern: {e}", severity="error")
            return
        broken = row.get("violations")
        title = f"{row['algo']} seed {row['seed']}: objective {row['objective']:.3f}"
        if isinstance(broken, str) and broken:
            title += f" (violates {broken.replace(';', ', ')})"
        self.push_screen(PatternScreen(title, body))


if __name__ == "__main__":
    instance = load_instance(sys.argv[2]) if len(sys.argv) > 2 else None
    app = ReportApp(Path(sys.argv[1]) if len(sys.argv) > 1 else Path("results"), instance)
    app.run()
