"""Initialize creakbench configuration."""
import shutil

from rich.console import Console

from creakbench.config import CONFIG_DIR


def run_init(force: bool = False) -> None:
    """Copy the example config into place."""
    console = Console()
    CONFIG_DIR.mkdir(exist_ok=True)

    src = CONFIG_DIR / "creakbench.yaml.example"
    dst = CONFIG_DIR / "creakbench.yaml"
    if dst.exists() and not force:
        console.print("[dim]Skipping creakbench.yaml (already exists)[/]")
        return
    if not src.exists():
        console.print("[yellow]Warning: creakbench.yaml.example not found[/]")
        return
    shutil.copy(src, dst)
    console.print("[green]Created config/creakbench.yaml[/]")
    console.print("Edit it, or run [cyan]creakbench synthexp --out runs/demo[/] to try the defaults.")
