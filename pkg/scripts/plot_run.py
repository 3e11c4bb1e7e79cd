"""
Render the figures of a run directory to standalone HTML files

Usage: python scripts/plot_run.py RUN_DIR [--out FIGURE_DIR]
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from config.settings import HISTORY_FILE, SNAPSHOTS_FILE, TRACE_FILE  # noqa: E402
from src.utils.export import ArtifactError, read_frame, read_json  # noqa: E402
from src.visualization.fields import (  # noqa: E402
    create_energy_chart,
    create_field_chart,
    create_interface_history_chart,
)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="plot a cohevo run")
    parser.add_argument("run_dir")
    parser.add_argument("--out", help="figure directory (defaults to RUN_DIR/figures)")
    args = parser.parse_args(argv)

    run_dir = Path(args.run_dir)
    out = Path(args.out) if args.out else run_dir / "figures"
    out.mkdir(parents=True, exist_ok=True)
    try:
        trace = read_frame(run_dir / TRACE_FILE)
        history = read_json(run_dir / HISTORY_FILE)
        snapshots = read_json(run_dir / SNAPSHOTS_FILE)
    except ArtifactError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    create_energy_chart(trace).write_html(out / "energy.html")
    create_interface_history_chart(history).write_html(out / "interface.html")
    create_field_chart(snapshots).write_html(out / "field.html")
    print(f"figures written to {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
