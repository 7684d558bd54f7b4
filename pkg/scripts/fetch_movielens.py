"""Rebuild MovieLens 100K ``u.data`` and ``u.item`` from the copy bundled in the recbole wheel.

The recbole 1.2.1 wheel ships ``dataset_example/ml-100k`` in atomic-file form:
``ml-100k.inter`` holds the 100000 ratings (identical to ``u.data`` after the
header line) and ``ml-100k.item`` lists each movie's genres as a
space-separated field. This script converts both to the GroupLens layout
expected by ``streamtucker ingest-movielens``.

Usage::

    python scripts/fetch_movielens.py OUT_DIR [--wheel recbole-1.2.1-py3-none-any.whl]

Without ``--wheel`` the wheel is fetched with ``pip download``.
"""

from __future__ import annotations

import argparse
import subprocess
import sys
import tempfile
import zipfile
from pathlib import Path

GENRES = ("unknown", "Action", "Adventure", "Animation", "Children's", "Comedy", "Crime",
          "Documentary", "Drama", "Fantasy", "Film-Noir", "Horror", "Musical", "Mystery",
          "Romance", "Sci-Fi", "Thriller", "War", "Western")
PREFIX = "recbole/dataset_example/ml-100k/"


def convert(wheel: Path, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    with zipfile.ZipFile(wheel) as zf:
        inter = zf.read(PREFIX + "ml-100k.inter").decode("utf-8").splitlines()
        items = zf.read(PREFIX + "ml-100k.item").decode("utf-8").splitlines()
    (out / "u.data").write_text("\n".join(inter[1:]) + "\n", encoding="utf-8")
    rows = []
    for line in items[1:]:
        item_id, title, year, classes = line.split("\t")
        present = set(classes.split())
        flags = ["1" if g in present else "0" for g in GENRES]
        # id | title | release date | video date | url | 19 genre flags
        rows.append("|".join([item_id, title, year, "", ""] + flags))
    (out / "u.item").write_text("\n".join(rows) + "\n", encoding="latin-1", errors="replace")
    print(f"wrote {len(inter) - 1} ratings and {len(rows)} items to {out}")


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("out", type=Path)
    p.add_argument("--wheel", type=Path, help="local recbole wheel; downloaded when omitted")
    args = p.parse_args(argv)
    if args.wheel is not None:
        convert(args.wheel, args.out)
        return 0
    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run([sys.executable, "-m", "pip", "download", "--no-deps", "-d", tmp,
                        "recbole==1.2.1"], check=True)
        convert(next(Path(tmp).glob("recbole-*.whl")), args.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
