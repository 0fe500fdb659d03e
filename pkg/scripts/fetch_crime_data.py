#!/usr/bin/env python3
"""Fetch the UCI Communities and Crime data and write a headered CSV.

The benchmark loader expects a CSV with a header row; the raw UCI files ship
the values (communities.data) and the attribute names (communities.names)
separately, so this script stitches them together. Missing cells stay as "?"
markers; the loader drops those columns.

Usage:
    python scripts/fetch_crime_data.py --out data/communities_crime.csv
    python scripts/fetch_crime_data.py --local-data communities.data \
        --local-names communities.names --out data/communities_crime.csv
"""

from __future__ import annotations

import argparse
import csv
import sys
import urllib.request
from pathlib import Path

BASE = "https://archive.ics.uci.edu/ml/machine-learning-databases/communities"
DATA_URL = f"{BASE}/communities.data"
NAMES_URL = f"{BASE}/communities.names"


def _read(url_or_path: str, is_local: bool) -> str:
    if is_local:
        return Path(url_or_path).read_text()
    print(f"downloading {url_or_path} ...", file=sys.stderr)
    with urllib.request.urlopen(url_or_path, timeout=60) as resp:
        return resp.read().decode("utf-8", errors="replace")


def parse_attribute_names(names_text: str) -> list[str]:
    """Attribute names from the '@attribute NAME TYPE' lines of the names file."""
    names = []
    for line in names_text.splitlines():
        line = line.strip()
        if line.lower().startswith("@attribute"):
            parts = line.split()
            if len(parts) >= 2:
                names.append(parts[1])
    return names


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default="data/communities_crime.csv")
    parser.add_argument("--local-data", default=None, help="use a local communities.data")
    parser.add_argument("--local-names", default=None, help="use a local communities.names")
    args = parser.parse_args(argv)

    data_text = _read(args.local_data or DATA_URL, args.local_data is not None)
    names_text = _read(args.local_names or NAMES_URL, args.local_names is not None)

    rows = [row for row in csv.reader(data_text.splitlines()) if row]
    names = parse_attribute_names(names_text)
    width = len(rows[0])
    if len(names) != width:
        print(
            f"warning: parsed {len(names)} attribute names for {width} columns; "
            "falling back to generic names",
            file=sys.stderr,
        )
        names = [f"col_{j}" for j in range(width)]
    bad = [i for i, row in enumerate(rows, start=1) if len(row) != width]
    if bad:
        print(f"error: rows with wrong cell count: {bad[:5]} ...", file=sys.stderr)
        return 1

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(names)
        writer.writerows(rows)
    print(f"wrote {out} ({len(rows)} rows, {width} columns)", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
