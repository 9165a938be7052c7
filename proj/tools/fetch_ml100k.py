#!/usr/bin/env python3
"""Rebuild the MovieLens-100K files (u.data, u.user, u.item, u1.base, u1.test).

GroupLens hosting is not always reachable from build machines, so this pulls a
PyPI wheel that bundles the three ML-100K tables and re-emits them in the
original GroupLens text layout. u.data keeps the original row order, which is
what the canonical u1..u5 splits are cut from (GroupLens mku.sh: u1.test is
rows 1-20000, u1.base the remaining rows, both sorted by user then item).
"""
import argparse
import glob
import io
import pathlib
import subprocess
import sys
import tempfile
import zipfile

import pandas as pd

WHEEL = "pytorch-widedeep==1.7.0"
PREFIX = "pytorch_widedeep/datasets/data/MovieLens100k_"
GENRES = ["unknown", "Action", "Adventure", "Animation", "Children's", "Comedy",
          "Crime", "Documentary", "Drama", "Fantasy", "Film-Noir", "Horror",
          "Musical", "Mystery", "Romance", "Sci-Fi", "Thriller", "War", "Western"]


def field(v):
    if v is None or (isinstance(v, float) and v != v):
        return ""
    return str(v)


def write_ratings(path, frame):
    with open(path, "w", newline="\n") as f:
        for u, i, r, t in frame[["user_id", "movie_id", "rating", "timestamp"]].itertuples(index=False):
            f.write(f"{u}\t{i}\t{r}\t{t}\n")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="data", help="root directory; files go to <out>/ml-100k")
    args = ap.parse_args()
    out = pathlib.Path(args.out) / "ml-100k"
    out.mkdir(parents=True, exist_ok=True)

    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run([sys.executable, "-m", "pip", "download", "--no-deps", "-q", "-d", tmp, WHEEL],
                       check=True)
        wheel = zipfile.ZipFile(glob.glob(f"{tmp}/*.whl")[0])
        tables = {k: pd.read_parquet(io.BytesIO(wheel.read(f"{PREFIX}{k}.parquet.brotli")))
                  for k in ("data", "users", "items")}

    data, users, items = tables["data"], tables["users"], tables["items"]
    assert len(data) == 100000 and len(users) == 943 and len(items) == 1682

    write_ratings(out / "u.data", data)
    key = ["user_id", "movie_id"]
    write_ratings(out / "u1.test", data.iloc[:20000].sort_values(key, kind="stable"))
    write_ratings(out / "u1.base", data.iloc[20000:].sort_values(key, kind="stable"))

    with open(out / "u.user", "w", newline="\n") as f:
        for row in users.itertuples(index=False):
            f.write("|".join(field(v) for v in row) + "\n")
    with open(out / "u.item", "w", newline="\n", encoding="latin-1", errors="replace") as f:
        for _, row in items.iterrows():
            head = [row["movie_id"], row["movie_title"], row["release_date"],
                    row["video_release_date"], row["IMDb_URL"]]
            f.write("|".join([field(v) for v in head] + [str(int(row[g])) for g in GENRES]) + "\n")
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
