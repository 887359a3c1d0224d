#!/usr/bin/env python3
"""Fetch the four MNIST IDX files into a directory.

The canonical gzipped IDX files are bundled in the ``bob.db.mnist`` source
distribution on PyPI, which is reachable from environments that only have a
package index. The archive is located through the simple index named by
``$PIP_INDEX_URL`` (default https://pypi.org/simple), the files are extracted
and their md5 sums checked against the published values.

Usage: python scripts/fetch_mnist.py [OUT_DIR]   (default: data/mnist)
"""
import argparse
import hashlib
import io
import os
import re
import sys
import urllib.parse
import urllib.request
import zipfile
from pathlib import Path

ARCHIVE = "bob.db.mnist-2.1.0.zip"
MD5 = {
    "train-images-idx3-ubyte.gz": "f68b3c2dcbeaaa9fbdd348bbdeb94873",
    "train-labels-idx1-ubyte.gz": "d53e105ee54ea40749a09fcbcd1e9432",
    "t10k-images-idx3-ubyte.gz": "9fb629c4189551a2d022fa330f9573f3",
    "t10k-labels-idx1-ubyte.gz": "ec29112dd5afa0611ce80d1b7f02629c",
}


def md5(path: Path) -> str:
    return hashlib.md5(path.read_bytes()).hexdigest()


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("out", nargs="?", default="data/mnist")
    args = parser.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if all((out / name).exists() and md5(out / name) == digest for name, digest in MD5.items()):
        print(f"MNIST already present in {out}")
        return 0

    index = os.environ.get("PIP_INDEX_URL", "https://pypi.org/simple").rstrip("/") + "/bob-db-mnist/"
    with urllib.request.urlopen(index) as resp:
        page = resp.read().decode()
    links = [h for h in re.findall(r'href="([^"]+)"', page) if ARCHIVE in h]
    if not links:
        print(f"{ARCHIVE} not listed at {index}", file=sys.stderr)
        return 1
    with urllib.request.urlopen(urllib.parse.urljoin(index, links[0])) as resp:
        archive = resp.read()
    with zipfile.ZipFile(io.BytesIO(archive)) as zf:
        for member in zf.namelist():
            name = member.rsplit("/", 1)[-1]
            if name in MD5:
                (out / name).write_bytes(zf.read(member))

    bad = [name for name, digest in MD5.items() if not (out / name).exists() or md5(out / name) != digest]
    if bad:
        print(f"checksum mismatch or missing file: {', '.join(bad)}", file=sys.stderr)
        return 1
    print(f"wrote {len(MD5)} files to {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
