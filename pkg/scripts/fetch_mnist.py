#!/usr/bin/env python3
"""Fetch the MNIST IDX files into a local data directory.

Downloads the four gzipped IDX files from a public mirror, decompresses
them, sanity-checks the parsed shapes, and writes checksums.json so later
loads can flag corruption. Idempotent: files already present are kept
unless --force is given.

Usage:
    python scripts/fetch_mnist.py [--out DIR] [--mirror URL] [--force]
"""

import argparse
import gzip
import hashlib
import json
import os
import sys
import urllib.error
import urllib.request

from qshield import dataio

MIRRORS = (
    "https://ossci-datasets.s3.amazonaws.com/mnist/",
    "https://storage.googleapis.com/cvdf-datasets/mnist/",
)

FILES = [name for pair in dataio.SPLIT_FILES.values() for name in pair]


def fetch_one(name: str, mirrors, out_dir: str, force: bool) -> str:
    dest = os.path.join(out_dir, name)
    if os.path.exists(dest) and not force:
        print(f"  {name}: already present")
        return dest
    last_error = None
    for mirror in mirrors:
        url = mirror.rstrip("/") + "/" + name + ".gz"
        try:
            with urllib.request.urlopen(url, timeout=60) as resp:
                blob = resp.read()
            break
        except (urllib.error.URLError, OSError) as exc:
            print(f"  {name}: {url} failed ({exc})", file=sys.stderr)
            last_error = exc
    else:
        raise SystemExit(f"could not download {name} from any mirror: {last_error}")
    payload = gzip.decompress(blob)
    tmp = dest + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(payload)
    os.replace(tmp, dest)
    print(f"  {name}: {len(payload)} bytes from {url}")
    return dest


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument(
        "--out",
        default=os.environ.get("QSHIELD_DATA_DIR", "data"),
        help="target directory (default: $QSHIELD_DATA_DIR or ./data)",
    )
    parser.add_argument(
        "--mirror",
        action="append",
        default=None,
        help="mirror base URL holding the .gz files; repeatable, tried in order",
    )
    parser.add_argument("--force", action="store_true", help="re-download existing files")
    args = parser.parse_args(argv)

    os.makedirs(args.out, exist_ok=True)
    mirrors = args.mirror or MIRRORS
    print(f"fetching MNIST into {args.out}")
    for name in FILES:
        fetch_one(name, mirrors, args.out, args.force)

    split = dataio.load_split(args.out, "mnist", normalized=False)
    counts = (
        split.train_images.count,
        split.test_images.count,
    )
    if counts != (60000, 10000):
        raise SystemExit(f"unexpected split sizes {counts}, expected (60000, 10000)")
    print(f"parsed ok: train {counts[0]}, test {counts[1]}, 28x28 uint8")

    table = {}
    for name in FILES:
        with open(os.path.join(args.out, name), "rb") as fh:
            table[name] = hashlib.sha256(fh.read()).hexdigest()
    with open(os.path.join(args.out, "checksums.json"), "w") as fh:
        json.dump(table, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote {os.path.join(args.out, 'checksums.json')}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
