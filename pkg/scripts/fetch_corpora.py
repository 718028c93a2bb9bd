#!/usr/bin/env python3
"""Populate ./data with the pinned evaluation corpora.

ATT&CK bundles (enterprise, ics, mobile; STIX 2.0, November 2022 release) are
taken from the misp-stix 2.4.172 source distribution, which vendors them, and
checked against a sha256 pin. The CIRCL OSINT feed is mirrored from circl.lu
(or copied from a local directory) and pinned by manifest hash.

    python3 scripts/fetch_corpora.py [--data DIR] [--sdist FILE] [--circl-from DIR] [--skip-circl]
"""

from __future__ import annotations

import argparse
import hashlib
import json
import shutil
import subprocess
import sys
import tarfile
import tempfile
import urllib.request
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

SDIST = "misp-stix==2.4.172"
SDIST_FILE = "misp_stix-2.4.172.tar.gz"
SDIST_SHA256 = "0042b820b4b9bc167d95ed616ee741801bb125a86529ee209bc0cbde6a5017af"
ATTACK_LABEL = "ATT&CK v12 (misp-stix 2.4.172)"
DOMAINS = ("enterprise", "ics", "mobile")
CIRCL_URL = "https://www.circl.lu/doc/misp/feed-osint/"


def sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def fetch_attack(data: Path, sdist: Path | None = None) -> dict:
    out = data / "attack"
    out.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory() as tmp:
        if sdist is None:
            subprocess.run([sys.executable, "-m", "pip", "download", "--no-deps", "--no-binary", ":all:",
                            "--default-timeout=300", "--retries=5", "-d", tmp, SDIST], check=True)
            sdist = Path(tmp) / SDIST_FILE
        digest = sha256(sdist)
        if digest != SDIST_SHA256:
            sys.exit(f"sha256 mismatch for {SDIST_FILE}: {digest}")
        with tarfile.open(sdist) as tar:
            for d in DOMAINS:
                member = f"misp_stix-2.4.172/misp_stix_converter/data/cti/{d}-attack/{d}-attack.json"
                with tar.extractfile(member) as src, open(out / f"{d}-attack.json", "wb") as dst:
                    shutil.copyfileobj(src, dst)
    return {d: {"version": ATTACK_LABEL, "sha256": sha256(out / f"{d}-attack.json")} for d in DOMAINS}


def _get(url: str) -> bytes:
    with urllib.request.urlopen(url, timeout=60) as r:
        return r.read()


def fetch_circl(data: Path, local: Path | None) -> dict:
    out = data / "circl"
    out.mkdir(parents=True, exist_ok=True)
    if local is not None:
        for f in local.glob("*.json"):
            shutil.copy2(f, out / f.name)
    else:
        (out / "manifest.json").write_bytes(_get(CIRCL_URL + "manifest.json"))
        uuids = list(json.loads((out / "manifest.json").read_text()))

        def one(u):
            (out / f"{u}.json").write_bytes(_get(f"{CIRCL_URL}{u}.json"))

        with ThreadPoolExecutor(8) as pool:
            list(pool.map(one, uuids))
    manifest = out / "manifest.json"
    if not manifest.exists():
        sys.exit(f"no manifest.json in {out}")
    n = len(json.loads(manifest.read_text()))
    digest = sha256(manifest)
    return {"circl": {"version": f"manifest sha256 {digest[:16]} ({n} events)", "sha256": digest}}


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--data", type=Path, default=Path("data"))
    ap.add_argument("--sdist", type=Path, help=f"use an already downloaded {SDIST_FILE}")
    ap.add_argument("--circl-from", type=Path, help="copy the feed from a local mirror")
    ap.add_argument("--skip-circl", action="store_true")
    args = ap.parse_args(argv)
    pins_path = args.data / "pins.json"
    pins = json.loads(pins_path.read_text()) if pins_path.exists() else {}
    pins.update(fetch_attack(args.data, args.sdist))
    if not args.skip_circl:
        pins.update(fetch_circl(args.data, args.circl_from))
    pins_path.write_text(json.dumps(pins, indent=2, sort_keys=True) + "\n")
    print(json.dumps(pins, indent=2, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
