#!/usr/bin/env python3
"""Assemble the public-domain desk corpus used by the acceptance suite.

Sources (both public domain, fetched from PyPI because they ship the text):
  * shakespeare==0.6          -- Gutenberg editions of the plays (folio
                                 variants ``*_f.txt`` are skipped)
  * pythonbible-kjv==0.0.2    -- King James Bible, reader's edition

Output: data/desk-corpus.txt.gz, UTF-8, one paragraph per line.
"""
import gzip
import pathlib
import re
import subprocess
import sys
import tarfile
import tempfile
import zipfile

ROOT = pathlib.Path(__file__).resolve().parent.parent
OUT = ROOT / "data" / "desk-corpus.txt.gz"


def fetch(tmp):
    subprocess.run(
        [sys.executable, "-m", "pip", "download", "--no-deps", "-q", "-d", tmp,
         "shakespeare==0.6", "pythonbible-kjv==0.0.2"],
        check=True,
    )


def paragraphs(text):
    for block in re.split(r"\n\s*\n", text):
        line = " ".join(block.split())
        if line:
            yield line


def shakespeare(tmp):
    tar = tarfile.open(next(pathlib.Path(tmp).glob("shakespeare-*.tar.gz")))
    members = sorted(
        (m for m in tar.getmembers()
         if "/shksprdata/texts/" in m.name and m.name.endswith("_gut.txt")),
        key=lambda m: m.name,
    )
    for m in members:
        yield from paragraphs(tar.extractfile(m).read().decode("latin-1"))


def kjv(tmp):
    whl = next(pathlib.Path(tmp).glob("pythonbible_kjv-*.whl"))
    src = zipfile.ZipFile(whl).read("pythonbible_kjv/plain_text_readers_bible.py").decode()
    start = src.index('"""') + 3
    body = src[start:src.index('"""', start)]
    for line in body.splitlines():
        line = " ".join(line.split())
        if line:
            yield line


def main():
    with tempfile.TemporaryDirectory() as tmp:
        fetch(tmp)
        lines = list(shakespeare(tmp)) + list(kjv(tmp))
    OUT.parent.mkdir(parents=True, exist_ok=True)
    with gzip.GzipFile(OUT, "wb", mtime=0) as f:
        f.write(("\n".join(lines) + "\n").encode("utf-8"))
    print(f"{OUT}: {len(lines)} lines, {sum(len(l.split()) for l in lines)} words")


if __name__ == "__main__":
    main()
