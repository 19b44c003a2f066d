#!/usr/bin/env python3
"""Exports a bundle with the CLI and validates its manifest against the schema.

usage: check_bundle_schema.py <hypsep binary> <schema.json> <work dir>
"""

import json
import os
import shutil
import subprocess
import sys

import jsonschema


def run(cli, *args):
    subprocess.run([cli, *args], check=True, stdout=subprocess.DEVNULL)


def main():
    cli, schema_path, work = sys.argv[1:4]
    shutil.rmtree(work, ignore_errors=True)
    os.makedirs(work)
    ds = os.path.join(work, "ds")
    ckpt = os.path.join(work, "m.ckpt")
    out = os.path.join(work, "bundle")

    run(cli, "dataset", "--out", ds, "--tracks", "10", "--duration", "3", "--seed", "21")
    run(cli, "train", "--dataset", ds, "--epochs", "1", "--hidden", "8", "--chunk-seconds", "1.6",
        "--batch-size", "4", "--out", ckpt)
    with open(os.path.join(ds, "manifest.json")) as f:
        track = json.load(f)["splits"]["test"][0]["id"]
    run(cli, "export", "--checkpoint", ckpt, "--dataset", ds, "--track", track, "--out", out,
        "--bayesian-passes", "4")

    with open(schema_path) as f:
        schema = json.load(f)
    with open(os.path.join(out, "manifest.json")) as f:
        manifest = json.load(f)
    jsonschema.validate(manifest, schema, cls=jsonschema.Draft7Validator)

    # Every referenced file exists and maps hold prod(shape) float32 values.
    for stems in manifest["audio"]["stems"].values():
        for rel in stems.values():
            assert os.path.isfile(os.path.join(out, rel)), rel
    for name, m in manifest["maps"].items():
        n = 1
        for d in m["shape"]:
            n *= d
        size = os.path.getsize(os.path.join(out, m["path"]))
        assert size == 4 * n, f"{name}: {size} bytes for shape {m['shape']}"
    assert "bayesian" in manifest["maps"]
    print("bundle manifest valid")


if __name__ == "__main__":
    main()
