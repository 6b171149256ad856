"""
Cache plumbing: atomic writes, content digests and stage directories.

A stage builds its output in `<dir>.partial` and renames it into place only
when it succeeds, so a failed run never leaves half-written artifacts.
"""

import hashlib
import os
import shutil
import tempfile
from contextlib import contextmanager
from pathlib import Path

import ujson
from logzero import logger

STAMP_NAME = '.stamp'


def atomic_write_bytes(path, payload):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix='.tmp')
    try:
        with os.fdopen(fd, 'wb') as handle:
            handle.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise


def atomic_write_text(path, text):
    atomic_write_bytes(path, text.encode('utf-8'))


def dumps_json(obj):
    return ujson.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False, escape_forward_slashes=False) + '\n'


def write_json(path, obj):
    atomic_write_text(path, dumps_json(obj))


def read_json(path):
    with open(path, 'r', encoding='utf-8') as handle:
        return ujson.load(handle)


def file_digest(path):
    digest = hashlib.sha256()
    with open(path, 'rb') as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b''):
            digest.update(chunk)
    return digest.hexdigest()


def inputs_digest(config_digest, paths):
    """Digest over the config and every input file (directories are walked in sorted order)."""
    digest = hashlib.sha256(config_digest.encode('utf-8'))
    for path in paths:
        path = Path(path)
        files = sorted(p for p in path.rglob('*') if p.is_file() and p.name != STAMP_NAME) if path.is_dir() else [path]
        for file in files:
            digest.update(str(file.relative_to(path.parent) if path.is_dir() else file.name).encode('utf-8'))
            digest.update(file_digest(file).encode('utf-8'))
    return digest.hexdigest()


def is_up_to_date(directory, digest):
    stamp = Path(directory) / STAMP_NAME
    return stamp.is_file() and stamp.read_text(encoding='utf-8').strip() == digest


@contextmanager
def stage_directory(directory, digest):
    """Yield a scratch directory that replaces `directory` on success."""
    directory = Path(directory)
    partial = directory.with_name(directory.name + '.partial')
    if partial.exists():
        shutil.rmtree(partial)
    partial.mkdir(parents=True)
    try:
        yield partial
    except BaseException:
        logger.error(f"stage {directory.name} failed, removing {partial}")
        shutil.rmtree(partial, ignore_errors=True)
        raise
    (partial / STAMP_NAME).write_text(digest + '\n', encoding='utf-8')
    if directory.exists():
        shutil.rmtree(directory)
    os.replace(partial, directory)
