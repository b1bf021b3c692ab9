"""The coding registry: injective assignment of even-indexed weights to
successive tree sequences, plus the dependent-extension witness store.

Assignments are monotone in registration order (a cursor over even
indices), which makes the map injective by construction; a value, once
assigned, never changes.  Persistence is an append-only JSON-lines file
replayed on load; a lock file serializes mutation.  Replaying a witness
build from the same persisted registry reproduces byte-identical output.
"""

from __future__ import annotations

import hashlib
import json
import os
from typing import Sequence

from .trees import DependentWitness, NormingTree, witness_key


def strip_root_gamma(t: NormingTree) -> NormingTree:
    """The coding ignores the free scalar on a tree: sequences are keyed
    with root coefficients normalized to one, so a rescaled copy of a
    registered tree prescribes the same next weight."""
    from fractions import Fraction

    return NormingTree(t.weight, t.iset, Fraction(1), t.children)


def sequence_key(seq: Sequence[NormingTree]) -> str:
    return "[" + ",".join(strip_root_gamma(t).serialize() for t in seq) + "]"


class RegistryError(RuntimeError):
    pass


class SigmaRegistry:
    def __init__(self, params, path: str | None = None, base_index: int = 0):
        self.params = params
        self.path = path
        self.base_index = base_index
        self.entries: dict[str, int] = {}
        self.witnesses: dict[str, DependentWitness] = {}
        self.last_index = base_index
        if path and os.path.exists(path):
            self._load()

    # -- persistence ------------------------------------------------------

    def _load(self) -> None:
        with open(self.path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                rec = json.loads(line)
                kind = rec["kind"]
                if kind == "header":
                    if rec["params"] != self.params.fingerprint():
                        raise RegistryError(
                            "registry file belongs to a different parameter system"
                        )
                    self.base_index = max(self.base_index, int(rec["base_index"]))
                    self.last_index = max(self.last_index, self.base_index)
                elif kind == "sigma":
                    w = int(rec["weight"])
                    self.entries[rec["key"]] = w
                    self.last_index = max(self.last_index, self.params.index_of_weight(w))
                elif kind == "witness":
                    self.witnesses[rec["key"]] = DependentWitness.from_json_dict(rec["witness"])
                else:
                    raise RegistryError(f"unknown record kind {kind!r}")

    def _append(self, rec: dict) -> None:
        if not self.path:
            return
        lock = self.path + ".lock"
        fd = None
        try:
            for _ in range(1000):
                try:
                    fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
                    break
                except FileExistsError:
                    import time

                    time.sleep(0.01)
            if fd is None:
                raise RegistryError(f"could not acquire registry lock {lock}")
            new = not os.path.exists(self.path) or os.path.getsize(self.path) == 0
            with open(self.path, "a", encoding="utf-8") as fh:
                if new:
                    fh.write(json.dumps({"kind": "header",
                                         "params": self.params.fingerprint(),
                                         "base_index": self.base_index},
                                        sort_keys=True) + "\n")
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
        finally:
            if fd is not None:
                os.close(fd)
                os.unlink(lock)

    # -- coding assignments ------------------------------------------------

    def sigma_peek(self, seq: Sequence[NormingTree]) -> int | None:
        return self.entries.get(sequence_key(seq))

    def assign(self, seq: Sequence[NormingTree]) -> int:
        """Weight assigned to the sequence, allocating a fresh one if new.

        The fresh weight is the smallest even-indexed weight exceeding the
        weights of all sequence members past the first and every weight
        assigned before (the monotone cursor).
        """
        if not seq:
            raise ValueError("empty sequence")
        sets = [t.iset for t in seq]
        from . import schreier

        if not schreier.successive(sets):
            raise ValueError("sequence is not successive")
        key = sequence_key(seq)
        hit = self.entries.get(key)
        if hit is not None:
            return hit
        floor_w = max((t.weight for t in seq[1:]), default=0)
        idx = self.last_index + 2 if self.last_index % 2 == 0 else self.last_index + 1
        idx = max(idx, 2)
        while self.params.m(idx) <= floor_w:
            idx += 2
        w = self.params.m(idx)
        self.entries[key] = w
        self.last_index = idx
        self._append({"kind": "sigma", "key": key, "weight": str(w)})
        return w

    # -- witness store -------------------------------------------------------

    def witness_put(self, children: Sequence[NormingTree], j: int,
                    witness: DependentWitness) -> None:
        key = witness_key(children, j)
        if key in self.witnesses:
            return
        self.witnesses[key] = witness
        self._append({"kind": "witness", "key": key,
                      "witness": witness.to_json_dict()})

    def witness_get(self, key: str) -> DependentWitness | None:
        return self.witnesses.get(key)

    def snapshot_hash(self) -> str:
        blob = json.dumps(
            {
                "base_index": self.base_index,
                "entries": self.entries,
                "witnesses": {k: w.to_json_dict() for k, w in sorted(self.witnesses.items())},
            },
            sort_keys=True,
            separators=(",", ":"),
        )
        return hashlib.sha256(blob.encode()).hexdigest()
