"""Model oracles: evaluable decision functions for interventional audits.

Every oracle maps complete feature assignments to decisions, in order.
Imputed constants may be off-alphabet reals (e.g. a mean of 0.5 for a
binary feature), so numeric features are passed through as floats.

External models speak a line-delimited JSON protocol over the child
process's stdin/stdout::

    request:  {"id": 7, "features": {"X1": 1, "X2": 0.5}}
    response: {"id": 7, "decision": 1.5}

Responses may arrive in any order; ids are matched.
"""
from __future__ import annotations

import json
import queue
import shlex
import subprocess
import threading
import time
from typing import Mapping, Sequence

import numpy as np


class OracleError(RuntimeError):
    """Model evaluation failed (crash, timeout, malformed response)."""


def normalize_decision(value):
    """Canonical hashable form of a decision symbol.

    Numbers are rounded to 12 decimals so that float noise does not split
    one decision into several symbols; integral values become ints.
    """
    if isinstance(value, (bool, np.bool_)):
        return int(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        v = round(float(value), 12)
        if v == int(v):
            return int(v)
        return v
    if isinstance(value, str):
        return value
    raise OracleError(f"unsupported decision type {type(value).__name__}: {value!r}")


def _json_value(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        v = float(v)
    if isinstance(v, float) and v == int(v):
        return int(v)
    return v


class ModelOracle:
    """Base class. Subclasses implement :meth:`_evaluate`."""

    backend = "abstract"

    def __init__(self, feature_order: Sequence[str]):
        self.feature_order = tuple(feature_order)
        self.determinism_checked = True

    def _rows(self, assignments):
        out = []
        for i, a in enumerate(assignments):
            if isinstance(a, Mapping):
                try:
                    out.append(tuple(a[f] for f in self.feature_order))
                except KeyError as e:
                    raise OracleError(f"row {i}: missing feature {e.args[0]!r}") from None
            else:
                a = tuple(a)
                if len(a) != len(self.feature_order):
                    raise OracleError(f"row {i}: expected {len(self.feature_order)} values, got {len(a)}")
                out.append(a)
        return out

    def evaluate_batch(self, assignments) -> list:
        """Decisions for a list of complete feature rows (dicts or tuples)."""
        rows = self._rows(assignments)
        if not rows:
            return []
        return [normalize_decision(d) for d in self._evaluate(rows)]

    def _evaluate(self, rows: list[tuple]) -> list:
        raise NotImplementedError

    def close(self):
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class LookupTableOracle(ModelOracle):
    """Decision table keyed by the full feature tuple.

    Parameters
    ----------
    table : mapping
        ``{feature tuple: decision}``.
    default : optional
        Decision for rows not in the table; without it a miss is an error.
    alphabets : mapping, optional
        When given, the table must cover the product alphabet unless a
        default is declared.
    """

    backend = "lookup_table"
    _MISSING = object()

    def __init__(self, feature_order, table, default=_MISSING, alphabets=None):
        super().__init__(feature_order)
        self.table = {tuple(k): v for k, v in table.items()}
        self.default = default
        if alphabets is not None and default is self._MISSING:
            import itertools
            for key in itertools.product(*(alphabets[f] for f in self.feature_order)):
                if key not in self.table:
                    raise ValueError(f"lookup table has no entry for {key} and no default")

    def _evaluate(self, rows):
        out = []
        for i, r in enumerate(rows):
            if r in self.table:
                out.append(self.table[r])
            elif self.default is not self._MISSING:
                out.append(self.default)
            else:
                raise OracleError(f"row {i}: no table entry for {r}")
        return out


class LinearOracle(ModelOracle):
    """``decision = sum(coef * x) + intercept``, optionally ``mod modulus``.

    With a ``decision_alphabet`` the output is snapped to the nearest
    symbol; otherwise the raw value is the decision.
    """

    backend = "linear_expression"

    def __init__(self, feature_order, coefficients, intercept=0.0, modulus=None,
                 decision_alphabet=None):
        super().__init__(feature_order)
        coef = np.asarray(coefficients, dtype=float)
        if coef.shape != (len(self.feature_order),) or not np.all(np.isfinite(coef)):
            raise ValueError("need one finite coefficient per feature")
        if not np.isfinite(intercept):
            raise ValueError("intercept must be finite")
        self.coefficients = coef
        self.intercept = float(intercept)
        self.modulus = modulus
        self.decision_alphabet = None if decision_alphabet is None else np.asarray(decision_alphabet, float)

    def _evaluate(self, rows):
        try:
            x = np.asarray(rows, dtype=float)
        except ValueError:
            raise OracleError("linear model needs numeric features") from None
        y = x @ self.coefficients + self.intercept
        if self.modulus is not None:
            y = np.mod(y, self.modulus)
        if self.decision_alphabet is not None:
            idx = np.abs(y[:, None] - self.decision_alphabet[None, :]).argmin(axis=1)
            y = self.decision_alphabet[idx]
        return y.tolist()


def builtin_oracle(name: str, feature_order: Sequence[str]) -> ModelOracle:
    """Named reference models over the given features.

    ``first``  decision = first feature
    ``diff``   first minus second
    ``sum``    sum of all features
    ``xor``    sum of all features mod 2 (XOR on bits, defined for reals)
    """
    n = len(feature_order)
    if name == "first":
        coef = [1.0] + [0.0] * (n - 1)
        return LinearOracle(feature_order, coef)
    if name == "diff":
        if n < 2:
            raise ValueError("builtin:diff needs two features")
        return LinearOracle(feature_order, [1.0, -1.0] + [0.0] * (n - 2))
    if name == "sum":
        return LinearOracle(feature_order, [1.0] * n)
    if name == "xor":
        return LinearOracle(feature_order, [1.0] * n, modulus=2.0)
    raise ValueError(f"unknown builtin model {name!r}; choose first, diff, sum or xor")


class ExternalProcessOracle(ModelOracle):
    """Model served by a child process over line-delimited JSON.

    The process is started lazily and reused across batches; call
    :meth:`close` (or use the oracle as a context manager) to stop it.
    """

    backend = "external_process"

    def __init__(self, command, feature_order, timeout: float = 30.0):
        super().__init__(feature_order)
        self.command = shlex.split(command) if isinstance(command, str) else list(command)
        self.timeout = timeout
        self._proc = None
        self._lines: queue.Queue | None = None
        self._next_id = 0

    def _start(self):
        if self._proc is not None and self._proc.poll() is None:
            return
        try:
            self._proc = subprocess.Popen(
                self.command, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                stderr=subprocess.PIPE, text=True, bufsize=1,
            )
        except OSError as e:
            raise OracleError(f"cannot start model process {self.command}: {e}") from None
        self._lines = queue.Queue()
        threading.Thread(target=self._pump, args=(self._proc.stdout, self._lines), daemon=True).start()

    @staticmethod
    def _pump(stream, q):
        for line in stream:
            q.put(line)
        q.put(None)

    def _evaluate(self, rows):
        self._start()
        first = self._next_id
        ids = list(range(first, first + len(rows)))
        self._next_id += len(rows)
        span = f"rows {0}-{len(rows) - 1}"
        payload = "".join(
            json.dumps({"id": i, "features": {f: _json_value(v) for f, v in zip(self.feature_order, r)}}) + "\n"
            for i, r in zip(ids, rows)
        )

        def write():
            try:
                self._proc.stdin.write(payload)
                self._proc.stdin.flush()
            except (BrokenPipeError, OSError):
                pass

        writer = threading.Thread(target=write, daemon=True)
        writer.start()
        pending = set(ids)
        results = {}
        deadline = time.monotonic() + self.timeout
        while pending:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                self.close(kill=True)
                raise OracleError(f"model timed out after {self.timeout}s on {span}")
            try:
                line = self._lines.get(timeout=remaining)
            except queue.Empty:
                continue
            if line is None:
                err = self._proc.stderr.read() if self._proc.stderr else ""
                code = self._proc.wait()
                self._proc = None
                raise OracleError(f"model process exited with code {code} on {span}: {err.strip()[:500]}")
            line = line.strip()
            if not line:
                continue
            try:
                msg = json.loads(line)
                rid = msg["id"]
                decision = msg["decision"]
            except (ValueError, KeyError, TypeError):
                raise OracleError(f"malformed response line: {line!r}") from None
            if rid not in pending:
                raise OracleError(f"unexpected response id {rid!r} in line: {line!r}")
            pending.discard(rid)
            results[rid] = decision
        writer.join()
        return [results[i] for i in ids]

    def close(self, kill: bool = False):
        proc, self._proc = self._proc, None
        if proc is None:
            return
        try:
            proc.stdin.close()
        except OSError:
            pass
        if kill:
            proc.kill()
        try:
            proc.wait(timeout=2)
        except subprocess.TimeoutExpired:
            proc.kill()
            proc.wait()
        for s in (proc.stdout, proc.stderr):
            if s:
                s.close()


def parse_oracle(spec: str, feature_order: Sequence[str], timeout: float = 30.0) -> ModelOracle:
    """Build an oracle from ``builtin:<name>``, ``exec:<command>`` or ``table:<csv>``.

    A ``table:`` CSV has one column per feature plus a ``decision`` column.
    """
    kind, _, arg = spec.partition(":")
    if kind == "builtin":
        return builtin_oracle(arg, feature_order)
    if kind == "exec":
        if not arg.strip():
            raise ValueError("exec: oracle needs a command")
        return ExternalProcessOracle(arg, feature_order, timeout=timeout)
    if kind == "table":
        import csv
        from .datasets import parse_cell
        table = {}
        with open(arg, newline="", encoding="utf-8") as fh:
            for rec in csv.DictReader(fh):
                key = tuple(parse_cell(rec[f]) for f in feature_order)
                table[key] = parse_cell(rec["decision"])
        return LookupTableOracle(feature_order, table)
    raise ValueError(f"unrecognised oracle {spec!r}; use builtin:<name>, exec:<command> or table:<csv>")
