"""FCIDUMP reading and writing.

Header ``&FCI NORB=n,NELEC=n,MS2=0, [ORBSYM=...,] [ISYM=1,]`` terminated by
``&END`` or ``/``, followed by records ``value i j k l`` (1-based):

* ``i j k l``  two-electron ``(ij|kl)``
* ``i j 0 0``  one-electron ``h_ij``
* ``i 0 0 0``  orbital energy ``eps_i``
* ``0 0 0 0``  core energy
"""

from __future__ import annotations

import logging
import os
import re
from pathlib import Path

import numpy as np

from .integrals import IntegralSet, fock_matrix

log = logging.getLogger(__name__)


class FCIDumpError(ValueError):
    def __init__(self, msg: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {msg}" if line is not None else msg)


class MalformedHeaderError(FCIDumpError):
    pass


class OpenShellError(FCIDumpError):
    pass


class IndexOutOfRangeError(FCIDumpError):
    pass


class MalformedRecordError(FCIDumpError):
    pass


def _parse_header(text: str, first_line: int) -> dict[str, list[str]]:
    body = text.strip()
    if not body.upper().startswith("&FCI"):
        raise MalformedHeaderError("header must start with &FCI", first_line)
    fields: dict[str, list[str]] = {}
    key = None
    for tok in re.split(r"[,\s]+", body[4:]):
        if not tok:
            continue
        if "=" in tok:
            key, _, value = tok.partition("=")
            key = key.upper()
            fields[key] = [value] if value else []
        elif key is None:
            raise MalformedHeaderError(f"unexpected token {tok!r}", first_line)
        else:
            fields[key].append(tok)
    for key in ("NORB", "NELEC"):
        if len(fields.get(key, ())) != 1:
            raise MalformedHeaderError(f"missing or malformed {key}", first_line)
    return fields


def load_fcidump(path: "str | os.PathLike") -> IntegralSet:
    lines = Path(path).read_text().splitlines()
    header_parts, end = [], None
    for n, line in enumerate(lines):
        header_parts.append(line)
        stripped = line.strip()
        if stripped.upper().endswith("&END") or stripped == "/" or stripped.endswith("/"):
            text = "\n".join(header_parts)
            text = re.sub(r"(&END|/)\s*$", "", text.strip(), flags=re.I)
            end = n
            break
    if end is None:
        raise MalformedHeaderError("header is not terminated by &END or /", len(lines))
    fields = _parse_header(text, 1)
    try:
        norb = int(fields["NORB"][0])
        nelec = int(fields["NELEC"][0])
        ms2 = int((fields.get("MS2") or ["0"])[0])
    except ValueError as err:
        raise MalformedHeaderError(f"non-integer header value ({err})", 1) from None
    if norb < 0 or nelec < 0:
        raise MalformedHeaderError("negative NORB or NELEC", 1)
    if nelec % 2 or ms2 != 0:
        raise OpenShellError(f"open-shell system (NELEC={nelec}, MS2={ms2}) is not supported", 1)

    h = np.zeros((norb, norb))
    eri = np.zeros((norb,) * 4)
    eps = np.zeros(norb)
    have_eps = False
    core = 0.0
    for n in range(end + 1, len(lines)):
        parts = lines[n].split()
        if not parts:
            continue
        lineno = n + 1
        if len(parts) != 5:
            raise MalformedRecordError(f"expected 'value i j k l', got {lines[n]!r}", lineno)
        try:
            value = float(parts[0])
            i, j, k, l = (int(x) for x in parts[1:])
        except ValueError:
            raise MalformedRecordError(f"cannot parse record {lines[n]!r}", lineno) from None
        if any(x < 0 or x > norb for x in (i, j, k, l)):
            raise IndexOutOfRangeError(f"index out of range 0..{norb} in {lines[n]!r}", lineno)
        i, j, k, l = i - 1, j - 1, k - 1, l - 1
        if i >= 0 and j >= 0 and k >= 0 and l >= 0:
            for p, q, r, s in (
                (i, j, k, l), (j, i, k, l), (i, j, l, k), (j, i, l, k),
                (k, l, i, j), (l, k, i, j), (k, l, j, i), (l, k, j, i),
            ):
                eri[p, q, r, s] = value
        elif i >= 0 and j >= 0 and k < 0 and l < 0:
            h[i, j] = h[j, i] = value
        elif i >= 0 and j < 0 and k < 0 and l < 0:
            eps[i] = value
            have_eps = True
        elif i < 0 and j < 0 and k < 0 and l < 0:
            core = value
        else:
            raise MalformedRecordError(f"unsupported index pattern in {lines[n]!r}", lineno)

    n_occ = nelec // 2
    if not 0 < n_occ < norb:
        raise FCIDumpError(f"need 0 < NELEC/2 < NORB (NELEC={nelec}, NORB={norb})")
    fock = fock_matrix(h, eri, n_occ)
    off = fock - np.diag(np.diag(fock))
    canonical = bool(np.abs(off).max(initial=0.0) <= 1e-8)
    if not have_eps:
        eps = np.diag(fock).copy()
        if not canonical:
            log.warning("%s: reference Fock matrix is not diagonal; using its diagonal as orbital energies", path)
    return IntegralSet(norb, n_occ, core, h, eri, eps, canonical=canonical)


def _fmt(value: float) -> str:
    return repr(float(value))


def write_fcidump(ints: IntegralSet, path: "str | os.PathLike") -> None:
    """Write symmetry-unique nonzero records (``i>=j, k>=l, ij>=kl``), bit-exact."""
    n = ints.n_orb
    out = [f"&FCI NORB={n},NELEC={2 * ints.n_occ},MS2=0,", " ORBSYM=" + "1," * n, " ISYM=1,", "&END"]
    eri = ints.eri
    for i in range(n):
        for j in range(i + 1):
            ij = i * (i + 1) // 2 + j
            for k in range(n):
                for l in range(k + 1):
                    if k * (k + 1) // 2 + l > ij:
                        continue
                    v = eri[i, j, k, l]
                    if v != 0.0:
                        out.append(f"{_fmt(v)} {i + 1} {j + 1} {k + 1} {l + 1}")
    for i in range(n):
        for j in range(i + 1):
            if ints.h[i, j] != 0.0:
                out.append(f"{_fmt(ints.h[i, j])} {i + 1} {j + 1} 0 0")
    for i in range(n):
        if ints.eps[i] != 0.0:
            out.append(f"{_fmt(ints.eps[i])} {i + 1} 0 0 0")
    if ints.core_energy != 0.0:
        out.append(f"{_fmt(ints.core_energy)} 0 0 0 0")
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text("\n".join(out) + "\n")
    os.replace(tmp, path)
