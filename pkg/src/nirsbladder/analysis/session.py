"""Session CSV files: one digitised frame per row.

Optional ``# key: value`` lines before the header carry session metadata.
Recognised keys: ``sample_rate_hz``, ``position``, and repeated
``window: <position> <state> <t0> <t1>`` entries that label time windows
(for example ``window: standing full 0 60``).
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

from ..errors import InputDataError
from ..sensing import MAX_CODE, AfeConfig, SampleFrame

COLUMNS = ("t_s", "optode_id", "adc_code_on", "adc_code_ambient", "v_on", "v_ambient",
           "v_cancelled")
OPTODE_IDS = range(1, 9)


@dataclass(frozen=True)
class Window:
    position: str
    state: str
    t0: float
    t1: float

    def as_text(self):
        return f"{self.position} {self.state} {_fmt_t(self.t0)} {_fmt_t(self.t1)}"


@dataclass
class Session:
    frames: list
    metadata: dict = field(default_factory=dict)
    windows: list = field(default_factory=list)

    def optodes(self):
        return sorted({f.optode_id for f in self.frames})

    def series(self, optode_id):
        """``(t, v_cancelled)`` lists for one optode, in file order."""
        fr = [f for f in self.frames if f.optode_id == optode_id]
        return [f.t for f in fr], [f.v_cancelled for f in fr]


def _fmt_t(t):
    return format(float(t), ".10g")


def _fmt_v(v):
    return format(float(v), ".6g")


def format_session(session):
    """CSV text for ``session``; volts are regenerated from the codes."""
    out = io.StringIO()
    for k, v in session.metadata.items():
        out.write(f"# {k}: {v}\n")
    for w in session.windows:
        out.write(f"# window: {w.as_text()}\n")
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(COLUMNS)
    for f in session.frames:
        writer.writerow([_fmt_t(f.t), f.optode_id, f.adc_code_on, f.adc_code_ambient,
                         _fmt_v(f.v_led_on), _fmt_v(f.v_ambient), _fmt_v(f.v_cancelled)])
    return out.getvalue()


def write_session(session, path):
    with open(path, "w", newline="") as fh:
        fh.write(format_session(session))


def _parse_window(text, lineno):
    parts = text.split()
    if len(parts) != 4:
        raise InputDataError(f"line {lineno}: window needs '<position> <state> <t0> <t1>', "
                             f"got {text!r}")
    try:
        t0, t1 = float(parts[2]), float(parts[3])
    except ValueError:
        raise InputDataError(f"line {lineno}: window bounds must be numbers: {text!r}") from None
    if t1 < t0:
        raise InputDataError(f"line {lineno}: window ends before it starts: {text!r}")
    return Window(parts[0], parts[1], t0, t1)


def parse_session(text, cfg=None):
    """Parse session CSV text; errors carry the 1-based line number."""
    cfg = cfg or AfeConfig()
    metadata, windows, frames = {}, [], []
    header_seen = False
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        if line.startswith("#"):
            if header_seen:
                raise InputDataError(f"line {lineno}: metadata after the header row")
            key, sep, value = line[1:].partition(":")
            if not sep:
                raise InputDataError(f"line {lineno}: metadata must read '# key: value'")
            key, value = key.strip(), value.strip()
            if key == "window":
                windows.append(_parse_window(value, lineno))
            else:
                metadata[key] = value
            continue
        row = next(csv.reader([line]))
        if not header_seen:
            if tuple(c.strip() for c in row) != COLUMNS:
                raise InputDataError(f"line {lineno}: expected header {','.join(COLUMNS)}")
            header_seen = True
            continue
        if len(row) != len(COLUMNS):
            raise InputDataError(f"line {lineno}: expected {len(COLUMNS)} fields, got {len(row)}")
        try:
            t = float(row[0])
            oid = int(row[1])
            code_on, code_amb = int(row[2]), int(row[3])
            float(row[4]), float(row[5]), float(row[6])
        except ValueError as exc:
            raise InputDataError(f"line {lineno}: {exc}") from None
        if oid not in OPTODE_IDS:
            raise InputDataError(f"line {lineno}: unknown optode id {oid} (expected 1-8)")
        if not (0 <= code_on <= MAX_CODE and 0 <= code_amb <= MAX_CODE):
            raise InputDataError(f"line {lineno}: ADC code outside [0, {MAX_CODE}]")
        frames.append(SampleFrame.from_codes(oid, t, code_on, code_amb, cfg))
    if not header_seen:
        raise InputDataError("no header row found")
    return Session(frames, metadata, windows)


def read_session(path, cfg=None):
    try:
        with open(path, newline="") as fh:
            text = fh.read()
    except OSError as exc:
        raise InputDataError(f"cannot read session {path}: {exc}") from exc
    return parse_session(text, cfg)
