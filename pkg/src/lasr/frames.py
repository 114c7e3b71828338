"""Pressure-frame containers and file I/O.

Movie text format
-----------------
Movies are interchanged as plain text.  The grammar is::

    header    := "LASR1" SP rows SP cols SP nframes SP fps NL
    body      := frame (BLANK frame){nframes-1}
    frame     := row{rows}
    row       := value (SP value){cols-1} NL
    BLANK     := NL                          # exactly one empty line

``rows``, ``cols`` and ``nframes`` are positive integers, ``fps`` is a
positive decimal.  Values are nonnegative decimals; they are written with
6 significant digits, so a save/load round trip is exact for values already
representable at that precision.  The parser is strict: any deviation from
the grammar (wrong row width, negative or non-numeric value, missing or
extra separator line, trailing content) raises :class:`FormatError` with
the offending line number.

Map images are written as plain (P2) PGM with maxval 255, and maps can
also be dumped as one-line-per-row CSV.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DataError, FormatError

__all__ = [
    "Frame",
    "Movie",
    "SessionLayout",
    "SEGMENT_TAGS",
    "load_movie",
    "save_movie",
    "save_map_image",
    "save_map_csv",
    "load_session",
    "save_session",
    "frames_equal",
    "movies_equal",
    "with_positive_mask",
]

SEGMENT_TAGS = ("NoStim", "Stim")


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Frame:
    """A single rows x cols intensity image with an optional support mask.

    ``values`` must be finite, and nonnegative unless ``signed=True`` is
    passed (difference maps are signed).  Arrays are copied and frozen, so
    frames can be shared freely between workers.
    """

    values: np.ndarray
    support_mask: Optional[np.ndarray] = None
    signed: bool = False

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.size == 0:
            raise DataError(f"frame values must be a nonempty 2-D grid, got shape {v.shape}")
        if not np.isfinite(v).all():
            raise DataError("frame values must be finite")
        if not self.signed and (v < 0).any():
            raise DataError("frame values must be nonnegative")
        object.__setattr__(self, "values", _frozen(v))
        m = self.support_mask
        if m is not None:
            m = np.asarray(m)
            if m.shape != v.shape or m.dtype != np.bool_:
                raise DataError("support mask must be a boolean grid matching the frame shape")
            object.__setattr__(self, "support_mask", _frozen(m))

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple:
        return self.values.shape


@dataclass(frozen=True, eq=False)
class Movie:
    """An ordered list of equally sized frames sampled at ``fps`` frames/sec."""

    frames: tuple
    fps: float = 2.0

    def __post_init__(self):
        fr = tuple(self.frames)
        if not fr:
            raise DataError("movie must contain at least one frame")
        shape = fr[0].shape
        for k, f in enumerate(fr):
            if not isinstance(f, Frame):
                raise DataError("movie frames must be Frame instances")
            if f.shape != shape:
                raise DataError(f"frame {k} has shape {f.shape}, expected {shape}")
        if not (float(self.fps) > 0):
            raise DataError("fps must be positive")
        object.__setattr__(self, "frames", fr)
        object.__setattr__(self, "fps", float(self.fps))

    def __len__(self) -> int:
        return len(self.frames)

    def __getitem__(self, k) -> Frame:
        return self.frames[k]

    @property
    def shape(self) -> tuple:
        return self.frames[0].shape

    def stack(self) -> np.ndarray:
        """All frame values as one (nframes, rows, cols) array."""
        return np.stack([f.values for f in self.frames])


@dataclass(frozen=True)
class SessionLayout:
    """A recording session: tagged movie segments from one subject."""

    segments: tuple  # of (tag, Movie)
    session_id: str = ""
    subject_id: str = ""

    def __post_init__(self):
        segs = tuple(self.segments)
        if not segs:
            raise DataError("session must contain at least one segment")
        for tag, movie in segs:
            if tag not in SEGMENT_TAGS:
                raise DataError(f"unknown segment tag {tag!r}; expected one of {SEGMENT_TAGS}")
            if not isinstance(movie, Movie):
                raise DataError("segment payload must be a Movie")
        object.__setattr__(self, "segments", segs)


# ---------------------------------------------------------------------------
# movie text I/O
# ---------------------------------------------------------------------------

_MAGIC = "LASR1"
_VALUE_FMT = "%.6g"


def _parse_header(line: str):
    tok = line.split()
    if len(tok) != 5 or tok[0] != _MAGIC:
        raise FormatError(f"expected '{_MAGIC} <rows> <cols> <nframes> <fps>'", line=1)
    try:
        rows, cols, nframes = int(tok[1]), int(tok[2]), int(tok[3])
        fps = float(tok[4])
    except ValueError:
        raise FormatError("header fields must be numeric", line=1) from None
    if rows <= 0 or cols <= 0 or nframes <= 0:
        raise FormatError("rows, cols and nframes must be positive", line=1)
    if not (np.isfinite(fps) and fps > 0):
        raise FormatError("fps must be a positive finite number", line=1)
    return rows, cols, nframes, fps


def load_movie(path, format: str = "lasr-text") -> Movie:
    """Parse a movie file; strict about the grammar, never returns a partial movie."""
    if format != "lasr-text":
        raise DataError(f"unknown movie format {format!r}")
    with open(path, "r", encoding="ascii") as fh:
        lines = fh.read().split("\n")
    # a trailing newline produces one final empty chunk; drop only that one
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise FormatError("empty file", line=1)
    rows, cols, nframes, fps = _parse_header(lines[0])

    frames = []
    ln = 1  # 1-based number of the last consumed line
    for k in range(nframes):
        if k > 0:
            ln += 1
            if ln > len(lines) or lines[ln - 1].strip() != "":
                raise FormatError("expected blank line between frames", line=min(ln, len(lines) + 1))
        grid = np.empty((rows, cols), dtype=np.float64)
        for r in range(rows):
            ln += 1
            if ln > len(lines):
                raise FormatError(f"unexpected end of file in frame {k}", line=len(lines) + 1)
            tok = lines[ln - 1].split()
            if len(tok) != cols:
                raise FormatError(f"expected {cols} values, got {len(tok)}", line=ln)
            try:
                row = np.array([float(t) for t in tok])
            except ValueError:
                raise FormatError("non-numeric value", line=ln) from None
            if not np.isfinite(row).all():
                raise FormatError("non-finite value", line=ln)
            if (row < 0).any():
                raise FormatError("negative value", line=ln)
            grid[r] = row
        frames.append(Frame(grid))
    if ln < len(lines):
        raise FormatError("trailing content after last frame", line=ln + 1)
    return Movie(tuple(frames), fps=fps)


def save_movie(movie: Movie, path) -> None:
    """Write a movie in the text format (values at 6 significant digits)."""
    rows, cols = movie.shape
    out = ["%s %d %d %d %s" % (_MAGIC, rows, cols, len(movie), "%g" % movie.fps)]
    for k, f in enumerate(movie.frames):
        if k > 0:
            out.append("")
        for r in range(rows):
            out.append(" ".join(_VALUE_FMT % v for v in f.values[r]))
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(out) + "\n")


# ---------------------------------------------------------------------------
# map output (PGM / CSV)
# ---------------------------------------------------------------------------


def save_map_image(frame_or_values, path, scale: str = "unit-interval") -> None:
    """Write a map as plain (P2) PGM, maxval 255.

    ``scale`` selects the value -> pixel mapping:

    * ``"unit-interval"``: values must lie in [0, 1]; pixel = round(255 * v).
    * ``"max-normalized"``: nonnegative values divided by their maximum
      first (an all-zero map stays all zeros).
    """
    v = frame_or_values.values if isinstance(frame_or_values, Frame) else np.asarray(frame_or_values, dtype=np.float64)
    if v.ndim != 2:
        raise DataError("map must be 2-D")
    if not np.isfinite(v).all():
        raise DataError("map values must be finite")
    if scale == "unit-interval":
        if (v < 0).any() or (v > 1).any():
            raise DataError("unit-interval scaling requires values in [0, 1]")
        scaled = v
    elif scale == "max-normalized":
        if (v < 0).any():
            raise DataError("max-normalized scaling requires nonnegative values")
        mx = v.max()
        scaled = v / mx if mx > 0 else np.zeros_like(v)
    else:
        raise DataError(f"unknown PGM scale {scale!r}")
    pix = np.floor(255.0 * scaled + 0.5).astype(np.int64)
    rows, cols = v.shape
    out = ["P2", f"{cols} {rows}", "255"]
    for r in range(rows):
        out.append(" ".join(str(p) for p in pix[r]))
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(out) + "\n")


def save_map_csv(values, path) -> None:
    """Write a 2-D map as CSV, one line per row (NaN spelled ``nan``)."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 2:
        raise DataError("map must be 2-D")
    with open(path, "w", encoding="ascii") as fh:
        for r in range(v.shape[0]):
            fh.write(",".join("%.10g" % x for x in v[r]) + "\n")


# ---------------------------------------------------------------------------
# session directories
# ---------------------------------------------------------------------------


def save_session(layout: SessionLayout, directory) -> None:
    """Write a session as ``session.txt`` plus one movie file per segment."""
    os.makedirs(directory, exist_ok=True)
    lines = [f"session_id = {layout.session_id}", f"subject_id = {layout.subject_id}"]
    for k, (tag, movie) in enumerate(layout.segments):
        name = f"seg{k}.lasr"
        save_movie(movie, os.path.join(directory, name))
        lines.append(f"segment.{k}.tag = {tag}")
        lines.append(f"segment.{k}.file = {name}")
    with open(os.path.join(directory, "session.txt"), "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def load_session(directory) -> SessionLayout:
    """Read a session directory written by :func:`save_session`."""
    manifest = os.path.join(directory, "session.txt")
    if not os.path.isfile(manifest):
        raise DataError(f"no session.txt in {directory}")
    kv = {}
    with open(manifest, "r", encoding="ascii") as fh:
        for ln, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise FormatError("expected 'key = value'", line=ln)
            key, _, val = line.partition("=")
            kv[key.strip()] = val.strip()
    segments = []
    k = 0
    while f"segment.{k}.tag" in kv:
        tag = kv[f"segment.{k}.tag"]
        fname = kv.get(f"segment.{k}.file")
        if fname is None:
            raise DataError(f"segment {k} has a tag but no file entry")
        segments.append((tag, load_movie(os.path.join(directory, fname))))
        k += 1
    if not segments:
        raise DataError(f"session.txt in {directory} declares no segments")
    return SessionLayout(tuple(segments), session_id=kv.get("session_id", ""),
                         subject_id=kv.get("subject_id", ""))


# ---------------------------------------------------------------------------
# small helpers
# ---------------------------------------------------------------------------


def frames_equal(a: Frame, b: Frame) -> bool:
    """Exact equality of values and masks (both-missing masks are equal)."""
    if a.shape != b.shape or not np.array_equal(a.values, b.values):
        return False
    if (a.support_mask is None) != (b.support_mask is None):
        return False
    return a.support_mask is None or np.array_equal(a.support_mask, b.support_mask)


def movies_equal(a: Movie, b: Movie) -> bool:
    return (len(a) == len(b) and a.fps == b.fps
            and all(frames_equal(x, y) for x, y in zip(a.frames, b.frames)))


def with_positive_mask(frame: Frame) -> Frame:
    """Attach ``values > 0`` as the support mask (segmented data convention)."""
    return Frame(frame.values, support_mask=frame.values > 0, signed=frame.signed)
