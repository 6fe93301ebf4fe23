"""Cycle-level functional simulator of the computational-memory chip.

Every cycle runs three phases:

1. messages sent during the previous cycle land in their destination SRAM and
   each destination LCU advances its per-object maximum via its lookup table;
2. every core whose frontier is ahead of its last executed iteration runs one
   iteration: gather, crossbar MxV, DPU program (local writes are immediate,
   sends are queued);
3. the GCU drains finished output locations and streams the next input row.

The GCU streams row ``r`` of a frame at the end of cycle ``r - 1``; the first
row is injected during initialization so it lands at cycle 0.

Write-tracking bitmaps only verify the LCU tables: any gathered location that
is neither a padding constant nor already written raises :class:`RawViolation`.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .depsm import LcuTable
from .errors import BundleError, DeadlockError, RawViolation, SimulationError
from .nnmodel import wrap32
from .placemap import HwDescription, hw_from_dict
from .relspec import relation_from_dict, space_from_dict

GCU_NAME = "gcu"


@dataclass
class Message:
    dest: int
    object: str
    locations: list[tuple[int, ...]]
    values: np.ndarray
    send_cycle: int
    source: str


@dataclass
class SimStats:
    total_cycles: int = 0
    executed: dict[int, int] = field(default_factory=dict)
    executed_per_frame: list[dict[int, int]] = field(default_factory=list)
    first_active: dict[int, int | None] = field(default_factory=dict)
    last_active: dict[int, int | None] = field(default_factory=dict)
    messages_sent: int = 0
    stall_cycles: dict[int, int] = field(default_factory=dict)
    frames: int = 0

    def to_dict(self) -> dict:
        return {
            "total_cycles": self.total_cycles,
            "frames": self.frames,
            "messages_sent": self.messages_sent,
            "cores": {
                str(c): {
                    "executed": self.executed[c],
                    "first_active": self.first_active[c],
                    "last_active": self.last_active[c],
                    "stall_cycles": self.stall_cycles[c],
                }
                for c in sorted(self.executed)
            },
            "executed_per_frame": [{str(c): n for c, n in sorted(f.items())} for f in self.executed_per_frame],
        }


class _Core:
    def __init__(self, cfg: dict, hw: HwDescription):
        self.id = int(cfg["core"])
        self.cfg = cfg
        self.partition = cfg.get("partition")
        try:
            core_hw = hw.core(self.id)
        except KeyError:
            raise BundleError(f"bundle configures core {self.id}, which is not in the hardware description")
        xb = cfg["crossbar"]
        self.weights = np.asarray(xb["weights"], dtype=np.int64).reshape(xb["rows"], xb["cols"])
        if xb["rows"] > core_hw.width or xb["cols"] > core_hw.width:
            raise BundleError(f"core {self.id}: crossbar {xb['rows']}x{xb['cols']} exceeds width {core_hw.width}")
        total = 0
        self.sram: dict[str, np.ndarray] = {}
        self.written: dict[str, np.ndarray] = {}
        self.origin: dict[str, tuple[int, int, int]] = {}
        for obj, d in sorted(cfg["sram"].items()):
            ext = tuple(d["extents"])
            total += int(np.prod(ext)) * int(d["element_bytes"])
            self.sram[obj] = np.full(ext, int(d.get("constant_fill", 0)), dtype=np.int64)
            self.written[obj] = np.zeros(tuple(d["shape"]), dtype=bool)
            self.origin[obj] = tuple(d["origin"])
        if total > core_hw.sram_bytes:
            raise BundleError(f"core {self.id}: SRAM directory needs {total} bytes, capacity is {core_hw.sram_bytes}")

        self.space = space_from_dict(cfg["iter_space"])
        self.iters = [tuple(p) for p in self.space.points().tolist()]
        self.index = {j: k for k, j in enumerate(self.iters)}

        gather = relation_from_dict(cfg["gather"]["relation"])
        self.gather_obj = cfg["gather"]["object"]
        if self.gather_obj not in self.sram:
            raise BundleError(f"core {self.id}: gather object {self.gather_obj!r} is not in the SRAM directory")
        images = gather.as_dict()
        self.gather_cells = []
        for j in self.iters:
            cells = np.asarray(images.get(j, ()), dtype=np.int64).reshape(-1, 3)
            if len(cells) != self.weights.shape[1]:
                raise BundleError(f"core {self.id}: gather for {j} yields {len(cells)} cells, crossbar has "
                                  f"{self.weights.shape[1]} columns")
            self.gather_cells.append(cells)

        self.lcu = LcuTable.from_dict(cfg["lcu"])
        self.tables: dict[str, dict[tuple, int]] = {}
        self.initial: dict[str, int] = {}
        for t in self.lcu.objects:
            self.tables[t.object] = {tuple(o): self.index[tuple(j)] for o, j in t.entries}
            self.initial[t.object] = -1 if t.initial is None else self.index[tuple(t.initial)]
        for op in cfg["dpu"]:
            if op["op"] in ("residual_add", "write_local") and op["object"] not in self.sram:
                raise BundleError(f"core {self.id}: DPU op {op['op']} references undeclared object {op['object']!r}")
            if op["op"] not in ("bias_add", "relu", "residual_add", "write_local", "send"):
                raise BundleError(f"core {self.id}: unknown DPU op {op['op']!r}")
        self.reset()

    def reset(self):
        for w in self.written.values():
            w[:] = False
        self.obj_max = dict(self.initial)
        self.next = 0

    @property
    def done(self) -> bool:
        return self.next >= len(self.iters)

    def frontier(self) -> int:
        if not self.obj_max:
            return len(self.iters) - 1
        return min(self.obj_max.values())

    def check_read(self, obj: str, unpadded: np.ndarray, cycle: int):
        """``unpadded`` rows are object coordinates; out-of-object cells are constants."""
        shape = self.written[obj].shape
        inside = np.all((unpadded >= 0) & (unpadded < np.asarray(shape)), axis=1)
        cells = unpadded[inside]
        ok = self.written[obj][cells[:, 0], cells[:, 1], cells[:, 2]]
        if not ok.all():
            bad = tuple(int(v) for v in cells[np.argmin(ok)])
            raise RawViolation(self.id, obj, bad, cycle)


class Simulator:
    """Simulation state plus the step/run loop. Not shared between threads."""

    def __init__(self, bundle: dict, hw: HwDescription | None = None, *, trace: bool = False,
                 rows_per_cycle: int = 1):
        self.hw = hw if hw is not None else hw_from_dict(bundle["hw"])
        self.bundle = bundle
        ids = [int(c["core"]) for c in bundle["cores"]]
        if len(set(ids)) != len(ids):
            raise BundleError(f"duplicate core id in bundle: {ids}")
        self.cores = {c.id: c for c in (_Core(cfg, self.hw) for cfg in bundle["cores"])}
        gcu = bundle["gcu"]
        self.in_obj = gcu["input"]["object"]
        self.in_shape = tuple(gcu["input"]["shape"])
        self.in_dests = [int(d) for d in gcu["input"]["dests"]]
        self.out_obj = gcu["output"]["object"]
        self.out_shape = tuple(gcu["output"]["shape"])
        self.out_core = int(gcu["output"]["core"])
        for d in self.in_dests:
            if d not in self.hw.gcu_in:
                raise BundleError(f"GCU cannot stream input to core {d}")
        if self.out_core not in self.hw.gcu_out:
            raise BundleError(f"GCU cannot drain output from core {self.out_core}")
        self.rows_per_cycle = rows_per_cycle
        self.tracing = trace
        self.trace: list[str] = []
        self.cycle = 0
        self.pending: list[Message] = []
        self.stats = SimStats(
            executed={c: 0 for c in self.cores},
            first_active={c: None for c in self.cores},
            last_active={c: None for c in self.cores},
            stall_cycles={c: 0 for c in self.cores},
        )
        self.frames: list[np.ndarray] = []
        self.outputs: list[np.ndarray] = []
        self.frame = 0
        self.next_row = 0
        self._frame_exec: dict[int, int] = {c: 0 for c in self.cores}
        self._drained: np.ndarray | None = None
        self._out_buf: np.ndarray | None = None

    # -- helpers -----------------------------------------------------------

    def _log(self, who: str, event: str, detail: str = ""):
        if self.tracing:
            self.trace.append(f"{self.cycle} {who} {event}" + (f" {detail}" if detail else ""))

    def _send(self, msg: Message):
        self.pending.append(msg)
        self.stats.messages_sent += 1

    # -- phases ------------------------------------------------------------

    def _deliver(self):
        due = [m for m in self.pending if m.send_cycle == self.cycle - 1]
        self.pending = [m for m in self.pending if m.send_cycle != self.cycle - 1]
        for m in due:
            core = self.cores[m.dest]
            if m.object not in core.sram:
                raise BundleError(f"message for undeclared object {m.object!r} on core {m.dest}")
            locs = np.asarray(m.locations, dtype=np.int64)
            o = np.asarray(core.origin[m.object])
            padded = locs + o
            if core.written[m.object][locs[:, 0], locs[:, 1], locs[:, 2]].any():
                raise SimulationError(f"core {m.dest}: location of {m.object!r} written twice in one frame")
            core.sram[m.object][padded[:, 0], padded[:, 1], padded[:, 2]] = m.values
            core.written[m.object][locs[:, 0], locs[:, 1], locs[:, 2]] = True
            table = core.tables.get(m.object)
            detail = f"obj={m.object} from={m.source} n={len(m.locations)}"
            if table is not None:
                hit = table.get(max(m.locations))
                if hit is not None and hit > core.obj_max[m.object]:
                    core.obj_max[m.object] = hit
                    detail += f" unlock={list(core.iters[hit])}"
            self._log(f"c{m.dest}", "deliver", detail)

    def _execute(self, core: _Core):
        k = core.next
        j = core.iters[k]
        cyc = self.cycle
        cells = core.gather_cells[k]
        gobj = core.gather_obj
        core.check_read(gobj, cells - np.asarray(core.origin[gobj]), cyc)
        vec = core.sram[gobj][cells[:, 0], cells[:, 1], cells[:, 2]]
        acc = wrap32(core.weights @ vec)
        oh, ow = j
        nk = len(acc)
        chan = np.arange(nk)
        for op in core.cfg["dpu"]:
            kind = op["op"]
            if kind == "bias_add":
                acc = wrap32(acc + np.asarray(op["bias"], dtype=np.int64))
            elif kind == "relu":
                acc = np.maximum(acc, 0)
            elif kind == "residual_add":
                obj = op["object"]
                loc = np.stack([chan, np.full(nk, oh), np.full(nk, ow)], axis=1)
                core.check_read(obj, loc, cyc)
                o = core.origin[obj]
                acc = wrap32(acc + core.sram[obj][chan + o[0], oh + o[1], ow + o[2]])
            elif kind == "write_local":
                obj = op["object"]
                o = core.origin[obj]
                core.sram[obj][chan + o[0], oh + o[1], ow + o[2]] = acc
                core.written[obj][chan, oh, ow] = True
            elif kind == "send":
                dest = int(op["dest"])
                if (core.id, dest) not in self.hw.links:
                    raise BundleError(f"core {core.id} has no link to core {dest}")
                self._send(Message(dest, op["object"], [(int(c), oh, ow) for c in chan], acc.copy(), cyc,
                                   f"c{core.id}"))
        core.next += 1
        self.stats.executed[core.id] += 1
        self._frame_exec[core.id] += 1
        if self.stats.first_active[core.id] is None:
            self.stats.first_active[core.id] = cyc
        self.stats.last_active[core.id] = cyc
        self._log(f"c{core.id}", "exec", f"iter={list(j)}")

    def _inject_rows(self):
        x = self.frames[self.frame]
        d, h, w = self.in_shape
        for _ in range(self.rows_per_cycle):
            if self.next_row >= h:
                return
            r = self.next_row
            locs = [(c, r, col) for c in range(d) for col in range(w)]
            vals = x[:, r, :].reshape(-1).astype(np.int64)
            for dest in self.in_dests:
                self._send(Message(dest, self.in_obj, locs, vals.copy(), self.cycle, GCU_NAME))
            self._log(GCU_NAME, "inject", f"frame={self.frame} row={r} dests={self.in_dests}")
            self.next_row += 1

    def _start_frame(self):
        for core in self.cores.values():
            core.reset()
        self._frame_exec = {c: 0 for c in self.cores}
        self._drained = np.zeros(self.out_shape, dtype=bool)
        self._out_buf = np.zeros(self.out_shape, dtype=np.int64)
        self.next_row = 0
        self._inject_rows()

    def _gcu(self):
        core = self.cores[self.out_core]
        fresh = core.written[self.out_obj] & ~self._drained
        if fresh.any():
            o = core.origin[self.out_obj]
            idx = np.nonzero(fresh)
            self._out_buf[idx] = core.sram[self.out_obj][idx[0] + o[0], idx[1] + o[1], idx[2] + o[2]]
            self._drained |= fresh
            self._log(GCU_NAME, "drain", f"obj={self.out_obj} n={int(fresh.sum())}")
        finished = (
            self._drained.all()
            and all(c.done for c in self.cores.values())
            and not self.pending
            and self.next_row >= self.in_shape[1]
        )
        if finished:
            self.outputs.append(self._out_buf.copy())
            self.stats.executed_per_frame.append(dict(self._frame_exec))
            self._log(GCU_NAME, "frame-done", f"frame={self.frame}")
            self.frame += 1
            if self.frame < len(self.frames):
                self._start_frame()
        else:
            self._inject_rows()

    # -- public API --------------------------------------------------------

    @property
    def finished(self) -> bool:
        return self.frame >= len(self.frames)

    def load_inputs(self, inputs: Sequence[np.ndarray]):
        frames = []
        for x in inputs:
            x = np.asarray(x, dtype=np.int64)
            if x.shape != self.in_shape:
                raise SimulationError(f"input shape {x.shape} does not match graph input {self.in_shape}")
            frames.append(x)
        self.frames = frames
        self.frame = 0
        if frames:
            self.cycle = -1
            self._start_frame()
            self.cycle = 0

    def step(self):
        """Advance one cycle."""
        self._deliver()
        for cid in sorted(self.cores):
            core = self.cores[cid]
            if core.done:
                continue
            if core.next <= core.frontier():
                self._execute(core)
            else:
                self.stats.stall_cycles[cid] += 1
                self._log(f"c{cid}", "stall", f"next={list(core.iters[core.next])}")
        self._gcu()
        self.cycle += 1

    def lower_bound(self) -> int:
        most = max(max(len(c.iters) for c in self.cores.values()), self.in_shape[1])
        return max(1, len(self.frames)) * (most + len(self.cores))

    def run(self, inputs: Sequence[np.ndarray], cycle_limit: int | None = None):
        self.load_inputs(inputs)
        limit = cycle_limit if cycle_limit is not None else 10 * self.lower_bound()
        while not self.finished:
            if self.cycle >= limit:
                raise DeadlockError(self.diagnostic(limit))
            self.step()
        self.stats.total_cycles = self.cycle
        self.stats.frames = len(self.outputs)
        return list(self.outputs), self.stats, (list(self.trace) if self.tracing else None)

    def diagnostic(self, limit: int) -> str:
        lines = [f"no progress within cycle limit {limit} (frame {self.frame}, next input row {self.next_row})"]
        for cid in sorted(self.cores):
            c = self.cores[cid]
            f = c.frontier()
            lines.append(
                f"  core {cid}: next={list(c.iters[c.next]) if not c.done else 'done'} "
                f"frontier={list(c.iters[f]) if f >= 0 else None} "
                f"per-object={ {o: (list(c.iters[m]) if m >= 0 else None) for o, m in sorted(c.obj_max.items())} }"
            )
        for m in self.pending:
            lines.append(f"  pending: {m.source} -> c{m.dest} {m.object} n={len(m.locations)} sent={m.send_cycle}")
        if not self.pending:
            lines.append("  pending: none")
        return "\n".join(lines)


def init(bundle: dict, hw: HwDescription | None = None, **kw) -> Simulator:
    return Simulator(bundle, hw, **kw)


def run(bundle: dict, inputs: Sequence[np.ndarray], *, hw: HwDescription | None = None, trace: bool = False,
        cycle_limit: int | None = None):
    """Initialize a fresh simulator and stream ``inputs`` through it."""
    return Simulator(bundle, hw, trace=trace).run(inputs, cycle_limit)


def sabotage_tables(bundle: dict, core: int | None = None) -> dict:
    """Fault injection for tests: every table entry unlocks one iteration too many."""
    out = copy.deepcopy(bundle)
    for cfg in out["cores"]:
        if core is not None and int(cfg["core"]) != core:
            continue
        space = space_from_dict(cfg["lcu"]["reader_space"])
        iters = [tuple(p) for p in space.points().tolist()]
        index = {j: k for k, j in enumerate(iters)}
        for t in cfg["lcu"]["objects"]:
            t["entries"] = [
                [o, list(iters[min(index[tuple(j)] + 1, len(iters) - 1)])] for o, j in t["entries"]
            ]
    return out
