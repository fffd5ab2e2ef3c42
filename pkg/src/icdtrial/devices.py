"""Dual-chamber SVT-VT discrimination device models.

Both devices are deterministic transducers over the sensed event stream
(A_in / V_in plus the per-beat morphology flag); they never see the model's
ground-truth beat origin. They are reconstructions in the style of the two
commercial algorithm families:

* :class:`GdtDiscriminator` (RhythmID-style): an x-of-y fast-interval rate
  criterion sustained for a programmable duration, then a rate-branch,
  morphology-vote, and stability classification tree.
* :class:`MdtDiscriminator` (PRLogic-style): a consecutive fast-beat counter,
  then a pattern analysis of atrial events inside each V-V interval
  (1:1 association, atrial-flutter pattern, AV dissociation).

A VT verdict is emitted at most once per episode; the device re-arms only
after seeing a V-V interval at or above the rate threshold. Known deltas
from the commercial devices: no far-field R-wave rejection, no dedicated
atrial-fibrillation evidence counter.
"""

from __future__ import annotations

import enum
import statistics
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable

from .errors import ProtocolError
from .heart import A_IN, THERAPY, V_IN
from .sta import Network, TraceEvent

# Pattern analysis looks at this many recent V beats.
_PATTERN_BEATS = 8
# Rule (i) margin: mean ventricular rate must beat the atrial rate by this
# many beats per minute.
_RATE_MARGIN_BPM = 10.0


class Verdict(enum.Enum):
    VT_THERAPY = "VT_therapy"
    SVT_WITHHOLD = "SVT_withhold"


@dataclass(frozen=True)
class DeviceVerdict:
    time: float
    decision: Verdict


@dataclass(frozen=True)
class SensedBeat:
    """One device-visible event; ``tachy`` is None on atrial beats."""

    time: float
    chamber: str  # 'A' | 'V'
    tachy: bool | None = None


@dataclass(frozen=True)
class DetectionConfig:
    vt_interval_threshold: float = 400.0  # ms; V-V below this is "fast"
    svt_upper_interval: float = 350.0     # ms; mean A-A below this is AF zone
    detection_window: int = 10            # beats/intervals examined
    detection_count: int = 8              # fast intervals required
    duration_ms: float = 2500.0           # sustained-episode confirmation
    stability_ms: float = 50.0            # V-V spread counted as unstable
    morphology_vote: tuple[int, int] = (3, 10)  # x tachy flags of y beats

    def __post_init__(self):
        if self.detection_count > self.detection_window:
            raise ValueError("detection_count must be <= detection_window")
        for name in ("vt_interval_threshold", "svt_upper_interval",
                     "duration_ms", "stability_ms"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        x, y = self.morphology_vote
        if not 0 < x <= y:
            raise ValueError("morphology_vote must be (x, y) with 0 < x <= y")


GDT_DEFAULT = DetectionConfig()
MDT_DEFAULT = DetectionConfig(detection_window=12, detection_count=12)


def _bpm(mean_interval_ms: float) -> float:
    return 60_000.0 / mean_interval_ms


class _DeviceBase:
    """Shared stream bookkeeping: interval buffers, arming, time ordering."""

    def __init__(self, config: DetectionConfig):
        self.config = config
        self._last_time = -1.0
        self._last_a: float | None = None
        self._last_v: float | None = None
        self._aa: deque[float] = deque(maxlen=config.detection_window)
        self._vv: deque[float] = deque(maxlen=config.detection_window)
        self._armed = True
        self._withheld = False

    def _check_order(self, t: float) -> None:
        if t < self._last_time:
            raise ProtocolError(f"event at t={t} arrives after t={self._last_time}")
        self._last_time = t

    def _after_therapy(self) -> None:
        """Post-shock blanking: forget the episode and wait to re-arm."""
        self._armed = False
        self._withheld = False
        self._aa.clear()
        self._vv.clear()
        self._last_a = None
        self._last_v = None

    def _note_a(self, t: float) -> None:
        if self._last_a is not None:
            self._aa.append(t - self._last_a)
        self._last_a = t

    def _note_v(self, t: float) -> float | None:
        interval = None
        if self._last_v is not None:
            interval = t - self._last_v
            self._vv.append(interval)
        self._last_v = t
        if interval is not None and not self._armed \
                and interval >= self.config.vt_interval_threshold:
            self._armed = True
        return interval

    def _a_rate_bpm(self) -> float:
        if not self._aa:
            return 0.0
        return _bpm(statistics.fmean(self._aa))


class GdtDiscriminator(_DeviceBase):
    """RhythmID-style detection: x-of-y rate zone sustained for a duration,
    then V>A rate branch, morphology vote, stability check."""

    def __init__(self, config: DetectionConfig = GDT_DEFAULT):
        super().__init__(config)
        self._markers: deque[bool] = deque(maxlen=config.morphology_vote[1])
        self._fast_since: float | None = None

    def step(self, beat: SensedBeat) -> DeviceVerdict | None:
        self._check_order(beat.time)
        if beat.chamber == "A":
            self._note_a(beat.time)
            return None
        self._note_v(beat.time)
        self._markers.append(bool(beat.tachy))

        cfg = self.config
        window_full = len(self._vv) == cfg.detection_window
        fast = sum(1 for i in self._vv if i < cfg.vt_interval_threshold)
        if window_full and fast >= cfg.detection_count:
            if self._fast_since is None:
                self._fast_since = beat.time
        else:
            self._fast_since = None
            self._withheld = False
            return None

        if not self._armed:
            return None
        if beat.time - self._fast_since < cfg.duration_ms:
            return None
        return self._classify(beat.time)

    def _classify(self, t: float) -> DeviceVerdict | None:
        cfg = self.config
        v_rate = _bpm(statistics.fmean(self._vv))
        a_rate = self._a_rate_bpm()
        if v_rate >= a_rate + _RATE_MARGIN_BPM:
            return self._therapy(t)
        x, y = cfg.morphology_vote
        if len(self._markers) == y and sum(self._markers) >= x:
            return self._therapy(t)
        if self._withheld:
            return None
        self._withheld = True
        # Both remaining branches withhold; the distinction (atrial-fib zone
        # with unstable V-V versus other SVT) only affects the label.
        return DeviceVerdict(t, Verdict.SVT_WITHHOLD)

    def _therapy(self, t: float) -> DeviceVerdict:
        self._after_therapy()
        self._markers.clear()
        self._fast_since = None
        return DeviceVerdict(t, Verdict.VT_THERAPY)


class MdtDiscriminator(_DeviceBase):
    """PRLogic-style detection: consecutive fast-beat counter, then pattern
    evidence from atrial events inside each V-V interval."""

    def __init__(self, config: DetectionConfig = MDT_DEFAULT):
        super().__init__(config)
        self._counter = 0
        self._a_times: deque[float] = deque(maxlen=64)
        # per V beat: (#A inside the preceding V-V, A-to-V latency or None)
        self._pattern: deque[tuple[int, float | None]] = deque(maxlen=_PATTERN_BEATS)

    def step(self, beat: SensedBeat) -> DeviceVerdict | None:
        self._check_order(beat.time)
        if beat.chamber == "A":
            self._note_a(beat.time)
            self._a_times.append(beat.time)
            return None

        prev_v = self._last_v
        interval = self._note_v(beat.time)
        if prev_v is not None:
            inside = [ta for ta in self._a_times if prev_v < ta <= beat.time]
            latency = beat.time - inside[0] if len(inside) == 1 else None
            self._pattern.append((len(inside), latency))

        cfg = self.config
        if interval is None:
            return None
        if interval < cfg.vt_interval_threshold:
            self._counter += 1
        else:
            self._counter = 0
            self._withheld = False
            return None
        if not self._armed or self._counter < cfg.detection_count:
            return None
        return self._classify(beat.time)

    def _classify(self, t: float) -> DeviceVerdict | None:
        cfg = self.config
        median_vv = statistics.median(self._vv)
        median_aa = statistics.median(self._aa) if self._aa else None

        # Rate comparison carries the same margin as the GDT branch so that
        # conducted rhythms (V-V == A-A up to jitter) cannot win it by noise.
        if median_aa is None or _bpm(median_vv) > _bpm(median_aa) + _RATE_MARGIN_BPM:
            return self._therapy(t)  # ventricular rate leads

        recent = list(self._pattern)
        if len(recent) == _PATTERN_BEATS:
            if all(n == 1 for n, _ in recent):
                latencies = [lat for _, lat in recent]
                if max(latencies) - min(latencies) < cfg.stability_ms:
                    return self._withhold(t)  # 1:1 SVT
            multi = sum(1 for n, _ in recent if n >= 2)
            if median_aa < median_vv and multi > _PATTERN_BEATS // 2:
                return self._withhold(t)  # AF / flutter pattern
        return self._therapy(t)  # AV dissociation

    def _withhold(self, t: float) -> DeviceVerdict | None:
        if self._withheld:
            return None
        self._withheld = True
        return DeviceVerdict(t, Verdict.SVT_WITHHOLD)

    def _therapy(self, t: float) -> DeviceVerdict:
        self._after_therapy()
        self._counter = 0
        self._a_times.clear()
        self._pattern.clear()
        return DeviceVerdict(t, Verdict.VT_THERAPY)


def replay(device, beats: Iterable[SensedBeat]) -> list[DeviceVerdict]:
    """Offline mode: drive a device from a recorded stream, collect verdicts."""
    verdicts = []
    for beat in beats:
        v = device.step(beat)
        if v is not None:
            verdicts.append(v)
    return verdicts


def beats_from_trace(events: Iterable[TraceEvent]) -> list[SensedBeat]:
    """Project trace events onto the device-visible stream."""
    beats = []
    for e in events:
        if e.channel == A_IN:
            beats.append(SensedBeat(e.time, "A"))
        elif e.channel == V_IN:
            beats.append(SensedBeat(e.time, "V", bool(e.payload["tachy"])))
    return beats


def beats_from_tsv(path) -> list[SensedBeat]:
    """Load a dumped trace file (``time  component  channel  payload``) as a
    device input stream; non-interface rows are skipped."""
    import json as _json

    beats = []
    with open(path, encoding="utf-8") as fh:
        for raw in fh:
            fields = raw.rstrip("\n").split("\t")
            if len(fields) != 4:
                continue
            t, _, channel, payload = fields
            if channel == A_IN:
                beats.append(SensedBeat(float(t), "A"))
            elif channel == V_IN:
                data = _json.loads(payload)
                beats.append(SensedBeat(float(t), "V", bool(data["tachy"])))
    return beats


@dataclass
class DeviceBridge:
    """Closed-loop coupling: feeds sensed beats to a device and injects
    Therapy into the network at the verdict timestamp (zero processing
    latency)."""

    network: Network
    device: GdtDiscriminator | MdtDiscriminator
    name: str = "device"
    verdicts: list[DeviceVerdict] = field(default_factory=list)

    def __post_init__(self):
        self.network.subscribe(A_IN, self._on_a)
        self.network.subscribe(V_IN, self._on_v)

    def _on_a(self, event: TraceEvent) -> None:
        self._handle(self.device.step(SensedBeat(event.time, "A")))

    def _on_v(self, event: TraceEvent) -> None:
        beat = SensedBeat(event.time, "V", bool(event.payload["tachy"]))
        self._handle(self.device.step(beat))

    def _handle(self, verdict: DeviceVerdict | None) -> None:
        if verdict is None:
            return
        self.verdicts.append(verdict)
        if verdict.decision is Verdict.VT_THERAPY:
            self.network.inject(THERAPY, {"source": self.name}, source=self.name)


def attach_device(network: Network, device, name: str = "device") -> DeviceBridge:
    """Couple a discriminator to an arm's network."""
    return DeviceBridge(network, device, name)
