"""Cooperative-localization protocol: bus, RSU, and attacker state machines.

The bus asks roadside units (RSUs) to detect its roof tag and report
world-framed pose estimates. When an RSU sees the same identity twice in
one frame it raises a confusion alert; the bus then switches its
displayed code over a private side channel and appoints a tick at which
all RSUs check which tag actually changed. A mimic that needs at least
one tick to react is still showing the old code at that instant and is
exposed; only a zero-latency mimic survives, which the protocol reports
as ambiguous rather than guessing.

All step functions are pure: state in, state out, plus outbound messages
and effects. Agents never share mutable state.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .detector import Detection
from .localization import PoseEstimate, fuse_poses

__all__ = [
    "MsgKind",
    "ProtocolMessage",
    "ProtocolConfig",
    "BusPhase",
    "BusState",
    "RsuPhase",
    "RsuState",
    "AttackerStrategy",
    "AttackerState",
    "DisplayCommand",
    "SyncVerdict",
    "BusStepResult",
    "RsuStepResult",
    "AttackerStepResult",
    "detect_confusion",
    "resolve_sync",
    "make_bus_state",
    "bus_step",
    "rsu_step",
    "attacker_step",
]


class MsgKind(enum.Enum):
    INITIATE = "INITIATE"
    INITIATE_ACK = "INITIATE_ACK"
    POSE_REPORT = "POSE_REPORT"
    CONFUSION_ALERT = "CONFUSION_ALERT"
    TAG_UPDATE = "TAG_UPDATE"
    SYNC_APPOINT = "SYNC_APPOINT"
    SYNC_RESULT = "SYNC_RESULT"
    CLOSE = "CLOSE"
    CLOSE_ACK = "CLOSE_ACK"


# Required payload keys per message kind (tagged-union discipline).
_PAYLOAD_FIELDS = {
    MsgKind.INITIATE: {"client_code"},
    MsgKind.INITIATE_ACK: set(),
    MsgKind.POSE_REPORT: {"estimate", "code_index"},
    MsgKind.CONFUSION_ALERT: {"code_index", "count"},
    MsgKind.TAG_UPDATE: {"new_code", "round"},
    MsgKind.SYNC_APPOINT: {"t_act", "round"},
    MsgKind.SYNC_RESULT: {"verdict", "round"},
    MsgKind.CLOSE: set(),
    MsgKind.CLOSE_ACK: set(),
}


@dataclass(frozen=True)
class ProtocolMessage:
    kind: MsgKind
    sender: str
    receiver: str
    sent_at: int
    payload: dict = field(default_factory=dict)

    def __post_init__(self):
        want = _PAYLOAD_FIELDS[self.kind]
        missing = want - set(self.payload)
        if missing:
            raise ValueError(
                f"{self.kind.value} payload missing fields: {sorted(missing)}"
            )

    def to_json_dict(self) -> dict:
        payload = {}
        for k, v in self.payload.items():
            if isinstance(v, PoseEstimate):
                payload[k] = v.to_json_dict()
            elif isinstance(v, SyncVerdict):
                payload[k] = v.to_json_dict()
            else:
                payload[k] = v
        return {
            "kind": self.kind.value,
            "sender": self.sender,
            "receiver": self.receiver,
            "sent_at": self.sent_at,
            "payload": payload,
        }


@dataclass(frozen=True)
class ProtocolConfig:
    """Session parameters shared by all protocol agents."""

    bus_id: str
    rsu_ids: tuple
    enter_tick: int
    leave_tick: int
    max_rounds: int = 3
    delta_sync: int = 5  # ticks between appointment and the challenge instant

    def __post_init__(self):
        object.__setattr__(self, "rsu_ids", tuple(self.rsu_ids))
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be >= 1")
        if self.delta_sync < 1:
            raise ValueError("delta_sync must be >= 1")
        if not self.enter_tick < self.leave_tick:
            raise ValueError("enter_tick must be < leave_tick")


class BusPhase(enum.Enum):
    IDLE = "IDLE"
    APPROACHING = "APPROACHING"
    LOCALIZING = "LOCALIZING"
    CHALLENGING = "CHALLENGING"
    SYNC_WAIT = "SYNC_WAIT"
    RESOLVED = "RESOLVED"
    FAILED = "FAILED"
    LEAVING = "LEAVING"


@dataclass(frozen=True)
class BusState:
    """Pure bus protocol state.

    code_pool is the seeded draw order of fresh, unused code indices for
    challenge rounds; popping from the front replaces mutable generator
    state and keeps the state machine a value type.
    """

    phase: BusPhase = BusPhase.IDLE
    displayed_code: int = 0  # what the screen shows *now*
    round: int = 0
    appointed_t: Optional[int] = None
    pending_display: Optional[int] = None  # switches onto the screen at appointed_t
    fused_pose: Optional[dict] = None  # latest fusion, json-ready
    code_pool: tuple = ()
    pending_acks: tuple = ()
    resolved_tick: Optional[int] = None  # first tick a challenge resolved


class RsuPhase(enum.Enum):
    IDLE = "IDLE"
    ACTIVE = "ACTIVE"
    SYNC_ARMED = "SYNC_ARMED"


@dataclass(frozen=True)
class RsuState:
    phase: RsuPhase = RsuPhase.IDLE
    client_code: Optional[int] = None
    pending_t_act: Optional[int] = None
    pending_new_code: Optional[int] = None
    pending_round: Optional[int] = None

    def __post_init__(self):
        if self.phase is RsuPhase.SYNC_ARMED and self.pending_t_act is None:
            raise ValueError("SYNC_ARMED requires pending_t_act")


class AttackerStrategy(enum.Enum):
    STATIC = "STATIC"
    FOLLOWER = "FOLLOWER"


@dataclass(frozen=True)
class AttackerState:
    strategy: AttackerStrategy
    displayed_code: int
    reaction_latency: int = 1  # ticks between seeing a switch and copying it
    pending_copy: Optional[tuple] = None  # (code, apply_at tick)

    def __post_init__(self):
        if self.reaction_latency < 0:
            raise ValueError("reaction_latency must be >= 0")


@dataclass(frozen=True)
class DisplayCommand:
    """Scheduled display switch; takes effect at the start of apply_at."""

    agent: str
    code_index: int
    apply_at: int


@dataclass(frozen=True)
class SyncVerdict:
    """Outcome of a synchronized challenge at t_act.

    kind: "unique" (exactly one detection shows the new code — that one is
    the client), "ambiguous" (several do), or "absent" (none do).
    tag_xyz is the unique detection's tag-center position in the reporting
    camera's frame, for downstream attribution; count is the number of
    matching detections; impostors the non-matching detections in frame.
    """

    kind: str
    count: int
    impostors: int = 0
    tag_xyz: Optional[tuple] = None
    reproj_err: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("unique", "ambiguous", "absent"):
            raise ValueError(f"unknown verdict kind {self.kind!r}")

    def to_json_dict(self) -> dict:
        d = {"kind": self.kind, "count": self.count, "impostors": self.impostors}
        if self.tag_xyz is not None:
            d["tag_xyz"] = [float(v) for v in self.tag_xyz]
        if self.reproj_err is not None:
            d["reproj_err"] = float(self.reproj_err)
        return d

    @classmethod
    def from_json_dict(cls, d: dict) -> "SyncVerdict":
        return cls(
            kind=d["kind"],
            count=int(d["count"]),
            impostors=int(d.get("impostors", 0)),
            tag_xyz=tuple(d["tag_xyz"]) if "tag_xyz" in d else None,
            reproj_err=d.get("reproj_err"),
        )


@dataclass(frozen=True)
class BusStepResult:
    state: BusState
    outbound: tuple  # ProtocolMessage
    display: tuple  # DisplayCommand
    events: tuple  # (name, detail dict) pairs for the log


@dataclass(frozen=True)
class RsuStepResult:
    state: RsuState
    outbound: tuple
    events: tuple


@dataclass(frozen=True)
class AttackerStepResult:
    state: AttackerState
    events: tuple


def detect_confusion(
    detections: Sequence[Detection], client_code: int
) -> Optional[int]:
    """Count of same-frame detections decoding to client_code, if >= 2.

    Returns that count, or None when the frame is unambiguous.
    """
    count = sum(1 for d in detections if d.code_index == client_code)
    return count if count >= 2 else None


def resolve_sync(
    frame_at_t_act: Sequence[Detection], new_code: int
) -> tuple[SyncVerdict, Optional[Detection]]:
    """Judge a challenge frame: who actually switched to new_code?

    Exactly one matching detection -> ("unique", that detection);
    several -> ambiguous; none -> absent. The caller supplies the frame
    captured exactly at the appointed tick.
    """
    matching = [d for d in frame_at_t_act if d.code_index == new_code]
    others = len(frame_at_t_act) - len(matching)
    if len(matching) == 1:
        det = matching[0]
        center = det.pose.translation
        return (
            SyncVerdict(
                kind="unique",
                count=1,
                impostors=others,
                tag_xyz=tuple(float(v) for v in center),
                reproj_err=float(det.reproj_err),
            ),
            det,
        )
    if len(matching) >= 2:
        return SyncVerdict(kind="ambiguous", count=len(matching), impostors=others), None
    return SyncVerdict(kind="absent", count=0, impostors=others), None


def make_bus_state(
    initial_code: int, family_size: int, seed: int
) -> BusState:
    """Bus state displaying initial_code, with a seeded fresh-code draw order.

    The pool is a seed-determined permutation of every other family index,
    consumed without replacement by challenge rounds.
    """
    if not 0 <= initial_code < family_size:
        raise ValueError("initial_code outside the family")
    gen = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, 0xC0DE])))
    pool = [i for i in range(family_size) if i != initial_code]
    gen.shuffle(pool)
    return BusState(displayed_code=initial_code, code_pool=tuple(pool))


def _challenge(
    state: BusState, now: int, config: ProtocolConfig, events: list
) -> tuple[BusState, list, list]:
    """Issue a TAG_UPDATE + SYNC_APPOINT pair for the next round."""
    if not state.code_pool:
        events.append(("code_pool_exhausted", {"tick": now}))
        return replace(state, phase=BusPhase.FAILED), [], []
    new_code = state.code_pool[0]
    rnd = state.round + 1
    t_act = now + config.delta_sync
    out = []
    for rsu in config.rsu_ids:
        out.append(
            ProtocolMessage(
                MsgKind.TAG_UPDATE,
                config.bus_id,
                rsu,
                now,
                {"new_code": new_code, "round": rnd},
            )
        )
        out.append(
            ProtocolMessage(
                MsgKind.SYNC_APPOINT,
                config.bus_id,
                rsu,
                now,
                {"t_act": t_act, "round": rnd},
            )
        )
    display = [DisplayCommand(config.bus_id, new_code, t_act)]
    events.append(("phase", {"tick": now, "phase": BusPhase.CHALLENGING.value}))
    events.append(
        ("challenge", {"tick": now, "round": rnd, "new_code": new_code, "t_act": t_act})
    )
    nxt = replace(
        state,
        phase=BusPhase.SYNC_WAIT,
        round=rnd,
        appointed_t=t_act,
        pending_display=new_code,  # hits the screen at t_act via the command
        code_pool=state.code_pool[1:],
    )
    events.append(("phase", {"tick": now, "phase": BusPhase.SYNC_WAIT.value}))
    return nxt, out, display


def bus_step(
    state: BusState,
    inbox: Sequence[ProtocolMessage],
    now: int,
    config: ProtocolConfig,
) -> BusStepResult:
    """One tick of the bus state machine.

    Enter/leave triggers derive from config ticks. POSE_REPORT fusion is
    left to the caller via the returned events (the reports are surfaced
    as "pose_report" events); phase logic lives here.
    """
    events: list = []
    out: list = []
    display: list = []
    st = state

    # the scheduled challenge code reaches the physical screen at t_act
    if st.pending_display is not None and st.appointed_t is not None and now >= st.appointed_t:
        st = replace(st, displayed_code=st.pending_display, pending_display=None)
        events.append(
            ("display_switched", {"tick": now, "code": st.displayed_code})
        )

    if st.phase is BusPhase.IDLE and now == config.enter_tick:
        for rsu in config.rsu_ids:
            out.append(
                ProtocolMessage(
                    MsgKind.INITIATE,
                    config.bus_id,
                    rsu,
                    now,
                    {"client_code": st.displayed_code},
                )
            )
        st = replace(st, phase=BusPhase.APPROACHING, pending_acks=config.rsu_ids)
        events.append(("phase", {"tick": now, "phase": BusPhase.APPROACHING.value}))

    reports: list = []
    for msg in inbox:
        if msg.kind is MsgKind.INITIATE_ACK and st.phase is BusPhase.APPROACHING:
            pending = tuple(r for r in st.pending_acks if r != msg.sender)
            st = replace(st, pending_acks=pending)
            if not pending:
                st = replace(st, phase=BusPhase.LOCALIZING)
                events.append(
                    ("phase", {"tick": now, "phase": BusPhase.LOCALIZING.value})
                )
        elif msg.kind is MsgKind.POSE_REPORT:
            if st.phase in (BusPhase.LOCALIZING, BusPhase.SYNC_WAIT):
                reports.append(msg.payload["estimate"])
                events.append(
                    (
                        "pose_report",
                        {
                            "tick": now,
                            "source": msg.sender,
                            "estimate": msg.payload["estimate"],
                            "code_index": msg.payload["code_index"],
                        },
                    )
                )
        elif msg.kind is MsgKind.CONFUSION_ALERT:
            if st.phase is BusPhase.LOCALIZING:
                events.append(
                    (
                        "confusion_alert",
                        {
                            "tick": now,
                            "source": msg.sender,
                            "count": msg.payload["count"],
                        },
                    )
                )
                if st.resolved_tick is None:
                    st, more_out, more_disp = _challenge(st, now, config, events)
                    out.extend(more_out)
                    display.extend(more_disp)
                # once a challenge has singled the bus out, later alerts
                # (the laggard mimic catching up again) change nothing:
                # the impostor is already identified and the round counter
                # stays put
            # alerts during SYNC_WAIT are expected (the mimic is still
            # visible until t_act) and carry no new information
        elif msg.kind is MsgKind.SYNC_RESULT:
            if msg.payload["round"] != st.round:
                events.append(
                    (
                        "stale_message",
                        {
                            "tick": now,
                            "kind": msg.kind.value,
                            "round": msg.payload["round"],
                            "expected": st.round,
                        },
                    )
                )
                continue
            if st.phase is not BusPhase.SYNC_WAIT:
                continue
            verdict = msg.payload["verdict"]
            kind = verdict.kind if isinstance(verdict, SyncVerdict) else verdict["kind"]
            if kind == "unique":
                st = replace(
                    st,
                    phase=BusPhase.LOCALIZING,
                    appointed_t=None,
                    resolved_tick=st.resolved_tick
                    if st.resolved_tick is not None
                    else now,
                )
                events.append(
                    ("phase", {"tick": now, "phase": BusPhase.RESOLVED.value})
                )
                events.append(
                    ("phase", {"tick": now, "phase": BusPhase.LOCALIZING.value})
                )
                events.append(
                    ("sync_resolved", {"tick": now, "round": msg.payload["round"]})
                )
            else:  # ambiguous or absent: retry or give up
                events.append(
                    (
                        "sync_unresolved",
                        {"tick": now, "round": msg.payload["round"], "kind": kind},
                    )
                )
                if st.round < config.max_rounds:
                    st, more_out, more_disp = _challenge(st, now, config, events)
                    out.extend(more_out)
                    display.extend(more_disp)
                else:
                    st = replace(st, phase=BusPhase.FAILED, appointed_t=None)
                    events.append(
                        ("phase", {"tick": now, "phase": BusPhase.FAILED.value})
                    )

    if reports:
        # fuse the newest capture-tick's worth of reports into one pose
        latest = max(r.timestamp for r in reports)
        group = [r for r in reports if r.timestamp == latest]
        fused = fuse_poses(group)
        st = replace(
            st,
            fused_pose={
                "pose": fused.pose.to_json_dict(),
                "timestamp": latest,
                "n_views": fused.n_views,
            },
        )
        events.append(
            (
                "fused_pose",
                {
                    "tick": now,
                    "timestamp": latest,
                    "pose": fused.pose.to_json_dict(),
                    "n_views": fused.n_views,
                    "x_std": fused.x_std,
                    "y_std": fused.y_std,
                    "yaw_std": fused.yaw_std,
                },
            )
        )

    if (
        now == config.leave_tick
        and st.phase not in (BusPhase.IDLE, BusPhase.LEAVING)
    ):
        for rsu in config.rsu_ids:
            out.append(ProtocolMessage(MsgKind.CLOSE, config.bus_id, rsu, now))
        st = replace(st, phase=BusPhase.LEAVING)
        events.append(("phase", {"tick": now, "phase": BusPhase.LEAVING.value}))

    return BusStepResult(
        state=st, outbound=tuple(out), display=tuple(display), events=tuple(events)
    )


def rsu_step(
    state: RsuState,
    inbox: Sequence[ProtocolMessage],
    frame: Sequence[Detection],
    now: int,
    rsu_id: str,
    bus_id: str,
    estimate_fn=None,
) -> RsuStepResult:
    """One tick of an RSU state machine.

    frame holds this tick's detections from the RSU's own camera.
    estimate_fn(detection) -> PoseEstimate turns a matching detection into
    a world-framed report; when None, no POSE_REPORTs are produced (pure
    protocol tests).
    """
    events: list = []
    out: list = []
    st = state

    for msg in inbox:
        if msg.kind is MsgKind.INITIATE:
            st = RsuState(
                phase=RsuPhase.ACTIVE, client_code=int(msg.payload["client_code"])
            )
            out.append(ProtocolMessage(MsgKind.INITIATE_ACK, rsu_id, bus_id, now))
            events.append(("rsu_active", {"tick": now, "rsu": rsu_id}))
        elif msg.kind is MsgKind.CLOSE:
            st = RsuState()
            out.append(ProtocolMessage(MsgKind.CLOSE_ACK, rsu_id, bus_id, now))
            events.append(("rsu_idle", {"tick": now, "rsu": rsu_id}))
        elif msg.kind is MsgKind.TAG_UPDATE:
            if st.phase is RsuPhase.IDLE:
                continue
            st = replace(
                st,
                pending_new_code=int(msg.payload["new_code"]),
                pending_round=int(msg.payload["round"]),
            )
        elif msg.kind is MsgKind.SYNC_APPOINT:
            if st.phase is RsuPhase.IDLE:
                continue
            if (
                st.pending_new_code is None
                or st.pending_round != int(msg.payload["round"])
            ):
                events.append(
                    (
                        "protocol_violation",
                        {
                            "tick": now,
                            "rsu": rsu_id,
                            "detail": "SYNC_APPOINT without matching TAG_UPDATE",
                        },
                    )
                )
                continue
            st = replace(
                st,
                phase=RsuPhase.SYNC_ARMED,
                pending_t_act=int(msg.payload["t_act"]),
            )

    if st.phase is RsuPhase.SYNC_ARMED and now == st.pending_t_act:
        verdict, det = resolve_sync(frame, st.pending_new_code)
        out.append(
            ProtocolMessage(
                MsgKind.SYNC_RESULT,
                rsu_id,
                bus_id,
                now,
                {"verdict": verdict, "round": st.pending_round},
            )
        )
        events.append(
            (
                "sync_evaluated",
                {"tick": now, "rsu": rsu_id, "verdict": verdict.to_json_dict()},
            )
        )
        new_client = (
            st.pending_new_code if verdict.kind == "unique" else st.client_code
        )
        st = RsuState(phase=RsuPhase.ACTIVE, client_code=new_client)
    elif st.phase is RsuPhase.SYNC_ARMED and st.pending_t_act is not None and now > st.pending_t_act:
        # missed the instant (should not happen in-sim); disarm
        st = RsuState(phase=RsuPhase.ACTIVE, client_code=st.client_code)

    if st.phase in (RsuPhase.ACTIVE, RsuPhase.SYNC_ARMED) and st.client_code is not None:
        matching = [d for d in frame if d.code_index == st.client_code]
        if estimate_fn is not None:
            for det in matching:
                est = estimate_fn(det)
                if est is None:
                    continue
                out.append(
                    ProtocolMessage(
                        MsgKind.POSE_REPORT,
                        rsu_id,
                        bus_id,
                        now,
                        {"estimate": est, "code_index": det.code_index},
                    )
                )
        count = detect_confusion(frame, st.client_code)
        if count is not None:
            out.append(
                ProtocolMessage(
                    MsgKind.CONFUSION_ALERT,
                    rsu_id,
                    bus_id,
                    now,
                    {"code_index": st.client_code, "count": count},
                )
            )
            events.append(
                ("confusion_detected", {"tick": now, "rsu": rsu_id, "count": count})
            )

    return RsuStepResult(state=st, outbound=tuple(out), events=tuple(events))


def attacker_step(
    state: AttackerState, observed_bus_code: Optional[int], now: int
) -> AttackerStepResult:
    """One tick of an attacker.

    STATIC never changes. FOLLOWER schedules a copy of any observed
    foreign code after its reaction latency; the copy applies the moment
    now reaches the scheduled tick (latency 0 applies immediately).
    """
    if state.strategy is AttackerStrategy.STATIC:
        return AttackerStepResult(state=state, events=())
    st = state
    events: list = []
    if (
        observed_bus_code is not None
        and observed_bus_code != st.displayed_code
        and st.pending_copy is None
    ):
        st = replace(
            st, pending_copy=(int(observed_bus_code), now + st.reaction_latency)
        )
        events.append(
            (
                "attacker_scheduled_copy",
                {"tick": now, "code": int(observed_bus_code),
                 "apply_at": now + st.reaction_latency},
            )
        )
    if st.pending_copy is not None and now >= st.pending_copy[1]:
        code = st.pending_copy[0]
        st = replace(st, displayed_code=code, pending_copy=None)
        events.append(("attacker_copied", {"tick": now, "code": code}))
    return AttackerStepResult(state=st, events=tuple(events))
