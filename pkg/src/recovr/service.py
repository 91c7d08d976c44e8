"""HTTP service backing live elicitation workshops.

State model
-----------
Each workshop session is an event-sourced value: an append-only list of
JSON events (create / enroll / delphi / estimates / cooke / fit) folded
into a :class:`SessionState` by the pure function :func:`apply_event`.
Replaying a session's log from scratch reproduces its state byte-for-byte
— heavyweight results (the fitted curve) are stored *in* their event, so
replay never recomputes them.  Events are persisted as one JSON line each
in ``{data_dir}/{session_id}.jsonl`` and reloaded on startup.

Concurrency
-----------
Mutations on one session are serialized by a per-session lock and bump the
session version by exactly one event; reads take lock-free snapshots
(states are immutable and swapped atomically).  Mutating requests may
carry ``expected_version`` for optimistic concurrency — a mismatch is a
conflict response, nothing is written.  Fit requests with more than 2000
posterior samples run off the request path and return a job handle; the
job only commits its result if the session version is unchanged, so a
concurrent edit can never be shadowed by a stale curve.

D-value intake
--------------
``POST /sessions/{id}/delphi`` receives duration estimates under both D
policies: with a consensus scheme it drives anonymous Delphi rounds
(facilitator feedback is min/median/max only — individual values never
appear outside the audit log); with a per-expert scheme it simply records
the submitting expert's personal D.
"""

from __future__ import annotations

import json
import logging
import threading
import uuid
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .elicitation import (
    CookeAssessment,
    DelphiSession,
    ElicitationScheme,
    aggregate_sparse,
    cooke_weights,
    delphi_step,
    estimate_noise_sparse,
    normalize_panel,
)
from .errors import InputError, NumericalError, RecovrError, StateError
from .experts import ExpertPath
from .fitting import FitSettings, fit_elicited

log = logging.getLogger("recovr.service")

__all__ = [
    "SessionState",
    "apply_event",
    "replay",
    "canonical_state",
    "SessionStore",
    "create_app",
]

#: above this many posterior samples a fit runs as a background job
SYNC_SAMPLE_LIMIT = 2000

LEVEL_TOL = 1e-9


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


class UnknownSessionError(InputError):
    code = "unknown_session"


# ---------------------------------------------------------------------------
# pure state + fold


@dataclass(frozen=True)
class SessionState:
    """Immutable snapshot of one workshop session."""

    session_id: str
    scheme: ElicitationScheme
    roster: tuple[tuple[str, str], ...] = ()  # (expert_id, display name)
    delphi: DelphiSession = field(
        default_factory=lambda: DelphiSession(roster=()))
    delphi_pending: tuple[tuple[str, float], ...] = ()
    personal_d: tuple[tuple[str, float], ...] = ()
    estimates: tuple[tuple[str, float, float], ...] = ()  # (expert, level, t)
    cooke: dict | None = None
    fitted: dict | None = None  # {"summary", "noise_source", "options", ...}
    event_log: tuple[dict, ...] = ()
    version: int = 0

    @property
    def expert_ids(self) -> tuple[str, ...]:
        return tuple(e for e, _ in self.roster)

    @property
    def stage(self) -> str:
        if self.scheme.d_policy == "consensus" and \
                self.delphi.status != "consensus":
            return "delphi"
        return "fitted" if self.fitted is not None else "estimates"

    def estimates_by_expert(self) -> dict[str, dict[float, float]]:
        out: dict[str, dict[float, float]] = {}
        for expert, level, time in self.estimates:
            out.setdefault(expert, {})[level] = time
        return out

    def d_for(self, expert_id: str) -> float | None:
        return dict(self.personal_d).get(expert_id)


def apply_event(state: SessionState | None, event: dict) -> SessionState:
    """Fold one event into the state.  Pure; trusts the event's validity.

    Every mutating event bumps the version; every event except ``create``
    and ``fit`` clears the fitted curve (a fit must never outlive a change
    to its inputs).
    """
    etype = event["type"]
    if etype == "create":
        if state is not None:
            raise StateError("create must be the first event")
        return SessionState(
            session_id=event["session_id"],
            scheme=ElicitationScheme.from_dict(event["scheme"]),
            event_log=(event,),
            version=1,
        )
    if state is None:
        raise StateError("event log must start with a create event")
    base = {
        "event_log": state.event_log + (event,),
        "version": state.version + 1,
    }
    if etype == "enroll":
        roster = state.roster + ((event["expert_id"], event["name"]),)
        return replace(
            state,
            roster=roster,
            delphi=replace(state.delphi, roster=tuple(e for e, _ in roster)),
            fitted=None,
            **base,
        )
    if etype == "delphi":
        expert, d = event["expert_id"], float(event["D"])
        if state.scheme.d_policy == "per_expert":
            personal = dict(state.personal_d)
            personal[expert] = d
            return replace(
                state,
                personal_d=tuple(sorted(personal.items())),
                fitted=None,
                **base,
            )
        pending = dict(state.delphi_pending)
        pending[expert] = d
        delphi = state.delphi
        if set(pending) >= set(delphi.roster):
            delphi = delphi_step(delphi, pending)
            pending = {}
        return replace(
            state,
            delphi=delphi,
            delphi_pending=tuple(sorted(pending.items())),
            fitted=None,
            **base,
        )
    if etype == "estimates":
        merged = {
            (expert, level): t for expert, level, t in state.estimates
        }
        for level, time in event["items"]:
            merged[(event["expert_id"], float(level))] = float(time)
        flat = tuple(
            (e, lv, merged[(e, lv)]) for e, lv in sorted(merged)
        )
        return replace(state, estimates=flat, fitted=None, **base)
    if etype == "cooke":
        return replace(state, cooke=event["assessment"], fitted=None, **base)
    if etype == "fit":
        return replace(
            state,
            fitted={
                "summary": event["summary"],
                "noise_source": event["noise_source"],
                "options": event["options"],
                "version": state.version + 1,
            },
            **base,
        )
    raise StateError(f"unknown event type {etype!r}")


def replay(events) -> SessionState:
    """Rebuild a session from its event log."""
    state: SessionState | None = None
    for event in events:
        state = apply_event(state, event)
    if state is None:
        raise StateError("empty event log")
    return state


def session_view(state: SessionState) -> dict:
    """Facilitator-facing snapshot.

    The Delphi section is anonymized (round statistics only); individual
    D values live only in the audit event log.
    """
    delphi = state.delphi
    rounds = []
    for entry in delphi.history:
        values = [float(v) for _, v in entry]
        median = float(np.median(values))
        rounds.append({
            "min": min(values),
            "median": median,
            "max": max(values),
            "spread": (max(values) - min(values)) / median,
        })
    view = {
        "session_id": state.session_id,
        "version": state.version,
        "stage": state.stage,
        "scheme": state.scheme.to_dict(),
        "roster": [
            {"expert_id": e, "name": n} for e, n in state.roster
        ],
        "delphi": {
            "status": delphi.status,
            "round": delphi.round,
            "tolerance": delphi.tolerance,
            "pending_count": len(state.delphi_pending),
            "rounds": rounds,
            "consensus_D": delphi.consensus_D,
        } if state.scheme.d_policy == "consensus" else None,
        "personal_d_count": len(state.personal_d),
        "estimates": [
            {"expert_id": e, "level": lv, "time_days": t}
            for e, lv, t in state.estimates
        ],
        "cooke": state.cooke is not None,
        "fitted": state.fitted,
        "n_events": len(state.event_log),
        "event_log": list(state.event_log),
    }
    return view


def canonical_state(state: SessionState) -> str:
    """Deterministic serialization used for replay-equality checks."""
    return json.dumps(session_view(state), sort_keys=True)


# ---------------------------------------------------------------------------
# command validation helpers


def _validate_estimates(state: SessionState, expert_id: str, items) -> list:
    if expert_id not in state.expert_ids:
        raise InputError(f"unknown expert {expert_id!r}", code="unknown_expert")
    if not isinstance(items, (list, tuple)) or not items:
        raise InputError("items must be a nonempty list of {level, time_days}")
    scheme_levels = np.asarray(state.scheme.levels)
    cleaned = []
    for item in items:
        try:
            level = float(item["level"])
            time = float(item["time_days"])
        except (TypeError, KeyError, ValueError) as exc:
            raise InputError(
                "each item needs numeric level and time_days"
            ) from exc
        match = np.abs(scheme_levels - level) <= LEVEL_TOL
        if not match.any():
            raise InputError(
                f"level {level} is not part of this session's scheme "
                f"{list(scheme_levels)}",
                code="invalid_level",
            )
        if not (time > 0.0 and np.isfinite(time)):
            raise InputError(f"time_days must be positive, got {time}")
        snapped = float(scheme_levels[np.argmax(match)])
        cleaned.append((snapped, time))
    if len({lv for lv, _ in cleaned}) != len(cleaned):
        raise InputError("duplicate levels in one submission")
    cleaned.sort()
    # monotone within the submission, citing the offending pair
    for (l0, t0), (l1, t1) in zip(cleaned, cleaned[1:]):
        if t1 <= t0:
            raise InputError(
                f"times must be strictly increasing in level: "
                f"level {l0} -> {t0} but level {l1} -> {t1}",
                code="non_monotone",
            )
    # and monotone after merging with previous submissions
    merged = state.estimates_by_expert().get(expert_id, {}).copy()
    merged.update(dict(cleaned))
    levels = sorted(merged)
    times = [merged[lv] for lv in levels]
    for i in range(len(times) - 1):
        if times[i + 1] <= times[i]:
            raise InputError(
                f"merged with earlier submissions, times are not strictly "
                f"increasing: level {levels[i]} -> {times[i]} but level "
                f"{levels[i + 1]} -> {times[i + 1]}",
                code="non_monotone",
            )
    return cleaned


def _fit_preconditions(state: SessionState) -> tuple[
        dict[str, dict[float, float]], dict[str, float]]:
    """Check fit preconditions; return per-expert estimates and D values."""
    if not state.roster:
        raise InsufficientFit("no experts enrolled", missing_experts=[])
    by_expert = state.estimates_by_expert()
    thin = sorted(
        e for e in state.expert_ids if len(by_expert.get(e, {})) < 2
    )
    if thin:
        raise InsufficientFit(
            f"every enrolled expert needs at least 2 levels; "
            f"missing or thin: {', '.join(thin)}",
            missing_experts=thin,
        )
    if state.scheme.d_policy == "consensus":
        if state.delphi.consensus_D is None:
            raise InsufficientFit(
                "consensus D not reached yet", missing_experts=[]
            )
        d_values = {e: float(state.delphi.consensus_D)
                    for e in state.expert_ids}
    else:
        personal = dict(state.personal_d)
        missing = sorted(e for e in state.expert_ids if e not in personal)
        if missing:
            raise InsufficientFit(
                f"per-expert D policy: missing D from {', '.join(missing)}",
                missing_experts=missing,
            )
        d_values = personal
    return by_expert, d_values


class InsufficientFit(InputError):
    code = "insufficient_data"

    def __init__(self, message: str, missing_experts: list[str]):
        super().__init__(message)
        self.missing_experts = missing_experts


def _compute_fit(state: SessionState, options: dict) -> dict:
    """Heavy part of a fit command: returns the fit event (minus seq/ts).

    Raises recoverable errors; never mutates state.
    """
    by_expert, d_values = _fit_preconditions(state)
    aggregator = options.get("aggregator", state.scheme.aggregator)
    weighting = options.get("weighting")
    if aggregator == "cooke":
        # the scheme-level "cooke" aggregator means performance-weighted mean
        aggregator = "mean"
        if weighting is None:
            weighting = "cooke"
    if weighting is None:
        weighting = "equal"
    knots = int(options.get("knots", 30))
    n_samples = int(options.get("n_samples", 1000))
    seed = int(options.get("seed", 0))

    paths = []
    for expert in sorted(by_expert):
        per = by_expert[expert]
        levels = sorted(per)
        times = [per[lv] for lv in levels]
        d = d_values[expert]
        if state.scheme.d_policy == "consensus":
            # keep the path valid; the shared D is enforced at normalization
            d = max(d, times[-1])
        paths.append(ExpertPath(
            levels=tuple(levels), times=tuple(times), D=float(d),
            expert_id=expert,
        ))
    if state.scheme.d_policy == "consensus":
        normalized = normalize_panel(
            paths, "consensus", float(state.delphi.consensus_D))
    else:
        normalized = normalize_panel(paths, "per_expert")
    per_expert_taus = {
        p.expert_id: dict(zip(p.levels, p.taus)) for p in normalized
    }

    weights = None
    if weighting == "cooke":
        if state.cooke is None:
            raise InputError(
                "cooke weighting requested but no calibration assessment "
                "was submitted",
                code="missing_cooke",
            )
        assessment = _assessment_from_dict(state.cooke)
        cw = cooke_weights(assessment)
        weights = dict(zip(assessment.expert_ids, cw.weights))
        unknown = sorted(set(per_expert_taus) - set(weights))
        if unknown:
            raise InputError(
                f"calibration assessment lacks experts: {', '.join(unknown)}",
                code="missing_cooke",
            )
    elif weighting != "equal":
        raise InputError(
            f"weighting must be 'equal' or 'cooke', got {weighting!r}"
        )

    points, counts = aggregate_sparse(
        per_expert_taus, weights=weights, aggregator=aggregator)

    mean_contributors = float(np.mean(list(counts.values())))
    sigma_tau = None
    noise_policy = "ml"
    if mean_contributors >= 2.0:
        sigma_tau = estimate_noise_sparse(per_expert_taus)
        if sigma_tau is not None:
            noise_policy = "pooled"

    settings = FitSettings(
        knot_count=knots,
        noise_policy=noise_policy,
        n_samples=n_samples,
    )
    outcome = fit_elicited(points, sigma_tau, state.scheme.top_level,
                           settings, seed=seed)
    return {
        "type": "fit",
        "options": {
            "aggregator": aggregator,
            "knots": knots,
            "n_samples": n_samples,
            "seed": seed,
            "weighting": weighting,
        },
        "summary": outcome.summary.to_dict(),
        "noise_source": outcome.noise_source,
    }


def _assessment_from_dict(data: dict) -> CookeAssessment:
    return CookeAssessment(
        expert_ids=tuple(data["expert_ids"]),
        question_ids=tuple(data["question_ids"]),
        quantiles=np.asarray(data["quantiles"], dtype=float),
        realizations=np.asarray(data["realizations"], dtype=float),
        intrinsic_range_overshoot=float(
            data.get("intrinsic_range_overshoot", 0.1)),
    )


# ---------------------------------------------------------------------------
# store


class SessionStore:
    """All live sessions plus their JSONL persistence.

    One lock per session serializes mutations; `states` maps session_id to
    the current immutable snapshot and is swapped under that lock.
    """

    def __init__(self, data_dir) -> None:
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self._states: dict[str, SessionState] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._registry_lock = threading.Lock()
        self.jobs: dict[str, dict] = {}
        self._load()

    def _load(self) -> None:
        for path in sorted(self.data_dir.glob("*.jsonl")):
            try:
                events = [
                    json.loads(line)
                    for line in path.read_text(encoding="utf-8").splitlines()
                    if line.strip()
                ]
                state = replay(events)
            except (json.JSONDecodeError, RecovrError) as exc:
                log.warning("skipping unreadable session log %s: %s",
                            path, exc)
                continue
            self._states[state.session_id] = state
            self._locks[state.session_id] = threading.Lock()
            log.info("loaded session %s at version %d",
                     state.session_id, state.version)

    def _log_path(self, session_id: str) -> Path:
        return self.data_dir / f"{session_id}.jsonl"

    def create(self, scheme_dict: dict) -> SessionState:
        session_id = uuid.uuid4().hex[:12]
        event = {
            "seq": 1,
            "ts": _now(),
            "type": "create",
            "session_id": session_id,
            "scheme": ElicitationScheme.from_dict(scheme_dict).to_dict(),
        }
        state = apply_event(None, event)
        with self._registry_lock:
            self._states[session_id] = state
            self._locks[session_id] = threading.Lock()
        self._append_line(session_id, event)
        return state

    def get(self, session_id: str) -> SessionState:
        try:
            return self._states[session_id]
        except KeyError:
            raise UnknownSessionError(f"no session {session_id!r}") from None

    def lock(self, session_id: str) -> threading.Lock:
        try:
            return self._locks[session_id]
        except KeyError:
            raise UnknownSessionError(f"no session {session_id!r}") from None

    def _append_line(self, session_id: str, event: dict) -> None:
        with self._log_path(session_id).open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(event, sort_keys=True) + "\n")

    def commit(self, state: SessionState, event: dict,
               expected_version: int | None) -> SessionState:
        """Fold + persist one event; caller must hold the session lock."""
        if expected_version is not None and \
                expected_version != state.version:
            raise StateError(
                f"expected version {expected_version} but session is at "
                f"{state.version}",
                code="version_conflict",
            )
        event = {"seq": state.version + 1, "ts": _now(), **event}
        new_state = apply_event(state, event)
        self._append_line(state.session_id, event)
        self._states[state.session_id] = new_state
        return new_state


# ---------------------------------------------------------------------------
# HTTP app


def create_app(data_dir="./recovr-sessions", ui_dir=None):
    """Build the FastAPI app with its own store (one store per app)."""
    from fastapi import Body, FastAPI, Request
    from fastapi.exceptions import RequestValidationError
    from fastapi.responses import JSONResponse

    app = FastAPI(title="recovr workshop service", docs_url="/docs")
    store = SessionStore(data_dir)
    app.state.store = store

    def _error(status: int, code: str, detail: str) -> JSONResponse:
        return JSONResponse(status_code=status,
                            content={"error_code": code, "detail": detail})

    @app.exception_handler(RecovrError)
    async def _recovr_error(request: Request, exc: RecovrError):
        if isinstance(exc, UnknownSessionError):
            status = 404
        elif isinstance(exc, StateError):
            status = 409
        elif isinstance(exc, NumericalError):
            status = 500
        else:
            status = 400
        return _error(status, exc.code, str(exc))

    @app.exception_handler(RequestValidationError)
    async def _body_error(request: Request, exc: RequestValidationError):
        return _error(400, "validation_error", str(exc))

    @app.post("/sessions", status_code=201)
    def create_session(body: dict = Body(...)):
        scheme = body.get("scheme", {})
        state = store.create(scheme)
        return {
            "session_id": state.session_id,
            "version": state.version,
            "stage": state.stage,
        }

    @app.get("/sessions/{session_id}")
    def get_state(session_id: str):
        return session_view(store.get(session_id))

    @app.post("/sessions/{session_id}/experts", status_code=201)
    def enroll(session_id: str, body: dict = Body(...)):
        name = str(body.get("name", "")).strip()
        if not name:
            raise InputError("expert name must not be empty")
        with store.lock(session_id):
            state = store.get(session_id)
            expert_id = f"e{len(state.roster) + 1}"
            new_state = store.commit(
                state,
                {"type": "enroll", "expert_id": expert_id, "name": name},
                body.get("expected_version"),
            )
        return {
            "expert_id": expert_id,
            "version": new_state.version,
            "stage": new_state.stage,
        }

    @app.post("/sessions/{session_id}/delphi")
    def submit_delphi(session_id: str, body: dict = Body(...)):
        expert_id = str(body.get("expert_id", ""))
        try:
            d = float(body["D"])
        except (KeyError, TypeError, ValueError):
            raise InputError("body needs a numeric D") from None
        if not (d > 0.0 and np.isfinite(d)):
            raise InputError(f"D must be positive, got {d}")
        with store.lock(session_id):
            state = store.get(session_id)
            if expert_id not in state.expert_ids:
                raise InputError(f"unknown expert {expert_id!r}",
                                 code="unknown_expert")
            if state.scheme.d_policy == "consensus" and \
                    state.delphi.status == "consensus":
                raise StateError(
                    "session already reached consensus", code="conflict")
            new_state = store.commit(
                state,
                {"type": "delphi", "expert_id": expert_id, "D": d},
                body.get("expected_version"),
            )
        if state.scheme.d_policy == "per_expert":
            return {
                "status": "recorded",
                "count": len(new_state.personal_d),
                "version": new_state.version,
            }
        delphi = new_state.delphi
        out = {
            "status": delphi.status if not new_state.delphi_pending
            else "collecting",
            "round": delphi.round,
            "count": len(new_state.delphi_pending),
            "version": new_state.version,
        }
        if not new_state.delphi_pending and delphi.history:
            out["feedback"] = delphi.feedback_stats()
        if delphi.consensus_D is not None:
            out["consensus_D"] = delphi.consensus_D
        return out

    @app.post("/sessions/{session_id}/estimates")
    def submit_estimates(session_id: str, body: dict = Body(...)):
        expert_id = str(body.get("expert_id", ""))
        with store.lock(session_id):
            state = store.get(session_id)
            cleaned = _validate_estimates(state, expert_id,
                                          body.get("items"))
            new_state = store.commit(
                state,
                {
                    "type": "estimates",
                    "expert_id": expert_id,
                    "items": [[lv, t] for lv, t in cleaned],
                },
                body.get("expected_version"),
            )
        return {
            "accepted_levels": [lv for lv, _ in cleaned],
            "version": new_state.version,
        }

    @app.post("/sessions/{session_id}/cooke")
    def submit_cooke(session_id: str, body: dict = Body(...)):
        data = body.get("assessment")
        if not isinstance(data, dict):
            raise InputError("body needs an assessment object")
        assessment = _assessment_from_dict(data)  # validates
        weights = cooke_weights(assessment)
        with store.lock(session_id):
            state = store.get(session_id)
            unknown = sorted(set(assessment.expert_ids)
                             - set(state.expert_ids))
            if unknown:
                raise InputError(
                    f"assessment names unenrolled experts: "
                    f"{', '.join(unknown)}",
                    code="unknown_expert",
                )
            new_state = store.commit(
                state,
                {
                    "type": "cooke",
                    "assessment": {
                        "expert_ids": list(assessment.expert_ids),
                        "question_ids": list(assessment.question_ids),
                        "quantiles": assessment.quantiles.tolist(),
                        "realizations": assessment.realizations.tolist(),
                        "intrinsic_range_overshoot":
                            assessment.intrinsic_range_overshoot,
                    },
                },
                body.get("expected_version"),
            )
        return {
            "weights": dict(zip(assessment.expert_ids, weights.weights)),
            "calibration": dict(zip(assessment.expert_ids,
                                    weights.calibration)),
            "information": dict(zip(assessment.expert_ids,
                                    weights.information)),
            "fallback_equal": weights.fallback_equal,
            "version": new_state.version,
        }

    @app.post("/sessions/{session_id}/fit")
    def fit_session(session_id: str, body: dict | None = Body(default=None)):
        options = dict(body or {})
        expected = options.pop("expected_version", None)
        n_samples = int(options.get("n_samples", 1000))
        if n_samples <= SYNC_SAMPLE_LIMIT:
            with store.lock(session_id):
                state = store.get(session_id)
                event = _compute_fit(state, options)
                new_state = store.commit(state, event, expected)
            return {
                "summary": new_state.fitted["summary"],
                "noise_source": new_state.fitted["noise_source"],
                "version": new_state.version,
            }

        # large fit: validate now, sample off the request path
        with store.lock(session_id):
            state = store.get(session_id)
            if expected is not None and expected != state.version:
                raise StateError(
                    f"expected version {expected} but session is at "
                    f"{state.version}",
                    code="version_conflict",
                )
            _fit_preconditions(state)
            snapshot = state
        job_id = uuid.uuid4().hex[:12]
        store.jobs[job_id] = {
            "status": "running",
            "session_id": session_id,
        }

        def _run() -> None:
            job = store.jobs[job_id]
            try:
                event = _compute_fit(snapshot, options)
            except RecovrError as exc:
                job.update(status="failed", error_code=exc.code,
                           detail=str(exc))
                return
            with store.lock(session_id):
                current = store.get(session_id)
                if current.version != snapshot.version:
                    job.update(
                        status="failed",
                        error_code="version_conflict",
                        detail="session changed while fitting; refit",
                    )
                    return
                new_state = store.commit(current, event, None)
            job.update(status="done", version=new_state.version)

        threading.Thread(target=_run, daemon=True).start()
        return JSONResponse(status_code=202, content={
            "job_id": job_id,
            "status": "running",
            "status_url": f"/sessions/{session_id}/jobs/{job_id}",
        })

    @app.get("/sessions/{session_id}/jobs/{job_id}")
    def job_status(session_id: str, job_id: str):
        store.get(session_id)
        job = store.jobs.get(job_id)
        if job is None or job.get("session_id") != session_id:
            raise InputError(f"no job {job_id!r}", code="unknown_job")
        return {k: v for k, v in job.items() if k != "session_id"}

    @app.get("/sessions/{session_id}/curve")
    def get_curve(session_id: str):
        state = store.get(session_id)
        if state.fitted is None:
            return {"fitted": None, "version": state.version}
        return {
            "fitted": state.fitted["summary"],
            "noise_source": state.fitted["noise_source"],
            "fitted_at_version": state.fitted["version"],
            "version": state.version,
        }

    _mount_ui(app, ui_dir)
    return app


def _mount_ui(app, ui_dir) -> None:
    """Serve the built UI bundle at / when present."""
    from fastapi.staticfiles import StaticFiles

    candidates = []
    if ui_dir is not None:
        candidates.append(Path(ui_dir))
    else:
        here = Path(__file__).resolve()
        # src layout: src/recovr/service.py -> repo root / frontend / dist
        candidates.append(here.parents[2] / "frontend" / "dist")
        candidates.append(Path.cwd() / "frontend" / "dist")
    for cand in candidates:
        if cand.is_dir():
            app.mount("/", StaticFiles(directory=str(cand), html=True),
                      name="ui")
            log.info("serving UI bundle from %s", cand)
            return
    log.info("no UI bundle found; API only")
