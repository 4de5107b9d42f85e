"""HTTP chat service: a human talks to a trained agent, session by session.

Sessions live in memory with idle-TTL eviction and a per-session lock, so
concurrent users never share mutable state while model parameters stay
shared read-only. Every finished session appends one JSONL row whose
fields aggregate to the same metrics as offline evaluation.
"""

import dataclasses
import datetime
import hashlib
import json
import os
import threading
import time
import uuid

import numpy as np

from .catalog import items_matching, split
from .dialoggen import DialogueAct, realize, request
from .env import RewardConfig, make_agent, metrics_from_episodes, success_reward
from .policy import RuleState, index_to_action, policy_forward
from .recommender import known_facets, recommend
from . import pipeline
from .pipeline import EnvConfig, RunPaths, StageError

MAX_SELECT_ATTEMPTS = 3


class ServiceError(Exception):
    """Request-level failure with an HTTP status code."""

    def __init__(self, status, message):
        super().__init__(message)
        self.status = status


def _now_iso():
    return datetime.datetime.now(datetime.timezone.utc).isoformat()


def file_hash(path):
    """Short content hash used to pin which checkpoint a service is running."""
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()[:12]


def _item_card(catalog, item, rank=None, score=None):
    schema = catalog.schema
    card = {"item_id": item.item_id,
            "facets": {schema.names[j]: schema.values(j)[v]
                       for j, v in enumerate(item.values)}}
    if rank is not None:
        card["rank"] = rank
    if score is not None:
        card["score"] = round(score, 4)
    return card


@dataclasses.dataclass
class ChatSession:
    session_id: str
    user_id: str
    user_index: int
    policy: str
    agent: object
    tracker_session: object
    rng: np.random.Generator
    seed: int
    study_mode: bool
    target: object | None
    status: str = "active"          # active | recommending | succeeded | failed
    belief: object | None = None
    history: list = dataclasses.field(default_factory=list)
    turn: int = 0                   # agent decisions taken
    asked: int = 0
    turn_rewards: list = dataclasses.field(default_factory=list)
    shown: list = dataclasses.field(default_factory=list)
    select_attempts: int = 0
    last_probs: list | None = None
    outcome: str | None = None
    tau: int | None = None
    reward: float | None = None
    created: str = dataclasses.field(default_factory=_now_iso)
    closed: str | None = None
    last_active: float = dataclasses.field(default_factory=time.time)
    lock: threading.Lock = dataclasses.field(default_factory=threading.Lock)


class ChatService:
    """Session store plus the turn logic; the HTTP layer is a thin wrapper."""

    def __init__(self, components, reward_config=None, default_policy="crm",
                 policy_model=None, study_log=None, ttl_minutes=30.0,
                 checkpoints=None):
        self.components = components
        self.cfg = reward_config or RewardConfig()
        self.default_policy = default_policy
        self.policy_model = policy_model
        self.study_log = study_log
        self.ttl_seconds = ttl_minutes * 60.0
        self.checkpoints = checkpoints or {}
        self.sessions = {}
        self._store_lock = threading.Lock()
        self._log_lock = threading.Lock()
        parts = split(components.catalog)
        self._test_pairs = [(r.user_id, r.item_id) for r in parts.test]
        self._train_by_user = {}
        for r in parts.train:
            self._train_by_user.setdefault(r.user_id, []).append(r)

    # ------------------------------------------------------------------ #
    # Store plumbing
    # ------------------------------------------------------------------ #

    def _evict_expired(self):
        cutoff = time.time() - self.ttl_seconds
        with self._store_lock:
            dead = [sid for sid, s in self.sessions.items()
                    if s.last_active < cutoff]
            for sid in dead:
                del self.sessions[sid]

    def _get(self, session_id):
        self._evict_expired()
        with self._store_lock:
            session = self.sessions.get(session_id)
        if session is None:
            raise ServiceError(404, f"unknown session {session_id!r}")
        session.last_active = time.time()
        return session

    def _agent(self, name):
        if name == "crm":
            if self.policy_model is None:
                raise ServiceError(400, "no policy checkpoint loaded; "
                                        "crm sessions are unavailable")
            return make_agent(name, policy_model=self.policy_model, mode="greedy")
        try:
            return make_agent(name)
        except ValueError as e:
            raise ServiceError(400, str(e))

    # ------------------------------------------------------------------ #
    # Operations
    # ------------------------------------------------------------------ #

    def create_session(self, policy=None, study_mode=False, seed=None,
                       user_id=None):
        self._evict_expired()
        catalog = self.components.catalog
        policy = policy or self.default_policy
        agent = self._agent(policy)
        if seed is None:
            seed = int.from_bytes(os.urandom(4), "big")
        rng = np.random.default_rng(seed)
        target = None
        if study_mode:
            user_id, item_id = self._test_pairs[int(rng.integers(len(self._test_pairs)))]
            target = catalog.items[catalog.item_index[item_id]]
        elif user_id is None:
            user_id = catalog.users[int(rng.integers(len(catalog.users)))]
        elif user_id not in catalog.user_index:
            raise ServiceError(400, f"unknown user {user_id!r}")
        session = ChatSession(
            session_id=uuid.uuid4().hex,
            user_id=user_id,
            user_index=catalog.user_index[user_id],
            policy=policy,
            agent=agent,
            tracker_session=self.components.tracker.session(rng=rng),
            rng=rng,
            seed=seed,
            study_mode=study_mode,
            target=target,
        )
        with self._store_lock:
            self.sessions[session.session_id] = session
        return self._descriptor(session, include_visited=True)

    def post_message(self, session_id, text):
        session = self._get(session_id)
        if not isinstance(text, str) or not text.strip():
            raise ServiceError(400, "message text must be a non-empty string")
        with session.lock:
            if session.status != "active":
                raise ServiceError(409, f"session is {session.status}; "
                                        "no further messages are accepted")
            session.history.append({"role": "user", "text": text})
            session.belief = session.tracker_session.consume(text)
            reply = self._agent_turn(session)
            session.history.append({"role": "agent", **reply})
            return dict(reply, status=session.status,
                        debug=self._debug_payload(session))

    def _agent_turn(self, session):
        """One greedy agent decision from the current belief."""
        catalog = self.components.catalog
        schema = catalog.schema
        known = {j: v for j, v, _ in
                 known_facets(session.belief, self.components.theta_known)}
        rule_state = RuleState(known=frozenset(known),
                               candidates=items_matching(catalog, known),
                               turn=session.turn, asked=session.asked,
                               n_facets=schema.n_facets,
                               max_turns=self.cfg.max_turns)
        a, _ = session.agent.act(session.belief.vector, rule_state, session.rng)
        session.last_probs = self._action_probs(session, a, schema.n_facets + 1)
        if session.turn >= self.cfg.max_turns:
            a = schema.n_facets    # turn budget spent: always show a list
        action = index_to_action(a, schema.n_facets)
        session.turn += 1
        if action.kind == "request":
            session.asked += 1
            session.turn_rewards.append(self.cfg.r_c)
            name = schema.names[action.facet]
            utt = realize(self.components.templates, request(name), session.rng)
            return {"kind": "question", "facet": name, "text": utt.text}
        ranked = recommend(self.components.fm, session.user_index,
                           session.belief, catalog, mu=self.components.mu,
                           theta_known=self.components.theta_known)
        session.shown = ranked[: self.cfg.K]
        session.status = "recommending"
        lead = realize(self.components.templates, DialogueAct("recommend"),
                       session.rng)
        items = [_item_card(catalog, catalog.items[catalog.item_index[iid]],
                            rank=i + 1, score=s)
                 for i, (iid, s) in enumerate(session.shown)]
        return {"kind": "recommendations", "text": lead.text, "items": items}

    def _action_probs(self, session, chosen, n_actions):
        if session.policy == "crm":
            probs = policy_forward(session.agent.model.params,
                                   session.belief.vector[None, :]).data[0]
            return [round(float(p), 6) for p in probs]
        if session.policy == "random":
            return [round(1.0 / n_actions, 6)] * n_actions
        return [1.0 if i == chosen else 0.0 for i in range(n_actions)]

    def select_item(self, session_id, item_id=None, none_found=False):
        session = self._get(session_id)
        with session.lock:
            if session.status != "recommending":
                raise ServiceError(409, f"session is {session.status}; "
                                        "there is no list to select from")
            if none_found:
                return self._close(session, "wrong_quit", None, self.cfg.r_q)
            if item_id is None:
                raise ServiceError(400, "select needs item_id or none_found")
            shown_ids = [iid for iid, _ in session.shown]
            if item_id not in shown_ids:
                raise ServiceError(400, f"item {item_id!r} is not in the "
                                        "shown list")
            rank = shown_ids.index(item_id) + 1
            hit = session.target is None or item_id == session.target.item_id
            if hit:
                return self._close(session, "success", rank,
                                   success_reward(rank, self.cfg))
            session.select_attempts += 1
            left = MAX_SELECT_ATTEMPTS - session.select_attempts
            if left <= 0:
                return self._close(session, "wrong_quit", None, self.cfg.r_q)
            return {"closed": False, "correct": False, "attempts_left": left,
                    "status": session.status}

    def _close(self, session, outcome, tau, final_reward):
        session.outcome = outcome
        session.tau = tau
        session.reward = float(sum(session.turn_rewards) + final_reward)
        session.status = "succeeded" if outcome == "success" else "failed"
        session.closed = _now_iso()
        self._log_outcome(session)
        return {"closed": True, "correct": outcome == "success",
                "status": session.status, "outcome": outcome,
                "tau": tau, "reward": session.reward,
                "turns": session.turn}

    def _log_outcome(self, session):
        if self.study_log is None:
            return
        row = {"session_id": session.session_id,
               "policy": session.policy,
               "target": session.target.item_id if session.target else None,
               "turns": session.turn,
               "outcome": session.outcome,
               "tau": session.tau,
               "reward": session.reward,
               "timestamps": {"created": session.created,
                              "closed": session.closed}}
        with self._log_lock:
            os.makedirs(os.path.dirname(self.study_log) or ".", exist_ok=True)
            with open(self.study_log, "a") as fh:
                fh.write(json.dumps(row) + "\n")

    def get_session(self, session_id):
        return self._descriptor(self._get(session_id))

    def _descriptor(self, session, include_visited=False):
        catalog = self.components.catalog
        out = {"session_id": session.session_id,
               "status": session.status,
               "policy": session.policy,
               "study_mode": session.study_mode,
               "seed": session.seed,
               "user_id": session.user_id,
               "turn": session.turn,
               "history": list(session.history),
               "outcome": session.outcome,
               "tau": session.tau,
               "target": (_item_card(catalog, session.target)
                          if session.target is not None else None)}
        if session.shown:
            out["shown"] = [_item_card(catalog,
                                       catalog.items[catalog.item_index[iid]],
                                       rank=i + 1, score=s)
                            for i, (iid, s) in enumerate(session.shown)]
        if session.belief is not None:
            out["belief"] = self._belief_payload(session.belief)
        if include_visited:
            out["visited"] = self._visited(session.user_id)
        return out

    def _visited(self, user_id):
        """The user's past items (training ratings): their visible history."""
        catalog = self.components.catalog
        cards = []
        for r in self._train_by_user.get(user_id, ()):
            item = catalog.items[catalog.item_index[r.item_id]]
            cards.append(dict(_item_card(catalog, item), rating=r.rating))
        return cards

    def _belief_payload(self, belief):
        schema = belief.schema
        return {schema.names[j]: {schema.values(j)[v]: round(float(p), 6)
                                  for v, p in enumerate(block)}
                for j, block in enumerate(belief.blocks)}

    def _debug_payload(self, session):
        return {"belief": self._belief_payload(session.belief),
                "action_probs": session.last_probs}

    def health(self):
        with self._store_lock:
            n = len(self.sessions)
        return {"status": "ok", "policy": self.default_policy,
                "checkpoints": self.checkpoints, "sessions": n}


def study_metrics(log_path):
    """Aggregate a JSONL study log into the offline Metrics schema."""
    rows = []
    with open(log_path) as fh:
        for line in fh:
            if line.strip():
                rows.append(json.loads(line))
    if not rows:
        raise ValueError("study log is empty")

    @dataclasses.dataclass
    class _Row:
        outcome: str
        total_reward: float
        n_turns: int
    episodes = [_Row(r["outcome"], r["reward"], r["turns"]) for r in rows]
    return metrics_from_episodes(episodes)


# --------------------------------------------------------------------------- #
# HTTP layer
# --------------------------------------------------------------------------- #

def build_service(run_dir, env_config=None, reward_config=None, policy="crm",
                  study_log=None, ttl_minutes=30.0):
    """ChatService from a run directory with trained checkpoints."""
    paths = RunPaths(run_dir)
    components = pipeline.build_components(run_dir, env_config or EnvConfig())
    checkpoints = {"tracker": file_hash(paths.tracker),
                   "fm": file_hash(paths.fm)}
    policy_model = None
    if os.path.exists(paths.policy_rl):
        from .policy import load_policy
        policy_model = load_policy(paths.policy_rl)
        checkpoints["policy_rl"] = file_hash(paths.policy_rl)
    elif policy == "crm":
        raise StageError(f"missing policy checkpoint at {paths.policy_rl}; "
                         "run `train rl` first or serve a rule policy")
    if study_log is None:
        study_log = os.path.join(run_dir, "study_log.jsonl")
    return ChatService(components, reward_config, default_policy=policy,
                       policy_model=policy_model, study_log=study_log,
                       ttl_minutes=ttl_minutes, checkpoints=checkpoints)


def create_app(service):
    """FastAPI wrapper; endpoints stay sync so sessions run on the threadpool."""
    from fastapi import Body, FastAPI
    from fastapi.responses import JSONResponse

    app = FastAPI(title="convrec chat service")
    app.state.service = service

    @app.exception_handler(ServiceError)
    def _service_error(request, exc):
        return JSONResponse(status_code=exc.status, content={"detail": str(exc)})

    @app.post("/api/session")
    def create_session(payload: dict = Body(default={})):
        return service.create_session(
            policy=payload.get("policy"),
            study_mode=bool(payload.get("study_mode", False)),
            seed=payload.get("seed"),
            user_id=payload.get("user_id"))

    @app.post("/api/session/{session_id}/message")
    def post_message(session_id: str, payload: dict = Body(default={})):
        return service.post_message(session_id, payload.get("text"))

    @app.post("/api/session/{session_id}/select")
    def select_item(session_id: str, payload: dict = Body(default={})):
        return service.select_item(
            session_id, item_id=payload.get("item_id"),
            none_found=bool(payload.get("none_found", False)))

    @app.get("/api/session/{session_id}")
    def get_session(session_id: str):
        return service.get_session(session_id)

    @app.get("/api/health")
    def health():
        return service.health()

    return app


def run_server(run_dir, env_config=None, reward_config=None, policy="crm",
               host="127.0.0.1", port=8080, study_log=None, ttl_minutes=30.0):
    import uvicorn
    service = build_service(run_dir, env_config, reward_config, policy,
                            study_log, ttl_minutes)
    for name, digest in service.checkpoints.items():
        print(f"serving {name} checkpoint {digest}", flush=True)
    app = create_app(service)
    uvicorn.run(app, host=host, port=port, log_level="info")
    return 0
