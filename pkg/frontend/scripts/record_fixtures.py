"""Record service responses into tests/fixtures/.

Drives the real chat service in process and freezes one coherent study
session (create -> two questions -> recommendation list -> wrong select ->
successful select) plus the side cases the webchat renders. Re-run after
changing the service's JSON shapes; the frontend tests never talk to a
live backend.
"""

import json
import pathlib
import sys

from fastapi.testclient import TestClient

from convrec import RewardConfig, SyntheticConfig, TrackerConfig, generate_synthetic, split
from convrec.dialoggen import CorpusConfig, default_template_pack, generate_dialogue_corpus
from convrec.env import EnvComponents
from convrec.nlu import train_tracker
from convrec.recommender import FMConfig, gold_beliefs, train_fm
from convrec.service import ChatService, create_app

OUT = pathlib.Path(__file__).resolve().parent.parent / "tests" / "fixtures"


def build_client():
    cat = generate_synthetic(SyntheticConfig(n_users=20, n_items=60,
                                             ratings_per_user=15, seed=0))
    templates = default_template_pack(cat.schema)
    dialogues = generate_dialogue_corpus(cat, templates, CorpusConfig(seed=0))
    n_dev = len(dialogues) // 10
    tracker, _ = train_tracker(dialogues[n_dev:], dialogues[:n_dev], cat.schema,
                               TrackerConfig(hidden=32, max_epochs=40,
                                             patience=10, seed=0),
                               verbose=False)
    fm, _ = train_fm(cat, split(cat), gold_beliefs(cat), FMConfig(seed=0),
                     verbose=False)
    comp = EnvComponents(cat, templates, tracker, fm, mu=1, theta_known=0.5)
    svc = ChatService(comp, RewardConfig(), default_policy="maxent@2",
                      study_log=None)
    return TestClient(create_app(svc))


def record(name, payload):
    path = OUT / f"{name}.json"
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    print(f"wrote {path.relative_to(OUT.parent.parent)}")


def drive(client, seed):
    """Create one study session and answer truthfully until the list."""
    created = client.post("/api/session", json={
        "policy": "maxent@2", "study_mode": True, "seed": seed}).json()
    sid = created["session_id"]
    facets = created["target"]["facets"]
    replies = []
    reply = client.post(f"/api/session/{sid}/message",
                        json={"text": "Hi, I am looking for a place."}).json()
    replies.append(reply)
    while reply["kind"] == "question":
        answer = f"{facets[reply['facet']]}, please."
        reply = client.post(f"/api/session/{sid}/message",
                            json={"text": answer}).json()
        replies.append(reply)
    return created, sid, replies


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    client = build_client()
    record("health", client.get("/api/health").json())

    # scan for a seed whose list is big enough to paginate and contains the
    # target below rank 1 (so the wrong-pick fixture has something to miss)
    for seed in range(200):
        created, sid, replies = drive(client, seed)
        items = [c["item_id"] for c in replies[-1]["items"]]
        target = created["target"]["item_id"]
        if len(items) >= 7 and target in items and items.index(target) >= 1:
            break
    else:
        sys.exit("no seed produced a paginated list containing the target")
    print(f"recorded session: seed {seed}, {len(items)} cards, "
          f"target at rank {items.index(target) + 1}")

    record("session_study", created)
    record("reply_question_1", replies[0])
    record("reply_question_2", replies[1])
    record("reply_recommendations", replies[-1])
    record("session_resumed",
           client.get(f"/api/session/{sid}").json())
    wrong = next(i for i in items if i != target)
    record("select_wrong", client.post(f"/api/session/{sid}/select",
                                       json={"item_id": wrong}).json())
    record("select_success", client.post(f"/api/session/{sid}/select",
                                         json={"item_id": target}).json())
    record("session_terminal", client.get(f"/api/session/{sid}").json())
    resp = client.post(f"/api/session/{sid}/message", json={"text": "hello?"})
    record("error_terminal", {"status": resp.status_code,
                              "body": resp.json()})

    record("session_free", client.post("/api/session", json={
        "policy": "maxent@2", "study_mode": False, "seed": 7}).json())

    # a second session closed with "none of these"
    created2, sid2, replies2 = drive(client, seed + 1)
    record("select_none_found",
           client.post(f"/api/session/{sid2}/select",
                       json={"none_found": True}).json())


if __name__ == "__main__":
    main()
