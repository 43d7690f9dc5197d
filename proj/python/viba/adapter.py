"""Serve a Python tagger over the toolkit's subprocess wire protocol.

The parent process (the ``viba`` CLI or :class:`viba.SubprocessVictim`)
drives the child over stdin/stdout with one JSON message per line:

* handshake: ``{"op": "hello", "version": 1}`` is answered with the child's
  capabilities and label inventory,
* requests: ``{"op": "predict", "id": N, "tokens": [...]}`` are answered
  with ``{"op": "result", "id": N, "tags": [...]}`` plus optional
  ``marginals``/``representations`` matrices,
* failures: ``{"op": "error", "id": N, "message": "..."}``.

Example::

    import viba.adapter

    def tag(tokens):
        return ["B-PER" if t.istitle() else "O" for t in tokens]

    viba.adapter.serve(tag, labels=["B-PER", "O"])

Inference must be deterministic: the attack re-checks every stored success
and flags victims that fail to reproduce it.
"""

import json
import sys

PROTOCOL_VERSION = 1


def serve(predict, labels, *, marginals=None, representations=None,
          mask_token="[MASK]", stdin=None, stdout=None):
    """Run the adapter loop until stdin closes.

    ``predict(tokens)`` returns a tag list aligned with ``tokens``.
    ``marginals(tokens)`` (optional) returns one probability row per token,
    each summing to 1 over ``labels``. ``representations(tokens)``
    (optional) returns one fixed-dimension vector per token.
    """
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout

    def reply(payload):
        stdout.write(json.dumps(payload) + "\n")
        stdout.flush()

    for line in stdin:
        line = line.strip()
        if not line:
            continue
        try:
            msg = json.loads(line)
        except json.JSONDecodeError:
            reply({"op": "error", "id": -1, "message": "malformed request"})
            continue

        op = msg.get("op")
        if op == "hello":
            reply({
                "op": "hello",
                "version": PROTOCOL_VERSION,
                "capabilities": {
                    "marginals": marginals is not None,
                    "representations": representations is not None,
                    "mask_token": mask_token,
                },
                "labels": list(labels),
            })
            continue

        request_id = msg.get("id", -1)
        if op != "predict":
            reply({"op": "error", "id": request_id,
                   "message": f"unexpected op {op!r}"})
            continue

        try:
            tokens = msg["tokens"]
            result = {"op": "result", "id": request_id,
                      "tags": list(predict(tokens))}
            if marginals is not None:
                result["marginals"] = [list(row) for row in marginals(tokens)]
            if representations is not None:
                result["representations"] = [
                    list(row) for row in representations(tokens)
                ]
            reply(result)
        except Exception as exc:  # surface the failure to the parent
            reply({"op": "error", "id": request_id, "message": str(exc)})
