"""Drive the HTTP API end to end, in process (no sockets needed).

Creates a zero-initialized checkpoint, opens a session, runs prediction,
edits the parameters like the browser UI would, and fetches renders.
The same flow works against `harmonia serve` over real HTTP.
"""

import io
import json
import tempfile
from pathlib import Path

import numpy as np
from fastapi.testclient import TestClient

from harmonia import nn
from harmonia.image import decode_image, encode_image
from harmonia.service import create_app
from harmonia.trainer import Adam, TrainConfig, save_checkpoint
from harmonia.transforms import identity_params, serialize_params

OUT = Path(__file__).parent / "output"
OUT.mkdir(exist_ok=True)


def main():
    with tempfile.TemporaryDirectory() as tmp:
        ck = Path(tmp) / "init.harm"
        cfg = TrainConfig(resolution=64)
        pcfg = cfg.predictor_config()
        pred = nn.init_predictor(pcfg, np.random.default_rng(0))
        save_checkpoint(ck, pred, None, Adam(pred), None, pcfg, 0, 0)

        client = TestClient(create_app(checkpoint=ck))
        print("health:", client.get("/v1/health").json())

        rng = np.random.default_rng(5)
        comp = rng.random((120, 160, 3))
        mask = np.zeros((120, 160))
        mask[30:90, 50:120] = 1.0
        resp = client.post(
            "/v1/session",
            files={
                "composite": ("c.png", io.BytesIO(encode_image(comp)), "image/png"),
                "mask": ("m.png", io.BytesIO(encode_image(mask)), "image/png"),
            },
        )
        sid = resp.json()["session_id"]
        print("session:", sid)

        predicted = client.post(f"/v1/session/{sid}/predict").json()
        y_vals = {xy[1] for ch in predicted["params"]["curves"] for xy in ch}
        print(f"untrained checkpoint predicts the constraint-map fixed point: y = {y_vals}")

        # an artist edit: darken the midtones of the red channel, add a gain dip
        doc = predicted["params"]
        for k in range(10, 20):
            doc["curves"][0][k][1] = max(0.0, doc["curves"][0][k][1] - 0.25)
        for r in range(24, 40):
            for c in range(24, 40):
                doc["shading"][r][c] = 0.6
        put = client.put(f"/v1/session/{sid}/params", content=json.dumps(doc))
        print("edited params accepted:", put.status_code == 200)

        edited = decode_image(client.get(f"/v1/session/{sid}/render?scale=full").content)
        (OUT / "service_edited.png").write_bytes(encode_image(edited))

        client.put(f"/v1/session/{sid}/params", content=serialize_params(identity_params()))
        reverted = decode_image(client.get(f"/v1/session/{sid}/render?scale=full").content)
        uploaded = decode_image(encode_image(comp))
        print("identity params render == upload byte-for-byte:", reverted.tobytes() == uploaded.tobytes())

        bad = json.loads(serialize_params(identity_params()))
        bad["curves"][0][3][0] = bad["curves"][0][5][0]
        resp = client.put(f"/v1/session/{sid}/params", content=json.dumps(bad))
        print(f"invalid params rejected with 422 naming {resp.json()['detail']['field']!r}")


if __name__ == "__main__":
    main()
