import io
import json
import uuid

import numpy as np
import pytest
from fastapi.testclient import TestClient

from harmonia import nn
from harmonia.image import decode_image, encode_image
from harmonia.trainer import Adam, TrainConfig, save_checkpoint
from harmonia.transforms import identity_params, parse_params, serialize_params


@pytest.fixture(scope="module")
def checkpoint(tmp_path_factory):
    path = tmp_path_factory.mktemp("ck") / "identity.harm"
    cfg = TrainConfig(resolution=64, widths=(8, 16, 32, 32), disc_widths=(8, 16, 32))
    pcfg = cfg.predictor_config()
    pred = nn.init_predictor(pcfg, np.random.default_rng(0))
    save_checkpoint(path, pred, None, Adam(pred), None, pcfg, 0, 0)
    return path


@pytest.fixture()
def client(checkpoint):
    from harmonia.service import create_app

    app = create_app(checkpoint=checkpoint)
    return TestClient(app)


@pytest.fixture()
def client_no_checkpoint():
    from harmonia.service import create_app

    return TestClient(create_app())


def png_parts(rng, h=48, w=40, with_background=False):
    comp = rng.random((h, w, 3))
    mask = np.zeros((h, w))
    mask[h // 4 : 3 * h // 4, w // 4 : 3 * w // 4] = 1.0
    parts = {
        "composite": ("composite.png", io.BytesIO(encode_image(comp)), "image/png"),
        "mask": ("mask.png", io.BytesIO(encode_image(mask)), "image/png"),
    }
    if with_background:
        parts["background"] = ("background.png", io.BytesIO(encode_image(rng.random((h, w, 3)))), "image/png")
    return comp, mask, parts


def open_session(client, rng, **kw):
    comp, mask, parts = png_parts(rng, **kw)
    resp = client.post("/v1/session", files=parts)
    assert resp.status_code == 201, resp.text
    return comp, mask, resp.json()["session_id"]


class TestHealth:
    def test_health(self, client_no_checkpoint):
        resp = client_no_checkpoint.get("/v1/health")
        assert resp.status_code == 200
        assert resp.json() == {"status": "ok"}


class TestSessionCreation:
    def test_valid_pair_gives_uuid(self, client):
        _, _, sid = open_session(client, np.random.default_rng(0))
        uuid.UUID(sid)  # raises if not UUID-shaped

    def test_mismatched_mask_dims_names_field(self, client):
        rng = np.random.default_rng(1)
        parts = {
            "composite": ("c.png", io.BytesIO(encode_image(rng.random((16, 16, 3)))), "image/png"),
            "mask": ("m.png", io.BytesIO(encode_image(np.zeros((8, 8)))), "image/png"),
        }
        resp = client.post("/v1/session", files=parts)
        assert resp.status_code == 400
        assert "mask" in resp.json()["detail"]

    def test_missing_mask_part(self, client):
        rng = np.random.default_rng(2)
        parts = {"composite": ("c.png", io.BytesIO(encode_image(rng.random((8, 8, 3)))), "image/png")}
        resp = client.post("/v1/session", files=parts)
        assert resp.status_code == 400
        assert "mask" in resp.json()["detail"]

    def test_undecodable_composite_names_field(self, client):
        parts = {
            "composite": ("c.png", io.BytesIO(b"not a png"), "image/png"),
            "mask": ("m.png", io.BytesIO(encode_image(np.zeros((8, 8)))), "image/png"),
        }
        resp = client.post("/v1/session", files=parts)
        assert resp.status_code == 400
        assert "composite" in resp.json()["detail"]

    def test_unknown_session_404(self, client):
        resp = client.get(f"/v1/session/{uuid.uuid4()}/params")
        assert resp.status_code == 404


class TestPredict:
    def test_predict_returns_near_identity_params_for_zero_heads(self, client):
        _, _, sid = open_session(client, np.random.default_rng(3))
        resp = client.post(f"/v1/session/{sid}/predict")
        assert resp.status_code == 200, resp.text
        doc = resp.json()
        params = parse_params(json.dumps(doc["params"]))
        assert np.array_equal(params.curves.nodes[:, :, 1], np.full((3, 32), 0.5))
        assert np.array_equal(params.shading.grid, np.ones((64, 64)))
        assert doc["preview_url"].endswith("/preview")

    def test_predict_then_get_params_round_trips(self, client):
        _, _, sid = open_session(client, np.random.default_rng(4))
        predicted = client.post(f"/v1/session/{sid}/predict").json()["params"]
        got = client.get(f"/v1/session/{sid}/params").json()
        assert got == predicted

    def test_preview_dims_bounded(self, client):
        _, _, sid = open_session(client, np.random.default_rng(5), h=96, w=640)
        client.post(f"/v1/session/{sid}/predict")
        png = client.get(f"/v1/session/{sid}/preview").content
        img = decode_image(png)
        assert max(img.shape[:2]) <= 512

    def test_no_checkpoint_503(self, client_no_checkpoint):
        _, _, sid = open_session(client_no_checkpoint, np.random.default_rng(6))
        resp = client_no_checkpoint.post(f"/v1/session/{sid}/predict")
        assert resp.status_code == 503


class TestParamsEndpoint:
    def test_put_identity_preview_matches_composite(self, client):
        comp, _, sid = open_session(client, np.random.default_rng(7))
        resp = client.put(
            f"/v1/session/{sid}/params", content=serialize_params(identity_params())
        )
        assert resp.status_code == 200, resp.text
        png = client.get(f"/v1/session/{sid}/preview").content
        preview = decode_image(png)
        # small upload: preview is the composite at native size
        expected = decode_image(encode_image(comp))
        assert np.array_equal(preview, expected)

    def test_put_non_monotone_x_422_with_field(self, client):
        _, _, sid = open_session(client, np.random.default_rng(8))
        doc = json.loads(serialize_params(identity_params()))
        doc["curves"][1][4][0] = doc["curves"][1][9][0]
        resp = client.put(f"/v1/session/{sid}/params", content=json.dumps(doc))
        assert resp.status_code == 422
        assert "curves[1]" in resp.json()["detail"]["field"]

    def test_put_then_get_identical(self, client):
        _, _, sid = open_session(client, np.random.default_rng(9))
        doc = json.loads(serialize_params(identity_params()))
        doc["shading"][10][20] = 1.5
        client.put(f"/v1/session/{sid}/params", content=json.dumps(doc))
        assert client.get(f"/v1/session/{sid}/params").json() == doc

    def test_get_params_before_any_409(self, client):
        _, _, sid = open_session(client, np.random.default_rng(10))
        assert client.get(f"/v1/session/{sid}/params").status_code == 409


class TestRender:
    def test_render_before_params_409(self, client):
        _, _, sid = open_session(client, np.random.default_rng(11))
        assert client.get(f"/v1/session/{sid}/render").status_code == 409

    def test_identity_render_byte_equal_to_upload(self, client):
        comp, _, sid = open_session(client, np.random.default_rng(12))
        client.put(f"/v1/session/{sid}/params", content=serialize_params(identity_params()))
        png = client.get(f"/v1/session/{sid}/render?scale=full").content
        rendered = decode_image(png)
        uploaded = decode_image(encode_image(comp))
        assert rendered.tobytes() == uploaded.tobytes()

    def test_background_immutable_for_any_params(self, client):
        rng = np.random.default_rng(13)
        comp, mask, sid = open_session(client, rng)
        doc = json.loads(serialize_params(identity_params()))
        for c in range(3):
            for k in range(32):
                doc["curves"][c][k][1] = float(np.clip(doc["curves"][c][k][1] + 0.3, 0, 1))
        client.put(f"/v1/session/{sid}/params", content=json.dumps(doc))
        rendered = decode_image(client.get(f"/v1/session/{sid}/render").content)
        uploaded = decode_image(encode_image(comp))
        bg = mask == 0.0
        assert np.array_equal(rendered[bg], uploaded[bg])

    def test_full_render_downsampled_matches_preview(self, client):
        rng = np.random.default_rng(14)
        # smooth image so resampling order barely matters
        base = np.zeros((600, 600, 3))
        yy, xx = np.mgrid[0:600, 0:600] / 600
        base[:, :, 0] = 0.3 + 0.4 * yy
        base[:, :, 1] = 0.5 - 0.2 * xx
        base[:, :, 2] = 0.4 + 0.2 * yy * xx
        mask = np.zeros((600, 600))
        mask[150:450, 150:450] = 1.0
        parts = {
            "composite": ("c.png", io.BytesIO(encode_image(base)), "image/png"),
            "mask": ("m.png", io.BytesIO(encode_image(mask)), "image/png"),
            "background": ("b.png", io.BytesIO(encode_image(base)), "image/png"),
        }
        sid = client.post("/v1/session", files=parts).json()["session_id"]
        doc = json.loads(serialize_params(identity_params()))
        for row in doc["shading"]:
            for i in range(len(row)):
                row[i] = 0.8
        client.put(f"/v1/session/{sid}/params", content=json.dumps(doc))
        from harmonia.image import resize_bilinear

        full = decode_image(client.get(f"/v1/session/{sid}/render?scale=full").content)
        preview = decode_image(client.get(f"/v1/session/{sid}/preview").content)
        down = resize_bilinear(full, preview.shape[0], preview.shape[1])
        assert np.mean(np.abs(down - preview)) < 2.0 / 255.0

    def test_bad_scale_rejected(self, client):
        _, _, sid = open_session(client, np.random.default_rng(15))
        client.put(f"/v1/session/{sid}/params", content=serialize_params(identity_params()))
        assert client.get(f"/v1/session/{sid}/render?scale=giant").status_code == 400


class TestUploadLimit:
    def test_oversized_upload_413(self, checkpoint):
        from harmonia.service import create_app

        client = TestClient(create_app(checkpoint=checkpoint, max_upload_mb=0))
        rng = np.random.default_rng(16)
        parts = {
            "composite": ("c.png", io.BytesIO(encode_image(rng.random((64, 64, 3)))), "image/png"),
            "mask": ("m.png", io.BytesIO(encode_image(np.zeros((64, 64)))), "image/png"),
        }
        assert client.post("/v1/session", files=parts).status_code == 413


class TestSessionExpiry:
    def test_expired_session_404(self, checkpoint):
        from harmonia.service import create_app

        client = TestClient(create_app(checkpoint=checkpoint, session_ttl_secs=0.0))
        rng = np.random.default_rng(17)
        _, _, sid = open_session(client, rng)
        import time

        time.sleep(0.01)
        assert client.get(f"/v1/session/{sid}/params").status_code == 404


class TestEndToEnd:
    def test_full_contract_session_predict_put_render(self, client):
        """session -> predict -> PUT identity -> render equals upload byte for byte."""
        rng = np.random.default_rng(18)
        comp, mask, sid = open_session(client, rng, h=80, w=64)

        predict = client.post(f"/v1/session/{sid}/predict")
        assert predict.status_code == 200
        params = parse_params(json.dumps(predict.json()["params"]))
        assert np.array_equal(params.shading.grid, np.ones((64, 64)))

        put = client.put(f"/v1/session/{sid}/params", content=serialize_params(identity_params()))
        assert put.status_code == 200

        got = client.get(f"/v1/session/{sid}/params")
        assert got.status_code == 200
        assert parse_params(json.dumps(got.json())).curves.nodes[0, 0, 0] == 0.0

        rendered = decode_image(client.get(f"/v1/session/{sid}/render?scale=full").content)
        uploaded = decode_image(encode_image(comp))
        assert rendered.tobytes() == uploaded.tobytes()
