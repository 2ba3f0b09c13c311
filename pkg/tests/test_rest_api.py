import json
import urllib.request

import pytest

from odaframe.config import config_from_dict
from odaframe.daemon import Daemon
from odaframe.sensors import NS_PER_S, SensorReading


def http(method, url, body=None):
    req = urllib.request.Request(url, method=method,
                                 data=body.encode() if body else None)
    try:
        with urllib.request.urlopen(req, timeout=10) as resp:
            return resp.status, json.loads(resp.read())
    except urllib.error.HTTPError as exc:
        return exc.code, json.loads(exc.read())


@pytest.fixture
def pusher():
    cfg = config_from_dict({
        "role": "pusher",
        "rest_listen": "127.0.0.1:0",
        "cache": {"capacity_s": 3600},
    })
    d = Daemon(cfg, real_time=False)
    d.start()
    for n in ("n1", "n2", "n3"):
        cache = d.registry.register(f"/{n}/in")
        for i in range(1, 11):
            cache.store(SensorReading(value=i, timestamp=i * NS_PER_S))
    yield d, f"http://127.0.0.1:{d.rest.address[1]}"
    d.stop()


IDENTITY_BODY = """\
- name: i0
  mode: on-demand
  template:
    input: ["<bottomup>in"]
    output: ["<bottomup>out"]
"""


class TestSensors:
    def test_prefix_listing_matches_tree(self, pusher):
        d, base = pusher
        _, doc = http("GET", f"{base}/sensors?prefix=/")
        assert doc["topics"] == [t.path for t in d.registry.tree().topics()]
        _, doc = http("GET", f"{base}/sensors?prefix=/n1")
        assert doc["topics"] == ["/n1/in"]

    def test_no_match_is_empty(self, pusher):
        _, base = pusher
        status, doc = http("GET", f"{base}/sensors?prefix=/zzz")
        assert status == 200 and doc["topics"] == []


class TestData:
    def test_rel_zero_returns_newest(self, pusher):
        d, base = pusher
        status, doc = http("GET", f"{base}/data?sensor=/n1/in&rel=0")
        assert status == 200
        assert doc["readings"] == [{"t": 10 * NS_PER_S, "v": 10}]

    def test_matches_engine_bypass(self, pusher):
        d, base = pusher
        _, doc = http("GET",
                      f"{base}/data?sensor=/n1/in&t0={2 * NS_PER_S}&t1={5 * NS_PER_S}")
        from odaframe.query import QueryRequest
        direct = d.query.query(QueryRequest("/n1/in", t0=2 * NS_PER_S, t1=5 * NS_PER_S))
        assert doc["readings"] == [{"t": r.timestamp, "v": r.value}
                                   for r in direct.readings]
        assert doc["partial"] == direct.partial

    def test_unknown_sensor_404(self, pusher):
        _, base = pusher
        status, doc = http("GET", f"{base}/data?sensor=/nope&rel=0")
        assert status == 404 and doc["code"] == "unknown-sensor"

    def test_invalid_range_400(self, pusher):
        _, base = pusher
        status, doc = http("GET", f"{base}/data?sensor=/n1/in&t0=5&t1=2")
        assert status == 400

    def test_both_range_kinds_400(self, pusher):
        _, base = pusher
        status, doc = http("GET", f"{base}/data?sensor=/n1/in&rel=1&t0=1&t1=2")
        assert status == 400


class TestPluginsAndOperators:
    def test_load_start_stop_cycle(self, pusher):
        d, base = pusher
        status, doc = http("POST", f"{base}/plugins/identity/load", IDENTITY_BODY)
        assert status == 200
        assert doc["operators"][0]["blocks"] == 3

        status, doc = http("PUT", f"{base}/operators/identity/i0/start")
        assert status == 200 and doc["result"] == "running"
        _, doc = http("GET", f"{base}/operators")
        assert doc["plugins"]["identity"]["i0"]["state"] == "running"

        status, doc = http("PUT", f"{base}/operators/identity/i0/stop")
        assert doc["result"] == "stopped"

    def test_load_unknown_plugin_404(self, pusher):
        _, base = pusher
        status, doc = http("POST", f"{base}/plugins/nosuch/load", IDENTITY_BODY)
        assert status == 404 and doc["code"] == "unknown-plugin"

    def test_malformed_body_is_parse_error(self, pusher):
        _, base = pusher
        status, doc = http("POST", f"{base}/plugins/identity/load", "{bad yaml: [")
        assert status == 400 and doc["code"] == "parse-error"

    def test_reload_reports_replacement(self, pusher):
        _, base = pusher
        http("POST", f"{base}/plugins/identity/load", IDENTITY_BODY)
        status, doc = http("POST", f"{base}/plugins/identity/load", IDENTITY_BODY)
        assert status == 200  # replaced after stop, reported as a fresh load
        assert doc["operators"][0]["name"] == "i0"

    def test_custom_action_routing(self, pusher):
        d, base = pusher
        d.registry.register("/n1/power").store(
            SensorReading(value=5, timestamp=NS_PER_S))
        body = """\
- name: r0
  template:
    input: ["<bottomup>in"]
    output: ["<bottomup>pred"]
  params: {target: "<bottomup>in", min_train_size: 1000000}
"""
        status, doc = http("POST", f"{base}/plugins/regressor/load", body)
        assert status == 200
        status, doc = http("PUT", f"{base}/operators/regressor/r0/train")
        assert status == 200 and doc["result"].startswith("not-enough-data")

    def test_undeclared_action_404(self, pusher):
        _, base = pusher
        http("POST", f"{base}/plugins/identity/load", IDENTITY_BODY)
        status, doc = http("PUT", f"{base}/operators/identity/i0/frobnicate")
        assert status == 404 and doc["code"] == "unknown-action"


class TestCompute:
    def test_on_demand_block_path(self, pusher):
        d, base = pusher
        http("POST", f"{base}/plugins/identity/load", IDENTITY_BODY)
        status, doc = http("GET", f"{base}/compute/identity/i0/n1/")
        assert status == 200
        assert doc["outputs"][0]["topic"] == "/n1/out"
        assert doc["outputs"][0]["value"] == 10

    def test_matches_direct_framework_call(self, pusher):
        d, base = pusher
        http("POST", f"{base}/plugins/identity/load", IDENTITY_BODY)
        _, doc = http("GET", f"{base}/compute/identity/i0/n2/")
        direct = d.manager.on_demand("identity", "i0", "/n2/")
        assert doc["outputs"][0]["topic"] == direct[0][0]
        assert doc["outputs"][0]["value"] == direct[0][1].value

    def test_wrong_mode_400(self, pusher):
        d, base = pusher
        online = IDENTITY_BODY.replace("on-demand", "online")
        http("POST", f"{base}/plugins/identity/load", online)
        status, doc = http("GET", f"{base}/compute/identity/i0/n1/")
        assert status == 400 and doc["code"] == "wrong-mode"

    def test_unknown_block_404(self, pusher):
        _, base = pusher
        http("POST", f"{base}/plugins/identity/load", IDENTITY_BODY)
        status, doc = http("GET", f"{base}/compute/identity/i0/zzz/")
        assert status == 404 and doc["code"] == "unknown-block"


class TestJobs:
    def test_inject_and_list(self, pusher):
        _, base = pusher
        job = {"job_id": "j1", "user_id": "u", "node_list": ["/n1/"],
               "start_ns": 1, "end_ns": None}
        status, doc = http("POST", f"{base}/jobs", json.dumps(job))
        assert status == 200 and doc["added"] == "j1"
        _, doc = http("GET", f"{base}/jobs")
        assert doc["jobs"][0]["job_id"] == "j1"

    def test_status_route(self, pusher):
        _, base = pusher
        status, doc = http("GET", f"{base}/status")
        assert status == 200 and doc["role"] == "pusher"
