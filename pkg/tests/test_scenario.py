import pytest
from hypothesis import given, strategies as st

from snowsim.baseband import ALLOWED_BANDWIDTHS
from snowsim.scenario import (
    BsSpec,
    NodeSpec,
    Scenario,
    ScenarioError,
    WorldSpec,
    load_scenario,
    parse_scenario,
    write_scenario,
)

MINIMAL = """
[bs]
id = BS1
location = 0 0
channel = 21

[node]
id = n1
location = 100 0
"""


def test_minimal_file_is_valid():
    scn = parse_scenario(MINIMAL)
    assert [b.id for b in scn.bss] == ["BS1"]
    assert scn.nodes[0].location == (100.0, 0.0)
    assert scn.bss[0].subcarrier_bandwidth == 200e3
    assert scn.world == WorldSpec()


def test_defaults_apply():
    scn = parse_scenario("")
    assert scn.bss == () and scn.nodes == ()
    assert scn.policy.cfo_compensation is True
    assert scn.world.noise_floor_dbm == -124.0


def test_disallowed_width_names_allowed_set():
    text = MINIMAL.replace("channel = 21", "channel = 21\nsubcarrier_bandwidth = 300000")
    with pytest.raises(ScenarioError) as exc:
        parse_scenario(text)
    msg = str(exc.value)
    assert "300 kHz" in msg
    for bw in ALLOWED_BANDWIDTHS:
        assert f"{int(bw / 1e3)} kHz" in msg
    assert exc.value.issues[0].line == 6


def test_every_problem_is_reported_with_its_line():
    text = "[world]\nhorizon = -1\n\n[node]\nid = a\nspeed = 3\nbs = nowhere\n"
    with pytest.raises(ScenarioError) as exc:
        parse_scenario(text)
    by_field = {i.field: i.line for i in exc.value.issues}
    assert by_field["world.horizon"] == 2
    assert by_field["node[0].bs"] == 7
    assert by_field["node[0].waypoints"] == 4  # missing key points at the section header


def test_bad_value_types():
    with pytest.raises(ScenarioError) as exc:
        parse_scenario("[world]\nhorizon = soon\nseed = 1.5\n[policy]\nack = maybe\n")
    assert {i.line for i in exc.value.issues} == {2, 3, 5}


def test_unknown_key_only_fails_when_strict():
    text = MINIMAL + "colour = blue\n"
    parse_scenario(text)
    with pytest.raises(ScenarioError) as exc:
        parse_scenario(text, strict=True)
    assert exc.value.issues[0].field == "node.colour"


def test_structural_errors():
    with pytest.raises(ScenarioError):
        parse_scenario("[world]\n[world]\n")
    with pytest.raises(ScenarioError):
        parse_scenario("[planet]\nx = 1\n")
    with pytest.raises(ScenarioError):
        parse_scenario("horizon = 3\n")
    with pytest.raises(ScenarioError):
        parse_scenario("[world]\nhorizon\n")


def test_band_must_stay_in_uhf():
    with pytest.raises(ScenarioError):
        parse_scenario("[bs]\nid = B\nchannel = 51\nbandwidth = 12000000\n")


def test_duplicate_ids_rejected():
    with pytest.raises(ScenarioError):
        parse_scenario(MINIMAL + "\n[node]\nid = n1\n")


@pytest.mark.parametrize("name", ["metro.scn", "hallway.scn", "widths.scn", "energy.scn", "fidelity.scn"])
def test_bundled_fixtures_are_valid(fixtures, name):
    scn = load_scenario(fixtures / name, strict=True)
    assert scn.nodes


def test_metro_reads_its_station_file(fixtures):
    scn = load_scenario(fixtures / "metro.scn")
    assert len(scn.stations()) > 0


def test_missing_file_is_a_scenario_error(tmp_path):
    with pytest.raises(ScenarioError):
        load_scenario(tmp_path / "nope.scn")


def test_round_trip_fixture(fixtures):
    scn = load_scenario(fixtures / "hallway.scn")
    assert parse_scenario(write_scenario(scn)) == scn


ids = st.text("abcdefghij0123456789", min_size=1, max_size=6)
coords = st.tuples(st.floats(-5000, 5000), st.floats(-5000, 5000))


@given(
    st.lists(ids, min_size=1, max_size=3, unique=True),
    st.lists(st.tuples(ids, coords, st.floats(0, 40), st.floats(-20, 20)), max_size=4, unique_by=lambda t: t[0]),
    st.sampled_from(ALLOWED_BANDWIDTHS),
)
def test_round_trip_property(bs_ids, nodes, width):
    bss = tuple(BsSpec(id=b, channel=21 + k, subcarrier_bandwidth=width) for k, b in enumerate(bs_ids))
    ns = tuple(
        NodeSpec(id=i, location=loc, speed=v, waypoints=((0.0, 0.0),) if v > 0 else (), ppm=ppm, bs=bs_ids[0])
        for i, loc, v, ppm in nodes
    )
    scn = Scenario(bss=bss, nodes=ns, meta=(("label", "x"),))
    assert parse_scenario(write_scenario(scn)) == scn


def test_omitted_fields_take_published_defaults():
    scn = parse_scenario(MINIMAL)
    b, n, p = scn.bss[0], scn.nodes[0], scn.policy
    assert p.modulation == "ook"
    assert n.packet_bytes == 40
    assert b.bandwidth == 6e6 and b.subcarrier_bandwidth == 200e3
    assert n.tx_power_dbm == 15.0 and b.tx_power_dbm == 15.0
    assert p.sensitivity_dbm == -110.0


def test_detroit_topology(fixtures):
    scn = load_scenario(fixtures / "metro.scn")
    assert scn.meta_dict["label"] == "detroit"
    (x1, y1), (x2, y2) = (b.location for b in scn.bss)
    assert abs(x2 - x1) + abs(y2 - y1) == pytest.approx(900)
    assert sum(1 for nd in scn.nodes if nd.speed > 0) == 7
