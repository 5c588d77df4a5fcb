import json

import pandas as pd
import pytest

from conftest import fourfold_rows, make_events
from entanglement.errors import EmptyDataError, MalformedInputError
from entanglement.state import RunReport
from entanglement.witness import witness_statistic
from tools.config_tools import ExperimentConfig, config_to_flat
from tools.io_tools import (config_echo_path, is_count_table, read_all_events, read_config_echo, read_count_table,
                            read_events, report_json, write_config_echo, write_count_table, write_events)
from tools.simulation_tools import iter_event_blocks

HEADER = "time_ps,detector,pulse_index,setting_x,setting_y,path_tag\n"


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def test_event_stream_written_and_read_back(tmp_path, fast_config):
    path = tmp_path / "events.csv"
    blocks = list(iter_event_blocks(fast_config))
    rows = write_events(blocks, path)
    events = read_all_events(path)
    assert rows == len(events) == sum(len(b) for b in blocks)
    pd.testing.assert_frame_equal(events, pd.concat(blocks, ignore_index=True))


def test_streams_are_byte_identical_across_runs(tmp_path, fast_config):
    first, second = tmp_path / "a.csv", tmp_path / "b.csv"
    write_events(iter_event_blocks(fast_config), first)
    write_events(iter_event_blocks(fast_config), second)
    assert first.read_bytes() == second.read_bytes()


def test_times_are_written_as_exact_integers(tmp_path):
    path = tmp_path / "events.csv"
    write_events([make_events(fourfold_rows(123_456_789.001, 20.0))], path)
    lines = path.read_text().splitlines()
    assert lines[0] + "\n" == HEADER
    assert lines[1].startswith("123456789001,i+,")
    assert lines[1].endswith(",")


def test_chunked_reading(tmp_path):
    rows = []
    for k in range(5):
        rows += fourfold_rows(10_000.0 * (k + 1), 20.0)
    path = tmp_path / "events.csv"
    write_events([make_events(rows)], path)
    chunks = list(read_events(path, chunk_rows=3))
    assert [len(c) for c in chunks] == [3, 3, 3, 3, 3, 3, 2]


def test_unsorted_rows_report_their_line(tmp_path):
    path = _write(tmp_path / "events.csv", HEADER + "2000,i+,0,0,0,\n1000,s+,0,0,0,stored\n")
    with pytest.raises(MalformedInputError) as excinfo:
        read_all_events(path)
    assert excinfo.value.line == 3


def test_unsorted_rows_across_chunks(tmp_path):
    path = _write(tmp_path / "events.csv", HEADER + "1000,i+,0,0,0,\n3000,i-,0,0,0,\n2000,s+,0,0,0,stored\n")
    with pytest.raises(MalformedInputError) as excinfo:
        list(read_events(path, chunk_rows=2))
    assert excinfo.value.line == 4


@pytest.mark.parametrize("row, line", [
    ("1000,x+,0,0,0,", 2),
    ("1000,i+,0,2,0,", 2),
    ("1000,s+,0,0,0,lost", 2),
])
def test_invalid_fields_report_their_line(tmp_path, row, line):
    path = _write(tmp_path / "events.csv", HEADER + row + "\n")
    with pytest.raises(MalformedInputError) as excinfo:
        read_all_events(path)
    assert excinfo.value.line == line


def test_non_integer_time_reports_its_line(tmp_path):
    path = _write(tmp_path / "events.csv", HEADER + "1000,i+,0,0,0,\n10.5,s+,0,0,0,\n")
    with pytest.raises(MalformedInputError) as excinfo:
        read_all_events(path)
    assert excinfo.value.line == 3


def test_wrong_header(tmp_path):
    path = _write(tmp_path / "events.csv", "time,detector\n1,i+\n")
    with pytest.raises(MalformedInputError) as excinfo:
        read_all_events(path)
    assert excinfo.value.line == 1


def test_missing_event_file(tmp_path):
    with pytest.raises(MalformedInputError):
        read_all_events(tmp_path / "nothing.csv")


def test_header_only_stream_is_empty(tmp_path):
    path = _write(tmp_path / "events.csv", HEADER)
    assert len(read_all_events(path)) == 0


def test_config_echo(tmp_path):
    stream = tmp_path / "events.csv"
    assert config_echo_path(stream).name == "events.csv.config"
    assert read_config_echo(stream) is None
    flat = config_to_flat(ExperimentConfig(rng_seed=5))
    write_config_echo(flat, config_echo_path(stream))
    assert read_config_echo(stream) == flat


def test_count_table_round_trip(tmp_path, stored_table, stored_table_path):
    assert is_count_table(stored_table_path)
    path = tmp_path / "table.csv"
    write_count_table(stored_table, path)
    assert read_count_table(path).counts.tolist() == stored_table.counts.tolist()


def test_count_table_rows_accumulate(tmp_path):
    path = _write(tmp_path / "t.csv", "x,y,a,b,count\n0,0,1,1,3\n0,0,1,1,4\n1,1,-1,1,2\n")
    table = read_count_table(path)
    assert table.cell(0, 0, 1, 1) == 7
    assert witness_statistic(table).total == 9


@pytest.mark.parametrize("body, line", [
    ("0,0,1,1,3\n0,2,1,1,1\n", 3),
    ("0,0,1,1,-3\n", 2),
    ("0,0,1,1,three\n", 2),
    ("0,0,0,1,3\n", 2),
])
def test_invalid_count_table_rows(tmp_path, body, line):
    path = _write(tmp_path / "t.csv", "x,y,a,b,count\n" + body)
    with pytest.raises(MalformedInputError) as excinfo:
        read_count_table(path)
    assert excinfo.value.line == line


def test_empty_count_table(tmp_path):
    with pytest.raises(EmptyDataError):
        read_count_table(_write(tmp_path / "t.csv", "x,y,a,b,count\n"))


def test_report_json_is_sorted_and_stable():
    report = RunReport(source="events.csv", seed=3)
    text = report_json(report)
    assert json.loads(text)["source"] == "events.csv"
    assert text == report_json(RunReport(source="events.csv", seed=3))
    keys = list(json.loads(text))
    assert keys == sorted(keys)
