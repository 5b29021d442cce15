from __future__ import annotations

import json

import pytest
from hypothesis import given, settings

from conftest import dataset_st, mkbox, mkpage, mkreg, mktok
from proctag.ingest import (Dataset, InstructionRecord, IoFailure,
                            MalformedLine, MissingPage, clamp_page,
                            load_dataset, load_page, validate_dataset,
                            validate_page, write_dataset, write_page)


def _write_min_dataset(tmp_path, lines):
    records = tmp_path / "records.jsonl"
    records.write_text("\n".join(lines) + "\n", encoding="utf-8")
    pages = tmp_path / "pages"
    pages.mkdir(exist_ok=True)
    page = mkpage("p1", tokens=[mktok("hello", 10, 10, 60, 25)])
    write_page(page, pages / "p1.json")
    return records


def _line(record_id, page_id="p1", question="What is shown?"):
    return json.dumps({"record_id": record_id, "page_id": page_id,
                       "question": question, "answers": ["x"]})


class TestLoadDataset:
    def test_three_valid_lines_order_preserved(self, tmp_path):
        path = _write_min_dataset(tmp_path, [_line("r1"), _line("r2"), _line("r3")])
        ds = load_dataset(path)
        assert [r.record_id for r in ds.records] == ["r1", "r2", "r3"]
        assert set(ds.pages) == {"p1"}

    def test_empty_file(self, tmp_path):
        records = tmp_path / "records.jsonl"
        records.write_text("", encoding="utf-8")
        ds = load_dataset(records)
        assert ds.records == [] and ds.pages == {}

    def test_truncated_line_reports_line_number(self, tmp_path):
        path = _write_min_dataset(tmp_path, [_line("r1"), '{"record_id": "r2", "page'])
        with pytest.raises(MalformedLine) as exc:
            load_dataset(path)
        assert exc.value.line_no == 2

    def test_missing_page(self, tmp_path):
        path = _write_min_dataset(tmp_path, [_line("r1", page_id="ghost")])
        with pytest.raises(MissingPage) as exc:
            load_dataset(path)
        assert exc.value.page_id == "ghost"

    def test_missing_required_field(self, tmp_path):
        path = _write_min_dataset(tmp_path, ['{"record_id": "r1", "page_id": "p1"}'])
        with pytest.raises(MalformedLine):
            load_dataset(path)

    def test_out_of_bounds_box_clamped_on_load(self, tmp_path, caplog):
        pages = tmp_path / "pages"
        pages.mkdir()
        page = mkpage("p1", tokens=[mktok("edge", 990, 10, 1020, 25)])
        write_page(page, pages / "p1.json")
        loaded = load_page(pages / "p1.json")
        assert loaded.tokens[0].bbox.x1 == 1000.0


class TestValidatePage:
    def test_inverted_box(self):
        page = mkpage(tokens=[mktok("a", 50, 10, 20, 25)])
        violations = validate_page(page)
        assert len(violations) == 1
        assert violations[0].code == "bbox_inverted"
        assert violations[0].path == "tokens[0].bbox"

    def test_out_of_bounds_box(self):
        page = mkpage(tokens=[mktok("a", 10, 10, 1200, 25)])
        codes = [v.code for v in validate_page(page)]
        assert codes == ["bbox_out_of_bounds"]

    def test_conforming_page(self):
        page = mkpage(tokens=[mktok("a", 10, 10, 40, 25, confidence=0.9)],
                      regions=[mkreg("table", 0, 0, 500, 600, score=0.8)])
        assert validate_page(page) == []

    @pytest.mark.parametrize("page,code", [
        (mkpage(tokens=[mktok("   ", 0, 0, 10, 10)]), "empty_text"),
        (mkpage(tokens=[mktok("a", 0, 0, float("nan"), 10)]), "bbox_nonfinite"),
        (mkpage(tokens=[mktok("a", -5, 0, 10, 10)]), "bbox_negative"),
        (mkpage(tokens=[mktok("a", 0, 0, 10, 10, confidence=1.5)]), "bad_confidence"),
        (mkpage(regions=[mkreg("", 0, 0, 10, 10)]), "empty_kind"),
        (mkpage(regions=[mkreg("table", 0, 0, 10, 10, score=-0.1)]), "bad_score"),
        (mkpage(width=0), "bad_page_size"),
    ])
    def test_each_invariant_triggers_exactly_one_violation(self, page, code):
        violations = validate_page(page)
        assert [v.code for v in violations] == [code]

    def test_duplicate_record_id_flagged(self):
        page = mkpage("p1")
        ds = Dataset(records=[
            InstructionRecord("r1", "p1", "q"), InstructionRecord("r1", "p1", "q"),
        ], pages={"p1": page})
        codes = [v.code for v in validate_dataset(ds)]
        assert codes == ["duplicate_record_id"]


class TestWriteDataset:
    def test_round_trip_small(self, tmp_path):
        ds = Dataset(
            records=[InstructionRecord("r1", "p1", "What total?", ["12", "12.0"])],
            pages={"p1": mkpage("p1", tokens=[mktok("total", 5, 5, 55, 20)],
                                regions=[mkreg("table", 0, 0, 300, 200, score=0.5)])})
        write_dataset(ds, tmp_path / "records.jsonl")
        assert load_dataset(tmp_path / "records.jsonl") == ds

    def test_annotations_preserved(self, tmp_path):
        ann = {"process": {"steps": [{"fn": "find_table"}], "attempts": 2},
               "tags": {"raw": ["find_table"]}}
        ds = Dataset(records=[InstructionRecord("r1", "p1", "q", ["a"], annotations=ann)],
                     pages={"p1": mkpage("p1")})
        write_dataset(ds, tmp_path / "records.jsonl")
        reloaded = load_dataset(tmp_path / "records.jsonl")
        assert reloaded.records[0].annotations == ann

    def test_unwritable_path(self, tmp_path):
        blocker = tmp_path / "blocker"
        blocker.write_text("file, not a dir", encoding="utf-8")
        ds = Dataset(records=[], pages={})
        with pytest.raises(IoFailure):
            write_dataset(ds, blocker / "sub" / "records.jsonl")

    def test_hostile_page_id_rejected(self, tmp_path):
        ds = Dataset(records=[], pages={"../escape": mkpage("../escape")})
        with pytest.raises(IoFailure, match="filesystem-safe"):
            write_dataset(ds, tmp_path / "records.jsonl")

    @settings(max_examples=40, deadline=None)
    @given(ds=dataset_st())
    def test_round_trip_property(self, tmp_path_factory, ds):
        root = tmp_path_factory.mktemp("roundtrip")
        write_dataset(ds, root / "records.jsonl")
        assert load_dataset(root / "records.jsonl") == ds


class TestClamp:
    def test_clamp_counts_boxes(self):
        page = mkpage(tokens=[mktok("a", -5, 10, 40, 25), mktok("b", 0, 0, 10, 10)])
        clamped, changed = clamp_page(page)
        assert changed == 1
        assert clamped.tokens[0].bbox == mkbox(0, 10, 40, 25)
        assert clamped.tokens[1] == page.tokens[1]

    def test_valid_page_untouched(self):
        page = mkpage(tokens=[mktok("a", 0, 0, 10, 10)])
        clamped, changed = clamp_page(page)
        assert changed == 0 and clamped is page
