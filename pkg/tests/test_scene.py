import json
import random

import pytest

from nlvrkit.scene import (
    Box,
    CorpusError,
    Example,
    Obj,
    Scene,
    example_from_json,
    example_to_json,
    load_corpus,
    save_corpus,
    scene_from_json,
    scene_to_json,
    tokenize,
)


def make_obj(x=5, y=10, color="black", shape="circle", size="small"):
    return Obj(x, y, color, shape, size)


def make_scene(objs_per_box=1):
    boxes = tuple(
        Box(tuple(make_obj(x=i * 3 + j, y=j * 7 % 100) for j in range(objs_per_box)))
        for i in range(3)
    )
    return Scene(boxes, id="s")


def test_obj_validation():
    make_obj()
    with pytest.raises(CorpusError):
        make_obj(x=100)
    with pytest.raises(CorpusError):
        make_obj(color="red")
    with pytest.raises(CorpusError):
        make_obj(shape="hexagon")
    with pytest.raises(CorpusError):
        make_obj(size="huge")


def test_box_and_scene_invariants():
    with pytest.raises(CorpusError):
        Box(())
    with pytest.raises(CorpusError):
        Box(tuple(make_obj(x=i) for i in range(9)))
    with pytest.raises(CorpusError):
        Scene((Box((make_obj(),)),) * 4)


def test_tokenize():
    assert tokenize("There is a Yellow object.") == ("there", "is", "a", "yellow", "object")
    assert tokenize("exactly 2 squares!") == ("exactly", "2", "squares")
    assert tokenize("  spaced   out  ") == ("spaced", "out")


def test_scene_round_trip_minimal_and_maximal():
    for n in (1, 8):
        scene = make_scene(objs_per_box=n)
        assert scene_from_json(scene_to_json(scene), scene_id="s") == scene


def test_scene_round_trip_all_attributes():
    objs = tuple(
        Obj(i, i, c, s, z)
        for i, (c, s, z) in enumerate(
            [("black", "triangle", "small"), ("blue", "square", "medium"),
             ("yellow", "circle", "large")]
        )
    )
    scene = Scene((Box(objs), Box(objs), Box(objs)), id="s")
    assert scene_from_json(scene_to_json(scene), scene_id="s") == scene


def _example_dict(n_boxes=3):
    scene = {
        "denotation": True,
        "boxes": [
            [{"x": 1, "y": 2, "color": "black", "shape": "circle", "size": "small"}]
        ]
        * n_boxes,
    }
    return {"id": "ex-1", "utterance": "there is a black object", "scenes": [scene] * 4}


def test_load_corpus_round_trip(tmp_path):
    path = tmp_path / "corpus.json"
    with open(path, "w") as f:
        json.dump([_example_dict()], f)
    corpus = load_corpus(path)
    assert len(corpus) == 1
    ex = corpus[0]
    assert len(ex.scenes) == 4
    assert ex.utterance == ("there", "is", "a", "black", "object")

    save_corpus(corpus, tmp_path / "again.json")
    assert load_corpus(tmp_path / "again.json") == corpus


def test_load_corpus_names_offending_example(tmp_path):
    path = tmp_path / "bad.json"
    with open(path, "w") as f:
        json.dump([_example_dict(n_boxes=4)], f)
    with pytest.raises(CorpusError, match="ex-1"):
        load_corpus(path)


def test_load_corpus_empty_file(tmp_path):
    path = tmp_path / "empty.json"
    path.write_text("")
    assert load_corpus(path) == []


def test_example_json_round_trip():
    ex = example_from_json(_example_dict())
    assert example_from_json(example_to_json(ex)) == ex


def test_example_requires_four_scenes():
    scene = make_scene()
    with pytest.raises(CorpusError, match="expected 4"):
        Example(id="x", utterance=("hi",), scenes=((scene, True),) * 3)
