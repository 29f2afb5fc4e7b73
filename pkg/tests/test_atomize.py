import pytest

from atomlith.atomize import (
    Atom,
    atomize_corpus,
    atomize_structured,
    atomize_unstructured,
    read_atoms,
    write_atoms,
)
from atomlith.corpus import Chunk
from atomlith.errors import GenerationError, ParseError, TransportError
from atomlith.genclient import FixedResponseClient, StubGenerationClient, render_prompt


class FailingClient:
    def generate(self, request):
        raise TransportError("boom", status=500)


def test_structured_three_sentences():
    chunk = Chunk("c0", "A b. C d? E f!")
    atoms = atomize_structured(chunk)
    assert [a.text for a in atoms] == ["A b.", "C d?", "E f!"]
    assert [a.index for a in atoms] == [0, 1, 2]
    assert all(a.kind == "structured" for a in atoms)
    assert all(a.chunk_id == "c0" for a in atoms)


def test_structured_no_terminator_single_atom():
    atoms = atomize_structured(Chunk("c0", "no terminator here"))
    assert len(atoms) == 1
    assert atoms[0].text == "no terminator here"


def test_structured_is_deterministic():
    chunk = Chunk("c9", "First part. Second part. Third part.")
    assert atomize_structured(chunk) == atomize_structured(chunk)


def test_unstructured_with_echo_stub_matches_sentences():
    chunk = Chunk("c0", "The sky darkened. Rain began falling.")
    atoms = atomize_unstructured(chunk, StubGenerationClient())
    assert [a.text for a in atoms] == ["The sky darkened.", "Rain began falling."]
    assert all(a.kind == "unstructured" for a in atoms)


def test_unstructured_cleans_list_markers():
    chunk = Chunk("c0", "Stars formed early. Gas kept cooling.")
    prompt = render_prompt("atomize", {"chunk": chunk.text})
    client = FixedResponseClient({prompt: "- Fact one.\n\n2. Fact two."})
    atoms = atomize_unstructured(chunk, client)
    assert [a.text for a in atoms] == ["Fact one.", "Fact two."]


def test_unstructured_empty_generation_falls_back_to_sentences(caplog):
    chunk = Chunk("c0", "One sentence here. Another sentence there.")
    client = FixedResponseClient({}, default="")
    with caplog.at_level("WARNING"):
        atoms = atomize_unstructured(chunk, client)
    assert [a.text for a in atoms] == ["One sentence here.", "Another sentence there."]
    assert all(a.kind == "unstructured" for a in atoms)
    assert any("falling back" in rec.message for rec in caplog.records)


def test_unstructured_failure_names_chunk():
    with pytest.raises(GenerationError, match="c77"):
        atomize_unstructured(Chunk("c77", "Some text."), FailingClient())


def test_unstructured_caps_at_max_atoms():
    chunk = Chunk("c0", "Topic sentence.")
    prompt = render_prompt("atomize", {"chunk": chunk.text})
    client = FixedResponseClient({prompt: "\n".join(f"fact number {i}" for i in range(99))})
    atoms = atomize_unstructured(chunk, client, max_atoms=50)
    assert len(atoms) == 50


def test_atomize_corpus_preserves_chunk_order():
    chunks = [Chunk(f"c{i}", f"Sentence number {i} stands alone.") for i in range(5)]
    atoms = atomize_corpus(chunks, "structured")
    assert [a.chunk_id for a in atoms] == [f"c{i}" for i in range(5)]


def test_atomize_corpus_unknown_mode():
    with pytest.raises(ValueError, match="mode"):
        atomize_corpus([Chunk("c0", "Text here.")], "freeform")


def test_atoms_jsonl_roundtrip(tmp_path):
    atoms = [
        Atom("c0-a000", "c0", "structured", 0, "First."),
        Atom("c0-a001", "c0", "structured", 1, "Second."),
    ]
    path = tmp_path / "atoms.jsonl"
    write_atoms(path, atoms)
    assert read_atoms(path) == atoms


def test_read_atoms_rejects_bad_kind(tmp_path):
    path = tmp_path / "atoms.jsonl"
    path.write_text(
        '{"atom_id": "a", "chunk_id": "c", "kind": "mystery", "index": 0, "text": "x y z"}\n',
        encoding="utf-8",
    )
    with pytest.raises(ParseError, match="atoms.jsonl:1"):
        read_atoms(path)
