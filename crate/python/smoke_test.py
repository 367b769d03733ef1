#!/usr/bin/env python3
"""Builds the rrk_py extension with cargo and exercises the bindings:
config/tokenizer/model construction, document compression, index build and
lookup, listwise scoring, and the metric helpers.

maturin is not required; the cdylib is copied next to this script as
rrk_py.so and imported directly.
"""

import math
import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

HERE = Path(__file__).resolve().parent
ROOT = HERE.parent


def build_extension() -> None:
    subprocess.run(
        ["cargo", "build", "-p", "rrk-py"], cwd=ROOT, check=True
    )
    built = ROOT / "target" / "debug" / "librrk_py.so"
    if not built.exists():  # macOS name, kept for completeness
        built = ROOT / "target" / "debug" / "librrk_py.dylib"
    shutil.copy2(built, HERE / "rrk_py.so")


def main() -> None:
    build_extension()
    sys.path.insert(0, str(HERE))
    import rrk_py

    cfg = rrk_py.Config.micro(seed=7)
    assert cfg.mem_tokens == 2 and cfg.d_model == 16
    assert cfg.text_vocab() == 92 and cfg.sep_id() == 94 and cfg.pad_id() == 95

    tok = rrk_py.Tokenizer(cfg.text_vocab())
    query = tok.encode("t0b0 t0b1 q0f0 q0f1 q0f2 passage")
    assert len(query) == 6 and all(t < cfg.text_vocab() for t in query)
    assert tok.encode("same words, same ids: passage") == tok.encode(
        "same words  same ids  passage"
    )

    model = rrk_py.Model(cfg, init_seed=5)
    docs = [
        (f"d{i:04}", tok.encode(f"t0b{i % 4} passage filler{i}")) for i in range(8)
    ]

    block = model.compress_doc("d0000", docs[0][1], max_doc_len=128)
    assert len(block) == cfg.mem_tokens and len(block[0]) == cfg.d_model
    again = model.compress_doc("d0000", docs[0][1], max_doc_len=128)
    assert block == again, "compression must be deterministic"

    with tempfile.TemporaryDirectory() as tmp:
        index_path = Path(tmp) / "smoke.rrkidx"
        model.build_index(index_path, docs, max_doc_len=128)
        index = rrk_py.Index.open(index_path)
        assert len(index) == len(docs)
        assert index.mem_tokens == cfg.mem_tokens and index.d_model == cfg.d_model
        assert index.get("d0003") == model.compress_doc(
            "d0003", docs[3][1], max_doc_len=128
        ), "indexed embeddings must match inline compression"
        assert index.get("nope") is None

        candidates = [(doc_id, index.get(doc_id)) for doc_id, _ in docs[:5]]
        scored = model.rerank(query, candidates)
        assert [d for d, _ in scored] == [d for d, _ in docs[:5]]
        assert all(-1.0 <= s <= 1.0 for _, s in scored)
        assert scored == model.rerank(query, candidates)

    # Round-trip through a single-store checkpoint.
    with tempfile.TemporaryDirectory() as tmp:
        ckpt = Path(tmp) / "model.ckpt"
        model.save(ckpt, store="reranker", step=3)
        reloaded = rrk_py.Model.load(ckpt, store="reranker")
        assert reloaded.rerank(query, candidates) == scored
        try:
            rrk_py.Model.load(ckpt, store="compressor")
        except ValueError as e:
            assert "compressor" in str(e)
        else:
            raise AssertionError("missing store must raise")

    assert rrk_py.ndcg_at_k(["a", "b", "c"], {"a": 3, "b": 2}, k=10) == 1.0
    worked = rrk_py.ndcg_at_k(["x", "a", "b"], {"a": 3, "b": 2}, k=10)
    assert math.isclose(worked, 0.66532, abs_tol=1e-5)
    assert rrk_py.kendall_tau([1, 2, 3], [10, 20, 30]) == 1.0
    assert rrk_py.kendall_tau([1, 2, 3], [30, 20, 10]) == -1.0

    assert rrk_py.seq_len("compressed-listwise", 32, 50, 8) == 514
    assert rrk_py.seq_len("textual-listwise", 32, 50, 200) == 10032
    ratio = rrk_py.attention_cost(
        "textual-listwise", 32, 50, 200
    ) / rrk_py.attention_cost("compressed-listwise", 32, 50, 8)
    assert math.isclose(ratio, (10032 / 514) ** 2, rel_tol=1e-12)

    print("smoke test passed")


if __name__ == "__main__":
    main()
