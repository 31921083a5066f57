import numpy as np
import pytest

from app.analysis import PartitionError
from app.config import build_run_config
from app.state import ChainDraw, ChainMeta, ChainOutput, ModelKind
from app.storage import (
    META_FILE,
    ArtifactError,
    chain_frame,
    config_from_meta,
    load_chains,
    read_partition,
    read_run_meta,
    write_chain,
    write_partition,
    write_run_meta,
)


def sample_chain(stream=0):
    meta = ChainMeta(seed=3, stream=stream, model=ModelKind.STATIC, iterations=10, burn_in=4, thin=3, wall_time=1.5)
    chain = ChainOutput(meta=meta)
    chain.draws.append(ChainDraw(
        z=np.array([0, 0, 1]), c=np.array([0, 1, 1]), K=2, L=2, alpha=0.7, nu=1.1, eta=0.0,
        beta_star=np.array([1.25, -0.5]), theta_star=np.array([0.1, -0.3]),
    ))
    chain.draws.append(ChainDraw(
        z=np.array([0, 1, 2]), c=np.array([0, 0, 0]), K=3, L=1, alpha=0.8, nu=1.2, eta=0.0,
        beta_star=np.array([0.2, 0.4, 0.6]), theta_star=np.array([-1.0]),
    ))
    return chain


def run_config(tmp_path):
    data = tmp_path / "net.txt"
    data.write_text("1 2\n2 3\n", encoding="utf-8")
    return build_run_config({
        "model": "static", "data": str(data), "iterations": "10", "burn_in": "4", "thin": "3", "seed": "3",
        "chains": "2",
    })


def test_chain_frame_columns():
    frame = chain_frame(sample_chain())
    assert list(frame.columns[:6]) == ["draw", "K", "L", "alpha", "nu", "eta"]
    assert frame["z_3"].tolist() == [2, 3]
    assert frame["beta_2"].tolist() == [1.25, 0.4]
    assert frame["theta_1"].tolist() == [0.1, -1.0]


def test_fit_artifacts_load_back(tmp_path):
    config = run_config(tmp_path)
    run_dir = tmp_path / "run"
    chains = [sample_chain(0), sample_chain(1)]
    write_run_meta(run_dir, config, chains, n=3, T=1)
    for k, chain in enumerate(chains):
        write_chain(run_dir, k, chain)

    meta, loaded = load_chains(run_dir)
    assert meta["n"] == "3"
    assert meta["streams"] == "0, 1"
    assert [c.meta.stream for c in loaded] == [0, 1]
    assert loaded[1].meta.wall_time == pytest.approx(1.5)

    first = loaded[0].draws[0]
    assert first.z.tolist() == [0, 0, 1]
    assert first.beta_star.tolist() == [1.25, -0.5]
    assert first.theta_star.tolist() == pytest.approx([0.1, -0.3])
    assert loaded[0].scalar("nu").tolist() == pytest.approx([1.1, 1.2])

    again = config_from_meta(meta)
    assert again.model == config.model
    assert again.chain == config.chain
    assert again.data == [p.resolve() for p in config.data]


def test_missing_run_meta(tmp_path):
    with pytest.raises(ArtifactError):
        read_run_meta(tmp_path)


def test_run_without_chains(tmp_path):
    (tmp_path / META_FILE).write_text("model = static\n", encoding="utf-8")
    with pytest.raises(ArtifactError, match="No chain files"):
        load_chains(tmp_path)


def test_corrupt_chain_file(tmp_path):
    config = run_config(tmp_path)
    write_run_meta(tmp_path, config, [sample_chain()], n=3, T=1)
    (tmp_path / "chain_0.csv").write_text("draw,K\n1,2\n", encoding="utf-8")
    with pytest.raises(ArtifactError, match="lacks columns"):
        load_chains(tmp_path)


def test_partition_files(tmp_path):
    path = write_partition(tmp_path / "binder.csv", [1, 1, 2], names=["a", "b", "c"])
    assert read_partition(path).tolist() == [1, 1, 2]
    with pytest.raises(PartitionError):
        read_partition(tmp_path / "missing.csv")
    bad = tmp_path / "bad.csv"
    bad.write_text("node,group\n1,1\n", encoding="utf-8")
    with pytest.raises(PartitionError):
        read_partition(bad)
