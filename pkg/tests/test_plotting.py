from seqwm.plotting import null_histogram, sweep_figures, tpr_vs_rho, z_vs_gamma


def rows():
    out = []
    for method in ("seqwm", "round_indexed"):
        for g in (1.0, 2.0):
            for r in (0.0, 0.1):
                out.append({"method": method, "gamma": g, "rho": r, "m": 8, "tpr_0.01": 0.5,
                            "tpr_0.05": 0.7, "mean_z": 2.0 + g - 5 * r})
    return out


def test_figures_written(tmp_path):
    made = sweep_figures(rows(), tmp_path / "grid.csv")
    assert [p.name for p in made] == ["grid_tpr_vs_rho.png", "grid_z_vs_gamma.png"]
    assert all(p.read_bytes()[:4] == b"\x89PNG" for p in made)


def test_degenerate_axes_skipped(tmp_path):
    single = [r for r in rows() if r["rho"] == 0.0 and r["gamma"] == 1.0]
    assert tpr_vs_rho(single, tmp_path / "a.png") is None
    assert z_vs_gamma(single, tmp_path / "b.png") is None
    assert sweep_figures(single, tmp_path / "c.csv") == []


def test_null_histogram(tmp_path):
    path = null_histogram([10, 12, 11, 9, 13], 20, 1 / 6, tmp_path / "h.png")
    assert path.stat().st_size > 1000
