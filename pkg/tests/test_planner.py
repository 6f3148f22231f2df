import itertools
import random
import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from snspd_lab.planner import (InfeasibleError, NanowireRecord, PortGrid, ScoreWeights,
                               SurveyError, greedy_assign, load_survey, routing_costs,
                               score_nanowires, select_and_assign, survey_to_csv, synthetic_survey)


def random_records(n, seed, open_fraction=0.15):
    rng = np.random.default_rng(seed)
    recs = []
    for k in range(n):
        if rng.random() < open_fraction:
            recs.append(NanowireRecord(k, int(rng.integers(4)), int(rng.integers(3)), None, None))
        else:
            recs.append(NanowireRecord(k, int(rng.integers(4)), int(rng.integers(3)),
                                       float(rng.normal(1e6, 5e4)), float(rng.normal(1e-5, 1e-6))))
    return recs


def brute_force(records, grid, k, lam):
    good = sorted((r for r in records if r.eligible), key=lambda r: r.id)
    scores = score_nanowires(records)
    spe = max(r.slot for r in records) + 1
    cost = routing_costs(good, grid, spe)
    best = -np.inf
    for sel in itertools.combinations(range(len(good)), k):
        for ports in itertools.permutations(range(grid.n_ports), k):
            val = sum(scores[good[i].id] - lam * cost[i, p] for i, p in zip(sel, ports))
            best = max(best, val)
    return best


class TestSurvey:
    def test_synthetic_176(self):
        recs = load_survey(survey_to_csv(synthetic_survey(176, 0)))
        assert len(recs) == 176
        assert [r.id for r in recs] == list(range(176))
        assert 0 < sum(not r.eligible for r in recs) < 30

    def test_bundled_survey(self):
        from pathlib import Path
        path = Path(__file__).resolve().parents[1] / "data" / "survey_176.csv"
        assert len(load_survey(path.read_bytes())) == 176

    def test_blank_resistance_is_ineligible(self):
        recs = load_survey("id,edge,slot,r_ohm,ic_ua\n3,1,0,,10.5\n")
        assert recs[0].r_room is None and not recs[0].eligible
        assert recs[0].i_c == pytest.approx(10.5e-6)

    def test_bad_ic_reports_line(self):
        with pytest.raises(SurveyError, match="line 3"):
            load_survey("id,edge,slot,r_ohm,ic_ua\n0,0,0,1e6,10\n1,0,1,1e6,abc\n")

    @pytest.mark.parametrize("text", ["", "a,b\n", "id,edge,slot,r_ohm,ic_ua\n0,9,0,1,1\n",
                                      "id,edge,slot,r_ohm,ic_ua\n0,0,0,1\n",
                                      "id,edge,slot,r_ohm,ic_ua\n0,0,0,1,1\n0,0,1,1,1\n"])
    def test_malformed(self, text):
        with pytest.raises(SurveyError):
            load_survey(text)

    def test_round_trip(self):
        recs = synthetic_survey(40, 3)
        again = load_survey(survey_to_csv(recs))
        assert [r.id for r in again] == [r.id for r in recs]
        assert [r.eligible for r in again] == [r.eligible for r in recs]


class TestScore:
    def test_mean_record_is_maximal(self):
        recs = [NanowireRecord(0, 0, 0, 1.0e6, 10e-6), NanowireRecord(1, 0, 1, 1.1e6, 11e-6),
                NanowireRecord(2, 0, 2, 0.9e6, 9e-6)]
        s = score_nanowires(recs, ScoreWeights(0.5, 0.5))
        assert s[0] == pytest.approx(1.0)
        assert max(s.values()) == s[0]

    def test_far_below_mean_ic(self):
        recs = [NanowireRecord(k, 0, k, 1e6, 10e-6) for k in range(9)]
        recs.append(NanowireRecord(9, 0, 9, 1e6, 1e-6))
        s = score_nanowires(recs, ScoreWeights(1.0, 0.0))
        assert s[9] == 0.0
        assert s[0] == 1.0

    def test_hand_computed_ranking(self):
        ic = [10, 12, 8, 11, 9.5, 10.5, 7, 13, 10, 9]
        r = [1.00, 1.05, 0.98, 1.20, 1.01, 0.90, 1.00, 1.02, 1.10, 0.99]
        recs = [NanowireRecord(k, 0, k, r[k] * 1e6, ic[k] * 1e-6) for k in range(10)]
        ic_a, r_a = np.array(ic), np.array(r)
        g = np.clip(1 - (ic_a.mean() - ic_a) / (2 * ic_a.std()), 0, 1)
        rt = np.clip(1 - np.abs(r_a - r_a.mean()) / (2 * r_a.std()), 0, 1)
        expect = 0.5 * g + 0.5 * rt
        got = score_nanowires(recs)
        assert [got[k] for k in range(10)] == pytest.approx(expect.tolist())
        rank = sorted(range(10), key=lambda k: (-round(got[k], 12), k))
        assert rank == sorted(range(10), key=lambda k: (-round(float(expect[k]), 12), k))

    def test_no_eligible(self):
        with pytest.raises(InfeasibleError):
            score_nanowires([NanowireRecord(0, 0, 0, None, None)])


class TestAssign:
    def test_lambda_zero_picks_top_scores(self):
        recs = synthetic_survey(60, 1)
        out = select_and_assign(recs, PortGrid(4, 4), 16, lam=0.0)
        scores = score_nanowires(recs)
        top = sorted(scores, key=lambda i: (-scores[i], i))[:16]
        assert sorted(out.mapping) == sorted(top)

    def test_six_records_four_ports(self):
        recs = random_records(6, 9, open_fraction=0.0)
        grid = PortGrid(2, 2)
        out = select_and_assign(recs, grid, 4, lam=0.3)
        assert out.objective == pytest.approx(brute_force(recs, grid, 4, 0.3), abs=1e-6)

    def test_brute_force_100_instances(self):
        rng = random.Random(0)
        done = 0
        while done < 100:
            n, k = rng.randint(1, 7), rng.randint(1, 4)
            grid = rng.choice([PortGrid(1, 4), PortGrid(2, 2), PortGrid(2, 3), PortGrid(1, 5)])
            recs = random_records(n, rng.randrange(2**32))
            lam = rng.choice([0.0, 0.2, 1.0, 3.0])
            if sum(r.eligible for r in recs) < k:
                with pytest.raises(InfeasibleError):
                    select_and_assign(recs, grid, k, lam)
                continue
            out = select_and_assign(recs, grid, k, lam)
            assert out.objective == pytest.approx(brute_force(recs, grid, k, lam), abs=1e-6)
            done += 1

    def test_infeasible(self):
        with pytest.raises(InfeasibleError, match="eligible"):
            select_and_assign(synthetic_survey(176, 0), PortGrid(8, 8), 200)
        with pytest.raises(InfeasibleError, match="ports"):
            select_and_assign(synthetic_survey(176, 0), PortGrid(2, 2), 5)

    def test_full_chip_fast_and_beats_greedy(self):
        recs = synthetic_survey(176, 0)
        t0 = time.perf_counter()
        out = select_and_assign(recs, PortGrid(8, 8), 64)
        assert time.perf_counter() - t0 < 1.0
        ports = [(p.port_row, p.port_col) for p in out.placements]
        assert len(set(ports)) == 64 and len(out.mapping) == 64
        assert out.objective >= greedy_assign(recs, PortGrid(8, 8), 64).objective - 1e-9

    def test_lambda_monotone_routing(self):
        recs = synthetic_survey(176, 2)
        costs = [select_and_assign(recs, PortGrid(8, 8), 64, lam).routing
                 for lam in (0.0, 0.2, 1.0, 5.0)]
        assert all(b <= a + 1e-9 for a, b in zip(costs, costs[1:]))

    @given(st.integers(0, 2**32), st.integers(0, 1000))
    @settings(max_examples=20)
    def test_permutation_invariant(self, seed, shuffle_seed):
        recs = random_records(12, seed)
        if sum(r.eligible for r in recs) < 4:
            return
        shuffled = list(recs)
        random.Random(shuffle_seed).shuffle(shuffled)
        a = select_and_assign(recs, PortGrid(2, 3), 4, 0.2)
        b = select_and_assign(shuffled, PortGrid(2, 3), 4, 0.2)
        assert a.mapping == b.mapping

    def test_ties_prefer_lower_id(self):
        recs = [NanowireRecord(k, 0, 0, 1e6, 1e-5) for k in (5, 2, 9)]
        out = select_and_assign(recs, PortGrid(1, 1), 1, lam=0.0)
        assert list(out.mapping) == [2]

    def test_exclusions(self):
        recs = random_records(5, 4, open_fraction=0.0)
        free = select_and_assign(recs, PortGrid(1, 3), 2, 0.5)
        rid, (row, col) = next(iter(free.mapping.items()))
        out = select_and_assign(recs, PortGrid(1, 3), 2, 0.5, exclusions=[(rid, row * 3 + col)])
        assert out.mapping.get(rid) != (row, col)
        everything = [(r.id, p) for r in recs for p in range(3)]
        with pytest.raises(InfeasibleError):
            select_and_assign(recs, PortGrid(1, 3), 2, 0.5, exclusions=everything)

    def test_csv_and_summary(self):
        out = select_and_assign(synthetic_survey(30, 0), PortGrid(3, 3), 9)
        lines = out.to_csv().splitlines()
        assert lines[0] == "id,edge,slot,port_row,port_col,score,routing_cost"
        assert len(lines) == 10
        s = out.summary()
        assert s["k"] == 9
        assert s["objective"] == pytest.approx(s["quality_score"] - 0.2 * s["routing_cost"])
