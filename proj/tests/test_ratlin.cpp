#include "doctest.h"
#include "optkit/ratlin.hpp"

#include <algorithm>
#include <numeric>
#include <random>

using namespace optkit;

namespace {

RatMat from_rows(std::vector<std::vector<int>> rows) {
    RatMat m(rows.size(), rows.empty() ? 0 : rows[0].size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j) m(i, j) = rows[i][j];
    return m;
}

}  // namespace

TEST_CASE("rationals stay reduced and print as p/q") {
    Rat a(6, 8);
    a.canonicalize();
    CHECK(to_string(a) == "3/4");
    CHECK(to_string(a + Rat(1, 4)) == "1");
    CHECK(parse_rat("-10/4") == Rat(-5, 2));
    CHECK_THROWS(parse_rat("1/0"));
    CHECK_THROWS(parse_rat("x"));
}

TEST_CASE("unit box maximisation") {
    LPProblem p;
    p.nvars = 1;
    p.in_a = from_rows({{1}, {1}});
    p.in_b = {Rat(0), Rat(1)};
    p.in_sense = {Sense::GE, Sense::LE};
    p.maximize = RatVec{Rat(1)};
    auto r = lp_solve(p);
    REQUIRE(r.status == LPStatus::Feasible);
    CHECK(r.witness[0] == 1);
    CHECK(r.objective == 1);
    CHECK(check_witness(p, r.witness));
}

TEST_CASE("contradictory bounds yield a Farkas certificate") {
    LPProblem p;
    p.nvars = 1;
    p.in_a = from_rows({{1}, {1}});
    p.in_b = {Rat(1), Rat(0)};
    p.in_sense = {Sense::GE, Sense::LE};
    auto r = lp_solve(p);
    REQUIRE(r.status == LPStatus::Infeasible);
    CHECK(check_farkas(p, r.farkas_eq, r.farkas_in));
    CHECK(r.farkas_in[0] == r.farkas_in[1]);
    CHECK(sgn(r.farkas_in[0]) > 0);
}

TEST_CASE("unbounded objective") {
    LPProblem p;
    p.nvars = 2;
    p.in_a = from_rows({{1, 0}});
    p.in_b = {Rat(0)};
    p.in_sense = {Sense::GE};
    p.maximize = RatVec{Rat(1), Rat(0)};
    CHECK(lp_solve(p).status == LPStatus::Unbounded);
}

TEST_CASE("equality-constrained problem with degenerate rows") {
    // x + y = 1, 2x + 2y = 2, x - y = 1/3, x,y >= 0
    LPProblem p;
    p.nvars = 2;
    p.eq_a = from_rows({{1, 1}, {2, 2}, {1, -1}});
    p.eq_b = {Rat(1), Rat(2), Rat(1, 3)};
    p.in_a = RatMat::identity(2);
    p.in_b = {Rat(0), Rat(0)};
    p.in_sense = {Sense::GE, Sense::GE};
    auto r = lp_solve(p);
    REQUIRE(r.status == LPStatus::Feasible);
    CHECK(r.witness[0] == Rat(2, 3));
    CHECK(r.witness[1] == Rat(1, 3));
    p.eq_b[2] = 2;
    r = lp_solve(p);
    REQUIRE(r.status == LPStatus::Infeasible);
    CHECK(check_farkas(p, r.farkas_eq, r.farkas_in));
}

TEST_CASE("lp_solve is deterministic") {
    LPProblem p;
    p.nvars = 3;
    p.eq_a = from_rows({{1, 1, 1}});
    p.eq_b = {Rat(1)};
    p.in_a = RatMat::identity(3);
    p.in_b.assign(3, Rat(0));
    p.in_sense.assign(3, Sense::GE);
    p.maximize = RatVec{Rat(1), Rat(1), Rat(0)};
    auto a = lp_solve(p), b = lp_solve(p);
    CHECK(a.witness == b.witness);
    CHECK(a.objective == 1);
}

TEST_CASE("dimension mismatch is reported") {
    LPProblem p;
    p.nvars = 2;
    p.eq_a = from_rows({{1}});
    p.eq_b = {Rat(1)};
    CHECK_THROWS_AS(lp_solve(p), DimensionError);
}

TEST_CASE("rank") {
    CHECK(rank(RatMat::identity(3)) == 3);
    CHECK(rank(RatMat(3, 4)) == 0);
    CHECK(rank(from_rows({{1, 2, 3}, {2, 4, 6}, {1, 0, 1}})) == 2);
    RatMat m(2, 2);
    m(0, 0) = Rat(1, 3);
    m(0, 1) = Rat(1, 2);
    m(1, 0) = Rat(2, 3);
    m(1, 1) = 1;
    CHECK(rank(m) == 1);
}

TEST_CASE("rank is invariant under row and column permutations") {
    std::mt19937 rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        RatMat m(5, 6);
        for (std::size_t i = 0; i < 5; ++i)
            for (std::size_t j = 0; j < 6; ++j) m(i, j) = Rat(int(rng() % 5) - 2, 1 + rng() % 3);
        // force a dependency
        for (std::size_t j = 0; j < 6; ++j) m(4, j) = m(0, j) - m(1, j);
        std::vector<std::size_t> pr(5), pc(6);
        std::iota(pr.begin(), pr.end(), 0);
        std::iota(pc.begin(), pc.end(), 0);
        std::shuffle(pr.begin(), pr.end(), rng);
        std::shuffle(pc.begin(), pc.end(), rng);
        RatMat q(5, 6);
        for (std::size_t i = 0; i < 5; ++i)
            for (std::size_t j = 0; j < 6; ++j) q(i, j) = m(pr[i], pc[j]);
        CHECK(rank(q) == rank(m));
        CHECK(rank(m) <= 4);
    }
}

TEST_CASE("solve_linear") {
    auto s = solve_linear(RatMat::identity(3), {Rat(1), Rat(2), Rat(3)});
    REQUIRE(s);
    CHECK(s->particular == RatVec{Rat(1), Rat(2), Rat(3)});
    CHECK(s->null_basis.empty());
    CHECK_FALSE(solve_linear(from_rows({{1, 1}, {1, 1}}), {Rat(0), Rat(1)}));
    auto u = solve_linear(from_rows({{1, 1, 0}}), {Rat(2)});
    REQUIRE(u);
    CHECK(u->null_basis.size() == 2);
    for (const auto& v : u->null_basis) CHECK(v[0] + v[1] == 0);
}

TEST_CASE("nonnegative variables") {
    // x + y = 1, x - y = 3 has the solution (2, -1), which is ruled out for x, y >= 0
    LPProblem p;
    p.nvars = 2;
    p.eq_a = from_rows({{1, 1}, {1, -1}});
    p.eq_b = {Rat(1), Rat(3)};
    CHECK(lp_solve(p).status == LPStatus::Feasible);
    p.nonneg = true;
    auto r = lp_solve(p);
    REQUIRE(r.status == LPStatus::Infeasible);
    CHECK(check_farkas(p, r.farkas_eq, r.farkas_in));
    CHECK_FALSE(check_witness(p, RatVec{Rat(2), Rat(-1)}));
    // the same with a feasible right-hand side
    p.eq_b = {Rat(2), Rat(0)};
    p.maximize = RatVec{Rat(0), Rat(1)};
    auto f = lp_solve(p);
    REQUIRE(f.status == LPStatus::Feasible);
    CHECK(f.witness == RatVec{Rat(1), Rat(1)});
    CHECK(check_witness(p, f.witness));
    // random systems: whatever the verdict, its certificate checks out
    std::mt19937 rng(3);
    for (int it = 0; it < 30; ++it) {
        LPProblem q;
        q.nvars = 4;
        q.nonneg = true;
        q.eq_a = RatMat(2, 4);
        q.in_a = RatMat(2, 4);
        for (std::size_t i = 0; i < 2; ++i)
            for (std::size_t j = 0; j < 4; ++j) {
                q.eq_a(i, j) = int(rng() % 5) - 2;
                q.in_a(i, j) = int(rng() % 5) - 2;
            }
        q.eq_b = {Rat(int(rng() % 5) - 2), Rat(int(rng() % 5) - 2)};
        q.in_b = {Rat(int(rng() % 5) - 2), Rat(int(rng() % 5) - 2)};
        q.in_sense = {Sense::LE, Sense::GE};
        auto o = lp_solve(q);
        if (o.status == LPStatus::Feasible) CHECK(check_witness(q, o.witness));
        else CHECK(check_farkas(q, o.farkas_eq, o.farkas_in));
    }
}
