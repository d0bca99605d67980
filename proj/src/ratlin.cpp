#include "optkit/ratlin.hpp"

#include <algorithm>

namespace optkit {

std::string to_string(const Rat& r) { return r.get_str(); }

Rat parse_rat(const std::string& s) {
    Rat r;
    if (s.empty() || r.set_str(s, 10) != 0 || r.get_den() == 0)
        throw std::invalid_argument("bad rational: '" + s + "'");
    r.canonicalize();
    return r;
}

RatMat RatMat::identity(std::size_t n) {
    RatMat m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1;
    return m;
}

RatVec RatMat::row(std::size_t i) const { return RatVec(a_.begin() + i * c_, a_.begin() + (i + 1) * c_); }

RatVec RatMat::col(std::size_t j) const {
    RatVec v(r_);
    for (std::size_t i = 0; i < r_; ++i) v[i] = (*this)(i, j);
    return v;
}

RatMat RatMat::transpose() const {
    RatMat t(c_, r_);
    for (std::size_t i = 0; i < r_; ++i)
        for (std::size_t j = 0; j < c_; ++j) t(j, i) = (*this)(i, j);
    return t;
}

bool RatMat::is_zero() const {
    return std::all_of(a_.begin(), a_.end(), [](const Rat& x) { return sgn(x) == 0; });
}

RatMat operator*(const RatMat& a, const RatMat& b) {
    if (a.cols() != b.rows()) throw DimensionError("matrix product: inner dimensions differ");
    RatMat c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const Rat& x = a(i, k);
            if (sgn(x) == 0) continue;
            for (std::size_t j = 0; j < b.cols(); ++j)
                if (sgn(b(k, j)) != 0) c(i, j) += x * b(k, j);
        }
    return c;
}

RatMat operator+(const RatMat& a, const RatMat& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw DimensionError("matrix sum: shapes differ");
    RatMat c(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) c(i, j) = a(i, j) + b(i, j);
    return c;
}

RatMat operator-(const RatMat& a, const RatMat& b) { return a + Rat(-1) * b; }

RatMat operator*(const Rat& s, const RatMat& a) {
    RatMat c(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) c(i, j) = s * a(i, j);
    return c;
}

RatVec operator*(const RatMat& a, const RatVec& x) {
    if (a.cols() != x.size()) throw DimensionError("matrix-vector product: dimension mismatch");
    RatVec y(a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j)
            if (sgn(a(i, j)) != 0) y[i] += a(i, j) * x[j];
    return y;
}

Rat dot(const RatVec& a, const RatVec& b) {
    if (a.size() != b.size()) throw DimensionError("dot: dimension mismatch");
    Rat s;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

std::size_t rank(const RatMat& m) {
    const std::size_t R = m.rows(), C = m.cols();
    std::vector<std::vector<mpz_class>> a(R, std::vector<mpz_class>(C));
    for (std::size_t i = 0; i < R; ++i) {
        mpz_class l = 1;
        for (std::size_t j = 0; j < C; ++j) mpz_lcm(l.get_mpz_t(), l.get_mpz_t(), m(i, j).get_den_mpz_t());
        for (std::size_t j = 0; j < C; ++j) a[i][j] = m(i, j).get_num() * (l / m(i, j).get_den());
    }
    std::size_t r = 0;
    mpz_class prev = 1;
    for (std::size_t c = 0; c < C && r < R; ++c) {
        std::size_t p = r;
        while (p < R && a[p][c] == 0) ++p;
        if (p == R) continue;
        std::swap(a[p], a[r]);
        for (std::size_t i = r + 1; i < R; ++i) {
            for (std::size_t j = c + 1; j < C; ++j) {
                a[i][j] = a[r][c] * a[i][j] - a[i][c] * a[r][j];
                mpz_divexact(a[i][j].get_mpz_t(), a[i][j].get_mpz_t(), prev.get_mpz_t());
            }
            a[i][c] = 0;
        }
        prev = a[r][c];
        ++r;
    }
    return r;
}

std::optional<LinearSolution> solve_linear(const RatMat& m, const RatVec& b) {
    if (m.rows() != b.size()) throw DimensionError("solve_linear: rhs length differs from row count");
    const std::size_t R = m.rows(), C = m.cols();
    RatMat a(R, C + 1);
    for (std::size_t i = 0; i < R; ++i) {
        for (std::size_t j = 0; j < C; ++j) a(i, j) = m(i, j);
        a(i, C) = b[i];
    }
    std::vector<std::size_t> pivots;
    std::size_t r = 0;
    for (std::size_t c = 0; c < C && r < R; ++c) {
        std::size_t p = r;
        while (p < R && sgn(a(p, c)) == 0) ++p;
        if (p == R) continue;
        if (p != r)
            for (std::size_t j = 0; j <= C; ++j) std::swap(a(p, j), a(r, j));
        Rat inv = 1 / a(r, c);
        for (std::size_t j = c; j <= C; ++j) a(r, j) *= inv;
        for (std::size_t i = 0; i < R; ++i) {
            if (i == r || sgn(a(i, c)) == 0) continue;
            Rat f = a(i, c);
            for (std::size_t j = c; j <= C; ++j)
                if (sgn(a(r, j)) != 0) a(i, j) -= f * a(r, j);
        }
        pivots.push_back(c);
        ++r;
    }
    for (std::size_t i = r; i < R; ++i)
        if (sgn(a(i, C)) != 0) return std::nullopt;
    LinearSolution s;
    s.particular.assign(C, Rat(0));
    for (std::size_t k = 0; k < pivots.size(); ++k) s.particular[pivots[k]] = a(k, C);
    std::vector<bool> is_pivot(C, false);
    for (auto c : pivots) is_pivot[c] = true;
    for (std::size_t f = 0; f < C; ++f) {
        if (is_pivot[f]) continue;
        RatVec v(C);
        v[f] = 1;
        for (std::size_t k = 0; k < pivots.size(); ++k) v[pivots[k]] = -a(k, f);
        s.null_basis.push_back(std::move(v));
    }
    return s;
}

namespace {

void check_shape(const LPProblem& p) {
    const bool has_eq = p.eq_a.rows() > 0;
    const bool has_in = p.in_a.rows() > 0;
    if (has_eq && p.eq_a.cols() != p.nvars) throw DimensionError("lp: equality matrix width differs from nvars");
    if (has_in && p.in_a.cols() != p.nvars) throw DimensionError("lp: inequality matrix width differs from nvars");
    if (p.eq_a.rows() != p.eq_b.size()) throw DimensionError("lp: equality rhs length");
    if (p.in_a.rows() != p.in_b.size() || p.in_sense.size() != p.in_b.size())
        throw DimensionError("lp: inequality rhs/sense length");
    if (p.maximize && p.maximize->size() != p.nvars) throw DimensionError("lp: objective length");
}

// Dense tableau, Bland's rule throughout.
struct Tableau {
    std::size_t m, n;  // rows, structural+slack+artificial columns
    std::vector<RatVec> t;  // m rows of n+1 entries (last = rhs)
    std::vector<std::size_t> basis;

    void pivot(std::size_t r, std::size_t c) {
        Rat inv = 1 / t[r][c];
        for (auto& x : t[r]) x *= inv;
        for (std::size_t i = 0; i < m; ++i) {
            if (i == r || sgn(t[i][c]) == 0) continue;
            Rat f = t[i][c];
            for (std::size_t j = 0; j <= n; ++j)
                if (sgn(t[r][j]) != 0) t[i][j] -= f * t[r][j];
        }
        basis[r] = c;
    }

    RatVec reduced(const RatVec& cost) const {
        RatVec rc(n);
        for (std::size_t j = 0; j < n; ++j) {
            rc[j] = cost[j];
            for (std::size_t i = 0; i < m; ++i)
                if (sgn(cost[basis[i]]) != 0 && sgn(t[i][j]) != 0) rc[j] -= cost[basis[i]] * t[i][j];
        }
        return rc;
    }

    // Minimises cost over columns < allowed. Returns false if unbounded.
    bool run(const RatVec& cost, std::size_t allowed) {
        for (;;) {
            RatVec rc = reduced(cost);
            std::size_t enter = n;
            for (std::size_t j = 0; j < allowed; ++j)
                if (sgn(rc[j]) < 0) { enter = j; break; }
            if (enter == n) return true;
            std::size_t leave = m;
            Rat best;
            for (std::size_t i = 0; i < m; ++i) {
                if (sgn(t[i][enter]) <= 0) continue;
                Rat ratio = t[i][n] / t[i][enter];
                if (leave == m || ratio < best || (ratio == best && basis[i] < basis[leave])) {
                    leave = i;
                    best = ratio;
                }
            }
            if (leave == m) return false;
            pivot(leave, enter);
        }
    }
};

}  // namespace

LPOutcome lp_solve(const LPProblem& p) {
    check_shape(p);
    const std::size_t nv = p.nvars;
    const std::size_t me = p.eq_a.rows(), mi = p.in_a.rows(), m = me + mi;
    const std::size_t nx = p.nonneg ? nv : 2 * nv;  // x+ (and x- when free)
    const std::size_t nstruct = nx + mi;            // then slacks
    Tableau tb;
    tb.m = m;
    tb.n = nstruct + m;
    tb.t.assign(m, RatVec(tb.n + 1));
    tb.basis.resize(m);
    std::vector<int> flip(m, 1);
    for (std::size_t i = 0; i < m; ++i) {
        const bool eq = i < me;
        const std::size_t k = eq ? i : i - me;
        const int dir = (!eq && p.in_sense[k] == Sense::GE) ? -1 : 1;
        Rat rhs = eq ? p.eq_b[k] : Rat(dir) * p.in_b[k];
        flip[i] = sgn(rhs) < 0 ? -1 : 1;
        const Rat f = flip[i] * dir;
        for (std::size_t j = 0; j < nv; ++j) {
            const Rat& a = eq ? p.eq_a(k, j) : p.in_a(k, j);
            if (sgn(a) == 0) continue;
            tb.t[i][j] = f * a;
            if (!p.nonneg) tb.t[i][nv + j] = -f * a;
        }
        if (!eq) tb.t[i][nx + k] = flip[i];
        tb.t[i][nstruct + i] = 1;
        tb.t[i][tb.n] = flip[i] * rhs;
        tb.basis[i] = nstruct + i;
    }
    RatVec c1(tb.n);
    for (std::size_t i = 0; i < m; ++i) c1[nstruct + i] = 1;
    tb.run(c1, tb.n);

    LPOutcome out;
    Rat w;
    for (std::size_t i = 0; i < m; ++i)
        if (tb.basis[i] >= nstruct) w += tb.t[i][tb.n];
    if (sgn(w) > 0) {
        // Phase-1 duals y_i = 1 - reduced cost of artificial i.
        RatVec rc = tb.reduced(c1);
        out.status = LPStatus::Infeasible;
        out.farkas_eq.assign(me, Rat(0));
        out.farkas_in.assign(mi, Rat(0));
        for (std::size_t i = 0; i < m; ++i) {
            Rat y = 1 - rc[nstruct + i];
            Rat lam = -(flip[i] * y);
            if (i < me) out.farkas_eq[i] = lam;
            else out.farkas_in[i - me] = lam;
        }
        return out;
    }
    // Drive zero-level artificials out of the basis where possible.
    for (std::size_t i = 0; i < m; ++i) {
        if (tb.basis[i] < nstruct) continue;
        for (std::size_t j = 0; j < nstruct; ++j)
            if (sgn(tb.t[i][j]) != 0) {
                tb.pivot(i, j);
                break;
            }
    }
    auto extract = [&] {
        RatVec z(tb.n);
        for (std::size_t i = 0; i < m; ++i) z[tb.basis[i]] = tb.t[i][tb.n];
        RatVec x(nv);
        for (std::size_t j = 0; j < nv; ++j) x[j] = p.nonneg ? z[j] : z[j] - z[nv + j];
        return x;
    };
    if (p.maximize) {
        RatVec c2(tb.n);
        for (std::size_t j = 0; j < nv; ++j) {
            c2[j] = -(*p.maximize)[j];
            if (!p.nonneg) c2[nv + j] = (*p.maximize)[j];
        }
        if (!tb.run(c2, nstruct)) {
            out.status = LPStatus::Unbounded;
            out.witness = extract();
            return out;
        }
    }
    out.status = LPStatus::Feasible;
    out.witness = extract();
    if (p.maximize) out.objective = dot(*p.maximize, out.witness);
    return out;
}

bool check_witness(const LPProblem& p, const RatVec& x) {
    check_shape(p);
    if (x.size() != p.nvars) return false;
    if (p.nonneg)
        for (const auto& v : x)
            if (sgn(v) < 0) return false;
    for (std::size_t i = 0; i < p.eq_a.rows(); ++i)
        if (dot(p.eq_a.row(i), x) != p.eq_b[i]) return false;
    for (std::size_t i = 0; i < p.in_a.rows(); ++i) {
        Rat v = dot(p.in_a.row(i), x);
        if (p.in_sense[i] == Sense::LE ? v > p.in_b[i] : v < p.in_b[i]) return false;
    }
    return true;
}

bool check_farkas(const LPProblem& p, const RatVec& y_eq, const RatVec& y_in) {
    check_shape(p);
    if (y_eq.size() != p.eq_a.rows() || y_in.size() != p.in_a.rows()) return false;
    RatVec agg(p.nvars);
    Rat rhs;
    for (std::size_t i = 0; i < p.eq_a.rows(); ++i) {
        for (std::size_t j = 0; j < p.nvars; ++j) agg[j] += y_eq[i] * p.eq_a(i, j);
        rhs += y_eq[i] * p.eq_b[i];
    }
    for (std::size_t i = 0; i < p.in_a.rows(); ++i) {
        if (sgn(y_in[i]) < 0) return false;
        const int dir = p.in_sense[i] == Sense::GE ? -1 : 1;
        for (std::size_t j = 0; j < p.nvars; ++j) agg[j] += y_in[i] * dir * p.in_a(i, j);
        rhs += y_in[i] * dir * p.in_b[i];
    }
    for (const auto& a : agg)
        if (p.nonneg ? sgn(a) < 0 : sgn(a) != 0) return false;
    return sgn(rhs) < 0;
}

}  // namespace optkit
