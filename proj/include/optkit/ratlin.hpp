#pragma once

#include <gmpxx.h>

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace optkit {

// GMP rationals stay canonical after every arithmetic operation.
using Rat = mpq_class;
using RatVec = std::vector<Rat>;

std::string to_string(const Rat& r);
Rat parse_rat(const std::string& s);

class RatMat {
public:
    RatMat() = default;
    RatMat(std::size_t rows, std::size_t cols) : r_(rows), c_(cols), a_(rows * cols) {}

    static RatMat identity(std::size_t n);

    std::size_t rows() const { return r_; }
    std::size_t cols() const { return c_; }

    Rat& operator()(std::size_t i, std::size_t j) { return a_[i * c_ + j]; }
    const Rat& operator()(std::size_t i, std::size_t j) const { return a_[i * c_ + j]; }

    RatVec row(std::size_t i) const;
    RatVec col(std::size_t j) const;
    RatMat transpose() const;
    bool is_zero() const;

    friend bool operator==(const RatMat& a, const RatMat& b) {
        return a.r_ == b.r_ && a.c_ == b.c_ && a.a_ == b.a_;
    }

    const std::vector<Rat>& data() const { return a_; }

private:
    std::size_t r_ = 0, c_ = 0;
    std::vector<Rat> a_;
};

RatMat operator*(const RatMat& a, const RatMat& b);
RatMat operator+(const RatMat& a, const RatMat& b);
RatMat operator-(const RatMat& a, const RatMat& b);
RatMat operator*(const Rat& s, const RatMat& a);
RatVec operator*(const RatMat& a, const RatVec& x);
Rat dot(const RatVec& a, const RatVec& b);

struct DimensionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Exact rank by Bareiss elimination over integers (rows scaled by their lcm).
std::size_t rank(const RatMat& m);

struct LinearSolution {
    RatVec particular;
    std::vector<RatVec> null_basis;
};

// Particular solution plus a basis of the kernel, or nullopt if inconsistent.
std::optional<LinearSolution> solve_linear(const RatMat& m, const RatVec& b);

enum class Sense { LE, GE };
enum class LPStatus { Feasible, Infeasible, Unbounded };

struct LPProblem {
    std::size_t nvars = 0;
    RatMat eq_a;
    RatVec eq_b;
    RatMat in_a;
    RatVec in_b;
    std::vector<Sense> in_sense;
    std::optional<RatVec> maximize;
    bool nonneg = false;  // variables >= 0; otherwise free
};

// Farkas multipliers refer to the constraints normalised as a.x <= b
// (GE rows are negated first); equality multipliers are free. With free
// variables the combined row vanishes, with nonnegative ones it is >= 0.
struct LPOutcome {
    LPStatus status = LPStatus::Infeasible;
    RatVec witness;
    Rat objective;
    RatVec farkas_eq;
    RatVec farkas_in;
};

LPOutcome lp_solve(const LPProblem& p);

bool check_witness(const LPProblem& p, const RatVec& x);
bool check_farkas(const LPProblem& p, const RatVec& y_eq, const RatVec& y_in);

}  // namespace optkit
