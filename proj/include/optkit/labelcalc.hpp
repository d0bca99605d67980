#pragma once

#include "optkit/ratlin.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace optkit {

// Binary composition tree; a leaf carries an elementary dimension (0 = unspecified).
struct CompTree {
    int dim = 0;
    std::vector<CompTree> kids;  // empty or exactly two

    bool leaf() const { return kids.empty(); }
    std::size_t leaf_count() const;
    std::vector<int> dims() const;
    bool left_associated() const;
    friend bool operator==(const CompTree&, const CompTree&) = default;
};

CompTree leaf_tree(int dim);
CompTree join(CompTree a, CompTree b);
CompTree left_assoc(const std::vector<int>& dims);
std::vector<CompTree> all_bracketings(const std::vector<int>& dims);

// Pure label over a tree. Values are 0-based internally, printed 1-based.
struct PureLabel {
    int dim = 0;
    int val = 0;
    int sign = 1;  // internal nodes only
    std::vector<PureLabel> kids;

    bool leaf() const { return kids.empty(); }
    CompTree shape() const;
    std::vector<int> values() const;
    std::vector<int> signs() const;  // post-order over internal nodes
    friend bool operator==(const PureLabel&, const PureLabel&) = default;
};

PureLabel leaf_label(int val, int dim = 0);
PureLabel join(PureLabel a, PureLabel b, int sign);
bool operator<(const PureLabel& a, const PureLabel& b);

std::string to_text(const PureLabel& l);
PureLabel parse_label(const std::string& text);
// Attaches leaf dimensions (in leaf order) to a parsed label.
PureLabel with_dims(PureLabel l, const std::vector<int>& dims);

// Leaf-sign form: eps[k] is the sign of leaf k, defined up to a global flip.
// A node (X,Y,s) satisfies s = eps(first leaf of Y) * eps(first leaf of X).
struct SignedLeaves {
    std::vector<int> dims, vals, eps;
};
SignedLeaves to_signed_leaves(const PureLabel& l);  // normalised to eps[0] = +1
PureLabel from_signed_leaves(const CompTree& shape, const SignedLeaves& s);

enum class Direction { ToRight, ToLeft };
// Node positions are paths from the root: a string over {'L','R'}.
PureLabel associate(const PureLabel& l, const std::string& node, Direction d);
PureLabel apply_swap(const PureLabel& l, const std::string& node);
// Left-associated form reached by associator moves alone.
PureLabel canonicalize(const PureLabel& l);
// Label over `shape` denoting the same state as `l`, found through the associator.
PureLabel rebracket(const PureLabel& l, const CompTree& shape);

// Linear combination of labels over one shape, sorted, merged, zero-free.
class FormalCombo {
public:
    FormalCombo() = default;
    explicit FormalCombo(PureLabel l, Rat c = 1);

    void add(const PureLabel& l, const Rat& c);
    FormalCombo& operator+=(const FormalCombo& o);
    const std::vector<std::pair<Rat, PureLabel>>& terms() const { return terms_; }
    bool empty() const { return terms_.empty(); }
    Rat total() const;
    friend bool operator==(const FormalCombo&, const FormalCombo&) = default;

private:
    std::vector<std::pair<Rat, PureLabel>> terms_;
};

FormalCombo operator*(const Rat& c, const FormalCombo& f);
std::string to_text(const FormalCombo& f);
FormalCombo parse_combo(const std::string& text);
FormalCombo canonicalize(const FormalCombo& f);
FormalCombo apply_swap(const FormalCombo& f, const std::string& node);
FormalCombo expand_product(const FormalCombo& a, const FormalCombo& b);

// Deletion maps per leaf position on left-associated labels with n leaves.
// m[p](o, q): coefficient of output sign pattern o for input pattern q, when
// the leaf at p matches the effect index. Patterns: bit k set = node k is '-'.
struct SignRule {
    std::size_t leaves = 0;
    std::vector<RatMat> m;
    std::size_t equations = 0;
    std::size_t null_dim = 0;
    bool nonnegative = false;
    bool matches_leaf_sign_form = false;
};

struct SignRuleError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Solves the deletion constraint system for the leaf count of `shape` (cached).
const SignRule& solve_sign_rule(const CompTree& shape, std::size_t leaf_bound = 4);
bool sign_rule_solved(std::size_t leaves);

// Swap of leaves q, q+1 on left-associated sign patterns, derived from the
// displayed swap rule and the associator only.
RatMat swap_pattern_action(std::size_t leaves, std::size_t q);

// Dual-basis effect with index `matched` on leaf `leaf`, tensored with identity.
FormalCombo delete_leaf(const FormalCombo& f, std::size_t leaf, int matched);

}  // namespace optkit
