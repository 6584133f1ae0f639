#pragma once

// Conic program intermediate representation.
//
//   minimize    c^T x + c0
//   subject to  equality rows      a^T x + b  = 0
//               nonnegative rows   a^T x + b >= 0
//               second-order cones ||(row_1, ..., row_k)|| <= row_0
//               rotated cones      ||u||^2 <= 2 v w,  v, w >= 0
//
// Variables are named real blocks. Rows are sparse affine expressions.

#include "mcbf/core.hpp"

#include <iomanip>
#include <map>
#include <sstream>
#include <utility>

namespace mcbf::conic {

struct Term {
    Index var;
    double coef;
};

/// Sparse affine expression a^T x + constant.
struct AffineRow {
    std::vector<Term> terms;
    double constant = 0.0;

    AffineRow() = default;
    explicit AffineRow(double c) : constant(c) {}
    AffineRow(Index var, double coef) : terms{{var, coef}} {}

    AffineRow& add(Index var, double coef) {
        if (coef != 0.0) terms.push_back({var, coef});
        return *this;
    }
    AffineRow& add(const AffineRow& other, double scale = 1.0) {
        for (const auto& t : other.terms) add(t.var, scale * t.coef);
        constant += scale * other.constant;
        return *this;
    }
    AffineRow scaled(double s) const {
        AffineRow r;
        r.add(*this, s);
        return r;
    }
    double evaluate(const VectorXd& x) const {
        double v = constant;
        for (const auto& t : terms) v += t.coef * x[t.var];
        return v;
    }
};

struct VarBlock {
    std::string name;
    Index offset;
    Index size;

    Index operator[](Index k) const { return offset + k; }
};

enum class ConstraintKind { equality, nonnegative, soc, rotated_soc };

struct Constraint {
    ConstraintKind kind;
    // equality/nonnegative: one row. soc: rows[0] is the cone head.
    // rotated_soc: rows[0] = v, rows[1] = w, rest = u.
    std::vector<AffineRow> rows;
    std::string label;
};

using ConstraintId = std::size_t;

class ConicProgram {
public:
    VarBlock add_variable(std::string name, Index size = 1) {
        if (size < 1) throw InvalidInput("variable block '" + name + "' must have positive size");
        if (block_index_.count(name)) throw InvalidInput("duplicate variable block '" + name + "'");
        VarBlock b{std::move(name), n_vars_, size};
        n_vars_ += size;
        block_index_[b.name] = blocks_.size();
        blocks_.push_back(b);
        return b;
    }

    const VarBlock& block(const std::string& name) const {
        auto it = block_index_.find(name);
        if (it == block_index_.end()) throw InvalidInput("unknown variable block '" + name + "'");
        return blocks_[it->second];
    }
    bool has_block(const std::string& name) const { return block_index_.count(name) != 0; }
    const std::vector<VarBlock>& blocks() const { return blocks_; }
    Index num_variables() const { return n_vars_; }

    void set_objective(AffineRow objective) { objective_ = std::move(objective); }
    const AffineRow& objective() const { return objective_; }

    ConstraintId add_equality(AffineRow row, std::string label = {}) {
        return push({ConstraintKind::equality, {std::move(row)}, std::move(label)});
    }
    ConstraintId add_nonnegative(AffineRow row, std::string label = {}) {
        return push({ConstraintKind::nonnegative, {std::move(row)}, std::move(label)});
    }
    /// ||tail|| <= head
    ConstraintId add_soc(AffineRow head, std::vector<AffineRow> tail, std::string label = {}) {
        std::vector<AffineRow> rows;
        rows.reserve(tail.size() + 1);
        rows.push_back(std::move(head));
        for (auto& r : tail) rows.push_back(std::move(r));
        return push({ConstraintKind::soc, std::move(rows), std::move(label)});
    }
    /// ||u||^2 <= 2 v w with v, w >= 0
    ConstraintId add_rotated_soc(AffineRow v, AffineRow w, std::vector<AffineRow> u,
                                 std::string label = {}) {
        std::vector<AffineRow> rows;
        rows.reserve(u.size() + 2);
        rows.push_back(std::move(v));
        rows.push_back(std::move(w));
        for (auto& r : u) rows.push_back(std::move(r));
        return push({ConstraintKind::rotated_soc, std::move(rows), std::move(label)});
    }

    const std::vector<Constraint>& constraints() const { return constraints_; }

    /// Checks index ranges and that every variable is referenced somewhere.
    void validate() const {
        std::vector<char> used(static_cast<std::size_t>(n_vars_), 0);
        auto mark = [&](const AffineRow& r, const std::string& where) {
            for (const auto& t : r.terms) {
                if (t.var < 0 || t.var >= n_vars_)
                    throw InvalidInput("variable index " + std::to_string(t.var) + " out of range in " + where);
                if (!std::isfinite(t.coef)) throw InvalidInput("non-finite coefficient in " + where);
                used[static_cast<std::size_t>(t.var)] = 1;
            }
            if (!std::isfinite(r.constant)) throw InvalidInput("non-finite constant in " + where);
        };
        mark(objective_, "objective");
        for (std::size_t k = 0; k < constraints_.size(); ++k) {
            const auto& c = constraints_[k];
            const std::string where = "constraint " + std::to_string(k) + (c.label.empty() ? "" : " (" + c.label + ")");
            if (c.kind == ConstraintKind::soc && c.rows.empty())
                throw InvalidInput("empty cone in " + where);
            if (c.kind == ConstraintKind::rotated_soc && c.rows.size() < 2)
                throw InvalidInput("rotated cone needs v and w rows in " + where);
            for (const auto& r : c.rows) mark(r, where);
        }
        for (const auto& b : blocks_)
            for (Index k = 0; k < b.size; ++k)
                if (!used[static_cast<std::size_t>(b.offset + k)])
                    throw InvalidInput("variable " + b.name + "[" + std::to_string(k) + "] appears in no constraint or objective");
    }

    /// Text dump: one constraint per line with dense coefficient vectors.
    std::string dump() const {
        std::ostringstream os;
        os << std::setprecision(17);
        os << "variables " << n_vars_ << "\n";
        for (const auto& b : blocks_) os << "block " << b.name << " " << b.offset << " " << b.size << "\n";
        auto dense = [&](const AffineRow& r) {
            std::vector<double> a(static_cast<std::size_t>(n_vars_), 0.0);
            for (const auto& t : r.terms) a[static_cast<std::size_t>(t.var)] += t.coef;
            std::ostringstream s;
            s << std::setprecision(17) << "[";
            for (std::size_t k = 0; k < a.size(); ++k) s << (k ? " " : "") << a[k];
            s << "] " << r.constant;
            return s.str();
        };
        os << "minimize " << dense(objective_) << "\n";
        static const char* names[] = {"eq", "nonneg", "soc", "rsoc"};
        for (const auto& c : constraints_) {
            os << names[static_cast<int>(c.kind)];
            if (!c.label.empty()) os << " " << c.label;
            for (const auto& r : c.rows) os << " | " << dense(r);
            os << "\n";
        }
        return os.str();
    }

private:
    ConstraintId push(Constraint c) {
        constraints_.push_back(std::move(c));
        return constraints_.size() - 1;
    }

    Index n_vars_ = 0;
    std::vector<VarBlock> blocks_;
    std::map<std::string, std::size_t> block_index_;
    AffineRow objective_;
    std::vector<Constraint> constraints_;
};

}  // namespace mcbf::conic
