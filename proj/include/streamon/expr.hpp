#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "streamon/packet.hpp"

namespace streamon {

// Raised by the expression and program parsers; position is a byte offset
// into the offending source string.
class SyntaxError : public std::runtime_error {
public:
    SyntaxError(const std::string& what, size_t position)
        : std::runtime_error(what + " (at offset " + std::to_string(position) + ")"),
          position_(position) {}
    size_t position() const { return position_; }

private:
    size_t position_;
};

// Binary and unary operations. Every operation has a spelled form usable as
// a function call (SUM(a, b)), and most have an infix symbol as well.
enum class Op {
    Sum,
    Diff,
    Mult,
    Div,
    Mod,
    Eq,
    Neq,
    Lt,
    Gt,
    And,
    Or,
    Xor,
    Not,
    Sqrt,
    Log,
    Pow,
};

struct Expr;
using ExprPtr = std::unique_ptr<Expr>;

struct Expr {
    enum class Kind {
        Const,    // numeric literal (or bound named constant)
        Field,    // packet field
        Name,     // identifier: metric, feature, or named constant; see bind
        Table,    // value stored for the current flow in a named table
        Ctx,      // value snapshotted into the firing timeout's context
        Unary,    // op in {Not, Sqrt, Log}
        Binary,   // the remaining ops
    };

    // What a Name resolved to after bind_expr. Slots index the program's
    // metric/feature arrays.
    enum class RefKind { Unbound, Metric, Feature };

    Kind kind;
    double value = 0.0;          // Const
    FieldId field{};             // Field
    std::string name;            // Name / Table / Ctx
    RefKind ref = RefKind::Unbound;
    int slot = -1;
    Op op{};                     // Unary / Binary
    ExprPtr lhs, rhs;            // Unary uses lhs only

    static ExprPtr make_const(double v);
};

// Parses one expression. Throws SyntaxError on malformed input.
ExprPtr parse_expr(const std::string& src);

// Canonical fully-parenthesised rendering; parse_expr(to_string(e)) yields a
// structurally identical tree.
std::string to_string(const Expr& e);

// Name resolution scope for bind_expr.
struct BindScope {
    // Returns the slot for a metric/feature id, or -1 if unknown.
    virtual int metric_slot(const std::string& id) const = 0;
    virtual int feature_slot(const std::string& id) const = 0;
    virtual ~BindScope() = default;
};

// Resolves Name nodes in place to metric slots, feature slots, or built-in
// named constants (protocol numbers, TCP flag values, NXDOMAIN). Appends a
// message per unresolvable name to `issues`.
void bind_expr(Expr& e, const BindScope& scope, std::vector<std::string>& issues);

// The named constants bind_expr recognises (TCP, SYN, NXDOMAIN, ...).
std::optional<double> named_constant(const std::string& name);

// Runtime values an expression may draw on. Any absent value makes the
// evaluation fail, which callers turn into "condition not matched" or a
// zero-valued feature.
struct EvalContext {
    virtual std::optional<double> field(FieldId id) const = 0;
    virtual std::optional<double> metric(int slot) const = 0;
    virtual std::optional<double> feature(int slot) const = 0;
    virtual std::optional<double> table(const std::string& name) const = 0;
    virtual std::optional<double> ctx(const std::string& name) const = 0;
    virtual ~EvalContext() = default;
};

// Evaluates an expression; nullopt signals an evaluation error (reference to
// an absent value, division or modulo by zero, sqrt/log out of domain, or a
// non-finite pow result). Comparison and logic operators yield 1.0 / 0.0 and
// read any non-zero operand as true.
std::optional<double> eval_expr(const Expr& e, const EvalContext& env);

// Collects every field the expression touches; used to pre-compute payload
// statistics only when a program actually asks for them, and to warn about
// packet fields inside timeout handlers.
void collect_fields(const Expr& e, std::vector<FieldId>& out);

// Collects the names referenced at metric/feature positions.
void collect_names(const Expr& e, std::vector<std::string>& out);

}  // namespace streamon
